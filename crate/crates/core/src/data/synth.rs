//! Desk-scale synthetic series: two sinusoids per variable plus Gaussian
//! noise. Per-variable periods and phases spread out with `heterogeneity`;
//! at zero every variable shares the same pattern.

use std::f64::consts::TAU;

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::SeriesTable;

pub const NOISE_STD: f64 = 0.1;

const BASE_PERIODS: [f64; 2] = [24.0, 84.0];
const PERIOD_SPREAD: f64 = 0.35;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SineComponent {
    pub amplitude: f64,
    pub period: f64,
    pub phase: f64,
}

impl SineComponent {
    pub fn at(&self, t: usize) -> f64 {
        self.amplitude * (TAU * t as f64 / self.period + self.phase).sin()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub t: usize,
    pub seed: u64,
    pub heterogeneity: f64,
}

/// Table plus the exact components behind every variable.
pub fn synth_with_components(spec: &SynthSpec) -> (SeriesTable, Vec<[SineComponent; 2]>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let het = spec.heterogeneity;
    let components: Vec<[SineComponent; 2]> = (0..spec.n)
        .map(|_| {
            BASE_PERIODS.map(|base| {
                let u: f64 = rng.random_range(-1.0..1.0);
                let phase: f64 = rng.random_range(0.0..TAU);
                SineComponent {
                    amplitude: 1.0,
                    period: base * (het * PERIOD_SPREAD * u).exp(),
                    phase: het * phase,
                }
            })
        })
        .collect();

    let noise = Normal::new(0.0, NOISE_STD).expect("valid noise");
    let mut values = Vec::with_capacity(spec.t * spec.n);
    for t in 0..spec.t {
        for comps in &components {
            let clean: f64 = comps.iter().map(|c| c.at(t)).sum();
            values.push(clean + noise.sample(&mut rng));
        }
    }

    let start = NaiveDate::from_ymd_opt(2020, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid start date");
    let timestamps = (0..spec.t)
        .map(|t| (start + Duration::hours(t as i64)).format("%Y-%m-%d %H:%M:%S").to_string())
        .collect();
    let columns = (0..spec.n).map(|i| format!("var{i}")).collect();
    let table = SeriesTable::new(columns, Some(timestamps), values).expect("synthetic table is valid");
    (table, components)
}

pub fn synth(n: usize, t: usize, seed: u64, heterogeneity: f64) -> SeriesTable {
    synth_with_components(&SynthSpec {
        n,
        t,
        seed,
        heterogeneity,
    })
    .0
}
