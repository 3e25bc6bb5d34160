//! Forward-pass timing of the patch stack against canonical self-attention
//! as the lookback grows.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{canonical_self_attention, CanonicalProjections};
use crate::error::{Result, TriformerError};
use crate::model::{complexity_probe, layer_sizes, TriformerConfig, TriformerModel};
use crate::tensor::{Graph, ParamStore, Tensor};

pub const BENCH_PATCH_SIZE: usize = 4;
pub const BENCH_MAX_DEPTH: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mechanism {
    Patch,
    Canonical,
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mechanism::Patch => "patch",
            Mechanism::Canonical => "canonical",
        })
    }
}

impl FromStr for Mechanism {
    type Err = TriformerError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "patch" => Ok(Mechanism::Patch),
            "canonical" => Ok(Mechanism::Canonical),
            other => Err(TriformerError::Config(format!("unknown mechanism {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub h: usize,
    pub mechanism: Mechanism,
    pub median_seconds: f64,
    pub attention_score_count: u64,
}

#[derive(Clone, Debug)]
pub struct BenchSettings {
    pub n: usize,
    pub d: usize,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for BenchSettings {
    fn default() -> Self {
        BenchSettings {
            n: 1,
            d: 32,
            repetitions: 5,
            seed: 0,
        }
    }
}

/// `⌊log₄ H⌋`, capped at [`BENCH_MAX_DEPTH`].
pub fn bench_depth(h: usize) -> usize {
    let mut depth = 0;
    let mut span = BENCH_PATCH_SIZE;
    while span <= h && depth < BENCH_MAX_DEPTH {
        depth += 1;
        span *= BENCH_PATCH_SIZE;
    }
    depth
}

/// Model configuration used to time lookback `h`: patch size 4 in every
/// layer under the depth policy. Errors when `h` does not fit the policy.
pub fn bench_config(h: usize, n: usize, d: usize) -> Result<TriformerConfig> {
    let depth = bench_depth(h);
    if depth == 0 {
        return Err(TriformerError::Config(format!(
            "lookback {h} is shorter than one patch of {BENCH_PATCH_SIZE}"
        )));
    }
    let sizes = vec![BENCH_PATCH_SIZE; depth];
    layer_sizes(h, &sizes)?;
    let mut cfg = TriformerConfig::new(h, 1, n, sizes);
    cfg.d = d;
    cfg.a = cfg.a.min(d);
    Ok(cfg)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        (xs[mid - 1] + xs[mid]) / 2.0
    }
}

/// Times `run` once untimed, then `reps` times; returns the median seconds
/// and the score count reported by the last run.
fn time_forward(reps: usize, mut run: impl FnMut() -> Result<u64>) -> Result<(f64, u64)> {
    let mut scores = run()?;
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        scores = run()?;
        samples.push(start.elapsed().as_secs_f64());
    }
    Ok((median(samples), scores))
}

/// Median forward time of both mechanisms for every lookback in `hs`.
/// Both mechanisms see identical embeddings; only forward passes are timed.
pub fn run_bench(hs: &[usize], settings: &BenchSettings) -> Result<Vec<BenchRow>> {
    if settings.repetitions == 0 {
        return Err(TriformerError::Config("repetitions must be positive".into()));
    }
    let configs: Vec<TriformerConfig> = hs
        .iter()
        .map(|&h| bench_config(h, settings.n, settings.d))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(2 * hs.len());
    for cfg in configs {
        let (h, n, d) = (cfg.h, cfg.n, cfg.d);
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        let embeds = Tensor::randn(&[n, h, d], 1.0, &mut rng);
        let expected = complexity_probe(&cfg)?.attention_score_count;
        let model = TriformerModel::new(cfg)?;

        let (secs, scores) = time_forward(settings.repetitions, || {
            let mut g = Graph::new();
            let e = g.constant(embeds.clone())?;
            model.forward_embedded(&mut g, e, 1)?;
            Ok(g.stats().attention_scores)
        })?;
        debug_assert_eq!(scores, expected);
        rows.push(BenchRow {
            h,
            mechanism: Mechanism::Patch,
            median_seconds: secs,
            attention_score_count: scores,
        });

        let mut store = ParamStore::new();
        let proj = CanonicalProjections::init(&mut store, "canonical", d, &mut rng);
        let (secs, scores) = time_forward(settings.repetitions, || {
            let mut g = Graph::new();
            let e = g.constant(embeds.clone())?;
            let wq = g.param(&store, proj.query)?;
            let wk = g.param(&store, proj.key)?;
            let wv = g.param(&store, proj.value)?;
            canonical_self_attention(&mut g, e, wq, wk, wv)?;
            Ok(g.stats().attention_scores)
        })?;
        rows.push(BenchRow {
            h,
            mechanism: Mechanism::Canonical,
            median_seconds: secs,
            attention_score_count: scores,
        });
    }
    Ok(rows)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(TriformerError::Data(
            "slope needs at least two points with positive coordinates".into(),
        ));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(TriformerError::Data("slope needs at least two distinct x values".into()));
    }
    Ok(sxy / sxx)
}

/// Log-log slope of median time against `H` for one mechanism.
pub fn mechanism_slope(rows: &[BenchRow], mechanism: Mechanism) -> Result<f64> {
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.mechanism == mechanism)
        .map(|r| (r.h as f64, r.median_seconds))
        .collect();
    loglog_slope(&points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_policy() {
        assert_eq!(bench_depth(256), 4);
        assert_eq!(bench_depth(512), 4);
        assert_eq!(bench_depth(1024), 5);
        assert_eq!(bench_depth(4096), 5);
        assert_eq!(bench_depth(3), 0);
        assert!(bench_config(100, 1, 8).is_err());
        assert!(bench_config(2, 1, 8).is_err());
        assert_eq!(bench_config(2048, 1, 8).unwrap().patch_sizes, vec![4; 5]);
    }

    #[test]
    fn slope_of_a_power_law() {
        let pts: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0].iter().map(|&x: &f64| (x, 3.0 * x.powf(1.5))).collect();
        assert!((loglog_slope(&pts).unwrap() - 1.5).abs() < 1e-12);
        assert!(loglog_slope(&pts[..1]).is_err());
    }

    #[test]
    fn rows_and_counts() {
        let settings = BenchSettings {
            n: 2,
            d: 4,
            repetitions: 1,
            seed: 0,
        };
        let rows = run_bench(&[16, 32], &settings).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].attention_score_count, 2 * (16 + 4));
        assert_eq!(rows[1].attention_score_count, 2 * 16 * 16);
        assert_eq!(rows[3].attention_score_count, 4 * rows[1].attention_score_count);
    }
}
