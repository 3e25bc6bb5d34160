use super::config::{validate_config, TriformerConfig};
use crate::error::Result;
use crate::vsm::{GeneratorActivation, VsmMode};

/// Closed-form work estimate for one forward pass over a single window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ComplexityProbe {
    /// `N·ΣT_l`: one score per real timestamp per layer.
    pub attention_score_count: u64,
    /// Floating-point operations, counted with the same per-op rules as
    /// the tape's instrumentation.
    pub total_flop_estimate: u64,
}

/// Scores of canonical self-attention over `h` timestamps for `n`
/// independent series.
pub fn canonical_score_count(n: usize, h: usize) -> u64 {
    (n * h * h) as u64
}

/// Work estimate computed from the configuration alone; nothing is
/// allocated.
pub fn complexity_probe(cfg: &TriformerConfig) -> Result<ComplexityProbe> {
    let sizes = validate_config(cfg)?;
    let g = cfg.n as u64;
    let (d, m, a) = (cfg.d as u64, cfg.m as u64, cfg.a as u64);
    let h = cfg.h as u64;

    let mut flops = 4 * g * h * d;
    let mut scores = 0u64;
    let last = sizes.len() - 1;

    for (l, (&t, &s)) in sizes.iter().zip(&cfg.patch_sizes).enumerate() {
        let (t, s) = (t as u64, s as u64);
        let p = t / s;
        scores += g * t;

        if cfg.vsm == VsmMode::Light {
            let mut per_role = 2 * g * m * a * a + g * a * a + 2 * g * d * a * a + 2 * g * d * a * d;
            if cfg.generator_activation == GeneratorActivation::Tanh {
                per_role += g * a * a;
            }
            flops += 2 * per_role;
        }
        // key and value projections
        flops += 4 * g * t * d * d;
        // scores, scaling, softmax, weighted sum
        flops += 4 * g * t * d + 4 * g * t;
        if cfg.recurrent {
            flops += (p - 1) * (4 * g * d * d + 6 * g * d);
        }
        if cfg.multiscale || l == last {
            let width = p * d;
            flops += if cfg.aggregator_hidden > 0 {
                let hid = cfg.aggregator_hidden as u64;
                2 * g * width * hid + 2 * g * hid + 2 * g * hid * d + g * d
            } else {
                2 * g * width * d + g * d
            };
        }
    }

    let pred_in = if cfg.multiscale { sizes.len() as u64 * d } else { d };
    let hp = cfg.predictor_width() as u64;
    let f = cfg.f as u64;
    flops += 2 * g * pred_in * hp + 2 * g * hp + 2 * g * hp * f + g * f;

    Ok(ComplexityProbe {
        attention_score_count: scores,
        total_flop_estimate: flops,
    })
}
