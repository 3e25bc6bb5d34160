use std::collections::BTreeMap;

use crate::error::{Result, TriformerError};
use crate::vsm::{GeneratorActivation, VsmMode};

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TriformerConfig {
    /// Lookback length H.
    pub h: usize,
    /// Forecast horizon F.
    pub f: usize,
    /// Number of variables N.
    pub n: usize,
    /// Hidden width d.
    pub d: usize,
    /// Memory width m.
    pub m: usize,
    /// Middle-matrix width a.
    pub a: usize,
    /// Patch size of each layer, bottom first.
    pub patch_sizes: Vec<usize>,
    pub vsm: VsmMode,
    pub recurrent: bool,
    pub multiscale: bool,
    pub seed: u64,
    /// Predictor hidden width; `None` means `4·d`.
    pub predictor_hidden: Option<usize>,
    /// Hidden width of each layer aggregator; 0 means a single affine map.
    pub aggregator_hidden: usize,
    pub generator_activation: GeneratorActivation,
}

impl TriformerConfig {
    /// Defaults: `d=32, m=5, a=5`, light VSM, recurrence and multi-scale on.
    pub fn new(h: usize, f: usize, n: usize, patch_sizes: Vec<usize>) -> Self {
        TriformerConfig {
            h,
            f,
            n,
            d: 32,
            m: 5,
            a: 5,
            patch_sizes,
            vsm: VsmMode::Light,
            recurrent: true,
            multiscale: true,
            seed: 0,
            predictor_hidden: None,
            aggregator_hidden: 0,
            generator_activation: GeneratorActivation::Identity,
        }
    }

    pub fn predictor_width(&self) -> usize {
        self.predictor_hidden.unwrap_or(4 * self.d)
    }

    pub fn layers(&self) -> usize {
        self.patch_sizes.len()
    }

    /// Flat `key=value` form used inside checkpoints.
    pub fn to_kv(&self) -> BTreeMap<String, String> {
        let mut kv = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            kv.insert(k.to_string(), v);
        };
        put("h", self.h.to_string());
        put("f", self.f.to_string());
        put("n", self.n.to_string());
        put("d", self.d.to_string());
        put("m", self.m.to_string());
        put("a", self.a.to_string());
        put("patch_sizes", join_sizes(&self.patch_sizes));
        put("vsm", self.vsm.to_string());
        put("recurrent", self.recurrent.to_string());
        put("multiscale", self.multiscale.to_string());
        put("seed", self.seed.to_string());
        put(
            "predictor_hidden",
            self.predictor_hidden.map_or_else(|| "auto".to_string(), |w| w.to_string()),
        );
        put("aggregator_hidden", self.aggregator_hidden.to_string());
        put("generator_activation", self.generator_activation.to_string());
        kv
    }

    pub fn from_kv(kv: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| {
            kv.get(k)
                .map(String::as_str)
                .ok_or_else(|| TriformerError::Config(format!("missing config key {k}")))
        };
        let num = |k: &str| -> Result<usize> { parse_value(k, get(k)?) };
        let flag = |k: &str| -> Result<bool> { parse_value(k, get(k)?) };
        Ok(TriformerConfig {
            h: num("h")?,
            f: num("f")?,
            n: num("n")?,
            d: num("d")?,
            m: num("m")?,
            a: num("a")?,
            patch_sizes: parse_sizes(get("patch_sizes")?)?,
            vsm: get("vsm")?.parse()?,
            recurrent: flag("recurrent")?,
            multiscale: flag("multiscale")?,
            seed: parse_value("seed", get("seed")?)?,
            predictor_hidden: match get("predictor_hidden")? {
                "auto" => None,
                _ => Some(num("predictor_hidden")?),
            },
            aggregator_hidden: num("aggregator_hidden")?,
            generator_activation: get("generator_activation")?.parse()?,
        })
    }
}

pub(crate) fn parse_value<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| TriformerError::Config(format!("invalid value {raw:?} for {key}")))
}

pub fn parse_sizes(raw: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|s| parse_value("patch_sizes", s))
        .collect()
}

pub fn join_sizes(sizes: &[usize]) -> String {
    sizes
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

/// Checks the configuration and returns the input length of every layer,
/// `T_1 = H` and `T_{l+1} = T_l / S_l`.
///
/// Every patch size must be at least 2 and divide its layer's input
/// exactly; together these keep the summed layer lengths below `2·H`.
pub fn validate_config(cfg: &TriformerConfig) -> Result<Vec<usize>> {
    for (name, value) in [
        ("h", cfg.h),
        ("f", cfg.f),
        ("n", cfg.n),
        ("d", cfg.d),
        ("m", cfg.m),
        ("a", cfg.a),
    ] {
        if value == 0 {
            return Err(TriformerError::Config(format!("{name} must be positive")));
        }
    }
    if cfg.a > cfg.d {
        return Err(TriformerError::Config(format!(
            "middle width a={} must not exceed hidden width d={}",
            cfg.a, cfg.d
        )));
    }
    if cfg.predictor_width() == 0 {
        return Err(TriformerError::Config("predictor_hidden must be positive".into()));
    }
    let sizes = layer_sizes(cfg.h, &cfg.patch_sizes)?;
    let total: usize = sizes.iter().sum();
    if total >= 2 * cfg.h {
        // unreachable when every patch size is at least 2
        return Err(TriformerError::Config(format!(
            "layer lengths sum to {total}, not below 2·H = {}",
            2 * cfg.h
        )));
    }
    Ok(sizes)
}

/// Per-layer input lengths for a lookback and patch list.
pub fn layer_sizes(h: usize, patch_sizes: &[usize]) -> Result<Vec<usize>> {
    if patch_sizes.is_empty() {
        return Err(TriformerError::Config("at least one patch size is required".into()));
    }
    if let Some(&s) = patch_sizes.iter().find(|&&s| s < 2) {
        return Err(TriformerError::Config(format!(
            "patch size {s} below the minimum of 2 required for linear complexity"
        )));
    }
    let mut sizes = Vec::with_capacity(patch_sizes.len());
    let mut t = h;
    for (layer, &s) in patch_sizes.iter().enumerate() {
        if !t.is_multiple_of(s) {
            return Err(TriformerError::Config(format!(
                "divisibility violation: layer {} has length {t}, not a multiple of patch size {s}; \
                 nearest valid patch sizes for H={h}: ({})",
                layer + 1,
                join_sizes(&suggest_patch_sizes(h, patch_sizes)),
            )));
        }
        sizes.push(t);
        t /= s;
    }
    Ok(sizes)
}

/// A patch list close to `requested` that satisfies the divisibility chain.
///
/// Each layer keeps its requested size when it divides, otherwise takes
/// the divisor (>= 2) of the current length nearest to it. Layers are
/// dropped once the length reaches 1.
pub fn suggest_patch_sizes(h: usize, requested: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut t = h;
    for &want in requested {
        if t < 2 {
            break;
        }
        let chosen = if want >= 2 && t.is_multiple_of(want) {
            want
        } else {
            (2..=t)
                .filter(|s| t.is_multiple_of(*s))
                .min_by_key(|&s| (s.abs_diff(want), s))
                .expect("t >= 2 is its own divisor")
        };
        out.push(chosen);
        t /= chosen;
    }
    out
}

/// Named ablation variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// A single patch-attention layer with shared projections.
    Pa,
    /// Single layer, no recurrent connection.
    PaNoRecurrence,
    /// Triangular stacking of all layers, shared projections.
    PaStacked,
    /// Single layer with light variable-specific projections.
    PaVsm,
    /// Stacking plus light variable-specific projections.
    Full,
}

impl Variant {
    pub fn apply(self, base: &TriformerConfig) -> TriformerConfig {
        let mut cfg = base.clone();
        let single = |cfg: &mut TriformerConfig| cfg.patch_sizes.truncate(1);
        match self {
            Variant::Pa => {
                single(&mut cfg);
                cfg.vsm = VsmMode::Off;
                cfg.recurrent = true;
            }
            Variant::PaNoRecurrence => {
                single(&mut cfg);
                cfg.vsm = VsmMode::Off;
                cfg.recurrent = false;
            }
            Variant::PaStacked => {
                cfg.vsm = VsmMode::Off;
                cfg.recurrent = true;
            }
            Variant::PaVsm => {
                single(&mut cfg);
                cfg.vsm = VsmMode::Light;
                cfg.recurrent = true;
            }
            Variant::Full => {
                cfg.vsm = VsmMode::Light;
                cfg.recurrent = true;
            }
        }
        cfg
    }
}

impl std::str::FromStr for Variant {
    type Err = TriformerError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pa" => Ok(Variant::Pa),
            "pa-rc" => Ok(Variant::PaNoRecurrence),
            "pa+ts" => Ok(Variant::PaStacked),
            "pa+vsm" => Ok(Variant::PaVsm),
            "full" | "triformer" => Ok(Variant::Full),
            other => Err(TriformerError::Config(format!("unknown variant {other:?}"))),
        }
    }
}
