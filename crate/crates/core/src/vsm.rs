//! Variable-specific key/value projections.
//!
//! Each variable `i` owns a small memory vector `M⁽ⁱ⁾ ∈ ℝᵐ`. A generator
//! maps the memory to a compact `a×a` middle matrix `B⁽ⁱ⁾`, and the full
//! projection is `W⁽ⁱ⁾ = L·B⁽ⁱ⁾·R` with `L ∈ ℝ^{d×a}` and `R ∈ ℝ^{a×d}`
//! shared by all variables. The naive alternative learns `N` full `d×d`
//! matrices per role.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Result, TriformerError};
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};

/// How key/value projections vary across variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VsmMode {
    /// One projection shared by every variable.
    Off,
    /// A full `d×d` matrix per variable.
    Naive,
    /// Memory-generated `L·B·R` factorization.
    Light,
}

impl fmt::Display for VsmMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VsmMode::Off => "off",
            VsmMode::Naive => "naive",
            VsmMode::Light => "light",
        })
    }
}

impl FromStr for VsmMode {
    type Err = TriformerError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" | "agnostic" => Ok(VsmMode::Off),
            "naive" => Ok(VsmMode::Naive),
            "light" => Ok(VsmMode::Light),
            other => Err(TriformerError::Config(format!(
                "unknown vsm mode {other:?} (expected off, naive or light)"
            ))),
        }
    }
}

/// Nonlinearity applied to the generator output. The default is none.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GeneratorActivation {
    #[default]
    Identity,
    Tanh,
}

impl fmt::Display for GeneratorActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GeneratorActivation::Identity => "identity",
            GeneratorActivation::Tanh => "tanh",
        })
    }
}

impl FromStr for GeneratorActivation {
    type Err = TriformerError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "none" => Ok(GeneratorActivation::Identity),
            "tanh" => Ok(GeneratorActivation::Tanh),
            other => Err(TriformerError::Config(format!(
                "unknown generator activation {other:?}"
            ))),
        }
    }
}

/// Per-variable memories `M ∈ ℝ^{N×m}`, shared by all layers.
#[derive(Clone, Debug)]
pub struct VariableMemory {
    pub memory: ParamId,
}

impl VariableMemory {
    pub const PARAM_NAME: &'static str = "vsm.memory";

    pub fn init<R: Rng + ?Sized>(store: &mut ParamStore, n: usize, m: usize, rng: &mut R) -> Self {
        VariableMemory {
            memory: store.add(Self::PARAM_NAME, Tensor::randn(&[n, m], 1.0, rng)),
        }
    }
}

/// Affine map from an `m`-vector to a flattened `a×a` matrix.
#[derive(Clone, Debug)]
pub struct MiddleGenerator {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl MiddleGenerator {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        m: usize,
        a: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (m as f64).sqrt();
        MiddleGenerator {
            weight: store.add(format!("{prefix}.weight"), Tensor::uniform(&[m, a * a], bound, rng)),
            bias: store.add(format!("{prefix}.bias"), Tensor::uniform(&[a * a], bound, rng)),
        }
    }
}

/// `B = reshape(act(M·weight + bias), a×a)` for every memory row.
///
/// `memory` is `[R, m]`; the result is `[R, a, a]`.
pub fn generate_middle(
    g: &mut Graph,
    memory: Var,
    weight: Var,
    bias: Var,
    activation: GeneratorActivation,
) -> Result<Var> {
    let [rows, m] = g.shape(memory)[..] else {
        return Err(TriformerError::Shape(format!(
            "memory must be [R, m], got {:?}",
            g.shape(memory)
        )));
    };
    let [wm, aa] = g.shape(weight)[..] else {
        return Err(TriformerError::Shape("generator weight must be 2-D".into()));
    };
    let a = (aa as f64).sqrt().round() as usize;
    if wm != m || a * a != aa {
        return Err(TriformerError::Shape(format!(
            "generator weight {:?} does not map width {m} to a square",
            g.shape(weight)
        )));
    }
    let mut flat = g.affine(memory, weight, bias)?;
    if activation == GeneratorActivation::Tanh {
        flat = g.tanh(flat)?;
    }
    g.reshape(flat, &[rows, a, a])
}

/// Variable-agnostic left/right factors and the generators of one layer.
#[derive(Clone, Debug)]
pub struct FactorizedProjection {
    pub left_k: ParamId,
    pub right_k: ParamId,
    pub left_v: ParamId,
    pub right_v: ParamId,
    pub gen_k: MiddleGenerator,
    pub gen_v: MiddleGenerator,
}

impl FactorizedProjection {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        d: usize,
        m: usize,
        a: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (a as f64).sqrt();
        FactorizedProjection {
            left_k: store.add(format!("{prefix}.k.left"), Tensor::uniform(&[d, a], bound, rng)),
            right_k: store.add(format!("{prefix}.k.right"), Tensor::uniform(&[a, d], bound, rng)),
            left_v: store.add(format!("{prefix}.v.left"), Tensor::uniform(&[d, a], bound, rng)),
            right_v: store.add(format!("{prefix}.v.right"), Tensor::uniform(&[a, d], bound, rng)),
            gen_k: MiddleGenerator::init(store, &format!("{prefix}.k.gen"), m, a, rng),
            gen_v: MiddleGenerator::init(store, &format!("{prefix}.v.gen"), m, a, rng),
        }
    }
}

/// Tape handles for one role's factors.
#[derive(Clone, Copy, Debug)]
pub struct RoleFactors {
    pub left: Var,
    pub right: Var,
    pub gen_weight: Var,
    pub gen_bias: Var,
}

impl FactorizedProjection {
    pub fn vars(&self, g: &mut Graph, store: &ParamStore) -> Result<(RoleFactors, RoleFactors)> {
        let k = RoleFactors {
            left: g.param(store, self.left_k)?,
            right: g.param(store, self.right_k)?,
            gen_weight: g.param(store, self.gen_k.weight)?,
            gen_bias: g.param(store, self.gen_k.bias)?,
        };
        let v = RoleFactors {
            left: g.param(store, self.left_v)?,
            right: g.param(store, self.right_v)?,
            gen_weight: g.param(store, self.gen_v.weight)?,
            gen_bias: g.param(store, self.gen_v.bias)?,
        };
        Ok((k, v))
    }
}

fn materialize_role(
    g: &mut Graph,
    memory: Var,
    f: &RoleFactors,
    activation: GeneratorActivation,
) -> Result<Var> {
    let n = g.shape(memory)[0];
    let middle = generate_middle(g, memory, f.gen_weight, f.gen_bias, activation)?;
    let left = g.repeat(f.left, n)?;
    let right = g.repeat(f.right, n)?;
    let lb = g.bmm(left, middle)?;
    g.bmm(lb, right)
}

/// Builds `W_K⁽ⁱ⁾ = L_K·G_K(M⁽ⁱ⁾)·R_K` and `W_V⁽ⁱ⁾ = L_V·G_V(M⁽ⁱ⁾)·R_V`
/// for every variable. Returns two `[N, d, d]` stacks. No query projection
/// exists: the pseudo timestamps act as queries.
pub fn materialize_projections(
    g: &mut Graph,
    memory: Var,
    key: &RoleFactors,
    value: &RoleFactors,
    activation: GeneratorActivation,
) -> Result<(Var, Var)> {
    Ok((
        materialize_role(g, memory, key, activation)?,
        materialize_role(g, memory, value, activation)?,
    ))
}

/// Full per-variable key/value matrices for the naive mode.
#[derive(Clone, Debug)]
pub struct NaiveProjectionBank {
    pub key: ParamId,
    pub value: ParamId,
}

impl NaiveProjectionBank {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        n: usize,
        d: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (d as f64).sqrt();
        NaiveProjectionBank {
            key: store.add(format!("{prefix}.k"), Tensor::uniform(&[n, d, d], bound, rng)),
            value: store.add(format!("{prefix}.v"), Tensor::uniform(&[n, d, d], bound, rng)),
        }
    }
}

/// Number of key/value-projection parameters owned by each mode across
/// `layers` layers. Light mode counts the memories once and includes the
/// generator biases.
pub fn parameter_count(mode: VsmMode, n: usize, d: usize, m: usize, a: usize, layers: usize) -> u64 {
    let (n, d, m, a, layers) = (n as u64, d as u64, m as u64, a as u64, layers as u64);
    match mode {
        VsmMode::Off => layers * 2 * d * d,
        VsmMode::Naive => layers * 2 * n * d * d,
        VsmMode::Light => n * m + layers * 2 * (m * a * a + a * a) + layers * 2 * (2 * d * a),
    }
}

/// Memory matrix as CSV: header `var_0..var_{m-1}`, one row per variable,
/// 17 significant digits.
pub fn memory_csv(memory: &Tensor) -> Result<String> {
    let [n, m] = memory.shape()[..] else {
        return Err(TriformerError::Shape(format!(
            "memory must be [N, m], got {:?}",
            memory.shape()
        )));
    };
    let mut out = String::new();
    let header: Vec<String> = (0..m).map(|j| format!("var_{j}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..n {
        let row: Vec<String> = memory.data()[i * m..(i + 1) * m]
            .iter()
            .map(|v| format!("{v:.16e}"))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_memory_csv(path: &Path, memory: &Tensor) -> Result<()> {
    let text = memory_csv(memory)?;
    let mut file = std::fs::File::create(path).map_err(|e| TriformerError::io(path, e))?;
    file.write_all(text.as_bytes())
        .map_err(|e| TriformerError::io(path, e))
}
