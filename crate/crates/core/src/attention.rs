//! Canonical self-attention, patch attention over learnable pseudo
//! timestamps, and the gated recurrent connection between patches.
//!
//! Shapes use `G` for the flattened group axis (batch × variables): every
//! group row is an independent series as far as attention is concerned.

use rand::Rng;

use crate::error::{Result, TriformerError};
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};

/// Query/key/value projections of the quadratic baseline.
#[derive(Clone, Debug)]
pub struct CanonicalProjections {
    pub query: ParamId,
    pub key: ParamId,
    pub value: ParamId,
}

impl CanonicalProjections {
    pub fn init<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, d: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (d as f64).sqrt();
        CanonicalProjections {
            query: store.add(format!("{prefix}.wq"), Tensor::uniform(&[d, d], bound, rng)),
            key: store.add(format!("{prefix}.wk"), Tensor::uniform(&[d, d], bound, rng)),
            value: store.add(format!("{prefix}.wv"), Tensor::uniform(&[d, d], bound, rng)),
        }
    }
}

/// `softmax(QKᵀ/√d)·V` with `Q = xW_Q`, `K = xW_K`, `V = xW_V`.
///
/// `x` is either `[H, d]` or a stack `[G, H, d]`; the output matches.
/// Every timestamp attends to every other one, so the score count is
/// `G·H²`.
pub fn canonical_self_attention(g: &mut Graph, x: Var, wq: Var, wk: Var, wv: Var) -> Result<Var> {
    let in_shape = g.shape(x).to_vec();
    let (groups, h, d) = match in_shape[..] {
        [h, d] => (1, h, d),
        [groups, h, d] => (groups, h, d),
        _ => {
            return Err(TriformerError::Shape(format!(
                "canonical attention expects [H, d] or [G, H, d], got {in_shape:?}"
            )))
        }
    };
    for w in [wq, wk, wv] {
        if g.shape(w) != [d, d] {
            return Err(TriformerError::Shape(format!(
                "projection must be {d}x{d}, got {:?}",
                g.shape(w)
            )));
        }
    }
    let flat = g.reshape(x, &[groups * h, d])?;
    let mut project = |w: Var| -> Result<Var> {
        let p = g.matmul(flat, w)?;
        g.reshape(p, &[groups, h, d])
    };
    let q = project(wq)?;
    let k = project(wk)?;
    let v = project(wv)?;
    let scores = g.bmm_nt(q, k)?;
    g.count_attention_scores(groups * h * h);
    let scores = g.scale(scores, 1.0 / (d as f64).sqrt())?;
    let weights = g.softmax_rows(scores)?;
    let out = g.bmm(weights, v)?;
    g.reshape(out, &in_shape)
}

/// Key and value projection weights used by a patch-attention layer.
#[derive(Clone, Copy, Debug)]
pub enum KeyValueWeights {
    /// One `[d, d]` matrix per role shared by every group row.
    Shared { key: Var, value: Var },
    /// A `[G, d, d]` stack per role, one matrix per group row.
    PerVariable { key: Var, value: Var },
}

fn project(g: &mut Graph, x: Var, w: Var, per_variable: bool) -> Result<Var> {
    let shape = g.shape(x).to_vec();
    let [groups, t, d] = shape[..] else {
        return Err(TriformerError::Shape(format!(
            "expected [G, T, d] input, got {shape:?}"
        )));
    };
    if per_variable {
        if g.shape(w) != [groups, d, d] {
            return Err(TriformerError::Shape(format!(
                "per-variable projection must be [{groups}, {d}, {d}], got {:?}",
                g.shape(w)
            )));
        }
        g.bmm(x, w)
    } else {
        if g.shape(w) != [d, d] {
            return Err(TriformerError::Shape(format!(
                "shared projection must be [{d}, {d}], got {:?}",
                g.shape(w)
            )));
        }
        let flat = g.reshape(x, &[groups * t, d])?;
        let p = g.matmul(flat, w)?;
        g.reshape(p, &shape)
    }
}

impl KeyValueWeights {
    /// Projects `[G, T, d]` embeddings into keys and values.
    pub fn project(&self, g: &mut Graph, x: Var) -> Result<(Var, Var)> {
        let (key, value, per_variable) = match *self {
            KeyValueWeights::Shared { key, value } => (key, value, false),
            KeyValueWeights::PerVariable { key, value } => (key, value, true),
        };
        Ok((project(g, x, key, per_variable)?, project(g, x, value, per_variable)?))
    }
}

/// One query per group attending over its own keys:
/// `[G,1,d]` × `[G,S,d]` × `[G,S,d]` → `[G,1,d]`.
fn attend(g: &mut Graph, query: Var, keys: Var, values: Var) -> Result<Var> {
    let d = *g.shape(query).last().unwrap();
    let scores = g.bmm_nt(query, keys)?;
    let n_scores = g.value(scores).numel();
    g.count_attention_scores(n_scores);
    let scores = g.scale(scores, 1.0 / (d as f64).sqrt())?;
    let weights = g.softmax_rows(scores)?;
    g.bmm(weights, values)
}

/// Patch attention for a single patch.
///
/// `query` is the pseudo timestamp `[N, d]`, `x` the embedded patch
/// `[N, S, d]`, and `key`/`value` hold one `[d, d]` projection per
/// variable (`[N, d, d]`). Each variable's pseudo timestamp queries only its
/// own `S` timestamps, so exactly `N·S` scores are computed.
pub fn patch_attention(g: &mut Graph, query: Var, x: Var, key: Var, value: Var) -> Result<Var> {
    let [n, d] = g.shape(query)[..] else {
        return Err(TriformerError::Shape(format!(
            "pseudo timestamp must be [N, d], got {:?}",
            g.shape(query)
        )));
    };
    match g.shape(x)[..] {
        [xn, _, xd] if xn == n && xd == d => {}
        ref s => {
            return Err(TriformerError::Shape(format!(
                "patch must be [{n}, S, {d}], got {s:?}"
            )))
        }
    }
    let (k, v) = KeyValueWeights::PerVariable { key, value }.project(g, x)?;
    let q = g.reshape(query, &[n, 1, d])?;
    let out = attend(g, q, k, v)?;
    g.reshape(out, &[n, d])
}

/// Parameters of the gated recurrent connection of one layer.
#[derive(Clone, Debug)]
pub struct GateParams {
    pub theta1: ParamId,
    pub theta2: ParamId,
    pub b1: ParamId,
    pub b2: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct GateVars {
    pub theta1: Var,
    pub theta2: Var,
    pub b1: Var,
    pub b2: Var,
}

impl GateParams {
    pub fn init<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, d: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (d as f64).sqrt();
        GateParams {
            theta1: store.add(format!("{prefix}.theta1"), Tensor::uniform(&[d, d], bound, rng)),
            theta2: store.add(format!("{prefix}.theta2"), Tensor::uniform(&[d, d], bound, rng)),
            b1: store.add(format!("{prefix}.b1"), Tensor::uniform(&[d], bound, rng)),
            b2: store.add(format!("{prefix}.b2"), Tensor::uniform(&[d], bound, rng)),
        }
    }

    pub fn vars(&self, g: &mut Graph, store: &ParamStore) -> Result<GateVars> {
        Ok(GateVars {
            theta1: g.param(store, self.theta1)?,
            theta2: g.param(store, self.theta2)?,
            b1: g.param(store, self.b1)?,
            b2: g.param(store, self.b2)?,
        })
    }
}

/// `tanh(T_prev·Θ1ᵀ + b1) ⊙ σ(T_prev·Θ2ᵀ + b2) + T_next`, row by row.
pub fn gated_recurrent_update(g: &mut Graph, prev: Var, next: Var, gate: &GateVars) -> Result<Var> {
    if g.shape(prev) != g.shape(next) || g.shape(prev).len() != 2 {
        return Err(TriformerError::Shape(format!(
            "gate needs two equal [G, d] inputs, got {:?} and {:?}",
            g.shape(prev),
            g.shape(next)
        )));
    }
    let rows = g.shape(prev)[0];
    let branch = |g: &mut Graph, theta: Var, bias: Var| -> Result<Var> {
        let lin = g.matmul_nt(prev, theta)?;
        let tiled = g.repeat(bias, rows)?;
        g.add(lin, tiled)
    };
    let candidate = branch(g, gate.theta1, gate.b1)?;
    let candidate = g.tanh(candidate)?;
    let ratio = branch(g, gate.theta2, gate.b2)?;
    let ratio = g.sigmoid(ratio)?;
    let carried = g.mul(candidate, ratio)?;
    g.add(carried, next)
}

/// One patch-attention layer over `[G, T, d]` inputs.
///
/// `pseudo` holds the learnable pseudo timestamps `[G, P, d]` with
/// `P = T / patch_size`. With a gate, patches are processed left to right
/// and each patch's output is gated into the next patch's query before that
/// patch attends; without one, every patch is independent. Returns the
/// updated pseudo timestamps `[G, P, d]`.
pub fn pa_layer_forward(
    g: &mut Graph,
    embeds: Var,
    pseudo: Var,
    weights: &KeyValueWeights,
    gate: Option<&GateVars>,
    patch_size: usize,
) -> Result<Var> {
    let [groups, t, d] = g.shape(embeds)[..] else {
        return Err(TriformerError::Shape(format!(
            "layer input must be [G, T, d], got {:?}",
            g.shape(embeds)
        )));
    };
    if patch_size == 0 || t % patch_size != 0 {
        return Err(TriformerError::Config(format!(
            "divisibility violation: layer length {t} is not a multiple of patch size {patch_size}"
        )));
    }
    let patches = t / patch_size;
    if g.shape(pseudo) != [groups, patches, d] {
        return Err(TriformerError::Shape(format!(
            "pseudo timestamps must be [{groups}, {patches}, {d}], got {:?}",
            g.shape(pseudo)
        )));
    }
    let (keys, values) = weights.project(g, embeds)?;

    let Some(gate) = gate else {
        let k = g.reshape(keys, &[groups * patches, patch_size, d])?;
        let v = g.reshape(values, &[groups * patches, patch_size, d])?;
        let q = g.reshape(pseudo, &[groups * patches, 1, d])?;
        let out = attend(g, q, k, v)?;
        return g.reshape(out, &[groups, patches, d]);
    };

    let mut outputs = Vec::with_capacity(patches);
    let mut prev: Option<Var> = None;
    for p in 0..patches {
        let mut query = g.narrow(pseudo, 1, p, 1)?;
        if let Some(prev) = prev {
            let next = g.reshape(query, &[groups, d])?;
            let gated = gated_recurrent_update(g, prev, next, gate)?;
            query = g.reshape(gated, &[groups, 1, d])?;
        }
        let k = g.narrow(keys, 1, p * patch_size, patch_size)?;
        let v = g.narrow(values, 1, p * patch_size, patch_size)?;
        let out = attend(g, query, k, v)?;
        prev = Some(g.reshape(out, &[groups, d])?);
        outputs.push(out);
    }
    g.concat(&outputs, 1)
}
