//! The full forecaster: embedding, triangular stack of patch-attention
//! layers, per-layer aggregation and the multi-scale predictor.

mod checkpoint;
mod config;
mod embed;
mod probe;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, MAGIC};
pub use config::{
    join_sizes, layer_sizes, parse_sizes, suggest_patch_sizes, validate_config, TriformerConfig,
    Variant,
};
pub use embed::{positional_table, InputEmbedding};
pub use probe::{canonical_score_count, complexity_probe, ComplexityProbe};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{pa_layer_forward, GateParams, KeyValueWeights};
use crate::error::{Result, TriformerError};
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::vsm::{
    materialize_projections, FactorizedProjection, NaiveProjectionBank, VariableMemory, VsmMode,
};

/// Key/value projection parameters of one layer.
#[derive(Clone, Debug)]
pub enum LayerProjection {
    Shared { key: ParamId, value: ParamId },
    Naive(NaiveProjectionBank),
    Light(FactorizedProjection),
}

/// `θ^l`: maps the `P_l` concatenated pseudo timestamps of a variable to
/// one `d`-vector. Optionally a two-layer network with a tanh hidden layer.
#[derive(Clone, Debug)]
pub struct LayerAggregator {
    pub weight: ParamId,
    pub bias: ParamId,
    pub hidden: Option<(ParamId, ParamId)>,
}

#[derive(Clone, Debug)]
pub struct PatchLayer {
    pub input_len: usize,
    pub patch_size: usize,
    pub pseudo: ParamId,
    pub projection: LayerProjection,
    pub gate: Option<GateParams>,
    pub aggregator: Option<LayerAggregator>,
}

impl PatchLayer {
    pub fn patches(&self) -> usize {
        self.input_len / self.patch_size
    }
}

/// Two affine maps with a tanh in between, shared across variables.
#[derive(Clone, Debug)]
pub struct Predictor {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

#[derive(Clone, Debug)]
pub struct TriformerModel {
    cfg: TriformerConfig,
    store: ParamStore,
    embedding: InputEmbedding,
    memory: Option<VariableMemory>,
    layers: Vec<PatchLayer>,
    predictor: Predictor,
}

fn linear_init(
    store: &mut ParamStore,
    name: &str,
    fan_in: usize,
    fan_out: usize,
    rng: &mut ChaCha8Rng,
) -> (ParamId, ParamId) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (
        store.add(format!("{name}.weight"), Tensor::uniform(&[fan_in, fan_out], bound, rng)),
        store.add(format!("{name}.bias"), Tensor::uniform(&[fan_out], bound, rng)),
    )
}

impl TriformerModel {
    /// Validates `cfg` and initializes every parameter from `cfg.seed`.
    pub fn new(cfg: TriformerConfig) -> Result<Self> {
        let sizes = validate_config(&cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut store = ParamStore::new();
        let (n, d) = (cfg.n, cfg.d);

        let embedding = InputEmbedding::init(&mut store, cfg.h, d, &mut rng);
        let memory = (cfg.vsm == VsmMode::Light)
            .then(|| VariableMemory::init(&mut store, n, cfg.m, &mut rng));

        let last = sizes.len() - 1;
        let mut layers = Vec::with_capacity(sizes.len());
        for (l, (&input_len, &patch_size)) in sizes.iter().zip(&cfg.patch_sizes).enumerate() {
            let prefix = format!("layer{l}");
            let patches = input_len / patch_size;
            let std = 1.0 / (d as f64).sqrt();
            let pseudo = store.add(
                format!("{prefix}.pseudo"),
                Tensor::randn(&[n, patches, d], std, &mut rng),
            );
            let projection = match cfg.vsm {
                VsmMode::Off => {
                    let bound = 1.0 / (d as f64).sqrt();
                    LayerProjection::Shared {
                        key: store.add(format!("{prefix}.wk"), Tensor::uniform(&[d, d], bound, &mut rng)),
                        value: store.add(format!("{prefix}.wv"), Tensor::uniform(&[d, d], bound, &mut rng)),
                    }
                }
                VsmMode::Naive => LayerProjection::Naive(NaiveProjectionBank::init(
                    &mut store,
                    &format!("{prefix}.naive"),
                    n,
                    d,
                    &mut rng,
                )),
                VsmMode::Light => LayerProjection::Light(FactorizedProjection::init(
                    &mut store,
                    &format!("{prefix}.vsm"),
                    d,
                    cfg.m,
                    cfg.a,
                    &mut rng,
                )),
            };
            let gate = cfg
                .recurrent
                .then(|| GateParams::init(&mut store, &format!("{prefix}.gate"), d, &mut rng));
            let aggregator = (cfg.multiscale || l == last).then(|| {
                let name = format!("{prefix}.agg");
                if cfg.aggregator_hidden > 0 {
                    let hidden =
                        linear_init(&mut store, &format!("{name}.hidden"), patches * d, cfg.aggregator_hidden, &mut rng);
                    let (weight, bias) = linear_init(&mut store, &name, cfg.aggregator_hidden, d, &mut rng);
                    LayerAggregator { weight, bias, hidden: Some(hidden) }
                } else {
                    let (weight, bias) = linear_init(&mut store, &name, patches * d, d, &mut rng);
                    LayerAggregator { weight, bias, hidden: None }
                }
            });
            layers.push(PatchLayer {
                input_len,
                patch_size,
                pseudo,
                projection,
                gate,
                aggregator,
            });
        }

        let pred_in = if cfg.multiscale { sizes.len() * d } else { d };
        let hidden = cfg.predictor_width();
        let (w1, b1) = linear_init(&mut store, "predictor.hidden", pred_in, hidden, &mut rng);
        let (w2, b2) = linear_init(&mut store, "predictor.out", hidden, cfg.f, &mut rng);

        Ok(TriformerModel {
            cfg,
            store,
            embedding,
            memory,
            layers,
            predictor: Predictor { w1, b1, w2, b2 },
        })
    }

    pub fn config(&self) -> &TriformerConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn embedding(&self) -> &InputEmbedding {
        &self.embedding
    }

    pub fn memory(&self) -> Option<&VariableMemory> {
        self.memory.as_ref()
    }

    pub fn layers(&self) -> &[PatchLayer] {
        &self.layers
    }

    pub fn predictor(&self) -> &Predictor {
        &self.predictor
    }

    /// Records the forward pass for a batch `x: [B, N, H]` and returns the
    /// `[B, N, F]` forecast node.
    pub fn forward(&self, g: &mut Graph, x: &Tensor) -> Result<Var> {
        let [batch, n, h] = x.shape()[..] else {
            return Err(TriformerError::Shape(format!(
                "input batch must be [B, N, H], got {:?}",
                x.shape()
            )));
        };
        if n != self.cfg.n || h != self.cfg.h {
            return Err(TriformerError::Shape(format!(
                "input has N={n}, H={h}; model expects N={}, H={}",
                self.cfg.n, self.cfg.h
            )));
        }
        let input = g.constant(x.clone().reshape(&[batch * n, h])?)?;
        let embeds = self.embedding.forward(g, &self.store, input)?;
        self.forward_embedded(g, embeds, batch)
    }

    /// Forward pass from `[B·N, H, d]` embeddings.
    pub fn forward_embedded(&self, g: &mut Graph, embeds: Var, batch: usize) -> Result<Var> {
        let (n, d) = (self.cfg.n, self.cfg.d);
        let groups = batch * n;
        if g.shape(embeds) != [groups, self.cfg.h, d] {
            return Err(TriformerError::Shape(format!(
                "embeddings must be [{groups}, {}, {d}], got {:?}",
                self.cfg.h,
                g.shape(embeds)
            )));
        }
        let memory = match &self.memory {
            Some(mem) => Some(g.param(&self.store, mem.memory)?),
            None => None,
        };

        let mut input = embeds;
        let mut summaries = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let patches = layer.patches();
            let pseudo = g.param(&self.store, layer.pseudo)?;
            let pseudo = g.repeat(pseudo, batch)?;
            let pseudo = g.reshape(pseudo, &[groups, patches, d])?;

            let weights = self.layer_weights(g, layer, memory, batch)?;
            let gate = match &layer.gate {
                Some(gp) => Some(gp.vars(g, &self.store)?),
                None => None,
            };
            let out = pa_layer_forward(g, input, pseudo, &weights, gate.as_ref(), layer.patch_size)?;

            if let Some(agg) = &layer.aggregator {
                summaries.push(self.aggregate(g, out, agg)?);
            }
            input = out;
        }

        let features = if summaries.len() == 1 {
            summaries[0]
        } else {
            g.concat(&summaries, 1)?
        };
        let p = &self.predictor;
        let w1 = g.param(&self.store, p.w1)?;
        let b1 = g.param(&self.store, p.b1)?;
        let w2 = g.param(&self.store, p.w2)?;
        let b2 = g.param(&self.store, p.b2)?;
        let hidden = g.affine(features, w1, b1)?;
        let hidden = g.tanh(hidden)?;
        let out = g.affine(hidden, w2, b2)?;
        g.reshape(out, &[batch, n, self.cfg.f])
    }

    fn layer_weights(
        &self,
        g: &mut Graph,
        layer: &PatchLayer,
        memory: Option<Var>,
        batch: usize,
    ) -> Result<KeyValueWeights> {
        let (n, d) = (self.cfg.n, self.cfg.d);
        let tile = |g: &mut Graph, stack: Var| -> Result<Var> {
            if batch == 1 {
                return Ok(stack);
            }
            let tiled = g.repeat(stack, batch)?;
            g.reshape(tiled, &[batch * n, d, d])
        };
        Ok(match &layer.projection {
            LayerProjection::Shared { key, value } => KeyValueWeights::Shared {
                key: g.param(&self.store, *key)?,
                value: g.param(&self.store, *value)?,
            },
            LayerProjection::Naive(bank) => {
                let key = g.param(&self.store, bank.key)?;
                let value = g.param(&self.store, bank.value)?;
                KeyValueWeights::PerVariable {
                    key: tile(g, key)?,
                    value: tile(g, value)?,
                }
            }
            LayerProjection::Light(factors) => {
                let memory = memory.expect("light mode always owns memories");
                let (kf, vf) = factors.vars(g, &self.store)?;
                let (key, value) =
                    materialize_projections(g, memory, &kf, &vf, self.cfg.generator_activation)?;
                KeyValueWeights::PerVariable {
                    key: tile(g, key)?,
                    value: tile(g, value)?,
                }
            }
        })
    }

    fn aggregate(&self, g: &mut Graph, pseudo_out: Var, agg: &LayerAggregator) -> Result<Var> {
        let [groups, patches, d] = g.shape(pseudo_out)[..] else {
            unreachable!("layer output is always rank 3")
        };
        let flat = g.reshape(pseudo_out, &[groups, patches * d])?;
        aggregate_layer(g, &self.store, flat, agg)
    }

    /// Forecast for a batch `x: [B, N, H]`; returns `[B, N, F]`.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, x)?;
        Ok(g.value(out).clone())
    }

    /// Parameter count of the whole model.
    pub fn num_parameters(&self) -> usize {
        self.store.num_scalars()
    }
}

/// `O^l = θ^l([T_1; …; T_P])` for `flat: [G, P·d]`.
pub fn aggregate_layer(g: &mut Graph, store: &ParamStore, flat: Var, agg: &LayerAggregator) -> Result<Var> {
    let w = g.param(store, agg.weight)?;
    let b = g.param(store, agg.bias)?;
    let input = match agg.hidden {
        Some((hw, hb)) => {
            let hw = g.param(store, hw)?;
            let hb = g.param(store, hb)?;
            let hidden = g.affine(flat, hw, hb)?;
            g.tanh(hidden)?
        }
        None => flat,
    };
    if g.shape(input)[1] != g.shape(w)[0] {
        return Err(TriformerError::Shape(format!(
            "aggregator expects width {}, got {}",
            g.shape(w)[0],
            g.shape(input)[1]
        )));
    }
    g.affine(input, w, b)
}
