use rand::Rng;

use crate::error::{Result, TriformerError};
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};

/// Sinusoidal table: `[t][2k] = sin(t/10000^{2k/d})`,
/// `[t][2k+1] = cos(t/10000^{2k/d})`.
pub fn positional_table(h: usize, d: usize) -> Tensor {
    let mut data = vec![0.0; h * d];
    for t in 0..h {
        for j in 0..d {
            let pair = (j / 2 * 2) as f64;
            let angle = t as f64 / 10000f64.powf(pair / d as f64);
            data[t * d + j] = if j % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::new(&[h, d], data).expect("positional table shape")
}

/// Shared scalar→d affine value projection plus a fixed positional table.
#[derive(Clone, Debug)]
pub struct InputEmbedding {
    pub weight: ParamId,
    pub bias: ParamId,
    positional: Tensor,
}

impl InputEmbedding {
    pub fn init<R: Rng + ?Sized>(store: &mut ParamStore, h: usize, d: usize, rng: &mut R) -> Self {
        InputEmbedding {
            // fan-in is 1
            weight: store.add("embed.weight", Tensor::uniform(&[1, d], 1.0, rng)),
            bias: store.add("embed.bias", Tensor::uniform(&[d], 1.0, rng)),
            positional: positional_table(h, d),
        }
    }

    pub fn positional(&self) -> &Tensor {
        &self.positional
    }

    /// `x` is `[G, H]` (one row per series); returns `[G, H, d]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let [groups, h] = g.shape(x)[..] else {
            return Err(TriformerError::Shape(format!(
                "embedding input must be [G, H], got {:?}",
                g.shape(x)
            )));
        };
        let [ph, d] = self.positional.shape()[..] else {
            unreachable!()
        };
        if h != ph {
            return Err(TriformerError::Shape(format!(
                "input length {h} does not match lookback {ph}"
            )));
        }
        let w = g.param(store, self.weight)?;
        let b = g.param(store, self.bias)?;
        let column = g.reshape(x, &[groups * h, 1])?;
        let values = g.affine(column, w, b)?;
        let values = g.reshape(values, &[groups, h, d])?;
        let pos = g.constant(self.positional.clone())?;
        let pos = g.repeat(pos, groups)?;
        g.add(values, pos)
    }
}
