//! Linear-complexity patch-attention forecasting.
//!
//! The crate is organized bottom-up: [`tensor`] provides the dense arrays,
//! reverse-mode tape and Adam; [`attention`] and [`vsm`] hold the attention
//! mechanisms and the variable-specific projections; [`model`] assembles the
//! triangular stack; [`data`] and [`training`] cover ingestion and the
//! training loop; [`scaling`] measures runtime against lookback length.

pub mod attention;
pub mod data;
pub mod error;
pub mod model;
pub mod scaling;
pub mod tensor;
pub mod training;
pub mod vsm;

pub use error::{Result, TriformerError};
pub use model::{validate_config, TriformerConfig, TriformerModel, Variant};
pub use tensor::{Graph, ParamId, ParamStore, Tensor, Var};
pub use vsm::{parameter_count, VsmMode};
