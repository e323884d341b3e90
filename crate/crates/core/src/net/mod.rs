//! The masked mesh network: masking, the encoder/decoder with bottleneck
//! context injection, the masked ℓ1 objective and the training loop.

mod mask;
mod model;
mod normalize;
mod train;

use serde::{Deserialize, Serialize};

pub use mask::{apply_mask, loss_l1, loss_l1_grad, sample_mask, MaskSet};
pub use model::{ForwardTrace, Gradients, MmnModel, ModelConfig, ParamKind, Topology};
pub use normalize::{normalize_features, InputStats};
pub use train::{
    batch_loss_and_gradients, cosine_lr, evaluate, train, AdamW, EpochRecord, Example, TrainConfig, TrainHistory,
};

use crate::conv::FeatureMap;
use crate::mesh::Hemisphere;

/// Number of context features seen by the network: `[z(age), sex]`.
pub const CONTEXT_DIM: usize = 2;

/// Subject phenotype: age in years and sex coded −1/+1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextVector {
    pub age: f64,
    pub sex: f64,
}

/// One subject's raw (unnormalized) features with its phenotype.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub id: String,
    pub hemisphere: Hemisphere,
    pub features: FeatureMap,
    pub context: ContextVector,
    pub group: Option<String>,
}
