//! Minimal f64 tensor library with reverse-mode autodiff, transformer encoder,
//! actor/critic networks and AdamW.

pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod params;
pub mod policy;
pub mod tape;
pub mod tensor;

pub use layers::{select_embedding, select_index, Encoder, EncoderConfig, LayerNorm, Linear, Mlp};
pub use optim::{AdamW, AdamWConfig};
pub use params::{clip_grad_norm, global_norm, ParamSet};
pub use policy::{
    gaussian_entropy_tape, gaussian_kl, gaussian_log_prob, gaussian_log_prob_tape, trunk_param_count, CriticNet, NetDims, NetworkConfig,
    ObsBatch, ObsRef, PolicyNet,
};
pub use tape::{CustomBackward, Grads, Tape, Unary, Var};
pub use tensor::Tensor;
