//! The five ablation variants: construction, forward pass, parameter
//! accounting and checkpoint persistence.

pub mod checkpoint;
mod network;
mod params;
mod spec;

pub use checkpoint::{load_checkpoint, load_checkpoint_as, peek_header, save_checkpoint, CheckpointHeader};
pub use network::{build_variant, predict_binary, Network};
pub use params::{LayerCount, ParameterReport};
pub use spec::{ArchitectureSpec, Variant};
