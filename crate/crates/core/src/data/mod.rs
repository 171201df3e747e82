//! Samples, pad/crop geometry, augmentation, splitting, the synthetic
//! vessel generator, manifests and raster I/O.

mod augment;
mod geometry;
mod manifest;
pub mod raster;
mod sample;
mod split;
mod synthetic;

pub use augment::{
    augment, build_augmented_set, flip, rotate, AugmentConfig, AugmentMethod, Flip, AUGMENTS_PER_METHOD,
};
pub use geometry::{crop_back, pad_tensor, pad_to_target, PadOffsets};
pub use manifest::{load_manifest, save_manifest, DatasetManifest, ManifestEntry, Split};
pub use sample::{FundusSample, Lineage};
pub use split::split_validation;
pub use synthetic::{generate_synthetic_dataset, SyntheticConfig};

use sha2::{Digest, Sha256};

/// Seed of an independent generator stream keyed by `seed` and `parts`.
pub fn derive_seed(seed: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}
