use anyhow::Context;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use saunet::data::{
    build_augmented_set, derive_seed, generate_synthetic_dataset, load_manifest, pad_to_target, split_validation,
    AugmentConfig, FundusSample, PadOffsets, Split,
};
use saunet::Scalar;

use crate::config::DataSource;

/// A test image at network resolution together with what is needed to
/// score it at its original size.
pub struct TestItem<T: Scalar> {
    pub padded: FundusSample<T>,
    pub original: FundusSample<T>,
    pub offsets: PadOffsets,
}

fn rng_for(seed: u64, part: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &["synthetic", part]))
}

fn synthetic<T: Scalar>(count: usize, size: usize, seed: u64, part: &str) -> saunet::Result<Vec<FundusSample<T>>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut set = generate_synthetic_dataset(count, (size, size), &mut rng_for(seed, part))?;
    for s in &mut set {
        s.id = format!("{part}-{}", s.id);
    }
    Ok(set)
}

fn padded<T: Scalar>(samples: Vec<FundusSample<T>>, target: (usize, usize)) -> saunet::Result<Vec<FundusSample<T>>> {
    samples.iter().map(|s| pad_to_target(s, target).map(|(p, _)| p)).collect()
}

/// Training and validation sets.
pub fn training_sets<T: Scalar>(source: &DataSource, seed: u64) -> anyhow::Result<(Vec<FundusSample<T>>, Vec<FundusSample<T>>)> {
    match source {
        DataSource::Synthetic { train, val, size, .. } => {
            Ok((synthetic(*train, *size, seed, "train")?, synthetic(*val, *size, seed, "val")?))
        }
        DataSource::Manifest {
            path,
            augment_target,
            val_count,
        } => {
            let manifest = load_manifest(path).with_context(|| format!("loading {}", path.display()))?;
            let originals = padded(manifest.load_samples::<T>(Split::Train)?, manifest.pad_target)?;
            if originals.is_empty() {
                return Err(saunet::Error::Data("manifest has no training samples".into()).into());
            }
            let explicit_val = padded(manifest.load_samples::<T>(Split::Val)?, manifest.pad_target)?;
            let pool = if *augment_target == 0 {
                originals
            } else {
                build_augmented_set(&originals, *augment_target, &AugmentConfig::default(), seed)?
            };
            if !explicit_val.is_empty() || *val_count == 0 {
                return Ok((pool, explicit_val));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["split"]));
            Ok(split_validation(pool, *val_count, &mut rng)?)
        }
    }
}

/// Test images, padded to network resolution.
pub fn test_set<T: Scalar>(source: &DataSource, seed: u64) -> anyhow::Result<Vec<TestItem<T>>> {
    let (originals, target) = match source {
        DataSource::Synthetic { test, size, .. } => (synthetic::<T>(*test, *size, seed, "test")?, (*size, *size)),
        DataSource::Manifest { path, .. } => {
            let manifest = load_manifest(path).with_context(|| format!("loading {}", path.display()))?;
            (manifest.load_samples::<T>(Split::Test)?, manifest.pad_target)
        }
    };
    if originals.is_empty() {
        return Err(saunet::Error::Data("no test samples".into()).into());
    }
    originals
        .into_iter()
        .map(|original| {
            let (padded, offsets) = pad_to_target(&original, target)?;
            Ok(TestItem {
                padded,
                original,
                offsets,
            })
        })
        .collect()
}
