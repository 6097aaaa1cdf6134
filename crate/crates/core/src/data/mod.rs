//! Datasets: directory ingestion, manifests, splitting, balancing and batching.
//!
//! A dataset lives on disk as one directory per class under a root:
//! `root/normal/*.png|jpg` and `root/tumor/*.png|jpg`. Source folders with other
//! names are folded onto the two classes through [`Label::from_dir_name`], so
//! e.g. `benign/` and `malignant/` both become `tumor`.

mod batch;
mod decode;
mod manifest;
mod split;
pub mod synth;

pub use batch::{batch_plan, Batch, Loader};
pub use decode::{decode_image, encode_png, ingest_directory, Ingested};
pub use manifest::{Label, Manifest, Origin, Record, Split};
pub use split::{balance_train_set, stratified_split, SplitSpec};

use std::path::Path;

use crate::augment::AugmentConfig;
use crate::error::Result;
use crate::rng::{derive_seed, Rng};

/// Ingest `root`, split it, and optionally balance and enlarge the training
/// split with augmented copies (`multiplier` times the balanced class size).
pub fn prepare_dataset(
    root: &Path,
    split: SplitSpec,
    augment: Option<&AugmentConfig>,
    multiplier: usize,
) -> Result<Manifest> {
    let ingested = ingest_directory(root)?;
    let manifest = stratified_split(&ingested.manifest, split)?;
    match augment {
        None => Ok(manifest),
        Some(cfg) => {
            let mut rng = Rng::new(derive_seed(split.seed, "balance"));
            balance_train_set(&manifest, cfg, &mut rng, multiplier)
        }
    }
}
