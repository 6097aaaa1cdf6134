#![allow(dead_code)]

pub mod gradcheck;
pub mod oracle;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

use std::io::Write;
use std::path::Path;

use lcnn::augment::AugmentConfig;
use lcnn::data::synth::{generate_dataset, SynthConfig};
use lcnn::data::{prepare_dataset, Loader, Manifest, SplitSpec};

/// Write a result line straight to the process stdout so it shows up even
/// when the harness captures test output.
pub fn report(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

pub fn verdict(id: &str, pass: bool, detail: &str) {
    report(&format!("{} criterion {id}: {detail}", if pass { "PASS" } else { "FAIL" }));
}

/// Synthetic dataset on disk, split so that `train` images (half per class)
/// land in the training split.
pub fn synth_manifest(
    dir: &Path,
    train: usize,
    test: usize,
    seed: u64,
    cfg: &SynthConfig,
    augment: Option<(&AugmentConfig, usize)>,
) -> Manifest {
    generate_dataset(dir, train + test, seed, cfg).unwrap();
    let split = SplitSpec {
        train_ratio: train as f64 / (train + test) as f64,
        seed,
    };
    let (aug, mult) = match augment {
        Some((a, m)) => (Some(a), m),
        None => (None, 1),
    };
    prepare_dataset(dir, split, aug, mult).unwrap()
}

pub fn loader(m: Manifest) -> Loader {
    Loader::new(m, 100)
}
