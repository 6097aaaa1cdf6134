use crate::augment::{augment_sample, resize};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::{derive_seed, Rng};
use crate::tensor::Tensor;

use super::decode::decode_image;
use super::manifest::{Manifest, Split};

/// One mini-batch: `inputs` is `B x S x S x 1`, `labels` are 0/1.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub inputs: Tensor<T>,
    pub labels: Vec<f64>,
    /// Manifest indices of the samples, in batch order.
    pub indices: Vec<usize>,
}

/// Seeded per-epoch shuffle of a split, chunked into batches. The last batch
/// keeps the remainder.
pub fn batch_plan(
    manifest: &Manifest,
    split: Split,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    let mut idx = manifest.indices(split);
    if idx.is_empty() {
        return Err(Error::Dataset(format!("the {split} split is empty")));
    }
    let mut rng = Rng::new(derive_seed(seed, &format!("epoch-{epoch}")));
    rng.shuffle(&mut idx);
    Ok(idx.chunks(batch_size).map(|c| c.to_vec()).collect())
}

/// Decodes records to `size x size` pixel buffers, regenerating augmented
/// copies from their source image and seed. Results are memoized.
#[derive(Debug)]
pub struct Loader {
    manifest: Manifest,
    size: usize,
    cache: Vec<Option<Vec<f32>>>,
}

impl Loader {
    pub fn new(manifest: Manifest, size: usize) -> Self {
        let n = manifest.len();
        Self {
            manifest,
            size,
            cache: vec![None; n],
        }
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Preload a buffer directly, bypassing decoding (used for in-memory data).
    pub fn insert(&mut self, index: usize, pixels: Vec<f32>) -> Result<()> {
        if pixels.len() != self.size * self.size || index >= self.cache.len() {
            return Err(Error::invalid("preloaded image has the wrong size or index"));
        }
        self.cache[index] = Some(pixels);
        Ok(())
    }

    pub fn pixels(&mut self, index: usize) -> Result<&[f32]> {
        if self.cache[index].is_none() {
            let loaded = self.load(index)?;
            self.cache[index] = Some(loaded);
        }
        Ok(self.cache[index].as_deref().expect("just filled"))
    }

    fn load(&self, index: usize) -> Result<Vec<f32>> {
        let rec = &self.manifest.records[index];
        let img = decode_image(&rec.path)?;
        let out = match rec.origin {
            None => resize(&img, self.size, self.size)?,
            Some(origin) => {
                let mut cfg = self.manifest.augment.clone().ok_or_else(|| {
                    Error::Dataset("augmented record without an augmentation config".into())
                })?;
                cfg.output_size = self.size;
                augment_sample(&img, &cfg, &mut Rng::new(origin.seed))?.0
            }
        };
        Ok(out.into_pixels())
    }

    pub fn batch<T: Real>(&mut self, indices: &[usize]) -> Result<Batch<T>> {
        let plane = self.size * self.size;
        let mut data = Vec::with_capacity(indices.len() * plane);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend(self.pixels(i)?.iter().map(|&p| T::lit(p as f64)));
            labels.push(self.manifest.records[i].label.as_f64());
        }
        Ok(Batch {
            inputs: Tensor::from_vec([indices.len(), self.size, self.size, 1], data)?,
            labels,
            indices: indices.to_vec(),
        })
    }

    /// All batches of `split` for one epoch, in seeded shuffle order.
    pub fn make_batches<T: Real>(
        &mut self,
        split: Split,
        batch_size: usize,
        seed: u64,
        epoch: usize,
    ) -> Result<Vec<Batch<T>>> {
        batch_plan(&self.manifest, split, batch_size, seed, epoch)?
            .iter()
            .map(|b| self.batch(b))
            .collect()
    }
}
