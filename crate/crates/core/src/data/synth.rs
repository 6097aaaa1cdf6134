//! Synthetic scan-like images for desk-scale experiments.
//!
//! Every image is a textured elliptical "body" on a black frame. Tumorous
//! images add a small bright ellipse inside the body.

use std::fs;
use std::path::Path;

use crate::augment::GrayImage;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Rng};

use super::decode::encode_png;
use super::manifest::Label;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub size: usize,
    /// Body tissue base intensity range.
    pub tissue_range: [f64; 2],
    /// Per-pixel Gaussian noise.
    pub noise_std: f64,
    /// Tumor core intensity range.
    pub tumor_level: [f64; 2],
    /// Tumor semi-axis range as a fraction of the image side.
    pub tumor_radius: [f64; 2],
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            size: 100,
            tissue_range: [0.25, 0.45],
            noise_std: 0.04,
            tumor_level: [0.75, 0.95],
            tumor_radius: [0.05, 0.12],
        }
    }
}

impl SynthConfig {
    /// Fainter, smaller lesions under heavier noise.
    pub fn hard() -> Self {
        Self {
            noise_std: 0.08,
            tumor_level: [0.5, 0.65],
            tumor_radius: [0.03, 0.06],
            ..Self::default()
        }
    }
}

struct Ellipse {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    cos: f64,
    sin: f64,
}

impl Ellipse {
    /// Normalized radial distance; `<= 1` inside.
    fn radius(&self, y: f64, x: f64) -> f64 {
        let (dy, dx) = (y - self.cy, x - self.cx);
        let u = self.cos * dx + self.sin * dy;
        let v = -self.sin * dx + self.cos * dy;
        ((u / self.rx).powi(2) + (v / self.ry).powi(2)).sqrt()
    }
}

/// One synthetic image of the given class, fully determined by `rng`.
pub fn synth_image(label: Label, cfg: &SynthConfig, rng: &mut Rng) -> GrayImage {
    let n = cfg.size as f64;
    let angle = rng.uniform(0.0, std::f64::consts::PI);
    let body = Ellipse {
        cy: n / 2.0 + rng.uniform(-0.06, 0.06) * n,
        cx: n / 2.0 + rng.uniform(-0.06, 0.06) * n,
        ry: rng.uniform(0.32, 0.44) * n,
        rx: rng.uniform(0.32, 0.44) * n,
        cos: angle.cos(),
        sin: angle.sin(),
    };
    let base = rng.uniform(cfg.tissue_range[0], cfg.tissue_range[1]);
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.uniform(0.01, 0.03),
                rng.uniform(0.02, 0.12),
                rng.uniform(0.02, 0.12),
                rng.uniform(0.0, std::f64::consts::TAU),
            )
        })
        .collect();
    let tumor = (label == Label::Tumor).then(|| {
        let r = rng.uniform(cfg.tumor_radius[0], cfg.tumor_radius[1]) * n;
        let ry = r * rng.uniform(0.7, 1.0);
        let a = rng.uniform(0.0, std::f64::consts::PI);
        // Keep the lesion well inside the body.
        let room = (body.rx.min(body.ry) - r).max(0.0) * 0.7;
        let t = rng.uniform(0.0, std::f64::consts::TAU);
        let d = rng.uniform(0.0, room);
        (
            Ellipse {
                cy: body.cy + d * t.sin(),
                cx: body.cx + d * t.cos(),
                ry,
                rx: r,
                cos: a.cos(),
                sin: a.sin(),
            },
            rng.uniform(cfg.tumor_level[0], cfg.tumor_level[1]),
        )
    });
    let mut pixels = Vec::with_capacity(cfg.size * cfg.size);
    for y in 0..cfg.size {
        for x in 0..cfg.size {
            let (yf, xf) = (y as f64, x as f64);
            let rb = body.radius(yf, xf);
            if rb > 1.0 {
                pixels.push(0.0);
                continue;
            }
            let texture: f64 = waves
                .iter()
                .map(|&(amp, fy, fx, ph)| amp * (fy * yf + fx * xf + ph).sin())
                .sum();
            let mut v = base + texture + rng.normal(0.0, cfg.noise_std);
            if let Some((ell, level)) = &tumor {
                let rt = ell.radius(yf, xf);
                let alpha = (1.0 - (rt - 0.8) / 0.4).clamp(0.0, 1.0);
                v = v * (1.0 - alpha) + (level + rng.normal(0.0, cfg.noise_std * 0.5)) * alpha;
            }
            pixels.push(v.clamp(0.0, 1.0) as f32);
        }
    }
    GrayImage::new(cfg.size, cfg.size, pixels).expect("size matches")
}

/// Image `index` of class `label` for a dataset seeded with `seed`.
pub fn synth_indexed(label: Label, index: usize, seed: u64, cfg: &SynthConfig) -> GrayImage {
    let mut rng = Rng::new(derive_seed(seed, &format!("{label}-{index}")));
    synth_image(label, cfg, &mut rng)
}

/// Write `count` images (half `normal/`, half `tumor/`, the odd one out to
/// `tumor/`) under `out_dir`. Returns `[normal, tumor]` counts.
pub fn generate_dataset(out_dir: &Path, count: usize, seed: u64, cfg: &SynthConfig) -> Result<[usize; 2]> {
    if count < 2 {
        return Err(Error::invalid("synthetic dataset needs at least 2 images"));
    }
    let counts = [count / 2, count - count / 2];
    for label in Label::ALL {
        let dir = out_dir.join(label.dir_name());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for i in 0..counts[label as usize] {
            let img = synth_indexed(label, i, seed, cfg);
            encode_png(&img, &dir.join(format!("{label}_{i:05}.png")))?;
        }
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn percentile(img: &GrayImage, q: f64) -> f32 {
        let mut v = img.pixels().to_vec();
        v.sort_by(f32::total_cmp);
        v[((v.len() - 1) as f64 * q).round() as usize]
    }

    #[test]
    fn positives_outshine_matched_negatives() {
        let cfg = SynthConfig::default();
        for i in 0..40 {
            let pos = synth_indexed(Label::Tumor, i, 7, &cfg);
            let neg = synth_indexed(Label::Normal, i, 7, &cfg);
            let max = pos.pixels().iter().copied().fold(0.0, f32::max);
            assert!(max > percentile(&neg, 0.99), "pair {i}");
        }
    }

    #[test]
    fn deterministic_and_framed() {
        let cfg = SynthConfig::default();
        let a = synth_indexed(Label::Normal, 3, 1, &cfg);
        assert_eq!(a, synth_indexed(Label::Normal, 3, 1, &cfg));
        assert_ne!(a, synth_indexed(Label::Normal, 4, 1, &cfg));
        assert_eq!(a.get(0, 0), 0.0);
        assert!(a.get(50, 50) > 0.0);
    }

    #[test]
    fn writes_balanced_layout() {
        let dir = tempfile::tempdir().unwrap();
        let counts = generate_dataset(dir.path(), 6, 2, &SynthConfig::default()).unwrap();
        assert_eq!(counts, [3, 3]);
        for label in Label::ALL {
            assert_eq!(fs::read_dir(dir.path().join(label.dir_name())).unwrap().count(), 3);
        }
        assert!(generate_dataset(dir.path(), 1, 2, &SynthConfig::default()).is_err());
    }
}
