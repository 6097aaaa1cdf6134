//! Grayscale image buffers and the augmentation pipeline.
//!
//! The pipeline applies, in order: Gaussian blur, brightness/contrast jitter,
//! rotation, translation and zoom, then crops the outer black frame and
//! resamples to the network's input size. Every stage keeps pixels in `[0, 1]`.
//!
//! Coordinates follow the pixel-center convention: pixel `(x, y)` covers
//! `[x - 0.5, x + 0.5]`, and the image center is `((w - 1) / 2, (h - 1) / 2)`.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Side of the square network input.
pub const INPUT_SIZE: usize = 100;

/// Single-channel image, row-major, pixels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<f32>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || pixels.len() != height * width {
            return Err(Error::invalid(format!(
                "image {height}x{width} cannot hold {} pixels",
                pixels.len()
            )));
        }
        let mut img = Self {
            height,
            width,
            pixels,
        };
        img.clamp();
        Ok(img)
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f32> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: f32) {
        self.pixels[y * self.width + x] = v.clamp(0.0, 1.0);
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|&p| p as f64).sum::<f64>() / self.pixels.len() as f64
    }

    fn clamp(&mut self) {
        for p in &mut self.pixels {
            *p = if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) };
        }
    }

    fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(y, x) as f32);
            }
        }
        let mut img = Self {
            height,
            width,
            pixels,
        };
        img.clamp();
        img
    }

    /// Bilinear sample; neighbors outside the frame read as black.
    fn sample_black(&self, sy: f64, sx: f64) -> f64 {
        let (y0, x0) = (sy.floor(), sx.floor());
        let (fy, fx) = (sy - y0, sx - x0);
        let (y0, x0) = (y0 as i64, x0 as i64);
        let at = |y: i64, x: i64| -> f64 {
            if y < 0 || x < 0 || y >= self.height as i64 || x >= self.width as i64 {
                0.0
            } else {
                self.get(y as usize, x as usize) as f64
            }
        };
        let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx;
        let bottom = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Bilinear sample with edge replication.
    fn sample_edge(&self, sy: f64, sx: f64) -> f64 {
        let sy = sy.clamp(0.0, (self.height - 1) as f64);
        let sx = sx.clamp(0.0, (self.width - 1) as f64);
        let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(self.height - 1), (x0 + 1).min(self.width - 1));
        let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
        let top = self.get(y0, x0) as f64 * (1.0 - fx) + self.get(y0, x1) as f64 * fx;
        let bottom = self.get(y1, x0) as f64 * (1.0 - fx) + self.get(y1, x1) as f64 * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

/// Normalized 1-D Gaussian taps of radius `ceil(2 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let r = (2.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

/// Separable Gaussian blur with edge replication. `sigma == 0` is the identity.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> Result<GrayImage> {
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("blur sigma {sigma} must be >= 0")));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let (h, w) = (img.height as i64, img.width as i64);
    let mut tmp = vec![0.0f64; img.pixels.len()];
    for y in 0..h {
        for x in 0..w {
            tmp[(y * w + x) as usize] = k
                .iter()
                .enumerate()
                .map(|(i, &t)| {
                    let xx = (x + i as i64 - r).clamp(0, w - 1);
                    t * img.pixels[(y * w + xx) as usize] as f64
                })
                .sum();
        }
    }
    Ok(GrayImage::from_fn(img.height, img.width, |y, x| {
        k.iter()
            .enumerate()
            .map(|(i, &t)| {
                let yy = (y as i64 + i as i64 - r).clamp(0, h - 1);
                t * tmp[(yy * w) as usize + x]
            })
            .sum()
    }))
}

/// `clamp(contrast * (p - mean) + mean + brightness)` with the image mean.
pub fn color_jitter(img: &GrayImage, brightness: f64, contrast: f64) -> Result<GrayImage> {
    if !(contrast > 0.0) {
        return Err(Error::invalid(format!("contrast {contrast} must be > 0")));
    }
    let mean = img.mean();
    Ok(GrayImage::from_fn(img.height, img.width, |y, x| {
        contrast * (img.get(y, x) as f64 - mean) + mean + brightness
    }))
}

/// Counter-clockwise rotation (as displayed, rows growing downward) about the
/// image center; samples falling outside the frame are black.
pub fn rotate(img: &GrayImage, degrees: f64) -> GrayImage {
    if degrees == 0.0 {
        return img.clone();
    }
    let (s, c) = degrees.to_radians().sin_cos();
    let cy = (img.height as f64 - 1.0) / 2.0;
    let cx = (img.width as f64 - 1.0) / 2.0;
    GrayImage::from_fn(img.height, img.width, |y, x| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        let sx = cx + c * dx - s * dy;
        let sy = cy + s * dx + c * dy;
        img.sample_black(sy, sx)
    })
}

/// Shift content right by `dx` and down by `dy`; vacated pixels are black.
pub fn translate(img: &GrayImage, dx: i64, dy: i64) -> Result<GrayImage> {
    let (h, w) = (img.height as i64, img.width as i64);
    if dx.abs() >= w || dy.abs() >= h {
        return Err(Error::invalid(format!(
            "shift ({dx}, {dy}) not smaller than image {w}x{h}"
        )));
    }
    Ok(GrayImage::from_fn(img.height, img.width, |y, x| {
        let (sy, sx) = (y as i64 - dy, x as i64 - dx);
        if sy < 0 || sx < 0 || sy >= h || sx >= w {
            0.0
        } else {
            img.get(sy as usize, sx as usize) as f64
        }
    }))
}

/// Zoom about the center by `scale` and resample to `out_h x out_w`.
///
/// `scale > 1` keeps the central `1 / scale` of each axis; `scale < 1` widens the
/// view past the frame, padding by edge replication. Bilinear throughout.
pub fn zoom_resize(img: &GrayImage, scale: f64, out_h: usize, out_w: usize) -> Result<GrayImage> {
    if !(scale > 0.0) || out_h == 0 || out_w == 0 {
        return Err(Error::invalid(format!(
            "zoom needs scale > 0 and a nonempty output, got {scale}, {out_h}x{out_w}"
        )));
    }
    let (h, w) = (img.height as f64, img.width as f64);
    let (view_h, view_w) = (h / scale, w / scale);
    let (off_y, off_x) = ((h - view_h) / 2.0 - 0.5, (w - view_w) / 2.0 - 0.5);
    Ok(GrayImage::from_fn(out_h, out_w, |y, x| {
        let sy = (y as f64 + 0.5) / out_h as f64 * view_h + off_y;
        let sx = (x as f64 + 0.5) / out_w as f64 * view_w + off_x;
        img.sample_edge(sy, sx)
    }))
}

pub fn resize(img: &GrayImage, out_h: usize, out_w: usize) -> Result<GrayImage> {
    if img.height == out_h && img.width == out_w {
        return Ok(img.clone());
    }
    zoom_resize(img, 1.0, out_h, out_w)
}

#[derive(Debug, Clone)]
pub struct Cropped {
    pub image: GrayImage,
    /// No pixel exceeded the threshold; the input was returned unchanged.
    pub all_dark: bool,
}

/// Tight bounding box of pixels brighter than `threshold`.
pub fn autocrop_black(img: &GrayImage, threshold: f64) -> Result<Cropped> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::invalid(format!("crop threshold {threshold} outside [0, 1)")));
    }
    let (mut y0, mut y1, mut x0, mut x1) = (usize::MAX, 0, usize::MAX, 0);
    for y in 0..img.height {
        for x in 0..img.width {
            if img.get(y, x) as f64 > threshold {
                y0 = y0.min(y);
                y1 = y1.max(y);
                x0 = x0.min(x);
                x1 = x1.max(x);
            }
        }
    }
    if y0 == usize::MAX {
        warn!("autocrop: no pixel above {threshold}; image left uncropped");
        return Ok(Cropped {
            image: img.clone(),
            all_dark: true,
        });
    }
    let (ch, cw) = (y1 - y0 + 1, x1 - x0 + 1);
    let image = GrayImage::from_fn(ch, cw, |y, x| img.get(y + y0, x + x0) as f64);
    Ok(Cropped {
        image,
        all_dark: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub blur_sigma_range: [f64; 2],
    /// Maximum absolute brightness shift.
    pub brightness_delta: f64,
    pub contrast_range: [f64; 2],
    pub rotation_max_deg: f64,
    /// Maximum shift as a fraction of each extent.
    pub translate_max_frac: f64,
    pub zoom_range: [f64; 2],
    pub crop_threshold: f64,
    pub output_size: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            blur_sigma_range: [0.0, 1.5],
            brightness_delta: 0.1,
            contrast_range: [0.8, 1.2],
            rotation_max_deg: 15.0,
            translate_max_frac: 0.1,
            zoom_range: [0.9, 1.15],
            crop_threshold: 0.02,
            output_size: INPUT_SIZE,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    /// Every stage at its identity value; the pipeline reduces to crop + resize.
    pub fn identity() -> Self {
        Self {
            blur_sigma_range: [0.0, 0.0],
            brightness_delta: 0.0,
            contrast_range: [1.0, 1.0],
            rotation_max_deg: 0.0,
            translate_max_frac: 0.0,
            zoom_range: [1.0, 1.0],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let range_ok = |r: [f64; 2]| r[0] <= r[1] && r[0].is_finite() && r[1].is_finite();
        if !range_ok(self.blur_sigma_range) || self.blur_sigma_range[0] < 0.0 {
            return Err(Error::invalid("blur sigma range must satisfy 0 <= lo <= hi"));
        }
        if !range_ok(self.contrast_range) || self.contrast_range[0] <= 0.0 {
            return Err(Error::invalid("contrast range must satisfy 0 < lo <= hi"));
        }
        if !range_ok(self.zoom_range) || self.zoom_range[0] <= 0.0 {
            return Err(Error::invalid("zoom range must satisfy 0 < lo <= hi"));
        }
        if !(self.brightness_delta >= 0.0) || !(self.rotation_max_deg >= 0.0) {
            return Err(Error::invalid("brightness delta and rotation must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.translate_max_frac) {
            return Err(Error::invalid("translate fraction must be in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.crop_threshold) || self.output_size == 0 {
            return Err(Error::invalid("crop threshold must be in [0, 1), output size > 0"));
        }
        Ok(())
    }
}

/// Magnitudes drawn for one augmented sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub sigma: f64,
    pub brightness: f64,
    pub contrast: f64,
    pub degrees: f64,
    pub dx: i64,
    pub dy: i64,
    pub scale: f64,
}

impl AugmentParams {
    pub fn sample(cfg: &AugmentConfig, height: usize, width: usize, rng: &mut Rng) -> Self {
        let max_dx = ((cfg.translate_max_frac * width as f64).floor() as i64).min(width as i64 - 1);
        let max_dy =
            ((cfg.translate_max_frac * height as f64).floor() as i64).min(height as i64 - 1);
        Self {
            sigma: rng.uniform(cfg.blur_sigma_range[0], cfg.blur_sigma_range[1]),
            brightness: rng.uniform(-cfg.brightness_delta, cfg.brightness_delta),
            contrast: rng.uniform(cfg.contrast_range[0], cfg.contrast_range[1]),
            degrees: rng.uniform(-cfg.rotation_max_deg, cfg.rotation_max_deg),
            dx: rng.int_in(-max_dx, max_dx),
            dy: rng.int_in(-max_dy, max_dy),
            scale: rng.uniform(cfg.zoom_range[0], cfg.zoom_range[1]),
        }
    }
}

/// Run the full pipeline with fixed magnitudes.
pub fn apply_augmentation(
    img: &GrayImage,
    params: &AugmentParams,
    crop_threshold: f64,
    output_size: usize,
) -> Result<GrayImage> {
    let x = gaussian_blur(img, params.sigma)?;
    let x = color_jitter(&x, params.brightness, params.contrast)?;
    let x = rotate(&x, params.degrees);
    let x = translate(&x, params.dx, params.dy)?;
    let x = zoom_resize(&x, params.scale, x.height, x.width)?;
    let x = autocrop_black(&x, crop_threshold)?.image;
    resize(&x, output_size, output_size)
}

/// Draw magnitudes from `rng` and run the pipeline.
pub fn augment_sample(
    img: &GrayImage,
    cfg: &AugmentConfig,
    rng: &mut Rng,
) -> Result<(GrayImage, AugmentParams)> {
    cfg.validate()?;
    let params = AugmentParams::sample(cfg, img.height, img.width, rng);
    let out = apply_augmentation(img, &params, cfg.crop_threshold, cfg.output_size)?;
    Ok((out, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_image(h: usize, w: usize, seed: u64) -> GrayImage {
        let mut rng = Rng::new(seed);
        GrayImage::new(h, w, (0..h * w).map(|_| rng.unit() as f32).collect()).unwrap()
    }

    fn max_diff(a: &GrayImage, b: &GrayImage) -> f32 {
        assert_eq!((a.height, a.width), (b.height, b.width));
        a.pixels
            .iter()
            .zip(&b.pixels)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f32::max)
    }

    #[test]
    fn blur_constant_and_zero_sigma() {
        let c = GrayImage::filled(12, 9, 0.4).unwrap();
        assert!(max_diff(&gaussian_blur(&c, 1.3).unwrap(), &c) < 1e-6);
        let r = random_image(10, 10, 1);
        assert_eq!(gaussian_blur(&r, 0.0).unwrap(), r);
        assert!(gaussian_blur(&r, -1.0).is_err());
    }

    #[test]
    fn blur_impulse_reproduces_kernel() {
        let n = 11;
        let mut img = GrayImage::filled(n, n, 0.0).unwrap();
        img.set(5, 5, 1.0);
        let out = gaussian_blur(&img, 1.0).unwrap();
        // Direct 2-D evaluation over the (2r+1)^2 window, r = ceil(2 sigma) = 2.
        let r = 2i64;
        let mut z = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                z += (-((dx * dx + dy * dy) as f64) / 2.0).exp();
            }
        }
        for y in 0..n as i64 {
            for x in 0..n as i64 {
                let (dy, dx) = (y - 5, x - 5);
                let expect = if dy.abs() <= r && dx.abs() <= r {
                    (-((dx * dx + dy * dy) as f64) / 2.0).exp() / z
                } else {
                    0.0
                };
                assert!((out.get(y as usize, x as usize) as f64 - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn jitter_examples() {
        let r = random_image(6, 6, 2);
        assert!(max_diff(&color_jitter(&r, 0.0, 1.0).unwrap(), &r) < 1e-6);
        let g = GrayImage::filled(4, 4, 0.5).unwrap();
        let b = color_jitter(&g, 0.1, 1.0).unwrap();
        assert!(b.pixels.iter().all(|&p| (p - 0.6).abs() < 1e-6));
        let two = GrayImage::new(1, 2, vec![0.4, 0.6]).unwrap();
        let c = color_jitter(&two, 0.0, 2.0).unwrap();
        assert!((c.pixels[0] - 0.3).abs() < 1e-6 && (c.pixels[1] - 0.7).abs() < 1e-6);
        assert!(color_jitter(&two, 0.0, 0.0).is_err());
    }

    #[test]
    fn rotation_identities() {
        let r = random_image(8, 8, 3);
        assert_eq!(rotate(&r, 0.0), r);
        assert!(max_diff(&rotate(&r, 360.0), &r) < 1e-6);
        let q = rotate(&r, 90.0);
        let n = 8;
        for row in 0..n {
            for col in 0..n {
                assert!((q.get(row, col) - r.get(col, n - 1 - row)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn translate_examples() {
        let r = random_image(10, 12, 4);
        assert_eq!(translate(&r, 0, 0).unwrap(), r);
        let back = translate(&translate(&r, 3, 0).unwrap(), -3, 0).unwrap();
        for y in 0..10 {
            for x in 0..12 {
                let expect = if x >= 9 { 0.0 } else { r.get(y, x) };
                assert_eq!(back.get(y, x), expect);
            }
        }
        let mut dot = GrayImage::filled(10, 10, 0.0).unwrap();
        dot.set(5, 5, 1.0);
        let moved = translate(&dot, 2, 1).unwrap();
        assert_eq!(moved.get(6, 7), 1.0);
        assert_eq!(moved.pixels.iter().filter(|&&p| p > 0.0).count(), 1);
        assert!(translate(&r, 12, 0).is_err());
    }

    #[test]
    fn zoom_examples() {
        let r = random_image(9, 7, 5);
        assert!(max_diff(&zoom_resize(&r, 1.0, 9, 7).unwrap(), &r) < 1e-6);
        let c = GrayImage::filled(10, 10, 0.3).unwrap();
        for s in [0.5, 0.9, 1.0, 1.7, 3.0] {
            let z = zoom_resize(&c, s, 13, 8).unwrap();
            assert!(z.pixels.iter().all(|&p| (p - 0.3).abs() < 1e-6));
        }
        // Bright central block covering a quarter of the area.
        let n = 40;
        let mut img = GrayImage::filled(n, n, 0.0).unwrap();
        for y in 10..30 {
            for x in 10..30 {
                img.set(y, x, 1.0);
            }
        }
        let frac = |im: &GrayImage| {
            im.pixels.iter().filter(|&&p| p > 0.5).count() as f64 / im.pixels.len() as f64
        };
        let before = frac(&img);
        let after = frac(&zoom_resize(&img, 2.0, n, n).unwrap());
        assert!((after / before - 4.0).abs() < 0.3, "{before} -> {after}");
    }

    #[test]
    fn autocrop_examples() {
        let mut img = GrayImage::filled(10, 10, 0.0).unwrap();
        for y in 2..8 {
            for x in 2..8 {
                img.set(y, x, 0.8);
            }
        }
        let c = autocrop_black(&img, 0.02).unwrap();
        assert_eq!((c.image.height(), c.image.width()), (6, 6));
        assert!(!c.all_dark);
        let again = autocrop_black(&c.image, 0.02).unwrap();
        assert_eq!(again.image, c.image);

        let full = GrayImage::filled(5, 5, 0.5).unwrap();
        assert_eq!(autocrop_black(&full, 0.02).unwrap().image, full);

        let dark = GrayImage::filled(5, 5, 0.0).unwrap();
        let d = autocrop_black(&dark, 0.02).unwrap();
        assert!(d.all_dark);
        assert_eq!(d.image, dark);
    }

    #[test]
    fn pipeline_identity_config() {
        let mut img = GrayImage::filled(30, 40, 0.0).unwrap();
        for y in 5..25 {
            for x in 8..30 {
                img.set(y, x, ((x + y) % 7) as f32 / 7.0 + 0.1);
            }
        }
        let (out, p) = augment_sample(&img, &AugmentConfig::identity(), &mut Rng::new(1)).unwrap();
        assert_eq!((p.dx, p.dy, p.degrees, p.scale), (0, 0, 0.0, 1.0));
        let expect = resize(&autocrop_black(&img, 0.02).unwrap().image, 100, 100).unwrap();
        assert!(max_diff(&out, &expect) < 1e-6);
    }

    #[test]
    fn pipeline_contract_and_determinism() {
        let img = random_image(64, 80, 6);
        let cfg = AugmentConfig::default();
        let (a, pa) = augment_sample(&img, &cfg, &mut Rng::new(10)).unwrap();
        let (b, pb) = augment_sample(&img, &cfg, &mut Rng::new(10)).unwrap();
        assert_eq!(a, b);
        assert_eq!(pa, pb);
        assert_eq!((a.height(), a.width()), (100, 100));
        assert!(a.pixels().iter().all(|&p| (0.0..=1.0).contains(&p)));
        let (c, _) = augment_sample(&img, &cfg, &mut Rng::new(11)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_config() {
        let cfg = AugmentConfig {
            contrast_range: [1.2, 0.8],
            ..AugmentConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
