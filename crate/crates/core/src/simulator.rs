//! Synthetic turbulence-degraded sequences.
//!
//! Each frame is a warp of a single ground-truth image by a random motion
//! field, followed by a Gaussian blur and optional additive noise. A motion
//! field is the sum of patches: at `rows * cols / patch_density_divisor`
//! random centers a square patch of one normally distributed 2-vector is
//! smoothed by a Gaussian whose mean is jittered per patch, then scaled by the
//! frame's distortion strength. Overlapping patches accumulate.
//!
//! Frames are split exactly into a severe and a mild group. Every frame draws
//! from its own random stream derived from `(seed, frame index)`, so results
//! do not depend on thread scheduling.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::frame::{Frame, FrameStack};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurbulenceConfig {
    pub n_frames: usize,
    /// Fraction of frames drawn from the severe strength range; the count is
    /// `floor(severe_fraction * n_frames)`.
    pub severe_fraction: f64,
    pub severe_strength: (f64, f64),
    pub mild_strength: (f64, f64),
    /// Odd side length of the motion-vector patches.
    pub patch_size: usize,
    pub patch_density_divisor: usize,
    /// Smoothing kernel width; `None` means `patch_size / 6`.
    pub smoothing_sigma: Option<f64>,
    /// Per-patch kernel mean shift, uniform in `[-mean_jitter, mean_jitter]` pixels.
    pub mean_jitter: f64,
    /// Per-frame blur in pixels; 0 disables.
    pub blur_sigma: f64,
    /// Noise of the less noisy frames; 0 disables.
    pub noise_sigma: f64,
    /// Fraction of frames that get `strong_noise_sigma` instead.
    pub noisy_fraction: f64,
    pub strong_noise_sigma: f64,
    /// Give the strong noise to the severely distorted frames rather than to
    /// an independent random group.
    pub noise_follows_severity: bool,
    pub seed: u64,
}

impl Default for TurbulenceConfig {
    fn default() -> Self {
        Self {
            n_frames: 100,
            severe_fraction: 0.7,
            severe_strength: (1.0, 1.5),
            mild_strength: (0.2, 0.3),
            patch_size: 65,
            patch_density_divisor: 250,
            smoothing_sigma: None,
            mean_jitter: 2.0,
            blur_sigma: 1.0,
            noise_sigma: 0.0,
            noisy_fraction: 0.0,
            strong_noise_sigma: 0.0,
            noise_follows_severity: false,
            seed: 0,
        }
    }
}

impl TurbulenceConfig {
    /// 70 severe (`[1, 1.5]`) and 30 mild (`[0.2, 0.3]`) frames out of 100.
    pub fn severe_majority(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    /// 65 severe (`[1, 1.5]`) and 15 mild (`[0.3, 0.5]`) frames out of 80.
    pub fn extreme(seed: u64) -> Self {
        Self {
            n_frames: 80,
            severe_fraction: 65.0 / 80.0,
            mild_strength: (0.3, 0.5),
            seed,
            ..Self::default()
        }
    }

    /// As [`Self::severe_majority`] with 30 less noisy and 70 more noisy frames.
    pub fn noisy(seed: u64, less: f64, more: f64) -> Self {
        Self {
            noise_sigma: less,
            noisy_fraction: 0.7,
            strong_noise_sigma: more,
            noise_follows_severity: true,
            seed,
            ..Self::default()
        }
    }

    pub fn smoothing_sigma(&self) -> f64 {
        self.smoothing_sigma.unwrap_or(self.patch_size as f64 / 6.0)
    }

    pub fn severe_count(&self) -> usize {
        (self.severe_fraction * self.n_frames as f64 + 1e-9).floor() as usize
    }

    pub fn noisy_count(&self) -> usize {
        (self.noisy_fraction * self.n_frames as f64 + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidParameter(what));
        for (name, (lo, hi)) in [
            ("severe_strength", self.severe_strength),
            ("mild_strength", self.mild_strength),
        ] {
            if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
                return bad(format!("{name} must satisfy 0 <= lo <= hi"));
            }
        }
        if self.patch_size < 3 || self.patch_size % 2 == 0 {
            return bad("patch_size must be odd and at least 3".into());
        }
        if self.patch_density_divisor == 0 {
            return bad("patch_density_divisor must be positive".into());
        }
        for (name, v) in [
            ("severe_fraction", self.severe_fraction),
            ("noisy_fraction", self.noisy_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1]"));
            }
        }
        for (name, v) in [
            ("blur_sigma", self.blur_sigma),
            ("noise_sigma", self.noise_sigma),
            ("strong_noise_sigma", self.strong_noise_sigma),
            ("mean_jitter", self.mean_jitter),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be nonnegative"));
            }
        }
        if let Some(s) = self.smoothing_sigma {
            if !(s > 0.0) {
                return bad("smoothing_sigma must be positive".into());
            }
        }
        if self.n_frames == 0 {
            return bad("n_frames must be positive".into());
        }
        Ok(())
    }

    /// `key = value` lines, one per field.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        line("n_frames", self.n_frames.to_string());
        line("severe_fraction", self.severe_fraction.to_string());
        line(
            "severe_strength",
            format!("{},{}", self.severe_strength.0, self.severe_strength.1),
        );
        line(
            "mild_strength",
            format!("{},{}", self.mild_strength.0, self.mild_strength.1),
        );
        line("patch_size", self.patch_size.to_string());
        line("patch_density_divisor", self.patch_density_divisor.to_string());
        line("smoothing_sigma", self.smoothing_sigma().to_string());
        line("mean_jitter", self.mean_jitter.to_string());
        line("blur_sigma", self.blur_sigma.to_string());
        line("noise_sigma", self.noise_sigma.to_string());
        line("noisy_fraction", self.noisy_fraction.to_string());
        line("strong_noise_sigma", self.strong_noise_sigma.to_string());
        line("noise_follows_severity", self.noise_follows_severity.to_string());
        line("seed", self.seed.to_string());
        out
    }

    /// Parses `key = value` lines over the defaults. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn from_key_value(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidParameter(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let err = || Error::InvalidParameter(format!("line {}: bad value for {key}", lineno + 1));
            let num = |v: &str| v.parse::<f64>().map_err(|_| err());
            let range = |v: &str| -> Result<(f64, f64)> {
                let (a, b) = v.split_once(',').ok_or_else(err)?;
                Ok((num(a.trim())?, num(b.trim())?))
            };
            match key {
                "n_frames" => cfg.n_frames = value.parse().map_err(|_| err())?,
                "severe_fraction" => cfg.severe_fraction = num(value)?,
                "severe_strength" => cfg.severe_strength = range(value)?,
                "mild_strength" => cfg.mild_strength = range(value)?,
                "patch_size" => cfg.patch_size = value.parse().map_err(|_| err())?,
                "patch_density_divisor" => {
                    cfg.patch_density_divisor = value.parse().map_err(|_| err())?
                }
                "smoothing_sigma" => cfg.smoothing_sigma = Some(num(value)?),
                "mean_jitter" => cfg.mean_jitter = num(value)?,
                "blur_sigma" => cfg.blur_sigma = num(value)?,
                "noise_sigma" => cfg.noise_sigma = num(value)?,
                "noisy_fraction" => cfg.noisy_fraction = num(value)?,
                "strong_noise_sigma" => cfg.strong_noise_sigma = num(value)?,
                "noise_follows_severity" => {
                    cfg.noise_follows_severity = value.parse().map_err(|_| err())?
                }
                "seed" => cfg.seed = value.parse().map_err(|_| err())?,
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "line {}: unknown key `{other}`",
                        lineno + 1
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Per-pixel displacement in pixels: `u` along columns, `v` along rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionField {
    pub u: Frame,
    pub v: Frame,
}

impl MotionField {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            u: Frame::zeros(rows, cols),
            v: Frame::zeros(rows, cols),
        }
    }

    pub fn constant(rows: usize, cols: usize, u: f64, v: f64) -> Self {
        Self {
            u: Frame::from_element(rows, cols, u),
            v: Frame::from_element(rows, cols, v),
        }
    }

    pub fn max_magnitude(&self) -> (f64, f64) {
        (self.u.amax(), self.v.amax())
    }
}

/// Standard normal CDF.
fn phi(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Mass of `N(shift, sigma)` in `[a, b]`, computed on the side with less
/// cancellation.
fn normal_mass(a: f64, b: f64, sigma: f64) -> f64 {
    if a > 0.0 {
        phi(-a / sigma) - phi(-b / sigma)
    } else {
        phi(b / sigma) - phi(a / sigma)
    }
}

/// 1-D profile of a box `[lo, hi]` (pixel indices, inclusive) convolved with a
/// Gaussian of mean `shift`, evaluated at every pixel of a line of length `n`.
fn smoothed_box_profile(n: usize, lo: usize, hi: usize, shift: f64, sigma: f64) -> Vec<f64> {
    (0..n)
        .map(|x| {
            let x = x as f64 - shift;
            normal_mass(x - hi as f64 - 0.5, x - lo as f64 + 0.5, sigma)
        })
        .collect()
}

/// One motion-vector patch before scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Patch {
    pub center: (usize, usize),
    /// `(u, v)` displacement of the patch.
    pub vector: (f64, f64),
    /// Kernel mean shift `(rows, cols)`.
    pub shift: (f64, f64),
}

/// Adds `strength * patch` to `field`. The patch box is cropped to the image.
pub fn add_patch(field: &mut MotionField, patch: &Patch, strength: f64, config: &TurbulenceConfig) {
    let (rows, cols) = field.u.shape();
    let half = config.patch_size / 2;
    let sigma = config.smoothing_sigma();
    let (ci, cj) = patch.center;
    let row_profile = smoothed_box_profile(
        rows,
        ci.saturating_sub(half),
        (ci + half).min(rows - 1),
        patch.shift.0,
        sigma,
    );
    let col_profile = smoothed_box_profile(
        cols,
        cj.saturating_sub(half),
        (cj + half).min(cols - 1),
        patch.shift.1,
        sigma,
    );
    let su = strength * patch.vector.0;
    let sv = strength * patch.vector.1;
    for (j, &pc) in col_profile.iter().enumerate() {
        if pc == 0.0 {
            continue;
        }
        for (i, &pr) in row_profile.iter().enumerate() {
            let w = pr * pc;
            field.u[(i, j)] += su * w;
            field.v[(i, j)] += sv * w;
        }
    }
}

/// Draws the patches of one motion field.
pub fn draw_patches<R: Rng>(rows: usize, cols: usize, config: &TurbulenceConfig, rng: &mut R) -> Vec<Patch> {
    let count = rows * cols / config.patch_density_divisor;
    (0..count)
        .map(|_| {
            let center = (rng.random_range(0..rows), rng.random_range(0..cols));
            let vector = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            let shift = if config.mean_jitter > 0.0 {
                let j = config.mean_jitter;
                (rng.random_range(-j..=j), rng.random_range(-j..=j))
            } else {
                (0.0, 0.0)
            };
            Patch {
                center,
                vector,
                shift,
            }
        })
        .collect()
}

/// A random motion field of the given strength.
pub fn generate_motion_field<R: Rng>(
    rows: usize,
    cols: usize,
    strength: f64,
    config: &TurbulenceConfig,
    rng: &mut R,
) -> MotionField {
    let patches = draw_patches(rows, cols, config, rng);
    let mut field = MotionField::zeros(rows, cols);
    for patch in &patches {
        add_patch(&mut field, patch, strength, config);
    }
    field
}

fn bilinear(image: &Frame, y: f64, x: f64) -> f64 {
    let (rows, cols) = image.shape();
    let y = y.clamp(0.0, (rows - 1) as f64);
    let x = x.clamp(0.0, (cols - 1) as f64);
    let i0 = (y.floor() as usize).min(rows.saturating_sub(2));
    let j0 = (x.floor() as usize).min(cols.saturating_sub(2));
    let i1 = (i0 + 1).min(rows - 1);
    let j1 = (j0 + 1).min(cols - 1);
    let fy = y - i0 as f64;
    let fx = x - j0 as f64;
    let top = if fx == 0.0 {
        image[(i0, j0)]
    } else {
        image[(i0, j0)] * (1.0 - fx) + image[(i0, j1)] * fx
    };
    if fy == 0.0 {
        return top;
    }
    let bottom = if fx == 0.0 {
        image[(i1, j0)]
    } else {
        image[(i1, j0)] * (1.0 - fx) + image[(i1, j1)] * fx
    };
    top * (1.0 - fy) + bottom * fy
}

/// Backward warp: `out(x) = image(x + field(x))`, bilinear, replicated borders.
pub fn warp(image: &Frame, field: &MotionField) -> Result<Frame> {
    if image.shape() != field.u.shape() || image.shape() != field.v.shape() {
        return Err(Error::ShapeMismatch("motion field and image differ in size".into()));
    }
    let (rows, cols) = image.shape();
    Ok(Frame::from_fn(rows, cols, |i, j| {
        bilinear(image, i as f64 + field.v[(i, j)], j as f64 + field.u[(i, j)])
    }))
}

/// Separable Gaussian blur, radius `ceil(4 sigma)`, replicated borders.
pub fn gaussian_blur(image: &Frame, sigma: f64) -> Frame {
    if sigma <= 0.0 {
        return image.clone();
    }
    let radius = (4.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|w| *w /= total);
    let (rows, cols) = image.shape();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let horizontal = Frame::from_fn(rows, cols, |i, j| {
        kernel
            .iter()
            .enumerate()
            .map(|(t, w)| w * image[(i, clamp(j as isize + t as isize - radius, cols))])
            .sum()
    });
    Frame::from_fn(rows, cols, |i, j| {
        kernel
            .iter()
            .enumerate()
            .map(|(t, w)| w * horizontal[(clamp(i as isize + t as isize - radius, rows), j)])
            .sum()
    })
}

/// Everything produced for one simulated sequence.
#[derive(Debug, Clone)]
pub struct SimulatedSequence {
    pub stack: FrameStack,
    pub fields: Vec<MotionField>,
    pub severe: Vec<bool>,
    pub strengths: Vec<f64>,
    pub noise_sigmas: Vec<f64>,
}

impl SimulatedSequence {
    /// Zero-based indices of the severely distorted frames.
    pub fn severe_indices(&self) -> Vec<usize> {
        (0..self.severe.len()).filter(|&k| self.severe[k]).collect()
    }
}

fn frame_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generates a degraded sequence from one ground-truth frame.
pub fn simulate_sequence(truth: &Frame, config: &TurbulenceConfig) -> Result<SimulatedSequence> {
    config.validate()?;
    if truth.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::IntensityOutOfRange {
            frame: 0,
            value: truth.iter().copied().find(|v| !(0.0..=1.0).contains(v)).unwrap_or(f64::NAN),
        });
    }
    let n = config.n_frames;
    let (rows, cols) = truth.shape();

    // Stream 0 partitions the frames; stream k + 1 drives frame k.
    let mut master = frame_rng(config.seed, 0);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut master);
    let mut severe = vec![false; n];
    for &k in &order[..config.severe_count()] {
        severe[k] = true;
    }
    let mut noisy = vec![false; n];
    if config.noise_follows_severity {
        // Severe frames first, then mild, each in shuffled order.
        let ranked: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&k| severe[k])
            .chain(order.iter().copied().filter(|&k| !severe[k]))
            .collect();
        for &k in &ranked[..config.noisy_count()] {
            noisy[k] = true;
        }
    } else {
        let mut noise_order: Vec<usize> = (0..n).collect();
        noise_order.shuffle(&mut master);
        for &k in &noise_order[..config.noisy_count()] {
            noisy[k] = true;
        }
    }

    let produced: Vec<(Frame, MotionField, f64, f64)> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng = frame_rng(config.seed, k as u64 + 1);
            let (lo, hi) = if severe[k] {
                config.severe_strength
            } else {
                config.mild_strength
            };
            let strength = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let field = generate_motion_field(rows, cols, strength, config, &mut rng);
            let warped = warp(truth, &field).expect("field matches truth");
            let mut frame = gaussian_blur(&warped, config.blur_sigma);
            let sigma = if noisy[k] {
                config.strong_noise_sigma
            } else {
                config.noise_sigma
            };
            if sigma > 0.0 {
                let noise = Normal::new(0.0, sigma).expect("finite sigma");
                frame.apply(|v| *v += rng.sample(noise));
            }
            frame.apply(|v| *v = v.clamp(0.0, 1.0));
            (frame, field, strength, sigma)
        })
        .collect();

    let mut frames = Vec::with_capacity(n);
    let mut fields = Vec::with_capacity(n);
    let mut strengths = Vec::with_capacity(n);
    let mut noise_sigmas = Vec::with_capacity(n);
    for (frame, field, strength, sigma) in produced {
        frames.push(frame);
        fields.push(field);
        strengths.push(strength);
        noise_sigmas.push(sigma);
    }
    Ok(SimulatedSequence {
        stack: FrameStack::new(frames)?,
        fields,
        severe,
        strengths,
        noise_sigmas,
    })
}

/// A deterministic test scene with flat regions, sharp edges, a disk, a
/// smooth ramp and fine periodic texture.
pub fn synthetic_scene(rows: usize, cols: usize, seed: u64) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (r, c) = (rows as f64, cols as f64);
    let rects: Vec<(f64, f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            let y0 = rng.random_range(0.0..0.7) * r;
            let x0 = rng.random_range(0.0..0.7) * c;
            let h = rng.random_range(0.15..0.35) * r;
            let w = rng.random_range(0.15..0.35) * c;
            (y0, x0, h, w, rng.random_range(0.1..0.9))
        })
        .collect();
    let disk = (
        rng.random_range(0.3..0.7) * r,
        rng.random_range(0.3..0.7) * c,
        rng.random_range(0.12..0.22) * r.min(c),
    );
    let period = rng.random_range(4.0..7.0);
    Frame::from_fn(rows, cols, |i, j| {
        let (y, x) = (i as f64, j as f64);
        let mut v = 0.25 + 0.3 * x / c;
        for &(y0, x0, h, w, level) in &rects {
            if y >= y0 && y < y0 + h && x >= x0 && x < x0 + w {
                v = level;
            }
        }
        let (dy, dx) = (y - disk.0, x - disk.1);
        if dy * dy + dx * dx <= disk.2 * disk.2 {
            v = 0.9 - 0.15 * ((x + y) * std::f64::consts::TAU / period).sin().signum();
        }
        if y > 0.75 * r {
            v += 0.1 * (x * std::f64::consts::TAU / period).sin();
        }
        v.clamp(0.0, 1.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::psnr;
    use crate::quality::laplacian_l1;

    fn ramp(rows: usize, cols: usize) -> Frame {
        Frame::from_fn(rows, cols, |_, j| j as f64 / cols as f64)
    }

    #[test]
    fn zero_strength_gives_zero_field() {
        let cfg = TurbulenceConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = generate_motion_field(40, 40, 0.0, &cfg, &mut rng);
        assert!(f.u.iter().chain(f.v.iter()).all(|&x| x == 0.0));
    }

    #[test]
    fn centered_unit_patch_is_a_bump() {
        let cfg = TurbulenceConfig {
            mean_jitter: 0.0,
            ..TurbulenceConfig::default()
        };
        let mut field = MotionField::zeros(65, 65);
        let strength = 1.3;
        let patch = Patch {
            center: (32, 32),
            vector: (1.0, 0.0),
            shift: (0.0, 0.0),
        };
        add_patch(&mut field, &patch, strength, &cfg);
        assert!(field.v.iter().all(|&x| x == 0.0));
        let peak = field.u[(32, 32)];
        assert_eq!(field.u.max(), peak);
        assert!((peak - strength).abs() < 0.01 * strength, "{peak}");
        // direct construction: product of erf profiles of the cropped box
        let sigma = cfg.smoothing_sigma();
        let p = |x: f64| phi((x + 32.5) / sigma) - phi((x - 32.5) / sigma);
        assert!((field.u[(10, 50)] - strength * p(-22.0) * p(18.0)).abs() < 1e-12);
        // symmetric bump
        assert!((field.u[(20, 32)] - field.u[(44, 32)]).abs() < 1e-12);
    }

    #[test]
    fn fields_are_deterministic_per_seed() {
        let cfg = TurbulenceConfig::default();
        let a = generate_motion_field(50, 50, 1.2, &cfg, &mut ChaCha8Rng::seed_from_u64(9));
        let b = generate_motion_field(50, 50, 1.2, &cfg, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn field_scales_linearly_with_strength() {
        let cfg = TurbulenceConfig::default();
        let a = generate_motion_field(48, 48, 0.7, &cfg, &mut ChaCha8Rng::seed_from_u64(3));
        let b = generate_motion_field(48, 48, 1.4, &cfg, &mut ChaCha8Rng::seed_from_u64(3));
        let (au, av) = a.max_magnitude();
        let (bu, bv) = b.max_magnitude();
        assert_eq!(bu, 2.0 * au);
        assert_eq!(bv, 2.0 * av);
    }

    #[test]
    fn zero_warp_is_identity() {
        let img = synthetic_scene(20, 17, 1);
        assert_eq!(warp(&img, &MotionField::zeros(20, 17)).unwrap(), img);
    }

    #[test]
    fn integer_warp_shifts() {
        let img = synthetic_scene(12, 12, 2);
        let out = warp(&img, &MotionField::constant(12, 12, 1.0, 0.0)).unwrap();
        for i in 0..12 {
            for j in 0..11 {
                assert_eq!(out[(i, j)], img[(i, j + 1)]);
            }
        }
    }

    #[test]
    fn half_pixel_warp_on_ramp() {
        let img = ramp(6, 10);
        let out = warp(&img, &MotionField::constant(6, 10, 0.5, 0.0)).unwrap();
        for i in 0..6 {
            for j in 0..9 {
                let expected = (j as f64 + 0.5) / 10.0;
                assert!((out[(i, j)] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn warp_rejects_mismatched_field() {
        assert!(warp(&Frame::zeros(3, 3), &MotionField::zeros(3, 4)).is_err());
    }

    #[test]
    fn degenerate_config_reproduces_truth() {
        let truth = synthetic_scene(32, 32, 4);
        let cfg = TurbulenceConfig {
            n_frames: 5,
            severe_strength: (0.0, 0.0),
            mild_strength: (0.0, 0.0),
            blur_sigma: 0.0,
            ..TurbulenceConfig::default()
        };
        let seq = simulate_sequence(&truth, &cfg).unwrap();
        for f in seq.stack.frames() {
            assert_eq!(f, &truth);
        }
    }

    #[test]
    fn exact_severe_partition() {
        let truth = synthetic_scene(16, 16, 5);
        let cfg = TurbulenceConfig {
            blur_sigma: 0.0,
            seed: 12,
            ..TurbulenceConfig::default()
        };
        let seq = simulate_sequence(&truth, &cfg).unwrap();
        assert_eq!(seq.severe_indices().len(), 70);
        for (k, &s) in seq.strengths.iter().enumerate() {
            if seq.severe[k] {
                assert!((1.0..=1.5).contains(&s));
            } else {
                assert!((0.2..=0.3).contains(&s));
            }
        }
        // shuffled, not simply the first 70
        assert_ne!(seq.severe_indices(), (0..70).collect::<Vec<_>>());
    }

    #[test]
    fn same_seed_same_stack() {
        let truth = synthetic_scene(24, 24, 6);
        let cfg = TurbulenceConfig {
            n_frames: 8,
            noise_sigma: 0.02,
            seed: 77,
            ..TurbulenceConfig::default()
        };
        let a = simulate_sequence(&truth, &cfg).unwrap();
        let b = simulate_sequence(&truth, &cfg).unwrap();
        assert_eq!(a.stack, b.stack);
        let c = simulate_sequence(&truth, &TurbulenceConfig { seed: 78, ..cfg }).unwrap();
        assert_ne!(a.stack, c.stack);
    }

    #[test]
    fn noisy_preset_pairs_noise_with_severity() {
        let truth = synthetic_scene(16, 16, 7);
        let seq = simulate_sequence(&truth, &TurbulenceConfig::noisy(3, 0.02, 0.1)).unwrap();
        for k in 0..100 {
            let expected = if seq.severe[k] { 0.1 } else { 0.02 };
            assert_eq!(seq.noise_sigmas[k], expected);
        }
    }

    #[test]
    fn severe_frames_score_lower_psnr() {
        let truth = synthetic_scene(64, 64, 8);
        let (mut severe_sum, mut mild_sum) = (0.0, 0.0);
        for seed in 0..20 {
            let cfg = TurbulenceConfig {
                n_frames: 10,
                seed,
                ..TurbulenceConfig::default()
            };
            let seq = simulate_sequence(&truth, &cfg).unwrap();
            let mean_over = |want: bool| {
                let picked: Vec<f64> = (0..10)
                    .filter(|&k| seq.severe[k] == want)
                    .map(|k| psnr(seq.stack.frame(k), &truth).unwrap())
                    .collect();
                picked.iter().sum::<f64>() / picked.len() as f64
            };
            severe_sum += mean_over(true);
            mild_sum += mean_over(false);
        }
        assert!(severe_sum < mild_sum, "{severe_sum} vs {mild_sum}");
    }

    #[test]
    fn blur_lowers_laplacian_norm() {
        let truth = synthetic_scene(48, 48, 9);
        for seed in 0..5 {
            let cfg = TurbulenceConfig {
                blur_sigma: 0.0,
                seed,
                ..TurbulenceConfig::default()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let field = generate_motion_field(48, 48, 1.0, &cfg, &mut rng);
            let warped = warp(&truth, &field).unwrap();
            let blurred = gaussian_blur(&warped, 1.0);
            assert!(laplacian_l1(&blurred) < laplacian_l1(&warped));
        }
    }

    #[test]
    fn key_value_round_trip() {
        let cfg = TurbulenceConfig::noisy(42, 0.01, 0.08);
        let text = cfg.to_key_value();
        let back = TurbulenceConfig::from_key_value(&text).unwrap();
        assert_eq!(
            back,
            TurbulenceConfig {
                smoothing_sigma: Some(cfg.smoothing_sigma()),
                ..cfg
            }
        );
        assert!(TurbulenceConfig::from_key_value("patch_size = 4").is_err());
        assert!(TurbulenceConfig::from_key_value("nonsense = 1").is_err());
    }
}
