//! Full-reference image quality: PSNR and SSIM, both with peak value 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;

const K1: f64 = 0.01;
const K2: f64 = 0.03;
const WINDOW: usize = 11;
const WINDOW_SIGMA: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// `+inf` for an exact match.
    pub psnr_db: f64,
    pub ssim: f64,
    pub elapsed_seconds: Option<f64>,
}

fn check_shapes(a: &Frame, b: &Frame) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    if a.is_empty() {
        return Err(Error::ShapeMismatch("empty image".into()));
    }
    Ok(())
}

pub fn mse(a: &Frame, b: &Frame) -> Result<f64> {
    check_shapes(a, b)?;
    Ok(a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

/// `10 log10(1 / mse)` in dB.
pub fn psnr(a: &Frame, b: &Frame) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-10.0 * m.log10())
}

fn gaussian_window(size: usize) -> Vec<f64> {
    let half = (size / 2) as f64;
    let w: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp()
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Valid-mode separable filtering with a 1-D kernel along both axes.
fn filter_valid(f: &Frame, w: &[f64]) -> Frame {
    let k = w.len();
    let (r, s) = f.shape();
    let (ro, so) = (r + 1 - k, s + 1 - k);
    let h = Frame::from_fn(r, so, |i, j| (0..k).map(|t| w[t] * f[(i, j + t)]).sum());
    Frame::from_fn(ro, so, |i, j| (0..k).map(|t| w[t] * h[(i + t, j)]).sum())
}

/// Mean SSIM over all fully contained windows. The 11x11 Gaussian window
/// (sigma 1.5) shrinks to the largest odd size that fits small images.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64> {
    check_shapes(a, b)?;
    let (r, s) = a.shape();
    let mut size = WINDOW.min(r).min(s);
    if size % 2 == 0 {
        size -= 1;
    }
    let w = gaussian_window(size);
    let c1 = (K1 * 1.0).powi(2);
    let c2 = (K2 * 1.0).powi(2);
    let mu_a = filter_valid(a, &w);
    let mu_b = filter_valid(b, &w);
    let aa = filter_valid(&a.component_mul(a), &w);
    let bb = filter_valid(&b.component_mul(b), &w);
    let ab = filter_valid(&a.component_mul(b), &w);
    let mut total = 0.0;
    for idx in 0..mu_a.len() {
        let (ma, mb) = (mu_a[idx], mu_b[idx]);
        let va = aa[idx] - ma * ma;
        let vb = bb[idx] - mb * mb;
        let cov = ab[idx] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

pub fn evaluate(restored: &Frame, truth: &Frame, elapsed_seconds: Option<f64>) -> Result<MetricReport> {
    Ok(MetricReport {
        psnr_db: psnr(restored, truth)?,
        ssim: ssim(restored, truth)?,
        elapsed_seconds,
    })
}
