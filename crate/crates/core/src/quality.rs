//! Per-frame quality measures.
//!
//! Two measures are used: a sharpness score built from the L¹ norm of the
//! Laplacian (smaller is sharper after normalization) and the total variation
//! of the frame (smaller is less noisy).

use serde::{Deserialize, Serialize};

use crate::frame::Frame;
use crate::grad::{grad_x, grad_y};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TvVariant {
    Aniso,
    Iso,
}

/// `sum |lap(f)|` with the 5-point stencil and replicated borders.
pub fn laplacian_l1(f: &Frame) -> f64 {
    let (r, s) = f.shape();
    let at = |i: isize, j: isize| {
        let i = i.clamp(0, r as isize - 1) as usize;
        let j = j.clamp(0, s as isize - 1) as usize;
        f[(i, j)]
    };
    let mut total = 0.0;
    for j in 0..s as isize {
        for i in 0..r as isize {
            let lap = at(i - 1, j) + at(i + 1, j) + at(i, j - 1) + at(i, j + 1) - 4.0 * at(i, j);
            total += lap.abs();
        }
    }
    total
}

/// Maps raw Laplacian norms to `[0, 1]`: the largest (sharpest) goes to 0 and
/// the smallest to 1.
///
/// A sequence whose frames all score the same yields all zeros.
pub fn normalize_sharpness(raw: &[f64]) -> Vec<f64> {
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let span = max - min;
    if !(span > 0.0) {
        if raw.len() > 1 {
            log::warn!("all frames share the same sharpness; quality term is constant");
        }
        return vec![0.0; raw.len()];
    }
    raw.iter().map(|&v| ((max - v) / span).clamp(0.0, 1.0)).collect()
}

/// Normalized sharpness quality of every frame.
pub fn sharpness_quality(frames: &[Frame]) -> Vec<f64> {
    let raw: Vec<f64> = frames.iter().map(laplacian_l1).collect();
    normalize_sharpness(&raw)
}

/// Total variation from forward differences with replicated borders.
pub fn tv_value(f: &Frame, variant: TvVariant) -> f64 {
    let gx = grad_x(f);
    let gy = grad_y(f);
    match variant {
        TvVariant::Aniso => gx.iter().chain(gy.iter()).map(|v| v.abs()).sum(),
        TvVariant::Iso => gx.iter().zip(gy.iter()).map(|(a, b)| a.hypot(*b)).sum(),
    }
}

/// Unnormalized TV quality of every frame.
pub fn tv_quality(frames: &[Frame], variant: TvVariant) -> Vec<f64> {
    frames.iter().map(|f| tv_value(f, variant)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(r: usize, s: usize, seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Frame::from_fn(r, s, |_, _| rng.random::<f64>())
    }

    fn naive_laplacian_l1(f: &Frame) -> f64 {
        let (r, s) = f.shape();
        let kernel = [[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]];
        let mut total = 0.0;
        for i in 0..r {
            for j in 0..s {
                let mut acc = 0.0;
                for (di, row) in kernel.iter().enumerate() {
                    for (dj, w) in row.iter().enumerate() {
                        let ii = (i as isize + di as isize - 1).max(0).min(r as isize - 1);
                        let jj = (j as isize + dj as isize - 1).max(0).min(s as isize - 1);
                        acc += w * f[(ii as usize, jj as usize)];
                    }
                }
                total += f64::abs(acc);
            }
        }
        total
    }

    fn gaussian_blur3(f: &Frame) -> Frame {
        let w = [0.25, 0.5, 0.25];
        let (r, s) = f.shape();
        let clamp = |v: isize, n: usize| v.max(0).min(n as isize - 1) as usize;
        let h = Frame::from_fn(r, s, |i, j| {
            (0..3).map(|d| w[d] * f[(i, clamp(j as isize + d as isize - 1, s))]).sum()
        });
        Frame::from_fn(r, s, |i, j| {
            (0..3).map(|d| w[d] * h[(clamp(i as isize + d as isize - 1, r), j)]).sum()
        })
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        assert_eq!(laplacian_l1(&Frame::from_element(7, 5, 0.42)), 0.0);
    }

    #[test]
    fn laplacian_of_impulse_is_eight() {
        let mut f = Frame::zeros(5, 5);
        f[(2, 2)] = 1.0;
        assert_eq!(laplacian_l1(&f), 8.0);
    }

    #[test]
    fn laplacian_matches_naive_convolution() {
        let f = random(16, 16, 3);
        assert!((laplacian_l1(&f) - naive_laplacian_l1(&f)).abs() < 1e-12);
        let f = random(1, 9, 4);
        assert!((laplacian_l1(&f) - naive_laplacian_l1(&f)).abs() < 1e-12);
    }

    #[test]
    fn normalization_endpoints_and_midpoint() {
        assert_eq!(normalize_sharpness(&[10.0, 4.0, 7.0]), vec![0.0, 1.0, 0.5]);
    }

    #[test]
    fn normalization_of_single_or_equal_values_is_zero() {
        assert_eq!(normalize_sharpness(&[3.0]), vec![0.0]);
        assert_eq!(normalize_sharpness(&[2.0, 2.0, 2.0]), vec![0.0; 3]);
    }

    #[test]
    fn tv_of_constant_is_zero() {
        let c = Frame::from_element(4, 6, 0.8);
        assert_eq!(tv_value(&c, TvVariant::Aniso), 0.0);
        assert_eq!(tv_value(&c, TvVariant::Iso), 0.0);
    }

    #[test]
    fn tv_of_vertical_edge() {
        let f = Frame::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(tv_value(&f, TvVariant::Aniso), 2.0);
        assert_eq!(tv_value(&f, TvVariant::Iso), 2.0);
    }

    #[test]
    fn blurred_copy_scores_worse_quality() {
        for seed in 0..10 {
            let f = random(24, 24, seed);
            let blurred = gaussian_blur3(&f);
            let q = sharpness_quality(&[f, blurred]);
            assert!(q[1] > q[0]);
        }
    }

    proptest! {
        #[test]
        fn tv_norm_equivalence(seed in 0u64..1000, r in 1usize..12, s in 1usize..12) {
            let f = random(r, s, seed);
            let iso = tv_value(&f, TvVariant::Iso);
            let aniso = tv_value(&f, TvVariant::Aniso);
            prop_assert!(iso <= aniso + 1e-12);
            prop_assert!(aniso <= std::f64::consts::SQRT_2 * iso + 1e-12);
        }

        #[test]
        fn normalization_reverses_order(raw in proptest::collection::vec(0.0f64..1e4, 2..20)) {
            let q = normalize_sharpness(&raw);
            for a in 0..raw.len() {
                for b in 0..raw.len() {
                    if raw[a] < raw[b] {
                        prop_assert!(q[a] > q[b]);
                    }
                }
            }
        }

        #[test]
        fn normalization_is_affine_invariant(
            raw in proptest::collection::vec(0.0f64..1e3, 2..20),
            shift in -1e3f64..1e3,
            scale in 0.01f64..100.0,
        ) {
            let a = normalize_sharpness(&raw);
            let moved: Vec<f64> = raw.iter().map(|v| v * scale + shift).collect();
            let b = normalize_sharpness(&moved);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn interior_measures_are_shift_covariant(seed in 0u64..500, dj in 1usize..4) {
            // Zero-padded pattern shifted inside a larger canvas: borders stay flat,
            // so the measures do not see the boundary.
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let patch = Frame::from_fn(6, 6, |_, _| rng.random::<f64>());
            let place = |off: usize| {
                let mut canvas = Frame::zeros(16, 16);
                canvas.view_mut((5, 3 + off), (6, 6)).copy_from(&patch);
                canvas
            };
            let a = place(0);
            let b = place(dj);
            prop_assert!((laplacian_l1(&a) - laplacian_l1(&b)).abs() < 1e-9);
            prop_assert!((tv_value(&a, TvVariant::Aniso) - tv_value(&b, TvVariant::Aniso)).abs() < 1e-9);
            prop_assert!((tv_value(&a, TvVariant::Iso) - tv_value(&b, TvVariant::Iso)).abs() < 1e-9);
        }
    }
}
