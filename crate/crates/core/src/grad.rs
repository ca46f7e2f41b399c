//! Forward differences with replicate boundaries and their adjoints.
//!
//! `x` runs along columns, `y` along rows. The difference across the last
//! column (row) is zero, so the adjoints ignore the last column (row) of
//! their argument.

use crate::frame::Frame;

pub fn grad_x(f: &Frame) -> Frame {
    let (r, s) = f.shape();
    Frame::from_fn(r, s, |i, j| if j + 1 < s { f[(i, j + 1)] - f[(i, j)] } else { 0.0 })
}

pub fn grad_y(f: &Frame) -> Frame {
    let (r, s) = f.shape();
    Frame::from_fn(r, s, |i, j| if i + 1 < r { f[(i + 1, j)] - f[(i, j)] } else { 0.0 })
}

/// Adjoint of [`grad_x`].
pub fn grad_x_adjoint(p: &Frame) -> Frame {
    let (r, s) = p.shape();
    Frame::from_fn(r, s, |i, j| {
        let left = if j >= 1 { p[(i, j - 1)] } else { 0.0 };
        let here = if j + 1 < s { p[(i, j)] } else { 0.0 };
        left - here
    })
}

/// Adjoint of [`grad_y`].
pub fn grad_y_adjoint(p: &Frame) -> Frame {
    let (r, s) = p.shape();
    Frame::from_fn(r, s, |i, j| {
        let up = if i >= 1 { p[(i - 1, j)] } else { 0.0 };
        let here = if i + 1 < r { p[(i, j)] } else { 0.0 };
        up - here
    })
}

/// `grad_x^T grad_x + grad_y^T grad_y`, the positive semidefinite Neumann Laplacian.
pub fn neumann_laplacian(f: &Frame) -> Frame {
    grad_x_adjoint(&grad_x(f)) + grad_y_adjoint(&grad_y(f))
}
