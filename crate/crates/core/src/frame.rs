//! Frame stacks, subsample index sets and the column-stacked matrix view.
//!
//! A frame is an `r × s` matrix of intensities in `[0, 1]`. A stack of `n`
//! frames can be viewed as an `rs × n` matrix whose `k`-th column is frame `k`
//! flattened in column-major order, which is also nalgebra's storage order.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A single grayscale frame, `rows × cols`.
pub type Frame = DMatrix<f64>;

/// An ordered, non-empty sequence of equally sized frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    frames: Vec<Frame>,
    rows: usize,
    cols: usize,
}

impl FrameStack {
    /// Builds a stack, checking shape agreement and the `[0, 1]` range.
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        let first = frames.first().ok_or(Error::EmptyStack)?;
        let (rows, cols) = first.shape();
        if rows == 0 || cols == 0 {
            return Err(Error::ShapeMismatch("frames must be at least 1x1".into()));
        }
        for (index, frame) in frames.iter().enumerate() {
            if frame.shape() != (rows, cols) {
                return Err(Error::DimensionMismatch {
                    index,
                    expected: (rows, cols),
                    found: frame.shape(),
                });
            }
            if let Some(&value) = frame.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                if !value.is_finite() {
                    return Err(Error::NonFinite);
                }
                return Err(Error::IntensityOutOfRange { frame: index, value });
            }
        }
        Ok(Self { frames, rows, cols })
    }

    /// Rebuilds a stack from its `rs × n` matrix view.
    pub fn from_matrix(matrix: &DMatrix<f64>, rows: usize, cols: usize) -> Result<Self> {
        if matrix.nrows() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "matrix has {} rows, expected {}x{}={}",
                matrix.nrows(),
                rows,
                cols,
                rows * cols
            )));
        }
        let frames = matrix
            .column_iter()
            .map(|c| Frame::from_column_slice(rows, cols, c.as_slice()))
            .collect();
        Self::new(frames)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame(&self, k: usize) -> &Frame {
        &self.frames[k]
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    /// The `rs × n` matrix whose column `k` is frame `k` in column-major order.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        stack_matrix(&self.frames, self.rows * self.cols)
    }

    /// The `rs × |J|` matrix of the selected frames, in subsample order.
    pub fn subsample_matrix(&self, subset: &SubsampleSet) -> DMatrix<f64> {
        let selected: Vec<Frame> = subset.iter().map(|k| self.frames[k].clone()).collect();
        stack_matrix(&selected, self.rows * self.cols)
    }

    /// Pixelwise mean of the frames in `subset`.
    pub fn temporal_mean(&self, subset: &SubsampleSet) -> Result<Frame> {
        if subset.is_empty() {
            return Err(Error::EmptySubsample);
        }
        subset.check_for(self.len())?;
        let mut sum = Frame::zeros(self.rows, self.cols);
        for k in subset.iter() {
            sum += &self.frames[k];
        }
        sum /= subset.len() as f64;
        // Rounding can push a mean of values in [0, 1] a hair outside.
        sum.apply(|v| *v = v.clamp(0.0, 1.0));
        Ok(sum)
    }

    /// Pixelwise mean of all frames, the initializer of the mean-based models.
    pub fn full_mean(&self) -> Frame {
        self.temporal_mean(&SubsampleSet::full(self.len()))
            .expect("a stack is never empty")
    }
}

fn stack_matrix(frames: &[Frame], len: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(len, frames.len());
    for (k, f) in frames.iter().enumerate() {
        m.column_mut(k).copy_from_slice(f.as_slice());
    }
    m
}

/// Reshapes one column of a stacked matrix back into a frame.
pub fn column_to_frame(matrix: &DMatrix<f64>, k: usize, rows: usize, cols: usize) -> Frame {
    Frame::from_column_slice(rows, cols, matrix.column(k).as_slice())
}

/// Pixelwise mean of the columns of a stacked matrix, reshaped to a frame.
pub fn column_mean(matrix: &DMatrix<f64>, rows: usize, cols: usize) -> Frame {
    let n = matrix.ncols().max(1) as f64;
    let mean = matrix.column_sum() / n;
    Frame::from_column_slice(rows, cols, mean.as_slice())
}

/// Squared Euclidean distance between two equally sized frames, summed over pixels.
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// A subsample `J`: strictly increasing, zero-based frame indices.
///
/// Indices are zero-based in the library; the command-line tools report them
/// one-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SubsampleSet {
    indices: Vec<usize>,
}

impl SubsampleSet {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptySubsample);
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::UnsortedIndices);
        }
        Ok(Self { indices })
    }

    /// Builds a subsample from indices in any order, sorting and deduplicating.
    pub fn from_unsorted(mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        Self::new(indices)
    }

    /// Every frame of an `n`-frame stack.
    pub fn full(n: usize) -> Self {
        Self {
            indices: (0..n).collect(),
        }
    }

    pub fn check_for(&self, n: usize) -> Result<()> {
        match self.indices.last() {
            Some(&last) if last >= n => Err(Error::IndexOutOfRange { index: last, len: n }),
            _ => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.indices.binary_search(&k).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.indices.iter().map(|k| k + 1).collect()
    }
}
