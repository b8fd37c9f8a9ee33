use nalgebra::{DMatrix, DVector, DVectorView};
use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{AthError, Result};
use crate::graph::squared_distances;

/// Gaussian similarity features against a fixed set of anchor points:
/// `φ_j(x) = exp(−‖x − χ_j‖² / σ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMap {
    anchors: DMatrix<f64>,
    sigma: f64,
}

/// How the kernel width is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SigmaMode {
    /// Median squared distance over 1,000 random (sample, anchor) pairs.
    Median,
    Fixed(f64),
}

const SIGMA_PAIRS: usize = 1000;

impl KernelMap {
    pub fn new(anchors: DMatrix<f64>, sigma: f64) -> Result<Self> {
        if anchors.ncols() == 0 {
            return Err(AthError::InvalidArgument(
                "kernel map needs at least one anchor".into(),
            ));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(AthError::InvalidArgument(format!(
                "kernel width must be positive, got {sigma}"
            )));
        }
        if anchors.iter().any(|v| !v.is_finite()) {
            return Err(AthError::InvalidArgument("anchors must be finite".into()));
        }
        Ok(KernelMap { anchors, sigma })
    }

    /// Draws `m` anchors from the columns of `x` without replacement.
    pub fn sample(
        x: &DMatrix<f64>,
        m: usize,
        sigma: SigmaMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if m == 0 || m > x.ncols() {
            return Err(AthError::InvalidArgument(format!(
                "anchor count {m} must lie in [1, {}]",
                x.ncols()
            )));
        }
        let mut picks = index::sample(rng, x.ncols(), m).into_vec();
        picks.sort_unstable();
        let anchors = x.select_columns(&picks);
        let sigma = match sigma {
            SigmaMode::Fixed(s) => s,
            SigmaMode::Median => median_sigma(x, &anchors, rng),
        };
        KernelMap::new(anchors, sigma)
    }

    pub fn anchors(&self) -> &DMatrix<f64> {
        &self.anchors
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn input_dim(&self) -> usize {
        self.anchors.nrows()
    }

    pub fn anchor_count(&self) -> usize {
        self.anchors.ncols()
    }

    pub fn features(&self, x: DVectorView<'_, f64>) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(AthError::Dimension(format!(
                "kernel input has length {}, anchors have dimension {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(DVector::from_iterator(
            self.anchor_count(),
            self.anchors
                .column_iter()
                .map(|a| (-(a - x).norm_squared() / self.sigma).exp()),
        ))
    }

    /// Kernel features of every column: an `m × n` matrix.
    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.input_dim() {
            return Err(AthError::Dimension(format!(
                "data has dimension {}, anchors have dimension {}",
                x.nrows(),
                self.input_dim()
            )));
        }
        let d2 = squared_distances(&self.anchors, x);
        Ok(d2.map(|v| (-v / self.sigma).exp()))
    }
}

fn median_sigma(x: &DMatrix<f64>, anchors: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> f64 {
    let mut d: Vec<f64> = (0..SIGMA_PAIRS)
        .map(|_| {
            let i = rng.random_range(0..x.ncols());
            let j = rng.random_range(0..anchors.ncols());
            (x.column(i) - anchors.column(j)).norm_squared()
        })
        .collect();
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let median = if d.len().is_multiple_of(2) {
        0.5 * (d[mid - 1] + d[mid])
    } else {
        d[mid]
    };
    if median > 0.0 {
        return median;
    }
    // Mostly duplicated data: fall back to the mean, then to 1.
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    if mean > 0.0 {
        mean
    } else {
        1.0
    }
}
