//! W-step: per-row Euclidean projection onto the probability simplex, and
//! the automatic choice of the regularization weight γ.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{AthError, Result};

/// Stand-in when every per-row γ vanishes.
pub const GAMMA_FLOOR: f64 = 1e-8;

/// Regularization weight of the bipartite term: one value shared by all
/// rows, or one per row.
#[derive(Clone, Debug, PartialEq)]
pub enum Gamma {
    Shared(f64),
    PerRow(Vec<f64>),
}

impl Gamma {
    pub fn row(&self, i: usize) -> f64 {
        match self {
            Gamma::Shared(g) => *g,
            Gamma::PerRow(v) => v[i],
        }
    }

    /// Scalar summary: the shared value, or the mean of the per-row values.
    pub fn mean(&self) -> f64 {
        match self {
            Gamma::Shared(g) => *g,
            Gamma::PerRow(v) if v.is_empty() => 0.0,
            Gamma::PerRow(v) => v.iter().sum::<f64>() / v.len() as f64,
        }
    }
}

fn ascending_order(f: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..f.len()).collect();
    order.sort_by(|&a, &b| f[a].total_cmp(&f[b]).then(a.cmp(&b)));
    order
}

/// Minimizer of `‖w + (λ/2γ) f‖²` over `{w ≥ 0, Σw = 1}`.
///
/// Sorts `f` ascending and keeps the largest prefix `k` whose threshold
/// `φ_k = (1 + Σ_{j≤k} c f̃_j) / k` still exceeds `c f̃_k`, with
/// `c = λ / (2γ)`. Entries outside the prefix are exactly zero.
pub fn step_w_row(f: &[f64], lambda: f64, gamma: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n > 0, "empty row");
    assert!(gamma > 0.0, "gamma must be positive");
    let c = lambda / (2.0 * gamma);
    let order = ascending_order(f);

    let mut support = 1;
    let mut support_sum = c * f[order[0]];
    let mut prefix = 0.0;
    for (k, &j) in order.iter().enumerate() {
        let v = c * f[j];
        prefix += v;
        let count = (k + 1) as f64;
        // count·(φ_k − c f̃_k), positive while entry k stays active.
        let slack = 1.0 + prefix - count * v;
        if slack > 1e-12 * (1.0 + count * v.abs()) {
            support = k + 1;
            support_sum = prefix;
        }
    }
    let phi = (1.0 + support_sum) / support as f64;
    let mut w = vec![0.0; n];
    for &j in &order[..support] {
        w[j] = (phi - c * f[j]).max(0.0);
    }
    w
}

/// Row-wise W-step for a full `n_s × n_t` distance matrix.
pub fn step_w(f_st: &DMatrix<f64>, lambda: f64, gamma: &Gamma) -> DMatrix<f64> {
    let (ns, nt) = f_st.shape();
    let rows: Vec<Vec<f64>> = (0..ns)
        .into_par_iter()
        .map(|i| {
            let row: Vec<f64> = f_st.row(i).iter().copied().collect();
            step_w_row(&row, lambda, gamma.row(i))
        })
        .collect();
    DMatrix::from_fn(ns, nt, |i, j| rows[i][j])
}

/// γ that makes each row's W-step solution have exactly `eta` nonzeros:
/// `γ_i = (λη/2) f̃_{η+1} − (λ/2) Σ_{j≤η} f̃_j` on the ascending row.
///
/// Vanishing `γ_i` (ties among the first `η+1` sorted values) are replaced
/// by the smallest positive `γ_j` of the batch, or [`GAMMA_FLOOR`]. With
/// `per_row = false` the mean of the per-row values is returned.
pub fn compute_gamma(f_st: &DMatrix<f64>, lambda: f64, eta: usize, per_row: bool) -> Result<Gamma> {
    let nt = f_st.ncols();
    if eta == 0 || eta >= nt {
        return Err(AthError::InvalidArgument(format!(
            "bipartite neighbor count {eta} must lie in [1, {})",
            nt
        )));
    }
    let mut raw: Vec<f64> = (0..f_st.nrows())
        .into_par_iter()
        .map(|i| {
            let mut row: Vec<f64> = f_st.row(i).iter().copied().collect();
            row.sort_by(f64::total_cmp);
            let head: f64 = row[..eta].iter().sum();
            0.5 * lambda * (eta as f64 * row[eta] - head)
        })
        .collect();
    let substitute = raw
        .iter()
        .copied()
        .filter(|&g| g > 0.0)
        .min_by(f64::total_cmp)
        .unwrap_or(GAMMA_FLOOR);
    for g in &mut raw {
        if *g <= 0.0 {
            *g = substitute;
        }
    }
    if per_row {
        Ok(Gamma::PerRow(raw))
    } else {
        let mean = raw.iter().sum::<f64>() / raw.len().max(1) as f64;
        Ok(Gamma::Shared(if mean > 0.0 { mean } else { GAMMA_FLOOR }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Projection onto the simplex by exhaustive support enumeration: for
    /// every nonempty support the equality-constrained minimizer is
    /// `w_S = v_S + (1 − Σ v_S)/|S|`; keep feasible ones and pick the
    /// lowest objective.
    pub(crate) fn oracle_projection(v: &[f64]) -> Vec<f64> {
        let n = v.len();
        let mut best = (f64::INFINITY, vec![0.0; n]);
        for mask in 1u32..(1 << n) {
            let idx: Vec<usize> = (0..n).filter(|&j| mask & (1 << j) != 0).collect();
            let shift = (1.0 - idx.iter().map(|&j| v[j]).sum::<f64>()) / idx.len() as f64;
            let mut w = vec![0.0; n];
            let mut feasible = true;
            for &j in &idx {
                w[j] = v[j] + shift;
                if w[j] < -1e-15 {
                    feasible = false;
                }
            }
            if !feasible {
                continue;
            }
            let obj: f64 = (0..n).map(|j| (w[j] - v[j]).powi(2)).sum();
            if obj < best.0 {
                best = (obj, w);
            }
        }
        best.1
    }

    fn check(f: &[f64], lambda: f64, gamma: f64, expect: &[f64]) {
        let w = step_w_row(f, lambda, gamma);
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{w:?} vs {expect:?}");
        }
    }

    #[test]
    fn oracle_agrees_on_worked_rows() {
        let o = oracle_projection(&[0.0, -1.0, -2.0]);
        assert!((o[0] - 1.0).abs() < 1e-12 && o[1].abs() < 1e-12 && o[2].abs() < 1e-12);
        let o = oracle_projection(&[0.0, 0.0, -2.0]);
        assert!((o[0] - 0.5).abs() < 1e-12 && (o[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn worked_rows() {
        check(&[0.0, 1.0, 2.0], 1.0, 0.5, &[1.0, 0.0, 0.0]);
        check(&[0.0, 0.0, 4.0], 1.0, 1.0, &[0.5, 0.5, 0.0]);
        check(&[3.0; 4], 1.0, 1.0, &[0.25; 4]);
    }

    #[test]
    fn zero_lambda_is_uniform() {
        check(&[5.0, 0.0, 1.0], 0.0, 1.0, &[1.0 / 3.0; 3]);
    }

    #[test]
    fn gamma_examples() {
        let f = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 2.0]);
        assert_eq!(
            compute_gamma(&f, 1.0, 1, true).unwrap(),
            Gamma::PerRow(vec![0.5])
        );
        assert_eq!(
            compute_gamma(&f, 2.0, 1, true).unwrap(),
            Gamma::PerRow(vec![1.0])
        );
        // Row 2 (unsorted) gives (1/2)(3) − (1/2)(0) = 1.5.
        let f = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 2.0, 3.0, 0.0, 9.0]);
        assert_eq!(
            compute_gamma(&f, 1.0, 1, false).unwrap(),
            Gamma::Shared(1.0)
        );
    }

    #[test]
    fn gamma_zero_substitution() {
        let f = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 0.0, 1.0, 2.0]);
        assert_eq!(
            compute_gamma(&f, 1.0, 1, true).unwrap(),
            Gamma::PerRow(vec![0.5, 0.5])
        );
        let f = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        assert_eq!(
            compute_gamma(&f, 1.0, 2, true).unwrap(),
            Gamma::PerRow(vec![GAMMA_FLOOR])
        );
    }

    #[test]
    fn gamma_eta_range() {
        let f = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 2.0]);
        assert!(compute_gamma(&f, 1.0, 0, true).is_err());
        assert!(compute_gamma(&f, 1.0, 3, true).is_err());
    }

    #[test]
    fn per_row_gamma_gives_eta_nonzeros() {
        let f = DMatrix::from_row_slice(1, 6, &[0.7, 0.1, 2.5, 1.3, 0.4, 3.3]);
        for eta in 1..6 {
            let g = compute_gamma(&f, 1.0, eta, true).unwrap();
            let row: Vec<f64> = f.row(0).iter().copied().collect();
            let w = step_w_row(&row, 1.0, g.row(0));
            assert_eq!(w.iter().filter(|&&v| v > 0.0).count(), eta);
        }
    }

    proptest::proptest! {
        #[test]
        fn matches_exhaustive_projection(
            f in proptest::collection::vec(0.0f64..10.0, 1..9),
            lambda in 0.01f64..10.0,
            gamma in 0.05f64..5.0,
        ) {
            let w = step_w_row(&f, lambda, gamma);
            let c = lambda / (2.0 * gamma);
            let v: Vec<f64> = f.iter().map(|x| -c * x).collect();
            let o = oracle_projection(&v);
            for (a, b) in w.iter().zip(&o) {
                proptest::prop_assert!((a - b).abs() < 1e-8);
            }
            proptest::prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            proptest::prop_assert!(w.iter().all(|&x| x >= 0.0));
        }
    }
}
