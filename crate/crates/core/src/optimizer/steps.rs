//! Block updates of the alternating minimization. Each one is the exact
//! minimizer of the (ridge-regularized) objective in its block with all
//! other blocks held fixed.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{HyperParams, TrainState};
use crate::data::DomainId;
use crate::error::{AthError, Result};
use crate::graph::scale_columns;
use crate::model::BinaryCodes;

/// Normal equations `lhs · A_k = rhs` of the A-step, `lhs` including the
/// ridge.
#[derive(Clone, Debug)]
pub struct AStepSystem {
    pub lhs: DMatrix<f64>,
    pub rhs: DMatrix<f64>,
}

/// `Φ_k + ridge·I` with `Φ_k = X_k(α_k I + β_k L_k + λ D̃)X_kᵀ`, and
/// `rhs = α_k X_k B_kᵀ + λ X_k W̃ Ỹᵀ` where `Ỹ` is the other domain's
/// current mapping and `W̃`, `D̃` are `W_st` (row sums) for the source and
/// `W_stᵀ` (column sums) for the target.
pub fn a_step_system(state: &TrainState, hp: &HyperParams, domain: DomainId) -> AStepSystem {
    let w = state.bipartite.weights();
    let (x, b, alpha, beta, graph) = match domain {
        DomainId::Source => (
            &state.x_s,
            &state.codes_s,
            hp.alpha_s,
            hp.beta_s,
            &state.graph_s,
        ),
        DomainId::Target => (
            &state.x_t,
            &state.codes_t,
            hp.alpha_t,
            hp.beta_t,
            &state.graph_t,
        ),
    };
    let (cross, d_tilde): (DMatrix<f64>, Vec<f64>) = match domain {
        DomainId::Source => {
            let y_t = state.mapped(DomainId::Target);
            (w * y_t.transpose(), w.row_iter().map(|r| r.sum()).collect())
        }
        DomainId::Target => {
            let y_s = state.mapped(DomainId::Source);
            (
                w.tr_mul(&y_s.transpose()),
                w.column_iter().map(|c| c.sum()).collect(),
            )
        }
    };
    let xt = x.transpose();
    let mut lhs = alpha * (x * &xt);
    if beta != 0.0 {
        lhs += beta * graph.laplacian_congruence(x);
    }
    if hp.lambda != 0.0 {
        lhs += hp.lambda * (scale_columns(x, &d_tilde) * &xt);
    }
    for i in 0..lhs.nrows() {
        lhs[(i, i)] += hp.ridge;
    }
    // Symmetrize away round-off before the Cholesky factorization.
    let lhs = 0.5 * (&lhs + lhs.transpose());
    let mut rhs = alpha * (x * b.to_real().transpose());
    if hp.lambda != 0.0 {
        rhs += hp.lambda * (x * cross);
    }
    AStepSystem { lhs, rhs }
}

/// Closed-form projection update for one domain via a Cholesky solve.
pub fn step_a(state: &TrainState, hp: &HyperParams, domain: DomainId) -> Result<DMatrix<f64>> {
    let sys = a_step_system(state, hp, domain);
    let chol = sys.lhs.cholesky().ok_or_else(|| {
        AthError::Solver(format!(
            "A-step system for {domain:?} is not positive definite"
        ))
    })?;
    Ok(chol.solve(&sys.rhs))
}

/// Balanced maximizer of `Σ_j b_j m_j`: `+1` on the `⌊n/2⌋` largest
/// entries (lower index first among equals), `−1` elsewhere.
pub fn balanced_sign_row(m: &[f64]) -> Vec<i8> {
    let mut order: Vec<usize> = (0..m.len()).collect();
    order.sort_by(|&a, &b| m[b].total_cmp(&m[a]).then(a.cmp(&b)));
    let mut out = vec![-1i8; m.len()];
    for &j in &order[..m.len() / 2] {
        out[j] = 1;
    }
    out
}

/// Row-wise balanced codes maximizing `tr(Bᵀ M)`.
pub fn balanced_codes(m: &DMatrix<f64>) -> BinaryCodes {
    let (r, n) = m.shape();
    let rows: Vec<Vec<i8>> = (0..r)
        .into_par_iter()
        .map(|i| {
            let row: Vec<f64> = m.row(i).iter().copied().collect();
            balanced_sign_row(&row)
        })
        .collect();
    BinaryCodes::new(DMatrix::from_fn(r, n, |i, j| rows[i][j])).expect("codes are ±1")
}

/// Codes for one domain from `M_k = α_k A_kᵀ X_k`.
pub fn step_b(state: &TrainState, hp: &HyperParams, domain: DomainId) -> BinaryCodes {
    let alpha = match domain {
        DomainId::Source => hp.alpha_s,
        DomainId::Target => hp.alpha_t,
    };
    balanced_codes(&(alpha * state.mapped(domain)))
}
