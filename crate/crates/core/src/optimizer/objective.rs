use nalgebra::DMatrix;

use super::{Gamma, HyperParams, TrainState};
use crate::data::DomainId;
use crate::graph::squared_distances;

/// Objective value split by term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveTerms {
    /// `Σ_k α_k ‖B_k − f_k(X_k)‖²`.
    pub fit: f64,
    /// `λ Σ_ij F_st,ij W_st,ij + γ‖W_st‖²` (per-row γ weights each row).
    pub cross: f64,
    /// `Σ_k (β_k/2) Σ_ij F_k,ij W_k,ij`.
    pub structure: f64,
    /// `ridge · Σ_k ‖A_k‖²`.
    pub ridge: f64,
    /// Scalar γ in effect (mean of per-row values).
    pub gamma: f64,
}

impl ObjectiveTerms {
    /// `J` without the ridge penalty.
    pub fn j(&self) -> f64 {
        self.fit + self.cross + self.structure
    }

    /// `J` plus the ridge penalty, the quantity the block updates descend.
    pub fn regularized(&self) -> f64 {
        self.j() + self.ridge
    }
}

/// `F_st,ij = ‖f_s(x_s,i) − f_t(x_t,j)‖²` for the current projections.
pub fn cross_distances(state: &TrainState) -> DMatrix<f64> {
    squared_distances(
        &state.mapped(DomainId::Source),
        &state.mapped(DomainId::Target),
    )
}

pub fn objective(state: &TrainState, hp: &HyperParams) -> ObjectiveTerms {
    let y_s = state.mapped(DomainId::Source);
    let y_t = state.mapped(DomainId::Target);

    let fit = hp.alpha_s * (state.codes_s.to_real() - &y_s).norm_squared()
        + hp.alpha_t * (state.codes_t.to_real() - &y_t).norm_squared();

    let w = state.bipartite.weights();
    let mut cross = 0.0;
    if hp.lambda != 0.0 {
        let f = squared_distances(&y_s, &y_t);
        cross += hp.lambda * f.component_mul(w).sum();
    }
    cross += match state.bipartite.gamma() {
        Gamma::Shared(g) => g * w.norm_squared(),
        Gamma::PerRow(g) => w
            .row_iter()
            .zip(g)
            .map(|(row, gi)| gi * row.norm_squared())
            .sum(),
    };

    let structure = 0.5 * hp.beta_s * state.graph_s.smoothness(&y_s)
        + 0.5 * hp.beta_t * state.graph_t.smoothness(&y_t);

    let ridge = hp.ridge
        * (state.model.source_fn().projection().norm_squared()
            + state.model.target_fn().projection().norm_squared());

    ObjectiveTerms {
        fit,
        cross,
        structure,
        ridge,
        gamma: state.bipartite.gamma().mean(),
    }
}
