use crate::error::{AthError, Result};
use crate::model::Variant;

/// Weights and schedule of the alternating minimization.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperParams {
    /// Fit weight of the source codes.
    pub alpha_s: f64,
    pub alpha_t: f64,
    /// Structure-preserving weight of the source graph.
    pub beta_s: f64,
    pub beta_t: f64,
    /// Cross-domain weight.
    pub lambda: f64,
    /// Target nonzeros per row of the learned bipartite graph.
    pub eta_bipartite: usize,
    pub eta_knn_s: usize,
    pub eta_knn_t: usize,
    /// Zero runs the initialization only.
    pub max_iters: usize,
    /// Ridge added to the A-step normal equations.
    pub ridge: f64,
    pub rel_tol: f64,
    pub code_length: usize,
    pub per_row_gamma: bool,
}

impl HyperParams {
    /// Per-variant weights `(α_s, α_t, β_s, β_t, λ)` from the reference
    /// experiments, 10 neighbors, 10 iterations.
    pub fn defaults(variant: Variant, code_length: usize) -> Self {
        let (alpha_s, alpha_t, beta_s, beta_t, lambda) = match variant {
            Variant::U => (1e-2, 1e-1, 1e-3, 1e-1, 1.0),
            Variant::M => (1e-1, 1e-1, 1e3, 1e-2, 1.0),
            Variant::K => (1e-2, 1.0, 1e-3, 1e-3, 1e-2),
            Variant::S => (1e-3, 1e-1, 1e-2, 1e-2, 1e-2),
        };
        HyperParams {
            alpha_s,
            alpha_t,
            beta_s,
            beta_t,
            lambda,
            eta_bipartite: 10,
            eta_knn_s: 10,
            eta_knn_t: 10,
            max_iters: 10,
            ridge: 1e-4,
            rel_tol: 1e-5,
            code_length,
            per_row_gamma: false,
        }
    }

    /// Checks the weights; sizes are checked against the data by `train`.
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f64, positive: bool| -> Result<()> {
            let ok = v.is_finite() && if positive { v > 0.0 } else { v >= 0.0 };
            if ok {
                Ok(())
            } else {
                let need = if positive { "positive" } else { "non-negative" };
                Err(AthError::InvalidArgument(format!(
                    "{name} must be finite and {need}, got {v}"
                )))
            }
        };
        check("alpha_s", self.alpha_s, true)?;
        check("alpha_t", self.alpha_t, true)?;
        check("beta_s", self.beta_s, false)?;
        check("beta_t", self.beta_t, false)?;
        check("lambda", self.lambda, false)?;
        check("ridge", self.ridge, true)?;
        check("rel_tol", self.rel_tol, true)?;
        if self.code_length == 0 {
            return Err(AthError::InvalidArgument(
                "code length must be at least 1".into(),
            ));
        }
        if self.eta_bipartite == 0 || self.eta_knn_s == 0 || self.eta_knn_t == 0 {
            return Err(AthError::InvalidArgument(
                "neighbor counts must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn validate_sizes(&self, n_s: usize, n_t: usize, variant: Variant) -> Result<()> {
        if variant.learns_bipartite() && self.eta_bipartite >= n_t {
            return Err(AthError::InvalidArgument(format!(
                "eta_bipartite {} must be below n_t = {n_t}",
                self.eta_bipartite
            )));
        }
        if variant == Variant::U && self.eta_knn_s >= n_s {
            return Err(AthError::InvalidArgument(format!(
                "eta_knn_s {} must be below n_s = {n_s}",
                self.eta_knn_s
            )));
        }
        if matches!(variant, Variant::U | Variant::M) && self.eta_knn_t >= n_t {
            return Err(AthError::InvalidArgument(format!(
                "eta_knn_t {} must be below n_t = {n_t}",
                self.eta_knn_t
            )));
        }
        Ok(())
    }
}
