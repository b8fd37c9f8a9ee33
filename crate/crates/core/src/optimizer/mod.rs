//! Alternating minimization of the joint objective
//!
//! ```text
//! J = Σ_k α_k ‖B_k − A_kᵀX_k‖²_F                      (code fit)
//!   + λ Σ_ij F_st,ij W_st,ij + γ ‖W_st‖²_F            (cross-domain)
//!   + Σ_k (β_k/2) Σ_ij F_k,ij W_k,ij                  (domain structure)
//! ```
//!
//! over the projections `A_s`, `A_t`, the balanced codes `B_s`, `B_t` and
//! the row-stochastic bipartite graph `W_st`. Each pass updates
//! `A_s, A_t, B_s, B_t, W_st` in that order with exact block minimizers.
//!
//! The A-step solves ridge-regularized normal equations, so the quantity
//! every block update provably does not increase is `J + ridge·Σ_k ‖A_k‖²`;
//! that is what [`TrainState::objective_trace`] records.

mod objective;
mod params;
mod simplex;
mod steps;

pub use objective::{cross_distances, objective, ObjectiveTerms};
pub use params::HyperParams;
pub use simplex::{compute_gamma, step_w, step_w_row, Gamma, GAMMA_FLOOR};
pub use steps::{a_step_system, balanced_codes, balanced_sign_row, step_a, step_b, AStepSystem};

use nalgebra::DMatrix;

use crate::data::{DomainDataset, DomainId};
use crate::error::{AthError, Result};
use crate::graph::{
    build_knn_graph, build_semantic_bipartite, build_semantic_graph, AffinityGraph,
};
use crate::model::{init_model, BinaryCodes, HashModel, KernelSpec, Variant};

#[derive(Clone, Debug, PartialEq)]
pub enum BipartiteMode {
    /// Adapted every pass by the W-step.
    Learned,
    /// Fixed label-agreement mask, rows normalized over their matches.
    Semantic,
}

/// Cross-domain affinity `W_st` (`n_s × n_t`) with its regularization weight.
#[derive(Clone, Debug, PartialEq)]
pub struct BipartiteGraph {
    weights: DMatrix<f64>,
    gamma: Gamma,
    mode: BipartiteMode,
}

impl BipartiteGraph {
    /// Rows must be nonnegative and sum to one (or be all zero in semantic
    /// mode).
    pub fn new(weights: DMatrix<f64>, gamma: Gamma, mode: BipartiteMode) -> Result<Self> {
        for (i, row) in weights.row_iter().enumerate() {
            if row.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                return Err(AthError::InvalidArgument(format!(
                    "bipartite row {i} has a negative entry"
                )));
            }
            let s = row.sum();
            let zero_ok = mode == BipartiteMode::Semantic && s == 0.0;
            if !zero_ok && (s - 1.0).abs() > 1e-10 {
                return Err(AthError::InvalidArgument(format!(
                    "bipartite row {i} sums to {s}"
                )));
            }
        }
        if let Gamma::PerRow(g) = &gamma {
            if g.len() != weights.nrows() {
                return Err(AthError::Dimension(
                    "one gamma per bipartite row required".into(),
                ));
            }
        }
        Ok(BipartiteGraph {
            weights,
            gamma,
            mode,
        })
    }

    /// Uniform rows `1/n_t`.
    pub fn uniform(n_s: usize, n_t: usize, gamma: Gamma) -> Self {
        BipartiteGraph {
            weights: DMatrix::from_element(n_s, n_t, 1.0 / n_t as f64),
            gamma,
            mode: BipartiteMode::Learned,
        }
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn gamma(&self) -> &Gamma {
        &self.gamma
    }

    pub fn mode(&self) -> &BipartiteMode {
        &self.mode
    }
}

/// When the learned bipartite graph's γ is recomputed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GammaSchedule {
    /// Recomputed from the current mappings before every W-step.
    #[default]
    EveryPass,
    /// Recomputed through the first pass, then held. From the first pass on
    /// the objective trace is non-increasing.
    Frozen,
}

/// Everything `train` needs besides data, weights and variant.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct TrainOptions {
    pub seed: u64,
    pub gamma_schedule: GammaSchedule,
    pub kernel: KernelSpec,
}

/// Full state of a training run: the (possibly kernel-lifted) inputs, the
/// domain graphs, and all optimization variables.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    /// Source inputs of the projection (`d_s × n_s`, or `m_s × n_s` with a
    /// kernel).
    pub x_s: DMatrix<f64>,
    pub x_t: DMatrix<f64>,
    pub graph_s: AffinityGraph,
    pub graph_t: AffinityGraph,
    pub model: HashModel,
    pub codes_s: BinaryCodes,
    pub codes_t: BinaryCodes,
    pub bipartite: BipartiteGraph,
    /// Regularized objective after initialization and after every pass.
    pub objective_trace: Vec<f64>,
    /// Term breakdown matching `objective_trace`.
    pub terms_trace: Vec<ObjectiveTerms>,
    pub converged: bool,
}

impl TrainState {
    /// Assembles a state from explicit blocks, checking shapes.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        x_s: DMatrix<f64>,
        x_t: DMatrix<f64>,
        graph_s: AffinityGraph,
        graph_t: AffinityGraph,
        model: HashModel,
        codes_s: BinaryCodes,
        codes_t: BinaryCodes,
        bipartite: BipartiteGraph,
    ) -> Result<Self> {
        let r = model.code_length();
        let checks = [
            (
                model.source_fn().projection().nrows() == x_s.nrows(),
                "source projection rows vs inputs",
            ),
            (
                model.target_fn().projection().nrows() == x_t.nrows(),
                "target projection rows vs inputs",
            ),
            (graph_s.len() == x_s.ncols(), "source graph size"),
            (graph_t.len() == x_t.ncols(), "target graph size"),
            (
                codes_s.code_length() == r && codes_s.len() == x_s.ncols(),
                "source codes shape",
            ),
            (
                codes_t.code_length() == r && codes_t.len() == x_t.ncols(),
                "target codes shape",
            ),
            (
                bipartite.weights().shape() == (x_s.ncols(), x_t.ncols()),
                "bipartite shape",
            ),
        ];
        for (ok, what) in checks {
            if !ok {
                return Err(AthError::Dimension(what.into()));
            }
        }
        Ok(TrainState {
            x_s,
            x_t,
            graph_s,
            graph_t,
            model,
            codes_s,
            codes_t,
            bipartite,
            objective_trace: Vec::new(),
            terms_trace: Vec::new(),
            converged: false,
        })
    }

    /// `A_kᵀ X_k` for the training inputs.
    pub fn mapped(&self, domain: DomainId) -> DMatrix<f64> {
        match domain {
            DomainId::Source => self.model.source_fn().projection().tr_mul(&self.x_s),
            DomainId::Target => self.model.target_fn().projection().tr_mul(&self.x_t),
        }
    }

    pub fn projection(&self, domain: DomainId) -> &DMatrix<f64> {
        match domain {
            DomainId::Source => self.model.source_fn().projection(),
            DomainId::Target => self.model.target_fn().projection(),
        }
    }

    pub fn set_projection(&mut self, domain: DomainId, a: DMatrix<f64>) {
        let (a_s, a_t) = match domain {
            DomainId::Source => (a, self.model.target_fn().projection().clone()),
            DomainId::Target => (self.model.source_fn().projection().clone(), a),
        };
        self.model = self.model.with_projections(a_s, a_t);
    }

    pub fn set_codes(&mut self, domain: DomainId, codes: BinaryCodes) {
        match domain {
            DomainId::Source => self.codes_s = codes,
            DomainId::Target => self.codes_t = codes,
        }
    }

    pub fn set_bipartite(&mut self, bipartite: BipartiteGraph) {
        self.bipartite = bipartite;
    }

    /// Completed passes.
    pub fn iterations(&self) -> usize {
        self.objective_trace.len().saturating_sub(1)
    }

    /// Recomputes `W_st` from the current mappings (learned mode only),
    /// refreshing γ unless `keep_gamma`.
    pub fn update_bipartite(&mut self, hp: &HyperParams, keep_gamma: bool) -> Result<()> {
        if self.bipartite.mode != BipartiteMode::Learned {
            return Ok(());
        }
        let f = cross_distances(self);
        let gamma = if keep_gamma {
            self.bipartite.gamma.clone()
        } else {
            compute_gamma(&f, hp.lambda, hp.eta_bipartite, hp.per_row_gamma)?
        };
        let weights = step_w(&f, hp.lambda, &gamma);
        self.bipartite = BipartiteGraph {
            weights,
            gamma,
            mode: BipartiteMode::Learned,
        };
        Ok(())
    }

    fn record(&mut self, hp: &HyperParams) -> f64 {
        let terms = objective(self, hp);
        let j = terms.regularized();
        self.objective_trace.push(j);
        self.terms_trace.push(terms);
        j
    }
}

fn require_labels(ds: &DomainDataset, variant: Variant, side: &str) -> Result<()> {
    if ds.labels().is_none() {
        return Err(AthError::MissingLabels(format!(
            "variant {variant} requires {side} labels"
        )));
    }
    Ok(())
}

/// Domain graphs for a variant: kNN for U, semantic source plus kNN target
/// for M, semantic on both sides for S and K.
pub fn domain_graphs(
    source: &DomainDataset,
    target: &DomainDataset,
    hp: &HyperParams,
    variant: Variant,
) -> Result<(AffinityGraph, AffinityGraph)> {
    match variant {
        Variant::U => Ok((
            build_knn_graph(source, hp.eta_knn_s)?,
            build_knn_graph(target, hp.eta_knn_t)?,
        )),
        Variant::M => Ok((
            build_semantic_graph(source)?,
            build_knn_graph(target, hp.eta_knn_t)?,
        )),
        Variant::S | Variant::K => {
            Ok((build_semantic_graph(source)?, build_semantic_graph(target)?))
        }
    }
}

/// Snapshot handed to a training observer after initialization
/// (`iteration = 0`) and after every completed pass.
pub struct IterationView<'a> {
    pub iteration: usize,
    pub state: &'a TrainState,
}

pub fn train(
    source: &DomainDataset,
    target: &DomainDataset,
    hp: &HyperParams,
    variant: Variant,
    opts: &TrainOptions,
) -> Result<TrainState> {
    train_with_observer(source, target, hp, variant, opts, |_| {})
}

/// Runs the alternating minimization, calling `observer` after
/// initialization and after every pass.
pub fn train_with_observer<F>(
    source: &DomainDataset,
    target: &DomainDataset,
    hp: &HyperParams,
    variant: Variant,
    opts: &TrainOptions,
    mut observer: F,
) -> Result<TrainState>
where
    F: FnMut(&IterationView<'_>),
{
    hp.validate()?;
    hp.validate_sizes(source.len(), target.len(), variant)?;
    match variant {
        Variant::U => {}
        Variant::M => require_labels(source, variant, "source")?,
        Variant::S | Variant::K => {
            require_labels(source, variant, "source")?;
            require_labels(target, variant, "target")?;
        }
    }

    let (graph_s, graph_t) = domain_graphs(source, target, hp, variant)?;
    let init = init_model(
        source,
        target,
        hp.code_length,
        variant,
        Some(opts.kernel),
        opts.seed,
    )?;
    let x_s = init.model.source_fn().lift(source.features())?;
    let x_t = init.model.target_fn().lift(target.features())?;
    let (n_s, n_t) = (source.len(), target.len());

    let placeholder = BipartiteGraph::uniform(n_s, n_t, Gamma::Shared(1.0));
    let mut state = TrainState::new(
        x_s,
        x_t,
        graph_s,
        graph_t,
        init.model,
        init.codes_s,
        init.codes_t,
        placeholder,
    )?;

    // W_st starts from the W-step on the initial mappings; the semantic
    // variants replace it by the fixed label mask and keep the γ computed
    // here (it only adds a constant to J).
    if variant.learns_bipartite() {
        state.update_bipartite(hp, false)?;
    } else {
        let mask = build_semantic_bipartite(source, target)?;
        let eta = hp.eta_bipartite.min(n_t - 1);
        let gamma = compute_gamma(&cross_distances(&state), hp.lambda, eta, false)?;
        state.bipartite =
            BipartiteGraph::new(mask.row_normalized(), gamma, BipartiteMode::Semantic)?;
    }

    let mut previous = state.record(hp);
    observer(&IterationView {
        iteration: 0,
        state: &state,
    });

    for iteration in 1..=hp.max_iters {
        for domain in [DomainId::Source, DomainId::Target] {
            let a = step_a(&state, hp, domain)?;
            state.set_projection(domain, a);
        }
        for domain in [DomainId::Source, DomainId::Target] {
            let b = step_b(&state, hp, domain);
            state.set_codes(domain, b);
        }
        let keep_gamma = opts.gamma_schedule == GammaSchedule::Frozen && iteration > 1;
        state.update_bipartite(hp, keep_gamma)?;

        let current = state.record(hp);
        observer(&IterationView {
            iteration,
            state: &state,
        });
        let change = (previous - current).abs() / previous.abs().max(f64::MIN_POSITIVE);
        previous = current;
        if change < hp.rel_tol {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}
