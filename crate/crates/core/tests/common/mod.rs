#![allow(dead_code)]

use ath_core::data::DomainId;
use ath_core::graph::{build_knn_graph, AffinityGraph, GraphKind};
use ath_core::optimizer::balanced_codes;
use ath_core::{
    BipartiteGraph, BipartiteMode, DomainDataset, Gamma, HashFunction, HashModel, TrainState,
    Variant,
};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn random_row_stochastic(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut w = DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>());
    for mut row in w.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    w
}

/// Shapes of a randomly filled optimizer state.
#[derive(Clone, Copy, Debug)]
pub struct Shape {
    pub d_s: usize,
    pub d_t: usize,
    pub n_s: usize,
    pub n_t: usize,
    pub r: usize,
    pub knn: Option<usize>,
}

/// Random projections, data, codes and bipartite weights; kNN domain graphs
/// when `shape.knn` is set, empty graphs otherwise.
pub fn random_state(rng: &mut ChaCha8Rng, shape: Shape) -> TrainState {
    let x_s = gaussian(rng, shape.d_s, shape.n_s);
    let x_t = gaussian(rng, shape.d_t, shape.n_t);
    let graph = |x: &DMatrix<f64>| -> AffinityGraph {
        match shape.knn {
            Some(k) => {
                let ds = DomainDataset::new(x.clone(), None, DomainId::Source).unwrap();
                build_knn_graph(&ds, k).unwrap()
            }
            None => AffinityGraph::empty(x.ncols(), GraphKind::Knn(1)),
        }
    };
    let (graph_s, graph_t) = (graph(&x_s), graph(&x_t));
    let a_s = gaussian(rng, shape.d_s, shape.r);
    let a_t = gaussian(rng, shape.d_t, shape.r);
    let codes_s = balanced_codes(&gaussian(rng, shape.r, shape.n_s));
    let codes_t = balanced_codes(&gaussian(rng, shape.r, shape.n_t));
    let model = HashModel::new(
        HashFunction::linear(a_s).unwrap(),
        HashFunction::linear(a_t).unwrap(),
        Variant::U,
    )
    .unwrap();
    let w = random_row_stochastic(rng, shape.n_s, shape.n_t);
    let gamma = Gamma::Shared(0.1 + rng.random::<f64>());
    let bipartite = BipartiteGraph::new(w, gamma, BipartiteMode::Learned).unwrap();
    TrainState::new(
        x_s, x_t, graph_s, graph_t, model, codes_s, codes_t, bipartite,
    )
    .unwrap()
}

/// Exhaustive minimizer of `λ f·w + γ‖w‖²` over the simplex: tries every
/// support, solves the equality-constrained problem on it and keeps the
/// best feasible point.
pub fn simplex_oracle(f: &[f64], lambda: f64, gamma: f64) -> Vec<f64> {
    let n = f.len();
    let value = |w: &[f64]| -> f64 {
        w.iter()
            .zip(f)
            .map(|(wi, fi)| lambda * fi * wi + gamma * wi * wi)
            .sum()
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
        let k = support.len() as f64;
        let mu = (2.0 * gamma + lambda * support.iter().map(|&j| f[j]).sum::<f64>()) / k;
        let mut w = vec![0.0; n];
        let mut feasible = true;
        for &j in &support {
            w[j] = (mu - lambda * f[j]) / (2.0 * gamma);
            if w[j] < -1e-13 {
                feasible = false;
            }
        }
        if !feasible {
            continue;
        }
        for v in &mut w {
            *v = v.max(0.0);
        }
        let val = value(&w);
        if best.as_ref().is_none_or(|(b, _)| val < *b) {
            best = Some((val, w));
        }
    }
    best.expect("the simplex is non-empty").1
}

/// Exhaustive maximizer of `Σ b_j m_j` over sign vectors with `|Σ b| ≤ 1`.
pub fn balanced_oracle_value(m: &[f64]) -> f64 {
    let n = m.len();
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << n) {
        let plus = mask.count_ones() as i64;
        if (2 * plus - n as i64).abs() > 1 {
            continue;
        }
        let v: f64 = (0..n)
            .map(|j| if mask & (1 << j) != 0 { m[j] } else { -m[j] })
            .sum();
        best = best.max(v);
    }
    best
}

pub fn report(name: &str, ok: bool, detail: &str) {
    println!("[{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
}
