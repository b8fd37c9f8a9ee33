//! Within-domain affinity graphs, the label-driven bipartite mask, and graph
//! Laplacians.
//!
//! All edges carry weight 1. Graphs are stored as sorted adjacency lists,
//! which keeps semantic graphs (dense within each class) and kNN graphs
//! (sparse) on the same footing; [`AffinityGraph::to_dense`] materializes
//! the weight matrix when needed.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::data::DomainDataset;
use crate::error::{AthError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphKind {
    /// Union-symmetrized `eta`-nearest-neighbor graph.
    Knn(usize),
    /// Edge between every pair of distinct samples sharing a label.
    Semantic,
}

/// Symmetric 0/1 affinity graph with zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinityGraph {
    adjacency: Vec<Vec<usize>>,
    degree: Vec<f64>,
    kind: GraphKind,
}

impl AffinityGraph {
    fn from_adjacency(mut adjacency: Vec<Vec<usize>>, kind: GraphKind) -> Self {
        for row in &mut adjacency {
            row.sort_unstable();
            row.dedup();
        }
        let degree = adjacency.iter().map(|r| r.len() as f64).collect();
        AffinityGraph {
            adjacency,
            degree,
            kind,
        }
    }

    /// Graph without edges on `n` nodes.
    pub fn empty(n: usize, kind: GraphKind) -> Self {
        Self::from_adjacency(vec![Vec::new(); n], kind)
    }

    /// Builds a graph from undirected edges; both directions are inserted.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], kind: GraphKind) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for &(i, j) in edges {
            if i >= n || j >= n || i == j {
                return Err(AthError::InvalidArgument(format!(
                    "invalid edge ({i}, {j}) on {n} nodes"
                )));
            }
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        Ok(Self::from_adjacency(adjacency, kind))
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    /// Sorted neighbor indices of node `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    /// `D_ii = Σ_j W_ij`.
    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    /// Number of nonzero entries of `W` (each undirected edge counts twice).
    pub fn nnz(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if self.adjacency[i].binary_search(&j).is_ok() {
            1.0
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut w = DMatrix::zeros(n, n);
        for (i, row) in self.adjacency.iter().enumerate() {
            for &j in row {
                w[(i, j)] = 1.0;
            }
        }
        w
    }

    /// Nonzero entries as `(i, j, w)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&j| (i, j, 1.0)))
    }

    /// `X W` for a column-sample matrix `X` (`d × n`): column `i` is the sum
    /// of the neighbor columns of `i`.
    pub fn propagate(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.ncols(), self.len(), "column count must equal node count");
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for (i, row) in self.adjacency.iter().enumerate() {
            let mut col = out.column_mut(i);
            for &j in row {
                col += x.column(j);
            }
        }
        out
    }

    /// `X L X^T` with `L = D − W`, without forming `L`.
    pub fn laplacian_congruence(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let xd = scale_columns(x, &self.degree);
        let xw = self.propagate(x);
        xd * x.transpose() - xw * x.transpose()
    }

    /// `Σ_ij W_ij ‖y_i − y_j‖²` over the columns of `y`.
    pub fn smoothness(&self, y: &DMatrix<f64>) -> f64 {
        self.adjacency
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .map(|&j| (y.column(i) - y.column(j)).norm_squared())
                    .sum::<f64>()
            })
            .sum()
    }
}

pub(crate) fn scale_columns(x: &DMatrix<f64>, s: &[f64]) -> DMatrix<f64> {
    let mut out = x.clone();
    for (mut col, &v) in out.column_iter_mut().zip(s) {
        col *= v;
    }
    out
}

/// Squared Euclidean distances between the columns of `a` and `b` via
/// `‖u‖² + ‖v‖² − 2u·v`, clamped at zero.
pub fn squared_distances(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let an: Vec<f64> = a.column_iter().map(|c| c.norm_squared()).collect();
    let bn: Vec<f64> = b.column_iter().map(|c| c.norm_squared()).collect();
    let mut g = a.transpose() * b;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            g[(i, j)] = (an[i] + bn[j] - 2.0 * g[(i, j)]).max(0.0);
        }
    }
    g
}

/// Union-symmetrized kNN graph under squared Euclidean distance. Distance
/// ties go to the lower sample index.
pub fn build_knn_graph(data: &DomainDataset, eta: usize) -> Result<AffinityGraph> {
    let n = data.len();
    if eta == 0 || eta >= n {
        return Err(AthError::InvalidArgument(format!(
            "neighbor count {eta} must lie in [1, {})",
            n.saturating_sub(1)
        )));
    }
    let x = data.features();
    let neighbor_sets: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = x.column(i);
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| ((x.column(j) - xi).norm_squared(), j))
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.truncate(eta);
            cand.into_iter().map(|(_, j)| j).collect()
        })
        .collect();
    let mut adjacency = vec![Vec::new(); n];
    for (i, set) in neighbor_sets.iter().enumerate() {
        for &j in set {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
    }
    Ok(AffinityGraph::from_adjacency(
        adjacency,
        GraphKind::Knn(eta),
    ))
}

fn require_ids<'a>(data: &'a DomainDataset, who: &str) -> Result<&'a [usize]> {
    data.class_ids()
        .ok_or_else(|| AthError::MissingLabels(format!("{who} needs labelled data")))
}

/// Edge between every pair of distinct samples with equal labels.
pub fn build_semantic_graph(data: &DomainDataset) -> Result<AffinityGraph> {
    let ids = require_ids(data, "semantic graph")?;
    let c = data.class_count().unwrap_or(0);
    let mut members = vec![Vec::new(); c];
    for (i, &k) in ids.iter().enumerate() {
        members[k].push(i);
    }
    let adjacency = ids
        .iter()
        .enumerate()
        .map(|(i, &k)| members[k].iter().copied().filter(|&j| j != i).collect())
        .collect();
    Ok(AffinityGraph::from_adjacency(
        adjacency,
        GraphKind::Semantic,
    ))
}

/// `n_s × n_t` 0/1 mask of label agreement between source and target samples.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticBipartiteEdges {
    mask: DMatrix<f64>,
}

impl SemanticBipartiteEdges {
    pub fn mask(&self) -> &DMatrix<f64> {
        &self.mask
    }

    /// Rows scaled to sum to one over their matches; rows without a match
    /// stay zero.
    pub fn row_normalized(&self) -> DMatrix<f64> {
        let mut w = self.mask.clone();
        for mut row in w.row_iter_mut() {
            let s = row.sum();
            if s > 0.0 {
                row /= s;
            }
        }
        w
    }
}

pub fn build_semantic_bipartite(
    source: &DomainDataset,
    target: &DomainDataset,
) -> Result<SemanticBipartiteEdges> {
    let ys = require_ids(source, "semantic bipartite graph (source)")?;
    let yt = require_ids(target, "semantic bipartite graph (target)")?;
    if source.class_count() != target.class_count() {
        return Err(AthError::InvalidArgument(format!(
            "class counts differ: source {:?}, target {:?}",
            source.class_count(),
            target.class_count()
        )));
    }
    let mask = DMatrix::from_fn(
        ys.len(),
        yt.len(),
        |i, j| if ys[i] == yt[j] { 1.0 } else { 0.0 },
    );
    Ok(SemanticBipartiteEdges { mask })
}

/// Dense graph Laplacian `L = D − W`.
#[derive(Clone, Debug, PartialEq)]
pub struct Laplacian {
    matrix: DMatrix<f64>,
}

impl Laplacian {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }
}

pub fn laplacian(graph: &AffinityGraph) -> Laplacian {
    let mut matrix = -graph.to_dense();
    for (i, &d) in graph.degree().iter().enumerate() {
        matrix[(i, i)] = d;
    }
    Laplacian { matrix }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DomainId;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn points(cols: &[&[f64]]) -> DomainDataset {
        let d = cols[0].len();
        let m = DMatrix::from_fn(d, cols.len(), |i, j| cols[j][i]);
        DomainDataset::new(m, None, DomainId::Source).unwrap()
    }

    fn labelled(ids: &[usize], c: usize) -> DomainDataset {
        let m = DMatrix::from_fn(2, ids.len(), |i, j| (i + 3 * j) as f64);
        DomainDataset::with_class_ids(m, ids.to_vec(), c, DomainId::Source).unwrap()
    }

    fn edges(g: &AffinityGraph) -> Vec<(usize, usize)> {
        g.triplets()
            .filter(|t| t.0 < t.1)
            .map(|t| (t.0, t.1))
            .collect()
    }

    fn assert_valid(g: &AffinityGraph) {
        let w = g.to_dense();
        assert_eq!(w, w.transpose());
        for i in 0..g.len() {
            assert_eq!(w[(i, i)], 0.0);
            assert_eq!(g.degree()[i], w.row(i).sum());
        }
    }

    #[test]
    fn knn_collinear_points() {
        // Exhaustive distances: d(0,1)=1, d(1,2)=4, d(0,2)=9.
        let g = build_knn_graph(&points(&[&[0.0], &[1.0], &[3.0]]), 1).unwrap();
        assert_eq!(edges(&g), vec![(0, 1), (1, 2)]);
        assert_valid(&g);
    }

    #[test]
    fn knn_full_neighborhood_is_complete() {
        let ds = points(&[&[0.0, 1.0], &[2.0, 5.0], &[-1.0, 0.5], &[4.0, 4.0]]);
        let g = build_knn_graph(&ds, 3).unwrap();
        assert_eq!(g.nnz(), 12);
        assert_valid(&g);
    }

    #[test]
    fn knn_duplicates_are_mutual_neighbors() {
        let ds = points(&[&[5.0], &[0.0], &[5.0], &[0.0]]);
        let g = build_knn_graph(&ds, 1).unwrap();
        assert_eq!(edges(&g), vec![(0, 2), (1, 3)]);
    }

    #[test]
    fn knn_tie_goes_to_lower_index() {
        // Node 1 (x=2) is equidistant from nodes 0 and 2; nobody else picks it.
        let ds = points(&[&[0.0], &[2.0], &[4.0], &[4.1], &[-0.1]]);
        let g = build_knn_graph(&ds, 1).unwrap();
        assert_eq!(g.neighbors(1), &[0]);
        assert_eq!(edges(&g), vec![(0, 1), (0, 4), (2, 3)]);
    }

    #[test]
    fn knn_eta_out_of_range() {
        let ds = points(&[&[0.0], &[1.0], &[2.0]]);
        assert!(build_knn_graph(&ds, 0).is_err());
        assert!(build_knn_graph(&ds, 3).is_err());
    }

    #[test]
    fn knn_row_counts_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = DMatrix::from_fn(3, 40, |_, _| rng.random::<f64>());
        let ds = DomainDataset::new(m, None, DomainId::Source).unwrap();
        let g = build_knn_graph(&ds, 4).unwrap();
        for i in 0..40 {
            assert!((4..=39).contains(&g.neighbors(i).len()));
        }
        assert_valid(&g);
    }

    #[test]
    fn knn_is_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 25;
        let m = DMatrix::from_fn(4, n, |_, _| rng.random::<f64>());
        let perm: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % n).collect();
        let ds = DomainDataset::new(m.clone(), None, DomainId::Source).unwrap();
        let permuted = DomainDataset::new(m.select_columns(&perm), None, DomainId::Source).unwrap();
        let g = build_knn_graph(&ds, 3).unwrap();
        let gp = build_knn_graph(&permuted, 3).unwrap();
        for a in 0..n {
            for b in 0..n {
                assert_eq!(gp.weight(a, b), g.weight(perm[a], perm[b]));
            }
        }
    }

    #[test]
    fn semantic_graph_examples() {
        let g = build_semantic_graph(&labelled(&[0, 0, 1], 2)).unwrap();
        assert_eq!(edges(&g), vec![(0, 1)]);
        let g = build_semantic_graph(&labelled(&[0, 1, 2], 3)).unwrap();
        assert_eq!(g.nnz(), 0);
        let g = build_semantic_graph(&labelled(&[1, 1, 1, 1], 2)).unwrap();
        assert_eq!(g.nnz(), 12);
        assert_valid(&g);
    }

    #[test]
    fn semantic_graph_ignores_features() {
        let a = labelled(&[0, 1, 0, 2, 1], 3);
        let shuffled = DMatrix::from_fn(2, 5, |i, j| ((i * 11 + j * 5) % 7) as f64);
        let b = DomainDataset::with_class_ids(shuffled, vec![0, 1, 0, 2, 1], 3, DomainId::Source)
            .unwrap();
        assert_eq!(
            build_semantic_graph(&a).unwrap(),
            build_semantic_graph(&b).unwrap()
        );
    }

    #[test]
    fn semantic_graph_needs_labels() {
        let ds = points(&[&[0.0], &[1.0]]);
        assert!(matches!(
            build_semantic_graph(&ds),
            Err(AthError::MissingLabels(_))
        ));
    }

    #[test]
    fn bipartite_examples() {
        let s = labelled(&[0, 1], 2);
        let t = labelled(&[1, 0], 2);
        let m = build_semantic_bipartite(&s, &t).unwrap();
        assert_eq!(
            m.mask(),
            &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
        );

        let s = labelled(&[0, 2], 3);
        let t = labelled(&[0, 1, 1], 3);
        let m = build_semantic_bipartite(&s, &t).unwrap();
        assert_eq!(m.mask().row(1).sum(), 0.0);
        let w = m.row_normalized();
        assert_eq!(w.row(0).sum(), 1.0);
        assert_eq!(w.row(1).sum(), 0.0);

        let s = labelled(&[1, 1], 2);
        let t = labelled(&[1, 1, 1], 2);
        assert!(build_semantic_bipartite(&s, &t)
            .unwrap()
            .mask()
            .iter()
            .all(|&v| v == 1.0));
    }

    #[test]
    fn bipartite_errors() {
        let s = labelled(&[0, 1], 2);
        let t = labelled(&[0, 1], 3);
        assert!(build_semantic_bipartite(&s, &t).is_err());
        assert!(build_semantic_bipartite(&s, &points(&[&[0.0], &[1.0]])).is_err());
    }

    #[test]
    fn laplacian_examples() {
        let g = AffinityGraph::from_edges(2, &[(0, 1)], GraphKind::Semantic).unwrap();
        assert_eq!(
            laplacian(&g).matrix(),
            &DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])
        );
        let g = AffinityGraph::empty(3, GraphKind::Semantic);
        assert_eq!(laplacian(&g).matrix(), &DMatrix::zeros(3, 3));
        let g = AffinityGraph::from_edges(3, &[(0, 1), (1, 2)], GraphKind::Semantic).unwrap();
        #[rustfmt::skip]
        let expect = DMatrix::from_row_slice(3, 3, &[
            1.0, -1.0, 0.0,
            -1.0, 2.0, -1.0,
            0.0, -1.0, 1.0,
        ]);
        assert_eq!(laplacian(&g).matrix(), &expect);
    }

    #[test]
    fn laplacian_rows_sum_to_zero_and_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = DMatrix::from_fn(3, 30, |_, _| rng.random::<f64>());
        let ds = DomainDataset::new(m, None, DomainId::Source).unwrap();
        let l = laplacian(&build_knn_graph(&ds, 3).unwrap()).into_matrix();
        for row in l.row_iter() {
            assert_eq!(row.sum(), 0.0);
        }
        for _ in 0..100 {
            let x = nalgebra::DVector::from_fn(30, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            assert!((x.transpose() * &l * &x)[(0, 0)] >= -1e-10);
        }
    }

    #[test]
    fn sparse_helpers_match_dense_algebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = DMatrix::from_fn(3, 15, |_, _| rng.random::<f64>());
        let ds = DomainDataset::new(m.clone(), None, DomainId::Source).unwrap();
        let g = build_knn_graph(&ds, 2).unwrap();
        let l = laplacian(&g).into_matrix();
        let dense = &m * &l * m.transpose();
        assert!((g.laplacian_congruence(&m) - &dense).abs().max() < 1e-12);
        let smooth = 2.0 * (&m * &l * m.transpose()).trace();
        assert!((g.smoothness(&m) - smooth).abs() < 1e-10);
    }

    #[test]
    fn gram_distances_match_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = DMatrix::from_fn(4, 6, |_, _| rng.random::<f64>());
        let b = DMatrix::from_fn(4, 5, |_, _| rng.random::<f64>());
        let d = squared_distances(&a, &b);
        for i in 0..6 {
            for j in 0..5 {
                assert!((d[(i, j)] - (a.column(i) - b.column(j)).norm_squared()).abs() < 1e-12);
            }
        }
        assert!(squared_distances(&a, &a).iter().all(|&v| v >= 0.0));
    }
}
