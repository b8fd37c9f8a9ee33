//! Domain datasets, retrieval tasks, and their on-disk formats.
//!
//! Feature matrices are stored column-wise: a dataset with `n` samples of
//! dimension `d` holds a `d × n` matrix. Labels are kept one-hot (`c × n`)
//! alongside the equivalent integer class ids.

mod io;
mod synth;

pub use io::{load_dataset, save_dataset, MatrixFormat};
pub use synth::{generate_synthetic_gitr, SynthSpec};

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{AthError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DomainId {
    Source,
    Target,
}

/// One-hot label matrix with its class ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Labels {
    one_hot: DMatrix<f64>,
    ids: Vec<usize>,
}

impl Labels {
    /// Validates a `c × n` one-hot matrix.
    pub fn from_one_hot(one_hot: DMatrix<f64>) -> Result<Self> {
        let mut ids = Vec::with_capacity(one_hot.ncols());
        for (col, column) in one_hot.column_iter().enumerate() {
            let mut hot = None;
            for (row, &v) in column.iter().enumerate() {
                if v == 1.0 {
                    if hot.is_some() {
                        return Err(AthError::NotOneHot { col });
                    }
                    hot = Some(row);
                } else if v != 0.0 {
                    return Err(AthError::NotOneHot { col });
                }
            }
            ids.push(hot.ok_or(AthError::NotOneHot { col })?);
        }
        Ok(Labels { one_hot, ids })
    }

    pub fn from_class_ids(ids: Vec<usize>, class_count: usize) -> Result<Self> {
        if class_count == 0 {
            return Err(AthError::InvalidArgument(
                "class count must be positive".into(),
            ));
        }
        let mut one_hot = DMatrix::zeros(class_count, ids.len());
        for (col, &id) in ids.iter().enumerate() {
            if id >= class_count {
                return Err(AthError::InvalidArgument(format!(
                    "class id {id} at column {col} is outside [0, {class_count})"
                )));
            }
            one_hot[(id, col)] = 1.0;
        }
        Ok(Labels { one_hot, ids })
    }

    pub fn one_hot(&self) -> &DMatrix<f64> {
        &self.one_hot
    }

    pub fn class_ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn class_count(&self) -> usize {
        self.one_hot.nrows()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn select(&self, indices: &[usize]) -> Labels {
        let ids: Vec<usize> = indices.iter().map(|&i| self.ids[i]).collect();
        Labels {
            one_hot: self.one_hot.select_columns(indices),
            ids,
        }
    }
}

/// Feature matrix of one domain, with optional labels.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainDataset {
    features: DMatrix<f64>,
    labels: Option<Labels>,
    domain: DomainId,
}

impl DomainDataset {
    /// Builds a validated dataset. Requires at least two samples, finite
    /// features and, when labels are given, one label column per sample.
    pub fn new(features: DMatrix<f64>, labels: Option<Labels>, domain: DomainId) -> Result<Self> {
        if features.ncols() < 2 {
            return Err(AthError::InvalidArgument(format!(
                "a dataset needs at least 2 samples, got {}",
                features.ncols()
            )));
        }
        Self::new_unchecked_size(features, labels, domain)
    }

    fn new_unchecked_size(
        features: DMatrix<f64>,
        labels: Option<Labels>,
        domain: DomainId,
    ) -> Result<Self> {
        for col in 0..features.ncols() {
            for row in 0..features.nrows() {
                if !features[(row, col)].is_finite() {
                    return Err(AthError::NonFinite { row, col });
                }
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != features.ncols() {
                return Err(AthError::LabelColumnMismatch {
                    labels: labels.len(),
                    features: features.ncols(),
                });
            }
        }
        Ok(DomainDataset {
            features,
            labels,
            domain,
        })
    }

    pub fn with_class_ids(
        features: DMatrix<f64>,
        ids: Vec<usize>,
        class_count: usize,
        domain: DomainId,
    ) -> Result<Self> {
        let labels = Labels::from_class_ids(ids, class_count)?;
        Self::new(features, Some(labels), domain)
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    pub fn class_ids(&self) -> Option<&[usize]> {
        self.labels.as_ref().map(Labels::class_ids)
    }

    pub fn class_count(&self) -> Option<usize> {
        self.labels.as_ref().map(Labels::class_count)
    }

    pub fn domain(&self) -> DomainId {
        self.domain
    }

    pub fn with_domain(mut self, domain: DomainId) -> Self {
        self.domain = domain;
        self
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.features.nrows()
    }

    /// Sample count `n`.
    pub fn len(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.features.ncols() == 0
    }

    pub fn without_labels(&self) -> Self {
        DomainDataset {
            features: self.features.clone(),
            labels: None,
            domain: self.domain,
        }
    }

    /// Subset of columns, in the given order. Subsets may hold fewer than
    /// two samples (an empty query set is legal).
    pub fn select(&self, indices: &[usize]) -> Self {
        DomainDataset {
            features: self.features.select_columns(indices),
            labels: self.labels.as_ref().map(|l| l.select(indices)),
            domain: self.domain,
        }
    }

    /// Zero-mean, unit-variance rescaling of every feature row. Constant
    /// rows are only centered.
    pub fn standardized(&self) -> Self {
        let n = self.len() as f64;
        let mut features = self.features.clone();
        for mut row in features.row_iter_mut() {
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
            row.apply(|v| *v = (*v - mean) / scale);
        }
        DomainDataset {
            features,
            labels: self.labels.clone(),
            domain: self.domain,
        }
    }
}

/// The four retrieval settings: homogeneous/heterogeneous features crossed
/// with single-domain/cross-domain search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Subtask {
    HoSDR,
    HoCDR,
    HeSDR,
    HeCDR,
}

impl Subtask {
    pub fn is_homogeneous(self) -> bool {
        matches!(self, Subtask::HoSDR | Subtask::HoCDR)
    }

    pub fn is_cross_domain(self) -> bool {
        matches!(self, Subtask::HoCDR | Subtask::HeCDR)
    }
}

impl fmt::Display for Subtask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Subtask::HoSDR => "HoSDR",
            Subtask::HoCDR => "HoCDR",
            Subtask::HeSDR => "HeSDR",
            Subtask::HeCDR => "HeCDR",
        };
        f.write_str(s)
    }
}

impl FromStr for Subtask {
    type Err = AthError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hosdr" => Ok(Subtask::HoSDR),
            "hocdr" => Ok(Subtask::HoCDR),
            "hesdr" => Ok(Subtask::HeSDR),
            "hecdr" => Ok(Subtask::HeCDR),
            _ => Err(AthError::InvalidArgument(format!("unknown subtask '{s}'"))),
        }
    }
}

/// A source/target pair plus the number of target samples held out as
/// queries.
#[derive(Clone, Debug, PartialEq)]
pub struct GitrTask {
    subtask: Subtask,
    source: DomainDataset,
    target: DomainDataset,
    query_count: usize,
}

impl GitrTask {
    pub fn new(
        subtask: Subtask,
        source: DomainDataset,
        target: DomainDataset,
        query_count: usize,
    ) -> Result<Self> {
        if subtask.is_homogeneous() && source.dim() != target.dim() {
            return Err(AthError::Dimension(format!(
                "{subtask} requires equal feature dimensions, got d_s={} and d_t={}",
                source.dim(),
                target.dim()
            )));
        }
        if query_count == 0 || query_count >= target.len() {
            return Err(AthError::InvalidArgument(format!(
                "query count {query_count} must lie in (0, {})",
                target.len()
            )));
        }
        Ok(GitrTask {
            subtask,
            source: source.with_domain(DomainId::Source),
            target: target.with_domain(DomainId::Target),
            query_count,
        })
    }

    pub fn subtask(&self) -> Subtask {
        self.subtask
    }

    pub fn source(&self) -> &DomainDataset {
        &self.source
    }

    pub fn target(&self) -> &DomainDataset {
        &self.target
    }

    pub fn query_count(&self) -> usize {
        self.query_count
    }

    /// Holds out `query_count` random target samples as queries; the rest of
    /// the target is used for training and as the within-domain database.
    pub fn split(&self, seed: u64) -> Result<SplitTask> {
        let (query, target) = split_query(&self.target, self.query_count, seed)?;
        Ok(SplitTask {
            subtask: self.subtask,
            source: self.source.clone(),
            query,
            target,
        })
    }
}

/// A task after the query hold-out.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitTask {
    pub subtask: Subtask,
    pub source: DomainDataset,
    pub query: DomainDataset,
    /// Target samples not used as queries.
    pub target: DomainDataset,
}

/// Index partition behind [`split_query`]: `(query, rest)`, each ascending.
pub fn split_indices(n: usize, query_count: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if query_count == 0 || query_count >= n {
        return Err(AthError::InvalidArgument(format!(
            "query count {query_count} must lie in (0, {n})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut query = order[..query_count].to_vec();
    let mut rest = order[query_count..].to_vec();
    query.sort_unstable();
    rest.sort_unstable();
    Ok((query, rest))
}

/// Random disjoint split of a target dataset into queries and the remainder.
pub fn split_query(
    target: &DomainDataset,
    query_count: usize,
    seed: u64,
) -> Result<(DomainDataset, DomainDataset)> {
    let (q, rest) = split_indices(target.len(), query_count, seed)?;
    Ok((target.select(&q), target.select(&rest)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(d: usize, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(d, n, |i, j| (i * n + j) as f64)
    }

    #[test]
    fn one_hot_rejects_all_zero_column() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            Labels::from_one_hot(m),
            Err(AthError::NotOneHot { col: 1 })
        ));
    }

    #[test]
    fn one_hot_rejects_double_hot_and_fractions() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        assert!(matches!(
            Labels::from_one_hot(m),
            Err(AthError::NotOneHot { col: 0 })
        ));
        let m = DMatrix::from_row_slice(2, 1, &[0.5, 0.5]);
        assert!(Labels::from_one_hot(m).is_err());
    }

    #[test]
    fn nan_feature_is_located() {
        let mut f = ramp(3, 4);
        f[(2, 1)] = f64::NAN;
        match DomainDataset::new(f, None, DomainId::Source) {
            Err(AthError::NonFinite { row: 2, col: 1 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn label_count_must_match() {
        let labels = Labels::from_class_ids(vec![0, 1, 0], 2).unwrap();
        let err = DomainDataset::new(ramp(2, 4), Some(labels), DomainId::Source).unwrap_err();
        assert!(matches!(
            err,
            AthError::LabelColumnMismatch {
                labels: 3,
                features: 4
            }
        ));
    }

    #[test]
    fn single_sample_rejected() {
        assert!(DomainDataset::new(ramp(2, 1), None, DomainId::Source).is_err());
    }

    #[test]
    fn split_partitions_ten_into_three_and_seven() {
        let ds = DomainDataset::with_class_ids(
            ramp(2, 10),
            (0..10).map(|i| i % 2).collect(),
            2,
            DomainId::Target,
        )
        .unwrap();
        let (q, rest) = split_query(&ds, 3, 7).unwrap();
        assert_eq!(q.len(), 3);
        assert_eq!(rest.len(), 7);
        let (qi, ri) = split_indices(10, 3, 7).unwrap();
        assert!(qi.iter().all(|i| !ri.contains(i)));
        // Labels follow their columns.
        for (k, &i) in qi.iter().enumerate() {
            assert_eq!(q.class_ids().unwrap()[k], i % 2);
            assert_eq!(q.features()[(0, k)], i as f64);
        }
        let (q2, rest2) = split_query(&ds, 3, 7).unwrap();
        assert_eq!(q, q2);
        assert_eq!(rest, rest2);
    }

    #[test]
    fn split_rejects_out_of_range() {
        let ds = DomainDataset::new(ramp(2, 10), None, DomainId::Target).unwrap();
        assert!(split_query(&ds, 10, 1).is_err());
        assert!(split_query(&ds, 0, 1).is_err());
    }

    #[test]
    fn homogeneous_task_requires_equal_dims() {
        let s = DomainDataset::new(ramp(3, 4), None, DomainId::Source).unwrap();
        let t = DomainDataset::new(ramp(2, 4), None, DomainId::Target).unwrap();
        assert!(GitrTask::new(Subtask::HoCDR, s.clone(), t.clone(), 1).is_err());
        assert!(GitrTask::new(Subtask::HeCDR, s, t, 1).is_ok());
    }

    #[test]
    fn standardize_gives_zero_mean_unit_variance() {
        let ds = DomainDataset::new(ramp(2, 5), None, DomainId::Source).unwrap();
        let z = ds.standardized();
        for row in z.features().row_iter() {
            let mean = row.sum() / 5.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 5.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
    }

    proptest::proptest! {
        #[test]
        fn split_is_disjoint_and_exhaustive(n in 2usize..60, frac in 0.0f64..1.0, seed in proptest::prelude::any::<u64>()) {
            let q = 1 + ((n - 2) as f64 * frac) as usize;
            let (qi, ri) = split_indices(n, q, seed).unwrap();
            let mut all: Vec<usize> = qi.iter().chain(ri.iter()).copied().collect();
            all.sort_unstable();
            proptest::prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            proptest::prop_assert_eq!(qi.len(), q);
        }
    }
}
