//! Asymmetric Hamming retrieval and its evaluation.
//!
//! Queries are always target samples encoded by the target hash function.
//! The database is either the source set under the source function
//! (cross-domain) or the remaining target set under the target function.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::data::{DomainDataset, SplitTask};
use crate::error::{AthError, Result};
use crate::model::{encode, init_projection, BinaryCodes, HashFunction, HashModel, Variant};

/// Codes packed 64 bits to a word; bit `b` is set when code bit `b` is −1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackedCodes {
    words_per_code: usize,
    code_length: usize,
    words: Vec<u64>,
}

impl PackedCodes {
    pub fn pack(codes: &BinaryCodes) -> Self {
        let r = codes.code_length();
        let wpc = r.div_ceil(64).max(1);
        let mut words = vec![0u64; wpc * codes.len()];
        for (j, col) in codes.codes().column_iter().enumerate() {
            for (b, &v) in col.iter().enumerate() {
                if v < 0 {
                    words[j * wpc + b / 64] |= 1u64 << (b % 64);
                }
            }
        }
        PackedCodes {
            words_per_code: wpc,
            code_length: r,
            words,
        }
    }

    pub fn len(&self) -> usize {
        self.words.len() / self.words_per_code
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn code_length(&self) -> usize {
        self.code_length
    }

    pub fn code(&self, j: usize) -> &[u64] {
        &self.words[j * self.words_per_code..(j + 1) * self.words_per_code]
    }
}

pub fn hamming_distance(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// Per-query rankings of the database.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct RetrievalResult {
    /// Database indices in rank order.
    pub rankings: Vec<Vec<usize>>,
    /// Hamming distances in rank order.
    pub distances: Vec<Vec<u32>>,
    /// Label agreement in rank order, when labels were available.
    pub relevance: Option<Vec<Vec<bool>>>,
}

impl RetrievalResult {
    pub fn query_count(&self) -> usize {
        self.rankings.len()
    }

    /// Fills `relevance` from class ids of queries and database items.
    pub fn with_relevance(mut self, query_ids: &[usize], db_ids: &[usize]) -> Result<Self> {
        if query_ids.len() != self.rankings.len() {
            return Err(AthError::Dimension(format!(
                "{} query labels for {} queries",
                query_ids.len(),
                self.rankings.len()
            )));
        }
        let rel = self
            .rankings
            .iter()
            .zip(query_ids)
            .map(|(rank, &q)| rank.iter().map(|&j| db_ids[j] == q).collect())
            .collect();
        self.relevance = Some(rel);
        Ok(self)
    }

    fn relevance_or_err(&self) -> Result<&Vec<Vec<bool>>> {
        self.relevance
            .as_ref()
            .ok_or_else(|| AthError::MissingLabels("relevance needs labels on both sides".into()))
    }
}

/// Ranks every database code for every query by Hamming distance; equal
/// distances keep database order.
pub fn hamming_rank(query: &BinaryCodes, db: &BinaryCodes) -> Result<RetrievalResult> {
    if query.code_length() != db.code_length() {
        return Err(AthError::Dimension(format!(
            "query codes have {} bits, database codes {}",
            query.code_length(),
            db.code_length()
        )));
    }
    let r = query.code_length();
    let q = PackedCodes::pack(query);
    let d = PackedCodes::pack(db);
    let per_query: Vec<(Vec<usize>, Vec<u32>)> = (0..q.len())
        .into_par_iter()
        .map(|i| {
            let qi = q.code(i);
            let dist: Vec<u32> = (0..d.len())
                .map(|j| hamming_distance(qi, d.code(j)))
                .collect();
            // Counting sort over [0, r] is stable, so ties stay in index order.
            let mut buckets = vec![Vec::new(); r + 1];
            for (j, &h) in dist.iter().enumerate() {
                buckets[h as usize].push(j);
            }
            let ranking: Vec<usize> = buckets.into_iter().flatten().collect();
            let sorted = ranking.iter().map(|&j| dist[j]).collect();
            (ranking, sorted)
        })
        .collect();
    let (rankings, distances) = per_query.into_iter().unzip();
    Ok(RetrievalResult {
        rankings,
        distances,
        relevance: None,
    })
}

/// `(1/R) Σ_p rel_p · precision@p`, with `R` the number of relevant items;
/// 0 when nothing is relevant.
pub fn average_precision(relevance: &[bool]) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (p, &rel) in relevance.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (p + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

pub fn per_query_average_precision(result: &RetrievalResult) -> Result<Vec<f64>> {
    Ok(result
        .relevance_or_err()?
        .par_iter()
        .map(|r| average_precision(r))
        .collect())
}

/// Mean of per-query AP; 0 for an empty query set. The APs are summed in
/// sorted order so the value does not depend on query order, bit for bit.
pub fn mean_average_precision(result: &RetrievalResult) -> Result<f64> {
    let mut aps = per_query_average_precision(result)?;
    if aps.is_empty() {
        return Ok(0.0);
    }
    aps.sort_by(f64::total_cmp);
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// Interpolated precision at `num_points` evenly spaced recall levels in
/// `[0, 1]`, averaged over queries. Queries without relevant items
/// contribute zero precision.
pub fn precision_recall_curve(
    result: &RetrievalResult,
    num_points: usize,
) -> Result<Vec<(f64, f64)>> {
    if num_points < 2 {
        return Err(AthError::InvalidArgument(
            "a PR curve needs at least 2 points".into(),
        ));
    }
    let rel = result.relevance_or_err()?;
    let levels: Vec<f64> = (0..num_points)
        .map(|i| i as f64 / (num_points - 1) as f64)
        .collect();
    let per_query: Vec<Vec<f64>> = rel
        .par_iter()
        .map(|r| {
            let total = r.iter().filter(|&&v| v).count();
            if total == 0 {
                return vec![0.0; num_points];
            }
            // (recall, precision) at each rank, then suffix maxima so that
            // interpolated precision is max precision at recall ≥ level.
            let mut pts = Vec::with_capacity(r.len());
            let mut hits = 0;
            for (p, &v) in r.iter().enumerate() {
                if v {
                    hits += 1;
                }
                pts.push((hits as f64 / total as f64, hits as f64 / (p + 1) as f64));
            }
            let mut best = vec![0.0; pts.len()];
            let mut running: f64 = 0.0;
            for k in (0..pts.len()).rev() {
                running = running.max(pts[k].1);
                best[k] = running;
            }
            levels
                .iter()
                .map(|&lvl| {
                    let k = pts.partition_point(|&(rc, _)| rc < lvl - 1e-12);
                    if k < pts.len() {
                        best[k]
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let q = per_query.len().max(1) as f64;
    Ok(levels
        .iter()
        .enumerate()
        .map(|(i, &lvl)| (lvl, per_query.iter().map(|p| p[i]).sum::<f64>() / q))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Target queries against the source database.
    CrossDomain,
    /// Target queries against the remaining target samples.
    WithinTarget,
}

impl std::str::FromStr for Direction {
    type Err = AthError;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "cross_domain" | "cross" => Ok(Direction::CrossDomain),
            "within_target" | "within" => Ok(Direction::WithinTarget),
            _ => Err(AthError::InvalidArgument(format!(
                "unknown direction '{s}'"
            ))),
        }
    }
}

impl Direction {
    pub fn default_for(subtask: crate::data::Subtask) -> Self {
        if subtask.is_cross_domain() {
            Direction::CrossDomain
        } else {
            Direction::WithinTarget
        }
    }
}

/// Encodes queries and database with their own domain's hash function and
/// ranks. Relevance is attached when both sides are labelled.
pub fn run_gitr_retrieval(
    model: &HashModel,
    split: &SplitTask,
    direction: Direction,
) -> Result<RetrievalResult> {
    let (db_fn, db): (&HashFunction, &DomainDataset) = match direction {
        Direction::CrossDomain => (model.source_fn(), &split.source),
        Direction::WithinTarget => (model.target_fn(), &split.target),
    };
    let r = model.code_length();
    let query_codes = if split.query.is_empty() {
        BinaryCodes::new(DMatrix::zeros(r, 0))?
    } else {
        encode(model.target_fn(), &split.query)?
    };
    let db_codes = encode(db_fn, db)?;
    let result = hamming_rank(&query_codes, &db_codes)?;
    match (split.query.class_ids(), db.class_ids()) {
        (Some(q), Some(d)) => result.with_relevance(q, d),
        _ => Ok(result),
    }
}

/// Reference sign-hashing model: each domain projected onto its own top-`r`
/// principal directions (padded as in initialization when `r` exceeds the
/// input dimension), followed by one shared random rotation.
pub fn pca_rotation_baseline(
    source: &DomainDataset,
    target: &DomainDataset,
    code_length: usize,
    seed: u64,
) -> Result<HashModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(code_length, code_length, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z
    });
    let rotation = g.qr().q();
    let a_s = init_projection(source.features(), code_length, &mut rng)? * &rotation;
    let a_t = init_projection(target.features(), code_length, &mut rng)? * &rotation;
    HashModel::new(
        HashFunction::linear(a_s)?,
        HashFunction::linear(a_t)?,
        Variant::U,
    )
}
