use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DomainDataset, DomainId, GitrTask, Subtask};
use crate::error::{AthError, Result};

/// Parameters of a synthetic two-domain retrieval task.
///
/// Both domains share `class_count` latent class centroids in
/// `R^latent_dim`; each domain observes them through its own random
/// full-rank linear map, so `source_dim != target_dim` gives a
/// heterogeneous task.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub class_count: usize,
    pub n_source: usize,
    pub n_target: usize,
    pub latent_dim: usize,
    pub source_dim: usize,
    pub target_dim: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Held-out queries; `None` uses a tenth of the target, at least one.
    pub query_count: Option<usize>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            class_count: 5,
            n_source: 500,
            n_target: 300,
            latent_dim: 10,
            source_dim: 40,
            target_dim: 25,
            noise_sigma: 0.3,
            seed: 0,
            query_count: None,
        }
    }
}

const SEPARATION: f64 = 6.0;
const MAX_DRAWS: usize = 1000;

pub fn generate_synthetic_gitr(spec: &SynthSpec) -> Result<GitrTask> {
    let c = spec.class_count;
    if c < 2 {
        return Err(AthError::InvalidArgument("need at least 2 classes".into()));
    }
    if spec.latent_dim == 0 || spec.latent_dim > spec.source_dim.min(spec.target_dim) {
        return Err(AthError::InvalidArgument(format!(
            "latent dimension {} must lie in [1, min(d_s, d_t) = {}]",
            spec.latent_dim,
            spec.source_dim.min(spec.target_dim)
        )));
    }
    if spec.n_source < 2 * c || spec.n_target < 2 * c {
        return Err(AthError::InvalidArgument(format!(
            "each domain needs at least 2c = {} samples",
            2 * c
        )));
    }
    if !(spec.noise_sigma.is_finite() && spec.noise_sigma >= 0.0) {
        return Err(AthError::InvalidArgument(
            "noise sigma must be finite and non-negative".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centroids = draw_centroids(&mut rng, c, spec.latent_dim, spec.noise_sigma)?;
    let source = sample_domain(
        &mut rng,
        &centroids,
        spec.n_source,
        spec.source_dim,
        spec.noise_sigma,
        DomainId::Source,
    )?;
    let target = sample_domain(
        &mut rng,
        &centroids,
        spec.n_target,
        spec.target_dim,
        spec.noise_sigma,
        DomainId::Target,
    )?;
    let subtask = if spec.source_dim == spec.target_dim {
        Subtask::HoCDR
    } else {
        Subtask::HeCDR
    };
    let query_count = spec
        .query_count
        .unwrap_or_else(|| (spec.n_target / 10).max(1));
    GitrTask::new(subtask, source, target, query_count)
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z * scale
    })
}

/// Columns are centroids with pairwise distance at least `6·sigma`.
fn draw_centroids(rng: &mut ChaCha8Rng, c: usize, dim: usize, sigma: f64) -> Result<DMatrix<f64>> {
    let min_dist = SEPARATION * sigma;
    let scale = 1.0f64.max(min_dist);
    for _ in 0..MAX_DRAWS {
        let m = gaussian_matrix(rng, dim, c, scale);
        let separated = (0..c).all(|i| {
            (i + 1..c).all(|j| {
                let d = (m.column(i) - m.column(j)).norm();
                d >= min_dist && d > 0.0
            })
        });
        if separated {
            return Ok(m);
        }
    }
    Err(AthError::InvalidArgument(format!(
        "could not draw {c} centroids in R^{dim} separated by {min_dist}"
    )))
}

fn full_rank_map(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    for _ in 0..MAX_DRAWS {
        let m = gaussian_matrix(rng, rows, cols, 1.0 / (cols as f64).sqrt());
        let sv = m.clone().singular_values();
        let max = sv.max();
        if sv.iter().all(|&s| s > 1e-8 * max) {
            return Ok(m);
        }
    }
    Err(AthError::InvalidArgument(
        "could not draw a full-rank map".into(),
    ))
}

fn sample_domain(
    rng: &mut ChaCha8Rng,
    centroids: &DMatrix<f64>,
    n: usize,
    out_dim: usize,
    sigma: f64,
    domain: DomainId,
) -> Result<DomainDataset> {
    let c = centroids.ncols();
    let latent_dim = centroids.nrows();
    let map = full_rank_map(rng, out_dim, latent_dim)?;
    let mut ids: Vec<usize> = (0..n).map(|i| i % c).collect();
    ids.shuffle(rng);
    let mut latent = DMatrix::zeros(latent_dim, n);
    for (col, &k) in ids.iter().enumerate() {
        for row in 0..latent_dim {
            let z: f64 = StandardNormal.sample(rng);
            latent[(row, col)] = centroids[(row, k)] + sigma * z;
        }
    }
    DomainDataset::with_class_ids(&map * latent, ids, c, domain)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(
        c: usize,
        ns: usize,
        nt: usize,
        dl: usize,
        ds: usize,
        dt: usize,
        sigma: f64,
    ) -> SynthSpec {
        SynthSpec {
            class_count: c,
            n_source: ns,
            n_target: nt,
            latent_dim: dl,
            source_dim: ds,
            target_dim: dt,
            noise_sigma: sigma,
            seed: 3,
            query_count: Some(1),
        }
    }

    fn class_distance_means(ds: &DomainDataset) -> (f64, f64) {
        let ids = ds.class_ids().unwrap();
        let x = ds.features();
        let (mut within, mut nw, mut between, mut nb) = (0.0, 0usize, 0.0, 0usize);
        for i in 0..ds.len() {
            for j in i + 1..ds.len() {
                let d = (x.column(i) - x.column(j)).norm();
                if ids[i] == ids[j] {
                    within += d;
                    nw += 1;
                } else {
                    between += d;
                    nb += 1;
                }
            }
        }
        (within / nw as f64, between / nb as f64)
    }

    #[test]
    fn zero_noise_repeats_class_points() {
        let task = generate_synthetic_gitr(&spec(2, 4, 4, 2, 3, 5, 0.0)).unwrap();
        assert_eq!(task.subtask(), Subtask::HeCDR);
        for ds in [task.source(), task.target()] {
            let ids = ds.class_ids().unwrap();
            for k in 0..2 {
                let cols: Vec<usize> = (0..4).filter(|&i| ids[i] == k).collect();
                assert_eq!(cols.len(), 2);
                assert_eq!(ds.features().column(cols[0]), ds.features().column(cols[1]));
            }
        }
        assert_eq!(task.source().dim(), 3);
        assert_eq!(task.target().dim(), 5);
    }

    #[test]
    fn deterministic_under_seed() {
        let s = spec(3, 12, 9, 2, 4, 3, 0.2);
        assert_eq!(
            generate_synthetic_gitr(&s).unwrap(),
            generate_synthetic_gitr(&s).unwrap()
        );
        let mut other = s.clone();
        other.seed += 1;
        assert_ne!(
            generate_synthetic_gitr(&s).unwrap(),
            generate_synthetic_gitr(&other).unwrap()
        );
    }

    #[test]
    fn classes_separate_in_raw_feature_spaces() {
        let s = SynthSpec {
            latent_dim: 10,
            seed: 0,
            ..SynthSpec::default()
        };
        let task = generate_synthetic_gitr(&s).unwrap();
        for ds in [task.source(), task.target()] {
            let (within, between) = class_distance_means(ds);
            assert!(within < between, "within {within} vs between {between}");
        }
    }

    #[test]
    fn balanced_class_counts() {
        let task = generate_synthetic_gitr(&spec(3, 10, 11, 2, 4, 3, 0.1)).unwrap();
        for ds in [task.source(), task.target()] {
            let mut counts = [0usize; 3];
            for &k in ds.class_ids().unwrap() {
                counts[k] += 1;
            }
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(hi - lo <= 1, "{counts:?}");
        }
    }

    #[test]
    fn infeasible_specs_are_rejected() {
        assert!(generate_synthetic_gitr(&spec(2, 4, 4, 4, 3, 5, 0.1)).is_err());
        assert!(generate_synthetic_gitr(&spec(1, 4, 4, 2, 3, 5, 0.1)).is_err());
        assert!(generate_synthetic_gitr(&spec(3, 4, 6, 2, 3, 5, 0.1)).is_err());
    }
}
