//! Asymmetric hash functions: one projection per domain, optionally on top
//! of a Gaussian kernel map, and the binary codes they produce.

mod io;
mod kernel;
mod pca;

pub use io::{load_model, save_model};
pub use kernel::{KernelMap, SigmaMode};
pub use pca::pca_projection;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::DomainDataset;
use crate::error::{AthError, Result};

/// Which flavor of the method a model was trained as.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Unsupervised: kNN domain graphs, learned bipartite graph.
    U,
    /// Source labelled: semantic source graph, kNN target graph, learned
    /// bipartite graph.
    M,
    /// Both domains labelled: semantic domain graphs and semantic bipartite
    /// graph.
    S,
    /// [`Variant::S`] on Gaussian kernel features.
    K,
}

impl Variant {
    pub fn tag(self) -> u8 {
        match self {
            Variant::U => 0,
            Variant::M => 1,
            Variant::S => 2,
            Variant::K => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Variant::U),
            1 => Some(Variant::M),
            2 => Some(Variant::S),
            3 => Some(Variant::K),
            _ => None,
        }
    }

    pub fn learns_bipartite(self) -> bool {
        matches!(self, Variant::U | Variant::M)
    }

    pub fn uses_kernel(self) -> bool {
        self == Variant::K
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Variant::U => "U",
            Variant::M => "M",
            Variant::S => "S",
            Variant::K => "K",
        };
        f.write_str(s)
    }
}

impl FromStr for Variant {
    type Err = AthError;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_uppercase();
        let t = t.strip_prefix("ATH_").unwrap_or(&t);
        match t {
            "U" => Ok(Variant::U),
            "M" => Ok(Variant::M),
            "S" => Ok(Variant::S),
            "K" => Ok(Variant::K),
            _ => Err(AthError::InvalidArgument(format!("unknown variant '{s}'"))),
        }
    }
}

/// `f(x) = Aᵀx`, or `Aᵀφ(x)` with a kernel map.
#[derive(Clone, Debug, PartialEq)]
pub struct HashFunction {
    projection: DMatrix<f64>,
    kernel: Option<KernelMap>,
    input_dim: usize,
}

impl HashFunction {
    pub fn linear(projection: DMatrix<f64>) -> Result<Self> {
        Self::new(projection, None)
    }

    pub fn new(projection: DMatrix<f64>, kernel: Option<KernelMap>) -> Result<Self> {
        if projection.ncols() == 0 {
            return Err(AthError::InvalidArgument(
                "code length must be at least 1".into(),
            ));
        }
        let input_dim = match &kernel {
            Some(k) => {
                if projection.nrows() != k.anchor_count() {
                    return Err(AthError::Dimension(format!(
                        "projection has {} rows but the kernel has {} anchors",
                        projection.nrows(),
                        k.anchor_count()
                    )));
                }
                k.input_dim()
            }
            None => projection.nrows(),
        };
        Ok(HashFunction {
            projection,
            kernel,
            input_dim,
        })
    }

    pub fn projection(&self) -> &DMatrix<f64> {
        &self.projection
    }

    pub fn kernel(&self) -> Option<&KernelMap> {
        self.kernel.as_ref()
    }

    /// Raw feature dimension accepted by this function.
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn code_length(&self) -> usize {
        self.projection.ncols()
    }

    pub(crate) fn with_projection(&self, projection: DMatrix<f64>) -> Self {
        debug_assert_eq!(projection.shape(), self.projection.shape());
        HashFunction {
            projection,
            kernel: self.kernel.clone(),
            input_dim: self.input_dim,
        }
    }

    /// Input to the projection: raw features, or their kernel features.
    pub fn lift(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.input_dim {
            return Err(AthError::Dimension(format!(
                "hash function expects dimension {}, data has {}",
                self.input_dim,
                x.nrows()
            )));
        }
        match &self.kernel {
            Some(k) => k.transform(x),
            None => Ok(x.clone()),
        }
    }

    pub fn map_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.projection.tr_mul(&self.lift(x)?))
    }
}

/// `r × n` real-valued mapping of a dataset.
pub fn map_real(f: &HashFunction, data: &DomainDataset) -> Result<DMatrix<f64>> {
    f.map_matrix(data.features())
}

/// Sign of the real mapping, with `sign(0) = +1`. Rows are not balanced.
pub fn encode(f: &HashFunction, data: &DomainDataset) -> Result<BinaryCodes> {
    Ok(BinaryCodes::from_real(&map_real(f, data)?))
}

/// `r × n` matrix of ±1 codes; column `j` is the code of sample `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryCodes {
    codes: DMatrix<i8>,
}

impl BinaryCodes {
    pub fn new(codes: DMatrix<i8>) -> Result<Self> {
        if codes.iter().any(|&v| v != 1 && v != -1) {
            return Err(AthError::InvalidArgument("codes must be ±1".into()));
        }
        Ok(BinaryCodes { codes })
    }

    pub fn from_real(m: &DMatrix<f64>) -> Self {
        BinaryCodes {
            codes: m.map(|v| if v >= 0.0 { 1 } else { -1 }),
        }
    }

    pub fn codes(&self) -> &DMatrix<i8> {
        &self.codes
    }

    pub fn code_length(&self) -> usize {
        self.codes.nrows()
    }

    pub fn len(&self) -> usize {
        self.codes.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.ncols() == 0
    }

    pub fn to_real(&self) -> DMatrix<f64> {
        self.codes.map(f64::from)
    }

    /// Every row has `|Σ_j b_ij| ≤ 1`.
    pub fn is_balanced(&self) -> bool {
        self.codes
            .row_iter()
            .all(|r| r.iter().map(|&v| i64::from(v)).sum::<i64>().abs() <= 1)
    }

    /// Flips the smallest-magnitude entries of each row's majority sign
    /// until `|row sum| ≤ 1`. `magnitudes` is the real mapping the codes
    /// came from; ties go to the lower column index.
    pub fn balance_repair(&mut self, magnitudes: &DMatrix<f64>) {
        assert_eq!(magnitudes.shape(), self.codes.shape());
        for i in 0..self.codes.nrows() {
            let sum: i64 = self.codes.row(i).iter().map(|&v| i64::from(v)).sum();
            if sum.abs() <= 1 {
                continue;
            }
            let majority: i8 = if sum > 0 { 1 } else { -1 };
            let mut cand: Vec<usize> = (0..self.codes.ncols())
                .filter(|&j| self.codes[(i, j)] == majority)
                .collect();
            cand.sort_by(|&a, &b| {
                magnitudes[(i, a)]
                    .abs()
                    .total_cmp(&magnitudes[(i, b)].abs())
                    .then(a.cmp(&b))
            });
            let flips = (sum.unsigned_abs() / 2) as usize;
            for &j in cand.iter().take(flips) {
                self.codes[(i, j)] = -majority;
            }
        }
    }
}

/// The asymmetric pair of hash functions.
#[derive(Clone, Debug, PartialEq)]
pub struct HashModel {
    source_fn: HashFunction,
    target_fn: HashFunction,
    variant: Variant,
}

impl HashModel {
    pub fn new(source_fn: HashFunction, target_fn: HashFunction, variant: Variant) -> Result<Self> {
        if source_fn.code_length() != target_fn.code_length() {
            return Err(AthError::Dimension(format!(
                "code lengths differ: source {}, target {}",
                source_fn.code_length(),
                target_fn.code_length()
            )));
        }
        if variant.uses_kernel() != (source_fn.kernel().is_some() && target_fn.kernel().is_some()) {
            return Err(AthError::InvalidArgument(format!(
                "variant {variant} and kernel maps are inconsistent"
            )));
        }
        Ok(HashModel {
            source_fn,
            target_fn,
            variant,
        })
    }

    pub fn source_fn(&self) -> &HashFunction {
        &self.source_fn
    }

    pub fn target_fn(&self) -> &HashFunction {
        &self.target_fn
    }

    pub fn code_length(&self) -> usize {
        self.source_fn.code_length()
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub(crate) fn with_projections(&self, a_s: DMatrix<f64>, a_t: DMatrix<f64>) -> Self {
        HashModel {
            source_fn: self.source_fn.with_projection(a_s),
            target_fn: self.target_fn.with_projection(a_t),
            variant: self.variant,
        }
    }
}

/// Anchor counts and width for the kernel variant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSpec {
    pub source_anchors: usize,
    pub target_anchors: usize,
    pub sigma: SigmaMode,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            source_anchors: 300,
            target_anchors: 300,
            sigma: SigmaMode::Median,
        }
    }
}

/// Initial model and codes for a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct Initialization {
    pub model: HashModel,
    pub codes_s: BinaryCodes,
    pub codes_t: BinaryCodes,
}

/// PCA projections per domain (on kernel features for [`Variant::K`]),
/// codes `sign(AᵀX)` followed by balance repair.
///
/// Anchor counts larger than a domain are capped at its sample count. When
/// the code length exceeds a domain's input dimension, the full PCA basis is
/// followed by seeded random unit directions.
pub fn init_model(
    source: &DomainDataset,
    target: &DomainDataset,
    code_length: usize,
    variant: Variant,
    kernel_spec: Option<KernelSpec>,
    seed: u64,
) -> Result<Initialization> {
    if code_length == 0 {
        return Err(AthError::InvalidArgument(
            "code length must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut build = |ds: &DomainDataset,
                     anchors: Option<(usize, SigmaMode)>|
     -> Result<(HashFunction, BinaryCodes)> {
        if ds.len() < 2 {
            return Err(AthError::InvalidArgument(
                "each domain needs at least 2 samples".into(),
            ));
        }
        let kernel = match anchors {
            Some((m, sigma)) => Some(KernelMap::sample(
                ds.features(),
                m.min(ds.len()),
                sigma,
                &mut rng,
            )?),
            None => None,
        };
        let lifted = match &kernel {
            Some(k) => k.transform(ds.features())?,
            None => ds.features().clone(),
        };
        let a = init_projection(&lifted, code_length, &mut rng)?;
        let mapped = a.tr_mul(&lifted);
        let mut codes = BinaryCodes::from_real(&mapped);
        codes.balance_repair(&mapped);
        Ok((HashFunction::new(a, kernel)?, codes))
    };
    let spec = if variant.uses_kernel() {
        Some(kernel_spec.unwrap_or_default())
    } else {
        None
    };
    let (f_s, codes_s) = build(source, spec.map(|k| (k.source_anchors, k.sigma)))?;
    let (f_t, codes_t) = build(target, spec.map(|k| (k.target_anchors, k.sigma)))?;
    Ok(Initialization {
        model: HashModel::new(f_s, f_t, variant)?,
        codes_s,
        codes_t,
    })
}

/// Top-`r` PCA directions, padded with random unit directions past `d`.
pub(crate) fn init_projection(
    x: &DMatrix<f64>,
    r: usize,
    rng: &mut ChaCha8Rng,
) -> Result<DMatrix<f64>> {
    let d = x.nrows();
    if r <= d {
        return pca_projection(x, r);
    }
    let basis = pca_projection(x, d)?;
    let mut a = DMatrix::zeros(d, r);
    a.columns_mut(0, d).copy_from(&basis);
    for k in d..r {
        let mut v = nalgebra::DVector::from_fn(d, |_, _| -> f64 { StandardNormal.sample(rng) });
        let norm = v.norm();
        if norm > 0.0 {
            v /= norm;
        }
        a.set_column(k, &v);
    }
    Ok(a)
}
