//! Positive-transfer diagnostic: label the target by 1-nearest-neighbor
//! against the labelled source in the current mapping space, once per
//! iteration, and score against the target ground truth. Pseudo-labels are
//! never fed back into training.

use nalgebra::DMatrix;

use crate::data::{DomainDataset, DomainId, Labels};
use crate::error::{AthError, Result};
use crate::graph::squared_distances;
use crate::model::{pca_projection, Variant};
use crate::optimizer::{train_with_observer, HyperParams, TrainOptions, TrainState};

/// Accuracy and objective after initialization and after every pass.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct TransferTrace {
    pub accuracy_per_iter: Vec<f64>,
    pub objective_per_iter: Vec<f64>,
}

/// Class of the Euclidean-nearest source column for every target column;
/// ties go to the lower source index.
pub fn pseudo_label(
    target_mapped: &DMatrix<f64>,
    source_mapped: &DMatrix<f64>,
    source_labels: &Labels,
) -> Result<Labels> {
    if source_mapped.ncols() == 0 {
        return Err(AthError::InvalidArgument(
            "pseudo-labelling needs a non-empty source".into(),
        ));
    }
    if target_mapped.nrows() != source_mapped.nrows() {
        return Err(AthError::Dimension(format!(
            "target mapping has dimension {}, source mapping {}",
            target_mapped.nrows(),
            source_mapped.nrows()
        )));
    }
    if source_labels.len() != source_mapped.ncols() {
        return Err(AthError::LabelColumnMismatch {
            labels: source_labels.len(),
            features: source_mapped.ncols(),
        });
    }
    let d = squared_distances(source_mapped, target_mapped);
    let ids = source_labels.class_ids();
    let predicted = (0..target_mapped.ncols())
        .map(|j| {
            let mut best = 0;
            for i in 1..d.nrows() {
                if d[(i, j)] < d[(best, j)] {
                    best = i;
                }
            }
            ids[best]
        })
        .collect();
    Labels::from_class_ids(predicted, source_labels.class_count())
}

/// Fraction of columns whose one-hot vectors agree exactly.
pub fn accuracy(predicted: &Labels, truth: &Labels) -> Result<f64> {
    if predicted.one_hot().shape() != truth.one_hot().shape() {
        return Err(AthError::Dimension(format!(
            "predicted labels are {:?}, truth is {:?}",
            predicted.one_hot().shape(),
            truth.one_hot().shape()
        )));
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let hits = predicted
        .class_ids()
        .iter()
        .zip(truth.class_ids())
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

fn source_labels(source: &DomainDataset) -> Result<&Labels> {
    source
        .labels()
        .ok_or_else(|| AthError::MissingLabels("pseudo-labelling needs source labels".into()))
}

/// 1-NN labels of the target before any training: raw features when the
/// domains share a feature space, otherwise each domain's own top-`k` PCA
/// projection with `k = min(r, d_s, d_t)`.
pub fn initial_pseudo_label(
    source: &DomainDataset,
    target: &DomainDataset,
    code_length: usize,
) -> Result<Labels> {
    let labels = source_labels(source)?;
    if source.dim() == target.dim() {
        pseudo_label(target.features(), source.features(), labels)
    } else {
        let k = code_length.min(source.dim()).min(target.dim());
        let a_s = pca_projection(source.features(), k)?;
        let a_t = pca_projection(target.features(), k)?;
        pseudo_label(
            &a_t.tr_mul(target.features()),
            &a_s.tr_mul(source.features()),
            labels,
        )
    }
}

/// Trains and records, at every iteration, 1-NN pseudo-label accuracy in
/// the learned mapping space together with the objective. The first entry
/// uses [`initial_pseudo_label`].
pub fn trace_transfer(
    source: &DomainDataset,
    target: &DomainDataset,
    hp: &HyperParams,
    variant: Variant,
    opts: &TrainOptions,
) -> Result<(TransferTrace, TrainState)> {
    let truth = target.labels().ok_or_else(|| {
        AthError::MissingLabels(
            "scoring the transfer trace needs target ground-truth labels".into(),
        )
    })?;
    let s_labels = source_labels(source)?;
    let initial = accuracy(
        &initial_pseudo_label(source, target, hp.code_length)?,
        truth,
    )?;

    let mut trace = TransferTrace::default();
    let mut failure = None;
    let state = train_with_observer(source, target, hp, variant, opts, |view| {
        trace
            .objective_per_iter
            .push(*view.state.objective_trace.last().expect("recorded"));
        if view.iteration == 0 {
            trace.accuracy_per_iter.push(initial);
            return;
        }
        let y_s = view.state.mapped(DomainId::Source);
        let y_t = view.state.mapped(DomainId::Target);
        match pseudo_label(&y_t, &y_s, s_labels).and_then(|p| accuracy(&p, truth)) {
            Ok(acc) => trace.accuracy_per_iter.push(acc),
            Err(e) => {
                failure.get_or_insert(e);
                trace.accuracy_per_iter.push(0.0);
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((trace, state))
}
