//! Accuracy metrics, threshold calibration, robustness sweeps and
//! separability diagnostics.

mod report;
mod robustness;
mod separability;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use report::{emit_report, read_report_csv, read_report_json, ReportFormat, ReportRow};
pub use robustness::robustness_sweep;
pub use separability::{fisher_ratio, pca_project2d, write_pca_csv, PcaPoint};

use crate::classifier::ClassifierModel;
use crate::error::{Error, Result};
use crate::features::{FeatureRecord, FeatureSet};
use crate::manifest::{group_by_generator, Label, Split, Tagged};

/// Accuracies (percent) for one generator and the reals paired with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetAccuracy {
    pub generator: String,
    pub real_acc: f64,
    pub fake_acc: f64,
    pub balanced_acc: f64,
    pub n_real: usize,
    pub n_fake: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub degradation: String,
    pub level: String,
    pub macc: f64,
    pub subsets: Vec<SubsetAccuracy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Separability {
    pub fisher_ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pca2d: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub model_digest: String,
    pub featureset_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub subsets: Vec<SubsetAccuracy>,
    pub macc: f64,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub robustness: Vec<CurvePoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separability: Option<Separability>,
    #[serde(default)]
    pub provenance: Provenance,
}

impl EvalReport {
    /// Builds a report whose mAcc is the mean of the given subsets.
    pub fn from_subsets(dataset: impl Into<String>, subsets: Vec<SubsetAccuracy>, threshold: f64) -> Result<Self> {
        let balanced: Vec<f64> = subsets.iter().map(|s| s.balanced_acc).collect();
        Ok(EvalReport {
            dataset: dataset.into(),
            macc: mean_accuracy(&balanced)?,
            subsets,
            threshold,
            robustness: Vec::new(),
            separability: None,
            provenance: Provenance::default(),
        })
    }
}

/// Arithmetic mean of per-subset accuracies.
pub fn mean_accuracy(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Validation("no subsets to average".into()));
    }
    if let Some(v) = values.iter().find(|v| !(0.0..=100.0).contains(*v)) {
        return Err(Error::Validation(format!("accuracy {v} outside [0, 100]")));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Fake probabilities for every record, in record order.
pub fn score_features(model: &ClassifierModel, features: &FeatureSet) -> Result<Vec<f64>> {
    features.ensure_dim(model.input_dim)?;
    features
        .records
        .par_iter()
        .map(|r| model.predict_f32(&r.features))
        .collect()
}

struct Scored<'a> {
    record: &'a FeatureRecord,
    score: f64,
}

impl Tagged for Scored<'_> {
    fn id(&self) -> &str {
        &self.record.id
    }
    fn label(&self) -> Label {
        self.record.label
    }
    fn generator(&self) -> &str {
        &self.record.generator
    }
    fn split(&self) -> Split {
        self.record.split
    }
}

fn percent(hits: usize, n: usize) -> f64 {
    100.0 * hits as f64 / n as f64
}

/// Per-generator accuracies at threshold `t`: reals are correct below `t`,
/// fakes at or above it.
pub fn subset_accuracies(features: &FeatureSet, scores: &[f64], t: f64) -> Result<Vec<SubsetAccuracy>> {
    if features.is_empty() {
        return Err(Error::Validation("cannot evaluate an empty feature set".into()));
    }
    let scored: Vec<Scored> = features
        .records
        .iter()
        .zip(scores)
        .map(|(record, &score)| Scored { record, score })
        .collect();
    let groups = group_by_generator(&scored)?;
    if groups.is_empty() {
        return Err(Error::Validation("feature set has no fake records".into()));
    }
    Ok(groups
        .into_iter()
        .map(|g| {
            let real_acc = percent(g.reals.iter().filter(|s| s.score < t).count(), g.reals.len());
            let fake_acc = percent(g.fakes.iter().filter(|s| s.score >= t).count(), g.fakes.len());
            SubsetAccuracy {
                generator: g.generator,
                real_acc,
                fake_acc,
                balanced_acc: (real_acc + fake_acc) / 2.0,
                n_real: g.reals.len(),
                n_fake: g.fakes.len(),
            }
        })
        .collect())
}

/// Scores every record and reports per-subset accuracies. The threshold
/// defaults to the model's own.
pub fn evaluate(model: &ClassifierModel, features: &FeatureSet, threshold: Option<f64>) -> Result<EvalReport> {
    let t = threshold.unwrap_or(model.threshold);
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("threshold {t} outside [0, 1]")));
    }
    let scores = score_features(model, features)?;
    let subsets = subset_accuracies(features, &scores, t)?;
    let mut report = EvalReport::from_subsets(String::new(), subsets, t)?;
    report.provenance = Provenance {
        model_digest: model.digest(),
        featureset_digest: features.digest(),
    };
    Ok(report)
}

/// Balanced accuracy (fraction) of thresholding `scores` at `t`.
pub fn balanced_accuracy(scores: &[f64], labels: &[Label], t: f64) -> f64 {
    let (mut real_hit, mut n_real, mut fake_hit, mut n_fake) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match l {
            Label::Real => {
                n_real += 1;
                real_hit += usize::from(s < t);
            }
            Label::Fake => {
                n_fake += 1;
                fake_hit += usize::from(s >= t);
            }
        }
    }
    balanced_from_counts(real_hit, n_real, fake_hit, n_fake)
}

fn balanced_from_counts(real_hit: usize, n_real: usize, fake_hit: usize, n_fake: usize) -> f64 {
    (real_hit as f64 / n_real as f64 + fake_hit as f64 / n_fake as f64) / 2.0
}

/// Threshold maximizing balanced accuracy over the midpoints between
/// consecutive distinct scores plus 0 and 1. Ties go to the candidate
/// nearest 0.5, then to the smaller one.
pub fn calibrate_scores(scores: &[f64], labels: &[Label]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument("scores and labels differ in length".into()));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Numerical(format!("non-finite score {s}")));
    }
    let n_real = labels.iter().filter(|&&l| l == Label::Real).count();
    let n_fake = labels.len() - n_real;
    if n_real == 0 || n_fake == 0 {
        return Err(Error::Validation("calibration needs both real and fake records".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut best: (f64, f64) = (0.0, balanced_from_counts(0, n_real, n_fake, n_fake));
    let mut consider = |t: f64, acc: f64| {
        let better = acc > best.1
            || (acc == best.1
                && ((t - 0.5).abs() < (best.0 - 0.5).abs() || ((t - 0.5).abs() == (best.0 - 0.5).abs() && t < best.0)));
        if better {
            best = (t, acc);
        }
    };
    // Walking up the sorted scores, everything passed is predicted real.
    let (mut reals_below, mut fakes_below) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            match labels[order[i]] {
                Label::Real => reals_below += 1,
                Label::Fake => fakes_below += 1,
            }
            i += 1;
        }
        let t = if i < order.len() {
            let next = scores[order[i]];
            let mid = s + (next - s) / 2.0;
            if mid > s {
                mid
            } else {
                next
            }
        } else {
            1.0
        };
        if i == order.len() && s >= 1.0 {
            break;
        }
        consider(
            t,
            balanced_from_counts(reals_below, n_real, n_fake - fakes_below, n_fake),
        );
    }
    Ok(best.0)
}

/// Calibrates the decision threshold on a validation feature set.
pub fn calibrate_threshold(model: &ClassifierModel, features: &FeatureSet) -> Result<f64> {
    let scores = score_features(model, features)?;
    let labels: Vec<Label> = features.records.iter().map(|r| r.label).collect();
    calibrate_scores(&scores, &labels)
}
