use super::{evaluate, CurvePoint};
use crate::classifier::ClassifierModel;
use crate::error::{Error, Result};
use crate::features::{extract_features, Augmentation, Backend};
use crate::imaging::Degradation;
use crate::manifest::{Manifest, Split};

/// Re-extracts and evaluates the test split under each degradation level.
///
/// The first point is always the clean baseline, with degradation and level
/// both "none"; levels follow in the order given.
pub fn robustness_sweep(
    model: &ClassifierModel,
    manifest: &Manifest,
    backend: &Backend,
    degradations: &[Degradation],
) -> Result<Vec<CurvePoint>> {
    if let Backend::File(path) = backend {
        return Err(Error::Validation(format!(
            "features from {} cannot be degraded; robustness sweeps need an image backend",
            path.display()
        )));
    }
    let test = manifest.restricted_to(Split::Test);
    if test.records.is_empty() {
        return Err(Error::Validation("manifest has no test records".into()));
    }
    let run = |aug: Option<Augmentation>, name: &str, level: String| -> Result<CurvePoint> {
        let features = extract_features(&test, backend, aug.as_ref())?;
        let report = evaluate(model, &features, None)?;
        log::info!("{name} {level}: mAcc {:.2}", report.macc);
        Ok(CurvePoint {
            degradation: name.to_string(),
            level,
            macc: report.macc,
            subsets: report.subsets,
        })
    };
    let mut points = vec![run(None, "none", "none".into())?];
    for d in degradations {
        points.push(run(Some(Augmentation::Degrade(*d)), d.name(), d.level())?);
    }
    Ok(points)
}
