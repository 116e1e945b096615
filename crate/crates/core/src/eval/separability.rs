use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::io_util::write_atomic;
use crate::manifest::{Label, Split};

const FISHER_EPS: f64 = 1e-12;
const PCA_TOL: f64 = 1e-10;
const PCA_MAX_ITER: usize = 100_000;

/// Summed per-dimension Fisher ratio between the real and fake classes,
/// using population variances. `split` of `None` uses every record.
pub fn fisher_ratio(features: &FeatureSet, split: Option<Split>) -> Result<f64> {
    let rows: Vec<_> = features
        .records
        .iter()
        .filter(|r| split.is_none_or(|s| r.split == s))
        .collect();
    let moments = |label: Label| -> Option<(Vec<f64>, Vec<f64>)> {
        let class: Vec<&[f32]> = rows
            .iter()
            .filter(|r| r.label == label)
            .map(|r| r.features.as_slice())
            .collect();
        if class.is_empty() {
            return None;
        }
        let n = class.len() as f64;
        let mut mean = vec![0.0; features.dim];
        for x in &class {
            mean.iter_mut().zip(*x).for_each(|(m, &v)| *m += f64::from(v));
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; features.dim];
        for x in &class {
            for ((s, &v), m) in var.iter_mut().zip(*x).zip(&mean) {
                *s += (f64::from(v) - m).powi(2);
            }
        }
        var.iter_mut().for_each(|s| *s /= n);
        Some((mean, var))
    };
    let (Some((mu_r, var_r)), Some((mu_f, var_f))) = (moments(Label::Real), moments(Label::Fake)) else {
        return Err(Error::Validation(
            "Fisher ratio needs both real and fake records".into(),
        ));
    };
    Ok((0..features.dim)
        .map(|d| (mu_f[d] - mu_r[d]).powi(2) / (var_r[d] + var_f[d] + FISHER_EPS))
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaPoint {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub label: Label,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn mat_vec(c: &[f64], v: &[f64]) -> Vec<f64> {
    let d = v.len();
    (0..d)
        .map(|i| c[i * d..(i + 1) * d].iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

fn orthogonalize(v: &mut [f64], against: &[Vec<f64>]) {
    for u in against {
        let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
        v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
    }
}

fn sign_normalize(v: &mut [f64]) {
    if let Some(&first) = v.iter().find(|x| x.abs() > 1e-12) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Leading unit eigenvector of the symmetric matrix `c`, orthogonal to
/// `found`, with its eigenvalue.
fn power_iteration(c: &[f64], d: usize, found: &[Vec<f64>]) -> (Vec<f64>, f64) {
    // Start from the basis direction with the largest remaining diagonal.
    let mut start = vec![0.0; d];
    let mut best = f64::NEG_INFINITY;
    for k in 0..d {
        let mut e = vec![0.0; d];
        e[k] = 1.0;
        orthogonalize(&mut e, found);
        let n = norm(&e);
        if n < 1e-8 {
            continue;
        }
        e.iter_mut().for_each(|x| *x /= n);
        let rayleigh: f64 = mat_vec(c, &e).iter().zip(&e).map(|(a, b)| a * b).sum();
        if rayleigh > best {
            best = rayleigh;
            start = e;
        }
    }
    let mut v = start;
    for _ in 0..PCA_MAX_ITER {
        let mut w = mat_vec(c, &v);
        orthogonalize(&mut w, found);
        let n = norm(&w);
        if n < 1e-300 {
            break;
        }
        w.iter_mut().for_each(|x| *x /= n);
        let delta = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = w;
        if delta < PCA_TOL {
            break;
        }
    }
    sign_normalize(&mut v);
    let lambda = mat_vec(c, &v).iter().zip(&v).map(|(a, b)| a * b).sum();
    (v, lambda)
}

/// Projects mean-centered features onto the top two principal axes.
///
/// Each axis is signed so that its first non-negligible loading is positive.
/// One-dimensional inputs get a zero second coordinate.
pub fn pca_project2d(features: &FeatureSet) -> Result<Vec<PcaPoint>> {
    let n = features.records.len();
    if n < 3 {
        return Err(Error::Validation(format!(
            "projection needs at least 3 records, got {n}"
        )));
    }
    let d = features.dim;
    let rows: Vec<Vec<f64>> = features
        .records
        .iter()
        .map(|r| r.features.iter().map(|&v| f64::from(v)).collect())
        .collect();
    let mut mean = vec![0.0; d];
    for x in &rows {
        mean.iter_mut().zip(x).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<Vec<f64>> = rows
        .iter()
        .map(|x| x.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();
    let mut cov = vec![0.0; d * d];
    for x in &centered {
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] += x[i] * x[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i * d + j] /= n as f64;
            cov[j * d + i] = cov[i * d + j];
        }
    }
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    if trace <= 0.0 {
        return Err(Error::Numerical("features have zero variance".into()));
    }
    let (v1, l1) = power_iteration(&cov, d, &[]);
    let mut axes = vec![v1];
    if d > 1 {
        let mut deflated = cov.clone();
        for i in 0..d {
            for j in 0..d {
                deflated[i * d + j] -= l1 * axes[0][i] * axes[0][j];
            }
        }
        let (v2, _) = power_iteration(&deflated, d, &axes);
        axes.push(v2);
    }
    let project =
        |x: &[f64], k: usize| -> f64 { axes.get(k).map_or(0.0, |a| a.iter().zip(x).map(|(p, q)| p * q).sum()) };
    Ok(features
        .records
        .iter()
        .zip(&centered)
        .map(|(r, x)| PcaPoint {
            id: r.id.clone(),
            x: project(x, 0),
            y: project(x, 1),
            label: r.label,
        })
        .collect())
}

/// Writes projected points as `id,x,y,label` CSV.
pub fn write_pca_csv(points: &[PcaPoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in points {
        w.serialize(p)
            .map_err(|e| Error::format("projection csv", e.to_string()))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::format("projection csv", e.to_string()))?;
    write_atomic(path, &bytes)
}
