#![allow(dead_code)]

use pfd_core::classifier::{total_loss, ClassifierModel};
use pfd_core::manifest::Label;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Per-generator accuracies and mAcc of two published benchmark rows.
pub const CONTRIQUE_ROW: [f64; 8] = [90.94, 96.04, 95.91, 90.32, 90.68, 96.08, 90.45, 69.91];
pub const CONTRIQUE_MACC: f64 = 90.04;
pub const DRCT_UNIVFD_ROW: [f64; 8] = [91.50, 95.00, 94.41, 79.42, 89.18, 94.66, 90.02, 81.63];
pub const DRCT_UNIVFD_MACC: f64 = 89.48;

/// Losses by direct double loop: (contrastive, cross-entropy, total).
pub fn naive_losses(hidden: &[Vec<f64>], probs: &[f64], labels: &[f64], lambda: f64, margin: f64) -> (f64, f64, f64) {
    let n = hidden.len();
    let mut cl = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut sq = 0.0;
            for (a, b) in hidden[i].iter().zip(&hidden[j]) {
                sq += (a - b) * (a - b);
            }
            let d = sq.sqrt();
            if labels[i] == labels[j] {
                cl += d * d;
            } else {
                let gap = margin - d;
                if gap > 0.0 {
                    cl += gap * gap;
                }
            }
        }
    }
    cl /= (n * n) as f64;
    let mut ce = 0.0;
    for i in 0..n {
        ce -= if labels[i] == 1.0 {
            probs[i].ln()
        } else {
            (1.0 - probs[i]).ln()
        };
    }
    ce /= n as f64;
    (cl, ce, lambda * cl + (1.0 - lambda) * ce)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// A model with every parameter drawn at random.
pub fn random_model(d: usize, h: usize, rng: &mut ChaCha8Rng) -> ClassifierModel {
    let mut m = ClassifierModel::zeros(d, h);
    let s1 = (6.0 / d as f64).sqrt();
    let s2 = (6.0 / h as f64).sqrt();
    m.w1.iter_mut().for_each(|w| *w = rng.random_range(-s1..s1));
    m.b1.iter_mut().for_each(|w| *w = rng.random_range(-0.5..0.5));
    m.w2.iter_mut().for_each(|w| *w = rng.random_range(-s2..s2));
    m.b2 = rng.random_range(-0.5..0.5);
    m.norm_mu.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
    m.norm_sigma.iter_mut().for_each(|w| *w = rng.random_range(0.5..2.0));
    m
}

fn param_mut(m: &mut ClassifierModel, idx: usize) -> &mut f64 {
    let (a, b, c) = (m.w1.len(), m.b1.len(), m.w2.len());
    if idx < a {
        &mut m.w1[idx]
    } else if idx < a + b {
        &mut m.b1[idx - a]
    } else if idx < a + b + c {
        &mut m.w2[idx - a - b]
    } else {
        &mut m.b2
    }
}

/// Relative error (vector norm) between analytic gradients and central
/// finite differences for one random model and batch. `sample` limits the
/// number of parameters checked.
pub fn gradient_check(seed: u64, d: usize, h: usize, n: usize, sample: Option<usize>) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = random_model(d, h, &mut rng);
    let inputs: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let mut targets: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
    if rng.random_bool(0.3) {
        targets
            .iter_mut()
            .for_each(|t| *t = if rng.random_bool(0.5) { 1.0 } else { 0.0 });
    }
    let lambda = 0.3;
    let refs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
    let base = model.forward_batch(&refs, &targets).unwrap();
    // Margin comparable to the typical embedding distance so that the hinge
    // is active for some pairs.
    let mean_d = base.loss.distances.iter().sum::<f64>() / (n * (n - 1)).max(1) as f64;
    let margin = 1.0 + mean_d * rng.random_range(0.5..1.5);
    let g = model.backward(&base, lambda, margin);
    let analytic: Vec<f64> =
        g.w1.iter()
            .chain(&g.b1)
            .chain(&g.w2)
            .chain(std::iter::once(&g.b2))
            .copied()
            .collect();

    let total = analytic.len();
    let indices: Vec<usize> = match sample {
        Some(k) if k < total => (0..k).map(|_| rng.random_range(0..total)).collect(),
        _ => (0..total).collect(),
    };
    let step = 1e-5;
    let loss_at = |m: &ClassifierModel| {
        let fb = m.forward_batch(&refs, &targets).unwrap();
        total_loss(&fb.loss, lambda, margin)
    };
    let mut probe = model.clone();
    let (mut diff2, mut a2, mut n2) = (0.0, 0.0, 0.0);
    for &idx in &indices {
        let orig = *param_mut(&mut probe, idx);
        *param_mut(&mut probe, idx) = orig + step;
        let up = loss_at(&probe);
        *param_mut(&mut probe, idx) = orig - step;
        let down = loss_at(&probe);
        *param_mut(&mut probe, idx) = orig;
        let numeric = (up - down) / (2.0 * step);
        diff2 += (numeric - analytic[idx]).powi(2);
        a2 += analytic[idx].powi(2);
        n2 += numeric.powi(2);
    }
    let scale = a2.sqrt().max(n2.sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff2.sqrt() / scale
    }
}

/// Balanced accuracy counted directly: reals correct below `t`, fakes at or
/// above it.
pub fn grid_balanced(scores: &[f64], labels: &[Label], t: f64) -> f64 {
    let mut counts = [[0usize; 2]; 2];
    for (s, l) in scores.iter().zip(labels) {
        let class = usize::from(*l == Label::Fake);
        let says_fake = *s >= t;
        counts[class][usize::from(says_fake == (class == 1))] += 1;
    }
    let real = counts[0][1] as f64 / (counts[0][0] + counts[0][1]) as f64;
    let fake = counts[1][1] as f64 / (counts[1][0] + counts[1][1]) as f64;
    (real + fake) / 2.0
}

/// Best balanced accuracy over 10^4 evenly spaced thresholds in [0, 1].
pub fn grid_best(scores: &[f64], labels: &[Label]) -> f64 {
    (0..10_000)
        .map(|k| grid_balanced(scores, labels, k as f64 / 9_999.0))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Random scores in (0, 1) with both labels present; some fixtures are
/// coarsely quantized to force ties.
pub fn calibration_fixture(seed: u64) -> (Vec<f64>, Vec<Label>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(4..200);
    let quantize = rng.random_bool(0.3);
    let shift = rng.random_range(0.0..0.4);
    let mut scores = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = if i < 2 {
            if i == 0 {
                Label::Real
            } else {
                Label::Fake
            }
        } else if rng.random_bool(0.5) {
            Label::Fake
        } else {
            Label::Real
        };
        let mut s: f64 = rng.random_range(0.001..0.999);
        if label == Label::Fake {
            s = (s + shift).min(0.999);
        }
        if quantize {
            s = (s * 20.0).round() / 20.0;
            s = s.clamp(0.001, 0.999);
        }
        scores.push(s);
        labels.push(label);
    }
    (scores, labels)
}
