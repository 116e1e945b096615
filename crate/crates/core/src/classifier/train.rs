use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{total_loss, ClassifierModel, ModelMeta, HIDDEN_DIM};
use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::imaging::AugmentPolicy;
use crate::io_util::sha256_hex;
use crate::manifest::Label;

/// Optimization and loss settings. Defaults: margin 1, lambda 0.3, AdamW
/// with lr 1e-4 and weight decay 4e-5, 20 epochs, batches of 64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub margin: f64,
    pub lambda: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub augment: AugmentPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            margin: 1.0,
            lambda: 0.3,
            lr: 1e-4,
            weight_decay: 4e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 20,
            batch_size: 64,
            seed: 0,
            augment: AugmentPolicy::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda {} outside [0, 1]", self.lambda));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad(format!("margin {} must be positive", self.margin));
        }
        if self.batch_size < 2 {
            return bad(format!("batch size {} must be at least 2", self.batch_size));
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("learning rate must be positive and weight decay non-negative".into());
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || self.eps.is_nan()
            || self.eps <= 0.0
        {
            return bad("Adam betas must lie in [0, 1) and eps be positive".into());
        }
        self.augment.validate()
    }

    pub fn digest(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

/// AdamW with decoupled weight decay over a fixed list of parameter groups.
#[derive(Debug, Clone)]
pub struct AdamW {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(group_sizes: &[usize], cfg: &TrainConfig) -> Self {
        AdamW {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            weight_decay: cfg.weight_decay,
            step: 0,
            first: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Advances the shared step counter; call once before updating groups.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// `θ ← θ − lr·m̂/(√v̂ + ε) − lr·wd·θ`, decay only when `decay` is set.
    pub fn update(&mut self, group: usize, params: &mut [f64], grads: &[f64], decay: bool) {
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let wd = if decay { self.weight_decay } else { 0.0 };
        let (m, v) = (&mut self.first[group], &mut self.second[group]);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * (m_hat / (v_hat.sqrt() + self.eps)) + self.lr * wd * *p;
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ClassifierModel,
    /// Mean total loss over consecutive, unshuffled batches of the full
    /// training set, measured after each epoch.
    pub epoch_losses: Vec<f64>,
}

pub fn train(features: &FeatureSet, cfg: &TrainConfig) -> Result<ClassifierModel> {
    Ok(train_with_history(features, cfg)?.model)
}

fn normalization_stats(inputs: &[Vec<f64>], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = inputs.len() as f64;
    let mut mu = vec![0.0; dim];
    for x in inputs {
        mu.iter_mut().zip(x).for_each(|(m, v)| *m += v);
    }
    mu.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for x in inputs {
        var.iter_mut()
            .zip(x.iter().zip(&mu))
            .for_each(|(s, (v, m))| *s += (v - m) * (v - m));
    }
    // Constant dimensions keep unit scale.
    let sigma = var
        .into_iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mu, sigma)
}

fn dataset_loss(model: &ClassifierModel, inputs: &[Vec<f64>], targets: &[f64], cfg: &TrainConfig) -> Result<f64> {
    let mut total = 0.0;
    let mut batches = 0usize;
    for (xs, ys) in inputs.chunks(cfg.batch_size).zip(targets.chunks(cfg.batch_size)) {
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let fb = model.forward_batch(&refs, ys)?;
        total += total_loss(&fb.loss, cfg.lambda, cfg.margin);
        batches += 1;
    }
    Ok(total / batches as f64)
}

/// Fits the classifier on every record of `features`.
///
/// Single-threaded and deterministic for a given seed. The final partial
/// batch of an epoch is kept.
pub fn train_with_history(features: &FeatureSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    features.validate()?;
    if features.count_label(Label::Real) == 0 || features.count_label(Label::Fake) == 0 {
        return Err(Error::Validation(
            "training data must contain both real and fake records".into(),
        ));
    }
    let d = features.dim;
    let h = HIDDEN_DIM;
    let inputs: Vec<Vec<f64>> = features
        .records
        .iter()
        .map(|r| r.features.iter().map(|&v| f64::from(v)).collect())
        .collect();
    let targets: Vec<f64> = features.records.iter().map(|r| r.label.target()).collect();

    let mut model = ClassifierModel::zeros(d, h);
    (model.norm_mu, model.norm_sigma) = normalization_stats(&inputs, d);
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bound1 = (6.0 / d as f64).sqrt();
    model
        .w1
        .iter_mut()
        .for_each(|w| *w = init_rng.random_range(-bound1..=bound1));
    let bound2 = (6.0 / h as f64).sqrt();
    model
        .w2
        .iter_mut()
        .for_each(|w| *w = init_rng.random_range(-bound2..=bound2));
    model.meta = ModelMeta {
        backend_name: features.backend_name.clone(),
        train_seed: cfg.seed,
        config_digest: cfg.digest(),
    };

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut opt = AdamW::new(&[h * d, h, h, 1], cfg);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for (batch_idx, idx) in order.chunks(cfg.batch_size).enumerate() {
            let xs: Vec<&[f64]> = idx.iter().map(|&i| inputs[i].as_slice()).collect();
            let ys: Vec<f64> = idx.iter().map(|&i| targets[i]).collect();
            let fb = model.forward_batch(&xs, &ys)?;
            let loss = total_loss(&fb.loss, cfg.lambda, cfg.margin);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            let g = model.backward(&fb, cfg.lambda, cfg.margin);
            opt.begin_step();
            opt.update(0, &mut model.w1, &g.w1, true);
            opt.update(1, &mut model.b1, &g.b1, false);
            opt.update(2, &mut model.w2, &g.w2, true);
            opt.update(3, std::slice::from_mut(&mut model.b2), &[g.b2], false);
        }
        let loss = dataset_loss(&model, &inputs, &targets, cfg)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: order.len().div_ceil(cfg.batch_size),
            });
        }
        log::debug!("epoch {epoch}: loss {loss:.6}");
        epoch_losses.push(loss);
    }
    model.validate()?;
    Ok(TrainOutcome { model, epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_settings() {
        let c = TrainConfig::default();
        assert_eq!(
            (c.margin, c.lambda, c.lr, c.weight_decay, c.epochs),
            (1.0, 0.3, 1e-4, 4e-5, 20)
        );
        c.validate().unwrap();
    }

    #[test]
    fn config_validation() {
        for bad in [
            TrainConfig {
                lambda: 1.5,
                ..Default::default()
            },
            TrainConfig {
                margin: 0.0,
                ..Default::default()
            },
            TrainConfig {
                batch_size: 1,
                ..Default::default()
            },
            TrainConfig {
                epochs: 0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn config_json_partial_and_unknown_keys() {
        let c: TrainConfig = serde_json::from_str(r#"{"epochs": 3, "augment": {"seed": 5}}"#).unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.lambda, 0.3);
        assert_eq!(c.augment.seed, 5);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epoch": 3}"#).is_err());
    }

    #[test]
    fn adamw_first_step_moves_by_lr() {
        let cfg = TrainConfig::default();
        let mut opt = AdamW::new(&[2], &cfg);
        let mut p = [1.0, -2.0];
        opt.begin_step();
        opt.update(0, &mut p, &[0.5, -3.0], true);
        // m̂/√v̂ = sign(g) on the first step.
        let expect0 = 1.0 - 1e-4 * (0.5 / (0.5 + 1e-8)) - 1e-4 * 4e-5 * 1.0;
        assert!((p[0] - expect0).abs() < 1e-15);
        let mut q = [1.0];
        let mut opt = AdamW::new(&[1], &cfg);
        opt.begin_step();
        opt.update(0, &mut q, &[0.0], false);
        assert_eq!(q[0], 1.0);
    }

    #[test]
    fn single_class_rejected() {
        let mut fs = crate::synthetic::gaussian_blobs(5, 3, 4.0, 1);
        fs.records.retain(|r| r.label == Label::Real);
        assert!(matches!(train(&fs, &TrainConfig::default()), Err(Error::Validation(_))));
    }

    #[test]
    fn normalization_handles_constant_dimension() {
        let (mu, sigma) = normalization_stats(&[vec![1.0, 2.0], vec![1.0, 4.0]], 2);
        assert_eq!(mu, [1.0, 3.0]);
        assert_eq!(sigma, [1.0, 1.0]);
    }
}
