//! Two-layer perceptual classifier head.
//!
//! Inputs are z-scored with training-set statistics, passed through a
//! 1024-unit ReLU layer, and mapped to a fake probability by a sigmoid
//! output unit. The hidden activations double as the embedding the
//! contrastive term acts on.

mod loss;
mod train;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use loss::{bce_loss, contrastive_grad_hidden, contrastive_loss, total_loss, LossBatch};
pub use train::{train, train_with_history, AdamW, TrainConfig, TrainOutcome};

use crate::error::{Error, Result};
use crate::io_util::{check_crc, sha256_hex, write_atomic, Reader};

pub const HIDDEN_DIM: usize = 1024;
pub const LOGIT_CLAMP: f64 = 30.0;
pub const MODEL_MAGIC: &[u8; 4] = b"PFDM";
pub const MODEL_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelMeta {
    pub backend_name: String,
    pub train_seed: u64,
    pub config_digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Row-major `hidden_dim x input_dim`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub norm_mu: Vec<f64>,
    pub norm_sigma: Vec<f64>,
    pub threshold: f64,
    pub meta: ModelMeta,
}

/// Per-sample intermediate values kept for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    pub normalized: Vec<f64>,
    pub pre_activation: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logit: f64,
    pub prob: f64,
}

/// A forward pass over a mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardBatch {
    pub activations: Vec<Activations>,
    pub loss: LossBatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl ClassifierModel {
    /// All-zero weights, identity normalization, threshold 0.5.
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        ClassifierModel {
            input_dim,
            hidden_dim,
            w1: vec![0.0; hidden_dim * input_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; hidden_dim],
            b2: 0.0,
            norm_mu: vec![0.0; input_dim],
            norm_sigma: vec![1.0; input_dim],
            threshold: 0.5,
            meta: ModelMeta::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (d, h) = (self.input_dim, self.hidden_dim);
        if d == 0 || h == 0 {
            return Err(Error::Validation("model dimensions must be positive".into()));
        }
        let shapes = [
            ("w1", self.w1.len(), h * d),
            ("b1", self.b1.len(), h),
            ("w2", self.w2.len(), h),
            ("norm_mu", self.norm_mu.len(), d),
            ("norm_sigma", self.norm_sigma.len(), d),
        ];
        for (name, found, expected) in shapes {
            if found != expected {
                return Err(Error::Validation(format!(
                    "{name} has {found} entries, expected {expected}"
                )));
            }
        }
        let params = self
            .w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(std::iter::once(&self.b2));
        if params.chain(&self.norm_mu).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite model parameter".into()));
        }
        if self.norm_sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Validation("normalization scales must be positive".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Validation(format!(
                "threshold {} outside (0, 1)",
                self.threshold
            )));
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite input feature".into()));
        }
        Ok(())
    }

    pub fn activations(&self, x: &[f64]) -> Result<Activations> {
        self.check_input(x)?;
        let normalized: Vec<f64> = x
            .iter()
            .zip(self.norm_mu.iter().zip(&self.norm_sigma))
            .map(|(v, (m, s))| (v - m) / s)
            .collect();
        let pre_activation: Vec<f64> = self
            .w1
            .chunks_exact(self.input_dim)
            .zip(&self.b1)
            .map(|(row, b)| row.iter().zip(&normalized).map(|(w, z)| w * z).sum::<f64>() + b)
            .collect();
        let hidden: Vec<f64> = pre_activation.iter().map(|a| a.max(0.0)).collect();
        let logit = self.w2.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>() + self.b2;
        let prob = sigmoid(logit.clamp(-LOGIT_CLAMP, LOGIT_CLAMP));
        Ok(Activations {
            normalized,
            pre_activation,
            hidden,
            logit,
            prob,
        })
    }

    /// Hidden features and fake probability for one input.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let a = self.activations(x)?;
        Ok((a.hidden, a.prob))
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.activations(x)?.prob)
    }

    pub fn predict_f32(&self, x: &[f32]) -> Result<f64> {
        let x: Vec<f64> = x.iter().map(|&v| f64::from(v)).collect();
        self.predict(&x)
    }

    pub fn forward_batch(&self, inputs: &[&[f64]], targets: &[f64]) -> Result<ForwardBatch> {
        assert_eq!(inputs.len(), targets.len());
        let activations = inputs.iter().map(|x| self.activations(x)).collect::<Result<Vec<_>>>()?;
        let loss = LossBatch::new(
            activations.iter().map(|a| a.hidden.clone()).collect(),
            activations.iter().map(|a| a.prob).collect(),
            targets.to_vec(),
        );
        Ok(ForwardBatch { activations, loss })
    }

    /// Exact gradients of `lambda * L_CL + (1 - lambda) * L_CE` for a batch
    /// produced by [`forward_batch`](Self::forward_batch) on this model.
    ///
    /// ReLU has zero derivative at zero; the logit clamp passes gradient
    /// only strictly inside its range.
    pub fn backward(&self, batch: &ForwardBatch, lambda: f64, margin: f64) -> Gradients {
        let n = batch.activations.len();
        let (d, h) = (self.input_dim, self.hidden_dim);
        let mut g = Gradients {
            w1: vec![0.0; h * d],
            b1: vec![0.0; h],
            w2: vec![0.0; h],
            b2: 0.0,
        };
        if n == 0 {
            return g;
        }
        let cl_grad = if lambda != 0.0 {
            contrastive_grad_hidden(&batch.loss, margin)
        } else {
            vec![vec![0.0; h]; n]
        };
        for (i, act) in batch.activations.iter().enumerate() {
            let y = batch.loss.labels[i];
            let dlogit = if act.logit.abs() < LOGIT_CLAMP {
                (1.0 - lambda) * (act.prob - y) / n as f64
            } else {
                0.0
            };
            g.b2 += dlogit;
            #[allow(clippy::needless_range_loop)]
            for k in 0..h {
                g.w2[k] += dlogit * act.hidden[k];
                if act.pre_activation[k] <= 0.0 {
                    continue;
                }
                let delta = dlogit * self.w2[k] + lambda * cl_grad[i][k];
                g.b1[k] += delta;
                for (gw, z) in g.w1[k * d..(k + 1) * d].iter_mut().zip(&act.normalized) {
                    *gw += delta * z;
                }
            }
        }
        g
    }

    /// SHA-256 of the serialized model.
    pub fn digest(&self) -> String {
        encode_model(self).map(|b| sha256_hex(&b)).unwrap_or_default()
    }
}

pub fn encode_model(model: &ClassifierModel) -> Result<Vec<u8>> {
    model.validate()?;
    let meta = serde_json::to_vec(&model.meta).map_err(|e| Error::format("model file", e.to_string()))?;
    let mut out = Vec::with_capacity(8 * (model.w1.len() + 4 * model.hidden_dim) + meta.len() + 64);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.input_dim as u32).to_le_bytes());
    out.extend_from_slice(&(model.hidden_dim as u32).to_le_bytes());
    let arrays: [&[f64]; 6] = [
        &model.w1,
        &model.b1,
        &model.w2,
        std::slice::from_ref(&model.b2),
        &model.norm_mu,
        &model.norm_sigma,
    ];
    for v in arrays.iter().flat_map(|a| a.iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&model.threshold.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<ClassifierModel> {
    const WHAT: &str = "model file";
    let mut rd = Reader::new(bytes, WHAT);
    if rd.take(4)? != MODEL_MAGIC {
        return Err(Error::format(WHAT, "bad magic (expected PFDM)"));
    }
    let version = rd.u16()?;
    if version != MODEL_VERSION {
        return Err(Error::format(WHAT, format!("unsupported version {version}")));
    }
    let d = rd.u32()? as usize;
    let h = rd.u32()? as usize;
    if d == 0 || h == 0 {
        return Err(Error::format(WHAT, "zero dimension"));
    }
    let mut read_vec = |len: usize| (0..len).map(|_| rd.f64()).collect::<Result<Vec<f64>>>();
    let w1 = read_vec(h * d)?;
    let b1 = read_vec(h)?;
    let w2 = read_vec(h)?;
    let b2 = read_vec(1)?[0];
    let norm_mu = read_vec(d)?;
    let norm_sigma = read_vec(d)?;
    let threshold = rd.f64()?;
    let meta_len = rd.u32()? as usize;
    let meta: ModelMeta =
        serde_json::from_slice(rd.take(meta_len)?).map_err(|e| Error::format(WHAT, format!("bad metadata: {e}")))?;
    match rd.remaining() {
        4 => {}
        n if n < 4 => return Err(Error::format(WHAT, "truncated: checksum incomplete")),
        n => return Err(Error::format(WHAT, format!("{} unexpected trailing bytes", n - 4))),
    }
    check_crc(bytes, WHAT)?;
    let model = ClassifierModel {
        input_dim: d,
        hidden_dim: h,
        w1,
        b1,
        w2,
        b2,
        norm_mu,
        norm_sigma,
        threshold,
        meta,
    };
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &ClassifierModel, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_model(model)?)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ClassifierModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}
