//! Feature sets and the PCFF container.
//!
//! All backends (the native NSS extractor and externally exported deep
//! features) meet here, so the classifier never needs to know where its
//! inputs came from.
//!
//! PCFF layout, little-endian:
//!
//! ```text
//! "PCFF" | version u16 | dim u32 | count u64 | backend (u16 len + UTF-8)
//! count x [ id (u16 len + UTF-8) | label u8 | sample_type u8
//!           | generator (u16 len + UTF-8) | split u8 | dim x f32 ]
//! CRC32 of everything above
//! ```

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::{apply_policy, decode_image, AugmentPolicy, Degradation};
use crate::io_util::{check_crc, put_str_u16, sha256_hex, stable_hash64, write_atomic, Reader};
use crate::manifest::{Label, Manifest, SampleRecord, SampleType, Split, Tagged};
use crate::nss::{extract_nss, NSS_DIM};

pub const PCFF_MAGIC: &[u8; 4] = b"PCFF";
pub const PCFF_VERSION: u16 = 1;
pub const NSS_BACKEND_NAME: &str = "nss36";

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub id: String,
    pub label: Label,
    pub sample_type: SampleType,
    pub generator: String,
    pub split: Split,
    pub features: Vec<f32>,
}

impl FeatureRecord {
    fn from_sample(sample: &SampleRecord, features: Vec<f32>) -> Self {
        FeatureRecord {
            id: sample.id.clone(),
            label: sample.label,
            sample_type: sample.sample_type,
            generator: sample.generator.clone(),
            split: sample.split,
            features,
        }
    }
}

impl Tagged for FeatureRecord {
    fn id(&self) -> &str {
        &self.id
    }
    fn label(&self) -> Label {
        self.label
    }
    fn generator(&self) -> &str {
        &self.generator
    }
    fn split(&self) -> Split {
        self.split
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub dim: usize,
    pub backend_name: String,
    pub records: Vec<FeatureRecord>,
}

impl FeatureSet {
    pub fn new(backend_name: impl Into<String>, dim: usize, records: Vec<FeatureRecord>) -> Result<Self> {
        let fs = FeatureSet {
            dim,
            backend_name: backend_name.into(),
            records,
        };
        fs.validate()?;
        Ok(fs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Validation("feature dimension must be positive".into()));
        }
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::invalid_record(&r.id, "duplicate id in feature set"));
            }
            if r.features.len() != self.dim {
                return Err(Error::invalid_record(
                    &r.id,
                    format!("has {} features, set dimension is {}", r.features.len(), self.dim),
                ));
            }
            if r.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid_record(&r.id, "non-finite feature value"));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records of one split, as a new set.
    pub fn split_view(&self, split: Split) -> FeatureSet {
        FeatureSet {
            dim: self.dim,
            backend_name: self.backend_name.clone(),
            records: self.records.iter().filter(|r| r.split == split).cloned().collect(),
        }
    }

    pub fn count_label(&self, label: Label) -> usize {
        self.records.iter().filter(|r| r.label == label).count()
    }

    /// SHA-256 of the encoded container.
    pub fn digest(&self) -> String {
        encode_feature_file(self).map(|b| sha256_hex(&b)).unwrap_or_default()
    }

    pub fn ensure_dim(&self, expected: usize) -> Result<()> {
        if self.dim != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: self.dim,
            });
        }
        Ok(())
    }
}

/// Where features come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    Nss,
    File(PathBuf),
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nss" => Ok(Backend::Nss),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(Backend::File(PathBuf::from(p))),
                _ => Err(Error::InvalidArgument(format!(
                    "backend must be \"nss\" or \"file:PATH\", got {s:?}"
                ))),
            },
        }
    }
}

/// Image transformation applied before extraction.
#[derive(Debug, Clone, PartialEq)]
pub enum Augmentation {
    /// Randomized training augmentation, applied to training records only.
    Policy(AugmentPolicy),
    /// A fixed degradation applied to every record.
    Degrade(Degradation),
}

/// Builds one feature record per manifest record, in manifest order.
pub fn extract_features(manifest: &Manifest, backend: &Backend, augment: Option<&Augmentation>) -> Result<FeatureSet> {
    match backend {
        Backend::Nss => extract_nss_features(manifest, augment),
        Backend::File(path) => {
            if augment.is_some() {
                return Err(Error::Validation(
                    "file-backend features cannot be augmented or degraded after export".into(),
                ));
            }
            join_feature_file(manifest, &read_feature_file(path)?)
        }
    }
}

fn extract_nss_features(manifest: &Manifest, augment: Option<&Augmentation>) -> Result<FeatureSet> {
    if let Some(Augmentation::Policy(p)) = augment {
        p.validate()?;
    }
    let results: Vec<std::result::Result<FeatureRecord, (String, String)>> = manifest
        .records
        .par_iter()
        .map(|rec| {
            let run = || -> Result<Vec<f32>> {
                let mut img = decode_image(manifest.resolve_path(rec))?;
                match augment {
                    Some(Augmentation::Policy(p)) if rec.split == Split::Train => {
                        img = apply_policy(&img, p, stable_hash64(&rec.id))?;
                    }
                    Some(Augmentation::Degrade(d)) => img = d.apply(&img)?,
                    _ => {}
                }
                let nss = extract_nss(&img)?;
                Ok(nss.values.iter().map(|&v| v as f32).collect())
            };
            run()
                .map(|f| FeatureRecord::from_sample(rec, f))
                .map_err(|e| (rec.id.clone(), e.to_string()))
        })
        .collect();
    let mut records = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(f) => failures.push(f),
        }
    }
    if !failures.is_empty() {
        return Err(Error::ExtractionFailed(failures));
    }
    FeatureSet::new(NSS_BACKEND_NAME, NSS_DIM, records)
}

fn join_feature_file(manifest: &Manifest, file: &FeatureSet) -> Result<FeatureSet> {
    let by_id: HashMap<&str, &FeatureRecord> = file.records.iter().map(|r| (r.id.as_str(), r)).collect();
    let missing: Vec<String> = manifest
        .records
        .iter()
        .filter(|r| !by_id.contains_key(r.id.as_str()))
        .map(|r| r.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingIds(missing));
    }
    let records = manifest
        .records
        .iter()
        .map(|r| FeatureRecord::from_sample(r, by_id[r.id.as_str()].features.clone()))
        .collect();
    FeatureSet::new(file.backend_name.clone(), file.dim, records)
}

pub fn encode_feature_file(fs: &FeatureSet) -> Result<Vec<u8>> {
    const WHAT: &str = "feature file";
    fs.validate()?;
    let dim = u32::try_from(fs.dim).map_err(|_| Error::format(WHAT, "dimension exceeds u32"))?;
    let mut out = Vec::with_capacity(32 + fs.records.len() * (fs.dim * 4 + 32));
    out.extend_from_slice(PCFF_MAGIC);
    out.extend_from_slice(&PCFF_VERSION.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    out.extend_from_slice(&(fs.records.len() as u64).to_le_bytes());
    put_str_u16(&mut out, &fs.backend_name, WHAT)?;
    for r in &fs.records {
        put_str_u16(&mut out, &r.id, WHAT)?;
        out.push(match r.label {
            Label::Real => 0,
            Label::Fake => 1,
        });
        out.push(r.sample_type.code());
        put_str_u16(&mut out, &r.generator, WHAT)?;
        out.push(r.split.code());
        for v in &r.features {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn decode_feature_file(bytes: &[u8]) -> Result<FeatureSet> {
    const WHAT: &str = "feature file";
    let mut rd = Reader::new(bytes, WHAT);
    if rd.take(4)? != PCFF_MAGIC {
        return Err(Error::format(WHAT, "bad magic (expected PCFF)"));
    }
    let version = rd.u16()?;
    if version != PCFF_VERSION {
        return Err(Error::format(WHAT, format!("unsupported version {version}")));
    }
    let dim = rd.u32()? as usize;
    let count = rd.u64()?;
    let backend_name = rd.str_u16()?;
    if dim == 0 {
        return Err(Error::format(WHAT, "zero dimension"));
    }
    let mut records = Vec::new();
    for _ in 0..count {
        let id = rd.str_u16()?;
        let label = match rd.u8()? {
            0 => Label::Real,
            1 => Label::Fake,
            other => return Err(Error::format(WHAT, format!("record {id}: bad label code {other}"))),
        };
        let sample_type = SampleType::from_code(rd.u8()?)
            .ok_or_else(|| Error::format(WHAT, format!("record {id}: bad sample_type code")))?;
        let generator = rd.str_u16()?;
        let split =
            Split::from_code(rd.u8()?).ok_or_else(|| Error::format(WHAT, format!("record {id}: bad split code")))?;
        let features = (0..dim).map(|_| rd.f32()).collect::<Result<Vec<_>>>()?;
        records.push(FeatureRecord {
            id,
            label,
            sample_type,
            generator,
            split,
            features,
        });
    }
    match rd.remaining() {
        4 => {}
        n if n < 4 => return Err(Error::format(WHAT, "truncated: checksum incomplete")),
        n => return Err(Error::format(WHAT, format!("{} unexpected trailing bytes", n - 4))),
    }
    check_crc(bytes, WHAT)?;
    FeatureSet::new(backend_name, dim, records)
}

pub fn write_feature_file(fs: &FeatureSet, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_feature_file(fs)?)
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_feature_file(&bytes)
}
