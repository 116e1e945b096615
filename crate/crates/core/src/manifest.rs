//! Dataset manifests.
//!
//! A manifest is a single JSON document listing every image of a corpus with
//! its label, sample type, generator subset tag and split. Paths are resolved
//! relative to the directory holding the manifest unless absolute.
//!
//! ```json
//! {"name": "genimage-mini",
//!  "records": [{"id": "r0", "path": "real/0.png", "label": "real",
//!               "sample_type": "real", "generator": "SDv1.4", "split": "test"}]}
//! ```

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    /// Training target: 0 for real, 1 for fake.
    pub fn target(self) -> f64 {
        match self {
            Label::Real => 0.0,
            Label::Fake => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Fake => "fake",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "real" => Ok(Label::Real),
            "fake" => Ok(Label::Fake),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

/// The four kinds of training image: originals and their diffusion
/// reconstructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleType {
    Real,
    Fake,
    RealRecon,
    FakeRecon,
}

impl SampleType {
    pub const ALL: [SampleType; 4] = [
        SampleType::Real,
        SampleType::Fake,
        SampleType::RealRecon,
        SampleType::FakeRecon,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SampleType::Real => "real",
            SampleType::Fake => "fake",
            SampleType::RealRecon => "real_recon",
            SampleType::FakeRecon => "fake_recon",
        }
    }

    /// Wire code used by the binary feature format.
    pub fn code(self) -> u8 {
        match self {
            SampleType::Real => 0,
            SampleType::Fake => 1,
            SampleType::RealRecon => 2,
            SampleType::FakeRecon => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl FromStr for SampleType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown sample_type {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Split::Train),
            1 => Some(Split::Val),
            2 => Some(Split::Test),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub path: String,
    pub label: Label,
    pub sample_type: SampleType,
    pub generator: String,
    pub split: Split,
}

/// Anything carrying the metadata needed for per-generator grouping.
pub trait Tagged {
    fn id(&self) -> &str;
    fn label(&self) -> Label;
    fn generator(&self) -> &str;
    fn split(&self) -> Split;
}

impl Tagged for SampleRecord {
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub records: Vec<SampleRecord>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub source_note: String,
    /// When set, `real_recon` samples are labeled real instead of fake.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub real_recon_is_real: bool,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

// Records are parsed with string-typed fields first so that bad enum values
// can be reported against the record id.
#[derive(Deserialize)]
struct RawManifest {
    name: String,
    records: Vec<RawRecord>,
    #[serde(default)]
    source_note: String,
    #[serde(default)]
    real_recon_is_real: bool,
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    path: String,
    label: String,
    sample_type: String,
    generator: String,
    split: String,
}

impl RawRecord {
    fn into_record(self) -> Result<SampleRecord> {
        let id = self.id;
        let bad = |e: String| Error::invalid_record(id.clone(), e);
        let label = self.label.parse().map_err(bad)?;
        let sample_type = self.sample_type.parse().map_err(bad)?;
        let split = self.split.parse().map_err(bad)?;
        Ok(SampleRecord {
            path: self.path,
            label,
            sample_type,
            generator: self.generator,
            split,
            id,
        })
    }
}

impl Manifest {
    pub fn new(name: impl Into<String>, records: Vec<SampleRecord>) -> Self {
        Manifest {
            name: name.into(),
            records,
            source_note: String::new(),
            real_recon_is_real: false,
            base_dir: None,
        }
    }

    /// Label a record of the given sample type must carry.
    pub fn expected_label(&self, sample_type: SampleType) -> Label {
        match sample_type {
            SampleType::Real => Label::Real,
            SampleType::RealRecon if self.real_recon_is_real => Label::Real,
            _ => Label::Fake,
        }
    }

    /// Checks every manifest invariant; the first violation found in record
    /// order is reported.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if r.id.is_empty() {
                return Err(Error::Validation("record with empty id".into()));
            }
            if !seen.insert(r.id.as_str()) {
                return Err(Error::invalid_record(&r.id, "duplicate id"));
            }
            let expected = self.expected_label(r.sample_type);
            if r.label != expected {
                return Err(Error::invalid_record(
                    &r.id,
                    format!(
                        "sample_type {} must be labeled {expected}, found {}",
                        r.sample_type.as_str(),
                        r.label
                    ),
                ));
            }
        }
        let real_test_tags: HashSet<&str> = self
            .records
            .iter()
            .filter(|r| r.split == Split::Test && r.label == Label::Real)
            .map(|r| r.generator.as_str())
            .collect();
        if let Some(orphan) = self.records.iter().find(|r| {
            r.split == Split::Test && r.label == Label::Fake && !real_test_tags.contains(r.generator.as_str())
        }) {
            return Err(Error::invalid_record(
                &orphan.id,
                format!("no real test record carries generator tag {:?}", orphan.generator),
            ));
        }
        Ok(())
    }

    /// Resolves a record path against the manifest directory.
    pub fn resolve_path(&self, record: &SampleRecord) -> PathBuf {
        let p = Path::new(&record.path);
        match &self.base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }

    /// A copy restricted to one split, keeping the base directory.
    pub fn restricted_to(&self, split: Split) -> Manifest {
        Manifest {
            records: self.records.iter().filter(|r| r.split == split).cloned().collect(),
            ..self.clone()
        }
    }
}

pub fn parse_manifest(text: &str, origin: &Path) -> Result<Manifest> {
    let raw: RawManifest = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })?;
    let records = raw
        .records
        .into_iter()
        .map(RawRecord::into_record)
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        name: raw.name,
        records,
        source_note: raw.source_note,
        real_recon_is_real: raw.real_recon_is_real,
        base_dir: origin.parent().map(Path::to_path_buf),
    };
    manifest.validate()?;
    Ok(manifest)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path)
}

pub fn save_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Validation(format!("cannot serialize manifest: {e}")))?;
    crate::io_util::write_atomic(path, text.as_bytes())
}

pub fn split_view(manifest: &Manifest, split: Split) -> Vec<&SampleRecord> {
    manifest.records.iter().filter(|r| r.split == split).collect()
}

/// Fakes of one generator together with the reals sharing its tag.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetGroup<'a, T> {
    pub generator: String,
    pub reals: Vec<&'a T>,
    pub fakes: Vec<&'a T>,
}

/// Groups items by generator tag in order of first fake appearance.
///
/// Reals attach to the group with their tag; tags with no fakes are dropped.
/// A fake group with no reals is an error naming its first fake.
pub fn group_by_generator<'a, T: Tagged>(items: impl IntoIterator<Item = &'a T>) -> Result<Vec<SubsetGroup<'a, T>>> {
    let mut groups: Vec<SubsetGroup<'a, T>> = Vec::new();
    let mut reals: Vec<&'a T> = Vec::new();
    for item in items {
        match item.label() {
            Label::Real => reals.push(item),
            Label::Fake => match groups.iter_mut().find(|g| g.generator == item.generator()) {
                Some(g) => g.fakes.push(item),
                None => groups.push(SubsetGroup {
                    generator: item.generator().to_string(),
                    reals: Vec::new(),
                    fakes: vec![item],
                }),
            },
        }
    }
    for real in reals {
        if let Some(g) = groups.iter_mut().find(|g| g.generator == real.generator()) {
            g.reals.push(real);
        }
    }
    if let Some(g) = groups.iter().find(|g| g.reals.is_empty()) {
        return Err(Error::invalid_record(
            g.fakes[0].id(),
            format!("generator subset {:?} has no real records", g.generator),
        ));
    }
    Ok(groups)
}

pub fn subset_groups(manifest: &Manifest, split: Split) -> Result<Vec<SubsetGroup<'_, SampleRecord>>> {
    let view = split_view(manifest, split);
    if view.is_empty() {
        return Err(Error::Validation(format!("split {split} has no records")));
    }
    group_by_generator(view)
}
