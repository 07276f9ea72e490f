//! Triplet datasets of ERP frames stratified by vertical motion extent.
//!
//! Clips live in `<root>/<clip_id>/<frame>.png`. Each clip is cut into
//! non-overlapping windows of three frames after a per-source drop policy.
//! Every triplet gets a motion extent (mean absolute latitude-direction flow
//! between its two outer frames) and a difficulty [`Setting`].

mod flow;
mod ingest;
pub mod synthetic;

pub use flow::{motion_extent, BlockMatchingFlow, ExtentStatistic, FlowField, FlowProvider, OracleFlow};
pub use ingest::{ingest, ClipError, FlowSource, IngestOutcome, Layout, SourceRule};

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Difficulty bucket. Boundaries are half-open, `[0,2) [2,3) [3,4) [4,inf)`,
/// so a value exactly on a boundary belongs to the harder setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Easy,
    Middle,
    Hard,
    Extreme,
}

impl Setting {
    pub const ALL: [Setting; 4] = [Setting::Easy, Setting::Middle, Setting::Hard, Setting::Extreme];

    /// Lower bounds of Middle, Hard and Extreme.
    pub const BOUNDARIES: [f64; 3] = [2.0, 3.0, 4.0];

    pub fn from_extent(extent: f64) -> Result<Setting> {
        if !extent.is_finite() || extent < 0.0 {
            return Err(Error::Data(format!(
                "motion extent {extent} is not a finite non-negative value"
            )));
        }
        let idx = Self::BOUNDARIES.iter().filter(|&&b| extent >= b).count();
        Ok(Self::ALL[idx])
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Setting::Easy => "easy",
            Setting::Middle => "middle",
            Setting::Hard => "hard",
            Setting::Extreme => "extreme",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown setting {s:?}")))
    }
}

/// Frames removed from a clip before cutting it into triplets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropPolicy {
    None,
    DropLastOne,
    DropFirstAndLast,
}

impl DropPolicy {
    pub fn label(self) -> &'static str {
        match self {
            DropPolicy::None => "none",
            DropPolicy::DropLastOne => "drop_last_one",
            DropPolicy::DropFirstAndLast => "drop_first_and_last",
        }
    }

    /// The retained index range for a clip of `n` frames.
    fn kept(self, n: usize) -> std::ops::Range<usize> {
        match self {
            DropPolicy::None => 0..n,
            DropPolicy::DropLastOne => 0..n.saturating_sub(1),
            DropPolicy::DropFirstAndLast => 1.min(n)..n.saturating_sub(1).max(1.min(n)),
        }
    }
}

impl fmt::Display for DropPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for DropPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [DropPolicy::None, DropPolicy::DropLastOne, DropPolicy::DropFirstAndLast]
            .into_iter()
            .find(|p| p.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown drop policy {s:?}")))
    }
}

/// Consecutive non-overlapping windows of three after applying `policy`.
/// Fewer than three kept frames yields no triplets and a warning.
pub fn build_triplets<T: Clone>(frames: &[T], policy: DropPolicy) -> Vec<[T; 3]> {
    let kept = &frames[policy.kept(frames.len())];
    if kept.len() < 3 {
        log::warn!(
            "{} frames leave {} after {policy}; no triplets",
            frames.len(),
            kept.len()
        );
    }
    kept.chunks_exact(3)
        .map(|w| [w[0].clone(), w[1].clone(), w[2].clone()])
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn label(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn manifest_name(self) -> String {
        format!("manifest.{}.jsonl", self.label())
    }

    pub fn list_name(self) -> String {
        format!("tri_{}list.txt", self.label())
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    /// `<clip>/<index>` with a 1-based, zero-padded triplet index.
    pub sample_id: String,
    pub clip: String,
    pub i1: PathBuf,
    pub ig: PathBuf,
    pub i2: PathBuf,
    pub motion_extent: Option<f64>,
    pub setting: Option<Setting>,
}

impl Triplet {
    pub fn sample_id(clip: &str, index: usize) -> String {
        format!("{clip}/{:04}", index + 1)
    }

    pub fn setting(&self) -> Result<Setting> {
        self.setting
            .ok_or_else(|| Error::Data(format!("{} has not been stratified", self.sample_id)))
    }
}

/// Per-setting triplet counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketCounts(pub [usize; 4]);

impl BucketCounts {
    pub fn get(&self, s: Setting) -> usize {
        self.0[s.index()]
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn of(triplets: &[Triplet]) -> Self {
        let mut c = [0; 4];
        for s in triplets.iter().filter_map(|t| t.setting) {
            c[s.index()] += 1;
        }
        BucketCounts(c)
    }
}

impl fmt::Display for BucketCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in Setting::ALL {
            write!(f, "{}={} ", s, self.get(s))?;
        }
        write!(f, "total={}", self.total())
    }
}

/// Assigns a setting to every triplet from its motion extent. Nothing is
/// modified when any extent is missing or invalid.
pub fn stratify(triplets: &mut [Triplet]) -> Result<BucketCounts> {
    let settings = triplets
        .iter()
        .map(|t| {
            let e = t
                .motion_extent
                .ok_or_else(|| Error::Data(format!("{}: motion extent missing", t.sample_id)))?;
            Setting::from_extent(e).map_err(|e| Error::Data(format!("{}: {e}", t.sample_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    for (t, s) in triplets.iter_mut().zip(settings) {
        t.setting = Some(s);
    }
    Ok(BucketCounts::of(triplets))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestHeader {
    format: String,
    version: u32,
    split: Split,
    source_tag: String,
    extent_statistic: ExtentStatistic,
    flow_provider: String,
}

const MANIFEST_FORMAT: &str = "omnivfi-manifest";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Record {
    sample_id: String,
    clip: String,
    frames: [String; 3],
    motion_extent: Option<f64>,
    setting: Option<Setting>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletManifest {
    pub split: Split,
    pub source_tag: String,
    pub extent_statistic: ExtentStatistic,
    pub flow_provider: String,
    pub entries: Vec<Triplet>,
}

impl TripletManifest {
    pub fn new(split: Split, source_tag: impl Into<String>, entries: Vec<Triplet>) -> Self {
        TripletManifest {
            split,
            source_tag: source_tag.into(),
            extent_statistic: ExtentStatistic::Mean,
            flow_provider: String::new(),
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn counts(&self) -> BucketCounts {
        BucketCounts::of(&self.entries)
    }

    pub fn stratify(&mut self) -> Result<BucketCounts> {
        stratify(&mut self.entries)
    }

    pub fn check_unique_ids(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for t in &self.entries {
            if !seen.insert(t.sample_id.as_str()) {
                return Err(Error::Data(format!("duplicate sample id {}", t.sample_id)));
            }
        }
        Ok(())
    }

    /// Writes JSONL: one header line, then one record per triplet. Frame paths
    /// under the manifest directory are stored relative to it.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        self.check_unique_ids()?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rel = |p: &Path| -> String { p.strip_prefix(base).unwrap_or(p).to_string_lossy().replace('\\', "/") };
        let mut out = Vec::new();
        let header = ManifestHeader {
            format: MANIFEST_FORMAT.into(),
            version: 1,
            split: self.split,
            source_tag: self.source_tag.clone(),
            extent_statistic: self.extent_statistic,
            flow_provider: self.flow_provider.clone(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.push(b'\n');
        for t in &self.entries {
            let rec = Record {
                sample_id: t.sample_id.clone(),
                clip: t.clip.clone(),
                frames: [rel(&t.i1), rel(&t.ig), rel(&t.i2)],
                motion_extent: t.motion_extent,
                setting: t.setting,
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.push(b'\n');
        }
        write_file(path, &out)
    }

    /// Sample ids one per line.
    pub fn write_list(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for t in &self.entries {
            out.push_str(&t.sample_id);
            out.push('\n');
        }
        write_file(path, out.as_bytes())
    }

    /// Reads a manifest and checks ids are unique and every frame exists.
    pub fn load(path: &Path) -> Result<Self> {
        let m = Self::load_unchecked(path)?;
        for t in &m.entries {
            for p in [&t.i1, &t.ig, &t.i2] {
                if !p.is_file() {
                    return Err(Error::Data(format!("{}: missing frame {}", t.sample_id, p.display())));
                }
            }
        }
        Ok(m)
    }

    /// Reads a manifest without touching the referenced frames.
    pub fn load_unchecked(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let mut lines = BufReader::new(file).lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::Data(format!("{}: empty manifest", path.display())))?
            .map_err(|e| Error::io(path, e))?;
        let header: ManifestHeader = serde_json::from_str(&first)?;
        if header.format != MANIFEST_FORMAT || header.version != 1 {
            return Err(Error::Data(format!(
                "{}: unsupported manifest {} v{}",
                path.display(),
                header.format,
                header.version
            )));
        }
        let mut entries = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let r: Record = serde_json::from_str(&line)?;
            let [a, b, c] = r.frames.map(|f| base.join(f));
            entries.push(Triplet {
                sample_id: r.sample_id,
                clip: r.clip,
                i1: a,
                ig: b,
                i2: c,
                motion_extent: r.motion_extent,
                setting: r.setting,
            });
        }
        let m = TripletManifest {
            split: header.split,
            source_tag: header.source_tag,
            extent_statistic: header.extent_statistic,
            flow_provider: header.flow_provider,
            entries,
        };
        m.check_unique_ids()?;
        Ok(m)
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}
