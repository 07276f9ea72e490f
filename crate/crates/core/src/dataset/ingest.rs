use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::flow::{motion_extent, BlockMatchingFlow, ExtentStatistic, FlowProvider, OracleFlow};
use super::synthetic::Motion;
use super::{build_triplets, BucketCounts, DropPolicy, Setting, Split, Triplet, TripletManifest};
use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::frame::{image_dimensions, Frame};

/// Clips whose id starts with `prefix` use `policy`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceRule {
    pub tag: String,
    pub prefix: String,
    pub policy: DropPolicy,
}

/// How a frame tree maps to triplets and splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub name: String,
    /// First matching rule wins.
    pub sources: Vec<SourceRule>,
    pub default_policy: DropPolicy,
    pub test_fraction: f64,
    pub split_seed: u64,
    pub extent_statistic: ExtentStatistic,
    pub extension: String,
}

impl Layout {
    fn single(name: &str, policy: DropPolicy, test_fraction: f64) -> Layout {
        Layout {
            name: name.to_string(),
            sources: Vec::new(),
            default_policy: policy,
            test_fraction,
            split_seed: 0,
            extent_statistic: ExtentStatistic::Mean,
            extension: "png".into(),
        }
    }

    /// Built-in layouts: `odv360` (100-frame clips, last frame dropped),
    /// `360vds` and `360uhd` (20-frame clips, first and last dropped),
    /// `combined` (the three mixed, told apart by clip id prefix) and
    /// `synthetic` (no drops, everything in the training split).
    pub fn preset(name: &str) -> Option<Layout> {
        let rule = |tag: &str, policy| SourceRule {
            tag: tag.into(),
            prefix: tag.into(),
            policy,
        };
        match name {
            "odv360" => Some(Self::single(name, DropPolicy::DropLastOne, 0.2)),
            "360vds" | "360uhd" => Some(Self::single(name, DropPolicy::DropFirstAndLast, 0.2)),
            "combined" => Some(Layout {
                sources: vec![
                    rule("odv360", DropPolicy::DropLastOne),
                    rule("360vds", DropPolicy::DropFirstAndLast),
                    rule("360uhd", DropPolicy::DropFirstAndLast),
                ],
                ..Self::single(name, DropPolicy::DropLastOne, 0.2)
            }),
            "synthetic" => Some(Self::single(name, DropPolicy::None, 0.0)),
            _ => None,
        }
    }

    /// Keys: `name`, `default.policy`, `split.test_fraction`, `split.seed`,
    /// `extent.statistic`, `frames.extension` and, per source tag,
    /// `source.<tag>.prefix` / `source.<tag>.policy`.
    pub fn from_kv(kv: &KeyValues) -> Result<Layout> {
        kv.reject_unknown(
            &[
                "name",
                "default.policy",
                "split.test_fraction",
                "split.seed",
                "extent.statistic",
                "frames.extension",
            ],
            &["source."],
        )?;
        let mut l = Self::single(kv.get("name").unwrap_or("custom"), DropPolicy::None, 0.2);
        if let Some(p) = kv.parsed("default.policy")? {
            l.default_policy = p;
        }
        if let Some(f) = kv.parsed::<f64>("split.test_fraction")? {
            l.test_fraction = f;
        }
        if let Some(s) = kv.parsed("split.seed")? {
            l.split_seed = s;
        }
        if let Some(s) = kv.parsed("extent.statistic")? {
            l.extent_statistic = s;
        }
        if let Some(e) = kv.get("frames.extension") {
            l.extension = e.trim_start_matches('.').to_string();
        }
        let mut tags: Vec<&str> = kv
            .keys()
            .filter_map(|k| k.strip_prefix("source."))
            .filter_map(|rest| rest.rsplit_once('.').map(|(tag, _)| tag))
            .collect();
        tags.dedup();
        for tag in tags {
            let prefix = kv.get(&format!("source.{tag}.prefix")).unwrap_or(tag).to_string();
            let policy = kv
                .parsed(&format!("source.{tag}.policy"))?
                .ok_or_else(|| Error::Config(format!("source.{tag}.policy is required")))?;
            l.sources.push(SourceRule {
                tag: tag.to_string(),
                prefix,
                policy,
            });
        }
        l.validate()?;
        Ok(l)
    }

    /// A preset name or a path to a layout file.
    pub fn resolve(spec: &str) -> Result<Layout> {
        match Self::preset(spec) {
            Some(l) => Ok(l),
            None => Self::from_kv(&KeyValues::load(Path::new(spec))?),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.test_fraction) {
            return Err(Error::Config(format!(
                "test fraction {} outside [0, 1]",
                self.test_fraction
            )));
        }
        Ok(())
    }

    pub fn policy_for(&self, clip: &str) -> DropPolicy {
        self.sources
            .iter()
            .find(|r| clip.starts_with(&r.prefix))
            .map_or(self.default_policy, |r| r.policy)
    }

    /// Deterministic clip-level split: shuffle the sorted ids with the split
    /// seed and send the first `round(n * test_fraction)` to test. With two or
    /// more clips and a positive fraction, each split gets at least one clip.
    pub fn split_clips(&self, clips: &[String]) -> (Vec<String>, Vec<String>) {
        let mut ids = clips.to_vec();
        ids.sort();
        ids.dedup();
        let n = ids.len();
        let mut n_test = (n as f64 * self.test_fraction).round() as usize;
        if n >= 2 && self.test_fraction > 0.0 {
            n_test = n_test.clamp(1, n - 1);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.split_seed);
        ids.shuffle(&mut rng);
        let mut test = ids.split_off(n - n_test.min(n));
        let mut train = ids;
        train.sort();
        test.sort();
        (train, test)
    }
}

/// Where motion extents come from during ingest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowSource {
    /// Per-clip known motion read from the clip's `motion.json`.
    Oracle,
    BlockMatching(BlockMatchingFlow),
}

impl FlowSource {
    pub fn name(&self) -> &'static str {
        match self {
            FlowSource::Oracle => "oracle",
            FlowSource::BlockMatching(_) => "block-matching",
        }
    }

    fn for_clip(&self, dir: &Path) -> Result<Box<dyn FlowProvider>> {
        Ok(match self {
            FlowSource::Oracle => {
                let m = Motion::read(dir)?;
                // Triplet outer frames are two steps apart.
                Box::new(OracleFlow::uniform(2.0 * m.dx, 2.0 * m.dy))
            }
            FlowSource::BlockMatching(b) => Box::new(*b),
        })
    }
}

impl FromStr for FlowSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(FlowSource::Oracle),
            "block-matching" => Ok(FlowSource::BlockMatching(BlockMatchingFlow::default())),
            _ => Err(Error::Config(format!("unknown flow provider {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipError {
    pub clip: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct IngestOutcome {
    pub train: TripletManifest,
    pub test: TripletManifest,
    /// Clips that were skipped, with the reason.
    pub errors: Vec<ClipError>,
}

impl IngestOutcome {
    pub fn counts(&self) -> BucketCounts {
        let (a, b) = (self.train.counts(), self.test.counts());
        BucketCounts(std::array::from_fn(|i| a.0[i] + b.0[i]))
    }

    /// Writes both manifests and both plain-text lists into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for m in [&self.train, &self.test] {
            m.write_jsonl(&dir.join(m.split.manifest_name()))?;
            m.write_list(&dir.join(m.split.list_name()))?;
        }
        Ok(())
    }
}

fn list_frames(dir: &Path, extension: &str) -> Result<Vec<PathBuf>> {
    let mut frames = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let matches = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case(extension));
        if path.is_file() && matches {
            frames.push(path);
        }
    }
    frames.sort();
    Ok(frames)
}

fn ingest_clip(root: &Path, clip: &str, layout: &Layout, flow: &FlowSource) -> Result<Vec<Triplet>> {
    let dir = root.join(clip);
    let frames = list_frames(&dir, &layout.extension)?;
    let windows = build_triplets(&frames, layout.policy_for(clip));
    if windows.is_empty() {
        return Err(Error::Data(format!(
            "{} frames yield no triplets under {}",
            frames.len(),
            layout.policy_for(clip)
        )));
    }
    let mut dims = None;
    for f in &frames {
        let d = image_dimensions(f)?;
        if *dims.get_or_insert(d) != d {
            return Err(Error::Data(format!(
                "{} is {}x{}, earlier frames are {}x{}",
                f.display(),
                d.0,
                d.1,
                dims.expect("set").0,
                dims.expect("set").1
            )));
        }
    }
    let provider = flow.for_clip(&dir)?;
    let mut out = Vec::with_capacity(windows.len());
    for (i, [a, b, c]) in windows.into_iter().enumerate() {
        let sample_id = Triplet::sample_id(clip, i);
        let (f1, f2) = (Frame::load(&a)?, Frame::load(&c)?);
        let extent = motion_extent(&sample_id, &f1, &f2, provider.as_ref(), layout.extent_statistic)?;
        out.push(Triplet {
            sample_id,
            clip: clip.to_string(),
            i1: a,
            ig: b,
            i2: c,
            motion_extent: Some(extent),
            setting: Some(Setting::from_extent(extent)?),
        });
    }
    Ok(out)
}

/// Builds stratified train and test manifests from `<root>/<clip>/<frame>`.
/// A clip that fails for any reason is recorded in
/// [`IngestOutcome::errors`] and left out; the other clips are unaffected.
pub fn ingest(root: &Path, layout: &Layout, flow: &FlowSource) -> Result<IngestOutcome> {
    layout.validate()?;
    let mut clips = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        if entry.path().is_dir() {
            clips.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    clips.sort();
    let mut triplets = Vec::new();
    let mut errors = Vec::new();
    let mut good = Vec::new();
    for clip in &clips {
        match ingest_clip(root, clip, layout, flow) {
            Ok(t) => {
                triplets.extend(t);
                good.push(clip.clone());
            }
            Err(e) => {
                log::error!("skipping clip {clip}: {e}");
                errors.push(ClipError {
                    clip: clip.clone(),
                    message: e.to_string(),
                });
            }
        }
    }
    let (_, test_clips) = layout.split_clips(&good);
    let make = |split: Split, entries: Vec<Triplet>| TripletManifest {
        split,
        source_tag: layout.name.clone(),
        extent_statistic: layout.extent_statistic,
        flow_provider: flow.name().into(),
        entries,
    };
    let (test, train): (Vec<Triplet>, Vec<Triplet>) = triplets.into_iter().partition(|t| test_clips.contains(&t.clip));
    Ok(IngestOutcome {
        train: make(Split::Train, train),
        test: make(Split::Test, test),
        errors,
    })
}
