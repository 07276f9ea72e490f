//! Procedural ERP clips with known uniform motion.
//!
//! Frame `k` of a clip samples a smooth texture at `(x - k dx, y - k dy)`.
//! The texture is periodic in `x` over the frame width, so horizontal motion
//! wraps around the seam the way it does on a sphere. The per-frame motion is
//! stored next to the frames in `motion.json` for the oracle flow provider.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, CHANNELS};

pub const MOTION_FILE: &str = "motion.json";

/// Displacement between consecutive frames, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Motion {
    pub dx: f64,
    pub dy: f64,
}

impl Motion {
    pub fn read(clip_dir: &Path) -> Result<Motion> {
        let path = clip_dir.join(MOTION_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, Copy)]
struct Wave {
    amplitude: f64,
    /// Whole cycles across the frame width.
    kx: f64,
    /// Radians per pixel row.
    ky: f64,
    phase: f64,
}

#[derive(Debug, Clone)]
pub struct Texture {
    waves: Vec<[Wave; CHANNELS]>,
}

impl Texture {
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves = (0..6)
            .map(|_| {
                let kx = rng.gen_range(1..=5) as f64;
                let ky = rng.gen_range(0.05..0.35);
                let dir = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                std::array::from_fn(|_| Wave {
                    amplitude: rng.gen_range(0.02..0.07),
                    kx: dir * kx,
                    ky,
                    phase: rng.gen_range(0.0..TAU),
                })
            })
            .collect();
        Texture { waves }
    }

    pub fn sample(&self, c: usize, x: f64, y: f64, width: usize) -> f64 {
        let v: f64 = self
            .waves
            .iter()
            .map(|w| {
                let w = w[c];
                w.amplitude * (TAU * w.kx * x / width as f64 + w.ky * y + w.phase).sin()
            })
            .sum();
        (0.5 + v).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipSpec {
    pub name: String,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub motion: Motion,
    pub seed: u64,
}

impl ClipSpec {
    pub fn render(&self, k: usize) -> Frame {
        let tex = Texture::random(self.seed);
        let (ox, oy) = (k as f64 * self.motion.dx, k as f64 * self.motion.dy);
        Frame::from_fn(self.height, self.width, |c, y, x| {
            tex.sample(c, x as f64 - ox, y as f64 - oy, self.width)
        })
    }

    /// Writes `<root>/<name>/<k>.png` for every frame plus the motion sidecar.
    pub fn write(&self, root: &Path) -> Result<PathBuf> {
        let dir = root.join(&self.name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for k in 0..self.frames {
            self.render(k).save_png(&dir.join(format!("{k:04}.png")))?;
        }
        let path = dir.join(MOTION_FILE);
        fs::write(&path, serde_json::to_vec(&self.motion)?).map_err(|e| Error::io(&path, e))?;
        Ok(dir)
    }
}

/// Four three-frame 64x128 clips, one per difficulty setting.
pub fn toy_clips() -> Vec<ClipSpec> {
    [(1.0, 0.6), (-1.0, 1.2), (0.5, -1.7), (1.5, 2.5)]
        .into_iter()
        .enumerate()
        .map(|(i, (dx, dy))| ClipSpec {
            name: format!("toy{i}"),
            frames: 3,
            height: 64,
            width: 128,
            motion: Motion { dx, dy },
            seed: 100 + i as u64,
        })
        .collect()
}

pub fn write_toy_fixture(root: &Path) -> Result<()> {
    for clip in toy_clips() {
        clip.write(root)?;
    }
    Ok(())
}
