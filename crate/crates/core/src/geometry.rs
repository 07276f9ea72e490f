//! Closed-form equirectangular (ERP) distortion quantities.
//!
//! Everything here is computed in `f64`. Consumers that run in lower precision
//! cast at their own boundary.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Area stretching ratio between the sphere and the ERP plane at latitude `y`
/// (radians). It only depends on latitude and equals `cos(y)`.
pub fn stretching_ratio(latitude: f64) -> Result<f64> {
    if !(latitude > -FRAC_PI_2 && latitude < FRAC_PI_2) {
        return Err(Error::Domain(format!(
            "latitude {latitude} outside the open interval (-pi/2, pi/2)"
        )));
    }
    Ok(latitude.cos())
}

/// Latitude in radians of the center of pixel row `row` in a frame of
/// `height` rows. Row 0 is the north edge (negative latitude by convention,
/// the sign does not matter for any even quantity computed here).
pub fn row_latitude(row: usize, height: usize) -> f64 {
    ((row as f64 + 0.5) / height as f64 - 0.5) * PI
}

/// Latitude-dependent distortion prior for an `height x width` ERP grid.
///
/// Values are row-constant, so only one value per row is stored. The map is
/// conceptually `1 x height x width`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionMap {
    height: usize,
    width: usize,
    rows: Vec<f64>,
}

/// Builds the condition map `cos(((m + 0.5 - M/2) / M) * pi)` for every row `m`.
pub fn condition_map(height: usize, width: usize) -> Result<ConditionMap> {
    if height == 0 || width == 0 {
        return Err(Error::Argument(format!(
            "condition map dimensions must be positive, got {height}x{width}"
        )));
    }
    let m_total = height as f64;
    let rows = (0..height)
        .map(|m| (((m as f64 + 0.5 - m_total / 2.0) / m_total) * PI).cos())
        .collect();
    Ok(ConditionMap { height, width, rows })
}

impl ConditionMap {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Value at row `m`, column `n`.
    pub fn value(&self, m: usize, n: usize) -> f64 {
        assert!(n < self.width, "column {n} out of range");
        self.rows[m]
    }

    /// One value per row.
    pub fn row_values(&self) -> &[f64] {
        &self.rows
    }

    /// Dense row-major `height * width` copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.height * self.width);
        for &v in &self.rows {
            out.extend(std::iter::repeat_n(v, self.width));
        }
        out
    }

    /// The map for another resolution. Recomputed from the closed form, never
    /// resampled from `self`.
    pub fn resized(&self, height: usize, width: usize) -> Result<ConditionMap> {
        condition_map(height, width)
    }

    /// Writes the dense map as little-endian `f32`, row-major, no header.
    pub fn write_f32_le(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.height * self.width * 4);
        for v in self.to_dense() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&bytes).map_err(|e| Error::io(path, e))
    }
}

/// Stand-alone alias kept for symmetry with [`ConditionMap::resized`].
pub fn resize_condition_map(map: &ConditionMap, height: usize, width: usize) -> Result<ConditionMap> {
    map.resized(height, width)
}
