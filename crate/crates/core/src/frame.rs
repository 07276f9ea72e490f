//! Planar RGB frames with values normalized to `[0, 1]`.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Rgb};

use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

/// An `height x width x 3` image stored channel-planar (`C, H, W`) in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Frame {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Argument(format!("empty frame {height}x{width}")));
        }
        if data.len() != CHANNELS * height * width {
            return Err(Error::Shape(format!(
                "frame {height}x{width}x{CHANNELS} needs {} values, got {}",
                CHANNELS * height * width,
                data.len()
            )));
        }
        Ok(Frame { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Frame {
            height,
            width,
            data: vec![value; CHANNELS * height * width],
        }
    }

    /// Builds a frame from `f(channel, row, col)`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(CHANNELS * height * width);
        for c in 0..CHANNELS {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Frame { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn same_shape(&self, other: &Frame) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub(crate) fn check_same_shape(&self, other: &Frame) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "frame shapes differ: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )))
        }
    }

    /// Rows reversed (north and south swapped).
    pub fn flip_vertical(&self) -> Frame {
        Frame::from_fn(self.height, self.width, |c, y, x| self.get(c, self.height - 1 - y, x))
    }

    /// Cyclic shift along longitude: output column `x` takes input column `x - shift`.
    pub fn roll_horizontal(&self, shift: isize) -> Frame {
        let w = self.width as isize;
        Frame::from_fn(self.height, self.width, |c, y, x| {
            self.get(c, y, (x as isize - shift).rem_euclid(w) as usize)
        })
    }

    /// Mean over channels.
    pub fn luma(&self) -> Vec<f64> {
        let n = self.height * self.width;
        (0..n)
            .map(|i| (self.data[i] + self.data[n + i] + self.data[2 * n + i]) / 3.0)
            .collect()
    }

    /// Loads an 8- or 16-bit image and normalizes it to `[0, 1]`.
    pub fn load(path: &Path) -> Result<Frame> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::from_dynamic(img))
    }

    fn from_dynamic(img: DynamicImage) -> Frame {
        let rgb = img.into_rgb16();
        let (w, h) = rgb.dimensions();
        let (w, h) = (w as usize, h as usize);
        let mut data = vec![0.0; CHANNELS * h * w];
        for (x, y, px) in rgb.enumerate_pixels() {
            for c in 0..CHANNELS {
                data[(c * h + y as usize) * w + x as usize] = px[c] as f64 / 65535.0;
            }
        }
        Frame {
            height: h,
            width: w,
            data,
        }
    }

    /// Saves as 8-bit PNG, clamping to `[0, 1]`.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let img: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_fn(self.width as u32, self.height as u32, |x, y| {
            let mut px = [0u8; 3];
            for (c, p) in px.iter_mut().enumerate() {
                let v = self.get(c, y as usize, x as usize).clamp(0.0, 1.0);
                *p = (v * 255.0).round() as u8;
            }
            Rgb(px)
        });
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        img.save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Reads only the header of an image file.
pub fn image_dimensions(path: &Path) -> Result<(usize, usize)> {
    let (w, h) = image::image_dimensions(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok((h as usize, w as usize))
}
