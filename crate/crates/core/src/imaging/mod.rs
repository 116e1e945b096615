//! Image planes, decoding, and the augmentation/degradation bank.

mod augment;
pub(crate) mod filters;
mod jpeg;

use std::path::Path;

use image::{ImageFormat, ImageReader};

use crate::error::{Error, Result};

pub use augment::{
    apply_policy, brightness_contrast, gaussian_noise, grid_dropout, horizontal_flip, rotate, AugmentPolicy,
    Degradation, Probabilities,
};
pub use filters::{gaussian_blur, gaussian_kernel, laplacian_variance, median_filter};
pub use jpeg::jpeg_recompress;

/// Smallest side accepted anywhere in the pipeline.
pub const MIN_SIDE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channels {
    Luma1,
    Rgb3,
}

impl Channels {
    pub fn count(self) -> usize {
        match self {
            Channels::Luma1 => 1,
            Channels::Rgb3 => 3,
        }
    }
}

/// Interleaved floating-point image with values in [0, 255].
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    channels: Channels,
    data: Vec<f64>,
}

impl ImagePlane {
    pub fn new(width: usize, height: usize, channels: Channels, data: Vec<f64>) -> Result<Self> {
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(Error::Undersized {
                width,
                height,
                min: MIN_SIDE,
            });
        }
        if data.len() != width * height * channels.count() {
            return Err(Error::DimensionMismatch {
                expected: width * height * channels.count(),
                found: data.len(),
            });
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=255.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("pixel value {v} outside [0, 255]")));
        }
        Ok(ImagePlane {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds a plane by clamping arbitrary values into [0, 255].
    pub fn from_clamped(width: usize, height: usize, channels: Channels, mut data: Vec<f64>) -> Result<Self> {
        for v in &mut data {
            *v = clamp_pixel(*v);
        }
        Self::new(width, height, channels, data)
    }

    pub fn filled(width: usize, height: usize, channels: Channels, value: f64) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels.count()])
    }

    // Internal constructor for ops that preserve all invariants.
    fn with_data(&self, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        ImagePlane {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> Channels {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels.count() + c]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Pixel values rounded to 8 bits.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| clamp_pixel(v.round()) as u8).collect()
    }

    /// Extracts channel `c` as a standalone row-major buffer.
    pub(crate) fn channel(&self, c: usize) -> Vec<f64> {
        let n = self.channels.count();
        self.data.iter().skip(c).step_by(n).copied().collect()
    }

    /// Applies `f` to each channel independently and re-interleaves.
    pub(crate) fn map_channels(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Self {
        let n = self.channels.count();
        let mut out = vec![0.0; self.data.len()];
        for c in 0..n {
            let mapped = f(&self.channel(c));
            for (i, v) in mapped.into_iter().enumerate() {
                out[i * n + c] = v;
            }
        }
        self.with_data(out)
    }
}

pub(crate) fn clamp_pixel(v: f64) -> f64 {
    v.clamp(0.0, 255.0)
}

/// Mirror index into `0..n` without repeating the edge sample.
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

/// Decodes a PNG, JPEG or BMP file into an RGB plane.
pub fn decode_image(path: impl AsRef<Path>) -> Result<ImagePlane> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.format() {
        Some(ImageFormat::Png | ImageFormat::Jpeg | ImageFormat::Bmp) => {}
        _ => return Err(Error::UnsupportedFormat(path.to_path_buf())),
    }
    let img = reader.decode().map_err(|e| Error::CorruptImage {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let data = rgb.into_raw().into_iter().map(f64::from).collect();
    ImagePlane::new(w, h, Channels::Rgb3, data)
}

/// Writes a plane as an 8-bit PNG.
pub fn save_png(img: &ImagePlane, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let color = match img.channels {
        Channels::Luma1 => image::ExtendedColorType::L8,
        Channels::Rgb3 => image::ExtendedColorType::Rgb8,
    };
    image::save_buffer_with_format(
        path,
        &img.to_u8(),
        img.width as u32,
        img.height as u32,
        color,
        ImageFormat::Png,
    )
    .map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::CorruptImage {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })
}

/// BT.601 luma; luma input is returned unchanged.
pub fn to_luma(img: &ImagePlane) -> ImagePlane {
    match img.channels {
        Channels::Luma1 => img.clone(),
        Channels::Rgb3 => ImagePlane {
            width: img.width,
            height: img.height,
            channels: Channels::Luma1,
            data: img
                .data
                .chunks_exact(3)
                .map(|p| clamp_pixel(0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]))
                .collect(),
        },
    }
}
