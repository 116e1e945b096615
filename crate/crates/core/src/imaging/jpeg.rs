use image::ImageFormat;
use jpeg_encoder::{ColorType, Encoder, SamplingFactor};

use super::{Channels, ImagePlane};
use crate::error::{Error, Result};

/// Round-trips the image through a baseline 4:2:0 JPEG at quality `qf`.
pub fn jpeg_recompress(img: &ImagePlane, qf: u32) -> Result<ImagePlane> {
    if !(1..=100).contains(&qf) {
        return Err(Error::InvalidArgument(format!(
            "JPEG quality must be in 1..=100, got {qf}"
        )));
    }
    let (w, h) = match (u16::try_from(img.width()), u16::try_from(img.height())) {
        (Ok(w), Ok(h)) => (w, h),
        _ => {
            return Err(Error::InvalidArgument(format!(
                "image {}x{} exceeds JPEG size limit",
                img.width(),
                img.height()
            )))
        }
    };
    let mut buf = Vec::new();
    let mut encoder = Encoder::new(&mut buf, qf as u8);
    encoder.set_sampling_factor(SamplingFactor::R_4_2_0);
    let color = match img.channels() {
        Channels::Luma1 => ColorType::Luma,
        Channels::Rgb3 => ColorType::Rgb,
    };
    encoder
        .encode(&img.to_u8(), w, h, color)
        .map_err(|e| Error::Numerical(format!("JPEG encode failed: {e}")))?;

    let decoded = image::load_from_memory_with_format(&buf, ImageFormat::Jpeg)
        .map_err(|e| Error::Numerical(format!("JPEG decode failed: {e}")))?;
    let data: Vec<f64> = match img.channels() {
        Channels::Luma1 => decoded.to_luma8().into_raw(),
        Channels::Rgb3 => decoded.to_rgb8().into_raw(),
    }
    .into_iter()
    .map(f64::from)
    .collect();
    ImagePlane::new(img.width(), img.height(), img.channels(), data)
}
