use jpeg_encoder::{ColorType, Encoder, SamplingFactor};
use pfd_core::imaging::{decode_image, jpeg_recompress, to_luma, Channels, ImagePlane};
use pfd_core::synthetic::natural_image;

fn encode(img: &ImagePlane, quality: u8) -> Vec<u8> {
    let mut out = Vec::new();
    let mut enc = Encoder::new(&mut out, quality);
    enc.set_sampling_factor(SamplingFactor::R_4_2_0);
    enc.encode(&img.to_u8(), img.width() as u16, img.height() as u16, ColorType::Rgb)
        .unwrap();
    out
}

/// Decodes with an independent baseline decoder and returns mean luma.
fn reference_luma_mean(bytes: &[u8]) -> (usize, usize, f64) {
    let mut dec = jpeg_decoder::Decoder::new(bytes);
    let pixels = dec.decode().unwrap();
    let info = dec.info().unwrap();
    assert_eq!(info.pixel_format, jpeg_decoder::PixelFormat::RGB24);
    let (w, h) = (usize::from(info.width), usize::from(info.height));
    let sum: f64 = pixels
        .chunks(3)
        .map(|p| (0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])).clamp(0.0, 255.0))
        .sum();
    (w, h, sum / (w * h) as f64)
}

#[test]
fn file_decoding_agrees_with_reference_decoder() {
    let img = natural_image(72, 56, 4);
    let bytes = encode(&img, 85);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.jpg");
    std::fs::write(&path, &bytes).unwrap();
    let ours = decode_image(&path).unwrap();
    let (w, h, reference) = reference_luma_mean(&bytes);
    assert_eq!((ours.width(), ours.height()), (w, h));
    let mean = to_luma(&ours).mean();
    assert!((mean - reference).abs() <= 0.5, "{mean} vs {reference}");
}

#[test]
fn recompression_matches_reference_round_trip() {
    for (seed, q) in [(1, 90u32), (2, 50), (3, 30)] {
        let img = natural_image(64, 48, seed);
        let ours = jpeg_recompress(&img, q).unwrap();
        let (_, _, reference) = reference_luma_mean(&encode(&img, q as u8));
        let mean = to_luma(&ours).mean();
        assert!((mean - reference).abs() <= 0.5, "q{q}: {mean} vs {reference}");
    }
}

#[test]
fn grayscale_recompression_keeps_one_channel() {
    let img = to_luma(&natural_image(40, 40, 8));
    let out = jpeg_recompress(&img, 75).unwrap();
    assert_eq!(out.channels(), Channels::Luma1);
    assert!((out.mean() - img.mean()).abs() < 2.0);
}

#[test]
fn non_image_bytes_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("notes.png");
    std::fs::write(&path, b"plain text, not an image").unwrap();
    assert!(decode_image(&path).is_err());
    let truncated = dir.path().join("cut.jpg");
    let bytes = encode(&natural_image(32, 32, 1), 80);
    std::fs::write(&truncated, &bytes[..bytes.len() / 3]).unwrap();
    assert!(decode_image(&truncated).is_err());
}
