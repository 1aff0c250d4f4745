//! PNG at the edge, raw RGB8 inside: commitments bind pixels, not codec bytes.

use std::io::Cursor;

use acrp_core::chunking::ImageDescriptor;
use image::{ImageFormat, RgbImage};

#[derive(Debug, thiserror::Error)]
pub enum PhotoError {
    #[error("png: {0}")]
    Codec(#[from] image::ImageError),
    #[error(transparent)]
    Image(#[from] acrp_core::chunking::ChunkingError),
}

/// Decodes a PNG of any colour type to RGB8; alpha is dropped.
pub fn decode_png(bytes: &[u8]) -> Result<ImageDescriptor, PhotoError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_rgb8();
    let (w, h) = img.dimensions();
    Ok(ImageDescriptor::new(w, h, img.into_raw())?)
}

pub fn encode_png(img: &ImageDescriptor) -> Result<Vec<u8>, PhotoError> {
    let buf = RgbImage::from_raw(img.width, img.height, img.data().to_vec()).expect("descriptor is sized");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}
