//! PGM/PPM input images. Pixels are scaled to [0,1]; grayscale maps to one
//! channel, color to three.

use std::path::Path;

use image::{DynamicImage, ImageFormat};
use thiserror::Error;

use crate::nn::{Shape, Tensor};

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("cannot decode {path}: {source}")]
    Decode {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("cannot write {path}: {source}")]
    Encode {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("image has {0} channels; only 1 or 3 can be written")]
    Channels(usize),
}

fn from_dynamic(img: DynamicImage) -> Tensor {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let plane = w * h;
    if img.color().has_color() {
        let rgb = img.into_rgb32f();
        let mut data = vec![0.0f32; plane * 3];
        for (i, px) in rgb.pixels().enumerate() {
            for c in 0..3 {
                data[c * plane + i] = px.0[c];
            }
        }
        Tensor::new(Shape::new(w, h, 3), data).expect("sized above")
    } else {
        let gray = img.to_luma32f();
        Tensor::new(Shape::new(w, h, 1), gray.into_raw()).expect("sized above")
    }
}

/// Decodes PNM bytes (P1 through P6).
pub fn decode_pnm(bytes: &[u8]) -> Result<Tensor, ImageError> {
    image::load_from_memory_with_format(bytes, ImageFormat::Pnm)
        .map(from_dynamic)
        .map_err(|source| ImageError::Decode {
            path: "<memory>".into(),
            source,
        })
}

pub fn load_image(path: &Path) -> Result<Tensor, ImageError> {
    let bytes = std::fs::read(path).map_err(|e| ImageError::Decode {
        path: path.display().to_string(),
        source: image::ImageError::IoError(e),
    })?;
    image::load_from_memory_with_format(&bytes, ImageFormat::Pnm)
        .map(from_dynamic)
        .map_err(|source| ImageError::Decode {
            path: path.display().to_string(),
            source,
        })
}

/// Binary 8-bit PGM (one channel) or PPM (three channels).
pub fn encode_pnm(t: &Tensor) -> Result<Vec<u8>, ImageError> {
    let s = t.shape();
    let quantize = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let (magic, pixels) = match s.channels {
        1 => ("P5", t.data().iter().map(|&v| quantize(v)).collect::<Vec<_>>()),
        3 => {
            let plane = s.plane();
            let mut px = Vec::with_capacity(plane * 3);
            for i in 0..plane {
                for c in 0..3 {
                    px.push(quantize(t.data()[c * plane + i]));
                }
            }
            ("P6", px)
        }
        c => return Err(ImageError::Channels(c)),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", s.width, s.height).into_bytes();
    out.extend_from_slice(&pixels);
    Ok(out)
}

pub fn save_image(t: &Tensor, path: &Path) -> Result<(), ImageError> {
    let bytes = encode_pnm(t)?;
    std::fs::write(path, bytes).map_err(|e| ImageError::Encode {
        path: path.display().to_string(),
        source: image::ImageError::IoError(e),
    })
}
