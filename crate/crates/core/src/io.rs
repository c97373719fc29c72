//! 8-bit grayscale PNG and binary PGM (P5) reading and writing.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::{ColorType, ImageFormat};
use thiserror::Error;

use crate::image::GrayImage;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: unsupported pixel format {format}; only 8-bit grayscale is accepted")]
    UnsupportedFormat { path: PathBuf, format: String },
    #[error("{path}: malformed image: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("{path}: unknown image extension (expected .png or .pgm)")]
    UnknownExtension { path: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Png,
    Pgm,
}

fn format_of(path: &Path) -> Option<Format> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    match ext.as_str() {
        "png" => Some(Format::Png),
        "pgm" => Some(Format::Pgm),
        _ => None,
    }
}

/// Loads an 8-bit grayscale PNG or PGM. Color and 16-bit images are rejected.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage, IoError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| IoError::Read {
        path: path.to_owned(),
        source,
    })?;
    let format = match format_of(path) {
        Some(f) => f,
        None if bytes.starts_with(b"P5") => Format::Pgm,
        None if bytes.starts_with(b"\x89PNG") => Format::Png,
        None => {
            return Err(IoError::UnknownExtension {
                path: path.to_owned(),
            })
        }
    };
    match format {
        Format::Pgm => decode_pgm(&bytes).map_err(|reason| IoError::Malformed {
            path: path.to_owned(),
            reason,
        }),
        Format::Png => decode_png(path, &bytes),
    }
}

fn decode_png(path: &Path, bytes: &[u8]) -> Result<GrayImage, IoError> {
    let dynimg = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| {
        IoError::Malformed {
            path: path.to_owned(),
            reason: e.to_string(),
        }
    })?;
    if dynimg.color() != ColorType::L8 {
        return Err(IoError::UnsupportedFormat {
            path: path.to_owned(),
            format: format!("{:?}", dynimg.color()),
        });
    }
    let luma = dynimg.into_luma8();
    let (w, h) = luma.dimensions();
    GrayImage::new(w as usize, h as usize, luma.into_raw()).map_err(|e| IoError::Malformed {
        path: path.to_owned(),
        reason: e.to_string(),
    })
}

fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, String> {
    let mut pos = 0usize;
    let next_token = |pos: &mut usize| -> Result<String, String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err("truncated header".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    let magic = next_token(&mut pos)?;
    if magic != "P5" {
        return Err(format!("expected binary PGM magic P5, found {magic}"));
    }
    let num = |pos: &mut usize, what: &str| -> Result<usize, String> {
        next_token(pos)?
            .parse::<usize>()
            .map_err(|_| format!("invalid {what}"))
    };
    let width = num(&mut pos, "width")?;
    let height = num(&mut pos, "height")?;
    let maxval = num(&mut pos, "maxval")?;
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}; only 8-bit (255) is accepted"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let n = width * height;
    if bytes.len() < pos + n {
        return Err(format!(
            "raster truncated: expected {n} bytes, found {}",
            bytes.len().saturating_sub(pos)
        ));
    }
    GrayImage::new(width, height, bytes[pos..pos + n].to_vec()).map_err(|e| e.to_string())
}

/// Canonical P5 encoding: `P5\n<w> <h>\n255\n` followed by the raster.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

/// Writes PNG or PGM according to the file extension.
pub fn save_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    let format = format_of(path).ok_or_else(|| IoError::UnknownExtension {
        path: path.to_owned(),
    })?;
    let write_err = |source| IoError::Write {
        path: path.to_owned(),
        source,
    };
    match format {
        Format::Pgm => fs::write(path, encode_pgm(img)).map_err(write_err),
        Format::Png => {
            let file = fs::File::create(path).map_err(write_err)?;
            let mut w = BufWriter::new(file);
            image::write_buffer_with_format(
                &mut w,
                img.pixels(),
                img.width() as u32,
                img.height() as u32,
                image::ExtendedColorType::L8,
                ImageFormat::Png,
            )
            .map_err(|e| IoError::Write {
                path: path.to_owned(),
                source: std::io::Error::other(e),
            })?;
            w.flush().map_err(write_err)
        }
    }
}
