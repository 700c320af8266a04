//! Binary PNM image files: P5 (grayscale) and P6 (RGB).
//!
//! Values in [0, 1] quantize to the chosen bit depth with ties-to-even
//! rounding after clamping; 16-bit samples are big-endian per the format.
//! Reading scales samples back by the stored maxval, so a write/read cycle
//! of already-quantized data reproduces the file byte for byte.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    fn maxval(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

pub fn write_pnm<W: Write>(writer: &mut W, image: &Image, depth: BitDepth) -> Result<()> {
    let (h, w, c) = image.shape();
    let magic = match c {
        1 => "P5",
        3 => "P6",
        other => {
            return Err(Error::ImageFormat(format!(
                "PNM supports 1 or 3 channels, got {other}"
            )))
        }
    };
    let maxval = depth.maxval();
    write!(writer, "{magic}\n{w} {h}\n{maxval}\n")?;
    let scale = maxval as f64;
    for &v in image.data() {
        let q = (v.clamp(0.0, 1.0) * scale).round_ties_even() as u32;
        match depth {
            BitDepth::Eight => writer.write_all(&[q as u8])?,
            BitDepth::Sixteen => writer.write_all(&(q as u16).to_be_bytes())?,
        }
    }
    Ok(())
}

pub fn read_pnm<R: Read>(reader: &mut R) -> Result<Image> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let mut pos = 0usize;

    let magic = read_word(&bytes, &mut pos)?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => {
            return Err(Error::ImageFormat(format!(
                "unsupported PNM magic '{other}' (expected P5 or P6)"
            )))
        }
    };
    let width = read_number(&bytes, &mut pos)? as usize;
    let height = read_number(&bytes, &mut pos)? as usize;
    let maxval = read_number(&bytes, &mut pos)?;
    if width == 0 || height == 0 {
        return Err(Error::ImageFormat(format!(
            "degenerate image size {width}x{height}"
        )));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::ImageFormat(format!("invalid maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => {
            return Err(Error::ImageFormat(
                "missing whitespace before raster data".into(),
            ))
        }
    }

    let samples = width * height * channels;
    let bytes_per = if maxval > 255 { 2 } else { 1 };
    let need = samples * bytes_per;
    let raster = bytes.get(pos..pos + need).ok_or_else(|| {
        Error::ImageFormat(format!(
            "raster truncated: need {need} bytes, have {}",
            bytes.len().saturating_sub(pos)
        ))
    })?;
    // Divide rather than multiply by a reciprocal: division rounds
    // correctly, so values come back as exactly k / maxval.
    let scale = maxval as f64;
    let data: Vec<f64> = if bytes_per == 1 {
        raster.iter().map(|&b| b as f64 / scale).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|p| u16::from_be_bytes([p[0], p[1]]) as f64 / scale)
            .collect()
    };
    Image::new(height, width, channels, data)
}

pub fn save_pnm<P: AsRef<Path>>(path: P, image: &Image, depth: BitDepth) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_pnm(&mut writer, image, depth)?;
    writer.flush()?;
    Ok(())
}

pub fn load_pnm<P: AsRef<Path>>(path: P) -> Result<Image> {
    read_pnm(&mut BufReader::new(File::open(path)?))
}

/// Skips whitespace and '#' comments, then returns the next token.
fn read_word(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            Some(_) => break,
            None => return Err(Error::ImageFormat("unexpected end of header".into())),
        }
    }
    let start = *pos;
    while let Some(b) = bytes.get(*pos) {
        if b.is_ascii_whitespace() {
            break;
        }
        *pos += 1;
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn read_number(bytes: &[u8], pos: &mut usize) -> Result<u32> {
    let word = read_word(bytes, pos)?;
    word.parse::<u32>()
        .map_err(|_| Error::ImageFormat(format!("expected integer in header, got '{word}'")))
}
