//! 8-bit grayscale mask images: binary PGM (`P5`) and single-channel PNG.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use crate::error::{CsaError, Result};
use crate::mask::ImageMask;

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Reads a grayscale image; pixels brighter than 127 become holes.
pub fn read_mask_image(path: impl AsRef<Path>) -> Result<ImageMask> {
    let bytes = fs::read(path)?;
    let (height, width, pixels) = if bytes.starts_with(b"P5") {
        decode_pgm(&bytes)?
    } else if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(&bytes)?
    } else {
        return Err(CsaError::format(0, "not a binary PGM (P5) or PNG image"));
    };
    ImageMask::new(
        height,
        width,
        pixels.iter().map(|&p| (p > 127) as u8).collect(),
    )
}

/// Returns the next whitespace-delimited header token, skipping `#` comments.
fn next_token(bytes: &[u8], pos: &mut usize) -> Result<(usize, usize)> {
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
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if start == *pos {
        return Err(CsaError::format(start, "expected a number in PGM header"));
    }
    let value = std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| CsaError::format(start, "PGM header number out of range"))?;
    Ok((value, start))
}

fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut pos = 2;
    let (width, _) = next_token(bytes, &mut pos)?;
    let (height, _) = next_token(bytes, &mut pos)?;
    let (maxval, at) = next_token(bytes, &mut pos)?;
    if maxval == 0 || maxval > 255 {
        return Err(CsaError::format(
            at,
            format!("only 8-bit PGM is supported, maxval {maxval}"),
        ));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(CsaError::format(
            pos,
            "missing whitespace before PGM raster",
        ));
    }
    pos += 1;
    let raster = &bytes[pos..];
    if raster.len() < width * height {
        return Err(CsaError::format(
            pos,
            format!(
                "PGM raster holds {} bytes, need {}",
                raster.len(),
                width * height
            ),
        ));
    }
    Ok((height, width, raster[..width * height].to_vec()))
}

fn decode_png(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| CsaError::format(0, format!("PNG decode failed: {e}")))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(CsaError::format(
            0,
            format!(
                "only 8-bit single-channel PNG is supported, got {:?} at {:?}",
                info.color_type, info.bit_depth
            ),
        ));
    }
    let (width, height) = (info.width as usize, info.height as usize);
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(width * height)];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| CsaError::format(0, format!("PNG decode failed: {e}")))?;
    buf.truncate(frame.buffer_size());
    Ok((height, width, buf))
}

/// Writes 8-bit grayscale pixels as a binary PGM.
pub fn write_pgm(path: impl AsRef<Path>, height: usize, width: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != height * width {
        return Err(CsaError::Shape(format!(
            "{} pixels for a {height}x{width} image",
            pixels.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    fs::write(path, out)?;
    Ok(())
}
