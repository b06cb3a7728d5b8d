//! Minimal `.npy` version 1.0 support: little-endian `f4`, C order, 1 to 3 extents.
//!
//! Values are widened to `f64` on read and narrowed to `f32` on write.

use std::fs;
use std::path::Path;

use crate::error::{CsaError, Result};
use crate::mask::FeatureMask;
use crate::tensor::FeatureMap;

pub const MAGIC: &[u8; 6] = b"\x93NUMPY";
const PREAMBLE: usize = 10;
const ALIGN: usize = 64;

/// Raw array read from an `.npy` file.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl NpyArray {
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }
}

/// Parsed header dictionary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorFileHeader {
    pub descr: String,
    pub fortran_order: bool,
    pub shape: Vec<usize>,
}

struct DictParser<'a> {
    text: &'a str,
    pos: usize,
    base: usize,
}

impl<'a> DictParser<'a> {
    fn err(&self, message: impl Into<String>) -> CsaError {
        CsaError::format(self.base + self.pos, message)
    }

    fn skip_ws(&mut self) {
        while self.pos < self.text.len() && self.text.as_bytes()[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.text.as_bytes().get(self.pos).copied()
    }

    fn expect(&mut self, ch: u8) -> Result<()> {
        if self.peek() == Some(ch) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected '{}'", ch as char)))
        }
    }

    fn string(&mut self) -> Result<String> {
        let quote = match self.peek() {
            Some(q @ (b'\'' | b'"')) => q,
            _ => return Err(self.err("expected a quoted string")),
        };
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.text.len() && self.text.as_bytes()[self.pos] != quote {
            self.pos += 1;
        }
        if self.pos >= self.text.len() {
            return Err(self.err("unterminated string"));
        }
        let s = self.text[start..self.pos].to_string();
        self.pos += 1;
        Ok(s)
    }

    fn word(&mut self) -> &'a str {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.text.len() && self.text.as_bytes()[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        &self.text[start..self.pos]
    }

    fn boolean(&mut self) -> Result<bool> {
        let at = self.pos;
        match self.word() {
            "True" => Ok(true),
            "False" => Ok(false),
            _ => {
                self.pos = at;
                Err(self.err("expected True or False"))
            }
        }
    }

    fn shape(&mut self) -> Result<Vec<usize>> {
        self.expect(b'(')?;
        let mut dims = Vec::new();
        loop {
            if self.peek() == Some(b')') {
                self.pos += 1;
                return Ok(dims);
            }
            let at = self.pos;
            let w = self.word();
            let dim = w.parse::<usize>().map_err(|_| {
                self.pos = at;
                self.err("expected a shape extent")
            })?;
            dims.push(dim);
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b')') => {}
                _ => return Err(self.err("expected ',' or ')' in shape")),
            }
        }
    }
}

fn parse_header(text: &str, base: usize) -> Result<TensorFileHeader> {
    let mut p = DictParser { text, pos: 0, base };
    let mut descr = None;
    let mut fortran = None;
    let mut shape = None;
    p.expect(b'{')?;
    loop {
        if p.peek() == Some(b'}') {
            break;
        }
        let key = p.string()?;
        p.expect(b':')?;
        match key.as_str() {
            "descr" => {
                p.skip_ws();
                descr = Some((p.base + p.pos, p.string()?));
            }
            "fortran_order" => {
                p.skip_ws();
                fortran = Some((p.base + p.pos, p.boolean()?));
            }
            "shape" => shape = Some(p.shape()?),
            other => return Err(p.err(format!("unexpected header key '{other}'"))),
        }
        match p.peek() {
            Some(b',') => p.pos += 1,
            Some(b'}') => {}
            _ => return Err(p.err("expected ',' or '}'")),
        }
    }
    let end = base + p.pos;
    let (descr_at, descr) = descr.ok_or_else(|| CsaError::format(end, "header lacks 'descr'"))?;
    let (order_at, fortran_order) =
        fortran.ok_or_else(|| CsaError::format(end, "header lacks 'fortran_order'"))?;
    let shape = shape.ok_or_else(|| CsaError::format(end, "header lacks 'shape'"))?;

    if descr != "<f4" {
        return Err(CsaError::format(
            descr_at,
            format!("unsupported dtype '{descr}', only little-endian float32 ('<f4') is accepted"),
        ));
    }
    if fortran_order {
        return Err(CsaError::format(
            order_at,
            "Fortran-order arrays are not supported",
        ));
    }
    Ok(TensorFileHeader {
        descr,
        fortran_order,
        shape,
    })
}

/// Decodes an `.npy` byte buffer.
pub fn decode(bytes: &[u8]) -> Result<NpyArray> {
    if bytes.len() < PREAMBLE || &bytes[..6] != MAGIC {
        return Err(CsaError::format(0, "missing \\x93NUMPY magic"));
    }
    if bytes[6] != 1 || bytes[7] != 0 {
        return Err(CsaError::format(
            6,
            format!("unsupported npy version {}.{}", bytes[6], bytes[7]),
        ));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let payload_at = PREAMBLE + header_len;
    if bytes.len() < payload_at {
        return Err(CsaError::format(8, "header length runs past end of file"));
    }
    let text = std::str::from_utf8(&bytes[PREAMBLE..payload_at])
        .map_err(|e| CsaError::format(PREAMBLE + e.valid_up_to(), "header is not ASCII"))?;
    let header = parse_header(text, PREAMBLE)?;

    if header.shape.is_empty() || header.shape.len() > 3 {
        return Err(CsaError::format(
            PREAMBLE,
            format!("expected 1 to 3 extents, got {}", header.shape.len()),
        ));
    }
    let count: usize = header.shape.iter().product();
    let payload = &bytes[payload_at..];
    if payload.len() != count * 4 {
        return Err(CsaError::format(
            payload_at,
            format!(
                "payload holds {} bytes, shape needs {}",
                payload.len(),
                count * 4
            ),
        ));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(CsaError::Data(format!(
            "non-finite value at element {i} (byte {})",
            payload_at + 4 * i
        )));
    }
    Ok(NpyArray {
        shape: header.shape,
        data,
    })
}

/// Encodes `data` with the given shape as `<f4` `.npy` bytes.
pub fn encode(shape: &[usize], data: &[f64]) -> Result<Vec<u8>> {
    if shape.is_empty() || shape.len() > 3 {
        return Err(CsaError::Shape(format!(
            "expected 1 to 3 extents, got {}",
            shape.len()
        )));
    }
    if shape.iter().product::<usize>() != data.len() {
        return Err(CsaError::Shape(format!(
            "shape {shape:?} does not hold {} values",
            data.len()
        )));
    }
    let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
    let tuple = if dims.len() == 1 {
        format!("({},)", dims[0])
    } else {
        format!("({})", dims.join(", "))
    };
    let mut dict = format!("{{'descr': '<f4', 'fortran_order': False, 'shape': {tuple}, }}");
    let unpadded = PREAMBLE + dict.len() + 1;
    let padding = (ALIGN - unpadded % ALIGN) % ALIGN;
    dict.push_str(&" ".repeat(padding));
    dict.push('\n');

    let mut out = Vec::with_capacity(PREAMBLE + dict.len() + 4 * data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    for (i, &v) in data.iter().enumerate() {
        let narrow = v as f32;
        if !narrow.is_finite() {
            return Err(CsaError::Data(format!(
                "value {v} at element {i} does not fit a 32-bit float"
            )));
        }
        out.extend_from_slice(&narrow.to_le_bytes());
    }
    Ok(out)
}

pub fn read_array(path: impl AsRef<Path>) -> Result<NpyArray> {
    decode(&fs::read(path)?)
}

pub fn write_array(path: impl AsRef<Path>, shape: &[usize], data: &[f64]) -> Result<()> {
    let bytes = encode(shape, data)?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads a 2- or 3-extent tensor. Two extents become a single-channel map.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<FeatureMap> {
    let array = read_array(path)?;
    match array.shape[..] {
        [h, w] => FeatureMap::new(1, h, w, array.to_f64()),
        [c, h, w] => FeatureMap::new(c, h, w, array.to_f64()),
        _ => Err(CsaError::format(
            PREAMBLE,
            format!("feature tensors need 2 or 3 extents, got {:?}", array.shape),
        )),
    }
}

/// Writes a map as a `(C, H, W)` tensor.
pub fn write_tensor(map: &FeatureMap, path: impl AsRef<Path>) -> Result<()> {
    let (c, h, w) = map.shape();
    write_array(path, &[c, h, w], map.data())
}

/// Reads a feature-space mask stored as a real tensor; values above 0.5 are holes.
pub fn read_feature_mask(path: impl AsRef<Path>) -> Result<FeatureMask> {
    let map = read_tensor(path)?;
    if map.channels() != 1 {
        return Err(CsaError::Shape(format!(
            "mask tensors must have one channel, got {}",
            map.channels()
        )));
    }
    FeatureMask::new(
        map.height(),
        map.width(),
        map.data().iter().map(|&v| (v > 0.5) as u8).collect(),
    )
}

/// Writes a mask as an `(H, W)` tensor of `0.0`/`1.0`.
pub fn write_feature_mask(mask: &FeatureMask, path: impl AsRef<Path>) -> Result<()> {
    let data: Vec<f64> = mask.cells().iter().map(|&c| c as f64).collect();
    write_array(path, &[mask.height(), mask.width()], &data)
}

/// Reads a 1-extent score vector.
pub fn read_scores(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let array = read_array(path)?;
    if array.shape.len() != 1 {
        return Err(CsaError::format(
            PREAMBLE,
            format!("score files need 1 extent, got {:?}", array.shape),
        ));
    }
    Ok(array.to_f64())
}
