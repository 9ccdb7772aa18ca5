//! P5 PGM and grayscale PFM codecs, plus a P6 PPM writer for figures.
//!
//! Writers always emit the canonical layout (`P5\n<w> <h>\n255\n` and
//! `Pf\n<w> <h>\n-1.0\n`), so `write(read(bytes)) == bytes` holds for files
//! produced here. Readers additionally accept comments and arbitrary
//! whitespace in the header, and big-endian PFM.

use thiserror::Error;

use super::{DepthMap, LabelId, Raster, RasterError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("unrecognized magic number {0:?}")]
    BadMagic(String),
    #[error("color PFM (`PF`) is not supported")]
    ColorPfm,
    #[error("malformed header: {0}")]
    MalformedHeader(&'static str),
    #[error("unsupported maxval {0}, only 255 is accepted")]
    UnsupportedMaxval(u32),
    #[error("truncated payload: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("PFM value at index {index} is not finite")]
    NonFinite { index: usize },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// A sample type that can be stored in an 8-bit PGM.
pub trait PgmSample: Copy {
    fn to_byte(self) -> u8;
    fn from_byte(byte: u8) -> Self;
}

impl PgmSample for u8 {
    fn to_byte(self) -> u8 {
        self
    }
    fn from_byte(byte: u8) -> Self {
        byte
    }
}

impl PgmSample for LabelId {
    fn to_byte(self) -> u8 {
        self.0
    }
    fn from_byte(byte: u8) -> Self {
        LabelId(byte)
    }
}

/// Masks store 255 for foreground. Any nonzero byte reads as foreground.
impl PgmSample for bool {
    fn to_byte(self) -> u8 {
        if self {
            255
        } else {
            0
        }
    }
    fn from_byte(byte: u8) -> Self {
        byte != 0
    }
}

struct Header<'a> {
    magic: &'a [u8],
    fields: Vec<&'a str>,
    payload: &'a [u8],
}

/// Splits `magic` plus `n` whitespace-separated header fields, skipping `#`
/// comments. Exactly one whitespace byte separates the last field from the
/// payload.
fn parse_header(bytes: &[u8], n: usize) -> Result<Header<'_>, CodecError> {
    if bytes.len() < 2 {
        return Err(CodecError::MalformedHeader("missing magic number"));
    }
    let magic = &bytes[..2];
    let mut pos = 2;
    let mut fields = Vec::with_capacity(n);
    while fields.len() < n {
        // skip whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => return Err(CodecError::MalformedHeader("header ends early")),
            }
        }
        if fields.is_empty() && pos == 2 {
            return Err(CodecError::MalformedHeader("no whitespace after magic"));
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        let token = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| CodecError::MalformedHeader("non-ASCII header field"))?;
        fields.push(token);
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(CodecError::MalformedHeader("missing separator before payload")),
    }
    Ok(Header {
        magic,
        fields,
        payload: &bytes[pos..],
    })
}

fn parse_dim(field: &str) -> Result<usize, CodecError> {
    match field.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(CodecError::MalformedHeader("bad dimension")),
    }
}

pub fn read_pgm<T: PgmSample>(bytes: &[u8]) -> Result<Raster<T>, CodecError> {
    if bytes.len() >= 2 && &bytes[..2] != b"P5" {
        return Err(CodecError::BadMagic(
            String::from_utf8_lossy(&bytes[..2]).into_owned(),
        ));
    }
    let header = parse_header(bytes, 3)?;
    debug_assert_eq!(header.magic, b"P5");
    let width = parse_dim(header.fields[0])?;
    let height = parse_dim(header.fields[1])?;
    let maxval: u32 = header.fields[2]
        .parse()
        .map_err(|_| CodecError::MalformedHeader("bad maxval"))?;
    if maxval != 255 {
        return Err(CodecError::UnsupportedMaxval(maxval));
    }
    let expected = width
        .checked_mul(height)
        .ok_or(CodecError::MalformedHeader("dimensions overflow"))?;
    if header.payload.len() < expected {
        return Err(CodecError::Truncated {
            expected,
            got: header.payload.len(),
        });
    }
    let data = header.payload[..expected]
        .iter()
        .map(|&b| T::from_byte(b))
        .collect();
    Ok(Raster::from_vec(width, height, data)?)
}

pub fn write_pgm<T: PgmSample>(raster: &Raster<T>) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", raster.width(), raster.height());
    let mut out = Vec::with_capacity(header.len() + raster.len());
    out.extend_from_slice(header.as_bytes());
    out.extend(raster.as_slice().iter().map(|v| v.to_byte()));
    out
}

pub fn read_pfm(bytes: &[u8]) -> Result<DepthMap, CodecError> {
    if bytes.len() >= 2 {
        match &bytes[..2] {
            b"Pf" => {}
            b"PF" => return Err(CodecError::ColorPfm),
            other => {
                return Err(CodecError::BadMagic(
                    String::from_utf8_lossy(other).into_owned(),
                ))
            }
        }
    }
    let header = parse_header(bytes, 3)?;
    let width = parse_dim(header.fields[0])?;
    let height = parse_dim(header.fields[1])?;
    let scale: f32 = header.fields[2]
        .parse()
        .map_err(|_| CodecError::MalformedHeader("bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(CodecError::MalformedHeader("scale must be nonzero"));
    }
    let little_endian = scale < 0.0;
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or(CodecError::MalformedHeader("dimensions overflow"))?;
    if header.payload.len() < expected {
        return Err(CodecError::Truncated {
            expected,
            got: header.payload.len(),
        });
    }
    let mut data = vec![0.0f32; width * height];
    for (i, chunk) in header.payload[..expected].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        if !v.is_finite() {
            return Err(CodecError::NonFinite { index: i });
        }
        // file rows run bottom-up
        let (fx, fy) = (i % width, i / width);
        data[(height - 1 - fy) * width + fx] = v;
    }
    Ok(DepthMap::from_vec(width, height, data)?)
}

pub fn write_pfm(depth: &DepthMap) -> Vec<u8> {
    let (w, h) = depth.dims();
    let header = format!("Pf\n{w} {h}\n-1.0\n");
    let mut out = Vec::with_capacity(header.len() + w * h * 4);
    out.extend_from_slice(header.as_bytes());
    for y in (0..h).rev() {
        for x in 0..w {
            out.extend_from_slice(&depth.get(x, y).to_le_bytes());
        }
    }
    out
}

/// Binary RGB PPM, 8 bits per channel.
pub fn write_ppm(image: &Raster<[u8; 3]>) -> Vec<u8> {
    let header = format!("P6\n{} {}\n255\n", image.width(), image.height());
    let mut out = Vec::with_capacity(header.len() + 3 * image.len());
    out.extend_from_slice(header.as_bytes());
    out.extend(image.as_slice().iter().flatten());
    out
}
