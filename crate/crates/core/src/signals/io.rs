//! Native `INRB` container and raster ingestion.
//!
//! Container layout: `"INRB"` | version `u8 = 1` | rank `u8` | channels `u8` |
//! rank × `u32` LE extents | `f32` LE values, row-major with channels last.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::SampledSignal;

const MAGIC: &[u8; 4] = b"INRB";
const VERSION: u8 = 1;

/// An array read back from a native container.
#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub extents: Vec<usize>,
    pub channels: usize,
    pub values: Vec<f64>,
}

pub fn encode_container(extents: &[usize], channels: usize, values: &[f64]) -> Result<Vec<u8>> {
    if extents.len() > u8::MAX as usize || channels == 0 || channels > u8::MAX as usize {
        return Err(Error::build(format!(
            "container cannot hold rank {} with {channels} channels",
            extents.len()
        )));
    }
    let n = extents.iter().product::<usize>() * channels;
    if n != values.len() {
        return Err(Error::build(format!("extents {extents:?} x {channels} need {n} values, got {}", values.len())));
    }
    let mut out = Vec::with_capacity(7 + 4 * extents.len() + 4 * n);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(extents.len() as u8);
    out.push(channels as u8);
    for &e in extents {
        let e = u32::try_from(e).map_err(|_| Error::build(format!("extent {e} exceeds u32")))?;
        out.extend_from_slice(&e.to_le_bytes());
    }
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

fn malformed(path: &Path, offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset,
        message: message.into(),
    }
}

pub fn decode_container(bytes: &[u8], path: &Path) -> Result<Container> {
    if bytes.len() < 7 {
        return Err(malformed(path, bytes.len(), "truncated header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(malformed(path, 0, "bad magic, expected INRB"));
    }
    if bytes[4] != VERSION {
        return Err(malformed(path, 4, format!("unsupported version {}", bytes[4])));
    }
    let rank = bytes[5] as usize;
    let channels = bytes[6] as usize;
    if channels == 0 {
        return Err(malformed(path, 6, "zero channels"));
    }
    let mut pos = 7;
    let mut extents = Vec::with_capacity(rank);
    for _ in 0..rank {
        let Some(chunk) = bytes.get(pos..pos + 4) else {
            return Err(malformed(path, bytes.len(), "truncated extents"));
        };
        extents.push(u32::from_le_bytes(chunk.try_into().unwrap()) as usize);
        pos += 4;
    }
    let n = extents
        .iter()
        .try_fold(channels, |acc, &e| acc.checked_mul(e))
        .ok_or_else(|| malformed(path, 7, "extents overflow"))?;
    let need = n.checked_mul(4).and_then(|b| b.checked_add(pos));
    match need {
        Some(end) if end == bytes.len() => {}
        Some(end) if end > bytes.len() => {
            return Err(malformed(path, bytes.len(), format!("truncated payload, expected {end} bytes")))
        }
        Some(end) => return Err(malformed(path, end, "trailing bytes after payload")),
        None => return Err(malformed(path, 7, "extents overflow")),
    }
    let values = bytes[pos..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(Container {
        extents,
        channels,
        values,
    })
}

pub fn write_container(path: &Path, extents: &[usize], channels: usize, values: &[f64]) -> Result<()> {
    fs::write(path, encode_container(extents, channels, values)?)?;
    Ok(())
}

pub fn read_container(path: &Path) -> Result<Container> {
    decode_container(&fs::read(path)?, path)
}

pub fn save_signal(path: &Path, signal: &SampledSignal) -> Result<()> {
    write_container(path, signal.resolution(), signal.channels(), signal.values())
}

pub fn load_signal(path: &Path) -> Result<SampledSignal> {
    let c = read_container(path)?;
    if !(2..=3).contains(&c.extents.len()) {
        return Err(malformed(path, 5, format!("signal rank must be 2 or 3, got {}", c.extents.len())));
    }
    SampledSignal::new(c.extents, c.channels, c.values).map_err(|e| malformed(path, 7, e.to_string()))
}

struct PnmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: PathBuf,
}

impl PnmCursor<'_> {
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(malformed(&self.path, start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| malformed(&self.path, start, format!("{what} out of range")))
    }
}

/// Parses binary PGM (`P5`) or PPM (`P6`), scaling samples by `1 / maxval`.
pub fn parse_pnm(bytes: &[u8], path: &Path) -> Result<SampledSignal> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(malformed(path, 0, "expected P5 or P6 magic")),
    };
    let mut cur = PnmCursor {
        bytes,
        pos: 2,
        path: path.to_path_buf(),
    };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let max_pos = cur.pos;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(malformed(path, max_pos, "zero image extent"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(malformed(path, max_pos, format!("maxval {maxval} outside 1..=65535")));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(malformed(path, cur.pos, "expected whitespace after maxval")),
    }
    let bps = if maxval > 255 { 2 } else { 1 };
    let n = width * height * channels;
    let data = &bytes[cur.pos..];
    if data.len() < n * bps {
        return Err(malformed(path, bytes.len(), format!("truncated raster, expected {} sample bytes", n * bps)));
    }
    let scale = maxval as f64;
    let values = (0..n)
        .map(|i| {
            let raw = if bps == 1 {
                data[i] as usize
            } else {
                u16::from_be_bytes([data[2 * i], data[2 * i + 1]]) as usize
            };
            (raw.min(maxval)) as f64 / scale
        })
        .collect();
    SampledSignal::new(vec![height, width], channels, values)
}

/// Writes a 2D signal as 8-bit PGM or PPM, clamping to [0, 1].
pub fn write_pnm(path: &Path, signal: &SampledSignal) -> Result<()> {
    fs::write(path, encode_pnm(signal)?)?;
    Ok(())
}

pub fn encode_pnm(signal: &SampledSignal) -> Result<Vec<u8>> {
    if signal.dim() != 2 {
        return Err(Error::Unsupported("PNM output needs a 2D signal".into()));
    }
    let magic = if signal.channels() == 1 { "P5" } else { "P6" };
    let (h, w) = (signal.resolution()[0], signal.resolution()[1]);
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    out.extend(signal.values().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

#[cfg(feature = "png")]
fn decode_png(bytes: &[u8], path: &Path) -> Result<SampledSignal> {
    let img = image::load_from_memory(bytes).map_err(|e| malformed(path, 0, e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        let rgb = img.to_rgb16();
        let values = rgb.as_raw().iter().map(|&v| v as f64 / 65535.0).collect();
        SampledSignal::new(vec![h, w], 3, values)
    } else {
        let l = img.to_luma16();
        let values = l.as_raw().iter().map(|&v| v as f64 / 65535.0).collect();
        SampledSignal::new(vec![h, w], 1, values)
    }
}

#[cfg(not(feature = "png"))]
fn decode_png(_bytes: &[u8], _path: &Path) -> Result<SampledSignal> {
    Err(Error::Unsupported("PNG input requires the `png` feature".into()))
}

/// Loads a native container, PGM/PPM, or (with the `png` feature) PNG file,
/// detected by content.
pub fn load_raster(path: &Path) -> Result<SampledSignal> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        let c = decode_container(&bytes, path)?;
        return SampledSignal::new(c.extents, c.channels, c.values).map_err(|e| malformed(path, 5, e.to_string()));
    }
    if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        return parse_pnm(&bytes, path);
    }
    if bytes.starts_with(b"\x89PNG") {
        return decode_png(&bytes, path);
    }
    Err(malformed(path, 0, "unrecognized file format"))
}
