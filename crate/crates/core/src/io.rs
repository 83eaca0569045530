//! File formats.
//!
//! DSRV layout (little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "DSRV"
//! 4       2     version (1)
//! 6       1     dtype (0 = f32)
//! 7       1     reserved (0)
//! 8       4     width
//! 12      4     height
//! 16      4     frames
//! 20      4·N   payload, frame-major row-major
//! ```

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{DsrError, Result};
use crate::sampling::{Measurements, SamplingKind, SamplingOperator};
use crate::volume::{FrameDims, Volume};

pub const MAGIC: &[u8; 4] = b"DSRV";
pub const VERSION: u16 = 1;
pub const DTYPE_F32: u8 = 0;
pub const HEADER_LEN: usize = 20;

pub fn encode_volume(vol: &Volume) -> Vec<u8> {
    let d = vol.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * d.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(DTYPE_F32);
    out.push(0);
    for n in [d.width, d.height, d.frames] {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for &v in vol.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_volume(bytes: &[u8]) -> Result<Volume> {
    if bytes.len() < HEADER_LEN {
        return Err(DsrError::data(format!(
            "DSRV header truncated ({} bytes)",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(DsrError::data("not a DSRV file (bad magic)"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(DsrError::data(format!(
            "unsupported DSRV version {version}"
        )));
    }
    if bytes[6] != DTYPE_F32 {
        return Err(DsrError::data(format!(
            "unsupported DSRV dtype {}",
            bytes[6]
        )));
    }
    let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let dims =
        FrameDims::new(word(8), word(12), word(16)).map_err(|e| DsrError::data(e.to_string()))?;
    let expected = dims
        .len()
        .checked_mul(4)
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| DsrError::data("DSRV dimensions overflow"))?;
    if bytes.len() != expected {
        return Err(DsrError::data(format!(
            "DSRV payload for {dims} needs {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Volume::new(dims, values)
}

pub fn write_volume(vol: &Volume, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_volume(vol))?;
    Ok(())
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    decode_volume(&bytes).map_err(|e| DsrError::data(format!("{}: {e}", path.display())))
}

/// Grayscale image from a binary (P5) PGM, scaled to `[0, 1]` by maxval.
#[derive(Debug, Clone, PartialEq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

fn pgm_token(data: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        while *pos < data.len() && data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < data.len() && data[*pos] == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < data.len() && data[*pos].is_ascii_digit() {
        *pos += 1;
    }
    std::str::from_utf8(&data[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| DsrError::data("malformed PGM header"))
}

pub fn decode_pgm(data: &[u8]) -> Result<Pgm> {
    if data.len() < 2 || &data[0..2] != b"P5" {
        return Err(DsrError::data("not a binary PGM (P5)"));
    }
    let mut pos = 2;
    let width = pgm_token(data, &mut pos)?;
    let height = pgm_token(data, &mut pos)?;
    let maxval = pgm_token(data, &mut pos)?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(DsrError::data(format!(
            "unsupported PGM geometry {width}x{height} maxval {maxval}"
        )));
    }
    if pos >= data.len() || !data[pos].is_ascii_whitespace() {
        return Err(DsrError::data("malformed PGM header"));
    }
    pos += 1;
    let bytes_per = if maxval < 256 { 1 } else { 2 };
    let payload = &data[pos..];
    if payload.len() < width * height * bytes_per {
        return Err(DsrError::data("PGM pixel data truncated"));
    }
    let scale = maxval as f64;
    let pixels = (0..width * height)
        .map(|i| {
            let v = if bytes_per == 1 {
                payload[i] as f64
            } else {
                u16::from_be_bytes([payload[2 * i], payload[2 * i + 1]]) as f64
            };
            (v / scale).min(1.0)
        })
        .collect();
    Ok(Pgm {
        width,
        height,
        pixels,
    })
}

/// 16-bit P5 encoding of raw sample values.
pub fn encode_pgm16(width: usize, height: usize, samples: &[u16]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for s in samples {
        out.extend_from_slice(&s.to_be_bytes());
    }
    out
}

/// Reads a manifest: one frame file name per line, blank lines and `#`
/// comments ignored.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        let line = line.trim();
        if !line.is_empty() && !line.starts_with('#') {
            out.push(PathBuf::from(line));
        }
    }
    Ok(out)
}

/// Stacks PGM frames listed in `manifest` (relative to `dir`) into a volume.
pub fn import_pgm_sequence(dir: impl AsRef<Path>, manifest: &[PathBuf]) -> Result<Volume> {
    if manifest.is_empty() {
        return Err(DsrError::data("empty frame manifest"));
    }
    let mut size = None;
    let mut values = Vec::new();
    for name in manifest {
        let path = dir.as_ref().join(name);
        let mut bytes = Vec::new();
        fs::File::open(&path)?.read_to_end(&mut bytes)?;
        let pgm =
            decode_pgm(&bytes).map_err(|e| DsrError::data(format!("{}: {e}", path.display())))?;
        match size {
            None => size = Some((pgm.width, pgm.height)),
            Some(s) if s != (pgm.width, pgm.height) => {
                return Err(DsrError::data(format!(
                    "{}: frame is {}x{}, expected {}x{}",
                    path.display(),
                    pgm.width,
                    pgm.height,
                    s.0,
                    s.1
                )));
            }
            _ => {}
        }
        values.extend(pgm.pixels);
    }
    let (w, h) = size.unwrap();
    Volume::new(FrameDims::new(w, h, manifest.len())?, values)
}

/// Per-frame file name `<prefix>_tNNNN.pgm`.
pub fn frame_path(prefix: &Path, t: usize) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(format!("_t{t:04}.pgm"));
    PathBuf::from(name)
}

/// Quantizes the volume to 16 bits with global min→0, max→65535. A constant
/// volume maps to 32768.
pub fn quantize_u16(vol: &Volume) -> Vec<u16> {
    let (lo, hi) = vol.min_max();
    if !(hi > lo) {
        return vec![32768; vol.values().len()];
    }
    let span = hi - lo;
    vol.values()
        .iter()
        .map(|&v| (((v - lo) / span) * 65535.0).round().clamp(0.0, 65535.0) as u16)
        .collect()
}

/// Writes one 16-bit PGM per frame and returns the paths.
pub fn render_pgm(vol: &Volume, prefix: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let d = vol.dims();
    let q = quantize_u16(vol);
    let mut paths = Vec::with_capacity(d.frames);
    for t in 0..d.frames {
        let path = frame_path(prefix.as_ref(), t);
        let frame = &q[t * d.frame_len()..(t + 1) * d.frame_len()];
        let mut f = fs::File::create(&path)?;
        f.write_all(&encode_pgm16(d.width, d.height, frame))?;
        paths.push(path);
    }
    Ok(paths)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum OperatorFile {
    Decimation {
        width: usize,
        height: usize,
        frames: usize,
        factor: usize,
        count: usize,
    },
    Mask {
        width: usize,
        height: usize,
        frames: usize,
        count: usize,
    },
}

pub const OPERATOR_FILE: &str = "operator.json";
pub const VALUES_FILE: &str = "values.dsrv";
pub const MASK_FILE: &str = "mask.dsrv";

/// Writes `operator.json`, `values.dsrv` (an `M x 1 x 1` volume) and, for
/// masks, `mask.dsrv` (0/1 per voxel) into `dir`.
pub fn write_measurements(m: &Measurements, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let op = m.operator();
    let d = op.dims();
    let header = match op.kind() {
        SamplingKind::Decimation { factor } => OperatorFile::Decimation {
            width: d.width,
            height: d.height,
            frames: d.frames,
            factor: *factor,
            count: op.len(),
        },
        SamplingKind::Mask(mask) => {
            let flags = mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            write_volume(&Volume::new(d, flags)?, dir.join(MASK_FILE))?;
            OperatorFile::Mask {
                width: d.width,
                height: d.height,
                frames: d.frames,
                count: op.len(),
            }
        }
    };
    fs::write(
        dir.join(OPERATOR_FILE),
        serde_json::to_string_pretty(&header).unwrap() + "\n",
    )?;
    let values = Volume::new(FrameDims::new(m.len().max(1), 1, 1)?, {
        let mut v = m.values().to_vec();
        if v.is_empty() {
            v.push(0.0);
        }
        v
    })?;
    write_volume(&values, dir.join(VALUES_FILE))
}

pub fn read_measurements(dir: impl AsRef<Path>) -> Result<Measurements> {
    let dir = dir.as_ref();
    let text = fs::read_to_string(dir.join(OPERATOR_FILE))?;
    let header: OperatorFile =
        serde_json::from_str(&text).map_err(|e| DsrError::data(format!("{OPERATOR_FILE}: {e}")))?;
    let (op, count) = match header {
        OperatorFile::Decimation {
            width,
            height,
            frames,
            factor,
            count,
        } => (
            SamplingOperator::decimation(FrameDims::new(width, height, frames)?, factor)?,
            count,
        ),
        OperatorFile::Mask {
            width,
            height,
            frames,
            count,
        } => {
            let dims = FrameDims::new(width, height, frames)?;
            let flags = read_volume(dir.join(MASK_FILE))?;
            flags.ensure_dims(dims, "mask")?;
            (
                SamplingOperator::mask(dims, flags.values().iter().map(|&v| v != 0.0).collect())?,
                count,
            )
        }
    };
    if op.len() != count {
        return Err(DsrError::data(format!(
            "operator selects {} voxels, header says {count}",
            op.len()
        )));
    }
    let values = read_volume(dir.join(VALUES_FILE))?;
    let v = values.values();
    if v.len() != count && !(count == 0 && v.len() == 1) {
        return Err(DsrError::data(format!(
            "{} values for {count} measurements",
            v.len()
        )));
    }
    Measurements::new(op, v[..count].to_vec())
}
