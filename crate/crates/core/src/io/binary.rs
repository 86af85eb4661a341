//! Little-endian binary containers: TVF (raw counts), FVF (feature frames)
//! and SNW (named weight tensors plus an architecture descriptor).
//!
//! TVF and FVF share a 40-byte header: magic, width, height and frame count
//! as `u32`, fps as `f64`, bits per pixel as `u16`, then 14 zero bytes.
//! FVF has no field for the start time, so clips read back start at 0 s.

use std::collections::HashSet;
use std::path::Path;

use crate::emission::{FeatureClip, ThermalClip};
use crate::error::{Error, Result};
use crate::neural::{ArchDescriptor, Model, Tensor};
use crate::stress::{StressArch, StressModel};

pub const TVF_MAGIC: [u8; 4] = *b"TVF1";
pub const FVF_MAGIC: [u8; 4] = *b"FVF1";
pub const SNW_MAGIC: [u8; 4] = *b"SNW1";
pub const HEADER_LEN: usize = 40;

/// Decoded video header.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VideoHeader {
    pub magic: [u8; 4],
    pub width: u32,
    pub height: u32,
    pub num_frames: u32,
    pub fps: f64,
    pub bits_per_pixel: u16,
}

impl VideoHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&self.magic);
        b[4..8].copy_from_slice(&self.width.to_le_bytes());
        b[8..12].copy_from_slice(&self.height.to_le_bytes());
        b[12..16].copy_from_slice(&self.num_frames.to_le_bytes());
        b[16..24].copy_from_slice(&self.fps.to_le_bytes());
        b[24..26].copy_from_slice(&self.bits_per_pixel.to_le_bytes());
        b
    }

    /// Parses and checks the header against `magic` and `bits`, returning
    /// it with the payload length it declares.
    pub fn parse(bytes: &[u8], magic: [u8; 4], bits: u16) -> Result<(VideoHeader, usize)> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::TruncatedFile { expected: HEADER_LEN as u64, found: bytes.len() as u64 });
        }
        let found: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
        if found != magic {
            return Err(Error::BadMagic { expected: magic, found });
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        let h = VideoHeader {
            magic,
            width: u32_at(4),
            height: u32_at(8),
            num_frames: u32_at(12),
            fps: f64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")),
            bits_per_pixel: u16::from_le_bytes(bytes[24..26].try_into().expect("2 bytes")),
        };
        if h.bits_per_pixel != bits {
            return Err(Error::Parse(format!("bits_per_pixel {} (expected {bits})", h.bits_per_pixel)));
        }
        if bytes[26..HEADER_LEN].iter().any(|b| *b != 0) {
            return Err(Error::Parse("reserved header bytes are not zero".into()));
        }
        let payload = (h.width as usize)
            .checked_mul(h.height as usize)
            .and_then(|v| v.checked_mul(h.num_frames as usize))
            .and_then(|v| v.checked_mul(bits as usize / 8))
            .filter(|v| v.checked_add(HEADER_LEN).is_some())
            .ok_or(Error::DimensionOverflow)?;
        let expected = HEADER_LEN + payload;
        if bytes.len() < expected {
            return Err(Error::TruncatedFile { expected: expected as u64, found: bytes.len() as u64 });
        }
        if bytes.len() > expected {
            return Err(Error::Parse(format!("{} trailing bytes after payload", bytes.len() - expected)));
        }
        Ok((h, payload))
    }
}

fn u32_dim(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::DimensionOverflow)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_tvf(clip: &ThermalClip) -> Result<Vec<u8>> {
    let header = VideoHeader {
        magic: TVF_MAGIC,
        width: u32_dim(clip.width())?,
        height: u32_dim(clip.height())?,
        num_frames: u32_dim(clip.num_frames())?,
        fps: clip.fps(),
        bits_per_pixel: 16,
    };
    let mut out = Vec::with_capacity(HEADER_LEN + 2 * clip.data().len());
    out.extend_from_slice(&header.to_bytes());
    for v in clip.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_tvf(bytes: &[u8]) -> Result<ThermalClip> {
    let (h, _) = VideoHeader::parse(bytes, TVF_MAGIC, 16)?;
    let data = bytes[HEADER_LEN..].chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
    ThermalClip::new(h.width as usize, h.height as usize, h.fps, 0.0, data)
}

pub fn write_tvf(path: &Path, clip: &ThermalClip) -> Result<()> {
    write_bytes(path, &encode_tvf(clip)?)
}

pub fn read_tvf(path: &Path) -> Result<ThermalClip> {
    decode_tvf(&read_bytes(path)?)
}

/// Values are stored as `f32`, rounded to nearest.
pub fn encode_fvf(clip: &FeatureClip) -> Result<Vec<u8>> {
    let header = VideoHeader {
        magic: FVF_MAGIC,
        width: u32_dim(clip.width())?,
        height: u32_dim(clip.height())?,
        num_frames: u32_dim(clip.num_frames())?,
        fps: clip.fps(),
        bits_per_pixel: 32,
    };
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * clip.data().len());
    out.extend_from_slice(&header.to_bytes());
    for v in clip.data() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_fvf(bytes: &[u8]) -> Result<FeatureClip> {
    let (h, _) = VideoHeader::parse(bytes, FVF_MAGIC, 32)?;
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    FeatureClip::new(h.width as usize, h.height as usize, h.fps, 0.0, data)
}

pub fn write_fvf(path: &Path, clip: &FeatureClip) -> Result<()> {
    write_bytes(path, &encode_fvf(clip)?)
}

pub fn read_fvf(path: &Path) -> Result<FeatureClip> {
    decode_fvf(&read_bytes(path)?)
}

/// Contents of an SNW file.
#[derive(Debug, Clone, PartialEq)]
pub struct SnwFile {
    pub tensors: Vec<(String, Tensor)>,
    /// `key=value` lines describing the architecture.
    pub descriptor: String,
}

impl SnwFile {
    /// Value of `kind=` in the descriptor.
    pub fn kind(&self) -> Option<&str> {
        self.descriptor.lines().find_map(|l| l.trim().strip_prefix("kind=")).map(str::trim)
    }
}

fn check_unique<'a>(names: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(Error::DuplicateTensorName(n.to_string()));
        }
    }
    Ok(())
}

/// Tensor values are rounded to `f32`.
pub fn encode_snw(tensors: &[(String, Tensor)], descriptor: &str) -> Result<Vec<u8>> {
    check_unique(tensors.iter().map(|(n, _)| n.as_str()))?;
    let mut out = Vec::new();
    out.extend_from_slice(&SNW_MAGIC);
    out.extend_from_slice(&u32_dim(tensors.len())?.to_le_bytes());
    for (name, t) in tensors {
        if !name.is_ascii() {
            return Err(Error::InvalidArgument(format!("tensor name {name:?} is not ASCII")));
        }
        let len = u16::try_from(name.len()).map_err(|_| Error::DimensionOverflow)?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let rank = u8::try_from(t.shape().len()).map_err(|_| Error::DimensionOverflow)?;
        out.push(rank);
        for d in t.shape() {
            out.extend_from_slice(&u32_dim(*d)?.to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    if !descriptor.is_ascii() {
        return Err(Error::InvalidArgument("descriptor is not ASCII".into()));
    }
    out.extend_from_slice(&u32_dim(descriptor.len())?.to_le_bytes());
    out.extend_from_slice(descriptor.as_bytes());
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::DimensionOverflow)?;
        if end > self.bytes.len() {
            return Err(Error::TruncatedFile { expected: end as u64, found: self.bytes.len() as u64 });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn ascii(&mut self, n: usize) -> Result<String> {
        let b = self.take(n)?;
        if !b.is_ascii() {
            return Err(Error::Parse("non-ASCII text in SNW file".into()));
        }
        Ok(String::from_utf8(b.to_vec()).expect("ASCII is UTF-8"))
    }
}

pub fn decode_snw(bytes: &[u8]) -> Result<SnwFile> {
    let mut c = Cursor { bytes, pos: 0 };
    let found: [u8; 4] = c.take(4)?.try_into().expect("4 bytes");
    if found != SNW_MAGIC {
        return Err(Error::BadMagic { expected: SNW_MAGIC, found });
    }
    let count = c.u32()? as usize;
    let mut tensors: Vec<(String, Tensor)> = Vec::new();
    for _ in 0..count {
        let name_len = c.u16()? as usize;
        let name = c.ascii(name_len)?;
        if tensors.iter().any(|(n, _)| *n == name) {
            return Err(Error::DuplicateTensorName(name));
        }
        let rank = c.u8()? as usize;
        let shape = (0..rank).map(|_| c.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n = shape.iter().try_fold(1usize, |a, d| a.checked_mul(*d)).ok_or(Error::DimensionOverflow)?;
        let raw = c.take(n.checked_mul(4).ok_or(Error::DimensionOverflow)?)?;
        let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64).collect();
        tensors.push((name, Tensor::new(shape, data)?));
    }
    let desc_len = c.u32()? as usize;
    let descriptor = c.ascii(desc_len)?;
    if c.pos != bytes.len() {
        return Err(Error::Parse(format!("{} trailing bytes after descriptor", bytes.len() - c.pos)));
    }
    Ok(SnwFile { tensors, descriptor })
}

pub fn write_snw(path: &Path, tensors: &[(String, Tensor)], descriptor: &str) -> Result<()> {
    write_bytes(path, &encode_snw(tensors, descriptor)?)
}

pub fn read_snw(path: &Path) -> Result<SnwFile> {
    decode_snw(&read_bytes(path)?)
}

/// Either model kind stored in an SNW file.
#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    Isti(Model),
    Stress(StressModel),
}

impl SnwFile {
    pub fn into_model(self) -> Result<SavedModel> {
        match self.kind() {
            Some("isti") => {
                let arch = ArchDescriptor::from_text(&self.descriptor)
                    .map_err(|e| Error::ShapeMismatchWithDescriptor(e.to_string()))?;
                Ok(SavedModel::Isti(Model::from_params(arch, self.tensors)?))
            }
            Some("stress") => {
                let arch = StressArch::from_text(&self.descriptor)
                    .map_err(|e| Error::ShapeMismatchWithDescriptor(e.to_string()))?;
                Ok(SavedModel::Stress(StressModel::from_params(arch, self.tensors)?))
            }
            other => Err(Error::ShapeMismatchWithDescriptor(format!("unknown model kind {other:?}"))),
        }
    }
}

pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    write_snw(path, model.params(), &model.arch().to_text())
}

pub fn load_model(path: &Path) -> Result<Model> {
    match read_snw(path)?.into_model()? {
        SavedModel::Isti(m) => Ok(m),
        SavedModel::Stress(_) => Err(Error::ShapeMismatchWithDescriptor(format!(
            "{} holds a stress classifier, not an ISTI model",
            path.display()
        ))),
    }
}

pub fn save_stress_model(path: &Path, model: &StressModel) -> Result<()> {
    write_snw(path, model.params(), &model.arch().to_text())
}

pub fn load_stress_model(path: &Path) -> Result<StressModel> {
    match read_snw(path)?.into_model()? {
        SavedModel::Stress(m) => Ok(m),
        SavedModel::Isti(_) => Err(Error::ShapeMismatchWithDescriptor(format!(
            "{} holds an ISTI model, not a stress classifier",
            path.display()
        ))),
    }
}
