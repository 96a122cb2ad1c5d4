//! Little-endian binary files: datasets (`PDGD`) and model checkpoints
//! (`PDGM`). Both end with a CRC32 of every preceding byte.

use std::path::Path;

use heliogen_core::codec::{Dataset, DatasetRecord, DepthMap, Split, IMAGE_SIZE, PIXELS};
use heliogen_core::nn::{Tensor, VaeModel, FC_WIDTH, LATENT_DIM};

use crate::error::{Error, FormatError, Result, Section};

pub const DATASET_MAGIC: [u8; 4] = *b"PDGD";
pub const DATASET_VERSION: u32 = 1;
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"PDGM";
pub const CHECKPOINT_VERSION: u32 = 1;

const DATASET_HEADER: usize = 4 + 4 + 4 + 2 + 2 + 4;
const RECORD_SIZE: usize = 4 + 25 * 4 + PIXELS * 4 + 4 + 4 + 1;

type FormatResult<T> = std::result::Result<T, FormatError>;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize, section: Section) -> FormatResult<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(FormatError::Truncated(section));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, section: Section) -> FormatResult<[u8; N]> {
        Ok(self.take(N, section)?.try_into().expect("exact length"))
    }

    fn u8(&mut self, s: Section) -> FormatResult<u8> {
        Ok(self.array::<1>(s)?[0])
    }
    fn u16(&mut self, s: Section) -> FormatResult<u16> {
        Ok(u16::from_le_bytes(self.array(s)?))
    }
    fn u32(&mut self, s: Section) -> FormatResult<u32> {
        Ok(u32::from_le_bytes(self.array(s)?))
    }
    fn u64(&mut self, s: Section) -> FormatResult<u64> {
        Ok(u64::from_le_bytes(self.array(s)?))
    }
    fn f32(&mut self, s: Section) -> FormatResult<f32> {
        Ok(f32::from_le_bytes(self.array(s)?))
    }
    fn f64(&mut self, s: Section) -> FormatResult<f64> {
        Ok(f64::from_le_bytes(self.array(s)?))
    }
    fn f32s(&mut self, n: usize, s: Section) -> FormatResult<Vec<f32>> {
        Ok(self
            .take(n * 4, s)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

fn check_magic_and_version(
    r: &mut Reader<'_>,
    magic: [u8; 4],
    version: u32,
) -> FormatResult<()> {
    let found: [u8; 4] = r.array(Section::Header)?;
    if found != magic {
        return Err(FormatError::BadMagic {
            expected: magic,
            found,
        });
    }
    let v = r.u32(Section::Header)?;
    if v != version {
        return Err(FormatError::VersionMismatch {
            expected: version,
            found: v,
        });
    }
    Ok(())
}

/// Verifies the trailing checksum of a fully parsed body ending at `body_end`.
fn check_crc(bytes: &[u8], body_end: usize) -> FormatResult<u32> {
    let mut r = Reader::new(bytes);
    r.pos = body_end;
    let stored = r.u32(Section::Checksum)?;
    if r.pos != bytes.len() {
        return Err(FormatError::Invalid(format!(
            "{} trailing bytes after the checksum",
            bytes.len() - r.pos
        )));
    }
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(FormatError::ChecksumMismatch { stored, computed });
    }
    Ok(stored)
}

fn push_crc(out: &mut Vec<u8>) {
    let crc = crc32fast::hash(out);
    out.extend_from_slice(&crc.to_le_bytes());
}

pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(DATASET_HEADER + ds.records.len() * RECORD_SIZE + 4);
    out.extend_from_slice(&DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&(ds.records.len() as u32).to_le_bytes());
    out.extend_from_slice(&(IMAGE_SIZE as u16).to_le_bytes());
    out.extend_from_slice(&(IMAGE_SIZE as u16).to_le_bytes());
    out.extend_from_slice(&ds.world_extent.to_le_bytes());
    for r in &ds.records {
        out.extend_from_slice(&r.bc_id.to_le_bytes());
        for v in r.heightmap {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &r.depth.pixels {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&r.avg_radiation.to_le_bytes());
        out.extend_from_slice(&r.volume.to_le_bytes());
        out.push(r.split.flag());
    }
    push_crc(&mut out);
    out
}

pub fn decode_dataset(bytes: &[u8]) -> FormatResult<Dataset> {
    let mut r = Reader::new(bytes);
    check_magic_and_version(&mut r, DATASET_MAGIC, DATASET_VERSION)?;
    let count = r.u32(Section::Header)?;
    let width = r.u16(Section::Header)?;
    let height = r.u16(Section::Header)?;
    let world_extent = r.f32(Section::Header)?;
    if (width as usize, height as usize) != (IMAGE_SIZE, IMAGE_SIZE) {
        return Err(FormatError::Invalid(format!(
            "image size {width}×{height}, expected {IMAGE_SIZE}×{IMAGE_SIZE}"
        )));
    }
    let mut raw = Vec::with_capacity(count as usize);
    for i in 0..count {
        let s = Section::Record(i);
        let bc_id = r.u32(s)?;
        let hm: [f32; 25] = r.f32s(25, s)?.try_into().expect("25 values");
        let pixels = r.f32s(PIXELS, s)?;
        let avg_radiation = r.f32(s)?;
        let volume = r.f32(s)?;
        let flag = r.u8(s)?;
        raw.push((bc_id, hm, pixels, avg_radiation, volume, flag));
    }
    check_crc(bytes, r.pos)?;

    let mut ds = Dataset::new(world_extent);
    for (i, (bc_id, heightmap, pixels, avg_radiation, volume, flag)) in raw.into_iter().enumerate() {
        let split = Split::from_flag(flag)
            .ok_or_else(|| FormatError::Invalid(format!("record {i}: split flag {flag}")))?;
        let depth = DepthMap::new(pixels)
            .map_err(|e| FormatError::Invalid(format!("record {i}: {e}")))?;
        ds.records.push(DatasetRecord {
            bc_id,
            heightmap,
            depth,
            avg_radiation,
            volume,
            split,
        });
    }
    Ok(ds)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn with_path<T>(path: &Path, r: FormatResult<T>) -> Result<T> {
    r.map_err(|source| Error::Format {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    write_file(path, &encode_dataset(ds))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let bytes = read_file(path)?;
    with_path(path, decode_dataset(&bytes))
}

/// Training provenance stored next to the weights.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CheckpointMeta {
    /// Epochs completed.
    pub epoch: u32,
    pub seed: u64,
    /// CRC32 of the training configuration as JSON.
    pub config_hash: u32,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub model: VaeModel<f32>,
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(LATENT_DIM as u16).to_le_bytes());
    out.extend_from_slice(&(FC_WIDTH as u16).to_le_bytes());
    out.extend_from_slice(&(IMAGE_SIZE as u16).to_le_bytes());
    let m = &ck.meta;
    out.extend_from_slice(&m.epoch.to_le_bytes());
    out.extend_from_slice(&m.seed.to_le_bytes());
    out.extend_from_slice(&m.config_hash.to_le_bytes());
    out.extend_from_slice(&m.train_loss.to_le_bytes());
    out.extend_from_slice(&m.val_loss.to_le_bytes());
    let params = ck.model.parameters();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (t, name) in params.iter().zip(VaeModel::<f32>::PARAM_NAMES) {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for t in params {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    push_crc(&mut out);
    out
}

/// Parses a checkpoint and returns it with its stored CRC.
pub fn decode_checkpoint(bytes: &[u8]) -> FormatResult<(Checkpoint, u32)> {
    let mut r = Reader::new(bytes);
    let h = Section::Header;
    check_magic_and_version(&mut r, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
    let dims = (r.u16(h)? as usize, r.u16(h)? as usize, r.u16(h)? as usize);
    let meta = CheckpointMeta {
        epoch: r.u32(h)?,
        seed: r.u64(h)?,
        config_hash: r.u32(h)?,
        train_loss: r.f64(h)?,
        val_loss: r.f64(h)?,
    };
    let count = r.u32(h)?;
    let mut table = Vec::new();
    for i in 0..count {
        let s = Section::Tensor(i);
        let len = r.u16(s)? as usize;
        let name = String::from_utf8(r.take(len, s)?.to_vec())
            .map_err(|_| FormatError::Invalid(format!("tensor {i}: name is not UTF-8")))?;
        let rank = r.u8(s)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32(s)? as usize);
        }
        table.push((name, shape));
    }
    let mut tensors = Vec::with_capacity(table.len());
    for (i, (_, shape)) in table.iter().enumerate() {
        let n = shape.iter().product();
        let data = r.f32s(n, Section::Tensor(i as u32))?;
        tensors.push(Tensor {
            shape: shape.clone(),
            data,
        });
    }
    let crc = check_crc(bytes, r.pos)?;

    if dims != (LATENT_DIM, FC_WIDTH, IMAGE_SIZE) {
        return Err(FormatError::Invalid(format!(
            "architecture {dims:?}, expected ({LATENT_DIM}, {FC_WIDTH}, {IMAGE_SIZE})"
        )));
    }
    let names: Vec<&str> = table.iter().map(|(n, _)| n.as_str()).collect();
    if names != VaeModel::<f32>::PARAM_NAMES {
        return Err(FormatError::Invalid(format!("unexpected tensor table {names:?}")));
    }
    let model =
        VaeModel::from_parameters(tensors).map_err(|e| FormatError::Invalid(e.to_string()))?;
    for t in model.parameters() {
        t.check_finite("checkpoint")
            .map_err(|e| FormatError::Invalid(e.to_string()))?;
    }
    Ok((Checkpoint { meta, model }, crc))
}

pub fn write_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    write_file(path, &encode_checkpoint(ck))
}

pub fn read_checkpoint(path: &Path) -> Result<(Checkpoint, u32)> {
    let bytes = read_file(path)?;
    with_path(path, decode_checkpoint(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_sizes() {
        let ds = Dataset::new(32.0);
        assert_eq!(encode_dataset(&ds).len(), DATASET_HEADER + 4);
        assert_eq!(RECORD_SIZE, 1137);
    }

    #[test]
    fn empty_input_is_truncated_header() {
        assert!(matches!(
            decode_dataset(&[]),
            Err(FormatError::Truncated(Section::Header))
        ));
        assert!(matches!(
            decode_checkpoint(b"PDG"),
            Err(FormatError::Truncated(Section::Header))
        ));
    }
}
