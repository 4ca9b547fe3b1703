//! Binary artifact formats: the trajectory dataset container, training
//! checkpoints, and the JSON sidecar that records provenance.
//!
//! Dataset container layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//!      0     4  magic "SFD1"
//!      4     2  version (currently 1)
//!      6     2  flags (bit 0: mask section present)
//!      8     4  n_traj
//!     12     4  n_frames
//!     16     4  height
//!     20     4  width
//!     24     8  FNV-1a 64 checksum of every byte after the header
//!     32     .  payload: f32 values in (traj, frame, row, col) order
//!      .     .  mask section (optional): n_pairs u32, then per pair an
//!               instance id u32 and two bit-packed planes (input, target)
//! ```
//!
//! Bit-packed planes store pixel p in byte p/8, bit p%8 (LSB first), and
//! are padded to whole bytes. Encoding is pure byte-level; callers own
//! all filesystem access.

use crate::error::{Error, Result};
use crate::masks::{Mask, MaskPair};
use crate::sim::Dataset;
use crate::train::NormStats;

pub const DATASET_MAGIC: [u8; 4] = *b"SFD1";
pub const DATASET_VERSION: u16 = 1;
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SFC1";
pub const CHECKPOINT_VERSION: u16 = 1;

const FLAG_MASKS: u16 = 1;
const DATASET_HEADER_LEN: usize = 32;
const CHECKPOINT_HEADER_LEN: usize = 32;

/// FNV-1a 64-bit hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// One stored mask pair together with the instance it belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskRecord {
    pub instance_id: u32,
    pub pair: MaskPair,
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn read_u64(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
}

fn plane_bytes(n_px: usize) -> usize {
    n_px.div_ceil(8)
}

fn pack_mask(out: &mut Vec<u8>, mask: &Mask) {
    let bits = mask.bits();
    let start = out.len();
    out.resize(start + plane_bytes(bits.len()), 0);
    for (p, &on) in bits.iter().enumerate() {
        if on {
            out[start + p / 8] |= 1 << (p % 8);
        }
    }
}

fn unpack_mask(bytes: &[u8], n: usize) -> Mask {
    let indices: Vec<usize> = (0..n * n)
        .filter(|&p| bytes[p / 8] & (1 << (p % 8)) != 0)
        .collect();
    Mask::from_indices(n, &indices)
}

/// Serializes a dataset, with any mask pairs, to the container format.
pub fn encode_dataset(ds: &Dataset, masks: &[MaskRecord]) -> Result<Vec<u8>> {
    if ds.n_traj > u32::MAX as usize
        || ds.n_frames > u32::MAX as usize
        || ds.h > u32::MAX as usize
        || ds.w > u32::MAX as usize
        || masks.len() > u32::MAX as usize
    {
        return Err(Error::config("container dimension exceeds u32"));
    }
    if !masks.is_empty() && ds.h != ds.w {
        return Err(Error::config("mask section requires a square grid"));
    }
    let mut body = Vec::with_capacity(ds.data.len() * 4);
    for &v in &ds.data {
        body.extend_from_slice(&v.to_le_bytes());
    }
    let flags = if masks.is_empty() { 0 } else { FLAG_MASKS };
    if !masks.is_empty() {
        push_u32(&mut body, masks.len() as u32);
        for rec in masks {
            if rec.pair.input.n() != ds.h || rec.pair.target.n() != ds.h {
                return Err(Error::config("mask grid does not match the dataset grid"));
            }
            push_u32(&mut body, rec.instance_id);
            pack_mask(&mut body, &rec.pair.input);
            pack_mask(&mut body, &rec.pair.target);
        }
    }
    let mut out = Vec::with_capacity(DATASET_HEADER_LEN + body.len());
    out.extend_from_slice(&DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&flags.to_le_bytes());
    push_u32(&mut out, ds.n_traj as u32);
    push_u32(&mut out, ds.n_frames as u32);
    push_u32(&mut out, ds.h as u32);
    push_u32(&mut out, ds.w as u32);
    out.extend_from_slice(&fnv1a64(&body).to_le_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

fn check_dataset_header(bytes: &[u8]) -> Result<()> {
    if bytes.len() < DATASET_HEADER_LEN {
        return Err(Error::data("container truncated: shorter than the header"));
    }
    if bytes[0..4] != DATASET_MAGIC {
        return Err(Error::data("not a dataset container: bad magic"));
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != DATASET_VERSION {
        return Err(Error::data(format!(
            "unsupported container version {version} (expected {DATASET_VERSION})"
        )));
    }
    Ok(())
}

/// The checksum a container declares for its body, after validating the
/// header. Lets provenance checks compare artifacts without a full
/// decode.
pub fn container_checksum(bytes: &[u8]) -> Result<u64> {
    check_dataset_header(bytes)?;
    Ok(read_u64(bytes, 24))
}

/// Parses and verifies a container produced by [`encode_dataset`].
pub fn decode_dataset(bytes: &[u8]) -> Result<(Dataset, Vec<MaskRecord>)> {
    check_dataset_header(bytes)?;
    let flags = u16::from_le_bytes(bytes[6..8].try_into().unwrap());
    let n_traj = read_u32(bytes, 8) as usize;
    let n_frames = read_u32(bytes, 12) as usize;
    let h = read_u32(bytes, 16) as usize;
    let w = read_u32(bytes, 20) as usize;
    let declared = read_u64(bytes, 24);
    let body = &bytes[DATASET_HEADER_LEN..];
    let payload_len = n_traj
        .checked_mul(n_frames)
        .and_then(|v| v.checked_mul(h))
        .and_then(|v| v.checked_mul(w))
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::data("container header overflows the payload size"))?;
    if body.len() < payload_len {
        return Err(Error::data(format!(
            "container truncated: body has {} bytes, payload needs {}",
            body.len(),
            payload_len
        )));
    }
    let actual = fnv1a64(body);
    if actual != declared {
        return Err(Error::data(format!(
            "container checksum mismatch: header {declared:#018x}, body {actual:#018x}"
        )));
    }
    let mut data = Vec::with_capacity(payload_len / 4);
    for chunk in body[..payload_len].chunks_exact(4) {
        data.push(f32::from_le_bytes(chunk.try_into().unwrap()));
    }
    let ds = Dataset::new(n_traj, n_frames, h, w, data)?;
    let mut rest = &body[payload_len..];
    let mut masks = Vec::new();
    if flags & FLAG_MASKS != 0 {
        if h != w {
            return Err(Error::data("mask section on a non-square grid"));
        }
        if rest.len() < 4 {
            return Err(Error::data("container truncated: missing mask count"));
        }
        let n_pairs = read_u32(rest, 0) as usize;
        rest = &rest[4..];
        let plane = plane_bytes(h * w);
        for _ in 0..n_pairs {
            if rest.len() < 4 + 2 * plane {
                return Err(Error::data("container truncated: incomplete mask pair"));
            }
            let instance_id = read_u32(rest, 0);
            let input = unpack_mask(&rest[4..4 + plane], h);
            let target = unpack_mask(&rest[4 + plane..4 + 2 * plane], h);
            masks.push(MaskRecord {
                instance_id,
                pair: MaskPair { input, target },
            });
            rest = &rest[4 + 2 * plane..];
        }
    }
    if !rest.is_empty() {
        return Err(Error::data(format!(
            "container has {} trailing bytes",
            rest.len()
        )));
    }
    Ok((ds, masks))
}

/// Provenance record written next to every binary artifact. Feeding
/// `config` back to the producing command reproduces the artifact
/// (and hence `checksum`) exactly.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Sidecar {
    /// Command that produced the artifact.
    pub command: String,
    /// Full run configuration snapshot.
    pub config: serde_json::Value,
    /// Master seed the artifact was generated under.
    pub seed: u64,
    /// Checksum the described container declares.
    pub checksum: u64,
    /// Normalization statistics, once a training run has fixed them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<NormStats>,
    /// Known modeling deviations baked into the artifact.
    #[serde(default)]
    pub deviations: Vec<String>,
}

/// Restorable training state: the step counter and the flat parameter
/// vector. `meta` carries the config snapshot for validation and
/// provenance; optimizer moments are deliberately not persisted.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub meta: serde_json::Value,
    pub params: Vec<f32>,
}

/// Checkpoint layout: magic, version, pad, meta length u32, param count
/// u32, step u64, checksum u64 (over meta + params), then the JSON meta
/// bytes and the f32 parameters.
pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let meta =
        serde_json::to_vec(&ckpt.meta).map_err(|e| Error::data(format!("checkpoint meta: {e}")))?;
    if meta.len() > u32::MAX as usize || ckpt.params.len() > u32::MAX as usize {
        return Err(Error::config("checkpoint section exceeds u32"));
    }
    let mut body = Vec::with_capacity(meta.len() + ckpt.params.len() * 4);
    body.extend_from_slice(&meta);
    for &p in &ckpt.params {
        body.extend_from_slice(&p.to_le_bytes());
    }
    let mut out = Vec::with_capacity(CHECKPOINT_HEADER_LEN + body.len());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    push_u32(&mut out, meta.len() as u32);
    push_u32(&mut out, ckpt.params.len() as u32);
    out.extend_from_slice(&ckpt.step.to_le_bytes());
    out.extend_from_slice(&fnv1a64(&body).to_le_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < CHECKPOINT_HEADER_LEN {
        return Err(Error::data("checkpoint truncated: shorter than the header"));
    }
    if bytes[0..4] != CHECKPOINT_MAGIC {
        return Err(Error::data("not a checkpoint: bad magic"));
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::data(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let meta_len = read_u32(bytes, 8) as usize;
    let n_params = read_u32(bytes, 12) as usize;
    let step = read_u64(bytes, 16);
    let declared = read_u64(bytes, 24);
    let body = &bytes[CHECKPOINT_HEADER_LEN..];
    let expect = meta_len
        .checked_add(n_params.checked_mul(4).ok_or_else(|| {
            Error::data("checkpoint header overflows the parameter size")
        })?)
        .ok_or_else(|| Error::data("checkpoint header overflows the body size"))?;
    if body.len() != expect {
        return Err(Error::data(format!(
            "checkpoint truncated: body has {} bytes, header declares {}",
            body.len(),
            expect
        )));
    }
    let actual = fnv1a64(body);
    if actual != declared {
        return Err(Error::data(format!(
            "checkpoint checksum mismatch: header {declared:#018x}, body {actual:#018x}"
        )));
    }
    let meta = serde_json::from_slice(&body[..meta_len])
        .map_err(|e| Error::data(format!("checkpoint meta: {e}")))?;
    let params = body[meta_len..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Checkpoint { step, meta, params })
}
