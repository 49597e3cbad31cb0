//! On-disk formats.
//!
//! Four little-endian binary containers, each opening with a 4-byte magic:
//!
//! * **`IDM1` motion** — header: magic, `u16` version (1), `u32` frame
//!   count, `u32` joint count (must be 55), `f32` fps; then per frame the
//!   root position (3 × `f32`) and 55 axis-angle joint rotations
//!   (165 × `f32`), 672 bytes per frame.
//! * **`IDR1` representation** — header: magic, `u32` frame count, `u32`
//!   channel count (must be 4981), `f32` fps; then row-major `f32` data.
//! * **`IDF1` music features** — header: magic, `u32` frame count, `u32`
//!   channel count (must be 35), `f32` fps; then row-major `f32` data.
//! * **`IDC1` checkpoint** — magic, `u32` schema (1), a length-prefixed
//!   JSON configuration block, `u32` tensor count, then per tensor a
//!   length-prefixed UTF-8 name, `u32` rank, `u32` dimensions, and the
//!   `f32` element data in row-major order.
//!
//! Readers validate magic bytes, version/schema, declared shapes, and
//! finiteness, and reject both truncated files (reporting the byte offset
//! where data ran out) and trailing bytes after the expected end. Values
//! are stored as `f32`; in-memory `f64` values produced by a reader
//! round-trip through their file bit-for-bit.
//!
//! Music features can also travel as CSV (one header row naming the 35
//! columns, then one row per frame); CSV carries no frame rate, so the
//! reader takes one.

use byteorder::{LittleEndian, WriteBytesExt};
use ndarray::Array2;
use nalgebra::Vector3;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::body::{PoseFrame, JOINT_COUNT};
use crate::data::{MotionSequence, Role};
use crate::error::{Error, Result};
use crate::eval::music::{MusicFeatures, MUSIC_DIM};
use crate::rep::{RepSequence, CHANNELS};

pub const MOTION_MAGIC: [u8; 4] = *b"IDM1";
pub const REP_MAGIC: [u8; 4] = *b"IDR1";
pub const MUSIC_MAGIC: [u8; 4] = *b"IDF1";
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"IDC1";
pub const MOTION_VERSION: u16 = 1;
pub const CHECKPOINT_SCHEMA: u32 = 1;

/// A named n-dimensional `f64` array inside a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let name = name.into();
        let expect: usize = dims.iter().product();
        if data.len() != expect {
            return Err(Error::data(format!(
                "tensor {name}: dims {dims:?} imply {expect} elements, got {}",
                data.len()
            )));
        }
        Ok(NamedTensor { name, dims, data })
    }
}

/// Model weights plus the JSON configuration they were trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    /// Look up a tensor by name.
    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

// ---------------------------------------------------------------------------
// Byte-level scanning
// ---------------------------------------------------------------------------

/// Sequential parser over a fully loaded file that reports the exact byte
/// offset when data runs out and rejects unread trailing bytes.
struct Scanner<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl<'a> Scanner<'a> {
    fn new(buf: &'a [u8], path: &'a str) -> Self {
        Scanner { buf, pos: 0, path }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::data(format!(
                "{}: truncated at byte {} (needed {} more bytes, {} available)",
                self.path,
                self.pos,
                n,
                self.buf.len() - self.pos
            )));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn magic(&mut self, expect: &[u8; 4], what: &str) -> Result<()> {
        let got = self.take(4)?;
        if got != expect {
            return Err(Error::data(format!(
                "{}: bad magic {:?}, expected {:?} ({what} file)",
                self.path,
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(expect),
            )));
        }
        Ok(())
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32(&mut self) -> Result<f32> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Read `n` consecutive `f32`s as `f64`s, requiring every value finite.
    fn f32_block(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let start = self.pos;
        let bytes = self.take(4 * n)?;
        let mut out = Vec::with_capacity(n);
        for (i, chunk) in bytes.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            if !v.is_finite() {
                return Err(Error::data(format!(
                    "{}: non-finite {what} value at byte {}",
                    self.path,
                    start + 4 * i
                )));
            }
            out.push(v as f64);
        }
        Ok(out)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::data(format!(
                "{}: {} trailing bytes after expected end at byte {}",
                self.path,
                self.buf.len() - self.pos,
                self.pos
            )));
        }
        Ok(())
    }
}

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

fn load(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path_str(path), e))
}

fn store(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path_str(path), e))?;
    file.write_all(bytes)
        .and_then(|_| file.flush())
        .map_err(|e| Error::io(path_str(path), e))
}

fn checked_fps(fps: f32, path: &str) -> Result<f64> {
    if !fps.is_finite() || fps <= 0.0 {
        return Err(Error::data(format!("{path}: fps must be positive, got {fps}")));
    }
    Ok(fps as f64)
}

// ---------------------------------------------------------------------------
// Motion (IDM1)
// ---------------------------------------------------------------------------

/// Write skeletal motion (root position + axis-angle joint rotations).
pub fn write_motion(path: &Path, motion: &MotionSequence) -> Result<()> {
    let mut out = Vec::with_capacity(18 + motion.len() * 672);
    out.extend_from_slice(&MOTION_MAGIC);
    out.write_u16::<LittleEndian>(MOTION_VERSION).unwrap();
    out.write_u32::<LittleEndian>(motion.len() as u32).unwrap();
    out.write_u32::<LittleEndian>(JOINT_COUNT as u32).unwrap();
    out.write_f32::<LittleEndian>(motion.fps as f32).unwrap();
    for frame in &motion.frames {
        for c in frame.root.iter() {
            out.write_f32::<LittleEndian>(*c as f32).unwrap();
        }
        for rot in &frame.rotations {
            for c in rot.iter() {
                out.write_f32::<LittleEndian>(*c as f32).unwrap();
            }
        }
    }
    store(path, &out)
}

/// Read skeletal motion. The file does not record which dancer it belongs
/// to, so the caller assigns the role.
pub fn read_motion(path: &Path, role: Role) -> Result<MotionSequence> {
    let buf = load(path)?;
    let ps = path_str(path);
    let mut s = Scanner::new(&buf, &ps);
    s.magic(&MOTION_MAGIC, "motion")?;
    let version = s.u16()?;
    if version != MOTION_VERSION {
        return Err(Error::data(format!(
            "{ps}: unsupported motion format version {version} (expected {MOTION_VERSION})"
        )));
    }
    let frames = s.u32()? as usize;
    let joints = s.u32()? as usize;
    if joints != JOINT_COUNT {
        return Err(Error::data(format!(
            "{ps}: joint count {joints}, expected {JOINT_COUNT}"
        )));
    }
    let fps = checked_fps(s.f32()?, &ps)?;
    let mut seq = Vec::with_capacity(frames);
    for _ in 0..frames {
        let vals = s.f32_block(3 + 3 * JOINT_COUNT, "motion")?;
        let root = Vector3::new(vals[0], vals[1], vals[2]);
        let rotations = (0..JOINT_COUNT)
            .map(|j| Vector3::new(vals[3 + 3 * j], vals[4 + 3 * j], vals[5 + 3 * j]))
            .collect();
        seq.push(PoseFrame::new(root, rotations));
    }
    s.finish()?;
    MotionSequence::new(fps, role, seq)
}

// ---------------------------------------------------------------------------
// Representation (IDR1)
// ---------------------------------------------------------------------------

/// Write an encoded motion representation.
pub fn write_rep(path: &Path, rep: &RepSequence) -> Result<()> {
    let mut out = Vec::with_capacity(16 + rep.len() * CHANNELS * 4);
    out.extend_from_slice(&REP_MAGIC);
    out.write_u32::<LittleEndian>(rep.len() as u32).unwrap();
    out.write_u32::<LittleEndian>(CHANNELS as u32).unwrap();
    out.write_f32::<LittleEndian>(rep.fps as f32).unwrap();
    for v in rep.data.iter() {
        out.write_f32::<LittleEndian>(*v as f32).unwrap();
    }
    store(path, &out)
}

/// Read an encoded motion representation.
pub fn read_rep(path: &Path) -> Result<RepSequence> {
    let buf = load(path)?;
    let ps = path_str(path);
    let mut s = Scanner::new(&buf, &ps);
    s.magic(&REP_MAGIC, "representation")?;
    let frames = s.u32()? as usize;
    let channels = s.u32()? as usize;
    if channels != CHANNELS {
        return Err(Error::data(format!(
            "{ps}: channel count {channels}, expected {CHANNELS}"
        )));
    }
    let fps = checked_fps(s.f32()?, &ps)?;
    let vals = s.f32_block(frames * CHANNELS, "representation")?;
    s.finish()?;
    let data = Array2::from_shape_vec((frames, CHANNELS), vals)
        .expect("shape matches the element count just read");
    RepSequence::new(fps, data)
}

// ---------------------------------------------------------------------------
// Music features (IDF1 binary and CSV)
// ---------------------------------------------------------------------------

/// Write music features in the binary container.
pub fn write_music(path: &Path, music: &MusicFeatures) -> Result<()> {
    let mut out = Vec::with_capacity(16 + music.len() * MUSIC_DIM * 4);
    out.extend_from_slice(&MUSIC_MAGIC);
    out.write_u32::<LittleEndian>(music.len() as u32).unwrap();
    out.write_u32::<LittleEndian>(MUSIC_DIM as u32).unwrap();
    out.write_f32::<LittleEndian>(music.fps as f32).unwrap();
    for v in music.data.iter() {
        out.write_f32::<LittleEndian>(*v as f32).unwrap();
    }
    store(path, &out)
}

/// Read music features from the binary container.
pub fn read_music(path: &Path) -> Result<MusicFeatures> {
    let buf = load(path)?;
    let ps = path_str(path);
    let mut s = Scanner::new(&buf, &ps);
    s.magic(&MUSIC_MAGIC, "music")?;
    let frames = s.u32()? as usize;
    let channels = s.u32()? as usize;
    if channels != MUSIC_DIM {
        return Err(Error::data(format!(
            "{ps}: channel count {channels}, expected {MUSIC_DIM}"
        )));
    }
    let fps = checked_fps(s.f32()?, &ps)?;
    let vals = s.f32_block(frames * MUSIC_DIM, "music")?;
    s.finish()?;
    let data = Array2::from_shape_vec((frames, MUSIC_DIM), vals)
        .expect("shape matches the element count just read");
    MusicFeatures::new(fps, data).map_err(|e| Error::data(format!("{ps}: {e}")))
}

/// Column names of the music CSV, in channel order.
pub fn music_csv_header() -> Vec<String> {
    let mut names = vec!["envelope".to_string()];
    names.extend((0..20).map(|i| format!("mfcc{i:02}")));
    names.extend((0..12).map(|i| format!("chroma{i:02}")));
    names.push("peak".to_string());
    names.push("beat".to_string());
    names
}

/// Write music features as CSV: a header row, then one row per frame.
pub fn write_music_csv(path: &Path, music: &MusicFeatures) -> Result<()> {
    let mut out = String::new();
    out.push_str(&music_csv_header().join(","));
    out.push('\n');
    for t in 0..music.len() {
        let row = music.data.row(t);
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    store(path, out.as_bytes())
}

/// Read music features from CSV. CSV stores no frame rate, so the caller
/// supplies one. A header row is detected (and checked) by a non-numeric
/// first field; headerless files are accepted.
pub fn read_music_csv(path: &Path, fps: f64) -> Result<MusicFeatures> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path_str(path), e))?;
    let ps = path_str(path);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if lineno == 0 && fields[0].parse::<f64>().is_err() {
            let expect = music_csv_header();
            if fields != expect.iter().map(String::as_str).collect::<Vec<_>>() {
                return Err(Error::data(format!(
                    "{ps}: line 1: unrecognized header (expected {} columns starting with {})",
                    MUSIC_DIM, expect[0]
                )));
            }
            continue;
        }
        if fields.len() != MUSIC_DIM {
            return Err(Error::data(format!(
                "{ps}: line {}: expected {MUSIC_DIM} fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let mut row = Vec::with_capacity(MUSIC_DIM);
        for (col, field) in fields.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::data(format!(
                    "{ps}: line {}: field {} is not a number: {field:?}",
                    lineno + 1,
                    col + 1
                ))
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    let frames = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let data = Array2::from_shape_vec((frames, MUSIC_DIM), flat)
        .expect("every row was checked to have the full width");
    MusicFeatures::new(fps, data).map_err(|e| Error::data(format!("{ps}: {e}")))
}

// ---------------------------------------------------------------------------
// Checkpoint (IDC1)
// ---------------------------------------------------------------------------

/// Write a checkpoint: configuration JSON plus named tensors.
pub fn write_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for t in &checkpoint.tensors {
        if !seen.insert(&t.name) {
            return Err(Error::data(format!(
                "checkpoint has duplicate tensor name {:?}",
                t.name
            )));
        }
    }
    let config = serde_json::to_vec(&checkpoint.config)
        .map_err(|e| Error::data(format!("checkpoint config does not serialize: {e}")))?;
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.write_u32::<LittleEndian>(CHECKPOINT_SCHEMA).unwrap();
    out.write_u32::<LittleEndian>(config.len() as u32).unwrap();
    out.extend_from_slice(&config);
    out.write_u32::<LittleEndian>(checkpoint.tensors.len() as u32)
        .unwrap();
    for t in &checkpoint.tensors {
        out.write_u32::<LittleEndian>(t.name.len() as u32).unwrap();
        out.extend_from_slice(t.name.as_bytes());
        out.write_u32::<LittleEndian>(t.dims.len() as u32).unwrap();
        for &d in &t.dims {
            out.write_u32::<LittleEndian>(d as u32).unwrap();
        }
        for &v in &t.data {
            out.write_f32::<LittleEndian>(v as f32).unwrap();
        }
    }
    store(path, &out)
}

/// Read a checkpoint.
pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let buf = load(path)?;
    let ps = path_str(path);
    let mut s = Scanner::new(&buf, &ps);
    s.magic(&CHECKPOINT_MAGIC, "checkpoint")?;
    let schema = s.u32()?;
    if schema != CHECKPOINT_SCHEMA {
        return Err(Error::data(format!(
            "{ps}: unsupported checkpoint schema {schema} (expected {CHECKPOINT_SCHEMA})"
        )));
    }
    let config_len = s.u32()? as usize;
    let config_bytes = s.take(config_len)?;
    let config: serde_json::Value = serde_json::from_slice(config_bytes)
        .map_err(|e| Error::data(format!("{ps}: checkpoint config is not valid JSON: {e}")))?;
    let count = s.u32()? as usize;
    let mut tensors = Vec::with_capacity(count);
    let mut seen = std::collections::BTreeSet::new();
    for _ in 0..count {
        let name_len = s.u32()? as usize;
        let name = std::str::from_utf8(s.take(name_len)?)
            .map_err(|_| Error::data(format!("{ps}: tensor name is not valid UTF-8")))?
            .to_string();
        if !seen.insert(name.clone()) {
            return Err(Error::data(format!(
                "{ps}: duplicate tensor name {name:?}"
            )));
        }
        let rank = s.u32()? as usize;
        if rank > 8 {
            return Err(Error::data(format!(
                "{ps}: tensor {name:?} has implausible rank {rank}"
            )));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(s.u32()? as usize);
        }
        let numel = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| {
                Error::data(format!("{ps}: tensor {name:?} dims {dims:?} overflow"))
            })?;
        let data = s.f32_block(numel, "tensor")?;
        tensors.push(NamedTensor { name, dims, data });
    }
    s.finish()?;
    Ok(Checkpoint { config, tensors })
}
