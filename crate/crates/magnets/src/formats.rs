//! Binary file formats: dataset files and model checkpoints.
//!
//! Dataset file (little-endian), extension `.mgts`:
//!
//! ```text
//! magic "MGTS" | version u32 | flags u32 | n u32 | c u32 | t u32
//! | name_len u32 | name utf-8
//! | x: n*c*t f32 row-major (sample, channel, time)
//! | y: n f32
//! | gt_mask: n*c*t bytes of 0/1        (if flags bit 0)
//! | crc32 of everything above, u32
//! ```
//!
//! Flags: bit 0 = ground-truth mask present, bit 1 = test split.
//!
//! Checkpoint file, extension `.mgck`: magic "MGCK", version u32, JSON header
//! length u32, JSON header (model kind + config, scaler, parameter manifest
//! with names/shapes/offsets), then all parameter payloads as f64
//! little-endian, then a crc32 of everything above.
//!
//! Targets are stored at single precision, matching the x payload; exact
//! f64 targets exist only in freshly generated in-memory datasets.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use magnets_core::baselines::{CnnModel, LinearBaseline, MeanModel};
use magnets_core::data::{Split, TimeSeriesDataset};
use magnets_core::model::{MagnetsConfig, MagnetsModel};
use magnets_core::train::Standardizer;
use magnets_core::{Rng, Tensor};
use serde::{Deserialize, Serialize};

pub const MGTS_MAGIC: &[u8; 4] = b"MGTS";
pub const MGTS_VERSION: u32 = 1;
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MGCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug)]
pub enum FormatError {
    Io(std::io::Error),
    /// File does not start with the expected magic bytes.
    BadMagic,
    UnsupportedVersion(u32),
    /// File ends before the declared payload.
    Truncated,
    ChecksumMismatch,
    /// Structurally invalid content (counts, encoding, manifest).
    Corrupt(String),
    Model(magnets_core::Error),
}

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FormatError::Io(e) => write!(f, "io error: {e}"),
            FormatError::BadMagic => write!(f, "bad magic (not a recognized file)"),
            FormatError::UnsupportedVersion(v) => write!(f, "unsupported format version {v}"),
            FormatError::Truncated => write!(f, "file is truncated"),
            FormatError::ChecksumMismatch => write!(f, "checksum mismatch (corrupted file)"),
            FormatError::Corrupt(d) => write!(f, "corrupt file: {d}"),
            FormatError::Model(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for FormatError {}

impl From<std::io::Error> for FormatError {
    fn from(e: std::io::Error) -> Self {
        FormatError::Io(e)
    }
}

impl From<magnets_core::Error> for FormatError {
    fn from(e: magnets_core::Error) -> Self {
        FormatError::Model(e)
    }
}

pub type Result<T> = std::result::Result<T, FormatError>;

// ---- crc32 (IEEE, reflected) ----

const fn crc32_table() -> [u32; 256] {
    let mut table = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = i as u32;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 1 != 0 { (crc >> 1) ^ 0xedb8_8320 } else { crc >> 1 };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

static CRC_TABLE: [u32; 256] = crc32_table();

pub fn crc32(data: &[u8]) -> u32 {
    let mut crc = 0xffff_ffffu32;
    for byte in data {
        crc = (crc >> 8) ^ CRC_TABLE[((crc ^ *byte as u32) & 0xff) as usize];
    }
    !crc
}

// ---- byte cursor ----

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(data: &'a [u8]) -> Self {
        Cursor { data, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(FormatError::Truncated);
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

// ---- dataset ----

pub fn write_dataset(ds: &TimeSeriesDataset, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(24 + ds.name.len() + ds.x.len() * 4 + ds.y.len() * 4);
    buf.extend_from_slice(MGTS_MAGIC);
    buf.extend_from_slice(&MGTS_VERSION.to_le_bytes());
    let mut flags = 0u32;
    if ds.gt_mask.is_some() {
        flags |= 1;
    }
    if ds.split == Split::Test {
        flags |= 2;
    }
    buf.extend_from_slice(&flags.to_le_bytes());
    buf.extend_from_slice(&(ds.n as u32).to_le_bytes());
    buf.extend_from_slice(&(ds.c as u32).to_le_bytes());
    buf.extend_from_slice(&(ds.t as u32).to_le_bytes());
    buf.extend_from_slice(&(ds.name.len() as u32).to_le_bytes());
    buf.extend_from_slice(ds.name.as_bytes());
    for v in &ds.x {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    for v in &ds.y {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    if let Some(gt) = &ds.gt_mask {
        buf.extend_from_slice(gt);
    }
    let crc = crc32(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    write_atomically(path, &buf)
}

pub fn read_dataset(path: &Path) -> Result<TimeSeriesDataset> {
    let data = fs::read(path)?;
    if data.len() < 4 {
        return Err(FormatError::Truncated);
    }
    if &data[..4] != MGTS_MAGIC {
        return Err(FormatError::BadMagic);
    }
    if data.len() < 8 {
        return Err(FormatError::Truncated);
    }
    let (payload, crc_bytes) = data.split_at(data.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    if crc32(payload) != stored {
        return Err(FormatError::ChecksumMismatch);
    }
    let mut cur = Cursor::new(payload);
    cur.take(4)?; // magic
    let version = cur.u32()?;
    if version != MGTS_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let flags = cur.u32()?;
    let n = cur.u32()? as usize;
    let c = cur.u32()? as usize;
    let t = cur.u32()? as usize;
    let name_len = cur.u32()? as usize;
    let name = core::str::from_utf8(cur.take(name_len)?)
        .map_err(|_| FormatError::Corrupt("dataset name is not valid utf-8".into()))?
        .to_string();
    let count = n
        .checked_mul(c)
        .and_then(|v| v.checked_mul(t))
        .ok_or_else(|| FormatError::Corrupt("element count overflow".into()))?;
    let x_bytes = cur.take(count * 4)?;
    let x: Vec<f64> = x_bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    let y_bytes = cur.take(n * 4)?;
    let y: Vec<f64> = y_bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    let gt_mask = if flags & 1 != 0 {
        let g = cur.take(count)?;
        if g.iter().any(|b| *b > 1) {
            return Err(FormatError::Corrupt("ground-truth mask entries must be 0/1".into()));
        }
        Some(g.to_vec())
    } else {
        None
    };
    if cur.pos != payload.len() {
        return Err(FormatError::Corrupt(format!(
            "{} trailing bytes",
            payload.len() - cur.pos
        )));
    }
    let split = if flags & 2 != 0 { Split::Test } else { Split::Train };
    Ok(TimeSeriesDataset { name, split, n, c, t, x, y, gt_mask })
}

fn write_atomically(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

// ---- checkpoints ----

/// Everything a trained run needs to be reloaded.
#[derive(Debug, Clone)]
pub enum ModelCheckpoint {
    Magnets { model: MagnetsModel, scaler: Standardizer },
    Cnn { model: CnnModel, scaler: Standardizer },
    Mean { model: MeanModel },
    Linear { model: LinearBaseline },
}

impl ModelCheckpoint {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelCheckpoint::Magnets { .. } => "magnets",
            ModelCheckpoint::Cnn { .. } => "cnn",
            ModelCheckpoint::Mean { .. } => "mean",
            ModelCheckpoint::Linear { model } => model.regularization.label(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    /// Offset into the payload, in f64 elements.
    offset: usize,
    len: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum HeaderModel {
    Magnets {
        config: MagnetsConfig,
        scaler: Standardizer,
    },
    Cnn {
        channels: usize,
        length: usize,
        widths: [usize; 3],
        scaler: Standardizer,
    },
    Mean {
        mean: f64,
    },
    Linear {
        regularization: magnets_core::baselines::Regularization,
        channels: usize,
        length: usize,
        scaler: Standardizer,
        intercept: f64,
    },
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    model: HeaderModel,
    params: Vec<ParamEntry>,
}

fn param_manifest(names: Vec<String>, tensors: Vec<&Tensor>) -> (Vec<ParamEntry>, Vec<f64>) {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut payload = Vec::new();
    for (name, t) in names.into_iter().zip(tensors) {
        entries.push(ParamEntry {
            name,
            shape: t.shape().to_vec(),
            offset: payload.len(),
            len: t.len(),
        });
        payload.extend_from_slice(t.data());
    }
    (entries, payload)
}

pub fn save_checkpoint(cp: &ModelCheckpoint, path: &Path) -> Result<()> {
    let (model, params, payload) = match cp {
        ModelCheckpoint::Magnets { model, scaler } => {
            let (entries, payload) = param_manifest(model.param_names(), model.params());
            (
                HeaderModel::Magnets { config: model.config.clone(), scaler: scaler.clone() },
                entries,
                payload,
            )
        }
        ModelCheckpoint::Cnn { model, scaler } => {
            use magnets_core::train::TrainableModel;
            let (entries, payload) = param_manifest(model.param_names(), model.params());
            (
                HeaderModel::Cnn {
                    channels: model.channels,
                    length: model.length,
                    widths: model.widths,
                    scaler: scaler.clone(),
                },
                entries,
                payload,
            )
        }
        ModelCheckpoint::Mean { model } => {
            (HeaderModel::Mean { mean: model.mean }, Vec::new(), Vec::new())
        }
        ModelCheckpoint::Linear { model } => {
            let p = model.weights.len();
            (
                HeaderModel::Linear {
                    regularization: model.regularization,
                    channels: model.scaler.channel_mean.len(),
                    length: p / model.scaler.channel_mean.len(),
                    scaler: model.scaler.clone(),
                    intercept: model.intercept,
                },
                vec![ParamEntry { name: "weights".into(), shape: vec![p], offset: 0, len: p }],
                model.weights.clone(),
            )
        }
    };
    let header = Header { version: CHECKPOINT_VERSION, model, params };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| FormatError::Corrupt(format!("header serialization: {e}")))?;

    let mut buf = Vec::with_capacity(16 + header_json.len() + payload.len() * 8);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header_json);
    for v in &payload {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    write_atomically(path, &buf)
}

pub fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    let data = fs::read(path)?;
    if data.len() < 4 {
        return Err(FormatError::Truncated);
    }
    if &data[..4] != CHECKPOINT_MAGIC {
        return Err(FormatError::BadMagic);
    }
    if data.len() < 8 {
        return Err(FormatError::Truncated);
    }
    let (payload_all, crc_bytes) = data.split_at(data.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    if crc32(payload_all) != stored {
        return Err(FormatError::ChecksumMismatch);
    }
    let mut cur = Cursor::new(payload_all);
    cur.take(4)?;
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let header_len = cur.u32()? as usize;
    let header: Header = serde_json::from_slice(cur.take(header_len)?)
        .map_err(|e| FormatError::Corrupt(format!("header: {e}")))?;
    let values_bytes = cur.take(payload_all.len() - cur.pos)?;
    if values_bytes.len() % 8 != 0 {
        return Err(FormatError::Corrupt("payload is not a whole number of f64".into()));
    }
    let values: Vec<f64> = values_bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();

    let read_params = |entries: &[ParamEntry], targets: Vec<&mut Tensor>| -> Result<()> {
        if entries.len() != targets.len() {
            return Err(FormatError::Corrupt(format!(
                "manifest has {} params, model needs {}",
                entries.len(),
                targets.len()
            )));
        }
        for (entry, target) in entries.iter().zip(targets) {
            if entry.shape != target.shape() || entry.len != target.len() {
                return Err(FormatError::Corrupt(format!(
                    "parameter {} shape {:?} does not match expected {:?}",
                    entry.name,
                    entry.shape,
                    target.shape()
                )));
            }
            let end = entry.offset + entry.len;
            if end > values.len() {
                return Err(FormatError::Truncated);
            }
            target.data_mut().copy_from_slice(&values[entry.offset..end]);
        }
        Ok(())
    };

    match header.model {
        HeaderModel::Magnets { config, scaler } => {
            let mut rng = Rng::new(0);
            let mut model = MagnetsModel::init(config, &mut rng)?;
            read_params(&header.params, model.params_mut())?;
            Ok(ModelCheckpoint::Magnets { model, scaler })
        }
        HeaderModel::Cnn { channels, length, widths, scaler } => {
            use magnets_core::train::TrainableModel;
            let mut rng = Rng::new(0);
            let mut model = CnnModel::init(channels, length, widths, &mut rng);
            read_params(&header.params, model.params_mut())?;
            Ok(ModelCheckpoint::Cnn { model, scaler })
        }
        HeaderModel::Mean { mean } => Ok(ModelCheckpoint::Mean { model: MeanModel { mean } }),
        HeaderModel::Linear { regularization, channels, length, scaler, intercept } => {
            let p = channels * length;
            if header.params.len() != 1 || header.params[0].len != p {
                return Err(FormatError::Corrupt("linear manifest mismatch".into()));
            }
            let e = &header.params[0];
            if e.offset + e.len > values.len() {
                return Err(FormatError::Truncated);
            }
            Ok(ModelCheckpoint::Linear {
                model: LinearBaseline {
                    weights: values[e.offset..e.offset + e.len].to_vec(),
                    intercept,
                    regularization,
                    scaler,
                },
            })
        }
    }
}
