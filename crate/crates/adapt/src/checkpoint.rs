//! Binary checkpoints.
//!
//! Layout: the magic bytes `ADAPTCKP`, a little-endian `u32` format
//! version, a little-endian `u64` header length, the UTF-8 JSON header, then
//! the raw little-endian values of every array back to back in header
//! order.

use std::fs;
use std::path::Path;

use adapt_core::energy::{EnergyModel, EnergyModelConfig};
use adapt_core::force::{ForceModel, ForceModelConfig};
use adapt_core::norm::NormStats;
use adapt_core::{Matrix, ParamStore, Precision, Real};
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};

pub const MAGIC: &[u8; 8] = b"ADAPTCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelType {
    Force,
    Energy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub precision: Precision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub model_type: ModelType,
    /// Energy architecture; absent for force models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arch: Option<adapt_core::energy::EnergyArch>,
    pub precision: Precision,
    pub config: serde_json::Value,
    pub norm_stats: NormStats,
    pub arrays: Vec<ArrayEntry>,
}

/// A decoded checkpoint whose arrays are still in their stored precision.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: Header,
    data: Vec<Vec<f64>>,
}

fn encode<T: Real>(
    model_type: ModelType,
    arch: Option<adapt_core::energy::EnergyArch>,
    config: serde_json::Value,
    stats: &NormStats,
    params: &ParamStore<T>,
) -> Vec<u8> {
    let arrays = params
        .iter()
        .map(|(name, m)| ArrayEntry {
            name: name.to_string(),
            shape: [m.rows(), m.cols()],
            precision: T::PRECISION,
        })
        .collect();
    let header = Header {
        format_version: FORMAT_VERSION,
        model_type,
        arch,
        precision: T::PRECISION,
        config,
        norm_stats: stats.clone(),
        arrays,
    };
    let json = serde_json::to_vec(&header).expect("headers always serialize");
    let mut out = Vec::with_capacity(20 + json.len() + params.scalar_count() * T::PRECISION.byte_width());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, m) in params.iter() {
        for &v in m.data() {
            match T::PRECISION {
                Precision::F32 => out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes()),
                Precision::F64 => out.extend_from_slice(&v.as_f64().to_le_bytes()),
            }
        }
    }
    out
}

pub fn save_force<T: Real>(path: &Path, model: &ForceModel<T>) -> Result<()> {
    let config = serde_json::to_value(&model.config)?;
    let bytes = encode(ModelType::Force, None, config, &model.stats, &model.params);
    write_atomically(path, &bytes)
}

pub fn save_energy<T: Real>(path: &Path, model: &EnergyModel<T>) -> Result<()> {
    let config = serde_json::to_value(&model.config)?;
    let bytes = encode(ModelType::Energy, Some(model.arch()), config, &model.stats, &model.params);
    write_atomically(path, &bytes)
}

fn write_atomically(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).at(dir)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).at(&tmp)?;
    fs::rename(&tmp, path).at(path)
}

impl Checkpoint {
    pub fn read(path: &Path) -> Result<Checkpoint> {
        let bytes = fs::read(path).at(path)?;
        Self::decode(&bytes).map_err(|reason| Error::Checkpoint {
            path: path.to_path_buf(),
            reason,
        })
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Checkpoint, String> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err("not a checkpoint file".into());
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(format!("unsupported format version {version}"));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = bytes.get(20..20 + len).ok_or("truncated header")?;
        let header: Header = serde_json::from_slice(body).map_err(|e| format!("bad header: {e}"))?;
        let mut offset = 20 + len;
        let mut data = Vec::with_capacity(header.arrays.len());
        for a in &header.arrays {
            let count = a.shape[0] * a.shape[1];
            let width = a.precision.byte_width();
            let raw = bytes
                .get(offset..offset + count * width)
                .ok_or_else(|| format!("array {} is truncated", a.name))?;
            let values = match a.precision {
                Precision::F32 => raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                    .collect(),
                Precision::F64 => raw
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            };
            data.push(values);
            offset += count * width;
        }
        if offset != bytes.len() {
            return Err(format!("{} trailing bytes", bytes.len() - offset));
        }
        Ok(Checkpoint { header, data })
    }

    /// The stored arrays as a parameter store of precision `T`.
    pub fn params<T: Real>(&self) -> Result<ParamStore<T>> {
        let mut store = ParamStore::new();
        for (a, values) in self.header.arrays.iter().zip(&self.data) {
            let m = Matrix::from_vec(a.shape[0], a.shape[1], values.iter().map(|&v| T::of(v)).collect())?;
            store.add(a.name.clone(), m);
        }
        Ok(store)
    }

    fn expect(&self, t: ModelType) -> Result<()> {
        if self.header.model_type == t {
            Ok(())
        } else {
            Err(Error::Checkpoint {
                path: Default::default(),
                reason: format!("expected a {t:?} model, found {:?}", self.header.model_type),
            })
        }
    }

    pub fn force_model<T: Real>(&self) -> Result<ForceModel<T>> {
        self.expect(ModelType::Force)?;
        let cfg: ForceModelConfig = serde_json::from_value(self.header.config.clone())?;
        Ok(ForceModel::with_params(cfg, self.header.norm_stats.clone(), &self.params()?)?)
    }

    pub fn energy_model<T: Real>(&self) -> Result<EnergyModel<T>> {
        self.expect(ModelType::Energy)?;
        let cfg: EnergyModelConfig = serde_json::from_value(self.header.config.clone())?;
        Ok(EnergyModel::with_params(cfg, self.header.norm_stats.clone(), &self.params()?)?)
    }
}
