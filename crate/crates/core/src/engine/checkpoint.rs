//! Binary checkpoint: `DPSURCKP`, a little-endian u32 version, a
//! little-endian u64 payload length, then a JSON payload.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EventCounts, StreamState, TrainConfig};
use crate::accountant::PrivacyLedger;
use crate::error::{Error, Result};
use crate::models::{ModelParams, ModelShape};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DPSURCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to continue a run bit-for-bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub shape: ModelShape,
    pub scalar: String,
    /// Weights and momentum widened to f64 (exact for both scalar types).
    pub weights: Vec<f64>,
    pub momentum: Vec<f64>,
    pub ledger: Option<PrivacyLedger>,
    pub iteration: u64,
    pub counts: EventCounts,
    pub streams: Vec<StreamState>,
}

impl Checkpoint {
    pub(crate) fn capture<T: Scalar>(
        config: &TrainConfig,
        params: &ModelParams<T>,
        ledger: Option<PrivacyLedger>,
        iteration: u64,
        counts: EventCounts,
        streams: Vec<StreamState>,
    ) -> Self {
        Self {
            config: config.clone(),
            shape: *params.shape(),
            scalar: T::NAME.to_string(),
            weights: params.weights().iter().map(|w| w.to_f64_lossy()).collect(),
            momentum: params.momentum().iter().map(|w| w.to_f64_lossy()).collect(),
            ledger,
            iteration,
            counts,
            streams,
        }
    }

    /// Rebuild the parameters; the scalar type must match the one saved.
    pub fn params<T: Scalar>(&self) -> Result<ModelParams<T>> {
        if self.scalar != T::NAME {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} parameters, requested {}",
                self.scalar,
                T::NAME
            )));
        }
        let cast = |v: &[f64]| v.iter().map(|&x| T::from_f64_lossy(x)).collect::<Vec<T>>();
        ModelParams::from_parts(self.shape, cast(&self.weights), cast(&self.momentum))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let payload = serde_json::to_vec(self)?;
        let mut out = Vec::with_capacity(payload.len() + 20);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        let mut version = [0u8; 4];
        let mut len = [0u8; 8];
        r.read_exact(&mut magic)
            .and_then(|_| r.read_exact(&mut version))
            .and_then(|_| r.read_exact(&mut len))
            .map_err(|_| Error::Checkpoint("truncated header".into()))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = u32::from_le_bytes(version);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let len = u64::from_le_bytes(len);
        if len != r.len() as u64 {
            return Err(Error::Checkpoint(format!(
                "payload length {len} does not match {} remaining bytes",
                r.len()
            )));
        }
        Ok(serde_json::from_slice(r)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
