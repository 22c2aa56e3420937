//! JSON checkpoint container for a single network.
//!
//! Values are stored as IEEE bit patterns so save/load is bit-exact for
//! both precisions.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::linalg::Real;
use super::network::{NetShape, NetworkParams};
use crate::error::{Error, Result};

pub const FORMAT: &str = "fiberdraw.network.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCheckpoint {
    pub format: String,
    pub dtype: String,
    pub shape: NetShape,
    pub seed: u64,
    pub step: u64,
    /// f64 bit patterns (f32 parameters are widened losslessly).
    pub bits: Vec<u64>,
}

impl NetworkCheckpoint {
    pub fn capture<T: Real>(params: &NetworkParams<T>, seed: u64, step: u64) -> Self {
        Self {
            format: FORMAT.to_string(),
            dtype: T::DTYPE.to_string(),
            shape: params.shape().clone(),
            seed,
            step,
            bits: params.data().iter().map(|v| v.f64().to_bits()).collect(),
        }
    }

    pub fn restore<T: Real>(&self) -> Result<NetworkParams<T>> {
        if self.format != FORMAT {
            return Err(Error::Config(format!("unknown checkpoint format `{}`", self.format)));
        }
        if self.dtype != T::DTYPE {
            return Err(Error::Config(format!(
                "checkpoint holds {} parameters, asked for {}",
                self.dtype,
                T::DTYPE
            )));
        }
        let data = self.bits.iter().map(|&b| T::of(f64::from_bits(b))).collect();
        NetworkParams::from_data(self.shape.clone(), data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(file)?)
    }
}
