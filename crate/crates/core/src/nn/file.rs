use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Mlp, OutputActivation};
use crate::error::{Error, Result};

pub const NETWORK_FILE_VERSION: u32 = 1;
const FORMAT_TAG: &str = "secrl-mlp";

/// Self-describing JSON container for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub format: String,
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    pub beta: f64,
    pub output: OutputActivation,
    /// Layer by layer: row-major weights, then biases.
    pub params: Vec<f64>,
}

impl From<&Mlp> for NetworkFile {
    fn from(net: &Mlp) -> Self {
        NetworkFile {
            format: FORMAT_TAG.to_string(),
            version: NETWORK_FILE_VERSION,
            layer_sizes: net.layer_sizes().to_vec(),
            beta: net.beta(),
            output: net.output_activation(),
            params: net.to_flat(),
        }
    }
}

impl NetworkFile {
    pub fn into_network(self) -> Result<Mlp> {
        if self.format != FORMAT_TAG {
            return Err(Error::Checkpoint(format!("unknown format tag {:?}", self.format)));
        }
        if self.version != NETWORK_FILE_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported network file version {}",
                self.version
            )));
        }
        if self.layer_sizes.len() < 2 {
            return Err(Error::Checkpoint("network file lists fewer than two layers".into()));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut offset = 0;
        let take = |offset: &mut usize, n: usize| -> Result<Vec<f64>> {
            let end = *offset + n;
            let chunk = self
                .params
                .get(*offset..end)
                .ok_or_else(|| Error::Checkpoint("parameter array too short".into()))?;
            *offset = end;
            Ok(chunk.to_vec())
        };
        for pair in self.layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let w = take(&mut offset, fan_in * fan_out)?;
            weights.push(
                Array2::from_shape_vec((fan_out, fan_in), w)
                    .map_err(|e| Error::Checkpoint(e.to_string()))?,
            );
            biases.push(Array1::from(take(&mut offset, fan_out)?));
        }
        if offset != self.params.len() {
            return Err(Error::Checkpoint("trailing parameters in network file".into()));
        }
        Mlp::from_parts(weights, biases, self.beta, self.output)
    }
}

pub fn save_network(net: &Mlp, path: &Path) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(w, &NetworkFile::from(net))?;
    Ok(())
}

pub fn load_network(path: &Path) -> Result<Mlp> {
    let r = BufReader::new(File::open(path)?);
    let file: NetworkFile = serde_json::from_reader(r)?;
    file.into_network()
}
