//! Model checkpoints: one JSON header line, then the parameters as raw
//! little-endian `f64` values.

use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

use super::{DenoiserParams, MlpShape};
use crate::schedule::SignalScale;
use crate::{Error, Result};

const FORMAT: &str = "d3dp-mlp";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub shape: MlpShape,
    pub embed_dim: usize,
    pub param_count: usize,
    pub signal_scale: SignalScale,
    pub t_max: usize,
    /// Units the training loss was computed in.
    pub loss_units: String,
}

impl CheckpointHeader {
    pub fn new(params: &DenoiserParams, signal_scale: SignalScale, t_max: usize) -> Self {
        Self {
            format: FORMAT.into(),
            version: 1,
            shape: params.shape().clone(),
            embed_dim: params.shape().embed_dim(),
            param_count: params.theta().len(),
            signal_scale,
            t_max,
            loss_units: "normalized".into(),
        }
    }
}

pub fn write_checkpoint(
    mut w: impl Write,
    params: &DenoiserParams,
    signal_scale: SignalScale,
    t_max: usize,
) -> Result<()> {
    let header = CheckpointHeader::new(params, signal_scale, t_max);
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    bytes.reserve(params.theta().len() * 8);
    for v in params.theta() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes).map_err(|e| Error::io("<checkpoint>", e))
}

pub fn read_checkpoint(mut r: impl BufRead) -> Result<(CheckpointHeader, DenoiserParams)> {
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line).map_err(|e| Error::io("<checkpoint>", e))?;
    let header: CheckpointHeader = serde_json::from_slice(&line).map_err(|e| Error::Parse {
        line: 1,
        message: format!("bad checkpoint header: {e}"),
    })?;
    if header.format != FORMAT || header.version != 1 {
        return Err(Error::Schema(format!(
            "unsupported checkpoint format {} v{}",
            header.format, header.version
        )));
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload).map_err(|e| Error::io("<checkpoint>", e))?;
    if payload.len() != header.param_count * 8 {
        return Err(Error::Schema(format!(
            "checkpoint payload has {} bytes, header expects {}",
            payload.len(),
            header.param_count * 8
        )));
    }
    let theta = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let params = DenoiserParams::from_parts(header.shape.clone(), theta)?;
    Ok((header, params))
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    params: &DenoiserParams,
    signal_scale: SignalScale,
    t_max: usize,
) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_checkpoint(&mut w, params, signal_scale, t_max)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(CheckpointHeader, DenoiserParams)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoise::{init_params, RegressionTarget};

    #[test]
    fn round_trip() {
        let p = init_params(MlpShape::new(3, 8, 2, RegressionTarget::PredictEps), 3).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p, SignalScale::default(), 1000).unwrap();
        let (h, back) = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back, p);
        assert_eq!(h.shape.target, RegressionTarget::PredictEps);
        assert_eq!(h.embed_dim, 8);
        assert_eq!(h.loss_units, "normalized");
    }

    #[test]
    fn truncated_payload_rejected() {
        let p = init_params(MlpShape::new(3, 8, 1, RegressionTarget::PredictY0), 3).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p, SignalScale::default(), 1000).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_checkpoint(&buf[..]), Err(Error::Schema(_))));
    }
}
