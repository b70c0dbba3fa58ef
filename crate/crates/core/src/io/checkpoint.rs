use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{frame, read_file, sha256_hex, unframe, write_atomic};
use crate::denoiser::{Architecture, ModelWeights, NamedTensor, TrainConfig};
use crate::error::{Error, Result};
use crate::schedule::{NoiseSchedule, ScheduleSpec};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CKP1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    architecture: Architecture,
    schedule: ScheduleSpec,
    betas: Vec<f64>,
    schedule_digest: String,
    train: TrainConfig,
    step: usize,
    parameter_count: usize,
    /// sha256 of the `f64` little-endian weight payload.
    weights_sha256: String,
}

/// Trained weights with the schedule and training settings that produced
/// them. Weights are stored as `f64` so a reload is exact.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub weights: ModelWeights,
    pub schedule: NoiseSchedule,
    pub train: TrainConfig,
    pub step: usize,
}

impl Checkpoint {
    fn payload(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.weights.parameter_count() * 8);
        for t in &self.weights.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn encode(&self) -> Vec<u8> {
        let payload = self.payload();
        let header = CheckpointHeader {
            architecture: self.weights.architecture.clone(),
            schedule: self.schedule.spec().clone(),
            betas: self.schedule.betas().to_vec(),
            schedule_digest: self.schedule.digest(),
            train: self.train.clone(),
            step: self.step,
            parameter_count: self.weights.parameter_count(),
            weights_sha256: sha256_hex(&payload),
        };
        frame(
            CHECKPOINT_MAGIC,
            &serde_json::to_vec(&header).expect("header serializes"),
            &payload,
        )
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |m: String| Error::Format {
            path: path.to_path_buf(),
            message: m,
        };
        let (header, payload) = unframe(CHECKPOINT_MAGIC, bytes, path)?;
        let header: CheckpointHeader =
            serde_json::from_slice(header).map_err(|e| bad(format!("header: {e}")))?;
        if sha256_hex(payload) != header.weights_sha256 {
            return Err(bad("weight payload digest mismatch".into()));
        }
        let schedule = NoiseSchedule::from_betas(header.schedule.clone(), header.betas)?;
        if schedule.digest() != header.schedule_digest {
            return Err(bad("schedule digest mismatch".into()));
        }
        header.architecture.validate()?;
        let layout = header.architecture.tensor_layout();
        let expected: usize = layout.iter().map(|(_, n)| n).sum();
        if expected != header.parameter_count || payload.len() != expected * 8 {
            return Err(bad(format!(
                "architecture needs {expected} parameters, payload holds {}",
                payload.len() / 8
            )));
        }
        let mut values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let tensors = layout
            .into_iter()
            .map(|(name, n)| NamedTensor {
                name,
                data: values.by_ref().take(n).collect(),
            })
            .collect();
        Ok(Checkpoint {
            weights: ModelWeights::from_tensors(header.architecture, tensors)?,
            schedule,
            train: header.train,
            step: header.step,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Checkpoint::decode(&read_file(path)?, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::cosine_schedule;

    #[test]
    fn exact_round_trip() {
        let weights = ModelWeights::init(Architecture::desk(1, 1, 1, 3), 5).unwrap();
        let ck = Checkpoint {
            weights,
            schedule: cosine_schedule(20, 0.008).unwrap(),
            train: TrainConfig::default(),
            step: 12,
        };
        let bytes = ck.encode();
        let back = Checkpoint::decode(&bytes, Path::new("c")).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.encode(), bytes);

        let mut corrupt = bytes.clone();
        let last = corrupt.len() - 1;
        corrupt[last] ^= 1;
        assert!(matches!(Checkpoint::decode(&corrupt, Path::new("c")), Err(Error::Format { .. })));
    }
}
