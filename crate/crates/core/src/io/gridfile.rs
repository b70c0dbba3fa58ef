use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{frame, read_file, unframe, write_atomic};
use crate::datagen::{GriddedSequence, SplitRole};
use crate::error::{Error, Result};
use crate::tensor::Field;

pub const GRID_MAGIC: &[u8; 4] = b"GRD1";
pub const GRID_AXES: [&str; 5] = ["sample", "frame", "channel", "y", "x"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridHeader {
    /// `[sample, frame, channel, y, x]`.
    pub shape: [usize; 5],
    pub axes: Vec<String>,
    pub dtype: String,
    pub frame_interval: f64,
    /// Leading frames of every sample that are observed context.
    pub context_frames: usize,
    pub sample_ids: Vec<u64>,
    pub metadata: Value,
    pub config: Value,
}

/// A stack of equally shaped samples stored as little-endian `f32`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFile {
    pub header: GridHeader,
    pub data: Vec<f32>,
}

impl GridFile {
    pub fn new(
        shape: [usize; 5],
        data: Vec<f32>,
        frame_interval: f64,
        context_frames: usize,
        sample_ids: Vec<u64>,
        metadata: Value,
        config: Value,
    ) -> Result<Self> {
        let g = GridFile {
            header: GridHeader {
                shape,
                axes: GRID_AXES.iter().map(|s| s.to_string()).collect(),
                dtype: "f32".into(),
                frame_interval,
                context_frames,
                sample_ids,
                metadata,
                config,
            },
            data,
        };
        g.validate(Path::new("<memory>"))?;
        Ok(g)
    }

    /// Stacks fields of identical shape; `ids` label the samples.
    pub fn from_fields(
        fields: &[Field],
        ids: Vec<u64>,
        frame_interval: f64,
        context_frames: usize,
        metadata: Value,
        config: Value,
    ) -> Result<Self> {
        let Some(first) = fields.first() else {
            return Err(Error::Input("a grid file needs at least one sample".into()));
        };
        let mut data = Vec::with_capacity(fields.len() * first.len());
        for f in fields {
            first.ensure_same_shape(f)?;
            data.extend(f.to_f32());
        }
        let [n, c, h, w] = first.shape();
        GridFile::new([fields.len(), n, c, h, w], data, frame_interval, context_frames, ids, metadata, config)
    }

    pub fn from_sequences(seqs: &[GriddedSequence], metadata: Value, config: Value) -> Result<Self> {
        let Some(first) = seqs.first() else {
            return Err(Error::Input("a grid file needs at least one sample".into()));
        };
        let fields: Vec<Field> = seqs.iter().map(|s| s.data.clone()).collect();
        GridFile::from_fields(
            &fields,
            seqs.iter().map(|s| s.sample_id).collect(),
            first.frame_interval,
            first.context_frames,
            metadata,
            config,
        )
    }

    pub fn samples(&self) -> usize {
        self.header.shape[0]
    }

    pub fn sample_shape(&self) -> [usize; 4] {
        let [_, n, c, h, w] = self.header.shape;
        [n, c, h, w]
    }

    pub fn sample(&self, index: usize) -> Field {
        let shape = self.sample_shape();
        let len: usize = shape.iter().product();
        let data = self.data[index * len..(index + 1) * len].iter().map(|&v| v as f64).collect();
        Field::from_vec(shape, data).expect("validated shape")
    }

    pub fn fields(&self) -> Vec<Field> {
        (0..self.samples()).map(|i| self.sample(i)).collect()
    }

    /// Samples as sequences; `split` comes from the file metadata when present.
    pub fn to_sequences(&self) -> Vec<GriddedSequence> {
        let split = match self.header.metadata.get("split").and_then(Value::as_str) {
            Some("train") => SplitRole::Train,
            Some("val") => SplitRole::Val,
            Some("test") => SplitRole::Test,
            _ => SplitRole::Unassigned,
        };
        let seeds = self.header.metadata.get("sample_seeds").and_then(Value::as_array);
        (0..self.samples())
            .map(|i| GriddedSequence {
                data: self.sample(i),
                context_frames: self.header.context_frames,
                frame_interval: self.header.frame_interval,
                split,
                sample_id: self.header.sample_ids[i],
                seed: seeds.and_then(|s| s.get(i)).and_then(Value::as_u64).unwrap_or(0),
            })
            .collect()
    }

    fn validate(&self, path: &Path) -> Result<()> {
        let bad = |m: String| Error::Format {
            path: path.to_path_buf(),
            message: m,
        };
        let h = &self.header;
        if h.axes != GRID_AXES {
            return Err(bad(format!("axes must be {GRID_AXES:?}, found {:?}", h.axes)));
        }
        if h.dtype != "f32" {
            return Err(bad(format!("unsupported dtype {}", h.dtype)));
        }
        if h.shape.contains(&0) {
            return Err(bad(format!("empty axis in shape {:?}", h.shape)));
        }
        let count: usize = h.shape.iter().product();
        if count != self.data.len() {
            return Err(bad(format!(
                "header declares {count} elements but the payload holds {}",
                self.data.len()
            )));
        }
        if h.sample_ids.len() != h.shape[0] {
            return Err(bad(format!(
                "{} sample ids for {} samples",
                h.sample_ids.len(),
                h.shape[0]
            )));
        }
        if h.context_frames > h.shape[1] {
            return Err(bad("context_frames exceeds the frame axis".into()));
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut payload = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        frame(GRID_MAGIC, &header, &payload)
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let (header, payload) = unframe(GRID_MAGIC, bytes, path)?;
        let header: GridHeader = serde_json::from_slice(header).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: format!("header: {e}"),
        })?;
        if payload.len() % 4 != 0 {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("payload of {} bytes is not a whole number of f32", payload.len()),
            });
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let g = GridFile { header, data };
        g.validate(path)?;
        Ok(g)
    }

    pub fn read(path: &Path) -> Result<Self> {
        GridFile::decode(&read_file(path)?, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }
}
