//! Seeded synthetic spatiotemporal datasets.

mod flow;
mod glyph;
mod split;

pub use flow::{generate_flow_dataset, simulate_flow, FlowScene, FlowTaskConfig, Vortex};
pub use glyph::{generate_glyph_dataset, render_glyph_sequence, GlyphScene, GlyphState, GlyphTaskConfig, GLYPHS};
pub use split::{split_dataset, DatasetSplits};

use serde::{Deserialize, Serialize};

use crate::tensor::Field;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRole {
    Train,
    Val,
    Test,
    Unassigned,
}

impl SplitRole {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitRole::Train => "train",
            SplitRole::Val => "val",
            SplitRole::Test => "test",
            SplitRole::Unassigned => "unassigned",
        }
    }
}

/// One sample: `context_frames` observed frames followed by the forecast target.
#[derive(Clone, Debug, PartialEq)]
pub struct GriddedSequence {
    /// `(frames, channels, height, width)`.
    pub data: Field,
    pub context_frames: usize,
    pub frame_interval: f64,
    pub split: SplitRole,
    pub sample_id: u64,
    pub seed: u64,
}

impl GriddedSequence {
    pub fn context(&self) -> Field {
        self.data.frame_range(0, self.context_frames)
    }

    pub fn target(&self) -> Field {
        self.data.frame_range(self.context_frames, self.data.frames())
    }

    pub fn horizon(&self) -> usize {
        self.data.frames() - self.context_frames
    }
}

/// SplitMix64 finalizer, used to derive independent per-sample seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
