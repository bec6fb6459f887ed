//! Named architectures.
//!
//! The `timit*` and `wsj` presets carry the best configurations reported for
//! raw-waveform phoneme recognition: per-stage kernel widths and shifts
//! (first-stage units are raw samples), 100 filters per stage, the hidden
//! layer width, the pooling width and the framing (example duration as
//! hop, context as window). `tiny` is a small 8 kHz network for the
//! synthetic corpus.

use crate::data::FramingConfig;
use crate::error::{Error, Result};
use crate::network::{NetworkConfig, StageConfig};

/// Reference parameter count of the 39-class configuration, for comparison
/// only.
pub const TIMIT39_REFERENCE_PARAMS: usize = 873_340;

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub sample_rate: u32,
    pub window_ms: f64,
    pub hop_ms: f64,
    pub stages: Vec<StageConfig>,
    pub hidden_units: usize,
    /// Class count of the original setup; training uses the dataset's.
    pub classes: usize,
    pub reference_params: Option<usize>,
}

impl Preset {
    pub fn framing(&self) -> Result<FramingConfig> {
        FramingConfig::from_ms(self.window_ms, self.hop_ms, self.sample_rate)
    }

    pub fn network(&self, num_classes: usize) -> Result<NetworkConfig> {
        Ok(NetworkConfig {
            input_dim: 1,
            window_samples: self.framing()?.window_samples,
            stages: self.stages.clone(),
            hidden_units: self.hidden_units,
            num_classes,
        })
    }
}

fn three_stage(kw: [usize; 3], pools: [usize; 3]) -> Vec<StageConfig> {
    let dw = [10, 1, 1];
    (0..3)
        .map(|i| StageConfig::new(kw[i], dw[i], 100, pools[i]))
        .collect()
}

pub const PRESET_NAMES: [&str; 5] = ["tiny", "timit39", "timit117", "timit183", "wsj"];

pub fn preset(name: &str) -> Result<Preset> {
    let p = match name {
        "tiny" => Preset {
            name: "tiny",
            sample_rate: 8000,
            window_ms: 30.0,
            hop_ms: 10.0,
            stages: vec![StageConfig::new(10, 5, 16, 2), StageConfig::new(5, 1, 16, 3)],
            hidden_units: 32,
            classes: 5,
            reference_params: None,
        },
        "timit39" => Preset {
            name: "timit39",
            sample_rate: 16_000,
            window_ms: 100.0,
            hop_ms: 5.0,
            stages: three_stage([10, 3, 9], [3, 3, 3]),
            hidden_units: 500,
            classes: 39,
            reference_params: Some(TIMIT39_REFERENCE_PARAMS),
        },
        // Width-4 pooling after the third stage would need 4 frames, but
        // only 3 remain in a 100 ms window, so the last stage is unpooled.
        "timit117" => Preset {
            name: "timit117",
            sample_rate: 16_000,
            window_ms: 100.0,
            hop_ms: 10.0,
            stages: three_stage([10, 5, 7], [4, 4, 1]),
            hidden_units: 500,
            classes: 117,
            reference_params: Some(986_680),
        },
        "timit183" => Preset {
            name: "timit183",
            sample_rate: 16_000,
            window_ms: 150.0,
            hop_ms: 7.5,
            stages: three_stage([10, 7, 7], [2, 2, 2]),
            hidden_units: 500,
            classes: 183,
            reference_params: Some(803_363),
        },
        "wsj" => Preset {
            name: "wsj",
            sample_rate: 16_000,
            window_ms: 680.0,
            hop_ms: 10.0,
            stages: three_stage([10, 7, 9], [2, 2, 2]),
            hidden_units: 1000,
            classes: 40,
            reference_params: Some(6_573_440),
        },
        other => {
            return Err(Error::Config(format!(
                "unknown preset {other:?} (expected one of {})",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(p)
}
