//! A complete recognizer (network, CRF, label alphabet and framing) and its
//! binary model file.
//!
//! File layout, all integers little-endian `u64`:
//!
//! ```text
//! "RSQM1"
//! sample_rate window_samples hop_samples input_dim
//! stage_count, then per stage: conv_kw conv_dw filters pool_kw pool_dw
//! hidden_units class_count
//! per class: name_len, name bytes (UTF-8)
//! param_count, then param_count little-endian f64:
//!     network parameters, CRF transitions (row-major), CRF initial scores
//! ```

use std::fs;
use std::path::Path;

use crate::crf::{viterbi, CrfParams, LabelPath, ScoreSeq};
use crate::data::{frame_samples, frame_signal, FramingConfig, LabelAlphabet, RawUtterance};
use crate::error::{Error, Result};
use crate::network::{NetworkConfig, NetworkModel, StageConfig};
use crate::numkernels::FrameSeq;

pub const MODEL_MAGIC: &[u8; 5] = b"RSQM1";

#[derive(Debug, Clone, PartialEq)]
pub struct Recognizer {
    pub network: NetworkModel,
    pub crf: CrfParams,
    pub alphabet: LabelAlphabet,
    pub framing: FramingConfig,
}

impl Recognizer {
    /// Fresh recognizer: seeded network, zero CRF parameters.
    pub fn build(
        config: NetworkConfig,
        alphabet: LabelAlphabet,
        framing: FramingConfig,
        seed: u64,
    ) -> Result<Self> {
        if config.num_classes != alphabet.len() {
            return Err(Error::Config(format!(
                "network has {} classes, alphabet has {} labels",
                config.num_classes,
                alphabet.len()
            )));
        }
        if config.window_samples != framing.window_samples {
            return Err(Error::Config(format!(
                "network window of {} samples differs from the {}-sample framing window",
                config.window_samples, framing.window_samples
            )));
        }
        let crf = CrfParams::zeros(alphabet.len());
        Ok(Self {
            network: NetworkModel::build(config, seed)?,
            crf,
            alphabet,
            framing,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.alphabet.len()
    }

    /// Network plus CRF parameters.
    pub fn param_count(&self) -> usize {
        self.network.param_count() + self.crf.param_count()
    }

    /// Classification windows for an utterance, shaped for the network input.
    pub fn windows(&self, u: &RawUtterance) -> Result<Vec<FrameSeq>> {
        self.shape_windows(frame_signal(u, &self.framing)?)
    }

    /// Windows for an unlabeled signal.
    pub fn signal_windows(&self, samples: &[f32], sample_rate: u32) -> Result<Vec<FrameSeq>> {
        self.shape_windows(frame_samples("signal", samples, sample_rate, &self.framing)?)
    }

    fn shape_windows(&self, windows: Vec<FrameSeq>) -> Result<Vec<FrameSeq>> {
        let d = self.network.config().input_dim;
        if d == 1 {
            return Ok(windows);
        }
        windows
            .into_iter()
            .map(|w| FrameSeq::new(w.frames() / d, d, w.into_vec()))
            .collect()
    }

    pub fn scores(&self, windows: &[FrameSeq]) -> Result<ScoreSeq> {
        Ok(self.network.score_sequence(windows)?.0)
    }

    /// Frame-level Viterbi labels.
    pub fn decode_windows(&self, windows: &[FrameSeq]) -> Result<LabelPath> {
        let scores = self.scores(windows)?;
        Ok(viterbi(&scores, &self.crf)?.0)
    }

    pub fn decode(&self, u: &RawUtterance) -> Result<LabelPath> {
        self.decode_windows(&self.windows(u)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = self.network.config();
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        put(&mut out, self.framing.sample_rate as usize);
        put(&mut out, self.framing.window_samples);
        put(&mut out, self.framing.hop_samples);
        put(&mut out, cfg.input_dim);
        put(&mut out, cfg.stages.len());
        for s in &cfg.stages {
            for v in [s.conv_kw, s.conv_dw, s.filters, s.pool_kw, s.pool_dw] {
                put(&mut out, v);
            }
        }
        put(&mut out, cfg.hidden_units);
        put(&mut out, cfg.num_classes);
        for name in self.alphabet.names() {
            put(&mut out, name.len());
            out.extend_from_slice(name.as_bytes());
        }
        let params = self
            .network
            .params()
            .as_slice()
            .iter()
            .chain(self.crf.transitions())
            .chain(self.crf.init());
        out.extend_from_slice(&(self.param_count() as u64).to_le_bytes());
        for v in params {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MODEL_MAGIC.len())? != MODEL_MAGIC {
            return Err(bad_model("missing RSQM1 magic"));
        }
        let sample_rate = u32::try_from(r.int()?).map_err(|_| bad_model("sample rate overflow"))?;
        let window_samples = r.int()?;
        let hop_samples = r.int()?;
        let input_dim = r.int()?;
        let n_stages = r.count(5 * 8)?;
        let mut stages = Vec::with_capacity(n_stages);
        for _ in 0..n_stages {
            stages.push(StageConfig {
                conv_kw: r.int()?,
                conv_dw: r.int()?,
                filters: r.int()?,
                pool_kw: r.int()?,
                pool_dw: r.int()?,
            });
        }
        let hidden_units = r.int()?;
        let num_classes = r.count(8)?;
        let mut names = Vec::with_capacity(num_classes);
        for _ in 0..num_classes {
            let len = r.count(1)?;
            let raw = r.take(len)?;
            names.push(
                String::from_utf8(raw.to_vec()).map_err(|_| bad_model("label is not UTF-8"))?,
            );
        }
        let alphabet = LabelAlphabet::new(names)?;
        let framing = FramingConfig::new(sample_rate, window_samples, hop_samples)?;
        let config = NetworkConfig {
            input_dim,
            window_samples,
            stages,
            hidden_units,
            num_classes,
        };
        let n_params = r.count(8)?;
        let mut values: Vec<f64> = (0..n_params)
            .map(|_| r.take(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))))
            .collect::<Result<_>>()?;
        if r.pos != bytes.len() {
            return Err(bad_model("trailing bytes after parameters"));
        }
        let k = num_classes;
        let crf_len = k * k + k;
        if values.len() < crf_len {
            return Err(bad_model("parameter block too short"));
        }
        let crf_vals = values.split_off(values.len() - crf_len);
        let network = NetworkModel::from_parameters(config, values)?;
        let crf = CrfParams::new(k, crf_vals[..k * k].to_vec(), crf_vals[k * k..].to_vec())?;
        Ok(Self {
            network,
            crf,
            alphabet,
            framing,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn put(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u64).to_le_bytes());
}

fn bad_model(message: &str) -> Error {
    Error::Format {
        what: "model file",
        message: message.to_string(),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| bad_model("unexpected end of file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn int(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| bad_model("integer overflow"))
    }

    /// A length prefix, checked against the bytes left assuming each item
    /// needs at least `item_bytes`.
    fn count(&mut self, item_bytes: usize) -> Result<usize> {
        let n = self.int()?;
        let left = self.bytes.len() - self.pos;
        if n.saturating_mul(item_bytes) > left {
            return Err(bad_model("length prefix exceeds file size"));
        }
        Ok(n)
    }
}
