//! Raw-signal utterances, framing into classification windows, dataset
//! files and the synthetic corpus.

mod io;
mod metrics;
mod synth;

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numkernels::FrameSeq;

pub use io::{load_dataset, read_signal, save_dataset, write_signal, SIGNAL_MAGIC};
pub use metrics::{collapse_repeats, edit_distance, map_labels, EditCounts, LabelMapping};
pub use synth::{synth_generate, SynthConfig};

/// Ordered, duplicate-free label names. Index `k` in a label path refers to
/// `names()[k]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelAlphabet {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelAlphabet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(Error::Argument(format!(
                "alphabet needs at least 2 labels, got {}",
                names.len()
            )));
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() || n.chars().any(char::is_whitespace) {
                return Err(Error::Argument(format!("invalid label name {n:?}")));
            }
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::Argument(format!("duplicate label {n:?}")));
            }
        }
        Ok(Self { names, index })
    }

    /// The alphabet of a dataset with no utterances and no declared labels.
    pub(crate) fn empty() -> Self {
        Self {
            names: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, k: usize) -> &str {
        &self.names[k]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn encode<S: AsRef<str>>(&self, names: &[S]) -> std::result::Result<Vec<usize>, String> {
        names
            .iter()
            .map(|n| self.index_of(n.as_ref()).ok_or_else(|| n.as_ref().to_string()))
            .collect()
    }

    pub fn decode(&self, path: &[usize]) -> Vec<&str> {
        path.iter().map(|&k| self.name(k)).collect()
    }
}

/// Classification window and hop, in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FramingConfig {
    pub sample_rate: u32,
    pub window_samples: usize,
    pub hop_samples: usize,
}

fn ms_to_samples(ms: f64, sample_rate: u32, what: &str) -> Result<usize> {
    let exact = ms * f64::from(sample_rate) / 1000.0;
    let rounded = exact.round();
    if !(exact.is_finite() && rounded >= 1.0 && (exact - rounded).abs() < 1e-6) {
        return Err(Error::Config(format!(
            "{what} of {ms} ms is not a whole number of samples at {sample_rate} Hz"
        )));
    }
    Ok(rounded as usize)
}

impl FramingConfig {
    pub fn new(sample_rate: u32, window_samples: usize, hop_samples: usize) -> Result<Self> {
        if sample_rate == 0 || hop_samples == 0 || window_samples < hop_samples {
            return Err(Error::Config(format!(
                "framing needs rate > 0 and window >= hop > 0 (rate {sample_rate}, window {window_samples}, hop {hop_samples})"
            )));
        }
        Ok(Self {
            sample_rate,
            window_samples,
            hop_samples,
        })
    }

    pub fn from_ms(window_ms: f64, hop_ms: f64, sample_rate: u32) -> Result<Self> {
        let window = ms_to_samples(window_ms, sample_rate, "window")?;
        let hop = ms_to_samples(hop_ms, sample_rate, "hop")?;
        Self::new(sample_rate, window, hop)
    }

    pub fn hop_ms(&self) -> f64 {
        self.hop_samples as f64 * 1000.0 / f64::from(self.sample_rate)
    }

    pub fn window_ms(&self) -> f64 {
        self.window_samples as f64 * 1000.0 / f64::from(self.sample_rate)
    }

    /// Labeled frames in a signal of `samples` samples.
    pub fn frame_count(&self, samples: usize) -> usize {
        samples / self.hop_samples
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawUtterance {
    pub id: String,
    pub sample_rate: u32,
    pub samples: Vec<f32>,
    /// One label per hop.
    pub labels: Vec<usize>,
}

impl RawUtterance {
    pub fn duration_ms(&self) -> f64 {
        self.samples.len() as f64 * 1000.0 / f64::from(self.sample_rate)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub alphabet: LabelAlphabet,
    pub hop_ms: f64,
    pub utterances: Vec<RawUtterance>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Re-indexes every label path against `target`, which must contain all
    /// of this dataset's label names.
    pub fn remap_to(mut self, target: &LabelAlphabet) -> Result<Self> {
        if &self.alphabet == target {
            return Ok(self);
        }
        let table: Vec<usize> = self
            .alphabet
            .names()
            .iter()
            .map(|n| {
                target.index_of(n).ok_or_else(|| {
                    Error::Argument(format!("label {n:?} is not in the model alphabet"))
                })
            })
            .collect::<Result<_>>()?;
        for u in &mut self.utterances {
            u.labels.iter_mut().for_each(|k| *k = table[*k]);
        }
        self.alphabet = target.clone();
        Ok(self)
    }
}

/// Zero mean, unit variance. Constant signals are only centered.
pub fn normalize(samples: &[f32]) -> Vec<f64> {
    let n = samples.len().max(1) as f64;
    let mean = samples.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let var = samples
        .iter()
        .map(|&v| (f64::from(v) - mean).powi(2))
        .sum::<f64>()
        / n;
    let scale = if var > 1e-24 { 1.0 / var.sqrt() } else { 1.0 };
    samples
        .iter()
        .map(|&v| (f64::from(v) - mean) * scale)
        .collect()
}

fn reflect(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    if m >= len as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Cuts a normalized utterance into one window per labeled hop. Window `t`
/// is centered on hop `t`; samples falling outside the signal are mirrored
/// back in (reflection without repeating the edge sample).
pub fn frame_signal(u: &RawUtterance, cfg: &FramingConfig) -> Result<Vec<FrameSeq>> {
    let frames = cfg.frame_count(u.samples.len());
    if u.labels.len() != frames && u.samples.len() >= cfg.window_samples {
        return Err(Error::LabelCount {
            id: u.id.clone(),
            expected: frames,
            actual: u.labels.len(),
        });
    }
    frame_samples(&u.id, &u.samples, u.sample_rate, cfg)
}

/// Framing of an unlabeled signal; `id` only names it in errors.
pub fn frame_samples(
    id: &str,
    samples: &[f32],
    sample_rate: u32,
    cfg: &FramingConfig,
) -> Result<Vec<FrameSeq>> {
    if sample_rate != cfg.sample_rate {
        return Err(Error::Utterance {
            id: id.to_string(),
            message: format!(
                "sampled at {sample_rate} Hz, framing expects {} Hz",
                cfg.sample_rate
            ),
        });
    }
    let n = samples.len();
    if n < cfg.window_samples {
        return Err(Error::Utterance {
            id: id.to_string(),
            message: format!(
                "signal has {n} samples, at least {} are needed for one window",
                cfg.window_samples
            ),
        });
    }
    let x = normalize(samples);
    let lead = ((cfg.window_samples - cfg.hop_samples) / 2) as isize;
    (0..cfg.frame_count(n))
        .map(|t| {
            let start = (t * cfg.hop_samples) as isize - lead;
            let w: Vec<f64> = (0..cfg.window_samples as isize)
                .map(|j| x[reflect(start + j, n)])
                .collect();
            FrameSeq::from_samples(&w)
        })
        .collect()
}
