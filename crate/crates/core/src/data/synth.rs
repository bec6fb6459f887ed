//! Synthetic corpus: each utterance is a chain of tone segments, class `k`
//! sounding at `300 * (k + 1)` Hz with a random phase, plus white Gaussian
//! noise at a chosen SNR. Segment lengths are whole hops so labels line up
//! exactly with segment boundaries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Dataset, FramingConfig, LabelAlphabet, RawUtterance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub classes: usize,
    pub utterances: usize,
    pub sample_rate: u32,
    pub hop_ms: f64,
    pub min_segment_ms: f64,
    pub max_segment_ms: f64,
    pub min_segments: usize,
    pub max_segments: usize,
    /// Signal-to-noise ratio in dB; `f64::INFINITY` disables noise.
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 5,
            utterances: 100,
            sample_rate: 8000,
            hop_ms: 10.0,
            min_segment_ms: 30.0,
            max_segment_ms: 200.0,
            min_segments: 3,
            max_segments: 6,
            snr_db: 20.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn class_frequency(k: usize) -> f64 {
        300.0 * (k as f64 + 1.0)
    }

    fn validate(&self) -> Result<(usize, usize, usize)> {
        if self.classes < 2 {
            return Err(Error::Argument(format!(
                "need at least 2 classes, got {}",
                self.classes
            )));
        }
        let nyquist = f64::from(self.sample_rate) / 2.0;
        let top = Self::class_frequency(self.classes - 1);
        if top >= nyquist {
            return Err(Error::Argument(format!(
                "class {} tone at {top} Hz is not below the {nyquist} Hz Nyquist limit",
                self.classes - 1
            )));
        }
        let hop = FramingConfig::from_ms(self.hop_ms, self.hop_ms, self.sample_rate)?.hop_samples;
        let min_hops = (self.min_segment_ms / self.hop_ms).ceil().max(1.0) as usize;
        let max_hops = (self.max_segment_ms / self.hop_ms).floor() as usize;
        if max_hops < min_hops {
            return Err(Error::Argument(format!(
                "no whole number of {} ms hops fits in {}..{} ms segments",
                self.hop_ms, self.min_segment_ms, self.max_segment_ms
            )));
        }
        if self.min_segments == 0 || self.max_segments < self.min_segments {
            return Err(Error::Argument(format!(
                "bad segment count range {}..={}",
                self.min_segments, self.max_segments
            )));
        }
        if self.snr_db.is_nan() {
            return Err(Error::Argument("SNR is NaN".into()));
        }
        Ok((hop, min_hops, max_hops))
    }
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<Dataset> {
    let (hop, min_hops, max_hops) = cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise_std = if cfg.snr_db.is_infinite() && cfg.snr_db > 0.0 {
        0.0
    } else {
        // unit-amplitude sine has power 1/2
        (0.5 / 10f64.powf(cfg.snr_db / 10.0)).sqrt()
    };
    let noise = Normal::new(0.0, noise_std.max(f64::MIN_POSITIVE)).expect("valid std");
    let rate = f64::from(cfg.sample_rate);

    let mut utterances = Vec::with_capacity(cfg.utterances);
    for n in 0..cfg.utterances {
        let segments = rng.gen_range(cfg.min_segments..=cfg.max_segments);
        let mut samples = Vec::new();
        let mut labels = Vec::new();
        let mut prev: Option<usize> = None;
        for _ in 0..segments {
            let class = match prev {
                None => rng.gen_range(0..cfg.classes),
                Some(p) => {
                    // consecutive segments always change class
                    let k = rng.gen_range(0..cfg.classes - 1);
                    if k >= p {
                        k + 1
                    } else {
                        k
                    }
                }
            };
            prev = Some(class);
            let hops = rng.gen_range(min_hops..=max_hops);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let omega = std::f64::consts::TAU * SynthConfig::class_frequency(class) / rate;
            for i in 0..hops * hop {
                let mut v = (omega * i as f64 + phase).sin();
                if noise_std > 0.0 {
                    v += noise.sample(&mut rng);
                }
                samples.push(v as f32);
            }
            labels.extend(std::iter::repeat(class).take(hops));
        }
        utterances.push(RawUtterance {
            id: format!("utt{n:04}"),
            sample_rate: cfg.sample_rate,
            samples,
            labels,
        });
    }
    Ok(Dataset {
        alphabet: LabelAlphabet::new((0..cfg.classes).map(|k| format!("c{k}")))?,
        hop_ms: cfg.hop_ms,
        utterances,
    })
}
