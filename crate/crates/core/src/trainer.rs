//! Joint training of network and CRF by per-utterance stochastic gradient
//! ascent on the sequence log-likelihood, with early stopping on validation
//! phoneme accuracy.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::crf::{likelihood_gradients, viterbi, CrfGradients};
use crate::data::{collapse_repeats, edit_distance, Dataset, EditCounts, LabelMapping};
use crate::error::{Error, Result};
use crate::model::Recognizer;
use crate::numkernels::FrameSeq;

pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub shuffle_seed: u64,
    /// Best model so far is written here after every improvement.
    pub checkpoint_path: Option<PathBuf>,
    /// One `epoch<TAB>meanNLL<TAB>validAcc` line per epoch.
    pub metrics_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: DEFAULT_LEARNING_RATE,
            max_epochs: 30,
            patience: 5,
            shuffle_seed: 0,
            checkpoint_path: None,
            metrics_path: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainState {
    pub epoch: usize,
    pub best_accuracy: f64,
    pub best_epoch: usize,
    pub epochs_since_improvement: usize,
    pub mean_nll: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_nll: f64,
    pub valid_accuracy: f64,
}

impl EpochMetrics {
    pub fn log_line(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.6}",
            self.epoch, self.mean_nll, self.valid_accuracy
        )
    }
}

/// An utterance already cut into network input windows.
#[derive(Debug, Clone)]
pub struct PreparedUtterance {
    pub id: String,
    pub windows: Vec<FrameSeq>,
    pub labels: Vec<usize>,
}

pub fn prepare(rec: &Recognizer, data: &Dataset) -> Result<Vec<PreparedUtterance>> {
    if data.alphabet != rec.alphabet {
        return Err(Error::Config(
            "dataset alphabet differs from the model's; remap it first".into(),
        ));
    }
    data.utterances
        .par_iter()
        .map(|u| {
            Ok(PreparedUtterance {
                id: u.id.clone(),
                windows: rec.windows(u)?,
                labels: u.labels.clone(),
            })
        })
        .collect()
}

/// Log-likelihood of one utterance and its gradient with respect to every
/// network parameter (flat layout) and every CRF parameter.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub log_likelihood: f64,
    pub network: Vec<f64>,
    pub crf: CrfGradients,
}

pub fn gradient(rec: &Recognizer, utt: &PreparedUtterance) -> Result<Gradient> {
    let (scores, tapes) = rec.network.score_sequence(&utt.windows)?;
    let crf = likelihood_gradients(&scores, &rec.crf, &utt.labels)?;
    let mut network = vec![0.0; rec.network.param_count()];
    rec.network.backward_sequence(&tapes, &crf.scores, &mut network)?;
    Ok(Gradient {
        log_likelihood: crf.log_likelihood,
        network,
        crf,
    })
}

/// One ascent step `p <- p + lr * dL/dp` on a single utterance. Returns the
/// log-likelihood before the update.
pub fn train_step(rec: &mut Recognizer, utt: &PreparedUtterance, lr: f64) -> Result<f64> {
    let g = gradient(rec, utt)?;
    let non_finite = |what: &str| Error::NonFinite {
        id: utt.id.clone(),
        what: what.to_string(),
    };
    if !g.log_likelihood.is_finite() {
        return Err(non_finite("log-likelihood"));
    }
    if !g.network.iter().all(|v| v.is_finite()) {
        return Err(non_finite("network gradient"));
    }
    if !g.crf.trans.iter().chain(&g.crf.init).all(|v| v.is_finite()) {
        return Err(non_finite("transition gradient"));
    }
    if lr != 0.0 {
        let ascend = |p: &mut [f64], d: &[f64]| {
            p.iter_mut().zip(d).for_each(|(p, d)| *p += lr * d);
        };
        ascend(rec.network.params_mut().as_mut_slice(), &g.network);
        ascend(rec.crf.transitions_mut(), &g.crf.trans);
        ascend(rec.crf.init_mut(), &g.crf.init);
    }
    Ok(g.log_likelihood)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub model: Recognizer,
    pub log: Vec<EpochMetrics>,
    pub state: TrainState,
}

pub fn train(
    rec: Recognizer,
    train_set: &[PreparedUtterance],
    valid_set: &[PreparedUtterance],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_observed(rec, train_set, valid_set, cfg, |_| {})
}

/// [`train`], calling `on_epoch` after every epoch's validation pass.
pub fn train_observed(
    mut rec: Recognizer,
    train_set: &[PreparedUtterance],
    valid_set: &[PreparedUtterance],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(Error::Argument(
            "training and validation sets must be non-empty".into(),
        ));
    }
    let mut metrics_out = match &cfg.metrics_path {
        Some(p) => Some(BufWriter::new(
            File::create(p).map_err(|e| Error::io(p, e))?,
        )),
        None => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut state = TrainState {
        epoch: 0,
        best_accuracy: f64::NEG_INFINITY,
        best_epoch: 0,
        epochs_since_improvement: 0,
        mean_nll: f64::NAN,
    };
    let mut best = rec.clone();
    let mut log = Vec::new();

    while state.epoch < cfg.max_epochs {
        state.epoch += 1;
        order.shuffle(&mut rng);
        let mut nll = 0.0;
        for &i in &order {
            nll -= train_step(&mut rec, &train_set[i], cfg.learning_rate)?;
        }
        state.mean_nll = nll / train_set.len() as f64;

        let acc = evaluate_prepared(&rec, valid_set, None)?.accuracy;
        let m = EpochMetrics {
            epoch: state.epoch,
            mean_nll: state.mean_nll,
            valid_accuracy: acc,
        };
        if let (Some(out), Some(path)) = (metrics_out.as_mut(), cfg.metrics_path.as_ref()) {
            writeln!(out, "{}", m.log_line())
                .and_then(|_| out.flush())
                .map_err(|e| Error::io(path, e))?;
        }
        on_epoch(&m);
        log.push(m);

        if acc > state.best_accuracy {
            state.best_accuracy = acc;
            state.best_epoch = state.epoch;
            state.epochs_since_improvement = 0;
            best = rec.clone();
            if let Some(p) = &cfg.checkpoint_path {
                best.save(p)?;
            }
        } else {
            state.epochs_since_improvement += 1;
            if state.epochs_since_improvement >= cfg.patience {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model: best,
        log,
        state,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceReport {
    pub id: String,
    pub counts: EditCounts,
    /// Collapsed hypothesis label sequence.
    pub hypothesis: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub totals: EditCounts,
    pub utterances: Vec<UtteranceReport>,
}

/// Viterbi-decodes every utterance, collapses repeated labels in hypothesis
/// and reference, and pools edit counts over the corpus. With a mapping,
/// both sides are relabeled before collapsing.
pub fn evaluate_prepared(
    rec: &Recognizer,
    data: &[PreparedUtterance],
    mapping: Option<&LabelMapping>,
) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::Argument("cannot evaluate an empty dataset".into()));
    }
    let utterances: Vec<UtteranceReport> = data
        .par_iter()
        .map(|u| {
            let scores = rec.scores(&u.windows)?;
            let (path, _) = viterbi(&scores, &rec.crf)?;
            let (hyp, reference) = match mapping {
                Some(m) => (m.apply(&path), m.apply(&u.labels)),
                None => (path, u.labels.clone()),
            };
            let hypothesis = collapse_repeats(&hyp);
            let counts = edit_distance(&collapse_repeats(&reference), &hypothesis)?;
            Ok(UtteranceReport {
                id: u.id.clone(),
                counts,
                hypothesis,
            })
        })
        .collect::<Result<_>>()?;
    let totals: EditCounts = utterances.iter().map(|u| u.counts).sum();
    Ok(EvalReport {
        accuracy: totals.accuracy(),
        totals,
        utterances,
    })
}

pub fn evaluate(rec: &Recognizer, data: &Dataset) -> Result<EvalReport> {
    evaluate_prepared(rec, &prepare(rec, data)?, None)
}
