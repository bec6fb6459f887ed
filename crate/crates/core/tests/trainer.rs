use std::fs;

use tempfile::TempDir;

use rawseq::crf::log_likelihood;
use rawseq::data::{synth_generate, Dataset, FramingConfig, SynthConfig};
use rawseq::model::Recognizer;
use rawseq::network::{NetworkConfig, StageConfig};
use rawseq::trainer::*;

fn small_config() -> NetworkConfig {
    NetworkConfig {
        input_dim: 1,
        window_samples: 240,
        stages: vec![StageConfig::new(10, 5, 4, 2), StageConfig::new(5, 1, 4, 3)],
        hidden_units: 8,
        num_classes: 3,
    }
}

fn corpus(utts: usize, seed: u64) -> Dataset {
    synth_generate(&SynthConfig {
        classes: 3,
        utterances: utts,
        seed,
        max_segment_ms: 60.0,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn recognizer(data: &Dataset, seed: u64) -> Recognizer {
    Recognizer::build(
        small_config(),
        data.alphabet.clone(),
        FramingConfig::new(8000, 240, 80).unwrap(),
        seed,
    )
    .unwrap()
}

fn total_ll(rec: &Recognizer, u: &PreparedUtterance) -> f64 {
    let (s, _) = rec.network.score_sequence(&u.windows).unwrap();
    log_likelihood(&s, &rec.crf, &u.labels).unwrap()
}

#[test]
fn small_steps_increase_likelihood() {
    let data = corpus(1, 5);
    let mut rec = recognizer(&data, 1);
    let utt = &prepare(&rec, &data).unwrap()[0];
    let mut prev = f64::NEG_INFINITY;
    let mut rises = 0;
    for _ in 0..100 {
        let l = train_step(&mut rec, utt, 1e-3).unwrap();
        if l >= prev {
            rises += 1;
        }
        prev = l;
    }
    assert!(rises >= 95, "{rises} of 100 steps were non-decreasing");
    assert!(total_ll(&rec, utt) > train_step(&mut recognizer(&data, 1), utt, 0.0).unwrap());
}

#[test]
fn gradient_matches_finite_differences() {
    let data = corpus(1, 6);
    let mut rec = recognizer(&data, 2);
    rec.crf
        .transitions_mut()
        .iter_mut()
        .enumerate()
        .for_each(|(i, v)| *v = (i as f64 * 0.37).sin());
    let mut utt = prepare(&rec, &data).unwrap().remove(0);
    utt.windows.truncate(6);
    utt.labels.truncate(6);
    let g = gradient(&rec, &utt).unwrap();
    let h = 1e-5;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-3);
    let mut probe = rec.clone();
    for i in (0..rec.network.param_count()).step_by(3) {
        let orig = probe.network.params().as_slice()[i];
        probe.network.params_mut().as_mut_slice()[i] = orig + h;
        let up = total_ll(&probe, &utt);
        probe.network.params_mut().as_mut_slice()[i] = orig - h;
        let dn = total_ll(&probe, &utt);
        probe.network.params_mut().as_mut_slice()[i] = orig;
        let num = (up - dn) / (2.0 * h);
        assert!(rel(g.network[i], num) <= 1e-4, "theta[{i}]: {} vs {num}", g.network[i]);
    }
    for i in 0..9 {
        let orig = probe.crf.transitions()[i];
        probe.crf.transitions_mut()[i] = orig + h;
        let up = total_ll(&probe, &utt);
        probe.crf.transitions_mut()[i] = orig - h;
        let dn = total_ll(&probe, &utt);
        probe.crf.transitions_mut()[i] = orig;
        assert!(rel(g.crf.trans[i], (up - dn) / (2.0 * h)) <= 1e-4);
    }
}

#[test]
fn checkpoint_reproduces_recorded_accuracy() {
    let dir = TempDir::new().unwrap();
    let train_data = corpus(12, 7);
    let valid_data = corpus(4, 8);
    let rec = recognizer(&train_data, 3);
    let tr = prepare(&rec, &train_data).unwrap();
    let va = prepare(&rec, &valid_data).unwrap();
    let ckpt = dir.path().join("best.bin");
    let cfg = TrainConfig {
        learning_rate: 0.01,
        max_epochs: 4,
        patience: 4,
        checkpoint_path: Some(ckpt.clone()),
        ..TrainConfig::default()
    };
    let out = train(rec, &tr, &va, &cfg).unwrap();
    let best = out
        .log
        .iter()
        .map(|m| m.valid_accuracy)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(out.state.best_accuracy, best);
    let loaded = Recognizer::load(&ckpt).unwrap();
    assert_eq!(loaded, out.model);
    assert_eq!(evaluate_prepared(&loaded, &va, None).unwrap().accuracy, best);
}

#[test]
fn seeds_config_and_data_determine_the_log() {
    let dir = TempDir::new().unwrap();
    let train_data = corpus(6, 9);
    let valid_data = corpus(2, 10);
    let run = |name: &str| {
        let rec = recognizer(&train_data, 4);
        let tr = prepare(&rec, &train_data).unwrap();
        let va = prepare(&rec, &valid_data).unwrap();
        let metrics = dir.path().join(name);
        let cfg = TrainConfig {
            learning_rate: 0.01,
            max_epochs: 3,
            metrics_path: Some(metrics.clone()),
            ..TrainConfig::default()
        };
        let out = train(rec, &tr, &va, &cfg).unwrap();
        (fs::read(metrics).unwrap(), out.model.to_bytes())
    };
    let (m1, b1) = run("a.tsv");
    let (m2, b2) = run("b.tsv");
    assert_eq!(m1, m2);
    assert_eq!(b1, b2);
    assert_eq!(String::from_utf8(m1).unwrap().lines().count(), 3);
}

#[test]
fn non_finite_likelihood_names_the_utterance() {
    let data = corpus(1, 11);
    let mut rec = recognizer(&data, 5);
    rec.crf.transitions_mut()[0] = f64::INFINITY;
    let utt = &prepare(&rec, &data).unwrap()[0];
    let e = train_step(&mut rec, utt, 0.1).unwrap_err().to_string();
    assert!(e.contains("utt0000"), "{e}");
}

#[test]
fn pooled_accuracy_weights_by_reference_length() {
    let data = corpus(5, 12);
    let rec = recognizer(&data, 6);
    let report = evaluate(&rec, &data).unwrap();
    let errs: usize = report.utterances.iter().map(|u| u.counts.distance()).sum();
    let n: usize = report.utterances.iter().map(|u| u.counts.reference_len).sum();
    assert_eq!(report.accuracy, 1.0 - errs as f64 / n as f64);
}
