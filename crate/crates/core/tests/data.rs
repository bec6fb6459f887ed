use std::fs;

use proptest::prelude::*;
use tempfile::TempDir;

use rawseq::data::*;

/// Levenshtein distance straight from its recursive definition.
fn lev(a: &[u8], b: &[u8]) -> usize {
    match (a.split_last(), b.split_last()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => (lev(ra, rb) + usize::from(x != y))
            .min(lev(ra, b) + 1)
            .min(lev(a, rb) + 1),
    }
}

fn all_words(max_len: usize, letters: u8) -> Vec<Vec<u8>> {
    let mut out = vec![vec![]];
    let mut layer = vec![vec![]];
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|w: &Vec<u8>| {
                (0..letters).map(move |c| {
                    let mut v = w.clone();
                    v.push(c);
                    v
                })
            })
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

#[test]
fn edit_distance_matches_recursive_definition_exhaustively() {
    let words = all_words(4, 3);
    for r in &words {
        for h in &words {
            if r.is_empty() {
                assert!(edit_distance(r, h).is_err());
                continue;
            }
            let c = edit_distance(r, h).unwrap();
            assert_eq!(c.distance(), lev(r, h), "{r:?} {h:?}");
            assert_eq!(c.reference_len, r.len());
            assert_eq!(c.deletions as isize - c.insertions as isize, r.len() as isize - h.len() as isize);
        }
    }
}

#[test]
fn edit_distance_examples() {
    let c = edit_distance(&["a", "b", "c"], &["a", "b", "d"]).unwrap();
    assert_eq!((c.substitutions, c.deletions, c.insertions), (1, 0, 0));
    assert!((c.accuracy() - 2.0 / 3.0).abs() < 1e-15);
    let c = edit_distance(&[1], &[2, 3, 4, 5]).unwrap();
    assert!(c.accuracy() < 0.0);
}

fn word() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..3, 1..7)
}

proptest! {
    #[test]
    fn edit_distance_on_random_pairs(a in word(), b in word()) {
        prop_assert_eq!(edit_distance(&a, &b).unwrap().distance(), lev(&a, &b));
    }

    #[test]
    fn edit_distance_is_a_metric(a in word(), b in word(), c in word()) {
        let ab = edit_distance(&a, &b).unwrap();
        let ba = edit_distance(&b, &a).unwrap();
        prop_assert_eq!(ab.distance(), ba.distance());
        prop_assert_eq!(ab.deletions as isize - ab.insertions as isize,
                        ba.insertions as isize - ba.deletions as isize);
        prop_assert_eq!(ab.distance() == 0, a == b);
        let ac = edit_distance(&a, &c).unwrap().distance();
        let cb = edit_distance(&c, &b).unwrap().distance();
        prop_assert!(ab.distance() <= ac + cb);
    }

    #[test]
    fn collapse_is_idempotent(v in prop::collection::vec(0u8..3, 1..30)) {
        let once = collapse_repeats(&v);
        prop_assert_eq!(collapse_repeats(&once), once.clone());
        prop_assert!(once.windows(2).all(|w| w[0] != w[1]));
        prop_assert_eq!(once.first(), v.first());
    }

    #[test]
    fn window_count_equals_label_count(
        seed in 0u64..1000,
        hop_ms in prop::sample::select(vec![5.0, 10.0]),
        context in 1usize..6,
    ) {
        let data = synth_generate(&SynthConfig { utterances: 3, seed, hop_ms, ..SynthConfig::default() }).unwrap();
        let framing = FramingConfig::from_ms(hop_ms * context as f64, hop_ms, 8000).unwrap();
        for u in &data.utterances {
            let w = frame_signal(u, &framing).unwrap();
            prop_assert_eq!(w.len(), u.labels.len());
            prop_assert!(w.iter().all(|f| f.frames() == framing.window_samples));
        }
    }
}

#[test]
fn collapse_examples() {
    assert_eq!(collapse_repeats(&["a", "a", "b", "b", "b", "a"]), ["a", "b", "a"]);
    assert_eq!(collapse_repeats(&[7, 7, 7]), [7]);
    assert_eq!(collapse_repeats(&[1, 2, 3]), [1, 2, 3]);
}

#[test]
fn normalization_gives_zero_mean_unit_variance() {
    let x: Vec<f32> = (0..1000).map(|i| 3.0 + (i as f32 * 0.37).sin() * 5.0).collect();
    let y = normalize(&x);
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64;
    assert!(mean.abs() < 1e-12);
    assert!((var - 1.0).abs() < 1e-12);
    assert_eq!(normalize(&[2.0, 2.0, 2.0]), vec![0.0; 3]);
}

#[test]
fn framing_arithmetic() {
    let f = FramingConfig::from_ms(100.0, 10.0, 16000).unwrap();
    assert_eq!(f.window_samples, 1600);
    assert_eq!(f.frame_count(16000), 100);
    let f = FramingConfig::from_ms(100.0, 5.0, 16000).unwrap();
    assert_eq!((f.window_samples, f.hop_samples), (1600, 80));
    assert!(FramingConfig::from_ms(5.0, 10.0, 16000).is_err());
}

#[test]
fn equal_window_and_hop_tile_the_signal() {
    let samples: Vec<f32> = (0..40).map(|i| i as f32).collect();
    let u = RawUtterance {
        id: "u".into(),
        sample_rate: 1000,
        samples: samples.clone(),
        labels: vec![0; 4],
    };
    let f = FramingConfig::new(1000, 10, 10).unwrap();
    let w = frame_signal(&u, &f).unwrap();
    let norm = normalize(&samples);
    let joined: Vec<f64> = w.iter().flat_map(|x| x.as_slice().to_vec()).collect();
    assert_eq!(joined, norm);
}

#[test]
fn short_signal_error_names_minimum() {
    let u = RawUtterance {
        id: "short".into(),
        sample_rate: 1000,
        samples: vec![0.5; 5],
        labels: vec![],
    };
    let e = frame_signal(&u, &FramingConfig::new(1000, 10, 5).unwrap())
        .unwrap_err()
        .to_string();
    assert!(e.contains("10") && e.contains("short"), "{e}");
}

#[test]
fn dataset_round_trip_is_byte_exact() {
    let dir = TempDir::new().unwrap();
    let data = synth_generate(&SynthConfig {
        utterances: 6,
        seed: 3,
        ..SynthConfig::default()
    })
    .unwrap();
    let m1 = dir.path().join("a/manifest.txt");
    let m2 = dir.path().join("b/manifest.txt");
    fs::create_dir_all(m1.parent().unwrap()).unwrap();
    fs::create_dir_all(m2.parent().unwrap()).unwrap();
    save_dataset(&data, &m1).unwrap();
    let back = load_dataset(&m1).unwrap();
    assert_eq!(back, data);
    save_dataset(&back, &m2).unwrap();
    for e in fs::read_dir(m1.parent().unwrap()).unwrap() {
        let name = e.unwrap().file_name();
        assert_eq!(
            fs::read(m1.parent().unwrap().join(&name)).unwrap(),
            fs::read(m2.parent().unwrap().join(&name)).unwrap()
        );
    }
}

#[test]
fn synthetic_segments_follow_labels() {
    let data = synth_generate(&SynthConfig {
        classes: 2,
        utterances: 20,
        min_segments: 2,
        max_segments: 2,
        ..SynthConfig::default()
    })
    .unwrap();
    for u in &data.utterances {
        assert_eq!(collapse_repeats(&u.labels).len(), 2);
        assert_eq!(u.samples.len(), u.labels.len() * 80);
    }
}

#[test]
fn state_labels_collapse_to_phones() {
    let states = LabelAlphabet::new(["aa_s1", "aa_s2", "aa_s3", "b_s1", "b_s2", "b_s3"]).unwrap();
    let m = LabelMapping::strip_state_suffix(&states).unwrap();
    let phones = map_labels(&[0, 1, 2, 3, 4, 5, 0], &m).unwrap();
    let names = m.target().decode(&collapse_repeats(&phones));
    assert_eq!(names, ["aa", "b", "aa"]);
}
