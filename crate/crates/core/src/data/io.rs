//! Manifest, signal and label files.
//!
//! A manifest is a text file with two header directives followed by one
//! utterance per line:
//!
//! ```text
//! #labels c0 c1 c2
//! #hop_ms 10
//! utt0000 utt0000.sig utt0000.lab
//! ```
//!
//! Paths are relative to the manifest's directory. A signal file is the
//! magic `RSQS`, a little-endian `u32` sample rate, then little-endian `f32`
//! samples. A label file holds whitespace-separated label names, one per hop.

use std::fs;
use std::path::{Path, PathBuf};

use super::{Dataset, FramingConfig, LabelAlphabet, RawUtterance};
use crate::error::{Error, Result};

pub const SIGNAL_MAGIC: &[u8; 4] = b"RSQS";

pub fn write_signal(path: &Path, sample_rate: u32, samples: &[f32]) -> Result<()> {
    let mut buf = Vec::with_capacity(8 + 4 * samples.len());
    buf.extend_from_slice(SIGNAL_MAGIC);
    buf.extend_from_slice(&sample_rate.to_le_bytes());
    for s in samples {
        buf.extend_from_slice(&s.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads a signal file; `id` names the utterance in error messages.
pub fn read_signal(path: &Path, id: &str) -> Result<(u32, Vec<f32>)> {
    let bytes = fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile {
                id: id.to_string(),
                path: path.to_path_buf(),
            }
        } else {
            Error::io(path, e)
        }
    })?;
    if bytes.len() < 8 || &bytes[..4] != SIGNAL_MAGIC {
        return Err(Error::BadMagic {
            id: id.to_string(),
            path: path.to_path_buf(),
        });
    }
    let rate = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    let body = &bytes[8..];
    if body.len() % 4 != 0 {
        return Err(Error::Utterance {
            id: id.to_string(),
            message: format!("{} has a truncated sample", path.display()),
        });
    }
    let samples = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok((rate, samples))
}

fn bad_manifest(message: impl Into<String>) -> Error {
    Error::Format {
        what: "manifest",
        message: message.into(),
    }
}

pub fn load_dataset(manifest: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let base = manifest.parent().unwrap_or_else(|| Path::new("."));
    let mut alphabet: Option<LabelAlphabet> = None;
    let mut hop_ms: Option<f64> = None;
    let mut entries = Vec::new();

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let mut parts = rest.split_whitespace();
            match parts.next() {
                Some("labels") => alphabet = Some(LabelAlphabet::new(parts)?),
                Some("hop_ms") => {
                    let v = parts.next().and_then(|s| s.parse::<f64>().ok());
                    hop_ms = Some(v.filter(|h| *h > 0.0).ok_or_else(|| {
                        bad_manifest(format!("line {}: bad #hop_ms value", lineno + 1))
                    })?);
                }
                _ => {} // comment
            }
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(bad_manifest(format!(
                "line {}: expected `<id> <signal-file> <label-file>`",
                lineno + 1
            )));
        }
        entries.push((
            fields[0].to_string(),
            base.join(fields[1]),
            base.join(fields[2]),
        ));
    }

    if entries.is_empty() {
        // nothing to validate against, so headers are optional here
        return Ok(Dataset {
            alphabet: alphabet.unwrap_or_else(LabelAlphabet::empty),
            hop_ms: hop_ms.unwrap_or(10.0),
            utterances: Vec::new(),
        });
    }
    let alphabet = alphabet.ok_or_else(|| bad_manifest("missing #labels header"))?;
    let hop_ms = hop_ms.ok_or_else(|| bad_manifest("missing #hop_ms header"))?;

    let utterances = entries
        .into_iter()
        .map(|(id, sig, lab)| load_utterance(id, &sig, &lab, &alphabet, hop_ms))
        .collect::<Result<_>>()?;
    Ok(Dataset {
        alphabet,
        hop_ms,
        utterances,
    })
}

fn load_utterance(
    id: String,
    sig: &Path,
    lab: &Path,
    alphabet: &LabelAlphabet,
    hop_ms: f64,
) -> Result<RawUtterance> {
    let (sample_rate, samples) = read_signal(sig, &id)?;
    let text = fs::read_to_string(lab).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile {
                id: id.clone(),
                path: lab.to_path_buf(),
            }
        } else {
            Error::io(lab, e)
        }
    })?;
    let names: Vec<&str> = text.split_whitespace().collect();
    let labels = alphabet.encode(&names).map_err(|bad| Error::Utterance {
        id: id.clone(),
        message: format!("unknown label {bad:?}"),
    })?;
    if sample_rate == 0 || samples.is_empty() {
        return Err(Error::Utterance {
            id,
            message: "empty signal or zero sample rate".into(),
        });
    }
    let hop = FramingConfig::from_ms(hop_ms, hop_ms, sample_rate)
        .map_err(|e| Error::Utterance {
            id: id.clone(),
            message: e.to_string(),
        })?
        .hop_samples;
    let expected = samples.len() / hop;
    if labels.len() != expected {
        return Err(Error::LabelCount {
            id,
            expected,
            actual: labels.len(),
        });
    }
    Ok(RawUtterance {
        id,
        sample_rate,
        samples,
        labels,
    })
}

/// Writes `<id>.sig` and `<id>.lab` next to the manifest.
pub fn save_dataset(dataset: &Dataset, manifest: &Path) -> Result<()> {
    let base: PathBuf = manifest
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    if !base.as_os_str().is_empty() {
        fs::create_dir_all(&base).map_err(|e| Error::io(&base, e))?;
    }
    let mut text = format!(
        "#labels {}\n#hop_ms {}\n",
        dataset.alphabet.names().join(" "),
        dataset.hop_ms
    );
    for u in &dataset.utterances {
        let sig = format!("{}.sig", u.id);
        let lab = format!("{}.lab", u.id);
        write_signal(&base.join(&sig), u.sample_rate, &u.samples)?;
        let mut names = dataset.alphabet.decode(&u.labels).join(" ");
        names.push('\n');
        let lab_path = base.join(&lab);
        fs::write(&lab_path, names).map_err(|e| Error::io(&lab_path, e))?;
        text.push_str(&format!("{} {sig} {lab}\n", u.id));
    }
    fs::write(manifest, text).map_err(|e| Error::io(manifest, e))
}
