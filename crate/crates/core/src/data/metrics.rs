use std::collections::HashMap;
use std::ops::{Add, AddAssign};

use super::LabelAlphabet;
use crate::error::{Error, Result};

/// Merges runs of identical consecutive labels.
pub fn collapse_repeats<T: PartialEq + Clone>(framewise: &[T]) -> Vec<T> {
    let mut out: Vec<T> = Vec::with_capacity(framewise.len());
    for x in framewise {
        if out.last() != Some(x) {
            out.push(x.clone());
        }
    }
    out
}

/// Substitution, deletion and insertion counts of a minimum-cost alignment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EditCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub reference_len: usize,
}

impl EditCounts {
    pub fn distance(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    /// `1 - (S + D + I) / N`; negative when the hypothesis is mostly
    /// insertions.
    pub fn accuracy(&self) -> f64 {
        if self.reference_len == 0 {
            return f64::NAN;
        }
        1.0 - self.distance() as f64 / self.reference_len as f64
    }
}

impl Add for EditCounts {
    type Output = EditCounts;

    fn add(self, o: EditCounts) -> EditCounts {
        EditCounts {
            substitutions: self.substitutions + o.substitutions,
            deletions: self.deletions + o.deletions,
            insertions: self.insertions + o.insertions,
            reference_len: self.reference_len + o.reference_len,
        }
    }
}

impl AddAssign for EditCounts {
    fn add_assign(&mut self, o: EditCounts) {
        *self = *self + o;
    }
}

impl std::iter::Sum for EditCounts {
    fn sum<I: Iterator<Item = EditCounts>>(iter: I) -> Self {
        iter.fold(EditCounts::default(), Add::add)
    }
}

/// Unit-cost Levenshtein alignment of `hyp` against `reference`.
///
/// When several alignments share the minimum cost, backtracking prefers a
/// match or substitution, then a deletion, then an insertion.
pub fn edit_distance<T: PartialEq>(reference: &[T], hyp: &[T]) -> Result<EditCounts> {
    if reference.is_empty() {
        return Err(Error::Argument("reference sequence is empty".into()));
    }
    let (n, m) = (reference.len(), hyp.len());
    let w = m + 1;
    let mut cost = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        cost[i * w] = i;
    }
    for j in 0..=m {
        cost[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = cost[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hyp[j - 1]);
            let del = cost[(i - 1) * w + j] + 1;
            let ins = cost[i * w + j - 1] + 1;
            cost[i * w + j] = sub.min(del).min(ins);
        }
    }

    let mut counts = EditCounts {
        reference_len: n,
        ..Default::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = cost[i * w + j];
        if i > 0 && j > 0 {
            let diff = usize::from(reference[i - 1] != hyp[j - 1]);
            if here == cost[(i - 1) * w + j - 1] + diff {
                counts.substitutions += diff;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == cost[(i - 1) * w + j] + 1 {
            counts.deletions += 1;
            i -= 1;
        } else {
            counts.insertions += 1;
            j -= 1;
        }
    }
    Ok(counts)
}

/// A total relabeling from one alphabet onto another, e.g. from per-state
/// classes down to their base phone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMapping {
    target: LabelAlphabet,
    table: Vec<usize>,
}

impl LabelMapping {
    /// `pairs` maps source label names to target label names. Every source
    /// label must be covered.
    pub fn new(
        source: &LabelAlphabet,
        target: LabelAlphabet,
        pairs: &HashMap<String, String>,
    ) -> Result<Self> {
        let missing: Vec<&str> = source
            .names()
            .iter()
            .filter(|n| !pairs.contains_key(n.as_str()))
            .map(String::as_str)
            .collect();
        if !missing.is_empty() {
            return Err(Error::Argument(format!(
                "mapping does not cover labels: {}",
                missing.join(", ")
            )));
        }
        let table = source
            .names()
            .iter()
            .map(|n| {
                let to = &pairs[n];
                target.index_of(to).ok_or_else(|| {
                    Error::Argument(format!("mapping target {to:?} is not in the target alphabet"))
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { target, table })
    }

    /// Maps `<base>_s<digits>` labels onto `<base>`; other labels map to
    /// themselves. Target labels keep first-appearance order.
    pub fn strip_state_suffix(source: &LabelAlphabet) -> Result<Self> {
        let base = |n: &str| -> String {
            match n.rsplit_once("_s") {
                Some((b, d))
                    if !b.is_empty() && !d.is_empty() && d.bytes().all(|c| c.is_ascii_digit()) =>
                {
                    b.to_string()
                }
                _ => n.to_string(),
            }
        };
        let mut targets: Vec<String> = Vec::new();
        let mut pairs = HashMap::new();
        for n in source.names() {
            let b = base(n);
            if !targets.contains(&b) {
                targets.push(b.clone());
            }
            pairs.insert(n.clone(), b);
        }
        Self::new(source, LabelAlphabet::new(targets)?, &pairs)
    }

    pub fn target(&self) -> &LabelAlphabet {
        &self.target
    }

    pub fn apply(&self, path: &[usize]) -> Vec<usize> {
        path.iter().map(|&k| self.table[k]).collect()
    }
}

pub fn map_labels(path: &[usize], mapping: &LabelMapping) -> Result<Vec<usize>> {
    if let Some(&k) = path.iter().find(|&&k| k >= mapping.table.len()) {
        return Err(Error::Index(format!(
            "label {k} outside the mapping's source alphabet"
        )));
    }
    Ok(mapping.apply(path))
}
