//! Linear-chain CRF over per-frame network scores.
//!
//! A label path `i_1..i_T` scores
//! `init[i_1] + f_{i_1}(x_1) + sum_{t>=2} (f_{i_t}(x_t) + A[i_t][i_{t-1}])`.
//! The log-partition over all `K^T` paths is computed by the forward
//! log-sum-exp recursion in `O(T K^2)`; marginals for the likelihood
//! gradient come from the symmetric backward recursion.

use crate::error::{Error, Result};
use crate::numkernels::FrameSeq;

/// Label indices, 0-based.
pub type LabelPath = Vec<usize>;

/// `T x K` matrix of unnormalized class scores, entry `(t, k) = f_k(x_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeq {
    frames: usize,
    classes: usize,
    data: Vec<f64>,
}

impl ScoreSeq {
    pub fn new(frames: usize, classes: usize, data: Vec<f64>) -> Result<Self> {
        if frames == 0 || classes == 0 {
            return Err(Error::dim(format!(
                "score sequence must be non-empty, got {frames}x{classes}"
            )));
        }
        if data.len() != frames * classes {
            return Err(Error::dim(format!(
                "{} values cannot form {frames}x{classes} scores",
                data.len()
            )));
        }
        Ok(Self {
            frames,
            classes,
            data,
        })
    }

    pub fn zeros(frames: usize, classes: usize) -> Self {
        Self {
            frames,
            classes,
            data: vec![0.0; frames * classes],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::dim("ragged score rows"));
        }
        Self::new(rows.len(), k, rows.concat())
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    #[inline]
    pub fn get(&self, t: usize, k: usize) -> f64 {
        self.data[t * self.classes + k]
    }

    #[inline]
    pub fn set(&mut self, t: usize, k: usize, v: f64) {
        self.data[t * self.classes + k] = v;
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.classes..(t + 1) * self.classes]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.classes..(t + 1) * self.classes]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl From<FrameSeq> for ScoreSeq {
    fn from(f: FrameSeq) -> Self {
        let (frames, classes) = (f.frames(), f.dim());
        Self {
            frames,
            classes,
            data: f.into_vec(),
        }
    }
}

/// Transition and initial-label scores. `trans[i * K + j]` scores moving from
/// label `j` at `t-1` to label `i` at `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfParams {
    classes: usize,
    trans: Vec<f64>,
    init: Vec<f64>,
}

impl CrfParams {
    pub fn zeros(classes: usize) -> Self {
        Self {
            classes,
            trans: vec![0.0; classes * classes],
            init: vec![0.0; classes],
        }
    }

    pub fn new(classes: usize, trans: Vec<f64>, init: Vec<f64>) -> Result<Self> {
        if classes == 0 || trans.len() != classes * classes || init.len() != classes {
            return Err(Error::dim(format!(
                "CRF with {classes} labels needs {} transitions and {classes} initial scores, got {} and {}",
                classes * classes,
                trans.len(),
                init.len()
            )));
        }
        if trans.iter().chain(&init).any(|v| !v.is_finite()) {
            return Err(Error::Argument("CRF parameters must be finite".into()));
        }
        Ok(Self {
            classes,
            trans,
            init,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Score of moving from label `from` to label `to`.
    #[inline]
    pub fn transition(&self, to: usize, from: usize) -> f64 {
        self.trans[to * self.classes + from]
    }

    pub fn transitions(&self) -> &[f64] {
        &self.trans
    }

    pub fn transitions_mut(&mut self) -> &mut [f64] {
        &mut self.trans
    }

    pub fn init(&self) -> &[f64] {
        &self.init
    }

    pub fn init_mut(&mut self) -> &mut [f64] {
        &mut self.init
    }

    pub fn param_count(&self) -> usize {
        self.trans.len() + self.init.len()
    }

    fn check(&self, scores: &ScoreSeq) -> Result<()> {
        if scores.classes() != self.classes {
            return Err(Error::dim(format!(
                "scores have {} classes, CRF has {}",
                scores.classes(),
                self.classes
            )));
        }
        Ok(())
    }
}

/// `log(sum_i exp(z_i))` with max-subtraction.
pub fn logadd(z: &[f64]) -> Result<f64> {
    if z.is_empty() {
        return Err(Error::Argument("logadd of an empty set".into()));
    }
    Ok(logadd_unchecked(z))
}

#[inline]
fn logadd_unchecked(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m == f64::INFINITY {
        return m;
    }
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn check_path(path: &[usize], frames: usize, classes: usize) -> Result<()> {
    if path.len() != frames {
        return Err(Error::dim(format!(
            "path has {} labels, sequence has {frames} frames",
            path.len()
        )));
    }
    if let Some((t, &k)) = path.iter().enumerate().find(|(_, &k)| k >= classes) {
        return Err(Error::Index(format!(
            "label {k} at frame {t} outside 0..{classes}"
        )));
    }
    Ok(())
}

pub fn path_score(scores: &ScoreSeq, params: &CrfParams, path: &[usize]) -> Result<f64> {
    params.check(scores)?;
    check_path(path, scores.frames(), scores.classes())?;
    let mut s = params.init[path[0]] + scores.get(0, path[0]);
    for t in 1..path.len() {
        s += scores.get(t, path[t]) + params.transition(path[t], path[t - 1]);
    }
    Ok(s)
}

/// Forward log-scores: `alpha[t][k]` is the logadd of all partial paths
/// ending in label `k` at frame `t`.
fn forward_table(scores: &ScoreSeq, params: &CrfParams) -> Vec<f64> {
    let (n, k) = (scores.frames(), scores.classes());
    let mut alpha = vec![0.0; n * k];
    for j in 0..k {
        alpha[j] = params.init[j] + scores.get(0, j);
    }
    let mut buf = vec![0.0; k];
    for t in 1..n {
        let (prev, cur) = alpha.split_at_mut(t * k);
        let prev = &prev[(t - 1) * k..];
        for i in 0..k {
            // grouped like path_score so a single-label chain matches it exactly
            let node = scores.get(t, i);
            for j in 0..k {
                buf[j] = prev[j] + (node + params.transition(i, j));
            }
            cur[i] = logadd_unchecked(&buf);
        }
    }
    alpha
}

/// Backward log-scores: `beta[t][j]` is the logadd of all path
/// continuations after frame `t` given label `j` at `t`.
fn backward_table(scores: &ScoreSeq, params: &CrfParams) -> Vec<f64> {
    let (n, k) = (scores.frames(), scores.classes());
    let mut beta = vec![0.0; n * k];
    let mut buf = vec![0.0; k];
    for t in (0..n - 1).rev() {
        let (cur, next) = beta.split_at_mut((t + 1) * k);
        let cur = &mut cur[t * k..];
        let next = &next[..k];
        for j in 0..k {
            for i in 0..k {
                buf[i] = params.transition(i, j) + scores.get(t + 1, i) + next[i];
            }
            cur[j] = logadd_unchecked(&buf);
        }
    }
    beta
}

/// Log-partition: logadd of `path_score` over every label path.
pub fn forward_logsum(scores: &ScoreSeq, params: &CrfParams) -> Result<f64> {
    params.check(scores)?;
    let k = scores.classes();
    let alpha = forward_table(scores, params);
    Ok(logadd_unchecked(&alpha[(scores.frames() - 1) * k..]))
}

pub fn log_likelihood(scores: &ScoreSeq, params: &CrfParams, gold: &[usize]) -> Result<f64> {
    let s = path_score(scores, params, gold)?;
    Ok(s - forward_logsum(scores, params)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrfGradients {
    pub log_likelihood: f64,
    pub scores: ScoreSeq,
    pub trans: Vec<f64>,
    pub init: Vec<f64>,
}

/// Exact gradient of the log-likelihood of `gold`: observed indicator counts
/// minus model-expected counts, for node scores, transitions and the initial
/// label.
pub fn likelihood_gradients(
    scores: &ScoreSeq,
    params: &CrfParams,
    gold: &[usize],
) -> Result<CrfGradients> {
    params.check(scores)?;
    check_path(gold, scores.frames(), scores.classes())?;
    let (n, k) = (scores.frames(), scores.classes());
    let alpha = forward_table(scores, params);
    let beta = backward_table(scores, params);
    let log_z = logadd_unchecked(&alpha[(n - 1) * k..]);

    let mut d_scores = ScoreSeq::zeros(n, k);
    for t in 0..n {
        let row = d_scores.row_mut(t);
        for (j, g) in row.iter_mut().enumerate() {
            *g = -(alpha[t * k + j] + beta[t * k + j] - log_z).exp();
        }
        row[gold[t]] += 1.0;
    }

    // the initial score enters exactly where the first node score does
    let d_init = d_scores.row(0).to_vec();

    let mut d_trans = vec![0.0; k * k];
    for t in 1..n {
        for i in 0..k {
            let tail = scores.get(t, i) + beta[t * k + i] - log_z;
            for j in 0..k {
                let p = (alpha[(t - 1) * k + j] + params.transition(i, j) + tail).exp();
                d_trans[i * k + j] -= p;
            }
        }
        d_trans[gold[t] * k + gold[t - 1]] += 1.0;
    }

    let s = path_score(scores, params, gold)?;
    Ok(CrfGradients {
        log_likelihood: s - log_z,
        scores: d_scores,
        trans: d_trans,
        init: d_init,
    })
}

/// Highest-scoring path. Ties go to the lowest label, both for the final
/// label and at every backtracking step. The returned score is
/// `path_score(path)`.
pub fn viterbi(scores: &ScoreSeq, params: &CrfParams) -> Result<(LabelPath, f64)> {
    params.check(scores)?;
    let (n, k) = (scores.frames(), scores.classes());
    let mut delta: Vec<f64> = (0..k).map(|j| params.init[j] + scores.get(0, j)).collect();
    let mut back = vec![0usize; n * k];
    let mut next = vec![0.0; k];
    for t in 1..n {
        for i in 0..k {
            let mut best = 0;
            let mut best_val = delta[0] + params.transition(i, 0);
            for j in 1..k {
                let v = delta[j] + params.transition(i, j);
                if v > best_val {
                    best = j;
                    best_val = v;
                }
            }
            back[t * k + i] = best;
            next[i] = best_val + scores.get(t, i);
        }
        std::mem::swap(&mut delta, &mut next);
    }
    let mut last = 0;
    for j in 1..k {
        if delta[j] > delta[last] {
            last = j;
        }
    }
    let mut path = vec![0usize; n];
    path[n - 1] = last;
    for t in (1..n).rev() {
        path[t - 1] = back[t * k + path[t]];
    }
    let score = path_score(scores, params, &path)?;
    Ok((path, score))
}

/// Upper bound on `K^T` for the exhaustive oracles.
pub const BRUTE_FORCE_LIMIT: usize = 1_000_000;

fn enumerate_paths(
    scores: &ScoreSeq,
    params: &CrfParams,
    mut visit: impl FnMut(&[usize], f64),
) -> Result<()> {
    params.check(scores)?;
    let (n, k) = (scores.frames(), scores.classes());
    let count = (k as f64).powi(n as i32);
    if count > BRUTE_FORCE_LIMIT as f64 {
        return Err(Error::TooLarge {
            paths: count,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let mut path = vec![0usize; n];
    loop {
        visit(&path, path_score(scores, params, &path)?);
        // odometer increment, last frame fastest
        let mut t = n;
        loop {
            if t == 0 {
                return Ok(());
            }
            t -= 1;
            path[t] += 1;
            if path[t] < k {
                break;
            }
            path[t] = 0;
        }
    }
}

/// Log-partition by enumerating every path.
pub fn brute_logsum(scores: &ScoreSeq, params: &CrfParams) -> Result<f64> {
    let mut all = Vec::new();
    enumerate_paths(scores, params, |_, s| all.push(s))?;
    logadd(&all)
}

/// Best path by enumeration; the lexicographically first maximum wins.
pub fn brute_best(scores: &ScoreSeq, params: &CrfParams) -> Result<(LabelPath, f64)> {
    let mut best: Option<(LabelPath, f64)> = None;
    enumerate_paths(scores, params, |p, s| {
        if best.as_ref().map_or(true, |(_, b)| s > *b) {
            best = Some((p.to_vec(), s));
        }
    })?;
    Ok(best.expect("at least one path"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn scores(rows: &[&[f64]]) -> ScoreSeq {
        ScoreSeq::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn logadd_cases() {
        assert_eq!(logadd(&[3.25]).unwrap(), 3.25);
        assert!((logadd(&[0.0, 0.0]).unwrap() - LN2).abs() < 1e-15);
        let big = logadd(&[1000.0, 1000.0]).unwrap();
        assert!((big - (1000.0 + LN2)).abs() < 1e-12);
        assert!(matches!(logadd(&[]), Err(Error::Argument(_))));
    }

    #[test]
    fn path_score_zero_model() {
        let s = ScoreSeq::zeros(3, 2);
        let p = CrfParams::zeros(2);
        assert_eq!(path_score(&s, &p, &[0, 1, 1]).unwrap(), 0.0);
    }

    #[test]
    fn path_score_single_frame() {
        let s = scores(&[&[0.5, -1.5, 2.0]]);
        let p = CrfParams::new(3, vec![9.0; 9], vec![0.1, 0.2, 0.3]).unwrap();
        assert_eq!(path_score(&s, &p, &[2]).unwrap(), 0.3 + 2.0);
    }

    #[test]
    fn path_score_errors() {
        let s = ScoreSeq::zeros(2, 2);
        let p = CrfParams::zeros(2);
        assert!(matches!(path_score(&s, &p, &[0, 2]), Err(Error::Index(_))));
        assert!(matches!(path_score(&s, &p, &[0]), Err(Error::Dimension(_))));
        assert!(matches!(
            forward_logsum(&s, &CrfParams::zeros(3)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn single_label_chain() {
        let s = scores(&[&[0.3], &[-2.0], &[1.0]]);
        let p = CrfParams::new(1, vec![0.4], vec![0.2]).unwrap();
        let only = path_score(&s, &p, &[0, 0, 0]).unwrap();
        assert!((forward_logsum(&s, &p).unwrap() - only).abs() < 1e-15);
        assert_eq!(log_likelihood(&s, &p, &[0, 0, 0]).unwrap(), 0.0);
        let g = likelihood_gradients(&s, &p, &[0, 0, 0]).unwrap();
        let all = g.scores.as_slice().iter().chain(&g.trans).chain(&g.init);
        assert!(all.into_iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn uniform_model_log_partition() {
        for k in 2..=4 {
            for t in 1..=5 {
                let s = ScoreSeq::zeros(t, k);
                let p = CrfParams::zeros(k);
                let want = t as f64 * (k as f64).ln();
                assert!((forward_logsum(&s, &p).unwrap() - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn viterbi_decoupled_frames_is_argmax() {
        let s = scores(&[&[0.1, 0.9, 0.3], &[2.0, -1.0, 0.0], &[0.0, 0.1, 0.2]]);
        let (path, score) = viterbi(&s, &CrfParams::zeros(3)).unwrap();
        assert_eq!(path, vec![1, 0, 2]);
        assert!((score - 3.1).abs() < 1e-12);
    }

    #[test]
    fn viterbi_ties_pick_lowest_label() {
        let s = ScoreSeq::zeros(4, 3);
        let (path, _) = viterbi(&s, &CrfParams::zeros(3)).unwrap();
        assert_eq!(path, vec![0; 4]);
        assert_eq!(brute_best(&s, &CrfParams::zeros(3)).unwrap().0, vec![0; 4]);
    }

    #[test]
    fn brute_best_constructed() {
        let s = scores(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let (path, score) = brute_best(&s, &CrfParams::zeros(2)).unwrap();
        assert_eq!(path, vec![0, 1]);
        assert_eq!(score, 2.0);
    }

    #[test]
    fn brute_single_label() {
        let s = scores(&[&[1.0], &[2.0], &[-1.0], &[0.5]]);
        let p = CrfParams::zeros(1);
        assert_eq!(brute_best(&s, &p).unwrap().0, vec![0; 4]);
        assert_eq!(brute_logsum(&s, &p).unwrap(), 2.5);
    }

    #[test]
    fn brute_force_guard() {
        let s = ScoreSeq::zeros(21, 2);
        assert!(matches!(
            brute_logsum(&s, &CrfParams::zeros(2)),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let s = scores(&[&[0.3, -0.2, 1.1], &[0.0, 0.5, -0.7], &[1.4, 0.2, 0.1]]);
        let p = CrfParams::new(
            3,
            vec![0.1, -0.3, 0.2, 0.5, 0.0, -0.1, 0.3, 0.2, -0.4],
            vec![0.2, 0.0, -0.2],
        )
        .unwrap();
        let g = likelihood_gradients(&s, &p, &[2, 1, 1]).unwrap();
        for t in 0..3 {
            assert!(g.scores.row(t).iter().sum::<f64>().abs() < 1e-12);
        }
        assert!(g.trans.iter().sum::<f64>().abs() < 1e-12);
        assert!(g.init.iter().sum::<f64>().abs() < 1e-12);
        assert!(g.log_likelihood < 0.0);
    }
}
