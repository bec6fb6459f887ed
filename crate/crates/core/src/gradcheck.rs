//! Finite-difference checks of every hand-derived gradient.
//!
//! Each suite draws random instances, compares the analytic gradient to
//! central differences and reports the worst relative error
//! `|a - n| / max(|a|, |n|, REL_FLOOR)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::crf::{likelihood_gradients, log_likelihood, CrfParams, ScoreSeq};
use crate::error::Result;
use crate::network::{NetworkConfig, NetworkModel, StageConfig};
use crate::numkernels::{
    conv1d_backward, conv1d_forward, linear_backward, linear_forward, maxpool_backward,
    maxpool_forward, tanh_backward, tanh_forward, ConvShape, ConvSpec, FrameSeq, LinearSpec,
    PoolShape,
};

pub const STEP: f64 = 1e-5;
pub const REL_FLOOR: f64 = 1e-3;
/// Within-window gap below which a max-pool instance is redrawn.
pub const TIE_MARGIN: f64 = 1e-3;

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Central differences of `f` at `x`.
pub fn central_diff(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + STEP;
            let up = f(&p);
            p[i] = orig - STEP;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub instances: usize,
    pub max_rel_error: f64,
    /// Where the worst error occurred.
    pub worst: String,
    pub tolerance: f64,
}

impl CheckResult {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            instances: 0,
            max_rel_error: 0.0,
            worst: String::from("-"),
            tolerance,
        }
    }

    fn compare(&mut self, what: &str, analytic: &[f64], numeric: &[f64]) {
        assert_eq!(analytic.len(), numeric.len());
        for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
            let e = rel_error(a, n);
            if e > self.max_rel_error || e.is_nan() {
                self.max_rel_error = e;
                self.worst = format!("instance {} {what}[{i}]: analytic {a:.9e}, numeric {n:.9e}", self.instances);
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

fn uniform(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..=scale)).collect()
}

fn probe(y: &[f64], r: &[f64]) -> f64 {
    y.iter().zip(r).map(|(a, b)| a * b).sum()
}

pub fn check_conv(seed: u64, instances: usize) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut res = CheckResult::new("conv1d", 1e-6);
    for _ in 0..instances {
        let kw = rng.gen_range(1..=4);
        let dw = rng.gen_range(1..=3);
        let d_in = rng.gen_range(1..=3);
        let d_out = rng.gen_range(1..=3);
        let t = kw + rng.gen_range(0..=6);
        let shape = ConvShape::new(kw, dw, d_in, d_out)?;
        let x = uniform(&mut rng, t * d_in, 1.0);
        let w = uniform(&mut rng, shape.weight_len(), 1.0);
        let b = uniform(&mut rng, d_out, 1.0);
        let out_len = shape.output_len(t).expect("t >= kw");
        let r = uniform(&mut rng, out_len * d_out, 1.0);
        let loss = |x: &[f64], w: &[f64], b: &[f64]| -> f64 {
            let spec = ConvSpec::new(shape, w, b).expect("shapes");
            let y = conv1d_forward(&FrameSeq::new(t, d_in, x.to_vec()).expect("shape"), &spec)
                .expect("forward");
            probe(y.as_slice(), &r)
        };
        let spec = ConvSpec::new(shape, &w, &b)?;
        let xs = FrameSeq::new(t, d_in, x.clone())?;
        let g = conv1d_backward(&xs, &spec, &FrameSeq::new(out_len, d_out, r.clone())?)?;
        res.compare("x", g.input.as_slice(), &central_diff(&x, |v| loss(v, &w, &b)));
        res.compare("W", &g.weights, &central_diff(&w, |v| loss(&x, v, &b)));
        res.compare("b", &g.bias, &central_diff(&b, |v| loss(&x, &w, v)));
        res.instances += 1;
    }
    Ok(res)
}

fn has_close_tie(x: &FrameSeq, shape: PoolShape) -> bool {
    let n = shape.output_len(x.frames()).unwrap_or(0);
    (0..n).any(|u| {
        (0..x.dim()).any(|i| {
            let mut vals: Vec<f64> = (u * shape.dw..u * shape.dw + shape.kw)
                .map(|s| x.get(s, i))
                .collect();
            vals.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
            vals.len() > 1 && vals[0] - vals[1] < TIE_MARGIN
        })
    })
}

pub fn check_maxpool(seed: u64, instances: usize) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut res = CheckResult::new("maxpool", 1e-6);
    while res.instances < instances {
        let kw = rng.gen_range(1..=4);
        let dw = rng.gen_range(1..=kw);
        let d = rng.gen_range(1..=3);
        let t = kw + rng.gen_range(0..=6);
        let shape = PoolShape::new(kw, dw)?;
        let x = FrameSeq::new(t, d, uniform(&mut rng, t * d, 1.0))?;
        if has_close_tie(&x, shape) {
            continue;
        }
        let (y, tape) = maxpool_forward(&x, shape)?;
        let r = uniform(&mut rng, y.as_slice().len(), 1.0);
        let g = maxpool_backward(&tape, &FrameSeq::new(y.frames(), d, r.clone())?)?;
        let num = central_diff(x.as_slice(), |v| {
            let xv = FrameSeq::new(t, d, v.to_vec()).expect("shape");
            probe(maxpool_forward(&xv, shape).expect("forward").0.as_slice(), &r)
        });
        res.compare("x", g.as_slice(), &num);
        res.instances += 1;
    }
    Ok(res)
}

pub fn check_tanh(seed: u64, instances: usize) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut res = CheckResult::new("tanh", 1e-6);
    for _ in 0..instances {
        let t = rng.gen_range(1..=5);
        let d = rng.gen_range(1..=3);
        let x = uniform(&mut rng, t * d, 3.0);
        let r = uniform(&mut rng, t * d, 1.0);
        let y = tanh_forward(&FrameSeq::new(t, d, x.clone())?);
        let g = tanh_backward(&y, &FrameSeq::new(t, d, r.clone())?)?;
        let num = central_diff(&x, |v| {
            probe(tanh_forward(&FrameSeq::new(t, d, v.to_vec()).expect("shape")).as_slice(), &r)
        });
        res.compare("x", g.as_slice(), &num);
        res.instances += 1;
    }
    Ok(res)
}

pub fn check_linear(seed: u64, instances: usize) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut res = CheckResult::new("linear", 1e-6);
    for _ in 0..instances {
        let d_in = rng.gen_range(1..=5);
        let d_out = rng.gen_range(1..=4);
        let x = uniform(&mut rng, d_in, 1.0);
        let w = uniform(&mut rng, d_in * d_out, 1.0);
        let b = uniform(&mut rng, d_out, 1.0);
        let r = uniform(&mut rng, d_out, 1.0);
        let loss = |x: &[f64], w: &[f64], b: &[f64]| {
            let spec = LinearSpec::new(d_in, d_out, w, b).expect("shapes");
            probe(&linear_forward(x, &spec).expect("forward"), &r)
        };
        let g = linear_backward(&x, &LinearSpec::new(d_in, d_out, &w, &b)?, &r)?;
        res.compare("x", &g.input, &central_diff(&x, |v| loss(v, &w, &b)));
        res.compare("W", &g.weights, &central_diff(&w, |v| loss(&x, v, &b)));
        res.compare("b", &g.bias, &central_diff(&b, |v| loss(&x, &w, v)));
        res.instances += 1;
    }
    Ok(res)
}

pub fn check_crf(seed: u64, instances: usize) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut res = CheckResult::new("crf", 1e-6);
    for _ in 0..instances {
        let k = rng.gen_range(2..=4);
        let t = rng.gen_range(1..=6);
        let s = uniform(&mut rng, t * k, 2.0);
        let a = uniform(&mut rng, k * k, 2.0);
        let init = uniform(&mut rng, k, 2.0);
        let gold: Vec<usize> = (0..t).map(|_| rng.gen_range(0..k)).collect();
        let ll = |s: &[f64], a: &[f64], init: &[f64]| {
            let scores = ScoreSeq::new(t, k, s.to_vec()).expect("shape");
            let p = CrfParams::new(k, a.to_vec(), init.to_vec()).expect("shape");
            log_likelihood(&scores, &p, &gold).expect("valid")
        };
        let g = likelihood_gradients(
            &ScoreSeq::new(t, k, s.clone())?,
            &CrfParams::new(k, a.clone(), init.clone())?,
            &gold,
        )?;
        res.compare("scores", g.scores.as_slice(), &central_diff(&s, |v| ll(v, &a, &init)));
        res.compare("trans", &g.trans, &central_diff(&a, |v| ll(&s, v, &init)));
        res.compare("init", &g.init, &central_diff(&init, |v| ll(&s, &a, v)));
        res.instances += 1;
    }
    Ok(res)
}

/// Two stages of 4 filters, 8 hidden units, 3 classes, 24-sample windows.
pub fn tiny_network_config() -> NetworkConfig {
    NetworkConfig {
        input_dim: 1,
        window_samples: 24,
        stages: vec![StageConfig::new(4, 2, 4, 2), StageConfig::new(2, 1, 4, 2)],
        hidden_units: 8,
        num_classes: 3,
    }
}

/// CRF log-likelihood of a random 4-frame utterance through the tiny
/// network, differentiated with respect to every network and CRF parameter.
pub fn check_network(seed: u64, instances: usize) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut res = CheckResult::new("network+crf", 1e-4);
    let cfg = tiny_network_config();
    let (frames, k) = (4, cfg.num_classes);
    for _ in 0..instances {
        let model = NetworkModel::build(cfg.clone(), rng.gen())?;
        let windows: Vec<FrameSeq> = (0..frames)
            .map(|_| FrameSeq::from_samples(&uniform(&mut rng, cfg.window_samples, 1.0)))
            .collect::<Result<_>>()?;
        let crf = CrfParams::new(k, uniform(&mut rng, k * k, 0.5), uniform(&mut rng, k, 0.5))?;
        let gold: Vec<usize> = (0..frames).map(|_| rng.gen_range(0..k)).collect();

        let (scores, tapes) = model.score_sequence(&windows)?;
        let g = likelihood_gradients(&scores, &crf, &gold)?;
        let mut d_theta = vec![0.0; model.param_count()];
        model.backward_sequence(&tapes, &g.scores, &mut d_theta)?;

        let theta = model.params().as_slice().to_vec();
        let num = central_diff(&theta, |v| {
            let m = NetworkModel::from_parameters(cfg.clone(), v.to_vec()).expect("shape");
            let s = m.score_sequence(&windows).expect("forward").0;
            log_likelihood(&s, &crf, &gold).expect("valid")
        });
        res.compare("theta", &d_theta, &num);
        let num_a = central_diff(crf.transitions(), |v| {
            let p = CrfParams::new(k, v.to_vec(), crf.init().to_vec()).expect("shape");
            log_likelihood(&scores, &p, &gold).expect("valid")
        });
        res.compare("trans", &g.trans, &num_a);
        res.instances += 1;
    }
    Ok(res)
}

/// Every suite with the instance counts used by the self-check command.
pub fn run_all(seed: u64) -> Result<Vec<CheckResult>> {
    Ok(vec![
        check_conv(seed, 100)?,
        check_maxpool(seed.wrapping_add(1), 100)?,
        check_tanh(seed.wrapping_add(2), 100)?,
        check_linear(seed.wrapping_add(3), 100)?,
        check_crf(seed.wrapping_add(4), 100)?,
        check_network(seed.wrapping_add(5), 5)?,
    ])
}
