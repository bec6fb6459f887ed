use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rawseq::numkernels::*;

const H: f64 = 1e-5;

fn rel(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// conv output computed straight from the definition
/// `y[t][o] = b[o] + sum_k sum_i W[o][k*dIn + i] * x[t*dW + k][i]`.
fn conv_oracle(x: &[Vec<f64>], kw: usize, dw: usize, w: &[f64], b: &[f64]) -> Vec<Vec<f64>> {
    let d_in = x[0].len();
    let d_out = b.len();
    let out_t = (x.len() - kw) / dw + 1;
    let mut y = vec![vec![0.0; d_out]; out_t];
    for t in 0..out_t {
        for o in 0..d_out {
            let mut s = b[o];
            for k in 0..kw {
                for i in 0..d_in {
                    s += w[o * kw * d_in + k * d_in + i] * x[t * dw + k][i];
                }
            }
            y[t][o] = s;
        }
    }
    y
}

fn rows(f: &FrameSeq) -> Vec<Vec<f64>> {
    (0..f.frames()).map(|t| f.frame(t).to_vec()).collect()
}

#[test]
fn conv_matches_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let (kw, dw, d_in, d_out) = (
            rng.gen_range(1..5),
            rng.gen_range(1..4),
            rng.gen_range(1..4),
            rng.gen_range(1..4),
        );
        let t = kw + rng.gen_range(0..10);
        let shape = ConvShape::new(kw, dw, d_in, d_out).unwrap();
        let w = rand_vec(&mut rng, shape.weight_len());
        let b = rand_vec(&mut rng, d_out);
        let x = FrameSeq::new(t, d_in, rand_vec(&mut rng, t * d_in)).unwrap();
        let y = conv1d_forward(&x, &ConvSpec::new(shape, &w, &b).unwrap()).unwrap();
        let want = conv_oracle(&rows(&x), kw, dw, &w, &b);
        for (got, want) in rows(&y).iter().zip(&want) {
            for (g, w) in got.iter().zip(want) {
                assert!((g - w).abs() < 1e-12);
            }
        }
        assert_eq!(y.frames(), want.len());
    }
}

#[test]
fn maxpool_matches_exhaustive_window_max() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let d = rng.gen_range(1..4);
        let t = rng.gen_range(3..20);
        let x = FrameSeq::new(t, d, rand_vec(&mut rng, t * d)).unwrap();
        let (y, tape) = maxpool_forward(&x, PoolShape::non_overlapping(3).unwrap()).unwrap();
        assert_eq!(y.frames(), t / 3);
        for u in 0..y.frames() {
            for i in 0..d {
                let m = (3 * u..3 * u + 3)
                    .map(|s| x.get(s, i))
                    .fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(y.get(u, i), m);
                let a = tape.argmax(u, i);
                assert!((3 * u..3 * u + 3).contains(&a));
                assert_eq!(x.get(a, i), m);
            }
        }
    }
}

/// Numeric gradient of `sum(r * f(x))` with respect to `x`.
fn fd(x: &[f64], r: &[f64], f: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let loss = |v: &[f64]| f(v).iter().zip(r).map(|(a, b)| a * b).sum::<f64>();
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let o = p[i];
            p[i] = o + H;
            let up = loss(&p);
            p[i] = o - H;
            let dn = loss(&p);
            p[i] = o;
            (up - dn) / (2.0 * H)
        })
        .collect()
}

fn assert_close(analytic: &[f64], numeric: &[f64], tol: f64) {
    for (a, n) in analytic.iter().zip(numeric) {
        assert!(rel(*a, *n) <= tol, "analytic {a}, numeric {n}");
    }
}

#[test]
fn conv_backward_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let (kw, dw, d_in, d_out) = (
            rng.gen_range(1..4),
            rng.gen_range(1..3),
            rng.gen_range(1..3),
            rng.gen_range(1..3),
        );
        let t = kw + rng.gen_range(0..6);
        let shape = ConvShape::new(kw, dw, d_in, d_out).unwrap();
        let w = rand_vec(&mut rng, shape.weight_len());
        let b = rand_vec(&mut rng, d_out);
        let xv = rand_vec(&mut rng, t * d_in);
        let x = FrameSeq::new(t, d_in, xv.clone()).unwrap();
        let out_t = shape.output_len(t).unwrap();
        let r = rand_vec(&mut rng, out_t * d_out);
        let g = conv1d_backward(
            &x,
            &ConvSpec::new(shape, &w, &b).unwrap(),
            &FrameSeq::new(out_t, d_out, r.clone()).unwrap(),
        )
        .unwrap();
        let run = |x: &[f64], w: &[f64], b: &[f64]| {
            conv1d_forward(
                &FrameSeq::new(t, d_in, x.to_vec()).unwrap(),
                &ConvSpec::new(shape, w, b).unwrap(),
            )
            .unwrap()
            .into_vec()
        };
        assert_close(g.input.as_slice(), &fd(&xv, &r, |v| run(v, &w, &b)), 1e-6);
        assert_close(&g.weights, &fd(&w, &r, |v| run(&xv, v, &b)), 1e-6);
        assert_close(&g.bias, &fd(&b, &r, |v| run(&xv, &w, v)), 1e-6);
    }
}

#[test]
fn maxpool_backward_finite_differences_away_from_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut checked = 0;
    while checked < 100 {
        let kw = rng.gen_range(1..4);
        let dw = rng.gen_range(1..4);
        let d = rng.gen_range(1..3);
        let t = kw + rng.gen_range(0..6);
        let shape = PoolShape::new(kw, dw).unwrap();
        let xv = rand_vec(&mut rng, t * d);
        let x = FrameSeq::new(t, d, xv.clone()).unwrap();
        let out_t = shape.output_len(t).unwrap();
        let tied = (0..out_t).any(|u| {
            (0..d).any(|i| {
                let mut w: Vec<f64> = (u * dw..u * dw + kw).map(|s| x.get(s, i)).collect();
                w.sort_by(|a, b| b.partial_cmp(a).unwrap());
                w.len() > 1 && w[0] - w[1] < 1e-3
            })
        });
        if tied {
            continue;
        }
        checked += 1;
        let r = rand_vec(&mut rng, out_t * d);
        let (_, tape) = maxpool_forward(&x, shape).unwrap();
        let g = maxpool_backward(&tape, &FrameSeq::new(out_t, d, r.clone()).unwrap()).unwrap();
        let num = fd(&xv, &r, |v| {
            maxpool_forward(&FrameSeq::new(t, d, v.to_vec()).unwrap(), shape)
                .unwrap()
                .0
                .into_vec()
        });
        assert_close(g.as_slice(), &num, 1e-6);
    }
}

#[test]
fn tanh_and_linear_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..100 {
        let n = rng.gen_range(1..8);
        let xv: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let r = rand_vec(&mut rng, n);
        let x = FrameSeq::new(n, 1, xv.clone()).unwrap();
        let y = tanh_forward(&x);
        let g = tanh_backward(&y, &FrameSeq::new(n, 1, r.clone()).unwrap()).unwrap();
        let num = fd(&xv, &r, |v| v.iter().map(|a| a.tanh()).collect());
        assert_close(g.as_slice(), &num, 1e-6);

        let (d_in, d_out) = (rng.gen_range(1..5), rng.gen_range(1..5));
        let w = rand_vec(&mut rng, d_in * d_out);
        let b = rand_vec(&mut rng, d_out);
        let x = rand_vec(&mut rng, d_in);
        let r = rand_vec(&mut rng, d_out);
        let spec = LinearSpec::new(d_in, d_out, &w, &b).unwrap();
        let g = linear_backward(&x, &spec, &r).unwrap();
        let run = |x: &[f64], w: &[f64], b: &[f64]| {
            linear_forward(x, &LinearSpec::new(d_in, d_out, w, b).unwrap()).unwrap()
        };
        assert_close(&g.input, &fd(&x, &r, |v| run(v, &w, &b)), 1e-6);
        assert_close(&g.weights, &fd(&w, &r, |v| run(&x, v, &b)), 1e-6);
        assert_close(&g.bias, &fd(&b, &r, |v| run(&x, &w, v)), 1e-6);
    }
}

fn frames(t: usize, d: usize) -> impl Strategy<Value = FrameSeq> {
    prop::collection::vec(-5.0f64..5.0, t * d).prop_map(move |v| FrameSeq::new(t, d, v).unwrap())
}

proptest! {
    #[test]
    fn conv_shape_law(kw in 1usize..12, dw in 1usize..6, extra in 0usize..40, d_in in 1usize..3) {
        let t = kw + extra;
        let shape = ConvShape::new(kw, dw, d_in, 2).unwrap();
        let w = vec![0.1; shape.weight_len()];
        let b = vec![0.0; 2];
        let x = FrameSeq::zeros(t, d_in);
        let y = conv1d_forward(&x, &ConvSpec::new(shape, &w, &b).unwrap()).unwrap();
        prop_assert_eq!(y.frames(), (t - kw) / dw + 1);
        prop_assert_eq!(y.dim(), 2);
    }

    #[test]
    fn pool_shape_law(kw in 1usize..12, dw in 1usize..6, extra in 0usize..40) {
        let t = kw + extra;
        let (y, tape) = maxpool_forward(&FrameSeq::zeros(t, 3), PoolShape::new(kw, dw).unwrap()).unwrap();
        prop_assert_eq!(y.frames(), (t - kw) / dw + 1);
        prop_assert_eq!(tape.output_frames(), y.frames());
    }

    #[test]
    fn too_short_inputs_rejected(kw in 2usize..12, short in 1usize..12) {
        prop_assume!(short < kw);
        prop_assert!(maxpool_forward(&FrameSeq::zeros(short, 1), PoolShape::new(kw, 1).unwrap()).is_err());
        let shape = ConvShape::new(kw, 1, 1, 1).unwrap();
        let w = vec![1.0; kw];
        let b = [0.0];
        prop_assert!(conv1d_forward(&FrameSeq::zeros(short, 1), &ConvSpec::new(shape, &w, &b).unwrap()).is_err());
    }

    #[test]
    fn conv_is_linear_without_bias(
        x1 in frames(9, 2),
        x2 in frames(9, 2),
        w in prop::collection::vec(-1.0f64..1.0, 3 * 2 * 2),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        let shape = ConvShape::new(3, 2, 2, 2).unwrap();
        let zero = [0.0, 0.0];
        let spec = ConvSpec::new(shape, &w, &zero).unwrap();
        let mix: Vec<f64> = x1.as_slice().iter().zip(x2.as_slice()).map(|(p, q)| a * p + b * q).collect();
        let lhs = conv1d_forward(&FrameSeq::new(9, 2, mix).unwrap(), &spec).unwrap();
        let y1 = conv1d_forward(&x1, &spec).unwrap();
        let y2 = conv1d_forward(&x2, &spec).unwrap();
        for (i, v) in lhs.as_slice().iter().enumerate() {
            let rhs = a * y1.as_slice()[i] + b * y2.as_slice()[i];
            prop_assert!((v - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn unit_pool_is_identity(x in frames(7, 3)) {
        let unit = PoolShape::new(1, 1).unwrap();
        let (y, tape) = maxpool_forward(&x, unit).unwrap();
        let (z, _) = maxpool_forward(&y, unit).unwrap();
        prop_assert_eq!(&z, &x);
        let expected: Vec<usize> = (0..7).flat_map(|t| [t, t, t]).collect();
        prop_assert_eq!(tape.as_slice(), &expected[..]);
    }

    #[test]
    fn pool_tape_stays_inside_window(x in frames(13, 2), kw in 1usize..5, dw in 1usize..5) {
        let (_, tape) = maxpool_forward(&x, PoolShape::new(kw, dw).unwrap()).unwrap();
        for u in 0..tape.output_frames() {
            for i in 0..2 {
                let a = tape.argmax(u, i);
                prop_assert!(a >= u * dw && a < u * dw + kw);
            }
        }
    }

    /// Shifting the input by fewer frames than the pool stride leaves every
    /// pooled value unchanged when each window's peak sits at its start and
    /// beats the rest of the window by a clear margin.
    #[test]
    fn pooling_tolerates_small_shifts(
        fill in prop::collection::vec(0.0f64..1.0, 24),
        pad in prop::collection::vec(0.0f64..1.0, 3),
        peaks in prop::collection::vec(1.5f64..3.0, 6),
        s in 0usize..4,
    ) {
        let mut x = fill.clone();
        for (u, p) in peaks.iter().enumerate() {
            x[4 * u] = *p;
        }
        let mut shifted = pad[..s].to_vec();
        shifted.extend_from_slice(&x[..24 - s]);
        let shape = PoolShape::non_overlapping(4).unwrap();
        let (y0, t0) = maxpool_forward(&FrameSeq::from_samples(&x).unwrap(), shape).unwrap();
        let (y1, t1) = maxpool_forward(&FrameSeq::from_samples(&shifted).unwrap(), shape).unwrap();
        prop_assert_eq!(y0.as_slice(), peaks.as_slice());
        prop_assert_eq!(y1.as_slice(), peaks.as_slice());
        for u in 0..6 {
            prop_assert_eq!(t1.argmax(u, 0), t0.argmax(u, 0) + s);
        }
    }
}
