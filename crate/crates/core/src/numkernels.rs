//! Layer primitives with hand-derived gradients: temporal convolution,
//! temporal max-pooling, tanh and fully-connected transforms.
//!
//! Every operation is a pure function. Windows are "valid" only and anchored
//! at the left edge: output frame `u` reads input frames `u*dW .. u*dW + kW`.

use crate::error::{Error, Result};

/// A `T x d` sequence of frames stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSeq {
    frames: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FrameSeq {
    pub fn new(frames: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if frames == 0 || dim == 0 {
            return Err(Error::dim(format!(
                "frame sequence must be non-empty, got {frames}x{dim}"
            )));
        }
        if data.len() != frames * dim {
            return Err(Error::dim(format!(
                "{} values cannot form {frames}x{dim} frames",
                data.len()
            )));
        }
        Ok(Self { frames, dim, data })
    }

    pub fn zeros(frames: usize, dim: usize) -> Self {
        assert!(frames > 0 && dim > 0, "empty frame sequence");
        Self {
            frames,
            dim,
            data: vec![0.0; frames * dim],
        }
    }

    /// Builds a sequence of scalar frames (`d = 1`).
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        Self::new(samples.len(), 1, samples.to_vec())
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::dim("ragged rows"));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    #[inline]
    pub fn frames(&self) -> usize {
        self.frames
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    #[inline]
    pub fn frame_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.dim..(t + 1) * self.dim]
    }

    #[inline]
    pub fn get(&self, t: usize, i: usize) -> f64 {
        self.data[t * self.dim + i]
    }

    #[inline]
    pub fn set(&mut self, t: usize, i: usize, v: f64) {
        self.data[t * self.dim + i] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn same_shape(&self, other: &FrameSeq, what: &str) -> Result<()> {
        if self.frames != other.frames || self.dim != other.dim {
            return Err(Error::dim(format!(
                "{what}: expected {}x{}, got {}x{}",
                self.frames, self.dim, other.frames, other.dim
            )));
        }
        Ok(())
    }
}

/// Output length of a valid sliding window, or `None` when the input is
/// shorter than one window.
#[inline]
pub fn window_count(len: usize, kw: usize, dw: usize) -> Option<usize> {
    (len >= kw).then(|| (len - kw) / dw + 1)
}

fn check_window(len: usize, kw: usize, dw: usize) -> Result<usize> {
    window_count(len, kw, dw).ok_or(Error::InputTooShort {
        required: kw,
        actual: len,
    })
}

/// Dimensions of a temporal convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub kw: usize,
    pub dw: usize,
    pub d_in: usize,
    pub d_out: usize,
}

impl ConvShape {
    pub fn new(kw: usize, dw: usize, d_in: usize, d_out: usize) -> Result<Self> {
        if kw == 0 || dw == 0 || d_in == 0 || d_out == 0 {
            return Err(Error::Config(format!(
                "convolution needs kW, dW, dIn, dOut >= 1 (got {kw}, {dw}, {d_in}, {d_out})"
            )));
        }
        Ok(Self { kw, dw, d_in, d_out })
    }

    /// Columns of the weight matrix: one window flattened.
    pub fn fan_in(&self) -> usize {
        self.kw * self.d_in
    }

    pub fn weight_len(&self) -> usize {
        self.d_out * self.fan_in()
    }

    pub fn param_count(&self) -> usize {
        self.weight_len() + self.d_out
    }

    pub fn output_len(&self, len: usize) -> Option<usize> {
        window_count(len, self.kw, self.dw)
    }
}

/// A convolution with borrowed parameters. `weights` is the row-major
/// `dOut x (kW*dIn)` matrix; row `o` is filter `o`.
#[derive(Debug, Clone, Copy)]
pub struct ConvSpec<'a> {
    pub shape: ConvShape,
    pub weights: &'a [f64],
    pub bias: &'a [f64],
}

impl<'a> ConvSpec<'a> {
    pub fn new(shape: ConvShape, weights: &'a [f64], bias: &'a [f64]) -> Result<Self> {
        if weights.len() != shape.weight_len() {
            return Err(Error::dim(format!(
                "conv weights: expected {}x{} = {}, got {}",
                shape.d_out,
                shape.fan_in(),
                shape.weight_len(),
                weights.len()
            )));
        }
        if bias.len() != shape.d_out {
            return Err(Error::dim(format!(
                "conv bias: expected {}, got {}",
                shape.d_out,
                bias.len()
            )));
        }
        Ok(Self {
            shape,
            weights,
            bias,
        })
    }

    #[inline]
    fn filter(&self, o: usize) -> &'a [f64] {
        let n = self.shape.fan_in();
        &self.weights[o * n..(o + 1) * n]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: FrameSeq,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn conv1d_forward(x: &FrameSeq, spec: &ConvSpec<'_>) -> Result<FrameSeq> {
    let s = spec.shape;
    if x.dim() != s.d_in {
        return Err(Error::dim(format!(
            "conv input frames have dim {}, filters expect {}",
            x.dim(),
            s.d_in
        )));
    }
    let out_len = check_window(x.frames(), s.kw, s.dw)?;
    let span = s.fan_in();
    let mut y = FrameSeq::zeros(out_len, s.d_out);
    for u in 0..out_len {
        let start = u * s.dw * s.d_in;
        // frames are contiguous, so a window is one flat slice
        let window = &x.as_slice()[start..start + span];
        for (o, out) in y.frame_mut(u).iter_mut().enumerate() {
            *out = spec.bias[o] + dot(spec.filter(o), window);
        }
    }
    Ok(y)
}

/// Accumulates weight and bias gradients into the given buffers and returns
/// the gradient with respect to the input.
pub fn conv1d_backward_into(
    x: &FrameSeq,
    spec: &ConvSpec<'_>,
    grad_out: &FrameSeq,
    grad_weights: &mut [f64],
    grad_bias: &mut [f64],
) -> Result<FrameSeq> {
    let s = spec.shape;
    let out_len = check_window(x.frames(), s.kw, s.dw)?;
    if x.dim() != s.d_in || grad_out.frames() != out_len || grad_out.dim() != s.d_out {
        return Err(Error::dim(format!(
            "conv backward: gradient is {}x{}, forward output is {}x{}",
            grad_out.frames(),
            grad_out.dim(),
            out_len,
            s.d_out
        )));
    }
    if grad_weights.len() != s.weight_len() || grad_bias.len() != s.d_out {
        return Err(Error::dim("conv backward: gradient buffers do not match shape"));
    }
    let span = s.fan_in();
    let mut gx = FrameSeq::zeros(x.frames(), x.dim());
    for u in 0..out_len {
        let start = u * s.dw * s.d_in;
        let window = &x.as_slice()[start..start + span];
        let g = grad_out.frame(u);
        for (o, &go) in g.iter().enumerate() {
            if go == 0.0 {
                continue;
            }
            grad_bias[o] += go;
            axpy(go, window, &mut grad_weights[o * span..(o + 1) * span]);
            axpy(
                go,
                spec.filter(o),
                &mut gx.as_mut_slice()[start..start + span],
            );
        }
    }
    Ok(gx)
}

pub fn conv1d_backward(
    x: &FrameSeq,
    spec: &ConvSpec<'_>,
    grad_out: &FrameSeq,
) -> Result<ConvGrads> {
    let mut weights = vec![0.0; spec.shape.weight_len()];
    let mut bias = vec![0.0; spec.shape.d_out];
    let input = conv1d_backward_into(x, spec, grad_out, &mut weights, &mut bias)?;
    Ok(ConvGrads {
        input,
        weights,
        bias,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolShape {
    pub kw: usize,
    pub dw: usize,
}

impl PoolShape {
    pub fn new(kw: usize, dw: usize) -> Result<Self> {
        if kw == 0 || dw == 0 {
            return Err(Error::Config(format!(
                "pooling needs kW, dW >= 1 (got {kw}, {dw})"
            )));
        }
        Ok(Self { kw, dw })
    }

    /// Non-overlapping pooling: shift equals width.
    pub fn non_overlapping(kw: usize) -> Result<Self> {
        Self::new(kw, kw)
    }

    pub fn output_len(&self, len: usize) -> Option<usize> {
        window_count(len, self.kw, self.dw)
    }
}

/// Winning source frame (0-based) for every pooled output entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolTape {
    input_frames: usize,
    out_frames: usize,
    dim: usize,
    argmax: Vec<usize>,
}

impl PoolTape {
    pub fn input_frames(&self) -> usize {
        self.input_frames
    }

    pub fn output_frames(&self) -> usize {
        self.out_frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn argmax(&self, u: usize, i: usize) -> usize {
        self.argmax[u * self.dim + i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.argmax
    }
}

pub fn maxpool_forward(x: &FrameSeq, shape: PoolShape) -> Result<(FrameSeq, PoolTape)> {
    let out_len = check_window(x.frames(), shape.kw, shape.dw)?;
    let d = x.dim();
    let mut y = FrameSeq::zeros(out_len, d);
    let mut argmax = vec![0usize; out_len * d];
    for u in 0..out_len {
        let first = u * shape.dw;
        for i in 0..d {
            let mut best = first;
            let mut best_val = x.get(first, i);
            for s in first + 1..first + shape.kw {
                // strict comparison keeps the lowest index on ties
                let v = x.get(s, i);
                if v > best_val {
                    best = s;
                    best_val = v;
                }
            }
            y.set(u, i, best_val);
            argmax[u * d + i] = best;
        }
    }
    Ok((
        y,
        PoolTape {
            input_frames: x.frames(),
            out_frames: out_len,
            dim: d,
            argmax,
        },
    ))
}

pub fn maxpool_backward(tape: &PoolTape, grad_out: &FrameSeq) -> Result<FrameSeq> {
    if grad_out.frames() != tape.out_frames || grad_out.dim() != tape.dim {
        return Err(Error::dim(format!(
            "max-pool backward: gradient is {}x{}, tape is {}x{}",
            grad_out.frames(),
            grad_out.dim(),
            tape.out_frames,
            tape.dim
        )));
    }
    let d = tape.dim;
    let mut gx = FrameSeq::zeros(tape.input_frames, d);
    for u in 0..tape.out_frames {
        for i in 0..d {
            let src = tape.argmax[u * d + i];
            let v = gx.get(src, i) + grad_out.get(u, i);
            gx.set(src, i, v);
        }
    }
    Ok(gx)
}

pub fn tanh_forward(x: &FrameSeq) -> FrameSeq {
    let mut y = x.clone();
    y.as_mut_slice().iter_mut().for_each(|v| *v = v.tanh());
    y
}

/// `y` is the forward output; the derivative is `1 - y^2`.
pub fn tanh_backward(y: &FrameSeq, grad_out: &FrameSeq) -> Result<FrameSeq> {
    y.same_shape(grad_out, "tanh backward")?;
    let mut gx = grad_out.clone();
    for (g, &yv) in gx.as_mut_slice().iter_mut().zip(y.as_slice()) {
        *g *= 1.0 - yv * yv;
    }
    Ok(gx)
}

/// A fully-connected layer `y = W x + b` with borrowed parameters; `weights`
/// is row-major `dOut x dIn`.
#[derive(Debug, Clone, Copy)]
pub struct LinearSpec<'a> {
    pub d_in: usize,
    pub d_out: usize,
    pub weights: &'a [f64],
    pub bias: &'a [f64],
}

impl<'a> LinearSpec<'a> {
    pub fn new(d_in: usize, d_out: usize, weights: &'a [f64], bias: &'a [f64]) -> Result<Self> {
        if weights.len() != d_in * d_out || bias.len() != d_out {
            return Err(Error::dim(format!(
                "linear {d_in}->{d_out}: got {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            d_in,
            d_out,
            weights,
            bias,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub input: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn linear_forward(x: &[f64], spec: &LinearSpec<'_>) -> Result<Vec<f64>> {
    if x.len() != spec.d_in {
        return Err(Error::dim(format!(
            "linear input has {} values, layer expects {}",
            x.len(),
            spec.d_in
        )));
    }
    Ok(spec
        .weights
        .chunks_exact(spec.d_in)
        .zip(spec.bias)
        .map(|(row, b)| b + dot(row, x))
        .collect())
}

pub fn linear_backward_into(
    x: &[f64],
    spec: &LinearSpec<'_>,
    grad_out: &[f64],
    grad_weights: &mut [f64],
    grad_bias: &mut [f64],
) -> Result<Vec<f64>> {
    if x.len() != spec.d_in || grad_out.len() != spec.d_out {
        return Err(Error::dim(format!(
            "linear backward: input {} (expects {}), gradient {} (expects {})",
            x.len(),
            spec.d_in,
            grad_out.len(),
            spec.d_out
        )));
    }
    if grad_weights.len() != spec.weights.len() || grad_bias.len() != spec.d_out {
        return Err(Error::dim("linear backward: gradient buffers do not match shape"));
    }
    let mut gx = vec![0.0; spec.d_in];
    for (o, &go) in grad_out.iter().enumerate() {
        if go == 0.0 {
            continue;
        }
        grad_bias[o] += go;
        let row = o * spec.d_in..(o + 1) * spec.d_in;
        axpy(go, x, &mut grad_weights[row.clone()]);
        axpy(go, &spec.weights[row], &mut gx);
    }
    Ok(gx)
}

pub fn linear_backward(
    x: &[f64],
    spec: &LinearSpec<'_>,
    grad_out: &[f64],
) -> Result<LinearGrads> {
    let mut weights = vec![0.0; spec.weights.len()];
    let mut bias = vec![0.0; spec.d_out];
    let input = linear_backward_into(x, spec, grad_out, &mut weights, &mut bias)?;
    Ok(LinearGrads {
        input,
        weights,
        bias,
    })
}
