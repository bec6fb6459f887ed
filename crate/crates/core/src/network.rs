//! Frame classifier over raw sample windows: a stack of filter-extraction
//! stages (conv -> max-pool -> tanh) followed by a two-layer classifier
//! (linear -> tanh -> linear). All parameters live in one flat vector so
//! the trainer can update them in place.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::crf::ScoreSeq;
use crate::error::{Error, Result};
use crate::numkernels::{
    conv1d_backward_into, conv1d_forward, linear_backward_into, linear_forward, maxpool_backward,
    maxpool_forward, tanh_backward, tanh_forward, ConvShape, ConvSpec, FrameSeq, LinearSpec,
    PoolShape, PoolTape,
};

/// One filter-extraction stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageConfig {
    pub conv_kw: usize,
    pub conv_dw: usize,
    pub filters: usize,
    pub pool_kw: usize,
    pub pool_dw: usize,
}

impl StageConfig {
    /// A stage with non-overlapping pooling.
    pub fn new(conv_kw: usize, conv_dw: usize, filters: usize, pool_kw: usize) -> Self {
        Self {
            conv_kw,
            conv_dw,
            filters,
            pool_kw,
            pool_dw: pool_kw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkConfig {
    /// Samples per input frame (1 for scalar samples).
    pub input_dim: usize,
    /// Raw samples in one classification window.
    pub window_samples: usize,
    pub stages: Vec<StageConfig>,
    pub hidden_units: usize,
    pub num_classes: usize,
}

impl NetworkConfig {
    fn conv_shapes(&self) -> Result<Vec<(ConvShape, PoolShape)>> {
        let mut d_in = self.input_dim;
        self.stages
            .iter()
            .map(|s| {
                let conv = ConvShape::new(s.conv_kw, s.conv_dw, d_in, s.filters)?;
                let pool = PoolShape::new(s.pool_kw, s.pool_dw)?;
                d_in = s.filters;
                Ok((conv, pool))
            })
            .collect()
    }

    /// Input frames per classification window.
    pub fn window_frames(&self) -> usize {
        self.window_samples / self.input_dim.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be >= 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.hidden_units == 0 {
            return Err(Error::Config("hidden_units must be >= 1".into()));
        }
        if self.window_samples % self.input_dim != 0 {
            return Err(Error::Config(format!(
                "window of {} samples is not a whole number of {}-sample frames",
                self.window_samples, self.input_dim
            )));
        }
        self.conv_shapes()?;
        let rf = receptive_field(self);
        if rf > self.window_samples {
            return Err(Error::Config(format!(
                "receptive field of {rf} samples exceeds the {}-sample window",
                self.window_samples
            )));
        }
        Ok(())
    }

    /// Frames and dimension leaving the last stage for a full window.
    pub fn stage_output(&self) -> Result<(usize, usize)> {
        let mut len = self.window_frames();
        let mut dim = self.input_dim;
        for (i, (conv, pool)) in self.conv_shapes()?.into_iter().enumerate() {
            len = conv
                .output_len(len)
                .and_then(|l| pool.output_len(l))
                .ok_or_else(|| {
                    Error::Config(format!("stage {} receives too few frames", i + 1))
                })?;
            dim = conv.d_out;
        }
        Ok((len, dim))
    }

    /// Width of the flattened classifier input.
    pub fn classifier_inputs(&self) -> Result<usize> {
        let (len, dim) = self.stage_output()?;
        Ok(len * dim)
    }
}

/// Number of raw samples needed to produce exactly one frame at the output
/// of the last stage, found by running the window-length law backwards.
pub fn receptive_field(config: &NetworkConfig) -> usize {
    let mut len = 1usize;
    for s in config.stages.iter().rev() {
        len = (len - 1) * s.pool_dw + s.pool_kw;
        len = (len - 1) * s.conv_dw + s.conv_kw;
    }
    len * config.input_dim
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv { stage: usize },
    Hidden,
    Output,
}

/// Location of one layer's weights and biases inside the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerBlock {
    pub kind: LayerKind,
    pub offset: usize,
    pub weights: usize,
    pub bias: usize,
    pub fan_in: usize,
}

impl LayerBlock {
    pub fn len(&self) -> usize {
        self.weights + self.bias
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn weight_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.weights
    }

    fn bias_range(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.weights;
        start..start + self.bias
    }
}

/// Flat parameter vector plus the per-layer index into it.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore {
    values: Vec<f64>,
    blocks: Vec<LayerBlock>,
}

impl ParameterStore {
    fn layout(config: &NetworkConfig) -> Result<Vec<LayerBlock>> {
        let mut blocks = Vec::new();
        let mut offset = 0;
        let mut push = |kind, weights, bias, fan_in| {
            blocks.push(LayerBlock {
                kind,
                offset,
                weights,
                bias,
                fan_in,
            });
            offset += weights + bias;
        };
        for (stage, (conv, _)) in config.conv_shapes()?.into_iter().enumerate() {
            push(
                LayerKind::Conv { stage },
                conv.weight_len(),
                conv.d_out,
                conv.fan_in(),
            );
        }
        let flat = config.classifier_inputs()?;
        let h = config.hidden_units;
        push(LayerKind::Hidden, h * flat, h, flat);
        push(
            LayerKind::Output,
            config.num_classes * h,
            config.num_classes,
            h,
        );
        Ok(blocks)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn blocks(&self) -> &[LayerBlock] {
        &self.blocks
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.values[self.blocks[layer].weight_range()]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        let r = self.blocks[layer].weight_range();
        &mut self.values[r]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        &self.values[self.blocks[layer].bias_range()]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [f64] {
        let r = self.blocks[layer].bias_range();
        &mut self.values[r]
    }
}

/// Cached activations from one window's forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    input: FrameSeq,
    /// tanh output of every stage
    stage_out: Vec<FrameSeq>,
    pools: Vec<PoolTape>,
    hidden: Vec<f64>,
}

impl ForwardTape {
    pub fn stage_count(&self) -> usize {
        self.stage_out.len()
    }

    pub fn stage_output(&self, stage: usize) -> &FrameSeq {
        &self.stage_out[stage]
    }

    pub fn pool_tape(&self, stage: usize) -> &PoolTape {
        &self.pools[stage]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    config: NetworkConfig,
    shapes: Vec<(ConvShape, PoolShape)>,
    flat_inputs: usize,
    params: ParameterStore,
}

impl NetworkModel {
    /// Builds a network with parameters drawn uniformly from
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, layer by layer, from a seeded
    /// ChaCha stream.
    pub fn build(config: NetworkConfig, seed: u64) -> Result<Self> {
        let mut model = Self::zeroed(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks = model.params.blocks.clone();
        for b in blocks {
            let bound = 1.0 / (b.fan_in as f64).sqrt();
            for v in &mut model.params.values[b.offset..b.offset + b.len()] {
                *v = rng.gen_range(-bound..=bound);
            }
        }
        Ok(model)
    }

    /// A network with every parameter zero.
    pub fn zeroed(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let shapes = config.conv_shapes()?;
        let flat_inputs = config.classifier_inputs()?;
        let blocks = ParameterStore::layout(&config)?;
        let total = blocks.iter().map(LayerBlock::len).sum();
        Ok(Self {
            config,
            shapes,
            flat_inputs,
            params: ParameterStore {
                values: vec![0.0; total],
                blocks,
            },
        })
    }

    pub fn from_parameters(config: NetworkConfig, values: Vec<f64>) -> Result<Self> {
        let mut model = Self::zeroed(config)?;
        if values.len() != model.params.len() {
            return Err(Error::dim(format!(
                "network expects {} parameters, got {}",
                model.params.len(),
                values.len()
            )));
        }
        model.params.values = values;
        Ok(model)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    pub fn receptive_field(&self) -> usize {
        receptive_field(&self.config)
    }

    fn conv_spec(&self, stage: usize) -> ConvSpec<'_> {
        ConvSpec {
            shape: self.shapes[stage].0,
            weights: self.params.weights(stage),
            bias: self.params.bias(stage),
        }
    }

    fn hidden_layer(&self) -> LinearSpec<'_> {
        let l = self.shapes.len();
        LinearSpec {
            d_in: self.flat_inputs,
            d_out: self.config.hidden_units,
            weights: self.params.weights(l),
            bias: self.params.bias(l),
        }
    }

    fn output_layer(&self) -> LinearSpec<'_> {
        let l = self.shapes.len() + 1;
        LinearSpec {
            d_in: self.config.hidden_units,
            d_out: self.config.num_classes,
            weights: self.params.weights(l),
            bias: self.params.bias(l),
        }
    }

    /// Scores one window of raw input frames. The window must hold exactly
    /// the configured number of frames, since the classifier input width is
    /// fixed by it.
    pub fn score_window(&self, window: &FrameSeq) -> Result<(Vec<f64>, ForwardTape)> {
        if window.dim() != self.config.input_dim {
            return Err(Error::dim(format!(
                "window frames have dim {}, network expects {}",
                window.dim(),
                self.config.input_dim
            )));
        }
        let need = self.config.window_frames();
        if window.frames() < need {
            return Err(Error::InputTooShort {
                required: need,
                actual: window.frames(),
            });
        }
        if window.frames() != need {
            return Err(Error::dim(format!(
                "window has {} frames, network is built for {need}",
                window.frames()
            )));
        }
        let mut stage_out = Vec::with_capacity(self.shapes.len());
        let mut pools = Vec::with_capacity(self.shapes.len());
        for (s, &(_, pool)) in self.shapes.iter().enumerate() {
            let x = stage_out.last().unwrap_or(window);
            let c = conv1d_forward(x, &self.conv_spec(s))?;
            let (p, tape) = maxpool_forward(&c, pool)?;
            stage_out.push(tanh_forward(&p));
            pools.push(tape);
        }
        let flat = stage_out.last().unwrap_or(window).as_slice();
        let mut hidden = linear_forward(flat, &self.hidden_layer())?;
        hidden.iter_mut().for_each(|v| *v = v.tanh());
        let scores = linear_forward(&hidden, &self.output_layer())?;
        Ok((
            scores,
            ForwardTape {
                input: window.clone(),
                stage_out,
                pools,
                hidden,
            },
        ))
    }

    /// Scores every window of an utterance. Rows are independent, so they are
    /// computed in parallel and collected in order.
    pub fn score_sequence(&self, windows: &[FrameSeq]) -> Result<(ScoreSeq, Vec<ForwardTape>)> {
        if windows.is_empty() {
            return Err(Error::Argument("no windows to score".into()));
        }
        let per_window: Vec<(Vec<f64>, ForwardTape)> = windows
            .par_iter()
            .map(|w| self.score_window(w))
            .collect::<Result<_>>()?;
        let k = self.config.num_classes;
        let mut data = Vec::with_capacity(windows.len() * k);
        let mut tapes = Vec::with_capacity(windows.len());
        for (s, tape) in per_window {
            data.extend_from_slice(&s);
            tapes.push(tape);
        }
        Ok((ScoreSeq::new(windows.len(), k, data)?, tapes))
    }

    /// Backpropagates `d_scores` (gradient of a scalar loss with respect to
    /// the score matrix) and adds `dL/dtheta` into `grad`, which has the same
    /// layout as the parameter vector.
    pub fn backward_sequence(
        &self,
        tapes: &[ForwardTape],
        d_scores: &ScoreSeq,
        grad: &mut [f64],
    ) -> Result<()> {
        if d_scores.frames() != tapes.len() || d_scores.classes() != self.config.num_classes {
            return Err(Error::dim(format!(
                "score gradient is {}x{}, forward pass produced {}x{}",
                d_scores.frames(),
                d_scores.classes(),
                tapes.len(),
                self.config.num_classes
            )));
        }
        if grad.len() != self.params.len() {
            return Err(Error::dim(format!(
                "gradient buffer has {} entries, model has {} parameters",
                grad.len(),
                self.params.len()
            )));
        }
        for (t, tape) in tapes.iter().enumerate() {
            self.backward_window(tape, d_scores.row(t), grad)?;
        }
        Ok(())
    }

    fn backward_window(&self, tape: &ForwardTape, d_scores: &[f64], grad: &mut [f64]) -> Result<()> {
        let n = self.shapes.len();
        let blocks = &self.params.blocks;
        let (gw, gb) = split_block(grad, &blocks[n + 1]);
        let d_hidden = linear_backward_into(&tape.hidden, &self.output_layer(), d_scores, gw, gb)?;
        let d_pre: Vec<f64> = d_hidden
            .iter()
            .zip(&tape.hidden)
            .map(|(g, h)| g * (1.0 - h * h))
            .collect();
        let flat_in = tape.stage_out.last().unwrap_or(&tape.input);
        let (gw, gb) = split_block(grad, &blocks[n]);
        let d_flat = linear_backward_into(flat_in.as_slice(), &self.hidden_layer(), &d_pre, gw, gb)?;
        let mut d_x = FrameSeq::new(flat_in.frames(), flat_in.dim(), d_flat)?;
        for s in (0..n).rev() {
            let d_pool = tanh_backward(&tape.stage_out[s], &d_x)?;
            let d_conv = maxpool_backward(&tape.pools[s], &d_pool)?;
            let x = if s == 0 {
                &tape.input
            } else {
                &tape.stage_out[s - 1]
            };
            let (gw, gb) = split_block(grad, &blocks[s]);
            d_x = conv1d_backward_into(x, &self.conv_spec(s), &d_conv, gw, gb)?;
        }
        Ok(())
    }
}

fn split_block<'g>(grad: &'g mut [f64], block: &LayerBlock) -> (&'g mut [f64], &'g mut [f64]) {
    grad[block.offset..block.offset + block.len()].split_at_mut(block.weights)
}
