use rand::Rng;

use crate::error::Error;
use crate::Result;

use super::tensor::Tensor;

/// A trainable parameter with its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Param {
        let grad = Tensor::zeros(&value.shape);
        Param {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Uniform fan-in initialization: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
pub fn init_uniform<R: Rng>(rng: &mut R, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let data = (0..shape.iter().product::<usize>())
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    Tensor {
        shape: shape.to_vec(),
        data,
    }
}

/// A differentiable layer. Forward pushes activations onto an internal cache
/// stack; backward pops in reverse order and accumulates parameter gradients.
/// The stack discipline lets the same layer instance be applied to several
/// slices (time distribution) before gradients flow back.
pub trait Layer {
    fn name(&self) -> &str;

    fn forward(&mut self, input: &Tensor) -> Result<Tensor>;

    /// Returns the gradient with respect to the layer input.
    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor>;

    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }

    fn params(&self) -> Vec<&Param> {
        Vec::new()
    }

    /// Drop any cached activations (e.g. between samples during inference).
    fn clear_cache(&mut self);

    /// Attention weight distribution from the most recent forward pass, if
    /// this layer computes one.
    fn attention_weights(&self) -> Option<Vec<f64>> {
        None
    }
}

pub(crate) fn pop_cache<T>(stack: &mut Vec<T>, layer: &str) -> Result<T> {
    stack.pop().ok_or_else(|| {
        Error::Training(format!("{layer}: backward called before forward"))
    })
}

/// Fully connected layer on a rank-1 input.
pub struct Dense {
    label: String,
    weight: Param,
    bias: Param,
    cache: Vec<Tensor>,
}

impl Dense {
    pub fn new<R: Rng>(rng: &mut R, label: &str, input: usize, units: usize) -> Dense {
        Dense {
            label: label.to_string(),
            weight: Param::new(
                format!("{label}.weight"),
                init_uniform(rng, &[units, input], input),
            ),
            bias: Param::new(format!("{label}.bias"), Tensor::zeros(&[units])),
            cache: Vec::new(),
        }
    }

    pub fn units(&self) -> usize {
        self.weight.value.shape[0]
    }
}

impl Layer for Dense {
    fn name(&self) -> &str {
        &self.label
    }

    fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let (units, in_dim) = (self.weight.value.shape[0], self.weight.value.shape[1]);
        if input.rank() != 1 || input.shape[0] != in_dim {
            return Err(Error::shape(format!(
                "{}: expected input [{in_dim}], got {:?}",
                self.label, input.shape
            )));
        }
        let w = &self.weight.value.data;
        let mut out = self.bias.value.data.clone();
        for (o, out_v) in out.iter_mut().enumerate() {
            let row = &w[o * in_dim..(o + 1) * in_dim];
            *out_v += row
                .iter()
                .zip(&input.data)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        }
        self.cache.push(input.clone());
        Ok(Tensor::from_vec(&[units], out)?)
    }

    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        let input = pop_cache(&mut self.cache, &self.label)?;
        let (units, in_dim) = (self.weight.value.shape[0], self.weight.value.shape[1]);
        if upstream.shape != [units] {
            return Err(Error::shape(format!(
                "{}: upstream shape {:?}, expected [{units}]",
                self.label, upstream.shape
            )));
        }
        let mut dx = vec![0.0; in_dim];
        for o in 0..units {
            let g = upstream.data[o];
            self.bias.grad.data[o] += g;
            let wrow = &self.weight.value.data[o * in_dim..(o + 1) * in_dim];
            let grow = &mut self.weight.grad.data[o * in_dim..(o + 1) * in_dim];
            for i in 0..in_dim {
                grow[i] += g * input.data[i];
                dx[i] += g * wrow[i];
            }
        }
        Ok(Tensor::vector(dx))
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn clear_cache(&mut self) {
        self.cache.clear();
    }
}

/// Rectified linear activation, elementwise on any shape.
pub struct Relu {
    cache: Vec<Tensor>,
}

impl Relu {
    pub fn new() -> Relu {
        Relu { cache: Vec::new() }
    }
}

impl Default for Relu {
    fn default() -> Self {
        Self::new()
    }
}

impl Layer for Relu {
    fn name(&self) -> &str {
        "relu"
    }

    fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        self.cache.push(input.clone());
        Ok(Tensor {
            shape: input.shape.clone(),
            data: input.data.iter().map(|&v| v.max(0.0)).collect(),
        })
    }

    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        let input = pop_cache(&mut self.cache, "relu")?;
        Ok(Tensor {
            shape: input.shape.clone(),
            data: input
                .data
                .iter()
                .zip(&upstream.data)
                .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                .collect(),
        })
    }

    fn clear_cache(&mut self) {
        self.cache.clear();
    }
}

/// Identity activation closing a regression head.
pub struct LinearActivation;

impl Layer for LinearActivation {
    fn name(&self) -> &str {
        "linear"
    }

    fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        Ok(input.clone())
    }

    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        Ok(upstream.clone())
    }

    fn clear_cache(&mut self) {}
}

/// Collapse any shape to a rank-1 tensor.
pub struct Flatten {
    cache: Vec<Vec<usize>>,
}

impl Flatten {
    pub fn new() -> Flatten {
        Flatten { cache: Vec::new() }
    }
}

impl Default for Flatten {
    fn default() -> Self {
        Self::new()
    }
}

impl Layer for Flatten {
    fn name(&self) -> &str {
        "flatten"
    }

    fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        self.cache.push(input.shape.clone());
        Ok(Tensor::vector(input.data.clone()))
    }

    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        let shape = pop_cache(&mut self.cache, "flatten")?;
        Tensor::from_vec(&shape, upstream.data.clone())
    }

    fn clear_cache(&mut self) {
        self.cache.clear();
    }
}

/// Split the time axis of a [w, c] input into [segments, w/segments, c].
/// Row-major layout is unchanged, so flattening the output in segment-major
/// order reproduces the input row for row.
pub struct SegmentReshape {
    pub segments: usize,
}

impl Layer for SegmentReshape {
    fn name(&self) -> &str {
        "segment-reshape"
    }

    fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        if input.rank() != 2 {
            return Err(Error::shape(format!(
                "segment-reshape: expected rank-2 input, got {:?}",
                input.shape
            )));
        }
        let (w, c) = (input.shape[0], input.shape[1]);
        if w % self.segments != 0 {
            return Err(Error::shape(format!(
                "segment-reshape: window {w} not divisible by {} segments",
                self.segments
            )));
        }
        input
            .clone()
            .reshaped(&[self.segments, w / self.segments, c])
    }

    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        let (seg, wseg, c) = (
            upstream.shape[0],
            upstream.shape[1],
            upstream.shape[2],
        );
        upstream.clone().reshaped(&[seg * wseg, c])
    }

    fn clear_cache(&mut self) {}
}

/// One dense branch per input channel, concatenated: input [w, c] feeds c
/// parallel Dense(units) branches on the per-channel series, output
/// [c * units].
pub struct PerChannelDense {
    label: String,
    branches: Vec<Dense>,
    cache: Vec<(usize, usize)>,
}

impl PerChannelDense {
    pub fn new<R: Rng>(rng: &mut R, label: &str, window: usize, channels: usize, units: usize) -> Self {
        let branches = (0..channels)
            .map(|c| Dense::new(rng, &format!("{label}.branch{c}"), window, units))
            .collect();
        PerChannelDense {
            label: label.to_string(),
            branches,
            cache: Vec::new(),
        }
    }
}

impl Layer for PerChannelDense {
    fn name(&self) -> &str {
        &self.label
    }

    fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        if input.rank() != 2 || input.shape[1] != self.branches.len() {
            return Err(Error::shape(format!(
                "{}: expected [w, {}], got {:?}",
                self.label,
                self.branches.len(),
                input.shape
            )));
        }
        let (w, c) = (input.shape[0], input.shape[1]);
        let mut out = Vec::new();
        for (j, branch) in self.branches.iter_mut().enumerate() {
            let column: Vec<f64> = (0..w).map(|t| input.data[t * c + j]).collect();
            let y = branch.forward(&Tensor::vector(column))?;
            out.extend_from_slice(&y.data);
        }
        self.cache.push((w, c));
        Ok(Tensor::vector(out))
    }

    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        let (w, c) = pop_cache(&mut self.cache, &self.label)?;
        let units = self.branches[0].units();
        let mut dx = Tensor::zeros(&[w, c]);
        // branches were pushed in order; pop their caches in reverse
        for (j, branch) in self.branches.iter_mut().enumerate().rev() {
            let g = Tensor::vector(upstream.data[j * units..(j + 1) * units].to_vec());
            let dcol = branch.backward(&g)?;
            for t in 0..w {
                dx.data[t * c + j] = dcol.data[t];
            }
        }
        Ok(dx)
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.branches.iter_mut().flat_map(|b| b.params_mut()).collect()
    }

    fn params(&self) -> Vec<&Param> {
        self.branches.iter().flat_map(|b| b.params()).collect()
    }

    fn clear_cache(&mut self) {
        self.cache.clear();
        for b in &mut self.branches {
            b.clear_cache();
        }
    }
}
