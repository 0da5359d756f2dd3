use rand::Rng;

use crate::error::Error;
use crate::Result;

use super::layer::{init_uniform, pop_cache, Layer, Param};
use super::tensor::Tensor;

/// 1-D convolution over the time axis, valid padding, stride 1.
/// Input [t, c_in], kernel [filters, k, c_in], output [t - k + 1, filters].
pub struct Conv1d {
    label: String,
    kernel: Param,
    bias: Param,
    cache: Vec<Tensor>,
}

impl Conv1d {
    pub fn new<R: Rng>(rng: &mut R, label: &str, in_channels: usize, filters: usize, k: usize) -> Conv1d {
        Conv1d {
            label: label.to_string(),
            kernel: Param::new(
                format!("{label}.kernel"),
                init_uniform(rng, &[filters, k, in_channels], k * in_channels),
            ),
            bias: Param::new(format!("{label}.bias"), Tensor::zeros(&[filters])),
            cache: Vec::new(),
        }
    }

    fn dims(&self) -> (usize, usize, usize) {
        (
            self.kernel.value.shape[0],
            self.kernel.value.shape[1],
            self.kernel.value.shape[2],
        )
    }
}

impl Layer for Conv1d {
    fn name(&self) -> &str {
        &self.label
    }

    fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let (filters, k, cin) = self.dims();
        if input.rank() != 2 || input.shape[1] != cin {
            return Err(Error::shape(format!(
                "{}: expected [t, {cin}], got {:?}",
                self.label, input.shape
            )));
        }
        let t = input.shape[0];
        if t < k {
            return Err(Error::shape(format!(
                "{}: input length {t} shorter than kernel {k}",
                self.label
            )));
        }
        let t_out = t - k + 1;
        let mut out = Tensor::zeros(&[t_out, filters]);
        let kw = &self.kernel.value.data;
        for i in 0..t_out {
            for f in 0..filters {
                let mut acc = self.bias.value.data[f];
                for dk in 0..k {
                    let xrow = &input.data[(i + dk) * cin..(i + dk + 1) * cin];
                    let krow = &kw[f * k * cin + dk * cin..f * k * cin + (dk + 1) * cin];
                    for c in 0..cin {
                        acc += krow[c] * xrow[c];
                    }
                }
                out.data[i * filters + f] = acc;
            }
        }
        self.cache.push(input.clone());
        Ok(out)
    }

    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        let input = pop_cache(&mut self.cache, &self.label)?;
        let (filters, k, cin) = self.dims();
        let t = input.shape[0];
        let t_out = t - k + 1;
        if upstream.shape != [t_out, filters] {
            return Err(Error::shape(format!(
                "{}: upstream {:?}, expected [{t_out}, {filters}]",
                self.label, upstream.shape
            )));
        }
        let mut dx = Tensor::zeros(&[t, cin]);
        let kw = &self.kernel.value.data;
        for i in 0..t_out {
            for f in 0..filters {
                let g = upstream.data[i * filters + f];
                if g == 0.0 {
                    continue;
                }
                self.bias.grad.data[f] += g;
                for dk in 0..k {
                    let xoff = (i + dk) * cin;
                    let koff = f * k * cin + dk * cin;
                    for c in 0..cin {
                        self.kernel.grad.data[koff + c] += g * input.data[xoff + c];
                        dx.data[xoff + c] += g * kw[koff + c];
                    }
                }
            }
        }
        Ok(dx)
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.kernel, &mut self.bias]
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.kernel, &self.bias]
    }

    fn clear_cache(&mut self) {
        self.cache.clear();
    }
}

/// Max pooling over the time axis; input [t, c], output [t / pool, c]
/// (trailing remainder dropped). Gradient flows only to argmax positions.
pub struct MaxPool1d {
    pub pool: usize,
    cache: Vec<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool1d {
    pub fn new(pool: usize) -> MaxPool1d {
        MaxPool1d {
            pool,
            cache: Vec::new(),
        }
    }
}

impl Layer for MaxPool1d {
    fn name(&self) -> &str {
        "maxpool1d"
    }

    fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        if input.rank() != 2 {
            return Err(Error::shape(format!(
                "maxpool1d: expected rank-2 input, got {:?}",
                input.shape
            )));
        }
        let (t, c) = (input.shape[0], input.shape[1]);
        if t < self.pool {
            return Err(Error::shape(format!(
                "maxpool1d: input length {t} shorter than pool {}",
                self.pool
            )));
        }
        let t_out = t / self.pool;
        let mut out = Tensor::zeros(&[t_out, c]);
        let mut argmax = vec![0usize; t_out * c];
        for i in 0..t_out {
            for ch in 0..c {
                let mut best = f64::NEG_INFINITY;
                let mut best_t = 0;
                for p in 0..self.pool {
                    let v = input.data[(i * self.pool + p) * c + ch];
                    if v > best {
                        best = v;
                        best_t = i * self.pool + p;
                    }
                }
                out.data[i * c + ch] = best;
                argmax[i * c + ch] = best_t;
            }
        }
        self.cache.push((input.shape.clone(), argmax));
        Ok(out)
    }

    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        let (shape, argmax) = pop_cache(&mut self.cache, "maxpool1d")?;
        let c = shape[1];
        let mut dx = Tensor::zeros(&shape);
        for (i, &src) in argmax.iter().enumerate() {
            let ch = i % c;
            dx.data[src * c + ch] += upstream.data[i];
        }
        Ok(dx)
    }

    fn clear_cache(&mut self) {
        self.cache.clear();
    }
}
