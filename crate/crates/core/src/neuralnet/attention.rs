use rand::Rng;

use crate::error::Error;
use crate::Result;

use super::layer::{init_uniform, pop_cache, Layer, Param};
use super::tensor::Tensor;

/// Dot-product self-attention pooling with a learned query vector.
///
/// Input [t, d]: each timestep is scored against the query, scores pass
/// through a softmax, and the output is the attention-weighted sum of the
/// timestep vectors (shape [d]).
pub struct SelfAttention {
    label: String,
    query: Param,
    cache: Vec<(Tensor, Vec<f64>)>,
    last_alpha: Option<Vec<f64>>,
}

impl SelfAttention {
    pub fn new<R: Rng>(rng: &mut R, label: &str, dim: usize) -> SelfAttention {
        SelfAttention {
            label: label.to_string(),
            query: Param::new(format!("{label}.query"), init_uniform(rng, &[dim], dim)),
            cache: Vec::new(),
            last_alpha: None,
        }
    }
}

impl Layer for SelfAttention {
    fn name(&self) -> &str {
        &self.label
    }

    fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let d = self.query.value.shape[0];
        if input.rank() != 2 || input.shape[1] != d {
            return Err(Error::shape(format!(
                "{}: expected [t, {d}], got {:?}",
                self.label, input.shape
            )));
        }
        let t = input.shape[0];
        let q = &self.query.value.data;
        let scores: Vec<f64> = (0..t)
            .map(|i| input.row(i).iter().zip(q).map(|(a, b)| a * b).sum())
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let alpha: Vec<f64> = exps.iter().map(|e| e / z).collect();
        let mut context = vec![0.0; d];
        for i in 0..t {
            let x = input.row(i);
            for k in 0..d {
                context[k] += alpha[i] * x[k];
            }
        }
        self.last_alpha = Some(alpha.clone());
        self.cache.push((input.clone(), alpha));
        Ok(Tensor::vector(context))
    }

    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        let (input, alpha) = pop_cache(&mut self.cache, &self.label)?;
        let d = self.query.value.shape[0];
        let t = input.shape[0];
        let dc = &upstream.data;
        let mut dx = Tensor::zeros(&[t, d]);
        // direct path: context = sum alpha_i x_i
        let dalpha: Vec<f64> = (0..t)
            .map(|i| input.row(i).iter().zip(dc).map(|(a, b)| a * b).sum())
            .collect();
        for i in 0..t {
            for k in 0..d {
                dx.data[i * d + k] += alpha[i] * dc[k];
            }
        }
        // softmax jacobian back to the raw scores
        let dot: f64 = alpha.iter().zip(&dalpha).map(|(a, g)| a * g).sum();
        let dscore: Vec<f64> = (0..t).map(|i| alpha[i] * (dalpha[i] - dot)).collect();
        let q = &self.query.value.data;
        for i in 0..t {
            let x = input.row(i);
            for k in 0..d {
                self.query.grad.data[k] += dscore[i] * x[k];
                dx.data[i * d + k] += dscore[i] * q[k];
            }
        }
        Ok(dx)
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.query]
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.query]
    }

    fn clear_cache(&mut self) {
        self.cache.clear();
    }

    fn attention_weights(&self) -> Option<Vec<f64>> {
        self.last_alpha.clone()
    }
}
