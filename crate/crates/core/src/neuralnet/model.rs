use crate::error::Error;
use crate::Result;

use super::layer::{pop_cache, Layer, Param};
use super::tensor::Tensor;

/// Applies an inner layer chain independently to every segment of a rank-3
/// [segments, w, c] input, concatenating the per-segment output vectors into
/// a [segments, f] sequence. The inner layers' cache stacks accumulate one
/// entry per segment, so backward replays the segments in reverse.
pub struct TimeDistributed {
    label: String,
    inner: Vec<Box<dyn Layer>>,
    cache: Vec<usize>,
}

impl TimeDistributed {
    pub fn new(label: &str, inner: Vec<Box<dyn Layer>>) -> TimeDistributed {
        TimeDistributed {
            label: label.to_string(),
            inner,
            cache: Vec::new(),
        }
    }
}

impl Layer for TimeDistributed {
    fn name(&self) -> &str {
        &self.label
    }

    fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        if input.rank() != 3 {
            return Err(Error::shape(format!(
                "{}: expected rank-3 input, got {:?}",
                self.label, input.shape
            )));
        }
        let (segments, w, c) = (input.shape[0], input.shape[1], input.shape[2]);
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(segments);
        for s in 0..segments {
            let slice = Tensor::from_vec(
                &[w, c],
                input.data[s * w * c..(s + 1) * w * c].to_vec(),
            )?;
            let mut x = slice;
            for layer in &mut self.inner {
                x = layer.forward(&x)?;
            }
            if x.rank() != 1 {
                return Err(Error::shape(format!(
                    "{}: inner chain must emit a vector, got {:?}",
                    self.label, x.shape
                )));
            }
            rows.push(x.data);
        }
        let f = rows[0].len();
        let mut data = Vec::with_capacity(segments * f);
        for row in rows {
            data.extend_from_slice(&row);
        }
        self.cache.push(segments);
        Tensor::from_vec(&[segments, f], data)
    }

    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        let segments = pop_cache(&mut self.cache, &self.label)?;
        let f = upstream.shape[1];
        let mut seg_grads: Vec<Tensor> = Vec::with_capacity(segments);
        // inner caches are stacked segment 0..n; pop in reverse
        for s in (0..segments).rev() {
            let mut g = Tensor::vector(upstream.data[s * f..(s + 1) * f].to_vec());
            for layer in self.inner.iter_mut().rev() {
                g = layer.backward(&g)?;
            }
            seg_grads.push(g);
        }
        seg_grads.reverse();
        let (w, c) = (seg_grads[0].shape[0], seg_grads[0].shape[1]);
        let mut data = Vec::with_capacity(segments * w * c);
        for g in seg_grads {
            data.extend_from_slice(&g.data);
        }
        Tensor::from_vec(&[segments, w, c], data)
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.inner.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    fn params(&self) -> Vec<&Param> {
        self.inner.iter().flat_map(|l| l.params()).collect()
    }

    fn clear_cache(&mut self) {
        self.cache.clear();
        for layer in &mut self.inner {
            layer.clear_cache();
        }
    }
}

/// A straight-line layer graph: the output of each layer feeds the next.
pub struct Sequential {
    pub name: String,
    pub layers: Vec<Box<dyn Layer>>,
}

impl std::fmt::Debug for Sequential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Sequential")
            .field("name", &self.name)
            .field("layers", &self.layers.iter().map(|l| l.name()).collect::<Vec<_>>())
            .finish()
    }
}

impl Sequential {
    pub fn new(name: impl Into<String>, layers: Vec<Box<dyn Layer>>) -> Sequential {
        Sequential {
            name: name.into(),
            layers,
        }
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let mut x = input.clone();
        for layer in &mut self.layers {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    pub fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        let mut g = upstream.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    /// Forward pass that leaves no cached activations behind.
    pub fn predict_one(&mut self, input: &Tensor) -> Result<Tensor> {
        let out = self.forward(input);
        self.clear_cache();
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn clear_cache(&mut self) {
        for layer in &mut self.layers {
            layer.clear_cache();
        }
    }

    /// Snapshot of all parameter values, in graph order.
    pub fn snapshot(&self) -> Vec<Tensor> {
        self.params().iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Tensor]) -> Result<()> {
        let mut params = self.params_mut();
        if params.len() != snapshot.len() {
            return Err(Error::shape(format!(
                "snapshot has {} tensors, model has {} parameters",
                snapshot.len(),
                params.len()
            )));
        }
        for (p, s) in params.iter_mut().zip(snapshot) {
            if p.value.shape != s.shape {
                return Err(Error::shape(format!(
                    "snapshot shape {:?} does not match parameter {} {:?}",
                    s.shape, p.name, p.value.shape
                )));
            }
            p.value = s.clone();
        }
        Ok(())
    }

    /// Attention distribution from the most recent forward pass, if any layer
    /// in the graph computes one.
    pub fn attention_weights(&self) -> Option<Vec<f64>> {
        self.layers.iter().find_map(|l| l.attention_weights())
    }

    pub fn has_attention(&self) -> bool {
        self.layers.iter().any(|l| l.name().contains("attention"))
    }
}
