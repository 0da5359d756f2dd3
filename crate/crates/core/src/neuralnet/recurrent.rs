use rand::Rng;

use crate::error::Error;
use crate::Result;

use super::layer::{init_uniform, pop_cache, Layer, Param};
use super::tensor::Tensor;

fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        out[r] += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// out += W^T g, accumulating into a cols-length vector.
fn matvec_t(w: &[f64], rows: usize, cols: usize, g: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let gv = g[r];
        if gv == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for c in 0..cols {
            out[c] += gv * row[c];
        }
    }
}

/// dW += g x^T (outer product accumulate).
fn outer_acc(gw: &mut [f64], g: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, &gv) in g.iter().enumerate() {
        if gv == 0.0 {
            continue;
        }
        let row = &mut gw[r * cols..(r + 1) * cols];
        for c in 0..cols {
            row[c] += gv * x[c];
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn reverse_time(x: &Tensor) -> Tensor {
    let (t, c) = (x.shape[0], x.shape[1]);
    let mut data = Vec::with_capacity(t * c);
    for i in (0..t).rev() {
        data.extend_from_slice(&x.data[i * c..(i + 1) * c]);
    }
    Tensor {
        shape: vec![t, c],
        data,
    }
}

struct LstmCache {
    input: Tensor,
    // per timestep, post-activation gate values and states
    i: Vec<Vec<f64>>,
    f: Vec<Vec<f64>>,
    g: Vec<Vec<f64>>,
    o: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
}

/// Long short-term memory layer with standard gate equations.
/// Input [t, d]; output [t, units] with `return_sequences`, else [units].
pub struct Lstm {
    label: String,
    units: usize,
    in_dim: usize,
    pub return_sequences: bool,
    w: Param, // [4u, d], gate order i, f, g, o
    u: Param, // [4u, u]
    b: Param, // [4u]
    cache: Vec<LstmCache>,
}

impl Lstm {
    pub fn new<R: Rng>(
        rng: &mut R,
        label: &str,
        in_dim: usize,
        units: usize,
        return_sequences: bool,
    ) -> Lstm {
        Lstm {
            label: label.to_string(),
            units,
            in_dim,
            return_sequences,
            w: Param::new(
                format!("{label}.w"),
                init_uniform(rng, &[4 * units, in_dim], in_dim),
            ),
            u: Param::new(
                format!("{label}.u"),
                init_uniform(rng, &[4 * units, units], units),
            ),
            b: Param::new(format!("{label}.b"), Tensor::zeros(&[4 * units])),
            cache: Vec::new(),
        }
    }
}

impl Layer for Lstm {
    fn name(&self) -> &str {
        &self.label
    }

    fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let u = self.units;
        if input.rank() != 2 || input.shape[1] != self.in_dim {
            return Err(Error::shape(format!(
                "{}: expected [t, {}], got {:?}",
                self.label, self.in_dim, input.shape
            )));
        }
        let t_len = input.shape[0];
        let mut cache = LstmCache {
            input: input.clone(),
            i: Vec::with_capacity(t_len),
            f: Vec::with_capacity(t_len),
            g: Vec::with_capacity(t_len),
            o: Vec::with_capacity(t_len),
            c: Vec::with_capacity(t_len),
            h: Vec::with_capacity(t_len),
        };
        let mut h_prev = vec![0.0; u];
        let mut c_prev = vec![0.0; u];
        let mut seq = Vec::with_capacity(t_len * u);
        for step in 0..t_len {
            let x = input.row(step);
            let mut pre = self.b.value.data.clone();
            matvec(&self.w.value.data, 4 * u, self.in_dim, x, &mut pre);
            matvec(&self.u.value.data, 4 * u, u, &h_prev, &mut pre);
            let mut gi = vec![0.0; u];
            let mut gf = vec![0.0; u];
            let mut gg = vec![0.0; u];
            let mut go = vec![0.0; u];
            let mut c_t = vec![0.0; u];
            let mut h_t = vec![0.0; u];
            for k in 0..u {
                gi[k] = sigmoid(pre[k]);
                gf[k] = sigmoid(pre[u + k]);
                gg[k] = pre[2 * u + k].tanh();
                go[k] = sigmoid(pre[3 * u + k]);
                c_t[k] = gf[k] * c_prev[k] + gi[k] * gg[k];
                h_t[k] = go[k] * c_t[k].tanh();
            }
            seq.extend_from_slice(&h_t);
            cache.i.push(gi);
            cache.f.push(gf);
            cache.g.push(gg);
            cache.o.push(go);
            cache.c.push(c_t.clone());
            cache.h.push(h_t.clone());
            h_prev = h_t;
            c_prev = c_t;
        }
        self.cache.push(cache);
        if self.return_sequences {
            Tensor::from_vec(&[t_len, u], seq)
        } else {
            Ok(Tensor::vector(h_prev))
        }
    }

    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        let cache = pop_cache(&mut self.cache, &self.label)?;
        let u = self.units;
        let t_len = cache.input.shape[0];
        let mut dx = Tensor::zeros(&[t_len, self.in_dim]);
        let mut dh_next = vec![0.0; u];
        let mut dc_next = vec![0.0; u];
        for step in (0..t_len).rev() {
            let mut dh = dh_next.clone();
            if self.return_sequences {
                for k in 0..u {
                    dh[k] += upstream.data[step * u + k];
                }
            } else if step == t_len - 1 {
                for k in 0..u {
                    dh[k] += upstream.data[k];
                }
            }
            let (gi, gf, gg, go, c_t) = (
                &cache.i[step],
                &cache.f[step],
                &cache.g[step],
                &cache.o[step],
                &cache.c[step],
            );
            let c_prev: &[f64] = if step == 0 { &[] } else { &cache.c[step - 1] };
            let mut dpre = vec![0.0; 4 * u];
            let mut dc = dc_next.clone();
            for k in 0..u {
                let tc = c_t[k].tanh();
                dc[k] += dh[k] * go[k] * (1.0 - tc * tc);
                let cp = if step == 0 { 0.0 } else { c_prev[k] };
                let di = dc[k] * gg[k];
                let df = dc[k] * cp;
                let dg = dc[k] * gi[k];
                let do_ = dh[k] * tc;
                dpre[k] = di * gi[k] * (1.0 - gi[k]);
                dpre[u + k] = df * gf[k] * (1.0 - gf[k]);
                dpre[2 * u + k] = dg * (1.0 - gg[k] * gg[k]);
                dpre[3 * u + k] = do_ * go[k] * (1.0 - go[k]);
                dc_next[k] = dc[k] * gf[k];
            }
            let x = cache.input.row(step);
            outer_acc(&mut self.w.grad.data, &dpre, x);
            if step > 0 {
                outer_acc(&mut self.u.grad.data, &dpre, &cache.h[step - 1]);
            }
            for k in 0..4 * u {
                self.b.grad.data[k] += dpre[k];
            }
            let dxrow = &mut dx.data[step * self.in_dim..(step + 1) * self.in_dim];
            matvec_t(&self.w.value.data, 4 * u, self.in_dim, &dpre, dxrow);
            dh_next = vec![0.0; u];
            matvec_t(&self.u.value.data, 4 * u, u, &dpre, &mut dh_next);
        }
        Ok(dx)
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.u, &mut self.b]
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.w, &self.u, &self.b]
    }

    fn clear_cache(&mut self) {
        self.cache.clear();
    }
}

struct GruCache {
    input: Tensor,
    z: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    hh: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
}

/// Gated recurrent unit with reset-before-matmul candidate.
pub struct Gru {
    label: String,
    units: usize,
    in_dim: usize,
    pub return_sequences: bool,
    w: Param, // [3u, d], gate order z, r, h
    u: Param, // [3u, u]
    b: Param, // [3u]
    cache: Vec<GruCache>,
}

impl Gru {
    pub fn new<R: Rng>(
        rng: &mut R,
        label: &str,
        in_dim: usize,
        units: usize,
        return_sequences: bool,
    ) -> Gru {
        Gru {
            label: label.to_string(),
            units,
            in_dim,
            return_sequences,
            w: Param::new(
                format!("{label}.w"),
                init_uniform(rng, &[3 * units, in_dim], in_dim),
            ),
            u: Param::new(
                format!("{label}.u"),
                init_uniform(rng, &[3 * units, units], units),
            ),
            b: Param::new(format!("{label}.b"), Tensor::zeros(&[3 * units])),
            cache: Vec::new(),
        }
    }
}

impl Layer for Gru {
    fn name(&self) -> &str {
        &self.label
    }

    fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let u = self.units;
        if input.rank() != 2 || input.shape[1] != self.in_dim {
            return Err(Error::shape(format!(
                "{}: expected [t, {}], got {:?}",
                self.label, self.in_dim, input.shape
            )));
        }
        let t_len = input.shape[0];
        let mut cache = GruCache {
            input: input.clone(),
            z: Vec::with_capacity(t_len),
            r: Vec::with_capacity(t_len),
            hh: Vec::with_capacity(t_len),
            h: Vec::with_capacity(t_len),
        };
        let mut h_prev = vec![0.0; u];
        let mut seq = Vec::with_capacity(t_len * u);
        for step in 0..t_len {
            let x = input.row(step);
            // z and r gates
            let mut pre_zr = self.b.value.data[..2 * u].to_vec();
            matvec(&self.w.value.data[..2 * u * self.in_dim], 2 * u, self.in_dim, x, &mut pre_zr);
            matvec(&self.u.value.data[..2 * u * u], 2 * u, u, &h_prev, &mut pre_zr);
            let z: Vec<f64> = (0..u).map(|k| sigmoid(pre_zr[k])).collect();
            let r: Vec<f64> = (0..u).map(|k| sigmoid(pre_zr[u + k])).collect();
            // candidate
            let rh: Vec<f64> = (0..u).map(|k| r[k] * h_prev[k]).collect();
            let mut pre_h = self.b.value.data[2 * u..].to_vec();
            matvec(
                &self.w.value.data[2 * u * self.in_dim..],
                u,
                self.in_dim,
                x,
                &mut pre_h,
            );
            matvec(&self.u.value.data[2 * u * u..], u, u, &rh, &mut pre_h);
            let hh: Vec<f64> = (0..u).map(|k| pre_h[k].tanh()).collect();
            let h_t: Vec<f64> = (0..u)
                .map(|k| (1.0 - z[k]) * h_prev[k] + z[k] * hh[k])
                .collect();
            seq.extend_from_slice(&h_t);
            cache.z.push(z);
            cache.r.push(r);
            cache.hh.push(hh);
            cache.h.push(h_t.clone());
            h_prev = h_t;
        }
        self.cache.push(cache);
        if self.return_sequences {
            Tensor::from_vec(&[t_len, u], seq)
        } else {
            Ok(Tensor::vector(h_prev))
        }
    }

    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        let cache = pop_cache(&mut self.cache, &self.label)?;
        let u = self.units;
        let d = self.in_dim;
        let t_len = cache.input.shape[0];
        let mut dx = Tensor::zeros(&[t_len, d]);
        let mut dh_next = vec![0.0; u];
        for step in (0..t_len).rev() {
            let mut dh = dh_next.clone();
            if self.return_sequences {
                for k in 0..u {
                    dh[k] += upstream.data[step * u + k];
                }
            } else if step == t_len - 1 {
                for k in 0..u {
                    dh[k] += upstream.data[k];
                }
            }
            let (z, r, hh) = (&cache.z[step], &cache.r[step], &cache.hh[step]);
            let h_prev: Vec<f64> = if step == 0 {
                vec![0.0; u]
            } else {
                cache.h[step - 1].clone()
            };
            let mut dh_prev = vec![0.0; u];
            let mut dpre_z = vec![0.0; u];
            let mut dpre_r = vec![0.0; u];
            let mut dpre_h = vec![0.0; u];
            for k in 0..u {
                let dz = dh[k] * (hh[k] - h_prev[k]);
                let dhh = dh[k] * z[k];
                dh_prev[k] += dh[k] * (1.0 - z[k]);
                dpre_z[k] = dz * z[k] * (1.0 - z[k]);
                dpre_h[k] = dhh * (1.0 - hh[k] * hh[k]);
            }
            // through the candidate's recurrent term U_h (r .* h_prev)
            let mut drh = vec![0.0; u];
            matvec_t(&self.u.value.data[2 * u * u..], u, u, &dpre_h, &mut drh);
            for k in 0..u {
                let dr = drh[k] * h_prev[k];
                dh_prev[k] += drh[k] * r[k];
                dpre_r[k] = dr * r[k] * (1.0 - r[k]);
            }
            let x = cache.input.row(step);
            let rh: Vec<f64> = (0..u).map(|k| r[k] * h_prev[k]).collect();
            outer_acc(&mut self.w.grad.data[..u * d], &dpre_z, x);
            outer_acc(&mut self.w.grad.data[u * d..2 * u * d], &dpre_r, x);
            outer_acc(&mut self.w.grad.data[2 * u * d..], &dpre_h, x);
            outer_acc(&mut self.u.grad.data[..u * u], &dpre_z, &h_prev);
            outer_acc(&mut self.u.grad.data[u * u..2 * u * u], &dpre_r, &h_prev);
            outer_acc(&mut self.u.grad.data[2 * u * u..], &dpre_h, &rh);
            for k in 0..u {
                self.b.grad.data[k] += dpre_z[k];
                self.b.grad.data[u + k] += dpre_r[k];
                self.b.grad.data[2 * u + k] += dpre_h[k];
            }
            let dxrow = &mut dx.data[step * d..(step + 1) * d];
            matvec_t(&self.w.value.data[..u * d], u, d, &dpre_z, dxrow);
            matvec_t(&self.w.value.data[u * d..2 * u * d], u, d, &dpre_r, dxrow);
            matvec_t(&self.w.value.data[2 * u * d..], u, d, &dpre_h, dxrow);
            matvec_t(&self.u.value.data[..u * u], u, u, &dpre_z, &mut dh_prev);
            matvec_t(&self.u.value.data[u * u..2 * u * u], u, u, &dpre_r, &mut dh_prev);
            dh_next = dh_prev;
        }
        Ok(dx)
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.u, &mut self.b]
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.w, &self.u, &self.b]
    }

    fn clear_cache(&mut self) {
        self.cache.clear();
    }
}

/// Wraps two recurrent layers, one reading the input forward and one reading
/// it reversed; their outputs are concatenated on the feature axis.
pub struct Bidirectional {
    label: String,
    forward_rnn: Box<dyn Layer>,
    backward_rnn: Box<dyn Layer>,
    units: usize,
    return_sequences: bool,
}

impl Bidirectional {
    pub fn new(
        label: &str,
        forward_rnn: Box<dyn Layer>,
        backward_rnn: Box<dyn Layer>,
        units: usize,
        return_sequences: bool,
    ) -> Bidirectional {
        Bidirectional {
            label: label.to_string(),
            forward_rnn,
            backward_rnn,
            units,
            return_sequences,
        }
    }
}

impl Layer for Bidirectional {
    fn name(&self) -> &str {
        &self.label
    }

    fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let y_f = self.forward_rnn.forward(input)?;
        let y_b = self.backward_rnn.forward(&reverse_time(input))?;
        let u = self.units;
        if self.return_sequences {
            let t = input.shape[0];
            let mut out = Tensor::zeros(&[t, 2 * u]);
            for step in 0..t {
                out.data[step * 2 * u..step * 2 * u + u].copy_from_slice(y_f.row(step));
                out.data[step * 2 * u + u..(step + 1) * 2 * u]
                    .copy_from_slice(y_b.row(t - 1 - step));
            }
            Ok(out)
        } else {
            let mut data = y_f.data;
            data.extend_from_slice(&y_b.data);
            Ok(Tensor::vector(data))
        }
    }

    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        let u = self.units;
        let (g_f, g_b) = if self.return_sequences {
            let t = upstream.shape[0];
            let mut g_f = Tensor::zeros(&[t, u]);
            let mut g_b = Tensor::zeros(&[t, u]);
            for step in 0..t {
                g_f.data[step * u..(step + 1) * u]
                    .copy_from_slice(&upstream.data[step * 2 * u..step * 2 * u + u]);
                g_b.data[(t - 1 - step) * u..(t - step) * u]
                    .copy_from_slice(&upstream.data[step * 2 * u + u..(step + 1) * 2 * u]);
            }
            (g_f, g_b)
        } else {
            (
                Tensor::vector(upstream.data[..u].to_vec()),
                Tensor::vector(upstream.data[u..].to_vec()),
            )
        };
        let dx_f = self.forward_rnn.backward(&g_f)?;
        let dx_b_rev = self.backward_rnn.backward(&g_b)?;
        let dx_b = reverse_time(&dx_b_rev);
        let mut dx = dx_f;
        for (a, b) in dx.data.iter_mut().zip(&dx_b.data) {
            *a += b;
        }
        Ok(dx)
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.forward_rnn.params_mut();
        p.extend(self.backward_rnn.params_mut());
        p
    }

    fn params(&self) -> Vec<&Param> {
        let mut p = self.forward_rnn.params();
        p.extend(self.backward_rnn.params());
        p
    }

    fn clear_cache(&mut self) {
        self.forward_rnn.clear_cache();
        self.backward_rnn.clear_cache();
    }
}
