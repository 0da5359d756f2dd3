//! Minimal neural-network engine: dense row-major tensors, layers with exact
//! analytic backpropagation, Adam, MSE loss, and an early-stopping training
//! loop. Everything is f64 and deterministic under a fixed seed.

pub mod adam;
pub mod attention;
pub mod checkpoint;
pub mod conv;
pub mod layer;
pub mod model;
pub mod recurrent;
pub mod tensor;
pub mod train;

pub use adam::Adam;
pub use attention::SelfAttention;
pub use conv::{Conv1d, MaxPool1d};
pub use layer::{
    init_uniform, Dense, Flatten, Layer, LinearActivation, Param, PerChannelDense, Relu,
    SegmentReshape,
};
pub use model::{Sequential, TimeDistributed};
pub use recurrent::{Bidirectional, Gru, Lstm};
pub use tensor::Tensor;
pub use train::{predict, train, EpochStats, TrainConfig, TrainHistory};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::Result;

/// Compare the model's analytic gradients against central finite differences
/// (step `h = 1e-5`) on the scalar loss `sum(c .* output)` for random fixed
/// coefficients `c`. Returns the maximum relative error over the sampled
/// parameter entries and all input entries. `samples_per_param` bounds the
/// number of entries probed in each parameter tensor so large graphs stay
/// checkable.
pub fn gradient_check(
    model: &mut Sequential,
    input: &Tensor,
    seed: u64,
    samples_per_param: usize,
) -> Result<f64> {
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = model.predict_one(input)?;
    let coeff: Vec<f64> = (0..out.numel()).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let loss = |model: &mut Sequential, x: &Tensor| -> Result<f64> {
        let y = model.predict_one(x)?;
        Ok(y.data.iter().zip(&coeff).map(|(a, b)| a * b).sum())
    };

    // analytic pass
    model.zero_grad();
    let y = model.forward(input)?;
    let upstream = Tensor::from_vec(&y.shape, coeff.clone())?;
    let dx = model.backward(&upstream)?;

    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
    let mut worst = 0.0f64;

    // input gradient: probe every entry
    let mut x = input.clone();
    for k in 0..x.numel() {
        let orig = x.data[k];
        x.data[k] = orig + H;
        let lp = loss(model, &x)?;
        x.data[k] = orig - H;
        let lm = loss(model, &x)?;
        x.data[k] = orig;
        worst = worst.max(rel(dx.data[k], (lp - lm) / (2.0 * H)));
    }

    // parameter gradients: probe a sample of entries per tensor
    let analytic: Vec<Tensor> = model.params().iter().map(|p| p.grad.clone()).collect();
    let n_params = analytic.len();
    for pi in 0..n_params {
        let numel = analytic[pi].numel();
        let picks: Vec<usize> = if numel <= samples_per_param {
            (0..numel).collect()
        } else {
            (0..samples_per_param).map(|_| rng.gen_range(0..numel)).collect()
        };
        for k in picks {
            let orig = model.params()[pi].value.data[k];
            model.params_mut()[pi].value.data[k] = orig + H;
            let lp = loss(model, input)?;
            model.params_mut()[pi].value.data[k] = orig - H;
            let lm = loss(model, input)?;
            model.params_mut()[pi].value.data[k] = orig;
            worst = worst.max(rel(analytic[pi].data[k], (lp - lm) / (2.0 * H)));
        }
    }
    model.clear_cache();
    Ok(worst)
}
