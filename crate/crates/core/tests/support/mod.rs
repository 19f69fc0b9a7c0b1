#![allow(dead_code)]

pub mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tcrlab::tensor::{Tape, Tensor, Var};

pub const FD_STEP: f64 = 1e-4;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_FLOOR: f64 = 1e-8;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// Elementwise error between an analytic and a numeric derivative.
///
/// Differences below [`ABS_FLOOR`] count as exact: central differences
/// cannot resolve gradients that are structurally zero (e.g. a softmax
/// shift) below the rounding noise of the loss.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff <= ABS_FLOOR {
        0.0
    } else {
        diff / analytic.abs().max(numeric.abs())
    }
}

/// Central finite-difference check of `build` at `inputs`.
///
/// The graph output is projected onto a fixed random direction so that
/// every output element contributes. Returns the worst elementwise
/// [`relative_error`].
pub fn gradcheck<F>(inputs: &[Tensor<f64>], seed: u64, build: F) -> f64
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Var,
{
    let eval = |xs: &[Tensor<f64>], with_grad: bool| -> (f64, Vec<Vec<f64>>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|t| tape.var(t.clone())).collect();
        let out = build(&mut tape, &vars);
        let mut r = rng(seed ^ 0x9e37_79b9);
        let proj = random_tensor(&mut r, tape.shape(out));
        let proj = tape.constant(Tensor::new(tape.shape(out).to_vec(), proj.into_data()).unwrap());
        let prod = tape.mul(out, proj).unwrap();
        let loss = tape.sum_all(prod);
        let value = tape.scalar(loss);
        if !with_grad {
            return (value, Vec::new());
        }
        let grads = tape.backward(loss).unwrap();
        let g = vars
            .iter()
            .zip(xs)
            .map(|(v, t)| {
                grads
                    .get(*v)
                    .map(|s| s.to_vec())
                    .unwrap_or(vec![0.0; t.len()])
            })
            .collect();
        (value, g)
    };
    let (_, analytic) = eval(inputs, true);
    let mut worst: f64 = 0.0;
    for (i, input) in inputs.iter().enumerate() {
        for j in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= FD_STEP;
            let numeric = (eval(&plus, false).0 - eval(&minus, false).0) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(analytic[i][j], numeric));
        }
    }
    worst
}
