//! Reverse-mode gradients on a small MLP, checked against central
//! finite differences in f64.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tcrlab::tensor::{Tape, Tensor};

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn loss(tape: &mut Tape<f64>, x: Tensor<f64>, w: Tensor<f64>) -> (f64, Vec<f64>) {
    let x = tape.var(x);
    let w = tape.var(w);
    let h = tape.matmul(x, w).unwrap();
    let h = tape.gelu(h);
    let y = tape.sum_all(h);
    let g = tape.backward(y).unwrap();
    (tape.scalar(y), g.get(w).unwrap().to_vec())
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = random(&mut rng, &[4, 3]);
    let w = random(&mut rng, &[3, 2]);
    let (_, analytic) = loss(&mut Tape::new(), x.clone(), w.clone());
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for i in 0..w.len() {
        let shifted = |d: f64| {
            let mut w2 = w.clone();
            w2.data_mut()[i] += d;
            loss(&mut Tape::new(), x.clone(), w2).0
        };
        let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
        let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-12);
        println!(
            "dL/dw[{i}]  analytic {:+.8}  numeric {:+.8}",
            analytic[i], numeric
        );
        worst = worst.max(rel);
    }
    println!("max relative error {worst:.2e}");
}
