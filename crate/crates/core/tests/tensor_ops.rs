mod support;

use std::rc::Rc;

use proptest::prelude::*;
use support::{gradcheck, random_tensor, rng, REL_TOL};
use tcrlab::tensor::{Tape, Tensor};
use tcrlab::Error;

fn t(rows: &[&[f64]]) -> Tensor<f64> {
    Tensor::from_rows(rows).unwrap()
}

#[test]
fn matmul_identity_and_projector() {
    let mut tape = Tape::new();
    let eye = tape.constant(t(&[&[1.0, 0.0], &[0.0, 1.0]]));
    let m = tape.constant(t(&[&[1.0, 2.0], &[3.0, 4.0]]));
    let out = tape.matmul(eye, m).unwrap();
    assert_eq!(tape.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);

    let p = tape.constant(t(&[&[1.0, 0.0], &[0.0, 0.0]]));
    let m = tape.constant(t(&[&[5.0, 6.0], &[7.0, 8.0]]));
    let out = tape.matmul(p, m).unwrap();
    assert_eq!(tape.value(out).data(), &[5.0, 6.0, 0.0, 0.0]);
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let mut tape = Tape::<f64>::new();
    let a = tape.constant(Tensor::zeros(vec![2, 3]));
    let b = tape.constant(Tensor::zeros(vec![2, 3]));
    match tape.matmul(a, b) {
        Err(Error::Shape { lhs, rhs, .. }) => {
            assert_eq!(lhs, vec![2, 3]);
            assert_eq!(rhs, vec![2, 3]);
        }
        other => panic!("expected shape error, got {other:?}"),
    }
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let mut r = rng(1);
    let inputs = [
        random_tensor(&mut r, &[3, 4]),
        random_tensor(&mut r, &[4, 2]),
    ];
    let err = gradcheck(&inputs, 1, |tape, v| tape.matmul(v[0], v[1]).unwrap());
    assert!(err < REL_TOL, "max rel err {err}");
}

#[test]
fn softmax_examples() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::new(vec![3], vec![0.0; 3]).unwrap());
    let y = tape.softmax_lastdim(x).unwrap();
    for v in tape.value(y).data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }
    let x = tape.constant(Tensor::new(vec![2], vec![1000.0, 0.0]).unwrap());
    let y = tape.softmax_lastdim(x).unwrap();
    let d = tape.value(y).data();
    assert!((d[0] - 1.0).abs() < 1e-6 && d[1].abs() < 1e-6);

    let x = tape.constant(Tensor::new(vec![2], vec![f64::NAN, 0.0]).unwrap());
    assert!(matches!(tape.softmax_lastdim(x), Err(Error::NonFinite(_))));
}

#[test]
fn softmax_gradient_matches_finite_differences() {
    let mut r = rng(2);
    let inputs = [random_tensor(&mut r, &[7])];
    let err = gradcheck(&inputs, 2, |tape, v| tape.softmax_lastdim(v[0]).unwrap());
    assert!(err < REL_TOL, "max rel err {err}");
}

#[test]
fn layer_norm_examples() {
    let mut tape = Tape::<f64>::new();
    let g = tape.constant(Tensor::new(vec![4], vec![1.0; 4]).unwrap());
    let b = tape.constant(Tensor::zeros(vec![4]));
    let x = tape.constant(Tensor::new(vec![1, 4], vec![5.0; 4]).unwrap());
    let y = tape.layer_norm(x, g, b).unwrap();
    assert!(tape.value(y).data().iter().all(|v| *v == 0.0));

    let g = tape.constant(Tensor::new(vec![2], vec![1.0; 2]).unwrap());
    let b = tape.constant(Tensor::zeros(vec![2]));
    let x = tape.constant(Tensor::new(vec![1, 2], vec![1.0, -1.0]).unwrap());
    let y = tape.layer_norm(x, g, b).unwrap();
    let d = tape.value(y).data();
    assert!((d[0] - 1.0).abs() < 1e-3 && (d[1] + 1.0).abs() < 1e-3);
}

#[test]
fn layer_norm_gradient_matches_finite_differences() {
    let mut r = rng(3);
    let inputs = [
        random_tensor(&mut r, &[3, 5]),
        random_tensor(&mut r, &[5]),
        random_tensor(&mut r, &[5]),
    ];
    let err = gradcheck(&inputs, 3, |tape, v| {
        tape.layer_norm(v[0], v[1], v[2]).unwrap()
    });
    assert!(err < REL_TOL, "max rel err {err}");
}

#[test]
fn cross_entropy_examples() {
    let mut tape = Tape::<f64>::new();
    let l = tape.constant(t(&[&[10.0, -10.0]]));
    let loss = tape.cross_entropy(l, &[0], -100).unwrap();
    assert!(tape.scalar(loss) < 1e-4);

    let l = tape.constant(Tensor::zeros(vec![3, 4]));
    let loss = tape.cross_entropy(l, &[0, 2, 3], -100).unwrap();
    assert!((tape.scalar(loss) - 4f64.ln()).abs() < 1e-12);

    let loss = tape.cross_entropy(l, &[-100, -100, -100], -100).unwrap();
    assert_eq!(tape.scalar(loss), 0.0);

    assert!(matches!(
        tape.cross_entropy(l, &[0, 4, 1], -100),
        Err(Error::Index(_))
    ));
}

#[test]
fn cross_entropy_gradient_matches_finite_differences() {
    let mut r = rng(4);
    let inputs = [random_tensor(&mut r, &[4, 3])];
    let err = gradcheck(&inputs, 4, |tape, v| {
        tape.cross_entropy(v[0], &[2, -1, 0, 1], -1).unwrap()
    });
    assert!(err < REL_TOL, "max rel err {err}");
}

#[test]
fn diamond_graph_accumulates_additively() {
    // y = x*x + 3x  =>  dy/dx = 2x + 3
    let mut tape = Tape::<f64>::new();
    let x = tape.var(Tensor::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap());
    let sq = tape.mul(x, x).unwrap();
    let lin = tape.scale(x, 3.0);
    let y = tape.add(sq, lin).unwrap();
    let s = tape.sum_all(y);
    let grads = tape.backward(s).unwrap();
    assert_eq!(grads.get(x).unwrap(), &[4.0, 1.0, 7.0]);
}

#[test]
fn fused_attention_matches_composed_primitives() {
    let mut r = rng(5);
    let (lq, lk, d) = (3, 4, 6);
    let q = random_tensor(&mut r, &[lq, d]);
    let k = random_tensor(&mut r, &[lk, d]);
    let v = random_tensor(&mut r, &[lk, d]);
    let mask = vec![true, false, true, true];

    let mut tape = Tape::new();
    let (qv, kv, vv) = (
        tape.constant(q.clone()),
        tape.constant(k.clone()),
        tape.constant(v.clone()),
    );
    let fused = tape
        .attention(qv, kv, vv, Rc::new(mask.clone()), 1, 1)
        .unwrap();

    let kt = tape.transpose(kv).unwrap();
    let s = tape.matmul(qv, kt).unwrap();
    let s = tape.scale(s, 1.0 / (d as f64).sqrt());
    let bias: Vec<f64> = (0..lq)
        .flat_map(|_| mask.iter().map(|m| if *m { 0.0 } else { -1e30 }))
        .collect();
    let bias = tape.constant(Tensor::new(vec![lq, lk], bias).unwrap());
    let s = tape.add(s, bias).unwrap();
    let p = tape.softmax_lastdim(s).unwrap();
    let composed = tape.matmul(p, vv).unwrap();

    for (a, b) in tape
        .value(fused)
        .data()
        .iter()
        .zip(tape.value(composed).data())
    {
        assert!((a - b).abs() < 1e-12);
    }
    let w = tape.attention_weights(fused).unwrap();
    for row in w.chunks(lk) {
        assert_eq!(row[1], 0.0);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn attention_gradient_matches_finite_differences() {
    let mut r = rng(6);
    let (batch, lq, lk, d) = (2, 3, 4, 4);
    let inputs = [
        random_tensor(&mut r, &[batch * lq, d]),
        random_tensor(&mut r, &[batch * lk, d]),
        random_tensor(&mut r, &[batch * lk, d]),
    ];
    let mask = Rc::new(vec![true, true, false, true, true, false, true, true]);
    let err = gradcheck(&inputs, 6, |tape, v| {
        tape.attention(v[0], v[1], v[2], mask.clone(), batch, 2)
            .unwrap()
    });
    assert!(err < REL_TOL, "max rel err {err}");
}

#[test]
fn fully_masked_attention_row_is_zero() {
    let mut tape = Tape::<f64>::new();
    let q = tape.constant(Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap());
    let k = tape.constant(Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
    let out = tape
        .attention(q, k, k, Rc::new(vec![false, false]), 1, 1)
        .unwrap();
    assert_eq!(tape.value(out).data(), &[0.0, 0.0]);
}

#[test]
fn structural_ops_gradients_match_finite_differences() {
    let mut r = rng(7);
    let inputs = [
        random_tensor(&mut r, &[4, 3]),
        random_tensor(&mut r, &[2, 3]),
        random_tensor(&mut r, &[3]),
    ];
    let err = gradcheck(&inputs, 7, |tape, v| {
        let emb = tape.embedding(v[0], &[1, 3, 3, 0]).unwrap();
        let seq = tape.concat_seq(&[(emb, 2), (v[1], 1)], 2).unwrap();
        let g = tape.gelu(seq);
        let b = tape.add_bias(g, v[2]).unwrap();
        let rows = tape.gather_rows(b, &[0, 3, 5]).unwrap();
        let t = tape.transpose(rows).unwrap();
        let c = tape.concat_cols(&[t, t]).unwrap();
        let w = tape.weighted_sum(&[(c, 0.5), (c, 2.0)]).unwrap();
        tape.scale(w, 1.5)
    });
    assert!(err < REL_TOL, "max rel err {err}");
}

#[test]
fn zero_weight_terms_are_cut_from_backward() {
    let mut tape = Tape::<f64>::new();
    let a = tape.var(Tensor::scalar(2.0));
    let b = tape.var(Tensor::scalar(3.0));
    let s = tape.weighted_sum(&[(a, 1.0), (b, 0.0)]).unwrap();
    assert_eq!(tape.scalar(s), 2.0);
    let g = tape.backward(s).unwrap();
    assert_eq!(g.get(a).unwrap(), &[1.0]);
    assert!(g.get(b).is_none());
}

#[test]
fn seeded_forward_backward_is_bitwise_repeatable() {
    let run = || {
        let mut r = rng(8);
        let x = random_tensor(&mut r, &[5, 4]);
        let w = random_tensor(&mut r, &[4, 4]);
        let mut tape = Tape::new();
        let (xv, wv) = (tape.var(x), tape.var(w));
        let h = tape.matmul(xv, wv).unwrap();
        let h = tape.dropout(h, 0.3, &mut rng(9));
        let p = tape.softmax_lastdim(h).unwrap();
        let s = tape.sum_all(p);
        let g = tape.backward(s).unwrap();
        let bits = |s: &[f64]| s.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        (bits(tape.value(p).data()), bits(g.get(wv).unwrap()))
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(xs in proptest::collection::vec(-50.0f64..50.0, 1..40), width in 1usize..8) {
        let n = xs.len() - xs.len() % width;
        prop_assume!(n > 0);
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::new(vec![n / width, width], xs[..n].to_vec()).unwrap());
        let y = tape.softmax_lastdim(x).unwrap();
        for row in tape.value(y).data().chunks(width) {
            prop_assert!(row.iter().all(|v| *v >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}
