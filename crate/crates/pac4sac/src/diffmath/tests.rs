use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{central_difference, compare, DEFAULT_STEP};
use super::{Tape, Tensor};
use crate::error::Error;

fn assert_close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol, "expected {b}, got {a} (tol {tol})");
}

fn random_vec(rng: &mut ChaCha8Rng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(lo..hi)).collect()
}

#[test]
fn matmul_identity() {
    let eye = Tensor::from_values(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
    let x = Tensor::from_values(vec![3.0, -1.0, 0.5, 2.0], &[2, 2]).unwrap();
    let y = eye.matmul(&x).unwrap();
    assert_eq!(y.values(), x.values());
}

#[test]
fn matmul_direct_arithmetic() {
    let a = Tensor::from_values(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
    let b = Tensor::from_values(vec![1.0, 1.0], &[2, 1]).unwrap();
    let c = a.matmul(&b).unwrap();
    assert_eq!(c.shape(), &[2, 1]);
    assert_eq!(c.values(), &[3.0, 7.0]);
}

#[test]
fn matmul_shape_mismatch_reports_both_shapes() {
    let a = Tensor::from_values(vec![0.0; 6], &[2, 3]).unwrap();
    let b = Tensor::from_values(vec![0.0; 4], &[2, 2]).unwrap();
    match a.matmul(&b) {
        Err(Error::ShapeMismatch { left, right }) => {
            assert_eq!(left, vec![2, 3]);
            assert_eq!(right, vec![2, 2]);
        }
        other => panic!("expected shape mismatch, got {other:?}"),
    }
}

/// Weighted-sum loss so gradients are generic (a plain sum can hide errors).
fn weighted_loss(out: &Tensor, weights: &[f64]) -> Tensor {
    let w = Tensor::from_values(weights.to_vec(), out.shape()).unwrap();
    out.mul(&w).unwrap().sum()
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a_vals = random_vec(&mut rng, 12, -2.0, 2.0);
    let b_vals = random_vec(&mut rng, 8, -2.0, 2.0);
    let w = random_vec(&mut rng, 6, -1.0, 1.0);

    let tape = Tape::new();
    let a = tape.leaf(a_vals.clone(), &[3, 4]).unwrap();
    let b = tape.leaf(b_vals.clone(), &[4, 2]).unwrap();
    let loss = weighted_loss(&a.matmul(&b).unwrap(), &w);
    loss.backward().unwrap();

    let mut f_a = |x: &[f64]| {
        let a = Tensor::from_values(x.to_vec(), &[3, 4]).unwrap();
        let b = Tensor::from_values(b_vals.clone(), &[4, 2]).unwrap();
        weighted_loss(&a.matmul(&b).unwrap(), &w).item()
    };
    let num_a = central_difference(&mut f_a, &a_vals, DEFAULT_STEP);
    compare(&a.grad().unwrap(), &num_a, 1e-4, 1e-6).unwrap();

    let mut f_b = |x: &[f64]| {
        let a = Tensor::from_values(a_vals.clone(), &[3, 4]).unwrap();
        let b = Tensor::from_values(x.to_vec(), &[4, 2]).unwrap();
        weighted_loss(&a.matmul(&b).unwrap(), &w).item()
    };
    let num_b = central_difference(&mut f_b, &b_vals, DEFAULT_STEP);
    compare(&b.grad().unwrap(), &num_b, 1e-4, 1e-6).unwrap();
}

#[test]
fn silu_fixed_points() {
    let x = Tensor::from_values(vec![0.0, 30.0], &[2]).unwrap();
    let y = x.silu();
    assert_eq!(y.values()[0], 0.0);
    assert_close(y.values()[1], 30.0, 1e-10);
}

#[test]
fn silu_gradient_at_fixed_point() {
    let tape = Tape::new();
    let x = tape.leaf(vec![1.5], &[1]).unwrap();
    x.silu().sum().backward().unwrap();
    let mut f = |v: &[f64]| Tensor::from_values(v.to_vec(), &[1]).unwrap().silu().item();
    let num = central_difference(&mut f, &[1.5], DEFAULT_STEP);
    compare(&x.grad().unwrap(), &num, 1e-5, 1e-9).unwrap();
}

#[test]
fn tanh_fixed_points() {
    let tape = Tape::new();
    let x = tape.leaf(vec![0.0], &[1]).unwrap();
    let y = x.tanh();
    assert_eq!(y.values()[0], 0.0);
    y.sum().backward().unwrap();
    assert_eq!(x.grad().unwrap()[0], 1.0);

    let sat = Tensor::from_values(vec![30.0, -30.0], &[2]).unwrap().tanh();
    assert_close(sat.values()[0], 1.0, 1e-12);
    assert_close(sat.values()[1], -1.0, 1e-12);
    assert!(sat.values().iter().all(|v| v.is_finite()));
}

#[test]
fn tanh_gradient_matches_finite_differences() {
    let tape = Tape::new();
    let x = tape.leaf(vec![0.7], &[1]).unwrap();
    x.tanh().sum().backward().unwrap();
    let mut f = |v: &[f64]| Tensor::from_values(v.to_vec(), &[1]).unwrap().tanh().item();
    let num = central_difference(&mut f, &[0.7], DEFAULT_STEP);
    compare(&x.grad().unwrap(), &num, 1e-5, 1e-9).unwrap();
}

#[test]
fn layer_norm_constant_row_is_zero() {
    let x = Tensor::from_values(vec![4.2; 6], &[2, 3]).unwrap();
    let y = x.layer_norm(1e-5).unwrap();
    for v in y.values() {
        assert_close(*v, 0.0, 1e-9);
    }
}

#[test]
fn layer_norm_unit_variance_row() {
    let x = Tensor::from_values(vec![1.0, -1.0], &[1, 2]).unwrap();
    let y = x.layer_norm(1e-12).unwrap();
    assert_close(y.values()[0], 1.0, 1e-6);
    assert_close(y.values()[1], -1.0, 1e-6);
}

#[test]
fn layer_norm_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x_vals = random_vec(&mut rng, 10, -2.0, 2.0);
    let w = random_vec(&mut rng, 10, -1.0, 1.0);

    let tape = Tape::new();
    let x = tape.leaf(x_vals.clone(), &[2, 5]).unwrap();
    weighted_loss(&x.layer_norm(1e-5).unwrap(), &w).backward().unwrap();

    let mut f = |v: &[f64]| {
        let x = Tensor::from_values(v.to_vec(), &[2, 5]).unwrap();
        weighted_loss(&x.layer_norm(1e-5).unwrap(), &w).item()
    };
    let num = central_difference(&mut f, &x_vals, DEFAULT_STEP);
    compare(&x.grad().unwrap(), &num, 1e-4, 1e-6).unwrap();
}

#[test]
fn mean_gradient_is_uniform() {
    let tape = Tape::new();
    let x = tape.leaf(vec![1.0, 2.0, 3.0], &[3]).unwrap();
    let m = x.mean();
    assert_close(m.item(), 2.0, 1e-12);
    m.backward().unwrap();
    for g in x.grad().unwrap() {
        assert_close(g, 1.0 / 3.0, 1e-12);
    }
}

#[test]
fn square_then_sum() {
    let x = Tensor::from_values(vec![3.0, 4.0], &[2]).unwrap();
    assert_close(x.square().sum().item(), 25.0, 1e-12);
}

#[test]
fn log_rejects_non_positive() {
    let x = Tensor::from_values(vec![1.0, 0.0], &[2]).unwrap();
    assert!(matches!(x.log(), Err(Error::Domain(_))));
    let y = Tensor::from_values(vec![-0.5], &[1]).unwrap();
    assert!(matches!(y.log(), Err(Error::Domain(_))));
}

#[test]
fn backward_on_leaf_sets_grad_one() {
    let tape = Tape::new();
    let x = tape.leaf(vec![7.0], &[1]).unwrap();
    x.backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![1.0]);
}

#[test]
fn backward_bilinear_form() {
    let tape = Tape::new();
    let x = tape.leaf(vec![1.0, 2.0, 3.0], &[3]).unwrap();
    let y = tape.leaf(vec![-1.0, 0.5, 4.0], &[3]).unwrap();
    x.mul(&y).unwrap().sum().backward().unwrap();
    assert_eq!(x.grad().unwrap(), y.values());
    assert_eq!(y.grad().unwrap(), x.values());
}

#[test]
fn backward_rejects_non_scalar() {
    let tape = Tape::new();
    let x = tape.leaf(vec![1.0, 2.0], &[2]).unwrap();
    assert!(matches!(x.backward(), Err(Error::Contract(_))));
}

#[test]
fn repeated_backward_accumulates_and_zeroing_resets() {
    let tape = Tape::new();
    let x = tape.leaf(vec![1.0, 2.0], &[2]).unwrap();
    let loss = x.square().sum();
    loss.backward().unwrap();
    let first = x.grad().unwrap();
    loss.backward().unwrap();
    let doubled = x.grad().unwrap();
    for (f, d) in first.iter().zip(doubled.iter()) {
        assert_eq!(*d, 2.0 * f);
    }
    tape.zero_grads();
    loss.backward().unwrap();
    assert_eq!(x.grad().unwrap(), first);
}

#[test]
fn detached_operands_receive_no_gradient() {
    let tape = Tape::new();
    let x = tape.leaf(vec![2.0], &[1]).unwrap();
    let c = Tensor::from_values(vec![5.0], &[1]).unwrap();
    let y = x.mul(&c).unwrap().sum();
    y.backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![5.0]);
    assert!(c.grad().is_none());
}

#[test]
fn composed_expression_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let x_vals = random_vec(&mut rng, 6, 0.2, 2.0);

    let build = |vals: &[f64], tape: Option<&Tape>| -> Tensor {
        let x = match tape {
            Some(t) => t.leaf(vals.to_vec(), &[2, 3]).unwrap(),
            None => Tensor::from_values(vals.to_vec(), &[2, 3]).unwrap(),
        };
        let a = x.silu().add_scalar(0.5).log().unwrap();
        let b = x.square().scale(0.25).tanh();
        a.mul(&b).unwrap().row_sum().unwrap().mean()
    };

    let tape = Tape::new();
    let x = tape.leaf(x_vals.clone(), &[2, 3]).unwrap();
    let a = x.silu().add_scalar(0.5).log().unwrap();
    let b = x.square().scale(0.25).tanh();
    a.mul(&b).unwrap().row_sum().unwrap().mean().backward().unwrap();

    let mut f = |v: &[f64]| build(v, None).item();
    let num = central_difference(&mut f, &x_vals, DEFAULT_STEP);
    compare(&x.grad().unwrap(), &num, 1e-4, 1e-6).unwrap();
}

/// Every primitive against central differences on random inputs in [-2, 2].
#[test]
fn all_primitives_pass_gradient_checks() {
    type OpFn = fn(&Tensor) -> Tensor;
    let unary: &[(&str, OpFn, f64, f64)] = &[
        ("silu", |x| x.silu(), -2.0, 2.0),
        ("tanh", |x| x.tanh(), -2.0, 2.0),
        ("square", |x| x.square(), -2.0, 2.0),
        ("exp", |x| x.exp(), -2.0, 2.0),
        ("log", |x| x.log().unwrap(), 0.1, 2.0),
        ("sqrt", |x| x.sqrt().unwrap(), 0.1, 2.0),
        // Clamp boundaries excluded: the subgradient is not a limit of
        // difference quotients exactly at the kink.
        ("clamp", |x| x.clamp(-1.0, 1.0).scale(0.5), -0.9, 0.9),
        ("scale", |x| x.scale(-1.7), -2.0, 2.0),
        ("shift", |x| x.add_scalar(0.3), -2.0, 2.0),
    ];

    for seed in 0..4u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        for (name, op, lo, hi) in unary {
            let x_vals = random_vec(&mut rng, 8, *lo, *hi);
            let w = random_vec(&mut rng, 8, -1.0, 1.0);
            let tape = Tape::new();
            let x = tape.leaf(x_vals.clone(), &[2, 4]).unwrap();
            weighted_loss(&op(&x), &w).backward().unwrap();
            let mut f = |v: &[f64]| {
                let x = Tensor::from_values(v.to_vec(), &[2, 4]).unwrap();
                weighted_loss(&op(&x), &w).item()
            };
            let num = central_difference(&mut f, &x_vals, DEFAULT_STEP);
            compare(&x.grad().unwrap(), &num, 1e-4, 1e-6)
                .unwrap_or_else(|e| panic!("{name}: {e}"));
        }

        // Binary and structural primitives.
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let a_vals = random_vec(&mut rng, 8, -2.0, 2.0);
        let b_vals = random_vec(&mut rng, 8, -2.0, 2.0);
        let row_vals = random_vec(&mut rng, 4, -2.0, 2.0);
        let w8 = random_vec(&mut rng, 8, -1.0, 1.0);

        type BinFn = fn(&Tensor, &Tensor) -> Tensor;
        let binary: &[(&str, BinFn)] = &[
            ("add", |a, b| a.add(b).unwrap()),
            ("sub", |a, b| a.sub(b).unwrap()),
            ("mul", |a, b| a.mul(b).unwrap()),
            ("minimum", |a, b| a.minimum(b).unwrap()),
        ];
        for (name, op) in binary {
            let tape = Tape::new();
            let a = tape.leaf(a_vals.clone(), &[2, 4]).unwrap();
            let b = tape.leaf(b_vals.clone(), &[2, 4]).unwrap();
            weighted_loss(&op(&a, &b), &w8).backward().unwrap();
            let mut f = |v: &[f64]| {
                let a = Tensor::from_values(v[..8].to_vec(), &[2, 4]).unwrap();
                let b = Tensor::from_values(v[8..].to_vec(), &[2, 4]).unwrap();
                weighted_loss(&op(&a, &b), &w8).item()
            };
            let joint: Vec<f64> = a_vals.iter().chain(b_vals.iter()).copied().collect();
            let num = central_difference(&mut f, &joint, DEFAULT_STEP);
            let mut analytic = a.grad().unwrap();
            analytic.extend(b.grad().unwrap());
            compare(&analytic, &num, 1e-4, 1e-6).unwrap_or_else(|e| panic!("{name}: {e}"));
        }

        for (name, op) in [
            ("add_row", (|a, r| a.add_row(r).unwrap()) as BinFn),
            ("mul_row", (|a, r| a.mul_row(r).unwrap()) as BinFn),
        ] {
            let tape = Tape::new();
            let a = tape.leaf(a_vals.clone(), &[2, 4]).unwrap();
            let r = tape.leaf(row_vals.clone(), &[4]).unwrap();
            weighted_loss(&op(&a, &r), &w8).backward().unwrap();
            let mut f = |v: &[f64]| {
                let a = Tensor::from_values(v[..8].to_vec(), &[2, 4]).unwrap();
                let r = Tensor::from_values(v[8..].to_vec(), &[4]).unwrap();
                weighted_loss(&op(&a, &r), &w8).item()
            };
            let joint: Vec<f64> = a_vals.iter().chain(row_vals.iter()).copied().collect();
            let num = central_difference(&mut f, &joint, DEFAULT_STEP);
            let mut analytic = a.grad().unwrap();
            analytic.extend(r.grad().unwrap());
            compare(&analytic, &num, 1e-4, 1e-6).unwrap_or_else(|e| panic!("{name}: {e}"));
        }

        // narrow + concat + row_sum composed.
        let tape = Tape::new();
        let a = tape.leaf(a_vals.clone(), &[2, 4]).unwrap();
        let b = tape.leaf(b_vals.clone(), &[2, 4]).unwrap();
        let joined = a.narrow_cols(1, 2).unwrap().concat_cols(&b).unwrap();
        let w6 = random_vec(&mut rng, 12, -1.0, 1.0);
        weighted_loss(&joined, &w6).backward().unwrap();
        let mut f = |v: &[f64]| {
            let a = Tensor::from_values(v[..8].to_vec(), &[2, 4]).unwrap();
            let b = Tensor::from_values(v[8..].to_vec(), &[2, 4]).unwrap();
            let joined = a.narrow_cols(1, 2).unwrap().concat_cols(&b).unwrap();
            weighted_loss(&joined, &w6).item()
        };
        let joint: Vec<f64> = a_vals.iter().chain(b_vals.iter()).copied().collect();
        let num = central_difference(&mut f, &joint, DEFAULT_STEP);
        let mut analytic = a.grad().unwrap();
        analytic.extend(b.grad().unwrap());
        compare(&analytic, &num, 1e-4, 1e-6).unwrap_or_else(|e| panic!("narrow/concat: {e}"));
    }
}

#[test]
fn backward_is_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x_vals = random_vec(&mut rng, 12, -2.0, 2.0);
        let y_vals = random_vec(&mut rng, 8, -2.0, 2.0);
        let tape = Tape::new();
        let x = tape.leaf(x_vals, &[3, 4]).unwrap();
        let y = tape.leaf(y_vals, &[4, 2]).unwrap();
        let z = x.matmul(&y).unwrap().silu().layer_norm(1e-5).unwrap().mean();
        z.backward().unwrap();
        (x.grad().unwrap(), y.grad().unwrap())
    };
    let (gx1, gy1) = run();
    let (gx2, gy2) = run();
    assert!(gx1.iter().zip(&gx2).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(gy1.iter().zip(&gy2).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn reshape_shares_node() {
    let tape = Tape::new();
    let x = tape.leaf(vec![1.0, 2.0], &[2, 1]).unwrap();
    let flat = x.reshape(&[2]).unwrap();
    flat.sum().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![1.0, 1.0]);
}
