//! Finite-difference checks of the cross stack and the DNN tower on their
//! own, at widths and depths beyond the end-to-end checks.

mod common;

use common::rel_err;
use gdcn::crossnet::{CrossStack, GateMode};
use gdcn::model::mlp::Mlp;
use gdcn::model::DropoutKey;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;
const H: f64 = 1e-4;

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

/// Fourth-order central difference of `f` along one coordinate.
fn derivative(f: impl Fn(f64) -> f64) -> f64 {
    (-f(2.0 * H) + 8.0 * f(H) - 8.0 * f(-H) + f(-2.0 * H)) / (12.0 * H)
}

/// Scalar probe `Σ R ⊙ out` of the stack output.
fn stack_loss(stack: &CrossStack, c0: &Array2<f64>, r: &Array2<f64>) -> f64 {
    (&stack.forward(c0).unwrap().output * r).sum()
}

fn check_stack(width: usize, depth: usize, mode: GateMode, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stack = CrossStack::init(width, depth, mode, seed);
    for p in &mut stack.layers {
        p.b.mapv_inplace(|_| rng.gen_range(-0.3..0.3));
    }
    let c0 = random(3, width, &mut rng);
    let r = random(3, width, &mut rng);
    let out = stack.forward(&c0).unwrap();
    let grads = stack.backward(&c0, &out, &r).unwrap();

    let mut worst: f64 = 0.0;
    for l in 0..depth {
        let analytic = [&grads.layers[l].w_c, &grads.layers[l].w_g];
        for (t, g) in analytic.into_iter().enumerate() {
            for ((i, j), &a) in g.indexed_iter() {
                let numeric = derivative(|d| {
                    let mut s = stack.clone();
                    let m = if t == 0 { &mut s.layers[l].w_c } else { &mut s.layers[l].w_g };
                    m[[i, j]] += d;
                    stack_loss(&s, &c0, &r)
                });
                worst = worst.max(rel_err(a, numeric));
            }
        }
        for (i, &a) in grads.layers[l].b.iter().enumerate() {
            let numeric = derivative(|d| {
                let mut s = stack.clone();
                s.layers[l].b[i] += d;
                stack_loss(&s, &c0, &r)
            });
            worst = worst.max(rel_err(a, numeric));
        }
    }
    for ((i, j), &a) in grads.grad_c0.indexed_iter() {
        let numeric = derivative(|d| {
            let mut c = c0.clone();
            c[[i, j]] += d;
            stack_loss(&stack, &c, &r)
        });
        worst = worst.max(rel_err(a, numeric));
    }
    worst
}

#[test]
fn cross_stack_gradients_up_to_width_32_depth_4() {
    for (k, &(width, depth)) in [(1, 1), (5, 2), (17, 3), (32, 4)].iter().enumerate() {
        for mode in [GateMode::Learned, GateMode::AllOnes] {
            let worst = check_stack(width, depth, mode, 100 + k as u64);
            assert!(worst <= TOL, "D = {width}, L = {depth}, {mode:?}: {worst:e}");
        }
    }
}

#[test]
fn dnn_gradients_with_frozen_dropout() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mlp = Mlp::init(8, &[4, 3], 0.5, 4).unwrap();
    for l in &mut mlp.layers {
        l.b.mapv_inplace(|_| rng.gen_range(-0.3..0.3));
    }
    let h0 = random(5, 8, &mut rng);
    let r = random(5, 3, &mut rng);
    let key = Some(DropoutKey { seed: 1, step: 2 });
    let loss = |m: &Mlp, h: &Array2<f64>| (&m.forward(h, key).unwrap().0 * &r).sum();
    let (_, cache) = mlp.forward(&h0, key).unwrap();
    let grads = mlp.backward(&cache, &r).unwrap();

    let mut worst: f64 = 0.0;
    for (l, (gw, gb)) in grads.layers.iter().enumerate() {
        for ((i, j), &a) in gw.indexed_iter() {
            let numeric = derivative(|d| {
                let mut m = mlp.clone();
                m.layers[l].w[[i, j]] += d;
                loss(&m, &h0)
            });
            worst = worst.max(rel_err(a, numeric));
        }
        for (i, &a) in gb.iter().enumerate() {
            let numeric = derivative(|d| {
                let mut m = mlp.clone();
                m.layers[l].b[i] += d;
                loss(&m, &h0)
            });
            worst = worst.max(rel_err(a, numeric));
        }
    }
    for ((i, j), &a) in grads.grad_h0.indexed_iter() {
        let numeric = derivative(|d| {
            let mut h = h0.clone();
            h[[i, j]] += d;
            loss(&mlp, &h)
        });
        worst = worst.max(rel_err(a, numeric));
    }
    assert!(worst <= TOL, "{worst:e}");
}
