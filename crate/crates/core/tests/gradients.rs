//! Reverse-mode gradients of every differentiable operation against central
//! finite differences in 64-bit arithmetic.

mod support;

use std::time::Instant;

use alphagan_core::losses::{gdl, l1, mse};
use alphagan_core::nn::{batch_norm3d, instance_norm3d, BatchNormState};
use alphagan_core::random::SeedStream;
use alphagan_core::{Result, Tensor, Var};
use support::{gradient_check, positive, randn, randn_away};

const STEP: f64 = 1e-5;
const TOLERANCE: f64 = 1e-4;
const SEEDS_PER_OP: u64 = 5;

type Op = Box<dyn Fn(&[Var<f64>]) -> Result<Var<f64>>>;
type Inputs = Box<dyn Fn(&mut SeedStream) -> Vec<Tensor<f64>>>;

struct Case {
    name: &'static str,
    inputs: Inputs,
    op: Op,
}

fn case(
    name: &'static str,
    inputs: impl Fn(&mut SeedStream) -> Vec<Tensor<f64>> + 'static,
    op: impl Fn(&[Var<f64>]) -> Result<Var<f64>> + 'static,
) -> Case {
    Case {
        name,
        inputs: Box::new(inputs),
        op: Box::new(op),
    }
}

fn cases() -> Vec<Case> {
    let v = |shape: &'static [usize]| move |s: &mut SeedStream| vec![randn(shape, s)];
    let vv = |shape: &'static [usize]| move |s: &mut SeedStream| vec![randn(shape, s), randn(shape, s)];
    vec![
        case("add", vv(&[3, 4]), |x| x[0].add(&x[1])),
        case("sub", vv(&[3, 4]), |x| x[0].sub(&x[1])),
        case("mul", vv(&[2, 5]), |x| x[0].mul(&x[1])),
        case("div", |s| vec![randn(&[6], s), positive(&[6], s)], |x| x[0].div(&x[1])),
        case("neg", v(&[5]), |x| Ok(x[0].neg())),
        case("scale", v(&[5]), |x| Ok(x[0].scale(-1.7))),
        case("add_scalar", v(&[5]), |x| Ok(x[0].add_scalar(0.3).square())),
        case("abs", |s| vec![randn_away(&[8], 0.05, s)], |x| Ok(x[0].abs())),
        case("square", v(&[4]), |x| Ok(x[0].square())),
        case("sqrt", |s| vec![positive(&[6], s)], |x| x[0].sqrt()),
        case("powf", |s| vec![positive(&[6], s)], |x| Ok(x[0].powf(1.5))),
        case("relu", |s| vec![randn_away(&[10], 0.05, s)], |x| Ok(x[0].relu())),
        case("leaky_relu", |s| vec![randn_away(&[10], 0.05, s)], |x| x[0].leaky_relu(0.2)),
        case("tanh", v(&[6]), |x| Ok(x[0].tanh())),
        case("matmul", |s| vec![randn(&[3, 4], s), randn(&[4, 2], s)], |x| x[0].matmul(&x[1], false, false)),
        case("matmul_tt", |s| vec![randn(&[4, 3], s), randn(&[2, 4], s)], |x| x[0].matmul(&x[1], true, true)),
        case(
            "dense",
            |s| vec![randn(&[3, 5], s), randn(&[4, 5], s), randn(&[4], s)],
            |x| x[0].dense(&x[1], Some(&x[2])),
        ),
        case(
            "channel_bias",
            |s| vec![randn(&[2, 3, 2, 2, 2], s), randn(&[3], s)],
            |x| x[0].add_channel_bias(&x[1]),
        ),
        case(
            "conv3d_s1p1",
            |s| vec![randn(&[1, 2, 4, 4, 4], s), randn(&[3, 2, 3, 3, 3], s), randn(&[3], s)],
            |x| x[0].conv3d(&x[1], Some(&x[2]), 1, 1),
        ),
        case(
            "conv3d_k4s2p1",
            |s| vec![randn(&[2, 1, 4, 4, 4], s), randn(&[2, 1, 4, 4, 4], s)],
            |x| x[0].conv3d(&x[1], None, 2, 1),
        ),
        case(
            "conv_transpose3d",
            |s| vec![randn(&[1, 2, 2, 2, 2], s), randn(&[2, 2, 4, 4, 4], s), randn(&[2], s)],
            |x| x[0].conv_transpose3d(&x[1], Some(&x[2]), 2, 1),
        ),
        case("sum_axes", v(&[2, 3, 4]), |x| x[0].sum_axes(&[0, 2])),
        case("mean_axes", v(&[4, 2]), |x| x[0].mean_axes(&[0])),
        case("broadcast_axes", v(&[3]), |x| x[0].broadcast_axes(&[2, 3, 2], &[0, 2])),
        case("sum", v(&[7]), |x| x[0].square().sum()),
        case("mean", v(&[7]), |x| x[0].square().mean()),
        case("l2_norm", v(&[2, 3, 2]), |x| x[0].l2_norm_per_sample()),
        case("reshape", v(&[2, 6]), |x| Ok(x[0].reshape(&[3, 4])?.square())),
        case("forward_diff", v(&[1, 1, 3, 4, 2]), |x| x[0].forward_diff(3)),
        case(
            "instance_norm3d",
            |s| vec![randn(&[2, 2, 2, 2, 3], s), randn(&[2], s), randn(&[2], s)],
            |x| instance_norm3d(&x[0], Some((&x[1], &x[2])), 1e-5),
        ),
        case(
            "batch_norm3d",
            |s| vec![randn(&[3, 2, 2, 2, 2], s), randn(&[2], s), randn(&[2], s)],
            |x| {
                let mut state = BatchNormState::new(2);
                batch_norm3d(&x[0], Some((&x[1], &x[2])), &mut state, true)
            },
        ),
        case("l1", |s| vec![randn(&[1, 1, 2, 3, 3], s), randn(&[1, 1, 2, 3, 3], s)], |x| l1(&x[0], &x[1])),
        case("mse", vv(&[1, 1, 2, 2, 3]), |x| mse(&x[0], &x[1])),
        case("gdl", vv(&[2, 1, 3, 3, 3]), |x| gdl(&x[0], &x[1], 1.0)),
        case("gdl_alpha2", vv(&[1, 1, 3, 3, 3]), |x| gdl(&x[0], &x[1], 2.0)),
    ]
}

pub fn every_operation_matches_finite_differences() {
    let start = Instant::now();
    let mut instances = 0;
    let mut failures = Vec::new();
    for c in cases() {
        for seed in 0..SEEDS_PER_OP {
            let mut s = SeedStream::with_stream(seed, 77);
            let inputs = (c.inputs)(&mut s);
            let err = gradient_check(&inputs, STEP, seed, &*c.op).unwrap();
            instances += 1;
            if !(err < TOLERANCE) {
                failures.push(format!("{} seed {seed}: relative error {err:e}", c.name));
            }
        }
    }
    assert!(instances >= 100, "only {instances} instances");
    assert!(failures.is_empty(), "{failures:#?}");
    assert!(start.elapsed().as_secs() < 120);
}

pub fn second_order_of_norm_matches_closed_form() {
    // f = sum(x^2), ‖∇f‖ = 2‖x‖, d/dx ‖∇f‖ = 2x/‖x‖
    let x = Var::leaf(Tensor::new(vec![1, 4], vec![1.0, -2.0, 0.5, 3.0]).unwrap());
    let g = alphagan_core::grad(&x.square().sum().unwrap(), &[&x], true).unwrap().remove(0);
    let norm = g.l2_norm_per_sample().unwrap().sum().unwrap();
    let gg = alphagan_core::grad(&norm, &[&x], false).unwrap().remove(0);
    let n = x.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    for (a, v) in gg.data().iter().zip(x.data()) {
        assert!((a - 2.0 * v / n).abs() < 1e-6);
    }
}

#[test]
fn nested_finite_differences_of_l2_norm() {
    let mut s = SeedStream::new(5);
    let x0 = randn(&[1, 8], &mut s);
    let probe = randn(&[1, 8], &mut s);
    // h(x) = ‖(x · probe) ⊙ x‖, differentiated twice via the first gradient
    let first = |x: &Var<f64>| -> Var<f64> {
        let p = Var::constant(probe.clone());
        let f = x.mul(&p).unwrap().mul(x).unwrap().sum().unwrap();
        alphagan_core::grad(&f, &[x], true).unwrap().remove(0)
    };
    let x = Var::leaf(x0.clone());
    let root = first(&x).l2_norm_per_sample().unwrap().sum().unwrap();
    let analytic = alphagan_core::grad(&root, &[&x], false).unwrap().remove(0);
    let scalar = |xs: &[Tensor<f64>]| {
        let x = Var::leaf(xs[0].clone());
        first(&x).l2_norm_per_sample().unwrap().item().unwrap()
    };
    let numeric = support::numeric_gradient(&[x0], 1e-5, &scalar);
    assert!(support::relative_error(analytic.data(), &numeric[0]) < 1e-4);
}

/// These checks are public so the acceptance binary can run them too.
mod shared {
    #[test]
    fn every_operation_matches_finite_differences() {
        super::every_operation_matches_finite_differences();
    }
    #[test]
    fn second_order_of_norm_matches_closed_form() {
        super::second_order_of_norm_matches_closed_form();
    }
}
