//! Finite-difference cases for every differentiable operation. Each case
//! maps a seed to the worst relative error seen for that seed.

use motok::losses::{
    g_loss, hinge_d_loss, l1_loss, perceptual_loss, total_generator_loss, FeatureExtractor,
    GeneratorParts, LossWeights,
};
use motok::quantizer::vq_loss;
use motok::tensor::{Conv3dSpec, LEAKY_SLOPE};
use motok::{Tape, Tensor, Var};
use rand::Rng;

use super::{grad_error, rel_err, rng, uniform, uniform_avoiding, FD_STEP};

pub const SEEDS: u64 = 20;
pub const LINEAR_TOL: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

pub struct GradCase {
    pub name: &'static str,
    pub tol: f64,
    pub run: fn(u64) -> f64,
}

const GAP: f64 = 1e-3;

fn u(shape: &[usize], seed: u64, role: &str) -> Tensor<f64> {
    uniform(shape, -1.0, 1.0, seed, role)
}

fn add(seed: u64) -> f64 {
    let xs = [u(&[2, 3, 4], seed, "a"), u(&[2, 3, 4], seed, "b")];
    grad_error(&xs, seed, |_, v| v[0].add(v[1]).unwrap())
}

fn sub(seed: u64) -> f64 {
    let xs = [u(&[3, 5], seed, "a"), u(&[3, 5], seed, "b")];
    grad_error(&xs, seed, |_, v| v[0].sub(v[1]).unwrap())
}

fn mul(seed: u64) -> f64 {
    let xs = [u(&[2, 3, 4], seed, "a"), u(&[2, 3, 4], seed, "b")];
    grad_error(&xs, seed, |_, v| v[0].mul(v[1]).unwrap())
}

fn scalar_broadcast(seed: u64) -> f64 {
    let xs = [u(&[4, 3], seed, "a"), u(&[], seed, "s")];
    grad_error(&xs, seed, |_, v| {
        let a = v[0].mul(v[1]).unwrap();
        let b = v[1].sub(v[0]).unwrap();
        a.add(b).unwrap()
    })
}

fn relu(seed: u64) -> f64 {
    let xs = [uniform_avoiding(&[40], -1.0, 1.0, &[0.0], GAP, seed, "x")];
    grad_error(&xs, seed, |_, v| v[0].relu().unwrap())
}

fn leaky_relu(seed: u64) -> f64 {
    let xs = [uniform_avoiding(&[40], -1.0, 1.0, &[0.0], GAP, seed, "x")];
    grad_error(&xs, seed, |_, v| v[0].leaky_relu(LEAKY_SLOPE).unwrap())
}

fn swish(seed: u64) -> f64 {
    let xs = [uniform(&[40], -4.0, 4.0, seed, "x")];
    grad_error(&xs, seed, |_, v| v[0].swish().unwrap())
}

fn sigmoid(seed: u64) -> f64 {
    let xs = [uniform(&[40], -4.0, 4.0, seed, "x")];
    grad_error(&xs, seed, |_, v| v[0].sigmoid().unwrap())
}

fn abs(seed: u64) -> f64 {
    let xs = [uniform_avoiding(&[40], -1.0, 1.0, &[0.0], GAP, seed, "x")];
    grad_error(&xs, seed, |_, v| v[0].abs().unwrap())
}

fn sqrt(seed: u64) -> f64 {
    let xs = [uniform(&[40], 0.1, 3.0, seed, "x")];
    grad_error(&xs, seed, |_, v| v[0].sqrt().unwrap())
}

fn affine(seed: u64) -> f64 {
    let xs = [u(&[3, 7], seed, "x")];
    grad_error(&xs, seed, |_, v| {
        v[0].neg().unwrap().mul_scalar(1.7).unwrap().add_scalar(-0.3).unwrap()
    })
}

fn reductions(seed: u64) -> f64 {
    let xs = [u(&[3, 2, 4], seed, "x")];
    grad_error(&xs, seed, |tape, v| {
        let per = v[0].mean_per_sample().unwrap();
        let w = tape.constant(Tensor::new([3], vec![0.3, -1.1, 2.0]).unwrap());
        let s = per.mul(w).unwrap().sum().unwrap();
        s.add(v[0].mean().unwrap()).unwrap().add(v[0].sum().unwrap()).unwrap()
    })
}

fn conv_case(seed: u64, x: [usize; 5], w: [usize; 5], bias: bool, spec: Conv3dSpec) -> f64 {
    let mut xs = vec![u(&x, seed, "x"), u(&w, seed, "w")];
    if bias {
        xs.push(u(&[w[0]], seed, "b"));
    }
    grad_error(&xs, seed, move |_, v| {
        v[0].conv3d(v[1], v.get(2).copied(), spec).unwrap()
    })
}

fn conv3d_same(seed: u64) -> f64 {
    conv_case(seed, [2, 2, 3, 4, 4], [3, 2, 3, 3, 3], true, Conv3dSpec::uniform(1, 1))
}

fn conv3d_strided(seed: u64) -> f64 {
    conv_case(seed, [1, 3, 4, 5, 6], [2, 3, 3, 3, 3], true, Conv3dSpec::uniform(2, 1))
}

fn conv3d_mixed(seed: u64) -> f64 {
    let spec = Conv3dSpec::new([1, 2, 1], [0, 1, 2]);
    conv_case(seed, [2, 2, 3, 5, 3], [2, 2, 1, 3, 2], false, spec)
}

fn group_norm(seed: u64) -> f64 {
    let xs = [
        uniform(&[2, 4, 2, 3, 3], -2.0, 2.0, seed, "x"),
        uniform(&[4], 0.5, 1.5, seed, "g"),
        u(&[4], seed, "b"),
    ];
    grad_error(&xs, seed, |_, v| v[0].group_norm(2, 1e-6, v[1], v[2]).unwrap())
}

fn upsample(seed: u64) -> f64 {
    let xs = [u(&[1, 2, 2, 2, 3], seed, "x")];
    grad_error(&xs, seed, |_, v| v[0].upsample_nearest3d([2, 1, 3]).unwrap())
}

fn lattice(seed: u64) -> (Vec<usize>, [usize; 4]) {
    let lat = [2, 1, 2, 3];
    let mut r = rng(seed, "indices");
    ((0..12).map(|_| r.random_range(0..5)).collect(), lat)
}

fn lattice_lookup(seed: u64) -> f64 {
    let (idx, lat) = lattice(seed);
    let xs = [u(&[5, 3], seed, "table")];
    grad_error(&xs, seed, move |_, v| v[0].lattice_lookup(&idx, lat).unwrap())
}

fn composite(seed: u64) -> f64 {
    let xs = [
        u(&[1, 2, 3, 4, 4], seed, "x"),
        u(&[4, 2, 3, 3, 3], seed, "w"),
        uniform(&[4], 0.5, 1.5, seed, "g"),
        u(&[4], seed, "b"),
    ];
    grad_error(&xs, seed, |_, v| {
        let y = v[0].conv3d(v[1], None, Conv3dSpec::uniform(1, 1)).unwrap();
        y.group_norm(2, 1e-6, v[2], v[3]).unwrap().swish().unwrap().sum().unwrap()
    })
}

/// Straight-through: the gradient reaching `z_e` must equal the finite
/// difference of the downstream function evaluated at the quantized value.
fn straight_through(seed: u64) -> f64 {
    let z_e = u(&[1, 3, 1, 2, 2], seed, "z");
    let e = u(&[1, 3, 1, 2, 2], seed, "e");
    let w = u(&[2, 3, 1, 1, 1], seed, "w");
    let proj = uniform(&[1, 2, 1, 2, 2], 0.5, 1.5, seed, "proj");
    let downstream = |tape: &Tape<f64>, z: Var<'_, f64>| -> f64 {
        let y = z.conv3d(tape.constant(w.clone()), None, Conv3dSpec::unit()).unwrap();
        let l = y.swish().unwrap().mul(tape.constant(proj.clone())).unwrap().sum().unwrap();
        l.value().item().unwrap()
    };
    let tape = Tape::new();
    let z = tape.leaf(z_e.clone());
    let zq = z.straight_through(tape.constant(e.clone())).unwrap();
    let y = zq.conv3d(tape.constant(w.clone()), None, Conv3dSpec::unit()).unwrap();
    let loss = y.swish().unwrap().mul(tape.constant(proj.clone())).unwrap().sum().unwrap();
    tape.backward(loss).unwrap();
    let g = z.grad().unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..e.numel() {
        let mut up = e.clone();
        up.data_mut()[i] += FD_STEP;
        let mut down = e.clone();
        down.data_mut()[i] -= FD_STEP;
        let t = Tape::new();
        let fu = downstream(&t, t.leaf(up));
        let fd = downstream(&t, t.leaf(down));
        worst = worst.max(rel_err(g.data()[i], (fu - fd) / (2.0 * FD_STEP)));
    }
    worst
}

fn vq_codebook_term(seed: u64) -> f64 {
    let (idx, lat) = lattice(seed);
    let z = u(&[2, 3, 1, 2, 3], seed, "z");
    let xs = [u(&[5, 3], seed, "table")];
    grad_error(&xs, seed, move |tape, v| {
        let e = v[0].lattice_lookup(&idx, lat).unwrap();
        vq_loss(tape.constant(z.clone()), e, 0.25).unwrap().codebook
    })
}

fn vq_commitment_term(seed: u64) -> f64 {
    let e = u(&[2, 3, 1, 2, 3], seed, "e");
    let xs = [u(&[2, 3, 1, 2, 3], seed, "z")];
    grad_error(&xs, seed, move |tape, v| {
        vq_loss(v[0], tape.constant(e.clone()), 0.25).unwrap().commitment
    })
}

fn l1(seed: u64) -> f64 {
    let x = u(&[1, 2, 2, 3, 3], seed, "x");
    let d = uniform_avoiding(&[1, 2, 2, 3, 3], -1.0, 1.0, &[0.0], GAP, seed, "d");
    let y = Tensor::from_fn(x.shape().to_vec(), |i| x.data()[i] + d.data()[i]);
    grad_error(&[x, y], seed, |_, v| l1_loss(v[0], v[1]).unwrap())
}

fn perceptual(seed: u64) -> f64 {
    let psi = FeatureExtractor::<f64>::new(2, seed);
    let xs = [
        uniform(&[1, 2, 4, 8, 8], 0.0, 1.0, seed, "x"),
        uniform(&[1, 2, 4, 8, 8], 0.0, 1.0, seed, "y"),
    ];
    grad_error(&xs, seed, move |_, v| perceptual_loss(v[0], v[1], &psi).unwrap())
}

fn hinge(seed: u64) -> f64 {
    let xs = [
        uniform_avoiding(&[6], -2.0, 2.0, &[-1.0, 1.0], GAP, seed, "r"),
        uniform_avoiding(&[6], -2.0, 2.0, &[-1.0, 1.0], GAP, seed, "f"),
    ];
    grad_error(&xs, seed, |_, v| hinge_d_loss(v[0], v[1]).unwrap())
}

fn generator_adversarial(seed: u64) -> f64 {
    let xs = [u(&[5], seed, "f")];
    grad_error(&xs, seed, |_, v| g_loss(v[0]).unwrap())
}

fn generator_total(seed: u64) -> f64 {
    let xs = [u(&[], seed, "p"), u(&[], seed, "l"), u(&[], seed, "q"), u(&[4], seed, "d")];
    grad_error(&xs, seed, |_, v| {
        let parts = GeneratorParts {
            perceptual: v[0],
            l1: v[1],
            vq: v[2],
            adv: Some(g_loss(v[3]).unwrap()),
        };
        let w = LossWeights { alpha: 0.7, beta: 1.3, lambda: 0.1 };
        total_generator_loss(parts, w).unwrap()
    })
}

pub fn cases() -> Vec<GradCase> {
    macro_rules! case {
        ($f:ident, $tol:expr) => {
            GradCase { name: stringify!($f), tol: $tol, run: $f }
        };
    }
    vec![
        case!(add, LINEAR_TOL),
        case!(sub, LINEAR_TOL),
        case!(mul, TOL),
        case!(scalar_broadcast, TOL),
        case!(relu, LINEAR_TOL),
        case!(leaky_relu, LINEAR_TOL),
        case!(swish, LINEAR_TOL),
        case!(sigmoid, TOL),
        case!(abs, LINEAR_TOL),
        case!(sqrt, TOL),
        case!(affine, LINEAR_TOL),
        case!(reductions, LINEAR_TOL),
        case!(conv3d_same, LINEAR_TOL),
        case!(conv3d_strided, LINEAR_TOL),
        case!(conv3d_mixed, LINEAR_TOL),
        case!(group_norm, TOL),
        case!(upsample, LINEAR_TOL),
        case!(lattice_lookup, LINEAR_TOL),
        case!(composite, TOL),
        case!(straight_through, TOL),
        case!(vq_codebook_term, TOL),
        case!(vq_commitment_term, TOL),
        case!(l1, LINEAR_TOL),
        case!(perceptual, TOL),
        case!(hinge, LINEAR_TOL),
        case!(generator_adversarial, LINEAR_TOL),
        case!(generator_total, LINEAR_TOL),
    ]
}

/// Worst error of `case` over all seeds.
pub fn worst(case: &GradCase) -> f64 {
    (0..SEEDS).map(|s| (case.run)(s)).fold(0.0, f64::max)
}
