//! Central finite-difference oracle for the tape's adjoints.
//!
//! Every case reduces an op's output to the scalar `sum(out * r)` for a fixed
//! random `r`, so the analytic gradient is `backward_with(out, r)` and the
//! numeric one is `(L(x + h) - L(x - h)) / 2h` per input element.

#![allow(dead_code)]

use dpdnet::model::{bind_params, build, forward_graph, forward_mode, InputVariant, ModelConfig, ModelParams};
use dpdnet::tensor::{ops, Padding, Tape, Tensor4, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct CaseReport {
    pub name: String,
    pub shapes: Vec<[usize; 4]>,
    pub max_rel_error: f64,
    pub elements: usize,
}

impl CaseReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= REL_TOL
    }
}

/// Elementwise relative error with a scale-aware floor: gradients far below
/// the tensor's largest numeric gradient are compared against that scale.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-2 * scale).max(1e-12))
        .fold(0.0, f64::max)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 4], scale: f64) -> Tensor4<f64> {
    Tensor4::from_fn(shape, |_| rng.random_range(-scale..scale))
}

fn dot(a: &Tensor4<f64>, b: &Tensor4<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Checks `f` against finite differences with respect to every input.
pub fn check_op<F>(name: &str, inputs: Vec<Tensor4<f64>>, rng: &mut ChaCha8Rng, f: F) -> CaseReport
where
    F: for<'t> Fn(&mut Tape<'t, f64>, &[Var]) -> Var,
{
    let run = |xs: &[Tensor4<f64>]| -> (Tape<'static, f64>, Vec<Var>, Var) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.variable(x.clone())).collect();
        let out = f(&mut tape, &vars);
        (tape, vars, out)
    };
    let (tape, vars, out) = run(&inputs);
    let r = random_tensor(rng, tape.value(out).shape(), 1.0);
    let mut grads = tape.backward_with(out, r.clone()).expect("backward");
    let analytic: Vec<Tensor4<f64>> = vars
        .iter()
        .zip(&inputs)
        .map(|(&v, x)| grads.take(v).unwrap_or_else(|| Tensor4::zeros(x.shape())))
        .collect();

    let loss = |xs: &[Tensor4<f64>]| {
        let (tape, _, out) = run(xs);
        dot(tape.value(out), &r)
    };
    let mut worst = 0.0f64;
    let mut elements = 0;
    for (k, x) in inputs.iter().enumerate() {
        let mut numeric = vec![0.0; x.len()];
        let mut xs = inputs.clone();
        for (i, n) in numeric.iter_mut().enumerate() {
            let v = x.data()[i];
            xs[k].data_mut()[i] = v + STEP;
            let up = loss(&xs);
            xs[k].data_mut()[i] = v - STEP;
            let down = loss(&xs);
            xs[k].data_mut()[i] = v;
            *n = (up - down) / (2.0 * STEP);
        }
        worst = worst.max(max_rel_error(analytic[k].data(), &numeric));
        elements += x.len();
    }
    CaseReport {
        name: name.to_string(),
        shapes: inputs.iter().map(|t| t.shape()).collect(),
        max_rel_error: worst,
        elements,
    }
}

/// Checks parameter and input gradients of a small encoder-decoder with
/// dropout active under a fixed seed.
pub fn check_network(rng: &mut ChaCha8Rng, batch: usize, size: usize) -> CaseReport {
    let cfg = ModelConfig {
        input_variant: InputVariant::Dual,
        base_filters: 2,
        depth: 2,
        dropout_rate: 0.4,
        patch_size: size,
    };
    // random biases keep pre-activations off the ReLU kink
    let built = build::<f64>(&cfg, rng.random()).expect("build");
    let tensors = built
        .tensors()
        .iter()
        .map(|(n, t)| {
            let t = if n.ends_with(".bias") { random_tensor(rng, t.shape(), 0.3) } else { t.clone() };
            (n.clone(), t)
        })
        .collect();
    let params = ModelParams::from_tensors(cfg, tensors).expect("params");
    let x = random_tensor(rng, [batch, size, size, 6], 1.0);
    let target = Tensor4::from_fn([batch, size, size, 3], |_| rng.random_range(0.0..1.0));
    let seed = 17;

    let mut tape = Tape::new();
    let bound = bind_params(&mut tape, &params);
    let xv = tape.variable(x.clone());
    let out = forward_graph(&mut tape, &params, &bound, xv, x.shape(), true, seed).expect("forward");
    let t = tape.constant(target.clone());
    let loss = tape.mse_loss(out, t).expect("mse");
    let mut grads = tape.backward(loss).expect("backward");

    let eval = |p: &ModelParams<f64>, input: &Tensor4<f64>| {
        let y = forward_mode(p, input, true, seed).expect("forward");
        ops::mse_loss(&y, &target).expect("mse")
    };

    let mut worst = 0.0f64;
    let mut elements = 0;
    let tensors = params.tensors().to_vec();
    for (k, (_, w)) in tensors.iter().enumerate() {
        let analytic = grads.take(bound[k]).expect("param gradient");
        let mut numeric = vec![0.0; w.len()];
        let mut perturbed = tensors.clone();
        for (i, n) in numeric.iter_mut().enumerate() {
            let v = w.data()[i];
            perturbed[k].1.data_mut()[i] = v + STEP;
            let up = eval(&ModelParams::from_tensors(cfg, perturbed.clone()).unwrap(), &x);
            perturbed[k].1.data_mut()[i] = v - STEP;
            let down = eval(&ModelParams::from_tensors(cfg, perturbed.clone()).unwrap(), &x);
            perturbed[k].1.data_mut()[i] = v;
            *n = (up - down) / (2.0 * STEP);
        }
        worst = worst.max(max_rel_error(analytic.data(), &numeric));
        elements += w.len();
    }
    let analytic = grads.take(xv).expect("input gradient");
    let mut numeric = vec![0.0; x.len()];
    let mut xp = x.clone();
    for (i, n) in numeric.iter_mut().enumerate() {
        let v = x.data()[i];
        xp.data_mut()[i] = v + STEP;
        let up = eval(&params, &xp);
        xp.data_mut()[i] = v - STEP;
        let down = eval(&params, &xp);
        xp.data_mut()[i] = v;
        *n = (up - down) / (2.0 * STEP);
    }
    worst = worst.max(max_rel_error(analytic.data(), &numeric));
    elements += x.len();
    CaseReport {
        name: "encoder-decoder".into(),
        shapes: vec![x.shape()],
        max_rel_error: worst,
        elements,
    }
}

fn even(rng: &mut ChaCha8Rng) -> usize {
    2 * rng.random_range(1..=3)
}

/// The whole suite: every differentiable op on several random shapes plus
/// the composed network.
pub fn run_suite(seed: u64) -> Vec<CaseReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..4 {
        let (n, h, w) = (rng.random_range(1..=2), rng.random_range(3..=6), rng.random_range(3..=6));
        let (cin, cout) = (rng.random_range(1..=3), rng.random_range(1..=3));
        for k in [1usize, 2, 3] {
            let x = random_tensor(&mut rng, [n, h, w, cin], 1.0);
            let wt = random_tensor(&mut rng, [k, k, cin, cout], 0.5);
            let b = random_tensor(&mut rng, [1, 1, 1, cout], 0.5);
            out.push(check_op(&format!("conv2d {k}x{k}"), vec![x, wt, b], &mut rng, |t, v| {
                t.conv2d(v[0], v[1], Some(v[2]), Padding::same(k, k)).unwrap()
            }));
        }
        let shape = [rng.random_range(1..=2), even(&mut rng), even(&mut rng), rng.random_range(1..=3)];
        out.push(check_op("maxpool2x2", vec![random_tensor(&mut rng, shape, 1.0)], &mut rng, |t, v| {
            t.maxpool2x2(v[0]).unwrap()
        }));
        out.push(check_op("upsample2x", vec![random_tensor(&mut rng, shape, 1.0)], &mut rng, |t, v| {
            t.upsample2x(v[0])
        }));
        let cin = shape[3];
        let cout = rng.random_range(1..=3);
        let inputs = vec![
            random_tensor(&mut rng, shape, 1.0),
            random_tensor(&mut rng, [2, 2, cin, cout], 0.5),
            random_tensor(&mut rng, [1, 1, 1, cout], 0.5),
        ];
        out.push(check_op("upconv2x", inputs, &mut rng, |t, v| t.upconv2x(v[0], v[1], Some(v[2])).unwrap()));
        out.push(check_op("relu", vec![random_tensor(&mut rng, shape, 1.0)], &mut rng, |t, v| t.relu(v[0])));
        out.push(check_op("sigmoid", vec![random_tensor(&mut rng, shape, 3.0)], &mut rng, |t, v| t.sigmoid(v[0])));
        let other = [shape[0], shape[1], shape[2], rng.random_range(1..=3)];
        let inputs = vec![random_tensor(&mut rng, shape, 1.0), random_tensor(&mut rng, other, 1.0)];
        out.push(check_op("concat_channels", inputs, &mut rng, |t, v| t.concat_channels(v[0], v[1]).unwrap()));
        let dseed: u64 = rng.random();
        out.push(check_op("dropout", vec![random_tensor(&mut rng, shape, 1.0)], &mut rng, move |t, v| {
            t.dropout(v[0], 0.4, dseed, true).unwrap()
        }));
        let inputs = vec![random_tensor(&mut rng, shape, 1.0), random_tensor(&mut rng, shape, 1.0)];
        out.push(check_op("mse_loss", inputs, &mut rng, |t, v| t.mse_loss(v[0], v[1]).unwrap()));
    }
    for (batch, size) in [(1, 4), (2, 8)] {
        out.push(check_network(&mut rng, batch, size));
    }
    out
}
