//! Central finite-difference oracle for tape gradients.
//!
//! Every case builds a scalar from a few random inputs; the analytic
//! gradient of each input is compared element by element with
//! `(f(x + ε) − f(x − ε)) / 2ε`.

#![allow(dead_code)]

use mygo::autograd::{Activation, Tape, Var};
use mygo::rng::Rng;
use mygo::Result;

pub const EPS: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
pub const TRIALS: usize = 20;
/// Relative errors are measured against at least this magnitude, so that
/// round-off on gradients that are exactly zero does not dominate.
pub const REL_FLOOR: f64 = 1e-3;

pub struct Input {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Input {
    fn new(shape: &[usize], values: Vec<f64>) -> Self {
        Self { shape: shape.to_vec(), values }
    }
}

type Build = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;

pub struct Case {
    pub inputs: Vec<Input>,
    pub build: Build,
}

fn count(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Values bounded away from zero, so ReLU kinks stay out of reach of ε.
fn away_from_zero(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v = rng.uniform_range(0.05, 1.5);
            if rng.uniform() < 0.5 { -v } else { v }
        })
        .collect()
}

/// Distinct values 0.05 apart in random order, so pooling windows never tie.
fn distinct(rng: &mut Rng, n: usize) -> Vec<f64> {
    rng.permutation(n).into_iter().map(|i| i as f64 * 0.05 - n as f64 * 0.025).collect()
}

/// Reduces `y` to a scalar through fixed random weights.
fn project(tape: &mut Tape, y: Var, weights: &[f64]) -> Result<Var> {
    let shape = tape.shape(y).to_vec();
    let w = tape.constant(&shape, weights.to_vec())?;
    let m = tape.mul(y, w)?;
    Ok(tape.sum(m))
}

fn projected(rng: &mut Rng, out_len: usize) -> Vec<f64> {
    rng.normals(out_len)
}

pub fn linear(rng: &mut Rng) -> Case {
    let (n, i, o) = (2 + rng.below(3), 2 + rng.below(4), 1 + rng.below(4));
    let r = projected(rng, n * o);
    Case {
        inputs: vec![
            Input::new(&[n, i], rng.normals(n * i)),
            Input::new(&[i, o], rng.normals(i * o)),
            Input::new(&[o], rng.normals(o)),
        ],
        build: Box::new(move |t, v| {
            let y = t.linear(v[0], v[1], v[2])?;
            project(t, y, &r)
        }),
    }
}

pub fn conv(rng: &mut Rng) -> Case {
    let (n, c, f) = (1 + rng.below(2), 1 + rng.below(2), 1 + rng.below(3));
    let (h, w) = (4 + rng.below(3), 4 + rng.below(3));
    let (stride, pad) = if rng.uniform() < 0.5 { (1, 1) } else { (2, 0) };
    let (oh, ow) = ((h + 2 * pad - 3) / stride + 1, (w + 2 * pad - 3) / stride + 1);
    let r = projected(rng, n * f * oh * ow);
    Case {
        inputs: vec![
            Input::new(&[n, c, h, w], rng.normals(n * c * h * w)),
            Input::new(&[f, c, 3, 3], rng.normals(f * c * 9)),
            Input::new(&[f], rng.normals(f)),
        ],
        build: Box::new(move |t, v| {
            let y = t.conv2d(v[0], v[1], Some(v[2]), stride, pad)?;
            project(t, y, &r)
        }),
    }
}

pub fn max_pool(rng: &mut Rng) -> Case {
    let (n, c, h, w) = (1 + rng.below(2), 1 + rng.below(3), 2 * (1 + rng.below(3)), 2 * (1 + rng.below(3)));
    let r = projected(rng, n * c * h * w / 4);
    Case {
        inputs: vec![Input::new(&[n, c, h, w], distinct(rng, n * c * h * w))],
        build: Box::new(move |t, v| {
            let y = t.max_pool2(v[0])?;
            project(t, y, &r)
        }),
    }
}

pub fn activation(kind: Activation) -> impl Fn(&mut Rng) -> Case {
    move |rng: &mut Rng| {
        let (n, d) = (1 + rng.below(4), 1 + rng.below(6));
        let r = projected(rng, n * d);
        Case {
            inputs: vec![Input::new(&[n, d], away_from_zero(rng, n * d))],
            build: Box::new(move |t, v| {
                let y = t.activation(kind, v[0]);
                project(t, y, &r)
            }),
        }
    }
}

pub fn embedding_mean(rng: &mut Rng) -> Case {
    let (vocab, dim, bags) = (3 + rng.below(5), 1 + rng.below(4), 1 + rng.below(4));
    let mut ids = Vec::new();
    let mut offsets = Vec::new();
    for _ in 0..bags {
        offsets.push(ids.len());
        for _ in 0..1 + rng.below(4) {
            ids.push(rng.below(vocab));
        }
    }
    let r = projected(rng, bags * dim);
    Case {
        inputs: vec![Input::new(&[vocab, dim], rng.normals(vocab * dim))],
        build: Box::new(move |t, v| {
            let y = t.embedding_mean(v[0], &ids, &offsets)?;
            project(t, y, &r)
        }),
    }
}

pub fn mse(rng: &mut Rng) -> Case {
    let (n, d) = (1 + rng.below(4), 1 + rng.below(5));
    Case {
        inputs: vec![Input::new(&[n, d], rng.normals(n * d)), Input::new(&[n, d], rng.normals(n * d))],
        build: Box::new(|t, v| t.mse(v[0], v[1])),
    }
}

pub fn cross_entropy(rng: &mut Rng) -> Case {
    let (n, k) = (1 + rng.below(4), 2 + rng.below(4));
    let labels: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
    Case {
        inputs: vec![Input::new(&[n, k], rng.normals(n * k).into_iter().map(|z| 2.0 * z).collect())],
        build: Box::new(move |t, v| t.cross_entropy(v[0], &labels)),
    }
}

pub fn bce(rng: &mut Rng) -> Case {
    let n = 1 + rng.below(8);
    let targets: Vec<f64> = (0..n).map(|_| [0.0, 0.9, 1.0][rng.below(3)]).collect();
    Case {
        inputs: vec![Input::new(&[n, 1], rng.uniforms(n, 0.05, 0.95))],
        build: Box::new(move |t, v| t.bce(v[0], &targets)),
    }
}

pub type CaseMaker = Box<dyn Fn(&mut Rng) -> Case>;

/// Every differentiable layer kind with its case generator.
pub fn layer_kinds() -> Vec<(&'static str, CaseMaker)> {
    vec![
        ("linear", Box::new(linear)),
        ("conv2d", Box::new(conv)),
        ("max_pool2", Box::new(max_pool)),
        ("relu", Box::new(activation(Activation::Relu))),
        ("leaky_relu", Box::new(activation(Activation::LeakyRelu))),
        ("tanh", Box::new(activation(Activation::Tanh))),
        ("sigmoid", Box::new(activation(Activation::Sigmoid))),
        ("embedding_mean", Box::new(embedding_mean)),
        ("mse", Box::new(mse)),
        ("cross_entropy", Box::new(cross_entropy)),
        ("bce", Box::new(bce)),
    ]
}

fn evaluate(case: &Case, values: &[Vec<f64>], grad: bool) -> Result<(Tape, Vec<Var>, Var)> {
    let mut tape = Tape::new();
    let vars = case
        .inputs
        .iter()
        .zip(values)
        .map(|(inp, v)| tape.input(&inp.shape, v.clone(), grad))
        .collect::<Result<Vec<_>>>()?;
    let out = (case.build)(&mut tape, &vars)?;
    Ok((tape, vars, out))
}

/// Largest relative error between analytic and numeric gradients.
pub fn max_relative_error(case: &Case) -> Result<f64> {
    let base: Vec<Vec<f64>> = case.inputs.iter().map(|i| i.values.clone()).collect();
    let (mut tape, vars, out) = evaluate(case, &base, true)?;
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(&case.inputs)
        .map(|(&v, inp)| tape.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; count(&inp.shape)]))
        .collect();
    let mut worst = 0.0f64;
    for (k, inp) in case.inputs.iter().enumerate() {
        for j in 0..inp.values.len() {
            let mut plus = base.clone();
            plus[k][j] += EPS;
            let mut minus = base.clone();
            minus[k][j] -= EPS;
            let (tp, _, op) = evaluate(case, &plus, false)?;
            let (tm, _, om) = evaluate(case, &minus, false)?;
            let numeric = (tp.item(op) - tm.item(om)) / (2.0 * EPS);
            let a = analytic[k][j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

/// Worst error over [`TRIALS`] random cases of one layer kind.
pub fn check_kind(make: &dyn Fn(&mut Rng) -> Case, seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..TRIALS {
        worst = worst.max(max_relative_error(&make(&mut rng))?);
    }
    Ok(worst)
}
