//! A pixel-space softmax regression used to judge generated images. It
//! shares no code with the models under test.

#![allow(dead_code)]

use mygo::data::{pixel_value, Example, TaskSplit};
use mygo::rng::Rng;

const PIXELS: usize = 784;

pub struct Oracle {
    classes: usize,
    /// `classes × (PIXELS + 1)`, bias last.
    weights: Vec<f64>,
}

fn pixels(e: &Example) -> Vec<f64> {
    match e {
        Example::Image(p) => p.iter().map(|&b| pixel_value(b)).collect(),
        Example::Tokens(_) => panic!("oracle expects images"),
    }
}

impl Oracle {
    fn scores(&self, x: &[f64]) -> Vec<f64> {
        (0..self.classes)
            .map(|k| {
                let w = &self.weights[k * (PIXELS + 1)..(k + 1) * (PIXELS + 1)];
                w[PIXELS] + w[..PIXELS].iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let s = self.scores(x);
        (0..self.classes).fold(0, |best, k| if s[k] > s[best] { k } else { best })
    }

    /// Plain per-example SGD on softmax cross-entropy.
    pub fn train(split: &TaskSplit, classes: usize, epochs: usize, seed: u64) -> Self {
        let mut o = Oracle { classes, weights: vec![0.0; classes * (PIXELS + 1)] };
        let xs: Vec<Vec<f64>> = split.examples.iter().map(pixels).collect();
        let mut rng = Rng::new(seed);
        let lr = 0.01;
        for _ in 0..epochs {
            for i in rng.permutation(xs.len()) {
                let s = o.scores(&xs[i]);
                let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exp: Vec<f64> = s.iter().map(|v| (v - max).exp()).collect();
                let z: f64 = exp.iter().sum();
                for k in 0..classes {
                    let g = exp[k] / z - if k == split.local_labels[i] { 1.0 } else { 0.0 };
                    let w = &mut o.weights[k * (PIXELS + 1)..(k + 1) * (PIXELS + 1)];
                    w[..PIXELS].iter_mut().zip(&xs[i]).for_each(|(wj, xj)| *wj -= lr * g * xj);
                    w[PIXELS] -= lr * g;
                }
            }
        }
        o
    }

    pub fn accuracy(&self, split: &TaskSplit) -> f64 {
        let hits = split.examples.iter().zip(&split.local_labels).filter(|(e, &y)| self.predict(&pixels(e)) == y).count();
        hits as f64 / split.examples.len() as f64
    }

    /// Fraction of `n × 784` images whose predicted class equals `labels`.
    pub fn agreement(&self, images: &[f64], labels: &[usize]) -> f64 {
        let hits = images.chunks(PIXELS).zip(labels).filter(|(x, &y)| self.predict(x) == y).count();
        hits as f64 / labels.len() as f64
    }
}
