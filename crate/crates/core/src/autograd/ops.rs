use serde::{Deserialize, Serialize};

use super::kernels::{col2im_add, gemm, im2col, ConvGeom, Layout};
use super::{accumulate, Node, Tape, Var};
use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.2;
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// Fixed negative slope of 0.2.
    LeakyRelu,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }

    /// Derivative expressed through the output `y`.
    fn slope(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if y > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    CrossEntropy,
    Bce,
}

pub(super) enum Op {
    Leaf,
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    AddBias { x: Var, bias: Var, cols: usize },
    Conv2d { x: Var, w: Var, b: Option<Var>, geom: ConvGeom, cols: Option<Vec<f64>> },
    MaxPool2 { x: Var, argmax: Vec<usize> },
    Act { x: Var, kind: Activation },
    Reshape { x: Var },
    ConcatCols { parts: Vec<(Var, usize)>, rows: usize },
    EmbeddingMean { table: Var, dim: usize, ids: Vec<usize>, offsets: Vec<usize> },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, s: f64 },
    Sum { x: Var },
    Mse { a: Var, b: Var },
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<f64>, classes: usize },
    Bce { p: Var, targets: Vec<f64> },
}

fn rank2(tape: &Tape, v: Var, what: &str) -> Result<(usize, usize)> {
    match tape.shape(v) {
        [r, c] => Ok((*r, *c)),
        s => Err(Error::Shape(format!("{what} must be rank 2, got {s:?}"))),
    }
}

fn same_shape(tape: &Tape, a: Var, b: Var, what: &str) -> Result<()> {
    if tape.shape(a) != tape.shape(b) {
        return Err(Error::Shape(format!(
            "{what}: shape mismatch {:?} vs {:?}",
            tape.shape(a),
            tape.shape(b)
        )));
    }
    Ok(())
}

impl Tape {
    /// `c[i][j] = Σ_k a[i][k]·b[k][j]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = rank2(self, a, "matmul lhs")?;
        let (k2, n) = rank2(self, b, "matmul rhs")?;
        if k != k2 {
            return Err(Error::Shape(format!("matmul inner extents differ: {m}x{k} · {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a), Layout::Plain, self.value(b), Layout::Plain, 0.0, &mut out);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(vec![m, n], out, rg, Op::MatMul { a, b, m, k, n }))
    }

    /// Adds a length-`cols` bias to every row of an `rows×cols` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (rows, cols) = rank2(self, x, "add_bias input")?;
        if self.value(bias).len() != cols {
            return Err(Error::Shape(format!("bias of length {} for {cols} columns", self.value(bias).len())));
        }
        let b = self.value(bias);
        let mut out = self.value(x).to_vec();
        for row in out.chunks_exact_mut(cols) {
            row.iter_mut().zip(b).for_each(|(o, bb)| *o += bb);
        }
        let rg = self.any_grad(&[x, bias]);
        let shape = vec![rows, cols];
        Ok(self.push(shape, out, rg, Op::AddBias { x, bias, cols }))
    }

    /// `x · w + b` for `x: N×in`, `w: in×out`, `b: out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_bias(xw, b)
    }

    /// Cross-correlation of `N×C×H×W` input with `F×C×kh×kw` kernels and an
    /// optional per-filter bias. Output extents use floor division.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (n, c, h, wd) = match self.shape(x) {
            [n, c, h, w] => (*n, *c, *h, *w),
            s => return Err(Error::Shape(format!("conv2d input must be N×C×H×W, got {s:?}"))),
        };
        let (f, c2, kh, kw) = match self.shape(w) {
            [f, c, kh, kw] => (*f, *c, *kh, *kw),
            s => return Err(Error::Shape(format!("conv2d kernel must be F×C×kh×kw, got {s:?}"))),
        };
        if c != c2 {
            return Err(Error::Shape(format!("conv2d channels differ: input {c}, kernel {c2}")));
        }
        if stride == 0 {
            return Err(Error::Shape("conv2d stride must be at least 1".into()));
        }
        if kh > h + 2 * pad || kw > wd + 2 * pad {
            return Err(Error::Shape(format!(
                "conv2d kernel {kh}x{kw} larger than padded input {}x{}",
                h + 2 * pad,
                wd + 2 * pad
            )));
        }
        if let Some(b) = b {
            if self.value(b).len() != f {
                return Err(Error::Shape(format!("conv2d bias of length {} for {f} filters", self.value(b).len())));
            }
        }
        let geom = ConvGeom {
            batch: n,
            in_ch: c,
            height: h,
            width: wd,
            out_ch: f,
            kh,
            kw,
            stride,
            pad,
            out_h: (h + 2 * pad - kh) / stride + 1,
            out_w: (wd + 2 * pad - kw) / stride + 1,
        };
        let (pl, pos) = (geom.patch_len(), geom.positions());
        let keep_cols = self.requires_grad(w);
        let mut saved = if keep_cols { vec![0.0; n * pl * pos] } else { Vec::new() };
        let mut scratch = vec![0.0; pl * pos];
        let mut out = vec![0.0; n * f * pos];
        let xv = self.value(x);
        let wv = self.value(w);
        for i in 0..n {
            let cols = if keep_cols { &mut saved[i * pl * pos..(i + 1) * pl * pos] } else { &mut scratch[..] };
            im2col(&xv[i * geom.image_len()..(i + 1) * geom.image_len()], &geom, cols);
            let dst = &mut out[i * f * pos..(i + 1) * f * pos];
            gemm(f, pl, pos, wv, Layout::Plain, cols, Layout::Plain, 0.0, dst);
        }
        if let Some(b) = b {
            let bv = self.value(b);
            for plane in out.chunks_exact_mut(pos).enumerate() {
                let bias = bv[plane.0 % f];
                plane.1.iter_mut().for_each(|o| *o += bias);
            }
        }
        let mut parents = vec![x, w];
        parents.extend(b);
        let rg = self.any_grad(&parents);
        let cols = keep_cols.then_some(saved);
        Ok(self.push(vec![n, f, geom.out_h, geom.out_w], out, rg, Op::Conv2d { x, w, b, geom, cols }))
    }

    /// 2×2 max pooling with stride 2. Ties go to the first element in
    /// row-major window order.
    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = match self.shape(x) {
            [n, c, h, w] => (*n, *c, *h, *w),
            s => return Err(Error::Shape(format!("max_pool2 input must be N×C×H×W, got {s:?}"))),
        };
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Shape(format!("max_pool2 needs even extents, got {h}x{w}")));
        }
        let (oh, ow) = (h / 2, w / 2);
        let xv = self.value(x);
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let top = base + 2 * oy * w + 2 * ox;
                    let mut best = top;
                    for idx in [top + 1, top + w, top + w + 1] {
                        if xv[idx] > xv[best] {
                            best = idx;
                        }
                    }
                    out.push(xv[best]);
                    argmax.push(best);
                }
            }
        }
        let rg = self.any_grad(&[x]);
        Ok(self.push(vec![n, c, oh, ow], out, rg, Op::MaxPool2 { x, argmax }))
    }

    pub fn activation(&mut self, kind: Activation, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| kind.apply(v)).collect();
        let rg = self.any_grad(&[x]);
        let shape = self.shape(x).to_vec();
        self.push(shape, out, rg, Op::Act { x, kind })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(Activation::Relu, x)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let numel = crate::tensor::check_shape(shape)?;
        if numel != self.value(x).len() {
            return Err(Error::Shape(format!("cannot reshape {:?} into {shape:?}", self.shape(x))));
        }
        let out = self.value(x).to_vec();
        let rg = self.any_grad(&[x]);
        Ok(self.push(shape.to_vec(), out, rg, Op::Reshape { x }))
    }

    /// Concatenates rank-2 nodes with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Shape("concat_cols of nothing".into()));
        };
        let (rows, _) = rank2(self, first, "concat_cols part")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = rank2(self, p, "concat_cols part")?;
            if r != rows {
                return Err(Error::Shape(format!("concat_cols row mismatch: {r} vs {rows}")));
            }
            widths.push((p, c));
        }
        let total: usize = widths.iter().map(|w| w.1).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &(p, c) in &widths {
                out.extend_from_slice(&self.value(p)[r * c..(r + 1) * c]);
            }
        }
        let rg = self.any_grad(parts);
        Ok(self.push(vec![rows, total], out, rg, Op::ConcatCols { parts: widths, rows }))
    }

    /// Mean of embedding rows per bag. Bag `i` covers
    /// `ids[offsets[i]..offsets[i + 1]]` (the last bag runs to the end);
    /// an empty bag yields a zero vector.
    pub fn embedding_mean(&mut self, table: Var, ids: &[usize], offsets: &[usize]) -> Result<Var> {
        let (vocab, dim) = rank2(self, table, "embedding table")?;
        if offsets.is_empty() {
            return Err(Error::Shape("embedding_mean needs at least one bag".into()));
        }
        if offsets[0] != 0 || offsets.windows(2).any(|w| w[0] > w[1]) || *offsets.last().unwrap() > ids.len() {
            return Err(Error::Shape("embedding_mean offsets must start at 0 and be non-decreasing".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id >= vocab) {
            return Err(Error::Shape(format!("token id {bad} out of range for vocabulary of {vocab}")));
        }
        let tv = self.value(table);
        let bags = offsets.len();
        let mut out = vec![0.0; bags * dim];
        for b in 0..bags {
            let end = offsets.get(b + 1).copied().unwrap_or(ids.len());
            let bag = &ids[offsets[b]..end];
            if bag.is_empty() {
                continue;
            }
            let dst = &mut out[b * dim..(b + 1) * dim];
            for &id in bag {
                dst.iter_mut().zip(&tv[id * dim..(id + 1) * dim]).for_each(|(o, t)| *o += t);
            }
            let inv = 1.0 / bag.len() as f64;
            dst.iter_mut().for_each(|o| *o *= inv);
        }
        let rg = self.any_grad(&[table]);
        let op = Op::EmbeddingMean { table, dim, ids: ids.to_vec(), offsets: offsets.to_vec() };
        Ok(self.push(vec![bags, dim], out, rg, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "add")?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let rg = self.any_grad(&[a, b]);
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, rg, Op::Add { a, b }))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "mul")?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let rg = self.any_grad(&[a, b]);
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, rg, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out = self.value(x).iter().map(|v| v * s).collect();
        let rg = self.any_grad(&[x]);
        let shape = self.shape(x).to_vec();
        self.push(shape, out, rg, Op::Scale { x, s })
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).iter().sum();
        let rg = self.any_grad(&[x]);
        self.push(vec![1], vec![total], rg, Op::Sum { x })
    }

    /// `(1/numel) Σ (a − b)²` over every element.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "mse")?;
        let n = self.value(a).len() as f64;
        let total: f64 = self.value(a).iter().zip(self.value(b)).map(|(x, y)| (x - y) * (x - y)).sum();
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(vec![1], vec![total / n], rg, Op::Mse { a, b }))
    }

    /// Mean negative log-softmax of the target class, via log-sum-exp.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (rows, classes) = rank2(self, logits, "cross_entropy logits")?;
        if labels.len() != rows {
            return Err(Error::Shape(format!("{} labels for {rows} rows of logits", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Shape(format!("label {bad} out of range for {classes} classes")));
        }
        let lv = self.value(logits);
        let mut probs = vec![0.0; rows * classes];
        let mut total = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let row = &lv[r * classes..(r + 1) * classes];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            total += lse - row[label];
            for (p, z) in probs[r * classes..(r + 1) * classes].iter_mut().zip(row) {
                *p = (z - lse).exp();
            }
        }
        let rg = self.any_grad(&[logits]);
        let op = Op::CrossEntropy { logits, labels: labels.to_vec(), probs, classes };
        Ok(self.push(vec![1], vec![total / rows as f64], rg, op))
    }

    /// Mean binary cross-entropy of probabilities `p` against `targets`,
    /// with `p` clamped to `[1e-7, 1 − 1e-7]`.
    pub fn bce(&mut self, p: Var, targets: &[f64]) -> Result<Var> {
        if self.value(p).len() != targets.len() {
            return Err(Error::Shape(format!(
                "bce: {} predictions for {} targets",
                self.value(p).len(),
                targets.len()
            )));
        }
        let n = targets.len() as f64;
        let total: f64 = self
            .value(p)
            .iter()
            .zip(targets)
            .map(|(&q, &t)| {
                let q = q.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                -(t * q.ln() + (1.0 - t) * (1.0 - q).ln())
            })
            .sum();
        let rg = self.any_grad(&[p]);
        Ok(self.push(vec![1], vec![total / n], rg, Op::Bce { p, targets: targets.to_vec() }))
    }

    /// Dispatches on [`LossKind`]. `labels` is used by cross-entropy,
    /// `target` by the other two.
    pub fn loss(&mut self, kind: LossKind, pred: Var, target: LossTarget<'_>) -> Result<Var> {
        match (kind, target) {
            (LossKind::Mse, LossTarget::Values(t)) => self.mse(pred, t),
            (LossKind::CrossEntropy, LossTarget::Labels(l)) => self.cross_entropy(pred, l),
            (LossKind::Bce, LossTarget::Probabilities(t)) => self.bce(pred, t),
            (k, _) => Err(Error::Shape(format!("{k:?} loss given the wrong kind of target"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum LossTarget<'a> {
    Values(Var),
    Labels(&'a [usize]),
    Probabilities(&'a [f64]),
}

pub(super) fn backprop(op: &Op, out: &[f64], g: &[f64], nodes: &[Node], grads: &mut [Option<Vec<f64>>]) {
    let val = |v: Var| nodes[v.0].value.as_slice();
    match op {
        Op::Leaf => {}
        &Op::MatMul { a, b, m, k, n } => {
            // dA = dC·Bᵀ, dB = Aᵀ·dC
            accumulate(nodes, grads, a, |ga| gemm(m, n, k, g, Layout::Plain, val(b), Layout::Transposed, 1.0, ga));
            accumulate(nodes, grads, b, |gb| gemm(k, m, n, val(a), Layout::Transposed, g, Layout::Plain, 1.0, gb));
        }
        &Op::AddBias { x, bias, cols } => {
            accumulate(nodes, grads, x, |gx| gx.iter_mut().zip(g).for_each(|(d, s)| *d += s));
            accumulate(nodes, grads, bias, |gb| {
                for row in g.chunks_exact(cols) {
                    gb.iter_mut().zip(row).for_each(|(d, s)| *d += s);
                }
            });
        }
        Op::Conv2d { x, w, b, geom, cols } => {
            let (f, pl, pos) = (geom.out_ch, geom.patch_len(), geom.positions());
            if let Some(b) = *b {
                accumulate(nodes, grads, b, |gb| {
                    for (plane, chunk) in g.chunks_exact(pos).enumerate() {
                        gb[plane % f] += chunk.iter().sum::<f64>();
                    }
                });
            }
            if let Some(cols) = cols {
                accumulate(nodes, grads, *w, |gw| {
                    for i in 0..geom.batch {
                        let gi = &g[i * f * pos..(i + 1) * f * pos];
                        let ci = &cols[i * pl * pos..(i + 1) * pl * pos];
                        gemm(f, pos, pl, gi, Layout::Plain, ci, Layout::Transposed, 1.0, gw);
                    }
                });
            }
            let wv = val(*w);
            accumulate(nodes, grads, *x, |gx| {
                let mut dcols = vec![0.0; pl * pos];
                for i in 0..geom.batch {
                    let gi = &g[i * f * pos..(i + 1) * f * pos];
                    gemm(pl, f, pos, wv, Layout::Transposed, gi, Layout::Plain, 0.0, &mut dcols);
                    col2im_add(&dcols, geom, &mut gx[i * geom.image_len()..(i + 1) * geom.image_len()]);
                }
            });
        }
        Op::MaxPool2 { x, argmax } => {
            accumulate(nodes, grads, *x, |gx| {
                for (&src, d) in argmax.iter().zip(g) {
                    gx[src] += d;
                }
            });
        }
        &Op::Act { x, kind } => {
            accumulate(nodes, grads, x, |gx| {
                for ((d, s), &y) in gx.iter_mut().zip(g).zip(out) {
                    *d += s * kind.slope(y);
                }
            });
        }
        &Op::Reshape { x } => {
            accumulate(nodes, grads, x, |gx| gx.iter_mut().zip(g).for_each(|(d, s)| *d += s));
        }
        Op::ConcatCols { parts, rows } => {
            let total: usize = parts.iter().map(|p| p.1).sum();
            let mut offset = 0;
            for &(p, c) in parts {
                accumulate(nodes, grads, p, |gp| {
                    for r in 0..*rows {
                        let src = &g[r * total + offset..r * total + offset + c];
                        gp[r * c..(r + 1) * c].iter_mut().zip(src).for_each(|(d, s)| *d += s);
                    }
                });
                offset += c;
            }
        }
        Op::EmbeddingMean { table, dim, ids, offsets } => {
            accumulate(nodes, grads, *table, |gt| {
                for b in 0..offsets.len() {
                    let end = offsets.get(b + 1).copied().unwrap_or(ids.len());
                    let bag = &ids[offsets[b]..end];
                    if bag.is_empty() {
                        continue;
                    }
                    let inv = 1.0 / bag.len() as f64;
                    let src = &g[b * dim..(b + 1) * dim];
                    for &id in bag {
                        gt[id * dim..(id + 1) * dim].iter_mut().zip(src).for_each(|(d, s)| *d += s * inv);
                    }
                }
            });
        }
        &Op::Add { a, b } => {
            accumulate(nodes, grads, a, |ga| ga.iter_mut().zip(g).for_each(|(d, s)| *d += s));
            accumulate(nodes, grads, b, |gb| gb.iter_mut().zip(g).for_each(|(d, s)| *d += s));
        }
        &Op::Mul { a, b } => {
            let (av, bv) = (val(a), val(b));
            accumulate(nodes, grads, a, |ga| {
                ga.iter_mut().zip(g).zip(bv).for_each(|((d, s), y)| *d += s * y)
            });
            accumulate(nodes, grads, b, |gb| {
                gb.iter_mut().zip(g).zip(av).for_each(|((d, s), x)| *d += s * x)
            });
        }
        &Op::Scale { x, s } => {
            accumulate(nodes, grads, x, |gx| gx.iter_mut().zip(g).for_each(|(d, u)| *d += u * s));
        }
        &Op::Sum { x } => {
            accumulate(nodes, grads, x, |gx| gx.iter_mut().for_each(|d| *d += g[0]));
        }
        &Op::Mse { a, b } => {
            let (av, bv) = (val(a), val(b));
            let c = 2.0 * g[0] / av.len() as f64;
            accumulate(nodes, grads, a, |ga| {
                ga.iter_mut().zip(av.iter().zip(bv)).for_each(|(d, (x, y))| *d += c * (x - y))
            });
            accumulate(nodes, grads, b, |gb| {
                gb.iter_mut().zip(av.iter().zip(bv)).for_each(|(d, (x, y))| *d -= c * (x - y))
            });
        }
        Op::CrossEntropy { logits, labels, probs, classes } => {
            let c = g[0] / labels.len() as f64;
            accumulate(nodes, grads, *logits, |gl| {
                for (r, &label) in labels.iter().enumerate() {
                    let row = &mut gl[r * classes..(r + 1) * classes];
                    for (j, (d, p)) in row.iter_mut().zip(&probs[r * classes..(r + 1) * classes]).enumerate() {
                        let onehot = if j == label { 1.0 } else { 0.0 };
                        *d += c * (p - onehot);
                    }
                }
            });
        }
        Op::Bce { p, targets } => {
            let pv = val(*p);
            let c = g[0] / targets.len() as f64;
            accumulate(nodes, grads, *p, |gp| {
                for ((d, &q), &t) in gp.iter_mut().zip(pv).zip(targets) {
                    if (BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&q) {
                        *d += c * (-t / q + (1.0 - t) / (1.0 - q));
                    }
                }
            });
        }
    }
}
