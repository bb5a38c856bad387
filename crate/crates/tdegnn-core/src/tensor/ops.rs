//! Primitive differentiable operations.
//!
//! Every op validates shapes, computes the forward value, and (when any input
//! requires grad) records a backward step on the tape. Backward steps compute
//! the full gradient contribution first and only then accumulate, so no two
//! borrows of one tensor overlap.

use std::sync::Arc;

use super::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::graph::SparseOperator;
use crate::rng::RngStream;

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

impl Tape {
    /// Standard matrix product `[m×k]·[k×n] -> [m×n]`.
    /// Gradients: `dA = dC·Bᵀ`, `dB = Aᵀ·dC`.
    pub fn matmul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let ([m, ka], [kb, n]) = (a.shape(), b.shape()) else {
            return Err(shape_err("matmul", a.shape(), b.shape()));
        };
        let (m, ka, kb, n) = (*m, *ka, *kb, *n);
        if ka != kb {
            return Err(shape_err("matmul", a.shape(), b.shape()));
        }
        let out_data = matmul_raw(&a.data(), &b.data(), m, ka, n);
        let out = Tensor::from_vec(&[m, n], out_data)?;
        if a.requires_grad() || b.requires_grad() {
            out.set_requires_grad(true);
            let (a, b, o) = (a.clone(), b.clone(), out.clone());
            self.record(move || {
                let Some(g) = o.grad_vec() else { return };
                if a.requires_grad() {
                    let da = matmul_nt(&g, &b.data(), m, n, ka);
                    a.accumulate_grad(&da);
                }
                if b.requires_grad() {
                    let db = matmul_tn(&a.data(), &g, m, ka, n);
                    b.accumulate_grad(&db);
                }
            });
        }
        Ok(out)
    }

    pub fn transpose(&mut self, a: &Tensor) -> Result<Tensor> {
        let (r, c) = a.dims2()?;
        let src = a.data();
        let mut out_data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out_data[j * r + i] = src[i * c + j];
            }
        }
        drop(src);
        let out = Tensor::from_vec(&[c, r], out_data)?;
        if a.requires_grad() {
            out.set_requires_grad(true);
            let (a, o) = (a.clone(), out.clone());
            self.record(move || {
                let Some(g) = o.grad_vec() else { return };
                let mut da = vec![0.0; r * c];
                for j in 0..c {
                    for i in 0..r {
                        da[i * c + j] = g[j * r + i];
                    }
                }
                a.accumulate_grad(&da);
            });
        }
        Ok(out)
    }

    pub fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.elementwise_binary("add", a, b, |x, y| x + y, |_x, _y, g| (g, g))
    }

    pub fn sub(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.elementwise_binary("sub", a, b, |x, y| x - y, |_x, _y, g| (g, -g))
    }

    /// Hadamard (elementwise) product.
    pub fn mul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.elementwise_binary("mul", a, b, |x, y| x * y, |x, y, g| (g * y, g * x))
    }

    fn elementwise_binary(
        &mut self,
        name: &'static str,
        a: &Tensor,
        b: &Tensor,
        fwd: fn(f64, f64) -> f64,
        bwd: fn(f64, f64, f64) -> (f64, f64),
    ) -> Result<Tensor> {
        if a.shape() != b.shape() {
            return Err(shape_err(name, a.shape(), b.shape()));
        }
        let out_data: Vec<f64> = a
            .data()
            .iter()
            .zip(b.data().iter())
            .map(|(x, y)| fwd(*x, *y))
            .collect();
        let out = Tensor::from_vec(a.shape(), out_data)?;
        if a.requires_grad() || b.requires_grad() {
            out.set_requires_grad(true);
            let (a, b, o) = (a.clone(), b.clone(), out.clone());
            self.record(move || {
                let Some(g) = o.grad_vec() else { return };
                let (mut da, mut db) = (Vec::new(), Vec::new());
                {
                    let (xs, ys) = (a.data(), b.data());
                    da.reserve(g.len());
                    db.reserve(g.len());
                    for i in 0..g.len() {
                        let (ga, gb) = bwd(xs[i], ys[i], g[i]);
                        da.push(ga);
                        db.push(gb);
                    }
                }
                if a.requires_grad() {
                    a.accumulate_grad(&da);
                }
                if b.requires_grad() {
                    b.accumulate_grad(&db);
                }
            });
        }
        Ok(out)
    }

    /// Multiply by a compile-time-known constant.
    pub fn scale(&mut self, a: &Tensor, k: f64) -> Tensor {
        let out_data: Vec<f64> = a.data().iter().map(|x| k * x).collect();
        let out = Tensor::from_vec(a.shape(), out_data).expect("scale keeps shape");
        if a.requires_grad() {
            out.set_requires_grad(true);
            let (a, o) = (a.clone(), out.clone());
            self.record(move || {
                let Some(g) = o.grad_vec() else { return };
                let da: Vec<f64> = g.iter().map(|v| k * v).collect();
                a.accumulate_grad(&da);
            });
        }
        out
    }

    /// Multiply every entry of `a` by the one-element tensor `s`.
    /// Gradients: `dA = s·dC`, `dS = Σ dC⊙A`.
    pub fn mul_scalar(&mut self, a: &Tensor, s: &Tensor) -> Result<Tensor> {
        if s.numel() != 1 {
            return Err(shape_err("mul_scalar", a.shape(), s.shape()));
        }
        let sv = s.item();
        let out_data: Vec<f64> = a.data().iter().map(|x| sv * x).collect();
        let out = Tensor::from_vec(a.shape(), out_data)?;
        if a.requires_grad() || s.requires_grad() {
            out.set_requires_grad(true);
            let (a, s, o) = (a.clone(), s.clone(), out.clone());
            self.record(move || {
                let Some(g) = o.grad_vec() else { return };
                if a.requires_grad() {
                    let da: Vec<f64> = g.iter().map(|v| sv * v).collect();
                    a.accumulate_grad(&da);
                }
                if s.requires_grad() {
                    let ds: f64 = g.iter().zip(a.data().iter()).map(|(v, x)| v * x).sum();
                    s.accumulate_grad(&[ds]);
                }
            });
        }
        Ok(out)
    }

    /// Reciprocal of a one-element tensor.
    pub fn recip(&mut self, s: &Tensor) -> Result<Tensor> {
        if s.numel() != 1 {
            return Err(shape_err("recip", s.shape(), &[1]));
        }
        let sv = s.item();
        let out = Tensor::scalar(1.0 / sv);
        if s.requires_grad() {
            out.set_requires_grad(true);
            let (s, o) = (s.clone(), out.clone());
            self.record(move || {
                let Some(g) = o.grad_vec() else { return };
                s.accumulate_grad(&[-g[0] / (sv * sv)]);
            });
        }
        Ok(out)
    }

    /// Sum of all entries, as a one-element tensor.
    pub fn sum(&mut self, a: &Tensor) -> Tensor {
        let total: f64 = a.data().iter().sum();
        let out = Tensor::scalar(total);
        if a.requires_grad() {
            out.set_requires_grad(true);
            let (a, o) = (a.clone(), out.clone());
            self.record(move || {
                let Some(g) = o.grad_vec() else { return };
                a.accumulate_grad(&vec![g[0]; a.numel()]);
            });
        }
        out
    }

    /// Column means of a matrix: `[n×k] -> [k]`.
    pub fn mean_rows(&mut self, a: &Tensor) -> Result<Tensor> {
        let (n, k) = a.dims2()?;
        let src = a.data();
        let mut out_data = vec![0.0; k];
        for i in 0..n {
            for j in 0..k {
                out_data[j] += src[i * k + j];
            }
        }
        drop(src);
        let inv = 1.0 / n as f64;
        for v in &mut out_data {
            *v *= inv;
        }
        let out = Tensor::from_vec(&[k], out_data)?;
        if a.requires_grad() {
            out.set_requires_grad(true);
            let (a, o) = (a.clone(), out.clone());
            self.record(move || {
                let Some(g) = o.grad_vec() else { return };
                let mut da = vec![0.0; n * k];
                for i in 0..n {
                    for j in 0..k {
                        da[i * k + j] = g[j] * inv;
                    }
                }
                a.accumulate_grad(&da);
            });
        }
        Ok(out)
    }

    /// Add a length-`k` bias row to every row of an `[n×k]` matrix.
    pub fn add_bias(&mut self, a: &Tensor, bias: &Tensor) -> Result<Tensor> {
        let (n, k) = a.dims2()?;
        if bias.shape() != [k] {
            return Err(shape_err("add_bias", a.shape(), bias.shape()));
        }
        let out_data: Vec<f64> = {
            let (src, b) = (a.data(), bias.data());
            (0..n * k).map(|idx| src[idx] + b[idx % k]).collect()
        };
        let out = Tensor::from_vec(&[n, k], out_data)?;
        if a.requires_grad() || bias.requires_grad() {
            out.set_requires_grad(true);
            let (a, bias, o) = (a.clone(), bias.clone(), out.clone());
            self.record(move || {
                let Some(g) = o.grad_vec() else { return };
                if a.requires_grad() {
                    a.accumulate_grad(&g);
                }
                if bias.requires_grad() {
                    let mut db = vec![0.0; k];
                    for i in 0..n {
                        for j in 0..k {
                            db[j] += g[i * k + j];
                        }
                    }
                    bias.accumulate_grad(&db);
                }
            });
        }
        Ok(out)
    }

    /// Elementwise `max(x, 0)`; the subgradient at 0 is 0.
    pub fn relu(&mut self, a: &Tensor) -> Tensor {
        let out_data: Vec<f64> = a.data().iter().map(|x| x.max(0.0)).collect();
        let out = Tensor::from_vec(a.shape(), out_data).expect("relu keeps shape");
        if a.requires_grad() {
            out.set_requires_grad(true);
            let (a, o) = (a.clone(), out.clone());
            self.record(move || {
                let Some(g) = o.grad_vec() else { return };
                let da: Vec<f64> = {
                    let xs = a.data();
                    g.iter()
                        .zip(xs.iter())
                        .map(|(gv, x)| if *x > 0.0 { *gv } else { 0.0 })
                        .collect()
                };
                a.accumulate_grad(&da);
            });
        }
        out
    }

    /// Inverted dropout: zero each entry with probability `p` and scale
    /// survivors by `1/(1-p)`. Identity at inference or `p = 0`.
    pub fn dropout(
        &mut self,
        a: &Tensor,
        p: f64,
        training: bool,
        rng: &mut RngStream,
    ) -> Result<Tensor> {
        if !(0.0..=0.9).contains(&p) {
            return Err(Error::config(
                "dropout.p",
                format!("must lie in [0, 0.9], got {p}"),
            ));
        }
        if !training || p == 0.0 {
            return Ok(a.clone());
        }
        let keep_scale = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..a.numel())
            .map(|_| if rng.next_f64() < p { 0.0 } else { keep_scale })
            .collect();
        let out_data: Vec<f64> = a.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::from_vec(a.shape(), out_data)?;
        if a.requires_grad() {
            out.set_requires_grad(true);
            let (a, o) = (a.clone(), out.clone());
            self.record(move || {
                let Some(g) = o.grad_vec() else { return };
                let da: Vec<f64> = g.iter().zip(&mask).map(|(gv, m)| gv * m).collect();
                a.accumulate_grad(&da);
            });
        }
        Ok(out)
    }

    /// Concatenate matrices along the column axis.
    pub fn concat_cols(&mut self, parts: &[Tensor]) -> Result<Tensor> {
        assert!(!parts.is_empty(), "concat_cols: empty part list");
        let (n, _) = parts[0].dims2()?;
        let mut widths = Vec::with_capacity(parts.len());
        for part in parts {
            let (pn, pk) = part.dims2()?;
            if pn != n {
                return Err(shape_err("concat_cols", parts[0].shape(), part.shape()));
            }
            widths.push(pk);
        }
        let total: usize = widths.iter().sum();
        let mut out_data = vec![0.0; n * total];
        let mut offset = 0;
        for (part, &w) in parts.iter().zip(&widths) {
            let src = part.data();
            for i in 0..n {
                out_data[i * total + offset..i * total + offset + w]
                    .copy_from_slice(&src[i * w..(i + 1) * w]);
            }
            offset += w;
        }
        let out = Tensor::from_vec(&[n, total], out_data)?;
        if parts.iter().any(Tensor::requires_grad) {
            out.set_requires_grad(true);
            let parts: Vec<Tensor> = parts.to_vec();
            let widths = widths.clone();
            let o = out.clone();
            self.record(move || {
                let Some(g) = o.grad_vec() else { return };
                let mut offset = 0;
                for (part, &w) in parts.iter().zip(&widths) {
                    if part.requires_grad() {
                        let mut dp = vec![0.0; n * w];
                        for i in 0..n {
                            dp[i * w..(i + 1) * w].copy_from_slice(
                                &g[i * total + offset..i * total + offset + w],
                            );
                        }
                        part.accumulate_grad(&dp);
                    }
                    offset += w;
                }
            });
        }
        Ok(out)
    }

    /// Stack length-`k` vectors into an `[r×k]` matrix, row per input.
    pub fn stack_rows(&mut self, parts: &[Tensor]) -> Result<Tensor> {
        assert!(!parts.is_empty(), "stack_rows: empty part list");
        let k = parts[0].numel();
        let mut out_data = Vec::with_capacity(parts.len() * k);
        for part in parts {
            if part.shape() != [k] {
                return Err(shape_err("stack_rows", parts[0].shape(), part.shape()));
            }
            out_data.extend_from_slice(&part.data());
        }
        let out = Tensor::from_vec(&[parts.len(), k], out_data)?;
        if parts.iter().any(Tensor::requires_grad) {
            out.set_requires_grad(true);
            let parts: Vec<Tensor> = parts.to_vec();
            let o = out.clone();
            self.record(move || {
                let Some(g) = o.grad_vec() else { return };
                for (i, part) in parts.iter().enumerate() {
                    if part.requires_grad() {
                        part.accumulate_grad(&g[i * k..(i + 1) * k]);
                    }
                }
            });
        }
        Ok(out)
    }

    /// Take `width` contiguous columns of a matrix starting at `start`.
    pub fn col_slice(&mut self, a: &Tensor, start: usize, width: usize) -> Result<Tensor> {
        let (n, c) = a.dims2()?;
        if start + width > c {
            return Err(Error::state(format!(
                "column slice {start}..{} out of bounds for {c} columns",
                start + width
            )));
        }
        let src = a.data();
        let mut out_data = Vec::with_capacity(n * width);
        for i in 0..n {
            out_data.extend_from_slice(&src[i * c + start..i * c + start + width]);
        }
        drop(src);
        let out = Tensor::from_vec(&[n, width], out_data)?;
        if a.requires_grad() {
            out.set_requires_grad(true);
            let (a, o) = (a.clone(), out.clone());
            self.record(move || {
                let Some(g) = o.grad_vec() else { return };
                let mut da = vec![0.0; n * c];
                for i in 0..n {
                    da[i * c + start..i * c + start + width]
                        .copy_from_slice(&g[i * width..(i + 1) * width]);
                }
                a.accumulate_grad(&da);
            });
        }
        Ok(out)
    }

    /// Extract row `idx` of a matrix as a vector.
    pub fn row(&mut self, a: &Tensor, idx: usize) -> Result<Tensor> {
        let (r, c) = a.dims2()?;
        if idx >= r {
            return Err(Error::state(format!(
                "row index {idx} out of bounds for {r} rows"
            )));
        }
        let out_data = a.data()[idx * c..(idx + 1) * c].to_vec();
        let out = Tensor::from_vec(&[c], out_data)?;
        if a.requires_grad() {
            out.set_requires_grad(true);
            let (a, o) = (a.clone(), out.clone());
            self.record(move || {
                let Some(g) = o.grad_vec() else { return };
                let mut da = vec![0.0; r * c];
                da[idx * c..(idx + 1) * c].copy_from_slice(&g);
                a.accumulate_grad(&da);
            });
        }
        Ok(out)
    }

    /// Extract one entry (by flat index) as a one-element tensor.
    pub fn element(&mut self, a: &Tensor, idx: usize) -> Result<Tensor> {
        if idx >= a.numel() {
            return Err(Error::state(format!(
                "element index {idx} out of bounds for {} entries",
                a.numel()
            )));
        }
        let out = Tensor::scalar(a.data()[idx]);
        if a.requires_grad() {
            out.set_requires_grad(true);
            let (a, o) = (a.clone(), out.clone());
            self.record(move || {
                let Some(g) = o.grad_vec() else { return };
                let mut da = vec![0.0; a.numel()];
                da[idx] = g[0];
                a.accumulate_grad(&da);
            });
        }
        Ok(out)
    }

    /// Sparse-operator application `L·F`, column by column. The operator is
    /// symmetric, so the input gradient is the same application to `dC`.
    pub fn spmv(&mut self, op: &Arc<SparseOperator>, f: &Tensor) -> Result<Tensor> {
        let (n, k) = f.dims2()?;
        if op.dim() != n {
            return Err(shape_err("spmv", &[op.dim(), op.dim()], f.shape()));
        }
        let out_data = op.apply_dense(&f.data(), k);
        let out = Tensor::from_vec(&[n, k], out_data)?;
        if f.requires_grad() {
            out.set_requires_grad(true);
            let (op, f, o) = (Arc::clone(op), f.clone(), out.clone());
            self.record(move || {
                let Some(g) = o.grad_vec() else { return };
                let df = op.apply_dense(&g, k);
                f.accumulate_grad(&df);
            });
        }
        Ok(out)
    }

    /// Mean of squared differences over all entries.
    pub fn mse_loss(&mut self, pred: &Tensor, target: &Tensor) -> Result<Tensor> {
        if pred.shape() != target.shape() {
            return Err(shape_err("mse_loss", pred.shape(), target.shape()));
        }
        let n = pred.numel() as f64;
        let total: f64 = pred
            .data()
            .iter()
            .zip(target.data().iter())
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        let out = Tensor::scalar(total / n);
        if pred.requires_grad() || target.requires_grad() {
            out.set_requires_grad(true);
            let (pred, target, o) = (pred.clone(), target.clone(), out.clone());
            self.record(move || {
                let Some(g) = o.grad_vec() else { return };
                let scale = 2.0 * g[0] / n;
                let dp: Vec<f64> = pred
                    .data()
                    .iter()
                    .zip(target.data().iter())
                    .map(|(p, t)| scale * (p - t))
                    .collect();
                if pred.requires_grad() {
                    pred.accumulate_grad(&dp);
                }
                if target.requires_grad() {
                    let dt: Vec<f64> = dp.iter().map(|v| -v).collect();
                    target.accumulate_grad(&dt);
                }
            });
        }
        Ok(out)
    }

    /// Mean over masked rows of `-log softmax(logits)[label]`, stabilized by
    /// per-row max subtraction.
    pub fn cross_entropy(
        &mut self,
        logits: &Tensor,
        labels: &[usize],
        mask: &[bool],
    ) -> Result<Tensor> {
        let (n, k) = logits.dims2()?;
        if labels.len() != n || mask.len() != n {
            return Err(shape_err("cross_entropy", logits.shape(), &[labels.len()]));
        }
        let count = mask.iter().filter(|m| **m).count();
        if count == 0 {
            return Err(Error::state("cross_entropy: mask selects no nodes"));
        }
        for (i, &label) in labels.iter().enumerate() {
            if mask[i] && label >= k {
                return Err(Error::state(format!(
                    "cross_entropy: label {label} out of range for {k} classes (node {i})"
                )));
            }
        }
        // Softmax probabilities of masked rows, saved for backward.
        let mut probs = vec![0.0; n * k];
        let mut total = 0.0;
        {
            let src = logits.data();
            for i in 0..n {
                if !mask[i] {
                    continue;
                }
                let r = &src[i * k..(i + 1) * k];
                let mx = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut denom = 0.0;
                for j in 0..k {
                    let e = (r[j] - mx).exp();
                    probs[i * k + j] = e;
                    denom += e;
                }
                for j in 0..k {
                    probs[i * k + j] /= denom;
                }
                total += denom.ln() - (r[labels[i]] - mx);
            }
        }
        let out = Tensor::scalar(total / count as f64);
        if logits.requires_grad() {
            out.set_requires_grad(true);
            let (logits, o) = (logits.clone(), out.clone());
            let labels = labels.to_vec();
            let mask = mask.to_vec();
            self.record(move || {
                let Some(g) = o.grad_vec() else { return };
                let scale = g[0] / count as f64;
                let mut dl = vec![0.0; n * k];
                for i in 0..n {
                    if !mask[i] {
                        continue;
                    }
                    for j in 0..k {
                        let indicator = if j == labels[i] { 1.0 } else { 0.0 };
                        dl[i * k + j] = scale * (probs[i * k + j] - indicator);
                    }
                }
                logits.accumulate_grad(&dl);
            });
        }
        Ok(out)
    }

    /// Per-feature standardization over the node axis with learnable scale
    /// and shift. Statistics always come from the current batch.
    pub fn batch_norm(
        &mut self,
        x: &Tensor,
        gamma: &Tensor,
        beta: &Tensor,
        eps: f64,
    ) -> Result<Tensor> {
        let (n, k) = x.dims2()?;
        if gamma.shape() != [k] || beta.shape() != [k] {
            return Err(shape_err("batch_norm", x.shape(), gamma.shape()));
        }
        let nf = n as f64;
        let (mut mean, mut var) = (vec![0.0; k], vec![0.0; k]);
        {
            let src = x.data();
            for i in 0..n {
                for j in 0..k {
                    mean[j] += src[i * k + j];
                }
            }
            for m in &mut mean {
                *m /= nf;
            }
            for i in 0..n {
                for j in 0..k {
                    let d = src[i * k + j] - mean[j];
                    var[j] += d * d;
                }
            }
            for v in &mut var {
                *v /= nf;
            }
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut normalized = vec![0.0; n * k];
        let mut out_data = vec![0.0; n * k];
        {
            let (src, gm, bt) = (x.data(), gamma.data(), beta.data());
            for i in 0..n {
                for j in 0..k {
                    let z = (src[i * k + j] - mean[j]) * inv_std[j];
                    normalized[i * k + j] = z;
                    out_data[i * k + j] = gm[j] * z + bt[j];
                }
            }
        }
        let out = Tensor::from_vec(&[n, k], out_data)?;
        if x.requires_grad() || gamma.requires_grad() || beta.requires_grad() {
            out.set_requires_grad(true);
            let (x, gamma, beta, o) = (x.clone(), gamma.clone(), beta.clone(), out.clone());
            self.record(move || {
                let Some(g) = o.grad_vec() else { return };
                if beta.requires_grad() {
                    let mut db = vec![0.0; k];
                    for i in 0..n {
                        for j in 0..k {
                            db[j] += g[i * k + j];
                        }
                    }
                    beta.accumulate_grad(&db);
                }
                if gamma.requires_grad() {
                    let mut dg = vec![0.0; k];
                    for i in 0..n {
                        for j in 0..k {
                            dg[j] += g[i * k + j] * normalized[i * k + j];
                        }
                    }
                    gamma.accumulate_grad(&dg);
                }
                if x.requires_grad() {
                    let gm = gamma.to_vec();
                    let (mut g_mean, mut gz_mean) = (vec![0.0; k], vec![0.0; k]);
                    for i in 0..n {
                        for j in 0..k {
                            g_mean[j] += g[i * k + j];
                            gz_mean[j] += g[i * k + j] * normalized[i * k + j];
                        }
                    }
                    for j in 0..k {
                        g_mean[j] /= nf;
                        gz_mean[j] /= nf;
                    }
                    let mut dx = vec![0.0; n * k];
                    for i in 0..n {
                        for j in 0..k {
                            dx[i * k + j] = gm[j]
                                * inv_std[j]
                                * (g[i * k + j]
                                    - g_mean[j]
                                    - normalized[i * k + j] * gz_mean[j]);
                        }
                    }
                    x.accumulate_grad(&dx);
                }
            });
        }
        Ok(out)
    }
}

/// `C[m×n] = A[m×k]·B[k×n]`, row-major.
pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let crow = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += aip * brow[j];
            }
        }
    }
    c
}

/// `D[m×k] = G[m×n]·Bᵀ` where `B` is `[k×n]`.
fn matmul_nt(g: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut d = vec![0.0; m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut s = 0.0;
            for j in 0..n {
                s += grow[j] * brow[j];
            }
            d[i * k + p] = s;
        }
    }
    d
}

/// `D[k×n] = Aᵀ·G` where `A` is `[m×k]`, `G` is `[m×n]`.
fn matmul_tn(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut d = vec![0.0; k * n];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let drow = &mut d[p * n..(p + 1) * n];
            for j in 0..n {
                drow[j] += aip * grow[j];
            }
        }
    }
    d
}
