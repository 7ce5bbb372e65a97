//! The tensor operation set.
//!
//! Every operation validates shapes, computes its forward value, registers
//! vector-Jacobian-product closures for traced inputs, and checks the output
//! for non-finite values. Ops are written as methods so model code reads as a
//! pipeline, e.g. `x.matmul(&w)?.add_bias(&b)?.relu()?`.

use super::*;

/// Row-major strides for a shape.
fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        strides[d] = strides[d + 1] * shape[d + 1];
    }
    strides
}

/// `out[m,n] = a[m,k] · b[k,n]`.
fn mm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for x in 0..k {
            let s = a[i * k + x];
            if s != 0.0 {
                let b_row = &b[x * n..(x + 1) * n];
                for (o, bv) in out_row.iter_mut().zip(b_row.iter()) {
                    *o += s * bv;
                }
            }
        }
    }
    out
}

/// `out[m,k] = a[m,n] · bᵀ` where `b` is stored as `[k,n]`.
fn mm_nt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let a_row = &a[i * n..(i + 1) * n];
        for x in 0..k {
            let b_row = &b[x * n..(x + 1) * n];
            let mut s = 0.0;
            for (av, bv) in a_row.iter().zip(b_row.iter()) {
                s += av * bv;
            }
            out[i * k + x] = s;
        }
    }
    out
}

/// `out[k,n] = aᵀ · b` where `a` is stored as `[m,k]` and `b` as `[m,n]`.
fn mm_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let b_row = &b[i * n..(i + 1) * n];
        for x in 0..k {
            let s = a[i * k + x];
            if s != 0.0 {
                let out_row = &mut out[x * n..(x + 1) * n];
                for (o, bv) in out_row.iter_mut().zip(b_row.iter()) {
                    *o += s * bv;
                }
            }
        }
    }
    out
}

fn permute_raw(data: &[f64], shape: &[usize], axes: &[usize]) -> Vec<f64> {
    let rank = shape.len();
    let new_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let old_strides = strides_of(shape);
    let mut out = vec![0.0; data.len()];
    let mut index = vec![0usize; rank];
    for slot in out.iter_mut() {
        let mut src = 0;
        for d in 0..rank {
            src += index[d] * old_strides[axes[d]];
        }
        *slot = data[src];
        for d in (0..rank).rev() {
            index[d] += 1;
            if index[d] < new_shape[d] {
                break;
            }
            index[d] = 0;
        }
    }
    out
}

/// Numerically stable logistic function.
pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

impl Tensor {
    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        self.require_rank("matmul", 2)?;
        rhs.require_rank("matmul", 2)?;
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (rhs.shape[0], rhs.shape[1]);
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                details: alloc::format!("inner dims differ: {:?} vs {:?}", self.shape, rhs.shape),
            });
        }
        let out = mm(&self.data, &rhs.data, m, k, n);
        let (a, b) = (self.data_rc(), rhs.data_rc());
        let mut eb = EdgeBuilder::new("matmul");
        {
            let b = Rc::clone(&b);
            eb.input(self, move |g| mm_nt(g, &b, m, n, k))?;
        }
        {
            let a = Rc::clone(&a);
            eb.input(rhs, move |g| mm_tn(&a, g, m, k, n))?;
        }
        eb.finish(vec![m, n], Rc::new(out))
    }

    /// Batched matrix product of two rank-3 tensors with equal batch size.
    pub fn bmm(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        self.require_rank("bmm", 3)?;
        rhs.require_rank("bmm", 3)?;
        let (bsz, m, k) = (self.shape[0], self.shape[1], self.shape[2]);
        let (bsz2, k2, n) = (rhs.shape[0], rhs.shape[1], rhs.shape[2]);
        if bsz != bsz2 || k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "bmm",
                details: alloc::format!("incompatible shapes {:?} and {:?}", self.shape, rhs.shape),
            });
        }
        let mut out = Vec::with_capacity(bsz * m * n);
        for s in 0..bsz {
            out.extend(mm(
                &self.data[s * m * k..(s + 1) * m * k],
                &rhs.data[s * k * n..(s + 1) * k * n],
                m,
                k,
                n,
            ));
        }
        let (a, b) = (self.data_rc(), rhs.data_rc());
        let mut eb = EdgeBuilder::new("bmm");
        {
            let b = Rc::clone(&b);
            eb.input(self, move |g| {
                let mut ga = Vec::with_capacity(bsz * m * k);
                for s in 0..bsz {
                    ga.extend(mm_nt(
                        &g[s * m * n..(s + 1) * m * n],
                        &b[s * k * n..(s + 1) * k * n],
                        m,
                        n,
                        k,
                    ));
                }
                ga
            })?;
        }
        {
            let a = Rc::clone(&a);
            eb.input(rhs, move |g| {
                let mut gb = Vec::with_capacity(bsz * k * n);
                for s in 0..bsz {
                    gb.extend(mm_tn(
                        &a[s * m * k..(s + 1) * m * k],
                        &g[s * m * n..(s + 1) * m * n],
                        m,
                        k,
                        n,
                    ));
                }
                gb
            })?;
        }
        eb.finish(vec![bsz, m, n], Rc::new(out))
    }

    fn require_same_shape(&self, rhs: &Tensor, op: &'static str) -> Result<(), TensorError> {
        if self.shape == rhs.shape {
            Ok(())
        } else {
            Err(TensorError::ShapeMismatch {
                op,
                details: alloc::format!("{:?} vs {:?}", self.shape, rhs.shape),
            })
        }
    }

    /// Element-wise sum of two same-shape tensors.
    pub fn add(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        self.require_same_shape(rhs, "add")?;
        let out: Vec<f64> = self
            .data
            .iter()
            .zip(rhs.data.iter())
            .map(|(a, b)| a + b)
            .collect();
        let mut eb = EdgeBuilder::new("add");
        eb.input(self, |g| g.to_vec())?;
        eb.input(rhs, |g| g.to_vec())?;
        eb.finish(self.shape.clone(), Rc::new(out))
    }

    /// Element-wise difference of two same-shape tensors.
    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        self.require_same_shape(rhs, "sub")?;
        let out: Vec<f64> = self
            .data
            .iter()
            .zip(rhs.data.iter())
            .map(|(a, b)| a - b)
            .collect();
        let mut eb = EdgeBuilder::new("sub");
        eb.input(self, |g| g.to_vec())?;
        eb.input(rhs, |g| g.iter().map(|v| -v).collect())?;
        eb.finish(self.shape.clone(), Rc::new(out))
    }

    /// Element-wise (Hadamard) product of two same-shape tensors.
    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        self.require_same_shape(rhs, "mul")?;
        let out: Vec<f64> = self
            .data
            .iter()
            .zip(rhs.data.iter())
            .map(|(a, b)| a * b)
            .collect();
        let (a, b) = (self.data_rc(), rhs.data_rc());
        let mut eb = EdgeBuilder::new("mul");
        {
            let b = Rc::clone(&b);
            eb.input(self, move |g| {
                g.iter().zip(b.iter()).map(|(g, b)| g * b).collect()
            })?;
        }
        {
            let a = Rc::clone(&a);
            eb.input(rhs, move |g| {
                g.iter().zip(a.iter()).map(|(g, a)| g * a).collect()
            })?;
        }
        eb.finish(self.shape.clone(), Rc::new(out))
    }

    /// Multiplies every element by a finite constant.
    pub fn scale(&self, c: f64) -> Result<Tensor, TensorError> {
        if !c.is_finite() {
            return Err(TensorError::InvalidValue {
                op: "scale",
                details: alloc::format!("factor {c} is not finite"),
            });
        }
        let out: Vec<f64> = self.data.iter().map(|v| v * c).collect();
        let mut eb = EdgeBuilder::new("scale");
        eb.input(self, move |g| g.iter().map(|v| v * c).collect())?;
        eb.finish(self.shape.clone(), Rc::new(out))
    }

    /// Adds a rank-1 bias over the last axis, broadcast across leading axes.
    pub fn add_bias(&self, bias: &Tensor) -> Result<Tensor, TensorError> {
        bias.require_rank("add_bias", 1)?;
        let n = *self.shape.last().ok_or_else(|| TensorError::ShapeMismatch {
            op: "add_bias",
            details: "input must have rank >= 1".to_string(),
        })?;
        if bias.shape[0] != n {
            return Err(TensorError::ShapeMismatch {
                op: "add_bias",
                details: alloc::format!(
                    "last axis {} vs bias length {}",
                    n,
                    bias.shape[0]
                ),
            });
        }
        let rows = self.numel() / n;
        let mut out = Vec::with_capacity(self.numel());
        for r in 0..rows {
            for j in 0..n {
                out.push(self.data[r * n + j] + bias.data[j]);
            }
        }
        let mut eb = EdgeBuilder::new("add_bias");
        eb.input(self, |g| g.to_vec())?;
        eb.input(bias, move |g| {
            let mut gb = vec![0.0; n];
            for r in 0..rows {
                for j in 0..n {
                    gb[j] += g[r * n + j];
                }
            }
            gb
        })?;
        eb.finish(self.shape.clone(), Rc::new(out))
    }

    /// Rectified linear unit.
    pub fn relu(&self) -> Result<Tensor, TensorError> {
        let out: Vec<f64> = self.data.iter().map(|v| v.max(0.0)).collect();
        let x = self.data_rc();
        let mut eb = EdgeBuilder::new("relu");
        eb.input(self, move |g| {
            g.iter()
                .zip(x.iter())
                .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                .collect()
        })?;
        eb.finish(self.shape.clone(), Rc::new(out))
    }

    /// Element-wise logistic function.
    pub fn sigmoid(&self) -> Result<Tensor, TensorError> {
        let out: Vec<f64> = self.data.iter().map(|v| sigmoid_scalar(*v)).collect();
        let out_rc = Rc::new(out);
        let y = Rc::clone(&out_rc);
        let mut eb = EdgeBuilder::new("sigmoid");
        eb.input(self, move |g| {
            g.iter()
                .zip(y.iter())
                .map(|(g, y)| g * y * (1.0 - y))
                .collect()
        })?;
        eb.finish(self.shape.clone(), out_rc)
    }

    /// Row-wise softmax of a rank-2 tensor, numerically stabilized by the
    /// row maximum.
    pub fn softmax_rows(&self) -> Result<Tensor, TensorError> {
        self.require_rank("softmax_rows", 2)?;
        let (m, n) = (self.shape[0], self.shape[1]);
        if n == 0 {
            return Err(TensorError::ShapeMismatch {
                op: "softmax_rows",
                details: "rows must be non-empty".to_string(),
            });
        }
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            let row = &self.data[r * n..(r + 1) * n];
            let mx = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let mut sum = 0.0;
            let start = out.len();
            for &v in row {
                let e = libm::exp(v - mx);
                out.push(e);
                sum += e;
            }
            for v in &mut out[start..] {
                *v /= sum;
            }
        }
        let out_rc = Rc::new(out);
        let y = Rc::clone(&out_rc);
        let mut eb = EdgeBuilder::new("softmax_rows");
        eb.input(self, move |g| {
            let mut gx = vec![0.0; m * n];
            for r in 0..m {
                let y_row = &y[r * n..(r + 1) * n];
                let g_row = &g[r * n..(r + 1) * n];
                let dot: f64 = y_row.iter().zip(g_row.iter()).map(|(y, g)| y * g).sum();
                for j in 0..n {
                    gx[r * n + j] = y_row[j] * (g_row[j] - dot);
                }
            }
            gx
        })?;
        eb.finish(vec![m, n], out_rc)
    }

    /// Normalizes each row of a rank-2 tensor of non-negative values to sum
    /// to one. A row summing to zero is a degenerate-normalization error.
    pub fn div_rowsum(&self) -> Result<Tensor, TensorError> {
        self.require_rank("div_rowsum", 2)?;
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut sums = Vec::with_capacity(m);
        for r in 0..m {
            let s: f64 = self.data[r * n..(r + 1) * n].iter().sum();
            if s <= 0.0 {
                return Err(TensorError::DegenerateRow {
                    op: "div_rowsum",
                    row: r,
                });
            }
            sums.push(s);
        }
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            for j in 0..n {
                out.push(self.data[r * n + j] / sums[r]);
            }
        }
        let out_rc = Rc::new(out);
        let y = Rc::clone(&out_rc);
        let sums = Rc::new(sums);
        let mut eb = EdgeBuilder::new("div_rowsum");
        eb.input(self, move |g| {
            let mut gx = vec![0.0; m * n];
            for r in 0..m {
                let y_row = &y[r * n..(r + 1) * n];
                let g_row = &g[r * n..(r + 1) * n];
                let dot: f64 = y_row.iter().zip(g_row.iter()).map(|(y, g)| y * g).sum();
                for j in 0..n {
                    gx[r * n + j] = (g_row[j] - dot) / sums[r];
                }
            }
            gx
        })?;
        eb.finish(vec![m, n], out_rc)
    }

    /// Replaces entries with magnitude below `threshold` by exact zero. Used
    /// after masked softmax so masked attention weights are `0.0`, not
    /// denormal residue.
    pub fn zero_small(&self, threshold: f64) -> Result<Tensor, TensorError> {
        if !(threshold.is_finite() && threshold >= 0.0) {
            return Err(TensorError::InvalidValue {
                op: "zero_small",
                details: alloc::format!("threshold {threshold} must be finite and >= 0"),
            });
        }
        let out: Vec<f64> = self
            .data
            .iter()
            .map(|&v| if v.abs() < threshold { 0.0 } else { v })
            .collect();
        let x = self.data_rc();
        let mut eb = EdgeBuilder::new("zero_small");
        eb.input(self, move |g| {
            g.iter()
                .zip(x.iter())
                .map(|(g, x)| if x.abs() < threshold { 0.0 } else { *g })
                .collect()
        })?;
        eb.finish(self.shape.clone(), Rc::new(out))
    }

    /// Layer normalization over the last axis of a rank-2 tensor with learned
    /// per-feature gain and shift. Uses the population variance (divides by
    /// `n`) plus `eps` under the square root.
    pub fn layer_norm(
        &self,
        gain: &Tensor,
        shift: &Tensor,
        eps: f64,
    ) -> Result<Tensor, TensorError> {
        self.require_rank("layer_norm", 2)?;
        gain.require_rank("layer_norm", 1)?;
        shift.require_rank("layer_norm", 1)?;
        let (m, n) = (self.shape[0], self.shape[1]);
        if gain.shape[0] != n || shift.shape[0] != n {
            return Err(TensorError::ShapeMismatch {
                op: "layer_norm",
                details: alloc::format!(
                    "features {}, gain {}, shift {}",
                    n,
                    gain.shape[0],
                    shift.shape[0]
                ),
            });
        }
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(TensorError::InvalidValue {
                op: "layer_norm",
                details: alloc::format!("eps {eps} must be finite and >= 0"),
            });
        }
        let nf = n as f64;
        let mut xhat = Vec::with_capacity(m * n);
        let mut inv = Vec::with_capacity(m);
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            let row = &self.data[r * n..(r + 1) * n];
            let mean: f64 = row.iter().sum::<f64>() / nf;
            let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
            let iv = 1.0 / libm::sqrt(var + eps);
            inv.push(iv);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mean) * iv;
                xhat.push(h);
                out.push(gain.data[j] * h + shift.data[j]);
            }
        }
        let xhat = Rc::new(xhat);
        let inv = Rc::new(inv);
        let gain_data = gain.data_rc();
        let mut eb = EdgeBuilder::new("layer_norm");
        {
            let xhat = Rc::clone(&xhat);
            let inv = Rc::clone(&inv);
            let gain_data = Rc::clone(&gain_data);
            eb.input(self, move |g| {
                let mut gx = vec![0.0; m * n];
                for r in 0..m {
                    let h_row = &xhat[r * n..(r + 1) * n];
                    let g_row = &g[r * n..(r + 1) * n];
                    let mut mean_hg = 0.0;
                    let mut mean_hg_h = 0.0;
                    for j in 0..n {
                        let hg = g_row[j] * gain_data[j];
                        mean_hg += hg;
                        mean_hg_h += hg * h_row[j];
                    }
                    mean_hg /= nf;
                    mean_hg_h /= nf;
                    for j in 0..n {
                        let hg = g_row[j] * gain_data[j];
                        gx[r * n + j] = inv[r] * (hg - mean_hg - h_row[j] * mean_hg_h);
                    }
                }
                gx
            })?;
        }
        {
            let xhat = Rc::clone(&xhat);
            eb.input(gain, move |g| {
                let mut gg = vec![0.0; n];
                for r in 0..m {
                    for j in 0..n {
                        gg[j] += g[r * n + j] * xhat[r * n + j];
                    }
                }
                gg
            })?;
        }
        eb.input(shift, move |g| {
            let mut gs = vec![0.0; n];
            for r in 0..m {
                for j in 0..n {
                    gs[j] += g[r * n + j];
                }
            }
            gs
        })?;
        eb.finish(vec![m, n], Rc::new(out))
    }

    /// Concatenates rank-2 tensors along the column axis.
    pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::ShapeMismatch {
                op: "concat_cols",
                details: "at least one input required".to_string(),
            });
        }
        for p in parts {
            p.require_rank("concat_cols", 2)?;
        }
        let m = parts[0].shape[0];
        if parts.iter().any(|p| p.shape[0] != m) {
            return Err(TensorError::ShapeMismatch {
                op: "concat_cols",
                details: "all inputs must have the same number of rows".to_string(),
            });
        }
        let widths: Vec<usize> = parts.iter().map(|p| p.shape[1]).collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for r in 0..m {
            for (p, &w) in parts.iter().zip(widths.iter()) {
                out.extend_from_slice(&p.data[r * w..(r + 1) * w]);
            }
        }
        let mut eb = EdgeBuilder::new("concat_cols");
        let mut offset = 0usize;
        for (p, &w) in parts.iter().zip(widths.iter()) {
            let off = offset;
            eb.input(p, move |g| {
                let mut gp = Vec::with_capacity(m * w);
                for r in 0..m {
                    gp.extend_from_slice(&g[r * total + off..r * total + off + w]);
                }
                gp
            })?;
            offset += w;
        }
        eb.finish(vec![m, total], Rc::new(out))
    }

    /// Selects rows of a rank-2 tensor by index; repeated indices are allowed
    /// and their gradients accumulate.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Tensor, TensorError> {
        self.require_rank("gather_rows", 2)?;
        let (m, n) = (self.shape[0], self.shape[1]);
        for &i in indices {
            if i >= m {
                return Err(TensorError::IndexOutOfBounds {
                    op: "gather_rows",
                    index: i,
                    bound: m,
                });
            }
        }
        let mut out = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            out.extend_from_slice(&self.data[i * n..(i + 1) * n]);
        }
        let idx: Vec<usize> = indices.to_vec();
        let mut eb = EdgeBuilder::new("gather_rows");
        eb.input(self, move |g| {
            let mut gx = vec![0.0; m * n];
            for (r, &i) in idx.iter().enumerate() {
                let dst = &mut gx[i * n..(i + 1) * n];
                let src = &g[r * n..(r + 1) * n];
                for (d, s) in dst.iter_mut().zip(src.iter()) {
                    *d += s;
                }
            }
            gx
        })?;
        eb.finish(vec![indices.len(), n], Rc::new(out))
    }

    /// Reorders axes; `axes` must be a permutation of `0..rank`.
    pub fn permute(&self, axes: &[usize]) -> Result<Tensor, TensorError> {
        let rank = self.rank();
        if axes.len() != rank {
            return Err(TensorError::ShapeMismatch {
                op: "permute",
                details: alloc::format!("{} axes given for rank {}", axes.len(), rank),
            });
        }
        let mut seen = vec![false; rank];
        for &a in axes {
            if a >= rank || seen[a] {
                return Err(TensorError::InvalidValue {
                    op: "permute",
                    details: alloc::format!("axes {axes:?} is not a permutation of 0..{rank}"),
                });
            }
            seen[a] = true;
        }
        let new_shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let out = permute_raw(&self.data, &self.shape, axes);
        let axes_owned: Vec<usize> = axes.to_vec();
        let new_shape_c = new_shape.clone();
        let mut eb = EdgeBuilder::new("permute");
        eb.input(self, move |g| {
            let mut inverse = vec![0usize; axes_owned.len()];
            for (d, &a) in axes_owned.iter().enumerate() {
                inverse[a] = d;
            }
            permute_raw(g, &new_shape_c, &inverse)
        })?;
        eb.finish(new_shape, Rc::new(out))
    }

    /// Swaps the axes of a rank-2 tensor.
    pub fn transpose(&self) -> Result<Tensor, TensorError> {
        self.require_rank("transpose", 2)?;
        self.permute(&[1, 0])
    }

    /// Reinterprets the buffer under a new shape with the same element count.
    pub fn reshape(&self, new_shape: &[usize]) -> Result<Tensor, TensorError> {
        if numel_of(new_shape) != self.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                details: alloc::format!(
                    "cannot reshape {:?} ({} elements) to {:?} ({} elements)",
                    self.shape,
                    self.numel(),
                    new_shape,
                    numel_of(new_shape)
                ),
            });
        }
        let mut eb = EdgeBuilder::new("reshape");
        eb.input(self, |g| g.to_vec())?;
        eb.finish(new_shape.to_vec(), self.data_rc())
    }

    /// Sum of all elements as a rank-0 tensor.
    pub fn sum_all(&self) -> Result<Tensor, TensorError> {
        let total: f64 = self.data.iter().sum();
        let numel = self.numel();
        let mut eb = EdgeBuilder::new("sum_all");
        eb.input(self, move |g| vec![g[0]; numel])?;
        eb.finish(Vec::new(), Rc::new(vec![total]))
    }

    /// Mean of all elements as a rank-0 tensor.
    pub fn mean_all(&self) -> Result<Tensor, TensorError> {
        if self.numel() == 0 {
            return Err(TensorError::ShapeMismatch {
                op: "mean_all",
                details: "cannot average an empty tensor".to_string(),
            });
        }
        let numel = self.numel();
        let total: f64 = self.data.iter().sum::<f64>() / numel as f64;
        let mut eb = EdgeBuilder::new("mean_all");
        eb.input(self, move |g| vec![g[0] / numel as f64; numel])?;
        eb.finish(Vec::new(), Rc::new(vec![total]))
    }

    /// Mean softmax cross-entropy of rank-2 logits `[m, c]` against one class
    /// index per row, fused for numerical stability.
    pub fn softmax_cross_entropy(&self, targets: &[usize]) -> Result<Tensor, TensorError> {
        self.require_rank("softmax_cross_entropy", 2)?;
        let (m, c) = (self.shape[0], self.shape[1]);
        if targets.len() != m {
            return Err(TensorError::ShapeMismatch {
                op: "softmax_cross_entropy",
                details: alloc::format!("{m} rows but {} targets", targets.len()),
            });
        }
        if m == 0 {
            return Err(TensorError::ShapeMismatch {
                op: "softmax_cross_entropy",
                details: "at least one row required".to_string(),
            });
        }
        for &t in targets {
            if t >= c {
                return Err(TensorError::IndexOutOfBounds {
                    op: "softmax_cross_entropy",
                    index: t,
                    bound: c,
                });
            }
        }
        let mut probs = Vec::with_capacity(m * c);
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = &self.data[r * c..(r + 1) * c];
            let mx = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let mut sum = 0.0;
            let start = probs.len();
            for &v in row {
                let e = libm::exp(v - mx);
                probs.push(e);
                sum += e;
            }
            for v in &mut probs[start..] {
                *v /= sum;
            }
            total += mx + libm::log(sum) - row[t];
        }
        total /= m as f64;
        let probs = Rc::new(probs);
        let targets_owned: Vec<usize> = targets.to_vec();
        let mut eb = EdgeBuilder::new("softmax_cross_entropy");
        eb.input(self, move |g| {
            let scale = g[0] / m as f64;
            let mut gx = Vec::with_capacity(m * c);
            for (r, &t) in targets_owned.iter().enumerate() {
                for j in 0..c {
                    let indicator = if j == t { 1.0 } else { 0.0 };
                    gx.push((probs[r * c + j] - indicator) * scale);
                }
            }
            gx
        })?;
        eb.finish(Vec::new(), Rc::new(vec![total]))
    }

    /// Mean element-wise binary cross-entropy between logits and targets in
    /// `[0, 1]`, fused in the numerically stable form
    /// `max(l, 0) − l·y + ln(1 + e^{−|l|})`. Targets are treated as
    /// constants.
    pub fn sigmoid_bce(&self, targets: &Tensor) -> Result<Tensor, TensorError> {
        self.require_same_shape(targets, "sigmoid_bce")?;
        debug_assert!(
            targets.trace.is_none(),
            "sigmoid_bce targets are labels and must not require gradients"
        );
        if self.numel() == 0 {
            return Err(TensorError::ShapeMismatch {
                op: "sigmoid_bce",
                details: "at least one element required".to_string(),
            });
        }
        for &y in targets.data.iter() {
            if !(0.0..=1.0).contains(&y) {
                return Err(TensorError::InvalidValue {
                    op: "sigmoid_bce",
                    details: alloc::format!("target {y} outside [0, 1]"),
                });
            }
        }
        let numel = self.numel();
        let mut total = 0.0;
        for (&l, &y) in self.data.iter().zip(targets.data.iter()) {
            total += l.max(0.0) - l * y + libm::log1p(libm::exp(-l.abs()));
        }
        total /= numel as f64;
        let logits = self.data_rc();
        let y = targets.data_rc();
        let mut eb = EdgeBuilder::new("sigmoid_bce");
        eb.input(self, move |g| {
            let scale = g[0] / numel as f64;
            logits
                .iter()
                .zip(y.iter())
                .map(|(&l, &y)| (sigmoid_scalar(l) - y) * scale)
                .collect()
        })?;
        eb.finish(Vec::new(), Rc::new(vec![total]))
    }
}
