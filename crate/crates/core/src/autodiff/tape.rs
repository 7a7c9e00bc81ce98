use super::{AdError, Result};
use crate::numcore::{gemm_slices, Matrix, View};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Supervision for [`Tape::cross_entropy`]. Rows whose mask entry is false do
/// not contribute; the loss is the mean over contributing rows.
#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Hard { labels: Vec<usize>, mask: Vec<bool> },
    /// Each row is a probability distribution over classes.
    Soft { probs: Matrix, mask: Vec<bool> },
}

impl Target {
    fn mask(&self) -> &[bool] {
        match self {
            Target::Hard { mask, .. } | Target::Soft { mask, .. } => mask,
        }
    }
}

enum Op {
    Param,
    Constant,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddTiled(Var, Var),
    Scale(Var, f64),
    Hadamard(Var, Var),
    Relu(Var),
    Sum(Var),
    Softmax(Var),
    RmsNorm { x: Var, gain: Var, inv_rms: Vec<f64> },
    Gather { table: Var, ids: Vec<usize> },
    CausalMask(Var, usize),
    BlockMatMulNt { a: Var, b: Var, block: usize },
    BlockMatMul { p: Var, v: Var, block: usize },
    CrossEntropy { logits: Var, target: Target, probs: Matrix, count: usize },
    Mse { x: Var, target: Matrix },
}

struct Node {
    op: Op,
    value: Matrix,
}

/// Append-only record of a computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
    backpropagated: bool,
}

fn shape_err(op: &'static str, a: &Matrix, b: &Matrix) -> AdError {
    AdError::Shape {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

fn softmax_in_place(m: &mut Matrix) {
    let cols = m.cols();
    for row in m.data_mut().chunks_mut(cols) {
        let top = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - top).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Matrix) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Trainable leaf: receives a gradient from [`Tape::backward`].
    pub fn param(&mut self, m: Matrix) -> Var {
        self.push(Op::Param, m)
    }

    /// Leaf that is never differentiated.
    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(Op::Constant, m)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols() != y.rows() {
            return Err(shape_err("matmul", x, y));
        }
        let out = x.matmul(y)?;
        Ok(self.push(Op::MatMul(a, b), out))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols() != y.cols() {
            return Err(shape_err("matmul_nt", x, y));
        }
        let out = x.matmul_nt(y)?;
        Ok(self.push(Op::MatMulNt(a, b), out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err("add", x, y));
        }
        let out = x.add(y)?;
        Ok(self.push(Op::Add(a, b), out))
    }

    /// Adds `rows` (p × c) to every consecutive block of p rows of `x`;
    /// used for positional embeddings over a batch of sequences.
    pub fn add_tiled(&mut self, x: Var, rows: Var) -> Result<Var> {
        let (a, r) = (self.value(x), self.value(rows));
        if a.cols() != r.cols() || a.rows() % r.rows() != 0 {
            return Err(shape_err("add_tiled", a, r));
        }
        let mut out = a.clone();
        let width = r.len();
        for chunk in out.data_mut().chunks_mut(width) {
            for (o, p) in chunk.iter_mut().zip(r.data()) {
                *o += p;
            }
        }
        Ok(self.push(Op::AddTiled(x, rows), out))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.value(x).scale(factor);
        self.push(Op::Scale(x, factor), out)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err("hadamard", x, y));
        }
        let out = x.hadamard(y)?;
        Ok(self.push(Op::Hadamard(a, b), out))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push(Op::Relu(x), out)
    }

    /// Sum of all entries as a 1×1 node.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Op::Sum(x), Matrix::filled(1, 1, s))
    }

    /// Row-wise softmax; `-∞` entries receive zero probability.
    pub fn row_softmax(&mut self, x: Var) -> Result<Var> {
        let mut out = self.value(x).clone();
        if out.data().iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(AdError::InvalidArgument("row_softmax: NaN or +inf input".into()));
        }
        softmax_in_place(&mut out);
        if !out.is_finite() {
            return Err(AdError::InvalidArgument("row_softmax: a row is entirely masked".into()));
        }
        Ok(self.push(Op::Softmax(x), out))
    }

    /// `x / rms(x) ⊙ gain`, row by row, with `gain` a 1 × c row.
    pub fn rms_norm(&mut self, x: Var, gain: Var, eps: f64) -> Result<Var> {
        let (a, g) = (self.value(x), self.value(gain));
        if g.rows() != 1 || g.cols() != a.cols() {
            return Err(shape_err("rms_norm", a, g));
        }
        let c = a.cols();
        let mut out = a.clone();
        let mut inv_rms = Vec::with_capacity(a.rows());
        for row in out.data_mut().chunks_mut(c) {
            let ms = row.iter().map(|v| v * v).sum::<f64>() / c as f64;
            let inv = 1.0 / (ms + eps).sqrt();
            for (v, gv) in row.iter_mut().zip(g.data()) {
                *v *= inv * gv;
            }
            inv_rms.push(inv);
        }
        Ok(self.push(Op::RmsNorm { x, gain, inv_rms }, out))
    }

    /// Rows of `table` selected by `ids`.
    pub fn embedding_gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let mut out = Matrix::zeros(ids.len(), t.cols());
        for (r, &id) in ids.iter().enumerate() {
            if id >= t.rows() {
                return Err(AdError::IndexOutOfRange {
                    op: "embedding_gather",
                    index: id,
                    bound: t.rows(),
                });
            }
            out.row_mut(r).copy_from_slice(t.row(id));
        }
        Ok(self.push(Op::Gather { table, ids: ids.to_vec() }, out))
    }

    /// Sets entry `(i, j)` to `-∞` whenever `j > i mod seq`; `x` holds one
    /// `seq × seq` score block per sequence, stacked vertically.
    pub fn causal_mask(&mut self, x: Var, seq: usize) -> Result<Var> {
        let a = self.value(x);
        if seq == 0 || a.cols() != seq || a.rows() % seq != 0 {
            return Err(AdError::Shape {
                op: "causal_mask",
                left: a.shape(),
                right: (seq, seq),
            });
        }
        let mut out = a.clone();
        for r in 0..out.rows() {
            let i = r % seq;
            for v in &mut out.row_mut(r)[i + 1..] {
                *v = f64::NEG_INFINITY;
            }
        }
        Ok(self.push(Op::CausalMask(x, seq), out))
    }

    /// Per-block `A_b · B_bᵀ` where both operands stack blocks of `block` rows.
    pub fn block_matmul_nt(&mut self, a: Var, b: Var, block: usize) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if block == 0 || x.shape() != y.shape() || x.rows() % block != 0 {
            return Err(shape_err("block_matmul_nt", x, y));
        }
        let k = x.cols();
        let mut out = Matrix::zeros(x.rows(), block);
        let vin = View::dense(block, k);
        for s in 0..x.rows() / block {
            let (lo, hi) = (s * block * k, (s + 1) * block * k);
            gemm_slices(
                &x.data()[lo..hi],
                vin,
                &y.data()[lo..hi],
                vin.t(),
                0.0,
                &mut out.data_mut()[s * block * block..(s + 1) * block * block],
                View::dense(block, block),
            );
        }
        Ok(self.push(Op::BlockMatMulNt { a, b, block }, out))
    }

    /// Per-block `P_b · V_b` with `P` stacking `block × block` blocks and `V`
    /// stacking `block × c` blocks.
    pub fn block_matmul(&mut self, p: Var, v: Var, block: usize) -> Result<Var> {
        let (x, y) = (self.value(p), self.value(v));
        if block == 0 || x.cols() != block || x.rows() != y.rows() || x.rows() % block != 0 {
            return Err(shape_err("block_matmul", x, y));
        }
        let c = y.cols();
        let mut out = Matrix::zeros(y.rows(), c);
        for s in 0..x.rows() / block {
            gemm_slices(
                &x.data()[s * block * block..(s + 1) * block * block],
                View::dense(block, block),
                &y.data()[s * block * c..(s + 1) * block * c],
                View::dense(block, c),
                0.0,
                &mut out.data_mut()[s * block * c..(s + 1) * block * c],
                View::dense(block, c),
            );
        }
        Ok(self.push(Op::BlockMatMul { p, v, block }, out))
    }

    /// Mean cross-entropy of `softmax(logits)` against the target over the
    /// unmasked rows.
    pub fn cross_entropy(&mut self, logits: Var, target: Target) -> Result<Var> {
        let z = self.value(logits);
        let (n, classes) = z.shape();
        let mask = target.mask();
        if mask.len() != n {
            return Err(AdError::Shape {
                op: "cross_entropy",
                left: z.shape(),
                right: (mask.len(), 1),
            });
        }
        match &target {
            Target::Hard { labels, .. } => {
                if labels.len() != n {
                    return Err(AdError::Shape {
                        op: "cross_entropy",
                        left: z.shape(),
                        right: (labels.len(), 1),
                    });
                }
                for (&l, &m) in labels.iter().zip(mask) {
                    if m && l >= classes {
                        return Err(AdError::IndexOutOfRange {
                            op: "cross_entropy",
                            index: l,
                            bound: classes,
                        });
                    }
                }
            }
            Target::Soft { probs, .. } => {
                if probs.shape() != z.shape() {
                    return Err(shape_err("cross_entropy", z, probs));
                }
            }
        }
        let count = mask.iter().filter(|m| **m).count();
        if count == 0 {
            return Err(AdError::InvalidArgument("cross_entropy: no scored rows".into()));
        }
        let mut probs = z.clone();
        softmax_in_place(&mut probs);
        let mut total = 0.0;
        for r in 0..n {
            if !mask[r] {
                continue;
            }
            let row = z.row(r);
            let top = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = top + row.iter().map(|v| (v - top).exp()).sum::<f64>().ln();
            total += match &target {
                Target::Hard { labels, .. } => lse - row[labels[r]],
                Target::Soft { probs: t, .. } => {
                    t.row(r).iter().zip(row).map(|(tv, zv)| if *tv == 0.0 { 0.0 } else { tv * (lse - zv) }).sum()
                }
            };
        }
        let loss = total / count as f64;
        Ok(self.push(
            Op::CrossEntropy {
                logits,
                target,
                probs,
                count,
            },
            Matrix::filled(1, 1, loss),
        ))
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, x: Var, target: Matrix) -> Result<Var> {
        let a = self.value(x);
        if a.shape() != target.shape() {
            return Err(shape_err("mse", a, &target));
        }
        let loss = a.data().iter().zip(target.data()).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / a.len() as f64;
        Ok(self.push(Op::Mse { x, target }, Matrix::filled(1, 1, loss)))
    }

    /// Propagates `d loss / d node` to every node. Runs once per tape until
    /// [`Tape::reset_grads`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backpropagated {
            return Err(AdError::AlreadyBackpropagated);
        }
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(AdError::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.pull_back(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        self.grads = grads;
        self.backpropagated = true;
        Ok(())
    }

    /// Clears all accumulated gradients so `backward` may run again.
    pub fn reset_grads(&mut self) {
        self.grads.clear();
        self.backpropagated = false;
    }

    /// Gradient of the last backward loss with respect to `v`; zero when `v`
    /// does not influence the loss.
    pub fn grad(&self, v: Var) -> Result<Matrix> {
        if !self.backpropagated {
            return Err(AdError::NoGradients);
        }
        Ok(match self.grads.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.value(v).shape();
                Matrix::zeros(r, c)
            }
        })
    }

    fn pull_back(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Param | Op::Constant => {}
            Op::MatMul(a, b) => {
                let ga = g.matmul_nt(val(*b))?;
                let gb = val(*a).matmul_tn(g)?;
                accumulate(grads, *a, ga);
                accumulate(grads, *b, gb);
            }
            Op::MatMulNt(a, b) => {
                let ga = g.matmul(val(*b))?;
                let gb = g.matmul_tn(val(*a))?;
                accumulate(grads, *a, ga);
                accumulate(grads, *b, gb);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::AddTiled(x, rows) => {
                let r = val(*rows);
                let mut gr = Matrix::zeros(r.rows(), r.cols());
                for chunk in g.data().chunks(r.len()) {
                    for (o, v) in gr.data_mut().iter_mut().zip(chunk) {
                        *o += v;
                    }
                }
                accumulate(grads, *x, g.clone());
                accumulate(grads, *rows, gr);
            }
            Op::Scale(x, f) => accumulate(grads, *x, g.scale(*f)),
            Op::Hadamard(a, b) => {
                let ga = g.hadamard(val(*b))?;
                let gb = g.hadamard(val(*a))?;
                accumulate(grads, *a, ga);
                accumulate(grads, *b, gb);
            }
            Op::Relu(x) => {
                let gx = g.zip_map(val(*x), "relu", |gv, xv| if xv > 0.0 { gv } else { 0.0 })?;
                accumulate(grads, *x, gx);
            }
            Op::Sum(x) => {
                let (r, c) = val(*x).shape();
                accumulate(grads, *x, Matrix::filled(r, c, g.get(0, 0)));
            }
            Op::Softmax(x) => {
                let y = &node.value;
                let c = y.cols();
                let mut gx = Matrix::zeros(y.rows(), c);
                for ((o, yr), gr) in gx.data_mut().chunks_mut(c).zip(y.data().chunks(c)).zip(g.data().chunks(c)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((ov, yv), gv) in o.iter_mut().zip(yr).zip(gr) {
                        *ov = yv * (gv - dot);
                    }
                }
                accumulate(grads, *x, gx);
            }
            Op::RmsNorm { x, gain, inv_rms } => {
                let (a, gn) = (val(*x), val(*gain));
                let c = a.cols();
                let mut gx = Matrix::zeros(a.rows(), c);
                let mut gg = Matrix::zeros(1, c);
                for r in 0..a.rows() {
                    let inv = inv_rms[r];
                    let (xr, gr) = (a.row(r), g.row(r));
                    let mut dot = 0.0;
                    for k in 0..c {
                        let xh = xr[k] * inv;
                        let dxh = gr[k] * gn.data()[k];
                        gg.data_mut()[k] += gr[k] * xh;
                        dot += dxh * xh;
                    }
                    dot /= c as f64;
                    let out = gx.row_mut(r);
                    for k in 0..c {
                        out[k] = inv * (gr[k] * gn.data()[k] - xr[k] * inv * dot);
                    }
                }
                accumulate(grads, *x, gx);
                accumulate(grads, *gain, gg);
            }
            Op::Gather { table, ids } => {
                let t = val(*table);
                let mut gt = Matrix::zeros(t.rows(), t.cols());
                for (r, &id) in ids.iter().enumerate() {
                    for (o, v) in gt.row_mut(id).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                accumulate(grads, *table, gt);
            }
            Op::CausalMask(x, seq) => {
                let mut gx = g.clone();
                for r in 0..gx.rows() {
                    let i = r % seq;
                    for v in &mut gx.row_mut(r)[i + 1..] {
                        *v = 0.0;
                    }
                }
                accumulate(grads, *x, gx);
            }
            Op::BlockMatMulNt { a, b, block } => {
                let (x, y) = (val(*a), val(*b));
                let k = x.cols();
                let mut ga = Matrix::zeros(x.rows(), k);
                let mut gb = Matrix::zeros(y.rows(), k);
                let vg = View::dense(*block, *block);
                let vin = View::dense(*block, k);
                for s in 0..x.rows() / block {
                    let (lo, hi) = (s * block * k, (s + 1) * block * k);
                    let gs = &g.data()[s * block * block..(s + 1) * block * block];
                    // dA = G·B, dB = Gᵀ·A
                    gemm_slices(gs, vg, &y.data()[lo..hi], vin, 0.0, &mut ga.data_mut()[lo..hi], vin);
                    gemm_slices(gs, vg.t(), &x.data()[lo..hi], vin, 0.0, &mut gb.data_mut()[lo..hi], vin);
                }
                accumulate(grads, *a, ga);
                accumulate(grads, *b, gb);
            }
            Op::BlockMatMul { p, v, block } => {
                let (x, y) = (val(*p), val(*v));
                let c = y.cols();
                let mut gp = Matrix::zeros(x.rows(), *block);
                let mut gv = Matrix::zeros(y.rows(), c);
                let vp = View::dense(*block, *block);
                let vv = View::dense(*block, c);
                for s in 0..x.rows() / block {
                    let (plo, phi) = (s * block * block, (s + 1) * block * block);
                    let (vlo, vhi) = (s * block * c, (s + 1) * block * c);
                    // dP = G·Vᵀ, dV = Pᵀ·G
                    gemm_slices(&g.data()[vlo..vhi], vv, &y.data()[vlo..vhi], vv.t(), 0.0, &mut gp.data_mut()[plo..phi], vp);
                    gemm_slices(&x.data()[plo..phi], vp.t(), &g.data()[vlo..vhi], vv, 0.0, &mut gv.data_mut()[vlo..vhi], vv);
                }
                accumulate(grads, *p, gp);
                accumulate(grads, *v, gv);
            }
            Op::CrossEntropy {
                logits,
                target,
                probs,
                count,
            } => {
                let scale = g.get(0, 0) / *count as f64;
                let mut gz = Matrix::zeros(probs.rows(), probs.cols());
                for r in 0..probs.rows() {
                    if !target.mask()[r] {
                        continue;
                    }
                    let out = gz.row_mut(r);
                    for (o, p) in out.iter_mut().zip(probs.row(r)) {
                        *o = p * scale;
                    }
                    match target {
                        Target::Hard { labels, .. } => out[labels[r]] -= scale,
                        Target::Soft { probs: t, .. } => {
                            for (o, tv) in out.iter_mut().zip(t.row(r)) {
                                *o -= tv * scale;
                            }
                        }
                    }
                }
                accumulate(grads, *logits, gz);
            }
            Op::Mse { x, target } => {
                let a = val(*x);
                let f = 2.0 * g.get(0, 0) / a.len() as f64;
                let gx = a.zip_map(target, "mse", |p, q| f * (p - q))?;
                accumulate(grads, *x, gx);
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, x) in existing.data_mut().iter_mut().zip(g.data()) {
                *e += x;
            }
        }
        slot => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_squared_norm_gradient_is_identity() {
        let x = Matrix::from_rows(&[&[1.0, -2.0], &[0.5, 3.0]]).unwrap();
        let mut t = Tape::new();
        let v = t.param(x.clone());
        let sq = t.hadamard(v, v).unwrap();
        let s = t.sum(sq);
        let loss = t.scale(s, 0.5);
        t.backward(loss).unwrap();
        assert_eq!(t.grad(v).unwrap(), x);
    }

    #[test]
    fn uniform_logits_cost_log_classes() {
        let mut t = Tape::new();
        let z = t.param(Matrix::filled(3, 7, 0.25));
        let ce = t
            .cross_entropy(z, Target::Hard { labels: vec![0, 3, 6], mask: vec![true; 3] })
            .unwrap();
        assert!((t.value(ce).get(0, 0) - 7f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn backward_guards() {
        let mut t = Tape::new();
        let a = t.param(Matrix::filled(2, 2, 1.0));
        let unused = t.param(Matrix::filled(3, 1, 1.0));
        assert_eq!(t.backward(a), Err(AdError::NonScalarLoss((2, 2))));
        let s = t.sum(a);
        assert_eq!(t.grad(a), Err(AdError::NoGradients));
        t.backward(s).unwrap();
        assert_eq!(t.backward(s), Err(AdError::AlreadyBackpropagated));
        assert_eq!(t.grad(unused).unwrap(), Matrix::zeros(3, 1));
        t.reset_grads();
        t.backward(s).unwrap();
        assert_eq!(t.grad(a).unwrap(), Matrix::filled(2, 2, 1.0));
    }

    #[test]
    fn shape_errors_name_the_op() {
        let mut t = Tape::new();
        let a = t.param(Matrix::zeros(2, 3));
        let b = t.param(Matrix::zeros(2, 3));
        let err = t.matmul(a, b).unwrap_err();
        assert_eq!(
            err,
            AdError::Shape {
                op: "matmul",
                left: (2, 3),
                right: (2, 3)
            }
        );
        assert!(err.to_string().contains("matmul"));
        let table = t.param(Matrix::zeros(4, 2));
        assert!(matches!(t.embedding_gather(table, &[4]), Err(AdError::IndexOutOfRange { .. })));
    }

    #[test]
    fn causal_mask_hides_future_positions() {
        let mut t = Tape::new();
        let s = t.constant(Matrix::zeros(6, 3));
        let m = t.causal_mask(s, 3).unwrap();
        let p = t.row_softmax(m).unwrap();
        let p = t.value(p);
        assert_eq!(p.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(p.row(4), &[0.5, 0.5, 0.0]);
        assert!((p.get(5, 2) - 1.0 / 3.0).abs() < 1e-15);
    }
}
