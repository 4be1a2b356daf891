//! Reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Tape`] records one forward computation as a flat list of nodes;
//! [`Tape::backward`] walks it in reverse and accumulates gradients into
//! the [`ParamStore`] blocks referenced by parameter leaves. Values are
//! computed eagerly, so a tape doubles as the inference path: evaluation
//! simply never calls `backward`.

use crate::error::{Error, Result};
use crate::numeric::matrix::Matrix;
use crate::numeric::param::{ParamId, ParamStore};
use crate::numeric::rng::Rng;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    /// Constant input; no gradient tracked.
    Const,
    /// Leaf bound to a parameter block.
    Param(ParamId),
    /// `W (m x n) * x (n x 1)`.
    MatVec { w: Var, x: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    /// Elementwise product.
    Mul { a: Var, b: Var },
    Scale { x: Var, k: f64 },
    Sigmoid { x: Var },
    Tanh { x: Var },
    /// Contiguous rows `[start, start+len)` of a column vector.
    Slice { x: Var, start: usize, len: usize },
    /// Column vectors stacked vertically.
    Concat { parts: Vec<Var> },
    /// Coordinate-wise maximum over same-shaped vectors; ties go to the
    /// first input, making the subgradient deterministic.
    MaxOver { xs: Vec<Var>, argmax: Vec<u32> },
    /// Column vector -> 1x1 scalar.
    LogSumExp { x: Var },
    /// `out[i][j] = col[i] + mat[i][j]`.
    BroadcastAddCol { col: Var, mat: Var },
    /// Per-column logsumexp of an `r x c` matrix, producing a `c x 1` vector.
    ColLogSumExp { mat: Var },
    /// Rows of a column vector picked by index.
    GatherRows { x: Var, idx: Vec<usize> },
    /// Submatrix picked by row and column index lists.
    GatherSub { mat: Var, rows: Vec<usize>, cols: Vec<usize> },
    /// Elementwise sum over same-shaped nodes.
    SumAll { xs: Vec<Var> },
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// One recorded forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Const, false)
    }

    /// Insert a leaf for a parameter block; its gradient is accumulated
    /// into the store on `backward`.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let block = store.block(id);
        let needs = block.trainable;
        self.push(block.value.clone(), Op::Param(id), needs)
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let value = self.value(w).matvec(self.value(x))?;
        let needs = self.needs(w) || self.needs(x);
        Ok(self.push(value, Op::MatVec { w, x }, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add { a, b }, needs))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Sub { a, b }, needs))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Mul { a, b }, needs))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let value = self.value(x).scale(k);
        let needs = self.needs(x);
        self.push(value, Op::Scale { x, k }, needs)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let mut value = self.value(x).clone();
        value.data_mut().iter_mut().for_each(|v| *v = 1.0 / (1.0 + (-*v).exp()));
        let needs = self.needs(x);
        self.push(value, Op::Sigmoid { x }, needs)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let mut value = self.value(x).clone();
        value.data_mut().iter_mut().for_each(|v| *v = v.tanh());
        let needs = self.needs(x);
        self.push(value, Op::Tanh { x }, needs)
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        if !xv.is_col_vector() || start + len > xv.rows() {
            return Err(Error::Dimension(format!(
                "slice [{start}, {}) of {}x{}",
                start + len,
                xv.rows(),
                xv.cols()
            )));
        }
        let value = Matrix::column(&xv.data()[start..start + len]);
        let needs = self.needs(x);
        Ok(self.push(value, Op::Slice { x, start, len }, needs))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Dimension("concat of zero parts".into()));
        }
        let mut data = Vec::new();
        for p in parts {
            let v = self.value(*p);
            if !v.is_col_vector() {
                return Err(Error::Dimension("concat expects column vectors".into()));
            }
            data.extend_from_slice(v.data());
        }
        let needs = parts.iter().any(|p| self.needs(*p));
        Ok(self.push(Matrix::column(&data), Op::Concat { parts: parts.to_vec() }, needs))
    }

    /// Coordinate-wise max over one or more same-shaped vectors.
    pub fn max_over(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(Error::Dimension("max_over of zero inputs".into()));
        }
        let shape = (self.value(xs[0]).rows(), self.value(xs[0]).cols());
        let n = self.value(xs[0]).len();
        let mut best = self.value(xs[0]).data().to_vec();
        let mut argmax = vec![0u32; n];
        for (k, x) in xs.iter().enumerate().skip(1) {
            let xv = self.value(*x);
            if (xv.rows(), xv.cols()) != shape {
                return Err(Error::Dimension("max_over inputs must share a shape".into()));
            }
            for (j, v) in xv.data().iter().enumerate() {
                if *v > best[j] {
                    best[j] = *v;
                    argmax[j] = k as u32;
                }
            }
        }
        let needs = xs.iter().any(|x| self.needs(*x));
        let value = Matrix::from_vec(shape.0, shape.1, best)?;
        Ok(self.push(value, Op::MaxOver { xs: xs.to_vec(), argmax }, needs))
    }

    /// Stable `log sum exp` of a column vector, as a 1x1 node.
    pub fn logsumexp(&mut self, x: Var) -> Result<Var> {
        let lse = crate::numeric::matrix::logsumexp(self.value(x).data())?;
        let needs = self.needs(x);
        Ok(self.push(Matrix::column(&[lse]), Op::LogSumExp { x }, needs))
    }

    /// `out[i][j] = col[i] + mat[i][j]`.
    pub fn broadcast_add_col(&mut self, col: Var, mat: Var) -> Result<Var> {
        let (cv, mv) = (self.value(col), self.value(mat));
        if !cv.is_col_vector() || cv.rows() != mv.rows() {
            return Err(Error::Dimension(format!(
                "broadcast_add_col: col {}x{}, mat {}x{}",
                cv.rows(),
                cv.cols(),
                mv.rows(),
                mv.cols()
            )));
        }
        let mut out = mv.clone();
        for i in 0..mv.rows() {
            let c = cv.data()[i];
            for j in 0..mv.cols() {
                let v = out.get(i, j);
                out.set(i, j, v + c);
            }
        }
        let needs = self.needs(col) || self.needs(mat);
        Ok(self.push(out, Op::BroadcastAddCol { col, mat }, needs))
    }

    /// Per-column logsumexp of an `r x c` matrix, producing `c x 1`.
    pub fn col_logsumexp(&mut self, mat: Var) -> Result<Var> {
        let mv = self.value(mat);
        if mv.rows() == 0 || mv.cols() == 0 {
            return Err(Error::Dimension("col_logsumexp of empty matrix".into()));
        }
        let mut out = vec![0.0; mv.cols()];
        for (j, o) in out.iter_mut().enumerate() {
            let col: Vec<f64> = (0..mv.rows()).map(|i| mv.get(i, j)).collect();
            *o = crate::numeric::matrix::logsumexp(&col)?;
        }
        let needs = self.needs(mat);
        Ok(self.push(Matrix::column(&out), Op::ColLogSumExp { mat }, needs))
    }

    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        if !xv.is_col_vector() {
            return Err(Error::Dimension("gather_rows expects a column vector".into()));
        }
        if idx.is_empty() || idx.iter().any(|i| *i >= xv.rows()) {
            return Err(Error::Dimension(format!("gather_rows {:?} out of {} rows", idx, xv.rows())));
        }
        let data: Vec<f64> = idx.iter().map(|i| xv.data()[*i]).collect();
        let needs = self.needs(x);
        Ok(self.push(Matrix::column(&data), Op::GatherRows { x, idx: idx.to_vec() }, needs))
    }

    pub fn gather_sub(&mut self, mat: Var, rows: &[usize], cols: &[usize]) -> Result<Var> {
        let mv = self.value(mat);
        if rows.iter().any(|i| *i >= mv.rows()) || cols.iter().any(|j| *j >= mv.cols()) {
            return Err(Error::Dimension("gather_sub index out of range".into()));
        }
        let mut out = Matrix::zeros(rows.len(), cols.len());
        for (a, i) in rows.iter().enumerate() {
            for (b, j) in cols.iter().enumerate() {
                out.set(a, b, mv.get(*i, *j));
            }
        }
        let needs = self.needs(mat);
        Ok(self.push(out, Op::GatherSub { mat, rows: rows.to_vec(), cols: cols.to_vec() }, needs))
    }

    /// Elementwise sum of one or more same-shaped nodes.
    pub fn sum_all(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(Error::Dimension("sum_all of zero inputs".into()));
        }
        let mut value = self.value(xs[0]).clone();
        for x in &xs[1..] {
            value.add_assign(self.value(*x))?;
        }
        let needs = xs.iter().any(|x| self.needs(*x));
        Ok(self.push(value, Op::SumAll { xs: xs.to_vec() }, needs))
    }

    /// `W * x + b`. Gradients flow to all three operands.
    pub fn affine(&mut self, w: Var, x: Var, b: Var) -> Result<Var> {
        let wx = self.matvec(w, x)?;
        self.add(wx, b)
    }

    /// Inverted dropout: in training mode each entry is zeroed with
    /// probability `p` and survivors are scaled by `1/(1-p)`; in inference
    /// mode the input passes through untouched.
    pub fn dropout(&mut self, x: Var, p: f64, rng: &mut Rng, training: bool) -> Result<Var> {
        if !training || p == 0.0 {
            return Ok(x);
        }
        let xv = self.value(x);
        let mask = dropout_mask(xv.rows(), xv.cols(), p, rng)?;
        let m = self.constant(mask);
        self.mul(x, m)
    }

    /// Backpropagate from a scalar node, accumulating into parameter blocks.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::Dimension(format!(
                "backward from a {}x{} node; expected a scalar",
                lv.rows(),
                lv.cols()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::column(&[1.0]));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[i].op {
                Op::Const => {}
                Op::Param(id) => {
                    store.block_mut(*id).grad.add_assign(&g)?;
                }
                Op::MatVec { w, x } => {
                    let (w, x) = (*w, *x);
                    if self.needs(w) {
                        let xv = self.value(x).data().to_vec();
                        let gw = self.grad_entry(&mut grads, w);
                        let cols = gw.cols();
                        for r in 0..g.len() {
                            let gr = g.data()[r];
                            if gr != 0.0 {
                                let row = &mut gw.data_mut()[r * cols..(r + 1) * cols];
                                for (dst, xj) in row.iter_mut().zip(xv.iter()) {
                                    *dst += gr * xj;
                                }
                            }
                        }
                    }
                    if self.needs(x) {
                        let wv = self.value(w).clone();
                        let gx = self.grad_entry(&mut grads, x);
                        for r in 0..g.len() {
                            let gr = g.data()[r];
                            if gr != 0.0 {
                                let row = wv.row(r);
                                for (dst, wj) in gx.data_mut().iter_mut().zip(row.iter()) {
                                    *dst += gr * wj;
                                }
                            }
                        }
                    }
                }
                Op::Add { a, b } => {
                    self.accumulate(&mut grads, *a, &g)?;
                    self.accumulate(&mut grads, *b, &g)?;
                }
                Op::Sub { a, b } => {
                    self.accumulate(&mut grads, *a, &g)?;
                    if self.needs(*b) {
                        let neg = g.scale(-1.0);
                        self.accumulate(&mut grads, *b, &neg)?;
                    }
                }
                Op::Mul { a, b } => {
                    let (a, b) = (*a, *b);
                    if self.needs(a) {
                        let da = g.hadamard(self.value(b))?;
                        self.accumulate(&mut grads, a, &da)?;
                    }
                    if self.needs(b) {
                        let db = g.hadamard(self.value(a))?;
                        self.accumulate(&mut grads, b, &db)?;
                    }
                }
                Op::Scale { x, k } => {
                    if self.needs(*x) {
                        let dx = g.scale(*k);
                        self.accumulate(&mut grads, *x, &dx)?;
                    }
                }
                Op::Sigmoid { x } => {
                    let s = &self.nodes[i].value;
                    let mut dx = g.clone();
                    for (d, sv) in dx.data_mut().iter_mut().zip(s.data().iter()) {
                        *d *= sv * (1.0 - sv);
                    }
                    self.accumulate(&mut grads, *x, &dx)?;
                }
                Op::Tanh { x } => {
                    let t = &self.nodes[i].value;
                    let mut dx = g.clone();
                    for (d, tv) in dx.data_mut().iter_mut().zip(t.data().iter()) {
                        *d *= 1.0 - tv * tv;
                    }
                    self.accumulate(&mut grads, *x, &dx)?;
                }
                Op::Slice { x, start, len } => {
                    if self.needs(*x) {
                        let gx = self.grad_entry(&mut grads, *x);
                        for (off, gv) in g.data().iter().enumerate().take(*len) {
                            gx.data_mut()[start + off] += gv;
                        }
                    }
                }
                Op::Concat { parts } => {
                    let mut offset = 0;
                    for p in parts {
                        let rows = self.value(*p).rows();
                        if self.needs(*p) {
                            let piece = Matrix::column(&g.data()[offset..offset + rows]);
                            self.accumulate(&mut grads, *p, &piece)?;
                        }
                        offset += rows;
                    }
                }
                Op::MaxOver { xs, argmax } => {
                    for (j, k) in argmax.iter().enumerate() {
                        let src = xs[*k as usize];
                        if self.needs(src) {
                            let gx = self.grad_entry(&mut grads, src);
                            gx.data_mut()[j] += g.data()[j];
                        }
                    }
                }
                Op::LogSumExp { x } => {
                    if self.needs(*x) {
                        let soft = crate::numeric::matrix::softmax(self.value(*x));
                        let dx = soft.scale(g.data()[0]);
                        self.accumulate(&mut grads, *x, &dx)?;
                    }
                }
                Op::BroadcastAddCol { col, mat } => {
                    if self.needs(*col) {
                        let mut dcol = Matrix::zeros(g.rows(), 1);
                        for r in 0..g.rows() {
                            dcol.data_mut()[r] = g.row(r).iter().sum();
                        }
                        self.accumulate(&mut grads, *col, &dcol)?;
                    }
                    self.accumulate(&mut grads, *mat, &g)?;
                }
                Op::ColLogSumExp { mat } => {
                    if self.needs(*mat) {
                        let mv = self.value(*mat);
                        let out = &self.nodes[i].value;
                        let mut dm = Matrix::zeros(mv.rows(), mv.cols());
                        for j in 0..mv.cols() {
                            let gj = g.data()[j];
                            if gj == 0.0 {
                                continue;
                            }
                            let lse = out.data()[j];
                            for r in 0..mv.rows() {
                                dm.set(r, j, gj * (mv.get(r, j) - lse).exp());
                            }
                        }
                        self.accumulate(&mut grads, *mat, &dm)?;
                    }
                }
                Op::GatherRows { x, idx } => {
                    if self.needs(*x) {
                        let gx = self.grad_entry(&mut grads, *x);
                        for (k, src) in idx.iter().enumerate() {
                            gx.data_mut()[*src] += g.data()[k];
                        }
                    }
                }
                Op::GatherSub { mat, rows, cols } => {
                    if self.needs(*mat) {
                        let gm = self.grad_entry(&mut grads, *mat);
                        let width = gm.cols();
                        for (a, i2) in rows.iter().enumerate() {
                            for (b, j2) in cols.iter().enumerate() {
                                gm.data_mut()[i2 * width + j2] += g.get(a, b);
                            }
                        }
                    }
                }
                Op::SumAll { xs } => {
                    for x in xs {
                        self.accumulate(&mut grads, *x, &g)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, g: &Matrix) -> Result<()> {
        if !self.needs(v) {
            return Ok(());
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(g)?,
            slot => *slot = Some(g.clone()),
        }
        Ok(())
    }

    fn grad_entry<'a>(&self, grads: &'a mut [Option<Matrix>], v: Var) -> &'a mut Matrix {
        let value = &self.nodes[v.0].value;
        grads[v.0].get_or_insert_with(|| Matrix::zeros(value.rows(), value.cols()))
    }
}

/// Inverted-dropout mask: entries are `0` with probability `p`, else `1/(1-p)`.
pub fn dropout_mask(rows: usize, cols: usize, p: f64, rng: &mut Rng) -> Result<Matrix> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!("dropout probability {p} outside [0, 1)")));
    }
    let keep_scale = 1.0 / (1.0 - p);
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = if rng.f64() < p { 0.0 } else { keep_scale };
    }
    Ok(m)
}

/// Plain-matrix dropout, identical semantics to [`Tape::dropout`].
pub fn dropout(x: &Matrix, p: f64, rng: &mut Rng, training: bool) -> Result<Matrix> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!("dropout probability {p} outside [0, 1)")));
    }
    if !training || p == 0.0 {
        return Ok(x.clone());
    }
    let mask = dropout_mask(x.rows(), x.cols(), p, rng)?;
    x.hadamard(&mask)
}
