use super::{ParamId, ParamStore, Result, TensorError};

/// Arithmetic precision of forward values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F64,
    /// Every forward value is rounded to the nearest `f32`.
    F32,
}

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Affine(Var, f64),
    MulScalar(Var, Var),
    Recip(Var),
    Relu(Var),
    Gelu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Log(Var, f64),
    Softmax(Var),
    LayerNorm { x: Var, inv_std: Vec<f64> },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    Pick(Var, Vec<usize>),
    Max { x: Var, argmax: Vec<usize> },
    Sum(Var),
    Dot(Var, Vec<f64>),
    Reshape(Var),
    Transpose(Var),
    Unfold { x: Var, width: usize },
}

#[derive(Debug)]
enum Value {
    Owned(Vec<f64>),
    Param(ParamId),
}

#[derive(Debug)]
struct Node {
    rows: usize,
    cols: usize,
    value: Value,
    op: Op,
}

/// Records a forward computation for one step; parameters are read in place.
pub struct Tape<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    precision: Precision,
}

/// Per-parameter gradients produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.grads
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_deref().map(|g| (ParamId(i), g)))
    }

    pub fn global_norm(&self) -> f64 {
        self.iter()
            .flat_map(|(_, g)| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

fn shape_err(op: &'static str, shapes: &[(usize, usize)]) -> TensorError {
    TensorError::Shape {
        op,
        shapes: shapes.to_vec(),
    }
}

fn slot<'g>(nodes: &[Node], grads: &'g mut [Option<Vec<f64>>], v: Var) -> &'g mut Vec<f64> {
    let len = nodes[v.0].rows * nodes[v.0].cols;
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

impl<'p> Tape<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Self::with_precision(store, Precision::F64)
    }

    pub fn with_precision(store: &'p ParamStore, precision: Precision) -> Self {
        Tape {
            store,
            nodes: Vec::new(),
            precision,
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        match &self.nodes[v.0].value {
            Value::Owned(data) => data,
            Value::Param(id) => self.store.get(*id).tensor.values(),
        }
    }

    /// Single value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    fn push(&mut self, rows: usize, cols: usize, mut data: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(rows * cols, data.len());
        if self.precision == Precision::F32 {
            for x in &mut data {
                *x = *x as f32 as f64;
            }
        }
        self.nodes.push(Node {
            rows,
            cols,
            value: Value::Owned(data),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<Var> {
        if rows * cols != data.len() {
            return Err(shape_err("constant", &[(rows, cols), (1, data.len())]));
        }
        Ok(self.push(rows, cols, data, Op::Leaf))
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let (rows, cols) = self.store.get(id).tensor.dims();
        self.nodes.push(Node {
            rows,
            cols,
            value: Value::Param(id),
            op: Op::Param(id),
        });
        Var(self.nodes.len() - 1)
    }

    /// `a · b`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((r, k), (k2, c)) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(shape_err("matmul", &[(r, k), (k2, c)]));
        }
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &mut out[i * c..(i + 1) * c];
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                for (o, y) in row.iter_mut().zip(&bv[p * c..(p + 1) * c]) {
                    *o += x * y;
                }
            }
        }
        Ok(self.push(r, c, out, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((r, k), (c, k2)) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(shape_err("matmul_t", &[(r, k), (c, k2)]));
        }
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let ar = &av[i * k..(i + 1) * k];
            for j in 0..c {
                out[i * c + j] = ar
                    .iter()
                    .zip(&bv[j * k..(j + 1) * k])
                    .map(|(x, y)| x * y)
                    .sum();
            }
        }
        Ok(self.push(r, c, out, Op::MatMulT(a, b)))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(op, &[sa, sb]));
        }
        Ok(sa)
    }

    fn zip_map(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (r, c) = self.shape(a);
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        self.push(r, c, out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_map(a, b, |x, y| x + y, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_map(a, b, |x, y| x - y, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_map(a, b, |x, y| x * y, Op::Mul(a, b)))
    }

    fn broadcast_row(
        &mut self,
        name: &'static str,
        x: Var,
        row: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let ((r, c), rs) = (self.shape(x), self.shape(row));
        if rs != (1, c) {
            return Err(shape_err(name, &[(r, c), rs]));
        }
        let (xv, bv) = (self.value(x), self.value(row));
        let out = xv
            .iter()
            .enumerate()
            .map(|(i, v)| f(*v, bv[i % c]))
            .collect();
        Ok(self.push(r, c, out, op))
    }

    /// Adds a `1×c` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        self.broadcast_row("add_row", x, row, |a, b| a + b, Op::AddRow(x, row))
    }

    /// Multiplies every row of `x` elementwise by a `1×c` row.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var> {
        self.broadcast_row("mul_row", x, row, |a, b| a * b, Op::MulRow(x, row))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.affine(x, s, 0.0)
    }

    /// `s·x + b` elementwise.
    pub fn affine(&mut self, x: Var, s: f64, b: f64) -> Var {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|v| s * v + b).collect();
        self.push(r, c, out, Op::Affine(x, s))
    }

    /// Multiplies `x` by the value of a `1×1` node.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.shape(s) != (1, 1) {
            return Err(shape_err("mul_scalar", &[self.shape(x), self.shape(s)]));
        }
        let (r, c) = self.shape(x);
        let k = self.scalar(s);
        let out = self.value(x).iter().map(|v| v * k).collect();
        Ok(self.push(r, c, out, Op::MulScalar(x, s)))
    }

    pub fn recip(&mut self, x: Var) -> Var {
        self.unary(x, |v| 1.0 / v, Op::Recip(x))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|v| f(*v)).collect();
        self.push(r, c, out, op)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        self.unary(
            x,
            |v| 0.5 * v * (1.0 + (GELU_C * (v + GELU_A * v * v * v)).tanh()),
            Op::Gelu(x),
        )
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    /// `ln(max(x, eps))`; the gradient is zero where the clamp is active.
    pub fn log_clamped(&mut self, x: Var, eps: f64) -> Var {
        self.unary(x, |v| v.max(eps).ln(), Op::Log(x, eps))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let xv = self.value(x);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &xv[i * c..(i + 1) * c];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let o = &mut out[i * c..(i + 1) * c];
            let mut sum = 0.0;
            for (o, v) in o.iter_mut().zip(row) {
                *o = (v - max).exp();
                sum += *o;
            }
            for o in o.iter_mut() {
                *o /= sum;
            }
        }
        self.push(r, c, out, Op::Softmax(x))
    }

    /// Row-wise standardization to zero mean and unit variance.
    pub fn layer_norm_rows(&mut self, x: Var, eps: f64) -> Var {
        let (r, c) = self.shape(x);
        let xv = self.value(x);
        let mut out = vec![0.0; r * c];
        let mut inv_std = vec![0.0; r];
        for i in 0..r {
            let row = &xv[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[i] = inv;
            for (o, v) in out[i * c..(i + 1) * c].iter_mut().zip(row) {
                *o = (v - mean) * inv;
            }
        }
        self.push(r, c, out, Op::LayerNorm { x, inv_std })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.shape(parts[0]).0;
        if parts.iter().any(|p| self.shape(*p).0 != rows) {
            let shapes: Vec<_> = parts.iter().map(|p| self.shape(*p)).collect();
            return Err(shape_err("concat_cols", &shapes));
        }
        let cols: usize = parts.iter().map(|p| self.shape(*p).1).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for p in parts {
                let c = self.shape(*p).1;
                out.extend_from_slice(&self.value(*p)[i * c..(i + 1) * c]);
            }
        }
        Ok(self.push(rows, cols, out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.shape(parts[0]).1;
        if parts.iter().any(|p| self.shape(*p).1 != cols) {
            let shapes: Vec<_> = parts.iter().map(|p| self.shape(*p)).collect();
            return Err(shape_err("concat_rows", &shapes));
        }
        let mut out = Vec::new();
        for p in parts {
            out.extend_from_slice(self.value(*p));
        }
        let rows = out.len() / cols.max(1);
        Ok(self.push(rows, cols, out, Op::ConcatRows(parts.to_vec())))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.shape(x);
        if start + len > r {
            return Err(shape_err("slice_rows", &[(r, c), (start, len)]));
        }
        let out = self.value(x)[start * c..(start + len) * c].to_vec();
        Ok(self.push(len, c, out, Op::SliceRows(x, start)))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.shape(x);
        if start + len > c {
            return Err(shape_err("slice_cols", &[(r, c), (start, len)]));
        }
        let xv = self.value(x);
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&xv[i * c + start..i * c + start + len]);
        }
        Ok(self.push(r, len, out, Op::SliceCols(x, start)))
    }

    /// Embedding lookup: row `ids[m]` of `table` becomes output row `m`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (r, c) = self.shape(table);
        let tv = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * c);
        for &id in ids {
            if id >= r {
                return Err(TensorError::Index {
                    op: "gather_rows",
                    index: id,
                    bound: r,
                });
            }
            out.extend_from_slice(&tv[id * c..(id + 1) * c]);
        }
        Ok(self.push(ids.len(), c, out, Op::GatherRows(table, ids.to_vec())))
    }

    /// Picks flat (row-major) positions into a `1×len` row.
    pub fn pick(&mut self, x: Var, flat: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let mut out = Vec::with_capacity(flat.len());
        for &i in flat {
            match xv.get(i) {
                Some(v) => out.push(*v),
                None => {
                    return Err(TensorError::Index {
                        op: "pick",
                        index: i,
                        bound: xv.len(),
                    })
                }
            }
        }
        Ok(self.push(1, flat.len(), out, Op::Pick(x, flat.to_vec())))
    }

    /// Maximum over `axis` 0 (rows, giving `1×c`) or 1 (columns, giving `r×1`).
    pub fn max_over(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (r, c) = self.shape(x);
        if r == 0 || c == 0 || axis > 1 {
            return Err(shape_err("max_over", &[(r, c), (axis, 0)]));
        }
        let xv = self.value(x);
        // Flat index of element `i` of reduced line `o` is `o * so + i * si`.
        let (outer, inner, so, si) = if axis == 0 {
            (c, r, 1, c)
        } else {
            (r, c, c, 1)
        };
        let pos = |o: usize, i: usize| o * so + i * si;
        let mut out = Vec::with_capacity(outer);
        let mut argmax = Vec::with_capacity(outer);
        for o in 0..outer {
            let mut best = pos(o, 0);
            for i in 1..inner {
                let p = pos(o, i);
                if xv[p] > xv[best] {
                    best = p;
                }
            }
            out.push(xv[best]);
            argmax.push(best);
        }
        let (rr, cc) = if axis == 0 { (1, c) } else { (r, 1) };
        Ok(self.push(rr, cc, out, Op::Max { x, argmax }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        self.push(1, 1, vec![s], Op::Sum(x))
    }

    /// `Σ wᵢ·xᵢ` over the flat values, with constant weights.
    pub fn dot_const(&mut self, x: Var, weights: &[f64]) -> Result<Var> {
        let xv = self.value(x);
        if xv.len() != weights.len() {
            return Err(shape_err("dot_const", &[self.shape(x), (1, weights.len())]));
        }
        let s = xv.iter().zip(weights).map(|(a, b)| a * b).sum();
        Ok(self.push(1, 1, vec![s], Op::Dot(x, weights.to_vec())))
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let (r, c) = self.shape(x);
        if r * c != rows * cols {
            return Err(shape_err("reshape", &[(r, c), (rows, cols)]));
        }
        let out = self.value(x).to_vec();
        Ok(self.push(rows, cols, out, Op::Reshape(x)))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let xv = self.value(x);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = xv[i * c + j];
            }
        }
        self.push(c, r, out, Op::Transpose(x))
    }

    /// Centered sliding windows of odd `width` over rows with zero padding:
    /// output row `i` concatenates input rows `i - width/2 ..= i + width/2`.
    /// Followed by a matmul this is a 1-D convolution.
    pub fn unfold(&mut self, x: Var, width: usize) -> Result<Var> {
        let (r, c) = self.shape(x);
        if width.is_multiple_of(2) {
            return Err(shape_err("unfold", &[(r, c), (width, 0)]));
        }
        let half = width / 2;
        let xv = self.value(x);
        let mut out = vec![0.0; r * width * c];
        for i in 0..r {
            for o in 0..width {
                let src = i + o;
                if src < half || src - half >= r {
                    continue;
                }
                let s = src - half;
                let dst = i * width * c + o * c;
                out[dst..dst + c].copy_from_slice(&xv[s * c..(s + 1) * c]);
            }
        }
        Ok(self.push(r, width * c, out, Op::Unfold { x, width }))
    }

    /// Reverse pass from a `1×1` node; returns gradients of every parameter
    /// reached.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar loss");
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients {
            grads: vec![None; self.store.len()],
        };
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let (r, c) = (node.rows, node.cols);
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => match &mut out.grads[id.0] {
                    Some(buf) => add_into(buf, &g),
                    slot => *slot = Some(g),
                },
                Op::MatMul(a, b) => {
                    let k = self.shape(*a).1;
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = slot(&self.nodes, &mut grads, *a);
                    for i in 0..r {
                        for p in 0..k {
                            let brow = &bv[p * c..(p + 1) * c];
                            ga[i * k + p] += g[i * c..(i + 1) * c]
                                .iter()
                                .zip(brow)
                                .map(|(x, y)| x * y)
                                .sum::<f64>();
                        }
                    }
                    let gb = slot(&self.nodes, &mut grads, *b);
                    for i in 0..r {
                        for p in 0..k {
                            let x = av[i * k + p];
                            if x == 0.0 {
                                continue;
                            }
                            for (o, gv) in gb[p * c..(p + 1) * c]
                                .iter_mut()
                                .zip(&g[i * c..(i + 1) * c])
                            {
                                *o += x * gv;
                            }
                        }
                    }
                }
                Op::MatMulT(a, b) => {
                    let k = self.shape(*a).1;
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = slot(&self.nodes, &mut grads, *a);
                    for i in 0..r {
                        for j in 0..c {
                            let gv = g[i * c + j];
                            if gv == 0.0 {
                                continue;
                            }
                            for (o, y) in ga[i * k..(i + 1) * k]
                                .iter_mut()
                                .zip(&bv[j * k..(j + 1) * k])
                            {
                                *o += gv * y;
                            }
                        }
                    }
                    let gb = slot(&self.nodes, &mut grads, *b);
                    for i in 0..r {
                        for j in 0..c {
                            let gv = g[i * c + j];
                            if gv == 0.0 {
                                continue;
                            }
                            for (o, x) in gb[j * k..(j + 1) * k]
                                .iter_mut()
                                .zip(&av[i * k..(i + 1) * k])
                            {
                                *o += gv * x;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    add_into(slot(&self.nodes, &mut grads, *a), &g);
                    add_into(slot(&self.nodes, &mut grads, *b), &g);
                }
                Op::Sub(a, b) => {
                    add_into(slot(&self.nodes, &mut grads, *a), &g);
                    for (o, v) in slot(&self.nodes, &mut grads, *b).iter_mut().zip(&g) {
                        *o -= v;
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    for ((o, gv), y) in slot(&self.nodes, &mut grads, *a).iter_mut().zip(&g).zip(bv)
                    {
                        *o += gv * y;
                    }
                    for ((o, gv), x) in slot(&self.nodes, &mut grads, *b).iter_mut().zip(&g).zip(av)
                    {
                        *o += gv * x;
                    }
                }
                Op::AddRow(x, row) => {
                    add_into(slot(&self.nodes, &mut grads, *x), &g);
                    let gr = slot(&self.nodes, &mut grads, *row);
                    for (i, gv) in g.iter().enumerate() {
                        gr[i % c] += gv;
                    }
                }
                Op::MulRow(x, row) => {
                    let (xv, rv) = (self.value(*x), self.value(*row));
                    let gx = slot(&self.nodes, &mut grads, *x);
                    for (i, gv) in g.iter().enumerate() {
                        gx[i] += gv * rv[i % c];
                    }
                    let gr = slot(&self.nodes, &mut grads, *row);
                    for (i, gv) in g.iter().enumerate() {
                        gr[i % c] += gv * xv[i];
                    }
                }
                Op::Affine(x, s) => {
                    for (o, gv) in slot(&self.nodes, &mut grads, *x).iter_mut().zip(&g) {
                        *o += s * gv;
                    }
                }
                Op::MulScalar(x, s) => {
                    let k = self.scalar(*s);
                    let xv = self.value(*x);
                    for (o, gv) in slot(&self.nodes, &mut grads, *x).iter_mut().zip(&g) {
                        *o += k * gv;
                    }
                    let gs: f64 = g.iter().zip(xv).map(|(a, b)| a * b).sum();
                    slot(&self.nodes, &mut grads, *s)[0] += gs;
                }
                Op::Recip(x) => {
                    let yv = self.value(Var(idx));
                    for ((o, gv), y) in slot(&self.nodes, &mut grads, *x).iter_mut().zip(&g).zip(yv)
                    {
                        *o -= gv * y * y;
                    }
                }
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    for ((o, gv), v) in slot(&self.nodes, &mut grads, *x).iter_mut().zip(&g).zip(xv)
                    {
                        if *v > 0.0 {
                            *o += gv;
                        }
                    }
                }
                Op::Gelu(x) => {
                    let xv = self.value(*x);
                    for ((o, gv), v) in slot(&self.nodes, &mut grads, *x).iter_mut().zip(&g).zip(xv)
                    {
                        let t = (GELU_C * (v + GELU_A * v * v * v)).tanh();
                        let d = 0.5 * (1.0 + t)
                            + 0.5 * v * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * v * v);
                        *o += gv * d;
                    }
                }
                Op::Sigmoid(x) => {
                    let yv = self.value(Var(idx));
                    for ((o, gv), y) in slot(&self.nodes, &mut grads, *x).iter_mut().zip(&g).zip(yv)
                    {
                        *o += gv * y * (1.0 - y);
                    }
                }
                Op::Tanh(x) => {
                    let yv = self.value(Var(idx));
                    for ((o, gv), y) in slot(&self.nodes, &mut grads, *x).iter_mut().zip(&g).zip(yv)
                    {
                        *o += gv * (1.0 - y * y);
                    }
                }
                Op::Log(x, eps) => {
                    let xv = self.value(*x);
                    for ((o, gv), v) in slot(&self.nodes, &mut grads, *x).iter_mut().zip(&g).zip(xv)
                    {
                        if *v > *eps {
                            *o += gv / v;
                        }
                    }
                }
                Op::Softmax(x) => {
                    let yv = self.value(Var(idx));
                    let gx = slot(&self.nodes, &mut grads, *x);
                    for i in 0..r {
                        let (ys, gs) = (&yv[i * c..(i + 1) * c], &g[i * c..(i + 1) * c]);
                        let dot: f64 = ys.iter().zip(gs).map(|(a, b)| a * b).sum();
                        for j in 0..c {
                            gx[i * c + j] += ys[j] * (gs[j] - dot);
                        }
                    }
                }
                Op::LayerNorm { x, inv_std } => {
                    let yv = self.value(Var(idx));
                    let gx = slot(&self.nodes, &mut grads, *x);
                    let n = c as f64;
                    for i in 0..r {
                        let (ys, gs) = (&yv[i * c..(i + 1) * c], &g[i * c..(i + 1) * c]);
                        let sum_g: f64 = gs.iter().sum();
                        let sum_gy: f64 = gs.iter().zip(ys).map(|(a, b)| a * b).sum();
                        for j in 0..c {
                            gx[i * c + j] += inv_std[i] / n * (n * gs[j] - sum_g - ys[j] * sum_gy);
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let pc = self.shape(*p).1;
                        let gp = slot(&self.nodes, &mut grads, *p);
                        for i in 0..r {
                            add_into(
                                &mut gp[i * pc..(i + 1) * pc],
                                &g[i * c + off..i * c + off + pc],
                            );
                        }
                        off += pc;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let len = {
                            let (pr, pc) = self.shape(*p);
                            pr * pc
                        };
                        add_into(slot(&self.nodes, &mut grads, *p), &g[off..off + len]);
                        off += len;
                    }
                }
                Op::SliceRows(x, start) => {
                    add_into(
                        &mut slot(&self.nodes, &mut grads, *x)[start * c..(start + r) * c],
                        &g,
                    );
                }
                Op::SliceCols(x, start) => {
                    let xc = self.shape(*x).1;
                    let gx = slot(&self.nodes, &mut grads, *x);
                    for i in 0..r {
                        add_into(
                            &mut gx[i * xc + start..i * xc + start + c],
                            &g[i * c..(i + 1) * c],
                        );
                    }
                }
                Op::GatherRows(table, ids) => {
                    let gt = slot(&self.nodes, &mut grads, *table);
                    for (m, &id) in ids.iter().enumerate() {
                        add_into(&mut gt[id * c..(id + 1) * c], &g[m * c..(m + 1) * c]);
                    }
                }
                Op::Pick(x, flat) => {
                    let gx = slot(&self.nodes, &mut grads, *x);
                    for (gv, &i) in g.iter().zip(flat) {
                        gx[i] += gv;
                    }
                }
                Op::Max { x, argmax } => {
                    let gx = slot(&self.nodes, &mut grads, *x);
                    for (gv, &i) in g.iter().zip(argmax) {
                        gx[i] += gv;
                    }
                }
                Op::Sum(x) => {
                    for o in slot(&self.nodes, &mut grads, *x).iter_mut() {
                        *o += g[0];
                    }
                }
                Op::Dot(x, w) => {
                    for (o, wv) in slot(&self.nodes, &mut grads, *x).iter_mut().zip(w) {
                        *o += g[0] * wv;
                    }
                }
                Op::Reshape(x) => add_into(slot(&self.nodes, &mut grads, *x), &g),
                Op::Transpose(x) => {
                    // Output is r×c, input c×r.
                    let gx = slot(&self.nodes, &mut grads, *x);
                    for i in 0..r {
                        for j in 0..c {
                            gx[j * r + i] += g[i * c + j];
                        }
                    }
                }
                Op::Unfold { x, width } => {
                    let (xr, xc) = self.shape(*x);
                    let half = width / 2;
                    let gx = slot(&self.nodes, &mut grads, *x);
                    for i in 0..r {
                        for o in 0..*width {
                            let src = i + o;
                            if src < half || src - half >= xr {
                                continue;
                            }
                            let s = src - half;
                            let from = i * c + o * xc;
                            add_into(&mut gx[s * xc..(s + 1) * xc], &g[from..from + xc]);
                        }
                    }
                }
            }
        }
        out
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
