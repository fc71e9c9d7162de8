//! Batched reverse-mode tape.
//!
//! Every node holds a dense row-major `rows × cols` block. Batches run along
//! rows, so one tape evaluates a network on many states at once; parameters
//! are leaves whose row count is independent of the batch.
//!
//! The backward pass records its vector-Jacobian products as ordinary tape
//! nodes. A gradient returned by [`Tape::grad`] is therefore itself
//! differentiable, and calling `grad` again on an expression that contains it
//! gives second derivatives. There is a single backward implementation; the
//! first-order case is just the case where nobody differentiates the result
//! again.

use std::fmt;

use super::DiffError;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(u32);

impl Var {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "%{}", self.0)
    }
}

/// Primitive operations understood by the tape.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Leaf,
    /// `a · bᵀ` with `a: r×k`, `b: n×k`.
    MatMulT(Var, Var),
    /// `a · b` with `a: r×n`, `b: n×k`.
    MatMul(Var, Var),
    /// `aᵀ · b` with `a: r×p`, `b: r×q`.
    TMatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    /// Element-wise product.
    Mul(Var, Var),
    Scale(Var, f64),
    Shift(Var, f64),
    Tanh(Var),
    /// `1 - y²`, the derivative of tanh expressed through its output.
    TanhDeriv(Var),
    Exp(Var),
    Sin(Var),
    Cos(Var),
    /// `max(0, a)`; the subgradient at 0 is 0.
    Relu(Var),
    /// `|a|`; the subgradient at 0 is 0.
    Abs(Var),
    /// `r×c → r×1`.
    RowSum(Var),
    /// `r×c → 1×c`.
    ColSum(Var),
    /// `1×c → r×c`.
    BroadcastRows(Var, usize),
    /// `r×1 → r×c`.
    BroadcastCols(Var, usize),
    SliceCols { src: Var, start: usize, len: usize },
    PadCols { src: Var, start: usize, total: usize },
    Concat(Var, Var),
}

impl Op {
    fn parents(&self) -> [Option<Var>; 2] {
        use Op::*;
        match *self {
            Leaf => [None, None],
            MatMulT(a, b) | MatMul(a, b) | TMatMul(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b)
            | Concat(a, b) => [Some(a), Some(b)],
            Scale(a, _) | Shift(a, _) | Tanh(a) | TanhDeriv(a) | Exp(a) | Sin(a) | Cos(a)
            | Relu(a) | Abs(a) | RowSum(a) | ColSum(a) | BroadcastRows(a, _)
            | BroadcastCols(a, _) => [Some(a), None],
            SliceCols { src, .. } | PadCols { src, .. } => [Some(src), None],
        }
    }

    /// Short human-readable name, used in diagnostics.
    pub fn name(&self) -> &'static str {
        use Op::*;
        match self {
            Leaf => "leaf",
            MatMulT(..) => "matmul_t",
            MatMul(..) => "matmul",
            TMatMul(..) => "t_matmul",
            Add(..) => "add",
            Sub(..) => "sub",
            Mul(..) => "mul",
            Scale(..) => "scale",
            Shift(..) => "shift",
            Tanh(..) => "tanh",
            TanhDeriv(..) => "tanh_deriv",
            Exp(..) => "exp",
            Sin(..) => "sin",
            Cos(..) => "cos",
            Relu(..) => "relu",
            Abs(..) => "abs",
            RowSum(..) => "row_sum",
            ColSum(..) => "col_sum",
            BroadcastRows(..) => "broadcast_rows",
            BroadcastCols(..) => "broadcast_cols",
            SliceCols { .. } => "slice_cols",
            PadCols { .. } => "pad_cols",
            Concat(..) => "concat",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    start: usize,
}

/// Append-only computation record. Single use: build, differentiate, read.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    data: Vec<f64>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize, scalars: usize) -> Self {
        Tape { nodes: Vec::with_capacity(nodes), data: Vec::with_capacity(scalars) }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
        self.data.clear();
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.index()];
        (n.rows, n.cols)
    }

    pub fn rows(&self, v: Var) -> usize {
        self.nodes[v.index()].rows
    }

    pub fn cols(&self, v: Var) -> usize {
        self.nodes[v.index()].cols
    }

    pub fn op(&self, v: Var) -> &Op {
        &self.nodes[v.index()].op
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let n = &self.nodes[v.index()];
        &self.data[n.start..n.start + n.rows * n.cols]
    }

    /// Value of a `1×1` node.
    pub fn scalar_value(&self, v: Var) -> f64 {
        debug_assert_eq!(self.shape(v), (1, 1));
        self.value(v)[0]
    }

    /// Records a leaf holding a copy of `values`.
    pub fn leaf(&mut self, rows: usize, cols: usize, values: &[f64]) -> Var {
        assert_eq!(values.len(), rows * cols, "leaf data does not match its shape");
        let start = self.data.len();
        self.data.extend_from_slice(values);
        self.push_node(Op::Leaf, rows, cols, start)
    }

    pub fn fill(&mut self, rows: usize, cols: usize, value: f64) -> Var {
        let start = self.data.len();
        self.data.resize(start + rows * cols, value);
        self.push_node(Op::Leaf, rows, cols, start)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.fill(rows, cols, 0.0)
    }

    pub fn constant(&mut self, value: f64) -> Var {
        self.fill(1, 1, value)
    }

    fn push_node(&mut self, op: Op, rows: usize, cols: usize, start: usize) -> Var {
        let id = u32::try_from(self.nodes.len()).expect("tape exceeded u32 nodes");
        self.nodes.push(Node { op, rows, cols, start });
        Var(id)
    }

    fn push_op(&mut self, op: Op, rows: usize, cols: usize) -> Var {
        let start = self.data.len();
        self.data.resize(start + rows * cols, 0.0);
        let (prev, out) = self.data.split_at_mut(start);
        eval_op(&op, &self.nodes, prev, out);
        self.push_node(op, rows, cols, start)
    }

    // ---- primitive constructors -------------------------------------------------

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let (r, k) = self.shape(a);
        let (n, k2) = self.shape(b);
        assert_eq!(k, k2, "matmul_t inner dimension mismatch");
        self.push_op(Op::MatMulT(a, b), r, n)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (r, n) = self.shape(a);
        let (n2, k) = self.shape(b);
        assert_eq!(n, n2, "matmul inner dimension mismatch");
        self.push_op(Op::MatMul(a, b), r, k)
    }

    pub fn t_matmul(&mut self, a: Var, b: Var) -> Var {
        let (r, p) = self.shape(a);
        let (r2, q) = self.shape(b);
        assert_eq!(r, r2, "t_matmul row mismatch");
        self.push_op(Op::TMatMul(a, b), p, q)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> (usize, usize) {
        let sa = self.shape(a);
        assert_eq!(sa, self.shape(b), "{what}: operand shapes differ");
        sa
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (r, c) = self.same_shape(a, b, "add");
        self.push_op(Op::Add(a, b), r, c)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (r, c) = self.same_shape(a, b, "sub");
        self.push_op(Op::Sub(a, b), r, c)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (r, c) = self.same_shape(a, b, "mul");
        self.push_op(Op::Mul(a, b), r, c)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let (r, k) = self.shape(a);
        self.push_op(Op::Scale(a, c), r, k)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn shift(&mut self, a: Var, c: f64) -> Var {
        let (r, k) = self.shape(a);
        self.push_op(Op::Shift(a, c), r, k)
    }

    fn unary(&mut self, op: Op, a: Var) -> Var {
        let (r, c) = self.shape(a);
        self.push_op(op, r, c)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Op::Tanh(a), a)
    }

    pub fn tanh_deriv(&mut self, y: Var) -> Var {
        self.unary(Op::TanhDeriv(y), y)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(Op::Exp(a), a)
    }

    pub fn sin(&mut self, a: Var) -> Var {
        self.unary(Op::Sin(a), a)
    }

    pub fn cos(&mut self, a: Var) -> Var {
        self.unary(Op::Cos(a), a)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(Op::Relu(a), a)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(Op::Abs(a), a)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a)
    }

    pub fn row_sum(&mut self, a: Var) -> Var {
        let r = self.rows(a);
        self.push_op(Op::RowSum(a), r, 1)
    }

    pub fn col_sum(&mut self, a: Var) -> Var {
        let c = self.cols(a);
        self.push_op(Op::ColSum(a), 1, c)
    }

    /// Sum of all entries, as a `1×1` node.
    pub fn sum(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        match (r, c) {
            (1, 1) => a,
            (_, 1) => self.col_sum(a),
            (1, _) => self.row_sum(a),
            _ => {
                let rs = self.row_sum(a);
                self.col_sum(rs)
            }
        }
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let s = self.sum(a);
        self.scale(s, 1.0 / (r * c) as f64)
    }

    /// Row-wise inner product, `r×c, r×c → r×1`.
    pub fn dot_rows(&mut self, a: Var, b: Var) -> Var {
        let p = self.mul(a, b);
        self.row_sum(p)
    }

    /// Row-wise squared Euclidean norm, `r×c → r×1`.
    pub fn norm_sq_rows(&mut self, a: Var) -> Var {
        self.dot_rows(a, a)
    }

    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(r, 1, "broadcast_rows expects a single row");
        if rows == 1 {
            return a;
        }
        self.push_op(Op::BroadcastRows(a, rows), rows, c)
    }

    pub fn broadcast_cols(&mut self, a: Var, cols: usize) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(c, 1, "broadcast_cols expects a single column");
        if cols == 1 {
            return a;
        }
        self.push_op(Op::BroadcastCols(a, cols), r, cols)
    }

    pub fn slice_cols(&mut self, src: Var, start: usize, len: usize) -> Var {
        let (r, c) = self.shape(src);
        assert!(start + len <= c, "slice_cols out of range");
        if start == 0 && len == c {
            return src;
        }
        self.push_op(Op::SliceCols { src, start, len }, r, len)
    }

    pub fn pad_cols(&mut self, src: Var, start: usize, total: usize) -> Var {
        let (r, c) = self.shape(src);
        assert!(start + c <= total, "pad_cols out of range");
        if start == 0 && c == total {
            return src;
        }
        self.push_op(Op::PadCols { src, start, total }, r, total)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (r, ca) = self.shape(a);
        let (r2, cb) = self.shape(b);
        assert_eq!(r, r2, "concat_cols row mismatch");
        self.push_op(Op::Concat(a, b), r, ca + cb)
    }

    /// Fails with a numeric fault naming `label` if `v` holds a non-finite entry.
    pub fn ensure_finite(&self, v: Var, label: impl FnOnce() -> String) -> Result<(), DiffError> {
        if self.value(v).iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(DiffError::NumericFault { layer: label() })
        }
    }

    // ---- reverse pass --------------------------------------------------------------

    /// Gradient of the sum of all entries of `root` with respect to each target.
    ///
    /// The result nodes live on this tape and can be differentiated again.
    /// Targets that `root` does not depend on get a zero node of their shape.
    pub fn grad(&mut self, root: Var, targets: &[Var]) -> Vec<Var> {
        let (r, c) = self.shape(root);
        let seed = self.fill(r, c, 1.0);
        self.grad_with_seed(root, seed, targets)
    }

    /// Vector-Jacobian product: adjoint `seed` (shaped like `root`) pulled back
    /// to each target.
    pub fn grad_with_seed(&mut self, root: Var, seed: Var, targets: &[Var]) -> Vec<Var> {
        assert_eq!(self.shape(root), self.shape(seed), "seed must match root shape");
        let n = root.index() + 1;
        let mut live = vec![false; n];
        for t in targets {
            if t.index() < n {
                live[t.index()] = true;
            }
        }
        for i in 0..n {
            if live[i] {
                continue;
            }
            live[i] = self.nodes[i].op.parents().iter().flatten().any(|p| live[p.index()]);
        }

        let mut adj: Vec<Option<Var>> = vec![None; n];
        if live[root.index()] {
            adj[root.index()] = Some(seed);
        }
        for i in (0..n).rev() {
            let Some(d) = adj[i] else { continue };
            let op = self.nodes[i].op.clone();
            self.pull_back(Var(i as u32), &op, d, &live, &mut adj);
        }

        targets
            .iter()
            .map(|&t| match adj.get(t.index()).copied().flatten() {
                Some(g) => g,
                None => {
                    let (r, c) = self.shape(t);
                    self.zeros(r, c)
                }
            })
            .collect()
    }

    fn accumulate(&mut self, adj: &mut [Option<Var>], p: Var, contrib: Var) {
        let slot = &mut adj[p.index()];
        *slot = Some(match *slot {
            None => contrib,
            Some(prev) => {
                let (r, c) = self.shape(prev);
                debug_assert_eq!((r, c), self.shape(contrib));
                self.push_op(Op::Add(prev, contrib), r, c)
            }
        });
    }

    fn pull_back(&mut self, y: Var, op: &Op, d: Var, live: &[bool], adj: &mut [Option<Var>]) {
        use Op::*;
        let is_live = |v: Var| live[v.index()];
        match *op {
            Leaf => {}
            MatMulT(a, b) => {
                if is_live(a) {
                    let g = self.matmul(d, b);
                    self.accumulate(adj, a, g);
                }
                if is_live(b) {
                    let g = self.t_matmul(d, a);
                    self.accumulate(adj, b, g);
                }
            }
            MatMul(a, b) => {
                if is_live(a) {
                    let g = self.matmul_t(d, b);
                    self.accumulate(adj, a, g);
                }
                if is_live(b) {
                    let g = self.t_matmul(a, d);
                    self.accumulate(adj, b, g);
                }
            }
            TMatMul(a, b) => {
                if is_live(a) {
                    let g = self.matmul_t(b, d);
                    self.accumulate(adj, a, g);
                }
                if is_live(b) {
                    let g = self.matmul(a, d);
                    self.accumulate(adj, b, g);
                }
            }
            Add(a, b) => {
                if is_live(a) {
                    self.accumulate(adj, a, d);
                }
                if is_live(b) {
                    self.accumulate(adj, b, d);
                }
            }
            Sub(a, b) => {
                if is_live(a) {
                    self.accumulate(adj, a, d);
                }
                if is_live(b) {
                    let g = self.scale(d, -1.0);
                    self.accumulate(adj, b, g);
                }
            }
            Mul(a, b) => {
                if is_live(a) {
                    let g = self.mul(d, b);
                    self.accumulate(adj, a, g);
                }
                if is_live(b) {
                    let g = self.mul(d, a);
                    self.accumulate(adj, b, g);
                }
            }
            Scale(a, c) => {
                let g = self.scale(d, c);
                self.accumulate(adj, a, g);
            }
            Shift(a, _) => self.accumulate(adj, a, d),
            Tanh(a) => {
                let dy = self.tanh_deriv(y);
                let g = self.mul(d, dy);
                self.accumulate(adj, a, g);
            }
            TanhDeriv(a) => {
                let m2 = self.scale(a, -2.0);
                let g = self.mul(d, m2);
                self.accumulate(adj, a, g);
            }
            Exp(a) => {
                let g = self.mul(d, y);
                self.accumulate(adj, a, g);
            }
            Sin(a) => {
                let c = self.cos(a);
                let g = self.mul(d, c);
                self.accumulate(adj, a, g);
            }
            Cos(a) => {
                let s = self.sin(a);
                let ns = self.scale(s, -1.0);
                let g = self.mul(d, ns);
                self.accumulate(adj, a, g);
            }
            Relu(a) => {
                let (r, c) = self.shape(a);
                let mask: Vec<f64> =
                    self.value(a).iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
                let m = self.leaf(r, c, &mask);
                let g = self.mul(d, m);
                self.accumulate(adj, a, g);
            }
            Abs(a) => {
                let (r, c) = self.shape(a);
                let sign: Vec<f64> = self
                    .value(a)
                    .iter()
                    .map(|&v| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 })
                    .collect();
                let m = self.leaf(r, c, &sign);
                let g = self.mul(d, m);
                self.accumulate(adj, a, g);
            }
            RowSum(a) => {
                let c = self.cols(a);
                let g = self.broadcast_cols(d, c);
                self.accumulate(adj, a, g);
            }
            ColSum(a) => {
                let r = self.rows(a);
                let g = self.broadcast_rows(d, r);
                self.accumulate(adj, a, g);
            }
            BroadcastRows(a, _) => {
                let g = self.col_sum(d);
                self.accumulate(adj, a, g);
            }
            BroadcastCols(a, _) => {
                let g = self.row_sum(d);
                self.accumulate(adj, a, g);
            }
            SliceCols { src, start, .. } => {
                let total = self.cols(src);
                let g = self.pad_cols(d, start, total);
                self.accumulate(adj, src, g);
            }
            PadCols { src, start, .. } => {
                let len = self.cols(src);
                let g = self.slice_cols(d, start, len);
                self.accumulate(adj, src, g);
            }
            Concat(a, b) => {
                let ca = self.cols(a);
                let cb = self.cols(b);
                if is_live(a) {
                    let g = self.slice_cols(d, 0, ca);
                    self.accumulate(adj, a, g);
                }
                if is_live(b) {
                    let g = self.slice_cols(d, ca, cb);
                    self.accumulate(adj, b, g);
                }
            }
        }
    }

    /// Recomputes every non-leaf node from its parents and compares with the
    /// recorded value. Returns the first node whose replay differs in any bit.
    pub fn replay_mismatch(&self) -> Option<Var> {
        let mut buf = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if node.op == Op::Leaf {
                continue;
            }
            buf.clear();
            buf.resize(node.rows * node.cols, 0.0);
            eval_op(&node.op, &self.nodes, &self.data[..node.start], &mut buf);
            let recorded = &self.data[node.start..node.start + buf.len()];
            if recorded.iter().zip(&buf).any(|(a, b)| a.to_bits() != b.to_bits()) {
                return Some(Var(i as u32));
            }
        }
        None
    }
}

fn slice_of<'a>(nodes: &[Node], data: &'a [f64], v: Var) -> (&'a [f64], usize, usize) {
    let n = &nodes[v.index()];
    (&data[n.start..n.start + n.rows * n.cols], n.rows, n.cols)
}

fn eval_op(op: &Op, nodes: &[Node], data: &[f64], out: &mut [f64]) {
    use Op::*;
    let get = |v: Var| slice_of(nodes, data, v);
    match *op {
        Leaf => unreachable!("leaves carry their own data"),
        MatMulT(a, b) => {
            let (av, r, k) = get(a);
            let (bv, n, _) = get(b);
            gemm(r, k, n, av, (k, 1), bv, (1, k), out);
        }
        MatMul(a, b) => {
            let (av, r, n) = get(a);
            let (bv, _, k) = get(b);
            gemm(r, n, k, av, (n, 1), bv, (k, 1), out);
        }
        TMatMul(a, b) => {
            let (av, r, p) = get(a);
            let (bv, _, q) = get(b);
            gemm(p, r, q, av, (1, p), bv, (q, 1), out);
        }
        Add(a, b) => zip_into(get(a).0, get(b).0, out, |x, y| x + y),
        Sub(a, b) => zip_into(get(a).0, get(b).0, out, |x, y| x - y),
        Mul(a, b) => zip_into(get(a).0, get(b).0, out, |x, y| x * y),
        Scale(a, c) => map_into(get(a).0, out, |x| x * c),
        Shift(a, c) => map_into(get(a).0, out, |x| x + c),
        Tanh(a) => map_into(get(a).0, out, f64::tanh),
        TanhDeriv(a) => map_into(get(a).0, out, |y| 1.0 - y * y),
        Exp(a) => map_into(get(a).0, out, f64::exp),
        Sin(a) => map_into(get(a).0, out, f64::sin),
        Cos(a) => map_into(get(a).0, out, f64::cos),
        Relu(a) => map_into(get(a).0, out, |x| if x > 0.0 { x } else { 0.0 }),
        Abs(a) => map_into(get(a).0, out, f64::abs),
        RowSum(a) => {
            let (av, _, c) = get(a);
            for (o, row) in out.iter_mut().zip(av.chunks_exact(c)) {
                *o = row.iter().sum();
            }
        }
        ColSum(a) => {
            let (av, _, c) = get(a);
            out.fill(0.0);
            for row in av.chunks_exact(c) {
                for (o, x) in out.iter_mut().zip(row) {
                    *o += x;
                }
            }
        }
        BroadcastRows(a, _) => {
            let (av, _, c) = get(a);
            for row in out.chunks_exact_mut(c) {
                row.copy_from_slice(av);
            }
        }
        BroadcastCols(a, cols) => {
            let (av, _, _) = get(a);
            for (row, &x) in out.chunks_exact_mut(cols).zip(av) {
                row.fill(x);
            }
        }
        SliceCols { src, start, len } => {
            let (sv, _, c) = get(src);
            for (row, srow) in out.chunks_exact_mut(len).zip(sv.chunks_exact(c)) {
                row.copy_from_slice(&srow[start..start + len]);
            }
        }
        PadCols { src, start, total } => {
            let (sv, _, c) = get(src);
            for (row, srow) in out.chunks_exact_mut(total).zip(sv.chunks_exact(c)) {
                row.fill(0.0);
                row[start..start + c].copy_from_slice(srow);
            }
        }
        Concat(a, b) => {
            let (av, _, ca) = get(a);
            let (bv, _, cb) = get(b);
            for ((row, ar), br) in
                out.chunks_exact_mut(ca + cb).zip(av.chunks_exact(ca)).zip(bv.chunks_exact(cb))
            {
                row[..ca].copy_from_slice(ar);
                row[ca..].copy_from_slice(br);
            }
        }
    }
}

#[inline]
fn map_into(a: &[f64], out: &mut [f64], f: impl Fn(f64) -> f64) {
    for (o, &x) in out.iter_mut().zip(a) {
        *o = f(x);
    }
}

#[inline]
fn zip_into(a: &[f64], b: &[f64], out: &mut [f64], f: impl Fn(f64, f64) -> f64) {
    for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
        *o = f(x, y);
    }
}

/// `out (m×n) = A (m×k) · B (k×n)` with explicit (row, col) strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    out: &mut [f64],
) {
    debug_assert_eq!(out.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        out.fill(0.0);
        return;
    }
    // SAFETY: the strides describe matrices that lie inside `a`, `b` and `out`,
    // whose lengths are checked against the shapes by the callers; `out` does not
    // alias the inputs.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(1, 2, &[1.0, 2.0]);
        let v = t.norm_sq_rows(x);
        assert_eq!(t.scalar_value(v), 5.0);
        let g = t.grad(v, &[x])[0];
        assert_eq!(t.value(g), &[2.0, 4.0]);
    }

    #[test]
    fn matmul_variants_agree_with_naive_products() {
        let mut t = Tape::new();
        let a = t.leaf(2, 3, &[1., 2., 3., 4., 5., 6.]);
        let b = t.leaf(2, 3, &[0.5, -1., 2., 1., 0., -2.]);
        let abt = t.matmul_t(a, b);
        assert_eq!(t.value(abt), &[4.5, -5., 9., -8.]);
        let atb = t.t_matmul(a, b);
        assert_eq!(t.shape(atb), (3, 3));
        assert_eq!(t.value(atb)[0], 1. * 0.5 + 4. * 1.);
        let c = t.leaf(3, 1, &[1., 1., 1.]);
        let ac = t.matmul(a, c);
        assert_eq!(t.value(ac), &[6., 15.]);
    }

    #[test]
    fn second_derivative_of_cubic() {
        // f = x³, f' = 3x², f'' = 6x.
        let mut t = Tape::new();
        let x = t.leaf(1, 1, &[1.5]);
        let x2 = t.mul(x, x);
        let f = t.mul(x2, x);
        let g = t.grad(f, &[x])[0];
        assert!((t.scalar_value(g) - 6.75).abs() < 1e-14);
        let h = t.grad(g, &[x])[0];
        assert!((t.scalar_value(h) - 9.0).abs() < 1e-14);
    }

    #[test]
    fn relu_and_abs_subgradient_at_zero_is_zero() {
        let mut t = Tape::new();
        let x = t.leaf(1, 3, &[-1.0, 0.0, 2.0]);
        let r = t.relu(x);
        let gr = t.grad(r, &[x])[0];
        assert_eq!(t.value(gr), &[0.0, 0.0, 1.0]);
        let a = t.abs(x);
        let ga = t.grad(a, &[x])[0];
        assert_eq!(t.value(ga), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn unrelated_target_gets_zero_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(1, 2, &[1.0, 2.0]);
        let w = t.leaf(2, 2, &[1.0; 4]);
        let v = t.norm_sq_rows(x);
        let g = t.grad(v, &[w])[0];
        assert_eq!(t.shape(g), (2, 2));
        assert!(t.value(g).iter().all(|&e| e == 0.0));
    }

    #[test]
    fn replay_reproduces_values() {
        let mut t = Tape::new();
        let x = t.leaf(3, 2, &[0.1, -0.2, 0.3, 0.4, -0.5, 0.6]);
        let w = t.leaf(4, 2, &[0.3, -0.1, 0.2, 0.5, -0.7, 0.1, 0.9, -0.4]);
        let h = t.matmul_t(x, w);
        let h = t.tanh(h);
        let s = t.slice_cols(h, 1, 2);
        let e = t.exp(s);
        let v = t.norm_sq_rows(e);
        let g = t.grad(v, &[x, w]);
        let l = t.sum(g[0]);
        let _ = t.grad(l, &[w]);
        assert_eq!(t.replay_mismatch(), None);
    }

    #[test]
    fn non_finite_is_reported_with_label() {
        let mut t = Tape::new();
        let x = t.leaf(1, 1, &[1000.0]);
        let e = t.exp(x);
        let err = t.ensure_finite(e, || "coupling[0].scale".into()).unwrap_err();
        assert!(err.to_string().contains("coupling[0].scale"));
    }
}
