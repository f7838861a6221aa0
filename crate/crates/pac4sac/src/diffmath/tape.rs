//! Recorded computation tape and the reverse pass.
//!
//! The tape is a flat list of nodes in topological order: every operation's
//! parents precede it, so one reverse sweep propagates adjoints exactly once
//! per node. Each backward pass computes its vector-Jacobian products in a
//! scratch buffer and only then folds them into the persistent `grad`
//! buffers, so repeated passes accumulate linearly.

use std::cell::RefCell;
use std::rc::Rc;

use matrixmultiply::dgemm;

/// A parent reference: the saved forward values plus, when the parent is
/// tracked, its node id. Detached parents keep their values (backward rules
/// need them) but never receive gradient.
pub(crate) struct Src {
    pub node: Option<usize>,
    pub values: Rc<Vec<f64>>,
}

pub(crate) enum BackOp {
    Leaf,
    Matmul { a: Src, b: Src, m: usize, k: usize, n: usize },
    Add { a: Src, b: Src },
    Sub { a: Src, b: Src },
    Mul { a: Src, b: Src },
    Min { a: Src, b: Src },
    AddRow { a: Src, row: Src, rows: usize, cols: usize },
    MulRow { a: Src, row: Src, rows: usize, cols: usize },
    Square { a: Src },
    Sqrt { a: Src, out: Rc<Vec<f64>> },
    Exp { a: Src, out: Rc<Vec<f64>> },
    Log { a: Src },
    Silu { a: Src },
    Tanh { a: Src, out: Rc<Vec<f64>> },
    Clamp { a: Src, lo: f64, hi: f64 },
    Scale { a: Src, factor: f64 },
    Shift { a: Src },
    Mean { a: Src },
    Sum { a: Src },
    RowSum { a: Src, cols: usize },
    NarrowCols { a: Src, cols: usize, start: usize, take: usize },
    Concat { a: Src, b: Src, a_cols: usize, b_cols: usize },
    LayerNorm { a: Src, normalized: Rc<Vec<f64>>, inv_std: Vec<f64>, rows: usize, cols: usize },
}

pub(crate) struct Node {
    pub grad: Vec<f64>,
    pub op: BackOp,
}

pub(crate) struct TapeInner {
    pub nodes: Vec<Node>,
}

/// Handle to a recording tape. Cloning shares the underlying storage; a tape
/// and its tensors are confined to a single worker thread.
#[derive(Clone)]
pub struct Tape {
    pub(crate) inner: Rc<RefCell<TapeInner>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { inner: Rc::new(RefCell::new(TapeInner { nodes: Vec::new() })) }
    }

    pub(crate) fn same_tape(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    pub(crate) fn push_node(&self, len: usize, op: BackOp) -> usize {
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        inner.nodes.push(Node { grad: vec![0.0; len], op });
        id
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Reset every gradient buffer to zero.
    pub fn zero_grads(&self) {
        let mut inner = self.inner.borrow_mut();
        for node in inner.nodes.iter_mut() {
            for g in node.grad.iter_mut() {
                *g = 0.0;
            }
        }
    }

    pub(crate) fn grad_of(&self, node: usize) -> Vec<f64> {
        self.inner.borrow().nodes[node].grad.clone()
    }

    /// Reverse sweep seeded with adjoint 1 at `output` (a scalar node).
    pub(crate) fn backward_from(&self, output: usize) {
        let mut inner = self.inner.borrow_mut();
        let nodes = &mut inner.nodes;

        let mut adjoint: Vec<Vec<f64>> = nodes[..=output]
            .iter()
            .map(|n| vec![0.0; n.grad.len()])
            .collect();
        adjoint[output][0] = 1.0;

        for i in (0..=output).rev() {
            if adjoint[i].iter().all(|&g| g == 0.0) {
                continue;
            }
            // Split so the node's op can be read while parent adjoints
            // (strictly earlier indices) are written.
            let (earlier, rest) = adjoint.split_at_mut(i);
            let g = &rest[0];
            propagate(&nodes[i].op, g, earlier);
        }

        for (node, adj) in nodes.iter_mut().zip(adjoint.iter()) {
            for (g, a) in node.grad.iter_mut().zip(adj.iter()) {
                *g += a;
            }
        }
    }
}

fn accumulate(adjoint: &mut [Vec<f64>], src: &Src, contribution: impl Fn(usize) -> f64) {
    if let Some(p) = src.node {
        let buf = &mut adjoint[p];
        for (idx, g) in buf.iter_mut().enumerate() {
            *g += contribution(idx);
        }
    }
}

fn propagate(op: &BackOp, g: &[f64], adjoint: &mut [Vec<f64>]) {
    match op {
        BackOp::Leaf => {}
        BackOp::Matmul { a, b, m, k, n } => {
            let (m, k, n) = (*m, *k, *n);
            if let Some(p) = a.node {
                // dA += G · Bᵀ
                unsafe {
                    dgemm(
                        m,
                        n,
                        k,
                        1.0,
                        g.as_ptr(),
                        n as isize,
                        1,
                        b.values.as_ptr(),
                        1,
                        n as isize,
                        1.0,
                        adjoint[p].as_mut_ptr(),
                        k as isize,
                        1,
                    );
                }
            }
            if let Some(p) = b.node {
                // dB += Aᵀ · G
                unsafe {
                    dgemm(
                        k,
                        m,
                        n,
                        1.0,
                        a.values.as_ptr(),
                        1,
                        k as isize,
                        g.as_ptr(),
                        n as isize,
                        1,
                        1.0,
                        adjoint[p].as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
        BackOp::Add { a, b } => {
            accumulate(adjoint, a, |i| g[i]);
            accumulate(adjoint, b, |i| g[i]);
        }
        BackOp::Sub { a, b } => {
            accumulate(adjoint, a, |i| g[i]);
            accumulate(adjoint, b, |i| -g[i]);
        }
        BackOp::Mul { a, b } => {
            accumulate(adjoint, a, |i| g[i] * b.values[i]);
            accumulate(adjoint, b, |i| g[i] * a.values[i]);
        }
        BackOp::Min { a, b } => {
            // Ties route to the left operand.
            accumulate(adjoint, a, |i| if a.values[i] <= b.values[i] { g[i] } else { 0.0 });
            accumulate(adjoint, b, |i| if a.values[i] <= b.values[i] { 0.0 } else { g[i] });
        }
        BackOp::AddRow { a, row, rows, cols } => {
            accumulate(adjoint, a, |i| g[i]);
            let (rows, cols) = (*rows, *cols);
            accumulate(adjoint, row, |j| (0..rows).map(|i| g[i * cols + j]).sum());
        }
        BackOp::MulRow { a, row, rows, cols } => {
            let cols_ = *cols;
            accumulate(adjoint, a, |i| g[i] * row.values[i % cols_]);
            let (rows, cols) = (*rows, *cols);
            accumulate(adjoint, row, |j| {
                (0..rows).map(|i| g[i * cols + j] * a.values[i * cols + j]).sum()
            });
        }
        BackOp::Square { a } => {
            accumulate(adjoint, a, |i| 2.0 * a.values[i] * g[i]);
        }
        BackOp::Sqrt { a, out } => {
            accumulate(adjoint, a, |i| 0.5 * g[i] / out[i]);
        }
        BackOp::Exp { a, out } => {
            accumulate(adjoint, a, |i| g[i] * out[i]);
        }
        BackOp::Log { a } => {
            accumulate(adjoint, a, |i| g[i] / a.values[i]);
        }
        BackOp::Silu { a } => {
            accumulate(adjoint, a, |i| {
                let x = a.values[i];
                let s = sigmoid(x);
                g[i] * s * (1.0 + x * (1.0 - s))
            });
        }
        BackOp::Tanh { a, out } => {
            accumulate(adjoint, a, |i| g[i] * (1.0 - out[i] * out[i]));
        }
        BackOp::Clamp { a, lo, hi } => {
            // Subgradient: identity inside the interval and at the boundary.
            accumulate(adjoint, a, |i| {
                let x = a.values[i];
                if x >= *lo && x <= *hi {
                    g[i]
                } else {
                    0.0
                }
            });
        }
        BackOp::Scale { a, factor } => {
            accumulate(adjoint, a, |i| g[i] * factor);
        }
        BackOp::Shift { a } => {
            accumulate(adjoint, a, |i| g[i]);
        }
        BackOp::Mean { a } => {
            let inv = 1.0 / a.values.len() as f64;
            accumulate(adjoint, a, |_| g[0] * inv);
        }
        BackOp::Sum { a } => {
            accumulate(adjoint, a, |_| g[0]);
        }
        BackOp::RowSum { a, cols } => {
            accumulate(adjoint, a, |i| g[i / cols]);
        }
        BackOp::NarrowCols { a, cols, start, take } => {
            accumulate(adjoint, a, |i| {
                let (r, c) = (i / cols, i % cols);
                if c >= *start && c < start + take {
                    g[r * take + (c - start)]
                } else {
                    0.0
                }
            });
        }
        BackOp::Concat { a, b, a_cols, b_cols } => {
            let total = a_cols + b_cols;
            accumulate(adjoint, a, |i| {
                let (r, c) = (i / a_cols, i % a_cols);
                g[r * total + c]
            });
            accumulate(adjoint, b, |i| {
                let (r, c) = (i / b_cols, i % b_cols);
                g[r * total + a_cols + c]
            });
        }
        BackOp::LayerNorm { a, normalized, inv_std, rows, cols } => {
            if a.node.is_some() {
                let (rows, cols) = (*rows, *cols);
                let mut contrib = vec![0.0; rows * cols];
                for (r, &row_inv_std) in inv_std.iter().enumerate().take(rows) {
                    let base = r * cols;
                    let mut g_mean = 0.0;
                    let mut gy_mean = 0.0;
                    for c in 0..cols {
                        g_mean += g[base + c];
                        gy_mean += g[base + c] * normalized[base + c];
                    }
                    g_mean /= cols as f64;
                    gy_mean /= cols as f64;
                    for c in 0..cols {
                        contrib[base + c] =
                            row_inv_std * (g[base + c] - g_mean - normalized[base + c] * gy_mean);
                    }
                }
                accumulate(adjoint, a, |i| contrib[i]);
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
