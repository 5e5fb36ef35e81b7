//! The computation tape: eager forward evaluation, one reverse sweep.

use super::store::{GradBuf, ParamId, ParamStore};
use super::DiffError;

/// Handle to one node on a [`Tape`]; carries its shape for cheap checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    idx: u32,
    rows: u32,
    cols: u32,
}

impl Var {
    pub fn rows(&self) -> usize {
        self.rows as usize
    }
    pub fn cols(&self) -> usize {
        self.cols as usize
    }
    pub fn len(&self) -> usize {
        self.rows() * self.cols()
    }
    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Const,
    Param(ParamId),
    /// a (m x k) * b (k x n)
    Matmul(u32, u32),
    Add(u32, u32),
    Sub(u32, u32),
    /// Elementwise product.
    Mul(u32, u32),
    /// `m * a + c` elementwise with scalar constants; only the multiplier
    /// matters to the backward pass.
    Affine(u32, f64),
    Sigmoid(u32),
    Tanh(u32),
    Relu(u32),
    Exp(u32),
    /// Sum of all entries, scalar output.
    Sum(u32),
}

impl Op {
    fn tag(&self) -> &'static str {
        match self {
            Op::Const => "const",
            Op::Param(_) => "param",
            Op::Matmul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Affine(..) => "affine",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Relu(_) => "relu",
            Op::Exp(_) => "exp",
            Op::Sum(_) => "sum",
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    op: Op,
    off: usize,
    rows: u32,
    cols: u32,
}

/// Append-only op recorder with values stored in one flat arena.
///
/// Nodes are appended in topological order by construction (parents always
/// live at lower offsets), so the backward pass is a single reverse
/// iteration and the forward kernels can split the arena at the output
/// offset. A tape binds parameters from one [`ParamStore`] at a time; reuse
/// it across iterations with [`Tape::clear`] to keep allocations warm.
pub struct Tape {
    nodes: Vec<Node>,
    vals: Vec<f64>,
    adj: Vec<f64>,
    /// Cache of already-bound params: ParamId index -> node index.
    param_nodes: Vec<Option<u32>>,
    bad: Option<(usize, &'static str)>,
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            vals: Vec::new(),
            adj: Vec::new(),
            param_nodes: Vec::new(),
            bad: None,
        }
    }

    /// Drop all nodes but keep buffer capacity.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.vals.clear();
        self.param_nodes.clear();
        self.bad = None;
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let n = &self.nodes[v.idx as usize];
        &self.vals[n.off..n.off + v.len()]
    }

    pub fn scalar(&self, v: Var) -> f64 {
        assert!(v.is_scalar(), "scalar() on {}x{} node", v.rows, v.cols);
        self.vals[self.nodes[v.idx as usize].off]
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize) -> (Var, usize) {
        let off = self.vals.len();
        self.vals.resize(off + rows * cols, 0.0);
        let idx = self.nodes.len() as u32;
        self.nodes.push(Node {
            op,
            off,
            rows: rows as u32,
            cols: cols as u32,
        });
        (
            Var {
                idx,
                rows: rows as u32,
                cols: cols as u32,
            },
            off,
        )
    }

    fn note_finite(&mut self, idx: usize) {
        if self.bad.is_some() {
            return;
        }
        let n = self.nodes[idx];
        let span = &self.vals[n.off..n.off + (n.rows * n.cols) as usize];
        if span.iter().any(|v| !v.is_finite()) {
            self.bad = Some((idx, n.op.tag()));
        }
    }

    pub fn constant(&mut self, rows: usize, cols: usize, data: &[f64]) -> Var {
        assert_eq!(data.len(), rows * cols, "constant size mismatch");
        let (v, off) = self.push(Op::Const, rows, cols);
        self.vals[off..off + data.len()].copy_from_slice(data);
        self.note_finite(v.idx as usize);
        v
    }

    pub fn scalar_const(&mut self, c: f64) -> Var {
        self.constant(1, 1, &[c])
    }

    /// Bind a store parameter onto this tape (cached per tape, so repeated
    /// binds of the same id share one node).
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if self.param_nodes.len() < store.len() {
            self.param_nodes.resize(store.len(), None);
        }
        if let Some(idx) = self.param_nodes[id.0] {
            let n = self.nodes[idx as usize];
            return Var {
                idx,
                rows: n.rows,
                cols: n.cols,
            };
        }
        let (rows, cols) = store.shape(id);
        let (v, off) = self.push(Op::Param(id), rows, cols);
        self.vals[off..off + rows * cols].copy_from_slice(store.value(id));
        self.param_nodes[id.0] = Some(v.idx);
        self.note_finite(v.idx as usize);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(
            a.cols, b.rows,
            "matmul shape mismatch: {}x{} * {}x{}",
            a.rows, a.cols, b.rows, b.cols
        );
        let (m, k, n) = (a.rows(), a.cols(), b.cols());
        let (v, off) = self.push(Op::Matmul(a.idx, b.idx), m, n);
        let ao = self.nodes[a.idx as usize].off;
        let bo = self.nodes[b.idx as usize].off;
        let (src, dst) = self.vals.split_at_mut(off);
        if n == 1 {
            let x = &src[bo..bo + k];
            for i in 0..m {
                let row = &src[ao + i * k..ao + (i + 1) * k];
                dst[i] = row.iter().zip(x).map(|(w, xv)| w * xv).sum();
            }
        } else {
            for i in 0..m {
                for p in 0..k {
                    let av = src[ao + i * k + p];
                    let brow = &src[bo + p * n..bo + (p + 1) * n];
                    for (o, bv) in dst[i * n..(i + 1) * n].iter_mut().zip(brow) {
                        *o += av * bv;
                    }
                }
            }
        }
        self.note_finite(v.idx as usize);
        v
    }

    fn zip_op(&mut self, op: Op, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Var {
        assert!(
            a.rows == b.rows && a.cols == b.cols,
            "{} shape mismatch: {}x{} vs {}x{}",
            op.tag(),
            a.rows,
            a.cols,
            b.rows,
            b.cols
        );
        let (v, off) = self.push(op, a.rows(), a.cols());
        let ao = self.nodes[a.idx as usize].off;
        let bo = self.nodes[b.idx as usize].off;
        let (src, dst) = self.vals.split_at_mut(off);
        for i in 0..v.len() {
            dst[i] = f(src[ao + i], src[bo + i]);
        }
        self.note_finite(v.idx as usize);
        v
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_op(Op::Add(a.idx, b.idx), a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_op(Op::Sub(a.idx, b.idx), a, b, |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_op(Op::Mul(a.idx, b.idx), a, b, |x, y| x * y)
    }

    fn map_op(&mut self, op: Op, a: Var, f: impl Fn(f64) -> f64) -> Var {
        let (v, off) = self.push(op, a.rows(), a.cols());
        let ao = self.nodes[a.idx as usize].off;
        let (src, dst) = self.vals.split_at_mut(off);
        for i in 0..v.len() {
            dst[i] = f(src[ao + i]);
        }
        self.note_finite(v.idx as usize);
        v
    }

    /// `m * a + c` elementwise.
    pub fn affine(&mut self, a: Var, m: f64, c: f64) -> Var {
        self.map_op(Op::Affine(a.idx, m), a, |x| m * x + c)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.affine(a, -1.0, 0.0)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map_op(Op::Sigmoid(a.idx), a, |x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map_op(Op::Tanh(a.idx), a, f64::tanh)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map_op(Op::Relu(a.idx), a, |x| x.max(0.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map_op(Op::Exp(a.idx), a, f64::exp)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let (v, off) = self.push(Op::Sum(a.idx), 1, 1);
        let ao = self.nodes[a.idx as usize].off;
        let (src, dst) = self.vals.split_at_mut(off);
        dst[0] = src[ao..ao + a.len()].iter().sum();
        self.note_finite(v.idx as usize);
        v
    }

    /// Reverse sweep from a scalar root; parameter adjoints are *added*
    /// into `grads`, so callers can accumulate across graphs.
    pub fn backward(&mut self, root: Var, grads: &mut GradBuf) -> Result<(), DiffError> {
        if !root.is_scalar() {
            return Err(DiffError::NonScalarRoot {
                rows: root.rows(),
                cols: root.cols(),
            });
        }
        if let Some((node, op)) = self.bad {
            return Err(DiffError::NonFinite { op, node });
        }
        self.adj.clear();
        self.adj.resize(self.vals.len(), 0.0);
        let root_off = self.nodes[root.idx as usize].off;
        self.adj[root_off] = 1.0;

        for i in (0..=root.idx as usize).rev() {
            let node = self.nodes[i];
            let len = (node.rows * node.cols) as usize;
            let off = node.off;
            match node.op {
                Op::Const => {}
                Op::Param(pid) => {
                    let slot = grads.get_mut(pid);
                    for j in 0..len {
                        slot[j] += self.adj[off + j];
                    }
                }
                Op::Matmul(ai, bi) => {
                    let an = self.nodes[ai as usize];
                    let bn = self.nodes[bi as usize];
                    let (m, k, n) = (an.rows as usize, an.cols as usize, bn.cols as usize);
                    // dA += g * B^T ; dB += A^T * g
                    if n == 1 {
                        for r in 0..m {
                            let g = self.adj[off + r];
                            if g == 0.0 {
                                continue;
                            }
                            let arow = an.off + r * k;
                            for c in 0..k {
                                self.adj[arow + c] += g * self.vals[bn.off + c];
                            }
                            for c in 0..k {
                                self.adj[bn.off + c] += g * self.vals[arow + c];
                            }
                        }
                    } else {
                        for r in 0..m {
                            for j in 0..n {
                                let g = self.adj[off + r * n + j];
                                if g == 0.0 {
                                    continue;
                                }
                                for c in 0..k {
                                    self.adj[an.off + r * k + c] +=
                                        g * self.vals[bn.off + c * n + j];
                                    self.adj[bn.off + c * n + j] +=
                                        g * self.vals[an.off + r * k + c];
                                }
                            }
                        }
                    }
                }
                Op::Add(ai, bi) => {
                    let ao = self.nodes[ai as usize].off;
                    let bo = self.nodes[bi as usize].off;
                    for j in 0..len {
                        let g = self.adj[off + j];
                        self.adj[ao + j] += g;
                        self.adj[bo + j] += g;
                    }
                }
                Op::Sub(ai, bi) => {
                    let ao = self.nodes[ai as usize].off;
                    let bo = self.nodes[bi as usize].off;
                    for j in 0..len {
                        let g = self.adj[off + j];
                        self.adj[ao + j] += g;
                        self.adj[bo + j] -= g;
                    }
                }
                Op::Mul(ai, bi) => {
                    let ao = self.nodes[ai as usize].off;
                    let bo = self.nodes[bi as usize].off;
                    for j in 0..len {
                        let g = self.adj[off + j];
                        self.adj[ao + j] += g * self.vals[bo + j];
                        self.adj[bo + j] += g * self.vals[ao + j];
                    }
                }
                Op::Affine(ai, mcoef) => {
                    let ao = self.nodes[ai as usize].off;
                    for j in 0..len {
                        self.adj[ao + j] += mcoef * self.adj[off + j];
                    }
                }
                Op::Sigmoid(ai) => {
                    let ao = self.nodes[ai as usize].off;
                    for j in 0..len {
                        let y = self.vals[off + j];
                        self.adj[ao + j] += self.adj[off + j] * y * (1.0 - y);
                    }
                }
                Op::Tanh(ai) => {
                    let ao = self.nodes[ai as usize].off;
                    for j in 0..len {
                        let y = self.vals[off + j];
                        self.adj[ao + j] += self.adj[off + j] * (1.0 - y * y);
                    }
                }
                Op::Relu(ai) => {
                    let ao = self.nodes[ai as usize].off;
                    for j in 0..len {
                        if self.vals[off + j] > 0.0 {
                            self.adj[ao + j] += self.adj[off + j];
                        }
                    }
                }
                Op::Exp(ai) => {
                    let ao = self.nodes[ai as usize].off;
                    for j in 0..len {
                        self.adj[ao + j] += self.adj[off + j] * self.vals[off + j];
                    }
                }
                Op::Sum(ai) => {
                    let an = self.nodes[ai as usize];
                    let alen = (an.rows * an.cols) as usize;
                    let g = self.adj[off];
                    if g != 0.0 {
                        for j in 0..alen {
                            self.adj[an.off + j] += g;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}
