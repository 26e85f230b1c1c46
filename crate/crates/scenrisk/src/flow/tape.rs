//! Minimal reverse-mode automatic differentiation over `Array2<f64>`
//! tensors, sized for the flow's training graph.
//!
//! A [`Tape`] records the forward computation as a flat list of nodes; the
//! backward pass walks the list in reverse and accumulates adjoints into
//! the parameter leaves. Gradient reduction order is fixed, so results are
//! reproducible bit for bit.

use ndarray::{Array2, Axis};

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    /// Constant input; receives no gradient.
    Constant,
    /// Trainable parameter leaf, identified by its index in the model's
    /// canonical parameter ordering.
    Param(usize),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    MulElem(NodeId, NodeId),
    /// (n, d) + (1, d) broadcast over rows.
    AddRow(NodeId, NodeId),
    /// (n, d) * (1, d) broadcast over rows.
    MulRow(NodeId, NodeId),
    /// (n, k) @ (k, m).
    MatMul(NodeId, NodeId),
    Relu(NodeId),
    Exp(NodeId),
    /// ln|x|; gradient 1/x.
    LnAbs(NodeId),
    /// Clamp to [lo, hi]; gradient passes only strictly inside.
    Clamp(NodeId, f64, f64),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    /// Elementwise x^p (inputs assumed positive where p is fractional).
    Powf(NodeId, f64),
    /// Column means: (n, d) -> (1, d).
    ColMean(NodeId),
    /// Sum of all entries: (n, d) -> (1, 1).
    SumAll(NodeId),
    /// out[:, k] = in[:, perm[k]].
    PermuteCols(NodeId, Vec<usize>),
}

struct Node {
    op: Op,
    value: Array2<f64>,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, op: Op, value: Array2<f64>) -> NodeId {
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id].value.dim(), (1, 1));
        self.nodes[id].value[[0, 0]]
    }

    pub fn constant(&mut self, v: Array2<f64>) -> NodeId {
        self.push(Op::Constant, v)
    }

    pub fn param(&mut self, index: usize, v: Array2<f64>) -> NodeId {
        self.push(Op::Param(index), v)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = &self.nodes[a].value + &self.nodes[b].value;
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = &self.nodes[a].value - &self.nodes[b].value;
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul_elem(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = &self.nodes[a].value * &self.nodes[b].value;
        self.push(Op::MulElem(a, b), v)
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let shape = self.nodes[a].value.raw_dim();
        let v = &self.nodes[a].value + &self.nodes[row].value.broadcast(shape).expect("row shape");
        self.push(Op::AddRow(a, row), v)
    }

    pub fn mul_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let shape = self.nodes[a].value.raw_dim();
        let v = &self.nodes[a].value * &self.nodes[row].value.broadcast(shape).expect("row shape");
        self.push(Op::MulRow(a, row), v)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.dot(&self.nodes[b].value);
        self.push(Op::MatMul(a, b), v)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.mapv(|x| x.max(0.0));
        self.push(Op::Relu(a), v)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.mapv(f64::exp);
        self.push(Op::Exp(a), v)
    }

    pub fn ln_abs(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.mapv(|x| x.abs().ln());
        self.push(Op::LnAbs(a), v)
    }

    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        let v = self.nodes[a].value.mapv(|x| x.clamp(lo, hi));
        self.push(Op::Clamp(a, lo, hi), v)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.nodes[a].value.mapv(|x| x * c);
        self.push(Op::Scale(a, c), v)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.nodes[a].value.mapv(|x| x + c);
        self.push(Op::AddScalar(a), v)
    }

    pub fn powf(&mut self, a: NodeId, p: f64) -> NodeId {
        let v = self.nodes[a].value.mapv(|x| x.powf(p));
        self.push(Op::Powf(a, p), v)
    }

    pub fn col_mean(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a]
            .value
            .mean_axis(Axis(0))
            .expect("nonempty batch")
            .insert_axis(Axis(0));
        self.push(Op::ColMean(a), v)
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let v = Array2::from_elem((1, 1), self.nodes[a].value.sum());
        self.push(Op::SumAll(a), v)
    }

    pub fn permute_cols(&mut self, a: NodeId, perm: &[usize]) -> NodeId {
        let src = &self.nodes[a].value;
        let mut v = Array2::zeros(src.raw_dim());
        for (k, &p) in perm.iter().enumerate() {
            v.column_mut(k).assign(&src.column(p));
        }
        self.push(Op::PermuteCols(a, perm.to_vec()), v)
    }

    /// Reverse pass from a scalar output node. Returns the gradient for
    /// each parameter index in `0..n_params` (zeros for parameters the
    /// graph never touched, shaped (0, 0) as a placeholder).
    pub fn backward(&self, output: NodeId, n_params: usize) -> Vec<Array2<f64>> {
        assert_eq!(self.nodes[output].value.dim(), (1, 1), "output must be scalar");
        let mut adjoint: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        adjoint[output] = Some(Array2::from_elem((1, 1), 1.0));
        let mut param_grads: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); n_params];

        for id in (0..=output).rev() {
            let g = match adjoint[id].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[id];
            match &node.op {
                Op::Constant => {}
                Op::Param(idx) => {
                    if param_grads[*idx].dim() == (0, 0) {
                        param_grads[*idx] = g;
                    } else {
                        param_grads[*idx] += &g;
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut adjoint, *a, g.clone());
                    accumulate(&mut adjoint, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adjoint, *a, g.clone());
                    accumulate(&mut adjoint, *b, -g);
                }
                Op::MulElem(a, b) => {
                    let ga = &g * &self.nodes[*b].value;
                    let gb = &g * &self.nodes[*a].value;
                    accumulate(&mut adjoint, *a, ga);
                    accumulate(&mut adjoint, *b, gb);
                }
                Op::AddRow(a, row) => {
                    let grow = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut adjoint, *a, g);
                    accumulate(&mut adjoint, *row, grow);
                }
                Op::MulRow(a, row) => {
                    let shape = self.nodes[*a].value.raw_dim();
                    let bvals = self.nodes[*row].value.broadcast(shape).expect("row shape");
                    let ga = &g * &bvals;
                    let grow = (&g * &self.nodes[*a].value)
                        .sum_axis(Axis(0))
                        .insert_axis(Axis(0));
                    accumulate(&mut adjoint, *a, ga);
                    accumulate(&mut adjoint, *row, grow);
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.nodes[*b].value.t());
                    let gb = self.nodes[*a].value.t().dot(&g);
                    accumulate(&mut adjoint, *a, ga);
                    accumulate(&mut adjoint, *b, gb);
                }
                Op::Relu(a) => {
                    let mut ga = g;
                    ga.zip_mut_with(&self.nodes[*a].value, |gv, &x| {
                        if x <= 0.0 {
                            *gv = 0.0;
                        }
                    });
                    accumulate(&mut adjoint, *a, ga);
                }
                Op::Exp(a) => {
                    let ga = &g * &node.value;
                    accumulate(&mut adjoint, *a, ga);
                }
                Op::LnAbs(a) => {
                    let mut ga = g;
                    ga.zip_mut_with(&self.nodes[*a].value, |gv, &x| *gv /= x);
                    accumulate(&mut adjoint, *a, ga);
                }
                Op::Clamp(a, lo, hi) => {
                    let mut ga = g;
                    ga.zip_mut_with(&self.nodes[*a].value, |gv, &x| {
                        if x <= *lo || x >= *hi {
                            *gv = 0.0;
                        }
                    });
                    accumulate(&mut adjoint, *a, ga);
                }
                Op::Scale(a, c) => {
                    accumulate(&mut adjoint, *a, g.mapv(|x| x * c));
                }
                Op::AddScalar(a) => {
                    accumulate(&mut adjoint, *a, g);
                }
                Op::Powf(a, p) => {
                    let mut ga = g;
                    ga.zip_mut_with(&self.nodes[*a].value, |gv, &x| {
                        *gv *= p * x.powf(p - 1.0);
                    });
                    accumulate(&mut adjoint, *a, ga);
                }
                Op::ColMean(a) => {
                    let shape = self.nodes[*a].value.raw_dim();
                    let n = shape[0] as f64;
                    let ga_row = g.mapv(|x| x / n);
                    let ga = ga_row.broadcast(shape).expect("row shape").to_owned();
                    accumulate(&mut adjoint, *a, ga);
                }
                Op::SumAll(a) => {
                    let shape = self.nodes[*a].value.raw_dim();
                    let ga = Array2::from_elem(shape, g[[0, 0]]);
                    accumulate(&mut adjoint, *a, ga);
                }
                Op::PermuteCols(a, perm) => {
                    let mut ga = Array2::zeros(self.nodes[*a].value.raw_dim());
                    for (k, &p) in perm.iter().enumerate() {
                        ga.column_mut(p).assign(&g.column(k));
                    }
                    accumulate(&mut adjoint, *a, ga);
                }
            }
        }
        param_grads
    }
}

fn accumulate(adjoint: &mut [Option<Array2<f64>>], id: NodeId, g: Array2<f64>) {
    match &mut adjoint[id] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}
