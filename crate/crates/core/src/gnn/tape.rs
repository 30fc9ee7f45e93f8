//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! Every op appends one node holding its forward value. `backward` walks the
//! nodes in reverse insertion order, which is a valid topological order.

use std::sync::Arc;

use super::tensor::{SparseMatrix, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    SparseMatMul(Arc<SparseMatrix>, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    MaskMul(Var, Tensor),
    GatherRows(Var, Vec<usize>),
    Sum(Var),
}

#[derive(Debug, Default)]
pub struct Tape {
    values: Vec<Tensor>,
    ops: Vec<Op>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        debug_assert!(value.is_finite(), "non-finite value produced by {op:?}");
        self.values.push(value);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn sparse_matmul(&mut self, s: &Arc<SparseMatrix>, a: Var) -> Var {
        let v = s.matmul(self.value(a));
        self.push(v, Op::SparseMatMul(Arc::clone(s), a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    /// Adds the 1×C row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(bv.rows(), 1, "broadcast operand must be a single row");
        assert_eq!(av.cols(), bv.cols(), "broadcast width mismatch");
        let v = Tensor::from_fn(av.rows(), av.cols(), |r, c| av[(r, c)] + bv[(0, c)]);
        self.push(v, Op::AddRow(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    /// `scale · a + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let v = self.value(a).map(|x| scale * x + shift);
        self.push(v, Op::Affine(a, scale))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    /// Elementwise product with a constant mask.
    pub fn mask_mul(&mut self, a: Var, mask: Tensor) -> Var {
        let v = self.value(a).zip(&mask, |x, m| x * m);
        self.push(v, Op::MaskMul(a, mask))
    }

    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Var {
        let av = self.value(a);
        let v = Tensor::from_fn(rows.len(), av.cols(), |r, c| av[(rows[r], c)]);
        self.push(v, Op::GatherRows(a, rows.to_vec()))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    /// Gradients of `Σ seed ⊙ output` for every node; `None` where no
    /// gradient flows.
    pub fn backward(&self, output: Var, seed: Tensor) -> Gradients {
        assert_eq!(seed.shape(), self.value(output).shape(), "seed shape must match output");
        let mut grads: Vec<Option<Tensor>> = vec![None; self.values.len()];
        grads[output.0] = Some(seed);
        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let acc = |v: Var, t: Tensor, grads: &mut Vec<Option<Tensor>>| match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            };
            match &self.ops[i] {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let da = g.matmul_t(self.value(*b));
                    let db = self.value(*a).t_matmul(&g);
                    acc(*a, da, &mut grads);
                    acc(*b, db, &mut grads);
                }
                Op::SparseMatMul(s, a) => acc(*a, s.t_matmul(&g), &mut grads),
                Op::Add(a, b) => {
                    acc(*a, g.clone(), &mut grads);
                    acc(*b, g, &mut grads);
                }
                Op::AddRow(a, b) => {
                    let mut db = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            db[(0, c)] += g[(r, c)];
                        }
                    }
                    acc(*a, g, &mut grads);
                    acc(*b, db, &mut grads);
                }
                Op::Mul(a, b) => {
                    let da = g.zip(self.value(*b), |x, y| x * y);
                    let db = g.zip(self.value(*a), |x, y| x * y);
                    acc(*a, da, &mut grads);
                    acc(*b, db, &mut grads);
                }
                Op::Affine(a, scale) => acc(*a, g.map(|x| x * scale), &mut grads),
                Op::Relu(a) => {
                    let d = g.zip(&self.values[i], |x, y| if y > 0.0 { x } else { 0.0 });
                    acc(*a, d, &mut grads);
                }
                Op::Sigmoid(a) => {
                    let d = g.zip(&self.values[i], |x, y| x * y * (1.0 - y));
                    acc(*a, d, &mut grads);
                }
                Op::Tanh(a) => {
                    let d = g.zip(&self.values[i], |x, y| x * (1.0 - y * y));
                    acc(*a, d, &mut grads);
                }
                Op::MaskMul(a, mask) => acc(*a, g.zip(mask, |x, m| x * m), &mut grads),
                Op::GatherRows(a, rows) => {
                    let src = self.value(*a);
                    let mut d = Tensor::zeros(src.rows(), src.cols());
                    for (k, &r) in rows.iter().enumerate() {
                        for c in 0..src.cols() {
                            d[(r, c)] += g[(k, c)];
                        }
                    }
                    acc(*a, d, &mut grads);
                }
                Op::Sum(a) => {
                    let s = g[(0, 0)];
                    let src = self.value(*a);
                    acc(*a, Tensor::from_vec(src.rows(), src.cols(), vec![s; src.rows() * src.cols()]), &mut grads);
                }
            }
        }
        Gradients { grads }
    }
}

pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for a leaf, zero-filled when nothing flowed into it.
    pub fn of(&self, tape: &Tape, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let s = tape.value(v).shape();
                Tensor::zeros(s[0], s[1])
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
