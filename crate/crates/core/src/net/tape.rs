//! Minimal reverse-mode differentiation over dense matrices.

use ndarray::{s, Array2, Axis};

pub(crate) type Mat = Array2<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Var(pub(crate) usize);

/// Backward rule of a custom operation: given the output gradient, return
/// the gradient of each input in order.
pub(crate) type Backward = Box<dyn Fn(&Mat) -> Vec<Mat>>;

enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `x + bias` with a 1×m bias added to every row.
    AddRow(Var, Var),
    Relu(Var),
    /// Column-wise maximum over rows; keeps the winning row per column.
    MaxRows(Var, Vec<usize>),
    ConcatCols(Var, Var),
    ConcatRows(Vec<Var>),
    /// Rows of the input picked by index, repeats allowed.
    Gather(Var, Vec<usize>),
    /// `a + k b` for same-shaped operands.
    Axpy(Var, Var, f64),
    Custom(Vec<Var>, Backward),
}

#[derive(Default)]
pub(crate) struct Tape {
    values: Vec<Mat>,
    ops: Vec<Op>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.values.push(value);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.values[v.0]
    }

    pub fn leaf(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add_row(&mut self, x: Var, bias: Var) -> Var {
        let v = self.value(x) + self.value(bias);
        self.push(v, Op::AddRow(x, bias))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(|t| t.max(0.0));
        self.push(v, Op::Relu(x))
    }

    pub fn max_rows(&mut self, x: Var) -> Var {
        let m = self.value(x);
        let mut arg = vec![0usize; m.ncols()];
        let mut out = Mat::zeros((1, m.ncols()));
        for (j, col) in m.axis_iter(Axis(1)).enumerate() {
            let mut best = f64::NEG_INFINITY;
            for (i, &t) in col.iter().enumerate() {
                if t > best {
                    best = t;
                    arg[j] = i;
                }
            }
            out[[0, j]] = best;
        }
        self.push(out, Op::MaxRows(x, arg))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let v = ndarray::concatenate(Axis(1), &[self.value(a).view(), self.value(b).view()]).expect("row counts match");
        self.push(v, Op::ConcatCols(a, b))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("column counts match");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn gather(&mut self, x: Var, rows: &[usize]) -> Var {
        let v = self.value(x).select(Axis(0), rows);
        self.push(v, Op::Gather(x, rows.to_vec()))
    }

    pub fn axpy(&mut self, a: Var, b: Var, k: f64) -> Var {
        let v = self.value(a) + &(self.value(b) * k);
        self.push(v, Op::Axpy(a, b, k))
    }

    pub fn custom(&mut self, inputs: &[Var], value: Mat, backward: Backward) -> Var {
        self.push(value, Op::Custom(inputs.to_vec(), backward))
    }

    /// Gradients of the scalar `root` with respect to every node; `None`
    /// for nodes it does not depend on.
    pub fn backward(&self, root: Var) -> Vec<Option<Mat>> {
        assert_eq!(self.value(root).len(), 1, "backward needs a scalar root");
        let mut grads: Vec<Option<Mat>> = vec![None; self.values.len()];
        grads[root.0] = Some(Mat::ones((1, 1)));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let mut add = |v: Var, d: Mat| match &mut grads[v.0] {
                Some(acc) => *acc += &d,
                slot => *slot = Some(d),
            };
            match &self.ops[i] {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    add(*a, g.dot(&self.value(*b).t()));
                    add(*b, self.value(*a).t().dot(&g));
                }
                Op::AddRow(x, bias) => {
                    add(*bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    add(*x, g.clone());
                }
                Op::Relu(x) => {
                    let mut d = g.clone();
                    d.zip_mut_with(self.value(*x), |d, &t| {
                        if t <= 0.0 {
                            *d = 0.0;
                        }
                    });
                    add(*x, d);
                }
                Op::MaxRows(x, arg) => {
                    let mut d = Mat::zeros(self.value(*x).raw_dim());
                    for (j, &r) in arg.iter().enumerate() {
                        d[[r, j]] = g[[0, j]];
                    }
                    add(*x, d);
                }
                Op::ConcatCols(a, b) => {
                    let na = self.value(*a).ncols();
                    add(*a, g.slice(s![.., ..na]).to_owned());
                    add(*b, g.slice(s![.., na..]).to_owned());
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let n = self.value(*p).nrows();
                        add(*p, g.slice(s![start..start + n, ..]).to_owned());
                        start += n;
                    }
                }
                Op::Gather(x, rows) => {
                    let mut d = Mat::zeros(self.value(*x).raw_dim());
                    for (k, &r) in rows.iter().enumerate() {
                        let mut dst = d.row_mut(r);
                        dst += &g.row(k);
                    }
                    add(*x, d);
                }
                Op::Axpy(a, b, k) => {
                    add(*b, &g * *k);
                    add(*a, g.clone());
                }
                Op::Custom(inputs, back) => {
                    for (v, d) in inputs.iter().zip(back(&g)) {
                        add(*v, d);
                    }
                }
            }
            grads[i] = Some(g);
        }
        grads
    }
}
