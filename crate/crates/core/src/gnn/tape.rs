//! Reverse-mode differentiation over dense row-major matrices.
//!
//! Every operation records its inputs on a [`Tape`]; [`Tape::backward`]
//! walks the record in reverse, accumulating gradients into the parameter
//! tensors that fed the computation.

use ndarray::{concatenate, Array2, ArrayView2, Axis};

pub type Mat = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Const,
    Param(usize),
    Embed { param: usize, idx: Vec<usize> },
    Gather { x: Var, idx: Vec<usize> },
    ScatterSum { x: Var, idx: Vec<usize> },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    OnePlusScale { x: Var, s: Var },
    RowScale { x: Var, s: Var },
    Elu(Var),
    LeakyRelu(Var, f64),
    SegmentSoftmax { x: Var, seg: Vec<usize> },
    SegmentMax { x: Var, arg: Vec<Vec<usize>> },
    BceWithLogits { z: Var, y: Vec<f64> },
}

#[derive(Default)]
pub struct Tape {
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

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Const)
    }

    /// Records parameter tensor `index` (read from `params`) as a leaf.
    pub fn param(&mut self, params: &[Mat], index: usize) -> Var {
        self.push(params[index].clone(), Op::Param(index))
    }

    /// Rows `idx` of parameter table `index`, without copying the table.
    pub fn embed(&mut self, params: &[Mat], index: usize, idx: Vec<usize>) -> Var {
        let value = params[index].select(Axis(0), &idx);
        self.push(value, Op::Embed { param: index, idx })
    }

    /// `out[e] = x[idx[e]]`.
    pub fn gather(&mut self, x: Var, idx: Vec<usize>) -> Var {
        let value = self.values[x.0].select(Axis(0), &idx);
        self.push(value, Op::Gather { x, idx })
    }

    /// `out[idx[e]] += x[e]` over `rows` output rows.
    pub fn scatter_sum(&mut self, x: Var, idx: Vec<usize>, rows: usize) -> Var {
        let xv = &self.values[x.0];
        assert_eq!(xv.nrows(), idx.len());
        let mut out = Mat::zeros((rows, xv.ncols()));
        for (e, &t) in idx.iter().enumerate() {
            out.row_mut(t).scaled_add(1.0, &xv.row(e));
        }
        self.push(out, Op::ScatterSum { x, idx })
    }

    pub fn concat_rows(&mut self, xs: Vec<Var>) -> Var {
        let views: Vec<ArrayView2<f64>> = xs.iter().map(|v| self.values[v.0].view()).collect();
        let value = concatenate(Axis(0), &views).expect("column counts agree");
        self.push(value, Op::ConcatRows(xs))
    }

    pub fn concat_cols(&mut self, xs: Vec<Var>) -> Var {
        let views: Vec<ArrayView2<f64>> = xs.iter().map(|v| self.values[v.0].view()).collect();
        let value = concatenate(Axis(1), &views).expect("row counts agree");
        self.push(value, Op::ConcatCols(xs))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.values[a.0].dot(&self.values[b.0]);
        self.push(value, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = &self.values[a.0] + &self.values[b.0];
        self.push(value, Op::Add(a, b))
    }

    /// Adds the `1 x d` row `bias` to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Var {
        let value = &self.values[x.0] + &self.values[bias.0];
        self.push(value, Op::AddRow(x, bias))
    }

    /// `(1 + s) * x` for a `1 x 1` variable `s`.
    pub fn one_plus_scale(&mut self, x: Var, s: Var) -> Var {
        let k = 1.0 + self.values[s.0][[0, 0]];
        let value = &self.values[x.0] * k;
        self.push(value, Op::OnePlusScale { x, s })
    }

    /// Multiplies row `e` of `x` by `s[e, 0]`.
    pub fn row_scale(&mut self, x: Var, s: Var) -> Var {
        let value = &self.values[x.0] * &self.values[s.0];
        self.push(value, Op::RowScale { x, s })
    }

    pub fn elu(&mut self, x: Var) -> Var {
        let value = self.values[x.0].mapv(|v| if v > 0.0 { v } else { v.exp_m1() });
        self.push(value, Op::Elu(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let value = self.values[x.0].mapv(|v| if v > 0.0 { v } else { slope * v });
        self.push(value, Op::LeakyRelu(x, slope))
    }

    /// Softmax of the column vector `x` within each group of equal `seg`.
    pub fn segment_softmax(&mut self, x: Var, seg: Vec<usize>) -> Var {
        let xv = &self.values[x.0];
        assert_eq!(xv.ncols(), 1);
        let groups = seg.iter().max().map_or(0, |m| m + 1);
        let mut max = vec![f64::NEG_INFINITY; groups];
        for (e, &g) in seg.iter().enumerate() {
            max[g] = max[g].max(xv[[e, 0]]);
        }
        let mut value = Mat::zeros((seg.len(), 1));
        let mut sum = vec![0.0; groups];
        for (e, &g) in seg.iter().enumerate() {
            let ex = (xv[[e, 0]] - max[g]).exp();
            value[[e, 0]] = ex;
            sum[g] += ex;
        }
        for (e, &g) in seg.iter().enumerate() {
            value[[e, 0]] /= sum[g];
        }
        self.push(value, Op::SegmentSoftmax { x, seg })
    }

    /// Column-wise maximum of the rows of `x` within each of `groups` segments.
    pub fn segment_max(&mut self, x: Var, seg: &[usize], groups: usize) -> Var {
        let xv = &self.values[x.0];
        let cols = xv.ncols();
        let mut arg: Vec<Vec<usize>> = vec![vec![usize::MAX; cols]; groups];
        let mut value = Mat::from_elem((groups, cols), f64::NEG_INFINITY);
        for (e, &g) in seg.iter().enumerate() {
            for c in 0..cols {
                if xv[[e, c]] > value[[g, c]] {
                    value[[g, c]] = xv[[e, c]];
                    arg[g][c] = e;
                }
            }
        }
        value.mapv_inplace(|v| if v.is_finite() { v } else { 0.0 });
        self.push(value, Op::SegmentMax { x, arg })
    }

    /// Mean binary cross-entropy of logits `z` (a column) against targets `y`.
    pub fn bce_with_logits(&mut self, z: Var, y: Vec<f64>) -> Var {
        let zv = &self.values[z.0];
        assert_eq!(zv.nrows(), y.len());
        let n = y.len().max(1) as f64;
        let total: f64 =
            zv.column(0).iter().zip(&y).map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()).sum();
        self.push(Mat::from_elem((1, 1), total / n), Op::BceWithLogits { z, y })
    }

    /// Gradients of the scalar `loss` with respect to each tensor in `params`.
    pub fn backward(&self, loss: Var, params: &[Mat]) -> Vec<Mat> {
        let mut grads: Vec<Option<Mat>> = (0..self.values.len()).map(|_| None).collect();
        let mut out: Vec<Mat> = params.iter().map(|p| Mat::zeros(p.raw_dim())).collect();
        grads[loss.0] = Some(Mat::ones(self.values[loss.0].raw_dim()));

        fn acc(grads: &mut [Option<Mat>], v: Var, g: Mat) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.ops[i] {
                Op::Const => {}
                Op::Param(p) => out[*p] += &g,
                Op::Embed { param, idx } => {
                    for (e, &r) in idx.iter().enumerate() {
                        out[*param].row_mut(r).scaled_add(1.0, &g.row(e));
                    }
                }
                Op::Gather { x, idx } => {
                    let mut gx = Mat::zeros(self.values[x.0].raw_dim());
                    for (e, &r) in idx.iter().enumerate() {
                        gx.row_mut(r).scaled_add(1.0, &g.row(e));
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::ScatterSum { x, idx } => {
                    let gx = g.select(Axis(0), idx);
                    acc(&mut grads, *x, gx);
                }
                Op::ConcatRows(xs) => {
                    let mut at = 0;
                    for x in xs {
                        let n = self.values[x.0].nrows();
                        acc(&mut grads, *x, g.slice(ndarray::s![at..at + n, ..]).to_owned());
                        at += n;
                    }
                }
                Op::ConcatCols(xs) => {
                    let mut at = 0;
                    for x in xs {
                        let n = self.values[x.0].ncols();
                        acc(&mut grads, *x, g.slice(ndarray::s![.., at..at + n]).to_owned());
                        at += n;
                    }
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.values[b.0].t());
                    let gb = self.values[a.0].t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::AddRow(x, bias) => {
                    acc(&mut grads, *bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, *x, g);
                }
                Op::OnePlusScale { x, s } => {
                    let k = 1.0 + self.values[s.0][[0, 0]];
                    let gs = (&g * &self.values[x.0]).sum();
                    acc(&mut grads, *s, Mat::from_elem((1, 1), gs));
                    acc(&mut grads, *x, g * k);
                }
                Op::RowScale { x, s } => {
                    let gs = (&g * &self.values[x.0]).sum_axis(Axis(1)).insert_axis(Axis(1));
                    let gx = &g * &self.values[s.0];
                    acc(&mut grads, *s, gs);
                    acc(&mut grads, *x, gx);
                }
                Op::Elu(x) => {
                    let mut gx = g;
                    gx.zip_mut_with(&self.values[x.0], |gv, &xv| {
                        if xv <= 0.0 {
                            *gv *= xv.exp();
                        }
                    });
                    acc(&mut grads, *x, gx);
                }
                Op::LeakyRelu(x, slope) => {
                    let mut gx = g;
                    gx.zip_mut_with(&self.values[x.0], |gv, &xv| {
                        if xv <= 0.0 {
                            *gv *= slope;
                        }
                    });
                    acc(&mut grads, *x, gx);
                }
                Op::SegmentSoftmax { x, seg } => {
                    let y = &self.values[i];
                    let groups = seg.iter().max().map_or(0, |m| m + 1);
                    let mut dot = vec![0.0; groups];
                    for (e, &s) in seg.iter().enumerate() {
                        dot[s] += g[[e, 0]] * y[[e, 0]];
                    }
                    let mut gx = Mat::zeros(y.raw_dim());
                    for (e, &s) in seg.iter().enumerate() {
                        gx[[e, 0]] = y[[e, 0]] * (g[[e, 0]] - dot[s]);
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::SegmentMax { x, arg } => {
                    let mut gx = Mat::zeros(self.values[x.0].raw_dim());
                    for (s, cols) in arg.iter().enumerate() {
                        for (c, &e) in cols.iter().enumerate() {
                            if e != usize::MAX {
                                gx[[e, c]] += g[[s, c]];
                            }
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::BceWithLogits { z, y } => {
                    let zv = &self.values[z.0];
                    let n = y.len().max(1) as f64;
                    let mut gz = Mat::zeros(zv.raw_dim());
                    for (e, &t) in y.iter().enumerate() {
                        gz[[e, 0]] = g[[0, 0]] * (sigmoid(zv[[e, 0]]) - t) / n;
                    }
                    acc(&mut grads, *z, gz);
                }
            }
        }
        out
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn matmul_gradient_matches_closed_form() {
        let params = vec![array![[1.0, 2.0], [3.0, 4.0]], array![[0.5], [-1.0]]];
        let mut t = Tape::new();
        let a = t.param(&params, 0);
        let b = t.param(&params, 1);
        let c = t.matmul(a, b);
        let loss = t.bce_with_logits(c, vec![1.0, 0.0]);
        let g = t.backward(loss, &params);
        let z = t.value(c).clone();
        let d0 = (sigmoid(z[[0, 0]]) - 1.0) / 2.0;
        let d1 = sigmoid(z[[1, 0]]) / 2.0;
        assert!((g[1][[0, 0]] - (d0 * 1.0 + d1 * 3.0)).abs() < 1e-12);
        assert!((g[0][[1, 1]] - -d1).abs() < 1e-12);
    }

    #[test]
    fn bce_at_even_odds_is_ln_two() {
        let mut t = Tape::new();
        let z = t.constant(Mat::zeros((1, 1)));
        let loss = t.bce_with_logits(z, vec![1.0]);
        assert!((t.value(loss)[[0, 0]] - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn segment_softmax_sums_to_one_per_group() {
        let mut t = Tape::new();
        let x = t.constant(array![[1.0], [2.0], [-3.0], [0.5], [7.0]]);
        let y = t.segment_softmax(x, vec![0, 1, 0, 1, 2]);
        let v = t.value(y);
        assert!((v[[0, 0]] + v[[2, 0]] - 1.0).abs() < 1e-15);
        assert!((v[[1, 0]] + v[[3, 0]] - 1.0).abs() < 1e-15);
        assert_eq!(v[[4, 0]], 1.0);
    }
}
