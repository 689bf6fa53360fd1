use std::collections::HashMap;

use super::{Gradients, ParamId, ParamStore, Result, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    SliceCols(Var, usize),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normed: Vec<f64>,
        inv_std: Vec<f64>,
    },
    WeightedNll {
        probs: Var,
        gold: Vec<usize>,
        weights: Vec<f64>,
    },
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records a forward computation for reverse-mode differentiation.
///
/// All matrices are treated as `rows x cols` (rank 1 values are one row).
/// Linear maps use the row convention `x · W` with `W` stored `[in, out]`.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant)
    }

    /// Loads a trainable parameter. Repeated loads of the same id return the
    /// same handle, so its gradient is accumulated once per use.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Param(id));
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = ta.as_matrix();
        let (k2, n) = tb.as_matrix();
        if k != k2 {
            return Err(mismatch("matmul", ta, tb));
        }
        let mut out = vec![0.0; m * n];
        matmul_raw(ta.data(), tb.data(), m, k, n, &mut out);
        let value = Tensor::matrix(m, n, out)?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// `a · bᵀ` for `a: [m, k]`, `b: [n, k]`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = ta.as_matrix();
        let (n, k2) = tb.as_matrix();
        if k != k2 {
            return Err(mismatch("matmul_bt", ta, tb));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let ar = &ta.data()[i * k..(i + 1) * k];
            for j in 0..n {
                let br = &tb.data()[j * k..(j + 1) * k];
                out[i * n + j] = ar.iter().zip(br).map(|(x, y)| x * y).sum();
            }
        }
        let value = Tensor::matrix(m, n, out)?;
        Ok(self.push(value, Op::MatMulBt(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.as_matrix() != tb.as_matrix() {
            return Err(mismatch("add", ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    /// Adds a row vector (any shape with `cols(a)` elements) to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.value(a), self.value(row));
        let (m, n) = ta.as_matrix();
        if tr.numel() != n {
            return Err(mismatch("add_row", ta, tr));
        }
        let mut data = ta.data().to_vec();
        for i in 0..m {
            for (o, r) in data[i * n..(i + 1) * n].iter_mut().zip(tr.data()) {
                *o += r;
            }
        }
        let value = Tensor::matrix(m, n, data)?;
        Ok(self.push(value, Op::AddRow(a, row)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| x * factor).collect();
        let value = Tensor {
            shape: ta.shape().to_vec(),
            data,
        };
        self.push(value, Op::Scale(a, factor))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(TensorError::Invalid {
            op: "concat_cols",
            detail: "no inputs".into(),
        })?;
        let m = self.value(*first).rows();
        for p in parts {
            if self.value(*p).rows() != m {
                return Err(mismatch("concat_cols", self.value(*first), self.value(*p)));
            }
        }
        let total: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut data = Vec::with_capacity(m * total);
        for i in 0..m {
            for p in parts {
                data.extend_from_slice(self.value(*p).row_slice(i));
            }
        }
        let value = Tensor::matrix(m, total, data)?;
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(TensorError::Invalid {
            op: "concat_rows",
            detail: "no inputs".into(),
        })?;
        let n = self.value(*first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let t = self.value(*p);
            if t.cols() != n {
                return Err(mismatch("concat_rows", self.value(*first), t));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let value = Tensor::matrix(rows, n, data)?;
        Ok(self.push(value, Op::ConcatRows(parts.to_vec())))
    }

    /// Selects rows by index; indices may repeat.
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let ta = self.value(a);
        let (m, n) = ta.as_matrix();
        if let Some(&bad) = indices.iter().find(|&&i| i >= m) {
            return Err(TensorError::Invalid {
                op: "gather_rows",
                detail: format!("row {bad} out of range for {m} rows"),
            });
        }
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend_from_slice(ta.row_slice(i));
        }
        let value = Tensor::matrix(indices.len(), n, data)?;
        Ok(self.push(value, Op::GatherRows(a, indices.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let ta = self.value(a);
        let (m, n) = ta.as_matrix();
        if width == 0 || start + width > n {
            return Err(TensorError::Invalid {
                op: "slice_cols",
                detail: format!("columns {start}..{} out of range for {n}", start + width),
            });
        }
        let mut data = Vec::with_capacity(m * width);
        for i in 0..m {
            data.extend_from_slice(&ta.row_slice(i)[start..start + width]);
        }
        let value = Tensor::matrix(m, width, data)?;
        Ok(self.push(value, Op::SliceCols(a, start)))
    }

    /// Row-wise softmax, stabilized by subtracting each row's maximum.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let value = softmax_forward(self.value(a), None)?;
        Ok(self.push(value, Op::Softmax(a)))
    }

    /// Row-wise softmax restricted to entries where `mask` is true; masked
    /// entries get probability exactly zero.
    pub fn masked_softmax_rows(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        let ta = self.value(a);
        if mask.len() != ta.numel() {
            return Err(TensorError::Invalid {
                op: "masked_softmax_rows",
                detail: format!("mask has {} entries, input {}", mask.len(), ta.numel()),
            });
        }
        let value = softmax_forward(ta, Some(mask))?;
        // masked entries are zero in the output, so the plain softmax
        // backward rule already yields zero gradient there
        Ok(self.push(value, Op::Softmax(a)))
    }

    /// `gain ⊙ (x − mean) / sqrt(var + eps) + bias` per row, population variance.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let (m, d) = tx.as_matrix();
        if tg.numel() != d {
            return Err(mismatch("layer_norm", tx, tg));
        }
        if tb.numel() != d {
            return Err(mismatch("layer_norm", tx, tb));
        }
        if !(eps > 0.0) {
            return Err(TensorError::Invalid {
                op: "layer_norm",
                detail: format!("eps must be positive, got {eps}"),
            });
        }
        let mut normed = vec![0.0; m * d];
        let mut inv_std = vec![0.0; m];
        let mut out = vec![0.0; m * d];
        for i in 0..m {
            let row = tx.row_slice(i);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[i] = is;
            for j in 0..d {
                let xh = (row[j] - mean) * is;
                normed[i * d + j] = xh;
                out[i * d + j] = tg.data()[j] * xh + tb.data()[j];
            }
        }
        let value = Tensor::matrix(m, d, out)?;
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normed,
                inv_std,
            },
        ))
    }

    /// `−Σ_i weights[gold_i] · log(probs[i, gold_i])` as a scalar.
    pub fn weighted_cross_entropy(&mut self, probs: Var, gold: &[usize], weights: &[f64]) -> Result<Var> {
        let tp = self.value(probs);
        let (m, k) = tp.as_matrix();
        if gold.len() != m {
            return Err(TensorError::Invalid {
                op: "weighted_cross_entropy",
                detail: format!("{} gold labels for {m} rows", gold.len()),
            });
        }
        if weights.len() != k {
            return Err(TensorError::Invalid {
                op: "weighted_cross_entropy",
                detail: format!("{} class weights for {k} classes", weights.len()),
            });
        }
        let mut loss = 0.0;
        for (i, &g) in gold.iter().enumerate() {
            if g >= k {
                return Err(TensorError::GoldOutOfRange {
                    row: i,
                    index: g,
                    classes: k,
                });
            }
            loss -= weights[g] * tp.get(i, g).ln();
        }
        Ok(self.push(
            Tensor::scalar(loss),
            Op::WeightedNll {
                probs,
                gold: gold.to_vec(),
                weights: weights.to_vec(),
            },
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Reverse pass from a scalar `loss`. Parameter gradients are **added**
    /// to `grads`; callers zero the buffer between steps.
    pub fn backward(&self, loss: Var, grads: &mut Gradients) -> Result<()> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(TensorError::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);

        fn acc(adj: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
            adj[v.0].get_or_insert_with(|| vec![0.0; len])
        }

        for idx in (0..=loss.0).rev() {
            let Some(dout) = adj[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => grads.accumulate(*id, &dout)?,
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k) = ta.as_matrix();
                    let n = tb.cols();
                    let da = acc(&mut adj, *a, m * k);
                    for i in 0..m {
                        for p in 0..k {
                            let brow = &tb.data()[p * n..(p + 1) * n];
                            let drow = &dout[i * n..(i + 1) * n];
                            da[i * k + p] += drow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                    let db = acc(&mut adj, *b, k * n);
                    for i in 0..m {
                        let drow = &dout[i * n..(i + 1) * n];
                        for p in 0..k {
                            let av = ta.data()[i * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            for (o, d) in db[p * n..(p + 1) * n].iter_mut().zip(drow) {
                                *o += av * d;
                            }
                        }
                    }
                }
                Op::MatMulBt(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k) = ta.as_matrix();
                    let n = tb.rows();
                    let da = acc(&mut adj, *a, m * k);
                    for i in 0..m {
                        for j in 0..n {
                            let g = dout[i * n + j];
                            for p in 0..k {
                                da[i * k + p] += g * tb.data()[j * k + p];
                            }
                        }
                    }
                    let db = acc(&mut adj, *b, n * k);
                    for i in 0..m {
                        for j in 0..n {
                            let g = dout[i * n + j];
                            for p in 0..k {
                                db[j * k + p] += g * ta.data()[i * k + p];
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        let d = acc(&mut adj, v, dout.len());
                        d.iter_mut().zip(&dout).for_each(|(o, g)| *o += g);
                    }
                }
                Op::AddRow(a, row) => {
                    let da = acc(&mut adj, *a, dout.len());
                    da.iter_mut().zip(&dout).for_each(|(o, g)| *o += g);
                    let n = self.value(*row).numel();
                    let dr = acc(&mut adj, *row, n);
                    for chunk in dout.chunks(n) {
                        dr.iter_mut().zip(chunk).for_each(|(o, g)| *o += g);
                    }
                }
                Op::Scale(a, f) => {
                    let da = acc(&mut adj, *a, dout.len());
                    da.iter_mut().zip(&dout).for_each(|(o, g)| *o += f * g);
                }
                Op::ConcatCols(parts) => {
                    let total = node.value.cols();
                    let m = node.value.rows();
                    let mut offset = 0;
                    for p in parts {
                        let w = self.value(*p).cols();
                        let dp = acc(&mut adj, *p, m * w);
                        for i in 0..m {
                            for j in 0..w {
                                dp[i * w + j] += dout[i * total + offset + j];
                            }
                        }
                        offset += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let len = self.value(*p).numel();
                        let dp = acc(&mut adj, *p, len);
                        dp.iter_mut()
                            .zip(&dout[offset..offset + len])
                            .for_each(|(o, g)| *o += g);
                        offset += len;
                    }
                }
                Op::GatherRows(a, indices) => {
                    let ta = self.value(*a);
                    let n = ta.cols();
                    let da = acc(&mut adj, *a, ta.numel());
                    for (r, &i) in indices.iter().enumerate() {
                        for j in 0..n {
                            da[i * n + j] += dout[r * n + j];
                        }
                    }
                }
                Op::SliceCols(a, start) => {
                    let ta = self.value(*a);
                    let (m, n) = ta.as_matrix();
                    let w = node.value.cols();
                    let da = acc(&mut adj, *a, m * n);
                    for i in 0..m {
                        for j in 0..w {
                            da[i * n + start + j] += dout[i * w + j];
                        }
                    }
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let (m, n) = y.as_matrix();
                    let da = acc(&mut adj, *a, m * n);
                    for i in 0..m {
                        let yr = y.row_slice(i);
                        let dr = &dout[i * n..(i + 1) * n];
                        let dot: f64 = yr.iter().zip(dr).map(|(p, g)| p * g).sum();
                        for j in 0..n {
                            da[i * n + j] += yr[j] * (dr[j] - dot);
                        }
                    }
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    normed,
                    inv_std,
                } => {
                    let tg = self.value(*gain);
                    let (m, d) = node.value.as_matrix();
                    let mut dgain = vec![0.0; d];
                    let mut dbias = vec![0.0; d];
                    let mut dx = vec![0.0; m * d];
                    for i in 0..m {
                        let mut mean_dxh = 0.0;
                        let mut mean_dxh_xh = 0.0;
                        for j in 0..d {
                            let g = dout[i * d + j];
                            let xh = normed[i * d + j];
                            dgain[j] += g * xh;
                            dbias[j] += g;
                            let dxh = g * tg.data()[j];
                            mean_dxh += dxh;
                            mean_dxh_xh += dxh * xh;
                        }
                        mean_dxh /= d as f64;
                        mean_dxh_xh /= d as f64;
                        for j in 0..d {
                            let dxh = dout[i * d + j] * tg.data()[j];
                            let xh = normed[i * d + j];
                            dx[i * d + j] = inv_std[i] * (dxh - mean_dxh - xh * mean_dxh_xh);
                        }
                    }
                    for (v, grad) in [(*x, dx), (*gain, dgain), (*bias, dbias)] {
                        let dv = acc(&mut adj, v, grad.len());
                        dv.iter_mut().zip(&grad).for_each(|(o, g)| *o += g);
                    }
                }
                Op::WeightedNll { probs, gold, weights } => {
                    let tp = self.value(*probs);
                    let k = tp.cols();
                    let dp = acc(&mut adj, *probs, tp.numel());
                    for (i, &g) in gold.iter().enumerate() {
                        dp[i * k + g] -= dout[0] * weights[g] / tp.get(i, g);
                    }
                }
                Op::Sum(a) => {
                    let len = self.value(*a).numel();
                    let da = acc(&mut adj, *a, len);
                    da.iter_mut().for_each(|o| *o += dout[0]);
                }
            }
        }
        Ok(())
    }
}

fn softmax_forward(t: &Tensor, mask: Option<&[bool]>) -> Result<Tensor> {
    let (m, n) = t.as_matrix();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = t.row_slice(i);
        let keep = |j: usize| mask.is_none_or(|mk| mk[i * n + j]);
        let mut max = f64::NEG_INFINITY;
        let mut any = false;
        for (j, &v) in row.iter().enumerate() {
            if !keep(j) {
                continue;
            }
            if !v.is_finite() {
                return Err(TensorError::NonFinite(i));
            }
            any = true;
            max = max.max(v);
        }
        if !any {
            return Err(TensorError::EmptyMask(i));
        }
        let mut z = 0.0;
        for (j, &v) in row.iter().enumerate() {
            if keep(j) {
                let e = (v - max).exp();
                out[i * n + j] = e;
                z += e;
            }
        }
        out[i * n..(i + 1) * n].iter_mut().for_each(|v| *v /= z);
    }
    Tensor::matrix(m, n, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(name: &str, t: Tensor) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add(name, t).unwrap();
        (s, id)
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row(vec![0.0, 0.0]).unwrap());
        let y = tape.softmax_rows(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_single_column_is_one() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(3, 1, vec![-4.0, 0.0, 900.0]).unwrap());
        let y = tape.softmax_rows(x).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn softmax_matches_direct_formula() {
        // exp-normalize of [1,2,3] evaluated without max subtraction
        let z: f64 = (1f64).exp() + (2f64).exp() + (3f64).exp();
        let expected = [(1f64).exp() / z, (2f64).exp() / z, (3f64).exp() / z];
        // frozen values from a 50-digit evaluation
        let frozen = [
            0.090_030_573_170_380_46,
            0.244_728_471_054_797_64,
            0.665_240_955_774_821_9,
        ];
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row(vec![1.0, 2.0, 3.0]).unwrap());
        let y = tape.softmax_rows(x).unwrap();
        for ((got, e), f) in tape.value(y).data().iter().zip(expected).zip(frozen) {
            assert!((got - e).abs() < 1e-15);
            assert!((got - f).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_rejects_non_finite_naming_row() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(2, 2, vec![0.0, 1.0, f64::NAN, 0.0]).unwrap());
        assert_eq!(tape.softmax_rows(x), Err(TensorError::NonFinite(1)));
    }

    #[test]
    fn masked_softmax_zeroes_masked_entries() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(2, 3, vec![1.0, 5.0, 1.0, 2.0, 2.0, 9.0]).unwrap());
        let y = tape
            .masked_softmax_rows(x, &[true, false, true, true, true, false])
            .unwrap();
        assert_eq!(tape.value(y).data(), &[0.5, 0.0, 0.5, 0.5, 0.5, 0.0]);
        let err = tape.masked_softmax_rows(x, &[false; 6]).unwrap_err();
        assert_eq!(err, TensorError::EmptyMask(0));
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row(vec![3.0; 4]).unwrap());
        let g = tape.constant(Tensor::row(vec![1.0; 4]).unwrap());
        let b = tape.constant(Tensor::row(vec![0.0; 4]).unwrap());
        let y = tape.layer_norm(x, g, b, 1e-5).unwrap();
        assert!(tape.value(y).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn layer_norm_already_normalized_row() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row(vec![-1.0, 1.0]).unwrap());
        let g = tape.constant(Tensor::row(vec![1.0; 2]).unwrap());
        let b = tape.constant(Tensor::row(vec![0.0; 2]).unwrap());
        let y = tape.layer_norm(x, g, b, 1e-12).unwrap();
        let d = tape.value(y).data();
        assert!((d[0] + 1.0).abs() < 1e-11 && (d[1] - 1.0).abs() < 1e-11);
    }

    #[test]
    fn layer_norm_matches_scalar_recomputation() {
        let row = [0.3, -1.2, 2.5, 0.7, -0.1];
        let gain = [1.5, 0.5, -1.0, 2.0, 1.0];
        let bias = [0.1, 0.0, -0.2, 0.3, 0.5];
        let eps = 1e-5;
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row(row.to_vec()).unwrap());
        let g = tape.constant(Tensor::row(gain.to_vec()).unwrap());
        let b = tape.constant(Tensor::row(bias.to_vec()).unwrap());
        let y = tape.layer_norm(x, g, b, eps).unwrap();
        let mean = row.iter().sum::<f64>() / 5.0;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 5.0;
        for j in 0..5 {
            let expect = gain[j] * (row[j] - mean) / (var + eps).sqrt() + bias[j];
            assert!((tape.value(y).data()[j] - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn layer_norm_shape_mismatch_is_error() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row(vec![1.0, 2.0, 3.0]).unwrap());
        let g = tape.constant(Tensor::row(vec![1.0; 2]).unwrap());
        let b = tape.constant(Tensor::row(vec![0.0; 3]).unwrap());
        assert!(matches!(
            tape.layer_norm(x, g, b, 1e-5),
            Err(TensorError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn cross_entropy_cases() {
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::row(vec![0.0, 1.0]).unwrap());
        let l = tape.weighted_cross_entropy(p, &[1], &[1.0, 1.0]).unwrap();
        assert_eq!(tape.value(l).data()[0], 0.0);

        let p = tape.constant(Tensor::row(vec![0.25; 4]).unwrap());
        let l = tape.weighted_cross_entropy(p, &[2], &[1.0; 4]).unwrap();
        assert!((tape.value(l).data()[0] - 4f64.ln()).abs() < 1e-15);

        // two rows, weights [0.25, 0.75]
        let p = tape.constant(Tensor::matrix(2, 2, vec![0.8, 0.2, 0.3, 0.7]).unwrap());
        let l = tape.weighted_cross_entropy(p, &[0, 1], &[0.25, 0.75]).unwrap();
        let hand = -(0.25 * 0.8f64.ln()) - 0.75 * 0.7f64.ln();
        assert!((tape.value(l).data()[0] - hand).abs() < 1e-15);
        // frozen from a 50-digit evaluation
        assert!((tape.value(l).data()[0] - 0.323_292_095_782_601_7).abs() < 1e-12);

        assert!(matches!(
            tape.weighted_cross_entropy(p, &[0, 2], &[0.25, 0.75]),
            Err(TensorError::GoldOutOfRange { index: 2, .. })
        ));
    }

    #[test]
    fn linear_map_gradient_is_input_broadcast() {
        let (store, w) = store_with("W", Tensor::matrix(3, 2, vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.6]).unwrap());
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row(vec![1.0, 2.0, 3.0]).unwrap());
        let wv = tape.param(&store, w);
        let y = tape.matmul(x, wv).unwrap();
        let loss = tape.sum(y);
        let mut grads = Gradients::new(&store);
        tape.backward(loss, &mut grads).unwrap();
        assert_eq!(grads.get(w).data(), &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
    }

    #[test]
    fn unreachable_param_keeps_zero_gradient() {
        let mut store = ParamStore::new();
        let used = store.add("used", Tensor::row(vec![1.0, 2.0]).unwrap()).unwrap();
        let unused = store.add("unused", Tensor::row(vec![3.0]).unwrap()).unwrap();
        let mut tape = Tape::new();
        let u = tape.param(&store, used);
        let _ = tape.param(&store, unused);
        let loss = tape.sum(u);
        let mut grads = Gradients::new(&store);
        tape.backward(loss, &mut grads).unwrap();
        assert_eq!(grads.get(unused).data(), &[0.0]);
        assert_eq!(grads.get(used).data(), &[1.0, 1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row(vec![1.0, 2.0]).unwrap());
        let store = ParamStore::new();
        let mut grads = Gradients::new(&store);
        assert!(matches!(
            tape.backward(x, &mut grads),
            Err(TensorError::NonScalarLoss(_))
        ));
    }

    #[test]
    fn repeated_backward_accumulates() {
        let (store, w) = store_with("w", Tensor::row(vec![2.0]).unwrap());
        let mut tape = Tape::new();
        let wv = tape.param(&store, w);
        let loss = tape.scale(wv, 3.0);
        let mut grads = Gradients::new(&store);
        tape.backward(loss, &mut grads).unwrap();
        tape.backward(loss, &mut grads).unwrap();
        assert_eq!(grads.get(w).data(), &[6.0]);
        grads.zero();
        assert_eq!(grads.get(w).data(), &[0.0]);
    }
}
