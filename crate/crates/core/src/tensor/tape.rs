use super::dense::{gelu, gelu_grad, log_softmax_row, mismatch, softmax_row, Tensor, TensorError};
use super::param::{ParamId, ParamStore};
use std::cell::{Ref, RefCell};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

const LAYER_NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    Scale(usize, f64),
    Transpose(usize),
    Concat { parts: Vec<usize>, axis: usize },
    Slice { input: usize, axis: usize, start: usize },
    Gather { table: usize, indices: Vec<usize> },
    Softmax(usize),
    LogSoftmax(usize),
    CrossEntropy { logits: usize, targets: Vec<usize> },
    LayerNorm { x: usize, gain: usize, bias: usize },
    Gelu(usize),
    Exp(usize),
    Sum(usize),
    Rbf { dist: Arc<Tensor>, sigma: usize },
    RowNormalize(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

/// Records operations in execution order for reverse-mode differentiation.
///
/// Element-wise binary ops need equal shapes. `add_row` and `mul_row`
/// broadcast a vector of length `cols` over every row of a matrix.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    params: RefCell<BTreeMap<ParamId, Var>>,
}

/// Gradients produced by one backward pass.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    leaves: BTreeMap<usize, Tensor>,
    params: Vec<(ParamId, Tensor)>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.leaves.get(&v.0)
    }

    pub fn params(&self) -> &[(ParamId, Tensor)] {
        &self.params
    }
}

fn unbroadcast_rows(g: &Tensor, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for row in g.data.chunks(cols) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, value: Tensor, op: Op, tracked: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op, tracked });
        Var(nodes.len() - 1)
    }

    fn tracked(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|i| nodes[*i].tracked)
    }

    fn record(&self, inputs: &[usize], op: Op, f: impl FnOnce(&[Node]) -> Result<Tensor, TensorError>) -> Result<Var, TensorError> {
        let value = f(&self.nodes.borrow())?;
        let tracked = self.tracked(inputs);
        Ok(self.push(value, op, tracked))
    }

    /// A value that receives a gradient.
    pub fn leaf(&self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A value that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// The parameter `id` as a tracked leaf, recorded once per tape.
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(v) = self.params.borrow().get(&id) {
            return *v;
        }
        let v = self.leaf(store.value(id).clone());
        self.params.borrow_mut().insert(id, v);
        v
    }

    pub fn value(&self, v: Var) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape.clone()
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.record(&[a.0, b.0], Op::MatMul(a.0, b.0), |n| n[a.0].value.matmul(&n[b.0].value))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.record(&[a.0, b.0], Op::Add(a.0, b.0), |n| n[a.0].value.add(&n[b.0].value))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.record(&[a.0, b.0], Op::Sub(a.0, b.0), |n| n[a.0].value.sub(&n[b.0].value))
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.record(&[a.0, b.0], Op::Mul(a.0, b.0), |n| n[a.0].value.mul(&n[b.0].value))
    }

    fn row_op(&self, a: Var, r: Var, op: Op, name: &'static str, f: fn(f64, f64) -> f64) -> Result<Var, TensorError> {
        self.record(&[a.0, r.0], op, |n| {
            let (x, row) = (&n[a.0].value, &n[r.0].value);
            let cols = x.dims2().1;
            if row.len() != cols || x.shape.len() != 2 {
                return Err(mismatch(name, x, row));
            }
            let mut out = x.clone();
            for chunk in out.data.chunks_mut(cols) {
                for (o, b) in chunk.iter_mut().zip(&row.data) {
                    *o = f(*o, *b);
                }
            }
            Ok(out)
        })
    }

    /// Adds the vector `r` to every row of the matrix `a`.
    pub fn add_row(&self, a: Var, r: Var) -> Result<Var, TensorError> {
        self.row_op(a, r, Op::AddRow(a.0, r.0), "add_row", |x, b| x + b)
    }

    /// Multiplies every row of the matrix `a` element-wise by the vector `r`.
    pub fn mul_row(&self, a: Var, r: Var) -> Result<Var, TensorError> {
        self.row_op(a, r, Op::MulRow(a.0, r.0), "mul_row", |x, b| x * b)
    }

    pub fn scale(&self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        let tracked = self.tracked(&[a.0]);
        self.push(value, Op::Scale(a.0, s), tracked)
    }

    pub fn transpose(&self, a: Var) -> Result<Var, TensorError> {
        self.record(&[a.0], Op::Transpose(a.0), |n| n[a.0].value.transpose())
    }

    /// Joins matrices along `axis` (0 stacks rows, 1 appends columns).
    pub fn concat(&self, parts: &[Var], axis: usize) -> Result<Var, TensorError> {
        let ids: Vec<usize> = parts.iter().map(|v| v.0).collect();
        if ids.is_empty() {
            return Err(TensorError::Rank { op: "concat", expected: "at least one part", shape: Vec::new() });
        }
        self.record(&ids, Op::Concat { parts: ids.clone(), axis }, |n| {
            let first = &n[ids[0]].value;
            let (r0, c0) = first.dims2();
            let mut rows = 0;
            let mut cols = 0;
            for &i in &ids {
                let t = &n[i].value;
                let (r, c) = t.dims2();
                if t.shape.len() != 2 || (axis == 0 && c != c0) || (axis == 1 && r != r0) || axis > 1 {
                    return Err(mismatch("concat", first, t));
                }
                rows += r;
                cols += c;
            }
            if axis == 0 {
                let data = ids.iter().flat_map(|i| n[*i].value.data.iter().copied()).collect();
                Tensor::matrix(rows, c0, data)
            } else {
                let mut data = Vec::with_capacity(r0 * cols);
                for row in 0..r0 {
                    for &i in &ids {
                        data.extend_from_slice(n[i].value.row(row));
                    }
                }
                Tensor::matrix(r0, cols, data)
            }
        })
    }

    /// Rows (`axis` 0) or columns (`axis` 1) `start..end` of a matrix.
    pub fn slice(&self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var, TensorError> {
        self.record(&[a.0], Op::Slice { input: a.0, axis, start }, |n| {
            let t = &n[a.0].value;
            let (r, c) = t.dims2();
            let limit = if axis == 0 { r } else { c };
            if t.shape.len() != 2 || axis > 1 || start > end || end > limit {
                return Err(TensorError::Shape { op: "slice", left: t.shape.clone(), right: vec![start, end] });
            }
            if axis == 0 {
                Tensor::matrix(end - start, c, t.data[start * c..end * c].to_vec())
            } else {
                let mut data = Vec::with_capacity(r * (end - start));
                for row in 0..r {
                    data.extend_from_slice(&t.row(row)[start..end]);
                }
                Tensor::matrix(r, end - start, data)
            }
        })
    }

    /// Rows of `table` at `indices`; gradients scatter back additively.
    pub fn embedding_lookup(&self, table: Var, indices: &[usize]) -> Result<Var, TensorError> {
        let op = Op::Gather { table: table.0, indices: indices.to_vec() };
        self.record(&[table.0], op, |n| n[table.0].value.gather_rows(indices))
    }

    /// Softmax over the last axis.
    pub fn softmax(&self, a: Var) -> Result<Var, TensorError> {
        self.record(&[a.0], Op::Softmax(a.0), |n| n[a.0].value.map_rows("softmax", softmax_row))
    }

    pub fn log_softmax(&self, a: Var) -> Result<Var, TensorError> {
        self.record(&[a.0], Op::LogSoftmax(a.0), |n| n[a.0].value.map_rows("log_softmax", log_softmax_row))
    }

    /// Mean cross-entropy of row-wise logits against class indices; a scalar.
    pub fn cross_entropy(&self, logits: Var, targets: &[usize]) -> Result<Var, TensorError> {
        let op = Op::CrossEntropy { logits: logits.0, targets: targets.to_vec() };
        self.record(&[logits.0], op, |n| Ok(Tensor::scalar(n[logits.0].value.cross_entropy(targets)?)))
    }

    /// Normalizes each row to mean 0 and variance 1, then applies `gain`
    /// and `bias`.
    pub fn layer_norm(&self, x: Var, gain: Var, bias: Var) -> Result<Var, TensorError> {
        let op = Op::LayerNorm { x: x.0, gain: gain.0, bias: bias.0 };
        self.record(&[x.0, gain.0, bias.0], op, |n| {
            let (t, g, b) = (&n[x.0].value, &n[gain.0].value, &n[bias.0].value);
            let cols = t.dims2().1;
            if g.len() != cols || b.len() != cols {
                return Err(mismatch("layer_norm", t, g));
            }
            t.map_rows("layer_norm", |row, out| {
                let (mean, inv) = row_stats(row);
                for (k, o) in out.iter_mut().enumerate() {
                    *o = (row[k] - mean) * inv * g.data[k] + b.data[k];
                }
            })
        })
    }

    pub fn gelu(&self, a: Var) -> Var {
        let value = self.value(a).map(gelu);
        let tracked = self.tracked(&[a.0]);
        self.push(value, Op::Gelu(a.0), tracked)
    }

    pub fn exp(&self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        let tracked = self.tracked(&[a.0]);
        self.push(value, Op::Exp(a.0), tracked)
    }

    /// Sum of all entries; a scalar.
    pub fn sum(&self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        let tracked = self.tracked(&[a.0]);
        self.push(value, Op::Sum(a.0), tracked)
    }

    /// Gaussian kernel `exp(-d² / (2σ²))` of a constant distance matrix with
    /// a scalar bandwidth; infinite distances give 0.
    pub fn rbf(&self, dist: Arc<Tensor>, sigma: Var) -> Result<Var, TensorError> {
        let op = Op::Rbf { dist: Arc::clone(&dist), sigma: sigma.0 };
        self.record(&[sigma.0], op, |n| {
            let s = &n[sigma.0].value;
            if s.len() != 1 {
                return Err(TensorError::Rank { op: "rbf", expected: "a scalar bandwidth", shape: s.shape.clone() });
            }
            let s2 = 2.0 * s.item() * s.item();
            Ok(dist.map(|d| if d.is_finite() { (-d * d / s2).exp() } else { 0.0 }))
        })
    }

    /// Divides each row by its sum. A row summing to zero becomes one-hot on
    /// the diagonal so every token still attends to itself.
    pub fn row_normalize(&self, a: Var) -> Result<Var, TensorError> {
        self.record(&[a.0], Op::RowNormalize(a.0), |n| {
            let t = &n[a.0].value;
            let mut out = t.map_rows("row_normalize", |row, out| {
                let total: f64 = row.iter().sum();
                if total > 0.0 {
                    for (o, v) in out.iter_mut().zip(row) {
                        *o = v / total;
                    }
                }
            })?;
            let (r, c) = t.dims2();
            for i in 0..r.min(c) {
                if out.row(i).iter().all(|v| *v == 0.0) {
                    out.data[i * c + i] = 1.0;
                }
            }
            Ok(out)
        })
    }

    /// Reverse pass from the scalar `loss`. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients, TensorError> {
        let nodes = self.nodes.into_inner();
        let params = self.params.into_inner();
        if nodes[loss.0].value.len() != 1 {
            return Err(TensorError::NotScalar(nodes[loss.0].value.shape.clone()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.0] = Some(Tensor::full(&nodes[loss.0].value.shape, 1.0));
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !nodes[id].tracked {
                continue;
            }
            if let Op::Leaf = nodes[id].op {
                grads[id] = Some(g);
                continue;
            }
            for (input, dg) in local_grads(&nodes, id, &g)? {
                if !nodes[input].tracked {
                    continue;
                }
                match &mut grads[input] {
                    Some(acc) => acc.add_assign(&dg),
                    slot @ None => *slot = Some(dg),
                }
            }
        }
        let mut leaves = BTreeMap::new();
        for (id, g) in grads.into_iter().enumerate() {
            if let (Some(g), Op::Leaf) = (g, &nodes[id].op) {
                leaves.insert(id, g);
            }
        }
        let params = params.into_iter().filter_map(|(p, v)| leaves.remove(&v.0).map(|g| (p, g))).collect();
        Ok(Gradients { leaves, params })
    }
}

fn row_stats(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + LAYER_NORM_EPS).sqrt())
}

/// Gradient contributions of node `id` to its inputs.
fn local_grads(nodes: &[Node], id: usize, g: &Tensor) -> Result<Vec<(usize, Tensor)>, TensorError> {
    let val = |i: usize| &nodes[i].value;
    let y = &nodes[id].value;
    Ok(match &nodes[id].op {
        Op::Leaf => Vec::new(),
        Op::MatMul(a, b) => vec![
            (*a, g.matmul(&val(*b).transpose()?)?),
            (*b, val(*a).transpose()?.matmul(g)?),
        ],
        Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
        Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.scale(-1.0))],
        Op::Mul(a, b) => vec![(*a, g.mul(val(*b))?), (*b, g.mul(val(*a))?)],
        Op::AddRow(a, r) => {
            let summed = unbroadcast_rows(g, val(*a).dims2().1);
            vec![(*a, g.clone()), (*r, Tensor::new(val(*r).shape.clone(), summed)?)]
        }
        Op::MulRow(a, r) => {
            let (x, row) = (val(*a), val(*r));
            let cols = x.dims2().1;
            let mut ga = g.clone();
            for chunk in ga.data.chunks_mut(cols) {
                for (o, b) in chunk.iter_mut().zip(&row.data) {
                    *o *= b;
                }
            }
            let gr = unbroadcast_rows(&g.mul(x)?, cols);
            vec![(*a, ga), (*r, Tensor::new(row.shape.clone(), gr)?)]
        }
        Op::Scale(a, s) => vec![(*a, g.scale(*s))],
        Op::Transpose(a) => vec![(*a, g.transpose()?)],
        Op::Concat { parts, axis } => {
            let mut out = Vec::with_capacity(parts.len());
            let (rows, cols) = g.dims2();
            let mut offset = 0;
            for &p in parts {
                let (r, c) = val(p).dims2();
                let piece = if *axis == 0 {
                    Tensor::matrix(r, c, g.data[offset * cols..(offset + r) * cols].to_vec())?
                } else {
                    let mut data = Vec::with_capacity(r * c);
                    for row in 0..rows {
                        data.extend_from_slice(&g.row(row)[offset..offset + c]);
                    }
                    Tensor::matrix(r, c, data)?
                };
                offset += if *axis == 0 { r } else { c };
                out.push((p, piece));
            }
            out
        }
        Op::Slice { input, axis, start } => {
            let x = val(*input);
            let (_, cols) = x.dims2();
            let mut gx = Tensor::zeros(&x.shape);
            let (gr, gc) = g.dims2();
            for i in 0..gr {
                for j in 0..gc {
                    let (xi, xj) = if *axis == 0 { (i + start, j) } else { (i, j + start) };
                    gx.data[xi * cols + xj] += g.data[i * gc + j];
                }
            }
            vec![(*input, gx)]
        }
        Op::Gather { table, indices } => {
            let t = val(*table);
            let cols = t.dims2().1;
            let mut gt = Tensor::zeros(&t.shape);
            for (k, &i) in indices.iter().enumerate() {
                for (o, v) in gt.data[i * cols..(i + 1) * cols].iter_mut().zip(g.row(k)) {
                    *o += v;
                }
            }
            vec![(*table, gt)]
        }
        Op::Softmax(a) => {
            let mut gx = y.clone();
            let cols = y.dims2().1;
            for (k, (yr, gr)) in y.data.chunks(cols).zip(g.data.chunks(cols)).enumerate() {
                let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                for j in 0..cols {
                    gx.data[k * cols + j] = yr[j] * (gr[j] - dot);
                }
            }
            vec![(*a, gx)]
        }
        Op::LogSoftmax(a) => {
            let mut gx = g.clone();
            let cols = y.dims2().1;
            for (k, (yr, gr)) in y.data.chunks(cols).zip(g.data.chunks(cols)).enumerate() {
                let total: f64 = gr.iter().sum();
                for j in 0..cols {
                    gx.data[k * cols + j] = gr[j] - yr[j].exp() * total;
                }
            }
            vec![(*a, gx)]
        }
        Op::CrossEntropy { logits, targets } => {
            let x = val(*logits);
            let mut gx = x.map_rows("cross_entropy", softmax_row)?;
            let cols = x.dims2().1;
            for (k, &t) in targets.iter().enumerate() {
                gx.data[k * cols + t] -= 1.0;
            }
            vec![(*logits, gx.scale(g.item() / targets.len() as f64))]
        }
        Op::LayerNorm { x, gain, bias } => {
            let (t, gn) = (val(*x), val(*gain));
            let cols = t.dims2().1;
            let mut gx = Tensor::zeros(&t.shape);
            let mut ggain = vec![0.0; cols];
            let mut gbias = vec![0.0; cols];
            let mut xhat = vec![0.0; cols];
            let mut dxhat = vec![0.0; cols];
            for (k, (row, grow)) in t.data.chunks(cols).zip(g.data.chunks(cols)).enumerate() {
                let (mean, inv) = row_stats(row);
                for j in 0..cols {
                    xhat[j] = (row[j] - mean) * inv;
                    dxhat[j] = grow[j] * gn.data[j];
                    ggain[j] += grow[j] * xhat[j];
                    gbias[j] += grow[j];
                }
                let m1 = dxhat.iter().sum::<f64>() / cols as f64;
                let m2 = dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / cols as f64;
                for j in 0..cols {
                    gx.data[k * cols + j] = inv * (dxhat[j] - m1 - xhat[j] * m2);
                }
            }
            vec![
                (*x, gx),
                (*gain, Tensor::new(gn.shape.clone(), ggain)?),
                (*bias, Tensor::new(val(*bias).shape.clone(), gbias)?),
            ]
        }
        Op::Gelu(a) => vec![(*a, val(*a).zip(g, "gelu", |x, d| gelu_grad(x) * d)?)],
        Op::Exp(a) => vec![(*a, y.mul(g)?)],
        Op::Sum(a) => vec![(*a, Tensor::full(&val(*a).shape, g.item()))],
        Op::Rbf { dist, sigma } => {
            let s = val(*sigma).item();
            let s3 = s * s * s;
            let total: f64 = dist
                .data
                .iter()
                .zip(&y.data)
                .zip(&g.data)
                .filter(|((d, _), _)| d.is_finite())
                .map(|((d, k), gv)| gv * k * d * d / s3)
                .sum();
            vec![(*sigma, Tensor::new(val(*sigma).shape.clone(), vec![total])?)]
        }
        Op::RowNormalize(a) => {
            let x = val(*a);
            let cols = x.dims2().1;
            let mut gx = Tensor::zeros(&x.shape);
            for (k, row) in x.data.chunks(cols).enumerate() {
                let total: f64 = row.iter().sum();
                if total <= 0.0 {
                    continue;
                }
                let yr = y.row(k);
                let gr = g.row(k);
                let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                for j in 0..cols {
                    gx.data[k * cols + j] = (gr[j] - dot) / total;
                }
            }
            vec![(*a, gx)]
        }
    })
}
