use std::collections::BTreeMap;
use std::rc::Rc;

use rand::Rng;

use super::gemm::{gemm, View};
use super::{Float, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Debug)]
struct AttentionSaved<T> {
    q: Var,
    k: Var,
    v: Var,
    batch: usize,
    lq: usize,
    lk: usize,
    heads: usize,
    weights: Vec<T>,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, T),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        mean: Vec<T>,
        rstd: Vec<T>,
    },
    Softmax(Var),
    Attention(Box<AttentionSaved<T>>),
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    GatherRows {
        x: Var,
        rows: Vec<usize>,
    },
    ConcatSeq {
        parts: Vec<(Var, usize)>,
        batch: usize,
    },
    ConcatCols(Vec<Var>),
    CrossEntropy {
        logits: Var,
        targets: Vec<Option<usize>>,
        probs: Vec<T>,
        count: usize,
    },
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
    WeightedSum(Vec<(Var, T)>),
    SumAll(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Per-node gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Float> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

/// Records operations in execution order; node `i` only ever reads
/// nodes `< i`, so index order is a topological order.
#[derive(Debug)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    bound: BTreeMap<ParamId, Var>,
}

impl<T: Float> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn acc<T: Float>(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut Vec<T> {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
}

fn gelu_parts<T: Float>(x: T) -> (T, T) {
    // tanh approximation; returns (value, derivative)
    let c = T::from_f64_lossy((2.0 / std::f64::consts::PI).sqrt());
    let k = T::from_f64_lossy(0.044715);
    let half = T::from_f64_lossy(0.5);
    let three = T::from_f64_lossy(3.0);
    let one = T::one();
    let inner = c * (x + k * x * x * x);
    // 1 - 2 / (e^{2u} + 1): one exp instead of a libm tanh
    let th = if inner.abs() > T::from_f64_lossy(15.0) {
        inner.signum()
    } else {
        one - (one + one) / ((inner + inner).exp() + one)
    };
    let value = half * x * (one + th);
    let dinner = c * (one + three * k * x * x);
    let deriv = half * (one + th) + half * x * (one - th * th) * dinner;
    (value, deriv)
}

impl<T: Float> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            bound: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf (gradients are tracked).
    pub fn var(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Binds a stored parameter as a leaf; repeated binds return the same node.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(v) = self.bound.get(&id) {
            return *v;
        }
        let v = self.var(store.get(id).value.clone());
        self.bound.insert(id, v);
        v
    }

    pub fn bound_params(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.bound.iter().map(|(k, v)| (*k, *v))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value.data()[0]
    }

    /// Post-softmax weights of an attention node, laid out
    /// `[batch, heads, query_len, key_len]`.
    pub fn attention_weights(&self, v: Var) -> Option<&[T]> {
        match &self.nodes[v.0].op {
            Op::Attention(saved) => Some(&saved.weights),
            _ => None,
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            View::row_major(0, k),
            self.value(b).data(),
            View::row_major(0, n),
            T::zero(),
            &mut out,
            View::row_major(0, n),
        );
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 2 {
            return Err(Error::shape("transpose", s, &[]));
        }
        let (m, n) = (s[0], s[1]);
        let src = self.value(x).data();
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = src[i * n + j];
            }
        }
        let value = Tensor::new(vec![n, m], out)?;
        Ok(self.push(value, Op::Transpose(x), &[x]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(name, self.shape(a), self.shape(b)));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(value, op, &[a, b]))
    }

    /// Adds a bias vector along the trailing dimension.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let n = self.value(x).last_dim();
        if self.shape(bias) != [n] {
            return Err(Error::shape("add_bias", self.shape(x), self.shape(bias)));
        }
        let b = self.value(bias).data();
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_exact_mut(n.max(1)) {
            for (v, bi) in row.iter_mut().zip(b) {
                *v += *bi;
            }
        }
        let value = Tensor::new(self.shape(x).to_vec(), data)?;
        Ok(self.push(value, Op::AddBias(x, bias), &[x, bias]))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let data = self.value(x).data().iter().map(|v| *v * c).collect();
        let value = Tensor {
            shape: self.shape(x).to_vec(),
            data,
        };
        self.push(value, Op::Scale(x, c), &[x])
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let data = self
            .value(x)
            .data()
            .iter()
            .map(|v| gelu_parts(*v).0)
            .collect();
        let value = Tensor {
            shape: self.shape(x).to_vec(),
            data,
        };
        self.push(value, Op::Gelu(x), &[x])
    }

    /// Per-row normalization over the trailing dimension (epsilon 1e-5).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let n = self.value(x).last_dim();
        if self.shape(gain) != [n] || self.shape(bias) != [n] {
            return Err(Error::shape("layer_norm", self.shape(x), self.shape(gain)));
        }
        let rows = self.value(x).rows();
        let eps = T::from_f64_lossy(LAYER_NORM_EPS);
        let nf = T::from_usize(n).unwrap_or_else(T::one);
        let (src, g, b) = (
            self.value(x).data(),
            self.value(gain).data(),
            self.value(bias).data(),
        );
        let mut out = vec![T::zero(); src.len()];
        let mut means = Vec::with_capacity(rows);
        let mut rstds = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &src[r * n..(r + 1) * n];
            let mean = row.iter().copied().sum::<T>() / nf;
            let var = row.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / nf;
            let rstd = T::one() / (var + eps).sqrt();
            for j in 0..n {
                out[r * n + j] = (row[j] - mean) * rstd * g[j] + b[j];
            }
            means.push(mean);
            rstds.push(rstd);
        }
        let value = Tensor::new(self.shape(x).to_vec(), out)?;
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                mean: means,
                rstd: rstds,
            },
            &[x, gain, bias],
        ))
    }

    /// Max-subtracted softmax over the trailing dimension.
    pub fn softmax_lastdim(&mut self, x: Var) -> Result<Var> {
        let src = self.value(x);
        if src.data().iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite("NaN input to softmax".into()));
        }
        let n = src.last_dim();
        if n == 0 {
            return Err(Error::shape("softmax_lastdim", src.shape(), &[]));
        }
        let mut out = src.data().to_vec();
        for row in out.chunks_mut(n) {
            softmax_in_place(row);
        }
        let value = Tensor::new(src.shape().to_vec(), out)?;
        Ok(self.push(value, Op::Softmax(x), &[x]))
    }

    /// Scaled dot-product attention over `batch` independent sequences.
    ///
    /// `q` is `[batch * lq, d]`, `k` and `v` are `[batch * lk, d]` and
    /// `key_mask` has `batch * lk` entries (`true` = attendable). Masked keys
    /// receive exactly zero weight; a query row with no attendable key yields
    /// a zero output row.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        key_mask: Rc<Vec<bool>>,
        batch: usize,
        heads: usize,
    ) -> Result<Var> {
        let (sq, sk, sv) = (
            self.shape(q).to_vec(),
            self.shape(k).to_vec(),
            self.shape(v).to_vec(),
        );
        if sq.len() != 2 || sk.len() != 2 || sk != sv || sq[1] != sk[1] {
            return Err(Error::shape("attention", &sq, &sk));
        }
        let d = sq[1];
        if batch == 0 || sq[0] % batch != 0 || sk[0] % batch != 0 || key_mask.len() != sk[0] {
            return Err(Error::shape("attention", &sq, &[batch, key_mask.len()]));
        }
        if heads == 0 || d % heads != 0 {
            return Err(Error::Config(format!(
                "hidden {d} not divisible by heads {heads}"
            )));
        }
        let (lq, lk, dh) = (sq[0] / batch, sk[0] / batch, d / heads);
        let scale = T::one() / T::from_usize(dh).unwrap_or_else(T::one).sqrt();
        let (qd, kd, vd) = (
            self.value(q).data(),
            self.value(k).data(),
            self.value(v).data(),
        );
        let mut weights = vec![T::zero(); batch * heads * lq * lk];
        let mut out = vec![T::zero(); batch * lq * d];
        for b in 0..batch {
            let mask = &key_mask[b * lk..(b + 1) * lk];
            for h in 0..heads {
                let w_off = (b * heads + h) * lq * lk;
                gemm(
                    lq,
                    dh,
                    lk,
                    qd,
                    View::row_major(b * lq * d + h * dh, d),
                    kd,
                    View::transposed(b * lk * d + h * dh, d),
                    T::zero(),
                    &mut weights,
                    View::row_major(w_off, lk),
                );
                for row in weights[w_off..w_off + lq * lk].chunks_mut(lk) {
                    masked_softmax(row, mask, scale);
                }
                gemm(
                    lq,
                    lk,
                    dh,
                    &weights,
                    View::row_major(w_off, lk),
                    vd,
                    View::row_major(b * lk * d + h * dh, d),
                    T::zero(),
                    &mut out,
                    View::row_major(b * lq * d + h * dh, d),
                );
            }
        }
        let value = Tensor::new(vec![batch * lq, d], out)?;
        let saved = AttentionSaved {
            q,
            k,
            v,
            batch,
            lq,
            lk,
            heads,
            weights,
        };
        Ok(self.push(value, Op::Attention(Box::new(saved)), &[q, k, v]))
    }

    /// Row lookup into an embedding `table` of shape `[vocab, d]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let s = self.shape(table);
        if s.len() != 2 {
            return Err(Error::shape("embedding", s, &[]));
        }
        let (vocab, d) = (s[0], s[1]);
        if let Some(bad) = ids.iter().find(|i| **i >= vocab) {
            return Err(Error::Index(format!(
                "embedding id {bad} >= vocabulary {vocab}"
            )));
        }
        let src = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        let value = Tensor::new(vec![ids.len(), d], out)?;
        Ok(self.push(
            value,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        ))
    }

    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 2 {
            return Err(Error::shape("gather_rows", s, &[]));
        }
        let (n, d) = (s[0], s[1]);
        if let Some(bad) = rows.iter().find(|r| **r >= n) {
            return Err(Error::Index(format!("row {bad} >= {n}")));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            out.extend_from_slice(&src[r * d..(r + 1) * d]);
        }
        let value = Tensor::new(vec![rows.len(), d], out)?;
        Ok(self.push(
            value,
            Op::GatherRows {
                x,
                rows: rows.to_vec(),
            },
            &[x],
        ))
    }

    /// Concatenates per-sequence blocks: each part is `[batch * len_i, d]`,
    /// the result is `[batch * sum(len_i), d]` with sequence `b` holding its
    /// parts in order.
    pub fn concat_seq(&mut self, parts: &[(Var, usize)], batch: usize) -> Result<Var> {
        let d = parts
            .first()
            .map(|(v, _)| self.value(*v).last_dim())
            .ok_or_else(|| Error::Config("concat_seq with no parts".into()))?;
        for (v, len) in parts {
            let s = self.shape(*v);
            if s.len() != 2 || s[1] != d || s[0] != batch * len {
                return Err(Error::shape("concat_seq", s, &[batch * len, d]));
            }
        }
        let total: usize = parts.iter().map(|(_, l)| l).sum();
        let mut out = Vec::with_capacity(batch * total * d);
        for b in 0..batch {
            for (v, len) in parts {
                let src = self.value(*v).data();
                out.extend_from_slice(&src[b * len * d..(b + 1) * len * d]);
            }
        }
        let value = Tensor::new(vec![batch * total, d], out)?;
        let inputs: Vec<Var> = parts.iter().map(|(v, _)| *v).collect();
        Ok(self.push(
            value,
            Op::ConcatSeq {
                parts: parts.to_vec(),
                batch,
            },
            &inputs,
        ))
    }

    /// Concatenates `[n, d_i]` matrices along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let n = parts
            .first()
            .map(|v| self.shape(*v).first().copied().unwrap_or(0))
            .ok_or_else(|| Error::Config("concat_cols with no parts".into()))?;
        for v in parts {
            let s = self.shape(*v);
            if s.len() != 2 || s[0] != n {
                return Err(Error::shape("concat_cols", s, &[n]));
            }
        }
        let width: usize = parts.iter().map(|v| self.shape(*v)[1]).sum();
        let mut out = Vec::with_capacity(n * width);
        for r in 0..n {
            for v in parts {
                let d = self.shape(*v)[1];
                out.extend_from_slice(&self.value(*v).data()[r * d..(r + 1) * d]);
            }
        }
        let value = Tensor::new(vec![n, width], out)?;
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Mean negative log-likelihood over rows whose target is not
    /// `ignore_index`; zero when every row is ignored.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        targets: &[i64],
        ignore_index: i64,
    ) -> Result<Var> {
        let s = self.shape(logits);
        if s.len() != 2 || s[0] != targets.len() {
            return Err(Error::shape("cross_entropy", s, &[targets.len()]));
        }
        let c = s[1];
        let mut parsed = Vec::with_capacity(targets.len());
        for &t in targets {
            if t == ignore_index {
                parsed.push(None);
            } else if t < 0 || t as usize >= c {
                return Err(Error::Index(format!("target {t} outside [0, {c})")));
            } else {
                parsed.push(Some(t as usize));
            }
        }
        let mut probs = self.value(logits).data().to_vec();
        let mut total = T::zero();
        let mut count = 0usize;
        for (row, t) in probs.chunks_mut(c).zip(&parsed) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = row.iter().map(|v| (*v - max).exp()).sum::<T>().ln() + max;
            if let Some(t) = t {
                total += lse - row[*t];
                count += 1;
            }
            for v in row.iter_mut() {
                *v = (*v - lse).exp();
            }
        }
        let loss = if count == 0 {
            T::zero()
        } else {
            total / T::from_usize(count).unwrap_or_else(T::one)
        };
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: parsed,
                probs,
                count,
            },
            &[logits],
        ))
    }

    /// Inverted dropout; identity when `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64, rng: &mut impl Rng) -> Var {
        if p <= 0.0 {
            return x;
        }
        let keep = T::from_f64_lossy(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..self.value(x).len())
            .map(|_| {
                if rng.gen::<f64>() < p {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let data = self
            .value(x)
            .data()
            .iter()
            .zip(&mask)
            .map(|(v, m)| *v * *m)
            .collect();
        let value = Tensor {
            shape: self.shape(x).to_vec(),
            data,
        };
        self.push(value, Op::Dropout { x, mask }, &[x])
    }

    /// `sum_i w_i * x_i` over same-shape inputs. Terms with weight exactly
    /// zero contribute to the value but are cut from the backward graph.
    pub fn weighted_sum(&mut self, terms: &[(Var, T)]) -> Result<Var> {
        let first = terms
            .first()
            .ok_or_else(|| Error::Config("weighted_sum with no terms".into()))?
            .0;
        let shape = self.shape(first).to_vec();
        let mut out = vec![T::zero(); self.value(first).len()];
        for (v, w) in terms {
            if self.shape(*v) != shape.as_slice() {
                return Err(Error::shape("weighted_sum", &shape, self.shape(*v)));
            }
            for (o, x) in out.iter_mut().zip(self.value(*v).data()) {
                *o += *w * *x;
            }
        }
        let live: Vec<Var> = terms
            .iter()
            .filter(|(_, w)| *w != T::zero())
            .map(|(v, _)| *v)
            .collect();
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::WeightedSum(terms.to_vec()), &live))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::SumAll(x), &[x])
    }

    /// Reverse pass from a scalar `root`, seeding its gradient with 1.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        if self.value(root).len() != 1 {
            return Err(Error::shape("backward", self.shape(root), &[1]));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![T::one()]);
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(gout) = grads[i].take() else {
                continue;
            };
            self.backward_node(node, &gout, &mut grads);
            grads[i] = Some(gout);
        }
        Ok(Gradients { grads })
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backward_node(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let val = |v: Var| self.nodes[v.0].value.data();
        let len = |v: Var| self.nodes[v.0].value.len();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                if self.rg(*a) {
                    let da = acc(grads, *a, m * k);
                    gemm(
                        m,
                        n,
                        k,
                        g,
                        View::row_major(0, n),
                        val(*b),
                        View::transposed(0, n),
                        T::one(),
                        da,
                        View::row_major(0, k),
                    );
                }
                if self.rg(*b) {
                    let db = acc(grads, *b, k * n);
                    gemm(
                        k,
                        m,
                        n,
                        val(*a),
                        View::transposed(0, k),
                        g,
                        View::row_major(0, n),
                        T::one(),
                        db,
                        View::row_major(0, n),
                    );
                }
            }
            Op::Transpose(x) => {
                if self.rg(*x) {
                    let (m, n) = (self.shape(*x)[0], self.shape(*x)[1]);
                    let dx = acc(grads, *x, m * n);
                    for i in 0..m {
                        for j in 0..n {
                            dx[i * n + j] += g[j * m + i];
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for x in [*a, *b] {
                    if self.rg(x) {
                        let dx = acc(grads, x, g.len());
                        for (d, gi) in dx.iter_mut().zip(g) {
                            *d += *gi;
                        }
                    }
                }
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    let bv = val(*b);
                    let da = acc(grads, *a, g.len());
                    for i in 0..g.len() {
                        da[i] += g[i] * bv[i];
                    }
                }
                if self.rg(*b) {
                    let av = val(*a);
                    let db = acc(grads, *b, g.len());
                    for i in 0..g.len() {
                        db[i] += g[i] * av[i];
                    }
                }
            }
            Op::AddBias(x, bias) => {
                if self.rg(*x) {
                    let dx = acc(grads, *x, g.len());
                    for (d, gi) in dx.iter_mut().zip(g) {
                        *d += *gi;
                    }
                }
                if self.rg(*bias) {
                    let n = len(*bias);
                    let db = acc(grads, *bias, n);
                    for row in g.chunks_exact(n.max(1)) {
                        for (d, gi) in db.iter_mut().zip(row) {
                            *d += *gi;
                        }
                    }
                }
            }
            Op::Scale(x, c) => {
                if self.rg(*x) {
                    let dx = acc(grads, *x, g.len());
                    for (d, gi) in dx.iter_mut().zip(g) {
                        *d += *gi * *c;
                    }
                }
            }
            Op::Gelu(x) => {
                if self.rg(*x) {
                    let xv = val(*x);
                    let dx = acc(grads, *x, g.len());
                    for i in 0..g.len() {
                        dx[i] += g[i] * gelu_parts(xv[i]).1;
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                mean,
                rstd,
            } => {
                let n = len(*gain);
                let nf = T::from_usize(n).unwrap_or_else(T::one);
                let (xv, gv) = (val(*x), val(*gain));
                if self.rg(*gain) || self.rg(*bias) {
                    let mut dg = vec![T::zero(); n];
                    let mut db = vec![T::zero(); n];
                    for (r, (m, s)) in mean.iter().zip(rstd).enumerate() {
                        for j in 0..n {
                            let xhat = (xv[r * n + j] - *m) * *s;
                            dg[j] += g[r * n + j] * xhat;
                            db[j] += g[r * n + j];
                        }
                    }
                    if self.rg(*gain) {
                        for (d, v) in acc(grads, *gain, n).iter_mut().zip(&dg) {
                            *d += *v;
                        }
                    }
                    if self.rg(*bias) {
                        for (d, v) in acc(grads, *bias, n).iter_mut().zip(&db) {
                            *d += *v;
                        }
                    }
                }
                if self.rg(*x) {
                    let dx = acc(grads, *x, xv.len());
                    for (r, (m, s)) in mean.iter().zip(rstd).enumerate() {
                        let mut sum_d = T::zero();
                        let mut sum_dx = T::zero();
                        for j in 0..n {
                            let dxhat = g[r * n + j] * gv[j];
                            let xhat = (xv[r * n + j] - *m) * *s;
                            sum_d += dxhat;
                            sum_dx += dxhat * xhat;
                        }
                        let (mean_d, mean_dx) = (sum_d / nf, sum_dx / nf);
                        for j in 0..n {
                            let dxhat = g[r * n + j] * gv[j];
                            let xhat = (xv[r * n + j] - *m) * *s;
                            dx[r * n + j] += *s * (dxhat - mean_d - xhat * mean_dx);
                        }
                    }
                }
            }
            Op::Softmax(x) => {
                if self.rg(*x) {
                    let y = node.value.data();
                    let n = node.value.last_dim();
                    let dx = acc(grads, *x, y.len());
                    for r in 0..y.len() / n {
                        let row = r * n..(r + 1) * n;
                        let dot: T = y[row.clone()]
                            .iter()
                            .zip(&g[row.clone()])
                            .map(|(a, b)| *a * *b)
                            .sum();
                        for i in row {
                            dx[i] += y[i] * (g[i] - dot);
                        }
                    }
                }
            }
            Op::Attention(s) => self.backward_attention(s, g, grads),
            Op::Embedding { table, ids } => {
                if self.rg(*table) {
                    let d = self.shape(*table)[1];
                    let dt = acc(grads, *table, len(*table));
                    for (r, &id) in ids.iter().enumerate() {
                        for j in 0..d {
                            dt[id * d + j] += g[r * d + j];
                        }
                    }
                }
            }
            Op::GatherRows { x, rows } => {
                if self.rg(*x) {
                    let d = self.shape(*x)[1];
                    let dx = acc(grads, *x, len(*x));
                    for (r, &src) in rows.iter().enumerate() {
                        for j in 0..d {
                            dx[src * d + j] += g[r * d + j];
                        }
                    }
                }
            }
            Op::ConcatSeq { parts, batch } => {
                let d = node.value.last_dim();
                let total: usize = parts.iter().map(|(_, l)| l).sum();
                let mut offset = 0;
                for (v, l) in parts {
                    if self.rg(*v) {
                        let dv = acc(grads, *v, batch * l * d);
                        for b in 0..*batch {
                            let src = (b * total + offset) * d;
                            for i in 0..l * d {
                                dv[b * l * d + i] += g[src + i];
                            }
                        }
                    }
                    offset += l;
                }
            }
            Op::ConcatCols(parts) => {
                let width = node.value.last_dim();
                let n = node.value.rows();
                let mut col = 0;
                for v in parts {
                    let d = self.shape(*v)[1];
                    if self.rg(*v) {
                        let dv = acc(grads, *v, n * d);
                        for r in 0..n {
                            for j in 0..d {
                                dv[r * d + j] += g[r * width + col + j];
                            }
                        }
                    }
                    col += d;
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
                count,
            } => {
                if self.rg(*logits) && *count > 0 {
                    let c = self.shape(*logits)[1];
                    let scale = g[0] / T::from_usize(*count).unwrap_or_else(T::one);
                    let dl = acc(grads, *logits, probs.len());
                    for (r, t) in targets.iter().enumerate() {
                        if let Some(t) = t {
                            for j in 0..c {
                                let onehot = if j == *t { T::one() } else { T::zero() };
                                dl[r * c + j] += (probs[r * c + j] - onehot) * scale;
                            }
                        }
                    }
                }
            }
            Op::Dropout { x, mask } => {
                if self.rg(*x) {
                    let dx = acc(grads, *x, g.len());
                    for i in 0..g.len() {
                        dx[i] += g[i] * mask[i];
                    }
                }
            }
            Op::WeightedSum(terms) => {
                for (v, w) in terms {
                    if *w != T::zero() && self.rg(*v) {
                        let dv = acc(grads, *v, g.len());
                        for (d, gi) in dv.iter_mut().zip(g) {
                            *d += *gi * *w;
                        }
                    }
                }
            }
            Op::SumAll(x) => {
                if self.rg(*x) {
                    let dx = acc(grads, *x, len(*x));
                    for d in dx.iter_mut() {
                        *d += g[0];
                    }
                }
            }
        }
    }

    fn backward_attention(&self, s: &AttentionSaved<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let (batch, lq, lk, heads) = (s.batch, s.lq, s.lk, s.heads);
        let d = self.shape(s.q)[1];
        let dh = d / heads;
        let scale = T::one() / T::from_usize(dh).unwrap_or_else(T::one).sqrt();
        let (qd, kd, vd) = (
            self.value(s.q).data().to_vec(),
            self.value(s.k).data().to_vec(),
            self.value(s.v).data().to_vec(),
        );
        let mut dq = vec![T::zero(); qd.len()];
        let mut dk = vec![T::zero(); kd.len()];
        let mut dv = vec![T::zero(); vd.len()];
        let mut dp = vec![T::zero(); lq * lk];
        for b in 0..batch {
            for h in 0..heads {
                let w_off = (b * heads + h) * lq * lk;
                let p = &s.weights[w_off..w_off + lq * lk];
                let q_view = View::row_major(b * lq * d + h * dh, d);
                let kv_view = View::row_major(b * lk * d + h * dh, d);
                // dP = dO V^T
                gemm(
                    lq,
                    dh,
                    lk,
                    g,
                    q_view,
                    &vd,
                    View::transposed(b * lk * d + h * dh, d),
                    T::zero(),
                    &mut dp,
                    View::row_major(0, lk),
                );
                // dV += P^T dO
                gemm(
                    lk,
                    lq,
                    dh,
                    p,
                    View::transposed(0, lk),
                    g,
                    q_view,
                    T::one(),
                    &mut dv,
                    kv_view,
                );
                // dS = P * (dP - rowdot) * scale
                for r in 0..lq {
                    let row = r * lk..(r + 1) * lk;
                    let dot: T = p[row.clone()]
                        .iter()
                        .zip(&dp[row.clone()])
                        .map(|(a, b)| *a * *b)
                        .sum();
                    for i in row {
                        dp[i] = p[i] * (dp[i] - dot) * scale;
                    }
                }
                gemm(
                    lq,
                    lk,
                    dh,
                    &dp,
                    View::row_major(0, lk),
                    &kd,
                    kv_view,
                    T::one(),
                    &mut dq,
                    q_view,
                );
                gemm(
                    lk,
                    lq,
                    dh,
                    &dp,
                    View::transposed(0, lk),
                    &qd,
                    q_view,
                    T::one(),
                    &mut dk,
                    kv_view,
                );
            }
        }
        for (var, buf) in [(s.q, dq), (s.k, dk), (s.v, dv)] {
            if self.rg(var) {
                let dst = acc(grads, var, buf.len());
                for (d, x) in dst.iter_mut().zip(&buf) {
                    *d += *x;
                }
            }
        }
    }
}

fn softmax_in_place<T: Float>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

fn masked_softmax<T: Float>(row: &mut [T], mask: &[bool], scale: T) {
    let mut max = T::neg_infinity();
    for (v, m) in row.iter_mut().zip(mask) {
        if *m {
            *v *= scale;
            max = max.max(*v);
        }
    }
    if max == T::neg_infinity() {
        row.iter_mut().for_each(|v| *v = T::zero());
        return;
    }
    let mut sum = T::zero();
    for (v, m) in row.iter_mut().zip(mask) {
        if *m {
            *v = (*v - max).exp();
            sum += *v;
        } else {
            *v = T::zero();
        }
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}
