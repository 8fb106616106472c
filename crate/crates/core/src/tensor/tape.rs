use super::kernels::{self, gemm_nn, gemm_nt, gemm_tn, sigmoid};
use super::{shape_err, Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Silu(Var),
    Softplus(Var),
    RmsNorm {
        x: Var,
        gain: Var,
        inv_rms: Vec<f64>,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    CausalSoftmax(Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Concat(Vec<Var>),
    SelectRows {
        x: Var,
        rows: Vec<usize>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
    TokenLogProbs {
        logits: Var,
        targets: Vec<usize>,
        exclude: Option<usize>,
        probs: Vec<f64>,
    },
    ClippedSurrogate {
        logp: Var,
        coef: Vec<f64>,
    },
    HalfMse {
        pred: Var,
        target: Vec<f64>,
    },
    Sum(Var),
    DotConst {
        x: Var,
        w: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Ordered record of primitive operations.
///
/// Nodes are appended in evaluation order, so inputs always precede outputs
/// and [`Tape::backward`] can visit each node once walking backwards.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient accumulated by the last [`Tape::backward`] call, if the node
    /// was reachable from the root.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    fn dims(&self, v: Var, op: &'static str) -> Result<(usize, usize), TensorError> {
        self.value(v).dims2().map_err(|_| {
            shape_err(
                op,
                format!("operand shape {:?} is not a matrix", self.value(v).shape()),
            )
        })
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<(), TensorError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(shape_err(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn mat(&self, rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
        Tensor::new(vec![rows, cols], data).expect("kernel output sized by construction")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k) = self.dims(a, "matmul")?;
        let (k2, n) = self.dims(b, "matmul")?;
        if k != k2 {
            return Err(shape_err("matmul", format!("[{m}x{k}] · [{k2}x{n}]")));
        }
        let mut out = vec![0.0; m * n];
        gemm_nn(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            m,
            k,
            n,
            false,
        );
        let t = self.mat(m, n, out);
        Ok(self.push(t, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k) = self.dims(a, "matmul_nt")?;
        let (n, k2) = self.dims(b, "matmul_nt")?;
        if k != k2 {
            return Err(shape_err("matmul_nt", format!("[{m}x{k}] · [{n}x{k2}]ᵀ")));
        }
        let mut out = vec![0.0; m * n];
        gemm_nt(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            m,
            k,
            n,
            false,
        );
        let t = self.mat(m, n, out);
        Ok(self.push(t, Op::MatMulNT(a, b)))
    }

    fn zip_with(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, TensorError> {
        self.same_shape(a, b, name)?;
        let va = self.value(a);
        let data = va
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(t, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a length-`n` bias to every row of an `m×n` matrix. The only
    /// broadcasting the tape supports.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, TensorError> {
        let (m, n) = self.dims(x, "add_bias")?;
        if self.value(bias).numel() != n {
            return Err(shape_err(
                "add_bias",
                format!("bias {:?} vs {n} columns", self.value(bias).shape()),
            ));
        }
        let b = self.value(bias).data();
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_mut(n) {
            for (v, bj) in row.iter_mut().zip(b) {
                *v += bj;
            }
        }
        let t = Tensor::new(self.value(x).shape().to_vec(), data)?;
        debug_assert_eq!(t.numel(), m * n);
        Ok(self.push(t, Op::AddBias(x, bias)))
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let vx = self.value(x);
        let data = vx.data().iter().map(|&v| f(v)).collect();
        let t = Tensor::new(vx.shape().to_vec(), data).expect("same shape");
        self.push(t, op)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.map(x, |v| v * c, Op::Scale(x, c))
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    /// `x · σ(x)`
    pub fn silu(&mut self, x: Var) -> Var {
        self.map(x, |v| v * sigmoid(v), Op::Silu(x))
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.map(x, kernels::softplus, Op::Softplus(x))
    }

    /// Row-wise RMS normalization with a learned per-column gain.
    pub fn rms_norm(&mut self, x: Var, gain: Var, eps: f64) -> Result<Var, TensorError> {
        let (m, n) = self.dims(x, "rms_norm")?;
        if self.value(gain).numel() != n {
            return Err(shape_err("rms_norm", "gain length must equal row width"));
        }
        let g = self.value(gain).data();
        let xd = self.value(x).data();
        let mut inv_rms = Vec::with_capacity(m);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &xd[i * n..(i + 1) * n];
            let ms = row.iter().map(|v| v * v).sum::<f64>() / n as f64;
            let r = 1.0 / (ms + eps).sqrt();
            inv_rms.push(r);
            for j in 0..n {
                out[i * n + j] = row[j] * r * g[j];
            }
        }
        let t = self.mat(m, n, out);
        Ok(self.push(t, Op::RmsNorm { x, gain, inv_rms }))
    }

    /// Gathers rows of `table` (`V×d`) for each id.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var, TensorError> {
        let (v, d) = self.dims(table, "embedding")?;
        if ids.is_empty() {
            return Err(shape_err("embedding", "empty id list"));
        }
        let td = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(TensorError::Index {
                    op: "embedding",
                    index: id,
                    bound: v,
                });
            }
            out.extend_from_slice(&td[id * d..(id + 1) * d]);
        }
        let t = self.mat(ids.len(), d, out);
        Ok(self.push(
            t,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Row-wise softmax of a square score matrix where row `i` only sees
    /// columns `0..=i`; masked entries are exactly zero.
    pub fn causal_softmax(&mut self, x: Var) -> Result<Var, TensorError> {
        let (m, n) = self.dims(x, "causal_softmax")?;
        if m != n {
            return Err(shape_err(
                "causal_softmax",
                format!("expected square, got [{m}x{n}]"),
            ));
        }
        let xd = self.value(x).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &xd[i * n..i * n + i + 1];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for j in 0..=i {
                let e = (row[j] - max).exp();
                out[i * n + j] = e;
                s += e;
            }
            for j in 0..=i {
                out[i * n + j] /= s;
            }
        }
        let t = self.mat(m, n, out);
        Ok(self.push(t, Op::CausalSoftmax(x)))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let (m, n) = self.dims(x, "slice_cols")?;
        if len == 0 || start + len > n {
            return Err(shape_err(
                "slice_cols",
                format!("cols {start}..{} of {n}", start + len),
            ));
        }
        let xd = self.value(x).data();
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&xd[i * n + start..i * n + start + len]);
        }
        let t = self.mat(m, len, out);
        Ok(self.push(t, Op::SliceCols { x, start }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(shape_err("concat_cols", "no operands"));
        }
        let (m, _) = self.dims(parts[0], "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.dims(p, "concat_cols")?;
            if r != m {
                return Err(shape_err("concat_cols", format!("row counts {m} vs {r}")));
            }
            widths.push(c);
        }
        let n: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let t = self.mat(m, n, out);
        Ok(self.push(t, Op::ConcatCols(parts.to_vec())))
    }

    /// Concatenates the flat data of every operand into one rank-1 tensor.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(shape_err("concat", "no operands"));
        }
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(self.value(p).data());
        }
        let t = Tensor::vector(out)?;
        Ok(self.push(t, Op::Concat(parts.to_vec())))
    }

    pub fn select_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var, TensorError> {
        let (m, n) = self.dims(x, "select_rows")?;
        if rows.is_empty() {
            return Err(shape_err("select_rows", "empty row list"));
        }
        let xd = self.value(x).data();
        let mut out = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            if r >= m {
                return Err(TensorError::Index {
                    op: "select_rows",
                    index: r,
                    bound: m,
                });
            }
            out.extend_from_slice(&xd[r * n..(r + 1) * n]);
        }
        let t = self.mat(rows.len(), n, out);
        Ok(self.push(
            t,
            Op::SelectRows {
                x,
                rows: rows.to_vec(),
            },
        ))
    }

    fn row_softmax(logits: &[f64], n: usize, exclude: Option<usize>) -> (Vec<f64>, Vec<f64>) {
        let m = logits.len() / n;
        let mut probs = vec![0.0; m * n];
        let mut lse = Vec::with_capacity(m);
        for i in 0..m {
            let row = &logits[i * n..(i + 1) * n];
            let l = kernels::log_sum_exp(row, exclude);
            lse.push(l);
            for j in 0..n {
                if Some(j) != exclude {
                    probs[i * n + j] = (row[j] - l).exp();
                }
            }
        }
        (probs, lse)
    }

    fn check_targets(
        &self,
        logits: Var,
        targets: &[usize],
        op: &'static str,
    ) -> Result<(usize, usize), TensorError> {
        let (m, v) = self.dims(logits, op)?;
        if targets.len() != m {
            return Err(shape_err(
                op,
                format!("{} targets for {m} rows", targets.len()),
            ));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= v) {
            return Err(TensorError::Index {
                op,
                index: t,
                bound: v,
            });
        }
        Ok((m, v))
    }

    /// Mean over rows of `-log softmax(logits)[target]`.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
    ) -> Result<Var, TensorError> {
        let (m, v) = self.check_targets(logits, targets, "softmax_cross_entropy")?;
        let ld = self.value(logits).data();
        let (probs, lse) = Self::row_softmax(ld, v, None);
        let loss = (0..m).map(|i| lse[i] - ld[i * v + targets[i]]).sum::<f64>() / m as f64;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    /// Per-row `log p(target)`, normalising over every vocabulary entry
    /// except `exclude` (which then has probability exactly zero).
    pub fn token_log_probs(
        &mut self,
        logits: Var,
        targets: &[usize],
        exclude: Option<usize>,
    ) -> Result<Var, TensorError> {
        let (m, v) = self.check_targets(logits, targets, "token_log_probs")?;
        if let Some(e) = exclude {
            if targets.contains(&e) {
                return Err(shape_err(
                    "token_log_probs",
                    format!("target equals excluded token {e}"),
                ));
            }
        }
        let ld = self.value(logits).data();
        let (probs, lse) = Self::row_softmax(ld, v, exclude);
        let out = (0..m).map(|i| ld[i * v + targets[i]] - lse[i]).collect();
        let t = Tensor::vector(out)?;
        Ok(self.push(
            t,
            Op::TokenLogProbs {
                logits,
                targets: targets.to_vec(),
                exclude,
                probs,
            },
        ))
    }

    /// Negated clipped surrogate, `-mean_t min(r_t·A_t, clip(r_t, 1-ε, 1+ε)·A_t)`
    /// with `r_t = exp(logp_t - old_logp_t)`.
    ///
    /// The gradient through a token is exactly zero whenever the clipped
    /// branch is the minimum.
    pub fn clipped_surrogate(
        &mut self,
        logp: Var,
        old_logp: &[f64],
        advantages: &[f64],
        eps: f64,
    ) -> Result<Var, TensorError> {
        let n = self.value(logp).numel();
        if old_logp.len() != n || advantages.len() != n {
            return Err(shape_err(
                "clipped_surrogate",
                format!(
                    "{n} log-probs, {} old, {} advantages",
                    old_logp.len(),
                    advantages.len()
                ),
            ));
        }
        let lp = self.value(logp).data();
        let mut total = 0.0;
        let mut coef = Vec::with_capacity(n);
        for t in 0..n {
            let ratio = (lp[t] - old_logp[t]).exp();
            let a = advantages[t];
            let unclipped = ratio * a;
            let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * a;
            if unclipped <= clipped {
                total += unclipped;
                coef.push(unclipped);
            } else {
                total += clipped;
                coef.push(0.0);
            }
        }
        let loss = -total / n as f64;
        let scale = -1.0 / n as f64;
        for c in coef.iter_mut() {
            *c *= scale;
        }
        Ok(self.push(Tensor::scalar(loss), Op::ClippedSurrogate { logp, coef }))
    }

    /// `½ · mean((target - pred)²)` over the flat data of `pred`.
    pub fn half_mse(&mut self, pred: Var, target: &[f64]) -> Result<Var, TensorError> {
        let p = self.value(pred).data();
        if p.len() != target.len() {
            return Err(shape_err(
                "half_mse",
                format!("{} predictions, {} targets", p.len(), target.len()),
            ));
        }
        let n = p.len() as f64;
        let loss = p
            .iter()
            .zip(target)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            * 0.5
            / n;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::HalfMse {
                pred,
                target: target.to_vec(),
            },
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// `Σ_i w_i · x_i` for constant weights.
    pub fn dot_const(&mut self, x: Var, w: &[f64]) -> Result<Var, TensorError> {
        let xd = self.value(x).data();
        if xd.len() != w.len() {
            return Err(shape_err(
                "dot_const",
                format!("{} values, {} weights", xd.len(), w.len()),
            ));
        }
        let s = xd.iter().zip(w).map(|(a, b)| a * b).sum();
        Ok(self.push(Tensor::scalar(s), Op::DotConst { x, w: w.to_vec() }))
    }

    /// Populates gradients of `root` with respect to every node it depends on.
    /// Gradients from a previous call are discarded.
    pub fn backward(&mut self, root: Var) -> Result<(), TensorError> {
        if self.value(root).numel() != 1 {
            return Err(TensorError::NonScalarRoot(
                self.value(root).shape().to_vec(),
            ));
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        // Split borrows: node values are read-only, grads are written.
        let nodes = std::mem::take(&mut self.nodes);
        let node = &nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = nodes[a.0].value.dims2().unwrap();
                let n = node.value.dims2().unwrap().1;
                let ad = nodes[a.0].value.data();
                let bd = nodes[b.0].value.data();
                gemm_nt(g, bd, self.acc_in(&nodes, *a), m, n, k, true);
                gemm_tn(ad, g, self.acc_in(&nodes, *b), m, k, n, true);
            }
            Op::MatMulNT(a, b) => {
                let (m, k) = nodes[a.0].value.dims2().unwrap();
                let n = node.value.dims2().unwrap().1;
                let ad = nodes[a.0].value.data();
                let bd = nodes[b.0].value.data();
                gemm_nn(g, bd, self.acc_in(&nodes, *a), m, n, k, true);
                gemm_tn(g, ad, self.acc_in(&nodes, *b), m, n, k, true);
            }
            Op::Add(a, b) => {
                add_into(self.acc_in(&nodes, *a), g, 1.0);
                add_into(self.acc_in(&nodes, *b), g, 1.0);
            }
            Op::Sub(a, b) => {
                add_into(self.acc_in(&nodes, *a), g, 1.0);
                add_into(self.acc_in(&nodes, *b), g, -1.0);
            }
            Op::Mul(a, b) => {
                let ad = nodes[a.0].value.data();
                let bd = nodes[b.0].value.data();
                let ga = self.acc_in(&nodes, *a);
                for ((o, gi), bi) in ga.iter_mut().zip(g).zip(bd) {
                    *o += gi * bi;
                }
                let gb = self.acc_in(&nodes, *b);
                for ((o, gi), ai) in gb.iter_mut().zip(g).zip(ad) {
                    *o += gi * ai;
                }
            }
            Op::AddBias(x, bias) => {
                add_into(self.acc_in(&nodes, *x), g, 1.0);
                let gb = self.acc_in(&nodes, *bias);
                let n = gb.len();
                for row in g.chunks(n) {
                    for (o, v) in gb.iter_mut().zip(row) {
                        *o += v;
                    }
                }
            }
            Op::Scale(x, c) => add_into(self.acc_in(&nodes, *x), g, *c),
            Op::Silu(x) => {
                let xd = nodes[x.0].value.data();
                let gx = self.acc_in(&nodes, *x);
                for ((o, gi), &v) in gx.iter_mut().zip(g).zip(xd) {
                    let s = sigmoid(v);
                    *o += gi * s * (1.0 + v * (1.0 - s));
                }
            }
            Op::Softplus(x) => {
                let xd = nodes[x.0].value.data();
                let gx = self.acc_in(&nodes, *x);
                for ((o, gi), &v) in gx.iter_mut().zip(g).zip(xd) {
                    *o += gi * sigmoid(v);
                }
            }
            Op::RmsNorm { x, gain, inv_rms } => {
                let (m, n) = nodes[x.0].value.dims2().unwrap();
                let xd = nodes[x.0].value.data();
                let gd = nodes[gain.0].value.data();
                let gg = self.acc_in(&nodes, *gain);
                for i in 0..m {
                    let r = inv_rms[i];
                    for j in 0..n {
                        gg[j] += g[i * n + j] * xd[i * n + j] * r;
                    }
                }
                let gx = self.acc_in(&nodes, *x);
                for i in 0..m {
                    let r = inv_rms[i];
                    let row = &xd[i * n..(i + 1) * n];
                    let gr = &g[i * n..(i + 1) * n];
                    let s: f64 = (0..n).map(|k| gr[k] * gd[k] * row[k]).sum();
                    let c = r * r * r * s / n as f64;
                    for j in 0..n {
                        gx[i * n + j] += r * gd[j] * gr[j] - c * row[j];
                    }
                }
            }
            Op::Embedding { table, ids } => {
                let d = nodes[table.0].value.dims2().unwrap().1;
                let gt = self.acc_in(&nodes, *table);
                for (r, &id) in ids.iter().enumerate() {
                    add_into(&mut gt[id * d..(id + 1) * d], &g[r * d..(r + 1) * d], 1.0);
                }
            }
            Op::CausalSoftmax(x) => {
                let n = node.value.dims2().unwrap().1;
                let y = node.value.data();
                let gx = self.acc_in(&nodes, *x);
                for i in 0..n {
                    let yr = &y[i * n..i * n + i + 1];
                    let gr = &g[i * n..i * n + i + 1];
                    let s: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..=i {
                        gx[i * n + j] += yr[j] * (gr[j] - s);
                    }
                }
            }
            Op::SliceCols { x, start } => {
                let (m, w) = node.value.dims2().unwrap();
                let n = nodes[x.0].value.dims2().unwrap().1;
                let gx = self.acc_in(&nodes, *x);
                for i in 0..m {
                    add_into(
                        &mut gx[i * n + start..i * n + start + w],
                        &g[i * w..(i + 1) * w],
                        1.0,
                    );
                }
            }
            Op::ConcatCols(parts) => {
                let (m, n) = node.value.dims2().unwrap();
                let mut off = 0;
                for p in parts {
                    let w = nodes[p.0].value.dims2().unwrap().1;
                    let gp = self.acc_in(&nodes, *p);
                    for i in 0..m {
                        add_into(
                            &mut gp[i * w..(i + 1) * w],
                            &g[i * n + off..i * n + off + w],
                            1.0,
                        );
                    }
                    off += w;
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let w = nodes[p.0].value.numel();
                    add_into(self.acc_in(&nodes, *p), &g[off..off + w], 1.0);
                    off += w;
                }
            }
            Op::SelectRows { x, rows } => {
                let n = node.value.dims2().unwrap().1;
                let gx = self.acc_in(&nodes, *x);
                for (k, &r) in rows.iter().enumerate() {
                    add_into(&mut gx[r * n..(r + 1) * n], &g[k * n..(k + 1) * n], 1.0);
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let (m, v) = nodes[logits.0].value.dims2().unwrap();
                let c = g[0] / m as f64;
                let gl = self.acc_in(&nodes, *logits);
                for i in 0..m {
                    for j in 0..v {
                        gl[i * v + j] += c * probs[i * v + j];
                    }
                    gl[i * v + targets[i]] -= c;
                }
            }
            Op::TokenLogProbs {
                logits,
                targets,
                exclude,
                probs,
            } => {
                let (m, v) = nodes[logits.0].value.dims2().unwrap();
                let gl = self.acc_in(&nodes, *logits);
                for i in 0..m {
                    for j in 0..v {
                        if Some(j) != *exclude {
                            gl[i * v + j] -= g[i] * probs[i * v + j];
                        }
                    }
                    gl[i * v + targets[i]] += g[i];
                }
            }
            Op::ClippedSurrogate { logp, coef } => {
                let gl = self.acc_in(&nodes, *logp);
                for (o, c) in gl.iter_mut().zip(coef) {
                    *o += g[0] * c;
                }
            }
            Op::HalfMse { pred, target } => {
                let pd = nodes[pred.0].value.data();
                let n = pd.len() as f64;
                let gp = self.acc_in(&nodes, *pred);
                for ((o, p), t) in gp.iter_mut().zip(pd).zip(target) {
                    *o += g[0] * (p - t) / n;
                }
            }
            Op::Sum(x) => {
                for o in self.acc_in(&nodes, *x).iter_mut() {
                    *o += g[0];
                }
            }
            Op::DotConst { x, w } => {
                let gx = self.acc_in(&nodes, *x);
                for (o, wi) in gx.iter_mut().zip(w) {
                    *o += g[0] * wi;
                }
            }
        }
        self.nodes = nodes;
    }

    fn acc_in(&mut self, nodes: &[Node], v: Var) -> &mut [f64] {
        let n = nodes[v.0].value.numel();
        self.grads[v.0].get_or_insert_with(|| vec![0.0; n])
    }
}

#[inline]
fn add_into(dst: &mut [f64], src: &[f64], c: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += c * s;
    }
}
