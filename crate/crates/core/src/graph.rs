//! Reverse-mode differentiation over dense 2-D arrays.
//!
//! A `Graph` is a tape: ops are evaluated eagerly as nodes are created, and
//! `backward` walks the tape in reverse, accumulating gradients additively
//! into zero-initialized buffers. One graph instance serves one forward /
//! backward pair and is rebuilt per utterance.

use crate::array::Array;
use crate::dsp::{self, StftConfig};
use crate::error::{Error, Result};
use crate::fir::FirCoefficients;
use crate::loss::{self, MultiResLossConfig};
use crate::scalar::Scalar;
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(pub usize);

/// Cached gate activations for one LSTM cell step.
#[derive(Clone, Debug)]
pub struct LstmCache<S> {
    pub gate_i: Vec<S>,
    pub gate_f: Vec<S>,
    pub gate_g: Vec<S>,
    pub gate_o: Vec<S>,
    pub tanh_c: Vec<S>,
}

/// Fixed-filter context for the harmonic/noise merge inside hn-NSF.
#[derive(Clone, Debug)]
pub struct FirMergeCtx<S> {
    pub lp_voiced: Vec<S>,
    pub hp_voiced: Vec<S>,
    pub lp_unvoiced: Vec<S>,
    pub hp_unvoiced: Vec<S>,
    pub voiced: Vec<bool>,
}

#[derive(Clone, Debug)]
pub enum Op<S: Scalar> {
    Leaf,
    Param(usize),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Exp(NodeId),
    ConcatCols(NodeId, NodeId),
    SliceCols {
        x: NodeId,
        start: usize,
    },
    SliceRow {
        x: NodeId,
        row: usize,
    },
    StackRows(Vec<NodeId>),
    Conv1d {
        x: NodeId,
        w: NodeId,
        kernel: usize,
        dilation: usize,
        pad_left: usize,
    },
    LstmCell {
        x: NodeId,
        state: NodeId,
        w_ih: NodeId,
        w_hh: NodeId,
        bias: NodeId,
        cache: LstmCache<S>,
    },
    UpsampleRows {
        x: NodeId,
        factor: usize,
    },
    FrameWindow {
        x: NodeId,
        cfg: StftConfig,
    },
    SpectralLoss {
        x: NodeId,
        grad: Vec<S>,
    },
    FirMerge {
        harmonic: NodeId,
        noise: NodeId,
        ctx: Box<FirMergeCtx<S>>,
    },
}

impl<S: Scalar> Op<S> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Param(_) => "param",
            Op::Add(..) => "add",
            Op::Mul(..) => "multiply",
            Op::AddRow(..) => "add-row",
            Op::MatMul(..) => "matmul",
            Op::Tanh(..) => "tanh",
            Op::Sigmoid(..) => "sigmoid",
            Op::Exp(..) => "exp",
            Op::ConcatCols(..) => "concat",
            Op::SliceCols { .. } => "slice-cols",
            Op::SliceRow { .. } => "slice-row",
            Op::StackRows(..) => "stack-rows",
            Op::Conv1d { .. } => "dilated-causal-conv1d",
            Op::LstmCell { .. } => "lstm-cell",
            Op::UpsampleRows { .. } => "upsample-rows",
            Op::FrameWindow { .. } => "frame-window",
            Op::SpectralLoss { .. } => "custom-spectral-loss",
            Op::FirMerge { .. } => "fir-merge",
        }
    }
}

struct Node<S: Scalar> {
    value: Array<S>,
    grad: Array<S>,
    op: Op<S>,
}

pub struct Graph<S: Scalar> {
    nodes: Vec<Node<S>>,
    params: Vec<NodeId>,
    ran_backward: bool,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            params: Vec::new(),
            ran_backward: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Array<S> {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> &Array<S> {
        &self.nodes[id.0].grad
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Gradients of all registered parameters, in registration order.
    pub fn param_grads(&self) -> Vec<&Array<S>> {
        self.params.iter().map(|id| &self.nodes[id.0].grad).collect()
    }

    fn push(&mut self, value: Array<S>, op: Op<S>) -> Result<NodeId> {
        if S::DOUBLE && !value.all_finite() {
            return Err(Error::NonFinite(format!("op {}", op.name())));
        }
        let grad = Array::zeros(value.rows(), value.cols());
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { value, grad, op });
        Ok(id)
    }

    pub fn leaf(&mut self, value: Array<S>) -> NodeId {
        self.push(value, Op::Leaf).expect("leaf")
    }

    /// A trainable leaf; gradients are collected in registration order.
    pub fn param(&mut self, value: Array<S>) -> NodeId {
        let idx = self.params.len();
        let id = self.push(value, Op::Param(idx)).expect("param");
        self.params.push(id);
        id
    }

    fn shape_err(&self, op: &'static str, ids: &[NodeId]) -> Error {
        let shapes: Vec<String> = ids
            .iter()
            .map(|id| {
                let (r, c) = self.nodes[id.0].value.shape();
                format!("{}x{}", r, c)
            })
            .collect();
        Error::ShapeMismatch {
            op,
            details: shapes.join(" vs "),
        }
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(self.shape_err("add", &[a, b]));
        }
        let mut out = self.value(a).clone();
        for (o, &v) in out.data_mut().iter_mut().zip(self.nodes[b.0].value.data()) {
            *o += v;
        }
        self.push(out, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(self.shape_err("multiply", &[a, b]));
        }
        let mut out = self.value(a).clone();
        for (o, &v) in out.data_mut().iter_mut().zip(self.nodes[b.0].value.data()) {
            *o *= v;
        }
        self.push(out, Op::Mul(a, b))
    }

    /// Broadcast a 1 x C bias over the rows of a T x C signal.
    pub fn add_row(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (_, c) = self.value(x).shape();
        if self.value(bias).shape() != (1, c) {
            return Err(self.shape_err("add-row", &[x, bias]));
        }
        let mut out = self.value(x).clone();
        let b = self.nodes[bias.0].value.data().to_vec();
        for r in 0..out.rows() {
            for (o, &v) in out.row_mut(r).iter_mut().zip(b.iter()) {
                *o += v;
            }
        }
        self.push(out, Op::AddRow(x, bias))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ar, ak) = self.value(a).shape();
        let (bk, bc) = self.value(b).shape();
        if ak != bk {
            return Err(self.shape_err("matmul", &[a, b]));
        }
        let out = matmul_plain(self.value(a), self.value(b), ar, ak, bc);
        self.push(out, Op::MatMul(a, b))
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        let out = self.value(x).map(|v| v.tanh());
        self.push(out, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let out = self.value(x).map(|v| S::one() / (S::one() + (-v).exp()));
        self.push(out, Op::Sigmoid(x))
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId> {
        let out = self.value(x).map(|v| v.exp());
        self.push(out, Op::Exp(x))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if ar != br {
            return Err(self.shape_err("concat", &[a, b]));
        }
        let mut out = Array::zeros(ar, ac + bc);
        for r in 0..ar {
            out.row_mut(r)[..ac].copy_from_slice(self.nodes[a.0].value.row(r));
        }
        for r in 0..ar {
            let row_b = self.nodes[b.0].value.row(r).to_vec();
            out.row_mut(r)[ac..].copy_from_slice(&row_b);
        }
        self.push(out, Op::ConcatCols(a, b))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, width: usize) -> Result<NodeId> {
        let (r, c) = self.value(x).shape();
        if start + width > c {
            return Err(Error::ShapeMismatch {
                op: "slice-cols",
                details: format!("cols {}..{} of {}x{}", start, start + width, r, c),
            });
        }
        let mut out = Array::zeros(r, width);
        for i in 0..r {
            out.row_mut(i)
                .copy_from_slice(&self.nodes[x.0].value.row(i)[start..start + width]);
        }
        self.push(out, Op::SliceCols { x, start })
    }

    pub fn slice_row(&mut self, x: NodeId, row: usize) -> Result<NodeId> {
        let (r, c) = self.value(x).shape();
        if row >= r {
            return Err(Error::ShapeMismatch {
                op: "slice-row",
                details: format!("row {} of {}x{}", row, r, c),
            });
        }
        let out = Array::from_vec(1, c, self.nodes[x.0].value.row(row).to_vec())?;
        self.push(out, Op::SliceRow { x, row })
    }

    pub fn stack_rows(&mut self, rows: &[NodeId]) -> Result<NodeId> {
        if rows.is_empty() {
            return Err(Error::Config("stack_rows of zero rows".into()));
        }
        let c = self.value(rows[0]).cols();
        for &id in rows {
            if self.value(id).shape() != (1, c) {
                return Err(self.shape_err("stack-rows", &[rows[0], id]));
            }
        }
        let mut out = Array::zeros(rows.len(), c);
        for (i, &id) in rows.iter().enumerate() {
            out.row_mut(i).copy_from_slice(self.nodes[id.0].value.row(0));
        }
        self.push(out, Op::StackRows(rows.to_vec()))
    }

    /// 1-D convolution along rows. `w` is `(kernel * c_in) x c_out`, tap-major.
    /// `pad_left = (kernel - 1) * dilation` gives a causal convolution;
    /// `pad_left = dilation * (kernel - 1) / 2` a centered one.
    pub fn conv1d(
        &mut self,
        x: NodeId,
        w: NodeId,
        kernel: usize,
        dilation: usize,
        pad_left: usize,
    ) -> Result<NodeId> {
        let (t, c_in) = self.value(x).shape();
        let (wr, c_out) = self.value(w).shape();
        if wr != kernel * c_in {
            return Err(self.shape_err("dilated-causal-conv1d", &[x, w]));
        }
        let out = conv1d_forward(
            self.value(x),
            self.value(w),
            t,
            c_in,
            c_out,
            kernel,
            dilation,
            pad_left,
        );
        self.push(
            out,
            Op::Conv1d {
                x,
                w,
                kernel,
                dilation,
                pad_left,
            },
        )
    }

    /// One LSTM step. `x` is `1 x D`, `state` is `1 x 2H` (`[h, c]`),
    /// `w_ih` is `D x 4H`, `w_hh` is `H x 4H`, `bias` is `1 x 4H` with
    /// gate order `[i, f, g, o]`. Returns the new `1 x 2H` state.
    pub fn lstm_cell(
        &mut self,
        x: NodeId,
        state: NodeId,
        w_ih: NodeId,
        w_hh: NodeId,
        bias: NodeId,
    ) -> Result<NodeId> {
        let (xr, d) = self.value(x).shape();
        let (sr, s2h) = self.value(state).shape();
        let h = s2h / 2;
        if xr != 1
            || sr != 1
            || s2h != 2 * h
            || self.value(w_ih).shape() != (d, 4 * h)
            || self.value(w_hh).shape() != (h, 4 * h)
            || self.value(bias).shape() != (1, 4 * h)
        {
            return Err(self.shape_err("lstm-cell", &[x, state, w_ih, w_hh, bias]));
        }
        let h_prev = &self.value(state).data()[..h];
        let c_prev = &self.value(state).data()[h..];
        let mut z = self.value(bias).data().to_vec();
        let xv = self.value(x).data();
        for (di, &xd) in xv.iter().enumerate() {
            let wrow = self.value(w_ih).row(di);
            for (zj, &wj) in z.iter_mut().zip(wrow.iter()) {
                *zj += xd * wj;
            }
        }
        for (hi, &hv) in h_prev.iter().enumerate() {
            let wrow = self.value(w_hh).row(hi);
            for (zj, &wj) in z.iter_mut().zip(wrow.iter()) {
                *zj += hv * wj;
            }
        }
        let sig = |v: S| S::one() / (S::one() + (-v).exp());
        let gate_i: Vec<S> = z[..h].iter().map(|&v| sig(v)).collect();
        let gate_f: Vec<S> = z[h..2 * h].iter().map(|&v| sig(v)).collect();
        let gate_g: Vec<S> = z[2 * h..3 * h].iter().map(|&v| v.tanh()).collect();
        let gate_o: Vec<S> = z[3 * h..].iter().map(|&v| sig(v)).collect();
        let mut out = Array::zeros(1, 2 * h);
        let mut tanh_c = vec![S::zero(); h];
        for j in 0..h {
            let c_new = gate_f[j] * c_prev[j] + gate_i[j] * gate_g[j];
            tanh_c[j] = c_new.tanh();
            out.data_mut()[j] = gate_o[j] * tanh_c[j];
            out.data_mut()[h + j] = c_new;
        }
        self.push(
            out,
            Op::LstmCell {
                x,
                state,
                w_ih,
                w_hh,
                bias,
                cache: LstmCache {
                    gate_i,
                    gate_f,
                    gate_g,
                    gate_o,
                    tanh_c,
                },
            },
        )
    }

    pub fn upsample_rows(&mut self, x: NodeId, factor: usize) -> Result<NodeId> {
        if factor == 0 {
            return Err(Error::Config("upsample factor must be >= 1".into()));
        }
        let out = dsp::upsample_replicate(self.value(x), factor);
        self.push(out, Op::UpsampleRows { x, factor })
    }

    /// Frame a T x 1 signal into Hann-windowed N x M frames.
    pub fn frame_window(&mut self, x: NodeId, cfg: StftConfig) -> Result<NodeId> {
        let (t, c) = self.value(x).shape();
        if c != 1 {
            return Err(Error::ShapeMismatch {
                op: "frame-window",
                details: format!("expected T x 1, got {}x{}", t, c),
            });
        }
        let frames = dsp::frame_and_window(self.value(x).data(), &cfg)?;
        let out = Array::from_vec(frames.num_frames, frames.frame_length, frames.data)?;
        self.push(out, Op::FrameWindow { x, cfg })
    }

    /// Multi-resolution spectral loss against a fixed target waveform.
    /// Produces a 1 x 1 scalar node; the analytic waveform gradient is
    /// computed here and replayed during backward.
    pub fn spectral_loss(
        &mut self,
        x: NodeId,
        target: &[S],
        cfg: &MultiResLossConfig,
    ) -> Result<NodeId> {
        let (t, c) = self.value(x).shape();
        if c != 1 || t != target.len() {
            return Err(Error::ShapeMismatch {
                op: "custom-spectral-loss",
                details: format!("signal {}x{} vs target {}", t, c, target.len()),
            });
        }
        let (value, grad) = loss::multi_res_loss(self.value(x).data(), target, cfg)?;
        self.push(Array::scalar_value(value), Op::SpectralLoss { x, grad })
    }

    /// Fixed FIR merge of harmonic and noise branches with per-sample
    /// voiced/unvoiced filter-pair selection. Differentiable w.r.t. both
    /// branch inputs.
    pub fn fir_merge(
        &mut self,
        harmonic: NodeId,
        noise: NodeId,
        bank: &crate::fir::FirBank,
        voiced: Vec<bool>,
    ) -> Result<NodeId> {
        let (t, c) = self.value(harmonic).shape();
        if c != 1 || self.value(noise).shape() != (t, 1) || voiced.len() != t {
            return Err(self.shape_err("fir-merge", &[harmonic, noise]));
        }
        let ctx = Box::new(FirMergeCtx {
            lp_voiced: convert_taps(&bank.lp_voiced),
            hp_voiced: convert_taps(&bank.hp_voiced),
            lp_unvoiced: convert_taps(&bank.lp_unvoiced),
            hp_unvoiced: convert_taps(&bank.hp_unvoiced),
            voiced,
        });
        let value = fir_merge_forward(
            self.value(harmonic).data(),
            self.value(noise).data(),
            &ctx,
        );
        self.push(
            Array::column(value),
            Op::FirMerge {
                harmonic,
                noise,
                ctx,
            },
        )
    }

    /// Seed the root gradient and propagate through the tape in reverse.
    pub fn backward(&mut self, root: NodeId, seed: Array<S>) -> Result<()> {
        if root.0 >= self.nodes.len() {
            return Err(Error::Config("backward before forward".into()));
        }
        if seed.shape() != self.nodes[root.0].value.shape() {
            return Err(Error::ShapeMismatch {
                op: "backward-seed",
                details: format!(
                    "seed {:?} vs root {:?}",
                    seed.shape(),
                    self.nodes[root.0].value.shape()
                ),
            });
        }
        for n in &mut self.nodes {
            n.grad.fill(S::zero());
        }
        self.nodes[root.0].grad = seed;
        for i in (0..=root.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &rest[0];
            if node.grad.data().iter().all(|g| *g == S::zero()) {
                continue;
            }
            backprop_op(node, before)?;
        }
        self.ran_backward = true;
        Ok(())
    }

    /// True once `backward` has completed on this tape.
    pub fn has_run_backward(&self) -> bool {
        self.ran_backward
    }

    /// Backward from a scalar node with seed gradient 1.
    pub fn backward_scalar(&mut self, root: NodeId) -> Result<()> {
        if self.value(root).shape() != (1, 1) {
            return Err(Error::ShapeMismatch {
                op: "backward-seed",
                details: "root is not a scalar".into(),
            });
        }
        self.backward(root, Array::scalar_value(S::one()))
    }
}

fn convert_taps<S: Scalar>(c: &FirCoefficients) -> Vec<S> {
    c.taps.iter().map(|&t| S::from_double(t)).collect()
}

fn matmul_plain<S: Scalar>(a: &Array<S>, b: &Array<S>, ar: usize, ak: usize, bc: usize) -> Array<S> {
    let mut out = Array::zeros(ar, bc);
    out.data_mut()
        .par_chunks_mut(bc)
        .enumerate()
        .for_each(|(r, orow)| {
            for k in 0..ak {
                let av = a.get(r, k);
                if av == S::zero() {
                    continue;
                }
                let brow = b.row(k);
                for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                    *o += av * bv;
                }
            }
        });
    out
}

/// a^T * g  (for weight gradients)
fn matmul_at_b<S: Scalar>(a: &Array<S>, g: &Array<S>) -> Array<S> {
    let (t, k) = a.shape();
    let (_, c) = g.shape();
    let mut out = Array::zeros(k, c);
    out.data_mut()
        .par_chunks_mut(c)
        .enumerate()
        .for_each(|(ki, orow)| {
            for r in 0..t {
                let av = a.get(r, ki);
                if av == S::zero() {
                    continue;
                }
                for (o, &gv) in orow.iter_mut().zip(g.row(r).iter()) {
                    *o += av * gv;
                }
            }
        });
    out
}

/// g * b^T  (for input gradients)
fn matmul_a_bt<S: Scalar>(g: &Array<S>, b: &Array<S>) -> Array<S> {
    let (t, _) = g.shape();
    let (k, _) = b.shape();
    let mut out = Array::zeros(t, k);
    out.data_mut()
        .par_chunks_mut(k)
        .enumerate()
        .for_each(|(r, orow)| {
            let grow = g.row(r);
            for (ki, o) in orow.iter_mut().enumerate() {
                let brow = b.row(ki);
                let mut acc = S::zero();
                for (gv, bv) in grow.iter().zip(brow.iter()) {
                    acc += *gv * *bv;
                }
                *o = acc;
            }
        });
    out
}

#[allow(clippy::too_many_arguments)]
fn conv1d_forward<S: Scalar>(
    x: &Array<S>,
    w: &Array<S>,
    t: usize,
    c_in: usize,
    c_out: usize,
    kernel: usize,
    dilation: usize,
    pad_left: usize,
) -> Array<S> {
    let mut out = Array::zeros(t, c_out);
    out.data_mut()
        .par_chunks_mut(c_out)
        .enumerate()
        .for_each(|(row, orow)| {
            for tap in 0..kernel {
                let src = row as isize + (tap * dilation) as isize - pad_left as isize;
                if src < 0 || src as usize >= t {
                    continue;
                }
                let xrow = x.row(src as usize);
                for (c, &xv) in xrow.iter().enumerate() {
                    if xv == S::zero() {
                        continue;
                    }
                    let wrow = w.row(tap * c_in + c);
                    for (o, &wv) in orow.iter_mut().zip(wrow.iter()) {
                        *o += xv * wv;
                    }
                }
            }
        });
    out
}

fn fir_convolve_delay_comp<S: Scalar>(x: &[S], taps: &[S]) -> Vec<S> {
    let delay = (taps.len() - 1) / 2;
    let t = x.len();
    (0..t)
        .map(|i| {
            let mut acc = S::zero();
            for (tap, &h) in taps.iter().enumerate() {
                let src = i as isize - tap as isize + delay as isize;
                if src >= 0 && (src as usize) < t {
                    acc += h * x[src as usize];
                }
            }
            acc
        })
        .collect()
}

/// Transpose of `fir_convolve_delay_comp` as a linear map.
fn fir_convolve_transpose<S: Scalar>(g: &[S], taps: &[S]) -> Vec<S> {
    let delay = (taps.len() - 1) / 2;
    let t = g.len();
    (0..t)
        .map(|s| {
            let mut acc = S::zero();
            for (tap, &h) in taps.iter().enumerate() {
                let dst = s as isize + tap as isize - delay as isize;
                if dst >= 0 && (dst as usize) < t {
                    acc += h * g[dst as usize];
                }
            }
            acc
        })
        .collect()
}

fn fir_merge_forward<S: Scalar>(harmonic: &[S], noise: &[S], ctx: &FirMergeCtx<S>) -> Vec<S> {
    let hv = fir_convolve_delay_comp(harmonic, &ctx.lp_voiced);
    let nv = fir_convolve_delay_comp(noise, &ctx.hp_voiced);
    let hu = fir_convolve_delay_comp(harmonic, &ctx.lp_unvoiced);
    let nu = fir_convolve_delay_comp(noise, &ctx.hp_unvoiced);
    (0..harmonic.len())
        .map(|t| {
            if ctx.voiced[t] {
                hv[t] + nv[t]
            } else {
                hu[t] + nu[t]
            }
        })
        .collect()
}

fn add_into<S: Scalar>(dst: &mut Array<S>, src: &Array<S>) {
    for (d, &s) in dst.data_mut().iter_mut().zip(src.data().iter()) {
        *d += s;
    }
}

fn backprop_op<S: Scalar>(node: &Node<S>, before: &mut [Node<S>]) -> Result<()> {
    let gout = &node.grad;
    match &node.op {
        Op::Leaf | Op::Param(_) => {}
        Op::Add(a, b) => {
            add_into(&mut before[a.0].grad, gout);
            add_into(&mut before[b.0].grad, gout);
        }
        Op::Mul(a, b) => {
            let ga = {
                let bv = &before[b.0].value;
                let mut g = gout.clone();
                for (x, &v) in g.data_mut().iter_mut().zip(bv.data().iter()) {
                    *x *= v;
                }
                g
            };
            let gb = {
                let av = &before[a.0].value;
                let mut g = gout.clone();
                for (x, &v) in g.data_mut().iter_mut().zip(av.data().iter()) {
                    *x *= v;
                }
                g
            };
            add_into(&mut before[a.0].grad, &ga);
            add_into(&mut before[b.0].grad, &gb);
        }
        Op::AddRow(x, bias) => {
            add_into(&mut before[x.0].grad, gout);
            let c = gout.cols();
            let bg = before[bias.0].grad.data_mut();
            for r in 0..gout.rows() {
                for (j, &g) in gout.row(r).iter().enumerate() {
                    bg[j % c] += g;
                }
            }
        }
        Op::MatMul(a, b) => {
            let ga = matmul_a_bt(gout, &before[b.0].value);
            let gb = matmul_at_b(&before[a.0].value, gout);
            add_into(&mut before[a.0].grad, &ga);
            add_into(&mut before[b.0].grad, &gb);
        }
        Op::Tanh(x) => {
            let gx = {
                let mut g = gout.clone();
                for (gv, &v) in g.data_mut().iter_mut().zip(node.value.data().iter()) {
                    *gv *= S::one() - v * v;
                }
                g
            };
            add_into(&mut before[x.0].grad, &gx);
        }
        Op::Sigmoid(x) => {
            let gx = {
                let mut g = gout.clone();
                for (gv, &v) in g.data_mut().iter_mut().zip(node.value.data().iter()) {
                    *gv *= v * (S::one() - v);
                }
                g
            };
            add_into(&mut before[x.0].grad, &gx);
        }
        Op::Exp(x) => {
            let gx = {
                let mut g = gout.clone();
                for (gv, &v) in g.data_mut().iter_mut().zip(node.value.data().iter()) {
                    *gv *= v;
                }
                g
            };
            add_into(&mut before[x.0].grad, &gx);
        }
        Op::ConcatCols(a, b) => {
            let ac = before[a.0].value.cols();
            {
                let ag = &mut before[a.0].grad;
                for r in 0..gout.rows() {
                    for (j, g) in ag.row_mut(r).iter_mut().enumerate() {
                        *g += gout.row(r)[j];
                    }
                }
            }
            {
                let bg = &mut before[b.0].grad;
                for r in 0..gout.rows() {
                    for (j, g) in bg.row_mut(r).iter_mut().enumerate() {
                        *g += gout.row(r)[ac + j];
                    }
                }
            }
        }
        Op::SliceCols { x, start } => {
            let xg = &mut before[x.0].grad;
            for r in 0..gout.rows() {
                for (j, &g) in gout.row(r).iter().enumerate() {
                    xg.row_mut(r)[start + j] += g;
                }
            }
        }
        Op::SliceRow { x, row } => {
            let xg = &mut before[x.0].grad;
            for (j, &g) in gout.row(0).iter().enumerate() {
                xg.row_mut(*row)[j] += g;
            }
        }
        Op::StackRows(rows) => {
            for (i, id) in rows.iter().enumerate() {
                let rg = &mut before[id.0].grad;
                for (j, &g) in gout.row(i).iter().enumerate() {
                    rg.row_mut(0)[j] += g;
                }
            }
        }
        Op::Conv1d {
            x,
            w,
            kernel,
            dilation,
            pad_left,
        } => {
            let (t, c_in) = before[x.0].value.shape();
            let c_out = gout.cols();
            let gx = {
                let wv = &before[w.0].value;
                let mut gx = Array::zeros(t, c_in);
                gx.data_mut()
                    .par_chunks_mut(c_in)
                    .enumerate()
                    .for_each(|(s, grow)| {
                        for tap in 0..*kernel {
                            let dst =
                                s as isize - (tap * dilation) as isize + *pad_left as isize;
                            if dst < 0 || dst as usize >= t {
                                continue;
                            }
                            let go = gout.row(dst as usize);
                            for (c, g) in grow.iter_mut().enumerate() {
                                let wrow = wv.row(tap * c_in + c);
                                let mut acc = S::zero();
                                for (wv_, gv) in wrow.iter().zip(go.iter()) {
                                    acc += *wv_ * *gv;
                                }
                                *g += acc;
                            }
                        }
                    });
                gx
            };
            let gw = {
                let xv = &before[x.0].value;
                let mut gw = Array::zeros(*kernel * c_in, c_out);
                gw.data_mut()
                    .par_chunks_mut(c_out)
                    .enumerate()
                    .for_each(|(row, wrow)| {
                        let tap = row / c_in;
                        let c = row % c_in;
                        for tt in 0..t {
                            let src =
                                tt as isize + (tap * dilation) as isize - *pad_left as isize;
                            if src < 0 || src as usize >= t {
                                continue;
                            }
                            let xvv = xv.get(src as usize, c);
                            if xvv == S::zero() {
                                continue;
                            }
                            for (o, &gv) in wrow.iter_mut().zip(gout.row(tt).iter()) {
                                *o += xvv * gv;
                            }
                        }
                    });
                gw
            };
            add_into(&mut before[x.0].grad, &gx);
            add_into(&mut before[w.0].grad, &gw);
        }
        Op::LstmCell {
            x,
            state,
            w_ih,
            w_hh,
            bias,
            cache,
        } => {
            let h = cache.gate_i.len();
            let dh = &gout.data()[..h];
            let dc_direct = &gout.data()[h..];
            let h_prev: Vec<S> = before[state.0].value.data()[..h].to_vec();
            let c_prev: Vec<S> = before[state.0].value.data()[h..].to_vec();
            let x_row: Vec<S> = before[x.0].value.row(0).to_vec();
            let mut da = vec![S::zero(); 4 * h];
            let mut dstate = vec![S::zero(); 2 * h];
            for j in 0..h {
                let i = cache.gate_i[j];
                let f = cache.gate_f[j];
                let g = cache.gate_g[j];
                let o = cache.gate_o[j];
                let tc = cache.tanh_c[j];
                let dc = dc_direct[j] + dh[j] * o * (S::one() - tc * tc);
                let do_ = dh[j] * tc;
                let di = dc * g;
                let dg = dc * i;
                let df = dc * c_prev[j];
                dstate[h + j] = dc * f;
                da[j] = di * i * (S::one() - i);
                da[h + j] = df * f * (S::one() - f);
                da[2 * h + j] = dg * (S::one() - g * g);
                da[3 * h + j] = do_ * o * (S::one() - o);
            }
            // dx = da * W_ih^T ; dh_prev = da * W_hh^T
            let d_in = before[x.0].value.cols();
            let mut dx = vec![S::zero(); d_in];
            {
                let w = &before[w_ih.0].value;
                for (di_idx, dxv) in dx.iter_mut().enumerate() {
                    let wrow = w.row(di_idx);
                    let mut acc = S::zero();
                    for (wv, av) in wrow.iter().zip(da.iter()) {
                        acc += *wv * *av;
                    }
                    *dxv = acc;
                }
            }
            {
                let w = &before[w_hh.0].value;
                for (hi, ds) in dstate.iter_mut().take(h).enumerate() {
                    let wrow = w.row(hi);
                    let mut acc = S::zero();
                    for (wv, av) in wrow.iter().zip(da.iter()) {
                        acc += *wv * *av;
                    }
                    *ds = acc;
                }
            }
            // weight and bias grads
            {
                let gw = &mut before[w_ih.0].grad;
                for (di_idx, &xd) in x_row.iter().enumerate() {
                    if xd == S::zero() {
                        continue;
                    }
                    for (g, &av) in gw.row_mut(di_idx).iter_mut().zip(da.iter()) {
                        *g += xd * av;
                    }
                }
            }
            {
                let gw = &mut before[w_hh.0].grad;
                for (hi, &hv) in h_prev.iter().enumerate() {
                    if hv == S::zero() {
                        continue;
                    }
                    for (g, &av) in gw.row_mut(hi).iter_mut().zip(da.iter()) {
                        *g += hv * av;
                    }
                }
            }
            for (g, &av) in before[bias.0].grad.data_mut().iter_mut().zip(da.iter()) {
                *g += av;
            }
            for (g, &dv) in before[x.0].grad.data_mut().iter_mut().zip(dx.iter()) {
                *g += dv;
            }
            for (g, &dv) in before[state.0].grad.data_mut().iter_mut().zip(dstate.iter()) {
                *g += dv;
            }
        }
        Op::UpsampleRows { x, factor } => {
            let xg = &mut before[x.0].grad;
            let c = gout.cols();
            for b in 0..xg.rows() {
                for r in 0..*factor {
                    let grow = gout.row(b * factor + r);
                    for j in 0..c {
                        xg.row_mut(b)[j] += grow[j];
                    }
                }
            }
        }
        Op::FrameWindow { x, cfg } => {
            let window = dsp::hann_window::<S>(cfg.frame_length);
            let xg = &mut before[x.0].grad;
            let t = xg.rows();
            for n in 0..gout.rows() {
                let start = n * cfg.frame_shift;
                for (m, &g) in gout.row(n).iter().enumerate() {
                    if start + m < t {
                        xg.row_mut(start + m)[0] += g * window[m];
                    }
                }
            }
        }
        Op::SpectralLoss { x, grad } => {
            let seed = gout.item();
            let xg = &mut before[x.0].grad;
            for (g, &v) in xg.data_mut().iter_mut().zip(grad.iter()) {
                *g += seed * v;
            }
        }
        Op::FirMerge {
            harmonic,
            noise,
            ctx,
        } => {
            let t = gout.rows();
            let mut g_voiced = vec![S::zero(); t];
            let mut g_unvoiced = vec![S::zero(); t];
            for i in 0..t {
                if ctx.voiced[i] {
                    g_voiced[i] = gout.data()[i];
                } else {
                    g_unvoiced[i] = gout.data()[i];
                }
            }
            let mut dh = fir_convolve_transpose(&g_voiced, &ctx.lp_voiced);
            let dh_u = fir_convolve_transpose(&g_unvoiced, &ctx.lp_unvoiced);
            for (a, b) in dh.iter_mut().zip(dh_u.iter()) {
                *a += *b;
            }
            let mut dn = fir_convolve_transpose(&g_voiced, &ctx.hp_voiced);
            let dn_u = fir_convolve_transpose(&g_unvoiced, &ctx.hp_unvoiced);
            for (a, b) in dn.iter_mut().zip(dn_u.iter()) {
                *a += *b;
            }
            for (g, &v) in before[harmonic.0].grad.data_mut().iter_mut().zip(dh.iter()) {
                *g += v;
            }
            for (g, &v) in before[noise.0].grad.data_mut().iter_mut().zip(dn.iter()) {
                *g += v;
            }
        }
    }
    Ok(())
}
