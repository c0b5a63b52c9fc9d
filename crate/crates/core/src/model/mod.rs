//! Model assembly: embedding → (alignment) → gated cross stack and DNN in one
//! of three topologies → logistic head, plus the LogLoss objective.

pub mod mlp;

use ndarray::{concatenate, s, Array1, Array2, ArrayViewD, ArrayViewMutD, Axis};
use serde::{Deserialize, Serialize};

use crate::crossnet::{sigmoid, CrossStack, GateMode, StackOutput};
use crate::embedding::{AlignmentLayer, EmbeddingTables, SparseRowGrads};
use crate::error::{Error, Result};
use crate::seed;

pub use mlp::{DenseLayer, DropoutKey, Mlp, MlpCache, MlpGrads};

pub const LOGIT_CLAMP: f64 = 35.0;
pub const PROB_EPS: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Cross stack only.
    GcnOnly,
    /// Cross stack followed by the DNN (GDCN-S).
    Stacked,
    /// Cross stack and DNN side by side on `c₀` (GDCN-P).
    Parallel,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcn" => Ok(Variant::GcnOnly),
            "gdcn-s" => Ok(Variant::Stacked),
            "gdcn-p" => Ok(Variant::Parallel),
            other => Err(Error::config(format!("unknown variant `{other}`"))),
        }
    }
}

impl Variant {
    pub fn flag(self) -> &'static str {
        match self {
            Variant::GcnOnly => "gcn",
            Variant::Stacked => "gdcn-s",
            Variant::Parallel => "gdcn-p",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub variant: Variant,
    pub cross_layers: usize,
    /// Hidden widths; ignored by [`Variant::GcnOnly`].
    pub dnn_widths: Vec<usize>,
    pub dropout: f64,
    pub gate_mode: GateMode,
    /// Route embeddings through a dimension-alignment layer first.
    pub align: bool,
    pub dims: Vec<usize>,
    pub field_sizes: Vec<usize>,
}

impl Topology {
    /// Defaults used throughout: 3 gated cross layers, DNN 400-400-400,
    /// dropout 0.5, learned gates, width 16 per field.
    pub fn new(variant: Variant, field_sizes: Vec<usize>) -> Self {
        let dims = vec![16; field_sizes.len()];
        Topology {
            variant,
            cross_layers: 3,
            dnn_widths: if variant == Variant::GcnOnly {
                Vec::new()
            } else {
                vec![400, 400, 400]
            },
            dropout: 0.5,
            gate_mode: GateMode::Learned,
            align: false,
            dims,
            field_sizes,
        }
    }

    pub fn embedding_width(&self) -> usize {
        self.dims.iter().sum()
    }

    /// Width `D` seen by the cross stack.
    pub fn cross_width(&self) -> usize {
        if self.align {
            self.dims.len() * self.dims.iter().copied().max().unwrap_or(0)
        } else {
            self.embedding_width()
        }
    }

    fn effective_dnn(&self) -> &[usize] {
        if self.variant == Variant::GcnOnly {
            &[]
        } else {
            &self.dnn_widths
        }
    }

    pub fn head_width(&self) -> usize {
        let d = self.cross_width();
        let h = self.effective_dnn().last().copied().unwrap_or(d);
        match self.variant {
            Variant::GcnOnly => d,
            Variant::Stacked => h,
            Variant::Parallel => d + h,
        }
    }

    /// Dims the cross matrices are blocked by.
    pub fn cross_block_dims(&self) -> Vec<usize> {
        if self.align {
            let d_max = self.dims.iter().copied().max().unwrap_or(0);
            vec![d_max; self.dims.len()]
        } else {
            self.dims.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.len() != self.field_sizes.len() {
            return Err(Error::config(format!(
                "{} dims for {} fields",
                self.dims.len(),
                self.field_sizes.len()
            )));
        }
        if self.dims.is_empty() {
            return Err(Error::config("model needs at least one field"));
        }
        if self.dims.contains(&0) || self.field_sizes.contains(&0) {
            return Err(Error::config("field dims and sizes must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub topology: Topology,
    pub embedding: EmbeddingTables,
    pub align: Option<AlignmentLayer>,
    pub cross: CrossStack,
    pub mlp: Mlp,
    pub head: Array1<f64>,
}

/// Whether a forward pass samples dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train(DropoutKey),
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub rows: Vec<Vec<u32>>,
    /// Concatenated raw embeddings, `B × Σd_f`.
    pub raw_c0: Array2<f64>,
    /// Aligned input when an alignment layer is present.
    pub aligned_c0: Option<Array2<f64>>,
    pub stack: StackOutput,
    pub mlp_cache: Option<MlpCache>,
    pub final_vec: Array2<f64>,
    pub logits: Array1<f64>,
    pub probs: Array1<f64>,
}

impl ForwardTrace {
    pub fn c0(&self) -> &Array2<f64> {
        self.aligned_c0.as_ref().unwrap_or(&self.raw_c0)
    }

    /// Per-layer gate matrices (`B × D`).
    pub fn gate_trace(&self) -> Vec<&Array2<f64>> {
        self.stack.gate_trace()
    }
}

#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub embedding: SparseRowGrads,
    pub align: Option<Vec<Array2<f64>>>,
    pub cross: Vec<[Array2<f64>; 2]>,
    pub cross_bias: Vec<Array1<f64>>,
    pub mlp: Vec<(Array2<f64>, Array1<f64>)>,
    pub head: Array1<f64>,
    pub loss: f64,
}

impl ModelGrads {
    /// Dense gradients in the order of [`Model::dense_params_mut`].
    pub fn dense(&self) -> Vec<ArrayViewD<'_, f64>> {
        let mut out = Vec::new();
        if let Some(a) = &self.align {
            out.extend(a.iter().map(|m| m.view().into_dyn()));
        }
        for ([wc, wg], b) in self.cross.iter().zip(&self.cross_bias) {
            out.push(wc.view().into_dyn());
            out.push(wg.view().into_dyn());
            out.push(b.view().into_dyn());
        }
        for (w, b) in &self.mlp {
            out.push(w.view().into_dyn());
            out.push(b.view().into_dyn());
        }
        out.push(self.head.view().into_dyn());
        out
    }

    pub fn all_finite(&self) -> bool {
        self.dense().iter().all(|g| g.iter().all(|v| v.is_finite()))
            && self
                .embedding
                .fields
                .iter()
                .all(|f| f.values().all(|g| g.iter().all(|v| v.is_finite())))
    }
}

impl Model {
    pub fn init(topology: Topology, seed: u64) -> Result<Self> {
        topology.validate()?;
        let init_seed = seed::derive(seed, "init", &[]);
        let embedding = EmbeddingTables::init(&topology.field_sizes, &topology.dims, init_seed)?;
        let align = topology
            .align
            .then(|| AlignmentLayer::init(&topology.dims, init_seed));
        let d = topology.cross_width();
        let cross = CrossStack::init(d, topology.cross_layers, topology.gate_mode, init_seed);
        let mlp = Mlp::init(d, topology.effective_dnn(), topology.dropout, init_seed)?;
        let hw = topology.head_width();
        let mut rng = seed::rng(init_seed, "head", &[]);
        let head = crate::embedding::uniform_init(1, hw, hw, &mut rng)
            .into_shape_with_order(hw)
            .expect("row vector");
        Ok(Model {
            topology,
            embedding,
            align,
            cross,
            mlp,
            head,
        })
    }

    /// Checks that every tensor agrees with the topology.
    pub fn validate(&self) -> Result<()> {
        let t = &self.topology;
        t.validate()?;
        if self.embedding.dims() != t.dims || self.embedding.field_sizes() != t.field_sizes {
            return Err(Error::config("embedding tables disagree with topology"));
        }
        if t.align != self.align.is_some() {
            return Err(Error::config("alignment layer presence disagrees with topology"));
        }
        if let Some(a) = &self.align {
            let d_max = t.dims.iter().copied().max().unwrap_or(0);
            if a.input_dims() != t.dims || a.matrices.iter().any(|m| m.ncols() != d_max) {
                return Err(Error::config("alignment matrices disagree with dims"));
            }
        }
        let d = t.cross_width();
        if self.cross.depth() != t.cross_layers
            || self.cross.gate_mode != t.gate_mode
            || self.cross.layers.iter().any(|p| p.width() != d)
        {
            return Err(Error::config("cross stack disagrees with topology"));
        }
        let widths: Vec<usize> = self.mlp.layers.iter().map(|l| l.b.len()).collect();
        if widths != t.effective_dnn() {
            return Err(Error::config("dnn widths disagree with topology"));
        }
        let mut n_in = d;
        for l in &self.mlp.layers {
            if l.w.ncols() != n_in {
                return Err(Error::config("dnn layer widths do not conform"));
            }
            n_in = l.b.len();
        }
        if self.head.len() != t.head_width() {
            return Err(Error::config(format!(
                "head width {} vs expected {}",
                self.head.len(),
                t.head_width()
            )));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.embedding.num_params()
            + self.align.as_ref().map_or(0, AlignmentLayer::num_params)
            + self.cross.num_params()
            + self.mlp.num_params()
            + self.head.len()
    }

    /// Dense (non-embedding) parameters, in a fixed order shared with
    /// [`ModelGrads::dense`] and the checkpoint writer.
    pub fn dense_params_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut out = Vec::new();
        if let Some(a) = &mut self.align {
            out.extend(a.matrices.iter_mut().map(|m| m.view_mut().into_dyn()));
        }
        for p in &mut self.cross.layers {
            out.push(p.w_c.view_mut().into_dyn());
            out.push(p.w_g.view_mut().into_dyn());
            out.push(p.b.view_mut().into_dyn());
        }
        for l in &mut self.mlp.layers {
            out.push(l.w.view_mut().into_dyn());
            out.push(l.b.view_mut().into_dyn());
        }
        out.push(self.head.view_mut().into_dyn());
        out
    }

    /// Every tensor with its checkpoint name.
    pub fn named_tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = Vec::new();
        for (f, t) in self.embedding.tables.iter().enumerate() {
            out.push((format!("emb.{f}"), t.view().into_dyn()));
        }
        if let Some(a) = &self.align {
            for (f, m) in a.matrices.iter().enumerate() {
                out.push((format!("align.{f}"), m.view().into_dyn()));
            }
        }
        for (l, p) in self.cross.layers.iter().enumerate() {
            out.push((format!("cross.{l}.W_c"), p.w_c.view().into_dyn()));
            out.push((format!("cross.{l}.W_g"), p.w_g.view().into_dyn()));
            out.push((format!("cross.{l}.b"), p.b.view().into_dyn()));
        }
        for (l, d) in self.mlp.layers.iter().enumerate() {
            out.push((format!("dnn.{l}.W"), d.w.view().into_dyn()));
            out.push((format!("dnn.{l}.b"), d.b.view().into_dyn()));
        }
        out.push(("head.w".to_string(), self.head.view().into_dyn()));
        out
    }

    /// Mutable counterpart of [`Model::named_tensors`], same order.
    pub fn named_tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        let mut out = Vec::new();
        for (f, t) in self.embedding.tables.iter_mut().enumerate() {
            out.push((format!("emb.{f}"), t.view_mut().into_dyn()));
        }
        if let Some(a) = &mut self.align {
            for (f, m) in a.matrices.iter_mut().enumerate() {
                out.push((format!("align.{f}"), m.view_mut().into_dyn()));
            }
        }
        for (l, p) in self.cross.layers.iter_mut().enumerate() {
            out.push((format!("cross.{l}.W_c"), p.w_c.view_mut().into_dyn()));
            out.push((format!("cross.{l}.W_g"), p.w_g.view_mut().into_dyn()));
            out.push((format!("cross.{l}.b"), p.b.view_mut().into_dyn()));
        }
        for (l, d) in self.mlp.layers.iter_mut().enumerate() {
            out.push((format!("dnn.{l}.W"), d.w.view_mut().into_dyn()));
            out.push((format!("dnn.{l}.b"), d.b.view_mut().into_dyn()));
        }
        out.push(("head.w".to_string(), self.head.view_mut().into_dyn()));
        out
    }

    pub fn forward_batch(&self, rows: &[&[u32]], mode: Mode) -> Result<ForwardTrace> {
        let raw_c0 = self.embedding.lookup_batch(rows.iter().copied())?;
        let aligned_c0 = match &self.align {
            Some(a) => Some(a.forward(&raw_c0)?),
            None => None,
        };
        let c0 = aligned_c0.as_ref().unwrap_or(&raw_c0);
        let stack = self.cross.forward(c0)?;
        let dropout = match mode {
            Mode::Eval => None,
            Mode::Train(k) => Some(k),
        };
        let (final_vec, mlp_cache) = match self.topology.variant {
            Variant::GcnOnly => (stack.output.clone(), None),
            Variant::Stacked => {
                let (h, c) = self.mlp.forward(&stack.output, dropout)?;
                (h, Some(c))
            }
            Variant::Parallel => {
                let (h, c) = self.mlp.forward(c0, dropout)?;
                let cat = concatenate(Axis(1), &[stack.output.view(), h.view()])
                    .map_err(|e| Error::shape(e.to_string()))?;
                (cat, Some(c))
            }
        };
        if final_vec.ncols() != self.head.len() {
            return Err(Error::config(format!(
                "final vector width {} vs head width {}",
                final_vec.ncols(),
                self.head.len()
            )));
        }
        let logits = final_vec.dot(&self.head);
        let probs = logits.mapv(|z| sigmoid(z.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)));
        Ok(ForwardTrace {
            rows: rows.iter().map(|r| r.to_vec()).collect(),
            raw_c0,
            aligned_c0,
            stack,
            mlp_cache,
            final_vec,
            logits,
            probs,
        })
    }

    /// Single-instance prediction.
    pub fn forward(&self, indices: &[u32]) -> Result<(f64, ForwardTrace)> {
        let trace = self.forward_batch(&[indices], Mode::Eval)?;
        Ok((trace.probs[0], trace))
    }

    /// Inference probabilities for many rows, processed in chunks.
    pub fn predict(&self, rows: &[&[u32]]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(rows.len());
        for chunk in rows.chunks(4096) {
            out.extend(self.forward_batch(chunk, Mode::Eval)?.probs.iter());
        }
        Ok(out)
    }

    /// Gradients of the mean LogLoss over the batch in `trace`.
    pub fn backward(&self, trace: &ForwardTrace, labels: &[u8]) -> Result<ModelGrads> {
        let n = trace.probs.len();
        if labels.len() != n || n == 0 {
            return Err(Error::shape(format!("{} labels for {n} predictions", labels.len())));
        }
        let mut loss = 0.0;
        let mut grad_logit = Array1::zeros(n);
        for (i, (&p, &y)) in trace.probs.iter().zip(labels).enumerate() {
            let (l, g) = logloss(p, y)?;
            loss += l;
            grad_logit[i] = g / n as f64;
        }
        loss /= n as f64;

        let head = trace.final_vec.t().dot(&grad_logit);
        let grad_final = grad_logit
            .view()
            .insert_axis(Axis(1))
            .dot(&self.head.view().insert_axis(Axis(0)));
        let d = self.topology.cross_width();
        let c0 = trace.c0();

        let (grad_cl, grad_c0_dnn, mlp) = match self.topology.variant {
            Variant::GcnOnly => (grad_final, None, Vec::new()),
            Variant::Stacked => {
                let g = self
                    .mlp
                    .backward(trace.mlp_cache.as_ref().expect("stacked trace has dnn cache"), &grad_final)?;
                (g.grad_h0, None, g.layers)
            }
            Variant::Parallel => {
                let g_cross = grad_final.slice(s![.., ..d]).to_owned();
                let g_dnn = grad_final.slice(s![.., d..]).to_owned();
                let g = self
                    .mlp
                    .backward(trace.mlp_cache.as_ref().expect("parallel trace has dnn cache"), &g_dnn)?;
                (g_cross, Some(g.grad_h0), g.layers)
            }
        };
        let stack = self.cross.backward(c0, &trace.stack, &grad_cl)?;
        let mut grad_c0 = stack.grad_c0;
        if let Some(g) = grad_c0_dnn {
            grad_c0 += &g;
        }
        let (grad_raw, align) = match &self.align {
            Some(a) => {
                let (gr, gm) = a.backward(&trace.raw_c0, &grad_c0);
                (gr, Some(gm))
            }
            None => (grad_c0, None),
        };
        let mut embedding = SparseRowGrads::new(self.embedding.num_fields());
        embedding.scatter_batch(
            trace.rows.iter().map(Vec::as_slice),
            grad_raw.view(),
            &self.topology.dims,
        )?;
        let (cross, cross_bias) = stack
            .layers
            .into_iter()
            .map(|l| ([l.w_c, l.w_g], l.b))
            .unzip();
        Ok(ModelGrads {
            embedding,
            align,
            cross,
            cross_bias,
            mlp,
            head,
            loss,
        })
    }
}

/// Binary cross-entropy of one prediction and its gradient with respect to
/// the pre-sigmoid logit.
pub fn logloss(y_hat: f64, y: u8) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&y_hat) {
        return Err(Error::Numeric(format!("prediction {y_hat} outside [0, 1]")));
    }
    let p = y_hat.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let y = f64::from(y);
    let loss = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
    Ok((loss, y_hat - y))
}

/// Mean LogLoss over a batch.
pub fn mean_logloss(probs: &[f64], labels: &[u8]) -> Result<f64> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(Error::shape(format!(
            "{} predictions for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (&p, &y) in probs.iter().zip(labels) {
        total += logloss(p, y)?.0;
    }
    Ok(total / probs.len() as f64)
}
