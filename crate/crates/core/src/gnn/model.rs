use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, RngCore};

use super::batch::GraphBatch;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::exploration_graph::FEATURE_DIM;
use crate::{Error, Result};

pub const DEFAULT_HIDDEN: usize = 32;
pub const GNN_LAYERS: usize = 3;
pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"EXGNNCK\0";
const HEAD_TENSORS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Gcn,
    GatedGraph,
}

impl LayerKind {
    fn tag(self) -> u8 {
        match self {
            LayerKind::Gcn => 0,
            LayerKind::GatedGraph => 1,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(LayerKind::Gcn),
            1 => Some(LayerKind::GatedGraph),
            _ => None,
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerKind::Gcn => "gcn",
            LayerKind::GatedGraph => "ggnn",
        })
    }
}

impl FromStr for LayerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcn" => Ok(LayerKind::Gcn),
            "ggnn" => Ok(LayerKind::GatedGraph),
            other => Err(Error::Config(format!("unknown layer kind `{other}` (expected gcn or ggnn)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadMode {
    QValues,
    Softmax,
}

/// Dropout source: inference, or training at `rate` drawing masks from `rng`.
pub struct Dropout<'a> {
    rate: f64,
    rng: Option<&'a mut dyn RngCore>,
}

impl<'a> Dropout<'a> {
    pub fn inference() -> Self {
        Self { rate: 0.0, rng: None }
    }

    pub fn training(rate: f64, rng: &'a mut dyn RngCore) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must lie in [0, 1)");
        Self { rate, rng: Some(rng) }
    }

    fn apply(&mut self, tape: &mut Tape, v: Var) -> Var {
        match self.rng.as_deref_mut() {
            Some(rng) if self.rate > 0.0 => {
                let [r, c] = tape.value(v).shape();
                let mask = dropout_mask(r, c, self.rate, rng);
                tape.mask_mul(v, mask)
            }
            _ => v,
        }
    }
}

fn dropout_mask<R: RngCore + ?Sized>(rows: usize, cols: usize, rate: f64, rng: &mut R) -> Tensor {
    let keep = 1.0 / (1.0 - rate);
    Tensor::from_fn(rows, cols, |_, _| if rng.gen::<f64>() < rate { 0.0 } else { keep })
}

/// Inverted dropout; identity at inference or at rate 0.
pub fn dropout<R: RngCore + ?Sized>(t: &Tensor, rate: f64, training: bool, rng: &mut R) -> Tensor {
    assert!((0.0..1.0).contains(&rate), "dropout rate must lie in [0, 1)");
    if !training || rate == 0.0 {
        return t.clone();
    }
    t.zip(&dropout_mask(t.rows(), t.cols(), rate, rng), |x, m| x * m)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

/// Index of the largest value; ties go to the lower index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Weights of three graph layers followed by a two-layer MLP head.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParameters {
    pub kind: LayerKind,
    pub hidden: usize,
    pub version: u32,
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
}

fn layout(kind: LayerKind, hidden: usize) -> Vec<(String, usize, usize)> {
    let h = hidden;
    let mut out = Vec::new();
    match kind {
        LayerKind::Gcn => {
            for l in 0..GNN_LAYERS {
                out.push((format!("gcn.{l}.weight"), if l == 0 { FEATURE_DIM } else { h }, h));
            }
        }
        LayerKind::GatedGraph => {
            for l in 0..GNN_LAYERS {
                out.push((format!("ggnn.message.{l}"), h, h));
            }
            for gate in ["update", "reset", "candidate"] {
                out.push((format!("ggnn.{gate}.input"), h, h));
                out.push((format!("ggnn.{gate}.state"), h, h));
                out.push((format!("ggnn.{gate}.bias"), 1, h));
            }
        }
    }
    out.push(("head.hidden.weight".into(), h, h));
    out.push(("head.hidden.bias".into(), 1, h));
    out.push(("head.out.weight".into(), h, 1));
    out.push(("head.out.bias".into(), 1, 1));
    out
}

impl PolicyParameters {
    /// Glorot-uniform weights and zero biases.
    pub fn new<R: Rng + ?Sized>(kind: LayerKind, hidden: usize, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(kind, hidden)?;
        for (name, t) in p.names.iter().zip(&mut p.tensors) {
            if name.ends_with(".bias") {
                continue;
            }
            let limit = (6.0 / (t.rows() + t.cols()) as f64).sqrt();
            for v in t.data_mut() {
                *v = rng.gen_range(-limit..limit);
            }
        }
        Ok(p)
    }

    pub fn zeros(kind: LayerKind, hidden: usize) -> Result<Self> {
        if hidden == 0 || (kind == LayerKind::GatedGraph && hidden < FEATURE_DIM) {
            return Err(Error::Contract(format!("hidden width {hidden} too small for {kind}")));
        }
        let (names, tensors) = layout(kind, hidden).into_iter().map(|(n, r, c)| (n, Tensor::zeros(r, c))).unzip();
        Ok(Self { kind, hidden, version: CHECKPOINT_VERSION, names, tensors })
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names.iter().position(|n| n == name).map(move |i| &mut self.tensors[i])
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.data().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    /// Confirms names and shapes match the layout for `kind` and `hidden`.
    pub fn check(&self) -> Result<()> {
        let expected = layout(self.kind, self.hidden);
        if expected.len() != self.tensors.len() || self.names.len() != self.tensors.len() {
            return Err(Error::Contract("parameter tensor count mismatch".into()));
        }
        for ((name, r, c), (n, t)) in expected.iter().zip(self.names.iter().zip(&self.tensors)) {
            if name != n || [*r, *c] != t.shape() {
                return Err(Error::Contract(format!("parameter `{n}` has shape {:?}, expected `{name}` {:?}", t.shape(), [r, c])));
            }
        }
        Ok(())
    }

    fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.leaf(t.clone())).collect()
    }

    fn check_batch(&self, batch: &GraphBatch) -> Result<()> {
        if batch.features.cols() != FEATURE_DIM || batch.adjacency.dim() != batch.num_nodes() {
            return Err(Error::Contract("graph batch shapes are inconsistent".into()));
        }
        Ok(())
    }

    fn embed(&self, tape: &mut Tape, vars: &[Var], batch: &GraphBatch, dropout: &mut Dropout<'_>) -> Var {
        match self.kind {
            LayerKind::Gcn => gcn_layers(tape, vars, batch, dropout),
            LayerKind::GatedGraph => ggnn_layers(tape, vars, batch, GNN_LAYERS, self.hidden, dropout),
        }
    }

    /// Node embeddings, N × hidden.
    pub fn embeddings(&self, batch: &GraphBatch, dropout: &mut Dropout<'_>) -> Result<Tensor> {
        self.check_batch(batch)?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let e = self.embed(&mut tape, &vars, batch, dropout);
        Ok(tape.value(e).clone())
    }

    /// Scores for the masked nodes, as raw values or a distribution.
    pub fn policy_head(&self, embeddings: &Tensor, mask: &[bool], mode: HeadMode) -> Result<Vec<f64>> {
        let rows: Vec<usize> = mask.iter().enumerate().filter(|(_, m)| **m).map(|(i, _)| i).collect();
        if rows.is_empty() {
            return Err(Error::Contract("policy head needs at least one frontier".into()));
        }
        if embeddings.rows() != mask.len() || embeddings.cols() != self.hidden {
            return Err(Error::Contract("embedding shape does not match mask or hidden width".into()));
        }
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let e = tape.leaf(embeddings.clone());
        let out = head(&mut tape, &vars[vars.len() - HEAD_TENSORS..], e, &rows);
        let scores = tape.value(out).data().to_vec();
        Ok(match mode {
            HeadMode::QValues => scores,
            HeadMode::Softmax => softmax(&scores),
        })
    }

    /// Records a full forward pass for later differentiation.
    pub fn forward(&self, batch: &GraphBatch, dropout: &mut Dropout<'_>) -> Result<Forward> {
        self.check_batch(batch)?;
        if batch.frontier_rows.is_empty() {
            return Err(Error::Contract("policy head needs at least one frontier".into()));
        }
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let e = self.embed(&mut tape, &vars, batch, dropout);
        let e = dropout.apply(&mut tape, e);
        let out = head(&mut tape, &vars[vars.len() - HEAD_TENSORS..], e, &batch.frontier_rows);
        Ok(Forward { tape, params: vars, scores: out })
    }

    /// Per-frontier raw scores without dropout.
    pub fn scores(&self, batch: &GraphBatch) -> Result<Vec<f64>> {
        Ok(self.forward(batch, &mut Dropout::inference())?.scores().to_vec())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.push(self.kind.tag());
        out.extend_from_slice(&(self.hidden as u32).to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in self.names.iter().zip(&self.tensors) {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let kind = LayerKind::from_tag(r.take(1)?[0]).ok_or_else(|| Error::Checkpoint("unknown layer kind".into()))?;
        let hidden = r.u32()? as usize;
        let count = r.u32()? as usize;
        let mut names = Vec::with_capacity(count);
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let raw = r.take(rows.checked_mul(cols).and_then(|n| n.checked_mul(8)).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            names.push(name);
            tensors.push(Tensor::from_vec(rows, cols, data));
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        let p = Self { kind, hidden, version, names, tensors };
        p.check().map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// A recorded forward pass; scores are per frontier in action order.
pub struct Forward {
    tape: Tape,
    params: Vec<Var>,
    scores: Var,
}

impl Forward {
    pub fn scores(&self) -> &[f64] {
        self.tape.value(self.scores).data()
    }

    /// Parameter gradients of `Σ_f seed_f · score_f`.
    pub fn backward(&self, seed: &[f64]) -> Vec<Tensor> {
        let seed = Tensor::from_vec(seed.len(), 1, seed.to_vec());
        let grads = self.tape.backward(self.scores, seed);
        self.params.iter().map(|&v| grads.of(&self.tape, v)).collect()
    }
}

fn gcn_layers(tape: &mut Tape, vars: &[Var], batch: &GraphBatch, dropout: &mut Dropout<'_>) -> Var {
    let mut h = tape.leaf(batch.features.clone());
    for (l, &w) in vars.iter().take(GNN_LAYERS).enumerate() {
        if l > 0 {
            h = dropout.apply(tape, h);
        }
        let agg = tape.sparse_matmul(&batch.adjacency, h);
        let lin = tape.matmul(agg, w);
        h = tape.relu(lin);
    }
    h
}

fn ggnn_layers(tape: &mut Tape, vars: &[Var], batch: &GraphBatch, steps: usize, hidden: usize, dropout: &mut Dropout<'_>) -> Var {
    let n = batch.num_nodes();
    let padded = Tensor::from_fn(n, hidden, |r, c| if c < FEATURE_DIM { batch.features[(r, c)] } else { 0.0 });
    let mut h = tape.leaf(padded);
    let gru = &vars[GNN_LAYERS..GNN_LAYERS + 9];
    for t in 0..steps {
        if t > 0 {
            h = dropout.apply(tape, h);
        }
        let msg_w = vars[t.min(GNN_LAYERS - 1)];
        let hw = tape.matmul(h, msg_w);
        let m = tape.sparse_matmul(&batch.adjacency, hw);
        h = gru_step(tape, gru, m, h);
    }
    h
}

fn gate(tape: &mut Tape, input: Var, state: Var, w: Var, u: Var, b: Var) -> Var {
    let a = tape.matmul(input, w);
    let c = tape.matmul(state, u);
    let s = tape.add(a, c);
    tape.add_row(s, b)
}

/// `z = σ(mW_z + hU_z + b_z)`, `r = σ(mW_r + hU_r + b_r)`,
/// `ĥ = tanh(mW_h + (r⊙h)U_h + b_h)`, `h' = (1 − z)⊙h + z⊙ĥ`.
fn gru_step(tape: &mut Tape, w: &[Var], m: Var, h: Var) -> Var {
    let z_pre = gate(tape, m, h, w[0], w[1], w[2]);
    let z = tape.sigmoid(z_pre);
    let r_pre = gate(tape, m, h, w[3], w[4], w[5]);
    let r = tape.sigmoid(r_pre);
    let rh = tape.mul(r, h);
    let c_pre = gate(tape, m, rh, w[6], w[7], w[8]);
    let cand = tape.tanh(c_pre);
    let keep = tape.affine(z, -1.0, 1.0);
    let old = tape.mul(keep, h);
    let new = tape.mul(z, cand);
    tape.add(old, new)
}

fn head(tape: &mut Tape, w: &[Var], embeddings: Var, rows: &[usize]) -> Var {
    let sel = tape.gather_rows(embeddings, rows);
    let a = tape.matmul(sel, w[0]);
    let a = tape.add_row(a, w[1]);
    let a = tape.relu(a);
    let o = tape.matmul(a, w[2]);
    tape.add_row(o, w[3])
}

/// GCN embeddings without dropout.
pub fn gcn_forward(batch: &GraphBatch, params: &PolicyParameters) -> Result<Tensor> {
    if params.kind != LayerKind::Gcn {
        return Err(Error::Contract("gcn_forward needs GCN parameters".into()));
    }
    params.embeddings(batch, &mut Dropout::inference())
}

/// Gated-graph embeddings after `steps` propagation rounds, without dropout.
pub fn ggnn_forward(batch: &GraphBatch, params: &PolicyParameters, steps: usize) -> Result<Tensor> {
    if params.kind != LayerKind::GatedGraph || steps == 0 {
        return Err(Error::Contract("ggnn_forward needs gated-graph parameters and at least one step".into()));
    }
    params.check_batch(batch)?;
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let h = ggnn_layers(&mut tape, &vars, batch, steps, params.hidden, &mut Dropout::inference());
    Ok(tape.value(h).clone())
}
