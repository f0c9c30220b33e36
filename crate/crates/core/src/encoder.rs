//! GNN molecule encoders: GCN, GAT, GraphSAGE (max-pool variant), and TAG.
//!
//! Atom features are the vocab one-hots; bond types are not inputs. Every
//! layer keeps a bias term. The activation is ReLU on all layers except the
//! last, which is the identity. Two forward paths exist with identical math:
//! a tape-recorded one for training and a plain-matrix one for inference;
//! `tape_and_plain_paths_agree` pins them together.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::graph::{FeatureVocab, MolecularGraph};
use crate::numeric::{Matrix, NumericError, Tape, VarId};

#[derive(Debug, thiserror::Error)]
pub enum EncoderError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("cannot encode an empty graph")]
    EmptyGraph,
    #[error("cannot encode an empty molecule set")]
    EmptySide,
    #[error("missing parameter '{0}'")]
    MissingParameter(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GnnKind {
    Gcn,
    Gat,
    Sage,
    Tag,
}

impl GnnKind {
    pub fn name(&self) -> &'static str {
        match self {
            GnnKind::Gcn => "gcn",
            GnnKind::Gat => "gat",
            GnnKind::Sage => "sage",
            GnnKind::Tag => "tag",
        }
    }

    pub fn parse(s: &str) -> Option<GnnKind> {
        Some(match s {
            "gcn" => GnnKind::Gcn,
            "gat" => GnnKind::Gat,
            "sage" => GnnKind::Sage,
            "tag" => GnnKind::Tag,
            _ => return None,
        })
    }

    pub const ALL: [GnnKind; 4] = [GnnKind::Gcn, GnnKind::Gat, GnnKind::Sage, GnnKind::Tag];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Readout {
    Sum,
    Mean,
}

/// LeakyReLU slope used inside GAT attention logits.
pub const GAT_ATTENTION_SLOPE: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub gnn_kind: GnnKind,
    /// Output dimension of each layer; the length is the layer count K.
    pub dims: Vec<usize>,
    /// Attention heads S (GAT only).
    pub gat_heads: usize,
    /// Local filter size L (TAG only).
    pub tag_filter: usize,
    pub readout: Readout,
}

impl EncoderConfig {
    /// Full-scale defaults: 2 layers of 1024, 16 attention heads of 64,
    /// TAG filter 2, sum readout.
    pub fn full_scale(kind: GnnKind) -> Self {
        EncoderConfig {
            gnn_kind: kind,
            dims: vec![1024, 1024],
            gat_heads: 16,
            tag_filter: 2,
            readout: Readout::Sum,
        }
    }

    /// Small profile for tests: 2 layers of `dim`.
    pub fn desk(kind: GnnKind, dim: usize) -> Self {
        EncoderConfig {
            gnn_kind: kind,
            dims: vec![dim, dim],
            gat_heads: if dim.is_multiple_of(4) { 4 } else { 1 },
            tag_filter: 2,
            readout: Readout::Sum,
        }
    }

    pub fn layers(&self) -> usize {
        self.dims.len()
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap_or(&0)
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.dims.is_empty() {
            return Err(EncoderError::InvalidConfig("need at least one layer".into()));
        }
        if self.dims.contains(&0) {
            return Err(EncoderError::InvalidConfig("zero layer dimension".into()));
        }
        if self.gnn_kind == GnnKind::Gat {
            if self.gat_heads == 0 {
                return Err(EncoderError::InvalidConfig("gat needs >= 1 head".into()));
            }
            for (k, &d) in self.dims.iter().enumerate() {
                if d % self.gat_heads != 0 {
                    return Err(EncoderError::InvalidConfig(format!(
                        "layer {} dim {} not divisible by {} heads",
                        k, d, self.gat_heads
                    )));
                }
            }
        }
        Ok(())
    }
}

/// All learnable parameters, keyed by name. Names are zero-padded so that
/// lexicographic order (the checkpoint blob order) is also layer order.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderWeights {
    pub params: BTreeMap<String, Matrix>,
}

fn shapes_for(config: &EncoderConfig, input_dim: usize) -> Vec<(String, usize, usize, bool)> {
    // (name, rows, cols, is_weight): weights get Glorot init, biases zeros
    let mut out = Vec::new();
    let mut din = input_dim;
    for (k, &dout) in config.dims.iter().enumerate() {
        match config.gnn_kind {
            GnnKind::Gcn => {
                out.push((format!("layer_{:02}.weight", k), din, dout, true));
                out.push((format!("layer_{:02}.bias", k), 1, dout, false));
            }
            GnnKind::Gat => {
                let dh = dout / config.gat_heads;
                for s in 0..config.gat_heads {
                    let p = format!("layer_{:02}.head_{:02}", k, s);
                    out.push((format!("{}.weight", p), din, dh, true));
                    out.push((format!("{}.attn_dst", p), dh, 1, true));
                    out.push((format!("{}.attn_src", p), dh, 1, true));
                    out.push((format!("{}.bias", p), 1, dh, false));
                }
            }
            GnnKind::Sage => {
                out.push((format!("layer_{:02}.pool_weight", k), din, din, true));
                out.push((format!("layer_{:02}.pool_bias", k), 1, din, false));
                out.push((format!("layer_{:02}.weight", k), 2 * din, dout, true));
                out.push((format!("layer_{:02}.bias", k), 1, dout, false));
            }
            GnnKind::Tag => {
                for l in 0..=config.tag_filter {
                    out.push((format!("layer_{:02}.filter_{:02}.weight", k, l), din, dout, true));
                }
                out.push((format!("layer_{:02}.bias", k), 1, dout, false));
            }
        }
        din = dout;
    }
    out
}

impl EncoderWeights {
    /// Glorot-initialized weights and zero biases; each parameter gets a seed
    /// derived from the base seed and its name, so the full set is
    /// reproducible and parameters are mutually independent.
    pub fn init(config: &EncoderConfig, input_dim: usize, seed: u64) -> Result<Self, EncoderError> {
        config.validate()?;
        let mut params = BTreeMap::new();
        for (name, rows, cols, is_weight) in shapes_for(config, input_dim) {
            let m = if is_weight {
                Matrix::glorot(rows, cols, seed.wrapping_add(name_hash(&name)))
            } else {
                Matrix::zeros(rows, cols)
            };
            params.insert(name, m);
        }
        Ok(EncoderWeights { params })
    }

    pub fn zeros(config: &EncoderConfig, input_dim: usize) -> Result<Self, EncoderError> {
        config.validate()?;
        let mut params = BTreeMap::new();
        for (name, rows, cols, _) in shapes_for(config, input_dim) {
            params.insert(name, Matrix::zeros(rows, cols));
        }
        Ok(EncoderWeights { params })
    }

    pub fn get(&self, name: &str) -> Result<&Matrix, EncoderError> {
        self.params
            .get(name)
            .ok_or_else(|| EncoderError::MissingParameter(name.to_string()))
    }

    /// Register every parameter on a tape; returns the name -> var binding.
    pub fn bind(&self, tape: &mut Tape) -> BoundWeights {
        let vars = self
            .params
            .iter()
            .map(|(name, m)| (name.clone(), tape.input(m.clone())))
            .collect();
        BoundWeights { vars }
    }
}

fn name_hash(name: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Tape bindings for one training step.
pub struct BoundWeights {
    pub vars: BTreeMap<String, VarId>,
}

impl BoundWeights {
    fn get(&self, name: &str) -> Result<VarId, EncoderError> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| EncoderError::MissingParameter(name.to_string()))
    }
}

#[derive(Clone, Copy)]
enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn for_layer(k: usize, n_layers: usize) -> Activation {
        if k + 1 == n_layers {
            Activation::Identity
        } else {
            Activation::Relu
        }
    }

    fn on_tape(self, tape: &mut Tape, x: VarId) -> VarId {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Identity => x,
        }
    }

    fn on_matrix(self, x: Matrix) -> Matrix {
        match self {
            Activation::Relu => x.map(|v| v.max(0.0)),
            Activation::Identity => x,
        }
    }
}

// ---------------------------------------------------------------------------
// graph-derived structure shared by both forward paths
// ---------------------------------------------------------------------------

/// GCN aggregation coefficients over N(i) and the self node:
/// alpha_ij = 1/sqrt(|N(i)||N(j)|) off-diagonal, alpha_ii = 1/|N(i)|, and
/// alpha_ii = 1 for isolated atoms.
fn gcn_coefficients(graph: &MolecularGraph) -> Matrix {
    let n = graph.atom_count();
    let deg: Vec<f64> = (0..n).map(|i| graph.degree(i) as f64).collect();
    let mut c = Matrix::zeros(n, n);
    for i in 0..n {
        if deg[i] == 0.0 {
            c.set(i, i, 1.0);
        } else {
            c.set(i, i, 1.0 / deg[i]);
            for j in graph.neighbors(i) {
                c.set(i, j, 1.0 / (deg[i] * deg[j]).sqrt());
            }
        }
    }
    c
}

/// TAG normalized adjacency D^{-1/2} (A + I) D^{-1/2}, self-loops added
/// before normalization so degree-0 atoms stay well-defined.
fn tag_adjacency(graph: &MolecularGraph) -> Matrix {
    let n = graph.atom_count();
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        a.set(i, i, 1.0);
    }
    for b in graph.bonds() {
        a.set(b.a, b.b, 1.0);
        a.set(b.b, b.a, 1.0);
    }
    let dinv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = (0..n).map(|j| a.get(i, j)).sum();
            1.0 / d.sqrt()
        })
        .collect();
    for i in 0..n {
        for j in 0..n {
            let v = a.get(i, j) * dinv_sqrt[i] * dinv_sqrt[j];
            a.set(i, j, v);
        }
    }
    a
}

/// Directed edges (dst aggregates from src) over the neighbor set plus self,
/// sorted by (dst, src). Used by GAT; `dst` doubles as the softmax segments.
fn self_loop_edges(graph: &MolecularGraph) -> (Vec<usize>, Vec<usize>) {
    let n = graph.atom_count();
    let mut dst = Vec::new();
    let mut src = Vec::new();
    for i in 0..n {
        let mut sources = graph.neighbors(i);
        sources.push(i);
        sources.sort_unstable();
        for j in sources {
            dst.push(i);
            src.push(j);
        }
    }
    (dst, src)
}

/// Directed neighbor edges without self-loops, with segment compaction over
/// nodes that have at least one neighbor. Returns (owners, segment ids, srcs)
/// where `owners[q]` is the node owning compact segment q.
fn neighbor_edges(graph: &MolecularGraph) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let n = graph.atom_count();
    let mut owners = Vec::new();
    let mut segments = Vec::new();
    let mut srcs = Vec::new();
    for i in 0..n {
        let mut sources = graph.neighbors(i);
        if sources.is_empty() {
            continue;
        }
        sources.sort_unstable();
        let seg = owners.len();
        owners.push(i);
        for j in sources {
            segments.push(seg);
            srcs.push(j);
        }
    }
    (owners, segments, srcs)
}

/// Atom features stacked into an n x total_dim matrix.
pub fn feature_matrix(graph: &MolecularGraph, vocab: &FeatureVocab) -> Matrix {
    let rows: Vec<Vec<f64>> = graph.atoms().iter().map(|a| vocab.encode_atom(a)).collect();
    Matrix::from_rows(&rows).expect("non-empty graph")
}

// ---------------------------------------------------------------------------
// tape path
// ---------------------------------------------------------------------------

fn gcn_layer_tape(
    tape: &mut Tape,
    h: VarId,
    coef: VarId,
    w: VarId,
    b: VarId,
    act: Activation,
) -> Result<VarId, EncoderError> {
    let agg = tape.matmul(coef, h)?;
    let lin = tape.matmul(agg, w)?;
    let biased = tape.add_row(lin, b)?;
    Ok(act.on_tape(tape, biased))
}

#[allow(clippy::too_many_arguments)]
fn gat_layer_tape(
    tape: &mut Tape,
    h: VarId,
    dst: &[usize],
    src: &[usize],
    n: usize,
    weights: &BoundWeights,
    prefix: &str,
    heads: usize,
    act: Activation,
) -> Result<VarId, EncoderError> {
    let mut head_outputs = Vec::with_capacity(heads);
    for s in 0..heads {
        let p = format!("{}.head_{:02}", prefix, s);
        let w = weights.get(&format!("{}.weight", p))?;
        let a_dst = weights.get(&format!("{}.attn_dst", p))?;
        let a_src = weights.get(&format!("{}.attn_src", p))?;
        let bias = weights.get(&format!("{}.bias", p))?;
        let z = tape.matmul(h, w)?;
        let score_dst = tape.matmul(z, a_dst)?;
        let score_src = tape.matmul(z, a_src)?;
        let e_dst = tape.gather_rows(score_dst, dst)?;
        let e_src = tape.gather_rows(score_src, src)?;
        let e_sum = tape.add(e_dst, e_src)?;
        let logits = tape.leaky_relu(e_sum, GAT_ATTENTION_SLOPE);
        let attention = tape.segment_softmax(logits, dst, n)?;
        let messages = tape.gather_rows(z, src)?;
        let weighted = tape.mul_rows_by_col(messages, attention)?;
        let agg = tape.segment_sum(weighted, dst, n)?;
        let biased = tape.add_row(agg, bias)?;
        head_outputs.push(act.on_tape(tape, biased));
    }
    let mut out = head_outputs[0];
    for &ho in &head_outputs[1..] {
        out = tape.concat_cols(out, ho)?;
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn sage_layer_tape(
    tape: &mut Tape,
    h: VarId,
    owners: &[usize],
    segments: &[usize],
    srcs: &[usize],
    n: usize,
    w_pool: VarId,
    b_pool: VarId,
    w: VarId,
    b: VarId,
    act: Activation,
) -> Result<VarId, EncoderError> {
    let pool_dim = tape.value(h).cols();
    let neighborhood = if owners.is_empty() {
        tape.input(Matrix::zeros(n, pool_dim))
    } else {
        let lin = tape.matmul(h, w_pool)?;
        let biased = tape.add_row(lin, b_pool)?;
        let z = tape.relu(biased);
        let gathered = tape.gather_rows(z, srcs)?;
        let maxed = tape.segment_max(gathered, segments, owners.len())?;
        tape.scatter_rows(maxed, owners, n)?
    };
    let cat = tape.concat_cols(h, neighborhood)?;
    let lin = tape.matmul(cat, w)?;
    let biased = tape.add_row(lin, b)?;
    Ok(act.on_tape(tape, biased))
}

fn tag_layer_tape(
    tape: &mut Tape,
    h: VarId,
    adj: VarId,
    filters: &[VarId],
    b: VarId,
    act: Activation,
) -> Result<VarId, EncoderError> {
    let mut acc = tape.matmul(h, filters[0])?;
    let mut propagated = h;
    for &w in &filters[1..] {
        propagated = tape.matmul(adj, propagated)?;
        let term = tape.matmul(propagated, w)?;
        acc = tape.add(acc, term)?;
    }
    let biased = tape.add_row(acc, b)?;
    Ok(act.on_tape(tape, biased))
}

/// Full tape-recorded encoding of one molecule, ending at the readout.
pub fn encode_molecule_on_tape(
    tape: &mut Tape,
    graph: &MolecularGraph,
    vocab: &FeatureVocab,
    config: &EncoderConfig,
    weights: &BoundWeights,
) -> Result<VarId, EncoderError> {
    config.validate()?;
    let n = graph.atom_count();
    if n == 0 {
        return Err(EncoderError::EmptyGraph);
    }
    let mut h = tape.input(feature_matrix(graph, vocab));
    let n_layers = config.layers();
    match config.gnn_kind {
        GnnKind::Gcn => {
            let coef = tape.input(gcn_coefficients(graph));
            for k in 0..n_layers {
                let w = weights.get(&format!("layer_{:02}.weight", k))?;
                let b = weights.get(&format!("layer_{:02}.bias", k))?;
                h = gcn_layer_tape(tape, h, coef, w, b, Activation::for_layer(k, n_layers))?;
            }
        }
        GnnKind::Gat => {
            let (dst, src) = self_loop_edges(graph);
            for k in 0..n_layers {
                h = gat_layer_tape(
                    tape,
                    h,
                    &dst,
                    &src,
                    n,
                    weights,
                    &format!("layer_{:02}", k),
                    config.gat_heads,
                    Activation::for_layer(k, n_layers),
                )?;
            }
        }
        GnnKind::Sage => {
            let (owners, segments, srcs) = neighbor_edges(graph);
            for k in 0..n_layers {
                let w_pool = weights.get(&format!("layer_{:02}.pool_weight", k))?;
                let b_pool = weights.get(&format!("layer_{:02}.pool_bias", k))?;
                let w = weights.get(&format!("layer_{:02}.weight", k))?;
                let b = weights.get(&format!("layer_{:02}.bias", k))?;
                h = sage_layer_tape(
                    tape,
                    h,
                    &owners,
                    &segments,
                    &srcs,
                    n,
                    w_pool,
                    b_pool,
                    w,
                    b,
                    Activation::for_layer(k, n_layers),
                )?;
            }
        }
        GnnKind::Tag => {
            let adj = tape.input(tag_adjacency(graph));
            for k in 0..n_layers {
                let filters: Vec<VarId> = (0..=config.tag_filter)
                    .map(|l| weights.get(&format!("layer_{:02}.filter_{:02}.weight", k, l)))
                    .collect::<Result<_, _>>()?;
                let b = weights.get(&format!("layer_{:02}.bias", k))?;
                h = tag_layer_tape(tape, h, adj, &filters, b, Activation::for_layer(k, n_layers))?;
            }
        }
    }
    let summed = tape.segment_sum(h, &vec![0; n], 1)?;
    Ok(match config.readout {
        Readout::Sum => summed,
        Readout::Mean => tape.affine(summed, 1.0 / n as f64, 0.0),
    })
}

/// Sum of per-molecule embeddings for one side of a reaction.
pub fn encode_side_on_tape(
    tape: &mut Tape,
    molecules: &[MolecularGraph],
    vocab: &FeatureVocab,
    config: &EncoderConfig,
    weights: &BoundWeights,
) -> Result<VarId, EncoderError> {
    if molecules.is_empty() {
        return Err(EncoderError::EmptySide);
    }
    let mut total: Option<VarId> = None;
    for mol in molecules {
        let e = encode_molecule_on_tape(tape, mol, vocab, config, weights)?;
        total = Some(match total {
            None => e,
            Some(t) => tape.add(t, e)?,
        });
    }
    Ok(total.expect("non-empty side"))
}

// ---------------------------------------------------------------------------
// plain-matrix path (frozen weights, no gradients)
// ---------------------------------------------------------------------------

fn add_row_plain(x: &Matrix, row: &Matrix) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        for c in 0..out.cols() {
            let v = out.get(r, c) + row.get(0, c);
            out.set(r, c, v);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn gat_layer_plain(
    h: &Matrix,
    dst: &[usize],
    src: &[usize],
    n: usize,
    weights: &EncoderWeights,
    prefix: &str,
    heads: usize,
    act: Activation,
) -> Result<Matrix, EncoderError> {
    let mut out: Option<Matrix> = None;
    for s in 0..heads {
        let p = format!("{}.head_{:02}", prefix, s);
        let w = weights.get(&format!("{}.weight", p))?;
        let a_dst = weights.get(&format!("{}.attn_dst", p))?;
        let a_src = weights.get(&format!("{}.attn_src", p))?;
        let bias = weights.get(&format!("{}.bias", p))?;
        let z = h.matmul(w)?;
        let score_dst = z.matmul(a_dst)?;
        let score_src = z.matmul(a_src)?;
        let logits: Vec<f64> = dst
            .iter()
            .zip(src)
            .map(|(&i, &j)| {
                let e = score_dst.get(i, 0) + score_src.get(j, 0);
                if e >= 0.0 {
                    e
                } else {
                    GAT_ATTENTION_SLOPE * e
                }
            })
            .collect();
        let mut seg_max = vec![f64::NEG_INFINITY; n];
        for (q, &i) in dst.iter().enumerate() {
            seg_max[i] = seg_max[i].max(logits[q]);
        }
        let mut denom = vec![0.0; n];
        let exps: Vec<f64> = logits
            .iter()
            .zip(dst)
            .map(|(&e, &i)| {
                let v = (e - seg_max[i]).exp();
                denom[i] += v;
                v
            })
            .collect();
        let mut agg = Matrix::zeros(n, z.cols());
        for (q, (&i, &j)) in dst.iter().zip(src).enumerate() {
            let alpha = exps[q] / denom[i];
            for c in 0..z.cols() {
                let v = agg.get(i, c) + alpha * z.get(j, c);
                agg.set(i, c, v);
            }
        }
        let head = act.on_matrix(add_row_plain(&agg, bias));
        out = Some(match out {
            None => head,
            Some(prev) => {
                let mut cat = Matrix::zeros(n, prev.cols() + head.cols());
                for r in 0..n {
                    cat.row_mut(r)[..prev.cols()].copy_from_slice(prev.row(r));
                    cat.row_mut(r)[prev.cols()..].copy_from_slice(head.row(r));
                }
                cat
            }
        });
    }
    Ok(out.expect("heads >= 1"))
}

/// Encodes one molecule with frozen weights. Same math as the tape path.
pub fn encode_molecule(
    graph: &MolecularGraph,
    vocab: &FeatureVocab,
    config: &EncoderConfig,
    weights: &EncoderWeights,
) -> Result<Vec<f64>, EncoderError> {
    config.validate()?;
    let n = graph.atom_count();
    if n == 0 {
        return Err(EncoderError::EmptyGraph);
    }
    let mut h = feature_matrix(graph, vocab);
    let n_layers = config.layers();
    match config.gnn_kind {
        GnnKind::Gcn => {
            let coef = gcn_coefficients(graph);
            for k in 0..n_layers {
                let w = weights.get(&format!("layer_{:02}.weight", k))?;
                let b = weights.get(&format!("layer_{:02}.bias", k))?;
                let act = Activation::for_layer(k, n_layers);
                h = act.on_matrix(add_row_plain(&coef.matmul(&h)?.matmul(w)?, b));
            }
        }
        GnnKind::Gat => {
            let (dst, src) = self_loop_edges(graph);
            for k in 0..n_layers {
                h = gat_layer_plain(
                    &h,
                    &dst,
                    &src,
                    n,
                    weights,
                    &format!("layer_{:02}", k),
                    config.gat_heads,
                    Activation::for_layer(k, n_layers),
                )?;
            }
        }
        GnnKind::Sage => {
            let (owners, segments, srcs) = neighbor_edges(graph);
            for k in 0..n_layers {
                let w_pool = weights.get(&format!("layer_{:02}.pool_weight", k))?;
                let b_pool = weights.get(&format!("layer_{:02}.pool_bias", k))?;
                let w = weights.get(&format!("layer_{:02}.weight", k))?;
                let b = weights.get(&format!("layer_{:02}.bias", k))?;
                let z = add_row_plain(&h.matmul(w_pool)?, b_pool).map(|v| v.max(0.0));
                let mut neighborhood = Matrix::zeros(n, z.cols());
                for (q, &owner) in owners.iter().enumerate() {
                    let mut best: Option<Vec<f64>> = None;
                    for (e, &seg) in segments.iter().enumerate() {
                        if seg != q {
                            continue;
                        }
                        let row = z.row(srcs[e]);
                        best = Some(match best {
                            None => row.to_vec(),
                            Some(cur) => {
                                cur.iter().zip(row).map(|(&a, &b)| a.max(b)).collect()
                            }
                        });
                    }
                    if let Some(row) = best {
                        neighborhood.row_mut(owner).copy_from_slice(&row);
                    }
                }
                let mut cat = Matrix::zeros(n, h.cols() + neighborhood.cols());
                for r in 0..n {
                    cat.row_mut(r)[..h.cols()].copy_from_slice(h.row(r));
                    cat.row_mut(r)[h.cols()..].copy_from_slice(neighborhood.row(r));
                }
                let act = Activation::for_layer(k, n_layers);
                h = act.on_matrix(add_row_plain(&cat.matmul(w)?, b));
            }
        }
        GnnKind::Tag => {
            let adj = tag_adjacency(graph);
            for k in 0..n_layers {
                let b = weights.get(&format!("layer_{:02}.bias", k))?;
                let mut acc =
                    h.matmul(weights.get(&format!("layer_{:02}.filter_00.weight", k))?)?;
                let mut propagated = h.clone();
                for l in 1..=config.tag_filter {
                    propagated = adj.matmul(&propagated)?;
                    let w = weights.get(&format!("layer_{:02}.filter_{:02}.weight", k, l))?;
                    acc = acc.add(&propagated.matmul(w)?)?;
                }
                let act = Activation::for_layer(k, n_layers);
                h = act.on_matrix(add_row_plain(&acc, b));
            }
        }
    }
    let mut pooled = vec![0.0; h.cols()];
    for r in 0..n {
        for (p, &v) in pooled.iter_mut().zip(h.row(r)) {
            *p += v;
        }
    }
    if config.readout == Readout::Mean {
        for p in &mut pooled {
            *p /= n as f64;
        }
    }
    Ok(pooled)
}

/// Sum of per-molecule embeddings with frozen weights.
pub fn encode_side(
    molecules: &[MolecularGraph],
    vocab: &FeatureVocab,
    config: &EncoderConfig,
    weights: &EncoderWeights,
) -> Result<Vec<f64>, EncoderError> {
    if molecules.is_empty() {
        return Err(EncoderError::EmptySide);
    }
    let mut total = vec![0.0; config.output_dim()];
    for mol in molecules {
        let e = encode_molecule(mol, vocab, config, weights)?;
        for (t, v) in total.iter_mut().zip(e) {
            *t += v;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Atom, BondOrder, Element};
    use crate::smiles::parse_molecule;

    fn vocab_for(graphs: &[MolecularGraph]) -> FeatureVocab {
        FeatureVocab::build(graphs).unwrap()
    }

    fn plain_atom(element: Element, h: u8) -> Atom {
        Atom {
            element,
            charge: 0,
            aromatic: false,
            hydrogen_count: h,
        }
    }

    #[test]
    fn gcn_single_atom_with_identity_weight_passes_features_through() {
        let g = parse_molecule("C").unwrap();
        let vocab = vocab_for(std::slice::from_ref(&g));
        let din = vocab.total_dim();
        let config = EncoderConfig {
            gnn_kind: GnnKind::Gcn,
            dims: vec![din],
            gat_heads: 1,
            tag_filter: 0,
            readout: Readout::Sum,
        };
        let mut weights = EncoderWeights::zeros(&config, din).unwrap();
        let mut eye = Matrix::zeros(din, din);
        for i in 0..din {
            eye.set(i, i, 1.0);
        }
        weights.params.insert("layer_00.weight".into(), eye);
        let e = encode_molecule(&g, &vocab, &config, &weights).unwrap();
        assert_eq!(e, vocab.encode_atom(&g.atoms()[0]));
    }

    #[test]
    fn gcn_two_connected_atoms_double_their_shared_feature() {
        // two atoms, equal 1-dim features, W = [1]: each aggregates
        // 1/|N| * self + 1/sqrt(1*1) * neighbor = 1 + 1 = 2
        let mut g = MolecularGraph::new();
        g.add_atom(plain_atom(Element::C, 3));
        g.add_atom(plain_atom(Element::C, 3));
        g.add_bond(0, 1, BondOrder::Single);
        let coef = gcn_coefficients(&g);
        let h = Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let w = Matrix::scalar(1.0);
        let out = coef.matmul(&h).unwrap().matmul(&w).unwrap();
        assert_eq!(out.data(), &[2.0, 2.0]);
    }

    #[test]
    fn gat_head_dims_multiply_out() {
        let config = EncoderConfig {
            gnn_kind: GnnKind::Gat,
            dims: vec![1024, 1024],
            gat_heads: 16,
            tag_filter: 0,
            readout: Readout::Sum,
        };
        config.validate().unwrap();
        assert_eq!(config.dims[0] / config.gat_heads, 64);
        let bad = EncoderConfig {
            dims: vec![1000],
            ..config
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn gat_single_atom_is_self_attention_only() {
        let g = parse_molecule("C").unwrap();
        let vocab = vocab_for(std::slice::from_ref(&g));
        let din = vocab.total_dim();
        let config = EncoderConfig {
            gnn_kind: GnnKind::Gat,
            dims: vec![4],
            gat_heads: 1,
            tag_filter: 0,
            readout: Readout::Sum,
        };
        let weights = EncoderWeights::init(&config, din, 3).unwrap();
        let e = encode_molecule(&g, &vocab, &config, &weights).unwrap();
        // attention over a single self-loop is exactly 1, so the embedding is
        // x W + b regardless of the attention parameters
        let x = feature_matrix(&g, &vocab);
        let expected = add_row_plain(
            &x.matmul(weights.get("layer_00.head_00.weight").unwrap())
                .unwrap(),
            weights.get("layer_00.head_00.bias").unwrap(),
        );
        for (a, b) in e.iter().zip(expected.row(0)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sage_isolated_atom_uses_zero_neighborhood() {
        let g = parse_molecule("C").unwrap();
        let vocab = vocab_for(std::slice::from_ref(&g));
        let din = vocab.total_dim();
        let config = EncoderConfig {
            gnn_kind: GnnKind::Sage,
            dims: vec![3],
            gat_heads: 1,
            tag_filter: 0,
            readout: Readout::Sum,
        };
        let weights = EncoderWeights::init(&config, din, 9).unwrap();
        let e = encode_molecule(&g, &vocab, &config, &weights).unwrap();
        // expected: (x || 0) W + b
        let x = feature_matrix(&g, &vocab);
        let mut cat = Matrix::zeros(1, 2 * din);
        cat.row_mut(0)[..din].copy_from_slice(x.row(0));
        let expected = add_row_plain(
            &cat.matmul(weights.get("layer_00.weight").unwrap()).unwrap(),
            weights.get("layer_00.bias").unwrap(),
        );
        for (a, b) in e.iter().zip(expected.row(0)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sage_single_neighbor_max_is_that_neighbor() {
        // two bonded atoms: each neighborhood is a singleton, so the pooled
        // vector is exactly ReLU(W2 h_j + b2) of the other atom
        let g = parse_molecule("CO").unwrap();
        let vocab = vocab_for(std::slice::from_ref(&g));
        let din = vocab.total_dim();
        let config = EncoderConfig {
            gnn_kind: GnnKind::Sage,
            dims: vec![3],
            gat_heads: 1,
            tag_filter: 0,
            readout: Readout::Sum,
        };
        let weights = EncoderWeights::init(&config, din, 17).unwrap();
        let x = feature_matrix(&g, &vocab);
        let pooled = add_row_plain(
            &x.matmul(weights.get("layer_00.pool_weight").unwrap()).unwrap(),
            weights.get("layer_00.pool_bias").unwrap(),
        )
        .map(|v| v.max(0.0));
        let mut cat = Matrix::zeros(2, 2 * din);
        for i in 0..2 {
            cat.row_mut(i)[..din].copy_from_slice(x.row(i));
            cat.row_mut(i)[din..].copy_from_slice(pooled.row(1 - i));
        }
        let expected = add_row_plain(
            &cat.matmul(weights.get("layer_00.weight").unwrap()).unwrap(),
            weights.get("layer_00.bias").unwrap(),
        );
        let e = encode_molecule(&g, &vocab, &config, &weights).unwrap();
        for c in 0..3 {
            let want = expected.get(0, c) + expected.get(1, c);
            assert!((e[c] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn tag_with_filter_zero_is_a_dense_layer() {
        let g = parse_molecule("CCO").unwrap();
        let vocab = vocab_for(std::slice::from_ref(&g));
        let din = vocab.total_dim();
        let config = EncoderConfig {
            gnn_kind: GnnKind::Tag,
            dims: vec![5],
            gat_heads: 1,
            tag_filter: 0,
            readout: Readout::Sum,
        };
        let weights = EncoderWeights::init(&config, din, 21).unwrap();
        let e = encode_molecule(&g, &vocab, &config, &weights).unwrap();
        let x = feature_matrix(&g, &vocab);
        let lin = add_row_plain(
            &x.matmul(weights.get("layer_00.filter_00.weight").unwrap())
                .unwrap(),
            weights.get("layer_00.bias").unwrap(),
        );
        let mut expected = vec![0.0; 5];
        for r in 0..3 {
            for (t, &v) in expected.iter_mut().zip(lin.row(r)) {
                *t += v;
            }
        }
        for (a, b) in e.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn tag_single_atom_sums_filter_weights() {
        let g = parse_molecule("C").unwrap();
        let vocab = vocab_for(std::slice::from_ref(&g));
        let din = vocab.total_dim();
        let config = EncoderConfig {
            gnn_kind: GnnKind::Tag,
            dims: vec![4],
            gat_heads: 1,
            tag_filter: 2,
            readout: Readout::Sum,
        };
        let weights = EncoderWeights::init(&config, din, 2).unwrap();
        let e = encode_molecule(&g, &vocab, &config, &weights).unwrap();
        // adjacency of a lone atom is [1], so output = x (W0 + W1 + W2) + b
        let x = feature_matrix(&g, &vocab);
        let wsum = weights
            .get("layer_00.filter_00.weight")
            .unwrap()
            .add(weights.get("layer_00.filter_01.weight").unwrap())
            .unwrap()
            .add(weights.get("layer_00.filter_02.weight").unwrap())
            .unwrap();
        let expected = add_row_plain(
            &x.matmul(&wsum).unwrap(),
            weights.get("layer_00.bias").unwrap(),
        );
        for (a, b) in e.iter().zip(expected.row(0)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_weights_give_zero_embedding() {
        let g = parse_molecule("CC(=O)O").unwrap();
        let vocab = vocab_for(std::slice::from_ref(&g));
        for kind in GnnKind::ALL {
            let config = EncoderConfig::desk(kind, 8);
            let weights = EncoderWeights::zeros(&config, vocab.total_dim()).unwrap();
            let e = encode_molecule(&g, &vocab, &config, &weights).unwrap();
            assert!(e.iter().all(|&v| v == 0.0), "{:?}", kind);
        }
    }

    #[test]
    fn disconnected_components_sum_under_sum_readout() {
        let combined = parse_molecule("CCO.CC=O").unwrap();
        let a = parse_molecule("CCO").unwrap();
        let b = parse_molecule("CC=O").unwrap();
        let vocab = vocab_for(std::slice::from_ref(&combined));
        for kind in GnnKind::ALL {
            let config = EncoderConfig::desk(kind, 8);
            let weights = EncoderWeights::init(&config, vocab.total_dim(), 77).unwrap();
            let e_combined = encode_molecule(&combined, &vocab, &config, &weights).unwrap();
            let e_a = encode_molecule(&a, &vocab, &config, &weights).unwrap();
            let e_b = encode_molecule(&b, &vocab, &config, &weights).unwrap();
            for i in 0..e_combined.len() {
                assert!(
                    (e_combined[i] - e_a[i] - e_b[i]).abs() < 1e-9,
                    "{:?} component {}",
                    kind,
                    i
                );
            }
        }
    }

    #[test]
    fn mean_readout_is_sum_over_atoms() {
        let g = parse_molecule("CCO").unwrap();
        let vocab = vocab_for(std::slice::from_ref(&g));
        let mut config = EncoderConfig::desk(GnnKind::Gcn, 8);
        let weights = EncoderWeights::init(&config, vocab.total_dim(), 5).unwrap();
        let sum = encode_molecule(&g, &vocab, &config, &weights).unwrap();
        config.readout = Readout::Mean;
        let mean = encode_molecule(&g, &vocab, &config, &weights).unwrap();
        for (s, m) in sum.iter().zip(mean) {
            assert!((s / 3.0 - m).abs() < 1e-12);
        }
    }

    #[test]
    fn encode_side_sums_molecules_and_rejects_empty() {
        let a = parse_molecule("CCO").unwrap();
        let b = parse_molecule("O=CO").unwrap();
        let vocab = vocab_for(&[a.clone(), b.clone()]);
        let config = EncoderConfig::desk(GnnKind::Gcn, 8);
        let weights = EncoderWeights::init(&config, vocab.total_dim(), 1).unwrap();
        let one = encode_side(std::slice::from_ref(&a), &vocab, &config, &weights).unwrap();
        let ea = encode_molecule(&a, &vocab, &config, &weights).unwrap();
        assert_eq!(one, ea);
        let ab = encode_side(&[a.clone(), b.clone()], &vocab, &config, &weights).unwrap();
        let ba = encode_side(&[b.clone(), a.clone()], &vocab, &config, &weights).unwrap();
        let eb = encode_molecule(&b, &vocab, &config, &weights).unwrap();
        for i in 0..ab.len() {
            assert!((ab[i] - ea[i] - eb[i]).abs() < 1e-12);
            assert!((ab[i] - ba[i]).abs() < 1e-12);
        }
        assert!(matches!(
            encode_side(&[], &vocab, &config, &weights),
            Err(EncoderError::EmptySide)
        ));
    }

    #[test]
    fn permutation_invariance_quick() {
        let g = parse_molecule("CC(=O)Oc1ccccc1C(=O)O").unwrap();
        let n = g.atom_count();
        let perm: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % n).collect();
        let permuted = g.permute_atoms(&perm).unwrap();
        let vocab = vocab_for(std::slice::from_ref(&g));
        for kind in GnnKind::ALL {
            let config = EncoderConfig::desk(kind, 8);
            let weights = EncoderWeights::init(&config, vocab.total_dim(), 13).unwrap();
            let e1 = encode_molecule(&g, &vocab, &config, &weights).unwrap();
            let e2 = encode_molecule(&permuted, &vocab, &config, &weights).unwrap();
            let norm: f64 = e1.iter().map(|v| v * v).sum::<f64>().sqrt();
            for i in 0..e1.len() {
                assert!(
                    (e1[i] - e2[i]).abs() <= 1e-9 * norm.max(1.0),
                    "{:?} at {}",
                    kind,
                    i
                );
            }
        }
    }

    #[test]
    fn tape_and_plain_paths_agree() {
        let graphs = [
            parse_molecule("CCO").unwrap(),
            parse_molecule("c1ccccc1").unwrap(),
            parse_molecule("CC(C)(C)C#N").unwrap(),
            parse_molecule("C").unwrap(),
        ];
        let vocab = vocab_for(&graphs);
        for kind in GnnKind::ALL {
            let config = EncoderConfig::desk(kind, 8);
            let weights = EncoderWeights::init(&config, vocab.total_dim(), 41).unwrap();
            for g in &graphs {
                let plain = encode_molecule(g, &vocab, &config, &weights).unwrap();
                let mut tape = Tape::new();
                let bound = weights.bind(&mut tape);
                let id = encode_molecule_on_tape(&mut tape, g, &vocab, &config, &bound).unwrap();
                let taped = tape.value(id).row(0);
                for (a, b) in plain.iter().zip(taped) {
                    assert!((a - b).abs() < 1e-12, "{:?}", kind);
                }
            }
        }
    }

    #[test]
    fn encoder_gradients_match_finite_differences_quick() {
        // cheap smoke check on a 3-atom molecule; the acceptance suite does
        // the thorough version through the batch loss
        let g = parse_molecule("CC=O").unwrap();
        let vocab = vocab_for(std::slice::from_ref(&g));
        for kind in GnnKind::ALL {
            let config = EncoderConfig {
                gnn_kind: kind,
                dims: vec![4, 4],
                gat_heads: 2,
                tag_filter: 2,
                readout: Readout::Sum,
            };
            let weights = EncoderWeights::init(&config, vocab.total_dim(), 99).unwrap();
            let loss_of = |w: &EncoderWeights| -> f64 {
                let e = encode_molecule(&g, &vocab, &config, w).unwrap();
                e.iter().map(|v| v * v).sum::<f64>().sqrt()
            };
            let mut tape = Tape::new();
            let bound = weights.bind(&mut tape);
            let emb = encode_molecule_on_tape(&mut tape, &g, &vocab, &config, &bound).unwrap();
            let loss = tape.norm2(emb);
            let var_of: BTreeMap<String, VarId> = bound.vars.clone();
            let grads = tape.backward(loss).unwrap();
            let h = 1e-5;
            for (name, var) in &var_of {
                let analytic = grads.get(*var);
                let base = &weights.params[name];
                for i in 0..base.data().len().min(6) {
                    let mut wp = weights.clone();
                    wp.params.get_mut(name).unwrap().data_mut()[i] += h;
                    let mut wm = weights.clone();
                    wm.params.get_mut(name).unwrap().data_mut()[i] -= h;
                    let fd = (loss_of(&wp) - loss_of(&wm)) / (2.0 * h);
                    let a = analytic.data()[i];
                    let denom = a.abs().max(fd.abs()).max(1e-3);
                    assert!(
                        (a - fd).abs() / denom < 1e-5,
                        "{:?} {} [{}]: analytic {} vs fd {}",
                        kind,
                        name,
                        i,
                        a,
                        fd
                    );
                }
            }
        }
    }
}
