use std::collections::BTreeSet;

use super::{LayerParams, ModelConfig, ModelError, ModelParams, Result};
use crate::graph::{SentenceGraph, SyntaxContext, Triple};
use crate::tensor::{ParamStore, Tape, Tensor, Var};

/// Initial node states `context · W_e + b_e`.
pub fn init_nodes(tape: &mut Tape, store: &ParamStore, params: &ModelParams, context: Var) -> Result<Var> {
    let w = tape.param(store, params.w_e);
    let b = tape.param(store, params.b_e);
    let x = tape.matmul(context, w)?;
    Ok(tape.add_row(x, b)?)
}

/// `[heads ∥ relations ∥ deps] · w_r + b_r`, one output row per triple.
pub fn triple_rep(tape: &mut Tape, heads: Var, relations: Var, deps: Var, w_r: Var, b_r: Var) -> Result<Var> {
    let x = tape.concat_cols(&[heads, relations, deps])?;
    let y = tape.matmul(x, w_r)?;
    Ok(tape.add_row(y, b_r)?)
}

/// Gathers `[h_head ∥ r ∥ h_dep]` inputs for a triple listing.
fn triple_inputs(tape: &mut Tape, h: Var, rel_table: Var, triples: &[Triple]) -> Result<(Var, Var, Var)> {
    let heads: Vec<usize> = triples.iter().map(|t| t.head).collect();
    let rels: Vec<usize> = triples.iter().map(|t| t.rel).collect();
    let deps: Vec<usize> = triples.iter().map(|t| t.dep).collect();
    Ok((
        tape.gather_rows(h, &heads)?,
        tape.gather_rows(rel_table, &rels)?,
        tape.gather_rows(h, &deps)?,
    ))
}

/// Each node attends over the triples it takes part in (as head or
/// dependent). Returns the `[n × d]` output and, per head, the `[n × E]`
/// attention matrix with columns in `triples` order.
pub fn graph_self_attention(
    tape: &mut Tape,
    store: &ParamStore,
    layer: &LayerParams,
    h: Var,
    rel_table: Var,
    triples: &[Triple],
) -> Result<(Var, Vec<Tensor>)> {
    let n = tape.value(h).rows();
    let e = triples.len();
    if n < 2 || e == 0 {
        return Err(ModelError::SingleNodeWindow);
    }
    let mut mask = vec![false; n * e];
    for (j, t) in triples.iter().enumerate() {
        mask[t.head * e + j] = true;
        mask[t.dep * e + j] = true;
    }
    let (hh, rr, hd) = triple_inputs(tape, h, rel_table, triples)?;
    let mut outs = Vec::with_capacity(layer.heads.len());
    let mut weights = Vec::with_capacity(layer.heads.len());
    for hp in &layer.heads {
        let w_r = tape.param(store, hp.w_r);
        let b_r = tape.param(store, hp.b_r);
        let reps = triple_rep(tape, hh, rr, hd, w_r, b_r)?;
        let w_q = tape.param(store, hp.w_q);
        let w_k = tape.param(store, hp.w_k);
        let w_u = tape.param(store, hp.w_u);
        let q = tape.matmul(h, w_q)?;
        let k = tape.matmul(reps, w_k)?;
        let u = tape.matmul(reps, w_u)?;
        let dk = tape.value(q).cols();
        let raw = tape.matmul_bt(q, k)?;
        let scores = tape.scale(raw, 1.0 / (dk as f64).sqrt());
        let a = tape.masked_softmax_rows(scores, &mask)?;
        weights.push(tape.value(a).clone());
        outs.push(tape.matmul(a, u)?);
    }
    let cat = tape.concat_cols(&outs)?;
    let w_o = tape.param(store, layer.w_o);
    Ok((tape.matmul(cat, w_o)?, weights))
}

/// The event pair `(s, t)` attends over the syntax context triples `phi`.
/// Returns the `[1 × d]` pair representation and per-head weights aligned
/// with `phi`.
#[allow(clippy::too_many_arguments)]
pub fn syntax_guided_attention(
    tape: &mut Tape,
    store: &ParamStore,
    layer: &LayerParams,
    h: Var,
    rel_table: Var,
    s: usize,
    t: usize,
    phi: &[Triple],
) -> Result<(Var, Vec<Vec<f64>>)> {
    if s == t {
        return Err(ModelError::SameNode(s));
    }
    if phi.is_empty() {
        return Err(ModelError::DegeneratePair(s, t));
    }
    let mut seen = BTreeSet::new();
    for tr in phi {
        if !seen.insert(*tr) {
            return Err(ModelError::DuplicateTriple(*tr));
        }
    }
    let (hh, rr, hd) = triple_inputs(tape, h, rel_table, phi)?;
    let hs = tape.gather_rows(h, &[s])?;
    let ht = tape.gather_rows(h, &[t])?;
    let pair = tape.concat_cols(&[hs, ht])?;
    let b_r = tape.param(store, layer.syn_b_r);
    let mut outs = Vec::with_capacity(layer.heads.len());
    let mut weights = Vec::with_capacity(layer.heads.len());
    for hp in &layer.heads {
        let w_r = tape.param(store, hp.syn_w_r);
        let reps = triple_rep(tape, hh, rr, hd, w_r, b_r)?;
        let w_q = tape.param(store, hp.syn_w_q);
        let w_k = tape.param(store, hp.syn_w_k);
        let w_u = tape.param(store, hp.syn_w_u);
        let q = tape.matmul(pair, w_q)?;
        let k = tape.matmul(reps, w_k)?;
        let u = tape.matmul(reps, w_u)?;
        let dk = tape.value(q).cols();
        let raw = tape.matmul_bt(q, k)?;
        let scores = tape.scale(raw, 1.0 / (dk as f64).sqrt());
        let a = tape.softmax_rows(scores)?;
        weights.push(tape.value(a).data().to_vec());
        outs.push(tape.matmul(a, u)?);
    }
    let cat = tape.concat_cols(&outs)?;
    let w_p = tape.param(store, layer.w_p);
    Ok((tape.matmul(cat, w_p)?, weights))
}

/// Combines graph output `g` with the pair representation: the source row
/// becomes `[g_s ∥ g̃] · W_f`, the target row `[g̃ ∥ g_t] · W_f`, every other
/// row `g_i · W_t`.
pub fn fuse(
    tape: &mut Tape,
    store: &ParamStore,
    layer: &LayerParams,
    g: Var,
    pair: Var,
    s: usize,
    t: usize,
) -> Result<Var> {
    if s == t {
        return Err(ModelError::SameNode(s));
    }
    let n = tape.value(g).rows();
    let w_t = tape.param(store, layer.w_t);
    let w_f = tape.param(store, layer.w_f);
    let base = tape.matmul(g, w_t)?;
    let gs = tape.gather_rows(g, &[s])?;
    let gt = tape.gather_rows(g, &[t])?;
    let src_in = tape.concat_cols(&[gs, pair])?;
    let tgt_in = tape.concat_cols(&[pair, gt])?;
    let src = tape.matmul(src_in, w_f)?;
    let tgt = tape.matmul(tgt_in, w_f)?;
    let stacked = tape.concat_rows(&[base, src, tgt])?;
    let mut index: Vec<usize> = (0..n).collect();
    index[s] = n;
    index[t] = n + 1;
    Ok(tape.gather_rows(stacked, &index)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerTrace {
    /// Per head, `[n × E]` with columns in graph edge order.
    pub graph_weights: Vec<Tensor>,
    /// Per head, aligned with `ForwardTrace::phi`.
    pub syntax_weights: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub layers: Vec<LayerTrace>,
    pub phi: Vec<Triple>,
    pub layer_norms: usize,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// `H^0 .. H^L`.
    pub states: Vec<Var>,
    pub source: usize,
    pub target: usize,
}

impl ForwardOutput {
    pub fn last(&self) -> Var {
        *self.states.last().expect("at least the initial states")
    }
}

/// Runs all layers for the pair `(ctx.source, ctx.target)` of `graph`.
pub fn forward(
    tape: &mut Tape,
    store: &ParamStore,
    config: &ModelConfig,
    params: &ModelParams,
    context: Var,
    graph: &SentenceGraph,
    ctx: &SyntaxContext,
) -> Result<(ForwardOutput, ForwardTrace)> {
    let n = graph.node_count();
    if n < 2 {
        return Err(ModelError::SingleNodeWindow);
    }
    if tape.value(context).rows() != n {
        return Err(ModelError::Config(format!(
            "context has {} rows for {n} graph nodes",
            tape.value(context).rows()
        )));
    }
    let (s, t) = (ctx.source, ctx.target);
    let rel_table = tape.param(store, params.relations);
    let mut h = init_nodes(tape, store, params, context)?;
    let mut states = vec![h];
    let mut layers = Vec::with_capacity(params.layers.len());
    for lp in &params.layers {
        let (g, graph_weights) = graph_self_attention(tape, store, lp, h, rel_table, graph.triples())?;
        let (pair, syntax_weights) = syntax_guided_attention(tape, store, lp, h, rel_table, s, t, &ctx.phi)?;
        let fused = fuse(tape, store, lp, g, pair, s, t)?;
        let res = tape.add(fused, h)?;
        let gain = tape.param(store, lp.norm_gain);
        let bias = tape.param(store, lp.norm_bias);
        h = tape.layer_norm(res, gain, bias, config.ln_eps)?;
        states.push(h);
        layers.push(LayerTrace {
            graph_weights,
            syntax_weights,
        });
    }
    let trace = ForwardTrace {
        layer_norms: layers.len(),
        layers,
        phi: ctx.phi.clone(),
    };
    Ok((
        ForwardOutput {
            states,
            source: s,
            target: t,
        },
        trace,
    ))
}
