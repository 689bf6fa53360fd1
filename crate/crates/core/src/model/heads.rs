use super::{ModelError, ModelParams, Result};
use crate::tensor::{ParamStore, Tape, Tensor, Var};

/// `softmax(context · W_eve + b_eve)`: per-token (non-event, event) scores.
pub fn event_scores(tape: &mut Tape, store: &ParamStore, params: &ModelParams, context: Var) -> Result<Var> {
    let w = tape.param(store, params.w_eve);
    let b = tape.param(store, params.b_eve);
    let x = tape.matmul(context, w)?;
    let y = tape.add_row(x, b)?;
    Ok(tape.softmax_rows(y)?)
}

/// `softmax([h_s ∥ h_t] · W_z + b_t)` as a `[1 × K]` row.
pub fn relation_scores(
    tape: &mut Tape,
    store: &ParamStore,
    params: &ModelParams,
    h: Var,
    s: usize,
    t: usize,
) -> Result<Var> {
    if s == t {
        return Err(ModelError::SameNode(s));
    }
    let hs = tape.gather_rows(h, &[s])?;
    let ht = tape.gather_rows(h, &[t])?;
    let x = tape.concat_cols(&[hs, ht])?;
    let w = tape.param(store, params.w_z);
    let b = tape.param(store, params.b_t);
    let y = tape.matmul(x, w)?;
    let z = tape.add_row(y, b)?;
    Ok(tape.softmax_rows(z)?)
}

/// Class-weighted negative log-likelihood of gold event tags (0 or 1).
pub fn loss_event(tape: &mut Tape, scores: Var, gold: &[usize], alpha: &[f64; 2]) -> Result<Var> {
    Ok(tape.weighted_cross_entropy(scores, gold, alpha)?)
}

/// Class-weighted negative log-likelihood summed over pair score rows; zero
/// for an empty batch.
pub fn loss_relation(tape: &mut Tape, scores: &[Var], gold: &[usize], beta: &[f64]) -> Result<Var> {
    if scores.is_empty() {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    let all = tape.concat_rows(scores)?;
    Ok(tape.weighted_cross_entropy(all, gold, beta)?)
}
