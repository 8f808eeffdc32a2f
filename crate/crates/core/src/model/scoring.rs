use pathqa_autodiff::{Tape, Var};

use super::config::CandidateScoring;
use crate::error::{Error, Result};

/// Floor applied to probabilities inside the log loss.
pub const PROB_FLOOR: f64 = 1e-12;

/// Sorted union of the candidate node groups.
pub fn candidate_nodes(groups: &[Vec<usize>]) -> Vec<usize> {
    let mut nodes: Vec<usize> = groups.iter().flatten().copied().collect();
    nodes.sort_unstable();
    nodes.dedup();
    nodes
}

/// Softmax over the logits of candidate nodes only, in `candidate_nodes` order.
pub fn node_softmax(tape: &mut Tape, logits: Var, groups: &[Vec<usize>]) -> Result<Var> {
    let nodes = candidate_nodes(groups);
    if nodes.is_empty() {
        return Err(Error::NoCandidateNodes);
    }
    let picked = tape.gather(logits, &nodes)?;
    Ok(tape.softmax(picked, 0)?)
}

/// Per-candidate probability as a scalar node; `None` for candidates with
/// no mention node (probability zero). `groups[c]` lists the node indices
/// of candidate `c`.
pub fn candidate_probabilities(
    tape: &mut Tape,
    logits: Var,
    groups: &[Vec<usize>],
    scoring: CandidateScoring,
) -> Result<Vec<Option<Var>>> {
    let nodes = candidate_nodes(groups);
    if nodes.is_empty() {
        return Err(Error::NoCandidateNodes);
    }
    match scoring {
        CandidateScoring::NodeSoftmaxMax => {
            let sm = node_softmax(tape, logits, groups)?;
            groups
                .iter()
                .map(|g| {
                    if g.is_empty() {
                        return Ok(None);
                    }
                    let pos: Vec<usize> = g.iter().map(|n| nodes.binary_search(n).expect("grouped node")).collect();
                    let picked = tape.gather(sm, &pos)?;
                    Ok(Some(tape.max(picked, 0)?))
                })
                .collect()
        }
        CandidateScoring::MaxLogitSoftmax => {
            let mut present = Vec::new();
            for g in groups.iter().filter(|g| !g.is_empty()) {
                let picked = tape.gather(logits, g)?;
                let best = tape.max(picked, 0)?;
                present.push(tape.reshape(best, &[1])?);
            }
            let stacked = tape.concat(&present, 0)?;
            let sm = tape.softmax(stacked, 0)?;
            let mut k = 0;
            groups
                .iter()
                .map(|g| {
                    if g.is_empty() {
                        return Ok(None);
                    }
                    let one = tape.slice(sm, 0, k, k + 1)?;
                    k += 1;
                    Ok(Some(tape.reshape(one, &[])?))
                })
                .collect()
        }
    }
}

/// `−ln(max(p, 1e-12))`.
pub fn nll(tape: &mut Tape, prob: Var) -> Var {
    let p = tape.clamp_min(prob, PROB_FLOOR);
    let lp = tape.ln(p);
    tape.neg(lp)
}

/// Index of the most probable candidate; ties go to the earliest.
pub fn argmax(probs: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &p) in probs.iter().enumerate() {
        if best.is_none_or(|b| p > probs[b]) {
            best = Some(i);
        }
    }
    best
}
