//! Model building blocks as tape operations. Vectors are rows: a linear
//! map is `x · W + b`.

use pathqa_autodiff::{Tape, Tensor, Var};

use super::params::{LstmVars, ModelVars};
use crate::error::{Error, Result};

/// Additive score for masked question positions; its exponential is zero.
const MASKED: f64 = -1e30;

fn ones(tape: &mut Tape, rows: usize, cols: usize) -> Var {
    tape.constant(Tensor::ones(&[rows, cols]))
}

fn rows(tape: &Tape, v: Var) -> usize {
    tape.shape(v)[0]
}

/// `x · w + b`.
pub fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let xw = tape.matmul(x, w)?;
    Ok(tape.add(xw, b)?)
}

/// Repeats a `1×k` row `n` times.
fn tile_row(tape: &mut Tape, row: Var, n: usize) -> Result<Var> {
    let o = ones(tape, n, 1);
    Ok(tape.matmul(o, row)?)
}

/// `f_n = [static; contextual] · W + b` for each node.
pub fn embed_nodes(tape: &mut Tape, v: &ModelVars, node_inputs: Var) -> Result<Var> {
    linear(tape, node_inputs, v.node_proj_w, v.node_proj_b)
}

fn lstm_direction(tape: &mut Tape, w: &LstmVars, x: Var, reverse: bool) -> Result<Vec<Var>> {
    let m = rows(tape, x);
    let hidden = tape.shape(w.w_hidden)[0];
    let xw = linear(tape, x, w.w_input, w.bias)?;
    let mut h: Option<Var> = None;
    let mut c: Option<Var> = None;
    let mut out = vec![None; m];
    let order: Vec<usize> = if reverse { (0..m).rev().collect() } else { (0..m).collect() };
    for t in order {
        let mut gates = tape.slice(xw, 0, t, t + 1)?;
        if let Some(hp) = h {
            let hw = tape.matmul(hp, w.w_hidden)?;
            gates = tape.add(gates, hw)?;
        }
        let i = tape.slice(gates, 1, 0, hidden)?;
        let f = tape.slice(gates, 1, hidden, 2 * hidden)?;
        let g = tape.slice(gates, 1, 2 * hidden, 3 * hidden)?;
        let o = tape.slice(gates, 1, 3 * hidden, 4 * hidden)?;
        let (i, f, g, o) = (tape.sigmoid(i), tape.sigmoid(f), tape.tanh(g), tape.sigmoid(o));
        let ig = tape.mul(i, g)?;
        let c_new = match c {
            Some(cp) => {
                let fc = tape.mul(f, cp)?;
                tape.add(fc, ig)?
            }
            None => ig,
        };
        let tc = tape.tanh(c_new);
        let h_new = tape.mul(o, tc)?;
        out[t] = Some(h_new);
        h = Some(h_new);
        c = Some(c_new);
    }
    Ok(out.into_iter().map(|v| v.expect("every step visited")).collect())
}

/// Bidirectional LSTM over question token vectors (`M×E`), giving `M×d`
/// with forward states in the first half of each row.
pub fn encode_question(tape: &mut Tape, v: &ModelVars, question_inputs: Var) -> Result<Var> {
    if rows(tape, question_inputs) == 0 {
        return Err(Error::EmptyQuestion);
    }
    let fwd = lstm_direction(tape, &v.lstm_fwd, question_inputs, false)?;
    let bwd = lstm_direction(tape, &v.lstm_bwd, question_inputs, true)?;
    let f = tape.concat(&fwd, 0)?;
    let b = tape.concat(&bwd, 0)?;
    Ok(tape.concat(&[f, b], 1)?)
}

/// Per-relation normalized adjacency: entry `(i, j)` of relation `r` is
/// `1/|N_i|` when `r ∈ R_ij`. Relations with no pairs are omitted.
pub fn adjacency(masks: &[u8], t: usize) -> Result<Vec<(usize, Tensor)>> {
    let mut degree = vec![0usize; t];
    for i in 0..t {
        degree[i] = (0..t).filter(|&j| j != i && masks[i * t + j] != 0).count();
        if degree[i] == 0 && t > 1 {
            return Err(Error::IsolatedNode(i));
        }
    }
    let mut out = Vec::new();
    for r in 0..6 {
        let bit = 1u8 << r;
        let mut data = vec![0.0; t * t];
        let mut any = false;
        for i in 0..t {
            for j in 0..t {
                if i != j && masks[i * t + j] & bit != 0 {
                    data[i * t + j] = 1.0 / degree[i] as f64;
                    any = true;
                }
            }
        }
        if any {
            out.push((r, Tensor::new(vec![t, t], data)?));
        }
    }
    Ok(out)
}

/// `z_i = Σ_j Σ_{r ∈ R_ij} (1/|N_i|) W_r h_j`.
pub fn rgcn_aggregate(tape: &mut Tape, relation_w: &[Var; 6], h: Var, adjacency: &[(usize, Tensor)]) -> Result<Var> {
    let mut z: Option<Var> = None;
    for (r, a) in adjacency {
        let a = tape.constant(a.clone());
        let hw = tape.matmul(h, relation_w[*r])?;
        let msg = tape.matmul(a, hw)?;
        z = Some(match z {
            Some(acc) => tape.add(acc, msg)?,
            None => msg,
        });
    }
    match z {
        Some(z) => Ok(z),
        None => {
            let shape = tape.shape(h).to_vec();
            Ok(tape.constant(Tensor::zeros(&shape)))
        }
    }
}

/// `u = W_0 h + z`.
pub fn combine_update(tape: &mut Tape, self_w: Var, h: Var, z: Var) -> Result<Var> {
    let hw = tape.matmul(h, self_w)?;
    Ok(tape.add(hw, z)?)
}

/// Constant `[M]` row adding `MASKED` at masked positions.
fn mask_row(tape: &mut Tape, mask: &[bool]) -> Result<Var> {
    if !mask.iter().any(|&m| m) {
        return Err(Error::AllMasked);
    }
    let data = mask.iter().map(|&m| if m { 0.0 } else { MASKED }).collect();
    Ok(tape.constant(Tensor::vector(data)))
}

/// Attention weights `α_ij = softmax_j σ(W_q · [u_i; p_j] + b_q)` as `T×M`.
pub fn question_attention_weights(
    tape: &mut Tape,
    w: Var,
    b: Var,
    u: Var,
    p: Var,
    mask: &[bool],
) -> Result<Var> {
    let d = tape.shape(u)[1];
    let (t, m) = (rows(tape, u), rows(tape, p));
    let wu = tape.slice(w, 0, 0, d)?;
    let wp = tape.slice(w, 0, d, 2 * d)?;
    let su = tape.matmul(u, wu)?;
    let su = tape.add(su, b)?;
    let om = ones(tape, 1, m);
    let su = tape.matmul(su, om)?;
    let sp = tape.matmul(p, wp)?;
    let sp = tape.transpose(sp)?;
    let sp = tile_row(tape, sp, t)?;
    let scores = tape.add(su, sp)?;
    let scores = tape.sigmoid(scores);
    let mrow = mask_row(tape, mask)?;
    let scores = tape.add(scores, mrow)?;
    Ok(tape.softmax(scores, 1)?)
}

/// `q_i = Σ_j α_ij p_j`, or the masked mean of `p` when pooling is off.
pub fn question_attend(
    tape: &mut Tape,
    v: &ModelVars,
    u: Var,
    p: Var,
    mask: &[bool],
    use_attention: bool,
) -> Result<Var> {
    if use_attention {
        let alpha = question_attention_weights(tape, v.attention_w, v.attention_b, u, p, mask)?;
        return Ok(tape.matmul(alpha, p)?);
    }
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return Err(Error::AllMasked);
    }
    let weights: Vec<f64> = mask.iter().map(|&m| if m { 1.0 / n as f64 } else { 0.0 }).collect();
    let wrow = tape.constant(Tensor::new(vec![1, mask.len()], weights)?);
    let mean = tape.matmul(wrow, p)?;
    tile_row(tape, mean, rows(tape, u))
}

/// Blends `tanh(a)` into `b` with gate `g`: `g ⊙ tanh(a) + (1 − g) ⊙ b`.
/// A one-column gate applies to every feature.
fn gated_blend(tape: &mut Tape, g: Var, a: Var, b: Var) -> Result<Var> {
    let d = tape.shape(b)[1];
    let g = if tape.shape(g)[1] == 1 && d != 1 {
        let o = ones(tape, 1, d);
        tape.matmul(g, o)?
    } else {
        g
    };
    let ta = tape.tanh(a);
    let left = tape.mul(g, ta)?;
    let keep = tape.one_minus(g);
    let right = tape.mul(keep, b)?;
    Ok(tape.add(left, right)?)
}

/// Question gate values `β = σ([q; u] · W_s + b_s)`.
pub fn question_gate_values(tape: &mut Tape, w: Var, b: Var, q: Var, u: Var) -> Result<Var> {
    let qu = tape.concat(&[q, u], 1)?;
    let pre = linear(tape, qu, w, b)?;
    Ok(tape.sigmoid(pre))
}

/// `u' = β ⊙ tanh(q) + (1 − β) ⊙ u`.
pub fn question_gate(tape: &mut Tape, w: Var, b: Var, q: Var, u: Var) -> Result<Var> {
    let beta = question_gate_values(tape, w, b, q, u)?;
    gated_blend(tape, beta, q, u)
}

/// Layer gate values `w = σ([u'; h] · W_g + b_g)`.
pub fn layer_gate_values(tape: &mut Tape, w: Var, b: Var, u: Var, h: Var) -> Result<Var> {
    let uh = tape.concat(&[u, h], 1)?;
    let pre = linear(tape, uh, w, b)?;
    Ok(tape.sigmoid(pre))
}

/// `h' = w ⊙ tanh(u') + (1 − w) ⊙ h`.
pub fn layer_gate(tape: &mut Tape, w: Var, b: Var, u: Var, h: Var) -> Result<Var> {
    let gate = layer_gate_values(tape, w, b, u, h)?;
    gated_blend(tape, gate, u, h)
}

/// Options for one pass through the layer stack.
#[derive(Clone, Copy, Debug)]
pub struct StackOptions {
    pub layers: usize,
    pub use_question_gate: bool,
    pub use_question_attention: bool,
}

/// One shared-parameter gated relational layer.
pub fn gated_rgcn_layer(
    tape: &mut Tape,
    v: &ModelVars,
    h: Var,
    p: Var,
    mask: &[bool],
    adjacency: &[(usize, Tensor)],
    opts: &StackOptions,
) -> Result<Var> {
    let z = rgcn_aggregate(tape, &v.relations, h, adjacency)?;
    let u = combine_update(tape, v.self_w, h, z)?;
    let u = if opts.use_question_gate {
        let q = question_attend(tape, v, u, p, mask, opts.use_question_attention)?;
        question_gate(tape, v.question_gate_w, v.question_gate_b, q, u)?
    } else {
        u
    };
    layer_gate(tape, v.layer_gate_w, v.layer_gate_b, u, h)
}

/// `L` applications of the shared layer.
pub fn gated_rgcn_forward(
    tape: &mut Tape,
    v: &ModelVars,
    f_n: Var,
    p: Var,
    mask: &[bool],
    adjacency: &[(usize, Tensor)],
    opts: &StackOptions,
) -> Result<Var> {
    let mut h = f_n;
    for _ in 0..opts.layers {
        h = gated_rgcn_layer(tape, v, h, p, mask, adjacency, opts)?;
    }
    Ok(h)
}

/// Node-question similarity `S_ij = mean_k f_a([h_i; p_j; h_i ⊙ p_j])_k`.
///
/// `f_a` is affine, so the mean over its outputs folds into three
/// row-averaged weight vectors and the mean bias; the result equals the
/// direct `T·M × 3d` evaluation.
pub fn similarity(tape: &mut Tape, w: Var, b: Var, h: Var, p: Var) -> Result<Var> {
    let d = tape.shape(h)[1];
    let (t, m) = (rows(tape, h), rows(tape, p));
    let mut avg = Vec::with_capacity(3);
    for k in 0..3 {
        let block = tape.slice(w, 0, k * d, (k + 1) * d)?;
        let mean = tape.mean(block, 1)?;
        avg.push(mean);
    }
    let a1 = tape.reshape(avg[0], &[d, 1])?;
    let a2 = tape.reshape(avg[1], &[d, 1])?;
    let ha = tape.mul(h, avg[2])?;
    let pt = tape.transpose(p)?;
    let cross = tape.matmul(ha, pt)?;
    let sh = tape.matmul(h, a1)?;
    let om = ones(tape, 1, m);
    let sh = tape.matmul(sh, om)?;
    let sp = tape.matmul(p, a2)?;
    let sp = tape.transpose(sp)?;
    let sp = tile_row(tape, sp, t)?;
    let s = tape.add(cross, sh)?;
    let s = tape.add(s, sp)?;
    let bias = tape.mean(b, 0)?;
    Ok(tape.add(s, bias)?)
}

/// Literal similarity: builds every `[h_i; p_j; h_i ⊙ p_j]` row, applies
/// `f_a` and averages. Used to check [`similarity`].
pub fn similarity_direct(tape: &mut Tape, w: Var, b: Var, h: Var, p: Var) -> Result<Var> {
    let (t, m) = (rows(tape, h), rows(tape, p));
    let hi: Vec<usize> = (0..t).flat_map(|i| std::iter::repeat_n(i, m)).collect();
    let pj: Vec<usize> = (0..t).flat_map(|_| 0..m).collect();
    let hr = tape.gather(h, &hi)?;
    let pr = tape.gather(p, &pj)?;
    let hp = tape.mul(hr, pr)?;
    let x = tape.concat(&[hr, pr, hp], 1)?;
    let y = linear(tape, x, w, b)?;
    let s = tape.mean(y, 1)?;
    Ok(tape.reshape(s, &[t, m])?)
}

/// Bidirectional attention output layer, giving one logit per node (`[T]`).
pub fn bidaf_output(tape: &mut Tape, v: &ModelVars, h: Var, p: Var, mask: &[bool]) -> Result<Var> {
    let t = rows(tape, h);
    let s = similarity(tape, v.similarity_w, v.similarity_b, h, p)?;
    let mrow = mask_row(tape, mask)?;
    let s = tape.add(s, mrow)?;
    let a = tape.softmax(s, 1)?;
    let n2q = tape.matmul(a, p)?;
    let best = tape.max(s, 1)?;
    let bn = tape.softmax(best, 0)?;
    let bn = tape.reshape(bn, &[1, t])?;
    let attended = tape.matmul(bn, h)?;
    let q2n = tile_row(tape, attended, t)?;
    let h_n2q = tape.mul(h, n2q)?;
    let h_q2n = tape.mul(h, q2n)?;
    let g = tape.concat(&[h, n2q, h_n2q, h_q2n], 1)?;
    let hidden = linear(tape, g, v.hidden_w, v.hidden_b)?;
    let hidden = tape.tanh(hidden);
    let logits = linear(tape, hidden, v.score_w, v.score_b)?;
    Ok(tape.reshape(logits, &[t])?)
}
