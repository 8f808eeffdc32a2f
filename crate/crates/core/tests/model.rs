use pathqa_autodiff::{grad_check, Tape, Tensor, Var};
use pathqa_core::embed::HashEmbeddings;
use pathqa_core::graph::EdgeMode;
use pathqa_core::model::layers::{self, StackOptions};
use pathqa_core::model::{
    load_checkpoint, prepare_sample, save_checkpoint, CandidateScoring, Model, ModelConfig, ModelVars, PreparedSample,
};
use pathqa_core::synth::{generate_corpus, SynthSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Mat = Vec<Vec<f64>>;

fn mm(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .map(|row| (0..b[0].len()).map(|j| row.iter().zip(b).map(|(x, br)| x * br[j]).sum()).collect())
        .collect()
}

fn vecmat(x: &[f64], w: &Mat) -> Vec<f64> {
    mm(&vec![x.to_vec()], w).remove(0)
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn cat(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().chain(b).copied().collect()
}

fn rows(t: &Tensor) -> Mat {
    if t.rank() == 1 {
        return vec![t.data().to_vec()];
    }
    (0..t.shape()[0]).map(|i| t.row(i)).collect()
}

fn tensor(m: &Mat) -> Tensor {
    Tensor::from_rows(m).unwrap()
}

fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    (0..r).map(|_| (0..c).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn assert_close(a: &Mat, b: &Mat, tol: f64) {
    assert_eq!(a.len(), b.len());
    for (ra, rb) in a.iter().zip(b) {
        assert_eq!(ra.len(), rb.len());
        for (x, y) in ra.iter().zip(rb) {
            assert!((x - y).abs() <= tol, "{x} vs {y}\n{a:?}\n{b:?}");
        }
    }
}

/// Small model with every parameter drawn uniformly from [-1, 1].
fn random_model(d: usize, e: usize, seed: u64) -> Model {
    let mut model = Model::new(ModelConfig {
        d,
        embed_dim: e,
        init_seed: seed,
        ..ModelConfig::tiny()
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in model.params.iter_mut() {
        for x in p.tensor.data_mut() {
            *x = rng.random_range(-1.0..1.0);
        }
    }
    model
}

fn leaves(tape: &mut Tape, model: &Model) -> ModelVars {
    let l = tape.params(&model.params);
    model.ids.vars(&l)
}

fn value(tape: &Tape, v: Var) -> Mat {
    rows(tape.value(v))
}

fn param(model: &Model, name: &str) -> Mat {
    rows(model.params.tensor(model.params.id(name).unwrap()))
}

fn bias(model: &Model, name: &str) -> Vec<f64> {
    model.params.tensor(model.params.id(name).unwrap()).data().to_vec()
}

#[test]
fn node_embedding_fixture() {
    let mut model = random_model(2, 2, 1);
    let w = vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![-1.0, 1.0], vec![0.5, 0.5]];
    *model.params.tensor_mut(model.ids.node_proj_w) = tensor(&w);
    *model.params.tensor_mut(model.ids.node_proj_b) = Tensor::vector(vec![0.1, -0.1]);
    let mut tape = Tape::new();
    let v = leaves(&mut tape, &model);
    let x = tape.constant(tensor(&vec![vec![1.0, 2.0, 3.0, 4.0]]));
    let f = layers::embed_nodes(&mut tape, &v, x).unwrap();
    // [1·1 + 3·(−1) + 4·0.5, 2·2 + 3·1 + 4·0.5] + b
    assert_close(&value(&tape, f), &vec![vec![0.1, 8.9]], 1e-12);
}

fn lstm_oracle(model: &Model, prefix: &str, xs: &Mat, reverse: bool) -> Mat {
    let wi = param(model, &format!("{prefix}.w_input"));
    let wh = param(model, &format!("{prefix}.w_hidden"));
    let b = bias(model, &format!("{prefix}.bias"));
    let n = wh.len();
    let mut h = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut out = vec![Vec::new(); xs.len()];
    let order: Vec<usize> = if reverse { (0..xs.len()).rev().collect() } else { (0..xs.len()).collect() };
    for t in order {
        let a = vecmat(&xs[t], &wi);
        let r = vecmat(&h, &wh);
        let z: Vec<f64> = (0..4 * n).map(|k| a[k] + r[k] + b[k]).collect();
        for k in 0..n {
            let (i, f, g, o) = (sig(z[k]), sig(z[n + k]), z[2 * n + k].tanh(), sig(z[3 * n + k]));
            c[k] = f * c[k] + i * g;
            h[k] = o * c[k].tanh();
        }
        out[t] = h.clone();
    }
    out
}

#[test]
fn question_encoder_matches_recurrence() {
    let model = random_model(6, 4, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let xs = random_mat(&mut rng, 5, 4);
    let mut tape = Tape::new();
    let v = leaves(&mut tape, &model);
    let x = tape.constant(tensor(&xs));
    let p = layers::encode_question(&mut tape, &v, x).unwrap();
    let fwd = lstm_oracle(&model, "question.fwd", &xs, false);
    let bwd = lstm_oracle(&model, "question.bwd", &xs, true);
    let expected: Mat = fwd.iter().zip(&bwd).map(|(f, b)| cat(f, b)).collect();
    assert_close(&value(&tape, p), &expected, 1e-12);
}

#[test]
fn backward_half_is_forward_pass_on_reversed_input() {
    let model = random_model(4, 3, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xs = random_mat(&mut rng, 4, 3);
    let reversed: Mat = xs.iter().rev().cloned().collect();
    let mut tape = Tape::new();
    let v = leaves(&mut tape, &model);
    let mut swapped = v;
    swapped.lstm_fwd = v.lstm_bwd;
    let x = tape.constant(tensor(&xs));
    let xr = tape.constant(tensor(&reversed));
    let p = layers::encode_question(&mut tape, &v, x).unwrap();
    let pr = layers::encode_question(&mut tape, &swapped, xr).unwrap();
    let (p, pr) = (value(&tape, p), value(&tape, pr));
    let bwd: Mat = p.iter().map(|r| r[2..].to_vec()).collect();
    let fwd_rev: Mat = pr.iter().rev().map(|r| r[..2].to_vec()).collect();
    assert_close(&bwd, &fwd_rev, 1e-12);
}

#[test]
fn zero_lstm_weights_give_zero_states() {
    let mut model = random_model(4, 3, 4);
    for name in ["question.fwd", "question.bwd"] {
        for part in ["w_input", "w_hidden", "bias"] {
            let id = model.params.id(&format!("{name}.{part}")).unwrap();
            let shape = model.params.tensor(id).shape().to_vec();
            *model.params.tensor_mut(id) = Tensor::zeros(&shape);
        }
    }
    let mut tape = Tape::new();
    let v = leaves(&mut tape, &model);
    let x = tape.constant(Tensor::filled(&[3, 3], 5.0));
    let p = layers::encode_question(&mut tape, &v, x).unwrap();
    assert!(tape.value(p).data().iter().all(|&x| x == 0.0));
    let empty = tape.constant(Tensor::zeros(&[0, 3]));
    assert!(layers::encode_question(&mut tape, &v, empty).is_err());
}

/// Random symmetric relation masks where every node has a neighbour.
fn random_masks(rng: &mut ChaCha8Rng, t: usize) -> Vec<u8> {
    let mut masks = vec![0u8; t * t];
    for i in 0..t {
        for j in i + 1..t {
            let m = rng.random_range(0..64u8);
            masks[i * t + j] = m;
            masks[j * t + i] = m;
        }
    }
    for i in 0..t {
        if (0..t).all(|j| masks[i * t + j] == 0) {
            let j = (i + 1) % t;
            masks[i * t + j] = 1 << 5;
            masks[j * t + i] = 1 << 5;
        }
    }
    masks
}

#[test]
fn relational_aggregation_double_sum() {
    let (t, d) = (4, 3);
    let model = random_model(d + 1, 2, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let masks = random_masks(&mut rng, t);
        let hs = random_mat(&mut rng, t, d);
        let ws: Vec<Mat> = (0..6).map(|_| random_mat(&mut rng, d, d)).collect();
        let mut tape = Tape::new();
        let wv: Vec<Var> = ws.iter().map(|w| tape.constant(tensor(w))).collect();
        let wv: [Var; 6] = wv.try_into().unwrap();
        let h = tape.constant(tensor(&hs));
        let adj = layers::adjacency(&masks, t).unwrap();
        let z = layers::rgcn_aggregate(&mut tape, &wv, h, &adj).unwrap();

        let mut expected = vec![vec![0.0; d]; t];
        for i in 0..t {
            let deg = (0..t).filter(|&j| j != i && masks[i * t + j] != 0).count() as f64;
            for j in 0..t {
                if j == i {
                    continue;
                }
                for (r, w) in ws.iter().enumerate() {
                    if masks[i * t + j] & (1 << r) != 0 {
                        let msg = vecmat(&hs[j], w);
                        for k in 0..d {
                            expected[i][k] += msg[k] / deg;
                        }
                    }
                }
            }
        }
        assert_close(&value(&tape, z), &expected, 1e-12);
    }
    drop(model);
}

#[test]
fn single_node_and_isolated_nodes() {
    let mut tape = Tape::new();
    let w: [Var; 6] = std::array::from_fn(|_| tape.constant(Tensor::identity(2)));
    let h = tape.constant(tensor(&vec![vec![1.0, 2.0]]));
    let adj = layers::adjacency(&[0], 1).unwrap();
    let z = layers::rgcn_aggregate(&mut tape, &w, h, &adj).unwrap();
    assert_eq!(tape.value(z).data(), [0.0, 0.0]);
    assert!(layers::adjacency(&[0, 0, 0, 0], 2).is_err());
}

#[test]
fn single_type_is_neighbour_average() {
    let d = 4;
    let model = random_model(d, 3, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let t = 5;
    let masks: Vec<u8> = (0..t * t).map(|k| if k / t == k % t { 0 } else { 1 << 5 }).collect();
    let hs = random_mat(&mut rng, t, d);
    let mut tape = Tape::new();
    let v = leaves(&mut tape, &model);
    let h = tape.constant(tensor(&hs));
    let adj = layers::adjacency(&masks, t).unwrap();
    let z = layers::rgcn_aggregate(&mut tape, &v.relations, h, &adj).unwrap();
    let w = param(&model, "rgcn.relation.fallback");
    let expected: Mat = (0..t)
        .map(|i| {
            let mean: Vec<f64> = (0..d)
                .map(|k| (0..t).filter(|&j| j != i).map(|j| hs[j][k]).sum::<f64>() / (t - 1) as f64)
                .collect();
            vecmat(&mean, &w)
        })
        .collect();
    assert_close(&value(&tape, z), &expected, 1e-12);
}

#[test]
fn question_attention_oracle() {
    let d = 4;
    let model = random_model(d, 3, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let us = random_mat(&mut rng, 3, d);
    let ps = random_mat(&mut rng, 5, d);
    let mask = [true, true, false, true, true];
    let mut tape = Tape::new();
    let v = leaves(&mut tape, &model);
    let u = tape.constant(tensor(&us));
    let p = tape.constant(tensor(&ps));
    let q = layers::question_attend(&mut tape, &v, u, p, &mask, true).unwrap();
    let wq: Vec<f64> = param(&model, "question_attention.weight").iter().map(|r| r[0]).collect();
    let bq = bias(&model, "question_attention.bias")[0];
    let expected: Mat = us
        .iter()
        .map(|ui| {
            let idx: Vec<usize> = (0..ps.len()).filter(|&j| mask[j]).collect();
            let scores: Vec<f64> = idx
                .iter()
                .map(|&j| sig(cat(ui, &ps[j]).iter().zip(&wq).map(|(a, b)| a * b).sum::<f64>() + bq))
                .collect();
            let alpha = softmax(&scores);
            (0..d).map(|k| idx.iter().zip(&alpha).map(|(&j, a)| a * ps[j][k]).sum()).collect()
        })
        .collect();
    assert_close(&value(&tape, q), &expected, 1e-12);

    let mean = layers::question_attend(&mut tape, &v, u, p, &mask, false).unwrap();
    let m: Vec<f64> = (0..d).map(|k| [0, 1, 3, 4].iter().map(|&j| ps[j][k]).sum::<f64>() / 4.0).collect();
    assert_close(&value(&tape, mean), &vec![m.clone(), m.clone(), m], 1e-12);
    assert!(layers::question_attend(&mut tape, &v, u, p, &[false; 5], true).is_err());
}

#[test]
fn gate_algebra() {
    let d = 4;
    let model = random_model(d, 3, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (qs, us, hs) = (random_mat(&mut rng, 3, d), random_mat(&mut rng, 3, d), random_mat(&mut rng, 3, d));
    let mut tape = Tape::new();
    let v = leaves(&mut tape, &model);
    let (q, u, h) = (tape.constant(tensor(&qs)), tape.constant(tensor(&us)), tape.constant(tensor(&hs)));
    let u2 = layers::question_gate(&mut tape, v.question_gate_w, v.question_gate_b, q, u).unwrap();
    let h2 = layers::layer_gate(&mut tape, v.layer_gate_w, v.layer_gate_b, u2, h).unwrap();

    let blend = |w: &Mat, b: &[f64], a: &Mat, x: &Mat| -> Mat {
        a.iter()
            .zip(x)
            .map(|(ai, xi)| {
                let g = vecmat(&cat(ai, xi), w);
                (0..d)
                    .map(|k| {
                        let gk = sig(g[k] + b[k]);
                        gk * ai[k].tanh() + (1.0 - gk) * xi[k]
                    })
                    .collect()
            })
            .collect()
    };
    let u2_oracle = blend(&param(&model, "question_gate.weight"), &bias(&model, "question_gate.bias"), &qs, &us);
    let h2_oracle = blend(&param(&model, "layer_gate.weight"), &bias(&model, "layer_gate.bias"), &u2_oracle, &hs);
    assert_close(&value(&tape, u2), &u2_oracle, 1e-12);
    assert_close(&value(&tape, h2), &h2_oracle, 1e-12);
}

#[test]
fn scalar_gate_applies_to_every_feature() {
    let mut model = Model::new(ModelConfig {
        d: 4,
        embed_dim: 3,
        scalar_question_gate: true,
        ..ModelConfig::tiny()
    })
    .unwrap();
    *model.params.tensor_mut(model.ids.question_gate_w) = Tensor::zeros(&[8, 1]);
    *model.params.tensor_mut(model.ids.question_gate_b) = Tensor::vector(vec![0.0]);
    let mut tape = Tape::new();
    let v = leaves(&mut tape, &model);
    let q = tape.constant(Tensor::filled(&[2, 4], 1.0));
    let u = tape.constant(Tensor::filled(&[2, 4], 3.0));
    let out = layers::question_gate(&mut tape, v.question_gate_w, v.question_gate_b, q, u).unwrap();
    let expect = 0.5 * 1f64.tanh() + 0.5 * 3.0;
    assert!(tape.value(out).data().iter().all(|x| (x - expect).abs() < 1e-15));
}

fn similarity_oracle(w: &Mat, b: &[f64], hs: &Mat, ps: &Mat) -> Mat {
    hs.iter()
        .map(|h| {
            ps.iter()
                .map(|p| {
                    let hp: Vec<f64> = h.iter().zip(p).map(|(a, b)| a * b).collect();
                    let y = vecmat(&cat(&cat(h, p), &hp), w);
                    y.iter().zip(b).map(|(a, c)| a + c).sum::<f64>() / b.len() as f64
                })
                .collect()
        })
        .collect()
}

#[test]
fn similarity_decomposition_matches_direct() {
    let d = 4;
    let model = random_model(d, 3, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let hs = random_mat(&mut rng, 6, d);
    let ps = random_mat(&mut rng, 3, d);
    let mut tape = Tape::new();
    let v = leaves(&mut tape, &model);
    let (h, p) = (tape.constant(tensor(&hs)), tape.constant(tensor(&ps)));
    let s = layers::similarity(&mut tape, v.similarity_w, v.similarity_b, h, p).unwrap();
    let sd = layers::similarity_direct(&mut tape, v.similarity_w, v.similarity_b, h, p).unwrap();
    let oracle = similarity_oracle(&param(&model, "similarity.weight"), &bias(&model, "similarity.bias"), &hs, &ps);
    assert_close(&value(&tape, s), &value(&tape, sd), 1e-12);
    assert_close(&value(&tape, s), &oracle, 1e-12);
}

/// Output layer written out step by step.
fn bidaf_oracle(model: &Model, hs: &Mat, ps: &Mat) -> Vec<f64> {
    let s = similarity_oracle(&param(model, "similarity.weight"), &bias(model, "similarity.bias"), hs, ps);
    let d = hs[0].len();
    let n2q: Mat = s
        .iter()
        .map(|row| {
            let a = softmax(row);
            (0..d).map(|k| a.iter().zip(ps).map(|(w, p)| w * p[k]).sum()).collect()
        })
        .collect();
    let best: Vec<f64> = s.iter().map(|r| r.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect();
    let bn = softmax(&best);
    let q2n: Vec<f64> = (0..d).map(|k| bn.iter().zip(hs).map(|(w, h)| w * h[k]).sum()).collect();
    let wh = param(model, "output.hidden.weight");
    let bh = bias(model, "output.hidden.bias");
    let ws = param(model, "output.score.weight");
    let bs = bias(model, "output.score.bias")[0];
    hs.iter()
        .zip(&n2q)
        .map(|(h, a)| {
            let ha: Vec<f64> = h.iter().zip(a).map(|(x, y)| x * y).collect();
            let hq: Vec<f64> = h.iter().zip(&q2n).map(|(x, y)| x * y).collect();
            let g = cat(&cat(h, a), &cat(&ha, &hq));
            let hidden: Vec<f64> = vecmat(&g, &wh).iter().zip(&bh).map(|(x, b)| (x + b).tanh()).collect();
            vecmat(&hidden, &ws)[0] + bs
        })
        .collect()
}

#[test]
fn bidaf_output_hand_fixture() {
    let mut model = random_model(2, 2, 10);
    let set = |m: &mut Model, name: &str, t: Tensor| {
        let id = m.params.id(name).unwrap();
        *m.params.tensor_mut(id) = t;
    };
    set(
        &mut model,
        "similarity.weight",
        tensor(&vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5], vec![0.0, 0.0], vec![1.0, 1.0], vec![-1.0, 0.0]]),
    );
    set(&mut model, "similarity.bias", Tensor::vector(vec![0.2, 0.0]));
    let hidden: Mat = (0..8).map(|i| vec![0.1 * i as f64, -0.05 * i as f64]).collect();
    set(&mut model, "output.hidden.weight", tensor(&hidden));
    set(&mut model, "output.hidden.bias", Tensor::vector(vec![0.0, 0.1]));
    set(&mut model, "output.score.weight", tensor(&vec![vec![1.0], vec![-2.0]]));
    set(&mut model, "output.score.bias", Tensor::vector(vec![0.5]));
    let hs = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let ps = vec![vec![1.0, 1.0], vec![-1.0, 0.5]];

    // S_00 = mean(h·W1 + p·W2 + (h⊙p)·W3 + b) with W1,W2,W3 the row blocks:
    // [1,0] + [0.5,0.5] + [1,1] + [0.2,0] = [2.7,1.5], mean 2.1
    let s = similarity_oracle(&param(&model, "similarity.weight"), &bias(&model, "similarity.bias"), &hs, &ps);
    assert!((s[0][0] - 2.1).abs() < 1e-12);

    let mut tape = Tape::new();
    let v = leaves(&mut tape, &model);
    let (h, p) = (tape.constant(tensor(&hs)), tape.constant(tensor(&ps)));
    let logits = layers::bidaf_output(&mut tape, &v, h, p, &[true, true]).unwrap();
    assert_close(&value(&tape, logits), &vec![bidaf_oracle(&model, &hs, &ps)], 1e-12);
}

#[test]
fn bidaf_output_random_oracle() {
    let model = random_model(6, 3, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let hs = random_mat(&mut rng, 7, 6);
    let ps = random_mat(&mut rng, 4, 6);
    let mut tape = Tape::new();
    let v = leaves(&mut tape, &model);
    let (h, p) = (tape.constant(tensor(&hs)), tape.constant(tensor(&ps)));
    let logits = layers::bidaf_output(&mut tape, &v, h, p, &[true; 4]).unwrap();
    assert_close(&value(&tape, logits), &vec![bidaf_oracle(&model, &hs, &ps)], 1e-12);
}

fn synth_prepared(n: usize, config: &ModelConfig) -> Vec<PreparedSample> {
    let data = generate_corpus(&SynthSpec {
        num_samples: n,
        ..SynthSpec::default()
    })
    .unwrap();
    let emb = HashEmbeddings::new(config.embed_dim, HashEmbeddings::DEFAULT_STD);
    data.iter().map(|s| prepare_sample(&s.sample, &emb, config).unwrap()).collect()
}

fn small_config() -> ModelConfig {
    ModelConfig {
        d: 8,
        embed_dim: 6,
        layers: 2,
        ..ModelConfig::tiny()
    }
}

/// Reorders nodes by `perm` (new position k holds old node `perm[k]`).
fn permute(s: &PreparedSample, perm: &[usize]) -> PreparedSample {
    let t = s.num_nodes;
    let mut inv = vec![0; t];
    for (k, &old) in perm.iter().enumerate() {
        inv[old] = k;
    }
    let node_rows: Mat = perm.iter().map(|&i| s.node_inputs.row(i)).collect();
    let mut masks = vec![0u8; t * t];
    for a in 0..t {
        for b in 0..t {
            masks[a * t + b] = s.relation_masks[perm[a] * t + perm[b]];
        }
    }
    let mut out = s.clone();
    out.node_inputs = tensor(&node_rows);
    out.relation_masks = masks;
    out.candidate_groups = s.candidate_groups.iter().map(|g| g.iter().map(|&i| inv[i]).collect()).collect();
    out
}

#[test]
fn node_permutation_invariance() {
    let config = small_config();
    let model = Model::new(config.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for s in synth_prepared(10, &config) {
        let mut perm: Vec<usize> = (0..s.num_nodes).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let a = model.predict(&s).unwrap();
        let b = model.predict(&permute(&s, &perm)).unwrap();
        for (x, y) in a.probabilities.iter().zip(&b.probabilities) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn candidate_probabilities_are_distributions() {
    for scoring in [CandidateScoring::NodeSoftmaxMax, CandidateScoring::MaxLogitSoftmax] {
        let config = ModelConfig {
            candidate_scoring: scoring,
            ..small_config()
        };
        let model = Model::new(config.clone()).unwrap();
        for s in synth_prepared(8, &config) {
            let mut tape = Tape::new();
            let l = tape.params(&model.params);
            let out = model.forward(&mut tape, &l, &s).unwrap();
            let probs: Vec<f64> =
                out.candidate_probs.iter().map(|p| p.map_or(0.0, |v| tape.value(v).data()[0])).collect();
            assert!(probs.iter().all(|&p| (0.0..=1.0).contains(&p)));
            let logits = tape.value(out.logits).data().to_vec();
            let nodes: Vec<usize> = {
                let mut n: Vec<usize> = s.candidate_groups.iter().flatten().copied().collect();
                n.sort_unstable();
                n
            };
            let node_sm = softmax(&nodes.iter().map(|&i| logits[i]).collect::<Vec<_>>());
            let expected: Vec<f64> = match scoring {
                CandidateScoring::NodeSoftmaxMax => s
                    .candidate_groups
                    .iter()
                    .map(|g| {
                        g.iter().map(|i| node_sm[nodes.binary_search(i).unwrap()]).fold(0.0, f64::max)
                    })
                    .collect(),
                CandidateScoring::MaxLogitSoftmax => {
                    let best: Vec<f64> = s
                        .candidate_groups
                        .iter()
                        .map(|g| g.iter().map(|&i| logits[i]).fold(f64::NEG_INFINITY, f64::max))
                        .collect();
                    softmax(&best)
                }
            };
            for (p, e) in probs.iter().zip(&expected) {
                assert!((p - e).abs() < 1e-12);
            }
            if scoring == CandidateScoring::MaxLogitSoftmax {
                assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            } else {
                assert!(probs.iter().sum::<f64>() <= 1.0 + 1e-12);
            }
        }
    }
}

#[test]
fn parameter_count_independent_of_layers() {
    let counts: Vec<usize> = (1..=5)
        .map(|layers| {
            Model::new(ModelConfig {
                layers,
                ..ModelConfig::tiny()
            })
            .unwrap()
            .num_parameters()
        })
        .collect();
    assert!(counts.windows(2).all(|w| w[0] == w[1]));
    let (d, e) = (32, 32);
    let expected = 2 * e * d + d
        + 2 * (e * 2 * d + (d / 2) * 2 * d + 2 * d)
        + 7 * d * d
        + 2 * d * d + d
        + 2 * d + 1
        + 2 * d * d + d
        + 3 * d * d + d
        + 4 * d * d + d
        + d + 1;
    assert_eq!(counts[0], expected);
}

#[test]
fn single_type_mode_gives_fallback_only() {
    let config = ModelConfig {
        ablation: pathqa_core::model::AblationFlags {
            edge_mode: EdgeMode::SingleType,
            ..Default::default()
        },
        ..small_config()
    };
    for s in synth_prepared(5, &config) {
        let t = s.num_nodes;
        for i in 0..t {
            for j in 0..t {
                assert_eq!(s.relation_masks[i * t + j], if i == j { 0 } else { 1 << 5 });
            }
        }
    }
}

#[test]
fn model_gradients_match_finite_differences() {
    let config = ModelConfig {
        d: 4,
        embed_dim: 3,
        layers: 2,
        ..ModelConfig::tiny()
    };
    let model = random_model(config.d, config.embed_dim, 15);
    let mut s = synth_prepared(1, &config).remove(0);
    // Unit-scale inputs keep every gradient entry well above rounding noise.
    s.node_inputs = s.node_inputs.map(|x| 10.0 * x);
    s.question_inputs = s.question_inputs.map(|x| 10.0 * x);
    let report = grad_check(&model.params, 1e-4, |tape, l| -> pathqa_core::Result<Var> {
        let out = model.forward(tape, l, &s)?;
        Ok(out.loss.expect("answer in graph"))
    })
    .unwrap();
    assert!(report.max_relative_error < 1e-5, "{report:?}");
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    let config = small_config();
    let model = random_model(config.d, config.embed_dim, 13);
    save_checkpoint(&model, &path).unwrap();
    let back = load_checkpoint(&path, Some(&model.config)).unwrap();
    assert_eq!(back.params, model.params);
    assert_eq!(back.config, model.config);
    let deeper = ModelConfig {
        layers: 7,
        ..model.config.clone()
    };
    assert!(load_checkpoint(&path, Some(&deeper)).is_ok());

    let s = synth_prepared(3, &model.config);
    for x in &s {
        assert_eq!(model.predict(x).unwrap(), back.predict(x).unwrap());
    }

    let wider = ModelConfig {
        d: 10,
        ..model.config.clone()
    };
    assert!(load_checkpoint(&path, Some(&wider)).is_err());

    let mut value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    value["config"]["d"] = 12.into();
    std::fs::write(&path, value.to_string()).unwrap();
    assert!(load_checkpoint(&path, None).is_err());
}

#[test]
fn layer_stack_applies_shared_layer() {
    let model = random_model(4, 3, 14);
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let t = 4;
    let masks = random_masks(&mut rng, t);
    let adj = layers::adjacency(&masks, t).unwrap();
    let opts = StackOptions {
        layers: 3,
        use_question_gate: true,
        use_question_attention: true,
    };
    let mut tape = Tape::new();
    let v = leaves(&mut tape, &model);
    let h0 = tape.constant(tensor(&random_mat(&mut rng, t, 4)));
    let p = tape.constant(tensor(&random_mat(&mut rng, 3, 4)));
    let mask = [true; 3];
    let stacked = layers::gated_rgcn_forward(&mut tape, &v, h0, p, &mask, &adj, &opts).unwrap();
    let mut h = h0;
    for _ in 0..3 {
        h = layers::gated_rgcn_layer(&mut tape, &v, h, p, &mask, &adj, &opts).unwrap();
    }
    assert_close(&value(&tape, stacked), &value(&tape, h), 0.0);
}
