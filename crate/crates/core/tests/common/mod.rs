//! Reference implementations written independently of the library's
//! numeric kernels, used as oracles by the integration tests.
#![allow(dead_code)]

use selfattn_dialogue::model::{Gate, LstmParams, ModelParams};
use selfattn_dialogue::numeric::Matrix;

pub const BOS: u32 = 1;
pub const EOS: u32 = 2;

fn mv(m: &Matrix, x: &[f64]) -> Vec<f64> {
    (0..m.rows())
        .map(|r| (0..m.cols()).map(|c| m.get(r, c) * x[c]).sum())
        .collect()
}

fn gate(g: &Gate, x: &[f64], h: &[f64]) -> Vec<f64> {
    let a = mv(&g.w, x);
    let b = mv(&g.u, h);
    (0..g.b.len()).map(|k| a[k] + b[k] + g.b[k]).collect()
}

fn sig(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub fn lstm(p: &LstmParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let i = gate(&p.input, x, h);
    let f = gate(&p.forget, x, h);
    let o = gate(&p.output, x, h);
    let g = gate(&p.cell, x, h);
    let mut c2 = vec![0.0; h.len()];
    let mut h2 = vec![0.0; h.len()];
    for k in 0..h.len() {
        c2[k] = sig(f[k]) * c[k] + sig(i[k]) * g[k].tanh();
        h2[k] = sig(o[k]) * c2[k].tanh();
    }
    (h2, c2)
}

pub fn embed(m: &ModelParams, id: u32) -> Vec<f64> {
    m.embedding.row(id as usize).to_vec()
}

/// Encoder hidden states and final cell.
pub fn encode(m: &ModelParams, source: &[u32]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = m.encoder.hidden_dim();
    let (mut h, mut c) = (vec![0.0; n], vec![0.0; n]);
    let mut hs = Vec::new();
    for &id in source {
        let (h2, c2) = lstm(&m.encoder, &embed(m, id), &h, &c);
        h = h2;
        c = c2;
        hs.push(h.clone());
    }
    (hs, c)
}

pub fn soft_context(query: &[f64], hs: &[Vec<f64>]) -> Vec<f64> {
    let scores: Vec<f64> = hs
        .iter()
        .map(|hj| hj.iter().zip(query).map(|(a, b)| a * b).sum())
        .collect();
    let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ex: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
    let z: f64 = ex.iter().sum();
    let mut ctx = vec![0.0; query.len()];
    for (w, hj) in ex.iter().zip(hs) {
        for k in 0..ctx.len() {
            ctx[k] += w / z * hj[k];
        }
    }
    ctx
}

/// `Σ_t log P(y_t | y_<t, X)` for exactly the tokens in `ys`, with soft
/// attention at every step unless `first_context` overrides step 1.
pub fn sequence_log_prob(m: &ModelParams, source: &[u32], ys: &[u32], first_context: Option<&[f64]>) -> f64 {
    let (hs, cell) = encode(m, source);
    let (mut h, mut c) = (hs.last().unwrap().clone(), cell);
    let mut prev = BOS;
    let mut total = 0.0;
    for (t, &y) in ys.iter().enumerate() {
        let ctx = match (t, first_context) {
            (0, Some(a)) => a.to_vec(),
            _ => soft_context(&h, &hs),
        };
        let mut x = embed(m, prev);
        x.extend(&ctx);
        let (h2, c2) = lstm(&m.decoder, &x, &h, &c);
        h = h2;
        c = c2;
        let logits: Vec<f64> = mv(&m.out_proj, &h).iter().zip(&m.out_bias).map(|(a, b)| a + b).collect();
        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + logits.iter().map(|l| (l - mx).exp()).sum::<f64>().ln();
        total += logits[y as usize] - lse;
        prev = y;
    }
    total
}

/// Index of the largest (or smallest) `Σ_j ⟨h_i, h_j⟩`, lowest index on ties.
pub fn brute_self_attention(hs: &[Vec<f64>], max: bool) -> (usize, Vec<f64>) {
    let mut e = vec![0.0; hs.len()];
    for i in 0..hs.len() {
        for j in 0..hs.len() {
            let mut p = 0.0;
            for k in 0..hs[i].len() {
                p += hs[i][k] * hs[j][k];
            }
            e[i] += p;
        }
    }
    let mut best = 0;
    for i in 1..e.len() {
        if (max && e[i] > e[best]) || (!max && e[i] < e[best]) {
            best = i;
        }
    }
    (best, e)
}
