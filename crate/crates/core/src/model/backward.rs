//! Backpropagation through time for [`ModelParams::sequence_loss`].

use crate::error::{Error, Result};
use crate::numeric::{dot, softmax, SeededRng};
use crate::vocab::{TokenId, BOS, EOS};

use super::forward::{lstm_forward, weighted_sum, LstmCache, RecurrentState};
use super::params::{LstmParams, ModelParams};

/// Inverted dropout on non-recurrent connections.
#[derive(Debug)]
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut SeededRng,
}

impl Dropout<'_> {
    fn mask(&mut self, n: usize) -> Vec<f64> {
        let keep = 1.0 - self.rate;
        (0..n)
            .map(|_| if self.rng.unit() < keep { 1.0 / keep } else { 0.0 })
            .collect()
    }
}

fn apply_mask(v: &mut [f64], mask: &Option<Vec<f64>>) {
    if let Some(m) = mask {
        for (x, k) in v.iter_mut().zip(m) {
            *x *= k;
        }
    }
}

struct EncoderStep {
    token: TokenId,
    emb_mask: Option<Vec<f64>>,
    lstm: LstmCache,
}

struct DecoderStep {
    prev_token: TokenId,
    target: TokenId,
    emb_mask: Option<Vec<f64>>,
    alphas: Vec<f64>,
    lstm: LstmCache,
    out_mask: Option<Vec<f64>>,
    projected_h: Vec<f64>,
    probs: Vec<f64>,
}

struct Tape {
    encoder: Vec<EncoderStep>,
    decoder: Vec<DecoderStep>,
    loss: f64,
}

fn forward_tape(
    m: &ModelParams,
    source: &[TokenId],
    target: &[TokenId],
    mut dropout: Option<Dropout<'_>>,
) -> Result<Tape> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::InvalidInput("training pair with an empty side".into()));
    }
    m.check_ids(source)?;
    m.check_ids(target)?;
    let d = m.dims();

    let mut encoder = Vec::with_capacity(source.len());
    let mut state = RecurrentState::zeros(d.hidden_dim);
    for &tok in source {
        let mut x = m.embedding.row(tok as usize).to_vec();
        let emb_mask = dropout.as_mut().map(|dr| dr.mask(d.emb_dim));
        apply_mask(&mut x, &emb_mask);
        let lstm = lstm_forward(&m.encoder, x, &state);
        state = RecurrentState {
            h: lstm.h.clone(),
            c: lstm.c.clone(),
        };
        encoder.push(EncoderStep {
            token: tok,
            emb_mask,
            lstm,
        });
    }
    let hidden: Vec<Vec<f64>> = encoder.iter().map(|s| s.lstm.h.clone()).collect();

    let mut decoder = Vec::with_capacity(target.len() + 1);
    let mut prev = BOS;
    let mut nll = 0.0;
    for &y in target.iter().chain(std::iter::once(&EOS)) {
        let scores: Vec<f64> = hidden.iter().map(|h| dot(&state.h, h)).collect();
        let alphas = softmax(&scores)?;
        let context = weighted_sum(&alphas, &hidden);

        let mut x = m.embedding.row(prev as usize).to_vec();
        let emb_mask = dropout.as_mut().map(|dr| dr.mask(d.emb_dim));
        apply_mask(&mut x, &emb_mask);
        x.extend_from_slice(&context);
        let lstm = lstm_forward(&m.decoder, x, &state);

        let mut projected_h = lstm.h.clone();
        let out_mask = dropout.as_mut().map(|dr| dr.mask(d.hidden_dim));
        apply_mask(&mut projected_h, &out_mask);
        let probs = softmax(&m.project(&projected_h))?;
        nll -= probs[y as usize].ln();

        state = RecurrentState {
            h: lstm.h.clone(),
            c: lstm.c.clone(),
        };
        decoder.push(DecoderStep {
            prev_token: prev,
            target: y,
            emb_mask,
            alphas,
            lstm,
            out_mask,
            projected_h,
            probs,
        });
        prev = y;
    }
    let loss = nll / decoder.len() as f64;
    Ok(Tape {
        encoder,
        decoder,
        loss,
    })
}

/// Backprop one LSTM step. Accumulates parameter gradients into `grads` and
/// returns `(dx, dh_prev, dc_prev)`.
fn lstm_backward(
    p: &LstmParams,
    cache: &LstmCache,
    dh: &[f64],
    dc_next: &[f64],
    grads: &mut LstmParams,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = dh.len();
    let mut dz = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut dc_prev = vec![0.0; n];
    for k in 0..n {
        let (i, f, o, g, tc) = (cache.i[k], cache.f[k], cache.o[k], cache.g[k], cache.tanh_c[k]);
        let dc = dc_next[k] + dh[k] * o * (1.0 - tc * tc);
        dz[0][k] = dc * g * i * (1.0 - i);
        dz[1][k] = dc * cache.c_prev[k] * f * (1.0 - f);
        dz[2][k] = dh[k] * tc * o * (1.0 - o);
        dz[3][k] = dc * i * (1.0 - g * g);
        dc_prev[k] = dc * f;
    }
    let mut dx = vec![0.0; cache.x.len()];
    let mut dh_prev = vec![0.0; n];
    for ((gate, grad), dz) in p.gates().into_iter().zip(grads.gates_mut()).zip(&dz) {
        grad.w.add_outer(dz, &cache.x);
        grad.u.add_outer(dz, &cache.h_prev);
        for (b, d) in grad.b.iter_mut().zip(dz) {
            *b += d;
        }
        gate.w.matvec_t_acc(dz, &mut dx);
        gate.u.matvec_t_acc(dz, &mut dh_prev);
    }
    (dx, dh_prev, dc_prev)
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

fn backward(m: &ModelParams, tape: &Tape, grads: &mut ModelParams) {
    let d = m.dims();
    let hidden: Vec<&[f64]> = tape.encoder.iter().map(|s| s.lstm.h.as_slice()).collect();
    let mut d_enc_hidden = vec![vec![0.0; d.hidden_dim]; hidden.len()];
    let scale = 1.0 / tape.decoder.len() as f64;

    let mut dh_next = vec![0.0; d.hidden_dim];
    let mut dc_next = vec![0.0; d.hidden_dim];
    for step in tape.decoder.iter().rev() {
        // Output layer.
        let mut dlogits = step.probs.clone();
        dlogits[step.target as usize] -= 1.0;
        for v in &mut dlogits {
            *v *= scale;
        }
        grads.out_proj.add_outer(&dlogits, &step.projected_h);
        add_into(&mut grads.out_bias, &dlogits);
        let mut dh = vec![0.0; d.hidden_dim];
        m.out_proj.matvec_t_acc(&dlogits, &mut dh);
        apply_mask(&mut dh, &step.out_mask);
        add_into(&mut dh, &dh_next);

        let (dx, mut dh_prev, dc_prev) =
            lstm_backward(&m.decoder, &step.lstm, &dh, &dc_next, &mut grads.decoder);

        let (demb, dcontext) = dx.split_at(d.emb_dim);
        let mut demb = demb.to_vec();
        apply_mask(&mut demb, &step.emb_mask);
        add_into(grads.embedding.row_mut(step.prev_token as usize), &demb);

        // Context = Σ α_i H_i with α = softmax(<query, H_i>).
        let dalpha: Vec<f64> = hidden.iter().map(|h| dot(dcontext, h)).collect();
        let mean = dot(&step.alphas, &dalpha);
        let query = &step.lstm.h_prev;
        for (i, h) in hidden.iter().enumerate() {
            let a = step.alphas[i];
            let de = a * (dalpha[i] - mean);
            for k in 0..d.hidden_dim {
                d_enc_hidden[i][k] += a * dcontext[k] + de * query[k];
                dh_prev[k] += de * h[k];
            }
        }
        dh_next = dh_prev;
        dc_next = dc_prev;
    }

    // The decoder starts from the encoder's final state.
    let last = d_enc_hidden.len() - 1;
    add_into(&mut d_enc_hidden[last], &dh_next);
    let mut dh_rec = vec![0.0; d.hidden_dim];
    let mut dc_rec = dc_next;
    for (t, step) in tape.encoder.iter().enumerate().rev() {
        let mut dh = d_enc_hidden[t].clone();
        add_into(&mut dh, &dh_rec);
        let (mut dx, dh_prev, dc_prev) =
            lstm_backward(&m.encoder, &step.lstm, &dh, &dc_rec, &mut grads.encoder);
        apply_mask(&mut dx, &step.emb_mask);
        add_into(grads.embedding.row_mut(step.token as usize), &dx);
        dh_rec = dh_prev;
        dc_rec = dc_prev;
    }
}

/// Per-token loss of one pair and its gradient with respect to every
/// parameter, accumulated into `grads`.
pub fn accumulate_gradient(
    m: &ModelParams,
    source: &[TokenId],
    target: &[TokenId],
    dropout: Option<Dropout<'_>>,
    grads: &mut ModelParams,
) -> Result<f64> {
    let tape = forward_tape(m, source, target, dropout)?;
    backward(m, &tape, grads);
    Ok(tape.loss)
}

pub fn loss_and_gradient(
    m: &ModelParams,
    source: &[TokenId],
    target: &[TokenId],
    dropout: Option<Dropout<'_>>,
) -> Result<(f64, ModelParams)> {
    let mut grads = m.zeros_like();
    let loss = accumulate_gradient(m, source, target, dropout, &mut grads)?;
    Ok((loss, grads))
}
