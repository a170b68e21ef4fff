//! Forward computation of the attention encoder-decoder.

use crate::error::{Error, Result};
use crate::numeric::{dot, log_softmax, sigmoid_scalar, softmax};
use crate::vocab::{TokenId, BOS, EOS};

use super::params::{LstmParams, ModelParams};

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl RecurrentState {
    pub fn zeros(hidden: usize) -> Self {
        RecurrentState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Encoder outputs `H_X` plus the final cell.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderStates {
    pub hidden: Vec<Vec<f64>>,
    pub final_cell: Vec<f64>,
}

impl EncoderStates {
    pub fn len(&self) -> usize {
        self.hidden.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hidden.is_empty()
    }

    /// Initial decoder state: the encoder's final hidden and cell vectors.
    pub fn final_state(&self) -> RecurrentState {
        RecurrentState {
            h: self.hidden.last().cloned().unwrap_or_default(),
            c: self.final_cell.clone(),
        }
    }
}

/// Intermediate values of one LSTM step, kept for backprop.
#[derive(Debug, Clone)]
pub(crate) struct LstmCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub g: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

pub(crate) fn lstm_forward(p: &LstmParams, x: Vec<f64>, prev: &RecurrentState) -> LstmCache {
    let i: Vec<f64> = p.input.preactivation(&x, &prev.h).into_iter().map(sigmoid_scalar).collect();
    let f: Vec<f64> = p.forget.preactivation(&x, &prev.h).into_iter().map(sigmoid_scalar).collect();
    let o: Vec<f64> = p.output.preactivation(&x, &prev.h).into_iter().map(sigmoid_scalar).collect();
    let g: Vec<f64> = p.cell.preactivation(&x, &prev.h).into_iter().map(f64::tanh).collect();
    let c: Vec<f64> = (0..g.len()).map(|k| f[k] * prev.c[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = o.iter().zip(&tanh_c).map(|(a, b)| a * b).collect();
    LstmCache {
        x,
        h_prev: prev.h.clone(),
        c_prev: prev.c.clone(),
        i,
        f,
        o,
        g,
        c,
        tanh_c,
        h,
    }
}

/// One LSTM step: sigmoid gates, tanh candidate, `c = f⊙c' + i⊙g`,
/// `h = o⊙tanh(c)`.
pub fn lstm_step(p: &LstmParams, input: &[f64], prev: &RecurrentState) -> Result<RecurrentState> {
    let hidden = p.hidden_dim();
    if input.len() != p.input_dim() || prev.h.len() != hidden || prev.c.len() != hidden {
        return Err(Error::InvalidShape(format!(
            "lstm_step: params expect input {} / hidden {}, got input {}, h {}, c {}",
            p.input_dim(),
            hidden,
            input.len(),
            prev.h.len(),
            prev.c.len()
        )));
    }
    let cache = lstm_forward(p, input.to_vec(), prev);
    Ok(RecurrentState {
        h: cache.h,
        c: cache.c,
    })
}

/// Soft attention of `query` over the encoder states: inner-product scores,
/// softmax weights, weighted sum.
pub fn attention(query: &[f64], enc: &EncoderStates) -> Result<(Vec<f64>, Vec<f64>)> {
    let Some(first) = enc.hidden.first() else {
        return Err(Error::InvalidInput("attention over empty encoder states".into()));
    };
    if query.len() != first.len() {
        return Err(Error::InvalidShape(format!(
            "attention query has length {}, encoder states have {}",
            query.len(),
            first.len()
        )));
    }
    let scores: Vec<f64> = enc.hidden.iter().map(|h| dot(query, h)).collect();
    let alphas = softmax(&scores)?;
    Ok((alphas.clone(), weighted_sum(&alphas, &enc.hidden)))
}

pub(crate) fn weighted_sum(weights: &[f64], vectors: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; vectors[0].len()];
    for (w, v) in weights.iter().zip(vectors) {
        for (o, x) in out.iter_mut().zip(v) {
            *o += w * x;
        }
    }
    out
}

impl ModelParams {
    fn check_id(&self, id: TokenId) -> Result<()> {
        if (id as usize) < self.vocab_size() {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                id,
                size: self.vocab_size(),
            })
        }
    }

    pub(crate) fn check_ids(&self, ids: &[TokenId]) -> Result<()> {
        ids.iter().try_for_each(|&id| self.check_id(id))
    }

    /// Run the encoder from a zero state over `message`.
    pub fn encode(&self, message: &[TokenId]) -> Result<EncoderStates> {
        if message.is_empty() {
            return Err(Error::InvalidInput("cannot encode an empty message".into()));
        }
        self.check_ids(message)?;
        let mut state = RecurrentState::zeros(self.hidden_dim());
        let mut hidden = Vec::with_capacity(message.len());
        for &id in message {
            let cache = lstm_forward(&self.encoder, self.embedding.row(id as usize).to_vec(), &state);
            state = RecurrentState {
                h: cache.h,
                c: cache.c,
            };
            hidden.push(state.h.clone());
        }
        Ok(EncoderStates {
            hidden,
            final_cell: state.c,
        })
    }

    /// One decoder step with LSTM input `[embedding(prev_id); context]`;
    /// returns the new state and the output logits over the vocabulary.
    pub fn decoder_step(
        &self,
        prev_id: TokenId,
        prev: &RecurrentState,
        context: &[f64],
    ) -> Result<(RecurrentState, Vec<f64>)> {
        self.check_id(prev_id)?;
        if context.len() != self.hidden_dim() {
            return Err(Error::InvalidShape(format!(
                "context vector has length {}, hidden dim is {}",
                context.len(),
                self.hidden_dim()
            )));
        }
        let mut input = self.embedding.row(prev_id as usize).to_vec();
        input.extend_from_slice(context);
        let state = lstm_step(&self.decoder, &input, prev)?;
        let logits = self.project(&state.h);
        Ok((state, logits))
    }

    pub(crate) fn project(&self, h: &[f64]) -> Vec<f64> {
        let mut logits = self.out_bias.clone();
        self.out_proj.matvec_acc(h, &mut logits);
        logits
    }

    /// Teacher-forced `log P(target, EOS | source)` with soft attention at
    /// every step, or with `first_context` substituted for `a₁` when given.
    pub fn log_likelihood_with(
        &self,
        source: &[TokenId],
        target: &[TokenId],
        first_context: Option<&[f64]>,
    ) -> Result<f64> {
        let enc = self.encode(source)?;
        self.check_ids(target)?;
        let mut state = enc.final_state();
        let mut prev = BOS;
        let mut total = 0.0;
        for (t, &y) in target.iter().chain(std::iter::once(&EOS)).enumerate() {
            let context = match (t, first_context) {
                (0, Some(a1)) => a1.to_vec(),
                _ => attention(&state.h, &enc)?.1,
            };
            let (next, logits) = self.decoder_step(prev, &state, &context)?;
            total += log_softmax(&logits)?[y as usize];
            state = next;
            prev = y;
        }
        Ok(total)
    }

    pub fn log_likelihood(&self, source: &[TokenId], target: &[TokenId]) -> Result<f64> {
        self.log_likelihood_with(source, target, None)
    }

    /// Mean per-token cross entropy over `target` plus the closing EOS.
    pub fn sequence_loss(&self, source: &[TokenId], target: &[TokenId]) -> Result<f64> {
        if target.is_empty() {
            return Err(Error::InvalidInput("empty response".into()));
        }
        Ok(-self.log_likelihood(source, target)? / (target.len() + 1) as f64)
    }
}
