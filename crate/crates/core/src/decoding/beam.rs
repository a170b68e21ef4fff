use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::model::{attention, ModelParams, RecurrentState};
use crate::numeric::log_softmax;
use crate::vocab::{TokenId, BOS, EOS};

use super::strategy::{select_first_context, ContextStrategy, FirstContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeamConfig {
    pub beam_width: usize,
    pub max_len: usize,
    pub length_normalize: bool,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beam_width: 10,
            max_len: 50,
            length_normalize: false,
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 || self.max_len == 0 {
            return Err(Error::Config(format!(
                "beam_width and max_len must be at least 1 (got {} and {})",
                self.beam_width, self.max_len
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Generated tokens, including the closing EOS when one was emitted.
    pub token_ids: Vec<TokenId>,
    pub log_prob: f64,
    /// Log-probability of each generated token, in order.
    pub token_log_probs: Vec<f64>,
    pub state: RecurrentState,
    pub finished: bool,
}

impl Hypothesis {
    pub fn score(&self, length_normalize: bool) -> f64 {
        if length_normalize && !self.token_ids.is_empty() {
            self.log_prob / self.token_ids.len() as f64
        } else {
            self.log_prob
        }
    }

    /// Tokens without the closing EOS.
    pub fn response(&self) -> &[TokenId] {
        match self.token_ids.last() {
            Some(&EOS) => &self.token_ids[..self.token_ids.len() - 1],
            _ => &self.token_ids,
        }
    }
}

/// Final ranking: score descending, then shorter (earlier finished), then
/// lexicographic token ids.
pub fn rank_order(a: &Hypothesis, b: &Hypothesis, length_normalize: bool) -> Ordering {
    b.score(length_normalize)
        .total_cmp(&a.score(length_normalize))
        .then(a.token_ids.len().cmp(&b.token_ids.len()))
        .then_with(|| a.token_ids.cmp(&b.token_ids))
}

#[derive(Debug, Clone)]
pub struct BeamOutput {
    /// Up to `beam_width` finished hypotheses, best first.
    pub hypotheses: Vec<Hypothesis>,
    pub first_context: FirstContext,
    /// Token sequences kept at each step (active and newly finished).
    pub trace: Vec<Vec<Vec<TokenId>>>,
}

impl BeamOutput {
    pub fn best(&self) -> &Hypothesis {
        &self.hypotheses[0]
    }
}

struct Candidate {
    parent: usize,
    token: TokenId,
    token_lp: f64,
    log_prob: f64,
}

/// Beam search where step 1 uses `strategy` for its context vector and
/// later steps use soft attention from the hypothesis' own state.
pub fn beam_search(
    m: &ModelParams,
    message: &[TokenId],
    strategy: &ContextStrategy,
    cfg: &BeamConfig,
) -> Result<BeamOutput> {
    cfg.validate()?;
    let enc = m.encode(message)?;
    let h0 = enc.final_state();
    let first = select_first_context(strategy, &enc, &h0, &mut strategy.rng_for(message))?;
    let vocab = m.vocab_size();
    let per_parent = cfg.beam_width.min(vocab);

    let mut active = vec![Hypothesis {
        token_ids: Vec::new(),
        log_prob: 0.0,
        token_log_probs: Vec::new(),
        state: h0,
        finished: false,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    let mut trace = Vec::new();

    for step in 1..=cfg.max_len {
        let mut states = Vec::with_capacity(active.len());
        let mut cands: Vec<Candidate> = Vec::new();
        for (p, hyp) in active.iter().enumerate() {
            let prev = hyp.token_ids.last().copied().unwrap_or(BOS);
            let context = if step == 1 {
                first.context.clone()
            } else {
                attention(&hyp.state.h, &enc)?.1
            };
            let (state, logits) = m.decoder_step(prev, &hyp.state, &context)?;
            let lp = log_softmax(&logits)?;
            let mut order: Vec<usize> = (0..vocab).collect();
            let by_prob = |a: &usize, b: &usize| lp[*b].total_cmp(&lp[*a]).then(a.cmp(b));
            if per_parent < vocab {
                order.select_nth_unstable_by(per_parent - 1, by_prob);
                order.truncate(per_parent);
            }
            cands.extend(order.into_iter().map(|tok| Candidate {
                parent: p,
                token: tok as TokenId,
                token_lp: lp[tok],
                log_prob: hyp.log_prob + lp[tok],
            }));
            states.push(state);
        }
        cands.sort_by(|a, b| {
            b.log_prob.total_cmp(&a.log_prob).then_with(|| {
                let pa = &active[a.parent].token_ids;
                let pb = &active[b.parent].token_ids;
                pa.cmp(pb).then(a.token.cmp(&b.token))
            })
        });
        cands.truncate(cfg.beam_width);

        let mut next = Vec::with_capacity(cands.len());
        let mut kept = Vec::with_capacity(cands.len());
        for c in cands {
            let parent = &active[c.parent];
            let mut token_ids = parent.token_ids.clone();
            token_ids.push(c.token);
            let mut token_log_probs = parent.token_log_probs.clone();
            token_log_probs.push(c.token_lp);
            let done = c.token == EOS || step == cfg.max_len;
            kept.push(token_ids.clone());
            let hyp = Hypothesis {
                token_ids,
                log_prob: c.log_prob,
                token_log_probs,
                state: states[c.parent].clone(),
                finished: done,
            };
            if done {
                finished.push(hyp);
            } else {
                next.push(hyp);
            }
        }
        trace.push(kept);
        active = next;
        if active.is_empty() || finished.len() >= cfg.beam_width {
            break;
        }
    }

    finished.sort_by(|a, b| rank_order(a, b, cfg.length_normalize));
    finished.truncate(cfg.beam_width);
    Ok(BeamOutput {
        hypotheses: finished,
        first_context: first,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelDims;
    use crate::numeric::SeededRng;

    fn model(vocab: usize, seed: u64) -> ModelParams {
        let dims = ModelDims {
            vocab_size: vocab,
            emb_dim: 3,
            hidden_dim: 3,
        };
        ModelParams::init(dims, 1.0, &mut SeededRng::new(seed))
    }

    fn greedy(m: &ModelParams, msg: &[TokenId], max_len: usize) -> Vec<TokenId> {
        let enc = m.encode(msg).unwrap();
        let mut st = enc.final_state();
        let mut prev = BOS;
        let mut out = vec![];
        for _ in 0..max_len {
            let ctx = attention(&st.h, &enc).unwrap().1;
            let (next, logits) = m.decoder_step(prev, &st, &ctx).unwrap();
            let best = crate::numeric::argmax(&logits).unwrap() as TokenId;
            out.push(best);
            st = next;
            prev = best;
            if best == EOS {
                break;
            }
        }
        out
    }

    #[test]
    fn width_one_is_greedy() {
        for seed in 0..10 {
            let m = model(8, seed);
            let cfg = BeamConfig {
                beam_width: 1,
                max_len: 6,
                length_normalize: false,
            };
            let out = beam_search(&m, &[4, 5, 6], &ContextStrategy::StandardSoft, &cfg).unwrap();
            assert_eq!(out.hypotheses.len(), 1);
            assert_eq!(out.best().token_ids, greedy(&m, &[4, 5, 6], 6), "seed {seed}");
        }
    }

    #[test]
    fn max_len_one_gives_single_tokens() {
        let m = model(9, 1);
        let cfg = BeamConfig {
            beam_width: 4,
            max_len: 1,
            length_normalize: false,
        };
        let out = beam_search(&m, &[4], &ContextStrategy::SelfAttnMax, &cfg).unwrap();
        assert_eq!(out.hypotheses.len(), 4);
        assert!(out.hypotheses.iter().all(|h| h.token_ids.len() == 1 && h.finished));
    }

    #[test]
    fn scores_are_sums_of_token_log_probs() {
        let m = model(10, 3);
        let cfg = BeamConfig {
            beam_width: 5,
            max_len: 4,
            length_normalize: false,
        };
        let out = beam_search(&m, &[4, 7], &ContextStrategy::StandardSoft, &cfg).unwrap();
        for h in &out.hypotheses {
            assert!(h.log_prob <= 0.0);
            let teacher = m.log_likelihood(&[4, 7], h.response()).unwrap();
            if h.token_ids.last() == Some(&EOS) {
                assert!((teacher - h.log_prob).abs() < 1e-9);
            }
        }
        for w in out.hypotheses.windows(2) {
            assert_ne!(rank_order(&w[0], &w[1], false), Ordering::Greater);
        }
    }

    #[test]
    fn length_normalized_ranking() {
        let m = model(6, 4);
        let cfg = BeamConfig {
            beam_width: 6,
            max_len: 3,
            length_normalize: true,
        };
        let out = beam_search(&m, &[4, 5], &ContextStrategy::StandardSoft, &cfg).unwrap();
        for w in out.hypotheses.windows(2) {
            assert!(w[0].score(true) >= w[1].score(true));
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let m = model(6, 4);
        let cfg = BeamConfig {
            beam_width: 0,
            ..BeamConfig::default()
        };
        assert!(beam_search(&m, &[4], &ContextStrategy::StandardSoft, &cfg).is_err());
        assert!(beam_search(&m, &[], &ContextStrategy::StandardSoft, &BeamConfig::default()).is_err());
    }
}
