//! Bidirectional rescoring of an N-best list with a response→message model.

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::vocab::{TokenId, EOS};

use super::beam::Hypothesis;

pub const DEFAULT_LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Reranked {
    pub hypothesis: Hypothesis,
    /// `log P(Y|X)` under the forward model.
    pub forward: f64,
    /// `log P(X|Y)` under the reverse model.
    pub reverse: f64,
    pub score: f64,
}

/// Teacher-forced `log P(message | candidate)` under `reverse`. An empty
/// candidate is fed to the encoder as the single token EOS.
pub fn reverse_log_prob(reverse: &ModelParams, candidate: &Hypothesis, message: &[TokenId]) -> Result<f64> {
    let response = candidate.response();
    let source: &[TokenId] = if response.is_empty() { &[EOS] } else { response };
    reverse.log_likelihood(source, message)
}

/// Score each candidate by `forward + lambda · reverse` and stable-sort
/// descending. No length penalty is applied.
pub fn mmi_rerank(
    candidates: Vec<Hypothesis>,
    reverse: &ModelParams,
    message: &[TokenId],
    lambda: f64,
) -> Result<Vec<Reranked>> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("nothing to rerank".into()));
    }
    let size = reverse.vocab_size();
    let fits = |ids: &[TokenId]| ids.iter().all(|&id| (id as usize) < size);
    if !fits(message) || !candidates.iter().all(|c| fits(&c.token_ids)) {
        return Err(Error::Config(format!(
            "reverse model vocabulary ({size} entries) cannot represent the candidates"
        )));
    }
    let mut out = candidates
        .into_iter()
        .map(|h| {
            let reverse_lp = reverse_log_prob(reverse, &h, message)?;
            Ok(Reranked {
                forward: h.log_prob,
                reverse: reverse_lp,
                score: h.log_prob + lambda * reverse_lp,
                hypothesis: h,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(out)
}
