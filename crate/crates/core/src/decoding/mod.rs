//! Beam-search decoding with a selectable first-context rule, MMI
//! reranking and selection reports.

mod beam;
mod inspect;
mod mmi;
mod strategy;

pub use beam::{beam_search, rank_order, BeamConfig, BeamOutput, Hypothesis};
pub use inspect::{inspect_selection, SelectionRow};
pub use mmi::{mmi_rerank, reverse_log_prob, Reranked, DEFAULT_LAMBDA};
pub use strategy::{select_first_context, self_attention_scores, ContextStrategy, FirstContext};

use crate::error::Result;
use crate::model::ModelParams;
use crate::vocab::TokenId;

/// Optional reverse model and weight for MMI rescoring.
#[derive(Debug, Clone, Copy)]
pub struct Mmi<'a> {
    pub reverse: &'a ModelParams,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    /// Best response without the closing EOS.
    pub response: Vec<TokenId>,
    /// Forward log-probability of the chosen hypothesis.
    pub log_prob: f64,
    pub first_context: FirstContext,
}

/// Beam search, then MMI reranking of the N-best list when `mmi` is given.
pub fn decode(
    m: &ModelParams,
    message: &[TokenId],
    strategy: &ContextStrategy,
    cfg: &BeamConfig,
    mmi: Option<Mmi<'_>>,
) -> Result<Decoded> {
    let out = beam_search(m, message, strategy, cfg)?;
    let best = match mmi {
        Some(Mmi { reverse, lambda }) => mmi_rerank(out.hypotheses, reverse, message, lambda)?
            .swap_remove(0)
            .hypothesis,
        None => out.hypotheses.into_iter().next().expect("beam returns at least one hypothesis"),
    };
    Ok(Decoded {
        response: best.response().to_vec(),
        log_prob: best.log_prob,
        first_context: out.first_context,
    })
}
