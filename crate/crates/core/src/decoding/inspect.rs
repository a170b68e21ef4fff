use crate::error::Result;
use crate::model::ModelParams;
use crate::vocab::TokenId;

use super::beam::{beam_search, BeamConfig};
use super::strategy::{ContextStrategy, FirstContext};

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRow {
    pub strategy: ContextStrategy,
    pub first: FirstContext,
    /// Best response without the closing EOS.
    pub response: Vec<TokenId>,
    pub log_prob: f64,
}

impl SelectionRow {
    /// 1-based selected position, `"<k> clamped"` when a positional rule
    /// ran past the message, or the soft weights for the standard rule.
    pub fn selection_label(&self) -> String {
        match (&self.first.index, &self.first.alphas) {
            (Some(i), _) if self.first.clamped => format!("{} clamped", i + 1),
            (Some(i), _) => (i + 1).to_string(),
            (None, Some(alphas)) => {
                let w: Vec<String> = alphas.iter().map(|a| format!("{a:.4}")).collect();
                format!("soft[{}]", w.join(","))
            }
            (None, None) => "-".to_string(),
        }
    }
}

/// Decode `message` once per strategy and report which encoder state each
/// one chose for the first step.
pub fn inspect_selection(
    m: &ModelParams,
    message: &[TokenId],
    strategies: &[ContextStrategy],
    cfg: &BeamConfig,
) -> Result<Vec<SelectionRow>> {
    strategies
        .iter()
        .map(|s| {
            let out = beam_search(m, message, s, cfg)?;
            let best = out.best();
            Ok(SelectionRow {
                strategy: *s,
                response: best.response().to_vec(),
                log_prob: best.log_prob,
                first: out.first_context,
            })
        })
        .collect()
}
