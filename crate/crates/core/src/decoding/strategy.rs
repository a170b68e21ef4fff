//! Rules for choosing the decoder's first context vector `a₁`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{attention, EncoderStates, RecurrentState};
use crate::numeric::{argmax, argmin, dot, SeededRng};
use crate::vocab::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContextStrategy {
    /// Soft attention of the initial decoder state over the encoder.
    StandardSoft,
    /// The encoder state with the largest soft-attention weight.
    HardToBos,
    /// The encoder state at a fixed 1-based position, clamped to the
    /// message length.
    PositionalHard(usize),
    /// A uniformly drawn encoder state.
    RandomHard(u64),
    /// The encoder state with the largest summed inner product against all
    /// encoder states.
    SelfAttnMax,
    /// As `SelfAttnMax`, with the smallest sum.
    SelfAttnMin,
}

impl ContextStrategy {
    pub fn is_hard(&self) -> bool {
        !matches!(self, ContextStrategy::StandardSoft)
    }

    /// Generator for `RandomHard`, keyed on the seed and the message so the
    /// draw does not depend on decoding order.
    pub fn rng_for(&self, message: &[TokenId]) -> SeededRng {
        let seed = match self {
            ContextStrategy::RandomHard(s) => *s,
            _ => 0,
        };
        // FNV-1a over the ids.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &id in message {
            for b in id.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        SeededRng::derive(seed, &[h, message.len() as u64])
    }
}

impl fmt::Display for ContextStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContextStrategy::StandardSoft => f.write_str("standard"),
            ContextStrategy::HardToBos => f.write_str("hard-bos"),
            ContextStrategy::PositionalHard(k) => write!(f, "positional:{k}"),
            ContextStrategy::RandomHard(s) => write!(f, "random:{s}"),
            ContextStrategy::SelfAttnMax => f.write_str("selfattn-max"),
            ContextStrategy::SelfAttnMin => f.write_str("selfattn-min"),
        }
    }
}

impl FromStr for ContextStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Config(format!(
                "unknown strategy {s:?}; expected standard, hard-bos, positional:<k>, random:<seed>, selfattn-max or selfattn-min"
            ))
        };
        Ok(match s.trim() {
            "standard" => ContextStrategy::StandardSoft,
            "hard-bos" => ContextStrategy::HardToBos,
            "selfattn-max" => ContextStrategy::SelfAttnMax,
            "selfattn-min" => ContextStrategy::SelfAttnMin,
            other => match other.split_once(':') {
                Some(("positional", k)) => {
                    let k: usize = k.parse().map_err(|_| bad())?;
                    if k == 0 {
                        return Err(Error::Config("positional strategy is 1-based; k must be ≥ 1".into()));
                    }
                    ContextStrategy::PositionalHard(k)
                }
                Some(("random", seed)) => ContextStrategy::RandomHard(seed.parse().map_err(|_| bad())?),
                _ => return Err(bad()),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstContext {
    pub context: Vec<f64>,
    /// 0-based index into the encoder states for hard strategies.
    pub index: Option<usize>,
    /// Soft-attention weights, for the strategies that compute them.
    pub alphas: Option<Vec<f64>>,
    /// Self-attention scores `e_i`, for the self-attention strategies.
    pub scores: Option<Vec<f64>>,
    /// `PositionalHard(k)` with `k` past the end of the message.
    pub clamped: bool,
}

impl FirstContext {
    fn hard(enc: &EncoderStates, index: usize) -> Self {
        FirstContext {
            context: enc.hidden[index].clone(),
            index: Some(index),
            alphas: None,
            scores: None,
            clamped: false,
        }
    }
}

/// `e_i = Σ_j ⟨h_i, h_j⟩` over all pairs of encoder states.
pub fn self_attention_scores(hidden: &[Vec<f64>]) -> Vec<f64> {
    hidden
        .iter()
        .map(|hi| hidden.iter().map(|hj| dot(hi, hj)).sum())
        .collect()
}

pub fn select_first_context(
    strategy: &ContextStrategy,
    enc: &EncoderStates,
    h0: &RecurrentState,
    rng: &mut SeededRng,
) -> Result<FirstContext> {
    if enc.is_empty() {
        return Err(Error::InvalidInput("first context over empty encoder states".into()));
    }
    let n = enc.len();
    Ok(match *strategy {
        ContextStrategy::StandardSoft => {
            let (alphas, context) = attention(&h0.h, enc)?;
            FirstContext {
                context,
                index: None,
                alphas: Some(alphas),
                scores: None,
                clamped: false,
            }
        }
        ContextStrategy::HardToBos => {
            let (alphas, _) = attention(&h0.h, enc)?;
            let i = argmax(&alphas).expect("non-empty");
            FirstContext {
                alphas: Some(alphas),
                ..FirstContext::hard(enc, i)
            }
        }
        ContextStrategy::PositionalHard(k) => {
            if k == 0 {
                return Err(Error::InvalidInput("positional strategy is 1-based".into()));
            }
            FirstContext {
                clamped: k > n,
                ..FirstContext::hard(enc, k.min(n) - 1)
            }
        }
        ContextStrategy::RandomHard(_) => FirstContext::hard(enc, rng.index(n)),
        ContextStrategy::SelfAttnMax | ContextStrategy::SelfAttnMin => {
            let scores = self_attention_scores(&enc.hidden);
            let i = if *strategy == ContextStrategy::SelfAttnMax {
                argmax(&scores)
            } else {
                argmin(&scores)
            }
            .expect("non-empty");
            FirstContext {
                scores: Some(scores),
                ..FirstContext::hard(enc, i)
            }
        }
    })
}
