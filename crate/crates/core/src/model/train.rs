//! Mini-batch training with dropout and validation-based model selection.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::corpus::EncodedPair;
use crate::error::{Error, Result};
use crate::numeric::SeededRng;

use super::backward::{accumulate_gradient, Dropout};
use super::optim::{adadelta_update, AdaDeltaState};
use super::params::ModelParams;

/// Examples per gradient chunk. Chunks run in parallel and are summed in a
/// fixed order, so results do not depend on the thread count.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub max_epochs: usize,
    pub adadelta_rho: f64,
    pub adadelta_eps: f64,
    /// Global gradient-norm threshold; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Stop after the first epoch whose selection loss falls below this.
    pub target_loss: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.2,
            batch_size: 128,
            dropout_rate: 0.2,
            max_epochs: 10,
            adadelta_rho: 0.95,
            adadelta_eps: 1e-6,
            clip_norm: None,
            target_loss: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("invalid training setting: {what}")));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(self.adadelta_rho > 0.0 && self.adadelta_rho < 1.0) {
            return bad("adadelta_rho must lie in (0, 1)");
        }
        if !(self.adadelta_eps > 0.0) {
            return bad("adadelta_eps must be positive");
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return bad("clip_norm must be positive");
            }
        }
        if let Some(t) = self.target_loss {
            if !(t > 0.0) {
                return bad("target_loss must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<EpochStats>,
    /// Epoch whose parameters were returned; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
}

/// `epoch<TAB>train_loss<TAB>valid_loss`, one line per epoch.
pub fn format_log(log: &[EpochStats]) -> String {
    let mut out = String::new();
    for e in log {
        let _ = writeln!(out, "{}\t{:.6}\t{:.6}", e.epoch, e.train_loss, e.valid_loss);
    }
    out
}

/// Mean per-pair loss without dropout.
pub fn mean_loss(m: &ModelParams, pairs: &[EncodedPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("mean loss over an empty set".into()));
    }
    let losses = pairs
        .par_iter()
        .map(|p| m.sequence_loss(&p.message, &p.response))
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / pairs.len() as f64)
}

/// Index of the first minimum of `losses`.
pub fn best_epoch_index(losses: &[f64]) -> Option<usize> {
    crate::numeric::argmin(losses)
}

fn batch_gradient(
    m: &ModelParams,
    data: &[EncodedPair],
    batch: &[usize],
    cfg: &TrainConfig,
    coords: (usize, usize),
) -> Result<(f64, ModelParams)> {
    let chunks: Vec<(usize, &[usize])> = batch.chunks(GRAD_CHUNK).enumerate().collect();
    let partials = chunks
        .par_iter()
        .map(|&(c, idxs)| {
            let mut grads = m.zeros_like();
            let mut loss = 0.0;
            for (k, &i) in idxs.iter().enumerate() {
                let pair = &data[i];
                let mut rng = SeededRng::derive(
                    cfg.seed,
                    &[coords.0 as u64, coords.1 as u64, (c * GRAD_CHUNK + k) as u64],
                );
                let dropout = (cfg.dropout_rate > 0.0).then(|| Dropout {
                    rate: cfg.dropout_rate,
                    rng: &mut rng,
                });
                loss += accumulate_gradient(m, &pair.message, &pair.response, dropout, &mut grads)?;
            }
            Ok((loss, grads))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = m.zeros_like();
    let mut loss = 0.0;
    for (l, g) in &partials {
        loss += l;
        total.add_assign(g);
    }
    let n = batch.len() as f64;
    total.scale(1.0 / n);
    Ok((loss / n, total))
}

pub fn train(
    init: ModelParams,
    train_set: &[EncodedPair],
    valid_set: &[EncodedPair],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with_observer(init, train_set, valid_set, cfg, |_| {})
}

/// As [`train`], calling `observe` after every epoch.
///
/// When `valid_set` is empty, model selection falls back to the
/// dropout-free training loss.
pub fn train_with_observer(
    init: ModelParams,
    train_set: &[EncodedPair],
    valid_set: &[EncodedPair],
    cfg: &TrainConfig,
    mut observe: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    init.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    let selection_set = if valid_set.is_empty() { train_set } else { valid_set };

    let mut params = init;
    let mut best = params.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = None;
    let mut state = AdaDeltaState::new(&params);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut shuffler = SeededRng::derive(cfg.seed, &[u64::MAX]);
    let mut log = Vec::with_capacity(cfg.max_epochs);

    for epoch in 1..=cfg.max_epochs {
        shuffler.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let (loss, mut grads) = batch_gradient(&params, train_set, batch, cfg, (epoch, b + 1))?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b + 1,
                    loss,
                });
            }
            if let Some(limit) = cfg.clip_norm {
                let norm = grads.l2_norm();
                if norm > limit {
                    grads.scale(limit / norm);
                }
            }
            adadelta_update(&mut params, &grads, &mut state, cfg)?;
            epoch_loss += loss * batch.len() as f64;
        }
        let valid_loss = mean_loss(&params, selection_set)?;
        if !valid_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: 0,
                loss: valid_loss,
            });
        }
        let stats = EpochStats {
            epoch,
            train_loss: epoch_loss / train_set.len() as f64,
            valid_loss,
        };
        observe(&stats);
        log.push(stats);
        if valid_loss < best_loss {
            best_loss = valid_loss;
            best = params.clone();
            best_epoch = Some(epoch);
        }
        if cfg.target_loss.is_some_and(|t| valid_loss < t) {
            break;
        }
    }
    Ok(TrainOutcome {
        params: if best_epoch.is_some() { best } else { params },
        log,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::ModelDims;

    fn data() -> Vec<EncodedPair> {
        vec![
            EncodedPair {
                message: vec![4, 5],
                response: vec![6],
            },
            EncodedPair {
                message: vec![6, 4],
                response: vec![5, 5],
            },
            EncodedPair {
                message: vec![5],
                response: vec![4, 6],
            },
        ]
    }

    fn init() -> ModelParams {
        let dims = ModelDims {
            vocab_size: 7,
            emb_dim: 4,
            hidden_dim: 4,
        };
        ModelParams::init(dims, 0.08, &mut SeededRng::new(2))
    }

    #[test]
    fn zero_epochs_returns_initial() {
        let cfg = TrainConfig {
            max_epochs: 0,
            ..TrainConfig::default()
        };
        let out = train(init(), &data(), &data(), &cfg).unwrap();
        assert_eq!(out.params, init());
        assert!(out.log.is_empty());
        assert_eq!(out.best_epoch, None);
    }

    #[test]
    fn selection_is_first_argmin() {
        assert_eq!(best_epoch_index(&[3.1, 2.0, 2.4]), Some(1));
        assert_eq!(best_epoch_index(&[1.0, 1.0]), Some(0));
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let cfg = TrainConfig {
            learning_rate: 1.0,
            batch_size: 2,
            max_epochs: 40,
            dropout_rate: 0.1,
            seed: 3,
            ..TrainConfig::default()
        };
        let a = train(init(), &data(), &data(), &cfg).unwrap();
        let b = train(init(), &data(), &data(), &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(format_log(&a.log), format_log(&b.log));
        let first = a.log[0].valid_loss;
        let best = a.log.iter().map(|e| e.valid_loss).fold(f64::INFINITY, f64::min);
        assert!(best < first);
        let idx = best_epoch_index(&a.log.iter().map(|e| e.valid_loss).collect::<Vec<_>>()).unwrap();
        assert_eq!(a.best_epoch, Some(idx + 1));
        assert!((mean_loss(&a.params, &data()).unwrap() - best).abs() < 1e-15);
    }

    #[test]
    fn target_loss_stops_early() {
        let cfg = TrainConfig {
            learning_rate: 1.0,
            batch_size: 2,
            max_epochs: 40,
            dropout_rate: 0.0,
            ..TrainConfig::default()
        };
        let full = train(init(), &data(), &data(), &cfg).unwrap();
        let target = full.log[9].valid_loss + 1e-12;
        let stopped = train(
            init(),
            &data(),
            &data(),
            &TrainConfig {
                target_loss: Some(target),
                ..cfg
            },
        )
        .unwrap();
        let first_below = full.log.iter().position(|e| e.valid_loss < target).unwrap();
        assert_eq!(stopped.log.len(), first_below + 1);
        assert_eq!(stopped.log[..], full.log[..=first_below]);
    }

    #[test]
    fn divergence_is_reported() {
        let mut m = init();
        m.out_bias[6] = f64::INFINITY;
        let cfg = TrainConfig {
            max_epochs: 1,
            ..TrainConfig::default()
        };
        let err = train(m, &data(), &data(), &cfg).unwrap_err();
        assert!(matches!(err, Error::Divergence { epoch: 1, batch: 1, .. }), "{err}");
    }

    #[test]
    fn log_format() {
        let log = [EpochStats {
            epoch: 1,
            train_loss: 2.5,
            valid_loss: 2.25,
        }];
        assert_eq!(format_log(&log), "1\t2.500000\t2.250000\n");
    }
}
