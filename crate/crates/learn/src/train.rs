//! Joint optimization of the classifier, domain-adversarial and contrastive
//! objectives, with per-epoch validation and best-state selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bench::metrics::metrics;
use crate::data::Dataset;
use crate::grl::grl_schedule;
use crate::losses::{total_loss, LossWeights};
use crate::model::{ModelDims, ModelState};
use crate::optim::{AdamW, AdamWConfig};
use crate::LearnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValidationMode {
    /// Hold out part of the labeled source corpus.
    SourceHeldOut,
    /// Hold out part of the target corpus (the rest stays for testing).
    TargetSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda_grl_max: f64,
    pub lambda_adv: f64,
    pub lambda_con: f64,
    pub lambda_cls: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub validation_split: f64,
    pub validation: ValidationMode,
    pub seeds: Vec<u64>,
    pub hidden: usize,
    pub latent: usize,
    pub projection: usize,
    pub domains: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda_grl_max: 1.0,
            lambda_adv: 0.2,
            lambda_con: 0.2,
            lambda_cls: 1.0,
            tau: 0.1,
            batch_size: 8,
            epochs: 5,
            learning_rate: 1e-4,
            weight_decay: 0.01,
            validation_split: 0.2,
            validation: ValidationMode::SourceHeldOut,
            seeds: vec![42, 43, 44, 45, 46],
            hidden: 512,
            latent: 256,
            projection: 128,
            domains: 3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: String| Err(LearnError::Config(m));
        if !(self.tau > 0.0) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        for (name, v) in [
            ("lambda_grl_max", self.lambda_grl_max),
            ("lambda_adv", self.lambda_adv),
            ("lambda_con", self.lambda_con),
            ("lambda_cls", self.lambda_cls),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be a finite non-negative number, got {v}"));
            }
        }
        if !(self.validation_split > 0.0 && self.validation_split < 1.0) {
            return bad(format!("validation_split must be in (0, 1), got {}", self.validation_split));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be positive".into());
        }
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        Ok(())
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            cls: self.lambda_cls,
            adv: self.lambda_adv,
            con: self.lambda_con,
            tau: self.tau,
        }
    }

    pub fn dims(&self, input: usize) -> ModelDims {
        ModelDims {
            input,
            hidden: self.hidden,
            latent: self.latent,
            domains: self.domains,
            projection: self.projection,
            classes: 2,
        }
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.learning_rate,
            weight_decay: self.weight_decay,
            ..Default::default()
        }
    }
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    #[serde(rename = "L_cls")]
    pub l_cls: f64,
    #[serde(rename = "L_adv")]
    pub l_adv: f64,
    #[serde(rename = "L_con")]
    pub l_con: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub val_acc: f64,
    pub val_macro_f1: f64,
    #[serde(rename = "lambda_grl")]
    pub lambda_grl: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the best validation accuracy.
    pub state: ModelState,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Batches in which no sample had a cross-domain positive.
    pub empty_anchor_batches: usize,
}

/// Splits the data for training and model selection according to `cfg.validation`.
/// Returns (train, validation, evaluation target).
pub fn prepare_split(
    source: &Dataset,
    target: Option<&Dataset>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(Dataset, Dataset, Option<Dataset>), LearnError> {
    match cfg.validation {
        ValidationMode::SourceHeldOut => {
            let (train, val) = source.split(cfg.validation_split, seed)?;
            Ok((train, val, target.cloned()))
        }
        ValidationMode::TargetSplit => {
            let target = target.ok_or_else(|| {
                LearnError::Config("target-split validation needs a target corpus".into())
            })?;
            let (test, val) = target.split(cfg.validation_split, seed)?;
            Ok((source.clone(), val, Some(test)))
        }
    }
}

pub fn accuracy_and_f1(state: &ModelState, data: &Dataset) -> Result<(f64, f64), LearnError> {
    let pred: Vec<usize> = state.infer(data.x.view()).into_iter().map(|(c, _)| c).collect();
    let r = metrics(&data.y, &pred)?;
    Ok((r.accuracy, r.macro_f1))
}

/// Trains from a fresh seeded initialization. Deterministic for a given
/// seed: shuffling draws from its own seeded stream and every step runs on
/// one thread.
pub fn train(train: &Dataset, val: &Dataset, cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome, LearnError> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(LearnError::Config("training and validation sets must be nonempty".into()));
    }
    if !train.y.contains(&0) || !train.y.contains(&1) {
        return Err(LearnError::Config("training set must contain both classes".into()));
    }
    if let Some(i) = train.domains.iter().position(Option::is_none) {
        return Err(LearnError::MissingDomain { row: i });
    }
    let mut state = ModelState::init(cfg.dims(train.dim()), seed);
    let mut opt = AdamW::new(cfg.optimizer(), &state);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let weights = cfg.weights();

    let n = train.len();
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let total_steps = (steps_per_epoch * cfg.epochs) as f64;
    let mut completed = 0usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ModelState)> = None;
    let mut empty_anchor_batches = 0;
    let mut lambda = 0.0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 4];
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            lambda = grl_schedule(completed as f64 / total_steps, cfg.lambda_grl_max);
            let batch = train.select(chunk);
            let out = total_loss(&state, &batch, &weights, lambda)?;
            if !out.is_finite() {
                return Err(LearnError::NonFinite {
                    epoch,
                    batch: b,
                    l_cls: out.l_cls,
                    l_adv: out.l_adv,
                    l_con: out.l_con,
                });
            }
            if out.anchors == 0 {
                empty_anchor_batches += 1;
            }
            for (s, v) in sums.iter_mut().zip([out.l_cls, out.l_adv, out.l_con, out.total]) {
                *s += v;
            }
            opt.step(&mut state, &out.grads);
            completed += 1;
        }
        if !state.is_finite() {
            return Err(LearnError::NonFinite {
                epoch,
                batch: steps_per_epoch,
                l_cls: f64::NAN,
                l_adv: f64::NAN,
                l_con: f64::NAN,
            });
        }
        let (val_acc, val_macro_f1) = accuracy_and_f1(&state, val)?;
        let k = steps_per_epoch as f64;
        history.push(EpochRecord {
            epoch,
            l_cls: sums[0] / k,
            l_adv: sums[1] / k,
            l_con: sums[2] / k,
            l: sums[3] / k,
            val_acc,
            val_macro_f1,
            lambda_grl: lambda,
        });
        log::info!(
            "epoch {epoch}: L={:.5} L_cls={:.5} L_adv={:.5} L_con={:.5} val_acc={val_acc:.4} lambda_grl={lambda:.4}",
            sums[3] / k,
            sums[0] / k,
            sums[1] / k,
            sums[2] / k
        );
        if best.as_ref().is_none_or(|(acc, _, _)| val_acc > *acc) {
            best = Some((val_acc, epoch, state.clone()));
        }
    }
    if empty_anchor_batches > 0 {
        log::info!("{empty_anchor_batches} batches had no cross-domain positives (contrastive term 0)");
    }
    let (_, best_epoch, state) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        state,
        history,
        best_epoch,
        empty_anchor_batches,
    })
}

pub fn write_history<W: std::io::Write>(w: W, history: &[EpochRecord]) -> Result<(), LearnError> {
    let mut out = csv::Writer::from_writer(w);
    for r in history {
        out.serialize(r).map_err(|e| LearnError::Io(e.to_string()))?;
    }
    out.flush().map_err(|e| LearnError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    fn separable(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::zeros((n, 6));
        let mut y = Vec::new();
        let mut d = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let dom = (i / 2) % 2;
            x[[i, 0]] = if c == 1 { 1.0 } else { -1.0 } + rng.random_range(-0.4..0.4);
            x[[i, 1 + dom]] = 1.0;
            for j in 3..6 {
                x[[i, j]] = rng.random_range(-0.5..0.5);
            }
            y.push(c);
            d.push(Some(dom));
        }
        Dataset::new(x, y, d, (0..n).map(|i| format!("s{i}")).collect()).unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            hidden: 16,
            latent: 8,
            projection: 4,
            learning_rate: 1e-3,
            ..Default::default()
        }
    }

    #[test]
    fn separable_two_domain_set_is_learned() {
        let data = separable(400, 1);
        let (tr, va) = data.split(0.2, 1).unwrap();
        let out = train(&tr, &va, &small_cfg(), 42).unwrap();
        assert_eq!(out.history.len(), 5);
        let best = out.history.iter().map(|h| h.val_acc).fold(0.0, f64::max);
        assert!(best >= 0.95, "val acc {best}");
        assert_eq!(out.history[out.best_epoch - 1].val_acc, best);
    }

    #[test]
    fn same_seed_same_parameters() {
        let data = separable(120, 2);
        let (tr, va) = data.split(0.2, 1).unwrap();
        let a = train(&tr, &va, &small_cfg(), 7).unwrap();
        let b = train(&tr, &va, &small_cfg(), 7).unwrap();
        assert_eq!(a.state, b.state);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn history_csv_header() {
        let mut buf = Vec::new();
        write_history(
            &mut buf,
            &[EpochRecord { epoch: 1, l_cls: 0.5, l_adv: 1.0, l_con: 2.0, l: 1.1, val_acc: 0.9, val_macro_f1: 0.8, lambda_grl: 0.2 }],
        )
        .unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("epoch,L_cls,L_adv,L_con,L,val_acc,val_macro_f1,lambda_grl\n"));
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = TrainConfig { tau: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig { validation_split: 1.0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
