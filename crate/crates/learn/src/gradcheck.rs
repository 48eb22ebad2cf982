//! Central finite-difference checks of the analytic gradients.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::Batch;
use crate::losses::{loss_adv, loss_cls, loss_con, total_loss, LossWeights};
use crate::model::{ModelDims, ModelState, ParamGroup, TENSOR_NAMES};
use crate::LearnError;

pub const EPSILON: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LossKind {
    Cls,
    Adv,
    Con,
    Total,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [LossKind::Cls, LossKind::Adv, LossKind::Con, LossKind::Total];

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Cls => "L_cls",
            LossKind::Adv => "L_adv",
            LossKind::Con => "L_con",
            LossKind::Total => "L",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TensorCheck {
    pub tensor: &'static str,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub loss: LossKind,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.tensors.iter().map(|t| t.rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_err() < tol
    }
}

/// `‖a − n‖ / max(‖a‖, ‖n‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], n: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = a.iter().zip(n).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = norm(a).max(norm(n));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Gradient of one unweighted component (no reversal) w.r.t. every parameter.
pub fn component_grads(state: &ModelState, batch: &Batch, kind: LossKind, tau: f64) -> Result<ModelState, LearnError> {
    let cache = state.encode(batch.x.view());
    let h = cache.h.view();
    let mut g = state.zeros_like();
    let dh = match kind {
        LossKind::Cls => {
            let l = loss_cls(h, &batch.y, &state.cls);
            g.cls = l.grad;
            l.dh
        }
        LossKind::Adv => {
            let l = loss_adv(h, &batch.domains, &state.domain)?;
            g.domain = l.grad;
            l.dh
        }
        LossKind::Con => {
            let l = loss_con(h, &batch.y, &batch.domains, &state.proj, tau)?;
            g.proj = l.grad;
            l.dh
        }
        LossKind::Total => {
            return Err(LearnError::Config("use total_loss for the joint objective".into()));
        }
    };
    state.encoder_backward(batch.x.view(), &cache, dh.view(), &mut g);
    Ok(g)
}

/// (L_cls, L_adv, L_con) at the given parameters.
pub fn loss_values(state: &ModelState, batch: &Batch, tau: f64) -> Result<[f64; 3], LearnError> {
    let h = state.latents(batch.x.view());
    Ok([
        loss_cls(h.view(), &batch.y, &state.cls).value,
        loss_adv(h.view(), &batch.domains, &state.domain)?.value,
        loss_con(h.view(), &batch.y, &batch.domains, &state.proj, tau)?.value,
    ])
}

/// Compares analytic and central-difference gradients for one loss.
///
/// For the joint objective the head gradients are checked against `L`
/// itself, while the encoder gradients are checked against the objective the
/// encoder actually descends: `cls·L_cls + con·L_con − λ·adv·L_adv`.
pub fn check_loss(
    state: &ModelState,
    batch: &Batch,
    kind: LossKind,
    w: &LossWeights,
    lambda_grl: f64,
    eps: f64,
) -> Result<GradCheckReport, LearnError> {
    let analytic = match kind {
        LossKind::Total => total_loss(state, batch, w, lambda_grl)?.grads,
        k => component_grads(state, batch, k, w.tau)?,
    };
    let objective = |s: &ModelState, group: ParamGroup| -> Result<f64, LearnError> {
        let [c, a, k] = loss_values(s, batch, w.tau)?;
        Ok(match kind {
            LossKind::Cls => c,
            LossKind::Adv => a,
            LossKind::Con => k,
            LossKind::Total if group == ParamGroup::Theta => w.cls * c + w.con * k - lambda_grl * w.adv * a,
            LossKind::Total => w.cls * c + w.adv * a + w.con * k,
        })
    };
    let mut probe = state.clone();
    let mut tensors = Vec::with_capacity(TENSOR_NAMES.len());
    for (t, (name, group)) in TENSOR_NAMES.iter().enumerate() {
        let len = probe.tensors()[t].len();
        let mut numeric = vec![0.0; len];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = probe.tensors()[t][i];
            probe.tensors_mut()[t][i] = orig + eps;
            let up = objective(&probe, *group)?;
            probe.tensors_mut()[t][i] = orig - eps;
            let down = objective(&probe, *group)?;
            probe.tensors_mut()[t][i] = orig;
            *slot = (up - down) / (2.0 * eps);
        }
        let a = analytic.tensors()[t];
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        tensors.push(TensorCheck {
            tensor: name,
            analytic_norm: norm(a),
            numeric_norm: norm(&numeric),
            rel_err: relative_error(a, &numeric),
        });
    }
    Ok(GradCheckReport { loss: kind, tensors })
}

/// A random small model and batch in which every sample carries a domain and
/// at least one cross-domain positive pair exists.
pub fn random_problem(seed: u64) -> (ModelState, Batch) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = ModelDims {
        input: 10,
        hidden: 12,
        latent: 8,
        domains: 3,
        projection: 6,
        classes: 2,
    };
    let state = ModelState::init(dims, rng.random());
    let n = rng.random_range(4..=8);
    let x = Array2::from_shape_simple_fn((n, dims.input), || rng.random_range(-1.0..1.0));
    let mut y: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
    let mut d: Vec<Option<usize>> = (0..n).map(|_| Some(rng.random_range(0..3))).collect();
    y[0] = 1;
    y[1] = 1;
    y[2] = 0;
    d[0] = Some(0);
    d[1] = Some(1);
    let batch = Batch {
        x,
        y,
        domains: d,
        ids: (0..n).map(|i| format!("g{i}")).collect(),
    };
    (state, batch)
}

/// Runs every loss on `problems` random batches; one report per (batch, loss).
pub fn run_suite(problems: usize, base_seed: u64) -> Result<Vec<GradCheckReport>, LearnError> {
    let w = LossWeights::default();
    let mut out = Vec::new();
    for k in 0..problems {
        let (state, batch) = random_problem(base_seed + k as u64);
        let lambda = 0.25 + 0.5 * (k as f64 / problems.max(1) as f64);
        for kind in LossKind::ALL {
            out.push(check_loss(&state, &batch, kind, &w, lambda, EPSILON)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_edge_cases() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(relative_error(&[1.0, 0.0], &[0.0, 0.0]), 1.0);
    }

    #[test]
    fn gradients_pass_on_a_few_batches() {
        for r in run_suite(3, 100).unwrap() {
            assert!(r.passed(TOLERANCE), "{:?}: {:?}", r.loss, r.tensors);
        }
    }
}
