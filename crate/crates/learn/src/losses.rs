//! Classification, domain-adversarial and cross-domain contrastive losses
//! with their analytic gradients.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::Batch;
use crate::grl::grl_backward;
use crate::model::{log_softmax, Linear, ModelState};
use crate::LearnError;

/// Value of a head loss, its gradient w.r.t. the head input `h`, and the
/// head's parameter gradient.
#[derive(Debug, Clone)]
pub struct HeadLoss {
    pub value: f64,
    pub dh: Array2<f64>,
    pub grad: Linear,
}

/// Mean cross-entropy of `softmax(h W + b)` against `targets`.
pub fn cross_entropy_head(h: ArrayView2<f64>, targets: &[usize], head: &Linear) -> HeadLoss {
    let n = h.nrows();
    assert_eq!(n, targets.len(), "targets must match batch rows");
    let logits = head.forward(h);
    let mut dlogits = Array2::zeros(logits.raw_dim());
    let mut value = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        let row = logits.row(i).to_vec();
        let lp = log_softmax(&row);
        value -= lp[t];
        for (k, l) in lp.iter().enumerate() {
            dlogits[[i, k]] = (l.exp() - f64::from(k == t)) / n as f64;
        }
    }
    let mut grad = Linear::zeros(head.inputs(), head.outputs());
    let dh = head.backward(h, dlogits.view(), &mut grad);
    HeadLoss {
        value: value / n as f64,
        dh,
        grad,
    }
}

/// Classification loss over the batch.
pub fn loss_cls(h: ArrayView2<f64>, labels: &[usize], head: &Linear) -> HeadLoss {
    cross_entropy_head(h, labels, head)
}

/// Domain-discrimination loss. `dh` is the gradient of the loss itself;
/// reversal and scaling happen in [`crate::grl::grl_backward`].
pub fn loss_adv(h: ArrayView2<f64>, domains: &[Option<usize>], head: &Linear) -> Result<HeadLoss, LearnError> {
    let targets = domains
        .iter()
        .enumerate()
        .map(|(i, d)| d.ok_or(LearnError::MissingDomain { row: i }))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(bad) = targets.iter().find(|d| **d >= head.outputs()) {
        return Err(LearnError::Shape(format!(
            "domain {bad} outside the {} domains of the discriminator",
            head.outputs()
        )));
    }
    Ok(cross_entropy_head(h, &targets, head))
}

/// Per-anchor positive and negative index sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContrastiveSets {
    /// Same class, different (known) domain.
    pub positives: Vec<Vec<usize>>,
    /// Different class.
    pub negatives: Vec<Vec<usize>>,
    /// Anchors with at least one positive.
    pub anchors: Vec<usize>,
}

pub fn contrastive_sets(labels: &[usize], domains: &[Option<usize>]) -> ContrastiveSets {
    let n = labels.len();
    let mut positives = vec![Vec::new(); n];
    let mut negatives = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if labels[j] != labels[i] {
                negatives[i].push(j);
            } else if matches!((domains[i], domains[j]), (Some(a), Some(b)) if a != b) {
                positives[i].push(j);
            }
        }
    }
    let anchors = (0..n).filter(|i| !positives[*i].is_empty()).collect();
    ContrastiveSets {
        positives,
        negatives,
        anchors,
    }
}

/// `g / ‖g‖`; a zero vector has no direction and is rejected.
pub fn project_u(g: ArrayView1<f64>) -> Result<Array1<f64>, LearnError> {
    let norm = g.dot(&g).sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(LearnError::DegenerateProjection);
    }
    Ok(g.mapv(|v| v / norm))
}

#[derive(Debug, Clone)]
pub struct ConLoss {
    pub value: f64,
    pub dh: Array2<f64>,
    pub grad: Linear,
    pub anchors: usize,
}

/// Cross-domain supervised contrastive loss on `u = g(h) / ‖g(h)‖`.
///
/// For each anchor the softmax runs over its positives and negatives; the
/// anchor's term averages `-log` of that softmax over its positives, and the
/// loss averages over anchors. With no anchors the loss is zero.
pub fn loss_con(
    h: ArrayView2<f64>,
    labels: &[usize],
    domains: &[Option<usize>],
    head: &Linear,
    tau: f64,
) -> Result<ConLoss, LearnError> {
    if !(tau > 0.0) {
        return Err(LearnError::Config(format!("temperature must be positive, got {tau}")));
    }
    let sets = contrastive_sets(labels, domains);
    let mut grad = Linear::zeros(head.inputs(), head.outputs());
    if sets.anchors.is_empty() {
        return Ok(ConLoss {
            value: 0.0,
            dh: Array2::zeros(h.raw_dim()),
            grad,
            anchors: 0,
        });
    }
    let g = head.forward(h);
    let n = g.nrows();
    let mut u = Array2::zeros(g.raw_dim());
    let mut norms = vec![0.0; n];
    for i in 0..n {
        let ui = project_u(g.row(i))?;
        norms[i] = g.row(i).dot(&g.row(i)).sqrt();
        u.row_mut(i).assign(&ui);
    }
    let sim = u.dot(&u.t()) / tau;
    let a_count = sets.anchors.len() as f64;
    let mut value = 0.0;
    let mut du = Array2::<f64>::zeros(u.raw_dim());
    for &i in &sets.anchors {
        let pos = &sets.positives[i];
        let cands: Vec<usize> = pos.iter().chain(&sets.negatives[i]).copied().collect();
        let logits: Vec<f64> = cands.iter().map(|&a| sim[[i, a]]).collect();
        let lp = log_softmax(&logits);
        let p_count = pos.len() as f64;
        value -= lp[..pos.len()].iter().sum::<f64>() / p_count / a_count;
        for (k, &a) in cands.iter().enumerate() {
            let target = if k < pos.len() { 1.0 / p_count } else { 0.0 };
            let c = (lp[k].exp() - target) / a_count / tau;
            if c == 0.0 {
                continue;
            }
            let ua = u.row(a).to_owned();
            let ui = u.row(i).to_owned();
            du.row_mut(i).scaled_add(c, &ua);
            du.row_mut(a).scaled_add(c, &ui);
        }
    }
    let mut dg = Array2::zeros(g.raw_dim());
    for i in 0..n {
        let ui = u.row(i);
        let dui = du.row(i);
        let radial = ui.dot(&dui);
        let row = (&dui - &(&ui * radial)) / norms[i];
        dg.row_mut(i).assign(&row);
    }
    let dh = head.backward(h, dg.view(), &mut grad);
    Ok(ConLoss {
        value,
        dh,
        grad,
        anchors: sets.anchors.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub cls: f64,
    pub adv: f64,
    pub con: f64,
    pub tau: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            cls: 1.0,
            adv: 0.2,
            con: 0.2,
            tau: 0.1,
        }
    }
}

/// Component values, the weighted total and the parameter gradients as used
/// for the update (encoder gradient of the adversarial term reversed).
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub l_cls: f64,
    pub l_adv: f64,
    pub l_con: f64,
    pub total: f64,
    pub grads: ModelState,
    pub anchors: usize,
}

impl LossOutput {
    pub fn is_finite(&self) -> bool {
        self.l_cls.is_finite() && self.l_adv.is_finite() && self.l_con.is_finite() && self.total.is_finite()
    }
}

/// The joint objective and its update gradients.
///
/// Head gradients are those of the weighted total. The encoder receives
/// `cls·dL_cls/dh + con·dL_con/dh` plus the adversarial gradient passed
/// through the reversal layer with coefficient `lambda_grl`.
pub fn total_loss(
    state: &ModelState,
    batch: &Batch,
    w: &LossWeights,
    lambda_grl: f64,
) -> Result<LossOutput, LearnError> {
    state.check_input(batch.x.view())?;
    let cache = state.encode(batch.x.view());
    let h = cache.h.view();
    let cls = loss_cls(h, &batch.y, &state.cls);
    let adv = loss_adv(h, &batch.domains, &state.domain)?;
    let con = loss_con(h, &batch.y, &batch.domains, &state.proj, w.tau)?;

    let mut grads = state.zeros_like();
    grads.cls = cls.grad.scaled(w.cls);
    grads.domain = adv.grad.scaled(w.adv);
    grads.proj = con.grad.scaled(w.con);
    let adv_dh = adv.dh * w.adv;
    let mut dh = cls.dh * w.cls;
    dh.scaled_add(w.con, &con.dh);
    dh += &grl_backward(adv_dh.view(), lambda_grl);
    state.encoder_backward(batch.x.view(), &cache, dh.view(), &mut grads);

    Ok(LossOutput {
        l_cls: cls.value,
        l_adv: adv.value,
        l_con: con.value,
        total: w.cls * cls.value + w.adv * adv.value + w.con * con.value,
        grads,
        anchors: con.anchors,
    })
}
