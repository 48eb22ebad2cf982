//! Linear domain probe: how much domain identity a frozen representation
//! still carries.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::model::{softmax_rows, Linear};
use crate::optim::{self, AdamWConfig};
use crate::LearnError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub held_out: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            held_out: 0.3,
            epochs: 300,
            learning_rate: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub accuracy: f64,
    pub domains: usize,
    pub chance: f64,
    pub train_size: usize,
    pub val_size: usize,
}

/// Trains a multinomial logistic regression from `latents` to domain on a
/// seeded stratified split and reports held-out accuracy. Features are
/// standardized with training-split statistics.
pub fn domain_probe(latents: ArrayView2<f64>, domains: &[usize], cfg: &ProbeConfig) -> Result<ProbeReport, LearnError> {
    if latents.nrows() != domains.len() {
        return Err(LearnError::Shape(format!(
            "{} latent rows but {} domain labels",
            latents.nrows(),
            domains.len()
        )));
    }
    let mut present: Vec<usize> = domains.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(LearnError::Config("domain probe needs at least two domains".into()));
    }
    // Reuse the stratified splitter: domain as the stratum, class unused.
    let d = Dataset::new(
        latents.to_owned(),
        vec![0; domains.len()],
        domains.iter().map(|d| Some(*d)).collect(),
        (0..domains.len()).map(|i| i.to_string()).collect(),
    )?;
    let (tr, va) = d.split(cfg.held_out, cfg.seed)?;
    if tr.is_empty() || va.is_empty() {
        return Err(LearnError::Config("domain probe split left an empty side".into()));
    }
    let classes = present.last().copied().unwrap_or(0) + 1;
    let ytr: Vec<usize> = tr.domains.iter().map(|d| d.expect("set above")).collect();
    let yva: Vec<usize> = va.domains.iter().map(|d| d.expect("set above")).collect();

    let mean = tr.x.mean_axis(Axis(0)).expect("nonempty");
    let std = tr.x.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
    let scale = |x: &Array2<f64>| (x - &mean) / &std;
    let xtr = scale(&tr.x);
    let xva = scale(&va.x);

    let mut head = Linear::zeros(xtr.ncols(), classes);
    let opt = AdamWConfig {
        lr: cfg.learning_rate,
        weight_decay: 0.0,
        ..Default::default()
    };
    let (mut mw, mut vw) = (vec![0.0; head.w.len()], vec![0.0; head.w.len()]);
    let (mut mb, mut vb) = (vec![0.0; classes], vec![0.0; classes]);
    let n = xtr.nrows() as f64;
    for t in 1..=cfg.epochs {
        let mut dy = softmax_rows(head.forward(xtr.view()).view());
        for (i, y) in ytr.iter().enumerate() {
            dy[[i, *y]] -= 1.0;
        }
        dy /= n;
        let mut g = Linear::zeros(xtr.ncols(), classes);
        head.backward(xtr.view(), dy.view(), &mut g);
        optim::update(&opt, t as u64, head.w.as_slice_mut().expect("standard"), g.w.as_slice().expect("standard"), &mut mw, &mut vw);
        optim::update(&opt, t as u64, head.b.as_slice_mut().expect("standard"), g.b.as_slice().expect("standard"), &mut mb, &mut vb);
    }
    let pred = head.forward(xva.view());
    let correct = pred
        .rows()
        .into_iter()
        .zip(&yva)
        .filter(|(r, y)| crate::model::argmax(r.as_slice().expect("row")) == **y)
        .count();
    Ok(ProbeReport {
        accuracy: correct as f64 / yva.len() as f64,
        domains: present.len(),
        chance: 1.0 / present.len() as f64,
        train_size: ytr.len(),
        val_size: yva.len(),
    })
}

/// Convenience for a labeled dataset's own domains; rows without a domain
/// are skipped.
pub fn probe_dataset(latents: ArrayView2<f64>, data: &Dataset, cfg: &ProbeConfig) -> Result<ProbeReport, LearnError> {
    let keep: Vec<usize> = (0..data.len()).filter(|i| data.domains[*i].is_some()).collect();
    let doms: Vec<usize> = keep.iter().map(|i| data.domains[*i].expect("filtered")).collect();
    domain_probe(latents.select(Axis(0), &keep).view(), &doms, cfg)
}
