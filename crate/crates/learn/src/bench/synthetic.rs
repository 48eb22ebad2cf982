//! Controlled domain-shift testbed: Gaussian class clusters plus a
//! per-domain offset, emitted directly as encoded vectors.
//!
//! Axis layout: 0 carries the class signal (±μ), axes `1..=M` carry the
//! nuisance of source domain `d` (offset ν on axis `1 + d`), axis `M + 1` is
//! reserved for a novel target direction, remaining axes are pure noise.

use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::train::TrainConfig;
use crate::LearnError;

/// The benchmark shipped with the crate.
pub const BUILTIN: &str = include_str!("../../data/synthetic_shift.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub seed: u64,
    /// Samples per (class, domain) cell before class skew is applied.
    pub samples_per_cell: usize,
    pub source_domains: usize,
    pub dim: usize,
    pub mu: f64,
    pub sigma: f64,
    pub nu: f64,
    /// Share of bots in each source domain; `0.5` everywhere when empty.
    #[serde(default)]
    pub bot_share: Vec<f64>,
    /// Target nuisance as coefficients on axes `1..=M+1` (scaled by ν).
    /// Empty means the novel axis alone.
    #[serde(default)]
    pub target_nuisance: Vec<f64>,
    /// Training settings the benchmark is meant to be run with.
    #[serde(default)]
    pub train: Option<TrainConfig>,
}

impl SyntheticSpec {
    pub fn builtin() -> Self {
        toml::from_str(BUILTIN).expect("shipped benchmark parses")
    }

    pub fn from_toml(text: &str) -> Result<Self, LearnError> {
        let s: SyntheticSpec = toml::from_str(text).map_err(|e| LearnError::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, LearnError> {
        let text = std::fs::read_to_string(path).map_err(|e| LearnError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: String| Err(LearnError::Config(m));
        if !(self.mu > 0.0 && self.sigma > 0.0 && self.nu >= 0.0) {
            return bad(format!(
                "mu and sigma must be positive and nu non-negative (mu={}, sigma={}, nu={})",
                self.mu, self.sigma, self.nu
            ));
        }
        if self.source_domains < 2 {
            return bad(format!("need at least 2 source domains, got {}", self.source_domains));
        }
        if self.dim < self.source_domains + 2 {
            return bad(format!("dim must be at least {}", self.source_domains + 2));
        }
        if self.samples_per_cell == 0 {
            return bad("samples_per_cell must be positive".into());
        }
        if !self.bot_share.is_empty() && self.bot_share.len() != self.source_domains {
            return bad(format!("bot_share needs {} entries", self.source_domains));
        }
        if self.bot_share.iter().any(|s| !(*s > 0.0 && *s < 1.0)) {
            return bad("bot_share entries must be in (0, 1)".into());
        }
        if self.target_nuisance.len() > self.source_domains + 1 {
            return bad(format!("target_nuisance has at most {} entries", self.source_domains + 1));
        }
        Ok(())
    }

    fn cell_sizes(&self, domain: usize) -> [usize; 2] {
        let share = self.bot_share.get(domain).copied().unwrap_or(0.5);
        let total = 2 * self.samples_per_cell;
        let bots = (total as f64 * share).round() as usize;
        [total - bots, bots]
    }

    fn target_offset(&self) -> Vec<f64> {
        let mut off = vec![0.0; self.dim];
        if self.target_nuisance.is_empty() {
            off[self.source_domains + 1] = self.nu;
        } else {
            for (k, c) in self.target_nuisance.iter().enumerate() {
                off[1 + k] = self.nu * c;
            }
        }
        off
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    /// Labeled source domains `0..M`.
    pub source: Dataset,
    /// The held-out domain; carries no domain label.
    pub target: Dataset,
}

fn sample(
    rng: &mut ChaCha8Rng,
    spec: &SyntheticSpec,
    class: usize,
    offset: &[f64],
    rows: &mut Vec<f64>,
) {
    let sign = if class == 1 { 1.0 } else { -1.0 };
    for (j, off) in offset.iter().enumerate() {
        let noise: f64 = StandardNormal.sample(rng);
        let signal = if j == 0 { sign * spec.mu } else { 0.0 };
        rows.push(signal + off + spec.sigma * noise);
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus, LearnError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let build = |rng: &mut ChaCha8Rng, cells: &[(usize, Option<usize>, usize, Vec<f64>)], tag: &str| {
        let mut data = Vec::new();
        let (mut y, mut d, mut ids) = (Vec::new(), Vec::new(), Vec::new());
        for (class, domain, count, offset) in cells {
            for _ in 0..*count {
                sample(rng, spec, *class, offset, &mut data);
                ids.push(format!("{tag}{}", ids.len()));
                y.push(*class);
                d.push(*domain);
            }
        }
        let x = Array2::from_shape_vec((y.len(), spec.dim), data).expect("rows have dim entries");
        Dataset::new(x, y, d, ids)
    };
    let mut cells = Vec::new();
    for dom in 0..spec.source_domains {
        let mut off = vec![0.0; spec.dim];
        off[1 + dom] = spec.nu;
        for (class, n) in spec.cell_sizes(dom).into_iter().enumerate() {
            cells.push((class, Some(dom), n, off.clone()));
        }
    }
    let source = build(&mut rng, &cells, "s")?;
    let off = spec.target_offset();
    let target_cells = [
        (0, None, spec.samples_per_cell, off.clone()),
        (1, None, spec.samples_per_cell, off),
    ];
    let target = build(&mut rng, &target_cells, "t")?;
    Ok(SyntheticCorpus { source, target })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            seed: 3,
            samples_per_cell: 200,
            source_domains: 3,
            dim: 8,
            mu: 2.0,
            sigma: 1.0,
            nu: 3.0,
            bot_share: vec![],
            target_nuisance: vec![],
            train: None,
        }
    }

    #[test]
    fn builtin_spec_is_valid() {
        let s = SyntheticSpec::builtin();
        s.validate().unwrap();
        assert!(s.train.is_some());
    }

    #[test]
    fn seeded_and_shaped() {
        let a = generate_synthetic(&small()).unwrap();
        let b = generate_synthetic(&small()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.source.len(), 3 * 400);
        assert_eq!(a.target.len(), 400);
        assert!(a.target.domains.iter().all(Option::is_none));
    }

    #[test]
    fn class_mean_separation_is_two_mu() {
        let c = generate_synthetic(&small()).unwrap();
        let mean = |cls: usize| {
            let v: Vec<f64> = (0..c.source.len()).filter(|i| c.source.y[*i] == cls).map(|i| c.source.x[[i, 0]]).collect();
            (v.iter().sum::<f64>() / v.len() as f64, v.len())
        };
        let ((m0, n0), (m1, _)) = (mean(0), mean(1));
        let tol = 3.0 * 1.0 * (2.0 / n0 as f64).sqrt();
        assert!(((m1 - m0) - 4.0).abs() < tol, "separation {}", m1 - m0);
    }

    #[test]
    fn no_nuisance_means_no_shift() {
        let spec = SyntheticSpec { nu: 0.0, ..small() };
        let c = generate_synthetic(&spec).unwrap();
        for j in 1..spec.dim {
            let ms = c.source.x.column(j).mean().unwrap();
            let mt = c.target.x.column(j).mean().unwrap();
            assert!((ms - mt).abs() < 0.2, "axis {j}: {ms} vs {mt}");
        }
    }

    #[test]
    fn bot_share_skews_cells() {
        let spec = SyntheticSpec { bot_share: vec![0.25, 0.5, 0.75], ..small() };
        let c = generate_synthetic(&spec).unwrap();
        let bots = |d: usize| (0..c.source.len()).filter(|i| c.source.domains[*i] == Some(d) && c.source.y[*i] == 1).count();
        assert_eq!((bots(0), bots(1), bots(2)), (100, 200, 300));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(SyntheticSpec { source_domains: 1, ..small() }.validate().is_err());
        assert!(SyntheticSpec { sigma: 0.0, ..small() }.validate().is_err());
        assert!(SyntheticSpec { dim: 4, ..small() }.validate().is_err());
        assert!(SyntheticSpec { bot_share: vec![0.5], ..small() }.validate().is_err());
    }
}
