//! Ablation table, single-weight sweeps and the multi-seed suite.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::metrics::{mean_std, metrics, EvalReport};
use crate::bench::probe::{probe_dataset, ProbeConfig, ProbeReport};
use crate::bench::config_digest;
use crate::data::Dataset;
use crate::train::{prepare_split, train, TrainConfig};
use crate::LearnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ablation {
    Full,
    NoAdversarial,
    NoContrast,
    NoBoth,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Full, Ablation::NoAdversarial, Ablation::NoContrast, Ablation::NoBoth];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "MGDIL",
            Ablation::NoAdversarial => "W/O adversarial",
            Ablation::NoContrast => "W/O Contrast",
            Ablation::NoBoth => "W/O Adv. & Con.",
        }
    }

    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut c = base.clone();
        if matches!(self, Ablation::NoAdversarial | Ablation::NoBoth) {
            c.lambda_adv = 0.0;
        }
        if matches!(self, Ablation::NoContrast | Ablation::NoBoth) {
            c.lambda_con = 0.0;
        }
        c
    }
}

/// One trained model evaluated on the target corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: String,
    pub seed: u64,
    pub lambda_adv: f64,
    pub lambda_con: f64,
    pub best_epoch: usize,
    pub report: EvalReport,
    /// Domain probe on the source latents, when requested.
    pub probe: Option<ProbeReport>,
}

/// Trains with `cfg` and `seed`, then evaluates on `target` (or the held-out
/// validation split when there is no target).
pub fn run_once(
    name: &str,
    source: &Dataset,
    target: Option<&Dataset>,
    cfg: &TrainConfig,
    seed: u64,
    probe: Option<&ProbeConfig>,
) -> Result<RunResult, LearnError> {
    let (tr, val, test) = prepare_split(source, target, cfg, seed)?;
    let out = train(&tr, &val, cfg, seed)?;
    let eval = test.as_ref().unwrap_or(&val);
    let pred: Vec<usize> = out.state.infer(eval.x.view()).into_iter().map(|(c, _)| c).collect();
    let mut report = metrics(&eval.y, &pred)?;
    report.seed = Some(seed);
    report.config_digest = Some(config_digest(cfg));
    let probe = match probe {
        Some(p) => {
            let h = out.state.latents(source.x.view());
            Some(probe_dataset(h.view(), source, &ProbeConfig { seed, ..*p })?)
        }
        None => None,
    };
    Ok(RunResult {
        config: name.to_string(),
        seed,
        lambda_adv: cfg.lambda_adv,
        lambda_con: cfg.lambda_con,
        best_epoch: out.best_epoch,
        report,
        probe,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

impl MetricSummary {
    pub fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        MetricSummary { mean, std, runs: values.len() }
    }
}

impl std::fmt::Display for MetricSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2} ± {:.2}", 100.0 * self.mean, 100.0 * self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub config: String,
    pub lambda_adv: f64,
    pub lambda_con: f64,
    pub accuracy: MetricSummary,
    pub macro_f1: MetricSummary,
    pub probe_accuracy: Option<MetricSummary>,
}

fn summarize(name: &str, runs: &[&RunResult]) -> ConfigSummary {
    let acc: Vec<f64> = runs.iter().map(|r| r.report.accuracy).collect();
    let f1: Vec<f64> = runs.iter().map(|r| r.report.macro_f1).collect();
    let probes: Vec<f64> = runs.iter().filter_map(|r| r.probe.as_ref().map(|p| p.accuracy)).collect();
    ConfigSummary {
        config: name.to_string(),
        lambda_adv: runs.first().map_or(f64::NAN, |r| r.lambda_adv),
        lambda_con: runs.first().map_or(f64::NAN, |r| r.lambda_con),
        accuracy: MetricSummary::of(&acc),
        macro_f1: MetricSummary::of(&f1),
        probe_accuracy: (!probes.is_empty()).then(|| MetricSummary::of(&probes)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub runs: Vec<RunResult>,
    pub summary: Vec<ConfigSummary>,
}

impl AblationTable {
    pub fn get(&self, a: Ablation) -> Option<&ConfigSummary> {
        self.summary.iter().find(|s| s.config == a.name())
    }
}

/// Every (configuration, seed) cell, trained in parallel. Results do not
/// depend on scheduling: each cell is single-threaded and seeded.
pub fn ablation_run(
    source: &Dataset,
    target: Option<&Dataset>,
    base: &TrainConfig,
    configs: &[Ablation],
    probe: Option<&ProbeConfig>,
) -> Result<AblationTable, LearnError> {
    if base.seeds.is_empty() {
        return Err(LearnError::Config("no seeds configured".into()));
    }
    let cells: Vec<(Ablation, u64)> = configs
        .iter()
        .flat_map(|a| base.seeds.iter().map(move |s| (*a, *s)))
        .collect();
    let runs: Vec<RunResult> = cells
        .par_iter()
        .map(|(a, seed)| run_once(a.name(), source, target, &a.apply(base), *seed, probe))
        .collect::<Result<_, _>>()?;
    let summary = configs
        .iter()
        .map(|a| {
            let mine: Vec<&RunResult> = runs.iter().filter(|r| r.config == a.name()).collect();
            summarize(a.name(), &mine)
        })
        .collect();
    Ok(AblationTable { runs, summary })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepWeight {
    LambdaAdv,
    LambdaCon,
}

impl std::str::FromStr for SweepWeight {
    type Err = LearnError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lambda_adv" | "lambda-adv" | "adv" => Ok(SweepWeight::LambdaAdv),
            "lambda_con" | "lambda-con" | "con" => Ok(SweepWeight::LambdaCon),
            other => Err(LearnError::Config(format!("unknown sweep weight {other:?} (lambda_adv | lambda_con)"))),
        }
    }
}

impl SweepWeight {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepWeight::LambdaAdv => "lambda_adv",
            SweepWeight::LambdaCon => "lambda_con",
        }
    }
}

pub const SWEEP_PINNED: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub weight: SweepWeight,
    pub value: f64,
    pub lambda_adv: f64,
    pub lambda_con: f64,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub macro_f1_mean: f64,
    pub macro_f1_std: f64,
    pub runs: usize,
}

/// Varies one weight over `values` with the other pinned at 0.2.
pub fn sweep(
    source: &Dataset,
    target: Option<&Dataset>,
    base: &TrainConfig,
    which: SweepWeight,
    values: &[f64],
) -> Result<Vec<SweepPoint>, LearnError> {
    if values.is_empty() {
        return Err(LearnError::Config("sweep needs at least one value".into()));
    }
    let cfgs: Vec<TrainConfig> = values
        .iter()
        .map(|v| {
            let mut c = base.clone();
            match which {
                SweepWeight::LambdaAdv => {
                    c.lambda_adv = *v;
                    c.lambda_con = SWEEP_PINNED;
                }
                SweepWeight::LambdaCon => {
                    c.lambda_con = *v;
                    c.lambda_adv = SWEEP_PINNED;
                }
            }
            c
        })
        .collect();
    let cells: Vec<(usize, u64)> = (0..cfgs.len())
        .flat_map(|i| base.seeds.iter().map(move |s| (i, *s)))
        .collect();
    let runs: Vec<(usize, RunResult)> = cells
        .par_iter()
        .map(|(i, seed)| run_once("sweep", source, target, &cfgs[*i], *seed, None).map(|r| (*i, r)))
        .collect::<Result<_, _>>()?;
    Ok(cfgs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let acc: Vec<f64> = runs.iter().filter(|(j, _)| *j == i).map(|(_, r)| r.report.accuracy).collect();
            let f1: Vec<f64> = runs.iter().filter(|(j, _)| *j == i).map(|(_, r)| r.report.macro_f1).collect();
            let (am, asd) = mean_std(&acc);
            let (fm, fsd) = mean_std(&f1);
            SweepPoint {
                weight: which,
                value: values[i],
                lambda_adv: c.lambda_adv,
                lambda_con: c.lambda_con,
                accuracy_mean: am,
                accuracy_std: asd,
                macro_f1_mean: fm,
                macro_f1_std: fsd,
                runs: acc.len(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSuite {
    pub runs: Vec<RunResult>,
    pub accuracy: MetricSummary,
    pub macro_f1: MetricSummary,
}

/// The configured model once per seed in `cfg.seeds`.
pub fn seed_suite(source: &Dataset, target: Option<&Dataset>, cfg: &TrainConfig) -> Result<SeedSuite, LearnError> {
    let table = ablation_run(source, target, cfg, &[Ablation::Full], None)?;
    let s = table.summary.into_iter().next().expect("one config");
    Ok(SeedSuite {
        runs: table.runs,
        accuracy: s.accuracy,
        macro_f1: s.macro_f1,
    })
}

/// Flat CSV rows: one per run.
pub fn write_runs_csv<W: std::io::Write>(w: W, runs: &[RunResult]) -> Result<(), LearnError> {
    let mut out = csv::Writer::from_writer(w);
    let io = |e: csv::Error| LearnError::Io(e.to_string());
    out.write_record([
        "config", "seed", "lambda_adv", "lambda_con", "best_epoch", "accuracy", "macro_f1", "probe_accuracy",
    ])
    .map_err(io)?;
    for r in runs {
        out.write_record([
            r.config.clone(),
            r.seed.to_string(),
            r.lambda_adv.to_string(),
            r.lambda_con.to_string(),
            r.best_epoch.to_string(),
            format!("{:.6}", r.report.accuracy),
            format!("{:.6}", r.report.macro_f1),
            r.probe.as_ref().map_or(String::new(), |p| format!("{:.6}", p.accuracy)),
        ])
        .map_err(io)?;
    }
    out.flush().map_err(|e| LearnError::Io(e.to_string()))
}

/// One row per configuration with mean and std of each metric.
pub fn write_summary_csv<W: std::io::Write>(w: W, rows: &[ConfigSummary]) -> Result<(), LearnError> {
    let mut out = csv::Writer::from_writer(w);
    let io = |e: csv::Error| LearnError::Io(e.to_string());
    out.write_record([
        "config", "lambda_adv", "lambda_con", "runs", "accuracy_mean", "accuracy_std", "macro_f1_mean", "macro_f1_std",
        "probe_mean", "probe_std",
    ])
    .map_err(io)?;
    for s in rows {
        let (pm, ps) = s
            .probe_accuracy
            .as_ref()
            .map_or((String::new(), String::new()), |p| (format!("{:.6}", p.mean), format!("{:.6}", p.std)));
        out.write_record([
            s.config.clone(),
            s.lambda_adv.to_string(),
            s.lambda_con.to_string(),
            s.accuracy.runs.to_string(),
            format!("{:.6}", s.accuracy.mean),
            format!("{:.6}", s.accuracy.std),
            format!("{:.6}", s.macro_f1.mean),
            format!("{:.6}", s.macro_f1.std),
            pm,
            ps,
        ])
        .map_err(io)?;
    }
    out.flush().map_err(|e| LearnError::Io(e.to_string()))
}

pub fn write_sweep_csv<W: std::io::Write>(w: W, points: &[SweepPoint]) -> Result<(), LearnError> {
    let mut out = csv::Writer::from_writer(w);
    for p in points {
        out.serialize(p).map_err(|e| LearnError::Io(e.to_string()))?;
    }
    out.flush().map_err(|e| LearnError::Io(e.to_string()))
}
