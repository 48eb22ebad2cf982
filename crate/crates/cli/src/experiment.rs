//! Model-side subcommands: train, eval, ablate, sweep, probe, gradcheck.

use std::fs::File;
use std::path::Path;

use anyhow::Result;

use mgdil_learn::bench::ablation::{
    ablation_run, seed_suite, sweep as run_sweep, write_runs_csv, write_summary_csv, write_sweep_csv, Ablation,
    MetricSummary, SweepWeight,
};
use mgdil_learn::bench::config_digest;
use mgdil_learn::bench::manifest::{digest_file, RunManifest};
use mgdil_learn::bench::metrics::{metrics, EvalReport};
use mgdil_learn::bench::probe::{probe_dataset, ProbeConfig};
use mgdil_learn::checkpoint::Checkpoint;
use mgdil_learn::gradcheck::{run_suite, TOLERANCE};
use mgdil_learn::train::{prepare_split, write_history};
use mgdil_learn::TrainConfig;

use crate::data::{self, encoder_from_tag, Loaded};
use crate::{usage, Ctx, DataArgs, Split};

fn with_seeds(mut cfg: TrainConfig, seeds: Option<Vec<u64>>) -> Result<TrainConfig> {
    if let Some(s) = seeds {
        cfg.seeds = s;
    }
    if cfg.seeds.is_empty() {
        return Err(usage("no seeds given"));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn save_manifest(ctx: &Ctx, command: &str, loaded: &Loaded, cfg: &TrainConfig, seeds: &[u64], outputs: &[&str]) -> Result<()> {
    let m = RunManifest::new(
        command,
        seeds,
        cfg,
        loaded.inputs.clone(),
        outputs.iter().map(|s| s.to_string()).collect(),
    );
    m.save(&ctx.out_path(&format!("{command}_manifest.json"))?)?;
    Ok(())
}

pub fn train(ctx: &Ctx, args: &DataArgs, suite: bool, seeds: Option<Vec<u64>>) -> Result<()> {
    let loaded = data::load(args, &ctx.cfg, None)?;
    let cfg = with_seeds(loaded.train.clone(), seeds)?;
    let seed = ctx.seed.unwrap_or(cfg.seeds[0]);
    let (tr, val, _) = prepare_split(&loaded.source, loaded.target.as_ref(), &cfg, seed)?;
    log::info!("training on {} rows, validating on {} (seed {seed})", tr.len(), val.len());
    let out = mgdil_learn::train(&tr, &val, &cfg, seed)?;
    Checkpoint::new(&out.state, &cfg, seed, &loaded.encoder_tag, out.best_epoch).save(&ctx.out_path("checkpoint.json")?)?;
    write_history(File::create(ctx.out_path("history.csv")?)?, &out.history)?;
    let best = &out.history[out.best_epoch - 1];
    println!(
        "seed {seed}: best epoch {} val_acc {:.4} val_macro_f1 {:.4}",
        out.best_epoch, best.val_acc, best.val_macro_f1
    );
    let mut outputs = vec!["checkpoint.json", "history.csv"];
    let mut seeds_used = vec![seed];
    if suite {
        let s = seed_suite(&loaded.source, loaded.target.as_ref(), &cfg)?;
        write_runs_csv(File::create(ctx.out_path("seed_suite.csv")?)?, &s.runs)?;
        let mut w = csv::Writer::from_path(ctx.out_path("seed_suite_summary.csv")?)?;
        w.write_record(["metric", "mean", "std", "runs", "display"])?;
        for (name, m) in [("accuracy", &s.accuracy), ("macro_f1", &s.macro_f1)] {
            w.write_record([
                name.to_string(),
                format!("{:.6}", m.mean),
                format!("{:.6}", m.std),
                m.runs.to_string(),
                m.to_string(),
            ])?;
        }
        w.flush()?;
        println!("seeds {:?}: accuracy {} macro_f1 {}", cfg.seeds, s.accuracy, s.macro_f1);
        outputs.extend(["seed_suite.csv", "seed_suite_summary.csv"]);
        seeds_used = cfg.seeds.clone();
    }
    save_manifest(ctx, "train", &loaded, &cfg, &seeds_used, &outputs)
}

pub(crate) fn write_eval_csv(path: &Path, split: &str, n: usize, r: &EvalReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "split", "n", "accuracy", "macro_f1", "precision_human", "recall_human", "f1_human", "precision_bot",
        "recall_bot", "f1_bot", "tn", "fp", "fn", "tp", "seed", "config_digest",
    ])?;
    let [h, b] = &r.per_class;
    let c = r.confusion;
    w.write_record([
        split.to_string(),
        n.to_string(),
        format!("{:.6}", r.accuracy),
        format!("{:.6}", r.macro_f1),
        format!("{:.6}", h.precision),
        format!("{:.6}", h.recall),
        format!("{:.6}", h.f1),
        format!("{:.6}", b.precision),
        format!("{:.6}", b.recall),
        format!("{:.6}", b.f1),
        c[0][0].to_string(),
        c[0][1].to_string(),
        c[1][0].to_string(),
        c[1][1].to_string(),
        r.seed.map_or(String::new(), |s| s.to_string()),
        r.config_digest.clone().unwrap_or_default(),
    ])?;
    w.flush()?;
    Ok(())
}

pub fn eval(ctx: &Ctx, checkpoint: &Path, args: &DataArgs, split: Option<Split>) -> Result<()> {
    if !checkpoint.exists() {
        return Err(usage(format!("checkpoint {} does not exist", checkpoint.display())));
    }
    let ck = Checkpoint::load(checkpoint)?;
    let state = ck.state()?;
    let enc = encoder_from_tag(&ck.encoder, &ctx.cfg)?;
    let loaded = data::load(args, &ctx.cfg, enc.as_ref().map(|(k, c)| (*k, c)))?;
    if args.synthetic.is_some() && loaded.encoder_tag != ck.encoder {
        log::warn!("checkpoint was trained on {} but evaluated on {}", ck.encoder, loaded.encoder_tag);
    }
    let split = split.unwrap_or(if args.synthetic.is_some() { Split::Target } else { Split::All });
    let d = loaded.split(split)?;
    state.check_input(d.x.view())?;
    let pred: Vec<usize> = state.infer(d.x.view()).into_iter().map(|(c, _)| c).collect();
    let mut report = metrics(&d.y, &pred)?;
    report.seed = Some(ck.seed);
    report.config_digest = Some(config_digest(&ck.config));
    let name = format!("{split:?}").to_lowercase();
    write_eval_csv(&ctx.out_path("eval.csv")?, &name, d.len(), &report)?;
    std::fs::write(ctx.out_path("eval.json")?, serde_json::to_string_pretty(&report)? + "\n")?;
    println!(
        "{name} ({} rows): accuracy {:.4} macro_f1 {:.4}",
        d.len(),
        report.accuracy,
        report.macro_f1
    );
    Ok(())
}

fn fmt_opt(m: &Option<MetricSummary>) -> String {
    m.as_ref().map_or_else(|| "-".to_string(), |m| m.to_string())
}

pub fn ablate(ctx: &Ctx, args: &DataArgs, seeds: Option<Vec<u64>>, probe: bool) -> Result<()> {
    let loaded = data::load(args, &ctx.cfg, None)?;
    let cfg = with_seeds(loaded.train.clone(), seeds)?;
    let pcfg = ProbeConfig::default();
    let table = ablation_run(
        &loaded.source,
        loaded.target.as_ref(),
        &cfg,
        &Ablation::ALL,
        probe.then_some(&pcfg),
    )?;
    write_runs_csv(File::create(ctx.out_path("ablation_runs.csv")?)?, &table.runs)?;
    write_summary_csv(File::create(ctx.out_path("ablation_summary.csv")?)?, &table.summary)?;
    println!("{:<18} {:>15} {:>15} {:>15}", "config", "accuracy", "macro_f1", "domain probe");
    for s in &table.summary {
        println!(
            "{:<18} {:>15} {:>15} {:>15}",
            s.config,
            s.accuracy.to_string(),
            s.macro_f1.to_string(),
            fmt_opt(&s.probe_accuracy)
        );
    }
    save_manifest(ctx, "ablate", &loaded, &cfg, &cfg.seeds, &["ablation_runs.csv", "ablation_summary.csv"])
}

pub fn sweep(ctx: &Ctx, args: &DataArgs, which: SweepWeight, values: &[f64], seeds: Option<Vec<u64>>) -> Result<()> {
    if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(usage("sweep values must be finite and non-negative"));
    }
    let loaded = data::load(args, &ctx.cfg, None)?;
    let cfg = with_seeds(loaded.train.clone(), seeds)?;
    let points = run_sweep(&loaded.source, loaded.target.as_ref(), &cfg, which, values)?;
    let name = format!("sweep_{}.csv", which.as_str());
    write_sweep_csv(File::create(ctx.out_path(&name)?)?, &points)?;
    for p in &points {
        println!(
            "{}={}: accuracy {:.4} ± {:.4} macro_f1 {:.4} ± {:.4}",
            which.as_str(),
            p.value,
            p.accuracy_mean,
            p.accuracy_std,
            p.macro_f1_mean,
            p.macro_f1_std
        );
    }
    save_manifest(ctx, "sweep", &loaded, &cfg, &cfg.seeds, &[name.as_str()])
}

pub fn probe(ctx: &Ctx, checkpoint: Option<&Path>, args: &DataArgs, seeds: Option<Vec<u64>>) -> Result<()> {
    let pcfg = ProbeConfig {
        seed: ctx.seed.unwrap_or(0),
        ..Default::default()
    };
    if let Some(path) = checkpoint {
        if !path.exists() {
            return Err(usage(format!("checkpoint {} does not exist", path.display())));
        }
        let ck = Checkpoint::load(path)?;
        let state = ck.state()?;
        let enc = encoder_from_tag(&ck.encoder, &ctx.cfg)?;
        let loaded = data::load(args, &ctx.cfg, enc.as_ref().map(|(k, c)| (*k, c)))?;
        state.check_input(loaded.source.x.view())?;
        let h = state.latents(loaded.source.x.view());
        let r = probe_dataset(h.view(), &loaded.source, &pcfg)?;
        std::fs::write(ctx.out_path("probe.json")?, serde_json::to_string_pretty(&r)? + "\n")?;
        println!(
            "domain probe accuracy {:.4} over {} domains (chance {:.4})",
            r.accuracy, r.domains, r.chance
        );
        let inputs = [loaded.inputs.clone(), vec![digest_file(path)?]].concat();
        RunManifest::new("probe", &[pcfg.seed], &pcfg, inputs, vec!["probe.json".into()])
            .save(&ctx.out_path("probe_manifest.json")?)?;
        return Ok(());
    }
    let loaded = data::load(args, &ctx.cfg, None)?;
    let cfg = with_seeds(loaded.train.clone(), seeds)?;
    let table = ablation_run(
        &loaded.source,
        loaded.target.as_ref(),
        &cfg,
        &[Ablation::Full, Ablation::NoAdversarial],
        Some(&pcfg),
    )?;
    write_runs_csv(File::create(ctx.out_path("probe_runs.csv")?)?, &table.runs)?;
    write_summary_csv(File::create(ctx.out_path("probe_summary.csv")?)?, &table.summary)?;
    let mean = |a: Ablation| table.get(a).and_then(|s| s.probe_accuracy.as_ref()).map_or(f64::NAN, |p| p.mean);
    for s in &table.summary {
        println!("{:<18} domain probe {}", s.config, fmt_opt(&s.probe_accuracy));
    }
    println!(
        "probe drop with adversarial training: {:.2} points",
        100.0 * (mean(Ablation::NoAdversarial) - mean(Ablation::Full))
    );
    save_manifest(ctx, "probe", &loaded, &cfg, &cfg.seeds, &["probe_runs.csv", "probe_summary.csv"])
}

pub fn gradcheck(ctx: &Ctx, batches: usize) -> Result<()> {
    if batches == 0 {
        return Err(usage("--batches must be positive"));
    }
    let seed = ctx.seed.unwrap_or(0);
    let reports = run_suite(batches, seed)?;
    let mut w = csv::Writer::from_path(ctx.out_path("gradcheck.csv")?)?;
    w.write_record(["batch", "loss", "tensor", "analytic_norm", "numeric_norm", "rel_err"])?;
    let per_batch = reports.len() / batches;
    let mut failures = 0;
    for (i, r) in reports.iter().enumerate() {
        for t in &r.tensors {
            w.write_record([
                (i / per_batch).to_string(),
                r.loss.as_str().to_string(),
                t.tensor.to_string(),
                format!("{:e}", t.analytic_norm),
                format!("{:e}", t.numeric_norm),
                format!("{:e}", t.rel_err),
            ])?;
        }
        let ok = r.passed(TOLERANCE);
        failures += usize::from(!ok);
        println!(
            "batch {:>2} {:<5} max rel err {:.3e} {}",
            i / per_batch,
            r.loss.as_str(),
            r.max_rel_err(),
            if ok { "ok" } else { "FAIL" }
        );
    }
    w.flush()?;
    if failures > 0 {
        anyhow::bail!("{failures} gradient checks exceeded relative error {TOLERANCE:e}");
    }
    Ok(())
}
