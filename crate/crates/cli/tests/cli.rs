use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mgdil(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mgdil"))
        .current_dir(dir)
        .env("MGDIL_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = mgdil(dir, args);
    assert!(
        out.status.success(),
        "mgdil {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn source_csv(tag: &str, bots: usize, humans: usize) -> String {
    let mut s = String::from("id,screen_name,name,followers_count,friends_count,statuses_count,verified,description,label,posts,follows\n");
    let n = bots + humans;
    for i in 0..n {
        let next = format!("{tag}{}", (i + 1) % n);
        let prev = format!("{tag}{}", (i + n - 1) % n);
        if i < bots {
            writeln!(
                s,
                "{tag}{i},crypto_deals_{i}_{i},Deals {i},{},{},{},false,\"Follow for crypto giveaways, win BTC daily\",bot,\"Win free bitcoin now http://t.co/{i}|||Win free bitcoin now http://t.co/{}|||Crypto pump incoming, buy the token\",{next};{prev}",
                3 + i,
                4000 + 7 * i,
                90000 + i,
                i + 1
            )
            .unwrap();
        } else {
            writeln!(
                s,
                "{tag}{i},maria{i},Maria Lopez,{},{},{},false,\"Teacher, runner and coffee lover\",human,\"Had a lovely dinner with my family tonight|||Watching the game with friends, what a match!|||Does anyone have a good book to recommend?\",{next}",
                300 + 11 * i,
                250 + i,
                2000 + 13 * i
            )
            .unwrap();
        }
    }
    s
}

/// Three source datasets (one per temporal domain) plus an evaluation-period set.
fn fixture() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    for (file, tag, bots, humans) in [
        ("c15.csv", "a", 30, 20),
        ("m18.csv", "b", 20, 20),
        ("w19.csv", "c", 20, 20),
        ("t23.csv", "d", 15, 15),
    ] {
        std::fs::write(p.join(file), source_csv(tag, bots, humans)).unwrap();
    }
    let fields = r#"fields = { screen_name = "screen_name", name = "name", followers_count = "followers_count", friends_count = "friends_count", statuses_count = "statuses_count", verified = "verified", description = "description" }
posts_column = "posts"
relations = { follows = "following" }
label = { column = "label" }"#;
    let mut reg = String::new();
    for (id, year, file) in [
        ("cresci-2015", 2015, "c15.csv"),
        ("midterm-2018", 2018, "m18.csv"),
        ("botwiki-2019", 2019, "w19.csv"),
        ("fox-2023", 2023, "t23.csv"),
    ] {
        writeln!(reg, "[[source]]\ndataset_id = \"{id}\"\nrelease_year = {year}\npath = \"{file}\"\n{fields}\n").unwrap();
    }
    std::fs::write(p.join("sources.toml"), reg).unwrap();
    std::fs::write(
        p.join("mgdil.toml"),
        r#"registry = "sources.toml"

[train]
epochs = 4
batch_size = 16
learning_rate = 1e-3
hidden = 32
latent = 16
projection = 8
seeds = [1, 2]

[encoder_options]
dim = 512

[graph]
epochs = 40
"#,
    )
    .unwrap();
    dir
}

fn lines(p: PathBuf) -> usize {
    String::from_utf8(read(p)).unwrap().lines().count()
}

#[test]
fn full_pipeline_from_raw_sources_to_graph_stage() {
    let dir = fixture();
    let p = dir.path();
    let cfg = ["--config", "mgdil.toml"];
    let with = |extra: &[&str]| -> Vec<String> { cfg.iter().chain(extra).map(|s| s.to_string()).collect() };
    let run = |extra: &[&str]| {
        let a = with(extra);
        ok(p, &a.iter().map(String::as_str).collect::<Vec<_>>())
    };

    run(&["ingest", "--out", "o"]);
    // 75 humans and 85 bots before balancing; at most 77 bots survive.
    let corpus = String::from_utf8(read(p.join("o/corpus.jsonl"))).unwrap();
    let bots = corpus.matches("\"label\":\"bot\"").count();
    let humans = corpus.matches("\"label\":\"human\"").count();
    assert_eq!(humans, 75);
    assert!(bots <= humans + 2 && bots >= humans, "{bots} bots vs {humans} humans");
    assert!(corpus.contains("\"relation\":\"following\""));

    run(&["featurize", "--corpus", "o/corpus.jsonl", "--out", "o"]);
    assert_eq!(lines(p.join("o/features.csv")), bots + humans + 1);

    run(&["summarize", "--corpus", "o/corpus.jsonl", "--out", "o"]);
    let first = read(p.join("o/summaries.jsonl"));
    run(&["summarize", "--corpus", "o/corpus.jsonl", "--out", "o"]);
    assert_eq!(first, read(p.join("o/summaries.jsonl")), "summarize is not idempotent");

    run(&["build", "--corpus", "o/corpus.jsonl", "--summaries", "o/summaries.jsonl", "--out", "o"]);
    let docs = String::from_utf8(read(p.join("o/instructions.jsonl"))).unwrap();
    assert!(docs.contains("[Multi-Dimensional Summary]:"));
    assert!(docs.contains("\"variant\":\"MetaSummary\""));

    run(&["report", "--corpus", "o/corpus.jsonl", "--summaries", "o/summaries.jsonl", "--out", "o"]);
    assert!(String::from_utf8(read(p.join("o/distribution.csv"))).unwrap().contains("cresci-2015"));

    run(&["train", "--docs", "o/instructions.jsonl", "--seed", "3", "--out", "o/m"]);
    let ck = String::from_utf8(read(p.join("o/m/checkpoint.json"))).unwrap();
    assert!(ck.contains("\"encoder\":\"hashing:512\""));
    assert_eq!(lines(p.join("o/m/history.csv")), 5);

    let out = run(&["eval", "--checkpoint", "o/m/checkpoint.json", "--docs", "o/instructions.jsonl", "--split", "target", "--out", "o/m"]);
    assert!(out.contains("target (30 rows)"), "{out}");

    run(&["graph-train", "--checkpoint", "o/m/checkpoint.json", "--docs", "o/instructions.jsonl", "--corpus", "o/corpus.jsonl", "--out", "o/g"]);
    let gck = String::from_utf8(read(p.join("o/g/graph_checkpoint.json"))).unwrap();
    assert!(gck.contains("\"relations\":[\"following\"]"));
    assert_eq!(lines(p.join("o/g/graph_losses.csv")), 41);
    run(&[
        "graph-eval", "--graph-checkpoint", "o/g/graph_checkpoint.json", "--checkpoint", "o/m/checkpoint.json",
        "--docs", "o/instructions.jsonl", "--corpus", "o/corpus.jsonl", "--split-file", "o/g/graph_split.csv",
        "--out", "o/g2",
    ]);
    assert_eq!(read(p.join("o/g/graph_eval.csv")), read(p.join("o/g2/graph_eval.csv")));
}

#[test]
fn metadata_variant_needs_no_summaries() {
    let dir = fixture();
    let p = dir.path();
    ok(p, &["--config", "mgdil.toml", "ingest", "--no-balance", "--out", "o"]);
    ok(p, &["build", "--corpus", "o/corpus.jsonl", "--variant", "metadata", "--out", "o"]);
    let docs = String::from_utf8(read(p.join("o/instructions.jsonl"))).unwrap();
    assert_eq!(docs.lines().count(), 160);
    assert!(!docs.contains("[Multi-Dimensional Summary]"));
}

#[test]
fn usage_errors_exit_with_status_two() {
    let dir = fixture();
    let p = dir.path();
    ok(p, &["--config", "mgdil.toml", "ingest", "--out", "o"]);
    let cases: &[&[&str]] = &[
        &["train", "--synthetic", "--bogus-flag"],
        &["train"],
        &["train", "--synthetic", "--docs", "x.jsonl"],
        &["build", "--corpus", "o/corpus.jsonl", "--variant", "meta-summary"],
        &["build", "--corpus", "o/corpus.jsonl", "--variant", "metadata", "--summaries", "o/corpus.jsonl"],
        &["featurize", "--corpus", "missing.jsonl"],
        &["eval", "--checkpoint", "missing.json", "--synthetic"],
        &["--config", "missing.toml", "gradcheck"],
        &["ingest"],
        &["sweep", "--synthetic", "--which", "lambda_tau", "--values", "0.1"],
    ];
    for args in cases {
        let out = mgdil(p, args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn gradcheck_passes_and_reports_every_loss() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["gradcheck", "--batches", "3", "--out", "."]);
    assert_eq!(out.lines().count(), 12);
    assert!(out.lines().all(|l| l.ends_with(" ok")), "{out}");
    assert!(dir.path().join("gradcheck.csv").exists());
}

const SMALL_SPEC: &str = r#"
seed = 5
samples_per_cell = 60
source_domains = 3
dim = 8
mu = 2.0
sigma = 1.0
nu = 3.0

[train]
epochs = 3
batch_size = 16
learning_rate = 1e-3
hidden = 8
latent = 16
projection = 4
seeds = [1, 2, 3]
"#;

#[test]
fn ablate_emits_four_configs_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("spec.toml"), SMALL_SPEC).unwrap();
    let stdout = ok(p, &["ablate", "--synthetic", "spec.toml", "--out", "a"]);
    assert_eq!(lines(p.join("a/ablation_runs.csv")), 1 + 4 * 3);
    assert_eq!(lines(p.join("a/ablation_summary.csv")), 1 + 4);
    for name in ["MGDIL", "W/O adversarial", "W/O Contrast", "W/O Adv. & Con."] {
        assert!(stdout.contains(name), "{stdout}");
    }
    let manifest = String::from_utf8(read(p.join("a/ablate_manifest.json"))).unwrap();
    assert!(manifest.contains("spec.toml"));

    ok(p, &["ablate", "--synthetic", "spec.toml", "--out", "b"]);
    assert_eq!(read(p.join("a/ablation_runs.csv")), read(p.join("b/ablation_runs.csv")));
}

#[test]
fn sweep_curve_has_one_point_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("spec.toml"), SMALL_SPEC).unwrap();
    ok(p, &["sweep", "--synthetic", "spec.toml", "--which", "lambda-con", "--values", "0,0.2,0.5", "--seeds", "1", "--out", "s"]);
    let csv = String::from_utf8(read(p.join("s/sweep_lambda_con.csv"))).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().skip(1).all(|l| l.contains(",0.2,")), "{csv}");
}

#[test]
fn probe_compares_adversarial_and_plain_training() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("spec.toml"), SMALL_SPEC).unwrap();
    let stdout = ok(p, &["probe", "--synthetic", "spec.toml", "--seeds", "1,2", "--out", "p"]);
    assert!(stdout.contains("probe drop with adversarial training"), "{stdout}");
    assert_eq!(lines(p.join("p/probe_runs.csv")), 1 + 2 * 2);

    ok(p, &["train", "--synthetic", "spec.toml", "--seed", "1", "--out", "m"]);
    let stdout = ok(p, &["probe", "--checkpoint", "m/checkpoint.json", "--synthetic", "spec.toml", "--out", "m"]);
    assert!(stdout.contains("over 3 domains"), "{stdout}");
}

#[test]
fn eval_on_the_training_split_of_the_shipped_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["train", "--synthetic", "--seed", "42", "--out", "m"]);
    let stdout = ok(p, &["eval", "--checkpoint", "m/checkpoint.json", "--synthetic", "--split", "source", "--out", "m"]);
    let csv = String::from_utf8(read(p.join("m/eval.csv"))).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let acc: f64 = row[2].parse().unwrap();
    assert!(acc >= 0.95, "{stdout}");
    assert_eq!(row[14], "42");
}

#[test]
fn logs_are_json_lines_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_mgdil"))
        .current_dir(dir.path())
        .env_remove("MGDIL_LOG")
        .args(["train", "--synthetic", "--out", "m"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.lines().count() > 5);
    for line in err.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap_or_else(|e| panic!("{line}: {e}"));
        assert!(v["level"].is_string() && v["msg"].is_string());
    }
}
