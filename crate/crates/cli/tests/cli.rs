use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;

use chromatic::encoders::EncoderKind;
use chromatic::synthetic::SyntheticConfig;
use chromatic_cli::artifact::{Header, Stage};
use chromatic_cli::config::DataSettings;
use chromatic_cli::report::{LossRow, SERIES};
use chromatic_cli::{Pipeline, PipelineConfig};

fn small_config() -> PipelineConfig {
    let mut cfg = PipelineConfig {
        data: DataSettings {
            synthetic: Some(SyntheticConfig {
                groups: 8,
                features: 200,
                n: 1000,
                max_nnz: 4,
                ..SyntheticConfig::default()
            }),
            ..DataSettings::default()
        },
        ..PipelineConfig::default()
    };
    cfg.encoder.budget = 64;
    cfg
}

fn write_config(dir: &Path, cfg: &PipelineConfig) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn chromatic(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_chromatic"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env("RUST_BACKTRACE", "0")
        .output()
        .unwrap()
}

fn header(path: &Path) -> Header {
    let text = std::fs::read(path).unwrap();
    let line = text.split(|&b| b == b'\n').next().unwrap();
    serde_json::from_slice(line).unwrap()
}

#[test]
fn full_pipeline_on_small_synthetic_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &small_config());
    let out = dir.path().join("art");
    let run = chromatic(&["--config", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap(), "run"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8(run.stdout).unwrap();
    for stage in ["ingest", "graph", "color", "fidelity", "encode", "train", "report"] {
        assert!(stdout.lines().any(|l| l.starts_with(stage) && l.contains("(written)")), "{stdout}");
    }

    let pl = Pipeline::new(small_config(), &out, false).unwrap();
    let report_dir = pl.store.dir(Stage::Report, &pl.report_digest().unwrap());
    for name in SERIES {
        let text = std::fs::read_to_string(report_dir.join(name)).unwrap();
        assert!(text.lines().count() >= 2, "{name} has no rows");
    }
    // every artifact embeds the resolved config
    let resolved = small_config().resolve();
    for stage in ["ingest", "graph", "color", "fidelity", "encode", "train", "report"] {
        for entry in std::fs::read_dir(out.join(stage)).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "art") {
                let h = header(&path);
                assert_eq!(h.stage.name(), stage);
                assert_eq!(h.config.data, resolved.data);
                assert_eq!(h.config.graph, resolved.graph);
            }
        }
    }
    let results = std::fs::read_to_string(out.join("results.jsonl")).unwrap();
    assert!(results.lines().count() >= 25);

    // second run reuses everything
    let again = chromatic(&["--config", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap(), "run"]);
    assert!(again.status.success());
    let stdout = String::from_utf8(again.stdout).unwrap();
    assert_eq!(stdout.matches("(up to date)").count(), 7, "{stdout}");
    assert_eq!(std::fs::read_to_string(out.join("results.jsonl")).unwrap(), results);
}

#[test]
fn encode_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let build = |out: &Path, force: bool| {
        let pl = Pipeline::new(small_config(), out, force).unwrap();
        pl.ingest().unwrap();
        pl.graph().unwrap();
        pl.color().unwrap();
        let o = pl.encode().unwrap();
        assert!(!o.reused);
        std::fs::read(o.path).unwrap()
    };
    let first = build(&dir.path().join("a"), false);
    let forced = build(&dir.path().join("a"), true);
    let fresh = build(&dir.path().join("b"), false);
    assert_eq!(first, forced);
    assert_eq!(first, fresh);
}

#[test]
fn report_has_one_row_per_encoder_and_budget() {
    let dir = tempfile::tempdir().unwrap();
    let pl = Pipeline::new(small_config(), dir.path(), false).unwrap();
    pl.ingest().unwrap();
    pl.graph().unwrap();
    pl.color().unwrap();
    pl.fidelity().unwrap();
    let o = pl.report().unwrap();
    let path = pl.store.dir(Stage::Report, &o.digest).join("loss_vs_budget.csv");
    let rows: Vec<LossRow> = csv::Reader::from_path(path)
        .unwrap()
        .deserialize()
        .collect::<Result<_, _>>()
        .unwrap();
    let budgets: Vec<usize> = (6..=10).map(|p| 1 << p).collect();
    let single: Vec<&LossRow> = rows.iter().filter(|r| !r.double_dip).collect();
    assert_eq!(single.len(), EncoderKind::ALL.len() * budgets.len());
    let cells: BTreeSet<(String, usize)> = single.iter().map(|r| (r.label.clone(), r.budget)).collect();
    assert_eq!(cells.len(), single.len());
    for kind in EncoderKind::ALL {
        for &b in &budgets {
            assert!(cells.contains(&(kind.label().to_string(), b)));
        }
    }
    assert_eq!(rows.iter().filter(|r| r.double_dip).count(), budgets.len());
    assert!(rows.iter().all(|r| r.status == "ok" && r.test_loss.is_some_and(f64::is_finite)));
}

#[test]
fn infeasible_budgets_are_reported_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.report.budgets = vec![2, 64];
    cfg.report.encoders = vec![EncoderKind::Clsm, EncoderKind::Ft];
    cfg.fidelity.uniform = false;
    let pl = Pipeline::new(cfg, dir.path(), false).unwrap();
    pl.ingest().unwrap();
    pl.graph().unwrap();
    pl.color().unwrap();
    pl.fidelity().unwrap();
    let o = pl.report().unwrap();
    let (_, payload) = pl.store.read(Stage::Report, &o.digest).unwrap();
    let report: chromatic_cli::report::Report = serde_json::from_slice(&payload).unwrap();
    let clsm2 = report.loss.iter().find(|r| r.encoder == EncoderKind::Clsm && r.budget == 2).unwrap();
    assert_eq!(clsm2.status, "infeasible");
    assert!(clsm2.test_loss.is_none());
    let ft2 = report.loss.iter().find(|r| r.encoder == EncoderKind::Ft && r.budget == 2).unwrap();
    assert_eq!(ft2.status, "ok");
    assert!(report.objective[0].global_objective.is_none());
    assert!(report.uniform_cc.is_empty());
}

#[test]
fn missing_upstream_names_the_command() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &small_config());
    let out = dir.path().join("art");
    let args = |cmd: &'static str| ["--config", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap(), cmd];
    let res = chromatic(&args("graph"));
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("run `chromatic ingest`"));
    assert!(chromatic(&args("ingest")).status.success());
    let res = chromatic(&args("color"));
    assert!(String::from_utf8_lossy(&res.stderr).contains("run `chromatic graph`"));
    let res = chromatic(&args("report"));
    assert!(String::from_utf8_lossy(&res.stderr).contains("run `chromatic fidelity`"));
    let res = chromatic(&args("train"));
    assert!(String::from_utf8_lossy(&res.stderr).contains("run `chromatic encode`"));
}

#[test]
fn digests_track_the_settings_they_depend_on() {
    let dir = tempfile::tempdir().unwrap();
    let base = Pipeline::new(small_config(), dir.path(), false).unwrap();
    let mut cfg = small_config();
    cfg.graph.k = 2;
    let k2 = Pipeline::new(cfg, dir.path(), false).unwrap();
    assert_eq!(base.ingest_digest().unwrap(), k2.ingest_digest().unwrap());
    assert_ne!(base.graph_digest().unwrap(), k2.graph_digest().unwrap());
    assert_ne!(base.color_digest().unwrap(), k2.color_digest().unwrap());
    assert_eq!(base.fidelity_digest().unwrap(), k2.fidelity_digest().unwrap());

    // workers never change results, so they never change digests
    let mut cfg = small_config();
    cfg.workers = 4;
    let p4 = Pipeline::new(cfg, dir.path(), false).unwrap();
    assert_eq!(base.report_digest().unwrap(), p4.report_digest().unwrap());

    let mut cfg = small_config();
    cfg.seed = 1;
    let s1 = Pipeline::new(cfg, dir.path(), false).unwrap();
    assert_ne!(base.ingest_digest().unwrap(), s1.ingest_digest().unwrap());
}

#[test]
fn flags_override_config_and_invalid_configs_fail_early() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &small_config());
    let res = chromatic(&[
        "--config", cfg_path.to_str().unwrap(), "--seed", "5", "--k", "3", "--budget", "128",
        "--encoder", "ht", "--policy", "lowest", "--coloring", "uniform", "--workers", "2", "config",
    ]);
    assert!(res.status.success());
    let cfg: PipelineConfig = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(cfg.seed, 5);
    assert_eq!(cfg.data.synthetic.unwrap().seed, 5);
    assert_eq!(cfg.graph.k, 3);
    assert_eq!(cfg.encoder.budget, 128);
    assert_eq!(cfg.encoder.kind, EncoderKind::Ht);
    assert_eq!(cfg.workers, 2);
    assert_eq!(serde_json::to_value(cfg.coloring.mode).unwrap(), "uniform");

    let mut bad = small_config();
    bad.fidelity.delta = 2.0;
    let bad_path = dir.path().join("bad.json");
    std::fs::write(&bad_path, serde_json::to_string(&bad).unwrap()).unwrap();
    let out = dir.path().join("art");
    let res = chromatic(&["--config", bad_path.to_str().unwrap(), "--out", out.to_str().unwrap(), "ingest"]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("fidelity.delta"));
    assert!(!out.exists(), "validation must precede any work");
}

#[test]
fn libsvm_input_and_uniform_coloring() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &small_config());
    let data = dir.path().join("data.svm");
    let res = chromatic(&["--config", cfg_path.to_str().unwrap(), "synth", "--output", data.to_str().unwrap()]);
    assert!(res.status.success());

    let mut cfg = PipelineConfig::default();
    cfg.data.input = Some(data.clone());
    cfg.coloring.mode = chromatic_cli::config::ColoringMode::Uniform;
    let pl = Pipeline::new(cfg, dir.path().join("art"), false).unwrap();
    pl.ingest().unwrap();
    pl.graph().unwrap();
    let color = pl.color().unwrap();
    let h = header(&color.path);
    assert_eq!(h.info["method"], "filtered-glauber");
    assert!(h.inputs.contains_key("graph"));
    let c = pl.load_coloring().unwrap();
    assert!(c.is_proper_on(&pl.load_graph().unwrap()));

    // the same bytes generated in memory ingest to the same training set
    let synthetic = Pipeline::new(small_config(), dir.path().join("syn"), false).unwrap();
    synthetic.ingest().unwrap();
    assert_eq!(synthetic.load_datasets().unwrap(), pl.load_datasets().unwrap());
}

#[test]
fn staged_training_matches_in_memory_experiment() {
    let dir = tempfile::tempdir().unwrap();
    for kind in [EncoderKind::Clsm, EncoderKind::Clte, EncoderKind::Ht] {
        let mut cfg = small_config();
        cfg.encoder.kind = kind;
        let pl = Pipeline::new(cfg, dir.path(), false).unwrap();
        pl.ingest().unwrap();
        pl.graph().unwrap();
        pl.color().unwrap();
        pl.encode().unwrap();
        pl.train().unwrap();
        let staged = pl.load_model(&pl.cfg).unwrap().metrics;

        let ecfg = pl.cfg.experiment();
        let ds = chromatic::synthetic::generate(pl.cfg.data.synthetic.as_ref().unwrap());
        let p = chromatic::experiment::prepare(&ds, &ecfg).unwrap();
        let direct = chromatic::experiment::evaluate(&p, kind, pl.cfg.encoder.budget, &ecfg, false).unwrap();
        assert_eq!(staged, direct, "{kind}");
    }
}

#[test]
fn explicit_training_count_overrides_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.data.train_examples = Some(700);
    let pl = Pipeline::new(cfg, dir.path(), false).unwrap();
    pl.ingest().unwrap();
    let (train, test) = pl.load_datasets().unwrap();
    assert_eq!((train.n(), test.n()), (700, 300));

    let mut cfg = small_config();
    cfg.data.train_examples = Some(5_000);
    let pl = Pipeline::new(cfg, dir.path(), false).unwrap();
    assert!(pl.ingest().is_err());
}
