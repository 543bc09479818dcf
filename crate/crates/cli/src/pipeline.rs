//! The pipeline stages. Each stage names its artifact by a digest of the
//! config fields it reads plus the digests of its upstream artifacts, so a
//! downstream command can locate its inputs without scanning, and a changed
//! upstream setting can never silently pair with a stale artifact.

use std::cell::OnceCell;
use std::collections::BTreeMap;
use std::io::{Cursor, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use chromatic::coloring::{
    combine_filtered_coloring, filter_high_degree, glauber_sample, greedy_color, read_coloring, write_coloring,
    ColoringSummary,
};
use chromatic::dataset::{chronological_split_count, hash_split_ratio, read_cache, read_libsvm_file, write_cache, SparseDataset};
use chromatic::encoders::{Encoder, EncoderKind};
use chromatic::experiment::{build_encoder, move_dense, split_train_test, training_set, EvalRow, Prepared};
use chromatic::fidelity::{fidelity_report, FidelityReport};
use chromatic::graph::{build_cooccurrence, build_thresholded, count_cooccurrences, degree_stats, read_graph, write_graph, CooccurrenceGraph};
use chromatic::linear::{accuracy, log_loss, train_logistic, LinearModel};
use chromatic::synthetic::generate;
use chromatic::Coloring;

use crate::artifact::{digest, file_digest, short, Header, Inputs, Stage, Store};
use crate::config::{ColoringMode, PipelineConfig};

pub const RESULTS_LOG: &str = "results.jsonl";

/// Result of running one stage.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub stage: Stage,
    pub digest: String,
    pub path: PathBuf,
    /// The artifact already existed and was left untouched.
    pub reused: bool,
}

/// Payload of a train artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub model: LinearModel,
    pub metrics: EvalRow,
}

/// One line of the results log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub dataset: String,
    pub encoder: EncoderKind,
    pub budget: usize,
    pub seed: u64,
    pub double_dip: bool,
    pub output_dim: usize,
    pub train_examples: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    pub artifact: String,
}

fn one(name: &str, d: String) -> Inputs {
    BTreeMap::from([(name.to_string(), d)])
}

fn label_reading(kind: EncoderKind) -> bool {
    matches!(kind, EncoderKind::Clsm | EncoderKind::Clte)
}

pub struct Pipeline {
    pub cfg: PipelineConfig,
    pub store: Store,
    /// Recompute the requested stages even when their artifact exists.
    pub force: bool,
    input_digest: OnceCell<String>,
}

impl Pipeline {
    /// Resolves and validates `cfg`; fails before touching any data.
    pub fn new(cfg: PipelineConfig, out: impl Into<PathBuf>, force: bool) -> Result<Self> {
        let cfg = cfg.resolve();
        cfg.validate()?;
        Ok(Self {
            cfg,
            store: Store::new(out),
            force,
            input_digest: OnceCell::new(),
        })
    }

    // ---- digests ----

    pub fn ingest_digest(&self) -> Result<String> {
        let d = &self.cfg.data;
        let mut inputs = Inputs::new();
        if let Some(path) = &d.input {
            if self.input_digest.get().is_none() {
                let _ = self.input_digest.set(file_digest(path)?);
            }
            inputs.insert("input".into(), self.input_digest.get().expect("set above").clone());
        }
        let slice = json!({
            "synthetic": d.synthetic,
            "train_fraction": d.train_fraction,
            "train_examples": d.train_examples,
            "dense_threshold": d.dense_threshold,
        });
        Ok(digest(Stage::Ingest, &slice, &inputs))
    }

    pub fn graph_digest(&self) -> Result<String> {
        let g = &self.cfg.graph;
        let slice = json!({"k": g.k, "threshold_mode": (g.k >= 2).then_some(g.threshold_mode)});
        Ok(digest(Stage::Graph, &slice, &one("ingest", self.ingest_digest()?)))
    }

    pub fn color_digest(&self) -> Result<String> {
        let c = &self.cfg.coloring;
        let uniform = c.mode == ColoringMode::Uniform;
        let slice = json!({
            "mode": c.mode,
            "order": c.order,
            "colors": if uniform { c.colors } else { None },
            "glauber": uniform.then_some(c.glauber),
            "seed": uniform.then_some(self.cfg.seed),
        });
        Ok(digest(Stage::Color, &slice, &one("graph", self.graph_digest()?)))
    }

    pub fn fidelity_digest(&self) -> Result<String> {
        let slice = json!({"fidelity": self.cfg.fidelity, "order": self.cfg.coloring.order, "seed": self.cfg.seed});
        Ok(digest(Stage::Fidelity, &slice, &one("ingest", self.ingest_digest()?)))
    }

    fn encode_inputs(&self, cfg: &PipelineConfig) -> Result<Inputs> {
        let mut inputs = one("ingest", self.ingest_digest()?);
        if cfg.encoder.kind.is_chromatic() {
            inputs.insert("color".into(), self.color_digest()?);
        }
        Ok(inputs)
    }

    /// `cfg` may differ from the pipeline config in its encoder section only.
    pub fn encode_digest(&self, cfg: &PipelineConfig) -> Result<String> {
        let e = &cfg.encoder;
        let labels = label_reading(e.kind);
        let slice = json!({
            "kind": e.kind,
            "budget": e.budget,
            "policy": e.kind.is_chromatic().then_some(e.policy),
            "smoothing": (e.kind == EncoderKind::Clte).then_some(e.smoothing),
            "split_ratio": labels.then_some(e.split_ratio),
            "double_dip": labels && e.double_dip,
            "seed": (e.kind == EncoderKind::Ht).then_some(cfg.seed),
        });
        Ok(digest(Stage::Encode, &slice, &self.encode_inputs(cfg)?))
    }

    fn train_inputs(&self, cfg: &PipelineConfig) -> Result<Inputs> {
        let mut inputs = one("ingest", self.ingest_digest()?);
        inputs.insert("encode".into(), self.encode_digest(cfg)?);
        Ok(inputs)
    }

    pub fn train_digest(&self, cfg: &PipelineConfig) -> Result<String> {
        let slice = json!({"train": cfg.train, "split_ratio": cfg.encoder.split_ratio});
        Ok(digest(Stage::Train, &slice, &self.train_inputs(cfg)?))
    }

    pub(crate) fn report_inputs(&self) -> Result<Inputs> {
        let mut inputs = one("ingest", self.ingest_digest()?);
        inputs.insert("color".into(), self.color_digest()?);
        inputs.insert("fidelity".into(), self.fidelity_digest()?);
        Ok(inputs)
    }

    pub fn report_digest(&self) -> Result<String> {
        let e = &self.cfg.encoder;
        let slice = json!({
            "report": self.cfg.report,
            "policy": e.policy,
            "smoothing": e.smoothing,
            "split_ratio": e.split_ratio,
            "train": self.cfg.train,
            "seed": self.cfg.seed,
        });
        Ok(digest(Stage::Report, &slice, &self.report_inputs()?))
    }

    // ---- artifact plumbing ----

    pub(crate) fn produce(
        &self,
        stage: Stage,
        cfg: &PipelineConfig,
        digest: String,
        inputs: Inputs,
        force: bool,
        build: impl FnOnce() -> Result<(serde_json::Value, Vec<u8>)>,
    ) -> Result<Outcome> {
        let path = self.store.path(stage, &digest);
        if !force && self.store.exists(stage, &digest) {
            log::info!("{}: {} is up to date", stage.name(), path.display());
            return Ok(Outcome {
                stage,
                digest,
                path,
                reused: true,
            });
        }
        let (info, payload) = build()?;
        let path = self.store.write(&Header::new(stage, &digest, inputs, cfg, info), &payload)?;
        log::info!("{}: wrote {}", stage.name(), path.display());
        Ok(Outcome {
            stage,
            digest,
            path,
            reused: false,
        })
    }

    /// Training and test sets, in that order.
    pub fn load_datasets(&self) -> Result<(SparseDataset, SparseDataset)> {
        let (_, payload) = self.store.read(Stage::Ingest, &self.ingest_digest()?)?;
        let mut cursor = Cursor::new(payload.as_slice());
        let train = read_cache(&mut cursor).context("reading training set")?;
        let test = read_cache(&mut cursor).context("reading test set")?;
        Ok((train, test))
    }

    pub fn load_graph(&self) -> Result<CooccurrenceGraph> {
        let (_, payload) = self.store.read(Stage::Graph, &self.graph_digest()?)?;
        Ok(read_graph(payload.as_slice())?)
    }

    pub fn load_coloring(&self) -> Result<Coloring> {
        let (_, payload) = self.store.read(Stage::Color, &self.color_digest()?)?;
        Ok(read_coloring(payload.as_slice())?)
    }

    pub fn load_fidelity(&self) -> Result<FidelityReport> {
        let (_, payload) = self.store.read(Stage::Fidelity, &self.fidelity_digest()?)?;
        Ok(serde_json::from_slice(&payload)?)
    }

    pub fn load_encoder(&self, cfg: &PipelineConfig) -> Result<Encoder> {
        let (_, payload) = self.store.read(Stage::Encode, &self.encode_digest(cfg)?)?;
        Ok(Encoder::from_json(std::str::from_utf8(&payload)?)?)
    }

    pub fn load_model(&self, cfg: &PipelineConfig) -> Result<TrainedModel> {
        let (_, payload) = self.store.read(Stage::Train, &self.train_digest(cfg)?)?;
        Ok(serde_json::from_slice(&payload)?)
    }

    /// Splits and coloring shared by the encode and train stages. The coloring
    /// is loaded only when `with_coloring`; otherwise it is empty.
    pub fn prepared(&self, with_coloring: bool) -> Result<Prepared> {
        let coloring = if with_coloring {
            self.load_coloring()?
        } else {
            Coloring::from_parts(Vec::new())
        };
        let (train, test) = self.load_datasets()?;
        let (estimate, fit) = hash_split_ratio(&train, self.cfg.encoder.split_ratio);
        Ok(Prepared {
            dense_width: train.dense_ids.len(),
            train,
            test,
            estimate,
            fit,
            coloring,
        })
    }

    // ---- stages ----

    pub fn ingest(&self) -> Result<Outcome> {
        let d = &self.cfg.data;
        self.produce(Stage::Ingest, &self.cfg, self.ingest_digest()?, self.ingest_inputs()?, self.force, || {
            let ds = match (&d.input, &d.synthetic) {
                (Some(path), _) => read_libsvm_file(path)?,
                (None, Some(s)) => generate(s),
                (None, None) => unreachable!("validated"),
            };
            let (train, test) = match d.train_examples {
                Some(count) => {
                    let (train, test) = chronological_split_count(&ds, count)?;
                    move_dense(train, test, d.dense_threshold)
                }
                None => split_train_test(&ds, d.train_fraction, d.dense_threshold)?,
            };
            let mut payload = Vec::new();
            write_cache(&train, &mut payload)?;
            write_cache(&test, &mut payload)?;
            let info = json!({"train": train.summary(), "test": test.summary()});
            Ok((info, payload))
        })
    }

    fn ingest_inputs(&self) -> Result<Inputs> {
        let mut inputs = Inputs::new();
        if self.cfg.data.input.is_some() {
            self.ingest_digest()?;
            inputs.insert("input".into(), self.input_digest.get().expect("hashed").clone());
        }
        Ok(inputs)
    }

    pub fn graph(&self) -> Result<Outcome> {
        let inputs = one("ingest", self.ingest_digest()?);
        self.produce(Stage::Graph, &self.cfg, self.graph_digest()?, inputs, self.force, || {
            let (train, _) = self.load_datasets()?;
            let k = self.cfg.graph.k;
            let (g, histogram) = if k == 1 {
                let (g, h) = build_cooccurrence(&train, &self.cfg.build())?;
                (g, Some(h))
            } else {
                (build_thresholded(&train, k, self.cfg.graph.threshold_mode, &self.cfg.build())?, None)
            };
            let mut payload = Vec::new();
            write_graph(&g, &mut payload)?;
            Ok((json!({"stats": degree_stats(&g), "histogram": histogram}), payload))
        })
    }

    pub fn color(&self) -> Result<Outcome> {
        let inputs = one("graph", self.graph_digest()?);
        self.produce(Stage::Color, &self.cfg, self.color_digest()?, inputs, self.force, || {
            let g = self.load_graph()?;
            let c = &self.cfg.coloring;
            let (coloring, summary) = match c.mode {
                ColoringMode::Greedy => {
                    let coloring = greedy_color(&g, c.order);
                    let summary = ColoringSummary {
                        m: coloring.num_colors(),
                        method: "greedy".into(),
                        order: c.order,
                        seed: None,
                        steps: None,
                        requested_colors: None,
                        held_out: 0,
                        delta_f: None,
                    };
                    (coloring, summary)
                }
                ColoringMode::Uniform => {
                    let fr = filter_high_degree(&g);
                    let inner = c.colors.unwrap_or(2 * fr.delta_f + 1);
                    let steps = c.glauber.steps(inner, fr.filtered_graph.num_vertices());
                    let sample = glauber_sample(&fr.filtered_graph, inner, steps, self.cfg.seed)?;
                    let coloring = combine_filtered_coloring(&fr, &sample)?;
                    let summary = ColoringSummary {
                        m: coloring.num_colors(),
                        method: "filtered-glauber".into(),
                        order: c.order,
                        seed: Some(self.cfg.seed),
                        steps: Some(steps),
                        requested_colors: Some(inner),
                        held_out: fr.held_out.len(),
                        delta_f: Some(fr.delta_f),
                    };
                    (coloring, summary)
                }
            };
            if let Some((a, b)) = coloring.violation(&g) {
                bail!("coloring is not proper: features {a} and {b} co-occur and share a color");
            }
            let mut payload = Vec::new();
            write_coloring(&coloring, &mut payload)?;
            Ok((serde_json::to_value(summary)?, payload))
        })
    }

    /// Reads test features but never test labels.
    pub fn fidelity(&self) -> Result<Outcome> {
        let inputs = one("ingest", self.ingest_digest()?);
        self.produce(Stage::Fidelity, &self.cfg, self.fidelity_digest()?, inputs, self.force, || {
            let (train, test) = self.load_datasets()?;
            let counts = count_cooccurrences(&train, &self.cfg.build())?;
            let report = fidelity_report(&train, &counts, &test, &self.cfg.fidelity_config())?;
            let info = json!({"thresholds": self.cfg.fidelity.thresholds, "test_examples": report.test_examples});
            Ok((info, serde_json::to_vec_pretty(&report)?))
        })
    }

    pub fn encode(&self) -> Result<Outcome> {
        let p = self.prepared(self.cfg.encoder.kind.is_chromatic())?;
        self.encode_with(&p, &self.cfg, self.force)
    }

    /// Encode stage on already loaded data; `cfg` may vary the encoder section.
    pub fn encode_with(&self, p: &Prepared, cfg: &PipelineConfig, force: bool) -> Result<Outcome> {
        let e = &cfg.encoder;
        let inputs = self.encode_inputs(cfg)?;
        self.produce(Stage::Encode, cfg, self.encode_digest(cfg)?, inputs, force, || {
            let (enc, fit_on) = build_encoder(p, e.kind, e.budget, &cfg.experiment(), e.double_dip)?;
            let info = json!({
                "encoder": e.kind.label(),
                "budget": e.budget,
                "output_dim": enc.output_dim,
                "total_dim": enc.total_dim(),
                "fit_examples": fit_on.n(),
            });
            Ok((info, enc.to_json()?.into_bytes()))
        })
    }

    pub fn train(&self) -> Result<Outcome> {
        let p = self.prepared(false)?;
        self.train_with(&p, &self.cfg, self.force)
    }

    /// Trains on the set the encoder kind calls for and evaluates on the
    /// test set; the only stage that reads test labels.
    pub fn train_with(&self, p: &Prepared, cfg: &PipelineConfig, force: bool) -> Result<Outcome> {
        let digest = self.train_digest(cfg)?;
        let inputs = self.train_inputs(cfg)?;
        let mut record = None;
        let outcome = self.produce(Stage::Train, cfg, digest.clone(), inputs, force, || {
            let enc = self.load_encoder(cfg)?;
            let fit_on = training_set(p, enc.kind);
            let train_rows = enc.transform_all(fit_on);
            let model = train_logistic(&train_rows, enc.total_dim(), cfg.train)?;
            let test_rows = enc.transform_all(&p.test);
            let metrics = EvalRow {
                encoder: enc.kind,
                budget: cfg.encoder.budget,
                output_dim: enc.output_dim,
                double_dip: label_reading(enc.kind) && cfg.encoder.double_dip,
                train_examples: fit_on.n(),
                train_loss: log_loss(&model, &train_rows)?,
                test_loss: log_loss(&model, &test_rows)?,
                test_accuracy: accuracy(&model, &test_rows)?,
            };
            record = Some(ResultRecord {
                dataset: short(&self.ingest_digest()?).to_string(),
                encoder: metrics.encoder,
                budget: metrics.budget,
                seed: cfg.seed,
                double_dip: metrics.double_dip,
                output_dim: metrics.output_dim,
                train_examples: metrics.train_examples,
                train_loss: metrics.train_loss,
                test_loss: metrics.test_loss,
                test_accuracy: metrics.test_accuracy,
                artifact: short(&digest).to_string(),
            });
            let info = serde_json::to_value(&metrics)?;
            Ok((info, serde_json::to_vec(&TrainedModel { model, metrics })?))
        })?;
        if let Some(r) = record {
            self.append_result(&r)?;
        }
        Ok(outcome)
    }

    fn append_result(&self, r: &ResultRecord) -> Result<()> {
        std::fs::create_dir_all(self.store.root())?;
        let path = self.store.root().join(RESULTS_LOG);
        let mut file = std::fs::OpenOptions::new().create(true).append(true).open(&path)?;
        writeln!(file, "{}", serde_json::to_string(r)?)?;
        Ok(())
    }

    pub fn report(&self) -> Result<Outcome> {
        crate::report::run(self, self.force)
    }

    /// Every stage in order, ending with the report.
    pub fn run_all(&self) -> Result<Vec<Outcome>> {
        let mut done = vec![self.ingest()?, self.graph()?, self.color()?, self.fidelity()?];
        let p = self.prepared(true)?;
        done.push(self.encode_with(&p, &self.cfg, self.force)?);
        done.push(self.train_with(&p, &self.cfg, self.force)?);
        done.push(crate::report::run_prepared(self, &p, self.force)?);
        Ok(done)
    }
}
