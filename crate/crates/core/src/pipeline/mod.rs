//! End-to-end runs: ingest, split, embed, generate, train, evaluate.

mod config;
mod report;
mod sweep;

pub use config::{RunConfig, StageSeeds, KEYS};
pub use report::{nearest_report, nearest_words, Counts, RunReport};
pub use sweep::{summarize, sweep, sweep_records, sweep_table, write_sweep, SweepAxis, SweepPoint, SweepSummary};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde_json::{json, Map, Value};

use crate::classifier::{predict, train_classifier, CnnModel, Prediction};
use crate::corpus::{
    build_corpus, read_records, take_k_per_class, CorpusSplit, Document, MetadataSchema,
    RawRecord, Vocabulary,
};
use crate::embedding::{init_embeddings, save_space, train, EmbedConfig, EmbeddingSpace, TableNames};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::generator::{
    generate_all, synthetic_documents, write_synthetic, GenConfig, LengthModel, SyntheticDocument,
};

/// File names inside the output directory.
pub mod artifacts {
    pub const EMBEDDINGS: &str = "embeddings.bin";
    pub const EMBEDDING_INDEX: &str = "embeddings.idx";
    pub const SPLIT: &str = "split.jsonl";
    pub const SYNTHETIC: &str = "synthetic.jsonl";
    pub const MODEL: &str = "model.bin";
    pub const PREDICTIONS: &str = "predictions.jsonl";
    pub const REPORT_TEXT: &str = "report.txt";
    pub const REPORT_RECORDS: &str = "report.jsonl";
    pub const NEAREST: &str = "nearest.txt";
    pub const TIMINGS: &str = "timings.txt";
    pub const CONFIG: &str = "run.conf";
}

/// Ingested corpus plus its training/test partition.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub schema: MetadataSchema,
    pub docs: Vec<Document>,
    pub vocab: Vocabulary,
    pub split: CorpusSplit,
}

impl Prepared {
    pub fn from_records(config: &RunConfig, records: &[RawRecord]) -> Result<Self> {
        let schema = config.schema()?;
        let (docs, vocab) = build_corpus(records, &schema, config.min_count);
        let split = take_k_per_class(&docs, &vocab, config.k_per_class, config.stage_seeds().split)
            .map_err(|e| e.in_stage("split"))?;
        Ok(Self {
            schema,
            docs,
            vocab,
            split,
        })
    }

    pub fn training_docs(&self) -> Vec<&Document> {
        self.split.labeled_docs().map(|(_, i)| &self.docs[i]).collect()
    }

    pub fn test_docs(&self) -> Vec<&Document> {
        self.split.test.iter().map(|&i| &self.docs[i]).collect()
    }

    pub fn table_names(&self) -> TableNames {
        TableNames::new(&self.vocab, &self.docs, &self.schema)
    }
}

pub fn prepare(config: &RunConfig) -> Result<Prepared> {
    config.validate()?;
    let schema = config.schema()?;
    let records = read_records(&config.corpus, &schema).map_err(|e| e.in_stage("ingest"))?;
    Prepared::from_records(config, &records)
}

pub fn embed_config(config: &RunConfig) -> EmbedConfig {
    EmbedConfig {
        seed: config.stage_seeds().embed,
        ..config.embed.clone()
    }
}

pub fn gen_config(config: &RunConfig) -> GenConfig {
    GenConfig {
        seed: config.stage_seeds().generate,
        ..config.generate.clone()
    }
}

pub fn embed_stage(config: &RunConfig, prep: &Prepared) -> Result<EmbeddingSpace> {
    let cfg = embed_config(config);
    let run = || {
        if prep.docs.is_empty() {
            return init_embeddings(&prep.vocab, 0, &cfg);
        }
        train(&prep.docs, &prep.split, &prep.schema, &prep.vocab, &cfg)
    };
    run().map_err(|e| e.in_stage("embed"))
}

pub fn generate_stage(
    config: &RunConfig,
    prep: &Prepared,
    space: &EmbeddingSpace,
) -> Result<Vec<Vec<SyntheticDocument>>> {
    let lengths = LengthModel::from_split(&prep.docs, &prep.split);
    generate_all(space, &gen_config(config), &lengths).map_err(|e| e.in_stage("generate"))
}

pub fn train_stage(
    config: &RunConfig,
    prep: &Prepared,
    space: &EmbeddingSpace,
    synthetic: &[Document],
) -> Result<CnnModel> {
    let mut docs = prep.training_docs();
    docs.extend(synthetic);
    let cfg = crate::classifier::TrainConfig {
        seed: config.stage_seeds().train,
        ..config.train.clone()
    };
    train_classifier(space, &docs, &cfg).map_err(|e| e.in_stage("train"))
}

pub fn evaluate_stage(
    prep: &Prepared,
    space: &EmbeddingSpace,
    model: &CnnModel,
) -> Result<(EvalReport, Vec<Prediction>)> {
    let test = prep.test_docs();
    let preds = predict(model, space, &test);
    let gold: Vec<u32> = test.iter().map(|d| d.label.expect("test docs are labeled")).collect();
    let labels: Vec<u32> = preds.iter().map(|p| p.label).collect();
    let report = evaluate(&labels, &gold, prep.vocab.labels.len()).map_err(|e| e.in_stage("evaluate"))?;
    Ok((report, preds))
}

/// Everything one run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub space: EmbeddingSpace,
    pub synthetic: Vec<Vec<SyntheticDocument>>,
    pub model: CnnModel,
    pub predictions: Vec<Prediction>,
    pub report: RunReport,
    pub timings: Vec<(&'static str, Duration)>,
}

/// Generation, training and evaluation on a given embedding space.
pub fn run_from_space(
    config: &RunConfig,
    prep: &Prepared,
    space: EmbeddingSpace,
    mut timings: Vec<(&'static str, Duration)>,
) -> Result<RunOutput> {
    let t = Instant::now();
    let synthetic = generate_stage(config, prep, &space)?;
    let synthetic_docs = synthetic_documents(&synthetic, &prep.vocab);
    timings.push(("generate", t.elapsed()));

    let t = Instant::now();
    let model = train_stage(config, prep, &space, &synthetic_docs)?;
    timings.push(("train", t.elapsed()));

    let t = Instant::now();
    let (eval, predictions) = evaluate_stage(prep, &space, &model)?;
    timings.push(("evaluate", t.elapsed()));

    let report = RunReport::new(config, prep, eval, synthetic_docs.len());
    Ok(RunOutput {
        space,
        synthetic,
        model,
        predictions,
        report,
        timings,
    })
}

pub fn run_prepared(config: &RunConfig, prep: &Prepared) -> Result<RunOutput> {
    let t = Instant::now();
    let space = embed_stage(config, prep)?;
    run_from_space(config, prep, space, vec![("embed", t.elapsed())])
}

/// Full run from the corpus file. Artifacts are written when `output` is set.
pub fn run_pipeline(config: &RunConfig) -> Result<RunOutput> {
    let t = Instant::now();
    let prep = prepare(config)?;
    let ingest = t.elapsed();
    let mut out = run_prepared(config, &prep)?;
    out.timings.insert(0, ("ingest", ingest));
    if let Some(dir) = &config.output {
        persist(dir, config, &prep, &out).map_err(|e| e.in_stage("persist"))?;
    }
    Ok(out)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_split(path: &Path, prep: &Prepared) -> Result<()> {
    let mut role = vec!["unlabeled"; prep.docs.len()];
    for (_, i) in prep.split.labeled_docs() {
        role[i] = "train";
    }
    for &i in &prep.split.test {
        role[i] = "test";
    }
    let mut text = String::new();
    for (d, r) in prep.docs.iter().zip(role) {
        text.push_str(&json!({"id": d.id, "role": r}).to_string());
        text.push('\n');
    }
    write_text(path, &text)
}

pub fn write_embeddings(dir: &Path, prep: &Prepared, space: &EmbeddingSpace) -> Result<()> {
    save_space(
        space,
        &prep.table_names(),
        &dir.join(artifacts::EMBEDDINGS),
        &dir.join(artifacts::EMBEDDING_INDEX),
    )
}

pub fn write_predictions(
    path: &Path,
    prep: &Prepared,
    predictions: &[Prediction],
) -> Result<()> {
    let io_err = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for (doc, p) in prep.test_docs().into_iter().zip(predictions) {
        let probs: Map<String, Value> = p
            .probs
            .iter()
            .enumerate()
            .map(|(l, &q)| (prep.vocab.labels.name(l as u32).to_owned(), json!(q)))
            .collect();
        let line = json!({
            "id": doc.id,
            "predicted_label": prep.vocab.labels.name(p.label),
            "probs": probs,
        });
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn write_report(dir: &Path, report: &RunReport) -> Result<()> {
    write_text(&dir.join(artifacts::REPORT_TEXT), &report.to_text())?;
    write_text(&dir.join(artifacts::REPORT_RECORDS), &report.to_records())
}

/// Wall-clock times live apart from the report so reports stay reproducible.
pub fn write_timings(path: &Path, timings: &[(&'static str, Duration)]) -> Result<()> {
    let text: String = timings
        .iter()
        .map(|(stage, d)| format!("{stage}\t{:.3}s\n", d.as_secs_f64()))
        .collect();
    write_text(path, &text)
}

fn persist(dir: &Path, config: &RunConfig, prep: &Prepared, out: &RunOutput) -> Result<()> {
    create_dir(dir)?;
    write_text(&dir.join(artifacts::CONFIG), &config.to_file_string())?;
    write_split(&dir.join(artifacts::SPLIT), prep)?;
    write_embeddings(dir, prep, &out.space)?;
    write_synthetic(&dir.join(artifacts::SYNTHETIC), &prep.schema, &out.synthetic, &prep.vocab)?;
    out.model.save(&dir.join(artifacts::MODEL))?;
    write_predictions(&dir.join(artifacts::PREDICTIONS), prep, &out.predictions)?;
    write_report(dir, &out.report)?;
    write_text(&dir.join(artifacts::NEAREST), &nearest_report(&out.space, &prep.vocab, 5))?;
    write_timings(&dir.join(artifacts::TIMINGS), &out.timings)
}

/// Artifact path inside the configured output directory.
pub fn artifact(config: &RunConfig, name: &str) -> Result<PathBuf> {
    config
        .output
        .as_ref()
        .map(|d| d.join(name))
        .ok_or_else(|| Error::InvalidConfig("`output` is required for this command".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planted::{make_planted_corpus, PlantedConfig};

    fn small_run(dir: &Path, name: &str) -> RunConfig {
        let planted = make_planted_corpus(&PlantedConfig {
            docs_per_class: 30,
            seed: 2,
            ..Default::default()
        })
        .unwrap();
        let corpus = dir.join("corpus.jsonl");
        planted.write(&corpus).unwrap();
        let mut cfg = RunConfig {
            corpus,
            output: Some(dir.join(name)),
            global_fields: vec!["user".into()],
            local_fields: vec!["tag".into()],
            k_per_class: 5,
            seed: 11,
            ..Default::default()
        };
        cfg.embed.dim = 16;
        cfg.embed.epochs = 3;
        cfg.generate.samples_per_class = 10;
        cfg.train.epochs = 3;
        cfg
    }

    #[test]
    fn run_writes_artifacts_and_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let a = small_run(dir.path(), "a");
        let b = small_run(dir.path(), "b");
        let out = run_pipeline(&a).unwrap();
        run_pipeline(&b).unwrap();
        assert_eq!(out.report.counts.test, 4 * 25);
        assert_eq!(out.report.counts.synthetic, 40);
        for name in [
            artifacts::EMBEDDINGS,
            artifacts::EMBEDDING_INDEX,
            artifacts::SPLIT,
            artifacts::SYNTHETIC,
            artifacts::MODEL,
            artifacts::PREDICTIONS,
            artifacts::REPORT_TEXT,
            artifacts::REPORT_RECORDS,
            artifacts::NEAREST,
        ] {
            let x = std::fs::read(dir.path().join("a").join(name)).unwrap();
            let y = std::fs::read(dir.path().join("b").join(name)).unwrap();
            assert!(!x.is_empty(), "{name} is empty");
            assert_eq!(x, y, "{name} differs between runs");
        }
        assert!(dir.path().join("a").join(artifacts::TIMINGS).exists());
    }

    #[test]
    fn stage_errors_are_tagged() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_run(dir.path(), "x");
        cfg.k_per_class = 1000;
        match run_pipeline(&cfg) {
            Err(Error::Stage { stage, .. }) => assert_eq!(stage, "split"),
            other => panic!("expected split failure, got {other:?}"),
        }
        cfg.corpus = dir.path().join("missing.jsonl");
        assert!(matches!(run_pipeline(&cfg), Err(Error::Stage { stage: "ingest", .. })));
    }
}
