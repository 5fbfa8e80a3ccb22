use std::path::PathBuf;
use std::process::ExitCode;

use clap::{value_parser, Arg, ArgMatches, Command};

use metatext::classifier::CnnModel;
use metatext::corpus::{encode_records, read_records};
use metatext::embedding::{load_space, EmbeddingSpace};
use metatext::generator::write_synthetic;
use metatext::pipeline::{
    artifact, artifacts, embed_stage, evaluate_stage, generate_stage, nearest_report,
    prepare, run_pipeline, summarize, sweep, sweep_table, train_stage, write_embeddings,
    write_predictions, write_report, write_split, write_sweep, Prepared, RunConfig, RunReport,
    SweepAxis, KEYS,
};
use metatext::planted::{make_planted_corpus, PlantedConfig};
use metatext::{Error, Result};

fn config_args(cmd: Command) -> Command {
    let cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .value_parser(value_parser!(PathBuf))
            .help("flat key = value configuration file; flags override it"),
    );
    KEYS.iter().fold(cmd, |cmd, &(key, help)| {
        cmd.arg(Arg::new(key).long(key).value_name("VALUE").help(help))
    })
}

const PLANTED_KEYS: &[(&str, &str)] = &[
    ("num_classes", "number of classes"),
    ("docs_per_class", "documents per class"),
    ("vocab_per_class", "words owned by each class"),
    ("shared_vocab", "words shared by every class"),
    ("users_per_class", "users owned by each class"),
    ("tags_per_class", "tags owned by each class"),
    ("noise_rate", "probability a token comes from the shared pool"),
    ("min_length", "minimum tokens per document"),
    ("max_length", "maximum tokens per document"),
    ("min_tags", "minimum tag draws per document"),
    ("max_tags", "maximum tag draws per document"),
    ("seed", "random seed"),
];

fn cli() -> Command {
    let stage = |name: &'static str, about: &'static str| config_args(Command::new(name).about(about));
    Command::new("metatext")
        .about("Minimally supervised classification of metadata-rich documents")
        .subcommand_required(true)
        .subcommand(stage("ingest", "Validate the corpus, report counts and write the split"))
        .subcommand(stage("embed", "Train the joint embedding and write it to the output directory"))
        .subcommand(stage("generate", "Write synthetic labeled documents from saved embeddings"))
        .subcommand(stage("train", "Train the classifier on real and synthetic documents"))
        .subcommand(stage("evaluate", "Predict the test documents and write the report"))
        .subcommand(stage("run", "Run every stage end to end"))
        .subcommand(
            stage("sweep", "Repeat runs over one configuration axis")
                .arg(
                    Arg::new("axis")
                        .long("axis")
                        .required(true)
                        .help("samples_per_class, k_real or embedding_dim"),
                )
                .arg(
                    Arg::new("values")
                        .long("values")
                        .required(true)
                        .value_delimiter(',')
                        .value_parser(value_parser!(usize))
                        .help("comma-separated axis values"),
                )
                .arg(
                    Arg::new("repetitions")
                        .long("repetitions")
                        .default_value("5")
                        .value_parser(value_parser!(usize)),
                ),
        )
        .subcommand(
            stage("nearest", "Print the words closest to each label").arg(
                Arg::new("k")
                    .long("k")
                    .default_value("5")
                    .value_parser(value_parser!(usize)),
            ),
        )
        .subcommand(
            PLANTED_KEYS
                .iter()
                .fold(Command::new("make-corpus"), |cmd, &(key, help)| {
                    cmd.arg(Arg::new(key).long(key).value_name("VALUE").help(help))
                })
                .about("Write a planted corpus with known class structure")
                .arg(
                    Arg::new("out")
                        .long("out")
                        .required(true)
                        .value_parser(value_parser!(PathBuf)),
                ),
        )
}

fn run_config(m: &ArgMatches) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = m.get_one::<PathBuf>("config") {
        cfg.apply_file(path)?;
    }
    for &(key, _) in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn planted_config(m: &ArgMatches) -> Result<PlantedConfig> {
    let mut cfg = PlantedConfig::default();
    let bad = |k: &str, v: &str| Error::InvalidConfig(format!("cannot parse `{v}` for `{k}`"));
    for &(key, _) in PLANTED_KEYS {
        let Some(v) = m.get_one::<String>(key) else { continue };
        let n = || v.parse::<usize>().map_err(|_| bad(key, v));
        match key {
            "num_classes" => cfg.num_classes = n()?,
            "docs_per_class" => cfg.docs_per_class = n()?,
            "vocab_per_class" => cfg.vocab_per_class = n()?,
            "shared_vocab" => cfg.shared_vocab = n()?,
            "users_per_class" => cfg.users_per_class = n()?,
            "tags_per_class" => cfg.tags_per_class = n()?,
            "noise_rate" => cfg.noise_rate = v.parse().map_err(|_| bad(key, v))?,
            "min_length" => cfg.min_length = n()?,
            "max_length" => cfg.max_length = n()?,
            "min_tags" => cfg.min_tags = n()?,
            "max_tags" => cfg.max_tags = n()?,
            "seed" => cfg.seed = v.parse().map_err(|_| bad(key, v))?,
            _ => unreachable!("every planted key is handled"),
        }
    }
    Ok(cfg)
}

fn output_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg
        .output
        .clone()
        .ok_or_else(|| Error::InvalidConfig("`output` is required for this command".into()))?;
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    Ok(dir)
}

/// Saved embeddings, checked against the corpus they were trained on.
fn saved_space(cfg: &RunConfig, prep: &Prepared) -> Result<EmbeddingSpace> {
    let (space, names) = load_space(
        &artifact(cfg, artifacts::EMBEDDINGS)?,
        &artifact(cfg, artifacts::EMBEDDING_INDEX)?,
    )?;
    if names != prep.table_names() {
        return Err(Error::Format(
            "saved embeddings were trained on a different corpus or configuration".into(),
        ));
    }
    Ok(space)
}

fn execute(matches: &ArgMatches) -> Result<()> {
    let (name, m) = matches.subcommand().expect("subcommand is required");
    if name == "make-corpus" {
        let cfg = planted_config(m)?;
        let out = m.get_one::<PathBuf>("out").expect("required");
        let corpus = make_planted_corpus(&cfg)?;
        corpus.write(out)?;
        println!("wrote {} documents to {}", corpus.records.len(), out.display());
        return Ok(());
    }

    let cfg = run_config(m)?;
    match name {
        "ingest" => {
            let prep = prepare(&cfg)?;
            println!(
                "documents {}  words {}  labels {}  train {}  test {}  unlabeled {}",
                prep.docs.len(),
                prep.vocab.words.len(),
                prep.vocab.labels.len(),
                prep.split.num_labeled(),
                prep.split.test.len(),
                prep.split.unlabeled.len()
            );
            if cfg.output.is_some() {
                write_split(&output_dir(&cfg)?.join(artifacts::SPLIT), &prep)?;
            }
        }
        "embed" => {
            let dir = output_dir(&cfg)?;
            let prep = prepare(&cfg)?;
            let space = embed_stage(&cfg, &prep)?;
            write_embeddings(&dir, &prep, &space)?;
            println!("wrote embeddings to {}", dir.display());
        }
        "generate" => {
            let prep = prepare(&cfg)?;
            let space = saved_space(&cfg, &prep)?;
            let batches = generate_stage(&cfg, &prep, &space)?;
            let path = artifact(&cfg, artifacts::SYNTHETIC)?;
            write_synthetic(&path, &prep.schema, &batches, &prep.vocab)?;
            let n: usize = batches.iter().map(Vec::len).sum();
            println!("wrote {n} synthetic documents to {}", path.display());
        }
        "train" => {
            let prep = prepare(&cfg)?;
            let space = saved_space(&cfg, &prep)?;
            let path = artifact(&cfg, artifacts::SYNTHETIC)?;
            let synthetic = if path.exists() {
                encode_records(&read_records(&path, &prep.schema)?, &prep.vocab)
            } else {
                Vec::new()
            };
            let model = train_stage(&cfg, &prep, &space, &synthetic)?;
            let out = artifact(&cfg, artifacts::MODEL)?;
            model.save(&out)?;
            println!(
                "trained on {} real and {} synthetic documents; model at {}",
                prep.split.num_labeled(),
                synthetic.len(),
                out.display()
            );
        }
        "evaluate" => {
            let dir = output_dir(&cfg)?;
            let prep = prepare(&cfg)?;
            let space = saved_space(&cfg, &prep)?;
            let model = CnnModel::load(&dir.join(artifacts::MODEL))?;
            let (eval, preds) = evaluate_stage(&prep, &space, &model)?;
            write_predictions(&dir.join(artifacts::PREDICTIONS), &prep, &preds)?;
            let synthetic = dir.join(artifacts::SYNTHETIC);
            let n_synthetic = if synthetic.exists() {
                read_records(&synthetic, &prep.schema)?.len()
            } else {
                0
            };
            let report = RunReport::new(&cfg, &prep, eval, n_synthetic);
            write_report(&dir, &report)?;
            print!("{}", report.to_text());
        }
        "run" => {
            let out = run_pipeline(&cfg)?;
            print!("{}", out.report.to_text());
        }
        "sweep" => {
            let axis: SweepAxis = m.get_one::<String>("axis").expect("required").parse()?;
            let values: Vec<usize> = m.get_many("values").expect("required").copied().collect();
            let reps = *m.get_one::<usize>("repetitions").expect("defaulted");
            let points = sweep(&cfg, axis, &values, reps)?;
            if let Some(dir) = &cfg.output {
                write_sweep(dir, axis, &points)?;
            }
            print!("{}", sweep_table(axis, &summarize(&points)));
        }
        "nearest" => {
            let k = *m.get_one::<usize>("k").expect("defaulted");
            let prep = prepare(&cfg)?;
            let space = saved_space(&cfg, &prep)?;
            print!("{}", nearest_report(&space, &prep.vocab, k));
        }
        other => unreachable!("unknown subcommand {other}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    match execute(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
