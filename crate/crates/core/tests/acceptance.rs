//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use metatext::classifier::{CnnModel, Input};
use metatext::corpus::RawRecord;
use metatext::embedding::{
    pair_gradients, pair_objective, sgd_step, Element, EmbeddingSpace, Matrix, Pair, Table,
};
use metatext::generator::SyntheticDocument;
use metatext::linalg::{dot, normalize};
use metatext::pipeline::{
    artifacts, embed_stage, generate_stage, nearest_report, nearest_words, run_pipeline, summarize,
    sweep_records, Prepared, RunConfig, SweepAxis, SweepPoint,
};
use metatext::planted::{make_planted_corpus, PlantedConfig, PlantedCorpus};
use metatext::vmf::{log_norm_const, mean_resultant_length, sample, VmfParams};

const REPETITIONS: usize = 5;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

struct Ledger(Vec<Outcome>);

impl Ledger {
    fn record(&mut self, name: &'static str, started: Instant, pass: bool, detail: String) {
        let elapsed = started.elapsed();
        println!(
            "{}  {name}  ({:.1} s)  {detail}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        self.0.push(Outcome {
            name,
            pass,
            detail,
            elapsed,
        });
    }
}

fn within(started: Instant, secs: u64) -> bool {
    started.elapsed() < Duration::from_secs(secs)
}

// ---------------------------------------------------------------- vMF

/// `I_{nu+1}(x) / I_nu(x)` by the Gauss continued fraction, evaluated
/// bottom-up from a deep truncation.
fn bessel_ratio_cf(nu: f64, x: f64) -> f64 {
    let mut tail = 0.0;
    for k in (1..=2000).rev() {
        tail = 1.0 / (2.0 * (nu + k as f64) / x + tail);
    }
    tail
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    normalize(&mut v);
    v
}

fn check_vmf(ledger: &mut Ledger) {
    let started = Instant::now();
    let (p, kappa, n) = (100, 50.0, 10_000);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mu = unit_vector(&mut rng, p);
    let draws = sample(&VmfParams::new(mu.clone(), kappa).unwrap(), n, 5);
    let mut mean = vec![0.0; p];
    for x in &draws {
        mean.iter_mut().zip(x).for_each(|(m, v)| *m += v);
    }
    let mean_dot = draws.iter().map(|x| dot(x, &mu)).sum::<f64>() / n as f64;
    normalize(&mut mean);
    let direction = dot(&mean, &mu);
    let a_module = mean_resultant_length(p, kappa).unwrap();
    let a_oracle = bessel_ratio_cf(p as f64 / 2.0 - 1.0, kappa);

    let mut closed_form_err: f64 = 0.0;
    for kappa in [0.1f64, 0.5, 2.0, 5.0, 20.0, 100.0] {
        let log_c3 = kappa.ln() - (4.0 * PI).ln() - (kappa + (-(-2.0 * kappa).exp()).ln_1p() - 2f64.ln());
        closed_form_err = closed_form_err.max((log_norm_const(3, kappa).unwrap() - log_c3).abs());
        let a3 = 1.0 / kappa.tanh() - 1.0 / kappa;
        closed_form_err = closed_form_err.max((mean_resultant_length(3, kappa).unwrap() - a3).abs());
    }
    let pass = direction >= 0.99
        && (mean_dot - a_oracle).abs() <= 0.02
        && (a_module - a_oracle).abs() < 1e-9
        && closed_form_err < 1e-9
        && within(started, 10);
    ledger.record(
        "vmf_sampling_and_normalizer",
        started,
        pass,
        format!(
            "mean-direction cos {direction:.4}, mean dot {mean_dot:.4} vs ratio {a_oracle:.4} \
             (module {a_module:.6}), worst p=3 closed-form error {closed_form_err:.1e}"
        ),
    );
}

// ---------------------------------------------------------------- gradients

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn nll(model: &CnnModel, input: &Input, gold: u32) -> f64 {
    -model.forward(input).0.probs[gold as usize].ln()
}

fn cnn_trial(rng: &mut ChaCha8Rng, trial: u64) -> f64 {
    let dim = rng.random_range(2..=16);
    let labels = rng.random_range(2..=5);
    let maps = rng.random_range(1..=4);
    let mut widths: Vec<usize> = (1..=5).filter(|_| rng.random_bool(0.6)).collect();
    if widths.is_empty() {
        widths.push(2);
    }
    let mut model = CnnModel::with_architecture(dim, labels, &widths, maps, trial).unwrap();
    for p in model.params_mut() {
        *p *= 20.0;
    }
    let rows = model.min_rows() + rng.random_range(0..4);
    let input = Input {
        rows,
        data: (0..rows * dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
    };
    let gold = rng.random_range(0..labels) as u32;
    let mut grad = vec![0.0; model.params().len()];
    let (_, cache) = model.forward(&input);
    model.backward(&input, &cache, gold, &mut grad);
    // large enough that rounding in the loss stays well below the tolerance
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..grad.len() {
        let orig = model.params()[i];
        model.params_mut()[i] = orig + h;
        let up = nll(&model, &input, gold);
        model.params_mut()[i] = orig - h;
        let down = nll(&model, &input, gold);
        model.params_mut()[i] = orig;
        worst = worst.max(rel_err(grad[i], (up - down) / (2.0 * h)));
    }
    worst
}

/// Finite differences of the pair objective, and `sgd_step` checked against
/// a hand-applied projected step.
fn embedding_trial(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let dim = rng.random_range(2..=16);
    let words = rng.random_range(3..=8);
    let docs = rng.random_range(1..=4);
    let k = rng.random_range(1..=words - 1);
    let table = |rng: &mut ChaCha8Rng, rows: usize| {
        Matrix::from_vec(rows, dim, (0..rows).flat_map(|_| unit_vector(rng, dim)).collect())
    };
    let word = table(rng, words);
    let doc = table(rng, docs);
    let mut space = EmbeddingSpace::from_tables(
        dim,
        word.clone(),
        table(rng, words),
        doc.clone(),
        table(rng, 1),
        vec![],
        vec![],
    )
    .unwrap();
    let d = rng.random_range(0..docs);
    let w = rng.random_range(0..words);
    // distinct negatives different from the target keep the hand step simple
    let mut pool: Vec<u32> = (0..words as u32).filter(|&n| n != w as u32).collect();
    let mut negs = Vec::new();
    for _ in 0..k {
        negs.push(pool.swap_remove(rng.random_range(0..pool.len())));
    }

    let a = doc.row(d).to_vec();
    let b = word.row(w).to_vec();
    let ns: Vec<Vec<f64>> = negs.iter().map(|&n| word.row(n as usize).to_vec()).collect();
    let refs: Vec<&[f64]> = ns.iter().map(Vec::as_slice).collect();
    let grads = pair_gradients(&a, &b, &refs);
    let h = 1e-6;
    let objective = |a: &[f64], b: &[f64], ns: &[Vec<f64>]| {
        let r: Vec<&[f64]> = ns.iter().map(Vec::as_slice).collect();
        pair_objective(a, b, &r)
    };
    let mut worst: f64 = 0.0;
    for i in 0..dim {
        let bump = |v: &[f64], s: f64| {
            let mut v = v.to_vec();
            v[i] += s;
            v
        };
        let num = (objective(&bump(&a, h), &b, &ns) - objective(&bump(&a, -h), &b, &ns)) / (2.0 * h);
        worst = worst.max(rel_err(grads.context[i], num));
        let num = (objective(&a, &bump(&b, h), &ns) - objective(&a, &bump(&b, -h), &ns)) / (2.0 * h);
        worst = worst.max(rel_err(grads.target[i], num));
        for j in 0..ns.len() {
            let mut up = ns.clone();
            up[j][i] += h;
            let mut down = ns.clone();
            down[j][i] -= h;
            let num = (objective(&a, &b, &up) - objective(&a, &b, &down)) / (2.0 * h);
            worst = worst.max(rel_err(grads.negatives[j][i], num));
        }
    }

    let lr = 0.1;
    let pair = Pair {
        context: Element::new(Table::Doc, d as u32),
        target: Element::new(Table::Word, w as u32),
    };
    sgd_step(&mut space, pair, &negs, lr);
    let stepped = |x: &[f64], g: &[f64]| {
        let mut v: Vec<f64> = x.iter().zip(g).map(|(x, g)| x + lr * g).collect();
        normalize(&mut v);
        v
    };
    let mut step_err: f64 = 0.0;
    let mut compare = |want: Vec<f64>, got: &[f64]| {
        for (x, y) in want.iter().zip(got) {
            step_err = step_err.max((x - y).abs());
        }
    };
    compare(stepped(&a, &grads.context), space.doc.row(d));
    compare(stepped(&b, &grads.target), space.word.row(w));
    for (j, &n) in negs.iter().enumerate() {
        compare(stepped(&ns[j], &grads.negatives[j]), space.word.row(n as usize));
    }
    (worst, step_err)
}

fn check_gradients(ledger: &mut Ledger) {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cnn = (0..100).map(|t| cnn_trial(&mut rng, t)).fold(0.0, f64::max);
    let (mut emb, mut step) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let (e, s) = embedding_trial(&mut rng);
        emb = emb.max(e);
        step = step.max(s);
    }
    let pass = cnn < 1e-4 && emb < 1e-4 && step < 1e-12 && within(started, 30);
    ledger.record(
        "gradient_fidelity",
        started,
        pass,
        format!(
            "classifier worst rel err {cnn:.1e}, embedding worst rel err {emb:.1e}, \
             update vs hand-applied step {step:.1e} (100 trials each)"
        ),
    );
}

// ---------------------------------------------------------------- planted corpus

fn planted() -> PlantedCorpus {
    make_planted_corpus(&PlantedConfig::default()).unwrap()
}

fn planted_config() -> RunConfig {
    RunConfig {
        global_fields: vec!["user".into()],
        local_fields: vec!["tag".into()],
        ..Default::default()
    }
}

fn planted_class(corpus: &PlantedCorpus, label: &str) -> usize {
    corpus.labels.iter().position(|l| l == label).unwrap()
}

/// `started` is taken before training so the runtime bound covers it.
fn check_embedding(
    ledger: &mut Ledger,
    started: Instant,
    corpus: &PlantedCorpus,
    prep: &Prepared,
    space: &EmbeddingSpace,
) {
    let classes: Vec<Option<usize>> = prep
        .vocab
        .words
        .names()
        .iter()
        .map(|w| corpus.class_of_word(w))
        .collect();
    let (mut same, mut ns, mut diff, mut nd) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..classes.len() {
        for j in i + 1..classes.len() {
            if let (Some(a), Some(b)) = (classes[i], classes[j]) {
                let c = dot(space.word.row(i), space.word.row(j));
                if a == b {
                    same += c;
                    ns += 1;
                } else {
                    diff += c;
                    nd += 1;
                }
            }
        }
    }
    let (same, diff) = (same / ns as f64, diff / nd as f64);

    // counted from the ranked lists and, independently, from the report text
    let hits_ranked: Vec<usize> = nearest_words(space, &prep.vocab, 5)
        .iter()
        .map(|(label, words)| {
            let c = planted_class(corpus, label);
            words.iter().filter(|(w, _)| corpus.class_of_word(w) == Some(c)).count()
        })
        .collect();
    let hits_text: Vec<usize> = nearest_report(space, &prep.vocab, 5)
        .lines()
        .map(|line| {
            let (label, rest) = line.split_once('\t').unwrap();
            let c = planted_class(corpus, label);
            rest.split("  ")
                .filter_map(|cell| cell.split(' ').next())
                .filter(|w| corpus.class_of_word(w) == Some(c))
                .count()
        })
        .collect();
    let pass = same - diff >= 0.2
        && hits_ranked == hits_text
        && hits_ranked.iter().all(|&h| h >= 4)
        && within(started, 180);
    ledger.record(
        "embedding_sanity",
        started,
        pass,
        format!(
            "intra {same:.3} inter {diff:.3} (gap {:.3}); planted words in top 5 per label {hits_ranked:?}",
            same - diff
        ),
    );
}

/// Brute-force top-`tau` word rows by similarity, ties broken by lower index.
fn top_words(space: &EmbeddingSpace, v: &[f64], tau: usize) -> Vec<u32> {
    let mut scored: Vec<(f64, u32)> = (0..space.word.rows())
        .map(|r| (dot(space.word.row(r), v), r as u32))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(tau).map(|(_, r)| r).collect()
}

fn check_generation(
    ledger: &mut Ledger,
    corpus: &PlantedCorpus,
    cfg: &RunConfig,
    prep: &Prepared,
    space: &EmbeddingSpace,
) {
    let started = Instant::now();
    let batches: Vec<Vec<SyntheticDocument>> = generate_stage(cfg, prep, space).unwrap();
    let tau = cfg.generate.tau;
    let mut outside_pool = 0usize;
    let mut purity = Vec::new();
    for (l, batch) in batches.iter().enumerate() {
        let c = planted_class(corpus, prep.vocab.labels.name(l as u32));
        let (mut own, mut total) = (0usize, 0usize);
        for doc in batch {
            let pool = top_words(space, &doc.doc_vector, tau);
            for &w in &doc.tokens {
                outside_pool += usize::from(!pool.contains(&w));
                own += usize::from(corpus.class_of_word(prep.vocab.words.name(w)) == Some(c));
                total += 1;
            }
        }
        purity.push(own as f64 / total.max(1) as f64);
    }
    let pass = outside_pool == 0 && purity.iter().all(|&p| p >= 0.8) && within(started, 60);
    let shown: Vec<String> = purity.iter().map(|p| format!("{p:.3}")).collect();
    ledger.record(
        "generation_quality",
        started,
        pass,
        format!(
            "own-pool token share per class [{}] at kappa {} tau {tau}; tokens outside their pool {outside_pool}",
            shown.join(", "),
            cfg.generate.kappa
        ),
    );
}

fn mean_micro(points: &[SweepPoint], value: usize) -> f64 {
    summarize(points)
        .into_iter()
        .find(|s| s.value == value)
        .map(|s| s.micro_mean)
        .unwrap()
}

fn check_trends(ledger: &mut Ledger, records: &[RawRecord]) {
    let base = planted_config();

    let started = Instant::now();
    let counts = sweep_records(&base, records, SweepAxis::SamplesPerClass, &[0, 100, 1000], REPETITIONS).unwrap();
    let (f0, f100, f1000) = (mean_micro(&counts, 0), mean_micro(&counts, 100), mean_micro(&counts, 1000));
    let gain_time = started.elapsed();
    let pass = f100 - f0 >= 0.03 && gain_time < Duration::from_secs(900);
    ledger.record(
        "synthetic_samples_improve_f1",
        started,
        pass,
        format!("k=10: micro F1 {f0:.4} without synthetic, {f100:.4} with 100 per class (gain {:+.4})", f100 - f0),
    );
    ledger.record(
        "synthetic_samples_plateau",
        started,
        f1000 - f100 < 0.02 && gain_time < Duration::from_secs(900),
        format!("micro F1 {f100:.4} at 100 per class, {f1000:.4} at 1000 (change {:+.4})", f1000 - f100),
    );

    let started = Instant::now();
    let wide = RunConfig {
        k_per_class: 100,
        ..base.clone()
    };
    let many = sweep_records(&wide, records, SweepAxis::SamplesPerClass, &[0, 100], REPETITIONS).unwrap();
    let gap_few = f100 - f0;
    let gap_many = mean_micro(&many, 100) - mean_micro(&many, 0);
    ledger.record(
        "synthetic_gap_shrinks_with_labels",
        started,
        gap_few > gap_many,
        format!("gain from synthetic: {gap_few:+.4} at k=10, {gap_many:+.4} at k=100"),
    );

    let started = Instant::now();
    let no_user = RunConfig {
        embed: metatext::embedding::EmbedConfig {
            exclude_fields: vec!["user".into()],
            ..base.embed.clone()
        },
        ..base.clone()
    };
    let ablated = sweep_records(&no_user, records, SweepAxis::SamplesPerClass, &[100], REPETITIONS).unwrap();
    let without = mean_micro(&ablated, 100);
    ledger.record(
        "user_metadata_ablation",
        started,
        f100 - without >= 0.02,
        format!("micro F1 {f100:.4} with users, {without:.4} without (drop {:+.4})", f100 - without),
    );
}

fn check_determinism(ledger: &mut Ledger, corpus: &PlantedCorpus) {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("planted.jsonl");
    corpus.write(&path).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let cfg = RunConfig {
            corpus: path.clone(),
            output: Some(out.clone()),
            seed: 17,
            ..planted_config()
        };
        run_pipeline(&cfg).unwrap();
        out
    };
    let (a, b) = (run("first"), run("second"));
    let files = [artifacts::REPORT_TEXT, artifacts::REPORT_RECORDS, artifacts::MODEL];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| std::fs::read(a.join(f)).unwrap() != std::fs::read(b.join(f)).unwrap())
        .collect();
    ledger.record(
        "determinism",
        started,
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} identical across two runs", files.join(", "))
        } else {
            format!("differs: {}", differing.join(", "))
        },
    );
}

fn main() {
    let mut ledger = Ledger(Vec::new());
    check_vmf(&mut ledger);
    check_gradients(&mut ledger);

    let corpus = planted();
    let cfg = planted_config();
    let started = Instant::now();
    let prep = Prepared::from_records(&cfg, &corpus.records).unwrap();
    let space = embed_stage(&cfg, &prep).unwrap();
    check_embedding(&mut ledger, started, &corpus, &prep, &space);
    check_generation(&mut ledger, &corpus, &cfg, &prep, &space);
    check_determinism(&mut ledger, &corpus);
    check_trends(&mut ledger, &corpus.records);

    let failed: Vec<&Outcome> = ledger.0.iter().filter(|o| !o.pass).collect();
    println!(
        "\n{} of {} criteria passed ({:.0} s)",
        ledger.0.len() - failed.len(),
        ledger.0.len(),
        ledger.0.iter().map(|o| o.elapsed.as_secs_f64()).sum::<f64>()
    );
    for o in &failed {
        println!("failed: {}: {}", o.name, o.detail);
    }
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
