use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use crate::corpus::{CorpusSplit, Document, MetadataSchema, Vocabulary};
use crate::error::Result;
use crate::linalg::{dot, sigmoid};

use super::sgd::{pair_objective, step_with, Scratch};
use super::{corpus_pairs, init_embeddings, EmbedConfig, Projection, EmbeddingSpace, Element, Matrix, Pair, Table};

const NOISE_EXPONENT: f64 = 0.75;

/// Per-table negative-sampling distributions: how often a row occurs as a
/// target in the pair stream, raised to the 0.75 power.
#[derive(Debug, Clone)]
pub struct NoiseTables {
    tables: Vec<(Table, WeightedAliasIndex<f64>)>,
}

impl NoiseTables {
    pub fn from_pairs(pairs: &[Pair], space: &EmbeddingSpace) -> Self {
        let mut tables = Vec::new();
        for table in space.tables() {
            let mut counts = vec![0u64; space.matrix(table).rows()];
            for p in pairs.iter().filter(|p| p.target.table == table) {
                counts[p.target.row as usize] += 1;
            }
            if counts.iter().all(|&c| c == 0) {
                continue;
            }
            let weights = counts
                .iter()
                .map(|&c| (c as f64).powf(NOISE_EXPONENT))
                .collect();
            let alias = WeightedAliasIndex::new(weights).expect("positive total weight");
            tables.push((table, alias));
        }
        Self { tables }
    }

    /// Appends `k` draws from the noise distribution of `table` to `out`.
    /// Tables that never occur as a target yield nothing.
    pub fn sample<R: rand::Rng + ?Sized>(&self, table: Table, rng: &mut R, k: usize, out: &mut Vec<u32>) {
        if let Some((_, alias)) = self.tables.iter().find(|(t, _)| *t == table) {
            out.extend((0..k).map(|_| alias.sample(rng) as u32));
        }
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn train(
    docs: &[Document],
    split: &CorpusSplit,
    schema: &MetadataSchema,
    vocab: &Vocabulary,
    config: &EmbedConfig,
) -> Result<EmbeddingSpace> {
    train_with_monitor(docs, split, schema, vocab, config, |_, _| {})
}

/// Like [`train`], calling `monitor(epoch, space)` after every completed epoch.
pub fn train_with_monitor(
    docs: &[Document],
    split: &CorpusSplit,
    schema: &MetadataSchema,
    vocab: &Vocabulary,
    config: &EmbedConfig,
    mut monitor: impl FnMut(usize, &EmbeddingSpace),
) -> Result<EmbeddingSpace> {
    config.validate()?;
    let mut space = init_embeddings(vocab, docs.len(), config)?;
    let pairs = corpus_pairs(docs, split, &config.pair_options(schema));
    if pairs.is_empty() || config.epochs == 0 {
        return Ok(space);
    }
    let noise = NoiseTables::from_pairs(&pairs, &space);
    let schedule = Schedule::new(config, pairs.len());
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut rng = stream_rng(config.seed, 1);

    let project = config.projection == Projection::EveryStep;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        if config.threads > 1 {
            hogwild_epoch(&mut space, &pairs, &order, &noise, config, &schedule, epoch);
        } else {
            let mut scratch = Scratch::default();
            let mut negs = Vec::with_capacity(config.negatives);
            for (i, &p) in order.iter().enumerate() {
                let pair = pairs[p];
                negs.clear();
                noise.sample(pair.target.table, &mut rng, config.negatives, &mut negs);
                let lr = schedule.rate(epoch, i);
                step_with(&mut space, pair, &negs, lr, project, &mut scratch);
            }
        }
        if config.projection == Projection::Output {
            let mut view = space.clone();
            view.normalize_all();
            monitor(epoch, &view);
        } else {
            space.normalize_all();
            monitor(epoch, &space);
        }
    }
    space.normalize_all();
    Ok(space)
}

struct Schedule {
    start: f64,
    floor: f64,
    per_epoch: usize,
    total: f64,
}

impl Schedule {
    fn new(config: &EmbedConfig, per_epoch: usize) -> Self {
        Self {
            start: config.learning_rate,
            floor: config.learning_rate_floor.min(config.learning_rate),
            per_epoch,
            total: (config.epochs * per_epoch) as f64,
        }
    }

    /// Linear decay from `start` to `floor` over all steps.
    fn rate(&self, epoch: usize, step: usize) -> f64 {
        let t = (epoch * self.per_epoch + step) as f64 / self.total;
        self.start - (self.start - self.floor) * t
    }
}

const _: () = assert!(std::mem::align_of::<AtomicU64>() == std::mem::align_of::<f64>());
const _: () = assert!(std::mem::size_of::<AtomicU64>() == std::mem::size_of::<f64>());

/// Shared view of every matrix for lock-free concurrent updates.
/// Values are `f64` bit patterns; concurrent writes may be lost.
struct AtomicSpace<'a> {
    dim: usize,
    globals: usize,
    tables: Vec<&'a [AtomicU64]>,
}

impl<'a> AtomicSpace<'a> {
    fn new(space: &'a mut EmbeddingSpace) -> Self {
        let dim = space.dim();
        let globals = space.global.len();
        let EmbeddingSpace {
            word,
            context,
            doc,
            label,
            global,
            local,
            ..
        } = space;
        let mut mats: Vec<&'a mut Matrix> = vec![word, context, doc, label];
        mats.extend(global.iter_mut());
        mats.extend(local.iter_mut());
        let tables = mats
            .into_iter()
            .map(|m| {
                let s: &'a mut [f64] = m.as_mut_slice();
                // SAFETY: size and alignment match (checked above), the exclusive
                // borrow is held for 'a, and every access goes through atomics.
                unsafe { &*(s as *mut [f64] as *const [AtomicU64]) }
            })
            .collect();
        Self {
            dim,
            globals,
            tables,
        }
    }

    fn slot(&self, t: Table) -> usize {
        match t {
            Table::Word => 0,
            Table::Context => 1,
            Table::Doc => 2,
            Table::Label => 3,
            Table::Global(i) => 4 + i as usize,
            Table::Local(i) => 4 + self.globals + i as usize,
        }
    }

    fn row(&self, el: Element) -> &[AtomicU64] {
        let s = self.tables[self.slot(el.table)];
        &s[el.row as usize * self.dim..(el.row as usize + 1) * self.dim]
    }

    fn read(&self, el: Element, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.row(el).iter().map(|a| f64::from_bits(a.load(Ordering::Relaxed))));
    }

    fn add(&self, el: Element, deltas: &[(f64, &[f64])], project: bool) {
        let row = self.row(el);
        let mut v: Vec<f64> = row
            .iter()
            .map(|a| f64::from_bits(a.load(Ordering::Relaxed)))
            .collect();
        for (alpha, x) in deltas {
            v.iter_mut().zip(*x).for_each(|(v, x)| *v += alpha * x);
        }
        let n = dot(&v, &v).sqrt();
        if project && n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
        }
        for (a, x) in row.iter().zip(&v) {
            a.store(x.to_bits(), Ordering::Relaxed);
        }
    }
}

fn hogwild_epoch(
    space: &mut EmbeddingSpace,
    pairs: &[Pair],
    order: &[usize],
    noise: &NoiseTables,
    config: &EmbedConfig,
    schedule: &Schedule,
    epoch: usize,
) {
    let shared = AtomicSpace::new(space);
    let project = config.projection == Projection::EveryStep;
    let chunk = order.len().div_ceil(config.threads);
    std::thread::scope(|s| {
        for (t, part) in order.chunks(chunk).enumerate() {
            let shared = &shared;
            let offset = t * chunk;
            s.spawn(move || {
                let mut rng = stream_rng(config.seed, 2 + (epoch * config.threads + t) as u64);
                let mut a = Vec::new();
                let mut b = Vec::new();
                let mut n = Vec::new();
                let mut grad_a = Vec::new();
                let mut negs = Vec::new();
                for (i, &p) in part.iter().enumerate() {
                    let pair = pairs[p];
                    negs.clear();
                    noise.sample(pair.target.table, &mut rng, config.negatives, &mut negs);
                    // interleaved chunks approximate the global schedule
                    let lr = schedule.rate(epoch, offset + i);
                    shared.read(pair.context, &mut a);
                    shared.read(pair.target, &mut b);
                    let g = 1.0 - sigmoid(dot(&a, &b));
                    grad_a.clear();
                    grad_a.extend(b.iter().map(|v| g * v));
                    shared.add(pair.target, &[(lr * g, &a)], project);
                    for &neg in &negs {
                        let el = Element::new(pair.target.table, neg);
                        shared.read(el, &mut n);
                        let s = sigmoid(dot(&a, &n));
                        grad_a.iter_mut().zip(&n).for_each(|(g, x)| *g -= s * x);
                        shared.add(el, &[(-lr * s, &a)], project);
                    }
                    shared.add(pair.context, &[(lr, &grad_a)], project);
                }
            });
        }
    });
}

/// Negative-sampling surrogate of the log-likelihood with a frozen negative
/// set, so successive evaluations are comparable.
#[derive(Debug, Clone)]
pub struct LikelihoodProbe {
    pairs: Vec<Pair>,
    negatives: Vec<Vec<u32>>,
}

impl LikelihoodProbe {
    pub fn new(pairs: Vec<Pair>, noise: &NoiseTables, negatives_per_pair: usize, seed: u64) -> Self {
        let mut rng = stream_rng(seed, 7);
        let negatives = pairs
            .iter()
            .map(|p| {
                let mut out = Vec::with_capacity(negatives_per_pair);
                noise.sample(p.target.table, &mut rng, negatives_per_pair, &mut out);
                out
            })
            .collect();
        Self { pairs, negatives }
    }

    pub fn evaluate(&self, space: &EmbeddingSpace) -> f64 {
        self.pairs
            .iter()
            .zip(&self.negatives)
            .map(|(p, negs)| {
                let a = space.vector(p.context);
                let rows: Vec<&[f64]> = negs
                    .iter()
                    .map(|&n| space.vector(Element::new(p.target.table, n)))
                    .collect();
                pair_objective(a, space.vector(p.target), &rows)
            })
            .sum()
    }
}

/// One-shot surrogate evaluation over the corpus pair stream.
pub fn estimate_log_likelihood(
    space: &EmbeddingSpace,
    docs: &[Document],
    split: &CorpusSplit,
    schema: &MetadataSchema,
    config: &EmbedConfig,
    negatives_per_pair: usize,
    seed: u64,
) -> f64 {
    let pairs = corpus_pairs(docs, split, &config.pair_options(schema));
    if pairs.is_empty() {
        return 0.0;
    }
    let noise = NoiseTables::from_pairs(&pairs, space);
    LikelihoodProbe::new(pairs, &noise, negatives_per_pair, seed).evaluate(space)
}
