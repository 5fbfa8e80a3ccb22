//! Synthetic labeled documents drawn around each label's embedding.
//!
//! A document direction is drawn from a vMF centered on the label vector.
//! Words and local metadata are then drawn i.i.d. from a softmax restricted to
//! the `tau` nearest elements of each namespace.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{CorpusSplit, Document, MetadataSchema, RawRecord, Vocabulary};
use crate::embedding::{top_similar_to, EmbeddingSpace, Table};
use crate::error::{Error, Result};
use crate::vmf::{VmfParams, VmfSampler};

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub samples_per_class: usize,
    pub kappa: f64,
    pub tau: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            samples_per_class: 100,
            kappa: 50.0,
            tau: 50,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau == 0 {
            return Err(Error::InvalidConfig("tau must be at least 1".into()));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "kappa must be positive, got {}",
                self.kappa
            )));
        }
        Ok(())
    }
}

/// Lengths of one document: token count and instance count per local field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocLength {
    pub tokens: usize,
    pub local: Vec<usize>,
}

impl DocLength {
    fn of(doc: &Document) -> Self {
        Self {
            tokens: doc.tokens.len(),
            local: doc.local_meta.iter().map(Vec::len).collect(),
        }
    }
}

/// Empirical joint length distribution, one per class, with a corpus-wide
/// fallback for classes whose labeled documents are all empty.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthModel {
    per_class: Vec<Vec<DocLength>>,
    fallback: Vec<DocLength>,
}

impl LengthModel {
    pub fn from_split(docs: &[Document], split: &CorpusSplit) -> Self {
        let per_class = split
            .labeled
            .iter()
            .map(|idx| {
                idx.iter()
                    .map(|&i| &docs[i])
                    .filter(|d| !d.tokens.is_empty())
                    .map(DocLength::of)
                    .collect()
            })
            .collect();
        let fallback = docs
            .iter()
            .filter(|d| !d.tokens.is_empty())
            .map(DocLength::of)
            .collect();
        Self {
            per_class,
            fallback,
        }
    }

    /// Every class gets the same deterministic length.
    pub fn fixed(length: DocLength) -> Self {
        Self {
            per_class: Vec::new(),
            fallback: vec![length],
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, label: u32, rng: &mut R) -> DocLength {
        let pool = match self.per_class.get(label as usize) {
            Some(p) if !p.is_empty() => p,
            _ => &self.fallback,
        };
        if pool.is_empty() {
            return DocLength {
                tokens: 1,
                local: Vec::new(),
            };
        }
        pool[rng.random_range(0..pool.len())].clone()
    }
}

/// The `tau` nearest elements to a direction and their softmax weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Pool {
    pub members: Vec<u32>,
    pub probs: Vec<f64>,
}

impl Pool {
    pub fn contains(&self, row: u32) -> bool {
        self.members.contains(&row)
    }

    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<u32> {
        let dist = WeightedIndex::new(&self.probs).expect("pool weights are positive");
        (0..n).map(|_| self.members[dist.sample(rng)]).collect()
    }
}

pub fn restricted_softmax_pool(
    space: &EmbeddingSpace,
    doc_vector: &[f64],
    table: Table,
    tau: usize,
) -> Result<Pool> {
    if space.matrix(table).rows() == 0 {
        return Err(Error::InvalidConfig(format!("namespace {table:?} is empty")));
    }
    let top = top_similar_to(space, doc_vector, tau.max(1), table);
    let max = top[0].1;
    let weights: Vec<f64> = top.iter().map(|&(_, s)| (s - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(Pool {
        members: top.iter().map(|&(r, _)| r).collect(),
        probs: weights.into_iter().map(|w| w / total).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDocument {
    pub label: u32,
    pub doc_vector: Vec<f64>,
    /// Word rows in draw order.
    pub tokens: Vec<u32>,
    /// Per local field, drawn instance rows sorted ascending (with repeats).
    pub local_meta: Vec<Vec<u32>>,
}

impl SyntheticDocument {
    /// Classifier-facing view. Local metadata becomes a set, as in real
    /// documents, and no global metadata is attached.
    pub fn to_document(&self, id: String, num_global: usize) -> Document {
        let mut local_meta = self.local_meta.clone();
        for field in &mut local_meta {
            field.dedup();
        }
        Document {
            id,
            tokens: self.tokens.clone(),
            global_meta: vec![None; num_global],
            local_meta,
            label: Some(self.label),
        }
    }

    pub fn to_record(&self, id: String, vocab: &Vocabulary) -> RawRecord {
        RawRecord {
            id,
            tokens: self
                .tokens
                .iter()
                .map(|&w| vocab.words.name(w).to_owned())
                .collect(),
            label: Some(vocab.labels.name(self.label).to_owned()),
            global: vec![None; vocab.global.len()],
            local: self
                .local_meta
                .iter()
                .zip(&vocab.local)
                .map(|(rows, ns)| {
                    let mut names: Vec<String> =
                        rows.iter().map(|&r| ns.name(r).to_owned()).collect();
                    names.dedup();
                    names
                })
                .collect(),
            synthetic: true,
        }
    }
}

fn class_rng(seed: u64, label: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label as u64 + 1);
    rng
}

pub fn generate_for_class(
    space: &EmbeddingSpace,
    label: u32,
    config: &GenConfig,
    lengths: &LengthModel,
) -> Result<Vec<SyntheticDocument>> {
    config.validate()?;
    if label as usize >= space.label.rows() {
        return Err(Error::InvalidConfig(format!("unknown label index {label}")));
    }
    if config.samples_per_class == 0 {
        return Ok(Vec::new());
    }
    let mut rng = class_rng(config.seed, label);
    let params = VmfParams::new(space.label.row(label as usize).to_vec(), config.kappa)?;
    let mut sampler = VmfSampler::new(params, rng.next_u64());

    let mut out = Vec::with_capacity(config.samples_per_class);
    for _ in 0..config.samples_per_class {
        let doc_vector = sampler.sample_one();
        let len = lengths.sample(label, &mut rng);
        let tokens = if len.tokens > 0 && space.word.rows() > 0 {
            restricted_softmax_pool(space, &doc_vector, Table::Word, config.tau)?
                .draw(len.tokens, &mut rng)
        } else {
            Vec::new()
        };
        let mut local_meta = Vec::with_capacity(space.local.len());
        for (f, m) in space.local.iter().enumerate() {
            let want = len.local.get(f).copied().unwrap_or(0);
            let mut rows = if want > 0 && m.rows() > 0 {
                let table = Table::Local(f as u16);
                restricted_softmax_pool(space, &doc_vector, table, config.tau)?
                    .draw(want, &mut rng)
            } else {
                Vec::new()
            };
            rows.sort_unstable();
            local_meta.push(rows);
        }
        out.push(SyntheticDocument {
            label,
            doc_vector,
            tokens,
            local_meta,
        });
    }
    Ok(out)
}

/// One batch per label, in label order.
pub fn generate_all(
    space: &EmbeddingSpace,
    config: &GenConfig,
    lengths: &LengthModel,
) -> Result<Vec<Vec<SyntheticDocument>>> {
    (0..space.label.rows() as u32)
        .map(|l| generate_for_class(space, l, config, lengths))
        .collect()
}

fn synthetic_id(vocab: &Vocabulary, label: u32, n: usize) -> String {
    format!("synthetic-{}-{n}", vocab.labels.name(label))
}

/// Line-delimited records, ids `synthetic-<label>-<n>`.
pub fn synthetic_records(
    batches: &[Vec<SyntheticDocument>],
    vocab: &Vocabulary,
) -> Vec<RawRecord> {
    batches
        .iter()
        .flatten()
        .enumerate()
        .map(|(i, d)| d.to_record(synthetic_id(vocab, d.label, i), vocab))
        .collect()
}

/// Classifier-facing documents with the same ids as [`synthetic_records`].
pub fn synthetic_documents(
    batches: &[Vec<SyntheticDocument>],
    vocab: &Vocabulary,
) -> Vec<Document> {
    batches
        .iter()
        .flatten()
        .enumerate()
        .map(|(i, d)| d.to_document(synthetic_id(vocab, d.label, i), vocab.global.len()))
        .collect()
}

/// Convenience for the schema-aware writer.
pub fn write_synthetic(
    path: &std::path::Path,
    schema: &MetadataSchema,
    batches: &[Vec<SyntheticDocument>],
    vocab: &Vocabulary,
) -> Result<()> {
    let records = synthetic_records(batches, vocab);
    crate::corpus::write_records(path, schema, records.iter())
}
