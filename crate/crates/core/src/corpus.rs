//! Document and metadata data model, line-delimited ingestion, vocabularies
//! and labeled/test splits.
//!
//! A record is one JSON object per line:
//!
//! ```text
//! {"id": "r1", "text": "deep learning", "label": "ml", "user": "u1", "tags": ["nn"]}
//! ```
//!
//! `id` and `label` are optional, `text` may also be an array of segments which
//! are concatenated. Every other key must be a schema field: global fields hold
//! one string, local fields an array of strings.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub const DEFAULT_MIN_COUNT: u64 = 2;

const RESERVED_KEYS: [&str; 4] = ["id", "text", "label", "synthetic"];

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MetadataSchema {
    global_fields: Vec<String>,
    local_fields: Vec<String>,
}

impl MetadataSchema {
    pub fn new(global_fields: Vec<String>, local_fields: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for f in global_fields.iter().chain(&local_fields) {
            if RESERVED_KEYS.contains(&f.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "metadata field `{f}` collides with a reserved record key"
                )));
            }
            if f.is_empty() || !seen.insert(f.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "metadata field `{f}` is empty or listed twice"
                )));
            }
        }
        Ok(Self {
            global_fields,
            local_fields,
        })
    }

    pub fn global_fields(&self) -> &[String] {
        &self.global_fields
    }

    pub fn local_fields(&self) -> &[String] {
        &self.local_fields
    }

    /// Copy of the schema without the named global fields.
    pub fn without_global(&self, drop: &[String]) -> Self {
        Self {
            global_fields: self
                .global_fields
                .iter()
                .filter(|f| !drop.contains(f))
                .cloned()
                .collect(),
            local_fields: self.local_fields.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<u32>,
    /// One slot per schema global field.
    pub global_meta: Vec<Option<u32>>,
    /// One sorted, de-duplicated instance set per schema local field.
    pub local_meta: Vec<Vec<u32>>,
    pub label: Option<u32>,
}

impl Document {
    pub fn local_instance_count(&self) -> usize {
        self.local_meta.iter().map(Vec::len).sum()
    }
}

/// Dense string <-> index map with occurrence counts.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Namespace {
    strings: Vec<String>,
    index: HashMap<String, u32>,
    counts: Vec<u64>,
}

impl Namespace {
    pub fn len(&self) -> usize {
        self.strings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strings.is_empty()
    }

    pub fn get(&self, s: &str) -> Option<u32> {
        self.index.get(s).copied()
    }

    pub fn name(&self, i: u32) -> &str {
        &self.strings[i as usize]
    }

    pub fn names(&self) -> &[String] {
        &self.strings
    }

    pub fn count(&self, i: u32) -> u64 {
        self.counts[i as usize]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    fn intern(&mut self, s: &str) -> u32 {
        if let Some(&i) = self.index.get(s) {
            self.counts[i as usize] += 1;
            return i;
        }
        let i = self.strings.len() as u32;
        self.strings.push(s.to_owned());
        self.index.insert(s.to_owned(), i);
        self.counts.push(1);
        i
    }

    /// Builds a namespace from an ordered name list with zero counts.
    pub fn from_names(names: Vec<String>) -> Self {
        let index = names
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
        let counts = vec![0; names.len()];
        Self {
            strings: names,
            index,
            counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    pub words: Namespace,
    pub labels: Namespace,
    pub global: Vec<Namespace>,
    pub local: Vec<Namespace>,
}

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|piece| !piece.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// A record with all values still as strings.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RawRecord {
    pub id: String,
    pub tokens: Vec<String>,
    pub label: Option<String>,
    pub global: Vec<Option<String>>,
    pub local: Vec<Vec<String>>,
    pub synthetic: bool,
}

impl RawRecord {
    pub fn to_json(&self, schema: &MetadataSchema) -> Value {
        let mut obj = Map::new();
        obj.insert("id".into(), Value::String(self.id.clone()));
        obj.insert("text".into(), Value::String(self.tokens.join(" ")));
        if let Some(l) = &self.label {
            obj.insert("label".into(), Value::String(l.clone()));
        }
        for (field, value) in schema.global_fields.iter().zip(&self.global) {
            if let Some(v) = value {
                obj.insert(field.clone(), Value::String(v.clone()));
            }
        }
        for (field, values) in schema.local_fields.iter().zip(&self.local) {
            obj.insert(
                field.clone(),
                Value::Array(values.iter().cloned().map(Value::String).collect()),
            );
        }
        if self.synthetic {
            obj.insert("synthetic".into(), Value::Bool(true));
        }
        Value::Object(obj)
    }
}

fn parse_record(line: &str, line_no: usize, schema: &MetadataSchema) -> Result<RawRecord> {
    let malformed = |message: String| Error::MalformedRecord {
        line: line_no,
        message,
    };
    let value: Value = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(malformed("record is not a JSON object".into()));
    };

    for key in obj.keys() {
        let known = RESERVED_KEYS.contains(&key.as_str())
            || schema.global_fields.contains(key)
            || schema.local_fields.contains(key);
        if !known {
            return Err(Error::UnknownField {
                line: line_no,
                field: key.clone(),
            });
        }
    }

    let id = match obj.get("id") {
        None | Some(Value::Null) => line_no.to_string(),
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => return Err(malformed("`id` must be a string".into())),
    };
    let tokens = match obj.get("text") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::String(s)) => tokenize(s),
        Some(Value::Array(parts)) => {
            let mut joined = Vec::new();
            for p in parts {
                let Value::String(s) = p else {
                    return Err(malformed("`text` segments must be strings".into()));
                };
                joined.extend(tokenize(s));
            }
            joined
        }
        Some(_) => return Err(malformed("`text` must be a string or array".into())),
    };
    let label = match obj.get("label") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(malformed("`label` must be a string".into())),
    };
    let synthetic = match obj.get("synthetic") {
        None | Some(Value::Null) => false,
        Some(Value::Bool(b)) => *b,
        Some(_) => return Err(malformed("`synthetic` must be a boolean".into())),
    };

    let mut global = Vec::with_capacity(schema.global_fields.len());
    for field in &schema.global_fields {
        global.push(match obj.get(field) {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => {
                return Err(malformed(format!(
                    "global field `{field}` must be a single string"
                )))
            }
        });
    }
    let mut local = Vec::with_capacity(schema.local_fields.len());
    for field in &schema.local_fields {
        local.push(match obj.get(field) {
            None | Some(Value::Null) => Vec::new(),
            Some(Value::Array(items)) => {
                let mut out = Vec::with_capacity(items.len());
                for it in items {
                    let Value::String(s) = it else {
                        return Err(malformed(format!(
                            "local field `{field}` must hold strings"
                        )));
                    };
                    out.push(s.clone());
                }
                out
            }
            Some(_) => {
                return Err(malformed(format!(
                    "local field `{field}` must be an array of strings"
                )))
            }
        });
    }

    if tokens.is_empty() && local.iter().all(Vec::is_empty) {
        return Err(malformed(
            "record has neither text nor local metadata".into(),
        ));
    }

    Ok(RawRecord {
        id,
        tokens,
        label,
        global,
        local,
        synthetic,
    })
}

/// Reads every record of a line-delimited file. Blank lines are skipped.
pub fn read_records(path: &Path, schema: &MetadataSchema) -> Result<Vec<RawRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_record(&line, line_no, schema)?;
        if !ids.insert(rec.id.clone()) {
            return Err(Error::DuplicateId {
                line: line_no,
                id: rec.id,
            });
        }
        records.push(rec);
    }
    Ok(records)
}

pub fn write_records<'a>(
    path: &Path,
    schema: &MetadataSchema,
    records: impl IntoIterator<Item = &'a RawRecord>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for rec in records {
        writeln!(w, "{}", rec.to_json(schema)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Builds the vocabulary and documents from parsed records.
///
/// Words seen fewer than `min_count` times are dropped from the vocabulary and
/// from every token sequence. Labels and metadata instances are never filtered.
/// Indices follow first-occurrence order.
pub fn build_corpus(
    records: &[RawRecord],
    schema: &MetadataSchema,
    min_count: u64,
) -> (Vec<Document>, Vocabulary) {
    let mut raw_counts: HashMap<&str, u64> = HashMap::new();
    for rec in records {
        for t in &rec.tokens {
            *raw_counts.entry(t.as_str()).or_default() += 1;
        }
    }

    let mut vocab = Vocabulary {
        words: Namespace::default(),
        labels: Namespace::default(),
        global: vec![Namespace::default(); schema.global_fields.len()],
        local: vec![Namespace::default(); schema.local_fields.len()],
    };
    let docs = records
        .iter()
        .map(|rec| {
            let tokens = rec
                .tokens
                .iter()
                .filter(|t| raw_counts[t.as_str()] >= min_count)
                .map(|t| vocab.words.intern(t))
                .collect();
            let global_meta = rec
                .global
                .iter()
                .zip(vocab.global.iter_mut())
                .map(|(v, ns)| v.as_deref().map(|s| ns.intern(s)))
                .collect();
            let local_meta = rec
                .local
                .iter()
                .zip(vocab.local.iter_mut())
                .map(|(vals, ns)| {
                    let mut seen = HashSet::new();
                    let mut ids: Vec<u32> = vals
                        .iter()
                        .filter(|s| seen.insert(s.as_str()))
                        .map(|s| ns.intern(s))
                        .collect();
                    ids.sort_unstable();
                    ids
                })
                .collect();
            let label = rec.label.as_deref().map(|l| vocab.labels.intern(l));
            Document {
                id: rec.id.clone(),
                tokens,
                global_meta,
                local_meta,
                label,
            }
        })
        .collect();
    (docs, vocab)
}

/// Maps records onto an existing vocabulary, skipping unknown words and
/// metadata instances. Unknown labels map to `None`.
pub fn encode_records(records: &[RawRecord], vocab: &Vocabulary) -> Vec<Document> {
    records
        .iter()
        .map(|rec| Document {
            id: rec.id.clone(),
            tokens: rec.tokens.iter().filter_map(|t| vocab.words.get(t)).collect(),
            global_meta: rec
                .global
                .iter()
                .zip(&vocab.global)
                .map(|(v, ns)| v.as_deref().and_then(|s| ns.get(s)))
                .collect(),
            local_meta: rec
                .local
                .iter()
                .zip(&vocab.local)
                .map(|(vals, ns)| {
                    let mut ids: Vec<u32> = vals.iter().filter_map(|s| ns.get(s)).collect();
                    ids.sort_unstable();
                    ids.dedup();
                    ids
                })
                .collect(),
            label: rec.label.as_deref().and_then(|l| vocab.labels.get(l)),
        })
        .collect()
}

pub fn load_corpus(
    path: &Path,
    schema: &MetadataSchema,
    min_count: u64,
) -> Result<(Vec<Document>, Vocabulary)> {
    let records = read_records(path, schema)?;
    Ok(build_corpus(&records, schema, min_count))
}

/// Partition of the corpus by document position.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CorpusSplit {
    /// `labeled[l]` lists the training documents of label `l`.
    pub labeled: Vec<Vec<usize>>,
    /// Documents without a gold label.
    pub unlabeled: Vec<usize>,
    /// Gold-labeled documents held out for evaluation.
    pub test: Vec<usize>,
}

impl CorpusSplit {
    pub fn labeled_docs(&self) -> impl Iterator<Item = (u32, usize)> + '_ {
        self.labeled
            .iter()
            .enumerate()
            .flat_map(|(l, docs)| docs.iter().map(move |&d| (l as u32, d)))
    }

    /// Per-document training label, `None` for everything outside `labeled`.
    pub fn training_labels(&self, num_docs: usize) -> Vec<Option<u32>> {
        let mut out = vec![None; num_docs];
        for (l, d) in self.labeled_docs() {
            out[d] = Some(l);
        }
        out
    }

    pub fn num_labeled(&self) -> usize {
        self.labeled.iter().map(Vec::len).sum()
    }
}

/// Samples `k` training documents per class uniformly without replacement.
/// Every other gold-labeled document goes to `test`.
pub fn take_k_per_class(
    docs: &[Document],
    vocab: &Vocabulary,
    k: usize,
    seed: u64,
) -> Result<CorpusSplit> {
    let num_labels = vocab.labels.len();
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); num_labels];
    let mut unlabeled = Vec::new();
    for (i, d) in docs.iter().enumerate() {
        match d.label {
            Some(l) => by_label[l as usize].push(i),
            None => unlabeled.push(i),
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![false; docs.len()];
    let mut labeled = Vec::with_capacity(num_labels);
    for (l, candidates) in by_label.iter().enumerate() {
        if candidates.len() < k {
            return Err(Error::InsufficientClass {
                label: vocab.labels.name(l as u32).to_owned(),
                available: candidates.len(),
                requested: k,
            });
        }
        let mut picked: Vec<usize> = index::sample(&mut rng, candidates.len(), k)
            .into_iter()
            .map(|j| candidates[j])
            .collect();
        picked.sort_unstable();
        picked.iter().for_each(|&d| chosen[d] = true);
        labeled.push(picked);
    }
    let test = docs
        .iter()
        .enumerate()
        .filter(|(i, d)| d.label.is_some() && !chosen[*i])
        .map(|(i, _)| i)
        .collect();
    Ok(CorpusSplit {
        labeled,
        unlabeled,
        test,
    })
}
