//! Synthetic corpora with known class structure, used as test oracles.
//!
//! Each class owns a word pool, a user pool and a tag pool. A document draws
//! every token from its class pool with probability `1 - noise_rate` and from a
//! shared pool otherwise. Users are reused across documents of the same class.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{write_records, MetadataSchema, RawRecord};
use crate::error::{Error, Result};

pub const USER_FIELD: &str = "user";
pub const TAG_FIELD: &str = "tag";

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub num_classes: usize,
    pub docs_per_class: usize,
    pub vocab_per_class: usize,
    pub shared_vocab: usize,
    pub users_per_class: usize,
    pub tags_per_class: usize,
    pub noise_rate: f64,
    /// Inclusive token count range per document.
    pub min_length: usize,
    pub max_length: usize,
    /// Inclusive tag count range per document (drawn with replacement, then deduplicated).
    pub min_tags: usize,
    pub max_tags: usize,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            num_classes: 4,
            docs_per_class: 200,
            vocab_per_class: 50,
            shared_vocab: 100,
            users_per_class: 5,
            tags_per_class: 10,
            noise_rate: 0.3,
            min_length: 2,
            max_length: 8,
            min_tags: 0,
            max_tags: 2,
            seed: 0,
        }
    }
}

impl PlantedConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_classes", self.num_classes),
            ("docs_per_class", self.docs_per_class),
            ("vocab_per_class", self.vocab_per_class),
            ("shared_vocab", self.shared_vocab),
            ("users_per_class", self.users_per_class),
            ("tags_per_class", self.tags_per_class),
            ("min_length", self.min_length),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(Error::InvalidConfig(format!(
                "noise_rate must lie in [0, 1), got {}",
                self.noise_rate
            )));
        }
        if self.min_length > self.max_length || self.min_tags > self.max_tags {
            return Err(Error::InvalidConfig("empty length range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub schema: MetadataSchema,
    pub records: Vec<RawRecord>,
    pub labels: Vec<String>,
    /// `class_words[c]` is the word pool of label `labels[c]`.
    pub class_words: Vec<HashSet<String>>,
    pub class_tags: Vec<HashSet<String>>,
}

impl PlantedCorpus {
    /// Class whose planted pool contains `word`, if any.
    pub fn class_of_word(&self, word: &str) -> Option<usize> {
        self.class_words.iter().position(|pool| pool.contains(word))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_records(path, &self.schema, self.records.iter())
    }
}

pub fn planted_schema() -> MetadataSchema {
    MetadataSchema::new(vec![USER_FIELD.into()], vec![TAG_FIELD.into()])
        .expect("fixed field names are valid")
}

pub fn make_planted_corpus(config: &PlantedConfig) -> Result<PlantedCorpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let labels: Vec<String> = (0..config.num_classes).map(|c| format!("class{c}")).collect();
    let words: Vec<Vec<String>> = (0..config.num_classes)
        .map(|c| (0..config.vocab_per_class).map(|j| format!("c{c}w{j}")).collect())
        .collect();
    let shared: Vec<String> = (0..config.shared_vocab).map(|j| format!("sw{j}")).collect();
    let users: Vec<Vec<String>> = (0..config.num_classes)
        .map(|c| (0..config.users_per_class).map(|j| format!("c{c}u{j}")).collect())
        .collect();
    let tags: Vec<Vec<String>> = (0..config.num_classes)
        .map(|c| (0..config.tags_per_class).map(|j| format!("c{c}t{j}")).collect())
        .collect();

    let mut records = Vec::with_capacity(config.num_classes * config.docs_per_class);
    for c in 0..config.num_classes {
        for _ in 0..config.docs_per_class {
            let n = rng.random_range(config.min_length..=config.max_length);
            let tokens = (0..n)
                .map(|_| {
                    let pool = if rng.random::<f64>() < config.noise_rate {
                        &shared
                    } else {
                        &words[c]
                    };
                    pool[rng.random_range(0..pool.len())].clone()
                })
                .collect();
            let user = users[c][rng.random_range(0..config.users_per_class)].clone();
            let m = rng.random_range(config.min_tags..=config.max_tags);
            let mut doc_tags: Vec<String> = (0..m)
                .map(|_| tags[c][rng.random_range(0..config.tags_per_class)].clone())
                .collect();
            doc_tags.sort();
            doc_tags.dedup();
            records.push(RawRecord {
                id: String::new(),
                tokens,
                label: Some(labels[c].clone()),
                global: vec![Some(user)],
                local: vec![doc_tags],
                synthetic: false,
            });
        }
    }
    records.shuffle(&mut rng);
    for (i, r) in records.iter_mut().enumerate() {
        r.id = format!("d{i}");
    }
    Ok(PlantedCorpus {
        schema: planted_schema(),
        records,
        labels,
        class_words: words.into_iter().map(|v| v.into_iter().collect()).collect(),
        class_tags: tags.into_iter().map(|v| v.into_iter().collect()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    /// Bag-of-words nearest centroid using every document's gold label.
    /// Ties go to the lower class index.
    fn centroid_oracle_accuracy(corpus: &PlantedCorpus) -> f64 {
        let k = corpus.labels.len();
        let label_of = |r: &RawRecord| {
            corpus.labels.iter().position(|l| Some(l) == r.label.as_ref()).unwrap()
        };
        let mut centroids: Vec<HashMap<&str, f64>> = vec![HashMap::new(); k];
        for r in &corpus.records {
            for t in &r.tokens {
                *centroids[label_of(r)].entry(t.as_str()).or_default() += 1.0;
            }
        }
        for c in &mut centroids {
            let norm = c.values().map(|v| v * v).sum::<f64>().sqrt();
            c.values_mut().for_each(|v| *v /= norm);
        }
        let mut correct = 0;
        for r in &corpus.records {
            let scores: Vec<f64> = centroids
                .iter()
                .map(|c| r.tokens.iter().map(|t| c.get(t.as_str()).copied().unwrap_or(0.0)).sum())
                .collect();
            let mut best = 0;
            for (i, &s) in scores.iter().enumerate() {
                if s > scores[best] {
                    best = i;
                }
            }
            correct += usize::from(best == label_of(r));
        }
        correct as f64 / corpus.records.len() as f64
    }

    #[test]
    fn noiseless_corpus_is_separable() {
        let cfg = PlantedConfig {
            noise_rate: 0.0,
            ..Default::default()
        };
        let corpus = make_planted_corpus(&cfg).unwrap();
        assert_eq!(corpus.records.len(), 800);
        assert_eq!(centroid_oracle_accuracy(&corpus), 1.0);
    }

    #[test]
    fn heavy_noise_defeats_the_oracle() {
        let cfg = PlantedConfig {
            noise_rate: 0.9,
            ..Default::default()
        };
        let acc = centroid_oracle_accuracy(&make_planted_corpus(&cfg).unwrap());
        assert!(acc < 0.6, "oracle accuracy {acc}");
    }

    #[test]
    fn seeded_bytes_are_stable() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PlantedConfig {
            docs_per_class: 20,
            seed: 5,
            ..Default::default()
        };
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        make_planted_corpus(&cfg).unwrap().write(&a).unwrap();
        make_planted_corpus(&cfg).unwrap().write(&b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let other = dir.path().join("c.jsonl");
        make_planted_corpus(&PlantedConfig { seed: 6, ..cfg }).unwrap().write(&other).unwrap();
        assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&other).unwrap());
    }

    #[test]
    fn pools_are_class_owned() {
        let corpus = make_planted_corpus(&PlantedConfig::default()).unwrap();
        for r in &corpus.records {
            let c = corpus.labels.iter().position(|l| Some(l) == r.label.as_ref()).unwrap();
            assert!(r.global[0].as_ref().unwrap().starts_with(&format!("c{c}u")));
            assert!(r.local[0].iter().all(|t| corpus.class_tags[c].contains(t)));
            for t in &r.tokens {
                assert!(corpus.class_of_word(t).is_none_or(|k| k == c));
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        for cfg in [
            PlantedConfig { noise_rate: 1.0, ..Default::default() },
            PlantedConfig { num_classes: 0, ..Default::default() },
            PlantedConfig { min_length: 9, max_length: 3, ..Default::default() },
        ] {
            assert!(make_planted_corpus(&cfg).is_err());
        }
    }
}
