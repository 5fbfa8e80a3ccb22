use std::fmt::Write as _;

use serde::Serialize;
use serde_json::json;

use crate::corpus::Vocabulary;
use crate::embedding::{top_similar, Element, EmbeddingSpace, Table};
use crate::eval::EvalReport;

use super::{Prepared, RunConfig, StageSeeds};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub documents: usize,
    pub words: usize,
    pub train: usize,
    pub synthetic: usize,
    pub test: usize,
}

/// Scores plus what is needed to reproduce them. Timings are kept elsewhere
/// so that identical runs give identical reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub eval: EvalReport,
    pub labels: Vec<String>,
    pub seeds: StageSeeds,
    pub counts: Counts,
    /// Configuration echo without the output directory.
    pub config: Vec<(String, String)>,
}

impl RunReport {
    pub fn new(config: &RunConfig, prep: &Prepared, eval: EvalReport, synthetic: usize) -> Self {
        Self {
            eval,
            labels: prep.vocab.labels.names().to_vec(),
            seeds: config.stage_seeds(),
            counts: Counts {
                documents: prep.docs.len(),
                words: prep.vocab.words.len(),
                train: prep.split.num_labeled(),
                synthetic,
                test: prep.split.test.len(),
            },
            config: config
                .entries()
                .into_iter()
                .filter(|(k, _)| k != "output")
                .collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let e = &self.eval;
        let c = &self.counts;
        let _ = writeln!(s, "micro_f1  {:.4}", e.micro_f1);
        let _ = writeln!(s, "macro_f1  {:.4}", e.macro_f1);
        let _ = writeln!(
            s,
            "documents {}  words {}  train {}  synthetic {}  test {}",
            c.documents, c.words, c.train, c.synthetic, c.test
        );
        let d = &self.seeds;
        let _ = writeln!(
            s,
            "seeds     root {}  split {}  embed {}  generate {}  train {}",
            d.root, d.split, d.embed, d.generate, d.train
        );
        let width = self.labels.iter().map(String::len).max().unwrap_or(5).max(5);
        let _ = writeln!(s, "\n{:width$}  precision  recall  f1      support", "label");
        for (l, m) in self.labels.iter().zip(&e.per_class) {
            let _ = writeln!(
                s,
                "{l:width$}  {:<9.4}  {:<6.4}  {:<6.4}  {}",
                m.precision, m.recall, m.f1, m.support
            );
        }
        let _ = writeln!(s, "\nconfusion (rows gold, columns predicted)");
        for (l, row) in self.labels.iter().zip(&e.confusion) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:>6}")).collect();
            let _ = writeln!(s, "{l:width$}  {}", cells.join(""));
        }
        let _ = writeln!(s, "\nconfig");
        for (k, v) in &self.config {
            let _ = writeln!(s, "  {k} = {v}");
        }
        s
    }

    /// One JSON object per line: summary, one per class, confusion, config.
    pub fn to_records(&self) -> String {
        let e = &self.eval;
        let mut lines = vec![json!({
            "kind": "summary",
            "micro_f1": e.micro_f1,
            "macro_f1": e.macro_f1,
            "counts": self.counts,
            "seeds": self.seeds,
        })];
        for (l, m) in self.labels.iter().zip(&e.per_class) {
            lines.push(json!({
                "kind": "class",
                "label": l,
                "precision": m.precision,
                "recall": m.recall,
                "f1": m.f1,
                "support": m.support,
            }));
        }
        lines.push(json!({"kind": "confusion", "labels": self.labels, "matrix": e.confusion}));
        let config: serde_json::Map<String, serde_json::Value> = self
            .config
            .iter()
            .map(|(k, v)| (k.clone(), json!(v)))
            .collect();
        lines.push(json!({"kind": "config", "entries": config}));
        lines.iter().map(|v| format!("{v}\n")).collect()
    }
}

/// Top-`k` words by cosine to each label vector.
pub fn nearest_words(
    space: &EmbeddingSpace,
    vocab: &Vocabulary,
    k: usize,
) -> Vec<(String, Vec<(String, f64)>)> {
    (0..vocab.labels.len() as u32)
        .map(|l| {
            let words = top_similar(space, Element::new(Table::Label, l), k, Table::Word)
                .into_iter()
                .map(|(w, s)| (vocab.words.name(w).to_owned(), s))
                .collect();
            (vocab.labels.name(l).to_owned(), words)
        })
        .collect()
}

pub fn nearest_report(space: &EmbeddingSpace, vocab: &Vocabulary, k: usize) -> String {
    nearest_words(space, vocab, k)
        .into_iter()
        .map(|(label, words)| {
            let cells: Vec<String> = words.iter().map(|(w, s)| format!("{w} ({s:.3})")).collect();
            format!("{label}\t{}\n", cells.join("  "))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Namespace;
    use crate::embedding::Matrix;

    fn space_and_vocab() -> (EmbeddingSpace, Vocabulary) {
        let words = Matrix::from_vec(3, 2, vec![1.0, 0.0, 0.0, 1.0, 0.8, 0.6]);
        let space = EmbeddingSpace::from_tables(
            2,
            words.clone(),
            words,
            Matrix::zeros(0, 2),
            Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]),
            vec![],
            vec![],
        )
        .unwrap();
        let vocab = Vocabulary {
            words: Namespace::from_names(vec!["x".into(), "y".into(), "z".into()]),
            labels: Namespace::from_names(vec!["A".into(), "B".into()]),
            global: vec![],
            local: vec![],
        };
        (space, vocab)
    }

    #[test]
    fn nearest_words_ranked() {
        let (space, vocab) = space_and_vocab();
        let n = nearest_words(&space, &vocab, 2);
        assert_eq!(n[0].0, "A");
        assert_eq!(n[0].1.iter().map(|(w, _)| w.as_str()).collect::<Vec<_>>(), ["x", "z"]);
        assert_eq!(n[1].1.iter().map(|(w, _)| w.as_str()).collect::<Vec<_>>(), ["y", "z"]);
        let text = nearest_report(&space, &vocab, 2);
        assert_eq!(text, nearest_report(&space, &vocab, 2));
        assert!(text.starts_with("A\tx (1.000)  z (0.800)\n"));
    }

    #[test]
    fn k_zero_gives_empty_rows() {
        let (space, vocab) = space_and_vocab();
        assert!(nearest_words(&space, &vocab, 0).iter().all(|(_, w)| w.is_empty()));
        assert_eq!(nearest_report(&space, &vocab, 0), "A\t\nB\t\n");
    }
}
