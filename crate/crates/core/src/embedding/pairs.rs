use crate::corpus::{CorpusSplit, Document};

use super::{Element, Table};

/// One observed generative edge: `context` generates `target`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pair {
    pub context: Element,
    pub target: Element,
}

impl Pair {
    fn new(context: Element, target: Element) -> Self {
        Self { context, target }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairOptions {
    pub window: usize,
    pub global_enabled: Vec<bool>,
    pub local_enabled: Vec<bool>,
    pub context: bool,
}

/// Appends the positive pairs of one document, in this order:
/// global instance -> doc, label -> doc (training label only), doc -> local
/// instance, doc -> word, word -> context word.
pub fn positive_pairs(
    doc_index: usize,
    doc: &Document,
    train_label: Option<u32>,
    opts: &PairOptions,
    out: &mut Vec<Pair>,
) {
    let d = Element::new(Table::Doc, doc_index as u32);
    for (f, inst) in doc.global_meta.iter().enumerate() {
        if let (Some(z), true) = (inst, opts.global_enabled.get(f).copied().unwrap_or(true)) {
            out.push(Pair::new(Element::new(Table::Global(f as u16), *z), d));
        }
    }
    if let Some(l) = train_label {
        out.push(Pair::new(Element::new(Table::Label, l), d));
    }
    for (f, insts) in doc.local_meta.iter().enumerate() {
        if opts.local_enabled.get(f).copied().unwrap_or(true) {
            for &t in insts {
                out.push(Pair::new(d, Element::new(Table::Local(f as u16), t)));
            }
        }
    }
    for &w in &doc.tokens {
        out.push(Pair::new(d, Element::new(Table::Word, w)));
    }
    if opts.context {
        let n = doc.tokens.len();
        for i in 0..n {
            let lo = i.saturating_sub(opts.window);
            let hi = (i + opts.window).min(n.saturating_sub(1));
            let center = Element::new(Table::Word, doc.tokens[i]);
            for j in (lo..=hi).filter(|&j| j != i) {
                out.push(Pair::new(center, Element::new(Table::Context, doc.tokens[j])));
            }
        }
    }
}

/// Pair stream of a whole corpus; labels come only from the training split.
pub fn corpus_pairs(docs: &[Document], split: &CorpusSplit, opts: &PairOptions) -> Vec<Pair> {
    let labels = split.training_labels(docs.len());
    let mut out = Vec::new();
    for (i, doc) in docs.iter().enumerate() {
        positive_pairs(i, doc, labels[i], opts, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(window: usize) -> PairOptions {
        PairOptions {
            window,
            global_enabled: vec![true],
            local_enabled: vec![true],
            context: true,
        }
    }

    fn doc(tokens: Vec<u32>, user: Option<u32>, tags: Vec<u32>, label: Option<u32>) -> Document {
        Document {
            id: "d".into(),
            tokens,
            global_meta: vec![user],
            local_meta: vec![tags],
            label,
        }
    }

    fn el(t: Table, r: u32) -> Element {
        Element::new(t, r)
    }

    #[test]
    fn unlabeled_doc_with_user_and_tag_only() {
        let d = doc(vec![], Some(3), vec![7], Some(1));
        let mut out = Vec::new();
        // gold label present but not in the training split
        positive_pairs(0, &d, None, &opts(5), &mut out);
        let doc0 = el(Table::Doc, 0);
        assert_eq!(
            out,
            vec![
                Pair::new(el(Table::Global(0), 3), doc0),
                Pair::new(doc0, el(Table::Local(0), 7)),
            ]
        );
    }

    #[test]
    fn labeled_doc_window_one() {
        // tokens a=0, b=1, c=2
        let d = doc(vec![0, 1, 2], Some(9), vec![], Some(4));
        let mut out = Vec::new();
        positive_pairs(5, &d, Some(4), &opts(1), &mut out);
        let dd = el(Table::Doc, 5);
        let w = |i| el(Table::Word, i);
        let c = |i| el(Table::Context, i);
        let want = vec![
            Pair::new(el(Table::Global(0), 9), dd),
            Pair::new(el(Table::Label, 4), dd),
            Pair::new(dd, w(0)),
            Pair::new(dd, w(1)),
            Pair::new(dd, w(2)),
            Pair::new(w(0), c(1)),
            Pair::new(w(1), c(0)),
            Pair::new(w(1), c(2)),
            Pair::new(w(2), c(1)),
        ];
        assert_eq!(out, want);
    }

    #[test]
    fn full_window_covers_every_ordered_pair() {
        let tokens: Vec<u32> = (0..6).collect();
        let d = doc(tokens.clone(), None, vec![], None);
        let mut out = Vec::new();
        positive_pairs(0, &d, None, &opts(10), &mut out);
        let ctx: Vec<(u32, u32)> = out
            .iter()
            .filter(|p| p.target.table == Table::Context)
            .map(|p| (p.context.row, p.target.row))
            .collect();
        assert_eq!(ctx.len(), 6 * 5);
        for i in 0..6 {
            for j in 0..6 {
                let n = ctx.iter().filter(|&&p| p == (i, j)).count();
                assert_eq!(n, usize::from(i != j));
            }
        }
    }

    #[test]
    fn disabled_fields_and_context_are_skipped() {
        let d = doc(vec![0, 1], Some(1), vec![2], None);
        let o = PairOptions {
            window: 2,
            global_enabled: vec![false],
            local_enabled: vec![true],
            context: false,
        };
        let mut out = Vec::new();
        positive_pairs(0, &d, None, &o, &mut out);
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|p| p.context.table == Table::Doc));
    }

    #[test]
    fn label_gating_by_split() {
        let docs = vec![
            doc(vec![0], None, vec![], Some(0)),
            doc(vec![0], None, vec![], Some(0)),
        ];
        let split = CorpusSplit {
            labeled: vec![vec![1]],
            unlabeled: vec![],
            test: vec![0],
        };
        let pairs = corpus_pairs(&docs, &split, &opts(1));
        let label_pairs: Vec<_> = pairs
            .iter()
            .filter(|p| p.context.table == Table::Label)
            .collect();
        assert_eq!(label_pairs.len(), 1);
        assert_eq!(label_pairs[0].target, el(Table::Doc, 1));
    }
}
