//! Joint spherical embedding of words, documents, labels and metadata.
//!
//! Every relation of the generative story becomes a stream of
//! `(context, target)` pairs and is fit with negative-sampling SGD. All rows
//! live on the unit sphere; touched rows are re-projected after each update.

mod io;
mod pairs;
mod sgd;
mod train;

pub use io::{load_space, save_space, TableNames};
pub use pairs::{corpus_pairs, positive_pairs, Pair, PairOptions};
pub use sgd::{pair_gradients, pair_objective, sgd_step, PairGradients};
pub use train::{
    estimate_log_likelihood, train, train_with_monitor, LikelihoodProbe, NoiseTables,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::{MetadataSchema, Vocabulary};
use crate::error::{Error, Result};
use crate::linalg::{dot, normalize};

/// Which embedding matrix an element lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Table {
    /// `e_w`, words as centers and as document targets.
    Word,
    /// `e'_w`, words as context targets.
    Context,
    Doc,
    Label,
    /// Instances of the i-th global metadata field.
    Global(u16),
    /// Instances of the i-th local metadata field.
    Local(u16),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Element {
    pub table: Table,
    pub row: u32,
}

impl Element {
    pub fn new(table: Table, row: u32) -> Self {
        Self { table, row }
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            rows,
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn from_vec(rows: usize, dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * dim);
        Self { rows, dim, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn normalize_rows(&mut self) {
        self.data.chunks_exact_mut(self.dim).for_each(normalize);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpace {
    dim: usize,
    pub word: Matrix,
    pub context: Matrix,
    pub doc: Matrix,
    pub label: Matrix,
    pub global: Vec<Matrix>,
    pub local: Vec<Matrix>,
}

impl EmbeddingSpace {
    /// Assembles a space from explicit tables; every table must share `dim`.
    pub fn from_tables(
        dim: usize,
        word: Matrix,
        context: Matrix,
        doc: Matrix,
        label: Matrix,
        global: Vec<Matrix>,
        local: Vec<Matrix>,
    ) -> Result<Self> {
        let space = Self {
            dim,
            word,
            context,
            doc,
            label,
            global,
            local,
        };
        for t in space.tables() {
            if space.matrix(t).dim() != dim {
                return Err(Error::LengthMismatch {
                    left: dim,
                    right: space.matrix(t).dim(),
                });
            }
        }
        Ok(space)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self, table: Table) -> &Matrix {
        match table {
            Table::Word => &self.word,
            Table::Context => &self.context,
            Table::Doc => &self.doc,
            Table::Label => &self.label,
            Table::Global(i) => &self.global[i as usize],
            Table::Local(i) => &self.local[i as usize],
        }
    }

    pub fn matrix_mut(&mut self, table: Table) -> &mut Matrix {
        match table {
            Table::Word => &mut self.word,
            Table::Context => &mut self.context,
            Table::Doc => &mut self.doc,
            Table::Label => &mut self.label,
            Table::Global(i) => &mut self.global[i as usize],
            Table::Local(i) => &mut self.local[i as usize],
        }
    }

    #[inline]
    pub fn vector(&self, el: Element) -> &[f64] {
        self.matrix(el.table).row(el.row as usize)
    }

    /// All tables in storage order.
    pub fn tables(&self) -> Vec<Table> {
        let mut t = vec![Table::Word, Table::Context, Table::Doc, Table::Label];
        t.extend((0..self.global.len()).map(|i| Table::Global(i as u16)));
        t.extend((0..self.local.len()).map(|i| Table::Local(i as u16)));
        t
    }

    pub fn normalize_all(&mut self) {
        for t in self.tables() {
            self.matrix_mut(t).normalize_rows();
        }
    }

    /// Largest `| ||row|| - 1 |` over every matrix.
    pub fn max_norm_deviation(&self) -> f64 {
        self.tables()
            .into_iter()
            .flat_map(|t| {
                let m = self.matrix(t);
                (0..m.rows()).map(move |r| (dot(m.row(r), m.row(r)).sqrt() - 1.0).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// When rows are pulled back onto the unit sphere during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    /// After every update of a row.
    EveryStep,
    /// Once per completed epoch; rows move freely in between.
    EveryEpoch,
    /// Never during training. Rows are free parameters and only the spaces
    /// handed out (per-epoch snapshots and the result) are projected.
    Output,
}

impl std::str::FromStr for Projection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "step" => Ok(Projection::EveryStep),
            "epoch" => Ok(Projection::EveryEpoch),
            "output" => Ok(Projection::Output),
            _ => Err(Error::InvalidConfig(format!(
                "projection must be `step`, `epoch` or `output`, got `{s}`"
            ))),
        }
    }
}

impl std::fmt::Display for Projection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Projection::EveryStep => "step",
            Projection::EveryEpoch => "epoch",
            Projection::Output => "output",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedConfig {
    pub dim: usize,
    /// Context window half-width `h`.
    pub window: usize,
    /// Negatives per positive pair.
    pub negatives: usize,
    pub learning_rate: f64,
    pub learning_rate_floor: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Metadata fields left out of the pair stream (ablations).
    pub exclude_fields: Vec<String>,
    /// Emit word -> context pairs.
    pub use_context: bool,
    /// `> 1` switches to lock-free parallel updates (non-deterministic).
    pub threads: usize,
    pub projection: Projection,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            window: 5,
            negatives: 5,
            learning_rate: 0.05,
            learning_rate_floor: 1e-4,
            epochs: 20,
            seed: 0,
            exclude_fields: Vec::new(),
            use_context: true,
            threads: 1,
            projection: Projection::Output,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidConfig(format!("dim {} < 2", self.dim)));
        }
        if self.window < 1 {
            return Err(Error::InvalidConfig("window must be >= 1".into()));
        }
        if self.negatives < 1 {
            return Err(Error::InvalidConfig("negatives must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate_floor >= 0.0) {
            return Err(Error::InvalidConfig("learning rates must be >= 0".into()));
        }
        if self.threads < 1 {
            return Err(Error::InvalidConfig("threads must be >= 1".into()));
        }
        Ok(())
    }

    pub fn pair_options(&self, schema: &MetadataSchema) -> PairOptions {
        PairOptions {
            window: self.window,
            global_enabled: schema
                .global_fields()
                .iter()
                .map(|f| !self.exclude_fields.contains(f))
                .collect(),
            local_enabled: schema
                .local_fields()
                .iter()
                .map(|f| !self.exclude_fields.contains(f))
                .collect(),
            context: self.use_context,
        }
    }
}

/// Gaussian draws projected to the sphere, i.e. uniform directions.
pub fn init_embeddings(
    vocab: &Vocabulary,
    num_docs: usize,
    config: &EmbedConfig,
) -> Result<EmbeddingSpace> {
    if config.dim < 2 {
        return Err(Error::InvalidConfig(format!("dim {} < 2", config.dim)));
    }
    let dim = config.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut random = |rows: usize| {
        let data: Vec<f64> = (0..rows * dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let mut m = Matrix::from_vec(rows, dim, data);
        m.normalize_rows();
        m
    };
    let word = random(vocab.words.len());
    let context = random(vocab.words.len());
    let doc = random(num_docs);
    let label = random(vocab.labels.len());
    let global = vocab.global.iter().map(|ns| random(ns.len())).collect();
    let local = vocab.local.iter().map(|ns| random(ns.len())).collect();
    Ok(EmbeddingSpace {
        dim,
        word,
        context,
        doc,
        label,
        global,
        local,
    })
}

/// Rows of `table` ranked by cosine to `query`; ties go to the lower index.
pub fn top_similar_to(space: &EmbeddingSpace, query: &[f64], k: usize, table: Table) -> Vec<(u32, f64)> {
    let m = space.matrix(table);
    let mut scored: Vec<(u32, f64)> = (0..m.rows())
        .map(|r| (r as u32, dot(query, m.row(r))))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

pub fn top_similar(space: &EmbeddingSpace, query: Element, k: usize, table: Table) -> Vec<(u32, f64)> {
    top_similar_to(space, space.vector(query), k, table)
}
