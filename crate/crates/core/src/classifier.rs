//! Convolutional classifier over frozen embeddings.
//!
//! Input rows are the word vectors of a document followed by its local
//! metadata vectors. Each filter slides over windows of `h` consecutive rows,
//! goes through a logistic activation and is max-pooled over positions. The
//! pooled features feed a fully connected softmax layer.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Document;
use crate::embedding::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::linalg::{dot, sigmoid};

pub const DEFAULT_WIDTHS: [usize; 4] = [2, 3, 4, 5];
pub const DEFAULT_MAPS: usize = 20;
/// Floor applied to the gold probability before taking its log.
pub const PROB_FLOOR: f64 = 1e-12;

const MAGIC: &[u8; 8] = b"MTXCNN\0\0";
const VERSION: u32 = 1;

/// Offsets of every parameter block inside the flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Layout {
    /// Per width: (width, weight offset, bias offset).
    banks: Vec<(usize, usize, usize)>,
    fc_w: usize,
    fc_b: usize,
    total: usize,
}

impl Layout {
    fn new(dim: usize, labels: usize, widths: &[usize], maps: usize) -> Self {
        let mut off = 0;
        let mut banks = Vec::with_capacity(widths.len());
        for &h in widths {
            let w = off;
            off += maps * h * dim;
            banks.push((h, w, off));
            off += maps;
        }
        let features = widths.len() * maps;
        let fc_w = off;
        off += features * labels;
        let fc_b = off;
        off += labels;
        Self {
            banks,
            fc_w,
            fc_b,
            total: off,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    dim: usize,
    num_labels: usize,
    widths: Vec<usize>,
    maps: usize,
    layout: Layout,
    params: Vec<f64>,
}

/// Document rows, `rows x dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Input {
    pub rows: usize,
    pub data: Vec<f64>,
}

impl Input {
    pub fn row(&self, r: usize, dim: usize) -> &[f64] {
        &self.data[r * dim..(r + 1) * dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub label: u32,
}

/// What backward needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    pub pooled: Vec<f64>,
    pub argmax: Vec<usize>,
    pub probs: Vec<f64>,
}

impl CnnModel {
    /// Parameters drawn uniformly from `[-0.05, 0.05]`.
    pub fn new(dim: usize, num_labels: usize, seed: u64) -> Result<Self> {
        Self::with_architecture(dim, num_labels, &DEFAULT_WIDTHS, DEFAULT_MAPS, seed)
    }

    pub fn with_architecture(
        dim: usize,
        num_labels: usize,
        widths: &[usize],
        maps: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut model = Self::zeros(dim, num_labels, widths, maps)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in &mut model.params {
            *p = rng.random_range(-0.05..=0.05);
        }
        Ok(model)
    }

    pub fn zeros(dim: usize, num_labels: usize, widths: &[usize], maps: usize) -> Result<Self> {
        if dim == 0 || num_labels == 0 || maps == 0 || widths.is_empty() || widths.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "invalid classifier shape: dim {dim}, labels {num_labels}, widths {widths:?}, maps {maps}"
            )));
        }
        let layout = Layout::new(dim, num_labels, widths, maps);
        Ok(Self {
            dim,
            num_labels,
            widths: widths.to_vec(),
            maps,
            params: vec![0.0; layout.total],
            layout,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn num_features(&self) -> usize {
        self.widths.len() * self.maps
    }

    /// Shortest input the filter bank accepts.
    pub fn min_rows(&self) -> usize {
        self.widths.iter().copied().max().unwrap_or(1)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn fc_weight(&self, feature: usize, label: usize) -> f64 {
        self.params[self.layout.fc_w + feature * self.num_labels + label]
    }

    /// Mutable view of the output bias, one entry per label.
    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        let start = self.layout.fc_b;
        &mut self.params[start..start + self.num_labels]
    }

    /// Feature `f` belongs to bank `f / maps`, map `f % maps`.
    fn filter(&self, bank: usize, map: usize) -> (&[f64], f64) {
        let (h, w, b) = self.layout.banks[bank];
        let len = h * self.dim;
        (&self.params[w + map * len..w + (map + 1) * len], self.params[b + map])
    }

    pub fn forward(&self, input: &Input) -> (Prediction, Cache) {
        assert!(
            input.rows >= self.min_rows(),
            "input has {} rows, filters need {}",
            input.rows,
            self.min_rows()
        );
        let dim = self.dim;
        let mut pooled = Vec::with_capacity(self.num_features());
        let mut argmax = Vec::with_capacity(self.num_features());
        for (bank, &(h, _, _)) in self.layout.banks.iter().enumerate() {
            let positions = input.rows - h + 1;
            for map in 0..self.maps {
                let (w, b) = self.filter(bank, map);
                let mut best = f64::NEG_INFINITY;
                let mut best_at = 0;
                for i in 0..positions {
                    let window = &input.data[i * dim..(i + h) * dim];
                    let c = sigmoid(dot(w, window) + b);
                    if c > best {
                        best = c;
                        best_at = i;
                    }
                }
                pooled.push(best);
                argmax.push(best_at);
            }
        }
        let probs = self.output(&pooled);
        let label = argmax_first(&probs);
        (
            Prediction {
                probs: probs.clone(),
                label,
            },
            Cache {
                pooled,
                argmax,
                probs,
            },
        )
    }

    fn output(&self, pooled: &[f64]) -> Vec<f64> {
        let l = self.num_labels;
        let mut logits = self.params[self.layout.fc_b..self.layout.fc_b + l].to_vec();
        for (f, &x) in pooled.iter().enumerate() {
            let row = &self.params[self.layout.fc_w + f * l..self.layout.fc_w + (f + 1) * l];
            for (z, &w) in logits.iter_mut().zip(row) {
                *z += x * w;
            }
        }
        softmax(&mut logits);
        logits
    }

    /// Adds the gradient of `-log q_gold` for one example into `grad`.
    pub fn backward(&self, input: &Input, cache: &Cache, gold: u32, grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let l = self.num_labels;
        let mut dlogit = cache.probs.clone();
        dlogit[gold as usize] -= 1.0;

        let fc_b = self.layout.fc_b;
        for (g, &d) in grad[fc_b..fc_b + l].iter_mut().zip(&dlogit) {
            *g += d;
        }
        let dim = self.dim;
        for (f, &x) in cache.pooled.iter().enumerate() {
            let base = self.layout.fc_w + f * l;
            let mut dpool = 0.0;
            for (k, &d) in dlogit.iter().enumerate() {
                grad[base + k] += x * d;
                dpool += self.fc_weight(f, k) * d;
            }
            // the pooled value is the activation at the argmax window only
            let dz = dpool * x * (1.0 - x);
            let (bank, map) = (f / self.maps, f % self.maps);
            let (h, w_off, b_off) = self.layout.banks[bank];
            let start = cache.argmax[f];
            let window = &input.data[start * dim..(start + h) * dim];
            let w = w_off + map * h * dim;
            for (g, &v) in grad[w..w + h * dim].iter_mut().zip(window) {
                *g += dz * v;
            }
            grad[b_off + map] += dz;
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let io_err = |e| Error::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        let mut header = Vec::new();
        header.extend_from_slice(MAGIC);
        for v in [VERSION, self.dim as u32, self.num_labels as u32, self.maps as u32] {
            header.extend_from_slice(&v.to_le_bytes());
        }
        header.extend_from_slice(&(self.widths.len() as u32).to_le_bytes());
        for &h in &self.widths {
            header.extend_from_slice(&(h as u32).to_le_bytes());
        }
        header.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        w.write_all(&header).map_err(io_err)?;
        for p in &self.params {
            w.write_all(&p.to_le_bytes()).map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?)
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        let mut cur = bytes.as_slice();
        let mut take = |n: usize| -> Result<&[u8]> {
            if cur.len() < n {
                return Err(Error::Format("truncated model file".into()));
            }
            let (head, rest) = cur.split_at(n);
            cur = rest;
            Ok(head)
        };
        if take(8)? != MAGIC {
            return Err(Error::Format("not a classifier model file".into()));
        }
        let mut u32_at = || -> Result<usize> {
            Ok(u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize)
        };
        let version = u32_at()?;
        if version != VERSION as usize {
            return Err(Error::Format(format!("unsupported model version {version}")));
        }
        let dim = u32_at()?;
        let labels = u32_at()?;
        let maps = u32_at()?;
        let n_widths = u32_at()?;
        let widths = (0..n_widths).map(|_| u32_at()).collect::<Result<Vec<_>>>()?;
        let count = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
        let mut model = Self::zeros(dim, labels, &widths, maps)?;
        if count != model.params.len() {
            return Err(Error::Format(format!(
                "model declares {count} parameters, shape needs {}",
                model.params.len()
            )));
        }
        for p in &mut model.params {
            *p = f64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
        }
        if !cur.is_empty() {
            return Err(Error::Format("trailing bytes after model parameters".into()));
        }
        Ok(model)
    }
}

fn softmax(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in z.iter_mut() {
        *v /= total;
    }
}

/// Lowest index wins ties.
fn argmax_first(v: &[f64]) -> u32 {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best as u32
}

/// Word rows, then local metadata rows by field, zero-padded to `min_rows`.
pub fn embed_input(doc: &Document, space: &EmbeddingSpace, min_rows: usize) -> Input {
    let dim = space.dim();
    let mut data = Vec::new();
    let mut push = |m: &crate::embedding::Matrix, r: u32| {
        if (r as usize) < m.rows() {
            data.extend_from_slice(m.row(r as usize));
        }
    };
    for &w in &doc.tokens {
        push(&space.word, w);
    }
    for (field, rows) in doc.local_meta.iter().enumerate() {
        if let Some(m) = space.local.get(field) {
            for &r in rows {
                push(m, r);
            }
        }
    }
    let rows = (data.len() / dim).max(min_rows);
    data.resize(rows * dim, 0.0);
    Input { rows, data }
}

/// Summed negative log-likelihood of the gold labels.
pub fn loss(predictions: &[Prediction], gold: &[u32]) -> Result<f64> {
    if predictions.len() != gold.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: gold.len(),
        });
    }
    Ok(predictions
        .iter()
        .zip(gold)
        .map(|(p, &g)| -p.probs[g as usize].max(PROB_FLOOR).ln())
        .sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            learning_rate: 0.02,
            epochs: 300,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be nonnegative, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

pub fn train_classifier(
    space: &EmbeddingSpace,
    docs: &[&Document],
    config: &TrainConfig,
) -> Result<CnnModel> {
    train_with_monitor(space, docs, config, |_, _| {})
}

/// Mini-batch SGD on the summed batch loss. `monitor` runs after each epoch.
pub fn train_with_monitor(
    space: &EmbeddingSpace,
    docs: &[&Document],
    config: &TrainConfig,
    mut monitor: impl FnMut(usize, &CnnModel),
) -> Result<CnnModel> {
    config.validate()?;
    if docs.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let num_labels = space.label.rows();
    for d in docs {
        match d.label {
            Some(l) if (l as usize) < num_labels => {}
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "training document {} has no valid label",
                    d.id
                )))
            }
        }
    }
    let mut model = CnnModel::new(space.dim(), num_labels, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let min_rows = model.min_rows();
    let inputs: Vec<Input> = docs.iter().map(|d| embed_input(d, space, min_rows)).collect();
    let mut order: Vec<usize> = (0..docs.len()).collect();
    let mut grad = vec![0.0; model.params.len()];

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let (_, cache) = model.forward(&inputs[i]);
                let gold = docs[i].label.expect("checked above");
                model.backward(&inputs[i], &cache, gold, &mut grad);
            }
            for (p, g) in model.params.iter_mut().zip(&grad) {
                *p -= config.learning_rate * g;
            }
        }
        monitor(epoch, &model);
    }
    Ok(model)
}

pub fn predict(model: &CnnModel, space: &EmbeddingSpace, docs: &[&Document]) -> Vec<Prediction> {
    docs.iter()
        .map(|d| model.forward(&embed_input(d, space, model.min_rows())).0)
        .collect()
}
