use crate::linalg::{axpy, dot, log_sigmoid, normalize, sigmoid};

use super::{EmbeddingSpace, Element, Pair};

/// Sampled objective of one pair:
/// `log s(a.b) + sum_n log s(-a.n)` with `s` the logistic function.
pub fn pair_objective(a: &[f64], b: &[f64], negatives: &[&[f64]]) -> f64 {
    log_sigmoid(dot(a, b)) + negatives.iter().map(|n| log_sigmoid(-dot(a, n))).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairGradients {
    pub context: Vec<f64>,
    pub target: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

/// Analytic gradient of [`pair_objective`] with respect to every input row.
pub fn pair_gradients(a: &[f64], b: &[f64], negatives: &[&[f64]]) -> PairGradients {
    let g = 1.0 - sigmoid(dot(a, b));
    let mut ga: Vec<f64> = b.iter().map(|v| g * v).collect();
    let gb: Vec<f64> = a.iter().map(|v| g * v).collect();
    let gn = negatives
        .iter()
        .map(|n| {
            let s = sigmoid(dot(a, n));
            axpy(-s, n, &mut ga);
            a.iter().map(|v| -s * v).collect()
        })
        .collect();
    PairGradients {
        context: ga,
        target: gb,
        negatives: gn,
    }
}

/// Reusable buffers for [`step_with`].
#[derive(Debug, Default)]
pub(crate) struct Scratch {
    a_old: Vec<f64>,
    grad_a: Vec<f64>,
    neg_scale: Vec<f64>,
}

/// Gradient ascent on the pair objective followed by re-projection of every
/// touched row. `negatives` index rows of the target's table.
pub fn sgd_step(space: &mut EmbeddingSpace, pair: Pair, negatives: &[u32], lr: f64) {
    step_with(space, pair, negatives, lr, true, &mut Scratch::default());
}

pub(crate) fn step_with(
    space: &mut EmbeddingSpace,
    pair: Pair,
    negatives: &[u32],
    lr: f64,
    project: bool,
    scratch: &mut Scratch,
) {
    if lr == 0.0 {
        return;
    }
    let neg_table = pair.target.table;
    scratch.a_old.clear();
    scratch.a_old.extend_from_slice(space.vector(pair.context));

    // all gradients from pre-update values
    let b = space.vector(pair.target);
    let g = 1.0 - sigmoid(dot(&scratch.a_old, b));
    scratch.grad_a.clear();
    scratch.grad_a.extend(b.iter().map(|v| g * v));
    scratch.neg_scale.clear();
    for &n in negatives {
        let row = space.vector(Element::new(neg_table, n));
        let s = sigmoid(dot(&scratch.a_old, row));
        axpy(-s, row, &mut scratch.grad_a);
        scratch.neg_scale.push(s);
    }

    let targets = space.matrix_mut(neg_table);
    axpy(lr * g, &scratch.a_old, targets.row_mut(pair.target.row as usize));
    for (&n, &s) in negatives.iter().zip(&scratch.neg_scale) {
        axpy(-lr * s, &scratch.a_old, targets.row_mut(n as usize));
    }
    if project {
        normalize(targets.row_mut(pair.target.row as usize));
        for &n in negatives {
            normalize(targets.row_mut(n as usize));
        }
    }
    let ctx = space.matrix_mut(pair.context.table).row_mut(pair.context.row as usize);
    axpy(lr, &scratch.grad_a, ctx);
    if project {
        normalize(ctx);
    }
}
