//! Semi-supervised label propagation: a Gaussian-kernel kNN graph over
//! context vectors, symmetrized and row-normalized, with labeled rows
//! clamped to one-hots while unlabeled mass diffuses to a fixed point.

use super::{Prediction, Strategy, WsdError};
use std::collections::{BTreeMap, BTreeSet};

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 1000;

/// A propagation instance: one node per context vector, a few of them
/// labeled with a class index into `classes`.
#[derive(Debug, Clone)]
pub struct LpProblem {
    /// Instance ids, parallel to `vectors`; must be distinct (they double
    /// as the deterministic tie-break for equidistant neighbors).
    pub node_ids: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
    /// node index → class index. Nodes not listed are unlabeled.
    pub labels: BTreeMap<usize, usize>,
    /// Class index → sense key.
    pub classes: Vec<String>,
    pub k: usize,
    /// Kernel bandwidth; `None` picks [`median_sigma`] of the vectors.
    pub sigma: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl LpProblem {
    pub fn new(
        node_ids: Vec<String>,
        vectors: Vec<Vec<f64>>,
        labels: BTreeMap<usize, usize>,
        classes: Vec<String>,
    ) -> LpProblem {
        LpProblem {
            node_ids,
            vectors,
            labels,
            classes,
            k: DEFAULT_K,
            sigma: None,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LpOutcome {
    /// One prediction per unlabeled node, in input order.
    pub predictions: Vec<Prediction>,
    pub iterations: usize,
    /// Final class distribution per node (labeled rows are exact one-hots).
    pub distributions: Vec<Vec<f64>>,
    /// Unlabeled nodes whose affinities all underflowed to zero; they keep
    /// the uniform distribution.
    pub isolated: Vec<usize>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median pairwise Euclidean distance, the default kernel bandwidth.
/// Degenerate all-coincident inputs fall back to 1.0.
pub fn median_sigma(vectors: &[Vec<f64>]) -> Result<f64, WsdError> {
    if vectors.len() < 2 {
        return Err(WsdError::TooFewVectors);
    }
    let mut dists = Vec::with_capacity(vectors.len() * (vectors.len() - 1) / 2);
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            dists.push(sq_dist(&vectors[i], &vectors[j]).sqrt());
        }
    }
    dists.sort_by(|a, b| a.total_cmp(b));
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 1 {
        dists[mid]
    } else {
        0.5 * (dists[mid - 1] + dists[mid])
    };
    Ok(if median == 0.0 { 1.0 } else { median })
}

fn validate(problem: &LpProblem) -> Result<(), WsdError> {
    let err = |msg: String| Err(WsdError::InvalidLp { msg });
    let n = problem.vectors.len();
    if n == 0 {
        return err("no nodes".to_string());
    }
    if problem.node_ids.len() != n {
        return err(format!(
            "{} node ids for {n} vectors",
            problem.node_ids.len()
        ));
    }
    let distinct: BTreeSet<&String> = problem.node_ids.iter().collect();
    if distinct.len() != n {
        return err("node ids must be distinct".to_string());
    }
    let dim = problem.vectors[0].len();
    for v in &problem.vectors {
        if v.len() != dim {
            return Err(WsdError::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
    }
    if problem.classes.is_empty() {
        return err("no classes".to_string());
    }
    let class_names: BTreeSet<&String> = problem.classes.iter().collect();
    if class_names.len() != problem.classes.len() {
        return err("class names must be distinct".to_string());
    }
    if problem.labels.is_empty() {
        return err("at least one node must be labeled".to_string());
    }
    for (&node, &class) in &problem.labels {
        if node >= n {
            return err(format!(
                "label on node {node}, but there are only {n} nodes"
            ));
        }
        if class >= problem.classes.len() {
            return err(format!("label class {class} out of range"));
        }
    }
    if problem.k == 0 || problem.k >= n {
        return err(format!("k={} must satisfy 1 ≤ k < n={n}", problem.k));
    }
    if let Some(sigma) = problem.sigma {
        if !sigma.is_finite() || sigma <= 0.0 {
            return err(format!("sigma={sigma} must be finite and positive"));
        }
    }
    if !problem.tol.is_finite() || problem.tol <= 0.0 {
        return err(format!("tol={} must be finite and positive", problem.tol));
    }
    if problem.max_iter == 0 {
        return err("max_iter must be ≥ 1".to_string());
    }
    Ok(())
}

/// Runs label propagation to convergence (max absolute entry change below
/// `tol`) or to `max_iter`, whichever comes first.
///
/// The graph keeps, for each node, Gaussian affinities to its `k` nearest
/// neighbors (Euclidean; equidistant candidates break ties by node id), is
/// symmetrized with an elementwise max, and is row-normalized into the
/// propagation operator. With no unlabeled nodes the prediction list is
/// empty.
pub fn propagate_labels(problem: &LpProblem) -> Result<LpOutcome, WsdError> {
    validate(problem)?;
    let n = problem.vectors.len();
    let c = problem.classes.len();
    let sigma = match problem.sigma {
        Some(s) => s,
        None => median_sigma(&problem.vectors)?,
    };

    let mut w = vec![vec![0.0; n]; n];
    for (i, row) in w.iter_mut().enumerate() {
        let d2: Vec<f64> = problem
            .vectors
            .iter()
            .map(|v| sq_dist(&problem.vectors[i], v))
            .collect();
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| {
            d2[a]
                .total_cmp(&d2[b])
                .then_with(|| problem.node_ids[a].cmp(&problem.node_ids[b]))
        });
        for &j in order.iter().take(problem.k) {
            row[j] = (-d2[j] / (sigma * sigma)).exp();
        }
    }
    // Symmetrize in place; the paired w[i][j] / w[j][i] writes need indices.
    #[allow(clippy::needless_range_loop)]
    for i in 0..n {
        for j in 0..i {
            let m = w[i][j].max(w[j][i]);
            w[i][j] = m;
            w[j][i] = m;
        }
        w[i][i] = 0.0;
    }
    let degree: Vec<f64> = w.iter().map(|row| row.iter().sum()).collect();

    let uniform = 1.0 / c as f64;
    let one_hot = |class: usize| {
        let mut row = vec![0.0; c];
        row[class] = 1.0;
        row
    };
    let mut y: Vec<Vec<f64>> = (0..n)
        .map(|i| match problem.labels.get(&i) {
            Some(&class) => one_hot(class),
            None => vec![uniform; c],
        })
        .collect();

    let mut iterations = 0;
    for _ in 0..problem.max_iter {
        let mut next = y.clone();
        let mut delta: f64 = 0.0;
        for i in 0..n {
            if let Some(&class) = problem.labels.get(&i) {
                next[i] = one_hot(class);
            } else if degree[i] > 0.0 {
                for cls in 0..c {
                    let mass: f64 = (0..n).map(|j| w[i][j] * y[j][cls]).sum();
                    next[i][cls] = mass / degree[i];
                }
            }
            // Zero-degree rows keep their previous (uniform) distribution.
            for cls in 0..c {
                delta = delta.max((next[i][cls] - y[i][cls]).abs());
            }
        }
        y = next;
        iterations += 1;
        if delta < problem.tol {
            break;
        }
    }

    let mut predictions = Vec::new();
    let mut isolated = Vec::new();
    for i in 0..n {
        if problem.labels.contains_key(&i) {
            continue;
        }
        if degree[i] == 0.0 {
            isolated.push(i);
        }
        let total: f64 = y[i].iter().sum();
        if total > 0.0 {
            for v in &mut y[i] {
                *v /= total;
            }
        }
        let (best, &mass) = y[i]
            .iter()
            .enumerate()
            .max_by(|a, b| {
                a.1.total_cmp(b.1)
                    .then_with(|| problem.classes[b.0].cmp(&problem.classes[a.0]))
            })
            .expect("at least one class");
        predictions.push(Prediction {
            instance_id: problem.node_ids[i].clone(),
            sense_key: Some(problem.classes[best].clone()),
            score: mass,
            strategy: Strategy::Lp,
        });
    }
    Ok(LpOutcome {
        predictions,
        iterations,
        distributions: y,
        isolated,
    })
}
