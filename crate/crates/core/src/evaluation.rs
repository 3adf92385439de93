//! Clustering-based evaluation of a feature selection: K-means on the
//! row-normalized selected columns, scored by matched accuracy and NMI.

use ndarray::{Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AttributedNetwork, FeatureScores};
use crate::solver::top_d_features;

pub const DEFAULT_RUNS: usize = 20;
pub const DEFAULT_KMEANS_ITERS: usize = 300;

/// Scales every nonzero row to unit l2 norm; zero rows stay zero.
pub fn normalize_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_pp(x: &Array2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut centers = Array2::zeros((k, x.ncols()));
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&x.row(first));
    let mut closest: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(first))).collect();
    let mut chosen = vec![false; n];
    chosen[first] = true;
    for c in 1..k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in closest.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            // guard against rounding leaving a zero-weight index selected
            if closest[pick] == 0.0 {
                pick = closest.iter().rposition(|&d| d > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            // all remaining points coincide with a center
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        centers.row_mut(c).assign(&x.row(pick));
        for (i, d) in closest.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(pick)));
        }
    }
    centers
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// Stops when assignments no longer change or after `max_iters` rounds. A
/// cluster that loses all its points takes over the point farthest from its
/// own center (drawn from clusters that keep at least one member).
pub fn kmeans_cluster(x: &Array2<f64>, k: usize, seed: u64, max_iters: usize) -> Result<KMeansResult> {
    let n = x.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "cluster count {k} must be in 1..={n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = kmeans_pp(x, k, &mut rng);
    let mut labels = vec![usize::MAX; n];
    let mut dists = vec![0.0; n];
    let mut iterations = 0;

    for it in 1..=max_iters.max(1) {
        iterations = it;
        let mut changed = false;
        for i in 0..n {
            let (mut best, mut best_d) = (0, f64::INFINITY);
            for c in 0..k {
                let d = sq_dist(x.row(i), centers.row(c));
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
            dists[i] = best_d;
        }

        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        while let Some(empty) = counts.iter().position(|&c| c == 0) {
            let far = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                .expect("k <= n guarantees a donor cluster");
            counts[labels[far]] -= 1;
            counts[empty] += 1;
            labels[far] = empty;
            dists[far] = 0.0;
            changed = true;
        }

        centers.fill(0.0);
        for (i, &l) in labels.iter().enumerate() {
            let mut row = centers.row_mut(l);
            row += &x.row(i);
        }
        for (mut row, &c) in centers.rows_mut().into_iter().zip(&counts) {
            row /= c as f64;
        }

        if !changed {
            break;
        }
    }

    let inertia = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(x.row(i), centers.row(l)))
        .sum();
    Ok(KMeansResult {
        labels,
        inertia,
        iterations,
    })
}

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian method
/// with potentials). Returns the column assigned to each row.
fn min_cost_assignment(cost: &Array2<f64>) -> Vec<usize> {
    let n = cost.nrows();
    // 1-based arrays; index 0 is the virtual start column
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[[r0 - 1, j - 1]] - u[r0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = col0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    col1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[owner[j] - 1] = j - 1;
    }
    assignment
}

/// Cluster × class counts, padded to a square matrix.
fn contingency(pred: &[usize], truth: &[usize]) -> Result<Array2<f64>> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument("no labels to compare".into()));
    }
    let kp = pred.iter().max().map_or(0, |m| m + 1);
    let kt = truth.iter().max().map_or(0, |m| m + 1);
    let size = kp.max(kt);
    let mut table = Array2::zeros((size, size));
    for (&p, &t) in pred.iter().zip(truth) {
        table[[p, t]] += 1.0;
    }
    Ok(table)
}

/// Fraction of points whose cluster, mapped to a class by the best
/// one-to-one matching, equals their label.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let max = table.iter().copied().fold(0.0, f64::max);
    let cost = table.mapv(|c| max - c);
    let assignment = min_cost_assignment(&cost);
    let matched: f64 = assignment
        .iter()
        .enumerate()
        .map(|(cluster, &class)| table[[cluster, class]])
        .sum();
    Ok(matched / pred.len() as f64)
}

fn entropy(counts: ArrayView1<'_, f64>, n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information over the larger of the two entropies. Two
/// single-cluster partitions score 0.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let n = pred.len() as f64;
    let rows = table.sum_axis(Axis(1));
    let cols = table.sum_axis(Axis(0));
    let mut mi = 0.0;
    for ((i, j), &c) in table.indexed_iter() {
        if c > 0.0 {
            mi += c / n * (n * c / (rows[i] * cols[j])).ln();
        }
    }
    let denom = entropy(rows.view(), n).max(entropy(cols.view(), n));
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunScore {
    pub seed: u64,
    pub acc: f64,
    pub nmi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub d: usize,
    pub runs: usize,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub nmi_mean: f64,
    pub nmi_std: f64,
    pub per_run: Vec<RunScore>,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Clusters the given feature columns `runs` times (seeds
/// `base_seed..base_seed + runs`) with `k` = class count and aggregates.
pub fn evaluate_columns(net: &AttributedNetwork, columns: &[usize], runs: usize, base_seed: u64) -> Result<EvaluationReport> {
    let truth = net.labels().ok_or(Error::MissingLabels)?;
    let k = net.class_count().expect("labels present");
    if runs == 0 {
        return Err(Error::InvalidArgument("runs must be at least 1".into()));
    }
    if let Some(&bad) = columns.iter().find(|&&c| c >= net.feature_count()) {
        return Err(Error::DimensionMismatch(format!(
            "column {bad} out of range for {} features",
            net.feature_count()
        )));
    }
    let x = normalize_rows(&net.features().select_columns(columns));
    let per_run = (0..runs)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed.wrapping_add(i as u64);
            let clusters = kmeans_cluster(&x, k, seed, DEFAULT_KMEANS_ITERS)?;
            Ok(RunScore {
                seed,
                acc: accuracy(&clusters.labels, truth)?,
                nmi: nmi(&clusters.labels, truth)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (acc_mean, acc_std) = mean_std(per_run.iter().map(|r| r.acc));
    let (nmi_mean, nmi_std) = mean_std(per_run.iter().map(|r| r.nmi));
    Ok(EvaluationReport {
        d: columns.len(),
        runs,
        acc_mean,
        acc_std,
        nmi_mean,
        nmi_std,
        per_run,
    })
}

/// Evaluates the top-`d` features by score.
pub fn evaluate_selection(
    net: &AttributedNetwork,
    scores: &FeatureScores,
    d: usize,
    runs: usize,
    base_seed: u64,
) -> Result<EvaluationReport> {
    if net.labels().is_none() {
        return Err(Error::MissingLabels);
    }
    if scores.len() != net.feature_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores for {} features",
            scores.len(),
            net.feature_count()
        )));
    }
    let columns = top_d_features(scores, d)?;
    evaluate_columns(net, &columns, runs, base_seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn row_normalization() {
        let x = array![[3.0, 4.0], [0.0, 0.0]];
        assert_eq!(normalize_rows(&x), array![[0.6, 0.8], [0.0, 0.0]]);
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 1, 0, 0], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 1, 1, 1], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert!(accuracy(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn accuracy_with_more_clusters_than_classes() {
        // cluster 2 has no class partner and counts as wrong
        assert_eq!(accuracy(&[0, 1, 2, 2], &[0, 1, 1, 1]).unwrap(), 0.75);
    }

    #[test]
    fn nmi_examples() {
        assert!((nmi(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap() - 1.0).abs() < 1e-12);
        assert!((nmi(&[1, 1, 0, 0], &[0, 0, 1, 1]).unwrap() - 1.0).abs() < 1e-12);
        assert!(nmi(&[0, 1, 0, 1], &[0, 0, 1, 1]).unwrap().abs() < 1e-12);
        assert_eq!(nmi(&[0, 0, 0], &[0, 0, 0]).unwrap(), 0.0);
    }

    #[test]
    fn kmeans_k_equals_n() {
        let x = array![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [5.0, 5.0]];
        let res = kmeans_cluster(&x, 4, 3, 300).unwrap();
        let mut labels = res.labels.clone();
        labels.sort_unstable();
        assert_eq!(labels, vec![0, 1, 2, 3]);
        assert_eq!(res.inertia, 0.0);
        assert!(kmeans_cluster(&x, 5, 3, 300).is_err());
    }

    #[test]
    fn kmeans_separates_two_clouds_deterministically() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Array2::from_shape_fn((40, 2), |(i, _)| {
            let base = if i < 20 { 0.0 } else { 10.0 };
            base + rng.random::<f64>()
        });
        let a = kmeans_cluster(&x, 2, 42, 300).unwrap();
        let b = kmeans_cluster(&x, 2, 42, 300).unwrap();
        assert_eq!(a, b);
        assert!(a.labels[..20].iter().all(|&l| l == a.labels[0]));
        assert!(a.labels[20..].iter().all(|&l| l == a.labels[20]));
        assert_ne!(a.labels[0], a.labels[20]);
    }

    #[test]
    fn kmeans_with_duplicate_points() {
        let x = array![[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]];
        let res = kmeans_cluster(&x, 2, 0, 10).unwrap();
        assert_eq!(res.labels.len(), 3);
        let mut seen = res.labels.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen, vec![0, 1]);
    }

    #[test]
    fn hungarian_small_cases() {
        let cost = array![[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]];
        let a = min_cost_assignment(&cost);
        let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum();
        assert_eq!(total, 5.0);
    }
}
