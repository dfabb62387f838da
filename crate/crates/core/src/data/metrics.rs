use ndarray::{Array1, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{tv_gap, DiscreteMeasureNetwork};

/// Fraction of samples closer to the true match.
///
/// For each `(i, t)` in the correspondence, counts the columns `k ≠ t` whose
/// score `matching[i, k]` strictly exceeds `matching[i, t]` (higher score =
/// better match), divides by the number of other columns and averages.
pub fn foscttm(matching: ArrayView2<f64>, correspondence: &[(usize, usize)]) -> Result<f64> {
    if correspondence.is_empty() {
        return Err(Error::EmptyCorrespondence);
    }
    let (n, m) = matching.dim();
    let mut total = 0.0;
    for &(i, t) in correspondence {
        if i >= n || t >= m {
            return Err(Error::DimensionMismatch(format!(
                "pair ({i}, {t}) outside the {n}x{m} score matrix"
            )));
        }
        if m > 1 {
            let truth = matching[[i, t]];
            let closer = matching.row(i).iter().filter(|&&s| s > truth).count();
            total += closer as f64 / (m - 1) as f64;
        }
    }
    Ok(total / correspondence.len() as f64)
}

fn classify(train: &[usize], features: ArrayView2<f64>, labels: &[usize], query: usize, k: usize) -> usize {
    let mut by_distance: Vec<(f64, usize)> = train
        .iter()
        .map(|&t| {
            let d = (&features.row(t) - &features.row(query)).mapv(|x| x * x).sum();
            (d, t)
        })
        .collect();
    by_distance.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut votes = std::collections::BTreeMap::new();
    for &(_, t) in by_distance.iter().take(k) {
        *votes.entry(labels[t]).or_insert(0usize) += 1;
    }
    // BTreeMap iterates labels in ascending order; keep the first maximum
    let mut best = (0, usize::MAX);
    for (&label, &count) in &votes {
        if count > best.0 {
            best = (count, label);
        }
    }
    best.1
}

/// Mean and standard deviation of the k-NN test error over random
/// stratified splits. Each class contributes `round(label_rate · size)`
/// training points; trial `t` draws its split from `seed + t`.
pub fn knn_classify(
    features: ArrayView2<f64>,
    labels: &[usize],
    k: usize,
    label_rate: f64,
    trials: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let n = features.nrows();
    if labels.len() != n {
        return Err(Error::LengthMismatch { left: labels.len(), right: n });
    }
    if !(label_rate > 0.0 && label_rate < 1.0) {
        return Err(Error::DegenerateSplit(format!("label rate {label_rate} outside (0, 1)")));
    }
    if trials == 0 || k == 0 {
        return Err(Error::InvalidConfig("k and trials must be positive".into()));
    }
    let mut classes: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, &l) in labels.iter().enumerate() {
        classes.entry(l).or_default().push(i);
    }
    let train_size: usize = classes
        .values()
        .map(|members| (label_rate * members.len() as f64).round() as usize)
        .sum();
    if k > train_size || train_size >= n {
        return Err(Error::DegenerateSplit(format!(
            "{train_size} training points of {n} cannot serve k = {k}"
        )));
    }
    let errors: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
            let mut train = Vec::with_capacity(train_size);
            let mut test = Vec::with_capacity(n - train_size);
            for members in classes.values() {
                let mut shuffled = members.clone();
                shuffled.shuffle(&mut rng);
                let cut = (label_rate * members.len() as f64).round() as usize;
                train.extend_from_slice(&shuffled[..cut]);
                test.extend_from_slice(&shuffled[cut..]);
            }
            let wrong = test
                .iter()
                .filter(|&&q| classify(&train, features, labels, q, k) != labels[q])
                .count();
            wrong as f64 / test.len() as f64
        })
        .collect();
    let mean = errors.iter().sum::<f64>() / trials as f64;
    let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / trials as f64;
    Ok((mean, var.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PerturbMode {
    /// `a'_i = a_i (1 + η_i)` with `η_i ~ U[-ε, ε]`, so that
    /// `(1-ε)a ≤ a' ≤ (1+ε)a` entrywise.
    Multiplicative,
}

/// Reweights a network; the kernel is left untouched.
pub fn perturb_measure(net: &DiscreteMeasureNetwork, eps: f64, mode: PerturbMode, seed: u64) -> Result<DiscreteMeasureNetwork> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::InvalidConfig(format!("perturbation size {eps} outside [0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Array1<f64> = match mode {
        PerturbMode::Multiplicative => net
            .weights()
            .iter()
            .map(|&a| if eps > 0.0 { a * (1.0 + rng.random_range(-eps..=eps)) } else { a })
            .collect(),
    };
    let out = net.with_weights(weights)?;
    let gap = tv_gap(net.weights().as_slice().expect("contiguous"), out.weights().as_slice().expect("contiguous"))?;
    assert!(gap <= eps * net.mass() * (1.0 + 1e-12), "perturbation moved {gap} > {eps}·mass");
    Ok(out)
}
