//! Rating and ranking metrics: MSE, NDCG, and the normalized Kendall tau
//! distance.

use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};

/// Mean squared error of equal-length, non-empty prediction/truth vectors.
pub fn mse(predictions: &[f64], truth: &[f64]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "mse needs matching non-empty inputs, got {} and {}",
            predictions.len(),
            truth.len()
        )));
    }
    let sum: f64 = predictions
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / predictions.len() as f64)
}

/// Discounted cumulative gain with the position-2 log base:
/// `rel_1 + sum_{i>=2} rel_i / log2(i)`.
pub fn dcg(relevances: &[f64]) -> f64 {
    relevances
        .iter()
        .enumerate()
        .map(|(idx, rel)| {
            let pos = idx + 1;
            if pos == 1 {
                *rel
            } else {
                rel / (pos as f64).log2()
            }
        })
        .sum()
}

/// Normalized DCG of a ranked relevance list against the ideal ordering;
/// 0 when the ideal gain is 0.
pub fn ndcg(ranked: &[f64], ideal: &[f64]) -> f64 {
    let idcg = dcg(ideal);
    if idcg == 0.0 {
        0.0
    } else {
        dcg(ranked) / idcg
    }
}

/// Normalized Kendall tau distance between two rankings of the same ids:
/// the fraction of discordant pairs. Rankings must cover identical id sets
/// with no duplicates.
pub fn kendall_tau_distance<T: Eq + Hash>(rank_a: &[T], rank_b: &[T]) -> Result<f64> {
    if rank_a.len() != rank_b.len() {
        return Err(Error::InvalidArgument(format!(
            "rankings differ in length: {} vs {}",
            rank_a.len(),
            rank_b.len()
        )));
    }
    let n = rank_a.len();
    if n < 2 {
        return Ok(0.0);
    }
    let pos_b: HashMap<&T, usize> = rank_b.iter().enumerate().map(|(i, t)| (t, i)).collect();
    if pos_b.len() != n {
        return Err(Error::InvalidArgument("duplicate ids in ranking".into()));
    }
    let mut mapped = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for id in rank_a {
        match pos_b.get(id) {
            Some(p) => {
                if seen[*p] {
                    return Err(Error::InvalidArgument("duplicate ids in ranking".into()));
                }
                seen[*p] = true;
                mapped.push(*p);
            }
            None => {
                return Err(Error::InvalidArgument(
                    "rankings cover different id sets".into(),
                ))
            }
        }
    }
    let mut discordant = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            if mapped[i] > mapped[j] {
                discordant += 1;
            }
        }
    }
    Ok(discordant as f64 / (n * (n - 1) / 2) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_cases() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((mse(&[1.0, 3.0], &[2.0, 5.0]).unwrap() - 2.5).abs() < 1e-12);
        assert!(mse(&[], &[]).is_err());
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mse_translation_invariant() {
        let p = [1.0, 2.0, 4.5];
        let t = [0.5, 2.5, 4.0];
        let base = mse(&p, &t).unwrap();
        let p2: Vec<f64> = p.iter().map(|x| x + 11.0).collect();
        let t2: Vec<f64> = t.iter().map(|x| x + 11.0).collect();
        assert!((mse(&p2, &t2).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn ndcg_cases() {
        assert!((ndcg(&[1.0, 1.0, 0.0], &[1.0, 1.0, 0.0]) - 1.0).abs() < 1e-12);
        let got = ndcg(&[0.0, 1.0, 1.0], &[1.0, 1.0, 0.0]);
        let expected = (1.0 + 1.0 / 3.0f64.log2()) / 2.0;
        assert!((got - expected).abs() < 1e-12);
        assert_eq!(ndcg(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
    }

    #[test]
    fn kendall_cases() {
        assert_eq!(kendall_tau_distance(&[1, 2, 3], &[1, 2, 3]).unwrap(), 0.0);
        assert_eq!(kendall_tau_distance(&[3, 2, 1], &[1, 2, 3]).unwrap(), 1.0);
        let d = kendall_tau_distance(&[1, 3, 2], &[1, 2, 3]).unwrap();
        assert!((d - 1.0 / 3.0).abs() < 1e-12);
        assert!(kendall_tau_distance(&[1, 2], &[1, 3]).is_err());
        assert!(kendall_tau_distance(&[1, 1], &[1, 2]).is_err());
    }

    #[test]
    fn ranking_metrics_match_brute_force_on_small_permutations() {
        // Exhaustive check against direct pair enumeration for n <= 5.
        fn permutations(n: usize) -> Vec<Vec<usize>> {
            if n == 1 {
                return vec![vec![0]];
            }
            let mut out = Vec::new();
            for p in permutations(n - 1) {
                for slot in 0..n {
                    let mut q: Vec<usize> = p.iter().map(|x| x + (*x >= slot) as usize).collect();
                    q.insert(0, slot);
                    out.push(q);
                }
            }
            out
        }
        for n in 2..=5usize {
            let identity: Vec<usize> = (0..n).collect();
            for perm in permutations(n) {
                // Brute-force discordant pairs against the identity.
                let mut disc = 0;
                for i in 0..n {
                    for j in (i + 1)..n {
                        if perm[i] > perm[j] {
                            disc += 1;
                        }
                    }
                }
                let expected = disc as f64 / (n * (n - 1) / 2) as f64;
                let got = kendall_tau_distance(&perm, &identity).unwrap();
                assert!((got - expected).abs() < 1e-12);

                // NDCG against a direct evaluation of the formula with
                // binary relevance "first half of ids are relevant".
                let rels: Vec<f64> = perm
                    .iter()
                    .map(|id| if *id < n / 2 { 1.0 } else { 0.0 })
                    .collect();
                let mut ideal = rels.clone();
                ideal.sort_by(|a, b| b.partial_cmp(a).unwrap());
                let mut dcg_direct = 0.0;
                let mut idcg_direct = 0.0;
                for i in 1..=n {
                    let denom = if i == 1 { 1.0 } else { (i as f64).log2() };
                    dcg_direct += rels[i - 1] / denom;
                    idcg_direct += ideal[i - 1] / denom;
                }
                let expected = if idcg_direct == 0.0 {
                    0.0
                } else {
                    dcg_direct / idcg_direct
                };
                assert!((ndcg(&rels, &ideal) - expected).abs() < 1e-12);
            }
        }
    }
}
