//! Top-k ranking metrics for recommendation lists.

use std::collections::HashSet;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn hits<T: Eq + Hash>(recommended: &[T], relevant: &HashSet<T>, k: usize) -> usize {
    recommended.iter().take(k).filter(|r| relevant.contains(r)).count()
}

/// `|top-k ∩ relevant| / |relevant|`.
pub fn recall_at_k<T: Eq + Hash>(recommended: &[T], relevant: &HashSet<T>, k: usize) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::EmptyRelevantSet);
    }
    Ok(hits(recommended, relevant, k) as f64 / relevant.len() as f64)
}

/// `|top-k ∩ relevant| / k`; the denominator stays `k` for short lists.
pub fn precision_at_k<T: Eq + Hash>(recommended: &[T], relevant: &HashSet<T>, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    hits(recommended, relevant, k) as f64 / k as f64
}

/// Reciprocal rank of the first relevant item, or 0 if it ranks below `k`.
pub fn reciprocal_rank_at_k<T: Eq + Hash>(recommended: &[T], relevant: &HashSet<T>, k: usize) -> f64 {
    recommended
        .iter()
        .take(k)
        .position(|r| relevant.contains(r))
        .map_or(0.0, |pos| 1.0 / (pos + 1) as f64)
}

/// Mean of [`reciprocal_rank_at_k`] over queries of `(recommended, relevant)`.
pub fn mrr_at_k<T: Eq + Hash>(queries: &[(Vec<T>, HashSet<T>)], k: usize) -> f64 {
    if queries.is_empty() {
        return 0.0;
    }
    queries
        .iter()
        .map(|(rec, rel)| reciprocal_rank_at_k(rec, rel, k))
        .sum::<f64>()
        / queries.len() as f64
}

/// Fraction of shown recommendations that were clicked.
pub fn ctr(clicked: usize, shown: usize) -> Result<f64> {
    if shown == 0 {
        return Err(Error::InvalidConfig("no recommendations were shown".into()));
    }
    if clicked > shown {
        return Err(Error::InvalidConfig(format!("{clicked} clicks exceed {shown} impressions")));
    }
    Ok(clicked as f64 / shown as f64)
}

/// One recommendation list with the items the user went on to click.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedQuery {
    #[serde(default)]
    pub query_id: String,
    pub recommended: Vec<String>,
    pub relevant: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub k: usize,
    pub queries: usize,
    pub recall_at_k: f64,
    pub precision_at_k: f64,
    pub mrr_at_k: f64,
    pub ctr: f64,
}

impl RankingReport {
    /// Averages per-query recall, precision and reciprocal rank. Clicked
    /// items are the relevant ones among the top `k` shown.
    pub fn evaluate(queries: &[RankedQuery], k: usize) -> Result<Self> {
        if queries.is_empty() {
            return Err(Error::InvalidConfig("no queries to evaluate".into()));
        }
        let (mut recall, mut precision, mut rr) = (0.0, 0.0, 0.0);
        let (mut clicked, mut shown) = (0, 0);
        for q in queries {
            let relevant: HashSet<&str> = q.relevant.iter().map(String::as_str).collect();
            let rec: Vec<&str> = q.recommended.iter().map(String::as_str).collect();
            recall += recall_at_k(&rec, &relevant, k)?;
            precision += precision_at_k(&rec, &relevant, k);
            rr += reciprocal_rank_at_k(&rec, &relevant, k);
            clicked += hits(&rec, &relevant, k);
            shown += rec.len().min(k);
        }
        let n = queries.len() as f64;
        Ok(Self {
            k,
            queries: queries.len(),
            recall_at_k: recall / n,
            precision_at_k: precision / n,
            mrr_at_k: rr / n,
            ctr: ctr(clicked, shown)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(items: &[u32]) -> HashSet<u32> {
        items.iter().copied().collect()
    }

    #[test]
    fn recall_examples() {
        let rec: Vec<u32> = (0..10).collect();
        assert_eq!(recall_at_k(&rec, &set(&[0, 1, 2, 50, 51]), 10).unwrap(), 0.6);
        assert_eq!(recall_at_k(&rec, &set(&[3, 4]), 10).unwrap(), 1.0);
        assert!(matches!(recall_at_k(&rec, &set(&[]), 10), Err(Error::EmptyRelevantSet)));
    }

    #[test]
    fn precision_examples() {
        let rec: Vec<u32> = (0..10).collect();
        assert_eq!(precision_at_k(&rec, &set(&[1, 5, 9]), 10), 0.3);
        assert_eq!(precision_at_k(&rec, &set(&[42]), 10), 0.0);
        assert_eq!(precision_at_k(&rec, &rec.iter().copied().collect(), 10), 1.0);
    }

    #[test]
    fn reciprocal_rank_examples() {
        let rec: Vec<u32> = (1..=20).collect();
        assert_eq!(reciprocal_rank_at_k(&rec, &set(&[2]), 10), 0.5);
        assert_eq!(reciprocal_rank_at_k(&rec, &set(&[1]), 10), 1.0);
        assert_eq!(reciprocal_rank_at_k(&rec, &set(&[10]), 10), 0.1);
        assert_eq!(reciprocal_rank_at_k(&rec, &set(&[11]), 10), 0.0);
        let queries = vec![(rec.clone(), set(&[2])), (rec, set(&[11]))];
        assert_eq!(mrr_at_k(&queries, 10), 0.25);
    }

    #[test]
    fn ctr_examples() {
        assert_eq!(ctr(0, 10).unwrap(), 0.0);
        assert_eq!(ctr(10, 10).unwrap(), 1.0);
        assert_eq!(ctr(3, 10).unwrap(), 0.3);
        assert!(ctr(1, 0).is_err());
    }

    #[test]
    fn report_aggregates_queries() {
        let q = |rec: &[&str], rel: &[&str]| RankedQuery {
            query_id: String::new(),
            recommended: rec.iter().map(|s| s.to_string()).collect(),
            relevant: rel.iter().map(|s| s.to_string()).collect(),
        };
        let r = RankingReport::evaluate(&[q(&["a", "b", "c"], &["b"]), q(&["d", "e"], &["x", "d"])], 2).unwrap();
        assert_eq!(r.recall_at_k, (1.0 + 0.5) / 2.0);
        assert_eq!(r.precision_at_k, (0.5 + 0.5) / 2.0);
        assert_eq!(r.mrr_at_k, (0.5 + 1.0) / 2.0);
        assert_eq!(r.ctr, 2.0 / 4.0);
    }

    proptest! {
        #[test]
        fn hit_count_identity(
            rec in prop::collection::vec(0u32..30, 0..15),
            rel in prop::collection::hash_set(0u32..30, 1..10),
            k in 1usize..15,
        ) {
            let h = hits(&rec, &rel, k);
            let p = precision_at_k(&rec, &rel, k);
            let r = recall_at_k(&rec, &rel, k).unwrap();
            prop_assert_eq!((p * k as f64).round() as usize, h);
            prop_assert_eq!((r * rel.len() as f64).round() as usize, h);
            prop_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&r));
        }

        #[test]
        fn reciprocal_rank_decreases_with_rank(first in 0usize..20, later in 0usize..20, k in 1usize..15) {
            let (a, b) = (first.min(later), first.max(later));
            let make = |pos: usize| -> Vec<u32> { (0..25).map(|i| if i == pos { 999 } else { i as u32 }).collect() };
            let rel = set(&[999]);
            prop_assert!(reciprocal_rank_at_k(&make(a), &rel, k) >= reciprocal_rank_at_k(&make(b), &rel, k));
        }

        #[test]
        fn mrr_ignores_query_order(ranks in prop::collection::vec(0usize..15, 1..8), rot in 0usize..8) {
            let queries: Vec<(Vec<u32>, HashSet<u32>)> = ranks.iter()
                .map(|&pos| ((0..15).map(|i| if i == pos { 999 } else { i as u32 }).collect(), set(&[999])))
                .collect();
            let mut rotated = queries.clone();
            rotated.rotate_left(rot % queries.len());
            prop_assert!((mrr_at_k(&queries, 10) - mrr_at_k(&rotated, 10)).abs() < 1e-12);
        }
    }
}
