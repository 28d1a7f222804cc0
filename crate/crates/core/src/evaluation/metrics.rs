use crate::data::min_adjacent_transpositions;
use crate::error::{Error, Result};

/// Correct / total counts behind a ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub correct: u64,
    pub total: u64,
}

impl Counts {
    pub fn ratio(self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// `(original score, scores of its own permutations)` for each original.
pub type ScoredGroup = (f64, Vec<f64>);

fn check_groups(scored: &[ScoredGroup], op: &'static str) -> Result<()> {
    if scored.is_empty() {
        return Err(Error::Empty(op));
    }
    if let Some(i) = scored.iter().position(|(_, p)| p.is_empty()) {
        return Err(Error::InvalidInput(format!(
            "{op}: original {i} has no permuted counterpart"
        )));
    }
    Ok(())
}

/// Pairs where an original outscores one of its own permutations. Ties
/// count as incorrect.
pub fn pra_counts(scored: &[ScoredGroup]) -> Result<Counts> {
    check_groups(scored, "pra")?;
    let mut c = Counts::default();
    for (orig, perms) in scored {
        c.total += perms.len() as u64;
        c.correct += perms.iter().filter(|&&p| *orig > p).count() as u64;
    }
    Ok(c)
}

pub fn pra(scored: &[ScoredGroup]) -> Result<f64> {
    Ok(pra_counts(scored)?.ratio())
}

/// Every original against every permuted document in the set.
pub fn tpra_counts(scored: &[ScoredGroup]) -> Result<Counts> {
    check_groups(scored, "tpra")?;
    let mut pool: Vec<f64> = scored.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    pool.sort_by(f64::total_cmp);
    let mut c = Counts {
        correct: 0,
        total: (scored.len() * pool.len()) as u64,
    };
    for (orig, _) in scored {
        // permuted scores strictly below the original
        c.correct += pool.partition_point(|&p| p < *orig) as u64;
    }
    Ok(c)
}

pub fn tpra(scored: &[ScoredGroup]) -> Result<f64> {
    Ok(tpra_counts(scored)?.ratio())
}

pub fn accuracy_counts(gold: &[usize], pred: &[usize]) -> Result<Counts> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::Empty("accuracy"));
    }
    Ok(Counts {
        correct: gold.iter().zip(pred).filter(|(g, p)| g == p).count() as u64,
        total: gold.len() as u64,
    })
}

/// Fraction of exact class matches.
pub fn accuracy_3way(gold: &[usize], pred: &[usize]) -> Result<f64> {
    Ok(accuracy_counts(gold, pred)?.ratio())
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput(
            "pearson needs at least 2 points".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::UndefinedCorrelation("x"));
    }
    if syy == 0.0 {
        return Err(Error::UndefinedCorrelation("y"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// `1 - inversions / (n(n-1)/2)`: 1 for the original order, 0 for its
/// reversal.
pub fn similarity_from_transpositions(perm: &[usize], original: &[usize]) -> Result<f64> {
    let inv = min_adjacent_transpositions(perm, original)?;
    let n = perm.len() as u64;
    if n < 2 {
        return Ok(1.0);
    }
    Ok(1.0 - inv as f64 / (n * (n - 1) / 2) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct F1Score {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub true_positives: u64,
    pub predicted: u64,
    pub gold: u64,
    /// The class was neither predicted nor present in the gold labels.
    pub undefined: bool,
}

pub fn f1_per_class<T: PartialEq>(gold: &[T], pred: &[T], class: &T) -> Result<F1Score> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: pred.len(),
        });
    }
    let mut s = F1Score::default();
    for (g, p) in gold.iter().zip(pred) {
        let (g, p) = (g == class, p == class);
        s.gold += g as u64;
        s.predicted += p as u64;
        s.true_positives += (g && p) as u64;
    }
    s.undefined = s.gold == 0 && s.predicted == 0;
    if s.predicted > 0 {
        s.precision = s.true_positives as f64 / s.predicted as f64;
    }
    if s.gold > 0 {
        s.recall = s.true_positives as f64 / s.gold as f64;
    }
    if s.precision + s.recall > 0.0 {
        s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
    }
    Ok(s)
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Double loop over every original / permuted pair.
    fn brute_tpra(scored: &[ScoredGroup]) -> (u64, u64) {
        let pool: Vec<f64> = scored.iter().flat_map(|(_, p)| p.clone()).collect();
        let mut correct = 0;
        for (o, _) in scored {
            for p in &pool {
                if o > p {
                    correct += 1;
                }
            }
        }
        (correct, (scored.len() * pool.len()) as u64)
    }

    #[test]
    fn pra_anchors() {
        assert!((pra(&[(0.9, vec![0.1, 0.8, 0.95])]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            pra(&[(0.9, vec![0.1]), (0.5, vec![0.2, 0.4])]).unwrap(),
            1.0
        );
        assert_eq!(pra(&[(0.5, vec![0.5])]).unwrap(), 0.0);
        assert!(pra(&[]).is_err());
        assert!(pra(&[(0.5, vec![])]).is_err());
    }

    #[test]
    fn tpra_anchors() {
        let scored = vec![(0.9, vec![0.5]), (0.6, vec![0.7])];
        assert_eq!(tpra(&scored).unwrap(), 0.75);
        let single = vec![(0.6, vec![0.1, 0.7, 0.6, 0.3])];
        assert_eq!(tpra(&single).unwrap(), pra(&single).unwrap());
        assert_eq!(tpra_counts(&scored).unwrap().total, 4);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // 5 originals sharing 12 permuted documents
        let scored: Vec<ScoredGroup> = [3, 3, 2, 2, 2]
            .iter()
            .map(|&k| (rng.gen(), (0..k).map(|_| rng.gen()).collect()))
            .collect();
        let c = tpra_counts(&scored).unwrap();
        assert_eq!(c.total, 60);
        assert_eq!((c.correct, c.total), brute_tpra(&scored));
    }

    #[test]
    fn accuracy_anchors() {
        assert_eq!(accuracy_3way(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert!((accuracy_3way(&[0, 1, 2], &[0, 2, 2]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(accuracy_3way(&[0, 1], &[0]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let gold: Vec<usize> = (0..30_000).map(|i| i % 3).collect();
        let pred: Vec<usize> = gold.iter().map(|_| rng.gen_range(0..3)).collect();
        assert!((accuracy_3way(&gold, &pred).unwrap() - 1.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn pearson_anchors() {
        let x = [1.0, 2.0, 3.5, -1.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(
            pearson(&[1.0, 1.0], &[1.0, 2.0]),
            Err(Error::UndefinedCorrelation("x"))
        ));
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn similarity_anchors() {
        assert_eq!(
            similarity_from_transpositions(&[1, 2, 3, 4], &[1, 2, 3, 4]).unwrap(),
            1.0
        );
        assert_eq!(
            similarity_from_transpositions(&[4, 3, 2, 1], &[1, 2, 3, 4]).unwrap(),
            0.0
        );
        let s = similarity_from_transpositions(&[2, 1, 3, 4], &[1, 2, 3, 4]).unwrap();
        assert!((s - (1.0 - 1.0 / 6.0)).abs() < 1e-15);
        assert!((s - 0.8333).abs() < 1e-4);
        assert!(similarity_from_transpositions(&[1, 1, 3, 4], &[1, 2, 3, 4]).is_err());
    }

    #[test]
    fn f1_anchors() {
        let gold = ["S", "O", "X", "S"];
        let s = f1_per_class(&gold, &["S", "X", "X", "O"], &"S").unwrap();
        assert_eq!((s.precision, s.recall), (1.0, 0.5));
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);

        for c in ["S", "O", "X"] {
            assert_eq!(f1_per_class(&gold, &gold, &c).unwrap().f1, 1.0);
        }
        let never = f1_per_class(&gold, &["X", "X", "X", "X"], &"S").unwrap();
        assert_eq!(never.f1, 0.0);
        assert!(!never.undefined);
        let absent = f1_per_class(&gold, &gold, &"Q").unwrap();
        assert_eq!(absent.f1, 0.0);
        assert!(absent.undefined);
        assert!(f1_per_class(&gold, &["S"], &"S").is_err());
    }

    #[test]
    fn argmax_prefers_first_maximum() {
        assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
        assert_eq!(argmax(&[0.5]), 0);
    }

    fn arb_groups() -> impl Strategy<Value = Vec<ScoredGroup>> {
        // coarse grid so that ties actually occur
        let score = (0u8..20).prop_map(|v| v as f64 / 20.0);
        prop::collection::vec((score.clone(), prop::collection::vec(score, 1..6)), 1..50)
    }

    proptest! {
        #[test]
        fn ranking_metrics_match_enumeration(scored in arb_groups()) {
            let mut correct = 0u64;
            let mut total = 0u64;
            for (o, perms) in &scored {
                for p in perms {
                    total += 1;
                    if o > p { correct += 1; }
                }
            }
            let c = pra_counts(&scored).unwrap();
            prop_assert_eq!((c.correct, c.total), (correct, total));
            let t = tpra_counts(&scored).unwrap();
            prop_assert_eq!((t.correct, t.total), brute_tpra(&scored));
            let pool: usize = scored.iter().map(|(_, p)| p.len()).sum();
            prop_assert_eq!(t.total as usize, scored.len() * pool);
        }

        #[test]
        fn pearson_affine_invariance(
            pts in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..40),
            a in 0.01f64..50.0,
            b in -50.0f64..50.0,
        ) {
            let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
            if let Ok(r) = pearson(&x, &y) {
                prop_assert!((-1.0..=1.0).contains(&r));
                let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
                let r2 = pearson(&ax, &y).unwrap();
                prop_assert!((r - r2).abs() < 1e-12);
            }
        }

        #[test]
        fn similarity_in_unit_interval_and_monotone(
            perm in (2usize..9).prop_flat_map(|n| Just((0..n).collect::<Vec<_>>()).prop_shuffle())
        ) {
            let n = perm.len();
            let identity: Vec<usize> = (0..n).collect();
            let s = similarity_from_transpositions(&perm, &identity).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
            // one more inversion, one step less similar
            if let Some(i) = perm.windows(2).position(|w| w[0] < w[1]) {
                let mut worse = perm.clone();
                worse.swap(i, i + 1);
                prop_assert!(similarity_from_transpositions(&worse, &identity).unwrap() < s);
            }
        }

        #[test]
        fn micro_accuracy_equals_exact_match_rate(
            pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60)
        ) {
            let gold: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let pred: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let tp: u64 = (0..4).map(|c| f1_per_class(&gold, &pred, &c).unwrap().true_positives).sum();
            prop_assert_eq!(tp as f64 / gold.len() as f64, accuracy_3way(&gold, &pred).unwrap());
        }
    }
}
