use crate::error::{Error, Result};

/// Pair counts behind an AUC: `twice_u` is twice the Mann-Whitney U, i.e.
/// two per correctly ordered positive/negative pair plus one per tie.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AucCounts {
    pub twice_u: u128,
    pub positives: u64,
    pub negatives: u64,
}

impl AucCounts {
    pub fn auc(&self) -> Result<f64> {
        if self.positives == 0 || self.negatives == 0 {
            return Err(Error::UndefinedAuc(format!(
                "AUC needs both classes, got {} positive and {} negative labels",
                self.positives, self.negatives
            )));
        }
        let pairs = 2 * self.positives as u128 * self.negatives as u128;
        Ok(self.twice_u as f64 / pairs as f64)
    }
}

/// Tie-aware pair counts from one sort of the scores.
pub fn auc_counts(scores: &[f64], labels: &[u8]) -> Result<AucCounts> {
    if scores.len() != labels.len() {
        return Err(Error::validation(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::validation("scores contain NaN"));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::validation(format!("labels must be 0 or 1, found {l}")));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut twice_u: u128 = 0;
    let mut negatives_below: u64 = 0;
    let mut positives: u64 = 0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u64, 0u64);
        // -0.0 and 0.0 compare equal as scores even though total_cmp splits them.
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            if labels[idx[j]] == 1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        twice_u += 2 * pos as u128 * negatives_below as u128 + pos as u128 * neg as u128;
        negatives_below += neg;
        positives += pos;
        i = j;
    }
    Ok(AucCounts {
        twice_u,
        positives,
        negatives: negatives_below,
    })
}

pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    auc_counts(scores, labels)?.auc()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairwise(scores: &[f64], labels: &[u8]) -> f64 {
        let mut twice = 0u128;
        let (mut p, mut n) = (0u128, 0u128);
        for i in 0..scores.len() {
            if labels[i] == 1 {
                p += 1;
            } else {
                n += 1;
            }
            if labels[i] != 1 {
                continue;
            }
            for j in 0..scores.len() {
                if labels[j] == 0 {
                    if scores[i] > scores[j] {
                        twice += 2;
                    } else if scores[i] == scores[j] {
                        twice += 1;
                    }
                }
            }
        }
        twice as f64 / (2 * p * n) as f64
    }

    #[test]
    fn examples() {
        assert_eq!(roc_auc(&[0.9, 0.1], &[1, 0]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.3; 6], &[1, 0, 0, 1, 0, 1]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.1, 0.9], &[1, 0]).unwrap(), 0.0);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(roc_auc(&[0.1, 0.2], &[1, 1]).unwrap_err(), Error::UndefinedAuc(_)));
        assert!(matches!(roc_auc(&[], &[]).unwrap_err(), Error::UndefinedAuc(_)));
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(roc_auc(&[0.1], &[1, 0]).is_err());
        assert!(roc_auc(&[f64::NAN, 0.2], &[1, 0]).is_err());
        assert!(roc_auc(&[0.1, 0.2], &[2, 0]).is_err());
    }

    #[test]
    fn signed_zeros_tie() {
        assert_eq!(roc_auc(&[-0.0, 0.0], &[1, 0]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.0, -0.0], &[1, 0]).unwrap(), 0.5);
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
        (2usize..=200).prop_flat_map(|n| {
            (
                prop::collection::vec((0u8..20).prop_map(|v| v as f64 / 4.0), n),
                prop::collection::vec(0u8..=1, n),
            )
        })
    }

    proptest! {
        #[test]
        fn equals_pairwise_oracle((scores, labels) in instance()) {
            let p = labels.iter().filter(|&&l| l == 1).count();
            prop_assume!(p > 0 && p < labels.len());
            prop_assert_eq!(roc_auc(&scores, &labels).unwrap(), pairwise(&scores, &labels));
        }

        #[test]
        fn negated_scores_complement((scores, labels) in instance()) {
            let p = labels.iter().filter(|&&l| l == 1).count();
            prop_assume!(p > 0 && p < labels.len());
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            let a = auc_counts(&scores, &labels).unwrap();
            let b = auc_counts(&neg, &labels).unwrap();
            prop_assert_eq!(a.twice_u + b.twice_u, 2 * a.positives as u128 * a.negatives as u128);
            prop_assert_eq!(roc_auc(&scores, &labels).unwrap() + roc_auc(&neg, &labels).unwrap(), 1.0);
        }

        #[test]
        fn invariant_under_increasing_maps((scores, labels) in instance()) {
            let p = labels.iter().filter(|&&l| l == 1).count();
            prop_assume!(p > 0 && p < labels.len());
            let mapped: Vec<f64> = scores.iter().map(|s| (s * 0.7).exp() + 3.0).collect();
            prop_assert_eq!(roc_auc(&scores, &labels).unwrap(), roc_auc(&mapped, &labels).unwrap());
        }
    }
}
