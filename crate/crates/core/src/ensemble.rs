//! Hard voting over binary member predictions.

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    /// Fraction of positive votes needed; compared with `≥`.
    pub threshold: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            threshold: 1.0 / 3.0,
        }
    }
}

impl EnsembleConfig {
    pub fn new(threshold: f64) -> Result<Self> {
        let cfg = Self { threshold };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.threshold > 0.0 && self.threshold <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "threshold {} outside (0, 1]",
                self.threshold
            )))
        }
    }
}

pub fn vote(predictions: &[Label], cfg: &EnsembleConfig) -> Result<Label> {
    if predictions.is_empty() {
        return Err(Error::EmptyInput(
            "vote needs at least one member prediction",
        ));
    }
    let positive = predictions.iter().filter(|l| l.is_positive()).count();
    // positive/n ≥ t, kept in exact arithmetic where possible
    let fraction = positive as f64 / predictions.len() as f64;
    Ok(Label::from_bool(
        fraction >= cfg.threshold || fraction_eq(positive, predictions.len(), cfg.threshold),
    ))
}

/// Guards against `1/3` thresholds rounding above `k/n` for equal fractions.
fn fraction_eq(k: usize, n: usize, t: f64) -> bool {
    (k as f64 - t * n as f64).abs() <= 1e-12 * n as f64
}

/// Votes column-wise: `members[m][i]` is member `m`'s prediction for example `i`.
pub fn vote_all(members: &[Vec<Label>], cfg: &EnsembleConfig) -> Result<Vec<Label>> {
    let first = members
        .first()
        .ok_or(Error::EmptyInput("ensemble needs at least one member"))?;
    for m in members {
        if m.len() != first.len() {
            return Err(Error::LengthMismatch {
                left: first.len(),
                right: m.len(),
            });
        }
    }
    let mut column = Vec::with_capacity(members.len());
    (0..first.len())
        .map(|i| {
            column.clear();
            column.extend(members.iter().map(|m| m[i]));
            vote(&column, cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(bits: &[u8]) -> Vec<Label> {
        bits.iter().map(|&b| Label::from_bool(b == 1)).collect()
    }

    #[test]
    fn threshold_examples() {
        let third = EnsembleConfig::default();
        assert_eq!(vote(&l(&[1, 0, 0]), &third).unwrap(), Label::Positive);
        assert_eq!(
            vote(&l(&[1, 0, 0]), &EnsembleConfig::new(0.5).unwrap()).unwrap(),
            Label::Negative
        );
        for t in [0.01, 0.5, 1.0] {
            assert_eq!(
                vote(&l(&[1, 1, 1]), &EnsembleConfig::new(t).unwrap()).unwrap(),
                Label::Positive
            );
        }
        assert_eq!(vote(&l(&[0, 0, 0]), &third).unwrap(), Label::Negative);
    }

    #[test]
    fn contract() {
        assert!(vote(&[], &EnsembleConfig::default()).is_err());
        assert!(EnsembleConfig::new(0.0).is_err());
        assert!(EnsembleConfig::new(1.01).is_err());
        assert!(vote_all(&[l(&[1, 0]), l(&[1])], &EnsembleConfig::default()).is_err());
    }

    #[test]
    fn two_of_six_meets_one_third() {
        assert_eq!(
            vote(&l(&[1, 1, 0, 0, 0, 0]), &EnsembleConfig::default()).unwrap(),
            Label::Positive
        );
        assert_eq!(
            vote(&l(&[1, 0, 0, 0, 0, 0]), &EnsembleConfig::default()).unwrap(),
            Label::Negative
        );
    }

    #[test]
    fn column_wise() {
        let out = vote_all(
            &[l(&[1, 0, 0]), l(&[0, 0, 1]), l(&[0, 0, 0])],
            &EnsembleConfig::default(),
        )
        .unwrap();
        assert_eq!(out, l(&[1, 0, 1]));
    }
}
