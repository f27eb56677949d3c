//! Classification metrics and character-level span metrics.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Label, SpanAnnotation, SpanPrediction};
use crate::error::{Error, Result};
use crate::text::CharRange;

/// Metrics for the positive (counterfactual) class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

impl BinaryMetrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        Self {
            precision,
            recall,
            f1: harmonic(precision, recall),
            tp,
            fp,
            fn_,
            tn,
        }
    }
}

/// Precision/recall/F1 of the positive class; `0/0` is taken as 0.
pub fn prf_binary(gold: &[Label], pred: &[Label]) -> Result<BinaryMetrics> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::EmptyInput("no predictions to score"));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        match (g.is_positive(), p.is_positive()) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(BinaryMetrics::from_counts(tp, fp, fn_, tn))
}

/// Macro-averaged character-overlap metrics plus exact match.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpanMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub exact_match: f64,
    /// Number of (example, role) pairs that entered the averages.
    pub pairs: usize,
}

fn overlap_scores(gold: Option<CharRange>, pred: Option<CharRange>) -> Option<(f64, f64)> {
    let inter = match (gold, pred) {
        (None, None) => return None,
        (Some(g), Some(p)) => g.intersection_len(&p) as f64,
        _ => 0.0,
    };
    let p = match pred {
        Some(p) => inter / p.len() as f64,
        None => 0.0,
    };
    let r = match gold {
        Some(g) => inter / g.len() as f64,
        None => 0.0,
    };
    Some((p, r))
}

/// Treats each role's span as a set of character indices and averages
/// P/R/F1 over every (example, role) pair where gold or prediction is
/// non-empty. Exact match counts examples whose two roles both match.
pub fn span_metrics(gold: &[SpanAnnotation], pred: &[SpanPrediction]) -> Result<SpanMetrics> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::EmptyInput("no span predictions to score"));
    }
    let (mut sum_p, mut sum_r, mut sum_f, mut pairs, mut exact) = (0.0, 0.0, 0.0, 0usize, 0usize);
    for (index, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.id != p.id {
            return Err(Error::IdMismatch {
                index,
                gold: g.id.clone(),
                pred: p.id.clone(),
            });
        }
        for (gr, pr) in [
            (Some(g.antecedent), p.antecedent),
            (g.consequent, p.consequent),
        ] {
            if let Some((prec, rec)) = overlap_scores(gr, pr) {
                sum_p += prec;
                sum_r += rec;
                sum_f += harmonic(prec, rec);
                pairs += 1;
            }
        }
        if Some(g.antecedent) == p.antecedent && g.consequent == p.consequent {
            exact += 1;
        }
    }
    let avg = |s: f64| if pairs == 0 { 1.0 } else { s / pairs as f64 };
    Ok(SpanMetrics {
        precision: avg(sum_p),
        recall: avg(sum_r),
        f1: avg(sum_f),
        exact_match: exact as f64 / gold.len() as f64,
        pairs,
    })
}

/// Versioned JSON report written by the `eval` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: String,
    pub examples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<BinaryMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spans: Option<SpanMetrics>,
}

impl crate::artifact::Artifact for MetricsReport {
    const FORMAT: &'static str = "cfx-metrics";
    const VERSION: u32 = 1;
}

impl MetricsReport {
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "task: {}   examples: {}", self.task, self.examples);
        if let Some(m) = &self.classification {
            let _ = writeln!(
                out,
                "{:<10} {:>9} {:>9} {:>9}",
                "", "precision", "recall", "f1"
            );
            let _ = writeln!(
                out,
                "{:<10} {:>9.2} {:>9.2} {:>9.2}",
                "positive",
                100.0 * m.precision,
                100.0 * m.recall,
                100.0 * m.f1
            );
            let _ = writeln!(out, "tp={} fp={} fn={} tn={}", m.tp, m.fp, m.fn_, m.tn);
        }
        if let Some(m) = &self.spans {
            let _ = writeln!(
                out,
                "{:<10} {:>9} {:>9} {:>9} {:>11}",
                "", "precision", "recall", "f1", "exact_match"
            );
            let _ = writeln!(
                out,
                "{:<10} {:>9.2} {:>9.2} {:>9.2} {:>11.4}",
                "spans",
                100.0 * m.precision,
                100.0 * m.recall,
                100.0 * m.f1,
                m.exact_match
            );
        }
        out
    }
}

/// Set of character indices covered by an optional range.
pub fn char_set(r: Option<CharRange>) -> BTreeSet<usize> {
    r.map(|r| (r.start..=r.end).collect()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(bits: &[u8]) -> Vec<Label> {
        bits.iter().map(|&b| Label::from_bool(b == 1)).collect()
    }

    #[test]
    fn prf_arithmetic() {
        let gold = labels(&[1, 1, 1, 1, 0, 0]);
        let pred = labels(&[1, 1, 1, 0, 1, 0]);
        let m = prf_binary(&gold, &pred).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_, m.tn), (3, 1, 1, 1));
        assert_eq!((m.precision, m.recall, m.f1), (0.75, 0.75, 0.75));
    }

    #[test]
    fn prf_edge_cases() {
        let gold = labels(&[1, 0, 1]);
        let perfect = prf_binary(&gold, &gold).unwrap();
        assert_eq!(
            (perfect.precision, perfect.recall, perfect.f1),
            (1.0, 1.0, 1.0)
        );
        let none = prf_binary(&gold, &labels(&[0, 0, 0])).unwrap();
        assert_eq!((none.precision, none.recall, none.f1), (0.0, 0.0, 0.0));
        assert!(matches!(
            prf_binary(&gold, &labels(&[1])),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(prf_binary(&[], &[]).is_err());
    }

    fn ann(id: &str, a: (usize, usize), c: Option<(usize, usize)>) -> SpanAnnotation {
        SpanAnnotation {
            id: id.into(),
            text: "x".repeat(40),
            antecedent: CharRange::new(a.0, a.1),
            consequent: c.map(|c| CharRange::new(c.0, c.1)),
        }
    }

    fn pred(id: &str, a: Option<(usize, usize)>, c: Option<(usize, usize)>) -> SpanPrediction {
        SpanPrediction {
            id: id.into(),
            text: "x".repeat(40),
            antecedent: a.map(|a| CharRange::new(a.0, a.1)),
            consequent: c.map(|c| CharRange::new(c.0, c.1)),
        }
    }

    #[test]
    fn span_perfect() {
        let gold = vec![ann("1", (0, 9), Some((12, 20))), ann("2", (3, 5), None)];
        let preds: Vec<SpanPrediction> = gold.iter().map(SpanPrediction::from).collect();
        let m = span_metrics(&gold, &preds).unwrap();
        assert_eq!(
            (m.precision, m.recall, m.f1, m.exact_match),
            (1.0, 1.0, 1.0, 1.0)
        );
        assert_eq!(m.pairs, 3);
    }

    #[test]
    fn span_half_coverage() {
        let m = span_metrics(&[ann("1", (0, 9), None)], &[pred("1", Some((0, 4)), None)]).unwrap();
        assert_eq!((m.precision, m.recall), (1.0, 0.5));
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.exact_match, 0.0);
    }

    #[test]
    fn span_disjoint_and_missing() {
        let m = span_metrics(
            &[ann("1", (0, 9), None)],
            &[pred("1", Some((20, 25)), None)],
        )
        .unwrap();
        assert_eq!((m.f1, m.exact_match), (0.0, 0.0));
        // spurious consequent adds a zero pair
        let m = span_metrics(
            &[ann("1", (0, 9), None)],
            &[pred("1", Some((0, 9)), Some((10, 12)))],
        )
        .unwrap();
        assert_eq!((m.pairs, m.f1, m.exact_match), (2, 0.5, 0.0));
    }

    #[test]
    fn span_id_mismatch() {
        let err = span_metrics(&[ann("1", (0, 1), None)], &[pred("2", None, None)]).unwrap_err();
        assert!(matches!(err, Error::IdMismatch { index: 0, .. }));
    }

    #[test]
    fn char_set_oracle_agrees_with_range_arithmetic() {
        let a = CharRange::new(3, 17);
        let b = CharRange::new(10, 30);
        let inter = char_set(Some(a)).intersection(&char_set(Some(b))).count();
        assert_eq!(inter, a.intersection_len(&b));
        assert_eq!(char_set(Some(a)).len(), a.len());
    }

    #[test]
    fn report_renders() {
        let r = MetricsReport {
            task: "subtask1".into(),
            examples: 6,
            classification: Some(BinaryMetrics::from_counts(3, 1, 1, 1)),
            spans: None,
        };
        assert!(r.table().contains("75.00"));
    }
}
