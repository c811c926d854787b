use std::fmt::Write as _;

use serde::Serialize;

use super::EvalError;
use crate::io::PairLabelKind;

/// ROC points from the strictest threshold (`(0, 0)`) to the loosest
/// (`(1, 1)`), one per distinct score, and the trapezoidal area under them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    /// `(false positive rate, true positive rate)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl RocCurve {
    /// Two whitespace-separated columns, plottable as-is by gnuplot.
    pub fn to_gnuplot(&self) -> String {
        let mut s = String::from("# fpr tpr\n");
        for (f, t) in &self.points {
            let _ = writeln!(s, "{f} {t}");
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("fpr,tpr\n");
        for (f, t) in &self.points {
            let _ = writeln!(s, "{f},{t}");
        }
        s
    }
}

/// Exact ROC: sweeps every distinct score (higher means more likely a
/// match); equal scores enter together, which makes tied pairs count half.
pub fn roc_auc(scores: &[f64], labels: &[PairLabelKind]) -> Result<RocCurve, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    if let Some(&s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore(s));
    }
    let pos = labels.iter().filter(|&&l| l == PairLabelKind::Match).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            match labels[order[i]] {
                PairLabelKind::Match => tp += 1,
                PairLabelKind::NonMatch => fp += 1,
            }
            i += 1;
        }
        let (x0, y0) = *points.last().unwrap();
        let (x1, y1) = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        auc += (x1 - x0) * (y0 + y1) * 0.5;
        points.push((x1, y1));
    }
    Ok(RocCurve { points, auc })
}

/// Reads `score,label` rows (label `match`/`non_match` or `1`/`0`); a
/// first line that does not parse as a score is taken as a header.
pub fn parse_scored_pairs(text: &str) -> Result<(Vec<f64>, Vec<PairLabelKind>), EvalError> {
    let (mut scores, mut labels) = (Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || EvalError::InvalidArgument(format!("line {}: expected score,label", i + 1));
        let (s, l) = line.split_once(',').ok_or_else(bad)?;
        let Ok(score) = s.trim().parse::<f64>() else {
            if scores.is_empty() && i == 0 {
                continue;
            }
            return Err(bad());
        };
        let label = match l.trim() {
            "match" | "1" => PairLabelKind::Match,
            "non_match" | "0" => PairLabelKind::NonMatch,
            _ => return Err(bad()),
        };
        scores.push(score);
        labels.push(label);
    }
    Ok((scores, labels))
}
