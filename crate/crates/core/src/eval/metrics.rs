//! Confusion-matrix rates, ROC/PR curves and threshold selection.
//!
//! Anomalies are the positive class. A reading is predicted positive when its
//! score is at or above the threshold.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::iforest::Label;

/// Counts are real-valued so that matrices can be averaged over repetitions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: f64,
    pub fp: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
    pub tn: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

impl ConfusionMatrix {
    /// `S = TP + FP + FN + TN`.
    pub fn total(&self) -> f64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Recall.
    pub fn tpr(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn fpr(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }

    /// Precision.
    pub fn ppv(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn f1(&self) -> f64 {
        let (r, p) = (self.tpr(), self.ppv());
        ratio(2.0 * r * p, r + p)
    }

    /// Element-wise mean.
    pub fn mean(items: &[ConfusionMatrix]) -> ConfusionMatrix {
        let n = items.len().max(1) as f64;
        let sum = items.iter().fold(ConfusionMatrix::default(), |a, c| ConfusionMatrix {
            tp: a.tp + c.tp,
            fp: a.fp + c.fp,
            fn_: a.fn_ + c.fn_,
            tn: a.tn + c.tn,
        });
        ConfusionMatrix { tp: sum.tp / n, fp: sum.fp / n, fn_: sum.fn_ / n, tn: sum.tn / n }
    }
}

pub fn tpr(cm: &ConfusionMatrix) -> f64 {
    cm.tpr()
}

pub fn fpr(cm: &ConfusionMatrix) -> f64 {
    cm.fpr()
}

pub fn ppv(cm: &ConfusionMatrix) -> f64 {
    cm.ppv()
}

pub fn f1(cm: &ConfusionMatrix) -> f64 {
    cm.f1()
}

/// Point on a ROC (x = FPR, y = TPR) or PR (x = recall, y = precision) curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
}

pub fn confusion(scored: &[(f64, Label)], threshold: f64) -> Result<ConfusionMatrix, EvalError> {
    if scored.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut cm = ConfusionMatrix::default();
    for &(s, label) in scored {
        match (s >= threshold, label.is_anomaly()) {
            (true, true) => cm.tp += 1.0,
            (true, false) => cm.fp += 1.0,
            (false, true) => cm.fn_ += 1.0,
            (false, false) => cm.tn += 1.0,
        }
    }
    Ok(cm)
}

/// Cumulative counts after admitting every score `>= threshold`, one entry per
/// distinct score, highest threshold first.
type Sweep = Vec<(f64, ConfusionMatrix)>;

fn sweep(scored: &[(f64, Label)]) -> Result<Sweep, EvalError> {
    if scored.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let positives = scored.iter().filter(|(_, l)| l.is_anomaly()).count() as f64;
    let negatives = scored.len() as f64 - positives;
    if positives == 0.0 || negatives == 0.0 {
        return Err(EvalError::UndefinedCurve);
    }
    let mut sorted: Vec<(f64, bool)> = scored.iter().map(|&(s, l)| (s, l.is_anomaly())).collect();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut steps = Vec::new();
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == threshold {
            if sorted[i].1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        let cm = ConfusionMatrix { tp, fp, fn_: positives - tp, tn: negatives - fp };
        steps.push((threshold, cm));
    }
    Ok(steps)
}

/// ROC curve from `(0, 0)` to `(1, 1)`, sorted by FPR.
pub fn roc_curve(scored: &[(f64, Label)]) -> Result<Vec<CurvePoint>, EvalError> {
    Ok(roc_points(&sweep(scored)?))
}

fn roc_points(sw: &Sweep) -> Vec<CurvePoint> {
    let mut pts = vec![CurvePoint { x: 0.0, y: 0.0 }];
    pts.extend(sw.iter().map(|(_, cm)| CurvePoint { x: cm.fpr(), y: cm.tpr() }));
    pts
}

/// PR curve starting at `(0, 1)`, sorted by recall.
pub fn pr_curve(scored: &[(f64, Label)]) -> Result<Vec<CurvePoint>, EvalError> {
    let sw = sweep(scored)?;
    let mut pts = vec![CurvePoint { x: 0.0, y: 1.0 }];
    pts.extend(sw.iter().map(|(_, cm)| CurvePoint { x: cm.tpr(), y: cm.ppv() }));
    Ok(pts)
}

fn trapezoid(pts: &[CurvePoint]) -> f64 {
    pts.windows(2).map(|w| (w[1].x - w[0].x) * (w[0].y + w[1].y) * 0.5).sum()
}

/// Precision-envelope step integral: each recall increment is weighted by the
/// best precision reachable at that recall or beyond.
fn step_envelope(steps: &[(f64, ConfusionMatrix)]) -> f64 {
    let mut envelope: Vec<f64> = steps.iter().map(|(_, cm)| cm.ppv()).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for ((_, cm), p) in steps.iter().zip(envelope) {
        let r = cm.tpr();
        area += (r - prev_recall) * p;
        prev_recall = r;
    }
    area
}

pub fn roc_auc(scored: &[(f64, Label)]) -> Result<f64, EvalError> {
    Ok(trapezoid(&roc_curve(scored)?))
}

pub fn pr_auc(scored: &[(f64, Label)]) -> Result<f64, EvalError> {
    Ok(step_envelope(&sweep(scored)?))
}

/// Distinct score maximizing F1; ties go to the larger threshold.
pub fn best_threshold_by_f1(scored: &[(f64, Label)]) -> Result<(f64, f64), EvalError> {
    let sw = sweep(scored)?;
    Ok(best_of(&sw).map(|(t, cm)| (t, cm.f1())).expect("sweep has steps"))
}

fn best_of(steps: &[(f64, ConfusionMatrix)]) -> Option<(f64, ConfusionMatrix)> {
    let mut best: Option<(f64, ConfusionMatrix)> = None;
    for &(t, cm) in steps {
        if best.is_none_or(|(_, b)| cm.f1() > b.f1()) {
            best = Some((t, cm));
        }
    }
    best
}

/// Everything the harness records about one scored test set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub auc_roc: f64,
    pub auc_pr: f64,
    pub best_threshold: f64,
    pub best_f1: f64,
    pub confusion: ConfusionMatrix,
}

pub fn evaluate(scored: &[(f64, Label)]) -> Result<Evaluation, EvalError> {
    let sw = sweep(scored)?;
    let roc = roc_points(&sw);
    let (best_threshold, confusion) = best_of(&sw).expect("sweep has steps");
    Ok(Evaluation {
        auc_roc: trapezoid(&roc),
        auc_pr: step_envelope(&sw),
        best_threshold,
        best_f1: confusion.f1(),
        confusion,
    })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let rx = ranks(x);
    let ry = ranks(y);
    pearson(&rx, &ry)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    ratio(cov, (vx * vy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;
    use Label::{Anomaly as A, Normal as N};

    fn table_ii() -> ConfusionMatrix {
        ConfusionMatrix { tp: 998.0, fp: 8.325, fn_: 2.0, tn: 8991.675 }
    }

    /// Probability that a random anomaly outranks a random normal, ties half.
    fn pairwise_auc(scored: &[(f64, Label)]) -> f64 {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for &(sa, _) in scored.iter().filter(|(_, l)| l.is_anomaly()) {
            for &(sn, _) in scored.iter().filter(|(_, l)| !l.is_anomaly()) {
                pairs += 1.0;
                wins += if sa > sn { 1.0 } else if sa == sn { 0.5 } else { 0.0 };
            }
        }
        wins / pairs
    }

    /// Average precision with interpolation, straight from the definition:
    /// for every threshold, the best precision at any recall at least as high.
    fn brute_force_ap(scored: &[(f64, Label)]) -> f64 {
        let mut thresholds: Vec<f64> = scored.iter().map(|s| s.0).collect();
        thresholds.sort_by(|a, b| b.total_cmp(a));
        thresholds.dedup();
        let pts: Vec<(f64, f64)> = thresholds
            .iter()
            .map(|&t| {
                let cm = confusion(scored, t).unwrap();
                (cm.tpr(), cm.ppv())
            })
            .collect();
        let mut area = 0.0;
        let mut prev = 0.0;
        for &(r, _) in &pts {
            let best = pts.iter().filter(|(r2, _)| *r2 >= r).map(|p| p.1).fold(0.0, f64::max);
            area += (r - prev) * best;
            prev = r;
        }
        area
    }

    #[test]
    fn table_ii_rates() {
        let cm = table_ii();
        assert_eq!(cm.total(), 10_000.0);
        assert_eq!(tpr(&cm), 0.998);
        assert_eq!(ppv(&cm), 998.0 / 1006.325);
        assert!((ppv(&cm) - 0.9917).abs() < 5e-5);
        assert_eq!(fpr(&cm), 8.325 / 9000.0);
        assert!((fpr(&cm) - 0.000925).abs() < 1e-12);
    }

    #[test]
    fn zero_denominators_and_perfect_f1() {
        let empty = ConfusionMatrix::default();
        assert_eq!((empty.tpr(), empty.fpr(), empty.ppv(), empty.f1()), (0.0, 0.0, 0.0, 0.0));
        let perfect = ConfusionMatrix { tp: 5.0, fp: 0.0, fn_: 0.0, tn: 5.0 };
        assert_eq!(perfect.f1(), 1.0);
    }

    #[test]
    fn confusion_counts() {
        let scored = [(0.1, N), (0.2, N), (0.3, N)];
        let cm = confusion(&scored, 0.5).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 0.0, fp: 0.0, fn_: 0.0, tn: 3.0 });
        assert!(matches!(confusion(&[], 0.5), Err(EvalError::EmptyInput)));
        let cm = confusion(&[(0.9, A), (0.5, A), (0.5, N)], 0.5).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 2.0, fp: 1.0, fn_: 0.0, tn: 0.0 });
    }

    #[test]
    fn four_point_hand_case() {
        let scored = [(0.9, A), (0.8, N), (0.4, A), (0.3, N)];
        assert_eq!(pairwise_auc(&scored), 0.75);
        assert_eq!(roc_auc(&scored).unwrap(), 0.75);
    }

    #[test]
    fn perfect_separation() {
        let scored = [(0.95, A), (0.9, A), (0.4, N), (0.3, N), (0.2, N)];
        assert_eq!(roc_auc(&scored).unwrap(), 1.0);
        assert_eq!(pr_auc(&scored).unwrap(), 1.0);
        assert_eq!(best_threshold_by_f1(&scored).unwrap(), (0.9, 1.0));
    }

    #[test]
    fn single_anomaly_on_top() {
        let scored = [(0.99, A), (0.6, N), (0.5, N)];
        assert_eq!(best_threshold_by_f1(&scored).unwrap(), (0.99, 1.0));
    }

    #[test]
    fn single_class_is_undefined() {
        let scored = [(0.9, N), (0.1, N)];
        for r in [roc_auc(&scored), pr_auc(&scored)] {
            assert_eq!(r.unwrap_err().to_string(), "undefined curve");
        }
        assert!(best_threshold_by_f1(&scored).is_err());
    }

    #[test]
    fn f1_ties_prefer_larger_threshold() {
        // At 0.8: tp 1, fp 0, fn 1 -> F1 2/3. At 0.6: tp 2, fp 2, fn 0 -> F1 2/3.
        let scored = [(0.8, A), (0.7, N), (0.6, A), (0.6, N)];
        let (t, f) = best_threshold_by_f1(&scored).unwrap();
        assert_eq!(t, 0.8);
        assert!((f - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn random_scores_give_chance_auc() {
        let mut rng = rng_from_seed(99);
        let mut total = 0.0;
        let trials = 50;
        for _ in 0..trials {
            let scored: Vec<(f64, Label)> = (0..400)
                .map(|i| (rng.random::<f64>(), if i % 2 == 0 { A } else { N }))
                .collect();
            let auc = roc_auc(&scored).unwrap();
            assert!((auc - 0.5).abs() < 0.1);
            total += auc;
        }
        assert!((total / trials as f64 - 0.5).abs() < 0.05);
    }

    #[test]
    fn curves_are_sorted_with_endpoints() {
        let scored = [(0.9, A), (0.8, N), (0.4, A), (0.3, N), (0.3, A)];
        let roc = roc_curve(&scored).unwrap();
        assert_eq!(roc.first(), Some(&CurvePoint { x: 0.0, y: 0.0 }));
        assert_eq!(roc.last(), Some(&CurvePoint { x: 1.0, y: 1.0 }));
        assert!(roc.windows(2).all(|w| w[0].x <= w[1].x));
        let pr = pr_curve(&scored).unwrap();
        assert_eq!(pr.first().unwrap().x, 0.0);
        assert_eq!(pr.last().unwrap().x, 1.0);
        assert!(pr.windows(2).all(|w| w[0].x <= w[1].x));
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 40.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        // Ties get average ranks: x ranks [1.5, 1.5, 3], y ranks [1, 2, 3],
        // so r = 1.5 / sqrt(1.5 * 2).
        let got = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]);
        assert!((got - 1.5 / 3f64.sqrt()).abs() < 1e-12);
    }

    fn arb_scored() -> impl Strategy<Value = Vec<(f64, Label)>> {
        // Few distinct score levels to exercise ties.
        prop::collection::vec((0u8..20, any::<bool>()), 2..80)
            .prop_map(|v| v.into_iter().map(|(s, a)| (s as f64 / 20.0 + 0.01, if a { A } else { N })).collect())
            .prop_filter("both classes", |v: &Vec<(f64, Label)>| {
                v.iter().any(|s| s.1.is_anomaly()) && v.iter().any(|s| !s.1.is_anomaly())
            })
    }

    proptest! {
        #[test]
        fn roc_auc_matches_pairwise_oracle(scored in arb_scored()) {
            let auc = roc_auc(&scored).unwrap();
            prop_assert!((auc - pairwise_auc(&scored)).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&auc));
        }

        #[test]
        fn reversed_scores_complement_auc(scored in arb_scored()) {
            let reversed: Vec<_> = scored.iter().map(|&(s, l)| (1.0 - s, l)).collect();
            let sum = roc_auc(&scored).unwrap() + roc_auc(&reversed).unwrap();
            prop_assert!((sum - 1.0).abs() < 1e-9);
        }

        #[test]
        fn pr_auc_matches_definition(scored in arb_scored()) {
            let ap = pr_auc(&scored).unwrap();
            prop_assert!((ap - brute_force_ap(&scored)).abs() < 1e-12);
            prop_assert!(ap > 0.0 && ap <= 1.0);
        }

        #[test]
        fn best_threshold_is_consistent(scored in arb_scored()) {
            let (t, f) = best_threshold_by_f1(&scored).unwrap();
            let cm = confusion(&scored, t).unwrap();
            prop_assert!((cm.f1() - f).abs() < 1e-12);
            prop_assert_eq!(cm.total(), scored.len() as f64);
            for &(s, _) in &scored {
                let other = confusion(&scored, s).unwrap().f1();
                prop_assert!(other < f || (other == f && s <= t));
            }
            let ev = evaluate(&scored).unwrap();
            prop_assert_eq!((ev.best_threshold, ev.best_f1), (t, f));
            prop_assert_eq!(ev.confusion, cm);
        }
    }
}
