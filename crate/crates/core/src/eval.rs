//! Evaluation metrics and significance testing.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Instances scoring at or above the threshold are predicted positive.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC curve and the tie-corrected area under it:
/// `P(s⁺ > s⁻) + ½ P(s⁺ = s⁻)`.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Undefined("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    // walk thresholds from high to low; each group of tied scores moves the
    // curve diagonally
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut doubled: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (mut gp, mut gn) = (0u64, 0u64);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                gp += 1;
            } else {
                gn += 1;
            }
            i += 1;
        }
        // positives in this group beat every negative still below them and
        // tie with the group's negatives
        let below = neg - fp - gn;
        doubled += gp as u128 * (2 * below as u128 + gn as u128);
        tp += gp;
        fp += gn;
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold: s,
        });
    }
    Ok(RocCurve {
        points,
        auc: doubled as f64 / (2 * pos as u128 * neg as u128) as f64,
    })
}

/// Per-class F1 averaged with weights proportional to class support in
/// `labels`. Classes that only occur in `predictions` have zero weight.
pub fn weighted_f_score<T: Ord>(predictions: &[T], labels: &[T]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            actual: predictions.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::EmptyCorpus("weighted F over no instances".into()));
    }
    let mut support: BTreeMap<&T, usize> = BTreeMap::new();
    let mut tp: BTreeMap<&T, usize> = BTreeMap::new();
    let mut predicted: BTreeMap<&T, usize> = BTreeMap::new();
    for (p, l) in predictions.iter().zip(labels) {
        *support.entry(l).or_default() += 1;
        *predicted.entry(p).or_default() += 1;
        if p == l {
            *tp.entry(l).or_default() += 1;
        }
    }
    let n = labels.len() as f64;
    Ok(support
        .iter()
        .map(|(c, &s)| {
            let t = tp.get(c).copied().unwrap_or(0);
            let denom = s + predicted.get(c).copied().unwrap_or(0);
            let f1 = if denom == 0 { 0.0 } else { 2.0 * t as f64 / denom as f64 };
            s as f64 / n * f1
        })
        .sum())
}

/// Chance-corrected agreement `(p_o − p_e)/(1 − p_e)`.
pub fn cohens_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyCorpus("kappa over no instances".into()));
    }
    let n = a.len() as f64;
    let mut ca: BTreeMap<&T, usize> = BTreeMap::new();
    let mut cb: BTreeMap<&T, usize> = BTreeMap::new();
    let mut agree = 0usize;
    for (x, y) in a.iter().zip(b) {
        *ca.entry(x).or_default() += 1;
        *cb.entry(y).or_default() += 1;
        agree += usize::from(x == y);
    }
    let p_o = agree as f64 / n;
    let labels: BTreeSet<&T> = ca.keys().chain(cb.keys()).copied().collect();
    let p_e: f64 = labels
        .iter()
        .map(|l| ca.get(l).copied().unwrap_or(0) as f64 * cb.get(l).copied().unwrap_or(0) as f64)
        .sum::<f64>()
        / (n * n);
    if (1.0 - p_e).abs() < 1e-15 {
        return Err(Error::Undefined("kappa with chance agreement 1".into()));
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

pub const DEFAULT_ITERATIONS: usize = 10_000;

/// Permuted differences within this distance of the observed one count as
/// at least as extreme, absorbing rounding in recomputed metrics.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SignificanceResult {
    pub statistic: String,
    /// `metric(A) − metric(B)` on the unpermuted outputs.
    pub observed: f64,
    pub p_value: f64,
    pub iterations: usize,
    /// Iterations where the metric was undefined on a permuted sample; they
    /// are counted as exceeding the observed difference.
    pub undefined_iterations: usize,
    pub threshold: f64,
    pub significant: bool,
}

impl SignificanceResult {
    /// Applies a Bonferroni-corrected decision.
    pub fn with_bonferroni(mut self, alpha: f64, hypotheses: usize) -> Result<Self> {
        self.threshold = bonferroni_threshold(alpha, hypotheses)?;
        self.significant = self.p_value < self.threshold;
        Ok(self)
    }
}

/// Two-tailed approximate randomization test for paired system outputs.
///
/// Each iteration swaps the outputs of A and B for every instance with
/// probability ½, using a generator derived from `seed` and the iteration
/// index. `p = (count + 1)/(R + 1)`, where `count` is the number of
/// iterations with `|Δ_perm| ≥ |Δ_obs|`.
pub fn approx_randomization_test<T, F>(
    statistic: &str,
    a: &[T],
    b: &[T],
    metric: F,
    iterations: usize,
    seed: u64,
) -> Result<SignificanceResult>
where
    T: Clone,
    F: Fn(&[T]) -> Option<f64>,
{
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if iterations == 0 {
        return Err(Error::invalid("randomization test needs at least one iteration"));
    }
    let (Some(ma), Some(mb)) = (metric(a), metric(b)) else {
        return Err(Error::Undefined(format!("{statistic} is undefined on the observed outputs")));
    };
    let observed = ma - mb;
    let mut pa = a.to_vec();
    let mut pb = b.to_vec();
    let mut count = 0usize;
    let mut undefined = 0usize;
    for it in 0..iterations {
        let mut rng = rng::derived(seed, it as u64);
        for i in 0..a.len() {
            if rng.random_bool(0.5) {
                pa[i] = b[i].clone();
                pb[i] = a[i].clone();
            } else {
                pa[i] = a[i].clone();
                pb[i] = b[i].clone();
            }
        }
        match (metric(&pa), metric(&pb)) {
            (Some(x), Some(y)) => {
                if (x - y).abs() >= observed.abs() - TIE_TOLERANCE {
                    count += 1;
                }
            }
            _ => {
                undefined += 1;
                count += 1;
            }
        }
    }
    let p_value = (count + 1) as f64 / (iterations + 1) as f64;
    Ok(SignificanceResult {
        statistic: statistic.to_owned(),
        observed,
        p_value,
        iterations,
        undefined_iterations: undefined,
        threshold: 0.05,
        significant: p_value < 0.05,
    })
}

pub fn bonferroni_threshold(alpha: f64, hypotheses: usize) -> Result<f64> {
    if hypotheses == 0 {
        return Err(Error::invalid("Bonferroni correction needs at least one hypothesis"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("significance level {alpha} outside (0, 1]")));
    }
    Ok(alpha / hypotheses as f64)
}

/// `p < α/H` for each p-value.
pub fn bonferroni(p_values: &[f64], alpha: f64, hypotheses: usize) -> Result<Vec<bool>> {
    let t = bonferroni_threshold(alpha, hypotheses)?;
    Ok(p_values.iter().map(|&p| p < t).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0u64;
        let mut pairs = 0u64;
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] && !labels[j] {
                    pairs += 1;
                    if scores[i] > scores[j] {
                        num += 2;
                    } else if scores[i] == scores[j] {
                        num += 1;
                    }
                }
            }
        }
        num as f64 / (2 * pairs) as f64
    }

    #[test]
    fn auc_examples() {
        let s = [0.9, 0.8, 0.3];
        assert_eq!(roc_auc(&s, &[true, false, false]).unwrap().auc, 1.0);
        assert_eq!(roc_auc(&s, &[false, true, false]).unwrap().auc, 0.5);
        assert_eq!(roc_auc(&[0.4; 5], &[true, false, true, false, false]).unwrap().auc, 0.5);
        assert!(roc_auc(&s, &[true; 3]).is_err());
    }

    #[test]
    fn roc_curve_is_monotone() {
        let c = roc_auc(&[0.1, 0.4, 0.35, 0.8, 0.4], &[false, false, true, true, true]).unwrap();
        assert_eq!(c.points.first().map(|p| (p.fpr, p.tpr)), Some((0.0, 0.0)));
        assert_eq!(c.points.last().map(|p| (p.fpr, p.tpr)), Some((1.0, 1.0)));
        assert!(c.points.windows(2).all(|w| w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr));
        // trapezoid area under the curve equals the pair-counting area
        let trap: f64 = c.points.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum();
        assert!((trap - c.auc).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn auc_matches_pair_counting(data in prop::collection::vec((0u8..6, any::<bool>()), 2..50)) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64 / 5.0).collect();
            let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let auc = roc_auc(&scores, &labels).unwrap().auc;
            prop_assert_eq!(auc, brute_auc(&scores, &labels));
            let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
            prop_assert_eq!(roc_auc(&transformed, &labels).unwrap().auc, auc);
        }

        #[test]
        fn kappa_is_symmetric(pairs in prop::collection::vec((0u8..3, 0u8..3), 2..40)) {
            let a: Vec<u8> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<u8> = pairs.iter().map(|p| p.1).collect();
            match (cohens_kappa(&a, &b), cohens_kappa(&b, &a)) {
                (Ok(x), Ok(y)) => prop_assert!((x - y).abs() < 1e-15),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false),
            }
        }

        #[test]
        fn weighted_f_matches_recomputation(pairs in prop::collection::vec((0u8..4, 0u8..4), 1..60)) {
            let p: Vec<u8> = pairs.iter().map(|x| x.0).collect();
            let l: Vec<u8> = pairs.iter().map(|x| x.1).collect();
            let mut expected = 0.0;
            for c in 0..4u8 {
                let support = l.iter().filter(|&&y| y == c).count() as f64;
                if support == 0.0 { continue; }
                let tp = p.iter().zip(&l).filter(|(a, b)| **a == c && **b == c).count() as f64;
                let fp = p.iter().zip(&l).filter(|(a, b)| **a == c && **b != c).count() as f64;
                let fn_ = support - tp;
                let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
                let recall = tp / support;
                let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
                let _ = fn_;
                expected += support / l.len() as f64 * f1;
            }
            prop_assert!((weighted_f_score(&p, &l).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_f_examples() {
        assert!((weighted_f_score(&[1, 0, 1], &[1, 0, 1]).unwrap() - 1.0).abs() < 1e-12);
        // class 1: P = 1, R = 1/2, F1 = 2/3; class 0: P = 2/3, R = 1, F1 = 4/5
        let f = weighted_f_score(&[1, 0, 0, 0], &[1, 1, 0, 0]).unwrap();
        assert!((f - 11.0 / 15.0).abs() < 1e-12);
        assert_eq!(weighted_f_score(&[3, 3], &[3, 3]).unwrap(), 1.0);
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(cohens_kappa(&[0, 1, 1, 0], &[0, 1, 1, 0]).unwrap(), 1.0);
        assert!(cohens_kappa(&[1, 1, 0, 0], &[1, 0, 1, 0]).unwrap().abs() < 1e-12);
        assert!(matches!(cohens_kappa(&[1, 1], &[1, 1]), Err(Error::Undefined(_))));
    }

    fn accuracy(labels: &[usize]) -> impl Fn(&[usize]) -> Option<f64> + '_ {
        move |pred: &[usize]| {
            Some(pred.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64)
        }
    }

    fn exhaustive_p(a: &[usize], b: &[usize], labels: &[usize]) -> f64 {
        let m = accuracy(labels);
        let obs = (m(a).unwrap() - m(b).unwrap()).abs();
        let n = a.len();
        let mut count = 0;
        for mask in 0..(1u32 << n) {
            let (mut pa, mut pb) = (a.to_vec(), b.to_vec());
            for i in 0..n {
                if mask >> i & 1 == 1 {
                    std::mem::swap(&mut pa[i], &mut pb[i]);
                }
            }
            if (m(&pa).unwrap() - m(&pb).unwrap()).abs() >= obs - 1e-12 {
                count += 1;
            }
        }
        count as f64 / (1u64 << n) as f64
    }

    #[test]
    fn identical_systems_give_p_one() {
        let labels = [0, 1, 1, 0, 1];
        let a = [0, 1, 0, 0, 1];
        let r = approx_randomization_test("acc", &a, &a, accuracy(&labels), 200, 1).unwrap();
        assert_eq!(r.observed, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn randomization_matches_exhaustive_enumeration() {
        let labels = [1, 0, 1, 1];
        let a = [1, 0, 1, 1];
        let b = [0, 1, 1, 0];
        let exact = exhaustive_p(&a, &b, &labels);
        let r = approx_randomization_test("acc", &a, &b, accuracy(&labels), DEFAULT_ITERATIONS, 7).unwrap();
        assert!((r.p_value - exact).abs() < 0.02, "{} vs {exact}", r.p_value);
        let swapped = approx_randomization_test("acc", &b, &a, accuracy(&labels), DEFAULT_ITERATIONS, 7).unwrap();
        assert_eq!(swapped.p_value, r.p_value);
        // doubling R keeps the estimate inside the binomial 95% band
        let r2 = approx_randomization_test("acc", &a, &b, accuracy(&labels), 2 * DEFAULT_ITERATIONS, 7).unwrap();
        let band = 1.96 * (exact * (1.0 - exact) / (2 * DEFAULT_ITERATIONS) as f64).sqrt() + 1.0 / DEFAULT_ITERATIONS as f64;
        assert!((r2.p_value - exact).abs() < band);
    }

    #[test]
    fn undefined_permutations_count_as_exceeding() {
        // defined only when the two outputs differ
        let metric = |v: &[usize]| (v[0] != v[1]).then_some(v[0] as f64);
        let r = approx_randomization_test("first", &[1, 2], &[2, 1], metric, 400, 0).unwrap();
        assert!(r.undefined_iterations > 100 && r.undefined_iterations < 300);
        assert_eq!(r.p_value, 1.0);
        assert!(approx_randomization_test("first", &[1, 1], &[2, 1], metric, 10, 0).is_err());
    }

    #[test]
    fn bonferroni_examples() {
        let t = bonferroni_threshold(0.05, 54).unwrap();
        assert!((t - 9.259259259e-4).abs() < 1e-12);
        assert_eq!(bonferroni_threshold(0.05, 1).unwrap(), 0.05);
        assert_eq!(bonferroni(&[0.01, 1e-4], 0.05, 54).unwrap(), vec![false, true]);
        assert!(bonferroni_threshold(0.05, 0).is_err());
    }
}
