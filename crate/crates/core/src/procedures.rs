//! Top-K testing procedures, Benjamini-Hochberg, and Monte-Carlo
//! FDR/FNR estimation.
//!
//! Every rule here rejects the hypotheses carrying the largest
//! statistics, with the count possibly data-dependent. Ties (possible in
//! the grouped family) are broken by index order, which matches the
//! tie-breaking used by the proxy machinery.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{apply_alternative, sample_base, ModelSpec, SignalLayout};
use crate::proxies::{k_minus_saturating, k_plus_saturating};
use crate::rng::{substream, StreamDomain};

/// Upper tail of the standard normal, `P[Z > x]`.
fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Maps statistics to p-values, strictly decreasing in the statistic.
///
/// Location-type families (location, spiked, grouped) use the one-sided
/// normal tail; the scale family folds both tails of `|Z|`; the Lehmann
/// family reads `1 - x` directly.
pub fn to_pvalues(spec: &ModelSpec, x: &[f64]) -> Result<Vec<f64>> {
    match spec {
        ModelSpec::IidLocation { .. } | ModelSpec::Spiked { .. } | ModelSpec::Grouped { .. } => {
            Ok(x.iter().map(|&v| normal_sf(v)).collect())
        }
        ModelSpec::IidScale { .. } => x
            .iter()
            .map(|&v| {
                if v < 0.0 {
                    Err(Error::parameter(format!(
                        "scale-family statistic must be >= 0, got {v}"
                    )))
                } else {
                    Ok(2.0 * normal_sf(v))
                }
            })
            .collect(),
        ModelSpec::Lehmann { .. } => x
            .iter()
            .map(|&v| {
                if !(0.0..=1.0).contains(&v) {
                    Err(Error::parameter(format!(
                        "Lehmann statistic must lie in [0, 1], got {v}"
                    )))
                } else {
                    Ok(1.0 - v)
                }
            })
            .collect(),
    }
}

/// A set of rejected hypotheses; always the `k_used` largest statistics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectionSet {
    /// Rejected indices, ascending.
    pub indices: Vec<usize>,
    pub k_used: usize,
}

impl RejectionSet {
    fn from_prefix(order: &[usize], k: usize) -> Self {
        let mut indices: Vec<usize> = order[..k].to_vec();
        indices.sort_unstable();
        RejectionSet { indices, k_used: k }
    }
}

/// Rejects the `k` largest statistics.
pub fn top_k_reject(x: &[f64], k: usize) -> Result<RejectionSet> {
    if k > x.len() {
        return Err(Error::range(format!(
            "k = {k} exceeds number of statistics {}",
            x.len()
        )));
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_unstable_by(|&i, &j| x[j].total_cmp(&x[i]).then(i.cmp(&j)));
    Ok(RejectionSet::from_prefix(&order, k))
}

/// The Benjamini-Hochberg step-up rule at level `q`: with p-values in
/// ascending order, `K = max{k : p_(k) <= k q / n}` (0 if none) and the
/// `K` smallest p-values are rejected.
pub fn bh_procedure(pvalues: &[f64], q: f64) -> Result<RejectionSet> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::parameter(format!("q must lie in (0, 1), got {q}")));
    }
    for &p in pvalues {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::parameter(format!("p-value {p} outside [0, 1]")));
        }
    }
    let n = pvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&i, &j| pvalues[i].total_cmp(&pvalues[j]).then(i.cmp(&j)));
    let mut k_used = 0;
    for (pos, &idx) in order.iter().enumerate() {
        if pvalues[idx] <= (pos + 1) as f64 * q / n as f64 {
            k_used = pos + 1;
        }
    }
    Ok(RejectionSet::from_prefix(&order, k_used))
}

/// Realized `(FDP, FNP)` of a rejection set.
pub fn fdp_fnp(rejections: &RejectionSet, layout: &SignalLayout) -> (f64, f64) {
    let false_disc = rejections
        .indices
        .iter()
        .filter(|&&i| !layout.is_signal(i))
        .count();
    let true_disc = rejections.indices.len() - false_disc;
    let fdp = false_disc as f64 / (rejections.indices.len().max(1)) as f64;
    let fnp = (layout.m() - true_disc) as f64 / layout.m() as f64;
    (fdp, fnp)
}

/// A top-K testing rule applied to a statistics vector.
pub trait TestingRule: Sync {
    fn reject(&self, spec: &ModelSpec, x: &[f64]) -> Result<RejectionSet>;
    fn name(&self) -> String;
}

/// BH at level `q` on the family's p-values.
pub struct BhRule {
    pub q: f64,
}

impl TestingRule for BhRule {
    fn reject(&self, spec: &ModelSpec, x: &[f64]) -> Result<RejectionSet> {
        bh_procedure(&to_pvalues(spec, x)?, self.q)
    }

    fn name(&self) -> String {
        format!("bh(q={})", self.q)
    }
}

/// Always rejects exactly `k` hypotheses.
pub struct FixedKRule {
    pub k: usize,
}

impl TestingRule for FixedKRule {
    fn reject(&self, _spec: &ModelSpec, x: &[f64]) -> Result<RejectionSet> {
        top_k_reject(x, self.k)
    }

    fn name(&self) -> String {
        format!("fixed_k({})", self.k)
    }
}

/// Rejects everything.
pub struct RejectAllRule;

impl TestingRule for RejectAllRule {
    fn reject(&self, _spec: &ModelSpec, x: &[f64]) -> Result<RejectionSet> {
        top_k_reject(x, x.len())
    }

    fn name(&self) -> String {
        "reject_all".into()
    }
}

/// Rejects nothing.
pub struct RejectNoneRule;

impl TestingRule for RejectNoneRule {
    fn reject(&self, _spec: &ModelSpec, x: &[f64]) -> Result<RejectionSet> {
        top_k_reject(x, 0)
    }

    fn name(&self) -> String {
        "reject_none".into()
    }
}

/// Monte-Carlo estimates of a rule's error rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorRates {
    pub fdr: f64,
    pub fnr: f64,
    pub fdr_se: f64,
    pub fnr_se: f64,
    pub mean_k: f64,
    pub trials: usize,
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let t = values.len() as f64;
    let mean = values.iter().sum::<f64>() / t;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (t - 1.0);
    (mean, (var / t).sqrt())
}

fn run_trials(
    spec: &ModelSpec,
    layout: &SignalLayout,
    rule: &dyn TestingRule,
    trials: usize,
    master_seed: u64,
) -> Result<Vec<(f64, f64, usize)>> {
    if trials < 2 {
        return Err(Error::parameter("need at least 2 trials"));
    }
    spec.validate()?;
    (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(master_seed, StreamDomain::Trials, t);
            let w = sample_base(spec, layout, &mut rng);
            let x = apply_alternative(spec, &w, layout)?;
            let rej = rule.reject(spec, &x)?;
            let (fdp, fnp) = fdp_fnp(&rej, layout);
            Ok((fdp, fnp, rej.k_used))
        })
        .collect()
}

/// Mean and standard error of `(FDP, FNP)` over independent trials.
/// Deterministic given the seed, independent of thread count.
pub fn estimate_fdr_fnr(
    spec: &ModelSpec,
    layout: &SignalLayout,
    rule: &dyn TestingRule,
    trials: usize,
    master_seed: u64,
) -> Result<ErrorRates> {
    let rows = run_trials(spec, layout, rule, trials, master_seed)?;
    let fdps: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let fnps: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let (fdr, fdr_se) = mean_se(&fdps);
    let (fnr, fnr_se) = mean_se(&fnps);
    let mean_k = rows.iter().map(|r| r.2 as f64).sum::<f64>() / rows.len() as f64;
    Ok(ErrorRates {
        fdr,
        fnr,
        fdr_se,
        fnr_se,
        mean_k,
        trials: rows.len(),
    })
}

/// Empirical probability that the rule's discovery count lands in the
/// band `[k-*(beta), k+*(alpha)]`.
///
/// `alpha` and `beta` are the rule's measured rates on this model. Rates
/// at or above `epsilon` saturate the corresponding endpoint (0 or `n`),
/// which keeps the underlying Markov bounds valid, so the band
/// probability is at least `1 - 2 epsilon` regardless.
#[allow(clippy::too_many_arguments)]
pub fn band_probability(
    spec: &ModelSpec,
    layout: &SignalLayout,
    rule: &dyn TestingRule,
    alpha: f64,
    beta: f64,
    epsilon: f64,
    trials: usize,
    master_seed: u64,
) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0 / 3.0) {
        return Err(Error::parameter(format!(
            "epsilon must lie in (0, 1/3), got {epsilon}"
        )));
    }
    for (name, v) in [("alpha", alpha), ("beta", beta)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::parameter(format!(
                "{name} must lie in [0, 1], got {v}"
            )));
        }
    }
    let (m, n) = (layout.m(), layout.n());
    let k_lo = k_minus_saturating(beta, epsilon, m);
    let k_hi = k_plus_saturating(alpha, epsilon, m, n);
    let rows = run_trials(spec, layout, rule, trials, master_seed)?;
    let hits = rows
        .iter()
        .filter(|(_, _, k)| (k_lo..=k_hi).contains(k))
        .count();
    Ok(hits as f64 / rows.len() as f64)
}
