//! Derandomized proxies for discoveries and false discoveries, and the
//! constant that turns them into FDR/FNR lower bounds.
//!
//! For target rates `(alpha, beta)` and an analysis parameter `eps`, the
//! discovery proxies are
//!
//! ```text
//! k-*(beta)  = floor((1 - beta/eps) * m)        (lower approximation)
//! k+*(alpha) = ceil(m / (1 - alpha/eps)) /\ n   (upper approximation)
//! ```
//!
//! and the false-discovery proxy `l*` at a discovery count `k` is the
//! largest `l` in its admissible range with
//! `P[L(k) >= l] >= 1 - eps`, where `L(k)` counts nulls among the `k`
//! largest statistics. The event `{L(k) >= l}` coincides with the
//! order-statistic event `{W_{H0,(l)} > f(W_{H1,(k-l+1)})}` (descending
//! ranks), which gives two interchangeable estimation routes:
//! [`ell_star_quantile`] works from the distribution of `L(k)`,
//! [`ell_star_scan`] from the per-`l` event probabilities. On a shared
//! replicate batch they agree exactly.
//!
//! Ratios with denominator `m` produce the four proxies FDP-*, FNP-*,
//! FDP+*, FNP+*; dividing by `c0(eps) = 4/(1-3 eps) + 4/eps` yields
//! bounds that every (alpha, beta)-controlled top-K procedure must obey.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{sample_base, ModelSpec, SignalLayout};
use crate::orderstats::concentration_delta;
use crate::rng::{substream, StreamDomain};

/// Parameters of a proxy computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxyConfig {
    /// Target FDR in [0, 1).
    pub alpha: f64,
    /// Target FNR in [0, 1).
    pub beta: f64,
    /// Analysis parameter; must satisfy `2 max(alpha, beta) < epsilon < 1/3`.
    pub epsilon: f64,
    /// Monte-Carlo replicates (>= 100).
    pub replicates: usize,
    pub master_seed: u64,
}

impl ProxyConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::parameter(format!(
                    "{name} must lie in [0, 1), got {v}"
                )));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0 / 3.0) {
            return Err(Error::parameter(format!(
                "epsilon must lie in (0, 1/3), got {}",
                self.epsilon
            )));
        }
        if 2.0 * self.alpha.max(self.beta) >= self.epsilon {
            return Err(Error::parameter(format!(
                "need 2 max(alpha, beta) < epsilon, got alpha = {}, beta = {}, epsilon = {}",
                self.alpha, self.beta, self.epsilon
            )));
        }
        if self.replicates < 100 {
            return Err(Error::parameter(format!(
                "need at least 100 replicates, got {}",
                self.replicates
            )));
        }
        Ok(())
    }
}

/// Which false-discovery proxy is being computed; fixes the admissible
/// `l` range and the empty-range convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProxySide {
    /// Range `[1, k]`, empty-range value 0.
    Minus,
    /// Range `[max(k - m, 0), k]`, empty-range value `max(k - m, 0)`.
    Plus,
}

impl ProxySide {
    fn range(self, k: usize, m: usize) -> (usize, usize, usize) {
        match self {
            ProxySide::Minus => (0, 1, k),
            ProxySide::Plus => {
                let floor = k.saturating_sub(m);
                (floor, floor, k)
            }
        }
    }
}

// Guard against float round-off flipping floor/ceil at exact integers
// (e.g. (1 - 0.05/0.25) * 100 evaluating to 79.999...).
const GRID_GUARD: f64 = 1e-9;

/// Lower discovery proxy `k-*(beta, eps) = floor((1 - beta/eps) m)`.
pub fn k_minus(beta: f64, epsilon: f64, m: usize) -> Result<usize> {
    if beta.is_nan() || beta < 0.0 || beta >= epsilon {
        return Err(Error::parameter(format!(
            "k_minus needs 0 <= beta < epsilon, got beta = {beta}, epsilon = {epsilon}"
        )));
    }
    let v = (1.0 - beta / epsilon) * m as f64;
    Ok((v + GRID_GUARD).floor().max(0.0) as usize)
}

/// Upper discovery proxy `k+*(alpha, eps) = ceil(m / (1 - alpha/eps))`,
/// clamped to `n`.
pub fn k_plus(alpha: f64, epsilon: f64, m: usize, n: usize) -> Result<usize> {
    if alpha.is_nan() || alpha < 0.0 || alpha >= epsilon {
        return Err(Error::parameter(format!(
            "k_plus needs 0 <= alpha < epsilon, got alpha = {alpha}, epsilon = {epsilon}"
        )));
    }
    let v = m as f64 / (1.0 - alpha / epsilon);
    Ok(((v - GRID_GUARD).ceil() as usize).min(n))
}

/// `k-*` extended to measured rates beyond `epsilon`: the formula goes
/// non-positive there, so the proxy saturates at 0 and the band keeps
/// its Markov guarantee.
pub fn k_minus_saturating(beta: f64, epsilon: f64, m: usize) -> usize {
    if beta >= epsilon {
        0
    } else {
        k_minus(beta, epsilon, m).expect("beta < epsilon")
    }
}

/// `k+*` extended to measured rates beyond `epsilon`: saturates at `n`.
pub fn k_plus_saturating(alpha: f64, epsilon: f64, m: usize, n: usize) -> usize {
    if alpha >= epsilon {
        n
    } else {
        k_plus(alpha, epsilon, m, n).expect("alpha < epsilon")
    }
}

/// Number of nulls among the `k` largest statistics (`L(k)`). Ties are
/// broken by index, which under the canonical layout ranks a signal
/// ahead of any null with the same value.
pub fn false_disc_count(x: &[f64], layout: &SignalLayout, k: usize) -> Result<usize> {
    if k > x.len() || x.len() != layout.n() {
        return Err(Error::range(format!(
            "k = {k} with {} statistics (layout n = {})",
            x.len(),
            layout.n()
        )));
    }
    if k == 0 {
        return Ok(0);
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_unstable_by(|&i, &j| x[j].total_cmp(&x[i]).then(i.cmp(&j)));
    Ok(order[..k].iter().filter(|&&i| !layout.is_signal(i)).count())
}

/// What a [`ReplicateBatch`] keeps per replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchMode {
    /// Only the null-count prefix `L(1..=max_rank)`; enough for the
    /// quantile route and the frontier.
    Counts,
    /// Additionally the top null and signal order statistics, for the
    /// event-scan route and expected-order-statistic comparisons.
    Full,
}

struct RepStats {
    /// L(k) for k = 1..=max_rank.
    cum_nulls: Vec<u32>,
    /// Null base values, descending, first `min(n0, max_rank + 1)`.
    w0_top: Vec<f64>,
    /// Transformed signal values `f(w)`, descending, same truncation.
    x1_top: Vec<f64>,
}

/// A stored batch of model replicates, reduced to order statistics.
///
/// All proxy quantities at every `(k, l)` are evaluated on the same
/// batch, which removes cross-`l` Monte-Carlo noise and makes the two
/// `l*` routes exactly comparable.
pub struct ReplicateBatch {
    n: usize,
    m: usize,
    n0: usize,
    max_rank: usize,
    reps: Vec<RepStats>,
}

fn top_sorted_desc(mut v: Vec<f64>, keep: usize) -> Vec<f64> {
    if keep < v.len() {
        v.select_nth_unstable_by(keep, |a, b| b.total_cmp(a));
        v.truncate(keep);
    }
    v.sort_unstable_by(|a, b| b.total_cmp(a));
    v
}

impl ReplicateBatch {
    /// Draws `replicates` model samples on substreams of `master_seed`
    /// and stores order statistics up to `max_rank`.
    pub fn generate(
        spec: &ModelSpec,
        layout: &SignalLayout,
        max_rank: usize,
        replicates: usize,
        master_seed: u64,
        mode: BatchMode,
    ) -> Result<Self> {
        spec.validate()?;
        let (n, m) = (layout.n(), layout.m());
        let n0 = n - m;
        if max_rank < 1 || max_rank > n {
            return Err(Error::range(format!(
                "max_rank = {max_rank} out of range 1..={n}"
            )));
        }
        if replicates < 2 {
            return Err(Error::parameter("need at least 2 replicates"));
        }
        let keep = max_rank + 1;
        let reps: Vec<RepStats> = (0..replicates as u64)
            .into_par_iter()
            .map(|rep| -> Result<RepStats> {
                let mut rng = substream(master_seed, StreamDomain::Replicates, rep);
                let w = sample_base(spec, layout, &mut rng);
                let mut w0: Vec<f64> = Vec::with_capacity(n0);
                let mut w1: Vec<f64> = Vec::with_capacity(m);
                for (i, &wi) in w.iter().enumerate() {
                    if layout.is_signal(i) {
                        w1.push(wi);
                    } else {
                        w0.push(wi);
                    }
                }
                let w0_top = top_sorted_desc(w0, keep.min(n0));
                let w1_top = top_sorted_desc(w1, keep.min(m));
                let x1_top: Vec<f64> = w1_top
                    .iter()
                    .map(|&v| spec.transform(v))
                    .collect::<Result<_>>()?;

                // Merge the two descending lists; on equal values the
                // signal wins, matching index-order tie-breaking under
                // the canonical layout.
                let mut cum_nulls = Vec::with_capacity(max_rank);
                let (mut i, mut j) = (0usize, 0usize);
                for _ in 0..max_rank {
                    if j < x1_top.len() && (i >= w0_top.len() || x1_top[j] >= w0_top[i]) {
                        j += 1;
                    } else {
                        i += 1;
                    }
                    cum_nulls.push(i as u32);
                }
                let (w0_top, x1_top) = match mode {
                    BatchMode::Counts => (Vec::new(), Vec::new()),
                    BatchMode::Full => (w0_top, x1_top),
                };
                Ok(RepStats {
                    cum_nulls,
                    w0_top,
                    x1_top,
                })
            })
            .collect::<Result<_>>()?;
        Ok(ReplicateBatch {
            n,
            m,
            n0,
            max_rank,
            reps,
        })
    }

    pub fn replicates(&self) -> usize {
        self.reps.len()
    }

    pub fn max_rank(&self) -> usize {
        self.max_rank
    }

    /// `L(k)` in one replicate.
    pub fn l_count(&self, rep: usize, k: usize) -> usize {
        assert!(k <= self.max_rank, "k = {k} beyond stored max_rank");
        if k == 0 {
            0
        } else {
            self.reps[rep].cum_nulls[k - 1] as usize
        }
    }

    /// Empirical `P[L(k) >= l]`.
    pub fn prob_l_at_least(&self, k: usize, ell: usize) -> f64 {
        assert!(k <= self.max_rank, "k = {k} beyond stored max_rank");
        let hits = self
            .reps
            .iter()
            .filter(|r| {
                let l = if k == 0 {
                    0
                } else {
                    r.cum_nulls[k - 1] as usize
                };
                l >= ell
            })
            .count();
        hits as f64 / self.reps.len() as f64
    }

    /// The order-statistic event `W_{H0,(l)} > f(W_{H1,(k-l+1)})` in one
    /// replicate, with out-of-range ranks read as +inf (rank <= 0) or
    /// -inf (rank beyond the subset).
    ///
    /// Requires [`BatchMode::Full`].
    pub fn event(&self, rep: usize, k: usize, ell: usize) -> bool {
        let stats = &self.reps[rep];
        assert!(
            !stats.w0_top.is_empty() || self.n0 == 0,
            "event scan needs BatchMode::Full"
        );
        if ell > self.n0 {
            return false; // left side -inf
        }
        if ell == 0 {
            return true; // left side +inf; right side is finite or -inf
        }
        let j = k as i64 - ell as i64 + 1;
        if j <= 0 {
            return false; // right side +inf
        }
        let j = j as usize;
        if j > self.m {
            return true; // right side -inf
        }
        stats.w0_top[ell - 1] > stats.x1_top[j - 1]
    }

    /// Empirical probability of the order-statistic event.
    pub fn event_prob(&self, k: usize, ell: usize) -> f64 {
        let hits = (0..self.reps.len())
            .filter(|&rep| self.event(rep, k, ell))
            .count();
        hits as f64 / self.reps.len() as f64
    }

    /// Mean of the null order statistic at `rank` (descending).
    pub fn mean_null_rank(&self, rank: usize) -> Result<f64> {
        if rank < 1 || rank > self.n0 || rank > self.max_rank + 1 {
            return Err(Error::range(format!("null rank {rank} not stored")));
        }
        let sum: f64 = self.reps.iter().map(|r| r.w0_top[rank - 1]).sum();
        Ok(sum / self.reps.len() as f64)
    }

    /// Mean of the transformed signal order statistic at `rank`.
    pub fn mean_signal_rank(&self, rank: usize) -> Result<f64> {
        if rank < 1 || rank > self.m || rank > self.max_rank + 1 {
            return Err(Error::range(format!("signal rank {rank} not stored")));
        }
        let sum: f64 = self.reps.iter().map(|r| r.x1_top[rank - 1]).sum();
        Ok(sum / self.reps.len() as f64)
    }

    /// Largest `l` in the side's range with `P[L(k) >= l] >= 1 - eps`
    /// (quantile route).
    pub fn ell_star_counts(&self, k: usize, side: ProxySide, epsilon: f64) -> usize {
        let (floor, lo, hi) = side.range(k, self.m);
        if lo > hi || k == 0 {
            return floor;
        }
        // One pass: tail counts of the L(k) histogram.
        let mut tail = vec![0u32; hi + 2];
        for rep in &self.reps {
            let l = if k == 0 {
                0
            } else {
                rep.cum_nulls[k - 1] as usize
            };
            tail[l.min(hi + 1)] += 1;
        }
        for i in (0..=hi).rev() {
            tail[i] += tail[i + 1];
        }
        let r = self.reps.len() as f64;
        for ell in (lo..=hi).rev() {
            if f64::from(tail[ell]) / r >= 1.0 - epsilon {
                return ell;
            }
        }
        floor
    }

    /// Largest `l` in the side's range whose order-statistic event has
    /// empirical probability at least `1 - eps` (scan route; requires
    /// [`BatchMode::Full`]).
    pub fn ell_star_events(&self, k: usize, side: ProxySide, epsilon: f64) -> usize {
        let (floor, lo, hi) = side.range(k, self.m);
        if lo > hi || k == 0 {
            return floor;
        }
        let r = self.reps.len() as f64;
        for ell in (lo..=hi).rev() {
            let hits = (0..self.reps.len())
                .filter(|&rep| self.event(rep, k, ell))
                .count();
            if hits as f64 / r >= 1.0 - epsilon {
                return ell;
            }
        }
        floor
    }
}

fn ell_star_checked(
    spec: &ModelSpec,
    layout: &SignalLayout,
    k: usize,
    epsilon: f64,
    replicates: usize,
) -> Result<()> {
    spec.validate()?;
    if k > layout.n() {
        return Err(Error::range(format!("k = {k} exceeds n = {}", layout.n())));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::parameter(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    if replicates < 100 {
        return Err(Error::parameter(format!(
            "need at least 100 replicates, got {replicates}"
        )));
    }
    Ok(())
}

/// `l*` by the quantile-of-`L(k)` route.
pub fn ell_star_quantile(
    spec: &ModelSpec,
    layout: &SignalLayout,
    k: usize,
    side: ProxySide,
    epsilon: f64,
    replicates: usize,
    master_seed: u64,
) -> Result<usize> {
    ell_star_checked(spec, layout, k, epsilon, replicates)?;
    if k == 0 {
        return Ok(side.range(0, layout.m()).0);
    }
    let batch =
        ReplicateBatch::generate(spec, layout, k, replicates, master_seed, BatchMode::Counts)?;
    Ok(batch.ell_star_counts(k, side, epsilon))
}

/// `l*` by the per-`l` event-probability route. Identical inputs and
/// seed reproduce the replicate batch of [`ell_star_quantile`], so the
/// two routes must agree exactly.
pub fn ell_star_scan(
    spec: &ModelSpec,
    layout: &SignalLayout,
    k: usize,
    side: ProxySide,
    epsilon: f64,
    replicates: usize,
    master_seed: u64,
) -> Result<usize> {
    ell_star_checked(spec, layout, k, epsilon, replicates)?;
    if k == 0 {
        return Ok(side.range(0, layout.m()).0);
    }
    let batch =
        ReplicateBatch::generate(spec, layout, k, replicates, master_seed, BatchMode::Full)?;
    Ok(batch.ell_star_events(k, side, epsilon))
}

/// The minus-side proxies at a target FNR `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinusProxies {
    pub k_minus: usize,
    pub ell_minus: usize,
    pub fdp_minus: f64,
    pub fnp_minus: f64,
    /// `k-* = 0`: the minus pair carries no information and is reported
    /// as zero.
    pub degenerate: bool,
}

/// The plus-side proxies at a target FDR `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlusProxies {
    pub k_plus: usize,
    pub ell_plus: usize,
    pub fdp_plus: f64,
    pub fnp_plus: f64,
}

/// Minus-side proxies evaluated on a shared batch (needs
/// `batch.max_rank() >= k-*(beta)`).
pub fn minus_proxies_on_batch(
    batch: &ReplicateBatch,
    beta: f64,
    epsilon: f64,
) -> Result<MinusProxies> {
    let m = batch.m;
    let km = k_minus(beta, epsilon, m)?;
    if km == 0 {
        return Ok(MinusProxies {
            k_minus: 0,
            ell_minus: 0,
            fdp_minus: 0.0,
            fnp_minus: 0.0,
            degenerate: true,
        });
    }
    let ell = batch.ell_star_counts(km, ProxySide::Minus, epsilon);
    Ok(MinusProxies {
        k_minus: km,
        ell_minus: ell,
        fdp_minus: ell as f64 / m as f64,
        fnp_minus: (m - km + ell) as f64 / m as f64,
        degenerate: false,
    })
}

/// Plus-side proxies evaluated on a shared batch (needs
/// `batch.max_rank() >= k+*(alpha)`).
pub fn plus_proxies_on_batch(
    batch: &ReplicateBatch,
    alpha: f64,
    epsilon: f64,
) -> Result<PlusProxies> {
    let (m, n) = (batch.m, batch.n);
    let kp = k_plus(alpha, epsilon, m, n)?;
    let ell = batch.ell_star_counts(kp, ProxySide::Plus, epsilon);
    let fnp = (m as f64 - kp as f64 + ell as f64) / m as f64;
    Ok(PlusProxies {
        k_plus: kp,
        ell_plus: ell,
        fdp_plus: ell as f64 / m as f64,
        fnp_plus: fnp.max(0.0),
    })
}

/// The four FDP*/FNP* proxies with their `k` and `l` intermediates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProxySet {
    pub k_minus: usize,
    pub k_plus: usize,
    pub ell_minus: usize,
    pub ell_plus: usize,
    pub fdp_minus: f64,
    pub fnp_minus: f64,
    pub fdp_plus: f64,
    pub fnp_plus: f64,
    pub degenerate: bool,
}

/// Computes all four proxies on one shared replicate batch.
pub fn proxy_set(
    spec: &ModelSpec,
    layout: &SignalLayout,
    config: &ProxyConfig,
) -> Result<ProxySet> {
    config.validate()?;
    let m = layout.m();
    let kp = k_plus(config.alpha, config.epsilon, m, layout.n())?;
    let km = k_minus(config.beta, config.epsilon, m)?;
    let batch = ReplicateBatch::generate(
        spec,
        layout,
        kp.max(km).max(1),
        config.replicates,
        config.master_seed,
        BatchMode::Counts,
    )?;
    let minus = minus_proxies_on_batch(&batch, config.beta, config.epsilon)?;
    let plus = plus_proxies_on_batch(&batch, config.alpha, config.epsilon)?;
    Ok(ProxySet {
        k_minus: minus.k_minus,
        k_plus: plus.k_plus,
        ell_minus: minus.ell_minus,
        ell_plus: plus.ell_plus,
        fdp_minus: minus.fdp_minus,
        fnp_minus: minus.fnp_minus,
        fdp_plus: plus.fdp_plus,
        fnp_plus: plus.fnp_plus,
        degenerate: minus.degenerate,
    })
}

/// The universal constant of the proxy lower bounds:
/// `c0(eps) = 4/(1 - 3 eps) + 4/eps`, the largest of the four constants
/// appearing in the proof, so one value serves all four inequalities.
/// Blows up as `eps -> 1/3`.
pub fn c0(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0 / 3.0) {
        return Err(Error::parameter(format!(
            "epsilon must lie in (0, 1/3), got {epsilon}"
        )));
    }
    Ok(4.0 / (1.0 - 3.0 * epsilon) + 4.0 / epsilon)
}

/// Lower bounds implied by a [`ProxySet`]: any (alpha, beta)-controlled
/// procedure satisfies `alpha >= alpha_lb`, `beta >= beta_lb` and
/// `max(alpha, beta) >= max_lb`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoremBounds {
    pub alpha_lb: f64,
    pub beta_lb: f64,
    pub max_lb: f64,
}

pub fn theorem_bounds(proxies: &ProxySet, epsilon: f64) -> Result<TheoremBounds> {
    let c = c0(epsilon)?;
    Ok(TheoremBounds {
        alpha_lb: proxies.fdp_minus / c,
        beta_lb: proxies.fnp_plus / c,
        max_lb: proxies.fnp_minus.max(proxies.fdp_plus) / c,
    })
}

/// Both sides of the derandomization inequality
/// `E[f(W_{H1,(k-l)})] + delta(eps/3) > E[W_{H0,(l+1)}] - delta(eps/3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerandomCheck {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
}

/// Monte-Carlo spot check of the derandomization inequality at `(k, l)`.
/// Guaranteed to hold at `l = l*`; far below `l*` on weak-signal models
/// it fails, which is what makes it a useful diagnostic.
pub fn derandomization_check(
    spec: &ModelSpec,
    layout: &SignalLayout,
    k: usize,
    ell: usize,
    epsilon: f64,
    replicates: usize,
    master_seed: u64,
) -> Result<DerandomCheck> {
    spec.validate()?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::parameter(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    let (n, m) = (layout.n(), layout.m());
    let n0 = n - m;
    if ell + 1 > n0 || k <= ell || k - ell > m {
        return Err(Error::range(format!(
            "Case I ranks out of range: need l + 1 <= {n0} and 1 <= k - l <= {m}, got k = {k}, l = {ell}"
        )));
    }
    let max_rank = (ell + 1).max(k - ell);
    let batch = ReplicateBatch::generate(
        spec,
        layout,
        max_rank,
        replicates,
        master_seed,
        BatchMode::Full,
    )?;
    let delta = concentration_delta(epsilon / 3.0)?;
    let lhs = batch.mean_signal_rank(k - ell)? + delta;
    let rhs = batch.mean_null_rank(ell + 1)? - delta;
    Ok(DerandomCheck {
        holds: lhs > rhs,
        lhs,
        rhs,
    })
}
