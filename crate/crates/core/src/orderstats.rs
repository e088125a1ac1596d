//! Order statistics: extraction, Monte-Carlo expectations, closed-form
//! asymptotics and the concentration radius.
//!
//! Ranks are DESCENDING throughout the crate: rank 1 is the largest
//! value within its subset. The false-discovery event
//! `W_{H0,(l)} > f(W_{H1,(k-l+1)})` and the `l*` search are only
//! monotone under this convention, so it is used everywhere and the
//! ascending convention is not supported.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{substream, StreamDomain};

/// Base marginal of the Gaussian-type families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseDistribution {
    StandardNormal,
    HalfNormal,
}

impl BaseDistribution {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        match self {
            BaseDistribution::StandardNormal => z,
            BaseDistribution::HalfNormal => z.abs(),
        }
    }
}

/// The k-th largest of `values` restricted to `subset` (rank 1 = largest).
///
/// Expected O(n) via partial selection; exact ties just return the
/// shared value.
pub fn kth_largest(values: &[f64], subset: &[usize], k: usize) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::range("kth_largest on an empty subset"));
    }
    if k < 1 || k > subset.len() {
        return Err(Error::range(format!(
            "rank k = {k} out of range 1..={}",
            subset.len()
        )));
    }
    let mut selected: Vec<f64> = Vec::with_capacity(subset.len());
    for &i in subset {
        let v = *values.get(i).ok_or_else(|| {
            Error::range(format!(
                "subset index {i} out of bounds for {}",
                values.len()
            ))
        })?;
        selected.push(v);
    }
    let (_, kth, _) = selected.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    Ok(*kth)
}

/// Monte-Carlo estimate of an expected order statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub replicates: usize,
}

/// Estimates `E[k-th largest of n_sub draws]` from the base family.
///
/// Replicates are generated on independent substreams and reduced in
/// index order, so the result does not depend on thread count.
pub fn expected_order_stat_mc(
    dist: BaseDistribution,
    k: usize,
    n_sub: usize,
    replicates: usize,
    master_seed: u64,
) -> Result<ChiEstimate> {
    if n_sub == 0 || k < 1 || k > n_sub {
        return Err(Error::range(format!(
            "rank k = {k} out of range 1..={n_sub}"
        )));
    }
    if replicates < 2 {
        return Err(Error::parameter("need at least 2 replicates"));
    }
    let stats: Vec<f64> = (0..replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(master_seed, StreamDomain::OrderStats, rep);
            let mut buf: Vec<f64> = (0..n_sub).map(|_| dist.sample(&mut rng)).collect();
            let (_, kth, _) = buf.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
            *kth
        })
        .collect();
    Ok(summarize(&stats))
}

fn summarize(stats: &[f64]) -> ChiEstimate {
    let r = stats.len() as f64;
    let mean = stats.iter().sum::<f64>() / r;
    let var = stats.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (r - 1.0);
    ChiEstimate {
        mean,
        stderr: (var / r).sqrt(),
        replicates: stats.len(),
    }
}

/// `sqrt(2 log(n/k))` with a flag marking the `k <= n / log n` regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiAsymptotic {
    pub value: f64,
    /// False when `k > n / log n`, where the approximation degrades.
    pub regime_ok: bool,
}

/// Asymptotic expected k-th largest of `n_sub` standard normals.
pub fn gaussian_chi_asymptotic(k: usize, n_sub: usize) -> Result<ChiAsymptotic> {
    if n_sub == 0 || k < 1 || k > n_sub {
        return Err(Error::range(format!(
            "rank k = {k} out of range 1..={n_sub}"
        )));
    }
    let n = n_sub as f64;
    Ok(ChiAsymptotic {
        value: (2.0 * (n / k as f64).ln()).sqrt(),
        regime_ok: (k as f64) * n.ln() <= n,
    })
}

/// Gordon upper bound on the expected k-th largest of `n_sub`
/// half-normals: `sqrt(2 pi) * (n - k + 1) / (n + 1)`, valid for
/// `k >= n / 2`.
pub fn halfnormal_chi_upper(k: usize, n_sub: usize) -> Result<f64> {
    if n_sub == 0 || k < 1 || k > n_sub {
        return Err(Error::range(format!(
            "rank k = {k} out of range 1..={n_sub}"
        )));
    }
    if 2 * k < n_sub {
        return Err(Error::Precondition(format!(
            "Gordon bound needs k >= n/2, got k = {k}, n = {n_sub}"
        )));
    }
    let n = n_sub as f64;
    Ok((2.0 * std::f64::consts::PI).sqrt() * (n - k as f64 + 1.0) / (n + 1.0))
}

/// Concentration radius `sqrt(2 log(2/eps))`: a Gaussian group order
/// statistic deviates from its mean by at least this with probability
/// at most `eps`. Independent of the subset and rank.
pub fn concentration_delta(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 2.0) {
        return Err(Error::parameter(format!(
            "epsilon must lie in (0, 2], got {epsilon}"
        )));
    }
    Ok((2.0 * (2.0 / epsilon).ln()).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sort_oracle(values: &[f64], subset: &[usize], k: usize) -> f64 {
        let mut v: Vec<f64> = subset.iter().map(|&i| values[i]).collect();
        v.sort_by(|a, b| b.total_cmp(a));
        v[k - 1]
    }

    #[test]
    fn kth_largest_fixtures() {
        let v = [3.0, 1.0, 2.0];
        let all = [0, 1, 2];
        assert_eq!(kth_largest(&v, &all, 1).unwrap(), 3.0);
        assert_eq!(kth_largest(&v, &[1, 2], 2).unwrap(), 1.0);
        assert!(kth_largest(&v, &all, 0).is_err());
        assert!(kth_largest(&v, &all, 4).is_err());
        assert!(kth_largest(&v, &[], 1).is_err());
        assert!(kth_largest(&v, &[7], 1).is_err());
    }

    #[test]
    fn kth_largest_matches_full_sort() {
        let mut rng = substream(41, StreamDomain::Single, 0);
        for trial in 0..100 {
            let n = 1 + (trial * 7) % 1000;
            let values: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let subset: Vec<usize> = (0..n).step_by(1 + trial % 3).collect();
            let k = 1 + (trial * 13) % subset.len();
            assert_eq!(
                kth_largest(&values, &subset, k).unwrap(),
                sort_oracle(&values, &subset, k)
            );
        }
    }

    proptest! {
        #[test]
        fn kth_largest_equals_sort_oracle(values in prop::collection::vec(-1e3f64..1e3, 1..60),
                                          k_seed in 0usize..60) {
            let subset: Vec<usize> = (0..values.len()).collect();
            let k = 1 + k_seed % values.len();
            prop_assert_eq!(
                kth_largest(&values, &subset, k).unwrap(),
                sort_oracle(&values, &subset, k)
            );
        }
    }

    #[test]
    fn single_draw_means() {
        let est =
            expected_order_stat_mc(BaseDistribution::StandardNormal, 1, 1, 50_000, 11).unwrap();
        assert!(est.mean.abs() <= 3.0 * est.stderr + 1e-12);

        let est = expected_order_stat_mc(BaseDistribution::HalfNormal, 1, 1, 50_000, 12).unwrap();
        let half_normal_mean = (2.0 / std::f64::consts::PI).sqrt();
        assert!((est.mean - half_normal_mean).abs() <= 3.0 * est.stderr);
    }

    /// Frozen quadrature values for E[k-th largest of n std normals].
    const CHI_EXACT: [(usize, usize, f64); 9] = [
        (1, 1_000, 3.24144),
        (4, 1_000, 2.69117),
        (16, 1_000, 2.15542),
        (1, 10_000, 3.85162),
        (4, 10_000, 3.38596),
        (16, 10_000, 2.95673),
        (1, 100_000, 4.38432),
        (4, 100_000, 3.97369),
        (16, 100_000, 3.60622),
    ];

    #[test]
    fn mc_estimator_matches_quadrature() {
        for &(k, n, exact) in &CHI_EXACT {
            let reps = match n {
                1_000 => 4000,
                10_000 => 1500,
                _ => 400,
            };
            let est =
                expected_order_stat_mc(BaseDistribution::StandardNormal, k, n, reps, 7).unwrap();
            assert!(
                (est.mean - exact).abs() <= 4.0 * est.stderr + 0.01,
                "k={k} n={n}: mc {} vs exact {exact} (se {})",
                est.mean,
                est.stderr
            );
        }
    }

    #[test]
    fn asymptotic_ratio_example() {
        // k = 1, nSub = 1e4: mean / sqrt(2 log 1e4) lands in [0.85, 1.05]
        let est = expected_order_stat_mc(BaseDistribution::StandardNormal, 1, 10_000, 10_000, 19)
            .unwrap();
        let asym = gaussian_chi_asymptotic(1, 10_000).unwrap();
        let ratio = est.mean / asym.value;
        assert!((0.85..=1.05).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn gaussian_chi_asymptotic_fixtures() {
        let a = gaussian_chi_asymptotic(1, 10_000).unwrap();
        assert_abs_diff_eq!(a.value, 4.291932052578694, epsilon = 1e-12);
        assert!(a.regime_ok);

        let a = gaussian_chi_asymptotic(16, 100_000).unwrap();
        assert_abs_diff_eq!(a.value, 4.180989534244363, epsilon = 1e-12);
        assert!(a.regime_ok);

        // k = n violates the regime; the value degenerates to 0
        let a = gaussian_chi_asymptotic(500, 500).unwrap();
        assert_eq!(a.value, 0.0);
        assert!(!a.regime_ok);

        assert!(gaussian_chi_asymptotic(0, 10).is_err());
        assert!(gaussian_chi_asymptotic(11, 10).is_err());
    }

    #[test]
    fn gordon_fixtures() {
        assert_abs_diff_eq!(
            halfnormal_chi_upper(9, 9).unwrap(),
            0.25066282746310004,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            halfnormal_chi_upper(5, 10).unwrap(),
            1.3672517861623639,
            epsilon = 1e-12
        );
        assert!(matches!(
            halfnormal_chi_upper(4, 10),
            Err(Error::Precondition(_))
        ));
        assert!(halfnormal_chi_upper(0, 10).is_err());
    }

    #[test]
    fn gordon_bound_holds_against_mc() {
        // The spec-scale probe: n = 100, k = 60 at 1e5 replicates.
        let est =
            expected_order_stat_mc(BaseDistribution::HalfNormal, 60, 100, 100_000, 29).unwrap();
        let bound = halfnormal_chi_upper(60, 100).unwrap();
        assert!(
            est.mean <= bound + 3.0 * est.stderr,
            "mc {} vs bound {bound}",
            est.mean
        );
        // A sweep of (k >= n/2) pairs at smaller replicate counts.
        for (k, n) in [
            (50, 100),
            (75, 100),
            (99, 100),
            (100, 100),
            (5, 10),
            (9, 10),
        ] {
            let est =
                expected_order_stat_mc(BaseDistribution::HalfNormal, k, n, 20_000, 31).unwrap();
            let bound = halfnormal_chi_upper(k, n).unwrap();
            assert!(
                est.mean <= bound + 3.0 * est.stderr,
                "k={k} n={n}: mc {} vs bound {bound}",
                est.mean
            );
        }
    }

    #[test]
    fn concentration_delta_fixtures() {
        assert_eq!(concentration_delta(2.0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            concentration_delta(0.25).unwrap(),
            2.039333980337618,
            epsilon = 1e-12
        );
        assert!(concentration_delta(0.0).is_err());
        assert!(concentration_delta(2.5).is_err());
        assert!(concentration_delta(-1.0).is_err());
    }

    /// Empirical check of the concentration inequality for Gaussian
    /// order statistics: deviations of at least delta(eps) from the mean
    /// occur with frequency at most eps.
    #[test]
    fn concentration_holds_empirically() {
        let (k, n_sub, reps) = (100usize, 10_000usize, 10_000usize);
        let stats: Vec<f64> = (0..reps as u64)
            .into_par_iter()
            .map(|rep| {
                let mut rng = substream(37, StreamDomain::OrderStats, rep);
                let mut buf: Vec<f64> = (0..n_sub)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let (_, kth, _) = buf.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
                *kth
            })
            .collect();
        let mean = stats.iter().sum::<f64>() / reps as f64;
        for eps in [0.05, 0.1, 0.25] {
            let delta = concentration_delta(eps).unwrap();
            let fails = stats.iter().filter(|s| (*s - mean).abs() >= delta).count();
            assert!(
                (fails as f64) <= eps * reps as f64,
                "eps={eps}: {fails}/{reps} exceed delta={delta}"
            );
        }
    }
}
