//! Closed-form feasibility predicates and signal-strength lower bounds
//! for the five model families, under the rare-weak scalings
//! `m = n^(1-s)`, `mu = sqrt(2 r log n)`, `alpha ~ n^-kappa_alpha`,
//! `beta ~ n^-kappa_beta`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::proxies::c0;

/// Rate exponents of a rare-weak asymptotic regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateExponents {
    /// Sparsity exponent, in (0, 1).
    pub s: f64,
    /// Signal exponent, in (0, 1), larger than `s`.
    pub r: f64,
    /// FDR decay exponent, >= 0.
    pub kappa_alpha: f64,
    /// FNR decay exponent, >= 0.
    pub kappa_beta: f64,
}

impl RateExponents {
    pub fn new(s: f64, r: f64, kappa_alpha: f64, kappa_beta: f64) -> Result<Self> {
        if s.is_nan() || r.is_nan() || s <= 0.0 || s >= r || r >= 1.0 {
            return Err(Error::parameter(format!(
                "need 0 < s < r < 1, got s = {s}, r = {r}"
            )));
        }
        for (name, k) in [("kappa_alpha", kappa_alpha), ("kappa_beta", kappa_beta)] {
            if !k.is_finite() || k < 0.0 {
                return Err(Error::parameter(format!("{name} must be >= 0, got {k}")));
            }
        }
        Ok(RateExponents {
            s,
            r,
            kappa_alpha,
            kappa_beta,
        })
    }
}

/// Signed feasibility verdict: `slack >= 0` is necessary for the decay
/// rates to be achievable. The sign lets callers bisect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Feasibility {
    pub feasible: bool,
    pub slack: f64,
}

/// `kappa*(s, r) = (r - s)^2 / (4 r)`, the cap on `min(kappa_alpha,
/// kappa_beta)` in the iid location bound. Accepts `s = r` (cap 0).
pub fn kappa_star(s: f64, r: f64) -> Result<f64> {
    if s.is_nan() || r.is_nan() || s <= 0.0 || s > r || r >= 1.0 {
        return Err(Error::parameter(format!(
            "need 0 < s <= r < 1, got s = {s}, r = {r}"
        )));
    }
    Ok((r - s) * (r - s) / (4.0 * r))
}

/// Iid Gaussian location model: achievable decay rates must satisfy
/// `sqrt(s + kappa_alpha) + sqrt(kappa_beta) <= sqrt(r)` and
/// `min(kappa_alpha, kappa_beta) <= kappa*(s, r)`.
pub fn iid_location_feasible(e: &RateExponents) -> Feasibility {
    let slack = e.r.sqrt() - (e.s + e.kappa_alpha).sqrt() - e.kappa_beta.sqrt();
    let cap = (e.r - e.s) * (e.r - e.s) / (4.0 * e.r);
    Feasibility {
        feasible: slack >= 0.0 && e.kappa_alpha.min(e.kappa_beta) <= cap,
        slack,
    }
}

/// Spiked dependence model: the within-block correlations shrink the
/// coefficients to `sqrt(1 - rho0)` and `sqrt(1 - rho1)`; the cross
/// correlation plays no role.
pub fn spiked_feasible(e: &RateExponents, rho0: f64, rho1: f64) -> Result<Feasibility> {
    for (name, rho) in [("rho0", rho0), ("rho1", rho1)] {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::parameter(format!(
                "{name} must lie in [0, 1), got {rho}"
            )));
        }
    }
    let slack = e.r.sqrt()
        - (1.0 - rho0).sqrt() * (e.s + e.kappa_alpha).sqrt()
        - (1.0 - rho1).sqrt() * e.kappa_beta.sqrt();
    Ok(Feasibility {
        feasible: slack >= 0.0,
        slack,
    })
}

/// Grouped dependence model with group exponent `t`
/// (`A = (n - m) / n^(1-t)`): the bound coincides with the iid location
/// slack; no `kappa*` clause.
pub fn grouped_feasible(e: &RateExponents, t: f64) -> Result<Feasibility> {
    if t.is_nan() || t < 0.0 || t >= e.s {
        return Err(Error::parameter(format!(
            "need 0 <= t < s, got t = {t}, s = {}",
            e.s
        )));
    }
    let slack = e.r.sqrt() - (e.s + e.kappa_alpha).sqrt() - e.kappa_beta.sqrt();
    Ok(Feasibility {
        feasible: slack >= 0.0,
        slack,
    })
}

/// Scale-model signal-strength lower bound at finite `n`:
///
/// ```text
/// sigma >= (1 - eta) / (sqrt(2 pi) c0(eps))
///          * (beta + 1/m)^-1
///          * sqrt(2 s_n log n + 2 log (alpha + 1/m)^-1)
/// ```
///
/// with `n` recovered from `s_n = log(n/m) / log(n)`. The slowly-varying
/// factor `eta_n` has no closed form and defaults to 0, which reports
/// the constant-free envelope.
pub fn scale_sigma_lower(
    s_n: f64,
    alpha: f64,
    beta: f64,
    m: usize,
    epsilon: f64,
    eta: f64,
) -> Result<f64> {
    if s_n.is_nan() || s_n <= 0.0 || s_n >= 1.0 {
        return Err(Error::Precondition(format!(
            "s_n must lie strictly inside (0, 1), got {s_n}"
        )));
    }
    if m < 1 {
        return Err(Error::parameter("m must be >= 1"));
    }
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::parameter(format!(
            "eta must lie in [0, 1), got {eta}"
        )));
    }
    let c = c0(epsilon)?;
    for (name, v) in [("alpha", alpha), ("beta", beta)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::parameter(format!(
                "{name} must lie in [0, 1], got {v}"
            )));
        }
    }
    if alpha.max(beta) > 1.0 / (3.0 * c) {
        return Err(Error::Precondition(format!(
            "bound needs max(alpha, beta) <= 1/(3 c0) = {}, got {}",
            1.0 / (3.0 * c),
            alpha.max(beta)
        )));
    }
    let m_f = m as f64;
    let log_n = m_f.ln() / (1.0 - s_n);
    let radicand = 2.0 * s_n * log_n + 2.0 * (1.0 / (alpha + 1.0 / m_f)).ln();
    Ok((1.0 - eta) / ((2.0 * std::f64::consts::PI).sqrt() * c)
        * (beta + 1.0 / m_f).recip()
        * radicand.sqrt())
}

/// Lehmann alternative: lower bound on the signal strength `1/gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LehmannBound {
    /// `t = 3 beta / eps + 1/m + sqrt(3 c0 beta / (m eps))`; the bound
    /// is vacuous as `t` approaches 1.
    pub t_param: f64,
    pub inv_gamma_lb: f64,
}

/// `1/gamma >= (1-t)/t * log( eps / (3 pi1 alpha) * (1 + 4 log(3/eps))^-1 )`
/// with `pi1 = m/n`.
pub fn lehmann_gamma_lower(
    alpha: f64,
    beta: f64,
    epsilon: f64,
    m: usize,
    n: usize,
) -> Result<LehmannBound> {
    let c = c0(epsilon)?;
    if m < 1 || m >= n {
        return Err(Error::parameter(format!(
            "need 1 <= m < n, got m = {m}, n = {n}"
        )));
    }
    if alpha.is_nan() || alpha <= 0.0 || alpha > epsilon / 3.0 {
        return Err(Error::Precondition(format!(
            "bound needs 0 < alpha <= epsilon/3 = {}, got {alpha}",
            epsilon / 3.0
        )));
    }
    if beta.is_nan() || beta < 0.0 {
        return Err(Error::parameter(format!("beta must be >= 0, got {beta}")));
    }
    let m_f = m as f64;
    let t = 3.0 * beta / epsilon + 1.0 / m_f + (3.0 * c * beta / (m_f * epsilon)).sqrt();
    if t >= 1.0 {
        return Err(Error::Precondition(format!(
            "t = {t} >= 1: the bound is vacuous at these rates"
        )));
    }
    let pi1 = m_f / n as f64;
    let inv_gamma_lb =
        (1.0 - t) / t * (epsilon / (3.0 * pi1 * alpha) / (1.0 + 4.0 * (3.0 / epsilon).ln())).ln();
    Ok(LehmannBound {
        t_param: t,
        inv_gamma_lb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, StreamDomain};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn kappa_star_fixtures() {
        assert_eq!(kappa_star(0.5, 0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(kappa_star(0.5, 0.8).unwrap(), 0.028125, epsilon = 1e-15);
        assert_abs_diff_eq!(kappa_star(0.7, 0.8).unwrap(), 0.003125, epsilon = 1e-15);
        assert!(kappa_star(0.8, 0.5).is_err());
        assert!(kappa_star(0.0, 0.5).is_err());
    }

    #[test]
    fn iid_location_fixtures() {
        let e = RateExponents::new(0.5, 0.8, 0.1, 0.01).unwrap();
        let f = iid_location_feasible(&e);
        assert_abs_diff_eq!(f.slack, 0.019830521758432446, epsilon = 1e-12);
        assert!(f.feasible); // min kappa = 0.01 <= kappa* = 0.028125

        let e = RateExponents::new(0.5, 0.8, 0.0, 0.0).unwrap();
        assert!(iid_location_feasible(&e).feasible);

        let e = RateExponents::new(0.5, 0.8, 0.3, 0.1).unwrap();
        let f = iid_location_feasible(&e);
        assert_abs_diff_eq!(f.slack, -0.31622776601683794, epsilon = 1e-12);
        assert!(!f.feasible);
    }

    #[test]
    fn spiked_fixtures() {
        let e = RateExponents::new(0.5, 0.8, 0.3, 0.1).unwrap();
        // infeasible iid case turns feasible under strong dependence
        let f = spiked_feasible(&e, 0.75, 0.75).unwrap();
        assert_abs_diff_eq!(f.slack, 0.289099712491539, epsilon = 1e-12);
        assert!(f.feasible);

        // near-total dependence: coefficients vanish
        let f = spiked_feasible(&e, 1.0 - 1e-9, 1.0 - 1e-9).unwrap();
        assert!(f.feasible);

        assert!(spiked_feasible(&e, 1.0, 0.5).is_err());
    }

    #[test]
    fn spiked_zero_rho_reduces_to_iid_exactly() {
        let mut rng = substream(67, StreamDomain::Single, 0);
        for _ in 0..1000 {
            let s: f64 = rng.random_range(0.01..0.98);
            let r: f64 = rng.random_range(s + 1e-6..0.999);
            let ka: f64 = rng.random_range(0.0..0.6);
            let kb: f64 = rng.random_range(0.0..0.6);
            let e = RateExponents::new(s, r, ka, kb).unwrap();
            let iid = iid_location_feasible(&e);
            let spiked = spiked_feasible(&e, 0.0, 0.0).unwrap();
            assert_eq!(iid.slack.to_bits(), spiked.slack.to_bits());
        }
    }

    #[test]
    fn grouped_matches_iid_slack_without_kappa_clause() {
        for (ka, kb) in [(0.1, 0.01), (0.0, 0.0), (0.3, 0.1)] {
            let e = RateExponents::new(0.5, 0.8, ka, kb).unwrap();
            let g = grouped_feasible(&e, 0.1).unwrap();
            assert_eq!(g.slack, iid_location_feasible(&e).slack);
            assert_eq!(g.feasible, g.slack >= 0.0);
        }
        let e = RateExponents::new(0.5, 0.8, 0.1, 0.01).unwrap();
        assert!(grouped_feasible(&e, 0.5).is_err());
        assert!(grouped_feasible(&e, -0.1).is_err());
    }

    #[test]
    fn slack_monotonicity() {
        let base = RateExponents::new(0.4, 0.7, 0.1, 0.05).unwrap();
        let s0 = iid_location_feasible(&base).slack;
        let bump =
            |s, r, ka, kb| iid_location_feasible(&RateExponents::new(s, r, ka, kb).unwrap()).slack;
        assert!(bump(0.45, 0.7, 0.1, 0.05) < s0); // s up -> slack down
        assert!(bump(0.4, 0.75, 0.1, 0.05) > s0); // r up -> slack up
        assert!(bump(0.4, 0.7, 0.15, 0.05) < s0);
        assert!(bump(0.4, 0.7, 0.1, 0.08) < s0);
        // rho up -> spiked slack up
        let lo = spiked_feasible(&base, 0.2, 0.2).unwrap().slack;
        let hi = spiked_feasible(&base, 0.5, 0.5).unwrap().slack;
        assert!(hi > lo);
    }

    #[test]
    fn scale_bound_fixture() {
        let v = scale_sigma_lower(0.5, 0.01, 0.01, 100, 0.25, 0.0).unwrap();
        assert_abs_diff_eq!(v, 2.57272483461052, epsilon = 1e-9);
        // eta rescales linearly
        let half = scale_sigma_lower(0.5, 0.01, 0.01, 100, 0.25, 0.5).unwrap();
        assert_abs_diff_eq!(half, v / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn scale_bound_preconditions() {
        assert!(scale_sigma_lower(0.0, 0.01, 0.01, 100, 0.25, 0.0).is_err());
        assert!(scale_sigma_lower(1.0, 0.01, 0.01, 100, 0.25, 0.0).is_err());
        // max(alpha, beta) above 1/(3 c0) = 1/96
        assert!(scale_sigma_lower(0.5, 0.02, 0.01, 100, 0.25, 0.0).is_err());
        assert!(scale_sigma_lower(0.5, 0.01, 0.01, 100, 0.25, 1.0).is_err());
    }

    #[test]
    fn scale_bound_monotonicity() {
        let at = |s_n, a, b| scale_sigma_lower(s_n, a, b, 1000, 0.25, 0.0).unwrap();
        assert!(at(0.6, 0.005, 0.005) > at(0.5, 0.005, 0.005));
        assert!(at(0.5, 0.005, 0.002) > at(0.5, 0.005, 0.005)); // beta down -> bound up
        assert!(at(0.5, 0.002, 0.005) > at(0.5, 0.005, 0.005)); // alpha down -> bound up
    }

    /// Asymptotic display: with alpha = n^-ka, beta = n^-kb and
    /// m = n^(1-s), the bound tracks n^kb * sqrt(2 (s + ka) log n) up to
    /// a slowly drifting constant.
    #[test]
    fn scale_bound_asymptotic_trend() {
        let (s, ka, kb) = (0.25, 0.7, 0.7);
        let mut ratios = Vec::new();
        for n in [1e3f64, 1e4, 1e5] {
            let m = n.powf(1.0 - s).round() as usize;
            let alpha = n.powf(-ka);
            let beta = n.powf(-kb);
            let bound = scale_sigma_lower(s, alpha, beta, m, 0.25, 0.0).unwrap();
            let display = n.powf(kb) * (2.0 * (s + ka) * n.ln()).sqrt();
            ratios.push(bound / display);
        }
        for w in ratios.windows(2) {
            let drift = w[1] / w[0];
            assert!(
                (0.85..=1.18).contains(&drift),
                "ratio drift {drift} across a decade ({ratios:?})"
            );
        }
    }

    #[test]
    fn lehmann_bound_fixture() {
        let b = lehmann_gamma_lower(0.001, 0.01, 0.25, 100, 10_000).unwrap();
        assert_abs_diff_eq!(b.t_param, 0.32595917942265423, epsilon = 1e-12);
        assert_abs_diff_eq!(b.inv_gamma_lb, 13.72160642161975, epsilon = 1e-9);
    }

    #[test]
    fn lehmann_bound_vacuous_limit_and_errors() {
        // beta near eps/3 pushes t to 1 and the bound collapses
        let near = lehmann_gamma_lower(1e-6, 0.075, 0.25, 10_000, 1_000_000).unwrap();
        assert!(near.t_param > 0.9);
        assert!(
            near.inv_gamma_lb
                < lehmann_gamma_lower(1e-6, 0.01, 0.25, 10_000, 1_000_000)
                    .unwrap()
                    .inv_gamma_lb
        );
        // t >= 1 is rejected
        assert!(lehmann_gamma_lower(1e-6, 0.0833, 0.25, 100, 10_000).is_err());
        // alpha above eps/3 or zero
        assert!(lehmann_gamma_lower(0.1, 0.01, 0.25, 100, 10_000).is_err());
        assert!(lehmann_gamma_lower(0.0, 0.01, 0.25, 100, 10_000).is_err());
    }

    #[test]
    fn lehmann_bound_monotonicity() {
        let at = |a, b| {
            lehmann_gamma_lower(a, b, 0.25, 100, 10_000)
                .unwrap()
                .inv_gamma_lb
        };
        assert!(at(0.001, 0.005) > at(0.001, 0.01)); // beta down -> bound up
        assert!(at(0.0005, 0.01) > at(0.001, 0.01)); // alpha down -> bound up
    }

    /// High-level scaling `1/gamma >~ (1/beta) log(1/(pi1 alpha))`:
    /// halving beta roughly doubles the bound, and the bound tracks
    /// `log(1/(pi1 alpha))` as alpha shrinks by decades.
    #[test]
    fn lehmann_bound_simplified_trend() {
        let (m, n) = (10_000usize, 1_000_000usize);
        let at = |a: f64, b: f64| lehmann_gamma_lower(a, b, 0.25, m, n).unwrap().inv_gamma_lb;
        let ratio = at(1e-4, 0.001) / at(1e-4, 0.002);
        assert!((1.5..=2.5).contains(&ratio), "beta halving ratio {ratio}");

        let pi1 = m as f64 / n as f64;
        let log_ratio = at(1e-5, 0.001) / at(1e-3, 0.001);
        let expected = (1.0 / (pi1 * 1e-5)).ln() / (1.0 / (pi1 * 1e-3)).ln();
        assert!(
            (log_ratio / expected - 1.0).abs() < 0.25,
            "log trend {log_ratio} vs {expected}"
        );
    }
}
