//! The tradeoff-frontier experiment: a grid of FDR levels, the
//! theoretical lower bound on FNR at each level, the FNR that BH
//! actually attains, and a single model-independent calibration constant
//! fitted by constrained least squares.
//!
//! One replicate batch per model feeds every grid point of the lower
//! curve, and one trial set per model feeds every BH level, so both
//! curves are exactly monotone in the grid rather than monotone up to
//! Monte-Carlo noise.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{apply_alternative, build_layout, sample_base, ModelSpec, SignalLayout};
use crate::procedures::to_pvalues;
use crate::proxies::{
    c0, k_plus, minus_proxies_on_batch, plus_proxies_on_batch, BatchMode, MinusProxies,
    ReplicateBatch,
};
use crate::rng::{mix_seed, substream, StreamDomain};

/// Grid of FDR levels: `{eps/B * b : b in [0, B)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub b: usize,
    pub epsilon: f64,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.b < 2 {
            return Err(Error::parameter(format!(
                "grid needs at least 2 points, got {}",
                self.b
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0 / 3.0) {
            return Err(Error::parameter(format!(
                "epsilon must lie in (0, 1/3), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// The FDR levels of the grid; strictly below `epsilon`.
pub fn fdr_grid(grid: &GridSpec) -> Result<Vec<f64>> {
    grid.validate()?;
    Ok((0..grid.b)
        .map(|b| grid.epsilon * b as f64 / grid.b as f64)
        .collect())
}

/// One grid point of the theoretical lower-bound curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerPoint {
    pub alpha: f64,
    pub beta_lo: f64,
    /// No beta on the grid was consistent with the bounds; `beta_lo`
    /// holds the grid maximum and is not a certified bound.
    pub unbounded: bool,
    /// The `k-* = 0` degenerate regime was hit while scanning.
    pub degenerate: bool,
}

/// Smallest FNR consistent with the proxy lower bounds at each grid FDR.
///
/// For each grid `alpha`, scans a beta grid of the same resolution
/// (capped below `epsilon/2`) for the first value satisfying
///
/// * `alpha >= FDP-*(beta)/c0` and `beta >= FNP+*(alpha)/c0`, and,
/// * when `2 max(alpha, beta) < epsilon` (the regime where the max-type
///   bounds are in force): `max(alpha, beta) >= FNP-*(beta)/c0` and
///   `max(alpha, beta) >= FDP+*(alpha)/c0`.
///
/// All proxies come from one shared replicate batch.
pub fn lower_curve(
    spec: &ModelSpec,
    layout: &SignalLayout,
    grid: &[f64],
    epsilon: f64,
    replicates: usize,
    master_seed: u64,
) -> Result<Vec<LowerPoint>> {
    if grid.is_empty() {
        return Ok(Vec::new());
    }
    let mut alpha_max: f64 = 0.0;
    for &alpha in grid {
        if !(0.0..1.0).contains(&alpha) || alpha >= epsilon {
            return Err(Error::parameter(format!(
                "grid alpha = {alpha} must satisfy 0 <= alpha < epsilon = {epsilon}"
            )));
        }
        alpha_max = alpha_max.max(alpha);
    }
    let c = c0(epsilon)?;
    let (m, n) = (layout.m(), layout.n());
    let max_rank = k_plus(alpha_max, epsilon, m, n)?.max(1);
    let batch = ReplicateBatch::generate(
        spec,
        layout,
        max_rank,
        replicates,
        master_seed,
        BatchMode::Counts,
    )?;

    let betas: Vec<f64> = grid
        .iter()
        .copied()
        .filter(|&b| b < epsilon / 2.0)
        .collect();
    let minus: Vec<MinusProxies> = betas
        .iter()
        .map(|&beta| minus_proxies_on_batch(&batch, beta, epsilon))
        .collect::<Result<_>>()?;

    let mut points = Vec::with_capacity(grid.len());
    for &alpha in grid {
        let plus = plus_proxies_on_batch(&batch, alpha, epsilon)?;
        let mut found = None;
        for (mp, &beta) in minus.iter().zip(&betas) {
            let direct_ok = alpha >= mp.fdp_minus / c && beta >= plus.fnp_plus / c;
            let in_regime = 2.0 * alpha.max(beta) < epsilon;
            let max_ok = !in_regime
                || (alpha.max(beta) >= mp.fnp_minus / c && alpha.max(beta) >= plus.fdp_plus / c);
            if direct_ok && max_ok {
                found = Some((beta, mp.degenerate));
                break;
            }
        }
        let point = match found {
            Some((beta, degenerate)) => LowerPoint {
                alpha,
                beta_lo: beta,
                unbounded: false,
                degenerate,
            },
            None => LowerPoint {
                alpha,
                beta_lo: betas.last().copied().unwrap_or(0.0),
                unbounded: true,
                degenerate: minus.last().is_some_and(|mp| mp.degenerate),
            },
        };
        points.push(point);
    }
    Ok(points)
}

/// One grid point of the BH tradeoff curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BhPoint {
    pub alpha: f64,
    pub beta_bh: f64,
    pub beta_bh_se: f64,
    /// The FDR the procedure actually realized at level `q = alpha`
    /// (about `alpha * (n - m) / n`).
    pub fdr_realized: f64,
}

/// BH's attained FNR at each grid level, with `q` mapped 1:1 to the grid
/// value. `q = 0` rejects nothing (FNR exactly 1). All levels are
/// evaluated on the same trials, so the curve is exactly non-increasing.
pub fn bh_curve(
    spec: &ModelSpec,
    layout: &SignalLayout,
    grid: &[f64],
    trials: usize,
    master_seed: u64,
) -> Result<Vec<BhPoint>> {
    if trials < 2 {
        return Err(Error::parameter("need at least 2 trials"));
    }
    for &q in grid {
        if !(0.0..1.0).contains(&q) {
            return Err(Error::parameter(format!("grid level {q} outside [0, 1)")));
        }
    }
    spec.validate()?;
    let (n, m) = (layout.n(), layout.m());
    // rows[t][g] = (fdp, fnp) of BH at grid level g in trial t
    let rows: Vec<Vec<(f64, f64)>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| -> Result<Vec<(f64, f64)>> {
            let mut rng = substream(master_seed, StreamDomain::Trials, t);
            let w = sample_base(spec, layout, &mut rng);
            let x = apply_alternative(spec, &w, layout)?;
            let p = to_pvalues(spec, &x)?;
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_unstable_by(|&i, &j| p[i].total_cmp(&p[j]).then(i.cmp(&j)));
            // prefix_signals[k] = signals among the k smallest p-values
            let mut prefix_signals = vec![0usize; n + 1];
            for (pos, &idx) in order.iter().enumerate() {
                prefix_signals[pos + 1] = prefix_signals[pos] + usize::from(layout.is_signal(idx));
            }
            Ok(grid
                .iter()
                .map(|&q| {
                    if q == 0.0 {
                        return (0.0, 1.0);
                    }
                    let mut k_used = 0;
                    for (pos, &idx) in order.iter().enumerate() {
                        if p[idx] <= (pos + 1) as f64 * q / n as f64 {
                            k_used = pos + 1;
                        }
                    }
                    let true_disc = prefix_signals[k_used];
                    let fdp = (k_used - true_disc) as f64 / k_used.max(1) as f64;
                    let fnp = (m - true_disc) as f64 / m as f64;
                    (fdp, fnp)
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let t_f = trials as f64;
    Ok(grid
        .iter()
        .enumerate()
        .map(|(g, &alpha)| {
            let fnps: Vec<f64> = rows.iter().map(|r| r[g].1).collect();
            let mean = fnps.iter().sum::<f64>() / t_f;
            let var = fnps.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (t_f - 1.0);
            let fdr = rows.iter().map(|r| r[g].0).sum::<f64>() / t_f;
            BhPoint {
                alpha,
                beta_bh: mean,
                beta_bh_se: (var / t_f).sqrt(),
                fdr_realized: fdr,
            }
        })
        .collect())
}

/// The calibration constant and its unconstrained counterpart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub c_hat: f64,
    pub c_hat0: f64,
    /// No usable points (every `beta_lo` was 0); both constants default
    /// to 1.
    pub skipped: bool,
}

/// Least-squares fit of a single constant `c` scaling the lower curve
/// onto the BH curve, subject to `c * beta_lo <= beta_bh` pointwise:
/// `c_hat0 = sum(beta_bh) / sum(beta_lo)` clamped by the smallest
/// pointwise ratio. Points with `beta_lo = 0` carry no constraint and
/// are excluded.
pub fn calibrate(points: &[(f64, f64)]) -> Calibration {
    let included: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(beta_lo, _)| beta_lo > 0.0)
        .collect();
    if included.is_empty() {
        return Calibration {
            c_hat: 1.0,
            c_hat0: 1.0,
            skipped: true,
        };
    }
    let sum_bh: f64 = included.iter().map(|p| p.1).sum();
    let sum_lo: f64 = included.iter().map(|p| p.0).sum();
    let c_hat0 = sum_bh / sum_lo;
    let min_ratio = included
        .iter()
        .map(|&(lo, bh)| bh / lo)
        .fold(f64::INFINITY, f64::min);
    Calibration {
        c_hat: c_hat0.min(min_ratio),
        c_hat0,
        skipped: false,
    }
}

/// One row of the frontier output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub alpha: f64,
    pub beta_lo: f64,
    pub beta_lo_unbounded: bool,
    pub beta_lo_degenerate: bool,
    pub beta_bh: f64,
    pub beta_bh_se: f64,
    pub fdr_realized: f64,
}

/// Curves for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierModelResult {
    pub model: ModelSpec,
    pub points: Vec<FrontierPoint>,
}

/// A complete frontier run: per-model curves plus one pooled calibration
/// constant. The embedded parameters make the output self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierResult {
    pub epsilon: f64,
    pub grid_b: usize,
    pub replicates: usize,
    pub trials: usize,
    pub seed: u64,
    pub c_hat: f64,
    pub c_hat0: f64,
    pub calibration_skipped: bool,
    pub models: Vec<FrontierModelResult>,
}

impl FrontierResult {
    /// Points that certify a lower bound (finite, nonzero `beta_lo`).
    fn calibration_points(&self) -> Vec<(f64, f64)> {
        self.models
            .iter()
            .flat_map(|m| m.points.iter())
            .filter(|p| !p.beta_lo_unbounded)
            .map(|p| (p.beta_lo, p.beta_bh))
            .collect()
    }
}

/// Runs the full experiment over one or more models. Model `i` uses the
/// child seed `mix_seed(master_seed, i)`.
pub fn run_frontier(
    specs: &[ModelSpec],
    grid_spec: &GridSpec,
    replicates: usize,
    trials: usize,
    master_seed: u64,
) -> Result<FrontierResult> {
    if specs.is_empty() {
        return Err(Error::parameter("no models given"));
    }
    let grid = fdr_grid(grid_spec)?;
    let mut models = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let seed = mix_seed(master_seed, i as u64);
        let layout = build_layout(spec)?;
        let lower = lower_curve(spec, &layout, &grid, grid_spec.epsilon, replicates, seed)?;
        let bh = bh_curve(spec, &layout, &grid, trials, seed)?;
        let points = lower
            .iter()
            .zip(&bh)
            .map(|(lo, b)| FrontierPoint {
                alpha: lo.alpha,
                beta_lo: lo.beta_lo,
                beta_lo_unbounded: lo.unbounded,
                beta_lo_degenerate: lo.degenerate,
                beta_bh: b.beta_bh,
                beta_bh_se: b.beta_bh_se,
                fdr_realized: b.fdr_realized,
            })
            .collect();
        models.push(FrontierModelResult {
            model: spec.clone(),
            points,
        });
    }
    let mut result = FrontierResult {
        epsilon: grid_spec.epsilon,
        grid_b: grid_spec.b,
        replicates,
        trials,
        seed: master_seed,
        c_hat: 1.0,
        c_hat0: 1.0,
        calibration_skipped: true,
        models,
    };
    let cal = calibrate(&result.calibration_points());
    result.c_hat = cal.c_hat;
    result.c_hat0 = cal.c_hat0;
    result.calibration_skipped = cal.skipped;
    Ok(result)
}

/// Writes the frontier as CSV (fixed 6-decimal fields; models appear in
/// run order). Byte-stable for identical inputs.
pub fn write_csv<W: Write>(result: &FrontierResult, out: &mut W) -> Result<()> {
    writeln!(out, "alpha,beta_lo,beta_lo_calibrated,beta_bh,beta_bh_se")?;
    for model in &result.models {
        for p in &model.points {
            writeln!(
                out,
                "{:.6},{:.6},{:.6},{:.6},{:.6}",
                p.alpha,
                p.beta_lo,
                result.c_hat * p.beta_lo,
                p.beta_bh,
                p.beta_bh_se
            )?;
        }
    }
    Ok(())
}

/// JSON form of the frontier, including the run parameters.
pub fn to_json(result: &FrontierResult) -> Result<String> {
    serde_json::to_string_pretty(result)
        .map_err(|e| Error::Config(format!("serialization failed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn fdr_grid_fixtures() {
        let grid = fdr_grid(&GridSpec {
            b: 25,
            epsilon: 0.25,
        })
        .unwrap();
        assert_eq!(grid.len(), 25);
        assert_eq!(grid[0], 0.0);
        assert_abs_diff_eq!(grid[1], 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(grid[24], 0.24, epsilon = 1e-15);
        assert!(grid.iter().all(|&a| a < 0.25));

        let grid = fdr_grid(&GridSpec {
            b: 2,
            epsilon: 0.25,
        })
        .unwrap();
        assert_eq!(grid, vec![0.0, 0.125]);

        assert!(fdr_grid(&GridSpec {
            b: 1,
            epsilon: 0.25
        })
        .is_err());
        assert!(fdr_grid(&GridSpec {
            b: 25,
            epsilon: 0.4
        })
        .is_err());
    }

    #[test]
    fn calibrate_fixtures() {
        let c = calibrate(&[(0.1, 0.2), (0.1, 0.4)]);
        assert_abs_diff_eq!(c.c_hat0, 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.c_hat, 2.0, epsilon = 1e-15);
        assert!(!c.skipped);

        let c = calibrate(&[(0.2, 0.2), (0.35, 0.35)]);
        assert_abs_diff_eq!(c.c_hat, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.c_hat0, 1.0, epsilon = 1e-15);

        let c = calibrate(&[(0.1, 0.3)]);
        assert_abs_diff_eq!(c.c_hat, 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.c_hat0, 3.0, epsilon = 1e-15);

        let c = calibrate(&[(0.0, 0.5), (0.0, 0.9)]);
        assert!(c.skipped);
        assert_eq!((c.c_hat, c.c_hat0), (1.0, 1.0));
    }

    #[test]
    fn calibrate_never_exceeds_unconstrained_fit() {
        // c_hat0 is a weighted mean of the pointwise ratios, so the
        // min-ratio clamp always binds from below.
        let pts = [(0.05, 0.3), (0.1, 0.25), (0.02, 0.5), (0.08, 0.3)];
        let c = calibrate(&pts);
        assert!(c.c_hat <= c.c_hat0);
        for &(lo, bh) in &pts {
            assert!(c.c_hat * lo <= bh + 1e-12);
        }
    }

    #[test]
    fn lower_curve_infinite_separation_is_zero() {
        let spec = ModelSpec::iid_location(300, 10, 50.0).unwrap();
        let layout = build_layout(&spec).unwrap();
        let grid = fdr_grid(&GridSpec {
            b: 10,
            epsilon: 0.25,
        })
        .unwrap();
        let curve = lower_curve(&spec, &layout, &grid, 0.25, 300, 3).unwrap();
        for p in &curve {
            assert_eq!(p.beta_lo, 0.0, "alpha = {}", p.alpha);
            assert!(!p.unbounded);
        }
    }

    #[test]
    fn lower_curve_null_model_is_unbounded_at_small_alpha() {
        // mu = 0: no procedure separates, the minus-side constraint is
        // unsatisfiable at alpha = 0.
        let spec = ModelSpec::iid_location(1000, 100, 0.0).unwrap();
        let layout = build_layout(&spec).unwrap();
        let grid = fdr_grid(&GridSpec {
            b: 25,
            epsilon: 0.25,
        })
        .unwrap();
        let curve = lower_curve(&spec, &layout, &grid, 0.25, 400, 5).unwrap();
        assert!(curve[0].unbounded, "alpha = 0 must be unbounded");
        assert_abs_diff_eq!(curve[0].beta_lo, 0.12, epsilon = 1e-12);
        // and the curve never increases
        for w in curve.windows(2) {
            assert!(w[1].beta_lo <= w[0].beta_lo + 1e-15);
        }
    }

    #[test]
    fn lower_curve_rejects_alpha_at_epsilon() {
        let spec = ModelSpec::iid_location(100, 10, 1.0).unwrap();
        let layout = build_layout(&spec).unwrap();
        assert!(lower_curve(&spec, &layout, &[0.25], 0.25, 200, 1).is_err());
    }

    #[test]
    fn bh_curve_zero_level_and_monotonicity() {
        let spec = ModelSpec::rare_weak(2000, 20, 0.75).unwrap();
        let layout = build_layout(&spec).unwrap();
        let grid = fdr_grid(&GridSpec {
            b: 10,
            epsilon: 0.25,
        })
        .unwrap();
        let curve = bh_curve(&spec, &layout, &grid, 80, 7).unwrap();
        assert_eq!(curve[0].beta_bh, 1.0);
        assert_eq!(curve[0].beta_bh_se, 0.0);
        assert_eq!(curve[0].fdr_realized, 0.0);
        // shared trials make the curve exactly non-increasing
        for w in curve.windows(2) {
            assert!(w[1].beta_bh <= w[0].beta_bh + 1e-15);
        }
        // q -> 0+ limit coincides with the q = 0 row
        let tiny = bh_curve(&spec, &layout, &[0.0, 1e-12], 80, 7).unwrap();
        assert_eq!(tiny[1].beta_bh, tiny[0].beta_bh);
        assert_eq!(tiny[1].beta_bh_se, 0.0);
    }

    /// The curve's inlined step-up agrees with the standalone BH rule:
    /// same seed, same trials, bit-identical rates.
    #[test]
    fn bh_curve_matches_bh_rule() {
        use crate::procedures::{estimate_fdr_fnr, BhRule};
        let spec = ModelSpec::rare_weak(1500, 25, 0.7).unwrap();
        let layout = build_layout(&spec).unwrap();
        for q in [0.05, 0.1, 0.22] {
            let curve = bh_curve(&spec, &layout, &[q], 60, 19).unwrap();
            let rates = estimate_fdr_fnr(&spec, &layout, &BhRule { q }, 60, 19).unwrap();
            assert_eq!(curve[0].beta_bh.to_bits(), rates.fnr.to_bits());
            assert_eq!(curve[0].fdr_realized.to_bits(), rates.fdr.to_bits());
            assert_eq!(curve[0].beta_bh_se.to_bits(), rates.fnr_se.to_bits());
        }
    }

    #[test]
    fn pooled_calibration_bounds_per_model_calibration() {
        let specs = vec![
            ModelSpec::rare_weak(1000, 30, 0.75).unwrap(),
            ModelSpec::rare_weak(1000, 30, 0.55).unwrap(),
            ModelSpec::rare_weak(1000, 10, 0.65).unwrap(),
        ];
        let grid_spec = GridSpec {
            b: 10,
            epsilon: 0.25,
        };
        let pooled = run_frontier(&specs, &grid_spec, 300, 80, 11).unwrap();
        assert!(pooled.c_hat <= pooled.c_hat0 + 1e-12);
        for (i, model) in pooled.models.iter().enumerate() {
            let pts: Vec<(f64, f64)> = model
                .points
                .iter()
                .filter(|p| !p.beta_lo_unbounded)
                .map(|p| (p.beta_lo, p.beta_bh))
                .collect();
            let single = calibrate(&pts);
            if !single.skipped && !pooled.calibration_skipped {
                assert!(
                    pooled.c_hat <= single.c_hat + 1e-12,
                    "pooled {} vs model {i} {}",
                    pooled.c_hat,
                    single.c_hat
                );
            }
        }
    }

    #[test]
    fn csv_shape_and_byte_stability() {
        let specs = vec![ModelSpec::rare_weak(500, 10, 0.8).unwrap()];
        let grid_spec = GridSpec {
            b: 5,
            epsilon: 0.25,
        };
        let run = || run_frontier(&specs, &grid_spec, 200, 50, 13).unwrap();
        let (a, b) = (run(), run());
        let mut csv_a = Vec::new();
        let mut csv_b = Vec::new();
        write_csv(&a, &mut csv_a).unwrap();
        write_csv(&b, &mut csv_b).unwrap();
        assert_eq!(csv_a, csv_b);
        let text = String::from_utf8(csv_a).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with("alpha,beta_lo,beta_lo_calibrated,beta_bh,beta_bh_se\n"));

        // JSON round-trips to the same result
        let json = to_json(&a).unwrap();
        let back: FrontierResult = serde_json::from_str(&json).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn empty_points_yield_header_only_csv() {
        let result = FrontierResult {
            epsilon: 0.25,
            grid_b: 25,
            replicates: 0,
            trials: 0,
            seed: 0,
            c_hat: 1.0,
            c_hat0: 1.0,
            calibration_skipped: true,
            models: vec![],
        };
        let mut buf = Vec::new();
        write_csv(&result, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "alpha,beta_lo,beta_lo_calibrated,beta_bh,beta_bh_se\n"
        );
    }
}
