//! Model families: the tuple `(P_n, f)` behind a testing problem.
//!
//! A problem instance draws a base vector `W` of length `n` from `P_n`
//! and observes `X_i = W_i` for nulls, `X_i = f(W_i)` for signals, with
//! `f` non-decreasing and `f(w) >= w` on the support. Statistics live on
//! the "larger is more significant" scale; for the Lehmann family the
//! statistic is `w` itself and `1 - w` plays the role of the p-value.
//!
//! Signal placement is fixed at the first `m` indices: every quantity
//! computed downstream is permutation-invariant, and fixed placement
//! keeps tests exact. The grouped family then assigns the next
//! `m * group_size` indices to the coupled null groups, in order.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, StreamDomain};

/// One concrete model: a family tag plus its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelConfig", into = "ModelConfig")]
pub enum ModelSpec {
    /// `W` iid standard normal, `f(w) = w + mu`.
    IidLocation { n: usize, m: usize, mu: f64 },
    /// `W` iid |standard normal|, `f(w) = sigma * w`.
    IidScale { n: usize, m: usize, sigma: f64 },
    /// Doubly-spiked Gaussian dependence: unit variances, correlation
    /// `rho0` within nulls, `rho1` within signals, `cross_sign * rho_cross`
    /// across, with a location shift on signals.
    Spiked {
        n: usize,
        m: usize,
        mu: f64,
        rho0: f64,
        rho1: f64,
        rho_cross: f64,
        cross_sign: i8,
    },
    /// Each signal is copied exactly into its own set of `group_size`
    /// nulls; remaining nulls are independent; location shift on signals.
    Grouped {
        n: usize,
        m: usize,
        mu: f64,
        group_size: usize,
    },
    /// `W` iid uniform on (0,1), `f(w) = 1 - (1 - w)^(1/gamma)`; the
    /// signal p-values `1 - x` then have CDF `p^gamma`.
    Lehmann { n: usize, m: usize, gamma: f64 },
}

impl ModelSpec {
    pub fn iid_location(n: usize, m: usize, mu: f64) -> Result<Self> {
        let spec = ModelSpec::IidLocation { n, m, mu };
        spec.validate()?;
        Ok(spec)
    }

    pub fn iid_scale(n: usize, m: usize, sigma: f64) -> Result<Self> {
        let spec = ModelSpec::IidScale { n, m, sigma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn spiked(
        n: usize,
        m: usize,
        mu: f64,
        rho0: f64,
        rho1: f64,
        rho_cross: f64,
        cross_sign: i8,
    ) -> Result<Self> {
        let spec = ModelSpec::Spiked {
            n,
            m,
            mu,
            rho0,
            rho1,
            rho_cross,
            cross_sign,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn grouped(n: usize, m: usize, mu: f64, group_size: usize) -> Result<Self> {
        let spec = ModelSpec::Grouped {
            n,
            m,
            mu,
            group_size,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn lehmann(n: usize, m: usize, gamma: f64) -> Result<Self> {
        let spec = ModelSpec::Lehmann { n, m, gamma };
        spec.validate()?;
        Ok(spec)
    }

    /// Rare-weak parameterization of the location model: `mu = sqrt(2 r log n)`.
    pub fn rare_weak(n: usize, m: usize, r: f64) -> Result<Self> {
        if r.is_nan() || r <= 0.0 {
            return Err(Error::parameter(format!("r must be positive, got {r}")));
        }
        Self::iid_location(n, m, (2.0 * r * (n as f64).ln()).sqrt())
    }

    pub fn n(&self) -> usize {
        match *self {
            ModelSpec::IidLocation { n, .. }
            | ModelSpec::IidScale { n, .. }
            | ModelSpec::Spiked { n, .. }
            | ModelSpec::Grouped { n, .. }
            | ModelSpec::Lehmann { n, .. } => n,
        }
    }

    pub fn m(&self) -> usize {
        match *self {
            ModelSpec::IidLocation { m, .. }
            | ModelSpec::IidScale { m, .. }
            | ModelSpec::Spiked { m, .. }
            | ModelSpec::Grouped { m, .. }
            | ModelSpec::Lehmann { m, .. } => m,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            ModelSpec::IidLocation { .. } => "iid_location",
            ModelSpec::IidScale { .. } => "iid_scale",
            ModelSpec::Spiked { .. } => "spiked",
            ModelSpec::Grouped { .. } => "grouped",
            ModelSpec::Lehmann { .. } => "lehmann",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.n(), self.m());
        if m < 1 || m >= n {
            return Err(Error::parameter(format!(
                "need 1 <= m < n, got m = {m}, n = {n}"
            )));
        }
        match *self {
            ModelSpec::IidLocation { mu, .. } => {
                if !mu.is_finite() || mu < 0.0 {
                    return Err(Error::parameter(format!("mu must be >= 0, got {mu}")));
                }
            }
            ModelSpec::IidScale { sigma, .. } => {
                if !sigma.is_finite() || sigma < 1.0 {
                    return Err(Error::parameter(format!("sigma must be >= 1, got {sigma}")));
                }
            }
            ModelSpec::Spiked {
                mu,
                rho0,
                rho1,
                rho_cross,
                cross_sign,
                ..
            } => {
                if !mu.is_finite() || mu < 0.0 {
                    return Err(Error::parameter(format!("mu must be >= 0, got {mu}")));
                }
                for (name, rho) in [("rho0", rho0), ("rho1", rho1), ("rhoc", rho_cross)] {
                    if !(0.0..1.0).contains(&rho) {
                        return Err(Error::parameter(format!(
                            "{name} must lie in [0, 1), got {rho}"
                        )));
                    }
                }
                // The three-factor sampler needs rhoc <= min(rho0, rho1).
                if rho_cross > rho0.min(rho1) {
                    return Err(Error::parameter(format!(
                        "rhoc = {rho_cross} exceeds min(rho0, rho1) = {}; \
                         the factor construction requires rhoc <= min(rho0, rho1)",
                        rho0.min(rho1)
                    )));
                }
                if cross_sign != 1 && cross_sign != -1 {
                    return Err(Error::parameter(format!(
                        "cross_sign must be +1 or -1, got {cross_sign}"
                    )));
                }
            }
            ModelSpec::Grouped { mu, group_size, .. } => {
                if !mu.is_finite() || mu < 0.0 {
                    return Err(Error::parameter(format!("mu must be >= 0, got {mu}")));
                }
                if group_size < 1 || group_size > m {
                    return Err(Error::parameter(format!(
                        "group_size must satisfy 1 <= A <= m = {m}, got {group_size}"
                    )));
                }
                if m * group_size > n - m {
                    return Err(Error::parameter(format!(
                        "grouped model needs m * A <= n - m nulls, got m = {m}, A = {group_size}, n = {n}"
                    )));
                }
            }
            ModelSpec::Lehmann { gamma, .. } => {
                if gamma.is_nan() || gamma <= 0.0 || gamma >= 1.0 {
                    return Err(Error::parameter(format!(
                        "gamma must lie in (0, 1), got {gamma}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// The signal transform `f`, non-decreasing with `f(w) >= w` on the
    /// base support.
    pub fn transform(&self, w: f64) -> Result<f64> {
        match *self {
            ModelSpec::IidLocation { mu, .. }
            | ModelSpec::Spiked { mu, .. }
            | ModelSpec::Grouped { mu, .. } => Ok(w + mu),
            ModelSpec::IidScale { sigma, .. } => Ok(sigma * w),
            ModelSpec::Lehmann { gamma, .. } => {
                if !(0.0..1.0).contains(&w) {
                    return Err(Error::Domain(format!(
                        "Lehmann transform needs w in [0, 1), got {w}"
                    )));
                }
                Ok(1.0 - (1.0 - w).powf(1.0 / gamma))
            }
        }
    }
}

/// Partition of `[n]` into nulls and signals, plus the null groups of
/// the grouped family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignalLayout {
    n: usize,
    signals: Vec<usize>,
    nulls: Vec<usize>,
    groups: Option<Vec<Vec<usize>>>,
    signal_mask: Vec<bool>,
}

impl SignalLayout {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.signals.len()
    }

    pub fn signals(&self) -> &[usize] {
        &self.signals
    }

    pub fn nulls(&self) -> &[usize] {
        &self.nulls
    }

    /// Null groups of the grouped family: `groups()[g]` are the nulls
    /// coupled to signal `signals()[g]`.
    pub fn groups(&self) -> Option<&[Vec<usize>]> {
        self.groups.as_deref()
    }

    pub fn is_signal(&self, index: usize) -> bool {
        self.signal_mask[index]
    }
}

/// Builds the canonical layout: signals at `0..m`; for the grouped
/// family the next `m * A` indices form the null groups in order.
pub fn build_layout(spec: &ModelSpec) -> Result<SignalLayout> {
    spec.validate()?;
    let (n, m) = (spec.n(), spec.m());
    let signals: Vec<usize> = (0..m).collect();
    let nulls: Vec<usize> = (m..n).collect();
    let mut signal_mask = vec![false; n];
    for &i in &signals {
        signal_mask[i] = true;
    }
    let groups = match *spec {
        ModelSpec::Grouped { group_size, .. } => Some(
            (0..m)
                .map(|g| (m + g * group_size..m + (g + 1) * group_size).collect())
                .collect(),
        ),
        _ => None,
    };
    Ok(SignalLayout {
        n,
        signals,
        nulls,
        groups,
        signal_mask,
    })
}

/// Draws the base vector `W ~ P_n`.
///
/// Draw order is fixed (shared factors first, then per-index noise) so a
/// given `(spec, layout, stream)` always reproduces the same vector.
pub fn sample_base<R: Rng + ?Sized>(
    spec: &ModelSpec,
    layout: &SignalLayout,
    rng: &mut R,
) -> Vec<f64> {
    let n = layout.n();
    match *spec {
        ModelSpec::IidLocation { .. } => (0..n).map(|_| rng.sample(StandardNormal)).collect(),
        ModelSpec::IidScale { .. } => (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal).abs())
            .collect(),
        ModelSpec::Spiked {
            rho0,
            rho1,
            rho_cross,
            cross_sign,
            ..
        } => {
            let v0: f64 = rng.sample(StandardNormal);
            let v1: f64 = rng.sample(StandardNormal);
            let vc: f64 = rng.sample(StandardNormal);
            let (cu0, cv0) = ((1.0 - rho0).sqrt(), (rho0 - rho_cross).sqrt());
            let (cu1, cv1) = ((1.0 - rho1).sqrt(), (rho1 - rho_cross).sqrt());
            let cc = rho_cross.sqrt();
            let sign = f64::from(cross_sign);
            (0..n)
                .map(|i| {
                    let u: f64 = rng.sample(StandardNormal);
                    if layout.is_signal(i) {
                        cu1 * u + cv1 * v1 + sign * cc * vc
                    } else {
                        cu0 * u + cv0 * v0 + cc * vc
                    }
                })
                .collect()
        }
        ModelSpec::Grouped { .. } => {
            let m = layout.m();
            let signal_w: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
            let groups = layout.groups().expect("grouped layout carries groups");
            let mut group_of = vec![usize::MAX; n];
            for (g, members) in groups.iter().enumerate() {
                for &i in members {
                    group_of[i] = g;
                }
            }
            (0..n)
                .map(|i| {
                    if layout.is_signal(i) {
                        signal_w[i]
                    } else if group_of[i] != usize::MAX {
                        signal_w[group_of[i]]
                    } else {
                        rng.sample(StandardNormal)
                    }
                })
                .collect()
        }
        ModelSpec::Lehmann { .. } => (0..n).map(|_| rng.random::<f64>()).collect(),
    }
}

/// Applies the signal transform: `x_i = w_i` for nulls, `f(w_i)` for
/// signals.
pub fn apply_alternative(spec: &ModelSpec, w: &[f64], layout: &SignalLayout) -> Result<Vec<f64>> {
    if w.len() != layout.n() {
        return Err(Error::parameter(format!(
            "base vector has length {}, layout expects {}",
            w.len(),
            layout.n()
        )));
    }
    w.iter()
        .enumerate()
        .map(|(i, &wi)| {
            if layout.is_signal(i) {
                spec.transform(wi)
            } else {
                Ok(wi)
            }
        })
        .collect()
}

/// One sampled problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub w: Vec<f64>,
    pub x: Vec<f64>,
    pub replicate_index: u64,
}

/// Draws replicate `replicate_index` of the model under `master_seed`.
pub fn sample_batch(
    spec: &ModelSpec,
    layout: &SignalLayout,
    replicate_index: u64,
    master_seed: u64,
) -> Result<SampleBatch> {
    let mut rng = substream(master_seed, StreamDomain::Replicates, replicate_index);
    let w = sample_base(spec, layout, &mut rng);
    let x = apply_alternative(spec, &w, layout)?;
    Ok(SampleBatch {
        w,
        x,
        replicate_index,
    })
}

/// Flat key-value form of [`ModelSpec`] used in JSON configs. Keys that
/// do not belong to the declared family are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: String,
    pub n: usize,
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rhoc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_sign: Option<i8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_size: Option<usize>,
}

impl ModelConfig {
    fn take(&self, key: &str) -> Result<f64> {
        let v = match key {
            "mu" => self.mu,
            "sigma" => self.sigma,
            "gamma" => self.gamma,
            "rho0" => self.rho0,
            "rho1" => self.rho1,
            "rhoc" => self.rhoc,
            _ => unreachable!(),
        };
        v.ok_or_else(|| Error::Config(format!("family `{}` requires key `{key}`", self.family)))
    }

    fn reject_unused(&self, used: &[&str]) -> Result<()> {
        let present: [(&str, bool); 8] = [
            ("mu", self.mu.is_some()),
            ("sigma", self.sigma.is_some()),
            ("gamma", self.gamma.is_some()),
            ("rho0", self.rho0.is_some()),
            ("rho1", self.rho1.is_some()),
            ("rhoc", self.rhoc.is_some()),
            ("cross_sign", self.cross_sign.is_some()),
            ("group_size", self.group_size.is_some()),
        ];
        for (key, is_set) in present {
            if is_set && !used.contains(&key) {
                return Err(Error::Config(format!(
                    "key `{key}` does not apply to family `{}`",
                    self.family
                )));
            }
        }
        Ok(())
    }
}

impl TryFrom<ModelConfig> for ModelSpec {
    type Error = Error;

    fn try_from(cfg: ModelConfig) -> Result<Self> {
        let (n, m) = (cfg.n, cfg.m);
        match cfg.family.as_str() {
            "iid_location" => {
                cfg.reject_unused(&["mu"])?;
                ModelSpec::iid_location(n, m, cfg.take("mu")?)
            }
            "iid_scale" => {
                cfg.reject_unused(&["sigma"])?;
                ModelSpec::iid_scale(n, m, cfg.take("sigma")?)
            }
            "spiked" => {
                cfg.reject_unused(&["mu", "rho0", "rho1", "rhoc", "cross_sign"])?;
                ModelSpec::spiked(
                    n,
                    m,
                    cfg.take("mu")?,
                    cfg.take("rho0")?,
                    cfg.take("rho1")?,
                    cfg.take("rhoc")?,
                    cfg.cross_sign.unwrap_or(1),
                )
            }
            "grouped" => {
                cfg.reject_unused(&["mu", "group_size"])?;
                let a = cfg.group_size.ok_or_else(|| {
                    Error::Config("family `grouped` requires key `group_size`".into())
                })?;
                ModelSpec::grouped(n, m, cfg.take("mu")?, a)
            }
            "lehmann" => {
                cfg.reject_unused(&["gamma"])?;
                ModelSpec::lehmann(n, m, cfg.take("gamma")?)
            }
            other => Err(Error::Config(format!(
                "unknown family `{other}`; expected one of iid_location, iid_scale, spiked, grouped, lehmann"
            ))),
        }
    }
}

impl From<ModelSpec> for ModelConfig {
    fn from(spec: ModelSpec) -> Self {
        let mut cfg = ModelConfig {
            family: spec.family_name().to_owned(),
            n: spec.n(),
            m: spec.m(),
            mu: None,
            sigma: None,
            gamma: None,
            rho0: None,
            rho1: None,
            rhoc: None,
            cross_sign: None,
            group_size: None,
        };
        match spec {
            ModelSpec::IidLocation { mu, .. } => cfg.mu = Some(mu),
            ModelSpec::IidScale { sigma, .. } => cfg.sigma = Some(sigma),
            ModelSpec::Spiked {
                mu,
                rho0,
                rho1,
                rho_cross,
                cross_sign,
                ..
            } => {
                cfg.mu = Some(mu);
                cfg.rho0 = Some(rho0);
                cfg.rho1 = Some(rho1);
                cfg.rhoc = Some(rho_cross);
                cfg.cross_sign = Some(cross_sign);
            }
            ModelSpec::Grouped { mu, group_size, .. } => {
                cfg.mu = Some(mu);
                cfg.group_size = Some(group_size);
            }
            ModelSpec::Lehmann { gamma, .. } => cfg.gamma = Some(gamma),
        }
        cfg
    }
}
