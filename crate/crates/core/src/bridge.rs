//! Conditional-path machinery.
//!
//! Training never simulates the dynamics. Instead, each drawn endpoint
//! pair `(x0, m0) -> (x1, m1)` is bridged by a Gaussian path in space
//! (the Brownian bridge law `N(eta_t, nu^2 t(1-t) I)` with
//! `eta_t = (1-t)x0 + t x1`) and a log-linear mass path
//! `m_t = m0^{1-t} m1^t`. The closed-form probability-flow drift, growth
//! rate and score of that path are the regression targets.
//!
//! [`CgmpSpec`] generalizes this to any conditional Gaussian measure path
//! `m_t N(eta_t, sigma_t^2 I)`; [`marginal_targets_oracle`] mixes several
//! conditions into exact marginal targets, which the tests use to check
//! the marginalization identities.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// One conditional-path training tuple.
#[derive(Debug, Clone)]
pub struct BridgeSample {
    /// In-interval time, strictly inside `(0, 1)`.
    pub t: f64,
    /// Sampled position on the bridge.
    pub x: Vec<f64>,
    /// Conditional probability-flow drift at `(t, x)`.
    pub u_target: Vec<f64>,
    /// Conditional growth rate (per unit interval).
    pub g_target: f64,
    /// The standard-normal draw that produced `x`; its negation is the
    /// weighted score target, `score_weight(t, nu) * s = -eps`.
    pub eps_target: Vec<f64>,
    /// Mass loss weight `m_t / m0 = (m1/m0)^t`.
    pub mass_weight: f64,
}

/// Score-loss weighting `lambda(t) = nu sqrt(t(1-t))`, the std of the
/// bridge at time `t`. It turns the singular score target into the
/// bounded `-eps`.
pub fn score_weight(t: f64, nu: f64) -> f64 {
    nu * (t * (1.0 - t)).max(0.0).sqrt()
}

/// Closed-form conditional targets of the endpoint bridge at `(t, x)`:
/// probability-flow drift, growth rate, and score.
pub fn pb_bridge_targets(
    x0: &[f64],
    x1: &[f64],
    m0: f64,
    m1: f64,
    nu: f64,
    t: f64,
    x: &[f64],
) -> (Vec<f64>, f64, Vec<f64>) {
    let coef = (1.0 - 2.0 * t) / (2.0 * t * (1.0 - t));
    let var = nu * nu * t * (1.0 - t);
    let mut u = Vec::with_capacity(x.len());
    let mut s = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let eta = (1.0 - t) * x0[k] + t * x1[k];
        u.push(coef * (x[k] - eta) + (x1[k] - x0[k]));
        s.push((eta - x[k]) / var);
    }
    (u, m1.ln() - m0.ln(), s)
}

/// Draws one bridge sample between the weighted endpoints.
pub fn sample_pb_bridge<R: Rng + ?Sized>(
    x0: &[f64],
    x1: &[f64],
    m0: f64,
    m1: f64,
    nu: f64,
    t: f64,
    rng: &mut R,
) -> Result<BridgeSample> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Parameter(format!("bridge time must be inside (0,1), got {t}")));
    }
    if !(m0 > 0.0 && m1 > 0.0) {
        return Err(Error::Parameter("endpoint masses must be > 0".into()));
    }
    if x0.len() != x1.len() {
        return Err(Error::Shape("endpoint dimensions differ".into()));
    }
    let d = x0.len();
    let std = nu * (t * (1.0 - t)).sqrt();
    let normal = StandardNormal;
    let mut eps = Vec::with_capacity(d);
    let mut x = Vec::with_capacity(d);
    for k in 0..d {
        let z: f64 = normal.sample(rng);
        eps.push(z);
        x.push((1.0 - t) * x0[k] + t * x1[k] + std * z);
    }
    let (u_target, g_target, _) = pb_bridge_targets(x0, x1, m0, m1, nu, t, &x);
    Ok(BridgeSample {
        t,
        x,
        u_target,
        g_target,
        eps_target: eps,
        mass_weight: (m1 / m0).powf(t),
    })
}

type PathFn = Box<dyn Fn(f64) -> Vec<f64> + Send + Sync>;
type ScalarFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// A conditional Gaussian measure path `m_t N(eta_t, sigma_t^2 I)`.
///
/// Analytic time derivatives are optional; absent ones fall back to
/// central differences with `h = 1e-6`.
pub struct CgmpSpec {
    pub eta: PathFn,
    pub sigma: ScalarFn,
    pub mass: ScalarFn,
    pub eta_dot: Option<PathFn>,
    pub sigma_dot: Option<ScalarFn>,
    pub log_mass_dot: Option<ScalarFn>,
}

const FD_STEP: f64 = 1e-6;

impl CgmpSpec {
    pub fn new(eta: PathFn, sigma: ScalarFn, mass: ScalarFn) -> Self {
        CgmpSpec { eta, sigma, mass, eta_dot: None, sigma_dot: None, log_mass_dot: None }
    }

    /// The endpoint-bridge path as a CGMP, with analytic derivatives.
    pub fn pb_bridge(x0: Vec<f64>, x1: Vec<f64>, m0: f64, m1: f64, nu: f64) -> Self {
        let (a, b) = (x0.clone(), x1.clone());
        let diff: Vec<f64> = x1.iter().zip(&x0).map(|(p, q)| p - q).collect();
        let log_ratio = (m1 / m0).ln();
        CgmpSpec {
            eta: Box::new(move |t| {
                a.iter().zip(&b).map(|(p, q)| (1.0 - t) * p + t * q).collect()
            }),
            sigma: Box::new(move |t| nu * (t * (1.0 - t)).max(0.0).sqrt()),
            mass: Box::new(move |t| m0.powf(1.0 - t) * m1.powf(t)),
            eta_dot: Some(Box::new(move |_| diff.clone())),
            sigma_dot: Some(Box::new(move |t| {
                nu * (1.0 - 2.0 * t) / (2.0 * (t * (1.0 - t)).max(0.0).sqrt())
            })),
            log_mass_dot: Some(Box::new(move |_| log_ratio)),
        }
    }

    /// Unnormalized density `m_t N(x | eta_t, sigma_t^2 I)`.
    pub fn density(&self, t: f64, x: &[f64]) -> f64 {
        let eta = (self.eta)(t);
        let sigma = (self.sigma)(t);
        let d = x.len() as f64;
        let sq: f64 = x.iter().zip(&eta).map(|(a, b)| (a - b) * (a - b)).sum();
        let norm = (2.0 * std::f64::consts::PI * sigma * sigma).powf(-d / 2.0);
        (self.mass)(t) * norm * (-sq / (2.0 * sigma * sigma)).exp()
    }

    fn eta_dot_at(&self, t: f64) -> Vec<f64> {
        match &self.eta_dot {
            Some(f) => f(t),
            None => {
                let up = (self.eta)(t + FD_STEP);
                let dn = (self.eta)(t - FD_STEP);
                up.iter().zip(&dn).map(|(a, b)| (a - b) / (2.0 * FD_STEP)).collect()
            }
        }
    }

    fn sigma_dot_at(&self, t: f64) -> f64 {
        match &self.sigma_dot {
            Some(f) => f(t),
            None => ((self.sigma)(t + FD_STEP) - (self.sigma)(t - FD_STEP)) / (2.0 * FD_STEP),
        }
    }

    fn log_mass_dot_at(&self, t: f64) -> f64 {
        match &self.log_mass_dot {
            Some(f) => f(t),
            None => ((self.mass)(t + FD_STEP).ln() - (self.mass)(t - FD_STEP).ln()) / (2.0 * FD_STEP),
        }
    }
}

/// Conditional probability-flow drift, growth rate, and score of a CGMP:
///
///   u = (sigma'/sigma)(x - eta) + eta',   g = d/dt ln m,
///   s = -(x - eta)/sigma^2.
pub fn cgmp_targets(spec: &CgmpSpec, t: f64, x: &[f64]) -> Result<(Vec<f64>, f64, Vec<f64>)> {
    let sigma = (spec.sigma)(t);
    if !(sigma > 0.0) {
        return Err(Error::Numeric(format!("cgmp sigma must be positive, got {sigma} at t={t}")));
    }
    let eta = (spec.eta)(t);
    if eta.len() != x.len() {
        return Err(Error::Shape("cgmp eta dimension differs from x".into()));
    }
    let ratio = spec.sigma_dot_at(t) / sigma;
    let eta_dot = spec.eta_dot_at(t);
    let mut u = Vec::with_capacity(x.len());
    let mut s = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let centered = x[k] - eta[k];
        u.push(ratio * centered + eta_dot[k]);
        s.push(-centered / (sigma * sigma));
    }
    Ok((u, spec.log_mass_dot_at(t), s))
}

/// Marginal targets of a finite mixture of conditions, plus the marginal
/// density value.
#[derive(Debug, Clone)]
pub struct MarginalTargets {
    pub u: Vec<f64>,
    pub g: f64,
    pub s: Vec<f64>,
    pub density: f64,
    /// Set when the total density underflowed; all fields are zero then.
    pub underflow: bool,
}

/// Posterior-weighted mixture of conditional targets: weights are
/// proportional to `rho_t(x|z) q(z)`, mass included.
pub fn marginal_targets_oracle(
    conditions: &[(f64, CgmpSpec)],
    t: f64,
    x: &[f64],
) -> Result<MarginalTargets> {
    if conditions.is_empty() {
        return Err(Error::Parameter("need at least one condition".into()));
    }
    let mut densities = Vec::with_capacity(conditions.len());
    let mut total = 0.0;
    for (q, spec) in conditions {
        let rho = q * spec.density(t, x);
        densities.push(rho);
        total += rho;
    }
    if !(total > f64::MIN_POSITIVE) {
        return Ok(MarginalTargets {
            u: vec![0.0; x.len()],
            g: 0.0,
            s: vec![0.0; x.len()],
            density: 0.0,
            underflow: true,
        });
    }
    let mut u = vec![0.0; x.len()];
    let mut s = vec![0.0; x.len()];
    let mut g = 0.0;
    for ((_, spec), rho) in conditions.iter().zip(&densities) {
        let w = rho / total;
        let (cu, cg, cs) = cgmp_targets(spec, t, x)?;
        for k in 0..x.len() {
            u[k] += w * cu[k];
            s[k] += w * cs[k];
        }
        g += w * cg;
    }
    Ok(MarginalTargets { u, g, s, density: total, underflow: false })
}

/// Integer-count bridge fixed at both ends: `N0 + Binomial(N1 - N0, t)`.
/// Reference sampler for the mass-path limit checks; requires `n1 >= n0`.
pub fn poisson_bridge_count<R: Rng + ?Sized>(n0: u64, n1: u64, t: f64, rng: &mut R) -> Result<u64> {
    if n1 < n0 {
        return Err(Error::Parameter("poisson bridge needs n1 >= n0".into()));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Parameter("t must lie in [0,1]".into()));
    }
    let binom = rand_distr::Binomial::new(n1 - n0, t)
        .map_err(|e| Error::Parameter(format!("binomial: {e}")))?;
    Ok(n0 + binom.sample(rng))
}
