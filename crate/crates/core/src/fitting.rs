//! Maximum-likelihood fits of the Gamma, generalized Gamma and lognormal
//! families.
//!
//! The generalized Gamma uses the Stacy density
//! `f(x | a, b, k) = b x^(bk-1) / (Γ(k) a^(bk)) · exp(-(x/a)^b)`.
//! It is fitted in the Prentice parametrization `(μ, σ, Q)` of `ln x`, with
//! `k = 1/Q²`, `b = Q/σ` and `ln a = μ + (2σ/Q) ln Q`. The likelihood in this
//! form stays well conditioned as `Q → 0`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use glam::{DMat2, DMat3, DVec2, DVec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::{
    compensated_sum, digamma, gamma_p, gamma_p_inv, ln_gamma, normal_cdf, normal_quantile,
    stirling_remainder_deriv_inv, stirling_remainder_inv, trigamma, LN_SQRT_2PI,
};

/// Smallest Prentice shape the optimizer may reach; hitting it means the
/// data sit at the lognormal end of the family.
pub const Q_MIN: f64 = 0.02;

/// Relative log-likelihood disagreement tolerated between the Prentice
/// optimum and the Stacy polish.
pub const PARAMETRIZATION_TOL: f64 = 1e-6;

const MAX_ITER: usize = 500;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {needed} observations, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("observation {index} is not positive and finite ({value})")]
    NonPositive { index: usize, value: f64 },
    #[error("sample is degenerate: {0}")]
    Degenerate(&'static str),
    #[error("{family} fit did not converge after {iterations} iterations")]
    NoConvergence { family: Family, iterations: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gamma,
    GenGamma,
    Lognormal,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Gamma, Family::GenGamma, Family::Lognormal];

    pub fn name(self) -> &'static str {
        match self {
            Family::Gamma => "gamma",
            Family::GenGamma => "gengamma",
            Family::Lognormal => "lognormal",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "gamma" => Ok(Family::Gamma),
            "gengamma" | "generalized-gamma" | "gg" => Ok(Family::GenGamma),
            "lognormal" => Ok(Family::Lognormal),
            other => Err(format!("unknown family '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFlag {
    /// The shape `Q` reached [`Q_MIN`].
    LognormalLimit,
    /// Prentice and Stacy optima differ by more than [`PARAMETRIZATION_TOL`].
    ParametrizationMismatch,
    /// Observed information was not positive definite.
    StandardErrorsUnavailable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenGammaParams {
    pub a: f64,
    pub b: f64,
    pub k: f64,
    pub std_errors: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub a: f64,
    pub k: f64,
    pub std_errors: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LognormalParams {
    pub mu: f64,
    pub sigma: f64,
    pub std_errors: Option<[f64; 2]>,
}

/// Prentice parameters of the generalized Gamma: `ln x = μ + σ w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrenticeParams {
    pub mu: f64,
    pub sigma: f64,
    pub q: f64,
}

impl GenGammaParams {
    pub fn new(a: f64, b: f64, k: f64) -> Result<Self, FitError> {
        if [a, b, k].iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(Self { a, b, k, std_errors: None })
        } else {
            Err(FitError::InvalidParams(format!("generalized gamma needs a, b, k > 0, got ({a}, {b}, {k})")))
        }
    }

    pub fn to_prentice(&self) -> PrenticeParams {
        let q = 1.0 / self.k.sqrt();
        PrenticeParams {
            mu: self.a.ln() + self.k.ln() / self.b,
            sigma: q / self.b,
            q,
        }
    }

    pub fn from_prentice(p: PrenticeParams) -> Result<Self, FitError> {
        if !(p.q > 0.0 && p.sigma > 0.0) {
            return Err(FitError::InvalidParams(format!(
                "Stacy form needs Q > 0 and σ > 0, got Q = {}, σ = {}",
                p.q, p.sigma
            )));
        }
        let k = 1.0 / (p.q * p.q);
        let b = p.q / p.sigma;
        Self::new((p.mu + 2.0 * p.sigma * p.q.ln() / p.q).exp(), b, k)
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return f64::NEG_INFINITY;
        }
        self.to_prentice().ln_pdf(x.ln())
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        gamma_p(self.k, (self.b * (x.ln() - self.a.ln())).exp())
    }

    pub fn quantile(&self, p: f64) -> f64 {
        self.a * gamma_p_inv(self.k, p).powf(1.0 / self.b)
    }
}

impl PrenticeParams {
    /// Log-density of `x` evaluated at `ln x`.
    pub fn ln_pdf(&self, ln_x: f64) -> f64 {
        let w = (ln_x - self.mu) / self.sigma;
        -self.sigma.ln() - ln_x - LN_SQRT_2PI - stirling_remainder_inv(self.q * self.q) - w * w * phi(self.q * w)
    }
}

impl GammaParams {
    pub fn new(a: f64, k: f64) -> Result<Self, FitError> {
        if a > 0.0 && k > 0.0 && a.is_finite() && k.is_finite() {
            Ok(Self { a, k, std_errors: None })
        } else {
            Err(FitError::InvalidParams(format!("gamma needs a, k > 0, got ({a}, {k})")))
        }
    }

    pub fn as_gengamma(&self) -> GenGammaParams {
        GenGammaParams { a: self.a, b: 1.0, k: self.k, std_errors: None }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return f64::NEG_INFINITY;
        }
        (self.k - 1.0) * x.ln() - x / self.a - ln_gamma(self.k) - self.k * self.a.ln()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        gamma_p(self.k, x / self.a)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        self.a * gamma_p_inv(self.k, p)
    }
}

impl LognormalParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self, FitError> {
        if mu.is_finite() && sigma > 0.0 && sigma.is_finite() {
            Ok(Self { mu, sigma, std_errors: None })
        } else {
            Err(FitError::InvalidParams(format!("lognormal needs σ > 0, got ({mu}, {sigma})")))
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return f64::NEG_INFINITY;
        }
        let z = (x.ln() - self.mu) / self.sigma;
        -0.5 * z * z - x.ln() - self.sigma.ln() - LN_SQRT_2PI
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        normal_cdf((x.ln() - self.mu) / self.sigma)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        (self.mu + self.sigma * normal_quantile(p)).exp()
    }
}

/// A fitted parametric distribution of any of the three families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Model {
    Gamma(GammaParams),
    GenGamma(GenGammaParams),
    Lognormal(LognormalParams),
}

impl Model {
    pub fn family(&self) -> Family {
        match self {
            Model::Gamma(_) => Family::Gamma,
            Model::GenGamma(_) => Family::GenGamma,
            Model::Lognormal(_) => Family::Lognormal,
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        match self {
            Model::Gamma(p) => p.ln_pdf(x),
            Model::GenGamma(p) => p.ln_pdf(x),
            Model::Lognormal(p) => p.ln_pdf(x),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Model::Gamma(p) => p.cdf(x),
            Model::GenGamma(p) => p.cdf(x),
            Model::Lognormal(p) => p.cdf(x),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        match self {
            Model::Gamma(m) => m.quantile(p),
            Model::GenGamma(m) => m.quantile(p),
            Model::Lognormal(m) => m.quantile(p),
        }
    }

    pub fn loglik(&self, sample: &[f64]) -> f64 {
        compensated_sum(sample.iter().map(|&x| self.ln_pdf(x)))
    }

    /// Named parameters and, where available, their standard errors.
    pub fn named_params(&self) -> (BTreeMap<String, f64>, Option<BTreeMap<String, f64>>) {
        let (names, values, errors): (&[&str], Vec<f64>, Option<Vec<f64>>) = match self {
            Model::Gamma(p) => (&["a", "k"], vec![p.a, p.k], p.std_errors.map(|e| e.to_vec())),
            Model::GenGamma(p) => (&["a", "b", "k"], vec![p.a, p.b, p.k], p.std_errors.map(|e| e.to_vec())),
            Model::Lognormal(p) => (&["mu", "sigma"], vec![p.mu, p.sigma], p.std_errors.map(|e| e.to_vec())),
        };
        let zip = |v: &[f64]| names.iter().map(|n| n.to_string()).zip(v.iter().copied()).collect();
        (zip(&values), errors.as_deref().map(zip))
    }

    pub fn from_named(
        family: Family,
        params: &BTreeMap<String, f64>,
        std_errors: Option<&BTreeMap<String, f64>>,
    ) -> Result<Self, FitError> {
        let get = |m: &BTreeMap<String, f64>, key: &str| {
            m.get(key)
                .copied()
                .ok_or_else(|| FitError::InvalidParams(format!("{family} parameters lack '{key}'")))
        };
        Ok(match family {
            Family::Gamma => {
                let mut p = GammaParams::new(get(params, "a")?, get(params, "k")?)?;
                p.std_errors = std_errors.map(|e| Ok::<_, FitError>([get(e, "a")?, get(e, "k")?])).transpose()?;
                Model::Gamma(p)
            }
            Family::GenGamma => {
                let mut p = GenGammaParams::new(get(params, "a")?, get(params, "b")?, get(params, "k")?)?;
                p.std_errors = std_errors
                    .map(|e| Ok::<_, FitError>([get(e, "a")?, get(e, "b")?, get(e, "k")?]))
                    .transpose()?;
                Model::GenGamma(p)
            }
            Family::Lognormal => {
                let mut p = LognormalParams::new(get(params, "mu")?, get(params, "sigma")?)?;
                p.std_errors = std_errors
                    .map(|e| Ok::<_, FitError>([get(e, "mu")?, get(e, "sigma")?]))
                    .transpose()?;
                Model::Lognormal(p)
            }
        })
    }
}

/// Outcome of a maximum-likelihood fit.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit<P> {
    pub params: P,
    pub loglik: f64,
    pub n: usize,
    pub converged: bool,
    pub iterations: usize,
    pub flags: Vec<FitFlag>,
}

impl<P: Copy + Into<Model>> Fit<P> {
    pub fn model(&self) -> Model {
        self.params.into()
    }

    pub fn report(&self) -> FitReport {
        let model = self.model();
        let (params, std_errors) = model.named_params();
        FitReport {
            family: model.family(),
            params,
            std_errors,
            loglik: self.loglik,
            n: self.n,
            converged: self.converged,
            flags: self.flags.clone(),
        }
    }
}

impl From<GammaParams> for Model {
    fn from(p: GammaParams) -> Self {
        Model::Gamma(p)
    }
}
impl From<GenGammaParams> for Model {
    fn from(p: GenGammaParams) -> Self {
        Model::GenGamma(p)
    }
}
impl From<LognormalParams> for Model {
    fn from(p: LognormalParams) -> Self {
        Model::Lognormal(p)
    }
}

/// Serializable fit summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub family: Family,
    pub params: BTreeMap<String, f64>,
    pub std_errors: Option<BTreeMap<String, f64>>,
    pub loglik: f64,
    pub n: usize,
    pub converged: bool,
    pub flags: Vec<FitFlag>,
}

impl FitReport {
    pub fn model(&self) -> Result<Model, FitError> {
        Model::from_named(self.family, &self.params, self.std_errors.as_ref())
    }
}

pub fn fit(family: Family, sample: &[f64]) -> Result<FitReport, FitError> {
    Ok(match family {
        Family::Gamma => fit_gamma(sample)?.report(),
        Family::GenGamma => fit_gengamma(sample)?.report(),
        Family::Lognormal => fit_lognormal(sample)?.report(),
    })
}

fn check_sample(sample: &[f64], needed: usize) -> Result<(), FitError> {
    if sample.len() < needed {
        return Err(FitError::TooFew { needed, got: sample.len() });
    }
    match sample.iter().position(|x| !(*x > 0.0 && x.is_finite())) {
        Some(index) => Err(FitError::NonPositive { index, value: sample[index] }),
        None => Ok(()),
    }
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    compensated_sum(values) / n as f64
}

pub fn fit_lognormal(sample: &[f64]) -> Result<Fit<LognormalParams>, FitError> {
    check_sample(sample, 2)?;
    let n = sample.len();
    let mu = mean(sample.iter().map(|x| x.ln()), n);
    let sigma = mean(sample.iter().map(|x| (x.ln() - mu).powi(2)), n).sqrt();
    if !(sigma > 0.0) {
        return Err(FitError::Degenerate("log-values have zero spread"));
    }
    let mut params = LognormalParams::new(mu, sigma)?;
    let nf = n as f64;
    params.std_errors = Some([sigma / nf.sqrt(), sigma / (2.0 * nf).sqrt()]);
    Ok(Fit {
        params,
        loglik: Model::Lognormal(params).loglik(sample),
        n,
        converged: true,
        iterations: 0,
        flags: Vec::new(),
    })
}

pub fn fit_gamma(sample: &[f64]) -> Result<Fit<GammaParams>, FitError> {
    check_sample(sample, 2)?;
    let n = sample.len();
    let m = mean(sample.iter().copied(), n);
    let s = m.ln() - mean(sample.iter().map(|x| x.ln()), n);
    if !(s > 1e-14) {
        return Err(FitError::Degenerate("all observations are equal"));
    }
    // Minka's closed-form start, then Newton on ln k - ψ(k) = s
    let mut k = (3.0 - s + ((s - 3.0).powi(2) + 24.0 * s).sqrt()) / (12.0 * s);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < 100 {
        iterations += 1;
        let f = k.ln() - digamma(k) - s;
        let df = 1.0 / k - trigamma(k);
        let mut next = k - f / df;
        if !(next > 0.0) {
            next = 0.5 * k;
        }
        let done = (next - k).abs() <= 1e-14 * k;
        k = next;
        if done {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(FitError::NoConvergence { family: Family::Gamma, iterations });
    }
    let mut params = GammaParams::new(m / k, k)?;
    let stats = StacyStats::new(sample, params.a, 1.0);
    let mut flags = Vec::new();
    params.std_errors = stats.hessian_ak(params.a, 1.0, k).and_then(std_errors_2);
    if params.std_errors.is_none() {
        flags.push(FitFlag::StandardErrorsUnavailable);
    }
    Ok(Fit {
        params,
        loglik: Model::Gamma(params).loglik(sample),
        n,
        converged,
        iterations,
        flags,
    })
}

/// `(e^t - 1 - t) / t²`
fn phi(t: f64) -> f64 {
    if t.abs() < 1.0 {
        // Σ t^m / (m+2)!
        let mut term = 0.5;
        let mut sum = term;
        for m in 1..24 {
            term *= t / (m + 2) as f64;
            sum += term;
        }
        sum
    } else {
        (t.exp_m1() - t) / (t * t)
    }
}

/// `φ'(t)`
fn phi_deriv(t: f64) -> f64 {
    if t.abs() < 1.0 {
        // Σ_{j≥3} (j-2) t^(j-3) / j!
        let mut fact = 6.0;
        let mut pow = 1.0;
        let mut sum = 0.0;
        for j in 3..28 {
            if j > 3 {
                fact *= j as f64;
                pow *= t;
            }
            sum += (j - 2) as f64 * pow / fact;
        }
        sum
    } else {
        let e = t.exp_m1();
        (t * e - 2.0 * (e - t)) / (t * t * t)
    }
}

/// Log-likelihood and gradient in `(μ, ln σ, Q)` given precomputed `ln x`.
fn prentice_loglik(ln_x: &[f64], theta: DVec3) -> (f64, DVec3) {
    let (mu, s, q) = (theta.x, theta.y, theta.z);
    let sigma = s.exp();
    let n = ln_x.len() as f64;
    let corr = stirling_remainder_inv(q * q);
    let dcorr_dq = stirling_remainder_deriv_inv(q * q) * (-2.0 / (q * q * q));
    let mut ll = compensated_sum(ln_x.iter().map(|&y| {
        let w = (y - mu) / sigma;
        -y - w * w * phi(q * w)
    }));
    ll += -n * (s + LN_SQRT_2PI + corr);
    let (mut g_mu, mut g_s, mut g_q) = (Vec::with_capacity(ln_x.len()), Vec::with_capacity(ln_x.len()), Vec::with_capacity(ln_x.len()));
    for &y in ln_x {
        let w = (y - mu) / sigma;
        let e = (q * w).exp_m1() / q;
        g_mu.push(e);
        g_s.push(w * e);
        g_q.push(-w * w * w * phi_deriv(q * w));
    }
    let grad = DVec3::new(
        compensated_sum(g_mu) / sigma,
        compensated_sum(g_s) - n,
        compensated_sum(g_q) - n * dcorr_dq,
    );
    (ll, grad)
}

/// Sufficient sums for the Stacy log-likelihood at fixed `(a, b)`.
struct StacyStats {
    n: f64,
    sum_l: f64,
    sum_u: f64,
    sum_ul: f64,
    sum_ul2: f64,
}

impl StacyStats {
    fn new(sample: &[f64], a: f64, b: f64) -> Self {
        let ln_a = a.ln();
        let ls: Vec<f64> = sample.iter().map(|x| x.ln() - ln_a).collect();
        let us: Vec<f64> = ls.iter().map(|l| (b * l).exp()).collect();
        Self {
            n: sample.len() as f64,
            sum_l: compensated_sum(ls.iter().copied()),
            sum_u: compensated_sum(us.iter().copied()),
            sum_ul: compensated_sum(us.iter().zip(&ls).map(|(u, l)| u * l)),
            sum_ul2: compensated_sum(us.iter().zip(&ls).map(|(u, l)| u * l * l)),
        }
    }

    /// Needs `Σ ln x`; recovered from `Σ L = Σ ln x - n ln a`.
    fn loglik(&self, a: f64, b: f64, k: f64) -> f64 {
        let sum_ln_x = self.sum_l + self.n * a.ln();
        self.n * (b.ln() - ln_gamma(k) - b * k * a.ln()) + (b * k - 1.0) * sum_ln_x - self.sum_u
    }

    fn gradient(&self, a: f64, b: f64, k: f64) -> DVec3 {
        let n = self.n;
        DVec3::new(
            b / a * (self.sum_u - n * k),
            n / b + k * self.sum_l - self.sum_ul,
            -n * digamma(k) + b * self.sum_l,
        )
    }

    fn hessian(&self, a: f64, b: f64, k: f64) -> DMat3 {
        let n = self.n;
        let aa = n * b * k / (a * a) - b * (b + 1.0) / (a * a) * self.sum_u;
        let ab = -n * k / a + self.sum_u / a + b / a * self.sum_ul;
        let ak = -n * b / a;
        let bb = -n / (b * b) - self.sum_ul2;
        let bk = self.sum_l;
        let kk = -n * trigamma(k);
        DMat3::from_cols(DVec3::new(aa, ab, ak), DVec3::new(ab, bb, bk), DVec3::new(ak, bk, kk))
    }

    /// Hessian block for `(a, k)` with `b` held fixed.
    fn hessian_ak(&self, a: f64, b: f64, k: f64) -> Option<DMat2> {
        let h = self.hessian(a, b, k);
        let m = DMat2::from_cols(DVec2::new(h.x_axis.x, h.x_axis.z), DVec2::new(h.z_axis.x, h.z_axis.z));
        m.is_finite().then_some(m)
    }
}

fn std_errors_3(hessian: DMat3) -> Option<[f64; 3]> {
    let info = -hessian;
    if !(info.determinant() > 0.0) {
        return None;
    }
    let cov = info.inverse();
    let d = [cov.x_axis.x, cov.y_axis.y, cov.z_axis.z];
    d.iter().all(|v| *v > 0.0 && v.is_finite()).then(|| d.map(f64::sqrt))
}

fn std_errors_2(hessian: DMat2) -> Option<[f64; 2]> {
    let info = -hessian;
    if !(info.determinant() > 0.0 && info.x_axis.x > 0.0) {
        return None;
    }
    let cov = info.inverse();
    let d = [cov.x_axis.x, cov.y_axis.y];
    d.iter().all(|v| *v > 0.0 && v.is_finite()).then(|| d.map(f64::sqrt))
}

/// Quasi-Newton maximisation of the Prentice log-likelihood.
struct PrenticeOptimum {
    theta: DVec3,
    loglik: f64,
    iterations: usize,
    at_boundary: bool,
}

fn maximize_prentice(ln_x: &[f64], start: DVec3) -> Option<PrenticeOptimum> {
    let n = ln_x.len() as f64;
    // minimise the per-observation negative log-likelihood
    let eval = |t: DVec3| {
        let (ll, g) = prentice_loglik(ln_x, t);
        (-ll / n, -g / n)
    };
    let mut x = start;
    let (mut f, mut g) = eval(x);
    let mut h_inv = DMat3::IDENTITY;
    let mut first = true;
    for it in 1..=MAX_ITER {
        let mut dir = -(h_inv * g);
        let at_bound = x.z <= Q_MIN * (1.0 + 1e-12);
        if at_bound && dir.z < 0.0 {
            dir.z = 0.0;
        }
        if dir.dot(g) >= 0.0 {
            h_inv = DMat3::IDENTITY;
            dir = -g;
            if at_bound && dir.z < 0.0 {
                dir.z = 0.0;
            }
        }
        let mut alpha: f64 = 1.0;
        if dir.z < 0.0 {
            alpha = alpha.min((Q_MIN - x.z) / dir.z);
        }
        let slope = dir.dot(g);
        let mut accepted = None;
        for _ in 0..60 {
            let cand = x + alpha * dir;
            let cand = DVec3::new(cand.x, cand.y, cand.z.max(Q_MIN));
            let (fc, gc) = eval(cand);
            if fc.is_finite() && fc <= f + 1e-4 * alpha * slope {
                accepted = Some((cand, fc, gc));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            // no descent possible at working precision
            let grad_ok = projected_norm(g, x) < 1e-6;
            return grad_ok.then_some(PrenticeOptimum {
                theta: x,
                loglik: -f * n,
                iterations: it,
                at_boundary: x.z <= Q_MIN * (1.0 + 1e-12),
            });
        };
        let step = xn - x;
        let y = gn - g;
        let (fo, xo) = (f, x);
        x = xn;
        f = fn_;
        g = gn;
        let sy = step.dot(y);
        if sy > 1e-300 {
            if first {
                h_inv = DMat3::from_diagonal(DVec3::splat(sy / y.dot(y)));
                first = false;
            }
            let rho = 1.0 / sy;
            let i = DMat3::IDENTITY;
            let a = i - rho * outer(step, y);
            let b = i - rho * outer(y, step);
            h_inv = a * h_inv * b + rho * outer(step, step);
        }
        let small_step = (x - xo).abs().max_element() < 1e-13 * (1.0 + x.abs().max_element());
        if projected_norm(g, x) < 1e-11 || (small_step && (fo - f).abs() <= 1e-16 * f.abs()) {
            return Some(PrenticeOptimum {
                theta: x,
                loglik: -f * n,
                iterations: it,
                at_boundary: x.z <= Q_MIN * (1.0 + 1e-12),
            });
        }
    }
    None
}

fn projected_norm(g: DVec3, x: DVec3) -> f64 {
    let gz = if x.z <= Q_MIN * (1.0 + 1e-12) && g.z > 0.0 { 0.0 } else { g.z };
    DVec3::new(g.x, g.y, gz).abs().max_element()
}

fn outer(u: DVec3, v: DVec3) -> DMat3 {
    DMat3::from_cols(u * v.x, u * v.y, u * v.z)
}

/// Newton iteration on the Stacy likelihood, starting from `p`.
fn polish_stacy(sample: &[f64], p: GenGammaParams) -> Option<(GenGammaParams, f64)> {
    let (mut a, mut b, mut k) = (p.a, p.b, p.k);
    let mut stats = StacyStats::new(sample, a, b);
    let mut ll = stats.loglik(a, b, k);
    for _ in 0..50 {
        let g = stats.gradient(a, b, k);
        let h = stats.hessian(a, b, k);
        if !(h.determinant().abs() > 0.0) {
            return None;
        }
        let step = -(h.inverse() * g);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let (na, nb, nk) = (a + t * step.x, b + t * step.y, k + t * step.z);
            if na > 0.0 && nb > 0.0 && nk > 0.0 {
                let ns = StacyStats::new(sample, na, nb);
                let nll = ns.loglik(na, nb, nk);
                // tolerate roundoff-level decreases once at the optimum
                if nll >= ll - 1e-13 * ll.abs() {
                    (a, b, k, stats, ll) = (na, nb, nk, ns, nll);
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
        let rel = (step.x / a).abs().max((step.y / b).abs()).max((step.z / k).abs());
        if rel * t < 1e-10 {
            break;
        }
    }
    ll.is_finite().then_some((GenGammaParams { a, b, k, std_errors: None }, ll))
}

/// Generalized Gamma fit; see the module docs for the parametrization.
pub fn fit_gengamma(sample: &[f64]) -> Result<Fit<GenGammaParams>, FitError> {
    check_sample(sample, 3)?;
    let n = sample.len();
    let ln_x: Vec<f64> = sample.iter().map(|x| x.ln()).collect();
    let lognormal = fit_lognormal(sample)?.params;
    let start = DVec3::new(lognormal.mu, lognormal.sigma.ln(), 0.5);
    let opt = maximize_prentice(&ln_x, start).ok_or(FitError::NoConvergence {
        family: Family::GenGamma,
        iterations: MAX_ITER,
    })?;
    let prentice = PrenticeParams {
        mu: opt.theta.x,
        sigma: opt.theta.y.exp(),
        q: opt.theta.z,
    };
    let mut params = GenGammaParams::from_prentice(prentice)?;
    let mut loglik = opt.loglik;
    let mut flags = Vec::new();
    if opt.at_boundary {
        flags.push(FitFlag::LognormalLimit);
    } else {
        match polish_stacy(sample, params) {
            Some((polished, ll_stacy)) if ((ll_stacy - loglik) / loglik).abs() <= PARAMETRIZATION_TOL => {
                // Newton converges quadratically, so its optimum is the tighter one
                params = polished;
                loglik = Model::GenGamma(params).loglik(sample);
            }
            _ => flags.push(FitFlag::ParametrizationMismatch),
        }
    }
    let stats = StacyStats::new(sample, params.a, params.b);
    params.std_errors = std_errors_3(stats.hessian(params.a, params.b, params.k));
    if params.std_errors.is_none() {
        flags.push(FitFlag::StandardErrorsUnavailable);
    }
    Ok(Fit {
        params,
        loglik,
        n,
        converged: true,
        iterations: opt.iterations,
        flags,
    })
}

/// Generalized Gamma fit with `b` held fixed, by Newton iteration on `(a, k)`
/// in the Stacy form. With `b = 1` this is the Gamma fit reached by a
/// different route.
pub fn fit_gengamma_with_fixed_b(sample: &[f64], b: f64) -> Result<Fit<GenGammaParams>, FitError> {
    check_sample(sample, 2)?;
    if !(b > 0.0 && b.is_finite()) {
        return Err(FitError::InvalidParams(format!("fixed b must be positive, got {b}")));
    }
    let n = sample.len();
    // moment match x^b ~ Gamma(k, a^b)
    let powered: Vec<f64> = sample.iter().map(|x| x.powf(b)).collect();
    let m = mean(powered.iter().copied(), n);
    let v = mean(powered.iter().map(|y| (y - m) * (y - m)), n);
    if !(v > 0.0) {
        return Err(FitError::Degenerate("all observations are equal"));
    }
    let (mut a, mut k) = ((v / m).powf(1.0 / b), m * m / v);
    let mut stats = StacyStats::new(sample, a, b);
    let mut ll = stats.loglik(a, b, k);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < 200 {
        iterations += 1;
        let g3 = stats.gradient(a, b, k);
        let g = DVec2::new(g3.x, g3.z);
        let h = stats
            .hessian_ak(a, b, k)
            .ok_or(FitError::NoConvergence { family: Family::GenGamma, iterations })?;
        let mut step = -(h.inverse() * g);
        if !(step.dot(g) > 0.0) {
            // not an ascent direction: fall back to scaled gradient ascent
            step = DVec2::new(g.x * a * a, g.y * k * k) / stats.n;
        }
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let (na, nk) = (a + t * step.x, k + t * step.y);
            if na > 0.0 && nk > 0.0 {
                let ns = StacyStats::new(sample, na, b);
                let nll = ns.loglik(na, b, nk);
                if nll >= ll {
                    (a, k, stats, ll) = (na, nk, ns, nll);
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        let rel = (t * step.x / a).abs().max((t * step.y / k).abs());
        if !moved || rel < 1e-13 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(FitError::NoConvergence { family: Family::GenGamma, iterations });
    }
    let mut params = GenGammaParams::new(a, b, k)?;
    let mut flags = Vec::new();
    params.std_errors = stats
        .hessian_ak(a, b, k)
        .and_then(std_errors_2)
        .map(|[sa, sk]| [sa, 0.0, sk]);
    if params.std_errors.is_none() {
        flags.push(FitFlag::StandardErrorsUnavailable);
    }
    Ok(Fit {
        params,
        loglik: ll,
        n,
        converged,
        iterations,
        flags,
    })
}
