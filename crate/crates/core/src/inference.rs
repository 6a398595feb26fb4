//! Shared configuration and result types for every mediation test.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{MedError, Result};
use crate::resampling::{BootstrapConfig, BootstrapDistribution};
use crate::scalar::Scalar;

/// Every test the crate implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "poc-ab")]
    PocAb,
    #[serde(rename = "poc-b")]
    PocB,
    #[serde(rename = "poc-sobel")]
    PocSobel,
    #[serde(rename = "js-ab")]
    JsAb,
    #[serde(rename = "js-b")]
    JsB,
    #[serde(rename = "js-maxp")]
    JsMaxp,
    #[serde(rename = "joint-ab")]
    JointAb,
    #[serde(rename = "joint-b")]
    JointB,
    #[serde(rename = "glm1-ab")]
    Glm1Ab,
    #[serde(rename = "glm1-b")]
    Glm1B,
    #[serde(rename = "glm2-ab")]
    Glm2Ab,
    #[serde(rename = "glm2-b")]
    Glm2B,
}

impl Method {
    pub const ALL: [Method; 12] = [
        Method::PocAb,
        Method::PocB,
        Method::PocSobel,
        Method::JsAb,
        Method::JsB,
        Method::JsMaxp,
        Method::JointAb,
        Method::JointB,
        Method::Glm1Ab,
        Method::Glm1B,
        Method::Glm2Ab,
        Method::Glm2B,
    ];

    /// The six single-mediator linear tests.
    pub const LINEAR: [Method; 6] = [
        Method::PocAb,
        Method::PocB,
        Method::PocSobel,
        Method::JsAb,
        Method::JsB,
        Method::JsMaxp,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::PocAb => "poc-ab",
            Method::PocB => "poc-b",
            Method::PocSobel => "poc-sobel",
            Method::JsAb => "js-ab",
            Method::JsB => "js-b",
            Method::JsMaxp => "js-maxp",
            Method::JointAb => "joint-ab",
            Method::JointB => "joint-b",
            Method::Glm1Ab => "glm1-ab",
            Method::Glm1B => "glm1-b",
            Method::Glm2Ab => "glm2-ab",
            Method::Glm2B => "glm2-b",
        }
    }

    /// Classical-bootstrap variants run the adaptive code with `λ = 0`.
    pub fn forces_zero_lambda(self) -> bool {
        matches!(
            self,
            Method::PocB | Method::JsB | Method::JointB | Method::Glm1B | Method::Glm2B
        )
    }

    pub fn is_bootstrap(self) -> bool {
        !matches!(self, Method::PocSobel | Method::JsMaxp)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = MedError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| MedError::InvalidArgument(format!("unknown method `{s}`")))
    }
}

/// Tuning and resampling knobs shared by the adaptive tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AbConfig {
    /// Threshold constant; the indicator cut-off is `λ√n / ln n`.
    pub lambda: f64,
    /// Optional override of `λ` for the exposure–mediator coefficient.
    pub lambda_alpha: Option<f64>,
    /// Optional override of `λ` for the mediator–outcome coefficient.
    pub lambda_beta: Option<f64>,
    pub b_alpha: f64,
    pub b_beta: f64,
    /// Local parameter vectors for the joint test; empty means zero.
    pub b_alpha_vec: Vec<f64>,
    pub b_beta_vec: Vec<f64>,
    pub bootstrap: BootstrapConfig,
    pub omega_grid: Vec<f64>,
}

impl Default for AbConfig {
    fn default() -> Self {
        Self {
            lambda: 2.0,
            lambda_alpha: None,
            lambda_beta: None,
            b_alpha: 0.0,
            b_beta: 0.0,
            b_alpha_vec: Vec::new(),
            b_beta_vec: Vec::new(),
            bootstrap: BootstrapConfig::default(),
            omega_grid: vec![0.01, 0.05, 0.1],
        }
    }
}

impl AbConfig {
    pub fn with_bootstrap(b: usize, seed: u64) -> Self {
        Self {
            bootstrap: BootstrapConfig::new(b, seed),
            ..Self::default()
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    /// Copy with `λ = 0` and no per-coefficient overrides.
    pub fn classical(&self) -> Self {
        Self {
            lambda: 0.0,
            lambda_alpha: None,
            lambda_beta: None,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bootstrap.validate()?;
        let lambdas = [Some(self.lambda), self.lambda_alpha, self.lambda_beta];
        if lambdas.iter().flatten().any(|l| !(*l >= 0.0)) {
            return Err(MedError::InvalidArgument("lambda must be non-negative".into()));
        }
        if !self.b_alpha.is_finite() || !self.b_beta.is_finite() {
            return Err(MedError::InvalidArgument("local parameters must be finite".into()));
        }
        if self.omega_grid.iter().any(|w| !(*w > 0.0 && *w < 1.0)) {
            return Err(MedError::InvalidArgument("omega values must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Indicator thresholds `(λ_α,n, λ_β,n)` at sample size `n`.
    pub fn thresholds(&self, n: usize) -> (f64, f64) {
        (
            lambda_n(self.lambda_alpha.unwrap_or(self.lambda), n),
            lambda_n(self.lambda_beta.unwrap_or(self.lambda), n),
        )
    }
}

/// `λ√n / ln n`.
pub fn lambda_n(lambda: f64, n: usize) -> f64 {
    let nf = n as f64;
    lambda * nf.sqrt() / nf.ln()
}

/// `1{|t*| ≤ λₙ and |t| ≤ λₙ}`.
#[inline]
pub fn indicator<T: Scalar>(t_boot: T, t_obs: T, threshold: f64) -> bool {
    let th = T::lit(threshold);
    t_boot.abs() <= th && t_obs.abs() <= th
}

/// Two-sided standard-normal tail probability `2·Φ(−|z|)`.
pub fn normal_two_sided(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub omega: f64,
    pub reject: bool,
}

/// Outcome of one test. Rejection at level ω means `p ≤ ω`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: Method,
    /// Point estimate of the mediation effect (or `√n·θ̂` for the JS tests).
    pub estimate: f64,
    /// Observed statistic compared against the bootstrap draws or normal reference.
    pub statistic: f64,
    pub p_value: f64,
    /// Fraction of replicates that took the local branch.
    pub indicator_rate: Option<f64>,
    pub lambda: Option<f64>,
    pub bootstrap: Option<BootstrapConfig>,
    pub target: Option<String>,
    pub decisions: Vec<Decision>,
}

impl TestResult {
    pub(crate) fn new(method: Method, estimate: f64, statistic: f64, p_value: f64, omega_grid: &[f64]) -> Self {
        Self {
            method,
            estimate,
            statistic,
            p_value,
            indicator_rate: None,
            lambda: None,
            bootstrap: None,
            target: None,
            decisions: decisions(p_value, omega_grid),
        }
    }

    pub fn rejects(&self, omega: f64) -> bool {
        self.p_value <= omega
    }
}

pub fn decisions(p: f64, omega_grid: &[f64]) -> Vec<Decision> {
    omega_grid
        .iter()
        .map(|&omega| Decision {
            omega,
            reject: p <= omega,
        })
        .collect()
}

/// A bootstrap test result together with its sorted draws.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOutcome<T> {
    pub result: TestResult,
    pub distribution: BootstrapDistribution<T>,
}

/// One replicate of an adaptive statistic: the classical delta, or the scaled local
/// term when both indicators fire.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveDraw<T> {
    pub value: T,
    pub local: bool,
}

/// Build the result from adaptive draws and the observed statistic.
pub(crate) fn finish_adaptive<T: Scalar>(
    method: Method,
    estimate: T,
    observed: T,
    draws: Vec<AdaptiveDraw<T>>,
    config: &AbConfig,
    lambda: f64,
) -> Result<BootstrapOutcome<T>> {
    let b = draws.len();
    let hits = draws.iter().filter(|d| d.local).count();
    let values: Vec<T> = draws.into_iter().map(|d| d.value).collect();
    let distribution = BootstrapDistribution::new(values, method.tag(), config.bootstrap)?;
    let p = distribution.pvalue(observed);
    let mut result = TestResult::new(method, estimate.as_f64(), observed.as_f64(), p, &config.omega_grid);
    result.indicator_rate = Some(hits as f64 / b as f64);
    result.lambda = Some(lambda);
    result.bootstrap = Some(config.bootstrap);
    Ok(BootstrapOutcome {
        result,
        distribution,
    })
}

/// Reject non-finite replicate values so they are redrawn.
pub(crate) fn finite<T: Scalar>(v: T) -> Result<T> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(MedError::DegenerateResponse("non-finite replicate statistic".into()))
    }
}
