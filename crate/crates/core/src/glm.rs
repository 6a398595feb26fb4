//! Natural indirect effects with a logistic mediator model: log odds-ratio NIE for a
//! binary outcome (scenario I) and risk-difference NIE for a linear outcome (scenario II).

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{MedError, Result};
use crate::inference::{finish_adaptive, finite, indicator, AbConfig, AdaptiveDraw, BootstrapOutcome, Method, TestResult};
use crate::regression::{
    apply_projection, fit_logistic, fit_ols, outcome_adjusters_for, LinearFit, LogisticFit, LogisticOptions, OlsModel,
};
use crate::resampling::{run_replicates, Scheme};
use crate::scalar::{dot, logistic, logistic_deriv, logit, Scalar};
use crate::poc::centered_process;

/// Distance from {0, 1} below which a fitted NIE probability is rejected.
pub const PROBABILITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GlmScenario {
    /// Binary mediator and binary outcome; log odds-ratio NIE.
    #[serde(rename = "glm1")]
    BinaryOutcome,
    /// Binary mediator and linear outcome; risk-difference NIE.
    #[serde(rename = "glm2")]
    LinearOutcome,
}

/// Exposure contrast and covariate row at which the conditional NIE is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NieQuery {
    pub s: f64,
    pub s_star: f64,
    /// Covariate row including the intercept slot.
    pub x: Vec<f64>,
}

impl NieQuery {
    /// Intercept row with zeros elsewhere.
    pub fn at_baseline(s: f64, s_star: f64, n_covariates: usize) -> Self {
        let mut x = vec![0.0; n_covariates];
        if let Some(first) = x.first_mut() {
            *first = 1.0;
        }
        Self { s, s_star, x }
    }

    fn validate(&self, n_covariates: usize) -> Result<()> {
        if self.s == self.s_star {
            return Err(MedError::InvalidArgument("s and s* must differ".into()));
        }
        if self.x.len() != n_covariates {
            return Err(MedError::InvalidArgument(format!(
                "query row has {} entries, model has {n_covariates} covariates",
                self.x.len()
            )));
        }
        Ok(())
    }
}

fn xdot<T: Scalar>(x: &[f64], coefs: &[T]) -> T {
    x.iter().zip(coefs).fold(T::zero(), |acc, (&xi, &c)| acc + T::lit(xi) * c)
}

fn interior<T: Scalar>(p: T) -> Result<T> {
    let tol = T::lit(PROBABILITY_TOL);
    if p > tol && p < T::one() - tol {
        Ok(p)
    } else {
        Err(MedError::ProbabilityBoundary { tol: PROBABILITY_TOL })
    }
}

/// Log odds-ratio NIE. `alpha` is ordered `(S, X…)`, `beta` is ordered `(M, X…, S)`.
pub fn nie_logistic_outcome<T: Scalar>(alpha: &[T], beta: &[T], q: &NieQuery) -> Result<T> {
    let k = q.x.len();
    let (s, s_star) = (T::lit(q.s), T::lit(q.s_star));
    let xa = xdot(&q.x, &alpha[1..=k]);
    let eta0 = xdot(&q.x, &beta[1..=k]) + beta[k + 1] * s;
    let p_star = logistic(eta0);
    let d_beta = logistic(beta[0] + eta0) - p_star;
    let p_s = interior(logistic(alpha[0] * s + xa) * d_beta + p_star)?;
    let p_ss = interior(logistic(alpha[0] * s_star + xa) * d_beta + p_star)?;
    Ok(logit(p_s) - logit(p_ss))
}

/// Risk-difference NIE `β_M {g(α s + xᵀα_X) − g(α s* + xᵀα_X)}`.
pub fn nie_linear_outcome<T: Scalar>(alpha: &[T], beta_m: T, q: &NieQuery) -> T {
    let xa = xdot(&q.x, &alpha[1..=q.x.len()]);
    let d_alpha = logistic(alpha[0] * T::lit(q.s) + xa) - logistic(alpha[0] * T::lit(q.s_star) + xa);
    beta_m * d_alpha
}

/// `W_α = g′(μ_s)(s, x) − g′(μ_s*)(s*, x)`.
fn w_alpha<T: Scalar>(alpha: &[T], q: &NieQuery) -> Vec<T> {
    let xa = xdot(&q.x, &alpha[1..=q.x.len()]);
    let (s, ss) = (T::lit(q.s), T::lit(q.s_star));
    let (g1, g0) = (logistic_deriv(alpha[0] * s + xa), logistic_deriv(alpha[0] * ss + xa));
    let mut w = vec![g1 * s - g0 * ss];
    w.extend(q.x.iter().map(|&xi| (g1 - g0) * T::lit(xi)));
    w
}

/// `W_β = g′(μ₁)(1, x, s) − g′(μ₀)(0, x, s)` with `μ₀ = xᵀβ_X + τ s`.
fn w_beta<T: Scalar>(beta: &[T], q: &NieQuery) -> Vec<T> {
    let k = q.x.len();
    let s = T::lit(q.s);
    let eta0 = xdot(&q.x, &beta[1..=k]) + beta[k + 1] * s;
    let (g1, g0) = (logistic_deriv(beta[0] + eta0), logistic_deriv(eta0));
    let mut w = vec![g1];
    w.extend(q.x.iter().map(|&xi| (g1 - g0) * T::lit(xi)));
    w.push((g1 - g0) * s);
    w
}

/// Outcome-model fit of either scenario.
#[derive(Debug, Clone)]
pub enum OutcomeFit<T> {
    Logistic(LogisticFit<T>),
    Linear(LinearFit<T>),
}

/// Estimates from the original fits.
#[derive(Debug, Clone)]
pub struct GlmComponents<T> {
    pub scenario: GlmScenario,
    pub n: usize,
    pub alpha_fit: LogisticFit<T>,
    pub beta_fit: OutcomeFit<T>,
    pub t_alpha: T,
    pub t_beta: T,
    pub nie: T,
    /// `g(α̂s + xᵀα̂_X) − g(α̂s* + xᵀα̂_X)`.
    pub d_alpha: T,
    /// `g(β̂ + xᵀβ̂_X + τ̂s) − g(xᵀβ̂_X + τ̂s)`; scenario I only.
    pub d_beta: Option<T>,
    pub p_star: Option<T>,
    pub gamma_hat: Option<T>,
    pub w_alpha: Vec<T>,
    pub w_beta: Vec<T>,
}

fn alpha_design<T: Scalar>(d: &Dataset<T>) -> Vec<&[T]> {
    let mut cols = vec![d.exposure()];
    cols.extend(d.covariates().iter().map(Vec::as_slice));
    cols
}

fn beta_design<T: Scalar>(d: &Dataset<T>) -> Vec<&[T]> {
    let mut cols = vec![d.mediator(0)];
    cols.extend(d.covariates().iter().map(Vec::as_slice));
    cols.push(d.exposure());
    cols
}

struct GlmFits<T> {
    alpha: LogisticFit<T>,
    beta: OutcomeFit<T>,
    t_alpha: T,
    t_beta: T,
    nie: T,
}

fn glm_fits<T: Scalar>(d: &Dataset<T>, scenario: GlmScenario, q: &NieQuery) -> Result<GlmFits<T>> {
    let opts = LogisticOptions::default();
    let alpha = fit_logistic(d.mediator(0), &alpha_design(d), &opts)?;
    let t_alpha = alpha.t_stat(0);
    match scenario {
        GlmScenario::BinaryOutcome => {
            let beta = fit_logistic(d.outcome(), &beta_design(d), &opts)?;
            let nie = nie_logistic_outcome(&alpha.coefficients, &beta.coefficients, q)?;
            Ok(GlmFits {
                t_beta: beta.t_stat(0),
                alpha,
                beta: OutcomeFit::Logistic(beta),
                t_alpha,
                nie,
            })
        }
        GlmScenario::LinearOutcome => {
            let beta = fit_ols(d, OlsModel::Outcome(0))?;
            let nie = nie_linear_outcome(&alpha.coefficients, beta.focal(), q);
            Ok(GlmFits {
                t_beta: beta.t_stat()?,
                alpha,
                beta: OutcomeFit::Linear(beta),
                t_alpha,
                nie,
            })
        }
    }
}

fn check_glm_data<T: Scalar>(data: &Dataset<T>, q: &NieQuery) -> Result<()> {
    if data.n_mediators() != 1 {
        return Err(MedError::InvalidArgument("GLM tests take exactly one mediator".into()));
    }
    if data.has_outcome_view() {
        return Err(MedError::InvalidArgument("GLM tests need the same columns in both models".into()));
    }
    if !data.outcome_covariates().is_empty() {
        return Err(MedError::InvalidArgument("GLM tests do not support outcome-only covariates".into()));
    }
    q.validate(data.covariates().len())
}

pub fn glm_components<T: Scalar>(data: &Dataset<T>, scenario: GlmScenario, q: &NieQuery) -> Result<GlmComponents<T>> {
    check_glm_data(data, q)?;
    let f = glm_fits(data, scenario, q)?;
    let k = q.x.len();
    let a = &f.alpha.coefficients;
    let xa = xdot(&q.x, &a[1..=k]);
    let d_alpha = logistic(a[0] * T::lit(q.s) + xa) - logistic(a[0] * T::lit(q.s_star) + xa);
    let (d_beta, p_star, gamma_hat, w_b) = match &f.beta {
        OutcomeFit::Logistic(b) => {
            let c = &b.coefficients;
            let eta0 = xdot(&q.x, &c[1..=k]) + c[k + 1] * T::lit(q.s);
            let p_star = logistic(eta0);
            (
                Some(logistic(c[0] + eta0) - p_star),
                Some(p_star),
                Some(T::one() / (p_star * (T::one() - p_star))),
                w_beta(c, q),
            )
        }
        OutcomeFit::Linear(_) => (None, None, None, Vec::new()),
    };
    Ok(GlmComponents {
        scenario,
        n: data.n(),
        w_alpha: w_alpha(a, q),
        w_beta: w_b,
        alpha_fit: f.alpha,
        beta_fit: f.beta,
        t_alpha: f.t_alpha,
        t_beta: f.t_beta,
        nie: f.nie,
        d_alpha,
        d_beta,
        p_star,
        gamma_hat,
    })
}

/// `Wᵀ (info)⁻¹ 𝔾*((r − ĝ) D)`.
fn score_z<T: Scalar>(w: &[T], fit: &LogisticFit<T>, resid: &[T], design: &[&[T]], idx: &[usize]) -> T {
    let g: Vec<T> = design.iter().map(|col| centered_process(resid, col, idx)).collect();
    dot(w, &fit.info_inverse.mul_vec(&g))
}

pub fn adaptive_glm_test<T: Scalar>(
    data: &Dataset<T>,
    scenario: GlmScenario,
    q: &NieQuery,
    config: &AbConfig,
) -> Result<TestResult> {
    Ok(adaptive_glm_outcome(data, scenario, q, config)?.result)
}

/// Adaptive bootstrap of the conditional NIE; `λ = 0` gives the classical bootstrap.
pub fn adaptive_glm_outcome<T: Scalar>(
    data: &Dataset<T>,
    scenario: GlmScenario,
    q: &NieQuery,
    config: &AbConfig,
) -> Result<BootstrapOutcome<T>> {
    config.validate()?;
    if config.bootstrap.scheme == Scheme::Projected {
        return Err(MedError::InvalidArgument(
            "the projected scheme is only defined for linear models".into(),
        ));
    }
    let c = glm_components(data, scenario, q)?;
    let (la, lb) = config.thresholds(c.n);
    let nf = T::from_usize_lossy(c.n);
    let k = q.x.len();
    let a = &c.alpha_fit.coefficients;
    let ds = T::lit(q.s - q.s_star);
    let (ba, bb) = (T::lit(config.b_alpha), T::lit(config.b_beta));
    let d_ba = logistic_deriv(xdot(&q.x, &a[1..=k])) * ds * ba;

    let alpha_cols = alpha_design(data);
    let resid_m: Vec<T> = data
        .mediator(0)
        .iter()
        .zip(&c.alpha_fit.fitted_probs)
        .map(|(&m, &g)| m - g)
        .collect();
    let beta_cols = beta_design(data);
    let (resid_y, d_bb) = match &c.beta_fit {
        OutcomeFit::Logistic(b) => {
            let r: Vec<T> = data.outcome().iter().zip(&b.fitted_probs).map(|(&y, &g)| y - g).collect();
            let bc = &b.coefficients;
            let eta0 = xdot(&q.x, &bc[1..=k]) + bc[k + 1] * T::lit(q.s);
            (r, logistic_deriv(eta0) * ds * bb)
        }
        OutcomeFit::Linear(l) => (l.residuals.clone(), T::zero()),
    };
    let out_adj = outcome_adjusters_for(data, 0);

    let draws = run_replicates(c.n, &config.bootstrap, |idx| {
        let d = data.resample(idx);
        let f = glm_fits(&d, scenario, q)?;
        let local = indicator(f.t_alpha, c.t_alpha, la) && indicator(f.t_beta, c.t_beta, lb);
        let value = if local {
            let z_a = score_z(&w_alpha(&f.alpha.coefficients, q), &f.alpha, &resid_m, &alpha_cols, idx);
            match &f.beta {
                OutcomeFit::Logistic(b) => {
                    let z_b = score_z(&w_beta(&b.coefficients, q), b, &resid_y, &beta_cols, idx);
                    let bc = &b.coefficients;
                    let p = logistic(xdot(&q.x, &bc[1..=k]) + bc[k + 1] * T::lit(q.s));
                    let gamma = T::one() / (p * (T::one() - p));
                    (d_ba * z_b + d_bb * z_a + z_a * z_b) * gamma / nf
                }
                OutcomeFit::Linear(l) => {
                    let m_star = apply_projection(data.mediator(0), &out_adj, &l.focal_projection);
                    let z_b = centered_process(&resid_y, &m_star, idx) / l.v_moment;
                    (d_ba * z_b + bb * z_a + z_a * z_b) / nf
                }
            }
        } else {
            f.nie - c.nie
        };
        Ok(AdaptiveDraw {
            value: finite(value)?,
            local,
        })
    })?;
    let classical = la == 0.0 && lb == 0.0;
    let method = match (scenario, classical) {
        (GlmScenario::BinaryOutcome, false) => Method::Glm1Ab,
        (GlmScenario::BinaryOutcome, true) => Method::Glm1B,
        (GlmScenario::LinearOutcome, false) => Method::Glm2Ab,
        (GlmScenario::LinearOutcome, true) => Method::Glm2B,
    };
    finish_adaptive(method, c.nie, c.nie, draws, config, config.lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q() -> NieQuery {
        NieQuery::at_baseline(1.0, 0.0, 2)
    }

    #[test]
    fn risk_difference_closed_form() {
        let alpha = [3f64.ln(), 0.0, 0.7];
        let v = nie_linear_outcome(&alpha, 1.0, &q());
        assert!((v - 0.25).abs() < 1e-15);
        assert_eq!(nie_linear_outcome(&alpha, 0.0, &q()), 0.0);
        assert_eq!(nie_linear_outcome(&[0.0, -1.0, 1.0], 2.0, &q()), 0.0);
    }

    #[test]
    fn log_odds_zero_cases() {
        let beta = [0.8, -1.0, 1.0, 1.0];
        assert_eq!(nie_logistic_outcome(&[0.0, -1.0, 1.0], &beta, &q()).unwrap(), 0.0);
        assert_eq!(
            nie_logistic_outcome(&[1.3, -1.0, 1.0], &[0.0, -1.0, 1.0, 1.0], &q()).unwrap(),
            0.0
        );
    }

    #[test]
    fn log_odds_formula() {
        // intercept-only covariates, α = (ln 3, 0), β = (1, -0.5, 0.25)
        let q = NieQuery::at_baseline(1.0, 0.0, 1);
        let v = nie_logistic_outcome(&[3f64.ln(), 0.0], &[1.0, -0.5, 0.25], &q).unwrap();
        let g = |t: f64| 1.0 / (1.0 + (-t).exp());
        let p_star = g(-0.25);
        let db = g(0.75) - p_star;
        let ps = 0.75 * db + p_star;
        let pss = 0.5 * db + p_star;
        let l = |p: f64| (p / (1.0 - p)).ln();
        assert!((v - (l(ps) - l(pss))).abs() < 1e-14);
    }

    #[test]
    fn gradient_vectors_match_finite_differences() {
        let q = NieQuery {
            s: 1.0,
            s_star: 0.0,
            x: vec![1.0, 0.4],
        };
        let alpha = [0.3f64, -0.2, 0.5];
        let w = w_alpha(&alpha, &q);
        let h = 1e-6;
        for j in 0..3 {
            let mut up = alpha;
            let mut dn = alpha;
            up[j] += h;
            dn[j] -= h;
            let fd = (nie_linear_outcome(&up, 1.0, &q) - nie_linear_outcome(&dn, 1.0, &q)) / (2.0 * h);
            assert!((fd - w[j]).abs() < 1e-8);
        }
        let beta = [0.4f64, -0.3, 0.2, 0.9];
        let wb = w_beta(&beta, &q);
        let d = |b: &[f64]| {
            let eta0 = b[1] + 0.4 * b[2] + b[3];
            1.0 / (1.0 + (-(b[0] + eta0)).exp()) - 1.0 / (1.0 + (-eta0).exp())
        };
        for j in 0..4 {
            let mut up = beta;
            let mut dn = beta;
            up[j] += h;
            dn[j] -= h;
            let fd = (d(&up) - d(&dn)) / (2.0 * h);
            assert!((fd - wb[j]).abs() < 1e-8);
        }
    }
}
