//! Joint-significance tests: MaxP, classical bootstrap of the min-|t| statistic and
//! its adaptive bootstrap.

use crate::data::Dataset;
use crate::error::Result;
use crate::inference::{
    finish_adaptive, finite, indicator, normal_two_sided, AbConfig, AdaptiveDraw, BootstrapOutcome,
    Method, TestResult,
};
use crate::poc::{poc_components, LinearDraw, PocComponents};
use crate::resampling::run_replicates;
use crate::scalar::Scalar;

/// Standardized statistics and the selected smaller one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JsComponents<T> {
    pub t_alpha: T,
    pub t_beta: T,
    /// `√n·θ̂ = H(T_α, T_β)`.
    pub theta_scaled: T,
    pub selector: (u8, u8),
}

impl<T: Scalar> JsComponents<T> {
    pub fn from_poc(c: &PocComponents<T>) -> Self {
        Self {
            t_alpha: c.t_alpha,
            t_beta: c.t_beta,
            theta_scaled: h_value(c.t_alpha, c.t_beta),
            selector: h_select(c.t_alpha, c.t_beta),
        }
    }
}

/// `(1, 0)` when `|t1| ≤ |t2|`, else `(0, 1)`. Ties pick the first argument.
pub fn h_select<T: Scalar>(t1: T, t2: T) -> (u8, u8) {
    if t2.abs() < t1.abs() {
        (0, 1)
    } else {
        (1, 0)
    }
}

/// The argument with the smaller magnitude.
pub fn h_value<T: Scalar>(t1: T, t2: T) -> T {
    match h_select(t1, t2) {
        (1, 0) => t1,
        _ => t2,
    }
}

pub fn maxp_from(t_alpha: f64, t_beta: f64) -> f64 {
    normal_two_sided(t_alpha).max(normal_two_sided(t_beta))
}

pub fn maxp_test<T: Scalar>(c: &JsComponents<T>, omega_grid: &[f64]) -> TestResult {
    let p = maxp_from(c.t_alpha.as_f64(), c.t_beta.as_f64());
    let est = c.theta_scaled.as_f64();
    TestResult::new(Method::JsMaxp, est, est, p, omega_grid)
}

pub fn adaptive_js_test<T: Scalar>(data: &Dataset<T>, config: &AbConfig) -> Result<TestResult> {
    Ok(adaptive_js_outcome(data, config)?.result)
}

/// Adaptive bootstrap of `√n·θ̂`; `λ = 0` gives the classical bootstrap.
pub fn adaptive_js_outcome<T: Scalar>(data: &Dataset<T>, config: &AbConfig) -> Result<BootstrapOutcome<T>> {
    config.validate()?;
    let c = poc_components(data)?;
    let js = JsComponents::from_poc(&c);
    let (la, lb) = config.thresholds(c.n);
    let scheme = config.bootstrap.scheme;
    let (ba, bb) = (T::lit(config.b_alpha), T::lit(config.b_beta));
    let centre = h_value(ba / c.sigma_alpha, bb / c.sigma_beta);
    let draws = run_replicates(c.n, &config.bootstrap, |idx| {
        let d = LinearDraw::new(data, &c, idx, scheme)?;
        let local = indicator(d.t_alpha, c.t_alpha, la) && indicator(d.t_beta, c.t_beta, lb);
        let value = if local {
            let (zs, zm) = d.local_z(data, &c, idx, scheme);
            h_value((ba + zs) / d.sigma_alpha, (bb + zm) / d.sigma_beta) - centre
        } else {
            h_value(d.t_alpha, d.t_beta) - js.theta_scaled
        };
        Ok(AdaptiveDraw {
            value: finite(value)?,
            local,
        })
    })?;
    let method = if la == 0.0 && lb == 0.0 { Method::JsB } else { Method::JsAb };
    finish_adaptive(method, js.theta_scaled, js.theta_scaled, draws, config, config.lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selector_examples() {
        assert_eq!(h_select(1.0, 2.0), (1, 0));
        assert_eq!(h_select(-3.0, 2.0), (0, 1));
        assert_eq!(h_select(1.0, -1.0), (1, 0));
        assert_eq!(h_value(0.0f64, 0.0), 0.0);
        assert_eq!(h_value(-3.0f64, 2.0), 2.0);
    }

    #[test]
    fn maxp_examples() {
        assert!((maxp_from(1.96, 0.0) - 1.0).abs() < 1e-15);
        assert_eq!(maxp_from(0.0, 0.0), 1.0);
        assert!((maxp_from(5.0, 5.0) - 5.733e-7).abs() < 1e-9);
    }
}
