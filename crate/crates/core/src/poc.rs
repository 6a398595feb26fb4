//! Product-of-coefficients tests: Sobel, classical bootstrap and the adaptive bootstrap.

use crate::data::Dataset;
use crate::error::{MedError, Result};
use crate::inference::{
    finish_adaptive, finite, indicator, normal_two_sided, AbConfig, AdaptiveDraw, BootstrapOutcome,
    Method, TestResult,
};
use crate::regression::{
    apply_projection, fit_ols, outcome_adjusters_for, projection_set, t_from, OlsModel,
    ProjectionSet, DEGENERATE_MOMENT,
};
use crate::resampling::{run_replicates, BootstrapConfig, BootstrapDistribution, Scheme};
use crate::scalar::{mean_prod, Scalar};

/// Estimates from the original single-mediator fit.
#[derive(Debug, Clone, PartialEq)]
pub struct PocComponents<T> {
    pub n: usize,
    pub alpha_hat: T,
    pub beta_hat: T,
    pub sigma_alpha: T,
    pub sigma_beta: T,
    pub se_alpha: T,
    pub se_beta: T,
    pub t_alpha: T,
    pub t_beta: T,
    pub projections: ProjectionSet<T>,
    /// Mediator-model residuals.
    pub eps_m: Vec<T>,
    /// Outcome-model residuals.
    pub eps_y: Vec<T>,
}

impl<T: Scalar> PocComponents<T> {
    pub fn product(&self) -> T {
        self.alpha_hat * self.beta_hat
    }
}

pub fn poc_components<T: Scalar>(data: &Dataset<T>) -> Result<PocComponents<T>> {
    if data.n_mediators() != 1 {
        return Err(MedError::InvalidArgument(format!(
            "single-mediator test given {} mediators",
            data.n_mediators()
        )));
    }
    let mfit = fit_ols(data, OlsModel::Mediator(0))?;
    let yfit = fit_ols(data, OlsModel::Outcome(0))?;
    let t_alpha = mfit.t_stat()?;
    let t_beta = yfit.t_stat()?;
    Ok(PocComponents {
        n: data.n(),
        alpha_hat: mfit.focal(),
        beta_hat: yfit.focal(),
        sigma_alpha: mfit.sigma_hat,
        sigma_beta: yfit.sigma_hat,
        se_alpha: mfit.se,
        se_beta: yfit.se,
        t_alpha,
        t_beta,
        projections: projection_set(data, 0)?,
        eps_m: mfit.residuals,
        eps_y: yfit.residuals,
    })
}

/// Sobel statistic and two-sided normal p-value from raw estimates.
pub fn sobel_from<T: Scalar>(alpha: T, beta: T, se_alpha: T, se_beta: T) -> Result<(f64, f64)> {
    let num = alpha * beta;
    if num == T::zero() {
        return Ok((0.0, 1.0));
    }
    let den = (beta * beta * se_alpha * se_alpha + alpha * alpha * se_beta * se_beta).sqrt();
    if !(den > T::zero()) {
        return Err(MedError::DegenerateResponse("Sobel standard error is zero".into()));
    }
    let z = (num / den).as_f64();
    Ok((z, normal_two_sided(z)))
}

pub fn sobel_test<T: Scalar>(c: &PocComponents<T>, omega_grid: &[f64]) -> Result<TestResult> {
    let (z, p) = sobel_from(c.alpha_hat, c.beta_hat, c.se_alpha, c.se_beta)?;
    Ok(TestResult::new(Method::PocSobel, c.product().as_f64(), z, p, omega_grid))
}

/// Coefficient estimates recomputed on one resample.
#[derive(Debug, Clone)]
pub struct LinearDraw<T> {
    pub alpha: T,
    pub beta: T,
    pub sigma_alpha: T,
    pub sigma_beta: T,
    pub t_alpha: T,
    pub t_beta: T,
    v_s: T,
    v_m: T,
    /// Resample projection coefficients of `S` on `X` and `M` on the outcome adjusters.
    q1_s: Vec<T>,
    q2_m: Vec<T>,
}

impl<T: Scalar> LinearDraw<T> {
    /// Draw for resample `idx` of `data` under `scheme`.
    pub fn new(data: &Dataset<T>, c: &PocComponents<T>, idx: &[usize], scheme: Scheme) -> Result<Self> {
        match scheme {
            Scheme::Pairs => Self::pairs(data, idx),
            Scheme::Projected => Self::projected(c, idx),
        }
    }

    fn pairs(data: &Dataset<T>, idx: &[usize]) -> Result<Self> {
        let d = data.resample(idx);
        let mfit = fit_ols(&d, OlsModel::Mediator(0))?;
        let yfit = fit_ols(&d, OlsModel::Outcome(0))?;
        Ok(Self {
            alpha: mfit.focal(),
            beta: yfit.focal(),
            sigma_alpha: mfit.sigma_hat,
            sigma_beta: yfit.sigma_hat,
            t_alpha: mfit.t_stat()?,
            t_beta: yfit.t_stat()?,
            v_s: mfit.v_moment,
            v_m: yfit.v_moment,
            q1_s: mfit.focal_projection,
            q2_m: yfit.focal_projection,
        })
    }

    fn projected(c: &PocComponents<T>, idx: &[usize]) -> Result<Self> {
        let p = &c.projections;
        let (alpha, sigma_alpha, v_s) = projected_ratio(&p.s_perp, &p.m_perp, idx)?;
        let (beta, sigma_beta, v_m) = projected_ratio(&p.m_perp_prime, &p.y_perp_prime, idx)?;
        let n = T::from_usize_lossy(idx.len());
        Ok(Self {
            alpha,
            beta,
            sigma_alpha,
            sigma_beta,
            t_alpha: t_from(alpha, sigma_alpha, n)?,
            t_beta: t_from(beta, sigma_beta, n)?,
            v_s,
            v_m,
            q1_s: Vec::new(),
            q2_m: Vec::new(),
        })
    }

    /// Local terms `(ℤ*_S, ℤ*_M)` built from the original residuals.
    pub fn local_z(&self, data: &Dataset<T>, c: &PocComponents<T>, idx: &[usize], scheme: Scheme) -> (T, T) {
        let (s_star, m_star) = match scheme {
            Scheme::Pairs => (
                apply_projection(data.exposure(), &data.mediator_adjusters(), &self.q1_s),
                apply_projection(data.outcome_mediator(0), &outcome_adjusters_for(data, 0), &self.q2_m),
            ),
            Scheme::Projected => (c.projections.s_perp.clone(), c.projections.m_perp_prime.clone()),
        };
        let z_s = centered_process(&c.eps_m, &s_star, idx) / self.v_s;
        let z_m = centered_process(&c.eps_y, &m_star, idx) / self.v_m;
        (z_s, z_m)
    }
}

/// `√n (P*ₙ − Pₙ)(a·b)` where `P*ₙ` averages over the rows in `idx`.
pub(crate) fn centered_process<T: Scalar>(a: &[T], b: &[T], idx: &[usize]) -> T {
    let n = T::from_usize_lossy(idx.len());
    let boot = idx.iter().fold(T::zero(), |acc, &i| acc + a[i] * b[i]) / n;
    n.sqrt() * (boot - mean_prod(a, b))
}

/// Slope, scale and second moment of `y` on `x` over resampled projected rows.
fn projected_ratio<T: Scalar>(x: &[T], y: &[T], idx: &[usize]) -> Result<(T, T, T)> {
    let n = T::from_usize_lossy(idx.len());
    let (mut xx, mut xy) = (T::zero(), T::zero());
    for &i in idx {
        xx = xx + x[i] * x[i];
        xy = xy + x[i] * y[i];
    }
    let (xx, xy) = (xx / n, xy / n);
    if !(xx > T::lit(DEGENERATE_MOMENT) * mean_prod(x, x)) {
        return Err(MedError::DegenerateResponse("resampled projected regressor vanishes".into()));
    }
    let coef = xy / xx;
    let rss = idx.iter().fold(T::zero(), |acc, &i| {
        let r = y[i] - coef * x[i];
        acc + r * r
    }) / n;
    Ok((coef, (rss / xx).sqrt(), xx))
}

/// Adaptive bootstrap of `α̂β̂`; `λ = 0` gives the classical bootstrap.
pub fn adaptive_poc_test<T: Scalar>(data: &Dataset<T>, config: &AbConfig) -> Result<TestResult> {
    Ok(adaptive_poc_outcome(data, config)?.result)
}

pub fn adaptive_poc_outcome<T: Scalar>(data: &Dataset<T>, config: &AbConfig) -> Result<BootstrapOutcome<T>> {
    config.validate()?;
    let c = poc_components(data)?;
    let (la, lb) = config.thresholds(c.n);
    let scheme = config.bootstrap.scheme;
    let (ba, bb) = (T::lit(config.b_alpha), T::lit(config.b_beta));
    let nf = T::from_usize_lossy(c.n);
    let draws = run_replicates(c.n, &config.bootstrap, |idx| {
        let d = LinearDraw::new(data, &c, idx, scheme)?;
        let local = indicator(d.t_alpha, c.t_alpha, la) && indicator(d.t_beta, c.t_beta, lb);
        let value = if local {
            let (zs, zm) = d.local_z(data, &c, idx, scheme);
            (ba * zm + bb * zs + zs * zm) / nf
        } else {
            d.alpha * d.beta - c.product()
        };
        Ok(AdaptiveDraw {
            value: finite(value)?,
            local,
        })
    })?;
    let method = if la == 0.0 && lb == 0.0 { Method::PocB } else { Method::PocAb };
    finish_adaptive(method, c.product(), c.product(), draws, config, config.lambda)
}

/// Textbook pairs bootstrap of `α̂*β̂* − α̂β̂`, written without any indicator logic.
///
/// A resample counts as valid when both refits succeed with a positive residual scale.
pub fn classical_poc_bootstrap<T: Scalar>(
    data: &Dataset<T>,
    boot: &BootstrapConfig,
) -> Result<(T, BootstrapDistribution<T>)> {
    let mfit = fit_ols(data, OlsModel::Mediator(0))?;
    let yfit = fit_ols(data, OlsModel::Outcome(0))?;
    let observed = mfit.focal() * yfit.focal();
    let draws = run_replicates(data.n(), boot, |idx| {
        let d = data.resample(idx);
        let m = fit_ols(&d, OlsModel::Mediator(0))?;
        let y = fit_ols(&d, OlsModel::Outcome(0))?;
        m.t_stat()?;
        y.t_stat()?;
        finite(m.focal() * y.focal() - observed)
    })?;
    Ok((observed, BootstrapDistribution::new(draws, Method::PocB.tag(), *boot)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn six_row() -> Dataset<f64> {
        Dataset::new(
            vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0],
            vec![vec![0.2, 1.9, 0.4, 2.2, 1.5, 0.1]],
            vec![1.0, 3.1, 1.2, 3.9, 2.8, 0.7],
            vec![vec![0.5, -0.3, 1.1, 0.2, -0.8, 0.0]],
        )
        .unwrap()
    }

    #[test]
    fn sobel_closed_form() {
        let (z, p) = sobel_from(1.0, 1.0, 0.1, 0.1).unwrap();
        assert!((z - 1.0 / 0.02f64.sqrt()).abs() < 1e-12);
        assert!((p - 1.537e-12).abs() < 1e-14);
        assert_eq!(sobel_from(0.0, 1.0, 0.3, 0.2).unwrap(), (0.0, 1.0));
    }

    #[test]
    fn constant_exposure_rejected() {
        let d = Dataset::new(
            vec![1.0; 5],
            vec![vec![0.1, 0.5, 0.3, 0.9, 0.2]],
            vec![1.0, 2.0, 1.5, 0.2, 0.4],
            vec![],
        )
        .unwrap();
        assert!(matches!(poc_components(&d), Err(MedError::DegenerateResponse(_))));
    }

    #[test]
    fn perfect_outcome_fit_flagged() {
        let m = vec![0.1, 0.5, 0.3, 0.9, 0.2];
        let d = Dataset::new(vec![0.0, 1.0, 0.0, 1.0, 1.0], vec![m.clone()], m, vec![]).unwrap();
        assert!(matches!(poc_components(&d), Err(MedError::DegenerateResponse(_))));
    }

    #[test]
    fn zero_local_parameters_leave_product() {
        let d = six_row();
        let c = poc_components(&d).unwrap();
        let idx = [0, 1, 2, 3, 4, 5, 1, 2];
        let idx = &idx[..6];
        let draw = LinearDraw::new(&d, &c, idx, Scheme::Pairs).unwrap();
        let (zs, zm) = draw.local_z(&d, &c, idx, Scheme::Pairs);
        // the identity resample reproduces the original fit, so both processes vanish
        assert!(zs.abs() < 1e-12 && zm.abs() < 1e-12);
        assert!((draw.alpha - c.alpha_hat).abs() < 1e-12);
    }

    #[test]
    fn lambda_zero_has_no_local_draws() {
        let d = six_row();
        let cfg = AbConfig::with_bootstrap(50, 3).with_lambda(0.0);
        let out = adaptive_poc_outcome(&d, &cfg).unwrap();
        assert_eq!(out.result.indicator_rate, Some(0.0));
        assert_eq!(out.result.method, Method::PocB);
    }
}
