//! Linear fits through Frisch–Waugh–Lovell projections and logistic fits by Newton/IRLS.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{MedError, Result};
use crate::linalg::{PivotedQr, SquareMatrix};
use crate::scalar::{logistic, mean_prod, Scalar};

/// Relative threshold under which a projected second moment counts as zero.
pub const DEGENERATE_MOMENT: f64 = 1e-12;

/// A column residualized on a set of adjusters.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection<T> {
    pub residual: Vec<T>,
    /// Least-squares coefficients of the target on the adjusters.
    pub coefficients: Vec<T>,
}

/// Residualize `target` on `adjusters`.
pub fn fwl_project<T: Scalar>(target: &[T], adjusters: &[&[T]]) -> Result<Projection<T>> {
    if adjusters.is_empty() {
        return Ok(Projection {
            residual: target.to_vec(),
            coefficients: Vec::new(),
        });
    }
    let qr = PivotedQr::new(adjusters)?;
    let (coefficients, residual) = qr.solve(target);
    Ok(Projection {
        residual,
        coefficients,
    })
}

/// Apply stored projection coefficients to (possibly different) rows.
pub fn apply_projection<T: Scalar>(target: &[T], adjusters: &[&[T]], coefficients: &[T]) -> Vec<T> {
    let mut out = target.to_vec();
    for (col, &q) in adjusters.iter().zip(coefficients) {
        for (o, &x) in out.iter_mut().zip(col.iter()) {
            *o = *o - q * x;
        }
    }
    out
}

/// The four projected vectors of the single-mediator SEM and their coefficient blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSet<T> {
    /// `S` residualized on `X`.
    pub s_perp: Vec<T>,
    /// `M` residualized on `X`.
    pub m_perp: Vec<T>,
    /// `M` residualized on the outcome adjusters `(X, S)`.
    pub m_perp_prime: Vec<T>,
    /// `Y` residualized on `(X, S)`.
    pub y_perp_prime: Vec<T>,
    pub q1_s: Vec<T>,
    pub q1_m: Vec<T>,
    pub q2_m: Vec<T>,
    pub q2_y: Vec<T>,
}

/// Projections for mediator `j`; other mediators of `data` are treated as outcome adjusters.
pub fn projection_set<T: Scalar>(data: &Dataset<T>, j: usize) -> Result<ProjectionSet<T>> {
    let med_adj = data.mediator_adjusters();
    let out_adj = outcome_adjusters_for(data, j);
    let qr1 = PivotedQr::new(&med_adj)?;
    let qr2 = PivotedQr::new(&out_adj)?;
    let (q1_s, s_perp) = qr1.solve(data.exposure());
    let (q1_m, m_perp) = qr1.solve(data.mediator(j));
    let (q2_m, m_perp_prime) = qr2.solve(data.outcome_mediator(j));
    let (q2_y, y_perp_prime) = qr2.solve(data.outcome());
    Ok(ProjectionSet {
        s_perp,
        m_perp,
        m_perp_prime,
        y_perp_prime,
        q1_s,
        q1_m,
        q2_m,
        q2_y,
    })
}

/// Adjusters of the outcome model for mediator `j`: `X`, outcome-only covariates,
/// `S`, then every other mediator.
pub fn outcome_adjusters_for<T: Scalar>(data: &Dataset<T>, j: usize) -> Vec<&[T]> {
    let mut adj = data.outcome_adjusters();
    adj.extend(
        (0..data.n_mediators())
            .filter(|&k| k != j)
            .map(|k| data.outcome_mediator(k)),
    );
    adj
}

/// Which linear equation of the SEM to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OlsModel {
    /// `M_j ~ S + X`; focal regressor `S`.
    Mediator(usize),
    /// `Y ~ M_j + X + S (+ other mediators)`; focal regressor `M_j`.
    Outcome(usize),
}

/// OLS fit summarized around one focal regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit<T> {
    /// Focal coefficient first, then one per adjuster in adjuster order.
    pub coefficients: Vec<T>,
    pub residuals: Vec<T>,
    /// `sqrt(mean(ε̂²) / mean(focal⊥²))`.
    pub sigma_hat: T,
    /// `sigma_hat / sqrt(n)`.
    pub se: T,
    /// `mean(focal⊥²)`.
    pub v_moment: T,
    /// Focal regressor residualized on the adjusters.
    pub focal_perp: Vec<T>,
    /// Coefficients of the focal regressor on the adjusters.
    pub focal_projection: Vec<T>,
}

impl<T: Scalar> LinearFit<T> {
    pub fn focal(&self) -> T {
        self.coefficients[0]
    }

    /// `√n · coef / σ̂`; `DegenerateResponse` when `σ̂` vanishes.
    pub fn t_stat(&self) -> Result<T> {
        let n = T::from_usize_lossy(self.residuals.len());
        t_from(self.focal(), self.sigma_hat, n)
    }
}

pub(crate) fn t_from<T: Scalar>(coef: T, sigma: T, n: T) -> Result<T> {
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return Err(MedError::DegenerateResponse(
            "residual scale is zero; t statistic undefined".into(),
        ));
    }
    Ok(n.sqrt() * coef / sigma)
}

/// Fit one linear SEM equation.
pub fn fit_ols<T: Scalar>(data: &Dataset<T>, model: OlsModel) -> Result<LinearFit<T>> {
    match model {
        OlsModel::Mediator(j) => {
            check_index(data, j)?;
            focal_fit(data.exposure(), data.mediator(j), &data.mediator_adjusters())
        }
        OlsModel::Outcome(j) => {
            check_index(data, j)?;
            focal_fit(data.outcome_mediator(j), data.outcome(), &outcome_adjusters_for(data, j))
        }
    }
}

fn check_index<T: Scalar>(data: &Dataset<T>, j: usize) -> Result<()> {
    if j >= data.n_mediators() {
        return Err(MedError::InvalidArgument(format!("mediator index {j} out of range")));
    }
    Ok(())
}

/// Regress `response` on `focal` plus `adjusters` via the projected ratio.
pub fn focal_fit<T: Scalar>(focal: &[T], response: &[T], adjusters: &[&[T]]) -> Result<LinearFit<T>> {
    let n = focal.len();
    if n <= adjusters.len() + 1 {
        return Err(MedError::SingularDesign(format!(
            "{n} rows for {} parameters",
            adjusters.len() + 1
        )));
    }
    let qr = PivotedQr::new(adjusters)?;
    let (q_f, focal_perp) = qr.solve(focal);
    let (q_r, response_perp) = qr.solve(response);
    let v_moment = check_focal_moment(focal, &focal_perp)?;
    let coef = mean_prod(&focal_perp, &response_perp) / v_moment;
    let residuals: Vec<T> = response_perp
        .iter()
        .zip(&focal_perp)
        .map(|(&r, &f)| r - coef * f)
        .collect();
    let sigma_hat = (mean_prod(&residuals, &residuals) / v_moment).sqrt();
    let mut coefficients = Vec::with_capacity(adjusters.len() + 1);
    coefficients.push(coef);
    coefficients.extend(q_r.iter().zip(&q_f).map(|(&a, &b)| a - coef * b));
    Ok(LinearFit {
        coefficients,
        residuals,
        sigma_hat,
        se: sigma_hat / T::from_usize_lossy(n).sqrt(),
        v_moment,
        focal_perp,
        focal_projection: q_f,
    })
}

/// Second moment of a projected regressor, rejecting near-zero values.
pub(crate) fn check_focal_moment<T: Scalar>(focal: &[T], focal_perp: &[T]) -> Result<T> {
    let v = mean_prod(focal_perp, focal_perp);
    let scale = mean_prod(focal, focal);
    let first = focal.first().copied().unwrap_or_else(T::zero);
    if scale == T::zero() || focal.iter().all(|&x| x == first) {
        return Err(MedError::DegenerateResponse("focal regressor is constant".into()));
    }
    if !(v > T::lit(DEGENERATE_MOMENT) * scale) {
        return Err(MedError::SingularDesign(
            "focal regressor is collinear with the adjusters".into(),
        ));
    }
    Ok(v)
}

/// Options for [`fit_logistic`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticOptions {
    pub max_iter: usize,
    /// Convergence threshold on the max-abs Newton step.
    pub tol: f64,
    /// Coefficient magnitude above which separation is reported.
    pub separation_limit: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-8,
            separation_limit: 30.0,
        }
    }
}

/// Logistic regression fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit<T> {
    pub coefficients: Vec<T>,
    pub fitted_probs: Vec<T>,
    /// `mean(g(1-g) d dᵀ)`.
    pub info_matrix: SquareMatrix<T>,
    pub info_inverse: SquareMatrix<T>,
    pub converged: bool,
    pub iterations: usize,
}

impl<T: Scalar> LogisticFit<T> {
    /// Model-based t statistic `√n · coef_j / sqrt([info⁻¹]_jj)`.
    pub fn t_stat(&self, j: usize) -> T {
        let n = T::from_usize_lossy(self.fitted_probs.len());
        n.sqrt() * self.coefficients[j] / self.info_inverse.get(j, j).sqrt()
    }
}

/// Fit `P(response = 1) = g(dᵀθ)` where `d` is a row of `design`.
pub fn fit_logistic<T: Scalar>(
    response: &[T],
    design: &[&[T]],
    opts: &LogisticOptions,
) -> Result<LogisticFit<T>> {
    let n = response.len();
    let p = design.len();
    if response.iter().any(|&y| y != T::zero() && y != T::one()) {
        return Err(MedError::InvalidData("logistic response must be 0/1".into()));
    }
    if n <= p {
        return Err(MedError::SingularDesign(format!("{n} rows for {p} parameters")));
    }
    PivotedQr::new(design)?;
    let limit = T::lit(opts.separation_limit);
    let tol = T::lit(opts.tol);
    let mut theta = vec![T::zero(); p];
    for iter in 1..=opts.max_iter {
        let probs = linear_probs(design, &theta);
        let weights: Vec<T> = probs.iter().map(|&g| g * (T::one() - g)).collect();
        let info = SquareMatrix::weighted_mean_outer(design, Some(&weights));
        let score = score_vector(response, &probs, design);
        let step = info.solve_spd(&score)?;
        let mut max_step = T::zero();
        for (t, &s) in theta.iter_mut().zip(&step) {
            *t = *t + s;
            max_step = max_step.max(s.abs());
        }
        if theta.iter().any(|t| !(t.abs() <= limit)) {
            return Err(MedError::SeparationSuspected {
                limit: opts.separation_limit,
            });
        }
        if max_step <= tol {
            return finish_logistic(design, theta, iter);
        }
    }
    Err(MedError::NonConvergence {
        iterations: opts.max_iter,
    })
}

fn finish_logistic<T: Scalar>(design: &[&[T]], theta: Vec<T>, iterations: usize) -> Result<LogisticFit<T>> {
    let probs = linear_probs(design, &theta);
    if probs.iter().any(|&g| !(g > T::zero() && g < T::one())) {
        return Err(MedError::ProbabilityBoundary { tol: 0.0 });
    }
    let weights: Vec<T> = probs.iter().map(|&g| g * (T::one() - g)).collect();
    let info = SquareMatrix::weighted_mean_outer(design, Some(&weights));
    let info_inverse = info.inverse_spd()?;
    Ok(LogisticFit {
        coefficients: theta,
        fitted_probs: probs,
        info_matrix: info,
        info_inverse,
        converged: true,
        iterations,
    })
}

/// `g(dᵢᵀθ)` for every row.
pub fn linear_probs<T: Scalar>(design: &[&[T]], theta: &[T]) -> Vec<T> {
    let n = design.first().map_or(0, |c| c.len());
    (0..n)
        .map(|i| {
            let eta = design
                .iter()
                .zip(theta)
                .fold(T::zero(), |acc, (c, &t)| acc + c[i] * t);
            logistic(eta)
        })
        .collect()
}

/// `mean((y − g) d)`.
pub fn score_vector<T: Scalar>(response: &[T], probs: &[T], design: &[&[T]]) -> Vec<T> {
    let resid: Vec<T> = response.iter().zip(probs).map(|(&y, &g)| y - g).collect();
    design.iter().map(|c| mean_prod(&resid, c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn centering_on_intercept() {
        let one = [1.0; 4];
        let p = fwl_project(&[0.0, 0.0, 1.0, 1.0], &[&one]).unwrap();
        for (a, b) in p.residual.iter().zip([-0.5, -0.5, 0.5, 0.5]) {
            assert!(close(*a, b, 1e-15));
        }
    }

    #[test]
    fn self_projection_vanishes() {
        let one = [1.0; 4];
        let s = [0.0, 0.0, 1.0, 1.0];
        let p: Projection<f64> = fwl_project(&s, &[&one, &s]).unwrap();
        assert!(p.residual.iter().all(|r| r.abs() <= 1e-12));
    }

    #[test]
    fn two_column_residuals_by_hand() {
        let one = [1.0; 4];
        let s = [0.0, 0.0, 1.0, 1.0];
        let p = fwl_project(&[1.0, 2.0, 3.0, 5.0], &[&one, &s]).unwrap();
        for (a, b) in p.residual.iter().zip([-0.5, 0.5, -1.0, 1.0]) {
            assert!(close(*a, b, 1e-14));
        }
    }

    fn four_row() -> Dataset<f64> {
        Dataset::new(
            vec![0.0, 0.0, 1.0, 1.0],
            vec![vec![1.0, 2.0, 3.0, 5.0]],
            vec![0.3, -0.2, 0.8, 1.9],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn mediator_fit_by_hand() {
        let fit = fit_ols(&four_row(), OlsModel::Mediator(0)).unwrap();
        assert!(close(fit.focal(), 2.5, 1e-14));
        assert!(close(fit.coefficients[1], 1.5, 1e-14));
        assert!(close(fit.sigma_hat * fit.sigma_hat, 2.5, 1e-13));
    }

    #[test]
    fn constant_response_gives_zero_fit() {
        let d = Dataset::new(
            vec![0.0, 1.0, 0.0, 1.0, 1.0],
            vec![vec![2.0; 5]],
            vec![1.0, 2.0, 3.0, 4.0, 5.0],
            vec![],
        )
        .unwrap();
        let fit: LinearFit<f64> = fit_ols(&d, OlsModel::Mediator(0)).unwrap();
        assert!(fit.focal().abs() < 1e-14);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-14));
        assert!(fit.sigma_hat < 1e-14);
    }

    #[test]
    fn duplicated_mediator_is_singular() {
        let m = vec![1.0, 2.0, 3.0, 5.0, 4.0];
        let d = Dataset::new(
            vec![0.0, 1.0, 0.0, 1.0, 1.0],
            vec![m.clone()],
            vec![1.0, 2.0, 3.0, 4.0, 5.0],
            vec![m],
        )
        .unwrap();
        assert!(matches!(
            fit_ols(&d, OlsModel::Outcome(0)),
            Err(MedError::SingularDesign(_))
        ));
    }

    #[test]
    fn constant_exposure_is_degenerate() {
        let d = Dataset::new(
            vec![1.0; 5],
            vec![vec![1.0, 2.0, 3.0, 5.0, 4.0]],
            vec![1.0, 2.0, 3.0, 4.0, 5.0],
            vec![],
        )
        .unwrap();
        assert!(matches!(
            fit_ols(&d, OlsModel::Mediator(0)),
            Err(MedError::DegenerateResponse(_))
        ));
    }

    #[test]
    fn logistic_half_and_half() {
        let y = [0.0, 1.0, 0.0, 1.0];
        let one = [1.0; 4];
        let fit: LogisticFit<f64> = fit_logistic(&y, &[&one], &LogisticOptions::default()).unwrap();
        assert!(fit.coefficients[0].abs() < 1e-12);
        assert!(fit.fitted_probs.iter().all(|&g| close(g, 0.5, 1e-12)));
    }

    #[test]
    fn logistic_separation() {
        let s = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let one = [1.0; 6];
        let r = fit_logistic(&s, &[&one, &s], &LogisticOptions::default());
        assert!(matches!(r, Err(MedError::SeparationSuspected { .. })));
    }

    #[test]
    fn logistic_rejects_non_binary() {
        let one = [1.0; 3];
        let r = fit_logistic(&[0.0, 0.5, 1.0], &[&one], &LogisticOptions::default());
        assert!(matches!(r, Err(MedError::InvalidData(_))));
    }
}
