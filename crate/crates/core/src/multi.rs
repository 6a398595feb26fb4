//! Joint mediation effect `α_Sᵀβ_M` across several mediators, and the individual
//! effect of one mediator inside a multi-mediator outcome model.

use crate::data::Dataset;
use crate::error::{MedError, Result};
use crate::inference::{finish_adaptive, finite, lambda_n, AbConfig, AdaptiveDraw, BootstrapOutcome, Method, TestResult};
use crate::linalg::{PivotedQr, SquareMatrix};
use crate::poc::{adaptive_poc_test, centered_process};
use crate::regression::{apply_projection, check_focal_moment, focal_fit, t_from, DEGENERATE_MOMENT};
use crate::resampling::{run_replicates, Scheme};
use crate::scalar::{dot, mean_prod, Scalar};

/// Joint outcome regression `Y ~ M₁..M_J + adjusters` solved through projections.
#[derive(Debug, Clone)]
struct JointOutcome<T> {
    beta: Vec<T>,
    sigma: Vec<T>,
    residuals: Vec<T>,
    v_m: SquareMatrix<T>,
    /// Projection coefficients of each mediator on the outcome adjusters.
    q2_m: Vec<Vec<T>>,
    m_perp: Vec<Vec<T>>,
    y_perp: Vec<T>,
}

fn joint_outcome<T: Scalar>(mediators: &[&[T]], outcome: &[T], adjusters: &[&[T]]) -> Result<JointOutcome<T>> {
    let n = outcome.len();
    let j = mediators.len();
    if n <= adjusters.len() + j {
        return Err(MedError::SingularDesign(format!("{n} rows for {} parameters", adjusters.len() + j)));
    }
    let qr = PivotedQr::new(adjusters)?;
    let mut q2_m = Vec::with_capacity(j);
    let mut m_perp = Vec::with_capacity(j);
    for m in mediators {
        let (q, r) = qr.solve(m);
        check_focal_moment(m, &r)?;
        q2_m.push(q);
        m_perp.push(r);
    }
    let y_perp = qr.residual(outcome);
    let cols: Vec<&[T]> = m_perp.iter().map(Vec::as_slice).collect();
    solve_joint(&cols, &y_perp).map(|(beta, sigma, residuals, v_m)| JointOutcome {
        beta,
        sigma,
        residuals,
        v_m,
        q2_m,
        m_perp,
        y_perp,
    })
}

type JointSolve<T> = (Vec<T>, Vec<T>, Vec<T>, SquareMatrix<T>);

/// `β = V⁻¹ P(M⊥′ Y⊥′)`, residuals and `σ̂_j² = mean(ε²)·[V⁻¹]_jj`.
fn solve_joint<T: Scalar>(m_perp: &[&[T]], y_perp: &[T]) -> Result<JointSolve<T>> {
    let qr = PivotedQr::new(m_perp)?;
    let (beta, residuals) = qr.solve(y_perp);
    let v = SquareMatrix::weighted_mean_outer(m_perp, None);
    let vinv = v.inverse_spd()?;
    let s2 = mean_prod(&residuals, &residuals);
    let sigma = (0..m_perp.len()).map(|k| (s2 * vinv.get(k, k)).sqrt()).collect();
    Ok((beta, sigma, residuals, v))
}

/// Estimates from the original multi-mediator fit.
#[derive(Debug, Clone)]
pub struct JointComponents<T> {
    pub n: usize,
    pub alpha_vec: Vec<T>,
    pub beta_vec: Vec<T>,
    pub sigma_alpha: Vec<T>,
    pub sigma_beta: Vec<T>,
    pub t_alpha_vec: Vec<T>,
    pub t_beta_vec: Vec<T>,
    /// `S` residualized on `X`.
    pub s_perp: Vec<T>,
    /// Each mediator residualized on `X`.
    pub m_perp: Vec<Vec<T>>,
    /// Each mediator residualized on the outcome adjusters.
    pub m_perp_prime: Vec<Vec<T>>,
    pub y_perp_prime: Vec<T>,
    pub eps_m: Vec<Vec<T>>,
    pub eps_y: Vec<T>,
}

impl<T: Scalar> JointComponents<T> {
    pub fn joint_effect(&self) -> T {
        dot(&self.alpha_vec, &self.beta_vec)
    }
}

pub fn joint_components<T: Scalar>(data: &Dataset<T>) -> Result<JointComponents<T>> {
    let n = data.n();
    let nf = T::from_usize_lossy(n);
    let med_adj = data.mediator_adjusters();
    let mut alpha_vec = Vec::new();
    let mut sigma_alpha = Vec::new();
    let mut t_alpha_vec = Vec::new();
    let mut eps_m = Vec::new();
    let mut m_perp = Vec::new();
    let mut s_perp = Vec::new();
    for m in data.mediators() {
        let fit = focal_fit(data.exposure(), m, &med_adj)?;
        t_alpha_vec.push(fit.t_stat()?);
        alpha_vec.push(fit.focal());
        sigma_alpha.push(fit.sigma_hat);
        m_perp.push(fit.residuals.iter().zip(&fit.focal_perp).map(|(&e, &s)| e + fit.focal() * s).collect());
        eps_m.push(fit.residuals);
        s_perp = fit.focal_perp;
    }
    let meds: Vec<&[T]> = data.outcome_mediators().iter().map(Vec::as_slice).collect();
    let out = joint_outcome(&meds, data.outcome(), &data.outcome_adjusters())?;
    let t_beta_vec = out
        .beta
        .iter()
        .zip(&out.sigma)
        .map(|(&b, &s)| t_from(b, s, nf))
        .collect::<Result<Vec<T>>>()?;
    Ok(JointComponents {
        n,
        alpha_vec,
        beta_vec: out.beta,
        sigma_alpha,
        sigma_beta: out.sigma,
        t_alpha_vec,
        t_beta_vec,
        s_perp,
        m_perp,
        m_perp_prime: out.m_perp,
        y_perp_prime: out.y_perp,
        eps_m,
        eps_y: out.residuals,
    })
}

struct JointDraw<T> {
    alpha: Vec<T>,
    beta: Vec<T>,
    t_alpha: Vec<T>,
    t_beta: Vec<T>,
    v_s: T,
    v_m: SquareMatrix<T>,
    q1_s: Vec<T>,
    q2_m: Vec<Vec<T>>,
}

fn joint_draw<T: Scalar>(data: &Dataset<T>, c: &JointComponents<T>, idx: &[usize], scheme: Scheme) -> Result<JointDraw<T>> {
    let nf = T::from_usize_lossy(idx.len());
    match scheme {
        Scheme::Pairs => {
            let d = data.resample(idx);
            let med_adj = d.mediator_adjusters();
            let mut alpha = Vec::new();
            let mut t_alpha = Vec::new();
            let mut v_s = T::zero();
            let mut q1_s = Vec::new();
            for m in d.mediators() {
                let fit = focal_fit(d.exposure(), m, &med_adj)?;
                t_alpha.push(fit.t_stat()?);
                alpha.push(fit.focal());
                v_s = fit.v_moment;
                q1_s = fit.focal_projection;
            }
            let meds: Vec<&[T]> = d.outcome_mediators().iter().map(Vec::as_slice).collect();
            let out = joint_outcome(&meds, d.outcome(), &d.outcome_adjusters())?;
            let t_beta = out.beta.iter().zip(&out.sigma).map(|(&b, &s)| t_from(b, s, nf)).collect::<Result<_>>()?;
            Ok(JointDraw {
                alpha,
                beta: out.beta,
                t_alpha,
                t_beta,
                v_s,
                v_m: out.v_m,
                q1_s,
                q2_m: out.q2_m,
            })
        }
        Scheme::Projected => {
            let pick = |v: &[T]| idx.iter().map(|&i| v[i]).collect::<Vec<T>>();
            let s = pick(&c.s_perp);
            let v_s = mean_prod(&s, &s);
            if !(v_s > T::lit(DEGENERATE_MOMENT) * mean_prod(&c.s_perp, &c.s_perp)) {
                return Err(MedError::DegenerateResponse("resampled projected exposure vanishes".into()));
            }
            let mut alpha = Vec::new();
            let mut t_alpha = Vec::new();
            for mp in &c.m_perp {
                let m = pick(mp);
                let a = mean_prod(&s, &m) / v_s;
                let r: Vec<T> = m.iter().zip(&s).map(|(&mi, &si)| mi - a * si).collect();
                t_alpha.push(t_from(a, (mean_prod(&r, &r) / v_s).sqrt(), nf)?);
                alpha.push(a);
            }
            let mcols: Vec<Vec<T>> = c.m_perp_prime.iter().map(|v| pick(v)).collect();
            let mrefs: Vec<&[T]> = mcols.iter().map(Vec::as_slice).collect();
            let (beta, sigma, _, v_m) = solve_joint(&mrefs, &pick(&c.y_perp_prime))?;
            let t_beta = beta.iter().zip(&sigma).map(|(&b, &s)| t_from(b, s, nf)).collect::<Result<_>>()?;
            Ok(JointDraw {
                alpha,
                beta,
                t_alpha,
                t_beta,
                v_s,
                v_m,
                q1_s: Vec::new(),
                q2_m: Vec::new(),
            })
        }
    }
}

impl<T: Scalar> JointDraw<T> {
    /// `(ℤ̄*_S, ℤ̄*_M)`.
    fn local_z(&self, data: &Dataset<T>, c: &JointComponents<T>, idx: &[usize], scheme: Scheme) -> Result<(Vec<T>, Vec<T>)> {
        let (s_star, m_star): (Vec<T>, Vec<Vec<T>>) = match scheme {
            Scheme::Pairs => {
                let out_adj = data.outcome_adjusters();
                (
                    apply_projection(data.exposure(), &data.mediator_adjusters(), &self.q1_s),
                    data.outcome_mediators()
                        .iter()
                        .zip(&self.q2_m)
                        .map(|(m, q)| apply_projection(m, &out_adj, q))
                        .collect(),
                )
            }
            Scheme::Projected => (c.s_perp.clone(), c.m_perp_prime.clone()),
        };
        let z_s = c.eps_m.iter().map(|e| centered_process(e, &s_star, idx) / self.v_s).collect();
        let g_m: Vec<T> = m_star.iter().map(|m| centered_process(&c.eps_y, m, idx)).collect();
        let z_m = self.v_m.solve_spd(&g_m)?;
        Ok((z_s, z_m))
    }
}

pub fn adaptive_joint_test<T: Scalar>(data: &Dataset<T>, config: &AbConfig) -> Result<TestResult> {
    Ok(adaptive_joint_outcome(data, config)?.result)
}

/// Adaptive bootstrap of `α̂ᵀβ̂` with one shared threshold across all `4J` statistics.
pub fn adaptive_joint_outcome<T: Scalar>(data: &Dataset<T>, config: &AbConfig) -> Result<BootstrapOutcome<T>> {
    config.validate()?;
    let c = joint_components(data)?;
    let j = c.alpha_vec.len();
    let b_alpha = local_vector::<T>(&config.b_alpha_vec, j, config.b_alpha)?;
    let b_beta = local_vector::<T>(&config.b_beta_vec, j, config.b_beta)?;
    let th = T::lit(lambda_n(config.lambda, c.n));
    let obs_max = c.t_alpha_vec.iter().chain(&c.t_beta_vec).fold(T::zero(), |m, t| m.max(t.abs()));
    let observed = c.joint_effect();
    let nf = T::from_usize_lossy(c.n);
    let scheme = config.bootstrap.scheme;
    let draws = run_replicates(c.n, &config.bootstrap, |idx| {
        let d = joint_draw(data, &c, idx, scheme)?;
        let boot_max = d.t_alpha.iter().chain(&d.t_beta).fold(T::zero(), |m, t| m.max(t.abs()));
        let local = obs_max <= th && boot_max <= th;
        let value = if local {
            let (zs, zm) = d.local_z(data, &c, idx, scheme)?;
            (dot(&b_alpha, &zm) + dot(&b_beta, &zs) + dot(&zs, &zm)) / nf
        } else {
            dot(&d.alpha, &d.beta) - observed
        };
        Ok(AdaptiveDraw {
            value: finite(value)?,
            local,
        })
    })?;
    let method = if config.lambda == 0.0 { Method::JointB } else { Method::JointAb };
    finish_adaptive(method, observed, observed, draws, config, config.lambda)
}

fn local_vector<T: Scalar>(given: &[f64], j: usize, scalar: f64) -> Result<Vec<T>> {
    match given.len() {
        0 => Ok(vec![T::lit(scalar); j]),
        k if k == j => Ok(given.iter().map(|&v| T::lit(v)).collect()),
        k => Err(MedError::InvalidArgument(format!("local vector has length {k}, expected {j}"))),
    }
}

/// Adaptive PoC test for mediator `target`, with every other mediator adjusted for in
/// the outcome model only.
pub fn individual_within_multi_test<T: Scalar>(data: &Dataset<T>, target: usize, config: &AbConfig) -> Result<TestResult> {
    if data.n_mediators() < 2 {
        return Err(MedError::InvalidArgument("individual effect needs at least two mediators".into()));
    }
    let d = data.target_mediator(target)?;
    let mut result = adaptive_poc_test(&d, config)?;
    result.target = Some(data.labels().mediators[target].clone());
    Ok(result)
}
