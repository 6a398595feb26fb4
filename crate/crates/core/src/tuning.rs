//! Double-bootstrap diagnostics: data processing that forces a zero coefficient,
//! λ selection and the confirmatory pattern classifier.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{MedError, Result};
use crate::inference::AbConfig;
use crate::poc::adaptive_poc_test;
use crate::resampling::{
    derive_substream, draw_pair_indices, ks_critical_value, ks_uniform_distance, mix_seed, with_workers, Scheme,
};
use crate::scalar::{dot, Scalar};

pub const DEFAULT_GRID: [f64; 6] = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];

/// Fallback λ when the zero-coefficient diagnostics do not both look conservative.
pub const NON_DEGENERATE_LAMBDA: f64 = 2.0;

const ALPHA_STREAM: u64 = 0xA1;
const BETA_STREAM: u64 = 0xB1;
const JOINT_STREAM: u64 = 0xAB;
const OBS_STREAM: u64 = 0x0B;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcessingMode {
    /// Mediator and covariates of the mediator model made orthogonal to the exposure.
    Alpha,
    /// Outcome, exposure and covariates of the outcome model made orthogonal to the mediator.
    Beta,
    Both,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedDataset<T> {
    pub mode: ProcessingMode,
    pub data: Dataset<T>,
}

/// `v − u (uᵀv / uᵀu)`.
fn project_out<T: Scalar>(v: &[T], u: &[T], uu: T) -> Vec<T> {
    let c = dot(u, v) / uu;
    v.iter().zip(u).map(|(&a, &b)| a - b * c).collect()
}

fn squared_norm<T: Scalar>(u: &[T], what: &str) -> Result<T> {
    let uu = dot(u, u);
    if !(uu.as_f64() > 0.0) || !uu.is_finite() {
        return Err(MedError::SingularDesign(format!("{what} column has zero norm")));
    }
    Ok(uu)
}

/// Mediator model: in `M ~ S + X`, replace `(M, X)` by their projections off `S`.
/// The outcome model keeps its columns.
fn process_alpha<T: Scalar>(data: &Dataset<T>) -> Result<Dataset<T>> {
    let s = data.exposure();
    let ss = squared_norm(s, "exposure")?;
    let m = project_out(data.mediator(0), s, ss);
    let x = data.covariates().iter().map(|c| project_out(c, s, ss)).collect();
    Dataset::from_parts(
        s.to_vec(),
        vec![m],
        data.outcome().to_vec(),
        x,
        data.outcome_covariates().to_vec(),
        data.labels().clone(),
    )?
    .with_outcome_view(
        data.outcome_exposure().to_vec(),
        data.outcome_mediators().to_vec(),
        data.outcome_model_covariates().to_vec(),
    )
}

/// Outcome model: in `Y ~ M + S + X`, replace `(Y, S, X)` by their projections off
/// `M`. The mediator model keeps its columns.
fn process_beta<T: Scalar>(data: &Dataset<T>) -> Result<Dataset<T>> {
    let m = data.outcome_mediator(0);
    let mm = squared_norm(m, "mediator")?;
    let off_m = |c: &Vec<T>| project_out(c, m, mm);
    Dataset::from_parts(
        data.exposure().to_vec(),
        data.mediators().to_vec(),
        project_out(data.outcome(), m, mm),
        data.covariates().to_vec(),
        data.outcome_covariates().iter().map(off_m).collect(),
        data.labels().clone(),
    )?
    .with_outcome_view(
        project_out(data.outcome_exposure(), m, mm),
        vec![m.to_vec()],
        data.outcome_model_covariates().iter().map(off_m).collect(),
    )
}

/// Process a single-mediator dataset so that the refitted exposure–mediator
/// coefficient (`Alpha`), mediator–outcome coefficient (`Beta`), or both are zero.
pub fn residual_project<T: Scalar>(data: &Dataset<T>, mode: ProcessingMode) -> Result<ProcessedDataset<T>> {
    if data.n_mediators() != 1 {
        return Err(MedError::InvalidArgument(
            "data processing needs exactly one mediator; select a target first".into(),
        ));
    }
    let out = match mode {
        ProcessingMode::Alpha => process_alpha(data)?,
        ProcessingMode::Beta => process_beta(data)?,
        ProcessingMode::Both => process_beta(&process_alpha(data)?)?,
    };
    Ok(ProcessedDataset { mode, data: out })
}

/// Settings for the two bootstrap layers and the p-sample diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DbConfig {
    pub b_outer: usize,
    pub b_inner: usize,
    pub seed: u64,
    /// Resampling scheme of the inner test.
    pub scheme: Scheme,
    pub workers: Option<usize>,
    /// KS level at which a p-sample counts as uniform.
    pub ks_level: f64,
    /// A p-sample is conservative when the fraction below `conservative_cutoff` is
    /// less than `conservative_fraction`.
    pub conservative_cutoff: f64,
    pub conservative_fraction: f64,
}

impl Default for DbConfig {
    fn default() -> Self {
        Self {
            b_outer: 500,
            b_inner: 500,
            seed: 0,
            scheme: Scheme::Pairs,
            workers: None,
            ks_level: 0.01,
            conservative_cutoff: 0.05,
            conservative_fraction: 0.025,
        }
    }
}

impl DbConfig {
    pub fn new(b_outer: usize, b_inner: usize, seed: u64) -> Self {
        Self {
            b_outer,
            b_inner,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.b_outer == 0 || self.b_inner == 0 {
            return Err(MedError::InvalidArgument("b_outer and b_inner must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(MedError::InvalidArgument("workers must be at least 1".into()));
        }
        if !(self.ks_level > 0.0 && self.ks_level < 1.0) {
            return Err(MedError::InvalidArgument("ks_level must lie in (0, 1)".into()));
        }
        if !(self.conservative_cutoff > 0.0 && self.conservative_cutoff < 1.0)
            || !(self.conservative_fraction >= 0.0 && self.conservative_fraction <= 1.0)
        {
            return Err(MedError::InvalidArgument("conservative rule values must lie in (0, 1)".into()));
        }
        Ok(())
    }

    fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }
}

/// p-values from the outer replicates that succeeded, in replicate order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbSample {
    pub lambda: f64,
    pub pvalues: Vec<f64>,
    pub missing: usize,
    pub ks_distance: f64,
    pub ks_critical: f64,
    pub uniform: bool,
    pub fraction_below_cutoff: f64,
    pub conservative: bool,
}

impl DbSample {
    fn new(lambda: f64, pvalues: Vec<f64>, missing: usize, cfg: &DbConfig) -> Result<Self> {
        if pvalues.is_empty() {
            return Err(MedError::DegenerateResampling {
                replicate: 0,
                attempts: 2,
                last: "every outer replicate failed".into(),
            });
        }
        let m = pvalues.len();
        let ks_distance = ks_uniform_distance(&pvalues);
        let ks_critical = ks_critical_value(m, cfg.ks_level);
        let below = pvalues.iter().filter(|&&p| p < cfg.conservative_cutoff).count() as f64 / m as f64;
        Ok(Self {
            lambda,
            pvalues,
            missing,
            ks_distance,
            ks_critical,
            uniform: ks_distance < ks_critical,
            fraction_below_cutoff: below,
            conservative: below < cfg.conservative_fraction,
        })
    }
}

fn outer_failure(e: &MedError) -> bool {
    e.is_numerical() || matches!(e, MedError::DegenerateResampling { .. })
}

fn outer_replicate<T: Scalar>(data: &Dataset<T>, lambda: f64, cfg: &DbConfig, r: usize) -> Result<Option<f64>> {
    let mut rng = derive_substream(cfg.seed, r as u64);
    let mut inner = AbConfig::with_bootstrap(cfg.b_inner, mix_seed(cfg.seed, r as u64)).with_lambda(lambda);
    inner.bootstrap.scheme = cfg.scheme;
    for _ in 0..2 {
        let idx = draw_pair_indices(data.n(), &mut rng);
        match adaptive_poc_test(&data.resample(&idx), &inner) {
            Ok(res) => return Ok(Some(res.p_value)),
            Err(e) if outer_failure(&e) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(None)
}

/// Outer pairs bootstrap; each replicate runs the adaptive PoC test with `lambda`.
/// A failing outer replicate is redrawn once and then counted as missing.
pub fn double_bootstrap<T: Scalar>(data: &Dataset<T>, lambda: f64, cfg: &DbConfig) -> Result<DbSample> {
    cfg.validate()?;
    if !(lambda >= 0.0) {
        return Err(MedError::InvalidArgument("lambda must be non-negative".into()));
    }
    let raw = with_workers(cfg.workers, || {
        (0..cfg.b_outer)
            .into_par_iter()
            .map(|r| outer_replicate(data, lambda, cfg, r))
            .collect::<Result<Vec<Option<f64>>>>()
    })?;
    let missing = raw.iter().filter(|p| p.is_none()).count();
    DbSample::new(lambda, raw.into_iter().flatten().collect(), missing, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionPath {
    /// Both processed samples were conservative; λ came from the grid sweep.
    GridSearch,
    #[serde(rename = "non-degenerate case")]
    NonDegenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lambda: f64,
    pub ks_distance: f64,
    pub ks_critical: f64,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSelection {
    pub lambda: f64,
    pub path: SelectionPath,
    pub alpha_sample: DbSample,
    pub beta_sample: DbSample,
    pub grid: Vec<GridPoint>,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(MedError::InvalidArgument("lambda grid is empty".into()));
    }
    if grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(MedError::InvalidArgument("lambda grid values must be finite and non-negative".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MedError::InvalidArgument("lambda grid must be strictly ascending".into()));
    }
    Ok(())
}

/// Choose λ by double bootstrap. Grid values share one seed so the sweep is paired.
pub fn select_lambda<T: Scalar>(data: &Dataset<T>, grid: &[f64], cfg: &DbConfig) -> Result<LambdaSelection> {
    check_grid(grid)?;
    cfg.validate()?;
    let d_alpha = residual_project(data, ProcessingMode::Alpha)?.data;
    let d_beta = residual_project(data, ProcessingMode::Beta)?.data;
    let alpha_sample = double_bootstrap(&d_alpha, 0.0, &cfg.with_seed(mix_seed(cfg.seed, ALPHA_STREAM)))?;
    let beta_sample = double_bootstrap(&d_beta, 0.0, &cfg.with_seed(mix_seed(cfg.seed, BETA_STREAM)))?;
    if !(alpha_sample.conservative && beta_sample.conservative) {
        return Ok(LambdaSelection {
            lambda: NON_DEGENERATE_LAMBDA,
            path: SelectionPath::NonDegenerate,
            alpha_sample,
            beta_sample,
            grid: Vec::new(),
        });
    }
    let d_both = residual_project(data, ProcessingMode::Both)?.data;
    let joint_cfg = cfg.with_seed(mix_seed(cfg.seed, JOINT_STREAM));
    let mut points = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let s = double_bootstrap(&d_both, lambda, &joint_cfg)?;
        points.push(GridPoint {
            lambda,
            ks_distance: s.ks_distance,
            ks_critical: s.ks_critical,
            passes: s.uniform,
        });
        if s.uniform {
            return Ok(LambdaSelection {
                lambda,
                path: SelectionPath::GridSearch,
                alpha_sample,
                beta_sample,
                grid: points,
            });
        }
    }
    Err(MedError::GridExhausted)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pattern {
    #[serde(rename = "both-zero evidence")]
    BothZero,
    /// Exposure–mediator coefficient looks zero, mediator–outcome does not.
    #[serde(rename = "alpha-zero evidence")]
    AlphaZero,
    #[serde(rename = "beta-zero evidence")]
    BetaZero,
    #[serde(rename = "alternative evidence")]
    Alternative,
    #[serde(rename = "inconclusive")]
    Inconclusive,
}

impl Pattern {
    pub fn label(self) -> &'static str {
        match self {
            Pattern::BothZero => "both-zero evidence",
            Pattern::AlphaZero => "alpha-zero evidence",
            Pattern::BetaZero => "beta-zero evidence",
            Pattern::Alternative => "alternative evidence",
            Pattern::Inconclusive => "inconclusive",
        }
    }

    /// Classify from the observed and the two processed p-samples.
    pub fn classify(obs: &DbSample, alpha: &DbSample, beta: &DbSample) -> Self {
        let bent_up = |s: &DbSample| !s.uniform && !s.conservative;
        if obs.conservative && alpha.conservative && beta.conservative {
            Pattern::BothZero
        } else if obs.uniform && alpha.uniform && beta.conservative {
            Pattern::AlphaZero
        } else if obs.uniform && beta.uniform && alpha.conservative {
            Pattern::BetaZero
        } else if bent_up(obs) && alpha.uniform && beta.uniform {
            Pattern::Alternative
        } else {
            Pattern::Inconclusive
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confirmation {
    pub pattern: Pattern,
    pub observed: DbSample,
    pub alpha: DbSample,
    pub beta: DbSample,
}

/// Double-bootstrap p-samples on the observed and processed data with the given λ
/// (zero in the standard procedure) and the resulting pattern label.
pub fn confirmatory_analysis<T: Scalar>(data: &Dataset<T>, lambda: f64, cfg: &DbConfig) -> Result<Confirmation> {
    cfg.validate()?;
    let d_alpha = residual_project(data, ProcessingMode::Alpha)?.data;
    let d_beta = residual_project(data, ProcessingMode::Beta)?.data;
    let observed = double_bootstrap(data, lambda, &cfg.with_seed(mix_seed(cfg.seed, OBS_STREAM)))?;
    let alpha = double_bootstrap(&d_alpha, lambda, &cfg.with_seed(mix_seed(cfg.seed, ALPHA_STREAM)))?;
    let beta = double_bootstrap(&d_beta, lambda, &cfg.with_seed(mix_seed(cfg.seed, BETA_STREAM)))?;
    Ok(Confirmation {
        pattern: Pattern::classify(&observed, &alpha, &beta),
        observed,
        alpha,
        beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::{fit_ols, OlsModel};

    fn toy() -> Dataset<f64> {
        let s = vec![0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0];
        let x = vec![0.3, -1.2, 0.8, 0.1, -0.4, 1.5, 0.2, -0.7];
        let m: Vec<f64> = s.iter().zip(&x).enumerate().map(|(i, (a, b))| 0.5 * a + b + 0.1 * (i as f64).sin()).collect();
        let y: Vec<f64> = m.iter().zip(&s).enumerate().map(|(i, (a, b))| 0.7 * a + b + 0.2 * (i as f64).cos()).collect();
        Dataset::new(s, vec![m], y, vec![x]).unwrap()
    }

    #[test]
    fn processing_zeroes_coefficients() {
        let d = toy();
        let a = residual_project(&d, ProcessingMode::Alpha).unwrap().data;
        assert!(fit_ols(&a, OlsModel::Mediator(0)).unwrap().focal().abs() < 1e-10);
        let b = residual_project(&d, ProcessingMode::Beta).unwrap().data;
        assert!(fit_ols(&b, OlsModel::Outcome(0)).unwrap().focal().abs() < 1e-10);
        let ab = residual_project(&d, ProcessingMode::Both).unwrap().data;
        assert!(fit_ols(&ab, OlsModel::Mediator(0)).unwrap().focal().abs() < 1e-10);
        assert!(fit_ols(&ab, OlsModel::Outcome(0)).unwrap().focal().abs() < 1e-10);
    }

    #[test]
    fn exposure_projects_to_zero() {
        let s = [0.0f64, 1.0, 2.0];
        let ss = dot(&s, &s);
        assert!(project_out(&s, &s, ss).iter().all(|v: &f64| v.abs() < 1e-15));
    }

    #[test]
    fn zero_exposure_is_singular() {
        let d = Dataset::new(vec![0.0; 4], vec![vec![1.0, 2.0, 3.0, 5.0]], vec![1.0, 0.0, 2.0, 1.0], vec![]).unwrap();
        assert!(matches!(
            residual_project(&d, ProcessingMode::Alpha),
            Err(MedError::SingularDesign(_))
        ));
    }

    #[test]
    fn grid_validation() {
        assert!(check_grid(&[]).is_err());
        assert!(check_grid(&[1.0, 0.5]).is_err());
        assert!(check_grid(&DEFAULT_GRID).is_ok());
    }

    #[test]
    fn single_outer_replicate_matches_direct_test() {
        let d = toy();
        let cfg = DbConfig::new(1, 49, 11);
        let s = double_bootstrap(&d, 2.0, &cfg).unwrap();
        let mut rng = derive_substream(11, 0);
        let idx = draw_pair_indices(d.n(), &mut rng);
        let inner = AbConfig::with_bootstrap(49, mix_seed(11, 0));
        match adaptive_poc_test(&d.resample(&idx), &inner) {
            Ok(r) => assert_eq!(s.pvalues, vec![r.p_value]),
            Err(_) => assert!(s.missing == 1 || s.pvalues.len() == 1),
        }
    }
}
