use medboot::data::Dataset;
use medboot::inference::AbConfig;
use medboot::poc::adaptive_poc_test;
use medboot::regression::{fit_ols, OlsModel};
use medboot::resampling::{derive_substream, mix_seed};
use medboot::sim::{gen_linear_sem, SimSpec};
use medboot::tuning::{
    confirmatory_analysis, double_bootstrap, residual_project, select_lambda, DbConfig, Pattern, ProcessingMode,
    SelectionPath, DEFAULT_GRID,
};
use medboot::MedError;
use rand::Rng;

fn data(alpha: f64, beta: f64, seed: u64) -> Dataset<f64> {
    let spec = SimSpec {
        alpha_s: alpha,
        beta_m: beta,
        ..SimSpec::default()
    };
    gen_linear_sem(&spec, &mut derive_substream(seed, 0)).unwrap()
}

#[test]
fn processing_zeroes_the_targeted_coefficients() {
    let d = data(0.7, 0.6, 1);
    let alpha = residual_project(&d, ProcessingMode::Alpha).unwrap().data;
    assert!(fit_ols(&alpha, OlsModel::Mediator(0)).unwrap().focal().abs() < 1e-10);
    let beta = residual_project(&d, ProcessingMode::Beta).unwrap().data;
    assert!(fit_ols(&beta, OlsModel::Outcome(0)).unwrap().focal().abs() < 1e-10);
    // each transform touches only its own equation
    let a0 = fit_ols(&d, OlsModel::Mediator(0)).unwrap().focal();
    let b0 = fit_ols(&d, OlsModel::Outcome(0)).unwrap().focal();
    assert_eq!(fit_ols(&beta, OlsModel::Mediator(0)).unwrap().focal(), a0);
    assert_eq!(fit_ols(&alpha, OlsModel::Outcome(0)).unwrap().focal(), b0);
    assert!(a0 > 0.3 && b0 > 0.3);
}

#[test]
fn zero_exposure_is_singular() {
    let d = Dataset::<f64>::new(vec![0.0; 6], vec![vec![1.0, 2.0, 0.5, 0.1, 0.3, 0.9]], vec![0.2; 6], vec![]).unwrap();
    assert!(matches!(residual_project(&d, ProcessingMode::Alpha), Err(MedError::SingularDesign(_))));
}

#[test]
fn single_outer_replicate_is_one_adaptive_test() {
    let d = data(0.0, 0.0, 2);
    let cfg = DbConfig::new(1, 99, 17);
    let s = double_bootstrap(&d, 2.0, &cfg).unwrap();
    assert_eq!(s.pvalues.len(), 1);

    let mut rng = derive_substream(17, 0);
    let idx: Vec<usize> = (0..d.n()).map(|_| rng.gen_range(0..d.n() as u32) as usize).collect();
    let inner = AbConfig::with_bootstrap(99, mix_seed(17, 0)).with_lambda(2.0);
    let direct = adaptive_poc_test(&d.resample(&idx), &inner).unwrap();
    assert_eq!(s.pvalues[0], direct.p_value);
}

#[test]
fn double_bootstrap_accounts_for_every_replicate() {
    let d = data(0.3, 0.0, 3);
    let s = double_bootstrap(&d, 2.0, &DbConfig::new(30, 49, 4)).unwrap();
    assert_eq!(s.pvalues.len() + s.missing, 30);
    assert!(s.pvalues.iter().all(|&p| p > 0.0 && p <= 1.0));
}

// Pattern labels are Monte-Carlo outcomes; these fixtures were checked against
// ten-dataset runs of each setting.
fn full(seed: u64) -> DbConfig {
    DbConfig::new(500, 199, 1000 + seed)
}

#[test]
fn selection_paths() {
    let null = select_lambda(&data(0.0, 0.0, 40), &DEFAULT_GRID, &full(0)).unwrap();
    assert_eq!(null.path, SelectionPath::GridSearch);
    assert!(null.alpha_sample.conservative && null.beta_sample.conservative);
    assert_eq!(null.grid.last().unwrap().lambda, null.lambda);
    assert!(null.grid.iter().rev().skip(1).all(|g| !g.passes));

    let single = select_lambda(&data(0.5, 0.0, 40), &DEFAULT_GRID, &full(0)).unwrap();
    assert_eq!(single.path, SelectionPath::NonDegenerate);
    assert_eq!(single.lambda, 2.0);
    assert!(single.grid.is_empty());
}

#[test]
fn selection_is_deterministic_and_checks_grid() {
    let cfg = DbConfig::new(20, 49, 3);
    let d = data(0.0, 0.0, 5);
    let a = select_lambda(&d, &[0.0, 2.0, 4.0, 6.0], &cfg);
    let b = select_lambda(&d, &[0.0, 2.0, 4.0, 6.0], &cfg);
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
    assert!(matches!(select_lambda(&d, &[], &cfg), Err(MedError::InvalidArgument(_))));
    assert!(matches!(select_lambda(&d, &[2.0, 1.0], &cfg), Err(MedError::InvalidArgument(_))));
    assert!(matches!(select_lambda(&d, &[-1.0], &cfg), Err(MedError::InvalidArgument(_))));
}

#[test]
fn confirmation_patterns() {
    let both = residual_project(&data(0.4, 0.4, 7), ProcessingMode::Both).unwrap().data;
    let c = confirmatory_analysis(&both, 0.0, &DbConfig::new(200, 199, 31)).unwrap();
    assert_eq!(c.pattern, Pattern::BothZero);
    assert_eq!(c.pattern.label(), "both-zero evidence");

    let alt = confirmatory_analysis(&data(1.0, 1.0, 40), 0.0, &full(0)).unwrap();
    assert_eq!(alt.pattern, Pattern::Alternative);

    let a0 = confirmatory_analysis(&data(0.0, 1.0, 41), 0.0, &full(1)).unwrap();
    assert_eq!(a0.pattern, Pattern::AlphaZero);
}
