//! Simulation designs and Monte-Carlo runners with CSV output.
//!
//! Normal variates come from the inverse normal CDF applied to open-interval uniforms
//! drawn from the ChaCha stream. Index and uniform draws are bit-identical on every
//! platform; normal values additionally depend on the platform's `libm`.

use std::io::Write;
use std::path::Path;

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::Dataset;
use crate::error::{MedError, Result};
use crate::glm::NieQuery;
use crate::inference::{AbConfig, Method};
use crate::pipeline::run_test;
use crate::resampling::{derive_substream, ks_uniform_distance, mix_seed, rejection_rate, with_workers, BootstrapConfig, Scheme};
use crate::scalar::logistic;

const DATA_STREAM: u64 = 0xDA7A;
const NULL_STREAM: u64 = 0x0417;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Linear,
    Multi,
    Glm1,
    Glm2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NullMode {
    Fixed,
    /// Each rep draws one of `(0, e)`, `(e, 0)`, `(0, 0)` with `mixture_probs`.
    Mixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerSetting {
    /// `α_S = β_M = signal`.
    Equal,
    /// `α_S β_M = product` with `α_S / β_M = signal`.
    Ratio,
}

/// A simulation experiment. Every field has a default; config files list only
/// what they change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSpec {
    pub scenario: Scenario,
    pub n: usize,
    /// Mediator count for the multi scenario.
    pub j: usize,
    pub alpha_s: f64,
    pub beta_m: f64,
    /// Case 1–7 of the multivariate null configurations; overrides the vectors below.
    pub multi_case: Option<u8>,
    pub alpha_vec: Vec<f64>,
    pub beta_vec: Vec<f64>,
    /// Intercepts default to 1 (linear, multi) or −1 (GLM).
    pub alpha_i: Option<f64>,
    pub beta_i: Option<f64>,
    pub alpha_x1: f64,
    pub alpha_x2: f64,
    pub beta_x1: f64,
    pub beta_x2: f64,
    pub tau_s: f64,
    pub sigma_m: f64,
    pub sigma_y: f64,
    /// Standard deviation of `X₁`; defaults to 1 (linear) or 0.5 (multi).
    pub x1_sd: Option<f64>,
    pub null_mode: NullMode,
    pub mixture_probs: [f64; 3],
    /// Non-zero coefficient of the single-zero mixture nulls.
    pub null_effect: f64,
    pub reps: usize,
    /// Empty means the scenario's default method list.
    pub methods: Vec<Method>,
    pub seed: u64,
    pub b: usize,
    pub scheme: Scheme,
    pub lambda: f64,
    pub lambda_alpha: Option<f64>,
    pub lambda_beta: Option<f64>,
    pub omega_grid: Vec<f64>,
    pub workers: Option<usize>,
    /// GLM exposure levels `(s, s*)`; the covariate row is the baseline.
    pub glm_s: f64,
    pub glm_s_star: f64,
    pub power_setting: PowerSetting,
    pub signals: Vec<f64>,
    pub product: f64,
    pub power_omega: f64,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            scenario: Scenario::Linear,
            n: 200,
            j: 1,
            alpha_s: 0.0,
            beta_m: 0.0,
            multi_case: None,
            alpha_vec: Vec::new(),
            beta_vec: Vec::new(),
            alpha_i: None,
            beta_i: None,
            alpha_x1: 1.0,
            alpha_x2: 1.0,
            beta_x1: 1.0,
            beta_x2: 1.0,
            tau_s: 1.0,
            sigma_m: 0.5,
            sigma_y: 0.5,
            x1_sd: None,
            null_mode: NullMode::Fixed,
            mixture_probs: [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            null_effect: 0.5,
            reps: 100,
            methods: Vec::new(),
            seed: 0,
            b: 500,
            scheme: Scheme::Pairs,
            lambda: 2.0,
            lambda_alpha: None,
            lambda_beta: None,
            omega_grid: vec![0.01, 0.05, 0.1],
            workers: None,
            glm_s: 0.0,
            glm_s_star: 1.0,
            power_setting: PowerSetting::Equal,
            signals: Vec::new(),
            product: 0.04,
            power_omega: 0.05,
        }
    }
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(MedError::InvalidArgument(m.into()));
        if self.reps == 0 {
            return bad("reps must be at least 1");
        }
        if self.n < 4 {
            return bad("n must be at least 4");
        }
        let total: f64 = self.mixture_probs.iter().sum();
        if self.mixture_probs.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return bad("mixture probabilities must be non-negative and sum to 1");
        }
        if self.scenario == Scenario::Multi && self.j == 0 {
            return bad("multi scenario needs j >= 1");
        }
        if self.sigma_m < 0.0 || self.sigma_y < 0.0 {
            return bad("noise scales must be non-negative");
        }
        for m in self.method_list() {
            let ok = match self.scenario {
                Scenario::Linear => Method::LINEAR.contains(&m),
                Scenario::Multi => matches!(m, Method::JointAb | Method::JointB),
                Scenario::Glm1 => matches!(m, Method::Glm1Ab | Method::Glm1B),
                Scenario::Glm2 => matches!(m, Method::Glm2Ab | Method::Glm2B),
            };
            if !ok {
                return Err(MedError::InvalidArgument(format!(
                    "method {m} does not apply to this scenario"
                )));
            }
        }
        self.ab_config(0).validate()?;
        if self.scenario == Scenario::Multi {
            self.coefficient_vectors(self.alpha_s, self.beta_m)?;
        }
        Ok(())
    }

    pub fn method_list(&self) -> Vec<Method> {
        if !self.methods.is_empty() {
            return self.methods.clone();
        }
        match self.scenario {
            Scenario::Linear => Method::LINEAR.to_vec(),
            Scenario::Multi => vec![Method::JointAb, Method::JointB],
            Scenario::Glm1 => vec![Method::Glm1Ab, Method::Glm1B],
            Scenario::Glm2 => vec![Method::Glm2Ab, Method::Glm2B],
        }
    }

    pub fn ab_config(&self, seed: u64) -> AbConfig {
        AbConfig {
            lambda: self.lambda,
            lambda_alpha: self.lambda_alpha,
            lambda_beta: self.lambda_beta,
            bootstrap: BootstrapConfig {
                b: self.b,
                seed,
                scheme: self.scheme,
                workers: None,
            },
            omega_grid: self.omega_grid.clone(),
            ..AbConfig::default()
        }
    }

    fn is_glm(&self) -> bool {
        matches!(self.scenario, Scenario::Glm1 | Scenario::Glm2)
    }

    fn intercepts(&self) -> (f64, f64) {
        let d = if self.is_glm() { -1.0 } else { 1.0 };
        (self.alpha_i.unwrap_or(d), self.beta_i.unwrap_or(d))
    }

    fn x1_scale(&self) -> f64 {
        self.x1_sd
            .unwrap_or(if self.scenario == Scenario::Multi { 0.5 } else { 1.0 })
    }

    /// Coefficient vectors for the multi scenario; `(a, b)` fill any unset entries.
    pub fn coefficient_vectors(&self, a: f64, b: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let j = self.j;
        if let Some(case) = self.multi_case {
            return multi_case_vectors(case, j);
        }
        let fill = |given: &[f64], v: f64| -> Result<Vec<f64>> {
            match given.len() {
                0 => Ok(vec![v; j]),
                k if k == j => Ok(given.to_vec()),
                k => Err(MedError::InvalidArgument(format!(
                    "coefficient vector has length {k}, expected {j}"
                ))),
            }
        };
        Ok((fill(&self.alpha_vec, a)?, fill(&self.beta_vec, b)?))
    }

    fn nie_query(&self) -> NieQuery {
        NieQuery::at_baseline(self.glm_s, self.glm_s_star, 2)
    }
}

/// `(α, β)` for cases 1–7 of the multivariate null configurations.
pub fn multi_case_vectors(case: u8, j: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let half = j / 2;
    if (4..=7).contains(&case) && j % 2 != 0 {
        return Err(MedError::InvalidArgument(format!("case {case} needs an even mediator count")));
    }
    let split = |a: f64, b: f64| -> Vec<f64> { (0..j).map(|k| if k < half { a } else { b }).collect() };
    let v = match case {
        1 => (vec![0.0; j], vec![0.0; j]),
        2 => (vec![1.0; j], vec![0.0; j]),
        3 => (vec![0.0; j], vec![1.0; j]),
        4 => (split(1.0, 0.0), split(0.0, 1.0)),
        5 => (split(0.0, 1.0), split(1.0, 0.0)),
        6 => (vec![1.0; j], split(1.0, -1.0)),
        7 => (split(1.0, -1.0), vec![1.0; j]),
        _ => return Err(MedError::InvalidArgument(format!("unknown multivariate case {case}"))),
    };
    Ok(v)
}

/// Uniform on the open interval (0, 1) with 53 random bits.
fn open_uniform(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    Normal::standard().inverse_cdf(open_uniform(rng))
}

fn bernoulli(rng: &mut ChaCha8Rng, p: f64) -> f64 {
    if open_uniform(rng) < p {
        1.0
    } else {
        0.0
    }
}

fn normals(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> Vec<f64> {
    (0..n).map(|_| sd * std_normal(rng)).collect()
}

fn bernoullis(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<f64> {
    (0..n).map(|_| bernoulli(rng, p)).collect()
}

/// Single-mediator linear design with the given path coefficients.
pub fn gen_linear_with(spec: &SimSpec, alpha_s: f64, beta_m: f64, rng: &mut ChaCha8Rng) -> Result<Dataset<f64>> {
    let n = spec.n;
    let (ai, bi) = spec.intercepts();
    let s = bernoullis(rng, n, 0.5);
    let x1 = normals(rng, n, spec.x1_scale());
    let x2 = bernoullis(rng, n, 0.5);
    let em = normals(rng, n, spec.sigma_m);
    let ey = normals(rng, n, spec.sigma_y);
    let m: Vec<f64> = (0..n)
        .map(|i| alpha_s * s[i] + ai + spec.alpha_x1 * x1[i] + spec.alpha_x2 * x2[i] + em[i])
        .collect();
    let y: Vec<f64> = (0..n)
        .map(|i| beta_m * m[i] + bi + spec.beta_x1 * x1[i] + spec.beta_x2 * x2[i] + spec.tau_s * s[i] + ey[i])
        .collect();
    Dataset::new(s, vec![m], y, vec![x1, x2])
}

pub fn gen_linear_sem(spec: &SimSpec, rng: &mut ChaCha8Rng) -> Result<Dataset<f64>> {
    gen_linear_with(spec, spec.alpha_s, spec.beta_m, rng)
}

/// `J` mediator equations sharing `(S, X)` and one outcome equation.
pub fn gen_multi_sem(spec: &SimSpec, rng: &mut ChaCha8Rng) -> Result<Dataset<f64>> {
    let (alpha, beta) = spec.coefficient_vectors(spec.alpha_s, spec.beta_m)?;
    let n = spec.n;
    let (ai, bi) = spec.intercepts();
    let s = bernoullis(rng, n, 0.5);
    let x1 = normals(rng, n, spec.x1_scale());
    let x2 = bernoullis(rng, n, 0.5);
    let meds: Vec<Vec<f64>> = alpha
        .iter()
        .map(|&a| {
            let e = normals(rng, n, spec.sigma_m);
            (0..n)
                .map(|i| a * s[i] + ai + spec.alpha_x1 * x1[i] + spec.alpha_x2 * x2[i] + e[i])
                .collect()
        })
        .collect();
    let ey = normals(rng, n, spec.sigma_y);
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let med: f64 = meds.iter().zip(&beta).map(|(m, b)| b * m[i]).sum();
            med + bi + spec.beta_x1 * x1[i] + spec.beta_x2 * x2[i] + spec.tau_s * s[i] + ey[i]
        })
        .collect();
    Dataset::new(s, meds, y, vec![x1, x2])
}

/// Binary mediator with a logistic mean; binary (`glm1`) or linear (`glm2`) outcome.
/// The single covariate is Bernoulli(0.5) and uses the `*_x1` coefficients.
pub fn gen_glm_with(spec: &SimSpec, alpha_s: f64, beta_m: f64, rng: &mut ChaCha8Rng) -> Result<Dataset<f64>> {
    let n = spec.n;
    let (ai, bi) = spec.intercepts();
    let s = bernoullis(rng, n, 0.5);
    let x = bernoullis(rng, n, 0.5);
    let m: Vec<f64> = (0..n)
        .map(|i| bernoulli(rng, logistic(alpha_s * s[i] + ai + spec.alpha_x1 * x[i])))
        .collect();
    let eta = |i: usize| beta_m * m[i] + bi + spec.beta_x1 * x[i] + spec.tau_s * s[i];
    let y: Vec<f64> = match spec.scenario {
        Scenario::Glm1 => (0..n).map(|i| bernoulli(rng, logistic(eta(i)))).collect(),
        Scenario::Glm2 => {
            let e = normals(rng, n, spec.sigma_y);
            (0..n).map(|i| eta(i) + e[i]).collect()
        }
        _ => return Err(MedError::InvalidArgument("GLM generator needs scenario glm1 or glm2".into())),
    };
    Dataset::new(s, vec![m], y, vec![x])
}

pub fn gen_glm_dataset(spec: &SimSpec, rng: &mut ChaCha8Rng) -> Result<Dataset<f64>> {
    gen_glm_with(spec, spec.alpha_s, spec.beta_m, rng)
}

fn generate(spec: &SimSpec, alpha_s: f64, beta_m: f64, rng: &mut ChaCha8Rng) -> Result<Dataset<f64>> {
    match spec.scenario {
        Scenario::Linear => gen_linear_with(spec, alpha_s, beta_m, rng),
        Scenario::Multi => {
            let inner = SimSpec {
                alpha_s,
                beta_m,
                ..spec.clone()
            };
            gen_multi_sem(&inner, rng)
        }
        Scenario::Glm1 | Scenario::Glm2 => gen_glm_with(spec, alpha_s, beta_m, rng),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub rep: usize,
    pub method: Method,
    pub p_value: f64,
    pub estimate: f64,
    /// Index 1–3 of the null drawn in mixture mode.
    pub null_case: Option<u8>,
    pub signal: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimFailure {
    pub rep: usize,
    pub method: Method,
    pub signal: Option<f64>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub omega: f64,
    pub rejection_rate: f64,
    /// `None` when every rep failed for this method.
    pub ks_distance: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub signal: f64,
    pub method: Method,
    pub power: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub spec: SimSpec,
    pub records: Vec<SimRecord>,
    pub failures: Vec<SimFailure>,
    pub summary: Vec<SummaryRow>,
    pub power: Vec<PowerRow>,
}

impl SimulationReport {
    pub fn pvalues(&self, method: Method) -> Vec<f64> {
        self.records.iter().filter(|r| r.method == method).map(|r| r.p_value).collect()
    }

    pub fn rejection_rate(&self, method: Method, omega: f64) -> f64 {
        rejection_rate(&self.pvalues(method), omega)
    }
}

/// Which null a mixture-mode rep uses, from its own substream.
fn draw_null(spec: &SimSpec, rep: usize) -> (u8, f64, f64) {
    let mut rng = derive_substream(mix_seed(spec.seed, NULL_STREAM), rep as u64);
    let u = open_uniform(&mut rng);
    let [p1, p2, _] = spec.mixture_probs;
    let e = spec.null_effect;
    if u < p1 {
        (1, 0.0, e)
    } else if u < p1 + p2 {
        (2, e, 0.0)
    } else {
        (3, 0.0, 0.0)
    }
}

fn method_seed(master: u64, rep: usize, method: Method) -> u64 {
    let k = Method::ALL.iter().position(|&m| m == method).unwrap_or(0) as u64;
    mix_seed(mix_seed(master, rep as u64), k)
}

type RepOutput = (Vec<SimRecord>, Vec<SimFailure>);

/// Generate the rep's dataset and run every method on it in order.
fn run_rep(spec: &SimSpec, rep: usize, alpha_s: f64, beta_m: f64, null_case: Option<u8>, signal: Option<f64>) -> Result<RepOutput> {
    let methods = spec.method_list();
    let mut rng = derive_substream(mix_seed(spec.seed, DATA_STREAM), rep as u64);
    let data = match generate(spec, alpha_s, beta_m, &mut rng) {
        Ok(d) => d,
        Err(e) if e.is_numerical() || matches!(e, MedError::InvalidData(_)) => {
            let failures = methods
                .iter()
                .map(|&method| SimFailure {
                    rep,
                    method,
                    signal,
                    error: e.to_string(),
                })
                .collect();
            return Ok((Vec::new(), failures));
        }
        Err(e) => return Err(e),
    };
    let query = spec.nie_query();
    let mut records = Vec::with_capacity(methods.len());
    let mut failures = Vec::new();
    for &method in &methods {
        let cfg = spec.ab_config(method_seed(spec.seed, rep, method));
        match run_test(&data, method, &cfg, Some(&query)) {
            Ok(r) => records.push(SimRecord {
                rep,
                method,
                p_value: r.p_value,
                estimate: r.estimate,
                null_case,
                signal,
            }),
            Err(e) if e.is_numerical() || matches!(e, MedError::DegenerateResampling { .. }) => {
                failures.push(SimFailure {
                    rep,
                    method,
                    signal,
                    error: e.to_string(),
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok((records, failures))
}

fn run_reps<F>(spec: &SimSpec, f: F) -> Result<RepOutput>
where
    F: Fn(usize) -> Result<RepOutput> + Sync,
{
    let outs = with_workers(spec.workers, || {
        (0..spec.reps).into_par_iter().map(&f).collect::<Result<Vec<RepOutput>>>()
    })?;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (r, f) in outs {
        records.extend(r);
        failures.extend(f);
    }
    Ok((records, failures))
}

fn summarize(spec: &SimSpec, records: &[SimRecord]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for method in spec.method_list() {
        let ps: Vec<f64> = records.iter().filter(|r| r.method == method).map(|r| r.p_value).collect();
        let ks = (!ps.is_empty()).then(|| ks_uniform_distance(&ps));
        for &omega in &spec.omega_grid {
            rows.push(SummaryRow {
                method,
                omega,
                rejection_rate: rejection_rate(&ps, omega),
                ks_distance: ks,
                count: ps.len(),
            });
        }
    }
    rows
}

/// Null calibration study: one dataset per rep shared by every method.
pub fn run_null_study(spec: &SimSpec) -> Result<SimulationReport> {
    spec.validate()?;
    let (records, failures) = run_reps(spec, |rep| match spec.null_mode {
        NullMode::Fixed => run_rep(spec, rep, spec.alpha_s, spec.beta_m, None, None),
        NullMode::Mixture => {
            let (case, a, b) = draw_null(spec, rep);
            run_rep(spec, rep, a, b, Some(case), None)
        }
    })?;
    let summary = summarize(spec, &records);
    Ok(SimulationReport {
        spec: spec.clone(),
        records,
        failures,
        summary,
        power: Vec::new(),
    })
}

/// Coefficients `(α_S, β_M)` at one point of the power curve.
pub fn power_coefficients(spec: &SimSpec, signal: f64) -> Result<(f64, f64)> {
    match spec.power_setting {
        PowerSetting::Equal => Ok((signal, signal)),
        PowerSetting::Ratio => {
            if !(signal > 0.0) || !(spec.product >= 0.0) {
                return Err(MedError::InvalidArgument("ratio setting needs positive ratios and product".into()));
            }
            Ok(((spec.product * signal).sqrt(), (spec.product / signal).sqrt()))
        }
    }
}

/// Rejection rate at `power_omega` against each signal value. Rep `r` reuses the same
/// random stream at every signal.
pub fn run_power_study(spec: &SimSpec) -> Result<SimulationReport> {
    spec.validate()?;
    if spec.signals.is_empty() {
        return Err(MedError::InvalidArgument("power study needs at least one signal value".into()));
    }
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut power = Vec::new();
    for &signal in &spec.signals {
        let (a, b) = power_coefficients(spec, signal)?;
        let (rec, fail) = run_reps(spec, |rep| run_rep(spec, rep, a, b, None, Some(signal)))?;
        for method in spec.method_list() {
            let ps: Vec<f64> = rec.iter().filter(|r| r.method == method).map(|r| r.p_value).collect();
            power.push(PowerRow {
                signal,
                method,
                power: rejection_rate(&ps, spec.power_omega),
                count: ps.len(),
            });
        }
        records.extend(rec);
        failures.extend(fail);
    }
    Ok(SimulationReport {
        spec: spec.clone(),
        records,
        failures,
        summary: Vec::new(),
        power,
    })
}

/// `rep,method,p`, plus a `signal` column for power studies.
pub fn write_pvalues_long<W: Write>(report: &SimulationReport, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let with_signal = !report.power.is_empty();
    if with_signal {
        wtr.write_record(["rep", "method", "p", "signal"])?;
    } else {
        wtr.write_record(["rep", "method", "p"])?;
    }
    for r in &report.records {
        let mut row = vec![r.rep.to_string(), r.method.tag().to_string(), r.p_value.to_string()];
        if with_signal {
            row.push(r.signal.map(|s| s.to_string()).unwrap_or_default());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(report: &SimulationReport, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["method", "omega", "rejection_rate", "ks_distance"])?;
    for r in &report.summary {
        wtr.write_record([
            r.method.tag().to_string(),
            r.omega.to_string(),
            r.rejection_rate.to_string(),
            r.ks_distance.map(|d| d.to_string()).unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_power<W: Write>(report: &SimulationReport, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["signal", "method", "power"])?;
    for r in &report.power {
        wtr.write_record([r.signal.to_string(), r.method.tag().to_string(), r.power.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Write `pvalues_long.csv` and `summary.csv` or `power.csv` into `dir`.
pub fn write_outputs(report: &SimulationReport, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let long = dir.join("pvalues_long.csv");
    write_pvalues_long(report, std::fs::File::create(&long)?)?;
    written.push(long);
    if !report.summary.is_empty() {
        let p = dir.join("summary.csv");
        write_summary(report, std::fs::File::create(&p)?)?;
        written.push(p);
    }
    if !report.power.is_empty() {
        let p = dir.join("power.csv");
        write_power(report, std::fs::File::create(&p)?)?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::{fit_ols, OlsModel};

    #[test]
    fn noiseless_design_is_affine() {
        let spec = SimSpec {
            n: 30,
            sigma_m: 0.0,
            sigma_y: 0.0,
            ..SimSpec::default()
        };
        let d = gen_linear_sem(&spec, &mut derive_substream(1, 0)).unwrap();
        for i in 0..d.n() {
            let x1 = d.covariates()[1][i];
            let x2 = d.covariates()[2][i];
            assert!((d.mediator(0)[i] - (1.0 + x1 + x2)).abs() < 1e-12);
            assert!((d.outcome()[i] - (1.0 + x1 + x2 + d.exposure()[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn generators_replay() {
        let spec = SimSpec::default();
        let a = gen_linear_sem(&spec, &mut derive_substream(5, 3)).unwrap();
        let b = gen_linear_sem(&spec, &mut derive_substream(5, 3)).unwrap();
        assert_eq!(a, b);
        let g = SimSpec {
            scenario: Scenario::Glm1,
            ..SimSpec::default()
        };
        assert_eq!(
            gen_glm_dataset(&g, &mut derive_substream(5, 3)).unwrap(),
            gen_glm_dataset(&g, &mut derive_substream(5, 3)).unwrap()
        );
    }

    #[test]
    fn case_six_products_cancel() {
        let (a, b) = multi_case_vectors(6, 6).unwrap();
        let s: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert_eq!(s, 0.0);
        assert!(multi_case_vectors(4, 5).is_err());
        let (a, b) = multi_case_vectors(1, 5).unwrap();
        assert!(a.iter().chain(&b).all(|v| *v == 0.0));
    }

    #[test]
    fn large_sample_recovers_alpha() {
        let spec = SimSpec {
            n: 100_000,
            alpha_s: 0.5,
            ..SimSpec::default()
        };
        let d = gen_linear_sem(&spec, &mut derive_substream(9, 0)).unwrap();
        let a = fit_ols(&d, OlsModel::Mediator(0)).unwrap().focal();
        assert!((a - 0.5).abs() < 0.02, "{a}");
    }

    #[test]
    fn mixture_probabilities_validated() {
        let spec = SimSpec {
            mixture_probs: [0.5, 0.5, 0.5],
            ..SimSpec::default()
        };
        assert!(spec.validate().is_err());
        assert!(SimSpec { reps: 0, ..SimSpec::default() }.validate().is_err());
    }

    #[test]
    fn mixture_draws_follow_probabilities() {
        let spec = SimSpec {
            null_mode: NullMode::Mixture,
            mixture_probs: [0.2, 0.2, 0.6],
            ..SimSpec::default()
        };
        let counts = (0..5000).fold([0usize; 3], |mut c, r| {
            c[draw_null(&spec, r).0 as usize - 1] += 1;
            c
        });
        assert!((counts[2] as f64 / 5000.0 - 0.6).abs() < 0.03, "{counts:?}");
    }

    #[test]
    fn one_rep_gives_one_record_per_method() {
        let spec = SimSpec {
            reps: 1,
            b: 19,
            ..SimSpec::default()
        };
        let r = run_null_study(&spec).unwrap();
        assert_eq!(r.records.len() + r.failures.len(), spec.method_list().len());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let ok: SimSpec = serde_json::from_str(r#"{"n": 50, "alpha_s": 0.5}"#).unwrap();
        assert_eq!(ok.n, 50);
        assert!(serde_json::from_str::<SimSpec>(r#"{"n": 50, "alhpa_s": 0.5}"#).is_err());
    }
}
