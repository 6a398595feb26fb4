//! CSV ingestion, test dispatch, Benjamini–Hochberg adjustment, the two-step
//! screening pipeline and the versioned JSON report.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnLabels, Dataset};
use crate::error::{MedError, Result};
use crate::glm::{adaptive_glm_test, GlmScenario, NieQuery};
use crate::inference::{AbConfig, Method, TestResult};
use crate::js::{adaptive_js_test, maxp_test, JsComponents};
use crate::multi::adaptive_joint_test;
use crate::poc::{adaptive_poc_test, poc_components, sobel_test};
use crate::resampling::{derive_substream, mix_seed};
use crate::scalar::Scalar;
use crate::sim::SimulationReport;
use crate::tuning::{Confirmation, DbConfig, LambdaSelection};

pub const SCHEMA: &str = "medboot/1";

const SPLIT_STREAM: u64 = 0x5B11;
const SCREEN_STREAM: u64 = 1;
const FOLLOW_UP_STREAM: u64 = 2;

/// Run `method` on `data`. GLM methods evaluate the NIE at `query`, defaulting to
/// `s = 1, s* = 0` on the baseline covariate row.
pub fn run_test<T: Scalar>(data: &Dataset<T>, method: Method, config: &AbConfig, query: Option<&NieQuery>) -> Result<TestResult> {
    let glm = |scenario| {
        let q = query
            .cloned()
            .unwrap_or_else(|| NieQuery::at_baseline(1.0, 0.0, data.covariates().len()));
        adaptive_glm_test(data, scenario, &q, &classical_if(method, config))
    };
    match method {
        Method::PocAb | Method::PocB => adaptive_poc_test(data, &classical_if(method, config)),
        Method::PocSobel => sobel_test(&poc_components(data)?, &config.omega_grid),
        Method::JsAb | Method::JsB => adaptive_js_test(data, &classical_if(method, config)),
        Method::JsMaxp => Ok(maxp_test(&JsComponents::from_poc(&poc_components(data)?), &config.omega_grid)),
        Method::JointAb | Method::JointB => adaptive_joint_test(data, &classical_if(method, config)),
        Method::Glm1Ab | Method::Glm1B => glm(GlmScenario::BinaryOutcome),
        Method::Glm2Ab | Method::Glm2B => glm(GlmScenario::LinearOutcome),
    }
}

fn classical_if(method: Method, config: &AbConfig) -> AbConfig {
    if method.forces_zero_lambda() {
        config.classical()
    } else {
        config.clone()
    }
}

/// Which CSV columns play which role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnRoleMap {
    pub exposure: String,
    pub mediators: Vec<String>,
    pub outcome: String,
    #[serde(default)]
    pub covariates: Vec<String>,
}

impl ColumnRoleMap {
    fn names(&self) -> Vec<&str> {
        std::iter::once(self.exposure.as_str())
            .chain(self.mediators.iter().map(String::as_str))
            .chain(std::iter::once(self.outcome.as_str()))
            .chain(self.covariates.iter().map(String::as_str))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mediators.is_empty() {
            return Err(MedError::InvalidArgument("at least one mediator column is required".into()));
        }
        let names = self.names();
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(*n) {
                return Err(MedError::InvalidArgument(format!("column `{n}` is assigned two roles")));
            }
        }
        Ok(())
    }
}

/// Read a comma-separated file with a header row and build a dataset with an
/// injected intercept. Row numbers in errors count data rows from 1.
pub fn parse_dataset_csv(path: &Path, roles: &ColumnRoleMap) -> Result<Dataset<f64>> {
    roles.validate()?;
    let text = std::fs::read_to_string(path)?;
    parse_dataset_str(&text, roles)
}

pub fn parse_dataset_str(text: &str, roles: &ColumnRoleMap) -> Result<Dataset<f64>> {
    roles.validate()?;
    if text.trim().is_empty() {
        return Err(MedError::EmptyFile);
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    let position = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| MedError::MissingColumn(name.to_string()))
    };
    let names = roles.names();
    let idx: Vec<usize> = names.iter().map(|n| position(n)).collect::<Result<_>>()?;
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for (k, &c) in idx.iter().enumerate() {
            let raw = rec.get(c).unwrap_or("");
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => cols[k].push(v),
                _ => {
                    return Err(MedError::NonNumericCell {
                        row: r + 1,
                        column: names[k].to_string(),
                        value: raw.to_string(),
                    })
                }
            }
        }
    }
    if cols[0].is_empty() {
        return Err(MedError::EmptyFile);
    }
    let j = roles.mediators.len();
    let mut it = cols.into_iter();
    let exposure = it.next().expect("exposure column");
    let mediators: Vec<Vec<f64>> = it.by_ref().take(j).collect();
    let outcome = it.next().expect("outcome column");
    let covariates: Vec<Vec<f64>> = it.collect();
    let mut cov_labels = vec!["(intercept)".to_string()];
    cov_labels.extend(roles.covariates.iter().cloned());
    let labels = ColumnLabels {
        exposure: roles.exposure.clone(),
        mediators: roles.mediators.clone(),
        outcome: roles.outcome.clone(),
        covariates: cov_labels,
        outcome_covariates: Vec::new(),
    };
    Dataset::new(exposure, mediators, outcome, covariates)?.with_labels(labels)
}

/// Step-up adjustment, in input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BhResult {
    pub q: f64,
    pub adjusted: Vec<f64>,
    pub rejected: Vec<bool>,
}

/// Benjamini–Hochberg at level `q`: reject every p at or below the largest
/// `p₍ₖ₎ ≤ k·q/m`.
pub fn bh_adjust(pvalues: &[f64], q: f64) -> BhResult {
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]).then(a.cmp(&b)));
    let mf = m as f64;
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        running = running.min(mf * pvalues[i] / (rank + 1) as f64).min(1.0).max(pvalues[i]);
        adjusted[i] = running;
    }
    let cutoff = order
        .iter()
        .enumerate()
        .filter(|(rank, &i)| pvalues[i] <= (rank + 1) as f64 * q / mf)
        .map(|(_, &i)| pvalues[i])
        .last();
    let rejected = pvalues.iter().map(|&p| cutoff.is_some_and(|c| p <= c)).collect();
    BhResult { q, adjusted, rejected }
}

/// Row split used by the screening pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub fraction: f64,
    pub seed: u64,
    pub screen_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

fn split_rows(n: usize, fraction: f64, seed: u64) -> Result<Split> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(MedError::InvalidArgument("split fraction must lie in (0, 1)".into()));
    }
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut derive_substream(mix_seed(seed, SPLIT_STREAM), 0));
    let k = ((n as f64) * fraction).round() as usize;
    if k == 0 || k == n {
        return Err(MedError::InvalidArgument("split leaves one part empty".into()));
    }
    let mut screen_rows = rows[..k].to_vec();
    let mut test_rows = rows[k..].to_vec();
    screen_rows.sort_unstable();
    test_rows.sort_unstable();
    Ok(Split {
        fraction,
        seed,
        screen_rows,
        test_rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalP {
    pub mediator: String,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenSummary {
    pub screen_fraction: f64,
    pub split: Option<Split>,
    pub marginal: Vec<MarginalP>,
    pub cutoff: f64,
    /// All mediators at or below the cutoff, ties included.
    pub retained: Vec<String>,
}

/// Versioned output of every command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub version: String,
    pub command: String,
    pub config: Option<AbConfig>,
    pub db_config: Option<DbConfig>,
    pub results: Vec<TestResult>,
    pub bh: Option<BhResult>,
    pub screen: Option<ScreenSummary>,
    pub tuning: Option<LambdaSelection>,
    pub confirmation: Option<Confirmation>,
    pub simulation: Option<SimulationReport>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Self {
            schema: SCHEMA.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: None,
            db_config: None,
            results: Vec::new(),
            bh: None,
            screen: None,
            tuning: None,
            confirmation: None,
            simulation: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| MedError::InvalidData(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Report = serde_json::from_str(text).map_err(|e| MedError::InvalidData(e.to_string()))?;
        if r.schema != SCHEMA {
            return Err(MedError::InvalidData(format!("unsupported report schema `{}`", r.schema)));
        }
        Ok(r)
    }
}

/// Settings of the two-step pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScreenConfig {
    pub method: Method,
    /// Fraction of mediators kept after the marginal step.
    pub screen_fraction: f64,
    pub fdr_q: f64,
    /// Fraction of rows used for screening; `None` screens and tests on all rows.
    pub split_fraction: Option<f64>,
}

impl Default for ScreenConfig {
    fn default() -> Self {
        Self {
            method: Method::PocAb,
            screen_fraction: 0.1,
            fdr_q: 0.1,
            split_fraction: None,
        }
    }
}

/// Marginal single-mediator tests, then a test of each retained mediator adjusting
/// for the other retained mediators in the outcome model, then BH.
pub fn screen_then_joint<T: Scalar>(data: &Dataset<T>, screen: &ScreenConfig, config: &AbConfig) -> Result<Report> {
    config.validate()?;
    if !Method::LINEAR.contains(&screen.method) {
        return Err(MedError::InvalidArgument(format!(
            "screening needs a single-mediator linear method, got {}",
            screen.method
        )));
    }
    if !(screen.screen_fraction > 0.0 && screen.screen_fraction <= 1.0) {
        return Err(MedError::InvalidArgument("screen_fraction must lie in (0, 1]".into()));
    }
    if !(0.0..=1.0).contains(&screen.fdr_q) {
        return Err(MedError::InvalidArgument("fdr_q must lie in [0, 1]".into()));
    }
    let seed = config.bootstrap.seed;
    let split = screen
        .split_fraction
        .map(|f| split_rows(data.n(), f, seed))
        .transpose()?;
    let (first, second) = match &split {
        Some(s) => (data.resample(&s.screen_rows), data.resample(&s.test_rows)),
        None => (data.clone(), data.clone()),
    };
    let labels = data.labels().mediators.clone();
    let j = data.n_mediators();

    let mut marginal = Vec::with_capacity(j);
    for (k, label) in labels.iter().enumerate() {
        let mut cfg = config.clone();
        cfg.bootstrap.seed = mix_seed(mix_seed(seed, SCREEN_STREAM), k as u64);
        let r = run_test(&first.single_mediator(k)?, screen.method, &cfg, None)?;
        marginal.push(MarginalP {
            mediator: label.clone(),
            p_value: r.p_value,
        });
    }
    let keep = ((screen.screen_fraction * j as f64).ceil() as usize).clamp(1, j);
    let mut sorted: Vec<f64> = marginal.iter().map(|m| m.p_value).collect();
    sorted.sort_by(f64::total_cmp);
    let cutoff = sorted[keep - 1];
    let retained_idx: Vec<usize> = (0..j).filter(|&k| marginal[k].p_value <= cutoff).collect();
    if retained_idx.is_empty() {
        return Err(MedError::InvalidData("screening retained no mediators".into()));
    }

    let follow = second.select_mediators(&retained_idx)?;
    let mut results = Vec::with_capacity(retained_idx.len());
    for (pos, &k) in retained_idx.iter().enumerate() {
        let mut cfg = config.clone();
        cfg.bootstrap.seed = mix_seed(mix_seed(seed, FOLLOW_UP_STREAM), k as u64);
        let mut r = run_test(&follow.target_mediator(pos)?, screen.method, &cfg, None)?;
        r.target = Some(labels[k].clone());
        results.push(r);
    }
    let ps: Vec<f64> = results.iter().map(|r| r.p_value).collect();
    let mut report = Report::new("screen");
    report.config = Some(config.clone());
    report.bh = Some(bh_adjust(&ps, screen.fdr_q));
    report.results = results;
    report.screen = Some(ScreenSummary {
        screen_fraction: screen.screen_fraction,
        split,
        marginal,
        cutoff,
        retained: retained_idx.iter().map(|&k| labels[k].clone()).collect(),
    });
    Ok(report)
}
