use serde::{Deserialize, Serialize};

use crate::error::{MedError, Result};
use crate::scalar::Scalar;

/// Column labels carried alongside the numeric data for reporting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnLabels {
    pub exposure: String,
    pub mediators: Vec<String>,
    pub outcome: String,
    /// Includes the leading intercept label.
    pub covariates: Vec<String>,
    pub outcome_covariates: Vec<String>,
}

impl ColumnLabels {
    fn default_for(j: usize, covs: usize) -> Self {
        let mut covariates = vec!["(intercept)".to_string()];
        covariates.extend((1..covs).map(|k| format!("X{k}")));
        Self {
            exposure: "S".into(),
            mediators: (1..=j).map(|k| format!("M{k}")).collect(),
            outcome: "Y".into(),
            covariates,
            outcome_covariates: Vec::new(),
        }
    }
}

/// Complete, finite observations with declared column roles.
///
/// `covariates[0]` is the intercept column for data built through [`Dataset::new`].
/// `outcome_covariates` are adjusted for in the outcome model only (for example the
/// non-target mediators of a multi-mediator model).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    exposure: Vec<T>,
    mediators: Vec<Vec<T>>,
    outcome: Vec<T>,
    covariates: Vec<Vec<T>>,
    outcome_covariates: Vec<Vec<T>>,
    labels: ColumnLabels,
    outcome_view: Option<OutcomeView<T>>,
}

/// Columns that stand in for `S`, the mediators and `X` inside the outcome model only.
/// Produced by the tuning transforms, which process each SEM equation separately.
#[derive(Debug, Clone, PartialEq)]
struct OutcomeView<T> {
    exposure: Vec<T>,
    mediators: Vec<Vec<T>>,
    covariates: Vec<Vec<T>>,
}

impl<T: Scalar> OutcomeView<T> {
    fn map(&self, f: impl Fn(&Vec<T>) -> Vec<T>) -> Self {
        Self {
            exposure: f(&self.exposure),
            mediators: self.mediators.iter().map(&f).collect(),
            covariates: self.covariates.iter().map(&f).collect(),
        }
    }
}

impl<T: Scalar> Dataset<T> {
    /// Build a dataset, injecting a constant-one intercept ahead of `covariates`.
    pub fn new(
        exposure: Vec<T>,
        mediators: Vec<Vec<T>>,
        outcome: Vec<T>,
        covariates: Vec<Vec<T>>,
    ) -> Result<Self> {
        let n = exposure.len();
        let mut cols = Vec::with_capacity(covariates.len() + 1);
        cols.push(vec![T::one(); n]);
        cols.extend(covariates);
        let labels = ColumnLabels::default_for(mediators.len(), cols.len());
        Self::from_parts(exposure, mediators, outcome, cols, Vec::new(), labels)
    }

    /// Build from raw columns without injecting an intercept. Used for transformed
    /// data whose first covariate column is a processed intercept.
    pub fn from_parts(
        exposure: Vec<T>,
        mediators: Vec<Vec<T>>,
        outcome: Vec<T>,
        covariates: Vec<Vec<T>>,
        outcome_covariates: Vec<Vec<T>>,
        labels: ColumnLabels,
    ) -> Result<Self> {
        let n = exposure.len();
        if n == 0 {
            return Err(MedError::InvalidData("dataset has no rows".into()));
        }
        if mediators.is_empty() {
            return Err(MedError::InvalidData("at least one mediator is required".into()));
        }
        if covariates.is_empty() {
            return Err(MedError::InvalidData("covariate block must hold the intercept".into()));
        }
        if labels.mediators.len() != mediators.len()
            || labels.covariates.len() != covariates.len()
            || labels.outcome_covariates.len() != outcome_covariates.len()
        {
            return Err(MedError::InvalidData("label count does not match columns".into()));
        }
        let all = std::iter::once(("exposure", &exposure))
            .chain(std::iter::once(("outcome", &outcome)))
            .chain(mediators.iter().map(|c| ("mediator", c)))
            .chain(covariates.iter().map(|c| ("covariate", c)))
            .chain(outcome_covariates.iter().map(|c| ("outcome covariate", c)));
        for (role, col) in all {
            if col.len() != n {
                return Err(MedError::InvalidData(format!(
                    "{role} column has {} rows, expected {n}",
                    col.len()
                )));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(MedError::InvalidData(format!(
                    "non-finite {role} value at row {i}"
                )));
            }
        }
        Ok(Self {
            exposure,
            mediators,
            outcome,
            covariates,
            outcome_covariates,
            labels,
            outcome_view: None,
        })
    }

    /// Give the outcome model its own exposure, mediator and covariate columns.
    pub(crate) fn with_outcome_view(
        mut self,
        exposure: Vec<T>,
        mediators: Vec<Vec<T>>,
        covariates: Vec<Vec<T>>,
    ) -> Result<Self> {
        if mediators.len() != self.mediators.len() || covariates.len() != self.covariates.len() {
            return Err(MedError::InvalidData("outcome-model columns do not match the dataset".into()));
        }
        let n = self.n();
        let all = std::iter::once(&exposure).chain(&mediators).chain(&covariates);
        for col in all {
            if col.len() != n || col.iter().any(|v| !v.is_finite()) {
                return Err(MedError::InvalidData("outcome-model column is malformed".into()));
            }
        }
        self.outcome_view = Some(OutcomeView {
            exposure,
            mediators,
            covariates,
        });
        Ok(self)
    }

    pub fn has_outcome_view(&self) -> bool {
        self.outcome_view.is_some()
    }

    pub fn with_labels(mut self, labels: ColumnLabels) -> Result<Self> {
        if labels.mediators.len() != self.mediators.len()
            || labels.covariates.len() != self.covariates.len()
            || labels.outcome_covariates.len() != self.outcome_covariates.len()
        {
            return Err(MedError::InvalidData("label count does not match columns".into()));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.exposure.len()
    }

    pub fn n_mediators(&self) -> usize {
        self.mediators.len()
    }

    pub fn exposure(&self) -> &[T] {
        &self.exposure
    }

    pub fn mediator(&self, j: usize) -> &[T] {
        &self.mediators[j]
    }

    pub fn mediators(&self) -> &[Vec<T>] {
        &self.mediators
    }

    pub fn outcome(&self) -> &[T] {
        &self.outcome
    }

    pub fn covariates(&self) -> &[Vec<T>] {
        &self.covariates
    }

    pub fn outcome_covariates(&self) -> &[Vec<T>] {
        &self.outcome_covariates
    }

    pub fn labels(&self) -> &ColumnLabels {
        &self.labels
    }

    /// Exposure column as used in the outcome model.
    pub fn outcome_exposure(&self) -> &[T] {
        self.outcome_view.as_ref().map_or(&self.exposure, |v| &v.exposure)
    }

    /// Mediator columns as used in the outcome model.
    pub fn outcome_mediators(&self) -> &[Vec<T>] {
        self.outcome_view.as_ref().map_or(&self.mediators, |v| &v.mediators)
    }

    pub fn outcome_mediator(&self, j: usize) -> &[T] {
        &self.outcome_mediators()[j]
    }

    /// Covariates (intercept first) as used in the outcome model.
    pub fn outcome_model_covariates(&self) -> &[Vec<T>] {
        self.outcome_view.as_ref().map_or(&self.covariates, |v| &v.covariates)
    }

    /// Adjuster columns of the mediator model (`M ~ S + X`), excluding `S`.
    pub fn mediator_adjusters(&self) -> Vec<&[T]> {
        self.covariates.iter().map(Vec::as_slice).collect()
    }

    /// Adjuster columns of the outcome model for one mediator coefficient, excluding
    /// the mediators themselves: `X`, outcome-only covariates, then `S`.
    pub fn outcome_adjusters(&self) -> Vec<&[T]> {
        self.outcome_model_covariates()
            .iter()
            .chain(self.outcome_covariates.iter())
            .map(Vec::as_slice)
            .chain(std::iter::once(self.outcome_exposure()))
            .collect()
    }

    /// Rows selected by `indices` (with repetition), in index order.
    pub fn resample(&self, indices: &[usize]) -> Self {
        let pick = |c: &Vec<T>| indices.iter().map(|&i| c[i]).collect::<Vec<T>>();
        Self {
            exposure: pick(&self.exposure),
            mediators: self.mediators.iter().map(pick).collect(),
            outcome: pick(&self.outcome),
            covariates: self.covariates.iter().map(pick).collect(),
            outcome_covariates: self.outcome_covariates.iter().map(pick).collect(),
            labels: self.labels.clone(),
            outcome_view: self.outcome_view.as_ref().map(|v| v.map(pick)),
        }
    }

    /// Keep only mediator `j`; other mediators are dropped entirely.
    pub fn single_mediator(&self, j: usize) -> Result<Self> {
        self.check_mediator(j)?;
        let mut labels = self.labels.clone();
        labels.mediators = vec![self.labels.mediators[j].clone()];
        Ok(Self {
            mediators: vec![self.mediators[j].clone()],
            labels,
            outcome_view: self.outcome_view.as_ref().map(|v| OutcomeView {
                mediators: vec![v.mediators[j].clone()],
                ..v.clone()
            }),
            ..self.clone()
        })
    }

    /// Keep a subset of mediators in the given order.
    pub fn select_mediators(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(MedError::InvalidArgument("mediator subset is empty".into()));
        }
        for &j in keep {
            self.check_mediator(j)?;
        }
        let mut labels = self.labels.clone();
        labels.mediators = keep.iter().map(|&j| self.labels.mediators[j].clone()).collect();
        Ok(Self {
            mediators: keep.iter().map(|&j| self.mediators[j].clone()).collect(),
            labels,
            outcome_view: self.outcome_view.as_ref().map(|v| OutcomeView {
                mediators: keep.iter().map(|&j| v.mediators[j].clone()).collect(),
                ..v.clone()
            }),
            ..self.clone()
        })
    }

    /// Mediator `j` as the sole mediator, with every other mediator moved into the
    /// outcome model's adjusters.
    pub fn target_mediator(&self, j: usize) -> Result<Self> {
        self.check_mediator(j)?;
        let mut labels = self.labels.clone();
        let mut outcome_covariates = self.outcome_covariates.clone();
        for k in (0..self.n_mediators()).filter(|&k| k != j) {
            outcome_covariates.push(self.outcome_mediators()[k].clone());
            labels.outcome_covariates.push(self.labels.mediators[k].clone());
        }
        labels.mediators = vec![self.labels.mediators[j].clone()];
        Ok(Self {
            mediators: vec![self.mediators[j].clone()],
            outcome_covariates,
            labels,
            outcome_view: self.outcome_view.as_ref().map(|v| OutcomeView {
                mediators: vec![v.mediators[j].clone()],
                ..v.clone()
            }),
            ..self.clone()
        })
    }

    /// Multiply the outcome column by `c`.
    pub fn scale_outcome(&self, c: T) -> Self {
        Self {
            outcome: self.outcome.iter().map(|&y| y * c).collect(),
            ..self.clone()
        }
    }

    fn check_mediator(&self, j: usize) -> Result<()> {
        if j >= self.n_mediators() {
            return Err(MedError::InvalidArgument(format!(
                "mediator index {j} out of range (J = {})",
                self.n_mediators()
            )));
        }
        Ok(())
    }

    /// Convert every column to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        let conv = |c: &Vec<T>| c.iter().map(|&v| U::lit(v.as_f64())).collect::<Vec<U>>();
        Dataset {
            exposure: conv(&self.exposure),
            mediators: self.mediators.iter().map(conv).collect(),
            outcome: conv(&self.outcome),
            covariates: self.covariates.iter().map(conv).collect(),
            outcome_covariates: self.outcome_covariates.iter().map(conv).collect(),
            labels: self.labels.clone(),
            outcome_view: self.outcome_view.as_ref().map(|v| OutcomeView {
                exposure: conv(&v.exposure),
                mediators: v.mediators.iter().map(conv).collect(),
                covariates: v.covariates.iter().map(conv).collect(),
            }),
        }
    }
}
