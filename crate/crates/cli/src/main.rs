use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use medboot::data::Dataset;
use medboot::glm::NieQuery;
use medboot::multi::individual_within_multi_test;
use medboot::pipeline::{parse_dataset_csv, run_test, screen_then_joint, ColumnRoleMap, Report, ScreenConfig};
use medboot::resampling::WORKERS_ENV;
use medboot::sim::{run_null_study, run_power_study, write_outputs, SimSpec};
use medboot::tuning::{confirmatory_analysis, select_lambda, DbConfig, DbSample, DEFAULT_GRID};
use medboot::{AbConfig, MedError, Method, Result, Scheme};

#[derive(Parser)]
#[command(name = "medboot", version, about = "Adaptive bootstrap tests for mediation effects")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one test on a CSV dataset.
    Run(RunArgs),
    /// Marginal screening, follow-up tests and BH adjustment.
    Screen(ScreenArgs),
    /// Monte-Carlo study from a JSON spec.
    Simulate(SimulateArgs),
    /// Choose λ by double bootstrap.
    Tune(DbArgs),
    /// Double-bootstrap pattern diagnostics.
    Confirm(ConfirmArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Comma-separated input with a header row.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    exposure: String,
    /// Mediator column; repeat or comma-separate for several.
    #[arg(long = "mediator", required = true, value_delimiter = ',')]
    mediators: Vec<String>,
    #[arg(long)]
    outcome: String,
    #[arg(long = "covariate", value_delimiter = ',')]
    covariates: Vec<String>,
}

impl DataArgs {
    fn roles(&self) -> ColumnRoleMap {
        ColumnRoleMap {
            exposure: self.exposure.clone(),
            mediators: self.mediators.clone(),
            outcome: self.outcome.clone(),
            covariates: self.covariates.clone(),
        }
    }

    fn load(&self) -> Result<Dataset<f64>> {
        parse_dataset_csv(&self.data, &self.roles())
    }
}

#[derive(Args)]
struct BootArgs {
    /// Flat JSON with `AbConfig` fields; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "B")]
    b: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    scheme: Option<Scheme>,
    /// Thread count; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

impl BootArgs {
    fn ab_config(&self) -> Result<AbConfig> {
        let mut cfg: AbConfig = match &self.config {
            Some(p) => read_json(p)?,
            None => AbConfig::default(),
        };
        if let Some(b) = self.b {
            cfg.bootstrap.b = b;
        }
        if let Some(l) = self.lambda {
            cfg.lambda = l;
        }
        if let Some(s) = self.seed {
            cfg.bootstrap.seed = s;
        }
        if let Some(s) = self.scheme {
            cfg.bootstrap.scheme = s;
        }
        cfg.bootstrap.workers = resolve_workers(self.workers.or(cfg.bootstrap.workers))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    boot: BootArgs,
    #[arg(long, default_value = "poc-ab")]
    method: Method,
    /// Mediator to test while adjusting for the others in the outcome model.
    #[arg(long)]
    target: Option<String>,
    /// Exposure level `s` of the GLM contrast.
    #[arg(long, default_value_t = 1.0)]
    s: f64,
    #[arg(long = "s-star", default_value_t = 0.0)]
    s_star: f64,
    /// Covariate values (excluding the intercept) at which the GLM effect is evaluated.
    #[arg(long = "at-x", value_delimiter = ',')]
    at_x: Vec<f64>,
    /// Directory for CSV output.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ScreenArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    boot: BootArgs,
    #[arg(long, default_value = "poc-ab")]
    method: Method,
    #[arg(long = "screen-fraction", default_value_t = 0.1)]
    screen_fraction: f64,
    #[arg(long = "fdr-q", default_value_t = 0.1)]
    fdr_q: f64,
    /// Fraction of rows used for screening; the rest are used for follow-up tests.
    #[arg(long)]
    split: Option<f64>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON file with `SimSpec` fields.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct DbArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    target: Option<String>,
    /// JSON file with `DbConfig` fields; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "b-outer")]
    b_outer: Option<usize>,
    #[arg(long = "b-inner")]
    b_inner: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    grid: Vec<f64>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ConfirmArgs {
    #[command(flatten)]
    db: DbArgs,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
}

impl DbArgs {
    fn db_config(&self) -> Result<DbConfig> {
        let mut cfg: DbConfig = match &self.config {
            Some(p) => read_json(p)?,
            None => DbConfig::default(),
        };
        if let Some(b) = self.b_outer {
            cfg.b_outer = b;
        }
        if let Some(b) = self.b_inner {
            cfg.b_inner = b;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(s) = self.scheme {
            cfg.scheme = s;
        }
        cfg.workers = resolve_workers(self.workers.or(cfg.workers))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Single-mediator view of the data, honouring `--target`.
    fn load_single(&self) -> Result<Dataset<f64>> {
        let data = self.data.load()?;
        match &self.target {
            Some(t) => data.target_mediator(mediator_index(&data, t)?),
            None if data.n_mediators() == 1 => Ok(data),
            None => Err(MedError::InvalidArgument("several mediators given; choose one with --target".into())),
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| MedError::InvalidArgument(format!("{}: {e}", path.display())))
}

/// Explicit value, else the environment variable, else the ambient pool.
fn resolve_workers(explicit: Option<usize>) -> Result<Option<usize>> {
    if explicit.is_some() {
        return Ok(explicit);
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| MedError::InvalidArgument(format!("{WORKERS_ENV} must be a positive integer"))),
        _ => Ok(None),
    }
}

fn mediator_index(data: &Dataset<f64>, name: &str) -> Result<usize> {
    data.labels()
        .mediators
        .iter()
        .position(|m| m == name)
        .ok_or_else(|| MedError::MissingColumn(name.to_string()))
}

fn csv_writer(dir: &Path, name: &str) -> Result<csv::Writer<File>> {
    std::fs::create_dir_all(dir)?;
    Ok(csv::Writer::from_writer(File::create(dir.join(name))?))
}

fn write_results_csv(dir: &Path, report: &Report) -> Result<()> {
    let mut w = csv_writer(dir, "results.csv")?;
    w.write_record(["target", "method", "estimate", "statistic", "p", "q", "rejected"])?;
    for (k, r) in report.results.iter().enumerate() {
        let (q, rej) = match &report.bh {
            Some(bh) => (bh.adjusted[k].to_string(), bh.rejected[k].to_string()),
            None => (String::new(), String::new()),
        };
        w.write_record([
            r.target.clone().unwrap_or_default(),
            r.method.tag().to_string(),
            r.estimate.to_string(),
            r.statistic.to_string(),
            r.p_value.to_string(),
            q,
            rej,
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_db_csv(dir: &Path, samples: &[(&str, &DbSample)]) -> Result<()> {
    let mut w = csv_writer(dir, "db_pvalues.csv")?;
    w.write_record(["sample", "lambda", "index", "p"])?;
    for (name, s) in samples {
        for (i, p) in s.pvalues.iter().enumerate() {
            w.write_record([name.to_string(), s.lambda.to_string(), i.to_string(), p.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_run(a: &RunArgs) -> Result<Report> {
    let data = a.data.load()?;
    let cfg = a.boot.ab_config()?;
    let mut query = NieQuery::at_baseline(a.s, a.s_star, data.covariates().len());
    if !a.at_x.is_empty() {
        if a.at_x.len() + 1 != query.x.len() {
            return Err(MedError::InvalidArgument(format!(
                "--at-x needs {} values",
                query.x.len() - 1
            )));
        }
        query.x[1..].copy_from_slice(&a.at_x);
    }
    let result = match &a.target {
        Some(t) if matches!(a.method, Method::PocAb | Method::PocB) && data.n_mediators() > 1 => {
            let cfg = if a.method == Method::PocB { cfg.classical() } else { cfg.clone() };
            individual_within_multi_test(&data, mediator_index(&data, t)?, &cfg)?
        }
        Some(t) => {
            let mut r = run_test(&data.target_mediator(mediator_index(&data, t)?)?, a.method, &cfg, Some(&query))?;
            r.target = Some(t.clone());
            r
        }
        None => run_test(&data, a.method, &cfg, Some(&query))?,
    };
    let mut report = Report::new("run");
    report.config = Some(cfg);
    report.results.push(result);
    if let Some(dir) = &a.csv {
        write_results_csv(dir, &report)?;
    }
    Ok(report)
}

fn cmd_screen(a: &ScreenArgs) -> Result<Report> {
    let data = a.data.load()?;
    let cfg = a.boot.ab_config()?;
    let screen = ScreenConfig {
        method: a.method,
        screen_fraction: a.screen_fraction,
        fdr_q: a.fdr_q,
        split_fraction: a.split,
    };
    let report = screen_then_joint(&data, &screen, &cfg)?;
    if let Some(dir) = &a.csv {
        write_results_csv(dir, &report)?;
    }
    Ok(report)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<Report> {
    let mut spec: SimSpec = read_json(&a.config)?;
    spec.workers = resolve_workers(a.workers.or(spec.workers))?;
    let sim = if spec.signals.is_empty() {
        run_null_study(&spec)?
    } else {
        run_power_study(&spec)?
    };
    if let Some(dir) = &a.csv {
        write_outputs(&sim, dir)?;
    }
    // worker count is an execution detail and stays out of the report
    let mut echo = sim;
    echo.spec.workers = None;
    let mut report = Report::new("simulate");
    report.simulation = Some(echo);
    Ok(report)
}

fn cmd_tune(a: &DbArgs) -> Result<Report> {
    let data = a.load_single()?;
    let cfg = a.db_config()?;
    let grid = if a.grid.is_empty() { DEFAULT_GRID.to_vec() } else { a.grid.clone() };
    let sel = select_lambda(&data, &grid, &cfg)?;
    if let Some(dir) = &a.csv {
        write_db_csv(dir, &[("alpha", &sel.alpha_sample), ("beta", &sel.beta_sample)])?;
    }
    let mut report = Report::new("tune");
    report.db_config = Some(DbConfig { workers: None, ..cfg });
    report.tuning = Some(sel);
    Ok(report)
}

fn cmd_confirm(a: &ConfirmArgs) -> Result<Report> {
    let data = a.db.load_single()?;
    let cfg = a.db.db_config()?;
    let c = confirmatory_analysis(&data, a.lambda, &cfg)?;
    if let Some(dir) = &a.db.csv {
        write_db_csv(dir, &[("observed", &c.observed), ("alpha", &c.alpha), ("beta", &c.beta)])?;
    }
    let mut report = Report::new("confirm");
    report.db_config = Some(DbConfig { workers: None, ..cfg });
    report.confirmation = Some(c);
    Ok(report)
}

fn strip_workers(mut report: Report) -> Report {
    if let Some(cfg) = report.config.as_mut() {
        cfg.bootstrap.workers = None;
    }
    for r in &mut report.results {
        if let Some(b) = r.bootstrap.as_mut() {
            b.workers = None;
        }
    }
    report
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let out = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Screen(a) => cmd_screen(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Confirm(a) => cmd_confirm(a),
    };
    let result = out.and_then(|r| strip_workers(r).to_json());
    match result {
        Ok(json) => {
            let mut stdout = std::io::stdout().lock();
            if writeln!(stdout, "{json}").is_err() {
                return ExitCode::from(2);
            }
            eprintln!("elapsed: {:.3}s", start.elapsed().as_secs_f64());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

