//! Command-line front end. Every subcommand writes into a run directory
//! and finishes with a `manifest.json`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use log::error;
use serde::Serialize;

use crate::config::{FactorCount, RunConfig, WeightsSpec};
use crate::panel::{availability_ratio, Month};
use crate::pipeline::{fit_factor, prepare, run_comparators, run_nowcast, vintage_study, Inputs, PipelineError};
use crate::report::{self, ReportError, RunDir};
use crate::trainer::DmLoss;

#[derive(Debug, Parser)]
#[command(name = "nowcast", version, about = "Dynamic-factor nowcasts from a ragged-edge indicator panel")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate the inputs and write the normalised panel and target.
    Ingest(Common),
    /// Transformation choice and topic screen.
    Select(Common),
    /// Factor extraction.
    Fit(Common),
    /// Grid backtest and comparator models.
    Backtest(Common),
    /// Live nowcasts for the two open months.
    Nowcast(Common),
    /// Nowcasts at each cut date.
    Vintage(Common),
    /// Every report at once.
    Report(Common),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Select(_) => "select",
            Command::Fit(_) => "fit",
            Command::Backtest(_) => "backtest",
            Command::Nowcast(_) => "nowcast",
            Command::Vintage(_) => "vintage",
            Command::Report(_) => "report",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Ingest(c)
            | Command::Select(c)
            | Command::Fit(c)
            | Command::Backtest(c)
            | Command::Nowcast(c)
            | Command::Vintage(c)
            | Command::Report(c) => c,
        }
    }
}

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub panel: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Run directory.
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
    /// Vintage cut date, YYYY-MM-DD.
    #[arg(long)]
    pub as_of: Option<String>,
    #[arg(long)]
    pub h_g: Option<usize>,
    #[arg(long)]
    pub h_t: Option<usize>,
    #[arg(long)]
    pub alpha_select: Option<f64>,
    #[arg(long)]
    pub alpha_dm: Option<f64>,
    #[arg(long)]
    pub p_max: Option<usize>,
    #[arg(long)]
    pub q_max: Option<usize>,
    /// Number of factors or "auto".
    #[arg(long)]
    pub r: Option<FactorCount>,
    #[arg(long)]
    pub r_max: Option<usize>,
    /// Lags of the factor VAR.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub ci_level: Option<f64>,
    /// "equal" or comma-separated origin weights.
    #[arg(long)]
    pub weights: Option<WeightsSpec>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_draws: Option<usize>,
    #[arg(long, value_parser = parse_loss)]
    pub dm_loss: Option<DmLoss>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Comma-separated cut dates for the vintage table.
    #[arg(long, value_delimiter = ',')]
    pub vintage_dates: Option<Vec<String>>,
    /// Skip the naive and traditional-only comparators.
    #[arg(long)]
    pub no_comparators: bool,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long)]
    pub verbose: bool,
}

fn parse_loss(s: &str) -> Result<DmLoss, String> {
    match s {
        "absolute" => Ok(DmLoss::Absolute),
        "squared" => Ok(DmLoss::Squared),
        _ => Err(format!("expected \"absolute\" or \"squared\", got {s:?}")),
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Pipeline(e) => e.exit_code(),
            CliError::Report(ReportError::Panel(_)) => 2,
            CliError::Report(_) => 1,
        }
    }
}

impl Common {
    /// Config file values with the flags applied on top.
    pub fn resolve(&self) -> Result<RunConfig, String> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_json_file(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                }
            )*};
        }
        set!(h_g, h_t, alpha_select, alpha_dm, p_max, q_max, r, r_max, k, ci_level, weights, seed, n_draws, dm_loss, restarts);
        if self.panel.is_some() {
            cfg.panel_path = self.panel.clone();
        }
        if self.target.is_some() {
            cfg.target_path = self.target.clone();
        }
        if self.schema.is_some() {
            cfg.schema_path = self.schema.clone();
        }
        if self.as_of.is_some() {
            cfg.as_of = self.as_of.clone();
        }
        if let Some(d) = &self.vintage_dates {
            cfg.vintage_dates = d.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Serialize)]
struct SeriesSummary {
    id: String,
    first_observed: Option<Month>,
    last_observed: Option<Month>,
    observed: usize,
}

#[derive(Serialize)]
struct IngestReport {
    n_series: usize,
    n_periods: usize,
    start: Month,
    end: Month,
    target: String,
    target_start: Month,
    target_end: Month,
    /// Share of series observed in each of the last three months.
    edge_availability: Vec<(Month, f64)>,
    series: Vec<SeriesSummary>,
}

fn ingest(dir: &mut RunDir, inputs: &Inputs) -> Result<(), CliError> {
    let p = &inputs.panel;
    let dates = p.dates();
    let series = (0..p.n_series())
        .map(|i| {
            let obs: Vec<usize> = (0..p.n_periods()).filter(|&t| p.mask()[(t, i)]).collect();
            SeriesSummary {
                id: p.meta()[i].id.clone(),
                first_observed: obs.first().map(|&t| dates[t]),
                last_observed: obs.last().map(|&t| dates[t]),
                observed: obs.len(),
            }
        })
        .collect();
    let edge = dates
        .iter()
        .rev()
        .take(3)
        .rev()
        .map(|&m| Ok((m, availability_ratio(p, m)?)))
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let report = IngestReport {
        n_series: p.n_series(),
        n_periods: p.n_periods(),
        start: p.start(),
        end: p.end(),
        target: inputs.target.id.clone(),
        target_start: inputs.target.start,
        target_end: inputs.target.end(),
        edge_availability: edge,
        series,
    };
    dir.panel("panel.csv", p)?;
    dir.target("target.csv", &inputs.target)?;
    dir.json("ingest.json", &report)?;
    Ok(())
}

fn execute(command: &Command, cfg: &RunConfig) -> Result<(), CliError> {
    let common = command.common();
    let inputs = Inputs::load(cfg)?;
    let mut dir = RunDir::create(&common.out)?;
    match command {
        Command::Ingest(_) => ingest(&mut dir, &inputs)?,
        Command::Select(_) => {
            let prep = prepare(&inputs, cfg, None)?;
            report::write_transforms(&mut dir, &prep)?;
            report::write_selection(&mut dir, &prep)?;
        }
        Command::Fit(_) => {
            let prep = prepare(&inputs, cfg, None)?;
            let model = fit_factor(&prep, cfg)?;
            report::write_transforms(&mut dir, &prep)?;
            report::write_selection(&mut dir, &prep)?;
            report::write_factor(&mut dir, &prep, &model)?;
        }
        Command::Backtest(_) | Command::Nowcast(_) | Command::Report(_) => {
            let run = run_nowcast(&inputs, cfg, None)?;
            let all = matches!(command, Command::Report(_));
            if all || matches!(command, Command::Backtest(_)) {
                report::write_backtest(&mut dir, &run)?;
                if !common.no_comparators {
                    let rows = run_comparators(&inputs, cfg, &run)?;
                    let y = &run.prepared.target;
                    let first = y.start.offset((y.len() - cfg.h_t) as i64);
                    report::write_comparators(&mut dir, &rows, first)?;
                }
            }
            if all || matches!(command, Command::Nowcast(_)) {
                report::write_nowcast(&mut dir, &run)?;
                report::write_factor(&mut dir, &run.prepared, &run.factor)?;
            }
            if all {
                report::write_transforms(&mut dir, &run.prepared)?;
                report::write_selection(&mut dir, &run.prepared)?;
                if !cfg.vintage_dates.is_empty() {
                    let cuts = cfg.vintage_cut_dates().map_err(CliError::Config)?;
                    let rows = vintage_study(&inputs, cfg, &cuts, &run.prepared.frozen())?;
                    report::write_vintages(&mut dir, &rows)?;
                }
            }
        }
        Command::Vintage(_) => {
            let cuts = cfg.vintage_cut_dates().map_err(CliError::Config)?;
            if cuts.is_empty() {
                return Err(CliError::Config("vintage needs --vintage-dates or vintage_dates in the config".into()));
            }
            let base = prepare(&inputs, cfg, None)?;
            let rows = vintage_study(&inputs, cfg, &cuts, &base.frozen())?;
            report::write_vintages(&mut dir, &rows)?;
        }
    }
    dir.manifest(command.name(), cfg)?;
    Ok(())
}

/// Runs one invocation and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let common = cli.command.common();
    let level = if common.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let cfg = match common.resolve() {
        Ok(c) => c,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            return 2;
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.threads {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return 2;
        }
    };
    match pool.install(|| execute(&cli.command, &cfg)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
