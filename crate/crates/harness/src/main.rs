use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use hypersel::config::{RunConfig, DEFAULT_BINS, DEFAULT_TRIALS};
use hypersel::error::{HarnessError, Result};
use hypersel::io::{numbered_samples, write_loss_table};
use hypersel::report::{emit_report, summarize, to_json, write_output, Format};
use hypersel::run::{data_seed, resolve_data, Data, Runner};
use hypersel::scenario::{ScenarioSpec, DEFAULT_QUANTILE};
use hypersel::validate::monte_carlo_validate;

#[derive(Parser)]
#[command(name = "hypersel", version, about = "Hyperparameter selection with statistical guarantees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads for Monte Carlo trials.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run a method on a loss table, scenario or feed and write the selection.
    Calibrate(Common),
    /// Draw a scenario's loss table as long-format CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write the ground-truth risks (JSON).
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Certify the method's guarantee by Monte Carlo on the scenario.
    Validate(Common),
    /// Per-candidate loss summaries and histograms.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long, default_value_t = 0)]
        objective: usize,
    },
}

fn load_config(common: &Common) -> Result<(RunConfig, u64)> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
        if let Some(sc) = cfg.scenario.as_mut() {
            sc.seed = None;
        }
    }
    if common.jobs == 0 {
        return Err(HarnessError::config("--jobs must be positive"));
    }
    let seed = cfg.seed;
    Ok((cfg, seed))
}

/// A `simulate` config is either a full run config or a bare scenario.
fn load_scenario(common: &Common) -> Result<(ScenarioSpec, u64)> {
    let text = std::fs::read_to_string(&common.config).map_err(|e| HarnessError::io(&common.config, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| HarnessError::config(format!("{}: {e}", common.config.display())))?;
    let (mut spec, mut master) = if value.get("generator").is_some() {
        let spec: ScenarioSpec = serde_json::from_value(value)
            .map_err(|e| HarnessError::config(format!("{}: {e}", common.config.display())))?;
        (spec, 0)
    } else {
        let (cfg, master) = load_config(common)?;
        let spec = cfg.scenario.ok_or_else(|| HarnessError::config("simulate needs a scenario"))?;
        (spec, master)
    };
    if let Some(s) = common.seed {
        master = s;
        spec.seed = None;
    }
    spec.validate()?;
    Ok((spec, master))
}

fn calibrate(common: &Common) -> Result<()> {
    let (cfg, master) = load_config(common)?;
    let runner = Runner::new(cfg)?;
    let data = resolve_data(&runner.cfg, master)?;
    let out = runner.calibrate(&data, master)?;
    emit_report(&out, common.out.as_deref(), common.format.unwrap_or_default())
}

fn simulate(common: &Common, truth: Option<&Path>) -> Result<()> {
    if common.format.is_some() {
        return Err(HarnessError::config("simulate always writes a long-format loss CSV"));
    }
    let (spec, master) = load_scenario(common)?;
    let sc = spec.generate(spec.seed.unwrap_or_else(|| data_seed(master)))?;
    let mut buf = Vec::new();
    write_loss_table(&mut buf, &sc.candidates, &sc.table, &numbered_samples(sc.table.n_samples()))
        .map_err(|e| HarnessError::io("<buffer>", e))?;
    write_output(common.out.as_deref(), &String::from_utf8(buf).expect("csv is utf-8"))?;
    if let Some(p) = truth {
        write_output(Some(p), &to_json(&sc.truth)?)?;
    }
    Ok(())
}

fn validate(common: &Common) -> Result<()> {
    let (cfg, master) = load_config(common)?;
    let spec = cfg.scenario.clone().ok_or_else(|| HarnessError::config("validate needs a scenario"))?;
    let trials = common.trials.or(cfg.trials).unwrap_or(DEFAULT_TRIALS);
    let certify = cfg.certify;
    let runner = Runner::new(cfg)?;
    let started = Instant::now();
    let report = monte_carlo_validate(&runner, &spec, certify, trials, master, common.jobs)?;
    if !report.counts_consistent() {
        return Err(HarnessError::Invariant("report counts do not reproduce its rates".into()));
    }
    eprintln!(
        "validate: {} trials in {:.2}s, {} rate {:.4} (Wilson 95% [{:.4}, {:.4}])",
        trials,
        started.elapsed().as_secs_f64(),
        report.guarantee.as_str(),
        report.empirical_rate,
        report.wilson_95[0],
        report.wilson_95[1]
    );
    emit_report(&report, common.out.as_deref(), common.format.unwrap_or_default())
}

fn report(common: &Common, bins: Option<usize>, objective: usize) -> Result<()> {
    let (cfg, master) = load_config(common)?;
    let bins = bins.or(cfg.histogram_bins).unwrap_or(DEFAULT_BINS);
    let q = cfg.quantile_q.unwrap_or(DEFAULT_QUANTILE);
    let mut table_cfg = cfg.clone();
    if table_cfg.method == hypersel::registry::Method::Altt {
        // summaries always describe a finite table
        table_cfg.method = hypersel::registry::Method::Ltt;
    }
    let data = match &cfg.scenario {
        Some(spec) => Data::from_scenario(spec, table_cfg.method, spec.seed.unwrap_or_else(|| data_seed(master)))?,
        None => resolve_data(&table_cfg, master)?,
    };
    let Data::Table(t) = data else {
        return Err(HarnessError::config("report needs a loss table or scenario"));
    };
    let summary = summarize(&t.table, &t.candidates, objective, bins, q)?;
    emit_report(&summary, common.out.as_deref(), common.format.unwrap_or_default())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Calibrate(c) => calibrate(c),
        Command::Simulate { common, truth } => simulate(common, truth.as_deref()),
        Command::Validate(c) => validate(c),
        Command::Report { common, bins, objective } => report(common, *bins, *objective),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
