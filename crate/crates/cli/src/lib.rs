//! Command-line harness: analytic solves, simulations, optimizer sweeps,
//! figure data and the no-FFR / clustered comparison, all as CSV.

mod overrides;
mod output;

use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use dtdd_ffr::config::CLUSTERED_MPT;
use dtdd_ffr::sim::{run_experiment, MetricsReport, SimOptions};
use dtdd_ffr::throughput::{mpt_average, sweep, MptEvaluator, SweepOptions, SweepTable, CURVE_POINTS};
use dtdd_ffr::{Direction, ExperimentFile, ScenarioConfig, SimConfig, SolverOptions, StpSolutionF64};
use serde::Serialize;
use serde_json::json;

pub use output::content_hash;
use output::Outputs;

/// Decode thresholds of the STP/MPT-vs-T figure, dB.
pub const FIG2_DECODE_DB: std::ops::RangeInclusive<i32> = -4..=8;
pub const FIG2_EDGE_SUBBANDS: [usize; 2] = [1, 5];
pub const FIG3_EDGE_SUBBANDS: [usize; 4] = [1, 3, 5, 7];

#[derive(Parser, Debug, Clone)]
#[command(name = "dtdd-ffr", version, about = "FFR-based dynamic TDD small-cell experiments")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// JSON configuration (`scenario`, optional `sim` and `optimizer`).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Figure id (2, 3 or 4), for `figure`.
    #[arg(long)]
    pub id: Option<u32>,
    /// Replace the simulation protocol with a preset.
    #[arg(long, value_enum)]
    pub scale: Option<Scale>,
    /// Override a config key, e.g. `--set scenario.edge_subbands=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Flat simulation window instead of a torus.
    #[arg(long)]
    pub no_torus: bool,
    /// Also simulate both schemes in `compare`.
    #[arg(long)]
    pub simulate: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Analytic,
    Simulate,
    Optimize,
    Figure,
    Compare,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Paper,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Engine(dtdd_ffr::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Engine(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Engine(e) => write!(f, "error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<dtdd_ffr::Error> for CliError {
    fn from(e: dtdd_ffr::Error) -> Self {
        match e {
            dtdd_ffr::Error::Config(c) => CliError::Usage(c.to_string()),
            other => CliError::Engine(other),
        }
    }
}

impl From<dtdd_ffr::ConfigError> for CliError {
    fn from(e: dtdd_ffr::ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Engine(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Engine(e.into())
    }
}

/// The configuration after presets, overrides and flags.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub file: ExperimentFile,
    pub scenario: ScenarioConfig,
}

pub fn resolve(cli: &Cli) -> Result<Resolved, CliError> {
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", cli.config.display())))?;
    let mut file = ExperimentFile::from_json(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", cli.config.display())))?;
    if let Some(scale) = cli.scale {
        let preset = match scale {
            Scale::Desk => SimConfig::desk(),
            Scale::Paper => SimConfig::paper(),
        };
        file.sim.half_side = preset.half_side;
        file.sim.realizations = preset.realizations;
        file.sim.slots_per_realization = preset.slots_per_realization;
    }
    if !cli.overrides.is_empty() {
        let mut value = serde_json::to_value(&file).map_err(|e| CliError::Usage(e.to_string()))?;
        overrides::apply(&mut value, &cli.overrides).map_err(CliError::Usage)?;
        file = serde_json::from_value(value).map_err(|e| CliError::Usage(format!("after overrides: {e}")))?;
    }
    if let Some(seed) = cli.seed {
        file.sim.master_seed = seed;
    }
    if cli.no_torus {
        file.sim.torus = false;
    }
    let scenario = file.scenario.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(Resolved { file, scenario })
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<Vec<PathBuf>, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    run(&cli)
}

pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    if cli.command == Command::Figure {
        match cli.id {
            Some(2..=4) => {}
            Some(id) => return Err(CliError::Usage(format!("unknown figure id {id} (expected 2, 3 or 4)"))),
            None => return Err(CliError::Usage("figure requires --id".into())),
        }
    }
    let resolved = resolve(cli)?;
    let mut out = Outputs::new(&cli.out);
    match cli.command {
        Command::Analytic => analytic(&resolved, &mut out)?,
        Command::Simulate => simulate(&resolved, &mut out)?,
        Command::Optimize => optimize(&resolved, &mut out)?,
        Command::Figure => match cli.id {
            Some(2) => figure2(&resolved, &mut out)?,
            Some(3) => figure3(&resolved, &mut out)?,
            _ => figure4(&resolved, &mut out)?,
        },
        Command::Compare => compare(&resolved, cli.simulate, &mut out)?,
    }
    let common = json!({
        "tool": "dtdd-ffr",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cli.command,
        "figure_id": cli.id,
        "scale": cli.scale,
        "master_seed": resolved.file.sim.master_seed,
        "config": resolved.file,
        "config_hash": content_hash(&serde_json::to_vec(&resolved.file).unwrap_or_default()),
    });
    Ok(out.commit(&common)?)
}

fn table(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| CliError::Engine(std::io::Error::other(e.to_string()).into()))
}

fn cells(values: &[f64]) -> Vec<String> {
    values.iter().map(|v| v.to_string()).collect()
}

/// Library defaults with a larger iteration budget: points near queue
/// saturation contract slowly.
pub fn solver_options() -> SolverOptions<f64> {
    SolverOptions {
        max_iterations: 5000,
        ..SolverOptions::default()
    }
}

fn solve(cfg: &ScenarioConfig) -> Result<StpSolutionF64, CliError> {
    Ok(dtdd_ffr::solve_fixed_point(cfg, &solver_options())?)
}

fn simulate_cfg(cfg: &ScenarioConfig, sim: &SimConfig) -> Result<MetricsReport, CliError> {
    eprintln!(
        "simulating {} realizations x {} slots (L = {}, T = {:.1} dB)",
        sim.realizations,
        sim.slots_per_realization,
        cfg.edge_subbands(),
        dtdd_ffr::config::linear_to_db(cfg.decode_threshold())
    );
    let report = run_experiment(cfg, sim, &SimOptions::default())?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(report)
}

// Per direction: q_in, STP_in, STP_e and the average MPT.
fn analytic_columns(sol: &StpSolutionF64) -> Vec<f64> {
    let mut v = Vec::new();
    for dir in Direction::BOTH {
        let d = sol.direction(dir);
        v.extend([d.q_interior, d.stp_interior, d.stp_edge, mpt_average(sol, dir)]);
    }
    v
}

fn sim_columns(r: &MetricsReport) -> Vec<f64> {
    let mut v = Vec::new();
    for (s, hw) in [(&r.dl, &r.dl_half_width), (&r.ul, &r.ul_half_width)] {
        v.extend([
            s.q_interior,
            s.stp_interior,
            hw.stp_interior,
            s.stp_edge,
            hw.stp_edge,
            s.mpt,
            hw.mpt,
        ]);
    }
    v
}

const ANALYTIC_COLUMNS: [&str; 8] = [
    "q_in_dl", "stp_in_dl", "stp_e_dl", "mpt_dl", "q_in_ul", "stp_in_ul", "stp_e_ul", "mpt_ul",
];

const SIM_COLUMNS: [&str; 14] = [
    "q_in_dl",
    "stp_in_dl",
    "stp_in_dl_hw",
    "stp_e_dl",
    "stp_e_dl_hw",
    "mpt_dl",
    "mpt_dl_hw",
    "q_in_ul",
    "stp_in_ul",
    "stp_in_ul_hw",
    "stp_e_ul",
    "stp_e_ul_hw",
    "mpt_ul",
    "mpt_ul_hw",
];

fn with_prefix<'a>(prefix: &[&'a str], rest: &[&'a str]) -> Vec<&'a str> {
    prefix.iter().chain(rest).copied().collect()
}

fn analytic(r: &Resolved, out: &mut Outputs) -> Result<(), CliError> {
    let sol = solve(&r.scenario)?;
    let mut rows = Vec::new();
    for dir in Direction::BOTH {
        let d = sol.direction(dir);
        let eval = MptEvaluator::new(&sol, dir)?;
        let mut row = vec![dir.short().to_string()];
        row.extend(cells(&[
            d.q_interior,
            d.q_edge,
            d.stp_interior,
            d.stp_edge,
            d.lambda_interior,
            d.lambda_edge,
            mpt_average(&sol, dir),
            eval.at(r.scenario.cell_radius()),
        ]));
        row.push(sol.iterations.to_string());
        row.push(sol.residual.to_string());
        rows.push(row);
    }
    let header = [
        "direction",
        "q_in",
        "q_e",
        "stp_in",
        "stp_e",
        "lambda_in",
        "lambda_e",
        "mpt_avg",
        "mpt_at_R",
        "iterations",
        "residual",
    ];
    out.add("analytic.csv", table(&header, &rows)?, json!({}));
    out.add(
        "analytic_mpt_vs_r.csv",
        curve_table(&[(r.scenario.edge_subbands(), &sol)], r.scenario.cell_radius())?,
        json!({ "points": CURVE_POINTS }),
    );
    Ok(())
}

fn curve_table(solutions: &[(usize, &StpSolutionF64)], radius: f64) -> Result<Vec<u8>, CliError> {
    let mut rows = Vec::new();
    for &(l, sol) in solutions {
        let dl = MptEvaluator::new(sol, Direction::Downlink)?.curve(radius, CURVE_POINTS);
        let ul = MptEvaluator::new(sol, Direction::Uplink)?.curve(radius, CURVE_POINTS);
        for i in 0..dl.radii.len() {
            let mut row = vec![l.to_string()];
            row.extend(cells(&[dl.radii[i], dl.values[i], ul.values[i]]));
            rows.push(row);
        }
    }
    table(&["L", "r_m", "mpt_dl", "mpt_ul"], &rows)
}

fn simulate(r: &Resolved, out: &mut Outputs) -> Result<(), CliError> {
    let report = simulate_cfg(&r.scenario, &r.file.sim)?;
    let mut metrics = Vec::new();
    report.write_metrics_csv(&mut metrics)?;
    let mut bins = Vec::new();
    report.write_mpt_vs_r_csv(&mut bins)?;
    let mut rows = Vec::new();
    for (dir, s) in [(Direction::Downlink, &report.dl), (Direction::Uplink, &report.ul)] {
        let mut row = vec![dir.short().to_string()];
        row.extend(cells(&[
            s.q_interior,
            s.stp_interior,
            s.stp_edge,
            s.q_interior_user_mean,
            s.stp_interior_user_mean,
            s.stp_edge_user_mean,
            s.mpt,
            s.mpt_user_mean,
            s.mean_queue_length,
            s.mean_sojourn,
            s.little_ratio,
            s.backlog_fraction,
        ]));
        rows.push(row);
    }
    let header = [
        "direction",
        "q_in",
        "stp_in",
        "stp_e",
        "q_in_user_mean",
        "stp_in_user_mean",
        "stp_e_user_mean",
        "mpt",
        "mpt_user_mean",
        "mean_queue",
        "mean_sojourn",
        "little_ratio",
        "backlog_fraction",
    ];
    let warnings = json!({ "warnings": report.warnings });
    out.add("metrics.csv", metrics, warnings.clone());
    out.add("mpt_vs_r.csv", bins, warnings.clone());
    out.add("sim_summary.csv", table(&header, &rows)?, warnings);
    Ok(())
}

fn sweep_table(r: &Resolved) -> Result<SweepTable, CliError> {
    let options = SweepOptions {
        solver: solver_options(),
        warm_start: false,
    };
    Ok(sweep(&r.scenario, &r.file.optimizer, &options)?)
}

fn gain(mpt: f64, clustered: f64) -> f64 {
    mpt / clustered - 1.0
}

fn summary_table(table_: &SweepTable) -> Result<Vec<u8>, CliError> {
    let picks = [
        ("dl", table_.argmax(Direction::Downlink)),
        ("ul", table_.argmax(Direction::Uplink)),
        ("total", table_.argmax_total()),
    ];
    let mut rows = Vec::new();
    for (objective, row) in picks {
        let mut rec = vec![objective.to_string()];
        match row {
            Some(p) => {
                rec.push("true".into());
                rec.push(p.edge_subbands.to_string());
                rec.extend(cells(&[
                    p.theta_db,
                    p.mpt_dl,
                    p.mpt_ul,
                    gain(p.mpt_dl, CLUSTERED_MPT.0),
                    gain(p.mpt_ul, CLUSTERED_MPT.1),
                ]));
            }
            None => {
                rec.push("false".into());
                rec.extend(std::iter::repeat_n(String::new(), 6));
            }
        }
        rows.push(rec);
    }
    table(
        &[
            "objective",
            "feasible",
            "L",
            "theta_db",
            "mpt_dl",
            "mpt_ul",
            "gain_dl_vs_clustered",
            "gain_ul_vs_clustered",
        ],
        &rows,
    )
}

fn optimize(r: &Resolved, out: &mut Outputs) -> Result<(), CliError> {
    let t = sweep_table(r)?;
    if t.argmax(Direction::Downlink).is_none() && t.argmax(Direction::Uplink).is_none() {
        return match dtdd_ffr::throughput::optimize_table(t, &r.file.optimizer, Direction::Downlink) {
            Err(err) => Err(err.into()),
            Ok(_) => unreachable!("no feasible point"),
        };
    }
    let mut csv = Vec::new();
    t.write_csv(&mut csv)?;
    out.add("sweep.csv", csv, json!({}));
    out.add("optimum.csv", summary_table(&t)?, json!({}));
    Ok(())
}

fn figure2(r: &Resolved, out: &mut Outputs) -> Result<(), CliError> {
    let theta_db = dtdd_ffr::config::linear_to_db(r.scenario.classification_threshold());
    let mut analytic_rows = Vec::new();
    let mut sim_rows = Vec::new();
    for l in FIG2_EDGE_SUBBANDS {
        for t_db in FIG2_DECODE_DB {
            let cfg = r.scenario.with_ffr(theta_db, l)?.with_decode_threshold_db(t_db as f64);
            let key = vec![l.to_string(), t_db.to_string()];
            let mut row = key.clone();
            row.extend(cells(&analytic_columns(&solve(&cfg)?)));
            analytic_rows.push(row);
            let mut row = key;
            row.extend(cells(&sim_columns(&simulate_cfg(&cfg, &r.file.sim)?)));
            sim_rows.push(row);
        }
    }
    let key = ["L", "t_db"];
    out.add(
        "fig2_analytic.csv",
        table(&with_prefix(&key, &ANALYTIC_COLUMNS), &analytic_rows)?,
        json!({ "theta_db": theta_db }),
    );
    out.add(
        "fig2_sim.csv",
        table(&with_prefix(&key, &SIM_COLUMNS), &sim_rows)?,
        json!({ "theta_db": theta_db }),
    );
    Ok(())
}

fn figure3(r: &Resolved, out: &mut Outputs) -> Result<(), CliError> {
    let theta_db = dtdd_ffr::config::linear_to_db(r.scenario.classification_threshold());
    let radius = r.scenario.cell_radius();
    let mut solutions = Vec::new();
    let mut sim_rows = Vec::new();
    for l in FIG3_EDGE_SUBBANDS {
        let cfg = r.scenario.with_ffr(theta_db, l)?;
        solutions.push((l, solve(&cfg)?));
        let report = simulate_cfg(&cfg, &r.file.sim)?;
        for b in &report.bins {
            let mut row = vec![l.to_string()];
            row.extend(cells(&[b.r_bin_center_m, b.mpt_dl, b.mpt_ul]));
            row.push(b.count.to_string());
            sim_rows.push(row);
        }
    }
    let refs: Vec<(usize, &StpSolutionF64)> = solutions.iter().map(|(l, s)| (*l, s)).collect();
    out.add("fig3_analytic.csv", curve_table(&refs, radius)?, json!({ "theta_db": theta_db }));
    out.add(
        "fig3_sim.csv",
        table(&["L", "r_bin_center_m", "mpt_dl", "mpt_ul", "count"], &sim_rows)?,
        json!({ "theta_db": theta_db }),
    );
    Ok(())
}

fn figure4(r: &Resolved, out: &mut Outputs) -> Result<(), CliError> {
    let t = sweep_table(r)?;
    let mut csv = Vec::new();
    t.write_csv(&mut csv)?;
    out.add("fig4_sweep.csv", csv, json!({}));
    out.add("fig4_summary.csv", summary_table(&t)?, json!({}));
    Ok(())
}

fn compare(r: &Resolved, with_sim: bool, out: &mut Outputs) -> Result<(), CliError> {
    let schemes = [("ffr", r.scenario.clone()), ("no_ffr", r.scenario.without_ffr())];
    let mut rows = Vec::new();
    let mut push = |scheme: &str, source: &str, dl: f64, ul: f64| {
        let mut row = vec![scheme.to_string(), source.to_string()];
        row.extend(cells(&[
            dl,
            ul,
            CLUSTERED_MPT.0,
            CLUSTERED_MPT.1,
            gain(dl, CLUSTERED_MPT.0),
            gain(ul, CLUSTERED_MPT.1),
        ]));
        rows.push(row);
    };
    for (name, cfg) in &schemes {
        let sol = solve(cfg)?;
        push(
            name,
            "analytic",
            mpt_average(&sol, Direction::Downlink),
            mpt_average(&sol, Direction::Uplink),
        );
    }
    if with_sim {
        for (name, cfg) in &schemes {
            let rep = simulate_cfg(cfg, &r.file.sim)?;
            push(name, "sim", rep.dl.mpt_user_mean, rep.ul.mpt_user_mean);
            push(name, "sim_pooled", rep.dl.mpt, rep.ul.mpt);
        }
    }
    let header = [
        "scheme",
        "source",
        "mpt_dl",
        "mpt_ul",
        "clustered_dl",
        "clustered_ul",
        "gain_dl_vs_clustered",
        "gain_ul_vs_clustered",
    ];
    out.add("compare.csv", table(&header, &rows)?, json!({ "simulated": with_sim }));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(CliError::Usage(String::new()).exit_code(), 2);
        let e: CliError = dtdd_ffr::Error::InvalidArgument("x".into()).into();
        assert_eq!(e.exit_code(), 1);
        let err = run_from(["dtdd-ffr", "figure", "--config", "nowhere.json", "--id", "9"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = run_from(["dtdd-ffr", "plot", "--config", "x"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
