use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;
use tfqkd_core::channel::expected_rates;
use tfqkd_core::config::validate;
use tfqkd_core::keyrate::evaluate;
use tfqkd_core::montecarlo::{compare, simulate};
use tfqkd_core::optimizer::{optimize, scan, OptimizeOutcome, SearchSpace};
use tfqkd_core::{ChannelPair, KeyRateReport, ProtocolVariant, RunConfig};

use crate::manifest::RunManifest;
use crate::{Cli, Cmd};

const MIN_VERIFY_SAMPLES: u64 = 100_000;
const VERIFY_WIDTH: f64 = 3.0;
const TABLE_TARGETS: &str = include_str!("../data/table2_targets.csv");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] tfqkd_core::Error),
    #[error("{0}")]
    Io(String),
    #[error("verification failed: {0}")]
    Verify(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Core(_) => 2,
            CliError::Io(_) | CliError::Verify(_) => 1,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

pub fn run(cli: Cli) -> CliResult<ExitCode> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {} workers: {e}", cli.jobs)))?;
    pool.install(|| dispatch(&cli))
}

fn dispatch(cli: &Cli) -> CliResult<ExitCode> {
    let config = load_config(cli.config.as_deref(), &cli.overrides.0)?;
    let manifest = |name: &str| RunManifest::new(name, cli.config.clone(), &cli.overrides.0, cli.seed, cli.out.clone());
    match &cli.command {
        Cmd::Rate { variant } => {
            let cfg = with_variant(config, *variant);
            let report = evaluate(&cfg.validate()?)?;
            let mut text = String::new();
            flatten("", &serde_json::to_value(report).expect("report serializes"), &mut text);
            print!("{text}");
            write_json(cli.out.as_deref(), &json!({ "manifest": manifest("rate"), "report": report }))?;
        }
        Cmd::Optimize { variant, restarts, evaluations } => {
            let cfg = with_variant(config, *variant);
            let space = SearchSpace { restarts: *restarts, evaluations_per_restart: *evaluations, ..SearchSpace::default() };
            let outcome = optimize(&cfg.device, &cfg.channel, cfg.variant, &space, cli.seed)?;
            let mut text = String::new();
            flatten("", &serde_json::to_value(outcome).expect("outcome serializes"), &mut text);
            print!("{text}");
            let best = RunConfig { device: cfg.device, channel: outcome.best.channel, source: outcome.best.params, variant: cfg.variant };
            println!("\n# optimized configuration\n{}", best.to_text());
            write_json(cli.out.as_deref(), &json!({ "manifest": manifest("optimize"), "outcome": outcome }))?;
        }
        Cmd::Scan { delta_km, la_from, la_to, la_step, variant } => {
            let grid = distance_grid(*la_from, *la_to, *la_step)?;
            if !delta_km.is_finite() || la_from + delta_km < 0.0 {
                return Err(CliError::Config(format!("delta-km = {delta_km} gives a negative Bob length")));
            }
            let variants = if variant.is_empty() { ProtocolVariant::ALL.to_vec() } else { variant.clone() };
            let space = SearchSpace::default();
            let curves: Vec<Vec<OptimizeOutcome>> = variants
                .par_iter()
                .map(|&v| scan(&config.device, v, *delta_km, &grid, &space, cli.seed))
                .collect::<Result<_, _>>()?;
            let mut csv = manifest("scan").comment_lines();
            csv.push_str("la_km,lb_km,variant,rate,key_length,n1,e1ph,ez,plob,tgw\n");
            for i in 0..grid.len() {
                for curve in &curves {
                    csv.push_str(&report_row(&curve[i].best));
                    csv.push('\n');
                }
            }
            emit(cli.out.as_deref(), &csv)?;
        }
        Cmd::Table2 => {
            let cells = table_targets()?;
            let space = SearchSpace::default();
            let device = config.device;
            let outcomes: Vec<OptimizeOutcome> = cells
                .par_iter()
                .map(|c| optimize(&device, &ChannelPair::new(c.la, c.lb), c.variant, &space, cli.seed))
                .collect::<Result<_, _>>()?;
            let mut csv = manifest("table2").comment_lines();
            csv.push_str("la_km,lb_km,variant,rate,target,relative_deviation,key_length,n1,e1ph,ez,plob,tgw\n");
            for (cell, outcome) in cells.iter().zip(&outcomes) {
                let r = &outcome.best;
                let dev = relative_deviation(r.rate_per_window, cell.target);
                writeln!(
                    csv,
                    "{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                    cell.la, cell.lb, cell.variant, r.rate_per_window, cell.target, dev, r.key_length, r.n1, r.e1ph, r.e_z, r.plob, r.tgw
                )
                .expect("writing to a String");
            }
            emit(cli.out.as_deref(), &csv)?;
        }
        Cmd::Verify { samples, variant, fault_dark_rate } => {
            if *samples < MIN_VERIFY_SAMPLES {
                return Err(CliError::Config(format!("samples = {samples} is below the minimum of {MIN_VERIFY_SAMPLES}")));
            }
            let cfg = with_variant(config, *variant).validate()?;
            let mut analytic_device = *cfg.device();
            if let Some(factor) = fault_dark_rate {
                analytic_device.dark_rate *= factor;
            }
            let analytic_cfg = validate(analytic_device, *cfg.channel(), *cfg.source(), cfg.variant())?;
            let analytic = expected_rates(&analytic_cfg)?;
            let tallies = simulate(&cfg, *samples, cli.seed)?;
            let gates = compare(&analytic, &tallies, VERIFY_WIDTH);
            for g in &gates {
                println!(
                    "{} {} analytic={:e} empirical={:e} se={:e} z={:.3}",
                    if g.passed { "PASS" } else { "FAIL" },
                    g.quantity,
                    g.analytic,
                    g.empirical,
                    g.standard_error,
                    g.z_score()
                );
            }
            let failed: Vec<&str> = gates.iter().filter(|g| !g.passed).map(|g| g.quantity).collect();
            if !failed.is_empty() {
                return Err(CliError::Verify(failed.join(", ")));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn load_config(path: Option<&Path>, overrides: &[(String, String)]) -> CliResult<RunConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read config file {}: {e}", p.display())))?;
            RunConfig::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    for (name, value) in overrides {
        cfg.set(name, value).map_err(|e| CliError::Config(format!("--{name}: {e}")))?;
    }
    validate_ranges(&cfg)?;
    Ok(cfg)
}

/// Range checks that do not depend on the variant, so that bad overrides are
/// reported even by commands that only read the device parameters.
fn validate_ranges(cfg: &RunConfig) -> CliResult<()> {
    cfg.device.check()?;
    cfg.channel.check()?;
    let s = &cfg.source;
    for (name, v) in [
        ("send_a", s.send_a),
        ("send_b", s.send_b),
        ("pz_a", s.pz_a),
        ("pz_b", s.pz_b),
        ("px_a0", s.px_a0),
        ("px_a1", s.px_a1),
        ("px_a2", s.px_a2),
        ("px_b0", s.px_b0),
        ("px_b1", s.px_b1),
        ("px_b2", s.px_b2),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(CliError::Config(format!("probability out of range: {name} = {v} not in [0, 1]")));
        }
    }
    Ok(())
}

fn with_variant(mut cfg: RunConfig, variant: Option<ProtocolVariant>) -> RunConfig {
    if let Some(v) = variant {
        cfg.variant = v;
    }
    cfg
}

fn distance_grid(from: f64, to: f64, step: f64) -> CliResult<Vec<f64>> {
    if !(from.is_finite() && to.is_finite() && step.is_finite()) || from < 0.0 {
        return Err(CliError::Config(format!("bad distance grid: from {from} to {to} step {step}")));
    }
    if from > to {
        return Err(CliError::Config(format!("empty distance grid: la-from {from} exceeds la-to {to}")));
    }
    if !(step > 0.0) {
        return Err(CliError::Config(format!("la-step must be positive, got {step}")));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| from + i as f64 * step).collect())
}

fn report_row(r: &KeyRateReport) -> String {
    format!(
        "{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
        r.channel.len_a, r.channel.len_b, r.variant, r.rate_per_window, r.key_length, r.n1, r.e1ph, r.e_z, r.plob, r.tgw
    )
}

fn relative_deviation(rate: f64, target: f64) -> f64 {
    if target == 0.0 {
        if rate == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (rate - target) / target
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    la: f64,
    lb: f64,
    variant: ProtocolVariant,
    target: f64,
}

fn table_targets() -> CliResult<Vec<Cell>> {
    let bad = |line: &str| CliError::Io(format!("malformed target row `{line}`"));
    TABLE_TARGETS
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .skip(1)
        .map(|line| {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 4 {
                return Err(bad(line));
            }
            Ok(Cell {
                la: f[0].parse().map_err(|_| bad(line))?,
                lb: f[1].parse().map_err(|_| bad(line))?,
                variant: f[2].parse().map_err(|_| bad(line))?,
                target: f[3].parse().map_err(|_| bad(line))?,
            })
        })
        .collect()
}

fn flatten(prefix: &str, v: &Value, out: &mut String) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        Value::Null => writeln!(out, "{prefix} = inf").expect("writing to a String"),
        other => writeln!(out, "{prefix} = {other}").expect("writing to a String"),
    }
}

fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> CliResult<()> {
    let Some(path) = out else { return Ok(()) };
    let text = serde_json::to_string_pretty(value).expect("values serialize");
    write_file(path, &text)
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", PathBuf::from(path).display())))
}
