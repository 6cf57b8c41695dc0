//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime refusal or I/O failure,
//! 3 verification failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::gas::{run_paired, saturation_time, significance_time, GasState, Pairing, RunConfig, StepDiagnostics};
use crate::kinetics::{self, KineticParams};
use crate::maps::{CollisionModel, PhasePoint, TangentVector};
use crate::output::{
    fmt_f64, fmt_opt, read_csv, resolve_out_dir, write_csv, write_json, RunManifest, Summary, SPECTRUM_COLUMNS,
    STATES_COLUMNS, TRAJECTORY_COLUMNS, TREE_COLUMNS,
};
use crate::spectral::{
    default_window, delta_series_from, exponent_estimate, fit_growth, modes_up_to, ExponentEstimate, GrowthFit,
    SpectrumSeries,
};
use crate::tree::{run_tree, significance_stage, twin_check, TreeAggregate, TreeOptions, DEFAULT_MAX_STAGES};
use crate::verify::{run_checks, VerifyOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "arnold-gas", version, about = "Arnold gas simulator and analysis toolkit")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Kinetic-theory estimates (particle count, mean free path, speed, time, rate).
    Params(ParamsArgs),
    /// Expand the staged collision tree and report dilation factors.
    Tree(TreeArgs),
    /// Simulate the N-particle gas and its Fourier density response.
    Gas(GasArgs),
    /// Recompute the Fourier analysis from a saved states.csv.
    Spectrum(SpectrumArgs),
    /// Run the release checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct ParamsArgs {
    /// Temperature, K.
    #[arg(long, default_value_t = kinetics::REFERENCE_TEMPERATURE)]
    pub temperature: f64,
    /// Pressure, N/m^2.
    #[arg(long, default_value_t = kinetics::REFERENCE_PRESSURE)]
    pub pressure: f64,
    /// Container side, m.
    #[arg(long, default_value_t = kinetics::REFERENCE_LENGTH)]
    pub length: f64,
    /// Molecular diameter, m (default gives l_m = 2e-7 m at 300 K, 1e5 Pa).
    #[arg(long)]
    pub diameter: Option<f64>,
    /// Molecular mass, kg (default gives v_m = 400 m/s at 300 K).
    #[arg(long)]
    pub mass: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TreeArgs {
    #[arg(long)]
    pub stages: u32,
    #[arg(long, default_value_t = 1e-9)]
    pub epsilon: f64,
    /// Seed for partner states in the twin check.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report closed-form aggregates only; no leaf file.
    #[arg(long)]
    pub aggregate_only: bool,
    /// Largest stage count whose leaves may be stored.
    #[arg(long, default_value_t = DEFAULT_MAX_STAGES)]
    pub max_stages: u32,
    /// Stop doubling once the subsystem would exceed this many particles.
    #[arg(long)]
    pub reservoir: Option<u64>,
    /// Compare leaves against a fully simulated pair of trajectories.
    #[arg(long)]
    pub twin_check: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PairingArg {
    Random,
    Tree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct GasArgs {
    #[arg(long)]
    pub particles: usize,
    #[arg(long)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = PairingArg::Random)]
    pub pairing: PairingArg,
    /// Analyse all nonzero modes with max(|m1|, |m2|) <= this.
    #[arg(long, default_value_t = 4)]
    pub modes: i32,
    #[arg(long, value_enum, default_value_t = Switch::Off)]
    pub twin: Switch,
    /// Largest particle count allowed in twin mode.
    #[arg(long, default_value_t = crate::gas::DEFAULT_TWIN_CAP)]
    pub twin_cap: usize,
    /// Also write every particle state to states.csv.
    #[arg(long)]
    pub save_states: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// A states.csv written by `gas --save-states`.
    #[arg(long)]
    pub states: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub modes: i32,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Skip the ensemble checks.
    #[arg(long)]
    pub quick: bool,
    /// Test hook: force the named check to fail.
    #[arg(long, hide = true)]
    pub perturb: Option<String>,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return EXIT_RUNTIME;
        }
    };
    let result = pool.install(|| match cli.command {
        Command::Params(a) => cmd_params(&a),
        Command::Tree(a) => cmd_tree(&a),
        Command::Gas(a) => cmd_gas(&a),
        Command::Spectrum(a) => cmd_spectrum(&a),
        Command::Verify(a) => cmd_verify(&a),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidInput(_) | Error::NotHyperbolic { .. } | Error::NotUnimodular { .. } => EXIT_USAGE,
                _ => EXIT_RUNTIME,
            }
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

pub fn cmd_params(a: &ParamsArgs) -> Result<i32> {
    let params = KineticParams {
        temperature: a.temperature,
        pressure: a.pressure,
        length: a.length,
        diameter: a.diameter.unwrap_or_else(kinetics::default_diameter),
        mass: a.mass.unwrap_or_else(kinetics::default_mass),
    };
    let derived = kinetics::derive(&params)?;
    print_json(&json!({ "inputs": params, "derived": derived }))?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct TreeResults {
    stages: u32,
    stages_completed: u32,
    epsilon: f64,
    leaves: Option<usize>,
    geometric_mean_dilation: f64,
    arithmetic_mean_dilation: f64,
    gas_dilation: f64,
    gas_bound: f64,
    bound_holds: bool,
    closed_form: TreeAggregate,
    saturated_at: Option<u32>,
    twin_check: Option<crate::tree::TwinCheck>,
}

pub fn cmd_tree(a: &TreeArgs) -> Result<i32> {
    let model = CollisionModel::cat();
    let out_dir = resolve_out_dir(a.out.clone());
    let manifest = RunManifest::new(
        "tree",
        Some(a.seed),
        model.m,
        json!({
            "stages": a.stages,
            "epsilon": a.epsilon,
            "direction": model.xi_plus,
            "aggregate_only": a.aggregate_only,
            "max_stages": a.max_stages,
            "reservoir": a.reservoir,
            "twin_check": a.twin_check,
        }),
    );
    let closed = TreeAggregate::closed_form(&model, a.stages);
    let mut outputs = BTreeMap::new();

    let results = if a.aggregate_only {
        if !(a.epsilon > 0.0 && a.epsilon.is_finite()) {
            return Err(Error::InvalidInput(format!("epsilon must be positive, got {}", a.epsilon)));
        }
        TreeResults {
            stages: a.stages,
            stages_completed: a.stages,
            epsilon: a.epsilon,
            leaves: None,
            geometric_mean_dilation: closed.geometric_mean,
            arithmetic_mean_dilation: closed.arithmetic_mean,
            gas_dilation: closed.gas_dilation,
            gas_bound: closed.gas_bound,
            bound_holds: closed.bound_holds(),
            closed_form: closed,
            saturated_at: None,
            twin_check: None,
        }
    } else {
        let opts = TreeOptions {
            max_stages: a.max_stages,
            reservoir_size: a.reservoir,
        };
        let run = run_tree(&model, a.stages, a.epsilon, model.xi_plus, &opts)?;
        let stage = run.stages_completed;
        let rows = run.leaves.iter().map(|l| {
            vec![
                stage.to_string(),
                l.label.n1.to_string(),
                l.label.n2.to_string(),
                fmt_f64(l.displacement.dx),
                fmt_f64(l.displacement.dp),
                fmt_f64(l.displacement.norm()),
            ]
        });
        let digest = write_csv(&out_dir.join("leaves.csv"), &manifest, &TREE_COLUMNS, rows)?;
        outputs.insert("leaves.csv".to_string(), digest);
        let means = run.mean_dilations();
        let gas = run.gas_dilation();
        let bound = 2f64.powf(0.5 * stage as f64);
        TreeResults {
            stages: a.stages,
            stages_completed: stage,
            epsilon: a.epsilon,
            leaves: Some(run.leaves.len()),
            geometric_mean_dilation: means.geometric,
            arithmetic_mean_dilation: means.arithmetic,
            gas_dilation: gas,
            gas_bound: bound,
            bound_holds: gas >= bound,
            closed_form: closed,
            saturated_at: run.saturated_at,
            twin_check: a.twin_check.then(|| twin_check(&model, &run, a.seed)),
        }
    };
    let summary = Summary {
        manifest,
        outputs,
        results,
    };
    write_json(&out_dir.join("tree_summary.json"), &summary)?;
    print_json(&summary)?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct ModeSummary {
    m1: i32,
    m2: i32,
    fit: Option<GrowthFit>,
    twin_fit: Option<GrowthFit>,
    exponent: Option<ExponentEstimate>,
}

#[derive(Debug, Serialize)]
struct SpectrumResults {
    n_particles: usize,
    steps: usize,
    saturation_time: Option<usize>,
    fit_window: Option<(usize, usize)>,
    modes: Vec<ModeSummary>,
}

/// Series and per-mode summaries for a sequence of states.
fn analyse_spectrum(
    model: &CollisionModel,
    states: &[&GasState],
    twins: Option<&[&[PhasePoint]]>,
    max_mode: i32,
    saturation: Option<usize>,
) -> Result<(Vec<SpectrumSeries>, SpectrumResults)> {
    let n = states.first().map_or(0, |s| s.len());
    let steps = states.len().saturating_sub(1);
    let window = default_window(n, saturation, steps);
    let window = (window.1 >= window.0 + 3).then_some(window);
    let modes = modes_up_to(max_mode.max(0));
    let series: Vec<SpectrumSeries> = modes
        .par_iter()
        .map(|&m| delta_series_from(states, twins, m))
        .collect::<Result<_>>()?;
    let summaries = series
        .iter()
        .map(|s| ModeSummary {
            m1: s.mode.m1,
            m2: s.mode.m2,
            fit: window.and_then(|w| fit_growth(&s.linear_deltas, w).ok()),
            twin_fit: window.and_then(|w| s.twin_deltas.as_ref().and_then(|d| fit_growth(d, w).ok())),
            exponent: window.and_then(|w| exponent_estimate(states[w.1], s.mode, model, w.1).ok()),
        })
        .collect();
    Ok((
        series,
        SpectrumResults {
            n_particles: n,
            steps,
            saturation_time: saturation,
            fit_window: window,
            modes: summaries,
        },
    ))
}

fn spectrum_rows(series: &[SpectrumSeries], steps: usize) -> Vec<Vec<String>> {
    let mut rows = Vec::with_capacity(series.len() * (steps + 1));
    for t in 0..=steps {
        for s in series {
            let v = s.values[t];
            rows.push(vec![
                t.to_string(),
                s.mode.m1.to_string(),
                s.mode.m2.to_string(),
                fmt_f64(v.re),
                fmt_f64(v.im),
                fmt_opt(s.twin_deltas.as_ref().map(|d| d[t].norm())),
                fmt_f64(s.linear_deltas[t].norm()),
            ]);
        }
    }
    rows
}

fn trajectory_row(d: &StepDiagnostics) -> Vec<String> {
    vec![
        d.t.to_string(),
        d.affected.to_string(),
        fmt_f64(d.norm),
        fmt_f64(d.max_disp),
        fmt_f64(d.median_disp),
        fmt_opt(d.twin_distance),
        fmt_opt(d.twin_discrepancy),
    ]
}

#[derive(Debug, Serialize)]
struct GasResults {
    significance_time: Option<usize>,
    significance_seconds: Option<f64>,
    saturation_time: Option<usize>,
    ideal_saturation_stage: u32,
    final_diagnostics: StepDiagnostics,
    spectrum: SpectrumResults,
}

pub fn cmd_gas(a: &GasArgs) -> Result<i32> {
    let model = CollisionModel::cat();
    let out_dir = resolve_out_dir(a.out.clone());
    if a.particles % 2 == 1 {
        eprintln!("warning: odd particle count; one particle sits out each step");
    }
    let pairing = match a.pairing {
        PairingArg::Random => Pairing::Random,
        PairingArg::Tree => Pairing::TreeFaithful,
    };
    let mut cfg = RunConfig::new(a.particles, a.steps, a.seed, pairing)
        .with_epsilon(a.epsilon)
        .with_twin(a.twin == Switch::On);
    cfg.twin_cap = a.twin_cap;
    let manifest = RunManifest::new(
        "gas",
        Some(a.seed),
        model.m,
        json!({
            "n_particles": cfg.n_particles,
            "steps": cfg.steps,
            "epsilon": cfg.epsilon,
            "direction": model.xi_plus,
            "pairing": cfg.pairing,
            "twin": cfg.twin,
            "twin_cap": cfg.twin_cap,
            "modes": a.modes,
        }),
    );

    let traj = run_paired(&cfg, &model)?;
    let diags = traj.diagnostics();
    let mut outputs = BTreeMap::new();
    outputs.insert(
        "trajectory.csv".to_string(),
        write_csv(
            &out_dir.join("trajectory.csv"),
            &manifest,
            &TRAJECTORY_COLUMNS,
            diags.iter().map(trajectory_row),
        )?,
    );

    let states: Vec<&GasState> = traj.frames.iter().map(|f| &f.state).collect();
    let twins: Option<Vec<&[PhasePoint]>> = traj.frames.iter().map(|f| f.twin.as_deref()).collect();
    let saturation = saturation_time(&diags, cfg.n_particles);
    let (series, spectrum) = analyse_spectrum(&model, &states, twins.as_deref(), a.modes, saturation)?;
    outputs.insert(
        "spectrum.csv".to_string(),
        write_csv(
            &out_dir.join("spectrum.csv"),
            &manifest,
            &SPECTRUM_COLUMNS,
            spectrum_rows(&series, cfg.steps),
        )?,
    );

    if a.save_states {
        let rows = traj.frames.iter().flat_map(|f| {
            let s = &f.state;
            (0..s.len()).map(move |i| {
                let twin = f.twin.as_ref().map(|tw| tw[i]);
                vec![
                    s.t.to_string(),
                    i.to_string(),
                    fmt_f64(s.points[i].x()),
                    fmt_f64(s.points[i].p()),
                    fmt_f64(s.tangents[i].dx),
                    fmt_f64(s.tangents[i].dp),
                    u8::from(s.affected[i]).to_string(),
                    s.path_counts[i].n1.to_string(),
                    s.path_counts[i].n2.to_string(),
                    fmt_opt(twin.map(|p| p.x())),
                    fmt_opt(twin.map(|p| p.p())),
                ]
            })
        });
        outputs.insert(
            "states.csv".to_string(),
            write_csv(&out_dir.join("states.csv"), &manifest, &STATES_COLUMNS, rows)?,
        );
    }

    let significance = significance_time(&diags, cfg.epsilon);
    let kin = kinetics::derive(&KineticParams::default())?;
    let results = GasResults {
        significance_time: significance,
        significance_seconds: significance.map(|t| kinetics::steps_to_seconds(t as u64, &kin)),
        saturation_time: saturation,
        ideal_saturation_stage: significance_stage(cfg.n_particles as u64, &model)?.saturation_stage,
        final_diagnostics: *diags.last().expect("at least the initial frame"),
        spectrum,
    };
    let summary = Summary {
        manifest,
        outputs,
        results,
    };
    write_json(&out_dir.join("gas_summary.json"), &summary)?;
    print_json(&json!({
        "significance_time": summary.results.significance_time,
        "saturation_time": summary.results.saturation_time,
        "out_dir": out_dir,
    }))?;
    Ok(EXIT_OK)
}

/// Manifest, per-step states and per-step twin points of a states.csv file.
type LoadedStates = (RunManifest, Vec<GasState>, Option<Vec<Vec<PhasePoint>>>);

/// Rebuilds per-step states (and twin points, when present) from states.csv.
fn load_states(path: &Path) -> Result<LoadedStates> {
    let (manifest, records) = read_csv(path)?;
    let bad = |what: &str| Error::InvalidInput(format!("{}: malformed {what}", path.display()));
    let mut states: Vec<GasState> = Vec::new();
    let mut twins: Vec<Vec<PhasePoint>> = Vec::new();
    let mut has_twin = true;
    for rec in &records {
        if rec.len() != STATES_COLUMNS.len() {
            return Err(bad("row length"));
        }
        let int = |k: usize| rec[k].parse::<usize>().map_err(|_| bad(STATES_COLUMNS[k]));
        let real = |k: usize| rec[k].parse::<f64>().map_err(|_| bad(STATES_COLUMNS[k]));
        let (t, i) = (int(0)?, int(1)?);
        if t == states.len() {
            states.push(GasState {
                points: Vec::new(),
                tangents: Vec::new(),
                affected: Vec::new(),
                path_counts: Vec::new(),
                t,
            });
            twins.push(Vec::new());
        }
        let s = states.last_mut().filter(|s| s.t == t && s.len() == i).ok_or_else(|| bad("row order"))?;
        s.points.push(PhasePoint::new(real(2)?, real(3)?));
        s.tangents.push(TangentVector::new(real(4)?, real(5)?));
        s.affected.push(int(6)? != 0);
        s.path_counts.push(crate::tree::PathLabel::new(int(7)? as u32, int(8)? as u32));
        if rec[9].is_empty() {
            has_twin = false;
        } else if has_twin {
            twins.last_mut().expect("pushed with state").push(PhasePoint::new(real(9)?, real(10)?));
        }
    }
    if states.is_empty() {
        return Err(bad("file: no rows"));
    }
    Ok((manifest, states, has_twin.then_some(twins)))
}

pub fn cmd_spectrum(a: &SpectrumArgs) -> Result<i32> {
    let (source, states, twins) = load_states(&a.states)?;
    let model = crate::maps::spectral_decompose(source.model)?;
    let out_dir = resolve_out_dir(a.out.clone());
    let manifest = RunManifest::new(
        "spectrum",
        source.seed,
        model.m,
        json!({
            "source": source,
            "modes": a.modes,
        }),
    );
    let n = states[0].len();
    let saturation = states.iter().find(|s| s.affected_count() >= n).map(|s| s.t);
    let refs: Vec<&GasState> = states.iter().collect();
    let twin_refs: Option<Vec<&[PhasePoint]>> = twins.as_ref().map(|t| t.iter().map(Vec::as_slice).collect());
    let (series, results) = analyse_spectrum(&model, &refs, twin_refs.as_deref(), a.modes, saturation)?;
    let mut outputs = BTreeMap::new();
    outputs.insert(
        "spectrum.csv".to_string(),
        write_csv(
            &out_dir.join("spectrum.csv"),
            &manifest,
            &SPECTRUM_COLUMNS,
            spectrum_rows(&series, states.len() - 1),
        )?,
    );
    let summary = Summary {
        manifest,
        outputs,
        results,
    };
    write_json(&out_dir.join("spectrum_summary.json"), &summary)?;
    print_json(&json!({ "out_dir": out_dir, "modes": summary.results.modes.len() }))?;
    Ok(EXIT_OK)
}

pub fn cmd_verify(a: &VerifyArgs) -> Result<i32> {
    let start = std::time::Instant::now();
    let checks = run_checks(&VerifyOptions {
        quick: a.quick,
        perturb: a.perturb.clone(),
    })?;
    for c in &checks {
        println!("{}", c.line());
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        println!("all {} checks passed in {:.1}s", checks.len(), start.elapsed().as_secs_f64());
        Ok(EXIT_OK)
    } else {
        println!("FAILED: {}", failed.join(", "));
        Ok(EXIT_VERIFY)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["arnold-gas", "params", "--temperature", "0"]), EXIT_USAGE);
        assert_eq!(run(["arnold-gas", "nonsense"]), EXIT_USAGE);
        assert_eq!(run(["arnold-gas", "tree"]), EXIT_USAGE);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run(["arnold-gas", "--help"]), EXIT_OK);
    }
}
