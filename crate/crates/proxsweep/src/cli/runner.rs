//! Execution of parsed scenarios: integrate, certify, export.
//!
//! Everything downstream of the seed is deterministic: random draws happen
//! in check-list order from one generator, floats are written at full
//! precision, and report fields serialize in declaration order. Identical
//! (file, seed) pairs therefore reproduce byte-identical outputs.

use super::{invalid, CheckSpec, CliError, LoadedScenario, OutputSpec, ScenarioDoc};
use crate::analysis::{
    check_difference_quotient_limsup, check_liminf_lower, check_right_continuity_v,
    check_right_derivative, check_two_solution_bound, check_velocity_decay_bound,
    check_velocity_field_bound, convex_minimization_check, default_check_constant,
    dissipation_integral, energy_identity_residual, event_indices, BoundCheck, CheckConfig,
    VerificationReport,
};
use crate::fields::Field;
use crate::integrator::{integrate, Scenario, Trajectory};
use crate::proxsets::certify::sample_in_box;
use crate::proxsets::ProxSet;
use crate::tolerances::STOP_TOL;
use crate::vector::Vector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Halo (in grid steps) kept between a probe window and the nearest
/// active-set change when picking right-derivative probe times.
const EVENT_HALO: usize = 16;
/// Indices excluded around each event by the velocity continuity check.
const CONTINUITY_WINDOW: usize = 1;
/// Nodes inspected by the early-dip check.
const LIMINF_WINDOW: usize = 5;
/// Largest difference-quotient span, in steps.
const QUOTIENT_WINDOW: usize = 8;
/// Comparison points drawn for the minimization check.
const MINIMIZATION_SAMPLES: usize = 16;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Subset of checks to run, by name; `None` runs the file's list.
    pub checks: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub quiet: bool,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: VerificationReport,
    pub trajectory_path: PathBuf,
    pub report_path: PathBuf,
}

#[derive(Debug)]
pub struct SweepRow {
    pub value: String,
    pub ran: bool,
    pub overall_pass: bool,
    pub max_residual: f64,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub summary_path: PathBuf,
    pub all_pass: bool,
}

/// Scenario constants after applying `[constants]` overrides to the
/// trajectory-derived default.
struct Resolved {
    c_energy: f64,
    c_dissipation: f64,
    c_check: f64,
    l_v: f64,
    stop_tol: f64,
}

impl Resolved {
    fn new(doc: &ScenarioDoc, traj: &Trajectory, field: &Field) -> Self {
        let fallback = default_check_constant(traj, field);
        let c = &doc.constants;
        Self {
            c_energy: c.c_energy.unwrap_or(fallback),
            c_dissipation: c.c_dissipation.unwrap_or(fallback),
            c_check: c.c_check.unwrap_or(fallback),
            l_v: c.l_v.unwrap_or(fallback),
            stop_tol: c.stop_tol.unwrap_or(STOP_TOL),
        }
    }
}

fn check_error(name: &str, message: impl ToString) -> CliError {
    CliError::Check { name: name.to_string(), message: message.to_string() }
}

fn margin(c: &BoundCheck) -> f64 {
    c.measured - (c.bound * (1.0 + c.slack) + c.abs_tol)
}

fn cfg_for(spec: &CheckSpec) -> CheckConfig {
    let defaults = CheckConfig::default();
    CheckConfig {
        slack: spec.slack.unwrap_or(defaults.slack),
        abs_tol: spec.abs_tol.unwrap_or(defaults.abs_tol),
    }
}

/// A nearby feasible start for the comparison trajectory, shrinking the
/// perturbation until projection and validation both accept it.
fn feasible_neighbor(
    scenario: &Scenario,
    rng: &mut ChaCha8Rng,
) -> Result<Scenario, CliError> {
    use rand::Rng;
    let x0 = scenario.x0();
    let dim = x0.dim();
    let mut scale =
        0.1 * (1.0 + x0.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs())));
    for _ in 0..32 {
        let u = Vector::new((0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect())
            .expect("bounded draws are finite");
        let candidate = x0.add_scaled(scale, &u);
        let Ok(y0) = scenario.set().project(&candidate) else {
            scale *= 0.7;
            continue;
        };
        match Scenario::new(
            scenario.set().clone(),
            scenario.field().clone(),
            y0,
            scenario.horizon(),
            scenario.step(),
        ) {
            Ok(s) => return Ok(s),
            Err(_) => scale *= 0.7,
        }
    }
    Err(check_error("two_solution", "could not draw a feasible comparison start"))
}

/// Feasible comparison points around the start, by projecting box samples.
fn feasible_samples(
    set: &ProxSet,
    x0: &Vector,
    rng: &mut ChaCha8Rng,
    count: usize,
) -> Vec<Vector> {
    let reach = 2.0 * (1.0 + x0.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let lo = x0.add_scaled(-reach, &Vector::new(vec![1.0; x0.dim()]).unwrap());
    let hi = x0.add_scaled(reach, &Vector::new(vec![1.0; x0.dim()]).unwrap());
    let mut out = Vec::with_capacity(count);
    for _ in 0..count * 16 {
        if out.len() == count {
            break;
        }
        let s = sample_in_box(rng, &lo, &hi);
        if let Ok(p) = set.project(&s) {
            out.push(p);
        }
    }
    out
}

/// Worst-margin right-derivative probe over interior times clear of events.
fn run_right_derivative(
    scenario: &Scenario,
    c_check: f64,
    cfg: &CheckConfig,
) -> Result<BoundCheck, CliError> {
    let name = "right_derivative";
    let refined = scenario
        .with_step(scenario.step() / 4.0)
        .map_err(|e| check_error(name, e))?;
    let traj = integrate(&refined)
        .map_err(|e| CliError::Integration { message: e.to_string() })?;
    let events = event_indices(&traj);
    let nodes = traj.n_nodes();
    let mut worst: Option<BoundCheck> = None;
    for tenth in 1..=9usize {
        let k = tenth * (nodes - 1) / 10;
        if k + QUOTIENT_WINDOW >= nodes {
            continue;
        }
        let clear = !events
            .iter()
            .any(|&e| e + EVENT_HALO >= k && e <= k + QUOTIENT_WINDOW + EVENT_HALO);
        if !clear {
            continue;
        }
        let t = k as f64 * traj.step();
        let check =
            check_right_derivative(&traj, scenario.set(), scenario.field(), t, c_check, cfg)
                .map_err(|e| check_error(name, e))?;
        if worst.as_ref().is_none_or(|w| margin(&check) > margin(w)) {
            worst = Some(check);
        }
    }
    worst.ok_or_else(|| {
        check_error(name, "no probe time is clear of active-set changes")
    })
}

fn run_check(
    spec: &CheckSpec,
    scenario: &Scenario,
    traj: &Trajectory,
    constants: &Resolved,
    rng: &mut ChaCha8Rng,
    quiet: bool,
) -> Result<Vec<BoundCheck>, CliError> {
    let cfg = cfg_for(spec);
    let set = scenario.set();
    let field = scenario.field();
    match spec.name.as_str() {
        "velocity_field_bound" => Ok(vec![check_velocity_field_bound(traj, field, &cfg)]),
        "two_solution" => {
            let partner = feasible_neighbor(scenario, rng)?;
            let partner_traj = integrate(&partner)
                .map_err(|e| CliError::Integration { message: e.to_string() })?;
            let check =
                check_two_solution_bound(traj, &partner_traj, field, set.prox_r(), &cfg)
                    .map_err(|e| check_error(&spec.name, e))?;
            Ok(vec![check])
        }
        "velocity_decay" => {
            Ok(vec![check_velocity_decay_bound(traj, field, set.prox_r(), &cfg)])
        }
        "right_derivative" => Ok(vec![run_right_derivative(scenario, constants.c_check, &cfg)?]),
        "right_continuity" => {
            let (check, events) =
                check_right_continuity_v(traj, CONTINUITY_WINDOW, constants.l_v, &cfg);
            if !quiet && !events.is_empty() {
                let shown: Vec<String> =
                    events.iter().take(8).map(|e| e.to_string()).collect();
                let suffix = if events.len() > 8 { ", ..." } else { "" };
                println!(
                    "note: {} active-set change(s) at step indices [{}{}]",
                    events.len(),
                    shown.join(", "),
                    suffix
                );
            }
            Ok(vec![check])
        }
        "liminf_lower" => {
            Ok(vec![check_liminf_lower(traj, LIMINF_WINDOW, constants.c_check, &cfg)])
        }
        "difference_quotient" => {
            Ok(vec![check_difference_quotient_limsup(traj, QUOTIENT_WINDOW, &cfg)])
        }
        "energy_identity" => energy_identity_residual(traj, field, constants.c_energy, &cfg)
            .map_err(|e| check_error(&spec.name, e)),
        "dissipation" => {
            let check = dissipation_integral(
                traj,
                field,
                constants.c_dissipation,
                constants.stop_tol,
                &cfg,
            )
            .map_err(|e| check_error(&spec.name, e))?;
            Ok(vec![check])
        }
        "convex_minimization" => {
            let samples = feasible_samples(set, scenario.x0(), rng, MINIMIZATION_SAMPLES);
            if samples.len() < 4 {
                return Err(check_error(&spec.name, "could not draw comparison points"));
            }
            let check = convex_minimization_check(traj, field, set, &samples, &cfg)
                .map_err(|e| check_error(&spec.name, e))?;
            Ok(vec![check])
        }
        other => Err(check_error(other, "not a known check")),
    }
}

fn write_trajectory_csv(traj: &Trajectory, path: &Path) -> Result<(), CliError> {
    let dim = traj.state(0).dim();
    let mut text = String::from("t");
    for i in 0..dim {
        write!(text, ",x_{i}").unwrap();
    }
    for i in 0..dim {
        write!(text, ",v_{i}").unwrap();
    }
    text.push_str(",active_set_size\n");
    let sizes = traj.active_set_sizes();
    for (k, (t, size)) in traj.times().iter().zip(&sizes).enumerate() {
        write!(text, "{t:.16e}").unwrap();
        for v in traj.state(k).as_slice() {
            write!(text, ",{v:.16e}").unwrap();
        }
        for v in traj.right_velocities()[k].as_slice() {
            write!(text, ",{v:.16e}").unwrap();
        }
        writeln!(text, ",{size}").unwrap();
    }
    std::fs::write(path, text)
        .map_err(|source| CliError::Write { path: path.to_path_buf(), source })
}

fn write_report(report: &VerificationReport, path: &Path) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(report).expect("report is plain data");
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|source| CliError::Write { path: path.to_path_buf(), source })
}

/// Which checks to execute: the flag subset when given, otherwise the file
/// list. Flag names not configured in the file run with default allowances.
fn effective_checks(doc: &ScenarioDoc, opts: &RunOptions, origin: &Path) -> Result<Vec<CheckSpec>, CliError> {
    match &opts.checks {
        None => Ok(doc.checks.clone()),
        Some(names) => {
            let mut out = Vec::new();
            for name in names {
                if !super::KNOWN_CHECKS.contains(&name.as_str()) {
                    return Err(invalid(
                        origin,
                        format!(
                            "unknown check '{name}' in --checks; expected one of {}",
                            super::KNOWN_CHECKS.join(", ")
                        ),
                    ));
                }
                match doc.checks.iter().find(|c| &c.name == name) {
                    Some(c) => out.push(c.clone()),
                    None => out.push(CheckSpec { name: name.clone(), slack: None, abs_tol: None }),
                }
            }
            Ok(out)
        }
    }
}

/// Integrate a loaded scenario, run its checks, and write both artifacts
/// into `out_dir`.
pub fn run_loaded(
    loaded: &LoadedScenario,
    opts: &RunOptions,
    origin: &Path,
) -> Result<RunOutcome, CliError> {
    let checks = effective_checks(&loaded.doc, opts, origin)?;
    let seed = opts.seed.or(loaded.doc.seed).unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let traj = integrate(&loaded.scenario)
        .map_err(|e| CliError::Integration { message: e.to_string() })?;
    let constants = Resolved::new(&loaded.doc, &traj, loaded.scenario.field());

    let mut results = Vec::new();
    for spec in &checks {
        results.extend(run_check(
            spec,
            &loaded.scenario,
            &traj,
            &constants,
            &mut rng,
            opts.quiet,
        )?);
    }
    let report = VerificationReport::new(loaded.digest.clone(), results);

    std::fs::create_dir_all(&opts.out_dir)
        .map_err(|source| CliError::Write { path: opts.out_dir.clone(), source })?;
    let output: &OutputSpec = &loaded.doc.output;
    let trajectory_path = opts.out_dir.join(output.trajectory_name());
    let report_path = opts.out_dir.join(output.report_name());
    write_trajectory_csv(&traj, &trajectory_path)?;
    write_report(&report, &report_path)?;

    if !opts.quiet {
        for c in &report.checks {
            let status = if c.pass { "PASS" } else { "FAIL" };
            println!(
                "{status} {}: measured {:.6e} vs bound {:.6e} (slack {}, abs_tol {:.1e})",
                c.name, c.measured, c.bound, c.slack, c.abs_tol
            );
        }
        println!("overall: {}", if report.overall_pass { "PASS" } else { "FAIL" });
        println!("trajectory: {}", trajectory_path.display());
        println!("report: {}", report_path.display());
    }
    Ok(RunOutcome { report, trajectory_path, report_path })
}

/// One scenario end to end. The caller maps the outcome to an exit code:
/// 0 when `overall_pass`, 2 otherwise, 1 for any returned error.
pub fn run(scenario_path: &Path, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let loaded = super::parse_scenario(scenario_path)?;
    run_loaded(&loaded, opts, scenario_path)
}

enum SweepParam {
    Step,
    Horizon,
    X0(usize),
}

fn parse_parameter(parameter: &str, origin: &Path) -> Result<SweepParam, CliError> {
    match parameter {
        "h" => Ok(SweepParam::Step),
        "T" => Ok(SweepParam::Horizon),
        other => {
            let index = other
                .strip_prefix("x0[")
                .and_then(|rest| rest.strip_suffix(']'))
                .and_then(|idx| idx.parse::<usize>().ok());
            match index {
                Some(i) => Ok(SweepParam::X0(i)),
                None => Err(invalid(
                    origin,
                    format!("sweep parameter must be h, T, or x0[i]; got '{other}'"),
                )),
            }
        }
    }
}

fn apply_parameter(
    doc: &mut ScenarioDoc,
    param: &SweepParam,
    value: f64,
    origin: &Path,
) -> Result<(), CliError> {
    match param {
        SweepParam::Step => doc.h = value,
        SweepParam::Horizon => doc.horizon = value,
        SweepParam::X0(i) => {
            if *i >= doc.x0.len() {
                return Err(invalid(
                    origin,
                    format!("x0[{i}] is out of range for a {}-dimensional start", doc.x0.len()),
                ));
            }
            doc.x0[*i] = value;
        }
    }
    Ok(())
}

/// Run one variant per value, each into its own subdirectory, and write a
/// summary table. Variant failures are recorded and the sweep continues.
pub fn sweep(
    scenario_path: &Path,
    parameter: &str,
    values: &[String],
    opts: &RunOptions,
) -> Result<SweepOutcome, CliError> {
    if values.is_empty() {
        return Err(invalid(scenario_path, "sweep needs at least one value"));
    }
    let param = parse_parameter(parameter, scenario_path)?;
    let parsed: Vec<f64> = values
        .iter()
        .map(|v| {
            v.trim().parse::<f64>().map_err(|_| {
                invalid(scenario_path, format!("sweep value '{v}' is not a number"))
            })
        })
        .collect::<Result<_, _>>()?;
    let text = std::fs::read_to_string(scenario_path)
        .map_err(|source| CliError::Io { path: scenario_path.to_path_buf(), source })?;
    let base: ScenarioDoc = toml::from_str(&text).map_err(|e| CliError::Parse {
        path: scenario_path.to_path_buf(),
        message: e.to_string(),
    })?;

    let token = parameter.replace('[', "_").replace(']', "");
    let mut rows = Vec::new();
    for (raw, value) in values.iter().zip(&parsed) {
        let mut doc = base.clone();
        apply_parameter(&mut doc, &param, *value, scenario_path)?;
        let dir = opts.out_dir.join(format!("{token}_{}", raw.trim()));
        let variant_opts = RunOptions {
            out_dir: dir,
            checks: opts.checks.clone(),
            seed: opts.seed,
            quiet: opts.quiet,
        };
        let outcome = super::load_doc(doc, scenario_path)
            .and_then(|loaded| run_loaded(&loaded, &variant_opts, scenario_path));
        match outcome {
            Ok(out) => {
                let max_residual = out
                    .report
                    .checks
                    .iter()
                    .map(|c| c.measured)
                    .fold(f64::NEG_INFINITY, f64::max);
                rows.push(SweepRow {
                    value: raw.trim().to_string(),
                    ran: true,
                    overall_pass: out.report.overall_pass,
                    max_residual,
                });
            }
            Err(e) => {
                eprintln!("variant {parameter} = {raw}: {e}");
                rows.push(SweepRow {
                    value: raw.trim().to_string(),
                    ran: false,
                    overall_pass: false,
                    max_residual: f64::NAN,
                });
            }
        }
    }

    std::fs::create_dir_all(&opts.out_dir)
        .map_err(|source| CliError::Write { path: opts.out_dir.clone(), source })?;
    let summary_path = opts.out_dir.join("sweep_summary.csv");
    let mut text = String::from("value,overall_pass,max_residual\n");
    for row in &rows {
        writeln!(text, "{},{},{:.16e}", row.value, row.overall_pass, row.max_residual).unwrap();
    }
    std::fs::write(&summary_path, text)
        .map_err(|source| CliError::Write { path: summary_path.clone(), source })?;

    let all_pass = rows.iter().all(|r| r.overall_pass);
    if !opts.quiet {
        for row in &rows {
            let status = if row.overall_pass {
                "PASS"
            } else if row.ran {
                "FAIL"
            } else {
                "ERROR"
            };
            println!("{status} {parameter} = {}: max residual {:.6e}", row.value, row.max_residual);
        }
        println!("summary: {}", summary_path.display());
    }
    Ok(SweepOutcome { rows, summary_path, all_pass })
}
