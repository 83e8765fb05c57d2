//! `lpvw` command-line front end.
//!
//! Exit codes: 0 success, 1 usage/model/I-O error, 2 well-posedness failure
//! inside an operation, 3 a check or threshold failed. Every failure prints
//! one `E_*: detail` line on stderr.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::analyze::{
    compare_traj, convergence_order, freqresp_ct, freqresp_dt, log_grid_per_decade,
    residual_against_warped_ct, warp, ConvergenceScenario,
};
use crate::discretize::{
    dt_step_matrices, sigma_step, similarity_residual, tustin_frozen, wellposedness_check,
    DiscretizationConfig,
};
use crate::error::{Error, Result};
use crate::model::{matrix_to_rows, parse_model, LpvStateSpace};
use crate::simulate::{
    read_trajectory_csv, samples_for, simulate_dt, simulate_dt_loop_oracle, write_trajectory_csv,
    SignalSpec, SignalTable, Trajectory,
};

const SCHEMA_VERSION: u32 = 1;

const SIGNAL_HELP: &str = "\
Signal specs use `kind:key=value,...`:
  const:value=2          (or const:2, or a bare number: 2)
  step:t=1,amp=1,offset=0
  sine:amp=1,f=0.5,phase=0,offset=0      (f in Hz, phase in rad)
  chirp:amp=1,f0=0.1,f1=2,T=10,phase=0,offset=0
  csv:col=u1             (column of the --table CSV, linearly interpolated)";

#[derive(Debug, Parser)]
#[command(name = "lpvw", version, about = "w' discretization of continuous-time LPV state-space models", after_help = SIGNAL_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample det(I - A(p) Ts/2) over the scheduling box; exit 3 if singular points are found.
    Check {
        #[command(flatten)]
        common: Common,
        /// Grid points per scheduling dimension (endpoint inclusive).
        #[arg(long, default_value_t = 21)]
        grid: usize,
        /// Uniform random samples drawn after the grid.
        #[arg(long, default_value_t = 100)]
        random: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Print w' step matrices, Sigma blocks and Tustin blocks at a frozen p.
    Discretize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        frozen: Frozen,
    },
    /// Simulate with the closed-form w' matrices and write an output CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        scenario: Scenario,
        /// Also emit x and xi columns.
        #[arg(long)]
        emit_state: bool,
    },
    /// Simulate by solving the r^-1 algebraic loop at every step.
    LoopSimulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        scenario: Scenario,
        #[arg(long)]
        emit_state: bool,
    },
    /// Frozen-p CT and DT frequency responses plus the warping residual.
    Freqresp {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        frozen: Frozen,
        /// Lowest frequency in rad/s.
        #[arg(long, default_value_t = 0.01)]
        w_min: f64,
        /// Highest frequency in rad/s [default: 0.9 pi / Ts].
        #[arg(long)]
        w_max: Option<f64>,
        #[arg(long, default_value_t = 50)]
        per_decade: usize,
        /// CSV path for the continuous response at the warped frequencies.
        #[arg(long)]
        ct_out: Option<PathBuf>,
        /// CSV path for the discrete response.
        #[arg(long)]
        dt_out: Option<PathBuf>,
    },
    /// Run both discrete engines on one scenario; exit 3 if max |dy| > tol * max(1, max |y|).
    Compare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        scenario: Scenario,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Empirical convergence order against an RK4 reference.
    Converge {
        #[arg(long)]
        model: PathBuf,
        /// Halving list of sampling times, e.g. 0.2,0.1,0.05,0.025.
        #[arg(long, value_delimiter = ',', required = true)]
        ts_list: Vec<f64>,
        #[arg(long)]
        t_end: f64,
        /// One signal spec per scheduling variable.
        #[arg(long = "p-signal", allow_hyphen_values = true)]
        p_signal: Vec<String>,
        /// One signal spec per input.
        #[arg(long = "u", allow_hyphen_values = true)]
        u: Vec<String>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        oversample: usize,
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// Model JSON file.
    #[arg(long)]
    pub model: PathBuf,
    /// Sampling time in seconds.
    #[arg(long)]
    pub ts: f64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Frozen {
    /// Frozen scheduling point v1,v2,...; may be omitted for constant models.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub p: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct Scenario {
    /// Input trajectory CSV with header k,t,p1..,u1..
    #[arg(long, conflicts_with_all = ["p_signal", "u", "t_end", "steps"])]
    pub traj: Option<PathBuf>,
    /// One signal spec per scheduling variable.
    #[arg(long = "p-signal", allow_hyphen_values = true)]
    pub p_signal: Vec<String>,
    /// One signal spec per input.
    #[arg(long = "u", allow_hyphen_values = true)]
    pub u: Vec<String>,
    /// Final time; samples k Ts for k = 0..=T_end/Ts.
    #[arg(long, conflicts_with = "steps")]
    pub t_end: Option<f64>,
    /// Number of samples.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Initial physical state x1,x2,... (default zeros).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Vec<f64>,
    /// Table CSV (`t` column plus named columns) for csv signal specs.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

/// Outcome of a successful command: exit status 0 or 3.
enum Status {
    Ok,
    Failed(String),
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("E_PARSE: {}", first.trim_start_matches("error: "));
            eprint!("{}", e.render());
            return 1;
        }
    };
    match run(&cli) {
        Ok(Status::Ok) => 0,
        Ok(Status::Failed(msg)) => {
            eprintln!("{msg}");
            3
        }
        Err(e) => {
            eprintln!("{}: {e}", e.code());
            if matches!(e, Error::Wellposedness { .. }) {
                2
            } else {
                1
            }
        }
    }
}

fn run(cli: &Cli) -> Result<Status> {
    match &cli.command {
        Command::Check {
            common,
            grid,
            random,
            seed,
        } => {
            let (model, cfg) = load(common)?;
            let report = wellposedness_check(&model, &cfg, *grid, *random, *seed)?;
            let mut doc = versioned(serde_json::to_value(&report).expect("report serializes"));
            doc["grid_per_dim"] = json!(grid);
            doc["random_samples"] = json!(random);
            doc["seed"] = json!(seed);
            emit_json(common.out.as_deref(), &doc)?;
            if report.passed {
                Ok(Status::Ok)
            } else {
                Ok(Status::Failed(format!(
                    "E_WELLPOSED: {} sampled point(s) with |det(I - A Ts/2)| below threshold, first at p = {:?}",
                    report.singular_points.len(),
                    report.singular_points[0]
                )))
            }
        }
        Command::Discretize { common, frozen } => {
            let (model, cfg) = load(common)?;
            let p = frozen_point(&model, &frozen.p)?;
            let wprime = dt_step_matrices(&model, &p, &cfg)?;
            let sigma = sigma_step(&model, &p, &cfg)?;
            let tustin = tustin_frozen(&model, &p, &cfg)?;
            let doc = versioned(json!({
                "Ts": cfg.ts(),
                "p": p,
                "w_prime": wprime.to_json(),
                "sigma": {
                    "M11": matrix_to_rows(&sigma.m11),
                    "M12": matrix_to_rows(&sigma.m12),
                    "M21": matrix_to_rows(&sigma.m21),
                    "M22": matrix_to_rows(&sigma.m22),
                },
                "tustin": tustin.to_json(),
                "similarity_residual": similarity_residual(&wprime, &tustin, cfg.ts()),
            }));
            emit_json(common.out.as_deref(), &doc)?;
            Ok(Status::Ok)
        }
        Command::Simulate {
            common,
            scenario,
            emit_state,
        }
        | Command::LoopSimulate {
            common,
            scenario,
            emit_state,
        } => {
            let (model, cfg) = load(common)?;
            let (traj, x0) = build_scenario(&model, &cfg, scenario)?;
            let out = if matches!(cli.command, Command::Simulate { .. }) {
                simulate_dt(&model, &cfg, &traj, &x0)?
            } else {
                simulate_dt_loop_oracle(&model, &cfg, &traj, &x0)?
            };
            let mut buf = Vec::new();
            write_trajectory_csv(&mut buf, &out, *emit_state)?;
            emit_bytes(common.out.as_deref(), &buf)?;
            Ok(Status::Ok)
        }
        Command::Freqresp {
            common,
            frozen,
            w_min,
            w_max,
            per_decade,
            ct_out,
            dt_out,
        } => {
            let (model, cfg) = load(common)?;
            let p = frozen_point(&model, &frozen.p)?;
            let ts = cfg.ts();
            let w_max = w_max.unwrap_or(0.9 * std::f64::consts::PI / ts);
            let omegas = log_grid_per_decade(*w_min, w_max, *per_decade)?;
            let step = dt_step_matrices(&model, &p, &cfg)?;
            let dt = freqresp_dt(&step, &cfg, &omegas)?;
            let warped: Vec<f64> = omegas.iter().map(|&w| warp(w, ts)).collect();
            let ct = freqresp_ct(&model, &p, &warped)?;
            let residual = residual_against_warped_ct(&step, &model, &p, &cfg, &omegas)?;
            if let Some(path) = ct_out {
                let mut buf = Vec::new();
                ct.write_csv(&mut buf)?;
                emit_bytes(Some(path), &buf)?;
            }
            if let Some(path) = dt_out {
                let mut buf = Vec::new();
                dt.write_csv(&mut buf)?;
                emit_bytes(Some(path), &buf)?;
            }
            let peak = dt.peak_magnitude().max(ct.peak_magnitude());
            let doc = versioned(json!({
                "Ts": ts,
                "p": p,
                "points": omegas.len(),
                "omega_min": omegas[0],
                "omega_max": omegas[omegas.len() - 1],
                "peak_magnitude": peak,
                "warping_residual": residual,
                "relative_residual": residual / peak.max(1.0),
            }));
            emit_json(common.out.as_deref(), &doc)?;
            Ok(Status::Ok)
        }
        Command::Compare {
            common,
            scenario,
            tol,
        } => {
            let (model, cfg) = load(common)?;
            let (traj, x0) = build_scenario(&model, &cfg, scenario)?;
            let sigma = simulate_dt(&model, &cfg, &traj, &x0)?;
            let oracle = simulate_dt_loop_oracle(&model, &cfg, &traj, &x0)?;
            let metrics = compare_traj(&sigma, &oracle, "y")?;
            let passed = metrics.max_abs_error <= tol * metrics.relative_to;
            let mut doc = versioned(serde_json::to_value(&metrics).expect("metrics serialize"));
            doc["tol"] = json!(tol);
            doc["samples"] = json!(traj.len());
            doc["passed"] = json!(passed);
            emit_json(common.out.as_deref(), &doc)?;
            if passed {
                Ok(Status::Ok)
            } else {
                Ok(Status::Failed(format!(
                    "E_THRESHOLD: engines differ by {:e} > tol {tol:e} * {}",
                    metrics.max_abs_error, metrics.relative_to
                )))
            }
        }
        Command::Converge {
            model,
            ts_list,
            t_end,
            p_signal,
            u,
            x0,
            oversample,
            table,
            out,
        } => {
            let model = load_model(model)?;
            let table = load_table(table.as_deref())?;
            let scenario = ConvergenceScenario {
                p: signals_for(&model, p_signal, model.n_p(), "p-signal", table.as_ref())?,
                u: signals_for(&model, u, model.n_u(), "u", table.as_ref())?,
                x0: initial_state(&model, x0)?,
                t_end: *t_end,
            };
            let report = convergence_order(&model, &scenario, ts_list, *oversample)?;
            emit_bytes(out.as_deref(), report.to_text().as_bytes())?;
            Ok(Status::Ok)
        }
    }
}

fn load_model(path: &Path) -> Result<LpvStateSpace> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("cannot read model {}: {e}", path.display())))?;
    parse_model(&text)
}

fn load(common: &Common) -> Result<(LpvStateSpace, DiscretizationConfig)> {
    let model = load_model(&common.model)?;
    Ok((model, DiscretizationConfig::new(common.ts)?))
}

fn load_table(path: Option<&Path>) -> Result<Option<SignalTable>> {
    path.map(|p| {
        let f = File::open(p)
            .map_err(|e| Error::Io(format!("cannot open table {}: {e}", p.display())))?;
        SignalTable::from_csv(BufReader::new(f))
    })
    .transpose()
}

/// The given point, or the domain's lower corner for a constant model.
fn frozen_point(model: &LpvStateSpace, p: &[f64]) -> Result<Vec<f64>> {
    if p.is_empty() {
        if model.is_constant() {
            return Ok(model.domain().lower().to_vec());
        }
        return Err(Error::Config(
            "--p is required for a parameter-dependent model".into(),
        ));
    }
    if p.len() != model.n_p() {
        return Err(Error::Dimension(format!(
            "--p has {} entries, model has np = {}",
            p.len(),
            model.n_p()
        )));
    }
    Ok(p.to_vec())
}

fn initial_state(model: &LpvStateSpace, x0: &[f64]) -> Result<Vec<f64>> {
    if x0.is_empty() {
        return Ok(vec![0.0; model.n_x()]);
    }
    if x0.len() != model.n_x() {
        return Err(Error::Dimension(format!(
            "--x0 has {} entries, model has nx = {}",
            x0.len(),
            model.n_x()
        )));
    }
    Ok(x0.to_vec())
}

fn signals_for(
    model: &LpvStateSpace,
    texts: &[String],
    expected: usize,
    flag: &str,
    table: Option<&SignalTable>,
) -> Result<Vec<SignalSpec>> {
    if texts.is_empty() && flag == "p-signal" && model.is_constant() {
        return Ok(model
            .domain()
            .lower()
            .iter()
            .map(|&v| SignalSpec::constant(v))
            .collect());
    }
    if texts.len() != expected {
        return Err(Error::Dimension(format!(
            "got {} --{flag} spec(s), model needs {expected}",
            texts.len()
        )));
    }
    texts
        .iter()
        .map(|t| {
            let spec: SignalSpec = t.parse()?;
            Ok(match table {
                Some(table) => spec.with_table(table),
                None => spec,
            })
        })
        .collect()
}

fn build_scenario(
    model: &LpvStateSpace,
    cfg: &DiscretizationConfig,
    s: &Scenario,
) -> Result<(Trajectory, Vec<f64>)> {
    let x0 = initial_state(model, &s.x0)?;
    if let Some(path) = &s.traj {
        let f = File::open(path)
            .map_err(|e| Error::Io(format!("cannot open trajectory {}: {e}", path.display())))?;
        let traj = read_trajectory_csv(BufReader::new(f), cfg.ts(), model.n_p(), model.n_u())?;
        return Ok((traj, x0));
    }
    let table = load_table(s.table.as_deref())?;
    let p = signals_for(model, &s.p_signal, model.n_p(), "p-signal", table.as_ref())?;
    let u = signals_for(model, &s.u, model.n_u(), "u", table.as_ref())?;
    let n = match (s.t_end, s.steps) {
        (Some(t_end), _) => samples_for(t_end, cfg.ts())?,
        (None, Some(n)) => n,
        (None, None) => {
            return Err(Error::Config(
                "give --traj, or signal specs with --t-end or --steps".into(),
            ))
        }
    };
    Ok((Trajectory::from_signals(cfg.ts(), n, &p, &u)?, x0))
}

fn versioned(mut doc: Value) -> Value {
    if let Value::Object(map) = &mut doc {
        map.insert("schema_version".into(), json!(SCHEMA_VERSION));
    }
    doc
}

fn emit_json(path: Option<&Path>, doc: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(doc).expect("JSON value serializes");
    text.push('\n');
    emit_bytes(path, text.as_bytes())
}

fn emit_bytes(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes)
            .map_err(|e| Error::Io(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}
