//! Command-line front end: `fields`, `verify`, `simulate`, `plan` and
//! `rank-scan`.
//!
//! Exit status is 0 on success, 1 when a check or a plan fails and 2 for
//! configuration or usage errors. Human-readable summaries go to stdout;
//! JSON and CSV artifacts go to the `--out` directory when one is given.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::Error;
use crate::fields::{FamilyDescriptor, FieldFamily};
use crate::geometry::{SeparationConfig, Space};
use crate::plan::{self, PlanResult};
use crate::sim::{default_step, flow, monitor_invariance, ControlSchedule};
use crate::verify::{rank_scan_with, verify_family, DEFAULT_RANK_MARGIN};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "nbody-ctrl",
    version,
    about = "Collision-free control systems for n bodies"
)]
pub struct Cli {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// `real` (the line) or `circle`.
    #[arg(long, global = true, default_value = "real")]
    pub space: Space,
    /// Number of bodies.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Number of fields (defaults to n).
    #[arg(long, global = true)]
    pub m: Option<usize>,
    /// Minimal separation ε.
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, global = true, default_value_t = 500)]
    pub samples: usize,
    /// Integration step (defaults to T/10000).
    #[arg(long, global = true)]
    pub step: Option<f64>,
    /// Directory for JSON/CSV artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Field matrix (and bracket columns) at a point.
    Fields {
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        point: Point,
    },
    /// Tangency, multiplier, bracket, sparsity and rank certificates.
    Verify,
    /// Integrate a schedule from an initial point.
    Simulate {
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        initial: Point,
        #[arg(long)]
        schedule: PathBuf,
    },
    /// Steer from p to q (angles on the circle).
    Plan {
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        p: Point,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        q: Point,
        #[arg(long, default_value_t = 200)]
        max_iter: usize,
    },
    /// Bracket-generating rank at random interior points.
    RankScan {
        #[arg(long, default_value_t = DEFAULT_RANK_MARGIN)]
        margin: f64,
        /// Rank of the fields alone, without brackets.
        #[arg(long)]
        fields_only: bool,
    },
}

/// A state given on the command line as comma-separated reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Point(pub Vec<f64>);

fn parse_point(s: &str) -> Result<Point, String> {
    let values: Result<Vec<f64>, _> = s.split(',').map(|v| v.trim().parse::<f64>()).collect();
    match values {
        Ok(v) if v.iter().all(|x| x.is_finite()) => Ok(Point(v)),
        Ok(_) => Err("coordinates must be finite".into()),
        Err(e) => Err(format!("expected comma-separated numbers: {e}")),
    }
}

/// Validated run parameters shared by every subcommand.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub space: Space,
    pub n: usize,
    pub m: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub tol: f64,
    pub samples: usize,
    pub step: Option<f64>,
    pub output_path: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_args(args: &RunArgs) -> Result<Self, Error> {
        let n = args
            .n
            .ok_or_else(|| Error::InvalidConfig("--n is required".into()))?;
        let epsilon = args
            .epsilon
            .ok_or_else(|| Error::InvalidConfig("--epsilon is required".into()))?;
        if args.tol.is_nan() || args.tol <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "--tol must be > 0, got {}",
                args.tol
            )));
        }
        if let Some(step) = args.step {
            if !(step.is_finite() && step > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "--step must be > 0, got {step}"
                )));
            }
        }
        Ok(Self {
            space: args.space,
            n,
            m: args.m.unwrap_or(n),
            epsilon,
            seed: args.seed,
            tol: args.tol,
            samples: args.samples,
            step: args.step,
            output_path: args.out.clone(),
        })
    }

    pub fn family(&self) -> Result<FieldFamily, Error> {
        FieldFamily::new(
            SeparationConfig::new(self.space, self.n, self.epsilon)?,
            self.m,
        )
    }
}

/// Failure of a subcommand, already mapped to an exit status.
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NotConverged { .. }
            | Error::DampingUnderflow { .. }
            | Error::NonFinite { .. }
            | Error::Singular => EXIT_FAILURE,
            _ => EXIT_CONFIG,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: format!("i/o error: {e}"),
        }
    }
}

type CmdResult = Result<i32, Failure>;

struct Artifacts<'a> {
    dir: Option<&'a Path>,
}

impl Artifacts<'_> {
    fn json<T: Serialize>(&self, name: &str, value: &T) -> std::io::Result<()> {
        if let Some(dir) = self.dir {
            fs::create_dir_all(dir)?;
            let text = serde_json::to_string_pretty(value).expect("artifacts serialize");
            fs::write(dir.join(name), text + "\n")?;
        }
        Ok(())
    }

    fn text(&self, name: &str, body: &str) -> std::io::Result<()> {
        if let Some(dir) = self.dir {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(name), body)?;
        }
        Ok(())
    }
}

/// Parses `args` (including the program name) and runs the command,
/// writing the summary to `out`. Returns the process exit status.
pub fn run_with<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            if e.use_stderr() {
                eprint!("{e}");
            } else {
                let _ = write!(out, "{e}");
            }
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> CmdResult {
    let config = RunConfig::from_args(&cli.run)?;
    let family = config.family()?;
    let artifacts = Artifacts {
        dir: config.output_path.as_deref(),
    };
    match &cli.command {
        Command::Fields { point } => cmd_fields(&family, &point.0, &artifacts, out),
        Command::Verify => cmd_verify(&config, &family, &artifacts, out),
        Command::Simulate { initial, schedule } => {
            cmd_simulate(&config, &family, &initial.0, schedule, &artifacts, out)
        }
        Command::Plan { p, q, max_iter } => {
            cmd_plan(&config, &family, &p.0, &q.0, *max_iter, &artifacts, out)
        }
        Command::RankScan {
            margin,
            fields_only,
        } => {
            let report =
                rank_scan_with(&family, config.samples, config.seed, *margin, !fields_only)?;
            writeln!(
                out,
                "rank-scan: min rank {} of {} over {} samples ({})",
                report.min_rank,
                report.required_rank,
                report.samples,
                if report.passed { "pass" } else { "FAIL" }
            )?;
            artifacts.json("rank_scan.json", &report)?;
            Ok(if report.passed { EXIT_OK } else { EXIT_FAILURE })
        }
    }
}

#[derive(Serialize)]
struct BracketColumn {
    l: usize,
    k: usize,
    value: Vec<f64>,
}

#[derive(Serialize)]
struct FieldsReport {
    family: FamilyDescriptor,
    point: Vec<f64>,
    fields: Vec<Vec<f64>>,
    brackets: Vec<BracketColumn>,
}

fn cmd_fields(
    family: &FieldFamily,
    point: &[f64],
    artifacts: &Artifacts,
    out: &mut dyn Write,
) -> CmdResult {
    let fields: Vec<Vec<f64>> = (1..=family.m())
        .map(|l| family.eval_field(l, point))
        .collect::<Result<_, _>>()?;
    let brackets: Vec<BracketColumn> = family
        .frame_brackets()
        .map(|l| {
            family
                .bracket(1, l, point)
                .map(|value| BracketColumn { l: 1, k: l, value })
        })
        .collect::<Result<_, _>>()?;
    let mut header: Vec<String> = (1..=family.m()).map(|l| format!("f{l}")).collect();
    header.extend(brackets.iter().map(|b| format!("[f{},f{}]", b.l, b.k)));
    writeln!(
        out,
        "{}",
        header
            .iter()
            .map(|h| format!("{h:>14}"))
            .collect::<String>()
    )?;
    for i in 0..family.n() {
        let row: String = fields
            .iter()
            .map(|c| c[i])
            .chain(brackets.iter().map(|b| b.value[i]))
            .map(|v| format!("{v:>14.6}"))
            .collect();
        writeln!(out, "{row}")?;
    }
    artifacts.json(
        "fields.json",
        &FieldsReport {
            family: family.descriptor(),
            point: point.to_vec(),
            fields,
            brackets,
        },
    )?;
    Ok(EXIT_OK)
}

fn cmd_verify(
    config: &RunConfig,
    family: &FieldFamily,
    artifacts: &Artifacts,
    out: &mut dyn Write,
) -> CmdResult {
    let bundle = verify_family(family, config.samples, config.seed)?;
    for r in &bundle.reports {
        writeln!(
            out,
            "{:<24} {:>6} samples  max residual {:.3e}  tol {:.1e}  {}",
            r.check_name,
            r.samples,
            r.max_residual,
            r.tolerance,
            if r.passed { "pass" } else { "FAIL" }
        )?;
    }
    writeln!(
        out,
        "{:<24} {:>6} samples  min rank {} of {}  {}",
        "rank_scan",
        bundle.rank.samples,
        bundle.rank.min_rank,
        bundle.rank.required_rank,
        if bundle.rank.passed { "pass" } else { "FAIL" }
    )?;
    artifacts.json("verify.json", &bundle)?;
    Ok(if bundle.passed { EXIT_OK } else { EXIT_FAILURE })
}

fn cmd_simulate(
    config: &RunConfig,
    family: &FieldFamily,
    initial: &[f64],
    schedule_path: &Path,
    artifacts: &Artifacts,
    out: &mut dyn Write,
) -> CmdResult {
    let text = fs::read_to_string(schedule_path)?;
    let schedule = ControlSchedule::from_json(&text)?;
    let step = config.step.unwrap_or_else(|| default_step(&schedule));
    let traj = flow(family, initial, &schedule, step)?;
    let report = monitor_invariance(&traj, 0.0);
    writeln!(out, "endpoint: {:?}", traj.final_state())?;
    writeln!(
        out,
        "min gap {:.6e} over {} states ({})",
        traj.min_gap_overall(),
        traj.states.len(),
        if report.passed { "pass" } else { "FAIL" }
    )?;
    artifacts.text("trajectory.csv", &traj.to_csv())?;
    artifacts.json("monitor.json", &report)?;
    Ok(if report.passed { EXIT_OK } else { EXIT_FAILURE })
}

fn cmd_plan(
    config: &RunConfig,
    family: &FieldFamily,
    p: &[f64],
    q: &[f64],
    max_iter: usize,
    artifacts: &Artifacts,
    out: &mut dyn Write,
) -> CmdResult {
    let result = plan::plan(family, p, q, config.tol, max_iter);
    let (plan, failure) = match result {
        Ok(plan) => (plan, None),
        Err(Error::NotConverged { best }) => (*best, Some("planner did not converge")),
        Err(Error::DampingUnderflow { best }) => (*best, Some("damping underflow")),
        Err(e) => return Err(e.into()),
    };
    write_plan(family, &plan, artifacts)?;
    writeln!(
        out,
        "plan: {} iterations, endpoint error {:.3e}, min gap {:.6e}",
        plan.iterations, plan.endpoint_error, plan.min_gap_along_plan
    )?;
    if let Some(reason) = failure {
        writeln!(out, "{reason}")?;
        return Ok(EXIT_FAILURE);
    }
    Ok(if plan.endpoint_error <= config.tol {
        EXIT_OK
    } else {
        EXIT_FAILURE
    })
}

fn write_plan(
    family: &FieldFamily,
    plan: &PlanResult,
    artifacts: &Artifacts,
) -> Result<(), Failure> {
    artifacts.json("plan.json", plan)?;
    if artifacts.dir.is_some() {
        let traj = flow(family, &plan.start, &plan.schedule, plan.step)?;
        artifacts.text("replay.csv", &traj.to_csv())?;
    }
    Ok(())
}
