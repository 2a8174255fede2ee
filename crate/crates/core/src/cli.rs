//! Command-line driver.
//!
//! Exit status: 0 when every check passes, 1 when a check or pipeline stage
//! fails, 2 for unreadable or invalid configuration.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::distance::{hessian_h_on_v, jacobian_deviation, nearest_point_jacobian, real_hessian_h_on_v, squared_distance, BlockStructure};
use crate::error::{Error, Result};
use crate::extension::{run_extension, write_csv, ExtendConfig};
use crate::geometry::ChartPoint;
use crate::models::{embed, v_samples, validate_model, ModelConfig};

pub const STATUS_OK: i32 = 0;
pub const STATUS_FAILED: i32 = 1;
pub const STATUS_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "qpsh-extend", version, about = "Construct and certify quasi-psh extensions from a submanifold")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the load-time invariant suite of a model.
    ValidateModel(CommonArgs),
    /// Check the block structure of the Hessian of h and the nearest-point Jacobian on V.
    VerifyHessian(CommonArgs),
    /// Run the full extension pipeline and write the report and sample CSV.
    Extend(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Directory for the JSON report (and CSV for `extend`); stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Spacing of the ambient sample lattice as a fraction of each coordinate's extent.
    #[arg(long)]
    pub grid_spacing: Option<f64>,
    /// Comma-separated, strictly increasing regularization indices.
    #[arg(long, value_delimiter = ',')]
    pub m_schedule: Option<Vec<u32>>,
    /// Pass/fail tolerance of the command's principal check.
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub jitter_seed: Option<u64>,
    #[arg(long)]
    pub hessian_step: Option<f64>,
}

/// Points of `V` at which `verify-hessian` runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HessianCheckConfig {
    pub points: usize,
    /// Spacing fraction of the `V` lattice the points are drawn from.
    pub v_spacing: f64,
}

impl Default for HessianCheckConfig {
    fn default() -> Self {
        Self { points: 5, v_spacing: 0.2 }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
struct HessianTables {
    #[serde(default)]
    hessian_check: HessianCheckConfig,
}

/// Parsed configuration with command-line overrides applied.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub extend: ExtendConfig,
    pub hessian: HessianCheckConfig,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str, args: &CommonArgs, command: &Command) -> Result<Self> {
        let mut model = ModelConfig::from_toml(text)?;
        let mut extend = ExtendConfig::from_toml(text)?;
        let hessian = toml::from_str::<HessianTables>(text).map_err(|e| Error::Config(e.to_string()))?.hessian_check;
        if hessian.points == 0 || !(hessian.v_spacing > 0.0 && hessian.v_spacing <= 1.0) {
            return Err(Error::Config("hessian_check needs points > 0 and v_spacing in (0, 1]".into()));
        }
        if let Some(s) = args.grid_spacing {
            model.grid.spacing = s;
        }
        if let Some(seed) = args.jitter_seed {
            model.grid.jitter_seed = seed;
        }
        if let Some(step) = args.hessian_step {
            model.tolerances.hessian_step = step;
        }
        if let Some(m) = &args.m_schedule {
            extend.glue.m_schedule = m.clone();
        }
        if let Some(t) = args.tolerance {
            match command {
                Command::ValidateModel(_) => {
                    model.tolerances.transition = t;
                    model.tolerances.retraction = t;
                    model.tolerances.deck = t;
                }
                Command::VerifyHessian(_) => {
                    model.tolerances.off_block = t;
                    model.tolerances.jacobian = t;
                }
                Command::Extend(_) => extend.verify.value_tolerance = t,
            }
        }
        model.check()?;
        extend.check()?;
        Ok(Self { model, extend, hessian, out: args.out.clone() })
    }

    pub fn load(args: &CommonArgs, command: &Command) -> Result<Self> {
        let text = fs::read_to_string(&args.config).map_err(|e| Error::Config(format!("reading {}: {e}", args.config.display())))?;
        Self::from_toml(&text, args, command)
    }
}

/// One evaluated point of `verify-hessian`.
#[derive(Clone, Debug, Serialize)]
pub struct HessianPoint {
    pub point: ChartPoint,
    pub block: BlockStructure,
    pub block_passed: bool,
    pub jacobian_deviation: f64,
    pub jacobian_passed: bool,
    /// `max |R − diag(0, 2)|` of the real Hessian in adapted coordinates.
    pub real_hessian_deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct HessianReport {
    pub model: String,
    pub passed: bool,
    pub step: f64,
    pub off_block_tolerance: f64,
    pub normal_spread_tolerance: f64,
    pub jacobian_tolerance: f64,
    /// Mean normal-block constant over the points.
    pub normal_constant: f64,
    pub points: Vec<HessianPoint>,
}

/// Hessian and Jacobian checks at evenly spread points of `V`.
pub fn verify_hessian(cfg: &RunConfig) -> Result<HessianReport> {
    let model = cfg.model.load()?;
    let h = squared_distance(&model);
    let tol = &cfg.model.tolerances;
    let step = tol.hessian_step;
    let all: Vec<ChartPoint> = v_samples(model.as_ref(), cfg.hessian.v_spacing, 0)?.iter().flat_map(|g| g.points().to_vec()).collect();
    if all.is_empty() {
        return Err(Error::Precondition("no samples on V".into()));
    }
    let n = cfg.hessian.points.min(all.len());
    let stride = all.len() / n;
    let mut points = Vec::new();
    for i in 0..n {
        let p = embed(model.as_ref(), &all[i * stride + stride / 2])?;
        let block = hessian_h_on_v(model.as_ref(), h.clone(), &p, step)?;
        let jac = nearest_point_jacobian(model.as_ref(), &p, step)?;
        let real = real_hessian_h_on_v(model.as_ref(), h.clone(), &p, step)?;
        let k = block.k;
        let mut dev = 0.0_f64;
        for a in 0..real.nrows() {
            for b in 0..real.ncols() {
                let target = if a == b && a >= 2 * k { 2.0 } else { 0.0 };
                dev = dev.max((real[(a, b)] - target).abs());
            }
        }
        let jd = jacobian_deviation(&jac);
        points.push(HessianPoint {
            point: p,
            block_passed: block.passes(tol.off_block, tol.normal_spread),
            block,
            jacobian_deviation: jd,
            jacobian_passed: jd <= tol.jacobian,
            real_hessian_deviation: dev,
        });
    }
    let normal_constant = points.iter().map(|p| p.block.normal_constant).sum::<f64>() / points.len() as f64;
    Ok(HessianReport {
        model: model.name().to_owned(),
        passed: points.iter().all(|p| p.block_passed && p.jacobian_passed),
        step,
        off_block_tolerance: tol.off_block,
        normal_spread_tolerance: tol.normal_spread,
        jacobian_tolerance: tol.jacobian,
        normal_constant,
        points,
    })
}

fn status_of(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parameter(_) | Error::ModelDefinition(_) => STATUS_CONFIG,
        _ => STATUS_FAILED,
    }
}

fn emit(out: Option<&Path>, name: &str, json: &str) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::Config(format!("creating {}: {e}", dir.display())))?;
            let path = dir.join(name);
            fs::write(&path, format!("{json}\n")).map_err(|e| Error::Config(format!("writing {}: {e}", path.display())))
        }
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Config(format!("serializing report: {e}")))
}

fn execute(command: &Command) -> Result<i32> {
    let (Command::ValidateModel(args) | Command::VerifyHessian(args) | Command::Extend(args)) = command;
    let cfg = RunConfig::load(args, command)?;
    let out = cfg.out.as_deref();
    match command {
        Command::ValidateModel(_) => {
            let model = cfg.model.load()?;
            let report = validate_model(&model, &cfg.model)?;
            for c in &report.checks {
                eprintln!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.message);
            }
            emit(out, "validate_model.json", &to_json(&report)?)?;
            Ok(if report.passed { STATUS_OK } else { STATUS_FAILED })
        }
        Command::VerifyHessian(_) => {
            let report = verify_hessian(&cfg)?;
            for p in &report.points {
                eprintln!(
                    "{} {}: off-block {:.3e}, normal constant {:.6} (spread {:.3e}), Jacobian deviation {:.3e}",
                    if p.block_passed && p.jacobian_passed { "PASS" } else { "FAIL" },
                    p.point,
                    p.block.off_block_max,
                    p.block.normal_constant,
                    p.block.normal_spread,
                    p.jacobian_deviation
                );
            }
            emit(out, "verify_hessian.json", &to_json(&report)?)?;
            Ok(if report.passed { STATUS_OK } else { STATUS_FAILED })
        }
        Command::Extend(_) => {
            let report = run_extension(&cfg.model, &cfg.extend)?;
            for s in &report.stages {
                eprintln!("{} {}{}", if s.passed { "PASS" } else { "FAIL" }, s.name, s.message.as_ref().map_or(String::new(), |m| format!(": {m}")));
            }
            emit(out, "extension_report.json", &report.to_json()?)?;
            if let (Some(dir), Some(v)) = (out, report.verification.as_ref()) {
                let path = dir.join("extension_grid.csv");
                let file = fs::File::create(&path).map_err(|e| Error::Config(format!("creating {}: {e}", path.display())))?;
                write_csv(std::io::BufWriter::new(file), &v.rows, &cfg.extend.glue.m_schedule)?;
            }
            Ok(if report.passed() { STATUS_OK } else { STATUS_FAILED })
        }
    }
}

/// Parses arguments, runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { STATUS_CONFIG } else { STATUS_OK };
        }
    };
    match execute(&cli.command) {
        Ok(status) => status,
        Err(e) => {
            eprintln!("error: {e}");
            status_of(&e)
        }
    }
}
