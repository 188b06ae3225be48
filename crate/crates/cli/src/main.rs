//! `ardeconv`: simulate, estimate, run Monte Carlo grids and check
//! integrability conditions from the command line.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 degenerate
//! data, 4 integrability check failed, 1 anything else.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ardeconv::deconv::{Cutoff, InversionPlan, KernelSpec};
use ardeconv::estimators::{EstimateRecord, EstimatorSettings, EstimatorSuite, EstimatorTag};
use ardeconv::monte_carlo::{emit_boxplot_data, emit_table, run_mc, McConfig, TableFormat};
use ardeconv::process::{Family, Preset, RegressionModel, Scenario};
use ardeconv::rng::stream;
use ardeconv::weights::{condition_c11_report, WeightBase, WeightSpec};
use ardeconv::{Error, ErrorKind, ErrorModel};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "ardeconv", version, about = "Deconvolution estimators for noisy autoregressions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a latent chain and its noisy observations as CSV (index,x,z).
    Simulate(SimulateArgs),
    /// Estimate the regression parameter from a CSV series.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo experiment and write report, table and box-plot data.
    Mc(McArgs),
    /// Check that the deconvolution integrands are integrable.
    CheckConditions(CheckArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightArg {
    N,
    Sc,
}

impl From<WeightArg> for WeightBase {
    fn from(w: WeightArg) -> Self {
        match w {
            WeightArg::N => WeightBase::N,
            WeightArg::Sc => WeightBase::SC,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ErrorArg {
    Laplace,
    Gaussian,
}

impl From<ErrorArg> for ErrorKind {
    fn from(e: ErrorArg) -> Self {
        match e {
            ErrorArg::Laplace => ErrorKind::Laplace,
            ErrorArg::Gaussian => ErrorKind::Gaussian,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Linear,
    Cauchy,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Linear => Family::Linear,
            FamilyArg::Cauchy => Family::Cauchy,
        }
    }
}

/// Scenario given by preset flags.
#[derive(Args)]
struct PresetArgs {
    /// case-a, case-b or cauchy.
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long)]
    n: Option<usize>,
    /// Noise ratio sigma_eps^2 / Var(X).
    #[arg(long)]
    s2n: Option<f64>,
    #[arg(long, value_enum, default_value = "laplace")]
    error: ErrorArg,
}

#[derive(Args)]
struct PlanArgs {
    /// Truncation point of the numerical Fourier inversion.
    #[arg(long)]
    tmax: Option<f64>,
    /// Grid intervals of the numerical inversion (power of two, >= 256).
    #[arg(long, default_value_t = 4096)]
    points: usize,
    /// Kernel cutoff C_n for the general estimator.
    #[arg(long)]
    cn: Option<f64>,
    /// Base weight of the general estimator.
    #[arg(long, value_enum, default_value = "sc")]
    weight: WeightArg,
}

impl PlanArgs {
    fn settings(&self) -> EstimatorSettings {
        EstimatorSettings {
            plan: InversionPlan { t_max: self.tmax, points: self.points, ..Default::default() },
            kernel: KernelSpec::indicator(self.cn.map_or(Cutoff::Infinite, Cutoff::Finite)),
            general_weight: self.weight.into(),
            theta_box: None,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario JSON; replaces the preset flags.
    #[arg(long, conflicts_with_all = ["preset", "n", "s2n"])]
    config: Option<PathBuf>,
    #[command(flatten)]
    scenario: PresetArgs,
    #[arg(long)]
    seed: u64,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// CSV with a z column, and an x column for the oracle.
    #[arg(long)]
    data: PathBuf,
    /// Repeatable: deconv-n, deconv-sc, oracle, naive, arma, deconv-general.
    #[arg(long = "estimator", required = true)]
    estimators: Vec<EstimatorTag>,
    /// Sets family and sigma_eps together with --s2n.
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long)]
    s2n: Option<f64>,
    #[arg(long, value_enum, conflicts_with = "preset")]
    family: Option<FamilyArg>,
    #[arg(long, conflicts_with = "s2n")]
    sigma_eps: Option<f64>,
    #[arg(long, value_enum, default_value = "laplace")]
    error: ErrorArg,
    #[command(flatten)]
    plan: PlanArgs,
    /// Output JSON; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct McArgs {
    /// Monte Carlo config JSON; replaces the scenario flags.
    #[arg(long, conflicts_with_all = ["preset", "n", "s2n", "estimators"])]
    config: Option<PathBuf>,
    #[command(flatten)]
    scenario: PresetArgs,
    #[arg(long = "estimator")]
    estimators: Vec<EstimatorTag>,
    /// Master seed; required without --config, overrides it otherwise.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    #[command(flatten)]
    plan: PlanArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, value_enum)]
    weight: WeightArg,
    #[arg(long, value_enum, default_value = "laplace")]
    error: ErrorArg,
    /// Supplies the regression and, with --s2n, sigma_eps.
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long)]
    s2n: Option<f64>,
    /// Family with its reference parameter (a = 0.5, b = 0.25; theta = 1.5).
    #[arg(long, value_enum, conflicts_with = "preset")]
    family: Option<FamilyArg>,
    #[arg(long, conflicts_with = "s2n")]
    sigma_eps: Option<f64>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter(_) | Error::Unsupported(_) => 2,
            Error::DegenerateDesign(_) => 3,
            Error::Divergence { .. } | Error::NonFiniteIntegrand { .. } => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Failure::usage(format!("invalid JSON in {}: {e}", path.display())))
}

fn write_output(out: Option<&Path>, text: &str) -> CliResult {
    let res = match out {
        Some(p) => fs::write(p, text),
        None => io::stdout().write_all(text.as_bytes()),
    };
    res.map_err(|e| Failure { code: 1, message: format!("write failed: {e}") })
}

fn preset_scenario(a: &PresetArgs) -> CliResult<Scenario> {
    let preset = a.preset.ok_or_else(|| Failure::usage("--preset is required without --config"))?;
    let n = a.n.ok_or_else(|| Failure::usage("--n is required with --preset"))?;
    let s2n = a.s2n.ok_or_else(|| Failure::usage("--s2n is required with --preset"))?;
    Ok(preset.scenario(n, s2n, a.error.into())?)
}

fn cmd_simulate(a: SimulateArgs) -> CliResult {
    let scenario: Scenario = match &a.config {
        Some(p) => {
            let s: Scenario = read_json(p)?;
            s.validate()?;
            s
        }
        None => preset_scenario(&a.scenario)?,
    };
    let t = scenario.simulate(&mut stream(a.seed))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Failure { code: 1, message: e.to_string() };
    w.write_record(["index", "x", "z"]).map_err(csv_err)?;
    for (i, (x, z)) in t.x.iter().zip(&t.z).enumerate() {
        w.write_record([i.to_string(), x.to_string(), z.to_string()]).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure { code: 1, message: e.to_string() })?;
    write_output(a.out.as_deref(), &String::from_utf8(bytes).expect("utf-8"))
}

/// Reads the `z` column and, when present, the `x` column.
fn read_series(path: &Path) -> CliResult<(Vec<f64>, Option<Vec<f64>>)> {
    let text = read_text(path)?;
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let headers = rd.headers().map_err(|e| Failure::usage(format!("bad CSV header: {e}")))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let zc = col("z").ok_or_else(|| Failure::usage(format!("{} has no z column", path.display())))?;
    let xc = col("x");
    let (mut z, mut x) = (Vec::new(), Vec::new());
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| Failure::usage(format!("bad CSV row {}: {e}", line + 2)))?;
        let parse = |c: usize| -> CliResult<f64> {
            rec.get(c)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Failure::usage(format!("row {}: column {} is not a number", line + 2, c + 1)))
        };
        z.push(parse(zc)?);
        if let Some(c) = xc {
            x.push(parse(c)?);
        }
    }
    Ok((z, xc.map(|_| x)))
}

/// Family and noise model from either `--preset/--s2n` or `--family/--sigma-eps`.
fn family_and_noise(
    preset: Option<Preset>,
    s2n: Option<f64>,
    family: Option<FamilyArg>,
    sigma_eps: Option<f64>,
    kind: ErrorKind,
) -> CliResult<(Family, Option<RegressionModel>, Option<ErrorModel>)> {
    let (family, reg) = match (preset, family) {
        (Some(p), _) => (p.family(), Some(p.regression())),
        (None, Some(f)) => (f.into(), None),
        (None, None) => return Err(Failure::usage("either --preset or --family is required")),
    };
    let sigma = match (sigma_eps, s2n, preset) {
        (Some(s), _, _) => Some(s),
        (None, Some(r), Some(p)) => Some(p.sigma_eps(r)?),
        (None, Some(_), None) => return Err(Failure::usage("--s2n needs --preset")),
        (None, None, _) => None,
    };
    let err = sigma.map(|s| ErrorModel::new(kind, s)).transpose()?;
    Ok((family, reg, err))
}

fn cmd_estimate(a: EstimateArgs) -> CliResult {
    let (z, x) = read_series(&a.data)?;
    let (family, _, err) = family_and_noise(a.preset, a.s2n, a.family, a.sigma_eps, a.error.into())?;
    let needs_noise = a
        .estimators
        .iter()
        .any(|t| matches!(t, EstimatorTag::DeconvN | EstimatorTag::DeconvSc | EstimatorTag::DeconvGeneral));
    if a.estimators.contains(&EstimatorTag::Oracle) && x.is_none() {
        return Err(Failure::usage("the oracle estimator needs an x column"));
    }
    let err = match err {
        Some(e) => e,
        None if needs_noise => return Err(Failure::usage("deconvolution estimators need --sigma-eps or --preset with --s2n")),
        // The baselines ignore the noise law; any valid model will do.
        None => ErrorModel::new(a.error.into(), 1.0)?,
    };
    let mut tags = a.estimators.clone();
    tags.sort();
    tags.dedup();
    let suite = EstimatorSuite::new(family, &err, &tags, &a.plan.settings())?;
    let records = a
        .estimators
        .iter()
        .map(|&t| suite.run(t, &z, x.as_deref()))
        .collect::<Result<Vec<EstimateRecord>, _>>()?;
    let json = serde_json::to_string_pretty(&records).expect("records serialise");
    write_output(a.out.as_deref(), &(json + "\n"))
}

fn cmd_mc(a: McArgs) -> CliResult {
    let mut cfg: McConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => {
            let s = &a.scenario;
            let seed = a.seed.ok_or_else(|| Failure::usage("--seed is required without --config"))?;
            McConfig {
                preset: s.preset.ok_or_else(|| Failure::usage("--preset is required without --config"))?,
                error: s.error.into(),
                n: s.n.ok_or_else(|| Failure::usage("--n is required without --config"))?,
                s2n: s.s2n.ok_or_else(|| Failure::usage("--s2n is required without --config"))?,
                reps: 100,
                estimators: a.estimators.clone(),
                master_seed: seed,
                settings: a.plan.settings(),
            }
        }
    };
    if let Some(seed) = a.seed {
        cfg.master_seed = seed;
    }
    if let Some(reps) = a.reps {
        cfg.reps = reps;
    }
    let report = run_mc(&cfg)?;
    fs::create_dir_all(&a.out).map_err(|e| Failure::usage(format!("cannot create {}: {e}", a.out.display())))?;
    for (name, text) in [
        ("report.json", report.to_json() + "\n"),
        ("table.csv", emit_table(&report, TableFormat::Csv)),
        ("table.md", emit_table(&report, TableFormat::Markdown)),
        ("boxplot.csv", emit_boxplot_data(&report)),
    ] {
        write_output(Some(&a.out.join(name)), &text)?;
    }
    print!("{}", emit_table(&report, TableFormat::Markdown));
    Ok(())
}

fn cmd_check(a: CheckArgs) -> CliResult {
    let (family, reg, err) = family_and_noise(a.preset, a.s2n, a.family, a.sigma_eps, a.error.into())?;
    let err = err.ok_or_else(|| Failure::usage("--sigma-eps or --preset with --s2n is required"))?;
    let reg = reg.unwrap_or(match family {
        Family::Linear => RegressionModel::Linear { a: 0.5, b: 0.25 },
        Family::Cauchy => RegressionModel::Cauchy { theta: 1.5 },
    });
    let w = WeightSpec::for_family(a.weight.into(), family, err.sigma_eps);
    let report = condition_c11_report(&w, &err, &reg)?;
    println!("weight {} under {:?} noise (sigma_eps = {})", report.weight, err.kind, err.sigma_eps);
    for e in &report.entries {
        println!("  ∫|{}| / |f_eps*| = {:e}  {}", e.label, e.value, if e.converged { "converged" } else { "NOT converged" });
    }
    if report.converged {
        println!("integrability condition holds");
        Ok(())
    } else {
        println!("integrability condition fails");
        Err(Failure { code: 4, message: "integrals did not converge".into() })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Mc(a) => cmd_mc(a),
        Command::CheckConditions(a) => cmd_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
