//! `specsat` command line: subcommand dispatch, output files and exit codes.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, Source};
use crate::error::Error;
use crate::filters::{builtin_schemas, FamilySpec};
use crate::hypotheses::constants_report;
use crate::qualification::{estimate_classical_order, MuDiagnostic, DEFAULT_MU_MAX, DEFAULT_TOL};
use crate::satlab::{default_xi, saturation_sweep_classical, saturation_sweep_maximal, SaturationSweepReport};
use crate::spectral::{source_element_general, source_element_power, IndexFunction, SpectrumSpec};
use crate::toterr::{total_error, AlphaGridSpec};

/// Environment variable overriding the output directory.
pub const OUT_DIR_ENV: &str = "SPECSAT_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "specsat", version, about = "Spectral regularization saturation laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List the built-in filter families and their parameters as JSON.
    Families {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the hypothesis checks for one family.
    Check {
        #[command(flatten)]
        family: FamilyArgs,
        /// Spectrum JSON; adds the operator checks and sets the λ range.
        #[arg(long)]
        spectrum: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the classical qualification order.
    Qualification {
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long)]
        spectrum: Option<String>,
        #[arg(long, default_value_t = DEFAULT_MU_MAX)]
        mu_max: f64,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Worst-case total error for one source at the given noise levels.
    Toterr {
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long, default_value = r#"{"kind":"power","n":400,"s":2.0}"#)]
        spectrum: String,
        #[arg(long, conflicts_with = "rho")]
        mu: Option<f64>,
        #[arg(long)]
        rho: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated noise levels.
        #[arg(long, value_delimiter = ',', required = true)]
        delta: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Saturation sweep described by an experiment config.
    Saturate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct FamilyArgs {
    #[arg(long)]
    family: String,
    /// Family parameter as name=value; repeatable.
    #[arg(long = "param", value_parser = parse_param)]
    params: Vec<(String, f64)>,
    #[arg(long)]
    alpha_max: Option<f64>,
}

impl FamilyArgs {
    fn spec(&self) -> FamilySpec {
        FamilySpec {
            name: self.family.clone(),
            params: self.params.iter().cloned().collect::<BTreeMap<_, _>>(),
            alpha_max: self.alpha_max,
        }
    }
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got '{s}'"))?;
    let v = v.trim().parse::<f64>().map_err(|e| format!("parameter {k}: {e}"))?;
    Ok((k.trim().to_string(), v))
}

fn parse_spectrum(s: &str) -> crate::Result<SpectrumSpec> {
    serde_json::from_str(s).map_err(|e| Error::invalid(format!("--spectrum:{}:{}: {e}", e.line(), e.column())))
}

/// Failure of a subcommand with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_validation() { EXIT_VALIDATION } else { EXIT_NUMERIC },
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_VALIDATION,
        message: format!("{}: {e}", path.display()),
    }
}

/// Runs the command line with `args` (including the program name).
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

/// [`run`] with explicit output streams.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cmd: Command, stdout: &mut dyn Write) -> Result<(), Failure> {
    match cmd {
        Command::Families { out } => emit(&to_json(&builtin_schemas()), out.as_deref(), None, stdout),
        Command::Check { family, spectrum, out } => {
            let op = spectrum.as_deref().map(parse_spectrum).transpose()?.map(|s| s.build()).transpose()?;
            let spec = family.spec();
            let fam = spec.build(op.as_ref().map_or(1.0, |o| o.norm_sq()))?;
            let cap = op.as_ref().map_or_else(|| fam.natural_lambda_cap(), |o| o.norm_sq());
            let report = constants_report(&fam, cap, op.as_ref())?;
            emit(&to_json(&report), out.as_deref(), None, stdout)
        }
        Command::Qualification {
            family,
            spectrum,
            mu_max,
            tol,
            out,
        } => {
            let op = spectrum.as_deref().map(parse_spectrum).transpose()?.map(|s| s.build()).transpose()?;
            let fam = family.spec().build(op.as_ref().map_or(1.0, |o| o.norm_sq()))?;
            let cap = op.as_ref().map_or_else(|| fam.natural_lambda_cap(), |o| o.norm_sq());
            let est = estimate_classical_order(&fam, cap, mu_max, tol)?;
            let payload = QualificationOutput {
                family: est.family.clone(),
                mu_lo: est.mu_lo,
                mu_hi: est.mu_hi,
                sentinel_infinite: est.sentinel_infinite,
                diagnostics: &est.diagnostics,
            };
            emit(&to_json(&payload), out.as_deref(), None, stdout)
        }
        Command::Toterr {
            family,
            spectrum,
            mu,
            rho,
            seed,
            delta,
            out,
        } => {
            let op = parse_spectrum(&spectrum)?.build()?;
            let fam = family.spec().build(op.norm_sq())?;
            if delta.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
                return Err(Error::invalid("--delta values must be positive").into());
            }
            let xi = default_xi(op.dim(), seed);
            let x = match (mu, rho) {
                (Some(m), None) => source_element_power(&op, m, &xi)?,
                (None, Some(r)) => source_element_general(&op, &IndexFunction::parse(&r)?, &xi)?,
                _ => return Err(Error::invalid("give exactly one of --mu or --rho").into()),
            };
            let spec = AlphaGridSpec::default();
            spec.build(fam.alpha_max())?;
            let rows = delta
                .par_iter()
                .map(|&d| {
                    total_error(&op, &fam, &x, d, &spec).map(|r| ToterrRow {
                        delta: d,
                        alpha_star: r.alpha_star,
                        value: r.value,
                        boundary_hit: r.boundary_hit,
                    })
                })
                .collect::<crate::Result<Vec<_>>>()?;
            let mut csv = String::from(ToterrRow::HEADER);
            csv.push('\n');
            for r in &rows {
                csv.push_str(&r.to_csv());
                csv.push('\n');
            }
            emit(&csv, out.as_deref(), None, stdout)
        }
        Command::Saturate { config, out_dir } => saturate(&config, out_dir, stdout),
    }
}

#[derive(Serialize)]
struct QualificationOutput<'a> {
    family: String,
    mu_lo: f64,
    mu_hi: f64,
    sentinel_infinite: bool,
    diagnostics: &'a [MuDiagnostic],
}

fn saturate(config: &Path, out_dir: Option<PathBuf>, stdout: &mut dyn Write) -> Result<(), Failure> {
    let cfg = ExperimentConfig::load(config)?;
    let exp = cfg.build()?;
    let report = match &exp.source {
        Source::Classical { mu0, mus } => saturation_sweep_classical(
            &exp.op,
            &exp.family,
            *mu0,
            mus,
            &exp.xi,
            exp.seed,
            &exp.deltas,
            &exp.options,
        )?,
        Source::Maximal { rho } => {
            saturation_sweep_maximal(&exp.op, &exp.family, rho, &exp.xi, exp.seed, &exp.deltas, &exp.options)?
        }
    };
    let dir = out_dir
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let csv_path = cfg.output.csv.clone().unwrap_or_else(|| PathBuf::from("saturate.csv"));
    let report_path = cfg.output.report.clone().unwrap_or_else(|| PathBuf::from("saturate_report.json"));
    std::fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
    emit(&saturate_csv(&report), Some(&csv_path), Some(&dir), stdout)?;
    emit(&to_json(&report), Some(&report_path), Some(&dir), stdout)
}

fn saturate_csv(report: &SaturationSweepReport) -> String {
    let mut csv = String::from(SaturateRow::HEADER);
    csv.push('\n');
    for e in &report.entries {
        let c = &e.curve;
        for i in 0..c.len() {
            let row = SaturateRow {
                family: report.family.clone(),
                mu_or_rho: e.mu_or_rho.clone(),
                delta: c.deltas[i],
                etot: c.values[i],
                alpha_star: c.alpha_stars[i],
                boundary: c.boundary_flags[i],
            };
            csv.push_str(&row.to_csv());
            csv.push('\n');
        }
    }
    csv
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

/// Writes `content` to `path` (relative paths resolved against `dir`, then
/// the override directory) via a temp file and rename, or to stdout.
fn emit(content: &str, path: Option<&Path>, dir: Option<&Path>, stdout: &mut dyn Write) -> Result<(), Failure> {
    let Some(path) = path else {
        return stdout
            .write_all(content.as_bytes())
            .map_err(|e| io_failure(Path::new("<stdout>"), e));
    };
    let target = match dir {
        Some(d) => d.join(path),
        None => match std::env::var_os(OUT_DIR_ENV) {
            Some(d) if path.is_relative() => PathBuf::from(d).join(path),
            _ => path.to_path_buf(),
        },
    };
    write_atomic(&target, content.as_bytes()).map_err(|e| io_failure(&target, e))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(parent)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(field: &str, s: &str) -> crate::Result<f64> {
    s.parse().map_err(|_| Error::invalid(format!("{field}: cannot parse '{s}'")))
}

fn parse_bool(field: &str, s: &str) -> crate::Result<bool> {
    s.parse().map_err(|_| Error::invalid(format!("{field}: cannot parse '{s}'")))
}

fn fields<const N: usize>(line: &str) -> crate::Result<[&str; N]> {
    let parts: Vec<&str> = line.split(',').collect();
    parts
        .try_into()
        .map_err(|p: Vec<&str>| Error::invalid(format!("expected {N} fields, got {}", p.len())))
}

/// One row of `toterr` output.
#[derive(Debug, Clone, PartialEq)]
pub struct ToterrRow {
    pub delta: f64,
    pub alpha_star: f64,
    pub value: f64,
    pub boundary_hit: bool,
}

impl ToterrRow {
    pub const HEADER: &'static str = "delta,alpha_star,value,boundary_hit";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{}",
            fmt_f64(self.delta),
            fmt_f64(self.alpha_star),
            fmt_f64(self.value),
            self.boundary_hit
        )
    }

    pub fn from_csv(line: &str) -> crate::Result<Self> {
        let [d, a, v, b] = fields::<4>(line)?;
        Ok(ToterrRow {
            delta: parse_f64("delta", d)?,
            alpha_star: parse_f64("alpha_star", a)?,
            value: parse_f64("value", v)?,
            boundary_hit: parse_bool("boundary_hit", b)?,
        })
    }
}

/// One row of `saturate` output.
#[derive(Debug, Clone, PartialEq)]
pub struct SaturateRow {
    pub family: String,
    pub mu_or_rho: String,
    pub delta: f64,
    pub etot: f64,
    pub alpha_star: f64,
    pub boundary: bool,
}

impl SaturateRow {
    pub const HEADER: &'static str = "family,mu_or_rho,delta,etot,alpha_star,boundary";

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{},{},{}",
            self.family,
            self.mu_or_rho,
            fmt_f64(self.delta),
            fmt_f64(self.etot),
            fmt_f64(self.alpha_star),
            self.boundary
        );
        s
    }

    pub fn from_csv(line: &str) -> crate::Result<Self> {
        let [f, m, d, e, a, b] = fields::<6>(line)?;
        Ok(SaturateRow {
            family: f.to_string(),
            mu_or_rho: m.to_string(),
            delta: parse_f64("delta", d)?,
            etot: parse_f64("etot", e)?,
            alpha_star: parse_f64("alpha_star", a)?,
            boundary: parse_bool("boundary", b)?,
        })
    }
}
