//! Command-line surface: `spectrum`, `verify`, `sweep` and `potential`.
//!
//! Exit codes: 0 success, 1 bad input, 2 numerical failure, 3 a verification
//! identity or internal-consistency check failed.

use std::f64::consts::PI;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{SpectralConfig, DEFAULT_N_MAX, DEFAULT_QUAD_NODES};
use crate::error::ZsError;
use crate::ode::IntegratorConfig;
use crate::potential::{FourierPotential, Preset, SMALL_NORM};
use crate::quasimomentum::{ActionSet, GapGrids};
use crate::spectrum::compute_table;
use crate::verify::{potential_info, table_summary, verify, Analysis, PotentialInfo, TableSummary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

pub const SPECTRUM_CSV_HEADER: &str = "# zs-spectral spectrum csv v1";
pub const VERIFY_CSV_HEADER: &str = "# zs-spectral verify csv v1";
pub const SWEEP_CSV_HEADER: &str = "# zs-spectral sweep csv v1";

/// Environment variable capping worker threads (0 or unset = automatic).
pub const THREADS_ENV: &str = "ZS_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "zs",
    version,
    about = "Periodic Zakharov-Shabat spectra, actions and their identities"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Gaps, heights and actions.
    Spectrum(RunArgs),
    /// Full verification report; exits 3 if an identity or internal check fails.
    Verify(RunArgs),
    /// Scaling table over an amplitude grid.
    Sweep(SweepArgs),
    /// Writes the selected potential as JSON.
    Potential(SourceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct SourceArgs {
    /// NAME[:params], e.g. constant:0.1, two_mode:0.05,0.03, random_small.
    #[arg(long, conflicts_with = "potential", required_unless_present = "potential")]
    pub preset: Option<String>,
    /// Potential JSON file.
    #[arg(long)]
    pub potential: Option<PathBuf>,
    /// Seed for random_small.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Amplitude for random_small.
    #[arg(long)]
    pub amp: Option<f64>,
    /// Output file; stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct NumericArgs {
    #[arg(long, default_value_t = DEFAULT_N_MAX)]
    pub n_max: usize,
    #[arg(long, default_value = "1e-11")]
    pub ode_rtol: f64,
    #[arg(long, default_value = "1e-13")]
    pub ode_atol: f64,
    #[arg(long, default_value_t = DEFAULT_QUAD_NODES)]
    pub quad_nodes: usize,
    #[arg(long, default_value = "1e-9")]
    pub gap_tol: f64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub numeric: NumericArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Preset family; its amplitude parameter is replaced by each grid value.
    #[arg(long)]
    pub preset: String,
    /// Comma-separated increasing positive amplitudes.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub amps: Vec<f64>,
    /// Seed for random_small.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub numeric: NumericArgs,
}

/// Numerical configuration plus output choices.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub spectral: SpectralConfig,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl RunConfig {
    fn new(n: &NumericArgs, out: Option<PathBuf>, seed: Option<u64>) -> Result<Self, ZsError> {
        let spectral = SpectralConfig {
            n_max: n.n_max,
            ode: IntegratorConfig {
                rel_tol: n.ode_rtol,
                abs_tol: n.ode_atol,
                ..IntegratorConfig::default()
            },
            quad_nodes: n.quad_nodes,
            gap_tol: n.gap_tol,
        };
        spectral.validate()?;
        Ok(Self {
            spectral,
            format: n.format,
            out,
            seed,
        })
    }
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn input(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: msg.into(),
        }
    }
}

impl From<ZsError> for Failure {
    fn from(e: ZsError) -> Self {
        let code = match e {
            ZsError::Config(_) | ZsError::Potential(_) | ZsError::UnknownPreset(_) => EXIT_INPUT,
            _ => EXIT_NUMERIC,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn load_source(src: &SourceArgs) -> Result<(FourierPotential, String), Failure> {
    if let Some(path) = &src.potential {
        let text = fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        let q = FourierPotential::from_json(&text)?;
        return Ok((q, path.display().to_string()));
    }
    let spec = src
        .preset
        .as_deref()
        .ok_or_else(|| Failure::input("either --preset or --potential is required"))?;
    let preset = Preset::parse(spec, src.seed, src.amp)?;
    Ok((preset.build()?, preset.to_string()))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::input(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure {
                    code: EXIT_NUMERIC,
                    message: e.to_string(),
                })
        }
    }
}

fn csv_text<S: Serialize>(header: &str, rows: &[S]) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Failure {
            code: EXIT_NUMERIC,
            message: e.to_string(),
        })?;
    }
    let body = w.into_inner().map_err(|e| Failure {
        code: EXIT_NUMERIC,
        message: e.to_string(),
    })?;
    Ok(format!("{header}\n{}", String::from_utf8(body).expect("csv is utf-8")))
}

#[derive(Debug, Serialize)]
struct SpectrumOutput {
    potential: PotentialInfo,
    table: TableSummary,
}

pub fn cmd_spectrum(args: &RunArgs) -> Result<i32, Failure> {
    let cfg = RunConfig::new(&args.numeric, args.source.out.clone(), args.source.seed)?;
    let (q, source) = load_source(&args.source)?;
    let table = compute_table(&q, &cfg.spectral)?;
    let grids = GapGrids::build(&q, &table)?;
    let actions = ActionSet::compute(&q, &table, &grids)?;
    let summary = table_summary(&table, &actions);
    let text = match cfg.format {
        Format::Json => {
            let out = SpectrumOutput {
                potential: potential_info(&q, &source),
                table: summary,
            };
            serde_json::to_string_pretty(&out).expect("serializes") + "\n"
        }
        Format::Csv => csv_text(SPECTRUM_CSV_HEADER, &summary.gaps)?,
    };
    emit(&cfg.out, &text)?;
    Ok(EXIT_OK)
}

pub fn cmd_verify(args: &RunArgs) -> Result<i32, Failure> {
    let cfg = RunConfig::new(&args.numeric, args.source.out.clone(), args.source.seed)?;
    let (q, source) = load_source(&args.source)?;
    let report = verify(&q, &cfg.spectral, &source)?;
    let text = match cfg.format {
        Format::Json => report.to_json() + "\n",
        Format::Csv => csv_text(VERIFY_CSV_HEADER, &report.checks)?,
    };
    emit(&cfg.out, &text)?;
    for c in report.checks.iter().filter(|c| !c.holds) {
        eprintln!("check {} ({:?}) does not hold: margin {:e}", c.name, c.kind, c.margin);
    }
    Ok(if report.overall_pass { EXIT_OK } else { EXIT_VERIFY })
}

/// One row of the sweep table.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SweepRow {
    pub amp: f64,
    pub h0: f64,
    pub sum_a: f64,
    pub u: f64,
    pub a_l2_sq: f64,
    pub u_residual: f64,
    pub cubic_bound: f64,
    pub du_minus_2a: f64,
    pub frequency_bound: f64,
}

pub fn sweep_row(amp: f64, a: &Analysis) -> SweepRow {
    let a2 = a.actions.norm2();
    SweepRow {
        amp,
        h0: a.h0,
        sum_a: a.actions.sum(),
        u: a.u,
        a_l2_sq: a2 * a2,
        u_residual: (a.u - a2 * a2).abs(),
        cubic_bound: 4.0 * PI * 3f64.sqrt() * a2.powi(3),
        du_minus_2a: a.du_minus_2a(),
        frequency_bound: 11.0 * PI * PI * a.actions.norm_inf() * a2,
    }
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<i32, Failure> {
    let cfg = RunConfig::new(&args.numeric, args.out.clone(), args.seed)?;
    if args.amps.is_empty() {
        return Err(Failure::input("empty amplitude grid"));
    }
    if args.amps.iter().any(|a| !(a.is_finite() && *a > 0.0)) || args.amps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Failure::input("amplitudes must be positive and strictly increasing"));
    }
    let family = Preset::parse(&args.preset, args.seed, None)?;
    let mut potentials = Vec::new();
    for &amp in &args.amps {
        let q = family.with_amplitude(amp)?.build()?;
        if q.norm() > SMALL_NORM {
            return Err(Failure::input(format!(
                "amplitude {amp} gives norm {} above 1/8",
                q.norm()
            )));
        }
        potentials.push((amp, q));
    }
    let mut rows = Vec::new();
    for (amp, q) in &potentials {
        let a = Analysis::run(q, &cfg.spectral)?;
        rows.push(sweep_row(*amp, &a));
    }
    let text = match cfg.format {
        Format::Json => serde_json::to_string_pretty(&rows).expect("serializes") + "\n",
        Format::Csv => csv_text(SWEEP_CSV_HEADER, &rows)?,
    };
    emit(&cfg.out, &text)?;
    Ok(EXIT_OK)
}

pub fn cmd_potential(args: &SourceArgs) -> Result<i32, Failure> {
    let (q, _) = load_source(args)?;
    emit(&args.out, &(q.to_json() + "\n"))?;
    Ok(EXIT_OK)
}

/// Reads [`THREADS_ENV`]; `None` means automatic.
pub fn thread_cap() -> Result<Option<usize>, Failure> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(0) => Ok(None),
            Ok(n) => Ok(Some(n)),
            Err(_) => Err(Failure::input(format!(
                "{THREADS_ENV} must be a non-negative integer, got `{v}`"
            ))),
        },
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let result = thread_cap().and_then(|cap| {
        if let Some(n) = cap {
            // Fails harmlessly if a pool already exists in this process.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        match &cli.command {
            Command::Spectrum(a) => cmd_spectrum(a),
            Command::Verify(a) => cmd_verify(a),
            Command::Sweep(a) => cmd_sweep(a),
            Command::Potential(a) => cmd_potential(a),
        }
    });
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("zs").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn defaults() {
        let Command::Spectrum(a) = parse(&["spectrum", "--preset", "zero"]).command else {
            panic!()
        };
        let cfg = RunConfig::new(&a.numeric, None, None).unwrap();
        assert_eq!(cfg.spectral, SpectralConfig::default());
        assert_eq!(cfg.format, Format::Json);
    }

    #[test]
    fn source_is_required_and_exclusive() {
        assert!(Cli::try_parse_from(["zs", "spectrum"]).is_err());
        assert!(Cli::try_parse_from(["zs", "spectrum", "--preset", "zero", "--potential", "x.json"]).is_err());
    }

    #[test]
    fn invalid_numeric_flags_are_input_errors() {
        let Command::Spectrum(a) = parse(&["spectrum", "--preset", "zero", "--n-max", "0"]).command else {
            panic!()
        };
        let err = cmd_spectrum(&a).unwrap_err();
        assert_eq!(err.code, EXIT_INPUT);
    }

    #[test]
    fn sweep_grid_validation() {
        for amps in [
            &["--amps"][..],
            &["--amps", "0.02,0.01"],
            &["--amps=-0.1"],
            &["--amps", "0.2"],
        ] {
            let args: Vec<&str> = ["sweep", "--preset", "single_mode"]
                .iter()
                .chain(amps)
                .copied()
                .collect();
            let Command::Sweep(a) = parse(&args).command else {
                panic!()
            };
            assert_eq!(cmd_sweep(&a).unwrap_err().code, EXIT_INPUT, "amps {amps:?}");
        }
    }

    #[test]
    fn error_codes() {
        assert_eq!(Failure::from(ZsError::UnknownPreset("x".into())).code, EXIT_INPUT);
        assert_eq!(Failure::from(ZsError::SingularMatrix).code, EXIT_NUMERIC);
        assert_eq!(Failure::from(ZsError::NoCriticalPoint { n: 3 }).code, EXIT_NUMERIC);
    }
}
