//! The `kplane` command-line front end.
//!
//! Every subcommand resolves its configuration, runs one experiment and emits
//! a JSON report (CSV for `symmetrize`) that embeds that configuration. All
//! randomness derives from `--seed`, so a report is a pure function of its
//! arguments.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{Map, Value};

mod commands;
pub mod spec;

use spec::parse_count;

/// Failure of a run, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or input files: exit 2.
    Config(String),
    /// Anything raised by the estimators. Numerical failures exit with 1,
    /// invalid parameters with 2.
    Core(kplane::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 1,
            _ => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<kplane::Error> for CliError {
    fn from(e: kplane::Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Parser, Debug)]
#[command(name = "kplane", version, about = "Numerical experiments with the k-plane transform")]
pub struct Cli {
    #[command(flatten)]
    pub run: RunConfig,
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every subcommand.
#[derive(Args, Debug, Clone, Serialize)]
pub struct RunConfig {
    /// Ambient dimension.
    #[arg(long = "n", global = true, default_value_t = 2)]
    pub n: usize,
    /// Plane dimension, 1 <= k <= n-1.
    #[arg(long = "k", global = true, default_value_t = 1)]
    pub k: usize,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Samples per estimator (quadrature points for `transform`); accepts `1e6`.
    #[arg(long, global = true, default_value = "100000", value_parser = parse_count)]
    pub samples: usize,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true, value_parser = parse_count)]
    pub workers: Option<usize>,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

/// Options of the outer plane sampler.
#[derive(Args, Debug, Clone, Serialize)]
pub struct PlaneArgs {
    /// Quadrature points along each sampled plane.
    #[arg(long)]
    pub inner_points: Option<usize>,
    /// Length scale of the heavy-tailed plane offsets.
    #[arg(long)]
    pub offset_scale: Option<f64>,
    /// Sample offsets uniformly in a ball of this radius instead (truncates the integral).
    #[arg(long)]
    pub truncation: Option<f64>,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// T f on one plane.
    Transform {
        #[arg(long, default_value = "builtin:gaussian")]
        field: String,
        /// Spanning vectors of the plane, n*k numbers, one vector after another.
        #[arg(long)]
        dir: Option<String>,
        /// A point on the plane (default: the origin).
        #[arg(long)]
        through: Option<String>,
    },
    /// ‖T f‖_q.
    Norm {
        #[arg(long, default_value = "builtin:extremizer")]
        field: String,
        #[command(flatten)]
        #[serde(flatten)]
        planes: PlaneArgs,
    },
    /// ‖T♯ f‖_q over the matrix parameterization.
    SharpNorm {
        #[arg(long, default_value = "builtin:extremizer")]
        field: String,
        #[command(flatten)]
        #[serde(flatten)]
        planes: PlaneArgs,
    },
    /// Elliptic and Euclidean norms side by side; value is the composite constant.
    EllipticCheck {
        #[arg(long, default_value = "builtin:extremizer")]
        field: String,
        #[arg(long)]
        per_angle: Option<usize>,
        #[arg(long)]
        inner_points: Option<usize>,
    },
    /// Both sides of Drury's identity; value is their ratio.
    DruryCheck {
        #[arg(long, default_value = "builtin:gaussian")]
        field: String,
        #[arg(long)]
        inner_points: Option<usize>,
        /// Relative volume below which anchor simplices are rejected.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Tx(F*) - Tx(F) for n+1 functions on R^{n-k}.
    BllGap {
        /// One spec per function, n+1 in total.
        #[arg(long = "field", required = true)]
        fields: Vec<String>,
        /// Rows k+1..n of the coefficient matrix, k+1 numbers per row.
        #[arg(long)]
        coeffs: String,
    },
    /// Normalized rearrangement gap of Tx on n+1 sets in R^{n-k}.
    BurchardProbe {
        /// Explicit sets (indicator specs); otherwise a compatible ellipsoidal family is built.
        #[arg(long = "set")]
        sets: Vec<String>,
        #[arg(long)]
        coeffs: String,
        /// Shape matrix of the common ellipsoid, row-major (default: identity).
        #[arg(long)]
        shape: Option<String>,
        /// k+2 dilations (default: all 1).
        #[arg(long)]
        alphas: Option<String>,
        /// k+1 centres in R^{n-k}, concatenated (default: all 0).
        #[arg(long)]
        betas: Option<String>,
        /// Replace this set by a cube of equal volume.
        #[arg(long)]
        square: Option<usize>,
    },
    /// Permissibility of radii with respect to coefficients.
    Permissible {
        /// ρ_0..ρ_n.
        #[arg(long)]
        radii: Option<String>,
        /// Rows k+1..n of the coefficient matrix, k+1 numbers per row.
        #[arg(long)]
        coeffs: Option<String>,
        /// JSON file {"radii": [..], "coeffs": [[..], ..]} instead of the flags.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// ‖T f‖_q / ‖f‖_p.
    Ratio {
        #[arg(long, default_value = "builtin:extremizer")]
        field: String,
        #[command(flatten)]
        #[serde(flatten)]
        planes: PlaneArgs,
    },
    /// ratio(f + eps g) - ratio(f) over a family of perturbations g.
    Perturb {
        #[arg(long, default_value = "builtin:extremizer")]
        field: String,
        /// Explicit perturbations; otherwise a ring of bumps.
        #[arg(long = "perturbation")]
        perturbations: Vec<String>,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 4)]
        bumps: usize,
        #[arg(long, default_value_t = 1.0)]
        distance: f64,
        #[arg(long, default_value_t = 0.6)]
        radius: f64,
        #[command(flatten)]
        #[serde(flatten)]
        planes: PlaneArgs,
    },
    /// Iterates rearrangement and J on a lattice; emits a CSV trace.
    Symmetrize {
        #[arg(long, default_value = "builtin:indicator:box:lo=0.5,-0.5:hi=2.5,0.5")]
        field: String,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        /// Comma-separated step kinds, applied cyclically (rearrange, j, affine-normalize).
        #[arg(long)]
        schedule: Option<String>,
        #[arg(long)]
        h: Option<f64>,
        #[arg(long)]
        half_width: Option<f64>,
        /// Emit a JSON report instead of CSV.
        #[arg(long)]
        json: bool,
        /// Write the final lattice field here (binary grid format).
        #[arg(long)]
        grid_out: Option<PathBuf>,
    },
    /// Ellipsoid fit of the slice superlevel set {v : f(x', v) >= s}.
    SliceFit {
        #[arg(long, default_value = "builtin:extremizer")]
        field: String,
        /// The slice coordinate x' (k numbers, default 0).
        #[arg(long)]
        xp: Option<String>,
        /// Levels s; several give the shared-geometry check.
        #[arg(long, default_value = "0.5")]
        levels: String,
        /// Fit this many random slices with x' uniform in [-1, 1]^k.
        #[arg(long)]
        slices: Option<usize>,
    },
    /// Fraction of segments between random points that stay in a set.
    ConvexityProbe {
        /// Superlevel set {f >= level} of this field ...
        #[arg(long, default_value = "builtin:extremizer")]
        field: String,
        #[arg(long, default_value_t = 0.5)]
        level: f64,
        /// ... or this indicator set instead.
        #[arg(long)]
        set: Option<String>,
        #[arg(long, default_value_t = 16)]
        segment_points: usize,
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
    },
    /// Symmetric decreasing or slice rearrangement of a (rasterized) field.
    Rearrange {
        #[arg(long, default_value = "builtin:gaussian:cx=1,0")]
        field: String,
        #[arg(long, value_enum, default_value = "full")]
        mode: Mode,
        /// Lattice used to rasterize analytic fields.
        #[arg(long, default_value_t = 4.0)]
        half_width: f64,
        #[arg(long, default_value_t = 0.05)]
        h: f64,
        /// Exponent of the reported norms (default: the endpoint p).
        #[arg(long)]
        p: Option<f64>,
        /// Write the rearranged field here (binary grid format).
        #[arg(long)]
        grid_out: Option<PathBuf>,
    },
}

#[derive(clap::ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Full,
    Slice,
}

/// The resolved configuration embedded in every report.
#[derive(Serialize)]
pub struct Params<'a> {
    #[serde(flatten)]
    pub run: &'a RunConfig,
    #[serde(flatten)]
    pub command: &'a Command,
    /// Estimator settings after defaults were applied.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolved: Option<Value>,
}

/// A machine-readable report.
#[derive(Serialize)]
pub struct Report<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    pub samples: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub details: Map<String, Value>,
    pub params: Params<'a>,
}

/// What a subcommand produced.
pub(crate) enum Output {
    Json { value: Option<(f64, f64)>, details: Map<String, Value>, resolved: Option<Value> },
    Csv { body: String, finite: bool, resolved: Value },
}

/// Runs the command line `args` (program name first). Reports go to `out`
/// unless `--out` is given; diagnostics go to `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    if !text.contains("Usage:") {
                        let _ = writeln!(err, "\n{}", Cli::command_usage());
                    }
                    2
                }
            };
        }
    };
    match execute(&cli) {
        Ok((text, finite)) => {
            let written = match &cli.run.out {
                Some(path) => std::fs::write(path, &text).map_err(|e| format!("cannot write {}: {e}", path.display())),
                None => out.write_all(text.as_bytes()).map_err(|e| e.to_string()),
            };
            match written {
                Err(msg) => {
                    let _ = writeln!(err, "error: {msg}");
                    2
                }
                Ok(()) if !finite => {
                    let _ = writeln!(err, "error: estimate is not finite");
                    1
                }
                Ok(()) => 0,
            }
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

impl Cli {
    fn command_usage() -> String {
        use clap::CommandFactory;
        Cli::command().render_usage().to_string()
    }
}

/// Runs the experiment and renders its report. The flag is false when the
/// headline estimate is not finite.
pub fn execute(cli: &Cli) -> Result<(String, bool), CliError> {
    let run = &cli.run;
    if run.k < 1 || run.k >= run.n {
        return Err(CliError::config(format!("need 1 <= k <= n-1, got n = {}, k = {}", run.n, run.k)));
    }
    match commands::dispatch(run, &cli.command)? {
        Output::Json { value, details, resolved } => {
            let report = Report {
                value: value.map(|v| v.0),
                stderr: value.map(|v| v.1),
                samples: run.samples,
                seed: run.seed,
                details,
                params: Params { run, command: &cli.command, resolved },
            };
            let finite = value.is_none_or(|(v, s)| v.is_finite() && s.is_finite());
            let mut text = serde_json::to_string_pretty(&report).map_err(|e| CliError::config(e.to_string()))?;
            text.push('\n');
            Ok((text, finite))
        }
        Output::Csv { body, finite, resolved } => {
            let params = Params { run, command: &cli.command, resolved: Some(resolved) };
            let header = serde_json::to_string(&params).map_err(|e| CliError::config(e.to_string()))?;
            Ok((format!("# {header}\n{body}"), finite))
        }
    }
}
