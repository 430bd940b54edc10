//! Command-line definition and merging with configuration files.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::config::Config;

#[derive(Debug, Parser)]
#[command(
    name = "bogotool",
    version,
    about = "Numerical checks of divergence-equation, singular-integral and p-Stokes estimates"
)]
pub struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// JSON-lines report; standard output when absent.
    #[arg(long, global = true, visible_alias = "report", value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// TOML file with one table per subcommand.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Add wall-clock times to the records.
    #[arg(long, global = true)]
    pub timing: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pointwise and discrete-calculus checks.
    #[command(subcommand)]
    Verify(Verify),
    /// Whitney decomposition of a domain into dyadic cubes.
    Whitney(WhitneyArgs),
    /// Singular integral kernels and truncated operators.
    #[command(subcommand)]
    Cz(Cz),
    /// Bogovskii solution operator on a cube.
    #[command(subcommand)]
    Bogovskii(Bogovskii),
    /// Stationary p-Stokes flow in the stream-function formulation.
    #[command(subcommand)]
    Pstokes(Pstokes),
}

#[derive(Debug, Subcommand)]
pub enum Verify {
    /// Young inequalities for the (p, δ) N-function.
    Young(YoungArgs),
    /// Equivalences of the monotonicity quantities of the power-law stress.
    Hammer(HammerArgs),
    /// Modular bound of difference quotients by derivatives.
    Eq2(Eq2Args),
    /// Product rule, partial integration and commutation of difference quotients.
    Diffquot(DiffquotArgs),
}

#[derive(Debug, Clone, Args)]
pub struct NFuncArgs {
    /// Growth exponent.
    #[arg(long, default_value_t = 1.5)]
    pub p: f64,
    /// Shift of the N-function.
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
}

#[derive(Debug, Args)]
pub struct YoungArgs {
    #[command(flatten)]
    pub nf: NFuncArgs,
    /// Values of ε.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 1.0])]
    pub eps: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Sampling range of t and s (log-uniform).
    #[arg(long, default_value_t = 1e-3)]
    pub lo: f64,
    #[arg(long, default_value_t = 1e3)]
    pub hi: f64,
}

#[derive(Debug, Args)]
pub struct HammerArgs {
    #[command(flatten)]
    pub nf: NFuncArgs,
    /// Tensor dimension.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub dim: u8,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct Eq2Args {
    #[command(flatten)]
    pub nf: NFuncArgs,
    /// Cells per axis on the unit square.
    #[arg(long, default_value_t = 128)]
    pub grid: usize,
    /// Shifts in grid steps.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4])]
    pub h_steps: Vec<usize>,
    /// Distance from the boundary, in grid steps, of the left-hand side's region.
    #[arg(long, default_value_t = 4)]
    pub margin_steps: usize,
}

#[derive(Debug, Args)]
pub struct DiffquotArgs {
    #[command(flatten)]
    pub nf: NFuncArgs,
    #[arg(long, default_value_t = 128)]
    pub grid: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4])]
    pub h_steps: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Shape {
    Ball,
    Square,
    Annulus,
}

#[derive(Debug, Args)]
pub struct WhitneyArgs {
    #[arg(long, value_enum, default_value_t = Shape::Ball)]
    pub shape: Shape,
    /// Finest dyadic level.
    #[arg(long, default_value_t = -12, allow_negative_numbers = true)]
    pub min_level: i32,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    /// Boundary band counted as covered; 5 √n 2^min-level when absent.
    #[arg(long)]
    pub band: Option<f64>,
    #[arg(long, default_value_t = 0.999)]
    pub min_coverage: f64,
    /// Cube list output (CSV).
    #[arg(long, value_name = "PATH")]
    pub cubes: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Cz {
    /// Size, smoothness, homogeneity and cancellation of a kernel.
    Check(CzCheckArgs),
    /// Stability in ε of weighted and Orlicz bounds of truncated operators.
    Bound(CzBoundArgs),
}

#[derive(Debug, Args)]
pub struct CzCheckArgs {
    /// riesz-<k>, log-grad, bogovskii-jij-surrogate, non-cancelling, zero.
    #[arg(long, default_value = "riesz-1")]
    pub kernel: String,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Random triples for the standard-kernel constants.
    #[arg(long, default_value_t = 20_000)]
    pub samples: usize,
    /// Points of the sphere rule.
    #[arg(long, default_value_t = 256)]
    pub order: usize,
}

#[derive(Debug, Args)]
pub struct CzBoundArgs {
    #[arg(long, default_value = "riesz-1")]
    pub kernel: String,
    /// Cells per axis on the unit square.
    #[arg(long, default_value_t = 128)]
    pub grid: usize,
    /// Truncation radii 2^-j.
    #[arg(long, value_delimiter = ',', default_values_t = [3i32, 4, 5, 6, 7])]
    pub eps_levels: Vec<i32>,
    /// Weights: const or power:<alpha>.
    #[arg(long, value_delimiter = ',', default_values_t = ["const".to_string(), "power:0.5".to_string()])]
    pub weight: Vec<String>,
    /// Lebesgue exponent of the weighted bound.
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    /// Exponent and shift of an N-function for the Orlicz bound.
    #[arg(long, value_delimiter = ',', value_name = "P,DELTA")]
    pub orlicz: Option<Vec<f64>>,
    /// Largest accepted max/min of the sup over the family across ε.
    #[arg(long, default_value_t = 2.0)]
    pub max_variation: f64,
    #[arg(long, default_value_t = 20_000)]
    pub samples: usize,
}

#[derive(Debug, Subcommand)]
pub enum Bogovskii {
    /// Solve div v = f on a cube and write v.
    Solve(BogSolveArgs),
    /// Gradient and difference-quotient bound ratios.
    Estimates(BogEstimatesArgs),
}

#[derive(Debug, Clone, Args)]
pub struct BogCommon {
    /// Space dimension.
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    /// Gauss points per unit of radial integration.
    #[arg(long, default_value_t = 16)]
    pub inner_order: usize,
    /// Side of the cube centered at the origin.
    #[arg(long, default_value_t = 1.0)]
    pub cube_scale: f64,
    /// Subtract the mean of f first.
    #[arg(long)]
    pub project_mean: bool,
}

#[derive(Debug, Args)]
pub struct BogSolveArgs {
    #[command(flatten)]
    pub common: BogCommon,
    /// Cells per axis.
    #[arg(long, default_value_t = 64)]
    pub grid: usize,
    /// Preset name or a field file (.csv or binary).
    #[arg(long, default_value = "gauss-dx")]
    pub f: String,
    /// Output of v (.csv or binary).
    #[arg(long, value_name = "PATH")]
    pub field: Option<PathBuf>,
    /// Fail when ‖div v - f‖₂/‖f‖₂ exceeds this.
    #[arg(long)]
    pub max_residual: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BogEstimatesArgs {
    #[command(flatten)]
    pub common: BogCommon,
    /// Cells per axis.
    #[arg(long, default_value_t = 128)]
    pub grid: usize,
    /// Presets or field files; every preset of the dimension when absent.
    #[arg(long, value_delimiter = ',')]
    pub f: Vec<String>,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, default_value = "const")]
    pub weight: String,
    /// Shifts in grid steps.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4, 8, 16, 32])]
    pub h_steps: Vec<usize>,
    /// Shift of the N-function for the modular ratios.
    #[arg(long)]
    pub orlicz_delta: Option<f64>,
    /// Largest accepted max/min of the difference-quotient ratio over h.
    #[arg(long, default_value_t = 2.0)]
    pub max_spread: f64,
}

#[derive(Debug, Subcommand)]
pub enum Pstokes {
    /// Minimize the discrete energy and report the solution.
    Solve(PsSolveArgs),
    /// Interior regularity estimate under grid refinement.
    Regularity(PsRegularityArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PsCommon {
    #[arg(long, default_value_t = 1.5)]
    pub p: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    /// Forcing preset.
    #[arg(long, default_value = "vortex")]
    pub f: String,
    #[arg(long, default_value_t = bogotool_core::pstokes::VORTEX_AMPLITUDE)]
    pub amplitude: f64,
    /// Side of the square domain.
    #[arg(long, default_value_t = 1.0)]
    pub side: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
}

#[derive(Debug, Args)]
pub struct PsSolveArgs {
    #[command(flatten)]
    pub common: PsCommon,
    /// Cells per axis.
    #[arg(long, default_value_t = 64)]
    pub grid: usize,
    /// Random test fields for the weak residual.
    #[arg(long, default_value_t = 20)]
    pub weak_tests: usize,
    /// Output of the velocity (.csv or binary).
    #[arg(long, value_name = "PATH")]
    pub field: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PsRegularityArgs {
    #[command(flatten)]
    pub common: PsCommon,
    /// Grids of the refinement study.
    #[arg(long, value_delimiter = ',', default_values_t = [16usize, 32, 64])]
    pub grid_list: Vec<usize>,
    /// Grid of the difference-quotient study; 0 skips it.
    #[arg(long, default_value_t = 128)]
    pub tang_grid: usize,
    /// Shifts in grid steps for the difference-quotient study.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4])]
    pub h_steps: Vec<usize>,
    /// Largest accepted max/min across the study.
    #[arg(long, default_value_t = 2.0)]
    pub max_spread: f64,
    /// Refinement table (CSV).
    #[arg(long, value_name = "PATH")]
    pub table: Option<PathBuf>,
}

/// Why the arguments were rejected.
#[derive(Debug)]
pub enum ParseError {
    Clap(clap::Error),
    Config(anyhow::Error),
}

/// Parses `args`, filling flags absent from the command line from `--config`.
pub fn parse<I, T>(args: I) -> Result<Cli, ParseError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let matches = Cli::command()
        .try_get_matches_from(&args)
        .map_err(ParseError::Clap)?;
    let Some(path) = matches.get_one::<PathBuf>("config") else {
        return Cli::from_arg_matches(&matches).map_err(ParseError::Clap);
    };
    let config = Config::load(path).map_err(ParseError::Config)?;

    let mut names = Vec::new();
    let mut leaf: &ArgMatches = &matches;
    let mut cmd = Cli::command();
    while let Some((name, sub)) = leaf.subcommand() {
        names.push(name.to_string());
        cmd = cmd
            .find_subcommand(name)
            .expect("matched subcommand")
            .clone();
        leaf = sub;
    }
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let section = names.join(".");
    let root = Cli::command();
    let mut entries: Vec<(String, Option<String>, String)> = Vec::new();
    for (k, v) in config.globals().map_err(ParseError::Config)? {
        entries.push((k, v, "top level".into()));
    }
    for (k, v) in config.section(&name_refs).map_err(ParseError::Config)? {
        entries.push((k, v, format!("[{section}] or a parent table")));
    }
    // a subcommand table overrides its parents
    let mut seen = std::collections::HashSet::new();
    entries.reverse();
    entries.retain(|(k, _, _)| seen.insert(k.replace('-', "_")));
    entries.reverse();
    let mut extra: Vec<OsString> = Vec::new();
    for (key, value, place) in entries {
        let id = key.replace('-', "_");
        let arg = cmd
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_id().as_str() == id && a.get_long().is_some());
        let Some(arg) = arg else {
            return Err(ParseError::Config(anyhow::anyhow!(
                "unknown key `{key}` at {place}"
            )));
        };
        if id == "config" {
            return Err(ParseError::Config(anyhow::anyhow!(
                "`config` cannot be set from a configuration file"
            )));
        }
        if leaf.value_source(&id) == Some(ValueSource::CommandLine) {
            continue;
        }
        let takes_value = arg.get_action().takes_values();
        extra.push(format!("--{}", arg.get_long().expect("long flag")).into());
        match (takes_value, value) {
            (true, Some(v)) => extra.push(v.into()),
            (false, None) => {}
            (true, None) => {
                return Err(ParseError::Config(anyhow::anyhow!("`{key}` needs a value")))
            }
            (false, Some(_)) => {
                return Err(ParseError::Config(anyhow::anyhow!(
                    "`{key}` is a switch: use true or false"
                )))
            }
        }
    }
    let mut all = args;
    all.extend(extra);
    Cli::try_parse_from(all).map_err(ParseError::Clap)
}
