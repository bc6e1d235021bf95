//! The `lcr` command line: run the Local Control Regression pipeline on a
//! CSV of location changes, or generate a synthetic benchmark dataset.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/numeric error.

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use lcr_core::pipeline::{self, ClusterVars, LcrConfig, OutputFormat};
use lcr_core::rptree::TreeConfig;
use lcr_core::synthkit::{self, SynthConfig};
use lcr_core::Variable;

#[derive(Debug, Parser)]
#[command(
    name = "lcr",
    version,
    about = "Local Control Regression: cluster on confounders, regress within clusters, \
             FDR-adjust the slopes, and explain them with regression trees",
    args_conflicts_with_subcommands = true
)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted clusters
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Input CSV (canonical column layout)
    #[arg(long)]
    input: Option<PathBuf>,

    /// Number of clusters
    #[arg(long, default_value_t = 10)]
    k: usize,

    /// Comma-separated clustering variables, or `auto` for stepwise selection
    #[arg(long, value_name = "csv-list|auto")]
    cluster_vars: Option<ClusterVarsArg>,

    /// Row ids to exclude before analysis (`none` or `""` for no exclusions)
    #[arg(long, value_name = "id,id,...", default_value = "128")]
    exclude: IdList,

    /// Response variable
    #[arg(long, default_value = "Change LE")]
    response: Variable,

    /// Exposure variable
    #[arg(long, default_value = "Change PM")]
    exposure: Variable,

    /// Entry p-value for stepwise selection
    #[arg(long, default_value_t = 0.05)]
    alpha_enter: f64,

    /// Minimum LogWorth to accept a tree split
    #[arg(long, default_value_t = 3.0)]
    logworth_min: f64,

    /// Minimum rows per tree leaf
    #[arg(long, default_value_t = 5)]
    min_leaf: usize,

    /// Maximum tree depth
    #[arg(long, default_value_t = 6)]
    max_depth: usize,

    /// Output directory
    #[arg(long, default_value = "./lcr_out")]
    out: PathBuf,

    /// Output formats
    #[arg(long, value_delimiter = ',', default_value = "json,csv,dot")]
    format: Vec<OutputFormat>,
}

#[derive(Debug, Clone)]
enum ClusterVarsArg {
    Auto,
    List(Vec<Variable>),
}

impl std::str::FromStr for ClusterVarsArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(ClusterVarsArg::Auto);
        }
        s.split(',')
            .map(|name| Variable::from_name(name.trim()).map_err(|e| e.to_string()))
            .collect::<Result<Vec<_>, _>>()
            .map(ClusterVarsArg::List)
    }
}

#[derive(Debug, Clone)]
struct IdList(Vec<u32>);

impl std::str::FromStr for IdList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() || s == "none" {
            return Ok(IdList(Vec::new()));
        }
        s.split(',')
            .map(|part| {
                part.trim()
                    .parse::<u32>()
                    .map_err(|_| format!("`{part}` is not a row id"))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(IdList)
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Number of planted clusters
    #[arg(long, default_value_t = 10)]
    k: usize,

    /// Locations per cluster
    #[arg(long, default_value_t = 21)]
    n: usize,

    /// Response noise standard deviation
    #[arg(long, default_value_t = 0.5)]
    noise: f64,

    /// Random seed
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
}

fn config_from(args: &RunArgs, input: PathBuf, exclude_is_default: bool) -> LcrConfig {
    let cluster_vars = match &args.cluster_vars {
        None => LcrConfig::default().cluster_vars,
        Some(ClusterVarsArg::Auto) => ClusterVars::Auto,
        Some(ClusterVarsArg::List(vars)) => ClusterVars::Explicit(vars.clone()),
    };
    let exclude_reason = if exclude_is_default {
        LcrConfig::default().exclude_reason
    } else {
        "excluded via --exclude".to_string()
    };
    LcrConfig {
        input,
        exclude_row_ids: args.exclude.0.clone(),
        exclude_reason,
        response: args.response,
        exposure: args.exposure,
        cluster_vars,
        k: args.k,
        alpha_enter: args.alpha_enter,
        min_cluster_n_for_slr: 3,
        tree: TreeConfig {
            logworth_min: args.logworth_min,
            min_leaf: args.min_leaf,
            max_depth: args.max_depth,
        },
        out_dir: args.out.clone(),
        formats: args.format.clone(),
    }
}

fn run_analysis(args: &RunArgs, exclude_is_default: bool) -> Result<(), String> {
    let input = args
        .input
        .clone()
        .ok_or_else(|| "missing required --input <path>".to_string())?;
    let cfg = config_from(args, input, exclude_is_default);
    let report = pipeline::run_lcr(&cfg).map_err(|e| e.to_string())?;
    let written =
        pipeline::emit_report(&report, &cfg.out_dir, &cfg.formats).map_err(|e| e.to_string())?;
    print!("{}", pipeline::format_report_summary(&report));
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run_synth(args: &SynthArgs) -> Result<(), String> {
    let cfg = SynthConfig::well_separated(args.k, args.n, args.noise, args.seed);
    let sd = synthkit::generate(&cfg).map_err(|e| e.to_string())?;
    let file = File::create(&args.out).map_err(|e| format!("{}: {e}", args.out.display()))?;
    synthkit::write_csv(&sd, BufWriter::new(file))
        .map_err(|e| format!("{}: {e}", args.out.display()))?;
    println!(
        "wrote {} ({} records, {} clusters, rng: {})",
        args.out.display(),
        sd.dataset.records.len(),
        cfg.k,
        synthkit::RNG_ALGORITHM
    );
    Ok(())
}

/// Parse arguments and run. Returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let exclude_is_default = !argv.iter().any(|a| {
        let s = a.to_string_lossy();
        s == "--exclude" || s.starts_with("--exclude=")
    });
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            eprint!("{e}");
            return 1;
        }
    };

    let result = match &cli.command {
        Some(Command::Synth(args)) => run_synth(args),
        None => {
            if cli.run.input.is_none() {
                // Usage error, mirroring clap's missing-argument behavior.
                eprintln!("error: missing required --input <path>\n\nUsage: lcr --input <path> [options]\n\nFor more information, try '--help'.");
                return 1;
            }
            run_analysis(&cli.run, exclude_is_default)
        }
    };
    match result {
        Ok(()) => 0,
        Err(msg) => {
            eprintln!("error: {msg}");
            2
        }
    }
}
