//! Command line front end: split score files, fit and evaluate combiners,
//! search for good detector subsets, and generate synthetic score sets.
//!
//! Every failure is reported as a single JSON object on stderr so callers
//! can parse errors mechanically; exit code 0 means the requested artifacts
//! were written.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "oodfuse",
    version,
    about = "Combine out-of-distribution detector scores and search for good score subsets"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Split a score file into the standard evaluation parts.
    Split(SplitArgs),
    /// Fit one combiner on calibration rows and report test metrics.
    Eval(EvalArgs),
    /// Search for well-performing detector subsets.
    Search(SearchArgs),
    /// Generate correlated Gaussian score files with known structure.
    Synth(SynthArgs),
}

#[derive(Args)]
pub struct SplitArgs {
    /// ID score file (cal/val/test protocol).
    #[arg(long, value_name = "FILE")]
    pub id: Option<PathBuf>,
    /// OOD score file (val/test protocol).
    #[arg(long, value_name = "FILE", conflicts_with = "id")]
    pub ood: Option<PathBuf>,
    /// Comma separated split fractions (three for ID, two for OOD).
    #[arg(long)]
    pub fractions: Option<config::CommaList<f64>>,
    /// Shuffle seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output prefix; parts land at PREFIX_<part>.csv.
    #[arg(long, value_name = "PREFIX")]
    pub out_prefix: PathBuf,
    /// Flat key=value config file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

/// Flags shared by `eval` and `search`.
#[derive(Args)]
pub struct CommonArgs {
    /// ID score file; split internally into cal/val/test.
    #[arg(long, value_name = "FILE")]
    pub id: PathBuf,
    /// OOD score file; split internally into val/test.
    #[arg(long, value_name = "FILE")]
    pub ood: PathBuf,
    /// Detector columns to use (default: all columns of the ID file).
    #[arg(long)]
    pub columns: Option<config::CommaList<String>>,
    /// Combiner: vote, ecdf, copula, centerout.
    #[arg(long)]
    pub combiner: Option<String>,
    /// Seed for splits, reference sampling and subset draws.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of points in the region-parameter grid.
    #[arg(long)]
    pub grid: Option<usize>,
    /// ID split fractions cal,val,test.
    #[arg(long)]
    pub id_fractions: Option<config::CommaList<f64>>,
    /// OOD split fractions val,test.
    #[arg(long)]
    pub ood_fractions: Option<config::CommaList<f64>>,
    /// Vote rule: all, any, loose, strict.
    #[arg(long)]
    pub vote_rule: Option<String>,
    /// Marginal family for the copula combiner: uniform, gaussian, beta.
    #[arg(long)]
    pub marginal: Option<String>,
    /// Copula family: frank, clayton, gumbel, plackett, normal, independent.
    /// Default: frank for two columns, independent otherwise.
    #[arg(long)]
    pub copula_family: Option<String>,
    /// Center-outward reference cloud size (default: 4x calibration rows).
    #[arg(long)]
    pub co_n_reference: Option<usize>,
    /// Center-outward nested sphere count.
    #[arg(long)]
    pub co_spheres: Option<usize>,
    /// Entropic regularization strength for the transport solve.
    #[arg(long)]
    pub co_epsilon: Option<f64>,
    /// Center-outward generalization: knn or hull.
    #[arg(long)]
    pub co_variant: Option<String>,
    /// Neighbor count for the knn variant.
    #[arg(long)]
    pub co_k_neighbors: Option<usize>,
    /// Flat key=value config file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Report path.
    #[arg(long, default_value = "eval_report.json")]
    pub out: PathBuf,
    /// Also write the family ROC curve as CSV.
    #[arg(long, value_name = "FILE")]
    pub roc_out: Option<PathBuf>,
    /// Persist the fitted model as a JSON document.
    #[arg(long, value_name = "FILE")]
    pub save_model: Option<PathBuf>,
}

#[derive(Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Strategy: pairs, sensitivity, beam.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Proxy OOD score file ranked against instead of validation OOD.
    #[arg(long, value_name = "FILE")]
    pub proxy: Option<PathBuf>,
    /// Fraction of ranked pairs kept as survivors.
    #[arg(long)]
    pub top_frac: Option<f64>,
    /// Tuples kept per beam level.
    #[arg(long)]
    pub beam_width: Option<usize>,
    /// Maximum tuple size the beam reaches.
    #[arg(long)]
    pub beam_depth: Option<usize>,
    /// Random subsets drawn by the sensitivity strategy.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Percentile defining a positive label in the sensitivity regression.
    #[arg(long)]
    pub percentile: Option<f64>,
    /// Proxy survivors re-ranked on validation OOD rows.
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Allow reading test-tagged files (final evaluation only).
    #[arg(long)]
    pub final_eval: bool,
    /// Near-OOD score file for the Pareto table.
    #[arg(long, value_name = "FILE", requires = "pareto_far")]
    pub pareto_near: Option<PathBuf>,
    /// Far-OOD score file for the Pareto table.
    #[arg(long, value_name = "FILE", requires = "pareto_near")]
    pub pareto_far: Option<PathBuf>,
    /// Pareto CSV path (default: report path with a _pareto.csv suffix).
    #[arg(long, value_name = "FILE")]
    pub pareto_out: Option<PathBuf>,
    /// Report path.
    #[arg(long, default_value = "search_report.json")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SynthArgs {
    /// ID rows to generate.
    #[arg(long)]
    pub n_id: usize,
    /// OOD rows to generate.
    #[arg(long)]
    pub n_ood: usize,
    /// Comma separated OOD mean shifts; the length sets the dimension.
    #[arg(long)]
    pub mu: config::CommaList<f64>,
    /// Pairwise correlation shared by all column pairs.
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,
    /// Generator seed.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output prefix; files land at PREFIX_id.csv and PREFIX_ood.csv.
    #[arg(long, value_name = "PREFIX")]
    pub out_prefix: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = err.print();
                return ExitCode::SUCCESS;
            }
            print_error(&err.to_string());
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Cmd::Split(args) => commands::cmd_split(args),
        Cmd::Eval(args) => commands::cmd_eval(args),
        Cmd::Search(args) => commands::cmd_search(args),
        Cmd::Synth(args) => commands::cmd_synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            print_error(&format!("{err:#}"));
            ExitCode::FAILURE
        }
    }
}

fn print_error(message: &str) {
    eprintln!("{}", serde_json::json!({ "error": message }));
}
