use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "bvs", version, about = "Bayesian variable selection with weighted tempered Gibbs sampling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the posterior over inclusion states and write per-covariate estimates.
    Run(RunArgs),
    /// Write exact inclusion probabilities for a small problem.
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LikelihoodArg {
    Linear,
    Binomial,
    Negbin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Wtgs,
    Tgs,
    Wgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Tsv,
    Json,
}

/// Input selection and preprocessing shared by both subcommands.
#[derive(Clone, Debug, Args)]
pub struct DataArgs {
    /// Comma- or tab-separated file with a header row.
    #[arg(long)]
    pub input: PathBuf,
    /// Name of the response column.
    #[arg(long)]
    pub response: String,
    /// Name of the column holding binomial trial counts.
    #[arg(long)]
    pub total_count: Option<String>,
    #[arg(long, value_enum, default_value_t = LikelihoodArg::Linear)]
    pub likelihood: LikelihoodArg,
    /// Scale every covariate to mean 0 and standard deviation 1.
    #[arg(long)]
    pub standardize: bool,
    /// Subtract the mean from a linear response.
    #[arg(long)]
    pub center_response: bool,
    /// Add an intercept to the linear model.
    #[arg(long)]
    pub linear_bias: bool,
    /// Negative-binomial offset; defaults to the log mean count.
    #[arg(long)]
    pub psi0: Option<f64>,
    /// Prior inclusion probability; defaults to min(5/P, 1/2).
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.01)]
    pub tau_bias: f64,
    /// Results file; standard output when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Tsv)]
    pub format: FormatArg,
}

#[derive(Clone, Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Beta prior on h (needs --h-beta too).
    #[arg(long, conflicts_with = "h", requires = "h_beta")]
    pub h_alpha: Option<f64>,
    #[arg(long, conflicts_with = "h", requires = "h_alpha")]
    pub h_beta: Option<f64>,
    #[arg(long, default_value_t = 5.0)]
    pub epsilon: f64,
    /// Fixed index-zero weight; adapted during burn-in when omitted.
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long, default_value_t = 0.25)]
    pub f_omega: f64,
    #[arg(long)]
    pub subset_size: Option<usize>,
    /// Anchor size; defaults to a quarter of the subset size, at least 1.
    #[arg(long, requires = "subset_size")]
    pub anchor_size: Option<usize>,
    #[arg(long, default_value_t = 60_000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 10_000)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = VariantArg::Wtgs)]
    pub variant: VariantArg,
    #[arg(long, default_value_t = 0.03)]
    pub nu_rw_scale: f64,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// Include per-iteration diagnostics (JSON output only).
    #[arg(long)]
    pub trace: bool,
}

#[derive(Clone, Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Dispersion held fixed for negative-binomial quadrature.
    #[arg(long, default_value_t = 1.0)]
    pub nu: f64,
    /// Relative tolerance of the count-model quadrature.
    #[arg(long, default_value_t = 1e-8)]
    pub rel_tol: f64,
}

/// Default anchor size for a subset of `size` indices.
pub fn default_anchor(size: usize) -> usize {
    if size < 2 {
        0
    } else {
        (size / 4).clamp(1, size - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchor_defaults() {
        assert_eq!(default_anchor(1), 0);
        assert_eq!(default_anchor(2), 1);
        assert_eq!(default_anchor(5), 1);
        assert_eq!(default_anchor(40), 10);
    }

    #[test]
    fn flag_conflicts() {
        let base = ["bvs", "run", "--input", "a.csv", "--response", "y"];
        assert!(Cli::try_parse_from(base).is_ok());
        let with = |extra: &[&str]| Cli::try_parse_from(base.iter().chain(extra)).is_ok();
        assert!(!with(&["--h", "0.1", "--h-alpha", "1", "--h-beta", "2"]));
        assert!(!with(&["--h-alpha", "1"]));
        assert!(!with(&["--anchor-size", "2"]));
        assert!(with(&["--subset-size", "4", "--anchor-size", "2", "--variant", "wgs"]));
    }
}
