//! Result records and their TSV and JSON renderings.
//!
//! The TSV table has the fixed header `covariate  pip  beta_mean  beta_sd`,
//! where the coefficient columns are conditional on inclusion and read `NA`
//! for covariates that were never included. Summary and configuration lines
//! precede the table and start with `#`.

use std::io::Write;

use bvs_core::{Dataset, InclusionPrior, Likelihood, SamplerConfig};
use serde::Serialize;
use serde_json::Value;

use crate::args::{FormatArg, RunArgs};
use crate::error::CliError;

pub const RUN_HEADER: &str = "covariate\tpip\tbeta_mean\tbeta_sd";
pub const ORACLE_HEADER: &str = "covariate\tpip";

#[derive(Clone, Debug, Serialize)]
pub struct CovariateRow {
    pub name: String,
    pub pip: f64,
    /// Weighted inclusion frequency.
    pub pip_raw: f64,
    /// Model-averaged coefficient, zero when excluded.
    pub beta_mean: f64,
    pub beta_cond_mean: Option<f64>,
    pub beta_cond_sd: Option<f64>,
    pub flips: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct HSummary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub median: f64,
    pub q975: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub retained: u64,
    pub weight_variance: f64,
    pub effective_sample_size: f64,
    pub max_weight: f64,
    pub omega_accept_rate: Option<f64>,
    pub zero_fraction: Option<f64>,
    pub h: Option<HSummary>,
    pub nu_mean: Option<f64>,
    pub nu_sd: Option<f64>,
    pub seed: u64,
    pub chains: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceRecord {
    pub t: usize,
    /// Flipped covariate, or `null` for the index-zero refresh.
    pub index: Option<usize>,
    pub weight: f64,
    pub size: usize,
    pub xi: Option<f64>,
    pub accepted: Option<bool>,
    pub h: f64,
    pub nu: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainReport {
    pub final_xi: Option<f64>,
    pub max_weight_all: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceRecord>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConfigEcho {
    pub likelihood: String,
    pub variant: String,
    pub h: Option<f64>,
    pub h_alpha: Option<f64>,
    pub h_beta: Option<f64>,
    pub tau: f64,
    pub tau_bias: f64,
    pub epsilon: f64,
    pub xi: Option<f64>,
    pub f_omega: f64,
    pub subset_size: Option<usize>,
    pub anchor_size: Option<usize>,
    pub iterations: usize,
    pub burn_in: usize,
    pub nu_rw_scale: f64,
    pub psi0: Option<f64>,
    pub standardize: bool,
    pub center_response: bool,
    pub linear_bias: bool,
    pub n: usize,
    pub p: usize,
}

impl ConfigEcho {
    pub fn new(cfg: &SamplerConfig, args: &RunArgs, data: &Dataset) -> Self {
        let (h, h_alpha, h_beta) = match cfg.inclusion {
            InclusionPrior::Fixed(h) => (Some(h), None, None),
            InclusionPrior::Beta { alpha, beta } => (None, Some(alpha), Some(beta)),
        };
        ConfigEcho {
            likelihood: format!("{:?}", data.likelihood),
            variant: format!("{:?}", cfg.variant),
            h,
            h_alpha,
            h_beta,
            tau: cfg.tau,
            tau_bias: cfg.tau_bias,
            epsilon: cfg.epsilon,
            xi: cfg.xi,
            f_omega: cfg.f_omega,
            subset_size: cfg.subset.map(|s| s.size),
            anchor_size: cfg.subset.map(|s| s.anchor),
            iterations: cfg.iterations,
            burn_in: cfg.burn_in,
            nu_rw_scale: cfg.nu_rw_scale,
            psi0: (data.likelihood == Likelihood::NegativeBinomial).then_some(data.psi0),
            standardize: args.data.standardize,
            center_response: args.data.center_response,
            linear_bias: cfg.linear_bias,
            n: data.n(),
            p: data.p(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub covariates: Vec<CovariateRow>,
    pub summary: RunSummary,
    pub config: ConfigEcho,
    pub chains: Vec<ChainReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleRow {
    pub name: String,
    pub pip: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub method: String,
    pub likelihood: String,
    pub h: f64,
    pub tau: f64,
    pub tau_bias: f64,
    pub nu: Option<f64>,
    pub models: usize,
    pub covariates: Vec<OracleRow>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// `# key<TAB>value` lines for every scalar field of a record, flattening
/// nested objects with dotted keys.
fn comment_lines(out: &mut dyn Write, prefix: &str, value: &Value) -> std::io::Result<()> {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                comment_lines(out, &key, v)?;
            }
            Ok(())
        }
        Value::Null => writeln!(out, "# {prefix}\tNA"),
        Value::String(s) => writeln!(out, "# {prefix}\t{s}"),
        other => writeln!(out, "# {prefix}\t{other}"),
    }
}

pub fn write_run(out: &mut dyn Write, report: &RunReport, format: FormatArg) -> Result<(), CliError> {
    match format {
        FormatArg::Json => {
            serde_json::to_writer_pretty(&mut *out, report)?;
            writeln!(out)?;
        }
        FormatArg::Tsv => {
            comment_lines(out, "summary", &serde_json::to_value(&report.summary)?)?;
            comment_lines(out, "config", &serde_json::to_value(&report.config)?)?;
            writeln!(out, "{RUN_HEADER}")?;
            for row in &report.covariates {
                writeln!(out, "{}\t{}\t{}\t{}", row.name, row.pip, cell(row.beta_cond_mean), cell(row.beta_cond_sd))?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_oracle(out: &mut dyn Write, report: &OracleReport, format: FormatArg) -> Result<(), CliError> {
    match format {
        FormatArg::Json => {
            serde_json::to_writer_pretty(&mut *out, report)?;
            writeln!(out)?;
        }
        FormatArg::Tsv => {
            let mut header = serde_json::to_value(report)?;
            if let Value::Object(map) = &mut header {
                map.remove("covariates");
            }
            comment_lines(out, "oracle", &header)?;
            writeln!(out, "{ORACLE_HEADER}")?;
            for row in &report.covariates {
                writeln!(out, "{}\t{}", row.name, row.pip)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_values_flatten_to_dotted_keys() {
        let v = serde_json::json!({"a": 1, "b": {"c": null, "d": "x"}});
        let mut buf = Vec::new();
        comment_lines(&mut buf, "s", &v).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "# s.a\t1\n# s.b.c\tNA\n# s.b.d\tx\n");
    }

    #[test]
    fn oracle_table() {
        let report = OracleReport {
            method: "enumeration".into(),
            likelihood: "Linear".into(),
            h: 0.5,
            tau: 0.01,
            tau_bias: 0.01,
            nu: None,
            models: 4,
            covariates: vec![OracleRow { name: "a".into(), pip: 0.25 }, OracleRow { name: "b".into(), pip: 1.0 }],
        };
        let mut buf = Vec::new();
        write_oracle(&mut buf, &report, FormatArg::Tsv).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.ends_with("covariate\tpip\na\t0.25\nb\t1\n"), "{text}");
        assert!(text.contains("# oracle.method\tenumeration\n"));
    }
}
