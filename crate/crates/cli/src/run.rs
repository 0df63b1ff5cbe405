//! Turning parsed flags into sampler or oracle runs.

use bvs_core::chain::run_chains;
use bvs_core::model::default_h;
use bvs_core::oracle::{enumerate_linear, quadrature_count};
use bvs_core::{AuxIndex, Dataset, InclusionPrior, Likelihood, SamplerConfig, SubsetSpec, Variant};

use crate::args::{default_anchor, DataArgs, LikelihoodArg, OracleArgs, RunArgs, VariantArg};
use crate::error::CliError;
use crate::ingest::ingest_csv;
use crate::output::{
    ChainReport, ConfigEcho, CovariateRow, HSummary, OracleReport, OracleRow, RunReport, RunSummary, TraceRecord,
};

impl From<LikelihoodArg> for Likelihood {
    fn from(l: LikelihoodArg) -> Self {
        match l {
            LikelihoodArg::Linear => Likelihood::Linear,
            LikelihoodArg::Binomial => Likelihood::Binomial,
            LikelihoodArg::Negbin => Likelihood::NegativeBinomial,
        }
    }
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Wtgs => Variant::Wtgs,
            VariantArg::Tgs => Variant::Tgs,
            VariantArg::Wgs => Variant::Wgs,
        }
    }
}

/// Read, preprocess and type the input file.
pub fn load(args: &DataArgs) -> Result<(Vec<String>, Dataset), CliError> {
    let likelihood = Likelihood::from(args.likelihood);
    if args.total_count.is_some() && likelihood != Likelihood::Binomial {
        return Err(CliError::Config("--total-count only applies to the binomial likelihood".into()));
    }
    if args.center_response && likelihood != Likelihood::Linear {
        return Err(CliError::Config("--center-response only applies to the linear likelihood".into()));
    }
    if args.linear_bias && likelihood != Likelihood::Linear {
        return Err(CliError::Config("count models always carry an intercept; drop --linear-bias".into()));
    }
    if args.psi0.is_some() && likelihood != Likelihood::NegativeBinomial {
        return Err(CliError::Config("--psi0 only applies to the negative-binomial likelihood".into()));
    }
    let mut table = ingest_csv(&args.input, &args.response, args.total_count.as_deref())?;
    if args.standardize {
        table.standardize()?;
    }
    if args.center_response {
        table.center_response();
    }
    let names = table.covariate_names.clone();
    let data = table.into_dataset(likelihood, args.psi0)?;
    Ok((names, data))
}

/// Sampler configuration for the given flags and problem size.
pub fn sampler_config(args: &RunArgs, likelihood: Likelihood, p: usize) -> Result<SamplerConfig, CliError> {
    let mut cfg = SamplerConfig::for_p(p);
    cfg.inclusion = match (args.h_alpha, args.h_beta) {
        (Some(alpha), Some(beta)) => InclusionPrior::Beta { alpha, beta },
        _ => InclusionPrior::Fixed(args.data.h.unwrap_or_else(|| default_h(p))),
    };
    cfg.tau = args.data.tau;
    cfg.tau_bias = args.data.tau_bias;
    cfg.epsilon = args.epsilon;
    cfg.xi = args.xi;
    cfg.f_omega = args.f_omega;
    cfg.subset = args
        .subset_size
        .map(|size| SubsetSpec { size, anchor: args.anchor_size.unwrap_or_else(|| default_anchor(size)) });
    cfg.iterations = args.iterations;
    cfg.burn_in = args.burn_in;
    cfg.seed = args.seed;
    cfg.variant = args.variant.into();
    cfg.nu_rw_scale = args.nu_rw_scale;
    cfg.linear_bias = args.data.linear_bias;
    cfg.store_samples = true;
    cfg.full_trace = args.trace;
    cfg.validate(likelihood, p)?;
    if args.chains == 0 {
        return Err(CliError::Config("--chains must be at least 1".into()));
    }
    Ok(cfg)
}

/// Weighted quantiles of `values`, each `q` in `[0, 1]`.
pub fn weighted_quantiles(values: &[(f64, f64)], qs: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = sorted.iter().map(|v| v.1).sum();
    qs.iter()
        .map(|&q| {
            let mut cum = 0.0;
            for &(v, w) in &sorted {
                cum += w;
                if cum >= q * total {
                    return v;
                }
            }
            sorted.last().map_or(f64::NAN, |v| v.0)
        })
        .collect()
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

pub fn run(args: &RunArgs) -> Result<RunReport, CliError> {
    let (names, data) = load(&args.data)?;
    let cfg = sampler_config(args, data.likelihood, data.p())?;
    let out = run_chains(&data, &cfg, args.chains)?;
    let s = &out.summary;
    let d = &out.diagnostics;

    let covariates = names
        .into_iter()
        .enumerate()
        .map(|(j, name)| CovariateRow {
            name,
            pip: s.pip[j],
            pip_raw: s.pip_raw[j],
            beta_mean: s.beta_mean[j],
            beta_cond_mean: finite(s.beta_cond_mean[j]),
            beta_cond_sd: finite(s.beta_cond_sd[j]),
            flips: d.flip_counts[j],
        })
        .collect();

    let h = s.h.map(|(mean, sd)| {
        let draws: Vec<(f64, f64)> =
            out.chains.iter().flat_map(|c| &c.samples).filter_map(|x| x.h.map(|h| (h, x.weight))).collect();
        let q = weighted_quantiles(&draws, &[0.025, 0.5, 0.975]);
        HSummary { mean, sd, q025: q[0], median: q[1], q975: q[2] }
    });

    let summary = RunSummary {
        retained: d.retained,
        weight_variance: d.weight_variance,
        effective_sample_size: d.effective_sample_size,
        max_weight: d.max_weight,
        omega_accept_rate: d.omega_accept_rate,
        zero_fraction: d.zero_fraction,
        h,
        nu_mean: s.nu.map(|v| v.0),
        nu_sd: s.nu.map(|v| v.1),
        seed: cfg.seed,
        chains: args.chains,
    };

    let chains = out
        .chains
        .iter()
        .map(|c| ChainReport {
            final_xi: c.xi,
            max_weight_all: c.max_weight_all,
            trace: args.trace.then(|| {
                c.trace
                    .iter()
                    .map(|r| TraceRecord {
                        t: r.t,
                        index: match r.aux {
                            AuxIndex::Zero => None,
                            AuxIndex::Coord(i) => Some(i),
                        },
                        weight: r.weight,
                        size: r.size,
                        xi: r.xi,
                        accepted: r.accepted,
                        h: r.h,
                        nu: r.nu,
                    })
                    .collect()
            }),
        })
        .collect();

    Ok(RunReport { covariates, summary, config: ConfigEcho::new(&cfg, args, &data), chains })
}

pub fn oracle(args: &OracleArgs) -> Result<OracleReport, CliError> {
    let (names, data) = load(&args.data)?;
    let h = args.data.h.unwrap_or_else(|| default_h(data.p()));
    let (method, post) = match data.likelihood {
        Likelihood::Linear => {
            let bias = args.data.linear_bias.then_some(args.data.tau_bias);
            ("enumeration", enumerate_linear(&data, h, args.data.tau, bias)?)
        }
        _ => ("quadrature", quadrature_count(&data, h, args.data.tau, args.data.tau_bias, args.nu, args.rel_tol)?),
    };
    Ok(OracleReport {
        method: method.to_string(),
        likelihood: format!("{:?}", data.likelihood),
        h,
        tau: args.data.tau,
        tau_bias: args.data.tau_bias,
        nu: (data.likelihood == Likelihood::NegativeBinomial).then_some(args.nu),
        models: post.log_post.len(),
        covariates: names.into_iter().zip(post.pips).map(|(name, pip)| OracleRow { name, pip }).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_follow_the_weights() {
        let v = [(3.0, 1.0), (1.0, 1.0), (2.0, 2.0)];
        assert_eq!(weighted_quantiles(&v, &[0.0, 0.25, 0.5, 0.74, 0.76, 1.0]), vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        assert!(weighted_quantiles(&[], &[0.5])[0].is_nan());
    }
}
