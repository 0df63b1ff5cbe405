//! Weighted tempered Gibbs sampling for the linear model.
//!
//! Each iteration picks a coordinate with probability proportional to
//! `eta_i / p(gamma_i | gamma_-i)`, flips it, and weights the new state by the
//! inverse of the normalizing sum. The weighting `eta_i` mixes the conditional
//! inclusion probability with a uniform floor `epsilon / P`, which bounds every
//! weight by `2 / epsilon`.

use rand::Rng;

use crate::chain::Sampler;
use crate::error::{Error, Result};
use crate::estimators::ChainOutput;
use crate::model::{Dataset, GammaState, InclusionPrior, Likelihood, SamplerConfig, Variant};

/// Coordinate weighting `p_i + epsilon / P`.
pub fn eta(cond_pip: f64, epsilon: f64, p: usize) -> f64 {
    cond_pip + epsilon / p as f64
}

/// Unnormalized selection mass of one coordinate. For the tempered variants
/// this is `eta / (2 p(gamma_i | gamma_-i))`; without tempering it is `eta`.
pub fn coordinate_term(variant: Variant, cond_pip: f64, included: bool, epsilon: f64, p: usize) -> f64 {
    let own = if included { cond_pip } else { 1.0 - cond_pip };
    match variant {
        Variant::Wtgs => 0.5 * eta(cond_pip, epsilon, p) / own,
        Variant::Tgs => 0.5 / own,
        Variant::Wgs => eta(cond_pip, epsilon, p),
    }
}

/// Normalizing sum whose inverse is the importance weight of a state.
pub fn phi_linear(cond_pips: &[f64], gamma: &GammaState, epsilon: f64) -> f64 {
    let p = gamma.p();
    cond_pips.iter().enumerate().map(|(i, &c)| coordinate_term(Variant::Wtgs, c, gamma.get(i), epsilon, p)).sum()
}

/// Draw the coordinate to flip.
pub fn sample_i_linear<R: Rng + ?Sized>(cond_pips: &[f64], gamma: &GammaState, epsilon: f64, rng: &mut R) -> usize {
    let p = gamma.p();
    let terms: Vec<f64> =
        cond_pips.iter().enumerate().map(|(i, &c)| coordinate_term(Variant::Wtgs, c, gamma.get(i), epsilon, p)).collect();
    categorical(&terms, rng)
}

/// Index drawn with probability proportional to `weights`.
pub fn categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

fn require_linear(data: &Dataset) -> Result<()> {
    if data.likelihood != Likelihood::Linear {
        return Err(Error::Config(format!("{:?} data needs the count-model sampler", data.likelihood)));
    }
    Ok(())
}

/// Linear-model chain with a fixed prior inclusion probability.
pub fn wtgs_run<R: Rng + ?Sized>(data: &Dataset, cfg: &SamplerConfig, rng: &mut R) -> Result<ChainOutput> {
    require_linear(data)?;
    if !matches!(cfg.inclusion, InclusionPrior::Fixed(_)) {
        return Err(Error::Config("use wtgs_run_infer_h for a Beta prior on h".into()));
    }
    if cfg.subset.is_some() {
        return Err(Error::Config("use subset_wtgs_run for subset sampling".into()));
    }
    Sampler::new(data, cfg, rng)?.run(rng)
}

/// Linear-model chain that also samples `h` under a Beta prior, through an
/// extra auxiliary index that refreshes `h`.
pub fn wtgs_run_infer_h<R: Rng + ?Sized>(data: &Dataset, cfg: &SamplerConfig, rng: &mut R) -> Result<ChainOutput> {
    require_linear(data)?;
    if !matches!(cfg.inclusion, InclusionPrior::Beta { .. }) {
        return Err(Error::Config("inferring h needs a Beta prior".into()));
    }
    Sampler::new(data, cfg, rng)?.run(rng)
}
