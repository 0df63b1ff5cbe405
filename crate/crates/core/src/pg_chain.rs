//! Weighted tempered Gibbs sampling for binomial and negative-binomial
//! regression through Polya-Gamma augmentation.
//!
//! The chain state is `(gamma, omega)` (plus the dispersion `nu` for
//! negative-binomial counts). An extra auxiliary index zero, chosen with mass
//! `xi`, refreshes `omega` with an independence-style Metropolis-Hastings step
//! whose proposal is the exact conditional at the posterior-mean linear
//! predictor. The acceptance ratio never evaluates a Polya-Gamma density.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::chain::Sampler;
use crate::error::{Error, Result};
use crate::estimators::ChainOutput;
use crate::mll::{self, ActiveFactorization, EvidenceModel};
use crate::model::{AuxIndex, Dataset, GammaState, Likelihood, SamplerConfig, Variant};
use crate::pg::sample_pg_vec;
use crate::wtgs::coordinate_term;

/// Smallest value the adapted `xi` may take.
pub const XI_FLOOR: f64 = 1e-6;
/// Starting value of `xi` when it is adapted.
pub const XI_INIT: f64 = 5.0;

/// Normalizing sum `xi + (1/P) sum_i term_i`.
pub fn phi_pg(xi: f64, cond_pips: &[f64], gamma: &GammaState, epsilon: f64, variant: Variant) -> f64 {
    let p = gamma.p();
    let s: f64 = cond_pips.iter().enumerate().map(|(i, &c)| coordinate_term(variant, c, gamma.get(i), epsilon, p)).sum();
    xi + s / p as f64
}

/// Draw the auxiliary index: zero with mass `xi`, coordinate `i` with mass
/// `term_i / P`.
pub fn sample_i_pg<R: Rng + ?Sized>(
    xi: f64,
    cond_pips: &[f64],
    gamma: &GammaState,
    epsilon: f64,
    variant: Variant,
    rng: &mut R,
) -> AuxIndex {
    let p = gamma.p();
    let mut masses = Vec::with_capacity(p + 1);
    masses.push(xi);
    masses.extend(cond_pips.iter().enumerate().map(|(i, &c)| coordinate_term(variant, c, gamma.get(i), epsilon, p) / p as f64));
    match crate::wtgs::categorical(&masses, rng) {
        0 => AuxIndex::Zero,
        k => AuxIndex::Coord(k - 1),
    }
}

/// Conditional posterior mean of the active coefficients (intercept last).
pub fn beta_hat(fact: &ActiveFactorization) -> Vec<f64> {
    fact.fz.iter().copied().collect()
}

/// Probability of accepting a proposed flip of a coordinate whose conditional
/// inclusion probability is `q`.
pub fn metropolized_gibbs_accept(q: f64, included: bool) -> f64 {
    let ratio = if included { (1.0 - q) / q } else { q / (1.0 - q) };
    ratio.min(1.0)
}

/// Stochastic-approximation update driving the index-zero frequency toward
/// `f_omega`.
pub fn adapt_xi(xi: f64, f_omega: f64, phi: f64, t: usize) -> f64 {
    (xi + (f_omega - xi / phi) / ((t + 1) as f64).sqrt()).max(XI_FLOOR)
}

/// Pseudo-responses, adjusted responses and constant terms of the
/// negative-binomial evidence.
pub fn negbin_loglik_terms(data: &Dataset, omega: &[f64], nu: f64) -> (Vec<f64>, Vec<f64>, f64) {
    mll::negbin_terms(data, omega, nu)
}

/// Evidence of the current augmentation state together with the factorization
/// of the current inclusion state.
#[derive(Clone, Debug)]
pub struct EvidenceState<'a> {
    pub model: EvidenceModel<'a>,
    pub fact: ActiveFactorization,
    /// Dispersion; unused outside the negative-binomial model.
    pub nu: f64,
}

impl<'a> EvidenceState<'a> {
    pub fn omega(&self) -> Option<&[f64]> {
        self.model.omega()
    }
}

/// Polya-Gamma shapes of each observation: trial counts, or `Y + nu`.
pub fn pg_shapes(data: &Dataset, nu: f64) -> Result<Vec<f64>> {
    match data.likelihood {
        Likelihood::Binomial => {
            data.total_counts.clone().ok_or_else(|| Error::Domain("binomial data without total counts".into()))
        }
        Likelihood::NegativeBinomial => Ok(data.y.iter().map(|y| y + nu).collect()),
        Likelihood::Linear => Err(Error::Config("the linear model has no Polya-Gamma weights".into())),
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Log acceptance ratio of a refresh `(omega, nu) -> (omega', nu')`, excluding
/// the evidence ratio. `b_cur`/`b_new` are the Polya-Gamma shapes under the
/// current and proposed dispersion, `tilt_fwd` the tilt that generated
/// `omega'` and `tilt_rev` the tilt the reverse move would use.
pub fn refresh_log_ratio(
    y: &[f64],
    b_cur: &[f64],
    b_new: &[f64],
    omega: &[f64],
    omega_new: &[f64],
    tilt_fwd: &[f64],
    tilt_rev: &[f64],
) -> f64 {
    let mut s = 0.0;
    for n in 0..y.len() {
        let (af, ar) = (tilt_fwd[n], tilt_rev[n]);
        let k_cur = y[n] - 0.5 * b_cur[n];
        let k_new = y[n] - 0.5 * b_new[n];
        s += std::f64::consts::LN_2 * (b_new[n] - b_cur[n]) + y[n] * (af - ar) + b_cur[n] * softplus(ar)
            - b_new[n] * softplus(af)
            + k_cur * ar
            - k_new * af
            - 0.5 * omega[n] * ar * ar
            + 0.5 * omega_new[n] * af * af;
    }
    s
}

/// One Metropolis-Hastings refresh of the Polya-Gamma weights (jointly with a
/// log-scale random-walk move of the dispersion for negative-binomial data).
/// With `always_accept` the dispersion is held fixed and the proposal is
/// taken unconditionally. Returns whether the proposal was accepted.
pub fn omega_mh_step<'a, R: Rng + ?Sized>(
    data: &'a Dataset,
    cfg: &SamplerConfig,
    gamma: &GammaState,
    state: &mut EvidenceState<'a>,
    always_accept: bool,
    rng: &mut R,
) -> Result<bool> {
    let negbin = data.likelihood == Likelihood::NegativeBinomial;
    let nu = state.nu;
    let nu_new = if negbin && !always_accept {
        let step: f64 = StandardNormal.sample(rng);
        nu * (cfg.nu_rw_scale * step).exp()
    } else {
        nu
    };
    let shift = |v: f64| if negbin { data.psi0 - v.ln() } else { 0.0 };
    let fitted = state.model.fitted(&state.fact);
    let tilt_fwd: Vec<f64> = fitted.iter().map(|f| f + shift(nu_new)).collect();
    let b_new = pg_shapes(data, nu_new)?;
    let omega_new = sample_pg_vec(rng, &b_new, &tilt_fwd)?;
    let mut model_new =
        EvidenceModel::for_dataset(data, Some(omega_new.clone()), nu_new, cfg.tau, cfg.tau_bias, false)?;
    let fact_new = model_new.factorize(gamma.active())?;
    let accept = always_accept || {
        let tilt_rev: Vec<f64> = model_new.fitted(&fact_new).iter().map(|f| f + shift(nu)).collect();
        let b_cur = pg_shapes(data, nu)?;
        let omega = state.omega().expect("count model has weights");
        let log_alpha = fact_new.base_loglik - state.fact.base_loglik
            + refresh_log_ratio(&data.y, &b_cur, &b_new, omega, &omega_new, &tilt_fwd, &tilt_rev);
        let u: f64 = rng.random();
        u.ln() < log_alpha
    };
    if accept {
        *state = EvidenceState { model: model_new, fact: fact_new, nu: nu_new };
    }
    Ok(accept)
}

fn require_count(data: &Dataset) -> Result<()> {
    if !data.likelihood.is_count() {
        return Err(Error::Config("linear data needs the linear sampler".into()));
    }
    Ok(())
}

/// Count-model chain over all coordinates.
pub fn pg_wtgs_run<R: Rng + ?Sized>(data: &Dataset, cfg: &SamplerConfig, rng: &mut R) -> Result<ChainOutput> {
    require_count(data)?;
    if cfg.subset.is_some() {
        return Err(Error::Config("use subset_pg_wtgs_run for subset sampling".into()));
    }
    Sampler::new(data, cfg, rng)?.run(rng)
}

/// Subset-restricted count-model chain. The subset and anchor sizes include
/// the auxiliary index zero.
pub fn subset_pg_wtgs_run<R: Rng + ?Sized>(data: &Dataset, cfg: &SamplerConfig, rng: &mut R) -> Result<ChainOutput> {
    require_count(data)?;
    if cfg.subset.is_none() {
        return Err(Error::Config("subset sampling needs a subset size".into()));
    }
    Sampler::new(data, cfg, rng)?.run(rng)
}
