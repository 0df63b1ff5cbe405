//! Domain types shared by every sampler: the dataset container, the binary
//! inclusion state, sampler configuration and the seeded random stream.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

/// Random stream used by every chain. One stream per chain.
pub type ChainRng = ChaCha20Rng;

pub fn seeded_rng(seed: u64) -> ChainRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Independent stream `stream` derived from `seed`; used for multi-chain runs.
pub fn chain_rng(seed: u64, stream: u64) -> ChainRng {
    let mut rng = seeded_rng(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Likelihood {
    Linear,
    Binomial,
    NegativeBinomial,
}

impl Likelihood {
    pub fn is_count(self) -> bool {
        !matches!(self, Likelihood::Linear)
    }
}

/// Responses with an `N x P` covariate matrix stored column-major.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    /// Binomial trial counts, one per observation.
    pub total_counts: Option<Vec<f64>>,
    pub likelihood: Likelihood,
    /// Fixed log-mean offset of the negative-binomial model.
    pub psi0: f64,
}

const PSI0_FLOOR: f64 = 1e-3;

impl Dataset {
    pub fn linear(x: DMatrix<f64>, y: Vec<f64>) -> Result<Self> {
        check_shapes(&x, &y)?;
        Ok(Dataset { x, y, total_counts: None, likelihood: Likelihood::Linear, psi0: 0.0 })
    }

    pub fn binomial(x: DMatrix<f64>, y: Vec<f64>, total_counts: Vec<f64>) -> Result<Self> {
        check_shapes(&x, &y)?;
        if total_counts.len() != y.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} total counts for {} responses",
                total_counts.len(),
                y.len()
            )));
        }
        for (n, (&yn, &cn)) in y.iter().zip(&total_counts).enumerate() {
            if !is_count(cn) || cn < 1.0 {
                return Err(Error::Domain(format!("row {n}: total count {cn} is not a positive integer")));
            }
            if !is_count(yn) || yn > cn {
                return Err(Error::Domain(format!("row {n}: response {yn} is not an integer in [0, {cn}]")));
            }
        }
        Ok(Dataset { x, y, total_counts: Some(total_counts), likelihood: Likelihood::Binomial, psi0: 0.0 })
    }

    /// Negative-binomial counts. When `psi0` is `None` the offset is the log of
    /// the mean count, floored at `log(1e-3)`.
    pub fn negative_binomial(x: DMatrix<f64>, y: Vec<f64>, psi0: Option<f64>) -> Result<Self> {
        check_shapes(&x, &y)?;
        for (n, &yn) in y.iter().enumerate() {
            if !is_count(yn) {
                return Err(Error::Domain(format!("row {n}: response {yn} is not a non-negative integer")));
            }
        }
        let psi0 = match psi0 {
            Some(v) if v.is_finite() => v,
            Some(v) => return Err(Error::Domain(format!("offset {v} is not finite"))),
            None => {
                let mean = y.iter().sum::<f64>() / y.len() as f64;
                mean.max(PSI0_FLOOR).ln()
            }
        };
        Ok(Dataset { x, y, total_counts: None, likelihood: Likelihood::NegativeBinomial, psi0 })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.x.as_slice()[j * n..(j + 1) * n]
    }
}

fn is_count(v: f64) -> bool {
    v.is_finite() && v >= 0.0 && v.fract() == 0.0
}

fn check_shapes(x: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::ShapeMismatch(format!("{} rows in X but {} responses", x.nrows(), y.len())));
    }
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::ShapeMismatch("empty design matrix".into()));
    }
    if let Some(v) = x.iter().chain(y).find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite value {v} in data")));
    }
    Ok(())
}

/// Binary inclusion vector with a sorted list of its active coordinates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GammaState {
    bits: Vec<bool>,
    active: Vec<usize>,
}

impl GammaState {
    pub fn empty(p: usize) -> Self {
        GammaState { bits: vec![false; p], active: Vec::new() }
    }

    pub fn from_active(p: usize, active: &[usize]) -> Result<Self> {
        let mut g = GammaState::empty(p);
        for &i in active {
            if i >= p {
                return Err(Error::ShapeMismatch(format!("coordinate {i} out of range for P = {p}")));
            }
            if !g.bits[i] {
                g.flip(i);
            }
        }
        Ok(g)
    }

    /// Model whose active set is the set bits of `mask` (coordinate 0 is bit 0).
    pub fn from_mask(p: usize, mask: u64) -> Self {
        let active: Vec<usize> = (0..p).filter(|&i| mask >> i & 1 == 1).collect();
        let mut bits = vec![false; p];
        for &i in &active {
            bits[i] = true;
        }
        GammaState { bits, active }
    }

    pub fn p(&self) -> usize {
        self.bits.len()
    }

    pub fn size(&self) -> usize {
        self.active.len()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn flip(&mut self, i: usize) {
        self.bits[i] = !self.bits[i];
        match self.active.binary_search(&i) {
            Ok(pos) => {
                self.active.remove(pos);
            }
            Err(pos) => self.active.insert(pos, i),
        }
    }

    /// Bit mask of the active set; only meaningful for `P <= 64`.
    pub fn mask(&self) -> u64 {
        self.active.iter().fold(0u64, |m, &i| m | 1 << i)
    }
}

/// Prior on the inclusion probability `h`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InclusionPrior {
    Fixed(f64),
    Beta { alpha: f64, beta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Weighted and tempered: the default.
    Wtgs,
    /// Tempered with uniform coordinate weighting.
    Tgs,
    /// Weighted without tempering; coordinate moves are Metropolized Gibbs.
    Wgs,
}

/// Subset sampling sizes. When the chain has an auxiliary index zero (count
/// likelihoods or a prior on `h`) both sizes count it, so `size` may be `P + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SubsetSpec {
    pub size: usize,
    pub anchor: usize,
}

/// Index chosen by the auxiliary-variable draw of a chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AuxIndex {
    /// Refresh the non-inclusion variables (Polya-Gamma weights, dispersion, `h`).
    Zero,
    Coord(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub inclusion: InclusionPrior,
    /// Prior precision of each included coefficient.
    pub tau: f64,
    /// Prior precision of the intercept.
    pub tau_bias: f64,
    pub epsilon: f64,
    /// Weight of the index-zero move. `None` adapts it during burn-in.
    pub xi: Option<f64>,
    /// Target visit frequency of the index-zero move when adapting `xi`.
    pub f_omega: f64,
    pub subset: Option<SubsetSpec>,
    /// Total number of iterations, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub variant: Variant,
    /// Scale of the log-dispersion random walk.
    pub nu_rw_scale: f64,
    pub initial_nu: f64,
    /// Include an intercept column in the linear model.
    pub linear_bias: bool,
    /// Precompute `X^T X` once (linear likelihood only).
    pub precompute_gram: bool,
    pub store_samples: bool,
    /// Keep conditional inclusion vectors and per-iteration diagnostics.
    pub full_trace: bool,
    pub anchor_interval: usize,
    /// Fraction of burn-in during which the index-zero refresh skips the
    /// accept/reject test.
    pub always_accept_fraction: f64,
}

impl SamplerConfig {
    /// Defaults for a problem with `p` covariates.
    pub fn for_p(p: usize) -> Self {
        SamplerConfig {
            inclusion: InclusionPrior::Fixed(default_h(p)),
            tau: 0.01,
            tau_bias: 0.01,
            epsilon: 5.0,
            xi: None,
            f_omega: 0.25,
            subset: None,
            iterations: 60_000,
            burn_in: 10_000,
            seed: 0,
            variant: Variant::Wtgs,
            nu_rw_scale: 0.03,
            initial_nu: 1.0,
            linear_bias: false,
            precompute_gram: false,
            store_samples: true,
            full_trace: false,
            anchor_interval: 100,
            always_accept_fraction: 0.25,
        }
    }

    /// Whether chains on `likelihood` carry the auxiliary index zero.
    pub fn uses_index_zero(&self, likelihood: Likelihood) -> bool {
        likelihood.is_count() || matches!(self.inclusion, InclusionPrior::Beta { .. })
    }

    pub fn validate(&self, likelihood: Likelihood, p: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match self.inclusion {
            InclusionPrior::Fixed(h) if !(h > 0.0 && h < 1.0) => return bad(format!("h = {h} must lie in (0, 1)")),
            InclusionPrior::Beta { alpha, beta } if !(alpha > 0.0 && beta > 0.0) => {
                return bad(format!("Beta({alpha}, {beta}) prior on h needs positive parameters"))
            }
            _ => {}
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau = {} must be positive", self.tau));
        }
        if !(self.tau_bias > 0.0 && self.tau_bias.is_finite()) {
            return bad(format!("tau_bias = {} must be positive", self.tau_bias));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon = {} must be positive", self.epsilon));
        }
        if let Some(xi) = self.xi {
            if !(xi > 0.0 && xi.is_finite()) {
                return bad(format!("xi = {xi} must be positive"));
            }
        }
        if !(self.f_omega > 0.0 && self.f_omega < 1.0) {
            return bad(format!("f_omega = {} must lie in (0, 1)", self.f_omega));
        }
        if self.burn_in >= self.iterations {
            return bad(format!(
                "burn-in ({}) must be smaller than the number of iterations ({})",
                self.burn_in, self.iterations
            ));
        }
        if let Some(SubsetSpec { size, anchor }) = self.subset {
            let universe = p + usize::from(self.uses_index_zero(likelihood));
            if size > universe || size == 0 {
                return bad(format!("subset size {size} must lie in 1..={universe}"));
            }
            if anchor >= size {
                return bad(format!("anchor size {anchor} must be smaller than the subset size {size}"));
            }
        }
        if !(self.nu_rw_scale > 0.0 && self.nu_rw_scale.is_finite()) {
            return bad(format!("dispersion step {} must be positive", self.nu_rw_scale));
        }
        if !(self.initial_nu > 0.0 && self.initial_nu.is_finite()) {
            return bad(format!("initial dispersion {} must be positive", self.initial_nu));
        }
        if self.anchor_interval == 0 {
            return bad("anchor interval must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.always_accept_fraction) {
            return bad("always-accept fraction must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// Default prior inclusion probability: five expected covariates, capped at 1/2.
pub fn default_h(p: usize) -> f64 {
    (5.0 / p as f64).min(0.5)
}

/// Snapshot of the mutable state of a chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub gamma: GammaState,
    pub aux: Option<AuxIndex>,
    pub omega: Option<Vec<f64>>,
    pub nu: Option<f64>,
    pub h: f64,
    pub xi: Option<f64>,
    pub subset: Option<Vec<usize>>,
    pub anchor: Option<Vec<usize>>,
    pub t: usize,
    pub weight: f64,
}
