//! The iteration engine shared by every sampler, plus multi-chain runs.
//!
//! One iteration: draw the auxiliary index from the current selection masses,
//! apply its move (flip a coordinate, or refresh `omega`/`nu`/`h`), redraw
//! the subset if there is one, recompute conditional inclusion probabilities
//! against a fresh factorization, and weight the new state by the inverse of
//! its normalizing sum. Burn-in iterations adapt `xi` and the anchor set;
//! later iterations feed the estimators.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{ChainOutput, Diagnostics, IterationRecord, PosteriorSummary, WeightedAccumulator, WeightedSample};
use crate::mll::{gram_matrix, logit, pip_from_log_odds, EvidenceModel};
use crate::model::{
    chain_rng, AuxIndex, ChainState, Dataset, GammaState, InclusionPrior, Likelihood, SamplerConfig, SubsetSpec, Variant,
};
use crate::pg::sample_pg_vec;
use crate::pg_chain::{adapt_xi, metropolized_gibbs_accept, omega_mh_step, pg_shapes, EvidenceState, XI_INIT};
use crate::subset::{adapt_anchor, initial_anchor, SubsetState};
use crate::wtgs::coordinate_term;

pub(crate) struct Sampler<'a> {
    data: &'a Dataset,
    cfg: SamplerConfig,
    p: usize,
    has_zero: bool,
    h_prior: Option<(f64, f64)>,
    gamma: GammaState,
    ev: EvidenceState<'a>,
    h: f64,
    logit_h: f64,
    xi: f64,
    adapt: bool,
    coords: Vec<usize>,
    lbf: Vec<f64>,
    pips: Vec<f64>,
    subset: Option<SubsetState>,
    anchor_size: usize,
    running: Option<Running>,
    acc: WeightedAccumulator,
    samples: Vec<WeightedSample>,
    trace: Vec<IterationRecord>,
    t: usize,
    always_accept_until: usize,
    max_w_all: f64,
    last_aux: Option<AuxIndex>,
    last_weight: f64,
}

/// Running partial Rao-Blackwell sums over burn-in, used to adapt the anchor.
struct Running {
    w: f64,
    raw: Vec<f64>,
    correction: Vec<f64>,
}

impl<'a> Sampler<'a> {
    pub(crate) fn new<R: Rng + ?Sized>(data: &'a Dataset, cfg: &SamplerConfig, rng: &mut R) -> Result<Self> {
        let p = data.p();
        cfg.validate(data.likelihood, p)?;
        let count = data.likelihood.is_count();
        let h_prior = match cfg.inclusion {
            InclusionPrior::Beta { alpha, beta } => Some((alpha, beta)),
            InclusionPrior::Fixed(_) => None,
        };
        let has_zero = cfg.uses_index_zero(data.likelihood);
        if cfg.precompute_gram && count {
            return Err(Error::Config("a precomputed Gram matrix only applies to the linear model".into()));
        }
        let (subset_size, anchor_size) = match cfg.subset {
            Some(SubsetSpec { size, anchor }) if has_zero => {
                if anchor == 0 {
                    return Err(Error::Config("the anchor must hold the auxiliary index: anchor size >= 1".into()));
                }
                (size - 1, anchor - 1)
            }
            Some(SubsetSpec { size, anchor }) => (size, anchor),
            None => (p, 0),
        };
        let h = match (cfg.inclusion, h_prior) {
            (InclusionPrior::Fixed(h), _) => h,
            (_, Some((a, b))) => Beta::new(a, b).map_err(|e| Error::Config(e.to_string()))?.sample(rng),
            _ => unreachable!(),
        };
        let omega = if count {
            let shapes = pg_shapes(data, cfg.initial_nu)?;
            Some(sample_pg_vec(rng, &shapes, &vec![0.0; data.n()])?)
        } else {
            None
        };
        let mut model = EvidenceModel::for_dataset(data, omega, cfg.initial_nu, cfg.tau, cfg.tau_bias, cfg.linear_bias)?;
        if cfg.precompute_gram {
            model = model.with_gram(Arc::new(gram_matrix(data, cfg.linear_bias)))?;
        }
        let gamma = GammaState::empty(p);
        let fact = model.factorize(gamma.active())?;
        let subset = if cfg.subset.is_some() {
            let mut st = SubsetState::with_anchor(p, subset_size, initial_anchor(data, anchor_size));
            let i0 = rng.random_range(0..p);
            st.resample(Some(i0), rng);
            Some(st)
        } else {
            None
        };
        let running = subset.as_ref().map(|_| Running { w: 0.0, raw: vec![0.0; p], correction: vec![0.0; p] });
        let mut s = Sampler {
            data,
            cfg: cfg.clone(),
            p,
            has_zero,
            h_prior,
            gamma,
            ev: EvidenceState { model, fact, nu: cfg.initial_nu },
            h,
            logit_h: logit(h),
            xi: cfg.xi.unwrap_or(XI_INIT),
            adapt: cfg.xi.is_none() && has_zero,
            coords: Vec::new(),
            lbf: Vec::new(),
            pips: Vec::new(),
            subset,
            anchor_size,
            running,
            acc: WeightedAccumulator::new(p),
            samples: Vec::new(),
            trace: Vec::new(),
            t: 0,
            always_accept_until: (cfg.always_accept_fraction * cfg.burn_in as f64).floor() as usize,
            max_w_all: 0.0,
            last_aux: None,
            last_weight: f64::NAN,
        };
        s.refresh_conditionals()?;
        Ok(s)
    }

    fn refresh_conditionals(&mut self) -> Result<()> {
        self.coords = match &self.subset {
            Some(st) => st.members().to_vec(),
            None => (0..self.p).collect(),
        };
        self.lbf = self.ev.model.log_bayes_factors(&self.ev.fact, &self.gamma, &self.coords)?;
        self.refresh_pips();
        Ok(())
    }

    fn refresh_pips(&mut self) {
        let lh = self.logit_h;
        self.pips = self.lbf.iter().map(|b| pip_from_log_odds(b + lh)).collect();
    }

    /// Selection masses of the coordinates in `coords`.
    fn coord_masses(&self) -> Vec<f64> {
        let scale = if self.has_zero { 1.0 / self.p as f64 } else { 1.0 };
        self.coords
            .iter()
            .zip(&self.pips)
            .map(|(&j, &q)| {
                let u = self.subset.as_ref().map_or(1.0, |st| st.u(j));
                coordinate_term(self.cfg.variant, q, self.gamma.get(j), self.cfg.epsilon, self.p) * u * scale
            })
            .collect()
    }

    fn zero_mass(&self) -> f64 {
        if self.has_zero {
            self.xi
        } else {
            0.0
        }
    }

    /// Normalizing sum of the current state.
    pub(crate) fn phi(&self) -> f64 {
        self.zero_mass() + self.coord_masses().iter().sum::<f64>()
    }

    pub(crate) fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        self.t += 1;
        let t = self.t;
        let burn = t <= self.cfg.burn_in;

        let masses = self.coord_masses();
        let zero = self.zero_mass();
        let total = zero + masses.iter().sum::<f64>();
        let mut u = rng.random::<f64>() * total;
        let aux = if u < zero {
            AuxIndex::Zero
        } else {
            u -= zero;
            let mut pick = masses.len() - 1;
            for (k, &m) in masses.iter().enumerate() {
                if u < m {
                    pick = k;
                    break;
                }
                u -= m;
            }
            AuxIndex::Coord(pick)
        };

        let mut accepted = None;
        let mut changed = false;
        let aux = match aux {
            AuxIndex::Coord(pos) => {
                let j = self.coords[pos];
                let flip = match self.cfg.variant {
                    Variant::Wgs => {
                        let ok = rng.random::<f64>() < metropolized_gibbs_accept(self.pips[pos], self.gamma.get(j));
                        accepted = Some(ok);
                        ok
                    }
                    _ => true,
                };
                if flip {
                    self.gamma.flip(j);
                    if !burn {
                        self.acc.flips[j] += 1;
                    }
                    self.ev.fact = self.ev.model.factorize(self.gamma.active())?;
                    changed = true;
                }
                AuxIndex::Coord(j)
            }
            AuxIndex::Zero => {
                let (ok, ch) = self.zero_moves(rng, burn)?;
                accepted = ok;
                changed = ch;
                AuxIndex::Zero
            }
        };

        if let Some(st) = &mut self.subset {
            let forced = match aux {
                AuxIndex::Coord(j) => Some(j),
                AuxIndex::Zero => None,
            };
            st.resample(forced, rng);
            changed = true;
        }
        if changed {
            self.refresh_conditionals()?;
        }

        let phi = self.phi();
        let w = 1.0 / phi;
        self.max_w_all = self.max_w_all.max(w);
        self.last_aux = Some(aux);
        self.last_weight = w;

        if burn {
            if self.adapt {
                self.xi = adapt_xi(self.xi, self.cfg.f_omega, phi, t);
            }
            self.track_running(w);
            if self.subset.is_some() && (t.is_multiple_of(self.cfg.anchor_interval) || t == self.cfg.burn_in) {
                self.update_anchor(aux, rng)?;
            }
        } else {
            self.accumulate(w, aux);
        }
        if self.cfg.full_trace {
            self.trace.push(IterationRecord {
                t,
                aux,
                weight: w,
                size: self.gamma.size(),
                xi: self.has_zero.then_some(self.xi),
                accepted,
                h: self.h,
                nu: self.negbin().then_some(self.ev.nu),
            });
        }
        Ok(())
    }

    fn negbin(&self) -> bool {
        self.data.likelihood == Likelihood::NegativeBinomial
    }

    /// Moves of the auxiliary index zero, in random order when there are two.
    /// Returns the refresh acceptance and whether the factorization changed.
    fn zero_moves<R: Rng + ?Sized>(&mut self, rng: &mut R, burn: bool) -> Result<(Option<bool>, bool)> {
        let count = self.data.likelihood.is_count();
        let infer_h = self.h_prior.is_some();
        let h_first = count && infer_h && rng.random::<bool>();
        if h_first {
            self.update_h(rng)?;
        }
        let mut accepted = None;
        let mut changed = false;
        if count {
            let always = self.t <= self.always_accept_until;
            let ok = omega_mh_step(self.data, &self.cfg, &self.gamma, &mut self.ev, always, rng)?;
            if !burn {
                self.acc.omega_attempts += 1;
                self.acc.omega_accepts += u64::from(ok);
            }
            accepted = Some(ok);
            changed = ok;
        }
        if infer_h && !h_first {
            self.update_h(rng)?;
        }
        if infer_h && !changed {
            self.refresh_pips();
        }
        Ok((accepted, changed))
    }

    fn update_h<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let (a, b) = self.h_prior.expect("Beta prior on h");
        let k = self.gamma.size() as f64;
        let draw: f64 = Beta::new(a + k, b + self.p as f64 - k).map_err(|e| Error::Numerical(e.to_string()))?.sample(rng);
        self.h = draw.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
        self.logit_h = logit(self.h);
        Ok(())
    }

    fn track_running(&mut self, w: f64) {
        if let Some(r) = &mut self.running {
            r.w += w;
            for &j in self.gamma.active() {
                r.raw[j] += w;
            }
            for (&j, &q) in self.coords.iter().zip(&self.pips) {
                r.correction[j] += w * (q - f64::from(u8::from(self.gamma.get(j))));
            }
        }
    }

    fn update_anchor<R: Rng + ?Sized>(&mut self, aux: AuxIndex, rng: &mut R) -> Result<()> {
        let r = self.running.as_ref().expect("running estimates");
        let est: Vec<f64> = r.raw.iter().zip(&r.correction).map(|(a, c)| (a + c) / r.w).collect();
        let anchor = adapt_anchor(&est, self.anchor_size);
        let st = self.subset.as_mut().expect("subset state");
        if anchor != st.anchor() {
            st.set_anchor(anchor);
            let forced = match aux {
                AuxIndex::Coord(j) => Some(j),
                AuxIndex::Zero => None,
            };
            st.resample(forced, rng);
            self.refresh_conditionals()?;
        }
        Ok(())
    }

    fn accumulate(&mut self, w: f64, aux: AuxIndex) {
        let negbin = self.negbin();
        let acc = &mut self.acc;
        acc.push_weight(w);
        let d = self.gamma.size();
        let var = self.ev.model.coefficient_variances(&self.ev.fact);
        acc.push_active(w, self.gamma.active(), &self.ev.fact.fz.as_slice()[..d], &var[..d]);
        acc.push_conditionals(w, &self.coords, &self.pips, &self.gamma);
        if self.h_prior.is_some() {
            acc.push_h(w, self.h);
        }
        if negbin {
            acc.push_nu(w, self.ev.nu);
        }
        if aux == AuxIndex::Zero {
            acc.zero_visits += 1;
        }
        if self.cfg.store_samples {
            let traced = self.cfg.full_trace;
            self.samples.push(WeightedSample {
                weight: w,
                active: self.gamma.active().to_vec(),
                aux,
                h: self.h_prior.is_some().then_some(self.h),
                nu: self.negbin().then_some(self.ev.nu),
                subset: (traced && self.subset.is_some()).then(|| self.coords.clone()),
                cond_pips: traced.then(|| self.pips.clone()),
            });
        }
    }

    pub(crate) fn state(&self) -> ChainState {
        ChainState {
            gamma: self.gamma.clone(),
            aux: self.last_aux,
            omega: self.ev.omega().map(<[f64]>::to_vec),
            nu: self.negbin().then_some(self.ev.nu),
            h: self.h,
            xi: self.has_zero.then_some(self.xi),
            subset: self.subset.as_ref().map(|s| s.members().to_vec()),
            anchor: self.subset.as_ref().map(|s| s.anchor().to_vec()),
            t: self.t,
            weight: self.last_weight,
        }
    }

    pub(crate) fn run<R: Rng + ?Sized>(mut self, rng: &mut R) -> Result<ChainOutput> {
        for _ in 0..self.cfg.iterations {
            self.step(rng)?;
        }
        self.finish()
    }

    pub(crate) fn finish(self) -> Result<ChainOutput> {
        let summary = self.acc.summary()?;
        let diagnostics = self.acc.diagnostics();
        let final_state = self.state();
        Ok(ChainOutput {
            summary,
            diagnostics,
            accumulator: self.acc,
            samples: self.samples,
            trace: self.trace,
            final_state,
            max_weight_all: self.max_w_all,
            xi: self.has_zero.then_some(self.xi),
        })
    }
}

/// Step-by-step access to a chain, for callers that need per-iteration
/// control (timing, custom stopping).
pub struct ChainDriver<'a> {
    inner: Sampler<'a>,
}

impl<'a> ChainDriver<'a> {
    pub fn new<R: Rng + ?Sized>(data: &'a Dataset, cfg: &SamplerConfig, rng: &mut R) -> Result<Self> {
        Ok(ChainDriver { inner: Sampler::new(data, cfg, rng)? })
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        self.inner.step(rng)
    }

    pub fn state(&self) -> ChainState {
        self.inner.state()
    }

    /// Conditional inclusion probabilities of the evaluated coordinates.
    pub fn conditionals(&self) -> (&[usize], &[f64]) {
        (&self.inner.coords, &self.inner.pips)
    }

    pub fn phi(&self) -> f64 {
        self.inner.phi()
    }

    pub fn finish(self) -> Result<ChainOutput> {
        self.inner.finish()
    }
}

/// Run one chain, dispatching on the likelihood and configuration.
pub fn run_chain<R: Rng + ?Sized>(data: &Dataset, cfg: &SamplerConfig, rng: &mut R) -> Result<ChainOutput> {
    Sampler::new(data, cfg, rng)?.run(rng)
}

/// Merged output of independent chains.
#[derive(Clone, Debug)]
pub struct MultiChainOutput {
    pub chains: Vec<ChainOutput>,
    pub accumulator: WeightedAccumulator,
    pub summary: PosteriorSummary,
    pub diagnostics: Diagnostics,
}

/// Run `chains` chains in parallel on streams `0..chains` of `cfg.seed` and
/// merge their accumulators in chain order.
pub fn run_chains(data: &Dataset, cfg: &SamplerConfig, chains: usize) -> Result<MultiChainOutput> {
    if chains == 0 {
        return Err(Error::Config("at least one chain is required".into()));
    }
    let outputs: Vec<ChainOutput> = (0..chains)
        .into_par_iter()
        .map(|c| run_chain(data, cfg, &mut chain_rng(cfg.seed, c as u64)))
        .collect::<Result<_>>()?;
    let mut accumulator = WeightedAccumulator::new(data.p());
    for o in &outputs {
        accumulator.merge(&o.accumulator)?;
    }
    let summary = accumulator.summary()?;
    let diagnostics = accumulator.diagnostics();
    Ok(MultiChainOutput { chains: outputs, accumulator, summary, diagnostics })
}
