//! Importance-weighted posterior estimates from sampler output.
//!
//! Chains fold every retained iteration into a [`WeightedAccumulator`], so
//! the estimates never require the full trace. The slice-based functions
//! compute the same quantities from stored samples and serve as references.
//!
//! Rao-Blackwellized inclusion numerators are stored as the raw numerator
//! plus a correction: `sum_t w_t (p_tj - gamma_tj)` over the coordinates whose
//! conditional probability was evaluated. With the full coordinate set this is
//! the usual Rao-Blackwell estimate; with a subset it is the partial one.

use crate::error::{Error, Result};
use crate::model::{AuxIndex, ChainState, GammaState};

/// One retained iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSample {
    /// Unnormalized importance weight.
    pub weight: f64,
    pub active: Vec<usize>,
    pub aux: AuxIndex,
    pub h: Option<f64>,
    pub nu: Option<f64>,
    /// Coordinates whose conditional inclusion probabilities were evaluated
    /// (`None` means all of them). Only kept with full tracing.
    pub subset: Option<Vec<usize>>,
    /// Conditional inclusion probabilities aligned with `subset`. Only kept
    /// with full tracing.
    pub cond_pips: Option<Vec<f64>>,
}

/// Per-iteration diagnostics, kept with full tracing (burn-in included).
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub t: usize,
    pub aux: AuxIndex,
    pub weight: f64,
    pub size: usize,
    pub xi: Option<f64>,
    pub accepted: Option<bool>,
    pub h: f64,
    pub nu: Option<f64>,
}

/// Running weighted sums over retained iterations. Accumulators of
/// independent chains merge by addition.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedAccumulator {
    pub p: usize,
    pub count: u64,
    pub sum_w: f64,
    pub sum_w2: f64,
    pub max_w: f64,
    pub raw: Vec<f64>,
    pub rb_correction: Vec<f64>,
    pub beta: Vec<f64>,
    pub beta_sq: Vec<f64>,
    pub h: Option<(f64, f64)>,
    pub nu: Option<(f64, f64)>,
    pub zero_visits: u64,
    pub omega_attempts: u64,
    pub omega_accepts: u64,
    pub flips: Vec<u64>,
}

impl WeightedAccumulator {
    pub fn new(p: usize) -> Self {
        WeightedAccumulator {
            p,
            count: 0,
            sum_w: 0.0,
            sum_w2: 0.0,
            max_w: 0.0,
            raw: vec![0.0; p],
            rb_correction: vec![0.0; p],
            beta: vec![0.0; p],
            beta_sq: vec![0.0; p],
            h: None,
            nu: None,
            zero_visits: 0,
            omega_attempts: 0,
            omega_accepts: 0,
            flips: vec![0; p],
        }
    }

    /// Register a retained iteration with weight `w`.
    pub fn push_weight(&mut self, w: f64) {
        self.count += 1;
        self.sum_w += w;
        self.sum_w2 += w * w;
        self.max_w = self.max_w.max(w);
    }

    /// Active coordinates with conditional posterior coefficient means and
    /// variances aligned with `active`.
    pub fn push_active(&mut self, w: f64, active: &[usize], beta: &[f64], var: &[f64]) {
        for ((&j, &b), &v) in active.iter().zip(beta).zip(var) {
            self.raw[j] += w;
            self.beta[j] += w * b;
            self.beta_sq[j] += w * (b * b + v);
        }
    }

    /// Conditional inclusion probabilities `pips` of the coordinates `coords`.
    pub fn push_conditionals(&mut self, w: f64, coords: &[usize], pips: &[f64], gamma: &GammaState) {
        for (&j, &p) in coords.iter().zip(pips) {
            self.rb_correction[j] += w * (p - f64::from(u8::from(gamma.get(j))));
        }
    }

    pub fn push_h(&mut self, w: f64, h: f64) {
        let (a, b) = self.h.unwrap_or((0.0, 0.0));
        self.h = Some((a + w * h, b + w * h * h));
    }

    pub fn push_nu(&mut self, w: f64, nu: f64) {
        let (a, b) = self.nu.unwrap_or((0.0, 0.0));
        self.nu = Some((a + w * nu, b + w * nu * nu));
    }

    pub fn merge(&mut self, other: &WeightedAccumulator) -> Result<()> {
        if other.p != self.p {
            return Err(Error::ShapeMismatch(format!("merging accumulators over {} and {} coordinates", self.p, other.p)));
        }
        self.count += other.count;
        self.sum_w += other.sum_w;
        self.sum_w2 += other.sum_w2;
        self.max_w = self.max_w.max(other.max_w);
        for (dst, src) in [
            (&mut self.raw, &other.raw),
            (&mut self.rb_correction, &other.rb_correction),
            (&mut self.beta, &other.beta),
            (&mut self.beta_sq, &other.beta_sq),
        ] {
            dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
        }
        self.h = add_pair(self.h, other.h);
        self.nu = add_pair(self.nu, other.nu);
        self.zero_visits += other.zero_visits;
        self.omega_attempts += other.omega_attempts;
        self.omega_accepts += other.omega_accepts;
        self.flips.iter_mut().zip(&other.flips).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn summary(&self) -> Result<PosteriorSummary> {
        if self.count == 0 || !(self.sum_w > 0.0) {
            return Err(Error::EmptyChain);
        }
        let sw = self.sum_w;
        let pip_raw: Vec<f64> = self.raw.iter().map(|r| r / sw).collect();
        let pip = self.raw.iter().zip(&self.rb_correction).map(|(r, c)| ((r + c) / sw).clamp(0.0, 1.0)).collect();
        let beta_mean = self.beta.iter().map(|b| b / sw).collect();
        let mut beta_cond_mean = vec![f64::NAN; self.p];
        let mut beta_cond_sd = vec![f64::NAN; self.p];
        for j in 0..self.p {
            if self.raw[j] > 0.0 {
                let m = self.beta[j] / self.raw[j];
                beta_cond_mean[j] = m;
                beta_cond_sd[j] = (self.beta_sq[j] / self.raw[j] - m * m).max(0.0).sqrt();
            }
        }
        let moments = |pair: Option<(f64, f64)>| {
            pair.map(|(a, b)| {
                let m = a / sw;
                (m, (b / sw - m * m).max(0.0).sqrt())
            })
        };
        Ok(PosteriorSummary { pip, pip_raw, beta_mean, beta_cond_mean, beta_cond_sd, h: moments(self.h), nu: moments(self.nu) })
    }

    pub fn diagnostics(&self) -> Diagnostics {
        let n = self.count as f64;
        let weight_variance = if self.count > 0 { n * self.sum_w2 / (self.sum_w * self.sum_w) - 1.0 } else { f64::NAN };
        Diagnostics {
            retained: self.count,
            weight_variance,
            effective_sample_size: self.sum_w * self.sum_w / self.sum_w2,
            max_weight: self.max_w,
            omega_accept_rate: (self.omega_attempts > 0).then(|| self.omega_accepts as f64 / self.omega_attempts as f64),
            zero_fraction: (self.count > 0).then(|| self.zero_visits as f64 / n),
            flip_counts: self.flips.clone(),
        }
    }
}

fn add_pair(a: Option<(f64, f64)>, b: Option<(f64, f64)>) -> Option<(f64, f64)> {
    match (a, b) {
        (Some((x, y)), Some((u, v))) => Some((x + u, y + v)),
        (a, None) => a,
        (None, b) => b,
    }
}

/// Posterior estimates. Coefficient summaries conditional on inclusion are
/// `NaN` for covariates that were never included.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorSummary {
    /// Rao-Blackwellized (or partially Rao-Blackwellized) inclusion probabilities.
    pub pip: Vec<f64>,
    /// Weighted inclusion frequencies.
    pub pip_raw: Vec<f64>,
    /// Model-averaged coefficient means (zero when excluded).
    pub beta_mean: Vec<f64>,
    pub beta_cond_mean: Vec<f64>,
    pub beta_cond_sd: Vec<f64>,
    /// Posterior mean and standard deviation of `h` when it is inferred.
    pub h: Option<(f64, f64)>,
    /// Posterior mean and standard deviation of the dispersion.
    pub nu: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics {
    pub retained: u64,
    /// Variance of the weights after scaling them to mean one.
    pub weight_variance: f64,
    pub effective_sample_size: f64,
    pub max_weight: f64,
    pub omega_accept_rate: Option<f64>,
    /// Fraction of retained iterations that refreshed the auxiliary variables.
    pub zero_fraction: Option<f64>,
    pub flip_counts: Vec<u64>,
}

/// Everything a single chain produces.
#[derive(Clone, Debug)]
pub struct ChainOutput {
    pub summary: PosteriorSummary,
    pub diagnostics: Diagnostics,
    pub accumulator: WeightedAccumulator,
    pub samples: Vec<WeightedSample>,
    pub trace: Vec<IterationRecord>,
    pub final_state: ChainState,
    /// Largest weight over all iterations, burn-in included.
    pub max_weight_all: f64,
    /// Final value of the index-zero weight, when the chain has one.
    pub xi: Option<f64>,
}

pub type LinearChainOutput = ChainOutput;
pub type CountChainOutput = ChainOutput;

impl ChainOutput {
    pub fn normalized_weights(&self) -> Result<Vec<f64>> {
        normalize_weights(&self.samples.iter().map(|s| s.weight).collect::<Vec<_>>())
    }
}

/// Weights scaled to sum to one.
pub fn normalize_weights(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(Error::EmptyChain);
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::Numerical(format!("invalid weight {w}")));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Numerical("weights sum to zero".into()));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

/// Weighted inclusion frequencies.
pub fn pip_raw(samples: &[WeightedSample], p: usize) -> Result<Vec<f64>> {
    let w = normalize_weights(&samples.iter().map(|s| s.weight).collect::<Vec<_>>())?;
    let mut out = vec![0.0; p];
    for (s, w) in samples.iter().zip(&w) {
        for &j in &s.active {
            out[j] += w;
        }
    }
    Ok(out)
}

/// Weighted average of full conditional inclusion vectors.
pub fn pip_rb(conditionals: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>> {
    if conditionals.len() != weights.len() {
        return Err(Error::ShapeMismatch(format!("{} vectors for {} weights", conditionals.len(), weights.len())));
    }
    let w = normalize_weights(weights)?;
    let p = conditionals[0].len();
    let mut out = vec![0.0; p];
    for (c, w) in conditionals.iter().zip(&w) {
        if c.len() != p {
            return Err(Error::ShapeMismatch("conditional vectors differ in length".into()));
        }
        out.iter_mut().zip(c).for_each(|(o, v)| *o += w * v);
    }
    Ok(out)
}

/// Partially Rao-Blackwellized estimate from traced samples: the conditional
/// probability for coordinates in the sample's subset, the indicator otherwise.
pub fn pip_partial_rb(samples: &[WeightedSample], p: usize) -> Result<Vec<f64>> {
    let w = normalize_weights(&samples.iter().map(|s| s.weight).collect::<Vec<_>>())?;
    let mut out = vec![0.0; p];
    for (s, w) in samples.iter().zip(&w) {
        let cond = s.cond_pips.as_ref().ok_or_else(|| Error::Config("samples were not traced".into()))?;
        let mut local: Vec<f64> = vec![0.0; p];
        for &j in &s.active {
            local[j] = 1.0;
        }
        match &s.subset {
            Some(sub) => sub.iter().zip(cond).for_each(|(&j, &c)| local[j] = c),
            None => local.copy_from_slice(cond),
        }
        out.iter_mut().zip(&local).for_each(|(o, v)| *o += w * v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(weight: f64, active: Vec<usize>, subset: Option<Vec<usize>>, cond: Vec<f64>) -> WeightedSample {
        WeightedSample { weight, active, aux: AuxIndex::Coord(0), h: None, nu: None, subset, cond_pips: Some(cond) }
    }

    #[test]
    fn normalize_rejects_empty_and_zero() {
        assert_eq!(normalize_weights(&[]), Err(Error::EmptyChain));
        assert!(matches!(normalize_weights(&[0.0, 0.0]), Err(Error::Numerical(_))));
        assert_eq!(normalize_weights(&[1.0, 3.0]).unwrap(), vec![0.25, 0.75]);
    }

    #[test]
    fn empty_accumulator_has_no_summary() {
        assert_eq!(WeightedAccumulator::new(3).summary(), Err(Error::EmptyChain));
    }

    #[test]
    fn partial_rb_mixes_conditionals_and_indicators() {
        let s = vec![
            sample(1.0, vec![0, 2], Some(vec![1, 2]), vec![0.4, 0.9]),
            sample(3.0, vec![1], Some(vec![0, 1]), vec![0.2, 0.6]),
        ];
        let est = pip_partial_rb(&s, 3).unwrap();
        let expect = [0.25 * 1.0 + 0.75 * 0.2, 0.25 * 0.4 + 0.75 * 0.6, 0.25 * 0.9];
        for (a, b) in est.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn accumulator_matches_trace_estimators() {
        let s = vec![
            sample(0.5, vec![0], Some(vec![0, 1]), vec![0.7, 0.1]),
            sample(2.0, vec![1, 2], Some(vec![2, 0]), vec![0.8, 0.3]),
            sample(1.5, vec![], Some(vec![1, 2]), vec![0.05, 0.4]),
        ];
        let mut acc = WeightedAccumulator::new(3);
        for x in &s {
            acc.push_weight(x.weight);
            let gamma = GammaState::from_active(3, &x.active).unwrap();
            acc.push_active(x.weight, &x.active, &vec![0.0; x.active.len()], &vec![0.0; x.active.len()]);
            acc.push_conditionals(x.weight, x.subset.as_ref().unwrap(), x.cond_pips.as_ref().unwrap(), &gamma);
        }
        let summary = acc.summary().unwrap();
        let reference = pip_partial_rb(&s, 3).unwrap();
        let raw = pip_raw(&s, 3).unwrap();
        for j in 0..3 {
            assert!((summary.pip[j] - reference[j]).abs() < 1e-14);
            assert!((summary.pip_raw[j] - raw[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn weight_variance_of_equal_weights_is_zero() {
        let mut acc = WeightedAccumulator::new(1);
        for _ in 0..10 {
            acc.push_weight(0.3);
        }
        let d = acc.diagnostics();
        assert!(d.weight_variance.abs() < 1e-12);
        assert!((d.effective_sample_size - 10.0).abs() < 1e-9);
    }

    #[test]
    fn coefficient_moments_include_within_model_variance() {
        let mut acc = WeightedAccumulator::new(2);
        acc.push_weight(1.0);
        acc.push_active(1.0, &[0], &[2.0], &[0.25]);
        acc.push_weight(1.0);
        acc.push_active(1.0, &[0], &[4.0], &[0.25]);
        let s = acc.summary().unwrap();
        assert!((s.beta_cond_mean[0] - 3.0).abs() < 1e-14);
        assert!((s.beta_cond_sd[0] - 1.25f64.sqrt()).abs() < 1e-14);
        assert!((s.beta_mean[0] - 3.0).abs() < 1e-14);
        assert!(s.beta_cond_mean[1].is_nan());
    }

    proptest! {
        #[test]
        fn normalized_weights_sum_to_one(w in proptest::collection::vec(1e-6f64..1e3, 1..200)) {
            let n = normalize_weights(&w).unwrap();
            prop_assert!((n.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(n.iter().all(|v| *v >= 0.0));
        }

        #[test]
        fn rb_estimates_lie_in_unit_interval(
            rows in proptest::collection::vec((1e-3f64..10.0, proptest::collection::vec(0.0f64..=1.0, 4)), 1..50)
        ) {
            let (w, c): (Vec<f64>, Vec<Vec<f64>>) = rows.into_iter().unzip();
            let est = pip_rb(&c, &w).unwrap();
            prop_assert!(est.iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v)));
        }

        #[test]
        fn merged_accumulators_equal_a_single_pass(
            rows in proptest::collection::vec((1e-3f64..10.0, 0usize..8, 0.0f64..1.0), 2..60),
            split in 1usize..59,
        ) {
            let split = split.min(rows.len() - 1);
            let fold = |rows: &[(f64, usize, f64)]| {
                let mut acc = WeightedAccumulator::new(8);
                for &(w, j, p) in rows {
                    acc.push_weight(w);
                    acc.push_active(w, &[j], &[p], &[p * p]);
                    acc.push_conditionals(w, &[j], &[p], &GammaState::from_active(8, &[j]).unwrap());
                    acc.push_h(w, p);
                }
                acc
            };
            let whole = fold(&rows);
            let mut merged = fold(&rows[..split]);
            merged.merge(&fold(&rows[split..])).unwrap();
            let a = whole.summary().unwrap();
            let b = merged.summary().unwrap();
            for j in 0..8 {
                prop_assert!((a.pip[j] - b.pip[j]).abs() < 1e-12);
                prop_assert!((a.beta_mean[j] - b.beta_mean[j]).abs() < 1e-12);
            }
            prop_assert!((a.h.unwrap().0 - b.h.unwrap().0).abs() < 1e-12);
        }
    }
}
