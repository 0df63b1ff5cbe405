//! Subset-restricted weighted tempered Gibbs sampling.
//!
//! Conditional inclusion probabilities are evaluated only on a random subset
//! `S` of coordinates. `S` always contains a small anchor set `A` of promising
//! coordinates together with the coordinate that was just flipped, and is
//! otherwise uniform. Estimates use the conditional probability inside `S`
//! and the sampled indicator outside it.
//!
//! When the chain also has an auxiliary index zero (count likelihoods or an
//! inferred `h`), that index is a permanent member of both `A` and `S` and
//! counts toward their sizes.

use rand::seq::index;
use rand::Rng;
use statrs::function::factorial::ln_binomial;

use crate::chain::Sampler;
use crate::error::{Error, Result};
use crate::estimators::ChainOutput;
use crate::model::{Dataset, GammaState, Likelihood, SamplerConfig, Variant};
use crate::wtgs::coordinate_term;

/// `U(S | i, A) / U(S | a, A)` for any anchor member `a`: one for anchor
/// members, `(S - A) / (P - A)` otherwise.
pub fn u_ratio(in_anchor: bool, universe: usize, size: usize, anchor: usize) -> f64 {
    if in_anchor {
        1.0
    } else {
        (size - anchor) as f64 / (universe - anchor) as f64
    }
}

/// Probability of any single admissible subset under the uniform subset
/// distribution given the flipped coordinate.
pub fn subset_probability(in_anchor: bool, universe: usize, size: usize, anchor: usize) -> f64 {
    let forced = anchor + usize::from(!in_anchor);
    (-ln_binomial((universe - forced) as u64, (size - forced) as u64)).exp()
}

/// Uniform subset of `0..p` of size `size` containing `anchor` and `forced`.
/// Returned in increasing order.
pub fn sample_subset<R: Rng + ?Sized>(
    forced: Option<usize>,
    anchor: &[usize],
    p: usize,
    size: usize,
    rng: &mut R,
) -> Vec<usize> {
    let mut st = SubsetState::with_anchor(p, size, anchor.to_vec());
    st.resample(forced, rng);
    st.list
}

/// Current subset and anchor over `p` coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct SubsetState {
    p: usize,
    size: usize,
    anchor: Vec<usize>,
    in_anchor: Vec<bool>,
    members: Vec<bool>,
    list: Vec<usize>,
}

impl SubsetState {
    /// `size` and `anchor` count coordinates only; the caller strips any
    /// auxiliary index.
    pub fn with_anchor(p: usize, size: usize, mut anchor: Vec<usize>) -> Self {
        anchor.sort_unstable();
        let mut in_anchor = vec![false; p];
        for &a in &anchor {
            in_anchor[a] = true;
        }
        SubsetState { p, size, anchor, in_anchor, members: vec![false; p], list: Vec::new() }
    }

    pub fn members(&self) -> &[usize] {
        &self.list
    }

    pub fn anchor(&self) -> &[usize] {
        &self.anchor
    }

    pub fn contains(&self, j: usize) -> bool {
        self.members[j]
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Selection-mass factor of coordinate `j`.
    pub fn u(&self, j: usize) -> f64 {
        u_ratio(self.in_anchor[j], self.p, self.size, self.anchor.len())
    }

    pub fn set_anchor(&mut self, mut anchor: Vec<usize>) {
        for &a in &self.anchor {
            self.in_anchor[a] = false;
        }
        anchor.sort_unstable();
        for &a in &anchor {
            self.in_anchor[a] = true;
        }
        self.anchor = anchor;
    }

    /// Draw a fresh subset containing the anchor and `forced`.
    pub fn resample<R: Rng + ?Sized>(&mut self, forced: Option<usize>, rng: &mut R) {
        for &j in &self.list {
            self.members[j] = false;
        }
        self.list.clear();
        for &j in self.anchor.iter().chain(forced.iter()) {
            if !self.members[j] {
                self.members[j] = true;
                self.list.push(j);
            }
        }
        let need = self.size.saturating_sub(self.list.len());
        let free = self.p - self.list.len();
        if need * 2 > free {
            let complement: Vec<usize> = (0..self.p).filter(|&j| !self.members[j]).collect();
            for k in index::sample(rng, complement.len(), need) {
                let j = complement[k];
                self.members[j] = true;
                self.list.push(j);
            }
        } else {
            let mut added = 0;
            while added < need {
                let j = rng.random_range(0..self.p);
                if !self.members[j] {
                    self.members[j] = true;
                    self.list.push(j);
                    added += 1;
                }
            }
        }
        self.list.sort_unstable();
    }
}

/// Normalizing sum over the subset, without any auxiliary index.
pub fn phi_subset(
    state: &SubsetState,
    cond_pips: &[f64],
    gamma: &GammaState,
    epsilon: f64,
    variant: Variant,
) -> f64 {
    let p = gamma.p();
    state
        .members()
        .iter()
        .zip(cond_pips)
        .map(|(&j, &c)| coordinate_term(variant, c, gamma.get(j), epsilon, p) * state.u(j))
        .sum()
}

/// Response used to rank covariates for the initial anchor.
fn ranking_response(data: &Dataset) -> Vec<f64> {
    match (&data.likelihood, &data.total_counts) {
        (Likelihood::Binomial, Some(c)) => data.y.iter().zip(c).map(|(y, c)| y / c).collect(),
        _ => data.y.clone(),
    }
}

/// The `a` covariates with the largest absolute correlation with the response.
pub fn initial_anchor(data: &Dataset, a: usize) -> Vec<usize> {
    let y = ranking_response(data);
    let n = y.len() as f64;
    let ym = y.iter().sum::<f64>() / n;
    let yc: Vec<f64> = y.iter().map(|v| v - ym).collect();
    let yy: f64 = yc.iter().map(|v| v * v).sum();
    let scores: Vec<f64> = (0..data.p())
        .map(|j| {
            let col = data.column(j);
            let xm = col.iter().sum::<f64>() / n;
            let (xy, xx) = col.iter().zip(&yc).fold((0.0, 0.0), |(s, t), (x, y)| (s + (x - xm) * y, t + (x - xm) * (x - xm)));
            if xx > 0.0 && yy > 0.0 {
                (xy / (xx * yy).sqrt()).abs()
            } else {
                0.0
            }
        })
        .collect();
    top_k(&scores, a)
}

/// The `a` coordinates with the largest running inclusion estimates; ties go
/// to the lower index.
pub fn adapt_anchor(running_pips: &[f64], a: usize) -> Vec<usize> {
    top_k(running_pips, a)
}

fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Subset-restricted linear chain.
pub fn subset_wtgs_run<R: Rng + ?Sized>(data: &Dataset, cfg: &SamplerConfig, rng: &mut R) -> Result<ChainOutput> {
    if data.likelihood != Likelihood::Linear {
        return Err(Error::Config("use subset_pg_wtgs_run for count data".into()));
    }
    if cfg.subset.is_none() {
        return Err(Error::Config("subset sampling needs a subset size".into()));
    }
    Sampler::new(data, cfg, rng)?.run(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ratio_values() {
        assert_eq!(u_ratio(true, 100, 20, 10), 1.0);
        assert!((u_ratio(false, 100, 20, 10) - 10.0 / 90.0).abs() < 1e-15);
    }

    #[test]
    fn ratio_is_reciprocal_of_probability_quotient() {
        // The subset probabilities themselves differ by (P - A) / (S - A); the
        // sampler keeps the reciprocal, which any anchor-only factor permits.
        for (p, s, a) in [(10, 5, 2), (7, 3, 0), (30, 12, 4)] {
            let r = subset_probability(false, p, s, a) / subset_probability(true, p, s, a);
            assert!((r * u_ratio(false, p, s, a) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn full_subset_has_unit_ratio() {
        assert_eq!(u_ratio(false, 8, 8, 3), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_subset(Some(2), &[5], 8, 8, &mut rng), (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn subsets_are_uniform_over_supersets() {
        // P = 5, S = 3, A = {0}, i = 4: the free slot is uniform over {1, 2, 3}.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut counts = [0usize; 5];
        let n = 30_000;
        for _ in 0..n {
            let s = sample_subset(Some(4), &[0], 5, 3, &mut rng);
            for j in s {
                counts[j] += 1;
            }
        }
        assert_eq!(counts[0], n);
        assert_eq!(counts[4], n);
        for &c in &counts[1..4] {
            assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() < 0.012);
        }
    }

    #[test]
    fn anchor_ties_break_to_lower_index() {
        assert_eq!(adapt_anchor(&[0.2, 0.9, 0.9, 0.1, 0.9], 2), vec![1, 2]);
    }

    proptest! {
        #[test]
        fn subset_contains_anchor_and_flip(
            p in 2usize..60,
            seed in any::<u64>(),
            size_frac in 0.0f64..1.0,
            a_frac in 0.0f64..1.0,
            i_frac in 0.0f64..1.0,
        ) {
            let size = 1 + ((p - 1) as f64 * size_frac) as usize;
            let a = ((size - 1) as f64 * a_frac) as usize;
            let anchor: Vec<usize> = (0..a).map(|k| (k * 7) % p).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
            let i = ((p - 1) as f64 * i_frac) as usize;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = sample_subset(Some(i), &anchor, p, size, &mut rng);
            prop_assert_eq!(s.len(), size.max(anchor.len() + usize::from(!anchor.contains(&i))));
            prop_assert!(s.contains(&i));
            prop_assert!(anchor.iter().all(|j| s.contains(j)));
            prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
