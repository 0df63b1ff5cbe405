//! Seeded synthetic datasets with planted effects.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson, StandardNormal};

use crate::model::{seeded_rng, ChainRng, Dataset};

fn normal(rng: &mut ChainRng) -> f64 {
    rng.sample(StandardNormal)
}

/// Covariates with lag-one correlation `rho` along the column order.
fn ar_design(n: usize, p: usize, rho: f64, rng: &mut ChainRng) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(n, p);
    let s = (1.0 - rho * rho).sqrt();
    for i in 0..n {
        let mut prev = normal(rng);
        x[(i, 0)] = prev;
        for j in 1..p {
            prev = rho * prev + s * normal(rng);
            x[(i, j)] = prev;
        }
    }
    x
}

fn linear_predictor(x: &DMatrix<f64>, causal: &[usize], effects: &[f64], intercept: f64) -> Vec<f64> {
    (0..x.nrows()).map(|i| intercept + causal.iter().zip(effects).map(|(&j, b)| b * x[(i, j)]).sum::<f64>()).collect()
}

/// Linear responses `Y = X beta + sigma * noise` with independent standard
/// normal covariates.
pub fn planted_linear(n: usize, p: usize, causal: &[usize], effects: &[f64], sigma: f64, seed: u64) -> Dataset {
    planted_linear_ar(n, p, causal, effects, sigma, 0.0, seed)
}

/// As [`planted_linear`] with lag-one correlated covariates.
pub fn planted_linear_ar(
    n: usize,
    p: usize,
    causal: &[usize],
    effects: &[f64],
    sigma: f64,
    rho: f64,
    seed: u64,
) -> Dataset {
    let mut rng = seeded_rng(seed);
    let x = ar_design(n, p, rho, &mut rng);
    let mean = linear_predictor(&x, causal, effects, 0.0);
    let y = mean.iter().map(|m| m + sigma * normal(&mut rng)).collect();
    Dataset::linear(x, y).expect("well-formed synthetic data")
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Binomial counts out of `trials` with logistic link.
pub fn binomial_logistic(
    n: usize,
    p: usize,
    causal: &[usize],
    effects: &[f64],
    intercept: f64,
    trials: u64,
    seed: u64,
) -> Dataset {
    let mut rng = seeded_rng(seed);
    let x = ar_design(n, p, 0.0, &mut rng);
    let psi = linear_predictor(&x, causal, effects, intercept);
    let y = psi.iter().map(|&s| Binomial::new(trials, sigmoid(s)).unwrap().sample(&mut rng) as f64).collect();
    Dataset::binomial(x, y, vec![trials as f64; n]).expect("well-formed synthetic data")
}

/// Two nearly identical covariates (indices 0 and 1) that both track the
/// latent log-odds `z`; the remaining covariates are noise.
pub fn correlated_duo(n: usize, p: usize, trials: u64, seed: u64) -> Dataset {
    let mut rng = seeded_rng(seed);
    let mut x = DMatrix::zeros(n, p);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let z = normal(&mut rng);
        x[(i, 0)] = z + 1e-2 * normal(&mut rng);
        x[(i, 1)] = z + 1e-2 * normal(&mut rng);
        for j in 2..p {
            x[(i, j)] = normal(&mut rng);
        }
        y.push(Binomial::new(trials, sigmoid(z)).unwrap().sample(&mut rng) as f64);
    }
    Dataset::binomial(x, y, vec![trials as f64; n]).expect("well-formed synthetic data")
}

/// Negative-binomial counts with dispersion `nu` and log mean
/// `log_base + effect * x_0`, where covariate 0 is a fair binary indicator
/// and the rest are standard normal noise.
pub fn negbin_binary_effect(n: usize, p: usize, effect: f64, nu: f64, log_base: f64, seed: u64) -> Dataset {
    let mut rng = seeded_rng(seed);
    let mut x = DMatrix::zeros(n, p);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let b = f64::from(u8::from(rng.random::<bool>()));
        x[(i, 0)] = b;
        for j in 1..p {
            x[(i, j)] = normal(&mut rng);
        }
        let mean = (log_base + effect * b).exp();
        let rate: f64 = Gamma::new(nu, mean / nu).unwrap().sample(&mut rng);
        let count: f64 = if rate > 0.0 { Poisson::new(rate).unwrap().sample(&mut rng) } else { 0.0 };
        y.push(count);
    }
    Dataset::negative_binomial(x, y, None).expect("well-formed synthetic data")
}

/// Linear benchmark with `P = 10`, `N = 50` and three planted covariates
/// (0, 3 and 6) of decreasing strength on lag-correlated covariates.
pub fn linear_benchmark(seed: u64) -> Dataset {
    planted_linear_ar(50, 10, &[0, 3, 6], &[1.0, -0.6, 0.4], 0.5, 0.5, seed)
}

/// Binomial benchmark with `P = 2`, `N = 60` and ten trials per observation;
/// covariate 0 carries a modest effect.
pub fn binomial_benchmark(seed: u64) -> Dataset {
    binomial_logistic(60, 2, &[0], &[0.4], -0.3, 10, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic() {
        let a = planted_linear(10, 4, &[1], &[1.0], 0.5, 3);
        let b = planted_linear(10, 4, &[1], &[1.0], 0.5, 3);
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
    }

    #[test]
    fn duo_columns_are_nearly_equal() {
        let d = correlated_duo(32, 6, 10, 1);
        let diff: f64 = (0..32).map(|i| (d.x[(i, 0)] - d.x[(i, 1)]).abs()).fold(0.0, f64::max);
        assert!(diff < 0.1);
    }

    #[test]
    fn negbin_counts_have_the_planted_mean() {
        let d = negbin_binary_effect(20_000, 2, 0.6, 5.0, 1.0, 2);
        let mean = d.y.iter().sum::<f64>() / d.y.len() as f64;
        let expect = 0.5 * (1f64.exp() + 1.6f64.exp());
        assert!((mean - expect).abs() < 0.05 * expect);
    }
}
