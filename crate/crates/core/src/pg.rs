//! Polya-Gamma `PG(b, c)` random variables.
//!
//! `b = 1` uses Devroye's exact alternating-series sampler; small integer `b`
//! sums independent `PG(1, c)` draws. Other shapes use the first 200 terms of
//! the infinite Gamma-sum representation with the remainder replaced by a
//! single Gamma variable matching its mean and variance.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

const TRUNC: f64 = 0.64;
const GAMMA_SUM_TERMS: usize = 200;
const MAX_SUMMED_SHAPE: f64 = 16.0;

/// Draw from `PG(b, c)`.
pub fn sample_pg<R: Rng + ?Sized>(rng: &mut R, b: f64, c: f64) -> Result<f64> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::Domain(format!("Polya-Gamma shape {b} must be positive")));
    }
    if !c.is_finite() {
        return Err(Error::Domain(format!("Polya-Gamma tilt {c} must be finite")));
    }
    Ok(if b == 1.0 {
        pg1(rng, c)
    } else if b.fract() == 0.0 && b <= MAX_SUMMED_SHAPE {
        (0..b as usize).map(|_| pg1(rng, c)).sum()
    } else {
        pg_gamma_sum(rng, b, c)
    })
}

/// One draw per observation with shapes `b` and tilts `c`.
pub fn sample_pg_vec<R: Rng + ?Sized>(rng: &mut R, b: &[f64], c: &[f64]) -> Result<Vec<f64>> {
    if b.len() != c.len() {
        return Err(Error::ShapeMismatch(format!("{} shapes for {} tilts", b.len(), c.len())));
    }
    b.iter().zip(c).map(|(&b, &c)| sample_pg(rng, b, c)).collect()
}

/// `E[PG(b, c)] = b tanh(c/2) / (2c)`.
pub fn pg_mean(b: f64, c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-4 {
        b * (0.25 - c * c / 48.0)
    } else {
        b * (0.5 * c).tanh() / (2.0 * c)
    }
}

/// `Var[PG(b, c)] = b (sinh c - c) / (4 c^3 cosh^2(c/2))`.
pub fn pg_var(b: f64, c: f64) -> f64 {
    let c = c.abs();
    if c < 0.1 {
        let x2 = 0.25 * c * c;
        b * (1.0 / 24.0 - x2 / 30.0 + 17.0 * x2 * x2 / 840.0 - 31.0 * x2 * x2 * x2 / 2835.0)
    } else {
        let sech = 1.0 / (0.5 * c).cosh();
        b * (2.0 * (0.5 * c).tanh() - c * sech * sech) / (4.0 * c * c * c)
    }
}

fn pg1<R: Rng + ?Sized>(rng: &mut R, c: f64) -> f64 {
    let z = 0.5 * c.abs();
    let k = PI * PI / 8.0 + 0.5 * z * z;
    let p = PI / (2.0 * k) * (-k * TRUNC).exp();
    let q = 2.0 * (-z).exp() * ig_cdf(TRUNC, z);
    let p_right = p / (p + q);
    loop {
        let x = if rng.random::<f64>() < p_right {
            let e: f64 = Exp1.sample(rng);
            TRUNC + e / k
        } else {
            truncated_ig(rng, z)
        };
        let mut s = series_coef(0, x);
        let y = rng.random::<f64>() * s;
        let mut n = 0;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= series_coef(n, x);
                if y <= s {
                    return 0.25 * x;
                }
            } else {
                s += series_coef(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
}

fn series_coef(n: usize, x: f64) -> f64 {
    let k = n as f64 + 0.5;
    if x > TRUNC {
        PI * k * (-0.5 * k * k * PI * PI * x).exp()
    } else {
        (2.0 / (PI * x)).powf(1.5) * PI * k * (-2.0 * k * k / x).exp()
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// CDF at `t` of the inverse Gaussian with mean `1/z` and shape 1.
fn ig_cdf(t: f64, z: f64) -> f64 {
    let b = 1.0 / t.sqrt();
    let upper = std_normal_cdf(-b * (t * z + 1.0));
    let second = if upper > 0.0 { (2.0 * z + upper.ln()).exp() } else { 0.0 };
    std_normal_cdf(b * (t * z - 1.0)) + second
}

/// Inverse Gaussian with mean `1/z` and shape 1, truncated to `(0, TRUNC)`.
fn truncated_ig<R: Rng + ?Sized>(rng: &mut R, z: f64) -> f64 {
    if z < 1.0 / TRUNC {
        loop {
            let x = loop {
                let e1: f64 = Exp1.sample(rng);
                let e2: f64 = Exp1.sample(rng);
                if e1 * e1 <= 2.0 * e2 / TRUNC {
                    let d = 1.0 + TRUNC * e1;
                    break TRUNC / (d * d);
                }
            };
            if rng.random::<f64>() <= (-0.5 * z * z * x).exp() {
                return x;
            }
        }
    }
    let mu = 1.0 / z;
    loop {
        let n: f64 = StandardNormal.sample(rng);
        let y = n * n;
        let my = mu * y;
        let mut x = mu + 0.5 * mu * my - 0.5 * mu * (4.0 * my + my * my).sqrt();
        if rng.random::<f64>() > mu / (mu + x) {
            x = mu * mu / x;
        }
        if x < TRUNC {
            return x;
        }
    }
}

fn pg_gamma_sum<R: Rng + ?Sized>(rng: &mut R, b: f64, c: f64) -> f64 {
    let gamma = Gamma::new(b, 1.0).expect("positive shape");
    let a = c * c / (4.0 * PI * PI);
    let mut s = 0.0;
    for k in 1..=GAMMA_SUM_TERMS {
        let h = k as f64 - 0.5;
        s += gamma.sample(rng) / (h * h + a);
    }
    let (t1, t2) = remainder_sums(GAMMA_SUM_TERMS, a);
    let mean = b * t1 / (2.0 * PI * PI);
    let var = b * t2 / (4.0 * PI.powi(4));
    let tail = Gamma::new(mean * mean / var, var / mean).expect("positive tail moments").sample(rng);
    s / (2.0 * PI * PI) + tail
}

/// `sum_{k > K} 1/d_k` and `sum_{k > K} 1/d_k^2` with `d_k = (k - 1/2)^2 + a`,
/// from the midpoint Euler-Maclaurin formula.
pub(crate) fn remainder_sums(terms: usize, a: f64) -> (f64, f64) {
    let k = terms as f64;
    let s = a.sqrt() / k;
    let atan_ratio = if s < 1e-4 { 1.0 - s * s / 3.0 } else { s.atan() / s };
    let j = if s < 0.1 {
        (0..12).map(|m| (-1f64).powi(m) * (m as f64 + 1.0) * s.powi(2 * m) / (2.0 * m as f64 + 3.0)).sum()
    } else {
        (atan_ratio - 1.0 / (1.0 + s * s)) / (2.0 * s * s)
    };
    let d = k * k + a;
    let t1 = atan_ratio / k - 2.0 * k / (24.0 * d * d);
    let t2 = j / (k * k * k) - 4.0 * k / (24.0 * d * d * d);
    (t1, t2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Mean and variance of the Gamma-sum representation summed term by term
    /// far past the truncation point.
    fn series_moments(b: f64, c: f64, terms: usize) -> (f64, f64) {
        let a = c * c / (4.0 * PI * PI);
        let (mut m1, mut m2) = (0.0, 0.0);
        for k in (1..=terms).rev() {
            let h = k as f64 - 0.5;
            let d = h * h + a;
            m1 += 1.0 / d;
            m2 += 1.0 / (d * d);
        }
        let (t1, t2) = remainder_sums(terms, a);
        (b * (m1 + t1) / (2.0 * PI * PI), b * (m2 + t2) / (4.0 * PI.powi(4)))
    }

    #[test]
    fn closed_form_moments_match_gamma_sum_series() {
        for &b in &[1.0, 2.5, 7.3] {
            for &c in &[0.0, 1e-5, 0.5, 3.0, 40.0] {
                let (m, v) = series_moments(b, c, 200_000);
                assert!((m - pg_mean(b, c)).abs() < 1e-12 * m, "mean b={b} c={c}");
                assert!((v - pg_var(b, c)).abs() < 1e-10 * v, "var b={b} c={c}");
            }
        }
    }

    #[test]
    fn remainder_matches_brute_force() {
        for &a in &[0.0, 0.3, 50.0, 4e4, 1e6] {
            let (t1, t2) = remainder_sums(200, a);
            let (mut b1, mut b2) = (0.0, 0.0);
            for k in (201..4_000_000).rev() {
                let h = k as f64 - 0.5;
                let d = h * h + a;
                b1 += 1.0 / d;
                b2 += 1.0 / (d * d);
            }
            let h = 4_000_000.0 - 0.5;
            b1 += 1.0 / h;
            assert!((t1 - b1).abs() < 1e-9 * t1, "a={a}: {t1} vs {b1}");
            assert!((t2 - b2).abs() < 1e-9 * t2, "a={a}: {t2} vs {b2}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(sample_pg(&mut rng, 0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(sample_pg(&mut rng, -1.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(sample_pg(&mut rng, 1.0, f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn draws_are_positive_and_reproducible() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..200).map(|i| sample_pg(&mut rng, 0.5 + (i % 9) as f64, (i % 5) as f64 - 2.0).unwrap()).collect::<Vec<_>>()
        };
        let a = draw(3);
        assert!(a.iter().all(|v| *v > 0.0 && v.is_finite()));
        assert_eq!(a, draw(3));
    }

    #[test]
    fn extreme_tilts_stay_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &c in &[200.0, 1500.0, -800.0] {
            for &b in &[1.0, 3.0, 4.5] {
                let v = sample_pg(&mut rng, b, c).unwrap();
                assert!(v.is_finite() && v > 0.0);
            }
        }
    }
}
