//! Distribution-level checks of the Polya-Gamma sampler.

use bvs_core::pg::{sample_pg, sample_pg_vec};
use bvs_core::seeded_rng;

fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `E[exp(-t w)]` for `w ~ PG(b, c)`.
fn laplace_transform(b: f64, c: f64, t: f64) -> f64 {
    (b * (ln_cosh(c / 2.0) - ln_cosh((t / 2.0 + c * c / 4.0).sqrt()))).exp()
}

/// Two-sample Kolmogorov-Smirnov statistic.
fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn laplace_transform_matches_across_shapes() {
    let mut rng = seeded_rng(21);
    let n = 200_000;
    for &b in &[1.0, 2.5, 7.3, 20.0, 45.2] {
        for &c in &[0.0, 1.5, 4.0] {
            let draws: Vec<f64> = (0..n).map(|_| sample_pg(&mut rng, b, c).unwrap()).collect();
            let mean = draws.iter().sum::<f64>() / n as f64;
            for &t in &[0.5 / mean, 2.0 / mean] {
                let vals: Vec<f64> = draws.iter().map(|w| (-t * w).exp()).collect();
                let m = vals.iter().sum::<f64>() / n as f64;
                let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
                let exact = laplace_transform(b, c, t);
                let z = (m - exact).abs() / (sd / (n as f64).sqrt());
                assert!(z < 5.0, "b={b} c={c} t={t}: {m} vs {exact} ({z:.2} SE)");
            }
        }
    }
}

#[test]
fn unit_shape_mean_is_one_quarter() {
    let mut rng = seeded_rng(22);
    let n = 1_000_000;
    let draws: Vec<f64> = (0..n).map(|_| sample_pg(&mut rng, 1.0, 0.0).unwrap()).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((mean - 0.25).abs() < 4.0 * (var / n as f64).sqrt(), "{mean}");
}

#[test]
fn shapes_add() {
    // 1.63 / sqrt(n / 2) is the 1% critical value for equal sample sizes.
    let n = 100_000;
    let critical = 1.63 * (2.0 / n as f64).sqrt();
    let mut rng = seeded_rng(23);
    for (b, c) in [(3usize, 0.0), (17, 1.0)] {
        let direct: Vec<f64> = (0..n).map(|_| sample_pg(&mut rng, b as f64, c).unwrap()).collect();
        let summed: Vec<f64> =
            (0..n).map(|_| (0..b).map(|_| sample_pg(&mut rng, 1.0, c).unwrap()).sum()).collect();
        let d = ks_statistic(direct, summed);
        assert!(d < critical, "b={b}: KS {d:.4} vs critical {critical:.4}");
    }
}

#[test]
fn vector_draws() {
    let mut rng = seeded_rng(24);
    let w = sample_pg_vec(&mut rng, &[1.0, 1.0], &[0.0, 0.0]).unwrap();
    assert_eq!(w.len(), 2);
    assert!(w.iter().all(|&v| v > 0.0));
    assert!(sample_pg_vec(&mut rng, &[], &[]).unwrap().is_empty());
    assert!(sample_pg_vec(&mut rng, &[1.0], &[0.0, 1.0]).is_err());
}
