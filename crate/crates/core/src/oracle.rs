//! Exact reference posteriors for small problems.
//!
//! Everything here is computed independently of the sampler's evidence code:
//! linear-model evidences use a hand-written LU elimination, count-model
//! evidences integrate the coefficients numerically, and the detailed-balance
//! check builds the subset sampler's transition matrix explicitly.

use std::f64::consts::PI;

use statrs::function::factorial::ln_binomial;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{Dataset, GammaState, Likelihood, Variant};
use crate::subset::u_ratio;
use crate::wtgs::{coordinate_term, eta};

/// Largest number of covariates accepted for exhaustive enumeration.
pub const MAX_ENUMERATION_P: usize = 20;
/// Largest number of covariates accepted for coefficient quadrature.
pub const MAX_QUADRATURE_P: usize = 3;
/// Largest number of covariates accepted by the detailed-balance check.
pub const MAX_BALANCE_P: usize = 4;

/// Posterior over all `2^P` inclusion states, indexed by bit mask.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactPosterior {
    pub p: usize,
    /// Normalized log posterior probability of each model.
    pub log_post: Vec<f64>,
    pub pips: Vec<f64>,
}

impl ExactPosterior {
    fn from_log_joint(p: usize, log_joint: Vec<f64>) -> Self {
        let max = log_joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + log_joint.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let log_post: Vec<f64> = log_joint.iter().map(|v| v - lse).collect();
        let mut pips = vec![0.0; p];
        for (mask, lp) in log_post.iter().enumerate() {
            let w = lp.exp();
            for (i, pip) in pips.iter_mut().enumerate() {
                if mask >> i & 1 == 1 {
                    *pip += w;
                }
            }
        }
        ExactPosterior { p, log_post, pips }
    }

    pub fn prob(&self, mask: u64) -> f64 {
        self.log_post[mask as usize].exp()
    }

    /// `p(gamma_i = 1 | gamma_-i, Y)` at the model `mask`.
    pub fn conditional_pip(&self, mask: u64, i: usize) -> f64 {
        let on = self.log_post[(mask | 1 << i) as usize];
        let off = self.log_post[(mask & !(1 << i)) as usize];
        1.0 / (1.0 + (off - on).exp())
    }

    pub fn conditional_pips(&self, mask: u64) -> Vec<f64> {
        (0..self.p).map(|i| self.conditional_pip(mask, i)).collect()
    }
}

fn check_enumerable(p: usize, limit: usize) -> Result<()> {
    if p > limit {
        return Err(Error::TooLarge(format!("{p} covariates exceeds the limit of {limit}")));
    }
    Ok(())
}

fn check_h(h: f64) -> Result<()> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::Config(format!("h = {h} must lie in (0, 1)")));
    }
    Ok(())
}

fn log_prior(size: usize, p: usize, h: f64) -> f64 {
    size as f64 * h.ln() + (p - size) as f64 * (1.0 - h).ln()
}

/// Solve `A x = b` for a row-major `n x n` matrix by Gaussian elimination with
/// partial pivoting; also returns `log |det A|` and the determinant's sign.
fn lu_solve(mut a: Vec<f64>, n: usize, mut b: Vec<f64>) -> Result<(Vec<f64>, f64, f64)> {
    let mut logdet = 0.0;
    let mut sign = 1.0;
    for col in 0..n {
        let piv = (col..n).max_by(|&r, &s| a[r * n + col].abs().total_cmp(&a[s * n + col].abs())).unwrap();
        let pv = a[piv * n + col];
        if pv == 0.0 || !pv.is_finite() {
            return Err(Error::Numerical("singular matrix in elimination".into()));
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            b.swap(piv, col);
            sign = -sign;
        }
        logdet += pv.abs().ln();
        if pv < 0.0 {
            sign = -sign;
        }
        for r in col + 1..n {
            let f = a[r * n + col] / pv;
            if f != 0.0 {
                for k in col..n {
                    a[r * n + k] -= f * a[col * n + k];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r * n + k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r * n + r];
    }
    Ok((x, logdet, sign))
}

/// Columns of the active design: the selected covariates, then the intercept.
fn design_columns(data: &Dataset, active: &[usize], bias: bool) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = active.iter().map(|&j| data.column(j).to_vec()).collect();
    if bias {
        cols.push(vec![1.0; data.n()]);
    }
    cols
}

/// Log evidence of a linear model (up to a model-independent constant).
pub fn linear_log_evidence(data: &Dataset, active: &[usize], tau: f64, bias: Option<f64>) -> Result<f64> {
    let cols = design_columns(data, active, bias.is_some());
    let d = cols.len();
    let yty: f64 = data.y.iter().map(|v| v * v).sum();
    let n = data.n() as f64;
    let mut sum_log_prec = active.len() as f64 * tau.ln();
    if let Some(tb) = bias {
        sum_log_prec += tb.ln();
    }
    if d == 0 {
        return Ok(-0.5 * n * yty.ln());
    }
    let mut a = vec![0.0; d * d];
    let mut z = vec![0.0; d];
    for r in 0..d {
        z[r] = cols[r].iter().zip(&data.y).map(|(x, y)| x * y).sum();
        for s in 0..=r {
            let v: f64 = cols[r].iter().zip(&cols[s]).map(|(u, v)| u * v).sum();
            a[r * d + s] = v;
            a[s * d + r] = v;
        }
        a[r * d + r] += match bias { Some(tb) if r == d - 1 => tb, _ => tau };
    }
    let (sol, logdet, sign) = lu_solve(a, d, z.clone())?;
    if sign < 0.0 {
        return Err(Error::Numerical("indefinite linear-model block".into()));
    }
    let quad: f64 = z.iter().zip(&sol).map(|(a, b)| a * b).sum();
    let resid = yty - quad;
    if !(resid > 0.0) {
        return Err(Error::Numerical(format!("residual sum of squares {resid} is not positive")));
    }
    Ok(0.5 * sum_log_prec - 0.5 * logdet - 0.5 * n * resid.ln())
}

/// Exact linear-model posterior by enumerating all `2^P` models.
pub fn enumerate_linear(data: &Dataset, h: f64, tau: f64, bias: Option<f64>) -> Result<ExactPosterior> {
    if data.likelihood != Likelihood::Linear {
        return Err(Error::Config("enumeration needs linear data; use quadrature_count for counts".into()));
    }
    check_h(h)?;
    let p = data.p();
    check_enumerable(p, MAX_ENUMERATION_P)?;
    let log_joint = (0..1u64 << p)
        .map(|mask| {
            let g = GammaState::from_mask(p, mask);
            Ok(linear_log_evidence(data, g.active(), tau, bias)? + log_prior(g.size(), p, h))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ExactPosterior::from_log_joint(p, log_joint))
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log joint density of counts and coefficients for one model.
struct CountIntegrand<'d> {
    data: &'d Dataset,
    cols: Vec<Vec<f64>>,
    prec: Vec<f64>,
    nu: f64,
    shift: f64,
    constant: f64,
}

impl<'d> CountIntegrand<'d> {
    fn new(data: &'d Dataset, active: &[usize], tau: f64, tau_bias: f64, nu: f64) -> Self {
        let cols = design_columns(data, active, true);
        let mut prec = vec![tau; active.len()];
        prec.push(tau_bias);
        let mut constant: f64 = prec.iter().map(|l| 0.5 * (l / (2.0 * PI)).ln()).sum();
        let shift = match data.likelihood {
            Likelihood::NegativeBinomial => {
                constant += data.y.iter().map(|&y| ln_gamma(y + nu) - ln_gamma(nu) - ln_gamma(y + 1.0)).sum::<f64>();
                data.psi0 - nu.ln()
            }
            _ => {
                let c = data.total_counts.as_ref().expect("binomial counts");
                constant += data.y.iter().zip(c).map(|(&y, &c)| ln_binomial(c as u64, y as u64)).sum::<f64>();
                0.0
            }
        };
        CountIntegrand { data, cols, prec, nu, shift, constant }
    }

    fn dim(&self) -> usize {
        self.cols.len()
    }

    fn trials(&self, n: usize) -> f64 {
        match self.data.likelihood {
            Likelihood::NegativeBinomial => self.data.y[n] + self.nu,
            _ => self.data.total_counts.as_ref().unwrap()[n],
        }
    }

    fn predictor(&self, beta: &[f64], n: usize) -> f64 {
        self.shift + self.cols.iter().zip(beta).map(|(c, b)| c[n] * b).sum::<f64>()
    }

    fn log_density(&self, beta: &[f64]) -> f64 {
        let mut s = self.constant;
        for n in 0..self.data.n() {
            let psi = self.predictor(beta, n);
            s += self.data.y[n] * psi - self.trials(n) * softplus(psi);
        }
        s - 0.5 * self.prec.iter().zip(beta).map(|(l, b)| l * b * b).sum::<f64>()
    }

    /// Gradient and negative Hessian (row-major).
    fn derivatives(&self, beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let mut g: Vec<f64> = self.prec.iter().zip(beta).map(|(l, b)| -l * b).collect();
        let mut h = vec![0.0; d * d];
        for r in 0..d {
            h[r * d + r] = self.prec[r];
        }
        for n in 0..self.data.n() {
            let psi = self.predictor(beta, n);
            let s = sigmoid(psi);
            let m = self.trials(n);
            let resid = self.data.y[n] - m * s;
            let w = m * s * (1.0 - s);
            for r in 0..d {
                g[r] += self.cols[r][n] * resid;
                for c in 0..d {
                    h[r * d + c] += w * self.cols[r][n] * self.cols[c][n];
                }
            }
        }
        (g, h)
    }

    fn mode(&self) -> Result<Vec<f64>> {
        let d = self.dim();
        let mut beta = vec![0.0; d];
        let mut f = self.log_density(&beta);
        for _ in 0..200 {
            let (g, h) = self.derivatives(&beta);
            let (step, _, _) = lu_solve(h, d, g)?;
            let mut scale = 1.0;
            loop {
                let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
                let ft = self.log_density(&trial);
                if ft >= f - 1e-12 * f.abs() || scale < 1e-10 {
                    beta = trial;
                    f = ft;
                    break;
                }
                scale *= 0.5;
            }
            if step.iter().map(|s| (scale * s).abs()).fold(0.0, f64::max) < 1e-11 {
                return Ok(beta);
            }
        }
        Err(Error::QuadratureNotConverged("mode search did not converge".into()))
    }
}

/// Lower Cholesky factor of a row-major SPD matrix.
fn cholesky(a: &[f64], d: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = a[i * d + j] - (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum::<f64>();
            if i == j {
                if !(s > 0.0) {
                    return Err(Error::Numerical("curvature matrix is not positive definite".into()));
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Ok(l)
}

/// Nodes and weights of the `n`-point Gauss-Hermite rule for `exp(-x^2)`.
fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let pim4 = PI.powf(-0.25);
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / (j as f64 + 1.0)).sqrt() * p2 - (j as f64 / (j as f64 + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Width of the Gaussian reference density relative to the Laplace
/// approximation; a value above one keeps the integrand ratio bounded.
const REFERENCE_SCALE: f64 = 1.5;
const QUADRATURE_ORDERS: [usize; 4] = [12, 24, 48, 96];

/// Log evidence of one count model, integrating the coefficients with a
/// product Gauss-Hermite rule centred at the posterior mode and whitened by
/// the curvature there. The order doubles until the evidence changes by less
/// than `rel_tol`.
pub fn count_log_evidence(
    data: &Dataset,
    active: &[usize],
    tau: f64,
    tau_bias: f64,
    nu: f64,
    rel_tol: f64,
) -> Result<f64> {
    let f = CountIntegrand::new(data, active, tau, tau_bias, nu);
    let d = f.dim();
    let mode = f.mode()?;
    let (_, h) = f.derivatives(&mode);
    let l = cholesky(&h, d)?;
    let f_mode = f.log_density(&mode);
    let log_jac = -(0..d).map(|i| l[i * d + i].ln()).sum::<f64>() + d as f64 * REFERENCE_SCALE.ln();
    let mut previous: Option<f64> = None;
    for &order in &QUADRATURE_ORDERS {
        let (nodes, weights) = gauss_hermite(order);
        let mut total = 0.0;
        let mut idx = vec![0usize; d];
        let mut u = vec![0.0; d];
        let mut beta = vec![0.0; d];
        loop {
            let mut logw = 0.0;
            for k in 0..d {
                let x = nodes[idx[k]];
                u[k] = REFERENCE_SCALE * std::f64::consts::SQRT_2 * x;
                logw += weights[idx[k]].ln() + x * x;
            }
            // beta = mode + L^{-T} u
            for r in (0..d).rev() {
                let s: f64 = (r + 1..d).map(|k| l[k * d + r] * beta[k]).sum();
                beta[r] = (u[r] - s) / l[r * d + r];
            }
            let point: Vec<f64> = mode.iter().zip(&beta).map(|(m, b)| m + b).collect();
            total += (logw + f.log_density(&point) - f_mode).exp();
            let mut k = 0;
            while k < d {
                idx[k] += 1;
                if idx[k] < order {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == d {
                break;
            }
        }
        let log_int = (d as f64 * 0.5) * 2f64.ln() + total.ln();
        let value = f_mode + log_jac + log_int;
        if let Some(prev) = previous {
            if (value - prev).abs() < rel_tol * value.abs().max(1.0) {
                return Ok(value);
            }
        }
        previous = Some(value);
    }
    Err(Error::QuadratureNotConverged(format!("model {active:?} did not stabilize by order {}", QUADRATURE_ORDERS[3])))
}

/// Exact count-model posterior over all `2^P` models with the dispersion held
/// at `nu` (ignored for binomial data).
pub fn quadrature_count(data: &Dataset, h: f64, tau: f64, tau_bias: f64, nu: f64, rel_tol: f64) -> Result<ExactPosterior> {
    if !data.likelihood.is_count() {
        return Err(Error::Config("quadrature applies to count likelihoods".into()));
    }
    check_h(h)?;
    let p = data.p();
    check_enumerable(p, MAX_QUADRATURE_P)?;
    let log_joint = (0..1u64 << p)
        .map(|mask| {
            let g = GammaState::from_mask(p, mask);
            Ok(count_log_evidence(data, g.active(), tau, tau_bias, nu, rel_tol)? + log_prior(g.size(), p, h))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ExactPosterior::from_log_joint(p, log_joint))
}

/// Largest violation `|f(x) K(x, y) - f(y) K(y, x)|` of detailed balance for
/// the subset sampler on the joint space of inclusion states and subsets, with
/// `f(gamma, S)` proportional to `p(gamma | Y) phi(gamma, S)`.
pub fn detailed_balance_check(
    data: &Dataset,
    size: usize,
    anchor: &[usize],
    h: f64,
    tau: f64,
    epsilon: f64,
) -> Result<f64> {
    let p = data.p();
    detailed_balance_check_with(data, size, anchor, h, tau, &|i, g: &GammaState, c| {
        let term = coordinate_term(Variant::Wtgs, c, g.get(i), epsilon, p);
        debug_assert!((term - 0.5 * eta(c, epsilon, p) / if g.get(i) { c } else { 1.0 - c }).abs() < 1e-12);
        term
    })
}

/// As [`detailed_balance_check`] with a caller-supplied unnormalized
/// selection mass `mass(i, gamma, conditional_pip)` before the subset factor.
pub fn detailed_balance_check_with(
    data: &Dataset,
    size: usize,
    anchor: &[usize],
    h: f64,
    tau: f64,
    mass: &dyn Fn(usize, &GammaState, f64) -> f64,
) -> Result<f64> {
    let p = data.p();
    check_enumerable(p, MAX_BALANCE_P)?;
    let a = anchor.len();
    if !(a < size && size <= p) || anchor.iter().any(|&j| j >= p) {
        return Err(Error::Config(format!("need anchor size {a} < subset size {size} <= {p}")));
    }
    let post = enumerate_linear(data, h, tau, None)?;
    let anchor_mask: u64 = anchor.iter().fold(0, |m, &j| m | 1 << j);
    let subsets: Vec<u64> =
        (0..1u64 << p).filter(|s| s.count_ones() as usize == size && s & anchor_mask == anchor_mask).collect();
    let n_sub = subsets.len();
    let n_states = (1usize << p) * n_sub;
    let state_index = |g: u64, s_pos: usize| g as usize * n_sub + s_pos;
    let subset_prob = |i: usize, s: u64| -> f64 {
        let forced = anchor_mask | 1 << i;
        if s & forced != forced {
            return 0.0;
        }
        let k = forced.count_ones() as u64;
        (-ln_binomial(p as u64 - k, size as u64 - k)).exp()
    };

    let mut f = vec![0.0; n_states];
    let mut kernel = vec![0.0; n_states * n_states];
    for g in 0..1u64 << p {
        let gamma = GammaState::from_mask(p, g);
        let cond = post.conditional_pips(g);
        for (s_pos, &s) in subsets.iter().enumerate() {
            let masses: Vec<(usize, f64)> = (0..p)
                .filter(|&i| s >> i & 1 == 1)
                .map(|i| (i, mass(i, &gamma, cond[i]) * u_ratio(anchor_mask >> i & 1 == 1, p, size, a)))
                .collect();
            let phi: f64 = masses.iter().map(|(_, m)| m).sum();
            let x = state_index(g, s_pos);
            f[x] = post.prob(g) * phi;
            for &(i, m) in &masses {
                let g_new = g ^ 1 << i;
                for (t_pos, &t) in subsets.iter().enumerate() {
                    let q = subset_prob(i, t);
                    if q > 0.0 {
                        kernel[x * n_states + state_index(g_new, t_pos)] += m / phi * q;
                    }
                }
            }
        }
    }
    let z: f64 = f.iter().sum();
    f.iter_mut().for_each(|v| *v /= z);
    let mut worst: f64 = 0.0;
    for x in 0..n_states {
        for y in 0..n_states {
            worst = worst.max((f[x] * kernel[x * n_states + y] - f[y] * kernel[y * n_states + x]).abs());
        }
    }
    Ok(worst)
}
