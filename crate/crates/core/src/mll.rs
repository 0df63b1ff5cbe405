//! Marginal likelihood of an inclusion state with the coefficients integrated
//! out, plus the rank-one add/drop updates used for conditional inclusion
//! probabilities.
//!
//! Both likelihood families reduce to the same three ingredients of the
//! active block `A = X_I^T W X_I + diag(prior precisions)`:
//! the quadratic form `Z_I^T A^{-1} Z_I`, `log det A`, and the summed log
//! prior precisions. The linear model combines them with an improper prior
//! on the noise variance; the Polya-Gamma augmented count models combine them
//! as a Gaussian integral.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, DVectorView};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{Dataset, GammaState, Likelihood};

/// Conditional inclusion probabilities are clamped to this distance from 0 and 1.
pub const PIP_CLAMP: f64 = 1e-12;

const PARALLEL_WORK: usize = 1 << 18;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EvidenceForm {
    /// Gaussian errors with unknown variance: `-(n/2) log(Y^T Y - quad)`.
    Gaussian { yty: f64, n: f64 },
    /// Polya-Gamma augmented counts; `offset` collects state-independent terms.
    Augmented { offset: f64 },
}

/// Pseudo-responses of the augmented model with the projected statistics
/// `Z_j = sum_n X_nj (kappa_n - omega_n c)`. The last entry of `z` belongs to
/// the intercept when one is present.
#[derive(Clone, Debug, PartialEq)]
pub struct KappaZ {
    pub kappa: Vec<f64>,
    pub z: Vec<f64>,
    pub offset_terms: f64,
}

/// Cached factorization of the active block of an inclusion state.
#[derive(Clone, Debug)]
pub struct ActiveFactorization {
    /// Active covariates in increasing order, followed by the intercept
    /// (index `p`) when the model has one.
    pub active: Vec<usize>,
    /// Lower Cholesky factor of the active block.
    pub chol_l: DMatrix<f64>,
    /// `L^{-1} Z_I`.
    pub z_tilde: DVector<f64>,
    /// `L^{-1} X_I^T W`, one row per active column. Empty on the Gram path.
    pub projector: DMatrix<f64>,
    /// Inverse of the active block.
    pub f_inv: DMatrix<f64>,
    /// `A^{-1} Z_I`: the conditional posterior mean of the active coefficients.
    pub fz: DVector<f64>,
    pub logdet: f64,
    pub quad: f64,
    pub sum_log_prec: f64,
    pub base_loglik: f64,
    /// Diagonal jitter that was needed to factorize the block.
    pub jitter: f64,
}

impl ActiveFactorization {
    pub fn dim(&self) -> usize {
        self.active.len()
    }

    fn position(&self, k: usize) -> Option<usize> {
        self.active.iter().position(|&j| j == k)
    }
}

/// Evaluates `log p(Y | gamma)` (linear) or `log p(Y | gamma, omega[, nu])`
/// (counts) for arbitrary inclusion states of one dataset.
#[derive(Clone, Debug)]
pub struct EvidenceModel<'a> {
    x: &'a DMatrix<f64>,
    n: usize,
    p: usize,
    tau: f64,
    bias_prec: Option<f64>,
    weights: Option<Vec<f64>>,
    adj: Vec<f64>,
    kappa: Vec<f64>,
    form: EvidenceForm,
    norm2: Vec<f64>,
    z: Vec<f64>,
    ready: Vec<bool>,
    gram: Option<Arc<DMatrix<f64>>>,
}

impl<'a> EvidenceModel<'a> {
    /// Linear model; `bias_prec` adds an all-ones column with that prior precision.
    pub fn linear(data: &'a Dataset, tau: f64, bias_prec: Option<f64>) -> Self {
        let yty = data.y.iter().map(|v| v * v).sum();
        let form = EvidenceForm::Gaussian { yty, n: data.n() as f64 };
        Self::build(data, tau, bias_prec, None, data.y.clone(), data.y.clone(), form)
    }

    /// Binomial model conditioned on Polya-Gamma weights `omega`.
    pub fn binomial(data: &'a Dataset, omega: Vec<f64>, tau: f64, tau_bias: f64) -> Result<Self> {
        let counts = data
            .total_counts
            .as_ref()
            .ok_or_else(|| Error::Domain("binomial evidence needs total counts".into()))?;
        check_weights(&omega, data.n())?;
        let kappa: Vec<f64> = data.y.iter().zip(counts).map(|(y, c)| y - 0.5 * c).collect();
        let form = EvidenceForm::Augmented { offset: 0.0 };
        Ok(Self::build(data, tau, Some(tau_bias), Some(omega), kappa.clone(), kappa, form))
    }

    /// Negative-binomial model with dispersion `nu`, conditioned on `omega`.
    pub fn negative_binomial(data: &'a Dataset, omega: Vec<f64>, nu: f64, tau: f64, tau_bias: f64) -> Result<Self> {
        check_weights(&omega, data.n())?;
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::Domain(format!("dispersion {nu} must be positive")));
        }
        let (kappa, adj, offset) = negbin_terms(data, &omega, nu);
        let form = EvidenceForm::Augmented { offset };
        Ok(Self::build(data, tau, Some(tau_bias), Some(omega), kappa, adj, form))
    }

    /// Evidence for any likelihood given the augmentation state. `omega` and
    /// `nu` are ignored by the linear model.
    pub fn for_dataset(
        data: &'a Dataset,
        omega: Option<Vec<f64>>,
        nu: f64,
        tau: f64,
        tau_bias: f64,
        linear_bias: bool,
    ) -> Result<Self> {
        match data.likelihood {
            Likelihood::Linear => Ok(Self::linear(data, tau, linear_bias.then_some(tau_bias))),
            Likelihood::Binomial => {
                let omega = omega.ok_or_else(|| Error::Domain("binomial evidence needs weights".into()))?;
                Self::binomial(data, omega, tau, tau_bias)
            }
            Likelihood::NegativeBinomial => {
                let omega = omega.ok_or_else(|| Error::Domain("negative-binomial evidence needs weights".into()))?;
                Self::negative_binomial(data, omega, nu, tau, tau_bias)
            }
        }
    }

    fn build(
        data: &'a Dataset,
        tau: f64,
        bias_prec: Option<f64>,
        weights: Option<Vec<f64>>,
        kappa: Vec<f64>,
        adj: Vec<f64>,
        form: EvidenceForm,
    ) -> Self {
        let p = data.p();
        EvidenceModel {
            x: &data.x,
            n: data.n(),
            p,
            tau,
            bias_prec,
            weights,
            adj,
            kappa,
            form,
            norm2: vec![0.0; p + 1],
            z: vec![0.0; p + 1],
            ready: vec![false; p + 1],
            gram: None,
        }
    }

    /// Use a precomputed `X^T X` (see [`gram_matrix`]) for the linear model.
    pub fn with_gram(mut self, gram: Arc<DMatrix<f64>>) -> Result<Self> {
        if self.weights.is_some() {
            return Err(Error::Config("a fixed Gram matrix only applies to the linear model".into()));
        }
        let dim = self.p + usize::from(self.bias_prec.is_some());
        if gram.nrows() != dim || gram.ncols() != dim {
            return Err(Error::ShapeMismatch(format!("Gram matrix is {}x{}, expected {dim}", gram.nrows(), gram.ncols())));
        }
        self.gram = Some(gram);
        Ok(self)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn form(&self) -> EvidenceForm {
        self.form
    }

    pub fn has_bias(&self) -> bool {
        self.bias_prec.is_some()
    }

    pub fn omega(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Pseudo-responses and the projected statistics of every column.
    pub fn kappa_z(&mut self) -> KappaZ {
        let cols: Vec<usize> = self.columns().collect();
        self.prepare(cols.iter().copied());
        let z = cols.iter().map(|&j| self.z[j]).collect();
        let offset_terms = match self.form {
            EvidenceForm::Augmented { offset } => offset,
            EvidenceForm::Gaussian { .. } => 0.0,
        };
        KappaZ { kappa: self.kappa.clone(), z, offset_terms }
    }

    fn columns(&self) -> impl Iterator<Item = usize> {
        let bias = self.bias_prec.map(|_| self.p);
        (0..self.p).chain(bias)
    }

    fn col(&self, j: usize) -> Option<&[f64]> {
        (j < self.p).then(|| &self.x.as_slice()[j * self.n..(j + 1) * self.n])
    }

    fn prec(&self, j: usize) -> f64 {
        if j == self.p {
            self.bias_prec.expect("intercept precision")
        } else {
            self.tau
        }
    }

    /// Fill the per-column caches (weighted squared norm and `Z_j`).
    pub fn prepare(&mut self, cols: impl IntoIterator<Item = usize>) {
        for j in cols {
            if self.ready[j] {
                continue;
            }
            let (norm2, z) = match (self.col(j), &self.weights) {
                (Some(c), Some(w)) => c.iter().zip(w).zip(&self.adj).fold((0.0, 0.0), |(s, t), ((x, w), a)| {
                    (s + w * x * x, t + x * a)
                }),
                (Some(c), None) => c.iter().zip(&self.adj).fold((0.0, 0.0), |(s, t), (x, a)| (s + x * x, t + x * a)),
                (None, Some(w)) => (w.iter().sum(), self.adj.iter().sum()),
                (None, None) => (self.n as f64, self.adj.iter().sum()),
            };
            self.norm2[j] = norm2;
            self.z[j] = z;
            self.ready[j] = true;
        }
    }

    fn assemble(&self, quad: f64, logdet: f64, sum_log_prec: f64) -> Result<f64> {
        match self.form {
            EvidenceForm::Gaussian { yty, n } => {
                let resid = yty - quad;
                if !(resid > 1e-14 * yty.max(f64::MIN_POSITIVE)) {
                    return Err(Error::Numerical(format!("residual sum of squares {resid} is not positive")));
                }
                Ok(0.5 * sum_log_prec - 0.5 * logdet - 0.5 * n * resid.ln())
            }
            EvidenceForm::Augmented { offset } => Ok(offset + 0.5 * quad - 0.5 * logdet + 0.5 * sum_log_prec),
        }
    }

    fn active_columns(&self, gamma_active: &[usize]) -> Vec<usize> {
        let mut cols = gamma_active.to_vec();
        if self.bias_prec.is_some() {
            cols.push(self.p);
        }
        cols
    }

    /// Active block `X_I^T W X_I + diag(prec)` and `W X_I`.
    fn active_block(&self, cols: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
        let d = cols.len();
        let mut wx = DMatrix::zeros(self.n, d);
        for (r, &j) in cols.iter().enumerate() {
            let mut dst = wx.column_mut(r);
            match self.col(j) {
                Some(c) => dst.copy_from_slice(c),
                None => dst.fill(1.0),
            }
        }
        if let Some(gram) = &self.gram {
            let mut a = DMatrix::from_fn(d, d, |r, s| gram[(cols[r], cols[s])]);
            for (r, &j) in cols.iter().enumerate() {
                a[(r, r)] += self.prec(j);
            }
            return (a, wx);
        }
        let xi = wx.clone();
        if let Some(w) = &self.weights {
            for mut c in wx.column_iter_mut() {
                for (v, w) in c.iter_mut().zip(w) {
                    *v *= w;
                }
            }
        }
        let mut a = xi.tr_mul(&wx);
        for (r, &j) in cols.iter().enumerate() {
            a[(r, r)] += self.prec(j);
        }
        (a, wx)
    }

    /// Factorize the active block of the state whose active covariates are
    /// `gamma_active` (sorted).
    pub fn factorize(&mut self, gamma_active: &[usize]) -> Result<ActiveFactorization> {
        let cols = self.active_columns(gamma_active);
        self.prepare(cols.iter().copied());
        let d = cols.len();
        let sum_log_prec: f64 = cols.iter().map(|&j| self.prec(j).ln()).sum();
        if d == 0 {
            let base_loglik = self.assemble(0.0, 0.0, 0.0)?;
            return Ok(ActiveFactorization {
                active: cols,
                chol_l: DMatrix::zeros(0, 0),
                z_tilde: DVector::zeros(0),
                projector: DMatrix::zeros(0, self.n),
                f_inv: DMatrix::zeros(0, 0),
                fz: DVector::zeros(0),
                logdet: 0.0,
                quad: 0.0,
                sum_log_prec,
                base_loglik,
                jitter: 0.0,
            });
        }
        let (a, wx) = self.active_block(&cols);
        let (l, jitter) = cholesky_jittered(a)?;
        let z_i = DVector::from_iterator(d, cols.iter().map(|&j| self.z[j]));
        let z_tilde = solve_lower(&l, &z_i)?;
        let projector = if self.gram.is_some() {
            DMatrix::zeros(0, self.n)
        } else {
            l.solve_lower_triangular(&wx.transpose())
                .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?
        };
        let l_inv = l
            .solve_lower_triangular(&DMatrix::identity(d, d))
            .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
        let f_inv = l_inv.tr_mul(&l_inv);
        let fz = l
            .tr_solve_lower_triangular(&z_tilde)
            .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
        let logdet = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let quad = z_tilde.norm_squared();
        let base_loglik = self.assemble(quad, logdet, sum_log_prec)?;
        Ok(ActiveFactorization {
            active: cols,
            chol_l: l,
            z_tilde,
            projector,
            f_inv,
            fz,
            logdet,
            quad,
            sum_log_prec,
            base_loglik,
            jitter,
        })
    }

    /// Log evidence of the state with covariate `k` added to `fact`.
    /// Requires the caches of `k` (see [`EvidenceModel::prepare`]).
    pub fn loglik_add(&self, fact: &ActiveFactorization, k: usize) -> Result<f64> {
        debug_assert!(self.ready[k]);
        let d = fact.dim();
        let prec = self.prec(k);
        let (vz, vv) = if d == 0 {
            (0.0, 0.0)
        } else {
            let v = match &self.gram {
                Some(gram) => {
                    let g = DVector::from_iterator(d, fact.active.iter().map(|&j| gram[(j, k)]));
                    solve_lower(&fact.chol_l, &g)?
                }
                None => {
                    let xk = self.col(k).expect("covariate column");
                    &fact.projector * DVectorView::from_slice(xk, self.n)
                }
            };
            (v.dot(&fact.z_tilde), v.norm_squared())
        };
        let schur = self.norm2[k] + prec - vv;
        if !(schur > 1e-13 * (self.norm2[k] + prec)) {
            return Err(Error::Numerical(format!("Schur complement {schur} for covariate {k} is not positive")));
        }
        let w = (vz - self.z[k]) / schur.sqrt();
        self.assemble(fact.quad + w * w, fact.logdet + schur.ln(), fact.sum_log_prec + prec.ln())
    }

    /// Log evidence of the state with active covariate `k` removed from `fact`.
    pub fn loglik_drop(&self, fact: &ActiveFactorization, k: usize) -> Result<f64> {
        let pos = fact
            .position(k)
            .filter(|_| k < self.p)
            .ok_or_else(|| Error::Domain(format!("covariate {k} is not active")))?;
        let fkk = fact.f_inv[(pos, pos)];
        if !(fkk > 0.0) {
            return Err(Error::Numerical(format!("inverse diagonal {fkk} for covariate {k} is not positive")));
        }
        let fzk = fact.fz[pos];
        self.assemble(fact.quad - fzk * fzk / fkk, fact.logdet + fkk.ln(), fact.sum_log_prec - self.prec(k).ln())
    }

    /// Log evidence of the state with active covariates `gamma_active`,
    /// computed from a fresh factorization of the full active block.
    pub fn marginal_loglik_dense(&mut self, gamma_active: &[usize]) -> Result<f64> {
        let mut sorted = gamma_active.to_vec();
        sorted.sort_unstable();
        let cols = self.active_columns(&sorted);
        self.prepare(cols.iter().copied());
        let sum_log_prec: f64 = cols.iter().map(|&j| self.prec(j).ln()).sum();
        if cols.is_empty() {
            return self.assemble(0.0, 0.0, sum_log_prec);
        }
        let (a, _) = self.active_block(&cols);
        let (l, _) = cholesky_jittered(a)?;
        let z_i = DVector::from_iterator(cols.len(), cols.iter().map(|&j| self.z[j]));
        let half = solve_lower(&l, &z_i)?;
        let logdet = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        self.assemble(half.norm_squared(), logdet, sum_log_prec)
    }

    /// `log p(gamma_i = 1 | rest) - log p(gamma_i = 0 | rest)` without the prior
    /// odds, for each covariate in `indices`. `fact` must factorize `gamma`.
    pub fn log_bayes_factors(
        &mut self,
        fact: &ActiveFactorization,
        gamma: &GammaState,
        indices: &[usize],
    ) -> Result<Vec<f64>> {
        self.prepare(indices.iter().copied());
        let this = &*self;
        let one = |&k: &usize| -> Result<f64> {
            let incremental = if gamma.get(k) {
                this.loglik_drop(fact, k).map(|l0| fact.base_loglik - l0)
            } else {
                this.loglik_add(fact, k).map(|l1| l1 - fact.base_loglik)
            };
            incremental.or_else(|_| this.dense_log_bayes_factor(gamma, k))
        };
        let work = indices.len() * (fact.dim() + 1) * self.n;
        if work >= PARALLEL_WORK {
            indices.par_iter().map(one).collect()
        } else {
            indices.iter().map(one).collect()
        }
    }

    fn dense_log_bayes_factor(&self, gamma: &GammaState, k: usize) -> Result<f64> {
        let mut with = gamma.active().to_vec();
        if !gamma.get(k) {
            with.push(k);
            with.sort_unstable();
        }
        let without: Vec<usize> = with.iter().copied().filter(|&j| j != k).collect();
        let mut scratch = self.clone();
        Ok(scratch.marginal_loglik_dense(&with)? - scratch.marginal_loglik_dense(&without)?)
    }

    /// Conditional inclusion probabilities `p(gamma_i = 1 | gamma_-i, Y)` for
    /// each covariate in `indices` under a fixed prior inclusion probability `h`.
    pub fn conditional_pips(
        &mut self,
        fact: &ActiveFactorization,
        gamma: &GammaState,
        indices: &[usize],
        h: f64,
    ) -> Result<Vec<f64>> {
        let lh = logit(h);
        Ok(self.log_bayes_factors(fact, gamma, indices)?.into_iter().map(|b| pip_from_log_odds(b + lh)).collect())
    }

    /// Linear predictor `X_I beta_hat` at the conditional posterior mean.
    pub fn fitted(&self, fact: &ActiveFactorization) -> Vec<f64> {
        let mut psi = vec![0.0; self.n];
        for (r, &j) in fact.active.iter().enumerate() {
            let b = fact.fz[r];
            match self.col(j) {
                Some(c) => psi.iter_mut().zip(c).for_each(|(s, x)| *s += b * x),
                None => psi.iter_mut().for_each(|s| *s += b),
            }
        }
        psi
    }

    /// Posterior variance of each active coefficient given the state. The
    /// linear model uses the posterior mean of the noise variance.
    pub fn coefficient_variances(&self, fact: &ActiveFactorization) -> Vec<f64> {
        let scale = match self.form {
            EvidenceForm::Gaussian { yty, n } if n > 2.0 => (yty - fact.quad) / (n - 2.0),
            EvidenceForm::Gaussian { .. } => f64::NAN,
            EvidenceForm::Augmented { .. } => 1.0,
        };
        (0..fact.dim()).map(|r| scale * fact.f_inv[(r, r)]).collect()
    }
}

fn check_weights(omega: &[f64], n: usize) -> Result<()> {
    if omega.len() != n {
        return Err(Error::ShapeMismatch(format!("{} weights for {n} observations", omega.len())));
    }
    if let Some(w) = omega.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(Error::Domain(format!("Polya-Gamma weight {w} must be positive")));
    }
    Ok(())
}

/// Pseudo-responses, adjusted responses and the state-independent offset of
/// the negative-binomial evidence.
pub fn negbin_terms(data: &Dataset, omega: &[f64], nu: f64) -> (Vec<f64>, Vec<f64>, f64) {
    let c = data.psi0 - nu.ln();
    let lg_nu = ln_gamma(nu);
    let mut offset = 0.0;
    let mut kappa = Vec::with_capacity(data.n());
    let mut adj = Vec::with_capacity(data.n());
    for (&y, &w) in data.y.iter().zip(omega) {
        let k = 0.5 * (y - nu);
        offset += ln_gamma(y + nu) - lg_nu - nu * std::f64::consts::LN_2 + k * c - 0.5 * w * c * c;
        kappa.push(k);
        adj.push(k - w * c);
    }
    (kappa, adj, offset)
}

/// `X^T X` with the all-ones column appended when `bias` is set.
pub fn gram_matrix(data: &Dataset, bias: bool) -> DMatrix<f64> {
    let p = data.p();
    if !bias {
        return data.x.tr_mul(&data.x);
    }
    let mut xb = DMatrix::from_element(data.n(), p + 1, 1.0);
    xb.columns_mut(0, p).copy_from(&data.x);
    xb.tr_mul(&xb)
}

/// Lower Cholesky factor, retrying with diagonal jitter `1e-10 * trace / dim`
/// escalated tenfold up to three times.
pub fn cholesky_jittered(a: DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let dim = a.nrows();
    if let Some(c) = a.clone().cholesky() {
        return Ok((c.unpack(), 0.0));
    }
    let mut jitter = 1e-10 * a.trace() / dim as f64;
    for _ in 0..3 {
        let mut aj = a.clone();
        for i in 0..dim {
            aj[(i, i)] += jitter;
        }
        if let Some(c) = aj.cholesky() {
            return Ok((c.unpack(), jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::Numerical(format!("{dim}x{dim} block is not positive definite after jitter")))
}

fn solve_lower(l: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    l.solve_lower_triangular(b).ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))
}

pub fn logit(h: f64) -> f64 {
    (h / (1.0 - h)).ln()
}

/// Logistic map clamped to `[PIP_CLAMP, 1 - PIP_CLAMP]`.
pub fn pip_from_log_odds(x: f64) -> f64 {
    let p = if x >= 0.0 { 1.0 / (1.0 + (-x).exp()) } else { let e = x.exp(); e / (1.0 + e) };
    p.clamp(PIP_CLAMP, 1.0 - PIP_CLAMP)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_linear(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal));
        let y = (0..n).map(|i| x[(i, 0)] + rng.sample::<f64, _>(StandardNormal)).collect();
        Dataset::linear(x, y).unwrap()
    }

    #[test]
    fn empty_linear_model_is_log_yty() {
        let d = random_linear(20, 3, 1);
        let yty: f64 = d.y.iter().map(|v| v * v).sum();
        let mut m = EvidenceModel::linear(&d, 0.5, None);
        let f = m.factorize(&[]).unwrap();
        assert!((f.base_loglik + 10.0 * yty.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_covariate_closed_form() {
        let d = random_linear(15, 2, 2);
        let tau: f64 = 0.3;
        let x0 = d.column(0);
        let xx: f64 = x0.iter().map(|v| v * v).sum();
        let xy: f64 = x0.iter().zip(&d.y).map(|(a, b)| a * b).sum();
        let yty: f64 = d.y.iter().map(|v| v * v).sum();
        let expected = 0.5 * tau.ln() - 0.5 * (xx + tau).ln() - 7.5 * (yty - xy * xy / (xx + tau)).ln();
        let mut m = EvidenceModel::linear(&d, tau, None);
        let f = m.factorize(&[0]).unwrap();
        assert!((f.base_loglik - expected).abs() < 1e-12);
        assert!((m.marginal_loglik_dense(&[0]).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn add_and_drop_agree_with_dense() {
        let d = random_linear(30, 6, 3);
        for bias in [None, Some(0.7)] {
            let mut m = EvidenceModel::linear(&d, 0.2, bias);
            let g = GammaState::from_active(6, &[1, 4]).unwrap();
            let f = m.factorize(g.active()).unwrap();
            m.prepare(0..6);
            let add = m.loglik_add(&f, 2).unwrap();
            let drop = m.loglik_drop(&f, 4).unwrap();
            assert!((add - m.marginal_loglik_dense(&[1, 2, 4]).unwrap()).abs() < 1e-10);
            assert!((drop - m.marginal_loglik_dense(&[1]).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn gram_path_matches_streaming_path() {
        let d = random_linear(25, 5, 4);
        let g = GammaState::from_active(5, &[0, 3]).unwrap();
        let all: Vec<usize> = (0..5).collect();
        let mut plain = EvidenceModel::linear(&d, 0.1, Some(0.1));
        let fp = plain.factorize(g.active()).unwrap();
        let a = plain.log_bayes_factors(&fp, &g, &all).unwrap();
        let mut gram = EvidenceModel::linear(&d, 0.1, Some(0.1)).with_gram(Arc::new(gram_matrix(&d, true))).unwrap();
        let fg = gram.factorize(g.active()).unwrap();
        let b = gram.log_bayes_factors(&fg, &g, &all).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn drop_of_inactive_covariate_is_an_error() {
        let d = random_linear(10, 3, 5);
        let mut m = EvidenceModel::linear(&d, 0.1, None);
        let f = m.factorize(&[0]).unwrap();
        assert!(matches!(m.loglik_drop(&f, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn jitter_rescues_a_singular_block() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (l, jitter) = cholesky_jittered(a).unwrap();
        assert!(jitter > 0.0);
        assert!(l[(1, 1)] > 0.0);
    }

    #[test]
    fn clamp_bounds_conditional_probabilities() {
        assert_eq!(pip_from_log_odds(1e6), 1.0 - PIP_CLAMP);
        assert_eq!(pip_from_log_odds(-1e6), PIP_CLAMP);
        assert!((pip_from_log_odds(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn binomial_two_covariate_hand_inverse() {
        // N = 3, P = 2, gamma = (1, 0), unit weights: the active block is the
        // 2x2 matrix over (x_1, intercept), inverted by hand.
        let x = DMatrix::from_row_slice(3, 2, &[0.5, -1.0, -0.2, 0.3, 1.1, 0.8]);
        let y = vec![1.0, 0.0, 2.0];
        let c = vec![2.0, 1.0, 3.0];
        let d = Dataset::binomial(x, y.clone(), c.clone()).unwrap();
        let (tau, tb) = (0.4, 0.9);
        let kappa: Vec<f64> = y.iter().zip(&c).map(|(a, b)| a - b / 2.0).collect();
        let x1 = [0.5, -0.2, 1.1];
        let a11 = x1.iter().map(|v| v * v).sum::<f64>() + tau;
        let a12: f64 = x1.iter().sum();
        let a22 = 3.0 + tb;
        let z1: f64 = x1.iter().zip(&kappa).map(|(a, b)| a * b).sum();
        let z2: f64 = kappa.iter().sum();
        let det = a11 * a22 - a12 * a12;
        let quad = (a22 * z1 * z1 - 2.0 * a12 * z1 * z2 + a11 * z2 * z2) / det;
        let expected = 0.5 * quad - 0.5 * det.ln() + 0.5 * (tau * tb).ln();
        let mut m = EvidenceModel::binomial(&d, vec![1.0; 3], tau, tb).unwrap();
        let f = m.factorize(&[0]).unwrap();
        assert!((f.base_loglik - expected).abs() < 1e-12);
    }

    #[test]
    fn negbin_kappa_z_matches_term_by_term() {
        let x = DMatrix::from_row_slice(3, 1, &[0.2, -0.4, 1.0]);
        let y = vec![0.0, 3.0, 7.0];
        let d = Dataset::negative_binomial(x, y.clone(), Some(0.8)).unwrap();
        let omega = vec![0.5, 1.5, 2.0];
        let nu = 2.5;
        let mut m = EvidenceModel::negative_binomial(&d, omega.clone(), nu, 0.1, 0.1).unwrap();
        let kz = m.kappa_z();
        let c = 0.8 - nu.ln();
        let xs = [0.2, -0.4, 1.0];
        let mut z0 = 0.0;
        let mut zb = 0.0;
        let mut off = 0.0;
        for n in 0..3 {
            let k = (y[n] - nu) / 2.0;
            assert!((kz.kappa[n] - k).abs() < 1e-15);
            z0 += xs[n] * (k - omega[n] * c);
            zb += k - omega[n] * c;
            off += ln_gamma(y[n] + nu) - ln_gamma(nu) - nu * 2f64.ln() + k * c - 0.5 * omega[n] * c * c;
        }
        assert!((kz.z[0] - z0).abs() < 1e-12);
        assert!((kz.z[1] - zb).abs() < 1e-12);
        assert!((kz.offset_terms - off).abs() < 1e-10);
    }
}
