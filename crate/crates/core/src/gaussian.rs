//! Gaussian networks, normal-Wishart priors and the BGe subset likelihood.
//!
//! # Coordinates
//!
//! [`GaussianNetParams`] stores intercepts, conditional variances and
//! regression coefficients in *position* coordinates: position `i` is the
//! variable `order[i]`, and `coefficients[(j, i)]` is `b_ji` for `j < i`.
//! Precision matrices, means and priors are in *variable* coordinates.
//!
//! # Marginal likelihood
//!
//! For a subset `X` with `l` variables and `m` cases,
//!
//! ```text
//! ln p(D^X) = −(l m / 2) ln π + (l / 2) ln(N'_μ / (N'_μ + m))
//!           + Σ_{i=1..l} [ln Γ((α + m + 1 − i)/2) − ln Γ((α + 1 − i)/2)]
//!           + (α / 2) ln|T₀^X| − ((α + m) / 2) ln|T_m^X|
//! ```
//!
//! with `α = N'_T`. Note the **positive** exponent on `|T₀^X|`; the opposite
//! sign does not integrate the normal-Wishart prior correctly, which the 1-D
//! quadrature acceptance check confirms. `T_m` uses the unnormalized scatter
//! matrix.
//!
//! [`SubsetDof::Marginalized`] replaces `α` with `N'_T − n + l`, which is the
//! exact marginal of the `n`-dimensional prior on `X`. The default keeps
//! `N'_T` for every subset.
//!
//! Scores are not scale invariant and data are never standardized here.

use nalgebra::{DMatrix, DVector};

use crate::dataset::{gaussian_stats, Database, GaussianStats};
use crate::error::{Error, Result};
use crate::graph::{Domain, NetworkStructure};
use crate::numeric::{cholesky, inverse_spd, ln_det_spd, ln_gamma, submatrix};
use crate::scoring::SubsetEvaluator;

/// Variances below this are rejected.
pub const MIN_VARIANCE: f64 = 1e-300;

const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Per-variable regression form of a multivariate normal.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNetParams {
    /// `order[i]` is the variable at position `i`.
    pub order: Vec<usize>,
    /// `m_i`: mean of position `i` when all its parents are zero.
    pub intercepts: DVector<f64>,
    /// `v_i`: conditional variance of position `i`.
    pub variances: DVector<f64>,
    /// `b_ji` at `(j, i)`, zero on and below the diagonal.
    pub coefficients: DMatrix<f64>,
}

impl GaussianNetParams {
    pub fn new(
        order: Vec<usize>,
        intercepts: DVector<f64>,
        variances: DVector<f64>,
        coefficients: DMatrix<f64>,
    ) -> Result<Self> {
        let n = order.len();
        for len in [intercepts.len(), variances.len(), coefficients.nrows(), coefficients.ncols()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: len,
                });
            }
        }
        let mut seen = vec![false; n];
        for &v in &order {
            if v >= n || std::mem::replace(&mut seen[v], true) {
                return Err(Error::InvalidPrior(format!(
                    "ordering {order:?} is not a permutation"
                )));
            }
        }
        check_variances(variances.as_slice())?;
        for i in 0..n {
            for j in i..n {
                if coefficients[(j, i)] != 0.0 {
                    return Err(Error::InvalidPrior(format!(
                        "coefficient at ({j}, {i}) does not point forward in the ordering"
                    )));
                }
            }
        }
        Ok(Self {
            order,
            intercepts,
            variances,
            coefficients,
        })
    }

    /// Parameters attached to a structure: `b_ji` may be non-zero only for arcs.
    ///
    /// `intercepts`, `variances` are per variable; `arcs` lists
    /// `(parent, child, coefficient)`.
    pub fn for_structure(
        s: &NetworkStructure,
        intercepts: &[f64],
        variances: &[f64],
        arcs: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let n = s.len();
        if intercepts.len() != n || variances.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: intercepts.len().min(variances.len()),
            });
        }
        let order = s.topological_order()?;
        let mut pos = vec![0; n];
        for (p, &v) in order.iter().enumerate() {
            pos[v] = p;
        }
        let mut b = DMatrix::zeros(n, n);
        for &(p, c, coef) in arcs {
            if p >= n || c >= n || !s.has_edge(p, c) {
                return Err(Error::InvalidPrior(format!(
                    "coefficient given for missing arc {p} -> {c}"
                )));
            }
            b[(pos[p], pos[c])] = coef;
        }
        Self::new(
            order.clone(),
            DVector::from_iterator(n, order.iter().map(|&v| intercepts[v])),
            DVector::from_iterator(n, order.iter().map(|&v| variances[v])),
            b,
        )
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Unconditional means in variable coordinates.
    pub fn means(&self) -> DVector<f64> {
        let mu_pos = m_to_mu(&self.intercepts, &self.coefficients);
        to_variable_coords(&self.order, &mu_pos)
    }

    /// Covariance matrix in variable coordinates.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        inverse_spd(&params_to_precision(self)?)
    }
}

fn check_variances(v: &[f64]) -> Result<()> {
    match v.iter().find(|&&x| !(x >= MIN_VARIANCE && x.is_finite())) {
        Some(&bad) => Err(Error::NonPositiveVariance(bad)),
        None => Ok(()),
    }
}

fn to_variable_coords(order: &[usize], pos_vec: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(order.len());
    for (p, &v) in order.iter().enumerate() {
        out[v] = pos_vec[p];
    }
    out
}

/// Precision matrix of a Gaussian network, built by the recursion
///
/// ```text
/// W(i+1) = [ W(i) + b bᵀ/v   −b/v ]
///          [ −bᵀ/v            1/v ]
/// ```
///
/// from `W(1) = 1/v₁`, with `b = (b_1,i+1 … b_i,i+1)` and `v = v_{i+1}`.
pub fn params_to_precision(p: &GaussianNetParams) -> Result<DMatrix<f64>> {
    check_variances(p.variances.as_slice())?;
    let w = precision_in_positions(p.variances.as_slice(), &p.coefficients);
    let n = p.len();
    let mut out = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            out[(p.order[a], p.order[b])] = w[(a, b)];
        }
    }
    Ok(out)
}

pub(crate) fn precision_in_positions(v: &[f64], b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = v.len();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        let vi = v[i];
        for r in 0..i {
            for c in 0..i {
                w[(r, c)] += b[(r, i)] * b[(c, i)] / vi;
            }
            w[(r, i)] = -b[(r, i)] / vi;
            w[(i, r)] = -b[(r, i)] / vi;
        }
        w[(i, i)] = 1.0 / vi;
    }
    w
}

/// Inverts the recursion: reads `1/v` and `−b/v` from the last row of each
/// leading block, then peels off `b bᵀ/v`. Intercepts are returned as zero.
pub fn precision_to_params(w: &DMatrix<f64>, order: &[usize]) -> Result<GaussianNetParams> {
    let n = order.len();
    if w.nrows() != n || w.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: w.nrows(),
        });
    }
    if (w - w.transpose()).amax() > SYMMETRY_TOLERANCE * w.amax().max(1.0) {
        return Err(Error::InvalidPrior("precision matrix is not symmetric".into()));
    }
    cholesky(w)?;
    let mut a = DMatrix::from_fn(n, n, |r, c| w[(order[r], order[c])]);
    let mut v = DVector::zeros(n);
    let mut b = DMatrix::zeros(n, n);
    for i in (0..n).rev() {
        let vi = 1.0 / a[(i, i)];
        v[i] = vi;
        for r in 0..i {
            b[(r, i)] = -a[(r, i)] * vi;
        }
        for r in 0..i {
            for c in 0..i {
                a[(r, c)] -= b[(r, i)] * b[(c, i)] / vi;
            }
        }
    }
    GaussianNetParams::new(order.to_vec(), DVector::zeros(n), v, b)
}

/// `m_i = μ_i − Σ_{j<i} b_ji μ_j` (position coordinates).
pub fn mu_to_m(mu: &DVector<f64>, b: &DMatrix<f64>) -> DVector<f64> {
    let n = mu.len();
    DVector::from_fn(n, |i, _| {
        mu[i] - (0..i).map(|j| b[(j, i)] * mu[j]).sum::<f64>()
    })
}

/// Inverse of [`mu_to_m`]: forward substitution through the unit-triangular map.
pub fn m_to_mu(m: &DVector<f64>, b: &DMatrix<f64>) -> DVector<f64> {
    let n = m.len();
    let mut mu = DVector::zeros(n);
    for i in 0..n {
        mu[i] = m[i] + (0..i).map(|j| b[(j, i)] * mu[j]).sum::<f64>();
    }
    mu
}

/// `|∂W / ∂(v, B)| = Π_i v_i^{−(i+1)}` with positions counted from 1.
pub fn jacobian_vb(v: &[f64]) -> Result<f64> {
    Ok(ln_jacobian_vb(v)?.exp())
}

pub fn ln_jacobian_vb(v: &[f64]) -> Result<f64> {
    check_variances(v)?;
    Ok(v
        .iter()
        .enumerate()
        .map(|(i, vi)| -((i + 2) as f64) * vi.ln())
        .sum())
}

/// Normal-Wishart prior on `(μ, W)`: `μ | W ~ N(μ₀, (N'_μ W)⁻¹)` and
/// `W ~ Wishart(N'_T, T₀)` with density `∝ |W|^{(N'_T−n−1)/2} exp(−tr(T₀W)/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalWishartPriorSpec {
    pub mu0: DVector<f64>,
    pub n_mu: f64,
    pub t0: DMatrix<f64>,
    pub n_t: f64,
}

impl NormalWishartPriorSpec {
    pub fn new(mu0: DVector<f64>, n_mu: f64, t0: DMatrix<f64>, n_t: f64) -> Result<Self> {
        let n = mu0.len();
        if t0.nrows() != n || t0.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: t0.nrows(),
            });
        }
        if !(n_mu > 0.0 && n_mu.is_finite()) {
            return Err(Error::InvalidPrior(format!("N'_mu must be positive, got {n_mu}")));
        }
        if !(n_t > n as f64 - 1.0 && n_t.is_finite()) {
            return Err(Error::InvalidPrior(format!(
                "N'_T must exceed n - 1 = {}, got {n_t}",
                n as f64 - 1.0
            )));
        }
        if mu0.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidPrior("prior mean must be finite".into()));
        }
        if (&t0 - t0.transpose()).amax() > SYMMETRY_TOLERANCE * t0.amax().max(1.0) {
            return Err(Error::InvalidPrior("T0 is not symmetric".into()));
        }
        cholesky(&t0)?;
        Ok(Self { mu0, n_mu, t0, n_t })
    }

    /// Independent standard normals as the prior network, `N'_μ = 1`,
    /// `N'_T = n + 2`.
    pub fn default_for(n: usize) -> Self {
        let n_t = n as f64 + 2.0;
        Self::new(
            DVector::zeros(n),
            1.0,
            DMatrix::identity(n, n) * n_t,
            n_t,
        )
        .expect("default prior is valid")
    }

    pub fn dim(&self) -> usize {
        self.mu0.len()
    }

    /// `μ₀^X`, `T₀^X` with unchanged equivalent sample sizes.
    pub fn restrict(&self, idx: &[usize]) -> Self {
        Self {
            mu0: DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.mu0[i])),
            n_mu: self.n_mu,
            t0: submatrix(&self.t0, idx),
            n_t: self.n_t,
        }
    }
}

/// Parameters of the posterior normal-Wishart distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorNormalWishart {
    pub mu: DVector<f64>,
    pub n_mu: f64,
    pub t: DMatrix<f64>,
    pub n_t: f64,
}

impl PosteriorNormalWishart {
    /// The posterior as a prior for further updates.
    pub fn as_prior(&self) -> NormalWishartPriorSpec {
        NormalWishartPriorSpec {
            mu0: self.mu.clone(),
            n_mu: self.n_mu,
            t0: self.t.clone(),
            n_t: self.n_t,
        }
    }
}

/// `T_m = T₀ + S_m + (N'_μ m / (N'_μ + m)) (μ₀ − x̄)(μ₀ − x̄)'`, entry by entry.
fn posterior_precision(prior: &NormalWishartPriorSpec, stats: &GaussianStats) -> DMatrix<f64> {
    let n = prior.dim();
    if stats.m == 0 {
        return prior.t0.clone();
    }
    let m = stats.m as f64;
    let k = prior.n_mu * m / (prior.n_mu + m);
    let d: Vec<f64> = (0..n).map(|i| prior.mu0[i] - stats.mean[i]).collect();
    DMatrix::from_fn(n, n, |i, j| prior.t0[(i, j)] + stats.scatter[(i, j)] + k * (d[i] * d[j]))
}

/// Conjugate update of a normal-Wishart prior with sufficient statistics.
pub fn posterior_update(
    prior: &NormalWishartPriorSpec,
    stats: &GaussianStats,
) -> Result<PosteriorNormalWishart> {
    if stats.dim() != prior.dim() {
        return Err(Error::DimensionMismatch {
            expected: prior.dim(),
            found: stats.dim(),
        });
    }
    let m = stats.m as f64;
    let mu = if stats.m == 0 {
        prior.mu0.clone()
    } else {
        (&prior.mu0 * prior.n_mu + &stats.mean * m) / (prior.n_mu + m)
    };
    Ok(PosteriorNormalWishart {
        mu,
        n_mu: prior.n_mu + m,
        t: posterior_precision(prior, stats),
        n_t: prior.n_t + m,
    })
}

/// Degrees of freedom used for the Wishart marginal on a subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SubsetDof {
    /// `N'_T` for every subset.
    #[default]
    Unchanged,
    /// `N'_T − n + |X|`: the exact marginal of the full prior.
    Marginalized,
}

/// `ln p(D^X)` from restricted prior blocks and restricted `T_m`.
fn bge_log_marginal(
    n_mu: f64,
    alpha: f64,
    t0: &DMatrix<f64>,
    tm: &DMatrix<f64>,
    m: usize,
) -> Result<f64> {
    if m == 0 {
        return Ok(0.0);
    }
    let l = t0.nrows();
    let (lf, mf) = (l as f64, m as f64);
    let mut s = -0.5 * lf * mf * std::f64::consts::PI.ln() + 0.5 * lf * (n_mu / (n_mu + mf)).ln();
    for i in 1..=l {
        let i = i as f64;
        s += ln_gamma(0.5 * (alpha + mf + 1.0 - i)) - ln_gamma(0.5 * (alpha + 1.0 - i));
    }
    s += 0.5 * alpha * ln_det_spd(t0)? - 0.5 * (alpha + mf) * ln_det_spd(tm)?;
    Ok(s)
}

/// `ln p(D^X)` under a normal-Wishart prior, with `N'_T` unchanged on subsets.
pub fn bge_subset_loglik(
    prior: &NormalWishartPriorSpec,
    d: &Database,
    subset: &[usize],
) -> Result<f64> {
    BgeEvaluator::new(d, prior.clone())?.log_marginal(subset)
}

/// Subset marginal likelihoods for one all-continuous database.
///
/// `T_m` for the whole domain is formed once; each subset takes sub-blocks of
/// `T₀` and `T_m`.
#[derive(Debug, Clone)]
pub struct BgeEvaluator {
    schema: Domain,
    prior: NormalWishartPriorSpec,
    m: usize,
    tm: DMatrix<f64>,
    dof: SubsetDof,
}

impl BgeEvaluator {
    pub fn new(d: &Database, prior: NormalWishartPriorSpec) -> Result<Self> {
        let stats = gaussian_stats(d)?;
        Self::from_stats(d.schema().clone(), &stats, prior)
    }

    pub fn from_stats(
        schema: Domain,
        stats: &GaussianStats,
        prior: NormalWishartPriorSpec,
    ) -> Result<Self> {
        if stats.dim() != prior.dim() || schema.len() != prior.dim() {
            return Err(Error::DimensionMismatch {
                expected: prior.dim(),
                found: stats.dim(),
            });
        }
        let tm = posterior_precision(&prior, stats);
        Ok(Self {
            schema,
            prior,
            m: stats.m,
            tm,
            dof: SubsetDof::Unchanged,
        })
    }

    pub fn with_subset_dof(mut self, dof: SubsetDof) -> Self {
        self.dof = dof;
        self
    }

    pub fn prior(&self) -> &NormalWishartPriorSpec {
        &self.prior
    }

    pub fn cases(&self) -> usize {
        self.m
    }

    fn alpha(&self, l: usize) -> f64 {
        match self.dof {
            SubsetDof::Unchanged => self.prior.n_t,
            SubsetDof::Marginalized => self.prior.n_t - self.prior.dim() as f64 + l as f64,
        }
    }

    /// `ln p(D^X)`; `subset` must be non-empty.
    pub fn subset_loglik(&self, subset: &[usize]) -> Result<f64> {
        if subset.is_empty() {
            return Err(Error::EmptySubset);
        }
        if let Some(&bad) = subset.iter().find(|&&i| i >= self.prior.dim()) {
            return Err(Error::IndexOutOfRange(bad));
        }
        bge_log_marginal(
            self.prior.n_mu,
            self.alpha(subset.len()),
            &submatrix(&self.prior.t0, subset),
            &submatrix(&self.tm, subset),
            self.m,
        )
    }
}

impl SubsetEvaluator for BgeEvaluator {
    fn domain(&self) -> &Domain {
        &self.schema
    }

    /// `p(D^∅) = 1`.
    fn log_marginal(&self, subset: &[usize]) -> Result<f64> {
        if subset.is_empty() {
            return Ok(0.0);
        }
        self.subset_loglik(subset)
    }
}

/// How `T₀` is matched to a Gaussian prior network with covariance `Σ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum T0Convention {
    /// `E[W] = N'_T T₀⁻¹ = Σ⁻¹`, i.e. `T₀ = N'_T Σ`.
    #[default]
    Expectation,
    /// Predictive covariance of one case equals `Σ`:
    /// `T₀ = N'_μ (N'_T − n − 1) / (N'_μ + 1) · Σ`. Needs `N'_T > n + 1`.
    PredictiveCovariance,
}

/// Normal-Wishart prior whose mean and precision match a Gaussian prior network.
pub fn prior_from_gaussian_network(
    pn: &GaussianNetParams,
    n_mu: f64,
    n_t: f64,
    convention: T0Convention,
) -> Result<NormalWishartPriorSpec> {
    let n = pn.len();
    let sigma = pn.covariance()?;
    let scale = match convention {
        T0Convention::Expectation => n_t,
        T0Convention::PredictiveCovariance => {
            if !(n_t > n as f64 + 1.0) {
                return Err(Error::InvalidPrior(format!(
                    "predictive-covariance convention needs N'_T > n + 1, got {n_t}"
                )));
            }
            n_mu * (n_t - n as f64 - 1.0) / (n_mu + 1.0)
        }
    };
    NormalWishartPriorSpec::new(pn.means(), n_mu, sigma * scale, n_t)
}

/// `ln Γ_n(a)`, the multivariate gamma function.
fn ln_multigamma(n: usize, a: f64) -> f64 {
    let nf = n as f64;
    0.25 * nf * (nf - 1.0) * std::f64::consts::PI.ln()
        + (1..=n).map(|j| ln_gamma(a + 0.5 * (1.0 - j as f64))).sum::<f64>()
}

/// Log density of the normal-Wishart prior at `(μ, W)` (variable coordinates).
pub fn normal_wishart_log_density(
    spec: &NormalWishartPriorSpec,
    mu: &DVector<f64>,
    w: &DMatrix<f64>,
) -> Result<f64> {
    let n = spec.dim();
    let nf = n as f64;
    let a = spec.n_t;
    let ln_det_w = ln_det_spd(w)?;
    let d = mu - &spec.mu0;
    let quad = (d.transpose() * w * &d)[(0, 0)];
    let normal = -0.5 * nf * (2.0 * std::f64::consts::PI).ln() + 0.5 * nf * spec.n_mu.ln()
        + 0.5 * ln_det_w
        - 0.5 * spec.n_mu * quad;
    let wishart = 0.5 * a * ln_det_spd(&spec.t0)? - 0.5 * a * nf * 2f64.ln()
        - ln_multigamma(n, 0.5 * a)
        + 0.5 * (a - nf - 1.0) * ln_det_w
        - 0.5 * (&spec.t0 * w).trace();
    Ok(normal + wishart)
}

/// Log density of the normal-Wishart prior expressed in network parameters
/// `(m, v, B)`: the density at `(μ(m, B), W(v, B))` times the Jacobians of
/// both changes of variables (the one for `μ → m` is 1).
pub fn network_param_log_density(
    spec: &NormalWishartPriorSpec,
    params: &GaussianNetParams,
) -> Result<f64> {
    let w = params_to_precision(params)?;
    let mu = params.means();
    Ok(normal_wishart_log_density(spec, &mu, &w)? + ln_jacobian_vb(params.variances.as_slice())?)
}
