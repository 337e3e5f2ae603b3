//! Dirichlet priors from a prior network and the BDe metric.
//!
//! A [`DirichletPriorSpec`] is a fully parameterized discrete Bayesian network
//! plus an equivalent sample size `N'`. The Dirichlet exponent for child state
//! `k` under parent configuration `j` is `N' · p(x_i = k, Π_i = j)`, with the
//! joint probability taken from the prior network.
//!
//! CPT rows and parent configurations share the mixed-radix convention of
//! [`crate::dataset::Database::configuration_indices`]: parents sorted by
//! variable index, lowest index varying fastest.

use std::collections::BTreeSet;

use crate::dataset::{configuration_count, discrete_counts, Database, DiscreteCounts};
use crate::error::{Error, Result};
use crate::graph::{Domain, NetworkStructure};
use crate::numeric::ln_gamma;
use crate::scoring::{score_structure, LocalScore, StructurePrior, SubsetEvaluator};

/// Largest joint space enumerated when marginalizing a prior network.
pub const JOINT_SPACE_CAP: usize = 1_000_000;

const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Prior network (structure plus CPTs) and equivalent sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletPriorSpec {
    network: NetworkStructure,
    /// Per variable: one probability row per parent configuration.
    cpts: Vec<Vec<Vec<f64>>>,
    ess: f64,
    floor: Option<f64>,
}

impl DirichletPriorSpec {
    pub fn new(network: NetworkStructure, cpts: Vec<Vec<Vec<f64>>>, ess: f64) -> Result<Self> {
        let domain = network.domain();
        if !domain.all_discrete() {
            return Err(Error::TypeMismatch(
                "a Dirichlet prior network must be all-discrete".into(),
            ));
        }
        if !(ess > 0.0 && ess.is_finite()) {
            return Err(Error::InvalidPrior(format!(
                "equivalent sample size must be positive, got {ess}"
            )));
        }
        if cpts.len() != domain.len() {
            return Err(Error::DimensionMismatch {
                expected: domain.len(),
                found: cpts.len(),
            });
        }
        for (i, rows) in cpts.iter().enumerate() {
            let var = domain.variable(i);
            let invalid = |detail: String| Error::InvalidCpt {
                variable: var.name().to_string(),
                detail,
            };
            let q = configuration_count(domain, network.parents(i))?;
            let r = var.arity().unwrap();
            if rows.len() != q {
                return Err(invalid(format!("expected {q} rows, found {}", rows.len())));
            }
            for (j, row) in rows.iter().enumerate() {
                if row.len() != r {
                    return Err(invalid(format!(
                        "row {j} has {} entries, expected {r}",
                        row.len()
                    )));
                }
                if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(invalid(format!("row {j} has an entry outside [0, 1]")));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(invalid(format!("row {j} sums to {sum}")));
                }
            }
        }
        Ok(Self {
            network,
            cpts,
            ess,
            floor: None,
        })
    }

    /// Empty prior network with uniform CPTs (the BDeu prior).
    pub fn uniform(domain: Domain, ess: f64) -> Result<Self> {
        let cpts = domain
            .variables()
            .iter()
            .map(|v| {
                v.arity()
                    .map(|r| vec![vec![1.0 / r as f64; r]])
                    .ok_or_else(|| Error::TypeMismatch(format!("`{}` is continuous", v.name())))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(NetworkStructure::empty(domain), cpts, ess)
    }

    /// Floors joint probabilities at `epsilon` and renormalizes before any
    /// marginal is taken. This forces full-joint enumeration.
    pub fn with_floor(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidPrior(format!(
                "probability floor must lie in (0, 1), got {epsilon}"
            )));
        }
        self.floor = Some(epsilon);
        Ok(self)
    }

    pub fn network(&self) -> &NetworkStructure {
        &self.network
    }

    pub fn domain(&self) -> &Domain {
        self.network.domain()
    }

    pub fn cpts(&self) -> &[Vec<Vec<f64>>] {
        &self.cpts
    }

    pub fn ess(&self) -> f64 {
        self.ess
    }

    pub fn floor(&self) -> Option<f64> {
        self.floor
    }

    /// CPT entry `p(x_i = k | parents in states given by assignment)`.
    fn conditional(&self, i: usize, assignment: &[usize]) -> f64 {
        let domain = self.domain();
        let mut j = 0;
        let mut stride = 1;
        for &p in self.network.parents(i) {
            j += assignment[p] * stride;
            stride *= domain.variable(p).arity().unwrap();
        }
        self.cpts[i][j][assignment[i]]
    }

    /// Chain-rule probability of a full assignment (state index per variable).
    /// Ignores any floor.
    pub fn joint_probability(&self, assignment: &[usize]) -> Result<f64> {
        let domain = self.domain();
        if assignment.len() != domain.len() {
            return Err(Error::IncompleteAssignment);
        }
        for (i, &k) in assignment.iter().enumerate() {
            if k >= domain.variable(i).arity().unwrap() {
                return Err(Error::TypeMismatch(format!(
                    "state {k} out of range for `{}`",
                    domain.variable(i).name()
                )));
            }
        }
        Ok((0..domain.len())
            .map(|i| self.conditional(i, assignment))
            .product())
    }

    /// Marginal distribution of the variables `vars`.
    ///
    /// Without a floor only the ancestral closure of `vars` in the prior
    /// network is enumerated; with a floor the whole joint is.
    pub fn marginal(&self, vars: &[usize]) -> Result<JointTable> {
        let mut keep = vars.to_vec();
        keep.sort_unstable();
        keep.dedup();
        if let Some(&bad) = keep.iter().find(|&&v| v >= self.domain().len()) {
            return Err(Error::IndexOutOfRange(bad));
        }
        if self.floor.is_some() {
            return Ok(JointTable::full(self)?.marginalize(&keep));
        }
        let ancestral = self.ancestral_closure(&keep);
        Ok(self.enumerate(&ancestral)?.marginalize(&keep))
    }

    fn ancestral_closure(&self, vars: &[usize]) -> Vec<usize> {
        let mut set: BTreeSet<usize> = vars.iter().copied().collect();
        let mut stack: Vec<usize> = vars.to_vec();
        while let Some(v) = stack.pop() {
            for &p in self.network.parents(v) {
                if set.insert(p) {
                    stack.push(p);
                }
            }
        }
        set.into_iter().collect()
    }

    /// Joint over an ancestrally closed set `vars` (sorted).
    fn enumerate(&self, vars: &[usize]) -> Result<JointTable> {
        let domain = self.domain();
        let size = joint_size(domain, vars)?;
        let mut assignment = vec![0usize; domain.len()];
        let mut probs = Vec::with_capacity(size);
        for idx in 0..size {
            let mut rest = idx;
            for &v in vars {
                let r = domain.variable(v).arity().unwrap();
                assignment[v] = rest % r;
                rest /= r;
            }
            probs.push(vars.iter().map(|&v| self.conditional(v, &assignment)).product());
        }
        Ok(JointTable {
            domain: domain.clone(),
            vars: vars.to_vec(),
            probs,
        })
    }
}

fn joint_size(domain: &Domain, vars: &[usize]) -> Result<usize> {
    let size: u128 = vars
        .iter()
        .map(|&v| domain.variable(v).arity().unwrap() as u128)
        .product();
    if size > JOINT_SPACE_CAP as u128 {
        return Err(Error::JointSpaceTooLarge {
            size,
            cap: JOINT_SPACE_CAP,
        });
    }
    Ok(size as usize)
}

/// Probability table over a sorted set of discrete variables, mixed radix with
/// the lowest index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    domain: Domain,
    vars: Vec<usize>,
    probs: Vec<f64>,
}

impl JointTable {
    /// The prior network's full joint, floored and renormalized if the spec
    /// carries a floor.
    pub fn full(spec: &DirichletPriorSpec) -> Result<Self> {
        let all: Vec<usize> = (0..spec.domain().len()).collect();
        let mut t = spec.enumerate(&all)?;
        if let Some(eps) = spec.floor {
            for p in &mut t.probs {
                *p = p.max(eps);
            }
            let total: f64 = t.probs.iter().sum();
            for p in &mut t.probs {
                *p /= total;
            }
        }
        Ok(t)
    }

    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// Sums out every variable not in `keep` (sorted subset of `vars`).
    pub fn marginalize(&self, keep: &[usize]) -> Self {
        let radices: Vec<usize> = self
            .vars
            .iter()
            .map(|&v| self.domain.variable(v).arity().unwrap())
            .collect();
        // Stride of each of our digits inside the kept index (0 if summed out).
        let mut out_stride = vec![0usize; self.vars.len()];
        let mut stride = 1;
        for &k in keep {
            let pos = self
                .vars
                .iter()
                .position(|&v| v == k)
                .expect("marginalize: kept variable not in table");
            out_stride[pos] = stride;
            stride *= radices[pos];
        }
        let mut probs = vec![0.0; stride];
        for (idx, &p) in self.probs.iter().enumerate() {
            let mut rest = idx;
            let mut target = 0;
            for (d, &r) in radices.iter().enumerate() {
                target += (rest % r) * out_stride[d];
                rest /= r;
            }
            probs[target] += p;
        }
        Self {
            domain: self.domain.clone(),
            vars: keep.to_vec(),
            probs,
        }
    }
}

/// Dirichlet exponents `N'_ijk` for one child and parent set.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDirichlet {
    pub child: usize,
    pub parents: Vec<usize>,
    pub arity: usize,
    pub configurations: usize,
    /// Row-major `q_i × r_i`.
    pub alpha: Vec<f64>,
}

impl LocalDirichlet {
    pub fn row(&self, j: usize) -> &[f64] {
        &self.alpha[j * self.arity..(j + 1) * self.arity]
    }

    /// `N'_ij`.
    pub fn row_total(&self, j: usize) -> f64 {
        self.row(j).iter().sum()
    }
}

/// `N'_ijk = N' · p(x_i = k, Π_i = j)` from the prior network.
pub fn prior_counts(
    spec: &DirichletPriorSpec,
    child: usize,
    parents: &[usize],
) -> Result<LocalDirichlet> {
    let mut parents = parents.to_vec();
    parents.sort_unstable();
    parents.dedup();
    if parents.contains(&child) {
        return Err(Error::CyclicGraph);
    }
    let mut family = parents.clone();
    family.push(child);
    family.sort_unstable();
    let table = spec.marginal(&family)?;
    local_from_table(spec, &table, child, &parents)
}

/// Rearranges a family marginal into `(j, k)` layout and scales by `N'`.
pub(crate) fn local_from_table(
    spec: &DirichletPriorSpec,
    table: &JointTable,
    child: usize,
    parents: &[usize],
) -> Result<LocalDirichlet> {
    let domain = spec.domain();
    let arity = domain.variable(child).arity().unwrap();
    let configurations = configuration_count(domain, parents)?;
    let mut alpha = vec![0.0; configurations * arity];
    for (idx, &p) in table.probs.iter().enumerate() {
        let mut rest = idx;
        let mut j = 0;
        let mut j_stride = 1;
        let mut k = 0;
        for &v in &table.vars {
            let r = domain.variable(v).arity().unwrap();
            let digit = rest % r;
            rest /= r;
            if v == child {
                k = digit;
            } else {
                j += digit * j_stride;
                j_stride *= r;
            }
        }
        alpha[j * arity + k] = spec.ess * p;
    }
    if alpha.iter().any(|&a| !(a > 0.0)) {
        return Err(Error::ZeroPriorMass {
            variable: domain.variable(child).name().to_string(),
        });
    }
    let local = LocalDirichlet {
        child,
        parents: parents.to_vec(),
        arity,
        configurations,
        alpha,
    };
    // Exponents aggregate by summation: Σ_k N'_ijk = N' p(Π_i = j), Σ_jk = N'.
    debug_assert!({
        let total: f64 = (0..configurations).map(|j| local.row_total(j)).sum();
        (total - spec.ess).abs() <= 1e-9 * spec.ess
    });
    Ok(local)
}

/// `ln p(D)` for one multinomial variable under a Dirichlet prior.
pub fn dirichlet_marginal_loglik(alpha: &[f64], counts: &[u64]) -> Result<f64> {
    if alpha.len() != counts.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} exponents for {} counts",
            alpha.len(),
            counts.len()
        )));
    }
    if alpha.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
        return Err(Error::NonPositivePrior);
    }
    Ok(dirichlet_row(alpha, counts))
}

#[inline]
fn dirichlet_row(alpha: &[f64], counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let a: f64 = alpha.iter().sum();
    let mut s = ln_gamma(a) - ln_gamma(a + n as f64);
    for (&ak, &nk) in alpha.iter().zip(counts) {
        if nk > 0 {
            s += ln_gamma(ak + nk as f64) - ln_gamma(ak);
        }
    }
    s
}

/// Local BDe term: `Σ_j ln p(row j)` under the family's Dirichlet exponents.
pub fn bde_local_score(counts: &DiscreteCounts, prior: &LocalDirichlet) -> Result<f64> {
    if counts.arity != prior.arity
        || counts.configurations != prior.configurations
        || counts.child != prior.child
        || counts.parents != prior.parents
    {
        return Err(Error::ShapeMismatch(format!(
            "counts are {}×{}, prior is {}×{}",
            counts.configurations, counts.arity, prior.configurations, prior.arity
        )));
    }
    if prior.alpha.iter().any(|&a| !(a > 0.0)) {
        return Err(Error::NonPositivePrior);
    }
    Ok((0..counts.configurations)
        .map(|j| dirichlet_row(prior.row(j), counts.row(j)))
        .sum())
}

/// Local BDe scores for a database, computed family by family.
#[derive(Debug, Clone)]
pub struct BdeScorer<'a> {
    data: &'a Database,
    spec: &'a DirichletPriorSpec,
}

impl<'a> BdeScorer<'a> {
    pub fn new(data: &'a Database, spec: &'a DirichletPriorSpec) -> Result<Self> {
        if data.schema() != spec.domain() {
            return Err(Error::DomainMismatch);
        }
        Ok(Self { data, spec })
    }
}

impl LocalScore for BdeScorer<'_> {
    fn domain(&self) -> &Domain {
        self.data.schema()
    }

    fn local_score(&self, child: usize, parents: &[usize]) -> Result<f64> {
        let counts = discrete_counts(self.data, child, parents)?;
        let prior = prior_counts(self.spec, child, parents)?;
        bde_local_score(&counts, &prior)
    }
}

/// `ln p(D, B_s^h)` under the BDe metric.
pub fn bde_score(
    s: &NetworkStructure,
    d: &Database,
    spec: &DirichletPriorSpec,
    prior: &dyn StructurePrior,
) -> Result<f64> {
    Ok(score_structure(s, &BdeScorer::new(d, spec)?, prior)?.log_score)
}

/// `ln p(D^X)`: the variables in `X` treated as one multinomial variable whose
/// Dirichlet exponents are `N' · p(X = k)`.
#[derive(Debug, Clone)]
pub struct DirichletSubsetEvaluator<'a> {
    data: &'a Database,
    spec: &'a DirichletPriorSpec,
}

impl<'a> DirichletSubsetEvaluator<'a> {
    pub fn new(data: &'a Database, spec: &'a DirichletPriorSpec) -> Result<Self> {
        if data.schema() != spec.domain() {
            return Err(Error::DomainMismatch);
        }
        Ok(Self { data, spec })
    }
}

impl SubsetEvaluator for DirichletSubsetEvaluator<'_> {
    fn domain(&self) -> &Domain {
        self.data.schema()
    }

    fn log_marginal(&self, subset: &[usize]) -> Result<f64> {
        if subset.is_empty() {
            return Ok(0.0);
        }
        let table = self.spec.marginal(subset)?;
        let alpha: Vec<f64> = table.probs.iter().map(|p| self.spec.ess * p).collect();
        if alpha.iter().any(|&a| !(a > 0.0)) {
            let name = self.spec.domain().variable(subset[0]).name().to_string();
            return Err(Error::ZeroPriorMass { variable: name });
        }
        let counts = self.data.joint_counts(table.vars())?;
        dirichlet_marginal_loglik(&alpha, &counts)
    }
}
