//! Structure scores assembled from subset marginal likelihoods.
//!
//! ```text
//! ln p(D, B_s) = ln p(B_s) + Σ_i [ln p(D^{Π_i ∪ {x_i}}) − ln p(D^{Π_i})]
//! ```
//!
//! with `p(D^∅) = 1`. All values are natural logs.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use serde::Serialize;

use crate::dataset::{
    configuration_count, decode_configuration, discrete_counts, gaussian_stats, Database, Value,
};
use crate::discrete::{bde_local_score, prior_counts, BdeScorer, DirichletPriorSpec};
use crate::error::{Error, Result};
use crate::gaussian::{BgeEvaluator, NormalWishartPriorSpec, SubsetDof};
use crate::graph::{ln_count_dags, Domain, NetworkStructure};
use crate::numeric::{log_sum_exp, normalize_log_weights};

/// Candidates more than this many nats below the best are dropped from
/// model averaging by default.
pub const DEFAULT_TRUNCATION_NATS: f64 = 40.0;

/// `X ↦ ln p(D^X)` for one database and prior.
pub trait SubsetEvaluator: Send + Sync {
    fn domain(&self) -> &Domain;
    /// `subset` is sorted and duplicate free; the empty subset gives 0.
    fn log_marginal(&self, subset: &[usize]) -> Result<f64>;
}

impl<T: SubsetEvaluator + ?Sized> SubsetEvaluator for &T {
    fn domain(&self) -> &Domain {
        (**self).domain()
    }
    fn log_marginal(&self, subset: &[usize]) -> Result<f64> {
        (**self).log_marginal(subset)
    }
}

/// `(i, Π_i) ↦ ln p(D^{Π_i ∪ {x_i}}) − ln p(D^{Π_i})`.
pub trait LocalScore: Send + Sync {
    fn domain(&self) -> &Domain;
    fn local_score(&self, child: usize, parents: &[usize]) -> Result<f64>;
}

impl<T: LocalScore + ?Sized> LocalScore for &T {
    fn domain(&self) -> &Domain {
        (**self).domain()
    }
    fn local_score(&self, child: usize, parents: &[usize]) -> Result<f64> {
        (**self).local_score(child, parents)
    }
}

impl<T: LocalScore + ?Sized> LocalScore for Box<T> {
    fn domain(&self) -> &Domain {
        (**self).domain()
    }
    fn local_score(&self, child: usize, parents: &[usize]) -> Result<f64> {
        (**self).local_score(child, parents)
    }
}

/// Log prior over structures.
pub trait StructurePrior: Send + Sync {
    fn log_prior(&self, s: &NetworkStructure) -> f64;
}

impl<F: Fn(&NetworkStructure) -> f64 + Send + Sync> StructurePrior for F {
    fn log_prior(&self, s: &NetworkStructure) -> f64 {
        self(s)
    }
}

/// The same log prior for every structure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformPrior {
    log_value: f64,
}

impl UniformPrior {
    /// `−ln count`.
    pub fn over_count(count: f64) -> Self {
        Self {
            log_value: -count.ln(),
        }
    }

    /// Uniform over every DAG on `n` labeled nodes.
    pub fn over_all_dags(n: usize) -> Self {
        Self {
            log_value: -ln_count_dags(n),
        }
    }

    /// Log prior 0; scores are then log marginal likelihoods.
    pub fn unnormalized() -> Self {
        Self { log_value: 0.0 }
    }

    pub fn log_value(&self) -> f64 {
        self.log_value
    }
}

impl StructurePrior for UniformPrior {
    fn log_prior(&self, _: &NetworkStructure) -> f64 {
        self.log_value
    }
}

/// Memoizes an evaluator by subset.
///
/// Concurrent lookups share a read lock; the first inserted value for a key
/// wins, so every caller sees the same number.
pub struct CachedEvaluator<E> {
    inner: E,
    cache: RwLock<HashMap<Vec<usize>, f64>>,
}

impl<E: SubsetEvaluator> CachedEvaluator<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    pub fn cached_subsets(&self) -> usize {
        self.cache.read().expect("cache lock poisoned").len()
    }
}

impl<E: SubsetEvaluator> SubsetEvaluator for CachedEvaluator<E> {
    fn domain(&self) -> &Domain {
        self.inner.domain()
    }

    fn log_marginal(&self, subset: &[usize]) -> Result<f64> {
        if let Some(&v) = self.cache.read().expect("cache lock poisoned").get(subset) {
            return Ok(v);
        }
        let v = self.inner.log_marginal(subset)?;
        let mut cache = self.cache.write().expect("cache lock poisoned");
        Ok(*cache.entry(subset.to_vec()).or_insert(v))
    }
}

fn family_subsets(child: usize, parents: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut pa = parents.to_vec();
    pa.sort_unstable();
    pa.dedup();
    let mut fam = pa.clone();
    if let Err(pos) = fam.binary_search(&child) {
        fam.insert(pos, child);
    }
    (fam, pa)
}

/// Local terms from a subset evaluator, with a subset cache.
pub struct BeScorer<E> {
    eval: CachedEvaluator<E>,
}

impl<E: SubsetEvaluator> BeScorer<E> {
    pub fn new(eval: E) -> Self {
        Self {
            eval: CachedEvaluator::new(eval),
        }
    }

    pub fn evaluator(&self) -> &CachedEvaluator<E> {
        &self.eval
    }
}

impl<E: SubsetEvaluator> LocalScore for BeScorer<E> {
    fn domain(&self) -> &Domain {
        self.eval.domain()
    }

    fn local_score(&self, child: usize, parents: &[usize]) -> Result<f64> {
        let (fam, pa) = family_subsets(child, parents);
        Ok(self.eval.log_marginal(&fam)? - self.eval.log_marginal(&pa)?)
    }
}

/// One scored structure (or equivalence class, when `class_size > 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreEntry {
    pub structure: NetworkStructure,
    pub log_prior: f64,
    /// `ln p(D^{Π_i ∪ {x_i}}) − ln p(D^{Π_i})` per variable.
    pub local_terms: Vec<f64>,
    /// `ln p(D | B_s)`: the sum of the local terms.
    pub log_likelihood: f64,
    /// `ln p(D, B_s) = log_prior + log_likelihood`.
    pub log_score: f64,
    /// Number of structures this entry stands for.
    pub class_size: usize,
    /// `ln Σ p(D, B)` over the structures this entry stands for.
    pub log_mass: f64,
}

impl ScoreEntry {
    fn new(structure: NetworkStructure, log_prior: f64, local_terms: Vec<f64>) -> Self {
        let log_likelihood: f64 = local_terms.iter().sum();
        let log_score = log_prior + log_likelihood;
        Self {
            structure,
            log_prior,
            local_terms,
            log_likelihood,
            log_score,
            class_size: 1,
            log_mass: log_score,
        }
    }

    /// Stands for a whole class whose members share this likelihood and have
    /// the given log priors.
    pub fn for_class(mut self, member_log_priors: &[f64]) -> Self {
        if !member_log_priors.is_empty() {
            self.class_size = member_log_priors.len();
            self.log_mass = self.log_likelihood + log_sum_exp(member_log_priors);
        }
        self
    }
}

/// Scores a structure with any local score.
pub fn score_structure(
    s: &NetworkStructure,
    scorer: &dyn LocalScore,
    prior: &dyn StructurePrior,
) -> Result<ScoreEntry> {
    if s.domain() != scorer.domain() {
        return Err(Error::DomainMismatch);
    }
    let terms = (0..s.len())
        .map(|i| scorer.local_score(i, s.parents(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreEntry::new(s.clone(), prior.log_prior(s), terms))
}

/// The Be metric of a structure from a subset evaluator.
pub fn be_score(
    s: &NetworkStructure,
    eval: &dyn SubsetEvaluator,
    prior: &dyn StructurePrior,
) -> Result<ScoreEntry> {
    if s.domain() != eval.domain() {
        return Err(Error::DomainMismatch);
    }
    let terms = (0..s.len())
        .map(|i| {
            let (fam, pa) = family_subsets(i, s.parents(i));
            Ok(eval.log_marginal(&fam)? - eval.log_marginal(&pa)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreEntry::new(s.clone(), prior.log_prior(s), terms))
}

/// `ln p(D, s1) − ln p(D, s2)`.
pub fn bayes_factor(
    s1: &NetworkStructure,
    s2: &NetworkStructure,
    scorer: &dyn LocalScore,
    prior: &dyn StructurePrior,
) -> Result<f64> {
    if s1.domain() != s2.domain() {
        return Err(Error::DomainMismatch);
    }
    Ok(score_structure(s1, scorer, prior)?.log_score - score_structure(s2, scorer, prior)?.log_score)
}

/// Ranked candidates with relative posteriors.
#[derive(Debug, Clone)]
pub struct ScoreReport {
    domain: Domain,
    entries: Vec<ScoreEntry>,
    posteriors: Vec<f64>,
}

impl ScoreReport {
    /// Sorts by `log_mass` (descending, stable) and normalizes posteriors.
    pub fn new(domain: Domain, mut entries: Vec<ScoreEntry>) -> Self {
        entries.sort_by(|a, b| b.log_mass.total_cmp(&a.log_mass));
        let masses: Vec<f64> = entries.iter().map(|e| e.log_mass).collect();
        let posteriors = normalize_log_weights(&masses);
        Self {
            domain,
            entries,
            posteriors,
        }
    }

    /// Keeps the `k` best candidates and renormalizes.
    pub fn truncated(self, k: usize) -> Self {
        let mut entries = self.entries;
        entries.truncate(k.max(1));
        Self::new(self.domain, entries)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn entries(&self) -> &[ScoreEntry] {
        &self.entries
    }

    pub fn best(&self) -> Option<&ScoreEntry> {
        self.entries.first()
    }

    pub fn posteriors(&self) -> &[f64] {
        &self.posteriors
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// JSON view; log values are rounded to 12 significant digits.
    pub fn to_json(&self, local_terms: bool) -> serde_json::Value {
        let names: Vec<String> = self.domain.names().map(str::to_string).collect();
        let candidates = self
            .entries
            .iter()
            .zip(&self.posteriors)
            .enumerate()
            .map(|(rank, (e, &p))| CandidateJson {
                rank: rank + 1,
                edges: e
                    .structure
                    .named_edges()
                    .into_iter()
                    .map(|(a, b)| [a, b])
                    .collect(),
                log_score: round_sig(e.log_score),
                log_prior: round_sig(e.log_prior),
                log_likelihood: round_sig(e.log_likelihood),
                class_size: e.class_size,
                log_mass: round_sig(e.log_mass),
                posterior: round_sig(p),
                local_terms: local_terms.then(|| {
                    names
                        .iter()
                        .zip(&e.local_terms)
                        .map(|(n, &t)| (n.clone(), round_sig(t).into()))
                        .collect()
                }),
            })
            .collect();
        serde_json::to_value(ReportJson {
            variables: names.clone(),
            candidates,
        })
        .expect("report serializes")
    }
}

#[derive(Serialize)]
struct ReportJson {
    variables: Vec<String>,
    candidates: Vec<CandidateJson>,
}

#[derive(Serialize)]
struct CandidateJson {
    rank: usize,
    edges: Vec<[String; 2]>,
    log_score: f64,
    log_prior: f64,
    log_likelihood: f64,
    class_size: usize,
    log_mass: f64,
    posterior: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    local_terms: Option<serde_json::Map<String, serde_json::Value>>,
}

/// `x` rounded to 12 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// `x` printed with 12 significant digits.
pub fn format_sig(x: f64) -> String {
    format!("{}", round_sig(x))
}

/// A scoring rule that can be bound to any database over its domain.
pub trait Metric: Send + Sync {
    fn bind<'a>(&'a self, d: &'a Database) -> Result<Box<dyn LocalScore + 'a>>;
}

/// BDe local terms.
#[derive(Debug, Clone)]
pub struct BdeMetric {
    pub spec: DirichletPriorSpec,
}

impl Metric for BdeMetric {
    fn bind<'a>(&'a self, d: &'a Database) -> Result<Box<dyn LocalScore + 'a>> {
        Ok(Box::new(BdeScorer::new(d, &self.spec)?))
    }
}

/// BGe local terms through the cached subset evaluator.
#[derive(Debug, Clone)]
pub struct BgeMetric {
    pub prior: NormalWishartPriorSpec,
    pub dof: SubsetDof,
}

impl Metric for BgeMetric {
    fn bind<'a>(&'a self, d: &'a Database) -> Result<Box<dyn LocalScore + 'a>> {
        let eval = BgeEvaluator::new(d, self.prior.clone())?.with_subset_dof(self.dof);
        Ok(Box::new(BeScorer::new(eval)))
    }
}

/// `ln p(C | D, B_s) = ln p(D ∪ {C} | B_s) − ln p(D | B_s)`.
pub fn predictive_loglik(
    case: &[Value],
    d: &Database,
    s: &NetworkStructure,
    metric: &dyn Metric,
) -> Result<f64> {
    let extended = d.with_case(case)?;
    let none = UniformPrior::unnormalized();
    let after = score_structure(s, &*metric.bind(&extended)?, &none)?;
    let before = score_structure(s, &*metric.bind(d)?, &none)?;
    Ok(after.log_likelihood - before.log_likelihood)
}

/// Predictive density averaged over the candidates of a report, weighted by
/// their posteriors. Candidates more than `truncation` nats below the best
/// are ignored.
pub fn model_averaged_predictive(
    case: &[Value],
    d: &Database,
    report: &ScoreReport,
    metric: &dyn Metric,
    truncation: f64,
) -> Result<f64> {
    let Some(best) = report.best() else {
        return Err(Error::InvalidPrior("model averaging over an empty candidate set".into()));
    };
    let kept: Vec<&ScoreEntry> = report
        .entries()
        .iter()
        .filter(|e| e.log_mass >= best.log_mass - truncation)
        .collect();
    let masses: Vec<f64> = kept.iter().map(|e| e.log_mass).collect();
    let total = log_sum_exp(&masses);
    let terms = kept
        .iter()
        .map(|e| Ok(e.log_mass - total + predictive_loglik(case, d, &e.structure, metric)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(log_sum_exp(&terms))
}

/// Normal-Wishart priors for continuous variables, one per configuration of
/// a set of discrete parents. Specs are over all continuous variables of the
/// domain, in domain order.
pub trait GaussianPriorFamily: Send + Sync {
    fn prior_for(&self, discrete_parents: &[usize], config: usize) -> Option<&NormalWishartPriorSpec>;
}

/// The same prior for every discrete configuration.
#[derive(Debug, Clone)]
pub struct UniformGaussianFamily(pub NormalWishartPriorSpec);

impl GaussianPriorFamily for UniformGaussianFamily {
    fn prior_for(&self, _: &[usize], _: usize) -> Option<&NormalWishartPriorSpec> {
        Some(&self.0)
    }
}

/// Explicit priors keyed by `(discrete parent set, configuration)`.
#[derive(Debug, Clone, Default)]
pub struct TableGaussianFamily {
    entries: HashMap<(Vec<usize>, usize), NormalWishartPriorSpec>,
}

impl TableGaussianFamily {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, discrete_parents: &[usize], config: usize, spec: NormalWishartPriorSpec) {
        let mut key = discrete_parents.to_vec();
        key.sort_unstable();
        self.entries.insert((key, config), spec);
    }
}

impl GaussianPriorFamily for TableGaussianFamily {
    fn prior_for(&self, discrete_parents: &[usize], config: usize) -> Option<&NormalWishartPriorSpec> {
        self.entries.get(&(discrete_parents.to_vec(), config))
    }
}

type PartitionKey = (Vec<usize>, usize);

/// Local terms for domains that mix discrete and continuous variables.
///
/// Discrete children use BDe terms. A continuous child with discrete parents
/// `Π_d` and continuous parents `Π_c` scores
/// `Σ_j [ln p(D_j^{Π_c ∪ {x_i}}) − ln p(D_j^{Π_c})]` over the configurations
/// `j` of `Π_d`, where `D_j` holds the cases with `Π_d = j`. Continuous
/// parents of discrete variables are rejected.
pub struct MixedScorer<'a> {
    data: &'a Database,
    discrete_idx: Vec<usize>,
    continuous_idx: Vec<usize>,
    /// Position of each domain variable within its own kind.
    local_pos: Vec<usize>,
    discrete_data: Database,
    discrete_prior: Option<&'a DirichletPriorSpec>,
    family: &'a dyn GaussianPriorFamily,
    partitions: RwLock<HashMap<PartitionKey, Arc<CachedEvaluator<BgeEvaluator>>>>,
}

impl<'a> MixedScorer<'a> {
    /// `discrete_prior` is over the discrete variables in domain order and may
    /// be omitted when there are none.
    pub fn new(
        data: &'a Database,
        discrete_prior: Option<&'a DirichletPriorSpec>,
        family: &'a dyn GaussianPriorFamily,
    ) -> Result<Self> {
        let domain = data.schema();
        let (discrete_idx, continuous_idx): (Vec<usize>, Vec<usize>) =
            (0..domain.len()).partition(|&i| domain.variable(i).is_discrete());
        let mut local_pos = vec![0; domain.len()];
        for (p, &i) in discrete_idx.iter().enumerate() {
            local_pos[i] = p;
        }
        for (p, &i) in continuous_idx.iter().enumerate() {
            local_pos[i] = p;
        }
        let discrete_data = data.project(&discrete_idx)?;
        match discrete_prior {
            Some(spec) if spec.domain() != discrete_data.schema() => {
                return Err(Error::DomainMismatch)
            }
            None if !discrete_idx.is_empty() => {
                return Err(Error::InvalidPrior(
                    "discrete variables need a Dirichlet prior".into(),
                ))
            }
            _ => {}
        }
        Ok(Self {
            data,
            discrete_idx,
            continuous_idx,
            local_pos,
            discrete_data,
            discrete_prior,
            family,
            partitions: RwLock::new(HashMap::new()),
        })
    }

    fn partition(
        &self,
        discrete_parents: &[usize],
        config: usize,
        rows: &[usize],
    ) -> Result<Arc<CachedEvaluator<BgeEvaluator>>> {
        let key = (discrete_parents.to_vec(), config);
        if let Some(e) = self.partitions.read().expect("cache lock poisoned").get(&key) {
            return Ok(e.clone());
        }
        let prior = self
            .family
            .prior_for(discrete_parents, config)
            .ok_or_else(|| Error::MissingConditionalPrior {
                parents: self.names(discrete_parents),
                config: self.labels(discrete_parents, config),
            })?;
        let cont = self.data.project(&self.continuous_idx)?;
        let part = if discrete_parents.is_empty() {
            cont
        } else {
            cont.select_rows(rows)
        };
        let stats = gaussian_stats(&part)?;
        let eval = Arc::new(CachedEvaluator::new(BgeEvaluator::from_stats(
            part.schema().clone(),
            &stats,
            prior.clone(),
        )?));
        let mut map = self.partitions.write().expect("cache lock poisoned");
        Ok(map.entry(key).or_insert(eval).clone())
    }

    fn names(&self, idx: &[usize]) -> Vec<String> {
        idx.iter()
            .map(|&i| self.data.schema().variable(i).name().to_string())
            .collect()
    }

    fn labels(&self, idx: &[usize], config: usize) -> Vec<String> {
        let domain = self.data.schema();
        idx.iter()
            .zip(decode_configuration(domain, idx, config))
            .map(|(&i, k)| domain.variable(i).states().map_or(String::new(), |s| s[k].clone()))
            .collect()
    }

    fn continuous_term(&self, child: usize, parents: &[usize]) -> Result<f64> {
        let (dpar, cpar): (Vec<usize>, Vec<usize>) = parents
            .iter()
            .partition(|&&p| self.data.schema().variable(p).is_discrete());
        let mut fam: Vec<usize> = cpar.iter().map(|&p| self.local_pos[p]).collect();
        let pa = fam.clone();
        fam.push(self.local_pos[child]);
        fam.sort_unstable();

        let q = configuration_count(self.data.schema(), &dpar)?;
        let mut rows = vec![Vec::new(); q];
        if !dpar.is_empty() {
            for (l, j) in self.data.configuration_indices(&dpar)?.into_iter().enumerate() {
                rows[j].push(l);
            }
        }
        let mut total = 0.0;
        for (j, r) in rows.iter().enumerate() {
            let eval = self.partition(&dpar, j, r)?;
            total += eval.log_marginal(&fam)? - eval.log_marginal(&pa)?;
        }
        Ok(total)
    }
}

impl LocalScore for MixedScorer<'_> {
    fn domain(&self) -> &Domain {
        self.data.schema()
    }

    fn local_score(&self, child: usize, parents: &[usize]) -> Result<f64> {
        let domain = self.data.schema();
        if child >= domain.len() {
            return Err(Error::IndexOutOfRange(child));
        }
        if let Some(&bad) = parents.iter().find(|&&p| p >= domain.len()) {
            return Err(Error::IndexOutOfRange(bad));
        }
        if !domain.variable(child).is_discrete() {
            return self.continuous_term(child, parents);
        }
        if let Some(&p) = parents.iter().find(|&&p| !domain.variable(p).is_discrete()) {
            return Err(Error::IllegalMixedStructure {
                parent: domain.variable(p).name().to_string(),
                child: domain.variable(child).name().to_string(),
            });
        }
        let spec = self.discrete_prior.expect("checked at construction");
        let c = self.local_pos[child];
        let pa: Vec<usize> = parents.iter().map(|&p| self.local_pos[p]).collect();
        let counts = discrete_counts(&self.discrete_data, c, &pa)?;
        bde_local_score(&counts, &prior_counts(spec, c, &pa)?)
    }
}

impl MixedScorer<'_> {
    pub fn discrete_variables(&self) -> &[usize] {
        &self.discrete_idx
    }

    pub fn continuous_variables(&self) -> &[usize] {
        &self.continuous_idx
    }
}

/// The mixed metric of one structure.
pub fn mixed_score(
    s: &NetworkStructure,
    d: &Database,
    discrete_prior: Option<&DirichletPriorSpec>,
    family: &dyn GaussianPriorFamily,
    prior: &dyn StructurePrior,
) -> Result<ScoreEntry> {
    score_structure(s, &MixedScorer::new(d, discrete_prior, family)?, prior)
}

/// Mixed local terms bound to owned priors.
#[derive(Clone)]
pub struct MixedMetric {
    pub discrete: Option<DirichletPriorSpec>,
    pub family: Arc<dyn GaussianPriorFamily>,
}

impl Metric for MixedMetric {
    fn bind<'a>(&'a self, d: &'a Database) -> Result<Box<dyn LocalScore + 'a>> {
        Ok(Box::new(MixedScorer::new(d, self.discrete.as_ref(), &*self.family)?))
    }
}
