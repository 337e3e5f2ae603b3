//! Exhaustive and greedy structure search over decomposable scores.

use std::collections::HashMap;
use std::sync::RwLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{enumerate_dags, partition_equivalence, Domain, NetworkStructure};
use crate::scoring::{score_structure, LocalScore, ScoreEntry, ScoreReport, StructurePrior};

/// A move must raise the score by more than this to be accepted.
pub const IMPROVEMENT_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchMode {
    #[default]
    Exhaustive,
    Greedy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub mode: SearchMode,
    /// Largest parent set allowed.
    pub max_parents: usize,
    /// Number of greedy climbs; the first starts from the seed structure and
    /// the rest from random structures.
    pub restarts: usize,
    pub seed: u64,
    /// Number of candidates kept in the report.
    pub top_k: usize,
    /// Score one representative per equivalence class in exhaustive mode.
    pub collapse_classes: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            mode: SearchMode::Exhaustive,
            max_parents: usize::MAX,
            restarts: 1,
            seed: 0,
            top_k: 10,
            collapse_classes: true,
        }
    }
}

impl SearchConfig {
    fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::InvalidNetwork("top_k must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidNetwork("restarts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Single-arc changes. The derived order (kind, parent, child) breaks ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Move {
    AddEdge(usize, usize),
    DeleteEdge(usize, usize),
    ReverseEdge(usize, usize),
}

impl Move {
    /// The structure after the move, if it is acyclic and within `max_parents`.
    pub fn apply(&self, s: &NetworkStructure, max_parents: usize) -> Option<NetworkStructure> {
        let mut parents = s.parent_sets().to_vec();
        match *self {
            Move::AddEdge(p, c) => {
                if p == c || s.adjacent(p, c) {
                    return None;
                }
                parents[c].push(p);
            }
            Move::DeleteEdge(p, c) => {
                if !s.has_edge(p, c) {
                    return None;
                }
                parents[c].retain(|&x| x != p);
            }
            Move::ReverseEdge(p, c) => {
                if !s.has_edge(p, c) {
                    return None;
                }
                parents[c].retain(|&x| x != p);
                parents[p].push(c);
            }
        }
        if parents.iter().any(|pa| pa.len() > max_parents) {
            return None;
        }
        NetworkStructure::new(s.domain().clone(), parents).ok()
    }

    /// Variables whose parent sets the move changes.
    pub fn touched(&self) -> Vec<usize> {
        match *self {
            Move::AddEdge(_, c) | Move::DeleteEdge(_, c) => vec![c],
            Move::ReverseEdge(p, c) => vec![p, c],
        }
    }
}

/// Memoizes local scores by `(child, sorted parents)`.
pub struct CachedLocalScore<'a> {
    inner: &'a dyn LocalScore,
    cache: RwLock<HashMap<(usize, Vec<usize>), f64>>,
}

impl<'a> CachedLocalScore<'a> {
    pub fn new(inner: &'a dyn LocalScore) -> Self {
        Self {
            inner,
            cache: RwLock::new(HashMap::new()),
        }
    }
}

impl LocalScore for CachedLocalScore<'_> {
    fn domain(&self) -> &Domain {
        self.inner.domain()
    }

    fn local_score(&self, child: usize, parents: &[usize]) -> Result<f64> {
        let mut key = (child, parents.to_vec());
        key.1.sort_unstable();
        if let Some(&v) = self.cache.read().expect("cache lock poisoned").get(&key) {
            return Ok(v);
        }
        let v = self.inner.local_score(child, &key.1)?;
        let mut cache = self.cache.write().expect("cache lock poisoned");
        Ok(*cache.entry(key).or_insert(v))
    }
}

/// Scores every DAG over `domain` (at most five variables).
///
/// With `collapse_classes`, one representative per equivalence class is
/// scored and the entry's mass sums the priors of all class members.
pub fn exhaustive_search(
    domain: &Domain,
    scorer: &dyn LocalScore,
    prior: &dyn StructurePrior,
    cfg: &SearchConfig,
) -> Result<ScoreReport> {
    cfg.validate()?;
    if domain != scorer.domain() {
        return Err(Error::DomainMismatch);
    }
    let dags: Vec<NetworkStructure> = enumerate_dags(domain)?
        .into_iter()
        .filter(|s| s.parent_sets().iter().all(|p| p.len() <= cfg.max_parents))
        .collect();
    let cached = CachedLocalScore::new(scorer);
    let entries: Vec<ScoreEntry> = if cfg.collapse_classes {
        partition_equivalence(&dags)?
            .par_iter()
            .map(|class| {
                let priors: Vec<f64> = class.members.iter().map(|s| prior.log_prior(s)).collect();
                Ok(score_structure(class.representative(), &cached, prior)?.for_class(&priors))
            })
            .collect::<Result<_>>()?
    } else {
        dags.par_iter()
            .map(|s| score_structure(s, &cached, prior))
            .collect::<Result<_>>()?
    };
    Ok(ScoreReport::new(domain.clone(), entries).truncated(cfg.top_k))
}

/// Path of one hill climb.
#[derive(Debug, Clone)]
pub struct Climb {
    pub structure: NetworkStructure,
    pub log_score: f64,
    pub moves: Vec<Move>,
    /// Score after each accepted move, starting with the initial score.
    pub trajectory: Vec<f64>,
}

/// Hill climbing from `start`: applies the best strictly improving move until
/// none is left. Only the local terms of the touched variables are rescored.
pub fn hill_climb(
    start: &NetworkStructure,
    scorer: &dyn LocalScore,
    prior: &dyn StructurePrior,
    max_parents: usize,
) -> Result<Climb> {
    if start.domain() != scorer.domain() {
        return Err(Error::DomainMismatch);
    }
    if start.parent_sets().iter().any(|p| p.len() > max_parents) {
        return Err(Error::InvalidNetwork(format!(
            "start structure exceeds {max_parents} parents per variable"
        )));
    }
    let n = start.len();
    let mut current = start.clone();
    let mut terms = (0..n)
        .map(|i| scorer.local_score(i, current.parents(i)))
        .collect::<Result<Vec<f64>>>()?;
    let mut score = prior.log_prior(&current) + terms.iter().sum::<f64>();
    let mut moves = Vec::new();
    let mut trajectory = vec![score];

    loop {
        let mut candidates = Vec::new();
        for p in 0..n {
            for c in 0..n {
                if p != c {
                    candidates.extend([Move::AddEdge(p, c), Move::DeleteEdge(p, c), Move::ReverseEdge(p, c)]);
                }
            }
        }
        candidates.sort();
        let evaluated = candidates
            .par_iter()
            .map(|mv| {
                let Some(next) = mv.apply(&current, max_parents) else {
                    return Ok(None);
                };
                let mut new_terms = terms.clone();
                for i in mv.touched() {
                    new_terms[i] = scorer.local_score(i, next.parents(i))?;
                }
                let new_score = prior.log_prior(&next) + new_terms.iter().sum::<f64>();
                Ok(Some((*mv, next, new_terms, new_score)))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut best: Option<(Move, NetworkStructure, Vec<f64>, f64)> = None;
        for cand in evaluated.into_iter().flatten() {
            if cand.3 > score + IMPROVEMENT_THRESHOLD
                && best.as_ref().is_none_or(|b| cand.3 > b.3)
            {
                best = Some(cand);
            }
        }
        let Some((mv, next, new_terms, new_score)) = best else {
            break;
        };
        current = next;
        terms = new_terms;
        score = new_score;
        moves.push(mv);
        trajectory.push(score);
    }
    Ok(Climb {
        structure: current,
        log_score: score,
        moves,
        trajectory,
    })
}

/// A random DAG: a random order and each forward pair joined with
/// probability `density`, subject to `max_parents`.
pub fn random_dag(
    domain: &Domain,
    rng: &mut impl Rng,
    density: f64,
    max_parents: usize,
) -> NetworkStructure {
    let n = domain.len();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut parents = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..i {
            if parents[order[i]].len() < max_parents && rng.random_bool(density) {
                parents[order[i]].push(order[j]);
            }
        }
    }
    NetworkStructure::new(domain.clone(), parents).expect("forward arcs are acyclic")
}

/// Greedy search with restarts. Climbs run in parallel; restart `r` draws its
/// start structure from stream `r` of a ChaCha generator seeded with
/// `cfg.seed`, so results do not depend on the thread count.
pub fn greedy_search(
    domain: &Domain,
    scorer: &dyn LocalScore,
    prior: &dyn StructurePrior,
    cfg: &SearchConfig,
    seed_structure: Option<&NetworkStructure>,
) -> Result<ScoreReport> {
    cfg.validate()?;
    if domain != scorer.domain() {
        return Err(Error::DomainMismatch);
    }
    let start0 = match seed_structure {
        Some(s) if s.domain() != domain => return Err(Error::DomainMismatch),
        Some(s) => s.clone(),
        None => NetworkStructure::empty(domain.clone()),
    };
    let cached = CachedLocalScore::new(scorer);
    let climbs = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let start = if r == 0 {
                start0.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(r as u64);
                random_dag(domain, &mut rng, 0.3, cfg.max_parents)
            };
            hill_climb(&start, &cached, prior, cfg.max_parents)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut entries: Vec<ScoreEntry> = Vec::new();
    for climb in climbs {
        if entries.iter().all(|e| e.structure != climb.structure) {
            entries.push(score_structure(&climb.structure, &cached, prior)?);
        }
    }
    Ok(ScoreReport::new(domain.clone(), entries).truncated(cfg.top_k))
}

/// Dispatches on `cfg.mode`.
pub fn search(
    domain: &Domain,
    scorer: &dyn LocalScore,
    prior: &dyn StructurePrior,
    cfg: &SearchConfig,
    seed_structure: Option<&NetworkStructure>,
) -> Result<ScoreReport> {
    match cfg.mode {
        SearchMode::Exhaustive => exhaustive_search(domain, scorer, prior, cfg),
        SearchMode::Greedy => greedy_search(domain, scorer, prior, cfg, seed_structure),
    }
}
