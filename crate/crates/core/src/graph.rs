//! Network structures, acyclicity and Markov equivalence.
//!
//! A [`NetworkStructure`] is an immutable DAG over a [`Domain`]. Parent sets
//! are stored sorted, so two structures compare equal exactly when they have
//! the same arcs.
//!
//! Equivalence is decided by comparing skeletons and v-structures. An
//! independent constructive check, [`covered_reversal_sequence`], searches for
//! a sequence of covered arc reversals turning one structure into the other;
//! debug builds assert that both answers agree.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use num_bigint::{BigInt, BigUint};

use crate::error::{Error, Result};

/// Default cap on the number of variables for [`enumerate_dags`].
pub const DEFAULT_ENUMERATION_CAP: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum VariableKind {
    /// Ordered state labels; the state index is the position in this list.
    Discrete { states: Vec<String> },
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Variable {
    name: String,
    kind: VariableKind,
}

impl Variable {
    pub fn discrete<S: Into<String>>(name: S, states: Vec<String>) -> Result<Self> {
        let name = name.into();
        if states.len() < 2 {
            return Err(Error::InvalidDomain(format!(
                "discrete variable `{name}` needs at least two states"
            )));
        }
        let distinct: HashSet<&String> = states.iter().collect();
        if distinct.len() != states.len() {
            return Err(Error::InvalidDomain(format!(
                "discrete variable `{name}` has duplicate states"
            )));
        }
        Ok(Self {
            name,
            kind: VariableKind::Discrete { states },
        })
    }

    /// Discrete variable with states labelled `1..=arity`.
    pub fn with_arity<S: Into<String>>(name: S, arity: usize) -> Result<Self> {
        Self::discrete(name, (1..=arity).map(|k| k.to_string()).collect())
    }

    pub fn continuous<S: Into<String>>(name: S) -> Self {
        Self {
            name: name.into(),
            kind: VariableKind::Continuous,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &VariableKind {
        &self.kind
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, VariableKind::Discrete { .. })
    }

    /// Number of states, `None` for continuous variables.
    pub fn arity(&self) -> Option<usize> {
        match &self.kind {
            VariableKind::Discrete { states } => Some(states.len()),
            VariableKind::Continuous => None,
        }
    }

    pub fn states(&self) -> Option<&[String]> {
        match &self.kind {
            VariableKind::Discrete { states } => Some(states),
            VariableKind::Continuous => None,
        }
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.states()?.iter().position(|s| s == label)
    }
}

/// An ordered list of uniquely named variables. Cheap to clone.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Domain {
    vars: Arc<Vec<Variable>>,
}

impl Domain {
    pub fn new(vars: Vec<Variable>) -> Result<Self> {
        let mut seen = HashSet::new();
        for v in &vars {
            if !seen.insert(v.name.as_str()) {
                return Err(Error::InvalidDomain(format!(
                    "duplicate variable name `{}`",
                    v.name
                )));
            }
        }
        Ok(Self {
            vars: Arc::new(vars),
        })
    }

    /// `n` binary variables named `x1..xn` with states `1`, `2`.
    pub fn binary(n: usize) -> Self {
        Self::new(
            (1..=n)
                .map(|i| Variable::with_arity(format!("x{i}"), 2).unwrap())
                .collect(),
        )
        .unwrap()
    }

    /// `n` continuous variables named `x1..xn`.
    pub fn continuous(n: usize) -> Self {
        Self::new(
            (1..=n)
                .map(|i| Variable::continuous(format!("x{i}")))
                .collect(),
        )
        .unwrap()
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn variable(&self, i: usize) -> &Variable {
        &self.vars[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn require_index(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.iter().map(|v| v.name.as_str())
    }

    pub fn all_discrete(&self) -> bool {
        self.vars.iter().all(Variable::is_discrete)
    }

    pub fn all_continuous(&self) -> bool {
        self.vars.iter().all(|v| !v.is_discrete())
    }

    /// Sub-domain made of the given variable indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let vars = indices
            .iter()
            .map(|&i| {
                self.vars
                    .get(i)
                    .cloned()
                    .ok_or(Error::IndexOutOfRange(i))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(vars)
    }

    fn same_variable_set(&self, other: &Domain) -> bool {
        self.len() == other.len()
            && other
                .vars
                .iter()
                .all(|v| self.index_of(&v.name).map(|i| &self.vars[i]) == Some(v))
    }
}

/// A directed acyclic graph over a domain.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NetworkStructure {
    domain: Domain,
    parents: Vec<Vec<usize>>,
}

impl NetworkStructure {
    /// Builds a structure from per-variable parent lists.
    pub fn new(domain: Domain, mut parents: Vec<Vec<usize>>) -> Result<Self> {
        let n = domain.len();
        if parents.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: parents.len(),
            });
        }
        for (child, ps) in parents.iter_mut().enumerate() {
            ps.sort_unstable();
            ps.dedup();
            for &p in ps.iter() {
                if p >= n {
                    return Err(Error::IndexOutOfRange(p));
                }
                if p == child {
                    return Err(Error::CyclicGraph);
                }
            }
        }
        let s = Self { domain, parents };
        s.topological_order()?;
        Ok(s)
    }

    pub fn empty(domain: Domain) -> Self {
        let n = domain.len();
        Self {
            domain,
            parents: vec![Vec::new(); n],
        }
    }

    /// Builds a structure from `(parent, child)` index pairs.
    pub fn from_edges(domain: Domain, edges: &[(usize, usize)]) -> Result<Self> {
        let mut parents = vec![Vec::new(); domain.len()];
        for &(p, c) in edges {
            parents
                .get_mut(c)
                .ok_or(Error::IndexOutOfRange(c))?
                .push(p);
        }
        Self::new(domain, parents)
    }

    /// Builds a structure from `(parent, child)` name pairs.
    pub fn from_named_edges(domain: Domain, edges: &[(&str, &str)]) -> Result<Self> {
        let idx = edges
            .iter()
            .map(|(p, c)| Ok((domain.require_index(p)?, domain.require_index(c)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_edges(domain, &idx)
    }

    /// A complete structure whose arcs follow `order` (earlier → later).
    pub fn complete(domain: Domain, order: &[usize]) -> Result<Self> {
        let mut edges = Vec::new();
        for (a, &p) in order.iter().enumerate() {
            for &c in &order[a + 1..] {
                edges.push((p, c));
            }
        }
        Self::from_edges(domain, &edges)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    /// Sorted parent indices of `i`.
    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn parent_sets(&self) -> &[Vec<usize>] {
        &self.parents
    }

    pub fn has_edge(&self, parent: usize, child: usize) -> bool {
        self.parents[child].binary_search(&parent).is_ok()
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.has_edge(a, b) || self.has_edge(b, a)
    }

    pub fn num_edges(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    /// `(parent, child)` pairs ordered by parent, then child.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<_> = self
            .parents
            .iter()
            .enumerate()
            .flat_map(|(c, ps)| ps.iter().map(move |&p| (p, c)))
            .collect();
        e.sort_unstable();
        e
    }

    pub fn named_edges(&self) -> Vec<(String, String)> {
        self.edges()
            .into_iter()
            .map(|(p, c)| {
                (
                    self.domain.variable(p).name().to_string(),
                    self.domain.variable(c).name().to_string(),
                )
            })
            .collect()
    }

    pub fn with_edge(&self, parent: usize, child: usize) -> Result<Self> {
        let mut parents = self.parents.clone();
        parents
            .get_mut(child)
            .ok_or(Error::IndexOutOfRange(child))?
            .push(parent);
        Self::new(self.domain.clone(), parents)
    }

    pub fn without_edge(&self, parent: usize, child: usize) -> Self {
        let mut parents = self.parents.clone();
        parents[child].retain(|&p| p != parent);
        Self {
            domain: self.domain.clone(),
            parents,
        }
    }

    /// Reverses `parent → child`; fails with `CyclicGraph` if that closes a cycle.
    pub fn with_reversed(&self, parent: usize, child: usize) -> Result<Self> {
        self.without_edge(parent, child).with_edge(child, parent)
    }

    /// Kahn's algorithm; ties go to the lowest index, so an empty graph
    /// yields declaration order.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        topological_order(&self.parents)
    }

    /// `x → y` is covered when `Pa(y) = Pa(x) ∪ {x}`.
    pub fn is_covered(&self, x: usize, y: usize) -> bool {
        if !self.has_edge(x, y) {
            return false;
        }
        let mut expected = self.parents[x].clone();
        expected.push(x);
        expected.sort_unstable();
        expected == self.parents[y]
    }

    /// Unordered adjacencies as `(min, max)` pairs.
    pub fn skeleton(&self) -> BTreeSet<(usize, usize)> {
        self.edges()
            .into_iter()
            .map(|(p, c)| (p.min(c), p.max(c)))
            .collect()
    }

    /// Unshielded colliders `a → c ← b` as `(a, c, b)` with `a < b`.
    pub fn v_structures(&self) -> BTreeSet<(usize, usize, usize)> {
        let mut out = BTreeSet::new();
        for (c, ps) in self.parents.iter().enumerate() {
            for (k, &a) in ps.iter().enumerate() {
                for &b in &ps[k + 1..] {
                    if !self.adjacent(a, b) {
                        out.insert((a, c, b));
                    }
                }
            }
        }
        out
    }

    /// Key shared by exactly the members of one equivalence class.
    pub fn equivalence_key(&self) -> EquivalenceKey {
        EquivalenceKey {
            skeleton: self.skeleton().into_iter().collect(),
            v_structures: self.v_structures().into_iter().collect(),
        }
    }

    /// Same arcs re-expressed over `target`, which must hold the same variables.
    fn remapped_onto(&self, target: &Domain) -> Result<Self> {
        if self.domain == *target {
            return Ok(self.clone());
        }
        if !target.same_variable_set(&self.domain) {
            return Err(Error::DomainMismatch);
        }
        let map: Vec<usize> = self
            .domain
            .names()
            .map(|n| target.index_of(n).unwrap())
            .collect();
        let edges: Vec<_> = self
            .edges()
            .into_iter()
            .map(|(p, c)| (map[p], map[c]))
            .collect();
        Self::from_edges(target.clone(), &edges)
    }
}

impl fmt::Display for NetworkStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let edges = self.named_edges();
        if edges.is_empty() {
            return write!(f, "(empty)");
        }
        let parts: Vec<String> = edges.iter().map(|(p, c)| format!("{p}->{c}")).collect();
        write!(f, "{}", parts.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EquivalenceKey {
    pub skeleton: Vec<(usize, usize)>,
    pub v_structures: Vec<(usize, usize, usize)>,
}

pub(crate) fn topological_order(parents: &[Vec<usize>]) -> Result<Vec<usize>> {
    let n = parents.len();
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut children = vec![Vec::new(); n];
    for (c, ps) in parents.iter().enumerate() {
        for &p in ps {
            children[p].push(c);
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &c in &children[i] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() == n {
        Ok(order)
    } else {
        Err(Error::CyclicGraph)
    }
}

/// Whether `a` and `b` belong to the same Markov equivalence class.
///
/// `b` may list the variables of `a` in a different order; any other
/// difference in variables is a `DomainMismatch`.
pub fn equivalent(a: &NetworkStructure, b: &NetworkStructure) -> Result<bool> {
    let b = b.remapped_onto(a.domain())?;
    let answer = a.equivalence_key() == b.equivalence_key();
    debug_assert_eq!(
        answer,
        reversal_search(a, &b).is_some(),
        "skeleton/v-structure test and covered-reversal search disagree"
    );
    Ok(answer)
}

/// Searches for a sequence of covered arc reversals transforming `a` into `b`.
///
/// Returns the reversed arcs in application order as `(x, y)` meaning
/// `x → y` became `y → x`, or `None` when the structures are not equivalent.
/// Each step reverses an arc `x → y` that differs from `b`, choosing `y` as the
/// earliest such head in a topological order of the current structure and `x`
/// as the latest tail into `y`; for equivalent structures that arc is always
/// covered, so a non-covered choice proves non-equivalence.
pub fn covered_reversal_sequence(
    a: &NetworkStructure,
    b: &NetworkStructure,
) -> Result<Option<Vec<(usize, usize)>>> {
    let b = b.remapped_onto(a.domain())?;
    Ok(reversal_search(a, &b))
}

fn reversal_search(a: &NetworkStructure, b: &NetworkStructure) -> Option<Vec<(usize, usize)>> {
    if a.skeleton() != b.skeleton() {
        return None;
    }
    let mut current = a.clone();
    let mut steps = Vec::new();
    loop {
        let order = current
            .topological_order()
            .expect("covered reversals preserve acyclicity");
        let mut rank = vec![0; order.len()];
        for (r, &v) in order.iter().enumerate() {
            rank[v] = r;
        }
        let differing: Vec<(usize, usize)> = current
            .edges()
            .into_iter()
            .filter(|&(x, y)| b.has_edge(y, x))
            .collect();
        let Some(y) = differing.iter().map(|&(_, y)| y).min_by_key(|&y| rank[y]) else {
            return Some(steps);
        };
        let x = differing
            .iter()
            .filter(|&&(_, c)| c == y)
            .map(|&(p, _)| p)
            .max_by_key(|&p| rank[p])
            .unwrap();
        if !current.is_covered(x, y) {
            return None;
        }
        current = current
            .with_reversed(x, y)
            .expect("reversing a covered arc cannot create a cycle");
        steps.push((x, y));
    }
}

/// Equivalence classes of structures over one domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquivalenceClass {
    pub members: Vec<NetworkStructure>,
}

impl EquivalenceClass {
    pub fn representative(&self) -> &NetworkStructure {
        &self.members[0]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Partitions `structures` into equivalence classes, in order of first appearance.
pub fn partition_equivalence(structures: &[NetworkStructure]) -> Result<Vec<EquivalenceClass>> {
    let Some(first) = structures.first() else {
        return Ok(Vec::new());
    };
    let mut slot: HashMap<EquivalenceKey, usize> = HashMap::new();
    let mut classes: Vec<EquivalenceClass> = Vec::new();
    for s in structures {
        if s.domain() != first.domain() {
            return Err(Error::DomainMismatch);
        }
        let key = s.equivalence_key();
        match slot.get(&key) {
            Some(&k) => classes[k].members.push(s.clone()),
            None => {
                slot.insert(key, classes.len());
                classes.push(EquivalenceClass {
                    members: vec![s.clone()],
                });
            }
        }
    }
    Ok(classes)
}

/// Every labeled DAG over `domain`, each exactly once. Capped at
/// [`DEFAULT_ENUMERATION_CAP`] variables.
pub fn enumerate_dags(domain: &Domain) -> Result<Vec<NetworkStructure>> {
    enumerate_dags_capped(domain, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_dags_capped(domain: &Domain, cap: usize) -> Result<Vec<NetworkStructure>> {
    let n = domain.len();
    if n > cap {
        return Err(Error::DomainTooLarge { n, cap });
    }
    // Backtrack over parent bitmasks variable by variable; a partial
    // assignment is abandoned as soon as it contains a cycle.
    let mut masks = vec![0u32; n];
    let mut out = Vec::new();
    enumerate_rec(domain, 0, &mut masks, &mut out);
    Ok(out)
}

fn enumerate_rec(domain: &Domain, i: usize, masks: &mut [u32], out: &mut Vec<NetworkStructure>) {
    let n = masks.len();
    if i == n {
        let parents = masks
            .iter()
            .map(|&m| (0..n).filter(|&j| m & (1 << j) != 0).collect())
            .collect();
        out.push(NetworkStructure {
            domain: domain.clone(),
            parents,
        });
        return;
    }
    let others = ((1u32 << n) - 1) & !(1 << i);
    // Submasks of `others` in increasing order.
    let mut sub = 0u32;
    loop {
        masks[i] = sub;
        if mask_graph_acyclic(masks) {
            enumerate_rec(domain, i + 1, masks, out);
        }
        if sub == others {
            break;
        }
        sub = (sub.wrapping_sub(others)) & others;
    }
    masks[i] = 0;
}

fn mask_graph_acyclic(masks: &[u32]) -> bool {
    let n = masks.len();
    let mut remaining: u32 = (1 << n) - 1;
    loop {
        let sources = (0..n)
            .filter(|&v| remaining & (1 << v) != 0 && masks[v] & remaining == 0)
            .fold(0u32, |acc, v| acc | (1 << v));
        if sources == 0 {
            return remaining == 0;
        }
        remaining &= !sources;
    }
}

/// Number of labeled DAGs on `n` nodes (Robinson's recurrence).
pub fn count_dags(n: usize) -> BigUint {
    let mut a: Vec<BigInt> = vec![BigInt::from(1)];
    for m in 1..=n {
        let mut total = BigInt::from(0);
        let mut binom = BigInt::from(1);
        for k in 1..=m {
            binom = binom * BigInt::from(m - k + 1) / BigInt::from(k);
            let term = &binom * (BigInt::from(1) << (k * (m - k))) * &a[m - k];
            if k % 2 == 1 {
                total += term;
            } else {
                total -= term;
            }
        }
        a.push(total);
    }
    a[n].to_biguint().expect("DAG counts are positive")
}

/// Natural log of [`count_dags`].
pub fn ln_count_dags(n: usize) -> f64 {
    let c = count_dags(n);
    let bits = c.bits();
    if bits <= 1000 {
        let digits: f64 = c.to_string().parse().unwrap();
        return digits.ln();
    }
    let shift = bits - 64;
    let top: u64 = (&c >> shift).try_into().unwrap();
    (top as f64).ln() + shift as f64 * std::f64::consts::LN_2
}
