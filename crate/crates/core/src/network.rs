//! Network files: structure, optional parameters and prior settings as JSON.
//!
//! ```json
//! {
//!   "variables": [
//!     {"name": "a", "type": "discrete", "states": ["lo", "hi"]},
//!     {"name": "y", "type": "continuous"}
//!   ],
//!   "edges": [["a", "b"]],
//!   "parameters": {
//!     "a": {"cpt": [[0.3, 0.7]]},
//!     "y": {"gaussian": {"m": 0.0, "v": 1.0, "b": {"x": 0.5}}}
//!   },
//!   "prior": {"ess": 10.0, "n_mu": 1.0, "n_t": 5.0, "t0_convention": "expectation"}
//! }
//! ```
//!
//! CPT rows follow the parent-configuration order of
//! [`Database::configuration_indices`]: parents sorted by variable index,
//! lowest index varying fastest. A file without `edges` doubles as a schema.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{configuration_count, Column, Database};
use crate::discrete::DirichletPriorSpec;
use crate::error::{Error, Result};
use crate::gaussian::{
    prior_from_gaussian_network, GaussianNetParams, NormalWishartPriorSpec, T0Convention,
};
use crate::graph::{Domain, NetworkStructure, Variable, VariableKind};

/// Local distribution of one variable.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalParams {
    /// One probability row per parent configuration.
    Cpt(Vec<Vec<f64>>),
    /// `x = m + Σ b_j x_j + √v · z`; `b` is keyed by parent index.
    Gaussian {
        m: f64,
        v: f64,
        b: BTreeMap<usize, f64>,
    },
}

/// Equivalent sample sizes and conventions stored with a prior network.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PriorSettings {
    pub ess: Option<f64>,
    pub n_mu: Option<f64>,
    pub n_t: Option<f64>,
    pub t0_convention: Option<T0Convention>,
}

/// A structure with optional per-variable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    structure: NetworkStructure,
    parameters: Vec<Option<LocalParams>>,
    prior: PriorSettings,
}

impl Network {
    pub fn new(structure: NetworkStructure) -> Self {
        let n = structure.len();
        Self {
            structure,
            parameters: vec![None; n],
            prior: PriorSettings::default(),
        }
    }

    pub fn with_parameters(mut self, var: usize, params: LocalParams) -> Result<Self> {
        if var >= self.parameters.len() {
            return Err(Error::IndexOutOfRange(var));
        }
        self.parameters[var] = Some(params);
        self.validate()?;
        Ok(self)
    }

    pub fn with_prior_settings(mut self, prior: PriorSettings) -> Self {
        self.prior = prior;
        self
    }

    pub fn structure(&self) -> &NetworkStructure {
        &self.structure
    }

    pub fn domain(&self) -> &Domain {
        self.structure.domain()
    }

    pub fn parameters(&self, var: usize) -> Option<&LocalParams> {
        self.parameters[var].as_ref()
    }

    pub fn prior_settings(&self) -> &PriorSettings {
        &self.prior
    }

    pub fn is_parameterized(&self) -> bool {
        self.parameters.iter().all(Option::is_some)
    }

    fn validate(&self) -> Result<()> {
        let domain = self.domain();
        for (i, p) in self.parameters.iter().enumerate() {
            let var = domain.variable(i);
            let parents = self.structure.parents(i);
            match (p, var.kind()) {
                (None, _) => {}
                (Some(LocalParams::Cpt(rows)), VariableKind::Discrete { states }) => {
                    let q = configuration_count(domain, parents).map_err(|_| {
                        Error::InvalidCpt {
                            variable: var.name().to_string(),
                            detail: "a discrete variable cannot have continuous parents".into(),
                        }
                    })?;
                    if rows.len() != q {
                        return Err(Error::InvalidCpt {
                            variable: var.name().to_string(),
                            detail: format!("expected {q} rows, found {}", rows.len()),
                        });
                    }
                    for row in rows {
                        let sum: f64 = row.iter().sum();
                        if row.len() != states.len()
                            || row.iter().any(|p| !(0.0..=1.0).contains(p))
                            || (sum - 1.0).abs() > 1e-9
                        {
                            return Err(Error::InvalidCpt {
                                variable: var.name().to_string(),
                                detail: format!("row {row:?} is not a distribution over {} states", states.len()),
                            });
                        }
                    }
                }
                (Some(LocalParams::Gaussian { m, v, b }), VariableKind::Continuous) => {
                    if !(*v >= crate::gaussian::MIN_VARIANCE && v.is_finite()) {
                        return Err(Error::NonPositiveVariance(*v));
                    }
                    if !m.is_finite() || b.values().any(|x| !x.is_finite()) {
                        return Err(Error::InvalidNetwork(format!(
                            "non-finite Gaussian parameter for {}",
                            var.name()
                        )));
                    }
                    if let Some(p) = b.keys().find(|&&p| !self.structure.has_edge(p, i)) {
                        return Err(Error::InvalidNetwork(format!(
                            "coefficient for {} -> {} but the arc is missing",
                            domain.variable(*p).name(),
                            var.name()
                        )));
                    }
                    if let Some(&p) = parents.iter().find(|&&p| domain.variable(p).is_discrete()) {
                        return Err(Error::InvalidNetwork(format!(
                            "continuous {} has discrete parent {}; only continuous parents can be parameterized",
                            var.name(),
                            domain.variable(p).name()
                        )));
                    }
                }
                (Some(_), _) => {
                    return Err(Error::TypeMismatch(format!(
                        "parameters for {} do not match its type",
                        var.name()
                    )))
                }
            }
        }
        Ok(())
    }

    fn require_params(&self, i: usize) -> Result<&LocalParams> {
        self.parameters[i]
            .as_ref()
            .ok_or_else(|| Error::UnparameterizedNetwork(self.domain().variable(i).name().to_string()))
    }

    /// Indices of the discrete (resp. continuous) variables.
    fn split(&self) -> (Vec<usize>, Vec<usize>) {
        let d = self.domain();
        (0..d.len()).partition(|&i| d.variable(i).is_discrete())
    }

    /// Sub-structure on `keep`; fails if an arc enters `keep` from outside.
    fn sub_structure(&self, keep: &[usize]) -> Result<NetworkStructure> {
        let domain = self.domain().select(keep)?;
        let mut pos = vec![usize::MAX; self.domain().len()];
        for (k, &i) in keep.iter().enumerate() {
            pos[i] = k;
        }
        let mut parents = Vec::with_capacity(keep.len());
        for &i in keep {
            let mut pa = Vec::new();
            for &p in self.structure.parents(i) {
                if pos[p] == usize::MAX {
                    let (parent, child) = (self.domain().variable(p).name(), self.domain().variable(i));
                    if child.is_discrete() {
                        return Err(Error::IllegalMixedStructure {
                            parent: parent.to_string(),
                            child: child.name().to_string(),
                        });
                    }
                    return Err(Error::InvalidNetwork(format!(
                        "continuous variable `{}` has discrete parent `{parent}`; \
                         a Gaussian prior network needs continuous parents only",
                        child.name()
                    )));
                }
                pa.push(pos[p]);
            }
            parents.push(pa);
        }
        NetworkStructure::new(domain, parents)
    }

    /// Dirichlet prior from the discrete part of this network.
    pub fn dirichlet_prior(&self, ess: f64) -> Result<DirichletPriorSpec> {
        let (disc, _) = self.split();
        let s = self.sub_structure(&disc)?;
        let cpts = disc
            .iter()
            .map(|&i| match self.require_params(i)? {
                LocalParams::Cpt(rows) => Ok(rows.clone()),
                LocalParams::Gaussian { .. } => unreachable!("validated"),
            })
            .collect::<Result<Vec<_>>>()?;
        DirichletPriorSpec::new(s, cpts, ess)
    }

    /// Regression parameters of the continuous part of this network.
    pub fn gaussian_params(&self) -> Result<GaussianNetParams> {
        let (_, cont) = self.split();
        let s = self.sub_structure(&cont)?;
        let mut m = Vec::new();
        let mut v = Vec::new();
        let mut arcs = Vec::new();
        for (k, &i) in cont.iter().enumerate() {
            let LocalParams::Gaussian { m: mi, v: vi, b } = self.require_params(i)? else {
                unreachable!("validated")
            };
            m.push(*mi);
            v.push(*vi);
            for (&p, &coef) in b {
                let pk = cont.iter().position(|&c| c == p).expect("continuous parent");
                arcs.push((pk, k, coef));
            }
        }
        GaussianNetParams::for_structure(&s, &m, &v, &arcs)
    }

    /// Normal-Wishart prior over the continuous variables, matched to the
    /// Gaussian part of this network.
    pub fn normal_wishart_prior(
        &self,
        n_mu: f64,
        n_t: f64,
        convention: T0Convention,
    ) -> Result<NormalWishartPriorSpec> {
        prior_from_gaussian_network(&self.gaussian_params()?, n_mu, n_t, convention)
    }

    /// `m` cases by ancestral sampling.
    pub fn sample(&self, m: usize, rng: &mut impl Rng) -> Result<Database> {
        let n = self.domain().len();
        for i in 0..n {
            self.require_params(i)?;
        }
        let order = self.structure.topological_order()?;
        let mut columns: Vec<Column> = (0..n)
            .map(|i| {
                if self.domain().variable(i).is_discrete() {
                    Column::Discrete(Vec::with_capacity(m))
                } else {
                    Column::Continuous(Vec::with_capacity(m))
                }
            })
            .collect();
        let mut state = vec![0usize; n];
        let mut real = vec![0f64; n];
        for _ in 0..m {
            for &i in &order {
                match self.parameters[i].as_ref().expect("checked") {
                    LocalParams::Cpt(rows) => {
                        let mut j = 0;
                        for &p in self.structure.parents(i).iter().rev() {
                            j = j * self.domain().variable(p).arity().expect("discrete") + state[p];
                        }
                        let u: f64 = rng.random();
                        let row = &rows[j];
                        let mut acc = 0.0;
                        let mut k = row.len() - 1;
                        for (s, &p) in row.iter().enumerate() {
                            acc += p;
                            if u < acc {
                                k = s;
                                break;
                            }
                        }
                        state[i] = k;
                    }
                    LocalParams::Gaussian { m, v, b } => {
                        let z: f64 = rng.sample(StandardNormal);
                        real[i] = m + b.iter().map(|(&p, &c)| c * real[p]).sum::<f64>() + v.sqrt() * z;
                    }
                }
            }
            for (i, col) in columns.iter_mut().enumerate() {
                match col {
                    Column::Discrete(c) => c.push(state[i]),
                    Column::Continuous(c) => c.push(real[i]),
                }
            }
        }
        Database::new(self.domain().clone(), columns)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawNetwork = serde_json::from_str(text)?;
        raw.into_network()
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&RawNetwork::from_network(self)).expect("network serializes")
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path, self.to_json_string() + "\n")?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    variables: Vec<RawVariable>,
    #[serde(default)]
    edges: Vec<[String; 2]>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    parameters: BTreeMap<String, RawParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prior: Option<RawPrior>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVariable {
    name: String,
    #[serde(rename = "type")]
    kind: RawKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    states: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum RawKind {
    Discrete,
    Continuous,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
enum RawParams {
    Cpt(Vec<Vec<f64>>),
    Gaussian {
        m: f64,
        v: f64,
        #[serde(default)]
        b: BTreeMap<String, f64>,
    },
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawPrior {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ess: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t0_convention: Option<RawConvention>,
}

#[derive(Serialize, Deserialize, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum RawConvention {
    Expectation,
    PredictiveCovariance,
}

impl RawNetwork {
    fn into_network(self) -> Result<Network> {
        let vars = self
            .variables
            .into_iter()
            .map(|v| match (v.kind, v.states) {
                (RawKind::Discrete, Some(states)) => Variable::discrete(v.name, states),
                (RawKind::Discrete, None) => Err(Error::InvalidDomain(format!(
                    "discrete variable {} has no states",
                    v.name
                ))),
                (RawKind::Continuous, None) => Ok(Variable::continuous(v.name)),
                (RawKind::Continuous, Some(_)) => Err(Error::InvalidDomain(format!(
                    "continuous variable {} lists states",
                    v.name
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        let domain = Domain::new(vars)?;
        let edges: Vec<(&str, &str)> = self.edges.iter().map(|[a, b]| (a.as_str(), b.as_str())).collect();
        let structure = NetworkStructure::from_named_edges(domain.clone(), &edges)?;
        let mut net = Network::new(structure);
        for (name, p) in self.parameters {
            let i = domain.require_index(&name)?;
            let params = match p {
                RawParams::Cpt(rows) => LocalParams::Cpt(rows),
                RawParams::Gaussian { m, v, b } => LocalParams::Gaussian {
                    m,
                    v,
                    b: b
                        .into_iter()
                        .map(|(k, c)| Ok((domain.require_index(&k)?, c)))
                        .collect::<Result<_>>()?,
                },
            };
            net.parameters[i] = Some(params);
        }
        net.validate()?;
        if let Some(p) = self.prior {
            net.prior = PriorSettings {
                ess: p.ess,
                n_mu: p.n_mu,
                n_t: p.n_t,
                t0_convention: p.t0_convention.map(|c| match c {
                    RawConvention::Expectation => T0Convention::Expectation,
                    RawConvention::PredictiveCovariance => T0Convention::PredictiveCovariance,
                }),
            };
        }
        Ok(net)
    }

    fn from_network(net: &Network) -> Self {
        let domain = net.domain();
        let name = |i: usize| domain.variable(i).name().to_string();
        let variables = domain
            .variables()
            .iter()
            .map(|v| RawVariable {
                name: v.name().to_string(),
                kind: if v.is_discrete() { RawKind::Discrete } else { RawKind::Continuous },
                states: v.states().map(<[String]>::to_vec),
            })
            .collect();
        let edges = net.structure.edges().into_iter().map(|(p, c)| [name(p), name(c)]).collect();
        let parameters = net
            .parameters
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                let raw = match p.as_ref()? {
                    LocalParams::Cpt(rows) => RawParams::Cpt(rows.clone()),
                    LocalParams::Gaussian { m, v, b } => RawParams::Gaussian {
                        m: *m,
                        v: *v,
                        b: b.iter().map(|(&p, &c)| (name(p), c)).collect(),
                    },
                };
                Some((name(i), raw))
            })
            .collect();
        let p = net.prior;
        let prior = (p != PriorSettings::default()).then(|| RawPrior {
            ess: p.ess,
            n_mu: p.n_mu,
            n_t: p.n_t,
            t0_convention: p.t0_convention.map(|c| match c {
                T0Convention::Expectation => RawConvention::Expectation,
                T0Convention::PredictiveCovariance => RawConvention::PredictiveCovariance,
            }),
        });
        Self {
            variables,
            edges,
            parameters,
            prior,
        }
    }
}

/// Covariance implied by the Gaussian part of a network, in the order of its
/// continuous variables.
pub fn implied_covariance(net: &Network) -> Result<DMatrix<f64>> {
    net.gaussian_params()?.covariance()
}
