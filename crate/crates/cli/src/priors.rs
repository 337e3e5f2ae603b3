//! Turning `--prior` files and prior flags into a bound metric.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use bnscore::dataset::Database;
use bnscore::discrete::DirichletPriorSpec;
use bnscore::gaussian::{
    prior_from_gaussian_network, GaussianNetParams, NormalWishartPriorSpec, SubsetDof, T0Convention,
};
use bnscore::graph::{Domain, NetworkStructure};
use bnscore::network::{Network, PriorSettings};
use bnscore::scoring::{BdeMetric, BgeMetric, LocalScore, Metric, MixedMetric, UniformGaussianFamily};
use clap::{Args, ValueEnum};

const DEFAULT_ESS: f64 = 1.0;
const DEFAULT_N_MU: f64 = 1.0;

#[derive(Clone, Copy, ValueEnum)]
pub enum T0Arg {
    Expectation,
    PredictiveCovariance,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum DofArg {
    Unchanged,
    Marginalized,
}

#[derive(Args)]
pub struct PriorArgs {
    /// Parameterized prior network; without it the priors are uninformative.
    #[arg(long, short)]
    prior: Option<PathBuf>,
    /// Equivalent sample size N' for discrete variables.
    #[arg(long)]
    ess: Option<f64>,
    /// N'_mu for continuous variables.
    #[arg(long)]
    n_mu: Option<f64>,
    /// N'_T for continuous variables (default: number of continuous variables + 2).
    #[arg(long)]
    n_t: Option<f64>,
    #[arg(long, value_enum)]
    t0_convention: Option<T0Arg>,
    /// Wishart degrees of freedom on variable subsets (all-continuous domains only).
    #[arg(long, value_enum)]
    subset_dof: Option<DofArg>,
    /// Floor prior-network joint probabilities at this value, then renormalize.
    #[arg(long)]
    floor: Option<f64>,
}

impl PriorArgs {
    /// Reads the prior network, if any, and checks it against `domain`.
    pub fn resolve(&self, domain: &Domain) -> Result<Box<dyn Metric>> {
        let prior_net = match &self.prior {
            Some(path) => {
                let net = Network::load(path).with_context(|| path.display().to_string())?;
                if net.domain() != domain {
                    bail!(
                        "{}: prior network variables do not match the scored domain",
                        path.display()
                    );
                }
                Some(net)
            }
            None => None,
        };
        let file_settings = prior_net.as_ref().map(|n| *n.prior_settings()).unwrap_or_default();
        let settings = self.merge(file_settings);
        let ctx = || match &self.prior {
            Some(p) => p.display().to_string(),
            None => "prior".to_string(),
        };
        self.build(domain, prior_net.as_ref(), &settings).with_context(ctx)
    }

    fn merge(&self, file: PriorSettings) -> PriorSettings {
        PriorSettings {
            ess: self.ess.or(file.ess),
            n_mu: self.n_mu.or(file.n_mu),
            n_t: self.n_t.or(file.n_t),
            t0_convention: self
                .t0_convention
                .map(|c| match c {
                    T0Arg::Expectation => T0Convention::Expectation,
                    T0Arg::PredictiveCovariance => T0Convention::PredictiveCovariance,
                })
                .or(file.t0_convention),
        }
    }

    fn build(&self, domain: &Domain, net: Option<&Network>, s: &PriorSettings) -> Result<Box<dyn Metric>> {
        let discrete = self.discrete_spec(domain, net, s)?;
        let gaussian = continuous_spec(domain, net, s)?;
        let dof = match self.subset_dof {
            None | Some(DofArg::Unchanged) => SubsetDof::Unchanged,
            Some(DofArg::Marginalized) => SubsetDof::Marginalized,
        };
        if domain.all_discrete() {
            return Ok(Box::new(BdeMetric {
                spec: discrete.expect("discrete domain"),
            }));
        }
        if domain.all_continuous() {
            return Ok(Box::new(BgeMetric {
                prior: gaussian.expect("continuous domain"),
                dof,
            }));
        }
        if self.subset_dof.is_some() {
            bail!("--subset-dof applies only to all-continuous domains");
        }
        Ok(Box::new(MixedMetric {
            discrete,
            family: Arc::new(UniformGaussianFamily(gaussian.expect("has continuous variables"))),
        }))
    }

    fn discrete_spec(
        &self,
        domain: &Domain,
        net: Option<&Network>,
        s: &PriorSettings,
    ) -> Result<Option<DirichletPriorSpec>> {
        let idx: Vec<usize> = (0..domain.len()).filter(|&i| domain.variable(i).is_discrete()).collect();
        if idx.is_empty() {
            if self.floor.is_some() || self.ess.is_some() {
                bail!("--ess and --floor need discrete variables");
            }
            return Ok(None);
        }
        let ess = s.ess.unwrap_or(DEFAULT_ESS);
        let spec = match net {
            Some(n) => n.dirichlet_prior(ess)?,
            None => DirichletPriorSpec::uniform(domain.select(&idx)?, ess)?,
        };
        Ok(Some(match self.floor {
            Some(eps) => spec.with_floor(eps)?,
            None => spec,
        }))
    }
}

fn continuous_spec(
    domain: &Domain,
    net: Option<&Network>,
    s: &PriorSettings,
) -> Result<Option<NormalWishartPriorSpec>> {
    let idx: Vec<usize> = (0..domain.len()).filter(|&i| !domain.variable(i).is_discrete()).collect();
    if idx.is_empty() {
        return Ok(None);
    }
    let n_mu = s.n_mu.unwrap_or(DEFAULT_N_MU);
    let n_t = s.n_t.unwrap_or(idx.len() as f64 + 2.0);
    let conv = s.t0_convention.unwrap_or_default();
    let spec = match net {
        Some(n) => n.normal_wishart_prior(n_mu, n_t, conv)?,
        None => {
            // Independent standard normals as the prior network.
            let sub = domain.select(&idx)?;
            let k = idx.len();
            let pn = GaussianNetParams::for_structure(&NetworkStructure::empty(sub), &vec![0.0; k], &vec![1.0; k], &[])?;
            prior_from_gaussian_network(&pn, n_mu, n_t, conv)?
        }
    };
    Ok(Some(spec))
}

/// Binds `metric` to `d`.
pub fn bind<'a>(metric: &'a dyn Metric, d: &'a Database) -> Result<Box<dyn LocalScore + 'a>> {
    Ok(metric.bind(d)?)
}
