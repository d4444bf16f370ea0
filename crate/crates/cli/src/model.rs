//! Model-pair selection from flags or a `[model]` config section.

use clap::{Args, ValueEnum};
use halford::error::HalfordError;
use halford::families::{
    make_beta_unit_pair, make_binomial_pair, make_counterexample_pair, make_discrete_pair,
    make_identical_pair, BetaUnitSpec, BinomialPointNullSpec, DiscretePairSpec, ModelPair,
    PowerCounterexampleSpec,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Binomial point null against a Beta prior.
    Binomial,
    /// Binomial pair whose H1 simulator uses a different Beta prior.
    BinomialMismatch,
    /// Beta(a, 1) against Uniform(0, 1).
    BetaUnit,
    /// Power-family pair with an infinite moment at `2 t_star`.
    Counterexample,
    /// Two copies of Uniform(0, 1).
    Identical,
    /// Two user-supplied probability vectors.
    Discrete,
}

/// Model flags. Every field is optional so a config file can supply it.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub family: Option<Family>,
    /// Binomial trial count.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n: Option<u64>,
    /// Beta(a, 1) shape.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub a: Option<f64>,
    /// Point-null success probability.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub theta0: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub prior_alpha: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub prior_beta: Option<f64>,
    /// H1 simulator prior (binomial-mismatch).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sim_alpha: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sim_beta: Option<f64>,
    /// Exponent whose check the counterexample breaks.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub t_star: Option<f64>,
    /// Comma-separated probabilities for the discrete family.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p1: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p2: Option<Vec<f64>>,
}

impl ModelArgs {
    /// Fields set in `self` win over `other`.
    pub fn or(self, other: ModelArgs) -> ModelArgs {
        ModelArgs {
            family: self.family.or(other.family),
            n: self.n.or(other.n),
            a: self.a.or(other.a),
            theta0: self.theta0.or(other.theta0),
            prior_alpha: self.prior_alpha.or(other.prior_alpha),
            prior_beta: self.prior_beta.or(other.prior_beta),
            sim_alpha: self.sim_alpha.or(other.sim_alpha),
            sim_beta: self.sim_beta.or(other.sim_beta),
            t_star: self.t_star.or(other.t_star),
            p1: self.p1.or(other.p1),
            p2: self.p2.or(other.p2),
        }
    }

    /// Fills family defaults and drops parameters the family does not use.
    pub fn resolve(&self) -> Result<ModelArgs, HalfordError> {
        let family = self.family.ok_or_else(|| {
            HalfordError::Input("no model given (use --family or a [model] section)".into())
        })?;
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| {
                HalfordError::Input(format!("family `{}` needs --{name}", family_name(family)))
            })
        };
        let mut r = ModelArgs {
            family: Some(family),
            ..Default::default()
        };
        match family {
            Family::Binomial | Family::BinomialMismatch => {
                r.n = Some(self.n.unwrap_or(10));
                r.theta0 = Some(self.theta0.unwrap_or(0.5));
                r.prior_alpha = Some(self.prior_alpha.unwrap_or(1.0));
                r.prior_beta = Some(self.prior_beta.unwrap_or(1.0));
                if family == Family::BinomialMismatch {
                    r.sim_alpha = Some(self.sim_alpha.unwrap_or(1.2));
                    r.sim_beta = Some(self.sim_beta.unwrap_or(1.2));
                }
            }
            Family::BetaUnit => r.a = Some(need(self.a, "a")?),
            Family::Counterexample => r.t_star = Some(self.t_star.unwrap_or(1.0)),
            Family::Identical => {}
            Family::Discrete => {
                let missing =
                    || HalfordError::Input("family `discrete` needs --p1 and --p2".into());
                r.p1 = Some(self.p1.clone().ok_or_else(missing)?);
                r.p2 = Some(self.p2.clone().ok_or_else(missing)?);
            }
        }
        Ok(r)
    }

    /// Builds the pair from resolved arguments.
    pub fn build(&self) -> Result<ModelPair, HalfordError> {
        let r = self.resolve()?;
        match r.family.expect("resolved") {
            Family::Binomial | Family::BinomialMismatch => {
                let mut spec = BinomialPointNullSpec::uniform(r.n.unwrap());
                spec.theta0 = r.theta0.unwrap();
                spec.alpha = r.prior_alpha.unwrap();
                spec.beta = r.prior_beta.unwrap();
                if let (Some(sa), Some(sb)) = (r.sim_alpha, r.sim_beta) {
                    spec = spec.with_simulator(sa, sb);
                }
                make_binomial_pair(&spec)
            }
            Family::BetaUnit => make_beta_unit_pair(&BetaUnitSpec { a: r.a.unwrap() }),
            Family::Counterexample => {
                make_counterexample_pair(&PowerCounterexampleSpec::for_exponent(r.t_star.unwrap()))
            }
            Family::Identical => Ok(make_identical_pair()),
            Family::Discrete => make_discrete_pair(&DiscretePairSpec {
                p1: r.p1.unwrap(),
                p2: r.p2.unwrap(),
            }),
        }
    }
}

fn family_name(f: Family) -> String {
    f.to_possible_value()
        .map(|v| v.get_name().to_string())
        .unwrap_or_default()
}
