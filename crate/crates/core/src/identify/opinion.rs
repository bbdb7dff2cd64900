//! Multinomial subjective-logic opinions over candidate device identities.
//!
//! An opinion assigns belief mass to each hypothesis plus an uncertainty mass,
//! with `sum(belief) + uncertainty = 1`. Disbelief in a hypothesis is the
//! belief mass sitting on its competitors. Base rates are the priors used when
//! projecting an opinion onto probabilities.

use std::collections::{BTreeMap, BTreeSet};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::IdentifyError;
use crate::model::{ModelIdentity, ModelKey};

/// Tolerance on the additivity constraints.
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Hypothesis {
    pub identity: ModelIdentity,
    pub belief: f64,
    pub base_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(try_from = "OpinionRepr", into = "OpinionRepr")]
pub struct Opinion {
    hypotheses: Vec<Hypothesis>,
    uncertainty: f64,
}

#[derive(Serialize, Deserialize, JsonSchema)]
#[schemars(rename = "Opinion")]
struct OpinionRepr {
    hypotheses: Vec<Hypothesis>,
    uncertainty: f64,
}

impl TryFrom<OpinionRepr> for Opinion {
    type Error = IdentifyError;

    fn try_from(repr: OpinionRepr) -> Result<Self, Self::Error> {
        Opinion::new(repr.hypotheses, repr.uncertainty)
    }
}

impl From<Opinion> for OpinionRepr {
    fn from(o: Opinion) -> Self {
        OpinionRepr { hypotheses: o.hypotheses, uncertainty: o.uncertainty }
    }
}

fn in_unit(x: f64) -> bool {
    (-MASS_TOLERANCE..=1.0 + MASS_TOLERANCE).contains(&x)
}

impl Opinion {
    /// Validates additivity: belief masses plus uncertainty sum to one, and
    /// base rates sum to one whenever there is at least one hypothesis.
    pub fn new(hypotheses: Vec<Hypothesis>, uncertainty: f64) -> Result<Self, IdentifyError> {
        let invalid = |msg: String| Err(IdentifyError::InvalidOpinion(msg));
        if !in_unit(uncertainty) {
            return invalid(format!("uncertainty {uncertainty} outside [0, 1]"));
        }
        let mut seen = BTreeSet::new();
        for h in &hypotheses {
            if !seen.insert(&h.identity) {
                return invalid(format!("duplicate hypothesis {}", h.identity));
            }
            if !in_unit(h.belief) || !in_unit(h.base_rate) {
                return invalid(format!("masses for {} outside [0, 1]", h.identity));
            }
        }
        let belief: f64 = hypotheses.iter().map(|h| h.belief).sum();
        if (belief + uncertainty - 1.0).abs() > MASS_TOLERANCE {
            return invalid(format!("belief {belief} + uncertainty {uncertainty} != 1"));
        }
        if !hypotheses.is_empty() {
            let rates: f64 = hypotheses.iter().map(|h| h.base_rate).sum();
            if (rates - 1.0).abs() > MASS_TOLERANCE {
                return invalid(format!("base rates sum to {rates}"));
            }
        }
        // values just outside [0, 1] by rounding would break the fusion
        // denominator, so they are pinned to the boundary
        let hypotheses = hypotheses
            .into_iter()
            .map(|h| Hypothesis { belief: h.belief.clamp(0.0, 1.0), base_rate: h.base_rate.clamp(0.0, 1.0), ..h })
            .collect();
        Ok(Self { hypotheses, uncertainty: uncertainty.clamp(0.0, 1.0) })
    }

    /// No evidence at all: uncertainty one, empty hypothesis set.
    pub fn vacuous() -> Self {
        Self { hypotheses: Vec::new(), uncertainty: 1.0 }
    }

    /// No evidence over a known set of candidates with uniform base rates.
    pub fn vacuous_over(identities: impl IntoIterator<Item = ModelIdentity>) -> Self {
        let ids: BTreeSet<_> = identities.into_iter().collect();
        let rate = 1.0 / ids.len().max(1) as f64;
        Self {
            hypotheses: ids
                .into_iter()
                .map(|identity| Hypothesis { identity, belief: 0.0, base_rate: rate })
                .collect(),
            uncertainty: 1.0,
        }
    }

    /// Builds an opinion whose belief masses are proportional to `weights`
    /// and sum to `total_belief`; the rest is uncertainty. Base rates are
    /// uniform. Non-positive weights are dropped; an empty set yields the
    /// vacuous opinion.
    pub fn from_weights(weights: BTreeMap<ModelIdentity, f64>, total_belief: f64) -> Self {
        let weights: Vec<_> = weights.into_iter().filter(|(_, w)| *w > 0.0).collect();
        let sum: f64 = weights.iter().map(|(_, w)| w).sum();
        if weights.is_empty() || sum <= 0.0 || total_belief <= 0.0 {
            return Self::vacuous();
        }
        let total_belief = total_belief.min(1.0);
        let rate = 1.0 / weights.len() as f64;
        let hypotheses: Vec<_> = weights
            .into_iter()
            .map(|(identity, w)| Hypothesis { identity, belief: total_belief * w / sum, base_rate: rate })
            .collect();
        let belief: f64 = hypotheses.iter().map(|h| h.belief).sum();
        Self { hypotheses, uncertainty: (1.0 - belief).max(0.0) }
    }

    pub fn hypotheses(&self) -> &[Hypothesis] {
        &self.hypotheses
    }

    pub fn uncertainty(&self) -> f64 {
        self.uncertainty
    }

    pub fn is_vacuous(&self) -> bool {
        self.uncertainty == 1.0
    }

    pub fn is_dogmatic(&self) -> bool {
        self.uncertainty == 0.0
    }

    fn get(&self, identity: &ModelIdentity) -> Option<&Hypothesis> {
        self.hypotheses.iter().find(|h| &h.identity == identity)
    }

    pub fn belief(&self, identity: &ModelIdentity) -> f64 {
        self.get(identity).map_or(0.0, |h| h.belief)
    }

    pub fn base_rate(&self, identity: &ModelIdentity) -> f64 {
        self.get(identity).map_or(0.0, |h| h.base_rate)
    }

    pub fn total_belief(&self) -> f64 {
        self.hypotheses.iter().map(|h| h.belief).sum()
    }

    /// Projected probability `P(x) = b(x) + a(x) * u`.
    pub fn projected(&self, identity: &ModelIdentity) -> f64 {
        self.get(identity).map_or(0.0, |h| h.belief + h.base_rate * self.uncertainty)
    }

    /// Merges all firmware-specific hypotheses of the same model into one
    /// wildcard-firmware hypothesis, summing belief and base rate.
    pub fn coarsen_to_models(&self) -> Opinion {
        let mut grouped: BTreeMap<ModelKey, (f64, f64)> = BTreeMap::new();
        for h in &self.hypotheses {
            let entry = grouped.entry(h.identity.key()).or_default();
            entry.0 += h.belief;
            entry.1 += h.base_rate;
        }
        Opinion {
            hypotheses: grouped
                .into_iter()
                .map(|(key, (belief, base_rate))| Hypothesis {
                    identity: ModelIdentity::any_firmware(&key),
                    belief,
                    base_rate,
                })
                .collect(),
            uncertainty: self.uncertainty,
        }
    }
}

/// Base rates over the union domain. An opinion with no hypotheses carries no
/// prior information and is ignored; otherwise rates are averaged, with a
/// missing hypothesis counting as rate zero.
fn reconcile_base_rates(a: &Opinion, b: &Opinion, domain: &BTreeSet<ModelIdentity>) -> BTreeMap<ModelIdentity, f64> {
    domain
        .iter()
        .map(|id| {
            let rate = match (a.hypotheses.is_empty(), b.hypotheses.is_empty()) {
                (true, _) => b.base_rate(id),
                (_, true) => a.base_rate(id),
                _ => (a.base_rate(id) + b.base_rate(id)) / 2.0,
            };
            (id.clone(), rate)
        })
        .collect()
}

/// Cumulative fusion of two opinions built from independent evidence.
///
/// `b(x) = (b_a(x) u_b + b_b(x) u_a) / k`, `u = u_a u_b / k`, with
/// `k = u_a + u_b - u_a u_b`. When both opinions are dogmatic (`k = 0`) the
/// equal-weight limit `b(x) = (b_a(x) + b_b(x)) / 2`, `u = 0` is used.
pub fn fuse_opinions(a: &Opinion, b: &Opinion) -> Result<Opinion, IdentifyError> {
    let domain: BTreeSet<ModelIdentity> = a
        .hypotheses
        .iter()
        .chain(&b.hypotheses)
        .map(|h| h.identity.clone())
        .collect();
    let rates = reconcile_base_rates(a, b, &domain);
    if !domain.is_empty() {
        let sum: f64 = rates.values().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(IdentifyError::DomainMismatch(format!(
                "reconciled base rates sum to {sum}"
            )));
        }
    }

    let (ua, ub) = (a.uncertainty, b.uncertainty);
    let build = |belief_of: &dyn Fn(&ModelIdentity) -> f64, uncertainty: f64| Opinion {
        hypotheses: domain
            .iter()
            .map(|id| Hypothesis { identity: id.clone(), belief: belief_of(id), base_rate: rates[id] })
            .collect(),
        uncertainty,
    };

    // The vacuous opinion is the neutral element; returning the other side
    // directly keeps the identity exact instead of within rounding.
    if b.is_vacuous() {
        return Ok(build(&|id| a.belief(id), ua));
    }
    if a.is_vacuous() {
        return Ok(build(&|id| b.belief(id), ub));
    }

    let kappa = ua + ub - ua * ub;
    if kappa <= 0.0 {
        return Ok(build(&|id| (a.belief(id) + b.belief(id)) / 2.0, 0.0));
    }
    Ok(build(&|id| (a.belief(id) * ub + b.belief(id) * ua) / kappa, ua * ub / kappa))
}
