use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::Opinion;
use crate::model::ModelIdentity;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Decision {
    Identified { identity: ModelIdentity, confidence: f64 },
    Unidentified,
}

impl Decision {
    pub fn identity(&self) -> Option<&ModelIdentity> {
        match self {
            Decision::Identified { identity, .. } => Some(identity),
            Decision::Unidentified => None,
        }
    }
}

/// Picks the hypothesis with the highest projected probability, provided it
/// clears `threshold` and beats the runner-up by at least `margin`.
/// Ties on probability resolve to the first hypothesis in domain order.
pub fn decide_identity(opinion: &Opinion, threshold: f64, margin: f64) -> Decision {
    let mut ranked: Vec<(&ModelIdentity, f64)> = opinion
        .hypotheses()
        .iter()
        .map(|h| (&h.identity, opinion.projected(&h.identity)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    let Some(&(best, p)) = ranked.first() else {
        return Decision::Unidentified;
    };
    let runner_up = ranked.get(1).map_or(0.0, |r| r.1);
    if p >= threshold && p - runner_up >= margin {
        Decision::Identified { identity: best.clone(), confidence: p.clamp(0.0, 1.0) }
    } else {
        Decision::Unidentified
    }
}
