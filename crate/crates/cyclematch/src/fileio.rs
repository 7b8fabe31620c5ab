//! Human-writable JSON formats for the solver CLI surface: one matching
//! instance in, one matching out. Costs are plain JSON numbers here — unlike
//! dataset files these are meant to be hand-edited.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{objective, Matching, QapInstance};
use crate::solver::SolverKind;

const INSTANCE_SCHEMA: u32 = 1;

#[derive(Serialize, Deserialize)]
struct PairCostDto {
    edge1: [usize; 2],
    edge2: [usize; 2],
    cost: f64,
}

#[derive(Serialize, Deserialize)]
struct InstanceDto {
    schema_version: u32,
    complete: bool,
    unary: Vec<Vec<f64>>,
    #[serde(default)]
    pairwise: Vec<PairCostDto>,
}

pub fn instance_from_json(text: &str) -> Result<QapInstance> {
    let dto: InstanceDto = serde_json::from_str(text)?;
    if dto.schema_version != INSTANCE_SCHEMA {
        return Err(Error::SchemaVersion {
            found: dto.schema_version,
            expected: INSTANCE_SCHEMA,
        });
    }
    let mut pairwise = std::collections::BTreeMap::new();
    for p in dto.pairwise {
        let key = ((p.edge1[0], p.edge1[1]), (p.edge2[0], p.edge2[1]));
        if pairwise.insert(key, p.cost).is_some() {
            return Err(Error::Parse(format!(
                "duplicate pairwise key (({}, {}), ({}, {}))",
                p.edge1[0], p.edge1[1], p.edge2[0], p.edge2[1]
            )));
        }
    }
    QapInstance::new(dto.unary, pairwise, dto.complete)
}

pub fn instance_to_json(inst: &QapInstance) -> Result<String> {
    let dto = InstanceDto {
        schema_version: INSTANCE_SCHEMA,
        complete: inst.complete,
        unary: inst.unary.clone(),
        pairwise: inst
            .pairwise
            .iter()
            .map(|(&((i, j), (s, l)), &cost)| PairCostDto {
                edge1: [i, j],
                edge2: [s, l],
                cost,
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&dto)?)
}

#[derive(Serialize, Deserialize)]
pub struct MatchingDto {
    pub schema_version: u32,
    pub n1: usize,
    pub n2: usize,
    pub pairs: Vec<[usize; 2]>,
    pub objective: f64,
    pub solver: String,
}

pub fn matching_to_json(
    inst: &QapInstance,
    m: &Matching,
    solver: SolverKind,
) -> Result<String> {
    let dto = MatchingDto {
        schema_version: INSTANCE_SCHEMA,
        n1: m.n1,
        n2: m.n2,
        pairs: m.pairs.iter().map(|&(i, s)| [i, s]).collect(),
        objective: objective(inst, m)?,
        solver: solver.to_string(),
    };
    Ok(serde_json::to_string_pretty(&dto)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instance_round_trip() {
        let text = r#"{
            "schema_version": 1,
            "complete": false,
            "unary": [[0.5, -1.0], [2.0, 0.0]],
            "pairwise": [{"edge1": [0, 1], "edge2": [1, 0], "cost": -3.5}]
        }"#;
        let inst = instance_from_json(text).unwrap();
        assert_eq!(inst.n1, 2);
        assert_eq!(inst.pairwise[&((0, 1), (1, 0))], -3.5);
        let back = instance_from_json(&instance_to_json(&inst).unwrap()).unwrap();
        assert_eq!(inst, back);
    }

    #[test]
    fn missing_pairwise_defaults_to_unary_only() {
        let text = r#"{"schema_version": 1, "complete": true, "unary": [[1.0]]}"#;
        let inst = instance_from_json(text).unwrap();
        assert!(inst.pairwise.is_empty());
    }

    #[test]
    fn bad_keys_are_rejected() {
        let text = r#"{
            "schema_version": 1,
            "complete": false,
            "unary": [[0.0, 0.0]],
            "pairwise": [{"edge1": [0, 5], "edge2": [0, 1], "cost": 1.0}]
        }"#;
        assert!(instance_from_json(text).is_err());
    }
}
