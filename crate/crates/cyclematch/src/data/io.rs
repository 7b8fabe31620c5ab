//! Dataset JSON serialization. Reals are encoded as hexadecimal bit-pattern
//! strings so save/load round-trips are bit-exact; readers also accept plain
//! numbers in hand-written files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::hexfloat::HexF64;
use crate::instance::KeypointSet;

const DATASET_SCHEMA: u32 = 1;

#[derive(Serialize, Deserialize)]
struct DatasetDto {
    schema_version: u32,
    universe_size: usize,
    sets: Vec<SetDto>,
}

#[derive(Serialize, Deserialize)]
struct SetDto {
    set_id: String,
    points: Vec<[HexF64; 2]>,
    features: Vec<Vec<HexF64>>,
    edges: Vec<[usize; 2]>,
    labels: Option<Vec<Option<usize>>>,
}

pub fn dataset_to_json(ds: &Dataset) -> Result<String> {
    let dto = DatasetDto {
        schema_version: DATASET_SCHEMA,
        universe_size: ds.universe_size,
        sets: ds
            .sets
            .iter()
            .map(|ks| SetDto {
                set_id: ks.set_id.clone(),
                points: ks.points.iter().map(|&(x, y)| [HexF64(x), HexF64(y)]).collect(),
                features: ks
                    .features
                    .iter()
                    .map(|f| f.iter().copied().map(HexF64).collect())
                    .collect(),
                edges: ks.edges.iter().map(|&(a, b)| [a, b]).collect(),
                labels: ks.universe_labels.clone(),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&dto)?)
}

pub fn dataset_from_json(text: &str) -> Result<Dataset> {
    let dto: DatasetDto = serde_json::from_str(text)?;
    if dto.schema_version != DATASET_SCHEMA {
        return Err(Error::SchemaVersion {
            found: dto.schema_version,
            expected: DATASET_SCHEMA,
        });
    }
    let mut sets = Vec::with_capacity(dto.sets.len());
    for set in dto.sets {
        let ks = KeypointSet::new(
            set.set_id,
            set.points.iter().map(|p| (p[0].0, p[1].0)).collect(),
            set.features
                .iter()
                .map(|f| f.iter().map(|h| h.0).collect())
                .collect(),
            set.edges.iter().map(|e| (e[0], e[1])).collect(),
            set.labels,
        )?;
        sets.push(ks);
    }
    let ds = Dataset { sets, universe_size: dto.universe_size };
    ds.validate()?;
    Ok(ds)
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, dataset_to_json(ds)?)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    dataset_from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, SyntheticConfig};

    fn small_dataset() -> Dataset {
        generate(&SyntheticConfig {
            universe_size: 5,
            num_sets: 3,
            occlusion_rate: 0.1,
            rng_seed: 11,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_lossless() {
        let ds = small_dataset();
        let text = dataset_to_json(&ds).unwrap();
        let back = dataset_from_json(&text).unwrap();
        assert_eq!(ds, back);
        // and byte-identical once re-serialized
        assert_eq!(text, dataset_to_json(&back).unwrap());
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let ds = small_dataset();
        let text = dataset_to_json(&ds).unwrap();
        let truncated = &text[..text.len() / 2];
        assert!(matches!(dataset_from_json(truncated), Err(Error::Json(_))));
    }

    #[test]
    fn unknown_schema_version_is_rejected() {
        let ds = small_dataset();
        let text = dataset_to_json(&ds)
            .unwrap()
            .replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(matches!(
            dataset_from_json(&text),
            Err(Error::SchemaVersion { found: 2, expected: 1 })
        ));
    }

    #[test]
    fn invalid_edges_are_rejected_on_load() {
        let text = r#"{
            "schema_version": 1,
            "universe_size": 2,
            "sets": [{
                "set_id": "s",
                "points": [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
                "features": [[0.5], [0.25], [0.125]],
                "edges": [[0, 7]],
                "labels": null
            }]
        }"#;
        assert!(dataset_from_json(text).is_err());
    }
}
