//! Household survey CSV: the synthetic writer and the ingestion adapter.
//!
//! Schema (one row per household):
//! `group_id,household_id,poor,roof,rooms,house_type,dist_road,dist_market,urban,temp,precip`
//!
//! On ingest, numeric columns are averaged per group and categorical
//! columns are one-hot encoded then averaged (giving per-group fractions).
//! The `poor` column never enters the feature block; it feeds group labels.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::groups::HouseholdGroup;
use crate::seed::derive_seed;
use crate::texture::value_noise;
use crate::world::World;

const HEADER: [&str; 11] = [
    "group_id",
    "household_id",
    "poor",
    "roof",
    "rooms",
    "house_type",
    "dist_road",
    "dist_market",
    "urban",
    "temp",
    "precip",
];

const ROOF_KINDS: [&str; 3] = ["metal", "thatch", "tile"];
const HOUSE_KINDS: [&str; 3] = ["brick", "concrete", "hut"];

/// Writes a synthetic survey for the given groups. Household attributes
/// correlate with the household's poverty flag and local geography.
pub fn synth_survey(world: &World, groups: &[HouseholdGroup], seed: u64, path: &Path) -> Result<()> {
    let road_dist = world.road_distance_map();
    let town_dist = world.town_distance_map();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "survey"));
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(HEADER)?;
    for g in groups {
        for h in &g.households {
            let i = world.idx(h.cell.0, h.cell.1);
            let wealth_noise: f64 = rng.gen_range(-0.15..0.15);
            let wealth = if h.poor { 0.22 + wealth_noise } else { 0.74 + wealth_noise };
            let roof = if wealth < 0.4 {
                "thatch"
            } else if wealth < 0.75 {
                "metal"
            } else {
                "tile"
            };
            let house = if wealth < 0.4 {
                "hut"
            } else if wealth < 0.75 {
                "brick"
            } else {
                "concrete"
            };
            let rooms = (1.0 + wealth * 6.0 + rng.gen_range(-0.5..0.5)).round().max(1.0);
            let dist_road = road_dist[i] as f64 + rng.gen_range(0.0..0.6);
            let dist_market = town_dist[i] as f64 + rng.gen_range(0.0..1.5);
            let urban = u8::from(town_dist[i] <= 2);
            let temp = 22.0
                + 6.0 * value_noise(world.seed, 151, h.cell.0 as f64, h.cell.1 as f64, 40.0)
                + h.cell.1 as f64 / world.side as f64 * 2.0;
            let precip = 600.0
                + 500.0 * value_noise(world.seed, 157, h.cell.0 as f64, h.cell.1 as f64, 35.0);
            wtr.write_record([
                g.id.to_string(),
                h.id.to_string(),
                u8::from(h.poor).to_string(),
                roof.to_string(),
                format!("{rooms:.0}"),
                house.to_string(),
                format!("{dist_road:.3}"),
                format!("{dist_market:.3}"),
                urban.to_string(),
                format!("{temp:.3}"),
                format!("{precip:.3}"),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Per-group survey features plus household poverty flags.
#[derive(Debug, Clone)]
pub struct SurveyData {
    /// Sorted group ids.
    pub group_ids: Vec<u64>,
    /// Deterministic (sorted) feature column names.
    pub feature_names: Vec<String>,
    /// One row per group, aligned with `group_ids`.
    pub features: Vec<Vec<f64>>,
    /// Household poverty flags per group, in file order.
    pub household_poor: BTreeMap<u64, Vec<bool>>,
}

impl SurveyData {
    /// Majority label per group (ties poor), aligned with `group_ids`.
    pub fn labels(&self) -> Vec<u8> {
        self.group_ids
            .iter()
            .map(|gid| {
                let flags = &self.household_poor[gid];
                let poor = flags.iter().filter(|&&p| p).count();
                u8::from(2 * poor >= flags.len())
            })
            .collect()
    }
}

/// Reads a survey CSV. When `expected_groups` is given, any group id not in
/// it is a referential error.
pub fn ingest_survey(path: &Path, expected_groups: Option<&[u64]>) -> Result<SurveyData> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != HEADER {
        return Err(Error::Data(format!(
            "survey header mismatch: expected {HEADER:?}, got {got:?}"
        )));
    }

    struct Row {
        group: u64,
        poor: bool,
        roof: String,
        house: String,
        numeric: [f64; 6],
    }
    let mut rows = Vec::new();
    for (row_idx, rec) in rdr.records().enumerate() {
        let rownum = row_idx + 2;
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or_default().to_string();
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .unwrap_or_default()
                .parse()
                .map_err(|_| Error::Data(format!("row {rownum}: bad numeric field {:?}", rec.get(i))))
        };
        let group: u64 = field(0)
            .parse()
            .map_err(|_| Error::Data(format!("row {rownum}: bad group_id {:?}", field(0))))?;
        if let Some(expected) = expected_groups {
            if !expected.contains(&group) {
                return Err(Error::Data(format!(
                    "row {rownum}: unknown group id {group}"
                )));
            }
        }
        let poor = match field(2).as_str() {
            "0" => false,
            "1" => true,
            other => return Err(Error::Data(format!("row {rownum}: bad poor flag {other:?}"))),
        };
        let roof = field(3);
        if !ROOF_KINDS.contains(&roof.as_str()) {
            return Err(Error::Data(format!("row {rownum}: unknown roof {roof:?}")));
        }
        let house = field(5);
        if !HOUSE_KINDS.contains(&house.as_str()) {
            return Err(Error::Data(format!("row {rownum}: unknown house_type {house:?}")));
        }
        rows.push(Row {
            group,
            poor,
            roof,
            house,
            numeric: [num(4)?, num(6)?, num(7)?, num(8)?, num(9)?, num(10)?],
        });
    }
    if rows.is_empty() {
        return Err(Error::Data("survey file has no data rows".into()));
    }

    // feature columns, sorted by name
    let mut names: Vec<String> = vec![
        "dist_market".into(),
        "dist_road".into(),
        "precip".into(),
        "rooms".into(),
        "temp".into(),
        "urban".into(),
    ];
    for r in ROOF_KINDS {
        names.push(format!("roof={r}"));
    }
    for h in HOUSE_KINDS {
        names.push(format!("house_type={h}"));
    }
    names.sort();

    let mut grouped: BTreeMap<u64, Vec<&Row>> = BTreeMap::new();
    for r in &rows {
        grouped.entry(r.group).or_default().push(r);
    }
    let group_ids: Vec<u64> = grouped.keys().copied().collect();
    let mut features = Vec::with_capacity(group_ids.len());
    let mut household_poor = BTreeMap::new();
    for (&gid, members) in &grouped {
        let n = members.len() as f64;
        let mut row = Vec::with_capacity(names.len());
        for name in &names {
            let value = match name.as_str() {
                "rooms" => members.iter().map(|r| r.numeric[0]).sum::<f64>() / n,
                "dist_road" => members.iter().map(|r| r.numeric[1]).sum::<f64>() / n,
                "dist_market" => members.iter().map(|r| r.numeric[2]).sum::<f64>() / n,
                "urban" => members.iter().map(|r| r.numeric[3]).sum::<f64>() / n,
                "temp" => members.iter().map(|r| r.numeric[4]).sum::<f64>() / n,
                "precip" => members.iter().map(|r| r.numeric[5]).sum::<f64>() / n,
                other => {
                    if let Some(kind) = other.strip_prefix("roof=") {
                        members.iter().filter(|r| r.roof == kind).count() as f64 / n
                    } else if let Some(kind) = other.strip_prefix("house_type=") {
                        members.iter().filter(|r| r.house == kind).count() as f64 / n
                    } else {
                        unreachable!("unknown feature column {other}")
                    }
                }
            };
            row.push(value);
        }
        features.push(row);
        household_poor.insert(gid, members.iter().map(|r| r.poor).collect());
    }

    Ok(SurveyData { group_ids, feature_names: names, features, household_poor })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::synth_groups;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("luxmap-survey-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn roundtrip_and_determinism() {
        let world = World::generate(5, 96).unwrap();
        let groups = synth_groups(&world, 30, 2).unwrap();
        let path = tmp("survey.csv");
        synth_survey(&world, &groups, 7, &path).unwrap();
        let a = ingest_survey(&path, None).unwrap();
        let b = ingest_survey(&path, None).unwrap();
        assert_eq!(a.group_ids, b.group_ids);
        assert_eq!(a.features, b.features);
        assert_eq!(a.group_ids.len(), 30);
        assert!(a.features.iter().all(|r| r.iter().all(|v| v.is_finite())));
        // ingested labels match the synthesized group labels
        let labels = a.labels();
        for (i, g) in groups.iter().enumerate() {
            assert_eq!(labels[i], g.label(), "group {}", g.id);
        }
    }

    #[test]
    fn averaging_rule_hand_case() {
        let path = tmp("hand.csv");
        std::fs::write(
            &path,
            "group_id,household_id,poor,roof,rooms,house_type,dist_road,dist_market,urban,temp,precip\n\
             1,0,0,metal,2,brick,1.0,3.0,0,22,700\n\
             1,1,1,thatch,4,hut,2.0,5.0,0,23,710\n",
        )
        .unwrap();
        let data = ingest_survey(&path, None).unwrap();
        let col = |name: &str| {
            let i = data.feature_names.iter().position(|n| n == name).unwrap();
            data.features[0][i]
        };
        assert_eq!(col("rooms"), 3.0);
        assert_eq!(col("dist_road"), 1.5);
        // one-hot fractions sum to 1 per categorical family
        let roof_sum: f64 = data
            .feature_names
            .iter()
            .zip(&data.features[0])
            .filter(|(n, _)| n.starts_with("roof="))
            .map(|(_, v)| v)
            .sum();
        assert!((roof_sum - 1.0).abs() < 1e-12);
        assert_eq!(col("roof=metal"), 0.5);
        assert_eq!(col("roof=thatch"), 0.5);
    }

    #[test]
    fn unknown_group_is_referential_error() {
        let path = tmp("ref.csv");
        std::fs::write(
            &path,
            "group_id,household_id,poor,roof,rooms,house_type,dist_road,dist_market,urban,temp,precip\n\
             9,0,0,metal,2,brick,1.0,3.0,0,22,700\n",
        )
        .unwrap();
        assert!(ingest_survey(&path, Some(&[1, 2])).is_err());
        assert!(ingest_survey(&path, Some(&[9])).is_ok());
    }

    #[test]
    fn missing_columns_rejected() {
        let path = tmp("cols.csv");
        std::fs::write(&path, "group_id,poor\n1,0\n").unwrap();
        assert!(matches!(ingest_survey(&path, None), Err(Error::Data(_))));
    }
}
