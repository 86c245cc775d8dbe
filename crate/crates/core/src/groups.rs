//! Household groups: clusters of surveyed households with a jittered
//! centroid, labeled poor/non-poor by household majority. The group is the
//! unit of poverty prediction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::world::World;

pub const GROUP_TILE_SPAN: usize = 10;
/// Anonymization jitter applied to group centers, in cells.
pub const CENTER_JITTER: isize = 5;

#[derive(Debug, Clone)]
pub struct Household {
    pub id: u64,
    pub cell: (usize, usize),
    pub poor: bool,
}

#[derive(Debug, Clone)]
pub struct HouseholdGroup {
    pub id: u64,
    /// Jittered average household location.
    pub center: (usize, usize),
    pub households: Vec<Household>,
}

impl HouseholdGroup {
    /// Majority poverty vote; ties count as poor.
    pub fn label(&self) -> u8 {
        let poor = self.households.iter().filter(|h| h.poor).count();
        if 2 * poor >= self.households.len() {
            1
        } else {
            0
        }
    }
}

/// Synthesizes survey groups around the world's survey sites. Household
/// poverty flags are drawn from the world's latent poverty field, so labels
/// correlate with what the terrain shows.
pub fn synth_groups(world: &World, n_groups: usize, seed: u64) -> Result<Vec<HouseholdGroup>> {
    if world.survey_sites.is_empty() {
        return Err(Error::Data("world has no survey sites".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "groups"));
    let side = world.side as isize;
    let mut groups = Vec::with_capacity(n_groups);
    let mut household_id = 0u64;
    for gid in 0..n_groups {
        let &(sx, sy) = &world.survey_sites[rng.gen_range(0..world.survey_sites.len())];
        let ax = (sx as isize + rng.gen_range(-4..=4)).clamp(0, side - 1);
        let ay = (sy as isize + rng.gen_range(-4..=4)).clamp(0, side - 1);
        let n_households = rng.gen_range(3..=7);
        let mut households = Vec::with_capacity(n_households);
        for _ in 0..n_households {
            let hx = (ax + rng.gen_range(-2..=2)).clamp(0, side - 1) as usize;
            let hy = (ay + rng.gen_range(-2..=2)).clamp(0, side - 1) as usize;
            let p = world.poverty[world.idx(hx, hy)];
            households.push(Household {
                id: household_id,
                cell: (hx, hy),
                poor: rng.gen::<f64>() < p,
            });
            household_id += 1;
        }
        let mean_x =
            households.iter().map(|h| h.cell.0).sum::<usize>() as f64 / households.len() as f64;
        let mean_y =
            households.iter().map(|h| h.cell.1).sum::<usize>() as f64 / households.len() as f64;
        let cx = (mean_x.round() as isize + rng.gen_range(-CENTER_JITTER..=CENTER_JITTER))
            .clamp(0, side - 1) as usize;
        let cy = (mean_y.round() as isize + rng.gen_range(-CENTER_JITTER..=CENTER_JITTER))
            .clamp(0, side - 1) as usize;
        groups.push(HouseholdGroup { id: gid as u64, center: (cx, cy), households });
    }
    Ok(groups)
}

/// The ~100 cells tiling a 10x10 block centered on the group, clamped at
/// world borders.
pub fn group_tiles(world: &World, group: &HouseholdGroup) -> Result<Vec<(usize, usize)>> {
    let (cx, cy) = group.center;
    if cx >= world.side || cy >= world.side {
        return Err(Error::InvalidArgument(format!(
            "group {} center {:?} outside world",
            group.id, group.center
        )));
    }
    let half = (GROUP_TILE_SPAN / 2) as isize;
    let mut cells = Vec::with_capacity(GROUP_TILE_SPAN * GROUP_TILE_SPAN);
    for dy in -half..half {
        for dx in -half..half {
            let x = cx as isize + dx;
            let y = cy as isize + dy;
            if world.in_bounds(x, y) {
                cells.push((x as usize, y as usize));
            }
        }
    }
    Ok(cells)
}

/// Mean nighttime light intensity over the group's tile block.
pub fn group_mean_intensity(world: &World, group: &HouseholdGroup) -> Result<f64> {
    let cells = group_tiles(world, group)?;
    Ok(cells.iter().map(|&(x, y)| world.intensity[world.idx(x, y)] as f64).sum::<f64>()
        / cells.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_world() -> World {
        World::generate(3, 96).unwrap()
    }

    #[test]
    fn majority_label_with_tie_poor() {
        let mk = |flags: &[bool]| HouseholdGroup {
            id: 0,
            center: (0, 0),
            households: flags
                .iter()
                .enumerate()
                .map(|(i, &poor)| Household { id: i as u64, cell: (0, 0), poor })
                .collect(),
        };
        assert_eq!(mk(&[true, true, false]).label(), 1);
        assert_eq!(mk(&[false, false, true]).label(), 0);
        assert_eq!(mk(&[true, false]).label(), 1, "ties are poor");
    }

    #[test]
    fn interior_group_has_100_distinct_tiles() {
        let world = test_world();
        let group = HouseholdGroup { id: 0, center: (48, 48), households: vec![] };
        let cells = group_tiles(&world, &group).unwrap();
        assert_eq!(cells.len(), 100);
        let unique: std::collections::HashSet<_> = cells.iter().collect();
        assert_eq!(unique.len(), 100);
    }

    #[test]
    fn corner_group_clamps_in_bounds() {
        let world = test_world();
        let group = HouseholdGroup { id: 0, center: (0, 0), households: vec![] };
        let cells = group_tiles(&world, &group).unwrap();
        assert!(cells.len() >= 25, "got {}", cells.len());
        assert!(cells.iter().all(|&(x, y)| x < world.side && y < world.side));
    }

    #[test]
    fn synthesis_is_deterministic_with_both_classes() {
        let world = test_world();
        let a = synth_groups(&world, 120, 9).unwrap();
        let b = synth_groups(&world, 120, 9).unwrap();
        assert_eq!(a.len(), 120);
        for (ga, gb) in a.iter().zip(&b) {
            assert_eq!(ga.center, gb.center);
            assert_eq!(ga.label(), gb.label());
        }
        let poor = a.iter().filter(|g| g.label() == 1).count();
        assert!(poor >= 20 && poor <= 100, "poor groups: {poor}/120");
    }
}
