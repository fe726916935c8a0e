//! Synthetic census-like population: provinces split into municipalities
//! split into cells, with households, school classes and workplaces.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::params::{AttrTest, AttrValue, Attributes, Comparator};

use super::od::{OdMatrix, OdMatrixSet};
use super::population::{ActivityRule, Agent, HOME_CELL, HOUSEHOLD};
use super::tessellation::Tessellation;

/// Age bands `[lo, hi)` and their population shares.
const AGE_BANDS: [(u32, u32, f64); 9] = [
    (0, 10, 0.08),
    (10, 20, 0.09),
    (20, 30, 0.10),
    (30, 40, 0.12),
    (40, 50, 0.15),
    (50, 60, 0.16),
    (60, 70, 0.13),
    (70, 80, 0.10),
    (80, 100, 0.07),
];

/// Household size shares for sizes 1 to 5.
const HOUSEHOLD_SIZES: [f64; 5] = [0.33, 0.27, 0.19, 0.15, 0.06];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub agents: usize,
    pub provinces: usize,
    pub municipalities_per_province: usize,
    pub cells_per_municipality: usize,
    pub class_size: usize,
    pub workplace_mean_size: f64,
    pub employment_rate: f64,
    pub health_worker_fraction: f64,
    /// OD probability of staying in the origin region.
    pub od_locality: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            agents: 50_000,
            provinces: 4,
            municipalities_per_province: 10,
            cells_per_municipality: 10,
            class_size: 25,
            workplace_mean_size: 10.0,
            employment_rate: 0.65,
            health_worker_fraction: 0.05,
            od_locality: 0.8,
            seed: 1,
        }
    }
}

/// Activity profile by age: under 25 mostly at school, adults split
/// between workplace and neighbourhood. Households are always half active.
pub fn default_activity_rules() -> Vec<ActivityRule> {
    let scores = |w: f64, h: f64, s: f64| {
        BTreeMap::from([
            ("workplace".to_string(), w),
            (HOME_CELL.to_string(), h),
            ("school".to_string(), s),
            (HOUSEHOLD.to_string(), 0.5),
        ])
    };
    vec![
        ActivityRule {
            when: vec![],
            scores: scores(0.4, 0.1, 0.0),
            priority: 0,
        },
        ActivityRule {
            when: vec![AttrTest::new("age", Comparator::Lt, 25.0)],
            scores: scores(0.0, 0.05, 0.9),
            priority: 1,
        },
    ]
}

fn pick<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn build_tessellation(cfg: &SyntheticConfig) -> Tessellation {
    let mut rows = Vec::new();
    for p in 0..cfg.provinces {
        rows.push((format!("p{p}"), None, 2));
        for m in 0..cfg.municipalities_per_province {
            let muni = format!("p{p}m{m}");
            for c in 0..cfg.cells_per_municipality {
                rows.push((format!("{muni}c{c}"), Some(muni.clone()), 0));
            }
            rows.push((muni, Some(format!("p{p}")), 1));
        }
    }
    Tessellation::from_rows(rows).expect("synthetic hierarchy is well formed")
}

/// Stays home with `locality`, otherwise moves uniformly to a sibling
/// region (same parent; any other region at the top level).
fn build_od(tess: &Tessellation, locality: f64) -> OdMatrixSet {
    let top = tess.level_count() - 1;
    let levels = (0..tess.level_count())
        .map(|level| {
            let n = tess.region_count(level) as u32;
            let group = |r: u32| if level == top { 0 } else { tess.parent(level, r).unwrap() + 1 };
            let mut entries = Vec::new();
            for o in 0..n {
                let siblings: Vec<u32> = (0..n).filter(|&d| d != o && group(d) == group(o)).collect();
                if siblings.is_empty() {
                    entries.push((o, o, 1.0));
                    continue;
                }
                entries.push((o, o, locality));
                let share = (1.0 - locality) / siblings.len() as f64;
                entries.extend(siblings.into_iter().map(|d| (o, d, share)));
            }
            OdMatrix::from_entries(level, n as usize, entries, |r| r.to_string())
                .expect("rows sum to one")
        })
        .collect();
    OdMatrixSet::new(levels)
}

/// Generates agents, geography and OD matrices from `cfg`.
pub fn synthetic_population(cfg: &SyntheticConfig) -> (Vec<Agent>, Tessellation, OdMatrixSet) {
    assert!(
        cfg.agents > 0
            && cfg.provinces > 0
            && cfg.municipalities_per_province > 0
            && cfg.cells_per_municipality > 0
            && cfg.class_size > 1
            && cfg.workplace_mean_size >= 1.0,
        "degenerate synthetic configuration"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let tess = build_tessellation(cfg);
    let od = build_od(&tess, cfg.od_locality);
    let cells = tess.region_count(0);
    let band_weights: Vec<f64> = AGE_BANDS.iter().map(|b| b.2).collect();

    struct Draft {
        cell: u32,
        age: u32,
        student: bool,
        employment: &'static str,
        contexts: Vec<(String, String)>,
    }

    let mut drafts: Vec<Draft> = (0..cfg.agents)
        .map(|_| {
            let cell = rng.random_range(0..cells) as u32;
            let (lo, hi, _) = AGE_BANDS[pick(&band_weights, &mut rng)];
            let age = rng.random_range(lo..hi);
            let student = (6..=18).contains(&age) || ((19..25).contains(&age) && rng.random_bool(0.4));
            let employment = if student {
                "student"
            } else if age < 6 {
                "child"
            } else if age > 66 {
                "retired"
            } else if rng.random_bool(cfg.employment_rate) {
                if rng.random_bool(cfg.health_worker_fraction) {
                    "health_worker"
                } else {
                    "employed"
                }
            } else {
                "unemployed"
            };
            Draft {
                cell,
                age,
                student,
                employment,
                contexts: Vec::new(),
            }
        })
        .collect();
    drafts.sort_by_key(|d| d.cell);

    // Households: consecutive runs within a cell.
    let mut start = 0;
    let mut household = 0usize;
    while start < drafts.len() {
        let cell = drafts[start].cell;
        let mut end = start;
        while end < drafts.len() && drafts[end].cell == cell {
            end += 1;
        }
        let mut i = start;
        while i < end {
            let size = pick(&HOUSEHOLD_SIZES, &mut rng) + 1;
            for d in &mut drafts[i..(i + size).min(end)] {
                d.contexts.push((HOUSEHOLD.into(), format!("h{household}")));
            }
            household += 1;
            i += size;
        }
        start = end;
    }

    let muni_of = |d: &Draft| tess.ancestor(0, d.cell, 1);
    let prov_of = |d: &Draft| tess.ancestor(0, d.cell, 2);

    // School classes: students of a municipality sorted by age, in chunks.
    let mut students: Vec<usize> = (0..drafts.len()).filter(|&i| drafts[i].student).collect();
    students.sort_by_key(|&i| (muni_of(&drafts[i]), drafts[i].age, i));
    let mut assigned: Vec<(usize, (String, String))> = Vec::new();
    for (k, chunk) in students
        .chunk_by(|&a, &b| muni_of(&drafts[a]) == muni_of(&drafts[b]))
        .flat_map(|group| group.chunks(cfg.class_size))
        .enumerate()
    {
        assigned.extend(chunk.iter().map(|&i| (i, ("school".into(), format!("k{k}")))));
    }

    // Workplaces: workers of a province shuffled into geometric-sized groups.
    let size_dist = Geometric::new(1.0 / cfg.workplace_mean_size).expect("mean size >= 1");
    let mut workers: Vec<usize> = (0..drafts.len())
        .filter(|&i| matches!(drafts[i].employment, "employed" | "health_worker"))
        .collect();
    workers.sort_by_key(|&i| (prov_of(&drafts[i]), i));
    let mut workplace = 0usize;
    for group in workers.chunk_by(|&a, &b| prov_of(&drafts[a]) == prov_of(&drafts[b])) {
        let mut group = group.to_vec();
        group.shuffle(&mut rng);
        let mut rest = &group[..];
        while !rest.is_empty() {
            let size = (1 + size_dist.sample(&mut rng) as usize).min(rest.len());
            assigned.extend(
                rest[..size].iter().map(|&i| (i, ("workplace".into(), format!("w{workplace}")))),
            );
            workplace += 1;
            rest = &rest[size..];
        }
    }

    for (i, membership) in assigned {
        drafts[i].contexts.push(membership);
    }

    let agents = drafts
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            let home_cell = tess.region_id(0, d.cell).to_string();
            let mut attributes = Attributes::new();
            attributes.insert("age".into(), AttrValue::Num(f64::from(d.age)));
            let gender = if rng.random_bool(0.5) { "female" } else { "male" };
            attributes.insert("gender".into(), AttrValue::Text(gender.into()));
            attributes.insert("employment".into(), AttrValue::Text(d.employment.into()));
            attributes.insert(HOME_CELL.into(), AttrValue::Text(home_cell.clone()));
            Agent {
                id: format!("a{i}"),
                attributes,
                home_cell,
                contexts: d.contexts,
                activity: BTreeMap::new(),
            }
        })
        .collect();
    (agents, tess, od)
}

/// Paths written by [`write_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPaths {
    pub population: PathBuf,
    pub tessellation: PathBuf,
    pub od: Vec<PathBuf>,
}

/// Writes a dataset in the population/tessellation/OD CSV formats.
pub fn write_dataset(
    dir: &Path,
    agents: &[Agent],
    tess: &Tessellation,
    od: &OdMatrixSet,
) -> Result<DatasetPaths, DataError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| DataError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;

    let population = dir.join("population.csv");
    let mut attr_names: Vec<&str> = agents
        .iter()
        .flat_map(|a| a.attributes.keys().map(String::as_str))
        .filter(|k| *k != HOME_CELL)
        .collect();
    attr_names.sort_unstable();
    attr_names.dedup();
    let mut kinds: Vec<&str> = agents
        .iter()
        .flat_map(|a| a.contexts.iter().map(|(k, _)| k.as_str()))
        .collect();
    kinds.sort_unstable();
    kinds.dedup();
    let mut w = csv::Writer::from_path(&population).map_err(|source| DataError::Csv {
        path: population.clone(),
        source,
    })?;
    let csv_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| DataError::Csv { path, source }
    };
    let mut header = vec!["agent_id".to_string(), HOME_CELL.to_string()];
    header.extend(attr_names.iter().map(|s| s.to_string()));
    header.extend(kinds.iter().map(|k| format!("{k}_id")));
    w.write_record(&header).map_err(csv_err(&population))?;
    for a in agents {
        let mut row = vec![a.id.clone(), a.home_cell.clone()];
        for name in &attr_names {
            row.push(match a.attributes.get(*name) {
                Some(AttrValue::Num(x)) => x.to_string(),
                Some(AttrValue::Text(s)) => s.clone(),
                None => String::new(),
            });
        }
        for kind in &kinds {
            row.push(
                a.contexts
                    .iter()
                    .find(|(k, _)| k == kind)
                    .map(|(_, c)| c.clone())
                    .unwrap_or_default(),
            );
        }
        w.write_record(&row).map_err(csv_err(&population))?;
    }
    w.flush().map_err(io(&population))?;

    let tessellation = dir.join("tessellation.csv");
    let mut f = BufWriter::new(File::create(&tessellation).map_err(io(&tessellation))?);
    writeln!(f, "cell_id,parent_id,level").map_err(io(&tessellation))?;
    for level in 0..tess.level_count() {
        for r in 0..tess.region_count(level) as u32 {
            let parent = tess
                .parent(level, r)
                .map(|p| tess.region_id(level + 1, p).to_string())
                .unwrap_or_default();
            writeln!(f, "{},{},{}", tess.region_id(level, r), parent, level)
                .map_err(io(&tessellation))?;
        }
    }
    f.flush().map_err(io(&tessellation))?;

    let mut od_paths = Vec::new();
    for level in 0..od.level_count() {
        let path = dir.join(format!("od_level{level}.csv"));
        let mut f = BufWriter::new(File::create(&path).map_err(io(&path))?);
        writeln!(f, "origin_id,destination_id,probability").map_err(io(&path))?;
        let m = od.level(level);
        for o in 0..m.region_count() as u32 {
            for &(d, p) in m.row(o) {
                writeln!(
                    f,
                    "{},{},{:?}",
                    tess.region_id(level, o),
                    tess.region_id(level, d),
                    p
                )
                .map_err(io(&path))?;
            }
        }
        f.flush().map_err(io(&path))?;
        od_paths.push(path);
    }
    Ok(DatasetPaths {
        population,
        tessellation,
        od: od_paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::implicit::population::{load_population, ImplicitOptions, ImplicitWorld};

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            agents: 2_000,
            provinces: 2,
            municipalities_per_province: 2,
            cells_per_municipality: 4,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_and_well_formed() {
        let (a, tess, od) = synthetic_population(&small());
        let (b, _, _) = synthetic_population(&small());
        assert_eq!(a, b);
        assert_eq!(tess.level_count(), 3);
        assert_eq!(od.level_count(), 3);
        assert_eq!(tess.region_count(0), 16);
        let students = a.iter().filter(|x| x.contexts.iter().any(|(k, _)| k == "school")).count();
        assert!(students > 100);
        assert!(a.iter().all(|x| x.contexts.iter().any(|(k, _)| k == HOUSEHOLD)));
    }

    #[test]
    fn round_trips_through_csv() {
        let (agents, tess, od) = synthetic_population(&small());
        let dir = tempfile::tempdir().unwrap();
        let paths = write_dataset(dir.path(), &agents, &tess, &od).unwrap();
        let (loaded, tess2, od2) =
            load_population(&paths.population, &paths.tessellation, &paths.od).unwrap();
        assert_eq!(tess2, tess);
        assert_eq!(loaded.len(), agents.len());
        for (x, y) in loaded.iter().zip(&agents) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.attributes, y.attributes);
            let mut cx = x.contexts.clone();
            let mut cy = y.contexts.clone();
            cx.sort();
            cy.sort();
            assert_eq!(cx, cy);
        }
        for level in 0..od.level_count() {
            for o in 0..od.level(level).region_count() as u32 {
                for &(d, p) in od.level(level).row(o) {
                    assert!((od2.level(level).prob(o, d) - p).abs() < 1e-15);
                }
            }
        }
        let opts = ImplicitOptions {
            activity_rules: default_activity_rules(),
            ..Default::default()
        };
        let world = ImplicitWorld::build(loaded, tess2, od2, &opts).unwrap();
        assert_eq!(world.agent_count(), 2_000);
        assert!(world.memory_bytes() > 0);
    }
}
