use std::collections::HashMap;
use std::path::Path;

use crate::error::DataError;

#[derive(Debug, Clone, Default, PartialEq)]
struct Level {
    ids: Vec<String>,
    index: HashMap<String, u32>,
    /// Parent index at the next level; empty at the top level.
    parent: Vec<u32>,
}

/// Nested geographic partition. Level 0 holds the finest cells (agents'
/// home cells); every region below the top has exactly one parent one
/// level up.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tessellation {
    levels: Vec<Level>,
}

impl Tessellation {
    /// Builds from `(cell_id, parent_id, level)` rows.
    pub fn from_rows<I, S>(rows: I) -> Result<Self, DataError>
    where
        I: IntoIterator<Item = (S, Option<S>, usize)>,
        S: Into<String>,
    {
        let rows: Vec<(String, Option<String>, usize)> = rows
            .into_iter()
            .map(|(id, parent, level)| (id.into(), parent.map(Into::into), level))
            .collect();
        let depth = rows.iter().map(|r| r.2 + 1).max().unwrap_or(0);
        if depth == 0 {
            return Err(DataError::Tessellation("no regions".into()));
        }
        let mut levels = vec![Level::default(); depth];
        for (id, _, level) in &rows {
            let lv = &mut levels[*level];
            if lv.index.insert(id.clone(), lv.ids.len() as u32).is_some() {
                return Err(DataError::Tessellation(format!(
                    "duplicate region `{id}` at level {level}"
                )));
            }
            lv.ids.push(id.clone());
        }
        for (k, lv) in levels.iter().enumerate() {
            if lv.ids.is_empty() {
                return Err(DataError::Tessellation(format!("level {k} has no regions")));
            }
        }
        let mut parents: Vec<Vec<Option<u32>>> =
            levels.iter().map(|lv| vec![None; lv.ids.len()]).collect();
        for (id, parent, level) in &rows {
            let here = levels[*level].index[id] as usize;
            let top = *level + 1 == depth;
            match (parent.as_deref().filter(|p| !p.is_empty()), top) {
                (None, true) => {}
                (Some(p), true) => {
                    return Err(DataError::Tessellation(format!(
                        "top-level region `{id}` has parent `{p}`"
                    )))
                }
                (None, false) => {
                    return Err(DataError::Tessellation(format!(
                        "region `{id}` at level {level} has no parent"
                    )))
                }
                (Some(p), false) => {
                    let idx = levels[level + 1].index.get(p).ok_or_else(|| {
                        DataError::Tessellation(format!(
                            "parent `{p}` of `{id}` is not a level {} region",
                            level + 1
                        ))
                    })?;
                    parents[*level][here] = Some(*idx);
                }
            }
        }
        for (lv, parent) in levels.iter_mut().zip(parents).take(depth - 1) {
            lv.parent = parent.into_iter().map(|p| p.expect("checked above")).collect();
        }
        Ok(Self { levels })
    }

    /// A single level of cells with no hierarchy above.
    pub fn flat<S: Into<String>>(cells: impl IntoIterator<Item = S>) -> Self {
        Self::from_rows(cells.into_iter().map(|c| (c.into(), None, 0)))
            .expect("a flat tessellation needs at least one cell")
    }

    /// Reads a `cell_id,parent_id,level` CSV.
    pub fn load(path: &Path) -> Result<Self, DataError> {
        let csv_err = |source| DataError::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
        let headers = reader.headers().map_err(csv_err)?.clone();
        let col = |name: &str| {
            headers.iter().position(|h| h.trim() == name).ok_or_else(|| DataError::Schema {
                file: path.display().to_string(),
                line: 1,
                message: format!("missing column `{name}`"),
            })
        };
        let (c_id, c_parent, c_level) = (col("cell_id")?, col("parent_id")?, col("level")?);
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(csv_err)?;
            let line = record.position().map_or(0, |p| p.line());
            let level: usize = record[c_level].trim().parse().map_err(|_| DataError::Schema {
                file: path.display().to_string(),
                line,
                message: format!("bad level `{}`", &record[c_level]),
            })?;
            let parent = record[c_parent].trim();
            rows.push((
                record[c_id].trim().to_string(),
                (!parent.is_empty()).then(|| parent.to_string()),
                level,
            ));
        }
        Self::from_rows(rows)
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn region_count(&self, level: usize) -> usize {
        self.levels[level].ids.len()
    }

    pub fn region_index(&self, level: usize, id: &str) -> Option<u32> {
        self.levels.get(level)?.index.get(id).copied()
    }

    pub fn region_id(&self, level: usize, region: u32) -> &str {
        &self.levels[level].ids[region as usize]
    }

    pub fn parent(&self, level: usize, region: u32) -> Option<u32> {
        self.levels[level].parent.get(region as usize).copied()
    }

    /// Ancestor at `to` of region `region` at level `from` (`to >= from`).
    pub fn ancestor(&self, from: usize, region: u32, to: usize) -> u32 {
        debug_assert!(to >= from && to < self.level_count());
        let mut r = region;
        for level in from..to {
            r = self.levels[level].parent[r as usize];
        }
        r
    }

    pub fn memory_bytes(&self) -> usize {
        self.levels
            .iter()
            .map(|lv| {
                lv.ids.iter().map(|s| s.len() + 24).sum::<usize>() * 2
                    + lv.parent.len() * 4
            })
            .sum()
    }
}
