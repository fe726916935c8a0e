use std::collections::HashMap;
use std::path::Path;

use rand::Rng;

use crate::error::DataError;

use super::tessellation::Tessellation;

const ROW_TOLERANCE: f64 = 1e-9;

/// Row-stochastic origin-destination matrix for one tessellation level,
/// stored sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct OdMatrix {
    rows: Vec<Vec<(u32, f64)>>,
}

impl OdMatrix {
    /// Builds and validates; `level` is only used in error messages.
    /// `names` labels origins in errors.
    pub fn from_entries(
        level: usize,
        regions: usize,
        entries: impl IntoIterator<Item = (u32, u32, f64)>,
        names: impl Fn(u32) -> String,
    ) -> Result<Self, DataError> {
        let mut dense: Vec<HashMap<u32, f64>> = vec![HashMap::new(); regions];
        for (o, d, p) in entries {
            if o as usize >= regions || d as usize >= regions {
                return Err(DataError::Od {
                    level,
                    message: format!("entry ({o}, {d}) outside {regions} regions"),
                });
            }
            if !(p >= 0.0) || !p.is_finite() {
                return Err(DataError::Od {
                    level,
                    message: format!("negative probability {p} for row {}", names(o)),
                });
            }
            *dense[o as usize].entry(d).or_default() += p;
        }
        let mut rows = Vec::with_capacity(regions);
        for (o, row) in dense.into_iter().enumerate() {
            let sum = row.values().sum::<f64>() + 0.0;
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(DataError::NonStochasticRow {
                    level,
                    origin: names(o as u32),
                    sum: (sum * 1e12).round() / 1e12,
                });
            }
            let mut row: Vec<(u32, f64)> = row.into_iter().filter(|(_, p)| *p > 0.0).collect();
            row.sort_by_key(|(d, _)| *d);
            rows.push(row);
        }
        Ok(Self { rows })
    }

    pub fn identity(regions: usize) -> Self {
        Self {
            rows: (0..regions as u32).map(|r| vec![(r, 1.0)]).collect(),
        }
    }

    pub fn region_count(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, origin: u32) -> &[(u32, f64)] {
        &self.rows[origin as usize]
    }

    pub fn prob(&self, origin: u32, dest: u32) -> f64 {
        self.row(origin)
            .iter()
            .find(|(d, _)| *d == dest)
            .map_or(0.0, |(_, p)| *p)
    }

    /// Draws a destination among those accepted by `allow`, with
    /// probabilities renormalised over them. `None` if none is reachable.
    pub fn sample_filtered<R: Rng + ?Sized>(
        &self,
        origin: u32,
        rng: &mut R,
        allow: impl Fn(u32) -> bool,
    ) -> Option<u32> {
        let row = self.row(origin);
        let total: f64 = row.iter().filter(|(d, _)| allow(*d)).map(|(_, p)| p).sum();
        if total <= 0.0 {
            return None;
        }
        let mut u = rng.random::<f64>() * total;
        let mut last = None;
        for &(d, p) in row.iter().filter(|(d, _)| allow(*d)) {
            if u < p {
                return Some(d);
            }
            u -= p;
            last = Some(d);
        }
        last
    }

    fn memory_bytes(&self) -> usize {
        self.rows.iter().map(|r| r.len() * 16 + 24).sum()
    }
}

/// One OD matrix per tessellation level (possibly none at all).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OdMatrixSet {
    levels: Vec<OdMatrix>,
}

impl OdMatrixSet {
    pub fn new(levels: Vec<OdMatrix>) -> Self {
        Self { levels }
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, level: usize) -> &OdMatrix {
        &self.levels[level]
    }

    /// Reads one `origin_id,destination_id,probability` CSV per level,
    /// in level order. Absent pairs are zero.
    pub fn load(paths: &[impl AsRef<Path>], tess: &Tessellation) -> Result<Self, DataError> {
        if !paths.is_empty() && paths.len() != tess.level_count() {
            return Err(DataError::Od {
                level: 0,
                message: format!(
                    "{} OD files for {} tessellation levels",
                    paths.len(),
                    tess.level_count()
                ),
            });
        }
        let mut levels = Vec::new();
        for (level, path) in paths.iter().enumerate() {
            let path = path.as_ref();
            let csv_err = |source| DataError::Csv {
                path: path.to_path_buf(),
                source,
            };
            let file = path.display().to_string();
            let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
            let headers = reader.headers().map_err(csv_err)?.clone();
            let col = |name: &str| {
                headers.iter().position(|h| h.trim() == name).ok_or_else(|| DataError::Schema {
                    file: file.clone(),
                    line: 1,
                    message: format!("missing column `{name}`"),
                })
            };
            let (c_o, c_d, c_p) = (col("origin_id")?, col("destination_id")?, col("probability")?);
            let mut entries = Vec::new();
            for record in reader.records() {
                let record = record.map_err(csv_err)?;
                let line = record.position().map_or(0, |p| p.line());
                let schema = |message: String| DataError::Schema {
                    file: file.clone(),
                    line,
                    message,
                };
                let region = |raw: &str| {
                    tess.region_index(level, raw.trim()).ok_or_else(|| {
                        schema(format!("unknown level {level} region `{}`", raw.trim()))
                    })
                };
                let o = region(&record[c_o])?;
                let d = region(&record[c_d])?;
                let p: f64 = record[c_p]
                    .trim()
                    .parse()
                    .map_err(|_| schema(format!("bad probability `{}`", &record[c_p])))?;
                entries.push((o, d, p));
            }
            levels.push(OdMatrix::from_entries(
                level,
                tess.region_count(level),
                entries,
                |r| tess.region_id(level, r).to_string(),
            )?);
        }
        Ok(Self { levels })
    }

    pub fn memory_bytes(&self) -> usize {
        self.levels.iter().map(OdMatrix::memory_bytes).sum()
    }
}

/// Destination region for a long-range interaction starting at `home`
/// (a region id at `level`), drawn from that level's OD row.
pub fn sample_longrange_region<R: Rng + ?Sized>(
    home: u32,
    level: usize,
    od: &OdMatrixSet,
    rng: &mut R,
) -> u32 {
    od.level(level)
        .sample_filtered(home, rng, |_| true)
        .expect("validated rows sum to one")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn names(r: u32) -> String {
        r.to_string()
    }

    #[test]
    fn non_stochastic_row_is_named() {
        let err = OdMatrix::from_entries(0, 3, [(0, 0, 0.5), (0, 1, 0.4), (0, 2, 0.0)], names)
            .unwrap_err();
        assert!(err.to_string().contains("row 0 sums to 0.9"), "{err}");
    }

    #[test]
    fn missing_row_sums_to_zero() {
        let err = OdMatrix::from_entries(0, 2, [(0, 1, 1.0)], names).unwrap_err();
        assert!(err.to_string().contains("row 1 sums to 0"), "{err}");
    }

    #[test]
    fn identity_returns_home() {
        let od = OdMatrixSet::new(vec![OdMatrix::identity(5)]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(sample_longrange_region(3, 0, &od, &mut rng), 3);
        }
    }

    #[test]
    fn one_hot_row() {
        let mut entries: Vec<(u32, u32, f64)> = (0..8).map(|o| (o, o, 1.0)).collect();
        entries[2] = (2, 5, 1.0);
        let od = OdMatrixSet::new(vec![OdMatrix::from_entries(0, 8, entries, names).unwrap()]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!((0..100).all(|_| sample_longrange_region(2, 0, &od, &mut rng) == 5));
    }

    #[test]
    fn filtered_sampling_renormalises() {
        let m = OdMatrix::from_entries(
            0,
            3,
            [(0, 0, 0.5), (0, 1, 0.25), (0, 2, 0.25), (1, 1, 1.0), (2, 2, 1.0)],
            names,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(m.sample_filtered(0, &mut rng, |d| d == 2), Some(2));
        assert_eq!(m.sample_filtered(1, &mut rng, |d| d == 0), None);
    }
}
