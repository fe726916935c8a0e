//! Per-iteration compartment series, multi-run aggregation and CSV/JSON
//! export.
//!
//! CSV files start with `# key=value` metadata lines followed by a header
//! `iteration,<columns>`. Series columns are compartment labels; aggregate
//! columns are `<label>_mean,<label>_std` pairs. Columns always follow the
//! canonical compartment order.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::compartment::Compartment;
use crate::error::TrendError;
use crate::meanfield::Fidelity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Agent,
    Meanfield,
}

impl Mode {
    fn as_str(self) -> &'static str {
        match self {
            Mode::Agent => "agent",
            Mode::Meanfield => "meanfield",
        }
    }
}

impl FromStr for Mode {
    type Err = TrendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "agent" => Ok(Mode::Agent),
            "meanfield" => Ok(Mode::Meanfield),
            _ => Err(TrendError::Malformed(format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrendMeta {
    pub scenario_hash: String,
    pub seed: Option<u64>,
    pub mode: Mode,
    pub fidelity: Option<Fidelity>,
}

/// Counts (agent mode) or population values (mean-field mode) per
/// iteration; row `k` is the state after `k` iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendSeries {
    pub meta: TrendMeta,
    pub columns: Vec<Compartment>,
    pub rows: Vec<Vec<f64>>,
}

impl TrendSeries {
    /// Empty series over `columns`, reordered canonically.
    pub fn new(meta: TrendMeta, columns: &[Compartment]) -> Self {
        Self {
            meta,
            columns: canonical(columns),
            rows: Vec::new(),
        }
    }

    /// Appends the selected columns of a full 13-compartment vector.
    pub fn push_full(&mut self, values: &[f64; Compartment::COUNT]) {
        self.rows
            .push(self.columns.iter().map(|c| values[c.index()]).collect());
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, c: Compartment) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|&x| x == c)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    /// Sum of the given compartments per row; absent columns count as zero.
    pub fn sum_of(&self, set: &[Compartment]) -> Vec<f64> {
        let idx: Vec<usize> = self
            .columns
            .iter()
            .enumerate()
            .filter(|(_, c)| set.contains(c))
            .map(|(j, _)| j)
            .collect();
        self.rows.iter().map(|r| idx.iter().map(|&j| r[j]).sum()).collect()
    }

    pub fn row_total(&self, k: usize) -> f64 {
        self.rows[k].iter().sum()
    }
}

fn canonical(columns: &[Compartment]) -> Vec<Compartment> {
    Compartment::ALL
        .into_iter()
        .filter(|c| columns.contains(c))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateMeta {
    pub scenario_hash: String,
    pub seeds: Vec<u64>,
    pub mode: Mode,
    pub fidelity: Option<Fidelity>,
}

/// Element-wise mean and population standard deviation over runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub meta: AggregateMeta,
    pub columns: Vec<Compartment>,
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
}

impl Aggregate {
    pub fn mean_of(&self, c: Compartment) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|&x| x == c)?;
        Some(self.mean.iter().map(|r| r[j]).collect())
    }

    pub fn std_of(&self, c: Compartment) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|&x| x == c)?;
        Some(self.std.iter().map(|r| r[j]).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunBundle {
    pub runs: Vec<TrendSeries>,
    pub aggregate: Aggregate,
}

/// Aggregates homogeneous series: same scenario hash, mode, columns and
/// length.
pub fn aggregate_runs(series: Vec<TrendSeries>) -> Result<RunBundle, TrendError> {
    let first = series.first().ok_or(TrendError::Empty)?;
    let mut hashes: Vec<String> = series.iter().map(|s| s.meta.scenario_hash.clone()).collect();
    hashes.sort();
    hashes.dedup();
    if hashes.len() > 1 {
        return Err(TrendError::MismatchedHashes(hashes));
    }
    for s in &series[1..] {
        if s.meta.mode != first.meta.mode || s.meta.fidelity != first.meta.fidelity {
            return Err(TrendError::Mismatched("mode or fidelity differ".into()));
        }
        if s.columns != first.columns {
            return Err(TrendError::Mismatched("columns differ".into()));
        }
        if s.len() != first.len() {
            return Err(TrendError::Mismatched(format!(
                "lengths {} and {}",
                first.len(),
                s.len()
            )));
        }
    }

    let n = series.len() as f64;
    let (rows, cols) = (first.len(), first.columns.len());
    let mut mean = vec![vec![0.0; cols]; rows];
    let mut std = vec![vec![0.0; cols]; rows];
    for k in 0..rows {
        for j in 0..cols {
            // Running update: stays finite near the f64 limits.
            let (mut m, mut m2) = (0.0, 0.0);
            for (i, s) in series.iter().enumerate() {
                let x = s.rows[k][j];
                let delta = x - m;
                m += delta / (i + 1) as f64;
                m2 += delta * (x - m);
            }
            mean[k][j] = m;
            std[k][j] = (m2 / n).sqrt();
        }
    }
    let aggregate = Aggregate {
        meta: AggregateMeta {
            scenario_hash: first.meta.scenario_hash.clone(),
            seeds: series.iter().filter_map(|s| s.meta.seed).collect(),
            mode: first.meta.mode,
            fidelity: first.meta.fidelity,
        },
        columns: first.columns.clone(),
        mean,
        std,
    };
    Ok(RunBundle {
        runs: series,
        aggregate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown format `{s}`")),
        }
    }
}

impl Format {
    /// Guess from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

/// Anything that can be written as a trend file.
#[derive(Debug, Clone, PartialEq)]
pub enum TrendDocument {
    Series(TrendSeries),
    Aggregate(Aggregate),
}

impl From<TrendSeries> for TrendDocument {
    fn from(s: TrendSeries) -> Self {
        TrendDocument::Series(s)
    }
}

impl From<Aggregate> for TrendDocument {
    fn from(a: Aggregate) -> Self {
        TrendDocument::Aggregate(a)
    }
}

impl From<RunBundle> for TrendDocument {
    fn from(b: RunBundle) -> Self {
        TrendDocument::Aggregate(b.aggregate)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonDoc {
    kind: String,
    scenario_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seeds: Option<Vec<u64>>,
    mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fidelity: Option<Fidelity>,
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn header(doc: &TrendDocument) -> Vec<String> {
    let mut cols = vec!["iteration".to_string()];
    match doc {
        TrendDocument::Series(s) => cols.extend(s.columns.iter().map(|c| c.label().to_string())),
        TrendDocument::Aggregate(a) => {
            for c in &a.columns {
                cols.push(format!("{}_mean", c.label()));
                cols.push(format!("{}_std", c.label()));
            }
        }
    }
    cols
}

fn data_rows(doc: &TrendDocument) -> Vec<Vec<f64>> {
    match doc {
        TrendDocument::Series(s) => s
            .rows
            .iter()
            .enumerate()
            .map(|(k, r)| std::iter::once(k as f64).chain(r.iter().copied()).collect())
            .collect(),
        TrendDocument::Aggregate(a) => a
            .mean
            .iter()
            .zip(&a.std)
            .enumerate()
            .map(|(k, (m, s))| {
                std::iter::once(k as f64)
                    .chain(m.iter().zip(s).flat_map(|(m, s)| [*m, *s]))
                    .collect()
            })
            .collect(),
    }
}

fn meta_pairs(doc: &TrendDocument) -> Vec<(&'static str, String)> {
    let (kind, hash, mode, fidelity) = match doc {
        TrendDocument::Series(s) => ("series", &s.meta.scenario_hash, s.meta.mode, s.meta.fidelity),
        TrendDocument::Aggregate(a) => ("aggregate", &a.meta.scenario_hash, a.meta.mode, a.meta.fidelity),
    };
    let mut pairs = vec![("kind", kind.to_string()), ("scenario_hash", hash.clone())];
    match doc {
        TrendDocument::Series(s) => {
            if let Some(seed) = s.meta.seed {
                pairs.push(("seed", seed.to_string()));
            }
        }
        TrendDocument::Aggregate(a) => {
            let seeds: Vec<String> = a.meta.seeds.iter().map(u64::to_string).collect();
            pairs.push(("seeds", seeds.join(" ")));
        }
    }
    pairs.push(("mode", mode.as_str().to_string()));
    if let Some(f) = fidelity {
        pairs.push(("fidelity", f.to_string()));
    }
    pairs
}

/// Renders `doc` in `format`.
pub fn render(doc: &TrendDocument, format: Format) -> Result<String, TrendError> {
    match format {
        Format::Csv => {
            let mut out = String::new();
            for (k, v) in meta_pairs(doc) {
                writeln!(out, "# {k}={v}").expect("writing to a String");
            }
            out.push_str(&header(doc).join(","));
            out.push('\n');
            for row in data_rows(doc) {
                let cells: Vec<String> = row.iter().map(f64::to_string).collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            Ok(out)
        }
        Format::Json => {
            let json = match doc {
                TrendDocument::Series(s) => JsonDoc {
                    kind: "series".into(),
                    scenario_hash: s.meta.scenario_hash.clone(),
                    seed: s.meta.seed,
                    seeds: None,
                    mode: s.meta.mode,
                    fidelity: s.meta.fidelity,
                    columns: header(doc),
                    rows: data_rows(doc),
                },
                TrendDocument::Aggregate(a) => JsonDoc {
                    kind: "aggregate".into(),
                    scenario_hash: a.meta.scenario_hash.clone(),
                    seed: None,
                    seeds: Some(a.meta.seeds.clone()),
                    mode: a.meta.mode,
                    fidelity: a.meta.fidelity,
                    columns: header(doc),
                    rows: data_rows(doc),
                },
            };
            let mut text = serde_json::to_string_pretty(&json)?;
            text.push('\n');
            Ok(text)
        }
    }
}

/// Writes `doc` to `path`.
pub fn emit_trends(doc: &TrendDocument, format: Format, path: &Path) -> Result<(), TrendError> {
    let text = render(doc, format)?;
    std::fs::write(path, text).map_err(|source| TrendError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn malformed(msg: impl Into<String>) -> TrendError {
    TrendError::Malformed(msg.into())
}

/// Splits data columns (without `iteration`) into compartments, checking
/// the series or aggregate naming scheme.
fn parse_columns(columns: &[String], aggregate: bool) -> Result<Vec<Compartment>, TrendError> {
    let (first, rest) = columns.split_first().ok_or_else(|| malformed("no columns"))?;
    if first != "iteration" {
        return Err(malformed("first column must be `iteration`"));
    }
    let label = |s: &str| {
        s.parse::<Compartment>()
            .map_err(|_| malformed(format!("unknown column `{s}`")))
    };
    if aggregate {
        if rest.len() % 2 != 0 {
            return Err(malformed("aggregate columns come in mean/std pairs"));
        }
        rest.chunks(2)
            .map(|pair| {
                let m = pair[0]
                    .strip_suffix("_mean")
                    .ok_or_else(|| malformed(format!("expected a _mean column, got `{}`", pair[0])))?;
                let s = pair[1]
                    .strip_suffix("_std")
                    .ok_or_else(|| malformed(format!("expected a _std column, got `{}`", pair[1])))?;
                if m != s {
                    return Err(malformed(format!("unpaired columns `{}`, `{}`", pair[0], pair[1])));
                }
                label(m)
            })
            .collect()
    } else {
        rest.iter().map(|s| label(s)).collect()
    }
}

fn build(
    kind: &str,
    scenario_hash: String,
    seed: Option<u64>,
    seeds: Vec<u64>,
    mode: Mode,
    fidelity: Option<Fidelity>,
    columns: &[String],
    rows: Vec<Vec<f64>>,
) -> Result<TrendDocument, TrendError> {
    let aggregate = match kind {
        "series" => false,
        "aggregate" => true,
        _ => return Err(malformed(format!("unknown kind `{kind}`"))),
    };
    let comps = parse_columns(columns, aggregate)?;
    for (k, row) in rows.iter().enumerate() {
        if row.len() != columns.len() {
            return Err(malformed(format!("row {k} has {} values, expected {}", row.len(), columns.len())));
        }
        if row[0] != k as f64 {
            return Err(malformed(format!("row {k} has iteration {}", row[0])));
        }
    }
    if aggregate {
        let mean = rows
            .iter()
            .map(|r| r[1..].iter().step_by(2).copied().collect())
            .collect();
        let std = rows
            .iter()
            .map(|r| r[2..].iter().step_by(2).copied().collect())
            .collect();
        Ok(TrendDocument::Aggregate(Aggregate {
            meta: AggregateMeta {
                scenario_hash,
                seeds,
                mode,
                fidelity,
            },
            columns: comps,
            mean,
            std,
        }))
    } else {
        Ok(TrendDocument::Series(TrendSeries {
            meta: TrendMeta {
                scenario_hash,
                seed,
                mode,
                fidelity,
            },
            columns: comps,
            rows: rows.into_iter().map(|r| r[1..].to_vec()).collect(),
        }))
    }
}

/// Parses text produced by [`render`].
pub fn parse_trends(text: &str, format: Format) -> Result<TrendDocument, TrendError> {
    match format {
        Format::Json => {
            let doc: JsonDoc = serde_json::from_str(text)?;
            build(
                &doc.kind,
                doc.scenario_hash,
                doc.seed,
                doc.seeds.unwrap_or_default(),
                doc.mode,
                doc.fidelity,
                &doc.columns,
                doc.rows,
            )
        }
        Format::Csv => {
            let mut meta = std::collections::BTreeMap::new();
            let mut body = String::new();
            for line in text.lines() {
                if let Some(kv) = line.strip_prefix('#') {
                    let (k, v) = kv
                        .trim()
                        .split_once('=')
                        .ok_or_else(|| malformed(format!("bad metadata line `{line}`")))?;
                    meta.insert(k.trim().to_string(), v.trim().to_string());
                } else {
                    body.push_str(line);
                    body.push('\n');
                }
            }
            let get = |k: &str| meta.get(k).cloned().ok_or_else(|| malformed(format!("missing `{k}` metadata")));
            let seed = meta
                .get("seed")
                .map(|s| s.parse::<u64>().map_err(|_| malformed(format!("bad seed `{s}`"))))
                .transpose()?;
            let seeds = meta
                .get("seeds")
                .map(|s| {
                    s.split_whitespace()
                        .map(|x| x.parse::<u64>().map_err(|_| malformed(format!("bad seed `{x}`"))))
                        .collect::<Result<Vec<_>, _>>()
                })
                .transpose()?
                .unwrap_or_default();
            let fidelity = meta
                .get("fidelity")
                .map(|f| f.parse::<Fidelity>().map_err(malformed))
                .transpose()?;
            let mut reader = csv::ReaderBuilder::new().from_reader(body.as_bytes());
            let columns: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
            let mut rows = Vec::new();
            for record in reader.records() {
                let record = record?;
                rows.push(
                    record
                        .iter()
                        .map(|x| x.parse::<f64>().map_err(|_| malformed(format!("bad number `{x}`"))))
                        .collect::<Result<Vec<_>, _>>()?,
                );
            }
            build(
                &get("kind")?,
                get("scenario_hash")?,
                seed,
                seeds,
                get("mode")?.parse()?,
                fidelity,
                &columns,
                rows,
            )
        }
    }
}

/// Reads a trend file, picking the format from its extension.
pub fn read_trends(path: &Path) -> Result<TrendDocument, TrendError> {
    let text = std::fs::read_to_string(path).map_err(|source| TrendError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_trends(&text, Format::from_path(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use Compartment::*;

    fn series(hash: &str, seed: u64, rows: Vec<Vec<f64>>) -> TrendSeries {
        TrendSeries {
            meta: TrendMeta {
                scenario_hash: hash.into(),
                seed: Some(seed),
                mode: Mode::Agent,
                fidelity: None,
            },
            columns: vec![S, I, R],
            rows,
        }
    }

    #[test]
    fn single_series_has_zero_std() {
        let s = series("h", 1, vec![vec![9.0, 1.0, 0.0], vec![8.0, 1.0, 1.0]]);
        let b = aggregate_runs(vec![s.clone()]).unwrap();
        assert_eq!(b.aggregate.mean, s.rows);
        assert!(b.aggregate.std.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn two_point_mean_and_std() {
        let a = series("h", 1, vec![vec![10.0, 0.0, 0.0]]);
        let b = series("h", 2, vec![vec![20.0, 0.0, 0.0]]);
        let agg = aggregate_runs(vec![a, b]).unwrap().aggregate;
        assert_eq!(agg.mean[0][0], 15.0);
        assert_eq!(agg.std[0][0], 5.0);
        assert_eq!(agg.meta.seeds, vec![1, 2]);
    }

    #[test]
    fn mismatched_hashes_are_listed() {
        let a = series("aaa", 1, vec![vec![1.0, 0.0, 0.0]]);
        let b = series("bbb", 2, vec![vec![1.0, 0.0, 0.0]]);
        match aggregate_runs(vec![a, b]) {
            Err(TrendError::MismatchedHashes(h)) => assert_eq!(h, vec!["aaa", "bbb"]),
            other => panic!("{other:?}"),
        }
        assert!(matches!(aggregate_runs(vec![]), Err(TrendError::Empty)));
    }

    #[test]
    fn length_one_csv() {
        let s = series("h", 3, vec![vec![4999.0, 1.0, 0.0]]);
        let text = render(&s.into(), Format::Csv).unwrap();
        let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(body, vec!["iteration,S,I,R", "0,4999,1,0"]);
        assert!(text.contains("# scenario_hash=h"));
        assert!(text.contains("# seed=3"));
    }

    #[test]
    fn aggregate_column_order() {
        let runs = (0..3).map(|k| series("h", k, vec![vec![k as f64, 1.0, 2.0]])).collect();
        let doc: TrendDocument = aggregate_runs(runs).unwrap().into();
        let text = render(&doc, Format::Csv).unwrap();
        let head = text.lines().find(|l| !l.starts_with('#')).unwrap();
        assert_eq!(head, "iteration,S_mean,S_std,I_mean,I_std,R_mean,R_std");
    }

    #[test]
    fn round_trips() {
        let s = series(
            "h",
            3,
            vec![vec![0.1, 1.0 / 3.0, 1e-300], vec![f64::MAX, 5e-324, 12345.678]],
        );
        let mut mf = s.clone();
        mf.meta.mode = Mode::Meanfield;
        mf.meta.seed = None;
        mf.meta.fidelity = Some(Fidelity::AsWritten);
        let agg: TrendDocument = aggregate_runs(vec![s.clone(), s.clone()]).unwrap().into();
        for doc in [TrendDocument::Series(s), TrendDocument::Series(mf), agg] {
            for format in [Format::Csv, Format::Json] {
                let text = render(&doc, format).unwrap();
                assert_eq!(parse_trends(&text, format).unwrap(), doc, "{format:?}");
            }
        }
    }

    #[test]
    fn columns_are_canonical() {
        let s = TrendSeries::new(
            TrendMeta {
                scenario_hash: String::new(),
                seed: None,
                mode: Mode::Agent,
                fidelity: None,
            },
            &[R, S, IT, E],
        );
        assert_eq!(s.columns, vec![S, E, IT, R]);
    }
}
