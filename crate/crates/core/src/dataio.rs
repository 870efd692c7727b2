//! Result matrices: loading, validation, serialization and curation filters.
//!
//! Two CSV layouts are supported. The *wide* layout has a header row whose
//! first cell is `agent` followed by one column per item, and one row per
//! agent; blank cells are missing. The *long* layout has one
//! `agent,item,value` record per cell (an optional header with that exact
//! spelling is skipped); cells that never appear are missing.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normalize::BinaryResponseMatrix;
use crate::stats;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}, column `{column}`: `{value}` is not a finite number")]
    NonNumeric {
        line: u64,
        column: String,
        value: String,
    },
    #[error("line {line}: duplicate cell ({agent}, {item}), first given on line {first_line}")]
    DuplicateCell {
        line: u64,
        first_line: u64,
        agent: String,
        item: String,
    },
    #[error("duplicate {kind} label `{label}`")]
    DuplicateLabel { kind: &'static str, label: String },
    #[error("empty result matrix")]
    Empty,
    #[error("matrix is {agents}x{items}; at least {min_agents}x{min_items} is required")]
    TooSmall {
        agents: usize,
        items: usize,
        min_agents: usize,
        min_items: usize,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value at agent `{agent}`, item `{item}`")]
    NonFinite { agent: String, item: String },
    #[error("matrices are not aligned: {0}")]
    Misaligned(String),
    #[error("invalid threshold: {0}")]
    InvalidThreshold(String),
}

/// CSV layout of a result file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// `agent` column followed by one column per item; blank cells are missing.
    Wide,
    /// `agent,item,value` rows. Unlisted cells and blank values are missing;
    /// labels are ordered by first appearance.
    Long,
}

impl std::str::FromStr for Layout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wide" => Ok(Layout::Wide),
            "long" => Ok(Layout::Long),
            other => Err(format!("unknown layout `{other}` (expected wide|long)")),
        }
    }
}

/// Minimum shape enforced on construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MinShape {
    pub agents: usize,
    pub items: usize,
}

impl MinShape {
    /// Two agents and two items: the smallest matrix on which both item and
    /// agent parameters have a population to be estimated from.
    pub const FIT: MinShape = MinShape {
        agents: 2,
        items: 2,
    };
    /// A single agent scored against an existing item bank.
    pub const SCORING: MinShape = MinShape {
        agents: 1,
        items: 1,
    };
}

/// Agents × items matrix of raw benchmark scores.
///
/// Missing cells hold `0.0` in `values` and `true` in `missing_mask`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawResultMatrix")]
pub struct ResultMatrix {
    agent_ids: Vec<String>,
    item_ids: Vec<String>,
    values: Vec<Vec<f64>>,
    missing_mask: Vec<Vec<bool>>,
}

#[derive(Deserialize)]
struct RawResultMatrix {
    agent_ids: Vec<String>,
    item_ids: Vec<String>,
    values: Vec<Vec<f64>>,
    missing_mask: Vec<Vec<bool>>,
}

impl TryFrom<RawResultMatrix> for ResultMatrix {
    type Error = DataError;

    fn try_from(raw: RawResultMatrix) -> Result<Self, Self::Error> {
        ResultMatrix::new(raw.agent_ids, raw.item_ids, raw.values, raw.missing_mask)
    }
}

impl ResultMatrix {
    pub fn new(
        agent_ids: Vec<String>,
        item_ids: Vec<String>,
        values: Vec<Vec<f64>>,
        missing_mask: Vec<Vec<bool>>,
    ) -> Result<Self, DataError> {
        Self::with_min_shape(agent_ids, item_ids, values, missing_mask, MinShape::FIT)
    }

    pub fn with_min_shape(
        agent_ids: Vec<String>,
        item_ids: Vec<String>,
        mut values: Vec<Vec<f64>>,
        missing_mask: Vec<Vec<bool>>,
        min: MinShape,
    ) -> Result<Self, DataError> {
        check_labels(&agent_ids, &item_ids, min)?;
        check_grid_shape(&values, agent_ids.len(), item_ids.len(), "values")?;
        check_grid_shape(
            &missing_mask,
            agent_ids.len(),
            item_ids.len(),
            "missing_mask",
        )?;
        for (j, row) in values.iter_mut().enumerate() {
            for (i, v) in row.iter_mut().enumerate() {
                if missing_mask[j][i] {
                    *v = 0.0;
                } else if !v.is_finite() {
                    return Err(DataError::NonFinite {
                        agent: agent_ids[j].clone(),
                        item: item_ids[i].clone(),
                    });
                }
            }
        }
        Ok(Self {
            agent_ids,
            item_ids,
            values,
            missing_mask,
        })
    }

    /// Builds a matrix from optional cells (`None` = missing).
    pub fn from_cells(
        agent_ids: Vec<String>,
        item_ids: Vec<String>,
        cells: Vec<Vec<Option<f64>>>,
    ) -> Result<Self, DataError> {
        Self::from_cells_with_min_shape(agent_ids, item_ids, cells, MinShape::FIT)
    }

    pub fn from_cells_with_min_shape(
        agent_ids: Vec<String>,
        item_ids: Vec<String>,
        cells: Vec<Vec<Option<f64>>>,
        min: MinShape,
    ) -> Result<Self, DataError> {
        let values = cells
            .iter()
            .map(|r| r.iter().map(|c| c.unwrap_or(0.0)).collect())
            .collect();
        let mask = cells
            .iter()
            .map(|r| r.iter().map(Option::is_none).collect())
            .collect();
        Self::with_min_shape(agent_ids, item_ids, values, mask, min)
    }

    pub fn agent_ids(&self) -> &[String] {
        &self.agent_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn n_agents(&self) -> usize {
        self.agent_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn missing_mask(&self) -> &[Vec<bool>] {
        &self.missing_mask
    }

    pub fn get(&self, agent: usize, item: usize) -> Option<f64> {
        if self.missing_mask[agent][item] {
            None
        } else {
            Some(self.values[agent][item])
        }
    }

    pub fn row(&self, agent: usize) -> impl Iterator<Item = Option<f64>> + '_ {
        (0..self.n_items()).map(move |i| self.get(agent, i))
    }

    pub fn column(&self, item: usize) -> impl Iterator<Item = Option<f64>> + '_ {
        (0..self.n_agents()).map(move |j| self.get(j, item))
    }

    pub fn cells(&self) -> Vec<Vec<Option<f64>>> {
        (0..self.n_agents())
            .map(|j| self.row(j).collect())
            .collect()
    }

    pub fn agent_index(&self, id: &str) -> Option<usize> {
        self.agent_ids.iter().position(|a| a == id)
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.item_ids.iter().position(|a| a == id)
    }

    /// Keeps the listed item columns, in their current order.
    pub fn retain_items(&self, keep: &[String]) -> Result<Self, DataError> {
        self.retain_items_with_min(keep, MinShape::FIT)
    }

    pub fn retain_items_with_min(&self, keep: &[String], min: MinShape) -> Result<Self, DataError> {
        let keep: HashSet<&str> = keep.iter().map(String::as_str).collect();
        let cols: Vec<usize> = (0..self.n_items())
            .filter(|&i| keep.contains(self.item_ids[i].as_str()))
            .collect();
        self.select(&(0..self.n_agents()).collect::<Vec<_>>(), &cols, min)
    }

    /// Keeps the listed agent rows, in their current order.
    pub fn retain_agents(&self, keep: &[String]) -> Result<Self, DataError> {
        let keep: HashSet<&str> = keep.iter().map(String::as_str).collect();
        let rows: Vec<usize> = (0..self.n_agents())
            .filter(|&j| keep.contains(self.agent_ids[j].as_str()))
            .collect();
        self.select(
            &rows,
            &(0..self.n_items()).collect::<Vec<_>>(),
            MinShape::FIT,
        )
    }

    fn select(&self, rows: &[usize], cols: &[usize], min: MinShape) -> Result<Self, DataError> {
        let agent_ids = rows.iter().map(|&j| self.agent_ids[j].clone()).collect();
        let item_ids = cols.iter().map(|&i| self.item_ids[i].clone()).collect();
        let values = rows
            .iter()
            .map(|&j| cols.iter().map(|&i| self.values[j][i]).collect())
            .collect();
        let mask = rows
            .iter()
            .map(|&j| cols.iter().map(|&i| self.missing_mask[j][i]).collect())
            .collect();
        Self::with_min_shape(agent_ids, item_ids, values, mask, min)
    }

    pub fn to_json(&self) -> Result<String, DataError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, DataError> {
        Ok(serde_json::from_str(s)?)
    }
}

pub(crate) fn check_labels(
    agent_ids: &[String],
    item_ids: &[String],
    min: MinShape,
) -> Result<(), DataError> {
    if agent_ids.is_empty() || item_ids.is_empty() {
        return Err(DataError::Empty);
    }
    if agent_ids.len() < min.agents || item_ids.len() < min.items {
        return Err(DataError::TooSmall {
            agents: agent_ids.len(),
            items: item_ids.len(),
            min_agents: min.agents,
            min_items: min.items,
        });
    }
    for (kind, labels) in [("agent", agent_ids), ("item", item_ids)] {
        let mut seen = HashSet::with_capacity(labels.len());
        for l in labels {
            if !seen.insert(l.as_str()) {
                return Err(DataError::DuplicateLabel {
                    kind,
                    label: l.clone(),
                });
            }
        }
    }
    Ok(())
}

pub(crate) fn check_grid_shape<T>(
    grid: &[Vec<T>],
    rows: usize,
    cols: usize,
    what: &str,
) -> Result<(), DataError> {
    if grid.len() != rows {
        return Err(DataError::Shape(format!(
            "{what} has {} rows, expected {rows}",
            grid.len()
        )));
    }
    if let Some((j, r)) = grid.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(DataError::Shape(format!(
            "{what} row {j} has {} columns, expected {cols}",
            r.len()
        )));
    }
    Ok(())
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_value(raw: &str, line: u64, column: &str) -> Result<f64, DataError> {
    let t = raw.trim();
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(DataError::NonNumeric {
            line,
            column: column.to_string(),
            value: t.to_string(),
        }),
    }
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader)
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

/// Loads a result matrix from a CSV file.
pub fn load_results(path: impl AsRef<Path>, layout: Layout) -> Result<ResultMatrix, DataError> {
    load_results_with_min(path, layout, MinShape::FIT)
}

pub fn load_results_with_min(
    path: impl AsRef<Path>,
    layout: Layout,
    min: MinShape,
) -> Result<ResultMatrix, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    read_results(file, layout, min)
}

pub fn read_results<R: Read>(
    reader: R,
    layout: Layout,
    min: MinShape,
) -> Result<ResultMatrix, DataError> {
    match layout {
        Layout::Wide => read_wide(reader, min),
        Layout::Long => read_long(reader, min),
    }
}

fn read_wide<R: Read>(reader: R, min: MinShape) -> Result<ResultMatrix, DataError> {
    let mut rdr = csv_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r?,
        None => return Err(DataError::Empty),
    };
    let hline = record_line(&header);
    if header.get(0) != Some("agent") {
        return Err(DataError::Malformed {
            line: hline,
            message: format!(
                "wide header must start with `agent`, found `{}`",
                header.get(0).unwrap_or("")
            ),
        });
    }
    let item_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if let Some(pos) = item_ids.iter().position(String::is_empty) {
        return Err(DataError::Malformed {
            line: hline,
            message: format!("empty item id in header column {}", pos + 2),
        });
    }
    let mut agent_ids = Vec::new();
    let mut cells = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = record_line(&rec);
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != item_ids.len() + 1 {
            return Err(DataError::Malformed {
                line,
                message: format!(
                    "expected {} fields, found {}",
                    item_ids.len() + 1,
                    rec.len()
                ),
            });
        }
        let agent = rec.get(0).unwrap_or("").to_string();
        if agent.is_empty() {
            return Err(DataError::Malformed {
                line,
                message: "empty agent id".into(),
            });
        }
        let row = rec
            .iter()
            .skip(1)
            .zip(&item_ids)
            .map(|(raw, item)| {
                if raw.is_empty() {
                    Ok(None)
                } else {
                    parse_value(raw, line, item).map(Some)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        agent_ids.push(agent);
        cells.push(row);
    }
    if agent_ids.is_empty() {
        return Err(DataError::Empty);
    }
    ResultMatrix::from_cells_with_min_shape(agent_ids, item_ids, cells, min)
}

fn is_long_header(rec: &csv::StringRecord) -> bool {
    rec.len() == 3 && rec.get(0) == Some("agent") && rec.get(1) == Some("item")
}

fn read_long<R: Read>(reader: R, min: MinShape) -> Result<ResultMatrix, DataError> {
    let mut rdr = csv_reader(reader);
    let mut agent_ids: Vec<String> = Vec::new();
    let mut item_ids: Vec<String> = Vec::new();
    let mut agent_pos: HashMap<String, usize> = HashMap::new();
    let mut item_pos: HashMap<String, usize> = HashMap::new();
    let mut cells: HashMap<(usize, usize), (Option<f64>, u64)> = HashMap::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = record_line(&rec);
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if k == 0 && is_long_header(&rec) {
            continue;
        }
        if rec.len() != 3 {
            return Err(DataError::Malformed {
                line,
                message: format!("expected 3 fields (agent,item,value), found {}", rec.len()),
            });
        }
        let (agent, item) = (&rec[0], &rec[1]);
        if agent.is_empty() || item.is_empty() {
            return Err(DataError::Malformed {
                line,
                message: "empty agent or item id".into(),
            });
        }
        // an empty value registers both labels without observing the cell
        let value = match rec[2].trim() {
            "" => None,
            v => Some(parse_value(v, line, "value")?),
        };
        let j = *agent_pos.entry(agent.to_string()).or_insert_with(|| {
            agent_ids.push(agent.to_string());
            agent_ids.len() - 1
        });
        let i = *item_pos.entry(item.to_string()).or_insert_with(|| {
            item_ids.push(item.to_string());
            item_ids.len() - 1
        });
        if let Some(&(_, first_line)) = cells.get(&(j, i)) {
            return Err(DataError::DuplicateCell {
                line,
                first_line,
                agent: agent.to_string(),
                item: item.to_string(),
            });
        }
        cells.insert((j, i), (value, line));
    }
    if cells.values().all(|(v, _)| v.is_none()) {
        return Err(DataError::Empty);
    }
    let grid = (0..agent_ids.len())
        .map(|j| {
            (0..item_ids.len())
                .map(|i| cells.get(&(j, i)).and_then(|&(v, _)| v))
                .collect()
        })
        .collect();
    ResultMatrix::from_cells_with_min_shape(agent_ids, item_ids, grid, min)
}

/// Writes a matrix as CSV. Values use the shortest representation that
/// parses back to the same `f64`.
pub fn write_results<W: Write>(
    rm: &ResultMatrix,
    writer: W,
    layout: Layout,
) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    match layout {
        Layout::Wide => {
            let mut header = vec!["agent".to_string()];
            header.extend(rm.item_ids.iter().cloned());
            w.write_record(&header)?;
            for (j, agent) in rm.agent_ids.iter().enumerate() {
                let mut rec = vec![agent.clone()];
                rec.extend(
                    rm.row(j)
                        .map(|c| c.map(|v| v.to_string()).unwrap_or_default()),
                );
                w.write_record(&rec)?;
            }
        }
        Layout::Long => {
            w.write_record(["agent", "item", "value"])?;
            for (j, agent) in rm.agent_ids.iter().enumerate() {
                for (i, item) in rm.item_ids.iter().enumerate() {
                    let v = rm.get(j, i).map(|v| v.to_string()).unwrap_or_default();
                    w.write_record([agent.as_str(), item.as_str(), &v])?;
                }
            }
        }
    }
    w.flush().map_err(|e| DataError::Io {
        path: "<writer>".into(),
        source: e,
    })?;
    Ok(())
}

pub fn save_results(
    rm: &ResultMatrix,
    path: impl AsRef<Path>,
    layout: Layout,
) -> Result<(), DataError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    write_results(rm, file, layout)
}

/// One win/loss trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub agent: String,
    pub item: String,
    pub win: f64,
}

/// Loads `agent,item,win` trial records (optional header row).
pub fn load_trials(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    read_trials(file)
}

pub fn read_trials<R: Read>(reader: R) -> Result<Vec<TrialRecord>, DataError> {
    let mut rdr = csv_reader(reader);
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = record_line(&rec);
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if k == 0 && rec.len() == 3 && rec.get(0) == Some("agent") && rec.get(1) == Some("item") {
            continue;
        }
        if rec.len() != 3 {
            return Err(DataError::Malformed {
                line,
                message: format!("expected 3 fields (agent,item,win), found {}", rec.len()),
            });
        }
        out.push(TrialRecord {
            agent: rec[0].to_string(),
            item: rec[1].to_string(),
            win: parse_value(&rec[2], line, "win")?,
        });
    }
    if out.is_empty() {
        return Err(DataError::Empty);
    }
    Ok(out)
}

/// Loads a two-column `item,value` reference score file (optional header).
pub fn load_reference(path: impl AsRef<Path>) -> Result<BTreeMap<String, f64>, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    read_reference(file)
}

pub fn read_reference<R: Read>(reader: R) -> Result<BTreeMap<String, f64>, DataError> {
    let mut rdr = csv_reader(reader);
    let mut out = BTreeMap::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = record_line(&rec);
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != 2 {
            return Err(DataError::Malformed {
                line,
                message: format!("expected 2 fields (item,value), found {}", rec.len()),
            });
        }
        if k == 0 && rec[1].parse::<f64>().is_err() {
            continue;
        }
        let v = parse_value(&rec[1], line, "value")?;
        if out.insert(rec[0].to_string(), v).is_some() {
            return Err(DataError::DuplicateLabel {
                kind: "reference item",
                label: rec[0].to_string(),
            });
        }
    }
    Ok(out)
}

/// Rule deciding when two agent rows are repeats of one another.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DedupeRule {
    /// Identical values and identical missing pattern.
    Exact,
    /// Identical rows, or Pearson correlation over shared non-missing items
    /// strictly above `max_corr`.
    Correlation { max_corr: f64 },
}

impl DedupeRule {
    pub fn correlation(max_corr: f64) -> Result<Self, DataError> {
        if !(max_corr > 0.0 && max_corr <= 1.0) {
            return Err(DataError::InvalidThreshold(format!(
                "max_corr must be in (0, 1], got {max_corr}"
            )));
        }
        Ok(DedupeRule::Correlation { max_corr })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicatePair {
    pub kept_id: String,
    pub removed_id: String,
    /// Pearson correlation over shared items; `None` when undefined
    /// (e.g. two identical constant rows).
    pub correlation: Option<f64>,
}

/// What the curation filters removed, and with which thresholds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub removed_constant_items: Vec<String>,
    pub removed_duplicate_agents: Vec<DuplicatePair>,
    pub dedupe_rule: Option<DedupeRule>,
}

impl FilterReport {
    pub fn merge(mut self, other: FilterReport) -> FilterReport {
        self.removed_constant_items
            .extend(other.removed_constant_items);
        self.removed_duplicate_agents
            .extend(other.removed_duplicate_agents);
        self.dedupe_rule = other.dedupe_rule.or(self.dedupe_rule);
        self
    }
}

/// Drops items whose observed binary responses are all 0 or all 1 (or that
/// have no observed response at all). Such items carry no information about
/// discrimination and cannot be fitted.
pub fn filter_constant_items(
    rm: &ResultMatrix,
    on: &BinaryResponseMatrix,
) -> Result<(BinaryResponseMatrix, FilterReport), DataError> {
    if rm.agent_ids() != on.agent_ids() || rm.item_ids() != on.item_ids() {
        return Err(DataError::Misaligned(
            "binary responses do not carry the result matrix's labels".into(),
        ));
    }
    let (filtered, removed) = on.without_constant_items()?;
    Ok((
        filtered,
        FilterReport {
            removed_constant_items: removed,
            ..FilterReport::default()
        },
    ))
}

fn rows_identical(rm: &ResultMatrix, a: usize, b: usize) -> bool {
    rm.row(a).zip(rm.row(b)).all(|(x, y)| x == y)
}

fn shared_correlation(rm: &ResultMatrix, a: usize, b: usize) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = rm
        .row(a)
        .zip(rm.row(b))
        .filter_map(|(x, y)| Some((x?, y?)))
        .unzip();
    stats::pearson(&xs, &ys)
}

/// Removes repeated agent rows, keeping the first occurrence in input order.
///
/// Each row is compared only against rows that were kept, so a removed row
/// never causes further removals.
pub fn dedupe_agents(
    rm: &ResultMatrix,
    rule: DedupeRule,
) -> Result<(ResultMatrix, FilterReport), DataError> {
    if let DedupeRule::Correlation { max_corr } = rule {
        DedupeRule::correlation(max_corr)?;
    }
    let mut kept: Vec<usize> = Vec::new();
    let mut pairs = Vec::new();
    for j in 0..rm.n_agents() {
        let dup = kept.iter().find_map(|&k| {
            let corr = shared_correlation(rm, k, j);
            let hit = rows_identical(rm, k, j)
                || matches!((rule, corr), (DedupeRule::Correlation { max_corr }, Some(c)) if c > max_corr);
            hit.then_some((k, corr))
        });
        match dup {
            Some((k, corr)) => pairs.push(DuplicatePair {
                kept_id: rm.agent_ids[k].clone(),
                removed_id: rm.agent_ids[j].clone(),
                correlation: corr,
            }),
            None => kept.push(j),
        }
    }
    let keep_ids: Vec<String> = kept.iter().map(|&j| rm.agent_ids[j].clone()).collect();
    let out = rm.retain_agents(&keep_ids)?;
    Ok((
        out,
        FilterReport {
            removed_duplicate_agents: pairs,
            dedupe_rule: Some(rule),
            ..FilterReport::default()
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|k| format!("{prefix}{k}")).collect()
    }

    #[test]
    fn wide_two_by_three() {
        let csv = "agent,g1,g2,g3\nA,1,2.5,-3\nB,0,1e3,7\n";
        let rm = read_results(csv.as_bytes(), Layout::Wide, MinShape::FIT).unwrap();
        assert_eq!(rm.n_agents(), 2);
        assert_eq!(rm.n_items(), 3);
        assert!(rm.missing_mask().iter().flatten().all(|m| !m));
        assert_eq!(rm.get(1, 1), Some(1000.0));
    }

    #[test]
    fn wide_blank_cell_is_missing() {
        let csv = "agent,g1,g2\nA,1,\nB,,2\n";
        let rm = read_results(csv.as_bytes(), Layout::Wide, MinShape::FIT).unwrap();
        assert_eq!(rm.get(0, 1), None);
        assert_eq!(rm.get(1, 0), None);
        assert_eq!(rm.get(1, 1), Some(2.0));
    }

    #[test]
    fn wide_header_must_start_with_agent() {
        let err = read_results(
            "name,g1,g2\nA,1,2\nB,1,2\n".as_bytes(),
            Layout::Wide,
            MinShape::FIT,
        )
        .unwrap_err();
        assert!(matches!(err, DataError::Malformed { line: 1, .. }), "{err}");
    }

    #[test]
    fn wide_non_numeric_reports_line_and_column() {
        let err = read_results(
            "agent,g1,g2\nA,1,2\nB,x,2\n".as_bytes(),
            Layout::Wide,
            MinShape::FIT,
        )
        .unwrap_err();
        match err {
            DataError::NonNumeric {
                line,
                column,
                value,
            } => {
                assert_eq!((line, column.as_str(), value.as_str()), (3, "g1", "x"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn wide_ragged_row_is_malformed() {
        let err = read_results(
            "agent,g1,g2\nA,1\nB,1,2\n".as_bytes(),
            Layout::Wide,
            MinShape::FIT,
        )
        .unwrap_err();
        assert!(matches!(err, DataError::Malformed { line: 2, .. }));
    }

    #[test]
    fn nan_and_inf_are_rejected() {
        for bad in ["NaN", "inf"] {
            let csv = format!("agent,g1,g2\nA,1,{bad}\nB,1,2\n");
            assert!(matches!(
                read_results(csv.as_bytes(), Layout::Wide, MinShape::FIT),
                Err(DataError::NonNumeric { .. })
            ));
        }
    }

    #[test]
    fn long_duplicate_cell_is_an_error() {
        let csv = "agent,item,value\nA,g1,1\nA,g2,2\nB,g1,3\nA,g1,4\n";
        let err = read_results(csv.as_bytes(), Layout::Long, MinShape::FIT).unwrap_err();
        match err {
            DataError::DuplicateCell {
                line, first_line, ..
            } => assert_eq!((line, first_line), (5, 2)),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn long_unmentioned_cells_are_missing() {
        let csv = "A,g1,1\nA,g2,2\nB,g1,3\n";
        let rm = read_results(csv.as_bytes(), Layout::Long, MinShape::FIT).unwrap();
        assert_eq!(rm.agent_ids(), ["A", "B"]);
        assert_eq!(rm.item_ids(), ["g1", "g2"]);
        assert_eq!(rm.get(1, 1), None);
    }

    #[test]
    fn empty_and_too_small() {
        assert!(matches!(
            read_results("agent,g1\n".as_bytes(), Layout::Wide, MinShape::FIT),
            Err(DataError::Empty)
        ));
        assert!(matches!(
            read_results(
                "agent,g1,g2\nA,1,2\n".as_bytes(),
                Layout::Wide,
                MinShape::FIT
            ),
            Err(DataError::TooSmall { .. })
        ));
        assert!(read_results(
            "agent,g1,g2\nA,1,2\n".as_bytes(),
            Layout::Wide,
            MinShape::SCORING
        )
        .is_ok());
    }

    #[test]
    fn duplicate_labels_rejected() {
        let err = ResultMatrix::from_cells(
            vec!["A".into(), "A".into()],
            ids("g", 2),
            vec![vec![Some(1.0); 2]; 2],
        )
        .unwrap_err();
        assert!(matches!(
            err,
            DataError::DuplicateLabel { kind: "agent", .. }
        ));
    }

    #[test]
    fn json_mirrors_fields_and_validates() {
        let rm = ResultMatrix::from_cells(
            ids("a", 2),
            ids("g", 2),
            vec![vec![Some(1.0), None], vec![Some(0.5), Some(2.0)]],
        )
        .unwrap();
        let js = rm.to_json().unwrap();
        for key in ["agent_ids", "item_ids", "values", "missing_mask"] {
            assert!(js.contains(key));
        }
        assert_eq!(ResultMatrix::from_json(&js).unwrap(), rm);
        let bad = js.replace("\"a1\"", "\"a0\"");
        assert!(ResultMatrix::from_json(&bad).is_err());
    }

    #[test]
    fn exact_duplicates_removed_keeping_first() {
        let rm = ResultMatrix::from_cells(
            ids("a", 4),
            ids("g", 3),
            vec![
                vec![Some(1.0), Some(2.0), Some(3.0)],
                vec![Some(1.0), Some(2.0), Some(3.0)],
                vec![Some(3.0), Some(1.0), Some(2.0)],
                vec![Some(1.0), Some(2.0), Some(3.0)],
            ],
        )
        .unwrap();
        let (out, report) = dedupe_agents(&rm, DedupeRule::Exact).unwrap();
        assert_eq!(out.agent_ids(), ["a0", "a2"]);
        let removed: Vec<_> = report
            .removed_duplicate_agents
            .iter()
            .map(|p| (p.kept_id.as_str(), p.removed_id.as_str()))
            .collect();
        assert_eq!(removed, [("a0", "a1"), ("a0", "a3")]);
    }

    #[test]
    fn correlation_rule_threshold() {
        // corr(row0,row1) = 0.95 exactly for this construction is not needed;
        // any pair below the threshold must survive.
        let rm = ResultMatrix::from_cells(
            ids("a", 2),
            ids("g", 4),
            vec![
                vec![Some(1.0), Some(2.0), Some(3.0), Some(4.0)],
                vec![Some(1.0), Some(3.0), Some(2.0), Some(4.0)],
            ],
        )
        .unwrap();
        let c = shared_correlation(&rm, 0, 1).unwrap();
        assert!((c - 0.8).abs() < 1e-12);
        let (out, _) = dedupe_agents(&rm, DedupeRule::correlation(0.99).unwrap()).unwrap();
        assert_eq!(out.n_agents(), 2);
        // Scaled copy: correlation 1, not identical.
        let rm2 = ResultMatrix::from_cells(
            ids("a", 3),
            ids("g", 3),
            vec![
                vec![Some(1.0), Some(2.0), Some(3.0)],
                vec![Some(2.0), Some(4.0), Some(6.0)],
                vec![Some(3.0), Some(1.0), Some(2.0)],
            ],
        )
        .unwrap();
        assert_eq!(
            dedupe_agents(&rm2, DedupeRule::Exact).unwrap().0.n_agents(),
            3
        );
        let (out, rep) = dedupe_agents(&rm2, DedupeRule::correlation(0.99).unwrap()).unwrap();
        assert_eq!(out.agent_ids(), ["a0", "a2"]);
        assert!((rep.removed_duplicate_agents[0].correlation.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_correlation_threshold() {
        assert!(DedupeRule::correlation(0.0).is_err());
        assert!(DedupeRule::correlation(1.5).is_err());
        assert!(DedupeRule::correlation(1.0).is_ok());
    }

    #[test]
    fn reference_file_with_and_without_header() {
        let r = read_reference("item,value\ng1,10\ng2,3.5\n".as_bytes()).unwrap();
        assert_eq!(r["g2"], 3.5);
        let r = read_reference("g1,10\n".as_bytes()).unwrap();
        assert_eq!(r.len(), 1);
    }
}
