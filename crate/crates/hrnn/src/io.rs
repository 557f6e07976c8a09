//! CSV formats.
//!
//! `hierarchy.csv` has the header `node_id,parent_id,weight`. The root has an
//! empty `parent_id`; an empty `weight` marks a weight to be imputed.
//!
//! `series.csv` has the header `node_id,period,value` in long format. Periods
//! are `YYYY-MM` (monthly) or `YYYY-MM-DD` (daily); one file uses a single
//! frequency. Rows may come in any order, but each node's periods must be
//! contiguous.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::{Datelike, Days, NaiveDate};
use hrnn_core::dataset::{to_rates, SeriesPanel};
use hrnn_core::hierarchy::NodeRecord;
use hrnn_core::{Hierarchy, NodeId};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RunError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frequency {
    Monthly,
    Daily,
}

impl Frequency {
    fn of(label: &str) -> Option<Self> {
        match label.len() {
            7 => Some(Frequency::Monthly),
            10 => Some(Frequency::Daily),
            _ => None,
        }
    }

    /// Consecutive periods map to consecutive ordinals.
    fn ordinal(self, label: &str) -> Option<i64> {
        match self {
            Frequency::Monthly => {
                let d = NaiveDate::parse_from_str(&format!("{label}-01"), "%Y-%m-%d").ok()?;
                Some(d.year() as i64 * 12 + d.month0() as i64)
            }
            Frequency::Daily => {
                let d = NaiveDate::parse_from_str(label, "%Y-%m-%d").ok()?;
                Some(d.num_days_from_ce() as i64)
            }
        }
    }

    fn label(self, ordinal: i64) -> String {
        match self {
            Frequency::Monthly => format!("{:04}-{:02}", ordinal.div_euclid(12), ordinal.rem_euclid(12) + 1),
            Frequency::Daily => {
                let epoch = NaiveDate::from_num_days_from_ce_opt(1).expect("day one");
                let d = epoch
                    .checked_add_days(Days::new((ordinal - 1) as u64))
                    .expect("date in range");
                d.format("%Y-%m-%d").to_string()
            }
        }
    }
}

#[derive(Debug, Deserialize)]
struct HierarchyRow {
    node_id: String,
    parent_id: Option<String>,
    weight: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SeriesRow {
    node_id: String,
    period: String,
    value: f64,
}

fn open(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| RunError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> RunError {
    RunError::Data(format!("{}: {e}", path.display()))
}

pub fn read_hierarchy_records(path: &Path) -> Result<Vec<NodeRecord>> {
    let mut rdr = open(path)?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: HierarchyRow = row.map_err(|e| csv_error(path, e))?;
        out.push(NodeRecord {
            id: row.node_id,
            parent: row.parent_id.filter(|p| !p.is_empty()),
            weight: row.weight,
        });
    }
    Ok(out)
}

pub fn read_hierarchy(path: &Path) -> Result<Hierarchy> {
    let records = read_hierarchy_records(path)?;
    Hierarchy::from_records(records).map_err(|e| RunError::Data(format!("{}: {e}", path.display())))
}

pub fn write_hierarchy(path: &Path, h: &Hierarchy) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["node_id", "parent_id", "weight"])
        .map_err(|e| csv_error(path, e))?;
    for r in h.records() {
        let weight = r.weight.map(|w| w.to_string()).unwrap_or_default();
        w.write_record([r.id.as_str(), r.parent.as_deref().unwrap_or(""), weight.as_str()])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| RunError::io(path, e))
}

/// Per-node observations on a shared calendar, as read from `series.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    pub frequency: Frequency,
    /// Ordinal of the first period of each node and its values.
    pub nodes: BTreeMap<String, (i64, Vec<f64>)>,
}

impl RawSeries {
    fn bounds(&self) -> Option<(i64, i64)> {
        let lo = self.nodes.values().map(|(s, _)| *s).min()?;
        let hi = self
            .nodes
            .values()
            .map(|(s, v)| s + v.len() as i64)
            .max()?;
        Some((lo, hi))
    }

    pub fn period_label(&self, ordinal: i64) -> String {
        self.frequency.label(ordinal)
    }

    /// Change rates of every node; each loses its first period.
    pub fn to_rates(&self) -> Result<RawSeries> {
        let mut nodes = BTreeMap::new();
        for (id, (start, levels)) in &self.nodes {
            let rates = to_rates(levels).map_err(|e| match e {
                hrnn_core::Error::NonPositiveLevel { position, value } => RunError::Data(format!(
                    "node {id:?}, period {}: level {value} is not positive",
                    self.period_label(start + position as i64)
                )),
                e => RunError::Data(format!("node {id:?}: {e}")),
            })?;
            nodes.insert(id.clone(), (start + 1, rates));
        }
        Ok(RawSeries {
            frequency: self.frequency,
            nodes,
        })
    }

    /// Aligns every node on the calendar spanning all observations.
    pub fn to_panel(&self, train_fraction: f64) -> Result<SeriesPanel> {
        let (lo, hi) = self
            .bounds()
            .ok_or_else(|| RunError::Data("series file has no rows".into()))?;
        let calendar: Vec<String> = (lo..hi).map(|o| self.period_label(o)).collect();
        let entries = self
            .nodes
            .iter()
            .map(|(id, (start, v))| (NodeId::new(id), (start - lo) as usize, v.clone()));
        SeriesPanel::new(calendar, entries, train_fraction).map_err(RunError::from)
    }
}

pub fn read_series(path: &Path) -> Result<RawSeries> {
    let mut rdr = open(path)?;
    let mut frequency = None;
    let mut points: BTreeMap<String, BTreeMap<i64, f64>> = BTreeMap::new();
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row: SeriesRow = rec.deserialize(Some(&headers)).map_err(|e| csv_error(path, e))?;
        let bad = |m: String| RunError::Data(format!("{} line {line}: {m}", path.display()));
        let f = Frequency::of(&row.period)
            .ok_or_else(|| bad(format!("period {:?} is neither YYYY-MM nor YYYY-MM-DD", row.period)))?;
        match frequency {
            None => frequency = Some(f),
            Some(g) if g != f => return Err(bad("monthly and daily periods are mixed".into())),
            _ => {}
        }
        let ordinal = f
            .ordinal(&row.period)
            .ok_or_else(|| bad(format!("invalid period {:?}", row.period)))?;
        if !row.value.is_finite() {
            return Err(bad(format!("node {:?}: value is not finite", row.node_id)));
        }
        let node = points.entry(row.node_id.clone()).or_default();
        if node.insert(ordinal, row.value).is_some() {
            return Err(bad(format!("node {:?} repeats period {}", row.node_id, row.period)));
        }
    }
    let frequency = frequency.unwrap_or(Frequency::Monthly);
    let mut nodes = BTreeMap::new();
    for (id, obs) in points {
        let start = *obs.keys().next().expect("at least one row");
        for (k, &ord) in obs.keys().enumerate() {
            if ord != start + k as i64 {
                return Err(RunError::Data(format!(
                    "{}: node {id:?} has a gap, period {} is missing",
                    path.display(),
                    frequency.label(start + k as i64)
                )));
            }
        }
        nodes.insert(id, (start, obs.values().copied().collect()));
    }
    Ok(RawSeries { frequency, nodes })
}

pub fn write_series(path: &Path, raw: &RawSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for (id, (start, values)) in &raw.nodes {
        for (k, v) in values.iter().enumerate() {
            w.serialize(SeriesRow {
                node_id: id.clone(),
                period: raw.period_label(start + k as i64),
                value: *v,
            })
            .map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| RunError::io(path, e))
}

/// Writes a panel's rates in long format.
pub fn write_panel(path: &Path, panel: &SeriesPanel) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for (id, s) in panel.iter() {
        for (k, v) in s.rates().iter().enumerate() {
            w.serialize(SeriesRow {
                node_id: id.to_string(),
                period: panel.calendar()[s.period(k)].clone(),
                value: *v,
            })
            .map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| RunError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| RunError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| RunError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn monthly_labels_round_trip() {
        let f = Frequency::Monthly;
        let o = f.ordinal("1999-12").unwrap();
        assert_eq!(f.label(o + 1), "2000-01");
        let d = Frequency::Daily;
        let o = d.ordinal("2020-02-28").unwrap();
        assert_eq!(d.label(o + 1), "2020-02-29");
        assert_eq!(d.label(o + 2), "2020-03-01");
    }

    #[test]
    fn reads_unordered_rows_and_builds_a_panel() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "s.csv",
            "node_id,period,value\nb,2001-02,1\na,2001-01,2\na,2001-02,3\nb,2001-03,4\n",
        );
        let raw = read_series(&p).unwrap();
        assert_eq!(raw.nodes["a"].1, vec![2.0, 3.0]);
        let panel = raw.to_panel(0.5).unwrap();
        assert_eq!(panel.calendar(), ["2001-01", "2001-02", "2001-03"]);
        assert_eq!(panel.series("b").unwrap().start(), 1);
    }

    #[test]
    fn rejects_gaps_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let gap = write(dir.path(), "g.csv", "node_id,period,value\na,2001-01,1\na,2001-03,1\n");
        let e = read_series(&gap).unwrap_err().to_string();
        assert!(e.contains("2001-02") && e.contains("\"a\""), "{e}");
        let dup = write(dir.path(), "d.csv", "node_id,period,value\na,2001-01,1\na,2001-01,2\n");
        assert!(read_series(&dup).is_err());
    }

    #[test]
    fn non_positive_level_names_node_and_period() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "l.csv", "node_id,period,value\nfood,2001-01,100\nfood,2001-02,0\n");
        let e = read_series(&p).unwrap().to_rates().unwrap_err();
        assert_eq!(e.exit_code(), 3);
        let msg = e.to_string();
        assert!(msg.contains("food") && msg.contains("2001-02"), "{msg}");
    }

    #[test]
    fn hierarchy_with_blank_fields() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "h.csv", "node_id,parent_id,weight\nall,,\nfood,all,0.3\nfuel,all,\n");
        let h = read_hierarchy(&p).unwrap();
        assert_eq!(h.root_id().as_str(), "all");
        assert_eq!(h.weight(h.require("fuel").unwrap()), None);
        let out = dir.path().join("h2.csv");
        write_hierarchy(&out, &h).unwrap();
        assert_eq!(read_hierarchy(&out).unwrap(), h);
    }
}
