use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{SuccessReport, Tolerance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyRow {
    pub family: String,
    pub runs: usize,
    /// Passing runs per tolerance level.
    pub passes: Vec<usize>,
    /// `None` when there were no runs.
    pub rates: Vec<Option<f64>>,
}

impl FamilyRow {
    fn new(family: &str, levels: usize) -> Self {
        FamilyRow { family: family.to_string(), runs: 0, passes: vec![0; levels], rates: vec![None; levels] }
    }

    fn add(&mut self, report: Option<&SuccessReport>) {
        self.runs += 1;
        for (i, p) in self.passes.iter_mut().enumerate() {
            *p += usize::from(report.is_some_and(|r| r.overall(i)));
        }
        self.rates = self.passes.iter().map(|&p| Some(p as f64 / self.runs as f64)).collect();
    }
}

/// Success rates per scenario family and tolerance level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchTable {
    pub levels: Vec<Tolerance>,
    /// One row per family, by name.
    pub rows: Vec<FamilyRow>,
    /// All runs together.
    pub total: FamilyRow,
}

/// Aggregates reports by family. A `None` report is a run that failed before
/// it could be evaluated and counts as a failure at every level.
pub fn batch_report(results: &[(String, Option<SuccessReport>)], levels: &[Tolerance]) -> BatchTable {
    let mut rows = BTreeMap::<&str, FamilyRow>::new();
    let mut total = FamilyRow::new("all", levels.len());
    for (family, report) in results {
        rows.entry(family).or_insert_with(|| FamilyRow::new(family, levels.len())).add(report.as_ref());
        total.add(report.as_ref());
    }
    BatchTable { levels: levels.to_vec(), rows: rows.into_values().collect(), total }
}

impl fmt::Display for BatchTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.rows.iter().map(|r| r.family.len()).max().unwrap_or(0).max(6);
        write!(f, "{:<width$}  {:>4}", "family", "runs")?;
        for l in &self.levels {
            write!(f, "  {:>12}", format!("@{}m/{}s", l.distance_m, l.time_s))?;
        }
        writeln!(f)?;
        for row in self.rows.iter().chain(std::iter::once(&self.total)) {
            write!(f, "{:<width$}  {:>4}", row.family, row.runs)?;
            for rate in &row.rates {
                let cell = rate.map_or_else(|| "-".to_string(), |r| format!("{:.2}", r));
                write!(f, "  {cell:>12}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
