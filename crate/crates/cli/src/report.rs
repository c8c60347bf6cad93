//! Merges metric rows from several stages into one comparison table with a
//! row per (split, pipeline) and a column per metric.

use std::fmt::Write as _;

use scholar_intent::eval::MetricRow;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub metrics: Vec<String>,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub split: String,
    pub pipeline: String,
    /// One cell per metric; `None` when the pipeline does not report it.
    pub values: Vec<Option<f64>>,
}

/// Rows and columns keep their order of first appearance. A later value
/// for the same cell replaces an earlier one.
pub fn merge(rows: &[MetricRow]) -> Table {
    let mut metrics: Vec<String> = Vec::new();
    for r in rows {
        if !metrics.contains(&r.metric) {
            metrics.push(r.metric.clone());
        }
    }
    let mut table: Vec<TableRow> = Vec::new();
    for r in rows {
        let col = metrics.iter().position(|m| *m == r.metric).expect("collected above");
        let idx = match table.iter().position(|t| t.split == r.split && t.pipeline == r.pipeline) {
            Some(i) => i,
            None => {
                table.push(TableRow {
                    split: r.split.clone(),
                    pipeline: r.pipeline.clone(),
                    values: vec![None; metrics.len()],
                });
                table.len() - 1
            }
        };
        table[idx].values[col] = Some(r.value);
    }
    Table { metrics, rows: table }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

impl Table {
    pub fn to_csv(&self) -> csv::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["split".to_string(), "pipeline".to_string()];
        header.extend(self.metrics.iter().cloned());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.split.clone(), row.pipeline.clone()];
            rec.extend(row.values.iter().map(|&v| cell(v)));
            w.write_record(&rec)?;
        }
        w.into_inner().map_err(|e| e.into_error().into())
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "| split | pipeline | {} |", self.metrics.join(" | "));
        let _ = writeln!(out, "|---|---|{}", "---|".repeat(self.metrics.len()));
        for row in &self.rows {
            let cells: Vec<String> = row.values.iter().map(|&v| cell(v)).collect();
            let _ = writeln!(out, "| {} | {} | {} |", row.split, row.pipeline, cells.join(" | "));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_layout() {
        let rows = vec![
            MetricRow::new("accuracy", 0.9, "test", "lstm"),
            MetricRow::new("rmse", 0.2, "test", "lstm"),
            MetricRow::new("accuracy", 0.5, "test", "markov"),
            MetricRow::new("f1_micro", 0.7, "cv5", "hybrid"),
        ];
        let t = merge(&rows);
        assert_eq!(t.metrics, vec!["accuracy", "rmse", "f1_micro"]);
        assert_eq!(t.rows.len(), 3);
        assert_eq!(t.rows[1].values, vec![Some(0.5), None, None]);
        let csv = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert_eq!(csv.lines().nth(2).unwrap(), "test,markov,0.5000,,");
    }
}
