//! Small CSV readers for prediction and score files.

use std::cmp::Ordering;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

/// A headed CSV file held as strings, with 1-based line numbers per record.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<(u64, Vec<String>)>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if header.iter().all(String::is_empty) {
            bail!("{}: line 1: missing header row", path.display());
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.with_context(|| format!("{}: malformed CSV", path.display()))?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec.iter().map(|v| v.trim().to_string()).collect()));
        }
        if rows.is_empty() {
            bail!("{}: no data rows", path.display());
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("line 1: no column named '{name}' (columns: {})", self.header.join(", ")))
    }

    pub fn strings(&self, name: &str) -> Result<Vec<String>> {
        let c = self.column(name)?;
        self.rows
            .iter()
            .map(|(line, r)| match r.get(c) {
                Some(v) if !v.is_empty() => Ok(v.clone()),
                _ => Err(anyhow!("line {line}: missing value in column '{name}'")),
            })
            .collect()
    }

    pub fn numbers(&self, name: &str) -> Result<Vec<f64>> {
        let c = self.column(name)?;
        self.rows
            .iter()
            .map(|(line, r)| {
                let v = r.get(c).map(String::as_str).unwrap_or("");
                match v.parse::<f64>() {
                    Ok(x) if !x.is_nan() => Ok(x),
                    _ => Err(anyhow!("line {line}: column '{name}' holds '{v}', expected a number")),
                }
            })
            .collect()
    }
}

/// Numeric-aware ordering so "2" sorts before "10".
fn label_cmp(a: &str, b: &str) -> Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y),
        _ => a.cmp(b),
    }
}

/// Distinct labels in sorted order.
pub fn class_names<'a>(values: impl IntoIterator<Item = &'a String>) -> Vec<String> {
    let mut names: Vec<String> = values.into_iter().cloned().collect();
    names.sort_by(|a, b| label_cmp(a, b));
    names.dedup();
    names
}

/// Index of the positive class: the named one, or the last in sorted order.
pub fn positive_index(names: &[String], positive: Option<&str>) -> Result<usize> {
    match positive {
        Some(p) => names.iter().position(|n| n == p).ok_or_else(|| anyhow!("positive class '{p}' does not occur (classes: {})", names.join(", "))),
        None => Ok(names
            .iter()
            .enumerate()
            .max_by(|a, b| label_cmp(a.1, b.1))
            .map(|(i, _)| i)
            .ok_or_else(|| anyhow!("no classes"))?),
    }
}

pub fn encode(values: &[String], names: &[String]) -> Vec<usize> {
    values.iter().map(|v| names.iter().position(|n| n == v).expect("name list covers all values")).collect()
}

/// Truth and predicted labels from a prediction file.
pub struct Predictions {
    pub names: Vec<String>,
    pub truth: Vec<String>,
    pub predicted: Vec<String>,
}

pub fn read_predictions(path: &Path, truth_col: &str, pred_col: &str) -> Result<Predictions> {
    let t = Table::read(path)?;
    let truth = t.strings(truth_col).with_context(|| path.display().to_string())?;
    let predicted = t.strings(pred_col).with_context(|| path.display().to_string())?;
    let names = class_names(truth.iter().chain(&predicted));
    Ok(Predictions { names, truth, predicted })
}

/// Truth labels and real-valued scores from a score file.
pub struct Scores {
    pub truth: Vec<String>,
    pub scores: Vec<f64>,
}

pub fn read_scores(path: &Path, truth_col: &str, score_col: &str) -> Result<Scores> {
    let t = Table::read(path)?;
    let truth = t.strings(truth_col).with_context(|| path.display().to_string())?;
    let scores = t.numbers(score_col).with_context(|| path.display().to_string())?;
    Ok(Scores { truth, scores })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_labels_sort_numerically() {
        let v: Vec<String> = ["10", "2", "1", "2"].iter().map(|s| s.to_string()).collect();
        assert_eq!(class_names(&v), vec!["1", "2", "10"]);
        assert_eq!(positive_index(&class_names(&v), None).unwrap(), 2);
        let w: Vec<String> = ["neg", "pos"].iter().map(|s| s.to_string()).collect();
        assert_eq!(positive_index(&w, None).unwrap(), 1);
        assert!(positive_index(&w, Some("x")).is_err());
    }
}
