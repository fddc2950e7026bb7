//! Datasets, CSV ingestion and class-prior estimation.
//!
//! A [`Dataset`] optionally carries one group identifier per row (a subject,
//! a hospital, ...). Rows sharing a group are not independent, and every
//! splitter in [`crate::resampling`] keeps a group on one side of a split.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Feature matrix, labels and optional group identifiers. Immutable once
/// built; transforms produce new datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_features: usize,
    labels: Vec<usize>,
    groups: Option<Vec<String>>,
    class_count: usize,
    label_names: Vec<String>,
    feature_names: Vec<String>,
}

impl Dataset {
    /// Build from row vectors. Label names default to the class indices.
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        let n_features = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n_features) {
            return Err(Error::DimensionMismatch { expected: n_features, got: bad.len() });
        }
        let features = rows.into_iter().flatten().collect();
        Self::from_flat(features, n_features, labels, class_count)
    }

    /// Build from a row-major feature buffer of `labels.len() * n_features`.
    pub fn from_flat(
        features: Vec<f64>,
        n_features: usize,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("dataset needs at least one row"));
        }
        if n_features == 0 {
            return Err(Error::invalid("dataset needs at least one feature"));
        }
        if class_count < 2 {
            return Err(Error::invalid("dataset needs at least two classes"));
        }
        if features.len() != labels.len() * n_features {
            return Err(Error::LengthMismatch { left: features.len(), right: labels.len() * n_features });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::LabelOutOfRange { label, class_count });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature values must be finite"));
        }
        Ok(Self {
            features,
            n_features,
            labels,
            groups: None,
            class_count,
            label_names: (0..class_count).map(|c| c.to_string()).collect(),
            feature_names: (0..n_features).map(|k| format!("x{k}")).collect(),
        })
    }

    pub fn with_groups(mut self, groups: Vec<String>) -> Result<Self> {
        if groups.len() != self.labels.len() {
            return Err(Error::LengthMismatch { left: groups.len(), right: self.labels.len() });
        }
        self.groups = Some(groups);
        Ok(self)
    }

    pub fn with_label_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.class_count {
            return Err(Error::LengthMismatch { left: names.len(), right: self.class_count });
        }
        self.label_names = names;
        Ok(self)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_features {
            return Err(Error::LengthMismatch { left: names.len(), right: self.n_features });
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.n_features)
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn groups(&self) -> Option<&[String]> {
        self.groups.as_deref()
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Dense group index per row (order of first appearance), or `None`
    /// when the dataset is ungrouped.
    pub fn group_indices(&self) -> Option<Vec<usize>> {
        let groups = self.groups.as_ref()?;
        let mut seen: HashMap<&str, usize> = HashMap::new();
        Some(
            groups
                .iter()
                .map(|g| {
                    let next = seen.len();
                    *seen.entry(g.as_str()).or_insert(next)
                })
                .collect(),
        )
    }

    pub fn n_groups(&self) -> Option<usize> {
        self.group_indices().map(|g| g.iter().max().map_or(0, |m| m + 1))
    }

    /// Rows at `indices`, in that order. Duplicates are allowed (bootstrap).
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            features,
            n_features: self.n_features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            groups: self.groups.as_ref().map(|g| indices.iter().map(|&i| g[i].clone()).collect()),
            class_count: self.class_count,
            label_names: self.label_names.clone(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Same rows and labels with a replaced feature matrix (used by transform
    /// stages). Feature names are regenerated unless the width is unchanged.
    pub fn with_features(&self, features: Vec<f64>, n_features: usize) -> Result<Dataset> {
        let mut out = Dataset::from_flat(features, n_features, self.labels.clone(), self.class_count)?;
        out.groups = self.groups.clone();
        out.label_names = self.label_names.clone();
        if n_features == self.n_features {
            out.feature_names = self.feature_names.clone();
        }
        Ok(out)
    }

    /// Append rows (augmentation). Appended rows carry no group of their own;
    /// they inherit the supplied group ids when the dataset is grouped.
    pub fn append_rows(&self, features: &[f64], labels: &[usize], groups: Option<&[String]>) -> Result<Dataset> {
        let mut all = self.features.clone();
        all.extend_from_slice(features);
        let mut all_labels = self.labels.clone();
        all_labels.extend_from_slice(labels);
        let mut out = Dataset::from_flat(all, self.n_features, all_labels, self.class_count)?;
        out.label_names = self.label_names.clone();
        out.feature_names = self.feature_names.clone();
        if let Some(own) = &self.groups {
            let extra = groups.ok_or_else(|| Error::invalid("grouped dataset needs group ids for appended rows"))?;
            let mut g = own.clone();
            g.extend_from_slice(extra);
            out = out.with_groups(g)?;
        }
        Ok(out)
    }

    /// Write as CSV: feature columns, then `label_col`, then the group column
    /// when present. Labels are written by name.
    pub fn write_csv<W: Write>(&self, writer: W, label_col: &str, group_col: Option<&str>) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(label_col);
        if self.groups.is_some() {
            header.push(group_col.unwrap_or("group"));
        }
        w.write_record(&header)?;
        for i in 0..self.n_samples() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.label_names[self.labels[i]].clone());
            if let Some(g) = &self.groups {
                rec.push(g[i].clone());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|source| Error::Io { path: "<writer>".into(), source })?;
        Ok(())
    }
}

/// Column roles for CSV ingestion. Columns not named as label or group are
/// features unless `feature_cols` restricts them.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Schema {
    pub label_col: String,
    pub group_col: Option<String>,
    pub feature_cols: Option<Vec<String>>,
}

impl Schema {
    pub fn new(label_col: impl Into<String>) -> Self {
        Self { label_col: label_col.into(), ..Self::default() }
    }

    pub fn with_group(mut self, group_col: impl Into<String>) -> Self {
        self.group_col = Some(group_col.into());
        self
    }
}

/// Load a headed CSV file into a [`Dataset`].
pub fn load_dataset(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    read_dataset(file, schema)
}

/// Parse CSV from any reader. Labels are re-encoded to dense indices in
/// order of first appearance; the original strings become the label names.
pub fn read_dataset<R: Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.is_empty() {
        return Err(Error::Schema { line: 1, message: "missing header row".into() });
    }
    let find = |name: &str| header.iter().position(|h| h == name);
    let label_idx = find(&schema.label_col)
        .ok_or_else(|| Error::Schema { line: 1, message: format!("label column '{}' not found", schema.label_col) })?;
    let group_idx = match &schema.group_col {
        Some(g) => Some(find(g).ok_or_else(|| Error::Schema { line: 1, message: format!("group column '{g}' not found") })?),
        None => None,
    };
    let feature_idx: Vec<usize> = match &schema.feature_cols {
        Some(cols) => cols
            .iter()
            .map(|c| find(c).ok_or_else(|| Error::Schema { line: 1, message: format!("feature column '{c}' not found") }))
            .collect::<Result<_>>()?,
        None => (0..header.len()).filter(|&i| i != label_idx && Some(i) != group_idx).collect(),
    };
    if feature_idx.is_empty() {
        return Err(Error::Schema { line: 1, message: "no feature columns".into() });
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut groups = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut codes: HashMap<String, usize> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        for &k in &feature_idx {
            let cell = rec.get(k).unwrap_or("").trim();
            if cell.is_empty() {
                return Err(Error::Schema { line, message: format!("missing value in column '{}'", &header[k]) });
            }
            let v: f64 = cell.parse().map_err(|_| Error::Schema {
                line,
                message: format!("non-numeric value '{cell}' in column '{}'", &header[k]),
            })?;
            if !v.is_finite() {
                return Err(Error::Schema { line, message: format!("non-finite value in column '{}'", &header[k]) });
            }
            features.push(v);
        }
        let label = rec.get(label_idx).unwrap_or("").trim().to_string();
        if label.is_empty() {
            return Err(Error::Schema { line, message: "missing label".into() });
        }
        let next = names.len();
        let code = *codes.entry(label.clone()).or_insert_with(|| {
            names.push(label);
            next
        });
        labels.push(code);
        if let Some(g) = group_idx {
            groups.push(rec.get(g).unwrap_or("").trim().to_string());
        }
    }
    if labels.is_empty() {
        return Err(Error::Schema { line: 1, message: "no data rows".into() });
    }
    if names.len() < 2 {
        return Err(Error::invalid(format!("need at least 2 distinct labels, found {}", names.len())));
    }
    let class_count = names.len();
    let mut ds = Dataset::from_flat(features, feature_idx.len(), labels, class_count)?
        .with_label_names(names)?
        .with_feature_names(feature_idx.iter().map(|&k| header[k].to_string()).collect())?;
    if group_idx.is_some() {
        ds = ds.with_groups(groups)?;
    }
    Ok(ds)
}

/// Class probabilities summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriorVector(Vec<f64>);

impl PriorVector {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::invalid("empty prior vector"));
        }
        if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid("prior entries must lie in [0, 1]"));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("priors sum to {total}, not 1")));
        }
        Ok(Self(probabilities))
    }

    pub fn uniform(class_count: usize) -> Self {
        Self(vec![1.0 / class_count as f64; class_count])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// `P(j) = n_j / n` from class counts.
pub fn priors_from_labels(labels: &[usize], class_count: usize) -> Result<PriorVector> {
    if labels.is_empty() {
        return Err(Error::invalid("cannot estimate priors from no samples"));
    }
    let mut counts = vec![0usize; class_count];
    for &l in labels {
        if l >= class_count {
            return Err(Error::LabelOutOfRange { label: l, class_count });
        }
        counts[l] += 1;
    }
    let n = labels.len() as f64;
    Ok(PriorVector(counts.into_iter().map(|c| c as f64 / n).collect()))
}

pub fn estimate_priors(dataset: &Dataset) -> PriorVector {
    priors_from_labels(dataset.labels(), dataset.class_count()).expect("datasets are nonempty with valid labels")
}
