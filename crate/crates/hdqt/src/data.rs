//! Dataset ingestion for feature-vector classification: CSV loading with a
//! small schema descriptor, the user/class filtering rules for the HAR
//! datasets, train-statistics normalization, and a synthetic blob generator
//! for fast tests.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Dsads,
    Pamap2,
    Hapt,
    Generic,
}

/// Schema descriptor for a CSV dataset; stored as a small TOML file next to
/// the data (keys: `label_col`, optional `user_col`, `dataset_kind`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub label_col: String,
    #[serde(default)]
    pub user_col: Option<String>,
    #[serde(default = "default_kind")]
    pub dataset_kind: DatasetKind,
}

fn default_kind() -> DatasetKind {
    DatasetKind::Generic
}

impl CsvSchema {
    pub fn from_toml_file(path: &Path) -> Result<CsvSchema> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::data(format!("schema {}: {e}", path.display())))?;
        toml::from_str(&raw)
            .map_err(|e| Error::data(format!("schema {}: {e}", path.display())))
    }
}

/// Samples-by-features matrix with dense labels and train/test index sets.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    pub features: Matrix,
    /// Dense class ids in [0, num_classes).
    pub labels: Vec<usize>,
    pub user_ids: Option<Vec<i64>>,
    /// Original label values, indexed by dense id.
    pub class_names: Vec<String>,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

impl FeatureDataset {
    pub fn num_samples(&self) -> usize {
        self.features.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Copies the given sample rows into a matrix plus their labels.
    pub fn gather(&self, indices: &[usize]) -> (Matrix, Vec<usize>) {
        let mut m = Matrix::zeros(indices.len(), self.feature_dim());
        let mut labels = Vec::with_capacity(indices.len());
        for (r, &idx) in indices.iter().enumerate() {
            m.row_mut(r).copy_from_slice(self.features.row(idx));
            labels.push(self.labels[idx]);
        }
        (m, labels)
    }

    /// Seeded stratified split; roughly `test_frac` of each class goes to
    /// the test set, always keeping at least one training sample per class.
    pub fn stratified_split(&mut self, test_frac: f64, rng: &mut Rng) -> Result<()> {
        if !(0.0..1.0).contains(&test_frac) {
            return Err(Error::param("test_frac", format!("{test_frac} not in [0, 1)")));
        }
        let mut per_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            per_class.entry(l).or_default().push(i);
        }
        self.train_idx.clear();
        self.test_idx.clear();
        for (_, mut idxs) in per_class {
            rng.shuffle(&mut idxs);
            let n = idxs.len();
            let n_test = ((test_frac * n as f64).round() as usize).min(n.saturating_sub(1));
            self.test_idx.extend_from_slice(&idxs[..n_test]);
            self.train_idx.extend_from_slice(&idxs[n_test..]);
        }
        self.train_idx.sort_unstable();
        self.test_idx.sort_unstable();
        Ok(())
    }
}

fn parse_label_order(raw: &[String]) -> Vec<String> {
    let mut distinct: Vec<String> = raw.to_vec();
    distinct.sort();
    distinct.dedup();
    // Numeric labels sort numerically so densification matches the original
    // class numbering; anything else sorts lexicographically.
    if distinct.iter().all(|s| s.parse::<f64>().is_ok()) {
        distinct.sort_by(|a, b| {
            a.parse::<f64>()
                .unwrap()
                .partial_cmp(&b.parse::<f64>().unwrap())
                .unwrap()
        });
    }
    distinct
}

/// Loads a CSV with a header row: one sample per row, the label column named
/// by the schema, an optional user column, every other column a numeric
/// feature. Malformed rows are reported with their line number.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<FeatureDataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let label_pos = headers
        .iter()
        .position(|h| h == schema.label_col)
        .ok_or_else(|| Error::data(format!("label column '{}' not found", schema.label_col)))?;
    let user_pos = match &schema.user_col {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::data(format!("user column '{name}' not found")))?,
        ),
        None => None,
    };
    let feature_pos: Vec<usize> = (0..headers.len())
        .filter(|&i| i != label_pos && Some(i) != user_pos)
        .collect();
    if feature_pos.is_empty() {
        return Err(Error::data("no feature columns in header"));
    }

    let mut rows: Vec<f64> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    let mut users: Vec<i64> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(Error::data(format!(
                "line {line}: {} fields, expected {}",
                record.len(),
                headers.len()
            )));
        }
        for &pos in &feature_pos {
            let field = &record[pos];
            let value: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::data(format!("line {line}: non-numeric feature '{field}'")))?;
            if !value.is_finite() {
                return Err(Error::data(format!("line {line}: non-finite feature {value}")));
            }
            rows.push(value);
        }
        raw_labels.push(record[label_pos].trim().to_string());
        if let Some(up) = user_pos {
            let field = &record[up];
            users.push(field.trim().parse().map_err(|_| {
                Error::data(format!("line {line}: non-integer user id '{field}'"))
            })?);
        }
    }
    if raw_labels.is_empty() {
        return Err(Error::data("no data rows"));
    }

    let class_names = parse_label_order(&raw_labels);
    let index: BTreeMap<&str, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let labels = raw_labels.iter().map(|l| index[l.as_str()]).collect();
    let n = raw_labels.len();
    Ok(FeatureDataset {
        features: Matrix::from_vec(n, feature_pos.len(), rows)?,
        labels,
        user_ids: user_pos.map(|_| users),
        class_names,
        train_idx: (0..n).collect(),
        test_idx: Vec::new(),
    })
}

/// Writes the dataset back out in the same CSV layout; feature values use
/// shortest round-trip formatting so a reload is bit-exact.
pub fn save_csv(ds: &FeatureDataset, path: &Path, schema: &CsvSchema) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec![schema.label_col.clone()];
    if let Some(user_col) = &schema.user_col {
        header.push(user_col.clone());
    }
    for j in 0..ds.feature_dim() {
        header.push(format!("f{j}"));
    }
    writer.write_record(&header)?;
    for i in 0..ds.num_samples() {
        let mut record = vec![ds.class_names[ds.labels[i]].clone()];
        if schema.user_col.is_some() {
            let uid = ds
                .user_ids
                .as_ref()
                .map_or(0, |u| u[i]);
            record.push(uid.to_string());
        }
        for &v in ds.features.row(i) {
            record.push(format!("{v}"));
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Removes the under-represented users and classes for the known dataset
/// kinds, then re-densifies labels (order-preserving on the survivors).
/// Unknown or generic kinds pass through unchanged.
pub fn apply_dataset_filters(ds: &FeatureDataset, kind: DatasetKind) -> Result<FeatureDataset> {
    let (drop_users, drop_classes): (&[i64], &[i64]) = match kind {
        DatasetKind::Pamap2 => (&[3, 4, 9], &[24]),
        DatasetKind::Hapt => (&[7, 28], &[8]),
        DatasetKind::Dsads | DatasetKind::Generic => (&[], &[]),
    };
    if drop_users.is_empty() && drop_classes.is_empty() {
        return Ok(ds.clone());
    }
    let users = ds.user_ids.as_ref().ok_or_else(|| {
        Error::param("dataset_kind", "user-based filtering needs a user column")
    })?;

    let class_matches = |name: &str, target: i64| -> bool {
        name == target.to_string() || name.parse::<f64>() == Ok(target as f64)
    };
    let dropped_class_ids: Vec<usize> = ds
        .class_names
        .iter()
        .enumerate()
        .filter(|(_, name)| drop_classes.iter().any(|&t| class_matches(name, t)))
        .map(|(i, _)| i)
        .collect();

    let present_users: Vec<i64> = drop_users
        .iter()
        .copied()
        .filter(|u| users.contains(u))
        .collect();
    if present_users.len() < drop_users.len() {
        log::warn!(
            "filter for {kind:?}: some listed users are absent (already filtered?)"
        );
    }
    if dropped_class_ids.len() < drop_classes.len() {
        log::warn!(
            "filter for {kind:?}: some listed classes are absent (already filtered?)"
        );
    }

    let keep: Vec<usize> = (0..ds.num_samples())
        .filter(|&i| {
            !drop_users.contains(&users[i]) && !dropped_class_ids.contains(&ds.labels[i])
        })
        .collect();
    if keep.is_empty() {
        return Err(Error::data("filtering removed every sample"));
    }

    // Order-preserving re-densification of surviving labels.
    let mut survives = vec![false; ds.num_classes()];
    for &i in &keep {
        survives[ds.labels[i]] = true;
    }
    let mut remap = vec![usize::MAX; ds.num_classes()];
    let mut class_names = Vec::new();
    for (old, &s) in survives.iter().enumerate() {
        if s {
            remap[old] = class_names.len();
            class_names.push(ds.class_names[old].clone());
        }
    }

    let mut old_to_new = vec![usize::MAX; ds.num_samples()];
    for (new_i, &old_i) in keep.iter().enumerate() {
        old_to_new[old_i] = new_i;
    }
    let (features, _) = ds.gather(&keep);
    let labels = keep.iter().map(|&i| remap[ds.labels[i]]).collect();
    let user_ids = Some(keep.iter().map(|&i| users[i]).collect());
    let remap_split = |split: &[usize]| -> Vec<usize> {
        split
            .iter()
            .map(|&i| old_to_new[i])
            .filter(|&i| i != usize::MAX)
            .collect()
    };
    Ok(FeatureDataset {
        features,
        labels,
        user_ids,
        class_names,
        train_idx: remap_split(&ds.train_idx),
        test_idx: remap_split(&ds.test_idx),
    })
}

/// Per-feature z-score using statistics of the training split only;
/// zero-variance features map to zero everywhere.
pub fn normalize(ds: &FeatureDataset) -> Result<FeatureDataset> {
    if ds.train_idx.is_empty() {
        return Err(Error::data("normalize needs a nonempty training split"));
    }
    let d = ds.feature_dim();
    let n_train = ds.train_idx.len() as f64;
    let mut mean = vec![0.0; d];
    for &i in &ds.train_idx {
        for (m, v) in mean.iter_mut().zip(ds.features.row(i)) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n_train;
    }
    let mut var = vec![0.0; d];
    for &i in &ds.train_idx {
        for (s, (v, m)) in var.iter_mut().zip(ds.features.row(i).iter().zip(&mean)) {
            let c = v - m;
            *s += c * c;
        }
    }
    let std: Vec<f64> = var.iter().map(|&s| (s / n_train).sqrt()).collect();

    let mut features = ds.features.clone();
    for i in 0..ds.num_samples() {
        let row = features.row_mut(i);
        for j in 0..d {
            row[j] = if std[j] == 0.0 {
                0.0
            } else {
                (row[j] - mean[j]) / std[j]
            };
        }
    }
    Ok(FeatureDataset {
        features,
        ..ds.clone()
    })
}

/// Gaussian blobs with unit within-class deviation and centers spread by
/// `separation`; stratified 80/20 train/test split.
pub fn synth_blobs(
    classes: usize,
    samples_per_class: usize,
    dim: usize,
    separation: f64,
    rng: &mut Rng,
) -> Result<FeatureDataset> {
    if classes < 2 {
        return Err(Error::param("classes", "need at least 2"));
    }
    if samples_per_class < 2 || dim < 1 {
        return Err(Error::param("samples_per_class/dim", "too small"));
    }
    let mut center_rng = rng.split("centers");
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            (0..dim)
                .map(|_| separation * center_rng.standard_normal())
                .collect()
        })
        .collect();
    let n = classes * samples_per_class;
    let mut features = Matrix::zeros(n, dim);
    let mut labels = Vec::with_capacity(n);
    let mut sample_rng = rng.split("samples");
    for (c, center) in centers.iter().enumerate() {
        for s in 0..samples_per_class {
            let i = c * samples_per_class + s;
            let row = features.row_mut(i);
            for (v, mu) in row.iter_mut().zip(center) {
                *v = mu + sample_rng.standard_normal();
            }
            labels.push(c);
        }
    }
    let mut ds = FeatureDataset {
        features,
        labels,
        user_ids: None,
        class_names: (0..classes).map(|c| format!("class_{c}")).collect(),
        train_idx: (0..n).collect(),
        test_idx: Vec::new(),
    };
    ds.stratified_split(0.2, &mut rng.split("split"))?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(dir: &Path, name: &str, content: &str) -> std::path::PathBuf {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    fn generic_schema() -> CsvSchema {
        CsvSchema {
            label_col: "label".into(),
            user_col: Some("user".into()),
            dataset_kind: DatasetKind::Generic,
        }
    }

    #[test]
    fn load_toy_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(
            dir.path(),
            "toy.csv",
            "f0,label,user,f1\n1.0,3,1,2.0\n0.5,5,1,0.25\n-1.0,3,2,4.0\n",
        );
        let ds = load_csv(&path, &generic_schema()).unwrap();
        assert_eq!(ds.num_samples(), 3);
        assert_eq!(ds.feature_dim(), 2);
        assert_eq!(ds.labels, vec![0, 1, 0]);
        assert_eq!(ds.class_names, vec!["3", "5"]);
        assert_eq!(ds.user_ids.as_deref(), Some(&[1, 1, 2][..]));
        assert_eq!(ds.features.row(1), &[0.5, 0.25]);
    }

    #[test]
    fn load_rejects_nan_with_row_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(
            dir.path(),
            "bad.csv",
            "f0,label,user\n1.0,0,1\nNaN,1,1\n",
        );
        let err = load_csv(&path, &generic_schema()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn load_missing_column_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(dir.path(), "missing.csv", "f0,lbl\n1.0,0\n");
        assert!(load_csv(&path, &generic_schema()).is_err());
    }

    #[test]
    fn wide_feature_file_keeps_its_width() {
        // A file shaped like the 561-feature activity datasets.
        let dir = tempfile::tempdir().unwrap();
        let header: Vec<String> = (0..561)
            .map(|i| format!("f{i}"))
            .chain(["label".to_string(), "user".to_string()])
            .collect();
        let row: Vec<String> = (0..561)
            .map(|i| format!("{}", i as f64 * 0.01))
            .chain(["1".to_string(), "1".to_string()])
            .collect();
        let content = format!("{}\n{}\n{}\n", header.join(","), row.join(","), row.join(","));
        let path = write_csv(dir.path(), "wide.csv", &content);
        let ds = load_csv(&path, &generic_schema()).unwrap();
        assert_eq!(ds.feature_dim(), 561);
    }

    #[test]
    fn save_load_roundtrip_bit_exact() {
        let mut rng = Rng::new(5);
        let ds = synth_blobs(3, 10, 4, 2.0, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("round.csv");
        let schema = CsvSchema {
            label_col: "label".into(),
            user_col: None,
            dataset_kind: DatasetKind::Generic,
        };
        save_csv(&ds, &path, &schema).unwrap();
        let loaded = load_csv(&path, &schema).unwrap();
        assert_eq!(loaded.features, ds.features);
        assert_eq!(loaded.labels, ds.labels);
    }

    #[test]
    fn filters_remove_users_and_class() {
        // PAMAP2-style: users 3, 4, 9 and class 24 go away.
        let dir = tempfile::tempdir().unwrap();
        let mut content = String::from("f0,label,user\n");
        for (label, user) in [
            (1, 1),
            (24, 1),
            (1, 3),
            (2, 4),
            (2, 2),
            (24, 9),
            (3, 2),
        ] {
            content.push_str(&format!("{}.5,{label},{user}\n", label + user));
        }
        let path = write_csv(dir.path(), "pamap.csv", &content);
        let schema = CsvSchema {
            dataset_kind: DatasetKind::Pamap2,
            ..generic_schema()
        };
        let ds = load_csv(&path, &schema).unwrap();
        let filtered = apply_dataset_filters(&ds, DatasetKind::Pamap2).unwrap();
        assert_eq!(filtered.num_samples(), 3);
        assert_eq!(filtered.class_names, vec!["1", "2", "3"]);
        // Feature values are untouched, only membership changes.
        assert_eq!(filtered.features.row(0), &[2.5]);
        // Non-listed dataset kinds pass through.
        let same = apply_dataset_filters(&ds, DatasetKind::Dsads).unwrap();
        assert_eq!(same, ds);
    }

    #[test]
    fn hapt_filter_removes_its_users_and_class() {
        let dir = tempfile::tempdir().unwrap();
        let mut content = String::from("f0,label,user\n");
        for (label, user) in [(1, 1), (8, 1), (2, 7), (3, 28), (2, 2), (3, 5)] {
            content.push_str(&format!("0.5,{label},{user}\n"));
        }
        let path = write_csv(dir.path(), "hapt.csv", &content);
        let ds = load_csv(&path, &generic_schema()).unwrap();
        let filtered = apply_dataset_filters(&ds, DatasetKind::Hapt).unwrap();
        assert_eq!(filtered.num_samples(), 3);
        assert_eq!(filtered.class_names, vec!["1", "2", "3"]);
    }

    #[test]
    fn filter_is_noop_on_prefiltered_data() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(
            dir.path(),
            "pre.csv",
            "f0,label,user\n1.0,1,1\n2.0,2,2\n",
        );
        let ds = load_csv(&path, &generic_schema()).unwrap();
        let filtered = apply_dataset_filters(&ds, DatasetKind::Hapt).unwrap();
        assert_eq!(filtered.features, ds.features);
        assert_eq!(filtered.labels, ds.labels);
    }

    #[test]
    fn normalize_train_statistics() {
        let mut ds = FeatureDataset {
            features: Matrix::from_vec(4, 2, vec![1.0, 7.0, 3.0, 7.0, 5.0, 7.0, 100.0, 7.0])
                .unwrap(),
            labels: vec![0, 0, 1, 1],
            user_ids: None,
            class_names: vec!["a".into(), "b".into()],
            train_idx: vec![0, 1, 2],
            test_idx: vec![3],
        };
        let out = normalize(&ds).unwrap();
        // Train mean of feature 0 is 3; the constant feature maps to zero.
        let train_mean: f64 = (0..3).map(|i| out.features.get(i, 0)).sum::<f64>() / 3.0;
        assert!(train_mean.abs() < 1e-9);
        for i in 0..4 {
            assert_eq!(out.features.get(i, 1), 0.0);
        }
        // Test rows use train statistics: the outlier stays far from zero.
        assert!(out.features.get(3, 0) > 10.0);

        ds.train_idx.clear();
        assert!(normalize(&ds).is_err());
    }

    #[test]
    fn blobs_separation_limits() {
        let mut rng = Rng::new(11);
        let far = synth_blobs(3, 30, 5, 50.0, &mut rng).unwrap();
        // With huge separation a nearest-centroid rule is perfect.
        let mut centroids = vec![vec![0.0; 5]; 3];
        let mut counts = [0usize; 3];
        for &i in &far.train_idx {
            counts[far.labels[i]] += 1;
            let row = far.features.row(i);
            for (c, v) in centroids[far.labels[i]].iter_mut().zip(row) {
                *c += v;
            }
        }
        for (c, count) in centroids.iter_mut().zip(counts) {
            for v in c.iter_mut() {
                *v /= count as f64;
            }
        }
        for &i in &far.test_idx {
            let mut best = (f64::INFINITY, usize::MAX);
            for (c, centroid) in centroids.iter().enumerate() {
                let d: f64 = centroid
                    .iter()
                    .zip(far.features.row(i))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d < best.0 {
                    best = (d, c);
                }
            }
            assert_eq!(best.1, far.labels[i]);
        }
    }

    #[test]
    fn zero_separation_blobs_are_chance_level() {
        let mut rng = Rng::new(13);
        let ds = synth_blobs(3, 60, 6, 0.0, &mut rng).unwrap();
        // All centers coincide, so a nearest-centroid rule cannot beat
        // chance by much.
        let mut centroids = vec![vec![0.0; 6]; 3];
        let mut counts = [0usize; 3];
        for &i in &ds.train_idx {
            counts[ds.labels[i]] += 1;
            for (c, v) in centroids[ds.labels[i]].iter_mut().zip(ds.features.row(i)) {
                *c += v;
            }
        }
        for (c, count) in centroids.iter_mut().zip(counts) {
            for v in c.iter_mut() {
                *v /= count as f64;
            }
        }
        let mut correct = 0;
        for &i in &ds.test_idx {
            let mut best = (f64::INFINITY, usize::MAX);
            for (ci, centroid) in centroids.iter().enumerate() {
                let d: f64 = centroid
                    .iter()
                    .zip(ds.features.row(i))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d < best.0 {
                    best = (d, ci);
                }
            }
            if best.1 == ds.labels[i] {
                correct += 1;
            }
        }
        let acc = correct as f64 / ds.test_idx.len() as f64;
        assert!(acc < 0.55, "accuracy {acc} suspiciously above chance 1/3");
    }

    #[test]
    fn blobs_seeded_deterministic() {
        let a = synth_blobs(4, 12, 3, 1.5, &mut Rng::new(9)).unwrap();
        let b = synth_blobs(4, 12, 3, 1.5, &mut Rng::new(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train_idx.len() + a.test_idx.len(), 48);
        // Split is stratified: each class keeps about 80% in train.
        for c in 0..4 {
            let train_c = a.train_idx.iter().filter(|&&i| a.labels[i] == c).count();
            assert!((9..=11).contains(&train_c), "{train_c}");
        }
    }
}
