//! Populations of agents: synthetic generation, CSV ingestion and splits.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::{Matrix2, Vector2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::models::{DomainBox, QuadraticLabeler};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: u8,
    /// Group attribute; 0 when the dataset has no group column.
    pub z: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scaling {
    /// Features are used as given.
    None,
    /// z-score fitted on the training split.
    ZScore,
}

/// Per-feature affine map `(x - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn fit<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, dim: usize) -> Self {
        let n = rows.clone().count().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for r in rows.clone() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn denormalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    feature_names: Vec<String>,
    scaling: Scaling,
    normalization: Normalization,
    domain_box: DomainBox,
    improvable_mask: Vec<bool>,
    group_name: Option<String>,
    provenance: String,
}

impl Dataset {
    /// Builds a dataset; the domain box is the padded bounding box of the
    /// samples and every feature is improvable.
    pub fn new(samples: Vec<Sample>, feature_names: Vec<String>) -> Result<Self> {
        let d = feature_names.len();
        for s in &samples {
            check_dim(d, s.x.len())?;
            crate::error::check_finite(&s.x, "sample features")?;
            if s.y > 1 || s.z > 1 {
                return Err(Error::InvalidArgument("labels and groups must be 0/1".into()));
            }
        }
        let domain_box = padded_box(&samples, d);
        Ok(Self {
            samples,
            feature_names,
            scaling: Scaling::None,
            normalization: Normalization::identity(d),
            domain_box,
            improvable_mask: vec![true; d],
            group_name: None,
            provenance: String::new(),
        })
    }

    pub fn with_improvable(mut self, mask: Vec<bool>) -> Result<Self> {
        check_dim(self.feature_dim(), mask.len())?;
        self.improvable_mask = mask;
        Ok(self)
    }

    pub fn with_group(mut self, name: impl Into<String>) -> Self {
        self.group_name = Some(name.into());
        self
    }

    pub fn with_scaling(mut self, scaling: Scaling) -> Self {
        self.scaling = scaling;
        self
    }

    pub fn with_provenance(mut self, tag: impl Into<String>) -> Self {
        self.provenance = tag.into();
        self
    }

    pub fn with_domain_box(mut self, b: DomainBox) -> Result<Self> {
        check_dim(self.feature_dim(), b.dim())?;
        self.domain_box = b;
        Ok(self)
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn domain_box(&self) -> &DomainBox {
        &self.domain_box
    }

    pub fn improvable_mask(&self) -> &[bool] {
        &self.improvable_mask
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    pub fn scaling(&self) -> Scaling {
        self.scaling
    }

    pub fn has_groups(&self) -> bool {
        self.group_name.is_some()
    }

    pub fn group_name(&self) -> Option<&str> {
        self.group_name.as_deref()
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Same metadata, selected samples in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Self {
        Self {
            samples: Vec::new(),
            feature_names: self.feature_names.clone(),
            scaling: self.scaling,
            normalization: self.normalization.clone(),
            domain_box: self.domain_box.clone(),
            improvable_mask: self.improvable_mask.clone(),
            group_name: self.group_name.clone(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn group_counts(&self) -> [usize; 2] {
        let ones = self.samples.iter().filter(|s| s.z == 1).count();
        [self.len() - ones, ones]
    }

    /// Writes the samples as CSV (`features..., label, group`).
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = self.feature_names.clone();
        header.push("label".into());
        header.push("group".into());
        w.write_record(&header)?;
        for s in &self.samples {
            let mut row: Vec<String> = s.x.iter().map(|v| v.to_string()).collect();
            row.push(s.y.to_string());
            row.push(s.z.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Schema matching [`Dataset::write_csv`] output.
    pub fn cache_schema(&self) -> Schema {
        Schema {
            features: self.feature_names.clone(),
            label: "label".into(),
            group: self.group_name.as_ref().map(|_| "group".into()),
            improvable: self
                .feature_names
                .iter()
                .zip(&self.improvable_mask)
                .filter(|(_, m)| **m)
                .map(|(n, _)| n.clone())
                .collect(),
            positive_label_value: serde_json::Value::from(1),
            categorical: Vec::new(),
            group_threshold: None,
            group_positive_value: None,
            scaling: self.scaling,
        }
    }
}

fn padded_box(samples: &[Sample], d: usize) -> DomainBox {
    if samples.is_empty() {
        return DomainBox::unbounded(d);
    }
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for s in samples {
        for i in 0..d {
            lo[i] = lo[i].min(s.x[i]);
            hi[i] = hi[i].max(s.x[i]);
        }
    }
    for i in 0..d {
        let pad = 0.05 * (hi[i] - lo[i]).max(1e-9);
        lo[i] -= pad;
        hi[i] += pad;
    }
    DomainBox { lo, hi }
}

/// Two-group Gaussian population labelled by a clamped quadratic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub group1_fraction: f64,
    /// Mean of `X | Z = z`, indexed by `z`.
    pub means: [[f64; 2]; 2],
    pub covariances: [[[f64; 2]; 2]; 2],
    /// Quadratic coefficients in the order `1, x1, x2, x1^2, x1 x2, x2^2`.
    pub labeler: Vec<f64>,
    pub cost_scale: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Default population used by the experiment suite.
    ///
    /// `h(x) = clamp(0.6 - 4 (x1 - 0.5)^2 + 0.9 (x2 - 0.3), 0, 1)`: the
    /// qualification peaks at `x1 = 0.5` and rises with `x2`.
    pub fn preset(seed: u64) -> Self {
        // 0.6 - 4(x1 - .5)^2 + .9(x2 - .3) expanded
        let c0 = 0.6 - 4.0 * 0.25 - 0.9 * 0.3;
        Self {
            n: 10_000,
            group1_fraction: 0.2,
            means: [[0.3, 0.3], [0.5, 0.5]],
            covariances: [[[0.04, 0.0], [0.0, 0.04]], [[0.06, 0.0], [0.0, 0.06]]],
            labeler: vec![c0, 4.0, 0.9, -4.0, 0.0, 0.0],
            cost_scale: 5.0,
            seed,
        }
    }

    pub fn labeling_model(&self) -> Result<QuadraticLabeler> {
        QuadraticLabeler::new(2, self.labeler.clone())
    }

    pub fn group1_count(&self) -> usize {
        (self.n as f64 * self.group1_fraction).round() as usize
    }
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&spec.group1_fraction) {
        return Err(Error::InvalidArgument("group fraction outside [0, 1]".into()));
    }
    let mut factors = Vec::with_capacity(2);
    for cov in &spec.covariances {
        let m = Matrix2::new(cov[0][0], cov[0][1], cov[1][0], cov[1][1]);
        if (cov[0][1] - cov[1][0]).abs() > 1e-12 {
            return Err(Error::InvalidArgument("covariance is not symmetric".into()));
        }
        let chol = m.cholesky().ok_or_else(|| {
            Error::InvalidArgument("covariance is not positive definite".into())
        })?;
        factors.push(chol.l());
    }
    let labeler = spec.labeling_model()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n1 = spec.group1_count();
    let mut groups: Vec<u8> = (0..spec.n).map(|i| u8::from(i < n1)).collect();
    groups.shuffle(&mut rng);

    let samples = groups
        .into_iter()
        .map(|z| {
            let eps = Vector2::new(
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            );
            let mean = Vector2::from(spec.means[z as usize]);
            let v = mean + factors[z as usize] * eps;
            let x = vec![v[0], v[1]];
            let y = u8::from(labeler.eval_with_clamp(&x).0 >= 0.5);
            Sample { x, y, z }
        })
        .collect();
    Ok(Dataset::new(samples, vec!["x1".into(), "x2".into()])?
        .with_group("z")
        .with_provenance(format!("synthetic(seed={})", spec.seed)))
}

/// Column mapping for [`load_csv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<String>,
    pub label: String,
    #[serde(default)]
    pub group: Option<String>,
    #[serde(default)]
    pub improvable: Vec<String>,
    pub positive_label_value: serde_json::Value,
    /// Columns integer-coded by the sorted order of their distinct values.
    #[serde(default)]
    pub categorical: Vec<String>,
    /// Group is `1` when the numeric group cell is `>=` this value.
    #[serde(default)]
    pub group_threshold: Option<f64>,
    /// Group is `1` when the group cell equals this value.
    #[serde(default)]
    pub group_positive_value: Option<serde_json::Value>,
    #[serde(default = "default_scaling")]
    pub scaling: Scaling,
}

fn default_scaling() -> Scaling {
    Scaling::ZScore
}

impl Schema {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "?" | "NA" | "na" | "NaN" | "nan")
}

fn cell_matches(cell: &str, target: &serde_json::Value) -> bool {
    match target {
        serde_json::Value::String(s) => cell == s.trim(),
        serde_json::Value::Number(n) => match (cell.parse::<f64>(), n.as_f64()) {
            (Ok(a), Some(b)) => a == b,
            _ => false,
        },
        serde_json::Value::Bool(b) => cell.eq_ignore_ascii_case(&b.to_string()),
        _ => false,
    }
}

/// Reads a comma-delimited UTF-8 file with a header row.
///
/// Rows with a missing cell in any schema column are dropped. Features are
/// returned unscaled; scaling is fitted later by [`split`].
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let feature_cols = schema
        .features
        .iter()
        .map(|f| col(f))
        .collect::<Result<Vec<_>>>()?;
    let label_col = col(&schema.label)?;
    let group_col = schema.group.as_deref().map(col).transpose()?;
    for imp in &schema.improvable {
        if !schema.features.contains(imp) {
            return Err(Error::MissingColumn(imp.clone()));
        }
    }
    for c in &schema.categorical {
        if !schema.features.contains(c) {
            return Err(Error::MissingColumn(c.clone()));
        }
    }

    let records: Vec<csv::StringRecord> = reader.records().collect::<std::result::Result<_, _>>()?;
    if records.is_empty() {
        return Err(Error::Empty("csv file"));
    }
    let used: Vec<usize> = feature_cols
        .iter()
        .copied()
        .chain(std::iter::once(label_col))
        .chain(group_col)
        .collect();
    let kept: Vec<(usize, &csv::StringRecord)> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| used.iter().all(|&c| !is_missing(r.get(c).unwrap_or(""))))
        .collect();
    if kept.is_empty() {
        return Err(Error::Empty("csv file after dropping incomplete rows"));
    }

    // stable integer codes per categorical column
    let mut codes: BTreeMap<usize, BTreeMap<String, usize>> = BTreeMap::new();
    for name in &schema.categorical {
        let c = col(name)?;
        let distinct: BTreeSet<String> = kept.iter().map(|(_, r)| r[c].to_string()).collect();
        codes.insert(c, distinct.into_iter().enumerate().map(|(i, v)| (v, i)).collect());
    }

    let mut samples = Vec::with_capacity(kept.len());
    for (row_idx, r) in kept {
        let row = row_idx + 1;
        let mut x = Vec::with_capacity(feature_cols.len());
        for (&c, name) in feature_cols.iter().zip(&schema.features) {
            let cell = &r[c];
            let v = match codes.get(&c) {
                Some(map) => map[cell] as f64,
                None => cell.parse::<f64>().map_err(|_| Error::NonNumericCell {
                    row,
                    column: name.clone(),
                    value: cell.to_string(),
                })?,
            };
            if !v.is_finite() {
                return Err(Error::NonNumericCell {
                    row,
                    column: name.clone(),
                    value: cell.to_string(),
                });
            }
            x.push(v);
        }
        let y = u8::from(cell_matches(&r[label_col], &schema.positive_label_value));
        let z = match group_col {
            None => 0,
            Some(c) => {
                let cell = &r[c];
                let gname = schema.group.clone().unwrap_or_default();
                if let Some(t) = schema.group_threshold {
                    let v = cell.parse::<f64>().map_err(|_| Error::NonNumericCell {
                        row,
                        column: gname,
                        value: cell.to_string(),
                    })?;
                    u8::from(v >= t)
                } else if let Some(target) = &schema.group_positive_value {
                    u8::from(cell_matches(cell, target))
                } else {
                    match cell.parse::<f64>() {
                        Ok(0.0) => 0,
                        Ok(1.0) => 1,
                        _ => {
                            return Err(Error::NonNumericCell {
                                row,
                                column: gname,
                                value: cell.to_string(),
                            })
                        }
                    }
                }
            }
        };
        samples.push(Sample { x, y, z });
    }

    let mask = schema
        .features
        .iter()
        .map(|f| schema.improvable.contains(f))
        .collect();
    let mut ds = Dataset::new(samples, schema.features.clone())?
        .with_improvable(mask)?
        .with_scaling(schema.scaling)
        .with_provenance(format!("csv({})", path.as_ref().display()));
    if let Some(g) = &schema.group {
        ds = ds.with_group(g.clone());
    }
    Ok(ds)
}

/// Shuffled train/test partition. Scaling statistics and the domain box
/// are fitted on the training part and applied to both.
pub fn split(data: &Dataset, train_frac: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction {train_frac} outside (0, 1)"
        )));
    }
    let n = data.len();
    let n_train = (n as f64 * train_frac).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InvalidArgument(format!(
            "dataset of {n} samples is too small to split at {train_frac}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = data.subset(&idx[..n_train]);
    let mut test = data.subset(&idx[n_train..]);

    if data.scaling == Scaling::ZScore {
        // stats always refer to the raw features
        let raw_train: Vec<Vec<f64>> = train
            .samples
            .iter()
            .map(|s| data.normalization.denormalize(&s.x))
            .collect();
        let stats = Normalization::fit(raw_train.iter().map(Vec::as_slice), data.feature_dim());
        for part in [&mut train, &mut test] {
            for s in &mut part.samples {
                let raw = data.normalization.denormalize(&s.x);
                s.x = stats.normalize(&raw);
            }
            part.normalization = stats.clone();
        }
    }
    let b = padded_box(&train.samples, data.feature_dim());
    train.domain_box = b.clone();
    test.domain_box = b;
    Ok((train, test))
}

/// Index folds `0..n` for k-fold validation, contiguous after shuffling.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    (0..k)
        .map(|f| {
            let lo = f * n / k;
            let hi = (f + 1) * n / k;
            idx[lo..hi].to_vec()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p)
            .unwrap()
            .write_all(body.as_bytes())
            .unwrap();
        p
    }

    fn schema(features: &[&str], group: Option<&str>) -> Schema {
        Schema {
            features: features.iter().map(|s| s.to_string()).collect(),
            label: "y".into(),
            group: group.map(str::to_string),
            improvable: vec![features[0].to_string()],
            positive_label_value: serde_json::json!(1),
            categorical: vec![],
            group_threshold: None,
            group_positive_value: None,
            scaling: Scaling::ZScore,
        }
    }

    #[test]
    fn synthetic_group_count_is_exact() {
        let ds = gen_synthetic(&SyntheticSpec::preset(11)).unwrap();
        assert_eq!(ds.len(), 10_000);
        assert_eq!(ds.group_counts(), [8000, 2000]);
    }

    #[test]
    fn synthetic_constant_labeler_labels_everyone_positive() {
        let mut spec = SyntheticSpec::preset(2);
        spec.n = 500;
        spec.labeler = vec![0.7, 0.0, 0.0, 0.0, 0.0, 0.0];
        let ds = gen_synthetic(&spec).unwrap();
        assert!(ds.samples().iter().all(|s| s.y == 1));
    }

    #[test]
    fn synthetic_is_deterministic() {
        let mut spec = SyntheticSpec::preset(5);
        spec.n = 300;
        assert_eq!(gen_synthetic(&spec).unwrap(), gen_synthetic(&spec).unwrap());
    }

    #[test]
    fn synthetic_rejects_bad_covariance() {
        let mut spec = SyntheticSpec::preset(0);
        spec.covariances[1] = [[0.01, 0.2], [0.2, 0.01]];
        assert!(matches!(gen_synthetic(&spec), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn csv_fixture_parses_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,b,y,g\n1.5,2,1,0\n-3,0.25,0,1\n7,8,1,1\n");
        let ds = load_csv(&p, &schema(&["a", "b"], Some("g"))).unwrap();
        let want = vec![
            Sample { x: vec![1.5, 2.0], y: 1, z: 0 },
            Sample { x: vec![-3.0, 0.25], y: 0, z: 1 },
            Sample { x: vec![7.0, 8.0], y: 1, z: 1 },
        ];
        assert_eq!(ds.samples(), want.as_slice());
        assert_eq!(ds.improvable_mask(), &[true, false]);
        assert!(ds.has_groups());
    }

    #[test]
    fn csv_missing_group_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,b,y\n1,2,1\n");
        match load_csv(&p, &schema(&["a", "b"], Some("sex"))) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "sex"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_non_numeric_cell() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,b,y\n1,x2,1\n");
        match load_csv(&p, &schema(&["a", "b"], None)) {
            Err(Error::NonNumericCell { row, column, value }) => {
                assert_eq!((row, column.as_str(), value.as_str()), (1, "b", "x2"))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,b,y\n");
        assert!(matches!(
            load_csv(&p, &schema(&["a", "b"], None)),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn csv_drops_incomplete_rows_and_codes_categoricals() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "a.csv",
            "a,kind,y\n1,B,yes\n2,,no\n3,A,no\n4,C,yes\n",
        );
        let mut s = schema(&["a", "kind"], None);
        s.categorical = vec!["kind".into()];
        s.positive_label_value = serde_json::json!("yes");
        let ds = load_csv(&p, &s).unwrap();
        let xs: Vec<_> = ds.samples().iter().map(|s| s.x.clone()).collect();
        assert_eq!(xs, vec![vec![1.0, 1.0], vec![3.0, 0.0], vec![4.0, 2.0]]);
        let ys: Vec<_> = ds.samples().iter().map(|s| s.y).collect();
        assert_eq!(ys, vec![1, 0, 1]);
    }

    #[test]
    fn split_sizes_and_partition() {
        let mut spec = SyntheticSpec::preset(1);
        spec.n = 1000;
        let ds = gen_synthetic(&spec).unwrap();
        let (tr, te) = split(&ds, 0.8, 9).unwrap();
        assert_eq!((tr.len(), te.len()), (800, 200));
        // identity scaling: samples are moved, not changed
        let mut all: Vec<String> = tr
            .samples()
            .iter()
            .chain(te.samples())
            .map(|s| format!("{:?}", s.x))
            .collect();
        let mut orig: Vec<String> = ds.samples().iter().map(|s| format!("{:?}", s.x)).collect();
        all.sort();
        orig.sort();
        assert_eq!(all, orig);
    }

    #[test]
    fn split_two_samples() {
        let ds = Dataset::new(
            vec![
                Sample { x: vec![0.0], y: 0, z: 0 },
                Sample { x: vec![1.0], y: 1, z: 0 },
            ],
            vec!["a".into()],
        )
        .unwrap();
        let (a, b) = split(&ds, 0.5, 0).unwrap();
        assert_eq!((a.len(), b.len()), (1, 1));
        let one = ds.subset(&[0]);
        assert!(split(&one, 0.8, 0).is_err());
        assert!(split(&ds, 1.0, 0).is_err());
    }

    #[test]
    fn zscore_uses_train_statistics() {
        let samples = (0..10)
            .map(|i| Sample { x: vec![i as f64 * 2.0], y: (i % 2) as u8, z: 0 })
            .collect();
        let ds = Dataset::new(samples, vec!["a".into()])
            .unwrap()
            .with_scaling(Scaling::ZScore);
        let (tr, te) = split(&ds, 0.7, 3).unwrap();
        let xs: Vec<f64> = tr.samples().iter().map(|s| s.x[0]).collect();
        let mean: f64 = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 1e-12);
        assert_eq!(tr.normalization(), te.normalization());
        for s in te.samples() {
            let raw = te.normalization().denormalize(&s.x)[0];
            assert!((raw / 2.0 - (raw / 2.0).round()).abs() < 1e-9);
        }
    }

    proptest::proptest! {
        #[test]
        fn normalization_round_trip(
            mean in proptest::collection::vec(-100.0f64..100.0, 3),
            std in proptest::collection::vec(0.01f64..50.0, 3),
            x in proptest::collection::vec(-1e3f64..1e3, 3),
        ) {
            let n = Normalization { mean, std };
            let back = n.denormalize(&n.normalize(&x));
            for (a, b) in back.iter().zip(&x) {
                proptest::prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }
}
