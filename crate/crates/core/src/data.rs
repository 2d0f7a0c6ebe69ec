//! Labeled datasets, a synthetic stand-in for intrusion records, CSV
//! ingestion of KDD-style files and Non-IID client partitioning.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spread of the per-tag cluster centers in the synthetic generator.
const TAG_SPREAD: f64 = 1.5;

/// Attack families per client, ten clients, as used for the NSL-KDD
/// experiments this simulator mirrors.
pub const NSL_KDD_CLIENT_TAGS: [&[&str]; 10] = [
    &["neptune", "smurf"],
    &["land", "teardrop"],
    &["pod", "back"],
    &["portsweep", "nmap"],
    &["ipsweep", "satan"],
    &["imap", "warezmaster"],
    &["ftp_write", "guess_passwd"],
    &["multihop", "spy"],
    &["phf", "warezclient", "buffer_overflow"],
    &["loadmodule", "perl", "rootkit"],
];

/// Row-major feature matrix with binary labels (benign = 0, attack = 1) and
/// optional per-sample family tags.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_features: usize,
    features: Vec<f64>,
    labels: Vec<u8>,
    tags: Option<Vec<String>>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<u8>, tags: Option<Vec<String>>) -> Result<Self> {
        let n_features = rows.first().map_or(0, Vec::len);
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != n_features) {
            return Err(Error::param(format!(
                "row {i} has {} features, expected {n_features}",
                row.len()
            )));
        }
        let names = (0..n_features).map(|j| format!("f{j}")).collect();
        Self::from_flat(n_features, rows.concat(), labels, tags, names)
    }

    pub fn from_flat(
        n_features: usize,
        features: Vec<f64>,
        labels: Vec<u8>,
        tags: Option<Vec<String>>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if features.len() != labels.len() * n_features {
            return Err(Error::param(format!(
                "{} feature values do not form {} rows of {n_features}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!(
                "non-finite feature at row {}, column {}",
                pos / n_features.max(1),
                pos % n_features.max(1)
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::param(format!("label {l} is not binary")));
        }
        if let Some(t) = &tags {
            if t.len() != labels.len() {
                return Err(Error::param("tag count differs from sample count"));
            }
        }
        if feature_names.len() != n_features {
            return Err(Error::param(
                "feature name count differs from feature count",
            ));
        }
        Ok(Self {
            n_features,
            features,
            labels,
            tags,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn tags(&self) -> Option<&[String]> {
        self.tags.as_deref()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn distinct_labels(&self) -> usize {
        self.labels.iter().collect::<BTreeSet<_>>().len()
    }

    /// Training needs both classes present.
    pub fn ensure_trainable(&self) -> Result<()> {
        if self.distinct_labels() < 2 {
            return Err(Error::param("training data must contain both labels"));
        }
        Ok(())
    }

    /// Copies the given rows, in the given order, into a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            n_features: self.n_features,
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            tags: self
                .tags
                .as_ref()
                .map(|t| indices.iter().map(|&i| t[i].clone()).collect()),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Seeded shuffle followed by a cut: the first `round(test_fraction * n)`
    /// shuffled rows become the test set.
    pub fn train_test_split(&self, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::param(format!(
                "test fraction must be in [0, 1), got {test_fraction}"
            )));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_test = (test_fraction * self.len() as f64).round() as usize;
        let (test, train) = order.split_at(n_test);
        let mut train = train.to_vec();
        let mut test = test.to_vec();
        train.sort_unstable();
        test.sort_unstable();
        Ok((self.subset(&train), self.subset(&test)))
    }
}

/// One client's local data together with the row indices it was cut from.
#[derive(Debug, Clone)]
pub struct ClientShard {
    pub client_id: usize,
    pub data: Dataset,
    pub tag_set: BTreeSet<String>,
    pub source_indices: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    ByTag,
    Proportional,
}

/// Per-client shard sizes for proportional partitioning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Proportions {
    Counts(Vec<usize>),
    Fractions(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub n_clients: usize,
    pub mode: PartitionMode,
    pub proportions: Option<Proportions>,
    /// Explicit tag families per client for `by_tag`. Tags not listed are
    /// dealt evenly across all clients.
    pub tag_groups: Option<Vec<Vec<String>>>,
}

impl PartitionSpec {
    pub fn by_tag(n_clients: usize) -> Self {
        Self {
            n_clients,
            mode: PartitionMode::ByTag,
            proportions: None,
            tag_groups: None,
        }
    }

    pub fn proportional(n_clients: usize, proportions: Option<Proportions>) -> Self {
        Self {
            n_clients,
            mode: PartitionMode::Proportional,
            proportions,
            tag_groups: None,
        }
    }
}

/// Draws a binary dataset from per-tag Gaussian clusters.
///
/// Every tag owns a center; benign and attack samples of that tag sit
/// `separation / 2` on either side of it along one shared direction, with
/// unit-variance isotropic noise. Tag centers are orthogonal to that
/// direction, so one linear boundary separates the classes for every tag
/// while the tags themselves make shards Non-IID. Tag frequencies fall off
/// as `1 / (t + 1)`, giving uneven shard sizes.
pub fn generate_synthetic(
    n_samples: usize,
    n_features: usize,
    n_tags: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_samples < 2 {
        return Err(Error::param(format!(
            "n_samples must be >= 2, got {n_samples}"
        )));
    }
    if n_features < 1 {
        return Err(Error::param("n_features must be >= 1"));
    }
    if n_tags < 1 {
        return Err(Error::param("n_tags must be >= 1"));
    }
    if !(separation > 0.0 && separation.is_finite()) {
        return Err(Error::param(format!(
            "separation must be > 0, got {separation}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };

    let mut direction: Vec<f64> = (0..n_features).map(|_| normal(&mut rng)).collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|v| *v /= norm);

    let centers: Vec<Vec<f64>> = (0..n_tags)
        .map(|_| {
            let mut c: Vec<f64> = (0..n_features)
                .map(|_| TAG_SPREAD * normal(&mut rng))
                .collect();
            let along: f64 = c.iter().zip(&direction).map(|(a, b)| a * b).sum();
            c.iter_mut()
                .zip(&direction)
                .for_each(|(v, d)| *v -= along * d);
            c
        })
        .collect();

    let weights: Vec<f64> = (0..n_tags).map(|t| 1.0 / (t + 1) as f64).collect();
    let tag_dist = WeightedIndex::new(&weights).expect("positive weights");
    let tag_names: Vec<String> = (0..n_tags).map(|t| format!("tag_{t:02}")).collect();

    let mut features = Vec::with_capacity(n_samples * n_features);
    let mut labels = Vec::with_capacity(n_samples);
    let mut tags = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let label = (i % 2) as u8;
        let tag = tag_dist.sample(&mut rng);
        let offset = if label == 1 { 0.5 } else { -0.5 } * separation;
        for j in 0..n_features {
            features.push(centers[tag][j] + offset * direction[j] + normal(&mut rng));
        }
        labels.push(label);
        tags.push(tag_names[tag].clone());
    }
    let names = (0..n_features).map(|j| format!("f{j}")).collect();
    Dataset::from_flat(n_features, features, labels, Some(tags), names)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvOptions {
    pub label_column: String,
    /// Label value mapped to class 0; every other value is an attack.
    pub benign_label: String,
    pub tag_column: Option<String>,
    /// Categorical columns expanded into one indicator feature per value.
    pub one_hot: Vec<String>,
    pub drop: Vec<String>,
    /// Min-max scale every feature column to [0, 1].
    pub normalize: bool,
}

impl CsvOptions {
    pub fn new(label_column: impl Into<String>) -> Self {
        Self {
            label_column: label_column.into(),
            benign_label: "normal".to_string(),
            tag_column: None,
            one_hot: ["protocol_type", "service", "flag"]
                .map(String::from)
                .to_vec(),
            drop: Vec::new(),
            normalize: true,
        }
    }

    pub fn with_tag_column(mut self, column: impl Into<String>) -> Self {
        self.tag_column = Some(column.into());
        self
    }
}

enum ColumnKind {
    Numeric,
    OneHot(Vec<String>),
}

/// Reads a headed CSV file into a dataset.
pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, opts)
}

/// Same as [`load_csv`] over any reader.
pub fn read_csv<R: std::io::Read>(reader: R, opts: &CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let csv_err = |e: csv::Error| {
        let row = e.position().map_or(0, |p| p.line() as usize);
        Error::Ingestion {
            row,
            column: String::new(),
            message: e.to_string(),
        }
    };
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Ingestion {
                row: 1,
                column: name.to_string(),
                message: "column not found in header".into(),
            })
    };
    let label_idx = find(&opts.label_column)?;
    let tag_idx = opts.tag_column.as_deref().map(find).transpose()?;

    let records: Vec<csv::StringRecord> = rdr
        .records()
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_err)?;
    if records.is_empty() {
        return Err(Error::Ingestion {
            row: 2,
            column: String::new(),
            message: "no data rows".into(),
        });
    }

    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&j| j != label_idx && Some(j) != tag_idx && !opts.drop.contains(&header[j]))
        .collect();
    let kinds: Vec<ColumnKind> = feature_cols
        .iter()
        .map(|&j| {
            if opts.one_hot.contains(&header[j]) {
                let values: BTreeSet<&str> = records.iter().map(|r| &r[j]).collect();
                ColumnKind::OneHot(values.into_iter().map(str::to_string).collect())
            } else {
                ColumnKind::Numeric
            }
        })
        .collect();

    let mut names = Vec::new();
    for (&j, kind) in feature_cols.iter().zip(&kinds) {
        match kind {
            ColumnKind::Numeric => names.push(header[j].clone()),
            ColumnKind::OneHot(values) => {
                names.extend(values.iter().map(|v| format!("{}={v}", header[j])))
            }
        }
    }
    let n_features = names.len();

    let mut features = Vec::with_capacity(records.len() * n_features);
    let mut labels = Vec::with_capacity(records.len());
    let mut tags = tag_idx.map(|_| Vec::with_capacity(records.len()));
    for (r, rec) in records.iter().enumerate() {
        let row = r + 2;
        for (&j, kind) in feature_cols.iter().zip(&kinds) {
            let cell = &rec[j];
            match kind {
                ColumnKind::Numeric => {
                    let value = cell
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::Ingestion {
                            row,
                            column: header[j].clone(),
                            message: format!("`{cell}` is not a finite number"),
                        })?;
                    features.push(value);
                }
                ColumnKind::OneHot(values) => {
                    features.extend(values.iter().map(|v| f64::from(u8::from(v == cell))));
                }
            }
        }
        labels.push(u8::from(rec[label_idx] != *opts.benign_label));
        if let (Some(tags), Some(t)) = (tags.as_mut(), tag_idx) {
            tags.push(rec[t].to_string());
        }
    }

    if opts.normalize {
        min_max_normalize(&mut features, n_features);
    }
    Dataset::from_flat(n_features, features, labels, tags, names)
}

/// Scales each column to [0, 1]; constant columns become 0.
fn min_max_normalize(features: &mut [f64], n_features: usize) {
    if n_features == 0 {
        return;
    }
    for j in 0..n_features {
        let column = features.iter().skip(j).step_by(n_features);
        let (lo, hi) = column.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        let range = hi - lo;
        for v in features.iter_mut().skip(j).step_by(n_features) {
            *v = if range > 0.0 { (*v - lo) / range } else { 0.0 };
        }
    }
}

/// Splits `dataset` across clients.
///
/// `by_tag` hands whole tag families to clients: round-robin over tags in
/// descending size order, or the explicit `tag_groups` when given.
/// `proportional` shuffles with `seed` and cuts consecutive runs of the
/// requested sizes. Rows inside each shard keep dataset order.
pub fn partition(dataset: &Dataset, spec: &PartitionSpec, seed: u64) -> Result<Vec<ClientShard>> {
    let n = spec.n_clients;
    if n < 1 {
        return Err(Error::param("n_clients must be >= 1"));
    }
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    match spec.mode {
        PartitionMode::ByTag => {
            let tags = dataset
                .tags()
                .ok_or_else(|| Error::param("by_tag partitioning needs tagged samples"))?;
            let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, t) in tags.iter().enumerate() {
                groups.entry(t.as_str()).or_default().push(i);
            }
            match &spec.tag_groups {
                Some(explicit) => {
                    if explicit.len() != n {
                        return Err(Error::param(format!(
                            "{} tag groups given for {n} clients",
                            explicit.len()
                        )));
                    }
                    for (client, group) in explicit.iter().enumerate() {
                        for tag in group {
                            let rows = groups.remove(tag.as_str()).ok_or_else(|| {
                                Error::param(format!("tag `{tag}` is absent or listed twice"))
                            })?;
                            assigned[client].extend(rows);
                        }
                    }
                    let mut rest: Vec<usize> = groups.into_values().flatten().collect();
                    rest.sort_unstable();
                    rest.shuffle(&mut rng);
                    for (k, i) in rest.into_iter().enumerate() {
                        assigned[k % n].push(i);
                    }
                }
                None => {
                    if n > groups.len() {
                        return Err(Error::param(format!(
                            "{n} clients but only {} distinct tags",
                            groups.len()
                        )));
                    }
                    let mut ordered: Vec<(&str, Vec<usize>)> = groups.into_iter().collect();
                    ordered.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(b.0)));
                    for (k, (_, rows)) in ordered.into_iter().enumerate() {
                        assigned[k % n].extend(rows);
                    }
                }
            }
        }
        PartitionMode::Proportional => {
            let sizes = shard_sizes(dataset.len(), n, spec.proportions.as_ref())?;
            let mut order: Vec<usize> = (0..dataset.len()).collect();
            order.shuffle(&mut rng);
            let mut start = 0;
            for (client, size) in sizes.into_iter().enumerate() {
                assigned[client] = order[start..start + size].to_vec();
                start += size;
            }
        }
    }

    Ok(assigned
        .into_iter()
        .enumerate()
        .map(|(client_id, mut rows)| {
            rows.sort_unstable();
            let data = dataset.subset(&rows);
            let tag_set = data
                .tags()
                .map(|t| t.iter().cloned().collect())
                .unwrap_or_default();
            ClientShard {
                client_id,
                data,
                tag_set,
                source_indices: rows,
            }
        })
        .collect())
}

fn shard_sizes(total: usize, n: usize, proportions: Option<&Proportions>) -> Result<Vec<usize>> {
    match proportions {
        None => Ok((0..n)
            .map(|c| total / n + usize::from(c < total % n))
            .collect()),
        Some(Proportions::Counts(counts)) => {
            if counts.len() != n {
                return Err(Error::param(format!(
                    "{} counts for {n} clients",
                    counts.len()
                )));
            }
            if counts.contains(&0) {
                return Err(Error::param("shard counts must be positive"));
            }
            let sum: usize = counts.iter().sum();
            if sum != total {
                return Err(Error::param(format!(
                    "counts sum to {sum}, dataset has {total}"
                )));
            }
            Ok(counts.clone())
        }
        Some(Proportions::Fractions(fracs)) => {
            if fracs.len() != n {
                return Err(Error::param(format!(
                    "{} fractions for {n} clients",
                    fracs.len()
                )));
            }
            if fracs.iter().any(|&f| !(f > 0.0 && f.is_finite())) {
                return Err(Error::param("fractions must be positive"));
            }
            let sum: f64 = fracs.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::param(format!("fractions sum to {sum}, expected 1")));
            }
            // Largest-remainder rounding so the sizes cover every sample.
            let exact: Vec<f64> = fracs.iter().map(|f| f * total as f64).collect();
            let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
            let mut by_remainder: Vec<usize> = (0..n).collect();
            by_remainder.sort_by(|&a, &b| {
                let ra = exact[a] - exact[a].floor();
                let rb = exact[b] - exact[b].floor();
                rb.total_cmp(&ra).then(a.cmp(&b))
            });
            let missing = total - sizes.iter().sum::<usize>();
            for &c in by_remainder.iter().take(missing) {
                sizes[c] += 1;
            }
            Ok(sizes)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tagged(counts: &[(&str, usize)]) -> Dataset {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut tags = Vec::new();
        for (tag, count) in counts {
            for i in 0..*count {
                rows.push(vec![i as f64]);
                labels.push((i % 2) as u8);
                tags.push(tag.to_string());
            }
        }
        Dataset::new(rows, labels, Some(tags)).unwrap()
    }

    #[test]
    fn rejects_tiny_or_invalid_synthetic_requests() {
        assert!(matches!(
            generate_synthetic(0, 10, 5, 4.0, 7),
            Err(Error::Parameter(_))
        ));
        assert!(generate_synthetic(1, 10, 5, 4.0, 7).is_err());
        assert!(generate_synthetic(10, 0, 5, 4.0, 7).is_err());
        assert!(generate_synthetic(10, 3, 0, 4.0, 7).is_err());
        assert!(generate_synthetic(10, 3, 2, 0.0, 7).is_err());
    }

    #[test]
    fn synthetic_is_deterministic_and_tagged() {
        let a = generate_synthetic(1000, 10, 5, 4.0, 7).unwrap();
        let b = generate_synthetic(1000, 10, 5, 4.0, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(1000, 10, 5, 4.0, 8).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.tags().unwrap().len(), 1000);
        assert_eq!(a.distinct_labels(), 2);
        let distinct: BTreeSet<_> = a.tags().unwrap().iter().collect();
        assert_eq!(distinct.len(), 5);
    }

    #[test]
    fn csv_maps_labels_and_features() {
        let text = "a,b,label\n1,2,normal\n3,4,neptune\n5,6,neptune\n";
        let mut opts = CsvOptions::new("label");
        opts.normalize = false;
        let d = read_csv(text.as_bytes(), &opts).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.labels(), &[0, 1, 1]);
        assert_eq!(d.row(1), &[3.0, 4.0]);

        opts.normalize = true;
        let d = read_csv(text.as_bytes(), &opts).unwrap();
        assert_eq!(d.row(0), &[0.0, 0.0]);
        assert_eq!(d.row(1), &[0.5, 0.5]);
        assert_eq!(d.row(2), &[1.0, 1.0]);
    }

    #[test]
    fn csv_one_hot_tags_and_drop() {
        let text = "duration,protocol_type,difficulty,label\n\
                    0,tcp,20,normal\n2,udp,15,smurf\n4,tcp,19,neptune\n";
        let mut opts = CsvOptions::new("label").with_tag_column("label");
        opts.drop = vec!["difficulty".into()];
        let d = read_csv(text.as_bytes(), &opts).unwrap();
        assert_eq!(
            d.feature_names(),
            &["duration", "protocol_type=tcp", "protocol_type=udp"]
        );
        assert_eq!(d.row(1), &[0.5, 0.0, 1.0]);
        assert_eq!(d.tags().unwrap(), &["normal", "smurf", "neptune"]);
        assert_eq!(d.labels(), &[0, 1, 1]);
    }

    #[test]
    fn csv_errors_name_row_and_column() {
        let opts = CsvOptions::new("label");
        let err = read_csv("a,b\n1,2\n".as_bytes(), &opts).unwrap_err();
        assert!(matches!(err, Error::Ingestion { ref column, .. } if column == "label"));

        let err = read_csv("a,label\n1,normal\nx,normal\n".as_bytes(), &opts).unwrap_err();
        match err {
            Error::Ingestion { row, column, .. } => {
                assert_eq!(row, 3);
                assert_eq!(column, "a");
            }
            other => panic!("unexpected {other:?}"),
        }

        let err = load_csv(Path::new("/definitely/not/here.csv"), &opts).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn table_composition_with_explicit_groups() {
        // Pair totals per client; the split inside each pair is arbitrary.
        let totals = [40466, 6107, 6315, 8938, 11135, 5420, 5442, 5402, 6135, 5411];
        let mut counts = Vec::new();
        for (group, total) in NSL_KDD_CLIENT_TAGS.iter().zip(totals) {
            let share = total / group.len();
            for (k, tag) in group.iter().enumerate() {
                let c = if k == 0 {
                    total - share * (group.len() - 1)
                } else {
                    share
                };
                counts.push((*tag, c));
            }
        }
        counts.push(("normal", 20));
        let data = tagged(&counts);
        let mut spec = PartitionSpec::by_tag(10);
        spec.tag_groups = Some(
            NSL_KDD_CLIENT_TAGS
                .iter()
                .map(|g| g.iter().map(|s| s.to_string()).collect())
                .collect(),
        );
        let shards = partition(&data, &spec, 1).unwrap();
        let expected: BTreeSet<String> = ["neptune", "smurf", "normal"].map(String::from).into();
        assert_eq!(shards[0].tag_set, expected);
        let attack_rows = shards[0]
            .data
            .tags()
            .unwrap()
            .iter()
            .filter(|t| *t != "normal")
            .count();
        assert_eq!(attack_rows, 40466);
        // 20 benign rows dealt evenly.
        assert!(shards.iter().all(|s| s.tag_set.contains("normal")));
    }

    #[test]
    fn by_tag_round_robin_by_descending_size() {
        let data = tagged(&[("a", 5), ("b", 40), ("c", 10), ("d", 30)]);
        let shards = partition(&data, &PartitionSpec::by_tag(2), 0).unwrap();
        // Order by size: b, d, c, a.
        assert_eq!(shards[0].tag_set, ["b", "c"].map(String::from).into());
        assert_eq!(shards[1].tag_set, ["a", "d"].map(String::from).into());
        assert!(partition(&data, &PartitionSpec::by_tag(5), 0).is_err());
    }

    #[test]
    fn single_client_is_identity() {
        let data = generate_synthetic(200, 3, 4, 4.0, 1).unwrap();
        for spec in [
            PartitionSpec::by_tag(1),
            PartitionSpec::proportional(1, None),
        ] {
            let shards = partition(&data, &spec, 9).unwrap();
            assert_eq!(shards.len(), 1);
            assert_eq!(shards[0].data, data);
        }
    }

    #[test]
    fn proportional_halves() {
        let data = generate_synthetic(100, 2, 1, 4.0, 3).unwrap();
        let spec = PartitionSpec::proportional(2, Some(Proportions::Fractions(vec![0.5, 0.5])));
        let shards = partition(&data, &spec, 11).unwrap();
        assert_eq!(shards[0].data.len(), 50);
        assert_eq!(shards[1].data.len(), 50);
        let a: BTreeSet<_> = shards[0].source_indices.iter().collect();
        let b: BTreeSet<_> = shards[1].source_indices.iter().collect();
        assert!(a.is_disjoint(&b));
    }

    #[test]
    fn proportional_rejects_bad_sizes() {
        let data = generate_synthetic(10, 2, 1, 4.0, 3).unwrap();
        let bad = [
            Proportions::Counts(vec![5, 4]),
            Proportions::Counts(vec![10, 0]),
            Proportions::Fractions(vec![0.5, 0.4]),
            Proportions::Fractions(vec![1.0]),
        ];
        for p in bad {
            assert!(partition(&data, &PartitionSpec::proportional(2, Some(p)), 0).is_err());
        }
    }

    #[test]
    fn split_is_seeded_and_complete() {
        let data = generate_synthetic(101, 2, 3, 4.0, 3).unwrap();
        let (train, test) = data.train_test_split(0.2, 5).unwrap();
        assert_eq!(test.len(), 20);
        assert_eq!(train.len() + test.len(), 101);
        assert_eq!(data.train_test_split(0.2, 5).unwrap().1, test);
    }

    proptest! {
        #[test]
        fn partitions_are_disjoint_and_cover(
            n_samples in 20usize..300,
            n_tags in 1usize..8,
            n_clients in 1usize..6,
            proportional in any::<bool>(),
            seed in any::<u64>(),
        ) {
            let data = generate_synthetic(n_samples, 2, n_tags, 3.0, seed).unwrap();
            let distinct = data.tags().unwrap().iter().collect::<BTreeSet<_>>().len();
            let spec = if proportional {
                PartitionSpec::proportional(n_clients, None)
            } else {
                PartitionSpec::by_tag(n_clients)
            };
            match partition(&data, &spec, seed) {
                Ok(shards) => {
                    let mut seen = BTreeSet::new();
                    for s in &shards {
                        for &i in &s.source_indices {
                            prop_assert!(seen.insert(i));
                        }
                    }
                    prop_assert_eq!(seen.len(), n_samples);
                    let total: usize = shards.iter().map(|s| s.data.len()).sum();
                    prop_assert_eq!(total, n_samples);
                }
                Err(_) => prop_assert!(!proportional && n_clients > distinct),
            }
        }
    }
}
