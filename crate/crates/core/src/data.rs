//! Synthetic task generation, CSV datasets and suite files.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::problem::ClusteringTask;

pub const MAX_CENTER_ATTEMPTS: usize = 100_000;

/// SplitMix64 finalizer over `seed + index`; gives independent child seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub k: usize,
    pub points_per_cluster: usize,
    pub dim: usize,
    pub d_min: f64,
    pub d_max: f64,
}

impl GenerationParams {
    pub fn validate(&self) -> Result<()> {
        let (k, n, dim) = (self.k, self.points_per_cluster, self.dim);
        if k == 0 || n == 0 || dim == 0 {
            return Err(Error::invalid(
                "k, points per cluster and dim must be positive",
            ));
        }
        if k * n < 2 {
            return Err(Error::invalid("a task needs at least two points"));
        }
        let (d_min, d_max) = (self.d_min, self.d_max);
        if !(d_min >= 0.0 && d_min < d_max && d_max.is_finite()) {
            return Err(Error::invalid(format!(
                "distance band must satisfy 0 <= d_min < d_max, got [{d_min}, {d_max}]"
            )));
        }
        Ok(())
    }
}

/// Gaussian blobs with unit covariance whose centers are pairwise between
/// `d_min` and `d_max` apart.
///
/// Centers are drawn uniformly from the box `[-d_max, d_max]^dim` and the
/// whole set is redrawn until every pairwise distance lies in the band.
pub fn generate_task(
    k: usize,
    n_per_cluster: usize,
    dim: usize,
    d_min: f64,
    d_max: f64,
    seed: u64,
) -> Result<ClusteringTask> {
    let params = GenerationParams {
        k,
        points_per_cluster: n_per_cluster,
        dim,
        d_min,
        d_max,
    };
    generate_task_with_id(&params, format!("task-{seed:016x}"), seed)
}

pub fn generate_task_with_id(
    params: &GenerationParams,
    task_id: String,
    seed: u64,
) -> Result<ClusteringTask> {
    let &GenerationParams {
        k,
        points_per_cluster: n,
        dim,
        d_min,
        d_max,
    } = params;
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = draw_centers(&mut rng, params).ok_or(Error::GenerationFailure {
        k,
        dim,
        d_min,
        d_max,
        attempts: MAX_CENTER_ATTEMPTS,
    })?;
    let mut points = Vec::with_capacity(k * n);
    let mut labels = Vec::with_capacity(k * n);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..n {
            points.push(
                center
                    .iter()
                    .map(|m| m + rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            );
            labels.push(c);
        }
    }
    ClusteringTask::new(task_id, seed, vec![n; k], points)?.with_ground_truth(labels)
}

fn draw_centers(rng: &mut ChaCha8Rng, params: &GenerationParams) -> Option<Vec<Vec<f64>>> {
    let GenerationParams {
        k,
        dim,
        d_min,
        d_max,
        ..
    } = *params;
    'attempt: for _ in 0..MAX_CENTER_ATTEMPTS {
        let centers: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..dim).map(|_| rng.random_range(-d_max..d_max)).collect())
            .collect();
        for i in 0..k {
            for j in (i + 1)..k {
                let d = euclid(&centers[i], &centers[j]);
                if d < d_min || d > d_max {
                    continue 'attempt;
                }
            }
        }
        return Some(centers);
    }
    None
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Pairwise distances between the empirical means of the ground-truth clusters.
pub fn empirical_center_distances(t: &ClusteringTask) -> Option<Vec<f64>> {
    let gt = t.ground_truth()?;
    let dim = t.dim();
    let mut means = vec![vec![0.0; dim]; t.k()];
    let mut counts = vec![0usize; t.k()];
    for (p, &l) in t.points().iter().zip(gt) {
        counts[l] += 1;
        for (m, v) in means[l].iter_mut().zip(p) {
            *m += v;
        }
    }
    for (m, &c) in means.iter_mut().zip(&counts) {
        m.iter_mut().for_each(|v| *v /= c as f64);
    }
    let mut out = Vec::new();
    for i in 0..t.k() {
        for j in (i + 1)..t.k() {
            out.push(euclid(&means[i], &means[j]));
        }
    }
    Some(out)
}

/// A labeled (or unlabeled) table of feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub points: Vec<Vec<f64>>,
    /// Class index per row, numbered by first appearance.
    pub labels: Option<Vec<usize>>,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.points.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }
}

/// Reads a headered CSV. Feature columns are selected by name; an empty
/// selection takes every column except the label column.
pub fn load_csv(
    path: impl AsRef<Path>,
    feature_columns: &[&str],
    label_column: Option<&str>,
) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, feature_columns, label_column)
}

pub fn read_csv<R: std::io::Read>(
    reader: R,
    feature_columns: &[&str],
    label_column: Option<&str>,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                row: 1,
                column: name.to_owned(),
                message: "column not found in header".into(),
            })
    };
    let label_idx = label_column.map(find).transpose()?;
    let feature_idx: Vec<usize> = if feature_columns.is_empty() {
        (0..headers.len())
            .filter(|&i| Some(i) != label_idx)
            .collect()
    } else {
        feature_columns
            .iter()
            .map(|c| find(c))
            .collect::<Result<_>>()?
    };

    let mut points = Vec::new();
    let mut labels = label_idx.map(|_| Vec::new());
    let mut class_ids: HashMap<String, usize> = HashMap::new();
    let mut class_names = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        // header is row 1
        let row = r + 2;
        let mut p = Vec::with_capacity(feature_idx.len());
        for &c in &feature_idx {
            let raw = record.get(c).ok_or_else(|| Error::Parse {
                row,
                column: headers[c].clone(),
                message: "missing field".into(),
            })?;
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                row,
                column: headers[c].clone(),
                message: format!("not a number: {raw:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: headers[c].clone(),
                    message: "non-finite value".into(),
                });
            }
            p.push(v);
        }
        points.push(p);
        if let (Some(li), Some(labels)) = (label_idx, labels.as_mut()) {
            let raw = record.get(li).ok_or_else(|| Error::Parse {
                row,
                column: headers[li].clone(),
                message: "missing label".into(),
            })?;
            let next = class_ids.len();
            let id = *class_ids.entry(raw.to_owned()).or_insert_with(|| {
                class_names.push(raw.to_owned());
                next
            });
            labels.push(id);
        }
    }
    Ok(Dataset {
        feature_names: feature_idx.iter().map(|&i| headers[i].clone()).collect(),
        points,
        labels,
        class_names,
    })
}

/// Balanced subsample: `k` random classes, `n_per_cluster` random rows of
/// each and `dims` random features (kept in column order).
pub fn subsample_balanced(
    data: &Dataset,
    k: usize,
    n_per_cluster: usize,
    dims: usize,
    seed: u64,
) -> Result<ClusteringTask> {
    let labels = data
        .labels
        .as_ref()
        .ok_or_else(|| Error::InsufficientData("dataset has no class labels".into()))?;
    if k == 0 || n_per_cluster == 0 || dims == 0 {
        return Err(Error::invalid(
            "k, points per cluster and dims must be positive",
        ));
    }
    if dims > data.n_features() {
        return Err(Error::InsufficientData(format!(
            "{dims} dimensions requested, dataset has {}",
            data.n_features()
        )));
    }
    let n_classes = data.class_names.len();
    let members: Vec<Vec<usize>> = (0..n_classes)
        .map(|c| (0..labels.len()).filter(|&i| labels[i] == c).collect())
        .collect();
    let eligible: Vec<usize> = (0..n_classes)
        .filter(|&c| members[c].len() >= n_per_cluster)
        .collect();
    if eligible.len() < k {
        return Err(Error::InsufficientData(format!(
            "need {k} classes with at least {n_per_cluster} rows, found {}",
            eligible.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes: Vec<usize> = sample(&mut rng, eligible.len(), k)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    classes.sort_unstable();
    let mut features: Vec<usize> = sample(&mut rng, data.n_features(), dims).into_vec();
    features.sort_unstable();

    let mut points = Vec::with_capacity(k * n_per_cluster);
    let mut gt = Vec::with_capacity(k * n_per_cluster);
    for (new_label, &c) in classes.iter().enumerate() {
        let mut rows: Vec<usize> = sample(&mut rng, members[c].len(), n_per_cluster)
            .into_iter()
            .map(|i| members[c][i])
            .collect();
        rows.sort_unstable();
        for r in rows {
            points.push(features.iter().map(|&f| data.points[r][f]).collect());
            gt.push(new_label);
        }
    }
    ClusteringTask::new(
        format!("subsample-{seed:016x}"),
        seed,
        vec![n_per_cluster; k],
        points,
    )?
    .with_ground_truth(gt)
}

/// Hex SHA-256 of a byte slice.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub task_id: String,
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationFailureRecord {
    pub index: usize,
    pub message: String,
}

/// Index of a generated task suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub seed: u64,
    pub params: GenerationParams,
    /// Box in which centers were drawn, `[-box_half_width, box_half_width]^dim`.
    pub box_half_width: f64,
    pub tasks: Vec<ManifestEntry>,
    #[serde(default)]
    pub failures: Vec<GenerationFailureRecord>,
}

pub const SUITE_MANIFEST: &str = "manifest.json";

/// Generates `n_tasks` tasks with per-task seeds derived from `seed`.
pub fn generate_suite(
    params: &GenerationParams,
    n_tasks: usize,
    seed: u64,
) -> (Vec<ClusteringTask>, Vec<GenerationFailureRecord>) {
    let mut tasks = Vec::with_capacity(n_tasks);
    let mut failures = Vec::new();
    for index in 0..n_tasks {
        match generate_task_with_id(
            params,
            format!("task-{index:05}"),
            derive_seed(seed, index as u64),
        ) {
            Ok(t) => tasks.push(t),
            Err(e) => failures.push(GenerationFailureRecord {
                index,
                message: e.to_string(),
            }),
        }
    }
    (tasks, failures)
}

/// Writes task files and `manifest.json` into `dir`.
pub fn write_suite(
    dir: impl AsRef<Path>,
    params: &GenerationParams,
    seed: u64,
    tasks: &[ClusteringTask],
    failures: Vec<GenerationFailureRecord>,
) -> Result<SuiteManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(tasks.len());
    for t in tasks {
        let file = format!("{}.json", t.task_id());
        let bytes = serde_json::to_vec_pretty(t)?;
        write_bytes(dir.join(&file), &bytes)?;
        entries.push(ManifestEntry {
            task_id: t.task_id().to_owned(),
            file,
            sha256: content_hash(&bytes),
        });
    }
    let manifest = SuiteManifest {
        seed,
        params: *params,
        box_half_width: params.d_max,
        tasks: entries,
        failures,
    };
    write_bytes(
        dir.join(SUITE_MANIFEST),
        &serde_json::to_vec_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

/// Loads a suite manifest and all its task files.
pub fn read_suite(dir: impl AsRef<Path>) -> Result<(SuiteManifest, Vec<ClusteringTask>)> {
    let dir = dir.as_ref();
    let manifest: SuiteManifest = read_json(dir.join(SUITE_MANIFEST))?;
    let tasks = manifest
        .tasks
        .iter()
        .map(|e| read_json(dir.join(&e.file)))
        .collect::<Result<Vec<ClusteringTask>>>()?;
    Ok((manifest, tasks))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn write_bytes(path: impl Into<PathBuf>, bytes: &[u8]) -> Result<()> {
    let path = path.into();
    fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}
