//! Clustering tasks, assignments and partition keys.
//!
//! An [`Assignment`] stores one cluster label per point. The one-hot matrix
//! `Z` (K×I) and its row-major vectorization `z = vec(Z)` are derived views,
//! with `z[k * I + i] == 1` iff point `i` belongs to cluster `k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A balanced clustering problem: points, cluster count and target sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TaskFile", into = "TaskFile")]
pub struct ClusteringTask {
    task_id: String,
    seed: u64,
    k: usize,
    sizes: Vec<usize>,
    points: Vec<Vec<f64>>,
    ground_truth: Option<Vec<usize>>,
}

/// On-disk layout of a task file.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TaskFile {
    task_id: String,
    seed: u64,
    k: usize,
    sizes: Vec<usize>,
    points: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground_truth: Option<Vec<usize>>,
}

impl TryFrom<TaskFile> for ClusteringTask {
    type Error = Error;

    fn try_from(f: TaskFile) -> Result<Self> {
        if f.k != f.sizes.len() {
            return Err(Error::invalid(format!(
                "k={} but {} target sizes were given",
                f.k,
                f.sizes.len()
            )));
        }
        let task = ClusteringTask::new(f.task_id, f.seed, f.sizes, f.points)?;
        match f.ground_truth {
            Some(gt) => task.with_ground_truth(gt),
            None => Ok(task),
        }
    }
}

impl From<ClusteringTask> for TaskFile {
    fn from(t: ClusteringTask) -> Self {
        TaskFile {
            task_id: t.task_id,
            seed: t.seed,
            k: t.k,
            sizes: t.sizes,
            points: t.points,
            ground_truth: t.ground_truth,
        }
    }
}

impl ClusteringTask {
    /// Builds a task; `k` is taken from `sizes.len()`.
    pub fn new(
        task_id: impl Into<String>,
        seed: u64,
        sizes: Vec<usize>,
        points: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::invalid("cluster count must be at least 1"));
        }
        if sizes.contains(&0) {
            return Err(Error::invalid("every target cluster size must be >= 1"));
        }
        let total: usize = sizes.iter().sum();
        if total != points.len() {
            return Err(Error::invalid(format!(
                "target sizes sum to {total} but the task has {} points",
                points.len()
            )));
        }
        let dim = points.first().map_or(0, Vec::len);
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::invalid(format!(
                    "point {i} has dimension {} (expected {dim})",
                    p.len()
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "point {i} has a non-finite coordinate"
                )));
            }
        }
        Ok(ClusteringTask {
            task_id: task_id.into(),
            seed,
            k: sizes.len(),
            sizes,
            points,
            ground_truth: None,
        })
    }

    /// Attaches ground-truth labels, which must be a feasible labeling.
    pub fn with_ground_truth(mut self, labels: Vec<usize>) -> Result<Self> {
        let a = Assignment::new(labels, self.k)?;
        if !is_feasible(&a, &self)? {
            return Err(Error::invalid(
                "ground truth labels do not match the target cluster sizes",
            ));
        }
        self.ground_truth = Some(a.labels);
        Ok(self)
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    pub fn ground_truth(&self) -> Option<&[usize]> {
        self.ground_truth.as_deref()
    }

    /// Number of binary variables of the one-hot encoding, K·I.
    pub fn n_vars(&self) -> usize {
        self.k * self.points.len()
    }

    /// Number of distinct feasible partitions,
    /// `I! / Π s_k! / Π_m (number of clusters of size m)!`.
    pub fn partition_count(&self) -> u128 {
        let labelings = self.labeling_count();
        let mut sorted = self.sizes.clone();
        sorted.sort_unstable();
        let mut sym: u128 = 1;
        let mut run = 0u128;
        for (idx, s) in sorted.iter().enumerate() {
            run = if idx > 0 && sorted[idx - 1] == *s {
                run + 1
            } else {
                1
            };
            sym = sym.saturating_mul(run);
        }
        labelings / sym
    }

    /// Number of feasible labelings, the multinomial `I! / Π s_k!`.
    pub fn labeling_count(&self) -> u128 {
        let mut remaining = self.points.len() as u128;
        let mut total: u128 = 1;
        for &s in &self.sizes {
            total = total.saturating_mul(binomial(remaining, s as u128));
            remaining -= s as u128;
        }
        total
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 0..k {
        // exact at every step: acc * (n - j) is divisible by (j + 1)
        acc = acc.saturating_mul(n - j) / (j + 1);
    }
    acc
}

/// One cluster label per point.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    labels: Vec<usize>,
    k: usize,
}

impl Assignment {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("cluster count must be at least 1"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for k={k}"
            )));
        }
        Ok(Assignment { labels, k })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Points per cluster.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// One-hot matrix Z with `Z[k][i] == 1` iff point `i` is in cluster `k`.
    pub fn one_hot(&self) -> Vec<Vec<u8>> {
        let mut z = vec![vec![0u8; self.labels.len()]; self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            z[l][i] = 1;
        }
        z
    }

    /// Row-major vectorization of the one-hot matrix.
    pub fn vectorize(&self) -> BinaryVector {
        let n = self.labels.len();
        let mut z = vec![0u8; self.k * n];
        for (i, &l) in self.labels.iter().enumerate() {
            z[l * n + i] = 1;
        }
        BinaryVector(z)
    }

    /// Inverse of [`Assignment::vectorize`]; fails unless every point has
    /// exactly one active bit.
    pub fn devectorize(z: &BinaryVector, k: usize, n_points: usize) -> Result<Self> {
        if z.len() != k * n_points {
            return Err(Error::DimensionMismatch {
                expected: k * n_points,
                actual: z.len(),
            });
        }
        let mut labels = Vec::with_capacity(n_points);
        for i in 0..n_points {
            let mut label = None;
            for c in 0..k {
                if z.get(c * n_points + i) {
                    if label.is_some() {
                        return Err(Error::invalid(format!("point {i} is in several clusters")));
                    }
                    label = Some(c);
                }
            }
            labels.push(label.ok_or_else(|| Error::invalid(format!("point {i} is unassigned")))?);
        }
        Assignment::new(labels, k)
    }
}

/// Checks the one-cluster-per-point and cluster-size constraints.
pub fn is_feasible(a: &Assignment, t: &ClusteringTask) -> Result<bool> {
    if a.len() != t.n_points() {
        return Err(Error::DimensionMismatch {
            expected: t.n_points(),
            actual: a.len(),
        });
    }
    if a.k() != t.k() {
        return Err(Error::DimensionMismatch {
            expected: t.k(),
            actual: a.k(),
        });
    }
    Ok(a.cluster_sizes() == t.sizes())
}

/// Label vector renumbered by order of first appearance. Assignments that
/// differ only by a permutation of cluster labels share the same key.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartitionKey(Vec<usize>);

impl PartitionKey {
    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of distinct groups in the key.
    pub fn n_groups(&self) -> usize {
        self.0.iter().max().map_or(0, |m| m + 1)
    }

    /// Re-labels the partition so that cluster sizes match `t.sizes()`.
    ///
    /// Groups are matched to clusters of equal size in order of first
    /// appearance, so the result is deterministic.
    pub fn to_assignment(&self, t: &ClusteringTask) -> Result<Assignment> {
        if self.len() != t.n_points() {
            return Err(Error::DimensionMismatch {
                expected: t.n_points(),
                actual: self.len(),
            });
        }
        let groups = self.n_groups();
        if groups != t.k() {
            return Err(Error::invalid(format!(
                "partition has {groups} groups but the task has {} clusters",
                t.k()
            )));
        }
        let mut group_sizes = vec![0usize; groups];
        for &g in &self.0 {
            group_sizes[g] += 1;
        }
        let mut taken = vec![false; t.k()];
        let mut mapping = vec![0usize; groups];
        for (g, &gs) in group_sizes.iter().enumerate() {
            let c = (0..t.k())
                .find(|&c| !taken[c] && t.sizes()[c] == gs)
                .ok_or_else(|| Error::invalid("partition group sizes do not match the task"))?;
            taken[c] = true;
            mapping[g] = c;
        }
        Assignment::new(self.0.iter().map(|&g| mapping[g]).collect(), t.k())
    }
}

impl From<PartitionKey> for Vec<usize> {
    fn from(k: PartitionKey) -> Self {
        k.0
    }
}

/// Canonical first-appearance relabeling of a label vector.
pub fn canonical_labels(labels: &[usize]) -> PartitionKey {
    let mut map: Vec<(usize, usize)> = Vec::new();
    let mut out = Vec::with_capacity(labels.len());
    for &l in labels {
        let id = match map.iter().find(|(from, _)| *from == l) {
            Some(&(_, to)) => to,
            None => {
                let to = map.len();
                map.push((l, to));
                to
            }
        };
        out.push(id);
    }
    PartitionKey(out)
}

pub fn canonicalize(a: &Assignment) -> PartitionKey {
    canonical_labels(a.labels())
}

/// Binary solution vector, one byte (0 or 1) per variable.
///
/// Serialized as a bit string where character 0 is variable 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BinaryVector(Vec<u8>);

impl BinaryVector {
    pub fn zeros(n: usize) -> Self {
        BinaryVector(vec![0; n])
    }

    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::invalid("binary vector entries must be 0 or 1"));
        }
        Ok(BinaryVector(bits))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i] == 1
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn to_bit_string(&self) -> String {
        self.0
            .iter()
            .map(|&b| if b == 1 { '1' } else { '0' })
            .collect()
    }

    pub fn parse_bit_string(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::invalid(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<u8>>>()
            .map(BinaryVector)
    }
}

impl Serialize for BinaryVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_bit_string())
    }
}

impl<'de> Deserialize<'de> for BinaryVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        BinaryVector::parse_bit_string(&s).map_err(serde::de::Error::custom)
    }
}

/// Visits every feasible partition exactly once, as a labeling whose cluster
/// sizes match `t.sizes()`.
///
/// Clusters are filled in order of size. Clusters of equal size are
/// interchangeable, so within such a run the smallest member of each cluster
/// must exceed the smallest member of the one filled before it; this removes
/// label-permutation duplicates without enumerating them.
pub fn for_each_partition<F: FnMut(&[usize])>(t: &ClusteringTask, mut visit: F) {
    let n = t.n_points();
    let mut order: Vec<usize> = (0..t.k()).collect();
    order.sort_by_key(|&c| (t.sizes()[c], c));
    let mut labels = vec![usize::MAX; n];
    let mut firsts = vec![0usize; order.len()];
    fill_cluster(t, &order, 0, &mut labels, &mut firsts, &mut visit);
}

fn fill_cluster<F: FnMut(&[usize])>(
    t: &ClusteringTask,
    order: &[usize],
    pos: usize,
    labels: &mut [usize],
    firsts: &mut [usize],
    visit: &mut F,
) {
    if pos == order.len() {
        visit(labels);
        return;
    }
    let size = t.sizes()[order[pos]];
    let free: Vec<usize> = (0..labels.len())
        .filter(|&i| labels[i] == usize::MAX)
        .collect();
    // smallest member must follow the previous equal-size cluster's
    let floor = (pos > 0 && t.sizes()[order[pos - 1]] == size).then(|| firsts[pos - 1]);
    let mut chosen = Vec::with_capacity(size);
    let fill = Fill {
        t,
        order,
        pos,
        free: &free,
        size,
        floor,
    };
    fill.choose(labels, firsts, 0, &mut chosen, visit);
}

struct Fill<'a> {
    t: &'a ClusteringTask,
    order: &'a [usize],
    pos: usize,
    free: &'a [usize],
    size: usize,
    floor: Option<usize>,
}

impl Fill<'_> {
    fn choose<F: FnMut(&[usize])>(
        &self,
        labels: &mut [usize],
        firsts: &mut [usize],
        start: usize,
        chosen: &mut Vec<usize>,
        visit: &mut F,
    ) {
        let cluster = self.order[self.pos];
        if chosen.len() == self.size {
            for &c in chosen.iter() {
                labels[self.free[c]] = cluster;
            }
            firsts[self.pos] = chosen.first().map_or(0, |&c| self.free[c]);
            fill_cluster(self.t, self.order, self.pos + 1, labels, firsts, visit);
            for &c in chosen.iter() {
                labels[self.free[c]] = usize::MAX;
            }
            return;
        }
        let need = self.size - chosen.len();
        let mut last = self.free.len().saturating_sub(need);
        if chosen.is_empty() && self.run_takes_rest() {
            // every remaining point goes to this run, so the smallest one
            // must anchor the cluster filled now
            last = last.min(start);
        }
        for c in start..=last {
            if chosen.is_empty() && self.floor.is_some_and(|f| self.free[c] <= f) {
                continue;
            }
            chosen.push(c);
            self.choose(labels, firsts, c + 1, chosen, visit);
            chosen.pop();
        }
    }

    fn run_takes_rest(&self) -> bool {
        let rest: usize = self.order[self.pos..]
            .iter()
            .map(|&c| self.t.sizes()[c])
            .sum();
        rest == self.free.len()
            && self.order[self.pos..]
                .iter()
                .all(|&c| self.t.sizes()[c] == self.size)
    }
}

/// Visits every feasible labeling (not merged by permutation).
pub fn for_each_labeling<F: FnMut(&[usize])>(t: &ClusteringTask, mut visit: F) {
    let mut labels = vec![0usize; t.n_points()];
    let mut remaining = t.sizes().to_vec();
    labeling_rec(0, &mut labels, &mut remaining, &mut visit);
}

fn labeling_rec<F: FnMut(&[usize])>(
    i: usize,
    labels: &mut [usize],
    remaining: &mut [usize],
    visit: &mut F,
) {
    if i == labels.len() {
        visit(labels);
        return;
    }
    for c in 0..remaining.len() {
        if remaining[c] > 0 {
            remaining[c] -= 1;
            labels[i] = c;
            labeling_rec(i + 1, labels, remaining, visit);
            remaining[c] += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn task(sizes: Vec<usize>) -> ClusteringTask {
        let n: usize = sizes.iter().sum();
        let points = (0..n).map(|i| vec![i as f64, 0.0]).collect();
        ClusteringTask::new("t", 0, sizes, points).unwrap()
    }

    #[test]
    fn feasibility_examples() {
        let t = task(vec![1, 1]);
        assert!(is_feasible(&Assignment::new(vec![0, 1], 2).unwrap(), &t).unwrap());
        assert!(!is_feasible(&Assignment::new(vec![0, 0], 2).unwrap(), &t).unwrap());
        let t = task(vec![2, 2, 1]);
        let a = Assignment::new(vec![0, 1, 0, 1, 2], 3).unwrap();
        assert!(is_feasible(&a, &t).unwrap());
    }

    #[test]
    fn feasibility_dimension_mismatch() {
        let t = task(vec![1, 1]);
        let a = Assignment::new(vec![0, 1, 1], 2).unwrap();
        assert!(matches!(
            is_feasible(&a, &t),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn canonicalize_examples() {
        let a = Assignment::new(vec![1, 0, 1, 0], 2).unwrap();
        assert_eq!(canonicalize(&a).as_slice(), &[0, 1, 0, 1]);
        let a = Assignment::new(vec![2, 2, 0, 1, 0], 3).unwrap();
        let key = canonicalize(&a);
        assert_eq!(key.as_slice(), &[0, 0, 1, 2, 1]);
        assert_eq!(canonical_labels(key.as_slice()), key);
    }

    #[test]
    fn vectorize_examples() {
        let a = Assignment::new(vec![0, 1], 2).unwrap();
        assert_eq!(a.vectorize().as_bytes(), &[1, 0, 0, 1]);
        let a = Assignment::new(vec![0, 0, 0], 1).unwrap();
        assert_eq!(a.vectorize().as_bytes(), &[1, 1, 1]);
    }

    #[test]
    fn vectorize_round_trip_all_feasible_k3_i6() {
        let t = task(vec![2, 2, 2]);
        let mut count = 0;
        for_each_labeling(&t, |labels| {
            let a = Assignment::new(labels.to_vec(), 3).unwrap();
            let back = Assignment::devectorize(&a.vectorize(), 3, 6).unwrap();
            assert_eq!(back, a);
            count += 1;
        });
        assert_eq!(count, 90);
    }

    #[test]
    fn devectorize_rejects_double_and_missing() {
        let z = BinaryVector::from_bits(vec![1, 0, 1, 0]).unwrap();
        assert!(Assignment::devectorize(&z, 2, 2).is_err());
        let z = BinaryVector::from_bits(vec![1, 1, 1, 0]).unwrap();
        assert!(Assignment::devectorize(&z, 2, 2).is_err());
    }

    #[test]
    fn labeling_count_matches_enumeration() {
        for sizes in [
            vec![1, 1],
            vec![2, 1],
            vec![3, 2, 1],
            vec![2, 2, 2],
            vec![4, 4],
            vec![3, 3, 3],
        ] {
            let t = task(sizes);
            let mut n = 0u128;
            for_each_labeling(&t, |_| n += 1);
            assert_eq!(n, t.labeling_count());
        }
    }

    #[test]
    fn partition_enumeration_is_complete_and_unique() {
        let cases = [
            vec![1, 1],
            vec![2, 1],
            vec![2, 2],
            vec![2, 2, 1],
            vec![2, 1, 1],
            vec![3, 1, 1],
            vec![1, 1, 2, 2],
            vec![3, 2, 2, 1],
            vec![1, 1, 1, 3],
            vec![2, 2, 2],
            vec![3, 3, 2],
            vec![4, 4],
        ];
        for sizes in cases {
            let t = task(sizes);
            let mut seen = HashSet::new();
            for_each_partition(&t, |labels| {
                let a = Assignment::new(labels.to_vec(), t.k()).unwrap();
                assert!(is_feasible(&a, &t).unwrap());
                assert!(seen.insert(canonicalize(&a)), "duplicate partition");
            });
            let mut all = HashSet::new();
            for_each_labeling(&t, |labels| {
                all.insert(canonical_labels(labels));
            });
            assert_eq!(seen, all);
            assert_eq!(seen.len() as u128, t.partition_count());
        }
    }

    #[test]
    fn canonical_classes_have_permutation_size() {
        // K=3 with equal sizes: each partition has 3! labelings
        let t = task(vec![2, 2, 2]);
        let mut classes = std::collections::HashMap::new();
        for_each_labeling(&t, |labels| {
            *classes.entry(canonical_labels(labels)).or_insert(0usize) += 1;
        });
        assert!(classes.values().all(|&c| c == 6));
        // sizes [2,2,1]: only the two equal clusters permute
        let t = task(vec![2, 2, 1]);
        let mut classes = std::collections::HashMap::new();
        for_each_labeling(&t, |labels| {
            *classes.entry(canonical_labels(labels)).or_insert(0usize) += 1;
        });
        assert!(classes.values().all(|&c| c == 2));
    }

    #[test]
    fn key_to_assignment_respects_sizes() {
        let t = task(vec![2, 1]);
        let key = canonical_labels(&[0, 1, 1]);
        let a = key.to_assignment(&t).unwrap();
        assert!(is_feasible(&a, &t).unwrap());
        assert_eq!(canonicalize(&a), key);
    }

    #[test]
    fn task_rejects_invalid() {
        assert!(ClusteringTask::new("t", 0, vec![2], vec![vec![0.0]]).is_err());
        assert!(ClusteringTask::new("t", 0, vec![0, 1], vec![vec![0.0]]).is_err());
        assert!(ClusteringTask::new("t", 0, vec![1], vec![vec![f64::NAN]]).is_err());
        assert!(ClusteringTask::new("t", 0, vec![], vec![]).is_err());
    }

    #[test]
    fn task_json_round_trip() {
        let t = task(vec![2, 1]).with_ground_truth(vec![0, 1, 0]).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        assert!(s.contains("\"ground_truth\""));
        let back: ClusteringTask = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
        let bad = s.replace("[0,1,0]", "[0,1,1]");
        assert!(serde_json::from_str::<ClusteringTask>(&bad).is_err());
    }

    #[test]
    fn bit_string_round_trip() {
        let z = BinaryVector::from_bits(vec![0, 1, 0, 1, 1]).unwrap();
        assert_eq!(z.to_bit_string(), "01011");
        assert_eq!(BinaryVector::parse_bit_string("01011").unwrap(), z);
        assert!(BinaryVector::parse_bit_string("012").is_err());
    }
}
