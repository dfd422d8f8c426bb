//! Posterior summaries: pairwise coincidence probabilities, expected
//! pairwise loss, loss-optimal partitions and per-cluster profiles.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::partition::{for_each_labels, Partition, MAX_ENUMERATION_N};

/// Co-clustering counts over a set of sampled partitions. Merging two
/// accumulators is exact, so per-chain counts can be combined in any order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoincidenceCounts {
    n: usize,
    // upper triangle, row-major, i < j
    together: Vec<u64>,
    samples: u64,
}

impl CoincidenceCounts {
    pub fn new(n: usize) -> Self {
        CoincidenceCounts {
            n,
            together: vec![0; n * n.saturating_sub(1) / 2],
            samples: 0,
        }
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sample_count(&self) -> u64 {
        self.samples
    }

    /// Count for pair `(i, j)`, `i != j`.
    pub fn together(&self, i: usize, j: usize) -> u64 {
        self.together[self.slot(i, j)]
    }

    pub fn add_labels(&mut self, labels: &[usize]) -> Result<()> {
        if labels.len() != self.n {
            return invalid(format!(
                "sample has {} items, accumulator expects {}",
                labels.len(),
                self.n
            ));
        }
        let mut k = 0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                self.together[k] += u64::from(labels[i] == labels[j]);
                k += 1;
            }
        }
        self.samples += 1;
        Ok(())
    }

    pub fn add(&mut self, p: &Partition) -> Result<()> {
        self.add_labels(&p.labels())
    }

    pub fn merge(mut self, other: &CoincidenceCounts) -> Result<Self> {
        if other.n != self.n {
            return invalid("cannot merge accumulators of different sizes");
        }
        for (a, b) in self.together.iter_mut().zip(&other.together) {
            *a += b;
        }
        self.samples += other.samples;
        Ok(self)
    }

    pub fn similarity(&self) -> Result<SimilarityMatrix> {
        if self.samples == 0 {
            return invalid("no samples accumulated");
        }
        let s = self.samples as f64;
        let mut values = vec![1.0; self.n * self.n];
        for i in 0..self.n {
            for j in i + 1..self.n {
                let v = self.together(i, j) as f64 / s;
                values[i * self.n + j] = v;
                values[j * self.n + i] = v;
            }
        }
        Ok(SimilarityMatrix {
            n: self.n,
            values,
            sample_count: self.samples,
        })
    }
}

/// Estimated pairwise coincidence probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
    sample_count: u64,
}

impl SimilarityMatrix {
    /// Takes a full row-major `n × n` matrix; must be symmetric with unit
    /// diagonal and entries in `[0, 1]`.
    pub fn from_values(n: usize, values: Vec<f64>, sample_count: u64) -> Result<Self> {
        if n == 0 || values.len() != n * n {
            return invalid(format!("expected {} entries, got {}", n * n, values.len()));
        }
        for i in 0..n {
            if values[i * n + i] != 1.0 {
                return invalid(format!("diagonal entry {i} is not 1"));
            }
            for j in 0..n {
                let v = values[i * n + j];
                if !(0.0..=1.0).contains(&v) {
                    return invalid(format!("entry ({i}, {j}) = {v} outside [0, 1]"));
                }
                if v != values[j * n + i] {
                    return invalid(format!("entries ({i}, {j}) and ({j}, {i}) differ"));
                }
            }
        }
        Ok(SimilarityMatrix { n, values, sample_count })
    }

    /// 0/1 matrix of a single partition.
    pub fn indicator(p: &Partition) -> Self {
        let n = p.n();
        let labels = p.labels();
        let values = (0..n * n)
            .map(|k| f64::from(u8::from(labels[k / n] == labels[k % n])))
            .collect();
        SimilarityMatrix { n, values, sample_count: 1 }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sample_count(&self) -> u64 {
        self.sample_count
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return invalid("permutation length mismatch");
        }
        let n = self.n;
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                values[perm[i] * n + perm[j]] = self.get(i, j);
            }
        }
        Ok(SimilarityMatrix { n, values, sample_count: self.sample_count })
    }
}

/// Similarity matrix from sampled partitions, split into `exec`-scheduled
/// chunks and merged.
pub fn accumulate_similarity(samples: &[Partition], exec: Execution) -> Result<SimilarityMatrix> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidInput("empty trace".into()))?;
    let n = first.n();
    if samples.iter().any(|p| p.n() != n) {
        return invalid("trace mixes partitions of different sizes");
    }
    const CHUNK: usize = 256;
    let chunks = samples.len().div_ceil(CHUNK);
    let counts = exec.fold(
        chunks,
        || CoincidenceCounts::new(n),
        |acc, c| {
            for p in &samples[c * CHUNK..((c + 1) * CHUNK).min(samples.len())] {
                acc.add(p).expect("sizes checked");
            }
        },
        |a, b| a.merge(&b).expect("sizes agree"),
    );
    counts.similarity()
}

/// Weights on the two kinds of pairwise error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    /// Pair together in the estimate, apart in truth.
    pub weight_false_positive: f64,
    /// Pair apart in the estimate, together in truth.
    pub weight_false_negative: f64,
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec {
            weight_false_positive: 1.0,
            weight_false_negative: 1.0,
        }
    }
}

impl LossSpec {
    pub fn new(w_fp: f64, w_fn: f64) -> Result<Self> {
        let l = LossSpec {
            weight_false_positive: w_fp,
            weight_false_negative: w_fn,
        };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = (self.weight_false_positive, self.weight_false_negative);
        if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) || (a == 0.0 && b == 0.0) {
            return Err(Error::Domain(format!(
                "loss weights must be nonnegative and not both zero, got ({a}, {b})"
            )));
        }
        Ok(())
    }

    // extra loss from putting a pair together rather than apart
    fn together_cost(&self, rho: f64) -> f64 {
        self.weight_false_positive * (1.0 - rho) - self.weight_false_negative * rho
    }
}

fn check_dims(labels_len: usize, sim: &SimilarityMatrix) -> Result<()> {
    if labels_len != sim.n() {
        return invalid(format!(
            "partition has {labels_len} items, similarity matrix {}",
            sim.n()
        ));
    }
    Ok(())
}

fn loss_of_labels(labels: &[usize], sim: &SimilarityMatrix, loss: &LossSpec) -> f64 {
    let n = labels.len();
    let mut total = 0.0;
    for i in 0..n {
        let row = sim.row(i);
        for j in i + 1..n {
            let rho = row[j];
            total += if labels[i] == labels[j] {
                loss.weight_false_positive * (1.0 - rho)
            } else {
                loss.weight_false_negative * rho
            };
        }
    }
    total
}

/// Σ_{i<j} [w_fp·1(together)·(1−ρ_ij) + w_fn·1(apart)·ρ_ij].
pub fn expected_pairwise_loss(p: &Partition, sim: &SimilarityMatrix, loss: &LossSpec) -> Result<f64> {
    check_dims(p.n(), sim)?;
    Ok(loss_of_labels(&p.labels(), sim, loss))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStrategy {
    /// Enumerate every partition (n ≤ 12).
    Exact,
    /// Agglomerative merging followed by single-item relocation.
    #[default]
    Greedy,
}

/// Partition minimizing the expected pairwise loss. Ties go to the
/// canonically smallest partition for the exact search.
pub fn optimal_partition(sim: &SimilarityMatrix, loss: &LossSpec, strategy: SearchStrategy) -> Result<Partition> {
    loss.validate()?;
    match strategy {
        SearchStrategy::Exact => exact_optimum(sim, loss),
        SearchStrategy::Greedy => Ok(greedy_optimum(sim, loss)),
    }
}

fn exact_optimum(sim: &SimilarityMatrix, loss: &LossSpec) -> Result<Partition> {
    let n = sim.n();
    if n > MAX_ENUMERATION_N {
        return Err(Error::TooLarge(format!(
            "exact search needs n <= {MAX_ENUMERATION_N}, got {n}"
        )));
    }
    let mut best = (f64::INFINITY, Vec::new());
    // lexicographic enumeration: the first strict minimum is canonically smallest
    for_each_labels(n, |labels| {
        let l = loss_of_labels(labels, sim, loss);
        if l < best.0 {
            best = (l, labels.to_vec());
        }
    })?;
    Partition::from_labels(&best.1)
}

fn greedy_optimum(sim: &SimilarityMatrix, loss: &LossSpec) -> Partition {
    let n = sim.n();
    let cost: Vec<f64> = (0..n * n)
        .map(|k| loss.together_cost(sim.get(k / n, k % n)))
        .collect();
    let c = |i: usize, j: usize| cost[i * n + j];

    // agglomeration: merge[a][b] = loss change from merging clusters a and b
    let mut clusters: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
    let mut merge = cost.clone();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..n {
            if clusters[a].is_none() {
                continue;
            }
            for b in a + 1..n {
                if clusters[b].is_none() {
                    continue;
                }
                let d = merge[a * n + b];
                if d < 0.0 && best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, a, b));
                }
            }
        }
        let Some((_, a, b)) = best else { break };
        let moved = clusters[b].take().expect("live");
        clusters[a].as_mut().expect("live").extend(moved);
        for x in 0..n {
            if x != a && clusters[x].is_some() {
                let v = merge[a * n + x] + merge[b * n + x];
                merge[a * n + x] = v;
                merge[x * n + a] = v;
            }
        }
    }

    let mut labels = vec![0usize; n];
    for (id, cl) in clusters.iter().enumerate() {
        for &i in cl.iter().flatten() {
            labels[i] = id;
        }
    }

    // relocation passes until no single-item move lowers the loss
    let tol = 1e-12 * (1.0 + loss.weight_false_positive + loss.weight_false_negative);
    loop {
        let mut improved = false;
        for i in 0..n {
            // gain[label] = Σ_{j in cluster, j != i} c(i, j)
            let mut gain = vec![0.0; n];
            let mut size = vec![0usize; n];
            for j in 0..n {
                size[labels[j]] += 1;
                if j != i {
                    gain[labels[j]] += c(i, j);
                }
            }
            let here = gain[labels[i]];
            let mut best = (here, labels[i]);
            for l in 0..n {
                if l == labels[i] {
                    continue;
                }
                // an empty label means a fresh singleton, worth 0
                let v = if size[l] == 0 { 0.0 } else { gain[l] };
                if size[l] == 0 && size[labels[i]] == 1 {
                    continue;
                }
                if v < best.0 - tol {
                    best = (v, l);
                }
            }
            if best.1 != labels[i] {
                labels[i] = best.1;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }

    let found = Partition::from_labels(&labels).expect("n > 0");
    let candidates = [found, Partition::singletons(n), Partition::one_cluster(n)];
    let mut best = candidates[0].clone();
    let mut best_loss = loss_of_labels(&best.labels(), sim, loss);
    for p in &candidates[1..] {
        let l = loss_of_labels(&p.labels(), sim, loss);
        if l < best_loss {
            best = p.clone();
            best_loss = l;
        }
    }
    best
}

/// Mean profile of one cluster and a normal-approximation 95% interval
/// per coordinate (mean ± 1.96·sd/√e, sample sd).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub size: usize,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

pub const CI_Z: f64 = 1.96;

/// Summaries for each cluster of `p`, in cluster order; `data` is
/// row-major with `samples` values per item.
pub fn cluster_summaries(p: &Partition, data: &[f64], samples: usize) -> Result<Vec<ClusterSummary>> {
    if samples == 0 || data.len() != p.n() * samples {
        return invalid(format!(
            "data has {} values, expected {} items × {samples}",
            data.len(),
            p.n()
        ));
    }
    Ok(p.clusters()
        .iter()
        .enumerate()
        .map(|(id, members)| {
            let e = members.len() as f64;
            let mut mean = vec![0.0; samples];
            for &i in members {
                for (m, y) in mean.iter_mut().zip(&data[i * samples..(i + 1) * samples]) {
                    *m += y;
                }
            }
            mean.iter_mut().for_each(|m| *m /= e);
            let half: Vec<f64> = (0..samples)
                .map(|s| {
                    if members.len() < 2 {
                        return 0.0;
                    }
                    let ss: f64 = members
                        .iter()
                        .map(|&i| (data[i * samples + s] - mean[s]).powi(2))
                        .sum();
                    CI_Z * (ss / (e - 1.0)).sqrt() / e.sqrt()
                })
                .collect();
            ClusterSummary {
                cluster: id,
                size: members.len(),
                lower: mean.iter().zip(&half).map(|(m, h)| m - h).collect(),
                upper: mean.iter().zip(&half).map(|(m, h)| m + h).collect(),
                mean,
            }
        })
        .collect())
}
