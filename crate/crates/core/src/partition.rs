//! Partitions of `{0, .., n-1}` into unlabeled clusters, their coloured
//! counterparts, cluster-size configurations, and exhaustive enumeration.
//!
//! Items are zero-based throughout. Clusters are stored sorted, and the
//! cluster list is ordered by smallest element, so structural equality is
//! equality of partitions regardless of the labels used to build them.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest item count accepted by the exhaustive enumerators (Bell(12) = 4 213 597).
pub const MAX_ENUMERATION_N: usize = 12;

/// Labelled allocation: `labels[i]` is the cluster label of item `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AllocationVector(pub Vec<usize>);

impl From<Vec<usize>> for AllocationVector {
    fn from(v: Vec<usize>) -> Self {
        AllocationVector(v)
    }
}

/// Groups items by label and returns the canonical partition.
pub fn canonicalize(alloc: &AllocationVector) -> Result<Partition> {
    Partition::from_labels(&alloc.0)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    n: usize,
    clusters: Vec<Vec<usize>>,
}

impl Partition {
    /// Builds a partition from arbitrary labels.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        if labels.is_empty() {
            return invalid("allocation vector is empty");
        }
        let mut slot: HashMap<usize, usize> = HashMap::new();
        let mut clusters: Vec<Vec<usize>> = Vec::new();
        for (i, &l) in labels.iter().enumerate() {
            let next = clusters.len();
            let j = *slot.entry(l).or_insert(next);
            if j == clusters.len() {
                clusters.push(Vec::new());
            }
            clusters[j].push(i);
        }
        // first-appearance order is already smallest-element order
        Ok(Partition {
            n: labels.len(),
            clusters,
        })
    }

    /// Builds a partition from explicit clusters, validating coverage and disjointness.
    pub fn from_clusters(n: usize, clusters: Vec<Vec<usize>>) -> Result<Self> {
        let clusters = check_cover(n, clusters.into_iter().map(|c| (0, c)))?
            .into_iter()
            .map(|(_, c)| c)
            .collect();
        Ok(Partition { n, clusters })
    }

    /// One-based convenience constructor used mostly in tests and docs.
    pub fn from_one_based(clusters: &[&[usize]]) -> Result<Self> {
        let n = clusters.iter().map(|c| c.len()).sum();
        let zero: Vec<Vec<usize>> = clusters
            .iter()
            .map(|c| c.iter().map(|&i| i.wrapping_sub(1)).collect())
            .collect();
        Self::from_clusters(n, zero)
    }

    pub fn singletons(n: usize) -> Self {
        Partition {
            n,
            clusters: (0..n).map(|i| vec![i]).collect(),
        }
    }

    pub fn one_cluster(n: usize) -> Self {
        Partition {
            n,
            clusters: vec![(0..n).collect()],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of clusters.
    pub fn degree(&self) -> usize {
        self.clusters.len()
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(Vec::len).collect()
    }

    /// Canonical labels: cluster index in smallest-element order (a restricted growth string).
    pub fn labels(&self) -> Vec<usize> {
        let mut out = vec![0; self.n];
        for (j, c) in self.clusters.iter().enumerate() {
            for &i in c {
                out[i] = j;
            }
        }
        out
    }

    pub fn allocation(&self) -> AllocationVector {
        AllocationVector(self.labels())
    }

    pub fn together(&self, i: usize, j: usize) -> bool {
        let labels = self.labels();
        labels[i] == labels[j]
    }

    /// Applies the item relabeling `i -> perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return invalid("permutation length differs from item count");
        }
        let clusters = self
            .clusters
            .iter()
            .map(|c| c.iter().map(|&i| perm[i]).collect())
            .collect();
        Self::from_clusters(self.n, clusters)
    }

    pub fn configuration(&self) -> ConfigurationCounts {
        ConfigurationCounts::from_sizes(self.n, &self.sizes())
    }
}

impl PartialOrd for Partition {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Partition {
    fn cmp(&self, other: &Self) -> Ordering {
        self.n
            .cmp(&other.n)
            .then_with(|| self.labels().cmp(&other.labels()))
    }
}

/// A partition whose clusters each carry a colour. Colours are not
/// exchangeable; clusters within a colour are.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColouredPartition {
    n: usize,
    colours: Vec<Vec<Vec<usize>>>,
}

impl ColouredPartition {
    /// `colours[k]` lists the clusters of colour `k`.
    pub fn new(n: usize, colours: Vec<Vec<Vec<usize>>>) -> Result<Self> {
        let tagged = colours
            .into_iter()
            .enumerate()
            .flat_map(|(k, cs)| cs.into_iter().map(move |c| (k, c)));
        let checked = check_cover(n, tagged)?;
        Ok(Self::assemble(n, checked))
    }

    /// Builds from per-item `(colour, label)` pairs. Labels only need to be
    /// distinct per cluster; the same label under two colours is two clusters.
    pub fn from_coloured_labels(labels: &[(usize, usize)]) -> Result<Self> {
        if labels.is_empty() {
            return invalid("allocation vector is empty");
        }
        let mut slot: HashMap<(usize, usize), usize> = HashMap::new();
        let mut clusters: Vec<(usize, Vec<usize>)> = Vec::new();
        for (i, &key) in labels.iter().enumerate() {
            let next = clusters.len();
            let j = *slot.entry(key).or_insert(next);
            if j == clusters.len() {
                clusters.push((key.0, Vec::new()));
            }
            clusters[j].1.push(i);
        }
        Ok(Self::assemble(labels.len(), clusters))
    }

    /// Every cluster of `p` gets colour 0.
    pub fn single_colour(p: &Partition) -> Self {
        ColouredPartition {
            n: p.n,
            colours: vec![p.clusters.clone()],
        }
    }

    /// Colours the clusters of `p` (in canonical order) with `colouring[j]`.
    pub fn colour(p: &Partition, colouring: &[usize]) -> Result<Self> {
        if colouring.len() != p.degree() {
            return invalid("colouring length differs from partition degree");
        }
        let tagged = p
            .clusters
            .iter()
            .zip(colouring)
            .map(|(c, &k)| (k, c.clone()))
            .collect();
        Ok(Self::assemble(p.n, tagged))
    }

    fn assemble(n: usize, mut tagged: Vec<(usize, Vec<usize>)>) -> Self {
        for (_, c) in tagged.iter_mut() {
            c.sort_unstable();
        }
        tagged.sort_by_key(|(_, c)| c[0]);
        let width = tagged.iter().map(|(k, _)| k + 1).max().unwrap_or(0);
        let mut colours = vec![Vec::new(); width];
        for (k, c) in tagged {
            colours[k].push(c);
        }
        ColouredPartition { n, colours }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of colour slots (trailing empty colours are not stored).
    pub fn num_colours(&self) -> usize {
        self.colours.len()
    }

    pub fn colour_clusters(&self, k: usize) -> &[Vec<usize>] {
        self.colours.get(k).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn colours(&self) -> &[Vec<Vec<usize>>] {
        &self.colours
    }

    pub fn degree(&self) -> usize {
        self.colours.iter().map(Vec::len).sum()
    }

    pub fn colour_degrees(&self) -> Vec<usize> {
        self.colours.iter().map(Vec::len).collect()
    }

    pub fn sizes(&self) -> ClusterSizes {
        ClusterSizes::new(
            self.colours
                .iter()
                .map(|cs| cs.iter().map(Vec::len).collect())
                .collect(),
        )
    }

    /// Drops colours.
    pub fn uncoloured(&self) -> Partition {
        let mut clusters: Vec<Vec<usize>> = self.colours.iter().flatten().cloned().collect();
        clusters.sort_by_key(|c| c[0]);
        Partition {
            n: self.n,
            clusters,
        }
    }

    /// Per-item colour.
    pub fn item_colours(&self) -> Vec<usize> {
        let mut out = vec![0; self.n];
        for (k, cs) in self.colours.iter().enumerate() {
            for &i in cs.iter().flatten() {
                out[i] = k;
            }
        }
        out
    }

    /// If the partition uses at most one colour slot, the plain partition.
    pub fn as_plain(&self) -> Option<Partition> {
        (self.colours.len() <= 1).then(|| self.uncoloured())
    }

    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return invalid("permutation length differs from item count");
        }
        let colours = self
            .colours
            .iter()
            .map(|cs| {
                cs.iter()
                    .map(|c| c.iter().map(|&i| perm[i]).collect())
                    .collect()
            })
            .collect();
        Self::new(self.n, colours)
    }
}

/// Where a withdrawn item (or block) can be put back. Cluster indices refer
/// to the canonical order of the remaining clusters of that colour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReallocTarget {
    Existing { colour: usize, cluster: usize },
    New { colour: usize },
}

impl ColouredPartition {
    /// Clusters per colour after removing `block`, in canonical order.
    /// Clusters emptied by the removal disappear.
    pub fn without_items(&self, block: &[usize]) -> Vec<Vec<Vec<usize>>> {
        self.colours
            .iter()
            .map(|cs| {
                let mut kept: Vec<Vec<usize>> = cs
                    .iter()
                    .map(|c| c.iter().copied().filter(|i| !block.contains(i)).collect())
                    .filter(|c: &Vec<usize>| !c.is_empty())
                    .collect();
                kept.sort_by_key(|c| c[0]);
                kept
            })
            .collect()
    }

    /// Sizes of the remaining clusters after removing `block`, matching
    /// the indexing of [`ColouredPartition::without_items`].
    pub fn sizes_without(&self, block: &[usize]) -> ClusterSizes {
        ClusterSizes::new(
            self.without_items(block)
                .iter()
                .map(|cs| cs.iter().map(Vec::len).collect())
                .collect(),
        )
    }

    /// Moves `block` as a unit to `target`.
    pub fn reallocate_block(&self, block: &[usize], target: ReallocTarget) -> Result<Self> {
        if block.is_empty() {
            return invalid("empty block");
        }
        if let Some(&i) = block.iter().find(|&&i| i >= self.n) {
            return invalid(format!("item {i} out of range"));
        }
        let mut rest = self.without_items(block);
        match target {
            ReallocTarget::Existing { colour, cluster } => {
                let c = rest
                    .get_mut(colour)
                    .and_then(|cs| cs.get_mut(cluster))
                    .ok_or_else(|| Error::InvalidInput(format!("no cluster {cluster} of colour {colour}")))?;
                c.extend_from_slice(block);
            }
            ReallocTarget::New { colour } => {
                if rest.len() <= colour {
                    rest.resize(colour + 1, Vec::new());
                }
                rest[colour].push(block.to_vec());
            }
        }
        Self::new(self.n, rest)
    }

    pub fn reallocate(&self, item: usize, target: ReallocTarget) -> Result<Self> {
        self.reallocate_block(&[item], target)
    }
}

/// Cluster sizes grouped by colour; the only thing an exchangeable prior looks at.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClusterSizes {
    per_colour: Vec<Vec<usize>>,
}

impl ClusterSizes {
    pub fn new(per_colour: Vec<Vec<usize>>) -> Self {
        ClusterSizes { per_colour }
    }

    pub fn plain(sizes: Vec<usize>) -> Self {
        ClusterSizes {
            per_colour: vec![sizes],
        }
    }

    pub fn per_colour(&self) -> &[Vec<usize>] {
        &self.per_colour
    }

    pub fn colour(&self, k: usize) -> &[usize] {
        self.per_colour.get(k).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn num_colours(&self) -> usize {
        self.per_colour.len()
    }

    pub fn colour_total(&self, k: usize) -> usize {
        self.colour(k).iter().sum()
    }

    pub fn colour_degree(&self, k: usize) -> usize {
        self.colour(k).len()
    }

    pub fn total(&self) -> usize {
        self.per_colour.iter().flatten().sum()
    }

    pub fn degree(&self) -> usize {
        self.per_colour.iter().map(Vec::len).sum()
    }

    pub(crate) fn ensure_colour(&mut self, k: usize) {
        if self.per_colour.len() <= k {
            self.per_colour.resize(k + 1, Vec::new());
        }
    }

    pub(crate) fn grow(&mut self, k: usize, j: usize) {
        self.per_colour[k][j] += 1;
    }

    pub(crate) fn push(&mut self, k: usize, size: usize) -> usize {
        self.ensure_colour(k);
        self.per_colour[k].push(size);
        self.per_colour[k].len() - 1
    }
}

fn check_cover(
    n: usize,
    clusters: impl IntoIterator<Item = (usize, Vec<usize>)>,
) -> Result<Vec<(usize, Vec<usize>)>> {
    if n == 0 {
        return invalid("partition of zero items");
    }
    let mut seen = vec![false; n];
    let mut out: Vec<(usize, Vec<usize>)> = Vec::new();
    for (k, mut c) in clusters {
        if c.is_empty() {
            return invalid("empty cluster");
        }
        c.sort_unstable();
        for &i in &c {
            if i >= n {
                return invalid(format!("item {i} out of range for n = {n}"));
            }
            if std::mem::replace(&mut seen[i], true) {
                return invalid(format!("item {i} appears in two clusters"));
            }
        }
        out.push((k, c));
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return invalid(format!("item {i} is not covered"));
    }
    out.sort_by_key(|(_, c)| c[0]);
    Ok(out)
}

/// `a[r - 1]` is the number of clusters of size `r`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfigurationCounts {
    n: usize,
    a: Vec<usize>,
}

impl ConfigurationCounts {
    /// Validates `Σ r·a_r = n`.
    pub fn new(n: usize, a: Vec<usize>) -> Result<Self> {
        let total: usize = a.iter().enumerate().map(|(r, &c)| (r + 1) * c).sum();
        if total != n || n == 0 {
            return invalid(format!(
                "configuration accounts for {total} items but n = {n}"
            ));
        }
        let mut a = a;
        while a.last() == Some(&0) {
            a.pop();
        }
        Ok(ConfigurationCounts { n, a })
    }

    pub fn from_sizes(n: usize, sizes: &[usize]) -> Self {
        let mut a = vec![0; sizes.iter().copied().max().unwrap_or(0)];
        for &s in sizes {
            a[s - 1] += 1;
        }
        ConfigurationCounts { n, a }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `(r, a_r)` pairs with `a_r > 0`.
    pub fn counts(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.a
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(r, &c)| (r + 1, c))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.a
    }
}

/// Every configuration (integer partition) of `n`.
pub fn enumerate_configurations(n: usize) -> Vec<ConfigurationCounts> {
    fn rec(rem: usize, max: usize, acc: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rem == 0 {
            out.push(acc.clone());
            return;
        }
        for part in (1..=max.min(rem)).rev() {
            acc.push(part);
            rec(rem - part, part, acc, out);
            acc.pop();
        }
    }
    let mut raw = Vec::new();
    rec(n, n, &mut Vec::new(), &mut raw);
    raw.into_iter()
        .map(|sizes| ConfigurationCounts::from_sizes(n, &sizes))
        .collect()
}

/// Calls `f` with the canonical label vector of every partition of `n` items,
/// in lexicographic order of restricted growth strings.
pub fn for_each_labels(n: usize, mut f: impl FnMut(&[usize])) -> Result<()> {
    guard(n)?;
    let mut labels = vec![0usize; n];
    // max label among prefix, per position
    let mut maxes = vec![0usize; n];
    loop {
        f(&labels);
        // find rightmost position that can be incremented
        let mut i = n - 1;
        loop {
            if i == 0 {
                return Ok(());
            }
            if labels[i] <= maxes[i - 1] {
                labels[i] += 1;
                maxes[i] = maxes[i - 1].max(labels[i]);
                for t in i + 1..n {
                    labels[t] = 0;
                    maxes[t] = maxes[i];
                }
                break;
            }
            i -= 1;
        }
    }
}

fn guard(n: usize) -> Result<()> {
    if n == 0 {
        return invalid("cannot enumerate partitions of zero items");
    }
    if n > MAX_ENUMERATION_N {
        return Err(Error::TooLarge(format!(
            "n = {n} exceeds the enumeration limit {MAX_ENUMERATION_N}"
        )));
    }
    Ok(())
}

/// All `Bell(n)` partitions of `n` items.
pub fn enumerate_partitions(n: usize) -> Result<Vec<Partition>> {
    let mut out = Vec::new();
    for_each_labels(n, |l| {
        out.push(Partition::from_labels(l).expect("nonempty labels"));
    })?;
    Ok(out)
}

/// Every colouring of every partition of `n` items with colours `0..k`.
pub fn enumerate_coloured_partitions(n: usize, k: usize) -> Result<Vec<ColouredPartition>> {
    if k == 0 {
        return invalid("need at least one colour");
    }
    let mut out = Vec::new();
    for p in enumerate_partitions(n)? {
        let d = p.degree();
        let mut colouring = vec![0usize; d];
        loop {
            out.push(ColouredPartition::colour(&p, &colouring)?);
            let mut pos = 0;
            loop {
                if pos == d {
                    break;
                }
                colouring[pos] += 1;
                if colouring[pos] < k {
                    break;
                }
                colouring[pos] = 0;
                pos += 1;
            }
            if pos == d {
                break;
            }
        }
    }
    Ok(out)
}
