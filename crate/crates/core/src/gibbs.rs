//! Pólya-urn Gibbs sampling over (coloured) partitions with a conjugate
//! likelihood per colour.
//!
//! A sweep withdraws each item in turn (`0..n`) and reallocates it with
//! probability proportional to the prior urn weight times the predictive
//! density of the item given the receiving cluster. Optionally a block move
//! follows: a subset of one cluster is reallocated as a unit, with a
//! Metropolis–Hastings correction for the state-dependent subset choice.

use std::collections::{BTreeMap, HashMap};

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conjugate::MarginalLikelihood;
use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::generators::sample_categorical;
use crate::partition::{enumerate_coloured_partitions, ClusterSizes, ColouredPartition, ReallocTarget};
use crate::prior::{is_log_zero, log_eppf, log_eppf_sizes, PartitionPriorModel, PriorFamily, LOG_ZERO};
use crate::rng::RngStream;

/// Largest block a subset move will pick.
pub const MAX_SUBSET_SIZE: usize = 8;

/// Run length, burn-in, thinning and move mix for a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub sweeps: usize,
    pub burn_in: usize,
    #[serde(default = "one")]
    pub thin: usize,
    /// Probability of one subset move after each single-item pass.
    #[serde(default)]
    pub subset_move_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl SweepPlan {
    pub fn new(sweeps: usize, burn_in: usize, seed: u64) -> Self {
        SweepPlan {
            sweeps,
            burn_in,
            thin: 1,
            subset_move_rate: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.sweeps {
            return invalid(format!(
                "burn-in ({}) must be shorter than the run ({})",
                self.burn_in, self.sweeps
            ));
        }
        if self.thin == 0 {
            return invalid("thin must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.subset_move_rate) {
            return invalid("subset move rate must lie in [0, 1]");
        }
        Ok(())
    }

    /// Whether sweep `t` (1-based) is kept.
    pub fn keeps(&self, t: usize) -> bool {
        t > self.burn_in && (t - self.burn_in).is_multiple_of(self.thin)
    }
}

/// One retained sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub sweep: usize,
    pub partition: ColouredPartition,
    pub degree: usize,
    pub colour_degrees: Vec<usize>,
    /// Log prior plus log marginal likelihood of every cluster.
    pub log_posterior: f64,
}

#[derive(Debug, Clone)]
struct Cluster<S> {
    colour: usize,
    members: Vec<usize>,
    stats: S,
    log_marginal: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Placement {
    Join(u64),
    Open(usize),
}

/// Current coloured partition with cached per-cluster statistics and log
/// marginals. Cluster ids come from a monotone counter and are only
/// canonicalized when a snapshot is taken.
#[derive(Debug)]
pub struct ChainState<'a, L: MarginalLikelihood> {
    model: PartitionPriorModel,
    likelihoods: &'a [L],
    data: &'a [f64],
    samples: usize,
    clusters: BTreeMap<u64, Cluster<L::Stats>>,
    assignment: Vec<Option<u64>>,
    next_id: u64,
    rng: RngStream,
}

impl<L: MarginalLikelihood> Clone for ChainState<'_, L> {
    fn clone(&self) -> Self {
        ChainState {
            model: self.model.clone(),
            likelihoods: self.likelihoods,
            data: self.data,
            samples: self.samples,
            clusters: self.clusters.clone(),
            assignment: self.assignment.clone(),
            next_id: self.next_id,
            rng: self.rng.clone(),
        }
    }
}

/// Colour that singleton starting states use.
fn start_colour(model: &PartitionPriorModel) -> usize {
    match model.family() {
        PriorFamily::BackgroundCdp { .. } => 1,
        _ => 0,
    }
}

impl<'a, L: MarginalLikelihood> ChainState<'a, L> {
    /// Chain started from all singletons (regular colour for the
    /// background model, colour 0 otherwise).
    pub fn new(
        model: &PartitionPriorModel,
        likelihoods: &'a [L],
        data: &'a [f64],
        samples: usize,
        rng: RngStream,
    ) -> Result<Self> {
        let n = check_data(model, likelihoods, data, samples)?;
        let k = start_colour(model);
        let start = ColouredPartition::new(n, {
            let mut c = vec![Vec::new(); k + 1];
            c[k] = (0..n).map(|i| vec![i]).collect();
            c
        })?;
        Self::from_partition(model, likelihoods, data, samples, &start, rng)
    }

    pub fn from_partition(
        model: &PartitionPriorModel,
        likelihoods: &'a [L],
        data: &'a [f64],
        samples: usize,
        start: &ColouredPartition,
        rng: RngStream,
    ) -> Result<Self> {
        let n = check_data(model, likelihoods, data, samples)?;
        if start.n() != n {
            return invalid("starting partition has the wrong item count");
        }
        if start.num_colours() > model.num_colours() {
            return invalid("starting partition uses more colours than the model");
        }
        let mut state = ChainState {
            model: model.clone(),
            likelihoods,
            data,
            samples,
            clusters: BTreeMap::new(),
            assignment: vec![None; n],
            next_id: 0,
            rng,
        };
        for (k, cs) in start.colours().iter().enumerate() {
            for c in cs {
                state.insert(c, Placement::Open(k));
            }
        }
        Ok(state)
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn model(&self) -> &PartitionPriorModel {
        &self.model
    }

    fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.samples..(i + 1) * self.samples]
    }

    fn insert(&mut self, block: &[usize], placement: Placement) -> u64 {
        let id = match placement {
            Placement::Join(id) => id,
            Placement::Open(colour) => {
                let id = self.next_id;
                self.next_id += 1;
                let lik = &self.likelihoods[colour];
                self.clusters.insert(
                    id,
                    Cluster {
                        colour,
                        members: Vec::new(),
                        stats: lik.empty_stats(),
                        log_marginal: 0.0,
                    },
                );
                id
            }
        };
        let rows: Vec<&[f64]> = block.iter().map(|&i| self.row(i)).collect();
        let c = self.clusters.get_mut(&id).expect("placement refers to a live cluster");
        let lik = &self.likelihoods[c.colour];
        for (&i, y) in block.iter().zip(rows) {
            lik.add(&mut c.stats, y);
            c.members.push(i);
            self.assignment[i] = Some(id);
        }
        c.log_marginal = lik.log_marginal(&c.stats);
        id
    }

    /// Removes `block` (all from cluster `id`), deleting the cluster if it empties.
    fn withdraw(&mut self, id: u64, block: &[usize]) {
        let rows: Vec<&[f64]> = block.iter().map(|&i| self.row(i)).collect();
        let c = self.clusters.get_mut(&id).expect("live cluster");
        let lik = &self.likelihoods[c.colour];
        for (&i, y) in block.iter().zip(rows) {
            lik.remove(&mut c.stats, y);
            let pos = c.members.iter().position(|&m| m == i).expect("member");
            c.members.remove(pos);
            self.assignment[i] = None;
        }
        if c.members.is_empty() {
            self.clusters.remove(&id);
        } else {
            c.log_marginal = lik.log_marginal(&c.stats);
        }
    }

    fn sizes_and_ids(&self) -> (ClusterSizes, Vec<Vec<u64>>) {
        let k = self.model.num_colours();
        let mut sizes = vec![Vec::new(); k];
        let mut ids = vec![Vec::new(); k];
        for (&id, c) in &self.clusters {
            sizes[c.colour].push(c.members.len());
            ids[c.colour].push(id);
        }
        (ClusterSizes::new(sizes), ids)
    }

    /// Unnormalized log-weights of every placement for a withdrawn block.
    fn placements(&self, block: &[usize]) -> Vec<(Placement, f64)> {
        let (sizes, ids) = self.sizes_and_ids();
        let s = block.len();
        let mut out = Vec::with_capacity(sizes.degree() + sizes.num_colours());
        for colour in 0..self.model.num_colours() {
            let lik = &self.likelihoods[colour];
            for (j, &id) in ids[colour].iter().enumerate() {
                let prior = if s == 1 {
                    let w = self.model.join_weight(&sizes, colour, sizes.colour(colour)[j]);
                    if w > 0.0 {
                        w.ln()
                    } else {
                        LOG_ZERO
                    }
                } else {
                    self.model
                        .block_log_weight(&sizes, ReallocTarget::Existing { colour, cluster: j }, s)
                };
                if is_log_zero(prior) {
                    continue;
                }
                let c = &self.clusters[&id];
                let mut st = c.stats.clone();
                for &i in block {
                    lik.add(&mut st, self.row(i));
                }
                out.push((Placement::Join(id), prior + lik.log_marginal(&st) - c.log_marginal));
            }
            let prior = if s == 1 {
                let w = self.model.new_weight(&sizes, colour);
                if w > 0.0 {
                    w.ln()
                } else {
                    LOG_ZERO
                }
            } else {
                self.model.block_log_weight(&sizes, ReallocTarget::New { colour }, s)
            };
            if is_log_zero(prior) {
                continue;
            }
            let mut st = lik.empty_stats();
            for &i in block {
                lik.add(&mut st, self.row(i));
            }
            out.push((Placement::Open(colour), prior + lik.log_marginal(&st)));
        }
        out
    }

    fn normalized(options: &[(Placement, f64)]) -> Result<Vec<f64>> {
        let max = options
            .iter()
            .map(|o| o.1)
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Invariant("every reallocation weight is zero".into()));
        }
        let w: Vec<f64> = options.iter().map(|o| (o.1 - max).exp()).collect();
        let total: f64 = w.iter().sum();
        Ok(w.into_iter().map(|x| x / total).collect())
    }

    fn cluster_of(&self, i: usize) -> Result<u64> {
        self.assignment
            .get(i)
            .copied()
            .flatten()
            .ok_or_else(|| Error::InvalidInput(format!("item {i} is not allocated")))
    }

    fn block_cluster(&self, block: &[usize]) -> Result<u64> {
        let first = *block.first().ok_or_else(|| Error::InvalidInput("empty subset".into()))?;
        let id = self.cluster_of(first)?;
        for &i in block {
            if self.cluster_of(i)? != id {
                return invalid("subset straddles clusters");
            }
        }
        let mut sorted = block.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != block.len() {
            return invalid("subset repeats an item");
        }
        Ok(id)
    }

    /// Single-item Gibbs update of item `i`.
    pub fn reallocate_item(&mut self, i: usize) -> Result<()> {
        self.reallocate_subset(&[i])
    }

    /// Moves `block` (a subset of one current cluster) as a unit to a new or
    /// existing cluster, drawn from its full conditional.
    pub fn reallocate_subset(&mut self, block: &[usize]) -> Result<()> {
        let id = self.block_cluster(block)?;
        self.withdraw(id, block);
        let options = self.placements(block);
        let probs = Self::normalized(&options)?;
        let pick = sample_categorical(&probs, &mut self.rng);
        self.insert(block, options[pick].0);
        Ok(())
    }

    fn subset_count(size: usize) -> f64 {
        // nonempty subsets of at most MAX_SUBSET_SIZE elements
        let mut total = 0.0;
        let mut binom = 1.0;
        for s in 1..=size.min(MAX_SUBSET_SIZE) {
            binom = binom * (size - s + 1) as f64 / s as f64;
            total += binom;
        }
        total
    }

    /// Random block move: pick a cluster uniformly, then a uniform nonempty
    /// subset of it of size at most [`MAX_SUBSET_SIZE`], reallocate it from
    /// its full conditional, and accept with the ratio of reverse to forward
    /// subset-selection probabilities. Returns whether the move was accepted.
    pub fn subset_move(&mut self) -> Result<bool> {
        let d = self.clusters.len();
        let pick = self.rng.random_range(0..d);
        let (&id, c) = self.clusters.iter().nth(pick).expect("d > 0");
        let size = c.members.len();
        let colour = c.colour;
        let count = Self::subset_count(size);
        // subset size s with probability C(size, s) / count
        let mut u = self.rng.random::<f64>() * count;
        let mut s = 1;
        let mut binom = size as f64;
        while s < size.min(MAX_SUBSET_SIZE) && u >= binom {
            u -= binom;
            s += 1;
            binom = binom * (size - s + 1) as f64 / s as f64;
        }
        let members = c.members.clone();
        let block: Vec<usize> = sample_indices(&mut self.rng, size, s)
            .into_iter()
            .map(|j| members[j])
            .collect();
        let whole = s == size;
        self.withdraw(id, &block);
        let options = self.placements(&block);
        let probs = Self::normalized(&options)?;
        let choice = options[sample_categorical(&probs, &mut self.rng)].0;
        let d_after = self.clusters.len();
        let (d_new, size_new) = match choice {
            Placement::Join(t) => (d_after, self.clusters[&t].members.len() + s),
            Placement::Open(_) => (d_after + 1, s),
        };
        let log_accept = (d as f64).ln() + count.ln()
            - (d_new as f64).ln()
            - Self::subset_count(size_new).ln();
        let accept = log_accept >= 0.0 || self.rng.random::<f64>().ln() < log_accept;
        if accept {
            self.insert(&block, choice);
        } else if whole {
            self.insert(&block, Placement::Open(colour));
        } else {
            self.insert(&block, Placement::Join(id));
        }
        Ok(accept)
    }

    /// One systematic-scan pass over all items, then a subset move with
    /// probability `subset_move_rate`.
    pub fn sweep(&mut self, subset_move_rate: f64) -> Result<()> {
        for i in 0..self.n() {
            self.reallocate_item(i)?;
        }
        if subset_move_rate > 0.0 && self.rng.random::<f64>() < subset_move_rate {
            self.subset_move()?;
        }
        Ok(())
    }

    pub fn partition(&self) -> ColouredPartition {
        let mut colours = vec![Vec::new(); self.model.num_colours()];
        for c in self.clusters.values() {
            colours[c.colour].push(c.members.clone());
        }
        ColouredPartition::new(self.n(), colours).expect("chain state is a valid partition")
    }

    /// Log prior plus cached log marginals.
    pub fn log_posterior(&self) -> f64 {
        let (sizes, _) = self.sizes_and_ids();
        log_eppf_sizes(&self.model, &sizes) + self.clusters.values().map(|c| c.log_marginal).sum::<f64>()
    }

    /// Largest gap between cached log marginals and values recomputed from
    /// scratch.
    pub fn cache_deviation(&self) -> f64 {
        self.clusters
            .values()
            .map(|c| {
                let lik = &self.likelihoods[c.colour];
                let mut st = lik.empty_stats();
                for &i in &c.members {
                    lik.add(&mut st, self.row(i));
                }
                (lik.log_marginal(&st) - c.log_marginal).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn record(&self, sweep: usize) -> TraceRecord {
        let partition = self.partition();
        TraceRecord {
            sweep,
            degree: partition.degree(),
            colour_degrees: (0..self.model.num_colours())
                .map(|k| partition.colour_clusters(k).len())
                .collect(),
            partition,
            log_posterior: self.log_posterior(),
        }
    }

    /// Exact distribution of the state after the single-item update of `i`.
    pub fn item_transition(&self, i: usize) -> Result<Vec<(ColouredPartition, f64)>> {
        self.block_transition(&[i])
    }

    /// Exact distribution after a block update of `block`.
    pub fn block_transition(&self, block: &[usize]) -> Result<Vec<(ColouredPartition, f64)>> {
        let id = self.block_cluster(block)?;
        let mut base = self.clone();
        base.withdraw(id, block);
        let options = base.placements(block);
        let probs = Self::normalized(&options)?;
        Ok(options
            .iter()
            .zip(probs)
            .map(|((p, _), pr)| {
                let mut next = base.clone();
                next.insert(block, *p);
                (next.partition(), pr)
            })
            .collect())
    }

    /// Exact distribution after one random subset move (selection,
    /// block draw and acceptance step).
    pub fn subset_move_transition(&self) -> Result<Vec<(ColouredPartition, f64)>> {
        let d = self.clusters.len();
        let here = self.partition();
        let mut out: Vec<(ColouredPartition, f64)> = Vec::new();
        for c in self.clusters.values() {
            let size = c.members.len();
            let count = Self::subset_count(size);
            let select = 1.0 / (d as f64 * count);
            for mask in 1u32..(1u32 << size) {
                let s = mask.count_ones() as usize;
                if s > MAX_SUBSET_SIZE {
                    continue;
                }
                let block: Vec<usize> = (0..size)
                    .filter(|b| mask & (1 << b) != 0)
                    .map(|b| c.members[b])
                    .collect();
                for (next, pr) in self.block_transition(&block)? {
                    let d_new = next.degree();
                    let size_new = next
                        .colours()
                        .iter()
                        .flatten()
                        .find(|cl| cl.contains(&block[0]))
                        .map_or(0, Vec::len);
                    let accept = ((d as f64 * count) / (d_new as f64 * Self::subset_count(size_new))).min(1.0);
                    out.push((next, select * pr * accept));
                    out.push((here.clone(), select * pr * (1.0 - accept)));
                }
            }
        }
        Ok(merge_mass(out))
    }
}

fn merge_mass(items: Vec<(ColouredPartition, f64)>) -> Vec<(ColouredPartition, f64)> {
    let mut order = Vec::new();
    let mut acc: HashMap<ColouredPartition, f64> = HashMap::new();
    for (p, m) in items {
        if !acc.contains_key(&p) {
            order.push(p.clone());
        }
        *acc.entry(p).or_insert(0.0) += m;
    }
    order
        .into_iter()
        .map(|p| {
            let m = acc[&p];
            (p, m)
        })
        .collect()
}

fn check_data<L: MarginalLikelihood>(
    model: &PartitionPriorModel,
    likelihoods: &[L],
    data: &[f64],
    samples: usize,
) -> Result<usize> {
    if likelihoods.len() != model.num_colours() {
        return invalid(format!(
            "model has {} colours but {} likelihoods were given",
            model.num_colours(),
            likelihoods.len()
        ));
    }
    if samples == 0 || data.is_empty() || !data.len().is_multiple_of(samples) {
        return invalid(format!(
            "data length {} is not a positive multiple of {samples} samples",
            data.len()
        ));
    }
    if let Some(bad) = likelihoods.iter().filter_map(|l| l.samples()).find(|&s| s != samples) {
        return invalid(format!("likelihood expects {bad} samples per item, data has {samples}"));
    }
    Ok(data.len() / samples)
}

/// Runs one chain from all singletons and returns the retained records.
pub fn run_chain<L: MarginalLikelihood>(
    data: &[f64],
    samples: usize,
    model: &PartitionPriorModel,
    likelihoods: &[L],
    plan: &SweepPlan,
) -> Result<Vec<TraceRecord>> {
    run_chain_with(data, samples, model, likelihoods, plan, RngStream::new(plan.seed))
}

fn run_chain_with<L: MarginalLikelihood>(
    data: &[f64],
    samples: usize,
    model: &PartitionPriorModel,
    likelihoods: &[L],
    plan: &SweepPlan,
    rng: RngStream,
) -> Result<Vec<TraceRecord>> {
    plan.validate()?;
    let mut state = ChainState::new(model, likelihoods, data, samples, rng)?;
    let mut trace = Vec::with_capacity((plan.sweeps - plan.burn_in) / plan.thin);
    for t in 1..=plan.sweeps {
        state.sweep(plan.subset_move_rate)?;
        if cfg!(debug_assertions) && t % 100 == 0 {
            let dev = state.cache_deviation();
            if dev > 1e-8 {
                return Err(Error::Invariant(format!(
                    "cached log marginals drifted by {dev} at sweep {t}"
                )));
            }
        }
        if plan.keeps(t) {
            trace.push(state.record(t));
        }
    }
    Ok(trace)
}

/// Independent chains on substreams `0..chains` of the plan seed.
/// The result is independent of the execution mode.
pub fn run_chains<L: MarginalLikelihood>(
    data: &[f64],
    samples: usize,
    model: &PartitionPriorModel,
    likelihoods: &[L],
    plan: &SweepPlan,
    chains: usize,
    exec: Execution,
) -> Result<Vec<Vec<TraceRecord>>> {
    if chains == 0 {
        return invalid("need at least one chain");
    }
    let root = RngStream::new(plan.seed);
    exec.map(chains, |c| {
        let rng = if chains == 1 { root.clone() } else { root.substream(c as u64) };
        run_chain_with(data, samples, model, likelihoods, plan, rng)
    })
    .into_iter()
    .collect()
}

/// Exact posterior over all (coloured) partitions of a small dataset:
/// prior EPPF times the product of cluster marginals, normalized.
/// Impossible partitions are omitted.
pub fn exact_posterior<L: MarginalLikelihood>(
    model: &PartitionPriorModel,
    likelihoods: &[L],
    data: &[f64],
    samples: usize,
) -> Result<Vec<(ColouredPartition, f64)>> {
    let n = check_data(model, likelihoods, data, samples)?;
    let row = |i: usize| &data[i * samples..(i + 1) * samples];
    let mut scored = Vec::new();
    for cp in enumerate_coloured_partitions(n, model.num_colours())? {
        let prior = log_eppf(model, &cp)?;
        if is_log_zero(prior) {
            continue;
        }
        let mut ll = 0.0;
        for (k, cs) in cp.colours().iter().enumerate() {
            let lik = &likelihoods[k];
            for c in cs {
                let mut st = lik.empty_stats();
                for &i in c {
                    lik.add(&mut st, row(i));
                }
                ll += lik.log_marginal(&st);
            }
        }
        scored.push((cp, prior + ll));
    }
    let max = scored.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = scored.iter().map(|s| (s.1 - max).exp()).sum();
    Ok(scored
        .into_iter()
        .map(|(cp, l)| (cp, (l - max).exp() / total))
        .collect())
}

/// Which kernel a transition-matrix check applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// One systematic scan of single-item updates.
    Sweep,
    /// One random subset move.
    SubsetMove,
}

/// Applies one step of `kind` to the distribution `dist` (states not
/// listed have mass zero) and returns the image, keyed like the input.
pub fn push_forward<L: MarginalLikelihood>(
    model: &PartitionPriorModel,
    likelihoods: &[L],
    data: &[f64],
    samples: usize,
    dist: &[(ColouredPartition, f64)],
    kind: KernelKind,
    exec: Execution,
) -> Result<HashMap<ColouredPartition, f64>> {
    let rows: Vec<Result<Vec<(ColouredPartition, f64)>>> = exec.map(dist.len(), |s| {
        let (start, mass) = &dist[s];
        let state = ChainState::from_partition(model, likelihoods, data, samples, start, RngStream::new(0))?;
        let row = match kind {
            KernelKind::Sweep => {
                let mut cur = vec![(start.clone(), 1.0)];
                for i in 0..state.n() {
                    let mut next = Vec::new();
                    for (p, m) in &cur {
                        let st = ChainState::from_partition(model, likelihoods, data, samples, p, RngStream::new(0))?;
                        for (q, pr) in st.item_transition(i)? {
                            next.push((q, m * pr));
                        }
                    }
                    cur = merge_mass(next);
                }
                cur
            }
            KernelKind::SubsetMove => state.subset_move_transition()?,
        };
        Ok(row.into_iter().map(|(p, m)| (p, m * mass)).collect())
    });
    let mut out: HashMap<ColouredPartition, f64> = HashMap::new();
    for r in rows {
        for (p, m) in r? {
            *out.entry(p).or_insert(0.0) += m;
        }
    }
    Ok(out)
}
