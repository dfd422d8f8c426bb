//! Sampling and posterior summaries for a configured run.

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{bail, Context, Result};
use dpclust::estimation::{
    accumulate_similarity, cluster_summaries, optimal_partition, ClusterSummary, SearchStrategy, SimilarityMatrix,
};
use dpclust::gibbs::run_chains;
use dpclust::partition::Partition;

use crate::config::RunConfig;
use crate::dataset::{load_dataset, DatasetTable};
use crate::design::build_design;
use crate::output;

/// Largest n for which the exact search is allowed.
const EXACT_LIMIT: usize = 12;

/// One retained sample as stored in the trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub chain: usize,
    pub sweep: usize,
    pub log_posterior: f64,
    pub partition: Partition,
    /// Colour of each item's cluster.
    pub item_colours: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossTab {
    pub categories: Vec<String>,
    /// `counts[cluster][category]`.
    pub counts: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct Estimate {
    pub similarity: SimilarityMatrix,
    pub partition: Partition,
    /// Colour of each cluster of `partition`.
    pub colours: Vec<usize>,
    pub summaries: Vec<ClusterSummary>,
    pub crosstab: CrossTab,
}

pub fn load_inputs(cfg: &RunConfig) -> Result<(DatasetTable, Vec<String>)> {
    let annotations: Vec<String> = cfg.annotation.iter().cloned().collect();
    load_dataset(&cfg.data, &annotations)
}

fn check_strategy(cfg: &RunConfig, n: usize) -> Result<()> {
    if cfg.strategy == SearchStrategy::Exact && n > EXACT_LIMIT {
        bail!("exact partition search is limited to {EXACT_LIMIT} items, the data have {n}");
    }
    Ok(())
}

/// Validates, samples, estimates and writes all artifacts to `out`.
/// Returns the load warnings.
pub fn run_pipeline(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    cfg.validate()?;
    let (table, warnings) = load_inputs(cfg)?;
    check_strategy(cfg, table.n())?;
    let design = build_design(table.samples(), cfg.design.z.as_deref(), cfg.design.x.as_deref())?;
    let built = cfg.build(&design, table.n())?;
    output::prepare_dir(out)?;

    let traces = run_chains(
        &table.values,
        table.samples(),
        &built.prior_model,
        &built.likelihoods,
        &cfg.plan,
        cfg.chains,
        cfg.execution,
    )?;
    let rows: Vec<TraceRow> = traces
        .iter()
        .enumerate()
        .flat_map(|(c, trace)| {
            trace.iter().map(move |r| TraceRow {
                chain: c,
                sweep: r.sweep,
                log_posterior: r.log_posterior,
                partition: r.partition.uncoloured(),
                item_colours: r.partition.item_colours(),
            })
        })
        .collect();
    let est = estimate(cfg, &table, &rows)?;

    output::write_trace(&out.join(output::TRACE), &table.ids, &rows)?;
    output::write_estimate(out, &table, &est)?;
    output::write_manifest(&out.join(output::MANIFEST), cfg, &table, &warnings, &rows)?;
    Ok(warnings)
}

/// Recomputes the estimation artifacts of `cfg` from a saved trace.
pub fn summarize(cfg: &RunConfig, trace: &Path, out: &Path) -> Result<()> {
    cfg.loss.validate()?;
    let (table, _) = load_inputs(cfg)?;
    check_strategy(cfg, table.n())?;
    output::prepare_dir(out)?;
    let rows = output::read_trace(trace, &table.ids)?;
    let est = estimate(cfg, &table, &rows)?;
    output::write_estimate(out, &table, &est)
}

/// Similarity, optimal partition, cluster colours by majority vote over
/// the trace, summaries and the annotation cross-tabulation.
pub fn estimate(cfg: &RunConfig, table: &DatasetTable, rows: &[TraceRow]) -> Result<Estimate> {
    if rows.is_empty() {
        bail!("the trace has no retained samples");
    }
    let partitions: Vec<Partition> = rows.iter().map(|r| r.partition.clone()).collect();
    let similarity = accumulate_similarity(&partitions, cfg.execution)?;
    let partition = optimal_partition(&similarity, &cfg.loss, cfg.strategy)?;

    let width = rows.iter().flat_map(|r| r.item_colours.iter()).max().map_or(1, |k| k + 1);
    let mut votes = vec![vec![0u64; width]; table.n()];
    for r in rows {
        for (i, &k) in r.item_colours.iter().enumerate() {
            votes[i][k] += 1;
        }
    }
    let colours = partition
        .clusters()
        .iter()
        .map(|members| {
            let mut tally = vec![0u64; width];
            for &i in members {
                for (t, v) in tally.iter_mut().zip(&votes[i]) {
                    *t += v;
                }
            }
            // ties go to the lower colour
            (0..width).rev().max_by_key(|&k| tally[k]).unwrap_or(0)
        })
        .collect();

    let summaries = cluster_summaries(&partition, &table.values, table.samples())?;
    let crosstab = crosstab(&partition, cfg.annotation.as_deref().and_then(|a| table.annotation(a)));
    Ok(Estimate {
        similarity,
        partition,
        colours,
        summaries,
        crosstab,
    })
}

/// Cluster × category counts; without an annotation one `all` column of
/// cluster sizes.
pub fn crosstab(p: &Partition, annotation: Option<&[String]>) -> CrossTab {
    match annotation {
        None => CrossTab {
            categories: vec!["all".into()],
            counts: p.sizes().into_iter().map(|s| vec![s]).collect(),
        },
        Some(values) => {
            let categories: Vec<String> = values.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
            let counts = p
                .clusters()
                .iter()
                .map(|members| {
                    let mut row = vec![0; categories.len()];
                    for &i in members {
                        let c = categories.binary_search(&values[i]).expect("category");
                        row[c] += 1;
                    }
                    row
                })
                .collect();
            CrossTab { categories, counts }
        }
    }
}

/// Parses and validates a partition from 1-based trace labels.
pub fn partition_from_trace_labels(labels: &[usize]) -> Result<Partition> {
    if labels.contains(&0) {
        bail!("cluster labels are 1-based");
    }
    let p = Partition::from_labels(labels).context("bad allocation vector")?;
    let canonical: Vec<usize> = p.labels().iter().map(|l| l + 1).collect();
    if canonical != labels {
        bail!("allocation vector is not in canonical first-appearance order");
    }
    Ok(p)
}
