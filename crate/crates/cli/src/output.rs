//! Artifact files: CSV tables and the JSON run manifest.
//!
//! Cluster ids in every file are 1-based and follow the canonical order
//! (clusters sorted by their first item). Floats are written in shortest
//! round-trip form so reloading a file reproduces the values exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use crate::config::RunConfig;
use crate::dataset::DatasetTable;
use crate::pipeline::{partition_from_trace_labels, Estimate, TraceRow};

pub const TRACE: &str = "trace.csv";
pub const SIMILARITY: &str = "similarity.csv";
pub const PARTITION: &str = "partition.csv";
pub const SUMMARIES: &str = "cluster_summaries.csv";
pub const CROSSTAB: &str = "crosstab.csv";
pub const MANIFEST: &str = "manifest.json";
pub const ARTIFACTS: [&str; 6] = [TRACE, SIMILARITY, PARTITION, SUMMARIES, CROSSTAB, MANIFEST];

const TRACE_FIXED: [&str; 4] = ["chain", "sweep", "log_posterior", "cluster_colours"];

/// Creates `dir` and confirms a file can be written there.
pub fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let probe = dir.join(".dpclust-write-check");
    File::create(&probe)
        .and_then(|mut f| f.write_all(b"ok"))
        .with_context(|| format!("output directory {} is not writable", dir.display()))?;
    std::fs::remove_file(&probe).ok();
    Ok(())
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

/// Header `chain, sweep, log_posterior, cluster_colours, <item ids>`; one
/// row per retained sweep with 1-based canonical labels. `cluster_colours`
/// lists the colour of clusters 1, 2, ... separated by `;`.
pub fn write_trace(path: &Path, ids: &[String], rows: &[TraceRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(TRACE_FIXED.iter().copied().chain(ids.iter().map(String::as_str)))?;
    for r in rows {
        let colours: Vec<String> = r
            .partition
            .clusters()
            .iter()
            .map(|c| r.item_colours[c[0]].to_string())
            .collect();
        let mut rec = vec![
            r.chain.to_string(),
            r.sweep.to_string(),
            r.log_posterior.to_string(),
            colours.join(";"),
        ];
        rec.extend(r.partition.labels().iter().map(|l| (l + 1).to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path, ids: &[String]) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    let expected: Vec<&str> = TRACE_FIXED.iter().copied().chain(ids.iter().map(String::as_str)).collect();
    if header != expected {
        bail!("{}: header does not match the dataset's item ids", path.display());
    }
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let line = k + 2;
        let rec = rec.with_context(|| format!("{}: line {line}", path.display()))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let parse_err = || format!("{}: line {line}: malformed field", path.display());
        let chain: usize = field(0).parse().with_context(parse_err)?;
        let sweep: usize = field(1).parse().with_context(parse_err)?;
        let log_posterior: f64 = field(2).parse().with_context(parse_err)?;
        let cluster_colours: Vec<usize> = field(3)
            .split(';')
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .with_context(parse_err)?;
        let labels: Vec<usize> = (4..rec.len())
            .map(|i| field(i).parse())
            .collect::<std::result::Result<_, _>>()
            .with_context(parse_err)?;
        let partition = partition_from_trace_labels(&labels)
            .with_context(|| format!("{}: line {line}", path.display()))?;
        if cluster_colours.len() != partition.degree() {
            bail!("{}: line {line}: {} colours for {} clusters", path.display(), cluster_colours.len(), partition.degree());
        }
        let item_colours = labels.iter().map(|l| cluster_colours[l - 1]).collect();
        rows.push(TraceRow {
            chain,
            sweep,
            log_posterior,
            partition,
            item_colours,
        });
    }
    Ok(rows)
}

/// Similarity, partition, summaries and cross-tab files.
pub fn write_estimate(out: &Path, table: &DatasetTable, est: &Estimate) -> Result<()> {
    let ids = &table.ids;
    let mut w = writer(&out.join(SIMILARITY))?;
    w.write_record(std::iter::once("id").chain(ids.iter().map(String::as_str)))?;
    for (i, id) in ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(est.similarity.row(i).iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;

    let labels = est.partition.labels();
    let mut w = writer(&out.join(PARTITION))?;
    w.write_record(["id", "cluster", "colour"])?;
    for (id, &l) in ids.iter().zip(&labels) {
        w.write_record([id.clone(), (l + 1).to_string(), est.colours[l].to_string()])?;
    }
    w.flush()?;

    let mut w = writer(&out.join(SUMMARIES))?;
    w.write_record(["cluster", "colour", "size", "sample", "mean", "lower", "upper"])?;
    for s in &est.summaries {
        for (k, column) in table.columns.iter().enumerate() {
            w.write_record([
                (s.cluster + 1).to_string(),
                est.colours[s.cluster].to_string(),
                s.size.to_string(),
                column.clone(),
                s.mean[k].to_string(),
                s.lower[k].to_string(),
                s.upper[k].to_string(),
            ])?;
        }
    }
    w.flush()?;

    let mut w = writer(&out.join(CROSSTAB))?;
    w.write_record(std::iter::once("cluster").chain(est.crosstab.categories.iter().map(String::as_str)))?;
    for (j, row) in est.crosstab.counts.iter().enumerate() {
        let mut rec = vec![(j + 1).to_string()];
        rec.extend(row.iter().map(usize::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    engine_version: &'static str,
    seed: u64,
    chains: usize,
    items: usize,
    samples: usize,
    artifacts: [&'static str; 6],
    warnings: &'a [String],
    config: &'a RunConfig,
    /// Per chain, the log posterior at each retained sweep.
    log_posterior_trace: Vec<Vec<f64>>,
}

/// The manifest is a valid `--config`: its `config` entry is the fully
/// resolved run configuration.
pub fn write_manifest(
    path: &Path,
    cfg: &RunConfig,
    table: &DatasetTable,
    warnings: &[String],
    rows: &[TraceRow],
) -> Result<()> {
    let mut lp = vec![Vec::new(); cfg.chains];
    for r in rows {
        lp[r.chain].push(r.log_posterior);
    }
    let m = Manifest {
        tool: "dpclust",
        version: env!("CARGO_PKG_VERSION"),
        engine_version: dpclust::VERSION,
        seed: cfg.plan.seed,
        chains: cfg.chains,
        items: table.n(),
        samples: table.samples(),
        artifacts: ARTIFACTS,
        warnings,
        config: cfg,
        log_posterior_trace: lp,
    };
    let mut f = BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?);
    serde_json::to_writer_pretty(&mut f, &m)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}
