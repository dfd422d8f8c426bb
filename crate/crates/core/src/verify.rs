//! Self-check suite: small-n oracles for the priors, samplers, conjugate
//! marginals, Gibbs kernels and loss optimizer, runnable as one command.

use std::fmt;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::conjugate::{
    log_marginal_stacked, ClusterStats, DesignBlock, NigModel, NormalGammaSpec,
};
use crate::error::{Error, Result};
use crate::estimation::{expected_pairwise_loss, optimal_partition, LossSpec, SearchStrategy, SimilarityMatrix};
use crate::exec::Execution;
use crate::generators::{
    sample_dp_measure, sample_dp_partition_via_sticks, sample_finite_mixture_alloc, sample_polya_sequence,
    StickTruncation, UniformBase,
};
use crate::gibbs::{exact_posterior, push_forward, run_chains, KernelKind, SweepPlan};
use crate::partition::{
    canonicalize, enumerate_configurations, enumerate_coloured_partitions, enumerate_partitions, for_each_labels,
    ColouredPartition, Partition,
};
use crate::prior::{log_eppf, log_eppf_dp, log_ewens_config, ColourParams, PartitionPriorModel, PriorFamily};
use crate::rng::RngStream;
use crate::stats::FrequencyTable;

/// Knobs for the suite. Defaults reproduce the full-size checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Replicates per Monte Carlo construction and moment check.
    pub mc_samples: usize,
    /// Total Gibbs sweeps for the convergence check.
    pub gibbs_sweeps: usize,
    /// Replaces every concentration parameter the checks would use.
    pub theta: Option<f64>,
    /// Added to each log-EPPF in the normalization check. Nonzero values
    /// exist to confirm the check can fail.
    pub eppf_log_offset: f64,
    /// Criteria to run; empty means all.
    pub criteria: Vec<u8>,
    pub execution: Execution,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            seed: 20_250_601,
            mc_samples: 100_000,
            gibbs_sweeps: 200_000,
            theta: None,
            eppf_log_offset: 0.0,
            criteria: Vec::new(),
            execution: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub criterion: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {:>2} {:<26} {}  {} ({:.2}s)",
            self.criterion,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.detail,
            self.seconds
        )
    }
}

pub const CRITERIA: [(u8, &str); 8] = [
    (1, "eppf-normalization"),
    (2, "ewens-agreement"),
    (3, "construction-equivalence"),
    (4, "dp-moments"),
    (5, "conjugate-chain-rule"),
    (6, "gibbs-invariance"),
    (7, "gibbs-convergence"),
    (8, "loss-optimizer"),
];

/// Runs the selected checks in order. Invalid parameters (for example a
/// negative concentration) surface as errors rather than failed checks.
pub fn run_checks(cfg: &VerifyConfig) -> Result<Vec<CheckReport>> {
    if let Some(t) = cfg.theta {
        PartitionPriorModel::dp(t)?;
    }
    if let Some(&bad) = cfg.criteria.iter().find(|c| !(1..=8).contains(*c)) {
        return Err(Error::InvalidInput(format!("no check numbered {bad}")));
    }
    CRITERIA
        .iter()
        .filter(|(c, _)| cfg.criteria.is_empty() || cfg.criteria.contains(c))
        .map(|&(c, name)| {
            let start = Instant::now();
            let (passed, detail) = match c {
                1 => eppf_normalization(cfg)?,
                2 => ewens_agreement(cfg)?,
                3 => construction_equivalence(cfg)?,
                4 => dp_moments(cfg)?,
                5 => chain_rule(cfg)?,
                6 => gibbs_invariance(cfg)?,
                7 => gibbs_convergence(cfg)?,
                _ => loss_optimizer(cfg)?,
            };
            Ok(CheckReport {
                criterion: c,
                name,
                passed,
                detail,
                seconds: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

fn thetas(cfg: &VerifyConfig, defaults: &[f64]) -> Vec<f64> {
    match cfg.theta {
        Some(t) => vec![t],
        None => defaults.to_vec(),
    }
}

/// Colour parameters used by the coloured checks.
pub fn check_colours(cfg: &VerifyConfig) -> Vec<ColourParams> {
    vec![
        ColourParams { gamma: 1.0, theta: cfg.theta.unwrap_or(0.7) },
        ColourParams { gamma: 2.0, theta: cfg.theta.unwrap_or(1.5) },
    ]
}

fn eppf_normalization(cfg: &VerifyConfig) -> Result<(bool, String)> {
    let off = cfg.eppf_log_offset;
    let mut worst: f64 = 0.0;
    for theta in thetas(cfg, &[0.3, 1.0, 5.0]) {
        for n in 1..=8 {
            let mut total = 0.0;
            let mut err = None;
            for_each_labels(n, |l| match log_eppf_dp(&Partition::from_labels(l).expect("labels"), theta) {
                Ok(v) => total += (v + off).exp(),
                Err(e) => err = Some(e),
            })?;
            if let Some(e) = err {
                return Err(e);
            }
            worst = worst.max((total - 1.0).abs());
            let cfgs: f64 = enumerate_configurations(n)
                .iter()
                .map(|a| log_ewens_config(a, theta).map(|v| (v + off).exp()))
                .sum::<Result<f64>>()?;
            worst = worst.max((cfgs - 1.0).abs());
        }
    }
    let cdp = PartitionPriorModel::cdp(check_colours(cfg))?;
    let bg = PartitionPriorModel::background_cdp(5.0, cfg.theta.unwrap_or(1.0))?;
    for n in 1..=5 {
        let all = enumerate_coloured_partitions(n, 2)?;
        for model in [&cdp, &bg] {
            let total: f64 = all
                .iter()
                .map(|p| log_eppf(model, p).map(|v| (v + off).exp()))
                .sum::<Result<f64>>()?;
            worst = worst.max((total - 1.0).abs());
        }
    }
    Ok((worst <= 1e-10, format!("max |sum - 1| = {worst:.3e}")))
}

fn ewens_agreement(cfg: &VerifyConfig) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for theta in thetas(cfg, &[0.3, 1.0, 5.0]) {
        for n in 1..=7 {
            let parts = enumerate_partitions(n)?;
            for a in enumerate_configurations(n) {
                let summed: f64 = parts
                    .iter()
                    .filter(|p| p.configuration() == a)
                    .map(|p| log_eppf_dp(p, theta).map(f64::exp))
                    .sum::<Result<f64>>()?;
                let direct = log_ewens_config(&a, theta)?.exp();
                worst = worst.max((summed - direct).abs());
            }
        }
    }
    Ok((worst <= 1e-10, format!("max abs diff = {worst:.3e}")))
}

fn chunked_table<F>(cfg: &VerifyConfig, stream: u64, total: usize, draw: F) -> Result<FrequencyTable<Partition>>
where
    F: Fn(&mut RngStream) -> Result<Partition> + Sync + Send,
{
    const CHUNK: usize = 1000;
    let root = RngStream::new(cfg.seed).substream(stream);
    let chunks = total.div_ceil(CHUNK);
    let parts: Vec<Result<FrequencyTable<Partition>>> = cfg.execution.map_seeded(&root, chunks, |c, rng| {
        let mut t = FrequencyTable::new();
        for _ in c * CHUNK..((c + 1) * CHUNK).min(total) {
            t.add(draw(rng)?);
        }
        Ok(t)
    });
    parts
        .into_iter()
        .try_fold(FrequencyTable::new(), |acc, t| Ok(acc.merge(t?)))
}

fn construction_equivalence(cfg: &VerifyConfig) -> Result<(bool, String)> {
    let n = 4;
    let theta = cfg.theta.unwrap_or(1.0);
    let k = 2000;
    let exact: Vec<(Partition, f64)> = enumerate_partitions(n)?
        .into_iter()
        .map(|p| {
            let v = log_eppf_dp(&p, theta)?.exp();
            Ok((p, v))
        })
        .collect::<Result<_>>()?;
    let tables = [
        ("sticks", chunked_table(cfg, 31, cfg.mc_samples, |r| sample_dp_partition_via_sticks(n, theta, r))?),
        (
            "polya",
            chunked_table(cfg, 32, cfg.mc_samples, |r| {
                canonicalize(&sample_polya_sequence(n, theta, &UniformBase, r)?.0)
            })?,
        ),
        (
            "finite-mixture",
            chunked_table(cfg, 33, cfg.mc_samples, |r| {
                canonicalize(&sample_finite_mixture_alloc(k, theta / k as f64, n, r)?)
            })?,
        ),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, t) in &tables {
        let test = t.chi_square(exact.iter().map(|(p, v)| (p, *v)), 0.99)?;
        ok &= test.passed();
        detail.push(format!("{name} X2={:.2}/{:.2}", test.statistic, test.critical));
    }
    Ok((ok, detail.join(", ")))
}

fn dp_moments(cfg: &VerifyConfig) -> Result<(bool, String)> {
    let g0 = 0.3;
    let mut ok = true;
    let mut detail = Vec::new();
    for (s, theta) in thetas(cfg, &[1.0, 5.0]).into_iter().enumerate() {
        let root = RngStream::new(cfg.seed).substream(40 + s as u64);
        let draws: Vec<Result<f64>> = cfg.execution.map_seeded(&root, cfg.mc_samples, |_, rng| {
            let g = sample_dp_measure(theta, StickTruncation::Residual(1e-10), &UniformBase, rng)?;
            Ok(g.mass(|&v: &f64| v < g0))
        });
        let draws: Vec<f64> = draws.into_iter().collect::<Result<_>>()?;
        let m = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / m;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
        let target = g0 * (1.0 - g0) / (1.0 + theta);
        let rel = (var - target).abs() / target;
        ok &= (mean - g0).abs() <= 0.01 && rel <= 0.10;
        detail.push(format!("theta={theta}: mean={mean:.4} var rel err={rel:.3}"));
    }
    Ok((ok, detail.join(", ")))
}

fn normal_matrix(r: usize, c: usize, rng: &mut RngStream) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// Random design, SPD prior (regular or background) and cluster rows.
pub fn random_conjugate_instance(
    rng: &mut RngStream,
    background: bool,
    max_items: usize,
) -> Result<(DesignBlock, NormalGammaSpec, Vec<Vec<f64>>)> {
    let s = rng.random_range(1..=4);
    let kz = rng.random_range(1..=2);
    let kx = rng.random_range(if background { 1 } else { 0 }..=2);
    let design = DesignBlock::new(normal_matrix(s, kz, rng), normal_matrix(s, kx, rng))?;
    let dim = if background { kx } else { kz + kx };
    let a_mat = normal_matrix(dim, dim, rng);
    let precision = &a_mat * a_mat.transpose() + DMatrix::identity(dim, dim) * 0.1;
    let mean = DVector::from_fn(dim, |_, _| rng.sample(StandardNormal));
    let a = rng.random_range(0.5..3.0);
    let b = rng.random_range(0.5..3.0);
    let prior = if background {
        let d0 = DVector::from_fn(kz, |_, _| rng.sample(StandardNormal));
        NormalGammaSpec::background(a, b, mean, precision, d0)?
    } else {
        NormalGammaSpec::regular(a, b, mean, precision)?
    };
    let e = rng.random_range(1..=max_items);
    let rows = (0..e)
        .map(|_| (0..s).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    Ok((design, prior, rows))
}

fn chain_rule(cfg: &VerifyConfig) -> Result<(bool, String)> {
    let mut rng = RngStream::new(cfg.seed).substream(50);
    let (mut tele, mut stacked): (f64, f64) = (0.0, 0.0);
    for inst in 0..100 {
        let (design, prior, rows) = random_conjugate_instance(&mut rng, inst % 2 == 1, 5)?;
        let model = NigModel::new(&prior, &design)?;
        let s = design.samples();
        let full = model.log_marginal_stats(&ClusterStats::from_items(s, rows.iter().map(Vec::as_slice)));
        for _ in 0..3 {
            let mut order: Vec<usize> = (0..rows.len()).collect();
            order.shuffle(&mut rng);
            let mut st = ClusterStats::empty(s);
            let mut sum = 0.0;
            for &i in &order {
                sum += model.log_predictive_stats(&rows[i], &st)?;
                st.add(&rows[i]);
            }
            tele = tele.max((sum - full).abs());
        }
        let small: Vec<&[f64]> = rows.iter().take(3).map(Vec::as_slice).collect();
        let direct = log_marginal_stacked(&small, &design, &prior)?;
        let coeff = model.log_marginal_stats(&ClusterStats::from_items(s, small.iter().copied()));
        stacked = stacked.max((direct - coeff).abs());
    }
    Ok((
        tele <= 1e-8 && stacked <= 1e-8,
        format!("telescoping max err {tele:.3e}, stacked max err {stacked:.3e}"),
    ))
}

/// Small NIG setup shared by the Gibbs checks: `n` items with three
/// samples each, designs with intercept and slope (plus a quadratic
/// column for the background model).
pub fn gibbs_fixture(n: usize, seed: u64, background: bool) -> Result<(Vec<f64>, Vec<NigModel>)> {
    let s = 3;
    let z = DMatrix::from_fn(s, 2, |r, c| if c == 0 { 1.0 } else { r as f64 });
    let mut rng = RngStream::new(seed);
    let centres = [0.0, 1.5, -1.0];
    let data: Vec<f64> = (0..n * s)
        .map(|k| centres[(k / s) % 3] + 0.6 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let liks = if background {
        let x = DMatrix::from_fn(s, 1, |r, _| (r * r) as f64);
        let design = DesignBlock::new(z, x)?;
        let bg = NormalGammaSpec::background(
            2.0,
            1.0,
            DVector::zeros(1),
            DMatrix::identity(1, 1) * 0.5,
            DVector::from_vec(vec![0.2, -0.1]),
        )?;
        let reg = NormalGammaSpec::isotropic(2.0, 1.0, 3, 0.5)?;
        vec![NigModel::new(&bg, &design)?, NigModel::new(&reg, &design)?]
    } else {
        let design = DesignBlock::z_only(z)?;
        vec![NigModel::new(&NormalGammaSpec::isotropic(2.0, 1.0, 2, 0.5)?, &design)?]
    };
    Ok((data, liks))
}

/// The five prior families as exercised by the invariance check.
pub fn invariance_models(cfg: &VerifyConfig) -> Result<Vec<(&'static str, PartitionPriorModel, usize)>> {
    let t = |d: f64| cfg.theta.unwrap_or(d);
    Ok(vec![
        ("dp", PartitionPriorModel::dp(t(1.3))?, 4),
        ("dir-mult", PartitionPriorModel::dir_mult(3, 0.6)?, 4),
        ("pitman-yor", PartitionPriorModel::pitman_yor(0.4, t(0.8))?, 4),
        ("cdp", PartitionPriorModel::cdp(check_colours(cfg))?, 3),
        ("background", PartitionPriorModel::background_cdp(5.0, t(1.0))?, 3),
    ])
}

fn gibbs_invariance(cfg: &VerifyConfig) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for (name, model, n) in invariance_models(cfg)? {
        let (data, liks) = match model.family() {
            PriorFamily::BackgroundCdp { .. } => gibbs_fixture(n, cfg.seed, true)?,
            PriorFamily::Cdp { .. } => {
                let (d, l) = gibbs_fixture(n, cfg.seed, false)?;
                (d, vec![l[0].clone(), l[0].clone()])
            }
            _ => gibbs_fixture(n, cfg.seed, false)?,
        };
        let pi = exact_posterior(&model, &liks, &data, 3)?;
        let mut dev: f64 = 0.0;
        for kind in [KernelKind::Sweep, KernelKind::SubsetMove] {
            let image = push_forward(&model, &liks, &data, 3, &pi, kind, cfg.execution)?;
            for (p, v) in &pi {
                dev = dev.max((image.get(p).copied().unwrap_or(0.0) - v).abs());
            }
            let leaked: f64 = image
                .iter()
                .filter(|(p, _)| !pi.iter().any(|(q, _)| q == *p))
                .map(|(_, v)| v.abs())
                .sum();
            dev = dev.max(leaked);
        }
        worst = worst.max(dev);
        detail.push(format!("{name} {dev:.1e}"));
    }
    Ok((worst <= 1e-10, format!("max |pi K - pi|: {}", detail.join(", "))))
}

fn gibbs_convergence(cfg: &VerifyConfig) -> Result<(bool, String)> {
    let n = 5;
    let model = PartitionPriorModel::dp(cfg.theta.unwrap_or(1.0))?;
    let (data, liks) = gibbs_fixture(n, cfg.seed ^ 0x5eed, false)?;
    let exact: Vec<(ColouredPartition, f64)> = exact_posterior(&model, &liks, &data, 3)?;
    let chains = 8;
    let per_chain = (cfg.gibbs_sweeps / chains).max(20);
    let plan = SweepPlan {
        sweeps: per_chain,
        burn_in: per_chain / 20,
        thin: 10,
        subset_move_rate: 0.5,
        seed: cfg.seed,
    };
    let traces = run_chains(&data, 3, &model, &liks, &plan, chains, cfg.execution)?;
    let mut table = FrequencyTable::new();
    for rec in traces.iter().flatten() {
        table.add(rec.partition.clone());
    }
    let test = table.chi_square(exact.iter().map(|(p, v)| (p, *v)), 0.99)?;
    Ok((
        test.passed(),
        format!(
            "{} partitions, {} draws, X2={:.2} crit={:.2} dof={}",
            exact.len(),
            table.total(),
            test.statistic,
            test.critical,
            test.dof
        ),
    ))
}

/// Similarity matrix for the optimizer check: either the average of a few
/// random partitions or independent uniform entries.
pub fn random_similarity(rng: &mut RngStream, n: usize, averaged: bool) -> Result<SimilarityMatrix> {
    let mut v = vec![1.0; n * n];
    if averaged {
        let draws = 12;
        let mut acc = vec![0.0; n * n];
        for _ in 0..draws {
            let p = canonicalize(&sample_polya_sequence(n, 1.0, &UniformBase, rng)?.0)?;
            for i in 0..n {
                for j in 0..n {
                    acc[i * n + j] += f64::from(u8::from(p.together(i, j)));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    v[i * n + j] = acc[i * n + j] / draws as f64;
                }
            }
        }
    } else {
        for i in 0..n {
            for j in i + 1..n {
                let x: f64 = rng.random();
                v[i * n + j] = x;
                v[j * n + i] = x;
            }
        }
    }
    SimilarityMatrix::from_values(n, v, 0)
}

fn loss_optimizer(cfg: &VerifyConfig) -> Result<(bool, String)> {
    let mut rng = RngStream::new(cfg.seed).substream(80);
    let loss = LossSpec::default();
    let total = 50;
    let (mut exact_ok, mut bounded, mut agree) = (0, 0, 0);
    for k in 0..total {
        let n = rng.random_range(3..=9);
        let sim = random_similarity(&mut rng, n, k % 2 == 0)?;
        let exact = optimal_partition(&sim, &loss, SearchStrategy::Exact)?;
        let greedy = optimal_partition(&sim, &loss, SearchStrategy::Greedy)?;
        let mut brute = None::<(f64, Partition)>;
        for p in enumerate_partitions(n)? {
            let l = expected_pairwise_loss(&p, &sim, &loss)?;
            if brute.as_ref().is_none_or(|(bl, bp)| l < *bl || (l == *bl && p < *bp)) {
                brute = Some((l, p));
            }
        }
        let (bl, bp) = brute.expect("n >= 1");
        exact_ok += usize::from(exact == bp);
        let gl = expected_pairwise_loss(&greedy, &sim, &loss)?;
        let sl = expected_pairwise_loss(&Partition::singletons(n), &sim, &loss)?;
        let ol = expected_pairwise_loss(&Partition::one_cluster(n), &sim, &loss)?;
        bounded += usize::from(gl <= sl.min(ol) + 1e-12);
        agree += usize::from((gl - bl).abs() <= 1e-12);
    }
    let rate = agree as f64 / total as f64;
    Ok((
        exact_ok == total && bounded == total && rate >= 0.5,
        format!("exact=brute {exact_ok}/{total}, greedy bounded {bounded}/{total}, greedy=exact {agree}/{total}{}",
            if rate < 0.8 { " (below 80%)" } else { "" }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_checks_pass() {
        let cfg = VerifyConfig {
            criteria: vec![1, 2, 5, 8],
            ..VerifyConfig::default()
        };
        for r in run_checks(&cfg).unwrap() {
            assert!(r.passed, "{r}");
        }
    }

    #[test]
    fn tampered_constant_fails_normalization() {
        let cfg = VerifyConfig {
            criteria: vec![1],
            eppf_log_offset: 1e-6,
            ..VerifyConfig::default()
        };
        assert!(!run_checks(&cfg).unwrap()[0].passed);
    }

    #[test]
    fn negative_theta_is_a_domain_error() {
        let cfg = VerifyConfig {
            theta: Some(-1.0),
            ..VerifyConfig::default()
        };
        assert!(matches!(run_checks(&cfg), Err(Error::Domain(_))));
    }
}
