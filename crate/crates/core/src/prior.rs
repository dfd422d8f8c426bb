//! Exchangeable partition priors: exact log-probabilities and the one-step
//! urn weights used by the Gibbs sampler.
//!
//! Every family here is described by its sequential predictive rule: with
//! `m` items already placed, the next item joins an existing cluster or
//! opens a new one with weights that depend only on cluster sizes (per
//! colour). The weights of each family sum to a normalizer that depends on
//! `m` alone, which is what makes prior ratios cheap.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, invalid, Error, Result};
use crate::partition::{ClusterSizes, ColouredPartition, ConfigurationCounts, Partition, ReallocTarget};

/// Log-probability of an impossible event. Callers test for it with
/// [`is_log_zero`] rather than doing arithmetic on it.
pub const LOG_ZERO: f64 = f64::NEG_INFINITY;

pub fn is_log_zero(x: f64) -> bool {
    x == LOG_ZERO
}

/// `(γ_k, θ_k)` for one colour of a coloured Dirichlet process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColourParams {
    /// Dirichlet weight of the colour.
    pub gamma: f64,
    /// Concentration of the colour's Dirichlet process.
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PriorFamily {
    /// Dirichlet process with concentration `theta`.
    Dp { theta: f64 },
    /// Symmetric Dirichlet–multinomial with `k` components of weight `delta`.
    DirMult { k: usize, delta: f64 },
    /// Two-parameter Poisson–Dirichlet with discount `alpha` and strength `theta`.
    PitmanYor { alpha: f64, theta: f64 },
    /// Coloured Dirichlet process with one `(γ, θ)` per colour.
    Cdp { colours: Vec<ColourParams> },
    /// Background-cluster model: colour 0 holds at most one cluster with
    /// weight `gamma`; colour 1 is a Dirichlet process with concentration `theta`.
    BackgroundCdp { gamma: f64, theta: f64 },
}

/// A validated partition prior. The only way to build one is through the
/// checked constructors (or deserialization, which runs the same checks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PriorFamily", into = "PriorFamily")]
pub struct PartitionPriorModel {
    family: PriorFamily,
}

impl TryFrom<PriorFamily> for PartitionPriorModel {
    type Error = Error;

    fn try_from(family: PriorFamily) -> Result<Self> {
        validate(&family)?;
        Ok(PartitionPriorModel { family })
    }
}

impl From<PartitionPriorModel> for PriorFamily {
    fn from(m: PartitionPriorModel) -> Self {
        m.family
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        domain(format!("{name} must be finite and > 0, got {x}"))
    }
}

fn validate(f: &PriorFamily) -> Result<()> {
    match f {
        PriorFamily::Dp { theta } => positive("theta", *theta),
        PriorFamily::DirMult { k, delta } => {
            if *k == 0 {
                return domain("DirMult needs k >= 1");
            }
            positive("delta", *delta)
        }
        PriorFamily::PitmanYor { alpha, theta } => {
            if !(0.0..1.0).contains(alpha) {
                return domain(format!("discount alpha must lie in [0, 1), got {alpha}"));
            }
            if !(theta.is_finite() && *theta > -alpha) {
                return domain(format!("strength theta must exceed -alpha, got {theta}"));
            }
            Ok(())
        }
        PriorFamily::Cdp { colours } => {
            if colours.is_empty() {
                return domain("CDP needs at least one colour");
            }
            for c in colours {
                positive("gamma_k", c.gamma)?;
                positive("theta_k", c.theta)?;
            }
            Ok(())
        }
        PriorFamily::BackgroundCdp { gamma, theta } => {
            positive("gamma", *gamma)?;
            positive("theta", *theta)
        }
    }
}

/// Either kind of partition, for functions that accept both.
#[derive(Debug, Clone, Copy)]
pub enum PartitionView<'a> {
    Plain(&'a Partition),
    Coloured(&'a ColouredPartition),
}

impl<'a> From<&'a Partition> for PartitionView<'a> {
    fn from(p: &'a Partition) -> Self {
        PartitionView::Plain(p)
    }
}

impl<'a> From<&'a ColouredPartition> for PartitionView<'a> {
    fn from(p: &'a ColouredPartition) -> Self {
        PartitionView::Coloured(p)
    }
}

impl PartitionView<'_> {
    fn to_coloured(self) -> ColouredPartition {
        match self {
            PartitionView::Plain(p) => ColouredPartition::single_colour(p),
            PartitionView::Coloured(c) => c.clone(),
        }
    }
}

impl PartitionPriorModel {
    pub fn new(family: PriorFamily) -> Result<Self> {
        family.try_into()
    }

    pub fn dp(theta: f64) -> Result<Self> {
        Self::new(PriorFamily::Dp { theta })
    }

    pub fn dir_mult(k: usize, delta: f64) -> Result<Self> {
        Self::new(PriorFamily::DirMult { k, delta })
    }

    pub fn pitman_yor(alpha: f64, theta: f64) -> Result<Self> {
        Self::new(PriorFamily::PitmanYor { alpha, theta })
    }

    pub fn cdp(colours: Vec<ColourParams>) -> Result<Self> {
        Self::new(PriorFamily::Cdp { colours })
    }

    pub fn background_cdp(gamma: f64, theta: f64) -> Result<Self> {
        Self::new(PriorFamily::BackgroundCdp { gamma, theta })
    }

    pub fn family(&self) -> &PriorFamily {
        &self.family
    }

    /// Number of colours the model distinguishes.
    pub fn num_colours(&self) -> usize {
        match &self.family {
            PriorFamily::Cdp { colours } => colours.len(),
            PriorFamily::BackgroundCdp { .. } => 2,
            _ => 1,
        }
    }

    pub fn is_coloured(&self) -> bool {
        matches!(
            self.family,
            PriorFamily::Cdp { .. } | PriorFamily::BackgroundCdp { .. }
        )
    }

    /// Unnormalized weight for the next item joining an existing cluster
    /// of `colour` whose current size is `size`.
    pub fn join_weight(&self, sizes: &ClusterSizes, colour: usize, size: usize) -> f64 {
        let s = size as f64;
        match &self.family {
            PriorFamily::Dp { .. } => s,
            PriorFamily::DirMult { delta, .. } => s + delta,
            PriorFamily::PitmanYor { alpha, .. } => s - alpha,
            PriorFamily::Cdp { colours } => {
                let c = colours[colour];
                let nk = sizes.colour_total(colour) as f64;
                s * (c.gamma + nk) / (c.theta + nk)
            }
            PriorFamily::BackgroundCdp { gamma, .. } => {
                if colour == 0 {
                    gamma + s
                } else {
                    s
                }
            }
        }
    }

    /// Unnormalized weight for the next item opening a new cluster of
    /// `colour`. Zero when the model forbids it.
    pub fn new_weight(&self, sizes: &ClusterSizes, colour: usize) -> f64 {
        match &self.family {
            PriorFamily::Dp { theta } => *theta,
            PriorFamily::DirMult { k, delta } => {
                let d = sizes.degree();
                if d >= *k {
                    0.0
                } else {
                    (*k - d) as f64 * delta
                }
            }
            PriorFamily::PitmanYor { alpha, theta } => {
                let d = sizes.degree();
                if d == 0 {
                    // sole option for the first item; any positive constant
                    1.0
                } else {
                    theta + alpha * d as f64
                }
            }
            PriorFamily::Cdp { colours } => {
                let c = colours[colour];
                let nk = sizes.colour_total(colour) as f64;
                c.theta * (c.gamma + nk) / (c.theta + nk)
            }
            PriorFamily::BackgroundCdp { gamma, theta } => {
                if colour == 0 {
                    if sizes.colour_degree(0) == 0 {
                        *gamma
                    } else {
                        0.0
                    }
                } else {
                    *theta
                }
            }
        }
    }

    /// Sum of all one-step weights when `m` items are placed.
    pub fn normalizer(&self, m: usize) -> f64 {
        let m = m as f64;
        match &self.family {
            PriorFamily::Dp { theta } => m + theta,
            PriorFamily::DirMult { k, delta } => m + *k as f64 * delta,
            PriorFamily::PitmanYor { theta, .. } => {
                if m == 0.0 {
                    1.0
                } else {
                    m + theta
                }
            }
            PriorFamily::Cdp { colours } => m + colours.iter().map(|c| c.gamma).sum::<f64>(),
            PriorFamily::BackgroundCdp { gamma, theta } => m + gamma + theta,
        }
    }

    /// One-step reallocation weights over every admissible target given
    /// the sizes of the remaining clusters. Zero-weight targets are omitted.
    pub fn realloc_weights(&self, sizes: &ClusterSizes) -> Vec<(ReallocTarget, f64)> {
        let mut out = Vec::with_capacity(sizes.degree() + self.num_colours());
        for colour in 0..self.num_colours() {
            for (cluster, &s) in sizes.colour(colour).iter().enumerate() {
                let w = self.join_weight(sizes, colour, s);
                if w > 0.0 {
                    out.push((ReallocTarget::Existing { colour, cluster }, w));
                }
            }
            let w = self.new_weight(sizes, colour);
            if w > 0.0 {
                out.push((ReallocTarget::New { colour }, w));
            }
        }
        out
    }

    /// Log of the unnormalized weight for adding `block_size` items at once
    /// to `target`: the product of the sequential weights as the block's
    /// items arrive one by one. Common normalizers are omitted, so only
    /// ratios across targets for the same remaining sizes are meaningful.
    pub fn block_log_weight(
        &self,
        sizes: &ClusterSizes,
        target: ReallocTarget,
        block_size: usize,
    ) -> f64 {
        let mut sizes = sizes.clone();
        let (colour, slot, mut acc) = match target {
            ReallocTarget::Existing { colour, cluster } => (colour, cluster, 0.0),
            ReallocTarget::New { colour } => {
                let w = self.new_weight(&sizes, colour);
                if w <= 0.0 {
                    return LOG_ZERO;
                }
                let slot = sizes.push(colour, 1);
                (colour, slot, w.ln())
            }
        };
        let already = usize::from(matches!(target, ReallocTarget::New { .. }));
        sizes.ensure_colour(colour);
        for _ in already..block_size {
            let s = sizes.colour(colour)[slot];
            let w = self.join_weight(&sizes, colour, s);
            if w <= 0.0 {
                return LOG_ZERO;
            }
            acc += w.ln();
            sizes.grow(colour, slot);
        }
        acc
    }

    fn check_view(&self, p: &ColouredPartition) -> Result<()> {
        let used = p
            .colours()
            .iter()
            .rposition(|cs| !cs.is_empty())
            .map_or(0, |k| k + 1);
        if used > self.num_colours() {
            return invalid(format!(
                "partition uses {used} colours but the model has {}",
                self.num_colours()
            ));
        }
        Ok(())
    }
}

/// Dirichlet-process EPPF: `Γ(θ)/Γ(θ+n) · θ^d · Π (n_j − 1)!`.
pub fn log_eppf_dp(p: &Partition, theta: f64) -> Result<f64> {
    positive("theta", theta)?;
    Ok(log_dp_sizes(&p.sizes(), theta))
}

fn log_dp_sizes(sizes: &[usize], theta: f64) -> f64 {
    let n: usize = sizes.iter().sum();
    ln_gamma(theta) - ln_gamma(theta + n as f64)
        + sizes.len() as f64 * theta.ln()
        + sizes.iter().map(|&s| ln_gamma(s as f64)).sum::<f64>()
}

fn ln_factorial(k: usize) -> f64 {
    ln_gamma(k as f64 + 1.0)
}

/// Ewens sampling formula: probability of the size configuration `a`.
pub fn log_ewens_config(a: &ConfigurationCounts, theta: f64) -> Result<f64> {
    positive("theta", theta)?;
    // re-validate: a value built by deserialization could be inconsistent
    let a = ConfigurationCounts::new(a.n(), a.as_slice().to_vec())?;
    let n = a.n();
    let mut acc = ln_factorial(n) + ln_gamma(theta) - ln_gamma(theta + n as f64);
    for (r, ar) in a.counts() {
        acc += ar as f64 * theta.ln() - ar as f64 * (r as f64).ln() - ln_factorial(ar);
    }
    Ok(acc)
}

/// Coloured-Dirichlet-process EPPF. Colours beyond the partition's last
/// nonempty colour contribute a factor of one.
pub fn log_eppf_cdp(p: &ColouredPartition, colours: &[ColourParams]) -> Result<f64> {
    for c in colours {
        positive("gamma_k", c.gamma)?;
        positive("theta_k", c.theta)?;
    }
    for (k, cs) in p.colours().iter().enumerate() {
        if !cs.is_empty() && k >= colours.len() {
            return invalid(format!("colour {k} is occupied but has no parameters"));
        }
    }
    let n = p.n() as f64;
    let gsum: f64 = colours.iter().map(|c| c.gamma).sum();
    let mut acc = ln_gamma(gsum) - ln_gamma(n + gsum);
    for (k, cs) in p.colours().iter().enumerate() {
        if cs.is_empty() {
            continue;
        }
        let ColourParams { gamma, theta } = colours[k];
        let nk: usize = cs.iter().map(Vec::len).sum();
        let nk = nk as f64;
        acc += ln_gamma(theta) + ln_gamma(nk + gamma) - ln_gamma(nk + theta) - ln_gamma(gamma)
            + cs.len() as f64 * theta.ln()
            + cs.iter().map(|c| ln_gamma(c.len() as f64)).sum::<f64>();
    }
    Ok(acc)
}

/// Background-cluster EPPF (colour 0 = background, colour 1 = regular):
/// `Γ(γ+θ)/Γ(n+γ+θ) · Γ(n₀+γ)/Γ(γ) · θ^d · Π_regular (n_j − 1)!`.
/// More than one background cluster is impossible.
pub fn log_eppf_background(p: &ColouredPartition, gamma: f64, theta: f64) -> Result<f64> {
    positive("gamma", gamma)?;
    positive("theta", theta)?;
    if p.num_colours() > 2 {
        return invalid("background model has exactly two colours");
    }
    let bg = p.colour_clusters(0);
    if bg.len() >= 2 {
        return Ok(LOG_ZERO);
    }
    let n0 = bg.first().map_or(0, Vec::len) as f64;
    let regular = p.colour_clusters(1);
    let n = p.n() as f64;
    Ok(ln_gamma(gamma + theta) - ln_gamma(n + gamma + theta) + ln_gamma(n0 + gamma)
        - ln_gamma(gamma)
        + regular.len() as f64 * theta.ln()
        + regular.iter().map(|c| ln_gamma(c.len() as f64)).sum::<f64>())
}

/// EPPF as the product of normalized one-step predictive weights, adding
/// items in index order.
pub fn log_eppf_sequential<'a>(
    model: &PartitionPriorModel,
    p: impl Into<PartitionView<'a>>,
) -> Result<f64> {
    let cp = p.into().to_coloured();
    model.check_view(&cp)?;
    let colours = cp.item_colours();
    let labels = cp.uncoloured().labels();
    // canonical cluster -> (colour, slot in running sizes)
    let mut slot_of: Vec<Option<usize>> = vec![None; cp.degree()];
    let mut sizes = ClusterSizes::new(vec![Vec::new(); model.num_colours()]);
    let mut acc = 0.0;
    for i in 0..cp.n() {
        let k = colours[i];
        let w = match slot_of[labels[i]] {
            Some(slot) => {
                let w = model.join_weight(&sizes, k, sizes.colour(k)[slot]);
                sizes.grow(k, slot);
                w
            }
            None => {
                let w = model.new_weight(&sizes, k);
                slot_of[labels[i]] = Some(sizes.push(k, 1));
                w
            }
        };
        if w <= 0.0 {
            return Ok(LOG_ZERO);
        }
        acc += w.ln() - model.normalizer(i).ln();
    }
    Ok(acc)
}

/// Exact log-EPPF for any model: closed forms for DP, CDP and the
/// background model, sequential products for DirMult and Pitman–Yor.
pub fn log_eppf<'a>(model: &PartitionPriorModel, p: impl Into<PartitionView<'a>>) -> Result<f64> {
    let view = p.into();
    match model.family() {
        PriorFamily::Dp { theta } => match view {
            PartitionView::Plain(p) => log_eppf_dp(p, *theta),
            PartitionView::Coloured(c) => {
                model.check_view(c)?;
                log_eppf_dp(&c.uncoloured(), *theta)
            }
        },
        PriorFamily::Cdp { colours } => log_eppf_cdp(&view.to_coloured(), colours),
        PriorFamily::BackgroundCdp { gamma, theta } => {
            log_eppf_background(&view.to_coloured(), *gamma, *theta)
        }
        PriorFamily::DirMult { .. } | PriorFamily::PitmanYor { .. } => {
            log_eppf_sequential(model, view)
        }
    }
}

/// Log-EPPF from cluster sizes alone. Closed forms where available,
/// otherwise the sequential product taken cluster by cluster.
pub fn log_eppf_sizes(model: &PartitionPriorModel, sizes: &ClusterSizes) -> f64 {
    match model.family() {
        PriorFamily::Dp { theta } => {
            let all: Vec<usize> = sizes.per_colour().iter().flatten().copied().collect();
            log_dp_sizes(&all, *theta)
        }
        PriorFamily::Cdp { colours } => {
            let n = sizes.total() as f64;
            let gsum: f64 = colours.iter().map(|c| c.gamma).sum();
            let mut acc = ln_gamma(gsum) - ln_gamma(n + gsum);
            for (k, ss) in sizes.per_colour().iter().enumerate() {
                if ss.is_empty() {
                    continue;
                }
                let ColourParams { gamma, theta } = colours[k];
                let nk = ss.iter().sum::<usize>() as f64;
                acc += ln_gamma(theta) + ln_gamma(nk + gamma) - ln_gamma(nk + theta)
                    - ln_gamma(gamma)
                    + ss.len() as f64 * theta.ln()
                    + ss.iter().map(|&s| ln_gamma(s as f64)).sum::<f64>();
            }
            acc
        }
        PriorFamily::BackgroundCdp { gamma, theta } => {
            let bg = sizes.colour(0);
            if bg.len() >= 2 {
                return LOG_ZERO;
            }
            let n0 = bg.first().copied().unwrap_or(0) as f64;
            let reg = sizes.colour(1);
            let n = sizes.total() as f64;
            ln_gamma(gamma + theta) - ln_gamma(n + gamma + theta) + ln_gamma(n0 + gamma)
                - ln_gamma(*gamma)
                + reg.len() as f64 * theta.ln()
                + reg.iter().map(|&s| ln_gamma(s as f64)).sum::<f64>()
        }
        PriorFamily::DirMult { .. } | PriorFamily::PitmanYor { .. } => {
            let mut running = ClusterSizes::new(vec![Vec::new(); model.num_colours()]);
            let mut m = 0usize;
            let mut acc = 0.0;
            for (k, ss) in sizes.per_colour().iter().enumerate() {
                for &s in ss {
                    let w = model.new_weight(&running, k);
                    if w <= 0.0 {
                        return LOG_ZERO;
                    }
                    acc += w.ln() - model.normalizer(m).ln();
                    m += 1;
                    let slot = running.push(k, 1);
                    for _ in 1..s {
                        let w = model.join_weight(&running, k, running.colour(k)[slot]);
                        if w <= 0.0 {
                            return LOG_ZERO;
                        }
                        acc += w.ln() - model.normalizer(m).ln();
                        m += 1;
                        running.grow(k, slot);
                    }
                }
            }
            acc
        }
    }
}

/// Prior reallocation weights for `item`: the item is withdrawn from `p`
/// and weights are returned over the remaining clusters (canonical order
/// per colour, see [`ColouredPartition::without_items`]) plus one new
/// cluster per admissible colour.
pub fn prior_realloc_weights<'a>(
    model: &PartitionPriorModel,
    p: impl Into<PartitionView<'a>>,
    item: usize,
) -> Result<Vec<(ReallocTarget, f64)>> {
    let cp = p.into().to_coloured();
    model.check_view(&cp)?;
    if item >= cp.n() {
        return invalid(format!("item {item} out of range"));
    }
    Ok(model.realloc_weights(&cp.sizes_without(&[item])))
}
