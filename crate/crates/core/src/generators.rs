//! Forward simulation: Beta/Gamma/Dirichlet primitives, stick-breaking
//! weights, the finite-mixture allocation scheme, Pólya sequences, and the
//! stick-breaking-and-colouring construction of the coloured DP.
//!
//! Partition samplers break sticks lazily, extending only when a uniform
//! draw lands in the unbroken remainder, so they carry no truncation error.

use rand::{Rng, RngCore};
use rand_distr::{Beta, Distribution, Gamma, Normal};

use crate::error::{domain, invalid, Result};
use crate::partition::{AllocationVector, ColouredPartition, Partition};
use crate::prior::ColourParams;

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        domain(format!("{name} must be finite and > 0, got {x}"))
    }
}

pub fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    check_positive("beta shape a", a)?;
    check_positive("beta shape b", b)?;
    let d = Beta::new(a, b).map_err(|e| crate::Error::Domain(e.to_string()))?;
    Ok(d.sample(rng))
}

pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    check_positive("gamma shape", shape)?;
    check_positive("gamma scale", scale)?;
    let d = Gamma::new(shape, scale).map_err(|e| crate::Error::Domain(e.to_string()))?;
    Ok(d.sample(rng))
}

/// `log G` for `G ~ Gamma(shape, 1)`, stable for very small shapes via
/// `G = G' · U^{1/shape}` with `G' ~ Gamma(shape + 1, 1)`.
fn log_gamma_variate<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        Gamma::new(shape, 1.0).expect("shape >= 1").sample(rng).ln()
    } else {
        let g = Gamma::new(shape + 1.0, 1.0).expect("shape > 0").sample(rng);
        let u: f64 = rng.random();
        g.ln() + u.ln() / shape
    }
}

/// Dirichlet draw computed in log space, so tiny concentration parameters
/// (say 10⁻³ over thousands of components) do not collapse to 0/0.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if alpha.is_empty() {
        return invalid("Dirichlet needs at least one component");
    }
    for &a in alpha {
        check_positive("Dirichlet parameter", a)?;
    }
    let logs: Vec<f64> = alpha.iter().map(|&a| log_gamma_variate(a, rng)).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    Ok(w)
}

/// Index drawn with probability proportional to `weights`.
pub(crate) fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (j, &w) in weights.iter().enumerate() {
        if u < w {
            return j;
        }
        u -= w;
    }
    // rounding left u just past the end; take the last positive weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// When to stop breaking a stick for exported weight vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StickTruncation {
    /// Exactly this many breaks.
    Fixed(usize),
    /// Break until the unbroken remainder falls below this mass.
    Residual(f64),
}

impl StickTruncation {
    fn check(self) -> Result<()> {
        match self {
            StickTruncation::Fixed(_) => Ok(()),
            StickTruncation::Residual(eps) if eps > 0.0 && eps < 1.0 => Ok(()),
            StickTruncation::Residual(eps) => domain(format!("residual tolerance must be in (0, 1), got {eps}")),
        }
    }

    fn done(self, breaks: usize, residual: f64) -> bool {
        match self {
            StickTruncation::Fixed(j) => breaks >= j,
            StickTruncation::Residual(eps) => residual < eps,
        }
    }
}

/// Truncated stick-breaking weights with the unbroken remainder.
#[derive(Debug, Clone, PartialEq)]
pub struct StickWeights {
    pub weights: Vec<f64>,
    pub residual: f64,
}

impl StickWeights {
    pub fn total(&self) -> f64 {
        self.weights.iter().sum::<f64>() + self.residual
    }
}

/// Proportions `V_j` for the stick-breaking schemes, indexed from 1.
#[derive(Debug, Clone, Copy)]
enum StickLaw {
    /// `V_j ~ Beta(1, θ)`.
    Gem { theta: f64 },
    /// `V_j ~ Beta(1 − α, θ + jα)`.
    TwoParam { alpha: f64, theta: f64 },
}

impl StickLaw {
    fn draw<R: Rng + ?Sized>(self, j: usize, rng: &mut R) -> f64 {
        let (a, b) = match self {
            StickLaw::Gem { theta } => (1.0, theta),
            StickLaw::TwoParam { alpha, theta } => (1.0 - alpha, theta + j as f64 * alpha),
        };
        Beta::new(a, b).expect("validated parameters").sample(rng)
    }
}

fn break_sticks<R: Rng + ?Sized>(law: StickLaw, trunc: StickTruncation, rng: &mut R) -> StickWeights {
    let mut weights = Vec::new();
    let mut residual = 1.0;
    while !trunc.done(weights.len(), residual) {
        let v = law.draw(weights.len() + 1, rng);
        weights.push(v * residual);
        residual *= 1.0 - v;
    }
    StickWeights { weights, residual }
}

/// GEM(θ) weights: `w_j = V_j Π_{l<j} (1 − V_l)`, `V_j ~ Beta(1, θ)`.
pub fn sample_gem<R: Rng + ?Sized>(theta: f64, trunc: StickTruncation, rng: &mut R) -> Result<StickWeights> {
    check_positive("theta", theta)?;
    trunc.check()?;
    Ok(break_sticks(StickLaw::Gem { theta }, trunc, rng))
}

/// Two-parameter stick-breaking: `V_j ~ Beta(1 − α, θ + jα)`.
pub fn sample_gem_two_param<R: Rng + ?Sized>(
    alpha: f64,
    theta: f64,
    trunc: StickTruncation,
    rng: &mut R,
) -> Result<StickWeights> {
    if !(0.0..1.0).contains(&alpha) {
        return domain(format!("alpha must lie in [0, 1), got {alpha}"));
    }
    if !(theta.is_finite() && theta > -alpha) {
        return domain(format!("theta must exceed -alpha, got {theta}"));
    }
    trunc.check()?;
    // θ + α > 0 keeps every Beta parameter positive
    Ok(break_sticks(StickLaw::TwoParam { alpha, theta }, trunc, rng))
}

/// A stick broken on demand. `upper[j] = 1 − Π_{l≤j}(1 − V_l)`.
#[derive(Debug)]
struct LazyStick {
    law: StickLaw,
    upper: Vec<f64>,
    residual: f64,
}

impl LazyStick {
    fn new(law: StickLaw) -> Self {
        LazyStick {
            law,
            upper: Vec::new(),
            residual: 1.0,
        }
    }

    /// Index of the stick piece containing `u ∈ [0, 1)`.
    fn locate<R: Rng + ?Sized>(&mut self, u: f64, rng: &mut R) -> usize {
        while self.upper.last().is_none_or(|&top| top <= u) {
            let v = self.law.draw(self.upper.len() + 1, rng);
            self.residual *= 1.0 - v;
            self.upper.push(1.0 - self.residual);
        }
        self.upper.partition_point(|&top| top <= u)
    }
}

/// Source of atom values for a random measure.
pub trait BaseMeasure<V> {
    fn draw(&self, rng: &mut dyn RngCore) -> V;
}

impl<V, B: BaseMeasure<V> + ?Sized> BaseMeasure<V> for Box<B> {
    fn draw(&self, rng: &mut dyn RngCore) -> V {
        (**self).draw(rng)
    }
}

/// Uniform(0, 1) atoms.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformBase;

impl BaseMeasure<f64> for UniformBase {
    fn draw(&self, rng: &mut dyn RngCore) -> f64 {
        rng.random()
    }
}

/// Normal atoms.
#[derive(Debug, Clone, Copy)]
pub struct NormalBase {
    pub mean: f64,
    pub sd: f64,
}

impl BaseMeasure<f64> for NormalBase {
    fn draw(&self, rng: &mut dyn RngCore) -> f64 {
        Normal::new(self.mean, self.sd).expect("sd > 0").sample(rng)
    }
}

/// An atom drawn from a base measure. Ties are decided by `id`, never by
/// comparing values.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom<V> {
    pub id: u64,
    pub value: V,
}

/// Truncated draw from a Dirichlet process: atoms with stick weights.
#[derive(Debug, Clone)]
pub struct DiscreteMeasure<V> {
    pub atoms: Vec<Atom<V>>,
    pub sticks: StickWeights,
}

impl<V> DiscreteMeasure<V> {
    /// Mass of the atoms satisfying `pred`, ignoring the residual.
    pub fn mass(&self, pred: impl Fn(&V) -> bool) -> f64 {
        self.atoms
            .iter()
            .zip(&self.sticks.weights)
            .filter(|(a, _)| pred(&a.value))
            .map(|(_, w)| w)
            .sum()
    }
}

/// `G ~ DP(θ, G₀)` truncated per `trunc`.
pub fn sample_dp_measure<V, B: BaseMeasure<V>, R: Rng>(
    theta: f64,
    trunc: StickTruncation,
    base: &B,
    rng: &mut R,
) -> Result<DiscreteMeasure<V>> {
    let sticks = sample_gem(theta, trunc, rng)?;
    let atoms = (0..sticks.weights.len() as u64)
        .map(|id| Atom {
            id,
            value: base.draw(rng),
        })
        .collect();
    Ok(DiscreteMeasure { atoms, sticks })
}

/// Partition of `n` items induced by ties among i.i.d. draws from a
/// stick-breaking DP; sticks are extended on demand.
pub fn sample_dp_partition_via_sticks<R: Rng + ?Sized>(n: usize, theta: f64, rng: &mut R) -> Result<Partition> {
    check_positive("theta", theta)?;
    if n == 0 {
        return invalid("n must be positive");
    }
    let mut stick = LazyStick::new(StickLaw::Gem { theta });
    let labels: Vec<usize> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            stick.locate(u, rng)
        })
        .collect();
    Partition::from_labels(&labels)
}

/// Finite-mixture allocation: `w ~ Dirichlet(δ, …, δ)` over `k`
/// components, then `c_i ~ Categorical(w)` independently.
pub fn sample_finite_mixture_alloc<R: Rng + ?Sized>(
    k: usize,
    delta: f64,
    n: usize,
    rng: &mut R,
) -> Result<AllocationVector> {
    if k == 0 {
        return domain("k must be at least 1");
    }
    check_positive("delta", delta)?;
    let w = sample_dirichlet(&vec![delta; k], rng)?;
    Ok(AllocationVector((0..n).map(|_| sample_categorical(&w, rng)).collect()))
}

/// Blackwell–MacQueen urn: item `m + 1` copies the value of one of the `m`
/// earlier items (each with probability `1/(m+θ)`) or draws a fresh atom
/// with probability `θ/(m+θ)`. Returns labels (atom ids) and per-item atoms.
pub fn sample_polya_sequence<V: Clone, B: BaseMeasure<V> + ?Sized, R: Rng>(
    n: usize,
    theta: f64,
    base: &B,
    rng: &mut R,
) -> Result<(AllocationVector, Vec<Atom<V>>)> {
    check_positive("theta", theta)?;
    let mut atoms: Vec<Atom<V>> = Vec::with_capacity(n);
    let mut next_id = 0u64;
    for m in 0..n {
        let u: f64 = rng.random::<f64>() * (m as f64 + theta);
        let atom = if u < theta {
            let a = Atom {
                id: next_id,
                value: base.draw(rng),
            };
            next_id += 1;
            a
        } else {
            let pick = (((u - theta).floor()) as usize).min(m - 1);
            atoms[pick].clone()
        };
        atoms.push(atom);
    }
    let labels = atoms.iter().map(|a| a.id as usize).collect();
    Ok((AllocationVector(labels), atoms))
}

/// A coloured partition with each item's `(colour, atom)`.
pub type ColouredDraw<V> = (ColouredPartition, Vec<(usize, Atom<V>)>);

/// Stick-breaking-and-colouring: colour weights `w ~ Dirichlet(γ)`, an
/// independent lazy GEM(θ_k) stick and base measure per colour. Returns the
/// coloured partition and each item's `(colour, atom)`.
pub fn sample_cdp<V: Clone, B: BaseMeasure<V>, R: Rng>(
    n: usize,
    colours: &[ColourParams],
    bases: &[B],
    rng: &mut R,
) -> Result<ColouredDraw<V>> {
    if colours.is_empty() || bases.len() != colours.len() {
        return invalid("need one base measure per colour");
    }
    if n == 0 {
        return invalid("n must be positive");
    }
    for c in colours {
        check_positive("gamma_k", c.gamma)?;
        check_positive("theta_k", c.theta)?;
    }
    let gammas: Vec<f64> = colours.iter().map(|c| c.gamma).collect();
    let w = sample_dirichlet(&gammas, rng)?;
    let mut sticks: Vec<LazyStick> = colours
        .iter()
        .map(|c| LazyStick::new(StickLaw::Gem { theta: c.theta }))
        .collect();
    // per colour, stick index -> atom
    let mut drawn: Vec<Vec<Option<Atom<V>>>> = vec![Vec::new(); colours.len()];
    let mut next_id = 0u64;
    let mut labels = Vec::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let k = sample_categorical(&w, rng);
        let u: f64 = rng.random();
        let j = sticks[k].locate(u, rng);
        if drawn[k].len() <= j {
            drawn[k].resize(j + 1, None);
        }
        let atom = drawn[k][j]
            .get_or_insert_with(|| {
                let a = Atom {
                    id: next_id,
                    value: bases[k].draw(rng),
                };
                next_id += 1;
                a
            })
            .clone();
        labels.push((k, j));
        out.push((k, atom));
    }
    Ok((ColouredPartition::from_coloured_labels(&labels)?, out))
}
