//! Normal–gamma conjugate linear regression for cluster data.
//!
//! Each item carries a response vector `y_i ∈ R^S` with
//! `y_i = Z δ + X β + ε`, `ε ~ N(0, τ⁻¹ I)`. Within a cluster the
//! coefficients are shared; with the prior `τ ~ Gamma(a, rate b)` and
//! `(δ, β) | τ ~ N(m, (τ t)⁻¹)` they integrate out in closed form, and the
//! stacked response of an `e`-item cluster is multivariate-t with `2a`
//! degrees of freedom, mean `Z m_δ + X m_β` and scale
//! `(b/a)(Z t_δ⁻¹ Z' + X t_β⁻¹ X' + I)`.
//!
//! The background variant fixes `δ = δ₀` and keeps only `β` random.
//!
//! Every item shares the same design, so a cluster is summarised by
//! `(e, Σ y_i, Σ y_i'y_i)` and all work happens in coefficient space.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, invalid, Error, Result};

/// Covariates shared by all items: `z` is `S × K'` (cluster-varying
/// coefficients δ), `x` is `S × K` (coefficients β, `K` may be zero).
#[derive(Debug, Clone, PartialEq)]
pub struct DesignBlock {
    z: DMatrix<f64>,
    x: DMatrix<f64>,
}

impl DesignBlock {
    pub fn new(z: DMatrix<f64>, x: DMatrix<f64>) -> Result<Self> {
        if z.nrows() != x.nrows() {
            return invalid(format!(
                "Z has {} rows but X has {}",
                z.nrows(),
                x.nrows()
            ));
        }
        if z.nrows() == 0 {
            return invalid("design has no rows");
        }
        Ok(DesignBlock { z, x })
    }

    /// Design without a β block.
    pub fn z_only(z: DMatrix<f64>) -> Result<Self> {
        let s = z.nrows();
        Self::new(z, DMatrix::zeros(s, 0))
    }

    /// Samples per item, `S`.
    pub fn samples(&self) -> usize {
        self.z.nrows()
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// `[Z X]`.
    pub fn combined(&self) -> DMatrix<f64> {
        let s = self.samples();
        let (kz, kx) = (self.z.ncols(), self.x.ncols());
        let mut w = DMatrix::zeros(s, kz + kx);
        w.columns_mut(0, kz).copy_from(&self.z);
        w.columns_mut(kz, kx).copy_from(&self.x);
        w
    }
}

/// Normal–gamma prior `(a, b, m, t)`; `b` is a rate. With `fixed_delta`
/// set, `m`/`t` describe β only and δ is pinned at `fixed_delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalGammaSpec {
    pub a: f64,
    pub b: f64,
    pub mean: DVector<f64>,
    pub precision: DMatrix<f64>,
    pub fixed_delta: Option<DVector<f64>>,
}

fn check_spd(t: &DMatrix<f64>) -> Result<()> {
    if !t.is_square() {
        return invalid("prior precision must be square");
    }
    let scale = t.amax().max(1.0);
    if (t - t.transpose()).amax() > 1e-12 * scale {
        return Err(Error::Numerical("prior precision is not symmetric".into()));
    }
    if t.nrows() > 0 && Cholesky::new(t.clone()).is_none() {
        return Err(Error::Numerical("prior precision is not positive definite".into()));
    }
    Ok(())
}

impl NormalGammaSpec {
    pub fn regular(a: f64, b: f64, mean: DVector<f64>, precision: DMatrix<f64>) -> Result<Self> {
        let s = NormalGammaSpec {
            a,
            b,
            mean,
            precision,
            fixed_delta: None,
        };
        s.validate()?;
        Ok(s)
    }

    /// Block-diagonal prior over `(δ, β)`.
    pub fn regular_blocks(
        a: f64,
        b: f64,
        m_delta: DVector<f64>,
        t_delta: DMatrix<f64>,
        m_beta: DVector<f64>,
        t_beta: DMatrix<f64>,
    ) -> Result<Self> {
        let (kd, kb) = (m_delta.len(), m_beta.len());
        if t_delta.shape() != (kd, kd) || t_beta.shape() != (kb, kb) {
            return invalid("prior block dimensions disagree");
        }
        let mean = DVector::from_iterator(kd + kb, m_delta.iter().chain(m_beta.iter()).copied());
        let mut t = DMatrix::zeros(kd + kb, kd + kb);
        t.view_mut((0, 0), (kd, kd)).copy_from(&t_delta);
        t.view_mut((kd, kd), (kb, kb)).copy_from(&t_beta);
        Self::regular(a, b, mean, t)
    }

    /// Background prior: β block only, δ fixed at `delta0`.
    pub fn background(
        a: f64,
        b: f64,
        m_beta: DVector<f64>,
        t_beta: DMatrix<f64>,
        delta0: DVector<f64>,
    ) -> Result<Self> {
        let s = NormalGammaSpec {
            a,
            b,
            mean: m_beta,
            precision: t_beta,
            fixed_delta: Some(delta0),
        };
        s.validate()?;
        Ok(s)
    }

    /// Isotropic prior with zero mean and precision `t_scale · I`.
    pub fn isotropic(a: f64, b: f64, dim: usize, t_scale: f64) -> Result<Self> {
        Self::regular(a, b, DVector::zeros(dim), DMatrix::identity(dim, dim) * t_scale)
    }

    pub fn is_background(&self) -> bool {
        self.fixed_delta.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a > 0.0 && self.b.is_finite() && self.b > 0.0) {
            return domain(format!("need a, b > 0, got a = {}, b = {}", self.a, self.b));
        }
        if self.precision.nrows() != self.mean.len() {
            return invalid("prior mean and precision dimensions disagree");
        }
        check_spd(&self.precision)
    }

    fn check_design(&self, design: &DesignBlock) -> Result<()> {
        let want = match &self.fixed_delta {
            Some(d) => {
                if d.len() != design.z.ncols() {
                    return invalid(format!(
                        "fixed delta has {} entries but Z has {} columns",
                        d.len(),
                        design.z.ncols()
                    ));
                }
                design.x.ncols()
            }
            None => design.z.ncols() + design.x.ncols(),
        };
        if want != self.mean.len() {
            return invalid(format!(
                "prior has {} coefficients but the design needs {want}",
                self.mean.len()
            ));
        }
        Ok(())
    }
}

/// Sufficient statistics of a cluster: item count, summed response and
/// summed squared norm.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterStats {
    count: usize,
    sum_y: DVector<f64>,
    sum_yy: f64,
}

impl ClusterStats {
    pub fn empty(samples: usize) -> Self {
        ClusterStats {
            count: 0,
            sum_y: DVector::zeros(samples),
            sum_yy: 0.0,
        }
    }

    pub fn from_items<'a>(samples: usize, items: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut s = Self::empty(samples);
        for y in items {
            s.add(y);
        }
        s
    }

    pub fn add(&mut self, y: &[f64]) {
        debug_assert_eq!(y.len(), self.sum_y.len());
        self.count += 1;
        for (acc, v) in self.sum_y.iter_mut().zip(y) {
            *acc += v;
        }
        self.sum_yy += y.iter().map(|v| v * v).sum::<f64>();
    }

    pub fn remove(&mut self, y: &[f64]) {
        debug_assert!(self.count > 0);
        self.count -= 1;
        if self.count == 0 {
            // reset exactly rather than carrying rounding residue
            self.sum_y.fill(0.0);
            self.sum_yy = 0.0;
            return;
        }
        for (acc, v) in self.sum_y.iter_mut().zip(y) {
            *acc -= v;
        }
        self.sum_yy -= y.iter().map(|v| v * v).sum::<f64>();
    }

    pub fn merge(&mut self, other: &ClusterStats) {
        self.count += other.count;
        self.sum_y += &other.sum_y;
        self.sum_yy += other.sum_yy;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn samples(&self) -> usize {
        self.sum_y.len()
    }

    pub fn sum_y(&self) -> &DVector<f64> {
        &self.sum_y
    }

    pub fn sum_yy(&self) -> f64 {
        self.sum_yy
    }
}

#[derive(Debug, Clone)]
struct Factor {
    chol: Cholesky<f64, Dyn>,
    half_log_det: f64,
}

fn factor(t: DMatrix<f64>) -> Option<Factor> {
    let chol = Cholesky::new(t)?;
    let half_log_det = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    Some(Factor { chol, half_log_det })
}

/// A prior paired with a design, with everything that does not depend on
/// the data precomputed. Posterior precisions depend on the cluster only
/// through its size, so their factorizations are cached per size.
#[derive(Debug)]
pub struct NigModel {
    prior: NormalGammaSpec,
    samples: usize,
    /// Design of the random coefficients: `[Z X]`, or `X` for background.
    w: DMatrix<f64>,
    gram: DMatrix<f64>,
    /// Fixed mean shift per item (`Z δ₀`), zero for the regular variant.
    shift: DVector<f64>,
    prior_rhs: DVector<f64>,
    prior_quad: f64,
    prior_half_log_det: f64,
    ln_gamma_a: f64,
    factors: Vec<OnceLock<Factor>>,
}

impl Clone for NigModel {
    fn clone(&self) -> Self {
        NigModel {
            prior: self.prior.clone(),
            samples: self.samples,
            w: self.w.clone(),
            gram: self.gram.clone(),
            shift: self.shift.clone(),
            prior_rhs: self.prior_rhs.clone(),
            prior_quad: self.prior_quad,
            prior_half_log_det: self.prior_half_log_det,
            ln_gamma_a: self.ln_gamma_a,
            factors: (0..self.factors.len()).map(|_| OnceLock::new()).collect(),
        }
    }
}

impl NigModel {
    pub fn new(prior: &NormalGammaSpec, design: &DesignBlock) -> Result<Self> {
        Self::with_capacity(prior, design, 0)
    }

    /// Caches posterior factorizations for cluster sizes up to `max_size`.
    pub fn with_capacity(prior: &NormalGammaSpec, design: &DesignBlock, max_size: usize) -> Result<Self> {
        prior.validate()?;
        prior.check_design(design)?;
        let (w, shift) = match &prior.fixed_delta {
            Some(d0) => (design.x.clone(), &design.z * d0),
            None => (design.combined(), DVector::zeros(design.samples())),
        };
        let gram = w.transpose() * &w;
        let prior_rhs = &prior.precision * &prior.mean;
        let prior_quad = prior.mean.dot(&prior_rhs);
        let prior_half_log_det = if prior.precision.nrows() == 0 {
            0.0
        } else {
            factor(prior.precision.clone())
                .ok_or_else(|| Error::Numerical("prior precision is not positive definite".into()))?
                .half_log_det
        };
        Ok(NigModel {
            prior: prior.clone(),
            samples: design.samples(),
            w,
            gram,
            shift,
            prior_rhs,
            prior_quad,
            prior_half_log_det,
            ln_gamma_a: ln_gamma(prior.a),
            factors: (0..=max_size).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn prior(&self) -> &NormalGammaSpec {
        &self.prior
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    fn posterior_factor(&self, e: usize) -> std::borrow::Cow<'_, Factor> {
        let build = || {
            factor(&self.prior.precision + &self.gram * e as f64)
                .expect("prior precision plus a Gram matrix stays positive definite")
        };
        match self.factors.get(e) {
            Some(cell) => std::borrow::Cow::Borrowed(cell.get_or_init(build)),
            None => std::borrow::Cow::Owned(build()),
        }
    }

    /// Residual sums after removing the fixed shift: `(Σ r_i, Σ r_i'r_i)`.
    fn residual_sums(&self, stats: &ClusterStats) -> (DVector<f64>, f64) {
        let e = stats.count as f64;
        if self.prior.fixed_delta.is_none() {
            return (stats.sum_y.clone(), stats.sum_yy);
        }
        let sum_r = &stats.sum_y - &self.shift * e;
        let sum_rr = stats.sum_yy - 2.0 * self.shift.dot(&stats.sum_y) + e * self.shift.norm_squared();
        (sum_r, sum_rr)
    }

    /// Posterior `(a_n, b_n, m_n, t_n)` after observing the cluster.
    pub fn posterior(&self, stats: &ClusterStats) -> NormalGammaSpec {
        if stats.count == 0 {
            return self.prior.clone();
        }
        let (sum_r, sum_rr) = self.residual_sums(stats);
        let e = stats.count;
        let f = self.posterior_factor(e);
        let rhs = &self.prior_rhs + self.w.transpose() * sum_r;
        let mean = f.chol.solve(&rhs);
        let quad = mean.dot(&rhs);
        NormalGammaSpec {
            a: self.prior.a + (e * self.samples) as f64 / 2.0,
            b: self.prior.b + 0.5 * (sum_rr + self.prior_quad - quad),
            mean,
            precision: &self.prior.precision + &self.gram * e as f64,
            fixed_delta: self.prior.fixed_delta.clone(),
        }
    }

    /// Log marginal density of the cluster's stacked responses.
    pub fn log_marginal_stats(&self, stats: &ClusterStats) -> f64 {
        if stats.count == 0 {
            return 0.0;
        }
        let (sum_r, sum_rr) = self.residual_sums(stats);
        let e = stats.count;
        let big_n = (e * self.samples) as f64;
        let (quad, half_log_det_n) = if self.w.ncols() == 0 {
            (0.0, 0.0)
        } else {
            let f = self.posterior_factor(e);
            let rhs = &self.prior_rhs + self.w.transpose() * sum_r;
            let mut v = rhs;
            f.chol.l_dirty().solve_lower_triangular_mut(&mut v);
            (v.norm_squared(), f.half_log_det)
        };
        let a_n = self.prior.a + big_n / 2.0;
        let b_n = self.prior.b + 0.5 * (sum_rr + self.prior_quad - quad);
        -0.5 * big_n * (2.0 * PI).ln() + self.prior_half_log_det - half_log_det_n
            + self.prior.a * self.prior.b.ln()
            - a_n * b_n.ln()
            + ln_gamma(a_n)
            - self.ln_gamma_a
    }

    /// Predictive log-density of `item` given a cluster: a multivariate t
    /// with `2a_n` degrees of freedom, location `shift + W m_n` and scale
    /// `(b_n/a_n)(I + W t_n⁻¹ W')`, built from the posterior parameters.
    pub fn log_predictive_stats(&self, item: &[f64], cluster: &ClusterStats) -> Result<f64> {
        if item.len() != self.samples {
            return invalid("item length differs from the design");
        }
        let post = self.posterior(cluster);
        let mut scale = DMatrix::identity(self.samples, self.samples);
        let mut loc = self.shift.clone();
        if self.w.ncols() > 0 {
            let f = self.posterior_factor(cluster.count);
            scale += &self.w * f.chol.solve(&self.w.transpose());
            loc += &self.w * &post.mean;
        }
        scale *= post.b / post.a;
        log_mvt(&DVector::from_column_slice(item), 2.0 * post.a, &loc, &scale)
    }
}

/// Cluster-level marginal likelihood used by the Gibbs sampler.
pub trait MarginalLikelihood: Sync + std::fmt::Debug {
    type Stats: Clone + Send + Sync + std::fmt::Debug;

    fn empty_stats(&self) -> Self::Stats;
    fn add(&self, stats: &mut Self::Stats, y: &[f64]);
    fn remove(&self, stats: &mut Self::Stats, y: &[f64]);
    fn log_marginal(&self, stats: &Self::Stats) -> f64;

    /// Row length the likelihood expects, if it cares.
    fn samples(&self) -> Option<usize> {
        None
    }
}

impl MarginalLikelihood for NigModel {
    type Stats = ClusterStats;

    fn empty_stats(&self) -> ClusterStats {
        ClusterStats::empty(self.samples)
    }

    fn add(&self, stats: &mut ClusterStats, y: &[f64]) {
        stats.add(y)
    }

    fn remove(&self, stats: &mut ClusterStats, y: &[f64]) {
        stats.remove(y)
    }

    fn log_marginal(&self, stats: &ClusterStats) -> f64 {
        self.log_marginal_stats(stats)
    }

    fn samples(&self) -> Option<usize> {
        Some(self.samples)
    }
}

/// Likelihood that ignores the data: every cluster has marginal 1, so a
/// sampler driven by it explores the prior.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlatLikelihood;

impl MarginalLikelihood for FlatLikelihood {
    type Stats = usize;

    fn empty_stats(&self) -> usize {
        0
    }

    fn add(&self, stats: &mut usize, _y: &[f64]) {
        *stats += 1;
    }

    fn remove(&self, stats: &mut usize, _y: &[f64]) {
        *stats -= 1;
    }

    fn log_marginal(&self, _stats: &usize) -> f64 {
        0.0
    }
}

fn check_stats(stats: &ClusterStats, design: &DesignBlock) -> Result<()> {
    if stats.samples() != design.samples() {
        return invalid(format!(
            "statistics have {} samples but the design has {}",
            stats.samples(),
            design.samples()
        ));
    }
    Ok(())
}

/// Conjugate posterior of the cluster parameters.
pub fn posterior_update(
    prior: &NormalGammaSpec,
    stats: &ClusterStats,
    design: &DesignBlock,
) -> Result<NormalGammaSpec> {
    check_stats(stats, design)?;
    Ok(NigModel::new(prior, design)?.posterior(stats))
}

/// Marginal log-likelihood of a regular cluster.
pub fn log_marginal_regular(
    stats: &ClusterStats,
    design: &DesignBlock,
    prior: &NormalGammaSpec,
) -> Result<f64> {
    if prior.is_background() {
        return invalid("regular marginal needs a prior without fixed delta");
    }
    check_stats(stats, design)?;
    Ok(NigModel::new(prior, design)?.log_marginal_stats(stats))
}

/// Marginal log-likelihood of the background cluster (δ pinned at δ₀).
pub fn log_marginal_background(
    stats: &ClusterStats,
    design: &DesignBlock,
    prior: &NormalGammaSpec,
) -> Result<f64> {
    if !prior.is_background() {
        return invalid("background marginal needs a fixed delta");
    }
    check_stats(stats, design)?;
    Ok(NigModel::new(prior, design)?.log_marginal_stats(stats))
}

/// Posterior predictive log-density of one item given a cluster.
pub fn log_predictive(
    item: &[f64],
    cluster: &ClusterStats,
    design: &DesignBlock,
    prior: &NormalGammaSpec,
) -> Result<f64> {
    check_stats(cluster, design)?;
    if item.len() != design.samples() {
        return invalid("item length differs from the design");
    }
    NigModel::new(prior, design)?.log_predictive_stats(item, cluster)
}

/// Multivariate-t log-density with `dof` degrees of freedom, location
/// `mean` and scale matrix `scale`.
pub fn log_mvt(x: &DVector<f64>, dof: f64, mean: &DVector<f64>, scale: &DMatrix<f64>) -> Result<f64> {
    if !(dof.is_finite() && dof > 0.0) {
        return domain(format!("degrees of freedom must be > 0, got {dof}"));
    }
    let d = x.len();
    if mean.len() != d || scale.shape() != (d, d) {
        return invalid("dimension mismatch in multivariate t");
    }
    let f = factor(scale.clone())
        .ok_or_else(|| Error::Numerical("scale matrix is not positive definite".into()))?;
    let mut r = x - mean;
    f.chol.l_dirty().solve_lower_triangular_mut(&mut r);
    let q = r.norm_squared();
    let df = d as f64;
    Ok(ln_gamma((dof + df) / 2.0) - ln_gamma(dof / 2.0) - f.half_log_det
        - 0.5 * df * (dof * PI).ln()
        - 0.5 * (dof + df) * (q / dof).ln_1p())
}

/// Marginal density evaluated directly as a multivariate t over the
/// stacked `eS`-vector. Cubic in `eS`; the reference route for checking
/// the coefficient-space computation.
pub fn log_marginal_stacked(rows: &[&[f64]], design: &DesignBlock, prior: &NormalGammaSpec) -> Result<f64> {
    prior.validate()?;
    prior.check_design(design)?;
    if rows.is_empty() {
        return Ok(0.0);
    }
    let s = design.samples();
    let e = rows.len();
    let big = e * s;
    let (w, shift) = match &prior.fixed_delta {
        Some(d0) => (design.x.clone(), &design.z * d0),
        None => (design.combined(), DVector::zeros(s)),
    };
    let p = w.ncols();
    let mut stacked_w = DMatrix::zeros(big, p);
    let mut y = DVector::zeros(big);
    let mut mu = DVector::zeros(big);
    let item_mean = &shift + &w * &prior.mean;
    for (r, row) in rows.iter().enumerate() {
        if row.len() != s {
            return invalid("row length differs from the design");
        }
        stacked_w.view_mut((r * s, 0), (s, p)).copy_from(&w);
        for t in 0..s {
            y[r * s + t] = row[t];
            mu[r * s + t] = item_mean[t];
        }
    }
    let mut cov = DMatrix::identity(big, big);
    if p > 0 {
        let t_inv = prior
            .precision
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("prior precision is singular".into()))?;
        cov += &stacked_w * t_inv * stacked_w.transpose();
    }
    cov *= prior.b / prior.a;
    log_mvt(&y, 2.0 * prior.a, &mu, &cov)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_design() -> DesignBlock {
        DesignBlock::z_only(DMatrix::from_element(1, 1, 1.0)).unwrap()
    }

    #[test]
    fn cauchy_at_zero() {
        let v = log_mvt(
            &DVector::from_element(1, 0.0),
            1.0,
            &DVector::zeros(1),
            &DMatrix::identity(1, 1),
        )
        .unwrap();
        assert!((v - (1.0 / PI).ln()).abs() < 1e-14);
        assert!((v + 1.1447298858494).abs() < 1e-12);
    }

    #[test]
    fn mvt_rejects_non_spd() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            log_mvt(&DVector::zeros(2), 3.0, &DVector::zeros(2), &s),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn empty_cluster_returns_prior_and_zero() {
        let design = scalar_design();
        let prior = NormalGammaSpec::isotropic(1.0, 1.0, 1, 1.0).unwrap();
        let stats = ClusterStats::empty(1);
        assert_eq!(posterior_update(&prior, &stats, &design).unwrap(), prior);
        assert_eq!(log_marginal_regular(&stats, &design, &prior).unwrap(), 0.0);
    }

    #[test]
    fn scalar_posterior_mean() {
        let design = scalar_design();
        let (m0, t0, y) = (0.7, 2.5, 1.9);
        let prior = NormalGammaSpec::regular(
            1.5,
            0.5,
            DVector::from_element(1, m0),
            DMatrix::from_element(1, 1, t0),
        )
        .unwrap();
        let stats = ClusterStats::from_items(1, [&[y][..]]);
        let post = posterior_update(&prior, &stats, &design).unwrap();
        assert!((post.mean[0] - (y + t0 * m0) / (1.0 + t0)).abs() < 1e-14);
        assert!((post.precision[(0, 0)] - (1.0 + t0)).abs() < 1e-14);
        assert!((post.a - 2.0).abs() < 1e-14);
    }

    #[test]
    fn single_scalar_marginal_matches_t() {
        // e = 1, S = 1, z = 1, m = 0, t = 1, a = b = 1: t_2(y | 0, 2)
        let design = scalar_design();
        let prior = NormalGammaSpec::isotropic(1.0, 1.0, 1, 1.0).unwrap();
        let stats = ClusterStats::from_items(1, [&[0.0][..]]);
        let got = log_marginal_regular(&stats, &design, &prior).unwrap();
        let want = log_mvt(
            &DVector::zeros(1),
            2.0,
            &DVector::zeros(1),
            &DMatrix::from_element(1, 1, 2.0),
        )
        .unwrap();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn background_zero_delta_no_beta_is_spherical_t() {
        let z = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let design = DesignBlock::z_only(z).unwrap();
        let prior = NormalGammaSpec::background(
            2.0,
            3.0,
            DVector::zeros(0),
            DMatrix::zeros(0, 0),
            DVector::zeros(2),
        )
        .unwrap();
        let rows = [[0.3, -1.0, 2.0], [1.1, 0.4, -0.7]];
        let stats = ClusterStats::from_items(3, rows.iter().map(|r| &r[..]));
        let got = log_marginal_background(&stats, &design, &prior).unwrap();
        let y = DVector::from_iterator(6, rows.iter().flatten().copied());
        let want = log_mvt(&y, 4.0, &DVector::zeros(6), &(DMatrix::identity(6, 6) * 1.5)).unwrap();
        assert!((got - want).abs() < 1e-10);
    }

    #[test]
    fn shifting_by_fixed_delta_matches_zero_delta() {
        let z = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let x = DMatrix::from_row_slice(3, 1, &[0.5, -1.0, 2.0]);
        let design = DesignBlock::new(z.clone(), x).unwrap();
        let delta0 = DVector::from_vec(vec![0.4, -1.3]);
        let mk = |d: DVector<f64>| {
            NormalGammaSpec::background(1.2, 0.8, DVector::from_element(1, 0.2), DMatrix::from_element(1, 1, 0.7), d)
                .unwrap()
        };
        let rows = [[0.3, -1.0, 2.0], [1.1, 0.4, -0.7]];
        let shift = &z * &delta0;
        let shifted: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().zip(shift.iter()).map(|(a, b)| a + b).collect())
            .collect();
        let base = log_marginal_background(
            &ClusterStats::from_items(3, rows.iter().map(|r| &r[..])),
            &design,
            &mk(DVector::zeros(2)),
        )
        .unwrap();
        let moved = log_marginal_background(
            &ClusterStats::from_items(3, shifted.iter().map(|r| &r[..])),
            &design,
            &mk(delta0),
        )
        .unwrap();
        assert!((base - moved).abs() < 1e-10);
    }

    #[test]
    fn dimension_errors() {
        let design = scalar_design();
        let prior = NormalGammaSpec::isotropic(1.0, 1.0, 2, 1.0).unwrap();
        assert!(NigModel::new(&prior, &design).is_err());
        assert!(DesignBlock::new(DMatrix::zeros(2, 1), DMatrix::zeros(3, 0)).is_err());
        assert!(NormalGammaSpec::isotropic(0.0, 1.0, 1, 1.0).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(NormalGammaSpec::regular(1.0, 1.0, DVector::zeros(2), bad).is_err());
    }

    #[test]
    fn downdate_restores_marginal() {
        let z = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        let design = DesignBlock::z_only(z).unwrap();
        let prior = NormalGammaSpec::isotropic(0.5, 0.5, 2, 0.1).unwrap();
        let model = NigModel::new(&prior, &design).unwrap();
        let mut s = ClusterStats::from_items(2, [&[1.0, 2.0][..], &[0.5, 1.5][..]]);
        let before = model.log_marginal_stats(&s);
        s.add(&[10.0, -3.0]);
        s.remove(&[10.0, -3.0]);
        assert!((model.log_marginal_stats(&s) - before).abs() < 1e-10);
    }
}
