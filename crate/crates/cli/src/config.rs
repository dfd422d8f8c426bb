//! Run configuration, named presets and the model objects built from them.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dpclust::conjugate::{DesignBlock, NigModel, NormalGammaSpec};
use dpclust::estimation::{LossSpec, SearchStrategy};
use dpclust::exec::Execution;
use dpclust::gibbs::SweepPlan;
use dpclust::prior::{PartitionPriorModel, PriorFamily};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// A precision matrix given either as `c` (meaning `c·I`) or in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scale(f64),
    Full(Vec<Vec<f64>>),
}

impl MatrixSpec {
    fn build(&self, dim: usize, what: &str) -> Result<DMatrix<f64>> {
        match self {
            MatrixSpec::Scale(c) => Ok(DMatrix::identity(dim, dim) * *c),
            MatrixSpec::Full(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    bail!("{what} must be {dim}×{dim}");
                }
                Ok(DMatrix::from_row_iterator(dim, dim, rows.iter().flatten().copied()))
            }
        }
    }
}

fn vector(v: &Option<Vec<f64>>, dim: usize, what: &str) -> Result<DVector<f64>> {
    match v {
        None => Ok(DVector::zeros(dim)),
        Some(v) if v.len() == dim => Ok(DVector::from_column_slice(v)),
        Some(v) => bail!("{what} has length {} but {dim} is needed", v.len()),
    }
}

fn default_t_beta() -> MatrixSpec {
    MatrixSpec::Scale(0.01)
}

/// Normal-gamma hyperparameters. `a`, `b`, `m_delta`, `t_delta`,
/// `m_beta`, `t_beta` govern regular clusters; the background cluster of
/// the background model fixes δ at `delta0` and uses `background` for its
/// own `(a, b, m_beta, t_beta)` when given, the regular values otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub a: f64,
    pub b: f64,
    #[serde(default)]
    pub m_delta: Option<Vec<f64>>,
    pub t_delta: MatrixSpec,
    #[serde(default)]
    pub m_beta: Option<Vec<f64>>,
    #[serde(default = "default_t_beta")]
    pub t_beta: MatrixSpec,
    #[serde(default)]
    pub delta0: Option<Vec<f64>>,
    #[serde(default)]
    pub background: Option<BackgroundPrior>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundPrior {
    pub a: f64,
    pub b: f64,
    #[serde(default)]
    pub m_beta: Option<Vec<f64>>,
    #[serde(default = "default_t_beta")]
    pub t_beta: MatrixSpec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    /// CSV for Z (samples × K′); default is the developmental-time matrix
    /// for nine samples, intercept plus slope otherwise.
    #[serde(default)]
    pub z: Option<PathBuf>,
    /// CSV for X (samples × K); default none.
    #[serde(default)]
    pub x: Option<PathBuf>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: PathBuf,
    /// Annotation column for the cross-tabulation.
    #[serde(default)]
    pub annotation: Option<String>,
    pub model: PriorFamily,
    pub prior: PriorConfig,
    #[serde(default)]
    pub design: DesignConfig,
    pub plan: SweepPlan,
    #[serde(default = "one")]
    pub chains: usize,
    #[serde(default)]
    pub loss: LossSpec,
    #[serde(default)]
    pub strategy: SearchStrategy,
    #[serde(default)]
    pub execution: Execution,
}

pub const PRESETS: [&str; 1] = ["wen-rat"];

/// Preset as a JSON object; `data` is left for the caller.
pub fn preset(name: &str) -> Result<Value> {
    match name {
        // background model, θ = 1, γ = 5, a = b = 0.01, zero means,
        // 0.01·I precisions, δ₀ = 0, 20000 sweeps with 10000 burn-in
        "wen-rat" => Ok(serde_json::json!({
            "model": { "family": "background_cdp", "gamma": 5.0, "theta": 1.0 },
            "prior": { "a": 0.01, "b": 0.01, "t_delta": 0.01, "t_beta": 0.01 },
            "plan": { "sweeps": 20000, "burn_in": 10000, "thin": 1, "subset_move_rate": 0.0, "seed": 1 },
            "chains": 1
        })),
        other => bail!("unknown preset '{other}' (known: {})", PRESETS.join(", ")),
    }
}

fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, t) => *b = t,
    }
}

/// Command-line overrides applied on top of a config file or preset.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<String>,
    pub data: Option<PathBuf>,
    pub seed: Option<u64>,
    pub chains: Option<usize>,
}

/// Assembles the config from an optional JSON file (a plain config, a
/// config with a `"preset"` key, or a run manifest), a preset and flags.
/// Relative paths in the file resolve against the file's directory and
/// are stored absolute.
pub fn resolve_config(file: Option<&Path>, over: &Overrides) -> Result<RunConfig> {
    let mut value = Value::Object(Default::default());
    let mut base_dir = std::env::current_dir()?;
    let mut file_value = None;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let mut v: Value =
            serde_json::from_str(&text).with_context(|| format!("{}: invalid JSON", path.display()))?;
        if let Some(inner) = v.get_mut("config").map(Value::take) {
            v = inner;
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            base_dir = std::path::absolute(dir)?;
        }
        file_value = Some(v);
    }
    let preset_name = over.preset.clone().or_else(|| {
        file_value
            .as_mut()
            .and_then(|v| v.as_object_mut())
            .and_then(|o| o.remove("preset"))
            .and_then(|p| p.as_str().map(String::from))
    });
    if let Some(name) = preset_name {
        value = preset(&name)?;
    }
    if let Some(v) = file_value {
        let resolve = |v: &mut Value| {
            if let Some(s) = v.as_str() {
                let p = Path::new(s);
                if p.is_relative() {
                    *v = Value::String(base_dir.join(p).to_string_lossy().into_owned());
                }
            }
        };
        let mut v = v;
        if let Some(d) = v.get_mut("data") {
            resolve(d);
        }
        if let Some(design) = v.get_mut("design").and_then(Value::as_object_mut) {
            for key in ["z", "x"] {
                if let Some(p) = design.get_mut(key) {
                    resolve(p);
                }
            }
        }
        merge(&mut value, v);
    }
    let obj = value.as_object_mut().expect("object");
    if let Some(d) = &over.data {
        obj.insert("data".into(), Value::String(std::path::absolute(d)?.to_string_lossy().into_owned()));
    }
    if let Some(c) = over.chains {
        obj.insert("chains".into(), Value::from(c));
    }
    if let Some(s) = over.seed {
        match obj.get_mut("plan").and_then(Value::as_object_mut) {
            Some(plan) => {
                plan.insert("seed".into(), Value::from(s));
            }
            None => bail!("--seed given but the config has no plan"),
        }
    }
    if !obj.contains_key("data") {
        bail!("no data file given (use --data or a \"data\" entry)");
    }
    let cfg: RunConfig = serde_json::from_value(value).context("invalid run configuration")?;
    Ok(cfg)
}

/// Model objects built from a validated config.
pub struct BuiltModel {
    pub prior_model: PartitionPriorModel,
    /// One likelihood per colour.
    pub likelihoods: Vec<NigModel>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        PartitionPriorModel::new(self.model.clone())?;
        self.plan.validate()?;
        self.loss.validate()?;
        if self.chains == 0 {
            bail!("chains must be at least 1");
        }
        Ok(())
    }

    /// Prior model and per-colour likelihoods for `design`, caching
    /// factorizations for clusters of up to `n` items.
    pub fn build(&self, design: &DesignBlock, n: usize) -> Result<BuiltModel> {
        let prior_model = PartitionPriorModel::new(self.model.clone())?;
        let p = &self.prior;
        let kz = design.z().ncols();
        let kx = design.x().ncols();
        let regular = NormalGammaSpec::regular_blocks(
            p.a,
            p.b,
            vector(&p.m_delta, kz, "m_delta")?,
            p.t_delta.build(kz, "t_delta")?,
            vector(&p.m_beta, kx, "m_beta")?,
            p.t_beta.build(kx, "t_beta")?,
        )?;
        let regular_model = NigModel::with_capacity(&regular, design, n)?;
        let likelihoods = match &self.model {
            PriorFamily::BackgroundCdp { .. } => {
                let (a, b, m_beta, t_beta) = match &p.background {
                    Some(bg) => (bg.a, bg.b, &bg.m_beta, &bg.t_beta),
                    None => (p.a, p.b, &p.m_beta, &p.t_beta),
                };
                let background = NormalGammaSpec::background(
                    a,
                    b,
                    vector(m_beta, kx, "background m_beta")?,
                    t_beta.build(kx, "background t_beta")?,
                    vector(&p.delta0, kz, "delta0")?,
                )?;
                vec![NigModel::with_capacity(&background, design, n)?, regular_model]
            }
            _ => vec![regular_model; prior_model.num_colours()],
        };
        Ok(BuiltModel { prior_model, likelihoods })
    }
}
