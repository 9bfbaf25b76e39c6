//! TOML experiment configuration.
//!
//! One file describes one experiment: the ensemble plus optional sections
//! for each pipeline stage. Any field can be overridden with dotted
//! `key=value` pairs, e.g. `equilibrium.grid=800` or `ensemble.theta=1`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::oracle::Event;
use crate::ensemble::{Ensemble, EnsembleSpec, Interval, WeightFamily, WeightScaling};
use crate::equilibrium::DEFAULT_TOLERANCE;
use crate::error::{Error, Result};
use crate::matrix_model::DEFAULT_CALIBRATION;
use crate::reference::ReferenceLaw;
use crate::sampler::ChainConfig;

pub const SCHEMA_VERSION: u32 = 1;

fn default_output_dir() -> String {
    "out".into()
}
fn default_thinning() -> usize {
    10
}
fn default_true() -> bool {
    true
}
fn default_one() -> usize {
    1
}
fn default_grid() -> usize {
    400
}
fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}
fn default_family_size() -> usize {
    256
}
fn default_draws() -> usize {
    200
}
fn default_calibration() -> f64 {
    DEFAULT_CALIBRATION
}
fn default_ns() -> Vec<usize> {
    vec![1, 2, 3]
}
fn default_ldp_tolerance() -> f64 {
    1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    pub ensemble: Ensemble,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equilibrium: Option<EquilibriumSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix_model: Option<MatrixModelSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ldp: Option<LdpSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSection>,
}

/// [`ChainConfig`] without the seed, which is global.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub n: usize,
    pub sweeps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[serde(default = "default_thinning")]
    pub thinning: usize,
    pub step_size: f64,
    #[serde(default = "default_true")]
    pub adapt: bool,
    #[serde(default = "default_one")]
    pub chains: usize,
}

impl SamplerSection {
    pub fn chain_config(&self, seed: u64) -> ChainConfig {
        ChainConfig {
            n: self.n,
            sweeps: self.sweeps,
            burn_in: self.burn_in,
            thinning: self.thinning,
            step_size: self.step_size,
            adapt: self.adapt,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumSection {
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// `[a, b]`; by default unbounded supports are truncated automatically.
    /// For Angelesco ensembles this applies to no species; use `truncations`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncate: Option<[f64; 2]>,
    /// One `[a, b]` per Angelesco species.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncations: Option<Vec<[f64; 2]>>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

impl Default for EquilibriumSection {
    fn default() -> Self {
        EquilibriumSection {
            grid: default_grid(),
            truncate: None,
            truncations: None,
            tolerance: default_tolerance(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Against {
    RhoInfinity,
    Semicircle,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    #[default]
    W1,
    Bl,
}

/// Which measure is compared with the reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    /// Pooled empirical measure from the `sampler` section.
    #[default]
    Sample,
    /// Grid minimizer from the `equilibrium` section.
    Equilibrium,
    /// Frequencies from the `matrix_model` section.
    MatrixModel,
    /// The reference itself (a self-check).
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub against: Against,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default)]
    pub source: Source,
    /// Largest acceptable distance; reported as pass/fail.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default = "default_family_size")]
    pub family_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixModelSection {
    pub n: usize,
    #[serde(default)]
    pub alpha: usize,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default = "default_calibration")]
    pub calibration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdpSection {
    /// `"g,t"` with `g` one of `x`, `x2`, `abs`.
    pub event: String,
    #[serde(default = "default_ns")]
    pub ns: Vec<usize>,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_ldp_tolerance")]
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
}

impl LdpSection {
    pub fn parsed_event(&self) -> Result<Event> {
        self.event.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncate: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<String>,
}

impl OracleSection {
    pub fn parsed_events(&self) -> Result<Vec<Event>> {
        self.events.iter().map(|e| e.parse()).collect()
    }
}

fn config_error(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

/// Sets `path` (dotted) in a TOML document, creating tables as needed. The
/// value is parsed as TOML and falls back to a plain string.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} must look like key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(|p| p.trim().is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let parts: Vec<&str> = key.split('.').map(str::trim).collect();
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {part:?} is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_str_with(text, &[])
    }

    /// Parses `text`, applies `overrides` in order, then validates.
    pub fn from_toml_str_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = text.parse().map_err(config_error)?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: ExperimentConfig = doc.try_into().map_err(config_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str_with(&text, overrides)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::numerical(format!("cannot serialize config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config(format!("seed {} does not fit a TOML integer", self.seed)));
        }
        self.ensemble.validate()?;
        if let Some(s) = &self.sampler {
            s.chain_config(self.seed).validate()?;
            if s.chains == 0 {
                return Err(Error::Config("sampler.chains must be at least 1".into()));
            }
        }
        if let Some(e) = &self.equilibrium {
            if e.grid < 2 {
                return Err(Error::Config("equilibrium.grid must be at least 2".into()));
            }
            if !(e.tolerance > 0.0) {
                return Err(Error::Config("equilibrium.tolerance must be positive".into()));
            }
            let check = |t: &[f64; 2], what: &str| {
                if !(t[0] < t[1]) || !t[0].is_finite() || !t[1].is_finite() {
                    return Err(Error::Config(format!(
                        "{what}: truncation [{}, {}] needs finite a < b",
                        t[0], t[1]
                    )));
                }
                Ok(())
            };
            if let Some(t) = &e.truncate {
                check(t, "equilibrium.truncate")?;
            }
            if let Some(ts) = &e.truncations {
                for t in ts {
                    check(t, "equilibrium.truncations")?;
                }
            }
        }
        if let Some(v) = &self.verify {
            if v.against != Against::Oracle {
                self.reference_law()?;
            }
            if v.family_size == 0 {
                return Err(Error::Config("verify.family_size must be at least 1".into()));
            }
        }
        if let Some(m) = &self.matrix_model {
            if m.n == 0 || m.draws == 0 {
                return Err(Error::Config("matrix_model.n and draws must be positive".into()));
            }
            if !(m.calibration > 0.0) {
                return Err(Error::Config("matrix_model.calibration must be positive".into()));
            }
        }
        if let Some(l) = &self.ldp {
            l.parsed_event()?;
            if l.ns.is_empty() {
                return Err(Error::Config("ldp.ns must list at least one n".into()));
            }
        }
        if let Some(o) = &self.oracle {
            o.parsed_events()?;
        }
        Ok(())
    }

    pub fn biorthogonal(&self) -> Result<&EnsembleSpec> {
        match &self.ensemble {
            Ensemble::Biorthogonal(s) => Ok(s),
            Ensemble::Angelesco(_) => Err(Error::Config(
                "this stage needs a biorthogonal ensemble".into(),
            )),
        }
    }

    /// Closed-form equilibrium law of the configured ensemble, if any.
    pub fn closed_form(&self) -> Option<ReferenceLaw> {
        let s = match &self.ensemble {
            Ensemble::Biorthogonal(s) => s,
            Ensemble::Angelesco(_) => return None,
        };
        if s.kappa != 1.0 || s.scaling != WeightScaling::Varying {
            return None;
        }
        match (s.theta, &s.weight) {
            (2, WeightFamily::PowerExp { alpha, tau })
                if *alpha == 0.0 && *tau == 1.0 && s.support == Interval::HALF_LINE =>
            {
                Some(ReferenceLaw::RhoInfinity)
            }
            (1, WeightFamily::GaussPower { alpha, tau })
                if *alpha == 0.0 && s.support == Interval::REAL_LINE =>
            {
                Some(ReferenceLaw::Semicircle {
                    radius: (2.0 / tau).sqrt(),
                })
            }
            _ => None,
        }
    }

    /// The reference named in `verify.against`, checked against the ensemble.
    pub fn reference_law(&self) -> Result<ReferenceLaw> {
        let v = self
            .verify
            .as_ref()
            .ok_or_else(|| Error::Config("missing [verify] section".into()))?;
        let law = self.closed_form();
        match (v.against, law) {
            (Against::RhoInfinity, Some(l @ ReferenceLaw::RhoInfinity)) => Ok(l),
            (Against::Semicircle, Some(l @ ReferenceLaw::Semicircle { .. })) => Ok(l),
            (Against::Oracle, _) => Err(Error::Config("the oracle is not a closed-form law".into())),
            (Against::RhoInfinity, _) => Err(Error::Config(
                "rho-infinity needs theta = 2, kappa = 1, varying power_exp weight with alpha = 0, tau = 1 on [0, inf)"
                    .into(),
            )),
            (Against::Semicircle, _) => Err(Error::Config(
                "semicircle needs theta = 1, kappa = 1, varying gauss_power weight with alpha = 0 on the real line"
                    .into(),
            )),
        }
    }
}
