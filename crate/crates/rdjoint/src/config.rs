//! Run configuration for the data-analysis path: JSON config files,
//! command-line overrides (flags win, with a provenance note), and
//! validation that names the offending field.

use crate::boundary::{rot_bandwidth, ROT_C_DEFAULT};
use crate::covariance::NEIGHBORS_M_DEFAULT;
use crate::error::RdError;
use crate::joint::{Procedure, MC_DRAWS_DEFAULT};
use crate::kernel::KernelKind;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// A bandwidth setting: the keyword `"auto"` (rule-of-thumb), a single
/// number, or one number per covariate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BandwidthSpec {
    Value(f64),
    Values(Vec<f64>),
    Keyword(String),
}

impl Default for BandwidthSpec {
    fn default() -> Self {
        BandwidthSpec::Keyword("auto".to_string())
    }
}

impl BandwidthSpec {
    pub fn is_auto(&self) -> bool {
        matches!(self, BandwidthSpec::Keyword(k) if k == "auto")
    }

    fn validate(&self, field: &str) -> Result<(), RdError> {
        match self {
            BandwidthSpec::Keyword(k) if k == "auto" => Ok(()),
            BandwidthSpec::Keyword(k) => Err(RdError::InvalidConfig(format!(
                "{field}: unknown keyword {k:?} (expected \"auto\", a number, or an array)"
            ))),
            BandwidthSpec::Value(v) => {
                if v.is_finite() && *v > 0.0 {
                    Ok(())
                } else {
                    Err(RdError::InvalidConfig(format!(
                        "{field}: bandwidths must be positive and finite, got {v}"
                    )))
                }
            }
            BandwidthSpec::Values(vs) => {
                if vs.is_empty() {
                    return Err(RdError::InvalidConfig(format!(
                        "{field}: bandwidth array must not be empty"
                    )));
                }
                for v in vs {
                    if !v.is_finite() || *v <= 0.0 {
                        return Err(RdError::InvalidConfig(format!(
                            "{field}: bandwidths must be positive and finite, got {v}"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// Per-covariate bandwidths; the boolean reports whether the
    /// rule-of-thumb was used.
    pub fn resolve_means(
        &self,
        x: &[f64],
        d: usize,
        l: usize,
    ) -> Result<(Vec<f64>, bool), RdError> {
        match self {
            BandwidthSpec::Keyword(_) => {
                let h = rot_bandwidth(x, l, ROT_C_DEFAULT);
                if !(h > 0.0) {
                    return Err(RdError::DegenerateSample(
                        "rule-of-thumb bandwidth is zero (constant running variable)".to_string(),
                    ));
                }
                Ok((vec![h; d], true))
            }
            BandwidthSpec::Value(v) => Ok((vec![*v; d], false)),
            BandwidthSpec::Values(vs) => {
                if vs.len() != d {
                    return Err(RdError::InvalidConfig(format!(
                        "bandwidths: got {} values for {d} covariates",
                        vs.len()
                    )));
                }
                Ok((vs.clone(), false))
            }
        }
    }

    /// The single density bandwidth; the boolean reports whether the
    /// rule-of-thumb was used.
    pub fn resolve_density(&self, x: &[f64], p: usize) -> Result<(f64, bool), RdError> {
        match self {
            BandwidthSpec::Keyword(_) => {
                let h = rot_bandwidth(x, p, ROT_C_DEFAULT);
                if !(h > 0.0) {
                    return Err(RdError::DegenerateSample(
                        "rule-of-thumb bandwidth is zero (constant running variable)".to_string(),
                    ));
                }
                Ok((h, true))
            }
            BandwidthSpec::Value(v) => Ok((*v, false)),
            BandwidthSpec::Values(vs) if vs.len() == 1 => Ok((vs[0], false)),
            BandwidthSpec::Values(_) => Err(RdError::InvalidConfig(
                "h_f: the density takes a single bandwidth".to_string(),
            )),
        }
    }
}

/// Settings for one diagnostic run. Every field has a default except
/// `seed`, which must be supplied explicitly so reports are reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Subtracted from the running variable before analysis.
    pub cutoff: f64,
    pub kernel: KernelKind,
    /// Polynomial order of the covariate-mean fits.
    pub l: usize,
    /// Polynomial order of the density fit.
    pub p: usize,
    /// Covariate bandwidths.
    pub bandwidths: BandwidthSpec,
    /// Density bandwidth.
    pub h_f: BandwidthSpec,
    /// Test level, in (0, 1).
    pub alpha: f64,
    pub neighbors_m: usize,
    pub mc_draws: usize,
    pub seed: Option<u64>,
    pub procedures: Vec<Procedure>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            cutoff: 0.0,
            kernel: KernelKind::Triangular,
            l: 2,
            p: 3,
            bandwidths: BandwidthSpec::default(),
            h_f: BandwidthSpec::default(),
            alpha: 0.05,
            neighbors_m: NEIGHBORS_M_DEFAULT,
            mc_draws: MC_DRAWS_DEFAULT,
            seed: None,
            procedures: Procedure::ALL.to_vec(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), RdError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(RdError::InvalidConfig(format!(
                "alpha: must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.l < 1 || self.p < 1 {
            return Err(RdError::InvalidConfig(format!(
                "l, p: polynomial orders must be at least 1, got l = {}, p = {}",
                self.l, self.p
            )));
        }
        if self.neighbors_m < 1 {
            return Err(RdError::InvalidConfig(
                "neighbors_m: must be at least 1".to_string(),
            ));
        }
        if self.mc_draws < 1 {
            return Err(RdError::InvalidConfig(
                "mc_draws: must be at least 1".to_string(),
            ));
        }
        if self.seed.is_none() {
            return Err(RdError::InvalidConfig(
                "seed: required, no silent default".to_string(),
            ));
        }
        if self.procedures.is_empty() {
            return Err(RdError::InvalidConfig(
                "procedures: at least one procedure is required".to_string(),
            ));
        }
        let mut seen = Vec::new();
        for p in &self.procedures {
            if seen.contains(p) {
                return Err(RdError::InvalidConfig(format!(
                    "procedures: duplicate entry {p}"
                )));
            }
            seen.push(*p);
        }
        self.bandwidths.validate("bandwidths")?;
        self.h_f.validate("h_f")?;
        Ok(())
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct CliOverrides {
    pub cutoff: Option<f64>,
    pub kernel: Option<KernelKind>,
    pub l: Option<usize>,
    pub p: Option<usize>,
    pub bandwidths: Option<BandwidthSpec>,
    pub h_f: Option<BandwidthSpec>,
    pub alpha: Option<f64>,
    pub neighbors_m: Option<usize>,
    pub mc_draws: Option<usize>,
    pub seed: Option<u64>,
    pub procedures: Option<Vec<Procedure>>,
}

/// Load a config file (if any), apply command-line overrides, validate.
/// Returns the effective config plus provenance notes for every field
/// where a flag overrode a config-file value.
pub fn parse_config(
    path: Option<&Path>,
    overrides: &CliOverrides,
) -> Result<(RunConfig, Vec<String>), RdError> {
    let mut config = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str::<RunConfig>(&text)?
        }
        None => RunConfig::default(),
    };
    let mut notes = Vec::new();
    let from_file = path.is_some();
    macro_rules! apply {
        ($field:ident) => {
            if let Some(value) = overrides.$field.clone() {
                if from_file {
                    notes.push(format!(
                        "{}: command-line flag overrides the config file",
                        stringify!($field)
                    ));
                }
                config.$field = value;
            }
        };
    }
    apply!(kernel);
    apply!(bandwidths);
    apply!(h_f);
    apply!(procedures);
    if let Some(v) = overrides.cutoff {
        if from_file {
            notes.push("cutoff: command-line flag overrides the config file".to_string());
        }
        config.cutoff = v;
    }
    if let Some(v) = overrides.l {
        if from_file {
            notes.push("l: command-line flag overrides the config file".to_string());
        }
        config.l = v;
    }
    if let Some(v) = overrides.p {
        if from_file {
            notes.push("p: command-line flag overrides the config file".to_string());
        }
        config.p = v;
    }
    if let Some(v) = overrides.alpha {
        if from_file {
            notes.push("alpha: command-line flag overrides the config file".to_string());
        }
        config.alpha = v;
    }
    if let Some(v) = overrides.neighbors_m {
        if from_file {
            notes.push("neighbors_m: command-line flag overrides the config file".to_string());
        }
        config.neighbors_m = v;
    }
    if let Some(v) = overrides.mc_draws {
        if from_file {
            notes.push("mc_draws: command-line flag overrides the config file".to_string());
        }
        config.mc_draws = v;
    }
    if let Some(v) = overrides.seed {
        if from_file {
            notes.push("seed: command-line flag overrides the config file".to_string());
        }
        config.seed = Some(v);
    }
    config.validate()?;
    Ok((config, notes))
}
