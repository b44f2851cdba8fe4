//! Experiment configuration for the `gil` driver. Parsing is strict: any key
//! outside `schema/config.schema.json` is rejected before work starts.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::conditions::check_fcond;
use crate::error::{GilError, Result};
use crate::lattice::{Tilt, Torus};
use crate::oracle::QuadratureSpec;
use crate::potential::{Potential, PotentialSpec};
use crate::renorm::HessianMethod;
use crate::sampler::{ChainConfig, KGrid};

/// Largest accepted config file.
pub const MAX_CONFIG_BYTES: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub potential: PotentialSpec,
    pub d: usize,
    pub m: usize,
    pub beta: BetaSpec,
    #[serde(default)]
    pub u_grid: Vec<Vec<f64>>,
    /// Overrides `chain.seed` when present.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub chain: Option<ChainConfig>,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub k_grid: Option<KGrid>,
    #[serde(default)]
    pub check: CheckBlock,
    #[serde(default)]
    pub free_energy: FreeEnergyBlock,
    #[serde(default)]
    pub hessian: HessianBlock,
    #[serde(default)]
    pub lemma: LemmaBlock,
    #[serde(default)]
    pub sample: SampleBlock,
    /// Used when `--out` is not given.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

/// β directly, or as a fraction of the largest β allowed by the smallness
/// condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaSpec {
    Value(f64),
    Fraction(FcondFraction),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FcondFraction {
    pub fcond_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    #[default]
    Fcond,
    Alt9,
    Alt11,
    /// Any one of the three.
    Any,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckBlock {
    #[serde(default)]
    pub condition: Condition,
    /// Judge with the quadrature error added to every norm.
    #[serde(default)]
    pub pessimistic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeEnergyMethod {
    /// Oracle within the quadrature cap, integration otherwise.
    #[default]
    Auto,
    Oracle,
    Integration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeEnergyBlock {
    #[serde(default)]
    pub method: FreeEnergyMethod,
    /// Gauss–Legendre nodes on the straight path from 0 to u.
    #[serde(default = "default_path_nodes")]
    pub path_nodes: usize,
}

fn default_path_nodes() -> usize {
    32
}

impl Default for FreeEnergyBlock {
    fn default() -> Self {
        FreeEnergyBlock { method: FreeEnergyMethod::Auto, path_nodes: default_path_nodes() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HessianBlock {
    #[serde(default = "auto_method")]
    pub method: HessianMethod,
}

fn auto_method() -> HessianMethod {
    HessianMethod::Auto
}

impl Default for HessianBlock {
    fn default() -> Self {
        HessianBlock { method: HessianMethod::Auto }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaBlock {
    /// Defaults to 1/(2C̄).
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub axis: usize,
    #[serde(default)]
    pub site: usize,
    /// Tilt in unscaled units; defaults to the first `u_grid` entry, else 0.
    #[serde(default)]
    pub u: Option<Vec<f64>>,
    /// Random unit linear observables for the variance bound.
    #[serde(default = "default_observables")]
    pub observables: usize,
}

fn default_observables() -> usize {
    5
}

impl Default for LemmaBlock {
    fn default() -> Self {
        LemmaBlock { lambda: None, axis: 0, site: 0, u: None, observables: default_observables() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleBlock {
    /// Field file (`gil-field v1`) used as the start state.
    #[serde(default)]
    pub start_field: Option<PathBuf>,
    /// Also write the last state of every chain next to the output.
    #[serde(default)]
    pub snapshot: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        if text.len() > MAX_CONFIG_BYTES {
            return Err(GilError::Config(format!("config exceeds {MAX_CONFIG_BYTES} bytes")));
        }
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| GilError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GilError::Config(m));
        self.torus()?;
        self.potential.build()?;
        match self.beta {
            BetaSpec::Value(b) if !(b > 0.0 && b.is_finite()) => return bad(format!("beta must be > 0, got {b}")),
            BetaSpec::Fraction(FcondFraction { fcond_fraction: f }) if !(f > 0.0 && f.is_finite()) => {
                return bad(format!("fcond_fraction must be > 0, got {f}"))
            }
            _ => {}
        }
        for (k, u) in self.u_grid.iter().enumerate() {
            if u.len() != self.d {
                return bad(format!("u_grid[{k}] has {} entries, expected d = {}", u.len(), self.d));
            }
            if u.iter().any(|x| !x.is_finite()) {
                return bad(format!("u_grid[{k}] is not finite"));
            }
        }
        if let Some(c) = &self.chain {
            c.validate().map_err(|e| GilError::Config(e.to_string()))?;
        }
        self.quadrature.validate().map_err(|e| GilError::Config(e.to_string()))?;
        if self.free_energy.path_nodes == 0 {
            return bad("free_energy.path_nodes must be >= 1".into());
        }
        if let Some(u) = &self.lemma.u {
            if u.len() != self.d || u.iter().any(|x| !x.is_finite()) {
                return bad(format!("lemma.u needs {} finite entries", self.d));
            }
        }
        if self.lemma.axis >= self.d {
            return bad(format!("lemma.axis must be below d = {}", self.d));
        }
        Ok(())
    }

    pub fn torus(&self) -> Result<Torus> {
        Torus::new(self.d, self.m).map_err(|e| GilError::Config(e.to_string()))
    }

    pub fn potential(&self) -> Result<Potential> {
        self.potential.build()
    }

    pub fn grid(&self) -> Vec<Tilt> {
        self.u_grid.iter().map(|u| Tilt(u.clone())).collect()
    }

    /// Working β, resolving a threshold fraction against the computed norms.
    pub fn resolve_beta(&self) -> Result<f64> {
        match self.beta {
            BetaSpec::Value(b) => Ok(b),
            BetaSpec::Fraction(FcondFraction { fcond_fraction }) => {
                let p = self.potential()?;
                let report = check_fcond(1.0, self.d, &p, &p.norms(1e-10)?)?;
                if !report.beta_max_fcond.is_finite() {
                    return Err(GilError::Config("fcond_fraction needs a finite threshold; give beta directly".into()));
                }
                Ok(fcond_fraction * report.beta_max_fcond)
            }
        }
    }

    /// The chain block with the top-level seed applied, or a config error
    /// naming the command that needs it.
    pub fn chain_for(&self, command: &str, seed_override: Option<u64>) -> Result<ChainConfig> {
        let mut c = self.chain.clone().ok_or_else(|| GilError::Config(format!("{command} needs a \"chain\" block")))?;
        if let Some(s) = seed_override.or(self.seed) {
            c.seed = s;
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"{
        "potential": {"family": "example_b", "delta": 0.5},
        "d": 1, "m": 3,
        "beta": {"fcond_fraction": 0.5},
        "u_grid": [[0.0], [0.25]],
        "seed": 7,
        "chain": {"step_size": 0.5, "n_steps": 2000, "burn_in": 200},
        "quadrature": {"nodes_per_dim": 8, "rule": "auto"},
        "k_grid": {"points": 401},
        "check": {"condition": "fcond", "pessimistic": false},
        "free_energy": {"method": "auto", "path_nodes": 32},
        "hessian": {"method": "oracle"},
        "lemma": {"lambda": 0.3, "axis": 0, "site": 1, "u": [0.1], "observables": 5},
        "sample": {"snapshot": true},
        "out": "out.csv"
    }"#;

    #[test]
    fn full_config_parses() {
        let c = ExperimentConfig::from_json(FULL).unwrap();
        assert_eq!(c.seed, Some(7));
        assert_eq!(c.hessian.method, HessianMethod::Oracle);
        assert_eq!(c.chain_for("sample", None).unwrap().seed, 7);
        assert_eq!(c.chain_for("sample", Some(9)).unwrap().seed, 9);
        let b = c.resolve_beta().unwrap();
        assert!(b > 0.09 && b < 0.095, "{b}");
    }

    #[test]
    fn minimal_config_defaults() {
        let c = ExperimentConfig::from_json(r#"{"potential":{"family":"gaussian"},"d":2,"m":3,"beta":1.0}"#).unwrap();
        assert!(c.u_grid.is_empty());
        assert_eq!(c.free_energy.path_nodes, 32);
        assert_eq!(c.quadrature, QuadratureSpec::default());
        assert!(c.chain_for("sample", None).is_err());
        assert_eq!(c.resolve_beta().unwrap(), 1.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        for text in [
            r#"{"potential":{"family":"gaussian"},"d":1,"m":3,"beta":1.0,"extra":1}"#,
            r#"{"potential":{"family":"gaussian","a":1},"d":1,"m":3,"beta":1.0}"#,
            r#"{"potential":{"family":"gaussian"},"d":1,"m":3,"beta":{"fcond_fraction":0.5,"x":1}}"#,
            r#"{"potential":{"family":"gaussian"},"d":1,"m":3,"beta":1.0,"quadrature":{"nodes":8}}"#,
            r#"{"potential":{"family":"gaussian"},"d":1,"m":3,"beta":1.0,"lemma":{"k":1}}"#,
        ] {
            assert!(matches!(ExperimentConfig::from_json(text), Err(GilError::Config(_))), "{text}");
        }
    }

    #[test]
    fn semantic_errors_rejected() {
        for text in [
            r#"{"potential":{"family":"gaussian"},"d":1,"m":3,"beta":-1.0}"#,
            r#"{"potential":{"family":"gaussian"},"d":1,"m":1,"beta":1.0}"#,
            r#"{"potential":{"family":"gaussian"},"d":1,"m":3,"beta":1.0,"u_grid":[[0.0,1.0]]}"#,
            r#"{"potential":{"family":"example_a","a":-1},"d":1,"m":3,"beta":1.0}"#,
            r#"{"potential":{"family":"gaussian"},"d":1,"m":3,"beta":1.0,"lemma":{"axis":1}}"#,
        ] {
            assert!(ExperimentConfig::from_json(text).is_err(), "{text}");
        }
        let g = ExperimentConfig::from_json(r#"{"potential":{"family":"gaussian"},"d":1,"m":3,"beta":{"fcond_fraction":0.5}}"#).unwrap();
        assert!(g.resolve_beta().is_err());
    }

    fn keys(v: &serde_json::Value) -> Vec<String> {
        let mut k: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
        k.sort();
        k
    }

    #[test]
    fn schema_lists_every_key() {
        let schema: serde_json::Value = serde_json::from_str(include_str!("../schema/config.schema.json")).unwrap();
        let full: serde_json::Value = serde_json::to_value(ExperimentConfig::from_json(FULL).unwrap()).unwrap();
        assert_eq!(keys(&schema["properties"]), keys(&full));
        assert_eq!(schema["additionalProperties"], serde_json::Value::Bool(false));
        for block in ["chain", "quadrature", "k_grid", "check", "free_energy", "hessian", "lemma", "sample"] {
            let def = &schema["$defs"][block];
            assert_eq!(keys(&def["properties"]), keys(&full[block]), "{block}");
            assert_eq!(def["additionalProperties"], serde_json::Value::Bool(false), "{block}");
        }
    }
}
