//! Run configuration: TOML parsing, defaults, validation, and conversion
//! into the solver's native types.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pfsi::driver::{
    suggested_omega, Acceleration, ContinuationSchedule, ForcingMode, ForcingSpec,
    PhysicalParams, Stage, SubSolveOrder,
};
use pfsi::geometry::DomainSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub length: f64,
    pub half_height: f64,
    pub period: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    pub gamma: f64,
    pub mass: f64,
    #[serde(default = "default_one")]
    pub mu: f64,
    #[serde(default = "default_one")]
    pub zeta: f64,
    #[serde(default = "default_a")]
    pub a: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationConfig {
    /// number of retained time harmonics
    pub m: usize,
    /// number of beam modes
    pub n_beam: usize,
    /// number of fluid vector modes
    pub n_fluid: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub amplitude: f64,
    pub space_mode: usize,
    pub time_mode: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingConfig {
    #[serde(default)]
    pub beam: Vec<ModeConfig>,
    #[serde(default)]
    pub fluid: Vec<ModeConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderConfig {
    #[default]
    Lagged,
    FreshStructure,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub eps: f64,
    pub delta: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// per-stage relaxation weight; defaults to a value scaled with eps
    #[serde(default)]
    pub omega: Option<f64>,
    /// Anderson mixing history depth; 0 = plain relaxation
    #[serde(default = "default_depth")]
    pub anderson_depth: usize,
    /// per-stage basis overrides; default to [discretization]
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub n_beam: Option<usize>,
    #[serde(default)]
    pub n_fluid: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default)]
    pub order: OrderConfig,
    pub stages: Vec<StageConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub physics: PhysicsConfig,
    pub discretization: DiscretizationConfig,
    #[serde(default)]
    pub forcing: ForcingConfig,
    /// optional explicit continuation schedule; default is three stages with
    /// (eps, delta) decreasing one decade per stage from 1e-1 to 1e-3
    #[serde(default)]
    pub schedule: Option<ScheduleConfig>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn default_one() -> f64 {
    1.0
}
fn default_a() -> f64 {
    5.0
}
fn default_tol() -> f64 {
    1e-11
}
fn default_max_iters() -> usize {
    4000
}
fn default_omega() -> f64 {
    0.5
}
fn default_depth() -> usize {
    8
}

/// Parse and validate a configuration file. Syntax errors carry the TOML
/// location; semantic violations name the offending field.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let cfg: RunConfig = toml::from_str(&text)
        .with_context(|| format!("syntax error in {}", path.display()))?;
    validate(&cfg)?;
    Ok(cfg)
}

pub fn validate(cfg: &RunConfig) -> Result<()> {
    let d = &cfg.domain;
    if !(d.length > 0.0 && d.half_height > 0.0 && d.period > 0.0) {
        bail!("domain.length, domain.half_height, domain.period: all must be positive");
    }
    let p = &cfg.physics;
    if !(p.gamma > 1.0) {
        bail!(
            "physics.gamma: the model requires gamma > 1 (got {})",
            p.gamma
        );
    }
    if !(p.mass > 0.0) {
        bail!("physics.mass: total mass must be positive (got {})", p.mass);
    }
    if !(p.mu > 0.0) {
        bail!("physics.mu: shear viscosity must be positive (got {})", p.mu);
    }
    if !(p.zeta > 0.0) {
        bail!(
            "physics.zeta: bulk viscosity must be positive (got {})",
            p.zeta
        );
    }
    if !(p.a >= 2.0) {
        bail!(
            "physics.a: artificial-pressure exponent must be at least 2 (got {})",
            p.a
        );
    }
    let disc = &cfg.discretization;
    if disc.m == 0 || disc.n_beam == 0 || disc.n_fluid < 2 {
        bail!("discretization: need m >= 1, n_beam >= 1, n_fluid >= 2");
    }
    if let Some(s) = &cfg.schedule {
        if s.stages.is_empty() {
            bail!("schedule.stages: at least one stage is required");
        }
        if !(s.omega > 0.0 && s.omega <= 1.0) {
            bail!("schedule.omega: must lie in (0, 1] (got {})", s.omega);
        }
        for (i, st) in s.stages.iter().enumerate() {
            if !(st.eps > 0.0 && st.delta > 0.0) {
                bail!("schedule.stages[{i}]: eps and delta must be positive");
            }
            if let Some(w) = st.omega {
                if !(w > 0.0 && w <= 1.0) {
                    bail!("schedule.stages[{i}].omega: must lie in (0, 1] (got {w})");
                }
            }
        }
    }
    Ok(())
}

impl RunConfig {
    pub fn domain_spec(&self) -> Result<DomainSpec> {
        Ok(DomainSpec::new(
            self.domain.length,
            self.domain.half_height,
            self.domain.period,
        )?)
    }

    pub fn physical_params(&self) -> PhysicalParams {
        PhysicalParams {
            gamma: self.physics.gamma,
            a_exp: self.physics.a,
            mu: self.physics.mu,
            zeta: self.physics.zeta,
            mass: self.physics.mass,
        }
    }

    pub fn forcing_spec(&self) -> ForcingSpec {
        let conv = |m: &ModeConfig| ForcingMode {
            amplitude: m.amplitude,
            space_mode: m.space_mode,
            time_mode: m.time_mode,
        };
        ForcingSpec {
            beam: self.forcing.beam.iter().map(conv).collect(),
            fluid: self.forcing.fluid.iter().map(conv).collect(),
        }
    }

    pub fn continuation_schedule(&self) -> ContinuationSchedule {
        let d = self.discretization;
        match &self.schedule {
            None => ContinuationSchedule::default_for(d.m, d.n_beam, d.n_fluid),
            Some(s) => ContinuationSchedule {
                stages: s
                    .stages
                    .iter()
                    .map(|st| Stage {
                        m: st.m.unwrap_or(d.m),
                        n_beam: st.n_beam.unwrap_or(d.n_beam),
                        n_fluid: st.n_fluid.unwrap_or(d.n_fluid),
                        eps: st.eps,
                        delta: st.delta,
                        tol: st.tol,
                        max_iters: st.max_iters,
                        omega: Some(st.omega.unwrap_or_else(|| {
                            // Anderson mixing backtracks on overshoot, so it
                            // tolerates a larger base step at small eps
                            if st.anderson_depth == 0 {
                                suggested_omega(st.eps)
                            } else {
                                suggested_omega(st.eps).max(0.05)
                            }
                        })),
                        accel: if st.anderson_depth == 0 {
                            Acceleration::Relaxation
                        } else {
                            Acceleration::Anderson {
                                depth: st.anderson_depth,
                            }
                        },
                    })
                    .collect(),
                omega: s.omega,
                order: match s.order {
                    OrderConfig::Lagged => SubSolveOrder::Lagged,
                    OrderConfig::FreshStructure => SubSolveOrder::FreshStructure,
                },
            },
        }
    }

    /// Canonical JSON form with all defaults applied; embedded in every
    /// artifact so any two artifacts of one run carry identical config text.
    pub fn canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// FNV-1a 64-bit hash of the canonical JSON, printed as hex.
    pub fn hash(&self) -> Result<String> {
        Ok(format!("{:016x}", fnv1a(self.canonical_json()?.as_bytes())))
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
