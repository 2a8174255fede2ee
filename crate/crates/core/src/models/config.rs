//! TOML model configuration.
//!
//! ```toml
//! [model]
//! kind = "serre"
//! tau = [0.0, 1.0]
//! kappa = 1.0
//!
//! [grid]
//! spacing = 0.1667
//!
//! [reference]
//! c_range = [0.01, 4.0]
//! ```
//!
//! Tables other than `model`, `grid`, `tolerances` and `reference` are
//! ignored here and read by the pipeline stages that own them.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Factor, FlatModel, Model, ProductModel, SerreModel, SerreParameters};
use crate::error::{Error, Result};
use crate::geometry::C64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Flat {
        #[serde(default = "default_flat_extent")]
        extent: f64,
        #[serde(default = "default_flat_tube")]
        tube_radius: f64,
    },
    Product {
        factors: Vec<FactorSpec>,
        tube_radius: f64,
    },
    Serre {
        #[serde(default = "default_tau")]
        tau: [f64; 2],
        #[serde(default = "default_kappa")]
        kappa: f64,
        #[serde(default = "default_c_z")]
        c_z: f64,
        #[serde(default = "default_s_max")]
        s_max: f64,
        #[serde(default = "default_serre_tube")]
        tube_radius: f64,
        #[serde(default = "default_steps")]
        geodesic_steps: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FactorSpec {
    ProjectiveLine {
        #[serde(default = "default_weight")]
        weight: f64,
    },
    Torus {
        #[serde(default = "default_tau")]
        tau: [f64; 2],
        #[serde(default = "default_weight")]
        weight: f64,
    },
}

fn default_flat_extent() -> f64 {
    2.0
}
fn default_flat_tube() -> f64 {
    1.0
}
fn default_tau() -> [f64; 2] {
    [0.0, 1.0]
}
fn default_kappa() -> f64 {
    SerreParameters::default().kappa
}
fn default_c_z() -> f64 {
    SerreParameters::default().c_z
}
fn default_s_max() -> f64 {
    SerreParameters::default().s_max
}
fn default_serre_tube() -> f64 {
    SerreParameters::default().tube_radius
}
fn default_steps() -> usize {
    SerreParameters::default().geodesic_steps
}
fn default_weight() -> f64 {
    1.0
}

/// Sampling of chart regions. `spacing` is a fraction of each coordinate's
/// extent, so `1/6` puts six cells along every real axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub spacing: f64,
    /// Fraction for intrinsic charts of `V`.
    pub v_spacing: f64,
    pub jitter_seed: u64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { spacing: 1.0 / 6.0, v_spacing: 1.0 / 30.0, jitter_seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub hessian_step: f64,
    pub transition: f64,
    pub retraction: f64,
    pub holomorphy: f64,
    pub deck: f64,
    pub off_block: f64,
    pub normal_spread: f64,
    pub jacobian: f64,
    /// Floor for the minimum generalized eigenvalue of `ω` against the
    /// identity at load-time samples.
    pub positivity_floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            hessian_step: 1e-3,
            transition: 1e-10,
            retraction: 1e-10,
            holomorphy: 1e-6,
            deck: 1e-9,
            off_block: 1e-4,
            normal_spread: 1e-3,
            jacobian: 1e-4,
            positivity_floor: 0.0,
        }
    }
}

/// Search range and target for the reference function `F = c·log h − K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    pub c_range: [f64; 2],
    /// Required `ε` in `ω + i∂∂̄F ≥ ε·ω`.
    pub epsilon_target: f64,
    /// Collar around `V` excluded from certification, as a fraction of the
    /// tube radius.
    pub collar: f64,
    pub bisection_steps: usize,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self { c_range: [0.01, 4.0], epsilon_target: 0.5, collar: 0.1, bisection_steps: 40 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub reference: ReferenceConfig,
}

impl ModelConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ModelConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        let g = &self.grid;
        if !(g.spacing > 0.0 && g.spacing <= 1.0 && g.v_spacing > 0.0 && g.v_spacing <= 1.0) {
            return Err(Error::Config("grid spacings must lie in (0, 1]".into()));
        }
        let t = &self.tolerances;
        let tols = [t.hessian_step, t.transition, t.retraction, t.holomorphy, t.deck, t.off_block, t.normal_spread, t.jacobian];
        if tols.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        let r = &self.reference;
        if !(r.c_range[0] > 0.0 && r.c_range[0] <= r.c_range[1]) {
            return Err(Error::Config(format!("reference c_range {:?} must be positive and ordered", r.c_range)));
        }
        if !(r.epsilon_target > 0.0 && r.epsilon_target < 1.0) || !(r.collar > 0.0 && r.collar < 1.0) {
            return Err(Error::Config("reference epsilon_target and collar must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn load(&self) -> Result<Model> {
        load_model(&self.model)
    }
}

fn complex(v: [f64; 2]) -> C64 {
    C64::new(v[0], v[1])
}

fn factor(spec: &FactorSpec) -> Result<Factor> {
    match *spec {
        FactorSpec::ProjectiveLine { weight } => Factor::projective_line(weight),
        FactorSpec::Torus { tau, weight } => Factor::torus(complex(tau), weight),
    }
}

/// Builds the model. Parameter errors surface here; geometric invariants are
/// certified separately by [`super::validate_model`].
pub fn load_model(spec: &ModelSpec) -> Result<Model> {
    Ok(match spec {
        ModelSpec::Flat { extent, tube_radius } => Arc::new(FlatModel::new(*extent, *tube_radius)?),
        ModelSpec::Product { factors, tube_radius } => {
            let [a, b] = factors.as_slice() else {
                return Err(Error::Parameter(format!("a product model takes two factors, got {}", factors.len())));
            };
            Arc::new(ProductModel::new(factor(a)?, factor(b)?, *tube_radius)?)
        }
        ModelSpec::Serre { tau, kappa, c_z, s_max, tube_radius, geodesic_steps } => Arc::new(SerreModel::new(SerreParameters {
            tau: complex(*tau),
            kappa: *kappa,
            c_z: *c_z,
            s_max: *s_max,
            tube_radius: *tube_radius,
            geodesic_steps: *geodesic_steps,
        })?),
    })
}
