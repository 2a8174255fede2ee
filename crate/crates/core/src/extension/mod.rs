//! Extension of a ★-certified function from `V` to `X`.
//!
//! The pipeline runs, in order: model validation, the ★ check of `φ`, the
//! regularization schedule, the reference function `F`, the search for `A`
//! and `W`, the choice of `ν`, gluing, and verification. Each stage either
//! passes or stops the run with a named failure.

pub mod glue;
pub mod local;
pub mod verify;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use glue::{boundary_samples, choose_nu, glue, Branch, GluedExtension, NuChoice};
pub use local::{find_a, local_extend, pullback_form, retraction_jacobian, FindAConfig, LocalExtension, LocalExtensionParams};
pub use verify::{verify_extension, write_csv, SampleRow, Verification, VerifyConfig, VerifyInputs};

use crate::distance::squared_distance;
use crate::error::{Error, Result};
use crate::geometry::{ChartPoint, FieldRef};
use crate::models::{
    model_samples, reference_function, v_samples, validate_model, Model, ModelConfig, ReferenceFunction, ValidationReport,
};
use crate::qpsh::{check_star, regularize, star_margins, QpshFunction, QpshSpec, Regularization, StarCertificate};

/// Constants of the ★ assumption.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StarConfig {
    pub epsilon: f64,
    pub c: f64,
}

impl Default for StarConfig {
    fn default() -> Self {
        Self { epsilon: 1.0, c: 16.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlueConfig {
    pub m_schedule: Vec<u32>,
    /// Relative slack kept below both caps on `ν`.
    pub nu_margin: f64,
    /// Spacing fraction of the `V` lattice from which `∂W` is sampled.
    pub boundary_v_spacing: f64,
    /// Normal directions per `V` sample.
    pub boundary_directions: usize,
    /// Width of the regularized max; zero selects the plain max.
    pub smoothing_width: f64,
}

impl Default for GlueConfig {
    fn default() -> Self {
        Self { m_schedule: vec![1, 2, 4, 8, 16], nu_margin: 0.1, boundary_v_spacing: 0.1, boundary_directions: 8, smoothing_width: 0.0 }
    }
}

/// Deliberate corruptions for testing that failures are reported.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultConfig {
    /// Multiplies the selected `ν`.
    pub nu_scale: f64,
}

impl Default for FaultConfig {
    fn default() -> Self {
        Self { nu_scale: 1.0 }
    }
}

/// The run-specific tables of a configuration file. Model tables are read
/// by [`ModelConfig`] from the same text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtendConfig {
    #[serde(default)]
    pub phi: Option<QpshSpec>,
    #[serde(default)]
    pub star: StarConfig,
    #[serde(default)]
    pub find_a: FindAConfig,
    #[serde(default)]
    pub glue: GlueConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub faults: FaultConfig,
}

impl ExtendConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExtendConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.star.epsilon > 0.0 && self.star.c > 0.0) {
            return Err(Error::Config("star epsilon and c must be positive".into()));
        }
        self.find_a.check()?;
        let s = &self.glue.m_schedule;
        if s.len() < 2 || s[0] == 0 || s.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("m_schedule {s:?} needs at least two strictly increasing positive entries")));
        }
        let g = &self.glue;
        if !(g.nu_margin > 0.0 && g.nu_margin < 0.5) || !(g.boundary_v_spacing > 0.0 && g.boundary_v_spacing <= 1.0) || g.boundary_directions == 0 {
            return Err(Error::Config("glue nu_margin must lie in (0, 1/2), boundary_v_spacing in (0, 1], directions > 0".into()));
        }
        if !(g.smoothing_width >= 0.0) {
            return Err(Error::Config("smoothing_width must be non-negative".into()));
        }
        let v = &self.verify;
        if !(v.equality_collar > 0.0 && v.collar_width > 0.0 && v.collar_width < 0.5 && v.value_tolerance > 0.0) {
            return Err(Error::Config("verify collars and tolerance must be positive".into()));
        }
        if !(v.positivity_fraction > 0.0 && v.positivity_fraction <= 1.0) {
            return Err(Error::Config("positivity_fraction must lie in (0, 1]".into()));
        }
        if !(self.faults.nu_scale > 0.0) {
            return Err(Error::Config("faults.nu_scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageOutcome {
    pub name: String,
    pub passed: bool,
    pub message: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridMetadata {
    pub spacing: f64,
    pub v_spacing: f64,
    pub jitter_seed: u64,
    pub hessian_step: f64,
    pub regions: Vec<RegionSize>,
    pub v_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionSize {
    pub chart: String,
    pub samples: usize,
}

/// Exclusion collars in force during certification.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExclusionMetadata {
    /// Distance to `V` inside which `F` has no Hessian.
    pub reference_collar: f64,
    /// Branch-value gap inside which the max is not differentiated.
    pub equality_collar: f64,
    /// Distance to the zeros of `φ` inside which its Hessian is not taken.
    pub phi_margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MemberGluing {
    pub m: u32,
    pub boundary_margin: f64,
}

/// The chosen constants, keyed for quick reading.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Constants {
    pub a: f64,
    pub epsilon_prime: f64,
    pub nu: f64,
    pub w_radius: f64,
    pub c_of_f: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExtensionReport {
    pub model: String,
    pub status: u8,
    pub failed_stage: Option<String>,
    pub stages: Vec<StageOutcome>,
    pub constants: Option<Constants>,
    pub grid: GridMetadata,
    pub exclusion: ExclusionMetadata,
    pub validation: Option<ValidationReport>,
    pub star: Option<StarCertificate>,
    pub regularization: Option<Regularization>,
    pub member_star: Vec<StarCertificate>,
    pub reference: Option<ReferenceFunction>,
    pub local: Option<LocalExtensionParams>,
    pub nu: Option<NuChoice>,
    pub gluing: Vec<MemberGluing>,
    pub verification: Option<Verification>,
}

impl ExtensionReport {
    pub fn passed(&self) -> bool {
        self.status == 0
    }

    fn stage<T>(&mut self, name: &str, r: Result<T>) -> Option<T> {
        match r {
            Ok(v) => {
                self.stages.push(StageOutcome { name: name.to_owned(), passed: true, message: None });
                Some(v)
            }
            Err(e) => {
                self.fail(name, e.to_string());
                None
            }
        }
    }

    fn fail(&mut self, name: &str, message: String) {
        self.stages.push(StageOutcome { name: name.to_owned(), passed: false, message: Some(message) });
        self.status = 1;
        self.failed_stage = Some(name.to_owned());
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(format!("serializing report: {e}")))
    }
}

fn flatten(grids: &[crate::geometry::SampleGrid]) -> Vec<ChartPoint> {
    grids.iter().flat_map(|g| g.points().iter().cloned()).collect()
}

/// Objects built by a run that reached verification.
pub struct Construction {
    pub model: Model,
    pub phi: Arc<QpshFunction>,
    pub family: Vec<Arc<QpshFunction>>,
    pub h: FieldRef,
    pub reference: ReferenceFunction,
    pub local: LocalExtensionParams,
    pub nu: NuChoice,
    pub glued: Vec<GluedExtension>,
    pub boundary: Vec<ChartPoint>,
    pub x_points: Vec<ChartPoint>,
    pub v_points: Vec<ChartPoint>,
}

/// Runs the whole construction. Errors are configuration errors only;
/// stage failures are recorded in the report with status 1.
pub fn run_extension(model_cfg: &ModelConfig, cfg: &ExtendConfig) -> Result<ExtensionReport> {
    construct(model_cfg, cfg).map(|(report, _)| report)
}

/// [`run_extension`] that also returns the constructed fields when every
/// stage before verification succeeded.
pub fn construct(model_cfg: &ModelConfig, cfg: &ExtendConfig) -> Result<(ExtensionReport, Option<Construction>)> {
    model_cfg.check()?;
    cfg.check()?;
    let spec = cfg.phi.clone().ok_or_else(|| Error::Config("the configuration has no [phi] table".into()))?;
    let model = model_cfg.load()?;
    let phi = QpshFunction::parse(model.clone(), &spec)?;
    let step = model_cfg.tolerances.hessian_step;
    let grid_cfg = &model_cfg.grid;
    let x_grids = model_samples(model.as_ref(), grid_cfg.spacing, grid_cfg.jitter_seed)?;
    let v_grids = v_samples(model.as_ref(), grid_cfg.v_spacing, grid_cfg.jitter_seed)?;
    let x_points = flatten(&x_grids);
    let v_points = flatten(&v_grids);
    let schedule = cfg.glue.m_schedule.clone();

    let mut report = ExtensionReport {
        model: model.name().to_owned(),
        status: 0,
        failed_stage: None,
        stages: Vec::new(),
        constants: None,
        grid: GridMetadata {
            spacing: grid_cfg.spacing,
            v_spacing: grid_cfg.v_spacing,
            jitter_seed: grid_cfg.jitter_seed,
            hessian_step: step,
            regions: x_grids.iter().map(|g| RegionSize { chart: g.chart.name().to_owned(), samples: g.len() }).collect(),
            v_samples: v_points.len(),
        },
        exclusion: ExclusionMetadata {
            reference_collar: model_cfg.reference.collar * model.tube_radius(),
            equality_collar: cfg.verify.equality_collar,
            phi_margin: spec.singular_margin,
        },
        validation: None,
        star: None,
        regularization: None,
        member_star: Vec::new(),
        reference: None,
        local: None,
        nu: None,
        gluing: Vec::new(),
        verification: None,
    };

    let validation = validate_model(&model, model_cfg)?;
    let ok = validation.passed;
    let failures: Vec<String> = validation.failures().map(|c| c.name.clone()).collect();
    report.validation = Some(validation);
    if !ok {
        report.fail("validate_model", format!("failed checks: {}", failures.join(", ")));
        return Ok((report, None));
    }
    report.stages.push(StageOutcome { name: "validate_model".into(), passed: true, message: None });

    let (eps, c_star) = (cfg.star.epsilon, cfg.star.c);
    let star = star_margins(model.as_ref(), &phi, eps, c_star, &v_grids, step)?;
    report.star = Some(star.clone());
    if report.stage("check_star", check_star(model.as_ref(), &phi, eps, c_star, &v_grids, step)).is_none() {
        return Ok((report, None));
    }

    let Some(reg) = report.stage("regularize", regularize(&phi, &schedule, c_star, &v_grids, step)) else {
        return Ok((report, None));
    };
    let family = reg.members.clone();
    let reg_ok = reg.passed();
    report.regularization = Some(reg);
    if !reg_ok {
        report.stages.pop();
        report.fail("regularize", "regularization table violates its contract".into());
        return Ok((report, None));
    }
    for member in &family {
        match check_star(model.as_ref(), member.as_ref(), eps, c_star, &v_grids, step) {
            Ok(c) => report.member_star.push(c),
            Err(e) => {
                report.stages.pop();
                report.fail("regularize", format!("m = {:?}: {e}", member.regularization().map(|r| (1.0 / r).round())));
                return Ok((report, None));
            }
        }
    }

    let h = squared_distance(&model);
    let h_field: FieldRef = h.clone();
    let reference = reference_function(model.as_ref(), h_field.clone(), &model_cfg.reference, grid_cfg.spacing, grid_cfg.jitter_seed, step);
    let Some(reference) = report.stage("reference_function", reference) else {
        return Ok((report, None));
    };
    report.reference = Some(reference.clone());

    let local = find_a(model.as_ref(), h.as_ref(), eps / 2.0, c_star, &cfg.find_a, &x_points, step);
    let Some(local) = report.stage("find_A", local) else {
        return Ok((report, None));
    };
    report.local = Some(local.clone());

    let tildes: Vec<FieldRef> = family
        .iter()
        .map(|f| local_extend(model.clone(), f.clone(), h_field.clone(), local.a).map(|l| Arc::new(l) as FieldRef))
        .collect::<Result<_>>()?;
    let boundary = boundary_samples(model.as_ref(), local.w_radius, cfg.glue.boundary_v_spacing, cfg.glue.boundary_directions)?;
    let nu = choose_nu(
        tildes[0].as_ref(),
        reference.field().as_ref(),
        reference.c * reference.chi_curvature_min,
        &boundary,
        local.epsilon_prime,
        cfg.glue.nu_margin,
    );
    let Some(mut nu) = report.stage("choose_nu", nu) else {
        return Ok((report, None));
    };
    nu.scale = cfg.faults.nu_scale;
    nu.nu *= nu.scale;
    report.nu = Some(nu.clone());
    report.constants = Some(Constants {
        a: local.a,
        epsilon_prime: local.epsilon_prime,
        nu: nu.nu,
        w_radius: local.w_radius,
        c_of_f: reference.c,
    });

    let nu_f = reference.scaled_field(nu.nu);
    let glued: Result<Vec<GluedExtension>> = schedule
        .iter()
        .zip(&tildes)
        .map(|(&m, t)| glue(m, t.clone(), nu.nu, nu_f.clone(), h_field.clone(), local.w_radius, &boundary, cfg.glue.smoothing_width))
        .collect();
    let Some(glued) = report.stage("glue", glued) else {
        return Ok((report, None));
    };
    report.gluing = glued.iter().map(|g| MemberGluing { m: g.m, boundary_margin: g.boundary_margin }).collect();

    let w = cfg.verify.collar_width;
    let inner = boundary_samples(model.as_ref(), local.w_radius * (1.0 - w), cfg.glue.boundary_v_spacing, cfg.glue.boundary_directions)?;
    let outer_radius = (local.w_radius * (1.0 + w)).min(0.5 * (local.w_radius + model.tube_radius()));
    let outer = boundary_samples(model.as_ref(), outer_radius, cfg.glue.boundary_v_spacing, cfg.glue.boundary_directions)?;
    let inputs = VerifyInputs {
        model: model.as_ref(),
        limit: &phi,
        family: &family,
        glued: &glued,
        epsilon_prime: local.epsilon_prime,
        step,
        points: &x_points,
        v_points: &v_points,
        boundary: &boundary,
        collar_inner: &inner,
        collar_outer: &outer,
    };
    let verification = verify_extension(&inputs, &cfg.verify)?;
    let failed: Vec<String> = verification.checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
    report.verification = Some(verification);
    if failed.is_empty() {
        report.stages.push(StageOutcome { name: "verify_extension".into(), passed: true, message: None });
    } else {
        report.fail("verify_extension", format!("failed checks: {}", failed.join(", ")));
    }
    let construction = Construction {
        model,
        phi: Arc::new(phi),
        family,
        h: h_field,
        reference,
        local,
        nu,
        glued,
        boundary,
        x_points,
        v_points,
    };
    Ok((report, Some(construction)))
}
