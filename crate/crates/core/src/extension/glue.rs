//! Choice of `ν` and the glued field `Φ_m = max(φ̃_m, νF)` on `W`, `νF` off `W`.

use std::sync::Arc;

use serde::Serialize;

use crate::distance::{integrate, GeodesicProblem};
use crate::error::{Error, Result};
use crate::geometry::field::regularized_max;
use crate::geometry::{ChartPoint, FieldRef, ScalarField, SingularLocus, C64};
use crate::models::{adapted_chart, embed, v_samples, ManifoldModel};

/// Endpoints of normal geodesics of length `radius` from a lattice on `V`:
/// samples of `{h = radius²}` inside the tube.
pub fn boundary_samples(model: &dyn ManifoldModel, radius: f64, v_fraction: f64, directions: usize) -> Result<Vec<ChartPoint>> {
    if !(radius > 0.0 && radius < model.tube_radius()) || directions == 0 {
        return Err(Error::Parameter(format!("boundary radius {radius} must lie in (0, tube radius) with directions > 0")));
    }
    let mut out = Vec::new();
    for grid in v_samples(model, v_fraction, 0)? {
        for q in grid.points() {
            let p = embed(model, q)?;
            let frame = adapted_chart(model, &p)?;
            for j in frame.k..model.dim() {
                for d in 0..directions {
                    let mut zeta = vec![C64::new(0.0, 0.0); model.dim()];
                    zeta[j] = C64::from_polar(radius, std::f64::consts::TAU * d as f64 / directions as f64);
                    let velocity = frame.to_ambient(&zeta).coords.iter().zip(&p.coords).map(|(a, b)| a - b).collect();
                    let problem = GeodesicProblem {
                        start: p.clone(),
                        velocity,
                        steps: model.geodesic_steps(),
                        max_length: radius * (1.0 + 1e-9),
                    };
                    let end = integrate(model, &problem)?.point;
                    model
                        .chart(end.chart)?
                        .check(&end)
                        .map_err(|e| Error::Precondition(format!("normal geodesic of length {radius:.6} from {p} leaves its chart: {e}")))?;
                    out.push(end);
                }
            }
        }
    }
    Ok(out)
}

/// The selected `ν` with both caps and the quantities they were derived from.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NuChoice {
    pub nu: f64,
    /// `C″ = −sup_{∂W} φ̃_1`.
    pub c_double_prime: f64,
    /// `min_{∂W} F`.
    pub f_boundary: f64,
    /// Largest `ν` keeping `inf_{∂W} νF ≥ −(1 − margin)·C″/2`.
    pub nu_boundary: f64,
    /// Largest `ν` keeping `1 + ν·μ_F ≥ ε′ + margin·(1 − ε′)`, infinite when `F` is psh.
    pub nu_curvature: Option<f64>,
    pub margin: f64,
    /// Factor applied after selection; 1 except under fault injection.
    pub scale: f64,
    pub boundary_samples: usize,
}

/// Chooses `ν` on the `∂W` samples.
///
/// `f_curvature_min` is the worst relative eigenvalue of `i∂∂̄F` against `ω`
/// on the certification grid, so `ω + i∂∂̄(νF) ≥ (1 + ν·f_curvature_min)·ω`.
pub fn choose_nu(
    phi_tilde_1: &dyn ScalarField,
    f: &dyn ScalarField,
    f_curvature_min: f64,
    boundary: &[ChartPoint],
    epsilon_prime: f64,
    margin: f64,
) -> Result<NuChoice> {
    if boundary.is_empty() {
        return Err(Error::Precondition("no samples on the boundary of W".into()));
    }
    if !(margin > 0.0 && margin < 0.5) || !(epsilon_prime > 0.0 && epsilon_prime < 1.0) {
        return Err(Error::Parameter(format!("nu margin {margin} must lie in (0, 1/2) and epsilon' {epsilon_prime} in (0, 1)")));
    }
    let mut sup_tilde = f64::NEG_INFINITY;
    let mut min_f = f64::INFINITY;
    for x in boundary {
        sup_tilde = sup_tilde.max(phi_tilde_1.evaluate(x)?);
        min_f = min_f.min(f.evaluate(x)?);
    }
    let c_double_prime = -sup_tilde;
    if !(c_double_prime > 0.0) {
        return Err(Error::Construction(format!("C'' = {c_double_prime:.6} is not positive: the local extension is not negative on the boundary of W")));
    }
    if !(min_f < 0.0 && min_f.is_finite()) {
        return Err(Error::Precondition(format!("F must be finite and negative on the boundary of W, got {min_f}")));
    }
    let nu_boundary = (1.0 - margin) * c_double_prime / (2.0 * -min_f);
    let nu_curvature = (f_curvature_min < 0.0).then(|| (1.0 - margin) * (1.0 - epsilon_prime) / -f_curvature_min);
    let nu = nu_curvature.map_or(nu_boundary, |c| c.min(nu_boundary));
    Ok(NuChoice {
        nu,
        c_double_prime,
        f_boundary: min_f,
        nu_boundary,
        nu_curvature,
        margin,
        scale: 1.0,
        boundary_samples: boundary.len(),
    })
}

/// The field `Φ_m`.
pub struct Glued {
    tilde: FieldRef,
    nu_f: FieldRef,
    h: FieldRef,
    w_radius2: f64,
    smoothing: f64,
}

/// Which branch of `Φ_m` is active at a point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Local,
    Reference,
    OutsideW,
}

impl Branch {
    pub fn name(self) -> &'static str {
        match self {
            Branch::Local => "local",
            Branch::Reference => "reference",
            Branch::OutsideW => "outside_w",
        }
    }
}

/// Values of both branches at a point; `local` is `None` off `W`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BranchValues {
    pub h: Option<f64>,
    pub local: Option<f64>,
    pub reference: f64,
    pub value: f64,
    pub branch: Branch,
}

impl Glued {
    pub fn branches(&self, p: &ChartPoint) -> Result<BranchValues> {
        let h = match self.h.evaluate(p) {
            Ok(v) => Some(v),
            Err(Error::OutsideTube) => None,
            Err(e) => return Err(e),
        };
        let reference = self.nu_f.evaluate(p)?;
        match h {
            Some(hv) if hv < self.w_radius2 => {
                let t = self.tilde.evaluate(p)?;
                let value = if self.smoothing > 0.0 { regularized_max(t, reference, self.smoothing) } else { t.max(reference) };
                let branch = if t >= reference { Branch::Local } else { Branch::Reference };
                Ok(BranchValues { h, local: Some(t), reference, value, branch })
            }
            _ => Ok(BranchValues { h, local: None, reference, value: reference, branch: Branch::OutsideW }),
        }
    }
}

impl ScalarField for Glued {
    fn evaluate(&self, p: &ChartPoint) -> Result<f64> {
        Ok(self.branches(p)?.value)
    }

    fn singular_locus(&self) -> SingularLocus {
        self.tilde.singular_locus()
    }
}

/// One member `Φ_m` of the glued family.
#[derive(Clone)]
pub struct GluedExtension {
    pub m: u32,
    pub nu: f64,
    pub w_radius: f64,
    /// `min_{∂W} (νF − φ̃_m)`.
    pub boundary_margin: f64,
    pub tilde: FieldRef,
    pub nu_f: FieldRef,
    pub glued: Arc<Glued>,
}

impl GluedExtension {
    pub fn field(&self) -> FieldRef {
        self.glued.clone()
    }
}

/// Glues `φ̃_m` with `νF`, where `nu_f` is `νF` as a field.
///
/// A positive `smoothing` replaces the max by a regularized max of that
/// width; zero gives the plain max.
pub fn glue(
    m: u32,
    tilde: FieldRef,
    nu: f64,
    nu_f: FieldRef,
    h: FieldRef,
    w_radius: f64,
    boundary: &[ChartPoint],
    smoothing: f64,
) -> Result<GluedExtension> {
    if !(nu > 0.0) || smoothing < 0.0 {
        return Err(Error::Parameter(format!("nu = {nu} must be positive and smoothing = {smoothing} non-negative")));
    }
    let mut boundary_margin = f64::INFINITY;
    for x in boundary {
        boundary_margin = boundary_margin.min(nu_f.evaluate(x)? - tilde.evaluate(x)?);
    }
    if !(boundary_margin > smoothing) {
        return Err(Error::Construction(format!(
            "gluing for m = {m}: boundary margin {boundary_margin:.6} is not positive, so the branches do not separate at the boundary of W"
        )));
    }
    let glued = Arc::new(Glued { tilde: tilde.clone(), nu_f: nu_f.clone(), h, w_radius2: w_radius * w_radius, smoothing });
    Ok(GluedExtension { m, nu, w_radius, boundary_margin, tilde, nu_f, glued })
}
