//! Compact Kähler models carrying a submanifold `V`, a holomorphic retraction
//! onto it, a tube radius, and (for quotients) deck identifications.

pub mod config;
pub mod flat;
pub mod lattice;
pub mod product;
pub mod reference;
pub mod serre;
pub mod validate;

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::distance::NearestPointResult;
use crate::error::{Error, Result};
use crate::geometry::{
    adapted_frame, AffineChange, Chart, ChartId, ChartPoint, ChartPotential, HermitianForm, SampleGrid, C64,
};

pub use config::{load_model, FactorSpec, GridConfig, ModelConfig, ModelSpec, ReferenceConfig, Tolerances};
pub use flat::FlatModel;
pub use lattice::Lattice;
pub use product::{Factor, ProductModel};
pub use reference::{reference_function, ReferenceFunction};
pub use serre::{SerreModel, SerreParameters};
pub use validate::{validate_model, CheckOutcome, ValidationReport};

pub type Model = Arc<dyn ManifoldModel>;

/// One chart of `V`: an ambient chart in which `V = {z_j = 0 : j ∈ normal}`,
/// and the intrinsic chart formed by the tangent coordinates.
#[derive(Clone, Debug)]
pub struct VChart {
    pub ambient: ChartId,
    pub intrinsic: Chart,
    pub tangent: Vec<usize>,
    pub normal: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Submanifold {
    pub k: usize,
    pub charts: Vec<VChart>,
}

impl Submanifold {
    pub fn by_ambient(&self, id: ChartId) -> Option<&VChart> {
        self.charts.iter().find(|c| c.ambient == id)
    }

    pub fn by_intrinsic(&self, id: ChartId) -> Option<&VChart> {
        self.charts.iter().find(|c| c.intrinsic.id == id)
    }
}

/// Whether a point is certainly outside the tube, and if not, the point
/// re-expressed in a chart containing `V`.
#[derive(Clone, Debug, PartialEq)]
pub enum TubeChart {
    Outside,
    Candidate(ChartPoint),
}

/// An immutable compact Kähler model.
///
/// All charts of shipped models are at most two-dimensional. Charts of
/// quotient models are lifted: coordinates are not reduced modulo the deck
/// group unless [`ManifoldModel::normalize`] is called.
pub trait ManifoldModel: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn charts(&self) -> &[Chart];

    fn chart(&self, id: ChartId) -> Result<&Chart> {
        self.charts()
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| Error::Domain(format!("chart {id} is not in the atlas of {}", self.name())))
    }

    /// Local Kähler potential of the chart.
    fn potential(&self, chart: ChartId) -> Result<ChartPotential<'_>>;

    /// The same abstract point in another chart.
    fn transition(&self, p: &ChartPoint, target: ChartId) -> Result<ChartPoint>;

    fn submanifold(&self) -> &Submanifold;

    /// `r(p)`, a point of `V` in one of its ambient charts.
    fn retract(&self, p: &ChartPoint) -> Result<ChartPoint>;

    fn tube_radius(&self) -> f64;

    /// Cheap pre-test for tube membership.
    fn tube_chart(&self, p: &ChartPoint) -> Result<TubeChart>;

    /// Fundamental-domain normal form of the abstract point.
    fn normalize(&self, p: &ChartPoint) -> Result<ChartPoint> {
        Ok(p.clone())
    }

    /// A few other representatives of the same abstract point.
    fn identified_points(&self, _p: &ChartPoint) -> Vec<ChartPoint> {
        Vec::new()
    }

    /// Representative of `y` closest to `x` in lifted coordinates, for
    /// local computations between nearby points.
    fn nearest_representative(&self, _x: &ChartPoint, y: &ChartPoint) -> Result<ChartPoint> {
        Ok(y.clone())
    }

    /// RK4 step count for geodesics on `[0, 1]`.
    fn geodesic_steps(&self) -> usize {
        32
    }

    fn closed_form_distance(&self, _x: &ChartPoint, _y: &ChartPoint) -> Option<Result<f64>> {
        None
    }

    fn closed_form_nearest(&self, _x: &ChartPoint) -> Option<Result<NearestPointResult>> {
        None
    }

    /// `h(x)` in closed form, when available.
    fn closed_form_h(&self, _x: &ChartPoint) -> Option<Result<f64>> {
        None
    }

    /// Distance on `V` for its induced metric, between intrinsic points.
    fn v_distance(&self, a: &ChartPoint, b: &ChartPoint) -> Result<f64>;

    /// Normal-form regions of `X` used for sampling (each a chart domain).
    fn sample_regions(&self) -> Vec<Chart>;

    /// Normal-form regions of `V`, in intrinsic charts.
    fn v_sample_regions(&self) -> Vec<Chart>;

    /// Points just inside the region where [`ManifoldModel::tube_chart`]
    /// reports candidates, at which `h ≥ R²` must hold for the pretest to
    /// be sound. Empty when the pretest is exact.
    fn tube_boundary_samples(&self, _per_axis: usize) -> Vec<ChartPoint> {
        Vec::new()
    }

    /// Charts in which every deck transformation is a translation, so the
    /// metric matrix itself is invariant.
    fn translation_charts(&self) -> Vec<ChartId> {
        Vec::new()
    }
}

/// Lattices over the normal-form regions of `X`.
pub fn model_samples(model: &dyn ManifoldModel, fraction: f64, jitter_seed: u64) -> Result<Vec<SampleGrid>> {
    model.sample_regions().iter().map(|c| SampleGrid::relative(c, fraction, jitter_seed)).collect()
}

/// Lattices over the normal-form regions of `V`, in intrinsic charts.
pub fn v_samples(model: &dyn ManifoldModel, fraction: f64, jitter_seed: u64) -> Result<Vec<SampleGrid>> {
    model.v_sample_regions().iter().map(|c| SampleGrid::relative(c, fraction, jitter_seed)).collect()
}

/// `(g_{ij̄}(p))`, checked positive definite.
pub fn metric_at(model: &dyn ManifoldModel, p: &ChartPoint) -> Result<HermitianForm> {
    model.chart(p.chart)?.check(p)?;
    let g = model.potential(p.chart)?.metric(&p.coords);
    let form = HermitianForm::new(p.clone(), g)?;
    let min = form.eigenvalues()[0];
    if !(min > 0.0) {
        return Err(Error::ModelDefinition(format!(
            "metric of {} is not positive definite at {p} (min eigenvalue {min:.3e})",
            model.name()
        )));
    }
    Ok(form)
}

pub fn on_v(model: &dyn ManifoldModel, p: &ChartPoint) -> bool {
    match model.submanifold().by_ambient(p.chart) {
        Some(vc) => vc.normal.iter().all(|&j| p.coords[j] == C64::new(0.0, 0.0)),
        None => false,
    }
}

/// Ambient point of an intrinsic point of `V`.
pub fn embed(model: &dyn ManifoldModel, q: &ChartPoint) -> Result<ChartPoint> {
    let vc = model
        .submanifold()
        .by_intrinsic(q.chart)
        .ok_or_else(|| Error::Domain(format!("chart {} is not an intrinsic chart of V", q.chart)))?;
    vc.intrinsic.check(q)?;
    let mut coords = vec![C64::new(0.0, 0.0); model.dim()];
    for (slot, &t) in vc.tangent.iter().enumerate() {
        coords[t] = q.coords[slot];
    }
    Ok(ChartPoint::new(vc.ambient, coords))
}

/// Intrinsic coordinates of an ambient point on `V`.
pub fn intrinsic(model: &dyn ManifoldModel, p: &ChartPoint) -> Result<ChartPoint> {
    let vc = model
        .submanifold()
        .by_ambient(p.chart)
        .ok_or_else(|| Error::Precondition(format!("{p} is not in a chart containing V")))?;
    if let Some(&j) = vc.normal.iter().find(|&&j| p.coords[j] != C64::new(0.0, 0.0)) {
        return Err(Error::Precondition(format!("{p} is not on V (normal coordinate {j} nonzero)")));
    }
    Ok(ChartPoint::new(vc.intrinsic.id, vc.tangent.iter().map(|&t| p.coords[t]).collect()))
}

/// Moves a point of `V` to another intrinsic chart.
pub fn v_transition(model: &dyn ManifoldModel, q: &ChartPoint, target: ChartId) -> Result<ChartPoint> {
    if q.chart == target {
        return Ok(q.clone());
    }
    let vc = model
        .submanifold()
        .by_intrinsic(target)
        .ok_or_else(|| Error::Domain(format!("chart {target} is not an intrinsic chart of V")))?;
    let p = embed(model, q)?;
    let moved = model.transition(&p, vc.ambient)?;
    intrinsic(model, &moved)
}

/// Induced metric `ω|_V` at an intrinsic point.
pub fn v_metric(model: &dyn ManifoldModel, q: &ChartPoint) -> Result<HermitianForm> {
    let vc = model
        .submanifold()
        .by_intrinsic(q.chart)
        .ok_or_else(|| Error::Domain(format!("chart {} is not an intrinsic chart of V", q.chart)))?;
    let g = metric_at(model, &embed(model, q)?)?;
    let k = vc.tangent.len();
    let m = DMatrix::from_fn(k, k, |a, b| g.get(vc.tangent[a], vc.tangent[b]));
    HermitianForm::new(q.clone(), m)
}

/// Affine holomorphic chart at `p ∈ V` in which `V = {ζ_{k+1..n} = 0}` and
/// the metric at the origin is the identity.
pub fn adapted_chart(model: &dyn ManifoldModel, p: &ChartPoint) -> Result<AffineChange> {
    let vc = model
        .submanifold()
        .by_ambient(p.chart)
        .ok_or_else(|| Error::Precondition(format!("{p} is not in a chart containing V")))?;
    if !on_v(model, p) {
        return Err(Error::Precondition(format!("{p} is not on V")));
    }
    let g = metric_at(model, p)?;
    adapted_frame(&g, &vc.tangent)
}

/// Chart label used for adapted coordinates.
pub const ADAPTED: ChartId = ChartId("adapted");
