//! Geodesic distance, nearest-point projection onto `V`, the squared-distance
//! field `h`, and the checks on its Hessian and on the foot map along `V`.

pub mod geodesic;

use std::sync::Arc;

use dashmap::DashMap;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{
    complex_hessian, real_hessian, ChartPoint, FieldRef, HermitianForm, PointKey, ScalarField, SingularLocus, C64,
};
use crate::models::{adapted_chart, metric_at, on_v, Model, ManifoldModel, TubeChart, VChart, ADAPTED};

pub use geodesic::{integrate, shoot, shooting_distance, GeodesicEnd, GeodesicProblem};
use geodesic::{chord, integrate_in_chart, newton, newton_with_jacobian, speed_sq, to_complex, to_real};

/// Foot of the perpendicular from `query` to `V`.
///
/// `exp_inverse` is the initial velocity at the query point of the geodesic
/// reaching the foot at `t = 1`, in the chart of the query point as
/// re-expressed by [`ManifoldModel::tube_chart`] (for closed-form models, the
/// query chart itself). Its squared length is `distance²`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NearestPointResult {
    pub query: ChartPoint,
    pub foot: ChartPoint,
    #[serde(serialize_with = "serialize_complex_vec")]
    pub exp_inverse: Vec<C64>,
    pub distance: f64,
    /// Endpoint residual of the normal-exponential solve.
    pub residual: f64,
}

fn serialize_complex_vec<S: serde::Serializer>(v: &[C64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for c in v {
        seq.serialize_element(&[c.re, c.im])?;
    }
    seq.end()
}

/// `δ(x, y)`: closed form when the model has one, else geodesic shooting
/// between nearby representatives.
pub fn geodesic_distance(model: &dyn ManifoldModel, x: &ChartPoint, y: &ChartPoint) -> Result<f64> {
    if let Some(d) = model.closed_form_distance(x, y) {
        return d;
    }
    let y = model.nearest_representative(x, y)?;
    let x = if y.chart == x.chart { x.clone() } else { model.transition(x, y.chart)? };
    shooting_distance(model, &x, &y, model.geodesic_steps())
}

struct NormalSolution {
    foot: ChartPoint,
    h: f64,
    exp_inverse: Vec<C64>,
    residual: f64,
}

fn foot_point(p: &ChartPoint, vc: &VChart, t: &[C64]) -> ChartPoint {
    let mut coords = vec![C64::new(0.0, 0.0); p.dim()];
    for (slot, &i) in vc.tangent.iter().enumerate() {
        coords[i] = t[slot];
    }
    ChartPoint::new(p.chart, coords)
}

/// `n_j = e_{normal j} + Σ_s β_{js} e_{tangent s}`, metric-orthogonal to `T V`.
fn normal_frame(g: &DMatrix<C64>, vc: &VChart) -> Result<Vec<Vec<C64>>> {
    let k = vc.tangent.len();
    let gtt = DMatrix::from_fn(k, k, |a, b| g[(vc.tangent[a], vc.tangent[b])]);
    let lu = gtt.transpose().lu();
    vc.normal
        .iter()
        .map(|&nj| {
            let rhs = nalgebra::DVector::from_fn(k, |s, _| -g[(nj, vc.tangent[s])]);
            let beta = lu.solve(&rhs).ok_or_else(|| Error::ModelDefinition("degenerate metric on V".into()))?;
            let mut v = vec![C64::new(0.0, 0.0); g.nrows()];
            v[nj] = C64::new(1.0, 0.0);
            for (s, &ti) in vc.tangent.iter().enumerate() {
                v[ti] = beta[s];
            }
            Ok(v)
        })
        .collect()
}

/// Solves `exp_{y(t)}(Σ a_j n_j(t)) = p` for the foot coordinates `t` and
/// normal coefficients `a`.
fn normal_exponential(model: &dyn ManifoldModel, p: &ChartPoint, vc: &VChart) -> Result<NormalSolution> {
    let pot = model.potential(p.chart)?;
    let a0: Vec<C64> = vc.normal.iter().map(|&j| p.coords[j]).collect();
    let t_first: Vec<C64> = vc.tangent.iter().map(|&i| p.coords[i]).collect();
    let frame = normal_frame(&pot.metric(&foot_point(p, vc, &t_first).coords), vc)?;
    let v_first = combine(&frame, &a0, p.dim());
    let t0: Vec<C64> = vc.tangent.iter().zip(&t_first).map(|(&i, t)| t - v_first[i]).collect();
    normal_exponential_from(model, p, vc, t0, a0)
}

fn combine(frame: &[Vec<C64>], a: &[C64], n: usize) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); n];
    for (aj, nj) in a.iter().zip(frame) {
        for (vi, ni) in v.iter_mut().zip(nj) {
            *vi += aj * ni;
        }
    }
    v
}

fn normal_exponential_from(
    model: &dyn ManifoldModel,
    p: &ChartPoint,
    vc: &VChart,
    t0: Vec<C64>,
    a0: Vec<C64>,
) -> Result<NormalSolution> {
    let pot = model.potential(p.chart)?;
    let steps = model.geodesic_steps();
    let k = vc.tangent.len();
    let velocity = |t: &[C64], a: &[C64]| -> Result<(ChartPoint, Vec<C64>)> {
        let foot = foot_point(p, vc, t);
        let frame = normal_frame(&pot.metric(&foot.coords), vc)?;
        let v = combine(&frame, a, p.dim());
        Ok((foot, v))
    };
    let unknowns: Vec<f64> = to_real(&t0).into_iter().chain(to_real(&a0)).collect();
    let target = to_real(&p.coords);
    let scale = 1.0 + p.coords.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let split = |u: &[f64]| (to_complex(&u[..2 * k]), to_complex(&u[2 * k..]));
    let residual_at = |u: &[f64], steps: usize| -> Result<Vec<f64>> {
        let (t, a) = split(u);
        let (foot, v) = velocity(&t, &a)?;
        let (z, _) = integrate_in_chart(pot, &foot.coords, &v, steps)?;
        Ok(to_real(&z).iter().zip(&target).map(|(a, b)| a - b).collect())
    };
    let tol = 1e-13 * scale;
    // Coarse integration locates the solution; the full-step residual is then
    // driven to `tol` by chord steps with the coarse Jacobian.
    let coarse = steps / 4;
    let refined = if coarse >= 8 {
        match newton_with_jacobian("nearest point", unknowns.clone(), 1e-9 * scale, 40, |u| residual_at(u, coarse)) {
            Ok((u0, _, Some(jac))) => chord(u0, &jac, tol, 8, |u| residual_at(u, steps))?,
            _ => None,
        }
    } else {
        None
    };
    let (u, residual) = match refined {
        Some(r) => r,
        None => newton("nearest point", unknowns, tol, 40, |u| residual_at(u, steps))?,
    };
    let (t, a) = split(&u);
    let (foot, v) = velocity(&t, &a)?;
    let (_, v_end) = integrate_in_chart(pot, &foot.coords, &v, steps)?;
    let h = speed_sq(pot, &foot.coords, &v);
    Ok(NormalSolution { foot, h, exp_inverse: v_end.iter().map(|c| -c).collect(), residual })
}

fn solve_nearest(model: &dyn ManifoldModel, x: &ChartPoint) -> Result<(NearestPointResult, f64)> {
    if let Some(r) = model.closed_form_nearest(x) {
        let r = r?;
        let h = match model.closed_form_h(x) {
            Some(h) => h?,
            None => r.distance * r.distance,
        };
        return Ok((r, h));
    }
    let p = match model.tube_chart(x)? {
        TubeChart::Outside => return Err(Error::OutsideTube),
        TubeChart::Candidate(p) => p,
    };
    let vc = model
        .submanifold()
        .by_ambient(p.chart)
        .ok_or_else(|| Error::ModelDefinition(format!("tube chart {} does not contain V", p.chart)))?;
    if on_v(model, &p) {
        let r = NearestPointResult { query: x.clone(), foot: p.clone(), exp_inverse: vec![C64::new(0.0, 0.0); p.dim()], distance: 0.0, residual: 0.0 };
        return Ok((r, 0.0));
    }
    let sol = normal_exponential(model, &p, vc)?;
    let r = model.tube_radius();
    if sol.h >= r * r {
        return Err(Error::OutsideTube);
    }
    let result = NearestPointResult {
        query: x.clone(),
        foot: sol.foot,
        exp_inverse: sol.exp_inverse,
        distance: sol.h.sqrt(),
        residual: sol.residual,
    };
    Ok((result, sol.h))
}

/// Foot `y(x)` and `v(x, y(x))` for `x` inside the tube.
pub fn nearest_point(model: &dyn ManifoldModel, x: &ChartPoint) -> Result<NearestPointResult> {
    solve_nearest(model, x).map(|(r, _)| r)
}

/// Normal-exponential solutions for `x` from perturbed initial guesses:
/// each start shifts the foot by `dt` and scales the normal coefficients by
/// `sa`. Entries are the foot and `|v|²` of each converged solve.
pub fn multi_start_solutions(model: &dyn ManifoldModel, x: &ChartPoint, starts: &[(Vec<C64>, f64)]) -> Result<Vec<Result<(ChartPoint, f64)>>> {
    let p = match model.tube_chart(x)? {
        TubeChart::Outside => return Err(Error::OutsideTube),
        TubeChart::Candidate(p) => p,
    };
    let vc = model
        .submanifold()
        .by_ambient(p.chart)
        .ok_or_else(|| Error::ModelDefinition(format!("tube chart {} does not contain V", p.chart)))?;
    let a0: Vec<C64> = vc.normal.iter().map(|&j| p.coords[j]).collect();
    let t0: Vec<C64> = vc.tangent.iter().map(|&i| p.coords[i]).collect();
    Ok(starts
        .iter()
        .map(|(dt, sa)| {
            let t: Vec<C64> = t0.iter().zip(dt).map(|(a, b)| a + b).collect();
            let a: Vec<C64> = a0.iter().map(|c| c * *sa).collect();
            normal_exponential_from(model, &p, vc, t, a).map(|s| (s.foot, s.h))
        })
        .collect())
}

/// `F_μ(x, y) = ∂_{y_μ} δ(x, y)²` at the foot, over the real tangent
/// directions of `V`: `−2 Re⟨w, e_μ⟩_y` with `w` the velocity at the foot of
/// the geodesic to `x`.
pub fn stationarity(model: &dyn ManifoldModel, r: &NearestPointResult) -> Result<Vec<f64>> {
    if r.distance == 0.0 {
        return Ok(vec![0.0; 2 * model.submanifold().k]);
    }
    let vc = model
        .submanifold()
        .by_ambient(r.foot.chart)
        .ok_or_else(|| Error::Precondition(format!("{} is not in a chart containing V", r.foot)))?;
    let p = match model.tube_chart(&r.query)? {
        TubeChart::Outside => return Err(Error::OutsideTube),
        TubeChart::Candidate(p) => p,
    };
    let w = shoot(model, &r.foot, &p, model.geodesic_steps())?;
    let g = metric_at(model, &r.foot)?;
    let mut out = Vec::new();
    for &t in &vc.tangent {
        for unit in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)] {
            let inner: C64 = (0..w.len()).map(|i| g.get(i, t) * w[i] * unit.conj()).sum();
            out.push(-2.0 * inner.re);
        }
    }
    Ok(out)
}

/// The field `h = δ(·, V)²` inside the tube.
///
/// Evaluation outside the tube returns [`Error::OutsideTube`]. Values and
/// outside-tube verdicts are cached by exact point, so Hessians of several
/// fields built on `h` share their stencil evaluations.
pub struct SquaredDistance {
    model: Model,
    cache: DashMap<PointKey, Option<f64>>,
}

const CACHE_LIMIT: usize = 4_000_000;

impl SquaredDistance {
    pub fn new(model: Model) -> Self {
        Self { model, cache: DashMap::new() }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }
}

impl ScalarField for SquaredDistance {
    fn evaluate(&self, p: &ChartPoint) -> Result<f64> {
        if let Some(h) = self.model.closed_form_h(p) {
            return h;
        }
        let key = p.key();
        if let Some(v) = self.cache.get(&key) {
            return v.ok_or(Error::OutsideTube);
        }
        let h = match solve_nearest(self.model.as_ref(), p) {
            Ok((_, h)) => Some(h),
            Err(Error::OutsideTube) => None,
            Err(e) => return Err(e),
        };
        if self.cache.len() >= CACHE_LIMIT {
            self.cache.clear();
        }
        self.cache.insert(key, h);
        h.ok_or(Error::OutsideTube)
    }

    fn singular_locus(&self) -> SingularLocus {
        SingularLocus::None
    }
}

pub fn squared_distance(model: &Model) -> Arc<SquaredDistance> {
    Arc::new(SquaredDistance::new(model.clone()))
}

/// Field on adapted coordinates `ζ` at a point of `V`.
fn adapted_field(model: &dyn ManifoldModel, h: FieldRef, p: &ChartPoint) -> Result<(FieldRef, crate::geometry::AffineChange)> {
    let a = adapted_chart(model, p)?;
    let change = a.clone();
    let f: FieldRef = Arc::new(crate::geometry::field::FnField::new(move |z: &ChartPoint| h.evaluate(&change.to_ambient(&z.coords))));
    Ok((f, a))
}

/// Complex Hessian of `h` at `p ∈ V` in adapted coordinates, with its block
/// structure summarized.
#[derive(Clone, Debug, Serialize)]
pub struct BlockStructure {
    pub base: ChartPoint,
    pub k: usize,
    #[serde(skip)]
    pub form: HermitianForm,
    /// Largest `|H[i][j]|` with `i < k` or `j < k`.
    pub off_block_max: f64,
    /// Mean of the normal diagonal.
    pub normal_constant: f64,
    /// `max |N − c·I| / c` over the normal block `N`.
    pub normal_spread: f64,
}

impl BlockStructure {
    pub fn passes(&self, off_tol: f64, spread_tol: f64) -> bool {
        self.off_block_max <= off_tol && self.normal_spread <= spread_tol && self.normal_constant > 0.0
    }
}

pub fn hessian_h_on_v(model: &dyn ManifoldModel, h: FieldRef, p: &ChartPoint, step: f64) -> Result<BlockStructure> {
    let (f, a) = adapted_field(model, h, p)?;
    let n = model.dim();
    let origin = ChartPoint::new(ADAPTED, vec![C64::new(0.0, 0.0); n]);
    let form = complex_hessian(f.as_ref(), &origin, step)?;
    let k = a.k;
    let mut off = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            if i < k || j < k {
                off = off.max(form.get(i, j).norm());
            }
        }
    }
    let c = (k..n).map(|i| form.get(i, i).re).sum::<f64>() / (n - k) as f64;
    let mut spread = 0.0_f64;
    for i in k..n {
        for j in k..n {
            let target = if i == j { C64::new(c, 0.0) } else { C64::new(0.0, 0.0) };
            spread = spread.max((form.get(i, j) - target).norm() / c.abs());
        }
    }
    Ok(BlockStructure { base: p.clone(), k, form, off_block_max: off, normal_constant: c, normal_spread: spread })
}

/// Real Hessian of `h` at `p ∈ V` in adapted real coordinates.
pub fn real_hessian_h_on_v(model: &dyn ManifoldModel, h: FieldRef, p: &ChartPoint, step: f64) -> Result<DMatrix<f64>> {
    let (f, _) = adapted_field(model, h, p)?;
    let origin = ChartPoint::new(ADAPTED, vec![C64::new(0.0, 0.0); model.dim()]);
    real_hessian(f.as_ref(), &origin, step)
}

/// Central-difference Jacobian of `x ↦ y(x)` at `p ∈ V` in adapted real
/// coordinates: a `2k × 2n` matrix, expected to be `[I_{2k} | 0]`.
pub fn nearest_point_jacobian(model: &dyn ManifoldModel, p: &ChartPoint, step: f64) -> Result<DMatrix<f64>> {
    if !(step > 0.0) {
        return Err(Error::Parameter(format!("Jacobian step must be positive, got {step}")));
    }
    let a = adapted_chart(model, p)?;
    let n = model.dim();
    let k = a.k;
    let foot_adapted = |zeta: &[C64]| -> Result<Vec<f64>> {
        let y = nearest_point(model, &a.to_ambient(zeta))?.foot;
        let y = if y.chart == p.chart { y } else { model.transition(&y, p.chart)? };
        let y = model.nearest_representative(p, &y)?;
        Ok(to_real(&a.to_adapted(&y)?[..k]))
    };
    let mut jac = DMatrix::<f64>::zeros(2 * k, 2 * n);
    for j in 0..2 * n {
        let mut plus = vec![0.0; 2 * n];
        let mut minus = vec![0.0; 2 * n];
        plus[j] = step;
        minus[j] = -step;
        let yp = foot_adapted(&to_complex(&plus))?;
        let ym = foot_adapted(&to_complex(&minus))?;
        for i in 0..2 * k {
            jac[(i, j)] = (yp[i] - ym[i]) / (2.0 * step);
        }
    }
    Ok(jac)
}

/// `max |J − [I | 0]|`.
pub fn jacobian_deviation(jac: &DMatrix<f64>) -> f64 {
    let mut dev = 0.0_f64;
    for i in 0..jac.nrows() {
        for j in 0..jac.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((jac[(i, j)] - target).abs());
        }
    }
    dev
}

#[cfg(test)]
mod tests;
