//! Local extension `φ̃ = φ∘r + A·h` and the search for `A` and `W`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{complex_hessian, pencil_eigenvalues, ChartPoint, FieldRef, ScalarField, C64};
use crate::models::{intrinsic, metric_at, v_metric, v_transition, ManifoldModel, Model};

/// `x ↦ φ(r(x)) + A·h(x)` on the tube.
pub struct LocalExtension {
    model: Model,
    phi: FieldRef,
    h: FieldRef,
    a: f64,
}

impl ScalarField for LocalExtension {
    fn evaluate(&self, p: &ChartPoint) -> Result<f64> {
        let hv = self.h.evaluate(p)?;
        let q = intrinsic(self.model.as_ref(), &self.model.retract(p)?)?;
        Ok(self.phi.evaluate(&q)? + self.a * hv)
    }
}

/// Builds `φ̃` from a smooth `φ` on `V`.
pub fn local_extend(model: Model, phi: FieldRef, h: FieldRef, a: f64) -> Result<LocalExtension> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::Parameter(format!("A must be positive, got {a}")));
    }
    if !phi.singular_locus().is_none() {
        return Err(Error::Precondition("local extension needs a smooth function on V".into()));
    }
    Ok(LocalExtension { model, phi, h, a })
}

fn retract_intrinsic(model: &dyn ManifoldModel, x: &ChartPoint) -> Result<ChartPoint> {
    intrinsic(model, &model.retract(x)?)
}

/// Complex Jacobian `∂r_a/∂x_j` of the retraction, `k × n`, by central
/// differences along the real coordinate directions.
pub fn retraction_jacobian(model: &dyn ManifoldModel, x: &ChartPoint, step: f64) -> Result<(ChartPoint, DMatrix<C64>)> {
    let base = retract_intrinsic(model, x)?;
    let n = x.dim();
    let k = base.dim();
    let at = |y: ChartPoint| -> Result<Vec<C64>> {
        let q = retract_intrinsic(model, &y)?;
        Ok(v_transition(model, &q, base.chart)?.coords)
    };
    let mut jac = DMatrix::<C64>::zeros(k, n);
    for j in 0..n {
        let mut d = vec![C64::new(0.0, 0.0); n];
        d[j] = C64::new(step, 0.0);
        let plus = at(x.shifted(&d))?;
        d[j] = C64::new(-step, 0.0);
        let minus = at(x.shifted(&d))?;
        for a in 0..k {
            jac[(a, j)] = (plus[a] - minus[a]) / (2.0 * step);
        }
    }
    Ok((base, jac))
}

/// `r*(ω|_V)` at `x`: `Jᵀ G_V J̄`.
pub fn pullback_form(model: &dyn ManifoldModel, x: &ChartPoint, step: f64) -> Result<DMatrix<C64>> {
    let (base, jac) = retraction_jacobian(model, x, step)?;
    let gv = v_metric(model, &base)?;
    Ok(jac.transpose() * gv.entries() * jac.map(|c| c.conj()))
}

/// Search configuration for `A` and the shrunken tube `W`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FindAConfig {
    /// Target `ε′` for `ω + i∂∂̄φ̃ ≥ ε′ω` on `W`.
    pub epsilon_prime: f64,
    /// Candidate radii of `W` as fractions of the tube radius, tried in order.
    pub radius_fractions: Vec<f64>,
    pub a_range: [f64; 2],
    pub bisection_steps: usize,
    /// Points of the recorded margin curve per radius.
    pub curve_points: usize,
}

impl Default for FindAConfig {
    fn default() -> Self {
        Self {
            epsilon_prime: 0.1,
            radius_fractions: vec![0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3],
            a_range: [1e-3, 1e3],
            bisection_steps: 60,
            curve_points: 9,
        }
    }
}

impl FindAConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.epsilon_prime > 0.0) {
            return Err(Error::Config("epsilon_prime must be positive".into()));
        }
        if self.radius_fractions.is_empty() || self.radius_fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::Config("radius_fractions must be non-empty and lie in (0, 1)".into()));
        }
        let [lo, hi] = self.a_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Config(format!("a_range {:?} must be positive and ordered", self.a_range)));
        }
        if self.bisection_steps == 0 || self.curve_points < 2 {
            return Err(Error::Config("bisection_steps must be positive and curve_points at least 2".into()));
        }
        Ok(())
    }
}

/// One trial radius of the search with its margin curve `A ↦ min eigenvalue`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadiusTrial {
    pub w_radius: f64,
    pub samples: usize,
    /// `A·R_W² ≤ C/4` caps the search at this value.
    pub a_cap: f64,
    pub feasible: bool,
    pub curve: Vec<[f64; 2]>,
}

/// Constants of the local extension, independent of the individual `φ_m`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalExtensionParams {
    pub a: f64,
    pub epsilon_prime: f64,
    pub w_radius: f64,
    /// Lower bound of the family curvature used in the surrogate.
    pub beta: f64,
    /// Minimum eigenvalue of the surrogate at `A` over the `W` samples.
    pub achieved: f64,
    pub samples: usize,
    /// Final bisection bracket in `A`.
    pub bracket: [f64; 2],
    pub trials: Vec<RadiusTrial>,
}

struct SurrogateSample {
    h: f64,
    g: DMatrix<C64>,
    base: DMatrix<C64>,
    hess_h: DMatrix<C64>,
}

fn margin(samples: &[&SurrogateSample], a: f64) -> Result<f64> {
    let vals: Vec<Result<f64>> = samples
        .par_iter()
        .map(|s| Ok(pencil_eigenvalues(&(&s.base + s.hess_h.map(|c| c * a)), &s.g)?[0]))
        .collect();
    vals.into_iter().try_fold(f64::INFINITY, |m, v| Ok(m.min(v?)))
}

/// Finds the widest `W` and the smallest `A` on it such that the worst-case
/// surrogate `ω − (1 − β)·r*(ω|_V) + A·i∂∂̄h` is `≥ ε′ω` at every sample of `W`.
///
/// `β` is the curvature lower bound of the family, `ε/2` under ★ with
/// constants `(ε, C)`. Reads only the model, `h`, `β` and `C`.
pub fn find_a(
    model: &dyn ManifoldModel,
    h: &dyn ScalarField,
    beta: f64,
    c_star: f64,
    cfg: &FindAConfig,
    points: &[ChartPoint],
    step: f64,
) -> Result<LocalExtensionParams> {
    cfg.check()?;
    if !(beta > 0.0 && beta <= 1.0 && c_star > 0.0) {
        return Err(Error::Parameter(format!("family bounds must satisfy 0 < β ≤ 1 and C > 0, got β = {beta}, C = {c_star}")));
    }
    let r = model.tube_radius();
    let widest = cfg.radius_fractions.iter().copied().fold(0.0, f64::max) * r;
    let rows: Vec<Result<Option<SurrogateSample>>> = points
        .par_iter()
        .map(|x| {
            let hv = match h.evaluate(x) {
                Ok(v) if v < widest * widest => v,
                Ok(_) | Err(Error::OutsideTube) => return Ok(None),
                Err(e) => return Err(e),
            };
            let g = metric_at(model, x)?.entries().clone();
            let p = pullback_form(model, x, step)?;
            let hess_h = complex_hessian(h, x, step)?.entries().clone();
            Ok(Some(SurrogateSample { h: hv, base: &g - p.map(|c| c * (1.0 - beta)), g, hess_h }))
        })
        .collect();
    let samples: Vec<SurrogateSample> = rows.into_iter().filter_map(|r| r.transpose()).collect::<Result<_>>()?;

    let [a_lo, a_hi] = cfg.a_range;
    let mut trials = Vec::new();
    for &fraction in &cfg.radius_fractions {
        let w_radius = fraction * r;
        let inside: Vec<&SurrogateSample> = samples.iter().filter(|s| s.h < w_radius * w_radius).collect();
        let a_cap = a_hi.min(c_star / (4.0 * w_radius * w_radius));
        let mut trial = RadiusTrial { w_radius, samples: inside.len(), a_cap, feasible: false, curve: Vec::new() };
        if inside.is_empty() || a_cap < a_lo {
            trials.push(trial);
            continue;
        }
        let n = cfg.curve_points;
        for i in 0..n {
            let a = a_lo * (a_cap / a_lo).powf(i as f64 / (n - 1) as f64);
            trial.curve.push([a, margin(&inside, a)?]);
        }
        let ok_at_cap = margin(&inside, a_cap)? >= cfg.epsilon_prime;
        trial.feasible = ok_at_cap;
        trials.push(trial);
        if !ok_at_cap {
            continue;
        }
        let (mut lo, mut hi) = (a_lo, a_cap);
        if margin(&inside, a_lo)? < cfg.epsilon_prime {
            for _ in 0..cfg.bisection_steps {
                let mid = (lo * hi).sqrt();
                if margin(&inside, mid)? >= cfg.epsilon_prime {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
        } else {
            hi = a_lo;
        }
        return Ok(LocalExtensionParams {
            a: hi,
            epsilon_prime: cfg.epsilon_prime,
            w_radius,
            beta,
            achieved: margin(&inside, hi)?,
            samples: inside.len(),
            bracket: [lo, hi],
            trials,
        });
    }
    let curves: Vec<String> = trials
        .iter()
        .map(|t| {
            let pts: Vec<String> = t.curve.iter().map(|[a, m]| format!("{a:.3e}->{m:.4}")).collect();
            format!("R_W = {:.4}: [{}]", t.w_radius, pts.join(", "))
        })
        .collect();
    Err(Error::Construction(format!(
        "no A in [{a_lo}, {a_hi}] reaches epsilon' = {} on any trial radius; margin curves {}",
        cfg.epsilon_prime,
        curves.join("; ")
    )))
}
