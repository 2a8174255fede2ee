//! Fixed-step RK4 geodesics of a Kähler metric and boundary-value shooting.
//!
//! The geodesic equation in holomorphic coordinates is
//! `z̈^k = −Γ^k_{ij} ż^i ż^j` with `Γ^k_{ij} = Σ_l ∂_i G[j][l] · G⁻¹[l][k]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{ChartPoint, ChartPotential, KahlerPotential, C64};
use crate::models::ManifoldModel;

/// A geodesic on `t ∈ [0, 1]` from `start` with initial `velocity`.
#[derive(Clone, Debug)]
pub struct GeodesicProblem {
    pub start: ChartPoint,
    pub velocity: Vec<C64>,
    pub steps: usize,
    /// Upper bound on the length, which equals the initial speed.
    pub max_length: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicEnd {
    pub point: ChartPoint,
    pub velocity: Vec<C64>,
}

fn accel<const N: usize>(pot: &KahlerPotential<N>, z: &[C64; N], v: &[C64; N]) -> Result<[C64; N]> {
    let (g, dg) = pot.metric_and_derivative(z);
    let ginv = g.try_inverse().ok_or_else(|| Error::ModelDefinition("degenerate metric along geodesic".into()))?;
    let mut r = [C64::new(0.0, 0.0); N];
    for (i, dgi) in dg.iter().enumerate() {
        for j in 0..N {
            let vv = v[i] * v[j];
            for (l, rl) in r.iter_mut().enumerate() {
                *rl += vv * dgi[(j, l)];
            }
        }
    }
    let mut a = [C64::new(0.0, 0.0); N];
    for (k, ak) in a.iter_mut().enumerate() {
        for (l, rl) in r.iter().enumerate() {
            *ak -= rl * ginv[(l, k)];
        }
    }
    Ok(a)
}

fn axpy<const N: usize>(x: &[C64; N], s: f64, y: &[C64; N]) -> [C64; N] {
    let mut out = *x;
    for (o, yi) in out.iter_mut().zip(y) {
        *o += yi * s;
    }
    out
}

/// `(z(1), ż(1))` for the geodesic with `z(0) = z0`, `ż(0) = v0`.
pub fn integrate_potential<const N: usize>(
    pot: &KahlerPotential<N>,
    z0: [C64; N],
    v0: [C64; N],
    steps: usize,
) -> Result<([C64; N], [C64; N])> {
    let h = 1.0 / steps as f64;
    let (mut z, mut v) = (z0, v0);
    for _ in 0..steps {
        let k1z = v;
        let k1v = accel(pot, &z, &v)?;
        let z2 = axpy(&z, 0.5 * h, &k1z);
        let v2 = axpy(&v, 0.5 * h, &k1v);
        let k2v = accel(pot, &z2, &v2)?;
        let z3 = axpy(&z, 0.5 * h, &v2);
        let v3 = axpy(&v, 0.5 * h, &k2v);
        let k3v = accel(pot, &z3, &v3)?;
        let z4 = axpy(&z, h, &v3);
        let v4 = axpy(&v, h, &k3v);
        let k4v = accel(pot, &z4, &v4)?;
        for i in 0..N {
            z[i] += (k1z[i] + (v2[i] + v3[i]) * 2.0 + v4[i]) * (h / 6.0);
            v[i] += (k1v[i] + (k2v[i] + k3v[i]) * 2.0 + k4v[i]) * (h / 6.0);
        }
        if z.iter().chain(v.iter()).any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Convergence { context: "geodesic integration".into(), iterations: steps, residual: f64::INFINITY });
        }
    }
    Ok((z, v))
}

/// Dimension-dispatched integration in one chart.
pub fn integrate_in_chart(
    pot: ChartPotential<'_>,
    z0: &[C64],
    v0: &[C64],
    steps: usize,
) -> Result<(Vec<C64>, Vec<C64>)> {
    match pot {
        ChartPotential::One(p) => {
            let (z, v) = integrate_potential(p, [z0[0]], [v0[0]], steps)?;
            Ok((z.to_vec(), v.to_vec()))
        }
        ChartPotential::Two(p) => {
            let (z, v) = integrate_potential(p, [z0[0], z0[1]], [v0[0], v0[1]], steps)?;
            Ok((z.to_vec(), v.to_vec()))
        }
    }
}

/// `Σ G[i][j] v_i v̄_j` for the chart metric at `z`.
pub fn speed_sq(pot: ChartPotential<'_>, z: &[C64], v: &[C64]) -> f64 {
    let g = pot.metric(z);
    let n = v.len();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += g[(i, j)] * v[i] * v[j].conj();
        }
    }
    acc.re
}

pub fn integrate(model: &dyn ManifoldModel, problem: &GeodesicProblem) -> Result<GeodesicEnd> {
    if problem.steps == 0 {
        return Err(Error::Parameter("geodesic step count must be positive".into()));
    }
    model.chart(problem.start.chart)?.check(&problem.start)?;
    let pot = model.potential(problem.start.chart)?;
    let len = speed_sq(pot, &problem.start.coords, &problem.velocity).sqrt();
    if len > problem.max_length {
        return Err(Error::Parameter(format!("geodesic length {len:.6} exceeds the bound {:.6}", problem.max_length)));
    }
    let (z, v) = integrate_in_chart(pot, &problem.start.coords, &problem.velocity, problem.steps)?;
    Ok(GeodesicEnd { point: ChartPoint::new(problem.start.chart, z), velocity: v })
}

pub(crate) fn to_real(v: &[C64]) -> Vec<f64> {
    v.iter().flat_map(|c| [c.re, c.im]).collect()
}

pub(crate) fn to_complex(x: &[f64]) -> Vec<C64> {
    x.chunks(2).map(|p| C64::new(p[0], p[1])).collect()
}

/// Damped Newton on `R: ℝ^m → ℝ^m` with a forward-difference Jacobian.
pub(crate) fn newton(
    context: &str,
    x: Vec<f64>,
    tol: f64,
    max_iter: usize,
    residual: impl Fn(&[f64]) -> Result<Vec<f64>>,
) -> Result<(Vec<f64>, f64)> {
    newton_with_jacobian(context, x, tol, max_iter, residual).map(|(x, rn, _)| (x, rn))
}

/// [`newton`] that also returns the last Jacobian it factored.
pub(crate) fn newton_with_jacobian(
    context: &str,
    mut x: Vec<f64>,
    tol: f64,
    max_iter: usize,
    residual: impl Fn(&[f64]) -> Result<Vec<f64>>,
) -> Result<(Vec<f64>, f64, Option<DMatrix<f64>>)> {
    let m = x.len();
    let mut last = None;
    let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut r = residual(&x)?;
    let mut rn = norm(&r);
    for _ in 0..max_iter {
        if rn <= tol {
            return Ok((x, rn, last));
        }
        let mut jac = DMatrix::<f64>::zeros(m, m);
        for j in 0..m {
            let step = 1e-7 * x[j].abs().max(1.0);
            let mut xp = x.clone();
            xp[j] += step;
            let rp = residual(&xp)?;
            for i in 0..m {
                jac[(i, j)] = (rp[i] - r[i]) / step;
            }
        }
        last = Some(jac.clone());
        let delta = jac
            .lu()
            .solve(&DVector::from_vec(r.iter().map(|v| -v).collect()))
            .ok_or_else(|| Error::Convergence { context: format!("{context}: singular Jacobian"), iterations: 0, residual: rn })?;
        let mut lambda = 1.0;
        loop {
            let cand: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, d)| a + lambda * d).collect();
            match residual(&cand) {
                Ok(rc) if norm(&rc) < rn || lambda < 1e-3 => {
                    x = cand;
                    rn = norm(&rc);
                    r = rc;
                    break;
                }
                _ if lambda < 1e-3 => {
                    return Err(Error::Convergence { context: context.into(), iterations: max_iter, residual: rn });
                }
                _ => lambda *= 0.5,
            }
        }
    }
    if rn <= tol {
        Ok((x, rn, last))
    } else {
        Err(Error::Convergence { context: context.into(), iterations: max_iter, residual: rn })
    }
}

/// Chord iterations `x ← x − J⁻¹R(x)` with a fixed Jacobian. `None` when the
/// residual stops contracting before reaching `tol`.
pub(crate) fn chord(mut x: Vec<f64>, jac: &DMatrix<f64>, tol: f64, max_iter: usize, residual: impl Fn(&[f64]) -> Result<Vec<f64>>) -> Result<Option<(Vec<f64>, f64)>> {
    let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let lu = jac.clone().lu();
    let mut r = residual(&x)?;
    let mut rn = norm(&r);
    for _ in 0..max_iter {
        if rn <= tol {
            return Ok(Some((x, rn)));
        }
        let Some(delta) = lu.solve(&DVector::from_vec(r.iter().map(|v| -v).collect())) else {
            return Ok(None);
        };
        let cand: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, d)| a + d).collect();
        let rc = residual(&cand)?;
        let rcn = norm(&rc);
        if rcn >= rn {
            return Ok(None);
        }
        (x, r, rn) = (cand, rc, rcn);
    }
    Ok((rn <= tol).then_some((x, rn)))
}

/// Initial velocity at `x` of the geodesic reaching `y` (same chart) at `t = 1`.
pub fn shoot(model: &dyn ManifoldModel, x: &ChartPoint, y: &ChartPoint, steps: usize) -> Result<Vec<C64>> {
    if x.chart != y.chart {
        return Err(Error::Domain(format!("shooting needs a common chart, got {} and {}", x.chart, y.chart)));
    }
    let pot = model.potential(x.chart)?;
    let guess: Vec<C64> = y.coords.iter().zip(&x.coords).map(|(a, b)| a - b).collect();
    let scale = 1.0 + y.coords.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let (v, _) = newton("geodesic shooting", to_real(&guess), 1e-13 * scale, 40, |vr| {
        let (z, _) = integrate_in_chart(pot, &x.coords, &to_complex(vr), steps)?;
        Ok(to_real(&z).iter().zip(to_real(&y.coords)).map(|(a, b)| a - b).collect())
    })?;
    Ok(to_complex(&v))
}

/// Length of the shooting geodesic from `x` to `y`, doubling the RK4 step
/// count from `steps` until halving the step changes the length by < 1e-8.
pub fn shooting_distance(model: &dyn ManifoldModel, x: &ChartPoint, y: &ChartPoint, steps: usize) -> Result<f64> {
    let pot = model.potential(x.chart)?;
    let length = |n: usize| -> Result<f64> { Ok(speed_sq(pot, &x.coords, &shoot(model, x, y, n)?).sqrt()) };
    let mut n = steps.max(4);
    let mut prev = length(n)?;
    for _ in 0..6 {
        n *= 2;
        let next = length(n)?;
        if (next - prev).abs() < 1e-8 {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Convergence { context: "geodesic step refinement".into(), iterations: n, residual: f64::NAN })
}
