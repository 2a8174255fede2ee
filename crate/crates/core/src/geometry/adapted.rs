//! Affine holomorphic coordinates adapted to a coordinate submanifold.

use nalgebra::DMatrix;

use super::{ChartPoint, HermitianForm, C64};
use crate::error::{Error, Result};

/// `z = base + P ζ`, with `ζ = (tangent..., normal...)`.
///
/// In `ζ` the submanifold is `{ζ_{k+1} = … = ζ_n = 0}` and the metric at the
/// origin is the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineChange {
    pub base: ChartPoint,
    pub matrix: DMatrix<C64>,
    pub k: usize,
    inverse: DMatrix<C64>,
}

impl AffineChange {
    /// Ambient point for adapted coordinates `ζ`.
    pub fn to_ambient(&self, zeta: &[C64]) -> ChartPoint {
        let mut coords = self.base.coords.clone();
        for (i, c) in coords.iter_mut().enumerate() {
            for (j, zj) in zeta.iter().enumerate() {
                *c += self.matrix[(i, j)] * zj;
            }
        }
        ChartPoint::new(self.base.chart, coords)
    }

    /// Adapted coordinates of an ambient point in the same chart.
    pub fn to_adapted(&self, p: &ChartPoint) -> Result<Vec<C64>> {
        if p.chart != self.base.chart {
            return Err(Error::Domain(format!("point {p} is not in chart {}", self.base.chart)));
        }
        let n = self.base.dim();
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (i, o) in out.iter_mut().enumerate() {
            for j in 0..n {
                *o += self.inverse[(i, j)] * (p.coords[j] - self.base.coords[j]);
            }
        }
        Ok(out)
    }

    /// A form at `base` expressed in adapted coordinates.
    pub fn pull_back(&self, h: &HermitianForm, origin: ChartPoint) -> HermitianForm {
        h.pulled_back(&self.matrix, origin)
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        let n = self.matrix.nrows();
        (self.matrix.clone() - DMatrix::<C64>::identity(n, n)).iter().all(|c| c.norm() <= tol)
    }
}

fn inner(g: &DMatrix<C64>, u: &[C64], v: &[C64]) -> C64 {
    let n = u.len();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += g[(i, j)] * u[i] * v[j].conj();
        }
    }
    acc
}

/// Adapted frame at `g.base()` for the submanifold `{z_j = 0 : j ∉ tangent}`.
///
/// Columns are metric Gram–Schmidt of the tangent coordinate vectors followed
/// by the normal ones, so `Pᵀ G P̄ = I` and the first `k` columns span `T_pV`.
pub fn adapted_frame(g: &HermitianForm, tangent: &[usize]) -> Result<AffineChange> {
    let base = g.base().clone();
    let n = g.dim();
    if base.dim() != n {
        return Err(Error::Dimension(format!("metric of size {n} at a point of dimension {}", base.dim())));
    }
    if tangent.iter().any(|&t| t >= n) {
        return Err(Error::Dimension(format!("tangent index out of range for dimension {n}")));
    }
    let normal: Vec<usize> = (0..n).filter(|i| !tangent.contains(i)).collect();
    if let Some(&j) = normal.iter().find(|&&j| base.coords[j] != C64::new(0.0, 0.0)) {
        return Err(Error::Precondition(format!("{base} is not on V: normal coordinate {j} is nonzero")));
    }
    let order: Vec<usize> = tangent.iter().copied().chain(normal.iter().copied()).collect();
    let gm = g.entries();
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(n);
    for &idx in &order {
        let mut v = vec![C64::new(0.0, 0.0); n];
        v[idx] = C64::new(1.0, 0.0);
        for c in &cols {
            let proj = inner(gm, &v, c);
            for (vi, ci) in v.iter_mut().zip(c) {
                *vi -= proj * ci;
            }
        }
        let norm2 = inner(gm, &v, &v).re;
        if !(norm2 > 0.0) {
            return Err(Error::ModelDefinition(format!("metric at {base} is not positive definite")));
        }
        let s = norm2.sqrt();
        cols.push(v.into_iter().map(|c| c / s).collect());
    }
    let matrix = DMatrix::from_fn(n, n, |i, j| cols[j][i]);
    let inverse = matrix
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::ModelDefinition(format!("degenerate adapted frame at {base}")))?;
    Ok(AffineChange { base, matrix, k: tangent.len(), inverse })
}
