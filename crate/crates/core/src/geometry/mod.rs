//! Charts, Hermitian forms, scalar fields and the finite-difference and
//! eigenvalue machinery every other module is built on.
//!
//! Complex coordinates are `z_i = x_{2i-1} + i x_{2i}`; with zero-based
//! indices the real coordinates of `z_i` are `2i` (real part) and `2i + 1`
//! (imaginary part).
//!
//! Hermitian matrices follow one convention throughout: `G[i][j]` is
//! `∂²ψ/∂z_i∂z̄_j`, and the squared length of a tangent vector `v` is
//! `Σ G[i][j] v_i conj(v_j)`. With this convention `|z|²` has metric `1`,
//! so the Riemannian metric is the identity exactly when the coefficient
//! matrix is.

pub mod adapted;
pub mod eigen;
pub mod field;
pub mod grid;
pub mod hessian;
pub mod potential;

use std::collections::HashSet;
use std::fmt;
use std::sync::{Mutex, OnceLock};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

pub use adapted::{adapted_frame, AffineChange};
pub use eigen::{generalized_eigenvalues, min_generalized_eigenvalue, min_relative_eigenvalue, pencil_eigenvalues};
pub use field::{FieldRef, ScalarField, SingularLocus};
pub use grid::SampleGrid;
pub use hessian::{complex_from_real, complex_hessian, real_hessian, DEFAULT_STEP};
pub use potential::{ChartPotential, HermitianPoly, KahlerPotential, Monomial};

pub type C64 = Complex64;

pub const I: C64 = C64::new(0.0, 1.0);

/// Relative tolerance for Hermitian symmetry on construction.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Symbolic chart label.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct ChartId(pub &'static str);

impl ChartId {
    pub fn name(&self) -> &'static str {
        self.0
    }
}

impl fmt::Display for ChartId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.0)
    }
}

impl Serialize for ChartId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.0)
    }
}

/// Interns a chart label so composite charts (products) can be named at
/// model-build time.
pub fn intern(name: &str) -> &'static str {
    static POOL: OnceLock<Mutex<HashSet<&'static str>>> = OnceLock::new();
    let pool = POOL.get_or_init(|| Mutex::new(HashSet::new()));
    let mut guard = pool.lock().expect("intern pool poisoned");
    if let Some(existing) = guard.get(name) {
        return existing;
    }
    let leaked: &'static str = Box::leak(name.to_owned().into_boxed_str());
    guard.insert(leaked);
    leaked
}

/// A point given by a chart label and its complex coordinates in that chart.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChartPoint {
    pub chart: ChartId,
    pub coords: Vec<C64>,
}

impl ChartPoint {
    pub fn new(chart: ChartId, coords: Vec<C64>) -> Self {
        Self { chart, coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Real coordinates `(Re z_1, Im z_1, Re z_2, ...)`.
    pub fn real_coords(&self) -> Vec<f64> {
        self.coords.iter().flat_map(|c| [c.re, c.im]).collect()
    }

    pub fn from_real(chart: ChartId, x: &[f64]) -> Self {
        debug_assert!(x.len() % 2 == 0);
        let coords = x.chunks(2).map(|p| C64::new(p[0], p[1])).collect();
        Self { chart, coords }
    }

    /// Same chart, coordinates shifted by `delta`.
    pub fn shifted(&self, delta: &[C64]) -> Self {
        let coords = self.coords.iter().zip(delta).map(|(a, b)| a + b).collect();
        Self { chart: self.chart, coords }
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Bit-exact hash key.
    pub fn key(&self) -> PointKey {
        PointKey {
            chart: self.chart,
            bits: self
                .coords
                .iter()
                .flat_map(|c| [c.re.to_bits(), c.im.to_bits()])
                .collect(),
        }
    }
}

impl fmt::Display for ChartPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.chart)?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{:.6}{:+.6}i", c.re, c.im)?;
        }
        write!(f, ")")
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct PointKey {
    chart: ChartId,
    bits: Vec<u64>,
}

/// Domain of one complex coordinate of a chart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CoordDomain {
    Disk { radius: f64 },
    Box { re: (f64, f64), im: (f64, f64) },
}

impl CoordDomain {
    pub fn contains(&self, z: C64) -> bool {
        match *self {
            CoordDomain::Disk { radius } => z.norm() <= radius,
            CoordDomain::Box { re, im } => z.re >= re.0 && z.re <= re.1 && z.im >= im.0 && z.im <= im.1,
        }
    }
}

/// A chart declaration: label plus a domain per complex coordinate.
#[derive(Clone, Debug)]
pub struct Chart {
    pub id: ChartId,
    pub domain: Vec<CoordDomain>,
}

impl Chart {
    pub fn new(id: ChartId, domain: Vec<CoordDomain>) -> Self {
        Self { id, domain }
    }

    pub fn dim(&self) -> usize {
        self.domain.len()
    }

    pub fn check(&self, p: &ChartPoint) -> Result<()> {
        if p.chart != self.id {
            return Err(Error::Domain(format!("point {p} is not in chart {}", self.id)));
        }
        if p.dim() != self.dim() {
            return Err(Error::Dimension(format!(
                "chart {} has dimension {}, point has {}",
                self.id,
                self.dim(),
                p.dim()
            )));
        }
        if !p.is_finite() {
            return Err(Error::Domain(format!("non-finite coordinates {p}")));
        }
        if let Some((i, _)) = self
            .domain
            .iter()
            .enumerate()
            .find(|(i, d)| !d.contains(p.coords[*i]))
        {
            return Err(Error::Domain(format!("coordinate {i} of {p} outside the domain of chart {}", self.id)));
        }
        Ok(())
    }
}

/// A Hermitian matrix attached to a base point.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianForm {
    base: ChartPoint,
    entries: DMatrix<C64>,
}

impl HermitianForm {
    /// Validates Hermitian symmetry to [`HERMITIAN_TOL`] (relative) and then
    /// symmetrizes, so the stored matrix is Hermitian exactly.
    pub fn new(base: ChartPoint, entries: DMatrix<C64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::Dimension(format!(
                "Hermitian form must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let scale = entries.iter().map(|c| c.norm()).fold(1.0_f64, f64::max);
        let n = entries.nrows();
        for i in 0..n {
            for j in 0..n {
                let d = (entries[(i, j)] - entries[(j, i)].conj()).norm();
                if d > HERMITIAN_TOL * scale {
                    return Err(Error::Parameter(format!(
                        "matrix is not Hermitian: |H[{i}][{j}] - conj(H[{j}][{i}])| = {d:.3e}"
                    )));
                }
            }
        }
        Ok(Self::symmetrized(base, entries))
    }

    /// Replaces `H` by `(H + H*)/2` without checking; used for finite-difference
    /// output, whose asymmetry is pure rounding.
    pub fn symmetrized(base: ChartPoint, mut entries: DMatrix<C64>) -> Self {
        let n = entries.nrows();
        for i in 0..n {
            entries[(i, i)] = C64::new(entries[(i, i)].re, 0.0);
            for j in (i + 1)..n {
                let avg = (entries[(i, j)] + entries[(j, i)].conj()) * 0.5;
                entries[(i, j)] = avg;
                entries[(j, i)] = avg.conj();
            }
        }
        Self { base, entries }
    }

    pub fn zeros(base: ChartPoint, n: usize) -> Self {
        Self { base, entries: DMatrix::zeros(n, n) }
    }

    pub fn identity(base: ChartPoint, n: usize) -> Self {
        Self { base, entries: DMatrix::identity(n, n) }
    }

    pub fn base(&self) -> &ChartPoint {
        &self.base
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.entries[(i, j)]
    }

    pub fn is_exactly_hermitian(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| self.entries[(i, j)] == self.entries[(j, i)].conj()))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { base: self.base.clone(), entries: self.entries.map(|c| c * s) }
    }

    /// `self + s·other`; base of `self` is kept.
    pub fn add_scaled(&self, other: &HermitianForm, s: f64) -> Result<Self> {
        if other.dim() != self.dim() {
            return Err(Error::Dimension(format!("cannot add {}x{} and {}x{} forms", self.dim(), self.dim(), other.dim(), other.dim())));
        }
        let entries = &self.entries + other.entries.map(|c| c * s);
        Ok(Self::symmetrized(self.base.clone(), entries))
    }

    /// Pull back along `z = base + P ζ`: returns `Pᵀ H P̄`.
    pub fn pulled_back(&self, p: &DMatrix<C64>, new_base: ChartPoint) -> Self {
        let m = p.transpose() * &self.entries * p.map(|c| c.conj());
        Self::symmetrized(new_base, m)
    }

    /// `Σ H[i][j] v_i conj(v_j)`.
    pub fn quadratic(&self, v: &[C64]) -> f64 {
        let n = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += self.entries[(i, j)] * v[i] * v[j].conj();
            }
        }
        acc.re
    }

    /// Ordinary eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let eig = nalgebra::SymmetricEigen::new(self.entries.clone());
        let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.entries.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn origin() -> ChartPoint {
        ChartPoint::new(ChartId("flat"), vec![C64::new(0.0, 0.0); 2])
    }

    #[test]
    fn hermitian_form_rejects_asymmetric_input() {
        let m = DMatrix::from_row_slice(2, 2, &[C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, 1.0), C64::new(1.0, 0.0)]);
        assert!(matches!(HermitianForm::new(origin(), m), Err(Error::Parameter(_))));
    }

    #[test]
    fn symmetrized_form_is_exactly_hermitian() {
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(1.0, 1e-15), C64::new(0.3, 0.7), C64::new(0.3 + 1e-16, -0.7), C64::new(2.0, 0.0)],
        );
        let h = HermitianForm::symmetrized(origin(), m);
        assert!(h.is_exactly_hermitian());
    }

    #[test]
    fn chart_domain_checks() {
        let chart = Chart::new(ChartId("w"), vec![CoordDomain::Disk { radius: 1.0 }]);
        assert!(chart.check(&ChartPoint::new(ChartId("w"), vec![C64::new(0.5, 0.5)])).is_ok());
        assert!(matches!(chart.check(&ChartPoint::new(ChartId("w"), vec![C64::new(1.5, 0.0)])), Err(Error::Domain(_))));
        assert!(matches!(
            chart.check(&ChartPoint::new(ChartId("w"), vec![C64::new(0.0, 0.0); 2])),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn real_coordinate_layout() {
        let p = ChartPoint::new(ChartId("x"), vec![C64::new(1.0, 2.0), C64::new(3.0, 4.0)]);
        assert_eq!(p.real_coords(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(ChartPoint::from_real(ChartId("x"), &[1.0, 2.0, 3.0, 4.0]), p);
    }

    #[test]
    fn interning_is_stable() {
        let a = intern("w,z");
        let b = intern(&format!("{},{}", "w", "z"));
        assert!(std::ptr::eq(a, b));
    }
}
