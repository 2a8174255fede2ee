//! Generalized Hermitian eigenvalues of a pencil `(M, G)` with `G > 0`.

use nalgebra::DMatrix;

use super::{HermitianForm, C64};
use crate::error::{Error, Result};

/// Base points must agree to this relative tolerance.
const BASE_TOL: f64 = 1e-9;

fn check_pair(m: &HermitianForm, g: &HermitianForm) -> Result<()> {
    if m.dim() != g.dim() {
        return Err(Error::Dimension(format!("forms of size {} and {}", m.dim(), g.dim())));
    }
    let (a, b) = (m.base(), g.base());
    let same = a.chart == b.chart
        && a.dim() == b.dim()
        && a.coords.iter().zip(&b.coords).all(|(x, y)| (x - y).norm() <= BASE_TOL * x.norm().max(1.0));
    if !same {
        return Err(Error::Dimension(format!("forms based at different points {a} and {b}")));
    }
    Ok(())
}

/// Eigenvalues `λ` of `det(M − λG) = 0`, ascending.
pub fn generalized_eigenvalues(m: &HermitianForm, g: &HermitianForm) -> Result<Vec<f64>> {
    check_pair(m, g)?;
    pencil_eigenvalues(m.entries(), g.entries())
}

/// Same as [`generalized_eigenvalues`] on raw matrices.
pub fn pencil_eigenvalues(m: &DMatrix<C64>, g: &DMatrix<C64>) -> Result<Vec<f64>> {
    let not_pd = || Error::Parameter("reference metric is not positive definite".into());
    // Complex Cholesky does not detect negative pivots, so test the spectrum.
    let gmin = nalgebra::SymmetricEigen::new(g.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(gmin > 0.0) {
        return Err(not_pd());
    }
    let l = nalgebra::Cholesky::new(g.clone()).ok_or_else(not_pd)?.l();
    let n = g.nrows();
    // L⁻¹ M L⁻ᴴ, via two triangular solves.
    let x = l
        .solve_lower_triangular(m)
        .ok_or_else(|| Error::Parameter("singular Cholesky factor".into()))?;
    let y = l
        .solve_lower_triangular(&x.adjoint())
        .ok_or_else(|| Error::Parameter("singular Cholesky factor".into()))?;
    let mut s = y.adjoint();
    for i in 0..n {
        s[(i, i)] = C64::new(s[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let avg = (s[(i, j)] + s[(j, i)].conj()) * 0.5;
            s[(i, j)] = avg;
            s[(j, i)] = avg.conj();
        }
    }
    let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    if ev.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("non-finite generalized eigenvalue".into()));
    }
    ev.sort_by(|a, b| a.total_cmp(b));
    Ok(ev)
}

/// `min_v v*(G + H)v / v*Gv`: the largest `ε` with `G + H ≥ εG`.
pub fn min_generalized_eigenvalue(h: &HermitianForm, g: &HermitianForm) -> Result<f64> {
    check_pair(h, g)?;
    let total = g.entries() + h.entries();
    Ok(pencil_eigenvalues(&total, g.entries())?[0])
}

/// `min_v v*Mv / v*Gv` for an already assembled total form `M`.
pub fn min_relative_eigenvalue(total: &HermitianForm, g: &HermitianForm) -> Result<f64> {
    Ok(generalized_eigenvalues(total, g)?[0])
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::geometry::{ChartId, ChartPoint};

    fn base(n: usize) -> ChartPoint {
        ChartPoint::new(ChartId("t"), vec![C64::new(0.0, 0.0); n])
    }

    fn form(m: DMatrix<C64>) -> HermitianForm {
        let n = m.nrows();
        HermitianForm::symmetrized(base(n), m)
    }

    fn diag(d: &[f64]) -> DMatrix<C64> {
        DMatrix::from_fn(d.len(), d.len(), |i, j| if i == j { C64::new(d[i], 0.0) } else { C64::new(0.0, 0.0) })
    }

    fn hermitian_from(vals: &[f64], n: usize) -> DMatrix<C64> {
        let mut m = DMatrix::<C64>::zeros(n, n);
        let mut it = vals.iter();
        for i in 0..n {
            m[(i, i)] = C64::new(*it.next().unwrap(), 0.0);
            for j in (i + 1)..n {
                let v = C64::new(*it.next().unwrap(), *it.next().unwrap());
                m[(i, j)] = v;
                m[(j, i)] = v.conj();
            }
        }
        m
    }

    /// Positive definite `A Aᴴ + δ I`.
    fn spd_from(vals: &[f64], n: usize) -> DMatrix<C64> {
        let a = DMatrix::from_fn(n, n, |i, j| C64::new(vals[2 * (i * n + j)], vals[2 * (i * n + j) + 1]));
        &a * a.adjoint() + diag(&vec![0.5; n])
    }

    /// λ ↦ det(M − λG), real for Hermitian pencils.
    fn char_poly(m: &DMatrix<C64>, g: &DMatrix<C64>, lambda: f64) -> f64 {
        (m - g.map(|c| c * lambda)).determinant().re
    }

    /// Smallest root by scanning and bisection.
    fn oracle_min_root(m: &DMatrix<C64>, g: &DMatrix<C64>) -> f64 {
        let bound = 1.0 + m.iter().map(|c| c.norm()).sum::<f64>() * 1e3;
        let steps = 200_000;
        let dl = 2.0 * bound / steps as f64;
        let mut lo = -bound;
        let mut flo = char_poly(m, g, lo);
        for s in 1..=steps {
            let hi = -bound + s as f64 * dl;
            let fhi = char_poly(m, g, hi);
            if flo == 0.0 {
                return lo;
            }
            if flo.signum() != fhi.signum() {
                let (mut a, mut b, mut fa) = (lo, hi, flo);
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    let fm = char_poly(m, g, mid);
                    if fm.signum() == fa.signum() {
                        a = mid;
                        fa = fm;
                    } else {
                        b = mid;
                    }
                }
                return 0.5 * (a + b);
            }
            lo = hi;
            flo = fhi;
        }
        panic!("no root found");
    }

    #[test]
    fn zero_perturbation_gives_one() {
        let g = form(diag(&[1.0, 1.0]));
        let h = form(DMatrix::zeros(2, 2));
        assert!((min_generalized_eigenvalue(&h, &g).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn diagonal_perturbation() {
        let g = form(diag(&[1.0, 1.0]));
        let h = form(diag(&[1.0, 2.0]));
        assert!((min_generalized_eigenvalue(&h, &g).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn matches_characteristic_polynomial_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let hv: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
            let gv: Vec<f64> = (0..18).map(|_| rng.random_range(-1.0..1.0)).collect();
            let h = hermitian_from(&hv, 3);
            let g = spd_from(&gv, 3);
            let got = min_generalized_eigenvalue(&form(h.clone()), &form(g.clone())).unwrap();
            let expected = oracle_min_root(&(&g + &h), &g);
            assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
        }
    }

    #[test]
    fn rejects_indefinite_reference_and_size_mismatch() {
        let g = form(diag(&[1.0, -1.0]));
        let h = form(DMatrix::zeros(2, 2));
        assert!(matches!(min_generalized_eigenvalue(&h, &g), Err(Error::Parameter(_))));
        let h3 = form(DMatrix::zeros(3, 3));
        assert!(matches!(min_generalized_eigenvalue(&h3, &form(diag(&[1.0, 1.0]))), Err(Error::Dimension(_))));
    }

    proptest! {
        #[test]
        fn congruence_invariance(
            hv in proptest::collection::vec(-2.0f64..2.0, 4),
            gv in proptest::collection::vec(-1.0f64..1.0, 8),
            pv in proptest::collection::vec(-1.0f64..1.0, 8),
        ) {
            let h = hermitian_from(&hv, 2);
            let g = spd_from(&gv, 2);
            let p = DMatrix::from_fn(2, 2, |i, j| C64::new(pv[2 * (i * 2 + j)], pv[2 * (i * 2 + j) + 1]))
                + diag(&[2.5, 2.5]);
            let before = min_generalized_eigenvalue(&form(h.clone()), &form(g.clone())).unwrap();
            let hp = p.adjoint() * &h * &p;
            let gp = p.adjoint() * &g * &p;
            let after = min_generalized_eigenvalue(&form(hp), &form(gp)).unwrap();
            prop_assert!((before - after).abs() <= 1e-9 * before.abs().max(1.0));
        }
    }
}
