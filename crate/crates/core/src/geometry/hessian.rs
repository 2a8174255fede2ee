//! Central-difference real and complex Hessians.

use nalgebra::DMatrix;

use super::{ChartPoint, HermitianForm, ScalarField, C64};
use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-3;

/// Smallest admissible step relative to the coordinate magnitude.
pub const MIN_RELATIVE_STEP: f64 = 1e-7;

fn check_step(p: &ChartPoint, step: f64) -> Result<()> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Parameter(format!("Hessian step must be positive, got {step}")));
    }
    let scale = p.coords.iter().map(|c| c.norm()).fold(1.0_f64, f64::max);
    if step < MIN_RELATIVE_STEP * scale {
        return Err(Error::Parameter(format!(
            "Hessian step {step:.3e} is below the coordinate resolution {:.3e}",
            MIN_RELATIVE_STEP * scale
        )));
    }
    Ok(())
}

fn check_singular(f: &dyn ScalarField, p: &ChartPoint, step: f64) -> Result<()> {
    if let Some(d) = f.singular_distance(p)? {
        let need = f.smoothness_margin().max(2.0 * step);
        if d < need {
            return Err(Error::Refused(format!(
                "Hessian at {p}: distance {d:.3e} to the singular locus is below {need:.3e}"
            )));
        }
    }
    Ok(())
}

/// Real Hessian in the `2n` coordinates `(Re z_1, Im z_1, ...)`.
pub fn real_hessian(f: &dyn ScalarField, p: &ChartPoint, step: f64) -> Result<DMatrix<f64>> {
    check_step(p, step)?;
    check_singular(f, p, step)?;
    let x0 = p.real_coords();
    let m = x0.len();
    let eval = |x: &[f64]| -> Result<f64> {
        let q = ChartPoint::from_real(p.chart, x);
        let v = f.evaluate(&q)?;
        if !v.is_finite() {
            return Err(Error::Refused(format!("field is not finite at stencil point {q}")));
        }
        Ok(v)
    };
    let f0 = eval(&x0)?;
    let mut r = DMatrix::<f64>::zeros(m, m);
    let h2 = step * step;
    let mut x = x0.clone();
    for i in 0..m {
        x[i] = x0[i] + step;
        let fp = eval(&x)?;
        x[i] = x0[i] - step;
        let fm = eval(&x)?;
        x[i] = x0[i];
        r[(i, i)] = (fp - 2.0 * f0 + fm) / h2;
    }
    for i in 0..m {
        for j in (i + 1)..m {
            let mut acc = 0.0;
            for (si, sj, sign) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
                x[i] = x0[i] + si * step;
                x[j] = x0[j] + sj * step;
                acc += sign * eval(&x)?;
            }
            x[i] = x0[i];
            x[j] = x0[j];
            let v = acc / (4.0 * h2);
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    Ok(r)
}

/// Converts a real `2n × 2n` Hessian to `∂²/∂z_i∂z̄_j` via
/// `¼(∂x_i∂x_j + ∂y_i∂y_j + i(∂x_i∂y_j − ∂y_i∂x_j))`.
pub fn complex_from_real(r: &DMatrix<f64>) -> DMatrix<C64> {
    let n = r.nrows() / 2;
    DMatrix::from_fn(n, n, |i, j| {
        let (xi, yi, xj, yj) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
        C64::new(0.25 * (r[(xi, xj)] + r[(yi, yj)]), 0.25 * (r[(xi, yj)] - r[(yi, xj)]))
    })
}

/// Complex Hessian `(∂²f/∂z_i∂z̄_j)(p)` from central second differences.
///
/// Refuses (with [`Error::Refused`]) when `p` is within
/// `max(smoothness_margin, 2·step)` of the field's singular locus.
pub fn complex_hessian(f: &dyn ScalarField, p: &ChartPoint, step: f64) -> Result<HermitianForm> {
    let r = real_hessian(f, p, step)?;
    Ok(HermitianForm::symmetrized(p.clone(), complex_from_real(&r)))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::geometry::field::{from_fn, FnField, SingularLocus};
    use crate::geometry::ChartId;

    fn pt(z: &[C64]) -> ChartPoint {
        ChartPoint::new(ChartId("flat"), z.to_vec())
    }

    fn zero2() -> ChartPoint {
        pt(&[C64::new(0.0, 0.0), C64::new(0.0, 0.0)])
    }

    #[test]
    fn norm_squared_of_first_coordinate() {
        let f = from_fn(|p| Ok(p.coords[0].norm_sqr()));
        let h = complex_hessian(f.as_ref(), &zero2(), 1e-3).unwrap();
        assert!((h.get(0, 0) - C64::new(1.0, 0.0)).norm() < 1e-6);
        assert!(h.get(0, 1).norm() < 1e-6 && h.get(1, 1).norm() < 1e-6);
        assert!(h.is_exactly_hermitian());
    }

    #[test]
    fn pluriharmonic_real_part_has_zero_hessian() {
        let f = from_fn(|p| Ok((p.coords[0] * p.coords[0]).re));
        let h = complex_hessian(f.as_ref(), &zero2(), 1e-3).unwrap();
        assert!(h.max_abs_entry() < 1e-6);
    }

    #[test]
    fn log_one_plus_norm_squared_at_origin() {
        // ∂∂̄ log(1+|w|²) = 1/(1+|w|²)², equal to 1 at w = 0.
        let f = from_fn(|p| Ok((1.0 + p.coords[0].norm_sqr()).ln()));
        let h = complex_hessian(f.as_ref(), &pt(&[C64::new(0.0, 0.0)]), 1e-3).unwrap();
        assert!((h.get(0, 0).re - 1.0).abs() < 1e-5);
    }

    #[test]
    fn imaginary_part_sign_of_mixed_entry() {
        // f = 2 Im(z1 z̄2) = -i(z1 z̄2 - z̄1 z2) has ∂²f/∂z1∂z̄2 = -i.
        let f = from_fn(|p| Ok(2.0 * (p.coords[0] * p.coords[1].conj()).im));
        let h = complex_hessian(f.as_ref(), &zero2(), 1e-3).unwrap();
        assert!((h.get(0, 1) - C64::new(0.0, -1.0)).norm() < 1e-9);
        assert!((h.get(1, 0) - C64::new(0.0, 1.0)).norm() < 1e-9);
    }

    #[test]
    fn second_order_convergence_for_quartic() {
        let f = from_fn(|p| Ok(p.coords[0].norm_sqr().powi(2)));
        let e1 = complex_hessian(f.as_ref(), &zero2(), 1e-2).unwrap().max_abs_entry();
        let e2 = complex_hessian(f.as_ref(), &zero2(), 5e-3).unwrap().max_abs_entry();
        assert!(e1 / e2 >= 3.0, "error ratio {}", e1 / e2);
    }

    #[test]
    fn refuses_near_singular_locus() {
        let f = FnField::new(|p: &ChartPoint| Ok(p.coords[0].norm_sqr().ln())).with_singularity(
            SingularLocus::Points(vec![pt(&[C64::new(0.0, 0.0)])]),
            0.05,
            |p| Ok(p.coords[0].norm()),
        );
        let f = Arc::new(f);
        let near = pt(&[C64::new(0.01, 0.0)]);
        assert!(matches!(complex_hessian(f.as_ref(), &near, 1e-3), Err(Error::Refused(_))));
        let far = pt(&[C64::new(0.5, 0.0)]);
        let h = complex_hessian(f.as_ref(), &far, 1e-3).unwrap();
        assert!(h.get(0, 0).norm() < 1e-5, "log|z|² is harmonic off 0");
    }

    #[test]
    fn rejects_unresolvable_step() {
        let f = from_fn(|p| Ok(p.coords[0].norm_sqr()));
        assert!(matches!(complex_hessian(f.as_ref(), &zero2(), 1e-9), Err(Error::Parameter(_))));
        assert!(matches!(complex_hessian(f.as_ref(), &zero2(), -1.0), Err(Error::Parameter(_))));
    }
}
