//! Local Kähler potentials of the form `P + Σ κ_j log Q_j`, with `P` and
//! `Q_j` real-valued polynomials in `(z, z̄)`.
//!
//! Every shipped model (flat spaces, Fubini–Study factors, flat tori and the
//! Serre surface) has potentials of this shape, which lets the metric and its
//! first holomorphic derivatives be evaluated in closed form. The derivatives
//! feed the Christoffel symbols of the geodesic integrator.

use nalgebra::{DMatrix, SMatrix};

use super::C64;

const MAX_POW: usize = 8;

/// `coef · Π z_i^{hol_i} z̄_i^{anti_i}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Monomial<const N: usize> {
    pub coef: C64,
    pub hol: [u8; N],
    pub anti: [u8; N],
}

impl<const N: usize> Monomial<N> {
    pub fn new(coef: C64, hol: [u8; N], anti: [u8; N]) -> Self {
        debug_assert!(hol.iter().chain(anti.iter()).all(|&e| (e as usize) < MAX_POW));
        Self { coef, hol, anti }
    }
}

/// A polynomial in `(z, z̄)`. Callers are responsible for making it real
/// valued (closed under conjugation of monomials).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HermitianPoly<const N: usize> {
    pub terms: Vec<Monomial<N>>,
}

/// Derivatives of a polynomial needed for the metric and its first
/// holomorphic derivative.
#[derive(Clone, Copy, Debug)]
pub struct PolyJet<const N: usize> {
    pub val: C64,
    /// `∂_i`
    pub d: [C64; N],
    /// `∂_{ī}`
    pub db: [C64; N],
    /// `∂_i ∂_{j̄}`
    pub mixed: [[C64; N]; N],
    /// `∂_i ∂_k`
    pub hol2: [[C64; N]; N],
    /// `[k][i][j]` = `∂_k ∂_i ∂_{j̄}`
    pub third: [[[C64; N]; N]; N],
}

fn falling(e: u8, k: u8) -> f64 {
    if k > e {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, t| acc * (e - t) as f64)
}

struct Powers<const N: usize> {
    z: [[C64; MAX_POW]; N],
    zb: [[C64; MAX_POW]; N],
}

impl<const N: usize> Powers<N> {
    fn new(z: &[C64; N]) -> Self {
        let one = C64::new(1.0, 0.0);
        let mut zp = [[one; MAX_POW]; N];
        let mut zbp = [[one; MAX_POW]; N];
        for i in 0..N {
            let zi = z[i];
            let zbi = zi.conj();
            for e in 1..MAX_POW {
                zp[i][e] = zp[i][e - 1] * zi;
                zbp[i][e] = zbp[i][e - 1] * zbi;
            }
        }
        Self { z: zp, zb: zbp }
    }
}

impl<const N: usize> HermitianPoly<N> {
    pub fn new(terms: Vec<Monomial<N>>) -> Self {
        Self { terms }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![Monomial::new(C64::new(c, 0.0), [0; N], [0; N])])
    }

    /// `weight · |z_i|²`
    pub fn norm_sq(i: usize, weight: f64) -> Self {
        let mut e = [0u8; N];
        e[i] = 1;
        Self::new(vec![Monomial::new(C64::new(weight, 0.0), e, e)])
    }

    pub fn plus(mut self, other: Self) -> Self {
        self.terms.extend(other.terms);
        self
    }

    fn deriv_with(&self, pw: &Powers<N>, dh: [u8; N], da: [u8; N]) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        'terms: for m in &self.terms {
            let mut c = m.coef;
            for i in 0..N {
                if dh[i] > m.hol[i] || da[i] > m.anti[i] {
                    continue 'terms;
                }
                let f = falling(m.hol[i], dh[i]) * falling(m.anti[i], da[i]);
                c *= pw.z[i][(m.hol[i] - dh[i]) as usize] * pw.zb[i][(m.anti[i] - da[i]) as usize] * f;
            }
            acc += c;
        }
        acc
    }

    /// `∂^{dh}_z ∂^{da}_{z̄}` evaluated at `z`.
    pub fn derivative(&self, z: &[C64; N], dh: [u8; N], da: [u8; N]) -> C64 {
        self.deriv_with(&Powers::new(z), dh, da)
    }

    pub fn value(&self, z: &[C64; N]) -> f64 {
        self.derivative(z, [0; N], [0; N]).re
    }

    pub fn jet(&self, z: &[C64; N]) -> PolyJet<N> {
        let pw = Powers::new(z);
        let zero = C64::new(0.0, 0.0);
        let unit = |i: usize| {
            let mut e = [0u8; N];
            e[i] += 1;
            e
        };
        let pair = |i: usize, k: usize| {
            let mut e = [0u8; N];
            e[i] += 1;
            e[k] += 1;
            e
        };
        let mut jet = PolyJet {
            val: self.deriv_with(&pw, [0; N], [0; N]),
            d: [zero; N],
            db: [zero; N],
            mixed: [[zero; N]; N],
            hol2: [[zero; N]; N],
            third: [[[zero; N]; N]; N],
        };
        for i in 0..N {
            jet.d[i] = self.deriv_with(&pw, unit(i), [0; N]);
            jet.db[i] = self.deriv_with(&pw, [0; N], unit(i));
            for j in 0..N {
                jet.mixed[i][j] = self.deriv_with(&pw, unit(i), unit(j));
                jet.hol2[i][j] = self.deriv_with(&pw, pair(i, j), [0; N]);
                for k in 0..N {
                    jet.third[k][i][j] = self.deriv_with(&pw, pair(i, k), unit(j));
                }
            }
        }
        jet
    }
}

/// `poly + Σ κ log Q`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KahlerPotential<const N: usize> {
    pub poly: HermitianPoly<N>,
    pub logs: Vec<(f64, HermitianPoly<N>)>,
}

pub type Metric<const N: usize> = SMatrix<C64, N, N>;

impl<const N: usize> KahlerPotential<N> {
    pub fn new(poly: HermitianPoly<N>, logs: Vec<(f64, HermitianPoly<N>)>) -> Self {
        Self { poly, logs }
    }

    pub fn value(&self, z: &[C64; N]) -> f64 {
        let mut v = self.poly.value(z);
        for (kappa, q) in &self.logs {
            v += kappa * q.value(z).ln();
        }
        v
    }

    /// `G[i][j] = ∂_i ∂_{j̄} ψ`.
    pub fn metric(&self, z: &[C64; N]) -> Metric<N> {
        let pw = Powers::new(z);
        let mut g = Metric::<N>::zeros();
        let unit = |i: usize| {
            let mut e = [0u8; N];
            e[i] += 1;
            e
        };
        for i in 0..N {
            for j in 0..N {
                g[(i, j)] = self.poly.deriv_with(&pw, unit(i), unit(j));
            }
        }
        for (kappa, q) in &self.logs {
            let qv = q.deriv_with(&pw, [0; N], [0; N]).re;
            let d: Vec<C64> = (0..N).map(|i| q.deriv_with(&pw, unit(i), [0; N])).collect();
            let db: Vec<C64> = (0..N).map(|i| q.deriv_with(&pw, [0; N], unit(i))).collect();
            for i in 0..N {
                for j in 0..N {
                    let mixed = q.deriv_with(&pw, unit(i), unit(j));
                    g[(i, j)] += (mixed / qv - d[i] * db[j] / (qv * qv)) * *kappa;
                }
            }
        }
        g
    }

    /// Metric together with `dG[k] = ∂_k G`.
    pub fn metric_and_derivative(&self, z: &[C64; N]) -> (Metric<N>, [Metric<N>; N]) {
        let pj = self.poly.jet(z);
        let mut g = Metric::<N>::zeros();
        let mut dg = [Metric::<N>::zeros(); N];
        for i in 0..N {
            for j in 0..N {
                g[(i, j)] = pj.mixed[i][j];
                for k in 0..N {
                    dg[k][(i, j)] = pj.third[k][i][j];
                }
            }
        }
        for (kappa, q) in &self.logs {
            let qj = q.jet(z);
            let qv = qj.val.re;
            let q2 = qv * qv;
            let q3 = q2 * qv;
            for i in 0..N {
                for j in 0..N {
                    g[(i, j)] += (qj.mixed[i][j] / qv - qj.d[i] * qj.db[j] / q2) * *kappa;
                    for k in 0..N {
                        let t = qj.third[k][i][j] / qv
                            - (qj.mixed[i][j] * qj.d[k] + qj.hol2[i][k] * qj.db[j] + qj.d[i] * qj.mixed[k][j]) / q2
                            + qj.d[i] * qj.db[j] * qj.d[k] * (2.0 / q3);
                        dg[k][(i, j)] += t * *kappa;
                    }
                }
            }
        }
        (g, dg)
    }
}

/// A chart potential of either supported dimension.
#[derive(Clone, Copy, Debug)]
pub enum ChartPotential<'a> {
    One(&'a KahlerPotential<1>),
    Two(&'a KahlerPotential<2>),
}

impl ChartPotential<'_> {
    pub fn dim(&self) -> usize {
        match self {
            ChartPotential::One(_) => 1,
            ChartPotential::Two(_) => 2,
        }
    }

    pub fn value(&self, coords: &[C64]) -> f64 {
        match self {
            ChartPotential::One(p) => p.value(&[coords[0]]),
            ChartPotential::Two(p) => p.value(&[coords[0], coords[1]]),
        }
    }

    pub fn metric(&self, coords: &[C64]) -> DMatrix<C64> {
        match self {
            ChartPotential::One(p) => {
                let g = p.metric(&[coords[0]]);
                DMatrix::from_iterator(1, 1, g.iter().copied())
            }
            ChartPotential::Two(p) => {
                let g = p.metric(&[coords[0], coords[1]]);
                DMatrix::from_fn(2, 2, |i, j| g[(i, j)])
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn fubini_study(weight: f64) -> KahlerPotential<1> {
        KahlerPotential::new(HermitianPoly::default(), vec![(weight, HermitianPoly::constant(1.0).plus(HermitianPoly::norm_sq(0, 1.0)))])
    }

    #[test]
    fn fubini_study_metric_closed_form() {
        let p = fubini_study(1.0);
        for w in [c(0.0, 0.0), c(0.3, -0.2), c(1.5, 0.7)] {
            let g = p.metric(&[w]);
            let expected = 1.0 / (1.0 + w.norm_sqr()).powi(2);
            assert!((g[(0, 0)].re - expected).abs() < 1e-14);
            assert!(g[(0, 0)].im.abs() < 1e-15);
        }
    }

    #[test]
    fn metric_derivative_matches_finite_differences() {
        // w - z̄ coupling: exercises mixed and holomorphic-holomorphic terms.
        let q = HermitianPoly::new(vec![
            Monomial::new(c(1.0, 0.0), [0, 0], [0, 0]),
            Monomial::new(c(1.0, 0.0), [1, 0], [1, 0]),
            Monomial::new(c(-1.0, 0.0), [1, 1], [0, 0]),
            Monomial::new(c(-1.0, 0.0), [0, 0], [1, 1]),
            Monomial::new(c(1.0, 0.0), [0, 1], [0, 1]),
        ]);
        let p = KahlerPotential::new(HermitianPoly::norm_sq(1, 2.0), vec![(0.7, q)]);
        let z = [c(0.3, 0.4), c(-0.2, 0.1)];
        let (_, dg) = p.metric_and_derivative(&z);
        let h = 1e-6;
        for k in 0..2 {
            // ∂_k = (∂_x - i ∂_y)/2
            let mut zp = z;
            let mut zm = z;
            zp[k] += c(h, 0.0);
            zm[k] -= c(h, 0.0);
            let dx = (p.metric(&zp) - p.metric(&zm)) / c(2.0 * h, 0.0);
            let mut zp = z;
            let mut zm = z;
            zp[k] += c(0.0, h);
            zm[k] -= c(0.0, h);
            let dy = (p.metric(&zp) - p.metric(&zm)) / c(2.0 * h, 0.0);
            let fd = (dx - dy * c(0.0, 1.0)) * c(0.5, 0.0);
            assert!((fd - dg[k]).norm() < 1e-8, "k={k}: {fd} vs {}", dg[k]);
        }
    }

    #[test]
    fn metric_matches_metric_and_derivative() {
        let p = fubini_study(2.0);
        let z = [c(0.4, 0.9)];
        let (g, _) = p.metric_and_derivative(&z);
        assert!((g - p.metric(&z)).norm() < 1e-15);
    }
}
