//! The lattice `⟨1, τ⟩ ⊂ ℂ`.

use crate::error::{Error, Result};
use crate::geometry::{CoordDomain, C64};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lattice {
    pub tau: C64,
}

impl Lattice {
    pub fn new(tau: C64) -> Result<Self> {
        if !(tau.im > 0.0) || !tau.re.is_finite() || !tau.im.is_finite() {
            return Err(Error::Parameter(format!("tau must lie in the upper half plane, got Im(tau) = {}", tau.im)));
        }
        Ok(Self { tau })
    }

    pub fn point(&self, m: i64, n: i64) -> C64 {
        C64::new(m as f64, 0.0) + self.tau * n as f64
    }

    /// Real coordinates `(a, b)` with `z = a + bτ`.
    pub fn coordinates(&self, z: C64) -> (f64, f64) {
        let b = z.im / self.tau.im;
        (z.re - b * self.tau.re, b)
    }

    /// Lattice vector `λ` with `z − λ` in the half-open parallelogram
    /// `{a + bτ : a, b ∈ [0, 1)}`.
    pub fn reduction(&self, z: C64) -> C64 {
        let (a, b) = self.coordinates(z);
        self.point(a.floor() as i64, b.floor() as i64)
    }

    /// Lattice vector `λ` with `z − λ` in `{a + bτ : a, b ∈ [−½, ½)}`.
    pub fn centred_reduction(&self, z: C64) -> C64 {
        let (a, b) = self.coordinates(z);
        self.point((a + 0.5).floor() as i64, (b + 0.5).floor() as i64)
    }

    /// `λ` minimizing `|d − λ|`.
    pub fn closest(&self, d: C64) -> C64 {
        let (a, b) = self.coordinates(d);
        let (a0, b0) = (a.round() as i64, b.round() as i64);
        let mut best = self.point(a0, b0);
        let mut best_d = (d - best).norm_sqr();
        for dm in -2..=2 {
            for dn in -2..=2 {
                let l = self.point(a0 + dm, b0 + dn);
                let e = (d - l).norm_sqr();
                if e < best_d {
                    best_d = e;
                    best = l;
                }
            }
        }
        best
    }

    /// `min_λ |d − λ|²`.
    pub fn distance_sq(&self, d: C64) -> f64 {
        (d - self.closest(d)).norm_sqr()
    }

    /// Length of the shortest nonzero lattice vector.
    pub fn shortest(&self) -> f64 {
        let mut best = f64::INFINITY;
        for m in -3i64..=3 {
            for n in -3i64..=3 {
                if m != 0 || n != 0 {
                    best = best.min(self.point(m, n).norm());
                }
            }
        }
        best
    }

    /// Bounding box of the fundamental parallelogram.
    pub fn fundamental_box(&self) -> CoordDomain {
        let re_lo = self.tau.re.min(0.0);
        let re_hi = 1.0 + self.tau.re.max(0.0);
        CoordDomain::Box { re: (re_lo, re_hi), im: (0.0, self.tau.im) }
    }

    /// Bounding box of the parallelogram centred at the origin.
    pub fn centred_box(&self) -> CoordDomain {
        let half = 0.5 * (C64::new(1.0, 0.0).norm() + self.tau.re.abs());
        CoordDomain::Box { re: (-half, half), im: (-0.5 * self.tau.im, 0.5 * self.tau.im) }
    }

    /// A box of lifted coordinates comfortably containing a few
    /// fundamental domains around the origin.
    pub fn lifted_box(&self) -> CoordDomain {
        let r = 6.0 * (1.0 + self.tau.norm());
        CoordDomain::Box { re: (-r, r), im: (-r, r) }
    }
}
