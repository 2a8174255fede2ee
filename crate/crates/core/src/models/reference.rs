//! Reference function `F = c·χ(h) − K` with a logarithmic pole along `V`.
//!
//! `χ(h) = log h − h/R²` for `h < R²` and `log R² − 1` beyond, with `R` the
//! tube radius. `χ` is `C¹`, concave in `h`, and its cap is the flattest one
//! reaching a constant by `h = R²`. `K` places `sup F` at `−1`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::{metric_at, model_samples, ManifoldModel, ReferenceConfig};
use crate::error::{Error, Result};
use crate::geometry::{complex_hessian, pencil_eigenvalues, ChartPoint, FieldRef, ScalarField, SingularLocus};

/// `χ` as a function of `h`.
pub fn capped_log(h: f64, tube_radius: f64) -> f64 {
    let r2 = tube_radius * tube_radius;
    if h >= r2 {
        r2.ln() - 1.0
    } else {
        h.ln() - h / r2
    }
}

struct Chi {
    h: FieldRef,
    tube_radius: f64,
    margin: f64,
}

impl Chi {
    fn h_or_cap(&self, p: &ChartPoint) -> Result<f64> {
        match self.h.evaluate(p) {
            Err(Error::OutsideTube) => Ok(f64::INFINITY),
            other => other,
        }
    }
}

impl ScalarField for Chi {
    fn evaluate(&self, p: &ChartPoint) -> Result<f64> {
        Ok(capped_log(self.h_or_cap(p)?, self.tube_radius))
    }

    fn singular_locus(&self) -> SingularLocus {
        SingularLocus::Submanifold
    }

    fn singular_distance(&self, p: &ChartPoint) -> Result<Option<f64>> {
        Ok(Some(self.h_or_cap(p)?.sqrt()))
    }

    fn smoothness_margin(&self) -> f64 {
        self.margin
    }
}

/// The certified reference function.
#[derive(Clone, Serialize)]
pub struct ReferenceFunction {
    pub c: f64,
    pub k: f64,
    /// Certified `ε` with `ω + i∂∂̄F ≥ ε·ω` on the certification samples.
    pub epsilon: f64,
    /// Minimum over samples of the smallest eigenvalue of `i∂∂̄χ` relative to `ω`.
    pub chi_curvature_min: f64,
    pub tube_radius: f64,
    /// Distance to `V` below which samples are excluded.
    pub collar: f64,
    pub samples: usize,
    pub worst_sample: Option<ChartPoint>,
    #[serde(skip)]
    chi: FieldRef,
}

impl std::fmt::Debug for ReferenceFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReferenceFunction")
            .field("c", &self.c)
            .field("k", &self.k)
            .field("epsilon", &self.epsilon)
            .field("samples", &self.samples)
            .finish()
    }
}

struct Reference {
    chi: FieldRef,
    c: f64,
    k: f64,
}

impl ScalarField for Reference {
    fn evaluate(&self, p: &ChartPoint) -> Result<f64> {
        Ok(self.c * self.chi.evaluate(p)? - self.k)
    }

    fn singular_locus(&self) -> SingularLocus {
        SingularLocus::Submanifold
    }

    fn singular_distance(&self, p: &ChartPoint) -> Result<Option<f64>> {
        self.chi.singular_distance(p)
    }

    fn smoothness_margin(&self) -> f64 {
        self.chi.smoothness_margin()
    }
}

impl ReferenceFunction {
    /// `F` as a field. Evaluates to `−∞` exactly on `V`.
    pub fn field(&self) -> FieldRef {
        self.scaled_field(1.0)
    }

    /// `s·F`, with the scaling folded into `c` and `K`.
    pub fn scaled_field(&self, s: f64) -> FieldRef {
        Arc::new(Reference { chi: self.chi.clone(), c: s * self.c, k: s * self.k })
    }

    /// `χ` itself, so that `i∂∂̄F = c·i∂∂̄χ`.
    pub fn chi(&self) -> FieldRef {
        self.chi.clone()
    }

    /// `F` as a function of `h`.
    pub fn value_at_h(&self, h: f64) -> f64 {
        self.c * capped_log(h, self.tube_radius) - self.k
    }
}

/// Builds `F` for the model and certifies its curvature bound.
///
/// Since `ε(c) = 1 + c·μ` with `μ` the worst relative eigenvalue of `i∂∂̄χ`,
/// the largest admissible `c` in the configured range is solved for directly.
pub fn reference_function(
    model: &dyn ManifoldModel,
    h: FieldRef,
    cfg: &ReferenceConfig,
    spacing: f64,
    jitter_seed: u64,
    step: f64,
) -> Result<ReferenceFunction> {
    let tube_radius = model.tube_radius();
    let collar = cfg.collar * tube_radius;
    let chi: FieldRef = Arc::new(Chi { h, tube_radius, margin: collar });
    let mut points = Vec::new();
    for grid in model_samples(model, spacing, jitter_seed)? {
        let g = grid.exclude(collar, |p| Ok(chi.singular_distance(p)?.unwrap_or(f64::INFINITY)));
        points.extend(g.points().iter().cloned());
    }
    if points.is_empty() {
        return Err(Error::Construction("no certification samples outside the collar".into()));
    }
    let mus: Vec<Result<f64>> = points
        .par_iter()
        .map(|p| {
            let q = complex_hessian(chi.as_ref(), p, step)?;
            let g = metric_at(model, p)?;
            Ok(pencil_eigenvalues(q.entries(), g.entries())?[0])
        })
        .collect();
    let mut mu = f64::INFINITY;
    let mut worst = None;
    for (p, m) in points.iter().zip(mus) {
        let m = m?;
        if m < mu {
            mu = m;
            worst = Some(p.clone());
        }
    }
    let [c_lo, c_hi] = cfg.c_range;
    let epsilon_at = |c: f64| 1.0 + c * mu.min(0.0);
    let c = if mu >= 0.0 { c_hi } else { c_hi.min((1.0 - cfg.epsilon_target) / -mu) };
    if c < c_lo || epsilon_at(c) < cfg.epsilon_target {
        return Err(Error::Construction(format!(
            "no c in [{c_lo}, {c_hi}] reaches epsilon {}: best c = {c_lo} with epsilon {:.6}",
            cfg.epsilon_target,
            epsilon_at(c_lo)
        )));
    }
    let k = c * capped_log(f64::INFINITY, tube_radius) + 1.0;
    Ok(ReferenceFunction {
        c,
        k,
        epsilon: epsilon_at(c),
        chi_curvature_min: mu,
        tube_radius,
        collar,
        samples: points.len(),
        worst_sample: worst,
        chi,
    })
}
