//! Scalar fields: functions from chart points to `[-∞, ∞)`.

use std::fmt;
use std::sync::Arc;

use super::ChartPoint;
use crate::error::Result;

pub type FieldRef = Arc<dyn ScalarField>;

/// Where a field may take the value `-∞`.
#[derive(Clone, Debug, PartialEq)]
pub enum SingularLocus {
    None,
    /// The submanifold `V` of the ambient model.
    Submanifold,
    /// Finitely many points, in the chart coordinates they were declared in.
    Points(Vec<ChartPoint>),
    /// Several loci at once (sums of singular fields).
    Union(Vec<SingularLocus>),
}

impl SingularLocus {
    pub fn is_none(&self) -> bool {
        matches!(self, SingularLocus::None)
    }

    fn union(list: Vec<SingularLocus>) -> SingularLocus {
        let mut parts: Vec<SingularLocus> = list.into_iter().filter(|l| !l.is_none()).collect();
        match parts.len() {
            0 => SingularLocus::None,
            1 => parts.pop().unwrap(),
            _ => SingularLocus::Union(parts),
        }
    }
}

/// An evaluation contract `ChartPoint → [-∞, ∞)`.
///
/// Implementations must agree on overlapping charts and return `-∞` only on
/// their declared singular locus. Points where a field is undefined (outside a
/// tube, outside the atlas) produce an error, never a made-up value.
pub trait ScalarField: Send + Sync {
    fn evaluate(&self, p: &ChartPoint) -> Result<f64>;

    fn singular_locus(&self) -> SingularLocus {
        SingularLocus::None
    }

    /// Distance from `p` to the singular locus; `None` for fields that are
    /// smooth everywhere they are defined.
    fn singular_distance(&self, _p: &ChartPoint) -> Result<Option<f64>> {
        Ok(None)
    }

    /// Distance to the singular locus below which Hessians are refused.
    fn smoothness_margin(&self) -> f64 {
        0.0
    }
}

/// A field backed by a closure. Smooth unless a singular-distance closure is
/// attached.
pub struct FnField<F> {
    f: F,
    locus: SingularLocus,
    dist: Option<Arc<dyn Fn(&ChartPoint) -> Result<f64> + Send + Sync>>,
    margin: f64,
}

impl<F> FnField<F>
where
    F: Fn(&ChartPoint) -> Result<f64> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self { f, locus: SingularLocus::None, dist: None, margin: 0.0 }
    }

    pub fn with_singularity(
        mut self,
        locus: SingularLocus,
        margin: f64,
        dist: impl Fn(&ChartPoint) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        self.locus = locus;
        self.margin = margin;
        self.dist = Some(Arc::new(dist));
        self
    }
}

impl<F> ScalarField for FnField<F>
where
    F: Fn(&ChartPoint) -> Result<f64> + Send + Sync,
{
    fn evaluate(&self, p: &ChartPoint) -> Result<f64> {
        (self.f)(p)
    }

    fn singular_locus(&self) -> SingularLocus {
        self.locus.clone()
    }

    fn singular_distance(&self, p: &ChartPoint) -> Result<Option<f64>> {
        match &self.dist {
            Some(d) => d(p).map(Some),
            None => Ok(None),
        }
    }

    fn smoothness_margin(&self) -> f64 {
        self.margin
    }
}

pub fn from_fn(f: impl Fn(&ChartPoint) -> Result<f64> + Send + Sync + 'static) -> FieldRef {
    Arc::new(FnField::new(f))
}

/// `Σ c_i f_i`.
#[derive(Clone)]
pub struct LinearCombination {
    terms: Vec<(f64, FieldRef)>,
}

impl fmt::Debug for LinearCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearCombination").field("coefficients", &self.terms.iter().map(|t| t.0).collect::<Vec<_>>()).finish()
    }
}

impl LinearCombination {
    pub fn new(terms: Vec<(f64, FieldRef)>) -> Self {
        Self { terms: terms.into_iter().filter(|(c, _)| *c != 0.0).collect() }
    }
}

impl ScalarField for LinearCombination {
    fn evaluate(&self, p: &ChartPoint) -> Result<f64> {
        let mut acc = 0.0;
        for (c, f) in &self.terms {
            acc += c * f.evaluate(p)?;
        }
        Ok(acc)
    }

    fn singular_locus(&self) -> SingularLocus {
        SingularLocus::union(self.terms.iter().map(|(_, f)| f.singular_locus()).collect())
    }

    fn singular_distance(&self, p: &ChartPoint) -> Result<Option<f64>> {
        let mut best: Option<f64> = None;
        for (_, f) in &self.terms {
            if let Some(d) = f.singular_distance(p)? {
                best = Some(best.map_or(d, |b| b.min(d)));
            }
        }
        Ok(best)
    }

    fn smoothness_margin(&self) -> f64 {
        self.terms.iter().map(|(_, f)| f.smoothness_margin()).fold(0.0, f64::max)
    }
}

pub fn add(a: FieldRef, b: FieldRef) -> FieldRef {
    Arc::new(LinearCombination::new(vec![(1.0, a), (1.0, b)]))
}

pub fn scale(s: f64, a: FieldRef) -> FieldRef {
    Arc::new(LinearCombination::new(vec![(s, a)]))
}

pub fn constant(c: f64) -> FieldRef {
    from_fn(move |_| Ok(c))
}

/// Pointwise `max(a, b)`, or a regularized max of width `width` when given.
pub struct Maximum {
    a: FieldRef,
    b: FieldRef,
    width: Option<f64>,
}

impl Maximum {
    pub fn new(a: FieldRef, b: FieldRef) -> Self {
        Self { a, b, width: None }
    }

    pub fn regularized(a: FieldRef, b: FieldRef, width: f64) -> Self {
        Self { a, b, width: Some(width) }
    }
}

/// Smooth (C²) convex upper approximation of `max(a, b)`, equal to the plain
/// max once `|a - b| ≥ width`.
pub fn regularized_max(a: f64, b: f64, width: f64) -> f64 {
    if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY || width <= 0.0 {
        return a.max(b);
    }
    let x = (a - b) / width;
    if x.abs() >= 1.0 {
        return a.max(b);
    }
    let g = (-x.powi(4) + 6.0 * x * x + 3.0) / 8.0;
    0.5 * (a + b + width * g)
}

impl ScalarField for Maximum {
    fn evaluate(&self, p: &ChartPoint) -> Result<f64> {
        let a = self.a.evaluate(p)?;
        let b = self.b.evaluate(p)?;
        Ok(match self.width {
            Some(w) => regularized_max(a, b, w),
            None => a.max(b),
        })
    }

    fn singular_locus(&self) -> SingularLocus {
        if self.a.singular_locus().is_none() || self.b.singular_locus().is_none() {
            SingularLocus::None
        } else {
            SingularLocus::union(vec![self.a.singular_locus(), self.b.singular_locus()])
        }
    }

    fn singular_distance(&self, p: &ChartPoint) -> Result<Option<f64>> {
        match (self.a.singular_distance(p)?, self.b.singular_distance(p)?) {
            (Some(x), Some(y)) => Ok(Some(x.max(y))),
            _ => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ChartId, C64};

    fn pt(x: f64) -> ChartPoint {
        ChartPoint::new(ChartId("t"), vec![C64::new(x, 0.0)])
    }

    #[test]
    fn combinators_evaluate_pointwise() {
        let f = from_fn(|p| Ok(p.coords[0].re));
        let g = constant(2.0);
        let s = add(f.clone(), scale(3.0, g.clone()));
        assert_eq!(s.evaluate(&pt(1.5)).unwrap(), 7.5);
        let m = Maximum::new(f, g);
        assert_eq!(m.evaluate(&pt(1.5)).unwrap(), 2.0);
        assert_eq!(m.evaluate(&pt(2.5)).unwrap(), 2.5);
    }

    #[test]
    fn regularized_max_bounds() {
        for &(a, b) in &[(0.0, 0.0), (1.0, 0.9), (-3.0, -3.2), (5.0, 1.0)] {
            let w = 0.5;
            let m = regularized_max(a, b, w);
            assert!(m >= a.max(b) - 1e-15);
            assert!(m <= a.max(b) + w / 2.0 + 1e-15);
        }
        assert_eq!(regularized_max(5.0, 1.0, 0.5), 5.0);
        assert_eq!(regularized_max(f64::NEG_INFINITY, 1.0, 0.5), 1.0);
    }

    #[test]
    fn regularized_max_is_continuous_at_the_switch() {
        let w = 0.2;
        let inside = regularized_max(1.0, 1.0 - w * (1.0 - 1e-9), w);
        assert!((inside - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sum_inherits_singular_distance() {
        let smooth = constant(1.0);
        let singular: FieldRef = Arc::new(
            FnField::new(|p: &ChartPoint| Ok(p.coords[0].norm_sqr().ln())).with_singularity(
                SingularLocus::Points(vec![pt(0.0)]),
                0.01,
                |p| Ok(p.coords[0].norm()),
            ),
        );
        let s = add(smooth, singular);
        assert_eq!(s.singular_distance(&pt(0.5)).unwrap(), Some(0.5));
        assert_eq!(s.smoothness_margin(), 0.01);
        assert!(!s.singular_locus().is_none());
    }
}
