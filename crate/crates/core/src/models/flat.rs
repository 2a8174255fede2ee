//! Flat `ℂ²` with `V = {z₂ = 0}` and the orthogonal projection.

use crate::distance::NearestPointResult;
use crate::error::{Error, Result};
use crate::geometry::{Chart, ChartId, ChartPoint, ChartPotential, CoordDomain, HermitianPoly, KahlerPotential, C64};

use super::{ManifoldModel, Submanifold, TubeChart, VChart};

pub const CHART: ChartId = ChartId("z");
pub const V_CHART: ChartId = ChartId("z1");

#[derive(Clone, Debug)]
pub struct FlatModel {
    charts: Vec<Chart>,
    potential: KahlerPotential<2>,
    v: Submanifold,
    tube_radius: f64,
    extent: f64,
}

impl Default for FlatModel {
    fn default() -> Self {
        Self::new(2.0, 1.0).expect("default flat model")
    }
}

impl FlatModel {
    /// Coordinates are restricted to the box `|Re|, |Im| ≤ extent`.
    pub fn new(extent: f64, tube_radius: f64) -> Result<Self> {
        if !(extent > 0.0 && tube_radius > 0.0) {
            return Err(Error::Parameter("flat model extent and tube radius must be positive".into()));
        }
        let bx = CoordDomain::Box { re: (-extent, extent), im: (-extent, extent) };
        let potential = KahlerPotential::new(HermitianPoly::norm_sq(0, 1.0).plus(HermitianPoly::norm_sq(1, 1.0)), Vec::new());
        let v = Submanifold {
            k: 1,
            charts: vec![VChart { ambient: CHART, intrinsic: Chart::new(V_CHART, vec![bx]), tangent: vec![0], normal: vec![1] }],
        };
        Ok(Self { charts: vec![Chart::new(CHART, vec![bx, bx])], potential, v, tube_radius, extent })
    }

    fn check(&self, p: &ChartPoint) -> Result<()> {
        self.charts[0].check(p)
    }
}

impl ManifoldModel for FlatModel {
    fn name(&self) -> &str {
        "flat"
    }

    fn dim(&self) -> usize {
        2
    }

    fn charts(&self) -> &[Chart] {
        &self.charts
    }

    fn potential(&self, chart: ChartId) -> Result<ChartPotential<'_>> {
        self.chart(chart)?;
        Ok(ChartPotential::Two(&self.potential))
    }

    fn transition(&self, p: &ChartPoint, target: ChartId) -> Result<ChartPoint> {
        self.check(p)?;
        self.chart(target)?;
        Ok(p.clone())
    }

    fn submanifold(&self) -> &Submanifold {
        &self.v
    }

    fn retract(&self, p: &ChartPoint) -> Result<ChartPoint> {
        self.check(p)?;
        Ok(ChartPoint::new(CHART, vec![p.coords[0], C64::new(0.0, 0.0)]))
    }

    fn tube_radius(&self) -> f64 {
        self.tube_radius
    }

    fn tube_chart(&self, p: &ChartPoint) -> Result<TubeChart> {
        self.check(p)?;
        Ok(if p.coords[1].norm() >= self.tube_radius { TubeChart::Outside } else { TubeChart::Candidate(p.clone()) })
    }

    fn closed_form_distance(&self, x: &ChartPoint, y: &ChartPoint) -> Option<Result<f64>> {
        Some(self.check(x).and(self.check(y)).map(|_| {
            ((x.coords[0] - y.coords[0]).norm_sqr() + (x.coords[1] - y.coords[1]).norm_sqr()).sqrt()
        }))
    }

    fn closed_form_nearest(&self, x: &ChartPoint) -> Option<Result<NearestPointResult>> {
        Some(self.tube_chart(x).and_then(|t| match t {
            TubeChart::Outside => Err(Error::OutsideTube),
            TubeChart::Candidate(_) => Ok(NearestPointResult {
                query: x.clone(),
                foot: ChartPoint::new(CHART, vec![x.coords[0], C64::new(0.0, 0.0)]),
                exp_inverse: vec![C64::new(0.0, 0.0), -x.coords[1]],
                distance: x.coords[1].norm(),
                residual: 0.0,
            }),
        }))
    }

    fn closed_form_h(&self, x: &ChartPoint) -> Option<Result<f64>> {
        Some(self.tube_chart(x).and_then(|t| match t {
            TubeChart::Outside => Err(Error::OutsideTube),
            TubeChart::Candidate(_) => Ok(x.coords[1].norm_sqr()),
        }))
    }

    fn v_distance(&self, a: &ChartPoint, b: &ChartPoint) -> Result<f64> {
        self.v.charts[0].intrinsic.check(a)?;
        self.v.charts[0].intrinsic.check(b)?;
        Ok((a.coords[0] - b.coords[0]).norm())
    }

    fn sample_regions(&self) -> Vec<Chart> {
        let e = self.extent.min(1.0);
        let r = (0.5 * self.tube_radius).min(self.extent);
        vec![Chart::new(
            CHART,
            vec![CoordDomain::Box { re: (-e, e), im: (-e, e) }, CoordDomain::Box { re: (-r, r), im: (-r, r) }],
        )]
    }

    fn v_sample_regions(&self) -> Vec<Chart> {
        let e = self.extent.min(1.0);
        vec![Chart::new(V_CHART, vec![CoordDomain::Box { re: (-e, e), im: (-e, e) }])]
    }
}
