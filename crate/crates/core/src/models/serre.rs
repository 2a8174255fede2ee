//! Serre's surface: `P¹ × ℂ` modulo `(w, z) ~ (w + 1, z + 1) ~ (w + τ̄, z + τ)`,
//! a `P¹`-bundle over the elliptic curve `ℂ/⟨1, τ⟩`, with `V` the section at
//! infinity and the retraction given by the bundle projection.
//!
//! Charts (both lifted in `z`):
//! * `w`: affine fibre coordinate `w = y/x`, potential
//!   `c_z|z|² + κ log(1 + |w − z̄|²)`;
//! * `s`: `s = 1/w` near `V = {s = 0}`, potential
//!   `c_z|z|² + κ log(|s|² + |1 − s z̄|²)`.
//!
//! The two potentials differ by the pluriharmonic `κ log|s|²`. Since `w − z̄`
//! is invariant under both identifications, so is the metric. At `s = 0` the
//! metric is `[[κ, −κ], [−κ, c_z]]`, positive definite exactly when `κ < c_z`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Chart, ChartId, ChartPoint, ChartPotential, CoordDomain, HermitianPoly, KahlerPotential, Monomial, C64};

use super::{Lattice, ManifoldModel, Submanifold, TubeChart, VChart};

pub const W_CHART: ChartId = ChartId("w");
pub const S_CHART: ChartId = ChartId("s");
pub const V_CHART: ChartId = ChartId("z");

/// Radius of both fiber coordinates; the charts overlap on `1/50 < |w| < 50`.
const CHART_RADIUS: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SerreParameters {
    pub tau: C64,
    pub kappa: f64,
    /// Weight of the flat part `c_z|z|²`.
    pub c_z: f64,
    /// `|s| < s_max` contains the tube; normal-form regions are
    /// `|s| ≤ s_max` and `|w| ≤ 1/s_max`.
    pub s_max: f64,
    pub tube_radius: f64,
    pub geodesic_steps: usize,
}

impl Default for SerreParameters {
    fn default() -> Self {
        Self { tau: C64::new(0.0, 1.0), kappa: 1.0, c_z: 4.0, s_max: 1.0, tube_radius: 0.45, geodesic_steps: 32 }
    }
}

#[derive(Clone, Debug)]
pub struct SerreModel {
    params: SerreParameters,
    lattice: Lattice,
    charts: Vec<Chart>,
    w_potential: KahlerPotential<2>,
    s_potential: KahlerPotential<2>,
    v: Submanifold,
}

fn m(coef: f64, hol: [u8; 2], anti: [u8; 2]) -> Monomial<2> {
    Monomial::new(C64::new(coef, 0.0), hol, anti)
}

impl SerreModel {
    /// Builds the model. Positivity of the metric is not assumed here; it is
    /// certified by [`crate::models::validate_model`].
    pub fn new(params: SerreParameters) -> Result<Self> {
        let lattice = Lattice::new(params.tau)?;
        if !(params.kappa > 0.0 && params.kappa.is_finite()) {
            return Err(Error::Parameter(format!("kappa must be positive, got {}", params.kappa)));
        }
        if !(params.c_z > 0.0 && params.c_z.is_finite()) {
            return Err(Error::Parameter(format!("c_z must be positive, got {}", params.c_z)));
        }
        if !(params.s_max > 0.0 && params.s_max <= 1.0) {
            return Err(Error::Parameter(format!("s_max must lie in (0, 1], got {}", params.s_max)));
        }
        if !(params.tube_radius > 0.0) || params.geodesic_steps == 0 {
            return Err(Error::Parameter("tube radius and geodesic step count must be positive".into()));
        }
        let zbox = lattice.lifted_box();
        let charts = vec![
            Chart::new(W_CHART, vec![CoordDomain::Disk { radius: CHART_RADIUS }, zbox]),
            Chart::new(S_CHART, vec![CoordDomain::Disk { radius: CHART_RADIUS }, zbox]),
        ];
        let flat = HermitianPoly::norm_sq(1, params.c_z);
        // 1 + |w − z̄|² = 1 + |w|² − wz − w̄z̄ + |z|²
        let qw = HermitianPoly::new(vec![
            m(1.0, [0, 0], [0, 0]),
            m(1.0, [1, 0], [1, 0]),
            m(-1.0, [1, 1], [0, 0]),
            m(-1.0, [0, 0], [1, 1]),
            m(1.0, [0, 1], [0, 1]),
        ]);
        // |s|² + |1 − sz̄|² = 1 + |s|² − sz̄ − s̄z + |s|²|z|²
        let qs = HermitianPoly::new(vec![
            m(1.0, [0, 0], [0, 0]),
            m(1.0, [1, 0], [1, 0]),
            m(-1.0, [1, 0], [0, 1]),
            m(-1.0, [0, 1], [1, 0]),
            m(1.0, [1, 1], [1, 1]),
        ]);
        let v = Submanifold {
            k: 1,
            charts: vec![VChart { ambient: S_CHART, intrinsic: Chart::new(V_CHART, vec![zbox]), tangent: vec![1], normal: vec![0] }],
        };
        Ok(Self {
            params,
            lattice,
            charts,
            w_potential: KahlerPotential::new(flat.clone(), vec![(params.kappa, qw)]),
            s_potential: KahlerPotential::new(flat, vec![(params.kappa, qs)]),
            v,
        })
    }

    pub fn params(&self) -> &SerreParameters {
        &self.params
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    /// Deck transformation by `λ ∈ ⟨1, τ⟩`: `w ↦ w + λ̄`, `z ↦ z + λ`.
    pub fn deck(&self, p: &ChartPoint, lambda: C64) -> Result<ChartPoint> {
        let chart = self.chart(p.chart)?;
        let (a, z) = (p.coords[0], p.coords[1] + lambda);
        let a = if p.chart == W_CHART {
            a + lambda.conj()
        } else {
            let den = C64::new(1.0, 0.0) + a * lambda.conj();
            if den == C64::new(0.0, 0.0) {
                return Err(Error::Domain(format!("deck image of {p} is w = 0, outside the s chart")));
            }
            a / den
        };
        let out = ChartPoint::new(p.chart, vec![a, z]);
        chart.check(&out)?;
        Ok(out)
    }

    fn check(&self, p: &ChartPoint) -> Result<()> {
        self.chart(p.chart)?.check(p)
    }
}

impl ManifoldModel for SerreModel {
    fn name(&self) -> &str {
        "serre"
    }

    fn dim(&self) -> usize {
        2
    }

    fn charts(&self) -> &[Chart] {
        &self.charts
    }

    fn potential(&self, chart: ChartId) -> Result<ChartPotential<'_>> {
        match chart {
            W_CHART => Ok(ChartPotential::Two(&self.w_potential)),
            S_CHART => Ok(ChartPotential::Two(&self.s_potential)),
            _ => Err(Error::Domain(format!("chart {chart} is not in the atlas of serre"))),
        }
    }

    fn transition(&self, p: &ChartPoint, target: ChartId) -> Result<ChartPoint> {
        self.check(p)?;
        let t = self.chart(target)?;
        if p.chart == target {
            return Ok(p.clone());
        }
        if p.coords[0] == C64::new(0.0, 0.0) {
            return Err(Error::Domain(format!("{p} is not in chart {target}")));
        }
        let out = ChartPoint::new(target, vec![p.coords[0].inv(), p.coords[1]]);
        t.check(&out)?;
        Ok(out)
    }

    fn submanifold(&self) -> &Submanifold {
        &self.v
    }

    fn retract(&self, p: &ChartPoint) -> Result<ChartPoint> {
        self.check(p)?;
        Ok(ChartPoint::new(S_CHART, vec![C64::new(0.0, 0.0), p.coords[1]]))
    }

    fn tube_radius(&self) -> f64 {
        self.params.tube_radius
    }

    fn tube_chart(&self, p: &ChartPoint) -> Result<TubeChart> {
        self.check(p)?;
        let a = p.coords[0].norm();
        let outside = if p.chart == S_CHART { a >= self.params.s_max } else { a * self.params.s_max <= 1.0 };
        if outside {
            return Ok(TubeChart::Outside);
        }
        Ok(TubeChart::Candidate(self.transition(p, S_CHART)?))
    }

    fn normalize(&self, p: &ChartPoint) -> Result<ChartPoint> {
        self.check(p)?;
        let q = self.deck(p, -self.lattice.centred_reduction(p.coords[1]))?;
        let in_s = if q.chart == S_CHART { q.coords[0].norm() <= self.params.s_max } else { q.coords[0].norm() * self.params.s_max >= 1.0 };
        let target = if in_s { S_CHART } else { W_CHART };
        self.transition(&q, target)
    }

    fn identified_points(&self, p: &ChartPoint) -> Vec<ChartPoint> {
        [self.lattice.point(1, 0), self.lattice.point(0, 1), self.lattice.point(1, 1), self.lattice.point(-1, 0)]
            .into_iter()
            .filter_map(|l| self.deck(p, l).ok())
            .collect()
    }

    fn nearest_representative(&self, x: &ChartPoint, y: &ChartPoint) -> Result<ChartPoint> {
        let shift = self.lattice.closest(x.coords[1] - y.coords[1]);
        let y = self.deck(y, shift)?;
        self.transition(&y, x.chart).or(Ok(y))
    }

    fn geodesic_steps(&self) -> usize {
        self.params.geodesic_steps
    }

    fn v_distance(&self, a: &ChartPoint, b: &ChartPoint) -> Result<f64> {
        let chart = &self.v.charts[0].intrinsic;
        chart.check(a)?;
        chart.check(b)?;
        Ok((self.params.c_z * self.lattice.distance_sq(a.coords[0] - b.coords[0])).sqrt())
    }

    fn sample_regions(&self) -> Vec<Chart> {
        let zf = self.lattice.centred_box();
        vec![
            Chart::new(S_CHART, vec![CoordDomain::Disk { radius: self.params.s_max }, zf]),
            Chart::new(W_CHART, vec![CoordDomain::Disk { radius: 1.0 / self.params.s_max }, zf]),
        ]
    }

    fn v_sample_regions(&self) -> Vec<Chart> {
        vec![Chart::new(V_CHART, vec![self.lattice.centred_box()])]
    }

    fn tube_boundary_samples(&self, per_axis: usize) -> Vec<ChartPoint> {
        let n = per_axis.max(1);
        let radius = self.params.s_max * (1.0 - 1e-9);
        let mut out = Vec::new();
        for a in 0..n {
            let s = C64::from_polar(radius, std::f64::consts::TAU * a as f64 / n as f64);
            for i in 0..n {
                for j in 0..n {
                    let z = C64::new((i as f64 + 0.5) / n as f64 - 0.5, 0.0) + self.params.tau * ((j as f64 + 0.5) / n as f64 - 0.5);
                    out.push(ChartPoint::new(S_CHART, vec![s, z]));
                }
            }
        }
        out
    }

    fn translation_charts(&self) -> Vec<ChartId> {
        vec![W_CHART]
    }
}
