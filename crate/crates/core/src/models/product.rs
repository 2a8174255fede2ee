//! Products `X₁ × X₂` of a projective line and/or flat tori, with
//! `V = X₁ × {p₀}` and the retraction given by projection to the first factor.

use std::f64::consts::FRAC_PI_2;

use crate::distance::NearestPointResult;
use crate::error::{Error, Result};
use crate::geometry::{intern, Chart, ChartId, ChartPoint, ChartPotential, CoordDomain, HermitianPoly, KahlerPotential, C64};

use super::{Lattice, ManifoldModel, Submanifold, TubeChart, VChart};

/// Radius of both affine charts of a projective line.
const P1_CHART_RADIUS: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Factor {
    /// `P¹` with potential `weight·log(1 + |w|²)` in both affine charts.
    ProjectiveLine { weight: f64 },
    /// `ℂ/⟨1, τ⟩` with potential `weight·|z|²` on the lifted chart.
    Torus { lattice: Lattice, weight: f64 },
}

fn c0() -> C64 {
    C64::new(0.0, 0.0)
}

impl Factor {
    pub fn projective_line(weight: f64) -> Result<Self> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::Parameter(format!("projective line weight must be positive, got {weight}")));
        }
        Ok(Factor::ProjectiveLine { weight })
    }

    pub fn torus(tau: C64, weight: f64) -> Result<Self> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::Parameter(format!("torus weight must be positive, got {weight}")));
        }
        Ok(Factor::Torus { lattice: Lattice::new(tau)?, weight })
    }

    fn chart_names(&self, slot: usize) -> Vec<String> {
        match self {
            Factor::ProjectiveLine { .. } => vec![format!("w{slot}"), format!("u{slot}")],
            Factor::Torus { .. } => vec![format!("z{slot}")],
        }
    }

    fn domain(&self) -> CoordDomain {
        match self {
            Factor::ProjectiveLine { .. } => CoordDomain::Disk { radius: P1_CHART_RADIUS },
            Factor::Torus { lattice, .. } => lattice.lifted_box(),
        }
    }

    fn sample_domain(&self) -> CoordDomain {
        match self {
            Factor::ProjectiveLine { .. } => CoordDomain::Disk { radius: 1.0 },
            Factor::Torus { lattice, .. } => lattice.fundamental_box(),
        }
    }

    fn potential_terms(&self, index: usize) -> (HermitianPoly<2>, Vec<(f64, HermitianPoly<2>)>) {
        match *self {
            Factor::ProjectiveLine { weight } => {
                (HermitianPoly::default(), vec![(weight, HermitianPoly::constant(1.0).plus(HermitianPoly::norm_sq(index, 1.0)))])
            }
            Factor::Torus { weight, .. } => (HermitianPoly::norm_sq(index, weight), Vec::new()),
        }
    }

    fn transition(&self, c: C64, from: usize, to: usize) -> Result<C64> {
        if from == to {
            return Ok(c);
        }
        match self {
            Factor::ProjectiveLine { .. } => {
                if c == c0() {
                    Err(Error::Domain("point at infinity of the target chart".into()))
                } else {
                    Ok(c.inv())
                }
            }
            Factor::Torus { .. } => Err(Error::Domain("torus factor has a single chart".into())),
        }
    }

    /// Both points in one chart: `b` moved to `a`'s chart, or the reverse.
    fn common_chart(&self, a: (usize, C64), b: (usize, C64)) -> Result<(C64, C64)> {
        match self.transition(b.1, b.0, a.0) {
            Ok(bb) => Ok((a.1, bb)),
            Err(_) => Ok((self.transition(a.1, a.0, b.0)?, b.1)),
        }
    }

    fn distance(&self, a: (usize, C64), b: (usize, C64)) -> Result<f64> {
        match *self {
            Factor::ProjectiveLine { weight } => {
                if a.0 != b.0 && a.1 == c0() && b.1 == c0() {
                    return Ok(weight.sqrt() * std::f64::consts::FRAC_PI_2);
                }
                let (x, y) = self.common_chart(a, b)?;
                Ok(weight.sqrt() * (x - y).norm().atan2((C64::new(1.0, 0.0) + x.conj() * y).norm()))
            }
            Factor::Torus { lattice, weight } => Ok((weight * lattice.distance_sq(b.1 - a.1)).sqrt()),
        }
    }

    fn distance_sq(&self, a: (usize, C64), b: (usize, C64)) -> Result<f64> {
        match *self {
            Factor::Torus { lattice, weight } => Ok(weight * lattice.distance_sq(b.1 - a.1)),
            Factor::ProjectiveLine { .. } => self.distance(a, b).map(|d| d * d),
        }
    }

    /// Initial velocity at `a` (in `a`'s chart) of the minimizing geodesic
    /// reaching `b` at time 1.
    fn exp_inverse(&self, a: (usize, C64), b: (usize, C64)) -> Result<C64> {
        match *self {
            Factor::ProjectiveLine { .. } => {
                let y = self.transition(b.1, b.0, a.0)?;
                let x = a.1;
                // Isometry w ↦ (w − x)/(1 + x̄w) moves x to 0 with derivative 1/(1+|x|²).
                let beta = (y - x) / (C64::new(1.0, 0.0) + x.conj() * y);
                let r = beta.norm();
                let v0 = if r == 0.0 { c0() } else { beta * (r.atan() / r) };
                Ok(v0 * (1.0 + x.norm_sqr()))
            }
            Factor::Torus { lattice, .. } => {
                let d = b.1 - a.1;
                Ok(d - lattice.closest(d))
            }
        }
    }

    fn normalize(&self, p: (usize, C64)) -> (usize, C64) {
        match self {
            Factor::ProjectiveLine { .. } => {
                if p.1.norm() <= 1.0 {
                    p
                } else {
                    (1 - p.0, p.1.inv())
                }
            }
            Factor::Torus { lattice, .. } => (p.0, p.1 - lattice.reduction(p.1)),
        }
    }

    fn nearest_representative(&self, x: C64, y: C64) -> C64 {
        match self {
            Factor::ProjectiveLine { .. } => y,
            Factor::Torus { lattice, .. } => y + lattice.closest(x - y),
        }
    }

    /// Injectivity radius at the base point `0`.
    fn cut_radius(&self) -> f64 {
        match *self {
            Factor::ProjectiveLine { weight } => weight.sqrt() * FRAC_PI_2,
            Factor::Torus { lattice, weight } => 0.5 * weight.sqrt() * lattice.shortest(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProductModel {
    factors: [Factor; 2],
    charts: Vec<Chart>,
    /// Factor chart indices of each composite chart.
    combos: Vec<(usize, usize)>,
    potentials: Vec<KahlerPotential<2>>,
    v: Submanifold,
    tube_radius: f64,
    name: String,
}

impl ProductModel {
    pub fn new(first: Factor, second: Factor, tube_radius: f64) -> Result<Self> {
        let factors = [first, second];
        let cut = second.cut_radius();
        if !(tube_radius > 0.0 && tube_radius < cut) {
            return Err(Error::Parameter(format!(
                "tube radius {tube_radius} must lie in (0, {cut:.6}) for the second factor"
            )));
        }
        let names: Vec<Vec<String>> = factors.iter().enumerate().map(|(i, f)| f.chart_names(i + 1)).collect();
        let mut charts = Vec::new();
        let mut combos = Vec::new();
        let mut potentials = Vec::new();
        for (a, na) in names[0].iter().enumerate() {
            for (b, nb) in names[1].iter().enumerate() {
                let id = ChartId(intern(&format!("{na},{nb}")));
                charts.push(Chart::new(id, vec![first.domain(), second.domain()]));
                combos.push((a, b));
                let (p1, l1) = first.potential_terms(0);
                let (p2, mut l2) = second.potential_terms(1);
                let mut logs = l1;
                logs.append(&mut l2);
                potentials.push(KahlerPotential::new(p1.plus(p2), logs));
            }
        }
        let v_charts = names[0]
            .iter()
            .enumerate()
            .map(|(a, na)| VChart {
                ambient: charts[combos.iter().position(|&c| c == (a, 0)).unwrap()].id,
                intrinsic: Chart::new(ChartId(intern(na)), vec![first.domain()]),
                tangent: vec![0],
                normal: vec![1],
            })
            .collect();
        let kind = |f: &Factor| match f {
            Factor::ProjectiveLine { .. } => "P1",
            Factor::Torus { .. } => "torus",
        };
        Ok(Self {
            factors,
            charts,
            combos,
            potentials,
            v: Submanifold { k: 1, charts: v_charts },
            tube_radius,
            name: format!("product({}x{})", kind(&first), kind(&second)),
        })
    }

    pub fn factors(&self) -> &[Factor; 2] {
        &self.factors
    }

    fn index(&self, id: ChartId) -> Result<usize> {
        self.charts
            .iter()
            .position(|c| c.id == id)
            .ok_or_else(|| Error::Domain(format!("chart {id} is not in the atlas of {}", self.name)))
    }

    fn split(&self, p: &ChartPoint) -> Result<[(usize, C64); 2]> {
        let i = self.index(p.chart)?;
        self.charts[i].check(p)?;
        let (a, b) = self.combos[i];
        Ok([(a, p.coords[0]), (b, p.coords[1])])
    }

    fn join(&self, parts: [(usize, C64); 2]) -> Result<ChartPoint> {
        let i = self
            .combos
            .iter()
            .position(|&c| c == (parts[0].0, parts[1].0))
            .expect("all chart combinations exist");
        let p = ChartPoint::new(self.charts[i].id, vec![parts[0].1, parts[1].1]);
        self.charts[i].check(&p)?;
        Ok(p)
    }

    fn normal_distance_sq(&self, p: &ChartPoint) -> Result<f64> {
        let [_, b] = self.split(p)?;
        self.factors[1].distance_sq(b, (0, c0()))
    }

    fn intrinsic_index(&self, id: ChartId) -> Result<usize> {
        self.v
            .charts
            .iter()
            .position(|c| c.intrinsic.id == id)
            .ok_or_else(|| Error::Domain(format!("chart {id} is not an intrinsic chart of V")))
    }
}

impl ManifoldModel for ProductModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        2
    }

    fn charts(&self) -> &[Chart] {
        &self.charts
    }

    fn potential(&self, chart: ChartId) -> Result<ChartPotential<'_>> {
        Ok(ChartPotential::Two(&self.potentials[self.index(chart)?]))
    }

    fn transition(&self, p: &ChartPoint, target: ChartId) -> Result<ChartPoint> {
        let [a, b] = self.split(p)?;
        let (ta, tb) = self.combos[self.index(target)?];
        let out = ChartPoint::new(
            target,
            vec![self.factors[0].transition(a.1, a.0, ta)?, self.factors[1].transition(b.1, b.0, tb)?],
        );
        self.chart(target)?.check(&out)?;
        Ok(out)
    }

    fn submanifold(&self) -> &Submanifold {
        &self.v
    }

    fn retract(&self, p: &ChartPoint) -> Result<ChartPoint> {
        let [a, _] = self.split(p)?;
        self.join([a, (0, c0())])
    }

    fn tube_radius(&self) -> f64 {
        self.tube_radius
    }

    fn tube_chart(&self, p: &ChartPoint) -> Result<TubeChart> {
        let d2 = self.normal_distance_sq(p)?;
        if d2 >= self.tube_radius * self.tube_radius {
            return Ok(TubeChart::Outside);
        }
        let [a, b] = self.split(p)?;
        let b0 = self.factors[1].transition(b.1, b.0, 0)?;
        Ok(TubeChart::Candidate(self.join([a, (0, b0)])?))
    }

    fn normalize(&self, p: &ChartPoint) -> Result<ChartPoint> {
        let [a, b] = self.split(p)?;
        self.join([self.factors[0].normalize(a), self.factors[1].normalize(b)])
    }

    fn identified_points(&self, p: &ChartPoint) -> Vec<ChartPoint> {
        let Ok(parts) = self.split(p) else { return Vec::new() };
        let mut out = Vec::new();
        for (slot, f) in self.factors.iter().enumerate() {
            if let Factor::Torus { lattice, .. } = f {
                for shift in [lattice.point(1, 0), lattice.point(0, 1), lattice.point(-1, 1)] {
                    let mut q = parts;
                    q[slot].1 += shift;
                    if let Ok(pt) = self.join(q) {
                        out.push(pt);
                    }
                }
            }
        }
        out
    }

    fn nearest_representative(&self, x: &ChartPoint, y: &ChartPoint) -> Result<ChartPoint> {
        let xs = self.split(x)?;
        let y = self.transition(y, x.chart)?;
        let ys = self.split(&y)?;
        self.join([
            (ys[0].0, self.factors[0].nearest_representative(xs[0].1, ys[0].1)),
            (ys[1].0, self.factors[1].nearest_representative(xs[1].1, ys[1].1)),
        ])
    }

    fn closed_form_distance(&self, x: &ChartPoint, y: &ChartPoint) -> Option<Result<f64>> {
        Some((|| {
            let [xa, xb] = self.split(x)?;
            let [ya, yb] = self.split(y)?;
            let d1 = self.factors[0].distance(xa, ya)?;
            let d2 = self.factors[1].distance(xb, yb)?;
            Ok((d1 * d1 + d2 * d2).sqrt())
        })())
    }

    fn closed_form_nearest(&self, x: &ChartPoint) -> Option<Result<NearestPointResult>> {
        Some((|| {
            if self.tube_chart(x)? == TubeChart::Outside {
                return Err(Error::OutsideTube);
            }
            let [a, b] = self.split(x)?;
            let foot = self.join([a, (0, c0())])?;
            let v2 = self.factors[1].exp_inverse(b, (0, c0()))?;
            Ok(NearestPointResult {
                query: x.clone(),
                foot,
                exp_inverse: vec![c0(), v2],
                distance: self.factors[1].distance(b, (0, c0()))?,
                residual: 0.0,
            })
        })())
    }

    fn closed_form_h(&self, x: &ChartPoint) -> Option<Result<f64>> {
        Some(self.normal_distance_sq(x).and_then(|d2| {
            if d2 >= self.tube_radius * self.tube_radius {
                Err(Error::OutsideTube)
            } else {
                Ok(d2)
            }
        }))
    }

    fn v_distance(&self, a: &ChartPoint, b: &ChartPoint) -> Result<f64> {
        let ia = self.intrinsic_index(a.chart)?;
        let ib = self.intrinsic_index(b.chart)?;
        self.factors[0].distance((ia, a.coords[0]), (ib, b.coords[0]))
    }

    fn sample_regions(&self) -> Vec<Chart> {
        let d1 = self.factors[0].sample_domain();
        // The normal torus factor is sampled on a fundamental domain centred
        // at the base point.
        let d2 = match self.factors[1] {
            Factor::Torus { lattice, .. } => match lattice.fundamental_box() {
                CoordDomain::Box { re, im } => CoordDomain::Box {
                    re: (re.0 - 0.5 * (re.1 - re.0), re.1 - 0.5 * (re.1 - re.0)),
                    im: (im.0 - 0.5 * (im.1 - im.0), im.1 - 0.5 * (im.1 - im.0)),
                },
                d => d,
            },
            Factor::ProjectiveLine { .. } => CoordDomain::Disk { radius: 1.0 },
        };
        self.combos
            .iter()
            .enumerate()
            .filter(|(_, &(_, b))| b == 0)
            .map(|(i, _)| Chart::new(self.charts[i].id, vec![d1, d2]))
            .chain(
                self.combos
                    .iter()
                    .enumerate()
                    .filter(|(_, &(_, b))| b == 1)
                    .map(|(i, _)| Chart::new(self.charts[i].id, vec![d1, CoordDomain::Disk { radius: 1.0 }])),
            )
            .collect()
    }

    fn translation_charts(&self) -> Vec<ChartId> {
        self.charts.iter().map(|c| c.id).collect()
    }

    fn v_sample_regions(&self) -> Vec<Chart> {
        self.v
            .charts
            .iter()
            .map(|vc| Chart::new(vc.intrinsic.id, vec![self.factors[0].sample_domain()]))
            .collect()
    }
}
