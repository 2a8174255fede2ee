//! Deterministic sample lattices over chart domains.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Chart, ChartId, ChartPoint, CoordDomain, C64};
use crate::error::{Error, Result};

/// A finite set of samples in one chart.
///
/// Every emitted point lies in the chart domain and at distance at least
/// `exclusion_radius` from each exclusion set applied through [`SampleGrid::exclude`].
#[derive(Clone, Debug, Serialize)]
pub struct SampleGrid {
    pub chart: ChartId,
    /// Lattice spacing per complex coordinate, used for both real parts.
    pub spacing: Vec<f64>,
    pub exclusion_radius: f64,
    pub jitter_seed: u64,
    #[serde(skip)]
    points: Vec<ChartPoint>,
}

fn axis(lo: f64, hi: f64, spacing: f64) -> Vec<f64> {
    let n = ((hi - lo) / spacing * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let d = (hi - lo) / n as f64;
    (0..n).map(|i| lo + (i as f64 + 0.5) * d).collect()
}

impl SampleGrid {
    /// Cell-centred lattice over the chart domain. A nonzero `jitter_seed`
    /// perturbs each point by up to a quarter cell, reproducibly.
    pub fn lattice(chart: &Chart, spacing: &[f64], jitter_seed: u64) -> Result<Self> {
        if spacing.len() != chart.dim() {
            return Err(Error::Dimension(format!("{} spacings for chart of dimension {}", spacing.len(), chart.dim())));
        }
        if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Parameter("grid spacing must be positive".into()));
        }
        let per_coord: Vec<Vec<C64>> = chart
            .domain
            .iter()
            .zip(spacing)
            .map(|(d, &s)| {
                let (re, im) = match *d {
                    CoordDomain::Disk { radius } => ((-radius, radius), (-radius, radius)),
                    CoordDomain::Box { re, im } => (re, im),
                };
                let xs = axis(re.0, re.1, s);
                let ys = axis(im.0, im.1, s);
                xs.iter().flat_map(|&x| ys.iter().map(move |&y| C64::new(x, y))).filter(|z| d.contains(*z)).collect()
            })
            .collect();
        let mut points = vec![Vec::<C64>::new()];
        for values in &per_coord {
            points = points.into_iter().flat_map(|p| values.iter().map(move |v| [p.clone(), vec![*v]].concat())).collect();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(jitter_seed);
        let points = points
            .into_iter()
            .map(|mut coords| {
                if jitter_seed != 0 {
                    for (i, c) in coords.iter_mut().enumerate() {
                        let q = 0.25 * spacing[i];
                        let cand = *c + C64::new(rng.random_range(-q..q), rng.random_range(-q..q));
                        if chart.domain[i].contains(cand) {
                            *c = cand;
                        }
                    }
                }
                ChartPoint::new(chart.id, coords)
            })
            .collect();
        Ok(Self { chart: chart.id, spacing: spacing.to_vec(), exclusion_radius: 0.0, jitter_seed, points })
    }

    /// Lattice whose spacing is `fraction` of each coordinate's extent.
    pub fn relative(chart: &Chart, fraction: f64, jitter_seed: u64) -> Result<Self> {
        let spacing: Vec<f64> = chart
            .domain
            .iter()
            .map(|d| match *d {
                CoordDomain::Disk { radius } => 2.0 * radius * fraction,
                CoordDomain::Box { re, im } => (re.1 - re.0).max(im.1 - im.0) * fraction,
            })
            .collect();
        Self::lattice(chart, &spacing, jitter_seed)
    }

    /// A grid from explicit points, all in `chart`.
    pub fn from_points(chart: ChartId, points: Vec<ChartPoint>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| p.chart != chart) {
            return Err(Error::Domain(format!("point {p} is not in chart {chart}")));
        }
        Ok(Self { chart, spacing: Vec::new(), exclusion_radius: 0.0, jitter_seed: 0, points })
    }

    /// Drops points within `radius` of an exclusion set given by its distance
    /// function. Distance evaluation errors drop the point as well.
    pub fn exclude(mut self, radius: f64, dist: impl Fn(&ChartPoint) -> Result<f64>) -> Self {
        self.points.retain(|p| matches!(dist(p), Ok(d) if d >= radius));
        self.exclusion_radius = self.exclusion_radius.max(radius);
        self
    }

    /// Keeps points satisfying `keep`.
    pub fn retain(mut self, keep: impl Fn(&ChartPoint) -> bool) -> Self {
        self.points.retain(|p| keep(p));
        self
    }

    pub fn points(&self) -> &[ChartPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart() -> Chart {
        Chart::new(
            ChartId("g"),
            vec![CoordDomain::Disk { radius: 1.0 }, CoordDomain::Box { re: (0.0, 1.0), im: (-0.5, 0.5) }],
        )
    }

    #[test]
    fn lattice_points_lie_in_domain() {
        for seed in [0, 3] {
            let g = SampleGrid::lattice(&chart(), &[0.25, 0.25], seed).unwrap();
            assert!(!g.is_empty());
            assert!(g.points().iter().all(|p| chart().check(p).is_ok()));
        }
    }

    #[test]
    fn jitter_is_reproducible_and_zero_seed_is_plain() {
        let a = SampleGrid::lattice(&chart(), &[0.3, 0.3], 11).unwrap();
        let b = SampleGrid::lattice(&chart(), &[0.3, 0.3], 11).unwrap();
        let plain = SampleGrid::lattice(&chart(), &[0.3, 0.3], 0).unwrap();
        assert_eq!(a.points(), b.points());
        assert_ne!(a.points(), plain.points());
    }

    #[test]
    fn exclusion_respects_radius() {
        let g = SampleGrid::lattice(&chart(), &[0.2, 0.2], 0).unwrap().exclude(0.3, |p| Ok(p.coords[0].norm()));
        assert!(g.points().iter().all(|p| p.coords[0].norm() >= 0.3));
        assert_eq!(g.exclusion_radius, 0.3);
    }

    #[test]
    fn relative_spacing_counts_cells_per_axis() {
        let g = SampleGrid::relative(&chart(), 1.0 / 6.0, 0).unwrap();
        // 32 of the 36 cell centres of the disk coordinate lie inside it.
        assert_eq!(g.len(), 32 * 36);
    }
}
