//! Load-time certification of a [`ManifoldModel`] on sample grids.

use rayon::prelude::*;
use serde::Serialize;

use super::{embed, intrinsic, model_samples, on_v, v_samples, Model, ModelConfig, TubeChart};
use crate::distance::{multi_start_solutions, squared_distance};
use crate::error::{Error, Result};
use crate::geometry::{ChartPoint, HermitianForm, ScalarField, C64};

/// One named invariant check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub samples: usize,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    /// Bound the worst value was compared against.
    pub bound: f64,
    pub worst_sample: Option<ChartPoint>,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub model: String,
    pub passed: bool,
    pub checks: Vec<CheckOutcome>,
}

impl ValidationReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Tracks the worst value of a quantity that must stay at or below `bound`
/// (or at or above it, when `lower` is set).
struct Worst {
    name: &'static str,
    bound: f64,
    lower: bool,
    value: f64,
    sample: Option<ChartPoint>,
    samples: usize,
    errors: Vec<String>,
}

impl Worst {
    fn upper(name: &'static str, bound: f64) -> Self {
        Self { name, bound, lower: false, value: 0.0, sample: None, samples: 0, errors: Vec::new() }
    }

    fn lower(name: &'static str, bound: f64) -> Self {
        Self { name, bound, lower: true, value: f64::INFINITY, sample: None, samples: 0, errors: Vec::new() }
    }

    fn record(&mut self, p: &ChartPoint, v: Result<f64>) {
        self.samples += 1;
        match v {
            Ok(v) => {
                let worse = v.is_nan() || if self.lower { v < self.value } else { v > self.value };
                if worse {
                    self.value = v;
                }
                if worse || self.sample.is_none() {
                    self.sample = Some(p.clone());
                }
            }
            Err(e) => {
                if self.errors.len() < 3 {
                    self.errors.push(format!("{p}: {e}"));
                }
                self.sample = Some(p.clone());
            }
        }
    }

    fn finish(self) -> CheckOutcome {
        let within = if self.lower { self.value > self.bound } else { self.value <= self.bound };
        let passed = self.errors.is_empty() && self.samples > 0 && within;
        let message = if !self.errors.is_empty() {
            format!("evaluation failed: {}", self.errors.join("; "))
        } else if self.samples == 0 {
            "no samples".into()
        } else if self.lower {
            format!("minimum {:.6e} against floor {:.3e}", self.value, self.bound)
        } else {
            format!("maximum {:.3e} against tolerance {:.3e}", self.value, self.bound)
        };
        CheckOutcome {
            name: self.name.into(),
            passed,
            samples: self.samples,
            worst: self.value,
            bound: self.bound,
            worst_sample: self.sample,
            message,
        }
    }
}

fn max_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Every `stride`-th point, so expensive checks see the whole region.
fn spread<T: Clone>(v: &[T], n: usize) -> Vec<T> {
    if v.len() <= n {
        return v.to_vec();
    }
    (0..n).map(|i| v[i * v.len() / n].clone()).collect()
}

/// Runs the invariant suite.
pub fn validate_model(model: &Model, cfg: &ModelConfig) -> Result<ValidationReport> {
    let m = model.as_ref();
    let tol = &cfg.tolerances;
    let mut points: Vec<ChartPoint> = Vec::new();
    for g in model_samples(m, cfg.grid.spacing, cfg.grid.jitter_seed)? {
        points.extend(g.points().iter().cloned());
    }
    let mut v_points: Vec<ChartPoint> = Vec::new();
    for g in v_samples(m, cfg.grid.v_spacing, cfg.grid.jitter_seed)? {
        v_points.extend(g.points().iter().cloned());
    }
    let mut checks = Vec::new();

    let mut round = Worst::upper("transition round trip", tol.transition);
    let mut positivity = Worst::lower("metric positivity", tol.positivity_floor);
    for p in &points {
        for chart in m.charts() {
            if chart.id == p.chart {
                continue;
            }
            let Ok(q) = m.transition(p, chart.id) else { continue };
            if chart.check(&q).is_err() {
                continue;
            }
            let back = m.transition(&q, p.chart).map(|b| max_diff(&b.coords, &p.coords) / p.coords.iter().map(|c| c.norm()).fold(1.0, f64::max));
            round.record(p, back);
            positivity.record(&q, metric_min(m, &q));
        }
        positivity.record(p, metric_min(m, p));
    }
    if m.charts().len() > 1 {
        checks.push(round.finish());
    }
    checks.push(positivity.finish());

    let mut identity = Worst::upper("retraction is the identity on V", tol.retraction);
    for q in &v_points {
        let r = embed(m, q).and_then(|p| {
            let r = m.retract(&p)?;
            let moved = if r.chart == p.chart { r } else { m.transition(&r, p.chart)? };
            Ok(max_diff(&moved.coords, &p.coords))
        });
        identity.record(q, r);
    }
    checks.push(identity.finish());

    let tube: Vec<ChartPoint> = points
        .iter()
        .filter_map(|p| match m.tube_chart(p) {
            Ok(TubeChart::Candidate(c)) => Some(c),
            _ => None,
        })
        .collect();
    let mut idempotent = Worst::upper("retraction is idempotent", tol.deck);
    let mut holomorphic = Worst::upper("retraction is holomorphic", tol.holomorphy);
    for p in &tube {
        idempotent.record(
            p,
            m.retract(p).and_then(|r| {
                let rr = m.retract(&r)?;
                if !on_v(m, &r) {
                    return Err(Error::ModelDefinition(format!("retraction of {p} is not on V")));
                }
                Ok(max_diff(&rr.coords, &r.coords))
            }),
        );
        holomorphic.record(p, dbar_residual(model, p));
    }
    checks.push(idempotent.finish());
    checks.push(holomorphic.finish());

    let translations = m.translation_charts();
    if !translations.is_empty() || points.iter().any(|p| !m.identified_points(p).is_empty()) {
        let h = squared_distance(model);
        let mut metric = Worst::upper("metric is deck invariant", tol.deck);
        let mut field = Worst::upper("h is deck invariant", tol.deck);
        for p in &points {
            if !translations.contains(&p.chart) {
                continue;
            }
            let g = metric_matrix(m, p);
            for q in m.identified_points(p).into_iter().filter(|q| q.chart == p.chart && m.chart(q.chart).and_then(|c| c.check(q)).is_ok()) {
                metric.record(p, g.clone().and_then(|g| Ok((metric_matrix(m, &q)? - g).iter().map(|c| c.norm()).fold(0.0, f64::max))));
            }
        }
        let h_samples: Vec<(ChartPoint, ChartPoint)> = spread(&tube, 12)
            .into_iter()
            .flat_map(|p| m.identified_points(&p).into_iter().take(2).map(move |q| (p.clone(), q)))
            .collect();
        let diffs: Vec<Result<f64>> = h_samples
            .par_iter()
            .map(|(p, q)| match (h.evaluate(p), h.evaluate(q)) {
                (Err(Error::OutsideTube), Err(Error::OutsideTube)) => Ok(0.0),
                (a, b) => Ok((a? - b?).abs()),
            })
            .collect();
        for ((p, _), d) in h_samples.iter().zip(diffs) {
            field.record(p, d);
        }
        if !translations.is_empty() {
            checks.push(metric.finish());
        }
        checks.push(field.finish());
    }

    checks.push(tube_uniqueness(model, &tube));

    let boundary = m.tube_boundary_samples(6);
    if !boundary.is_empty() {
        let h = squared_distance(model);
        let r2 = m.tube_radius().powi(2);
        let mut pretest = Worst::lower("tube pretest is sound", r2);
        let values: Vec<Result<f64>> = boundary
            .par_iter()
            .map(|p| match h.evaluate(p) {
                Err(Error::OutsideTube) => Ok(f64::INFINITY),
                other => other,
            })
            .collect();
        for (p, v) in boundary.iter().zip(values) {
            pretest.record(p, v);
        }
        checks.push(pretest.finish());
    }

    let passed = checks.iter().all(|c| c.passed);
    Ok(ValidationReport { model: m.name().into(), passed, checks })
}

fn metric_matrix(m: &dyn super::ManifoldModel, p: &ChartPoint) -> Result<nalgebra::DMatrix<C64>> {
    m.chart(p.chart)?.check(p)?;
    Ok(m.potential(p.chart)?.metric(&p.coords))
}

fn metric_min(m: &dyn super::ManifoldModel, p: &ChartPoint) -> Result<f64> {
    let g = metric_matrix(m, p)?;
    Ok(HermitianForm::symmetrized(p.clone(), g).eigenvalues()[0])
}

/// `max_j |∂r/∂z̄_j|` by central differences of the intrinsic coordinates of
/// `r`.
fn dbar_residual(model: &Model, p: &ChartPoint) -> Result<f64> {
    let m = model.as_ref();
    let step = 1e-5;
    let image = |q: &ChartPoint| -> Result<Vec<C64>> {
        let r = m.retract(q)?;
        Ok(intrinsic(m, &r)?.coords)
    };
    let mut worst: f64 = 0.0;
    for j in 0..p.dim() {
        let mut d = vec![C64::new(0.0, 0.0); p.dim()];
        let mut dir = |delta: C64| -> Result<Vec<C64>> {
            d[j] = delta;
            let plus = image(&p.shifted(&d))?;
            d[j] = -delta;
            let minus = image(&p.shifted(&d))?;
            d[j] = C64::new(0.0, 0.0);
            Ok(plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * step)).collect())
        };
        let dx = dir(C64::new(step, 0.0))?;
        let dy = dir(C64::new(0.0, step))?;
        for (a, b) in dx.iter().zip(&dy) {
            worst = worst.max((0.5 * (a + C64::new(0.0, 1.0) * b)).norm());
        }
    }
    Ok(worst)
}

/// Multi-start normal-exponential solves must agree on the foot whenever
/// they land inside the tube.
fn tube_uniqueness(model: &Model, tube: &[ChartPoint]) -> CheckOutcome {
    let m = model.as_ref();
    if m.closed_form_nearest(&tube.first().cloned().unwrap_or_else(|| ChartPoint::new(m.charts()[0].id, vec![]))).is_some() {
        return CheckOutcome {
            name: "nearest point is unique in the tube".into(),
            passed: true,
            samples: 0,
            worst: 0.0,
            bound: 0.0,
            worst_sample: None,
            message: "closed-form nearest point".into(),
        };
    }
    let r = m.tube_radius();
    let k = m.submanifold().k;
    let mut starts: Vec<(Vec<C64>, f64)> = vec![(vec![C64::new(0.0, 0.0); k], 1.0)];
    for (dt, sa) in [(C64::new(0.4, 0.0), 1.0), (C64::new(-0.4, 0.0), 1.0), (C64::new(0.0, 0.4), 0.6), (C64::new(0.0, -0.4), 1.4)] {
        starts.push((vec![dt * r; k], sa));
    }
    let samples = spread(tube, 16);
    let results: Vec<Result<f64>> = samples
        .par_iter()
        .map(|p| {
            let sols = multi_start_solutions(m, p, &starts)?;
            let inside: Vec<(ChartPoint, f64)> = sols.into_iter().filter_map(|s| s.ok()).filter(|(_, h)| *h < r * r).collect();
            let Some((first, _)) = inside.first() else { return Ok(0.0) };
            let base = intrinsic(m, first)?;
            let mut worst: f64 = 0.0;
            for (foot, _) in &inside[1..] {
                worst = worst.max(m.v_distance(&base, &intrinsic(m, foot)?)?);
            }
            Ok(worst)
        })
        .collect();
    let mut w = Worst::upper("nearest point is unique in the tube", 1e-6);
    for (p, v) in samples.iter().zip(results) {
        match v {
            Err(Error::OutsideTube) => w.record(p, Ok(0.0)),
            v => w.record(p, v),
        }
    }
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(text: &str) -> ValidationReport {
        let cfg = ModelConfig::from_toml(text).unwrap();
        let model = cfg.load().unwrap();
        validate_model(&model, &cfg).unwrap()
    }

    #[test]
    fn flat_and_product_models_validate() {
        let r = run("[model]\nkind = \"flat\"\n");
        assert!(r.passed, "{r:#?}");
        let r = run("[model]\nkind = \"product\"\ntube_radius = 0.4\n[[model.factors]]\nkind = \"projective_line\"\n[[model.factors]]\nkind = \"torus\"\n[grid]\nspacing = 0.25\n");
        assert!(r.passed, "{r:#?}");
    }

    #[test]
    fn serre_validates_and_large_kappa_fails_positivity() {
        let r = run("[model]\nkind = \"serre\"\n[grid]\nspacing = 0.25\nv_spacing = 0.1\n");
        assert!(r.passed, "{r:#?}");
        let bad = run("[model]\nkind = \"serre\"\nkappa = 5.0\n[grid]\nspacing = 0.25\nv_spacing = 0.1\n");
        assert!(!bad.passed);
        let pos = bad.checks.iter().find(|c| c.name == "metric positivity").unwrap();
        assert!(!pos.passed && pos.worst < 0.0 && pos.worst_sample.is_some());
    }
}
