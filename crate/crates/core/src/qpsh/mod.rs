//! Quasi-psh functions of analytic-singularity type on `V`, the ★ condition,
//! and the monotone regularization `φ_m`.
//!
//! A function is `φ = u + c·log S` with `u` smooth, `c ≥ 0` and
//! `S = Σ_j |f_j|² e^{−w}` for holomorphic `f_j` and a smooth weight `w`.
//! Its regularization is `φ_m = u + c·log(S + 1/m) − shift`.

pub mod expr;

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{complex_hessian, intern, pencil_eigenvalues, ChartId, ChartPoint, SampleGrid, ScalarField, SingularLocus, C64};
use crate::models::{v_metric, v_transition, ManifoldModel, Model};

pub use expr::{theta1, Expr};

/// `φ` as written in a configuration file.
///
/// ```toml
/// [phi]
/// smooth = "-10"
/// coefficient = 1.0
/// singular = ["theta1(z, tau)"]
/// weight = "2*pi*im(z)^2/im(tau)"
/// zeros = [[0.0, 0.0]]
/// constants = { tau = [0.0, 1.0] }
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QpshSpec {
    pub smooth: String,
    #[serde(default)]
    pub coefficient: f64,
    #[serde(default)]
    pub singular: Vec<String>,
    #[serde(default)]
    pub weight: Option<String>,
    /// Intrinsic chart the expressions are written in; the first chart of `V` by default.
    #[serde(default)]
    pub chart: Option<String>,
    #[serde(default = "default_variables")]
    pub variables: Vec<String>,
    #[serde(default)]
    pub constants: BTreeMap<String, [f64; 2]>,
    /// Common zeros of the `f_j` in the expression chart, as `[re, im]` per coordinate.
    #[serde(default)]
    pub zeros: Vec<Vec<[f64; 2]>>,
    /// Distance to the zeros below which Hessians are refused.
    #[serde(default = "default_singular_margin")]
    pub singular_margin: f64,
}

fn default_variables() -> Vec<String> {
    vec!["z".to_owned()]
}

fn default_singular_margin() -> f64 {
    0.2
}

impl QpshSpec {
    pub fn constant(value: f64) -> Self {
        Self {
            smooth: format!("{value:?}"),
            coefficient: 0.0,
            singular: Vec::new(),
            weight: None,
            chart: None,
            variables: default_variables(),
            constants: BTreeMap::new(),
            zeros: Vec::new(),
            singular_margin: default_singular_margin(),
        }
    }
}

/// A parsed `φ`, or its regularization when `regularization = Some(1/m)`.
#[derive(Clone)]
pub struct QpshFunction {
    model: Model,
    chart: ChartId,
    smooth: Expr,
    coefficient: f64,
    singular: Vec<Expr>,
    weight: Option<Expr>,
    zeros: Vec<ChartPoint>,
    margin: f64,
    regularization: Option<f64>,
    shift: f64,
}

impl std::fmt::Debug for QpshFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QpshFunction")
            .field("smooth", &self.smooth.source())
            .field("coefficient", &self.coefficient)
            .field("singular", &self.singular.iter().map(Expr::source).collect::<Vec<_>>())
            .field("regularization", &self.regularization)
            .field("shift", &self.shift)
            .finish()
    }
}

impl QpshFunction {
    pub fn parse(model: Model, spec: &QpshSpec) -> Result<Self> {
        let sub = model.submanifold();
        let chart = match &spec.chart {
            Some(name) => {
                let id = ChartId(intern(name));
                sub.by_intrinsic(id).ok_or_else(|| Error::Config(format!("`{name}` is not an intrinsic chart of V")))?;
                id
            }
            None => sub.charts.first().ok_or_else(|| Error::Config("model has no chart of V".into()))?.intrinsic.id,
        };
        if spec.variables.len() != sub.k {
            return Err(Error::Config(format!("{} variable names for V of dimension {}", spec.variables.len(), sub.k)));
        }
        if !(spec.coefficient.is_finite() && spec.coefficient >= 0.0) {
            return Err(Error::Config(format!("coefficient {} must be non-negative", spec.coefficient)));
        }
        if spec.coefficient > 0.0 && spec.singular.is_empty() {
            return Err(Error::Config("a positive coefficient needs at least one singular generator".into()));
        }
        if !(spec.singular_margin > 0.0) {
            return Err(Error::Config("singular_margin must be positive".into()));
        }
        let vars: Vec<&str> = spec.variables.iter().map(String::as_str).collect();
        let constants: BTreeMap<String, C64> = spec.constants.iter().map(|(k, v)| (k.clone(), C64::new(v[0], v[1]))).collect();
        let smooth = Expr::parse(&spec.smooth, &vars, &constants)?;
        let singular = spec.singular.iter().map(|s| Expr::parse(s, &vars, &constants)).collect::<Result<Vec<_>>>()?;
        if let Some(f) = singular.iter().find(|f| !f.is_holomorphic()) {
            return Err(Error::Config(format!("singular generator `{}` is not holomorphic", f.source())));
        }
        let weight = spec.weight.as_deref().map(|w| Expr::parse(w, &vars, &constants)).transpose()?;
        let zeros = spec
            .zeros
            .iter()
            .map(|z| {
                if z.len() != sub.k {
                    return Err(Error::Config(format!("zero {z:?} has the wrong dimension")));
                }
                Ok(ChartPoint::new(chart, z.iter().map(|c| C64::new(c[0], c[1])).collect()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model,
            chart,
            smooth,
            coefficient: if singular.is_empty() { 0.0 } else { spec.coefficient },
            singular,
            weight,
            zeros,
            margin: spec.singular_margin,
            regularization: None,
            shift: 0.0,
        })
    }

    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    pub fn regularization(&self) -> Option<f64> {
        self.regularization
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn is_smooth(&self) -> bool {
        self.coefficient == 0.0 || self.regularization.is_some()
    }

    /// `φ_m` for `m ≥ 1`, shifted down by `shift`.
    pub fn regularized(&self, m: u32, shift: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::Parameter("regularization index must be positive".into()));
        }
        if self.regularization.is_some() {
            return Err(Error::Precondition("function is already regularized".into()));
        }
        Ok(Self { regularization: Some(1.0 / m as f64), shift, ..self.clone() })
    }

    /// True when no expression depends on the coordinates, so every chart of `V` can evaluate it.
    pub fn is_constant(&self) -> bool {
        self.smooth.is_constant() && (self.coefficient == 0.0 || self.singular.iter().chain(&self.weight).all(Expr::is_constant))
    }

    fn local(&self, q: &ChartPoint) -> Result<Vec<C64>> {
        if self.is_constant() {
            return Ok(q.coords.clone());
        }
        Ok(v_transition(self.model.as_ref(), q, self.chart)?.coords)
    }

    /// `S(q) = Σ_j |f_j(q)|² e^{−w(q)}`; zero when there are no generators.
    pub fn sum_of_squares(&self, q: &ChartPoint) -> Result<f64> {
        let z = self.local(q)?;
        self.sum_at(&z)
    }

    fn sum_at(&self, z: &[C64]) -> Result<f64> {
        let s: f64 = self.singular.iter().map(|f| f.eval(z).norm_sqr()).sum();
        let w = match &self.weight {
            Some(w) => w.eval_real(z)?,
            None => 0.0,
        };
        Ok(s * (-w).exp())
    }

    /// The unregularized, unshifted value at `q`.
    pub fn base_value(&self, q: &ChartPoint) -> Result<f64> {
        let z = self.local(q)?;
        let u = self.smooth.eval_real(&z)?;
        if self.coefficient == 0.0 {
            return Ok(u);
        }
        Ok(u + self.coefficient * self.sum_at(&z)?.ln())
    }
}

impl ScalarField for QpshFunction {
    fn evaluate(&self, q: &ChartPoint) -> Result<f64> {
        let z = self.local(q)?;
        let u = self.smooth.eval_real(&z)?;
        if self.coefficient == 0.0 {
            return Ok(u - self.shift);
        }
        let s = self.sum_at(&z)? + self.regularization.unwrap_or(0.0);
        Ok(u + self.coefficient * s.ln() - self.shift)
    }

    fn singular_locus(&self) -> SingularLocus {
        if self.is_smooth() {
            SingularLocus::None
        } else {
            SingularLocus::Points(self.zeros.clone())
        }
    }

    fn singular_distance(&self, q: &ChartPoint) -> Result<Option<f64>> {
        if self.is_smooth() || self.zeros.is_empty() {
            return Ok(None);
        }
        let q = v_transition(self.model.as_ref(), q, self.chart)?;
        let mut d = f64::INFINITY;
        for z in &self.zeros {
            d = d.min(self.model.v_distance(&q, z)?);
        }
        Ok(Some(d))
    }

    fn smoothness_margin(&self) -> f64 {
        self.margin
    }
}

/// Measured ★ quantities of `φ` on the sampled part of `V`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StarCertificate {
    pub epsilon: f64,
    pub c: f64,
    pub passed: bool,
    pub samples: usize,
    /// Samples inside the singular margin, where no Hessian is taken.
    pub excluded: usize,
    /// Minimum over samples of the smallest eigenvalue of `ω_V + i∂∂̄φ` relative to `ω_V`.
    pub min_eigenvalue: f64,
    pub sup_value: f64,
    pub worst_eigenvalue_sample: Option<ChartPoint>,
    pub sup_sample: Option<ChartPoint>,
}

fn relative_eigenvalue(model: &dyn ManifoldModel, phi: &dyn ScalarField, q: &ChartPoint, step: f64) -> Result<f64> {
    let hess = complex_hessian(phi, q, step)?;
    let g = v_metric(model, q)?;
    let total = g.add_scaled(&hess, 1.0)?;
    Ok(pencil_eigenvalues(total.entries(), g.entries())?[0])
}

/// Measures `min λ(ω_V + i∂∂̄φ, ω_V)` and `sup φ` over the grids.
pub fn star_margins(
    model: &dyn ManifoldModel,
    phi: &dyn ScalarField,
    epsilon: f64,
    c: f64,
    grids: &[SampleGrid],
    step: f64,
) -> Result<StarCertificate> {
    if !(epsilon > 0.0 && c > 0.0) {
        return Err(Error::Parameter(format!("★ constants must be positive, got ε = {epsilon}, C = {c}")));
    }
    let points: Vec<&ChartPoint> = grids.iter().flat_map(|g| g.points()).collect();
    if points.is_empty() {
        return Err(Error::Precondition("no samples on V".into()));
    }
    let rows: Vec<Result<(f64, Option<f64>)>> = points
        .par_iter()
        .map(|q| {
            let v = phi.evaluate(q)?;
            match relative_eigenvalue(model, phi, q, step) {
                Ok(l) => Ok((v, Some(l))),
                Err(Error::Refused(_)) => Ok((v, None)),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut cert = StarCertificate {
        epsilon,
        c,
        passed: false,
        samples: points.len(),
        excluded: 0,
        min_eigenvalue: f64::INFINITY,
        sup_value: f64::NEG_INFINITY,
        worst_eigenvalue_sample: None,
        sup_sample: None,
    };
    for (q, row) in points.iter().zip(rows) {
        let (v, l) = row?;
        if v > cert.sup_value {
            cert.sup_value = v;
            cert.sup_sample = Some((*q).clone());
        }
        match l {
            Some(l) if l < cert.min_eigenvalue => {
                cert.min_eigenvalue = l;
                cert.worst_eigenvalue_sample = Some((*q).clone());
            }
            Some(_) => {}
            None => cert.excluded += 1,
        }
    }
    cert.passed = cert.min_eigenvalue >= epsilon / 2.0 && cert.sup_value <= -c / 2.0;
    Ok(cert)
}

/// Certifies `ω_V + i∂∂̄φ ≥ (ε/2)·ω_V` and `φ ≤ −C/2` on the grids.
pub fn check_star(
    model: &dyn ManifoldModel,
    phi: &dyn ScalarField,
    epsilon: f64,
    c: f64,
    grids: &[SampleGrid],
    step: f64,
) -> Result<StarCertificate> {
    let cert = star_margins(model, phi, epsilon, c, grids, step)?;
    if cert.min_eigenvalue < epsilon / 2.0 {
        return Err(Error::Certification(format!(
            "curvature margin {:.6} is below ε/2 = {:.6} at {}",
            cert.min_eigenvalue,
            epsilon / 2.0,
            cert.worst_eigenvalue_sample.as_ref().map_or("no sample".into(), |p| p.to_string())
        )));
    }
    if cert.sup_value > -c / 2.0 {
        return Err(Error::Certification(format!(
            "sup φ = {:.6} exceeds −C/2 = {:.6} at {}",
            cert.sup_value,
            -c / 2.0,
            cert.sup_sample.as_ref().map_or("no sample".into(), |p| p.to_string())
        )));
    }
    Ok(cert)
}

/// One row of the regularization table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegularizationEntry {
    pub m: u32,
    /// Minimum relative eigenvalue of `ω_V + i∂∂̄φ_m` over all samples.
    pub min_eigenvalue: f64,
    /// `|min_eigenvalue − ε_ref|`.
    pub epsilon_m: f64,
    pub sup_value: f64,
    /// `φ_m ≥ φ − shift` at every sample.
    pub above_limit: bool,
    /// `φ_m ≤ φ_{m'}` for the previous `m'` in the schedule.
    pub below_previous: bool,
    /// `φ_m − φ + shift ≤ c·log(1 + 1/(m·S))` at every sample.
    pub convergence_bound: bool,
}

/// The regularized family with its measured curvature loss.
#[derive(Clone, Debug, Serialize)]
pub struct Regularization {
    pub schedule: Vec<u32>,
    pub shift: f64,
    /// Minimum relative eigenvalue for `φ` outside the singular margin.
    pub epsilon_ref: f64,
    pub entries: Vec<RegularizationEntry>,
    /// `ε_m` strictly decreasing along the schedule; vacuous for smooth `φ`.
    pub epsilon_decreasing: bool,
    #[serde(skip)]
    pub members: Vec<Arc<QpshFunction>>,
}

impl Regularization {
    pub fn passed(&self) -> bool {
        self.epsilon_decreasing && self.entries.iter().all(|e| e.above_limit && e.below_previous && e.convergence_bound)
    }
}

/// Builds `φ_m` for the schedule with the common shift that puts
/// `sup φ_{m₁} ≤ −C/2` on the samples, and tabulates `ε_m`.
pub fn regularize(
    phi: &QpshFunction,
    schedule: &[u32],
    c: f64,
    grids: &[SampleGrid],
    step: f64,
) -> Result<Regularization> {
    if schedule.is_empty() || schedule[0] == 0 || schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter(format!("m schedule {schedule:?} must be positive and strictly increasing")));
    }
    if phi.regularization.is_some() {
        return Err(Error::Precondition("function is already regularized".into()));
    }
    let model = phi.model.clone();
    let points: Vec<&ChartPoint> = grids.iter().flat_map(|g| g.points()).collect();
    if points.is_empty() {
        return Err(Error::Precondition("no samples on V".into()));
    }
    let first = phi.regularized(schedule[0], 0.0)?;
    let mut sup = f64::NEG_INFINITY;
    for q in &points {
        sup = sup.max(first.evaluate(q)?);
    }
    let shift = (sup + c / 2.0).max(0.0);
    let members: Vec<Arc<QpshFunction>> =
        schedule.iter().map(|&m| phi.regularized(m, shift).map(Arc::new)).collect::<Result<_>>()?;

    let base: Vec<(f64, f64, Option<f64>)> = points
        .par_iter()
        .map(|q| {
            let v = phi.base_value(q)?;
            let s = phi.sum_of_squares(q)?;
            let l = match relative_eigenvalue(model.as_ref(), phi, q, step) {
                Ok(l) => Some(l),
                Err(Error::Refused(_)) => None,
                Err(e) => return Err(e),
            };
            Ok((v, s, l))
        })
        .collect::<Result<_>>()?;
    let epsilon_ref = base.iter().filter_map(|b| b.2).fold(f64::INFINITY, f64::min);
    if !epsilon_ref.is_finite() {
        return Err(Error::Precondition("every sample lies inside the singular margin".into()));
    }

    let mut entries: Vec<RegularizationEntry> = Vec::new();
    let mut previous: Option<Vec<f64>> = None;
    for (member, &m) in members.iter().zip(schedule) {
        let rows: Vec<(f64, f64)> = points
            .par_iter()
            .map(|q| Ok((member.evaluate(q)?, relative_eigenvalue(model.as_ref(), member.as_ref(), q, step)?)))
            .collect::<Result<_>>()?;
        let values: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let min_eigenvalue = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
        let tol = |v: f64| 1e-12 * v.abs().max(1.0);
        let mut above_limit = true;
        let mut convergence_bound = true;
        for (&v, &(limit, s, _)) in values.iter().zip(&base) {
            let gap = v + shift - limit;
            above_limit &= gap >= -tol(v);
            if s > 0.0 {
                convergence_bound &= gap <= phi.coefficient * (1.0 / (m as f64 * s)).ln_1p() + tol(v);
            }
        }
        let below_previous = previous.as_ref().is_none_or(|p| values.iter().zip(p).all(|(v, w)| *v <= *w + tol(*w)));
        entries.push(RegularizationEntry {
            m,
            min_eigenvalue,
            epsilon_m: (min_eigenvalue - epsilon_ref).abs(),
            sup_value: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            above_limit,
            below_previous,
            convergence_bound,
        });
        previous = Some(values);
    }
    let epsilon_decreasing = phi.coefficient == 0.0 || entries.windows(2).all(|w| w[1].epsilon_m < w[0].epsilon_m);
    Ok(Regularization { schedule: schedule.to_vec(), shift, epsilon_ref, entries, epsilon_decreasing, members })
}
