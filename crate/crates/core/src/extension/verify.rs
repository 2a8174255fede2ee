//! Sample-wise certification of the glued family.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::glue::{Branch, GluedExtension};
use crate::error::{Error, Result};
use crate::geometry::{complex_hessian, pencil_eigenvalues, ChartPoint, ScalarField};
use crate::models::{embed, metric_at, ManifoldModel};
use crate::qpsh::QpshFunction;

/// Exclusion collars and tolerances of the verification pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Samples where the two branches differ by less than this are excluded.
    pub equality_collar: f64,
    /// Relative offset of the collar samples on either side of `∂W`.
    pub collar_width: f64,
    /// Slack of the pointwise comparisons.
    pub value_tolerance: f64,
    /// Required fraction of non-excluded samples passing the positivity check.
    pub positivity_fraction: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { equality_collar: 1e-2, collar_width: 0.02, value_tolerance: 1e-12, positivity_fraction: 1.0 }
    }
}

/// Everything verification reads.
pub struct VerifyInputs<'a> {
    pub model: &'a dyn ManifoldModel,
    /// `φ`, unregularized; `family[i]` is `φ_{m_i}`.
    pub limit: &'a QpshFunction,
    pub family: &'a [Arc<QpshFunction>],
    pub glued: &'a [GluedExtension],
    pub epsilon_prime: f64,
    pub step: f64,
    pub points: &'a [ChartPoint],
    pub v_points: &'a [ChartPoint],
    pub boundary: &'a [ChartPoint],
    pub collar_inner: &'a [ChartPoint],
    pub collar_outer: &'a [ChartPoint],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub worst_sample: Option<ChartPoint>,
}

/// Why a sample carries no positivity verdict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Exclusion {
    /// Within the smoothness margin of `F` around `V`.
    Singular,
    /// Within the equality collar of the max.
    Equality,
    /// Difference stencil leaves the domain of the active branch.
    Stencil,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleValue {
    pub value: f64,
    pub branch: Branch,
    pub min_eigenvalue: Option<f64>,
    pub excluded: Option<Exclusion>,
}

/// Per-sample record for the CSV output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleRow {
    pub point: ChartPoint,
    pub h: Option<f64>,
    pub members: Vec<SampleValue>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MemberDiagnostics {
    pub m: u32,
    pub min_eigenvalue: f64,
    pub worst_sample: Option<ChartPoint>,
    pub checked: usize,
    pub positivity_failures: usize,
    pub excluded_singular: usize,
    pub excluded_equality: usize,
    pub excluded_stencil: usize,
    pub local_branch_samples: usize,
    pub max_value: f64,
    /// `max_V |Φ_m − φ_m|`.
    pub restriction_error: f64,
    /// `min (Φ_{m'} − Φ_m)` against the previous member; `None` for the first.
    pub monotonicity_margin: Option<f64>,
    pub max_on_v: f64,
    pub boundary_margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verification {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
    pub members: Vec<MemberDiagnostics>,
    pub samples: usize,
    pub v_samples: usize,
    pub boundary_samples: usize,
    pub collar_samples: usize,
    /// `C″` recomputed from the first member on the `∂W` samples.
    pub c_double_prime: f64,
    pub inf_nu_f_boundary: f64,
    #[serde(skip)]
    pub rows: Vec<SampleRow>,
}

fn relative_min(model: &dyn ManifoldModel, f: &dyn ScalarField, p: &ChartPoint, step: f64) -> Result<f64> {
    let hess = complex_hessian(f, p, step)?;
    let g = metric_at(model, p)?;
    Ok(pencil_eigenvalues(g.add_scaled(&hess, 1.0)?.entries(), g.entries())?[0])
}

fn sample_member(inputs: &VerifyInputs<'_>, cfg: &VerifyConfig, g: &GluedExtension, p: &ChartPoint) -> Result<(Option<f64>, SampleValue)> {
    let b = g.glued.branches(p)?;
    let gap = b.local.map(|t| (t - b.reference).abs());
    let (field, excluded) = match b.branch {
        _ if gap.is_some_and(|d| d < cfg.equality_collar) => (None, Some(Exclusion::Equality)),
        Branch::Local => (Some(g.tilde.as_ref()), None),
        Branch::Reference | Branch::OutsideW => (Some(g.nu_f.as_ref()), None),
    };
    let (min_eigenvalue, excluded) = match field {
        None => (None, excluded),
        Some(f) => match relative_min(inputs.model, f, p, inputs.step) {
            Ok(l) => (Some(l), None),
            Err(Error::Refused(_)) => (None, Some(Exclusion::Singular)),
            Err(Error::OutsideTube) => (None, Some(Exclusion::Stencil)),
            Err(e) => return Err(e),
        },
    };
    Ok((b.h, SampleValue { value: b.value, branch: b.branch, min_eigenvalue, excluded }))
}

fn check(name: &str, passed: bool, detail: String, worst_sample: Option<ChartPoint>) -> CheckResult {
    CheckResult { name: name.to_owned(), passed, detail, worst_sample }
}

/// Certifies the glued family on the samples.
pub fn verify_extension(inputs: &VerifyInputs<'_>, cfg: &VerifyConfig) -> Result<Verification> {
    let glued = inputs.glued;
    if glued.len() < 2 || glued.len() != inputs.family.len() {
        return Err(Error::Precondition("verification needs at least two members with matching φ_m".into()));
    }
    if inputs.points.is_empty() || inputs.v_points.is_empty() || inputs.boundary.is_empty() {
        return Err(Error::Precondition("verification needs ambient, V and boundary samples".into()));
    }
    let tol = |v: f64| cfg.value_tolerance * v.abs().max(1.0);

    let rows: Vec<SampleRow> = inputs
        .points
        .par_iter()
        .map(|p| {
            let mut h = None;
            let mut members = Vec::with_capacity(glued.len());
            for g in glued {
                let (hv, s) = sample_member(inputs, cfg, g, p)?;
                h = hv;
                members.push(s);
            }
            Ok(SampleRow { point: p.clone(), h, members })
        })
        .collect::<Result<_>>()?;

    // Values on V, for restriction, monotonicity and non-degeneracy.
    let v_rows: Vec<(Vec<f64>, Vec<f64>, f64)> = inputs
        .v_points
        .par_iter()
        .map(|q| {
            let p = embed(inputs.model, q)?;
            let ext = glued.iter().map(|g| g.glued.evaluate(&p)).collect::<Result<Vec<_>>>()?;
            let own = inputs.family.iter().map(|f| f.evaluate(q)).collect::<Result<Vec<_>>>()?;
            Ok((ext, own, inputs.limit.base_value(q)? - inputs.family[0].shift()))
        })
        .collect::<Result<_>>()?;

    let mut members = Vec::new();
    for (i, g) in glued.iter().enumerate() {
        let mut d = MemberDiagnostics {
            m: g.m,
            min_eigenvalue: f64::INFINITY,
            worst_sample: None,
            checked: 0,
            positivity_failures: 0,
            excluded_singular: 0,
            excluded_equality: 0,
            excluded_stencil: 0,
            local_branch_samples: 0,
            max_value: f64::NEG_INFINITY,
            restriction_error: 0.0,
            monotonicity_margin: (i > 0).then_some(f64::INFINITY),
            max_on_v: f64::NEG_INFINITY,
            boundary_margin: g.boundary_margin,
        };
        for row in &rows {
            let s = &row.members[i];
            d.max_value = d.max_value.max(s.value);
            if s.branch == Branch::Local {
                d.local_branch_samples += 1;
            }
            match (s.min_eigenvalue, s.excluded) {
                (Some(l), _) => {
                    d.checked += 1;
                    if l < inputs.epsilon_prime {
                        d.positivity_failures += 1;
                    }
                    if l < d.min_eigenvalue {
                        d.min_eigenvalue = l;
                        d.worst_sample = Some(row.point.clone());
                    }
                }
                (None, Some(Exclusion::Singular)) => d.excluded_singular += 1,
                (None, Some(Exclusion::Equality)) => d.excluded_equality += 1,
                (None, _) => d.excluded_stencil += 1,
            }
            if let Some(mm) = d.monotonicity_margin.as_mut() {
                *mm = mm.min(row.members[i - 1].value - s.value);
            }
        }
        for (ext, own, _) in &v_rows {
            d.restriction_error = d.restriction_error.max((ext[i] - own[i]).abs());
            d.max_on_v = d.max_on_v.max(own[i]);
            d.max_value = d.max_value.max(ext[i]);
            if let Some(mm) = d.monotonicity_margin.as_mut() {
                *mm = mm.min(ext[i - 1] - ext[i]);
            }
        }
        members.push(d);
    }

    let mut checks = Vec::new();
    let worst_mono = members.iter().filter_map(|d| d.monotonicity_margin).fold(f64::INFINITY, f64::min);
    checks.push(check("monotone_in_m", worst_mono >= -cfg.value_tolerance, format!("min over samples of Φ_m' − Φ_m = {worst_mono:.3e}"), None));
    let worst_max = members.iter().map(|d| d.max_value).fold(f64::NEG_INFINITY, f64::max);
    checks.push(check("nonpositive", worst_max <= 0.0, format!("max Φ_m = {worst_max:.6}"), None));
    let failing = members.iter().find(|d| {
        d.checked == 0 || (d.checked - d.positivity_failures) as f64 / (d.checked as f64) < cfg.positivity_fraction
    });
    let worst_pos = members.iter().min_by(|a, b| a.min_eigenvalue.total_cmp(&b.min_eigenvalue)).unwrap();
    checks.push(check(
        "branchwise_positivity",
        failing.is_none(),
        format!(
            "min eigenvalue {:.6} (m = {}) against epsilon' = {}; failures per m {:?}",
            worst_pos.min_eigenvalue,
            worst_pos.m,
            inputs.epsilon_prime,
            members.iter().map(|d| d.positivity_failures).collect::<Vec<_>>()
        ),
        worst_pos.worst_sample.clone(),
    ));
    let worst_res = members.iter().map(|d| d.restriction_error).fold(0.0, f64::max);
    checks.push(check("restriction_to_v", worst_res <= cfg.value_tolerance, format!("max |Φ_m − φ_m| on V = {worst_res:.3e}"), None));
    let limit_sup = v_rows.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max);
    let floor = members.iter().map(|d| d.max_on_v).fold(f64::INFINITY, f64::min);
    checks.push(check(
        "non_degeneracy",
        floor.is_finite() && limit_sup.is_finite() && floor >= limit_sup - tol(limit_sup),
        format!("min over m of max_V φ_m = {floor:.6}, max_V φ = {limit_sup:.6}"),
        None,
    ));

    let first = &glued[0];
    let mut sup_tilde = f64::NEG_INFINITY;
    let mut inf_nu_f = f64::INFINITY;
    let mut inf_sample = None;
    for x in inputs.boundary {
        sup_tilde = sup_tilde.max(first.tilde.evaluate(x)?);
        let v = first.nu_f.evaluate(x)?;
        if v < inf_nu_f {
            inf_nu_f = v;
            inf_sample = Some(x.clone());
        }
    }
    let c_double_prime = -sup_tilde;
    checks.push(check(
        "nu_boundary_condition",
        c_double_prime > 0.0 && inf_nu_f > -c_double_prime / 2.0,
        format!("inf νF = {inf_nu_f:.6} against −C''/2 = {:.6}", -c_double_prime / 2.0),
        inf_sample,
    ));
    let mut worst_margin = f64::INFINITY;
    let mut margin_sample = None;
    for g in glued {
        for x in inputs.boundary {
            let d = g.nu_f.evaluate(x)? - g.tilde.evaluate(x)?;
            if d < worst_margin {
                worst_margin = d;
                margin_sample = Some(x.clone());
            }
        }
    }
    checks.push(check("boundary_margin", worst_margin > 0.0, format!("min over ∂W of νF − φ̃_m = {worst_margin:.6}"), margin_sample));
    let mut jump = 0.0_f64;
    let mut single_branch = true;
    let mut jump_sample = None;
    for g in glued {
        for (x, inner) in inputs.collar_inner.iter().map(|x| (x, true)).chain(inputs.collar_outer.iter().map(|x| (x, false))) {
            let b = g.glued.branches(x)?;
            let j = (b.value - b.reference).abs();
            if j > jump {
                jump = j;
                jump_sample = Some(x.clone());
            }
            if inner && b.branch != Branch::Reference {
                single_branch = false;
                jump_sample = Some(x.clone());
            }
        }
    }
    checks.push(check(
        "collar_continuity",
        single_branch && jump <= cfg.value_tolerance,
        format!("max |Φ_m − νF| on the collar = {jump:.3e}; single branch inside: {single_branch}"),
        jump_sample,
    ));

    Ok(Verification {
        passed: checks.iter().all(|c| c.passed),
        checks,
        members,
        samples: rows.len(),
        v_samples: inputs.v_points.len(),
        boundary_samples: inputs.boundary.len(),
        collar_samples: inputs.collar_inner.len() + inputs.collar_outer.len(),
        c_double_prime,
        inf_nu_f_boundary: inf_nu_f,
        rows,
    })
}

/// CSV with columns `chart, x{i}_re, x{i}_im, h`, then `phi_m{m}`,
/// `min_eig_m{m}`, `branch_m{m}` per member.
pub fn write_csv(out: impl Write, rows: &[SampleRow], schedule: &[u32]) -> Result<()> {
    let io = |e: csv::Error| Error::Config(format!("writing CSV: {e}"));
    let dim = rows.iter().map(|r| r.point.dim()).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["chart".to_owned()];
    for i in 0..dim {
        header.push(format!("x{i}_re"));
        header.push(format!("x{i}_im"));
    }
    header.push("h".into());
    for m in schedule {
        header.push(format!("phi_m{m}"));
        header.push(format!("min_eig_m{m}"));
        header.push(format!("branch_m{m}"));
    }
    w.write_record(&header).map_err(io)?;
    for r in rows {
        let mut rec = vec![r.point.chart.name().to_owned()];
        for c in &r.point.coords {
            rec.push(format!("{:?}", c.re));
            rec.push(format!("{:?}", c.im));
        }
        rec.push(r.h.map_or(String::new(), |h| format!("{h:?}")));
        for s in &r.members {
            rec.push(format!("{:?}", s.value));
            rec.push(s.min_eigenvalue.map_or(String::new(), |l| format!("{l:?}")));
            let branch = match s.excluded {
                Some(Exclusion::Equality) => "excluded_equality",
                Some(Exclusion::Singular) => "excluded_singular",
                Some(Exclusion::Stencil) => "excluded_stencil",
                None => s.branch.name(),
            };
            rec.push(branch.to_owned());
        }
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Config(format!("writing CSV: {e}")))?;
    Ok(())
}
