//! Acceptance criteria, one pass/fail line each.
//!
//! Run with `cargo test --test acceptance -- --nocapture --test-threads=1` to
//! see the lines in order.

mod common;

use std::time::{Duration, Instant};

use common::{cli, config_text, load, parse, read_json};
use qpsh_extend::cli::{verify_hessian, HessianCheckConfig, HessianReport, RunConfig};
use qpsh_extend::distance::{real_hessian_h_on_v, squared_distance};
use qpsh_extend::extension::{boundary_samples, construct, find_a, glue, Construction, ExtendConfig};
use qpsh_extend::geometry::field::from_fn;
use qpsh_extend::geometry::{ChartPoint, ScalarField};
use qpsh_extend::models::{embed, v_samples, ModelConfig};
use qpsh_extend::qpsh::{regularize, QpshFunction};
use qpsh_extend::Error;

const HESSIAN_STEP: f64 = 1e-3;
const OFF_BLOCK_TOL: f64 = 1e-4;
const NORMAL_SPREAD_TOL: f64 = 1e-3;
const FLAT_CONSTANT_TOL: f64 = 1e-5;
const JACOBIAN_TOL: f64 = 1e-4;
const REAL_HESSIAN_TOL: f64 = 1e-5;
const MONOTONE_SLACK: f64 = 1e-12;
const RESTRICTION_TOL: f64 = 1e-12;
const SCALE_TOL: f64 = 1e-12;
const MIN_V_POINTS: usize = 5;
const MIN_GRID_SAMPLES: usize = 900;
const SCHEDULE: [u32; 5] = [1, 2, 4, 8, 16];

fn verdict(n: u32, title: &str, failures: &[String], detail: String) {
    let status = if failures.is_empty() { "PASS" } else { "FAIL" };
    println!("criterion {n} [{status}] {title}: {detail}");
    assert!(failures.is_empty(), "criterion {n} failed: {}", failures.join("; "));
}

fn hessian_reports() -> (Vec<(String, HessianReport)>, Duration) {
    let start = Instant::now();
    let reports = ["flat", "product", "serre"]
        .into_iter()
        .map(|name| {
            let (model, extend) = load(name);
            assert_eq!(model.tolerances.hessian_step, HESSIAN_STEP);
            let cfg = RunConfig { model, extend, hessian: HessianCheckConfig { points: MIN_V_POINTS, ..HessianCheckConfig::default() }, out: None };
            (name.to_owned(), verify_hessian(&cfg).unwrap())
        })
        .collect();
    (reports, start.elapsed())
}

#[test]
fn criterion_1_hessian_block_structure() {
    let (reports, elapsed) = hessian_reports();
    let mut failures = Vec::new();
    let mut worst_off = 0.0_f64;
    let mut worst_spread = 0.0_f64;
    let mut flat_c = f64::NAN;
    for (name, r) in &reports {
        if r.points.len() < MIN_V_POINTS {
            failures.push(format!("{name}: only {} points of V", r.points.len()));
        }
        for p in &r.points {
            worst_off = worst_off.max(p.block.off_block_max);
            worst_spread = worst_spread.max(p.block.normal_spread);
            if p.block.off_block_max > OFF_BLOCK_TOL || p.block.normal_spread > NORMAL_SPREAD_TOL {
                failures.push(format!("{name} at {}: off-block {:.3e}, spread {:.3e}", p.point, p.block.off_block_max, p.block.normal_spread));
            }
            if name == "flat" {
                flat_c = p.block.normal_constant;
                if (p.block.normal_constant - 1.0).abs() > FLAT_CONSTANT_TOL {
                    failures.push(format!("flat normal constant {:.8} at {}", p.block.normal_constant, p.point));
                }
            }
        }
    }
    if elapsed > Duration::from_secs(10) {
        failures.push(format!("runtime {elapsed:?} exceeds 10 s"));
    }
    verdict(
        1,
        "Hessian block structure on flat, product and Serre",
        &failures,
        format!("max off-block {worst_off:.2e} (tol {OFF_BLOCK_TOL:.0e}), max spread {worst_spread:.2e} (tol {NORMAL_SPREAD_TOL:.0e}), flat c = {flat_c:.8}, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_2_nearest_point_jacobian() {
    let (reports, elapsed) = hessian_reports();
    let mut failures = Vec::new();
    let mut worst = 0.0_f64;
    let mut points = 0;
    for (name, r) in &reports {
        for p in &r.points {
            points += 1;
            worst = worst.max(p.jacobian_deviation);
            if p.jacobian_deviation > JACOBIAN_TOL {
                failures.push(format!("{name} at {}: deviation {:.3e}", p.point, p.jacobian_deviation));
            }
        }
    }
    if elapsed > Duration::from_secs(10) {
        failures.push(format!("runtime {elapsed:?} exceeds 10 s"));
    }
    verdict(2, "nearest-point Jacobian equals [I_k | 0]", &failures, format!("max deviation {worst:.2e} over {points} points (tol {JACOBIAN_TOL:.0e}), {elapsed:.2?}"));
}

#[test]
fn criterion_3_real_hessian_on_flat_model() {
    let (cfg, _) = load("flat");
    let model = cfg.load().unwrap();
    let h = squared_distance(&model);
    let k = model.submanifold().k;
    let qs: Vec<ChartPoint> = v_samples(model.as_ref(), 0.2, 0).unwrap().iter().flat_map(|g| g.points().to_vec()).collect();
    let mut failures = Vec::new();
    let (mut normal_dev, mut other_dev) = (0.0_f64, 0.0_f64);
    for q in qs.iter().step_by((qs.len() / MIN_V_POINTS).max(1)).take(MIN_V_POINTS) {
        let p = embed(model.as_ref(), q).unwrap();
        let r = real_hessian_h_on_v(model.as_ref(), h.clone(), &p, HESSIAN_STEP).unwrap();
        for s in 0..r.nrows() {
            for t in 0..r.ncols() {
                if s == t && s >= 2 * k {
                    normal_dev = normal_dev.max((r[(s, t)] - 2.0).abs());
                } else {
                    other_dev = other_dev.max(r[(s, t)].abs());
                }
            }
        }
    }
    if normal_dev > REAL_HESSIAN_TOL || other_dev > REAL_HESSIAN_TOL {
        failures.push(format!("normal deviation {normal_dev:.3e}, tangential/mixed {other_dev:.3e}"));
    }
    verdict(
        3,
        "real Hessian of h is diag(0, 2) on the flat model",
        &failures,
        format!("|R_ss − 2| ≤ {normal_dev:.2e}, |R_st| ≤ {other_dev:.2e} (tol {REAL_HESSIAN_TOL:.0e})"),
    );
}

#[test]
fn criterion_4_regularization_contract() {
    let start = Instant::now();
    let (cfg, extend) = load("serre");
    let model = cfg.load().unwrap();
    let spec = extend.phi.clone().unwrap();
    assert!(spec.singular.iter().any(|s| s.contains("theta1")) && spec.coefficient == 1.0);
    let phi = QpshFunction::parse(model.clone(), &spec).unwrap();
    let grids = v_samples(model.as_ref(), cfg.grid.v_spacing, 0).unwrap();
    let reg = regularize(&phi, &SCHEDULE, extend.star.c, &grids, HESSIAN_STEP).unwrap();
    let mut failures = Vec::new();
    if reg.shift != 0.0 {
        failures.push(format!("common shift {} moves φ_m below φ", reg.shift));
    }
    let mut worst_monotone = f64::NEG_INFINITY;
    let mut worst_above = f64::INFINITY;
    for q in grids.iter().flat_map(|g| g.points()) {
        let limit = phi.evaluate(q).unwrap();
        let values: Vec<f64> = reg.members.iter().map(|f| f.evaluate(q).unwrap()).collect();
        for w in values.windows(2) {
            worst_monotone = worst_monotone.max(w[1] - w[0]);
        }
        for v in &values {
            worst_above = worst_above.min(v - limit);
        }
    }
    if worst_monotone > MONOTONE_SLACK {
        failures.push(format!("φ_(m+1) − φ_m reaches {worst_monotone:.3e}"));
    }
    if worst_above < 0.0 {
        failures.push(format!("φ_m − φ reaches {worst_above:.3e}"));
    }
    let eps_m: Vec<f64> = reg.entries.iter().map(|e| e.epsilon_m).collect();
    if !eps_m.windows(2).all(|w| w[1] < w[0]) {
        failures.push(format!("ε_m not strictly decreasing: {eps_m:?}"));
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(60) {
        failures.push(format!("runtime {elapsed:?} exceeds 60 s"));
    }
    let eps = extend.star.epsilon;
    let margins: Vec<String> = eps_m.iter().map(|e| format!("{:.4}", eps - e)).collect();
    verdict(
        4,
        "regularization of −10 + log|θ₁|² on a torus V",
        &failures,
        format!(
            "max φ_(m+1) − φ_m = {worst_monotone:.2e}, min φ_m − φ = {worst_above:.3e}, ε_m = {:?}, ε − ε_m = [{}], {elapsed:.2?}",
            eps_m.iter().map(|e| format!("{e:.4}")).collect::<Vec<_>>(),
            margins.join(", ")
        ),
    );
}

const FIVE_CHECKS: [&str; 5] = ["monotone_in_m", "nonpositive", "branchwise_positivity", "restriction_to_v", "non_degeneracy"];

/// Runs `extend` through the binary and checks the report of one model.
fn end_to_end(name: &str, failures: &mut Vec<String>) -> String {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let start = Instant::now();
    let (status, stderr) = cli(&["extend", "--config", common::config_path(name).to_str().unwrap(), "--out", out]);
    let elapsed = start.elapsed();
    if status != 0 {
        failures.push(format!("{name}: status {status}: {stderr}"));
        return format!("{name} status {status}");
    }
    if elapsed > Duration::from_secs(600) {
        failures.push(format!("{name}: runtime {elapsed:?} exceeds 10 min"));
    }
    let r = read_json(&dir.path().join("extension_report.json"));
    let v = &r["verification"];
    for check in FIVE_CHECKS {
        let c = v["checks"].as_array().unwrap().iter().find(|c| c["name"] == check);
        if c.map(|c| c["passed"] != true).unwrap_or(true) {
            failures.push(format!("{name}: check {check} did not pass"));
        }
    }
    let mut checked = 0;
    for m in v["members"].as_array().unwrap() {
        checked += m["checked"].as_u64().unwrap();
        if m["positivity_failures"] != 0 {
            failures.push(format!("{name}: m = {} has positivity failures", m["m"]));
        }
        if m["min_eigenvalue"].as_f64().unwrap() < r["constants"]["epsilon_prime"].as_f64().unwrap() {
            failures.push(format!("{name}: m = {} minimum eigenvalue below ε′", m["m"]));
        }
        if m["restriction_error"].as_f64().unwrap() > RESTRICTION_TOL {
            failures.push(format!("{name}: m = {} restriction error {}", m["m"], m["restriction_error"]));
        }
    }
    for region in r["grid"]["regions"].as_array().unwrap() {
        if region["samples"].as_u64().unwrap() < MIN_GRID_SAMPLES as u64 {
            failures.push(format!("{name}: chart {} has {} samples", region["chart"], region["samples"]));
        }
    }
    let ex = &r["exclusion"];
    if !(ex["equality_collar"].is_number() && ex["reference_collar"].is_number() && ex["phi_margin"].is_number()) {
        failures.push(format!("{name}: exclusion collar missing from the report"));
    }
    let k = &r["constants"];
    if !(k["a"].as_f64().unwrap_or(0.0) > 0.0 && k["epsilon_prime"].as_f64().unwrap_or(0.0) > 0.0 && k["nu"].as_f64().unwrap_or(0.0) > 0.0) {
        failures.push(format!("{name}: (A, ε′, ν) not archived"));
    }
    format!(
        "{name}: A = {:.4}, ε′ = {}, ν = {:.4}, {} member samples, {:.1?}",
        k["a"].as_f64().unwrap_or(f64::NAN),
        k["epsilon_prime"],
        k["nu"].as_f64().unwrap_or(f64::NAN),
        checked,
        elapsed
    )
}

#[test]
fn criterion_5_end_to_end_extension() {
    let mut failures = Vec::new();
    let details: Vec<String> = ["product", "serre"].into_iter().map(|m| end_to_end(m, &mut failures)).collect();
    verdict(5, "end-to-end extension on the product and Serre models", &failures, details.join("; "));
}

fn with_phi(base: &str, phi: &str) -> String {
    let start = base.find("[phi]").unwrap();
    let end = base[start..].find("\n[star]").map(|i| start + i).unwrap();
    format!("{}{}\n{}", &base[..start], phi, &base[end..])
}

fn built(text: &str) -> (ModelConfig, ExtendConfig, qpsh_extend::extension::ExtensionReport, Construction) {
    let (m, e) = parse(text);
    let (report, c) = construct(&m, &e).unwrap();
    let c = c.unwrap_or_else(|| panic!("construction stopped at {:?}", report.failed_stage));
    (m, e, report, c)
}

#[test]
fn criterion_6_find_a_independent_of_phi() {
    let base = config_text("torus_p1");
    let families = [
        "[phi]\nsmooth = \"-10\"\n",
        "[phi]\nsmooth = \"-10 + 0.5*cos(2*pi*re(z))\"\n",
        "[phi]\nsmooth = \"-10\"\ncoefficient = 1.0\nsingular = [\"theta1(z, tau)\"]\nweight = \"2*pi*im(z)^2/im(tau)\"\nconstants = { tau = [0.0, 1.0] }\nzeros = [[[0.0, 0.0]]]\n",
    ];
    let mut failures = Vec::new();
    let mut outputs = Vec::new();
    let mut probes = Vec::new();
    for phi in families {
        let (m, e, report, c) = built(&with_phi(&base, phi));
        let star = report.star.as_ref().unwrap();
        if !star.passed || star.epsilon != e.star.epsilon || star.c != e.star.c {
            failures.push(format!("family `{}` is not certified in the shared class", phi.lines().nth(1).unwrap()));
        }
        outputs.push(serde_json::to_string(&c.local).unwrap());
        probes.push(c.family[0].evaluate(&c.v_points[c.v_points.len() / 3]).unwrap());
        let direct = find_a(c.model.as_ref(), squared_distance(&c.model).as_ref(), e.star.epsilon / 2.0, e.star.c, &e.find_a, &c.x_points, m.tolerances.hessian_step).unwrap();
        if direct != c.local {
            failures.push("pipeline find_A differs from a direct call".into());
        }
    }
    if probes.windows(2).any(|w| w[0] == w[1]) {
        failures.push(format!("families are not distinct: φ_1 probes {probes:?}"));
    }
    if outputs.windows(2).any(|w| w[0] != w[1]) {
        failures.push("find_A output differs between families".into());
    }
    verdict(6, "find_A output is bit-identical across three ★ families", &failures, format!("{} families, {} bytes of identical output", outputs.len(), outputs[0].len()));
}

fn gluing_contract(name: &str, failures: &mut Vec<String>) -> String {
    let (_, e, _, c) = built(&config_text(name));
    let w2 = c.local.w_radius * c.local.w_radius;
    let refined = boundary_samples(c.model.as_ref(), c.local.w_radius, e.glue.boundary_v_spacing / 2.0, 2 * e.glue.boundary_directions).unwrap();
    let tilde_1 = c.glued[0].tilde.clone();
    let nu_f = c.glued[0].nu_f.clone();
    let mut min_margin = f64::INFINITY;
    for x in c.boundary.iter().chain(&refined) {
        min_margin = min_margin.min(nu_f.evaluate(x).unwrap() - tilde_1.evaluate(x).unwrap());
    }
    if !(min_margin > 0.0) {
        failures.push(format!("{name}: boundary margin {min_margin:.3e}"));
    }

    let mut outside = 0;
    let on_v: Vec<ChartPoint> = c.v_points.iter().map(|q| embed(c.model.as_ref(), q).unwrap()).collect();
    let points: Vec<&ChartPoint> = c.x_points.iter().chain(&on_v).collect();
    for g in &c.glued {
        for x in c.x_points.iter() {
            let in_w = match c.h.evaluate(x) {
                Ok(h) => h < w2,
                Err(Error::OutsideTube) => false,
                Err(err) => panic!("{err}"),
            };
            if !in_w {
                outside += 1;
                let (a, b) = (g.field().evaluate(x).unwrap(), g.nu_f.evaluate(x).unwrap());
                if a.to_bits() != b.to_bits() {
                    failures.push(format!("{name}: Φ_{} = {a} differs from νF = {b} at {x}", g.m));
                }
            }
        }
    }
    if outside == 0 {
        failures.push(format!("{name}: no samples outside W"));
    }

    let two_f = c.reference.scaled_field(2.0);
    let half_nu = c.nu.nu / 2.0;
    let scaled = from_fn(move |p| Ok(half_nu * two_f.evaluate(p)?));
    let mut max_diff = 0.0_f64;
    for g in &c.glued {
        let other = glue(g.m, g.tilde.clone(), half_nu, scaled.clone(), c.h.clone(), g.w_radius, &c.boundary, e.glue.smoothing_width).unwrap();
        for x in &points {
            let (a, b) = (g.field().evaluate(x).unwrap(), other.field().evaluate(x).unwrap());
            let d = if a == b { 0.0 } else { (a - b).abs() };
            max_diff = max_diff.max(d);
        }
    }
    if !(max_diff <= SCALE_TOL) {
        failures.push(format!("{name}: ν-scale change moves Φ_m by {max_diff:.3e}"));
    }
    format!("{name}: min νF − φ̃_1 on ∂W = {min_margin:.4} ({} samples), {outside} outside-W checks, scale change {max_diff:.1e}", c.boundary.len() + refined.len())
}

#[test]
fn criterion_7_gluing_contract() {
    let mut failures = Vec::new();
    let details: Vec<String> = ["product_local", "torus_p1"].into_iter().map(|m| gluing_contract(m, &mut failures)).collect();
    verdict(7, "gluing contract", &failures, details.join("; "));
}

#[test]
fn criterion_8_fault_injection() {
    let cases = [
        ("product_nu_doubled", "verify_extension"),
        ("product_bad_epsilon_prime", "find_A"),
    ];
    let mut failures = Vec::new();
    let mut seen = Vec::new();
    let mut run = |label: String, text: &str, stage: &str| {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("config.toml");
        std::fs::write(&cfg, text).unwrap();
        let (status, _) = cli(&["extend", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
        let r = read_json(&dir.path().join("extension_report.json"));
        if status != 1 || r["status"] != 1 || r["failed_stage"] != stage {
            failures.push(format!("{label}: status {status}, failed stage {}", r["failed_stage"]));
        }
        let failed: Vec<String> = r["verification"]["checks"]
            .as_array()
            .map(|cs| cs.iter().filter(|c| c["passed"] == false).map(|c| c["name"].as_str().unwrap().to_owned()).collect())
            .unwrap_or_default();
        seen.push(format!("{label} -> {} {}", r["failed_stage"], failed.join(",")));
    };
    for (name, stage) in cases {
        run(name.to_owned(), &config_text(name), stage);
    }
    let local_doubled = format!("{}\n[faults]\nnu_scale = 2.0\n", config_text("product_local"));
    run("product_local ν×2".to_owned(), &local_doubled, "verify_extension");
    verdict(8, "fault injection yields the designated failure", &failures, seen.join("; "));
}
