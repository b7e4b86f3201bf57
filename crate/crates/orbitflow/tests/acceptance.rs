//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//!
//! Every expected value below comes from a closed-form oracle on the
//! built-in scenarios: the separable latitude equation dz/dt = z on sphere
//! factors (collapse at t = ln(1/z0), backward decay z0 e^-t), the
//! coordinate-mass dynamics on projective space (volume a*b*c with the
//! moment components growing at the Einstein rate), and the Clifford torus
//! as the unique interior maximum of a*b*c.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the table.

use std::collections::HashMap;

use nalgebra::DVector;
use orbitflow::flow::{self, Direction, FlowParams, FlowTrace};
use orbitflow::kaehler;
use orbitflow::manifolds::Point;
use orbitflow::numerics::Terminal;
use orbitflow::runner::{self, RunConfig};
use orbitflow::scenarios::{self, Scenario};

const SEED: u64 = 42;

fn criterion(number: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("acceptance {number:02} {name}: {verdict} ({detail})");
    assert!(pass, "criterion {number:02} {name}: {detail}");
}

fn fwd_params() -> FlowParams {
    runner::verify_flow_params(Direction::Forward)
}

fn bwd_params() -> FlowParams {
    runner::verify_flow_params(Direction::Backward)
}

fn default_start(s: &Scenario) -> Point {
    s.initial_point(&HashMap::new()).expect("default start")
}

fn run_flow(s: &Scenario, p0: &Point, params: &FlowParams) -> FlowTrace {
    flow::mcf(&s.action, s.moment.as_ref(), p0, params).expect("flow runs")
}

fn latitude_start(s: &Scenario, z0: f64) -> Point {
    s.initial_point(&HashMap::from([("z0".to_string(), z0)]))
        .expect("latitude start")
}

fn sphere_mass(p: &Point, k: usize) -> f64 {
    p.coords[2 * k].powi(2) + p.coords[2 * k + 1].powi(2)
}

/// 1. Forward collapse on the sphere happens at t = ln(1/z0).
#[test]
fn criterion_01_sphere_collapse_time() {
    let s = scenarios::build("s2_rotation").unwrap();
    let trace = run_flow(&s, &latitude_start(&s, 0.5), &fwd_params());
    let t_final = trace.terminal_state().t;
    let ok_single = trace.terminal == Terminal::Collapse && (t_final - 2f64.ln()).abs() < 1e-3;

    let mut cfg = RunConfig::new("s2_rotation");
    cfg.flow = fwd_params();
    cfg.out_dir = std::env::temp_dir().join("orbitflow_acceptance_c1");
    let sweep = runner::sweep(&cfg, "z0=0.1:0.9:9").unwrap();
    let mut worst = 0.0f64;
    let mut ok_sweep = sweep.rows.len() == 9;
    for row in &sweep.rows {
        let z0 = row.params[0].1;
        let dt = (row.t_final - (1.0 / z0).ln()).abs();
        worst = worst.max(dt);
        ok_sweep &= row.terminal == Terminal::Collapse && dt < 1e-3;
    }
    let _ = std::fs::remove_dir_all(&cfg.out_dir);
    criterion(
        1,
        "sphere-collapse-time",
        ok_single && ok_sweep,
        &format!(
            "t(0.5) = {t_final:.7} vs ln 2 = {:.7}; sweep worst |dt| = {worst:.2e}",
            2f64.ln()
        ),
    );
}

/// 2. Backward flow converges to a minimal regular orbit from every built-in
///    regular start; on the sphere the terminal orbit is the equator.
#[test]
fn criterion_02_backward_convergence() {
    let mut ok = true;
    let mut detail = String::new();
    for (name, _) in scenarios::list() {
        let s = scenarios::build(name).unwrap();
        let trace = run_flow(&s, &default_start(&s), &bwd_params());
        let last = trace.terminal_state();
        let converged = trace.terminal == Terminal::Converged && last.h_norm < 1e-7;
        ok &= converged;
        if !converged {
            detail.push_str(&format!("{name}: {:?} |H| = {:.2e}; ", trace.terminal, last.h_norm));
        }
        if name == "s2_rotation" {
            let z = last.p.coords[2].abs();
            let v = (last.vol2 - 1.0).abs();
            ok &= z < 1e-7 && v < 1e-6;
            detail.push_str(&format!("s2 terminal |z| = {z:.2e}, |vol2 - 1| = {v:.2e}"));
        }
    }
    criterion(2, "backward-convergence", ok, &detail);
}

/// 3. Forward dichotomy: collapse comes with |H| blow-up and a deep volume
///    drop; convergence comes with vanishing |H| and volume bounded away
///    from zero. No third outcome.
#[test]
fn criterion_03_dichotomy() {
    let mut ok = true;
    let mut outcomes = String::new();
    let mut runs: Vec<(String, FlowTrace, f64)> = Vec::new();
    for (name, _) in scenarios::list() {
        let s = scenarios::build(name).unwrap();
        let p0 = default_start(&s);
        let vol2_0 = flow::vol_squared(&s.action, &p0);
        runs.push((name.to_string(), run_flow(&s, &p0, &fwd_params()), vol2_0));
    }
    let s2 = scenarios::build("s2_rotation").unwrap();
    for z0 in [0.1, 0.3, 0.7, 0.9] {
        let p0 = latitude_start(&s2, z0);
        let vol2_0 = flow::vol_squared(&s2.action, &p0);
        runs.push((format!("s2 z0={z0}"), run_flow(&s2, &p0, &fwd_params()), vol2_0));
    }
    for (name, trace, vol2_0) in &runs {
        let last = trace.terminal_state();
        let fine = match trace.terminal {
            Terminal::Collapse => last.h_norm > 1e3 && last.vol2 < 1e-12 * vol2_0,
            Terminal::Converged => last.h_norm < 1e-7 && last.vol2 > 1e-3,
            other => {
                outcomes.push_str(&format!("{name}: unexpected {other}; "));
                false
            }
        };
        ok &= fine;
        if !fine {
            outcomes.push_str(&format!(
                "{name}: {} |H| = {:.2e} vol2/vol2_0 = {:.2e}; ",
                trace.terminal,
                last.h_norm,
                last.vol2 / vol2_0
            ));
        }
    }
    criterion(
        3,
        "dichotomy",
        ok,
        &format!("{} forward runs, all collapse-or-converge; {outcomes}", runs.len()),
    );
}

/// 4. Orbit type is preserved in every sweep cell (terminal collapse sample
///    exempt).
#[test]
fn criterion_04_type_preservation() {
    let mut cells = 0usize;
    let mut ok = true;
    let s2 = scenarios::build("s2_rotation").unwrap();
    for i in 0..9 {
        let z0 = 0.1 + 0.1 * i as f64;
        for params in [fwd_params(), bwd_params()] {
            let trace = run_flow(&s2, &latitude_start(&s2, z0), &params);
            ok &= flow::check_type_preservation(&trace);
            cells += 1;
        }
    }
    let cp2 = scenarios::build("cp2_torus").unwrap();
    for i in 0..5 {
        for j in 0..5 {
            let b0 = 0.15 + 0.075 * i as f64;
            let c0 = 0.15 + 0.075 * j as f64;
            let p0 = cp2
                .initial_point(&HashMap::from([
                    ("b0".to_string(), b0),
                    ("c0".to_string(), c0),
                ]))
                .unwrap();
            let trace = run_flow(&cp2, &p0, &bwd_params());
            ok &= flow::check_type_preservation(&trace);
            cells += 1;
        }
    }
    criterion(
        4,
        "type-preservation",
        ok,
        &format!("orbit dimension constant in {cells}/{cells} cells"),
    );
}

/// 5. The flow field is the volume gradient: the finite-difference mean
///    curvature matches the closed form on the sphere, and
///    d/dt log vol = -|H|^2 along every trace.
#[test]
fn criterion_05_gradient_identity() {
    let s2 = scenarios::build("s2_rotation").unwrap();
    let mut worst_field = 0.0f64;
    for p in s2.seeded_regular_points(100, SEED) {
        let fd = flow::mean_curvature(&s2.action, &p, FlowParams::default().fd_step).unwrap();
        let oracle = s2.analytic_mean_curvature(&p).unwrap();
        worst_field = worst_field.max((&fd - &oracle).norm() / oracle.norm());
    }
    let mut worst_mono = 0.0f64;
    for (name, _) in scenarios::list() {
        let s = scenarios::build(name).unwrap();
        let p0 = default_start(&s);
        for params in [fwd_params(), bwd_params()] {
            let trace = run_flow(&s, &p0, &params);
            worst_mono = worst_mono.max(flow::verify_monotonicity(&trace).max_rel_discrepancy);
        }
    }
    criterion(
        5,
        "gradient-identity",
        worst_field < 1e-6 && worst_mono < 1e-3,
        &format!(
            "field error {worst_field:.2e} at 100 points; monotonicity discrepancy {worst_mono:.2e}"
        ),
    );
}

/// 6. The moment condition d mu_X = omega(X~, .) holds at seeded points of
///    every Kaehler scenario.
#[test]
fn criterion_06_moment_condition() {
    let mut worst = 0.0f64;
    let mut count = 0usize;
    for (name, _) in scenarios::list() {
        let s = scenarios::build(name).unwrap();
        let Some(mm) = &s.moment else { continue };
        count += 1;
        for p in s.seeded_regular_points(32, SEED ^ 0xC6) {
            worst = worst.max(kaehler::verify_moment_condition(
                &s.action,
                mm,
                &p,
                FlowParams::default().fd_step,
            ));
        }
    }
    criterion(
        6,
        "moment-condition",
        worst < 1e-6 && count >= 5,
        &format!("max residual {worst:.2e} over {count} Kaehler scenarios, 32 points each"),
    );
}

/// 7. Moment components grow like e^(c t) along the flow (c the Einstein
///    constant) and the moment image stays on a fixed ray.
#[test]
fn criterion_07_exponential_moment_law() {
    let mut detail = String::new();
    let mut ok = true;
    for (name, t_max, c, tol) in [
        ("s2_rotation", 0.5, 1.0, 0.01),
        ("cp2_torus", 0.15, 6.0, 0.06),
    ] {
        let s = scenarios::build(name).unwrap();
        let params = FlowParams {
            t_max,
            ..fwd_params()
        };
        let trace = run_flow(&s, &default_start(&s), &params);
        let mm = s.moment.as_ref().unwrap();
        let (rate, _) = kaehler::verify_flow_moment_law(mm, &trace, c).unwrap();
        ok &= (rate - c).abs() < tol;

        let mut drift = 0.0f64;
        let norm = |m: &Vec<f64>| m.iter().map(|v| v * v).sum::<f64>().sqrt();
        let m0 = trace.samples[0].mu.clone().unwrap();
        let n0 = norm(&m0);
        for s in &trace.samples {
            let m = s.mu.as_ref().unwrap();
            let n = norm(m);
            if n0 > 1e-4 && n > 1e-4 {
                let d = m
                    .iter()
                    .zip(&m0)
                    .map(|(a, b)| (a / n - b / n0).powi(2))
                    .sum::<f64>()
                    .sqrt();
                drift = drift.max(d);
            }
        }
        ok &= drift < 1e-3;
        detail.push_str(&format!("{name}: rate {rate:.4} (c = {c}), ray drift {drift:.1e}; "));
    }
    criterion(7, "exponential-moment-law", ok, &detail);
}

/// 8. The frozen-frame norm law d|mu|^2(H) = 2c |mu|^2 holds to 0.1% at
///    seeded Lagrangian points; on the sphere at z = 1/2 both sides are 2/3.
#[test]
fn criterion_08_frozen_norm_law() {
    let mut ok = true;
    let mut detail = String::new();
    for (name, _) in scenarios::list() {
        let s = scenarios::build(name).unwrap();
        if !s.is_lagrangian_setup() {
            continue;
        }
        let c = s.einstein_constant.unwrap();
        let mm = s.moment.as_ref().unwrap();
        let mut worst = 0.0f64;
        for p in s.seeded_regular_points(32, SEED ^ 0xF8) {
            let (lhs, rhs) =
                kaehler::frozen_norm_law(&s.action, mm, &p, c, FlowParams::default().fd_step)
                    .unwrap();
            worst = worst.max((lhs - rhs).abs() / (rhs.abs() + 1e-9));
        }
        ok &= worst < 1e-3;
        detail.push_str(&format!("{name}: {worst:.1e}; "));
    }

    let s2 = scenarios::build("s2_rotation").unwrap();
    let p = latitude_start(&s2, 0.5);
    let (lhs, rhs) = kaehler::frozen_norm_law(
        &s2.action,
        s2.moment.as_ref().unwrap(),
        &p,
        1.0,
        FlowParams::default().fd_step,
    )
    .unwrap();
    let closed_ok = (lhs - 2.0 / 3.0).abs() < 1e-4 && (rhs - 2.0 / 3.0).abs() < 1e-4;
    ok &= closed_ok;
    detail.push_str(&format!("closed form at z=0.5: lhs {lhs:.6}, rhs {rhs:.6}"));
    criterion(8, "frozen-norm-law", ok, &detail);
}

/// 9. Minimal iff mu = 0, and the minimal Lagrangian orbit is isolated:
///    twenty seeded backward runs all land on the Clifford torus.
#[test]
fn criterion_09_minimal_iff_moment_zero_isolated() {
    let s = scenarios::build("cp2_torus").unwrap();
    let mm = s.moment.as_ref().unwrap();
    let mut ok = true;
    let mut terminals: Vec<[f64; 3]> = Vec::new();
    for p0 in s.seeded_regular_points(20, SEED ^ 0x91) {
        let found = kaehler::find_minimal_lagrangian(&s.action, mm, &p0, &bwd_params()).unwrap();
        ok &= found.h_norm < 1e-7 && found.mu_norm < 1e-6;
        let mut masses = [
            sphere_mass(&found.point, 0),
            sphere_mass(&found.point, 1),
            sphere_mass(&found.point, 2),
        ];
        masses.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for m in masses {
            ok &= (m - 1.0 / 3.0).abs() < 1e-4;
        }
        terminals.push(masses);
    }
    // isolation: one orbit up to tolerance across all runs
    let mut spread = 0.0f64;
    for t in &terminals {
        for (a, b) in t.iter().zip(&terminals[0]) {
            spread = spread.max((a - b).abs());
        }
    }
    ok &= spread < 1e-4;

    let mut min_mu = f64::INFINITY;
    let mut min_h = f64::INFINITY;
    for p in s.seeded_regular_points(32, SEED ^ 0x92) {
        let v = kaehler::minimal_iff_moment_zero(
            &s.action,
            mm,
            &p,
            1e-6,
            6.0,
            FlowParams::default().fd_step,
        )
        .unwrap();
        ok &= v.consistent() && !v.minimal_by_h;
        min_mu = min_mu.min(v.mu_norm);
        min_h = min_h.min(v.h_norm);
    }
    ok &= min_mu > 1e-3 && min_h > 1e-3;
    criterion(
        9,
        "minimal-iff-mu-zero",
        ok,
        &format!(
            "20 backward runs on one orbit (spread {spread:.1e}); 32 generic points have |mu| >= {min_mu:.2e}, |H| >= {min_h:.2e}"
        ),
    );
}

/// 10. Product continuation: the first factor collapses at t = ln 1.25; the
///     frozen-factor continuation then collapses after another t = ln 4.
#[test]
fn criterion_10_product_continuation() {
    let s = scenarios::build("s2xs2_torus").unwrap();
    let trace = run_flow(&s, &default_start(&s), &fwd_params());
    let last = trace.terminal_state();
    let t1 = last.t;
    let mut ok = trace.terminal == Terminal::Collapse && (t1 - 1.25f64.ln()).abs() < 1e-3;

    // only the first factor's generator vanishes
    ok &= trace.vanishing.len() == 1 && trace.vanishing[0][0].abs() > 0.999;
    // the second factor is still a healthy circle: Gram entry 1 - (0.2 e^t)^2
    let gram = s.action.gram(&last.p);
    let expected = 1.0 - (0.2 * 1.25f64).powi(2);
    ok &= gram[(1, 1)] > 0.0 && (gram[(1, 1)] - expected).abs() < 1e-3;

    // continuation on {pole} x S^2 from the surviving latitude
    let z2_term = last.p.coords[5];
    let frozen = scenarios::build("s2xs2_frozen_factor").unwrap();
    let p0 = frozen
        .initial_point(&HashMap::from([("z2".to_string(), z2_term)]))
        .unwrap();
    let cont = run_flow(&frozen, &p0, &fwd_params());
    let t2 = cont.terminal_state().t;
    ok &= cont.terminal == Terminal::Collapse && (t2 - 4f64.ln()).abs() < 1e-3;
    criterion(
        10,
        "product-continuation",
        ok,
        &format!(
            "first collapse t = {t1:.6} (ln 1.25 = {:.6}), second-factor gram {:.4}, continuation t = {t2:.6} (ln 4 = {:.6})",
            1.25f64.ln(),
            gram[(1, 1)],
            4f64.ln()
        ),
    );
}

/// 11. The squared volume extends continuously by zero through the singular
///     orbit and is smooth across the exceptional orbit of the quotient.
#[test]
fn criterion_11_volume_function() {
    // geodesic approach to the pole of the sphere
    let s2 = scenarios::build("s2_rotation").unwrap();
    let n = 200;
    let mut prev = f64::INFINITY;
    let mut ok = true;
    for i in 0..=n {
        let theta = 0.5 * std::f64::consts::PI * (1.0 - i as f64 / n as f64);
        let p = Point::retract(
            &s2.manifold,
            &DVector::from_column_slice(&[theta.sin(), 0.0, theta.cos()]),
        )
        .unwrap();
        let v2 = flow::vol_squared(&s2.action, &p);
        ok &= v2 < prev;
        prev = v2;
        if i == n {
            ok &= v2 == 0.0; // exactly zero at the pole
        }
    }

    // mesh across the equator of the quotient: bounded second differences
    // (vol^2 = sin^2 theta along a meridian, so d2/dtheta2 is 2 cos 2 theta)
    let rp2 = scenarios::build("rp2_rotation").unwrap();
    let m = 400;
    let h = std::f64::consts::PI / m as f64;
    let values: Vec<f64> = (0..=m)
        .map(|i| {
            let theta = std::f64::consts::PI / 4.0 + (i as f64 / m as f64) * std::f64::consts::PI / 2.0;
            let p = Point::retract(
                &rp2.manifold,
                &DVector::from_column_slice(&[theta.sin(), 0.0, theta.cos()]),
            )
            .unwrap();
            flow::vol_squared(&rp2.action, &p)
        })
        .collect();
    let step = h / 2.0;
    let mut max_dd = 0.0f64;
    for w in values.windows(3) {
        let dd = (w[2] - 2.0 * w[1] + w[0]) / (step * step);
        max_dd = max_dd.max(dd.abs());
    }
    ok &= max_dd < 2.05;
    criterion(
        11,
        "volume-function",
        ok,
        &format!(
            "vol2 decreases monotonically to exactly 0 at the pole; max |second difference| = {max_dd:.4} across the equator"
        ),
    );
}
