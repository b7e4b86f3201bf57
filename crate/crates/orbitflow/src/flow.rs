//! The reduced mean curvature flow of group orbits.
//!
//! The squared orbit volume is the Gram spectrum invariant of the fundamental
//! fields (the determinant for free actions), smooth across strata and zero
//! exactly on singular orbits. The mean curvature of the orbit through p is
//!
//! ```text
//! H = -1/2 * grad(vol^2) / vol^2
//! ```
//!
//! computed from central differences of vol^2 through the retraction and then
//! projected orbit-normal (the true H is orthogonal to every fundamental
//! field because vol is invariant; projecting removes finite-difference noise
//! along the orbit). Flows integrate `dp/dt = H` forward or backward with
//! collapse/convergence event detection.

use nalgebra::DVector;
use thiserror::Error;

use crate::actions::{Action, Stratum, RANK_TOL};
use crate::kaehler::MomentMap;
use crate::manifolds::Point;
use crate::numerics::{self, EventFn, StepControl, Terminal};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("singular orbit: volume vanishes at working precision")]
    SingularOrbit,
    #[error("flow did not converge (terminal state {0})")]
    NotConverged(Terminal),
    #[error("invalid flow parameters: {0}")]
    BadParams(String),
}

/// Flow direction for `dp/dt = +/- H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Direction {
    Forward,
    Backward,
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Direction::Forward => f.write_str("forward"),
            Direction::Backward => f.write_str("backward"),
        }
    }
}

/// Run parameters. Collapse triggers on a volume ratio relative to the start
/// (so scenarios of different scales share defaults) or on a mean-curvature
/// blow-up cap; convergence requires three consecutive sub-threshold samples
/// to avoid false positives in slow saddle-like regions.
#[derive(Debug, Clone)]
pub struct FlowParams {
    pub direction: Direction,
    pub t_max: f64,
    pub collapse_vol2_ratio: f64,
    pub collapse_h_norm: f64,
    pub converged_h_norm: f64,
    pub step: StepControl,
    pub fd_step: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            direction: Direction::Forward,
            t_max: 20.0,
            collapse_vol2_ratio: 1e-12,
            collapse_h_norm: 1e6,
            converged_h_norm: 1e-8,
            step: StepControl::default(),
            fd_step: numerics::DEFAULT_FD_STEP,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.t_max > 0.0) {
            return Err(FlowError::BadParams("t_max must be positive".into()));
        }
        if !(self.collapse_vol2_ratio > 0.0 && self.collapse_vol2_ratio < 1.0) {
            return Err(FlowError::BadParams(
                "collapse_vol2_ratio must lie in (0, 1)".into(),
            ));
        }
        if !(self.collapse_h_norm > 0.0 && self.converged_h_norm > 0.0 && self.fd_step > 0.0) {
            return Err(FlowError::BadParams("thresholds must be positive".into()));
        }
        self.step
            .validate()
            .map_err(|e| FlowError::BadParams(e.to_string()))
    }
}

/// Per-point diagnostic bundle recorded at every accepted step.
#[derive(Debug, Clone)]
pub struct OrbitState {
    pub t: f64,
    pub p: Point,
    pub vol2: f64,
    pub h: DVector<f64>,
    pub h_norm: f64,
    pub orbit_dim: usize,
    pub mu: Option<Vec<f64>>,
    pub isotropy_residual: Option<f64>,
}

/// Time-ordered samples with the terminal cause; on collapse, the
/// Lie-algebra directions whose fundamental fields vanished at the end.
#[derive(Debug, Clone)]
pub struct FlowTrace {
    pub samples: Vec<OrbitState>,
    pub terminal: Terminal,
    pub vanishing: Vec<DVector<f64>>,
}

impl FlowTrace {
    pub fn terminal_state(&self) -> &OrbitState {
        self.samples.last().expect("trace has at least one sample")
    }
}

/// Squared orbit volume: the r-th elementary symmetric function of the Gram
/// spectrum with r the principal orbit dimension. For actions that are free
/// on the regular stratum (r equals the generator count) this is exactly
/// det(gram); with continuous isotropy it is the determinant over a
/// complement of the isotropy algebra. Extends by zero through singular
/// orbits (smooth: it is a polynomial in the Gram entries).
pub fn vol_squared(action: &Action, p: &Point) -> f64 {
    let eig = numerics::sym_eigenvalues(&action.gram(p)).expect("gram is symmetric");
    let clamped: Vec<f64> = eig.iter().map(|v| v.max(0.0)).collect();
    numerics::elementary_symmetric(&clamped, action.max_orbit_dim)
}

/// Remove the components of `v` along the fundamental-field span at `p`.
/// Fields below roundoff scale are ignored.
fn project_orbit_normal(action: &Action, p: &Point, v: &DVector<f64>) -> DVector<f64> {
    let fields = action.fields(p);
    let scale = fields.iter().map(|f| f.norm()).fold(0.0f64, f64::max);
    if scale <= 0.0 {
        return v.clone();
    }
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for f in fields {
        let mut u = f;
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&u);
                u.axpy(-c, b, 1.0);
            }
        }
        if u.norm() > 1e-8 * scale {
            basis.push(u.normalize());
        }
    }
    let mut out = v.clone();
    for b in &basis {
        let c = b.dot(&out);
        out.axpy(-c, b, 1.0);
    }
    out
}

/// Finite-difference tangent gradient of a scalar field through the
/// retraction, projected onto the tangent space at `p`.
pub fn fd_tangent_gradient<F>(p: &Point, f: F, h: f64) -> DVector<f64>
where
    F: Fn(&Point) -> f64,
{
    let manifold = &p.manifold;
    let raw = numerics::fd_gradient(
        |coords| {
            let q = Point {
                coords: coords.clone(),
                manifold: std::sync::Arc::clone(manifold),
            };
            f(&q)
        },
        |coords| manifold.project(coords).expect("probe stays near the manifold"),
        &p.coords,
        h,
    );
    p.tangent_project(&raw)
}

fn mean_curvature_unchecked(action: &Action, p: &Point, fd_step: f64) -> Option<DVector<f64>> {
    let v2 = vol_squared(action, p);
    if v2 < 1e-300 {
        return None;
    }
    let grad = fd_tangent_gradient(p, |q| vol_squared(action, q), fd_step);
    let h = grad * (-0.5 / v2);
    Some(project_orbit_normal(action, p, &h))
}

/// Mean curvature of the orbit through a regular point.
pub fn mean_curvature(action: &Action, p: &Point, fd_step: f64) -> Result<DVector<f64>, FlowError> {
    if action.classify(p, RANK_TOL) != Stratum::Regular {
        return Err(FlowError::SingularOrbit);
    }
    mean_curvature_unchecked(action, p, fd_step).ok_or(FlowError::SingularOrbit)
}

fn build_state(
    action: &Action,
    moment: Option<&MomentMap>,
    t: f64,
    p: Point,
    fd_step: f64,
    field_override: Option<&dyn Fn(&Point) -> DVector<f64>>,
) -> OrbitState {
    let vol2 = vol_squared(action, &p);
    let h = match field_override {
        Some(f) => Some(f(&p)),
        None => mean_curvature_unchecked(action, &p, fd_step),
    };
    let (h, h_norm) = match h {
        Some(v) => {
            let n = v.norm();
            (v, n)
        }
        // volume at working-precision zero: report a saturated blow-up
        None => (DVector::zeros(p.coords.len()), f64::MAX),
    };
    let orbit_dim = action.orbit_dim(&p, RANK_TOL);
    let mu = moment.map(|mm| mm.evaluate(&p).coeffs);
    let isotropy_residual = if p.manifold.kaehler {
        Some(crate::kaehler::isotropy_residual(action, &p))
    } else {
        None
    };
    OrbitState {
        t,
        p,
        vol2,
        h,
        h_norm,
        orbit_dim,
        mu,
        isotropy_residual,
    }
}

/// Integrate the mean curvature flow from a regular point.
///
/// Moment values are recorded per sample when a moment map is supplied.
pub fn mcf(
    action: &Action,
    moment: Option<&MomentMap>,
    p0: &Point,
    params: &FlowParams,
) -> Result<FlowTrace, FlowError> {
    mcf_impl(action, moment, p0, params, None)
}

/// Same flow driven by an externally supplied (typically closed-form) mean
/// curvature field. Oracle hook for tests; production runs use the
/// finite-difference field.
pub fn mcf_with_field(
    action: &Action,
    moment: Option<&MomentMap>,
    p0: &Point,
    params: &FlowParams,
    field: &dyn Fn(&Point) -> DVector<f64>,
) -> Result<FlowTrace, FlowError> {
    mcf_impl(action, moment, p0, params, Some(field))
}

fn mcf_impl(
    action: &Action,
    moment: Option<&MomentMap>,
    p0: &Point,
    params: &FlowParams,
    field_override: Option<&dyn Fn(&Point) -> DVector<f64>>,
) -> Result<FlowTrace, FlowError> {
    params.validate()?;
    if action.classify(p0, RANK_TOL) != Stratum::Regular {
        return Err(FlowError::SingularOrbit);
    }
    let vol2_initial = vol_squared(action, p0);
    if vol2_initial <= 0.0 {
        return Err(FlowError::SingularOrbit);
    }

    let manifold = &p0.manifold;
    let fd_step = params.fd_step;

    let flow_field = |coords: &DVector<f64>| -> Option<DVector<f64>> {
        let projected = manifold.project(coords).ok()?;
        let p = Point {
            coords: projected,
            manifold: std::sync::Arc::clone(manifold),
        };
        match field_override {
            Some(f) => Some(f(&p)),
            None => mean_curvature_unchecked(action, &p, fd_step),
        }
    };
    let retract = |coords: &DVector<f64>| {
        manifold
            .project(coords)
            .expect("accepted states stay near the manifold")
    };

    let t_end = match params.direction {
        Direction::Forward => params.t_max,
        Direction::Backward => -params.t_max,
    };

    let mut samples: Vec<OrbitState> = Vec::new();
    let mut below_count = 0usize;
    let terminal = {
        let observer: EventFn = Box::new(|t, coords: &DVector<f64>| {
            let p = Point {
                coords: coords.clone(),
                manifold: std::sync::Arc::clone(manifold),
            };
            let state = build_state(action, moment, t, p, fd_step, field_override);
            let mut fire = None;
            if state.vol2 < params.collapse_vol2_ratio * vol2_initial
                || state.h_norm > params.collapse_h_norm
            {
                fire = Some(Terminal::Collapse);
            } else if state.h_norm < params.converged_h_norm {
                below_count += 1;
                if below_count >= 3 {
                    fire = Some(Terminal::Converged);
                }
            } else {
                below_count = 0;
            }
            samples.push(state);
            fire
        });
        let mut events = [observer];
        numerics::integrate(
            flow_field,
            retract,
            &p0.coords,
            (0.0, t_end),
            &params.step,
            &mut events,
        )
        .terminal
    };
    let vanishing = if terminal == Terminal::Collapse {
        let first = samples.first().expect("trace has an initial sample");
        let scale = numerics::sym_eigenvalues(&action.gram(&first.p))
            .expect("gram is symmetric")
            .last()
            .copied()
            .unwrap_or(0.0);
        let last = samples.last().expect("collapse after at least one sample");
        action.vanishing_directions_with_scale(&last.p, RANK_TOL, scale)
    } else {
        Vec::new()
    };
    Ok(FlowTrace {
        samples,
        terminal,
        vanishing,
    })
}

/// Report of the gradient-flow identity d/dt log vol = -|H|^2 along a trace.
#[derive(Debug, Clone)]
pub struct MonotonicityReport {
    pub max_rel_discrepancy: f64,
    pub checked: usize,
    pub skipped: usize,
}

/// Compare the numerical time derivative of (1/2) log vol^2 against -|H|^2 at
/// interior samples. Samples too close to collapse or to a minimal orbit are
/// skipped: there the time grid or the field cannot resolve the identity.
pub fn verify_monotonicity(trace: &FlowTrace) -> MonotonicityReport {
    let n = trace.samples.len();
    let mut report = MonotonicityReport {
        max_rel_discrepancy: 0.0,
        checked: 0,
        skipped: 0,
    };
    if n < 3 {
        return report;
    }
    let times: Vec<f64> = trace.samples.iter().map(|s| s.t).collect();
    let logs: Vec<f64> = trace.samples.iter().map(|s| 0.5 * s.vol2.ln()).collect();
    let vol2_max = trace.samples.iter().map(|s| s.vol2).fold(0.0f64, f64::max);
    for i in 1..n - 1 {
        let s = &trace.samples[i];
        if s.h_norm < 1e-4 || s.vol2 < 1e-4 * vol2_max {
            report.skipped += 1;
            continue;
        }
        let deriv = numerics::fd_derivative_at(&times, &logs, i);
        let expected = -s.h_norm * s.h_norm;
        let rel = (deriv - expected).abs() / expected.abs();
        report.max_rel_discrepancy = report.max_rel_discrepancy.max(rel);
        report.checked += 1;
    }
    report
}

/// Orbit dimension must be constant along the trace; the terminal sample of
/// a collapse is exempt.
pub fn check_type_preservation(trace: &FlowTrace) -> bool {
    let n = trace.samples.len();
    if n <= 1 {
        return true;
    }
    let d0 = trace.samples[0].orbit_dim;
    let interior_ok = trace.samples[1..n - 1].iter().all(|s| s.orbit_dim == d0);
    let last_ok = trace.samples[n - 1].orbit_dim == d0 || trace.terminal == Terminal::Collapse;
    interior_ok && last_ok
}
