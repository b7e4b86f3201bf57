//! Dense small-matrix helpers, finite-difference gradients, seeded Monte Carlo
//! averages, and a retraction-aware adaptive Runge-Kutta integrator with event
//! detection.
//!
//! Everything here is manifold-agnostic: geometry enters only through the
//! closures (retraction, scalar fields, vector fields) supplied by callers.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NonSymmetric(f64),
    #[error("matrix is not square")]
    NotSquare,
    #[error("invalid step control: {0}")]
    BadStepControl(String),
}

/// Symmetry tolerance for matrices tagged as Gram matrices.
pub const SYM_TOL: f64 = 1e-12;

/// Relative eigenvalue cutoff below which a PSD matrix counts as degenerate.
pub const DEGENERATE_EIG_RATIO: f64 = 1e-14;

/// Diagonal jitter (relative to trace) applied before log-det to absorb
/// roundoff-indefinite Gram matrices.
pub const LOGDET_JITTER: f64 = 1e-14;

// ---------------------------------------------------------------------------
// symmetric matrices
// ---------------------------------------------------------------------------

fn check_symmetric(m: &DMatrix<f64>) -> Result<(), NumError> {
    if !m.is_square() {
        return Err(NumError::NotSquare);
    }
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    let scale = m.amax().max(1.0);
    if worst > SYM_TOL * scale {
        return Err(NumError::NonSymmetric(worst));
    }
    Ok(())
}

/// Eigenvalues of a symmetric matrix, sorted ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>, NumError> {
    check_symmetric(m)?;
    let sym = (m + m.transpose()) * 0.5;
    let mut eig: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(eig)
}

/// Eigen-decomposition of a symmetric matrix; pairs sorted by ascending eigenvalue.
pub fn sym_eigen(m: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<DVector<f64>>), NumError> {
    check_symmetric(m)?;
    let sym = (m + m.transpose()) * 0.5;
    let se = sym.symmetric_eigen();
    let mut idx: Vec<usize> = (0..se.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
    let vals = idx.iter().map(|&i| se.eigenvalues[i]).collect();
    let vecs = idx
        .iter()
        .map(|&i| DVector::from_column_slice(se.eigenvectors.column(i).as_slice()))
        .collect();
    Ok((vals, vecs))
}

/// Elementary symmetric polynomial e_r of a slice of values.
///
/// For a PSD spectrum this is the sum of all r-by-r principal minors; with
/// r equal to the matrix size it is the determinant.
pub fn elementary_symmetric(values: &[f64], r: usize) -> f64 {
    if r == 0 {
        return 1.0;
    }
    if r > values.len() {
        return 0.0;
    }
    // coefficients of prod (1 + v_i x), built up by convolution
    let mut coeff = vec![0.0; r + 1];
    coeff[0] = 1.0;
    for &v in values {
        for k in (1..=r).rev() {
            coeff[k] += v * coeff[k - 1];
        }
    }
    coeff[r]
}

/// Result of a PSD log-determinant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogDet {
    Finite(f64),
    /// Smallest eigenvalue below `DEGENERATE_EIG_RATIO` of the largest:
    /// the matrix is numerically singular (singular-orbit proximity).
    Degenerate,
}

/// log det of a symmetric PSD matrix via eigen-factorization.
///
/// Degeneracy (singular-orbit proximity) is judged on the raw spectrum; the
/// diagonal jitter enters only the log so roundoff-indefinite inputs close
/// to the cutoff do not poison it.
pub fn logdet_psd(m: &DMatrix<f64>) -> Result<LogDet, NumError> {
    let eig = sym_eigenvalues(m)?;
    let largest = eig.last().copied().unwrap_or(0.0);
    if largest <= 0.0 || eig[0] < DEGENERATE_EIG_RATIO * largest {
        return Ok(LogDet::Degenerate);
    }
    let jitter = LOGDET_JITTER * m.trace().abs();
    Ok(LogDet::Finite(eig.iter().map(|v| (v + jitter).ln()).sum()))
}

// ---------------------------------------------------------------------------
// finite differences
// ---------------------------------------------------------------------------

/// Default step for central differences of manifold scalar fields.
///
/// Truncation error is O(h^2); 1e-5 keeps the error floor of gradient-based
/// mean curvature near critical points below 1e-8 while staying two orders
/// above the roundoff floor for O(1) field values.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Central-difference gradient of `f` composed with `chart` (typically a
/// retraction), evaluated along the ambient coordinate axes at `x`.
pub fn fd_gradient<F, C>(f: F, chart: C, x: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
    C: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x.len();
    let mut grad = DVector::zeros(n);
    let mut probe = x.clone();
    for i in 0..n {
        probe[i] = x[i] + h;
        let fp = f(&chart(&probe));
        probe[i] = x[i] - h;
        let fm = f(&chart(&probe));
        probe[i] = x[i];
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Finite-difference weights on arbitrary nodes (Fornberg's recursion).
///
/// Returns weights `w` such that `sum w_i f(nodes_i)` approximates the
/// `order`-th derivative of `f` at `x0`.
pub fn fd_weights(nodes: &[f64], x0: f64, order: usize) -> Vec<f64> {
    let n = nodes.len();
    assert!(order < n, "need more nodes than derivative order");
    let mut c = vec![vec![0.0; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|row| row[order]).collect()
}

/// Derivative of a sampled time series at interior index `i`, using a
/// centered 5-point stencil on the (non-uniform) time grid.
pub fn fd_derivative_at(times: &[f64], values: &[f64], i: usize) -> f64 {
    let n = times.len();
    assert!(n >= 3 && i < n);
    let lo = i.saturating_sub(2).min(n.saturating_sub(5));
    let hi = (lo + 5).min(n);
    let w = fd_weights(&times[lo..hi], times[i], 1);
    w.iter()
        .zip(&values[lo..hi])
        .map(|(wi, vi)| wi * vi)
        .sum()
}

// ---------------------------------------------------------------------------
// Monte Carlo quadrature
// ---------------------------------------------------------------------------

/// Deterministic seeded Monte Carlo mean of `f` under the sampler's measure.
pub fn quadrature_mean<X, F, S>(f: F, mut sample: S, n_samples: usize, seed: u64) -> f64
where
    F: Fn(&X) -> f64,
    S: FnMut(&mut ChaCha8Rng) -> X,
{
    assert!(n_samples >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    for _ in 0..n_samples {
        acc += f(&sample(&mut rng));
    }
    acc / n_samples as f64
}

// ---------------------------------------------------------------------------
// adaptive Runge-Kutta with retraction and events
// ---------------------------------------------------------------------------

/// Step-size control for the embedded pair.
///
/// `h_init` caps the first trial step; the integrator may start smaller
/// based on the initial field magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct StepControl {
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            h_init: 0.02,
            h_min: 1e-14,
            h_max: 0.02,
            rel_tol: 1e-8,
            abs_tol: 1e-9,
            max_steps: 100_000,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<(), NumError> {
        if !(self.h_min > 0.0 && self.h_min <= self.h_init && self.h_init <= self.h_max) {
            return Err(NumError::BadStepControl(format!(
                "need 0 < h_min <= h_init <= h_max, got {:.3e} / {:.3e} / {:.3e}",
                self.h_min, self.h_init, self.h_max
            )));
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(NumError::BadStepControl("tolerances must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(NumError::BadStepControl("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Why an integration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Terminal {
    Collapse,
    Converged,
    TimeLimit,
    StepUnderflow,
    MaxSteps,
}

impl std::fmt::Display for Terminal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Terminal::Collapse => "Collapse",
            Terminal::Converged => "Converged",
            Terminal::TimeLimit => "TimeLimit",
            Terminal::StepUnderflow => "StepUnderflow",
            Terminal::MaxSteps => "MaxSteps",
        };
        f.write_str(s)
    }
}

/// Below this step size the error allowance stops shrinking with h.
pub const STEP_ALLOWANCE_FLOOR: f64 = 1e-4;

/// Event predicate: inspects an accepted sample, may declare a terminal state.
pub type EventFn<'a> = Box<dyn FnMut(f64, &DVector<f64>) -> Option<Terminal> + 'a>;

/// Raw integration output: every accepted sample plus the terminal cause.
#[derive(Debug, Clone)]
pub struct RawTrace {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub terminal: Terminal,
}

// Dormand-Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate `dy/dt = field(y)` from `p0` over `t_span` with an embedded
/// 5(4) pair, PI step control, and re-retraction onto the manifold after
/// every accepted step. The field is evaluated through the retraction, so
/// stage points slightly off the manifold are handled by the field itself.
///
/// Events run in order on every accepted (retracted) sample, including the
/// initial one; the first event to fire ends the run. Step underflow and
/// step-budget exhaustion are recorded as terminal states, not errors.
pub fn integrate<F, R>(
    field: F,
    retract: R,
    p0: &DVector<f64>,
    t_span: (f64, f64),
    ctl: &StepControl,
    events: &mut [EventFn],
) -> RawTrace
where
    F: Fn(&DVector<f64>) -> Option<DVector<f64>>,
    R: Fn(&DVector<f64>) -> DVector<f64>,
{
    ctl.validate().expect("invalid step control");
    let (t0, t1) = t_span;
    let duration = (t1 - t0).abs();
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };

    let mut times = Vec::new();
    let mut states = Vec::new();

    let mut tau = 0.0f64; // elapsed |time|
    let mut y = retract(p0);

    times.push(t0);
    states.push(y.clone());
    for ev in events.iter_mut() {
        if let Some(term) = ev(t0, &y) {
            return RawTrace { times, states, terminal: term };
        }
    }
    if duration == 0.0 {
        return RawTrace { times, states, terminal: Terminal::TimeLimit };
    }

    let eval = |y: &DVector<f64>| field(y).map(|v| v * dir);

    let mut h = initial_step(&eval, &y, ctl).min(duration);
    let mut err_prev = 1e-4f64;
    let mut k: Vec<DVector<f64>> = vec![DVector::zeros(y.len()); 7];
    let safety = 0.9;
    // error-per-unit-step control: the estimate of the embedded difference
    // (order 5 in h) is held below scale * h, so h responds to the fourth
    // root of the tolerance and the advanced fifth-order solution gains a
    // full extra order of global accuracy under tolerance tightening
    let beta = 0.04;
    let alpha = 0.25 - 0.75 * beta;
    let mut growth_cap = 5.0;

    for _step in 0..ctl.max_steps {
        if tau >= duration {
            return RawTrace { times, states, terminal: Terminal::TimeLimit };
        }
        h = h.min(duration - tau).min(ctl.h_max);
        if h < ctl.h_min {
            return RawTrace { times, states, terminal: Terminal::StepUnderflow };
        }

        let mut stage_failed = false;
        match eval(&y) {
            Some(k0) => k[0] = k0,
            None => stage_failed = true,
        }
        if !stage_failed {
            'stages: for s in 1..7 {
                let mut ys = y.clone();
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = DP_A[s][j];
                    if a != 0.0 {
                        ys.axpy(h * a, kj, 1.0);
                    }
                }
                match eval(&ys) {
                    Some(ks) => k[s] = ks,
                    None => {
                        stage_failed = true;
                        break 'stages;
                    }
                }
            }
        }
        if stage_failed {
            h *= 0.5;
            growth_cap = 1.0;
            continue;
        }
        let _ = DP_C; // stage times unused: the field is autonomous

        let mut y5 = y.clone();
        let mut err_vec = DVector::zeros(y.len());
        for (j, kj) in k.iter().enumerate() {
            if DP_B5[j] != 0.0 {
                y5.axpy(h * DP_B5[j], kj, 1.0);
            }
            let d = DP_B5[j] - DP_B4[j];
            if d != 0.0 {
                err_vec.axpy(h * d, kj, 1.0);
            }
        }

        let mut err2 = 0.0;
        for i in 0..y.len() {
            let scale = ctl.abs_tol + ctl.rel_tol * y[i].abs().max(y5[i].abs());
            let e = err_vec[i] / scale;
            err2 += e * e;
        }
        // per-unit-step allowance, floored so vanishing steps near events
        // keep a usable (per-step) error budget instead of starving
        let allowance = h.max(STEP_ALLOWANCE_FLOOR);
        let err = ((err2 / y.len() as f64).sqrt() / allowance).max(1e-30);

        if err <= 1.0 {
            tau += h;
            y = retract(&y5);
            let t = t0 + dir * tau;
            times.push(t);
            states.push(y.clone());
            for ev in events.iter_mut() {
                if let Some(term) = ev(t, &y) {
                    return RawTrace { times, states, terminal: term };
                }
            }
            let fac = (safety * err.powf(-alpha) * err_prev.powf(beta)).clamp(0.2, growth_cap);
            h *= fac;
            err_prev = err.max(1e-4);
            growth_cap = 5.0;
        } else {
            let fac = (safety * err.powf(-alpha)).clamp(0.2, 1.0);
            h *= fac;
            growth_cap = 1.0;
        }
    }
    RawTrace { times, states, terminal: Terminal::MaxSteps }
}

/// Starting step from the magnitude of the initial state and field, refined
/// by one explicit Euler probe of the second derivative. Falls back to a
/// conservative fraction of `h_init` when the field is degenerate at the
/// start.
fn initial_step<F>(eval: &F, y0: &DVector<f64>, ctl: &StepControl) -> f64
where
    F: Fn(&DVector<f64>) -> Option<DVector<f64>>,
{
    let cap = ctl.h_init.min(ctl.h_max);
    let scaled_norm = |v: &DVector<f64>, reference: &DVector<f64>| -> f64 {
        let mut acc = 0.0;
        for i in 0..v.len() {
            let s = ctl.abs_tol + ctl.rel_tol * reference[i].abs();
            let e = v[i] / s;
            acc += e * e;
        }
        (acc / v.len() as f64).sqrt()
    };
    let f0 = match eval(y0) {
        Some(f) => f,
        None => return (cap * 1e-3).max(ctl.h_min),
    };
    let d0 = scaled_norm(y0, y0);
    let d1 = scaled_norm(&f0, y0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let probe = y0 + &f0 * h0;
    let d2 = match eval(&probe) {
        Some(f1) => scaled_norm(&(f1 - &f0), y0) / h0,
        None => return (cap * 1e-3).max(ctl.h_min),
    };
    let d_max = d1.max(d2);
    let h1 = if d_max <= 1e-15 {
        (h0 * 1e3).max(1e-6)
    } else {
        (0.01 / d_max).powf(0.25)
    };
    (100.0 * h0).min(h1).min(cap).max(ctl.h_min)
}

/// Matrix exponential by scaling-and-squaring on a truncated series.
/// Adequate for the small skew-symmetric generators used in tests and
/// examples (isometry flows `exp(tA)`).
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square());
    let n = a.nrows();
    let norm = a.amax();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a / 2f64.powi(squarings as i32);
    let mut result = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=16 {
        term = (&term * &scaled) / k as f64;
        result += &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}
