//! Moment maps with canonical (mean-zero) normalization, isotropy and
//! Lagrangian predicates, and verification of the Kaehler-Einstein laws
//! linking the flow to the moment map: the defining moment condition
//! `d mu_X = omega(X~, .)`, the exponential law `H . grad mu_X = c mu_X`,
//! the frozen-frame norm law `d|mu|^2[p](H) = 2 c |mu(p)|^2`, and the
//! equivalence "minimal iff mu = 0".
//!
//! Moment components are scenario-supplied analytic scalar fields,
//! canonicalized by subtracting their means over the manifold; the overall
//! sign is fixed empirically per scenario against the moment condition
//! (the ambient orientation convention is not canonical).

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::actions::{Action, Stratum, RANK_TOL};
use crate::flow::{self, FlowError, FlowParams, FlowTrace};
use crate::manifolds::Point;
use crate::numerics;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KaehlerError {
    #[error("scenario is not Kaehler")]
    NotKaehler,
    #[error("every moment component starts below threshold: flow starts at the minimal orbit")]
    AllComponentsZero,
    #[error("Gram matrix is degenerate at working precision")]
    DegenerateGram,
    #[error("Lagrangian predicates disagree (annihilator {annihilator:.3e}, isotropy {isotropy:.3e})")]
    InconsistentChecks { annihilator: f64, isotropy: f64 },
    #[error("flow failed: {0}")]
    Flow(#[from] FlowError),
}

/// Scalar component of a moment map, as an analytic field on the manifold.
pub type ScalarField = Box<dyn Fn(&Point) -> f64 + Send + Sync>;

/// Coordinates of mu(p) against the chosen generators, with the canonical
/// mean-zero offsets applied.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentValue {
    pub coeffs: Vec<f64>,
    pub canonical: bool,
}

/// A moment map: raw analytic components, subtracted means, and the
/// empirically fixed sign.
pub struct MomentMap {
    components: Vec<ScalarField>,
    offsets: Vec<f64>,
    sign: f64,
}

impl std::fmt::Debug for MomentMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MomentMap")
            .field("k", &self.components.len())
            .field("offsets", &self.offsets)
            .field("sign", &self.sign)
            .finish()
    }
}

impl MomentMap {
    /// Build with an explicit sign (+1/-1).
    pub fn new(components: Vec<ScalarField>, offsets: Vec<f64>, sign: f64) -> MomentMap {
        assert_eq!(components.len(), offsets.len());
        assert!(sign == 1.0 || sign == -1.0);
        MomentMap {
            components,
            offsets,
            sign,
        }
    }

    /// Build and resolve the sign empirically: evaluate the moment-condition
    /// residual with both signs at a probe point and keep the smaller.
    pub fn with_empirical_sign(
        components: Vec<ScalarField>,
        offsets: Vec<f64>,
        action: &Action,
        probe: &Point,
        h: f64,
    ) -> MomentMap {
        let mut mm = MomentMap::new(components, offsets, 1.0);
        let plus = verify_moment_condition(action, &mm, probe, h);
        mm.sign = -1.0;
        let minus = verify_moment_condition(action, &mm, probe, h);
        mm.sign = if plus <= minus { 1.0 } else { -1.0 };
        mm
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn sign(&self) -> f64 {
        self.sign
    }

    /// Canonical moment value at `p`.
    pub fn evaluate(&self, p: &Point) -> MomentValue {
        let coeffs = self
            .components
            .iter()
            .zip(&self.offsets)
            .map(|(f, off)| self.sign * (f(p) - off))
            .collect();
        MomentValue {
            coeffs,
            canonical: true,
        }
    }

    fn component(&self, i: usize, p: &Point) -> f64 {
        self.sign * ((self.components[i])(p) - self.offsets[i])
    }
}

/// Orthonormal basis of the tangent space at `p` from projected ambient axes.
fn tangent_basis(p: &Point) -> Vec<DVector<f64>> {
    let dim = p.manifold.intrinsic_dim;
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for i in 0..p.manifold.ambient_dim {
        if basis.len() == dim {
            break;
        }
        let mut e = DVector::zeros(p.manifold.ambient_dim);
        e[i] = 1.0;
        let mut u = p.tangent_project(&e);
        for b in &basis {
            let c = b.dot(&u);
            u.axpy(-c, b, 1.0);
        }
        if u.norm() > 1e-8 {
            basis.push(u.normalize());
        }
    }
    basis
}

/// Central directional derivative of a scalar field along a unit direction.
fn directional_derivative<F>(p: &Point, f: F, dir: &DVector<f64>, h: f64) -> f64
where
    F: Fn(&Point) -> f64,
{
    let m = &p.manifold;
    let plus = Point {
        coords: m.project(&(&p.coords + dir * h)).expect("probe near manifold"),
        manifold: std::sync::Arc::clone(m),
    };
    let minus = Point {
        coords: m.project(&(&p.coords - dir * h)).expect("probe near manifold"),
        manifold: std::sync::Arc::clone(m),
    };
    (f(&plus) - f(&minus)) / (2.0 * h)
}

/// Max residual of the moment condition `d mu_X(v) = omega(X~, v)` over all
/// generators and an orthonormal tangent basis at `p`.
pub fn verify_moment_condition(action: &Action, mm: &MomentMap, p: &Point, h: f64) -> f64 {
    let basis = tangent_basis(p);
    let mut worst = 0.0f64;
    for i in 0..action.k() {
        let field = action.fundamental_field(i, p);
        for v in &basis {
            let d_mu = directional_derivative(p, |q| mm.component(i, q), v, h);
            let om = p.omega(&field, v).expect("Kaehler scenario");
            worst = worst.max((d_mu - om).abs());
        }
    }
    worst
}

/// Max |omega(X~_i, X~_j)| over generator pairs; zero for a single generator.
pub fn isotropy_residual(action: &Action, p: &Point) -> f64 {
    let fields = action.fields(p);
    let mut worst = 0.0f64;
    for i in 0..fields.len() {
        for j in (i + 1)..fields.len() {
            let om = p
                .omega(&fields[i], &fields[j])
                .expect("Kaehler scenario");
            worst = worst.max(om.abs());
        }
    }
    worst
}

/// Whether the orbit through `p` is isotropic, with the raw residual.
/// The comparison scale is the largest Gram eigenvalue.
pub fn is_isotropic_orbit(action: &Action, p: &Point, tol: f64) -> (bool, f64) {
    if action.k() == 1 {
        return (true, 0.0);
    }
    let residual = isotropy_residual(action, p);
    let eig = numerics::sym_eigenvalues(&action.gram(p)).expect("gram is symmetric");
    let scale = eig.last().copied().unwrap_or(0.0).max(1e-300);
    (residual < tol * scale, residual)
}

/// Lagrangian membership at a regular point: the orbit must have half the
/// manifold dimension, the moment value must annihilate the derived
/// subalgebra, and the direct isotropy check must agree.
pub fn is_lagrangian_point(
    action: &Action,
    mm: &MomentMap,
    p: &Point,
    tol: f64,
) -> Result<bool, KaehlerError> {
    let n = p.manifold.intrinsic_dim / 2;
    if action.classify(p, RANK_TOL) != Stratum::Regular || action.orbit_dim(p, RANK_TOL) != n {
        return Ok(false);
    }
    let mu = mm.evaluate(p);
    let m = DVector::from_column_slice(&mu.coeffs);
    let derived = action
        .derived_subalgebra()
        .map_err(|_| KaehlerError::DegenerateGram)?;
    let annihilator_residual = derived
        .iter()
        .map(|d| m.dot(d).abs())
        .fold(0.0f64, f64::max);
    let by_annihilator = annihilator_residual < tol;
    let (by_isotropy, iso_residual) = is_isotropic_orbit(action, p, 1e-8);
    if by_annihilator != by_isotropy {
        return Err(KaehlerError::InconsistentChecks {
            annihilator: annihilator_residual,
            isotropy: iso_residual,
        });
    }
    Ok(by_annihilator)
}

/// Solve G a = m for the Gram-inverse pairing; errors when G is numerically
/// singular.
fn gram_solve(g: &DMatrix<f64>, m: &DVector<f64>) -> Result<DVector<f64>, KaehlerError> {
    let eig = numerics::sym_eigenvalues(g).expect("gram is symmetric");
    let largest = eig.last().copied().unwrap_or(0.0);
    if largest <= 0.0 || eig[0] < 1e-12 * largest {
        return Err(KaehlerError::DegenerateGram);
    }
    g.clone()
        .cholesky()
        .map(|ch| ch.solve(m))
        .ok_or(KaehlerError::DegenerateGram)
}

/// |mu(p)| in the dual norm induced by the orbit metric: sqrt(m^T G^-1 m).
pub fn moment_norm(action: &Action, mm: &MomentMap, p: &Point) -> Result<f64, KaehlerError> {
    let m = DVector::from_column_slice(&mm.evaluate(p).coeffs);
    let a = gram_solve(&action.gram(p), &m)?;
    Ok(m.dot(&a).max(0.0).sqrt())
}

/// Least-squares fit of the exponential moment law along a trace.
///
/// For each component with |mu_X| above threshold at the start, fits
/// log|mu_X(t)| against t; the law predicts slope c for every component.
/// Returns the mean fitted slope and the max pointwise relative residual of
/// the finite-difference time derivative against c * mu_X (checked where
/// |mu_X| > 1e-4).
pub fn verify_flow_moment_law(
    mm: &MomentMap,
    trace: &FlowTrace,
    c: f64,
) -> Result<(f64, f64), KaehlerError> {
    let n = trace.samples.len();
    assert!(n >= 3, "need at least three samples to fit a rate");
    let times: Vec<f64> = trace.samples.iter().map(|s| s.t).collect();
    let mu_series: Vec<Vec<f64>> = trace
        .samples
        .iter()
        .map(|s| match &s.mu {
            Some(m) => m.clone(),
            None => mm.evaluate(&s.p).coeffs,
        })
        .collect();

    let mut slopes = Vec::new();
    let mut max_residual = 0.0f64;
    for comp in 0..mm.k() {
        if mu_series[0][comp].abs() <= 1e-6 {
            continue;
        }
        // the law keeps the sign of each component fixed; fit on log |mu|
        let logs: Vec<f64> = mu_series.iter().map(|m| m[comp].abs().ln()).collect();
        slopes.push(least_squares_slope(&times, &logs));

        let series: Vec<f64> = mu_series.iter().map(|m| m[comp]).collect();
        for i in 1..n - 1 {
            if series[i].abs() <= 1e-4 {
                continue;
            }
            let deriv = numerics::fd_derivative_at(&times, &series, i);
            let expected = c * series[i];
            max_residual = max_residual.max((deriv - expected).abs() / expected.abs());
        }
    }
    if slopes.is_empty() {
        return Err(KaehlerError::AllComponentsZero);
    }
    let rate = slopes.iter().sum::<f64>() / slopes.len() as f64;
    Ok((rate, max_residual))
}

fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        num += (xi - mx) * (yi - my);
        den += (xi - mx) * (xi - mx);
    }
    num / den
}

/// Both sides of the norm law with the generator frame frozen at `p`:
/// lhs = 2 m^T G^-1 (d mu / dt along H), rhs = 2 c m^T G^-1 m.
pub fn frozen_norm_law(
    action: &Action,
    mm: &MomentMap,
    p: &Point,
    c: f64,
    fd_step: f64,
) -> Result<(f64, f64), KaehlerError> {
    let g = action.gram(p);
    let m = DVector::from_column_slice(&mm.evaluate(p).coeffs);
    let a = gram_solve(&g, &m)?;
    let rhs = 2.0 * c * m.dot(&a);

    let h_vec = flow::mean_curvature(action, p, fd_step)?;
    let h_norm = h_vec.norm();
    if h_norm < 1e-12 {
        return Ok((0.0, rhs));
    }
    let dir = &h_vec / h_norm;
    let mut dm = DVector::zeros(mm.k());
    for i in 0..mm.k() {
        dm[i] = directional_derivative(p, |q| mm.component(i, q), &dir, fd_step) * h_norm;
    }
    let lhs = 2.0 * a.dot(&dm);
    Ok((lhs, rhs))
}

/// Backward-flow search for the minimal Lagrangian orbit through `p0`.
#[derive(Debug, Clone)]
pub struct MinimalOrbit {
    pub point: Point,
    pub h_norm: f64,
    pub mu_norm: f64,
    pub trace: FlowTrace,
}

/// Run the flow backward until convergence and report the terminal point
/// with its moment norm. Any terminal state other than convergence is an
/// error.
pub fn find_minimal_lagrangian(
    action: &Action,
    mm: &MomentMap,
    p0: &Point,
    params: &FlowParams,
) -> Result<MinimalOrbit, KaehlerError> {
    let mut params = params.clone();
    params.direction = flow::Direction::Backward;
    let trace = flow::mcf(action, Some(mm), p0, &params)?;
    if trace.terminal != numerics::Terminal::Converged {
        return Err(KaehlerError::Flow(FlowError::NotConverged(trace.terminal)));
    }
    let terminal = trace.terminal_state().clone();
    debug_assert!(terminal.h_norm < params.converged_h_norm);
    let mu_norm = moment_norm(action, mm, &terminal.p)?;
    Ok(MinimalOrbit {
        point: terminal.p,
        h_norm: terminal.h_norm,
        mu_norm,
        trace,
    })
}

/// Two-sided check of "minimal iff mu = 0" at a point.
#[derive(Debug, Clone, Copy)]
pub struct MinimalityVerdict {
    pub h_norm: f64,
    pub mu_norm: f64,
    pub minimal_by_h: bool,
    pub minimal_by_mu: bool,
}

impl MinimalityVerdict {
    pub fn consistent(&self) -> bool {
        self.minimal_by_h == self.minimal_by_mu
    }
}

/// Compare minimality read off |H| against minimality read off |mu|, with
/// the mu threshold scaled by sqrt(c) (the law ties d|mu|^2 to 2c|mu|^2).
pub fn minimal_iff_moment_zero(
    action: &Action,
    mm: &MomentMap,
    p: &Point,
    tol: f64,
    c: f64,
    fd_step: f64,
) -> Result<MinimalityVerdict, KaehlerError> {
    let h_norm = flow::mean_curvature(action, p, fd_step)?.norm();
    let mu_norm = moment_norm(action, mm, p)?;
    Ok(MinimalityVerdict {
        h_norm,
        mu_norm,
        minimal_by_h: h_norm < tol,
        minimal_by_mu: mu_norm < tol * c.sqrt(),
    })
}
