//! Built-in scenario registry.
//!
//! A scenario bundles a manifold, an action, an optional canonical moment
//! map with the Einstein constant, a parameterized family of initial points,
//! and (for oracle checks) the closed-form mean curvature field.
//!
//! Built-ins:
//! - `s2_rotation`: circle action on the unit 2-sphere by rotations about z.
//! - `rp2_rotation`: the same circle action on the antipodal quotient, run on
//!   its sphere representative (the equator orbit is double-covered nearby;
//!   recorded as metadata).
//! - `s2xs2_torus`: factor-wise torus action on a product of two 2-spheres.
//! - `s2xs2_frozen_factor`: continuation of `s2xs2_torus` after the first
//!   factor has collapsed onto its pole; only the second circle acts.
//! - `cp1_torus`: circle action on the complex projective line.
//! - `cp2_torus`: standard 2-torus action on the complex projective plane;
//!   the minimal Lagrangian orbit is the Clifford torus.
//! - `so3_on_s2`: full rotation group acting transitively on the 2-sphere
//!   (non-Lagrangian contrast case; vol is constant and H vanishes).

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::actions::{
    embed_block, rotation_z, so3_generators, torus_generator, Action, Generator, Stratum,
    RANK_TOL,
};
use crate::flow;
use crate::kaehler::{MomentMap, ScalarField};
use crate::manifolds::{Manifold, Point};
use crate::numerics;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("unknown scenario '{0}'")]
    Unknown(String),
    #[error("bad initial-point parameter: {0}")]
    BadParam(String),
}

/// Parameterized family of initial points.
pub struct InitialFamily {
    /// Parameter names with their defaults, in declaration order.
    pub params: Vec<(&'static str, f64)>,
    build: Box<dyn Fn(&Arc<Manifold>, &[f64]) -> Result<Point, ScenarioError> + Send + Sync>,
}

impl InitialFamily {
    /// Resolve overrides against the declared parameters and build the point.
    pub fn point(
        &self,
        manifold: &Arc<Manifold>,
        overrides: &HashMap<String, f64>,
    ) -> Result<Point, ScenarioError> {
        for key in overrides.keys() {
            if !self.params.iter().any(|(name, _)| name == key) {
                return Err(ScenarioError::BadParam(format!(
                    "unknown parameter '{key}' (expected one of {:?})",
                    self.params.iter().map(|(n, _)| *n).collect::<Vec<_>>()
                )));
            }
        }
        let values: Vec<f64> = self
            .params
            .iter()
            .map(|(name, default)| overrides.get(*name).copied().unwrap_or(*default))
            .collect();
        (self.build)(manifold, &values)
    }
}

type AnalyticField = Box<dyn Fn(&Point) -> DVector<f64> + Send + Sync>;

pub struct Scenario {
    pub name: &'static str,
    pub description: &'static str,
    pub manifold: Arc<Manifold>,
    pub action: Action,
    pub moment: Option<MomentMap>,
    pub einstein_constant: Option<f64>,
    pub initial: InitialFamily,
    pub metadata: Vec<(&'static str, String)>,
    /// Largest vol^2 seen over seeded samples; reference scale for
    /// regular-point rejection sampling.
    pub vol2_scale: f64,
    analytic_h: Option<AnalyticField>,
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario").field("name", &self.name).finish()
    }
}

impl Scenario {
    /// Initial point from the scenario's family with per-parameter overrides.
    pub fn initial_point(&self, overrides: &HashMap<String, f64>) -> Result<Point, ScenarioError> {
        self.initial.point(&self.manifold, overrides)
    }

    /// Closed-form mean curvature field, where the scenario has one.
    /// Oracle for the finite-difference path; flows use it only when asked.
    pub fn analytic_mean_curvature(&self, p: &Point) -> Option<DVector<f64>> {
        self.analytic_h.as_ref().map(|f| f(p))
    }

    pub fn has_analytic_field(&self) -> bool {
        self.analytic_h.is_some()
    }

    /// Kaehler scenario whose regular orbits are half-dimensional: the
    /// setting in which the Lagrangian laws apply.
    pub fn is_lagrangian_setup(&self) -> bool {
        self.moment.is_some() && self.action.max_orbit_dim * 2 == self.manifold.intrinsic_dim
    }

    /// Seeded uniform regular points, rejecting samples whose orbit volume
    /// is below 5% of the scenario scale (where finite differences of the
    /// field degrade).
    pub fn seeded_regular_points(&self, count: usize, seed: u64) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let p = Point::random(&self.manifold, &mut rng);
            if self.action.classify(&p, RANK_TOL) == Stratum::Regular
                && flow::vol_squared(&self.action, &p) >= 0.05 * self.vol2_scale
            {
                out.push(p);
            }
        }
        out
    }
}

/// Names and one-line descriptions of every built-in, in registry order.
pub fn list() -> Vec<(&'static str, &'static str)> {
    REGISTRY.iter().map(|(n, d, _)| (*n, *d)).collect()
}

/// Build a scenario by name.
pub fn build(name: &str) -> Result<Scenario, ScenarioError> {
    for (n, _, builder) in REGISTRY {
        if *n == name {
            return Ok(builder());
        }
    }
    Err(ScenarioError::Unknown(name.to_string()))
}

type BuilderFn = fn() -> Scenario;

static REGISTRY: &[(&str, &str, BuilderFn)] = &[
    (
        "s2_rotation",
        "circle action on the unit 2-sphere by rotations about the z-axis",
        build_s2_rotation,
    ),
    (
        "rp2_rotation",
        "the rotation action on RP^2, run on its sphere representative",
        build_rp2_rotation,
    ),
    (
        "s2xs2_torus",
        "factor-wise torus action on a product of two unit 2-spheres",
        build_s2xs2_torus,
    ),
    (
        "s2xs2_frozen_factor",
        "product continuation with the first factor frozen at its pole",
        build_s2xs2_frozen,
    ),
    (
        "cp1_torus",
        "circle action on the complex projective line",
        build_cp1_torus,
    ),
    (
        "cp2_torus",
        "standard 2-torus action on the complex projective plane",
        build_cp2_torus,
    ),
    (
        "so3_on_s2",
        "full rotation group acting transitively on the 2-sphere (non-Lagrangian contrast)",
        build_so3_on_s2,
    ),
];

/// Internal seed for construction-time sampling (scale estimation, sign
/// fixing, invariant spot checks). Independent of user seeds.
const BUILD_SEED: u64 = 0x0F10;

fn vol2_scale(action: &Action) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(BUILD_SEED);
    let mut scale = 0.0f64;
    for _ in 0..64 {
        let p = Point::random(&action.manifold, &mut rng);
        scale = scale.max(flow::vol_squared(action, &p));
    }
    scale
}

/// Construction-time invariants of a canonical moment map: mean-zero
/// components under seeded quadrature and a small moment-condition residual
/// at seeded regular points.
fn validate_moment(scenario_name: &str, action: &Action, mm: &MomentMap, scale: f64) {
    let manifold = Arc::clone(&action.manifold);
    for i in 0..mm.k() {
        let mean = numerics::quadrature_mean(
            |p: &Point| mm.evaluate(p).coeffs[i],
            |rng| Point::random(&manifold, rng),
            32_768,
            BUILD_SEED ^ 0xA5A5,
        );
        assert!(
            mean.abs() < 0.01,
            "{scenario_name}: moment component {i} is not mean-zero (mean {mean:.3e})"
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(BUILD_SEED ^ 0x3C3C);
    let mut checked = 0;
    while checked < 32 {
        let p = Point::random(&action.manifold, &mut rng);
        if action.classify(&p, RANK_TOL) != Stratum::Regular
            || flow::vol_squared(action, &p) < 0.05 * scale
        {
            continue;
        }
        let residual = crate::kaehler::verify_moment_condition(action, mm, &p, 1e-5);
        assert!(
            residual < 1e-6,
            "{scenario_name}: moment condition residual {residual:.3e} at a seeded point"
        );
        checked += 1;
    }
}

fn probe_point(action: &Action, scale: f64) -> Point {
    let mut rng = ChaCha8Rng::seed_from_u64(BUILD_SEED ^ 0x77);
    loop {
        let p = Point::random(&action.manifold, &mut rng);
        if action.classify(&p, RANK_TOL) == Stratum::Regular
            && flow::vol_squared(action, &p) >= 0.2 * scale
        {
            return p;
        }
    }
}

// ---------------------------------------------------------------------------
// closed-form mean curvature helpers
// ---------------------------------------------------------------------------

/// Rotation-orbit mean curvature on a unit 2-sphere factor written into
/// `out[off..off+3]`; the factor collapses toward the nearest pole.
fn sphere_factor_h(coords: &DVector<f64>, off: usize, out: &mut DVector<f64>) {
    let (x, y, z) = (coords[off], coords[off + 1], coords[off + 2]);
    let w = 1.0 - z * z;
    out[off] = -z * z * x / w;
    out[off + 1] = -z * z * y / w;
    out[off + 2] = z;
}

/// Horizontal gradient of |z_k|^2 on the unit-sphere representative of CP^n:
/// 2 (P_k z - |z_k|^2 z).
fn grad_mass(coords: &DVector<f64>, k: usize) -> DVector<f64> {
    let b = coords[2 * k].powi(2) + coords[2 * k + 1].powi(2);
    let mut g = coords * (-2.0 * b);
    g[2 * k] += 2.0 * coords[2 * k];
    g[2 * k + 1] += 2.0 * coords[2 * k + 1];
    g
}

fn mass(coords: &DVector<f64>, k: usize) -> f64 {
    coords[2 * k].powi(2) + coords[2 * k + 1].powi(2)
}

// ---------------------------------------------------------------------------
// builders
// ---------------------------------------------------------------------------

fn latitude_family(names: &'static [(&'static str, f64)]) -> InitialFamily {
    InitialFamily {
        params: names.to_vec(),
        build: Box::new(|manifold, values| {
            let mut coords = Vec::new();
            for z in values {
                if z.abs() > 1.0 {
                    return Err(ScenarioError::BadParam(format!(
                        "latitude {z} outside [-1, 1]"
                    )));
                }
                coords.extend_from_slice(&[(1.0 - z * z).sqrt(), 0.0, *z]);
            }
            Point::retract(manifold, &DVector::from_vec(coords))
                .map_err(|e| ScenarioError::BadParam(e.to_string()))
        }),
    }
}

fn build_s2_rotation() -> Scenario {
    let manifold = Manifold::kaehler_sphere2();
    let action = Action::new(Arc::clone(&manifold), vec![Generator::new(rotation_z(), "Lz")])
        .expect("valid generators");
    let scale = vol2_scale(&action);
    let mm = MomentMap::with_empirical_sign(
        vec![Box::new(|p: &Point| p.coords[2]) as ScalarField],
        vec![0.0],
        &action,
        &probe_point(&action, scale),
        1e-5,
    );
    validate_moment("s2_rotation", &action, &mm, scale);
    Scenario {
        name: "s2_rotation",
        description: "circle action on the unit 2-sphere by rotations about the z-axis",
        manifold: Arc::clone(&manifold),
        action,
        moment: Some(mm),
        einstein_constant: Some(1.0),
        initial: latitude_family(&[("z0", 0.5)]),
        metadata: vec![],
        vol2_scale: scale,
        analytic_h: Some(Box::new(|p: &Point| {
            let mut out = DVector::zeros(3);
            sphere_factor_h(&p.coords, 0, &mut out);
            out
        })),
    }
}

fn build_rp2_rotation() -> Scenario {
    let manifold = Manifold::real_projective(2);
    let action = Action::new(Arc::clone(&manifold), vec![Generator::new(rotation_z(), "Lz")])
        .expect("valid generators");
    let scale = vol2_scale(&action);
    Scenario {
        name: "rp2_rotation",
        description: "the rotation action on RP^2, run on its sphere representative",
        manifold: Arc::clone(&manifold),
        action,
        moment: None,
        einstein_constant: None,
        initial: latitude_family(&[("z0", 0.5)]),
        metadata: vec![
            ("covering_multiplicity", "2".to_string()),
            (
                "note",
                "the equator orbit is exceptional: nearby principal orbits double-cover it; \
                 all local quantities agree with the sphere values at the representative"
                    .to_string(),
            ),
        ],
        vol2_scale: scale,
        analytic_h: Some(Box::new(|p: &Point| {
            let mut out = DVector::zeros(3);
            sphere_factor_h(&p.coords, 0, &mut out);
            out
        })),
    }
}

fn build_s2xs2_torus() -> Scenario {
    let manifold = Manifold::product(vec![Manifold::kaehler_sphere2(), Manifold::kaehler_sphere2()]);
    let action = Action::new(
        Arc::clone(&manifold),
        vec![
            Generator::new(embed_block(&rotation_z(), 6, 0), "Lz1"),
            Generator::new(embed_block(&rotation_z(), 6, 3), "Lz2"),
        ],
    )
    .expect("valid generators");
    let scale = vol2_scale(&action);
    let mm = MomentMap::with_empirical_sign(
        vec![
            Box::new(|p: &Point| p.coords[2]) as ScalarField,
            Box::new(|p: &Point| p.coords[5]) as ScalarField,
        ],
        vec![0.0, 0.0],
        &action,
        &probe_point(&action, scale),
        1e-5,
    );
    validate_moment("s2xs2_torus", &action, &mm, scale);
    Scenario {
        name: "s2xs2_torus",
        description: "factor-wise torus action on a product of two unit 2-spheres",
        manifold: Arc::clone(&manifold),
        action,
        moment: Some(mm),
        einstein_constant: Some(1.0),
        initial: latitude_family(&[("z1", 0.8), ("z2", 0.2)]),
        metadata: vec![],
        vol2_scale: scale,
        analytic_h: Some(Box::new(|p: &Point| {
            let mut out = DVector::zeros(6);
            sphere_factor_h(&p.coords, 0, &mut out);
            sphere_factor_h(&p.coords, 3, &mut out);
            out
        })),
    }
}

fn build_s2xs2_frozen() -> Scenario {
    let manifold = Manifold::product(vec![Manifold::kaehler_sphere2(), Manifold::kaehler_sphere2()]);
    let action = Action::new(
        Arc::clone(&manifold),
        vec![Generator::new(embed_block(&rotation_z(), 6, 3), "Lz2")],
    )
    .expect("valid generators");
    let scale = vol2_scale(&action);
    let mm = MomentMap::with_empirical_sign(
        vec![Box::new(|p: &Point| p.coords[5]) as ScalarField],
        vec![0.0],
        &action,
        &probe_point(&action, scale),
        1e-5,
    );
    validate_moment("s2xs2_frozen_factor", &action, &mm, scale);
    Scenario {
        name: "s2xs2_frozen_factor",
        description: "product continuation with the first factor frozen at its pole",
        manifold: Arc::clone(&manifold),
        action,
        moment: Some(mm),
        einstein_constant: Some(1.0),
        initial: InitialFamily {
            params: vec![("z2", 0.25)],
            build: Box::new(|manifold, values| {
                let z2 = values[0];
                if z2.abs() > 1.0 {
                    return Err(ScenarioError::BadParam(format!(
                        "latitude {z2} outside [-1, 1]"
                    )));
                }
                let coords = DVector::from_vec(vec![
                    0.0,
                    0.0,
                    1.0,
                    (1.0 - z2 * z2).sqrt(),
                    0.0,
                    z2,
                ]);
                Point::retract(manifold, &coords)
                    .map_err(|e| ScenarioError::BadParam(e.to_string()))
            }),
        },
        metadata: vec![(
            "note",
            "continuation of s2xs2_torus after its first factor collapses onto the pole; \
             the remaining circle flows on {pole} x S^2"
                .to_string(),
        )],
        vol2_scale: scale,
        analytic_h: Some(Box::new(|p: &Point| {
            // vol^2 depends only on the second factor, so H has no
            // first-factor component
            let mut out = DVector::zeros(6);
            sphere_factor_h(&p.coords, 3, &mut out);
            out
        })),
    }
}

fn build_cp1_torus() -> Scenario {
    let manifold = Manifold::complex_projective(1);
    let action = Action::new(
        Arc::clone(&manifold),
        vec![Generator::new(torus_generator(1, 1), "i*E1")],
    )
    .expect("valid generators");
    let scale = vol2_scale(&action);
    let mm = MomentMap::with_empirical_sign(
        vec![Box::new(|p: &Point| -0.5 * mass(&p.coords, 1)) as ScalarField],
        vec![-0.25],
        &action,
        &probe_point(&action, scale),
        1e-5,
    );
    validate_moment("cp1_torus", &action, &mm, scale);
    Scenario {
        name: "cp1_torus",
        description: "circle action on the complex projective line",
        manifold: Arc::clone(&manifold),
        action,
        moment: Some(mm),
        einstein_constant: Some(4.0),
        initial: InitialFamily {
            params: vec![("b0", 0.25)],
            build: Box::new(|manifold, values| {
                let b0 = values[0];
                if !(0.0..=1.0).contains(&b0) {
                    return Err(ScenarioError::BadParam(format!(
                        "coordinate mass b0 = {b0} outside [0, 1]"
                    )));
                }
                let coords =
                    DVector::from_vec(vec![(1.0 - b0).sqrt(), 0.0, b0.sqrt(), 0.0]);
                Point::retract(manifold, &coords)
                    .map_err(|e| ScenarioError::BadParam(e.to_string()))
            }),
        },
        metadata: vec![],
        vol2_scale: scale,
        analytic_h: Some(Box::new(|p: &Point| {
            // vol^2 = b (1 - b)
            let b = mass(&p.coords, 1);
            grad_mass(&p.coords, 1) * (-0.5 * (1.0 - 2.0 * b) / (b * (1.0 - b)))
        })),
    }
}

fn build_cp2_torus() -> Scenario {
    let manifold = Manifold::complex_projective(2);
    let action = Action::new(
        Arc::clone(&manifold),
        vec![
            Generator::new(torus_generator(2, 1), "i*E1"),
            Generator::new(torus_generator(2, 2), "i*E2"),
        ],
    )
    .expect("valid generators");
    let scale = vol2_scale(&action);
    let mm = MomentMap::with_empirical_sign(
        vec![
            Box::new(|p: &Point| -0.5 * mass(&p.coords, 1)) as ScalarField,
            Box::new(|p: &Point| -0.5 * mass(&p.coords, 2)) as ScalarField,
        ],
        vec![-1.0 / 6.0, -1.0 / 6.0],
        &action,
        &probe_point(&action, scale),
        1e-5,
    );
    validate_moment("cp2_torus", &action, &mm, scale);
    Scenario {
        name: "cp2_torus",
        description: "standard 2-torus action on the complex projective plane",
        manifold: Arc::clone(&manifold),
        action,
        moment: Some(mm),
        einstein_constant: Some(6.0),
        initial: InitialFamily {
            params: vec![("b0", 0.25), ("c0", 0.35)],
            build: Box::new(|manifold, values| {
                let (b0, c0) = (values[0], values[1]);
                let a0 = 1.0 - b0 - c0;
                if b0 < 0.0 || c0 < 0.0 || a0 < 0.0 {
                    return Err(ScenarioError::BadParam(format!(
                        "coordinate masses (b0, c0) = ({b0}, {c0}) leave the simplex"
                    )));
                }
                let coords = DVector::from_vec(vec![
                    a0.sqrt(),
                    0.0,
                    b0.sqrt(),
                    0.0,
                    c0.sqrt(),
                    0.0,
                ]);
                Point::retract(manifold, &coords)
                    .map_err(|e| ScenarioError::BadParam(e.to_string()))
            }),
        },
        metadata: vec![(
            "note",
            "the minimal Lagrangian orbit is the Clifford torus |z_0| = |z_1| = |z_2|".to_string(),
        )],
        vol2_scale: scale,
        analytic_h: Some(Box::new(|p: &Point| {
            // vol^2 = a b c in coordinate masses
            let b = mass(&p.coords, 1);
            let c = mass(&p.coords, 2);
            let a = 1.0 - b - c;
            let gb = grad_mass(&p.coords, 1);
            let gc = grad_mass(&p.coords, 2);
            (gb * (c * (a - b)) + gc * (b * (a - c))) * (-0.5 / (a * b * c))
        })),
    }
}

fn build_so3_on_s2() -> Scenario {
    let manifold = Manifold::kaehler_sphere2();
    let action =
        Action::new(Arc::clone(&manifold), so3_generators()).expect("valid generators");
    let scale = vol2_scale(&action);
    let mm = MomentMap::with_empirical_sign(
        vec![
            Box::new(|p: &Point| p.coords[0]) as ScalarField,
            Box::new(|p: &Point| p.coords[1]) as ScalarField,
            Box::new(|p: &Point| p.coords[2]) as ScalarField,
        ],
        vec![0.0, 0.0, 0.0],
        &action,
        &probe_point(&action, scale),
        1e-5,
    );
    validate_moment("so3_on_s2", &action, &mm, scale);
    Scenario {
        name: "so3_on_s2",
        description: "full rotation group acting transitively on the 2-sphere (non-Lagrangian contrast)",
        manifold: Arc::clone(&manifold),
        action,
        moment: Some(mm),
        einstein_constant: Some(1.0),
        initial: latitude_family(&[("z0", 0.5)]),
        metadata: vec![(
            "note",
            "transitive action: every orbit is the whole sphere, vol^2 is constant and H = 0"
                .to_string(),
        )],
        vol2_scale: scale,
        analytic_h: Some(Box::new(|p: &Point| DVector::zeros(p.coords.len()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn registry_lists_all_builtins() {
        let names: Vec<&str> = list().iter().map(|(n, _)| *n).collect();
        assert!(names.contains(&"s2_rotation"));
        assert!(names.contains(&"cp2_torus"));
        assert!(names.len() >= 6);
        // names are unique
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
        assert!(matches!(
            build("nonexistent"),
            Err(ScenarioError::Unknown(_))
        ));
    }

    #[test]
    fn all_scenarios_build_and_are_consistent() {
        for (name, _) in list() {
            let s = build(name).unwrap();
            assert_eq!(s.name, name);
            // Kaehler fields jointly present or jointly absent
            assert_eq!(s.moment.is_some(), s.einstein_constant.is_some());
            assert_eq!(s.moment.is_some(), s.manifold.kaehler);
            // defaults give a regular start
            let p = s.initial_point(&HashMap::new()).unwrap();
            assert!(p.residual() < 1e-12);
            assert_eq!(s.action.classify(&p, RANK_TOL), Stratum::Regular);
            assert!(s.vol2_scale > 0.0);
        }
    }

    #[test]
    fn initial_families_respect_overrides() {
        let s = build("s2_rotation").unwrap();
        let p = s
            .initial_point(&HashMap::from([("z0".to_string(), 0.8)]))
            .unwrap();
        assert_relative_eq!(p.coords[2], 0.8, epsilon = 1e-15);
        assert!(s
            .initial_point(&HashMap::from([("bogus".to_string(), 1.0)]))
            .is_err());
        assert!(s
            .initial_point(&HashMap::from([("z0".to_string(), 2.0)]))
            .is_err());

        let s = build("cp2_torus").unwrap();
        let p = s.initial_point(&HashMap::new()).unwrap();
        assert_relative_eq!(mass(&p.coords, 1), 0.25, epsilon = 1e-14);
        assert_relative_eq!(mass(&p.coords, 2), 0.35, epsilon = 1e-14);
        assert!(s
            .initial_point(&HashMap::from([
                ("b0".to_string(), 0.7),
                ("c0".to_string(), 0.7)
            ]))
            .is_err());
    }

    #[test]
    fn lagrangian_setup_flags() {
        for (name, expect) in [
            ("s2_rotation", true),
            ("s2xs2_torus", true),
            ("cp1_torus", true),
            ("cp2_torus", true),
            ("s2xs2_frozen_factor", false),
            ("so3_on_s2", false),
            ("rp2_rotation", false),
        ] {
            assert_eq!(build(name).unwrap().is_lagrangian_setup(), expect, "{name}");
        }
    }

    #[test]
    fn analytic_fields_match_fd_mean_curvature() {
        for (name, _) in list() {
            let s = build(name).unwrap();
            for p in s.seeded_regular_points(8, 99) {
                let oracle = s.analytic_mean_curvature(&p).unwrap();
                let fd = flow::mean_curvature(&s.action, &p, 1e-5).unwrap();
                let scale = oracle.norm();
                if scale > 1e-8 {
                    assert!(
                        (&fd - &oracle).norm() / scale < 1e-6,
                        "{name}: FD field deviates from closed form by {:.3e}",
                        (&fd - &oracle).norm() / scale
                    );
                } else {
                    assert!(fd.norm() < 1e-7, "{name}: expected vanishing H");
                }
            }
        }
    }

    #[test]
    fn rp2_flow_field_equals_sphere_flow_field() {
        // local quantities on the RP^2 representative coincide with the
        // sphere values
        let rp2 = build("rp2_rotation").unwrap();
        let s2 = build("s2_rotation").unwrap();
        for p_rp2 in rp2.seeded_regular_points(16, 3) {
            // same representative coordinates, viewed on the sphere
            let p_s2 = Point {
                coords: p_rp2.coords.clone(),
                manifold: Arc::clone(&s2.manifold),
            };
            assert_eq!(
                flow::vol_squared(&rp2.action, &p_rp2),
                flow::vol_squared(&s2.action, &p_s2)
            );
            let h_rp2 = flow::mean_curvature(&rp2.action, &p_rp2, 1e-5).unwrap();
            let h_s2 = flow::mean_curvature(&s2.action, &p_s2, 1e-5).unwrap();
            assert_eq!(h_rp2, h_s2);
            assert_eq!(
                rp2.action.gram(&p_rp2),
                s2.action.gram(&p_s2)
            );
        }
    }

    #[test]
    fn so3_volume_constant_and_h_zero() {
        let s = build("so3_on_s2").unwrap();
        assert_eq!(s.action.max_orbit_dim, 2);
        for p in s.seeded_regular_points(16, 5) {
            assert_relative_eq!(flow::vol_squared(&s.action, &p), 1.0, epsilon = 1e-12);
            let h = flow::mean_curvature(&s.action, &p, 1e-5).unwrap();
            assert!(h.norm() < 1e-8, "so3 H = {:.3e}", h.norm());
        }
    }
}
