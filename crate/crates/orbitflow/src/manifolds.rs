//! Built-in compact manifolds as embedded submanifolds of Euclidean space.
//!
//! Each manifold lives in an ambient real vector space and supplies metric
//! projection (retraction), tangent projection, the induced metric, uniform
//! sampling, and, where applicable, the Kaehler structure (complex action J
//! and symplectic form omega).
//!
//! Complex projective space is represented by unit vectors of C^{n+1} stored
//! as interleaved real pairs `[re z_0, im z_0, re z_1, ...]` modulo phase. No
//! gauge is fixed during flows (all computed quantities are phase-invariant);
//! a deterministic gauge is applied only when writing trace files. Real
//! projective space is realized on its sphere representative; the antipodal
//! identification is scenario metadata, not geometry seen by the flow.

use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifoldError {
    #[error("raw point too far from the manifold (factor norm {0:.3e} below 0.5)")]
    TooFar(f64),
    #[error("operation requires a Kaehler manifold")]
    NotKaehler,
    #[error("ambient dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Constraint residual allowed for points considered "on" the manifold.
pub const POINT_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum ManifoldKind {
    /// Round unit sphere S^m in R^{m+1}.
    Sphere(usize),
    /// Riemannian product of factors, embedded block-wise.
    Product(Vec<Arc<Manifold>>),
    /// CP^n on unit representatives of C^{n+1} (Fubini-Study from the unit
    /// sphere; holomorphic sectional curvature 4).
    ComplexProjective(usize),
    /// RP^m on its S^m representative.
    RealProjective(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifold {
    pub kind: ManifoldKind,
    pub ambient_dim: usize,
    pub intrinsic_dim: usize,
    pub kaehler: bool,
    /// Einstein constant c with Ric = c g, present only on Kaehler-Einstein
    /// builds of the manifold.
    pub einstein_constant: Option<f64>,
}

impl Manifold {
    pub fn sphere(m: usize) -> Arc<Manifold> {
        Arc::new(Manifold {
            kind: ManifoldKind::Sphere(m),
            ambient_dim: m + 1,
            intrinsic_dim: m,
            kaehler: false,
            einstein_constant: None,
        })
    }

    /// The unit 2-sphere treated directly as a Kaehler-Einstein manifold
    /// (Ric = g, so c = 1) with the area form as symplectic form. The complex
    /// action J is not provided on this representation; `omega` is computed
    /// from the cross product instead.
    pub fn kaehler_sphere2() -> Arc<Manifold> {
        Arc::new(Manifold {
            kind: ManifoldKind::Sphere(2),
            ambient_dim: 3,
            intrinsic_dim: 2,
            kaehler: true,
            einstein_constant: Some(1.0),
        })
    }

    /// Block-wise product. Kaehler iff every factor is, with the Einstein
    /// constant retained only when all factors agree on it.
    pub fn product(factors: Vec<Arc<Manifold>>) -> Arc<Manifold> {
        assert!(!factors.is_empty());
        let ambient_dim = factors.iter().map(|f| f.ambient_dim).sum();
        let intrinsic_dim = factors.iter().map(|f| f.intrinsic_dim).sum();
        let kaehler = factors.iter().all(|f| f.kaehler);
        let einstein_constant = if kaehler {
            let c0 = factors[0].einstein_constant;
            if factors.iter().all(|f| f.einstein_constant == c0) {
                c0
            } else {
                None
            }
        } else {
            None
        };
        Arc::new(Manifold {
            kind: ManifoldKind::Product(factors),
            ambient_dim,
            intrinsic_dim,
            kaehler,
            einstein_constant,
        })
    }

    pub fn complex_projective(n: usize) -> Arc<Manifold> {
        Arc::new(Manifold {
            kind: ManifoldKind::ComplexProjective(n),
            ambient_dim: 2 * n + 2,
            intrinsic_dim: 2 * n,
            kaehler: true,
            einstein_constant: Some(2.0 * (n as f64 + 1.0)),
        })
    }

    pub fn real_projective(m: usize) -> Arc<Manifold> {
        Arc::new(Manifold {
            kind: ManifoldKind::RealProjective(m),
            ambient_dim: m + 1,
            intrinsic_dim: m,
            kaehler: false,
            einstein_constant: None,
        })
    }

    fn check_dim(&self, v: &DVector<f64>) -> Result<(), ManifoldError> {
        if v.len() != self.ambient_dim {
            return Err(ManifoldError::DimensionMismatch {
                expected: self.ambient_dim,
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Visit the leaf factors as (ambient offset, factor) pairs.
    fn for_each_factor<'a>(&'a self, f: &mut impl FnMut(usize, &'a Manifold)) {
        fn recurse<'a>(m: &'a Manifold, offset: usize, f: &mut impl FnMut(usize, &'a Manifold)) {
            match &m.kind {
                ManifoldKind::Product(factors) => {
                    let mut off = offset;
                    for fac in factors {
                        recurse(fac, off, f);
                        off += fac.ambient_dim;
                    }
                }
                _ => f(offset, m),
            }
        }
        recurse(self, 0, f);
    }

    /// Metric projection of an ambient vector onto the manifold:
    /// per-factor normalization of the (sphere or projective) representative.
    ///
    /// Radial projection is canonical for any factor norm bounded away from
    /// zero; only near-degenerate factors (norm below 0.5) are rejected.
    pub fn project(&self, raw: &DVector<f64>) -> Result<DVector<f64>, ManifoldError> {
        self.check_dim(raw)?;
        let mut out = raw.clone();
        let mut bad: Option<f64> = None;
        self.for_each_factor(&mut |off, fac| {
            let n = fac.ambient_dim;
            let norm = raw.rows(off, n).norm();
            if norm < 0.5 {
                bad = Some(norm);
                return;
            }
            let mut seg = out.rows_mut(off, n);
            seg /= norm;
        });
        match bad {
            Some(norm) => Err(ManifoldError::TooFar(norm)),
            None => Ok(out),
        }
    }

    /// Orthogonal projection of `v` onto the tangent space at `p`.
    ///
    /// Spheres: remove the radial component. Complex projective: also remove
    /// the vertical `i z` direction (horizontal space of the Hopf fibration).
    /// Products: per factor.
    pub fn tangent_project(&self, p: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut out = v.clone();
        self.for_each_factor(&mut |off, fac| {
            let n = fac.ambient_dim;
            let pf = p.rows(off, n).clone_owned();
            let radial = out.rows(off, n).dot(&pf);
            {
                let mut seg = out.rows_mut(off, n);
                seg.axpy(-radial, &pf, 1.0);
            }
            if let ManifoldKind::ComplexProjective(_) = fac.kind {
                let iz = jmul_pairs(&pf);
                let vert = out.rows(off, n).dot(&iz);
                let mut seg = out.rows_mut(off, n);
                seg.axpy(-vert, &iz, 1.0);
            }
        });
        out
    }

    /// Induced metric: the ambient Euclidean inner product.
    pub fn inner(&self, _p: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        u.dot(v)
    }

    /// Complex-structure action on tangent vectors. Only available where the
    /// representation carries J explicitly (complex projective factors).
    pub fn jmul(&self, _p: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>, ManifoldError> {
        let mut out = v.clone();
        let mut ok = true;
        self.for_each_factor(&mut |off, fac| match fac.kind {
            ManifoldKind::ComplexProjective(_) => {
                let seg = out.rows(off, fac.ambient_dim).clone_owned();
                out.rows_mut(off, fac.ambient_dim).copy_from(&jmul_pairs(&seg));
            }
            _ => ok = false,
        });
        if ok {
            Ok(out)
        } else {
            Err(ManifoldError::NotKaehler)
        }
    }

    /// Kaehler form on tangent vectors at `p`.
    ///
    /// Complex projective factors use omega(u, v) = <J u, v>; Kaehler
    /// 2-sphere factors use the area form <p, u x v>.
    pub fn omega(
        &self,
        p: &DVector<f64>,
        u: &DVector<f64>,
        v: &DVector<f64>,
    ) -> Result<f64, ManifoldError> {
        let mut total = 0.0;
        let mut err = None;
        self.for_each_factor(&mut |off, fac| {
            let n = fac.ambient_dim;
            match &fac.kind {
                ManifoldKind::ComplexProjective(_) => {
                    let uf = u.rows(off, n).clone_owned();
                    total += jmul_pairs(&uf).dot(&v.rows(off, n).clone_owned());
                }
                ManifoldKind::Sphere(2) if fac.kaehler => {
                    let pf = p.rows(off, 3).clone_owned();
                    let uf = u.rows(off, 3).clone_owned();
                    let vf = v.rows(off, 3).clone_owned();
                    let pf3 = nalgebra::Vector3::new(pf[0], pf[1], pf[2]);
                    let uf3 = nalgebra::Vector3::new(uf[0], uf[1], uf[2]);
                    let vf3 = nalgebra::Vector3::new(vf[0], vf[1], vf[2]);
                    total += pf3.dot(&uf3.cross(&vf3));
                }
                _ => err = Some(ManifoldError::NotKaehler),
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(total),
        }
    }

    /// Max over factors of the unit-norm constraint violation.
    pub fn residual(&self, p: &DVector<f64>) -> f64 {
        let mut worst = 0.0f64;
        self.for_each_factor(&mut |off, fac| {
            worst = worst.max((p.rows(off, fac.ambient_dim).norm() - 1.0).abs());
        });
        worst
    }

    /// Deterministic output gauge for trace files: on projective factors,
    /// rotate/flip the representative so its first nonzero coordinate is
    /// real-positive. Identity on sphere factors.
    pub fn gauge(&self, p: &DVector<f64>) -> DVector<f64> {
        let mut out = p.clone();
        self.for_each_factor(&mut |off, fac| {
            let n = fac.ambient_dim;
            match fac.kind {
                ManifoldKind::ComplexProjective(_) => {
                    let seg = out.rows(off, n).clone_owned();
                    let mut phase = None;
                    for k in 0..n / 2 {
                        let (re, im) = (seg[2 * k], seg[2 * k + 1]);
                        let modulus = (re * re + im * im).sqrt();
                        if modulus > 1e-12 {
                            phase = Some((re / modulus, im / modulus));
                            break;
                        }
                    }
                    if let Some((cr, ci)) = phase {
                        // multiply every coordinate by conj(phase)
                        let mut seg_mut = out.rows_mut(off, n);
                        for k in 0..n / 2 {
                            let (re, im) = (seg[2 * k], seg[2 * k + 1]);
                            seg_mut[2 * k] = re * cr + im * ci;
                            seg_mut[2 * k + 1] = im * cr - re * ci;
                        }
                    }
                }
                ManifoldKind::RealProjective(_) => {
                    let seg = out.rows(off, n).clone_owned();
                    if let Some(first) = seg.iter().find(|c| c.abs() > 1e-12) {
                        if *first < 0.0 {
                            let mut seg_mut = out.rows_mut(off, n);
                            seg_mut.neg_mut();
                        }
                    }
                }
                _ => {}
            }
        });
        out
    }

    /// Uniform sample with respect to the volume measure: ambient Gaussian,
    /// retracted per factor.
    pub fn sample_coords(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        loop {
            let raw = DVector::from_fn(self.ambient_dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            // factor norms are essentially never outside [0.5, 1.5]^c after
            // normalization, but a degenerate Gaussian draw could be
            let mut good = true;
            self.for_each_factor(&mut |off, fac| {
                let norm = raw.rows(off, fac.ambient_dim).norm();
                if norm < 1e-6 {
                    good = false;
                }
            });
            if !good {
                continue;
            }
            let mut out = raw.clone();
            self.for_each_factor(&mut |off, fac| {
                let n = fac.ambient_dim;
                let norm = raw.rows(off, n).norm();
                let mut seg = out.rows_mut(off, n);
                seg /= norm;
            });
            return out;
        }
    }
}

/// Multiplication by i on interleaved complex coordinates.
fn jmul_pairs(v: &DVector<f64>) -> DVector<f64> {
    debug_assert!(v.len() % 2 == 0);
    let mut out = DVector::zeros(v.len());
    for k in 0..v.len() / 2 {
        out[2 * k] = -v[2 * k + 1];
        out[2 * k + 1] = v[2 * k];
    }
    out
}

/// A point on a built-in manifold in ambient coordinates.
#[derive(Debug, Clone)]
pub struct Point {
    pub coords: DVector<f64>,
    pub manifold: Arc<Manifold>,
}

impl Point {
    /// Metric projection of a nearby ambient vector onto the manifold.
    pub fn retract(manifold: &Arc<Manifold>, raw: &DVector<f64>) -> Result<Point, ManifoldError> {
        let coords = manifold.project(raw)?;
        Ok(Point {
            coords,
            manifold: Arc::clone(manifold),
        })
    }

    /// Seeded uniform sample.
    pub fn random(manifold: &Arc<Manifold>, rng: &mut ChaCha8Rng) -> Point {
        Point {
            coords: manifold.sample_coords(rng),
            manifold: Arc::clone(manifold),
        }
    }

    pub fn tangent_project(&self, v: &DVector<f64>) -> DVector<f64> {
        self.manifold.tangent_project(&self.coords, v)
    }

    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.manifold.inner(&self.coords, u, v)
    }

    pub fn jmul(&self, v: &DVector<f64>) -> Result<DVector<f64>, ManifoldError> {
        if !self.manifold.kaehler {
            return Err(ManifoldError::NotKaehler);
        }
        self.manifold.jmul(&self.coords, v)
    }

    pub fn omega(&self, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64, ManifoldError> {
        if !self.manifold.kaehler {
            return Err(ManifoldError::NotKaehler);
        }
        self.manifold.omega(&self.coords, u, v)
    }

    pub fn residual(&self) -> f64 {
        self.manifold.residual(&self.coords)
    }

    pub fn gauged_coords(&self) -> DVector<f64> {
        self.manifold.gauge(&self.coords)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn dvec(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn retract_examples() {
        let s2 = Manifold::sphere(2);
        // radial projection
        let p = Point::retract(&s2, &dvec(&[0.0, 0.0, 2.0])).unwrap();
        assert_eq!(p.coords, dvec(&[0.0, 0.0, 1.0]));
        // unit vector maps to itself
        let p = Point::retract(&s2, &dvec(&[1.0, 0.0, 0.0])).unwrap();
        assert_eq!(p.coords, dvec(&[1.0, 0.0, 0.0]));
        // (0.6, 0, 0.6) normalizes by sqrt(0.72)
        let p = Point::retract(&s2, &dvec(&[0.6, 0.0, 0.6])).unwrap();
        let s = 0.72f64.sqrt();
        assert_relative_eq!(p.coords[0], 0.6 / s, epsilon = 1e-15);
        assert_relative_eq!(p.coords[2], 0.6 / s, epsilon = 1e-15);
        // near-degenerate points are rejected
        assert!(matches!(
            Point::retract(&s2, &dvec(&[0.0, 0.0, 0.2])),
            Err(ManifoldError::TooFar(_))
        ));
    }

    #[test]
    fn tangent_project_kills_normal_directions() {
        let s2 = Manifold::sphere(2);
        let p = Point::retract(&s2, &dvec(&[0.0, 0.0, 1.0])).unwrap();
        assert!(p.tangent_project(&p.coords).norm() < 1e-15);
        let v = dvec(&[0.3, -0.2, 0.0]);
        assert_relative_eq!((p.tangent_project(&v) - &v).norm(), 0.0, epsilon = 1e-15);

        // CP^1 at z = (1, 0): the vertical direction iz is killed
        let cp1 = Manifold::complex_projective(1);
        let p = Point::retract(&cp1, &dvec(&[1.0, 0.0, 0.0, 0.0])).unwrap();
        let iz = dvec(&[0.0, 1.0, 0.0, 0.0]);
        assert!(p.tangent_project(&iz).norm() < 1e-15);
    }

    #[test]
    fn omega_triple_product_on_sphere() {
        let s2 = Manifold::kaehler_sphere2();
        let p = Point::retract(&s2, &dvec(&[0.0, 0.0, 1.0])).unwrap();
        let u = dvec(&[1.0, 0.0, 0.0]);
        let v = dvec(&[0.0, 1.0, 0.0]);
        assert_relative_eq!(p.omega(&u, &v).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(p.omega(&u, &u).unwrap(), 0.0, epsilon = 1e-15);
        // J is not provided on the sphere representation
        assert!(matches!(p.jmul(&u), Err(ManifoldError::NotKaehler)));
        // and omega is unavailable on the plain sphere
        let plain = Manifold::sphere(2);
        let q = Point::retract(&plain, &dvec(&[0.0, 0.0, 1.0])).unwrap();
        assert!(matches!(q.omega(&u, &v), Err(ManifoldError::NotKaehler)));
    }

    #[test]
    fn jmul_squares_to_minus_one() {
        let cp2 = Manifold::complex_projective(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = Point::random(&cp2, &mut rng);
        let v = p.tangent_project(&DVector::from_fn(6, |i, _| (i as f64 * 0.7).sin()));
        let jjv = p.jmul(&p.jmul(&v).unwrap()).unwrap();
        assert_relative_eq!((jjv + &v).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn einstein_constants() {
        assert_eq!(Manifold::kaehler_sphere2().einstein_constant, Some(1.0));
        assert_eq!(Manifold::complex_projective(1).einstein_constant, Some(4.0));
        assert_eq!(Manifold::complex_projective(2).einstein_constant, Some(6.0));
        let prod = Manifold::product(vec![Manifold::kaehler_sphere2(), Manifold::kaehler_sphere2()]);
        assert_eq!(prod.einstein_constant, Some(1.0));
        assert!(prod.kaehler);
        assert_eq!(prod.ambient_dim, 6);
        assert_eq!(prod.intrinsic_dim, 4);
    }

    #[test]
    fn random_points_have_symmetric_means() {
        let s2 = Manifold::sphere(2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mean_z: f64 = (0..n)
            .map(|_| Point::random(&s2, &mut rng).coords[2])
            .sum::<f64>()
            / n as f64;
        assert!(mean_z.abs() < 0.01, "mean z = {mean_z}");

        let cp2 = Manifold::complex_projective(2);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mean_b: f64 = (0..n)
            .map(|_| {
                let p = Point::random(&cp2, &mut rng);
                p.coords[2] * p.coords[2] + p.coords[3] * p.coords[3]
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean_b - 1.0 / 3.0).abs() < 0.01, "mean |z_1|^2 = {mean_b}");
    }

    #[test]
    fn random_point_deterministic_for_seed() {
        let cp2 = Manifold::complex_projective(2);
        let a = Point::random(&cp2, &mut ChaCha8Rng::seed_from_u64(5));
        let b = Point::random(&cp2, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a.coords, b.coords);
    }

    #[test]
    fn gauge_fixes_first_nonzero_coordinate() {
        let cp2 = Manifold::complex_projective(2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = Point::random(&cp2, &mut rng);
        let g = p.gauged_coords();
        assert!(g[0] > 0.0);
        assert!(g[1].abs() < 1e-14);
        // gauge preserves the magnitudes |z_k|
        for k in 0..3 {
            let m0 = (p.coords[2 * k].powi(2) + p.coords[2 * k + 1].powi(2)).sqrt();
            let m1 = (g[2 * k].powi(2) + g[2 * k + 1].powi(2)).sqrt();
            assert_relative_eq!(m0, m1, epsilon = 1e-14);
        }

        let rp2 = Manifold::real_projective(2);
        let p = Point::retract(&rp2, &dvec(&[-0.6, 0.0, 0.6])).unwrap();
        let g = p.gauged_coords();
        assert!(g[0] > 0.0);
    }

    proptest! {
        #[test]
        fn retract_is_idempotent(seed in 0u64..500) {
            let manifolds = [
                Manifold::sphere(2),
                Manifold::complex_projective(2),
                Manifold::product(vec![Manifold::sphere(2), Manifold::sphere(2)]),
            ];
            let m = &manifolds[(seed % 3) as usize];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw = DVector::from_fn(m.ambient_dim, |_, _| 1.0 + 0.3 * rng.gen::<f64>());
            if let Ok(p) = m.project(&raw) {
                let pp = m.project(&p).unwrap();
                prop_assert!((pp - &p).norm() < 1e-14);
                prop_assert!(m.residual(&p) < 1e-14);
            }
        }

        #[test]
        fn tangent_projection_idempotent_and_self_adjoint(seed in 0u64..500) {
            let m = Manifold::complex_projective(2);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = m.sample_coords(&mut rng);
            let u = DVector::from_fn(6, |_, _| rng.gen::<f64>() - 0.5);
            let v = DVector::from_fn(6, |_, _| rng.gen::<f64>() - 0.5);
            let pu = m.tangent_project(&p, &u);
            let ppu = m.tangent_project(&p, &pu);
            prop_assert!((ppu - &pu).norm() < 1e-13);
            // self-adjoint: <Pu, v> = <u, Pv>
            let pv = m.tangent_project(&p, &v);
            prop_assert!((pu.dot(&v) - u.dot(&pv)).abs() < 1e-13);
        }

        #[test]
        fn omega_antisymmetric_and_j_invariant(seed in 0u64..500) {
            let m = Manifold::complex_projective(2);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = m.sample_coords(&mut rng);
            let u = m.tangent_project(&p, &DVector::from_fn(6, |_, _| rng.gen::<f64>() - 0.5));
            let v = m.tangent_project(&p, &DVector::from_fn(6, |_, _| rng.gen::<f64>() - 0.5));
            let o_uv = m.omega(&p, &u, &v).unwrap();
            let o_vu = m.omega(&p, &v, &u).unwrap();
            prop_assert!((o_uv + o_vu).abs() < 1e-12);
            let ju = m.jmul(&p, &u).unwrap();
            let jv = m.jmul(&p, &v).unwrap();
            let o_j = m.omega(&p, &ju, &jv).unwrap();
            prop_assert!((o_j - o_uv).abs() < 1e-12);
        }
    }
}
