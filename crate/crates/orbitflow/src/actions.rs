//! Group actions as ordered lists of Lie-algebra generators acting on the
//! ambient space, together with the derived orbit machinery: fundamental
//! vector fields, Gram matrices, orbit dimension and stratification, the
//! derived subalgebra, and vanishing-direction analysis near singular orbits.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::manifolds::{Manifold, ManifoldKind, Point};
use crate::numerics;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ActionError {
    #[error("generator matrix is not skew-symmetric (max violation {0:.3e})")]
    NotSkew(f64),
    #[error("generator does not commute with the complex structure (max violation {0:.3e})")]
    NotComplexLinear(f64),
    #[error("generator shape {got} does not match ambient dimension {expected}")]
    BadShape { expected: usize, got: usize },
    #[error("commutators leave the generator span (residual {0:.3e}): not a Lie subalgebra")]
    NotClosed(f64),
}

/// Skew-symmetry tolerance for generators (guarantees the one-parameter flow
/// acts by isometries preserving the embedding constraint).
pub const SKEW_TOL: f64 = 1e-12;

/// Relative eigenvalue tolerance for numerical Gram rank.
pub const RANK_TOL: f64 = 1e-8;

/// Expansion residual above which the generator list is rejected as not
/// closed under commutators.
pub const CLOSURE_TOL: f64 = 1e-8;

/// A Lie-algebra element as an ambient linear map.
#[derive(Debug, Clone)]
pub struct Generator {
    pub matrix: DMatrix<f64>,
    pub label: String,
}

impl Generator {
    pub fn new(matrix: DMatrix<f64>, label: impl Into<String>) -> Generator {
        Generator {
            matrix,
            label: label.into(),
        }
    }
}

/// Orbit stratum at a point, by dimension only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Stratum {
    Regular,
    Singular,
}

/// An action: generators, structure constants, and the principal orbit
/// dimension estimated once from seeded samples (reliable because the
/// principal stratum is open and dense).
#[derive(Debug, Clone)]
pub struct Action {
    pub manifold: Arc<Manifold>,
    pub generators: Vec<Generator>,
    /// c[i][j] is the coefficient vector of [A_i, A_j] in the generator basis.
    pub structure_constants: Vec<Vec<DVector<f64>>>,
    /// Worst least-squares residual of the commutator expansions.
    pub closure_residual: f64,
    pub max_orbit_dim: usize,
}

impl Action {
    pub fn new(manifold: Arc<Manifold>, generators: Vec<Generator>) -> Result<Action, ActionError> {
        assert!(!generators.is_empty());
        let dim = manifold.ambient_dim;
        for g in &generators {
            if g.matrix.nrows() != dim || g.matrix.ncols() != dim {
                return Err(ActionError::BadShape {
                    expected: dim,
                    got: g.matrix.nrows(),
                });
            }
            let skew = (&g.matrix + g.matrix.transpose()).amax();
            if skew > SKEW_TOL * g.matrix.amax().max(1.0) {
                return Err(ActionError::NotSkew(skew));
            }
            if has_complex_factor(&manifold) {
                let j = complex_structure_matrix(&manifold);
                let comm = (&g.matrix * &j - &j * &g.matrix).amax();
                if comm > SKEW_TOL * g.matrix.amax().max(1.0) {
                    return Err(ActionError::NotComplexLinear(comm));
                }
            }
        }

        let (structure_constants, closure_residual) = expand_commutators(&generators)?;

        let mut action = Action {
            manifold,
            generators,
            structure_constants,
            closure_residual,
            max_orbit_dim: 0,
        };
        action.max_orbit_dim = action.estimate_max_orbit_dim();
        Ok(action)
    }

    pub fn k(&self) -> usize {
        self.generators.len()
    }

    /// Rank of the Gram matrix maximized over 64 seeded uniform samples.
    fn estimate_max_orbit_dim(&self) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
        let mut best = 0;
        for _ in 0..64 {
            let p = Point::random(&self.manifold, &mut rng);
            best = best.max(self.orbit_dim(&p, RANK_TOL));
        }
        best
    }

    /// Fundamental vector field of one generator at `p`: the tangent part of
    /// the linearized action. For spheres the projection is a no-op (skew
    /// matrices already produce tangent vectors); on projective factors it
    /// removes the vertical component.
    pub fn fundamental_field(&self, gen_index: usize, p: &Point) -> DVector<f64> {
        let raw = &self.generators[gen_index].matrix * &p.coords;
        p.tangent_project(&raw)
    }

    /// All fundamental fields at `p`.
    pub fn fields(&self, p: &Point) -> Vec<DVector<f64>> {
        (0..self.k()).map(|i| self.fundamental_field(i, p)).collect()
    }

    /// Gram matrix of pairwise inner products of the fundamental fields.
    pub fn gram(&self, p: &Point) -> DMatrix<f64> {
        let fields = self.fields(p);
        let k = self.k();
        let mut g = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                let v = fields[i].dot(&fields[j]);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }

    /// Numerical rank of the Gram matrix: eigenvalues above `tol` times the
    /// largest. The relative cutoff matters because Gram magnitudes shrink by
    /// orders of magnitude approaching collapse.
    pub fn orbit_dim(&self, p: &Point, tol: f64) -> usize {
        let eig = numerics::sym_eigenvalues(&self.gram(p)).expect("gram is symmetric");
        let largest = eig.last().copied().unwrap_or(0.0);
        if largest <= 0.0 {
            return 0;
        }
        eig.iter().filter(|&&v| v > tol * largest).count()
    }

    pub fn classify(&self, p: &Point, tol: f64) -> Stratum {
        if self.orbit_dim(p, tol) < self.max_orbit_dim {
            Stratum::Singular
        } else {
            Stratum::Regular
        }
    }

    /// Orthonormal basis (in generator coordinates) of the numerical kernel
    /// of the Gram matrix: the Lie-algebra directions whose fundamental
    /// fields vanish at `p`.
    pub fn vanishing_directions(&self, p: &Point, tol: f64) -> Vec<DVector<f64>> {
        let scale = numerics::sym_eigenvalues(&self.gram(p))
            .expect("gram is symmetric")
            .last()
            .copied()
            .unwrap_or(0.0)
            .max(0.0);
        self.vanishing_directions_with_scale(p, tol, scale)
    }

    /// Kernel directions judged against an external Gram scale. Flow traces
    /// pass the initial Gram scale so that directions collapsed along the
    /// way register even though they dominate the (tiny) terminal spectrum.
    pub fn vanishing_directions_with_scale(
        &self,
        p: &Point,
        tol: f64,
        scale: f64,
    ) -> Vec<DVector<f64>> {
        let (vals, vecs) = numerics::sym_eigen(&self.gram(p)).expect("gram is symmetric");
        vals.iter()
            .zip(vecs)
            .filter(|(v, _)| **v <= tol * scale || scale == 0.0)
            .map(|(_, vec)| vec)
            .collect()
    }

    /// Basis of span{[A_i, A_j]} in generator coordinates, with the worst
    /// expansion residual. Empty for abelian actions.
    pub fn derived_subalgebra(&self) -> Result<Vec<DVector<f64>>, ActionError> {
        if self.closure_residual > CLOSURE_TOL {
            return Err(ActionError::NotClosed(self.closure_residual));
        }
        let k = self.k();
        let mut columns: Vec<DVector<f64>> = Vec::new();
        for i in 0..k {
            for j in (i + 1)..k {
                let c = &self.structure_constants[i][j];
                if c.norm() > 1e-12 {
                    columns.push(c.clone());
                }
            }
        }
        if columns.is_empty() {
            return Ok(Vec::new());
        }
        let mat = DMatrix::from_columns(&columns);
        let svd = mat.svd(true, false);
        let u = svd.u.as_ref().expect("svd with u");
        let smax = svd.singular_values.max();
        let mut basis = Vec::new();
        for (idx, s) in svd.singular_values.iter().enumerate() {
            if *s > 1e-10 * smax {
                basis.push(DVector::from_column_slice(u.column(idx).as_slice()));
            }
        }
        Ok(basis)
    }

    /// Exact isometry of the one-parameter subgroup of generator `i`:
    /// p -> exp(t A_i) p. Used by tests and diagnostics.
    pub fn exp_action(&self, gen_index: usize, t: f64, p: &Point) -> Point {
        let e = numerics::expm(&(&self.generators[gen_index].matrix * t));
        Point {
            coords: &e * &p.coords,
            manifold: Arc::clone(&p.manifold),
        }
    }
}

fn has_complex_factor(m: &Manifold) -> bool {
    match &m.kind {
        ManifoldKind::ComplexProjective(_) => true,
        ManifoldKind::Product(fs) => fs.iter().any(|f| has_complex_factor(f)),
        _ => false,
    }
}

/// Block-diagonal matrix of the complex structure over complex factors
/// (identity blocks elsewhere are irrelevant: only used for the commutation
/// check on manifolds whose factors are all complex).
fn complex_structure_matrix(m: &Manifold) -> DMatrix<f64> {
    let n = m.ambient_dim;
    let mut j = DMatrix::zeros(n, n);
    for k in 0..n / 2 {
        j[(2 * k, 2 * k + 1)] = -1.0;
        j[(2 * k + 1, 2 * k)] = 1.0;
    }
    j
}

/// Structure constants by least squares over vectorized generators.
fn expand_commutators(
    generators: &[Generator],
) -> Result<(Vec<Vec<DVector<f64>>>, f64), ActionError> {
    let k = generators.len();
    let dim2 = generators[0].matrix.len();
    let basis = DMatrix::from_fn(dim2, k, |r, c| generators[c].matrix.as_slice()[r]);
    let svd = basis.clone().svd(true, true);
    let scale = generators
        .iter()
        .map(|g| g.matrix.amax())
        .fold(1.0f64, f64::max);

    let mut constants = vec![vec![DVector::zeros(k); k]; k];
    let mut worst = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let comm = &generators[i].matrix * &generators[j].matrix
                - &generators[j].matrix * &generators[i].matrix;
            let b = DVector::from_column_slice(comm.as_slice());
            let c = svd.solve(&b, 1e-12).expect("least squares solve");
            let resid = (&basis * &c - &b).norm() / scale.powi(2).max(1.0);
            worst = worst.max(resid);
            constants[i][j] = c;
        }
    }
    if worst > CLOSURE_TOL {
        return Err(ActionError::NotClosed(worst));
    }
    Ok((constants, worst))
}

// ---------------------------------------------------------------------------
// standard generator constructions
// ---------------------------------------------------------------------------

/// Rotation generator about the z-axis of R^3.
pub fn rotation_z() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0])
}

/// The full rotation algebra so(3): L_x, L_y, L_z.
pub fn so3_generators() -> Vec<Generator> {
    let lx = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0]);
    let ly = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0]);
    let lz = rotation_z();
    vec![
        Generator::new(lx, "Lx"),
        Generator::new(ly, "Ly"),
        Generator::new(lz, "Lz"),
    ]
}

/// Embed a small generator block at `offset` inside a larger ambient space.
pub fn embed_block(block: &DMatrix<f64>, ambient: usize, offset: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(ambient, ambient);
    m.view_mut((offset, offset), (block.nrows(), block.ncols()))
        .copy_from(block);
    m
}

/// Realified i E_k on C^{n+1}: phase rotation of the k-th complex coordinate.
pub fn torus_generator(n: usize, k: usize) -> DMatrix<f64> {
    assert!(k <= n);
    let dim = 2 * n + 2;
    let mut m = DMatrix::zeros(dim, dim);
    m[(2 * k, 2 * k + 1)] = -1.0;
    m[(2 * k + 1, 2 * k)] = 1.0;
    m
}
