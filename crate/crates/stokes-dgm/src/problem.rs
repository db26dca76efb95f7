//! Stokes problem instances on the unit hypercube.
//!
//! A problem bundles the reaction coefficient `alpha`, viscosity `nu`,
//! forcing `f`, Dirichlet boundary data `g`, and (for manufactured
//! cases) the exact solution. The momentum operator is
//! `G[u, p] = alpha u - nu lap(u) + grad p - f`, paired with the
//! incompressibility constraint `div u = 0`.
//!
//! Shipped instances: manufactured 2D/3D solutions with forcing derived
//! in closed form (hand-differentiated, validated against finite
//! differences in the tests), and lid-driven cavities with no exact
//! solution.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::autodiff::ExtendedBlock;
use crate::error::{DgmError, Result};

/// Shared vector-valued closure over points.
pub type VecFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
/// Shared exact solution: velocity vector and pressure scalar.
pub type ExactFn = Arc<dyn Fn(&[f64]) -> (Vec<f64>, f64) + Send + Sync>;

/// Points within this distance of a face count as boundary points.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// One instance of the general Stokes equations on `(0,1)^d` with
/// Dirichlet data.
#[derive(Clone)]
pub struct StokesProblem {
    pub name: String,
    pub alpha: f64,
    pub nu: f64,
    pub dim: usize,
    pub forcing: VecFn,
    pub boundary: VecFn,
    pub exact: Option<ExactFn>,
}

impl std::fmt::Debug for StokesProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StokesProblem")
            .field("name", &self.name)
            .field("alpha", &self.alpha)
            .field("nu", &self.nu)
            .field("dim", &self.dim)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl StokesProblem {
    /// Manufactured problem: exact solution known, forcing derived in
    /// closed form. `alpha >= 0`, `nu > 0` (alpha = 0 recovers the
    /// classical Stokes equations).
    pub fn manufactured(dim: usize, alpha: f64, nu: f64, name: &str) -> Result<Self> {
        check_coefficients(alpha, nu)?;
        let exact: ExactFn = match dim {
            2 => Arc::new(|x: &[f64]| {
                let (u, p) = exact_solution_2d(x);
                (u.to_vec(), p)
            }),
            3 => Arc::new(|x: &[f64]| {
                let (u, p) = exact_solution_3d(x);
                (u.to_vec(), p)
            }),
            d => return Err(DgmError::Config(format!("manufactured problems are 2D or 3D, got d={d}"))),
        };
        let boundary_exact = exact.clone();
        Ok(StokesProblem {
            name: name.to_string(),
            alpha,
            nu,
            dim,
            forcing: derive_forcing(dim, alpha, nu)?,
            boundary: Arc::new(move |x| boundary_exact(x).0),
            exact: Some(exact),
        })
    }

    /// Lid-driven cavity: zero forcing, no exact solution, moving-lid
    /// Dirichlet data.
    pub fn cavity(spec: CavitySpec, alpha: f64, nu: f64) -> Result<Self> {
        check_coefficients(alpha, nu)?;
        let dim = spec.dim;
        let name = format!("cavity{dim}d");
        let bspec = spec.clone();
        Ok(StokesProblem {
            name,
            alpha,
            nu,
            dim,
            forcing: Arc::new(move |x: &[f64]| vec![0.0; x.len()]),
            boundary: Arc::new(move |x| cavity_boundary(&bspec, x).expect("cavity boundary point off the boundary")),
            exact: None,
        })
    }

    /// Look up a shipped problem by config name, optionally overriding
    /// the coefficients.
    ///
    /// Names: `stokes2d`, `stokes3d` (alpha=0, nu=0.025),
    /// `general_stokes2d`, `general_stokes3d` (alpha=1, nu=1),
    /// `cavity2d`, `cavity3d` (alpha=0, nu=1).
    pub fn by_name(name: &str, alpha: Option<f64>, nu: Option<f64>) -> Result<Self> {
        let (dim, default_alpha, default_nu, cavity) = match name {
            "stokes2d" => (2, 0.0, 0.025, false),
            "stokes3d" => (3, 0.0, 0.025, false),
            "general_stokes2d" => (2, 1.0, 1.0, false),
            "general_stokes3d" => (3, 1.0, 1.0, false),
            "cavity2d" => (2, 0.0, 1.0, true),
            "cavity3d" => (3, 0.0, 1.0, true),
            other => {
                return Err(DgmError::Config(format!(
                    "unknown problem '{other}' (expected stokes2d, stokes3d, general_stokes2d, general_stokes3d, cavity2d, cavity3d)"
                )))
            }
        };
        let alpha = alpha.unwrap_or(default_alpha);
        let nu = nu.unwrap_or(default_nu);
        if cavity {
            StokesProblem::cavity(CavitySpec::unit_lid(dim), alpha, nu)
        } else {
            StokesProblem::manufactured(dim, alpha, nu, name)
        }
    }

    /// True if `x` lies on the boundary of the unit hypercube (within
    /// [`BOUNDARY_TOL`]).
    pub fn on_boundary(&self, x: &[f64]) -> bool {
        x.iter().any(|&c| c.abs() <= BOUNDARY_TOL || (c - 1.0).abs() <= BOUNDARY_TOL)
    }
}

fn check_coefficients(alpha: f64, nu: f64) -> Result<()> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(DgmError::Config(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(DgmError::Config(format!("nu must be finite and > 0, got {nu}")));
    }
    Ok(())
}

/// Lid-driven cavity boundary data: the top face (last coordinate = 1)
/// moves with `lid_velocity`; every other face is at rest.
#[derive(Clone, Debug, PartialEq)]
pub struct CavitySpec {
    pub dim: usize,
    pub lid_velocity: Vec<f64>,
}

impl CavitySpec {
    /// Unit tangential lid velocity along the first axis.
    pub fn unit_lid(dim: usize) -> Self {
        let mut lid = vec![0.0; dim];
        lid[0] = 1.0;
        CavitySpec { dim, lid_velocity: lid }
    }
}

/// Dirichlet data for the cavity. Corners on the lid take the lid value
/// (the velocity there is multi-valued in the idealized problem; the
/// sampler never emits corners, this tie-break only covers direct
/// queries).
pub fn cavity_boundary(spec: &CavitySpec, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != spec.dim {
        return Err(DgmError::shape("cavity_boundary point", spec.dim.to_string(), x.len().to_string()));
    }
    let on_face = x.iter().any(|&c| c.abs() <= BOUNDARY_TOL || (c - 1.0).abs() <= BOUNDARY_TOL);
    if !on_face {
        return Err(DgmError::Domain(format!("point {x:?} is not on the boundary")));
    }
    if (x[spec.dim - 1] - 1.0).abs() <= BOUNDARY_TOL {
        Ok(spec.lid_velocity.clone())
    } else {
        Ok(vec![0.0; spec.dim])
    }
}

/// Exact 2D velocity/pressure on the closed unit square:
/// `u1 = 2 pi sin^2(pi x) sin(pi y) cos(pi y)`,
/// `u2 = -2 pi sin(pi x) cos(pi x) sin^2(pi y)`,
/// `p = cos(pi x) cos(pi y)`.
pub fn exact_solution_2d(x: &[f64]) -> ([f64; 2], f64) {
    let (sx, cx) = (PI * x[0]).sin_cos();
    let (sy, cy) = (PI * x[1]).sin_cos();
    let u1 = 2.0 * PI * sx * sx * sy * cy;
    let u2 = -2.0 * PI * sx * cx * sy * sy;
    let p = cx * cy;
    ([u1, u2], p)
}

/// Exact 3D velocity/pressure on the closed unit cube; each component
/// is `sin^2(pi a) (sin(2 pi b) sin^2(pi c) - sin^2(pi b) sin(2 pi c))`
/// over the cyclic axis triples, with `p = sin(pi x) sin(pi y) cos(pi z)`.
pub fn exact_solution_3d(x: &[f64]) -> ([f64; 3], f64) {
    let g = |b: f64, c: f64| {
        (2.0 * PI * b).sin() * (PI * c).sin().powi(2) - (PI * b).sin().powi(2) * (2.0 * PI * c).sin()
    };
    let s2 = |a: f64| (PI * a).sin().powi(2);
    let u1 = s2(x[0]) * g(x[1], x[2]);
    let u2 = s2(x[1]) * g(x[2], x[0]);
    let u3 = s2(x[2]) * g(x[0], x[1]);
    let p = (PI * x[0]).sin() * (PI * x[1]).sin() * (PI * x[2]).cos();
    ([u1, u2, u3], p)
}

/// Closed-form Laplacian of the exact 2D velocity.
fn exact_laplacian_2d(x: &[f64]) -> [f64; 2] {
    let pi3 = PI * PI * PI;
    let s2x = (2.0 * PI * x[0]).sin();
    let c2x = (2.0 * PI * x[0]).cos();
    let s2y = (2.0 * PI * x[1]).sin();
    let c2y = (2.0 * PI * x[1]).cos();
    let sx2 = (PI * x[0]).sin().powi(2);
    let sy2 = (PI * x[1]).sin().powi(2);
    [
        2.0 * pi3 * c2x * s2y - 4.0 * pi3 * sx2 * s2y,
        4.0 * pi3 * s2x * sy2 - 2.0 * pi3 * s2x * c2y,
    ]
}

/// Closed-form pressure gradient of the exact 2D solution.
fn exact_pressure_grad_2d(x: &[f64]) -> [f64; 2] {
    let (sx, cx) = (PI * x[0]).sin_cos();
    let (sy, cy) = (PI * x[1]).sin_cos();
    [-PI * sx * cy, -PI * cx * sy]
}

/// Laplacian of `sin^2(pi a) g(b, c)` over one cyclic axis triple.
fn lap_component_3d(a: f64, b: f64, c: f64) -> f64 {
    let pi2 = PI * PI;
    let g = (2.0 * PI * b).sin() * (PI * c).sin().powi(2) - (PI * b).sin().powi(2) * (2.0 * PI * c).sin();
    let inner = -2.0 * (2.0 * PI * b).sin() * (PI * c).sin().powi(2)
        - (2.0 * PI * b).cos() * (2.0 * PI * c).sin()
        + (2.0 * PI * b).sin() * (2.0 * PI * c).cos()
        + 2.0 * (PI * b).sin().powi(2) * (2.0 * PI * c).sin();
    2.0 * pi2 * ((2.0 * PI * a).cos() * g + (PI * a).sin().powi(2) * inner)
}

fn exact_laplacian_3d(x: &[f64]) -> [f64; 3] {
    [
        lap_component_3d(x[0], x[1], x[2]),
        lap_component_3d(x[1], x[2], x[0]),
        lap_component_3d(x[2], x[0], x[1]),
    ]
}

fn exact_pressure_grad_3d(x: &[f64]) -> [f64; 3] {
    let (sx, cx) = (PI * x[0]).sin_cos();
    let (sy, cy) = (PI * x[1]).sin_cos();
    let (sz, cz) = (PI * x[2]).sin_cos();
    [PI * cx * sy * cz, PI * sx * cy * cz, -PI * sx * sy * sz]
}

/// Forcing that makes the manufactured solution solve the momentum
/// equation: `f = alpha u - nu lap(u) + grad p`, assembled from the
/// hand-differentiated closed forms above.
pub fn derive_forcing(dim: usize, alpha: f64, nu: f64) -> Result<VecFn> {
    match dim {
        2 => Ok(Arc::new(move |x: &[f64]| {
            let (u, _) = exact_solution_2d(x);
            let lap = exact_laplacian_2d(x);
            let gp = exact_pressure_grad_2d(x);
            (0..2).map(|i| alpha * u[i] - nu * lap[i] + gp[i]).collect()
        })),
        3 => Ok(Arc::new(move |x: &[f64]| {
            let (u, _) = exact_solution_3d(x);
            let lap = exact_laplacian_3d(x);
            let gp = exact_pressure_grad_3d(x);
            (0..3).map(|i| alpha * u[i] - nu * lap[i] + gp[i]).collect()
        })),
        d => Err(DgmError::Config(format!("derive_forcing supports d=2,3, got {d}"))),
    }
}

/// Momentum residual `alpha u - nu lap(u) + grad p - f(x)`, assembled
/// from a velocity block (value + derivative blocks) and the pressure
/// gradient.
pub fn apply_operator(
    problem: &StokesProblem,
    x: &[f64],
    u: &ExtendedBlock,
    p_grad: &[f64],
) -> Result<Vec<f64>> {
    let d = problem.dim;
    if u.rows() != d || u.cols() != d {
        return Err(DgmError::shape(
            "apply_operator velocity block",
            format!("{d}x{d}"),
            format!("{}x{}", u.rows(), u.cols()),
        ));
    }
    if p_grad.len() != d || x.len() != d {
        return Err(DgmError::shape(
            "apply_operator pressure gradient / point",
            d.to_string(),
            format!("{} / {}", p_grad.len(), x.len()),
        ));
    }
    let f = (problem.forcing)(x);
    Ok((0..d)
        .map(|i| problem.alpha * u.value[i] - problem.nu * u.laplacian(i) + p_grad[i] - f[i])
        .collect())
}
