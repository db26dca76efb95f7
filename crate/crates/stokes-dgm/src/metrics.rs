//! Error norms against exact solutions and evaluation grids.
//!
//! `err_l1` is the mean Euclidean deviation per point; `err_l2` the mean
//! squared deviation (no square root — deliberately). Pressure errors
//! are always computed after subtracting each field's own grid mean,
//! since the objective only sees the pressure gradient and fixes `p` up
//! to a constant.

use std::io::Write;

use crate::autodiff::{forward_extended, ExtendedBlock};
use crate::error::{DgmError, Result};
use crate::network::{predict, NetKind, NetworkParams};
use crate::parallel::{indexed_map, ExecMode};
use crate::problem::StokesProblem;
use crate::sampler::PointSet;

/// Mean Euclidean deviation `(1/N) sum |pred_i - exact_i|` over flat
/// `[N x dim]` fields.
pub fn err_l1(pred: &[f64], exact: &[f64], dim: usize) -> Result<f64> {
    check_fields(pred, exact, dim)?;
    let n = pred.len() / dim;
    let mut sum = 0.0;
    for i in 0..n {
        let mut mag2 = 0.0;
        for j in 0..dim {
            let d = pred[i * dim + j] - exact[i * dim + j];
            mag2 += d * d;
        }
        sum += mag2.sqrt();
    }
    Ok(sum / n as f64)
}

/// Mean squared Euclidean deviation `(1/N) sum |pred_i - exact_i|^2`.
pub fn err_l2(pred: &[f64], exact: &[f64], dim: usize) -> Result<f64> {
    check_fields(pred, exact, dim)?;
    let n = pred.len() / dim;
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..dim {
            let d = pred[i * dim + j] - exact[i * dim + j];
            sum += d * d;
        }
    }
    Ok(sum / n as f64)
}

fn check_fields(pred: &[f64], exact: &[f64], dim: usize) -> Result<()> {
    if dim == 0 || pred.len() % dim != 0 {
        return Err(DgmError::shape("field sample length", format!("multiple of {dim}"), pred.len().to_string()));
    }
    if pred.len() != exact.len() {
        return Err(DgmError::shape("field samples", pred.len().to_string(), exact.len().to_string()));
    }
    if pred.is_empty() {
        return Err(DgmError::EmptyBatch("field samples"));
    }
    Ok(())
}

/// A uniform evaluation grid: full-dimensional in 2D, or a 2D slice of
/// a 3D field (`slice = (axis, value)`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub dim: usize,
    /// Nodes per axis, endpoints included.
    pub resolution: usize,
    pub slice: Option<(usize, f64)>,
}

impl GridSpec {
    pub fn square_2d(resolution: usize) -> Self {
        GridSpec {
            dim: 2,
            resolution,
            slice: None,
        }
    }

    /// 3D field sliced at `axis = value` (e.g. the z = 0.5 midplane).
    pub fn slice_3d(resolution: usize, axis: usize, value: f64) -> Self {
        GridSpec {
            dim: 3,
            resolution,
            slice: Some((axis, value)),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return Err(DgmError::Config("grid resolution must be >= 2".into()));
        }
        match (self.dim, self.slice) {
            (2, None) => Ok(()),
            (2, Some(_)) => Err(DgmError::Config("2D grids take no slice".into())),
            (3, Some((axis, value))) => {
                if axis > 2 {
                    return Err(DgmError::Config(format!("slice axis must be 0..=2, got {axis}")));
                }
                if !(0.0..=1.0).contains(&value) {
                    return Err(DgmError::Domain(format!("slice coordinate {value} outside [0,1]")));
                }
                Ok(())
            }
            (3, None) => Ok(()),
            (d, _) => Err(DgmError::Config(format!("grids are 2D or 3D, got d={d}"))),
        }
    }

    /// Axes that vary on the grid.
    fn free_axes(&self) -> Vec<usize> {
        match self.slice {
            Some((axis, _)) => (0..self.dim).filter(|a| *a != axis).collect(),
            None => (0..self.dim).collect(),
        }
    }
}

/// Predicted and exact fields evaluated on a grid.
#[derive(Clone, Debug)]
pub struct EvalGrid {
    pub spec: GridSpec,
    pub nodes: PointSet,
    /// Flat `[N x dim]` predicted velocity.
    pub pred_u: Vec<f64>,
    pub pred_p: Vec<f64>,
    pub exact_u: Option<Vec<f64>>,
    pub exact_p: Option<Vec<f64>>,
}

impl EvalGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn err_l1_velocity(&self) -> Option<f64> {
        self.exact_u.as_ref().map(|ex| err_l1(&self.pred_u, ex, self.spec.dim).expect("matching fields"))
    }

    pub fn err_l2_velocity(&self) -> Option<f64> {
        self.exact_u.as_ref().map(|ex| err_l2(&self.pred_u, ex, self.spec.dim).expect("matching fields"))
    }

    /// Mean-squared pressure error after subtracting each field's grid
    /// mean (gauge fix).
    pub fn err_l2_pressure(&self) -> Option<f64> {
        self.exact_p.as_ref().map(|ex| {
            let n = self.pred_p.len() as f64;
            let mp = self.pred_p.iter().sum::<f64>() / n;
            let me = ex.iter().sum::<f64>() / n;
            self.pred_p
                .iter()
                .zip(ex)
                .map(|(p, e)| {
                    let d = (p - mp) - (e - me);
                    d * d
                })
                .sum::<f64>()
                / n
        })
    }

    /// CSV columns `x,y[,z],U1..Ud,P[,u1..ud,p,errU,errP]`; the exact
    /// and error columns appear only when an exact solution exists.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.spec.dim;
        let coords = ["x", "y", "z"];
        let mut header: Vec<String> = coords[..d].iter().map(|s| s.to_string()).collect();
        for i in 1..=d {
            header.push(format!("U{i}"));
        }
        header.push("P".into());
        let with_exact = self.exact_u.is_some();
        if with_exact {
            for i in 1..=d {
                header.push(format!("u{i}"));
            }
            header.push("p".into());
            header.push("errU".into());
            header.push("errP".into());
        }
        writeln!(w, "{}", header.join(","))?;

        let (mp, me) = if with_exact {
            let n = self.pred_p.len() as f64;
            (
                self.pred_p.iter().sum::<f64>() / n,
                self.exact_p.as_ref().unwrap().iter().sum::<f64>() / n,
            )
        } else {
            (0.0, 0.0)
        };
        for i in 0..self.len() {
            let mut row: Vec<String> = self.nodes.get(i).iter().map(|c| c.to_string()).collect();
            for j in 0..d {
                row.push(self.pred_u[i * d + j].to_string());
            }
            row.push(self.pred_p[i].to_string());
            if with_exact {
                let eu = self.exact_u.as_ref().unwrap();
                let ep = self.exact_p.as_ref().unwrap();
                for j in 0..d {
                    row.push(eu[i * d + j].to_string());
                }
                row.push(ep[i].to_string());
                let err_u = (0..d)
                    .map(|j| (self.pred_u[i * d + j] - eu[i * d + j]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let err_p = ((self.pred_p[i] - mp) - (ep[i] - me)).abs();
                row.push(err_u.to_string());
                row.push(err_p.to_string());
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn write_csv_file(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Fill a grid with network predictions (and exact values when the
/// problem has them).
pub fn eval_grid(params: &NetworkParams, problem: &StokesProblem, spec: &GridSpec) -> Result<EvalGrid> {
    spec.validate()?;
    if spec.dim != problem.dim {
        return Err(DgmError::shape("eval_grid dimension", problem.dim.to_string(), spec.dim.to_string()));
    }
    let nodes = grid_nodes(spec);
    let n = nodes.len();
    let d = spec.dim;

    let results = indexed_map(ExecMode::Auto, n, |i| predict(params, nodes.get(i)));
    let mut pred_u = vec![0.0; n * d];
    let mut pred_p = vec![0.0; n];
    for (i, r) in results.into_iter().enumerate() {
        let (u, p) = r?;
        pred_u[i * d..(i + 1) * d].copy_from_slice(&u);
        pred_p[i] = p;
    }
    let (exact_u, exact_p) = match &problem.exact {
        Some(exact) => {
            let mut eu = vec![0.0; n * d];
            let mut ep = vec![0.0; n];
            for i in 0..n {
                let (u, p) = exact(nodes.get(i));
                eu[i * d..(i + 1) * d].copy_from_slice(&u);
                ep[i] = p;
            }
            (Some(eu), Some(ep))
        }
        None => (None, None),
    };
    Ok(EvalGrid {
        spec: *spec,
        nodes,
        pred_u,
        pred_p,
        exact_u,
        exact_p,
    })
}

/// Uniform nodes covering `[0,1]` per free axis, endpoints included.
pub fn grid_nodes(spec: &GridSpec) -> PointSet {
    let res = spec.resolution;
    let free = spec.free_axes();
    let n = res.pow(free.len() as u32);
    let mut nodes = PointSet::with_capacity(spec.dim, n);
    let mut coord = vec![0.0; spec.dim];
    if let Some((axis, value)) = spec.slice {
        coord[axis] = value;
    }
    let mut idx = vec![0usize; free.len()];
    for _ in 0..n {
        for (slot, &axis) in idx.iter().zip(&free) {
            coord[axis] = *slot as f64 / (res - 1) as f64;
        }
        nodes.push(&coord);
        for slot in idx.iter_mut().rev() {
            *slot += 1;
            if *slot < res {
                break;
            }
            *slot = 0;
        }
    }
    nodes
}

/// Mean squared divergence of the velocity net over a strictly interior
/// uniform grid (`res^dim` nodes at `(i+1)/(res+1)`).
pub fn mean_squared_divergence(params: &NetworkParams, dim: usize, res: usize) -> Result<f64> {
    let n = res.pow(dim as u32);
    let vals = indexed_map(ExecMode::Auto, n, |flat| -> Result<f64> {
        let mut x = vec![0.0; dim];
        let mut rem = flat;
        for c in x.iter_mut() {
            *c = ((rem % res) + 1) as f64 / (res + 1) as f64;
            rem /= res;
        }
        let eval = forward_extended(params, NetKind::Velocity, &x)?;
        let div: f64 = (0..dim).map(|i| eval.output.jac_at(i, i)).sum();
        Ok(div * div)
    });
    let mut sum = 0.0;
    for v in vals {
        sum += v?;
    }
    Ok(sum / n as f64)
}

/// Velocity derivative block at a single point (helper for physics
/// probes: divergence, vorticity, profile extraction).
pub fn velocity_block(params: &NetworkParams, x: &[f64]) -> Result<ExtendedBlock> {
    Ok(forward_extended(params, NetKind::Velocity, x)?.output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Architecture;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_fields_have_zero_error() {
        let f = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(err_l1(&f, &f, 2).unwrap(), 0.0);
        assert_eq!(err_l2(&f, &f, 2).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_gives_c_and_c_squared() {
        // offset of magnitude c at every point: errL1 = c, errL2 = c^2
        let exact = vec![0.5, -0.2, 1.0, 0.0, -0.7, 0.3];
        let c = 0.25;
        let pred: Vec<f64> = exact
            .chunks(2)
            .flat_map(|p| vec![p[0] + c * 0.6, p[1] + c * 0.8])
            .collect();
        assert!((err_l1(&pred, &exact, 2).unwrap() - c).abs() < 1e-14);
        assert!((err_l2(&pred, &exact, 2).unwrap() - c * c).abs() < 1e-14);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(err_l1(&[1.0, 2.0], &[1.0], 1).is_err());
        assert!(err_l2(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 2).is_err());
        assert!(err_l1(&[], &[], 2).is_err());
    }

    #[test]
    fn jensen_inequality_between_the_norms() {
        // errL1^2 <= errL2 on random fields
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.gen_range(2..40);
            let pred: Vec<f64> = (0..n * 2).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let exact: Vec<f64> = (0..n * 2).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let e1 = err_l1(&pred, &exact, 2).unwrap();
            let e2 = err_l2(&pred, &exact, 2).unwrap();
            assert!(e1 * e1 <= e2 + 1e-12);
        }
    }

    #[test]
    fn grid_covers_unit_square_inclusively() {
        let spec = GridSpec::square_2d(11);
        let nodes = grid_nodes(&spec);
        assert_eq!(nodes.len(), 121);
        let first = nodes.get(0);
        let last = nodes.get(120);
        assert_eq!(first, &[0.0, 0.0]);
        assert_eq!(last, &[1.0, 1.0]);
    }

    #[test]
    fn slice_grid_pins_the_axis() {
        let spec = GridSpec::slice_3d(5, 2, 0.5);
        let nodes = grid_nodes(&spec);
        assert_eq!(nodes.len(), 25);
        assert!(nodes.iter().all(|p| p[2] == 0.5));
        assert!(nodes.iter().any(|p| p[0] == 1.0 && p[1] == 1.0));
    }

    #[test]
    fn zero_network_error_field_equals_exact_magnitude() {
        let problem = StokesProblem::by_name("stokes2d", None, None).unwrap();
        let arch = Architecture::arch_k(1, 2);
        let params = NetworkParams::zeros(&arch).unwrap();
        let grid = eval_grid(&params, &problem, &GridSpec::square_2d(21)).unwrap();
        let exact_mag2: f64 = grid.exact_u.as_ref().unwrap().iter().map(|v| v * v).sum::<f64>() / grid.len() as f64;
        assert!((grid.err_l2_velocity().unwrap() - exact_mag2).abs() < 1e-12);
    }

    #[test]
    fn grid_errors_match_direct_path_exactly() {
        let problem = StokesProblem::by_name("stokes2d", None, None).unwrap();
        let arch = Architecture::arch_k(1, 2);
        let params = NetworkParams::init(&arch, 3).unwrap();
        let grid = eval_grid(&params, &problem, &GridSpec::square_2d(13)).unwrap();
        let direct = err_l2(&grid.pred_u, grid.exact_u.as_ref().unwrap(), 2).unwrap();
        assert_eq!(grid.err_l2_velocity().unwrap(), direct);
    }

    #[test]
    fn pressure_error_is_gauge_invariant() {
        let problem = StokesProblem::by_name("stokes2d", None, None).unwrap();
        let arch = Architecture::arch_k(1, 2);
        let params = NetworkParams::init(&arch, 4).unwrap();
        let mut grid = eval_grid(&params, &problem, &GridSpec::square_2d(13)).unwrap();
        let before = grid.err_l2_pressure().unwrap();
        for p in grid.pred_p.iter_mut() {
            *p += 42.0;
        }
        let after = grid.err_l2_pressure().unwrap();
        assert!((before - after).abs() < 1e-10, "{before} vs {after}");
    }

    #[test]
    fn csv_row_count_matches_resolution() {
        let problem = StokesProblem::by_name("stokes2d", None, None).unwrap();
        let arch = Architecture::arch_k(1, 2);
        let params = NetworkParams::zeros(&arch).unwrap();
        let grid = eval_grid(&params, &problem, &GridSpec::square_2d(101)).unwrap();
        let mut buf = Vec::new();
        grid.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 101 * 101);
        assert!(text.starts_with("x,y,U1,U2,P,u1,u2,p,errU,errP"));
    }

    #[test]
    fn bad_slices_are_rejected() {
        let problem = StokesProblem::by_name("stokes3d", None, None).unwrap();
        let arch = Architecture::arch_k(1, 3);
        let params = NetworkParams::zeros(&arch).unwrap();
        assert!(eval_grid(&params, &problem, &GridSpec::slice_3d(5, 2, 1.5)).is_err());
        assert!(eval_grid(&params, &problem, &GridSpec::slice_3d(5, 7, 0.5)).is_err());
    }
}
