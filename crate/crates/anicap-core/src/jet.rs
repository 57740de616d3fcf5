//! Per-vertex shape operator by least-squares jet fitting.
//!
//! Neighbors are expressed in a tangent frame of the vertex normal and a
//! height function through the vertex is fitted: a quartic jet when enough
//! neighbors are available, a cubic or quadratic one otherwise. The shape operator is
//! read off the fitted second fundamental form and projected onto the tangent
//! plane of the given normal.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::mesh::CapillaryMesh;
use crate::numeric::{tangent_basis, tangent_projector};
#[allow(unused_imports)]
use num_traits::Float;
use crate::{Mat3, Vec3};

/// Minimum neighborhood sizes before the ring search stops growing.
const MIN_INTERIOR: usize = 30;
const MIN_BOUNDARY: usize = 30;
const MAX_RINGS: usize = 4;

/// Relative height below which a neighborhood is treated as exactly planar.
const PLANAR_TOL: f64 = 1e-12;

/// Shape operator `h` at vertex `v` as a symmetric 3x3 matrix annihilating
/// `normal`, with the convention `h(X, Y) = <D_X nu, Y>`.
pub fn shape_operator(mesh: &CapillaryMesh, v: usize, normal: &Vec3) -> Result<Mat3> {
    let pts = neighborhood(mesh, v);
    fit_shape_operator(&pts, normal).ok_or(Error::FitFailed(v))
}

/// Normal of the fitted jet at vertex `v`, starting from the estimate `normal`.
pub fn refine_normal(mesh: &CapillaryMesh, v: usize, normal: &Vec3) -> Result<Vec3> {
    let pts = neighborhood(mesh, v);
    fit_jet(&pts, normal).map(|j| j.0).ok_or(Error::FitFailed(v))
}

/// Offsets of the fitting neighborhood of `v`.
fn neighborhood(mesh: &CapillaryMesh, v: usize) -> Vec<Vec3> {
    let min = if mesh.is_boundary(v) { MIN_BOUNDARY } else { MIN_INTERIOR };
    let mut rings = 2;
    let mut nb = mesh.ring(v, rings);
    while nb.len() < min && rings < MAX_RINGS {
        rings += 1;
        nb = mesh.ring(v, rings);
    }
    let p = mesh.vertices()[v];
    nb.iter().map(|&i| mesh.vertices()[i] - p).collect()
}

/// Fit a height-function jet to offsets `pts` (relative to the base point)
/// in the frame of `normal`. Returns `None` when the fit is underdetermined.
pub fn fit_shape_operator(pts: &[Vec3], normal: &Vec3) -> Option<Mat3> {
    fit_jet(pts, normal).map(|j| j.1)
}

/// Fitted unit normal and shape operator (projected onto the tangent plane
/// of `normal`).
pub fn fit_jet(pts: &[Vec3], normal: &Vec3) -> Option<(Vec3, Mat3)> {
    let (e1, e2) = tangent_basis(normal);
    let scale = (pts.iter().map(|q| q.norm_squared()).sum::<f64>() / pts.len().max(1) as f64).sqrt();
    if !(scale > 0.0) || pts.len() < 5 {
        return None;
    }
    let local: Vec<(f64, f64, f64)> = pts
        .iter()
        .map(|q| (q.dot(&e1) / scale, q.dot(&e2) / scale, q.dot(normal) / scale))
        .collect();
    if local.iter().all(|l| l.2.abs() <= PLANAR_TOL) {
        return Some((*normal, Mat3::zeros()));
    }
    let ncol = match pts.len() {
        n if n >= 30 => 14,
        n if n >= 12 => 9,
        _ => 5,
    };
    let mut a = DMatrix::zeros(local.len(), ncol);
    let mut b = DVector::zeros(local.len());
    for (r, &(x, y, z)) in local.iter().enumerate() {
        let row = [
            x,
            y,
            0.5 * x * x,
            x * y,
            0.5 * y * y,
            x * x * x,
            x * x * y,
            x * y * y,
            y * y * y,
            x * x * x * x,
            x * x * x * y,
            x * x * y * y,
            x * y * y * y,
            y * y * y * y,
        ];
        for c in 0..ncol {
            a[(r, c)] = row[c];
        }
        b[r] = z;
    }
    let sol = a.svd(true, true).solve(&b, 1e-12).ok()?;
    // Undo the coordinate scaling: first derivatives are scale free, second
    // derivatives pick up 1 / scale.
    let grad = Vector2::new(sol[0], sol[1]);
    let hess = Matrix2::new(sol[2], sol[3], sol[3], sol[4]) / scale;
    let w = (1.0 + grad.norm_squared()).sqrt();
    let g = Matrix2::identity() + grad * grad.transpose();
    let gi = g.try_inverse()?;
    // Second fundamental form of the graph for the normal on the +normal side.
    let second = -hess / w;
    let s = gi * second * gi;
    let x1 = e1 + normal * grad.x;
    let x2 = e2 + normal * grad.y;
    let basis = [x1, x2];
    let mut h = Mat3::zeros();
    for i in 0..2 {
        for j in 0..2 {
            h += basis[i] * basis[j].transpose() * s[(i, j)];
        }
    }
    let fitted = (normal - e1 * grad.x - e2 * grad.y).normalize();
    let p = tangent_projector(normal);
    let h = p * h * p;
    Some((fitted, (h + h.transpose()) * 0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sample<F: Fn(f64, f64) -> f64>(f: F, r: f64) -> Vec<Vec3> {
        let mut out = Vec::new();
        for i in -3i32..=3 {
            for j in -3i32..=3 {
                if i == 0 && j == 0 {
                    continue;
                }
                let (x, y) = (r * i as f64 / 3.0, r * j as f64 / 3.0);
                out.push(Vec3::new(x, y, f(x, y)));
            }
        }
        out
    }

    #[test]
    fn paraboloid_curvature() {
        let pts = sample(|x, y| -(x * x + y * y) / 2.0, 0.05);
        let h = fit_shape_operator(&pts, &Vec3::z()).unwrap();
        assert_abs_diff_eq!(h[(0, 0)], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(h[(1, 1)], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(h[(0, 1)], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(h.column(2).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn sphere_cap_curvature_converges() {
        // Unit sphere seen from its north pole with the outward normal.
        let mut errs = Vec::new();
        for r in [0.2, 0.1, 0.05] {
            let pts = sample(|x, y| (1.0 - x * x - y * y).sqrt() - 1.0, r);
            let h = fit_shape_operator(&pts, &Vec3::z()).unwrap();
            errs.push((h[(0, 0)] - 1.0).abs().max((h[(1, 1)] - 1.0).abs()));
        }
        assert!(errs[2] < 1e-5, "{errs:?}");
        assert!(errs[0] / errs[2] > 8.0, "{errs:?}");
    }

    #[test]
    fn saddle_and_planes() {
        let pts = sample(|x, y| 0.5 * (x * x - y * y), 0.05);
        let h = fit_shape_operator(&pts, &Vec3::z()).unwrap();
        assert_abs_diff_eq!(h[(0, 0)], -1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(h[(1, 1)], 1.0, epsilon = 1e-9);
        let flat = sample(|x, _| 1e-18 * x, 1.0);
        assert_eq!(fit_shape_operator(&flat, &Vec3::z()).unwrap(), Mat3::zeros());
    }
}
