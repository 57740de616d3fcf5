//! Admissible anisotropic integrands `F` on the unit sphere.
//!
//! Three analytic families are supported so that every derivative has a
//! closed form:
//!
//! * isotropic, `F = 1`;
//! * ellipsoidal, `F(x) = sqrt(x^T Q x)` for a symmetric positive definite `Q`;
//! * perturbed sphere, `F(z) = 1 + eps * p(z)` with the fixed cubic
//!   `p(x) = x3^3 + x1 x3^2 + x1 x2 x3`.
//!
//! Each family may carry an overall positive scale. `F` is always extended
//! one-homogeneously to `R^3`; the ambient gradient of that extension at a
//! unit `z` is the Wulff map `Phi(z) = F(z) z + DF(z)`, and its ambient
//! Hessian is `A_F(z) = D^2 F + F Id` on the tangent plane (and annihilates
//! `z`).

use alloc::format;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;
use crate::error::{Error, Result};
use crate::numeric::{tangent_basis, tangent_projector};
use crate::sphere::{fibonacci_lattice, sample_sphere};
use crate::{Mat3, Vec3};

const UNIT_TOL: f64 = 1e-10;

/// The analytic family of an [`Anisotropy`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Isotropic,
    Ellipsoidal(Mat3),
    PerturbedSphere(f64),
}

/// An admissible anisotropy. Immutable after construction.
#[derive(Clone, Copy, PartialEq)]
pub struct Anisotropy {
    family: Family,
    scale: f64,
}

impl fmt::Debug for Anisotropy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            Family::Isotropic => write!(f, "Isotropic(scale={})", self.scale),
            Family::Ellipsoidal(q) => write!(
                f,
                "Ellipsoidal(diag=({}, {}, {}), scale={})",
                q[(0, 0)],
                q[(1, 1)],
                q[(2, 2)],
                self.scale
            ),
            Family::PerturbedSphere(e) => write!(f, "PerturbedSphere(eps={}, scale={})", e, self.scale),
        }
    }
}

/// `F`, its sphere gradient `DF` and the operator `A_F` at a unit vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnisoEval {
    pub value: f64,
    /// Tangential gradient `DF(z)`, orthogonal to `z`.
    pub grad: Vec3,
    /// `A_F(z)` as a symmetric 3x3 matrix with `A_F z = 0`.
    pub a_f: Mat3,
}

impl AnisoEval {
    /// Wulff point `Phi(z) = F(z) z + DF(z)`.
    pub fn wulff(&self, z: &Vec3) -> Vec3 {
        z * self.value + self.grad
    }
}

/// Worst-case agreement between analytic derivatives and finite differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeReport {
    pub samples: usize,
    pub max_grad_error: f64,
    pub max_hessian_error: f64,
    pub worst_point: Vec3,
    /// Smallest tangential eigenvalue of `A_F` over the samples.
    pub min_a_f_eigenvalue: f64,
}

impl Anisotropy {
    pub fn isotropic() -> Self {
        Self { family: Family::Isotropic, scale: 1.0 }
    }

    /// `F(x) = sqrt(x^T Q x)`; `Q` must be symmetric positive definite.
    pub fn ellipsoidal(q: Mat3) -> Result<Self> {
        if (q - q.transpose()).abs().max() > 1e-12 * q.abs().max() {
            return Err(Error::NotSpd);
        }
        let eig = q.symmetric_eigenvalues();
        if eig.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::NotSpd);
        }
        Ok(Self { family: Family::Ellipsoidal(q), scale: 1.0 })
    }

    /// `F(z) = 1 + eps p(z)`. Rejected unless `F > 0` and `A_F` is positive
    /// definite at every sample of a dense lattice.
    pub fn perturbed_sphere(eps: f64) -> Result<Self> {
        if !eps.is_finite() {
            return Err(Error::InvalidArgument(format!("eps = {eps}")));
        }
        let a = Self { family: Family::PerturbedSphere(eps), scale: 1.0 };
        for z in fibonacci_lattice(4000) {
            let e = a.eval(&z);
            let lmin = tangent_eigenvalues(&e.a_f, &z).0;
            if !(e.value > 0.0) || !(lmin > 1e-9) {
                return Err(Error::Inadmissible(format!(
                    "eps = {eps}: F = {:.3e}, min eigenvalue of A_F = {:.3e} at {:?}",
                    e.value,
                    lmin,
                    [z.x, z.y, z.z]
                )));
            }
        }
        Ok(a)
    }

    /// `c F` for `c > 0`.
    pub fn scaled(self, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidArgument(format!("scale must be positive, got {c}")));
        }
        Ok(Self { scale: self.scale * c, ..self })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `F(z)` for unit `z` (not checked).
    pub fn value(&self, z: &Vec3) -> f64 {
        self.scale
            * match self.family {
                Family::Isotropic => 1.0,
                Family::Ellipsoidal(q) => z.dot(&(q * z)).sqrt(),
                Family::PerturbedSphere(eps) => 1.0 + eps * cubic(z),
            }
    }

    /// All derived quantities at unit `z` without the unit check.
    pub fn eval(&self, z: &Vec3) -> AnisoEval {
        let s = self.scale;
        match self.family {
            Family::Isotropic => AnisoEval {
                value: s,
                grad: Vec3::zeros(),
                a_f: tangent_projector(z) * s,
            },
            Family::Ellipsoidal(q) => {
                let qz = q * z;
                let f = z.dot(&qz).sqrt();
                let phi = qz / f;
                let a_f = q / f - qz * qz.transpose() / (f * f * f);
                AnisoEval {
                    value: s * f,
                    grad: (phi - z * f) * s,
                    a_f: symmetrize(&a_f) * s,
                }
            }
            Family::PerturbedSphere(eps) => {
                let p = cubic(z);
                let gp = cubic_gradient(z);
                let hp = cubic_hessian(z);
                let f = 1.0 + eps * p;
                let grad = (gp - z * (3.0 * p)) * eps;
                let hg = hp - (gp * z.transpose() + z * gp.transpose()) * 2.0 - Mat3::identity() * (2.0 * p)
                    + z * z.transpose() * (8.0 * p);
                let a_f = tangent_projector(z) + hg * eps;
                AnisoEval {
                    value: s * f,
                    grad: grad * s,
                    a_f: symmetrize(&a_f) * s,
                }
            }
        }
    }

    /// Checked evaluation of `(F, DF, A_F)` at a unit vector.
    pub fn eval_with_derivatives(&self, z: &Vec3) -> Result<AnisoEval> {
        check_unit(z)?;
        Ok(self.eval(z))
    }

    /// Wulff map `Phi(z) = F(z) z + DF(z)`.
    pub fn wulff_point(&self, z: &Vec3) -> Result<Vec3> {
        check_unit(z)?;
        Ok(self.wulff_unchecked(z))
    }

    pub(crate) fn wulff_unchecked(&self, z: &Vec3) -> Vec3 {
        self.eval(z).wulff(z)
    }

    /// Anisotropic normal `nu_F = Phi(nu)`.
    pub fn anisotropic_normal(&self, nu: &Vec3) -> Result<Vec3> {
        self.wulff_point(nu)
    }

    /// One-homogeneous extension `|x| F(x/|x|)`, with `F(0) = 0`.
    pub fn value_at(&self, x: &Vec3) -> f64 {
        let r = x.norm();
        if r == 0.0 {
            return 0.0;
        }
        r * self.value(&(x / r))
    }

    /// Ambient gradient of the extension, `Phi(x/|x|)`.
    pub fn gradient_at(&self, x: &Vec3) -> Vec3 {
        let z = x.normalize();
        self.wulff_unchecked(&z)
    }

    /// Ambient Hessian of the extension, `A_F(x/|x|) / |x|`.
    pub fn hessian_at(&self, x: &Vec3) -> Mat3 {
        let r = x.norm();
        self.eval(&(x / r)).a_f / r
    }

    /// Point of the Wulff shape in direction `d` (unit): returns `(z, rho)`
    /// with `Phi(z) = rho d`, `z` the outer normal there.
    pub fn gauss_for_direction(&self, d: &Vec3) -> Result<(Vec3, f64)> {
        match self.family {
            Family::Isotropic => Ok((*d, self.scale)),
            Family::Ellipsoidal(q) => {
                let qi = q.try_inverse().ok_or(Error::NotSpd)?;
                let w = qi * d;
                let rho = 1.0 / d.dot(&w).sqrt();
                Ok((w.normalize(), rho * self.scale))
            }
            Family::PerturbedSphere(_) => self.invert_direction(d),
        }
    }

    fn invert_direction(&self, d: &Vec3) -> Result<(Vec3, f64)> {
        // Newton on the sphere for the component of Phi(z) orthogonal to d.
        let (c1, c2) = tangent_basis(d);
        let mut z = *d;
        for _ in 0..60 {
            let e = self.eval(&z);
            let phi = e.wulff(&z);
            let r = nalgebra::Vector2::new(c1.dot(&phi), c2.dot(&phi));
            if r.norm() < 1e-15 * phi.norm() {
                break;
            }
            let (b1, b2) = tangent_basis(&z);
            let j = nalgebra::Matrix2::new(
                c1.dot(&(e.a_f * b1)),
                c1.dot(&(e.a_f * b2)),
                c2.dot(&(e.a_f * b1)),
                c2.dot(&(e.a_f * b2)),
            );
            let step = j
                .try_inverse()
                .ok_or_else(|| Error::Numerical("singular Jacobian in Wulff inversion".into()))?
                * r;
            z = (z - b1 * step.x - b2 * step.y).normalize();
        }
        let phi = self.wulff_unchecked(&z);
        let rho = phi.dot(d);
        let off = (phi - d * rho).norm();
        if !(rho > 0.0) || off > 1e-10 * rho {
            return Err(Error::Numerical(format!("Wulff inversion did not converge (residual {off:e})")));
        }
        Ok((z, rho))
    }

    /// Compare analytic `DF` and `A_F` against central finite differences of
    /// the one-homogeneous extension of `F`, using only values of `F` on the
    /// sphere. Fails with the worst point if either error exceeds `tol`.
    pub fn validate_derivatives(&self, tol: f64, samples: usize) -> Result<DerivativeReport> {
        let step = 1e-3;
        let pts = sample_sphere(samples.max(1000));
        let mut report = DerivativeReport {
            samples: pts.len(),
            max_grad_error: 0.0,
            max_hessian_error: 0.0,
            worst_point: pts[0],
            min_a_f_eigenvalue: f64::INFINITY,
        };
        let mut worst = 0.0;
        for z in &pts {
            let e = self.eval(z);
            let (g_fd, h_fd) = fd4_gradient_hessian(|x| self.extension_from_sphere(x), z, step);
            let p = tangent_projector(z);
            let ge = (p * g_fd - e.grad).amax();
            let he = (h_fd - e.a_f).amax();
            report.max_grad_error = report.max_grad_error.max(ge);
            report.max_hessian_error = report.max_hessian_error.max(he);
            if ge.max(he) > worst {
                worst = ge.max(he);
                report.worst_point = *z;
            }
            report.min_a_f_eigenvalue = report.min_a_f_eigenvalue.min(tangent_eigenvalues(&e.a_f, z).0);
        }
        if worst > tol || !worst.is_finite() {
            return Err(Error::DerivativeMismatch {
                error: worst,
                point: [report.worst_point.x, report.worst_point.y, report.worst_point.z],
            });
        }
        Ok(report)
    }

    /// `|x| F(x / |x|)` evaluated through [`Anisotropy::value`] only.
    fn extension_from_sphere(&self, x: &Vec3) -> f64 {
        let r = x.norm();
        r * self.value(&(x / r))
    }
}

/// Eigenvalues `(min, max)` of `a` restricted to the plane orthogonal to `z`.
pub fn tangent_eigenvalues(a: &Mat3, z: &Vec3) -> (f64, f64) {
    let (e1, e2) = tangent_basis(z);
    let p = e1.dot(&(a * e1));
    let q = e1.dot(&(a * e2));
    let r = e2.dot(&(a * e2));
    let m = 0.5 * (p + r);
    let d = (0.25 * (p - r) * (p - r) + q * q).sqrt();
    (m - d, m + d)
}

fn check_unit(z: &Vec3) -> Result<()> {
    let n = z.norm();
    if (n - 1.0).abs() > UNIT_TOL || !n.is_finite() {
        return Err(Error::NonUnit { norm: n });
    }
    Ok(())
}

fn symmetrize(a: &Mat3) -> Mat3 {
    (a + a.transpose()) * 0.5
}

fn cubic(x: &Vec3) -> f64 {
    x.z * x.z * x.z + x.x * x.z * x.z + x.x * x.y * x.z
}

fn cubic_gradient(x: &Vec3) -> Vec3 {
    Vec3::new(
        x.z * x.z + x.y * x.z,
        x.x * x.z,
        3.0 * x.z * x.z + 2.0 * x.x * x.z + x.x * x.y,
    )
}

fn cubic_hessian(x: &Vec3) -> Mat3 {
    Mat3::new(
        0.0,
        x.z,
        2.0 * x.z + x.y,
        x.z,
        0.0,
        x.x,
        2.0 * x.z + x.y,
        x.x,
        6.0 * x.z + 2.0 * x.x,
    )
}

/// Fourth-order central-difference gradient and Hessian. With a step near
/// `1e-3` both truncation and rounding errors stay around `1e-10`.
pub(crate) fn fd4_gradient_hessian<F: Fn(&Vec3) -> f64>(f: F, x: &Vec3, h: f64) -> (Vec3, Mat3) {
    const OFF: [f64; 4] = [-2.0, -1.0, 1.0, 2.0];
    const W1: [f64; 4] = [1.0, -8.0, 8.0, -1.0];
    let f0 = f(x);
    let mut g = Vec3::zeros();
    let mut hess = Mat3::zeros();
    for i in 0..3 {
        let mut ei = Vec3::zeros();
        ei[i] = h;
        let vals: [f64; 4] = core::array::from_fn(|a| f(&(x + ei * OFF[a])));
        g[i] = (0..4).map(|a| W1[a] * vals[a]).sum::<f64>() / (12.0 * h);
        hess[(i, i)] = (-vals[0] + 16.0 * vals[1] - 30.0 * f0 + 16.0 * vals[2] - vals[3]) / (12.0 * h * h);
        for j in (i + 1)..3 {
            let mut ej = Vec3::zeros();
            ej[j] = h;
            let mut acc = 0.0;
            for a in 0..4 {
                for b in 0..4 {
                    acc += W1[a] * W1[b] * f(&(x + ei * OFF[a] + ej * OFF[b]));
                }
            }
            let v = acc / (144.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    (g, hess)
}

#[cfg(test)]
/// Central-difference gradient and Hessian of a scalar function of `R^3`.
pub(crate) fn fd_gradient_hessian<F: Fn(&Vec3) -> f64>(f: F, x: &Vec3, h: f64) -> (Vec3, Mat3) {
    let mut g = Vec3::zeros();
    let mut hess = Mat3::zeros();
    let f0 = f(x);
    let unit = |i: usize| {
        let mut e = Vec3::zeros();
        e[i] = h;
        e
    };
    for i in 0..3 {
        let ei = unit(i);
        let fp = f(&(x + ei));
        let fm = f(&(x - ei));
        g[i] = (fp - fm) / (2.0 * h);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in (i + 1)..3 {
            let ej = unit(j);
            let v = (f(&(x + ei + ej)) - f(&(x + ei - ej)) - f(&(x - ei + ej)) + f(&(x - ei - ej))) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    (g, hess)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ellip() -> Anisotropy {
        Anisotropy::ellipsoidal(Mat3::from_diagonal(&Vec3::new(4.0, 1.0, 1.0))).unwrap()
    }

    fn all() -> [Anisotropy; 3] {
        [Anisotropy::isotropic(), ellip(), Anisotropy::perturbed_sphere(0.05).unwrap()]
    }

    /// Tangent eigenvalues of the finite-difference Hessian, the oracle for
    /// the closed forms.
    fn fd_tangent_eigs(a: &Anisotropy, z: &Vec3) -> (f64, f64) {
        let (_, h) = fd_gradient_hessian(|x| a.value_at(x), z, 1e-4);
        tangent_eigenvalues(&h, z)
    }

    #[test]
    fn isotropic_values() {
        let a = Anisotropy::isotropic();
        let z = Vec3::new(0.3, -0.4, 0.5).normalize();
        let e = a.eval_with_derivatives(&z).unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.grad, Vec3::zeros());
        assert_abs_diff_eq!(e.a_f, tangent_projector(&z), epsilon = 1e-15);
        assert_abs_diff_eq!(a.wulff_point(&z).unwrap(), z, epsilon = 1e-15);
        assert_abs_diff_eq!(a.anisotropic_normal(&z).unwrap(), z, epsilon = 1e-15);
    }

    #[test]
    fn ellipsoidal_at_long_axis() {
        let a = ellip();
        let e = a.eval_with_derivatives(&Vec3::x()).unwrap();
        assert_abs_diff_eq!(e.value, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.grad.norm(), 0.0, epsilon = 1e-15);
        let (lo, hi) = tangent_eigenvalues(&e.a_f, &Vec3::x());
        let (flo, fhi) = fd_tangent_eigs(&a, &Vec3::x());
        assert!((flo - 0.5).abs() < 1e-6 && (fhi - 0.5).abs() < 1e-6);
        assert_abs_diff_eq!(lo, flo, epsilon = 1e-6);
        assert_abs_diff_eq!(hi, fhi, epsilon = 1e-6);
        assert_abs_diff_eq!(e.a_f * Vec3::x(), Vec3::zeros(), epsilon = 1e-15);
    }

    #[test]
    fn ellipsoidal_at_short_axis() {
        let a = ellip();
        let e = a.eval(&Vec3::y());
        assert_abs_diff_eq!(e.value, 1.0, epsilon = 1e-15);
        let (lo, hi) = tangent_eigenvalues(&e.a_f, &Vec3::y());
        let (flo, fhi) = fd_tangent_eigs(&a, &Vec3::y());
        assert!((flo - 1.0).abs() < 1e-6 && (fhi - 4.0).abs() < 1e-6);
        assert_abs_diff_eq!(lo, flo, epsilon = 1e-6);
        assert_abs_diff_eq!(hi, fhi, epsilon = 1e-6);
    }

    #[test]
    fn ellipsoidal_wulff_points_lie_on_dual_ellipsoid() {
        let a = ellip();
        let qi = Mat3::from_diagonal(&Vec3::new(0.25, 1.0, 1.0));
        let p1 = a.wulff_point(&Vec3::x()).unwrap();
        assert_abs_diff_eq!(p1, Vec3::new(2.0, 0.0, 0.0), epsilon = 1e-15);
        let p2 = a.wulff_point(&Vec3::y()).unwrap();
        assert_abs_diff_eq!(p2, Vec3::new(0.0, 1.0, 0.0), epsilon = 1e-15);
        for z in fibonacci_lattice(200) {
            let p = a.wulff_point(&z).unwrap();
            assert_abs_diff_eq!(p.dot(&(qi * p)), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn anisotropic_normal_examples() {
        let a = ellip();
        assert_abs_diff_eq!(a.anisotropic_normal(&Vec3::z()).unwrap(), Vec3::z(), epsilon = 1e-15);
        let nu = Vec3::new(1.0, 1.0, 0.0).normalize();
        let nf = a.anisotropic_normal(&nu).unwrap();
        // Q nu / sqrt(nu^T Q nu) = (4, 1, 0) / sqrt(2) / sqrt(5/2).
        assert_abs_diff_eq!(nf, Vec3::new(4.0, 1.0, 0.0) / 5f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(nf.dot(&nu), a.value(&nu), epsilon = 1e-12);
    }

    #[test]
    fn non_unit_input_is_rejected() {
        let a = Anisotropy::isotropic();
        assert!(matches!(a.wulff_point(&Vec3::new(1.0, 1.0, 0.0)), Err(Error::NonUnit { .. })));
        assert!(a.eval_with_derivatives(&Vec3::new(0.0, 0.0, 1.001)).is_err());
    }

    #[test]
    fn non_spd_q_is_rejected() {
        let q = Mat3::from_diagonal(&Vec3::new(1.0, -1.0, 1.0));
        assert_eq!(Anisotropy::ellipsoidal(q), Err(Error::NotSpd));
        let mut q = Mat3::identity();
        q[(0, 1)] = 0.3;
        assert_eq!(Anisotropy::ellipsoidal(q), Err(Error::NotSpd));
    }

    #[test]
    fn large_perturbation_is_rejected() {
        assert!(Anisotropy::perturbed_sphere(0.05).is_ok());
        assert!(matches!(Anisotropy::perturbed_sphere(2.0), Err(Error::Inadmissible(_))));
    }

    #[test]
    fn derivative_validation_passes_for_all_families() {
        Anisotropy::isotropic().validate_derivatives(1e-8, 1000).unwrap();
        ellip().validate_derivatives(1e-6, 1000).unwrap();
        Anisotropy::perturbed_sphere(0.05).unwrap().validate_derivatives(1e-6, 1000).unwrap();
    }

    #[test]
    fn derivative_validation_reports_failure() {
        let err = ellip().validate_derivatives(1e-14, 1000).unwrap_err();
        assert!(matches!(err, Error::DerivativeMismatch { .. }));
    }

    #[test]
    fn direction_inversion_round_trips() {
        for a in all() {
            for d in fibonacci_lattice(100) {
                let (z, rho) = a.gauss_for_direction(&d).unwrap();
                let phi = a.wulff_point(&z).unwrap();
                assert_abs_diff_eq!(phi, d * rho, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn scaling_scales_everything() {
        let a = ellip();
        let b = a.scaled(2.5).unwrap();
        let z = Vec3::new(0.2, 0.7, -0.3).normalize();
        let (ea, eb) = (a.eval(&z), b.eval(&z));
        assert_abs_diff_eq!(eb.value, 2.5 * ea.value, epsilon = 1e-14);
        assert_abs_diff_eq!(eb.a_f, ea.a_f * 2.5, epsilon = 1e-14);
    }

    proptest! {
        #[test]
        fn one_homogeneity(x in -2.0f64..2.0, y in -2.0f64..2.0, z in -2.0f64..2.0, lam in 0.1f64..10.0) {
            let v = Vec3::new(x, y, z);
            prop_assume!(v.norm() > 1e-3);
            for a in all() {
                let lhs = a.value_at(&(v * lam));
                let rhs = lam * a.value_at(&v);
                prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
            }
        }

        #[test]
        fn euler_relation_and_annihilation(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            let v = Vec3::new(x, y, z);
            prop_assume!(v.norm() > 1e-3);
            let u = v.normalize();
            for a in all() {
                let e = a.eval(&u);
                prop_assert!((e.wulff(&u).dot(&u) - e.value).abs() < 1e-12);
                prop_assert!((e.a_f * u).norm() < 1e-12);
                prop_assert!((e.a_f - e.a_f.transpose()).amax() < 1e-14);
                prop_assert!(tangent_eigenvalues(&e.a_f, &u).0 > 0.0);
            }
        }
    }
}
