//! Half-space configuration: contact parameter and derived gauge constants.

use alloc::vec::Vec;

use crate::anisotropy::{tangent_eigenvalues, Anisotropy};
use crate::error::{Error, Result};
use crate::sphere::sample_sphere;
use crate::{Vec3, E3};

/// Contact parameter `omega0` and the constants derived from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfSpaceConfig {
    pub omega0: f64,
    /// The constant vector `E^F` with `<E^F, E3> = 1`.
    pub ef: Vec3,
    /// `min F(z) + omega0 <E^F, z>` over the samples.
    pub c1: f64,
    /// `max F(z) + omega0 <E^F, z>` over the samples.
    pub c2: f64,
    /// Largest eigenvalue of `A_F` over the samples.
    pub lambda: f64,
    pub samples: usize,
}

/// Open interval of admissible contact parameters, `(-F(E3), F(-E3))`.
pub fn omega0_bounds(aniso: &Anisotropy) -> (f64, f64) {
    (-aniso.value(&E3), aniso.value(&(-E3)))
}

/// `E^F`: `Phi(E3)/F(E3)` for `omega0 < 0`, `-Phi(-E3)/F(-E3)` otherwise.
pub fn ef_vector(aniso: &Anisotropy, omega0: f64) -> Vec3 {
    if omega0 < 0.0 {
        aniso.wulff_unchecked(&E3) / aniso.value(&E3)
    } else {
        -aniso.wulff_unchecked(&(-E3)) / aniso.value(&(-E3))
    }
}

/// Build the configuration for `aniso` and `omega0` from a deterministic
/// sphere sample of (at least) `sphere_samples` points.
pub fn make_config(aniso: &Anisotropy, omega0: f64, sphere_samples: usize) -> Result<HalfSpaceConfig> {
    if sphere_samples < 1000 {
        return Err(Error::InvalidArgument(alloc::format!(
            "sphere_samples must be at least 1000, got {sphere_samples}"
        )));
    }
    let (lower, upper) = omega0_bounds(aniso);
    if !(omega0 > lower && omega0 < upper) {
        return Err(Error::ContactParameter { omega0, lower, upper });
    }
    let ef = ef_vector(aniso, omega0);
    let pts: Vec<Vec3> = sample_sphere(sphere_samples);
    let mut c1 = f64::INFINITY;
    let mut c2 = f64::NEG_INFINITY;
    let mut lambda: f64 = 0.0;
    for z in &pts {
        let e = aniso.eval(z);
        let g = e.value + omega0 * ef.dot(z);
        c1 = c1.min(g);
        c2 = c2.max(g);
        lambda = lambda.max(tangent_eigenvalues(&e.a_f, z).1);
    }
    if !(c1 > 0.0) {
        return Err(Error::ContactParameter { omega0, lower, upper });
    }
    Ok(HalfSpaceConfig { omega0, ef, c1, c2, lambda, samples: pts.len() })
}

impl HalfSpaceConfig {
    /// `psi(nu) = F(nu) + omega0 <E^F, nu>`.
    pub fn psi(&self, aniso: &Anisotropy, nu: &Vec3) -> f64 {
        aniso.value(nu) + self.omega0 * self.ef.dot(nu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Mat3;
    use approx::assert_abs_diff_eq;

    #[test]
    fn isotropic_positive_omega() {
        let c = make_config(&Anisotropy::isotropic(), 0.5, 2000).unwrap();
        assert_eq!(c.ef, E3);
        assert_abs_diff_eq!(c.c1, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(c.c2, 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(c.lambda, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn isotropic_negative_omega() {
        let c = make_config(&Anisotropy::isotropic(), -0.4, 2000).unwrap();
        assert_eq!(c.ef, E3);
        assert_abs_diff_eq!(c.c1, 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(c.c2, 1.4, epsilon = 1e-15);
    }

    #[test]
    fn ellipsoidal_free_boundary() {
        let a = Anisotropy::ellipsoidal(Mat3::from_diagonal(&Vec3::new(4.0, 1.0, 1.0))).unwrap();
        let c = make_config(&a, 0.0, 2000).unwrap();
        // Dense-sampling oracle, independent of the lattice used by make_config.
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        let n = 400;
        for i in 0..=n {
            let th = core::f64::consts::PI * i as f64 / n as f64;
            for j in 0..(2 * n) {
                let ph = core::f64::consts::PI * j as f64 / n as f64;
                let z = Vec3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos());
                let v = a.value(&z);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        assert_abs_diff_eq!(c.c1, lo, epsilon = 1e-12);
        assert_abs_diff_eq!(c.c2, hi, epsilon = 1e-12);
        assert_abs_diff_eq!(c.c1, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.c2, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.lambda, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn ef_has_unit_height() {
        let a = Anisotropy::perturbed_sphere(0.05).unwrap();
        for w in [-0.5, -0.1, 0.0, 0.3] {
            let c = make_config(&a, w, 1000).unwrap();
            assert_abs_diff_eq!(c.ef.dot(&E3), 1.0, epsilon = 1e-12);
            assert!(c.c1 > 0.0 && c.c1 <= c.c2);
        }
    }

    #[test]
    fn inadmissible_omega_rejected() {
        let a = Anisotropy::isotropic();
        assert!(matches!(make_config(&a, 1.0, 1000), Err(Error::ContactParameter { .. })));
        assert!(matches!(make_config(&a, -1.2, 1000), Err(Error::ContactParameter { .. })));
        assert!(make_config(&a, 0.0, 10).is_err());
    }
}
