//! Deterministic point sets on the unit sphere.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use crate::Vec3;

/// Fibonacci lattice with `n` points, followed by the six axis directions
/// `+-E1, +-E2, +-E3`. The axes make extremal values of symmetric integrands
/// land exactly on a sample.
pub fn sample_sphere(n: usize) -> Vec<Vec3> {
    let mut out = fibonacci_lattice(n);
    for i in 0..3 {
        let mut e = Vec3::zeros();
        e[i] = 1.0;
        out.push(e);
        out.push(-e);
    }
    out
}

/// Spherical Fibonacci lattice of `n` points.
pub fn fibonacci_lattice(n: usize) -> Vec<Vec3> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_points_are_unit_and_reproducible() {
        let a = sample_sphere(1000);
        let b = sample_sphere(1000);
        assert_eq!(a.len(), 1006);
        for (p, q) in a.iter().zip(&b) {
            assert!((p.norm() - 1.0).abs() < 1e-14);
            assert_eq!(p, q);
        }
    }

    #[test]
    fn lattice_is_nearly_balanced() {
        let pts = fibonacci_lattice(2000);
        let c = pts.iter().fold(Vec3::zeros(), |a, b| a + b) / 2000.0;
        assert!(c.norm() < 1e-3);
    }
}
