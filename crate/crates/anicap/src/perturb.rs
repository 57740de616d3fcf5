//! Seeded smooth perturbations of Wulff caps.

use anicap_core::shapes::{perturb_cap, WulffCap};
use anicap_core::sphere::fibonacci_lattice;
use anicap_core::{CapillaryMesh, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Quadratic polynomial on the sphere with coefficients drawn from `seed`,
/// scaled so that its largest absolute value over a dense lattice is `amp`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothField {
    coeffs: [f64; 10],
}

fn monomials(d: &Vec3) -> [f64; 10] {
    [1.0, d.x, d.y, d.z, d.x * d.x, d.y * d.y, d.z * d.z, d.x * d.y, d.y * d.z, d.z * d.x]
}

impl SmoothField {
    pub fn new(seed: u64, amp: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coeffs = [0.0; 10];
        for c in &mut coeffs {
            *c = rng.gen_range(-1.0..1.0);
        }
        let raw = SmoothField { coeffs };
        let top = fibonacci_lattice(4000).iter().map(|d| raw.value(d).abs()).fold(0.0, f64::max);
        SmoothField { coeffs: coeffs.map(|c| c * amp / top) }
    }

    pub fn value(&self, d: &Vec3) -> f64 {
        monomials(d).iter().zip(&self.coeffs).map(|(m, c)| m * c).sum()
    }
}

/// Radially perturb a Wulff cap by a relative amount of at most `amp`,
/// tapering the vertical motion near the wall so the boundary stays on it.
pub fn perturbed_cap(cap: &WulffCap, seed: u64, amp: f64) -> anicap_core::Result<CapillaryMesh> {
    if amp == 0.0 {
        return Ok(cap.mesh.clone());
    }
    let field = SmoothField::new(seed, amp);
    let height = cap.mesh.vertices().iter().map(|x| x.z).fold(0.0, f64::max);
    perturb_cap(&cap.mesh, &cap.center, 0.2 * height, |d| field.value(d))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_bounded() {
        let a = SmoothField::new(7, 0.05);
        assert_eq!(a, SmoothField::new(7, 0.05));
        assert_ne!(a, SmoothField::new(8, 0.05));
        let top = fibonacci_lattice(4000).iter().map(|d| a.value(d).abs()).fold(0.0, f64::max);
        assert!((top - 0.05).abs() < 1e-15);
    }
}
