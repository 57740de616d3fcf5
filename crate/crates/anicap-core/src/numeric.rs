//! Small numeric helpers shared by the modules.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use crate::{Mat3, Vec3};

/// Pairwise (cascade) summation. The result depends only on the order of
/// `values`, never on any scheduling.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 16;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Pairwise sum of `f(i)` for `i in 0..n`.
pub fn pairwise_sum_by<F: FnMut(usize) -> f64>(n: usize, f: F) -> f64 {
    let v: Vec<f64> = (0..n).map(f).collect();
    pairwise_sum(&v)
}

/// Pairwise sum of vectors.
pub fn pairwise_sum_vec(values: &[Vec3]) -> Vec3 {
    const LEAF: usize = 16;
    if values.len() <= LEAF {
        return values.iter().fold(Vec3::zeros(), |a, b| a + b);
    }
    let mid = values.len() / 2;
    pairwise_sum_vec(&values[..mid]) + pairwise_sum_vec(&values[mid..])
}

/// Orthonormal tangent basis `(e1, e2)` of the plane orthogonal to unit `n`,
/// with `e1 x e2 = n`.
pub fn tangent_basis(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.6 {
        Vec3::new(1.0, 0.0, 0.0)
    } else if n.y.abs() < 0.6 {
        Vec3::new(0.0, 1.0, 0.0)
    } else {
        Vec3::new(0.0, 0.0, 1.0)
    };
    let e1 = (helper - n * n.dot(&helper)).normalize();
    let e2 = n.cross(&e1);
    (e1, e2)
}

/// Projector `I - n n^T` onto the plane orthogonal to unit `n`.
pub fn tangent_projector(n: &Vec3) -> Mat3 {
    Mat3::identity() - n * n.transpose()
}

/// Least-squares slope of `log(err)` against `log(1/spacing)`, i.e. the
/// observed order of convergence of `err ~ spacing^p`.
pub fn convergence_order(spacings: &[f64], errors: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = spacings
        .iter()
        .zip(errors)
        .map(|(h, e)| (h.ln(), e.abs().max(f64::MIN_POSITIVE).ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Bisection for a sign change of `f` on `[a, b]`.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64) -> Option<f64> {
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return Some(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let v: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 500500.0);
    }

    #[test]
    fn tangent_basis_is_right_handed() {
        for n in [Vec3::x(), Vec3::y(), Vec3::z(), Vec3::new(1.0, -2.0, 0.5).normalize()] {
            let (a, b) = tangent_basis(&n);
            assert!((a.cross(&b) - n).norm() < 1e-14);
            assert!(a.dot(&n).abs() < 1e-14);
        }
    }

    #[test]
    fn order_of_power_law_is_recovered() {
        let h = [0.1, 0.05, 0.025];
        let e: Vec<f64> = h.iter().map(|h| 3.0 * h * h * h).collect();
        assert!((convergence_order(&h, &e) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn bisect_finds_root() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
    }
}
