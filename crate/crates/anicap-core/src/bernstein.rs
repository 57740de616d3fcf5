//! Area growth, the weight `psi` and logarithmic cutoffs on large compact
//! samples of unbounded capillary surfaces.
//!
//! [`probe`] reports both sides of
//! `int f^2 tr(h_F^2) dA <= C2^2 / C1 * Lambda * int |grad f|^2 dA`
//! for the logarithmic cutoff `f` between `r1` and `r2`, together with the
//! ratios `Area(Sigma cap B_r) / r^2`.

use alloc::vec::Vec;

use crate::config::HalfSpaceConfig;
use crate::error::{Error, Result};
use crate::mesh::{CapillaryMesh, VertexKind};
use crate::numeric::{pairwise_sum, tangent_basis};
use crate::state::GeometricState;
#[allow(unused_imports)]
use num_traits::Float;
use crate::Vec3;

/// Relative slack on `C1 <= psi <= C2`, whose bounds come from a finite
/// sphere sample.
pub const PSI_BOUND_TOL: f64 = 1e-2;

/// `psi = F(nu) + omega0 <E^F, nu>` per vertex, checked against the bounds
/// of the configuration.
pub fn psi_field(state: &GeometricState, config: &HalfSpaceConfig) -> Result<Vec<f64>> {
    let psi: Vec<f64> = state.points.iter().map(|p| p.psi(config)).collect();
    let (lo, hi) = (config.c1 * (1.0 - PSI_BOUND_TOL), config.c2 * (1.0 + PSI_BOUND_TOL));
    if let Some((v, x)) = psi.iter().enumerate().find(|(_, x)| !(**x >= lo && **x <= hi)) {
        return Err(Error::Precondition(alloc::format!(
            "psi = {x} at vertex {v} outside [{}, {}]",
            config.c1,
            config.c2
        )));
    }
    Ok(psi)
}

/// `1` on `|x| <= r1`, `ln(r2 / |x|) / ln(r2 / r1)` on the annulus, `0`
/// outside `B_r2`.
pub fn log_cutoff(mesh: &CapillaryMesh, r1: f64, r2: f64) -> Result<Vec<f64>> {
    if !(r1 > 0.0 && r2 > r1 && r2.is_finite()) {
        return Err(Error::InvalidArgument(alloc::format!("cutoff radii must satisfy 0 < r1 < r2, got {r1}, {r2}")));
    }
    let span = (r2 / r1).ln();
    Ok(mesh
        .vertices()
        .iter()
        .map(|x| {
            let r = x.norm();
            if r <= r1 {
                1.0
            } else if r >= r2 {
                0.0
            } else {
                (r2 / r).ln() / span
            }
        })
        .collect())
}

/// `int |grad f|^2 dA` of the piecewise-linear interpolant of `f`.
pub fn dirichlet_energy(mesh: &CapillaryMesh, f: &[f64]) -> f64 {
    let x = mesh.vertices();
    let terms: Vec<f64> = mesh
        .triangles()
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let nv = mesh.face_vector_area(k);
            let area = nv.norm();
            let n = nv / area;
            let g = (0..3).fold(Vec3::zeros(), |s, i| {
                s + n.cross(&(x[t[(i + 2) % 3]] - x[t[(i + 1) % 3]])) * (f[t[i]] / (2.0 * area))
            });
            g.norm_squared() * area
        })
        .collect();
    pairwise_sum(&terms)
}

/// Area of `mesh` inside the ball `B_r(0)`, clipping every triangle exactly.
pub fn area_in_ball(mesh: &CapillaryMesh, r: f64) -> f64 {
    let x = mesh.vertices();
    let terms: Vec<f64> = mesh.triangles().iter().map(|t| triangle_ball_area(&x[t[0]], &x[t[1]], &x[t[2]], r)).collect();
    pairwise_sum(&terms)
}

/// Area of triangle `abc` inside `B_r(0)`: the ball cuts the triangle's
/// plane in a disk, which is intersected with the triangle in that plane.
pub fn triangle_ball_area(a: &Vec3, b: &Vec3, c: &Vec3, r: f64) -> f64 {
    let nv = (b - a).cross(&(c - a));
    let area2 = nv.norm();
    if area2 == 0.0 {
        return 0.0;
    }
    let n = nv / area2;
    let dist = a.dot(&n);
    let rho2 = r * r - dist * dist;
    if rho2 <= 0.0 {
        return 0.0;
    }
    let rho = rho2.sqrt();
    let o = n * dist;
    let (e1, e2) = tangent_basis(&n);
    let p = |v: &Vec3| [(v - o).dot(&e1), (v - o).dot(&e2)];
    let (pa, pb, pc) = (p(a), p(b), p(c));
    (edge_disk_area(pa, pb, rho) + edge_disk_area(pb, pc, rho) + edge_disk_area(pc, pa, rho)).abs()
}

fn cross2(u: [f64; 2], v: [f64; 2]) -> f64 {
    u[0] * v[1] - u[1] * v[0]
}

fn dot2(u: [f64; 2], v: [f64; 2]) -> f64 {
    u[0] * v[0] + u[1] * v[1]
}

/// Signed area of the disk `|y| <= r` intersected with the triangle `(0, p, q)`.
fn edge_disk_area(p: [f64; 2], q: [f64; 2], r: f64) -> f64 {
    let sector = |u: [f64; 2], v: [f64; 2]| 0.5 * r * r * cross2(u, v).atan2(dot2(u, v));
    let tri = |u: [f64; 2], v: [f64; 2]| 0.5 * cross2(u, v);
    let d = [q[0] - p[0], q[1] - p[1]];
    let at = |t: f64| [p[0] + t * d[0], p[1] + t * d[1]];
    let (pin, qin) = (dot2(p, p) <= r * r, dot2(q, q) <= r * r);
    if pin && qin {
        return tri(p, q);
    }
    let a = dot2(d, d);
    if a == 0.0 {
        return 0.0;
    }
    let b = dot2(p, d);
    let c = dot2(p, p) - r * r;
    let disc = b * b - a * c;
    if disc <= 0.0 {
        return sector(p, q);
    }
    let s = disc.sqrt();
    let (t1, t2) = ((-b - s) / a, (-b + s) / a);
    if pin {
        let m = at(t2.min(1.0));
        return tri(p, m) + sector(m, q);
    }
    if qin {
        let m = at(t1.max(0.0));
        return sector(p, m) + tri(m, q);
    }
    if t2 <= 0.0 || t1 >= 1.0 {
        return sector(p, q);
    }
    let (m1, m2) = (at(t1), at(t2));
    sector(p, m1) + tri(m1, m2) + sector(m2, q)
}

/// Radius up to which the sample is complete: the distance to the nearest
/// truncation vertex, or infinity for samples without truncation.
pub fn sampled_extent(mesh: &CapillaryMesh) -> f64 {
    mesh.vertices()
        .iter()
        .zip(mesh.kinds())
        .filter(|(_, k)| **k == VertexKind::Truncation)
        .map(|(x, _)| x.norm())
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    pub radii: Vec<f64>,
    /// `Area(Sigma cap B_r) / r^2` per radius.
    pub ratios: Vec<f64>,
    /// Largest ratio, an estimate of the growth constant `C`.
    pub growth_constant: f64,
    pub r1: f64,
    pub r2: f64,
    /// `int f^2 tr(h_F^2) dA`.
    pub flatness: f64,
    /// `int |grad f|^2 dA`.
    pub dirichlet: f64,
    /// `C2^2 / C1 * Lambda * int |grad f|^2 dA`.
    pub cutoff_bound: f64,
}

/// Growth ratios at `radii` and both sides of the cutoff inequality for the
/// logarithmic cutoff between `cutoff.0` and `cutoff.1`.
pub fn probe(
    mesh: &CapillaryMesh,
    state: &GeometricState,
    config: &HalfSpaceConfig,
    radii: &[f64],
    cutoff: (f64, f64),
) -> Result<GrowthReport> {
    if state.points.len() != mesh.num_vertices() {
        return Err(Error::InvalidArgument("state does not belong to the mesh".into()));
    }
    let extent = sampled_extent(mesh);
    if let Some(r) = radii.iter().chain([&cutoff.1]).find(|r| !(**r > 0.0 && **r < extent)) {
        return Err(Error::InvalidArgument(alloc::format!("radius {r} outside the sampled extent {extent}")));
    }
    let (r1, r2) = cutoff;
    let f = log_cutoff(mesh, r1, r2)?;
    let ratios: Vec<f64> = radii.iter().map(|&r| area_in_ball(mesh, r) / (r * r)).collect();
    let growth_constant = ratios.iter().cloned().fold(0.0, f64::max);
    let terms: Vec<f64> = (0..mesh.num_vertices())
        .map(|v| f[v] * f[v] * state.points[v].tr_hf2 * state.vertex_areas[v])
        .collect();
    let flatness = pairwise_sum(&terms);
    let dirichlet = dirichlet_energy(mesh, &f);
    let cutoff_bound = config.c2 * config.c2 / config.c1 * config.lambda * dirichlet;
    Ok(GrowthReport { radii: radii.to_vec(), ratios, growth_constant, r1, r2, flatness, dirichlet, cutoff_bound })
}
