//! Surface generators: truncated Wulff caps, flat capillary patches, flat
//! half-plane samples and a closed icosphere.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::anisotropy::Anisotropy;
use crate::config::HalfSpaceConfig;
use crate::error::{Error, Result};
use crate::mesh::CapillaryMesh;
use crate::numeric::bisect;
#[allow(unused_imports)]
use num_traits::Float;
use crate::{Vec3, E3};

/// Gauss-map parametrization of the cap `{omega0 E3 + Phi(z)}` above the wall.
///
/// `z(u, t) = (sin t cos u, sin t sin u, cos t)` with `t` in `[0, t_b(u)]`,
/// where `t_b(u)` puts the Wulff point exactly on the wall.
#[derive(Debug, Clone, Copy)]
pub struct WulffChart {
    pub aniso: Anisotropy,
    pub omega0: f64,
}

impl WulffChart {
    pub fn new(aniso: &Anisotropy, config: &HalfSpaceConfig) -> Self {
        Self { aniso: *aniso, omega0: config.omega0 }
    }

    pub fn center(&self) -> Vec3 {
        E3 * self.omega0
    }

    pub fn gauss(u: f64, t: f64) -> Vec3 {
        Vec3::new(t.sin() * u.cos(), t.sin() * u.sin(), t.cos())
    }

    /// Height above the wall of the Wulff point with normal `z(u, t)`.
    pub fn height(&self, u: f64, t: f64) -> f64 {
        self.aniso.wulff_unchecked(&Self::gauss(u, t)).z + self.omega0
    }

    /// Polar angle at which the meridian of azimuth `u` meets the wall.
    pub fn boundary_angle(&self, u: f64) -> Result<f64> {
        bisect(|t| self.height(u, t), 0.0, PI)
            .ok_or_else(|| Error::Numerical("truncation height not bracketed on meridian".into()))
    }

    /// Point and exact unit normal at chart coordinates `(u, s)`, `s` in `[0, 1]`.
    pub fn point(&self, u: f64, s: f64) -> Result<(Vec3, Vec3)> {
        let t = s * self.boundary_angle(u)?;
        let z = Self::gauss(u, t);
        let mut x = self.center() + self.aniso.wulff_unchecked(&z);
        if s == 1.0 {
            x.z = 0.0;
        }
        Ok((x, z))
    }
}

/// A truncated Wulff cap together with the exact normals at its vertices.
#[derive(Debug, Clone)]
pub struct WulffCap {
    pub mesh: CapillaryMesh,
    /// Exact outward unit normal (Gauss point) of every vertex.
    pub normals: Vec<Vec3>,
    pub center: Vec3,
    pub rings: usize,
}

/// Sample the truncated Wulff shape `{omega0 E3 + Phi(z) : height > 0}` with
/// `rings` rings of vertices between the apex and the wall. Rings are spaced
/// evenly in mean meridian arclength and vertices evenly in arclength along
/// each ring, so triangles stay close to equilateral. About `6 rings^2`
/// triangles result for a hemisphere.
pub fn build_truncated_wulff(aniso: &Anisotropy, config: &HalfSpaceConfig, rings: usize) -> Result<WulffCap> {
    if rings < 2 {
        return Err(Error::InvalidArgument("a Wulff cap needs at least two rings".into()));
    }
    let chart = WulffChart::new(aniso, config);
    const NU: usize = 64;
    const NS: usize = 256;
    let tb: Vec<f64> = (0..NU)
        .map(|i| chart.boundary_angle(2.0 * PI * i as f64 / NU as f64))
        .collect::<Result<_>>()?;
    // Mean meridian arclength as a function of s.
    let mut arc = vec![0.0; NS + 1];
    for (i, &t) in tb.iter().enumerate() {
        let u = 2.0 * PI * i as f64 / NU as f64;
        let mut prev = chart.aniso.wulff_unchecked(&WulffChart::gauss(u, 0.0));
        let mut acc = 0.0;
        for k in 1..=NS {
            let p = chart.aniso.wulff_unchecked(&WulffChart::gauss(u, t * k as f64 / NS as f64));
            acc += (p - prev).norm();
            prev = p;
            arc[k] += acc / NU as f64;
        }
    }
    let total = arc[NS];
    let spacing = total / rings as f64;
    let s_of_arc = |l: f64| -> f64 {
        let k = arc.partition_point(|&a| a < l).clamp(1, NS);
        let (a0, a1) = (arc[k - 1], arc[k]);
        ((k - 1) as f64 + (l - a0) / (a1 - a0)) / NS as f64
    };

    let center = chart.center();
    let mut vertices = Vec::new();
    let mut normals = Vec::new();
    let (apex, zn) = chart.point(0.0, 0.0)?;
    vertices.push(apex);
    normals.push(zn);
    let mut ring_ids: Vec<Vec<(f64, usize)>> = Vec::with_capacity(rings);
    for k in 1..=rings {
        let s = if k == rings { 1.0 } else { s_of_arc(spacing * k as f64) };
        // Ring curve sampled finely to place vertices at equal arclength.
        const FINE: usize = 720;
        let mut cum = vec![0.0; FINE + 1];
        let mut prev = chart.point(0.0, s)?.0;
        for j in 1..=FINE {
            let p = chart.point(2.0 * PI * j as f64 / FINE as f64, s)?.0;
            cum[j] = cum[j - 1] + (p - prev).norm();
            prev = p;
        }
        let n = ((cum[FINE] / spacing).round() as usize).max(6);
        let mut ids = Vec::with_capacity(n);
        for j in 0..n {
            let l = cum[FINE] * j as f64 / n as f64;
            let m = cum.partition_point(|&a| a < l).clamp(1, FINE);
            let u = 2.0 * PI * ((m - 1) as f64 + (l - cum[m - 1]) / (cum[m] - cum[m - 1])) / FINE as f64;
            let (x, z) = chart.point(u, s)?;
            ids.push((u / (2.0 * PI), vertices.len()));
            vertices.push(x);
            normals.push(z);
        }
        ring_ids.push(ids);
    }

    let mut tris = Vec::new();
    let first = &ring_ids[0];
    for j in 0..first.len() {
        tris.push([0, first[j].1, first[(j + 1) % first.len()].1]);
    }
    for k in 1..rings {
        zipper_closed(&ring_ids[k - 1], &ring_ids[k], &mut tris);
    }
    let mesh = CapillaryMesh::new(vertices, tris)?;
    Ok(WulffCap { mesh, normals, center, rings })
}

/// Triangulate the band between two closed rings given as `(fraction, id)`
/// with increasing fractions in `[0, 1)`; triangles are oriented so that the
/// normal is `(outer - inner) x (direction of increasing fraction)`.
fn zipper_closed(inner: &[(f64, usize)], outer: &[(f64, usize)], tris: &mut Vec<[usize; 3]>) {
    let (ni, no) = (inner.len(), outer.len());
    let (mut i, mut j) = (0usize, 0usize);
    let frac = |ring: &[(f64, usize)], k: usize| -> f64 {
        let n = ring.len();
        ring[k % n].0 + (k / n) as f64
    };
    while i < ni || j < no {
        let adv_inner = if i == ni {
            false
        } else if j == no {
            true
        } else {
            // Advance along whichever ring's next vertex comes first.
            frac(inner, i + 1) < frac(outer, j + 1)
        };
        if adv_inner {
            tris.push([inner[i % ni].1, outer[j % no].1, inner[(i + 1) % ni].1]);
            i += 1;
        } else {
            tris.push([inner[i % ni].1, outer[j % no].1, outer[(j + 1) % no].1]);
            j += 1;
        }
    }
}

/// Open-arc version of [`zipper_closed`] for fractions in `[0, 1]` with both
/// endpoints present.
fn zipper_open(inner: &[(f64, usize)], outer: &[(f64, usize)], tris: &mut Vec<[usize; 3]>) {
    let (ni, no) = (inner.len(), outer.len());
    let (mut i, mut j) = (0usize, 0usize);
    while i + 1 < ni || j + 1 < no {
        let adv_inner = if i + 1 == ni {
            false
        } else if j + 1 == no {
            true
        } else {
            inner[i + 1].0 < outer[j + 1].0
        };
        if adv_inner {
            tris.push([inner[i].1, outer[j].1, inner[i + 1].1]);
            i += 1;
        } else {
            tris.push([inner[i].1, outer[j].1, outer[j + 1].1]);
            j += 1;
        }
    }
}

/// A planar half-disk `{a w + b m : b >= 0, a^2 + b^2 <= R^2}` through the
/// origin, with `w = E2` along the wall and `m = (cos beta, 0, sin beta)`
/// rising from it. The unit normal is `nu = w x m = (sin beta, 0, -cos beta)`.
#[derive(Debug, Clone)]
pub struct FlatPatch {
    pub mesh: CapillaryMesh,
    pub beta: f64,
    pub normal: Vec3,
    /// In-plane unit vector along the wall.
    pub wall_dir: Vec3,
    /// In-plane unit vector rising from the wall.
    pub rise_dir: Vec3,
    /// Planar coordinates `(a, b)` of every vertex.
    pub coords: Vec<(f64, f64)>,
}

/// Tilt angle `beta` of the capillary plane: `-<Phi(nu), E3> = omega0` with
/// `nu = (sin beta, 0, -cos beta)`.
pub fn capillary_tilt(aniso: &Anisotropy, omega0: f64) -> Result<f64> {
    let g = |b: f64| -aniso.wulff_unchecked(&Vec3::new(b.sin(), 0.0, -b.cos())).z - omega0;
    bisect(g, 1e-9, PI - 1e-9).ok_or_else(|| Error::Numerical("no capillary tilt in (0, pi)".into()))
}

/// Flat capillary half-disk of radius `radius` with ring radii `radii`
/// (increasing, last equal to `radius`) and an arc point count chosen so that
/// arc spacing matches the local ring spacing.
pub fn flat_patch_with_radii(beta: f64, radii: &[f64]) -> Result<FlatPatch> {
    if radii.is_empty() || radii.windows(2).any(|w| !(w[1] > w[0])) || !(radii[0] > 0.0) {
        return Err(Error::InvalidArgument("ring radii must be positive and increasing".into()));
    }
    if !(beta > 0.0 && beta < PI) {
        return Err(Error::InvalidArgument("tilt must lie in (0, pi)".into()));
    }
    let w = Vec3::new(0.0, 1.0, 0.0);
    let m = Vec3::new(beta.cos(), 0.0, beta.sin());
    let nu = w.cross(&m);
    let mut coords = vec![(0.0, 0.0)];
    let mut rings: Vec<Vec<(f64, usize)>> = vec![vec![(0.0, 0), (1.0, 0)]];
    for (k, &r) in radii.iter().enumerate() {
        let dr = if k == 0 { r } else { r - radii[k - 1] };
        let n = ((PI * r / dr).round() as usize).max(2);
        let mut ids = Vec::with_capacity(n + 1);
        for j in 0..=n {
            let th = PI * j as f64 / n as f64;
            let (c, s) = if j == 0 {
                (1.0, 0.0)
            } else if j == n {
                (-1.0, 0.0)
            } else {
                (th.cos(), th.sin())
            };
            ids.push((j as f64 / n as f64, coords.len()));
            coords.push((r * c, r * s));
        }
        rings.push(ids);
    }
    let mut tris = Vec::new();
    // Fan around the center, which sits on the wall.
    let first = &rings[1];
    for j in 0..first.len() - 1 {
        tris.push([0, first[j].1, first[j + 1].1]);
    }
    for k in 2..rings.len() {
        zipper_open(&rings[k - 1], &rings[k], &mut tris);
    }
    let vertices: Vec<Vec3> = coords.iter().map(|&(a, b)| w * a + m * b).collect();
    let mesh = CapillaryMesh::new(vertices, tris)?;
    Ok(FlatPatch { mesh, beta, normal: nu, wall_dir: w, rise_dir: m, coords })
}

/// Flat capillary half-disk for `aniso` and `config` with `rings` uniformly
/// spaced rings.
pub fn flat_capillary_patch(aniso: &Anisotropy, config: &HalfSpaceConfig, radius: f64, rings: usize) -> Result<FlatPatch> {
    let beta = capillary_tilt(aniso, config.omega0)?;
    let radii: Vec<f64> = (1..=rings).map(|k| radius * k as f64 / rings as f64).collect();
    flat_patch_with_radii(beta, &radii)
}

/// Radii `exp(k / per_efold)` from `r_min` to `r_max` together with a uniform
/// core inside `r_min`. Every power `e^(j / per_efold)` in range is a ring.
pub fn log_graded_radii(r_min: f64, r_max: f64, per_efold: usize) -> Vec<f64> {
    let d = 1.0 / per_efold as f64;
    let k0 = (r_min.ln() / d).ceil() as i64;
    let k1 = (r_max.ln() / d).floor() as i64;
    let first = (k0 as f64 * d).exp();
    let mut out = Vec::new();
    // Uniform rings inside the first graded ring with spacing matching it.
    let h = first * (1.0 - (-d).exp());
    let n_core = ((first / h).round() as usize).max(1);
    for j in 1..n_core {
        out.push(first * j as f64 / n_core as f64);
    }
    for k in k0..=k1 {
        out.push((k as f64 * d).exp());
    }
    out
}

/// Closed icosphere of radius 1 after `level` subdivisions.
pub fn icosphere(level: usize) -> Result<CapillaryMesh> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ];
    let v: Vec<Vec3> = raw.iter().map(|&(x, y, z)| Vec3::new(x, y, z).normalize()).collect();
    let f = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let mut mesh = CapillaryMesh::new(v, f)?;
    for _ in 0..level {
        mesh = mesh.refine(|p, _| p.normalize())?;
    }
    Ok(mesh)
}

/// Smooth step from 0 at `x <= 0` to 1 at `x >= 1`.
pub fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
}

/// Radially perturb a cap about `center`: interior vertices move to
/// `center + (1 + eta) (x - center)`, with the vertical part of the
/// displacement tapered to zero within `taper` of the wall; wall vertices move
/// horizontally only, so the boundary stays on the wall.
pub fn perturb_cap<E: Fn(&Vec3) -> f64>(mesh: &CapillaryMesh, center: &Vec3, taper: f64, eta: E) -> Result<CapillaryMesh> {
    let verts = mesh
        .vertices()
        .iter()
        .map(|x| {
            let r = x - center;
            let dir = r.normalize();
            let mut d = r * eta(&dir);
            let tau = if taper > 0.0 { smoothstep(x.z / taper) } else { 1.0 };
            d.z *= tau;
            x + d
        })
        .collect();
    mesh.with_vertices(verts)
}
