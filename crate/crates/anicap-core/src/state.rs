//! Pointwise geometric state of a capillary mesh.

use alloc::vec::Vec;

use crate::anisotropy::Anisotropy;
use crate::config::HalfSpaceConfig;
use crate::error::{Error, Result};
use crate::jet::{refine_normal, shape_operator};
use crate::mesh::{CapillaryMesh, VertexKind};
use crate::{Mat3, Vec3, E3};

/// Smallest admissible `|<mu, E3>|` at a boundary vertex.
pub const TRANSVERSALITY_TOL: f64 = 1e-6;

/// Curvature data at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointGeometry {
    pub nu: Vec3,
    /// Shape operator, symmetric, annihilates `nu`.
    pub h: Mat3,
    pub mean: f64,
    pub f_value: f64,
    pub nu_f: Vec3,
    pub a_f: Mat3,
    /// `h_F = A_F h`.
    pub h_f: Mat3,
    /// `H_F = tr h_F`.
    pub hf_mean: f64,
    pub tr_hf2: f64,
    pub tr_af_h2: f64,
}

impl PointGeometry {
    pub fn new(aniso: &Anisotropy, nu: Vec3, h: Mat3) -> Self {
        let e = aniso.eval(&nu);
        let h_f = e.a_f * h;
        Self {
            nu,
            h,
            mean: h.trace(),
            f_value: e.value,
            nu_f: e.wulff(&nu),
            a_f: e.a_f,
            h_f,
            hf_mean: h_f.trace(),
            tr_hf2: (h_f * h_f).trace(),
            tr_af_h2: (e.a_f * h * h).trace(),
        }
    }

    /// `h_F(X, Y) = <A_F h X, Y>`.
    pub fn hf_form(&self, x: &Vec3, y: &Vec3) -> f64 {
        (self.h_f * x).dot(y)
    }

    /// `F(nu) + omega0 <E^F, nu>`.
    pub fn psi(&self, config: &HalfSpaceConfig) -> f64 {
        self.f_value + config.omega0 * config.ef.dot(&self.nu)
    }
}

/// Boundary frame and capillary data at a wall vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryGeometry {
    pub vertex: usize,
    /// Unit tangent of the boundary curve in loop direction.
    pub tangent: Vec3,
    /// Outward unit conormal.
    pub mu: Vec3,
    /// Unit normal of the boundary curve inside the wall.
    pub nubar: Vec3,
    pub nu_f: Vec3,
    /// `mu_F = F(nu) mu - <nu_F, mu> nu`.
    pub mu_f: Vec3,
    /// `<nu_F, -E3> - omega0`.
    pub capillary_residual: f64,
    /// `-(nu3 / mu3) h_F(mu, mu)`.
    pub q_f: f64,
    /// `(omega0 / mu3 + <nu_F, mu>) h_F(mu, mu) / F(nu)`.
    pub q_f_alt: f64,
    /// `h_F(tangent, mu)`, which vanishes on capillary surfaces.
    pub principal_residual: f64,
    /// Largest violation of the frame relations between `(nu, mu)` and
    /// `(Nbar, nubar)` and of `<mu_F, nubar> = -<nu_F, Nbar>`,
    /// `<mu_F, Nbar> = <nu_F, nubar>`.
    pub frame_residual: f64,
}

/// All pointwise data of a mesh.
#[derive(Debug, Clone)]
pub struct GeometricState {
    pub points: Vec<PointGeometry>,
    /// Wall vertices only, in loop order.
    pub boundary: Vec<BoundaryGeometry>,
    pub vertex_areas: Vec<f64>,
    pub positions: Vec<Vec3>,
    pub kinds: Vec<VertexKind>,
}

/// State with vertex normals from the mesh: angle-weighted normals refined
/// once by the local jet fit.
pub fn compute_state(mesh: &CapillaryMesh, aniso: &Anisotropy, config: &HalfSpaceConfig) -> Result<GeometricState> {
    let normals = estimate_normals(mesh)?;
    compute_state_with_normals(mesh, &normals, aniso, config)
}

/// Angle-weighted vertex normals refined once by the local jet fit, which
/// removes most of their one-sided bias at boundary vertices.
pub fn estimate_normals(mesh: &CapillaryMesh) -> Result<Vec<Vec3>> {
    mesh.vertex_normals()
        .iter()
        .enumerate()
        .map(|(v, n)| refine_normal(mesh, v, n))
        .collect()
}

/// State using the supplied unit vertex normals (e.g. exact normals of a
/// generated surface).
pub fn compute_state_with_normals(
    mesh: &CapillaryMesh,
    normals: &[Vec3],
    aniso: &Anisotropy,
    config: &HalfSpaceConfig,
) -> Result<GeometricState> {
    if normals.len() != mesh.num_vertices() {
        return Err(Error::InvalidArgument("one normal per vertex required".into()));
    }
    let mut points = Vec::with_capacity(mesh.num_vertices());
    for (v, nu) in normals.iter().enumerate() {
        let h = shape_operator(mesh, v, nu)?;
        points.push(PointGeometry::new(aniso, *nu, h));
    }
    let mut boundary = Vec::new();
    for lp in mesh.boundary_loops() {
        for &v in lp {
            if mesh.kind(v) != VertexKind::Wall {
                continue;
            }
            boundary.push(boundary_geometry(mesh, v, &points[v], config)?);
        }
    }
    Ok(GeometricState {
        points,
        boundary,
        vertex_areas: mesh.vertex_areas(),
        positions: mesh.vertices().to_vec(),
        kinds: mesh.kinds().to_vec(),
    })
}

fn boundary_geometry(mesh: &CapillaryMesh, v: usize, p: &PointGeometry, config: &HalfSpaceConfig) -> Result<BoundaryGeometry> {
    let (prev, next) = mesh.boundary_prev_next(v).expect("wall vertex lies on a loop");
    let x = mesh.vertices();
    let nu = p.nu;
    // The boundary curve lies in the wall and on the surface, so its tangent
    // is orthogonal to both E3 and nu.
    let mut t = E3.cross(&nu);
    let tn = t.norm();
    if tn < TRANSVERSALITY_TOL {
        return Err(Error::Transversality { vertex: v, mu3: tn });
    }
    t /= tn;
    if t.dot(&(x[next] - x[prev])) < 0.0 {
        t = -t;
    }
    let mu = t.cross(&nu);
    let (nu3, mu3) = (nu.z, mu.z);
    if mu3.abs() < TRANSVERSALITY_TOL {
        return Err(Error::Transversality { vertex: v, mu3 });
    }
    let nubar = mu * nu3 - nu * mu3;
    let nbar = -E3;
    let mu_f = mu * p.f_value - nu * p.nu_f.dot(&mu);
    let hmm = p.hf_form(&mu, &mu);
    let q_f = -(nu3 / mu3) * hmm;
    let q_f_alt = (config.omega0 / mu3 + p.nu_f.dot(&mu)) * hmm / p.f_value;
    let frame = [
        (mu - (nubar * -nu.dot(&nbar) + nbar * mu.dot(&nbar))).amax(),
        (nu - (nubar * mu.dot(&nbar) + nbar * nu.dot(&nbar))).amax(),
        (nubar - (mu * -nu.dot(&nbar) + nu * mu.dot(&nbar))).amax(),
        (mu_f.dot(&nubar) + p.nu_f.dot(&nbar)).abs(),
        (mu_f.dot(&nbar) - p.nu_f.dot(&nubar)).abs(),
    ];
    Ok(BoundaryGeometry {
        vertex: v,
        tangent: t,
        mu,
        nubar,
        nu_f: p.nu_f,
        mu_f,
        capillary_residual: p.nu_f.dot(&-E3) - config.omega0,
        q_f,
        q_f_alt,
        principal_residual: p.hf_form(&t, &mu),
        frame_residual: frame.iter().cloned().fold(0.0, f64::max),
    })
}

impl GeometricState {
    pub fn hf_values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.hf_mean).collect()
    }

    /// Largest `|capillary residual|` over wall vertices.
    pub fn max_capillary_residual(&self) -> f64 {
        self.boundary.iter().map(|b| b.capillary_residual.abs()).fold(0.0, f64::max)
    }

    /// Largest `|h_F(e, mu)|` over wall vertices.
    pub fn max_principal_residual(&self) -> f64 {
        self.boundary.iter().map(|b| b.principal_residual.abs()).fold(0.0, f64::max)
    }

    pub fn max_frame_residual(&self) -> f64 {
        self.boundary.iter().map(|b| b.frame_residual).fold(0.0, f64::max)
    }

    /// Area-weighted mean of `H_F` over interior vertices.
    pub fn mean_hf(&self) -> f64 {
        let mut s = 0.0;
        let mut a = 0.0;
        for (i, p) in self.points.iter().enumerate() {
            if self.kinds[i] == VertexKind::Interior {
                s += p.hf_mean * self.vertex_areas[i];
                a += self.vertex_areas[i];
            }
        }
        s / a
    }
}
