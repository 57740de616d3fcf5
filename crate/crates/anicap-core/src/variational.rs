//! Energy, wetted area, exact discrete first variation, the Minkowski
//! residual and the Robin coefficient `q_F`.

use alloc::vec;
use alloc::vec::Vec;

use crate::anisotropy::Anisotropy;
use crate::config::HalfSpaceConfig;
use crate::mesh::{CapillaryMesh, VertexKind};
use crate::numeric::{pairwise_sum, pairwise_sum_by};
use crate::state::GeometricState;
use crate::{Vec3, E3};

/// `E_F = int F(nu) dA + omega0 A_W` with its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    pub area_term: f64,
    pub wetting_term: f64,
    pub total: f64,
    pub volume: f64,
    pub wetted_area: f64,
}

/// Evaluate the discrete energy: `F` at each face normal times the face area,
/// plus `omega0` times the signed area enclosed by the wall edges.
pub fn energy(mesh: &CapillaryMesh, aniso: &Anisotropy, config: &HalfSpaceConfig) -> EnergyBreakdown {
    let area_term = pairwise_sum_by(mesh.num_faces(), |f| aniso.value_at(&mesh.face_vector_area(f)));
    let wetted_area = mesh.wetted_area();
    let wetting_term = config.omega0 * wetted_area;
    EnergyBreakdown {
        area_term,
        wetting_term,
        total: area_term + wetting_term,
        volume: mesh.enclosed_volume(),
        wetted_area,
    }
}

/// Gradient of the discrete energy with respect to vertex positions.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationField {
    /// Constrained gradient: wall vertices keep only the in-plane part and
    /// truncation vertices are fixed (zero).
    pub gradient: Vec<Vec3>,
    /// Gradient of the enclosed volume, constrained the same way.
    pub volume_gradient: Vec<Vec3>,
    /// Unit vertex normals used for the components below.
    pub normals: Vec<Vec3>,
    /// `<gradient, nu>` per vertex.
    pub normal_component: Vec<f64>,
    /// Discrete anisotropic mean curvature `<dE, nu> / <dV, nu>` per interior
    /// vertex (zero elsewhere).
    pub density: Vec<f64>,
    /// In-plane part of `gradient - lambda dV`, with `lambda` the mean
    /// interior density, divided by the boundary length element, per wall
    /// vertex (zero elsewhere).
    pub boundary_density: Vec<Vec3>,
}

/// Unconstrained gradients of energy and volume.
pub fn raw_gradients(mesh: &CapillaryMesh, aniso: &Anisotropy, config: &HalfSpaceConfig) -> (Vec<Vec3>, Vec<Vec3>) {
    let n = mesh.num_vertices();
    let x = mesh.vertices();
    let mut ge = vec![Vec3::zeros(); n];
    let mut gv = vec![Vec3::zeros(); n];
    for (f, t) in mesh.triangles().iter().enumerate() {
        let phi = aniso.gradient_at(&mesh.face_vector_area(f));
        for k in 0..3 {
            let (i, j, l) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
            ge[i] += (x[j] - x[l]).cross(&phi) * 0.5;
            gv[i] += x[j].cross(&x[l]) / 6.0;
        }
    }
    for (a, b) in mesh.wall_edges() {
        // d/dx_a of (x_a x x_b).E3 / 2 and likewise for x_b.
        ge[a] += x[b].cross(&E3) * (0.5 * config.omega0);
        ge[b] += E3.cross(&x[a]) * (0.5 * config.omega0);
    }
    (ge, gv)
}

/// Restrict a gradient to admissible directions of vertex `v`.
pub fn constrain(mesh: &CapillaryMesh, v: usize, g: &Vec3) -> Vec3 {
    match mesh.kind(v) {
        VertexKind::Interior => *g,
        VertexKind::Wall => Vec3::new(g.x, g.y, 0.0),
        VertexKind::Truncation => Vec3::zeros(),
    }
}

pub fn first_variation(mesh: &CapillaryMesh, aniso: &Anisotropy, config: &HalfSpaceConfig) -> VariationField {
    let normals = mesh.vertex_normals();
    first_variation_with_normals(mesh, aniso, config, &normals)
}

pub fn first_variation_with_normals(
    mesh: &CapillaryMesh,
    aniso: &Anisotropy,
    config: &HalfSpaceConfig,
    normals: &[Vec3],
) -> VariationField {
    let (ge, gv) = raw_gradients(mesh, aniso, config);
    let n = mesh.num_vertices();
    let x = mesh.vertices();
    let gradient: Vec<Vec3> = (0..n).map(|v| constrain(mesh, v, &ge[v])).collect();
    let volume_gradient: Vec<Vec3> = (0..n).map(|v| constrain(mesh, v, &gv[v])).collect();
    let normal_component: Vec<f64> = (0..n).map(|v| gradient[v].dot(&normals[v])).collect();
    let mut density = vec![0.0; n];
    let mut boundary_density = vec![Vec3::zeros(); n];
    for v in 0..n {
        if mesh.kind(v) == VertexKind::Interior {
            density[v] = normal_component[v] / gv[v].dot(&normals[v]);
        }
    }
    let mut field =
        VariationField { gradient, volume_gradient, normals: normals.to_vec(), normal_component, density, boundary_density: Vec::new() };
    let lambda = if field.density.iter().any(|d| *d != 0.0) { field.mean_density(mesh) } else { 0.0 };
    for v in 0..n {
        if mesh.kind(v) == VertexKind::Wall {
            let (p, q) = mesh.boundary_prev_next(v).expect("wall vertex on a loop");
            let len = 0.5 * ((x[q] - x[v]).norm() + (x[v] - x[p]).norm());
            boundary_density[v] = (field.gradient[v] - field.volume_gradient[v] * lambda) / len;
        }
    }
    field.boundary_density = boundary_density;
    field
}

impl VariationField {
    /// Volume multiplier `lambda` minimizing `|g - lambda dV|` over free vertices.
    pub fn volume_multiplier(&self) -> f64 {
        let num: Vec<f64> = self.gradient.iter().zip(&self.volume_gradient).map(|(g, v)| g.dot(v)).collect();
        let den: Vec<f64> = self.volume_gradient.iter().map(|v| v.norm_squared()).collect();
        pairwise_sum(&num) / pairwise_sum(&den)
    }

    /// Largest vertex norm of `g - lambda dV` with the optimal multiplier.
    pub fn projected_norm(&self) -> f64 {
        let lam = self.volume_multiplier();
        self.gradient
            .iter()
            .zip(&self.volume_gradient)
            .map(|(g, v)| (g - v * lam).norm())
            .fold(0.0, f64::max)
    }

    /// `sup |density - mean density|` over interior vertices, the mean being
    /// weighted by the volume gradient.
    pub fn camc_residual(&self, mesh: &CapillaryMesh) -> f64 {
        let mean = self.mean_density(mesh);
        (0..mesh.num_vertices())
            .filter(|&v| mesh.kind(v) == VertexKind::Interior)
            .map(|v| (self.density[v] - mean).abs())
            .fold(0.0, f64::max)
    }

    /// `sum <g, nu> / sum <dV, nu>` over interior vertices.
    pub fn mean_density(&self, mesh: &CapillaryMesh) -> f64 {
        let ids: Vec<usize> = (0..mesh.num_vertices()).filter(|&v| mesh.kind(v) == VertexKind::Interior).collect();
        let num = pairwise_sum_by(ids.len(), |k| self.normal_component[ids[k]]);
        let den = pairwise_sum_by(ids.len(), |k| self.volume_gradient[ids[k]].dot(&self.normals[ids[k]]));
        num / den
    }

    /// Largest `|boundary density|` over wall vertices.
    pub fn max_boundary_density(&self) -> f64 {
        self.boundary_density.iter().map(|b| b.norm()).fold(0.0, f64::max)
    }
}

/// The integrated Minkowski identity and its diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinkowskiReport {
    /// `int [2 (F(nu) + omega0 <E^F, nu>) - H_F <x, nu>] dA`.
    pub raw: f64,
    pub area: f64,
    pub normalized: f64,
    pub capillary_residual: f64,
    /// Set when the capillary residual exceeds the supplied tolerance, in
    /// which case the identity is not expected to hold.
    pub capillary_warning: bool,
}

/// Evaluate the Minkowski residual by vertex-area quadrature.
pub fn minkowski_residual(state: &GeometricState, config: &HalfSpaceConfig, tol_b: f64) -> MinkowskiReport {
    let vals: Vec<f64> = state
        .points
        .iter()
        .zip(&state.positions)
        .zip(&state.vertex_areas)
        .map(|((p, x), a)| (2.0 * p.psi(config) - p.hf_mean * x.dot(&p.nu)) * a)
        .collect();
    let raw = pairwise_sum(&vals);
    let area = pairwise_sum(&state.vertex_areas);
    let capillary_residual = state.max_capillary_residual();
    MinkowskiReport {
        raw,
        area,
        normalized: raw / area,
        capillary_residual,
        capillary_warning: capillary_residual > tol_b,
    }
}

/// Both closed forms of `q_F` per wall vertex and their largest discrepancy.
#[derive(Debug, Clone, PartialEq)]
pub struct QfReport {
    pub vertices: Vec<usize>,
    pub q_f: Vec<f64>,
    pub q_f_alt: Vec<f64>,
    pub max_discrepancy: f64,
}

pub fn boundary_qf(state: &GeometricState) -> QfReport {
    let vertices = state.boundary.iter().map(|b| b.vertex).collect();
    let q_f: Vec<f64> = state.boundary.iter().map(|b| b.q_f).collect();
    let q_f_alt: Vec<f64> = state.boundary.iter().map(|b| b.q_f_alt).collect();
    let max_discrepancy = q_f.iter().zip(&q_f_alt).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    QfReport { vertices, q_f, q_f_alt, max_discrepancy }
}
