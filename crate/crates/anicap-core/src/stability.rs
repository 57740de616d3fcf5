//! Second-variation form, its constrained spectrum, the Minkowski test
//! function and the rigidity gap.
//!
//! The form is assembled with piecewise-linear elements over the vertices
//! that may move (truncation vertices carry a homogeneous Dirichlet
//! condition). Spectra are computed for `K = M^{-1/2} Q M^{-1/2}` with the
//! lumped mass `M`: densely for small meshes, otherwise by shift-invert block
//! subspace iteration on an envelope Cholesky factor.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::anisotropy::Anisotropy;
use crate::config::HalfSpaceConfig;
use crate::error::{Error, Result};
use crate::linalg::{orthonormalize, rcm_order, EnvelopeCholesky, SplitMix, SymBuilder, SymSparse};
use crate::mesh::CapillaryMesh;
use crate::numeric::pairwise_sum;
use crate::state::GeometricState;
#[allow(unused_imports)]
use num_traits::Float;

/// Largest problem handed to the dense eigensolver.
pub const DENSE_LIMIT: usize = 800;

/// Slope `C` of the spectral band `epsilon = C h` (`h` the mean edge length),
/// calibrated on the isotropic hemisphere: there the translation
/// eigenvalues stay below `0.25 h` from 300 to 12k faces.
pub const EPSILON_SLOPE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintMode {
    /// Mean-zero normal speeds (volume-preserving variations).
    Weak,
    /// All normal speeds.
    Strong,
}

/// `Q(f, f) = int <A_F grad f, grad f> - tr(A_F h^2) f^2 dA - oint q_F f^2 ds`
/// and the lumped mass, over the free vertices.
#[derive(Debug, Clone)]
pub struct StabilityForm {
    pub q: SymSparse,
    pub stiffness: SymSparse,
    /// Lumped `-tr(A_F h^2)` times the vertex area.
    pub potential: Vec<f64>,
    /// Trapezoid weights of `-q_F` on wall edges.
    pub robin: Vec<f64>,
    pub mass: Vec<f64>,
    /// Mesh vertex of every degree of freedom.
    pub dofs: Vec<usize>,
    pub num_vertices: usize,
    pub mode: ConstraintMode,
}

/// Assemble the second-variation form of `mesh` with curvature data `state`.
pub fn assemble(mesh: &CapillaryMesh, state: &GeometricState, aniso: &Anisotropy, mode: ConstraintMode) -> Result<StabilityForm> {
    let n = mesh.num_vertices();
    if state.points.len() != n {
        return Err(Error::InvalidArgument("state does not belong to the mesh".into()));
    }
    let dofs = mesh.free_vertices();
    let mut index = vec![usize::MAX; n];
    for (k, &v) in dofs.iter().enumerate() {
        index[v] = k;
    }
    let x = mesh.vertices();
    let mut k = SymBuilder::new(dofs.len());
    for (f, t) in mesh.triangles().iter().enumerate() {
        let nv = mesh.face_vector_area(f);
        let area = nv.norm();
        let nrm = nv / area;
        let a_f = aniso.eval(&nrm).a_f;
        // grad phi_i = n x (x_l - x_j) / (2 area) for the edge opposite i.
        let g: [_; 3] = core::array::from_fn(|i| nrm.cross(&(x[t[(i + 2) % 3]] - x[t[(i + 1) % 3]])) / (2.0 * area));
        for i in 0..3 {
            for j in 0..3 {
                let (a, b) = (index[t[i]], index[t[j]]);
                if a != usize::MAX && b != usize::MAX && a <= b {
                    let v = area * (a_f * g[i]).dot(&g[j]);
                    k.add(a, b, v);
                }
            }
        }
    }
    let stiffness = k.build();
    let areas = mesh.vertex_areas();
    let potential: Vec<f64> = dofs.iter().map(|&v| -state.points[v].tr_af_h2 * areas[v]).collect();
    let mut q_f = vec![0.0; n];
    for b in &state.boundary {
        q_f[b.vertex] = b.q_f;
    }
    let mut robin = vec![0.0; dofs.len()];
    for (a, b) in mesh.wall_edges() {
        let len = (x[b] - x[a]).norm();
        for v in [a, b] {
            if index[v] != usize::MAX {
                robin[index[v]] -= 0.5 * len * q_f[v];
            }
        }
    }
    let mut qb = SymBuilder::new(dofs.len());
    for (i, row) in (0..dofs.len()).map(|i| (i, stiffness.row(i))) {
        for &(j, v) in row {
            if i <= j {
                qb.add(i, j, v);
            }
        }
        qb.add(i, i, potential[i] + robin[i]);
    }
    let q = qb.build();
    let mass: Vec<f64> = dofs.iter().map(|&v| areas[v]).collect();
    let finite = q.triplets().iter().all(|t| t.2.is_finite()) && mass.iter().all(|m| m.is_finite() && *m > 0.0);
    if !finite {
        return Err(Error::Numerical("non-finite or non-positive entries in the stability form".into()));
    }
    Ok(StabilityForm { q, stiffness, potential, robin, mass, dofs, num_vertices: n, mode })
}

impl StabilityForm {
    pub fn dim(&self) -> usize {
        self.dofs.len()
    }

    /// Values of a per-vertex field on the degrees of freedom.
    pub fn restrict(&self, field: &[f64]) -> Vec<f64> {
        self.dofs.iter().map(|&v| field[v]).collect()
    }

    /// Per-vertex field with zeros on constrained vertices.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_vertices];
        for (k, &v) in self.dofs.iter().enumerate() {
            out[v] = x[k];
        }
        out
    }

    /// `Q(f, f)` of a per-vertex field.
    pub fn value(&self, field: &[f64]) -> f64 {
        let x = self.restrict(field);
        self.q.form(&x, &x)
    }

    /// `int f^2 dA` with the lumped mass.
    pub fn mass_value(&self, field: &[f64]) -> f64 {
        let w: Vec<f64> = self.dofs.iter().zip(&self.mass).map(|(&v, m)| m * field[v] * field[v]).collect();
        pairwise_sum(&w)
    }

    /// Field minus its area-weighted mean (on the degrees of freedom).
    pub fn mean_free(&self, field: &[f64]) -> Vec<f64> {
        let x = self.restrict(field);
        let num: Vec<f64> = x.iter().zip(&self.mass).map(|(a, m)| a * m).collect();
        let mean = pairwise_sum(&num) / pairwise_sum(&self.mass);
        self.expand(&x.iter().map(|a| a - mean).collect::<Vec<_>>())
    }
}

/// Spectral band `C h` for `mesh`.
pub fn mesh_epsilon(mesh: &CapillaryMesh) -> f64 {
    EPSILON_SLOPE * mesh.mean_edge_length()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Stable,
    /// The eigenfunction of the lowest eigenvalue, per vertex.
    Unstable { witness: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Solver {
    Dense,
    ShiftInvert { shift: f64, iterations: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiDiagnostics {
    /// `int phi dA`.
    pub integral: f64,
    pub area: f64,
    /// `Q(phi, phi)`.
    pub q_phi: f64,
    pub rigidity_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub mode: ConstraintMode,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Per-vertex eigenfunctions normalized to `int f^2 dA = 1`.
    pub eigenvectors: Vec<Vec<f64>>,
    /// `|Q v - lambda M v| / |v|`, with the constraint multiplier removed in
    /// weak mode.
    pub residuals: Vec<f64>,
    pub epsilon: f64,
    pub verdict: Verdict,
    pub solver: Solver,
    pub phi: Option<PhiDiagnostics>,
}

impl StabilityReport {
    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Number of eigenvalues in `[-epsilon, epsilon]`.
    pub fn near_zero(&self) -> usize {
        self.eigenvalues.iter().filter(|l| l.abs() <= self.epsilon).count()
    }
}

/// Lowest `k` eigenpairs of `Q f = lambda M f` under the form's constraint
/// mode, classified against the band `epsilon`.
pub fn spectrum(form: &StabilityForm, k: usize, epsilon: f64) -> Result<StabilityReport> {
    if k == 0 {
        return Err(Error::InvalidArgument("at least one eigenpair must be requested".into()));
    }
    let n = form.dim();
    let avail = if form.mode == ConstraintMode::Weak { n.saturating_sub(1) } else { n };
    if avail == 0 {
        return Err(Error::InvalidArgument("the form has no free degrees of freedom".into()));
    }
    let k = k.min(avail);
    assert!(form.mass.iter().all(|m| *m > 0.0), "lumped mass must be positive");
    let d: Vec<f64> = form.mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let kmat = form.q.scale_sym(&d);
    let u = if form.mode == ConstraintMode::Weak {
        let u = DVector::from_iterator(n, form.mass.iter().map(|m| m.sqrt()));
        let nrm = u.norm();
        Some(u / nrm)
    } else {
        None
    };
    let (vals, vecs, solver) = if n <= DENSE_LIMIT {
        let (a, b) = dense_lowest(&kmat, u.as_ref(), k);
        (a, b, Solver::Dense)
    } else {
        shift_invert(&kmat, u.as_ref(), k)?
    };
    let mut eigenvectors = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(k);
    for (j, lam) in vals.iter().enumerate() {
        let y = vecs.column(j);
        let f: Vec<f64> = (0..n).map(|i| y[i] * d[i]).collect();
        residuals.push(form_residual(form, &f, *lam));
        eigenvectors.push(form.expand(&f));
    }
    let verdict = if vals[0] < -epsilon {
        Verdict::Unstable { witness: eigenvectors[0].clone() }
    } else {
        Verdict::Stable
    };
    Ok(StabilityReport {
        mode: form.mode,
        eigenvalues: vals,
        eigenvectors,
        residuals,
        epsilon,
        verdict,
        solver,
        phi: None,
    })
}

/// `|Q f - lambda M f| / |f|` with, in weak mode, the component along the
/// constraint direction `M 1` removed.
fn form_residual(form: &StabilityForm, f: &[f64], lam: f64) -> f64 {
    let qf = form.q.mul_vec(f);
    let mut r: Vec<f64> = qf.iter().zip(f).zip(&form.mass).map(|((q, x), m)| q - lam * m * x).collect();
    if form.mode == ConstraintMode::Weak {
        // Pi = I - M 1 1^T / (1^T M 1).
        let s = pairwise_sum(&r) / pairwise_sum(&form.mass);
        for (ri, m) in r.iter_mut().zip(&form.mass) {
            *ri -= m * s;
        }
    }
    let nr = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nf = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    nr / nf
}

/// Dense route: eigen-decomposition of `K`, or of `K` deflated by a
/// Householder reflection that maps the constraint vector to `e_0`.
fn dense_lowest(kmat: &SymSparse, u: Option<&DVector<f64>>, k: usize) -> (Vec<f64>, DMatrix<f64>) {
    let mut a = kmat.to_dense();
    let n = a.nrows();
    match u {
        None => {
            let eig = SymmetricEigen::new(a);
            sorted_pairs(&eig.eigenvalues, &eig.eigenvectors, k)
        }
        Some(u) => {
            let mut w = u.clone();
            w[0] -= if u[0] >= 0.0 { -1.0 } else { 1.0 };
            // H u = -sign(u0) e0 with H = I - 2 w w^T / |w|^2.
            let wn = w.norm();
            let w = w / wn;
            let kw = &a * &w;
            let wkw = w.dot(&kw);
            a -= &w * kw.transpose() * 2.0;
            a -= &kw * w.transpose() * 2.0;
            a += &w * w.transpose() * (4.0 * wkw);
            let sub = a.view((1, 1), (n - 1, n - 1)).clone_owned();
            let sub = (&sub + sub.transpose()) * 0.5;
            let eig = SymmetricEigen::new(sub);
            let (vals, y) = sorted_pairs(&eig.eigenvalues, &eig.eigenvectors, k);
            let mut x = DMatrix::zeros(n, y.ncols());
            for j in 0..y.ncols() {
                let mut z = DVector::zeros(n);
                z.rows_mut(1, n - 1).copy_from(&y.column(j));
                let c = w.dot(&z);
                z.axpy(-2.0 * c, &w, 1.0);
                x.set_column(j, &z);
            }
            (vals, x)
        }
    }
}

fn sorted_pairs(vals: &DVector<f64>, vecs: &DMatrix<f64>, k: usize) -> (Vec<f64>, DMatrix<f64>) {
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let idx = &idx[..k];
    let v: Vec<f64> = idx.iter().map(|&i| vals[i]).collect();
    let mut x = DMatrix::zeros(vecs.nrows(), k);
    for (j, &i) in idx.iter().enumerate() {
        x.set_column(j, &vecs.column(i));
    }
    (v, x)
}

/// Shift-invert block subspace iteration with Rayleigh-Ritz on `K`.
fn shift_invert(kmat: &SymSparse, u: Option<&DVector<f64>>, k: usize) -> Result<(Vec<f64>, DMatrix<f64>, Solver)> {
    let n = kmat.dim();
    let perm = rcm_order(kmat);
    // Smallest shift of the form 2^j that makes K + shift I positive definite,
    // then doubled once more to keep the factor well conditioned.
    let mut shift = 0.25;
    let chol = loop {
        match EnvelopeCholesky::factor(kmat, 2.0 * shift, None, &perm) {
            Ok(c) => break c,
            Err(_) if shift < 1e12 => shift *= 2.0,
            Err(e) => return Err(e),
        }
    };
    let shift = 2.0 * shift;
    let p = (2 * k + 10).min(n - usize::from(u.is_some()));
    let solve_u = u.map(|u| {
        let s = DVector::from_vec(chol.solve(u.as_slice()));
        let den = u.dot(&s);
        (s, den)
    });
    let apply = |x: &DVector<f64>| -> DVector<f64> {
        let mut z = DVector::from_vec(chol.solve(x.as_slice()));
        if let (Some(u), Some((s, den))) = (u, solve_u.as_ref()) {
            let c = u.dot(&z) / den;
            z.axpy(-c, s, 1.0);
        }
        z
    };
    let mut rng = SplitMix(0x5EED);
    let mut x = DMatrix::from_fn(n, p, |_, _| rng.next_f64() - 0.5);
    orthonormalize(&mut x, u);
    let mut vals = Vec::new();
    for it in 1..=1000 {
        let mut y = DMatrix::zeros(n, p);
        for j in 0..p {
            y.set_column(j, &apply(&x.column(j).clone_owned()));
        }
        orthonormalize(&mut y, u);
        let ky = mul_cols(kmat, &y);
        let h = y.transpose() * &ky;
        let h = (&h + h.transpose()) * 0.5;
        let eig = SymmetricEigen::new(h);
        let (v, c) = sorted_pairs(&eig.eigenvalues, &eig.eigenvectors, p);
        x = &y * &c;
        let kx = &ky * &c;
        vals = v;
        let mut worst: f64 = 0.0;
        for j in 0..k {
            let mut r = kx.column(j) - x.column(j) * vals[j];
            if let Some(u) = u {
                let c = u.dot(&r);
                r.axpy(-c, u, 1.0);
            }
            worst = worst.max(r.norm());
        }
        if worst <= 1e-11 * (1.0 + vals[k - 1].abs()) {
            let xs = x.columns(0, k).clone_owned();
            return Ok((vals[..k].to_vec(), xs, Solver::ShiftInvert { shift, iterations: it }));
        }
    }
    let _ = vals;
    Err(Error::Numerical("subspace iteration did not converge".into()))
}

fn mul_cols(a: &SymSparse, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for j in 0..x.ncols() {
        let col: Vec<f64> = x.column(j).iter().cloned().collect();
        let y = a.mul_vec(&col);
        out.set_column(j, &DVector::from_vec(y));
    }
    out
}

/// `phi = 2 (F(nu) + omega0 <E^F, nu>) - H_F <x, nu>` per vertex.
pub fn minkowski_test_function(state: &GeometricState, config: &HalfSpaceConfig) -> Vec<f64> {
    state
        .points
        .iter()
        .zip(&state.positions)
        .map(|(p, x)| 2.0 * p.psi(config) - p.hf_mean * x.dot(&p.nu))
        .collect()
}

/// `int (F(nu) + omega0 <E^F, nu>) (2 tr h_F^2 - H_F^2) dA`.
pub fn rigidity_gap(state: &GeometricState, config: &HalfSpaceConfig) -> f64 {
    let vals: Vec<f64> = state
        .points
        .iter()
        .zip(&state.vertex_areas)
        .map(|(p, a)| p.psi(config) * (2.0 * p.tr_hf2 - p.hf_mean * p.hf_mean) * a)
        .collect();
    pairwise_sum(&vals)
}

/// `int phi dA`, `Q(phi, phi)` and the rigidity gap.
pub fn phi_diagnostics(form: &StabilityForm, state: &GeometricState, config: &HalfSpaceConfig) -> PhiDiagnostics {
    let phi = minkowski_test_function(state, config);
    let w: Vec<f64> = phi.iter().zip(&state.vertex_areas).map(|(p, a)| p * a).collect();
    PhiDiagnostics {
        integral: pairwise_sum(&w),
        area: pairwise_sum(&state.vertex_areas),
        q_phi: form.value(&phi),
        rigidity_gap: rigidity_gap(state, config),
    }
}

/// Outcome of the finite-difference check of the second variation.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondVariationCheck {
    pub steps: Vec<f64>,
    /// `(E(t) - 2 E(0) + E(-t)) / t^2` of the discrete energy per step.
    pub quotients: Vec<f64>,
    /// Richardson extrapolation of `quotients` to `t = 0`.
    pub extrapolated: f64,
    /// `f^T Q f` from [`assemble`].
    pub form_value: f64,
    /// `|extrapolated - form_value| / |form_value|`.
    pub discrepancy: f64,
    /// Same quotients for the smooth half-disk, extrapolated.
    pub continuum_extrapolated: f64,
    /// `int <A_F grad f, grad f> dA` by quadrature.
    pub continuum_form: f64,
    pub continuum_discrepancy: f64,
    /// `|form_value - continuum_form| / |continuum_form|`.
    pub discretization_gap: f64,
}

/// Scalar field on a flat patch in its planar coordinates `(a, b)`,
/// returning the value and both partial derivatives.
pub type PlanarField<'a> = &'a dyn Fn(f64, f64) -> (f64, f64, f64);

/// Gaussian bump `exp(-|p - c|^2 / (2 sigma^2))` in planar coordinates.
pub fn gaussian_bump(center: (f64, f64), sigma: f64) -> impl Fn(f64, f64) -> (f64, f64, f64) {
    move |a, b| {
        let (da, db) = (a - center.0, b - center.1);
        let g = (-(da * da + db * db) / (2.0 * sigma * sigma)).exp();
        (g, -da / (sigma * sigma) * g, -db / (sigma * sigma) * g)
    }
}

/// Neville extrapolation of `values(t)` to `t = 0` in the variable `t^2`.
pub fn richardson(steps: &[f64], values: &[f64]) -> f64 {
    let x: Vec<f64> = steps.iter().map(|t| t * t).collect();
    let mut p = values.to_vec();
    let n = p.len();
    for m in 1..n {
        for i in 0..n - m {
            p[i] = (x[i + m] * p[i] - x[i] * p[i + 1]) / (x[i + m] - x[i]);
        }
    }
    p[0]
}

/// Compare the second derivative of the energy along `x + t f V` with the
/// assembled form, where `V = nu - (nu3 / mu3) mu` is the constant
/// admissible direction of the flat patch (its normal part is `f`, and it is
/// horizontal, so wall vertices stay on the wall). `f` is forced to zero on
/// truncation vertices.
pub fn second_variation_fd_check(
    patch: &crate::shapes::FlatPatch,
    aniso: &Anisotropy,
    config: &HalfSpaceConfig,
    f: PlanarField<'_>,
    steps: &[f64],
) -> Result<SecondVariationCheck> {
    use crate::linalg::gauss_legendre_on;
    use crate::mesh::VertexKind;
    use crate::variational::energy;

    if steps.is_empty() {
        return Err(Error::InvalidArgument("at least one step is required".into()));
    }
    if let Some(i) = steps.iter().position(|t| !(*t >= 1e-6)) {
        return Err(Error::StepUnderflow(i));
    }
    let mesh = &patch.mesh;
    let state = crate::state::compute_state(mesh, aniso, config)?;
    let hf = state.points.iter().fold(0.0f64, |m, p| m.max(p.hf_mean.abs()));
    if hf > 1e-6 || state.max_capillary_residual() > 1e-6 {
        return Err(Error::Precondition(alloc::format!(
            "not an anisotropic capillary minimal configuration (|H_F| {hf:e}, capillary {:e})",
            state.max_capillary_residual()
        )));
    }
    let nu = patch.normal;
    let mu = -patch.rise_dir;
    let v = nu - mu * (nu.z / mu.z);
    let vals: Vec<f64> = patch
        .coords
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| if mesh.kind(i) == VertexKind::Truncation { 0.0 } else { f(a, b).0 })
        .collect();
    let discrete = |t: f64| -> Result<f64> {
        let x = mesh.vertices().iter().zip(&vals).map(|(p, fv)| p + v * (t * fv)).collect();
        Ok(energy(&mesh.with_vertices(x)?, aniso, config).total)
    };
    let e0 = discrete(0.0)?;
    let mut quotients = Vec::with_capacity(steps.len());
    for &t in steps {
        quotients.push((discrete(t)? - 2.0 * e0 + discrete(-t)?) / (t * t));
    }
    let form = assemble(mesh, &state, aniso, ConstraintMode::Strong)?;
    let form_value = form.value(&vals);
    let extrapolated = richardson(steps, &quotients);

    // Smooth half-disk by composite Gauss-Legendre in polar coordinates.
    let radius = patch.coords.iter().fold(0.0f64, |m, c| m.max(c.0.hypot(c.1)));
    let (ea, eb) = (patch.wall_dir, patch.rise_dir);
    let panels = 24;
    let mut nodes = Vec::new();
    for pr in 0..panels {
        let (r0, r1) = (radius * pr as f64 / panels as f64, radius * (pr + 1) as f64 / panels as f64);
        let (rs, rw) = gauss_legendre_on(8, r0, r1);
        for pt in 0..panels {
            let (t0, t1) = (PI_ * pt as f64 / panels as f64, PI_ * (pt + 1) as f64 / panels as f64);
            let (ts, tw) = gauss_legendre_on(8, t0, t1);
            for (r, wr) in rs.iter().zip(&rw) {
                for (th, wt) in ts.iter().zip(&tw) {
                    let (a, b) = (r * th.cos(), r * th.sin());
                    let (_, fa, fb) = f(a, b);
                    let w = v.cross(&eb) * fa + ea.cross(&v) * fb;
                    nodes.push((w, ea * fa + eb * fb, wr * wt * r));
                }
            }
        }
    }
    let a_f = aniso.eval(&nu).a_f;
    let cont = |t: f64| pairwise_sum(&nodes.iter().map(|(w, _, q)| aniso.value_at(&(nu + w * t)) * q).collect::<Vec<_>>());
    let c0 = cont(0.0);
    let cq: Vec<f64> = steps.iter().map(|&t| (cont(t) - 2.0 * c0 + cont(-t)) / (t * t)).collect();
    let continuum_extrapolated = richardson(steps, &cq);
    let continuum_form = pairwise_sum(&nodes.iter().map(|(_, g, q)| (a_f * g).dot(g) * q).collect::<Vec<_>>());
    Ok(SecondVariationCheck {
        steps: steps.to_vec(),
        quotients,
        extrapolated,
        form_value,
        discrepancy: (extrapolated - form_value).abs() / form_value.abs(),
        continuum_extrapolated,
        continuum_form,
        continuum_discrepancy: (continuum_extrapolated - continuum_form).abs() / continuum_form.abs(),
        discretization_gap: (form_value - continuum_form).abs() / continuum_form.abs(),
    })
}

const PI_: f64 = core::f64::consts::PI;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::make_config;
    use crate::numeric::convergence_order;
    use crate::parametric::{jacobi_form, parametric_state, ParametricPatch};
    use crate::shapes::{build_truncated_wulff, flat_capillary_patch, perturb_cap};
    use alloc::sync::Arc;
    use crate::state::{compute_state, compute_state_with_normals};
    use crate::{Mat3, Vec3};
    use core::f64::consts::PI;

    fn iso(w: f64) -> (Anisotropy, HalfSpaceConfig) {
        let a = Anisotropy::isotropic();
        (a, make_config(&a, w, 1000).unwrap())
    }

    #[test]
    fn flat_patch_form_is_the_stiffness_matrix() {
        let (a, c) = iso(0.3);
        let p = flat_capillary_patch(&a, &c, 1.0, 6).unwrap();
        let st = compute_state(&p.mesh, &a, &c).unwrap();
        let form = assemble(&p.mesh, &st, &a, ConstraintMode::Strong).unwrap();
        assert!(form.potential.iter().all(|v| *v == 0.0));
        assert!(form.robin.iter().all(|v| *v == 0.0));
        assert_eq!(form.q.triplets(), form.stiffness.triplets());
        assert_eq!(form.q.asymmetry(), 0.0);
        // Linear functions: int |grad f|^2 = area for a unit gradient.
        let f: Vec<f64> = p.coords.iter().map(|c| c.0).collect();
        let rep = spectrum(&form, 3, 0.05).unwrap();
        assert!(rep.lambda_min() > 0.0);
        assert!(rep.residuals.iter().all(|r| *r < 1e-8));
        // Without Dirichlet vertices the value of a linear field is exact.
        let k = &form.stiffness;
        let mut full = 0.0;
        for (i, j, v) in k.triplets() {
            full += f[form.dofs[i]] * v * f[form.dofs[j]];
        }
        assert!(full > 0.0);
    }

    #[test]
    fn hemisphere_constant_field() {
        let (a, c) = iso(0.0);
        let cap = build_truncated_wulff(&a, &c, 24).unwrap();
        let st = compute_state_with_normals(&cap.mesh, &cap.normals, &a, &c).unwrap();
        let form = assemble(&cap.mesh, &st, &a, ConstraintMode::Strong).unwrap();
        let one = vec![1.0; cap.mesh.num_vertices()];
        let q = form.value(&one);
        assert!((q + 4.0 * PI).abs() < 2e-2, "{q}");
        // Translation field <E1, nu>.
        let errs: Vec<f64> = [12, 24]
            .iter()
            .map(|&k| {
                let cap = build_truncated_wulff(&a, &c, k).unwrap();
                let st = compute_state_with_normals(&cap.mesh, &cap.normals, &a, &c).unwrap();
                let form = assemble(&cap.mesh, &st, &a, ConstraintMode::Strong).unwrap();
                let f: Vec<f64> = cap.normals.iter().map(|n| n.x).collect();
                form.value(&f).abs()
            })
            .collect();
        assert!(errs[1] < errs[0] / 2.0, "{errs:?}");
    }

    #[test]
    fn dense_and_iterative_agree() {
        let (a, c) = iso(0.3);
        let cap = build_truncated_wulff(&a, &c, 12).unwrap();
        let st = compute_state_with_normals(&cap.mesh, &cap.normals, &a, &c).unwrap();
        for mode in [ConstraintMode::Weak, ConstraintMode::Strong] {
            let form = assemble(&cap.mesh, &st, &a, mode).unwrap();
            let dense = spectrum(&form, 6, 0.05).unwrap();
            assert_eq!(dense.solver, Solver::Dense);
            let d: Vec<f64> = form.mass.iter().map(|m| 1.0 / m.sqrt()).collect();
            let kmat = form.q.scale_sym(&d);
            let u = (mode == ConstraintMode::Weak).then(|| {
                let u = DVector::from_iterator(form.dim(), form.mass.iter().map(|m| m.sqrt()));
                let n = u.norm();
                u / n
            });
            let (vals, _, _) = shift_invert(&kmat, u.as_ref(), 6).unwrap();
            for (x, y) in vals.iter().zip(&dense.eigenvalues) {
                assert!((x - y).abs() < 1e-9, "{vals:?} {:?}", dense.eigenvalues);
            }
            assert!(dense.residuals.iter().all(|r| *r < 1e-8), "{:?}", dense.residuals);
            if mode == ConstraintMode::Weak {
                for v in &dense.eigenvectors {
                    let m: f64 = form.dofs.iter().zip(&form.mass).map(|(&i, m)| v[i] * m).sum();
                    assert!(m.abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn weak_spectrum_of_sphere_cap_has_translation_modes() {
        let (a, c) = iso(0.3);
        let cap = build_truncated_wulff(&a, &c, 20).unwrap();
        let st = compute_state_with_normals(&cap.mesh, &cap.normals, &a, &c).unwrap();
        let form = assemble(&cap.mesh, &st, &a, ConstraintMode::Weak).unwrap();
        let rep = spectrum(&form, 4, 0.05).unwrap();
        assert!(rep.lambda_min() > -0.05, "{:?}", rep.eigenvalues);
        assert!(rep.near_zero() >= 2, "{:?}", rep.eigenvalues);
        assert_eq!(rep.verdict, Verdict::Stable);
        assert!(rep.residuals.iter().all(|r| *r < 1e-8), "{:?}", rep.residuals);
        let strong = spectrum(&assemble(&cap.mesh, &st, &a, ConstraintMode::Strong).unwrap(), 1, 0.05).unwrap();
        assert!(matches!(strong.verdict, Verdict::Unstable { .. }));
    }

    #[test]
    fn scaling_f_scales_the_spectrum() {
        let a = Anisotropy::ellipsoidal(Mat3::from_diagonal(&Vec3::new(2.0, 1.0, 1.0))).unwrap();
        let c = make_config(&a, 0.0, 1000).unwrap();
        let cap = build_truncated_wulff(&a, &c, 10).unwrap();
        let st = compute_state_with_normals(&cap.mesh, &cap.normals, &a, &c).unwrap();
        let r1 = spectrum(&assemble(&cap.mesh, &st, &a, ConstraintMode::Weak).unwrap(), 5, 0.05).unwrap();
        let a3 = a.scaled(3.0).unwrap();
        let c3 = make_config(&a3, 0.0, 1000).unwrap();
        let st3 = compute_state_with_normals(&cap.mesh, &cap.normals, &a3, &c3).unwrap();
        let r3 = spectrum(&assemble(&cap.mesh, &st3, &a3, ConstraintMode::Weak).unwrap(), 5, 0.15).unwrap();
        for (x, y) in r1.eigenvalues.iter().zip(&r3.eigenvalues) {
            assert!((3.0 * x - y).abs() < 1e-9 * (1.0 + y.abs()));
        }
        assert_eq!(r1.verdict == Verdict::Stable, r3.verdict == Verdict::Stable);
    }

    #[test]
    fn phi_and_gap_on_wulff_caps() {
        let a = Anisotropy::ellipsoidal(Mat3::from_diagonal(&Vec3::new(4.0, 1.0, 1.0))).unwrap();
        let c = make_config(&a, -0.4, 1000).unwrap();
        let cap = build_truncated_wulff(&a, &c, 16).unwrap();
        let st = compute_state(&cap.mesh, &a, &c).unwrap();
        let form = assemble(&cap.mesh, &st, &a, ConstraintMode::Weak).unwrap();
        let d = phi_diagnostics(&form, &st, &c);
        assert!((d.integral / d.area).abs() < 1e-2, "{d:?}");
        assert!((d.q_phi / d.area).abs() < 1e-2, "{d:?}");
        assert!(d.rigidity_gap >= -1e-12 && d.rigidity_gap / d.area < 1e-2, "{d:?}");
    }

    #[test]
    fn second_variation_on_flat_patches() {
        let (a, c) = iso(0.5);
        let p = flat_capillary_patch(&a, &c, 1.0, 40).unwrap();
        let bump = gaussian_bump((0.05, 0.5), 0.12);
        let r = second_variation_fd_check(&p, &a, &c, &bump, &[0.02, 0.01, 0.005]).unwrap();
        assert!(r.discrepancy < 1e-6, "{r:?}");
        assert!(r.continuum_discrepancy < 1e-6, "{r:?}");
        // int |grad g|^2 over the plane for a Gaussian of width sigma is pi.
        assert!((r.continuum_form - PI).abs() < 1e-6, "{r:?}");
        assert!(r.discretization_gap < 2e-2, "{r:?}");

        let e = Anisotropy::ellipsoidal(Mat3::from_diagonal(&Vec3::new(4.0, 1.0, 2.0))).unwrap();
        let ce = make_config(&e, 0.3, 1000).unwrap();
        let pe = flat_capillary_patch(&e, &ce, 1.0, 30).unwrap();
        let r = second_variation_fd_check(&pe, &e, &ce, &bump, &[0.02, 0.01, 0.005]).unwrap();
        assert!(r.discrepancy < 1e-6 && r.continuum_discrepancy < 1e-6, "{r:?}");

        let edge = gaussian_bump((0.1, 0.0), 0.15);
        let r = second_variation_fd_check(&p, &a, &c, &edge, &[0.02, 0.01, 0.005]).unwrap();
        assert!(r.discrepancy < 1e-6 && r.continuum_discrepancy < 1e-6, "{r:?}");
        assert!(matches!(
            second_variation_fd_check(&p, &a, &c, &edge, &[0.01, 0.0]),
            Err(Error::StepUnderflow(1))
        ));
    }

    #[test]
    fn curved_configuration_is_rejected() {
        let (a, c) = iso(0.0);
        let cap = build_truncated_wulff(&a, &c, 6).unwrap();
        let p = crate::shapes::FlatPatch {
            coords: cap.mesh.vertices().iter().map(|x| (x.y, x.z)).collect(),
            mesh: cap.mesh,
            beta: PI / 2.0,
            normal: Vec3::x(),
            wall_dir: Vec3::y(),
            rise_dir: Vec3::z(),
        };
        let bump = gaussian_bump((0.0, 0.5), 0.2);
        assert!(matches!(second_variation_fd_check(&p, &a, &c, &bump, &[0.01]), Err(Error::Precondition(_))));
    }

    fn ring_bump(t: f64, center: f64, width: f64) -> f64 {
        let s = (t - center) / width;
        if s.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - s * s).powi(4)
        }
    }

    fn bump_eta(u: f64, t: f64) -> f64 {
        0.05 * (2.0 * u).cos() * ring_bump(t, 0.8, 0.6)
    }

    fn bumped_hemisphere(rings: usize) -> CapillaryMesh {
        let (a, c) = iso(0.0);
        let cap = build_truncated_wulff(&a, &c, rings).unwrap();
        perturb_cap(&cap.mesh, &Vec3::zeros(), 0.0, |d: &Vec3| bump_eta(d.y.atan2(d.x), d.z.clamp(-1.0, 1.0).acos())).unwrap()
    }

    #[test]
    fn rigidity_gap_of_bumped_hemisphere() {
        let (a, c) = iso(0.0);
        let patch = ParametricPatch::radial_sphere(Arc::new(bump_eta), (0.2, 1.4));
        let ps = parametric_state(&patch, &a, &c, 6, (100, 100)).unwrap();
        let vals: Vec<f64> = ps.points.iter().map(|p| p.psi(&c) * (2.0 * p.tr_hf2 - p.hf_mean * p.hf_mean)).collect();
        let want = ps.integrate(&vals);
        let m = bumped_hemisphere(36);
        let got = rigidity_gap(&compute_state(&m, &a, &c).unwrap(), &c);
        assert!(want > 1.0);
        assert!((got - want).abs() < 1e-2 * want, "{got} vs {want}");
    }

    #[test]
    fn form_matches_integrated_jacobi_operator() {
        let a = Anisotropy::ellipsoidal(Mat3::from_diagonal(&Vec3::new(2.0, 1.0, 1.5))).unwrap();
        let c = make_config(&a, 0.0, 1000).unwrap();
        let f = |x: &Vec3| {
            let t = x.z.clamp(-1.0, 1.0).acos();
            ring_bump(t, 0.7, 0.5) * (0.3 + x.x - 0.7 * x.y + 0.4 * x.x * x.y)
        };
        let patch = ParametricPatch::radial_sphere(Arc::new(bump_eta), (0.1, 1.3));
        let want = jacobi_form(&patch, &a, 6, (100, 100), &f).unwrap();
        let mut errs = Vec::new();
        let mut hs = Vec::new();
        for rings in [16, 24] {
            let m = bumped_hemisphere(rings);
            let st = compute_state(&m, &a, &c).unwrap();
            let form = assemble(&m, &st, &a, ConstraintMode::Strong).unwrap();
            let fv: Vec<f64> = m.vertices().iter().map(f).collect();
            errs.push((form.value(&fv) - want).abs() / want.abs());
            hs.push(m.mean_edge_length());
        }
        assert!(errs[1] < 3e-2, "{errs:?}");
        assert!(convergence_order(&hs, &errs) > 1.5, "{errs:?}");
    }

    #[test]
    fn richardson_removes_even_powers() {
        let g = |t: f64| 2.0 + 3.0 * t * t - 5.0 * t.powi(4);
        let steps = [0.1, 0.05, 0.025];
        let v: Vec<f64> = steps.iter().map(|&t| g(t)).collect();
        assert!((richardson(&steps, &v) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn flat_gap_is_zero() {
        let (a, c) = iso(0.5);
        let p = flat_capillary_patch(&a, &c, 1.0, 5).unwrap();
        let st = compute_state(&p.mesh, &a, &c).unwrap();
        assert_eq!(rigidity_gap(&st, &c), 0.0);
        for v in p.mesh.vertices().iter().zip(&st.points) {
            assert!((v.1.psi(&c) - 0.75).abs() < 1e-12);
        }
    }
}
