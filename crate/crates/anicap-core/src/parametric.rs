//! High-order finite-difference backend on smooth parametric patches.
//!
//! A patch is a closed-form chart `(u, v) -> x` on a rectangle. All geometry
//! (normal, shape operator, surface gradients, divergences) is obtained by
//! centered differences of order 2, 4 or 6 on a uniform grid. Charts are
//! evaluated on ghost nodes outside the rectangle, so every stencil is
//! centered, including on the edges.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::{Add, Mul};

use nalgebra::Matrix2;

use crate::anisotropy::Anisotropy;
use crate::config::HalfSpaceConfig;
use crate::error::{Error, Result};
use crate::numeric::{convergence_order, pairwise_sum};
use crate::shapes::WulffChart;
use crate::state::PointGeometry;
#[allow(unused_imports)]
use num_traits::Float;
use crate::{Mat3, Vec3, E3};

/// Scalar function of the chart parameters.
pub type ScalarFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A smooth map from parameters to space.
pub trait Chart: Send + Sync {
    fn point(&self, u: f64, v: f64) -> Vec3;
}

impl<F: Fn(f64, f64) -> Vec3 + Send + Sync> Chart for F {
    fn point(&self, u: f64, v: f64) -> Vec3 {
        self(u, v)
    }
}

#[derive(Clone)]
pub struct ParametricPatch {
    chart: Arc<dyn Chart>,
    pub u_range: (f64, f64),
    pub v_range: (f64, f64),
    /// `u` is an angle and the grid wraps around (the last node is not repeated).
    pub periodic_u: bool,
    /// `+1` when `X_u x X_v` is the outward normal, `-1` otherwise.
    pub orientation: f64,
    /// The edge `v = v_max` lies on the wall.
    pub wall_edge: bool,
}

impl core::fmt::Debug for ParametricPatch {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ParametricPatch")
            .field("u_range", &self.u_range)
            .field("v_range", &self.v_range)
            .field("periodic_u", &self.periodic_u)
            .field("orientation", &self.orientation)
            .field("wall_edge", &self.wall_edge)
            .finish()
    }
}

impl ParametricPatch {
    pub fn new<C: Chart + 'static>(chart: C, u_range: (f64, f64), v_range: (f64, f64), periodic_u: bool, orientation: f64) -> Self {
        Self { chart: Arc::new(chart), u_range, v_range, periodic_u, orientation, wall_edge: false }
    }

    pub fn point(&self, u: f64, v: f64) -> Vec3 {
        self.chart.point(u, v)
    }

    /// Sphere in polar coordinates, `u` the azimuth and `v` the polar angle.
    /// The patch wraps around when `u_range` spans a full turn.
    pub fn sphere(center: Vec3, radius: f64, u_range: (f64, f64), v_range: (f64, f64)) -> Self {
        let periodic = (u_range.1 - u_range.0 - 2.0 * PI).abs() < 1e-12;
        Self::new(
            move |u: f64, v: f64| center + WulffChart::gauss(u, v) * radius,
            u_range,
            v_range,
            periodic,
            -1.0,
        )
    }

    /// Radial graph `(1 + eta) z(u, v)` over the unit sphere.
    pub fn radial_sphere(eta: ScalarFn, v_range: (f64, f64)) -> Self {
        Self::new(
            move |u: f64, v: f64| WulffChart::gauss(u, v) * (1.0 + eta(u, v)),
            (0.0, 2.0 * PI),
            v_range,
            true,
            -1.0,
        )
    }

    /// Graph `(u, v, f(u, v))` with upward normal.
    pub fn graph(height: ScalarFn, u_range: (f64, f64), v_range: (f64, f64)) -> Self {
        Self::new(move |u: f64, v: f64| Vec3::new(u, v, height(u, v)), u_range, v_range, false, 1.0)
    }

    /// Truncated Wulff cap `omega0 E3 + (1 + eta) Phi(z(u, s t_b(u)))` for `s`
    /// in `s_range`; the wall is at `s = 1`. With `eta` vanishing to second
    /// order at `s = 1` the boundary curve and the normals along it are those
    /// of the cap, so the capillary condition is kept.
    pub fn wulff_cap(aniso: &Anisotropy, config: &HalfSpaceConfig, s_range: (f64, f64), eta: Option<ScalarFn>) -> Result<Self> {
        let chart = WulffChart::new(aniso, config);
        // Fail early if a meridian misses the wall.
        chart.boundary_angle(0.0)?;
        let center = chart.center();
        let mut p = Self::new(
            move |u: f64, s: f64| {
                let tb = chart.boundary_angle(u).unwrap_or(PI);
                let phi = chart.aniso.wulff_unchecked(&WulffChart::gauss(u, s * tb));
                let k = eta.as_ref().map_or(1.0, |e| 1.0 + e(u, s));
                center + phi * k
            },
            (0.0, 2.0 * PI),
            s_range,
            true,
            -1.0,
        );
        p.wall_edge = s_range.1 == 1.0;
        Ok(p)
    }
}

/// Boundary data at a node of the wall edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParametricBoundary {
    pub node: usize,
    pub mu: Vec3,
    pub q_f: f64,
    /// `<nu_F, -E3> - omega0`.
    pub capillary_residual: f64,
    /// `h_F(t, mu)` for the unit boundary tangent `t`.
    pub principal_residual: f64,
    /// `<A_F grad <x, nu>, mu> - q_F <x, nu>`.
    pub support_residual: f64,
    /// `<A_F grad psi, mu> - q_F psi` with `psi = F(nu) + omega0 <E^F, nu>`.
    pub psi_residual: f64,
}

/// Geometry on the grid nodes of a patch, node `(i, j)` at index `i n_v + j`.
#[derive(Debug, Clone)]
pub struct ParametricState {
    pub n_u: usize,
    pub n_v: usize,
    pub order: usize,
    pub du: f64,
    pub dv: f64,
    pub params: Vec<(f64, f64)>,
    pub positions: Vec<Vec3>,
    pub points: Vec<PointGeometry>,
    /// Area element times the trapezoid weights of the grid.
    pub weights: Vec<f64>,
    pub hf_gradient: Vec<Vec3>,
    /// `J_F F(nu) - <grad H_F, DF> - tr h_F^2`.
    pub jacobi_f: Vec<f64>,
    /// `J_F <E^F, nu> - <E^F, grad H_F>`.
    pub jacobi_ef: Vec<f64>,
    /// `J_F <x, nu> - <x, grad H_F> - H_F`.
    pub jacobi_support: Vec<f64>,
    /// Wall nodes in increasing `u`; empty unless the patch has a wall edge.
    pub boundary: Vec<ParametricBoundary>,
}

/// First- and second-derivative stencils of centered differences.
fn stencil(order: usize, deriv: usize) -> Result<&'static [f64]> {
    Ok(match (order, deriv) {
        (2, 1) => &[-0.5, 0.0, 0.5],
        (4, 1) => &[1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0],
        (6, 1) => &[-1.0 / 60.0, 3.0 / 20.0, -0.75, 0.0, 0.75, -3.0 / 20.0, 1.0 / 60.0],
        (2, 2) => &[1.0, -2.0, 1.0],
        (4, 2) => &[-1.0 / 12.0, 4.0 / 3.0, -2.5, 4.0 / 3.0, -1.0 / 12.0],
        (6, 2) => &[1.0 / 90.0, -3.0 / 20.0, 1.5, -49.0 / 18.0, 1.5, -3.0 / 20.0, 1.0 / 90.0],
        _ => return Err(Error::Stencil(alloc::format!("no centered stencil of order {order}"))),
    })
}

/// Values on the logical index box `[i0, i1) x [j0, j1)`.
struct Grid<T> {
    i0: isize,
    i1: isize,
    j0: isize,
    j1: isize,
    data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    fn build<F: FnMut(isize, isize) -> T>(i0: isize, i1: isize, j0: isize, j1: isize, mut f: F) -> Self {
        let mut data = Vec::with_capacity(((i1 - i0) * (j1 - j0)) as usize);
        for i in i0..i1 {
            for j in j0..j1 {
                data.push(f(i, j));
            }
        }
        Self { i0, i1, j0, j1, data }
    }

    fn at(&self, i: isize, j: isize) -> T {
        debug_assert!(i >= self.i0 && i < self.i1 && j >= self.j0 && j < self.j1);
        self.data[((i - self.i0) * (self.j1 - self.j0) + (j - self.j0)) as usize]
    }
}

/// Apply `coeffs / h^deriv` along `axis` (0 = u, 1 = v); the result lives on
/// the box shrunk by the stencil radius along that axis.
fn diff<T>(g: &Grid<T>, axis: usize, coeffs: &[f64], h: f64, zero: T) -> Grid<T>
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T>,
{
    let r = (coeffs.len() / 2) as isize;
    let (di, dj) = if axis == 0 { (r, 0) } else { (0, r) };
    Grid::build(g.i0 + di, g.i1 - di, g.j0 + dj, g.j1 - dj, |i, j| {
        let mut acc = zero;
        for (k, c) in coeffs.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            let o = k as isize - r;
            let v = if axis == 0 { g.at(i + o, j) } else { g.at(i, j + o) };
            acc = acc + v * (*c / h);
        }
        acc
    })
}

/// Metric data at one node.
#[derive(Clone, Copy)]
struct Frame {
    x: Vec3,
    xu: Vec3,
    xv: Vec3,
    ginv: Matrix2<f64>,
    sqrt_g: f64,
    geo: PointGeometry,
}

impl Frame {
    fn gradient(&self, fu: f64, fv: f64) -> Vec3 {
        let a = self.ginv * nalgebra::Vector2::new(fu, fv);
        self.xu * a.x + self.xv * a.y
    }

    /// Contravariant components of a tangent vector.
    fn components(&self, w: &Vec3) -> (f64, f64) {
        let a = self.ginv * nalgebra::Vector2::new(w.dot(&self.xu), w.dot(&self.xv));
        (a.x, a.y)
    }
}

/// Scalar fields whose Jacobi images are checked.
const NFIELDS: usize = 5;

/// Frames on the grid padded by `2r`, with the stencil data to go further.
struct FrameGrid {
    frames: Grid<Frame>,
    d1: &'static [f64],
    du: f64,
    dv: f64,
    r: isize,
    n_u: isize,
    n_v: isize,
}

fn frame_grid(patch: &ParametricPatch, aniso: &Anisotropy, order: usize, grid: (usize, usize)) -> Result<FrameGrid> {
    let d1 = stencil(order, 1)?;
    let d2 = stencil(order, 2)?;
    let (n_u, n_v) = grid;
    if n_u < order + 1 || n_v < order + 1 {
        return Err(Error::Stencil(alloc::format!("grid {n_u}x{n_v} too small for order {order}")));
    }
    let r = (order / 2) as isize;
    let pad = 3 * r;
    let (du, dv) = patch.spacing(grid);
    let (nu_i, nv_i) = (n_u as isize, n_v as isize);
    let uv = |i: isize, j: isize| patch.param(grid, i, j);

    let x = Grid::build(-pad, nu_i + pad, -pad, nv_i + pad, |i, j| {
        let (u, v) = uv(i, j);
        patch.point(u, v)
    });
    let z3 = Vec3::zeros();
    let xu = diff(&x, 0, d1, du, z3);
    let xv = diff(&x, 1, d1, dv, z3);
    let xuu = diff(&x, 0, d2, du * du, z3);
    let xvv = diff(&x, 1, d2, dv * dv, z3);
    let xuv = diff(&xu, 1, d1, dv, z3);

    let l1 = 2 * r;
    let mut frames = Vec::with_capacity(((nu_i + 2 * l1) * (nv_i + 2 * l1)) as usize);
    for i in -l1..nu_i + l1 {
        for j in -l1..nv_i + l1 {
            let (a, b) = (xu.at(i, j), xv.at(i, j));
            let c = a.cross(&b);
            let cn = c.norm();
            if !(cn > 1e-14 * (a.norm_squared() + b.norm_squared())) {
                let (u, v) = uv(i, j);
                return Err(Error::Immersion { u, v });
            }
            let nu = c * (patch.orientation / cn);
            let g = Matrix2::new(a.dot(&a), a.dot(&b), a.dot(&b), b.dot(&b));
            let ginv = g.try_inverse().ok_or_else(|| {
                let (u, v) = uv(i, j);
                Error::Immersion { u, v }
            })?;
            let hl = Matrix2::new(
                -xuu.at(i, j).dot(&nu),
                -xuv.at(i, j).dot(&nu),
                -xuv.at(i, j).dot(&nu),
                -xvv.at(i, j).dot(&nu),
            );
            let s = ginv * hl * ginv;
            let basis = [a, b];
            let mut h = Mat3::zeros();
            for p in 0..2 {
                for q in 0..2 {
                    h += basis[p] * basis[q].transpose() * s[(p, q)];
                }
            }
            let h = (h + h.transpose()) * 0.5;
            frames.push(Frame { x: x.at(i, j), xu: a, xv: b, ginv, sqrt_g: cn, geo: PointGeometry::new(aniso, nu, h) });
        }
    }
    let frames = Grid { i0: -l1, i1: nu_i + l1, j0: -l1, j1: nv_i + l1, data: frames };
    Ok(FrameGrid { frames, d1, du, dv, r, n_u: nu_i, n_v: nv_i })
}

impl FrameGrid {
    /// Gradient on the grid padded by `r` and `J_F s` on the grid proper of
    /// the scalar field `s`, given on the grid padded by `2r`.
    fn jacobi(&self, s: &Grid<f64>) -> (Grid<Vec3>, Grid<f64>) {
        let (fr, d1, r, du, dv) = (&self.frames, self.d1, self.r, self.du, self.dv);
        let (nu_i, nv_i) = (self.n_u, self.n_v);
        let su = diff(s, 0, d1, du, 0.0);
        let sv = diff(s, 1, d1, dv, 0.0);
        let g = Grid::build(-r, nu_i + r, -r, nv_i + r, |i, j| fr.at(i, j).gradient(su.at(i, j), sv.at(i, j)));
        let w = |i: isize, j: isize| {
            let f = fr.at(i, j);
            let (a, b) = f.components(&(f.geo.a_f * g.at(i, j)));
            (a * f.sqrt_g, b * f.sqrt_g)
        };
        let fu = Grid::build(-r, nu_i + r, -r, nv_i + r, |i, j| w(i, j).0);
        let fv = Grid::build(-r, nu_i + r, -r, nv_i + r, |i, j| w(i, j).1);
        let a = diff(&fu, 0, d1, du, 0.0);
        let b = diff(&fv, 1, d1, dv, 0.0);
        let jac = Grid::build(0, nu_i, 0, nv_i, |i, j| {
            let f = fr.at(i, j);
            (a.at(i, j) + b.at(i, j)) / f.sqrt_g + f.geo.tr_af_h2 * s.at(i, j)
        });
        (g, jac)
    }

    fn weight(&self, periodic_u: bool, i: isize, j: isize) -> f64 {
        let trap = |k: isize, m: isize, periodic: bool| if !periodic && (k == 0 || k == m - 1) { 0.5 } else { 1.0 };
        self.frames.at(i, j).sqrt_g * self.du * self.dv * trap(i, self.n_u, periodic_u) * trap(j, self.n_v, false)
    }
}

impl ParametricPatch {
    fn spacing(&self, (n_u, n_v): (usize, usize)) -> (f64, f64) {
        let (u0, u1) = self.u_range;
        let (v0, v1) = self.v_range;
        let du = if self.periodic_u { (u1 - u0) / n_u as f64 } else { (u1 - u0) / (n_u - 1) as f64 };
        (du, (v1 - v0) / (n_v - 1) as f64)
    }

    fn param(&self, grid: (usize, usize), i: isize, j: isize) -> (f64, f64) {
        let (du, dv) = self.spacing(grid);
        (self.u_range.0 + i as f64 * du, self.v_range.0 + j as f64 * dv)
    }
}

/// `-int f J_F f dA` by quadrature on the patch, for a field `f` of the
/// ambient position that vanishes near the patch edges (so no boundary terms
/// arise when integrating by parts).
pub fn jacobi_form(
    patch: &ParametricPatch,
    aniso: &Anisotropy,
    order: usize,
    grid: (usize, usize),
    f: &dyn Fn(&Vec3) -> f64,
) -> Result<f64> {
    let fg = frame_grid(patch, aniso, order, grid)?;
    let l1 = 2 * fg.r;
    let s = Grid::build(-l1, fg.n_u + l1, -l1, fg.n_v + l1, |i, j| f(&fg.frames.at(i, j).x));
    let (_, jac) = fg.jacobi(&s);
    let mut terms = Vec::with_capacity((fg.n_u * fg.n_v) as usize);
    for i in 0..fg.n_u {
        for j in 0..fg.n_v {
            terms.push(-s.at(i, j) * jac.at(i, j) * fg.weight(patch.periodic_u, i, j));
        }
    }
    Ok(pairwise_sum(&terms))
}

/// Geometry of `patch` on an `n_u x n_v` grid with centered differences of
/// the given `order`.
pub fn parametric_state(
    patch: &ParametricPatch,
    aniso: &Anisotropy,
    config: &HalfSpaceConfig,
    order: usize,
    grid: (usize, usize),
) -> Result<ParametricState> {
    let fg = frame_grid(patch, aniso, order, grid)?;
    let (n_u, n_v) = grid;
    let (du, dv) = (fg.du, fg.dv);
    let (nu_i, nv_i) = (fg.n_u, fg.n_v);
    let l1 = 2 * fg.r;
    let frames = &fg.frames;
    let uv = |i: isize, j: isize| patch.param(grid, i, j);
    let field = |k: usize, fr: &Frame| -> f64 {
        let p = &fr.geo;
        match k {
            0 => p.hf_mean,
            1 => p.f_value,
            2 => config.ef.dot(&p.nu),
            3 => fr.x.dot(&p.nu),
            _ => p.psi(config),
        }
    };

    let mut grads: Vec<Grid<Vec3>> = Vec::with_capacity(NFIELDS);
    let mut jac: Vec<Grid<f64>> = Vec::with_capacity(NFIELDS);
    for k in 0..NFIELDS {
        let s = Grid::build(-l1, nu_i + l1, -l1, nv_i + l1, |i, j| field(k, &frames.at(i, j)));
        let (g, jk) = fg.jacobi(&s);
        grads.push(g);
        jac.push(jk);
    }

    let n = n_u * n_v;
    let mut st = ParametricState {
        n_u,
        n_v,
        order,
        du,
        dv,
        params: Vec::with_capacity(n),
        positions: Vec::with_capacity(n),
        points: Vec::with_capacity(n),
        weights: Vec::with_capacity(n),
        hf_gradient: Vec::with_capacity(n),
        jacobi_f: Vec::with_capacity(n),
        jacobi_ef: Vec::with_capacity(n),
        jacobi_support: Vec::with_capacity(n),
        boundary: Vec::new(),
    };
    for i in 0..nu_i {
        for j in 0..nv_i {
            let fr = frames.at(i, j);
            let p = fr.geo;
            let ghf = grads[0].at(i, j);
            let df = p.nu_f - p.nu * p.f_value;
            st.params.push(uv(i, j));
            st.positions.push(fr.x);
            st.points.push(p);
            st.weights.push(fg.weight(patch.periodic_u, i, j));
            st.hf_gradient.push(ghf);
            st.jacobi_f.push(jac[1].at(i, j) - ghf.dot(&df) - p.tr_hf2);
            st.jacobi_ef.push(jac[2].at(i, j) - config.ef.dot(&ghf));
            st.jacobi_support.push(jac[3].at(i, j) - fr.x.dot(&ghf) - p.hf_mean);
        }
    }
    if patch.wall_edge {
        let j = nv_i - 1;
        for i in 0..nu_i {
            let fr = frames.at(i, j);
            let p = fr.geo;
            let t = fr.xu.normalize();
            let mu = (fr.xv - t * t.dot(&fr.xv)).normalize();
            let hmm = p.hf_form(&mu, &mu);
            let q_f = -(p.nu.z / mu.z) * hmm;
            let flux = |k: usize| (p.a_f * grads[k].at(i, j)).dot(&mu);
            st.boundary.push(ParametricBoundary {
                node: (i * nv_i + j) as usize,
                mu,
                q_f,
                capillary_residual: p.nu_f.dot(&-E3) - config.omega0,
                principal_residual: p.hf_form(&t, &mu),
                support_residual: flux(3) - q_f * field(3, &fr),
                psi_residual: flux(4) - q_f * field(4, &fr),
            });
        }
    }
    Ok(st)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

impl ParametricState {
    pub fn node(&self, i: usize, j: usize) -> usize {
        i * self.n_v + j
    }

    /// Quadrature of per-node values against the area element.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        let w: Vec<f64> = values.iter().zip(&self.weights).map(|(a, b)| a * b).collect();
        pairwise_sum(&w)
    }

    pub fn area(&self) -> f64 {
        pairwise_sum(&self.weights)
    }

    pub fn hf_values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.hf_mean).collect()
    }

    /// Largest magnitudes of the three Jacobi identity residuals.
    pub fn jacobi_maxima(&self) -> [f64; 3] {
        [max_abs(&self.jacobi_f), max_abs(&self.jacobi_ef), max_abs(&self.jacobi_support)]
    }

    /// Largest magnitudes of the two boundary identity residuals.
    pub fn boundary_maxima(&self) -> [f64; 2] {
        let a: Vec<f64> = self.boundary.iter().map(|b| b.support_residual).collect();
        let b: Vec<f64> = self.boundary.iter().map(|b| b.psi_residual).collect();
        [max_abs(&a), max_abs(&b)]
    }

    pub fn max_capillary_residual(&self) -> f64 {
        self.boundary.iter().fold(0.0, |m, b| m.max(b.capillary_residual.abs()))
    }

    /// Pointwise first variation of the continuous energy: the spread
    /// `sup |H_F - mean H_F|` over the nodes and, on the wall, the largest
    /// `|<mu_F, nubar> + omega0|`, which equals the capillary residual.
    pub fn stationarity(&self) -> Stationarity {
        let hf = self.hf_values();
        let mean = self.integrate(&hf) / self.area();
        Stationarity { mean_hf: mean, interior: hf.iter().fold(0.0, |m, h| m.max((h - mean).abs())), boundary: self.max_capillary_residual() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stationarity {
    pub mean_hf: f64,
    pub interior: f64,
    pub boundary: f64,
}

/// Identity residual maxima over a ladder of grids with the observed orders
/// between the last two grids.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityStudy {
    pub order: usize,
    pub grids: Vec<usize>,
    pub spacings: Vec<f64>,
    pub jacobi: Vec<[f64; 3]>,
    pub boundary: Vec<[f64; 2]>,
    pub jacobi_orders: [f64; 3],
    pub boundary_orders: [f64; 2],
}

/// Residuals of the Jacobi and boundary identities on square grids `n x n`
/// for each `n` in `grids`.
pub fn identity_study(
    patch: &ParametricPatch,
    aniso: &Anisotropy,
    config: &HalfSpaceConfig,
    order: usize,
    grids: &[usize],
) -> Result<IdentityStudy> {
    if grids.len() < 2 {
        return Err(Error::InvalidArgument("an order estimate needs two grids".into()));
    }
    let mut study = IdentityStudy {
        order,
        grids: grids.to_vec(),
        spacings: Vec::new(),
        jacobi: Vec::new(),
        boundary: Vec::new(),
        jacobi_orders: [0.0; 3],
        boundary_orders: [0.0; 2],
    };
    for &n in grids {
        let st = parametric_state(patch, aniso, config, order, (n, n))?;
        study.spacings.push(st.dv);
        study.jacobi.push(st.jacobi_maxima());
        study.boundary.push(st.boundary_maxima());
    }
    let m = grids.len();
    let h = &study.spacings[m - 2..];
    for k in 0..3 {
        study.jacobi_orders[k] = convergence_order(h, &[study.jacobi[m - 2][k], study.jacobi[m - 1][k]]);
    }
    if patch.wall_edge {
        for k in 0..2 {
            study.boundary_orders[k] = convergence_order(h, &[study.boundary[m - 2][k], study.boundary[m - 1][k]]);
        }
    }
    Ok(study)
}

/// Boundary identities need the capillary condition on the wall edge.
pub fn check_capillary(state: &ParametricState, tol: f64) -> Result<()> {
    let worst = state.max_capillary_residual();
    if state.boundary.is_empty() || worst > tol {
        return Err(Error::Precondition(alloc::format!("capillary residual {worst:e} exceeds {tol:e} or no wall edge")));
    }
    Ok(())
}

/// Smooth interior profile on `[s0, 1]` vanishing to second order at `s = 1`
/// and at `s = s0`: `((s - s0)(1 - s))^3` normalized to peak one.
pub fn interior_profile(s: f64, s0: f64) -> f64 {
    let w = (1.0 - s0) * 0.5;
    let p = (s - s0) * (1.0 - s) / (w * w);
    p * p * p
}
