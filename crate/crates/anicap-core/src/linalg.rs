//! Sparse symmetric matrices, bandwidth-reducing ordering, envelope Cholesky
//! and Gauss-Legendre rules.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use nalgebra::{DMatrix, DVector};

#[allow(unused_imports)]
use num_traits::Float;
use crate::error::{Error, Result};

/// Symmetric sparse matrix stored as sorted full rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SymSparse {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

/// Accumulates symmetric contributions; each `add(i, j, v)` with `i != j`
/// adds `v` to both `(i, j)` and `(j, i)`.
#[derive(Debug, Clone)]
pub struct SymBuilder {
    n: usize,
    entries: BTreeMap<(usize, usize), f64>,
}

impl SymBuilder {
    pub fn new(n: usize) -> Self {
        Self { n, entries: BTreeMap::new() }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let key = (i.min(j), i.max(j));
        *self.entries.entry(key).or_insert(0.0) += v;
    }

    pub fn build(self) -> SymSparse {
        let mut rows = vec![Vec::new(); self.n];
        for ((i, j), v) in self.entries {
            rows[i].push((j, v));
            if i != j {
                rows[j].push((i, v));
            }
        }
        for r in &mut rows {
            r.sort_by_key(|e| e.0);
        }
        SymSparse { n: self.n, rows }
    }
}

impl SymSparse {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self.rows[i].binary_search_by_key(&j, |e| e.0) {
            Ok(k) => self.rows[i][k].1,
            Err(_) => 0.0,
        }
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|&(j, v)| v * x[j]).sum()).collect()
    }

    /// `x^T A y`.
    pub fn form(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.mul_vec(y);
        crate::numeric::pairwise_sum_by(self.n, |i| x[i] * ay[i])
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                d[(i, j)] = v;
            }
        }
        d
    }

    /// Coordinate triplets `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                out.push((i, j, v));
            }
        }
        out
    }

    /// Largest `|a_ij - a_ji|`; zero by construction, exposed for reports.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Principal submatrix on `keep` (indices into `self`), in that order.
    pub fn restrict(&self, keep: &[usize]) -> SymSparse {
        let mut map = vec![usize::MAX; self.n];
        for (k, &i) in keep.iter().enumerate() {
            map[i] = k;
        }
        let rows = keep
            .iter()
            .map(|&i| {
                self.rows[i]
                    .iter()
                    .filter(|e| map[e.0] != usize::MAX)
                    .map(|&(j, v)| (map[j], v))
                    .collect()
            })
            .collect();
        SymSparse { n: keep.len(), rows }
    }

    /// `D A D` for a diagonal `D`.
    pub fn scale_sym(&self, d: &[f64]) -> SymSparse {
        let rows = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| r.iter().map(|&(j, v)| (j, d[i] * v * d[j])).collect())
            .collect();
        SymSparse { n: self.n, rows }
    }

    /// Gershgorin bound on the spectral radius.
    pub fn gershgorin(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.iter().map(|e| e.1.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Reverse Cuthill-McKee ordering of the sparsity graph of `a`.
/// Returns `perm` with `perm[new] = old`.
pub fn rcm_order(a: &SymSparse) -> Vec<usize> {
    let n = a.dim();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        // Start each component from a pseudo-peripheral vertex of minimum degree.
        let seed = (0..n).filter(|&i| !visited[i]).min_by_key(|&i| degree[i]).unwrap();
        let start = pseudo_peripheral(a, seed, &visited);
        let mut queue = VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nb: Vec<usize> = a.row(v).iter().map(|e| e.0).filter(|&j| !visited[j]).collect();
            nb.sort_by_key(|&j| (degree[j], j));
            for j in nb {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(a: &SymSparse, seed: usize, blocked: &[bool]) -> usize {
    let mut start = seed;
    let mut ecc = 0;
    for _ in 0..8 {
        let (far, e) = farthest(a, start, blocked);
        if e <= ecc {
            break;
        }
        ecc = e;
        start = far;
    }
    start
}

fn farthest(a: &SymSparse, s: usize, blocked: &[bool]) -> (usize, usize) {
    let mut dist = vec![usize::MAX; a.dim()];
    let mut queue = VecDeque::new();
    dist[s] = 0;
    queue.push_back(s);
    let mut last = (s, 0);
    while let Some(v) = queue.pop_front() {
        if dist[v] > last.1 || (dist[v] == last.1 && a.row(v).len() < a.row(last.0).len()) {
            last = (v, dist[v]);
        }
        for &(j, _) in a.row(v) {
            if !blocked[j] && dist[j] == usize::MAX {
                dist[j] = dist[v] + 1;
                queue.push_back(j);
            }
        }
    }
    last
}

/// Cholesky factor `L` of a permuted SPD matrix stored by rows over the
/// envelope (from the first nonzero column to the diagonal).
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factor `a + shift * diag` under the ordering `perm` (`perm[new] = old`).
    pub fn factor(a: &SymSparse, shift: f64, diag: Option<&[f64]>, perm: &[usize]) -> Result<Self> {
        let n = a.dim();
        let mut inv = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        let mut first = vec![0; n];
        for i in 0..n {
            let old = perm[i];
            first[i] = a.row(old).iter().map(|e| inv[e.0]).filter(|&j| j <= i).min().unwrap_or(i).min(i);
        }
        let mut start = vec![0; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let mut data = vec![0.0; start[n]];
        for i in 0..n {
            let old = perm[i];
            for &(jo, v) in a.row(old) {
                let j = inv[jo];
                if j <= i {
                    data[start[i] + j - first[i]] += v;
                }
            }
            let d = diag.map_or(1.0, |d| d[old]);
            data[start[i] + i - first[i]] += shift * d;
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut s = data[start[i] + j - fi];
                let ri = start[i] + lo - fi;
                let rj = start[j] + lo - fj;
                let len = j - lo;
                let row_i = &data[ri..ri + len];
                let row_j = &data[rj..rj + len];
                s -= dot(row_i, row_j);
                if j < i {
                    data[start[i] + j - fi] = s / data[start[j] + j - fj];
                } else {
                    if !(s > 0.0) {
                        return Err(Error::NotSpd);
                    }
                    data[start[i] + i - fi] = s.sqrt();
                }
            }
        }
        Ok(Self { perm: perm.to_vec(), first, start, data })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Stored entries of the factor.
    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    /// Solve `(A + shift D) x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y: Vec<f64> = (0..n).map(|i| b[self.perm[i]]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let s = dot(&row[..i - fi], &y[fi..i]);
            y[i] = (y[i] - s) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            y[i] /= row[i - fi];
            let yi = y[i];
            for (k, l) in row[..i - fi].iter().enumerate() {
                y[fi + k] -= l * yi;
            }
        }
        let mut x = vec![0.0; n];
        for i in 0..n {
            x[self.perm[i]] = y[i];
        }
        x
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// `(P_n(z), P_n'(z))` by the three-term recurrence.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss-Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let h = 0.5 * (b - a);
    (
        x.iter().map(|t| a + h * (t + 1.0)).collect(),
        w.iter().map(|t| t * h).collect(),
    )
}

/// Orthonormalize the columns of `x` in place (two passes of modified
/// Gram-Schmidt), optionally against a fixed unit vector `u` first.
/// Columns that collapse are replaced by deterministic fill vectors.
pub fn orthonormalize(x: &mut DMatrix<f64>, u: Option<&DVector<f64>>) {
    let (n, p) = x.shape();
    let mut rng = SplitMix(0x9E37_79B9_7F4A_7C15);
    for j in 0..p {
        for attempt in 0..4 {
            for _ in 0..2 {
                if let Some(u) = u {
                    let c = u.dot(&x.column(j));
                    x.column_mut(j).axpy(-c, u, 1.0);
                }
                for k in 0..j {
                    let c = x.column(k).dot(&x.column(j));
                    let ck = x.column(k).clone_owned();
                    x.column_mut(j).axpy(-c, &ck, 1.0);
                }
            }
            let nrm = x.column(j).norm();
            if nrm > 1e-10 || attempt == 3 {
                x.column_mut(j).scale_mut(1.0 / nrm);
                break;
            }
            for i in 0..n {
                x[(i, j)] = rng.next_f64() - 0.5;
            }
        }
    }
}

/// Tiny deterministic generator for start vectors.
#[derive(Debug, Clone)]
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}
