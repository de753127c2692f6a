//! Legendre spectral elements in the vertical direction of the flattened strip.
//!
//! The strip coordinate is `zeta in [0, 1]`, with `zeta = 0` on the interface. Elements
//! are graded geometrically so the first one resolves the boundary layer of the highest
//! represented Fourier mode. Nodes shared between neighbouring elements are stored once.

use crate::error::{MuskatError, Result};

/// Polynomial order of every element.
pub const ELEMENT_ORDER: usize = 8;

/// Legendre polynomial `P_p(x)` and its derivative.
fn legendre(p: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if p == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=p {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    // derivative from the recurrence (1-x^2) P_p' = p (P_{p-1} - x P_p)
    let dp = if (1.0 - x * x).abs() < 1e-14 {
        let s = if x > 0.0 { 1.0 } else { (-1.0f64).powi(p as i32 - 1) };
        s * (p * (p + 1)) as f64 / 2.0
    } else {
        p as f64 * (p0 - x * p1) / (1.0 - x * x)
    };
    (p1, dp)
}

/// Gauss-Lobatto-Legendre nodes on `[-1, 1]` (ascending) and quadrature weights.
pub fn gll(p: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(p >= 1);
    let mut x = vec![0.0; p + 1];
    x[0] = -1.0;
    x[p] = 1.0;
    for i in 1..p {
        // interior nodes are the roots of P_p'; start from Chebyshev-Lobatto points
        let mut xi = -(std::f64::consts::PI * i as f64 / p as f64).cos();
        for _ in 0..100 {
            // q = (1 - x^2) P_p'  has roots at all GLL nodes; Newton on P_p' directly
            let (pp, dp) = legendre(p, xi);
            // P_p'' from the Legendre ODE: (1-x^2)P'' = 2x P' - p(p+1) P
            let d2 = (2.0 * xi * dp - (p * (p + 1)) as f64 * pp) / (1.0 - xi * xi);
            let step = dp / d2;
            xi -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        x[i] = xi;
    }
    let pf = p as f64;
    let w = x
        .iter()
        .map(|&xi| {
            let (pp, _) = legendre(p, xi);
            2.0 / (pf * (pf + 1.0) * pp * pp)
        })
        .collect();
    (x, w)
}

/// Collocation derivative matrix on the nodes `x`, row-major: `d[i][j] = l_j'(x_i)`.
pub fn diff_matrix(x: &[f64]) -> Vec<Vec<f64>> {
    let n = x.len();
    let bary: Vec<f64> = (0..n)
        .map(|j| {
            1.0 / (0..n)
                .filter(|&k| k != j)
                .map(|k| x[j] - x[k])
                .product::<f64>()
        })
        .collect();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                d[i][j] = bary[j] / bary[i] / (x[i] - x[j]);
                diag -= d[i][j];
            }
        }
        d[i][i] = diag;
    }
    d
}

/// Element boundaries on `[0, depth]`, geometric with first element `h0` (uniform when
/// uniform spacing is already finer than `h0`).
pub fn graded_boundaries(depth: f64, n_el: usize, h0: f64) -> Vec<f64> {
    let uniform = depth / n_el as f64;
    if uniform <= h0 {
        return (0..=n_el).map(|e| e as f64 * uniform).collect();
    }
    let total = |r: f64| h0 * (r.powi(n_el as i32) - 1.0) / (r - 1.0);
    let (mut lo, mut hi) = (1.0 + 1e-12, 2.0);
    while total(hi) < depth {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) > depth {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let r = 0.5 * (lo + hi);
    let mut b = Vec::with_capacity(n_el + 1);
    let mut acc = 0.0;
    b.push(0.0);
    for e in 0..n_el {
        acc += h0 * r.powi(e as i32);
        b.push(acc);
    }
    let scale = depth / acc;
    b.iter_mut().for_each(|v| *v *= scale);
    b
}

/// Vertical mesh of the flattened strip on `zeta in [0, 1]`.
#[derive(Clone, Debug)]
pub struct ZMesh {
    pub order: usize,
    pub n_el: usize,
    /// Global node coordinates, `n_el * order + 1` of them, ascending from 0 to 1.
    pub nodes: Vec<f64>,
    /// Half-length of each element in zeta (the reference-to-element Jacobian).
    pub half_len: Vec<f64>,
    /// Reference GLL weights and derivative matrix.
    pub weights: Vec<f64>,
    pub deriv: Vec<Vec<f64>>,
    /// Assembled quadrature weight per global node (sum over elements containing it).
    pub node_weight: Vec<f64>,
}

impl ZMesh {
    /// Mesh for a strip of physical depth `depth` under a grid whose largest wavenumber is
    /// `xi_max`. `n_z` must be a positive multiple of [`ELEMENT_ORDER`].
    pub fn new(n_z: usize, depth: f64, xi_max: f64) -> Result<Self> {
        if n_z < ELEMENT_ORDER || n_z % ELEMENT_ORDER != 0 {
            return Err(MuskatError::InvalidArgument(format!(
                "n_z must be a positive multiple of {ELEMENT_ORDER}, got {n_z}"
            )));
        }
        let p = ELEMENT_ORDER;
        let n_el = n_z / p;
        let h0 = (depth / n_el as f64).min(2.0 / xi_max);
        let phys = graded_boundaries(depth, n_el, h0);
        let bounds: Vec<f64> = phys.iter().map(|b| b / depth).collect();
        let (xg, wg) = gll(p);
        let deriv = diff_matrix(&xg);
        let mut nodes = Vec::with_capacity(n_z + 1);
        let mut half_len = Vec::with_capacity(n_el);
        let mut node_weight = vec![0.0; n_z + 1];
        for e in 0..n_el {
            let (a, b) = (bounds[e], bounds[e + 1]);
            let hl = 0.5 * (b - a);
            half_len.push(hl);
            let start = if e == 0 { 0 } else { 1 };
            for q in start..=p {
                nodes.push(a + hl * (xg[q] + 1.0));
            }
            for q in 0..=p {
                node_weight[e * p + q] += wg[q] * hl;
            }
        }
        *nodes.last_mut().expect("nonempty") = 1.0;
        Ok(ZMesh {
            order: p,
            n_el,
            nodes,
            half_len,
            weights: wg,
            deriv,
            node_weight,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Banded (lower storage) matrix of `xi2 * M(c11) + S(c22)` over all nodes, where
    /// `c11`, `c22` are per-node coefficients, `M` the lumped GLL mass and `S` the
    /// element stiffness in zeta.
    pub fn mode_matrix(&self, xi2: f64, c11: &[f64], c22: &[f64]) -> BandMatrix {
        let p = self.order;
        let mut m = BandMatrix::zeros(self.n_nodes(), p);
        for e in 0..self.n_el {
            let hl = self.half_len[e];
            for q in 0..=p {
                let g = e * p + q;
                *m.get_mut(g, g) += xi2 * self.weights[q] * hl * c11[g];
            }
            for a in 0..=p {
                for b in 0..=a {
                    let mut s = 0.0;
                    for q in 0..=p {
                        s += self.weights[q] * c22[e * p + q] * self.deriv[q][a] * self.deriv[q][b];
                    }
                    *m.get_mut(e * p + a, e * p + b) += s / hl;
                }
            }
        }
        m
    }
}

/// Symmetric banded matrix, lower band stored row-wise: `data[i][bw + j - i]` for
/// `i - bw <= j <= i`.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandMatrix {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Entry `(i, j)` with `j <= i <= j + bw`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            return 0.0;
        }
        self.data[i * (self.bw + 1) + self.bw + j - i]
    }

    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "entry outside band");
        &mut self.data[i * (self.bw + 1) + self.bw + j - i]
    }

    /// Trailing principal block from row/column `start` on.
    pub fn trailing(&self, start: usize) -> BandMatrix {
        let n = self.n - start;
        let mut out = BandMatrix::zeros(n, self.bw);
        for i in 0..n {
            for j in i.saturating_sub(self.bw)..=i {
                *out.get_mut(i, j) = self.get(i + start, j + start);
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            for j in i.saturating_sub(self.bw)..=i {
                let a = self.get(i, j);
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }
}

/// Cholesky factor `L L^T` of a symmetric positive definite banded matrix.
#[derive(Clone, Debug)]
pub struct BandedCholesky {
    l: BandMatrix,
}

impl BandedCholesky {
    pub fn factor(a: &BandMatrix) -> Result<Self> {
        let n = a.n;
        let bw = a.bw;
        let mut l = a.clone();
        for j in 0..n {
            let mut d = l.get(j, j);
            for k in j.saturating_sub(bw)..j {
                let v = l.get(j, k);
                d -= v * v;
            }
            if !(d > 0.0) {
                return Err(MuskatError::Numerical(format!(
                    "banded Cholesky: matrix not positive definite at pivot {j}"
                )));
            }
            let d = d.sqrt();
            *l.get_mut(j, j) = d;
            for i in (j + 1)..(j + bw + 1).min(n) {
                let mut s = l.get(i, j);
                for k in i.saturating_sub(bw)..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                *l.get_mut(i, j) = s / d;
            }
        }
        Ok(BandedCholesky { l })
    }

    pub fn size(&self) -> usize {
        self.l.n
    }

    /// Solves in place.
    pub fn solve(&self, x: &mut [f64]) {
        let n = self.l.n;
        let bw = self.l.bw;
        for i in 0..n {
            let mut s = x[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l.get(i, k) * x[k];
            }
            x[i] = s / self.l.get(i, i);
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..(i + bw + 1).min(n) {
                s -= self.l.get(k, i) * x[k];
            }
            x[i] = s / self.l.get(i, i);
        }
    }
}

/// Schur complement of the first node of a banded SPD matrix: `a00 - a0I aII^{-1} aI0`.
pub fn first_node_schur(a: &BandMatrix) -> Result<f64> {
    let inner = BandedCholesky::factor(&a.trailing(1))?;
    let mut col: Vec<f64> = (1..a.size()).map(|i| a.get(i, 0)).collect();
    let rhs = col.clone();
    inner.solve(&mut col);
    Ok(a.get(0, 0) - rhs.iter().zip(&col).map(|(r, c)| r * c).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gll_integrates_polynomials_exactly() {
        let (x, w) = gll(8);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // exact up to degree 2p - 1 = 15
        for deg in 0..=15 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-13, "degree {deg}");
        }
        for pair in x.windows(2) {
            assert!(pair[1] > pair[0]);
        }
    }

    #[test]
    fn diff_matrix_exact_on_polynomials() {
        let (x, _) = gll(8);
        let d = diff_matrix(&x);
        for deg in 1..=8 {
            for (i, row) in d.iter().enumerate() {
                let approx: f64 = row.iter().zip(&x).map(|(a, xj)| a * xj.powi(deg)).sum();
                let exact = deg as f64 * x[i].powi(deg - 1);
                assert!((approx - exact).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn graded_mesh_spans_depth() {
        let b = graded_boundaries(50.0, 8, 0.02);
        assert!((b[8] - 50.0).abs() < 1e-12);
        assert!((b[1] - 0.02).abs() < 1e-9);
        let b = graded_boundaries(1.0, 8, 0.5);
        assert!((b[1] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn banded_cholesky_matches_dense_solve() {
        let n = 20;
        let bw = 3;
        let mut a = BandMatrix::zeros(n, bw);
        for i in 0..n {
            *a.get_mut(i, i) = 4.0 + i as f64 * 0.1;
            for j in i.saturating_sub(bw)..i {
                *a.get_mut(i, j) = 0.3 / (1.0 + (i - j) as f64) + 0.01 * j as f64;
            }
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut b = a.matvec(&x);
        BandedCholesky::factor(&a).unwrap().solve(&mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-13);
        }
    }

    #[test]
    fn flat_strip_schur_is_k_tanh_k() {
        // the discrete flat-strip DN symbol against |k| tanh(|k| D)
        for &(depth, n_z) in &[(1.0, 64usize), (50.0, 96)] {
            let mesh = ZMesh::new(n_z, depth, 128.0).unwrap();
            let c11 = vec![depth; mesh.n_nodes()];
            let c22 = vec![1.0 / depth; mesh.n_nodes()];
            for k in [1.0f64, 3.0, 17.0, 64.0, 128.0] {
                let g = first_node_schur(&mesh.mode_matrix(k * k, &c11, &c22)).unwrap();
                let exact = k * (k * depth).tanh();
                assert!((g - exact).abs() / exact < 1e-9, "depth {depth} k {k}: {g} vs {exact}");
            }
        }
    }
}
