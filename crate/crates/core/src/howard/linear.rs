//! Linear solves for a fixed policy: banded LU with partial pivoting for
//! one-dimensional stencils and restarted GMRES for the periodic 2D systems.

use crate::error::{Error, Result};

/// Widest band handled by the direct banded solver.
const MAX_DIRECT_BAND: usize = 8;
/// Required relative residual of every linear solve.
pub const LINEAR_TOL: f64 = 1e-12;

/// Square sparse matrix with a fixed number of slots per row.
#[derive(Debug, Clone)]
pub struct SparseRows {
    n: usize,
    width: usize,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseRows {
    pub fn new(n: usize, width: usize) -> Self {
        let cols = (0..n).flat_map(|i| std::iter::repeat(i as u32).take(width)).collect();
        Self {
            n,
            width,
            cols,
            vals: vec![0.0; n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> (&mut [u32], &mut [f64]) {
        let s = i * self.width;
        (
            &mut self.cols[s..s + self.width],
            &mut self.vals[s..s + self.width],
        )
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let s = i * self.width;
        (&self.cols[s..s + self.width], &self.vals[s..s + self.width])
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            *yi = c.iter().zip(v).map(|(&j, &m)| m * x[j as usize]).sum();
        }
    }

    /// `‖M‖∞`.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest `|j - i|` over nonzero entries.
    pub fn bandwidth(&self) -> usize {
        let mut bw = 0;
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, &m) in c.iter().zip(v) {
                if m != 0.0 {
                    bw = bw.max((j as usize).abs_diff(i));
                }
            }
        }
        bw
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter()
                    .zip(v)
                    .filter(|(&j, _)| j as usize == i)
                    .map(|(_, &m)| m)
                    .sum()
            })
            .collect()
    }

    /// Relative residual `‖Mx - b‖∞ / (‖M‖∞‖x‖∞ + ‖b‖∞)`.
    pub fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        let r = y.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        let scale = self.norm_inf() * sup_norm(x) + sup_norm(b);
        if scale == 0.0 {
            r
        } else {
            r / scale
        }
    }
}

fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Solves `M x = b`, dispatching on the bandwidth of `M`.
pub fn solve(m: &SparseRows, b: &[f64]) -> Result<Vec<f64>> {
    let bw = m.bandwidth();
    let mut x = if bw <= MAX_DIRECT_BAND {
        let lu = BandedLu::factor(m, bw)?;
        let mut x = b.to_vec();
        lu.solve_in_place(&mut x);
        // one round of refinement guards against growth from pivoting
        if m.relative_residual(&x, b) > LINEAR_TOL {
            refine(m, b, &mut x, |r| lu.solve_in_place(r));
        }
        x
    } else {
        gmres(m, b, None, 1e-14, 60, 200)?
    };
    let rel = m.relative_residual(&x, b);
    if !rel.is_finite() || rel > LINEAR_TOL {
        if bw > MAX_DIRECT_BAND && rel.is_finite() {
            x = gmres(m, b, Some(&x), 1e-15, 120, 400)?;
            let rel = m.relative_residual(&x, b);
            if rel <= LINEAR_TOL {
                return Ok(x);
            }
        }
        return Err(Error::Singular(format!(
            "relative residual {rel:.3e} exceeds {LINEAR_TOL:.0e}"
        )));
    }
    Ok(x)
}

fn refine(m: &SparseRows, b: &[f64], x: &mut [f64], solve: impl Fn(&mut [f64])) {
    let mut r = vec![0.0; b.len()];
    m.matvec(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    solve(&mut r);
    for (xi, di) in x.iter_mut().zip(&r) {
        *xi += di;
    }
}

/// LU factorization of a band matrix with partial pivoting; the upper band
/// grows by `kl` to hold pivoting fill-in.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    stride: usize,
    ab: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    pub fn factor(m: &SparseRows, bandwidth: usize) -> Result<Self> {
        let n = m.dim();
        let kl = bandwidth;
        let ku = bandwidth;
        let stride = 2 * kl + ku + 1;
        let mut ab = vec![0.0; n * stride];
        let idx = |r: usize, c: usize| r * stride + (c + kl - r);
        let mut scale = 0.0_f64;
        for i in 0..n {
            let (cols, vals) = m.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if v != 0.0 {
                    ab[idx(i, j as usize)] += v;
                    scale = scale.max(v.abs());
                }
            }
        }
        let mut pivots = vec![0; n];
        let mut min_pivot = f64::INFINITY;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = ab[idx(k, k)].abs();
            for r in k + 1..=last_row {
                let v = ab[idx(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            min_pivot = min_pivot.min(best);
            if best == 0.0 || best <= 1e-14 * scale {
                return Err(Error::Singular(format!(
                    "pivot {best:.3e} at row {k} (matrix scale {scale:.3e})"
                )));
            }
            pivots[k] = p;
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                for c in k..=last_col {
                    ab.swap(idx(k, c), idx(p, c));
                }
            }
            let pivot = ab[idx(k, k)];
            for r in k + 1..=last_row {
                let l = ab[idx(r, k)] / pivot;
                ab[idx(r, k)] = l;
                if l != 0.0 {
                    for c in k + 1..=last_col {
                        ab[idx(r, c)] -= l * ab[idx(k, c)];
                    }
                }
            }
        }
        log::trace!("banded LU n={n} bw={bandwidth} min pivot {min_pivot:.3e}");
        Ok(Self {
            n,
            kl,
            ku,
            stride,
            ab,
            pivots,
        })
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.ab[r * self.stride + (c + self.kl - r)]
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for r in k + 1..=(k + self.kl).min(n - 1) {
                    b[r] -= self.at(r, k) * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for c in k + 1..=(k + self.kl + self.ku).min(n - 1) {
                s -= self.at(k, c) * b[c];
            }
            b[k] = s / self.at(k, k);
        }
    }
}

/// Restarted GMRES with right Jacobi preconditioning.
pub fn gmres(
    m: &SparseRows,
    b: &[f64],
    x0: Option<&[f64]>,
    rel_tol: f64,
    restart: usize,
    max_cycles: usize,
) -> Result<Vec<f64>> {
    let n = m.dim();
    let diag = m.diagonal();
    if diag.iter().any(|d| *d == 0.0 || !d.is_finite()) {
        return Err(Error::Singular("zero diagonal entry in iterative solve".into()));
    }
    let inv_diag: Vec<f64> = diag.iter().map(|d| 1.0 / d).collect();
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let bnorm = l2(b);
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let target = rel_tol * bnorm;
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    for _cycle in 0..max_cycles {
        m.matvec(&x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let beta = l2(&r);
        if beta <= target {
            return Ok(x);
        }
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(restart + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let mut cs = vec![0.0; restart];
        let mut sn = vec![0.0; restart];
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut used = 0;
        for j in 0..restart {
            for ((zi, vi), di) in z.iter_mut().zip(&basis[j]).zip(&inv_diag) {
                *zi = vi * di;
            }
            m.matvec(&z, &mut w);
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(&w, v);
                h[i][j] = hij;
                for (wk, vk) in w.iter_mut().zip(v) {
                    *wk -= hij * vk;
                }
            }
            let hnext = l2(&w);
            h[j + 1][j] = hnext;
            for i in 0..j {
                let tmp = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = tmp;
            }
            let denom = (h[j][j] * h[j][j] + h[j + 1][j] * h[j + 1][j]).sqrt();
            if denom == 0.0 {
                used = j;
                break;
            }
            cs[j] = h[j][j] / denom;
            sn[j] = h[j + 1][j] / denom;
            h[j][j] = denom;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            if g[j + 1].abs() <= target || hnext == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hnext).collect());
        }
        // back substitution for the least-squares coefficients
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for k in i + 1..used {
                s -= h[i][k] * y[k];
            }
            y[i] = s / h[i][i];
        }
        for (k, yk) in y.iter().enumerate() {
            for ((xi, vi), di) in x.iter_mut().zip(&basis[k]).zip(&inv_diag) {
                *xi += yk * vi * di;
            }
        }
    }
    m.matvec(&x, &mut r);
    let res = r.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    if res <= target * 10.0 {
        Ok(x)
    } else {
        Err(Error::Singular(format!(
            "GMRES stagnated at relative residual {:.3e}",
            res / bnorm
        )))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn l2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense Gaussian elimination with partial pivoting, test oracle only.
    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut a: Vec<Vec<f64>> = a.to_vec();
        let mut b = b.to_vec();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
            a.swap(k, p);
            b.swap(k, p);
            for i in k + 1..n {
                let l = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= l * a[k][j];
                }
                b[i] -= l * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    fn to_sparse(a: &[Vec<f64>], width: usize) -> SparseRows {
        let n = a.len();
        let mut m = SparseRows::new(n, width);
        for i in 0..n {
            let (c, v) = m.row_mut(i);
            let mut slot = 0;
            for j in 0..n {
                if a[i][j] != 0.0 {
                    c[slot] = j as u32;
                    v[slot] = a[i][j];
                    slot += 1;
                }
            }
        }
        m
    }

    #[test]
    fn laplacian_matches_dense_oracle() {
        let n = 10;
        let dx: f64 = 0.1;
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = 2.0 / (dx * dx);
            if i > 0 {
                a[i][i - 1] = -1.0 / (dx * dx);
            }
            if i + 1 < n {
                a[i][i + 1] = -1.0 / (dx * dx);
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let x = solve(&to_sparse(&a, 3), &b).unwrap();
        let oracle = dense_solve(&a, &b);
        for (p, q) in x.iter().zip(&oracle) {
            assert!((p - q).abs() <= 1e-12 * (1.0 + q.abs()));
        }
    }

    #[test]
    fn pivoting_banded_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for bw in 1..=3 {
            let n = 25;
            let mut a = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in i.saturating_sub(bw)..=(i + bw).min(n - 1) {
                    a[i][j] = rng.gen_range(-1.0..1.0);
                }
                // weak diagonal forces row interchanges
                a[i][i] *= 0.01;
                a[i][i] += 0.05;
            }
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = solve(&to_sparse(&a, 2 * bw + 1), &b).unwrap();
            let oracle = dense_solve(&a, &b);
            for (p, q) in x.iter().zip(&oracle) {
                assert!((p - q).abs() <= 1e-9 * (1.0 + q.abs()), "{p} vs {q}");
            }
        }
    }

    #[test]
    fn gmres_on_periodic_wrap() {
        // 1D periodic Laplacian plus identity has a full-width wrap entry
        let n = 40;
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = 3.0;
            a[i][(i + 1) % n] = -1.0;
            a[i][(i + n - 1) % n] = -1.0;
            a[i][(i + 5) % n] += 0.3;
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let m = to_sparse(&a, 4);
        assert!(m.bandwidth() > MAX_DIRECT_BAND);
        let x = solve(&m, &b).unwrap();
        let oracle = dense_solve(&a, &b);
        for (p, q) in x.iter().zip(&oracle) {
            assert!((p - q).abs() <= 1e-11);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let err = solve(&to_sparse(&a, 2), &[1.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
    }
}
