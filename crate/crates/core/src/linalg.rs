//! Banded LU factorization and restarted GMRES.

use crate::error::{Error, Result};

/// LU factors of a banded matrix without pivoting.
///
/// Storage is row-major with `2·bw + 1` diagonals per row; entry `(i, j)` sits
/// at `i·(2bw+1) + (j − i + bw)`.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedLu {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandedLu {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    /// Adds `v` to entry `(i, j)`; `|i − j|` must not exceed the bandwidth.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i.abs_diff(j) <= self.bw);
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// In-place factorization; fails on a vanishing pivot.
    pub fn factor(&mut self) -> Result<()> {
        let (n, bw) = (self.n, self.bw);
        for k in 0..n {
            let pivot = self.data[self.idx(k, k)];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::Unsupported(format!("zero pivot at row {k} in banded factorization")));
            }
            let last = (k + bw).min(n - 1);
            for i in k + 1..=last {
                let ik = self.idx(i, k);
                let l = self.data[ik] / pivot;
                if l == 0.0 {
                    continue;
                }
                self.data[ik] = l;
                for j in k + 1..=last {
                    let kj = self.idx(k, j);
                    let u = self.data[kj];
                    if u != 0.0 {
                        let ij = self.idx(i, j);
                        self.data[ij] -= l * u;
                    }
                }
            }
        }
        Ok(())
    }

    /// Solves `LU x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            let first = i.saturating_sub(bw);
            let mut acc = b[i];
            for j in first..i {
                acc -= self.data[self.idx(i, j)] * b[j];
            }
            b[i] = acc;
        }
        for i in (0..n).rev() {
            let last = (i + bw).min(n - 1);
            let mut acc = b[i];
            for j in i + 1..=last {
                acc -= self.data[self.idx(i, j)] * b[j];
            }
            b[i] = acc / self.data[self.idx(i, i)];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Outcome of a GMRES run.
#[derive(Debug, Clone, Copy)]
pub struct GmresStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Right-preconditioned restarted GMRES for `A x = b` starting from `x`.
///
/// `apply` computes `A v`, `precond` overwrites its argument with `M⁻¹ v`.
pub fn gmres(
    apply: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    precond: &mut dyn FnMut(&mut [f64]),
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    restart: usize,
    max_iter: usize,
) -> GmresStats {
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return GmresStats {
            iterations: 0,
            relative_residual: 0.0,
        };
    }
    let mut total = 0;
    loop {
        let ax = apply(x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        if beta <= rel_tol * bnorm || total >= max_iter {
            return GmresStats {
                iterations: total,
                relative_residual: beta / bnorm,
            };
        }
        let m = restart.min(max_iter - total).max(1);
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        v.push(r.iter().map(|ri| ri / beta).collect());
        let mut hmat = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        let mut z_store: Vec<Vec<f64>> = Vec::with_capacity(m);
        for k in 0..m {
            let mut z = v[k].clone();
            precond(&mut z);
            let mut w = apply(&z);
            z_store.push(z);
            for i in 0..=k {
                let hik = dot(&w, &v[i]);
                hmat[i][k] = hik;
                for (wj, vj) in w.iter_mut().zip(&v[i]) {
                    *wj -= hik * vj;
                }
            }
            let hn = norm(&w);
            hmat[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * hmat[i][k] + sn[i] * hmat[i + 1][k];
                hmat[i + 1][k] = -sn[i] * hmat[i][k] + cs[i] * hmat[i + 1][k];
                hmat[i][k] = t;
            }
            let denom = (hmat[k][k] * hmat[k][k] + hmat[k + 1][k] * hmat[k + 1][k]).sqrt();
            if denom == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = hmat[k][k] / denom;
                sn[k] = hmat[k + 1][k] / denom;
            }
            hmat[k][k] = cs[k] * hmat[k][k] + sn[k] * hmat[k + 1][k];
            hmat[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            total += 1;
            if g[k + 1].abs() <= rel_tol * bnorm || hn == 0.0 {
                break;
            }
            v.push(w.iter().map(|wi| wi / hn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for j in i + 1..k_used {
                acc -= hmat[i][j] * y[j];
            }
            y[i] = if hmat[i][i] != 0.0 { acc / hmat[i][i] } else { 0.0 };
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, zi) in x.iter_mut().zip(&z_store[j]) {
                *xi += yj * zi;
            }
        }
    }
}
