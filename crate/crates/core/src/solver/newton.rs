//! Damped inexact Newton iteration on an active node set.

use crate::error::{Error, Result};
use crate::field::VectorFieldSpec;
use crate::grid::{GridDomain, GridFunction};
use crate::kernel::KernelWeights;
use crate::linalg::{gmres, BandedLu};
use crate::operators::{fractional_at, local_at, local_jacobian, phi_prime, slot};

use super::{LogEntry, SolveConfig};

/// Active-set formulation: unknowns are the values at `active`; every other node is fixed.
pub(crate) struct System<'a> {
    pub grid: &'a GridDomain,
    pub p: f64,
    pub kernel: Option<&'a KernelWeights>,
    pub active: Vec<usize>,
    pub rhs: Vec<f64>,
    pos: Vec<usize>,
    bbox: [usize; 4],
}

const INACTIVE: usize = usize::MAX;

/// Dense storage for the nonlocal tangent is used up to this many active pairs.
const DENSE_TANGENT_PAIRS: usize = 30_000_000;

enum Tangent {
    None,
    /// Translation-invariant `p = 2` operator applied by FFT; `diag` holds the full row sums.
    Fft { diag: Vec<f64> },
    Dense { diag: Vec<f64>, off: Vec<f64> },
    /// Off-diagonal entries recomputed from `u` on every product.
    OnTheFly { diag: Vec<f64>, u: Vec<f64>, cap: f64, scale: f64 },
}

struct Linearization {
    local: Vec<[f64; 9]>,
    tangent: Tangent,
}

#[derive(Clone, Copy, PartialEq)]
pub(crate) enum Step {
    Newton,
    Picard,
}

impl<'a> System<'a> {
    pub fn new(grid: &'a GridDomain, p: f64, kernel: Option<&'a KernelWeights>, active: Vec<usize>, rhs: Vec<f64>) -> Result<Self> {
        if active.is_empty() {
            return Err(Error::InvalidGrid("no active nodes to solve for".into()));
        }
        let mut pos = vec![INACTIVE; grid.len()];
        let mut bbox = [usize::MAX, 0, usize::MAX, 0];
        for (r, &k) in active.iter().enumerate() {
            pos[k] = r;
            let [i, j] = grid.index(k);
            bbox[0] = bbox[0].min(i);
            bbox[1] = bbox[1].max(i);
            bbox[2] = bbox[2].min(j);
            bbox[3] = bbox[3].max(j);
        }
        if let Some(k) = kernel {
            k.check_grid(grid)?;
        }
        Ok(System {
            grid,
            p,
            kernel: kernel.filter(|k| !k.is_disabled()),
            active,
            rhs,
            pos,
            bbox,
        })
    }

    /// Residual at the active nodes and its round-off magnitude.
    pub fn residual(&self, u: &GridFunction, spec: &VectorFieldSpec) -> Result<(Vec<f64>, Vec<f64>)> {
        let (loc, loc_mag) = local_at(self.grid, &u.values, spec, &self.active)?;
        let (nl, nl_mag) = match self.kernel {
            Some(k) => fractional_at(k, u, self.p, &self.active),
            None => (vec![0.0; self.active.len()], vec![0.0; self.active.len()]),
        };
        let r = (0..self.active.len()).map(|i| loc[i] + nl[i] - self.rhs[i]).collect();
        let m = (0..self.active.len())
            .map(|i| loc_mag[i] + nl_mag[i] + self.rhs[i].abs())
            .collect();
        Ok((r, m))
    }

    fn linearize(&self, u: &GridFunction, spec: &VectorFieldSpec, step: Step, cap: f64) -> Result<Linearization> {
        let local = match step {
            Step::Newton => local_jacobian(self.grid, &u.values, spec, &self.active)?,
            Step::Picard => self.picard_rows(&u.values, spec)?,
        };
        let tangent = match self.kernel {
            None => Tangent::None,
            Some(k) => self.nonlocal_tangent(k, u, step, cap),
        };
        Ok(Linearization { local, tangent })
    }

    /// Rows of `v ↦ −div(a(|D u|²) D_n v)` with the coefficients frozen at `u`.
    fn picard_rows(&self, u: &[f64], spec: &VectorFieldSpec) -> Result<Vec<[f64; 9]>> {
        let grid = self.grid;
        let h = grid.h();
        let nx = grid.shape()[0];
        let mut rows = Vec::with_capacity(self.active.len());
        for &k in &self.active {
            let mut row = [0.0; 9];
            for axis in 0..grid.dim() {
                let step = if axis == 0 { 1 } else { nx };
                for (base, shift) in [(k, 0i64), (k - step, -1i64)] {
                    let dn = if axis == 0 { (u[base + 1] - u[base]) / h } else { (u[base + nx] - u[base]) / h };
                    let dt = if grid.dim() == 1 {
                        0.0
                    } else if axis == 0 {
                        (u[base + nx] - u[base - nx] + u[base + 1 + nx] - u[base + 1 - nx]) / (4.0 * h)
                    } else {
                        (u[base + 1] - u[base - 1] + u[base + nx + 1] - u[base + nx - 1]) / (4.0 * h)
                    };
                    let (a, _) = spec.scalar_parts(dn * dn + dt * dt)?;
                    let sign = if shift == 0 { -1.0 } else { 1.0 };
                    let c = sign * a / (h * h);
                    let (hi, lo) = if axis == 0 {
                        (slot(shift + 1, 0), slot(shift, 0))
                    } else {
                        (slot(0, shift + 1), slot(0, shift))
                    };
                    row[hi] += c;
                    row[lo] -= c;
                }
            }
            rows.push(row);
        }
        Ok(rows)
    }

    fn nonlocal_tangent(&self, k: &KernelWeights, u: &GridFunction, step: Step, cap: f64) -> Tangent {
        let p = self.p;
        let scale = match step {
            Step::Newton => 1.0,
            Step::Picard => 1.0 / (p - 1.0),
        };
        if p == 2.0 && k.is_translation_invariant() {
            let conv = k.convolver();
            let diag = self.active.iter().map(|&i| conv.row_sums[i] + k.far_weight(i)).collect();
            return Tangent::Fft { diag };
        }
        let [nx, ny] = k.shape();
        let v = &u.values;
        let far = u.far();
        let diag: Vec<f64> = self
            .active
            .iter()
            .map(|&i| {
                let (ix, iy) = (i % nx, i / nx);
                let mut acc = 0.0;
                for jy in 0..ny {
                    let row = k.table_row(jy as i64 - iy as i64);
                    for jx in 0..nx {
                        let j = jy * nx + jx;
                        let w = row[nx - 1 - ix + jx];
                        if w != 0.0 {
                            acc += w * k.modulation(i, j) * phi_prime(v[i] - v[j], p, cap);
                        }
                    }
                }
                scale * (acc + k.far_weight(i) * phi_prime(v[i] - far, p, cap))
            })
            .collect();
        let n = self.active.len();
        if n * n <= DENSE_TANGENT_PAIRS {
            let mut off = vec![0.0; n * n];
            for (r, &i) in self.active.iter().enumerate() {
                for (c, &j) in self.active.iter().enumerate() {
                    if i != j {
                        off[r * n + c] = scale * k.weight(i, j) * phi_prime(v[i] - v[j], p, cap);
                    }
                }
            }
            Tangent::Dense { diag, off }
        } else {
            Tangent::OnTheFly {
                diag,
                u: v.clone(),
                cap,
                scale,
            }
        }
    }

    fn apply(&self, lin: &Linearization, d: &[f64]) -> Vec<f64> {
        let grid = self.grid;
        let nx = grid.shape()[0] as i64;
        let mut full = vec![0.0; grid.len()];
        for (r, &k) in self.active.iter().enumerate() {
            full[k] = d[r];
        }
        let mut out = vec![0.0; d.len()];
        for (r, &k) in self.active.iter().enumerate() {
            let row = &lin.local[r];
            let mut acc = 0.0;
            for dj in -1..=1i64 {
                for di in -1..=1i64 {
                    let c = row[slot(di, dj)];
                    if c != 0.0 {
                        acc += c * full[(k as i64 + di + dj * nx) as usize];
                    }
                }
            }
            out[r] = acc;
        }
        match &lin.tangent {
            Tangent::None => {}
            Tangent::Fft { diag } => {
                let conv = self.kernel.unwrap().convolver();
                let wd = conv.apply(&full);
                for (r, &k) in self.active.iter().enumerate() {
                    out[r] += diag[r] * d[r] - wd[k];
                }
            }
            Tangent::Dense { diag, off } => {
                let n = d.len();
                for r in 0..n {
                    let row = &off[r * n..(r + 1) * n];
                    let s: f64 = row.iter().zip(d).map(|(a, b)| a * b).sum();
                    out[r] += diag[r] * d[r] - s;
                }
            }
            Tangent::OnTheFly { diag, u, cap, scale } => {
                let k = self.kernel.unwrap();
                let [nx, _] = k.shape();
                let [x0, x1, y0, y1] = self.bbox;
                for (r, &i) in self.active.iter().enumerate() {
                    let (ix, iy) = (i % nx, i / nx);
                    let ui = u[i];
                    let mut acc = 0.0;
                    for jy in y0..=y1 {
                        let row = k.table_row(jy as i64 - iy as i64);
                        for jx in x0..=x1 {
                            let j = jy * nx + jx;
                            let dj = full[j];
                            if dj != 0.0 {
                                let w = row[nx - 1 - ix + jx];
                                acc += w * k.modulation(i, j) * phi_prime(ui - u[j], self.p, *cap) * dj;
                            }
                        }
                    }
                    out[r] += diag[r] * d[r] - scale * acc;
                }
            }
        }
        out
    }

    /// Banded LU of the local rows plus the nonlocal diagonal over the active bounding box.
    fn preconditioner(&self, lin: &Linearization) -> Result<(BandedLu, Vec<usize>)> {
        let grid = self.grid;
        let [x0, x1, y0, y1] = self.bbox;
        let bx = x1 - x0 + 1;
        let by = y1 - y0 + 1;
        let nb = bx * by;
        let bw = if grid.dim() == 1 { 1 } else { bx + 1 };
        let nx = grid.shape()[0];
        let to_b = |k: usize| -> usize {
            let [i, j] = grid.index(k);
            (i - x0) + bx * (j - y0)
        };
        let map: Vec<usize> = self.active.iter().map(|&k| to_b(k)).collect();
        let diag: Option<&Vec<f64>> = match &lin.tangent {
            Tangent::None => None,
            Tangent::Fft { diag } | Tangent::Dense { diag, .. } | Tangent::OnTheFly { diag, .. } => Some(diag),
        };
        let mut scale = 0.0f64;
        for row in &lin.local {
            scale = scale.max(row[slot(0, 0)].abs());
        }
        let mut shift = 0.0;
        for attempt in 0..4 {
            let mut lu = BandedLu::zeros(nb, bw);
            let mut is_active = vec![false; nb];
            for (r, &k) in self.active.iter().enumerate() {
                let b = map[r];
                is_active[b] = true;
                let row = &lin.local[r];
                for dj in -1..=1i64 {
                    for di in -1..=1i64 {
                        let c = row[slot(di, dj)];
                        if c == 0.0 {
                            continue;
                        }
                        let m = (k as i64 + di + dj * nx as i64) as usize;
                        if self.pos[m] != INACTIVE {
                            lu.add(b, to_b(m), c);
                        }
                    }
                }
                if let Some(d) = diag {
                    lu.add(b, b, d[r]);
                }
                if shift > 0.0 {
                    lu.add(b, b, shift);
                }
            }
            for (b, act) in is_active.iter().enumerate() {
                if !act {
                    lu.add(b, b, 1.0);
                }
            }
            match lu.factor() {
                Ok(()) => return Ok((lu, map)),
                Err(e) if attempt == 3 => return Err(e),
                Err(_) => shift = (scale.max(1e-300)) * 10f64.powi(-10 + 3 * attempt),
            }
        }
        unreachable!()
    }

    /// Solves the linearized system for a direction `d` with `J d ≈ −r`.
    fn direction(&self, u: &GridFunction, spec: &VectorFieldSpec, r: &[f64], step: Step, cap: f64, cfg: &SolveConfig) -> Result<Vec<f64>> {
        let lin = self.linearize(u, spec, step, cap)?;
        let (lu, map) = self.preconditioner(&lin)?;
        let nb = lu.n();
        let b: Vec<f64> = r.iter().map(|v| -v).collect();
        let mut x = vec![0.0; r.len()];
        let mut precond = |v: &mut [f64]| {
            let mut full = vec![0.0; nb];
            for (i, &bi) in map.iter().enumerate() {
                full[bi] = v[i];
            }
            lu.solve(&mut full);
            for (i, &bi) in map.iter().enumerate() {
                v[i] = full[bi];
            }
        };
        let mut apply = |v: &[f64]| self.apply(&lin, v);
        gmres(&mut apply, &mut precond, &b, &mut x, cfg.gmres_tol, cfg.gmres_restart, cfg.gmres_max_iter);
        Ok(x)
    }

    fn with_update(&self, u: &GridFunction, d: &[f64], lambda: f64) -> GridFunction {
        let mut out = u.clone();
        for (r, &k) in self.active.iter().enumerate() {
            out.values[k] += lambda * d[r];
        }
        out
    }

    /// Newton iteration at a fixed field; returns the final iterate and its residual norm.
    #[allow(clippy::too_many_arguments)]
    pub fn newton(
        &self,
        mut u: GridFunction,
        spec: &VectorFieldSpec,
        eps: f64,
        cap: f64,
        target: f64,
        scale: f64,
        cfg: &SolveConfig,
        log: &mut Vec<LogEntry>,
        iter_count: &mut usize,
    ) -> Result<(GridFunction, f64, bool)> {
        let (mut r, _) = self.residual(&u, spec)?;
        let mut rn = norm(&r);
        log.push(LogEntry {
            iter: *iter_count,
            residual: rn / scale,
            step: 0.0,
            eps,
        });
        while rn > target {
            if *iter_count >= cfg.max_newton {
                return Ok((u, rn, false));
            }
            *iter_count += 1;
            let mut accepted = None;
            let kinds: &[Step] = if cfg.picard_fallback {
                &[Step::Newton, Step::Picard]
            } else {
                &[Step::Newton]
            };
            for &kind in kinds {
                let d = self.direction(&u, spec, &r, kind, cap, cfg)?;
                let mut lambda = 1.0;
                while lambda >= cfg.min_step {
                    let trial = self.with_update(&u, &d, lambda);
                    if let Ok((rt, _)) = self.residual(&trial, spec) {
                        let rtn = norm(&rt);
                        if rtn.is_finite() && rtn <= (1.0 - cfg.armijo_slope * lambda) * rn {
                            accepted = Some((trial, rt, rtn, lambda));
                            break;
                        }
                    }
                    lambda *= cfg.backtrack;
                }
                if accepted.is_some() {
                    break;
                }
            }
            match accepted {
                Some((trial, rt, rtn, lambda)) => {
                    u = trial;
                    r = rt;
                    rn = rtn;
                    log.push(LogEntry {
                        iter: *iter_count,
                        residual: rn / scale,
                        step: lambda,
                        eps,
                    });
                }
                None => return Ok((u, rn, false)),
            }
        }
        Ok((u, rn, true))
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    crate::numeric::pairwise_sum(&v.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt()
}
