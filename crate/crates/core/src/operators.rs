//! Discrete local and nonlocal p-Laplacians, their linearizations, and the residual.
//!
//! The local part is an edge-flux divergence: on each cell edge the full
//! gradient is reconstructed from the normal difference and the average of
//! the two transverse centered differences, `A` is applied, and the normal
//! component is differenced. The nonlocal part sums `w_ij φ(u_i − u_j)` with
//! `φ(t) = |t|^{p−2} t` over every node of the box plus a far-field term.

use crate::error::{Error, Result};
use crate::field::VectorFieldSpec;
use crate::grid::{GridDomain, GridFunction};
use crate::kernel::KernelWeights;
use crate::measure::Measure;
use crate::params::ParamSet;

/// Stencil slot of the offset `(di, dj) ∈ {−1,0,1}²`.
#[inline]
pub fn slot(di: i64, dj: i64) -> usize {
    ((di + 1) + 3 * (dj + 1)) as usize
}

fn check_full_stencil(grid: &GridDomain, k: usize) -> Result<()> {
    let [i, j] = grid.index(k);
    let [nx, ny] = grid.shape();
    let ok_x = i >= 1 && i + 1 < nx;
    let ok_y = grid.dim() == 1 || (j >= 1 && j + 1 < ny);
    if ok_x && ok_y {
        Ok(())
    } else {
        Err(Error::InvalidGrid(format!("node {k} has no full stencil")))
    }
}

/// Normal and transverse gradient components on the edge from node `k` in direction `axis`.
#[inline]
fn edge_gradient(grid: &GridDomain, u: &[f64], k: usize, axis: usize) -> (f64, f64) {
    let h = grid.h();
    let nx = grid.shape()[0];
    if grid.dim() == 1 {
        return ((u[k + 1] - u[k]) / h, 0.0);
    }
    if axis == 0 {
        let normal = (u[k + 1] - u[k]) / h;
        let trans = (u[k + nx] - u[k - nx] + u[k + 1 + nx] - u[k + 1 - nx]) / (4.0 * h);
        (normal, trans)
    } else {
        let normal = (u[k + nx] - u[k]) / h;
        let trans = (u[k + 1] - u[k - 1] + u[k + nx + 1] - u[k + nx - 1]) / (4.0 * h);
        (normal, trans)
    }
}

/// Normal flux `A(D)·e_axis` on the edge leaving node `k` in the positive `axis` direction.
#[inline]
fn edge_flux(grid: &GridDomain, u: &[f64], k: usize, axis: usize, spec: &VectorFieldSpec) -> Result<f64> {
    let (dn, dt) = edge_gradient(grid, u, k, axis);
    let (a, _) = spec.scalar_parts(dn * dn + dt * dt)?;
    Ok(a * dn)
}

/// `−div_h A(D_h u)` at the listed nodes, with the magnitude `Σ|flux|/h` used for round-off estimates.
pub fn local_at(grid: &GridDomain, u: &[f64], spec: &VectorFieldSpec, nodes: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
    let h = grid.h();
    let nx = grid.shape()[0];
    let mut out = Vec::with_capacity(nodes.len());
    let mut mag = Vec::with_capacity(nodes.len());
    for &k in nodes {
        check_full_stencil(grid, k)?;
        let mut acc = 0.0;
        let mut abs = 0.0;
        for axis in 0..grid.dim() {
            let step = if axis == 0 { 1 } else { nx };
            let fp = edge_flux(grid, u, k, axis, spec)?;
            let fm = edge_flux(grid, u, k - step, axis, spec)?;
            acc -= (fp - fm) / h;
            abs += (fp.abs() + fm.abs()) / h;
        }
        out.push(acc);
        mag.push(abs);
    }
    Ok((out, mag))
}

/// `−div A(Du)` at every interior node; zero elsewhere.
pub fn apply_local_p_laplacian(u: &GridFunction, grid: &GridDomain, spec: &VectorFieldSpec) -> Result<GridFunction> {
    u.check_grid(grid)?;
    let nodes = grid.interior_nodes();
    let (vals, _) = local_at(grid, &u.values, spec, &nodes)?;
    let mut out = vec![0.0; grid.len()];
    for (k, v) in nodes.iter().zip(vals) {
        out[*k] = v;
    }
    Ok(GridFunction {
        values: out,
        far_field: Some(0.0),
    })
}

/// Analytic 9-point Jacobian rows of the local operator at the listed nodes.
pub fn local_jacobian(grid: &GridDomain, u: &[f64], spec: &VectorFieldSpec, nodes: &[usize]) -> Result<Vec<[f64; 9]>> {
    let h = grid.h();
    let nx = grid.shape()[0];
    let mut rows = Vec::with_capacity(nodes.len());
    for &k in nodes {
        check_full_stencil(grid, k)?;
        let mut row = [0.0; 9];
        if grid.dim() == 1 {
            for (base, sign) in [(k, -1.0), (k - 1, 1.0)] {
                let (dn, _) = edge_gradient(grid, u, base, 0);
                let (a, da) = spec.scalar_parts(dn * dn)?;
                let dfd = a + da * dn * dn;
                // Edge from `base` to `base + 1`; node k sits at offset (base − k).
                let off = base as i64 - k as i64;
                row[slot(off + 1, 0)] += sign * dfd / (h * h);
                row[slot(off, 0)] -= sign * dfd / (h * h);
            }
            rows.push(row);
            continue;
        }
        for axis in 0..2 {
            let step = if axis == 0 { 1 } else { nx };
            for (base, sign, shift) in [(k, -1.0, 0i64), (k - step, 1.0, -1i64)] {
                let (dn, dt) = edge_gradient(grid, u, base, axis);
                let jac = crate::field::jacobian_a(
                    if axis == 0 { [dn, dt] } else { [dt, dn] },
                    spec,
                )?;
                let (dfdn, dfdt) = if axis == 0 {
                    (jac[0][0], jac[0][1])
                } else {
                    (jac[1][1], jac[1][0])
                };
                let c = sign / h;
                // Map (normal offset, transverse offset) to (di, dj).
                let put = |row: &mut [f64; 9], n_off: i64, t_off: i64, v: f64| {
                    let (di, dj) = if axis == 0 { (n_off, t_off) } else { (t_off, n_off) };
                    row[slot(di, dj)] += v;
                };
                put(&mut row, shift + 1, 0, c * dfdn / h);
                put(&mut row, shift, 0, -c * dfdn / h);
                let q = c * dfdt / (4.0 * h);
                put(&mut row, shift, 1, q);
                put(&mut row, shift, -1, -q);
                put(&mut row, shift + 1, 1, q);
                put(&mut row, shift + 1, -1, -q);
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Clone, Copy)]
enum Power {
    Two,
    Three,
    Half,
    General(f64),
}

impl Power {
    fn of(p: f64) -> Power {
        if p == 2.0 {
            Power::Two
        } else if p == 3.0 {
            Power::Three
        } else if p == 2.5 {
            Power::Half
        } else {
            Power::General(p)
        }
    }
}

#[inline]
fn nonlocal_row(
    kernel: &KernelWeights,
    u: &[f64],
    i: usize,
    far: f64,
    phi: impl Fn(f64) -> f64,
) -> (f64, f64) {
    let [nx, ny] = kernel.shape();
    let ix = i % nx;
    let iy = i / nx;
    let ui = u[i];
    let mut acc = 0.0;
    let mut abs = 0.0;
    let modulated = !kernel.is_translation_invariant();
    for jy in 0..ny {
        let row = kernel.table_row(jy as i64 - iy as i64);
        let w = &row[nx - 1 - ix..2 * nx - 1 - ix];
        let uj = &u[jy * nx..(jy + 1) * nx];
        let mut racc = 0.0;
        let mut rabs = 0.0;
        if modulated {
            for jx in 0..nx {
                let v = w[jx] * kernel.modulation(i, jy * nx + jx) * phi(ui - uj[jx]);
                racc += v;
                rabs += v.abs();
            }
        } else {
            for jx in 0..nx {
                let v = w[jx] * phi(ui - uj[jx]);
                racc += v;
                rabs += v.abs();
            }
        }
        acc += racc;
        abs += rabs;
    }
    let f = kernel.far_weight(i) * phi(ui - far);
    (acc + f, abs + f.abs())
}

/// Nonlocal operator `Σ_j w_ij φ(u_i − u_j) + w_i^far φ(u_i − g_∞)` at the listed nodes,
/// with the magnitude `Σ|terms|`.
pub fn fractional_at(kernel: &KernelWeights, u: &GridFunction, p: f64, nodes: &[usize]) -> (Vec<f64>, Vec<f64>) {
    if kernel.is_disabled() {
        return (vec![0.0; nodes.len()], vec![0.0; nodes.len()]);
    }
    let far = u.far();
    let v = &u.values;
    if p == 2.0 && kernel.is_translation_invariant() {
        let conv = kernel.convolver();
        let wu = conv.apply(v);
        let mut out = Vec::with_capacity(nodes.len());
        let mut mag = Vec::with_capacity(nodes.len());
        for &i in nodes {
            let d = conv.row_sums[i] + kernel.far_weight(i);
            out.push(d * v[i] - wu[i] - kernel.far_weight(i) * far);
            mag.push(d * v[i].abs() + wu[i].abs() + kernel.far_weight(i) * far.abs());
        }
        return (out, mag);
    }
    let rows: Vec<(f64, f64)> = match Power::of(p) {
        Power::Two => nodes.iter().map(|&i| nonlocal_row(kernel, v, i, far, |t| t)).collect(),
        Power::Three => nodes.iter().map(|&i| nonlocal_row(kernel, v, i, far, |t| t.abs() * t)).collect(),
        Power::Half => nodes
            .iter()
            .map(|&i| nonlocal_row(kernel, v, i, far, |t| t.abs().sqrt() * t))
            .collect(),
        Power::General(p) => nodes
            .iter()
            .map(|&i| nonlocal_row(kernel, v, i, far, |t| crate::numeric::signed_pow(t, p)))
            .collect(),
    };
    rows.into_iter().unzip()
}

/// Fractional p-Laplacian at every interior node; zero elsewhere.
pub fn apply_fractional_p_laplacian(u: &GridFunction, grid: &GridDomain, kernel: &KernelWeights, p: f64) -> Result<GridFunction> {
    u.check_grid(grid)?;
    kernel.check_grid(grid)?;
    let nodes = grid.interior_nodes();
    let (vals, _) = fractional_at(kernel, u, p, &nodes);
    let mut out = vec![0.0; grid.len()];
    for (k, v) in nodes.iter().zip(vals) {
        out[*k] = v;
    }
    Ok(GridFunction {
        values: out,
        far_field: Some(0.0),
    })
}

/// Derivative `φ'(t) = (p−1)|t|^{p−2}`, with `|t|` floored at `cap` when `p < 2`.
#[inline]
pub fn phi_prime(t: f64, p: f64, cap: f64) -> f64 {
    if p == 2.0 {
        1.0
    } else if p == 3.0 {
        2.0 * t.abs()
    } else if p > 2.0 {
        (p - 1.0) * t.abs().powf(p - 2.0)
    } else {
        (p - 1.0) * t.abs().max(cap).powf(p - 2.0)
    }
}

/// `−div A(Du) + 𝓛u − μ` at interior nodes, zero elsewhere.
///
/// Fails when `u` differs from `g` at an exterior node or in the far field.
pub fn residual(
    u: &GridFunction,
    mu: &Measure,
    g: &GridFunction,
    grid: &GridDomain,
    params: &ParamSet,
    spec: &VectorFieldSpec,
    kernel: &KernelWeights,
) -> Result<GridFunction> {
    u.check_grid(grid)?;
    g.check_grid(grid)?;
    kernel.check_grid(grid)?;
    for k in 0..grid.len() {
        if !grid.is_interior(k) && u.values[k] != g.values[k] {
            return Err(Error::DirichletViolated {
                node: k,
                u: u.values[k],
                g: g.values[k],
            });
        }
    }
    if u.far() != g.far() {
        return Err(Error::DirichletViolated {
            node: usize::MAX,
            u: u.far(),
            g: g.far(),
        });
    }
    let density = mu.density_on(grid)?;
    let nodes = grid.interior_nodes();
    let (loc, _) = local_at(grid, &u.values, spec, &nodes)?;
    let (nl, _) = fractional_at(kernel, u, params.p, &nodes);
    let mut out = vec![0.0; grid.len()];
    for (idx, &k) in nodes.iter().enumerate() {
        out[k] = loc[idx] + nl[idx] - density[k];
    }
    Ok(GridFunction {
        values: out,
        far_field: Some(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelVariant;

    fn plane(cells: usize) -> GridDomain {
        GridDomain::centered(2, 1.0, cells).unwrap().with_cube_interior(0.8).unwrap()
    }

    #[test]
    fn affine_is_annihilated_by_local_part() {
        let g = plane(24);
        let u = GridFunction::from_fn(&g, None, |x| 0.3 * x[0] - 1.2 * x[1] + 2.0);
        for p in [1.6, 2.0, 3.0, 4.5] {
            let out = apply_local_p_laplacian(&u, &g, &VectorFieldSpec::model(p)).unwrap();
            assert!(out.values.iter().all(|v| v.abs() < 1e-9), "p = {p}");
        }
    }

    #[test]
    fn quadratic_laplacian() {
        let g = plane(40);
        let u = GridFunction::from_fn(&g, None, |x| x[0] * x[0] + x[1] * x[1]);
        let out = apply_local_p_laplacian(&u, &g, &VectorFieldSpec::model(2.0)).unwrap();
        for k in g.interior_nodes() {
            assert!((out.values[k] + 4.0).abs() < 1e-9);
        }
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        let g = GridDomain::centered(2, 1.0, 10).unwrap().with_cube_interior(0.75).unwrap();
        let u0 = GridFunction::from_fn(&g, None, |x| (2.0 * x[0]).sin() + x[1] * x[1] * x[0] + 0.3 * x[1]);
        for spec in [VectorFieldSpec::model(3.0), VectorFieldSpec::regularized(1.7, 0.05), VectorFieldSpec::model(2.0)] {
            let nodes = g.interior_nodes();
            let jac = local_jacobian(&g, &u0.values, &spec, &nodes).unwrap();
            let nx = g.shape()[0] as i64;
            for (r, &k) in nodes.iter().enumerate() {
                for dj in -1..=1i64 {
                    for di in -1..=1i64 {
                        let m = (k as i64 + di + dj * nx) as usize;
                        let eps = 1e-6;
                        let mut up = u0.values.clone();
                        let mut um = u0.values.clone();
                        up[m] += eps;
                        um[m] -= eps;
                        let fp = local_at(&g, &up, &spec, &[k]).unwrap().0[0];
                        let fm = local_at(&g, &um, &spec, &[k]).unwrap().0[0];
                        let fd = (fp - fm) / (2.0 * eps);
                        let an = jac[r][slot(di, dj)];
                        assert!((fd - an).abs() < 1e-4 * (1.0 + an.abs()), "{fd} vs {an}");
                    }
                }
            }
        }
    }

    #[test]
    fn constants_are_annihilated_by_nonlocal_part() {
        let g = GridDomain::centered(1, 1.0, 64).unwrap().with_cube_interior(0.5).unwrap();
        let params = ParamSet::new(1, 0.4, 2.5).unwrap();
        let w = KernelWeights::assemble(&g, &params, KernelVariant::Model).unwrap();
        let u = GridFunction::constant(&g, 1.3);
        let out = apply_fractional_p_laplacian(&u, &g, &w, 2.5).unwrap();
        assert!(out.values.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn residual_rejects_exterior_mismatch() {
        let g = GridDomain::centered(1, 1.0, 32).unwrap().with_cube_interior(0.5).unwrap();
        let params = ParamSet::new(1, 0.4, 2.0).unwrap();
        let w = KernelWeights::assemble(&g, &params, KernelVariant::Model).unwrap();
        let gdata = GridFunction::zeros(&g);
        let mut u = gdata.clone();
        u.values[0] = 1.0;
        let e = residual(&u, &Measure::zero(), &gdata, &g, &params, &VectorFieldSpec::model(2.0), &w).unwrap_err();
        assert!(e.to_string().contains("Dirichlet complement violated"));
    }
}
