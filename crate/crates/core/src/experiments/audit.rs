//! Straight-line recomputation of the bracket terms.
//!
//! These routines deliberately avoid the composed helpers of [`crate::grid`]
//! and [`crate::potentials`]: nodes are visited by coordinates, sums are
//! plain left-to-right, and the far-field integral uses composite
//! Gauss–Legendre quadrature instead of adaptive quadrature.

use crate::grid::{GridDomain, GridFunction, Point, Vector};
use crate::quadrature::gauss_legendre;

fn coords(grid: &GridDomain, i: usize, j: usize) -> Point {
    let lo = grid.lower();
    let h = grid.h();
    [lo[0] + (i as f64 + 0.5) * h, if grid.dim() == 2 { lo[1] + (j as f64 + 0.5) * h } else { 0.0 }]
}

fn for_each_node(grid: &GridDomain, mut f: impl FnMut(usize, Point)) {
    let [nx, ny] = grid.shape();
    for j in 0..ny {
        for i in 0..nx {
            f(j * nx + i, coords(grid, i, j));
        }
    }
}

fn inside(x: Point, c: Point, r: f64) -> bool {
    let dx = x[0] - c[0];
    let dy = x[1] - c[1];
    (dx * dx + dy * dy).sqrt() < r
}

/// Mean of `f(k)` over nodes strictly inside the ball.
pub fn mean(grid: &GridDomain, c: Point, r: f64, f: impl Fn(usize) -> f64) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for_each_node(grid, |k, x| {
        if inside(x, c, r) {
            sum += f(k);
            count += 1;
        }
    });
    sum / count as f64
}

/// Centered-difference gradient at a node away from the box edge.
pub fn gradient_at(grid: &GridDomain, u: &GridFunction, k: usize) -> Vector {
    let [nx, _] = grid.shape();
    let h2 = 2.0 * grid.h();
    let gx = (u.values[k + 1] - u.values[k - 1]) / h2;
    let gy = if grid.dim() == 2 { (u.values[k + nx] - u.values[k - nx]) / h2 } else { 0.0 };
    [gx, gy]
}

/// `mean_B |Du|^q`.
pub fn mean_grad_pow(grid: &GridDomain, u: &GridFunction, c: Point, r: f64, q: f64) -> f64 {
    mean(grid, c, r, |k| {
        let g = gradient_at(grid, u, k);
        (g[0] * g[0] + g[1] * g[1]).sqrt().powf(q)
    })
}

/// `mean_B |F − (F)_B|` for a vector field given per node.
pub fn excess(grid: &GridDomain, field: impl Fn(usize) -> Vector, c: Point, r: f64) -> f64 {
    let mx = mean(grid, c, r, |k| field(k)[0]);
    let my = mean(grid, c, r, |k| field(k)[1]);
    mean(grid, c, r, |k| {
        let z = field(k);
        ((z[0] - mx).powi(2) + (z[1] - my).powi(2)).sqrt()
    })
}

/// `A(Du)` at a node for the model field.
pub fn model_flux_at(grid: &GridDomain, u: &GridFunction, k: usize, p: f64) -> Vector {
    let g = gradient_at(grid, u, k);
    let n = (g[0] * g[0] + g[1] * g[1]).sqrt();
    if n == 0.0 {
        [0.0, 0.0]
    } else {
        let a = n.powf(p - 2.0);
        [a * g[0], a * g[1]]
    }
}

/// `∫_{ℝⁿ∖(box∪B_r)} |x−c|^{−n−σ} dx` by composite Gauss–Legendre in the angle.
pub fn complement(grid: &GridDomain, c: Point, r: f64, sigma: f64) -> f64 {
    let lo = grid.lower();
    let hi = grid.upper();
    if grid.dim() == 1 {
        let a = (c[0] - lo[0]).max(r);
        let b = (hi[0] - c[0]).max(r);
        return (a.powf(-sigma) + b.powf(-sigma)) / sigma;
    }
    let dists = [hi[0] - c[0], hi[1] - c[1], c[0] - lo[0], c[1] - lo[1]];
    let normals = [0.0, 0.5, 1.0, 1.5].map(|t: f64| t * std::f64::consts::PI);
    let exit = |theta: f64| -> f64 {
        let mut t = f64::INFINITY;
        for (d, nrm) in dists.iter().zip(&normals) {
            let cs = (theta - nrm).cos();
            if cs > 1e-300 {
                t = t.min(d / cs);
            }
        }
        t
    };
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut breaks = vec![0.0, two_pi];
    for (x, y) in [(hi[0], hi[1]), (lo[0], hi[1]), (lo[0], lo[1]), (hi[0], lo[1])] {
        breaks.push((y - c[1]).atan2(x - c[0]).rem_euclid(two_pi));
    }
    for (d, nrm) in dists.iter().zip(&normals) {
        if *d < r {
            let a = (d / r).acos();
            breaks.push((nrm + a).rem_euclid(two_pi));
            breaks.push((nrm - a).rem_euclid(two_pi));
        }
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (gx, gw) = gauss_legendre(20);
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a < 1e-15 {
            continue;
        }
        let pieces = 16;
        let step = (b - a) / pieces as f64;
        for m in 0..pieces {
            let a0 = a + m as f64 * step;
            for (x, wt) in gx.iter().zip(&gw) {
                let th = a0 + 0.5 * step * (x + 1.0);
                total += 0.5 * step * wt * exit(th).max(r).powf(-sigma) / sigma;
            }
        }
    }
    total
}

/// `∫_{ℝⁿ∖B_r} |f−k|^{p−1}/|x−c|^{n+sp}`.
pub fn tail_integral(grid: &GridDomain, f: &GridFunction, c: Point, r: f64, p: f64, s: f64, k0: f64) -> f64 {
    let n = grid.dim() as f64;
    let mut near = 0.0;
    for_each_node(grid, |k, x| {
        if !inside(x, c, r) {
            let d = ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)).sqrt();
            near += (f.values[k] - k0).abs().powf(p - 1.0) / d.powf(n + s * p);
        }
    });
    near *= grid.cell_measure();
    let far = (f.far() - k0).abs().powf(p - 1.0);
    let outside = if far == 0.0 { 0.0 } else { far * complement(grid, c, r, s * p) };
    near + outside
}

/// `(∫_{ℝⁿ∖B_r} |f−(f)_{B_r}|^{p−1}/|x−c|^{n+sp})^{1/(p−1)}`.
pub fn normalized_tail(grid: &GridDomain, f: &GridFunction, c: Point, r: f64, p: f64, s: f64) -> f64 {
    let avg = mean(grid, c, r, |k| f.values[k]);
    tail_integral(grid, f, c, r, p, s, avg).powf(1.0 / (p - 1.0))
}

/// `∫_B ∫_B |f(x)−f(y)|^p/|x−y|^{n+sp}` over distinct node pairs.
pub fn gagliardo(grid: &GridDomain, f: impl Fn(usize) -> f64, c: Point, r: f64, s: f64, p: f64) -> f64 {
    let mut pts = Vec::new();
    for_each_node(grid, |k, x| {
        if inside(x, c, r) {
            pts.push((k, x));
        }
    });
    let n = grid.dim() as f64;
    let mut total = 0.0;
    for &(a, xa) in &pts {
        let fa = f(a);
        for &(b, xb) in &pts {
            if a != b {
                let d = ((xa[0] - xb[0]).powi(2) + (xa[1] - xb[1]).powi(2)).sqrt();
                total += (fa - f(b)).abs().powf(p) / d.powf(n + s * p);
            }
        }
    }
    total * grid.cell_measure() * grid.cell_measure()
}

/// Largest relative disagreement between paired values.
pub fn discrepancy(pairs: &[(f64, f64)]) -> f64 {
    pairs
        .iter()
        .map(|(a, b)| {
            let m = a.abs().max(b.abs());
            if m == 0.0 || (a == b) {
                0.0
            } else {
                (a - b).abs() / m
            }
        })
        .fold(0.0, f64::max)
}
