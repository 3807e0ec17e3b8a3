//! Truncated Riesz and Wolff potentials of `|μ|` and the nonlocal tail.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Ball, GridDomain, GridFunction, Point};
use crate::measure::{cell_ball_overlap, Density, Measure};
use crate::numeric::{abs_pow, dist, pairwise_sum, pairwise_sum_by, unit_ball_volume};
use crate::quadrature::{adaptive, gauss_legendre};

/// Log-spaced subintervals per decade for density quadrature.
const NODES_PER_DECADE: f64 = 64.0;

/// Potential values at increasing truncation radii about a fixed center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialProfile {
    pub center: Point,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Riesz,
    Wolff { beta: f64, p: f64 },
}

impl Kind {
    /// Integrand in `t = log ρ` given the mass `m = |μ|(B_ρ)`.
    fn integrand(&self, m: f64, rho: f64, n: usize) -> f64 {
        if m == 0.0 {
            return 0.0;
        }
        match *self {
            Kind::Riesz => m * rho.powi(1 - n as i32),
            Kind::Wolff { beta, p } => (m * rho.powf(beta * p - n as f64)).powf(1.0 / (p - 1.0)),
        }
    }

    /// `∫_a^b integrand(M, ρ) dρ/ρ` for constant mass `M`.
    fn exact_piece(&self, mass: f64, a: f64, b: f64, n: usize) -> f64 {
        if mass == 0.0 || b <= a {
            return 0.0;
        }
        match *self {
            Kind::Riesz => {
                if n == 1 {
                    mass * (b / a).ln()
                } else {
                    let e = 1.0 - n as f64;
                    mass * (b.powf(e) - a.powf(e)) / e
                }
            }
            Kind::Wolff { beta, p } => {
                let e = (beta * p - n as f64) / (p - 1.0);
                let c = mass.powf(1.0 / (p - 1.0));
                if e == 0.0 {
                    c * (b / a).ln()
                } else if a == 0.0 {
                    if e > 0.0 {
                        c * b.powf(e) / e
                    } else {
                        f64::INFINITY
                    }
                } else {
                    c * (b.powf(e) - a.powf(e)) / e
                }
            }
        }
    }
}

/// `|density|(B_ρ(x₀))` as a function of ρ, with cells sorted by center distance.
struct RadialMass<'a> {
    density: &'a Density,
    center: Point,
    /// `(center distance, node)` sorted by distance.
    order: Vec<(f64, usize)>,
    /// `prefix[i]` = mass of the first `i` cells in `order`.
    prefix: Vec<f64>,
    half_diag: f64,
}

impl<'a> RadialMass<'a> {
    fn new(density: &'a Density, center: Point) -> Self {
        let g = &density.grid;
        let mut order: Vec<(f64, usize)> = (0..g.len())
            .filter(|&k| density.values.values[k] != 0.0)
            .map(|k| (dist(g.node(k), center), k))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let hn = g.cell_measure();
        let mut prefix = Vec::with_capacity(order.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for &(_, k) in &order {
            acc += density.values.values[k].abs() * hn;
            prefix.push(acc);
        }
        RadialMass {
            density,
            center,
            order,
            prefix,
            half_diag: 0.5 * g.h() * (g.dim() as f64).sqrt(),
        }
    }

    fn mass(&self, rho: f64) -> f64 {
        let lo = self.order.partition_point(|c| c.0 + self.half_diag <= rho);
        let hi = self.order.partition_point(|c| c.0 - self.half_diag < rho);
        let g = &self.density.grid;
        let ball = Ball {
            center: self.center,
            radius: rho,
        };
        let mut partial = |i: usize| {
            let k = self.order[lo + i].1;
            cell_ball_overlap(g.node(k), g.h(), g.dim(), &ball) * self.density.values.values[k].abs()
        };
        self.prefix[lo] + pairwise_sum_by(hi.saturating_sub(lo), &mut partial)
    }
}

fn evaluate(mu: &Measure, x0: Point, r_max: f64, n: usize, kind: Kind) -> Result<f64> {
    if !(r_max > 0.0) || !r_max.is_finite() {
        return Err(Error::InvalidParameter(format!("truncation radius must be positive, got {r_max}")));
    }
    let mut atoms: Vec<(f64, f64)> = mu
        .atoms
        .iter()
        .filter(|a| a.w != 0.0)
        .map(|a| (dist(a.x, x0), a.w.abs()))
        .filter(|a| a.0 < r_max)
        .collect();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let at_center: f64 = atoms.iter().filter(|a| a.0 == 0.0).map(|a| a.1).sum();
    let density = mu.density.as_ref().filter(|d| d.values.values.iter().any(|&v| v != 0.0));

    let atom_mass = |rho: f64| -> f64 { atoms.iter().take_while(|a| a.0 < rho).map(|a| a.1).sum() };

    let Some(density) = density else {
        if at_center > 0.0 {
            return Ok(kind.exact_piece(at_center, 0.0, atoms.iter().find(|a| a.0 > 0.0).map_or(r_max, |a| a.0), n)
                + exact_atomic_rest(&atoms, r_max, n, kind));
        }
        return Ok(exact_atomic_rest(&atoms, r_max, n, kind));
    };

    if density.grid.dim() != n {
        return Err(Error::GridMismatch("density dimension differs from the requested n".into()));
    }
    let radial = RadialMass::new(density, x0);
    let h = density.grid.h();
    let first_atom = atoms.iter().map(|a| a.0).find(|&d| d > 0.0).unwrap_or(f64::INFINITY);
    let rho_min = (1e-6 * h).min(0.5 * first_atom).min(0.5 * r_max);

    // On (0, rho_min) the density mass is an exact power law c₀ρⁿ because the
    // ball meets each nearby cell in a cone-shaped sector.
    let c0 = radial.mass(rho_min) / rho_min.powi(n as i32);
    let mut total = match kind {
        Kind::Riesz => {
            let base = c0 * rho_min;
            if at_center > 0.0 {
                return Ok(f64::INFINITY);
            }
            base
        }
        Kind::Wolff { beta, p } => {
            let e = beta * p / (p - 1.0);
            if at_center > 0.0 {
                kind.exact_piece(at_center, 0.0, rho_min, n)
            } else {
                c0.powf(1.0 / (p - 1.0)) * rho_min.powf(e) / e
            }
        }
    };

    let mut breaks = vec![rho_min];
    breaks.extend(atoms.iter().map(|a| a.0).filter(|&d| d > rho_min));
    breaks.push(r_max);
    breaks.dedup();
    let rule = gauss_legendre(4);
    let mut pieces = Vec::new();
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let (la, lb) = (a.ln(), b.ln());
        let decades = (lb - la) / std::f64::consts::LN_10;
        let m = ((decades * NODES_PER_DECADE).ceil() as usize).max(1);
        let dt = (lb - la) / m as f64;
        let mid_atoms = atom_mass(0.5 * (a + b));
        for i in 0..m {
            let t0 = la + i as f64 * dt;
            let mut acc = 0.0;
            for (x, wt) in rule.0.iter().zip(&rule.1) {
                let t = t0 + 0.5 * dt * (1.0 + x);
                let rho = t.exp();
                acc += wt * kind.integrand(mid_atoms + radial.mass(rho), rho, n);
            }
            pieces.push(0.5 * dt * acc);
        }
    }
    total += pairwise_sum(&pieces);
    Ok(total)
}

fn exact_atomic_rest(atoms: &[(f64, f64)], r_max: f64, n: usize, kind: Kind) -> f64 {
    let mut acc = 0.0;
    let mut mass = 0.0;
    for (i, a) in atoms.iter().enumerate() {
        mass += a.1;
        if a.0 == 0.0 {
            continue;
        }
        let next = atoms.get(i + 1).map_or(r_max, |b| b.0);
        acc += kind.exact_piece(mass, a.0, next, n);
    }
    acc
}

/// `𝓘₁(x₀, R) = ∫₀^R |μ|(B_ρ(x₀)) ρ^{1−n} dρ/ρ` in dimension `n`.
///
/// Atomic parts are integrated in closed form; a density part uses log-spaced
/// Gauss quadrature. An atom exactly at `x₀` yields `+∞`.
pub fn riesz_potential(mu: &Measure, x0: Point, r_max: f64, n: usize) -> Result<f64> {
    evaluate(mu, x0, r_max, n, Kind::Riesz)
}

/// `𝓦_{β,p}(x₀, R) = ∫₀^R [|μ|(B_ρ(x₀)) / ρ^{n−βp}]^{1/(p−1)} dρ/ρ`.
pub fn wolff_potential(mu: &Measure, x0: Point, r_max: f64, beta: f64, p: f64, n: usize) -> Result<f64> {
    if !(p > 1.0) {
        return Err(Error::InvalidParameter(format!("Wolff potential requires p > 1, got {p}")));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("Wolff potential requires β > 0, got {beta}")));
    }
    evaluate(mu, x0, r_max, n, Kind::Wolff { beta, p })
}

pub fn riesz_profile(mu: &Measure, x0: Point, radii: &[f64], n: usize) -> Result<PotentialProfile> {
    let values = radii
        .iter()
        .map(|&r| riesz_potential(mu, x0, r, n))
        .collect::<Result<Vec<_>>>()?;
    Ok(PotentialProfile {
        center: x0,
        radii: radii.to_vec(),
        values,
    })
}

pub fn wolff_profile(mu: &Measure, x0: Point, radii: &[f64], beta: f64, p: f64, n: usize) -> Result<PotentialProfile> {
    let values = radii
        .iter()
        .map(|&r| wolff_potential(mu, x0, r, beta, p, n))
        .collect::<Result<Vec<_>>>()?;
    Ok(PotentialProfile {
        center: x0,
        radii: radii.to_vec(),
        values,
    })
}

/// `∫_{ℝⁿ∖B_r(x₀)} |f|^{p−1} |x−x₀|^{−n−sp} dx`.
///
/// Cells of the box whose centers lie outside the ball contribute a midpoint
/// term; the complement of the box carries the far-field constant and is
/// integrated along rays.
pub fn tail_integral(grid: &GridDomain, f: &GridFunction, x0: Point, r: f64, p: f64, s: f64) -> Result<f64> {
    f.check_grid(grid)?;
    if !(r > 0.0) || !(p > 1.0) || !(s > 0.0 && s < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "tail requires r > 0, p > 1, s ∈ (0,1); got r={r}, p={p}, s={s}"
        )));
    }
    if f.far_field.is_none() && r >= grid.ext_radius() {
        return Err(Error::FarFieldUnset {
            r,
            ext_radius: grid.ext_radius(),
        });
    }
    let n = grid.dim();
    let expo = 0.5 * (n as f64 + s * p);
    let mut cell = |k: usize| {
        let v = f.values[k];
        if v == 0.0 {
            return 0.0;
        }
        let x = grid.node(k);
        let r2 = (x[0] - x0[0]).powi(2) + (x[1] - x0[1]).powi(2);
        if r2.sqrt() < r {
            return 0.0;
        }
        abs_pow(v, p - 1.0) / r2.powf(expo)
    };
    let inside = pairwise_sum_by(grid.len(), &mut cell) * grid.cell_measure();
    let far = abs_pow(f.far(), p - 1.0);
    let outside = if far == 0.0 {
        0.0
    } else {
        far * complement_kernel_integral(grid, x0, r, s * p)?
    };
    Ok(inside + outside)
}

/// `Tail(f; x₀, r) = (r^p ∫_{ℝⁿ∖B_r} |f|^{p−1}/|x−x₀|^{n+sp} dx)^{1/(p−1)}`.
pub fn tail(grid: &GridDomain, f: &GridFunction, x0: Point, r: f64, p: f64, s: f64) -> Result<f64> {
    let i = tail_integral(grid, f, x0, r, p, s)?;
    Ok((r.powf(p) * i).powf(1.0 / (p - 1.0)))
}

/// `∫_{ℝⁿ∖(box ∪ B_r(x₀))} |x−x₀|^{−n−σ} dx` for `x₀` in the box, with `σ = sp`.
pub fn complement_kernel_integral(grid: &GridDomain, x0: Point, r: f64, sigma: f64) -> Result<f64> {
    if !grid.contains_point(x0) {
        return Err(Error::InvalidParameter(format!("point {x0:?} lies outside the grid box")));
    }
    let (lo, hi) = (grid.lower(), grid.upper());
    if grid.dim() == 1 {
        let a = (x0[0] - lo[0]).max(r);
        let b = (hi[0] - x0[0]).max(r);
        return Ok((a.powf(-sigma) + b.powf(-sigma)) / sigma);
    }
    let exit = move |theta: f64| -> f64 {
        let (c, s) = (theta.cos(), theta.sin());
        let tx = if c > 0.0 {
            (hi[0] - x0[0]) / c
        } else if c < 0.0 {
            (lo[0] - x0[0]) / c
        } else {
            f64::INFINITY
        };
        let ty = if s > 0.0 {
            (hi[1] - x0[1]) / s
        } else if s < 0.0 {
            (lo[1] - x0[1]) / s
        } else {
            f64::INFINITY
        };
        tx.min(ty)
    };
    let integrand = move |theta: f64| exit(theta).max(r).powf(-sigma) / sigma;
    let mut cuts: Vec<f64> = [hi, [lo[0], hi[1]], lo, [hi[0], lo[1]]]
        .iter()
        .map(|c| (c[1] - x0[1]).atan2(c[0] - x0[0]).rem_euclid(2.0 * std::f64::consts::PI))
        .collect();
    cuts.push(0.0);
    cuts.push(2.0 * std::f64::consts::PI);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut parts = Vec::new();
    for w in cuts.windows(2) {
        parts.push(adaptive(integrand, w[0], w[1], 1e-14, 1e-13, 400));
    }
    Ok(pairwise_sum(&parts))
}

/// Lebesgue measure of a ball of radius `r` in dimension `n`.
pub fn ball_volume(n: usize, r: f64) -> f64 {
    unit_ball_volume(n) * r.powi(n as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::adaptive;

    #[test]
    fn dirac_riesz_closed_form() {
        let mu = Measure::dirac([0.0, 0.0], 1.0);
        let v = riesz_potential(&mu, [0.1, 0.0], 1.0, 2).unwrap();
        assert!((v - 9.0).abs() < 1e-12);
        assert_eq!(riesz_potential(&mu, [0.0, 0.0], 1.0, 2).unwrap(), f64::INFINITY);
        assert_eq!(riesz_potential(&Measure::zero(), [0.0, 0.0], 1.0, 2).unwrap(), 0.0);
    }

    #[test]
    fn dirac_wolff_logarithm() {
        let mu = Measure::dirac([0.0, 0.0], 1.0);
        let v = wolff_potential(&mu, [0.0, 0.25], 2.0, 1.0, 2.0, 2).unwrap();
        assert!((v - (2.0f64 / 0.25).ln()).abs() < 1e-12);
    }

    #[test]
    fn uniform_density_riesz() {
        let g = GridDomain::centered(2, 1.5, 48).unwrap();
        let mu = Measure::density_fn(&g, |_| 2.0);
        let v = riesz_potential(&mu, [0.01, 0.02], 1.0, 2).unwrap();
        let want = 2.0 * std::f64::consts::PI;
        assert!((v - want).abs() < 1e-6 * want, "{v} vs {want}");
    }

    #[test]
    fn uniform_density_wolff() {
        let g = GridDomain::centered(2, 1.5, 48).unwrap();
        let mu = Measure::density_fn(&g, |_| 2.0);
        let v = wolff_potential(&mu, [0.0, 0.0], 1.0, 1.0, 2.0, 2).unwrap();
        let want = std::f64::consts::PI;
        assert!((v - want).abs() < 1e-6 * want, "{v} vs {want}");
    }

    #[test]
    fn tail_homogeneity_and_constants() {
        let g = GridDomain::centered(1, 2.0, 200).unwrap();
        let f = GridFunction::from_fn(&g, Some(0.5), |x| x[0].sin() + 0.5);
        let t = tail(&g, &f, [0.1, 0.0], 0.5, 2.5, 0.4).unwrap();
        let t3 = tail(&g, &f.scale(-3.0), [0.1, 0.0], 0.5, 2.5, 0.4).unwrap();
        assert!((t3 - 3.0 * t).abs() < 1e-12 * t3);
        let c = GridFunction::constant(&g, 1.7);
        assert_eq!(tail(&g, &c.shift(-1.7), [0.0, 0.0], 0.5, 2.0, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn tail_of_annulus_indicator_1d() {
        let r = 0.1;
        let g = GridDomain::centered(1, 1.0, 2000).unwrap();
        let f = GridFunction::from_fn(&g, Some(0.0), |x| {
            if x[0].abs() > 2.0 * r && x[0].abs() < 3.0 * r {
                1.0
            } else {
                0.0
            }
        });
        let got = tail(&g, &f, [0.0, 0.0], r, 2.0, 0.5).unwrap();
        let integral = 2.0 * adaptive(|x| x.powf(-2.0), 2.0 * r, 3.0 * r, 1e-14, 1e-12, 100);
        let want = r * r * integral;
        assert!((got - want).abs() < 1e-2 * want);
    }

    #[test]
    fn complement_integral_2d_matches_radial_formula_far_from_edges() {
        let g = GridDomain::centered(2, 1.0, 20).unwrap();
        // For r beyond the circumscribed radius the region is the exterior of B_r.
        let r = 2.0;
        let sigma = 0.7;
        let got = complement_kernel_integral(&g, [0.0, 0.0], r, sigma).unwrap();
        let want = 2.0 * std::f64::consts::PI * r.powf(-sigma) / sigma;
        assert!((got - want).abs() < 1e-12 * want);
    }
}
