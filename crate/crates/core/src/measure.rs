//! Signed measures made of point masses and a cellwise-constant density.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Ball, GridDomain, GridFunction, Point};
use crate::numeric::{dist, pairwise_sum, pairwise_sum_by};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: Point,
    pub w: f64,
}

/// Density against Lebesgue measure, constant on each grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    pub grid: GridDomain,
    pub values: GridFunction,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Measure {
    pub atoms: Vec<Atom>,
    pub density: Option<Density>,
}

/// Profile of the radial bump used for mollification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BumpShape {
    /// `exp(−1/(1−t²))` on `t < 1`.
    #[default]
    Smooth,
    /// `(1−t²)²` on `t < 1`.
    Quartic,
}

impl BumpShape {
    pub fn profile(&self, t: f64) -> f64 {
        if t >= 1.0 {
            return 0.0;
        }
        match self {
            BumpShape::Smooth => (-1.0 / (1.0 - t * t)).exp(),
            BumpShape::Quartic => (1.0 - t * t).powi(2),
        }
    }
}

impl Measure {
    pub fn zero() -> Self {
        Measure::default()
    }

    pub fn dirac(x: Point, w: f64) -> Self {
        Measure {
            atoms: vec![Atom { x, w }],
            density: None,
        }
    }

    pub fn from_atoms(atoms: Vec<Atom>) -> Result<Self> {
        for a in &atoms {
            if !a.w.is_finite() || !a.x[0].is_finite() || !a.x[1].is_finite() {
                return Err(Error::InvalidParameter("atom with non-finite data".into()));
            }
        }
        Ok(Measure { atoms, density: None })
    }

    pub fn from_density(grid: &GridDomain, values: GridFunction) -> Result<Self> {
        values.check_grid(grid)?;
        Ok(Measure {
            atoms: Vec::new(),
            density: Some(Density {
                grid: grid.clone(),
                values: GridFunction { far_field: None, ..values },
            }),
        })
    }

    /// Density sampled from `f` at cell centers of `grid`.
    pub fn density_fn(grid: &GridDomain, f: impl Fn(Point) -> f64) -> Self {
        Measure {
            atoms: Vec::new(),
            density: Some(Density {
                grid: grid.clone(),
                values: GridFunction::from_fn(grid, None, f),
            }),
        }
    }

    /// Multiplies every weight and density value by `t`.
    pub fn scaled(&self, t: f64) -> Measure {
        Measure {
            atoms: self.atoms.iter().map(|a| Atom { x: a.x, w: t * a.w }).collect(),
            density: self.density.as_ref().map(|d| Density {
                grid: d.grid.clone(),
                values: d.values.scale(t),
            }),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.iter().all(|a| a.w == 0.0)
            && self
                .density
                .as_ref()
                .map_or(true, |d| d.values.values.iter().all(|&v| v == 0.0))
    }

    /// `Σ|w| + ∫|density|`.
    pub fn total_variation(&self) -> f64 {
        let atoms = pairwise_sum(&self.atoms.iter().map(|a| a.w.abs()).collect::<Vec<_>>());
        let dens = self.density.as_ref().map_or(0.0, |d| {
            pairwise_sum(&d.values.values.iter().map(|v| v.abs()).collect::<Vec<_>>()) * d.grid.cell_measure()
        });
        atoms + dens
    }

    /// Nodal density on `grid`, which must be the grid the density lives on.
    pub fn density_on(&self, grid: &GridDomain) -> Result<Vec<f64>> {
        if !self.atoms.is_empty() {
            return Err(Error::Unsupported(
                "measure has point masses; mollify it before using it as a density".into(),
            ));
        }
        match &self.density {
            None => Ok(vec![0.0; grid.len()]),
            Some(d) => {
                if d.grid.shape() != grid.shape() || d.grid.h() != grid.h() || d.grid.lower() != grid.lower() {
                    return Err(Error::GridMismatch("density lives on a different grid".into()));
                }
                Ok(d.values.values.clone())
            }
        }
    }
}

/// `|μ|(B)`: atoms strictly inside `B` plus `∫_B |density|`.
///
/// A density cell cut by the sphere contributes the fraction of its `4^n`
/// subcell centers that fall inside the ball.
pub fn tv_on_ball(mu: &Measure, ball: &Ball) -> f64 {
    let atoms: f64 = mu
        .atoms
        .iter()
        .filter(|a| ball.contains(a.x))
        .map(|a| a.w.abs())
        .sum();
    let dens = mu.density.as_ref().map_or(0.0, |d| {
        let g = &d.grid;
        let h = g.h();
        let dim = g.dim();
        let half_diag = 0.5 * h * (dim as f64).sqrt();
        let mut cell = |k: usize| {
            let v = d.values.values[k];
            if v == 0.0 {
                return 0.0;
            }
            let x = g.node(k);
            let r = dist(x, ball.center);
            let frac = if r + half_diag <= ball.radius {
                1.0
            } else if r - half_diag >= ball.radius {
                0.0
            } else {
                subsample_fraction(x, h, dim, ball)
            };
            frac * v.abs()
        };
        pairwise_sum_by(g.len(), &mut cell) * g.cell_measure()
    });
    atoms + dens
}

fn subsample_fraction(x: Point, h: f64, dim: usize, ball: &Ball) -> f64 {
    let offs = [-0.375, -0.125, 0.125, 0.375];
    let mut inside = 0usize;
    let mut total = 0usize;
    let ys: &[f64] = if dim == 2 { &offs } else { &[0.0] };
    for &ox in &offs {
        for &oy in ys {
            total += 1;
            if ball.contains([x[0] + ox * h, x[1] + oy * h]) {
                inside += 1;
            }
        }
    }
    inside as f64 / total as f64
}

/// Exact `∫_B |density|` using the area of each cell-ball intersection.
pub fn density_tv_exact(d: &Density, ball: &Ball) -> f64 {
    let g = &d.grid;
    let h = g.h();
    let dim = g.dim();
    let half_diag = 0.5 * h * (dim as f64).sqrt();
    let mut cell = |k: usize| {
        let v = d.values.values[k];
        if v == 0.0 {
            return 0.0;
        }
        let x = g.node(k);
        let r = dist(x, ball.center);
        let measure = if r + half_diag <= ball.radius {
            g.cell_measure()
        } else if r - half_diag >= ball.radius {
            0.0
        } else {
            cell_ball_overlap(x, h, dim, ball)
        };
        measure * v.abs()
    };
    pairwise_sum_by(g.len(), &mut cell)
}

/// Measure of `cell(x, h) ∩ B`.
pub fn cell_ball_overlap(x: Point, h: f64, dim: usize, ball: &Ball) -> f64 {
    let r = ball.radius;
    let x0 = x[0] - 0.5 * h - ball.center[0];
    let x1 = x[0] + 0.5 * h - ball.center[0];
    if dim == 1 {
        return (x1.min(r) - x0.max(-r)).max(0.0);
    }
    let y0 = x[1] - 0.5 * h - ball.center[1];
    let y1 = x[1] + 0.5 * h - ball.center[1];
    let q = |a: f64, b: f64| a.signum() * b.signum() * quadrant_area(a.abs(), b.abs(), r);
    (q(x1, y1) - q(x0, y1) - q(x1, y0) + q(x0, y0)).max(0.0)
}

/// Area of `{0 ≤ u ≤ a, 0 ≤ v ≤ b, u² + v² < r²}`.
fn quadrant_area(a: f64, b: f64, r: f64) -> f64 {
    let g = |u: f64| 0.5 * (u * (r * r - u * u).max(0.0).sqrt() + r * r * (u / r).clamp(-1.0, 1.0).asin());
    let uc = if b < r { (r * r - b * b).sqrt() } else { 0.0 };
    let a_clip = a.min(r);
    if a_clip <= uc {
        b.min(r) * a_clip
    } else {
        b.min(r) * uc + g(a_clip) - g(uc)
    }
}

/// Convolves `μ` with a normalized bump of radius `delta`, sampled on `grid`.
///
/// Each atom and each density cell is spread over the in-box nodes within
/// distance `delta` with weights renormalized to preserve its mass exactly.
pub fn mollify_measure(mu: &Measure, delta: f64, grid: &GridDomain, shape: BumpShape) -> Result<Measure> {
    let h = grid.h();
    if delta < h * (1.0 - 1e-12) {
        return Err(Error::BelowResolution { width: delta, h });
    }
    let mut out = vec![0.0; grid.len()];
    let hn = grid.cell_measure();
    let mut spread = |center: Point, mass: f64| -> Result<()> {
        if mass == 0.0 {
            return Ok(());
        }
        let ball = Ball::new(center, delta)?;
        let nodes = grid.ball_nodes(&ball);
        let weights: Vec<f64> = nodes
            .iter()
            .map(|&k| shape.profile(dist(grid.node(k), center) / delta))
            .collect();
        let total = pairwise_sum(&weights);
        if nodes.is_empty() || total == 0.0 {
            return Err(Error::BelowResolution { width: delta, h });
        }
        for (k, w) in nodes.iter().zip(&weights) {
            out[*k] += mass * w / (total * hn);
        }
        Ok(())
    };
    for a in &mu.atoms {
        if !grid.contains_point(a.x) {
            return Err(Error::InvalidParameter(format!(
                "atom at {:?} lies outside the grid box",
                a.x
            )));
        }
        spread(a.x, a.w)?;
    }
    if let Some(d) = &mu.density {
        let dh = d.grid.cell_measure();
        for k in 0..d.grid.len() {
            let v = d.values.values[k];
            if v != 0.0 {
                spread(d.grid.node(k), v * dh)?;
            }
        }
    }
    Ok(Measure {
        atoms: Vec::new(),
        density: Some(Density {
            grid: grid.clone(),
            values: GridFunction {
                values: out,
                far_field: None,
            },
        }),
    })
}
