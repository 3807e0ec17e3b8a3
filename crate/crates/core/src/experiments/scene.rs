//! Declarative data configurations: grid, exterior data from a closed list of
//! expressions, and the right-hand side measure.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridDomain, GridFunction, Point};
use crate::measure::{Atom, BumpShape, Measure};
use crate::numeric::dist;

/// Box `[-half, half]^dim` with `cells` cells per axis and an interior set about the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub half: f64,
    pub cells: usize,
    pub interior: InteriorSpec,
    #[serde(default)]
    pub ext_radius: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InteriorSpec {
    Ball { radius: f64 },
    Cube { half: f64 },
}

impl GridSpec {
    pub fn build(&self, cells: Option<usize>) -> Result<GridDomain> {
        let cells = cells.unwrap_or(self.cells);
        let g = GridDomain::centered(self.dim, self.half, cells)?;
        let g = match self.interior {
            InteriorSpec::Ball { radius } => g.with_ball_interior(radius)?,
            InteriorSpec::Cube { half } => g.with_cube_interior(half)?,
        };
        match self.ext_radius {
            Some(r) => g.with_ext_radius(r),
            None => Ok(g),
        }
    }
}

/// Exterior data expressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExteriorData {
    /// `offset + slope·x`.
    Affine { offset: f64, slope: [f64; 2] },
    /// `height·e·exp(−1/(1−t²))`, `t = |x−center|/radius`, peak value `height`.
    Bump { center: Point, radius: f64, height: f64 },
    /// `amplitude·sin(k·x + phase)`.
    Sinusoid {
        amplitude: f64,
        wavevector: [f64; 2],
        phase: f64,
    },
    Sum { terms: Vec<ExteriorData> },
}

impl ExteriorData {
    pub fn zero() -> Self {
        ExteriorData::Affine {
            offset: 0.0,
            slope: [0.0, 0.0],
        }
    }

    pub fn eval(&self, x: Point) -> f64 {
        match self {
            ExteriorData::Affine { offset, slope } => offset + slope[0] * x[0] + slope[1] * x[1],
            ExteriorData::Bump { center, radius, height } => {
                let t = dist(x, *center) / radius;
                height * std::f64::consts::E * BumpShape::Smooth.profile(t)
            }
            ExteriorData::Sinusoid {
                amplitude,
                wavevector,
                phase,
            } => amplitude * (wavevector[0] * x[0] + wavevector[1] * x[1] + phase).sin(),
            ExteriorData::Sum { terms } => terms.iter().map(|t| t.eval(x)).sum(),
        }
    }

    /// Whether the expression is affine (every term affine or identically zero).
    pub fn is_affine(&self) -> bool {
        match self {
            ExteriorData::Affine { .. } => true,
            ExteriorData::Bump { height, .. } => *height == 0.0,
            ExteriorData::Sinusoid { amplitude, .. } => *amplitude == 0.0,
            ExteriorData::Sum { terms } => terms.iter().all(|t| t.is_affine()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ExteriorData::Bump { radius, .. } if !(*radius > 0.0) => {
                Err(Error::InvalidParameter(format!("bump radius must be positive, got {radius}")))
            }
            ExteriorData::Sum { terms } => terms.iter().try_for_each(|t| t.validate()),
            _ => Ok(()),
        }
    }

    pub fn scaled(&self, t: f64) -> ExteriorData {
        match self {
            ExteriorData::Affine { offset, slope } => ExteriorData::Affine {
                offset: t * offset,
                slope: [t * slope[0], t * slope[1]],
            },
            ExteriorData::Bump { center, radius, height } => ExteriorData::Bump {
                center: *center,
                radius: *radius,
                height: t * height,
            },
            ExteriorData::Sinusoid {
                amplitude,
                wavevector,
                phase,
            } => ExteriorData::Sinusoid {
                amplitude: t * amplitude,
                wavevector: *wavevector,
                phase: *phase,
            },
            ExteriorData::Sum { terms } => ExteriorData::Sum {
                terms: terms.iter().map(|e| e.scaled(t)).collect(),
            },
        }
    }
}

/// Right-hand side measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    #[default]
    Zero,
    Dirac { at: Point, mass: f64 },
    Atoms { atoms: Vec<Atom> },
    /// Smooth radial bump density with total mass `mass` on the grid.
    Bump { center: Point, radius: f64, mass: f64 },
    /// JSON measure file.
    File { path: PathBuf },
}

impl MeasureSpec {
    pub fn build(&self, grid: &GridDomain) -> Result<Measure> {
        match self {
            MeasureSpec::Zero => Ok(Measure::zero()),
            MeasureSpec::Dirac { at, mass } => Measure::from_atoms(vec![Atom { x: *at, w: *mass }]),
            MeasureSpec::Atoms { atoms } => Measure::from_atoms(atoms.clone()),
            MeasureSpec::Bump { center, radius, mass } => bump_density(grid, *center, *radius, *mass),
            MeasureSpec::File { path } => crate::io::read_measure(path, grid),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            MeasureSpec::Zero => true,
            MeasureSpec::Dirac { mass, .. } | MeasureSpec::Bump { mass, .. } => *mass == 0.0,
            MeasureSpec::Atoms { atoms } => atoms.iter().all(|a| a.w == 0.0),
            MeasureSpec::File { .. } => false,
        }
    }

    pub fn scaled(&self, t: f64) -> MeasureSpec {
        match self {
            MeasureSpec::Dirac { at, mass } => MeasureSpec::Dirac { at: *at, mass: t * mass },
            MeasureSpec::Bump { center, radius, mass } => MeasureSpec::Bump {
                center: *center,
                radius: *radius,
                mass: t * mass,
            },
            MeasureSpec::Atoms { atoms } => MeasureSpec::Atoms {
                atoms: atoms.iter().map(|a| Atom { x: a.x, w: t * a.w }).collect(),
            },
            other => other.clone(),
        }
    }
}

/// Density `c·exp(−1/(1−t²))`, `t = |x−center|/radius`, normalized to discrete mass `mass`.
pub fn bump_density(grid: &GridDomain, center: Point, radius: f64, mass: f64) -> Result<Measure> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!("bump radius must be positive, got {radius}")));
    }
    let raw = GridFunction::from_fn(grid, None, |x| BumpShape::Smooth.profile(dist(x, center) / radius));
    let total: f64 = raw.values.iter().sum::<f64>() * grid.cell_measure();
    if total == 0.0 {
        return Err(Error::BelowResolution { width: radius, h: grid.h() });
    }
    Measure::from_density(grid, raw.scale(mass / total))
}

/// Grid, exterior data and measure of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub grid: GridSpec,
    pub exterior: ExteriorData,
    #[serde(default)]
    pub far_field: f64,
    #[serde(default)]
    pub measure: MeasureSpec,
    /// Common center of the balls used by the experiment.
    #[serde(default)]
    pub center: Point,
}

impl Scene {
    pub fn exterior_on(&self, grid: &GridDomain) -> GridFunction {
        GridFunction::from_fn(grid, Some(self.far_field), |x| self.exterior.eval(x))
    }

    pub fn validate(&self) -> Result<()> {
        self.exterior.validate()?;
        if !self.far_field.is_finite() {
            return Err(Error::InvalidParameter("far field must be finite".into()));
        }
        if !matches!(self.grid.dim, 1 | 2) {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {}", self.grid.dim)));
        }
        Ok(())
    }

    /// Square box `[-1,1]^dim` with a ball interior of radius 0.9 and the given data.
    pub fn unit(dim: usize, cells: usize, exterior: ExteriorData, measure: MeasureSpec) -> Scene {
        Scene {
            grid: GridSpec {
                dim,
                half: 1.0,
                cells,
                interior: InteriorSpec::Ball { radius: 0.9 },
                ext_radius: None,
            },
            exterior,
            far_field: 0.0,
            measure,
            center: [0.0, 0.0],
        }
    }

    /// Affine part plus a smooth perturbation, the standard homogeneous scene.
    pub fn perturbed_affine(dim: usize, cells: usize) -> Scene {
        let slope = if dim == 1 { [0.6, 0.0] } else { [0.6, -0.3] };
        let wave = if dim == 1 { [2.5, 0.0] } else { [2.5, 1.5] };
        Scene::unit(
            dim,
            cells,
            ExteriorData::Sum {
                terms: vec![
                    ExteriorData::Affine { offset: 0.1, slope },
                    ExteriorData::Sinusoid {
                        amplitude: 0.25,
                        wavevector: wave,
                        phase: 0.4,
                    },
                ],
            },
            MeasureSpec::Zero,
        )
    }
}
