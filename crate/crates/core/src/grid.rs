//! Uniform cell-centered grids, balls, and the averaging functionals built on them.
//!
//! Every node is the center of one cell of width `h`. A [`GridDomain`] covers an
//! axis-aligned box; an interior mask selects the nodes of the open set Ω. Values
//! of a [`GridFunction`] outside the box follow its constant far field.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{abs_pow, dist, norm2, pairwise_sum, pairwise_sum_by};

/// A point of the plane; 1D data uses only the first coordinate and keeps the second at 0.
pub type Point = [f64; 2];

/// Vector value (gradient, flux) at a node.
pub type Vector = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        Ok(Ball { center, radius })
    }

    pub fn contains(&self, x: Point) -> bool {
        dist(x, self.center) < self.radius
    }

    /// Concentric ball with the radius multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Ball {
        Ball {
            center: self.center,
            radius: self.radius * factor,
        }
    }
}

/// Uniform grid over an axis-aligned box with an interior mask.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDomain {
    dim: usize,
    lower: Point,
    upper: Point,
    h: f64,
    shape: [usize; 2],
    interior: Vec<bool>,
    ext_radius: f64,
}

impl GridDomain {
    /// Grid on `[lower, upper]` with cell width `h` and an empty interior.
    ///
    /// In 1D the second coordinate of `lower`/`upper` is ignored.
    pub fn new(dim: usize, lower: Point, upper: Point, h: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidGrid(format!("cell width must be positive, got {h}")));
        }
        let mut shape = [1usize; 2];
        for axis in 0..dim {
            let len = upper[axis] - lower[axis];
            if !(len > 0.0) {
                return Err(Error::InvalidGrid(format!("empty box along axis {axis}")));
            }
            let cells = len / h;
            let rounded = cells.round();
            if (cells - rounded).abs() > 1e-9 * cells.max(1.0) {
                return Err(Error::InvalidGrid(format!(
                    "box edge {len} is not an integer multiple of h = {h}"
                )));
            }
            shape[axis] = rounded as usize;
            if shape[axis] < 3 {
                return Err(Error::InvalidGrid("need at least 3 cells per axis".into()));
            }
        }
        let (lower, upper) = if dim == 1 {
            ([lower[0], 0.0], [upper[0], 0.0])
        } else {
            (lower, upper)
        };
        let mut grid = GridDomain {
            dim,
            lower,
            upper,
            h,
            shape,
            interior: vec![false; shape[0] * shape[1]],
            ext_radius: 0.0,
        };
        grid.ext_radius = grid.circumscribed_radius();
        Ok(grid)
    }

    /// Square (or interval) box `[-half, half]^n` split into `cells` cells per axis.
    pub fn centered(dim: usize, half: f64, cells: usize) -> Result<Self> {
        let h = 2.0 * half / cells as f64;
        let mut grid = GridDomain::new(dim, [-half, -half], [half, half], h)?;
        // Avoid rounding drift in the shape.
        grid.shape = [cells, if dim == 2 { cells } else { 1 }];
        grid.interior = vec![false; grid.len()];
        Ok(grid)
    }

    /// Marks as interior every node whose center satisfies `pred`.
    ///
    /// Fails if a selected node is not at least one cell away from the box edge.
    pub fn with_interior(mut self, pred: impl Fn(Point) -> bool) -> Result<Self> {
        let mut mask = vec![false; self.len()];
        for k in 0..self.len() {
            if pred(self.node(k)) {
                let [i, j] = self.index(k);
                let edge_i = i == 0 || i + 1 == self.shape[0];
                let edge_j = self.dim == 2 && (j == 0 || j + 1 == self.shape[1]);
                if edge_i || edge_j {
                    return Err(Error::InvalidGrid(format!(
                        "interior node {k} lies on the box edge; interior nodes need one cell of margin"
                    )));
                }
                mask[k] = true;
            }
        }
        self.interior = mask;
        Ok(self)
    }

    /// Interior = open ball of the given radius about the box center.
    pub fn with_ball_interior(self, radius: f64) -> Result<Self> {
        let c = self.center();
        self.with_interior(move |x| dist(x, c) < radius)
    }

    /// Interior = open cube `|x_i - c_i| < half` about the box center.
    pub fn with_cube_interior(self, half: f64) -> Result<Self> {
        let c = self.center();
        let dim = self.dim;
        self.with_interior(move |x| (0..dim).all(|a| (x[a] - c[a]).abs() < half))
    }

    pub fn with_ext_radius(mut self, ext_radius: f64) -> Result<Self> {
        if ext_radius < self.circumscribed_radius() * (1.0 - 1e-12) {
            return Err(Error::InvalidGrid(format!(
                "ext_radius {ext_radius} is smaller than the circumscribed radius {}",
                self.circumscribed_radius()
            )));
        }
        self.ext_radius = ext_radius;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }
    pub fn lower(&self) -> Point {
        self.lower
    }
    pub fn upper(&self) -> Point {
        self.upper
    }
    pub fn ext_radius(&self) -> f64 {
        self.ext_radius
    }
    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1]
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn interior_mask(&self) -> &[bool] {
        &self.interior
    }
    pub fn is_interior(&self, k: usize) -> bool {
        self.interior[k]
    }
    /// Measure of one cell, `h^n`.
    pub fn cell_measure(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }
    pub fn center(&self) -> Point {
        [
            0.5 * (self.lower[0] + self.upper[0]),
            0.5 * (self.lower[1] + self.upper[1]),
        ]
    }
    pub fn circumscribed_radius(&self) -> f64 {
        let c = self.center();
        dist(self.upper, c)
    }
    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.interior[k]).collect()
    }
    /// |Ω| at cell resolution.
    pub fn interior_measure(&self) -> f64 {
        self.interior.iter().filter(|&&b| b).count() as f64 * self.cell_measure()
    }

    #[inline]
    pub fn index(&self, k: usize) -> [usize; 2] {
        [k % self.shape[0], k / self.shape[0]]
    }
    #[inline]
    pub fn flat(&self, i: usize, j: usize) -> usize {
        j * self.shape[0] + i
    }
    #[inline]
    pub fn node(&self, k: usize) -> Point {
        let [i, j] = self.index(k);
        let x = self.lower[0] + (i as f64 + 0.5) * self.h;
        let y = if self.dim == 2 {
            self.lower[1] + (j as f64 + 0.5) * self.h
        } else {
            0.0
        };
        [x, y]
    }

    /// Index of the cell containing `x`, if inside the box.
    pub fn locate(&self, x: Point) -> Option<usize> {
        let mut idx = [0usize; 2];
        for a in 0..self.dim {
            let t = (x[a] - self.lower[a]) / self.h;
            if t < 0.0 || t >= self.shape[a] as f64 {
                return None;
            }
            idx[a] = t.floor() as usize;
        }
        Some(self.flat(idx[0], idx[1]))
    }

    pub fn contains_point(&self, x: Point) -> bool {
        (0..self.dim).all(|a| x[a] >= self.lower[a] && x[a] <= self.upper[a])
    }

    /// Nodes whose cell centers lie in the open ball, in increasing index order.
    pub fn ball_nodes(&self, ball: &Ball) -> Vec<usize> {
        let mut out = Vec::new();
        let lo = |a: usize| {
            let t = ((ball.center[a] - ball.radius - self.lower[a]) / self.h - 0.5).floor();
            t.max(0.0) as usize
        };
        let hi = |a: usize| {
            let t = ((ball.center[a] + ball.radius - self.lower[a]) / self.h + 0.5).ceil();
            (t.max(0.0) as usize).min(self.shape[a])
        };
        let (i0, i1) = (lo(0), hi(0));
        let (j0, j1) = if self.dim == 2 { (lo(1), hi(1)) } else { (0, 1) };
        for j in j0..j1 {
            for i in i0..i1 {
                let k = self.flat(i, j);
                if ball.contains(self.node(k)) {
                    out.push(k);
                }
            }
        }
        out
    }

    fn nonempty_ball_nodes(&self, ball: &Ball) -> Result<Vec<usize>> {
        let nodes = self.ball_nodes(ball);
        if nodes.is_empty() {
            Err(Error::EmptyBall { radius: ball.radius })
        } else {
            Ok(nodes)
        }
    }

    /// Mask of the nodes inside a ball.
    pub fn ball_mask(&self, ball: &Ball) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        for k in self.ball_nodes(ball) {
            mask[k] = true;
        }
        mask
    }

    /// Short fingerprint of the geometry (shape, box, h, mask).
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update((self.dim as u64).to_le_bytes());
        for v in [self.lower[0], self.lower[1], self.upper[0], self.upper[1], self.h, self.ext_radius] {
            hasher.update(v.to_le_bytes());
        }
        hasher.update((self.shape[0] as u64).to_le_bytes());
        hasher.update((self.shape[1] as u64).to_le_bytes());
        let mask: Vec<u8> = self.interior.iter().map(|&b| b as u8).collect();
        hasher.update(&mask);
        hex::encode(&hasher.finalize()[..12])
    }
}

/// Scalar samples at every node of a grid, plus a constant far field outside the box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub values: Vec<f64>,
    /// Value assumed outside the box; `None` means unset (treated as 0 where a value is needed).
    pub far_field: Option<f64>,
}

impl GridFunction {
    pub fn new(values: Vec<f64>, far_field: Option<f64>) -> Result<Self> {
        if let Some((k, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite value {v} at node {k}")));
        }
        if let Some(f) = far_field {
            if !f.is_finite() {
                return Err(Error::InvalidParameter("non-finite far field".into()));
            }
        }
        Ok(GridFunction { values, far_field })
    }

    pub fn constant(grid: &GridDomain, c: f64) -> Self {
        GridFunction {
            values: vec![c; grid.len()],
            far_field: Some(c),
        }
    }

    pub fn zeros(grid: &GridDomain) -> Self {
        GridFunction::constant(grid, 0.0)
    }

    /// Samples `f` at every node; the far field is `far_field`.
    pub fn from_fn(grid: &GridDomain, far_field: Option<f64>, f: impl Fn(Point) -> f64) -> Self {
        GridFunction {
            values: (0..grid.len()).map(|k| f(grid.node(k))).collect(),
            far_field,
        }
    }

    pub fn far(&self) -> f64 {
        self.far_field.unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at an arbitrary point: the value of the containing cell, or the far field.
    pub fn eval(&self, grid: &GridDomain, x: Point) -> f64 {
        match grid.locate(x) {
            Some(k) => self.values[k],
            None => self.far(),
        }
    }

    pub fn check_grid(&self, grid: &GridDomain) -> Result<()> {
        if self.values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "function has {} values, grid has {} nodes",
                self.values.len(),
                grid.len()
            )));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            values: self.values.iter().map(|&v| f(v)).collect(),
            far_field: self.far_field.map(&f),
        }
    }

    pub fn scale(&self, t: f64) -> GridFunction {
        self.map(|v| t * v)
    }

    pub fn shift(&self, c: f64) -> GridFunction {
        self.map(|v| v + c)
    }

    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        GridFunction {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
            far_field: match (self.far_field, other.far_field) {
                (None, None) => None,
                (a, b) => Some(a.unwrap_or(0.0) - b.unwrap_or(0.0)),
            },
        }
    }

    pub fn add(&self, other: &GridFunction) -> GridFunction {
        self.sub(&other.scale(-1.0))
    }
}

/// Discrete gradient: centered differences, one-sided at the box edge.
pub fn gradient(grid: &GridDomain, f: &GridFunction) -> Vec<Vector> {
    let h = grid.h();
    let [nx, ny] = grid.shape();
    let v = &f.values;
    let mut out = vec![[0.0; 2]; grid.len()];
    for k in 0..grid.len() {
        let [i, j] = grid.index(k);
        let dx = if i == 0 {
            (v[k + 1] - v[k]) / h
        } else if i + 1 == nx {
            (v[k] - v[k - 1]) / h
        } else {
            (v[k + 1] - v[k - 1]) / (2.0 * h)
        };
        let dy = if grid.dim() == 1 {
            0.0
        } else if j == 0 {
            (v[k + nx] - v[k]) / h
        } else if j + 1 == ny {
            (v[k] - v[k - nx]) / h
        } else {
            (v[k + nx] - v[k - nx]) / (2.0 * h)
        };
        out[k] = [dx, dy];
    }
    out
}

/// Mean of `f` over the cells whose centers lie in `ball`.
pub fn ball_average(grid: &GridDomain, f: &GridFunction, ball: &Ball) -> Result<f64> {
    f.check_grid(grid)?;
    let nodes = grid.nonempty_ball_nodes(ball)?;
    Ok(mean_over(&nodes, |k| f.values[k]))
}

/// Mean of an arbitrary nodal quantity over the cells of a ball.
pub fn ball_mean_by(grid: &GridDomain, ball: &Ball, f: impl Fn(usize) -> f64) -> Result<f64> {
    let nodes = grid.nonempty_ball_nodes(ball)?;
    Ok(mean_over(&nodes, f))
}

/// Componentwise mean of a vector field over a ball.
pub fn ball_average_vector(grid: &GridDomain, field: &[Vector], ball: &Ball) -> Result<Vector> {
    let nodes = grid.nonempty_ball_nodes(ball)?;
    Ok([
        mean_over(&nodes, |k| field[k][0]),
        mean_over(&nodes, |k| field[k][1]),
    ])
}

fn mean_over(nodes: &[usize], f: impl Fn(usize) -> f64) -> f64 {
    let mut g = |i: usize| f(nodes[i]);
    pairwise_sum_by(nodes.len(), &mut g) / nodes.len() as f64
}

/// Mean of `|f - (f)_B|` over `B`, Euclidean norm for vector values.
pub fn excess(grid: &GridDomain, field: &[Vector], ball: &Ball) -> Result<f64> {
    let nodes = grid.nonempty_ball_nodes(ball)?;
    let m = [
        mean_over(&nodes, |k| field[k][0]),
        mean_over(&nodes, |k| field[k][1]),
    ];
    Ok(mean_over(&nodes, |k| norm2([field[k][0] - m[0], field[k][1] - m[1]])))
}

/// Scalar excess `mean_B |f - (f)_B|`.
pub fn excess_scalar(grid: &GridDomain, f: &GridFunction, ball: &Ball) -> Result<f64> {
    let nodes = grid.nonempty_ball_nodes(ball)?;
    let m = mean_over(&nodes, |k| f.values[k]);
    Ok(mean_over(&nodes, |k| (f.values[k] - m).abs()))
}

/// `sup_B f - inf_B f` over node values.
pub fn oscillation(grid: &GridDomain, f: &GridFunction, ball: &Ball) -> Result<f64> {
    let nodes = grid.nonempty_ball_nodes(ball)?;
    let (lo, hi) = nodes.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &k| {
        (lo.min(f.values[k]), hi.max(f.values[k]))
    });
    Ok(hi - lo)
}

/// Double integral `∫_B ∫_B |f(x)-f(y)|^p / |x-y|^{n+sp}` by cell-pair sums.
///
/// The diagonal pair `x = y` is excluded as a quadrature convention; its
/// contribution vanishes with `h` for grid-Lipschitz `f`.
pub fn gagliardo_seminorm(grid: &GridDomain, f: &GridFunction, ball: &Ball, s: f64, p: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) || p < 1.0 {
        return Err(Error::InvalidParameter(format!("need s in (0,1), p >= 1; got s={s}, p={p}")));
    }
    f.check_grid(grid)?;
    let nodes = grid.ball_nodes(ball);
    let n = grid.dim() as f64;
    let expo = 0.5 * (n + s * p);
    let w = grid.cell_measure().powi(2);
    let rows: Vec<f64> = nodes
        .iter()
        .map(|&a| {
            let xa = grid.node(a);
            let fa = f.values[a];
            let mut row = |ib: usize| {
                let b = nodes[ib];
                if b == a {
                    return 0.0;
                }
                let xb = grid.node(b);
                let r2 = (xa[0] - xb[0]).powi(2) + (xa[1] - xb[1]).powi(2);
                abs_pow(fa - f.values[b], p) / r2.powf(expo)
            };
            pairwise_sum_by(nodes.len(), &mut row)
        })
        .collect();
    Ok(pairwise_sum(&rows) * w)
}

/// `(Σ_Ω |u1-u2|^q h^n)^{1/q} + (Σ_Ω |D_h u1 - D_h u2|^q h^n)^{1/q}` over interior nodes.
pub fn discrete_w1q_distance(grid: &GridDomain, u1: &GridFunction, u2: &GridFunction, q: f64) -> Result<f64> {
    u1.check_grid(grid)?;
    u2.check_grid(grid)?;
    if q < 1.0 {
        return Err(Error::InvalidParameter(format!("q must be >= 1, got {q}")));
    }
    let diff = u1.sub(u2);
    let grad = gradient(grid, &diff);
    let nodes = grid.interior_nodes();
    let hn = grid.cell_measure();
    let mut val = |i: usize| abs_pow(diff.values[nodes[i]], q);
    let l = pairwise_sum_by(nodes.len(), &mut val) * hn;
    let mut gval = |i: usize| abs_pow(norm2(grad[nodes[i]]), q);
    let g = pairwise_sum_by(nodes.len(), &mut gval) * hn;
    Ok(l.powf(1.0 / q) + g.powf(1.0 / q))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(cells: usize) -> GridDomain {
        GridDomain::centered(2, 1.5, cells).unwrap().with_cube_interior(1.2).unwrap()
    }

    #[test]
    fn rejects_non_multiple_box() {
        assert!(GridDomain::new(1, [0.0, 0.0], [1.0, 0.0], 0.3).is_err());
        assert!(GridDomain::new(1, [0.0, 0.0], [1.2, 0.0], 0.3).is_ok());
    }

    #[test]
    fn interior_needs_margin() {
        let g = GridDomain::centered(1, 1.0, 10).unwrap();
        assert!(g.clone().with_interior(|_| true).is_err());
        assert!(g.with_interior(|x| x[0].abs() < 0.75).is_ok());
    }

    #[test]
    fn ball_average_of_constant() {
        let g = plane(60);
        let f = GridFunction::constant(&g, 3.0);
        let b = Ball::new([0.1, -0.2], 0.5).unwrap();
        assert_eq!(ball_average(&g, &f, &b).unwrap(), 3.0);
    }

    #[test]
    fn odd_function_has_zero_mean_on_symmetric_ball() {
        let g = plane(60);
        let f = GridFunction::from_fn(&g, None, |x| x[0]);
        let b = Ball::new([0.0, 0.0], 0.9).unwrap();
        assert!(ball_average(&g, &f, &b).unwrap().abs() < 1e-14);
    }

    #[test]
    fn tiny_ball_is_an_error() {
        let g = plane(30);
        let f = GridFunction::zeros(&g);
        let b = Ball::new([0.0, 0.0], 1e-4).unwrap();
        assert!(matches!(ball_average(&g, &f, &b), Err(Error::EmptyBall { .. })));
    }

    #[test]
    fn excess_of_sign_field_is_one() {
        let g = plane(60);
        let field: Vec<Vector> = (0..g.len())
            .map(|k| [g.node(k)[0].signum(), 0.0])
            .collect();
        let b = Ball::new([0.0, 0.0], 1.0).unwrap();
        assert!((excess(&g, &field, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oscillation_of_coordinate_on_line() {
        let g = GridDomain::centered(1, 2.0, 400).unwrap();
        let f = GridFunction::from_fn(&g, None, |x| x[0]);
        let b = Ball::new([0.0, 0.0], 1.0).unwrap();
        let osc = oscillation(&g, &f, &b).unwrap();
        assert!((osc - 2.0).abs() <= g.h() + 1e-12);
    }

    #[test]
    fn w1q_distance_of_constant_shift() {
        let g = plane(40);
        let u = GridFunction::from_fn(&g, None, |x| x[0] * x[1]);
        let c = 0.7;
        let d = discrete_w1q_distance(&g, &u.shift(c), &u, 1.5).unwrap();
        let expected = c * g.interior_measure().powf(1.0 / 1.5);
        assert!((d - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn w1q_distance_rejects_mismatch() {
        let g = plane(20);
        let u = GridFunction::zeros(&g);
        let v = GridFunction::new(vec![0.0; 7], None).unwrap();
        assert!(discrete_w1q_distance(&g, &u, &v, 1.0).is_err());
    }

    #[test]
    fn gagliardo_scales_with_p() {
        let g = GridDomain::centered(1, 1.0, 100).unwrap();
        let f = GridFunction::from_fn(&g, None, |x| (1.0 - x[0].abs()).max(0.0));
        let b = Ball::new([0.0, 0.0], 1.0).unwrap();
        let a = gagliardo_seminorm(&g, &f, &b, 0.3, 2.0).unwrap();
        let a3 = gagliardo_seminorm(&g, &f.scale(3.0), &b, 0.3, 2.0).unwrap();
        assert!((a3 - 9.0 * a).abs() < 1e-10 * a3);
        let c = gagliardo_seminorm(&g, &GridFunction::constant(&g, 2.0), &b, 0.3, 2.0).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn gradient_is_exact_on_affine() {
        let g = plane(30);
        let f = GridFunction::from_fn(&g, None, |x| 2.0 * x[0] - 0.5 * x[1] + 1.0);
        for z in gradient(&g, &f) {
            assert!((z[0] - 2.0).abs() < 1e-10 && (z[1] + 0.5).abs() < 1e-10);
        }
    }
}
