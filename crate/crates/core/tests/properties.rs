use proptest::prelude::*;

use mixpot::field::{inverse_a, v_map, vector_field_a, VectorFieldSpec};
use mixpot::grid::{ball_average, excess_scalar, Ball, GridDomain, GridFunction};
use mixpot::kernel::{KernelVariant, KernelWeights};
use mixpot::measure::{Atom, Measure};
use mixpot::operators::{apply_fractional_p_laplacian, apply_local_p_laplacian};
use mixpot::params::ParamSet;
use mixpot::potentials::{riesz_potential, tail, wolff_potential};
use mixpot::rearrangement::decreasing_rearrangement;
use mixpot::solver::{solve_dirichlet, SolveConfig};

const CELLS: usize = 12;

fn grid() -> GridDomain {
    GridDomain::centered(2, 1.0, CELLS).unwrap().with_ball_interior(0.75).unwrap()
}

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, CELLS * CELLS)
}

fn atoms() -> impl Strategy<Value = Vec<Atom>> {
    prop::collection::vec(((-0.9f64..0.9), (-0.9f64..0.9), (0.05f64..2.0)), 1..6)
        .prop_map(|v| v.into_iter().map(|(x, y, w)| Atom { x: [x, y], w }).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ball_average_is_linear(f in values(), g in values(), a in -3.0f64..3.0, b in -3.0f64..3.0, r in 0.3f64..0.9) {
        let grid = grid();
        let ball = Ball::new([0.0, 0.0], r).unwrap();
        let f = GridFunction::new(f, Some(0.0)).unwrap();
        let g = GridFunction::new(g, Some(0.0)).unwrap();
        let combo = f.scale(a).add(&g.scale(b));
        let lhs = ball_average(&grid, &combo, &ball).unwrap();
        let rhs = a * ball_average(&grid, &f, &ball).unwrap() + b * ball_average(&grid, &g, &ball).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn excess_is_controlled_by_any_constant(f in values(), xi in -3.0f64..3.0, r in 0.3f64..0.9) {
        let grid = grid();
        let ball = Ball::new([0.1, -0.1], r).unwrap();
        let f = GridFunction::new(f, Some(0.0)).unwrap();
        let e = excess_scalar(&grid, &f, &ball).unwrap();
        let dev = ball_average(&grid, &f.shift(-xi).map(f64::abs), &ball).unwrap();
        prop_assert!(e <= 2.0 * dev + 1e-12);
    }

    #[test]
    fn rearrangement_is_nonincreasing_and_equimeasurable(f in values(), t in 0.0f64..2.0) {
        let grid = grid();
        let f = GridFunction::new(f, Some(0.0)).unwrap();
        let mask = vec![true; grid.len()];
        let rr = decreasing_rearrangement(&grid, &f, &mask).unwrap();
        prop_assert!(rr.values.windows(2).all(|w| w[0] >= w[1]));
        let count = f.values.iter().filter(|v| v.abs() > t).count() as f64;
        prop_assert!((rr.superlevel_measure(t) - count * grid.cell_measure()).abs() < 1e-12);
    }

    #[test]
    fn potentials_scale_with_mass(atoms in atoms(), t in 0.1f64..10.0, p in 1.6f64..3.5) {
        let mu = Measure::from_atoms(atoms).unwrap();
        let x0 = [0.05, 0.02];
        let r = riesz_potential(&mu, x0, 1.5, 2).unwrap();
        let rt = riesz_potential(&mu.scaled(t), x0, 1.5, 2).unwrap();
        prop_assert!((rt - t * r).abs() <= 1e-10 * (1.0 + rt.abs()));
        let beta = 1.0 / p;
        let w = wolff_potential(&mu, x0, 1.5, beta, p, 2).unwrap();
        let wt = wolff_potential(&mu.scaled(t), x0, 1.5, beta, p, 2).unwrap();
        let want = t.powf(1.0 / (p - 1.0)) * w;
        prop_assert!((wt - want).abs() <= 1e-9 * (1.0 + want.abs()));
    }

    #[test]
    fn potentials_are_nondecreasing_in_radius(atoms in atoms(), r1 in 0.05f64..1.0, dr in 0.0f64..1.0, p in 1.6f64..3.5) {
        let mu = Measure::from_atoms(atoms).unwrap();
        let x0 = [0.0, 0.0];
        let r2 = r1 + dr;
        prop_assert!(riesz_potential(&mu, x0, r1, 2).unwrap() <= riesz_potential(&mu, x0, r2, 2).unwrap() + 1e-12);
        let (a, b) = (
            wolff_potential(&mu, x0, r1, 1.0 / p, p, 2).unwrap(),
            wolff_potential(&mu, x0, r2, 1.0 / p, p, 2).unwrap(),
        );
        prop_assert!(a <= b + 1e-12 * (1.0 + b.abs()));
    }

    #[test]
    fn potentials_are_additive_for_nonnegative_measures(a in atoms(), b in atoms()) {
        let x0 = [0.3, 0.1];
        let ma = Measure::from_atoms(a.clone()).unwrap();
        let mb = Measure::from_atoms(b.clone()).unwrap();
        let both = Measure::from_atoms(a.into_iter().chain(b).collect()).unwrap();
        let sum = riesz_potential(&ma, x0, 1.0, 2).unwrap() + riesz_potential(&mb, x0, 1.0, 2).unwrap();
        let joint = riesz_potential(&both, x0, 1.0, 2).unwrap();
        prop_assert!((joint - sum).abs() <= 1e-10 * (1.0 + sum.abs()));
    }

    #[test]
    fn field_is_monotone_and_invertible(z1 in prop::array::uniform2(-3.0f64..3.0), z2 in prop::array::uniform2(-3.0f64..3.0), p in 1.6f64..4.0) {
        let spec = VectorFieldSpec::model(p);
        let a1 = vector_field_a(z1, &spec).unwrap();
        let a2 = vector_field_a(z2, &spec).unwrap();
        let m = (a1[0] - a2[0]) * (z1[0] - z2[0]) + (a1[1] - a2[1]) * (z1[1] - z2[1]);
        prop_assert!(m >= -1e-12);
        let back = inverse_a(a1, &spec).unwrap();
        prop_assert!((back[0] - z1[0]).abs() < 1e-9 && (back[1] - z1[1]).abs() < 1e-9);
        let v1 = v_map(z1, p);
        let v2 = v_map(z2, p);
        let dv = (v1[0] - v2[0]).powi(2) + (v1[1] - v2[1]).powi(2);
        if dv > 1e-12 {
            let ratio = m / dv;
            prop_assert!(ratio > 0.0 && ratio.is_finite());
        }
    }

    #[test]
    fn tail_is_positively_homogeneous(f in values(), t in 0.1f64..10.0, p in 1.6f64..3.5, r in 0.2f64..0.8) {
        let grid = grid();
        let f = GridFunction::new(f, Some(0.5)).unwrap();
        let base = tail(&grid, &f, [0.0, 0.0], r, p, 0.5).unwrap();
        let scaled = tail(&grid, &f.scale(t), [0.0, 0.0], r, p, 0.5).unwrap();
        prop_assert!((scaled - t * base).abs() <= 1e-9 * (1.0 + scaled.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn nonlocal_operator_is_monotone(u in values(), w in values(), p in prop::sample::select(vec![1.8, 2.0, 2.5, 3.0])) {
        let grid = grid();
        let params = ParamSet::new(2, 0.5, p).unwrap();
        let kernel = KernelWeights::assemble(&grid, &params, KernelVariant::Model).unwrap();
        let mut w = w;
        for k in 0..grid.len() {
            if !grid.is_interior(k) {
                w[k] = u[k];
            }
        }
        let u = GridFunction::new(u, Some(0.3)).unwrap();
        let w = GridFunction::new(w, Some(0.3)).unwrap();
        let lu = apply_fractional_p_laplacian(&u, &grid, &kernel, p).unwrap();
        let lw = apply_fractional_p_laplacian(&w, &grid, &kernel, p).unwrap();
        let diff = u.sub(&w);
        prop_assert!(dot(&lu.sub(&lw).values, &diff.values) >= -1e-10);
    }

    #[test]
    fn operators_are_odd_about_constants(u in values(), c in -1.0f64..1.0, p in prop::sample::select(vec![1.8, 2.0, 3.0])) {
        let grid = grid();
        let params = ParamSet::new(2, 0.5, p).unwrap();
        let kernel = KernelWeights::assemble(&grid, &params, KernelVariant::Model).unwrap();
        let spec = VectorFieldSpec::model(p);
        let u = GridFunction::new(u, Some(0.2)).unwrap();
        let mirror = u.scale(-1.0).shift(2.0 * c);
        let nl = apply_fractional_p_laplacian(&u, &grid, &kernel, p).unwrap();
        let nl_m = apply_fractional_p_laplacian(&mirror, &grid, &kernel, p).unwrap();
        let loc = apply_local_p_laplacian(&u, &grid, &spec).unwrap();
        let loc_m = apply_local_p_laplacian(&mirror, &grid, &spec).unwrap();
        for k in grid.interior_nodes() {
            prop_assert!((nl.values[k] + nl_m.values[k]).abs() <= 1e-10 * (1.0 + nl.values[k].abs()));
            prop_assert!((loc.values[k] + loc_m.values[k]).abs() <= 1e-10 * (1.0 + loc.values[k].abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn linear_solutions_respect_exterior_bounds(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0, amp in 0.0f64..0.5) {
        let grid = grid();
        let params = ParamSet::new(2, 0.5, 2.0).unwrap();
        let kernel = KernelWeights::assemble(&grid, &params, KernelVariant::Model).unwrap();
        let g = GridFunction::from_fn(&grid, Some(c), |x| c + a * x[0] + b * x[1] + amp * (3.0 * x[1]).sin());
        let report = solve_dirichlet(&Measure::zero(), &g, &grid, &params, &VectorFieldSpec::model(2.0), &kernel, &SolveConfig::default()).unwrap();
        let exterior: Vec<f64> = (0..grid.len()).filter(|&k| !grid.is_interior(k)).map(|k| g.values[k]).chain([c]).collect();
        let lo = exterior.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = exterior.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for k in grid.interior_nodes() {
            prop_assert!(report.u.values[k] >= lo - 1e-8 && report.u.values[k] <= hi + 1e-8);
        }
    }
}
