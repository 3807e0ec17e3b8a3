//! Pipelines behind the subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;
use serde_json::json;

use mixpot::experiments::{Context, ExperimentReport};
use mixpot::field::VectorFieldSpec;
use mixpot::grid::{GridDomain, GridFunction};
use mixpot::io::{atomic_write, config_hash, profile_csv, write_grid_function, write_log};
use mixpot::kernel::KernelWeights;
use mixpot::measure::mollify_measure;
use mixpot::numeric::signed_pow;
use mixpot::operators::apply_fractional_p_laplacian;
use mixpot::potentials::{riesz_profile, wolff_profile};
use mixpot::solver::{sola_solve, solve_dirichlet};

use crate::config::{CommandKind, PotentialKind, RunConfig};
use crate::error::{CliError, Result};

/// Largest admissible audit discrepancy.
pub const AUDIT_TOLERANCE: f64 = 1e-10;

/// Command-line choices layered over the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Invocation {
    pub command: Option<CommandKind>,
    pub names: Vec<String>,
    pub out: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub threads: Option<usize>,
    pub dense_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Pass => 0,
            Status::Fail => 2,
        }
    }
}

struct Run {
    cfg: RunConfig,
    hash: String,
    ctx: Context,
    dense_ok: bool,
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.cfg.output.join(name)
    }

    fn write_json<T: Serialize>(&self, path: &Path, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        atomic_write(path, text.as_bytes())?;
        Ok(())
    }

    /// Records the effective configuration next to the artifacts.
    fn write_config(&self) -> Result<()> {
        let text = format!("# config_hash = \"{}\"\n{}", self.hash, self.cfg.to_toml()?);
        atomic_write(&self.path("config.toml"), text.as_bytes())?;
        Ok(())
    }
}

/// Hash of the settings that determine results; output location, cache and
/// worker count are excluded.
pub fn result_hash(cfg: &RunConfig) -> Result<String> {
    let mut key = cfg.clone();
    key.output = PathBuf::new();
    key.cache = None;
    key.threads = 1;
    key.command = None;
    Ok(config_hash(&key)?)
}

/// Executes the pipeline; errors map to exit status 1 in the binary.
pub fn run(mut cfg: RunConfig, inv: &Invocation) -> Result<Status> {
    let command = inv
        .command
        .or(cfg.command)
        .ok_or_else(|| CliError::Config("no command given on the command line or in the configuration".into()))?;
    if let Some(out) = &inv.out {
        cfg.output = out.clone();
    }
    if inv.cache.is_some() {
        cfg.cache = inv.cache.clone();
    }
    if let Some(t) = inv.threads {
        cfg.threads = t;
    }
    cfg.apply_seed();
    let names = cfg.selected(&inv.names);
    let violations = cfg.violations(command, &names);
    if !violations.is_empty() {
        return Err(CliError::Invalid(violations));
    }
    let hash = result_hash(&cfg)?;
    let mut ctx = Context::new(cfg.solver, cfg.thresholds, cfg.cache.clone(), &hash);
    ctx.sola = cfg.sola;
    ctx.threads = cfg.threads;
    let run = Run {
        cfg,
        hash,
        ctx,
        dense_ok: inv.dense_ok,
    };
    info!("{command:?} with configuration {}", run.hash);
    match command {
        CommandKind::Potential => potential(&run),
        CommandKind::Solve => solve(&run),
        CommandKind::Sola => sola(&run),
        CommandKind::Experiment => experiments(&run, &names),
        CommandKind::Audit => audit(&run, &names),
    }
}

fn potential(run: &Run) -> Result<Status> {
    let cfg = &run.cfg;
    let grid = cfg.scene.grid.build(None)?;
    let mu = cfg.scene.measure.build(&grid)?;
    let pot = &cfg.potential;
    let profile = match pot.kind {
        PotentialKind::Riesz => riesz_profile(&mu, pot.x0, &pot.radii, cfg.params.n)?,
        PotentialKind::Wolff => wolff_profile(&mu, pot.x0, &pot.radii, pot.beta, cfg.params.p, cfg.params.n)?,
    };
    run.write_config()?;
    atomic_write(&run.path("potential.csv"), profile_csv(&profile, &run.hash).as_bytes())?;
    let last = profile.values.last().copied().unwrap_or(0.0);
    println!(
        "potential: {:?} at ({}, {}) over {} radii, value {last:.6e} at R = {}",
        pot.kind,
        pot.x0[0],
        pot.x0[1],
        profile.radii.len(),
        profile.radii.last().copied().unwrap_or(0.0)
    );
    Ok(Status::Pass)
}

/// Largest relative difference between the nonlocal term from the kernel
/// operator and from the materialized dense matrix.
fn dense_discrepancy(grid: &GridDomain, kernel: &KernelWeights, u: &GridFunction, p: f64, dense_ok: bool) -> Result<f64> {
    let dense = kernel.dense_matrix(dense_ok)?;
    let fast = apply_fractional_p_laplacian(u, grid, kernel, p)?;
    let n = grid.len();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for i in grid.interior_nodes() {
        let ui = u.values[i];
        let mut acc = kernel.far_weight(i) * signed_pow(ui - u.far(), p);
        for j in 0..n {
            if j != i {
                acc += dense[i * n + j] * signed_pow(ui - u.values[j], p);
            }
        }
        worst = worst.max((acc - fast.values[i]).abs());
        scale = scale.max(acc.abs());
    }
    Ok(if scale > 0.0 { worst / scale } else { worst })
}

fn solve(run: &Run) -> Result<Status> {
    let cfg = &run.cfg;
    let grid = cfg.scene.grid.build(None)?;
    let g = cfg.scene.exterior_on(&grid);
    let mut mu = cfg.scene.measure.build(&grid)?;
    let mollified = if mu.atoms.is_empty() {
        None
    } else {
        let width = 2.0 * grid.h();
        mu = mollify_measure(&mu, width, &grid, cfg.sola.shape)?;
        Some(width)
    };
    let kernel = run.ctx.kernel(&grid, &cfg.params)?;
    let spec = VectorFieldSpec::model(cfg.params.p);
    let sol = solve_dirichlet(&mu, &g, &grid, &cfg.params, &spec, &kernel, &cfg.solver)?;
    let dense = if cfg.dense_check {
        Some(dense_discrepancy(&grid, &kernel, &sol.u, cfg.params.p, run.dense_ok)?)
    } else {
        None
    };
    run.write_config()?;
    write_grid_function(&run.path("solution.json"), &grid, &sol.u, &run.hash)?;
    write_log(&run.path("solve_log.json"), &sol.log, &run.hash)?;
    run.write_json(
        &run.path("summary.json"),
        &json!({
            "config_hash": run.hash,
            "command": "solve",
            "iterations": sol.iterations,
            "relative_residual": sol.residual,
            "regularization": sol.eps,
            "dense_discrepancy": dense,
            "point_masses_mollified_at": mollified,
        }),
    )?;
    let extra = dense.map_or(String::new(), |d| format!(", dense check {d:.1e}"));
    println!("solve: {} iterations, relative residual {:.3e}{extra}", sol.iterations, sol.residual);
    Ok(Status::Pass)
}

fn sola(run: &Run) -> Result<Status> {
    let cfg = &run.cfg;
    let grid = cfg.scene.grid.build(None)?;
    let g = cfg.scene.exterior_on(&grid);
    let mu = cfg.scene.measure.build(&grid)?;
    let kernel = run.ctx.kernel(&grid, &cfg.params)?;
    let spec = VectorFieldSpec::model(cfg.params.p);
    let res = sola_solve(&mu, &g, &grid, &cfg.params, &spec, &kernel, &cfg.solver, &cfg.sola)?;
    run.write_config()?;
    write_grid_function(&run.path("sola_solution.json"), &grid, &res.u, &run.hash)?;
    write_log(&run.path("sola_log.json"), &res.log, &run.hash)?;
    let mut csv = format!("# config_hash={}\nlevel,delta,distance\n", run.hash);
    for (k, d) in res.deltas.iter().enumerate() {
        let dist = if k == 0 { String::new() } else { format!("{:e}", res.distances[k - 1]) };
        csv.push_str(&format!("{k},{d:e},{dist}\n"));
    }
    atomic_write(&run.path("sola_distances.csv"), csv.as_bytes())?;
    println!(
        "sola: {} levels, W^(1,{}) distances {:?}, settled {}",
        res.deltas.len(),
        res.q,
        res.distances,
        res.converged
    );
    Ok(if res.converged { Status::Pass } else { Status::Fail })
}

fn run_experiment(run: &Run, name: &str) -> Result<ExperimentReport> {
    let mut suite = run.cfg.suite.clone();
    if let Some(seed) = run.cfg.seed {
        suite.pointwise.seed = seed;
        suite.monotonicity.seed = seed;
    }
    Ok(suite.run(name, &run.ctx)?)
}

fn experiments(run: &Run, names: &[String]) -> Result<Status> {
    if names.is_empty() {
        println!("experiment: nothing to run");
        return Ok(Status::Pass);
    }
    run.write_config()?;
    let mut status = Status::Pass;
    for name in names {
        let rep = run_experiment(run, name)?;
        let dir = run.path(name);
        run.write_json(&dir.join("report.json"), &rep)?;
        atomic_write(&dir.join("report.csv"), rep.to_csv().as_bytes())?;
        println!("{}", rep.summary());
        if !rep.verdict {
            status = Status::Fail;
        }
    }
    Ok(status)
}

fn audit(run: &Run, names: &[String]) -> Result<Status> {
    if names.is_empty() {
        println!("audit: no experiments configured, max discrepancy 0");
        return Ok(Status::Pass);
    }
    let mut per = BTreeMap::new();
    let mut worst = 0.0f64;
    for name in names {
        let rep = run_experiment(run, name)?;
        println!("{name}: audit discrepancy {:.3e}", rep.audit_discrepancy);
        worst = worst.max(rep.audit_discrepancy);
        per.insert(name.clone(), rep.audit_discrepancy);
    }
    run.write_config()?;
    run.write_json(
        &run.path("audit.json"),
        &json!({
            "config_hash": run.hash,
            "discrepancies": per,
            "max_discrepancy": worst,
            "tolerance": AUDIT_TOLERANCE,
        }),
    )?;
    let pass = worst <= AUDIT_TOLERANCE;
    println!("audit: max discrepancy {worst:.3e} ({})", if pass { "PASS" } else { "FAIL" });
    Ok(if pass { Status::Pass } else { Status::Fail })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_output_location_and_workers() {
        let a = RunConfig::default();
        let b = RunConfig {
            output: "elsewhere".into(),
            threads: 4,
            cache: Some("cache".into()),
            ..Default::default()
        };
        assert_eq!(result_hash(&a).unwrap(), result_hash(&b).unwrap());
        let c = RunConfig {
            seed: Some(3),
            ..Default::default()
        };
        assert_ne!(result_hash(&a).unwrap(), result_hash(&c).unwrap());
    }

    #[test]
    fn missing_command_is_an_error() {
        assert!(run(RunConfig::default(), &Invocation::default()).is_err());
    }

    #[test]
    fn dense_check_agrees_with_kernel_operator() {
        let grid = GridDomain::centered(2, 1.0, 12).unwrap().with_ball_interior(0.8).unwrap();
        let params = mixpot::params::ParamSet::new(2, 0.4, 2.5).unwrap();
        let kernel = KernelWeights::assemble(&grid, &params, mixpot::kernel::KernelVariant::Model).unwrap();
        let u = GridFunction::from_fn(&grid, Some(0.3), |x| x[0] * x[1] + 0.5 * x[0]);
        assert!(dense_discrepancy(&grid, &kernel, &u, 2.5, false).unwrap() < 1e-12);
    }
}
