use super::assembly::{assemble_step, cfl_number};
use super::{Field, Grid, TransportConfig};
use crate::error::{Error, Result};
use crate::linalg::{solve_sparse, SolverOptions};

/// Advances `u0` by `n_steps` implicit steps and returns the fields after
/// each step (the initial field is not included).
pub fn march(grid: &Grid, cfg: &TransportConfig, u0: &Field, n_steps: usize) -> Result<Vec<Field>> {
    march_with(grid, cfg, u0, n_steps, SolverOptions::default())
}

pub fn march_with(
    grid: &Grid,
    cfg: &TransportConfig,
    u0: &Field,
    n_steps: usize,
    opts: SolverOptions,
) -> Result<Vec<Field>> {
    if n_steps == 0 {
        return Err(Error::invalid("n_steps must be at least 1"));
    }
    let mut out: Vec<Field> = Vec::with_capacity(n_steps);
    let mut cfl_max = 0.0_f64;
    for step in 0..n_steps {
        let prev = out.last().unwrap_or(u0);
        cfl_max = cfl_max.max(cfl_number(grid, prev, cfg.dt));
        let sys = assemble_step(grid, cfg, prev, prev)?;
        let (x, stats) = solve_sparse(&sys.a, &sys.b, opts).map_err(|e| {
            log::error!("linear solve failed at step {}: {e}", step + 1);
            e
        })?;
        log::trace!("step {}: {} iterations, residual {:e}", step + 1, stats.iterations, stats.residual);
        let mut next = Field::from_values(grid, prev.n_components, x, u0.time + (step + 1) as f64 * cfg.dt)?;
        next.nu = prev.nu;
        out.push(next);
    }
    log::debug!("marched {n_steps} steps, max Courant number {cfl_max:.3}");
    Ok(out)
}
