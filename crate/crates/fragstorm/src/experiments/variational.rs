use fragstorm_core::variational::{c_minimizer, solve_C_numeric, C_closed};

use super::{partition_results, Outcome};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::pool::Pool;
use crate::table::ResultTable;

pub const GAP_TOLERANCE: f64 = 1e-6;
pub const KKT_TOLERANCE: f64 = 1e-8;
/// Leading coordinates of the minimizer compared against the closed form.
pub const MINIMIZER_TERMS: usize = 20;

const DEFAULT_THETA: [f64; 3] = [0.25, 0.5, 0.75];
const DEFAULT_ALPHA: [f64; 3] = [0.5, 1.0, 2.0];
const DEFAULT_EPSILON: [f64; 3] = [0.1, 0.5, 1.0];

fn or_default(xs: &[f64], d: &[f64]) -> Vec<f64> {
    if xs.is_empty() {
        d.to_vec()
    } else {
        xs.to_vec()
    }
}

/// Closed-form minimum of the variational problem against the Lagrange solver.
pub(super) fn run(cfg: &ExperimentConfig, pool: &Pool) -> Result<Outcome> {
    let mut points = Vec::new();
    for &th in &or_default(&cfg.grid.theta, &DEFAULT_THETA) {
        for &al in &or_default(&cfg.grid.alpha, &DEFAULT_ALPHA) {
            for &ep in &or_default(&cfg.grid.epsilon, &DEFAULT_EPSILON) {
                points.push((th, al, ep));
            }
        }
    }
    let n_trunc = cfg.n_trunc;
    let results = pool.replicas(cfg.seed, points.len() as u64, |i, _| {
        let (th, al, ep) = points[i as usize];
        let exact = C_closed(th, al, ep)?;
        let num = solve_C_numeric(th, al, ep, n_trunc)?;
        let mut z_err: f64 = 0.0;
        for k in 0..MINIMIZER_TERMS.min(num.minimizer.len()) {
            let z = c_minimizer(th, al, ep, k)?;
            z_err = z_err.max((num.minimizer[k] - z).abs() / z.max(1.0));
        }
        Ok(vec![
            th,
            al,
            ep,
            exact,
            num.value,
            ((num.value - exact) / exact).abs(),
            num.constraint_residual,
            num.stationarity_residual,
            z_err,
        ])
    });
    let total = results.len();
    let (rows, failed) = partition_results(results)?;
    let mut table = ResultTable::new([
        "theta",
        "alpha",
        "epsilon",
        "c_closed",
        "c_numeric",
        "rel_gap",
        "constraint_residual",
        "stationarity_residual",
        "minimizer_max_err",
    ]);
    let mut deviations = 0;
    for row in rows {
        if row[5] > GAP_TOLERANCE || row[6] > KKT_TOLERANCE || row[7] > KKT_TOLERANCE || row[8] > GAP_TOLERANCE {
            deviations += 1;
        }
        table.push(row);
    }
    table.set_meta("grid_points", total.to_string());
    table.set_meta("n_trunc", n_trunc.to_string());
    let mut out = Outcome::new(table);
    out.deviations = deviations;
    out.failures = failed;
    Ok(out)
}
