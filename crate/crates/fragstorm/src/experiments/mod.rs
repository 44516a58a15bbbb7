//! One module per experiment; [`run`] dispatches and stamps metadata.

mod antichain;
mod asymptotics;
mod mto;
mod report;
mod simulate;
mod spine;
mod variational;
mod verify;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use fragstorm_core::asymptotics::AsymptoticProfile;
use fragstorm_core::partitions::MeasureKind;

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::pool::Pool;
use crate::table::ResultTable;

pub use simulate::compare_m_vs_g;
pub use verify::{phi_asymptotic_ratios, phi_closed};

/// A finished experiment.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub table: ResultTable,
    /// Rows or summary statistics outside their acceptance window.
    pub deviations: usize,
    /// Replicas or grid points that ended in a numerical error.
    pub failures: usize,
}

impl Outcome {
    fn new(table: ResultTable) -> Self {
        Self {
            table,
            deviations: 0,
            failures: 0,
        }
    }

    /// 0 when clean, 1 on replica failures, 2 on acceptance deviations.
    pub fn exit_code(&self) -> i32 {
        if self.failures > 0 {
            1
        } else if self.deviations > 0 {
            2
        } else {
            0
        }
    }
}

pub fn run(cfg: &ExperimentConfig, pool: &Pool) -> Result<Outcome> {
    let mut out = match cfg.experiment {
        Experiment::Simulate => simulate::run(cfg, pool)?,
        Experiment::Spine => spine::run(cfg, pool)?,
        Experiment::VerifyPhi => verify::phi(cfg)?,
        Experiment::VerifyTails => verify::tails(cfg, pool)?,
        Experiment::Variational => variational::run(cfg, pool)?,
        Experiment::Asymptotics => asymptotics::run(cfg)?,
        Experiment::Mto => mto::run(cfg, pool)?,
        Experiment::Antichain => antichain::run(cfg, pool)?,
        Experiment::Report => report::run(cfg)?,
    };
    stamp(cfg, &mut out);
    Ok(out)
}

fn stamp(cfg: &ExperimentConfig, out: &mut Outcome) {
    let t = &mut out.table;
    t.set_meta("experiment", cfg.experiment.name());
    t.set_meta("seed", cfg.seed.to_string());
    t.set_meta("replicas", cfg.replicas.to_string());
    t.set_meta("deviations", out.deviations.to_string());
    t.set_meta("failures", out.failures.to_string());
    if !cfg.measure.is_finite() {
        let a = cfg.jump_floor;
        if a > 0.0 {
            // Checked at load time: a lies in (0, 1/2].
            let per_unit = cfg.measure.truncation_bias(a).unwrap_or(f64::NAN);
            t.set_meta_real("truncation.jump_floor", a);
            t.set_meta_real("truncation.bias_per_unit_time", per_unit);
            if let Some(horizon) = horizon(cfg) {
                t.set_meta_real("truncation.bias_bound", per_unit * horizon);
            }
        } else {
            t.set_meta("truncation.jump_floor", "none");
        }
    }
    // Where the table goes is not part of the result.
    for (k, v) in cfg.raw.entries().filter(|(k, _)| !k.starts_with("output.")) {
        t.set_meta(&format!("config.{k}"), v);
    }
}

fn horizon(cfg: &ExperimentConfig) -> Option<f64> {
    cfg.grid.t.iter().copied().reduce(f64::max).or(cfg.t_end)
}

/// The asymptotic law matching the configured measure.
pub fn profile(cfg: &ExperimentConfig) -> Result<AsymptoticProfile> {
    Ok(match cfg.measure.kind() {
        MeasureKind::CrumbleBinary { theta, ell } => {
            AsymptoticProfile::infinite(cfg.alpha, *theta, ell.clone())?.with_convention(cfg.convention)
        }
        _ => AsymptoticProfile::finite(cfg.alpha, cfg.measure.total_rate().unwrap_or(f64::NAN))?,
    })
}

/// Splits replica results into successes and a failure count.
///
/// Parameter violations abort the whole experiment instead of being counted.
fn partition_results<T>(results: Vec<fragstorm_core::Result<T>>) -> Result<(Vec<T>, usize)> {
    let mut ok = Vec::with_capacity(results.len());
    let mut failed = 0;
    for r in results {
        match r {
            Ok(x) => ok.push(x),
            Err(e @ fragstorm_core::Error::InvalidArgument { .. }) => return Err(e.into()),
            Err(_) => failed += 1,
        }
    }
    Ok((ok, failed))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| HarnessError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

