use fragstorm_core::partitions::{MeasureKind, Split};
use fragstorm_core::{DislocationMeasure, SlowlyVarying};

use super::{flag, Outcome};
use crate::config::ExperimentConfig;
use crate::error::{ConfigError, Result};
use crate::pool::{stream, Pool};
use crate::table::ResultTable;

/// Relative agreement required between quadrature and a closed form.
pub const PHI_TOLERANCE: f64 = 1e-8;

const DEFAULT_Q: [f64; 4] = [0.5, 1.0, 2.0, 5.0];
const DEFAULT_DELTA: [f64; 5] = [0.01, 0.04, 0.1, 0.25, 0.45];

/// Closed-form `Φ(q)` where one is known.
pub fn phi_closed(measure: &DislocationMeasure, q: f64) -> Option<f64> {
    match measure.kind() {
        MeasureKind::UniformBinary { rate } => Some(rate * q / (q + 2.0)),
        MeasureKind::FiniteDiscrete { atoms, .. } => {
            let (p, rate) = atoms.first().filter(|_| atoms.len() == 1)?;
            let k = p.len();
            let equal = p.masses().iter().all(|&s| (s - 1.0 / k as f64).abs() < 1e-15);
            equal.then(|| rate * (1.0 - (k as f64).powf(-q)))
        }
        MeasureKind::CrumbleBinary { .. } => None,
    }
}

/// `(Φ(q) / (Γ(1-θ) q^θ ℓ(q)), Φ'(q) / (θ Γ(1-θ) q^{θ-1} ℓ(q)))` for a crumbling measure.
pub fn phi_asymptotic_ratios(measure: &DislocationMeasure, q: f64) -> fragstorm_core::Result<Option<(f64, f64)>> {
    let MeasureKind::CrumbleBinary { theta, ell } = measure.kind() else {
        return Ok(None);
    };
    let lead = fragstorm_core::math::gamma(1.0 - theta) * ell.value(q);
    Ok(Some((
        measure.laplace_exponent(q)? / (lead * q.powf(*theta)),
        measure.laplace_exponent_derivative(q)? / (theta * lead * q.powf(theta - 1.0)),
    )))
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Laplace exponent: default evaluation, direct quadrature of the defining integral, closed form.
pub(super) fn phi(cfg: &ExperimentConfig) -> Result<Outcome> {
    let qs = if cfg.grid.q.is_empty() { DEFAULT_Q.to_vec() } else { cfg.grid.q.clone() };
    let m = &cfg.measure;
    let mut table = ResultTable::new([
        "q",
        "phi",
        "phi_quadrature",
        "phi_closed",
        "rel_err",
        "dphi",
        "dphi_quadrature",
        "dphi_rel_err",
        "phias_ratio",
        "dphias_ratio",
    ]);
    let mut deviations = 0;
    for &q in &qs {
        if !(q >= 0.0) {
            return Err(ConfigError::field("grid.q", "must be nonnegative").into());
        }
        let p = m.laplace_exponent(q)?;
        let pq = m.laplace_exponent_quadrature(q)?;
        let d = m.laplace_exponent_derivative(q)?;
        let dq = m.laplace_exponent_derivative_quadrature(q)?;
        let closed = phi_closed(m, q);
        let err = match closed {
            Some(c) if c != 0.0 => rel(pq, c).max(rel(p, c)),
            Some(_) => pq.abs().max(p.abs()),
            None if p != 0.0 => rel(pq, p),
            None => pq.abs(),
        };
        if closed.is_some() && err > PHI_TOLERANCE {
            deviations += 1;
        }
        let (ra, rd) = phi_asymptotic_ratios(m, q)?.unwrap_or((f64::NAN, f64::NAN));
        table.push(vec![
            q,
            p,
            pq,
            closed.unwrap_or(f64::NAN),
            err,
            d,
            dq,
            if d != 0.0 { rel(dq, d) } else { dq.abs() },
            ra,
            rd,
        ]);
    }
    table.set_meta_real("tolerance", PHI_TOLERANCE);
    let mut out = Outcome::new(table);
    out.deviations = deviations;
    Ok(out)
}

/// `1 - s₁` of a sampled split.
fn shortfall(s: &Split<'_>) -> f64 {
    match s {
        Split::Binary(u) => *u,
        Split::Atom(p) => 1.0 - p.largest(),
    }
}

/// The tail `ν(1 - s₁ > δ)` and the sampler's conditional law against it.
pub(super) fn tails(cfg: &ExperimentConfig, pool: &Pool) -> Result<Outcome> {
    let ds = if cfg.grid.delta.is_empty() { DEFAULT_DELTA.to_vec() } else { cfg.grid.delta.clone() };
    let m = &cfg.measure;
    let a = cfg.jump_floor;
    if !m.is_finite() && a <= 0.0 {
        return Err(ConfigError::field("sim.jump_floor", "sampling an infinite measure needs a jump floor").into());
    }
    let norm = m.event_rate(a)?;
    let mut table = ResultTable::new([
        "delta",
        "tail",
        "expected_fraction",
        "empirical_fraction",
        "se",
        "overlap",
        "levy_tail",
    ]);
    let mut deviations = 0;
    for (i, &d) in ds.iter().enumerate() {
        let tail = m.tail(d)?;
        let expected = if d < a { 1.0 } else { tail / norm };
        let est = pool.estimate(stream(cfg.seed, i as u64), cfg.replicas, |rng| {
            Ok(flag(shortfall(&m.sample_split(a, rng)?) > d))
        })?;
        // A degenerate estimate has zero standard error; compare exactly then.
        let overlap = (est.mean - expected).abs() <= 3.0 * est.std_error.max(1e-12);
        if !overlap {
            deviations += 1;
        }
        table.push(vec![
            d,
            tail,
            expected,
            est.mean,
            est.std_error,
            flag(overlap),
            m.levy_tail(d)?,
        ]);
    }
    let mut out = Outcome::new(table);
    out.deviations = deviations;
    Ok(out)
}
