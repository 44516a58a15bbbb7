use rand_core::RngCore;

use super::engine::{simulate, SimulationSpec};
use crate::partitions::DislocationMeasure;
use crate::spine::lamperti_level;
use crate::stats::{Accumulator, Estimate};
use crate::{math, Error, Result};

/// Number of live fragments of size at least `e^{-h}` at time `t`, in one run.
///
/// Fragments smaller than `e^{-h}` never grow back, so the run prunes at `h`.
pub fn count_large<R: RngCore + ?Sized>(
    measure: &DislocationMeasure,
    alpha: f64,
    t: f64,
    h: f64,
    jump_floor: f64,
    rng: &mut R,
) -> Result<usize> {
    if !(h >= 0.0) {
        return Err(Error::invalid("h", "must be nonnegative"));
    }
    if t == 0.0 {
        return Ok(1);
    }
    let spec = SimulationSpec::new(alpha, t, h.max(f64::MIN_POSITIVE)).with_jump_floor(jump_floor);
    Ok(simulate(measure, &spec, rng)?.count_at_least(h))
}

/// Population-side Monte Carlo estimate of `E(t, h)` over `replicas` runs.
pub fn empirical_e<R: RngCore + ?Sized>(
    measure: &DislocationMeasure,
    alpha: f64,
    t: f64,
    h: f64,
    jump_floor: f64,
    replicas: u64,
    rng: &mut R,
) -> Result<Estimate> {
    let mut acc = Accumulator::new();
    for _ in 0..replicas {
        acc.push(count_large(measure, alpha, t, h, jump_floor, rng)? as f64);
    }
    Ok(acc.estimate())
}

/// One spine sample of `e^{ξ_{ρ(t)}} 1{ξ_{ρ(t)} ≤ h}`.
pub fn spine_weight<R: RngCore + ?Sized>(
    measure: &DislocationMeasure,
    alpha: f64,
    t: f64,
    h: f64,
    jump_floor: f64,
    rng: &mut R,
) -> Result<f64> {
    let x = lamperti_level(measure, jump_floor, alpha, t, h, rng)?;
    Ok(if x <= h { math::exp(x) } else { 0.0 })
}

/// Spine-side Monte Carlo estimate of `E(t, h)` via the many-to-one identity.
pub fn spine_e<R: RngCore + ?Sized>(
    measure: &DislocationMeasure,
    alpha: f64,
    t: f64,
    h: f64,
    jump_floor: f64,
    samples: u64,
    rng: &mut R,
) -> Result<Estimate> {
    let mut acc = Accumulator::new();
    for _ in 0..samples {
        acc.push(spine_weight(measure, alpha, t, h, jump_floor, rng)?);
    }
    Ok(acc.estimate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_rng;

    #[test]
    fn time_zero_counts_root() {
        let m = DislocationMeasure::uniform_binary(1.0).unwrap();
        let e = empirical_e(&m, 1.0, 0.0, 0.0, 0.0, 10, &mut replica_rng(1, 0)).unwrap();
        assert_eq!(e.mean, 1.0);
    }

    #[test]
    fn both_sides_agree() {
        let m = DislocationMeasure::uniform_binary(1.0).unwrap();
        let mut rng = replica_rng(2, 0);
        let pop = empirical_e(&m, 1.0, 1.0, 2.0, 0.0, 20_000, &mut rng).unwrap();
        let spine = spine_e(&m, 1.0, 1.0, 2.0, 0.0, 20_000, &mut rng).unwrap();
        assert!(pop.overlaps(&spine, 3.0), "{pop:?} {spine:?}");
    }
}
