use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Reverse;

use rand_core::RngCore;

use crate::partitions::DislocationMeasure;
use crate::rng::{child_id, exponential, SplitMix};
use crate::{math, Error, Result};

/// Default cap on processed dislocation events per run.
pub const DEFAULT_MAX_EVENTS: u64 = 100_000_000;

/// A fragment of size `e^{-log_size}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fragment {
    /// Genealogical id: a hash of the parent id and the child index.
    pub id: u64,
    pub parent: Option<u64>,
    pub log_size: f64,
    pub birth_time: f64,
    /// Spine clock `∫ e^{-α h_s} ds` accumulated along the ancestral line up to birth.
    pub internal_at_birth: f64,
}

/// What happens to fragments born beyond `floor_h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PruneMode {
    /// Drop them and add their mass to `pruned_mass`.
    #[default]
    Discard,
    /// Keep them in the population but never split them again.
    Freeze,
}

/// Parameters of one event-driven run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub alpha: f64,
    pub t_end: f64,
    pub floor_h: f64,
    /// Dislocations with `1 - s₁ < jump_floor` are ignored (infinite measures only).
    pub jump_floor: f64,
    pub max_events: u64,
    pub prune: PruneMode,
    pub record_births: bool,
}

impl SimulationSpec {
    pub fn new(alpha: f64, t_end: f64, floor_h: f64) -> Self {
        Self {
            alpha,
            t_end,
            floor_h,
            jump_floor: 0.0,
            max_events: DEFAULT_MAX_EVENTS,
            prune: PruneMode::Discard,
            record_births: false,
        }
    }

    pub fn with_jump_floor(mut self, jump_floor: f64) -> Self {
        self.jump_floor = jump_floor;
        self
    }

    fn validate(&self, measure: &DislocationMeasure) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha", "must be positive"));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::invalid("t_end", "must be positive and finite"));
        }
        if !(self.floor_h > 0.0) {
            return Err(Error::invalid("floor_h", "must be positive"));
        }
        if !measure.is_finite() && !(self.jump_floor > 0.0 && self.jump_floor <= 0.5) {
            return Err(Error::invalid("jump_floor", "an infinite measure needs a jump floor in (0, 1/2]"));
        }
        Ok(())
    }
}

/// Truncation metadata for runs against an infinite measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationBias {
    /// `∫ (1 - s₁) 1{1 - s₁ < a} ν(ds)`: drift removed per unit of internal time.
    pub per_unit_time: f64,
    /// `per_unit_time · t_end`, the loss for a lineage whose rate never drops below 1.
    pub bound: f64,
    /// `per_unit_time` times the internal clock of the final largest fragment.
    pub lineage: f64,
}

/// State of the fragmentation at `t_end`, plus the record of `m_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentPopulation {
    pub live: Vec<Fragment>,
    pub clock: f64,
    record: Vec<(f64, f64)>,
    pub pruned_mass: f64,
    pub event_count: u64,
    /// `m_t` equals the unpruned value as long as it stays at or below this.
    pub valid_until: f64,
    pub truncation: Option<TruncationBias>,
    pub births: Option<Vec<Fragment>>,
    /// Internal spine clock of the largest fragment at `t_end`.
    pub largest_internal_clock: f64,
}

impl FragmentPopulation {
    /// Breakpoints `(t, m_t)` of the nondecreasing record, starting at `(0, 0)`.
    pub fn record(&self) -> &[(f64, f64)] {
        &self.record
    }

    /// `m_t` for `0 ≤ t ≤ clock`.
    pub fn m_at(&self, t: f64) -> f64 {
        let k = self.record.partition_point(|&(s, _)| s <= t);
        self.record[k.max(1) - 1].1
    }

    /// Whether `m_t` at `t` lies in the window where pruning cannot affect it.
    pub fn is_valid_at(&self, t: f64) -> bool {
        self.m_at(t) <= self.valid_until
    }

    /// `Σ live sizes + pruned_mass`.
    pub fn total_mass(&self) -> f64 {
        self.live.iter().map(|f| math::exp(-f.log_size)).sum::<f64>() + self.pruned_mass
    }

    /// Number of live fragments of size at least `e^{-h}`.
    pub fn count_at_least(&self, h: f64) -> usize {
        self.live.iter().filter(|f| f.log_size <= h).count()
    }
}

/// `record_m` as a free function.
pub fn record_m(population: &FragmentPopulation) -> Vec<(f64, f64)> {
    population.record.clone()
}

#[derive(Clone, Copy)]
struct Slot {
    frag: Fragment,
    alive: bool,
}

/// Event-driven simulation against any measure; the seed is drawn from `rng`.
pub fn simulate<R: RngCore + ?Sized>(
    measure: &DislocationMeasure,
    spec: &SimulationSpec,
    rng: &mut R,
) -> Result<FragmentPopulation> {
    spec.validate(measure)?;
    let rate_total = measure.event_rate(spec.jump_floor)?;
    let alpha = spec.alpha;
    let t_end = spec.t_end;

    let mut slots: Vec<Slot> = Vec::new();
    let mut free: Vec<usize> = Vec::new();
    // (time bits, id, slot); nonnegative floats order like their bit patterns.
    let mut events: BinaryHeap<Reverse<(u64, u64, usize)>> = BinaryHeap::new();
    // (log-size bits, id, slot) for the lazily maintained largest fragment.
    let mut largest: BinaryHeap<Reverse<(u64, u64, usize)>> = BinaryHeap::new();
    let mut births = spec.record_births.then(Vec::new);

    let mut pruned_mass = 0.0;
    let mut event_count = 0u64;

    let schedule = |frag: &Fragment, slot: usize, events: &mut BinaryHeap<Reverse<(u64, u64, usize)>>| {
        let mut frng = SplitMix::new(frag.id);
        let wait = exponential(&mut frng, rate_total * math::exp(-alpha * frag.log_size));
        let t = frag.birth_time + wait;
        if t <= t_end {
            events.push(Reverse((t.to_bits(), frag.id, slot)));
        }
    };

    let root = Fragment {
        id: rng.next_u64(),
        parent: None,
        log_size: 0.0,
        birth_time: 0.0,
        internal_at_birth: 0.0,
    };
    slots.push(Slot { frag: root, alive: true });
    largest.push(Reverse((0f64.to_bits(), root.id, 0)));
    schedule(&root, 0, &mut events);
    if let Some(b) = births.as_mut() {
        b.push(root);
    }

    let mut record = alloc::vec![(0.0, 0.0)];
    let mut m = 0.0;

    while let Some(Reverse((tbits, id, slot))) = events.pop() {
        let t = f64::from_bits(tbits);
        event_count += 1;
        if event_count > spec.max_events {
            return Err(Error::ExplosionGuard {
                what: "events",
                limit: spec.max_events,
            });
        }
        let parent = slots[slot].frag;
        debug_assert_eq!(parent.id, id);
        slots[slot].alive = false;
        free.push(slot);

        let mut frng = SplitMix::new(parent.id);
        // The first draw of this stream was the waiting time.
        let _ = frng.next_u64();
        let split = measure.sample_split(spec.jump_floor, &mut frng)?;
        let internal = parent.internal_at_birth + (t - parent.birth_time) * math::exp(-alpha * parent.log_size);
        for i in 0..split.len() {
            let child = Fragment {
                id: child_id(parent.id, i as u64),
                parent: Some(parent.id),
                log_size: parent.log_size + split.neg_log_mass(i),
                birth_time: t,
                internal_at_birth: internal,
            };
            if let Some(b) = births.as_mut() {
                b.push(child);
            }
            let beyond = child.log_size > spec.floor_h;
            if beyond && spec.prune == PruneMode::Discard {
                pruned_mass += split.mass(i) * math::exp(-parent.log_size);
                continue;
            }
            let s = match free.pop() {
                Some(s) => {
                    slots[s] = Slot { frag: child, alive: true };
                    s
                }
                None => {
                    slots.push(Slot { frag: child, alive: true });
                    slots.len() - 1
                }
            };
            largest.push(Reverse((child.log_size.to_bits(), child.id, s)));
            if !beyond {
                schedule(&child, s, &mut events);
            }
        }

        // Drop stale entries; a reused slot is recognised by its id.
        while let Some(&Reverse((_, lid, ls))) = largest.peek() {
            if slots[ls].alive && slots[ls].frag.id == lid {
                break;
            }
            largest.pop();
        }
        let new_m = largest
            .peek()
            .map(|&Reverse((bits, _, _))| f64::from_bits(bits))
            .unwrap_or(f64::INFINITY);
        if new_m > m {
            m = new_m;
            record.push((t, m));
        }
    }

    let live: Vec<Fragment> = slots.iter().filter(|s| s.alive).map(|s| s.frag).collect();
    let largest_internal_clock = live
        .iter()
        .min_by(|a, b| a.log_size.total_cmp(&b.log_size).then(a.id.cmp(&b.id)))
        .map(|f| f.internal_at_birth + (t_end - f.birth_time) * math::exp(-alpha * f.log_size))
        .unwrap_or(0.0);
    let truncation = if measure.is_finite() {
        None
    } else {
        let per = measure.truncation_bias(spec.jump_floor)?;
        Some(TruncationBias {
            per_unit_time: per,
            bound: per * t_end,
            lineage: per * largest_internal_clock,
        })
    };
    Ok(FragmentPopulation {
        live,
        clock: t_end,
        record,
        pruned_mass,
        event_count,
        valid_until: spec.floor_h - core::f64::consts::LN_2,
        truncation,
        births,
        largest_internal_clock,
    })
}

/// Exact simulation of a finite-activity fragmentation up to `t_end`.
pub fn run_finite_activity<R: RngCore + ?Sized>(
    measure: &DislocationMeasure,
    alpha: f64,
    t_end: f64,
    floor_h: f64,
    rng: &mut R,
) -> Result<FragmentPopulation> {
    if !measure.is_finite() {
        return Err(Error::invalid("measure", "needs a finite dislocation measure"));
    }
    simulate(measure, &SimulationSpec::new(alpha, t_end, floor_h), rng)
}

/// Simulation of an infinite-activity fragmentation with dislocations `1 - s₁ < jump_floor` removed.
pub fn run_infinite_activity<R: RngCore + ?Sized>(
    measure: &DislocationMeasure,
    alpha: f64,
    t_end: f64,
    floor_h: f64,
    jump_floor: f64,
    rng: &mut R,
) -> Result<FragmentPopulation> {
    if measure.is_finite() {
        return Err(Error::invalid("measure", "needs an infinite dislocation measure"));
    }
    if !(jump_floor > 0.0) {
        return Err(Error::invalid("jump_floor", "must be positive"));
    }
    simulate(
        measure,
        &SimulationSpec::new(alpha, t_end, floor_h).with_jump_floor(jump_floor),
        rng,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partitions::SlowlyVaryingHandle;
    use crate::rng::replica_rng;

    #[test]
    fn frozen_before_first_event() {
        let m = DislocationMeasure::k_split(2, 1.0).unwrap();
        let pop = run_finite_activity(&m, 1.0, 1e-9, 10.0, &mut replica_rng(5, 0)).unwrap();
        assert_eq!(pop.live.len(), 1);
        assert_eq!(pop.record(), &[(0.0, 0.0)]);
        assert_eq!(pop.m_at(1e-9), 0.0);
    }

    #[test]
    fn dyadic_structure() {
        let m = DislocationMeasure::k_split(2, 1.0).unwrap();
        let mut spec = SimulationSpec::new(1.0, 50.0, 8.0 * core::f64::consts::LN_2 + 0.1);
        spec.record_births = true;
        let pop = simulate(&m, &spec, &mut replica_rng(6, 0)).unwrap();
        let ln2 = core::f64::consts::LN_2;
        for f in &pop.live {
            let n = f.log_size / ln2;
            assert!((n - math::round(n)).abs() < 1e-9);
        }
        for &(_, v) in pop.record() {
            let n = v / ln2;
            assert!((n - math::round(n)).abs() < 1e-9);
        }
        let births = pop.births.as_ref().unwrap();
        for n in 0..=4u32 {
            let c = births
                .iter()
                .filter(|f| (f.log_size - n as f64 * ln2).abs() < 1e-9)
                .count();
            assert_eq!(c, 1 << n, "level {n}");
        }
    }

    #[test]
    fn conservation_after_many_events() {
        let m = DislocationMeasure::uniform_binary(1.0).unwrap();
        let pop = run_finite_activity(&m, 1.0, 2e4, 9.0, &mut replica_rng(7, 0)).unwrap();
        assert!(pop.event_count > 10_000);
        assert!((pop.total_mass() - 1.0).abs() < 1e-9);
        assert!(pop.record().windows(2).all(|w| w[0].1 <= w[1].1 && w[0].0 <= w[1].0));
    }

    #[test]
    fn pruning_does_not_change_the_record() {
        let m = DislocationMeasure::uniform_binary(1.0).unwrap();
        let hstar = 6.0;
        let a = run_finite_activity(&m, 1.0, 3e3, hstar, &mut replica_rng(8, 0)).unwrap();
        let b = run_finite_activity(&m, 1.0, 3e3, hstar + 2.0, &mut replica_rng(8, 0)).unwrap();
        let cut = |p: &FragmentPopulation| -> Vec<(f64, f64)> {
            p.record().iter().copied().filter(|&(_, v)| v <= hstar - 2.0).collect()
        };
        assert_eq!(cut(&a), cut(&b));
        assert!(cut(&a).len() > 3);
    }

    #[test]
    fn infinite_activity_metadata() {
        let m = DislocationMeasure::crumble_binary(0.5, SlowlyVaryingHandle::Constant(1.0)).unwrap();
        let pop = run_infinite_activity(&m, 1.0, 50.0, 6.0, 0.01, &mut replica_rng(9, 0)).unwrap();
        let tb = pop.truncation.unwrap();
        assert!((tb.per_unit_time - 0.1).abs() < 1e-12);
        assert!(tb.lineage <= tb.bound);
        assert!((pop.total_mass() - 1.0).abs() < 1e-9);
        assert!(run_infinite_activity(&m, 1.0, 50.0, 6.0, 0.0, &mut replica_rng(9, 0)).is_err());
        let u = DislocationMeasure::uniform_binary(1.0).unwrap();
        assert!(run_infinite_activity(&u, 1.0, 1.0, 6.0, 0.1, &mut replica_rng(9, 0)).is_err());
        assert!(run_finite_activity(&m, 1.0, 1.0, 6.0, &mut replica_rng(9, 0)).is_err());
    }

    #[test]
    fn freeze_keeps_mass_in_population() {
        let m = DislocationMeasure::uniform_binary(1.0).unwrap();
        let mut spec = SimulationSpec::new(1.0, 30.0, 3.0);
        spec.prune = PruneMode::Freeze;
        let pop = simulate(&m, &spec, &mut replica_rng(10, 0)).unwrap();
        assert_eq!(pop.pruned_mass, 0.0);
        let s: f64 = pop.live.iter().map(|f| math::exp(-f.log_size)).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}
