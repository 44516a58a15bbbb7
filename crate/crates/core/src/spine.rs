//! The tagged-fragment subordinator `ξ`, its Lamperti clock, and the
//! large-deviation estimates for `P(ξ_t ≤ w)`.
//!
//! A dislocation with pieces `s` moves the tagged point into piece `i`
//! with probability `sᵢ`, so `ξ` jumps at the dislocation rate by `-log sᵢ`.
//! Infinite measures are simulated with dislocations `1 - s₁ < a` removed;
//! the resulting process is itself a compound Poisson subordinator with
//! Laplace exponent [`DislocationMeasure::truncated_laplace_exponent`].

use alloc::vec::Vec;

use rand_core::RngCore;

use crate::asymptotics::{levy_l, LConvention};
use crate::partitions::{DislocationMeasure, Split};
use crate::rng::{exponential, uniform_open};
use crate::stats::Estimate;
use crate::{math, Error, Result, SlowlyVaryingHandle};

/// A piecewise-constant, nondecreasing, right-continuous path of `ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubordinatorPath {
    jump_times: Vec<f64>,
    jump_sizes: Vec<f64>,
    start_level: f64,
    horizon: f64,
}

impl SubordinatorPath {
    pub fn new(start_level: f64, horizon: f64, jump_times: Vec<f64>, jump_sizes: Vec<f64>) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid("horizon", "must be positive and finite"));
        }
        if jump_times.len() != jump_sizes.len() {
            return Err(Error::invalid("jump_sizes", "one size per jump time"));
        }
        if jump_times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("jump_times", "must be strictly increasing"));
        }
        if jump_times.first().is_some_and(|&t| t < 0.0) || jump_times.last().is_some_and(|&t| t > horizon) {
            return Err(Error::invalid("jump_times", "must lie in [0, horizon]"));
        }
        if jump_sizes.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("jump_sizes", "must be positive and finite"));
        }
        Ok(Self {
            jump_times,
            jump_sizes,
            start_level,
            horizon,
        })
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn jump_sizes(&self) -> &[f64] {
        &self.jump_sizes
    }

    pub fn start_level(&self) -> f64 {
        self.start_level
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `ξ_t` (right-continuous).
    pub fn value_at(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&s| s <= t);
        self.start_level + self.jump_sizes[..k].iter().sum::<f64>()
    }

    pub fn final_level(&self) -> f64 {
        self.start_level + self.jump_sizes.iter().sum::<f64>()
    }

    /// `(time, level)` after each jump, preceded by `(0, start_level)`.
    pub fn breakpoints(&self) -> Vec<(f64, f64)> {
        let mut level = self.start_level;
        let mut out = Vec::with_capacity(self.jump_times.len() + 1);
        out.push((0.0, level));
        for (&t, &s) in self.jump_times.iter().zip(&self.jump_sizes) {
            level += s;
            out.push((t, level));
        }
        out
    }

    /// Constant pieces `(start, end, level)` covering `[0, horizon]`.
    fn segments(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let n = self.jump_times.len();
        let mut level = self.start_level;
        let mut start = 0.0;
        (0..=n).map(move |k| {
            let end = if k < n { self.jump_times[k] } else { self.horizon };
            let seg = (start, end, level);
            if k < n {
                level += self.jump_sizes[k];
                start = end;
            }
            seg
        })
    }

    /// `∫₀^s e^{α ξ_r} dr` for `s ≤ horizon`.
    pub fn clock_integral(&self, s: f64, alpha: f64) -> f64 {
        let mut acc = 0.0;
        for (a, b, level) in self.segments() {
            if a >= s {
                break;
            }
            acc += (b.min(s) - a) * math::exp(alpha * level);
        }
        acc
    }

    /// Lamperti time change: the `ρ` with `∫₀^ρ e^{αξ_s} ds = t`.
    pub fn time_change(&self, t: f64, alpha: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::invalid("t", "must be nonnegative"));
        }
        if !(alpha > 0.0) {
            return Err(Error::invalid("alpha", "must be positive"));
        }
        let mut acc = 0.0;
        for (a, b, level) in self.segments() {
            let speed = math::exp(alpha * level);
            let piece = (b - a) * speed;
            if acc + piece >= t {
                return Ok(a + (t - acc) / speed);
            }
            acc += piece;
        }
        Err(Error::OutOfHorizon {
            requested: t,
            accumulated: acc,
        })
    }

    /// Size `e^{-ξ_{ρ(t)}}` of the tagged fragment at process time `t`.
    pub fn tagged_fragment_size(&self, t: f64, alpha: f64) -> Result<f64> {
        let rho = self.time_change(t, alpha)?;
        Ok(math::exp(-self.value_at(rho)))
    }

    /// First time `ξ` reaches `level`, if it does so within the horizon.
    pub fn hitting_time(&self, level: f64) -> Result<Option<f64>> {
        if !(level > self.start_level) {
            return Err(Error::invalid("level", "must exceed the start level"));
        }
        let mut x = self.start_level;
        for (&t, &s) in self.jump_times.iter().zip(&self.jump_sizes) {
            x += s;
            if x >= level {
                return Ok(Some(t));
            }
        }
        Ok(None)
    }
}

/// Rate of jumps of the (possibly truncated) spine.
fn spine_rate(measure: &DislocationMeasure, jump_floor: f64) -> Result<f64> {
    if !measure.is_finite() && !(jump_floor > 0.0) {
        return Err(Error::invalid(
            "jump_floor",
            "an infinite measure needs a positive jump floor",
        ));
    }
    measure.event_rate(jump_floor)
}

/// Size-biased pick of the piece that carries the tagged point.
#[inline]
fn tagged_jump<R: RngCore + ?Sized>(split: &Split<'_>, rng: &mut R) -> f64 {
    let n = split.len();
    let mut v = uniform_open(rng);
    for i in 0..n - 1 {
        let m = split.mass(i);
        if v < m {
            return split.neg_log_mass(i);
        }
        v -= m;
    }
    split.neg_log_mass(n - 1)
}

/// Compound Poisson path of the spine on `[0, horizon]`.
pub fn simulate_path<R: RngCore + ?Sized>(
    measure: &DislocationMeasure,
    jump_floor: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<SubordinatorPath> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid("horizon", "must be positive and finite"));
    }
    let rate = spine_rate(measure, jump_floor)?;
    let mut times = Vec::new();
    let mut sizes = Vec::new();
    let mut t = exponential(rng, rate);
    while t <= horizon {
        let split = measure.sample_split(jump_floor, rng)?;
        times.push(t);
        sizes.push(tagged_jump(&split, rng));
        t += exponential(rng, rate);
    }
    SubordinatorPath::new(0.0, horizon, times, sizes)
}

/// `ξ_t`, simulated without storing the path; stops early once `ξ > stop_above`.
pub fn level_at<R: RngCore + ?Sized>(
    measure: &DislocationMeasure,
    jump_floor: f64,
    t: f64,
    stop_above: f64,
    rng: &mut R,
) -> Result<f64> {
    let rate = spine_rate(measure, jump_floor)?;
    let mut x = 0.0;
    let mut s = exponential(rng, rate);
    while s <= t && x <= stop_above {
        let split = measure.sample_split(jump_floor, rng)?;
        x += tagged_jump(&split, rng);
        s += exponential(rng, rate);
    }
    Ok(x)
}

/// `ξ_{ρ(t)}` under the Lamperti clock with index `alpha`; stops early once it exceeds `stop_above`.
pub fn lamperti_level<R: RngCore + ?Sized>(
    measure: &DislocationMeasure,
    jump_floor: f64,
    alpha: f64,
    t: f64,
    stop_above: f64,
    rng: &mut R,
) -> Result<f64> {
    let rate = spine_rate(measure, jump_floor)?;
    let mut x = 0.0;
    let mut clock = 0.0;
    loop {
        // Internal waiting time, converted to process time at the current level.
        clock += exponential(rng, rate) * math::exp(alpha * x);
        if clock > t || x > stop_above {
            return Ok(x);
        }
        let split = measure.sample_split(jump_floor, rng)?;
        x += tagged_jump(&split, rng);
    }
}

/// Plain Monte Carlo estimate of `P(ξ_t ≤ w)` over `n` paths.
pub fn tail_probability_mc<R: RngCore + ?Sized>(
    measure: &DislocationMeasure,
    t: f64,
    w: f64,
    n: u64,
    jump_floor: f64,
    rng: &mut R,
) -> Result<Estimate> {
    if !(t > 0.0 && w > 0.0) {
        return Err(Error::invalid("t", "t and w must be positive"));
    }
    let mut hits = 0;
    for _ in 0..n {
        if level_at(measure, jump_floor, t, w, rng)? <= w {
            hits += 1;
        }
    }
    Ok(Estimate::from_bernoulli(hits, n))
}

/// Exponentially tilted estimate of `P(ξ_t ≤ w)` for deep lower deviations.
///
/// Paths are drawn under the Esscher measure with parameter `q`, where a
/// dislocation is kept with probability `Σ sᵢ^{q+1}` and the tagged piece is
/// chosen proportionally to `sᵢ^{q+1}`; each path is weighted by
/// `e^{q ξ_t - t Φ_a(q)}`. The estimator is unbiased for any `q ≥ 0` and has
/// bounded relative error near `q = q_{w/t}`.
pub fn tail_probability_tilted<R: RngCore + ?Sized>(
    measure: &DislocationMeasure,
    t: f64,
    w: f64,
    q: f64,
    n: u64,
    jump_floor: f64,
    rng: &mut R,
) -> Result<Estimate> {
    if !(t > 0.0 && w > 0.0) {
        return Err(Error::invalid("t", "t and w must be positive"));
    }
    let rate = spine_rate(measure, jump_floor)?;
    let phi = exponent(measure, jump_floor, q)?;
    let mut acc = crate::stats::Accumulator::new();
    let mut pieces = Vec::new();
    for _ in 0..n {
        let mut x = 0.0;
        let mut s = exponential(rng, rate);
        while s <= t && x <= w {
            let split = measure.sample_split(jump_floor, rng)?;
            pieces.clear();
            pieces.extend((0..split.len()).map(|i| math::powf(split.mass(i), q + 1.0)));
            let keep: f64 = pieces.iter().sum();
            let mut v = uniform_open(rng);
            if v < keep {
                let mut i = 0;
                while i + 1 < pieces.len() && v >= pieces[i] {
                    v -= pieces[i];
                    i += 1;
                }
                x += split.neg_log_mass(i);
            }
            s += exponential(rng, rate);
        }
        let y = if x <= w { math::exp(q * x - t * phi) } else { 0.0 };
        acc.push(y);
    }
    Ok(acc.estimate())
}

fn exponent(measure: &DislocationMeasure, jump_floor: f64, q: f64) -> Result<f64> {
    if measure.is_finite() {
        measure.laplace_exponent(q)
    } else {
        measure.truncated_laplace_exponent(q, jump_floor)
    }
}

fn exponent_derivative(measure: &DislocationMeasure, jump_floor: f64, q: f64) -> Result<f64> {
    if measure.is_finite() {
        measure.laplace_exponent_derivative(q)
    } else {
        measure.truncated_laplace_exponent_derivative(q, jump_floor)
    }
}

/// A point `(x, q_x, R(q_x))` of the lower-deviation rate function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFunctionPoint {
    pub x: f64,
    pub q_x: f64,
    /// `Φ(q_x) - q_x Φ'(q_x)`
    pub rate: f64,
}

const ROOT_TOL: f64 = 1e-10;

/// Solves `Φ'(q_x) = x` for `0 < x < E[ξ₁]`.
pub fn solve_qx(measure: &DislocationMeasure, x: f64) -> Result<RateFunctionPoint> {
    solve_qx_with(measure, x, None)
}

/// As [`solve_qx`] for the spine with dislocations `1 - s₁ < jump_floor` removed.
pub fn solve_qx_truncated(measure: &DislocationMeasure, x: f64, jump_floor: f64) -> Result<RateFunctionPoint> {
    solve_qx_with(measure, x, Some(jump_floor))
}

fn solve_qx_with(measure: &DislocationMeasure, x: f64, floor: Option<f64>) -> Result<RateFunctionPoint> {
    let (phi, dphi): (&dyn Fn(f64) -> Result<f64>, &dyn Fn(f64) -> Result<f64>) = match floor {
        Some(a) if !measure.is_finite() => (
            &move |q| measure.truncated_laplace_exponent(q, a),
            &move |q| measure.truncated_laplace_exponent_derivative(q, a),
        ),
        _ => (
            &|q| measure.laplace_exponent(q),
            &|q| measure.laplace_exponent_derivative(q),
        ),
    };
    let mean = dphi(0.0)?;
    if !(x > 0.0 && x < mean) {
        return Err(Error::invalid("x", alloc::format!("must lie in (0, {mean})")));
    }
    let mut lo = 1e-8;
    if dphi(lo)? <= x {
        lo = 0.0;
    }
    let mut hi = 1.0;
    while dphi(hi)? > x {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::NumericFailure {
                context: "bracketing q_x",
                residual: dphi(hi)? - x,
            });
        }
    }
    let mut q = 0.5 * (lo + hi);
    for _ in 0..200 {
        q = 0.5 * (lo + hi);
        let d = dphi(q)? - x;
        if d.abs() <= ROOT_TOL * x.max(1e-300).min(1.0) || hi - lo <= 1e-15 * hi {
            break;
        }
        if d > 0.0 {
            lo = q;
        } else {
            hi = q;
        }
    }
    let rate = (phi(q)? - q * dphi(q)?).max(0.0);
    Ok(RateFunctionPoint { x, q_x: q, rate })
}

/// Jain–Pruitt bounds `(lower, upper)` on `P(ξ_t ≤ w)`.
///
/// `upper = e^{-tR}` is the Chernoff bound; the lower bound carries the
/// unspecified constant `c` as `e^{-tR - c (tR)^{1/3}}`.
pub fn jp_bounds(measure: &DislocationMeasure, t: f64, w: f64, c: f64) -> Result<(f64, f64)> {
    jp_from_point(solve_qx(measure, checked_slope(t, w)?)?, t, c)
}

/// [`jp_bounds`] for the truncated spine that the simulator actually runs.
pub fn jp_bounds_truncated(
    measure: &DislocationMeasure,
    t: f64,
    w: f64,
    c: f64,
    jump_floor: f64,
) -> Result<(f64, f64)> {
    jp_from_point(solve_qx_truncated(measure, checked_slope(t, w)?, jump_floor)?, t, c)
}

fn checked_slope(t: f64, w: f64) -> Result<f64> {
    if !(t > 0.0 && w > 0.0) {
        return Err(Error::invalid("t", "t and w must be positive"));
    }
    Ok(w / t)
}

fn jp_from_point(p: RateFunctionPoint, t: f64, c: f64) -> Result<(f64, f64)> {
    if !(c >= 0.0) {
        return Err(Error::invalid("c", "must be nonnegative"));
    }
    let tr = t * p.rate;
    Ok((math::exp(-tr - c * math::cbrt(tr)), math::exp(-tr)))
}

/// `F(w, t) = L(t/w) t^{1/(1-θ)} w^{-θ/(1-θ)}`, the leading order of `-log P(ξ_t ≤ w)`.
pub fn theorem_f(theta: f64, ell: &SlowlyVaryingHandle, w: f64, t: f64) -> Result<f64> {
    if !(w > 0.0 && t > 0.0) {
        return Err(Error::invalid("t", "t and w must be positive"));
    }
    let l = levy_l(theta, ell, t / w, LConvention::Direct)?;
    let e = 1.0 / (1.0 - theta);
    Ok(l * math::powf(t, e) * math::powf(w, -theta * e))
}

/// Uses the rate of the truncated spine (`Φ_a`) and its tilt, exposed for callers
/// that pick their own tilt parameter.
pub fn truncated_exponent(measure: &DislocationMeasure, jump_floor: f64, q: f64) -> Result<(f64, f64)> {
    Ok((exponent(measure, jump_floor, q)?, exponent_derivative(measure, jump_floor, q)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_rng;
    use alloc::vec;

    fn one_jump() -> SubordinatorPath {
        SubordinatorPath::new(0.0, 10.0, vec![1.0], vec![core::f64::consts::LN_2]).unwrap()
    }

    #[test]
    fn time_change_examples() {
        let flat = SubordinatorPath::new(0.0, 5.0, vec![], vec![]).unwrap();
        assert_eq!(flat.time_change(3.0, 1.0).unwrap(), 3.0);
        assert_eq!(flat.tagged_fragment_size(4.0, 1.0).unwrap(), 1.0);
        let p = one_jump();
        assert!((p.time_change(3.0, 1.0).unwrap() - 2.0).abs() < 1e-14);
        assert!((p.tagged_fragment_size(3.0, 1.0).unwrap() - 0.5).abs() < 1e-14);
        assert_eq!(p.tagged_fragment_size(0.0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn time_change_out_of_horizon() {
        let p = one_jump();
        match p.time_change(100.0, 1.0) {
            Err(Error::OutOfHorizon { accumulated, .. }) => assert!((accumulated - 19.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hitting_time_examples() {
        let p = SubordinatorPath::new(0.0, 5.0, vec![3.0], vec![2.0]).unwrap();
        assert_eq!(p.hitting_time(1.0).unwrap(), Some(3.0));
        assert_eq!(p.hitting_time(2.5).unwrap(), None);
        assert!(p.hitting_time(0.0).is_err());
    }

    #[test]
    fn rejects_bad_paths() {
        assert!(SubordinatorPath::new(0.0, 1.0, vec![0.5, 0.5], vec![1.0, 1.0]).is_err());
        assert!(SubordinatorPath::new(0.0, 1.0, vec![2.0], vec![1.0]).is_err());
        assert!(SubordinatorPath::new(0.0, 0.0, vec![], vec![]).is_err());
    }

    #[test]
    fn infinite_measure_needs_floor() {
        let m = DislocationMeasure::crumble_binary(0.5, SlowlyVaryingHandle::Constant(1.0)).unwrap();
        let mut rng = replica_rng(0, 0);
        assert!(simulate_path(&m, 0.0, 1.0, &mut rng).is_err());
        assert!(simulate_path(&m, 0.01, 1.0, &mut rng).is_ok());
    }

    #[test]
    fn solve_qx_examples() {
        let u = DislocationMeasure::uniform_binary(1.0).unwrap();
        let p = solve_qx(&u, 0.125).unwrap();
        assert!((p.q_x - 2.0).abs() < 1e-8 && (p.rate - 0.25).abs() < 1e-9);
        let k = DislocationMeasure::k_split(2, 1.0).unwrap();
        let p = solve_qx(&k, core::f64::consts::LN_2 / 2.0).unwrap();
        assert!((p.q_x - 1.0).abs() < 1e-8);
        assert!((p.rate - (1.0 - 0.5 * (1.0 + core::f64::consts::LN_2))).abs() < 1e-9);
        assert!(solve_qx(&u, 0.5).is_err());
        assert!(solve_qx(&u, 0.0).is_err());
    }

    #[test]
    fn jp_examples() {
        let u = DislocationMeasure::uniform_binary(1.0).unwrap();
        let (lo, hi) = jp_bounds(&u, 8.0, 1.0, 1.0).unwrap();
        assert!((hi - math::exp(-2.0)).abs() < 1e-9);
        assert!(lo <= hi);
    }

    #[test]
    fn theorem_f_examples() {
        let one = SlowlyVaryingHandle::Constant(1.0);
        assert!((theorem_f(0.5, &one, 1.0, 2.0).unwrap() - core::f64::consts::PI).abs() < 1e-12);
        let a = theorem_f(0.5, &one, 0.7, 1.9).unwrap();
        let b = theorem_f(0.5, &one, 2.1, 5.7).unwrap();
        assert!((b - 3.0 * a).abs() < 1e-12 * b);
        assert!(theorem_f(1.0, &one, 1.0, 1.0).is_err());
    }

    #[test]
    fn tilted_estimator_agrees_with_plain_mc() {
        let u = DislocationMeasure::uniform_binary(1.0).unwrap();
        let mut rng = replica_rng(3, 0);
        let plain = tail_probability_mc(&u, 4.0, 1.0, 40_000, 0.0, &mut rng).unwrap();
        let q = solve_qx(&u, 0.25).unwrap().q_x;
        let tilted = tail_probability_tilted(&u, 4.0, 1.0, q, 40_000, 0.0, &mut rng).unwrap();
        assert!(plain.overlaps(&tilted, 3.0), "{plain:?} {tilted:?}");
    }
}
