//! The constrained minimisation problems behind the upper bounds, and the
//! geometric staircase behind the lower bounds.
//!
//! All optimisations here are separable: with a multiplier `μ` on the
//! single linear constraint, each coordinate minimises on its own, and `μ`
//! is found by bisection until the constraint is active.

use alloc::vec::Vec;

use rand_core::RngCore;

use crate::asymptotics::AsymptoticProfile;
use crate::numeric;
use crate::partitions::SlowlyVarying;
use crate::rng::exponential;
use crate::{math, Error, Result};

/// Largest crumbling index accepted; `1/(1-θ)` overflows quickly beyond it.
pub const THETA_MAX: f64 = 0.95;

/// Relative objective mass allowed in the dropped coordinates.
pub const TAIL_TOLERANCE: f64 = 1e-8;

/// Coordinates below this have underflowed and are left out of KKT residuals.
const REPRESENTABLE: f64 = 1e-200;

fn check(theta: f64, alpha: f64, epsilon: f64) -> Result<()> {
    if !(theta > 0.0 && theta <= THETA_MAX) {
        return Err(Error::invalid("theta", "must lie in (0, 0.95]"));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid("alpha", "must be positive"));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid("epsilon", "must be positive"));
    }
    Ok(())
}

/// `C(θ, α, ε) = ((1 - e^{-αε/θ}) / ε)^{θ/(1-θ)}`.
#[allow(non_snake_case)]
pub fn C_closed(theta: f64, alpha: f64, epsilon: f64) -> Result<f64> {
    check(theta, alpha, epsilon)?;
    let z0 = -math::exp_m1(-alpha * epsilon / theta) / epsilon;
    Ok(math::powf(z0, theta / (1.0 - theta)))
}

/// The closed-form minimiser `zᵢ = ((1 - e^{-αε/θ})/ε) e^{-αiε(1/θ-1)}`.
pub fn c_minimizer(theta: f64, alpha: f64, epsilon: f64, i: usize) -> Result<f64> {
    check(theta, alpha, epsilon)?;
    let z0 = -math::exp_m1(-alpha * epsilon / theta) / epsilon;
    Ok(z0 * math::exp(-alpha * i as f64 * epsilon * (1.0 / theta - 1.0)))
}

/// A numerically solved separable problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub value: f64,
    pub minimizer: Vec<f64>,
    pub multiplier: f64,
    /// `|constraint - target| / target`
    pub constraint_residual: f64,
    /// Largest relative violation of per-coordinate stationarity.
    pub stationarity_residual: f64,
}

/// Minimises `ε Σ zᵢ^{1/(1-θ)}` subject to `ε Σ zᵢ e^{-αiε} ≥ 1` over `n_trunc` coordinates.
#[allow(non_snake_case)]
pub fn solve_C_numeric(theta: f64, alpha: f64, epsilon: f64, n_trunc: usize) -> Result<Optimum> {
    check(theta, alpha, epsilon)?;
    if n_trunc < 50 {
        return Err(Error::invalid("n_trunc", "need at least 50 coordinates"));
    }
    // Objective terms decay like e^{-αεi/θ}.
    let tail = math::exp(-alpha * epsilon * n_trunc as f64 / theta);
    if tail > TAIL_TOLERANCE {
        return Err(Error::TruncationWarning { tail });
    }
    let p = 1.0 / (1.0 - theta);
    let weights: Vec<f64> = (0..n_trunc).map(|i| math::exp(-alpha * epsilon * i as f64)).collect();
    let z_of = |mu: f64, w: f64| math::powf(mu * (1.0 - theta) * w, (1.0 - theta) / theta);
    let constraint = |mu: f64| epsilon * weights.iter().map(|&w| z_of(mu, w) * w).sum::<f64>();
    let log_mu = bracket_and_bisect(|lm| constraint(math::exp(lm)) - 1.0)?;
    let mu = math::exp(log_mu);
    let z: Vec<f64> = weights.iter().map(|&w| z_of(mu, w)).collect();
    let value = epsilon * z.iter().map(|&zi| math::powf(zi, p)).sum::<f64>();
    let stationarity = z
        .iter()
        .zip(&weights)
        .filter(|(&zi, &w)| zi > REPRESENTABLE && w > REPRESENTABLE)
        .map(|(&zi, &w)| (p * math::powf(zi, p - 1.0) - mu * w).abs() / (mu * w))
        .fold(0.0, f64::max);
    Ok(Optimum {
        value,
        minimizer: z,
        multiplier: mu,
        constraint_residual: (constraint(mu) - 1.0).abs(),
        stationarity_residual: stationarity,
    })
}

/// Root of an increasing function on the whole line, by bracket doubling then bisection.
fn bracket_and_bisect<F: FnMut(f64) -> f64>(mut f: F) -> Result<f64> {
    let (mut lo, mut hi) = (-1.0, 1.0);
    while f(lo) > 0.0 {
        lo *= 2.0;
        if lo < -1e4 {
            return Err(Error::NumericFailure {
                context: "multiplier bracket",
                residual: f(lo),
            });
        }
    }
    while f(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::NumericFailure {
                context: "multiplier bracket",
                residual: f(hi),
            });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Minimises `ε Σ L(yᵢ) yᵢ^{1/(1-θ)}` subject to `ε Σ yᵢ e^{-αiε} ≥ u`.
///
/// Each coordinate solves `d/dy [L(y) y^{1/(1-θ)}] = μ e^{-αiε}`; this
/// assumes that derivative is increasing where the optimum lives.
#[allow(non_snake_case)]
pub fn K_numeric<L: SlowlyVarying>(
    u: f64,
    epsilon: f64,
    theta: f64,
    alpha: f64,
    ell: &L,
    n_trunc: usize,
) -> Result<Optimum> {
    check(theta, alpha, epsilon)?;
    if !(u > 0.0) {
        return Err(Error::invalid("u", "must be positive"));
    }
    let tail = math::exp(-alpha * epsilon * n_trunc as f64 / theta);
    if n_trunc < 2 || tail > TAIL_TOLERANCE {
        return Err(Error::TruncationWarning { tail });
    }
    let p = 1.0 / (1.0 - theta);
    let phi = |y: f64| if y > 0.0 { ell.value(y) * math::powf(y, p) } else { 0.0 };
    let dphi = |y: f64| {
        if y > 0.0 {
            ell.derivative(y) * math::powf(y, p) + p * ell.value(y) * math::powf(y, p - 1.0)
        } else {
            0.0
        }
    };
    let coord = |c: f64| -> f64 {
        // Solve φ'(y) = c in log y.
        let mut hi = 0.0f64;
        while dphi(math::exp(hi)) < c {
            hi += 2.0;
        }
        let mut lo = hi - 2.0;
        while dphi(math::exp(lo)) > c && lo > -700.0 {
            lo -= 2.0;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if dphi(math::exp(mid)) < c {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        math::exp(0.5 * (lo + hi))
    };
    let weights: Vec<f64> = (0..n_trunc).map(|i| math::exp(-alpha * epsilon * i as f64)).collect();
    let constraint = |mu: f64| epsilon * weights.iter().map(|&w| coord(mu * w) * w).sum::<f64>();
    let log_mu = bracket_and_bisect(|lm| math::ln(constraint(math::exp(lm)) / u))?;
    let mu = math::exp(log_mu);
    let y: Vec<f64> = weights.iter().map(|&w| coord(mu * w)).collect();
    let value = epsilon * y.iter().map(|&yi| phi(yi)).sum::<f64>();
    let stationarity = y
        .iter()
        .zip(&weights)
        .filter(|(&yi, &w)| yi > REPRESENTABLE && w > REPRESENTABLE)
        .map(|(&yi, &w)| (dphi(yi) - mu * w).abs() / (mu * w))
        .fold(0.0, f64::max);
    let cons = epsilon * y.iter().zip(&weights).map(|(&yi, &w)| yi * w).sum::<f64>();
    Ok(Optimum {
        value,
        minimizer: y,
        multiplier: mu,
        constraint_residual: (cons - u).abs() / u,
        stationarity_residual: stationarity,
    })
}

/// Brackets `K(u, 1)` in the finite-activity case, where the per-block cost is
/// `φ(y) = max(0, λy - C yᵝ)`.
///
/// The upper value is `φ(u)` at the feasible point `(u, 0, 0, …)`; the lower
/// value is the best Lagrangian dual bound over `μ ∈ [0, λ)`.
#[allow(non_snake_case)]
pub fn K_finite_activity(u: f64, lambda: f64, c_tail: f64, beta: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(u >= 10.0) {
        return Err(Error::invalid("u", "must be at least 10"));
    }
    if !(lambda > 0.0 && c_tail > 0.0 && alpha > 0.0) {
        return Err(Error::invalid("lambda", "lambda, C and alpha must be positive"));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::invalid("beta", "must lie in (0, 1)"));
    }
    let phi = |y: f64| (lambda * y - c_tail * math::powf(y, beta)).max(0.0);
    let upper = phi(u);
    let y0 = math::powf(c_tail / lambda, 1.0 / (1.0 - beta));
    // inf_y φ(y) - c y for 0 ≤ c < λ.
    let inner = |c: f64| {
        if c <= lambda * (1.0 - beta) {
            -c * y0
        } else {
            let y = math::powf(beta * c_tail / (lambda - c), 1.0 / (1.0 - beta));
            phi(y) - c * y
        }
    };
    let dual = |mu: f64| {
        let mut total = mu * u;
        let decay = math::exp(-alpha);
        let mut w = 1.0;
        let mut i = 0;
        while mu * w > lambda * (1.0 - beta) {
            total += inner(mu * w);
            w *= decay;
            i += 1;
            if i > 100_000 {
                break;
            }
        }
        // Remaining terms are -μ w y₀ summed geometrically.
        total - mu * w * y0 / (1.0 - decay)
    };
    let hi = lambda * (1.0 - 1e-12);
    let (_, lower) = numeric::golden_max(dual, 0.0, hi, 1e-12 * lambda);
    Ok((lower.min(upper), upper))
}

/// The geometric staircase `tᵢ = Q e^{-αεi(1-θ)/θ}` used in the lower bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct StaircasePlan {
    pub epsilon: f64,
    pub n: usize,
    pub levels: Vec<f64>,
    pub q: f64,
    pub theta: f64,
    pub alpha: f64,
}

/// Builds the staircase with `n ≥ 2` steps and scale `q > 0`.
pub fn staircase(theta: f64, alpha: f64, epsilon: f64, n: usize, q: f64) -> Result<StaircasePlan> {
    check(theta, alpha, epsilon)?;
    if n < 2 {
        return Err(Error::invalid("n", "need at least two steps"));
    }
    if !(q > 0.0) {
        return Err(Error::invalid("q", "must be positive"));
    }
    let r = alpha * epsilon * (1.0 - theta) / theta;
    let levels = (0..n).map(|i| q * math::exp(-r * i as f64)).collect();
    Ok(StaircasePlan {
        epsilon,
        n,
        levels,
        q,
        theta,
        alpha,
    })
}

impl StaircasePlan {
    /// `T_Q = Q e^{α(N-2)ε} (ε / (1 - e^{-αε/θ})) (1 - e^{-Nαε/θ})`.
    pub fn t_q(&self) -> f64 {
        let (a, e, th, n) = (self.alpha, self.epsilon, self.theta, self.n as f64);
        self.q * math::exp(a * (n - 2.0) * e) * (e / -math::exp_m1(-a * e / th)) * -math::exp_m1(-n * a * e / th)
    }

    /// `T(t₀, …, t_{N-1}) = e^{α(N-2)ε} ε Σ tⱼ e^{-αεj}` evaluated on the levels.
    pub fn t_direct(&self) -> f64 {
        let (a, e) = (self.alpha, self.epsilon);
        let s: f64 = self
            .levels
            .iter()
            .enumerate()
            .map(|(j, &t)| t * math::exp(-a * e * j as f64))
            .sum();
        math::exp(a * (self.n as f64 - 2.0) * e) * e * s
    }

    /// Whether every step is at least `floor`.
    pub fn respects_floor(&self, floor: f64) -> bool {
        self.levels.iter().all(|&t| t >= floor)
    }

    /// The separable objective `ε Σ zᵢ^{1/(1-θ)}` for `zᵢ = tᵢ / (Q ε) · z₀`,
    /// i.e. evaluated on the closed-form minimiser rescaled to this staircase.
    pub fn minimizer_objective(&self, n_terms: usize) -> Result<f64> {
        let p = 1.0 / (1.0 - self.theta);
        let mut acc = 0.0;
        for i in 0..n_terms {
            acc += math::powf(c_minimizer(self.theta, self.alpha, self.epsilon, i)?, p);
        }
        Ok(self.epsilon * acc)
    }
}

/// `T_ε(h) = (1 - Cε) F_θ(h)`, the time by which a fragment of size `e^{-h}` still exists.
#[allow(non_snake_case)]
pub fn T_level(profile: &AsymptoticProfile, epsilon_slack: f64, h: f64, c: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&epsilon_slack) {
        return Err(Error::invalid("epsilon_slack", "must lie in [0, 1)"));
    }
    let factor = 1.0 - c * epsilon_slack;
    if !(factor > 0.0) {
        return Err(Error::invalid("c", "C·ε must stay below 1"));
    }
    Ok(factor * profile.f_theta(h)?)
}

/// Bound `s^N sup{Π P(Aᵢ > yᵢ) : Σ yᵢ > s - N}` for exponential `Aᵢ` with the given rates.
///
/// The log of the product is linear in `y`, so the supremum sits at a
/// vertex of the simplex `Σ yᵢ = s - N`.
pub fn summa_bound(rates: &[f64], s: f64) -> Result<f64> {
    let n = rates.len() as f64;
    if rates.is_empty() || !(s > n) {
        return Err(Error::invalid("s", "need s > N and at least one variable"));
    }
    if rates.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::invalid("rates", "must be positive"));
    }
    let best = rates
        .iter()
        .map(|&r| math::exp(-r * (s - n)))
        .fold(0.0, f64::max);
    Ok(math::powf(s, n) * best)
}

/// Monte Carlo frequency of `{Σ Aᵢ > s, every Aᵢ ≤ s}` for exponential `Aᵢ`.
pub fn summa_mc<R: RngCore + ?Sized>(rates: &[f64], s: f64, n: u64, rng: &mut R) -> crate::stats::Estimate {
    let mut hits = 0;
    for _ in 0..n {
        let mut total = 0.0;
        let mut capped = true;
        for &r in rates {
            let a = exponential(rng, r);
            capped &= a <= s;
            total += a;
        }
        if capped && total > s {
            hits += 1;
        }
    }
    crate::stats::Estimate::from_bernoulli(hits, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partitions::SlowlyVaryingHandle;
    use crate::rng::replica_rng;

    #[test]
    fn closed_form_examples() {
        assert!((C_closed(0.5, 1.0, 1.0).unwrap() - 0.864665).abs() < 1e-6);
        assert!((C_closed(0.5, 1.0, 0.1).unwrap() - 1.812692).abs() < 1e-6);
        let small = C_closed(0.5, 1.0, 1e-6).unwrap();
        assert!((small - 2.0).abs() < 1e-5);
        assert!(C_closed(0.5, 1.0, 0.1).unwrap() < C_closed(0.5, 1.0, 0.01).unwrap());
        assert!(C_closed(0.96, 1.0, 1.0).is_err());
    }

    #[test]
    fn minimizer_series_resums_to_constant() {
        for (th, a, e) in [(0.5, 1.0, 1.0), (0.25, 2.0, 0.1), (0.75, 0.5, 0.5)] {
            let p = 1.0 / (1.0 - th);
            let mut obj = 0.0;
            let mut cons = 0.0;
            for i in 0..20_000 {
                let z = c_minimizer(th, a, e, i).unwrap();
                obj += math::powf(z, p);
                cons += z * math::exp(-a * i as f64 * e);
            }
            assert!((e * cons - 1.0).abs() < 1e-10);
            assert!((e * obj / C_closed(th, a, e).unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn numeric_matches_closed_on_grid() {
        for th in [0.25, 0.5, 0.75] {
            for a in [0.5, 1.0, 2.0] {
                for e in [0.1, 0.5, 1.0] {
                    let num = solve_C_numeric(th, a, e, 500).unwrap();
                    let exact = C_closed(th, a, e).unwrap();
                    assert!(((num.value - exact) / exact).abs() <= 1e-6);
                    assert!(num.constraint_residual <= 1e-8 && num.stationarity_residual <= 1e-8);
                    for i in 0..=20 {
                        let z = c_minimizer(th, a, e, i).unwrap();
                        assert!((num.minimizer[i] - z).abs() <= 1e-6 * z.max(1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn truncation_warning() {
        assert!(matches!(
            solve_C_numeric(0.75, 0.5, 0.1, 50),
            Err(Error::TruncationWarning { .. })
        ));
    }

    #[test]
    fn k_finite_bracket() {
        let mut prev = None;
        for u in [1e2, 1e3, 1e4] {
            let (lo, hi) = K_finite_activity(u, 1.0, 1.0, 0.5, 1.0).unwrap();
            assert!(lo <= hi);
            let gap = (hi - lo) / math::sqrt(u);
            assert!(gap < 5.0, "gap {gap}");
            prev = Some((lo, hi, u));
        }
        let (lo, hi, u) = prev.unwrap();
        assert!(lo / u >= 0.95 && hi / u <= 1.0);
    }

    #[test]
    fn k_numeric_homogeneous_for_constant_l() {
        let one = SlowlyVaryingHandle::Constant(1.0);
        let th = 0.5;
        let u = 1e3;
        let k = K_numeric(u, 0.5, th, 1.0, &one, 400).unwrap();
        let r = k.value / math::powf(u, 2.0) / C_closed(th, 1.0, 0.5).unwrap();
        assert!((r - 1.0).abs() < 1e-4, "{r}");
        assert!(k.stationarity_residual < 1e-8);
    }

    #[test]
    fn k_numeric_log_family_lower_bound() {
        let log = SlowlyVaryingHandle::log_power(1.0, 1.0).unwrap();
        let (th, a, e) = (0.5, 1.0, 0.5);
        let mut prev = 0.0;
        for u in [1e4, 3e4, 1e5] {
            let k = K_numeric(u, e, th, a, &log, 400).unwrap().value;
            let reference = log.value(u) * math::powf(u, 2.0) * C_closed(th, a, e).unwrap();
            assert!(k >= 0.9 * reference, "u={u} {k} vs {reference}");
            assert!(k > prev);
            prev = k;
        }
    }

    #[test]
    fn staircase_identities() {
        let s = staircase(0.5, 1.0, 1.0, 2, 1.0).unwrap();
        assert!((s.t_q() - 1.135335).abs() < 1e-6);
        for (th, a, e, n, q) in [(0.5, 1.0, 1.0, 2, 1.0), (0.3, 2.0, 0.2, 17, 4.5)] {
            let s = staircase(th, a, e, n, q).unwrap();
            assert!((s.t_q() - s.t_direct()).abs() <= 1e-10 * s.t_q());
            let s2 = staircase(th, a, e, n, 2.0 * q).unwrap();
            assert!((s2.t_q() - 2.0 * s.t_q()).abs() <= 1e-12 * s2.t_q());
        }
        let s = staircase(0.5, 1.0, 0.5, 4, 1.0).unwrap();
        let obj = s.minimizer_objective(2000).unwrap();
        assert!((obj - C_closed(0.5, 1.0, 0.5).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn t_level_is_scaled_f_theta() {
        let p = AsymptoticProfile::infinite(1.0, 0.5, SlowlyVaryingHandle::Constant(1.0)).unwrap();
        assert_eq!(T_level(&p, 0.0, 5.0, 1.0).unwrap(), p.f_theta(5.0).unwrap());
        assert!((T_level(&p, 0.2, 5.0, 1.0).unwrap() - 0.8 * p.f_theta(5.0).unwrap()).abs() < 1e-9);
        assert!(T_level(&p, 0.0, 6.0, 1.0).unwrap() > T_level(&p, 0.0, 5.0, 1.0).unwrap());
    }

    #[test]
    fn summa_surrogate() {
        let mut rng = replica_rng(11, 0);
        for (n, s) in [(3usize, 10.0), (5, 20.0)] {
            let plan = staircase(0.5, 1.0, 0.5, n, 1.0).unwrap();
            let rates: Vec<f64> = plan.levels.iter().map(|t| 1.0 / t).collect();
            let est = summa_mc(&rates, s, 100_000, &mut rng);
            assert!(est.mean <= summa_bound(&rates, s).unwrap());
        }
    }
}
