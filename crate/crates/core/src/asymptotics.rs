//! Closed-form asymptotic laws for the largest fragment and their inverses.

use crate::numeric;
use crate::partitions::{SlowlyVarying, SlowlyVaryingHandle};
use crate::{math, Error, Result};

/// Which argument chain to use inside the slowly varying factor `L`.
///
/// `Direct` evaluates `ℓ(s^{1/(1-θ)} ℓ(s^{1/(1-θ)})^{1/(1-θ)})`; `Reciprocal`
/// uses the exponent `-1/(1-θ)` instead. The two agree when `ℓ` is constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LConvention {
    #[default]
    Direct,
    Reciprocal,
}

/// `C₃(θ) = (1-θ) θ^{θ/(1-θ)} Γ(1-θ)^{1/(1-θ)}`.
pub fn c3(theta: f64) -> Result<f64> {
    check_theta(theta)?;
    let e = 1.0 / (1.0 - theta);
    Ok((1.0 - theta) * math::powf(theta, theta * e) * math::powf(math::gamma(1.0 - theta), e))
}

/// The slowly varying factor `L(s)` of the spine lower-deviation law, with `r ≡ 0`.
pub fn levy_l(theta: f64, ell: &SlowlyVaryingHandle, s: f64, convention: LConvention) -> Result<f64> {
    let c = c3(theta)?;
    if !(s > 0.0) {
        return Err(Error::invalid("s", "must be positive"));
    }
    let e = 1.0 / (1.0 - theta);
    let base = match convention {
        LConvention::Direct => math::powf(s, e),
        LConvention::Reciprocal => math::powf(s, -e),
    };
    let inner = base * math::powf(ell.value(base), e);
    Ok(c * math::powf(ell.value(inner), e))
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::invalid("theta", "must lie in (0, 1)"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    Finite { lambda: f64 },
    Infinite { theta: f64, ell: SlowlyVaryingHandle },
}

/// Parameters of a fragmentation as seen by the asymptotic laws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticProfile {
    alpha: f64,
    regime: Regime,
    convention: LConvention,
}

impl AsymptoticProfile {
    pub fn finite(alpha: f64, lambda: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid("lambda", "must be positive and finite"));
        }
        Ok(Self {
            alpha,
            regime: Regime::Finite { lambda },
            convention: LConvention::Direct,
        })
    }

    pub fn infinite(alpha: f64, theta: f64, ell: SlowlyVaryingHandle) -> Result<Self> {
        check_alpha(alpha)?;
        check_theta(theta)?;
        Ok(Self {
            alpha,
            regime: Regime::Infinite { theta, ell },
            convention: LConvention::Direct,
        })
    }

    pub fn with_convention(mut self, convention: LConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn regime(&self) -> &Regime {
        &self.regime
    }

    /// `g(t)` for whichever regime the profile describes.
    pub fn g(&self, t: f64) -> Result<f64> {
        match self.regime {
            Regime::Finite { .. } => self.g_finite(t),
            Regime::Infinite { .. } => self.g_infinite(t),
        }
    }

    /// `(log t - log log t + log(αλ)) / α`.
    pub fn g_finite(&self, t: f64) -> Result<f64> {
        let Regime::Finite { lambda } = self.regime else {
            return Err(Error::invalid("regime", "finite-activity law needs a finite profile"));
        };
        let lt = log_t(t)?;
        Ok((lt - math::ln(lt) + math::ln(self.alpha * lambda)) / self.alpha)
    }

    /// `(log t - (1-θ) log log t - log ℓ(log t · ℓ(log t)^{1/(1-θ)}) + c(α,θ)) / α`.
    pub fn g_infinite(&self, t: f64) -> Result<f64> {
        let Regime::Infinite { theta, ell } = self.regime else {
            return Err(Error::invalid("regime", "infinite-activity law needs an infinite profile"));
        };
        let lt = log_t(t)?;
        let arg = lt * math::powf(ell.value(lt), 1.0 / (1.0 - theta));
        Ok((lt - (1.0 - theta) * math::ln(lt) - math::ln(ell.value(arg)) + c_alpha_theta(self.alpha, theta)?) / self.alpha)
    }

    /// `F₀(h) = h e^{αh} / λ`.
    pub fn f0(&self, h: f64) -> Result<f64> {
        Ok(math::exp(self.f0_nice()?.log_value(h)?))
    }

    /// `F_θ(h) = (θ/α)^θ h^{1-θ} e^{αh} L(h^{1-θ})^{-(1-θ)}`.
    pub fn f_theta(&self, h: f64) -> Result<f64> {
        Ok(math::exp(self.f_theta_nice()?.log_value(h)?))
    }

    /// `F₀` as a nice function (`β = 1`, `G ≡ 1/λ`).
    pub fn f0_nice(&self) -> Result<NiceFunction<SlowlyVaryingHandle>> {
        let Regime::Finite { lambda } = self.regime else {
            return Err(Error::invalid("regime", "F0 needs a finite profile"));
        };
        NiceFunction::new(self.alpha, 1.0, SlowlyVaryingHandle::Constant(1.0 / lambda))
    }

    /// `F_θ` as a nice function (`β = 1-θ`).
    pub fn f_theta_nice(&self) -> Result<NiceFunction<FThetaFactor>> {
        let Regime::Infinite { theta, ell } = self.regime else {
            return Err(Error::invalid("regime", "F_theta needs an infinite profile"));
        };
        NiceFunction::new(
            self.alpha,
            1.0 - theta,
            FThetaFactor {
                theta,
                alpha: self.alpha,
                ell,
                convention: self.convention,
            },
        )
    }
}

/// `c(α, θ) = log α - (1-θ) log(1-θ) - log Γ(1-θ)`.
pub fn c_alpha_theta(alpha: f64, theta: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_theta(theta)?;
    Ok(math::ln(alpha) - (1.0 - theta) * math::ln(1.0 - theta) - math::ln_gamma(1.0 - theta))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid("alpha", "must be positive and finite"));
    }
    Ok(())
}

fn log_t(t: f64) -> Result<f64> {
    if !(t > core::f64::consts::E) {
        return Err(Error::invalid("t", "must exceed e so that log log t > 0"));
    }
    Ok(math::ln(t))
}

/// The slowly varying part `(θ/α)^θ L(h^{1-θ})^{-(1-θ)}` of `F_θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FThetaFactor {
    theta: f64,
    alpha: f64,
    ell: SlowlyVaryingHandle,
    convention: LConvention,
}

impl SlowlyVarying for FThetaFactor {
    fn value(&self, h: f64) -> f64 {
        let s = math::powf(h, 1.0 - self.theta);
        match levy_l(self.theta, &self.ell, s, self.convention) {
            Ok(l) => math::powf(self.theta / self.alpha, self.theta) * math::powf(l, -(1.0 - self.theta)),
            Err(_) => f64::NAN,
        }
    }
}

/// The de Bruijn conjugate `L^#` of `L`, by the fixed point `y = 1/L(x y)`.
pub fn de_bruijn_conjugate<L: SlowlyVarying + ?Sized>(ell: &L, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::invalid("x", "must be positive"));
    }
    let mut y = 1.0 / ell.value(x);
    for _ in 0..64 {
        let next = 1.0 / ell.value(x * y);
        if !next.is_finite() {
            break;
        }
        let step = (next - y).abs();
        y = next;
        if step < 1e-12 {
            return Ok(y);
        }
    }
    Err(Error::NumericFailure {
        context: "de Bruijn fixed point",
        residual: (1.0 / ell.value(x * y) - y).abs(),
    })
}

/// `L^#` packaged as a slowly varying function in its own right.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeBruijn<L>(pub L);

impl<L: SlowlyVarying> SlowlyVarying for DeBruijn<L> {
    fn value(&self, x: f64) -> f64 {
        de_bruijn_conjugate(&self.0, x).unwrap_or(f64::NAN)
    }
}

/// `f(h) = e^{αh} h^β G(h)` with `G` slowly varying.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NiceFunction<G> {
    alpha: f64,
    beta: f64,
    g: G,
    h_min: f64,
}

/// Exact and leading-order inverse of a nice function at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NiceInverse {
    pub exact: f64,
    /// `(log t - β log log t + β log α - log G(log t)) / α`
    pub asymptotic: f64,
}

const GRID_STEP: f64 = 0.25;

impl<G: SlowlyVarying> NiceFunction<G> {
    /// Builds `f` and locates `h_min`, past which `f` increases on a grid of step 0.25.
    pub fn new(alpha: f64, beta: f64, g: G) -> Result<Self> {
        check_alpha(alpha)?;
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::invalid("beta", "must be positive and finite"));
        }
        let mut f = Self {
            alpha,
            beta,
            g,
            h_min: GRID_STEP,
        };
        let h_max = 700.0 / alpha;
        let mut h = GRID_STEP;
        let mut prev = f.raw_log(h);
        let mut h_min = None;
        while h < h_max {
            let next = f.raw_log(h + GRID_STEP);
            if !next.is_finite() || next <= prev {
                h_min = None;
            } else if h_min.is_none() {
                h_min = Some(h);
            }
            prev = next;
            h += GRID_STEP;
        }
        f.h_min = h_min.ok_or(Error::invalid("g", "f is not eventually increasing"))?;
        Ok(f)
    }

    pub fn h_min(&self) -> f64 {
        self.h_min
    }

    fn raw_log(&self, h: f64) -> f64 {
        self.alpha * h + self.beta * math::ln(h) + math::ln(self.g.value(h))
    }

    /// `log f(h)`; usable beyond the range where `f` itself overflows.
    pub fn log_value(&self, h: f64) -> Result<f64> {
        if !(h > 0.0) {
            return Err(Error::invalid("h", "must be positive"));
        }
        let v = self.raw_log(h);
        if !v.is_finite() {
            return Err(Error::invalid("h", "outside the domain of G"));
        }
        Ok(v)
    }

    pub fn value(&self, h: f64) -> Result<f64> {
        Ok(math::exp(self.log_value(h)?))
    }

    /// Solves `f(h) = t` on `[h_min, ∞)`.
    pub fn inverse(&self, t: f64) -> Result<NiceInverse> {
        if !(t > 0.0) {
            return Err(Error::invalid("t", "must be positive"));
        }
        self.inverse_log(math::ln(t))
    }

    /// As [`inverse`](Self::inverse), given `log t`.
    pub fn inverse_log(&self, log_t: f64) -> Result<NiceInverse> {
        let lo = self.h_min;
        if log_t < self.raw_log(lo) {
            return Err(Error::invalid("t", "below the increasing range of f"));
        }
        let mut hi = lo.max(1.0);
        while self.raw_log(hi) < log_t {
            hi *= 2.0;
        }
        let exact = numeric::bisect(|h| self.raw_log(h) - log_t, lo, hi, 1e-13 * hi)?;
        let asymptotic = if log_t > 1.0 {
            (log_t - self.beta * math::ln(log_t) + self.beta * math::ln(self.alpha) - math::ln(self.g.value(log_t)))
                / self.alpha
        } else {
            f64::NAN
        };
        Ok(NiceInverse { exact, asymptotic })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const E10: f64 = 22026.465794806718;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn g_finite_examples() {
        let p = AsymptoticProfile::finite(1.0, 1.0).unwrap();
        assert!(close(p.g_finite(E10).unwrap(), 7.697415, 1e-6));
        let p = AsymptoticProfile::finite(1.0, 2.0).unwrap();
        assert!(close(p.g_finite(E10).unwrap(), 8.390562, 1e-6));
        let p = AsymptoticProfile::finite(2.0, 0.5).unwrap();
        assert!(close(p.g_finite(E10).unwrap(), 3.848708, 1e-6));
        assert!(p.g_finite(2.0).is_err());
    }

    #[test]
    fn g_infinite_example() {
        let p = AsymptoticProfile::infinite(1.0, 0.5, SlowlyVaryingHandle::Constant(1.0)).unwrap();
        assert!(close(c_alpha_theta(1.0, 0.5).unwrap(), -0.225791, 1e-6));
        assert!(close(p.g_infinite(E10).unwrap(), 8.622917, 1e-6));
    }

    #[test]
    fn f_examples() {
        let p = AsymptoticProfile::finite(1.0, 1.0).unwrap();
        assert!(close(p.f0(5.0).unwrap(), 742.0658, 1e-4));
        let p2 = AsymptoticProfile::finite(1.0, 2.0).unwrap();
        assert!(close(p2.f0(5.0).unwrap(), 371.0329, 1e-4));
        let q = AsymptoticProfile::infinite(1.0, 0.5, SlowlyVaryingHandle::Constant(1.0)).unwrap();
        assert!(close(q.f_theta(5.0).unwrap(), 264.787496, 1e-5));
        assert!(close(c3(0.5).unwrap(), core::f64::consts::FRAC_PI_4, 1e-14));
    }

    #[test]
    fn conventions_agree_for_constant_ell() {
        let one = SlowlyVaryingHandle::Constant(2.0);
        let a = levy_l(0.3, &one, 17.0, LConvention::Direct).unwrap();
        let b = levy_l(0.3, &one, 17.0, LConvention::Reciprocal).unwrap();
        assert_eq!(a, b);
        let log = SlowlyVaryingHandle::log_power(1.0, 1.0).unwrap();
        let a = levy_l(0.3, &log, 1e4, LConvention::Direct).unwrap();
        let b = levy_l(0.3, &log, 1e4, LConvention::Reciprocal).unwrap();
        assert!((a - b).abs() > 0.1);
    }

    #[test]
    fn de_bruijn_examples() {
        let c = SlowlyVaryingHandle::Constant(4.0);
        assert_eq!(de_bruijn_conjugate(&c, 1e3).unwrap(), 0.25);
        let log = SlowlyVaryingHandle::log_power(1.0, 1.0).unwrap();
        let x = 1e9;
        let ls = de_bruijn_conjugate(&log, x).unwrap();
        let r = ls * log.value(x * ls);
        assert!((r - 1.0).abs() <= 0.01, "{r}");
        let back = de_bruijn_conjugate(&DeBruijn(log), x).unwrap();
        assert!((back / log.value(x) - 1.0).abs() <= 0.02);
    }

    #[test]
    fn nice_inverse_of_f0() {
        let p = AsymptoticProfile::finite(1.0, 1.0).unwrap();
        let f = p.f0_nice().unwrap();
        assert!(close(f.inverse(742.0658).unwrap().exact, 5.0, 1e-6));
        let h = f.inverse(p.f0(5.0).unwrap()).unwrap().exact;
        assert!(close(h, 5.0, 1e-9));
        for t in [1e3, 1e6, 1e9, 1e12] {
            let h = f.inverse(t).unwrap().exact;
            assert!((p.f0(h).unwrap() / t - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn shifted_inverse() {
        let p = AsymptoticProfile::finite(1.0, 1.0).unwrap();
        let f = p.f0_nice().unwrap();
        let fd = NiceFunction::new(1.0, 1.0, SlowlyVaryingHandle::Constant(1.2)).unwrap();
        let t = 1e9;
        let gap = f.inverse(t).unwrap().exact - fd.inverse(t).unwrap().exact;
        assert!((gap - math::ln(1.2)).abs() < 1e-2);
    }

    #[test]
    fn increasing_laws() {
        let p = AsymptoticProfile::finite(1.0, 1.0).unwrap();
        let q = AsymptoticProfile::infinite(1.0, 0.5, SlowlyVaryingHandle::log_power(1.0, 1.0).unwrap()).unwrap();
        let mut prev = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut t = 100.0;
        while t < 1e15 {
            let cur = (p.g(t).unwrap(), q.g(t).unwrap());
            assert!(cur.0 > prev.0 && cur.1 > prev.1);
            prev = cur;
            t *= 3.0;
        }
    }
}
