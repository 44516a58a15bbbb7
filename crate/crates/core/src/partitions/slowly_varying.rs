use crate::math;
use crate::{Error, Result};

/// A positive function that is slowly varying at infinity.
///
/// Implemented by [`SlowlyVaryingHandle`] and by derived objects such as
/// de Bruijn conjugates, so that the asymptotic routines can be composed.
pub trait SlowlyVarying {
    fn value(&self, x: f64) -> f64;

    /// First derivative; central difference unless overridden.
    fn derivative(&self, x: f64) -> f64 {
        let h = 1e-6 * x.abs().max(1e-3);
        (self.value(x + h) - self.value((x - h).max(0.0))) / (x + h - (x - h).max(0.0))
    }
}

impl<L: SlowlyVarying + ?Sized> SlowlyVarying for &L {
    fn value(&self, x: f64) -> f64 {
        (**self).value(x)
    }
    fn derivative(&self, x: f64) -> f64 {
        (**self).derivative(x)
    }
}

/// The two concrete slowly varying families used throughout.
///
/// `LogPower` uses `log(e + x)` rather than `log x` so that it stays positive
/// and smooth down to `x = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlowlyVaryingHandle {
    /// `ℓ(x) = c`
    Constant(f64),
    /// `ℓ(x) = c · log(e + x)^p`
    LogPower { c: f64, p: f64 },
}

impl SlowlyVaryingHandle {
    pub fn constant(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid("ell.c", "constant must be positive and finite"));
        }
        Ok(Self::Constant(c))
    }

    pub fn log_power(c: f64, p: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid("ell.c", "scale must be positive and finite"));
        }
        if !p.is_finite() {
            return Err(Error::invalid("ell.p", "exponent must be finite"));
        }
        Ok(Self::LogPower { c, p })
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Self::Constant(_)) || matches!(self, Self::LogPower { p, .. } if *p == 0.0)
    }

    /// `ℓ(λx)/ℓ(x)`, which tends to 1 as `x → ∞`.
    pub fn variation_ratio(&self, lambda: f64, x: f64) -> f64 {
        self.value(lambda * x) / self.value(x)
    }
}

impl SlowlyVarying for SlowlyVaryingHandle {
    fn value(&self, x: f64) -> f64 {
        match *self {
            Self::Constant(c) => c,
            Self::LogPower { c, p } => c * math::powf(math::ln(core::f64::consts::E + x), p),
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        match *self {
            Self::Constant(_) => 0.0,
            Self::LogPower { c, p } => {
                let y = core::f64::consts::E + x;
                c * p * math::powf(math::ln(y), p - 1.0) / y
            }
        }
    }
}
