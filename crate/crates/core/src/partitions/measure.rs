use alloc::vec::Vec;

use rand_core::RngCore;

use super::{MassPartition, SlowlyVarying, SlowlyVaryingHandle};
use crate::math;
use crate::numeric::{self, integrate};
use crate::rng::uniform_open;
use crate::{Error, Result};

const QUAD_TOL: f64 = 1e-10;
const LN_2: f64 = core::f64::consts::LN_2;

/// The concrete family backing a [`DislocationMeasure`].
#[derive(Debug, Clone, PartialEq)]
pub enum MeasureKind {
    /// Finitely many partitions, each with its own rate.
    FiniteDiscrete {
        atoms: Vec<(MassPartition, f64)>,
        total: f64,
    },
    /// Binary split `(max(Z, 1-Z), min(Z, 1-Z))`, `Z` uniform, at rate λ.
    UniformBinary { rate: f64 },
    /// Binary split `(1-u, u)`, `u ∈ (0, 1/2]`, with `ν(u > δ) = δ^{-θ} ℓ(1/δ)` for `δ < 1/2`.
    ///
    /// The tail does not vanish at `1/2`; the leftover mass `2^θ ℓ(2)` sits
    /// as an atom on the even split.
    CrumbleBinary {
        theta: f64,
        ell: SlowlyVaryingHandle,
    },
}

/// A conservative dislocation measure.
#[derive(Debug, Clone, PartialEq)]
pub struct DislocationMeasure {
    kind: MeasureKind,
}

/// One sampled dislocation, borrowed from the measure where possible so the
/// simulation loop never allocates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Split<'a> {
    /// Pieces `(1-u, u)` with `u ∈ (0, 1/2]`.
    Binary(f64),
    Atom(&'a MassPartition),
}

impl<'a> Split<'a> {
    pub fn len(&self) -> usize {
        match self {
            Split::Binary(_) => 2,
            Split::Atom(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Mass of piece `i`, largest first.
    pub fn mass(&self, i: usize) -> f64 {
        match *self {
            Split::Binary(u) => {
                if i == 0 {
                    1.0 - u
                } else {
                    u
                }
            }
            Split::Atom(p) => p.masses()[i],
        }
    }

    /// `-log` of piece `i`, computed without cancellation for the large piece.
    pub fn neg_log_mass(&self, i: usize) -> f64 {
        match *self {
            Split::Binary(u) => {
                if i == 0 {
                    -math::ln_1p(-u)
                } else {
                    -math::ln(u)
                }
            }
            Split::Atom(p) => -math::ln(p.masses()[i]),
        }
    }

    pub fn to_partition(&self) -> MassPartition {
        match *self {
            Split::Binary(u) => MassPartition {
                masses: alloc::vec![1.0 - u, u],
            },
            Split::Atom(p) => p.clone(),
        }
    }
}

impl DislocationMeasure {
    pub fn finite_discrete(atoms: Vec<(MassPartition, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("atoms", "a finite measure needs at least one atom"));
        }
        let mut total = 0.0;
        for (p, rate) in &atoms {
            if !(*rate > 0.0 && rate.is_finite()) {
                return Err(Error::invalid("rate", "atom rates must be positive and finite"));
            }
            if p.is_trivial() {
                return Err(Error::invalid("atoms", "the trivial partition (1, 0, ...) carries no mass"));
            }
            total += rate;
        }
        Ok(Self {
            kind: MeasureKind::FiniteDiscrete { atoms, total },
        })
    }

    /// Dirac mass at the `k`-fold equal split.
    pub fn k_split(k: usize, rate: f64) -> Result<Self> {
        Self::finite_discrete(alloc::vec![(MassPartition::equal_split(k)?, rate)])
    }

    pub fn uniform_binary(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::invalid("rate", "rate must be positive and finite"));
        }
        Ok(Self {
            kind: MeasureKind::UniformBinary { rate },
        })
    }

    pub fn crumble_binary(theta: f64, ell: SlowlyVaryingHandle) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::invalid("theta", "crumbling index must lie in (0, 1)"));
        }
        let m = Self {
            kind: MeasureKind::CrumbleBinary { theta, ell },
        };
        // The tail must be a genuine (strictly decreasing) tail on (0, 1/2).
        let mut prev = 0.0;
        let mut k = 0;
        loop {
            let lv = math::ln(0.5) - 0.05 - 0.25 * k as f64;
            if lv < -690.0 {
                break;
            }
            let t = m.crumble_tail(math::exp(lv));
            if !(t > 0.0 && t.is_finite()) || t <= prev {
                return Err(Error::invalid("ell", "tail δ^-θ ℓ(1/δ) is not strictly decreasing"));
            }
            prev = t;
            k += 1;
        }
        Ok(m)
    }

    pub fn kind(&self) -> &MeasureKind {
        &self.kind
    }

    pub fn is_finite(&self) -> bool {
        !matches!(self.kind, MeasureKind::CrumbleBinary { .. })
    }

    /// `ν(S^↓)` for finite measures.
    pub fn total_rate(&self) -> Option<f64> {
        match &self.kind {
            MeasureKind::FiniteDiscrete { total, .. } => Some(*total),
            MeasureKind::UniformBinary { rate } => Some(*rate),
            MeasureKind::CrumbleBinary { .. } => None,
        }
    }

    /// Total rate of the dislocations kept by the sampler at this `jump_floor`.
    ///
    /// For infinite measures this is `ν(1-s₁ ≥ a)`.
    pub fn event_rate(&self, jump_floor: f64) -> Result<f64> {
        match &self.kind {
            MeasureKind::CrumbleBinary { .. } => {
                check_floor(jump_floor)?;
                Ok(self.crumble_tail(jump_floor))
            }
            _ => Ok(self.total_rate().unwrap_or_default()),
        }
    }

    /// Binary tail `T(u) = ν(1-s₁ > u)` on `(0, 1/2)` for the binary families.
    fn crumble_tail(&self, u: f64) -> f64 {
        match &self.kind {
            MeasureKind::CrumbleBinary { theta, ell } => math::powf(u, -theta) * ell.value(1.0 / u),
            MeasureKind::UniformBinary { rate } => rate * (1.0 - 2.0 * u),
            MeasureKind::FiniteDiscrete { .. } => unreachable!(),
        }
    }

    fn binary_tail(&self, u: f64) -> f64 {
        if u >= 0.5 {
            0.0
        } else {
            self.crumble_tail(u)
        }
    }

    /// Mass of the atom at `u = 1/2` (zero for the uniform split).
    fn half_atom(&self) -> f64 {
        match &self.kind {
            MeasureKind::CrumbleBinary { .. } => self.crumble_tail(0.5),
            _ => 0.0,
        }
    }

    /// `ν(1 - s₁ > δ)`.
    pub fn tail(&self, delta: f64) -> Result<f64> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid("delta", "must lie in (0, 1)"));
        }
        Ok(match &self.kind {
            MeasureKind::FiniteDiscrete { atoms, .. } => atoms
                .iter()
                .filter(|(p, _)| 1.0 - p.largest() > delta)
                .map(|(_, r)| r)
                .sum(),
            _ => self.binary_tail(delta),
        })
    }

    /// Draws one dislocation; infinite measures are conditioned on `1 - s₁ ≥ jump_floor`.
    pub fn sample_split<R: RngCore + ?Sized>(&self, jump_floor: f64, rng: &mut R) -> Result<Split<'_>> {
        match &self.kind {
            MeasureKind::FiniteDiscrete { atoms, total } => {
                if atoms.len() == 1 {
                    return Ok(Split::Atom(&atoms[0].0));
                }
                let mut target = uniform_open(rng) * total;
                for (p, r) in atoms {
                    if target < *r {
                        return Ok(Split::Atom(p));
                    }
                    target -= r;
                }
                Ok(Split::Atom(&atoms[atoms.len() - 1].0))
            }
            MeasureKind::UniformBinary { .. } => {
                let z = uniform_open(rng);
                Ok(Split::Binary(if z > 0.5 { 1.0 - z } else { z }))
            }
            MeasureKind::CrumbleBinary { theta, ell } => {
                check_floor(jump_floor)?;
                let top = self.crumble_tail(jump_floor);
                let level = uniform_open(rng) * top;
                if level <= self.half_atom() {
                    return Ok(Split::Binary(0.5));
                }
                let u = match ell {
                    SlowlyVaryingHandle::Constant(c) => math::powf(level / c, -1.0 / theta),
                    _ => {
                        let lv = numeric::bisect(
                            |lu| self.crumble_tail(math::exp(lu)) - level,
                            math::ln(jump_floor),
                            -LN_2,
                            1e-14,
                        )
                        .map_err(|_| Error::NumericFailure {
                            context: "tail inversion",
                            residual: level,
                        })?;
                        math::exp(lv)
                    }
                };
                Ok(Split::Binary(u.clamp(jump_floor, 0.5)))
            }
        }
    }

    pub fn sample_partition<R: RngCore + ?Sized>(&self, jump_floor: f64, rng: &mut R) -> Result<MassPartition> {
        self.sample_split(jump_floor, rng).map(|s| s.to_partition())
    }

    /// `Φ(q) = ∫ (1 - Σ sᵢ^{q+1}) ν(ds)`.
    pub fn laplace_exponent(&self, q: f64) -> Result<f64> {
        check_q(q)?;
        match &self.kind {
            MeasureKind::FiniteDiscrete { atoms, .. } => Ok(atoms
                .iter()
                .map(|(p, r)| r * (1.0 - p.masses().iter().map(|&s| math::powf(s, q + 1.0)).sum::<f64>()))
                .sum()),
            MeasureKind::UniformBinary { rate } => Ok(rate * q / (q + 2.0)),
            MeasureKind::CrumbleBinary { .. } => self.laplace_exponent_quadrature(q),
        }
    }

    /// `Φ'(q) = ∫ Σ sᵢ^{q+1} log(1/sᵢ) ν(ds)`.
    pub fn laplace_exponent_derivative(&self, q: f64) -> Result<f64> {
        check_q(q)?;
        match &self.kind {
            MeasureKind::FiniteDiscrete { atoms, .. } => Ok(atoms
                .iter()
                .map(|(p, r)| {
                    r * p
                        .masses()
                        .iter()
                        .map(|&s| -math::powf(s, q + 1.0) * math::ln(s))
                        .sum::<f64>()
                })
                .sum()),
            MeasureKind::UniformBinary { rate } => Ok(2.0 * rate / ((q + 2.0) * (q + 2.0))),
            MeasureKind::CrumbleBinary { .. } => self.laplace_exponent_derivative_quadrature(q),
        }
    }

    /// `Φ(q)` by quadrature for the binary families (exact sum otherwise).
    pub fn laplace_exponent_quadrature(&self, q: f64) -> Result<f64> {
        check_q(q)?;
        if !self.is_binary() {
            return self.laplace_exponent(q);
        }
        self.truncated_laplace_exponent_inner(q, 0.0)
    }

    pub fn laplace_exponent_derivative_quadrature(&self, q: f64) -> Result<f64> {
        check_q(q)?;
        if !self.is_binary() {
            return self.laplace_exponent_derivative(q);
        }
        self.truncated_derivative_inner(q, 0.0)
    }

    /// Derivative in `q` of [`truncated_laplace_exponent`](Self::truncated_laplace_exponent).
    pub fn truncated_laplace_exponent_derivative(&self, q: f64, jump_floor: f64) -> Result<f64> {
        check_q(q)?;
        match &self.kind {
            MeasureKind::CrumbleBinary { .. } => {
                check_floor(jump_floor)?;
                self.truncated_derivative_inner(q, jump_floor)
            }
            _ => self.laplace_exponent_derivative(q),
        }
    }

    fn truncated_derivative_inner(&self, q: f64, a: f64) -> Result<f64> {
        // g(u) = Σ sᵢ^{q+1} log(1/sᵢ) for the pair (1-u, u); g(0) = 0.
        let g = move |u: f64| {
            -math::one_minus_pow(u, q + 1.0) * math::ln_1p(-u) - math::powf(u, q + 1.0) * math::ln(u)
        };
        let dg = move |u: f64| {
            let a = math::one_minus_pow(u, q);
            let b = math::powf(u, q);
            a * (1.0 + (q + 1.0) * math::ln_1p(-u)) - b * ((q + 1.0) * math::ln(u) + 1.0)
        };
        self.by_parts(g, dg, a, q)
    }

    /// Laplace exponent of the spine with dislocations `1 - s₁ < a` discarded.
    pub fn truncated_laplace_exponent(&self, q: f64, jump_floor: f64) -> Result<f64> {
        check_q(q)?;
        match &self.kind {
            MeasureKind::CrumbleBinary { .. } => {
                check_floor(jump_floor)?;
                self.truncated_laplace_exponent_inner(q, jump_floor)
            }
            _ => self.laplace_exponent(q),
        }
    }

    fn truncated_laplace_exponent_inner(&self, q: f64, a: f64) -> Result<f64> {
        let f = move |u: f64| 1.0 - math::one_minus_pow(u, q + 1.0) - math::powf(u, q + 1.0);
        let df = move |u: f64| (q + 1.0) * (math::one_minus_pow(u, q) - math::powf(u, q));
        self.by_parts(f, df, a, q)
    }

    /// `∫_{[a,1/2]} f dν` for a binary measure with `f(0) = 0`, as
    /// `f(a) T(a) + ∫_a^{1/2} f'(u) T(u) du`.
    ///
    /// `f` itself is only consulted at `a > 0`.
    fn by_parts<F, D>(&self, f: F, df: D, a: f64, q: f64) -> Result<f64>
    where
        F: Fn(f64) -> f64,
        D: Fn(f64) -> f64,
    {
        let body = match &self.kind {
            MeasureKind::UniformBinary { .. } => integrate(|u| df(u) * self.crumble_tail(u), a, 0.5, QUAD_TOL)?.value,
            MeasureKind::CrumbleBinary { theta, .. } => {
                let v_hi = if a > 0.0 {
                    -math::ln(a)
                } else {
                    (math::ln(q + 2.0) + 45.0 / (1.0 - theta)).min(700.0)
                };
                // Substituting u = e^{-v} tames the singularity of T at zero.
                integrate(
                    |v| {
                        let u = math::exp(-v);
                        df(u) * self.crumble_tail(u) * u
                    },
                    LN_2,
                    v_hi,
                    QUAD_TOL,
                )?
                .value
            }
            MeasureKind::FiniteDiscrete { .. } => unreachable!(),
        };
        let boundary = if a > 0.0 { f(a) * self.crumble_tail(a) } else { 0.0 };
        Ok(boundary + body)
    }

    /// `Λ((x, ∞)) = ∫ Σ sᵢ 1{-log sᵢ > x} ν(ds)`.
    pub fn levy_tail(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::invalid("x", "must be positive"));
        }
        match &self.kind {
            MeasureKind::FiniteDiscrete { atoms, .. } => Ok(atoms
                .iter()
                .map(|(p, r)| {
                    r * p
                        .masses()
                        .iter()
                        .filter(|&&s| -math::ln(s) > x)
                        .sum::<f64>()
                })
                .sum()),
            _ => {
                // Large piece 1-u is below e^{-x} iff u > c1; small piece u iff u < c2.
                let c1 = -math::exp_m1(-x);
                let c2 = math::exp(-x);
                let large = if c1 >= 0.5 {
                    0.0
                } else {
                    (1.0 - c1) * self.binary_tail(c1) - self.tail_integral(c1, 0.5)?
                };
                let small = if c2 > 0.5 {
                    self.tail_integral(0.0, 0.5)?
                } else {
                    // ∫_{(0,c)} u ν(du) = ∫_0^c (T(v) - T(c-)) dv.
                    let tc = if c2 < 0.5 {
                        self.binary_tail(c2)
                    } else {
                        self.crumble_tail(0.5)
                    };
                    self.tail_integral(0.0, c2)? - c2 * tc
                };
                Ok(large + small)
            }
        }
    }

    /// `∫_lo^hi T(v) dv` for the binary families, `0 ≤ lo ≤ hi ≤ 1/2`.
    fn tail_integral(&self, lo: f64, hi: f64) -> Result<f64> {
        if hi <= lo {
            return Ok(0.0);
        }
        match &self.kind {
            MeasureKind::UniformBinary { rate } => Ok(rate * ((hi - lo) - (hi * hi - lo * lo))),
            MeasureKind::CrumbleBinary { theta, ell } => {
                let e = 1.0 - theta;
                if let SlowlyVaryingHandle::Constant(c) = ell {
                    return Ok(c * (math::powf(hi, e) - math::powf(lo, e)) / e);
                }
                let s_hi = if lo > 0.0 {
                    -math::ln(lo)
                } else {
                    (-math::ln(hi) + 45.0 / e).min(700.0)
                };
                Ok(integrate(
                    |s| {
                        let v = math::exp(-s);
                        self.crumble_tail(v) * v
                    },
                    -math::ln(hi),
                    s_hi,
                    QUAD_TOL,
                )?
                .value)
            }
            MeasureKind::FiniteDiscrete { .. } => unreachable!(),
        }
    }

    /// Mean log-mass loss rate of the tagged fragment from dislocations with `1 - s₁ < a`.
    ///
    /// This is `∫ (1 - s₁) 1{1 - s₁ < a} ν(ds)`; the truncated spine loses at
    /// most this much drift per unit internal time to first order.
    pub fn truncation_bias(&self, jump_floor: f64) -> Result<f64> {
        match &self.kind {
            MeasureKind::CrumbleBinary { .. } => {
                check_floor(jump_floor)?;
                Ok(self.tail_integral(0.0, jump_floor)? - jump_floor * self.crumble_tail(jump_floor))
            }
            _ => Ok(0.0),
        }
    }

    /// Whether all `-log sᵢ` lie on a common lattice `rℤ` (finite measures only).
    ///
    /// Binary measures with a continuous split law are never lattice.
    pub fn is_lattice(&self) -> bool {
        let MeasureKind::FiniteDiscrete { atoms, .. } = &self.kind else {
            return false;
        };
        let mut logs: Vec<f64> = atoms
            .iter()
            .flat_map(|(p, _)| p.masses().iter().map(|&s| -math::ln(s)))
            .collect();
        logs.sort_by(f64::total_cmp);
        logs.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
        let base = logs[0];
        // Accept rational ratios with small denominators as commensurable.
        let mut den: u64 = 1;
        for &x in &logs[1..] {
            let r = x / base * den as f64;
            let mut found = false;
            for d in 1..=64u64 {
                let y = r * d as f64;
                if (y - math::round(y)).abs() < 1e-9 * y.max(1.0) {
                    den *= d;
                    found = true;
                    break;
                }
            }
            if !found || den > 1 << 20 {
                return false;
            }
        }
        true
    }

    fn is_binary(&self) -> bool {
        !matches!(self.kind, MeasureKind::FiniteDiscrete { .. })
    }
}

fn check_q(q: f64) -> Result<()> {
    if !(q >= 0.0 && q.is_finite()) {
        return Err(Error::invalid("q", "must be finite and nonnegative"));
    }
    Ok(())
}

fn check_floor(a: f64) -> Result<()> {
    if !(a > 0.0 && a <= 0.5) {
        return Err(Error::invalid("jump_floor", "must lie in (0, 1/2] for an infinite measure"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    fn crumble() -> DislocationMeasure {
        DislocationMeasure::crumble_binary(0.5, SlowlyVaryingHandle::Constant(1.0)).unwrap()
    }

    #[test]
    fn k_split_values() {
        let m = DislocationMeasure::k_split(2, 1.0).unwrap();
        assert!(close(m.laplace_exponent(1.0).unwrap(), 0.5, 1e-15));
        assert_eq!(m.laplace_exponent(0.0).unwrap(), 0.0);
        assert!(close(m.laplace_exponent_derivative(0.0).unwrap(), LN_2, 1e-15));
        assert_eq!(m.tail(0.25).unwrap(), 1.0);
        assert_eq!(m.tail(0.75).unwrap(), 0.0);
        assert!(close(m.levy_tail(0.5).unwrap(), 1.0, 1e-15));
        assert_eq!(m.levy_tail(1.0).unwrap(), 0.0);
        assert!(m.is_lattice());
    }

    #[test]
    fn uniform_values() {
        let m = DislocationMeasure::uniform_binary(1.0).unwrap();
        assert!(close(m.laplace_exponent(1.0).unwrap(), 1.0 / 3.0, 1e-15));
        assert!(close(m.laplace_exponent_derivative(0.0).unwrap(), 0.5, 1e-15));
        assert!(close(m.laplace_exponent_derivative(2.0).unwrap(), 0.125, 1e-15));
        assert!(close(m.levy_tail(LN_2).unwrap(), 0.25, 1e-12));
        assert!(!m.is_lattice());
    }

    #[test]
    fn uniform_quadrature_matches_closed_form() {
        let m = DislocationMeasure::uniform_binary(1.7).unwrap();
        for q in [0.5, 1.0, 2.0, 5.0] {
            let exact = m.laplace_exponent(q).unwrap();
            let quad = m.laplace_exponent_quadrature(q).unwrap();
            assert!(close(quad, exact, 1e-8), "q={q} {quad} vs {exact}");
            let exact = m.laplace_exponent_derivative(q).unwrap();
            let quad = m.laplace_exponent_derivative_quadrature(q).unwrap();
            assert!(close(quad, exact, 1e-8), "q={q} {quad} vs {exact}");
        }
    }

    #[test]
    fn uniform_levy_tail_matches_direct_integral() {
        let m = DislocationMeasure::uniform_binary(1.0).unwrap();
        for x in [0.1, 0.5, 1.0, 3.0] {
            let c = math::exp(-x);
            // ∫_0^1 z 1{z < e^{-x}} dz summed over both pieces.
            let direct = c * c;
            assert!(close(m.levy_tail(x).unwrap(), direct, 1e-12), "x={x}");
        }
    }

    #[test]
    fn crumble_tail_and_atom() {
        let m = crumble();
        assert!(close(m.tail(0.04).unwrap(), 5.0, 1e-14));
        assert_eq!(m.tail(0.5).unwrap(), 0.0);
        assert!(close(m.half_atom(), 2f64.sqrt(), 1e-15));
    }

    #[test]
    fn crumble_constant_ell_matches_closed_integral() {
        // For ℓ ≡ 1 and θ = 1/2: Φ(1) = ∫ (1 - (1-u)^2 - u^2) ν(du) = ∫ 2u(1-u) ν(du).
        let m = crumble();
        // ν(du) = ½ u^{-3/2} du on (0, 1/2) plus √2 at 1/2.
        let body = integrate(|u| 2.0 * u * (1.0 - u) * 0.5 * math::powf(u, -1.5), 0.0, 0.5, 1e-13)
            .unwrap()
            .value;
        let exact = body + 2.0f64.sqrt() * 0.5;
        assert!(close(m.laplace_exponent(1.0).unwrap(), exact, 1e-9));
    }

    #[test]
    fn crumble_asymptotics() {
        let m = crumble();
        let g = math::gamma(0.5);
        for q in [1e4, 1e5] {
            let r = m.laplace_exponent(q).unwrap() / (g * math::sqrt(q));
            assert!((0.9..=1.1).contains(&r), "Φ ratio {r}");
            let r = m.laplace_exponent_derivative(q).unwrap() / (0.5 * g / math::sqrt(q));
            assert!((0.9..=1.1).contains(&r), "Φ' ratio {r}");
        }
    }

    #[test]
    fn truncation_reduces_phi() {
        let m = crumble();
        let full = m.laplace_exponent(3.0).unwrap();
        let a = m.truncated_laplace_exponent(3.0, 0.01).unwrap();
        let b = m.truncated_laplace_exponent(3.0, 0.001).unwrap();
        assert!(a < b && b < full);
        assert!(close(m.truncated_laplace_exponent(3.0, 1e-12).unwrap(), full, 1e-5));
        let d = m.truncated_laplace_exponent_derivative(3.0, 0.01).unwrap();
        let fd = (m.truncated_laplace_exponent(3.0 + 1e-4, 0.01).unwrap()
            - m.truncated_laplace_exponent(3.0 - 1e-4, 0.01).unwrap())
            / 2e-4;
        assert!(close(d, fd, 1e-6), "{d} vs {fd}");
        let bias = m.truncation_bias(0.01).unwrap();
        // θ a^{1-θ}/(1-θ) for ℓ ≡ 1.
        assert!(close(bias, 0.5 * 0.1 / 0.5, 1e-12));
    }

    #[test]
    fn crumble_levy_tail_against_quadrature() {
        let m = crumble();
        let dens = |u: f64| 0.5 * math::powf(u, -1.5);
        for x in [0.2, LN_2, 1.5, 4.0] {
            let c1 = 1.0 - math::exp(-x);
            let c2 = math::exp(-x);
            let mut direct = 0.0;
            if c1 < 0.5 {
                direct += integrate(|u| (1.0 - u) * dens(u), c1, 0.5, 1e-13).unwrap().value;
                direct += 0.5 * m.half_atom();
            }
            direct += integrate(|u| u * dens(u), 0.0, c2.min(0.5), 1e-13).unwrap().value;
            if c2 > 0.5 {
                direct += 0.5 * m.half_atom();
            }
            assert!(close(m.levy_tail(x).unwrap(), direct, 1e-8), "x={x}");
        }
    }

    #[test]
    fn sampler_examples() {
        let mut rng = replica_rng(1, 0);
        let m = DislocationMeasure::k_split(2, 1.0).unwrap();
        assert_eq!(m.sample_partition(0.1, &mut rng).unwrap().masses(), &[0.5, 0.5]);
        let c = crumble();
        assert!(c.sample_partition(0.0, &mut rng).is_err());
        let p = c.sample_partition(0.01, &mut rng).unwrap();
        assert!(1.0 - p.largest() >= 0.01);
    }

    #[test]
    fn uniform_split_from_forced_draw() {
        struct Fixed(u64);
        impl RngCore for Fixed {
            fn next_u32(&mut self) -> u32 {
                self.0 as u32
            }
            fn next_u64(&mut self) -> u64 {
                self.0
            }
            fn fill_bytes(&mut self, _: &mut [u8]) {
                unimplemented!()
            }
        }
        let bits = ((0.3 * (1u64 << 52) as f64) as u64) << 12;
        let m = DislocationMeasure::uniform_binary(1.0).unwrap();
        let p = m.sample_partition(0.0, &mut Fixed(bits)).unwrap();
        assert!(close(p.masses()[0], 0.7, 1e-12) && close(p.masses()[1], 0.3, 1e-12));
    }

    #[test]
    fn log_power_sampler_conditions_correctly() {
        let ell = SlowlyVaryingHandle::log_power(1.0, 1.0).unwrap();
        let m = DislocationMeasure::crumble_binary(0.6, ell).unwrap();
        let mut rng = replica_rng(9, 0);
        let n = 20_000;
        let t_floor = m.event_rate(0.01).unwrap();
        let p = m.tail(0.05).unwrap() / t_floor;
        let hits = (0..n)
            .filter(|_| match m.sample_split(0.01, &mut rng).unwrap() {
                Split::Binary(u) => u > 0.05,
                _ => unreachable!(),
            })
            .count();
        let est = hits as f64 / n as f64;
        let se = math::sqrt(p * (1.0 - p) / n as f64);
        assert!((est - p).abs() < 4.0 * se, "{est} vs {p}");
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(DislocationMeasure::finite_discrete(alloc::vec![]).is_err());
        assert!(DislocationMeasure::uniform_binary(0.0).is_err());
        assert!(DislocationMeasure::crumble_binary(1.0, SlowlyVaryingHandle::Constant(1.0)).is_err());
        let trivial = MassPartition::new(alloc::vec![1.0]).unwrap();
        assert!(DislocationMeasure::finite_discrete(alloc::vec![(trivial, 1.0)]).is_err());
        // The log factor beats δ^{-0.05} over a long stretch, so the tail is not monotone.
        let bad = SlowlyVaryingHandle::log_power(1.0, -5.0).unwrap();
        assert!(DislocationMeasure::crumble_binary(0.05, bad).is_err());
        assert!(m_tail_rejects_domain());
    }

    fn m_tail_rejects_domain() -> bool {
        let m = crumble();
        m.tail(0.0).is_err() && m.tail(1.0).is_err() && m.laplace_exponent(-1.0).is_err() && m.levy_tail(0.0).is_err()
    }

    #[test]
    fn non_lattice_finite_measure() {
        let p = MassPartition::new(alloc::vec![0.7, 0.3]).unwrap();
        let m = DislocationMeasure::finite_discrete(alloc::vec![(p, 1.0)]).unwrap();
        assert!(!m.is_lattice());
        let p = MassPartition::new(alloc::vec![0.5, 0.25, 0.25]).unwrap();
        let m = DislocationMeasure::finite_discrete(alloc::vec![(p, 1.0)]).unwrap();
        assert!(m.is_lattice());
    }
}
