//! Special functions behind every error-probability expression: the Gaussian
//! tail, regularized incomplete gamma functions, and the (non-)central
//! Chi-square laws with the generalized Marcum Q function.
//!
//! Every tail quantity is produced as a [`Probability`], which keeps the
//! natural logarithm alongside the linear value so that probabilities far
//! below `f64::MIN_POSITIVE` stay usable.

use std::f64::consts::{LN_2, PI};

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Relative truncation tolerance for series and continued fractions.
const SERIES_TOL: f64 = 1e-17;
const MAX_SERIES_TERMS: usize = 2_000_000;

/// A probability carried both linearly and in the log domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probability {
    value: f64,
    log_value: f64,
}

impl Probability {
    pub const ZERO: Probability = Probability {
        value: 0.0,
        log_value: f64::NEG_INFINITY,
    };
    pub const ONE: Probability = Probability {
        value: 1.0,
        log_value: 0.0,
    };

    /// Builds from a natural log, clamped to `<= 0`.
    pub fn from_log(log_value: f64) -> Self {
        debug_assert!(!log_value.is_nan());
        let log_value = log_value.min(0.0);
        Probability {
            value: log_value.exp(),
            log_value,
        }
    }

    /// Builds from a linear value, clamped to `[0, 1]`.
    pub fn from_value(value: f64) -> Self {
        debug_assert!(!value.is_nan());
        let value = value.clamp(0.0, 1.0);
        Probability {
            value,
            log_value: value.ln(),
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn log_value(&self) -> f64 {
        self.log_value
    }

    pub fn log10(&self) -> f64 {
        self.log_value / std::f64::consts::LN_10
    }

    /// `1 - p`. Loses relative accuracy when `p` is close to one; callers that
    /// need a small complement compute the other tail directly.
    pub fn complement(&self) -> Self {
        if self.value > 0.5 {
            Probability::from_value(1.0 - self.value)
        } else {
            Probability::from_log((-self.value).ln_1p())
        }
    }

    /// Sum of two probabilities in the log domain, clamped to one.
    pub fn plus(self, other: Probability) -> Self {
        Probability::from_log(log_add(self.log_value, other.log_value))
    }

    /// Scales by a weight in `[0, 1]`.
    pub fn weighted(self, weight: f64) -> Self {
        Probability::from_log(self.log_value + weight.ln())
    }
}

impl Default for Probability {
    fn default() -> Self {
        Probability::ZERO
    }
}

/// `ln(exp(a) + exp(b))` without overflow or underflow.
pub fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Running log-sum-exp accumulator.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogSum {
    max: f64,
    scaled: f64,
}

impl LogSum {
    pub(crate) fn new() -> Self {
        LogSum {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }

    pub(crate) fn add(&mut self, log_term: f64) {
        if log_term == f64::NEG_INFINITY {
            return;
        }
        if log_term > self.max {
            self.scaled = self.scaled * (self.max - log_term).exp() + 1.0;
            self.max = log_term;
        } else {
            self.scaled += (log_term - self.max).exp();
        }
    }

    pub(crate) fn ln(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

// Stirling series coefficients B_2k / (2k (2k - 1)).
const STIRLING: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
];

fn stirling_tail(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut pow = inv;
    let mut acc = 0.0;
    for c in STIRLING {
        acc += c * pow;
        pow *= inv2;
    }
    acc
}

fn stirling_base(x: f64) -> f64 {
    (x - 0.5) * x.ln() - x + LN_SQRT_2PI
}

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x >= 10.0 {
        return stirling_base(x) + stirling_tail(x);
    }
    let mut shift = 0.0;
    let mut y = x;
    while y < 10.0 {
        shift += y.ln();
        y += 1.0;
    }
    stirling_base(y) + stirling_tail(y) - shift
}

/// `ln Γ(x) - [(x - 1/2) ln x - x + ln √(2π)]`.
fn stirling_correction(x: f64) -> f64 {
    if x >= 10.0 {
        stirling_tail(x)
    } else {
        ln_gamma(x) - stirling_base(x)
    }
}

/// `t - ln(1 + t)` for `t > -1`, accurate near zero.
fn log1pmx_neg(t: f64) -> f64 {
    if t.abs() < 0.1 {
        let mut pow = t * t;
        let mut acc = 0.0;
        let mut k = 2.0;
        loop {
            let term = pow / k;
            acc += term;
            if term.abs() <= 1e-18 * acc.abs() {
                break;
            }
            pow *= -t;
            k += 1.0;
        }
        acc
    } else {
        t - t.ln_1p()
    }
}

/// `ln(x^a e^{-x} / Γ(a + 1))`, the common prefactor of the incomplete gamma
/// expansions and of the Poisson mass function.
pub(crate) fn ln_gamma_prefactor(a: f64, x: f64) -> f64 {
    if a == 0.0 {
        return -x;
    }
    if x == 0.0 {
        return f64::NEG_INFINITY;
    }
    if a < 1.0 {
        return a * x.ln() - x - ln_gamma(a + 1.0);
    }
    let t = (x - a) / a;
    -a * log1pmx_neg(t) - 0.5 * (2.0 * PI * a).ln() - stirling_correction(a)
}

/// Poisson mass `ln(mean^k e^{-mean} / k!)`.
pub(crate) fn ln_poisson(k: u64, mean: f64) -> f64 {
    ln_gamma_prefactor(k as f64, mean)
}

fn check_gamma_args(shape: f64, x: f64) -> Result<()> {
    if !(shape > 0.0) || !shape.is_finite() {
        return Err(Error::Domain(format!("gamma shape must be positive, got {shape}")));
    }
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("gamma argument must be non-negative, got {x}")));
    }
    Ok(())
}

/// Lower and upper regularized incomplete gamma functions `(P(a, x), Q(a, x))`.
///
/// The series is used below `x = a + 1` and the continued fraction above it;
/// the directly computed tail is accurate to full relative precision and the
/// other one is obtained as its complement.
pub fn gamma_tails(shape: f64, x: f64) -> Result<(Probability, Probability)> {
    check_gamma_args(shape, x)?;
    if x == 0.0 {
        return Ok((Probability::ZERO, Probability::ONE));
    }
    if x.is_infinite() {
        return Ok((Probability::ONE, Probability::ZERO));
    }
    let a = shape;
    let prefactor = ln_gamma_prefactor(a, x);
    if x < a + 1.0 {
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut n = 1.0;
        let mut converged = false;
        for _ in 0..MAX_SERIES_TERMS {
            term *= x / (a + n);
            sum += term;
            if term < sum * SERIES_TOL {
                converged = true;
                break;
            }
            n += 1.0;
        }
        if !converged {
            return Err(Error::NoConvergence(format!("gamma series at a={a}, x={x}")));
        }
        let lower = Probability::from_log(prefactor + sum.ln());
        Ok((lower, Probability::from_log((-lower.value()).ln_1p())))
    } else {
        // Modified Lentz evaluation of the Legendre continued fraction.
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        let mut converged = false;
        for i in 1..MAX_SERIES_TERMS {
            let fi = i as f64;
            let an = -fi * (fi - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence(format!("gamma continued fraction at a={a}, x={x}")));
        }
        let upper = Probability::from_log(prefactor + a.ln() + h.ln());
        Ok((Probability::from_log((-upper.value()).ln_1p()), upper))
    }
}

/// Regularized lower incomplete gamma `P(shape, x) = γ(shape, x) / Γ(shape)`.
pub fn regularized_gamma_lower(shape: f64, x: f64) -> Result<Probability> {
    gamma_tails(shape, x).map(|t| t.0)
}

/// Regularized upper incomplete gamma `Q(shape, x) = 1 - P(shape, x)`.
pub fn regularized_gamma_upper(shape: f64, x: f64) -> Result<Probability> {
    gamma_tails(shape, x).map(|t| t.1)
}

/// Standard normal upper tail `Q(y) = P(N(0,1) > y)`.
///
/// Uses `erfc(u) = Q(1/2, u^2)`, so the log value stays exact far into the
/// tail where the linear value underflows.
pub fn normal_tail_q(y: f64) -> Probability {
    assert!(!y.is_nan(), "normal_tail_q called with NaN");
    if y == f64::INFINITY {
        return Probability::ZERO;
    }
    if y == f64::NEG_INFINITY {
        return Probability::ONE;
    }
    let (lower, upper) = gamma_tails(0.5, 0.5 * y * y).expect("valid gamma arguments");
    if y >= 0.0 {
        Probability::from_log(upper.log_value() - LN_2)
    } else {
        Probability::from_log(lower.value().ln_1p() - LN_2)
    }
}

fn check_chi2_args(x: f64, dof: u32, noncentrality: f64) -> Result<()> {
    if dof == 0 {
        return Err(Error::Domain("Chi-square degrees of freedom must be positive".into()));
    }
    if !(noncentrality >= 0.0) || !noncentrality.is_finite() {
        return Err(Error::Domain(format!(
            "non-centrality must be finite and non-negative, got {noncentrality}"
        )));
    }
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("Chi-square argument must be non-negative, got {x}")));
    }
    Ok(())
}

/// Which tail of a Poisson mixture of regularized gammas is being summed.
#[derive(Clone, Copy, PartialEq)]
enum Tail {
    Lower,
    Upper,
}

/// `Σ_j Pois(j; mean) · T(shape + j, y)` with `T` the requested gamma tail.
///
/// Both the Poisson weights and the gamma tails (as functions of the shape)
/// are log-concave, so the terms are unimodal with non-increasing ratios on
/// each side of the peak. The sum starts at the peak, found by bisection on
/// the sign of the forward difference, and walks outward until the geometric
/// bound on the discarded remainder falls below the tolerance.
fn poisson_gamma_mixture(shape: f64, y: f64, mean: f64, tail: Tail) -> Result<Probability> {
    if mean == 0.0 {
        let (p, q) = gamma_tails(shape, y)?;
        return Ok(if tail == Tail::Lower { p } else { q });
    }
    let ln_tol = SERIES_TOL.ln();
    let ln_term = |j: u64| -> Result<f64> {
        let (p, q) = gamma_tails(shape + j as f64, y)?;
        let k = match tail {
            Tail::Lower => p.log_value(),
            Tail::Upper => q.log_value(),
        };
        Ok(ln_poisson(j, mean) + k)
    };
    // Is the sequence still rising at j?
    let rising = |j: u64| -> Result<bool> { Ok(ln_term(j + 1)? > ln_term(j)?) };

    let mode = mean.floor() as u64;
    let peak = if rising(mode)? {
        let mut lo = mode;
        let mut step = 1u64;
        let mut hi = mode + step;
        while rising(hi)? {
            lo = hi;
            step *= 2;
            hi = mode + step;
            if step > 1u64 << 52 {
                return Err(Error::NoConvergence("Poisson mixture peak search".into()));
            }
        }
        // rising(lo) holds, rising(hi) does not.
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if rising(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    } else if !rising(0)? {
        0
    } else {
        // rising(lo) holds, rising(hi) does not.
        let (mut lo, mut hi) = (0u64, mode);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if rising(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };

    let mut acc = LogSum::new();
    let first = ln_term(peak)?;
    acc.add(first);
    if first == f64::NEG_INFINITY {
        return Ok(Probability::ZERO);
    }

    let mut prev = first;
    let mut j = peak;
    loop {
        j += 1;
        let t = ln_term(j)?;
        acc.add(t);
        let ln_r = t - prev;
        if t == f64::NEG_INFINITY || (ln_r < 0.0 && t + ln_r - (-ln_r.exp()).ln_1p() < acc.ln() + ln_tol) {
            break;
        }
        prev = t;
        if j - peak > MAX_SERIES_TERMS as u64 {
            return Err(Error::NoConvergence("Poisson mixture (upward)".into()));
        }
    }

    let mut prev = first;
    let mut j = peak;
    while j > 0 {
        j -= 1;
        let t = ln_term(j)?;
        acc.add(t);
        let ln_r = t - prev;
        if t == f64::NEG_INFINITY || (ln_r < 0.0 && t + ln_r - (-ln_r.exp()).ln_1p() < acc.ln() + ln_tol) {
            break;
        }
        prev = t;
        if peak - j > MAX_SERIES_TERMS as u64 {
            return Err(Error::NoConvergence("Poisson mixture (downward)".into()));
        }
    }
    Ok(Probability::from_log(acc.ln()))
}

/// Lower cdf `P(X <= x)` of a non-central Chi-square with `dof` degrees of
/// freedom and non-centrality `noncentrality`.
pub fn noncentral_chi2_cdf(x: f64, dof: u32, noncentrality: f64) -> Result<Probability> {
    check_chi2_args(x, dof, noncentrality)?;
    poisson_gamma_mixture(0.5 * dof as f64, 0.5 * x, 0.5 * noncentrality, Tail::Lower)
}

/// Upper tail `P(X > x)` of a non-central Chi-square.
pub fn noncentral_chi2_sf(x: f64, dof: u32, noncentrality: f64) -> Result<Probability> {
    check_chi2_args(x, dof, noncentrality)?;
    poisson_gamma_mixture(0.5 * dof as f64, 0.5 * x, 0.5 * noncentrality, Tail::Upper)
}

/// Generalized Marcum Q function `Q_order(a, b)`: the probability that a
/// non-central Chi-square with `2 order` degrees of freedom and non-centrality
/// `a^2` exceeds `b^2`.
pub fn marcum_q(order: u32, a: f64, b: f64) -> Result<Probability> {
    if order == 0 {
        return Err(Error::Domain("Marcum Q order must be at least 1".into()));
    }
    if !(a >= 0.0) || !(b >= 0.0) {
        return Err(Error::Domain(format!("Marcum Q arguments must be non-negative, got a={a}, b={b}")));
    }
    if b == 0.0 {
        return Ok(Probability::ONE);
    }
    noncentral_chi2_sf(b * b, 2 * order, a * a)
}

/// `1 - Q_order(a, b)`, summed directly so small values keep full precision.
pub fn marcum_q_complement(order: u32, a: f64, b: f64) -> Result<Probability> {
    if order == 0 {
        return Err(Error::Domain("Marcum Q order must be at least 1".into()));
    }
    if !(a >= 0.0) || !(b >= 0.0) {
        return Err(Error::Domain(format!("Marcum Q arguments must be non-negative, got a={a}, b={b}")));
    }
    noncentral_chi2_cdf(b * b, 2 * order, a * a)
}

/// Log density of a central Chi-square with `dof` (possibly fractional)
/// degrees of freedom.
fn ln_central_chi2_pdf(x: f64, dof: f64) -> f64 {
    let a = 0.5 * dof;
    if x == 0.0 {
        return if dof < 2.0 {
            f64::INFINITY
        } else if dof == 2.0 {
            -LN_2
        } else {
            f64::NEG_INFINITY
        };
    }
    (a / x).ln() + ln_gamma_prefactor(a, 0.5 * x)
}

/// Log density of the non-central Chi-square, summed as a Poisson mixture of
/// central densities (the expanded Bessel series) in the log domain.
pub fn noncentral_chi2_ln_pdf(x: f64, dof: u32, noncentrality: f64) -> Result<f64> {
    check_chi2_args(x, dof, noncentrality)?;
    let k = dof as f64;
    let mean = 0.5 * noncentrality;
    if mean == 0.0 || x == 0.0 {
        // At x = 0 only the j = 0 component can be non-zero.
        return Ok(ln_poisson(0, mean) + ln_central_chi2_pdf(x, k));
    }
    let ln_term = |j: u64| ln_poisson(j, mean) + ln_central_chi2_pdf(x, k + 2.0 * j as f64);
    let ln_tol = SERIES_TOL.ln();
    let mode = mean.floor() as u64;
    let mut acc = LogSum::new();
    let first = ln_term(mode);
    acc.add(first);

    // The terms are log-concave in j, so once they decrease the remainder is
    // bounded by a geometric series with the current ratio.
    for step in [1i64, -1] {
        let mut j = mode as i64;
        let mut prev = first;
        loop {
            j += step;
            if j < 0 {
                break;
            }
            let cur = ln_term(j as u64);
            acc.add(cur);
            let ln_ratio = cur - prev;
            if ln_ratio < 0.0 {
                let r = ln_ratio.exp();
                let bound = cur + (r / (1.0 - r)).ln();
                if bound < acc.ln() + ln_tol || cur == f64::NEG_INFINITY {
                    break;
                }
            }
            if (j - mode as i64).unsigned_abs() > MAX_SERIES_TERMS as u64 {
                return Err(Error::NoConvergence("non-central Chi-square density".into()));
            }
            prev = cur;
        }
    }
    Ok(acc.ln())
}

/// Non-central Chi-square density.
pub fn noncentral_chi2_pdf(x: f64, dof: u32, noncentrality: f64) -> Result<f64> {
    noncentral_chi2_ln_pdf(x, dof, noncentrality).map(f64::exp)
}
