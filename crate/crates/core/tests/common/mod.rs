//! Reference computations for tests, written independently of the library:
//! Gauss–Legendre quadrature, a Stirling log-gamma, Miller backward
//! recurrence for modified Bessel functions, and densities built from them.
#![allow(dead_code)]

use std::f64::consts::PI;

/// Gauss–Legendre rule on [-1, 1], nodes by Newton iteration.
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for i in 0..n {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre(n, x);
            nodes.push(x);
            weights.push(2.0 / ((1.0 - x * x) * dp * dp));
        }
        GaussLegendre { nodes, weights }
    }

    pub fn apply(&self, f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(c + h * x)).sum::<f64>() * h
    }
}

fn adapt(rule: &GaussLegendre, f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, abs_tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let left = rule.apply(f, a, m);
    let right = rule.apply(f, m, b);
    let both = left + right;
    if depth == 0 || (both - whole).abs() <= abs_tol.max(1e-14 * both.abs()) {
        return both;
    }
    adapt(rule, f, a, m, left, abs_tol, depth - 1) + adapt(rule, f, m, b, right, abs_tol, depth - 1)
}

/// `ln ∫_a^b exp(ln_f(t)) dt` by adaptive 20-point Gauss–Legendre with
/// interval halving. The integrand is rescaled by its largest sampled value
/// so that results far below the double range keep full relative accuracy.
/// `breaks` are interior points where the integrand changes character.
pub fn ln_integral(ln_f: &dyn Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64]) -> f64 {
    assert!(b > a);
    let mut cuts = vec![a];
    cuts.extend(breaks.iter().copied().filter(|&t| t > a && t < b));
    cuts.push(b);
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let samples = 400;
    let mut shift = f64::NEG_INFINITY;
    for w in cuts.windows(2) {
        for i in 0..=samples {
            let t = w[0] + (w[1] - w[0]) * (i as f64 + 0.5) / (samples as f64 + 1.0);
            shift = shift.max(ln_f(t));
        }
    }
    if shift == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let f = |t: f64| (ln_f(t) - shift).exp();
    let rule = GaussLegendre::new(20);
    // Absolute tolerance relative to a coarse estimate of the total.
    let coarse: f64 = cuts.windows(2).map(|w| rule.apply(&f, w[0], w[1])).sum::<f64>().abs();
    let pieces = 32;
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let h = (w[1] - w[0]) / pieces as f64;
        for k in 0..pieces {
            let (lo, hi) = (w[0] + k as f64 * h, w[0] + (k + 1) as f64 * h);
            let whole = rule.apply(&f, lo, hi);
            total += adapt(&rule, &f, lo, hi, whole, 1e-16 * coarse.max(f64::MIN_POSITIVE), 30);
        }
    }
    total.ln() + shift
}

/// Plain (non-log) adaptive integral, for smooth integrands of moderate size.
pub fn integral(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let rule = GaussLegendre::new(20);
    let whole = rule.apply(f, a, b);
    adapt(&rule, f, a, b, whole, 1e-15 * whole.abs().max(1e-300), 30)
}

/// `ln Γ(x)` for `x > 0`: shift to `x ≥ 20` with the recurrence, then the
/// Stirling series.
pub fn ln_gamma(x: f64) -> f64 {
    assert!(x > 0.0);
    let mut shift = 0.0;
    let mut y = x;
    while y < 20.0 {
        shift += y.ln();
        y += 1.0;
    }
    let inv = 1.0 / y;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0
            - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0 - inv2 * (1.0 / 1188.0)))));
    (y - 0.5) * y.ln() - y + 0.5 * (2.0 * PI).ln() + series - shift
}

/// `ln I_n(z)` for integer order `n` and `z > 0` by Miller's backward
/// recurrence, normalized with `e^z = I_0(z) + 2 Σ_{k≥1} I_k(z)`.
pub fn ln_bessel_i(n: usize, z: f64) -> f64 {
    assert!(z > 0.0);
    let start = n + z.ceil() as usize + 40 + (12.0 * z.sqrt()).ceil() as usize;
    const BIG: f64 = 1e250;
    let (mut above, mut cur) = (0.0f64, 1e-280f64);
    let mut sum = 0.0f64;
    let mut saved = if start == n { cur } else { 0.0 };
    let mut ln_rescale_since_saved = 0.0;
    for k in (1..=start).rev() {
        // I_{k-1} = I_{k+1} + (2k/z) I_k
        let below = above + 2.0 * k as f64 / z * cur;
        sum += 2.0 * cur;
        above = cur;
        cur = below;
        if k - 1 == n {
            saved = cur;
            ln_rescale_since_saved = 0.0;
        }
        if cur > BIG {
            above /= BIG;
            cur /= BIG;
            sum /= BIG;
            ln_rescale_since_saved -= BIG.ln();
        }
    }
    sum += cur;
    // Logs of the two tiny magnitudes would cancel to ~1e-14; take the ratio
    // first unless it underflows.
    let ratio = saved / sum;
    let ln_ratio = if ratio > 1e-300 { ratio.ln() } else { saved.ln() - sum.ln() };
    ln_ratio + ln_rescale_since_saved + z
}

/// Log density of the non-central Chi-square with `dof` degrees of freedom
/// (even) and non-centrality `lambda > 0`, from the Bessel form.
pub fn ln_ncx2_pdf(x: f64, dof: u32, lambda: f64) -> f64 {
    assert!(dof % 2 == 0 && lambda > 0.0 && x > 0.0);
    let k = dof as f64;
    -(2f64.ln()) - 0.5 * (x + lambda) + (0.25 * k - 0.5) * (x / lambda).ln()
        + ln_bessel_i((dof / 2 - 1) as usize, (lambda * x).sqrt())
}

/// `(ln P(X ≤ x), ln P(X > x))` for the non-central Chi-square by direct
/// integration of its density.
pub fn ln_ncx2_tails(x: f64, dof: u32, lambda: f64) -> (f64, f64) {
    let k = dof as f64;
    let mean = k + lambda;
    let sd = (2.0 * (k + 2.0 * lambda)).sqrt();
    let top = x.max(mean) + 60.0 * sd + 200.0;
    let f = |t: f64| ln_ncx2_pdf(t, dof, lambda);
    let lower = ln_integral(&f, 0.0, x, &[mean - sd, mean, mean + sd]);
    let upper = ln_integral(&f, x, top, &[mean, mean + sd, mean + 5.0 * sd]);
    (lower, upper)
}

/// Log density of Gamma(shape, scale).
pub fn ln_gamma_pdf(t: f64, shape: f64, scale: f64) -> f64 {
    (shape - 1.0) * t.ln() - t / scale - ln_gamma(shape) - shape * scale.ln()
}

/// `(ln P(X ≤ x), ln P(X > x))` for Gamma(shape, scale) by direct
/// integration of its density.
pub fn ln_gamma_tails(x: f64, shape: f64, scale: f64) -> (f64, f64) {
    let mode = (shape - 1.0).max(0.0) * scale;
    let sd = shape.sqrt() * scale;
    let top = x.max(shape * scale) + (60.0 * shape.sqrt() + 200.0) * scale;
    let f = |t: f64| ln_gamma_pdf(t, shape, scale);
    let lower = if x > 0.0 {
        ln_integral(&f, 0.0, x, &[mode - sd, mode, mode + sd])
    } else {
        f64::NEG_INFINITY
    };
    let upper = ln_integral(&f, x.max(0.0), top, &[mode, mode + sd, mode + 5.0 * sd]);
    (lower, upper)
}

/// Relative difference of two log values, i.e. `|a/b - 1|` for `a = e^la`.
pub fn log_rel(la: f64, lb: f64) -> f64 {
    if la == lb {
        0.0
    } else {
        (la - lb).exp_m1().abs()
    }
}
