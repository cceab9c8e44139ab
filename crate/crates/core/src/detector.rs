//! Detection thresholds on the collected energy and the symbol decision rule.
//!
//! Threshold families:
//! - Gaussian-approximation MAP thresholds (instantaneous energy `ς_h` for
//!   I-ED, average energy `σ_h²` for A-ED),
//! - Bayesian MAP thresholds from the Gamma law of `z` under Rayleigh fading,
//! - high-SNR closed forms,
//! - midpoint amplitude thresholds for the coherent matched-filter baseline,
//! - exact non-central Chi-square MAP thresholds (validation only).

use num_complex::Complex64;

use crate::channel::ChannelRealization;
use crate::constellation::Constellation;
use crate::error::{invalid, Error, Result};
use crate::special::noncentral_chi2_ln_pdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ThresholdBasis {
    IedGaussian,
    AedGaussian,
    AedBayesian,
    HighSnr,
    CoherentAmplitude,
    IedExact,
}

/// Decision boundaries `Δ_0 <= … <= Δ_{P-2}` on the received energy (or on
/// the matched-filter output for the coherent basis).
///
/// Boundaries are strictly increasing in every regular configuration. Equal
/// neighbours mean that the symbol between them has an empty decision region,
/// which happens for Gaussian-basis sets in deep fades; an infinite boundary
/// means a symbol is never (or always) preferred over its neighbour.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSet {
    deltas: Vec<f64>,
    basis: ThresholdBasis,
}

impl ThresholdSet {
    pub fn new(deltas: Vec<f64>, basis: ThresholdBasis) -> Result<Self> {
        if deltas.is_empty() {
            return invalid("a threshold set needs at least one boundary");
        }
        if deltas.iter().any(|d| d.is_nan()) {
            return invalid("threshold is NaN");
        }
        if deltas.windows(2).any(|w| w[1] < w[0]) {
            return invalid(format!("thresholds must be non-decreasing: {deltas:?}"));
        }
        Ok(ThresholdSet { deltas, basis })
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn basis(&self) -> ThresholdBasis {
        self.basis
    }

    /// Number of symbols `P` the set separates.
    pub fn symbols(&self) -> usize {
        self.deltas.len() + 1
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.deltas.iter().all(|d| d.is_finite()) && self.deltas.windows(2).all(|w| w[1] > w[0])
    }
}

/// Maps `z` to a symbol index: `0` below `Δ_0`, `p` on `[Δ_{p-1}, Δ_p)`, and
/// `P-1` at or above `Δ_{P-2}`. Ties go to the upper region.
pub fn decide(z: f64, thresholds: &ThresholdSet) -> usize {
    thresholds.deltas.partition_point(|&d| d <= z)
}

/// Per-symbol mean and variance of `z` under the Gaussian approximation:
/// `μ_p = ς ε_p + σ_n²`, `σ_p² = (σ_n²/M)(2 ς ε_p + σ_n²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl GaussianMoments {
    pub fn new(energy_basis: f64, noise_variance: f64, constellation: &Constellation, antennas: usize) -> Result<Self> {
        check_common(energy_basis, noise_variance, antennas)?;
        let m = antennas as f64;
        let means = constellation
            .energies()
            .iter()
            .map(|e| energy_basis * e + noise_variance)
            .collect();
        let variances = constellation
            .energies()
            .iter()
            .map(|e| noise_variance / m * (2.0 * energy_basis * e + noise_variance))
            .collect();
        Ok(GaussianMoments { means, variances })
    }

    pub fn std_dev(&self, p: usize) -> f64 {
        self.variances[p].sqrt()
    }
}

fn check_common(energy_basis: f64, noise_variance: f64, antennas: usize) -> Result<()> {
    if !(energy_basis >= 0.0) || !energy_basis.is_finite() {
        return invalid(format!("channel energy must be finite and non-negative, got {energy_basis}"));
    }
    if !(noise_variance > 0.0) || !noise_variance.is_finite() {
        return invalid(format!("noise variance must be positive, got {noise_variance}"));
    }
    if antennas == 0 {
        return invalid("antenna count must be positive");
    }
    Ok(())
}

/// Coefficients `[A, B, C]` of `D(z) = A z² + B z + C`, where `D(z)` is twice
/// the log posterior ratio of symbol `j` over symbol `i` under the Gaussian
/// approximation; `D > 0` favours `j`.
pub fn map_quadratic(mean_i: f64, var_i: f64, mean_j: f64, var_j: f64, ln_prior_ratio: f64) -> [f64; 3] {
    [
        1.0 / var_i - 1.0 / var_j,
        -2.0 * (mean_i / var_i - mean_j / var_j),
        mean_i * mean_i / var_i - mean_j * mean_j / var_j + (var_i / var_j).ln() + 2.0 * ln_prior_ratio,
    ]
}

fn eval_quadratic(c: &[f64; 3], z: f64) -> f64 {
    (c[0] * z + c[1]) * z + c[2]
}

/// Finds the point above which symbol `j` is preferred over symbol `i`
/// (`i < j`) for the Gaussian pair. Returns `-inf` when `j` always wins and
/// `+inf` when it never does.
fn gaussian_crossing(
    moments: &GaussianMoments,
    i: usize,
    j: usize,
    ln_prior_ratio: f64,
) -> Result<f64> {
    let (mi, vi, mj, vj) = (moments.means[i], moments.variances[i], moments.means[j], moments.variances[j]);
    let coef = map_quadratic(mi, vi, mj, vj, ln_prior_ratio);
    let [a, b, c] = coef;
    let scale = vi.sqrt().max(vj.sqrt());

    let candidate = if a.abs() <= 1e-14 * (1.0 / vi).max(1.0 / vj) {
        // Equal variances: the ratio is linear in z.
        if b.abs() <= 1e-300 {
            return if c > 0.0 {
                Ok(f64::NEG_INFINITY)
            } else if c < 0.0 {
                Ok(f64::INFINITY)
            } else {
                Err(Error::Degenerate(format!(
                    "symbols {i} and {j} have identical energy laws and priors"
                )))
            };
        }
        Some(-c / b)
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            // No crossing: the sign of D is the sign of A everywhere.
            return Ok(if a > 0.0 { f64::NEG_INFINITY } else { f64::INFINITY });
        }
        let q = -0.5 * (b + b.signum() * disc.sqrt());
        let (r1, r2) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        // The crossing where D turns positive: the larger root for a convex D,
        // the smaller one for a concave D.
        Some(if a > 0.0 { hi } else { lo })
    };

    let d = |z: f64| eval_quadratic(&coef, z);
    if let Some(r) = candidate {
        let h = 1e-9 * scale.max(r.abs() * 1e-3);
        if r.is_finite() && d(r - h) <= 0.0 && d(r + h) >= 0.0 {
            return Ok(r);
        }
    }
    // Closed form unusable (cancellation or exterior garbage): bisect the
    // log ratio between the means, widening the bracket if needed.
    let tol = 1e-12 * moments.means[0].min(scale).max(1e-300);
    let mut lo = mi;
    let mut hi = mj;
    for _ in 0..60 {
        if d(lo) <= 0.0 && d(hi) >= 0.0 {
            return Ok(bisect(d, lo, hi, tol));
        }
        let w = (hi - lo).max(scale);
        lo -= w;
        hi += w;
    }
    Err(Error::Degenerate(format!(
        "no decision boundary between symbols {i} and {j}"
    )))
}

/// Bisection for an increasing sign change `f(lo) <= 0 <= f(hi)`.
fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            return mid;
        }
        if f(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Turns pairwise crossings into a monotone boundary list. Symbols whose
/// region is empty are skipped and the crossing of their surviving
/// neighbours is used instead.
fn assemble<F>(symbols: usize, mut crossing: F) -> Result<Vec<f64>>
where
    F: FnMut(usize, usize) -> Result<f64>,
{
    // (symbol, lower boundary of its region)
    let mut stack: Vec<(usize, f64)> = vec![(0, f64::NEG_INFINITY)];
    for j in 1..symbols {
        loop {
            let &(i, lower) = stack.last().expect("stack never empty");
            let b = crossing(i, j)?;
            if b <= lower {
                stack.pop();
                if stack.is_empty() {
                    stack.push((j, f64::NEG_INFINITY));
                    break;
                }
                continue;
            }
            stack.push((j, b));
            break;
        }
    }
    let mut deltas = vec![f64::NEG_INFINITY; symbols - 1];
    for w in stack.windows(2) {
        let (from, _) = w[0];
        let (to, b) = w[1];
        for d in deltas.iter_mut().take(to).skip(from) {
            *d = b;
        }
    }
    // Symbols before the first survivor never win.
    let first = stack[0].0;
    for d in deltas.iter_mut().take(first) {
        *d = f64::NEG_INFINITY;
    }
    // Symbols after the last survivor never win either.
    let last = stack.last().expect("stack never empty").0;
    for d in deltas.iter_mut().skip(last) {
        *d = f64::INFINITY;
    }
    Ok(deltas)
}

fn gaussian_thresholds(
    energy_basis: f64,
    noise_variance: f64,
    constellation: &Constellation,
    antennas: usize,
    basis: ThresholdBasis,
) -> Result<ThresholdSet> {
    let moments = GaussianMoments::new(energy_basis, noise_variance, constellation, antennas)?;
    let priors = constellation.priors();
    let deltas = assemble(constellation.len(), |i, j| {
        gaussian_crossing(&moments, i, j, (priors[j] / priors[i]).ln())
    })?;
    ThresholdSet::new(deltas, basis)
}

/// MAP thresholds under the Gaussian approximation of `z` given the
/// instantaneous channel energy `ς_h`.
pub fn ied_gaussian_thresholds(
    channel_energy: f64,
    noise_variance: f64,
    constellation: &Constellation,
    antennas: usize,
) -> Result<ThresholdSet> {
    gaussian_thresholds(channel_energy, noise_variance, constellation, antennas, ThresholdBasis::IedGaussian)
}

/// Gaussian-approximation thresholds with `ς_h` replaced by the average
/// channel energy `σ_h²`.
pub fn aed_gaussian_thresholds(
    average_energy: f64,
    noise_variance: f64,
    constellation: &Constellation,
    antennas: usize,
) -> Result<ThresholdSet> {
    gaussian_thresholds(average_energy, noise_variance, constellation, antennas, ThresholdBasis::AedGaussian)
}

/// Boundary between the Gamma laws of `z` for symbols `i < j` under Rayleigh
/// fading (`z | ε ~ Gamma(M, (σ_h² ε + σ_n²)/M)`).
fn bayesian_crossing(
    average_energy: f64,
    noise_variance: f64,
    constellation: &Constellation,
    antennas: usize,
    i: usize,
    j: usize,
    with_priors: bool,
) -> Result<f64> {
    let si = average_energy * constellation.energy(i) + noise_variance;
    let sj = average_energy * constellation.energy(j) + noise_variance;
    let gap = average_energy * (constellation.energy(j) - constellation.energy(i));
    if !(gap > 0.0) {
        return invalid(format!("symbols {i} and {j} have equal received energy"));
    }
    let prior_term = if with_priors {
        (constellation.prior(i) / constellation.prior(j)).ln() / antennas as f64
    } else {
        0.0
    };
    Ok(((gap / si).ln_1p() + prior_term) * si * sj / gap)
}

/// Closed-form MAP thresholds for the Gamma-distributed energy under
/// Rayleigh fading, including the `(1/M) ln(p_p / p_{p+1})` prior term.
pub fn aed_bayesian_thresholds(
    average_energy: f64,
    noise_variance: f64,
    constellation: &Constellation,
    antennas: usize,
) -> Result<ThresholdSet> {
    check_common(average_energy, noise_variance, antennas)?;
    let deltas = assemble(constellation.len(), |i, j| {
        bayesian_crossing(average_energy, noise_variance, constellation, antennas, i, j, true)
    })?;
    ThresholdSet::new(deltas, ThresholdBasis::AedBayesian)
}

/// The large-`M` (prior-free) limit of [`aed_bayesian_thresholds`]; it depends
/// on the SNR only.
pub fn aed_bayesian_limit_thresholds(
    average_energy: f64,
    noise_variance: f64,
    constellation: &Constellation,
) -> Result<ThresholdSet> {
    check_common(average_energy, noise_variance, 1)?;
    let deltas = assemble(constellation.len(), |i, j| {
        bayesian_crossing(average_energy, noise_variance, constellation, 1, i, j, false)
    })?;
    ThresholdSet::new(deltas, ThresholdBasis::AedBayesian)
}

/// High-SNR closed forms: `Δ_0 = σ_n² sqrt(ε_1 ρ / 2)` when `ε_0 = 0`, and
/// `Δ_p = ς sqrt(ε_p ε_{p+1})` otherwise, with `ρ = ς / σ_n²`.
pub fn high_snr_thresholds(energy_basis: f64, noise_variance: f64, constellation: &Constellation) -> Result<ThresholdSet> {
    check_common(energy_basis, noise_variance, 1)?;
    let rho = energy_basis / noise_variance;
    let e = constellation.energies();
    let deltas = (0..e.len() - 1)
        .map(|p| {
            if p == 0 && e[0] == 0.0 {
                noise_variance * (e[1] * rho / 2.0).sqrt()
            } else {
                energy_basis * (e[p] * e[p + 1]).sqrt()
            }
        })
        .collect();
    ThresholdSet::new(deltas, ThresholdBasis::HighSnr)
}

/// MAP thresholds from the exact non-central Chi-square law of `z` given
/// `ς_h`, found by bisection of the log-likelihood ratio. Slow; meant as a
/// reference for the Gaussian-approximation thresholds.
pub fn ied_exact_thresholds(
    channel_energy: f64,
    noise_variance: f64,
    constellation: &Constellation,
    antennas: usize,
) -> Result<ThresholdSet> {
    let moments = GaussianMoments::new(channel_energy, noise_variance, constellation, antennas)?;
    let m = antennas as f64;
    let dof = 2 * antennas as u32;
    let to_x = 2.0 * m / noise_variance;
    let nc: Vec<f64> = constellation.energies().iter().map(|e| to_x * channel_energy * e).collect();
    let priors = constellation.priors();
    let deltas = assemble(constellation.len(), |i, j| {
        let ratio = |z: f64| -> f64 {
            let x = (to_x * z).max(0.0);
            let fj = noncentral_chi2_ln_pdf(x, dof, nc[j]).unwrap_or(f64::NEG_INFINITY);
            let fi = noncentral_chi2_ln_pdf(x, dof, nc[i]).unwrap_or(f64::NEG_INFINITY);
            priors[j].ln() + fj - priors[i].ln() - fi
        };
        let scale = moments.std_dev(j).max(moments.std_dev(i));
        let mut lo = moments.means[i];
        let mut hi = moments.means[j];
        for _ in 0..60 {
            if ratio(lo) <= 0.0 && ratio(hi) >= 0.0 {
                return Ok(bisect(ratio, lo, hi, 1e-12 * noise_variance));
            }
            let w = (hi - lo).max(scale);
            lo = (lo - w).max(0.0);
            hi += w;
        }
        Err(Error::Degenerate(format!("no exact MAP boundary between symbols {i} and {j}")))
    })?;
    ThresholdSet::new(deltas, ThresholdBasis::IedExact)
}

/// Midpoints between adjacent amplitudes, used on `Re(z_c)`.
pub fn coherent_thresholds(constellation: &Constellation) -> ThresholdSet {
    let a = constellation.amplitudes();
    let deltas = a.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    ThresholdSet::new(deltas, ThresholdBasis::CoherentAmplitude).expect("amplitudes are increasing")
}

/// Matched-filter output `z_c = hᴴ y / ‖h‖²`.
pub fn matched_filter(y: &[Complex64], h: &[Complex64]) -> Result<Complex64> {
    let norm: f64 = h.iter().map(|x| x.norm_sqr()).sum();
    if !(norm > 0.0) {
        return Err(Error::Degenerate("zero-energy channel".into()));
    }
    let s: Complex64 = h.iter().zip(y).map(|(hi, yi)| hi.conj() * yi).sum();
    Ok(s / norm)
}

/// Coherent detection: matched filtering followed by midpoint decisions on
/// the real part.
pub fn coherent_detect(y: &[Complex64], h: &ChannelRealization, constellation: &Constellation) -> Result<usize> {
    if y.len() != h.antennas() {
        return invalid("sample and channel lengths differ");
    }
    let zc = matched_filter(y, h.coefficients())?;
    Ok(decide(zc.re, &coherent_thresholds(constellation)))
}
