//! Analytical symbol error rates: exact non-central Chi-square (I-ED) and
//! Gamma (A-ED) expressions, the Gaussian approximation with its
//! post-processing SNRs, Chernoff tails, the multi-level error floor, the
//! coherent matched-filter baseline, and averaging over Rayleigh fading.

use std::fmt::Write as _;

use crate::constellation::Constellation;
use crate::detector::{
    aed_gaussian_thresholds, coherent_thresholds, ied_gaussian_thresholds, GaussianMoments, ThresholdBasis,
    ThresholdSet,
};
use crate::error::{invalid, Error, Result};
use crate::quadrature::integrate_log_vec;
use crate::special::{
    gamma_tails, ln_gamma, noncentral_chi2_cdf, noncentral_chi2_sf, normal_tail_q, LogSum, Probability,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SerMethod {
    IedExactMarcumQ,
    IedGaussian,
    AedExactChi2,
    AedChernoff,
    CoherentExact,
    MonteCarlo,
}

impl SerMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            SerMethod::IedExactMarcumQ => "ied_exact_marcumq",
            SerMethod::IedGaussian => "ied_gaussian",
            SerMethod::AedExactChi2 => "aed_exact_chi2",
            SerMethod::AedChernoff => "aed_chernoff",
            SerMethod::CoherentExact => "coherent_exact",
            SerMethod::MonteCarlo => "monte_carlo",
        }
    }
}

/// Empirical confidence interval attached to a Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Confidence {
    pub lower: f64,
    pub upper: f64,
    pub errors: u64,
    pub trials: u64,
}

impl Confidence {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SerReport {
    pub per_symbol: Vec<Probability>,
    pub average: Probability,
    pub method: SerMethod,
    pub confidence: Option<Confidence>,
}

impl SerReport {
    /// Builds a report whose average is the prior-weighted sum of `per_symbol`.
    pub fn from_per_symbol(per_symbol: Vec<Probability>, priors: &[f64], method: SerMethod) -> Self {
        debug_assert_eq!(per_symbol.len(), priors.len());
        let mut acc = LogSum::new();
        for (pe, w) in per_symbol.iter().zip(priors) {
            acc.add(pe.log_value() + w.ln());
        }
        SerReport {
            per_symbol,
            average: Probability::from_log(acc.ln()),
            method,
            confidence: None,
        }
    }

    pub fn csv_header(symbols: usize) -> String {
        let mut s = String::from("method,M,snr_db");
        for p in 0..symbols {
            let _ = write!(s, ",ser_{p}");
        }
        s.push_str(",average,ci_halfwidth,trials");
        s
    }

    pub fn csv_row(&self, antennas: usize, snr_db: f64) -> String {
        let mut s = format!("{},{},{}", self.method.tag(), antennas, snr_db);
        for pe in &self.per_symbol {
            let _ = write!(s, ",{:e}", pe.value());
        }
        let _ = write!(s, ",{:e}", self.average.value());
        match &self.confidence {
            Some(c) => {
                let _ = write!(s, ",{:e},{}", c.half_width(), c.trials);
            }
            None => s.push_str(",,"),
        }
        s
    }
}

/// Post-processing SNRs per adjacent pair `(p, p+1)`: `gamma_u[p]` from the
/// upper tail of symbol `p`, `gamma_l[p]` from the lower tail of `p+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PostSnr {
    pub gamma_u: Vec<f64>,
    pub gamma_l: Vec<f64>,
}

fn check_thresholds(constellation: &Constellation, thresholds: &ThresholdSet) -> Result<()> {
    if thresholds.symbols() != constellation.len() {
        return invalid(format!(
            "{} thresholds given for {} symbols",
            thresholds.deltas().len(),
            constellation.len()
        ));
    }
    if thresholds.basis() == ThresholdBasis::CoherentAmplitude {
        return invalid("amplitude thresholds cannot be applied to an energy statistic");
    }
    Ok(())
}

fn check_params(energy: f64, noise_variance: f64, antennas: usize) -> Result<()> {
    if !(energy >= 0.0) || !energy.is_finite() {
        return invalid(format!("channel energy must be finite and non-negative, got {energy}"));
    }
    if !(noise_variance > 0.0) || !noise_variance.is_finite() {
        return invalid(format!("noise variance must be positive, got {noise_variance}"));
    }
    if antennas == 0 {
        return invalid("antenna count must be positive");
    }
    Ok(())
}

/// Per-symbol error probabilities from tail functions: symbol `p` is in error
/// when the statistic falls below `Δ_{p-1}` or at/above `Δ_p`.
/// `upper(p, Δ)` and `lower(p, Δ)` are only called with finite `Δ`.
fn per_symbol_errors<U, L>(deltas: &[f64], mut upper: U, mut lower: L) -> Result<Vec<Probability>>
where
    U: FnMut(usize, f64) -> Result<Probability>,
    L: FnMut(usize, f64) -> Result<Probability>,
{
    let symbols = deltas.len() + 1;
    let mut out = Vec::with_capacity(symbols);
    for p in 0..symbols {
        let up = match deltas.get(p) {
            None => Probability::ZERO,
            Some(&d) if d == f64::INFINITY => Probability::ZERO,
            Some(&d) if d == f64::NEG_INFINITY => Probability::ONE,
            Some(&d) => upper(p, d)?,
        };
        let low = match p.checked_sub(1).map(|k| deltas[k]) {
            None => Probability::ZERO,
            Some(d) if d == f64::NEG_INFINITY => Probability::ZERO,
            Some(d) if d == f64::INFINITY => Probability::ONE,
            Some(d) => lower(p, d)?,
        };
        out.push(up.plus(low));
    }
    Ok(out)
}

/// Exact SER of energy detection given the instantaneous channel energy:
/// `2Mz/σ_n²` is non-central Chi-square with `2M` degrees of freedom and
/// non-centrality `2M ς_h ε_p / σ_n²`, so each tail is a Marcum Q value.
pub fn ied_exact_ser(
    channel_energy: f64,
    noise_variance: f64,
    constellation: &Constellation,
    antennas: usize,
    thresholds: &ThresholdSet,
) -> Result<SerReport> {
    check_params(channel_energy, noise_variance, antennas)?;
    check_thresholds(constellation, thresholds)?;
    let scale = 2.0 * antennas as f64 / noise_variance;
    let dof = 2 * antennas as u32;
    let nc = |p: usize| scale * channel_energy * constellation.energy(p);
    let per_symbol = per_symbol_errors(
        thresholds.deltas(),
        |p, d| {
            if d <= 0.0 {
                Ok(Probability::ONE)
            } else {
                noncentral_chi2_sf(scale * d, dof, nc(p))
            }
        },
        |p, d| {
            if d <= 0.0 {
                Ok(Probability::ZERO)
            } else {
                noncentral_chi2_cdf(scale * d, dof, nc(p))
            }
        },
    )?;
    Ok(SerReport::from_per_symbol(per_symbol, constellation.priors(), SerMethod::IedExactMarcumQ))
}

/// SER under the Gaussian approximation of `z` given `ς_h`, together with
/// the post-processing SNRs of every adjacent pair.
pub fn ied_gaussian_ser(
    channel_energy: f64,
    noise_variance: f64,
    constellation: &Constellation,
    antennas: usize,
    thresholds: &ThresholdSet,
) -> Result<(SerReport, PostSnr)> {
    check_thresholds(constellation, thresholds)?;
    let mom = GaussianMoments::new(channel_energy, noise_variance, constellation, antennas)?;
    let per_symbol = per_symbol_errors(
        thresholds.deltas(),
        |p, d| Ok(normal_tail_q((d - mom.means[p]) / mom.std_dev(p))),
        |p, d| Ok(normal_tail_q((mom.means[p] - d) / mom.std_dev(p))),
    )?;
    let pairs = constellation.len() - 1;
    let mut gamma_u = Vec::with_capacity(pairs);
    let mut gamma_l = Vec::with_capacity(pairs);
    for (p, &d) in thresholds.deltas().iter().enumerate() {
        gamma_u.push(((d - mom.means[p]) / mom.std_dev(p)).powi(2));
        gamma_l.push(((d - mom.means[p + 1]) / mom.std_dev(p + 1)).powi(2));
    }
    Ok((
        SerReport::from_per_symbol(per_symbol, constellation.priors(), SerMethod::IedGaussian),
        PostSnr { gamma_u, gamma_l },
    ))
}

/// Exact SER with thresholds fixed independently of the data-phase channel
/// under Rayleigh fading: `z | ε_p ~ Gamma(M, (σ_h² ε_p + σ_n²)/M)`, so
/// `F_z(Δ|ε_p) = P(M, MΔ/(σ_h² ε_p + σ_n²))`.
pub fn aed_exact_ser(
    average_energy: f64,
    noise_variance: f64,
    constellation: &Constellation,
    antennas: usize,
    thresholds: &ThresholdSet,
) -> Result<SerReport> {
    check_params(average_energy, noise_variance, antennas)?;
    check_thresholds(constellation, thresholds)?;
    let m = antennas as f64;
    let spread = |p: usize| average_energy * constellation.energy(p) + noise_variance;
    let per_symbol = per_symbol_errors(
        thresholds.deltas(),
        |p, d| {
            if d <= 0.0 {
                Ok(Probability::ONE)
            } else {
                Ok(gamma_tails(m, m * d / spread(p))?.1)
            }
        },
        |p, d| {
            if d <= 0.0 {
                Ok(Probability::ZERO)
            } else {
                Ok(gamma_tails(m, m * d / spread(p))?.0)
            }
        },
    )?;
    Ok(SerReport::from_per_symbol(per_symbol, constellation.priors(), SerMethod::AedExactChi2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    Upper,
    Lower,
}

/// A Chernoff tail evaluated outside its regime (`δ^u <= 1` or `δ^l >= 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvalidTail {
    pub symbol: usize,
    pub tail: Tail,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChernoffReport {
    pub report: SerReport,
    pub invalid: Vec<InvalidTail>,
}

impl ChernoffReport {
    pub fn is_valid(&self) -> bool {
        self.invalid.is_empty()
    }
}

/// `ln((δ e^{1-δ})^M)`.
pub fn chernoff_ln_tail(delta: f64, antennas: usize) -> f64 {
    if delta <= 0.0 {
        return f64::NEG_INFINITY;
    }
    antennas as f64 * (delta.ln() + 1.0 - delta)
}

/// Chernoff approximations of the Gamma tails with
/// `δ_p^u = Δ_p/(σ_h²ε_p+σ_n²)` and `δ_p^l = Δ_{p-1}/(σ_h²ε_p+σ_n²)`.
/// Tails evaluated with the parameter on the wrong side of one are listed in
/// [`ChernoffReport::invalid`]; their values are still reported.
pub fn aed_chernoff_ser(
    average_energy: f64,
    noise_variance: f64,
    constellation: &Constellation,
    antennas: usize,
    thresholds: &ThresholdSet,
) -> Result<ChernoffReport> {
    check_params(average_energy, noise_variance, antennas)?;
    check_thresholds(constellation, thresholds)?;
    let spread = |p: usize| average_energy * constellation.energy(p) + noise_variance;
    let mut flagged = Vec::new();
    let per_symbol = {
        let flagged = std::cell::RefCell::new(&mut flagged);
        per_symbol_errors(
            thresholds.deltas(),
            |p, d| {
                let delta = d / spread(p);
                if delta <= 1.0 {
                    flagged.borrow_mut().push(InvalidTail { symbol: p, tail: Tail::Upper, delta });
                }
                Ok(if delta <= 0.0 {
                    Probability::ONE
                } else {
                    Probability::from_log(chernoff_ln_tail(delta, antennas))
                })
            },
            |p, d| {
                let delta = d / spread(p);
                if delta >= 1.0 {
                    flagged.borrow_mut().push(InvalidTail { symbol: p, tail: Tail::Lower, delta });
                }
                Ok(Probability::from_log(chernoff_ln_tail(delta, antennas)))
            },
        )?
    };
    Ok(ChernoffReport {
        report: SerReport::from_per_symbol(per_symbol, constellation.priors(), SerMethod::AedChernoff),
        invalid: flagged,
    })
}

/// Terms of the high-SNR floor, one pair per interior boundary
/// `p = 1..P-2`: the upper-tail term of symbol `p` and the lower-tail term of
/// symbol `p+1`, each already weighted by its prior. `η_p = sqrt(ε_{p+1}/ε_p)`.
pub fn pam_floor_terms(constellation: &Constellation, antennas: usize) -> Vec<(Probability, Probability)> {
    let e = constellation.energies();
    (1..e.len().saturating_sub(1))
        .map(|p| {
            let eta = (e[p + 1] / e[p]).sqrt();
            let upper = chernoff_ln_tail(eta, antennas) + constellation.prior(p).ln();
            let lower = chernoff_ln_tail(1.0 / eta, antennas) + constellation.prior(p + 1).ln();
            (Probability::from_log(upper), Probability::from_log(lower))
        })
        .collect()
}

/// SNR-independent error floor of average-energy detection for `P >= 3`.
/// Zero for two-level constellations.
pub fn pam_floor(constellation: &Constellation, antennas: usize) -> Probability {
    pam_floor_terms(constellation, antennas)
        .into_iter()
        .fold(Probability::ZERO, |acc, (u, l)| acc.plus(u).plus(l))
}

/// Exact SER of coherent matched-filter detection given `ς_h`: `Re(z_c)` is
/// Gaussian around `sqrt(ε_p)` with variance `σ_n²/(2Mς_h)`. Also returns the
/// post-processing SNR of each adjacent pair.
pub fn coherent_ser(
    channel_energy: f64,
    noise_variance: f64,
    constellation: &Constellation,
    antennas: usize,
) -> Result<(SerReport, Vec<f64>)> {
    check_params(channel_energy, noise_variance, antennas)?;
    if channel_energy == 0.0 {
        return Err(Error::Degenerate("zero-energy channel".into()));
    }
    let sd = (noise_variance / (2.0 * antennas as f64 * channel_energy)).sqrt();
    let t = coherent_thresholds(constellation);
    let a = constellation.amplitudes();
    let per_symbol = per_symbol_errors(
        t.deltas(),
        |p, d| Ok(normal_tail_q((d - a[p]) / sd)),
        |p, d| Ok(normal_tail_q((a[p] - d) / sd)),
    )?;
    let gamma = t.deltas().iter().enumerate().map(|(p, d)| ((d - a[p]) / sd).powi(2)).collect();
    Ok((
        SerReport::from_per_symbol(per_symbol, constellation.priors(), SerMethod::CoherentExact),
        gamma,
    ))
}

const AVERAGE_REL_TOL: f64 = 1e-8;

/// Averages a conditional SER over the Rayleigh law of the channel energy,
/// `ς_h ~ Gamma(M, σ_h²/M)`. The integral runs over `ln ς_h` so that the
/// deep-fade region dominating high-SNR error rates is resolved.
pub fn average_over_rayleigh<F>(
    average_energy: f64,
    antennas: usize,
    constellation: &Constellation,
    method: SerMethod,
    mut conditional: F,
) -> Result<SerReport>
where
    F: FnMut(f64) -> Result<SerReport>,
{
    if !(average_energy > 0.0) || !average_energy.is_finite() {
        return invalid(format!("average channel energy must be positive, got {average_energy}"));
    }
    if antennas == 0 {
        return invalid("antenna count must be positive");
    }
    let m = antennas as f64;
    let rate = m / average_energy;
    let ln_norm = m * rate.ln() - ln_gamma(m);
    let symbols = constellation.len();

    let center = average_energy.ln();
    let width = 1.0 / m.sqrt();
    let lo = center - 50.0;
    let hi = (average_energy * (1.0 + 10.0 * width + 40.0 / m)).ln();
    let mut grid: Vec<f64> = Vec::new();
    let mut u = lo;
    while u < hi {
        grid.push(u);
        u += 1.0;
    }
    grid.extend((-8..=8).map(|k| center + k as f64 * 0.5 * width).filter(|x| *x > lo && *x < hi));
    grid.push(hi);
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

    let mut failure: Option<Error> = None;
    let ln_integrals = integrate_log_vec(
        |u| {
            let s = u.exp();
            // Jacobian ds = s du folded into the (M-1) ln s term.
            let ln_pdf = ln_norm + m * u - rate * s;
            match conditional(s) {
                Ok(r) => r.per_symbol.iter().map(|pe| pe.log_value() + ln_pdf).collect(),
                // Deep fades where no boundary can be placed: count as errors.
                Err(Error::Degenerate(_)) => vec![ln_pdf; symbols],
                Err(e) => {
                    failure.get_or_insert(e);
                    vec![f64::NEG_INFINITY; symbols]
                }
            }
        },
        &grid,
        AVERAGE_REL_TOL,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let per_symbol = ln_integrals.into_iter().map(Probability::from_log).collect();
    Ok(SerReport::from_per_symbol(per_symbol, constellation.priors(), method))
}

/// Exact I-ED SER averaged over Rayleigh fading, with Gaussian-approximation
/// thresholds recomputed for every channel energy.
pub fn ied_exact_ser_rayleigh(
    average_energy: f64,
    noise_variance: f64,
    constellation: &Constellation,
    antennas: usize,
) -> Result<SerReport> {
    check_params(average_energy, noise_variance, antennas)?;
    average_over_rayleigh(average_energy, antennas, constellation, SerMethod::IedExactMarcumQ, |s| {
        let t = ied_gaussian_thresholds(s, noise_variance, constellation, antennas)?;
        ied_exact_ser(s, noise_variance, constellation, antennas, &t)
    })
}

/// Gaussian-approximation I-ED SER averaged over Rayleigh fading.
pub fn ied_gaussian_ser_rayleigh(
    average_energy: f64,
    noise_variance: f64,
    constellation: &Constellation,
    antennas: usize,
) -> Result<SerReport> {
    check_params(average_energy, noise_variance, antennas)?;
    average_over_rayleigh(average_energy, antennas, constellation, SerMethod::IedGaussian, |s| {
        let t = ied_gaussian_thresholds(s, noise_variance, constellation, antennas)?;
        Ok(ied_gaussian_ser(s, noise_variance, constellation, antennas, &t)?.0)
    })
}

/// Coherent matched-filter SER averaged over Rayleigh fading.
pub fn coherent_ser_rayleigh(
    average_energy: f64,
    noise_variance: f64,
    constellation: &Constellation,
    antennas: usize,
) -> Result<SerReport> {
    check_params(average_energy, noise_variance, antennas)?;
    average_over_rayleigh(average_energy, antennas, constellation, SerMethod::CoherentExact, |s| {
        Ok(coherent_ser(s, noise_variance, constellation, antennas)?.0)
    })
}

/// Comparison of I-ED and coherent post-processing SNRs at a given
/// instantaneous SNR `ρ_h = ς_h/σ_n²`.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub ied: PostSnr,
    pub coherent: Vec<f64>,
    pub max_relative_gap: f64,
    /// False below 30 dB, where the comparison is outside its asymptotic regime.
    pub asymptotic_regime: bool,
}

pub fn highsnr_coherent_equivalence_check(
    constellation: &Constellation,
    antennas: usize,
    snr: f64,
) -> Result<EquivalenceReport> {
    if !(snr > 0.0) || !snr.is_finite() {
        return invalid(format!("SNR must be positive, got {snr}"));
    }
    let noise_variance = 1.0 / snr;
    let t = ied_gaussian_thresholds(1.0, noise_variance, constellation, antennas)?;
    let (_, ied) = ied_gaussian_ser(1.0, noise_variance, constellation, antennas, &t)?;
    let (_, coherent) = coherent_ser(1.0, noise_variance, constellation, antennas)?;
    let max_relative_gap = ied
        .gamma_u
        .iter()
        .zip(&ied.gamma_l)
        .zip(&coherent)
        .flat_map(|((u, l), c)| [(u - c).abs() / c, (l - c).abs() / c])
        .fold(0.0, f64::max);
    Ok(EquivalenceReport {
        ied,
        coherent,
        max_relative_gap,
        asymptotic_regime: snr >= 1e3,
    })
}

fn least_squares_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "slope fit needs at least 3 usable points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all abscissae are equal".into()));
    }
    Ok(sxy / sxx)
}

/// Least-squares slope of `log10(SER)` against `x`. Non-positive or
/// non-finite SER values are skipped.
pub fn slope_fit(curve: &[(f64, f64)]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = curve
        .iter()
        .filter(|(x, y)| x.is_finite() && *y > 0.0 && y.is_finite())
        .map(|(x, y)| (*x, y.log10()))
        .collect();
    least_squares_slope(&pts)
}

/// [`slope_fit`] on log-domain probabilities, usable below `f64` underflow.
pub fn slope_fit_log(curve: &[(f64, Probability)]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = curve
        .iter()
        .filter(|(x, p)| x.is_finite() && p.log_value().is_finite())
        .map(|(x, p)| (*x, p.log10()))
        .collect();
    least_squares_slope(&pts)
}

/// Linear SNR from decibels.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Convenience: A-ED SER with Gaussian-approximation thresholds.
pub fn aed_gaussian_exact_ser(
    average_energy: f64,
    noise_variance: f64,
    constellation: &Constellation,
    antennas: usize,
) -> Result<SerReport> {
    let t = aed_gaussian_thresholds(average_energy, noise_variance, constellation, antennas)?;
    aed_exact_ser(average_energy, noise_variance, constellation, antennas, &t)
}
