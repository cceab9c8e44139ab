//! Monte Carlo trial engine.
//!
//! One trial draws a symbol from the priors, a channel realization and the
//! receiver noise, collects the energy once and applies every requested
//! detector to the same samples. Each trial owns a counter-based random
//! stream, and error counts are integers, so results do not depend on how
//! the trials are split across workers.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::channel::{complex_gaussian, ChannelKind, ChannelModel, LineOfSight, SparseModel};
use crate::constellation::Constellation;
use crate::detector::{
    aed_bayesian_thresholds, aed_gaussian_thresholds, coherent_thresholds, decide, ied_gaussian_thresholds,
    ThresholdSet,
};
use crate::error::{invalid, Result};
use crate::rng::trial_rng;
use crate::ser::{
    aed_chernoff_ser, aed_exact_ser, coherent_ser_rayleigh, db_to_linear, ied_exact_ser_rayleigh,
    ied_gaussian_ser_rayleigh, Confidence, SerMethod, SerReport,
};
use crate::special::Probability;

/// z-value of the two-sided 95% interval.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectorKind {
    /// Matched filter with perfect channel knowledge.
    Coherent,
    /// Energy detection with Gaussian-approximation thresholds built from the
    /// instantaneous channel energy of each realization.
    Ied,
    /// Energy detection with Gaussian-approximation thresholds built from the
    /// average channel energy.
    AedGaussian,
    /// Energy detection with Bayesian thresholds built from the average
    /// channel energy.
    AedBayesian,
}

impl DetectorKind {
    pub fn name(&self) -> &'static str {
        match self {
            DetectorKind::Coherent => "coherent",
            DetectorKind::Ied => "ied",
            DetectorKind::AedGaussian => "aed_gaussian",
            DetectorKind::AedBayesian => "aed_bayesian",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "coherent" => Some(DetectorKind::Coherent),
            "ied" => Some(DetectorKind::Ied),
            "aed_gaussian" => Some(DetectorKind::AedGaussian),
            "aed_bayesian" => Some(DetectorKind::AedBayesian),
            _ => None,
        }
    }

    /// Whether the detector reads the data-phase channel realization.
    pub fn needs_channel_state(&self) -> bool {
        matches!(self, DetectorKind::Coherent | DetectorKind::Ied)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// The receiver knows the current channel realization (coherent and
    /// instantaneous-energy detectors are allowed).
    SlowFading,
    /// Fresh channel per symbol; only average-energy detectors are allowed.
    FastFading,
}

/// Channel family without the antenna count, which is a sweep axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelSpec {
    Rayleigh { variance: f64 },
    Sparse(SparseModel),
}

impl ChannelSpec {
    pub fn model(&self, antennas: usize) -> Result<ChannelModel> {
        match self {
            ChannelSpec::Rayleigh { variance } => ChannelModel::rayleigh(antennas, *variance),
            ChannelSpec::Sparse(s) => ChannelModel::sparse(antennas, *s),
        }
    }

    /// Whether the Rayleigh analytic results describe this channel, which holds
    /// for Rayleigh fading and for scattered-only sparse channels with as many
    /// equal-power paths as antennas.
    pub fn rayleigh_equivalent(&self, antennas: usize) -> bool {
        match self {
            ChannelSpec::Rayleigh { .. } => true,
            ChannelSpec::Sparse(s) => {
                s.los == LineOfSight::None
                    && s.paths == antennas
                    && matches!(s.profile, crate::channel::PowerProfile::Equal)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub constellation: Constellation,
    pub channel: ChannelSpec,
    pub detectors: Vec<DetectorKind>,
    pub regime: Regime,
    /// Antenna counts; the sweep grid is `antennas × snr_db`.
    pub antennas: Vec<usize>,
    /// Average SNR `σ_h²/σ_n²` in dB.
    pub snr_db: Vec<f64>,
    pub trials: u64,
    pub seed: u64,
    /// Offset added to the point index to form the random stream id, so that
    /// several scenarios sharing a seed draw from disjoint streams.
    pub stream_base: u64,
    /// Co-compute analytic curves where formulas exist.
    pub analytic: bool,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return invalid("trial count must be positive");
        }
        if self.detectors.is_empty() {
            return invalid("at least one detector is required");
        }
        if self.antennas.is_empty() || self.snr_db.is_empty() {
            return invalid("sweep axes must be non-empty");
        }
        if self.antennas.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("antenna counts must be strictly increasing");
        }
        if self.snr_db.windows(2).any(|w| !(w[1] > w[0])) || self.snr_db.iter().any(|s| !s.is_finite()) {
            return invalid("SNR values must be finite and strictly increasing");
        }
        if self.regime == Regime::FastFading {
            if let Some(d) = self.detectors.iter().find(|d| d.needs_channel_state()) {
                return invalid(format!(
                    "detector '{}' needs the channel realization, which fast fading does not expose",
                    d.name()
                ));
            }
        }
        for &m in &self.antennas {
            self.channel.model(m)?;
        }
        Ok(())
    }

    pub fn points(&self) -> usize {
        self.antennas.len() * self.snr_db.len()
    }

    /// `(antennas, snr_db)` of sweep point `index` (antenna-major order).
    pub fn point(&self, index: usize) -> (usize, f64) {
        let n = self.snr_db.len();
        (self.antennas[index / n], self.snr_db[index % n])
    }
}

/// Wilson score interval for `errors` out of `trials` at normal quantile `z`.
pub fn wilson_interval(errors: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lower = if errors == 0 { 0.0 } else { (center - half).max(0.0) };
    let upper = if errors == trials { 1.0 } else { (center + half).min(1.0) };
    (lower, upper)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Counts {
    /// Transmissions of each symbol.
    pub sent: Vec<u64>,
    /// Detection errors per transmitted symbol.
    pub errors: Vec<u64>,
}

impl Counts {
    fn new(symbols: usize) -> Self {
        Counts {
            sent: vec![0; symbols],
            errors: vec![0; symbols],
        }
    }

    fn merge(mut self, other: &Counts) -> Self {
        for (a, b) in self.sent.iter_mut().zip(&other.sent) {
            *a += b;
        }
        for (a, b) in self.errors.iter_mut().zip(&other.errors) {
            *a += b;
        }
        self
    }

    pub fn trials(&self) -> u64 {
        self.sent.iter().sum()
    }

    pub fn total_errors(&self) -> u64 {
        self.errors.iter().sum()
    }

    /// Empirical report with a 95% Wilson interval on the average.
    pub fn report(&self) -> SerReport {
        let trials = self.trials();
        let errors = self.total_errors();
        let per_symbol = self
            .sent
            .iter()
            .zip(&self.errors)
            .map(|(&n, &e)| if n == 0 { Probability::ZERO } else { Probability::from_value(e as f64 / n as f64) })
            .collect();
        let (lower, upper) = wilson_interval(errors, trials, Z_95);
        SerReport {
            per_symbol,
            average: Probability::from_value(errors as f64 / trials as f64),
            method: SerMethod::MonteCarlo,
            confidence: Some(Confidence {
                lower,
                upper,
                errors,
                trials,
            }),
        }
    }
}

/// Raw per-detector counts of one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCounts {
    pub detectors: Vec<(DetectorKind, Counts)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    /// `"<detector>_<source>"`, e.g. `aed_gaussian_mc` or `ied_exact`.
    pub name: String,
    pub report: SerReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub antennas: usize,
    pub snr_db: f64,
    pub curves: Vec<Curve>,
}

impl PointResult {
    pub fn curve(&self, name: &str) -> Option<&SerReport> {
        self.curves.iter().find(|c| c.name == name).map(|c| &c.report)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub points: Vec<PointResult>,
}

/// Everything a worker needs for one sweep point, fixed before any draw.
struct PointSetup {
    antennas: usize,
    noise_variance: f64,
    sampler: crate::channel::ChannelSampler,
    cumulative_priors: Vec<f64>,
    amplitudes: Vec<f64>,
    /// Thresholds that do not depend on the realization, per detector.
    fixed: Vec<(DetectorKind, Option<ThresholdSet>)>,
}

fn setup(scenario: &Scenario, index: usize) -> Result<PointSetup> {
    let (antennas, snr_db) = scenario.point(index);
    let model = scenario.channel.model(antennas)?;
    let average = model.average_energy();
    let noise_variance = average / db_to_linear(snr_db);
    let c = &scenario.constellation;
    let mut fixed = Vec::new();
    for &d in &scenario.detectors {
        let t = match d {
            DetectorKind::Coherent => Some(coherent_thresholds(c)),
            DetectorKind::Ied => None,
            DetectorKind::AedGaussian => Some(aed_gaussian_thresholds(average, noise_variance, c, antennas)?),
            DetectorKind::AedBayesian => Some(aed_bayesian_thresholds(average, noise_variance, c, antennas)?),
        };
        fixed.push((d, t));
    }
    let mut acc = 0.0;
    let mut cumulative_priors: Vec<f64> = c
        .priors()
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    *cumulative_priors.last_mut().expect("non-empty") = f64::INFINITY;
    Ok(PointSetup {
        antennas,
        noise_variance,
        sampler: model.sampler(),
        cumulative_priors,
        amplitudes: c.amplitudes(),
        fixed,
    })
}

fn run_trials(scenario: &Scenario, index: usize, s: &PointSetup, range: std::ops::Range<u64>) -> Vec<Counts> {
    let symbols = scenario.constellation.len();
    let m = s.antennas;
    let mut counts = vec![Counts::new(symbols); s.fixed.len()];
    let mut h = vec![Complex64::new(0.0, 0.0); m];
    let mut y = vec![Complex64::new(0.0, 0.0); m];
    for trial in range {
        let mut rng = trial_rng(scenario.seed, scenario.stream_base + index as u64, trial);
        let u: f64 = rng.random();
        let sym = s.cumulative_priors.partition_point(|&c| c <= u);
        s.sampler.draw_into(&mut rng, &mut h);
        let amp = s.amplitudes[sym];
        for (yi, hi) in y.iter_mut().zip(&h) {
            *yi = hi * amp + complex_gaussian(&mut rng, s.noise_variance);
        }
        let z = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / m as f64;
        let mut channel_energy = None;
        for (k, (d, t)) in s.fixed.iter().enumerate() {
            let decided = match d {
                DetectorKind::Coherent => {
                    let norm: f64 = h.iter().map(|x| x.norm_sqr()).sum();
                    let zc: Complex64 = h.iter().zip(&y).map(|(a, b)| a.conj() * b).sum::<Complex64>() / norm;
                    decide(zc.re, t.as_ref().expect("fixed thresholds"))
                }
                DetectorKind::Ied => {
                    let e = *channel_energy.get_or_insert_with(|| h.iter().map(|x| x.norm_sqr()).sum::<f64>() / m as f64);
                    match ied_gaussian_thresholds(e, s.noise_variance, &scenario.constellation, m) {
                        Ok(t) => decide(z, &t),
                        // No boundary can be placed (all symbols collapse onto
                        // the noise law): the receiver guesses the first symbol.
                        Err(_) => 0,
                    }
                }
                DetectorKind::AedGaussian | DetectorKind::AedBayesian => decide(z, t.as_ref().expect("fixed thresholds")),
            };
            counts[k].sent[sym] += 1;
            if decided != sym {
                counts[k].errors[sym] += 1;
            }
        }
    }
    counts
}

/// Raw error counts for sweep point `index`, with the trials split into
/// `shard_count` contiguous shards processed in parallel.
pub fn run_point_counts(scenario: &Scenario, index: usize, shard_count: usize) -> Result<PointCounts> {
    scenario.validate()?;
    if index >= scenario.points() {
        return invalid(format!("point index {index} out of range"));
    }
    let s = setup(scenario, index)?;
    let shards = shard_count.max(1) as u64;
    let n = scenario.trials;
    let symbols = scenario.constellation.len();
    let zero = vec![Counts::new(symbols); s.fixed.len()];
    let total = (0..shards)
        .into_par_iter()
        .map(|k| run_trials(scenario, index, &s, (n * k / shards)..(n * (k + 1) / shards)))
        .reduce(
            || zero.clone(),
            |a, b| a.into_iter().zip(&b).map(|(x, y)| x.merge(y)).collect(),
        );
    Ok(PointCounts {
        detectors: s.fixed.iter().map(|(d, _)| *d).zip(total).collect(),
    })
}

/// Monte Carlo reports for every detector of the scenario at point `index`.
pub fn run_point(scenario: &Scenario, index: usize, shard_count: usize) -> Result<Vec<(DetectorKind, SerReport)>> {
    Ok(run_point_counts(scenario, index, shard_count)?
        .detectors
        .into_iter()
        .map(|(d, c)| (d, c.report()))
        .collect())
}

/// Analytic curves for a detector at one point, where formulas exist.
pub fn analytic_curves(scenario: &Scenario, index: usize, detector: DetectorKind) -> Result<Vec<Curve>> {
    let (m, snr_db) = scenario.point(index);
    if !scenario.channel.rayleigh_equivalent(m) {
        return Ok(Vec::new());
    }
    let average = scenario.channel.model(m)?.average_energy();
    let noise = average / db_to_linear(snr_db);
    let c = &scenario.constellation;
    let name = |suffix: &str| format!("{}_{suffix}", detector.name());
    Ok(match detector {
        DetectorKind::Coherent => vec![Curve {
            name: name("exact"),
            report: coherent_ser_rayleigh(average, noise, c, m)?,
        }],
        DetectorKind::Ied => vec![
            Curve {
                name: name("exact"),
                report: ied_exact_ser_rayleigh(average, noise, c, m)?,
            },
            Curve {
                name: name("gaussian"),
                report: ied_gaussian_ser_rayleigh(average, noise, c, m)?,
            },
        ],
        DetectorKind::AedGaussian | DetectorKind::AedBayesian => {
            let t = if detector == DetectorKind::AedGaussian {
                aed_gaussian_thresholds(average, noise, c, m)?
            } else {
                aed_bayesian_thresholds(average, noise, c, m)?
            };
            vec![
                Curve {
                    name: name("exact"),
                    report: aed_exact_ser(average, noise, c, m, &t)?,
                },
                Curve {
                    name: name("chernoff"),
                    report: aed_chernoff_ser(average, noise, c, m, &t)?.report,
                },
            ]
        }
    })
}

/// Runs every sweep point; analytic overlays are added when requested.
pub fn run_sweep(scenario: &Scenario, shard_count: usize) -> Result<SweepResult> {
    scenario.validate()?;
    let mut points = Vec::with_capacity(scenario.points());
    for index in 0..scenario.points() {
        let (antennas, snr_db) = scenario.point(index);
        let mut curves: Vec<Curve> = run_point(scenario, index, shard_count)?
            .into_iter()
            .map(|(d, r)| Curve {
                name: format!("{}_mc", d.name()),
                report: r,
            })
            .collect();
        if scenario.analytic {
            for &d in &scenario.detectors {
                curves.extend(analytic_curves(scenario, index, d)?);
            }
        }
        points.push(PointResult {
            antennas,
            snr_db,
            curves,
        });
    }
    Ok(SweepResult { points })
}

/// Default shard count: a few shards per worker thread.
pub fn default_shards() -> usize {
    4 * rayon::current_num_threads()
}

/// Channel kind of a scenario at a given antenna count (for reporting).
pub fn channel_kind(scenario: &Scenario, antennas: usize) -> Result<ChannelKind> {
    Ok(*scenario.channel.model(antennas)?.kind())
}
