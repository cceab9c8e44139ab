//! Channel realizations, noise and the energy-collection front end.
//!
//! Two channel families are provided: i.i.d. Rayleigh fading and a sparse
//! multipath model built from uniform-linear-array steering vectors
//! (half-wavelength spacing) with an optional line-of-sight path.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};

/// Upper bound on the sparse path count, as a multiple of the antenna count.
pub const MAX_PATHS_PER_ANTENNA: usize = 4;

/// Draws a circular complex Gaussian `CN(0, variance)`.
#[inline]
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// One realization of the `M` complex channel gains.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    coefficients: Vec<Complex64>,
}

impl ChannelRealization {
    pub fn new(coefficients: Vec<Complex64>) -> Result<Self> {
        if coefficients.is_empty() {
            return invalid("a channel needs at least one antenna");
        }
        if coefficients.iter().any(|h| !h.re.is_finite() || !h.im.is_finite()) {
            return invalid("channel coefficients must be finite");
        }
        Ok(ChannelRealization { coefficients })
    }

    pub fn antennas(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    /// `‖h‖²`.
    pub fn norm_sqr(&self) -> f64 {
        self.coefficients.iter().map(|h| h.norm_sqr()).sum()
    }

    /// Instantaneous channel energy `ς_h = ‖h‖² / M`.
    pub fn energy(&self) -> f64 {
        self.norm_sqr() / self.antennas() as f64
    }
}

/// Relative power of the scattered paths before normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PowerProfile {
    Equal,
    /// Path `l` (0-based) gets weight `exp(-rate * l)`.
    ExponentialDecay { rate: f64 },
}

/// Line-of-sight component of the sparse model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LineOfSight {
    /// No deterministic path; every path is scattered.
    None,
    /// Fixed positive LOS gain set by the Rician factor `β_0² / Σ σ²_l`, arriving
    /// from directional cosine `cosine`.
    Rician { factor_db: f64, cosine: f64 },
}

/// Sparse multipath description.
///
/// `paths` counts all resolvable paths. Without LOS all of them are scattered;
/// with LOS one of them is the deterministic component and `paths - 1` are
/// scattered. Scattered paths arrive at directional cosines on the midpoint
/// grid `-1 + (2l + 1)/n`, which makes their steering vectors exactly
/// orthogonal when `n = M` and asymptotically orthogonal otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseModel {
    pub paths: usize,
    pub los: LineOfSight,
    pub profile: PowerProfile,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelKind {
    /// i.i.d. `CN(0, variance)` entries.
    Rayleigh { variance: f64 },
    Sparse(SparseModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    antennas: usize,
    kind: ChannelKind,
}

impl ChannelModel {
    pub fn rayleigh(antennas: usize, variance: f64) -> Result<Self> {
        if antennas == 0 {
            return invalid("antenna count must be positive");
        }
        if !(variance > 0.0) || !variance.is_finite() {
            return invalid(format!("channel variance must be positive, got {variance}"));
        }
        Ok(ChannelModel {
            antennas,
            kind: ChannelKind::Rayleigh { variance },
        })
    }

    pub fn sparse(antennas: usize, model: SparseModel) -> Result<Self> {
        if antennas == 0 {
            return invalid("antenna count must be positive");
        }
        if model.paths == 0 {
            return invalid("sparse channel needs at least one path");
        }
        if model.paths > MAX_PATHS_PER_ANTENNA * antennas {
            return invalid(format!(
                "{} paths exceed the cap of {} per antenna",
                model.paths, MAX_PATHS_PER_ANTENNA
            ));
        }
        if let LineOfSight::Rician { factor_db, cosine } = model.los {
            if model.paths < 2 {
                return invalid("a Rician channel needs at least one scattered path besides LOS");
            }
            if !factor_db.is_finite() || !(-1.0..=1.0).contains(&cosine) {
                return invalid("Rician factor must be finite and the LOS cosine in [-1, 1]");
            }
        }
        if let PowerProfile::ExponentialDecay { rate } = model.profile {
            if !(rate >= 0.0) || !rate.is_finite() {
                return invalid("decay rate must be finite and non-negative");
            }
        }
        Ok(ChannelModel {
            antennas,
            kind: ChannelKind::Sparse(model),
        })
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn kind(&self) -> &ChannelKind {
        &self.kind
    }

    /// Average channel energy `σ_h² = E[ς_h]`. Sparse channels are normalized
    /// to unit power.
    pub fn average_energy(&self) -> f64 {
        match self.kind {
            ChannelKind::Rayleigh { variance } => variance,
            ChannelKind::Sparse(_) => 1.0,
        }
    }

    /// Same model with a different antenna count.
    pub fn with_antennas(&self, antennas: usize) -> Result<Self> {
        match self.kind {
            ChannelKind::Rayleigh { variance } => ChannelModel::rayleigh(antennas, variance),
            ChannelKind::Sparse(m) => ChannelModel::sparse(antennas, m),
        }
    }

    /// Precomputes whatever the model needs per draw.
    pub fn sampler(&self) -> ChannelSampler {
        match self.kind {
            ChannelKind::Rayleigh { variance } => ChannelSampler::Rayleigh {
                antennas: self.antennas,
                variance,
            },
            ChannelKind::Sparse(model) => ChannelSampler::Sparse(SparseSampler::new(self.antennas, model)),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelRealization {
        self.sampler().draw(rng)
    }
}

/// Steering vector `[1, e^{-jπc}, …, e^{-jπ(M-1)c}]` for directional cosine `c`.
pub fn steering_vector(antennas: usize, cosine: f64) -> Vec<Complex64> {
    (0..antennas)
        .map(|i| Complex64::from_polar(1.0, -std::f64::consts::PI * i as f64 * cosine))
        .collect()
}

/// Directional cosines of the scattered paths.
pub fn scattered_cosines(count: usize) -> Vec<f64> {
    (0..count)
        .map(|l| -1.0 + (2 * l + 1) as f64 / count as f64)
        .collect()
}

#[derive(Debug, Clone)]
pub struct SparseSampler {
    antennas: usize,
    /// Deterministic LOS contribution `β_0 v(θ_0)`, if any.
    los: Option<Vec<Complex64>>,
    /// Steering vectors of the scattered paths, one per path.
    steering: Vec<Vec<Complex64>>,
    /// Per-path variances `σ²_l`.
    variances: Vec<f64>,
}

impl SparseSampler {
    fn new(antennas: usize, model: SparseModel) -> Self {
        let (scattered, nlos_power, los) = match model.los {
            LineOfSight::None => (model.paths, 1.0, None),
            LineOfSight::Rician { factor_db, cosine } => {
                let k = 10f64.powf(factor_db / 10.0);
                let beta0 = (k / (1.0 + k)).sqrt();
                let v = steering_vector(antennas, cosine)
                    .into_iter()
                    .map(|x| x * beta0)
                    .collect();
                (model.paths - 1, 1.0 / (1.0 + k), Some(v))
            }
        };
        let weights: Vec<f64> = match model.profile {
            PowerProfile::Equal => vec![1.0; scattered],
            PowerProfile::ExponentialDecay { rate } => {
                (0..scattered).map(|l| (-rate * l as f64).exp()).collect()
            }
        };
        let total: f64 = weights.iter().sum();
        let variances = weights.iter().map(|w| nlos_power * w / total).collect();
        let steering = scattered_cosines(scattered)
            .into_iter()
            .map(|c| steering_vector(antennas, c))
            .collect();
        SparseSampler {
            antennas,
            los,
            steering,
            variances,
        }
    }

    pub fn path_variances(&self) -> &[f64] {
        &self.variances
    }

    /// Power carried by the LOS component, `β_0²`.
    pub fn los_power(&self) -> f64 {
        self.los.as_ref().map_or(0.0, |v| v[0].norm_sqr())
    }

    fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [Complex64]) {
        match &self.los {
            Some(v) => out.copy_from_slice(v),
            None => out.iter_mut().for_each(|h| *h = Complex64::new(0.0, 0.0)),
        }
        for (v, &var) in self.steering.iter().zip(&self.variances) {
            let beta = complex_gaussian(rng, var);
            for (h, s) in out.iter_mut().zip(v) {
                *h += beta * s;
            }
        }
    }
}

/// Model-specific sampler reused across many draws.
#[derive(Debug, Clone)]
pub enum ChannelSampler {
    Rayleigh { antennas: usize, variance: f64 },
    Sparse(SparseSampler),
}

impl ChannelSampler {
    pub fn antennas(&self) -> usize {
        match self {
            ChannelSampler::Rayleigh { antennas, .. } => *antennas,
            ChannelSampler::Sparse(s) => s.antennas,
        }
    }

    /// Fills `out` (length `M`) with a fresh realization.
    pub fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [Complex64]) {
        debug_assert_eq!(out.len(), self.antennas());
        match self {
            ChannelSampler::Rayleigh { variance, .. } => {
                for h in out.iter_mut() {
                    *h = complex_gaussian(rng, *variance);
                }
            }
            ChannelSampler::Sparse(s) => s.draw_into(rng, out),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelRealization {
        let mut h = vec![Complex64::new(0.0, 0.0); self.antennas()];
        self.draw_into(rng, &mut h);
        ChannelRealization { coefficients: h }
    }
}

/// i.i.d. Rayleigh realization with per-entry variance `variance`.
pub fn draw_rayleigh<R: Rng + ?Sized>(antennas: usize, variance: f64, rng: &mut R) -> Result<ChannelRealization> {
    Ok(ChannelModel::rayleigh(antennas, variance)?.draw(rng))
}

/// Sparse multipath realization; `model` must be of the sparse kind.
pub fn draw_sparse<R: Rng + ?Sized>(model: &ChannelModel, rng: &mut R) -> Result<ChannelRealization> {
    match model.kind {
        ChannelKind::Sparse(_) => Ok(model.draw(rng)),
        ChannelKind::Rayleigh { .. } => invalid("draw_sparse needs a sparse channel model"),
    }
}

/// Output of the energy collector for one symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergySample {
    /// `z = (1/M) Σ |y_i|²`.
    pub z: f64,
    pub per_antenna: Option<Vec<Complex64>>,
}

/// `y_i = h_i x + n_i`.
pub fn received_signal(h: &ChannelRealization, amplitude: f64, noise: &[Complex64]) -> Vec<Complex64> {
    h.coefficients()
        .iter()
        .zip(noise)
        .map(|(hi, ni)| hi * amplitude + ni)
        .collect()
}

/// Mean energy across antennas.
pub fn energy_of(samples: &[Complex64]) -> f64 {
    samples.iter().map(|y| y.norm_sqr()).sum::<f64>() / samples.len() as f64
}

/// Draws i.i.d. `CN(0, noise_variance)` noise and collects the energy of
/// `h * amplitude + n`. The per-antenna samples are retained.
pub fn collect_energy<R: Rng + ?Sized>(
    h: &ChannelRealization,
    amplitude: f64,
    noise_variance: f64,
    rng: &mut R,
) -> Result<EnergySample> {
    if !(noise_variance > 0.0) || !noise_variance.is_finite() {
        return invalid(format!("noise variance must be positive, got {noise_variance}"));
    }
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return invalid("amplitude must be finite and non-negative");
    }
    let noise: Vec<Complex64> = (0..h.antennas())
        .map(|_| complex_gaussian(rng, noise_variance))
        .collect();
    let y = received_signal(h, amplitude, &noise);
    Ok(EnergySample {
        z: energy_of(&y),
        per_antenna: Some(y),
    })
}

/// Split of the collected energy into channel, noise and cross terms:
/// `z = ς_h x² + ς_n + w x` with `ς_n = ‖n‖²/M` and `w = 2 Re(hᴴn)/M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyDecomposition {
    pub channel_energy: f64,
    pub noise_energy: f64,
    pub cross: f64,
}

impl EnergyDecomposition {
    pub fn new(h: &ChannelRealization, noise: &[Complex64]) -> Self {
        let m = h.antennas() as f64;
        let cross: f64 = h
            .coefficients()
            .iter()
            .zip(noise)
            .map(|(hi, ni)| (hi.conj() * ni).re)
            .sum();
        EnergyDecomposition {
            channel_energy: h.energy(),
            noise_energy: energy_of(noise),
            cross: 2.0 * cross / m,
        }
    }

    pub fn energy(&self, amplitude: f64) -> f64 {
        self.channel_energy * amplitude * amplitude + self.noise_energy + self.cross * amplitude
    }
}
