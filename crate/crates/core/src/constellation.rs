//! Non-negative energy constellations with priors and unit average power.

use crate::error::{invalid, Result};

const NORM_TOL: f64 = 1e-12;

/// Ordered energy levels `ε_0 < ε_1 < … < ε_{P-1}` with their prior masses,
/// normalized so that `Σ_p p(ε_p) ε_p = 1`. The transmitted amplitude for
/// level `p` is `sqrt(ε_p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    energies: Vec<f64>,
    priors: Vec<f64>,
}

impl Constellation {
    /// On-off keying: energies `{0, 2}` with equal priors.
    pub fn ook() -> Self {
        Constellation {
            energies: vec![0.0, 2.0],
            priors: vec![0.5, 0.5],
        }
    }

    /// Conventional non-negative PAM: amplitudes `0, d, 2d, …, (P-1)d` with
    /// `d` chosen for unit average energy under `priors` (uniform if `None`).
    pub fn conventional_pam(levels: usize, priors: Option<&[f64]>) -> Result<Self> {
        if levels < 2 {
            return invalid(format!("PAM needs at least 2 levels, got {levels}"));
        }
        let energies: Vec<f64> = (0..levels).map(|p| (p * p) as f64).collect();
        let priors = match priors {
            Some(p) => p.to_vec(),
            None => vec![1.0 / levels as f64; levels],
        };
        Constellation::custom(&energies, &priors)
    }

    /// Validates `energies` and `priors` and rescales the energies to unit
    /// average power.
    pub fn custom(energies: &[f64], priors: &[f64]) -> Result<Self> {
        if energies.len() < 2 {
            return invalid("a constellation needs at least 2 levels");
        }
        if priors.len() != energies.len() {
            return invalid(format!(
                "{} priors given for {} energy levels",
                priors.len(),
                energies.len()
            ));
        }
        if energies.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return invalid("energy levels must be finite and non-negative");
        }
        if energies.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("energy levels must be strictly increasing");
        }
        // Zero-mass symbols would make the MAP prior ratios infinite.
        if priors.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return invalid("priors must be finite and strictly positive");
        }
        let mass: f64 = priors.iter().sum();
        if (mass - 1.0).abs() > NORM_TOL {
            return invalid(format!("priors sum to {mass}, expected 1"));
        }
        let power: f64 = energies.iter().zip(priors).map(|(e, p)| e * p).sum();
        let energies = energies.iter().map(|e| e / power).collect();
        Ok(Constellation {
            energies,
            priors: priors.to_vec(),
        })
    }

    /// Uniform-prior constellation from raw energy levels.
    pub fn from_energies(energies: &[f64]) -> Result<Self> {
        let n = energies.len().max(1);
        Constellation::custom(energies, &vec![1.0 / n as f64; energies.len()])
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn energy(&self, p: usize) -> f64 {
        self.energies[p]
    }

    pub fn prior(&self, p: usize) -> f64 {
        self.priors[p]
    }

    pub fn amplitude(&self, p: usize) -> f64 {
        self.energies[p].sqrt()
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.energies.iter().map(|e| e.sqrt()).collect()
    }

    pub fn average_energy(&self) -> f64 {
        self.energies.iter().zip(&self.priors).map(|(e, p)| e * p).sum()
    }

    pub fn has_uniform_priors(&self) -> bool {
        let u = 1.0 / self.len() as f64;
        self.priors.iter().all(|p| (p - u).abs() <= 1e-15)
    }

    /// `κ_p = ((sqrt(ε_{p+1}) - sqrt(ε_p)) / sqrt(2))^2` for the adjacent pair
    /// `(p, p+1)`: the high-SNR post-processing SNR per unit of `M ρ_h`.
    pub fn kappa(&self, p: usize) -> f64 {
        let d = self.amplitude(p + 1) - self.amplitude(p);
        0.5 * d * d
    }

    /// Adjacent amplitude gaps `sqrt(ε_{p+1}) - sqrt(ε_p)`.
    pub fn amplitude_gaps(&self) -> Vec<f64> {
        self.amplitudes().windows(2).map(|w| w[1] - w[0]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn ook_levels() {
        let c = Constellation::ook();
        assert_eq!(c.energies(), &[0.0, 2.0]);
        assert_eq!(c.priors(), &[0.5, 0.5]);
        assert!((c.average_energy() - 1.0).abs() < 1e-15);
        assert!(close(&c.amplitudes(), &[0.0, 2f64.sqrt()]));
        assert!((c.kappa(0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn conventional_pam_levels() {
        let c2 = Constellation::conventional_pam(2, None).unwrap();
        assert_eq!(c2, Constellation::ook());
        let c4 = Constellation::conventional_pam(4, None).unwrap();
        assert!(close(c4.energies(), &[0.0, 2.0 / 7.0, 8.0 / 7.0, 18.0 / 7.0]));
        let gaps = c4.amplitude_gaps();
        assert!(gaps.iter().all(|g| (g - gaps[0]).abs() < 1e-14));
        assert!(Constellation::conventional_pam(1, None).is_err());
    }

    #[test]
    fn conventional_pam_with_priors_has_unit_power() {
        let c = Constellation::conventional_pam(3, Some(&[0.5, 0.3, 0.2])).unwrap();
        assert!((c.average_energy() - 1.0).abs() < 1e-14);
        let g = c.amplitude_gaps();
        assert!((g[0] - g[1]).abs() < 1e-14);
    }

    #[test]
    fn custom_renormalizes_and_validates() {
        let c = Constellation::custom(&[0.0, 4.0], &[0.5, 0.5]).unwrap();
        assert!(close(c.energies(), &[0.0, 2.0]));
        assert!(Constellation::custom(&[1.0, 1.0], &[0.5, 0.5]).is_err());
        assert!(Constellation::custom(&[-1.0, 1.0], &[0.5, 0.5]).is_err());
        assert!(Constellation::custom(&[0.0, 1.0], &[0.6, 0.6]).is_err());
        assert!(Constellation::custom(&[0.0, 1.0], &[1.0, 0.0]).is_err());
        let c = Constellation::from_energies(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!(close(c.energies(), &[0.0, 2.0 / 3.0, 4.0 / 3.0, 2.0]));
    }

    #[test]
    fn kappa_constant_for_conventional_pam() {
        for p in 2..=8 {
            let c = Constellation::conventional_pam(p, None).unwrap();
            let k0 = c.kappa(0);
            for i in 1..p - 1 {
                assert!((c.kappa(i) - k0).abs() < 1e-14 * k0.max(1.0));
            }
        }
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(
            raw in prop::collection::vec(0.01f64..5.0, 2..8),
            start in 0.0f64..1.0,
            weights in prop::collection::vec(0.05f64..1.0, 8),
        ) {
            let mut energies = Vec::with_capacity(raw.len());
            let mut acc = start;
            for r in &raw {
                energies.push(acc);
                acc += r;
            }
            let w = &weights[..energies.len()];
            let total: f64 = w.iter().sum();
            let priors: Vec<f64> = w.iter().map(|x| x / total).collect();
            // Renormalize so the priors sum to exactly one within rounding.
            let priors_sum: f64 = priors.iter().sum();
            let priors: Vec<f64> = priors.iter().map(|p| p / priors_sum).collect();
            let c = Constellation::custom(&energies, &priors).unwrap();
            prop_assert!((c.average_energy() - 1.0).abs() < 1e-12);
            let again = Constellation::custom(c.energies(), c.priors()).unwrap();
            for (a, b) in again.energies().iter().zip(c.energies()) {
                prop_assert!((a - b).abs() <= 1e-12 * b.max(1.0));
            }
        }
    }
}
