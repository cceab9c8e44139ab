//! Constellation design by cyclic coordinate descent over the energy levels.
//!
//! Each step minimizes the objective over one level with a golden-section
//! search inside the interval allowed by its neighbours, then rescales the
//! levels to unit average power. Error-rate objectives are minimized in the
//! log domain so that they stay informative when the error rate underflows.

use rand::Rng;
use rayon::prelude::*;

use crate::constellation::Constellation;
use crate::detector::{aed_gaussian_thresholds, ied_gaussian_thresholds};
use crate::error::{invalid, Error, Result};
use crate::rng::aux_rng;
use crate::ser::{aed_exact_ser, ied_gaussian_ser};

/// Smallest gap kept between adjacent levels.
pub const MIN_GAP: f64 = 1e-9;

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Relative slack for accepting a boundary point over an interior one.
const SNAP_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Objective {
    /// SER of energy detection with the instantaneous channel energy.
    IedInstSer,
    /// Worst-case squared mismatch between lower and upper post-SNRs.
    MinimaxGamma,
    /// Exact average-energy detection SER under Rayleigh fading.
    AedAvgSer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverControls {
    pub max_sweeps: usize,
    /// Stop once a full sweep improves the objective by less than this.
    pub tolerance: f64,
    /// Jittered restarts in addition to the initial point.
    pub restarts: usize,
    pub seed: u64,
    pub initial: Option<Constellation>,
}

impl Default for SolverControls {
    fn default() -> Self {
        SolverControls {
            max_sweeps: 200,
            tolerance: 1e-10,
            restarts: 5,
            seed: 0,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationProblem {
    pub objective: Objective,
    /// `ς_h` for the instantaneous objectives, `σ_h²` for the average one.
    pub channel_energy: f64,
    pub noise_variance: f64,
    pub antennas: usize,
    pub levels: usize,
    /// Fixed symbol priors; uniform when `None`.
    pub priors: Option<Vec<f64>>,
    pub controls: SolverControls,
}

impl OptimizationProblem {
    pub fn new(objective: Objective, channel_energy: f64, noise_variance: f64, antennas: usize, levels: usize) -> Self {
        OptimizationProblem {
            objective,
            channel_energy,
            noise_variance,
            antennas,
            levels,
            priors: None,
            controls: SolverControls::default(),
        }
    }

    fn priors_vec(&self) -> Vec<f64> {
        self.priors
            .clone()
            .unwrap_or_else(|| vec![1.0 / self.levels as f64; self.levels])
    }

    fn validate(&self) -> Result<Vec<f64>> {
        if self.levels < 2 {
            return Err(Error::Infeasible(format!("need at least 2 levels, got {}", self.levels)));
        }
        if !(self.channel_energy > 0.0) || !self.channel_energy.is_finite() {
            return invalid(format!("channel energy must be positive, got {}", self.channel_energy));
        }
        if !(self.noise_variance > 0.0) || !self.noise_variance.is_finite() {
            return invalid(format!("noise variance must be positive, got {}", self.noise_variance));
        }
        if self.antennas == 0 {
            return invalid("antenna count must be positive");
        }
        let priors = self.priors_vec();
        if priors.len() != self.levels {
            return invalid(format!("{} priors for {} levels", priors.len(), self.levels));
        }
        // The tightest ordered set `0, g, 2g, …` must fit under unit power.
        let tightest: f64 = priors.iter().enumerate().map(|(p, w)| p as f64 * MIN_GAP * w).sum();
        if tightest > 1.0 {
            return Err(Error::Infeasible("levels cannot be ordered under unit power".into()));
        }
        if let Some(c) = &self.controls.initial {
            if c.len() != self.levels {
                return invalid("initial constellation has the wrong number of levels");
            }
        }
        Ok(priors)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub constellation: Constellation,
    /// Objective in its natural scale (SER or squared post-SNR mismatch).
    pub objective_value: f64,
    /// Quantity actually minimized: the natural log for SER objectives.
    pub search_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `(sweep, search_value)` after every sweep, starting at sweep 0.
    pub trace: Vec<(usize, f64)>,
    pub restart: usize,
}

/// Objective in its natural scale for a given constellation.
pub fn objective_value(problem: &OptimizationProblem, constellation: &Constellation) -> Result<f64> {
    let v = search_value(problem, constellation)?;
    Ok(match problem.objective {
        Objective::MinimaxGamma => v,
        Objective::IedInstSer | Objective::AedAvgSer => v.exp(),
    })
}

fn search_value(problem: &OptimizationProblem, c: &Constellation) -> Result<f64> {
    let (s, n, m) = (problem.channel_energy, problem.noise_variance, problem.antennas);
    match problem.objective {
        Objective::IedInstSer => {
            let t = ied_gaussian_thresholds(s, n, c, m)?;
            Ok(ied_gaussian_ser(s, n, c, m, &t)?.0.average.log_value())
        }
        Objective::MinimaxGamma => {
            let t = ied_gaussian_thresholds(s, n, c, m)?;
            let (_, g) = ied_gaussian_ser(s, n, c, m, &t)?;
            Ok(g.gamma_l
                .iter()
                .zip(&g.gamma_u)
                .map(|(l, u)| (l - u) * (l - u))
                .fold(0.0, f64::max))
        }
        Objective::AedAvgSer => {
            let t = aed_gaussian_thresholds(s, n, c, m)?;
            Ok(aed_exact_ser(s, n, c, m, &t)?.average.log_value())
        }
    }
}

/// Rescales to unit average power.
fn normalize(energies: &mut [f64], priors: &[f64]) {
    let power: f64 = energies.iter().zip(priors).map(|(e, p)| e * p).sum();
    for e in energies.iter_mut() {
        *e /= power;
    }
}

struct Evaluator<'a> {
    problem: &'a OptimizationProblem,
    priors: &'a [f64],
}

impl Evaluator<'_> {
    /// Objective of the normalized version of `energies`; infeasible or
    /// degenerate points score `+inf`.
    fn eval(&self, energies: &[f64]) -> f64 {
        let mut e = energies.to_vec();
        normalize(&mut e, self.priors);
        match Constellation::custom(&e, self.priors) {
            Ok(c) => search_value(self.problem, &c).unwrap_or(f64::INFINITY),
            Err(_) => f64::INFINITY,
        }
    }
}

/// Golden-section minimization on `[lo, hi]`, also checking both endpoints
/// so that boundary optima (e.g. a zero lowest level) are reached exactly.
fn golden_section<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64) -> (f64, f64) {
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if b - a <= 1e-13 * (a.abs() + b.abs()).max(1e-12) {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = f(x2);
        }
    }
    let mut best = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    for x in [hi, lo] {
        let v = f(x);
        if v < best.1 {
            best = (x, v);
        }
    }
    // Snap to the lower boundary when the interior optimum sits on it up to
    // rounding, so that a zero lowest level is reached exactly.
    if best.0 != lo && best.0 - lo <= 1e-9 * (hi - lo) {
        let v = f(lo);
        if v <= best.1 + SNAP_SLACK * best.1.abs() {
            best = (lo, v);
        }
    }
    best
}

fn descend(problem: &OptimizationProblem, priors: &[f64], start: Vec<f64>, restart: usize) -> OptimizationResult {
    let ev = Evaluator { problem, priors };
    let mut e = start;
    normalize(&mut e, priors);
    let mut current = ev.eval(&e);
    let mut trace = vec![(0usize, current)];
    let mut converged = false;
    let mut sweeps = 0;
    let levels = e.len();
    while sweeps < problem.controls.max_sweeps {
        sweeps += 1;
        let before = current;
        for p in 0..levels {
            let lo = if p == 0 { 0.0 } else { e[p - 1] + MIN_GAP };
            let hi = if p + 1 < levels {
                e[p + 1] - MIN_GAP
            } else {
                2.0 * e[p] + 1.0
            };
            if !(hi > lo) {
                continue;
            }
            let mut trial = e.clone();
            let (x, v) = golden_section(
                |x| {
                    trial[p] = x;
                    ev.eval(&trial)
                },
                lo,
                hi,
            );
            if x != e[p] && v <= current + SNAP_SLACK * current.abs() {
                e[p] = x;
                normalize(&mut e, priors);
                current = ev.eval(&e);
            }
        }
        trace.push((sweeps, current));
        if (before - current).abs() < problem.controls.tolerance || (before == current) {
            converged = true;
            break;
        }
    }
    let constellation = Constellation::custom(&e, priors).expect("iterates stay feasible");
    let objective_value = match problem.objective {
        Objective::MinimaxGamma => current,
        _ => current.exp(),
    };
    OptimizationResult {
        constellation,
        objective_value,
        search_value: current,
        iterations: sweeps,
        converged,
        trace,
        restart,
    }
}

/// Conventional PAM amplitudes with every level shifted by up to ±20% of the
/// amplitude step, sorted and renormalized.
fn jittered_start(base: &Constellation, priors: &[f64], seed: u64, restart: usize) -> Vec<f64> {
    let mut rng = aux_rng(seed, restart as u64);
    let a = base.amplitudes();
    let step = a[a.len() - 1] / (a.len() - 1) as f64;
    let mut amps: Vec<f64> = a
        .iter()
        .map(|x| (x + step * rng.random_range(-0.2..0.2)).max(0.0))
        .collect();
    amps.sort_by(f64::total_cmp);
    for k in 1..amps.len() {
        if amps[k] <= amps[k - 1] + MIN_GAP.sqrt() {
            amps[k] = amps[k - 1] + MIN_GAP.sqrt();
        }
    }
    let mut e: Vec<f64> = amps.iter().map(|x| x * x).collect();
    normalize(&mut e, priors);
    e
}

fn solve(problem: &OptimizationProblem) -> Result<OptimizationResult> {
    let priors = problem.validate()?;
    let base = match &problem.controls.initial {
        Some(c) => Constellation::custom(c.energies(), &priors)?,
        None => Constellation::conventional_pam(problem.levels, Some(&priors))?,
    };
    let starts: Vec<Vec<f64>> = std::iter::once(base.energies().to_vec())
        .chain((1..=problem.controls.restarts).map(|r| jittered_start(&base, &priors, problem.controls.seed, r)))
        .collect();
    let results: Vec<OptimizationResult> = starts
        .into_par_iter()
        .enumerate()
        .map(|(r, s)| descend(problem, &priors, s, r))
        .collect();
    // Lowest objective wins; ties go to the lowest restart index.
    let best = results
        .into_iter()
        .reduce(|a, b| if b.search_value < a.search_value { b } else { a })
        .expect("at least one start");
    if !best.search_value.is_finite() {
        return Err(Error::Degenerate("objective is not finite at any start".into()));
    }
    Ok(best)
}

/// Minimizes the instantaneous-channel SER under the Gaussian approximation.
pub fn optimize_ied(problem: &OptimizationProblem) -> Result<OptimizationResult> {
    let mut p = problem.clone();
    p.objective = Objective::IedInstSer;
    solve(&p)
}

/// Minimizes `max_p |γ_{l,p} − γ_{u,p}|²`.
pub fn optimize_minimax_gamma(problem: &OptimizationProblem) -> Result<OptimizationResult> {
    let mut p = problem.clone();
    p.objective = Objective::MinimaxGamma;
    solve(&p)
}

/// Minimizes the exact average-energy detection SER.
pub fn optimize_aed(problem: &OptimizationProblem) -> Result<OptimizationResult> {
    let mut p = problem.clone();
    p.objective = Objective::AedAvgSer;
    solve(&p)
}

/// Dispatches on `problem.objective`.
pub fn optimize(problem: &OptimizationProblem) -> Result<OptimizationResult> {
    solve(problem)
}
