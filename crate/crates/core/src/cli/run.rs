//! Executes a validated experiment into a CSV table.

use crate::cli::config::{objective_name, Design, Experiment, ExperimentKind};
use crate::cli::output::Table;
use crate::constellation::Constellation;
use crate::detector::GaussianMoments;
use crate::montecarlo::{self, DetectorKind, Scenario};
use crate::optimizer::{optimize, Objective, OptimizationProblem, OptimizationResult};
use crate::ser::{db_to_linear, pam_floor};
use crate::special::noncentral_chi2_ln_pdf;
use crate::Result;

pub const SWEEP_HEADER: [&str; 6] = ["method", "M", "snr_db", "ser", "ci_lo", "ci_hi"];
pub const PDF_HEADER: [&str; 6] = ["method", "M", "snr_db", "symbol", "z", "log_pdf"];
pub const OPTIMIZE_HEADER: [&str; 10] = [
    "objective",
    "M",
    "snr_db",
    "level",
    "energy",
    "amplitude",
    "prior",
    "objective_value",
    "iterations",
    "converged",
];

/// Width of the plotted density window in standard deviations.
const PDF_SPAN_SIGMAS: f64 = 6.0;

pub fn execute(exp: &Experiment) -> Result<Table> {
    match exp.kind {
        ExperimentKind::Sweep => sweep(exp),
        ExperimentKind::PdfCompare => pdf_compare(exp),
        ExperimentKind::Optimize => optimize_grid(exp),
    }
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn optimized(
    exp: &Experiment,
    objective: Objective,
    channel_energy: f64,
    noise_variance: f64,
    antennas: usize,
) -> Result<OptimizationResult> {
    let c = &exp.constellation;
    let mut problem = OptimizationProblem::new(objective, channel_energy, noise_variance, antennas, c.len());
    if !c.has_uniform_priors() {
        problem.priors = Some(c.priors().to_vec());
    }
    problem.controls = exp.solver.clone();
    optimize(&problem)
}

fn sweep(exp: &Experiment) -> Result<Table> {
    let mut table = Table::new(SWEEP_HEADER.to_vec());
    let shards = montecarlo::default_shards();
    let mut stream = 0u64;
    for &design in &exp.designs {
        for series in &exp.channels {
            let qualify = |curve: &str| {
                let mut name = curve.to_string();
                if exp.designs.len() > 1 {
                    name = format!("{name}:{}", design.name());
                }
                if exp.channels.len() > 1 {
                    name = format!("{name}:{}", series.label);
                }
                name
            };
            for &m in &exp.antennas {
                for &snr_db in &exp.snr_db {
                    let spec = series.spec(m);
                    let average = spec.model(m)?.average_energy();
                    let noise = average / db_to_linear(snr_db);
                    let constellation = match design {
                        Design::Conventional => exp.constellation.clone(),
                        Design::Optimized(obj) => optimized(exp, obj, average, noise, m)?.constellation,
                    };
                    let scenario = Scenario {
                        constellation,
                        channel: spec,
                        detectors: exp.detectors.clone(),
                        regime: exp.regime,
                        antennas: vec![m],
                        snr_db: vec![snr_db],
                        trials: exp.trials,
                        seed: exp.seed,
                        stream_base: stream,
                        analytic: exp.analytic,
                    };
                    stream += 1;
                    let result = montecarlo::run_sweep(&scenario, shards)?;
                    for curve in &result.points[0].curves {
                        let (lo, hi) = match &curve.report.confidence {
                            Some(c) => (num(c.lower), num(c.upper)),
                            None => (String::new(), String::new()),
                        };
                        table.push(vec![
                            qualify(&curve.name),
                            m.to_string(),
                            snr_db.to_string(),
                            num(curve.report.average.value()),
                            lo,
                            hi,
                        ]);
                    }
                    let has_aed = exp
                        .detectors
                        .iter()
                        .any(|d| matches!(d, DetectorKind::AedGaussian | DetectorKind::AedBayesian));
                    if exp.floor && has_aed && scenario.constellation.len() > 2 && spec.rayleigh_equivalent(m) {
                        table.push(vec![
                            qualify("aed_floor"),
                            m.to_string(),
                            snr_db.to_string(),
                            num(pam_floor(&scenario.constellation, m).value()),
                            String::new(),
                            String::new(),
                        ]);
                    }
                }
            }
        }
    }
    Ok(table)
}

fn normal_ln_pdf(z: f64, mean: f64, variance: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * variance).ln() - (z - mean) * (z - mean) / (2.0 * variance)
}

/// Density window of level `p`: mean ± a few standard deviations, kept
/// strictly positive since the energy statistic is.
fn pdf_window(mom: &GaussianMoments, p: usize) -> (f64, f64) {
    let (mu, sd) = (mom.means[p], mom.std_dev(p));
    ((mu - PDF_SPAN_SIGMAS * sd).max(1e-3 * mu), mu + PDF_SPAN_SIGMAS * sd)
}

fn pdf_compare(exp: &Experiment) -> Result<Table> {
    let mut table = Table::new(PDF_HEADER.to_vec());
    let c: &Constellation = &exp.constellation;
    let series = &exp.channels[0];
    for &m in &exp.antennas {
        for &snr_db in &exp.snr_db {
            let energy = series.spec(m).model(m)?.average_energy();
            let noise = energy / db_to_linear(snr_db);
            let mom = GaussianMoments::new(energy, noise, c, m)?;
            let scale = 2.0 * m as f64 / noise;
            let dof = 2 * m as u32;
            for p in 0..c.len() {
                let (lo, hi) = pdf_window(&mom, p);
                let nc = scale * energy * c.energy(p);
                for i in 0..exp.pdf_points {
                    let z = lo + (hi - lo) * i as f64 / (exp.pdf_points - 1) as f64;
                    let exact = noncentral_chi2_ln_pdf(scale * z, dof, nc)? + scale.ln();
                    let approx = normal_ln_pdf(z, mom.means[p], mom.variances[p]);
                    for (method, v) in [("chi2_exact", exact), ("gaussian", approx)] {
                        table.push(vec![
                            method.to_string(),
                            m.to_string(),
                            snr_db.to_string(),
                            p.to_string(),
                            num(z),
                            num(v),
                        ]);
                    }
                }
            }
        }
    }
    // Group rows by method so each curve file reads top to bottom.
    table.rows.sort_by_key(|r| r[0] != "chi2_exact");
    Ok(table)
}

fn optimize_grid(exp: &Experiment) -> Result<Table> {
    let mut table = Table::new(OPTIMIZE_HEADER.to_vec());
    let series = &exp.channels[0];
    for &obj in &exp.objectives {
        for &m in &exp.antennas {
            for &snr_db in &exp.snr_db {
                let energy = series.spec(m).model(m)?.average_energy();
                let noise = energy / db_to_linear(snr_db);
                let r = optimized(exp, obj, energy, noise, m)?;
                let c = &r.constellation;
                for p in 0..c.len() {
                    table.push(vec![
                        objective_name(obj).to_string(),
                        m.to_string(),
                        snr_db.to_string(),
                        p.to_string(),
                        num(c.energy(p)),
                        num(c.amplitude(p)),
                        num(c.prior(p)),
                        num(r.objective_value),
                        r.iterations.to_string(),
                        r.converged.to_string(),
                    ]);
                }
            }
        }
    }
    Ok(table)
}
