//! Scenario files: flat TOML sections parsed into a validated [`Experiment`].

use std::fmt;
use std::ops::Range;

use serde::Deserialize;
use toml::Spanned;

use crate::channel::{LineOfSight, PowerProfile, SparseModel};
use crate::constellation::Constellation;
use crate::montecarlo::{ChannelSpec, DetectorKind, Regime};
use crate::optimizer::{Objective, SolverControls};

/// Tolerance on the unit average-power constraint of custom energies.
const POWER_TOL: f64 = 1e-9;

/// One problem found in a scenario file.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    /// 1-based line the problem is anchored to.
    pub line: usize,
    /// Section name without brackets, empty for file-level problems.
    pub section: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.section.is_empty() {
            write!(f, "line {}: {}", self.line, self.message)
        } else {
            write!(f, "line {}: [{}] {}", self.line, self.section, self.message)
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    scenario: Spanned<RawScenario>,
    constellation: Spanned<RawConstellation>,
    channel: Option<Spanned<RawChannel>>,
    detector: Option<Spanned<RawDetector>>,
    sweep: Spanned<RawSweep>,
    optimize: Option<Spanned<RawOptimize>>,
    output: Option<Spanned<RawOutput>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Spanned<String>,
    kind: Spanned<String>,
    seed: Spanned<i64>,
    trials: Option<Spanned<i64>>,
    regime: Option<Spanned<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstellation {
    #[serde(rename = "type")]
    kind: Spanned<String>,
    levels: Option<Spanned<i64>>,
    energies: Option<Spanned<Vec<f64>>>,
    priors: Option<Spanned<Vec<f64>>>,
    designs: Option<Spanned<Vec<Spanned<String>>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawPaths {
    Count(i64),
    Label(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    model: Spanned<String>,
    variance: Option<Spanned<f64>>,
    paths: Option<Spanned<Vec<Spanned<RawPaths>>>>,
    los: Option<Spanned<String>>,
    rician_factor_db: Option<Spanned<f64>>,
    los_cosine: Option<Spanned<f64>>,
    profile: Option<Spanned<String>>,
    decay_rate: Option<Spanned<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetector {
    variants: Spanned<Vec<Spanned<String>>>,
    analytic: Option<bool>,
    floor: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    antennas: Spanned<Vec<i64>>,
    snr_db: Spanned<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptimize {
    objectives: Option<Spanned<Vec<Spanned<String>>>>,
    restarts: Option<Spanned<i64>>,
    max_sweeps: Option<Spanned<i64>>,
    tolerance: Option<Spanned<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    stem: Option<Spanned<String>>,
    pdf_points: Option<Spanned<i64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    /// SER curves over the `antennas × snr_db` grid.
    Sweep,
    /// Exact versus Gaussian densities of the energy statistic.
    PdfCompare,
    /// Optimized constellations over the grid.
    Optimize,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::PdfCompare => "pdf_compare",
            ExperimentKind::Optimize => "optimize",
        }
    }
}

/// How the transmitted constellation of a sweep is obtained at each point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Design {
    Conventional,
    Optimized(Objective),
}

impl Design {
    pub fn name(&self) -> &'static str {
        match self {
            Design::Conventional => "conventional",
            Design::Optimized(o) => match o {
                Objective::AedAvgSer => "aed_optimized",
                Objective::IedInstSer => "ied_optimized",
                Objective::MinimaxGamma => "minimax_optimized",
            },
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "conventional" => Design::Conventional,
            "aed_optimized" => Design::Optimized(Objective::AedAvgSer),
            "ied_optimized" => Design::Optimized(Objective::IedInstSer),
            "minimax_optimized" => Design::Optimized(Objective::MinimaxGamma),
            _ => return None,
        })
    }
}

pub fn objective_name(o: Objective) -> &'static str {
    match o {
        Objective::IedInstSer => "ied_inst_ser",
        Objective::MinimaxGamma => "minimax_gamma",
        Objective::AedAvgSer => "aed_avg_ser",
    }
}

fn objective_from_name(s: &str) -> Option<Objective> {
    Some(match s {
        "ied_inst_ser" => Objective::IedInstSer,
        "minimax_gamma" => Objective::MinimaxGamma,
        "aed_avg_ser" => Objective::AedAvgSer,
        _ => return None,
    })
}

/// Number of resolvable paths of a sparse series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathCount {
    Fixed(usize),
    /// As many paths as antennas.
    FullRank,
}

/// One channel curve family; a sparse channel with several path counts
/// yields one series per count.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSeries {
    pub label: String,
    kind: SeriesKind,
}

#[derive(Debug, Clone, PartialEq)]
enum SeriesKind {
    Rayleigh { variance: f64 },
    Sparse { paths: PathCount, los: LineOfSight, profile: PowerProfile },
}

impl ChannelSeries {
    pub fn spec(&self, antennas: usize) -> ChannelSpec {
        match &self.kind {
            SeriesKind::Rayleigh { variance } => ChannelSpec::Rayleigh { variance: *variance },
            SeriesKind::Sparse { paths, los, profile } => ChannelSpec::Sparse(SparseModel {
                paths: match paths {
                    PathCount::Fixed(n) => *n,
                    PathCount::FullRank => antennas,
                },
                los: *los,
                profile: *profile,
            }),
        }
    }
}

/// A fully validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub name: String,
    pub kind: ExperimentKind,
    pub seed: u64,
    pub trials: u64,
    pub regime: Regime,
    pub constellation: Constellation,
    pub designs: Vec<Design>,
    pub channels: Vec<ChannelSeries>,
    pub detectors: Vec<DetectorKind>,
    pub analytic: bool,
    /// Emit the high-SNR error floor of average-energy detection.
    pub floor: bool,
    pub antennas: Vec<usize>,
    pub snr_db: Vec<f64>,
    pub objectives: Vec<Objective>,
    pub solver: SolverControls,
    pub stem: String,
    pub pdf_points: usize,
}

/// 1-based line containing byte `offset`.
pub fn line_of(text: &str, offset: usize) -> usize {
    let end = offset.min(text.len());
    text.as_bytes()[..end].iter().filter(|&&b| b == b'\n').count() + 1
}

struct Checker<'a> {
    text: &'a str,
    out: Vec<Diagnostic>,
}

impl Checker<'_> {
    fn push(&mut self, span: Range<usize>, section: &str, message: impl Into<String>) {
        self.out.push(Diagnostic {
            line: line_of(self.text, span.start),
            section: section.to_string(),
            message: message.into(),
        });
    }
}

/// Parses and validates a scenario. All problems are reported at once.
pub fn parse(text: &str) -> std::result::Result<Experiment, Vec<Diagnostic>> {
    let raw: RawFile = match toml::from_str(text) {
        Ok(r) => r,
        Err(e) => {
            let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(1);
            return Err(vec![Diagnostic {
                line,
                section: String::new(),
                message: e.message().to_string(),
            }]);
        }
    };
    let mut ck = Checker { text, out: Vec::new() };
    let exp = build(&raw, &mut ck);
    if ck.out.is_empty() {
        Ok(exp.expect("no diagnostics implies a complete experiment"))
    } else {
        ck.out.sort_by_key(|d| d.line);
        Err(ck.out)
    }
}

/// Diagnostics only; empty for a valid scenario.
pub fn validate(text: &str) -> Vec<Diagnostic> {
    parse(text).err().unwrap_or_default()
}

fn build(raw: &RawFile, ck: &mut Checker<'_>) -> Option<Experiment> {
    // Scenario.
    let sc = raw.scenario.get_ref();
    let kind = match sc.kind.get_ref().as_str() {
        "sweep" => Some(ExperimentKind::Sweep),
        "pdf_compare" => Some(ExperimentKind::PdfCompare),
        "optimize" => Some(ExperimentKind::Optimize),
        other => {
            ck.push(sc.kind.span(), "scenario", format!("unknown kind '{other}' (sweep, pdf_compare, optimize)"));
            None
        }
    };
    if sc.name.get_ref().trim().is_empty() {
        ck.push(sc.name.span(), "scenario", "name must not be empty");
    }
    let seed = *sc.seed.get_ref();
    if seed < 0 {
        ck.push(sc.seed.span(), "scenario", "seed must be non-negative");
    }
    let trials = match &sc.trials {
        Some(t) if *t.get_ref() < 1 => {
            ck.push(t.span(), "scenario", "trials must be at least 1");
            1
        }
        Some(t) => *t.get_ref() as u64,
        None => 100_000,
    };
    let regime = match sc.regime.as_ref().map(|r| (r.get_ref().as_str(), r.span())) {
        None | Some(("slow", _)) => Regime::SlowFading,
        Some(("fast", _)) => Regime::FastFading,
        Some((other, span)) => {
            ck.push(span, "scenario", format!("unknown regime '{other}' (slow, fast)"));
            Regime::SlowFading
        }
    };

    let constellation = build_constellation(raw.constellation.get_ref(), raw.constellation.span(), ck);
    let designs = build_designs(raw.constellation.get_ref(), ck);
    let channels = build_channels(raw.channel.as_ref(), ck);

    // Detectors.
    let mut detectors = Vec::new();
    let (mut analytic, mut floor) = (false, false);
    if let Some(d) = &raw.detector {
        let d_ref = d.get_ref();
        analytic = d_ref.analytic.unwrap_or(false);
        floor = d_ref.floor.unwrap_or(false);
        for v in d_ref.variants.get_ref() {
            match DetectorKind::from_name(v.get_ref()) {
                Some(k) if detectors.contains(&k) => {
                    ck.push(v.span(), "detector", format!("detector '{}' listed twice", v.get_ref()))
                }
                Some(k) => {
                    if regime == Regime::FastFading && k.needs_channel_state() {
                        ck.push(
                            v.span(),
                            "detector",
                            format!(
                                "detector '{}' needs the instantaneous channel, which the fast-fading regime does not expose",
                                k.name()
                            ),
                        );
                    }
                    detectors.push(k);
                }
                None => ck.push(
                    v.span(),
                    "detector",
                    format!(
                        "unknown detector '{}' (coherent, ied, aed_gaussian, aed_bayesian)",
                        v.get_ref()
                    ),
                ),
            }
        }
    }
    if kind == Some(ExperimentKind::Sweep) && detectors.is_empty() {
        let span = raw.detector.as_ref().map(|d| d.span()).unwrap_or(raw.scenario.span());
        ck.push(span, "detector", "a sweep needs at least one detector variant");
    }

    // Sweep axes.
    let sw = raw.sweep.get_ref();
    let mut antennas = Vec::new();
    if sw.antennas.get_ref().is_empty() {
        ck.push(sw.antennas.span(), "sweep", "antennas must not be empty");
    }
    for &m in sw.antennas.get_ref() {
        if m < 1 {
            ck.push(sw.antennas.span(), "sweep", format!("antenna count {m} must be positive"));
        } else {
            antennas.push(m as usize);
        }
    }
    if antennas.windows(2).any(|w| w[1] <= w[0]) {
        ck.push(sw.antennas.span(), "sweep", "antennas must be strictly increasing");
    }
    let snr_db = sw.snr_db.get_ref().clone();
    if snr_db.is_empty() {
        ck.push(sw.snr_db.span(), "sweep", "snr_db must not be empty");
    }
    if snr_db.iter().any(|s| !s.is_finite()) {
        ck.push(sw.snr_db.span(), "sweep", "snr_db values must be finite");
    } else if snr_db.windows(2).any(|w| w[1] <= w[0]) {
        ck.push(sw.snr_db.span(), "sweep", "snr_db must be strictly increasing");
    }

    // Channel feasibility at every antenna count.
    for series in &channels {
        for &m in &antennas {
            if let Err(e) = series.spec(m).model(m) {
                let span = raw.channel.as_ref().map(|c| c.span()).unwrap_or(0..0);
                ck.push(span, "channel", format!("series {} at M = {m}: {e}", series.label));
            }
        }
    }

    // Optimizer.
    let mut solver = SolverControls {
        seed: seed.max(0) as u64,
        ..SolverControls::default()
    };
    let mut objectives = Vec::new();
    if let Some(o) = &raw.optimize {
        let o_ref = o.get_ref();
        if let Some(r) = &o_ref.restarts {
            if *r.get_ref() < 0 {
                ck.push(r.span(), "optimize", "restarts must be non-negative");
            } else {
                solver.restarts = *r.get_ref() as usize;
            }
        }
        if let Some(s) = &o_ref.max_sweeps {
            if *s.get_ref() < 1 {
                ck.push(s.span(), "optimize", "max_sweeps must be at least 1");
            } else {
                solver.max_sweeps = *s.get_ref() as usize;
            }
        }
        if let Some(t) = &o_ref.tolerance {
            if !(*t.get_ref() >= 0.0) {
                ck.push(t.span(), "optimize", "tolerance must be non-negative");
            } else {
                solver.tolerance = *t.get_ref();
            }
        }
        if let Some(list) = &o_ref.objectives {
            for v in list.get_ref() {
                match objective_from_name(v.get_ref()) {
                    Some(obj) => objectives.push(obj),
                    None => ck.push(
                        v.span(),
                        "optimize",
                        format!(
                            "unknown objective '{}' (ied_inst_ser, minimax_gamma, aed_avg_ser)",
                            v.get_ref()
                        ),
                    ),
                }
            }
        }
    }
    if kind == Some(ExperimentKind::Optimize) && objectives.is_empty() {
        let span = raw.optimize.as_ref().map(|o| o.span()).unwrap_or(raw.scenario.span());
        ck.push(span, "optimize", "an optimize scenario needs at least one objective");
    }

    // Output.
    let mut stem = sc.name.get_ref().clone();
    let mut pdf_points = 200;
    if let Some(o) = &raw.output {
        let o_ref = o.get_ref();
        if let Some(s) = &o_ref.stem {
            let v = s.get_ref();
            if v.is_empty() || !v.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                ck.push(s.span(), "output", "stem must be non-empty and use only [A-Za-z0-9_-]");
            }
            stem = v.clone();
        }
        if let Some(p) = &o_ref.pdf_points {
            if *p.get_ref() < 2 {
                ck.push(p.span(), "output", "pdf_points must be at least 2");
            } else {
                pdf_points = *p.get_ref() as usize;
            }
        }
    }
    if raw.output.as_ref().and_then(|o| o.get_ref().stem.as_ref()).is_none()
        && !stem.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
    {
        ck.push(sc.name.span(), "scenario", "name is used as the file stem and must use only [A-Za-z0-9_-]");
    }

    Some(Experiment {
        name: sc.name.get_ref().clone(),
        kind: kind?,
        seed: seed.max(0) as u64,
        trials,
        regime,
        constellation: constellation?,
        designs,
        channels,
        detectors,
        analytic,
        floor,
        antennas,
        snr_db,
        objectives,
        solver,
        stem,
        pdf_points,
    })
}

fn build_constellation(c: &RawConstellation, block: Range<usize>, ck: &mut Checker<'_>) -> Option<Constellation> {
    let priors = match &c.priors {
        Some(p) => {
            let v = p.get_ref();
            if v.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
                ck.push(p.span(), "constellation", "priors must be positive and finite");
                return None;
            }
            let total: f64 = v.iter().sum();
            if (total - 1.0).abs() > POWER_TOL {
                ck.push(p.span(), "constellation", format!("priors sum to {total}, expected 1"));
                return None;
            }
            Some(v.clone())
        }
        None => None,
    };
    let check_len = |ck: &mut Checker<'_>, n: usize| {
        if let (Some(p), Some(raw)) = (&priors, &c.priors) {
            if p.len() != n {
                ck.push(raw.span(), "constellation", format!("{} priors for {n} levels", p.len()));
                return false;
            }
        }
        true
    };
    match c.kind.get_ref().as_str() {
        "ook" => {
            if c.energies.is_some() {
                ck.push(block, "constellation", "energies are only accepted for type = \"custom\"");
                return None;
            }
            if let Some(l) = &c.levels {
                if *l.get_ref() != 2 {
                    ck.push(l.span(), "constellation", "on-off keying has exactly 2 levels");
                    return None;
                }
            }
            if !check_len(ck, 2) {
                return None;
            }
            match &priors {
                Some(p) => report(Constellation::conventional_pam(2, Some(p)), block, ck),
                None => Some(Constellation::ook()),
            }
        }
        "pam" => {
            if c.energies.is_some() {
                ck.push(block, "constellation", "energies are only accepted for type = \"custom\"");
                return None;
            }
            let Some(l) = &c.levels else {
                ck.push(block, "constellation", "type = \"pam\" needs levels");
                return None;
            };
            if *l.get_ref() < 2 {
                ck.push(l.span(), "constellation", "levels must be at least 2");
                return None;
            }
            let n = *l.get_ref() as usize;
            if !check_len(ck, n) {
                return None;
            }
            report(Constellation::conventional_pam(n, priors.as_deref()), block, ck)
        }
        "custom" => {
            let Some(e) = &c.energies else {
                ck.push(block, "constellation", "type = \"custom\" needs energies");
                return None;
            };
            let energies = e.get_ref();
            if let Some(l) = &c.levels {
                if *l.get_ref() as usize != energies.len() {
                    ck.push(l.span(), "constellation", "levels disagrees with the number of energies");
                    return None;
                }
            }
            if !check_len(ck, energies.len()) {
                return None;
            }
            let n = energies.len().max(1);
            let w = priors.unwrap_or_else(|| vec![1.0 / n as f64; n]);
            if energies.len() == w.len() {
                let power: f64 = energies.iter().zip(&w).map(|(e, p)| e * p).sum();
                if (power - 1.0).abs() > POWER_TOL {
                    ck.push(
                        block,
                        "constellation",
                        format!("average energy sum(prior * energy) = {power}, expected 1"),
                    );
                    return None;
                }
            }
            report(Constellation::custom(energies, &w), block, ck)
        }
        other => {
            ck.push(c.kind.span(), "constellation", format!("unknown type '{other}' (ook, pam, custom)"));
            None
        }
    }
}

fn report(r: crate::Result<Constellation>, block: Range<usize>, ck: &mut Checker<'_>) -> Option<Constellation> {
    match r {
        Ok(c) => Some(c),
        Err(e) => {
            ck.push(block, "constellation", e.to_string());
            None
        }
    }
}

fn build_designs(c: &RawConstellation, ck: &mut Checker<'_>) -> Vec<Design> {
    let Some(list) = &c.designs else {
        return vec![Design::Conventional];
    };
    let mut out = Vec::new();
    for v in list.get_ref() {
        match Design::from_name(v.get_ref()) {
            Some(d) if out.contains(&d) => ck.push(v.span(), "constellation", format!("design '{}' listed twice", v.get_ref())),
            Some(d) => out.push(d),
            None => ck.push(
                v.span(),
                "constellation",
                format!(
                    "unknown design '{}' (conventional, aed_optimized, ied_optimized, minimax_optimized)",
                    v.get_ref()
                ),
            ),
        }
    }
    if list.get_ref().is_empty() {
        ck.push(list.span(), "constellation", "designs must not be empty");
    }
    out
}

fn build_channels(raw: Option<&Spanned<RawChannel>>, ck: &mut Checker<'_>) -> Vec<ChannelSeries> {
    let Some(raw) = raw else {
        return vec![ChannelSeries {
            label: "rayleigh".into(),
            kind: SeriesKind::Rayleigh { variance: 1.0 },
        }];
    };
    let block = raw.span();
    let c = raw.get_ref();
    let sparse_only = [
        ("paths", c.paths.as_ref().map(|p| p.span())),
        ("los", c.los.as_ref().map(|p| p.span())),
        ("rician_factor_db", c.rician_factor_db.as_ref().map(|p| p.span())),
        ("los_cosine", c.los_cosine.as_ref().map(|p| p.span())),
        ("profile", c.profile.as_ref().map(|p| p.span())),
        ("decay_rate", c.decay_rate.as_ref().map(|p| p.span())),
    ];
    match c.model.get_ref().as_str() {
        "rayleigh" => {
            for (key, span) in sparse_only {
                if let Some(s) = span {
                    ck.push(s, "channel", format!("'{key}' only applies to model = \"sparse\""));
                }
            }
            let variance = match &c.variance {
                Some(v) if !(*v.get_ref() > 0.0) || !v.get_ref().is_finite() => {
                    ck.push(v.span(), "channel", "variance must be positive and finite");
                    1.0
                }
                Some(v) => *v.get_ref(),
                None => 1.0,
            };
            vec![ChannelSeries {
                label: "rayleigh".into(),
                kind: SeriesKind::Rayleigh { variance },
            }]
        }
        "sparse" => {
            if let Some(v) = &c.variance {
                ck.push(v.span(), "channel", "sparse channels are normalized to unit average energy; drop 'variance'");
            }
            let profile = match c.profile.as_ref().map(|p| (p.get_ref().as_str(), p.span())) {
                None | Some(("equal", _)) => {
                    if let Some(d) = &c.decay_rate {
                        ck.push(d.span(), "channel", "decay_rate needs profile = \"exponential\"");
                    }
                    PowerProfile::Equal
                }
                Some(("exponential", span)) => match &c.decay_rate {
                    Some(d) if *d.get_ref() >= 0.0 && d.get_ref().is_finite() => {
                        PowerProfile::ExponentialDecay { rate: *d.get_ref() }
                    }
                    Some(d) => {
                        ck.push(d.span(), "channel", "decay_rate must be non-negative and finite");
                        PowerProfile::Equal
                    }
                    None => {
                        ck.push(span, "channel", "profile = \"exponential\" needs decay_rate");
                        PowerProfile::Equal
                    }
                },
                Some((other, span)) => {
                    ck.push(span, "channel", format!("unknown profile '{other}' (equal, exponential)"));
                    PowerProfile::Equal
                }
            };
            let los = match c.los.as_ref().map(|p| (p.get_ref().as_str(), p.span())) {
                None | Some(("none", _)) => {
                    for (key, span) in [
                        ("rician_factor_db", c.rician_factor_db.as_ref().map(|p| p.span())),
                        ("los_cosine", c.los_cosine.as_ref().map(|p| p.span())),
                    ] {
                        if let Some(s) = span {
                            ck.push(s, "channel", format!("'{key}' needs los = \"rician\""));
                        }
                    }
                    LineOfSight::None
                }
                Some(("rician", span)) => {
                    let factor_db = match &c.rician_factor_db {
                        Some(k) if k.get_ref().is_finite() => *k.get_ref(),
                        Some(k) => {
                            ck.push(k.span(), "channel", "rician_factor_db must be finite");
                            0.0
                        }
                        None => {
                            ck.push(span, "channel", "los = \"rician\" needs rician_factor_db");
                            0.0
                        }
                    };
                    let cosine = match &c.los_cosine {
                        Some(v) if (-1.0..=1.0).contains(v.get_ref()) => *v.get_ref(),
                        Some(v) => {
                            ck.push(v.span(), "channel", "los_cosine must lie in [-1, 1]");
                            0.0
                        }
                        None => 0.0,
                    };
                    LineOfSight::Rician { factor_db, cosine }
                }
                Some((other, span)) => {
                    ck.push(span, "channel", format!("unknown los '{other}' (none, rician)"));
                    LineOfSight::None
                }
            };
            let Some(paths) = &c.paths else {
                ck.push(block, "channel", "model = \"sparse\" needs paths");
                return Vec::new();
            };
            if paths.get_ref().is_empty() {
                ck.push(paths.span(), "channel", "paths must not be empty");
            }
            let mut out: Vec<ChannelSeries> = Vec::new();
            for p in paths.get_ref() {
                let count = match p.get_ref() {
                    RawPaths::Count(n) if *n < 1 => {
                        ck.push(p.span(), "channel", format!("path count L = {n} must be at least 1"));
                        continue;
                    }
                    RawPaths::Count(n) => PathCount::Fixed(*n as usize),
                    RawPaths::Label(s) if s == "M" => PathCount::FullRank,
                    RawPaths::Label(s) => {
                        ck.push(p.span(), "channel", format!("path count '{s}' is neither an integer nor \"M\""));
                        continue;
                    }
                };
                if matches!(los, LineOfSight::Rician { .. }) && count == PathCount::Fixed(1) {
                    ck.push(p.span(), "channel", "a Rician channel needs L >= 2 (one LOS and at least one scattered path)");
                    continue;
                }
                let label = match count {
                    PathCount::Fixed(n) => format!("L{n}"),
                    PathCount::FullRank => "LM".into(),
                };
                if out.iter().any(|s| s.label == label) {
                    ck.push(p.span(), "channel", format!("path count {label} listed twice"));
                    continue;
                }
                out.push(ChannelSeries {
                    label,
                    kind: SeriesKind::Sparse {
                        paths: count,
                        los,
                        profile,
                    },
                });
            }
            out
        }
        other => {
            ck.push(c.model.span(), "channel", format!("unknown model '{other}' (rayleigh, sparse)"));
            Vec::new()
        }
    }
}

/// Rewrites `trials` and `seed` in the `[scenario]` table, leaving every
/// other key untouched. Used to record the effective configuration of a run.
pub fn apply_overrides(text: &str, trials: Option<u64>, seed: Option<u64>) -> std::result::Result<String, String> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.message().to_string())?;
    let scenario = table
        .get_mut("scenario")
        .and_then(|v| v.as_table_mut())
        .ok_or_else(|| "missing [scenario] table".to_string())?;
    if let Some(t) = trials {
        scenario.insert("trials".into(), toml::Value::Integer(to_i64(t)?));
    }
    if let Some(s) = seed {
        scenario.insert("seed".into(), toml::Value::Integer(to_i64(s)?));
    }
    toml::to_string(&table).map_err(|e| e.to_string())
}

fn to_i64(v: u64) -> std::result::Result<i64, String> {
    i64::try_from(v).map_err(|_| format!("{v} does not fit a TOML integer"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[scenario]
name = "t"
kind = "sweep"
seed = 1
trials = 1000

[constellation]
type = "pam"
levels = 4

[detector]
variants = ["aed_gaussian"]

[sweep]
antennas = [8, 16]
snr_db = [0, 10]
"#;

    fn diags(text: &str) -> Vec<Diagnostic> {
        validate(text)
    }

    #[test]
    fn base_is_valid() {
        let e = parse(BASE).unwrap();
        assert_eq!(e.constellation.len(), 4);
        assert_eq!(e.antennas, vec![8, 16]);
        assert_eq!(e.snr_db, vec![0.0, 10.0]);
        assert_eq!(e.channels.len(), 1);
    }

    #[test]
    fn custom_power_names_constellation_block() {
        let text = BASE.replace("type = \"pam\"\nlevels = 4", "type = \"custom\"\nenergies = [0.0, 1.0, 2.0, 4.0]");
        let d = diags(&text);
        assert_eq!(d.len(), 1, "{d:?}");
        assert_eq!(d[0].section, "constellation");
        assert_eq!(d[0].line, 8);
        assert!(d[0].to_string().contains("[constellation]"));
    }

    #[test]
    fn sparse_without_paths_is_flagged() {
        let text = format!("{BASE}\n[channel]\nmodel = \"sparse\"\npaths = [0]\n");
        let d = diags(&text);
        assert_eq!(d.len(), 1, "{d:?}");
        assert_eq!(d[0].section, "channel");
        assert_eq!(d[0].line, 21);
    }

    #[test]
    fn rician_needs_two_paths() {
        let text = format!("{BASE}\n[channel]\nmodel = \"sparse\"\npaths = [1]\nlos = \"rician\"\nrician_factor_db = 9.0\n");
        assert_eq!(diags(&text).len(), 1);
    }

    #[test]
    fn non_monotone_sweep_is_flagged() {
        let text = BASE.replace("antennas = [8, 16]", "antennas = [16, 8]");
        let d = diags(&text);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].line, 16);
    }

    #[test]
    fn fast_fading_rejects_instantaneous_detectors() {
        let text = BASE
            .replace("trials = 1000", "trials = 1000\nregime = \"fast\"")
            .replace("[\"aed_gaussian\"]", "[\"aed_gaussian\", \"ied\"]");
        let d = diags(&text);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].section, "detector");
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let text = BASE.replace("levels = 4", "levels = 4\nshape = 3");
        let d = diags(&text);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].line, 11);
        assert!(d[0].message.contains("shape"));
    }

    #[test]
    fn several_problems_are_reported_together() {
        let text = BASE
            .replace("trials = 1000", "trials = 0")
            .replace("snr_db = [0, 10]", "snr_db = [10, 0]");
        assert_eq!(diags(&text).len(), 2);
    }

    #[test]
    fn full_rank_paths_track_antennas() {
        let text = format!("{BASE}\n[channel]\nmodel = \"sparse\"\npaths = [9, \"M\"]\n");
        let e = parse(&text).unwrap();
        assert_eq!(e.channels.len(), 2);
        match e.channels[1].spec(16) {
            ChannelSpec::Sparse(s) => assert_eq!(s.paths, 16),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overrides_round_trip() {
        let text = apply_overrides(BASE, Some(10), Some(99)).unwrap();
        let e = parse(&text).unwrap();
        assert_eq!(e.trials, 10);
        assert_eq!(e.seed, 99);
        assert_eq!(e.antennas, vec![8, 16]);
    }
}
