//! Globally adaptive Gauss–Kronrod (7/15) integration, used to average
//! conditional error probabilities over channel-energy distributions.

use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for i in 0..7 {
        let dx = half * XGK[i];
        let s = f(center - dx) + f(center + dx);
        kron += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    Segment {
        a,
        b,
        value: kron * half,
        error: ((kron - gauss) * half).abs(),
    }
}

/// Integrates `f` over `[a, b]` until the estimated error drops below
/// `max(abs_tol, rel_tol * |I|)` or `max_segments` is reached.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_segments: usize,
) -> f64 {
    if a == b {
        return 0.0;
    }
    let first = kronrod(&mut f, a, b);
    let mut total = first.value;
    let mut error = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    while error > abs_tol.max(rel_tol * total.abs()) && heap.len() < max_segments {
        let worst = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (worst.a + worst.b);
        let left = kronrod(&mut f, worst.a, mid);
        let right = kronrod(&mut f, mid, worst.b);
        total += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // Re-sum to shed accumulated rounding from the incremental updates.
    heap.iter().map(|s| s.value).sum()
}

/// Integrates `exp(ln_f)` over the sorted breakpoints `grid`, returning the
/// natural log of the integral. The integrand is rescaled by its largest value
/// on the grid, so results far outside the `f64` range are still representable.
pub fn integrate_log<F: FnMut(f64) -> f64>(mut ln_f: F, grid: &[f64], rel_tol: f64) -> f64 {
    assert!(grid.len() >= 2, "need at least one interval");
    let mut peak = f64::NEG_INFINITY;
    for w in grid.windows(2) {
        for k in 0..=8 {
            let x = w[0] + (w[1] - w[0]) * k as f64 / 8.0;
            let v = ln_f(x);
            if v > peak {
                peak = v;
            }
        }
    }
    if peak == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut total = 0.0;
    for w in grid.windows(2) {
        total += integrate(|x| (ln_f(x) - peak).exp(), w[0], w[1], rel_tol, 0.0, 400);
    }
    // Pieces far below the peak are absorbed by the relative tolerance.
    total.ln() + peak
}

/// One Gauss–Kronrod panel of a vector-valued integrand.
#[derive(Debug, Clone)]
struct VecSegment {
    a: f64,
    b: f64,
    values: Vec<f64>,
    errors: Vec<f64>,
    priority: f64,
}

fn kronrod_vec<F: FnMut(f64) -> Vec<f64>>(f: &mut F, a: f64, b: f64, peaks: &[f64], scales: &[f64]) -> VecSegment {
    let n = peaks.len();
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut eval = |x: f64| -> Vec<f64> {
        f(x).iter().zip(peaks).map(|(v, p)| (v - p).exp()).collect()
    };
    let fc = eval(center);
    let mut kron: Vec<f64> = fc.iter().map(|v| v * WGK[7]).collect();
    let mut gauss: Vec<f64> = fc.iter().map(|v| v * WG[3]).collect();
    for i in 0..7 {
        let dx = half * XGK[i];
        let l = eval(center - dx);
        let r = eval(center + dx);
        for k in 0..n {
            let s = l[k] + r[k];
            kron[k] += WGK[i] * s;
            if i % 2 == 1 {
                gauss[k] += WG[i / 2] * s;
            }
        }
    }
    let values: Vec<f64> = kron.iter().map(|v| v * half).collect();
    let errors: Vec<f64> = kron.iter().zip(&gauss).map(|(k, g)| ((k - g) * half).abs()).collect();
    let priority = errors.iter().zip(scales).map(|(e, s)| e / s).fold(0.0, f64::max);
    VecSegment { a, b, values, errors, priority }
}

/// Vector form of [`integrate_log`]: integrates every component of
/// `exp(ln_f(x))` over the same breakpoints and returns the log integrals.
/// Refinement targets the component with the worst relative error.
pub fn integrate_log_vec<F: FnMut(f64) -> Vec<f64>>(mut ln_f: F, grid: &[f64], rel_tol: f64) -> Vec<f64> {
    assert!(grid.len() >= 2, "need at least one interval");
    let mut samples: Vec<(f64, Vec<f64>)> = Vec::new();
    for w in grid.windows(2) {
        for k in 0..=8 {
            let x = w[0] + (w[1] - w[0]) * k as f64 / 8.0;
            samples.push((x, ln_f(x)));
        }
    }
    let n = samples[0].1.len();
    let mut peaks = vec![f64::NEG_INFINITY; n];
    for (_, v) in &samples {
        for k in 0..n {
            peaks[k] = peaks[k].max(v[k]);
        }
    }
    let live: Vec<bool> = peaks.iter().map(|p| *p > f64::NEG_INFINITY).collect();
    let safe_peaks: Vec<f64> = peaks.iter().map(|p| if p.is_finite() { *p } else { 0.0 }).collect();
    // Crude trapezoid estimates set the error scale of each component.
    let mut scales = vec![0.0; n];
    for pair in samples.windows(2) {
        let dx = pair[1].0 - pair[0].0;
        for k in 0..n {
            let a = (pair[0].1[k] - safe_peaks[k]).exp();
            let b = (pair[1].1[k] - safe_peaks[k]).exp();
            scales[k] += 0.5 * dx * (a + b);
        }
    }
    for (k, s) in scales.iter_mut().enumerate() {
        if !live[k] || *s <= 0.0 {
            *s = f64::INFINITY;
        }
    }
    let mut segments: Vec<VecSegment> = grid
        .windows(2)
        .map(|w| kronrod_vec(&mut ln_f, w[0], w[1], &safe_peaks, &scales))
        .collect();
    let max_segments = 400 * (grid.len() - 1);
    while segments.len() < max_segments {
        let total: Vec<f64> = (0..n).map(|k| segments.iter().map(|s| s.errors[k]).sum::<f64>() / scales[k]).collect();
        if total.iter().all(|e| *e <= rel_tol) {
            break;
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.priority.total_cmp(&b.1.priority))
            .expect("non-empty");
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.a + seg.b);
        segments.push(kronrod_vec(&mut ln_f, seg.a, mid, &safe_peaks, &scales));
        segments.push(kronrod_vec(&mut ln_f, mid, seg.b, &safe_peaks, &scales));
    }
    (0..n)
        .map(|k| {
            if !live[k] {
                return f64::NEG_INFINITY;
            }
            let sum: f64 = segments.iter().map(|s| s.values[k]).sum();
            sum.ln() + safe_peaks[k]
        })
        .collect()
}
