//! Polarization observables and signal diagnostics computed from a [`TimeSeries`].
//!
//! Times are in μs and frequencies in MHz, matching the integrator.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::integrator::{Sample, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationSample {
    pub t: f64,
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
    /// tan χ with sin 2χ = S3/S0; zero when the field vanishes.
    pub ellipticity: f64,
    /// Major-axis angle from ẑ, in [−π/2, π/2).
    pub major_axis_angle: f64,
}

impl PolarizationSample {
    pub fn from_sample(s: &Sample) -> Self {
        let nz = s.a_z.norm_sqr();
        let nx = s.a_x.norm_sqr();
        let cross = s.a_z.conj() * s.a_x;
        let s0 = nz + nx;
        let s1 = nz - nx;
        let s2 = 2.0 * cross.re;
        let s3 = 2.0 * cross.im;
        let ellipticity = if s0 > 0.0 {
            (0.5 * (s3 / s0).clamp(-1.0, 1.0).asin()).tan()
        } else {
            0.0
        };
        let mut psi = 0.5 * s2.atan2(s1);
        if psi >= 0.5 * PI {
            psi -= PI;
        }
        Self {
            t: s.t,
            s0,
            s1,
            s2,
            s3,
            ellipticity,
            major_axis_angle: psi,
        }
    }
}

pub fn stokes(series: &TimeSeries) -> Vec<PolarizationSample> {
    series.samples.iter().map(PolarizationSample::from_sample).collect()
}

/// Power transmitted by a linear polarizer at angle `theta` from ẑ.
pub fn polarizer_intensity(s: &Sample, theta: f64) -> f64 {
    (s.a_z * theta.cos() + s.a_x * theta.sin()).norm_sqr()
}

/// `(t, |cosθ·a_z + sinθ·a_x|²)` for every sample.
pub fn polarizer_projection(series: &TimeSeries, theta: f64) -> Vec<(f64, f64)> {
    series.samples.iter().map(|s| (s.t, polarizer_intensity(s, theta))).collect()
}

/// Linear-interpolated percentile of already sorted data, `q` in [0, 100].
fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// (I_max − I_min)/(I_max + I_min) with 1st/99th-percentile extrema.
pub fn modulation_depth(intensity: &[f64]) -> Result<f64> {
    if intensity.is_empty() {
        return Err(Error::invalid("modulation depth needs a non-empty window"));
    }
    let mut v = intensity.to_vec();
    v.sort_by(f64::total_cmp);
    let lo = percentile_sorted(&v, 1.0);
    let hi = percentile_sorted(&v, 99.0);
    if hi + lo == 0.0 {
        return Ok(0.0);
    }
    Ok((hi - lo) / (hi + lo))
}

fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos()).collect()
}

fn demeaned(x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - mean).collect()
}

/// One-sided |FFT|² of the mean-removed, Hann-windowed signal (bins 0..=n/2).
fn windowed_power(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let w = hann(n);
    let mut buf: Vec<Complex64> = demeaned(x).iter().zip(&w).map(|(v, w)| Complex64::new(v * w, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf[..=n / 2].iter().map(|c| c.norm_sqr()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub frequencies: Vec<f64>,
    /// One-sided power spectral density, intensity² per MHz.
    pub power_density: Vec<f64>,
    pub dominant_peak: Option<f64>,
    pub spectral_flatness: f64,
}

/// Hann-windowed periodogram of the mean-removed signal.
///
/// Normalized so that `Σ power_density · Δf` equals the mean square of the
/// windowed, mean-removed input.
pub fn power_spectrum(x: &[f64], dt: f64) -> Result<SpectrumReport> {
    let n = x.len();
    if n < 64 {
        return Err(Error::invalid("spectrum needs at least 64 samples"));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("sample period must be positive"));
    }
    let raw = windowed_power(x);
    let scale = dt / n as f64;
    let power_density: Vec<f64> = raw
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let one_sided = if k == 0 || (n % 2 == 0 && k == n / 2) { 1.0 } else { 2.0 };
            p * scale * one_sided
        })
        .collect();
    let frequencies = (0..power_density.len()).map(|k| k as f64 / (n as f64 * dt)).collect();
    let dominant_peak = match dominant_period(x, dt)? {
        PeriodOutcome::Period(p) => Some(1.0 / p),
        PeriodOutcome::NoOscillation => None,
    };
    Ok(SpectrumReport {
        frequencies,
        power_density,
        dominant_peak,
        spectral_flatness: spectral_flatness(x)?,
    })
}

fn flatness_of(p: &[f64]) -> f64 {
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    if !(mean > 0.0) {
        return 0.0;
    }
    let floor = mean * 1e-300_f64.max(f64::MIN_POSITIVE);
    let log_mean = p.iter().map(|v| v.max(floor).ln()).sum::<f64>() / p.len() as f64;
    (log_mean.exp() / mean).clamp(0.0, 1.0)
}

/// Geometric-to-arithmetic mean ratio of the Welch-averaged periodogram
/// (eight-fold segmentation), DC bin excluded.
///
/// A single periodogram of white noise has exponentially distributed bins and
/// a flatness of only e^−γ ≈ 0.56; averaging brings it close to 1.
pub fn spectral_flatness(x: &[f64]) -> Result<f64> {
    if x.len() < 64 {
        return Err(Error::invalid("flatness needs at least 64 samples"));
    }
    Ok(flatness_of(&welch(x, welch_segment(x.len()))[1..]))
}

fn welch_segment(n: usize) -> usize {
    (n / 8).max(32)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PeriodOutcome {
    Period(f64),
    NoOscillation,
}

impl PeriodOutcome {
    pub fn period(self) -> Option<f64> {
        match self {
            PeriodOutcome::Period(p) => Some(p),
            PeriodOutcome::NoOscillation => None,
        }
    }
}

/// Welch average of Hann-windowed segments, 50% overlap.
fn welch(x: &[f64], seg: usize) -> Vec<f64> {
    let mut acc = vec![0.0; seg / 2 + 1];
    let mut count = 0;
    let mut start = 0;
    while start + seg <= x.len() {
        for (a, p) in acc.iter_mut().zip(windowed_power(&x[start..start + seg])) {
            *a += p;
        }
        count += 1;
        start += seg / 2;
    }
    acc.iter().map(|a| a / count as f64).collect()
}

/// Period of the strongest spectral line.
///
/// The line is detected on a Welch-averaged spectrum (it must stand at least
/// 3× above the median floor) and then located on the full-length periodogram
/// with log-parabolic peak interpolation.
pub fn dominant_period(x: &[f64], dt: f64) -> Result<PeriodOutcome> {
    let n = x.len();
    if n < 64 {
        return Err(Error::invalid("dominant period needs at least 64 samples"));
    }
    let seg = welch_segment(n);
    let w = welch(x, seg);
    let body = &w[1..];
    let mut sorted = body.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = percentile_sorted(&sorted, 50.0);
    let (kw, peak) = body
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i + 1, v) } else { acc });
    // bin 1 of a Hann-windowed segment mostly carries trend leakage
    if !(peak > 0.0) || peak < 3.0 * median || kw < 2 {
        return Ok(PeriodOutcome::NoOscillation);
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if var.sqrt() <= 1e-6 * mean.abs() {
        return Ok(PeriodOutcome::NoOscillation);
    }

    let full = windowed_power(x);
    let ratio = n as f64 / seg as f64;
    let centre = kw as f64 * ratio;
    let lo = ((centre - 1.5 * ratio).floor().max(1.0)) as usize;
    let hi = ((centre + 1.5 * ratio).ceil() as usize).min(full.len() - 1);
    let k = (lo..=hi).max_by(|&a, &b| full[a].total_cmp(&full[b])).unwrap_or(lo);
    let mut kf = k as f64;
    if k > 0 && k + 1 < full.len() && full[k - 1] > 0.0 && full[k + 1] > 0.0 {
        let (a, b, c) = (full[k - 1].ln(), full[k].ln(), full[k + 1].ln());
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            kf += (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
        }
    }
    let period = n as f64 * dt / kf;
    if period * 8.0 > n as f64 * dt {
        return Ok(PeriodOutcome::NoOscillation);
    }
    Ok(PeriodOutcome::Period(period))
}

/// Normalized autocovariance for lags `0..=max_lag`; lag 0 is exactly 1.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 2 {
        return Err(Error::invalid("autocorrelation needs at least two samples"));
    }
    let m = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex64> = demeaned(x).into_iter().map(|v| Complex64::new(v, 0.0)).collect();
    buf.resize(m, Complex64::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex64::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    let c0 = buf[0].re;
    if !(c0 > 0.0) {
        return Err(Error::invalid("autocorrelation of a constant signal is undefined"));
    }
    Ok(buf[..=max_lag.min(n - 1)].iter().map(|c| c.re / c0).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropTime {
    /// Drop time in μs, or the analysed window length when `dropped` is false.
    pub time: f64,
    pub dropped: bool,
}

/// First lag after which |C(τ)| stays below `threshold` out to a quarter of the window.
pub fn autocorrelation_drop_time(x: &[f64], dt: f64, threshold: f64) -> Result<DropTime> {
    let n = x.len();
    let max_lag = n / 4;
    let not_dropped = DropTime {
        time: n as f64 * dt,
        dropped: false,
    };
    if max_lag < 2 {
        return Err(Error::invalid("window too short for a drop time"));
    }
    let c = match autocorrelation(x, max_lag) {
        Ok(c) => c,
        Err(_) => return Ok(not_dropped),
    };
    let mut first = None;
    for lag in (0..c.len()).rev() {
        if c[lag].abs() >= threshold {
            break;
        }
        first = Some(lag);
    }
    // a tail of fewer than three lags is not evidence of decorrelation
    Ok(match first {
        Some(lag) if c.len() - lag >= 3 => DropTime {
            time: lag as f64 * dt,
            dropped: true,
        },
        _ => not_dropped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovEstimate {
    /// Largest exponent, μs⁻¹.
    pub value: f64,
    /// False when the divergence curve grows by less than a decade.
    pub valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChaosIndicators {
    pub spectral_flatness: f64,
    pub drop_time: DropTime,
    pub lyapunov: Option<LyapunovEstimate>,
}

pub fn chaos_indicators(x: &[f64], dt: f64) -> Result<ChaosIndicators> {
    Ok(ChaosIndicators {
        spectral_flatness: spectral_flatness(x)?,
        drop_time: autocorrelation_drop_time(x, dt, 0.1)?,
        lyapunov: largest_lyapunov(x, dt),
    })
}

/// Rosenstein nearest-neighbour divergence on a delay embedding.
///
/// Returns `None` when the signal is too short or has no variance.
pub fn largest_lyapunov(x: &[f64], dt: f64) -> Option<LyapunovEstimate> {
    const DIM: usize = 4;
    const MAX_POINTS: usize = 3000;
    let stride = x.len().div_ceil(MAX_POINTS).max(1);
    let xs: Vec<f64> = x.iter().step_by(stride).copied().collect();
    let dt = dt * stride as f64;
    let acf = autocorrelation(&xs, xs.len() / 4).ok()?;
    let delay = acf.iter().position(|&c| c < 1.0 / std::f64::consts::E).unwrap_or(1).max(1);
    let span = (DIM - 1) * delay;
    if xs.len() <= span + 50 {
        return None;
    }
    let m = xs.len() - span;
    let point = |i: usize| -> [f64; DIM] { std::array::from_fn(|d| xs[i + d * delay]) };
    let pts: Vec<[f64; DIM]> = (0..m).map(point).collect();
    let dist = |a: &[f64; DIM], b: &[f64; DIM]| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let theiler = span.max(delay * 2);
    let horizon = (m / 10).clamp(5, 200);

    let mut sum = vec![0.0; horizon];
    let mut count = vec![0usize; horizon];
    for i in 0..m {
        let mut best = (usize::MAX, f64::INFINITY);
        for j in 0..m {
            if i.abs_diff(j) <= theiler {
                continue;
            }
            let d = dist(&pts[i], &pts[j]);
            if d > 0.0 && d < best.1 {
                best = (j, d);
            }
        }
        let j = best.0;
        if j == usize::MAX {
            continue;
        }
        for k in 0..horizon {
            if i + k >= m || j + k >= m {
                break;
            }
            let d = dist(&pts[i + k], &pts[j + k]);
            if d > 0.0 {
                sum[k] += d.ln();
                count[k] += 1;
            }
        }
    }
    let curve: Vec<f64> = sum.iter().zip(&count).take_while(|(_, &c)| c > 0).map(|(s, &c)| s / c as f64).collect();
    if curve.len() < 3 {
        return None;
    }
    let y0 = curve[0];
    let ymax = curve.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let rise = ymax - y0;
    let stop = curve.iter().position(|&y| y >= y0 + 0.8 * rise).unwrap_or(curve.len() - 1).max(2);
    let pts: Vec<(f64, f64)> = curve[..=stop].iter().enumerate().map(|(k, &y)| (k as f64 * dt, y)).collect();
    let nn = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nn;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nn;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(LyapunovEstimate {
        value: sxy / sxx,
        valid: rise >= std::f64::consts::LN_10,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sample(a_z: Complex64, a_x: Complex64) -> Sample {
        Sample {
            t: 0.0,
            a_z,
            a_x,
            inversion: 0.5,
        }
    }

    fn sine(period: f64, dt: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * i as f64 * dt / period).sin()).collect()
    }

    fn white(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random::<f64>() - 0.5).collect()
    }

    fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
        let u1: f64 = rng.random::<f64>().max(1e-300);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }

    #[test]
    fn polarizer_examples() {
        assert_eq!(polarizer_intensity(&sample(c(0.0, 0.0), c(3.0, 1.0)), 0.0), 0.0);
        let s = sample(c(1.0, 0.0), c(1.0, 0.0));
        assert!((polarizer_intensity(&s, PI / 4.0) - 2.0).abs() < 1e-12);
        assert!(polarizer_intensity(&s, -PI / 4.0).abs() < 1e-12);
        let n: f64 = 5.0;
        let circ = sample(c(n.sqrt() / 2f64.sqrt(), 0.0), c(0.0, n.sqrt() / 2f64.sqrt()));
        for k in 0..50 {
            let th = -PI + k as f64 * 0.13;
            assert!((polarizer_intensity(&circ, th) - n / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn stokes_conventions() {
        let lin = PolarizationSample::from_sample(&sample(c(1.0, 0.0), c(1.0, 0.0)));
        assert!((lin.major_axis_angle - PI / 4.0).abs() < 1e-12);
        assert!(lin.ellipticity.abs() < 1e-12);
        let circ = PolarizationSample::from_sample(&sample(c(1.0, 0.0), c(0.0, 1.0)));
        assert!((circ.ellipticity - 1.0).abs() < 1e-12);
        let x = PolarizationSample::from_sample(&sample(c(0.0, 0.0), c(1.0, 0.0)));
        assert_eq!(x.major_axis_angle, -PI / 2.0);
        // b/a = 0.5 for a 2:1 axis ratio with quarter-wave phase
        let e = PolarizationSample::from_sample(&sample(c(2.0, 0.0), c(0.0, 1.0)));
        assert!((e.ellipticity - 0.5).abs() < 1e-12);
    }

    #[test]
    fn modulation_depth_examples() {
        let dt = 0.001;
        let w: Vec<f64> = (0..20_000).map(|i| (2.0 * PI * i as f64 * dt / 0.11).cos()).collect();
        assert_eq!(modulation_depth(&vec![4.0; 100]).unwrap(), 0.0);
        let full: Vec<f64> = w.iter().map(|v| 1.0 + v).collect();
        assert!((modulation_depth(&full).unwrap() - 1.0).abs() < 5e-3);
        // percentile extrema sit slightly inside the true extrema
        let third: Vec<f64> = w.iter().map(|v| 3.0 + v).collect();
        assert!((modulation_depth(&third).unwrap() - 1.0 / 3.0).abs() < 2e-3);
        assert!(modulation_depth(&[]).is_err());
    }

    #[test]
    fn period_of_sampled_sinusoid() {
        let x = sine(0.11, 0.01, 2000);
        let p = dominant_period(&x, 0.01).unwrap().period().unwrap();
        assert!((p / 0.11 - 1.0).abs() < 0.02, "{p}");
    }

    #[test]
    fn period_agrees_with_zero_crossings() {
        let dt = 0.003;
        let x = sine(0.173, dt, 3000);
        let crossings = x.windows(2).filter(|w| w[0] < 0.0 && w[1] >= 0.0).count();
        let by_crossings = (x.len() as f64 * dt) / crossings as f64;
        let p = dominant_period(&x, dt).unwrap().period().unwrap();
        assert!((p / by_crossings - 1.0).abs() < 0.02, "{p} vs {by_crossings}");
    }

    #[test]
    fn white_noise_has_no_period() {
        for seed in 0..5 {
            let x = white(4000, seed);
            assert_eq!(dominant_period(&x, 0.005).unwrap(), PeriodOutcome::NoOscillation);
        }
    }

    #[test]
    fn stronger_tone_wins() {
        let dt = 0.005;
        let x: Vec<f64> = (0..4000)
            .map(|i| {
                let t = i as f64 * dt;
                2.0 * (2.0 * PI * t / 0.2).sin() + (2.0 * PI * t / 0.07).sin()
            })
            .collect();
        let p = dominant_period(&x, dt).unwrap().period().unwrap();
        assert!((p / 0.2 - 1.0).abs() < 0.02, "{p}");
    }

    #[test]
    fn decay_and_constant_have_no_period() {
        let decay: Vec<f64> = (0..4000).map(|i| (-(i as f64) * 0.01).exp()).collect();
        assert_eq!(dominant_period(&decay, 0.01).unwrap(), PeriodOutcome::NoOscillation);
        let flat: Vec<f64> = (0..4000).map(|i| 2.2e6 + 1e-6 * (i as f64 * 0.3).sin()).collect();
        assert_eq!(dominant_period(&flat, 0.01).unwrap(), PeriodOutcome::NoOscillation);
    }

    #[test]
    fn parseval_holds() {
        let x: Vec<f64> = white(1001, 3).iter().enumerate().map(|(i, v)| v + (i as f64 * 0.2).sin()).collect();
        let dt = 0.005;
        let s = power_spectrum(&x, dt).unwrap();
        let df = s.frequencies[1];
        let total: f64 = s.power_density.iter().sum::<f64>() * df;
        let w = hann(x.len());
        let ms = demeaned(&x).iter().zip(&w).map(|(v, w)| (v * w).powi(2)).sum::<f64>() / x.len() as f64;
        assert!((total / ms - 1.0).abs() < 1e-6, "{total} {ms}");
    }

    #[test]
    fn flatness_examples() {
        assert!(spectral_flatness(&sine(0.11, 0.005, 4000)).unwrap() < 0.05);
        let f = spectral_flatness(&white(4000, 11)).unwrap();
        assert!(f > 0.8, "{f}");
    }

    #[test]
    fn drop_time_periodic_is_not_dropped() {
        let x = sine(0.11, 0.005, 4000);
        let d = autocorrelation_drop_time(&x, 0.005, 0.1).unwrap();
        assert!(!d.dropped);
        assert!((d.time - 20.0).abs() < 1e-9);
    }

    #[test]
    fn drop_time_of_correlated_noise() {
        let dt: f64 = 0.001;
        let tau: f64 = 0.02;
        let phi = (-dt / tau).exp();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut v = 0.0;
        let x: Vec<f64> = (0..400_000)
            .map(|_| {
                v = phi * v + (1.0 - phi * phi).sqrt() * gaussian(&mut rng);
                v
            })
            .collect();
        let d = autocorrelation_drop_time(&x, dt, 0.1).unwrap();
        assert!(d.dropped);
        let want = tau * 10f64.ln();
        assert!((d.time / want - 1.0).abs() < 0.2, "{} vs {want}", d.time);
    }

    #[test]
    fn lag_zero_is_one() {
        let c = autocorrelation(&white(500, 2), 10).unwrap();
        assert_eq!(c[0], 1.0);
    }

    #[test]
    fn lyapunov_of_logistic_map() {
        let mut v = 0.3;
        let x: Vec<f64> = (0..3000)
            .map(|_| {
                v = 4.0 * v * (1.0 - v);
                v
            })
            .collect();
        let l = largest_lyapunov(&x, 1.0).unwrap();
        assert!(l.value > 0.3 && l.value < 1.0, "{l:?}");
    }

    #[test]
    fn lyapunov_of_sinusoid_is_not_valid_chaos() {
        let l = largest_lyapunov(&sine(0.11, 0.005, 3000), 0.005).unwrap();
        assert!(!l.valid || l.value.abs() < 1.0, "{l:?}");
    }

    fn sample_strategy() -> impl Strategy<Value = Sample> {
        (-1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3).prop_map(|(a, b, x, y)| sample(c(a, b), c(x, y)))
    }

    proptest! {
        #[test]
        fn stokes_is_pure(s in sample_strategy()) {
            let p = PolarizationSample::from_sample(&s);
            let lhs = p.s0 * p.s0;
            let rhs = p.s1 * p.s1 + p.s2 * p.s2 + p.s3 * p.s3;
            prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.max(1e-300));
            prop_assert!(p.ellipticity.abs() <= 1.0);
            prop_assert!(p.major_axis_angle >= -PI / 2.0 && p.major_axis_angle < PI / 2.0);
        }

        #[test]
        fn polarizer_average_is_half_total(s in sample_strategy()) {
            let k = 64;
            let mean = (0..k).map(|i| polarizer_intensity(&s, PI * i as f64 / k as f64)).sum::<f64>() / k as f64;
            let s0 = s.a_z.norm_sqr() + s.a_x.norm_sqr();
            prop_assert!((mean - s0 / 2.0).abs() <= 1e-10 * s0.max(1.0));
        }

        #[test]
        fn period_is_scale_and_offset_invariant(scale in 0.01f64..100.0, offset in -50.0f64..50.0, period in 0.05f64..0.4) {
            let dt = 0.005;
            let x: Vec<f64> = (0..4000).map(|i| (2.0 * PI * i as f64 * dt / period).sin() + 0.3 * (2.0 * PI * i as f64 * dt / (period * 2.7)).cos()).collect();
            let y: Vec<f64> = x.iter().map(|v| scale * v + offset).collect();
            let a = dominant_period(&x, dt).unwrap().period().unwrap();
            let b = dominant_period(&y, dt).unwrap().period().unwrap();
            prop_assert!((a / b - 1.0).abs() < 1e-9);
        }
    }
}
