use std::io::Write;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A non-DC peak is dominant when it exceeds this multiple of the median amplitude.
pub const DOMINANCE_RATIO: f64 = 5.0;
/// ... and this multiple of the runner-up, so broadband spectra with several
/// comparable peaks have no dominant one.
pub const ISOLATION_RATIO: f64 = 2.0;
/// Non-DC content below this fraction of the signal scale counts as none;
/// it sits above the integrator's slow norm drift.
pub const SILENT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// `[t_start, t_end]` in model time.
    pub window: [f64; 2],
    /// `k / L` with `L` the window length in drive periods, up to Nyquist.
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub dominant_frequency: Option<f64>,
    /// `1 / dominant_frequency` when that is a whole number of periods.
    pub dominant_period: Option<usize>,
    /// Largest non-DC amplitude over the median non-DC amplitude.
    pub peak_ratio: f64,
    /// Largest non-DC amplitude over the second largest.
    pub isolation: f64,
}

impl SpectrumReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "freq,amplitude")?;
        for (f, a) in self.frequencies.iter().zip(&self.amplitudes) {
            writeln!(w, "{f},{a}")?;
        }
        Ok(())
    }
}

fn interpolate(times: &[f64], values: &[f64], t: f64) -> Option<f64> {
    let i = times.partition_point(|&s| s < t);
    if i < times.len() && (times[i] - t).abs() <= 1e-9 * t.abs().max(1.0) {
        return Some(values[i]);
    }
    if i == 0 || i == times.len() {
        return None;
    }
    let (t0, t1) = (times[i - 1], times[i]);
    let w = (t - t0) / (t1 - t0);
    Some(values[i - 1] + w * (values[i] - values[i - 1]))
}

/// One-sided amplitude spectrum of `values(times)` over `window`.
///
/// The signal is resampled linearly at `samples_per_period` points per drive
/// period, starting at `window[0]` and excluding `window[1]`. Amplitudes are
/// `|X_k| / n` at DC and Nyquist and `2 |X_k| / n` in between. A signal with
/// no non-DC content sampled once per period is reported as period 1.
/// Sampling once per period keeps only the subharmonic structure; denser
/// sampling lets the drive harmonics dominate.
pub fn fourier_spectrum(
    times: &[f64],
    values: &[f64],
    period: f64,
    window: [f64; 2],
    samples_per_period: usize,
) -> Result<SpectrumReport> {
    if times.len() != values.len() || times.is_empty() {
        return Err(Error::InvalidParams(
            "times and values must be non-empty and of equal length".into(),
        ));
    }
    if samples_per_period == 0 || !(period > 0.0) {
        return Err(Error::InvalidParams(
            "need a positive period and sampling rate".into(),
        ));
    }
    let periods = (window[1] - window[0]) / period;
    let whole = periods.round();
    if !(whole >= 1.0) || (periods - whole).abs() > 1e-9 * whole {
        return Err(Error::InvalidParams(format!(
            "window length must be a positive whole number of periods, got {periods}"
        )));
    }
    let len_periods = whole as usize;
    let n = len_periods * samples_per_period;
    let dt = period / samples_per_period as f64;
    let mut buf = Vec::with_capacity(n);
    for j in 0..n {
        let t = window[0] + j as f64 * dt;
        let v = interpolate(times, values, t).ok_or_else(|| {
            Error::InvalidParams(format!("window sample t = {t} lies outside the data"))
        })?;
        buf.push(Complex64::new(v, 0.0));
    }
    let scale = buf.iter().fold(0.0f64, |a, c| a.max(c.re.abs()));
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let half = n / 2;
    let mut frequencies = Vec::with_capacity(half + 1);
    let mut amplitudes = Vec::with_capacity(half + 1);
    for (k, c) in buf.iter().enumerate().take(half + 1) {
        let edge = k == 0 || (n % 2 == 0 && k == half);
        let factor = if edge { 1.0 } else { 2.0 };
        frequencies.push(k as f64 / len_periods as f64);
        amplitudes.push(factor * c.norm() / n as f64);
    }

    let mut dominant_frequency = None;
    let mut dominant_period = None;
    let mut peak_ratio = 0.0;
    let mut isolation = 0.0;
    if amplitudes.len() > 1 {
        let rest = &amplitudes[1..];
        let (kmax, peak) =
            rest.iter().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |b, (i, &a)| if a > b.1 { (i, a) } else { b },
            );
        let mut sorted = rest.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if sorted.len() % 2 == 1 {
            sorted[sorted.len() / 2]
        } else {
            0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
        };
        let second = if sorted.len() > 1 {
            sorted[sorted.len() - 2]
        } else {
            0.0
        };
        if peak <= SILENT * scale.max(f64::MIN_POSITIVE) {
            if samples_per_period == 1 {
                dominant_period = Some(1);
            }
        } else {
            peak_ratio = if median > 0.0 {
                peak / median
            } else {
                f64::INFINITY
            };
            isolation = if second > 0.0 {
                peak / second
            } else {
                f64::INFINITY
            };
            if peak_ratio > DOMINANCE_RATIO && isolation >= ISOLATION_RATIO {
                let k = kmax + 1;
                dominant_frequency = Some(frequencies[k]);
                if len_periods % k == 0 {
                    dominant_period = Some(len_periods / k);
                }
            }
        }
    } else if samples_per_period == 1 {
        dominant_period = Some(1);
    }
    Ok(SpectrumReport {
        window,
        frequencies,
        amplitudes,
        dominant_frequency,
        dominant_period,
        peak_ratio,
        isolation,
    })
}
