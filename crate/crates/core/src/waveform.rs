//! LFM chirp generation, FFT pulse compression and the closed-form
//! resolution / Doppler relations.
//!
//! Everything runs at complex baseband: the carrier only enters as the
//! phase term `exp(-j 2π f_c τ)` in the echo model.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Linear-frequency-modulated pulse parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChirpSpec {
    /// Carrier band start frequency, Hz.
    pub f_start: f64,
    /// Carrier band stop frequency, Hz.
    pub f_stop: f64,
    /// Pulse width T_p, s.
    pub pulse_width: f64,
    /// Pulse repetition interval, s.
    pub pri: f64,
    /// Complex baseband sampling rate, Hz.
    pub sample_rate: f64,
}

impl ChirpSpec {
    pub fn new(f_start: f64, f_stop: f64, pulse_width: f64, pri: f64, sample_rate: f64) -> Result<Self> {
        let spec = ChirpSpec {
            f_start,
            f_stop,
            pulse_width,
            pri,
            sample_rate,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// 32–40 GHz, 4 µs pulse, 5 µs PRI, 10 GHz complex sampling.
    pub fn band_8ghz() -> Self {
        ChirpSpec {
            f_start: 32e9,
            f_stop: 40e9,
            pulse_width: 4e-6,
            pri: 5e-6,
            sample_rate: 10e9,
        }
    }

    /// 36–40 GHz, 4 µs pulse, 5 µs PRI, 10 GHz complex sampling.
    pub fn band_4ghz() -> Self {
        ChirpSpec {
            f_start: 36e9,
            ..Self::band_8ghz()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.f_start, self.f_stop, self.pulse_width, self.pri, self.sample_rate]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::param("chirp parameters must be finite"));
        }
        if self.f_start <= 0.0 || self.f_stop <= self.f_start {
            return Err(Error::param(format!(
                "chirp band must satisfy 0 < f_start < f_stop (got {} .. {})",
                self.f_start, self.f_stop
            )));
        }
        if self.pulse_width <= 0.0 || self.pulse_width >= self.pri {
            return Err(Error::param(format!(
                "pulse width {} s must be positive and shorter than the PRI {} s",
                self.pulse_width, self.pri
            )));
        }
        if self.sample_rate < self.bandwidth() {
            return Err(Error::param(format!(
                "sample rate {} Hz is below the chirp bandwidth {} Hz",
                self.sample_rate,
                self.bandwidth()
            )));
        }
        if self.n_samples() == 0 {
            return Err(Error::param("pulse width shorter than one sample"));
        }
        Ok(())
    }

    pub fn bandwidth(&self) -> f64 {
        self.f_stop - self.f_start
    }

    pub fn center_frequency(&self) -> f64 {
        0.5 * (self.f_start + self.f_stop)
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.center_frequency()
    }

    /// Sweep rate B / T_p in Hz/s.
    pub fn chirp_rate(&self) -> f64 {
        self.bandwidth() / self.pulse_width
    }

    /// Number of replica samples, `round(T_p · f_s)`.
    pub fn n_samples(&self) -> usize {
        (self.pulse_width * self.sample_rate).round() as usize
    }

    /// Analytic baseband pulse value at time `t` after the pulse start.
    #[inline]
    pub(crate) fn pulse_value(&self, t: f64) -> Complex64 {
        if t < 0.0 || t >= self.pulse_width {
            return Complex64::new(0.0, 0.0);
        }
        let u = t - 0.5 * self.pulse_width;
        Complex64::from_polar(1.0, PI * self.chirp_rate() * u * u)
    }
}

/// Uniformly sampled complex signal.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSeries {
    pub samples: Vec<Complex64>,
    pub sample_rate: f64,
    /// Time of the first sample, s.
    pub t0: f64,
}

impl ComplexSeries {
    pub fn new(samples: Vec<Complex64>, sample_rate: f64, t0: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::param("complex series must be non-empty"));
        }
        if !(sample_rate > 0.0) {
            return Err(Error::param("sample rate must be positive"));
        }
        Ok(ComplexSeries {
            samples,
            sample_rate,
            t0,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time_of(&self, index: usize) -> f64 {
        self.t0 + index as f64 / self.sample_rate
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }
}

/// Taper applied to the replica before correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    #[default]
    Rectangular,
    Hamming,
}

impl Window {
    fn weight(self, n: usize, len: usize) -> f64 {
        match self {
            Window::Rectangular => 1.0,
            Window::Hamming if len < 2 => 1.0,
            Window::Hamming => 0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos(),
        }
    }
}

/// Samples `s(t) = exp(jπ(B/T_p)(t − T_p/2)²)` on `[0, T_p)`.
pub fn generate_chirp(spec: &ChirpSpec) -> Result<ComplexSeries> {
    spec.validate()?;
    let n = spec.n_samples();
    let samples = (0..n)
        .map(|i| spec.pulse_value(i as f64 / spec.sample_rate))
        .collect();
    ComplexSeries::new(samples, spec.sample_rate, 0.0)
}

/// Cross-correlates `echo` with `replica` (rectangular window).
///
/// The output has `len(echo) + len(replica) − 1` samples and its time axis
/// is the round-trip delay: a copy of the replica that starts at time `τ`
/// inside the echo peaks at output time `τ`.
pub fn matched_filter(echo: &ComplexSeries, replica: &ComplexSeries) -> Result<ComplexSeries> {
    matched_filter_windowed(echo, replica, Window::Rectangular)
}

pub fn matched_filter_windowed(
    echo: &ComplexSeries,
    replica: &ComplexSeries,
    window: Window,
) -> Result<ComplexSeries> {
    PulseCompressor::new(replica, echo.len(), window)?.compress(echo)
}

/// Reusable FFT correlator for many echoes of the same length.
pub struct PulseCompressor {
    replica_len: usize,
    echo_len: usize,
    fft_len: usize,
    sample_rate: f64,
    replica_t0: f64,
    /// Conjugated spectrum of the zero-padded, windowed replica.
    replica_spectrum: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl PulseCompressor {
    pub fn new(replica: &ComplexSeries, echo_len: usize, window: Window) -> Result<Self> {
        if replica.is_empty() || echo_len == 0 {
            return Err(Error::param("matched filter inputs must be non-empty"));
        }
        let replica_len = replica.len();
        let fft_len = (echo_len + replica_len - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(fft_len);
        let inverse = planner.plan_fft_inverse(fft_len);

        let mut spectrum = vec![Complex64::new(0.0, 0.0); fft_len];
        for (n, (dst, s)) in spectrum.iter_mut().zip(&replica.samples).enumerate() {
            *dst = s * window.weight(n, replica_len);
        }
        forward.process(&mut spectrum);
        spectrum.iter_mut().for_each(|v| *v = v.conj());

        Ok(PulseCompressor {
            replica_len,
            echo_len,
            fft_len,
            sample_rate: replica.sample_rate,
            replica_t0: replica.t0,
            replica_spectrum: spectrum,
            forward,
            inverse,
        })
    }

    pub fn output_len(&self) -> usize {
        self.echo_len + self.replica_len - 1
    }

    pub fn compress(&self, echo: &ComplexSeries) -> Result<ComplexSeries> {
        if echo.sample_rate != self.sample_rate {
            return Err(Error::param(format!(
                "sample rate mismatch: echo {} Hz vs replica {} Hz",
                echo.sample_rate, self.sample_rate
            )));
        }
        if echo.len() != self.echo_len {
            return Err(Error::param(format!(
                "echo length {} differs from the planned length {}",
                echo.len(),
                self.echo_len
            )));
        }
        let n = self.fft_len;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        buf[..echo.len()].copy_from_slice(&echo.samples);
        self.forward.process(&mut buf);
        for (b, r) in buf.iter_mut().zip(&self.replica_spectrum) {
            *b *= r;
        }
        self.inverse.process(&mut buf);

        let scale = 1.0 / n as f64;
        let lead = self.replica_len - 1;
        // output index i ↔ lag i − (L_r − 1); negative lags wrap to the tail
        let samples = (0..self.output_len())
            .map(|i| {
                let idx = if i < lead { n - lead + i } else { i - lead };
                buf[idx] * scale
            })
            .collect();
        let t0 = echo.t0 - self.replica_t0 - lead as f64 / self.sample_rate;
        ComplexSeries::new(samples, self.sample_rate, t0)
    }
}

/// Range resolution `c / (2B)` in metres.
pub fn range_resolution(bandwidth_hz: f64) -> Result<f64> {
    if !(bandwidth_hz > 0.0) {
        return Err(Error::param(format!("bandwidth must be positive (got {bandwidth_hz})")));
    }
    Ok(SPEED_OF_LIGHT / (2.0 * bandwidth_hz))
}

/// Cross-range resolution `c / (2 θ f_c)` in metres.
pub fn azimuth_resolution(f_c: f64, total_rotation_rad: f64) -> Result<f64> {
    if !(f_c > 0.0) || !(total_rotation_rad > 0.0) {
        return Err(Error::param(format!(
            "centre frequency and rotation must be positive (got {f_c}, {total_rotation_rad})"
        )));
    }
    Ok(SPEED_OF_LIGHT / (2.0 * total_rotation_rad * f_c))
}

/// Doppler shift `2 w y / λ` in Hz of a scatterer at cross-range `y`.
pub fn doppler_shift(rotation_rate_rad_s: f64, wavelength_m: f64, cross_range_m: f64) -> Result<f64> {
    if !(wavelength_m > 0.0) {
        return Err(Error::param(format!("wavelength must be positive (got {wavelength_m})")));
    }
    Ok(2.0 * rotation_rate_rad_s * cross_range_m / wavelength_m)
}
