//! Range profiles and back-projection image formation.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scene::EchoMatrix;
use crate::waveform::{generate_chirp, range_resolution, ChirpSpec, ComplexSeries, PulseCompressor, Window, SPEED_OF_LIGHT};

/// High-resolution range profile of one pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct Hrrp {
    /// |compressed profile| per range bin.
    pub magnitudes: Vec<f64>,
    /// Range of bin 0 relative to the rotation centre, m.
    pub range_start: f64,
    pub bin_spacing: f64,
    pub complex_profile: Vec<Complex64>,
}

impl Hrrp {
    pub fn len(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitudes.is_empty()
    }

    pub fn range_of(&self, bin: usize) -> f64 {
        self.range_start + bin as f64 * self.bin_spacing
    }

    /// Bins whose range lies in `[lo, hi]`.
    pub fn crop(&self, lo: f64, hi: f64) -> Hrrp {
        let first = ((lo - self.range_start) / self.bin_spacing).ceil().max(0.0) as usize;
        let last = (((hi - self.range_start) / self.bin_spacing).floor() as isize + 1)
            .clamp(0, self.len() as isize) as usize;
        let first = first.min(last);
        Hrrp {
            magnitudes: self.magnitudes[first..last].to_vec(),
            range_start: self.range_of(first),
            bin_spacing: self.bin_spacing,
            complex_profile: self.complex_profile[first..last].to_vec(),
        }
    }

    pub fn peak_bin(&self) -> Option<usize> {
        (0..self.len()).max_by(|&a, &b| self.magnitudes[a].total_cmp(&self.magnitudes[b]))
    }

    /// Band-limited interpolation onto a grid `factor` times finer.
    ///
    /// Crop first: the profile is treated as one period of a periodic signal.
    pub fn upsampled(&self, factor: usize) -> Result<Hrrp> {
        if factor == 0 {
            return Err(Error::param("upsampling factor must be at least 1"));
        }
        let n = self.len();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n * factor);
        let complex_profile = fft_upsample(self.complex_profile.clone(), factor, fwd.as_ref(), inv.as_ref());
        Ok(Hrrp {
            magnitudes: complex_profile.iter().map(|v| v.norm()).collect(),
            range_start: self.range_start,
            bin_spacing: self.bin_spacing / factor as f64,
            complex_profile,
        })
    }
}

/// Depth in dB of the saddle between the two strongest local maxima inside
/// `[lo, hi]`, measured from the weaker of the two; `None` with fewer than two maxima.
pub fn saddle_depth_db(profile: &Hrrp, lo: f64, hi: f64) -> Option<f64> {
    let part = profile.crop(lo, hi);
    let m = &part.magnitudes;
    let mut peaks: Vec<usize> = (1..m.len().saturating_sub(1))
        .filter(|&i| m[i] > m[i - 1] && m[i] >= m[i + 1])
        .collect();
    if peaks.len() < 2 {
        return None;
    }
    peaks.sort_by(|&a, &b| m[b].total_cmp(&m[a]));
    let (a, b) = (peaks[0].min(peaks[1]), peaks[0].max(peaks[1]));
    let saddle = m[a..=b].iter().cloned().fold(f64::INFINITY, f64::min);
    Some(20.0 * (m[a].min(m[b]) / saddle).log10())
}

/// Pulse-compresses one echo row and maps delay to range relative to R₀.
pub fn form_hrrp(echo_row: &ComplexSeries, chirp: &ChirpSpec, standoff_range: f64) -> Result<Hrrp> {
    let replica = generate_chirp(chirp)?;
    if echo_row.sample_rate != replica.sample_rate {
        return Err(Error::param(format!(
            "echo sampled at {} Hz but chirp at {} Hz",
            echo_row.sample_rate, replica.sample_rate
        )));
    }
    let compressor = PulseCompressor::new(&replica, echo_row.len(), Window::Rectangular)?;
    let out = compressor.compress(echo_row)?;
    Ok(hrrp_from_compressed(&out, standoff_range))
}

pub(crate) fn hrrp_from_compressed(out: &ComplexSeries, standoff_range: f64) -> Hrrp {
    Hrrp {
        magnitudes: out.samples.iter().map(|v| v.norm()).collect(),
        range_start: SPEED_OF_LIGHT * out.t0 / 2.0 - standoff_range,
        bin_spacing: SPEED_OF_LIGHT / (2.0 * out.sample_rate),
        complex_profile: out.samples.clone(),
    }
}

/// Pixel lattice in the radar frame, x down-range (columns), y cross-range (rows).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ImageGrid {
    pub n_x: usize,
    pub n_y: usize,
    /// Pixel pitch, m (same on both axes).
    pub pixel_spacing: f64,
    /// Position of pixel `(n_y/2, n_x/2)`, m.
    pub center: (f64, f64),
}

impl ImageGrid {
    pub fn new(n_x: usize, n_y: usize, pixel_spacing: f64) -> Result<Self> {
        let grid = ImageGrid {
            n_x,
            n_y,
            pixel_spacing,
            center: (0.0, 0.0),
        };
        grid.validate()?;
        Ok(grid)
    }

    /// 128 × 128 at half the range resolution of `bandwidth_hz`.
    pub fn for_bandwidth(bandwidth_hz: f64) -> Result<Self> {
        Self::new(128, 128, range_resolution(bandwidth_hz)? / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_x < 8 || self.n_y < 8 {
            return Err(Error::param(format!("image grid must be at least 8×8 (got {}×{})", self.n_y, self.n_x)));
        }
        if !(self.pixel_spacing > 0.0) || !self.pixel_spacing.is_finite() {
            return Err(Error::param("pixel spacing must be positive"));
        }
        Ok(())
    }

    pub fn x_of(&self, col: usize) -> f64 {
        self.center.0 + (col as f64 - (self.n_x / 2) as f64) * self.pixel_spacing
    }

    pub fn y_of(&self, row: usize) -> f64 {
        self.center.1 + (row as f64 - (self.n_y / 2) as f64) * self.pixel_spacing
    }

    /// Largest distance of any pixel from the rotation centre.
    fn max_radius(&self) -> f64 {
        let xs = [self.x_of(0), self.x_of(self.n_x - 1)];
        let ys = [self.y_of(0), self.y_of(self.n_y - 1)];
        xs.iter()
            .flat_map(|x| ys.iter().map(move |y| x.hypot(*y)))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct ImageMeta {
    pub bandwidth: f64,
    pub initial_angle: f64,
    pub class_id: Option<usize>,
}

/// Real image normalized to `[0, 1]`, row-major `height × width`.
#[derive(Debug, Clone, PartialEq)]
pub struct IsarImage {
    pub pixels: Vec<f32>,
    pub height: usize,
    pub width: usize,
    pub grid: ImageGrid,
    pub meta: ImageMeta,
}

impl IsarImage {
    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.width + col]
    }

    pub fn argmax(&self) -> (usize, usize) {
        let i = (0..self.pixels.len())
            .max_by(|&a, &b| self.pixels[a].total_cmp(&self.pixels[b]).then(b.cmp(&a)))
            .unwrap_or(0);
        (i / self.width, i % self.width)
    }
}

/// Scales a non-negative raster so that its maximum is 1.
pub fn normalize(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::param("normalize expects finite non-negative values"));
    }
    let max = raw.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return Ok(vec![0.0; raw.len()]);
    }
    Ok(raw.iter().map(|v| v / max).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct BpOptions {
    /// FFT upsampling of compressed profiles before linear interpolation.
    pub upsample: usize,
    /// Euclidean slant range instead of the planar far-field approximation.
    pub exact_range: bool,
    /// Pose the radar-frame grid refers to; `None` uses the mid-aperture angle.
    pub reference_angle: Option<f64>,
    pub hamming: bool,
}

impl Default for BpOptions {
    fn default() -> Self {
        BpOptions {
            upsample: 8,
            exact_range: false,
            reference_angle: None,
            hamming: false,
        }
    }
}

/// Band-limited interpolation by zero-padding the spectrum; `fwd`/`inv` have
/// lengths `seg.len()` and `seg.len() · factor`.
fn fft_upsample(mut seg: Vec<Complex64>, factor: usize, fwd: &dyn Fft<f64>, inv: &dyn Fft<f64>) -> Vec<Complex64> {
    let n = seg.len();
    if factor <= 1 || n == 0 {
        return seg;
    }
    let up_len = n * factor;
    fwd.process(&mut seg);
    let mut spec = vec![Complex64::new(0.0, 0.0); up_len];
    let half = n / 2;
    spec[..half].copy_from_slice(&seg[..half]);
    if n % 2 == 1 {
        spec[half] = seg[half];
        spec[up_len - half..].copy_from_slice(&seg[half + 1..]);
    } else {
        // split the Nyquist bin between both ends
        spec[half] = seg[half] * 0.5;
        spec[up_len - half] = seg[half] * 0.5;
        spec[up_len - half + 1..].copy_from_slice(&seg[half + 1..]);
    }
    inv.process(&mut spec);
    let scale = 1.0 / n as f64;
    spec.iter_mut().for_each(|v| *v *= scale);
    spec
}

/// Pulse-compressed, cropped and upsampled slow-time data.
struct ProfileStack {
    profiles: Vec<Complex64>,
    len: usize,
    /// Absolute delay of sample 0, s.
    t0: f64,
    dt: f64,
}

impl ProfileStack {
    fn build(echoes: &EchoMatrix, max_radius: f64, opts: &BpOptions) -> Result<Self> {
        let chirp = &echoes.chirp;
        let fs = chirp.sample_rate;
        let replica = generate_chirp(chirp)?;
        let window = if opts.hamming { Window::Hamming } else { Window::Rectangular };
        let compressor = PulseCompressor::new(&replica, echoes.n_samples, window)?;

        let r0 = echoes.motion.standoff_range;
        let reach = if opts.exact_range {
            (r0 + max_radius).hypot(max_radius) - r0
        } else {
            max_radius
        };
        let margin = 32.0;
        let lead = (replica.len() - 1) as f64;
        let out_t0 = echoes.t0 - lead / fs;
        let lo = ((2.0 * (r0 - reach) / SPEED_OF_LIGHT - out_t0) * fs - margin).floor().max(0.0) as usize;
        let hi = (((2.0 * (r0 + reach) / SPEED_OF_LIGHT - out_t0) * fs + margin).ceil() as usize)
            .min(compressor.output_len());
        let crop = hi.saturating_sub(lo).max(1);
        let factor = opts.upsample.max(1);
        let up_len = crop * factor;

        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(crop);
        let inv = planner.plan_fft_inverse(up_len);
        let rows: Vec<Vec<Complex64>> = (0..echoes.n_pulses)
            .into_par_iter()
            .map(|p| -> Result<Vec<Complex64>> {
                let out = compressor.compress(&echoes.row_series(p))?;
                let seg: Vec<Complex64> = out.samples[lo..lo + crop].to_vec();
                Ok(fft_upsample(seg, factor, fwd.as_ref(), inv.as_ref()))
            })
            .collect::<Result<_>>()?;

        Ok(ProfileStack {
            profiles: rows.into_iter().flatten().collect(),
            len: up_len,
            t0: out_t0 + lo as f64 / fs,
            dt: 1.0 / (fs * factor as f64),
        })
    }

    #[inline]
    fn sample(&self, pulse: usize, delay: f64) -> Option<Complex64> {
        let pos = (delay - self.t0) / self.dt;
        if !(pos >= 0.0) {
            return None;
        }
        let i = pos.floor() as usize;
        if i + 1 >= self.len {
            return None;
        }
        let frac = pos - i as f64;
        let row = &self.profiles[pulse * self.len..(pulse + 1) * self.len];
        Some(row[i] * (1.0 - frac) + row[i + 1] * frac)
    }
}

/// Coherent back-projection sum per pixel, before taking magnitudes.
///
/// Pixels whose delay falls outside the receive window contribute zero.
pub fn back_projection_complex(echoes: &EchoMatrix, grid: &ImageGrid, opts: &BpOptions) -> Result<Vec<Complex64>> {
    grid.validate()?;
    if echoes.n_pulses == 0 || echoes.data.is_empty() {
        return Err(Error::param("echo matrix is empty"));
    }
    let nyquist = range_resolution(echoes.chirp.bandwidth())? / 2.0;
    if grid.pixel_spacing > nyquist * (1.0 + 1e-9) {
        return Err(Error::param(format!(
            "pixel spacing {} m exceeds half the range resolution ({} m)",
            grid.pixel_spacing, nyquist
        )));
    }
    let stack = ProfileStack::build(echoes, grid.max_radius(), opts)?;
    let reference = opts.reference_angle.unwrap_or_else(|| echoes.mid_angle());
    let rotations: Vec<(f64, f64)> = echoes
        .pulse_angles
        .iter()
        .map(|a| (a - reference).sin_cos())
        .collect();
    let r0 = echoes.motion.standoff_range;
    let k = 2.0 * PI * echoes.chirp.center_frequency() * 2.0 / SPEED_OF_LIGHT;

    let mut out = vec![Complex64::new(0.0, 0.0); grid.n_x * grid.n_y];
    out.par_chunks_mut(grid.n_x).enumerate().for_each(|(row, line)| {
        let y = grid.y_of(row);
        for (p, &(sin, cos)) in rotations.iter().enumerate() {
            // planar range is linear along a row, so the carrier turns by a fixed step per column
            let mut carrier = Complex64::from_polar(1.0, k * (r0 + grid.x_of(0) * cos - y * sin));
            let step = Complex64::from_polar(1.0, k * grid.pixel_spacing * cos);
            for (col, acc) in line.iter_mut().enumerate() {
                let x = grid.x_of(col);
                let xr = x * cos - y * sin;
                let r = if opts.exact_range {
                    let r = (r0 + xr).hypot(x * sin + y * cos);
                    carrier = Complex64::from_polar(1.0, k * r);
                    r
                } else {
                    r0 + xr
                };
                if let Some(v) = stack.sample(p, 2.0 * r / SPEED_OF_LIGHT) {
                    *acc += v * carrier;
                }
                if !opts.exact_range {
                    carrier *= step;
                }
            }
        }
    });
    Ok(out)
}

/// Back-projection image with default options (8× upsampling, planar range).
pub fn back_projection(echoes: &EchoMatrix, grid: &ImageGrid) -> Result<IsarImage> {
    back_projection_with(echoes, grid, &BpOptions::default())
}

pub fn back_projection_with(echoes: &EchoMatrix, grid: &ImageGrid, opts: &BpOptions) -> Result<IsarImage> {
    let acc = back_projection_complex(echoes, grid, opts)?;
    let raw: Vec<f64> = acc.iter().map(|v| v.norm()).collect();
    let pixels = normalize(&raw)?.into_iter().map(|v| v as f32).collect();
    Ok(IsarImage {
        pixels,
        height: grid.n_y,
        width: grid.n_x,
        grid: *grid,
        meta: ImageMeta {
            bandwidth: echoes.chirp.bandwidth(),
            initial_angle: echoes.motion.initial_angle,
            class_id: None,
        },
    })
}

/// Bilinear resampling (pixel-centre aligned), re-normalized to `[0, 1]`.
pub fn resample_to(image: &IsarImage, out_h: usize, out_w: usize) -> Result<IsarImage> {
    if out_h < 8 || out_w < 8 {
        return Err(Error::param(format!("output size must be at least 8×8 (got {out_h}×{out_w})")));
    }
    let (in_h, in_w) = (image.height, image.width);
    let axis = |n_out: usize, n_in: usize| -> Vec<(usize, usize, f64)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|d| {
                let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let rows = axis(out_h, in_h);
    let cols = axis(out_w, in_w);
    let src = |r: usize, c: usize| image.pixels[r * in_w + c] as f64;
    let mut raw = Vec::with_capacity(out_h * out_w);
    for &(r0, r1, fr) in &rows {
        for &(c0, c1, fc) in &cols {
            let top = src(r0, c0) * (1.0 - fc) + src(r0, c1) * fc;
            let bottom = src(r1, c0) * (1.0 - fc) + src(r1, c1) * fc;
            raw.push((top * (1.0 - fr) + bottom * fr).max(0.0));
        }
    }
    let pixels = normalize(&raw)?.into_iter().map(|v| v as f32).collect();
    let grid = ImageGrid {
        n_x: out_w,
        n_y: out_h,
        pixel_spacing: image.grid.pixel_spacing * in_w as f64 / out_w as f64,
        center: image.grid.center,
    };
    Ok(IsarImage {
        pixels,
        height: out_h,
        width: out_w,
        grid,
        meta: image.meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{synthesize_echoes, MotionState, Scatterer, TargetModel};
    use crate::waveform::azimuth_resolution;

    fn chirp_8ghz() -> ChirpSpec {
        ChirpSpec::new(32e9, 40e9, 0.1e-6, 100e-6, 10e9).unwrap()
    }

    fn point(x: f64, y: f64, a: f64) -> TargetModel {
        TargetModel::new("p", vec![Scatterer::new(x, y, a)], 0).unwrap()
    }

    fn test_image(pixels: Vec<f32>, h: usize, w: usize) -> IsarImage {
        IsarImage {
            pixels,
            height: h,
            width: w,
            grid: ImageGrid::new(w, h, 0.01).unwrap(),
            meta: ImageMeta::default(),
        }
    }

    #[test]
    fn hrrp_peak_tracks_scatterer_range() {
        let chirp = chirp_8ghz();
        let motion = MotionState::turntable(0.0).at_rest(0.0);
        for (x, tol) in [(0.0, 0.5), (0.1, 1.0), (-0.07, 1.0)] {
            let echoes = synthesize_echoes(&point(x, 0.0, 1.0), &motion, &chirp, 1, None, 0).unwrap();
            let hrrp = form_hrrp(&echoes.row_series(0), &chirp, motion.standoff_range).unwrap();
            let peak = hrrp.peak_bin().unwrap();
            assert!(
                (hrrp.range_of(peak) - x).abs() <= tol * hrrp.bin_spacing,
                "x={x}: peak at {}",
                hrrp.range_of(peak)
            );
        }
    }

    proptest::proptest! {
        #[test]
        fn upsampling_keeps_original_samples(
            values in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..40),
            factor in 1usize..6,
        ) {
            let profile: Vec<Complex64> = values.iter().map(|&(re, im)| Complex64::new(re, im)).collect();
            let hrrp = Hrrp {
                magnitudes: profile.iter().map(|v| v.norm()).collect(),
                range_start: -0.1,
                bin_spacing: 0.015,
                complex_profile: profile.clone(),
            };
            let up = hrrp.upsampled(factor).unwrap();
            proptest::prop_assert_eq!(up.len(), profile.len() * factor);
            for (k, v) in profile.iter().enumerate() {
                proptest::prop_assert!((up.complex_profile[k * factor] - v).norm() < 1e-9);
                proptest::prop_assert!((up.range_of(k * factor) - hrrp.range_of(k)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn upsampled_point_peaks_at_its_range() {
        let chirp = chirp_8ghz();
        let motion = MotionState::turntable(0.0).at_rest(0.0);
        let echoes = synthesize_echoes(&point(0.004, 0.0, 1.0), &motion, &chirp, 1, None, 0).unwrap();
        let hrrp = form_hrrp(&echoes.row_series(0), &chirp, motion.standoff_range).unwrap();
        let up = hrrp.crop(-0.2, 0.2).upsampled(16).unwrap();
        let peak = up.range_of(up.peak_bin().unwrap());
        assert!((peak - 0.004).abs() <= up.bin_spacing, "peak at {peak}");
        assert!(hrrp.upsampled(0).is_err());
    }

    #[test]
    fn saddle_depth_of_synthetic_profiles() {
        let profile = |m: Vec<f64>| Hrrp {
            complex_profile: m.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            magnitudes: m,
            range_start: 0.0,
            bin_spacing: 1.0,
        };
        let two = profile(vec![0.0, 1.0, 0.5, 0.8, 0.0]);
        let depth = saddle_depth_db(&two, 0.0, 4.0).unwrap();
        assert!((depth - 20.0 * (0.8f64 / 0.5).log10()).abs() < 1e-12);
        assert_eq!(saddle_depth_db(&profile(vec![0.0, 0.5, 1.0, 0.5, 0.0]), 0.0, 4.0), None);
        assert_eq!(saddle_depth_db(&two, 0.0, 2.0), None);
    }

    #[test]
    fn hrrp_peak_is_linear_in_amplitude() {
        let chirp = chirp_8ghz();
        let motion = MotionState::turntable(0.0).at_rest(0.0);
        let peak = |a| {
            let e = synthesize_echoes(&point(0.03, 0.0, a), &motion, &chirp, 1, None, 0).unwrap();
            let h = form_hrrp(&e.row_series(0), &chirp, motion.standoff_range).unwrap();
            h.magnitudes[h.peak_bin().unwrap()]
        };
        assert!((peak(2.0) / peak(1.0) - 2.0).abs() < 0.01);
    }

    #[test]
    fn hrrp_rejects_foreign_sample_rate() {
        let chirp = chirp_8ghz();
        let motion = MotionState::turntable(0.0);
        let e = synthesize_echoes(&point(0.0, 0.0, 1.0), &motion, &chirp, 1, None, 0).unwrap();
        let mut row = e.row_series(0);
        row.sample_rate = 20e9;
        assert!(form_hrrp(&row, &chirp, 5.0).is_err());
    }

    #[test]
    fn centred_point_focuses_at_centre_pixel() {
        let chirp = chirp_8ghz();
        let motion = MotionState::turntable(0.0);
        let echoes = synthesize_echoes(&point(0.0, 0.0, 1.0), &motion, &chirp, 40, None, 0).unwrap();
        let grid = ImageGrid::new(32, 32, 0.005).unwrap();
        let img = back_projection(&echoes, &grid).unwrap();
        assert_eq!(img.argmax(), (16, 16));
        assert_eq!(img.at(16, 16), 1.0);
    }

    #[test]
    fn wider_band_narrows_range_mainlobe() {
        let motion = MotionState::turntable(-0.03);
        let grid = ImageGrid::new(64, 8, 0.002).unwrap();
        let width = |f_start: f64| {
            let chirp = ChirpSpec::new(f_start, 40e9, 0.1e-6, 50e-6, 10e9).unwrap();
            let e = synthesize_echoes(&point(0.0, 0.0, 1.0), &motion, &chirp, 96, None, 0).unwrap();
            let img = back_projection(&e, &grid).unwrap();
            (0..64).filter(|&c| img.at(4, c) >= std::f32::consts::FRAC_1_SQRT_2).count()
        };
        assert!(width(32e9) < width(36e9));
    }

    #[test]
    fn point_response_matches_resolution_cells() {
        let chirp = chirp_8ghz();
        let n = 120;
        let theta = 4.0 * PI * (n - 1) as f64 * chirp.pri;
        let motion = MotionState::turntable(-theta / 2.0);
        let echoes = synthesize_echoes(&point(0.0, 0.0, 1.0), &motion, &chirp, n, None, 0).unwrap();
        let grid = ImageGrid::new(128, 128, 0.0015).unwrap();
        let img = back_projection(&echoes, &grid).unwrap();
        let (r, c) = img.argmax();
        let cut = |along_x: bool| -> f64 {
            let get = |i: usize| if along_x { img.at(r, i) as f64 } else { img.at(i, c) as f64 };
            let centre = if along_x { c } else { r };
            let half = std::f64::consts::FRAC_1_SQRT_2;
            let edge = |dir: isize| {
                let mut i = centre as isize;
                while get((i + dir) as usize) >= half {
                    i += dir;
                }
                let (a, b) = (get(i as usize), get((i + dir) as usize));
                i as f64 + dir as f64 * (a - half) / (a - b)
            };
            (edge(1) - edge(-1)) * grid.pixel_spacing
        };
        let dr = range_resolution(8e9).unwrap();
        let dz = azimuth_resolution(36e9, theta).unwrap();
        let (wr, wz) = (cut(true), cut(false));
        assert!((wr - dr).abs() / dr < 0.25, "range width {wr} vs {dr}");
        assert!((wz - dz).abs() / dz < 0.25, "cross-range width {wz} vs {dz}");
    }

    #[test]
    fn back_projection_is_linear_before_magnitude() {
        let chirp = chirp_8ghz();
        let motion = MotionState::turntable(0.4);
        let a = synthesize_echoes(&point(0.05, -0.02, 1.0), &motion, &chirp, 12, None, 0).unwrap();
        let b = synthesize_echoes(&point(-0.04, 0.06, 0.7), &motion, &chirp, 12, None, 0).unwrap();
        let mut sum = a.clone();
        for (s, v) in sum.data.iter_mut().zip(&b.data) {
            *s += v;
        }
        let grid = ImageGrid::new(16, 16, 0.009).unwrap();
        let opts = BpOptions::default();
        let ia = back_projection_complex(&a, &grid, &opts).unwrap();
        let ib = back_projection_complex(&b, &grid, &opts).unwrap();
        let is = back_projection_complex(&sum, &grid, &opts).unwrap();
        let scale = is.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for ((x, y), z) in ia.iter().zip(&ib).zip(&is) {
            assert!((x + y - z).norm() <= 1e-9 * scale);
        }
    }

    #[test]
    fn single_pulse_image_reproduces_the_range_profile() {
        // 20 GHz sampling keeps the bin pitch under half a resolution cell
        let chirp = ChirpSpec::new(32e9, 40e9, 0.1e-6, 100e-6, 20e9).unwrap();
        let motion = MotionState::turntable(0.0);
        let target = TargetModel::new(
            "two",
            vec![Scatterer::new(0.06, 0.03, 1.0), Scatterer::new(-0.05, -0.08, 0.6)],
            0,
        )
        .unwrap();
        let echoes = synthesize_echoes(&target, &motion, &chirp, 1, None, 0).unwrap();
        let hrrp = form_hrrp(&echoes.row_series(0), &chirp, motion.standoff_range).unwrap();
        // pixels on the HRRP bins, no upsampling: interpolation is exact there
        let grid = ImageGrid {
            n_x: 24,
            n_y: 8,
            pixel_spacing: hrrp.bin_spacing,
            center: (hrrp.range_of(hrrp.peak_bin().unwrap()), 0.0),
        };
        let opts = BpOptions {
            upsample: 1,
            ..BpOptions::default()
        };
        let acc = back_projection_complex(&echoes, &grid, &opts).unwrap();
        let peak = hrrp.magnitudes.iter().cloned().fold(0.0, f64::max);
        for row in 0..grid.n_y {
            for col in 0..grid.n_x {
                let bin = ((grid.x_of(col) - hrrp.range_start) / hrrp.bin_spacing).round() as usize;
                let got = acc[row * grid.n_x + col].norm();
                assert!((got - hrrp.magnitudes[bin]).abs() <= 1e-3 * peak, "({row},{col})");
            }
        }
    }

    #[test]
    fn separated_points_have_comparable_maxima() {
        let chirp = chirp_8ghz();
        let n = 120;
        let theta = 4.0 * PI * (n - 1) as f64 * chirp.pri;
        let motion = MotionState::turntable(-theta / 2.0);
        let pts = [(0.1, 0.1), (-0.1, 0.1), (0.0, -0.12)];
        let target = TargetModel::new("tri", pts.iter().map(|&(x, y)| Scatterer::new(x, y, 1.0)).collect(), 0).unwrap();
        let echoes = synthesize_echoes(&target, &motion, &chirp, n, None, 0).unwrap();
        let grid = ImageGrid::new(64, 64, 0.0075).unwrap();
        let img = back_projection(&echoes, &grid).unwrap();
        let mut values = Vec::new();
        for &(x, y) in &pts {
            let c = ((x - grid.center.0) / grid.pixel_spacing).round() as isize + 32;
            let r = ((y - grid.center.1) / grid.pixel_spacing).round() as isize + 32;
            let mut best = 0.0f32;
            for dr in -2..=2 {
                for dc in -2..=2 {
                    best = best.max(img.at((r + dr) as usize, (c + dc) as usize));
                }
            }
            values.push(best as f64);
        }
        let (lo, hi) = values.iter().fold((f64::MAX, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(20.0 * (hi / lo).log10() < 3.0, "{values:?}");
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let chirp = chirp_8ghz();
        let echoes = synthesize_echoes(&point(0.0, 0.0, 1.0), &MotionState::turntable(0.0), &chirp, 2, None, 0).unwrap();
        assert!(back_projection(&echoes, &ImageGrid::new(16, 16, 0.05).unwrap()).is_err());
        assert!(ImageGrid::new(4, 16, 0.001).is_err());
    }

    #[test]
    fn normalize_cases() {
        let out = normalize(&[1.0, 7.5, 3.0]).unwrap();
        assert_eq!(out[1], 1.0);
        assert_eq!(normalize(&[0.0; 4]).unwrap(), vec![0.0; 4]);
        assert!(normalize(&[1.0, -0.5]).is_err());
        let a = normalize(&[0.2, 0.4, 0.9]).unwrap();
        let b = normalize(&[0.2 * 3.7, 0.4 * 3.7, 0.9 * 3.7]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn resample_identity_and_constant() {
        let pixels: Vec<f32> = (0..100).map(|i| ((i * 37) % 100) as f32 / 99.0).collect();
        let img = test_image(pixels.clone(), 10, 10);
        let same = resample_to(&img, 10, 10).unwrap();
        let max = pixels.iter().cloned().fold(0.0, f32::max);
        for (a, b) in same.pixels.iter().zip(&pixels) {
            assert!((a - b / max).abs() < 1e-6);
        }
        let flat = test_image(vec![0.5; 144], 12, 12);
        let out = resample_to(&flat, 9, 20).unwrap();
        assert!(out.pixels.iter().all(|&v| (v - 1.0).abs() < 1e-6));
        assert!(resample_to(&flat, 4, 20).is_err());
    }

    #[test]
    fn downsampled_one_hot_stays_local() {
        // oracle: each output pixel (i, j) samples source coordinate
        // 2i + 0.5 and 2j + 0.5, i.e. the mean of a 2×2 source block
        let (h, w) = (16, 16);
        for (sr, sc) in [(5usize, 9usize), (0, 0), (15, 8)] {
            let mut pixels = vec![0.0f32; h * w];
            pixels[sr * w + sc] = 1.0;
            let out = resample_to(&test_image(pixels, h, w), 8, 8).unwrap();
            for i in 0..8 {
                for j in 0..8 {
                    let in_block = sr / 2 == i && sc / 2 == j;
                    let expected = if in_block { 1.0 } else { 0.0 };
                    assert!((out.at(i, j) - expected).abs() < 1e-6, "({i},{j})");
                }
            }
        }
    }
}
