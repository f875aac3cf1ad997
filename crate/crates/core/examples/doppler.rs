//! Slow-time Doppler of a single rotating scatterer against `2·w·y/λ`.
//!
//! cargo run --release --example doppler

use std::f64::consts::PI;

use isarxai::imaging::form_hrrp;
use isarxai::scene::{synthesize_echoes, MotionState, Scatterer, TargetModel};
use isarxai::waveform::{doppler_shift, ChirpSpec};
use num_complex::Complex64;

fn main() -> isarxai::Result<()> {
    let chirp = ChirpSpec::new(32e9, 40e9, 0.1e-6, 1e-3, 10e9)?;
    let n_pulses = 256;
    for (w, y) in [(0.2, 0.2), (0.2, -0.1), (0.1, 0.25)] {
        let target = TargetModel::new("point", vec![Scatterer::new(0.0, y, 1.0)], 0)?;
        let motion = MotionState {
            rotation_rate: w,
            ..MotionState::turntable(0.0)
        };
        let echoes = synthesize_echoes(&target, &motion, &chirp, n_pulses, None, 0)?;
        let profiles: Vec<_> = (0..n_pulses)
            .map(|p| form_hrrp(&echoes.row_series(p), &chirp, motion.standoff_range))
            .collect::<isarxai::Result<_>>()?;
        let bin = profiles[0].peak_bin().expect("non-empty profile");
        let slow: Vec<Complex64> = profiles.iter().map(|h| h.complex_profile[bin]).collect();

        // Zero-padded DFT over slow time, ±PRF/2.
        let n_fft = 4096;
        let prf = 1.0 / chirp.pri;
        let (mut best_f, mut best) = (0.0, 0.0);
        for k in 0..n_fft {
            let f = (k as f64 - n_fft as f64 / 2.0) * prf / n_fft as f64;
            let s: Complex64 = slow
                .iter()
                .enumerate()
                .map(|(p, v)| v * Complex64::from_polar(1.0, -2.0 * PI * f * p as f64 * chirp.pri))
                .sum();
            if s.norm() > best {
                (best_f, best) = (f, s.norm());
            }
        }
        let expected = doppler_shift(w, chirp.wavelength(), y)?;
        println!(
            "w {w:.2} rad/s, y {y:+.2} m: measured {best_f:+7.2} Hz, predicted {expected:+7.2} Hz (bin width {:.2} Hz)",
            prf / n_pulses as f64
        );
    }
    Ok(())
}
