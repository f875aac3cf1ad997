//! Imaging-angle marking by matching a first-echo HRRP against a static-pose library.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::{form_hrrp, Hrrp};
use crate::scene::{synthesize_echoes, MotionState, TargetModel};
use crate::waveform::{ChirpSpec, ComplexSeries};

pub const LIBRARY_SIZE: usize = 288;
pub const ANGLE_STEP_DEG: f64 = 1.25;

/// Angle of library entry `index`, in radians.
pub fn grid_angle_rad(index: usize) -> f64 {
    (index as f64 * ANGLE_STEP_DEG).to_radians()
}

pub fn grid_angle_deg(index: usize) -> f64 {
    index as f64 * ANGLE_STEP_DEG
}

/// Reference profiles of one target, 0° to 358.75° in 1.25° steps.
#[derive(Debug, Clone, PartialEq)]
pub struct HrrpLibrary {
    pub target_name: String,
    pub angles_deg: Vec<f64>,
    /// L2-normalized magnitudes, all cropped to the same range bins.
    pub entries: Vec<Vec<f64>>,
    pub range_start: f64,
    pub bin_spacing: f64,
    pub standoff_range: f64,
    pub scene_radius: f64,
}

impl HrrpLibrary {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn profile_len(&self) -> usize {
        self.entries.first().map_or(0, Vec::len)
    }
}

fn l2_normalized(values: &[f64]) -> Result<Vec<f64>> {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::param("profile has no energy"));
    }
    Ok(values.iter().map(|v| v / norm).collect())
}

fn scene_profile(hrrp: &Hrrp, scene_radius: f64) -> Hrrp {
    hrrp.crop(-scene_radius, scene_radius)
}

/// Noise-free single-pulse HRRPs of the static target at every grid angle.
pub fn build_library(target: &TargetModel, chirp: &ChirpSpec, motion: &MotionState) -> Result<HrrpLibrary> {
    motion.validate()?;
    let profiles: Vec<Hrrp> = (0..LIBRARY_SIZE)
        .into_par_iter()
        .map(|i| {
            let pose = motion.at_rest(grid_angle_rad(i));
            let echoes = synthesize_echoes(target, &pose, chirp, 1, None, 0)?;
            let hrrp = form_hrrp(&echoes.row_series(0), chirp, pose.standoff_range)?;
            Ok(scene_profile(&hrrp, pose.scene_radius))
        })
        .collect::<Result<_>>()?;
    let first = &profiles[0];
    let entries = profiles
        .iter()
        .map(|p| l2_normalized(&p.magnitudes))
        .collect::<Result<_>>()?;
    Ok(HrrpLibrary {
        target_name: target.name.clone(),
        angles_deg: (0..LIBRARY_SIZE).map(grid_angle_deg).collect(),
        entries,
        range_start: first.range_start,
        bin_spacing: first.bin_spacing,
        standoff_range: motion.standoff_range,
        scene_radius: motion.scene_radius,
    })
}

/// RMSE between two L2-normalized magnitude profiles.
pub fn hrrp_rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::param(format!("profile lengths differ ({} vs {})", a.len(), b.len())));
    }
    let (a, b) = (l2_normalized(a)?, l2_normalized(b)?);
    Ok(rmse_normalized(&a, &b))
}

fn rmse_normalized(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Normalized cross-correlation of mean-removed profiles over all linear lags;
/// returns the signed value of largest magnitude.
pub fn xcorr_coeff(a: &[f64], b: &[f64]) -> Result<f64> {
    let centred = |v: &[f64]| -> Vec<f64> {
        let mean = v.iter().sum::<f64>() / v.len().max(1) as f64;
        v.iter().map(|x| x - mean).collect()
    };
    let (a, b) = (centred(a), centred(b));
    let ea = a.iter().map(|v| v * v).sum::<f64>();
    let eb = b.iter().map(|v| v * v).sum::<f64>();
    if !(ea > 0.0) || !(eb > 0.0) {
        return Err(Error::param("cross-correlation needs profiles with non-zero energy"));
    }
    let norm = (ea * eb).sqrt();
    let mut best = 0.0f64;
    for lag in -(b.len() as isize - 1)..a.len() as isize {
        let mut sum = 0.0;
        for (j, bj) in b.iter().enumerate() {
            let i = j as isize + lag;
            if i >= 0 && (i as usize) < a.len() {
                sum += a[i as usize] * bj;
            }
        }
        let c = sum / norm;
        if c.abs() > best.abs() {
            best = c;
        }
    }
    Ok(best.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleMark {
    pub angle_deg: f64,
    pub rmse: f64,
    pub xcoeff: f64,
}

/// Marks the imaging angle of a capture from its first echo; ties go to the smallest angle.
pub fn mark_angle(first_echo: &ComplexSeries, library: &HrrpLibrary, chirp: &ChirpSpec) -> Result<AngleMark> {
    if first_echo.is_empty() {
        return Err(Error::param("echo is empty"));
    }
    if library.is_empty() {
        return Err(Error::param("library is empty"));
    }
    let hrrp = form_hrrp(first_echo, chirp, library.standoff_range)?;
    let profile = scene_profile(&hrrp, library.scene_radius);
    if profile.len() != library.profile_len() || (profile.bin_spacing - library.bin_spacing).abs() > 1e-12 {
        return Err(Error::param("echo does not match the library's range bins; was it built with the same chirp?"));
    }
    let probe = l2_normalized(&profile.magnitudes)?;
    let mut best = (0usize, f64::INFINITY);
    for (i, entry) in library.entries.iter().enumerate() {
        let e = rmse_normalized(&probe, entry);
        if e < best.1 {
            best = (i, e);
        }
    }
    Ok(AngleMark {
        angle_deg: library.angles_deg[best.0],
        rmse: best.1,
        xcoeff: xcorr_coeff(&probe, &library.entries[best.0])?,
    })
}

/// One row of the angle-range accuracy table. Ranges are half-open, `[lo, hi)` degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeRow {
    pub lo: f64,
    pub hi: f64,
    pub errors: usize,
    pub total: usize,
    /// `None` for an empty range.
    pub accuracy: Option<f64>,
    /// Consecutive marked angles differ by at most one library step.
    pub dense: bool,
    /// Accuracy above the overall accuracy.
    pub reliable: bool,
    /// Every marked angle in the range has more than one sample.
    pub multi: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngleReport {
    pub rows: Vec<RangeRow>,
    pub overall_accuracy: f64,
}

/// Per-range recognition accuracy; `predictions` holds `(true, predicted)` per mark.
pub fn angle_range_report(marks_deg: &[f64], predictions: &[(usize, usize)], ranges: &[(f64, f64)]) -> Result<AngleReport> {
    if marks_deg.len() != predictions.len() || marks_deg.is_empty() {
        return Err(Error::param("marks and predictions must be aligned and non-empty"));
    }
    for (i, &(lo, hi)) in ranges.iter().enumerate() {
        if !(lo < hi) {
            return Err(Error::param(format!("range [{lo}, {hi}) is empty or reversed")));
        }
        for &(lo2, hi2) in &ranges[..i] {
            if lo < hi2 && lo2 < hi {
                return Err(Error::param(format!("ranges [{lo2}, {hi2}) and [{lo}, {hi}) overlap")));
            }
        }
    }
    let correct = predictions.iter().filter(|(t, p)| t == p).count();
    let overall = correct as f64 / predictions.len() as f64;
    let rows = ranges
        .iter()
        .map(|&(lo, hi)| {
            let members: Vec<usize> = (0..marks_deg.len())
                .filter(|&i| marks_deg[i] >= lo && marks_deg[i] < hi)
                .collect();
            let total = members.len();
            let errors = members.iter().filter(|&&i| predictions[i].0 != predictions[i].1).count();
            let accuracy = (total > 0).then(|| (total - errors) as f64 / total as f64);
            let mut steps: Vec<i64> = members
                .iter()
                .map(|&i| (marks_deg[i] / ANGLE_STEP_DEG).round() as i64)
                .collect();
            steps.sort_unstable();
            let dense = total > 0 && steps.windows(2).all(|w| w[1] - w[0] <= 1);
            let multi = total > 0 && steps.chunk_by(|a, b| a == b).all(|g| g.len() > 1);
            RangeRow {
                lo,
                hi,
                errors,
                total,
                accuracy,
                dense,
                reliable: accuracy.is_some_and(|a| a > overall),
                multi,
            }
        })
        .collect();
    Ok(AngleReport {
        rows,
        overall_accuracy: overall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{make_archetype, Archetype, Scatterer};

    fn chirp() -> ChirpSpec {
        ChirpSpec::new(32e9, 40e9, 0.1e-6, 100e-6, 10e9).unwrap()
    }

    fn uav() -> TargetModel {
        make_archetype(Archetype::Uav, 0.4).unwrap()
    }

    fn echo_at(target: &TargetModel, angle: f64, snr: Option<f64>, seed: u64) -> ComplexSeries {
        let pose = MotionState::turntable(angle);
        synthesize_echoes(target, &pose, &chirp(), 1, snr, seed).unwrap().row_series(0)
    }

    #[test]
    fn library_shape() {
        let motion = MotionState::turntable(0.0);
        let lib = build_library(&uav(), &chirp(), &motion).unwrap();
        assert_eq!(lib.len(), LIBRARY_SIZE);
        assert_eq!(lib.angles_deg[0], 0.0);
        assert_eq!(*lib.angles_deg.last().unwrap(), 358.75);
        assert!(lib.angles_deg.windows(2).all(|w| (w[1] - w[0] - 1.25).abs() < 1e-12));
        assert_eq!(lib, build_library(&uav(), &chirp(), &motion).unwrap());
    }

    #[test]
    fn centred_point_library_is_flat_and_ties_to_zero() {
        let point = TargetModel::new("dot", vec![Scatterer::new(0.0, 0.0, 1.0)], 0).unwrap();
        let lib = build_library(&point, &chirp(), &MotionState::turntable(0.0)).unwrap();
        for e in &lib.entries {
            for (a, b) in e.iter().zip(&lib.entries[0]) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        let mark = mark_angle(&echo_at(&point, 1.0, None, 0), &lib, &chirp()).unwrap();
        assert_eq!(mark.angle_deg, 0.0);
    }

    #[test]
    fn rmse_cases() {
        let a = [0.3, 0.1, 0.9, 0.2];
        assert_eq!(hrrp_rmse(&a, &a).unwrap(), 0.0);
        let n = 8;
        let mut e0 = vec![0.0; n];
        let mut e1 = vec![0.0; n];
        e0[0] = 1.0;
        e1[5] = 1.0;
        assert!((hrrp_rmse(&e0, &e1).unwrap() - (2.0 / n as f64).sqrt()).abs() < 1e-15);
        let b = [0.5, 0.4, 0.1, 0.7];
        assert_eq!(hrrp_rmse(&a, &b).unwrap(), hrrp_rmse(&b, &a).unwrap());
        assert!(hrrp_rmse(&a, &b[..3]).is_err());
    }

    #[test]
    fn xcorr_cases() {
        let a: Vec<f64> = (0..40).map(|i| ((i as f64) * 0.7).sin().abs() + 0.1 * (i % 3) as f64).collect();
        assert!((xcorr_coeff(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((xcorr_coeff(&a, &neg).unwrap() + 1.0).abs() < 1e-9);
        assert!(xcorr_coeff(&a, &[1.0; 40]).is_err());

        // oracle: direct lag scan written over the other operand
        let shifted: Vec<f64> = (0..40).map(|i| a[(i + 1) % 40]).collect();
        let centred = |v: &[f64]| -> Vec<f64> {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| x - m).collect()
        };
        let (ca, cb) = (centred(&a), centred(&shifted));
        let norm = (ca.iter().map(|v| v * v).sum::<f64>() * cb.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let mut oracle = 0.0f64;
        for shift in 0..79usize {
            let c: f64 = (0..40usize)
                .filter_map(|i| (i + 39).checked_sub(shift).filter(|&j| j < 40).map(|j| ca[i] * cb[j]))
                .sum::<f64>()
                / norm;
            if c.abs() > oracle.abs() {
                oracle = c;
            }
        }
        assert!((xcorr_coeff(&a, &shifted).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn xcorr_of_a_spread_profile_survives_small_shifts() {
        let a: Vec<f64> = (0..200).map(|i| (-((i as f64 - 100.0) / 25.0).powi(2)).exp()).collect();
        let shifted: Vec<f64> = (0..200).map(|i| a[(i + 2) % 200]).collect();
        assert!(xcorr_coeff(&a, &shifted).unwrap() >= 0.99);
    }

    #[test]
    fn grid_angles_are_recovered_exactly() {
        let lib = build_library(&uav(), &chirp(), &MotionState::turntable(0.0)).unwrap();
        for index in [0, 37, 150, 287] {
            let mark = mark_angle(&echo_at(&uav(), grid_angle_rad(index), None, 0), &lib, &chirp()).unwrap();
            assert_eq!(mark.angle_deg, grid_angle_deg(index));
            assert!(mark.rmse < 1e-9);
            assert!((mark.xcoeff - 1.0).abs() < 1e-9);
        }
        let mark = mark_angle(&echo_at(&uav(), grid_angle_rad(37), None, 0), &lib, &chirp()).unwrap();
        assert_eq!(mark.angle_deg, 46.25);
    }

    #[test]
    fn marking_ignores_amplitude_scale() {
        let lib = build_library(&uav(), &chirp(), &MotionState::turntable(0.0)).unwrap();
        let echo = echo_at(&uav(), 0.7, Some(20.0), 3);
        let mut loud = echo.clone();
        loud.samples.iter_mut().for_each(|v| *v *= 4.0);
        let (a, b) = (mark_angle(&echo, &lib, &chirp()).unwrap(), mark_angle(&loud, &lib, &chirp()).unwrap());
        assert_eq!(a.angle_deg, b.angle_deg);
        assert!((a.rmse - b.rmse).abs() < 1e-12);
    }

    #[test]
    fn report_cases() {
        let marks = [10.0, 11.25, 11.25, 40.0, 100.0];
        let preds = [(0, 0), (1, 1), (1, 2), (2, 2), (0, 0)];
        let all = angle_range_report(&marks, &preds, &[(0.0, 360.0)]).unwrap();
        assert_eq!(all.rows[0].accuracy, Some(all.overall_accuracy));

        let report = angle_range_report(&marks, &preds, &[(0.0, 30.0), (30.0, 90.0), (200.0, 300.0)]).unwrap();
        let r = &report.rows[0];
        assert_eq!((r.errors, r.total, r.dense, r.multi), (1, 3, true, false));
        let r = &report.rows[1];
        assert!(r.reliable && r.dense && !r.multi);
        assert_eq!(report.rows[2].accuracy, None);
        assert!(angle_range_report(&marks, &preds, &[(0.0, 30.0), (20.0, 40.0)]).is_err());

        // 2 errors out of 44
        let marks = vec![5.0; 44];
        let preds: Vec<(usize, usize)> = (0..44).map(|i| (0, usize::from(i < 2))).collect();
        let acc = angle_range_report(&marks, &preds, &[(0.0, 10.0)]).unwrap().rows[0].accuracy.unwrap();
        assert!((acc * 100.0 - 95.45).abs() < 0.005);
    }
}
