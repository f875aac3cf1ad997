//! Point-scatterer targets on a turntable and raw echo synthesis.
//!
//! The simulator uses the stop-and-hop approximation: the target pose is
//! frozen for the duration of a pulse, and scatterers are isotropic.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::waveform::{ChirpSpec, ComplexSeries, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer {
    /// Down-range offset in the target frame, m.
    pub x: f64,
    /// Cross-range offset in the target frame, m.
    pub y: f64,
    pub amplitude: f64,
}

impl Scatterer {
    pub fn new(x: f64, y: f64, amplitude: f64) -> Self {
        Scatterer { x, y, amplitude }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetModel {
    pub name: String,
    pub scatterers: Vec<Scatterer>,
    pub class_id: usize,
}

impl TargetModel {
    pub fn new(name: impl Into<String>, scatterers: Vec<Scatterer>, class_id: usize) -> Result<Self> {
        if scatterers.is_empty() {
            return Err(Error::param("a target needs at least one scatterer"));
        }
        if scatterers.iter().any(|s| !(s.amplitude >= 0.0) || !s.x.is_finite() || !s.y.is_finite()) {
            return Err(Error::param("scatterers need finite positions and non-negative amplitude"));
        }
        Ok(TargetModel {
            name: name.into(),
            scatterers,
            class_id,
        })
    }

    /// Largest distance of any scatterer from the rotation centre.
    pub fn radius(&self) -> f64 {
        self.scatterers
            .iter()
            .map(|s| s.x.hypot(s.y))
            .fold(0.0, f64::max)
    }
}

/// Synthetic stand-ins for the three recognition classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Archetype {
    Plane,
    Uav,
    Y20,
}

impl Archetype {
    pub const ALL: [Archetype; 3] = [Archetype::Plane, Archetype::Uav, Archetype::Y20];

    pub fn class_id(self) -> usize {
        match self {
            Archetype::Plane => 0,
            Archetype::Uav => 1,
            Archetype::Y20 => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Archetype::Plane => "Plane",
            Archetype::Uav => "UAV",
            Archetype::Y20 => "Y20",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(name))
    }
}

/// Points on the segment `a → b`, excluding `b`.
fn segment(a: (f64, f64), b: (f64, f64), n: usize) -> impl Iterator<Item = (f64, f64)> {
    (0..n).map(move |i| {
        let t = i as f64 / n as f64;
        (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
    })
}

/// Builds one of the three archetypes, fitted inside `[−scale/2, scale/2]²`.
///
/// * UAV: four rotor/wing corners of a square plus the hub. Corner
///   amplitudes differ so that no two poses share a range profile.
/// * Plane: a filled triangle (outline plus centroid).
/// * Y20: fuselage, swept wings and tailplane, a bird-like polyline.
pub fn make_archetype(kind: Archetype, scale_m: f64) -> Result<TargetModel> {
    if !(scale_m > 0.0) || !scale_m.is_finite() {
        return Err(Error::param(format!("archetype scale must be positive (got {scale_m})")));
    }
    let s = scale_m;
    let scatterers: Vec<Scatterer> = match kind {
        Archetype::Uav => {
            let h = 0.4 * s;
            vec![
                Scatterer::new(h, h, 1.0),
                Scatterer::new(-h, h, 0.75),
                Scatterer::new(-h, -h, 0.55),
                Scatterer::new(h, -h, 0.85),
                Scatterer::new(0.0, 0.0, 1.2),
            ]
        }
        Archetype::Plane => {
            let nose = (0.45 * s, 0.0);
            let left = (-0.225 * s, 0.45 * s);
            let right = (-0.225 * s, -0.45 * s);
            let mut pts: Vec<(f64, f64)> = segment(nose, left, 8)
                .chain(segment(left, right, 8))
                .chain(segment(right, nose, 8))
                .collect();
            pts.push((0.0, 0.0));
            // recentre so the scatterer centroid is the rotation centre
            let n = pts.len() as f64;
            let cx = pts.iter().map(|p| p.0).sum::<f64>() / n;
            let cy = pts.iter().map(|p| p.1).sum::<f64>() / n;
            pts.into_iter()
                .map(|(x, y)| Scatterer::new(x - cx, y - cy, 1.0))
                .collect()
        }
        Archetype::Y20 => {
            let mut pts: Vec<(f64, f64)> = segment((-0.45 * s, 0.0), (0.45 * s, 0.0), 9).collect();
            pts.push((0.45 * s, 0.0));
            for side in [1.0, -1.0] {
                let root = (0.1 * s, 0.0);
                let tip = (-0.15 * s, side * 0.45 * s);
                pts.extend(segment(root, tip, 5).skip(1));
                pts.push(tip);
                let tail_root = (-0.4 * s, 0.0);
                let tail_tip = (-0.5 * s, side * 0.18 * s);
                pts.extend(segment(tail_root, tail_tip, 2).skip(1));
                pts.push(tail_tip);
            }
            pts.into_iter().map(|(x, y)| Scatterer::new(x, y, 1.0)).collect()
        }
    };
    TargetModel::new(kind.name(), scatterers, kind.class_id())
}

/// The three archetypes in class-id order.
pub fn standard_targets(scale_m: f64) -> Result<Vec<TargetModel>> {
    Archetype::ALL
        .iter()
        .map(|&k| make_archetype(k, scale_m))
        .collect()
}

/// Rotates every scatterer counter-clockwise by `angle_rad`.
pub fn rotate(target: &TargetModel, angle_rad: f64) -> Vec<Scatterer> {
    let (sin, cos) = angle_rad.sin_cos();
    target
        .scatterers
        .iter()
        .map(|s| Scatterer::new(s.x * cos - s.y * sin, s.x * sin + s.y * cos, s.amplitude))
        .collect()
}

/// Turntable kinematics and radar geometry.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MotionState {
    /// Angular rate w, rad/s (counter-clockwise positive).
    pub rotation_rate: f64,
    /// Pose at the first pulse, rad.
    pub initial_angle: f64,
    /// Radar to rotation-centre distance R₀, m.
    pub standoff_range: f64,
    /// Radius around the rotation centre covered by the receive window, m.
    pub scene_radius: f64,
}

impl MotionState {
    /// About 2 r/s at 5 m with a 0.3 m scene radius.
    pub fn turntable(initial_angle: f64) -> Self {
        MotionState {
            rotation_rate: 4.0 * PI,
            initial_angle,
            standoff_range: 5.0,
            scene_radius: 0.3,
        }
    }

    pub fn at_rest(&self, angle: f64) -> Self {
        MotionState {
            rotation_rate: 0.0,
            initial_angle: angle,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.rotation_rate.is_finite() || !self.initial_angle.is_finite() {
            return Err(Error::param("rotation rate and initial angle must be finite"));
        }
        if !(self.scene_radius > 0.0) || !(self.standoff_range > self.scene_radius) {
            return Err(Error::param(format!(
                "standoff range {} m must exceed the scene radius {} m > 0",
                self.standoff_range, self.scene_radius
            )));
        }
        Ok(())
    }

    /// Pose at pulse `p`, `θ₀ + w·p·PRI`.
    pub fn angle_at(&self, pulse: usize, pri: f64) -> f64 {
        self.initial_angle + self.rotation_rate * (pulse as f64 * pri)
    }
}

/// Fast-time sampling window shared by every pulse of an acquisition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceiveWindow {
    /// Absolute time of the first sample, s (a multiple of 1/f_s).
    pub t0: f64,
    pub n_samples: usize,
}

impl ReceiveWindow {
    pub fn for_geometry(chirp: &ChirpSpec, motion: &MotionState) -> Self {
        let fs = chirp.sample_rate;
        let near = 2.0 * (motion.standoff_range - motion.scene_radius) / SPEED_OF_LIGHT;
        let start = (near * fs).floor();
        let span = 4.0 * motion.scene_radius / SPEED_OF_LIGHT + chirp.pulse_width;
        ReceiveWindow {
            t0: start / fs,
            n_samples: (span * fs).ceil() as usize + 2,
        }
    }
}

/// Slow-time × fast-time complex baseband echoes.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoMatrix {
    /// Row-major `n_pulses × n_samples`.
    pub data: Vec<Complex64>,
    pub n_pulses: usize,
    pub n_samples: usize,
    /// Absolute time of fast-time sample 0, s.
    pub t0: f64,
    pub chirp: ChirpSpec,
    pub motion: MotionState,
    pub pulse_angles: Vec<f64>,
}

impl EchoMatrix {
    pub fn row(&self, pulse: usize) -> &[Complex64] {
        &self.data[pulse * self.n_samples..(pulse + 1) * self.n_samples]
    }

    pub fn row_series(&self, pulse: usize) -> ComplexSeries {
        ComplexSeries {
            samples: self.row(pulse).to_vec(),
            sample_rate: self.chirp.sample_rate,
            t0: self.t0,
        }
    }

    /// Rotation swept between the first and last pulse, rad.
    pub fn total_rotation(&self) -> f64 {
        match (self.pulse_angles.first(), self.pulse_angles.last()) {
            (Some(a), Some(b)) => (b - a).abs(),
            _ => 0.0,
        }
    }

    pub fn mid_angle(&self) -> f64 {
        match (self.pulse_angles.first(), self.pulse_angles.last()) {
            (Some(a), Some(b)) => 0.5 * (a + b),
            _ => 0.0,
        }
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }
}

fn synthesize_row(
    scatterers: &[Scatterer],
    chirp: &ChirpSpec,
    standoff: f64,
    window: &ReceiveWindow,
) -> Vec<Complex64> {
    let fs = chirp.sample_rate;
    let fc = chirp.center_frequency();
    let mut row = vec![Complex64::new(0.0, 0.0); window.n_samples];
    for s in scatterers.iter().filter(|s| s.amplitude > 0.0) {
        let tau = 2.0 * (standoff + s.x) / SPEED_OF_LIGHT;
        let carrier = Complex64::from_polar(s.amplitude, -2.0 * PI * fc * tau);
        let first = ((tau - window.t0) * fs).ceil().max(0.0) as usize;
        let last = (((tau + chirp.pulse_width - window.t0) * fs).ceil() as usize).min(window.n_samples);
        // the chirp phase is quadratic in the sample index: two rotators advance it
        let (dt, gamma) = (1.0 / fs, chirp.chirp_rate());
        let u0 = window.t0 + first as f64 / fs - tau - 0.5 * chirp.pulse_width;
        let mut value = carrier * Complex64::from_polar(1.0, PI * gamma * u0 * u0);
        let mut turn = Complex64::from_polar(1.0, PI * gamma * (2.0 * u0 + dt) * dt);
        let accel = Complex64::from_polar(1.0, 2.0 * PI * gamma * dt * dt);
        for (i, out) in row.iter_mut().enumerate().take(last).skip(first) {
            let t = window.t0 + i as f64 / fs - tau;
            if t >= 0.0 && t < chirp.pulse_width {
                *out += value;
            }
            value *= turn;
            turn *= accel;
        }
    }
    row
}

/// Synthesizes `n_pulses` echoes of a rotating target.
///
/// Pulse `p` sees the target at `θ₀ + w·p·PRI`; each scatterer contributes
/// `a · s(t − τ) · exp(−j2π f_c τ)` with `τ = 2(R₀ + x')/c`. With `snr_db`
/// set, complex white Gaussian noise is added so that the mean per-sample
/// signal power over the whole matrix divided by the noise power equals
/// `10^(snr_db/10)`. Each pulse draws noise from its own seeded stream.
pub fn synthesize_echoes(
    target: &TargetModel,
    motion: &MotionState,
    chirp: &ChirpSpec,
    n_pulses: usize,
    snr_db: Option<f64>,
    rng_seed: u64,
) -> Result<EchoMatrix> {
    if n_pulses == 0 {
        return Err(Error::param("at least one pulse is required"));
    }
    chirp.validate()?;
    motion.validate()?;
    if target.radius() > motion.scene_radius {
        return Err(Error::config(format!(
            "receive window covers ±{} m but target {} extends to {:.4} m",
            motion.scene_radius,
            target.name,
            target.radius()
        )));
    }
    let window = ReceiveWindow::for_geometry(chirp, motion);
    let pulse_angles: Vec<f64> = (0..n_pulses).map(|p| motion.angle_at(p, chirp.pri)).collect();

    let rows: Vec<Vec<Complex64>> = pulse_angles
        .par_iter()
        .map(|&angle| synthesize_row(&rotate(target, angle), chirp, motion.standoff_range, &window))
        .collect();
    let mut data: Vec<Complex64> = rows.into_iter().flatten().collect();

    if let Some(snr) = snr_db {
        if !snr.is_finite() {
            return Err(Error::param("snr_db must be finite"));
        }
        let signal_power = data.iter().map(|v| v.norm_sqr()).sum::<f64>() / data.len() as f64;
        let sigma = (0.5 * signal_power / 10f64.powf(snr / 10.0)).sqrt();
        if sigma > 0.0 {
            data.par_chunks_mut(window.n_samples)
                .enumerate()
                .for_each(|(p, row)| {
                    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
                    rng.set_stream(p as u64);
                    for v in row.iter_mut() {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        *v += Complex64::new(re, im) * sigma;
                    }
                });
        }
    }

    Ok(EchoMatrix {
        data,
        n_pulses,
        n_samples: window.n_samples,
        t0: window.t0,
        chirp: *chirp,
        motion: *motion,
        pulse_angles,
    })
}

/// How initial poses are assigned across a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnglePolicy {
    /// Uniform on `[0, 2π)`.
    Random,
    Fixed(f64),
    /// `start + i·step` for the i-th item of each target.
    Sweep { start: f64, step: f64 },
}

/// One planned acquisition: which target, which pose, which noise stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannedItem {
    pub target_index: usize,
    pub class_id: usize,
    pub initial_angle: f64,
    pub noise_seed: u64,
}

/// Draws poses and noise seeds for a dataset without synthesizing it.
///
/// Items are ordered target-major. The plan depends only on the arguments.
pub fn plan_dataset(
    targets: &[TargetModel],
    n_per_target: usize,
    policy: AnglePolicy,
    rng_seed: u64,
) -> Result<Vec<PlannedItem>> {
    if targets.is_empty() {
        return Err(Error::param("target list is empty"));
    }
    if n_per_target == 0 {
        return Err(Error::param("n_per_target must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut plan = Vec::with_capacity(targets.len() * n_per_target);
    for (ti, target) in targets.iter().enumerate() {
        for i in 0..n_per_target {
            let initial_angle = match policy {
                AnglePolicy::Random => rng.random::<f64>() * 2.0 * PI,
                AnglePolicy::Fixed(a) => a,
                AnglePolicy::Sweep { start, step } => start + step * i as f64,
            };
            plan.push(PlannedItem {
                target_index: ti,
                class_id: target.class_id,
                initial_angle,
                noise_seed: rng.next_u64(),
            });
        }
    }
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetItem {
    pub echoes: EchoMatrix,
    pub class_id: usize,
    pub initial_angle: f64,
}

/// Synthesizes `n_per_target` acquisitions of every target.
///
/// `motion` supplies the rotation rate and geometry; its initial angle is
/// replaced per item according to `policy`.
#[allow(clippy::too_many_arguments)]
pub fn generate_dataset(
    targets: &[TargetModel],
    chirp: &ChirpSpec,
    motion: &MotionState,
    n_pulses: usize,
    n_per_target: usize,
    policy: AnglePolicy,
    snr_db: Option<f64>,
    rng_seed: u64,
) -> Result<Vec<DatasetItem>> {
    plan_dataset(targets, n_per_target, policy, rng_seed)?
        .into_iter()
        .map(|item| {
            let m = MotionState {
                initial_angle: item.initial_angle,
                ..*motion
            };
            let echoes = synthesize_echoes(&targets[item.target_index], &m, chirp, n_pulses, snr_db, item.noise_seed)?;
            Ok(DatasetItem {
                echoes,
                class_id: item.class_id,
                initial_angle: item.initial_angle,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::{generate_chirp, matched_filter};
    use proptest::prelude::*;

    fn short_chirp(f_start: f64, f_stop: f64) -> ChirpSpec {
        ChirpSpec::new(f_start, f_stop, 0.2e-6, 5e-6, 10e9).unwrap()
    }

    fn single(x: f64, y: f64) -> TargetModel {
        TargetModel::new("point", vec![Scatterer::new(x, y, 1.0)], 0).unwrap()
    }

    /// |matched filter output| of pulse `p` with its delay axis.
    fn compressed(echoes: &EchoMatrix, p: usize) -> (Vec<f64>, ComplexSeries) {
        let replica = generate_chirp(&echoes.chirp).unwrap();
        let out = matched_filter(&echoes.row_series(p), &replica).unwrap();
        (out.samples.iter().map(|v| v.norm()).collect(), out)
    }

    /// (range, magnitude) samples of the first compressed pulse near R₀.
    fn fine_profile(echoes: &EchoMatrix) -> Vec<(f64, f64)> {
        let (mag, out) = compressed(echoes, 0);
        mag.iter()
            .enumerate()
            .map(|(i, m)| (SPEED_OF_LIGHT * out.time_of(i) / 2.0 - echoes.motion.standoff_range, *m))
            .filter(|(r, _)| r.abs() < 0.25)
            .collect()
    }

    fn local_maxima(profile: &[(f64, f64)], floor: f64) -> Vec<usize> {
        (1..profile.len() - 1)
            .filter(|&i| {
                profile[i].1 > profile[i - 1].1 && profile[i].1 >= profile[i + 1].1 && profile[i].1 > floor
            })
            .collect()
    }

    #[test]
    fn uav_has_five_scatterers_with_a_hub() {
        let uav = make_archetype(Archetype::Uav, 0.4).unwrap();
        assert_eq!(uav.scatterers.len(), 5);
        assert!(uav.scatterers.iter().any(|s| s.x == 0.0 && s.y == 0.0));
        assert_eq!(uav.class_id, 1);
    }

    #[test]
    fn plane_is_centred_and_y20_is_dense() {
        let plane = make_archetype(Archetype::Plane, 0.4).unwrap();
        assert!(plane.scatterers.len() >= 12);
        let n = plane.scatterers.len() as f64;
        let cx: f64 = plane.scatterers.iter().map(|s| s.x).sum::<f64>() / n;
        let cy: f64 = plane.scatterers.iter().map(|s| s.y).sum::<f64>() / n;
        assert!(cx.abs() < 1e-9 && cy.abs() < 1e-9);
        let y20 = make_archetype(Archetype::Y20, 0.4).unwrap();
        assert!(y20.scatterers.len() >= 15);
    }

    #[test]
    fn archetypes_fit_their_box() {
        for kind in Archetype::ALL {
            let t = make_archetype(kind, 0.4).unwrap();
            for s in &t.scatterers {
                assert!(s.x.abs() <= 0.2 + 1e-12 && s.y.abs() <= 0.2 + 1e-12, "{kind:?} {s:?}");
            }
        }
        assert!(make_archetype(Archetype::Uav, 0.0).is_err());
        assert!(make_archetype(Archetype::Plane, -1.0).is_err());
    }

    #[test]
    fn rotation_basics() {
        let t = single(1.0, 0.0);
        assert_eq!(rotate(&t, 0.0)[0], t.scatterers[0]);
        let r = rotate(&t, PI)[0];
        assert!((r.x + 1.0).abs() < 1e-15 && r.y.abs() < 1e-15);
        let q = rotate(&t, PI / 2.0)[0];
        assert!(q.x.abs() < 1e-15 && (q.y - 1.0).abs() < 1e-15);
    }

    #[test]
    fn echo_samples_match_the_delayed_pulse() {
        let chirp = ChirpSpec::new(32e9, 40e9, 0.1e-6, 100e-6, 10e9).unwrap();
        let target = TargetModel::new(
            "two",
            vec![Scatterer::new(0.0123, -0.04, 1.0), Scatterer::new(-0.07, 0.1, 0.6)],
            0,
        )
        .unwrap();
        let motion = MotionState::turntable(0.3);
        let echoes = synthesize_echoes(&target, &motion, &chirp, 1, None, 0).unwrap();
        let fc = chirp.center_frequency();
        let mut worst: f64 = 0.0;
        for (i, got) in echoes.data.iter().enumerate() {
            let t = echoes.t0 + i as f64 / chirp.sample_rate;
            let want: Complex64 = rotate(&target, 0.3)
                .iter()
                .map(|s| {
                    let tau = 2.0 * (motion.standoff_range + s.x) / SPEED_OF_LIGHT;
                    chirp.pulse_value(t - tau) * Complex64::from_polar(s.amplitude, -2.0 * PI * fc * tau)
                })
                .sum();
            worst = worst.max((got - want).norm());
        }
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn centred_scatterer_compresses_at_standoff_delay() {
        let chirp = short_chirp(32e9, 40e9);
        let motion = MotionState::turntable(0.0);
        let echoes = synthesize_echoes(&single(0.0, 0.0), &motion, &chirp, 1, None, 0).unwrap();
        let (mag, out) = compressed(&echoes, 0);
        let peak = (0..mag.len()).max_by(|&a, &b| mag[a].total_cmp(&mag[b])).unwrap();
        let expected = 2.0 * motion.standoff_range / SPEED_OF_LIGHT;
        assert!((out.time_of(peak) - expected).abs() <= 0.5 / chirp.sample_rate);
    }

    #[test]
    fn pair_resolved_at_eight_ghz() {
        let chirp = short_chirp(32e9, 40e9);
        let pair = TargetModel::new(
            "pair",
            vec![Scatterer::new(-0.05, 0.0, 1.0), Scatterer::new(0.05, 0.0, 1.0)],
            0,
        )
        .unwrap();
        let echoes = synthesize_echoes(&pair, &MotionState::turntable(0.0), &chirp, 1, None, 0).unwrap();
        let profile = fine_profile(&echoes);
        let max = profile.iter().map(|p| p.1).fold(0.0, f64::max);
        let peaks = local_maxima(&profile, 0.5 * max);
        assert_eq!(peaks.len(), 2, "{peaks:?}");
        let sep = (profile[peaks[1]].0 - profile[peaks[0]].0).abs();
        assert!((sep - 0.1).abs() < 0.016, "separation {sep}");
    }

    #[test]
    fn pair_unresolved_at_one_ghz() {
        // 1 GHz centred on the same 36 GHz carrier as the wide band,
        // oversampled so the profile shape is visible between bins
        let chirp = ChirpSpec::new(35.5e9, 36.5e9, 0.2e-6, 5e-6, 16e9).unwrap();
        let pair = TargetModel::new(
            "pair",
            vec![Scatterer::new(-0.05, 0.0, 1.0), Scatterer::new(0.05, 0.0, 1.0)],
            0,
        )
        .unwrap();
        let echoes = synthesize_echoes(&pair, &MotionState::turntable(0.0), &chirp, 1, None, 0).unwrap();
        let profile = fine_profile(&echoes);
        let max = profile.iter().map(|p| p.1).fold(0.0, f64::max);
        let peaks = local_maxima(&profile, 0.5 * max);
        assert_eq!(peaks.len(), 1, "{peaks:?}");
    }

    #[test]
    fn off_centre_scatterer_has_rotational_doppler() {
        // slow-time FFT of the centre range cell
        let chirp = short_chirp(32e9, 40e9);
        let motion = MotionState::turntable(0.0);
        let n = 512;
        let echoes = synthesize_echoes(&single(0.0, 0.1), &motion, &chirp, n, None, 0).unwrap();
        let replica = generate_chirp(&chirp).unwrap();
        let centre_delay = 2.0 * motion.standoff_range / SPEED_OF_LIGHT;
        let mut slow: Vec<Complex64> = (0..n)
            .map(|p| {
                let out = matched_filter(&echoes.row_series(p), &replica).unwrap();
                let idx = ((centre_delay - out.t0) * chirp.sample_rate).round() as usize;
                out.samples[idx]
            })
            .collect();
        let mut planner = rustfft::FftPlanner::new();
        planner.plan_fft_forward(n).process(&mut slow);
        let peak = (0..n).max_by(|&a, &b| slow[a].norm().total_cmp(&slow[b].norm())).unwrap();
        let bin = 1.0 / (n as f64 * chirp.pri);
        let freq = if peak > n / 2 { peak as f64 - n as f64 } else { peak as f64 } * bin;
        let expected = 2.0 * motion.rotation_rate * 0.1 / chirp.wavelength();
        assert!((expected - 301.8).abs() < 0.5);
        assert!((freq - expected).abs() <= bin, "{freq} vs {expected}, bin {bin}");
    }

    #[test]
    fn pulse_angles_step_by_rate_times_pri() {
        let chirp = short_chirp(32e9, 40e9);
        let motion = MotionState::turntable(0.3);
        let echoes = synthesize_echoes(&single(0.05, 0.0), &motion, &chirp, 5, None, 0).unwrap();
        assert_eq!(echoes.pulse_angles.len(), 5);
        for p in 0..5 {
            assert_eq!(echoes.pulse_angles[p], 0.3 + motion.rotation_rate * (p as f64 * chirp.pri));
        }
    }

    #[test]
    fn noise_free_synthesis_ignores_seed() {
        let chirp = short_chirp(36e9, 40e9);
        let uav = make_archetype(Archetype::Uav, 0.4).unwrap();
        let m = MotionState::turntable(1.0);
        let a = synthesize_echoes(&uav, &m, &chirp, 3, None, 1).unwrap();
        let b = synthesize_echoes(&uav, &m, &chirp, 3, None, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_matches_requested_snr() {
        let chirp = short_chirp(36e9, 40e9);
        let uav = make_archetype(Archetype::Uav, 0.4).unwrap();
        let m = MotionState::turntable(1.0);
        let clean = synthesize_echoes(&uav, &m, &chirp, 40, None, 0).unwrap();
        let noisy = synthesize_echoes(&uav, &m, &chirp, 40, Some(10.0), 7).unwrap();
        let ps = clean.energy() / clean.data.len() as f64;
        let pn = clean
            .data
            .iter()
            .zip(&noisy.data)
            .map(|(a, b)| (b - a).norm_sqr())
            .sum::<f64>()
            / clean.data.len() as f64;
        let snr = 10.0 * (ps / pn).log10();
        assert!((snr - 10.0).abs() < 0.2, "measured {snr} dB");
        let again = synthesize_echoes(&uav, &m, &chirp, 40, Some(10.0), 7).unwrap();
        assert_eq!(noisy, again);
    }

    #[test]
    fn target_outside_window_is_a_configuration_error() {
        let chirp = short_chirp(36e9, 40e9);
        let far = single(0.5, 0.0);
        let err = synthesize_echoes(&far, &MotionState::turntable(0.0), &chirp, 1, None, 0).unwrap_err();
        assert!(matches!(err, Error::Configuration(_)));
        assert!(synthesize_echoes(&single(0.0, 0.0), &MotionState::turntable(0.0), &chirp, 0, None, 0).is_err());
    }

    #[test]
    fn dataset_sizes_labels_and_determinism() {
        let targets = standard_targets(0.4).unwrap();
        let plan = plan_dataset(&targets, 50, AnglePolicy::Random, 3).unwrap();
        assert_eq!(plan.len(), 150);
        for class in 0..3 {
            assert_eq!(plan.iter().filter(|p| p.class_id == class).count(), 50);
        }
        assert!(plan.iter().all(|p| (0.0..2.0 * PI).contains(&p.initial_angle)));
        assert_eq!(plan, plan_dataset(&targets, 50, AnglePolicy::Random, 3).unwrap());

        let fixed = plan_dataset(&targets, 4, AnglePolicy::Fixed(0.0), 3).unwrap();
        assert!(fixed.iter().all(|p| p.initial_angle == 0.0));
        let sweep = plan_dataset(&targets, 3, AnglePolicy::Sweep { start: 0.1, step: 0.5 }, 3).unwrap();
        assert_eq!(sweep[2].initial_angle, 0.1 + 0.5 * 2.0);

        assert!(plan_dataset(&[], 5, AnglePolicy::Random, 0).is_err());

        let chirp = short_chirp(36e9, 40e9);
        let m = MotionState::turntable(0.0);
        let a = generate_dataset(&targets, &chirp, &m, 2, 1, AnglePolicy::Random, Some(20.0), 5).unwrap();
        let b = generate_dataset(&targets, &chirp, &m, 2, 1, AnglePolicy::Random, Some(20.0), 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
    }

    proptest! {
        #[test]
        fn rotation_composes(a in -7.0f64..7.0, b in -7.0f64..7.0, x in -1.0f64..1.0, y in -1.0f64..1.0) {
            let t = single(x, y);
            let once = TargetModel::new("r", rotate(&t, a), 0).unwrap();
            let twice = rotate(&once, b)[0];
            let direct = rotate(&t, a + b)[0];
            prop_assert!((twice.x - direct.x).abs() < 1e-12);
            prop_assert!((twice.y - direct.y).abs() < 1e-12);
        }

        #[test]
        fn echo_energy_scales_with_amplitude_squared(angle in 0.0f64..6.3, k in 0.5f64..3.0) {
            let chirp = short_chirp(36e9, 40e9);
            let base = make_archetype(Archetype::Uav, 0.4).unwrap();
            let mut scaled = base.clone();
            scaled.scatterers.iter_mut().for_each(|s| s.amplitude *= k);
            let m = MotionState::turntable(angle);
            let e1 = synthesize_echoes(&base, &m, &chirp, 2, None, 0).unwrap().energy();
            let e2 = synthesize_echoes(&scaled, &m, &chirp, 2, None, 0).unwrap().energy();
            prop_assert!((e2 / e1 - k * k).abs() < 1e-9 * k * k);
        }
    }
}
