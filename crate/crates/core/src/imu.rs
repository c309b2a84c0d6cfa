// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The tiltrio authors.

//! IMU debiasing and gradient-descent (Madgwick) attitude filtering.
//!
//! The filter fuses gyro rates with the accelerometer's gravity direction. Yaw
//! is unobservable without a magnetometer and drifts with the residual gyro
//! bias; downstream consumers only use yaw differences over short intervals.

use nalgebra::Vector3;
use thiserror::Error;

use crate::geometry::{slerp, UnitQuat};
use crate::{nanos_to_secs, secs_to_nanos, Nanos, GRAVITY};

/// Gyro variance above this over the static window rejects the window, (rad/s)².
pub const MAX_STATIC_GYRO_VARIANCE: f64 = 0.02 * 0.02;
/// Largest distance outside a track's span that `attitude_at` clamps to the endpoint.
pub const MAX_EXTRAPOLATION_NS: Nanos = 50_000_000;
/// Longest single filter step; larger sample gaps are split.
pub const MAX_FILTER_DT: f64 = 0.1;
/// Default filter gain.
pub const DEFAULT_BETA: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImuError {
    #[error("static window needs {needed_s} s of IMU data, stream spans {available_s} s")]
    InsufficientData { needed_s: f64, available_s: f64 },
    #[error("vehicle not static during bias window: gyro variance {variance:.3e} (rad/s)²")]
    NotStatic { variance: f64 },
    #[error("attitude requested at {t} ns, more than 50 ms outside track span [{start}, {end}]")]
    ExtrapolationTooFar { t: Nanos, start: Nanos, end: Nanos },
    #[error("attitude track is empty")]
    EmptyTrack,
    #[error("timestamps must be strictly increasing (index {index})")]
    NonMonotonic { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: Nanos,
    /// Body-frame angular rate, rad/s.
    pub omega: Vector3<f64>,
    /// Body-frame specific force, m/s².
    pub accel: Vector3<f64>,
}

impl ImuSample {
    pub fn new(t: Nanos, omega: Vector3<f64>, accel: Vector3<f64>) -> Self {
        Self { t, omega, accel }
    }
}

/// Whether an accelerometer reading is close enough to 1 g to reference gravity.
pub fn accel_usable(accel: &Vector3<f64>) -> bool {
    let n = accel.norm();
    (0.5 * GRAVITY..=3.0 * GRAVITY).contains(&n)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImuBias {
    pub gyro: Vector3<f64>,
    pub accel: Vector3<f64>,
}

impl ImuBias {
    pub fn apply(&self, s: &ImuSample) -> ImuSample {
        ImuSample { t: s.t, omega: s.omega - self.gyro, accel: s.accel - self.accel }
    }
}

/// Samples with `t < t0 + window`, where `t0` is the first timestamp.
fn static_window(samples: &[ImuSample], window_s: f64) -> Result<&[ImuSample], ImuError> {
    let (first, last) = match (samples.first(), samples.last()) {
        (Some(f), Some(l)) => (f.t, l.t),
        _ => return Err(ImuError::InsufficientData { needed_s: window_s, available_s: 0.0 }),
    };
    let end = first + secs_to_nanos(window_s);
    if last < end {
        return Err(ImuError::InsufficientData { needed_s: window_s, available_s: nanos_to_secs(last - first) });
    }
    let n = samples.partition_point(|s| s.t < end);
    Ok(&samples[..n])
}

fn mean_of(samples: &[ImuSample], f: impl Fn(&ImuSample) -> Vector3<f64>) -> Vector3<f64> {
    samples.iter().map(f).sum::<Vector3<f64>>() / samples.len() as f64
}

/// Averages the initial static window.
///
/// The gyro bias is the mean rate. The accelerometer bias removes only the
/// magnitude error of the mean reading, so its direction keeps encoding the
/// initial tilt.
pub fn estimate_bias(samples: &[ImuSample], window_s: f64) -> Result<ImuBias, ImuError> {
    let window = static_window(samples, window_s)?;
    let gyro = mean_of(window, |s| s.omega);
    let var = window.iter().map(|s| (s.omega - gyro).component_mul(&(s.omega - gyro))).sum::<Vector3<f64>>()
        / window.len() as f64;
    let variance = var.max();
    if variance > MAX_STATIC_GYRO_VARIANCE {
        return Err(ImuError::NotStatic { variance });
    }
    let mean_accel = mean_of(window, |s| s.accel);
    let norm = mean_accel.norm();
    let accel = if norm > 0.0 { mean_accel - mean_accel * (GRAVITY / norm) } else { Vector3::zeros() };
    if gyro.norm() >= 0.1 {
        log::warn!("gyro bias {:.4} rad/s is implausibly large for a static window", gyro.norm());
    }
    Ok(ImuBias { gyro, accel })
}

/// Roll/pitch from a gravity reading, yaw zero.
pub fn attitude_from_gravity(accel: &Vector3<f64>) -> UnitQuat {
    let roll = accel.y.atan2(accel.z);
    let pitch = (-accel.x).atan2((accel.y * accel.y + accel.z * accel.z).sqrt());
    UnitQuat::from_rpy(roll, pitch, 0.0)
}

/// Filter warm start from the mean accelerometer direction of the static window.
pub fn warm_start(samples: &[ImuSample], window_s: f64) -> Result<UnitQuat, ImuError> {
    let window = static_window(samples, window_s)?;
    Ok(attitude_from_gravity(&mean_of(window, |s| s.accel)))
}

/// One Madgwick update: gyro propagation corrected by a `beta`-scaled,
/// normalized gradient step toward aligning the predicted and measured
/// gravity directions. Accelerometer readings outside `[0.5 g, 3 g]` are
/// ignored for that step.
pub fn madgwick_step(q: &UnitQuat, omega: &Vector3<f64>, accel: &Vector3<f64>, dt: f64, beta: f64) -> UnitQuat {
    debug_assert!(dt > 0.0 && dt <= MAX_FILTER_DT + 1e-12, "filter step {dt} s out of range");
    let mut q_dot = q.mul_pure(omega).map(|c| 0.5 * c);

    if beta > 0.0 && accel_usable(accel) {
        let a = accel / accel.norm();
        let [q0, q1, q2, q3] = q.to_array();
        // Predicted gravity direction in the body frame minus the measurement.
        let f =
            [2.0 * (q1 * q3 - q0 * q2) - a.x, 2.0 * (q0 * q1 + q2 * q3) - a.y, 2.0 * (0.5 - q1 * q1 - q2 * q2) - a.z];
        let grad = [
            -2.0 * q2 * f[0] + 2.0 * q1 * f[1],
            2.0 * q3 * f[0] + 2.0 * q0 * f[1] - 4.0 * q1 * f[2],
            -2.0 * q0 * f[0] + 2.0 * q3 * f[1] - 4.0 * q2 * f[2],
            2.0 * q1 * f[0] + 2.0 * q2 * f[1],
        ];
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (d, g) in q_dot.iter_mut().zip(grad) {
                *d -= beta * g / norm;
            }
        }
    }
    q.add_and_normalize(q_dot.map(|c| c * dt))
}

/// Stateful wrapper around [`madgwick_step`].
#[derive(Debug, Clone)]
pub struct AttitudeFilter {
    q: UnitQuat,
    beta: f64,
    last_t: Option<Nanos>,
}

impl AttitudeFilter {
    pub fn new(initial: UnitQuat, beta: f64) -> Self {
        Self { q: initial, beta, last_t: None }
    }

    pub fn attitude(&self) -> UnitQuat {
        self.q
    }

    /// Consumes a debiased sample. The first sample only sets the clock.
    pub fn update(&mut self, s: &ImuSample) -> UnitQuat {
        if let Some(last) = self.last_t {
            let dt = nanos_to_secs(s.t - last);
            if dt > 0.0 {
                let steps = (dt / MAX_FILTER_DT).ceil().max(1.0);
                let h = dt / steps;
                for _ in 0..steps as usize {
                    self.q = madgwick_step(&self.q, &s.omega, &s.accel, h, self.beta);
                }
            }
        }
        self.last_t = Some(s.t);
        self.q
    }
}

/// Time-indexed attitude estimates, strictly increasing in time, with
/// consecutive quaternions on the same hemisphere.
#[derive(Debug, Clone, Default)]
pub struct AttitudeTrack {
    entries: Vec<(Nanos, UnitQuat)>,
}

impl AttitudeTrack {
    pub fn new(entries: Vec<(Nanos, UnitQuat)>) -> Result<Self, ImuError> {
        let mut track = Self { entries: Vec::with_capacity(entries.len()) };
        for (t, q) in entries {
            track.push(t, q)?;
        }
        Ok(track)
    }

    pub fn push(&mut self, t: Nanos, q: UnitQuat) -> Result<(), ImuError> {
        let q = match self.entries.last() {
            Some(&(last_t, _)) if t <= last_t => return Err(ImuError::NonMonotonic { index: self.entries.len() }),
            Some((_, prev)) => q.aligned_to(prev),
            None => q,
        };
        self.entries.push((t, q));
        Ok(())
    }

    pub fn entries(&self) -> &[(Nanos, UnitQuat)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn span(&self) -> Option<(Nanos, Nanos)> {
        Some((self.entries.first()?.0, self.entries.last()?.0))
    }

    /// Slerped attitude at `t`, clamped to the endpoints up to 50 ms outside the span.
    pub fn attitude_at(&self, t: Nanos) -> Result<UnitQuat, ImuError> {
        let (start, end) = self.span().ok_or(ImuError::EmptyTrack)?;
        if t < start - MAX_EXTRAPOLATION_NS || t > end + MAX_EXTRAPOLATION_NS {
            return Err(ImuError::ExtrapolationTooFar { t, start, end });
        }
        if t <= start {
            return Ok(self.entries[0].1);
        }
        if t >= end {
            return Ok(self.entries[self.entries.len() - 1].1);
        }
        let i = self.entries.partition_point(|(ti, _)| *ti <= t);
        let (t0, q0) = self.entries[i - 1];
        let (t1, q1) = self.entries[i];
        if t == t0 {
            return Ok(q0);
        }
        let frac = (t - t0) as f64 / (t1 - t0) as f64;
        Ok(slerp(&q0, &q1, frac))
    }
}

/// Free-function form of [`AttitudeTrack::attitude_at`].
pub fn attitude_at(track: &AttitudeTrack, t: Nanos) -> Result<UnitQuat, ImuError> {
    track.attitude_at(t)
}

/// Debiases the stream, warm-starts from the static window, and runs the
/// filter over every sample.
pub fn build_attitude_track(
    samples: &[ImuSample],
    static_window_s: f64,
    beta: f64,
) -> Result<(AttitudeTrack, ImuBias), ImuError> {
    let bias = estimate_bias(samples, static_window_s)?;
    let debiased: Vec<ImuSample> = samples.iter().map(|s| bias.apply(s)).collect();
    let initial = warm_start(&debiased, static_window_s)?;
    let mut filter = AttitudeFilter::new(initial, beta);
    let mut track = AttitudeTrack::default();
    for s in &debiased {
        let q = filter.update(s);
        track.push(s.t, q)?;
    }
    Ok((track, bias))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    const DEG: f64 = PI / 180.0;
    const DT_NS: Nanos = 5_000_000;

    fn constant_stream(seconds: f64, omega: Vector3<f64>, accel: Vector3<f64>) -> Vec<ImuSample> {
        let n = (seconds / 0.005).round() as i64;
        (0..=n).map(|i| ImuSample::new(i * DT_NS, omega, accel)).collect()
    }

    fn gravity_in_body(q: &UnitQuat) -> Vector3<f64> {
        q.inverse().rotate(&Vector3::new(0.0, 0.0, GRAVITY))
    }

    #[test]
    fn bias_from_constant_gyro() {
        let s = constant_stream(10.0, Vector3::new(0.01, 0.0, 0.0), Vector3::new(0.0, 0.0, 9.81));
        let b = estimate_bias(&s, 10.0).unwrap();
        assert_abs_diff_eq!(b.gyro, Vector3::new(0.01, 0.0, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(b.accel, Vector3::zeros(), epsilon = 1e-12);
    }

    #[test]
    fn bias_removes_accel_magnitude_error() {
        let s = constant_stream(10.0, Vector3::zeros(), Vector3::new(0.0, 0.0, 10.0));
        let b = estimate_bias(&s, 10.0).unwrap();
        assert_abs_diff_eq!(b.accel, Vector3::new(0.0, 0.0, 10.0 - 9.81), epsilon = 1e-12);
    }

    #[test]
    fn bias_needs_full_window() {
        let s = constant_stream(1.0, Vector3::zeros(), Vector3::new(0.0, 0.0, 9.81));
        assert!(matches!(estimate_bias(&s, 10.0), Err(ImuError::InsufficientData { .. })));
        assert!(matches!(estimate_bias(&[], 10.0), Err(ImuError::InsufficientData { .. })));
    }

    #[test]
    fn bias_rejects_moving_window() {
        let mut s = constant_stream(10.0, Vector3::zeros(), Vector3::new(0.0, 0.0, 9.81));
        for (i, sample) in s.iter_mut().enumerate() {
            sample.omega.z = if i % 2 == 0 { 0.1 } else { -0.1 };
        }
        assert!(matches!(estimate_bias(&s, 10.0), Err(ImuError::NotStatic { .. })));
    }

    #[test]
    fn warm_start_recovers_tilt() {
        let truth = UnitQuat::from_rpy(8.0 * DEG, -12.0 * DEG, 0.0);
        let s = constant_stream(10.0, Vector3::zeros(), gravity_in_body(&truth));
        assert!(warm_start(&s, 10.0).unwrap().approx_eq(&truth, 1e-12));
    }

    #[test]
    fn level_and_static_is_a_fixed_point() {
        for beta in [0.0, 0.1, 2.0] {
            for dt in [0.001, 0.005, 0.1] {
                let q =
                    madgwick_step(&UnitQuat::identity(), &Vector3::zeros(), &Vector3::new(0.0, 0.0, 9.81), dt, beta);
                assert!(q.approx_eq(&UnitQuat::identity(), 1e-15));
            }
        }
    }

    #[test]
    fn pure_gyro_yaw_integration() {
        // Closed form: a constant rate of pi/2 rad/s for 1 s is a 90° yaw.
        let mut q = UnitQuat::identity();
        for _ in 0..200 {
            q = madgwick_step(&q, &Vector3::new(0.0, 0.0, PI / 2.0), &Vector3::zeros(), 0.005, 0.0);
        }
        assert_abs_diff_eq!(q.yaw(), PI / 2.0, epsilon = 1e-3);
        assert!(q.approx_eq(&UnitQuat::from_yaw(PI / 2.0), 1e-3));
    }

    #[test]
    fn roll_error_converges() {
        let accel: Vector3<f64> = Vector3::new(0.0, 0.0, 9.81);
        let oracle_roll = accel.y.atan2(accel.z);
        let mut q = UnitQuat::from_rpy(20.0 * DEG, 0.0, 0.0);
        for _ in 0..2000 {
            q = madgwick_step(&q, &Vector3::zeros(), &accel, 0.005, 0.1);
        }
        let (roll, _, _) = q.to_rpy();
        assert!((roll - oracle_roll).abs() < 0.5 * DEG, "roll error {} deg", roll / DEG);
    }

    #[test]
    fn impact_accel_is_ignored() {
        let q0 = UnitQuat::from_rpy(0.2, 0.0, 0.0);
        let spike = Vector3::new(0.0, 0.0, 40.0);
        let q = madgwick_step(&q0, &Vector3::zeros(), &spike, 0.005, 0.5);
        assert!(q.approx_eq(&q0, 1e-15));
        assert!(!accel_usable(&Vector3::new(0.0, 0.0, 4.0)));
        assert!(accel_usable(&Vector3::new(0.0, 0.0, 9.81)));
    }

    #[test]
    fn zero_beta_matches_exponential_integration() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut q_filter = UnitQuat::from_rpy(0.1, 0.2, 0.3);
        let mut q_exp = q_filter;
        let dt = 0.005;
        for _ in 0..2000 {
            let w = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let before = q_filter.angle_to(&q_exp);
            q_filter = madgwick_step(&q_filter, &w, &Vector3::new(0.0, 0.0, 9.81), dt, 0.0);
            q_exp = q_exp * UnitQuat::from_rotation_vector(&(w * dt));
            // Per-step discrepancy, not accumulated.
            assert!(q_filter.angle_to(&q_exp) - before < 1e-6);
        }
    }

    #[test]
    fn tilt_error_converges_monotonically() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let beta = 0.1;
        let dt = 0.005;
        // The normalized gradient chatters around the optimum with amplitude ~beta*dt.
        let band = 2.0 * beta * dt;
        for _ in 0..10 {
            let truth = UnitQuat::from_rpy(
                rng.random_range(-15.0..15.0) * DEG,
                rng.random_range(-15.0..15.0) * DEG,
                rng.random_range(-PI..PI),
            );
            let accel = gravity_in_body(&truth);
            let err_axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0);
            let q0 = truth * UnitQuat::from_axis_angle(&err_axis, rng.random_range(1.0..30.0) * DEG);
            let tilt_error = |q: &UnitQuat| {
                let g = gravity_in_body(q).normalize();
                g.angle(&accel.normalize())
            };
            let mut q = q0;
            let mut prev = f64::INFINITY;
            for k in 0..(20.0 / dt) as usize {
                q = madgwick_step(&q, &Vector3::zeros(), &accel, dt, beta);
                let e = tilt_error(&q);
                if k as f64 * dt >= 1.0 {
                    if prev > band {
                        assert!(e <= prev + 1e-12, "error grew from {prev} to {e}");
                    } else {
                        assert!(e <= band, "error {e} left the convergence band");
                    }
                }
                prev = e;
            }
            assert!(prev <= band);
        }
    }

    #[test]
    fn yaw_offset_does_not_change_tilt_sequence() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let offset = UnitQuat::from_yaw(1.3);
        let mut a = UnitQuat::from_rpy(0.2, -0.1, 0.0);
        let mut b = offset * a;
        for _ in 0..2000 {
            let w = Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
            let acc = Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), 9.81);
            a = madgwick_step(&a, &w, &acc, 0.005, 0.1);
            b = madgwick_step(&b, &w, &acc, 0.005, 0.1);
            let (ra, pa, _) = a.to_rpy();
            let (rb, pb, _) = b.to_rpy();
            assert!((ra - rb).abs() < 1e-6 && (pa - pb).abs() < 1e-6);
        }
    }

    #[test]
    fn attitude_at_examples() {
        let yaw10 = UnitQuat::from_yaw(10.0 * DEG);
        let track = AttitudeTrack::new(vec![(0, UnitQuat::identity()), (100_000_000, yaw10)]).unwrap();
        assert_eq!(track.attitude_at(100_000_000).unwrap(), yaw10);
        assert!(track.attitude_at(50_000_000).unwrap().approx_eq(&UnitQuat::from_yaw(5.0 * DEG), 1e-12));
        assert_eq!(track.attitude_at(130_000_000).unwrap(), yaw10);
        assert!(matches!(track.attitude_at(200_000_000), Err(ImuError::ExtrapolationTooFar { .. })));
        assert!(matches!(track.attitude_at(-60_000_000), Err(ImuError::ExtrapolationTooFar { .. })));
        assert_eq!(AttitudeTrack::default().attitude_at(0), Err(ImuError::EmptyTrack));
    }

    #[test]
    fn track_keeps_hemisphere_continuity() {
        let a = UnitQuat::from_yaw(179.0 * DEG);
        let b = UnitQuat::from_yaw(-179.0 * DEG).canonical();
        let track = AttitudeTrack::new(vec![(0, a), (1, b)]).unwrap();
        let e = track.entries();
        assert!(e[0].1.dot(&e[1].1) >= 0.0);
        assert!(AttitudeTrack::new(vec![(1, a), (1, b)]).is_err());
    }

    #[test]
    fn build_track_tracks_static_tilt() {
        let truth = UnitQuat::from_rpy(3.0 * DEG, 4.0 * DEG, 0.0);
        let mut s = constant_stream(12.0, Vector3::new(0.002, -0.001, 0.003), gravity_in_body(&truth));
        for x in &mut s {
            x.accel *= 1.01;
        }
        let (track, bias) = build_attitude_track(&s, 10.0, DEFAULT_BETA).unwrap();
        assert_abs_diff_eq!(bias.gyro, Vector3::new(0.002, -0.001, 0.003), epsilon = 1e-12);
        assert_eq!(track.len(), s.len());
        let q = track.attitude_at(s.last().unwrap().t).unwrap();
        assert!(q.approx_eq(&truth, 1e-3));
    }
}
