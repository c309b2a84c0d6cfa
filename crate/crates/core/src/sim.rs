// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The tiltrio authors.

//! Deterministic synthetic datasets: a world of poles, walls and terrain, a
//! vehicle path with a tilt profile, and the radar scans and IMU stream the
//! vehicle would record along it.
//!
//! All randomness derives from [`Scenario::seed`]. Scan noise is drawn from a
//! generator keyed by scan start time and azimuth, so scans can be rendered
//! in any order, or in parallel, with identical bytes.

use std::f64::consts::PI;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::Pose3Sample;
use crate::frontend::PolarScan;
use crate::geometry::{normalize_angle, slerp, UnitQuat};
use crate::imu::ImuSample;
use crate::{nanos_to_secs, secs_to_nanos, Nanos, GRAVITY};

/// Ground-truth sample period (1 kHz).
pub const GT_PERIOD_NS: Nanos = 1_000_000;

const TERRAIN_STEP: f64 = 0.5;
const TERRAIN_CELL: f64 = 4.0;
const TERRAIN_MAX_RINGS: i64 = 10;
const PROFILE_STEP: f64 = 0.05;
const SPEED_BLEND_M: f64 = 4.0;
const BRAKE_DECEL: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

fn invalid(msg: impl Into<String>) -> SimError {
    SimError::InvalidScenario(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pole {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub base_z: f64,
    pub height: f64,
    pub reflectivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wall {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    #[serde(default)]
    pub base_z: f64,
    pub height: f64,
    pub reflectivity: f64,
}

/// Poles scattered uniformly over a rectangle, kept clear of the path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomPoles {
    pub count: usize,
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub height_range: [f64; 2],
    pub reflectivity_range: [f64; 2],
    /// Minimum horizontal distance to the path, meters.
    #[serde(default = "default_clearance")]
    pub clearance: f64,
}

fn default_clearance() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct World {
    #[serde(default)]
    pub poles: Vec<Pole>,
    #[serde(default)]
    pub walls: Vec<Wall>,
    #[serde(default)]
    pub random_poles: Option<RandomPoles>,
    /// Reflectivity of the terrain surface; 0 disables ground returns.
    #[serde(default)]
    pub ground_reflectivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Segment {
    Line {
        length: f64,
        speed: f64,
    },
    /// Positive angles turn left.
    Arc {
        radius: f64,
        angle_deg: f64,
        speed: f64,
    },
}

impl Segment {
    fn length(&self) -> f64 {
        match *self {
            Segment::Line { length, .. } => length,
            Segment::Arc { radius, angle_deg, .. } => radius * angle_deg.to_radians().abs(),
        }
    }

    fn speed(&self) -> f64 {
        match *self {
            Segment::Line { speed, .. } | Segment::Arc { speed, .. } => speed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    #[serde(default)]
    pub start_x: f64,
    #[serde(default)]
    pub start_y: f64,
    #[serde(default)]
    pub start_heading_deg: f64,
    /// Time at rest before moving, seconds.
    #[serde(default)]
    pub static_s: f64,
    /// Duration of the cosine speed ramp after the rest, seconds.
    #[serde(default)]
    pub ramp_s: f64,
    /// Sensor height above the ground contact point, meters.
    #[serde(default = "default_mount")]
    pub mount_height: f64,
    /// Brake to a stop at the end of the path instead of halting abruptly.
    #[serde(default = "default_true")]
    pub stop_at_end: bool,
    pub segments: Vec<Segment>,
    /// `(arc length m, pitch deg)` knots; positive pitch tips the nose down.
    #[serde(default)]
    pub pitch_profile: Vec<[f64; 2]>,
    /// `(arc length m, roll deg)` knots; positive roll lifts the left side.
    #[serde(default)]
    pub roll_profile: Vec<[f64; 2]>,
}

fn default_mount() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadarModel {
    pub azimuths: usize,
    pub range_bins: usize,
    pub range_resolution: f64,
    pub period_s: f64,
    pub noise_mean: f64,
    pub noise_sigma: f64,
    pub elevation_half_width_deg: f64,
    pub beam_half_width_deg: f64,
    /// Range at which amplitude equals reflectivity, meters.
    pub reference_range: f64,
}

impl Default for RadarModel {
    fn default() -> Self {
        Self {
            azimuths: 400,
            range_bins: 1000,
            range_resolution: 0.1,
            period_s: 0.25,
            noise_mean: 40.0,
            noise_sigma: 5.0,
            elevation_half_width_deg: 2.0,
            beam_half_width_deg: 0.9,
            reference_range: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImuModel {
    pub rate_hz: f64,
    /// Gyro white noise density, rad/s/√Hz.
    pub gyro_noise: f64,
    /// Accelerometer white noise density, m/s²/√Hz.
    pub accel_noise: f64,
    pub gyro_bias: [f64; 3],
    pub accel_bias: [f64; 3],
}

impl Default for ImuModel {
    fn default() -> Self {
        Self {
            rate_hz: 200.0,
            gyro_noise: 6e-5,
            accel_noise: 1.4e-3,
            gyro_bias: [2e-3, -1.5e-3, 1e-3],
            accel_bias: [0.02, -0.015, 0.03],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    /// Simulated duration; defaults to the time needed to drive the path.
    #[serde(default)]
    pub duration_s: Option<f64>,
    #[serde(default)]
    pub world: World,
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub radar: RadarModel,
    #[serde(default)]
    pub imu: ImuModel,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let s: Scenario = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let tr = &self.trajectory;
        if tr.segments.is_empty() {
            return Err(invalid("trajectory has no segments"));
        }
        for (i, seg) in tr.segments.iter().enumerate() {
            if !(seg.length() > 0.0) {
                return Err(invalid(format!("segment {i} has zero length")));
            }
            if !(seg.speed() > 0.0) {
                return Err(invalid(format!("segment {i} needs a positive speed")));
            }
            if let Segment::Arc { radius, .. } = seg {
                if !(*radius > 0.0) {
                    return Err(invalid(format!("segment {i} needs a positive radius")));
                }
            }
        }
        if tr.static_s < 0.0 || tr.ramp_s < 0.0 || tr.mount_height < 0.0 {
            return Err(invalid("static_s, ramp_s and mount_height must be non-negative"));
        }
        for (name, p) in [("pitch", &tr.pitch_profile), ("roll", &tr.roll_profile)] {
            if p.windows(2).any(|w| w[1][0] <= w[0][0]) {
                return Err(invalid(format!("{name} profile knots must increase in arc length")));
            }
            if p.iter().any(|k| k[1].abs() >= 80.0) {
                return Err(invalid(format!("{name} profile exceeds 80 degrees")));
            }
        }
        let r = &self.radar;
        if r.azimuths == 0 || r.range_bins == 0 || !(r.range_resolution > 0.0) || !(r.period_s > 0.0) {
            return Err(invalid("radar grid and period must be positive"));
        }
        if r.noise_sigma < 0.0 || r.elevation_half_width_deg < 0.0 || r.beam_half_width_deg < 0.0 {
            return Err(invalid("radar widths and noise must be non-negative"));
        }
        if !(self.imu.rate_hz > 0.0) || self.imu.gyro_noise < 0.0 || self.imu.accel_noise < 0.0 {
            return Err(invalid("imu rate must be positive and noise non-negative"));
        }
        if let Some(d) = self.duration_s {
            if !(d > 0.0) {
                return Err(invalid("duration must be positive"));
            }
        }
        if let Some(rp) = &self.world.random_poles {
            if rp.x_range[1] <= rp.x_range[0] || rp.y_range[1] <= rp.y_range[0] {
                return Err(invalid("random pole region is empty"));
            }
        }
        Ok(())
    }

    /// A flat rectangular loop of about 500 m among ~200 poles.
    pub fn flat_loop(seed: u64) -> Self {
        let v = 4.0;
        let turn = || Segment::Arc { radius: 10.0, angle_deg: 90.0, speed: v };
        Scenario {
            seed,
            duration_s: None,
            world: World {
                random_poles: Some(RandomPoles {
                    count: 200,
                    x_range: [-50.0, 195.0],
                    y_range: [-50.0, 155.0],
                    height_range: [2.0, 6.0],
                    reflectivity_range: [120.0, 255.0],
                    clearance: 3.0,
                }),
                ..World::default()
            },
            trajectory: TrajectorySpec {
                start_x: 0.0,
                start_y: 0.0,
                start_heading_deg: 0.0,
                static_s: 10.0,
                ramp_s: 3.0,
                mount_height: 1.0,
                stop_at_end: true,
                segments: vec![
                    Segment::Line { length: 135.0, speed: v },
                    turn(),
                    Segment::Line { length: 85.0, speed: v },
                    turn(),
                    Segment::Line { length: 135.0, speed: v },
                    turn(),
                    Segment::Line { length: 85.0, speed: v },
                    turn(),
                ],
                pitch_profile: vec![],
                roll_profile: vec![],
            },
            radar: RadarModel::default(),
            imu: ImuModel::default(),
        }
    }

    /// Quarry-style course: long grades up to 30° of pitch, side slopes of
    /// 8° roll, and a ditch whose pitch swings by more than 13° per scan.
    pub fn quarry(seed: u64) -> Self {
        let v = 3.0;
        Scenario {
            seed,
            duration_s: None,
            world: World {
                random_poles: Some(RandomPoles {
                    count: 160,
                    x_range: [-50.0, 190.0],
                    y_range: [-60.0, 110.0],
                    height_range: [3.0, 12.0],
                    reflectivity_range: [120.0, 255.0],
                    clearance: 3.0,
                }),
                ground_reflectivity: 90.0,
                ..World::default()
            },
            trajectory: TrajectorySpec {
                start_x: 0.0,
                start_y: 0.0,
                start_heading_deg: 0.0,
                static_s: 10.0,
                ramp_s: 3.0,
                mount_height: 1.0,
                stop_at_end: true,
                segments: vec![
                    Segment::Line { length: 140.0, speed: v },
                    Segment::Arc { radius: 12.0, angle_deg: 90.0, speed: v },
                    Segment::Line { length: 50.0, speed: v },
                    Segment::Arc { radius: 12.0, angle_deg: 90.0, speed: v },
                    Segment::Line { length: 140.0, speed: v },
                ],
                // Ditch at 20 m, climb and descent on the first leg, a second
                // ditch on the return leg.
                pitch_profile: vec![
                    [0.0, 0.0],
                    [20.0, 0.0],
                    [22.5, -15.0],
                    [25.0, 15.0],
                    [27.5, 0.0],
                    [45.0, 0.0],
                    [60.0, -30.0],
                    [75.0, -30.0],
                    [85.0, 0.0],
                    [95.0, 0.0],
                    [105.0, 20.0],
                    [118.0, 20.0],
                    [128.0, 0.0],
                    [300.0, 0.0],
                    [303.0, -10.0],
                    [306.0, 10.0],
                    [309.0, 0.0],
                    [330.0, 0.0],
                    [340.0, -12.0],
                    [355.0, 0.0],
                ],
                roll_profile: vec![
                    [0.0, 0.0],
                    [30.0, 0.0],
                    [32.0, 8.0],
                    [55.0, 8.0],
                    [57.0, 0.0],
                    [215.0, 0.0],
                    [217.0, -8.0],
                    [245.0, -8.0],
                    [247.0, 0.0],
                    [335.0, 0.0],
                    [345.0, 4.0],
                    [360.0, 0.0],
                ],
            },
            radar: RadarModel::default(),
            imu: ImuModel::default(),
        }
    }

    /// A straight, flat drive interrupted by one abrupt, sustained pitch step.
    pub fn tilt_step(seed: u64) -> Self {
        let v = 2.0;
        Scenario {
            seed,
            duration_s: None,
            world: World {
                random_poles: Some(RandomPoles {
                    count: 80,
                    x_range: [-40.0, 110.0],
                    y_range: [-50.0, 50.0],
                    height_range: [2.0, 8.0],
                    reflectivity_range: [120.0, 255.0],
                    clearance: 3.0,
                }),
                ..World::default()
            },
            trajectory: TrajectorySpec {
                start_x: 0.0,
                start_y: 0.0,
                start_heading_deg: 0.0,
                static_s: 10.0,
                ramp_s: 2.0,
                mount_height: 1.0,
                stop_at_end: true,
                segments: vec![Segment::Line { length: 70.0, speed: v }],
                pitch_profile: vec![[0.0, 0.0], [30.0, 0.0], [31.0, -9.0], [70.0, -9.0]],
                roll_profile: vec![],
            },
            radar: RadarModel::default(),
            imu: ImuModel::default(),
        }
    }
}

/// Smooth interpolation between knots (cubic with zero end slopes), so the
/// profile is continuously differentiable.
fn profile_at(knots: &[[f64; 2]], s: f64) -> f64 {
    match knots {
        [] => 0.0,
        [k] => k[1],
        _ => {
            if s <= knots[0][0] {
                return knots[0][1];
            }
            let i = knots.partition_point(|k| k[0] <= s);
            if i >= knots.len() {
                return knots[knots.len() - 1][1];
            }
            let (a, b) = (knots[i - 1], knots[i]);
            let u = (s - a[0]) / (b[0] - a[0]);
            let w = u * u * (3.0 - 2.0 * u);
            a[1] + w * (b[1] - a[1])
        }
    }
}

#[derive(Debug, Clone)]
struct Primitive {
    s0: f64,
    length: f64,
    x: f64,
    y: f64,
    heading: f64,
    /// Signed curvature, 1/m.
    curvature: f64,
    speed: f64,
}

/// Planar path geometry plus the derived tilt and height profiles.
#[derive(Debug, Clone)]
struct Path {
    prims: Vec<Primitive>,
    length: f64,
    pitch_knots: Vec<[f64; 2]>,
    roll_knots: Vec<[f64; 2]>,
    /// Ground height tabulated every `PROFILE_STEP` meters.
    z_table: Vec<f64>,
}

impl Path {
    fn new(spec: &TrajectorySpec) -> Self {
        let mut prims = Vec::new();
        let (mut x, mut y, mut heading) = (spec.start_x, spec.start_y, spec.start_heading_deg.to_radians());
        let mut s0 = 0.0;
        for seg in &spec.segments {
            let curvature = match *seg {
                Segment::Line { .. } => 0.0,
                Segment::Arc { radius, angle_deg, .. } => angle_deg.signum() / radius,
            };
            let p = Primitive { s0, length: seg.length(), x, y, heading, curvature, speed: seg.speed() };
            (x, y, heading) = p.pose_at(p.length);
            s0 += p.length;
            prims.push(p);
        }
        let pitch_knots: Vec<[f64; 2]> = spec.pitch_profile.iter().map(|k| [k[0], k[1].to_radians()]).collect();
        let roll_knots = spec.roll_profile.iter().map(|k| [k[0], k[1].to_radians()]).collect();
        let n = (s0 / PROFILE_STEP).ceil() as usize + 2;
        let mut z_table = Vec::with_capacity(n);
        let mut z = 0.0;
        let slope = |s: f64| -profile_at(&pitch_knots, s).tan();
        for i in 0..n {
            if i > 0 {
                let (a, b) = ((i - 1) as f64 * PROFILE_STEP, i as f64 * PROFILE_STEP);
                // Simpson's rule on each step.
                z += PROFILE_STEP / 6.0 * (slope(a) + 4.0 * slope(0.5 * (a + b)) + slope(b));
            }
            z_table.push(z);
        }
        Self { prims, length: s0, pitch_knots, roll_knots, z_table }
    }

    fn prim(&self, s: f64) -> &Primitive {
        let i = self.prims.partition_point(|p| p.s0 <= s).max(1) - 1;
        &self.prims[i]
    }

    /// Planar position and heading at arc length `s`.
    fn planar(&self, s: f64) -> (f64, f64, f64) {
        let s = s.clamp(0.0, self.length);
        let p = self.prim(s);
        p.pose_at(s - p.s0)
    }

    fn ground_z(&self, s: f64) -> f64 {
        let u = s.clamp(0.0, self.length) / PROFILE_STEP;
        let i = (u.floor() as usize).min(self.z_table.len() - 2);
        let f = u - i as f64;
        self.z_table[i] + f * (self.z_table[i + 1] - self.z_table[i])
    }

    fn pitch(&self, s: f64) -> f64 {
        profile_at(&self.pitch_knots, s)
    }

    fn roll(&self, s: f64) -> f64 {
        profile_at(&self.roll_knots, s)
    }

    /// Commanded speed: per-segment speeds averaged over a short window so
    /// the vehicle never jumps between speeds.
    fn speed(&self, s: f64) -> f64 {
        let n = 9;
        (0..n)
            .map(|i| {
                let q = s + SPEED_BLEND_M * (i as f64 / (n - 1) as f64 - 0.5);
                self.prim(q.clamp(0.0, self.length)).speed
            })
            .sum::<f64>()
            / n as f64
    }
}

impl Primitive {
    fn pose_at(&self, ds: f64) -> (f64, f64, f64) {
        let k = self.curvature;
        if k == 0.0 {
            return (self.x + ds * self.heading.cos(), self.y + ds * self.heading.sin(), self.heading);
        }
        let h1 = self.heading + k * ds;
        (
            self.x + (h1.sin() - self.heading.sin()) / k,
            self.y - (h1.cos() - self.heading.cos()) / k,
            normalize_angle(h1),
        )
    }
}

/// Attitude of the vehicle at arc length `s` on the path.
fn path_attitude(path: &Path, s: f64) -> UnitQuat {
    let (_, _, heading) = path.planar(s);
    UnitQuat::from_rpy(path.roll(s), path.pitch(s), heading)
}

/// Arc length as a function of time at the ground-truth rate.
fn arc_length_profile(spec: &TrajectorySpec, path: &Path, duration: f64) -> Vec<f64> {
    let dt = nanos_to_secs(GT_PERIOD_NS);
    let n = (duration / dt).floor() as usize + 1;
    let time_factor = |t: f64| {
        if t < spec.static_s {
            0.0
        } else if spec.ramp_s > 0.0 && t < spec.static_s + spec.ramp_s {
            0.5 * (1.0 - (PI * (t - spec.static_s) / spec.ramp_s).cos())
        } else {
            1.0
        }
    };
    let rate = |t: f64, s: f64| {
        if s >= path.length {
            return 0.0;
        }
        let v = path.speed(s);
        let brake = if spec.stop_at_end {
            let d = v * v / (2.0 * BRAKE_DECEL);
            ((path.length - s) / d).sqrt().min(1.0)
        } else {
            1.0
        };
        v * time_factor(t) * brake
    };
    let mut out = Vec::with_capacity(n);
    let mut s = 0.0;
    for i in 0..n {
        out.push(s);
        let t = i as f64 * dt;
        let k1 = rate(t, s);
        let k2 = rate(t + 0.5 * dt, s + 0.5 * dt * k1);
        // Braking makes the rate vanish at the end; never step past it.
        s = (s + dt * k2).min(path.length);
    }
    out
}

/// Time to drive the whole path plus one second at rest.
fn natural_duration(spec: &TrajectorySpec, path: &Path) -> f64 {
    let v_min = spec.segments.iter().map(|s| s.speed()).fold(f64::INFINITY, f64::min);
    // Generous bound: profile until the vehicle stops.
    let bound = spec.static_s + spec.ramp_s + path.length / v_min * 1.5 + 30.0;
    let s = arc_length_profile(spec, path, bound);
    let dt = nanos_to_secs(GT_PERIOD_NS);
    let end = s.iter().position(|&x| x >= path.length - 1e-6).unwrap_or(s.len() - 1);
    end as f64 * dt + 1.0
}

/// The sensor's pose at every millisecond of the run.
pub fn generate_ground_truth(s: &Scenario, duration: f64) -> Result<Vec<Pose3Sample>, SimError> {
    s.validate()?;
    if !(duration > 0.0) {
        return Err(invalid("duration must be positive"));
    }
    let path = Path::new(&s.trajectory);
    Ok(ground_truth_on(&s.trajectory, &path, duration))
}

fn ground_truth_on(spec: &TrajectorySpec, path: &Path, duration: f64) -> Vec<Pose3Sample> {
    let arcs = arc_length_profile(spec, path, duration);
    arcs.par_iter()
        .enumerate()
        .map(|(i, &s)| {
            let (x, y, _) = path.planar(s);
            let attitude = path_attitude(path, s);
            let ground = Vector3::new(x, y, path.ground_z(s));
            let position = ground + attitude.rotate(&Vector3::new(0.0, 0.0, spec.mount_height));
            Pose3Sample { t: i as Nanos * GT_PERIOD_NS, position, attitude }
        })
        .collect()
}

/// Interpolated ground-truth pose; clamps outside the sequence.
pub fn gt_pose_at(gt: &[Pose3Sample], t: Nanos) -> (Vector3<f64>, UnitQuat) {
    let i = gt.partition_point(|g| g.t <= t);
    if i == 0 {
        return (gt[0].position, gt[0].attitude);
    }
    if i >= gt.len() {
        let g = &gt[gt.len() - 1];
        return (g.position, g.attitude);
    }
    let (a, b) = (&gt[i - 1], &gt[i]);
    let u = (t - a.t) as f64 / (b.t - a.t) as f64;
    (a.position + (b.position - a.position) * u, slerp(&a.attitude, &b.attitude.aligned_to(&a.attitude), u))
}

/// Terrain height field derived from the path: the ground under each path
/// point extends sideways along the local roll.
#[derive(Debug, Clone)]
struct Terrain {
    /// (x, y, ground z, left normal, tan roll)
    samples: Vec<(Vector2<f64>, f64, Vector2<f64>, f64)>,
    /// Sample ids per cell, row-major over the cells spanned by the path.
    grid: Vec<Vec<u32>>,
    origin: (i64, i64),
    dims: (i64, i64),
    /// Upper bound on the ground slope, rise per horizontal meter.
    max_slope: f64,
}

impl Terrain {
    fn new(path: &Path) -> Self {
        let n = (path.length / TERRAIN_STEP).ceil() as usize + 1;
        let mut samples = Vec::with_capacity(n);
        for i in 0..n {
            let s = (i as f64 * TERRAIN_STEP).min(path.length);
            let (x, y, h) = path.planar(s);
            samples.push((Vector2::new(x, y), path.ground_z(s), Vector2::new(-h.sin(), h.cos()), path.roll(s).tan()));
        }
        let cells: Vec<(i64, i64)> = samples.iter().map(|s| cell(&s.0)).collect();
        let lo = cells.iter().fold((i64::MAX, i64::MAX), |a, c| (a.0.min(c.0), a.1.min(c.1)));
        let hi = cells.iter().fold((i64::MIN, i64::MIN), |a, c| (a.0.max(c.0), a.1.max(c.1)));
        let dims = (hi.0 - lo.0 + 1, hi.1 - lo.1 + 1);
        let mut grid = vec![Vec::new(); (dims.0 * dims.1) as usize];
        for (id, c) in cells.iter().enumerate() {
            grid[((c.1 - lo.1) * dims.0 + (c.0 - lo.0)) as usize].push(id as u32);
        }
        let along = samples.windows(2).map(|w| (w[1].1 - w[0].1).abs() / TERRAIN_STEP).fold(0.0, f64::max);
        let across = samples.iter().map(|s| s.3.abs()).fold(0.0, f64::max);
        let max_slope = 1.5 * (along + across) + 0.01;
        Self { samples, grid, origin: lo, dims, max_slope }
    }

    fn nearest(&self, q: &Vector2<f64>) -> Option<(usize, f64)> {
        let (cx, cy) = cell(q);
        let mut best: Option<(usize, f64)> = None;
        for ring in 0..=TERRAIN_MAX_RINGS {
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    if dx.abs() != ring && dy.abs() != ring {
                        continue;
                    }
                    let (gx, gy) = (cx + dx - self.origin.0, cy + dy - self.origin.1);
                    if !(0..self.dims.0).contains(&gx) || !(0..self.dims.1).contains(&gy) {
                        continue;
                    }
                    for &id in &self.grid[(gy * self.dims.0 + gx) as usize] {
                        let d = (self.samples[id as usize].0 - q).norm_squared();
                        if best.is_none_or(|(bi, bd)| d < bd || (d == bd && (id as usize) < bi)) {
                            best = Some((id as usize, d));
                        }
                    }
                }
            }
            // Anything in later rings is at least `ring` cells away.
            if let Some((_, d)) = best {
                let reach = ring as f64 * TERRAIN_CELL;
                if d <= reach * reach {
                    break;
                }
            }
        }
        best.map(|(i, d)| (i, d.sqrt()))
    }

    fn distance_to_path(&self, q: &Vector2<f64>) -> f64 {
        self.nearest(q).map_or(f64::INFINITY, |(_, d)| d)
    }

    fn height(&self, q: &Vector2<f64>) -> Option<f64> {
        let (i, _) = self.nearest(q)?;
        let (p, z, n, tan_roll) = &self.samples[i];
        Some(z + (q - p).dot(n) * tan_roll)
    }
}

fn cell(p: &Vector2<f64>) -> (i64, i64) {
    ((p.x / TERRAIN_CELL).floor() as i64, (p.y / TERRAIN_CELL).floor() as i64)
}

/// A scenario prepared for rendering: ground truth, terrain, and the
/// resolved set of poles.
#[derive(Debug, Clone)]
pub struct Simulation {
    scenario: Scenario,
    gt: Vec<Pose3Sample>,
    poles: Vec<Pole>,
    terrain: Terrain,
}

const WORLD_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const IMU_STREAM: u64 = 3;

fn rng_for(seed: u64, domain: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream);
    rng
}

impl Simulation {
    /// Generates ground truth for `duration` seconds (the scenario's own
    /// duration, or the natural drive time, when `None`) and places the world.
    pub fn new(scenario: Scenario, duration: Option<f64>) -> Result<Self, SimError> {
        scenario.validate()?;
        let path = Path::new(&scenario.trajectory);
        let duration =
            duration.or(scenario.duration_s).unwrap_or_else(|| natural_duration(&scenario.trajectory, &path));
        if !(duration > 0.0) {
            return Err(invalid("duration must be positive"));
        }
        let gt = ground_truth_on(&scenario.trajectory, &path, duration);
        let terrain = Terrain::new(&path);
        let poles = resolve_poles(&scenario, &terrain);
        Ok(Self { scenario, gt, poles, terrain })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn ground_truth(&self) -> &[Pose3Sample] {
        &self.gt
    }

    pub fn poles(&self) -> &[Pole] {
        &self.poles
    }

    /// Start times of every scan that fits entirely inside the ground truth.
    pub fn scan_start_times(&self) -> Vec<Nanos> {
        let period = secs_to_nanos(self.scenario.radar.period_s);
        let end = self.gt.last().map_or(0, |g| g.t);
        (0..).map(|i| i * period).take_while(|&t| t + period <= end).collect()
    }

    pub fn render_scan(&self, t_start: Nanos) -> PolarScan {
        let radar = &self.scenario.radar;
        let na = radar.azimuths;
        let nr = radar.range_bins;
        let period = secs_to_nanos(radar.period_s);
        let azimuths: Vec<f64> = (0..na).map(|a| 2.0 * PI * a as f64 / na as f64).collect();
        let stamps: Vec<Nanos> = (0..na).map(|a| t_start + period * a as i64 / na as i64).collect();
        let rows: Vec<Vec<u8>> =
            (0..na).into_par_iter().map(|a| self.render_azimuth(azimuths[a], stamps[a], t_start, a)).collect();
        let intensity = rows.concat();
        PolarScan::new(radar.range_resolution, nr, azimuths, stamps, intensity).expect("rendered scan is well formed")
    }

    /// Renders scans in parallel, in the given order.
    pub fn render_scans(&self, starts: &[Nanos]) -> Vec<PolarScan> {
        starts.par_iter().map(|&t| self.render_scan(t)).collect()
    }

    fn render_azimuth(&self, azimuth: f64, t: Nanos, t_start: Nanos, index: usize) -> Vec<u8> {
        let radar = &self.scenario.radar;
        let nr = radar.range_bins;
        let res = radar.range_resolution;
        let mut signal = vec![0.0f64; nr];
        let (pos, q) = gt_pose_at(&self.gt, t);
        for (range, reflectivity) in self.returns(&pos, &q, azimuth) {
            let amplitude = (reflectivity * radar.reference_range / range).min(255.0);
            let bin = (range / res).floor() as i64;
            for j in -3i64..=3 {
                let b = bin + j;
                if b >= 0 && (b as usize) < nr {
                    signal[b as usize] += amplitude * (-0.5 * (j * j) as f64).exp();
                }
            }
        }
        let noise_on = radar.noise_sigma > 0.0 || radar.noise_mean != 0.0;
        // One stream per (scan, azimuth) keeps rows independent of render order.
        let stream = (t_start as u64 / 1000).wrapping_mul(1 << 16).wrapping_add(index as u64);
        let mut rng = rng_for(self.scenario.seed, NOISE_STREAM, stream);
        let normal = Normal::new(radar.noise_mean, radar.noise_sigma.max(0.0)).expect("finite noise");
        signal
            .iter()
            .map(|&v| {
                let noise = if noise_on { normal.sample(&mut rng) } else { 0.0 };
                (v + noise).round().clamp(0.0, 255.0) as u8
            })
            .collect()
    }

    /// `(slant range, reflectivity)` of everything the beam at `azimuth` sees
    /// from the sensor pose `(pos, q)`.
    fn returns(&self, pos: &Vector3<f64>, q: &UnitQuat, azimuth: f64) -> Vec<(f64, f64)> {
        let radar = &self.scenario.radar;
        let elev_hw = radar.elevation_half_width_deg.to_radians();
        let beam_hw = radar.beam_half_width_deg.to_radians();
        let r_max = radar.range_bins as f64 * radar.range_resolution;
        let q_inv = q.inverse();
        let up_body = q_inv.rotate(&Vector3::z());
        let mut out = Vec::new();

        // Poles: the point on the pole closest to the sensor plane.
        for pole in &self.poles {
            let h = Vector3::new(pole.x - pos.x, pole.y - pos.y, 0.0);
            let hb = q_inv.rotate(&h);
            // Height on the pole where it crosses the sensor plane.
            let z_cross = pos.z - hb.z / up_body.z;
            let z = z_cross.clamp(pole.base_z, pole.base_z + pole.height);
            let v = q_inv.rotate(&Vector3::new(pole.x - pos.x, pole.y - pos.y, z - pos.z));
            let range = v.norm();
            if range <= 0.0 || range >= r_max {
                continue;
            }
            let elevation = (v.z / range).asin();
            let bearing = v.y.atan2(v.x);
            if elevation.abs() <= elev_hw && normalize_angle(bearing - azimuth).abs() <= beam_hw {
                out.push((range, pole.reflectivity));
            }
        }

        // Walls: intersect the beam's horizontal track with each segment.
        let dir = q.rotate(&Vector3::new(azimuth.cos(), azimuth.sin(), 0.0));
        let horiz = dir.xy().norm();
        if horiz > 1e-9 {
            let d2 = dir.xy() / horiz;
            for wall in &self.scenario.world.walls {
                let a = Vector2::new(wall.x0, wall.y0);
                let e = Vector2::new(wall.x1 - wall.x0, wall.y1 - wall.y0);
                let denom = d2.x * e.y - d2.y * e.x;
                if denom.abs() < 1e-12 {
                    continue;
                }
                let w = a - pos.xy();
                let dist = (w.x * e.y - w.y * e.x) / denom;
                let u = (w.x * d2.y - w.y * d2.x) / denom;
                if dist <= 0.0 || !(0.0..=1.0).contains(&u) {
                    continue;
                }
                let hit = a + e * u;
                let z_beam = pos.z + dist * dir.z / horiz;
                let z = z_beam.clamp(wall.base_z, wall.base_z + wall.height);
                let v = q_inv.rotate(&Vector3::new(hit.x - pos.x, hit.y - pos.y, z - pos.z));
                let range = v.norm();
                if range < r_max && (v.z / range).asin().abs() <= elev_hw {
                    out.push((range, wall.reflectivity));
                }
            }
        }

        // Terrain: march the beam center until it goes underground.
        let ground = self.scenario.world.ground_reflectivity;
        if ground > 0.0 {
            let min_step = 0.5;
            // The beam cannot reach the ground sooner than this per meter of height.
            let closing = dir.z.min(0.0).abs() + self.terrain.max_slope * horiz;
            let mut prev: Option<(f64, f64)> = None;
            let mut r = min_step;
            while r < r_max {
                let p = pos + dir * r;
                let Some(zt) = self.terrain.height(&p.xy()) else { break };
                let above = p.z - zt;
                if above <= 0.0 {
                    let range = match prev {
                        Some((r0, a0)) if a0 > 0.0 => r0 + (r - r0) * a0 / (a0 - above),
                        _ => r,
                    };
                    out.push((range, ground));
                    break;
                }
                prev = Some((r, above));
                r += (above / closing).clamp(min_step, 10.0);
            }
        }
        out
    }

    /// IMU stream along the ground truth; see [`synthesize_imu`].
    pub fn synthesize_imu(&self) -> Vec<ImuSample> {
        synthesize_imu(&self.scenario, &self.gt)
    }
}

fn resolve_poles(s: &Scenario, terrain: &Terrain) -> Vec<Pole> {
    let mut poles = s.world.poles.clone();
    let Some(rp) = &s.world.random_poles else { return poles };
    let mut rng = rng_for(s.seed, WORLD_STREAM, 0);
    let uniform = |rng: &mut ChaCha8Rng, r: [f64; 2]| if r[1] > r[0] { rng.random_range(r[0]..r[1]) } else { r[0] };
    let mut attempts = 0;
    while poles.len() < s.world.poles.len() + rp.count && attempts < 100 * rp.count.max(1) {
        attempts += 1;
        let x = uniform(&mut rng, rp.x_range);
        let y = uniform(&mut rng, rp.y_range);
        let height = uniform(&mut rng, rp.height_range);
        let reflectivity = uniform(&mut rng, rp.reflectivity_range);
        let p = Vector2::new(x, y);
        if terrain.distance_to_path(&p) < rp.clearance {
            continue;
        }
        let base_z = terrain.height(&p).unwrap_or(0.0);
        poles.push(Pole { x, y, base_z, height, reflectivity });
    }
    poles
}

/// Renders one scan starting at `t_start`. Prefer [`Simulation`] when
/// rendering many scans; this rebuilds the world on every call.
pub fn render_scan(s: &Scenario, gt: &[Pose3Sample], t_start: Nanos) -> PolarScan {
    let path = Path::new(&s.trajectory);
    let terrain = Terrain::new(&path);
    let poles = resolve_poles(s, &terrain);
    Simulation { scenario: s.clone(), gt: gt.to_vec(), poles, terrain }.render_scan(t_start)
}

/// IMU samples at the configured rate.
///
/// Each gyro sample is the mean body rate over the preceding sample interval;
/// the accelerometer reads specific force `Rᵀ (a + g)` at the sample time.
pub fn synthesize_imu(s: &Scenario, gt: &[Pose3Sample]) -> Vec<ImuSample> {
    if gt.len() < 3 {
        return Vec::new();
    }
    let imu = &s.imu;
    let period = secs_to_nanos(1.0 / imu.rate_hz);
    let dt = nanos_to_secs(period);
    let end = gt[gt.len() - 1].t;
    let gt_dt = nanos_to_secs(GT_PERIOD_NS);
    let sigma_g = imu.gyro_noise * imu.rate_hz.sqrt();
    let sigma_a = imu.accel_noise * imu.rate_hz.sqrt();
    let mut rng = rng_for(s.seed, IMU_STREAM, 0);
    let gyro_bias = Vector3::from(imu.gyro_bias);
    let accel_bias = Vector3::from(imu.accel_bias);

    let accel_at = |t: Nanos| -> Vector3<f64> {
        // Central second difference on the ground-truth grid.
        let i = ((t / GT_PERIOD_NS) as usize).clamp(1, gt.len() - 2);
        (gt[i + 1].position - 2.0 * gt[i].position + gt[i - 1].position) / (gt_dt * gt_dt)
    };

    let mut out = Vec::new();
    let mut prev_q = gt_pose_at(gt, 0).1;
    let mut t = 0;
    while t <= end {
        let (_, q) = gt_pose_at(gt, t);
        let q = q.aligned_to(&prev_q);
        let omega = if t == 0 { Vector3::zeros() } else { (prev_q.inverse() * q).to_rotation_vector() / dt };
        let specific = q.inverse().rotate(&(accel_at(t) + Vector3::new(0.0, 0.0, GRAVITY)));
        let mut draw = |sigma: f64| {
            if sigma > 0.0 {
                Vector3::from_fn(|_, _| rng.sample::<f64, _>(rand_distr::StandardNormal) * sigma)
            } else {
                Vector3::zeros()
            }
        };
        let gyro_noise = draw(sigma_g);
        let accel_noise = draw(sigma_a);
        out.push(ImuSample::new(t, omega + gyro_bias + gyro_noise, specific + accel_bias + accel_noise));
        prev_q = q;
        t += period;
    }
    out
}
