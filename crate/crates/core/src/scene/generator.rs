//! Scripted four-way intersection scenarios.
//!
//! Every scenario contains one stationary ego vehicle waiting on an arm of the
//! intersection and one scripted driver approaching on a perpendicular arm.
//! The script decides the scripted driver's kinematics and what occupies the
//! space ahead of it: a queue of lead vehicles, a crossing vehicle, or nothing.

use std::f64::consts::FRAC_PI_2;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{AgentSnapshot, AgentTrack, Bounds, Scene, ScriptLabel};
use crate::driver_models::{DriverState, FRAME_DT, HISTORY_LEN};
use crate::error::{Error, Result};
use crate::mapper::{rasterize_footprints, Footprint, GridSpec};
use crate::ogm::OccupancyGrid;

/// Center-to-center distances of the lead vehicles in a traffic queue.
pub const FOLLOW_GAPS: [f64; 2] = [10.0, 18.0];
pub const LEAD_LENGTH: f64 = 4.4;
pub const LEAD_WIDTH: f64 = 1.8;

const EGO_DISTANCE: f64 = 35.0;
const MAX_TRAVEL: f64 = 36.0;

/// Scripted behavior of a driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BehaviorKind {
    StoppedForCrossing,
    ConstantSpeedTraffic,
    ConstantSpeedOpenRoad,
    Decelerating,
    Accelerating,
}

/// Parameters of one scripted driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorScript {
    pub kind: BehaviorKind,
    /// Speed at the final frame, m/s.
    pub speed: f64,
    /// Constant longitudinal acceleration, m/s^2.
    pub acceleration: f64,
    /// Along-lane coordinate of the final position (negative before the center).
    pub final_station: f64,
    pub occupied_ahead: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub stopped_for_crossing: usize,
    /// Constant-speed scripts, split between traffic and open road.
    pub constant_speed: usize,
    pub decelerating: usize,
    pub accelerating: usize,
    /// Probability that a constant-speed script has traffic ahead.
    pub traffic_fraction: f64,
    /// Probability that a decelerating script has traffic ahead.
    pub decelerating_occupied_probability: f64,
    /// Frames per scenario at 10 Hz.
    pub frames: usize,
    /// Standard deviation of the position jitter, meters.
    pub jitter_sigma: f64,
    pub lane_width: f64,
    pub world_half_extent: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            stopped_for_crossing: 25,
            constant_speed: 50,
            decelerating: 25,
            accelerating: 25,
            traffic_fraction: 0.5,
            decelerating_occupied_probability: 1.0,
            frames: 30,
            jitter_sigma: 0.05,
            lane_width: 4.0,
            world_half_extent: 50.0,
        }
    }
}

impl GeneratorConfig {
    pub fn scenario_count(&self) -> usize {
        self.stopped_for_crossing + self.constant_speed + self.decelerating + self.accelerating
    }

    fn validate(&self) -> Result<()> {
        if self.scenario_count() == 0 {
            return Err(Error::Config("scenario count is zero".into()));
        }
        if self.frames == 0 {
            return Err(Error::Config("frames must be positive".into()));
        }
        for (name, p) in [
            ("traffic_fraction", self.traffic_fraction),
            (
                "decelerating_occupied_probability",
                self.decelerating_occupied_probability,
            ),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be in [0, 1]")));
            }
        }
        if !(self.jitter_sigma >= 0.0) {
            return Err(Error::Config("jitter_sigma must be non-negative".into()));
        }
        if !(self.lane_width > 0.0) || !(self.world_half_extent >= 50.0) {
            return Err(Error::Config(
                "lane width must be positive and the world at least 100 m wide".into(),
            ));
        }
        Ok(())
    }
}

/// Driver-view grid of the canonical layout for a script label: the lead
/// queue when occupied, nothing otherwise. Jitter-free.
pub fn reference_pattern(spec: &GridSpec, occupied: bool) -> OccupancyGrid<f64> {
    let pose = spec.pose_behind(0.0, 0.0, 0.0);
    let footprints: Vec<Footprint> = if occupied {
        FOLLOW_GAPS
            .iter()
            .map(|&g| Footprint::new(g, 0.0, 0.0, LEAD_LENGTH, LEAD_WIDTH))
            .collect()
    } else {
        Vec::new()
    };
    rasterize_footprints(spec, pose, &footprints).0
}

/// Iterator over the scenes of all scenarios, in scenario then frame order.
pub struct ScenarioGenerator {
    config: GeneratorConfig,
    rng: ChaCha8Rng,
    scripts: Vec<BehaviorKind>,
    next_scenario: usize,
    pending: std::vec::IntoIter<Scene>,
}

/// Starts a deterministic scenario stream.
pub fn generate_scenarios(config: &GeneratorConfig, seed: u64) -> Result<ScenarioGenerator> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scripts = Vec::with_capacity(config.scenario_count());
    scripts.extend(std::iter::repeat_n(
        BehaviorKind::StoppedForCrossing,
        config.stopped_for_crossing,
    ));
    // Traffic vs open road is drawn per scenario below.
    scripts.extend(std::iter::repeat_n(
        BehaviorKind::ConstantSpeedTraffic,
        config.constant_speed,
    ));
    scripts.extend(std::iter::repeat_n(BehaviorKind::Decelerating, config.decelerating));
    scripts.extend(std::iter::repeat_n(BehaviorKind::Accelerating, config.accelerating));
    scripts.shuffle(&mut rng);
    Ok(ScenarioGenerator {
        config: config.clone(),
        rng,
        scripts,
        next_scenario: 0,
        pending: Vec::new().into_iter(),
    })
}

impl Iterator for ScenarioGenerator {
    type Item = Scene;

    fn next(&mut self) -> Option<Scene> {
        loop {
            if let Some(s) = self.pending.next() {
                return Some(s);
            }
            if self.next_scenario >= self.scripts.len() {
                return None;
            }
            let i = self.next_scenario;
            self.next_scenario += 1;
            self.pending = self.build_scenario(i).into_iter();
        }
    }
}

/// Unit direction and left normal of a heading.
fn axes(heading: f64) -> ((f64, f64), (f64, f64)) {
    let (s, c) = heading.sin_cos();
    ((c, s), (-s, c))
}

impl ScenarioGenerator {
    fn draw_script(&mut self, kind: BehaviorKind) -> BehaviorScript {
        let cfg = &self.config;
        let rng = &mut self.rng;
        let t_end = (cfg.frames.saturating_sub(1)) as f64 * FRAME_DT;
        let (kind, mut speed, mut accel, occupied) = match kind {
            BehaviorKind::StoppedForCrossing => (kind, 0.0, 0.0, true),
            BehaviorKind::ConstantSpeedTraffic | BehaviorKind::ConstantSpeedOpenRoad => {
                let traffic = rng.random_bool(cfg.traffic_fraction);
                let kind = if traffic {
                    BehaviorKind::ConstantSpeedTraffic
                } else {
                    BehaviorKind::ConstantSpeedOpenRoad
                };
                (kind, rng.random_range(4.0..11.0), 0.0, traffic)
            }
            BehaviorKind::Decelerating => {
                let occupied = rng.random_bool(cfg.decelerating_occupied_probability);
                (kind, rng.random_range(1.0..6.0), rng.random_range(-3.0..-1.0), occupied)
            }
            BehaviorKind::Accelerating => {
                let a = rng.random_range(1.0..3.0);
                let v0 = rng.random_range(0.5..5.0);
                (kind, v0 + a * t_end, a, false)
            }
        };
        // Distance covered over the scenario; scale down long scenarios so
        // everything stays inside the world.
        let travel = speed * t_end - 0.5 * accel * t_end * t_end;
        if travel > MAX_TRAVEL {
            let f = MAX_TRAVEL / travel;
            speed *= f;
            accel *= f;
        }
        let travel = speed * t_end - 0.5 * accel * t_end * t_end;
        let (lo, hi) = if kind == BehaviorKind::StoppedForCrossing {
            (-14.0, -10.0)
        } else {
            ((-45.0 + travel).max(-40.0), -8.0)
        };
        let final_station = rng.random_range(lo..hi);
        BehaviorScript {
            kind,
            speed,
            acceleration: accel,
            final_station,
            occupied_ahead: occupied,
        }
    }

    fn build_scenario(&mut self, index: usize) -> Vec<Scene> {
        let cfg = self.config.clone();
        let frames = cfg.frames;
        let dt = FRAME_DT;
        let t_end = (frames - 1) as f64 * dt;
        let t0 = index as f64 * (frames as f64 * dt + 10.0);
        let script = self.draw_script(self.scripts[index]);
        let arm = self.rng.random_range(0..4u8);
        let heading = f64::from(arm) * FRAC_PI_2 - std::f64::consts::PI;
        let side = if self.rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let ego_heading = heading + side * FRAC_PI_2;
        let half_lane = cfg.lane_width / 2.0;

        let base_id = 10 * index as i64 + 1;
        let ego_id = base_id;
        let driver_id = base_id + 1;

        // Along-lane station and speed of the scripted driver at frame f.
        let kin = |f: usize| {
            let tau = t_end - f as f64 * dt;
            let station = script.final_station - script.speed * tau
                + 0.5 * script.acceleration * tau * tau;
            let speed = script.speed - script.acceleration * tau;
            (station, speed.max(0.0))
        };
        let (u, n) = axes(heading);
        let lane_state = |station: f64, speed: f64, accel: f64| {
            let x = station * u.0 - half_lane * n.0;
            let y = station * u.1 - half_lane * n.1;
            DriverState::new(x, y, heading, speed * u.0, speed * u.1, accel * u.0, accel * u.1)
        };

        let mut tracks: Vec<AgentTrack> = Vec::new();
        let (ue, ne) = axes(ego_heading);
        let ego_pos = (
            -EGO_DISTANCE * ue.0 - half_lane * ne.0,
            -EGO_DISTANCE * ue.1 - half_lane * ne.1,
        );
        tracks.push(track(
            ego_id,
            t0,
            vec![DriverState::at_rest(ego_pos.0, ego_pos.1, ego_heading); frames],
        ));
        let accel_at = |f: usize| if kin(f).1 > 0.0 { script.acceleration } else { 0.0 };
        tracks.push(track(
            driver_id,
            t0,
            (0..frames)
                .map(|f| {
                    let (s, v) = kin(f);
                    lane_state(s, v, accel_at(f))
                })
                .collect(),
        ));

        let mut next_id = driver_id + 1;
        match script.kind {
            BehaviorKind::ConstantSpeedTraffic | BehaviorKind::Decelerating
                if script.occupied_ahead =>
            {
                for gap in FOLLOW_GAPS {
                    tracks.push(track(
                        next_id,
                        t0,
                        (0..frames)
                            .map(|f| {
                                let (s, v) = kin(f);
                                lane_state(s + gap, v, accel_at(f))
                            })
                            .collect(),
                    ));
                    next_id += 1;
                }
            }
            BehaviorKind::StoppedForCrossing => {
                // Crossing vehicle on the perpendicular road, kept inside the
                // driver's 30 m wide view for the whole scenario.
                let dir = if self.rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let v = self.rng.random_range(2.0..6.0);
                let path = v * t_end;
                let slack = (24.0 - path).max(0.0) / 2.0;
                let start = -path / 2.0
                    + if slack > 0.0 {
                        self.rng.random_range(-slack..slack)
                    } else {
                        0.0
                    };
                // Driver-frame forward distance of the crossing lane.
                let forward = -script.final_station + dir * half_lane;
                let driver_pos = lane_state(script.final_station, 0.0, 0.0);
                let cross_heading = heading + dir * FRAC_PI_2;
                tracks.push(track(
                    next_id,
                    t0,
                    (0..frames)
                        .map(|f| {
                            // Lateral offset relative to the driver, along +n when dir = 1.
                            let lat = dir * (start + v * f as f64 * dt);
                            let x = driver_pos.x + forward * u.0 + lat * n.0;
                            let y = driver_pos.y + forward * u.1 + lat * n.1;
                            let (cu, _) = axes(cross_heading);
                            DriverState::new(x, y, cross_heading, v * cu.0, v * cu.1, 0.0, 0.0)
                        })
                        .collect(),
                ));
            }
            _ => {}
        }

        if cfg.jitter_sigma > 0.0 {
            let noise = Normal::new(0.0, cfg.jitter_sigma).expect("valid sigma");
            for t in &mut tracks {
                for s in &mut t.states {
                    s.x += noise.sample(&mut self.rng);
                    s.y += noise.sample(&mut self.rng);
                }
            }
        }

        let label = ScriptLabel {
            agent_id: driver_id,
            kind: script.kind,
            occupied_ahead: script.occupied_ahead,
        };
        let e = cfg.world_half_extent;
        let bounds = Bounds {
            min_x: -e,
            min_y: -e,
            max_x: e,
            max_y: e,
        };
        (0..frames)
            .map(|f| {
                let start = (f + 1).saturating_sub(HISTORY_LEN);
                Scene {
                    timestamp: t0 + f as f64 * dt,
                    ego_id,
                    agents: tracks
                        .iter()
                        .map(|t| AgentSnapshot {
                            agent_id: t.agent_id,
                            length: t.footprint_length,
                            width: t.footprint_width,
                            history: t.states[start..=f].to_vec(),
                        })
                        .collect(),
                    world_bounds: bounds,
                    labels: vec![label],
                }
            })
            .collect()
    }
}

fn track(id: i64, t0: f64, states: Vec<DriverState>) -> AgentTrack {
    AgentTrack::new(id, LEAD_LENGTH, LEAD_WIDTH, t0, states).expect("positive footprint")
}
