//! Stand-in ego policies.

use serde::{Deserialize, Serialize};

use super::WorldState;
use crate::lane_map::RoutePath;

/// Bounds on any policy's acceleration command, m/s².
pub const EGO_ACCEL_MIN: f64 = -6.0;
pub const EGO_ACCEL_MAX: f64 = 4.0;
const STANDSTILL_MARGIN_M: f64 = 0.05;

/// A longitudinal controller the orchestrator observes but does not command.
pub trait EgoPolicy: Send {
    /// Acceleration command for the next tick. `ego` indexes `world.actors`.
    fn step(&mut self, world: &WorldState, ego: usize, path: &RoutePath) -> f64;
}

/// Intelligent-driver-model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdmConfig {
    /// Free-road target; `None` keeps the initial speed.
    pub desired_speed_mps: Option<f64>,
    pub time_headway_s: f64,
    pub min_gap_m: f64,
    pub max_accel_mpss: f64,
    pub comfort_decel_mpss: f64,
    pub exponent: f64,
    /// Stop at the stop line while a crossing actor is near the conflict point.
    pub yield_at_stop_line: bool,
    /// How close to the conflict point a crossing actor must be to cause yielding.
    pub yield_radius_m: f64,
    /// Others count as leaders when their lateral offset from the ego path is below this.
    pub lane_half_width_m: f64,
}

impl Default for IdmConfig {
    fn default() -> Self {
        IdmConfig {
            desired_speed_mps: None,
            time_headway_s: 1.5,
            min_gap_m: 2.0,
            max_accel_mpss: 1.5,
            comfort_decel_mpss: 2.0,
            exponent: 4.0,
            yield_at_stop_line: false,
            yield_radius_m: 30.0,
            lane_half_width_m: 1.75,
        }
    }
}

/// Car-following ego. Deterministic given its configuration and the world sequence.
#[derive(Debug, Clone)]
pub struct IdmPolicy {
    pub config: IdmConfig,
    /// Resolved on the first step when the configuration leaves it open.
    desired: Option<f64>,
}

pub fn scripted_ego(config: &IdmConfig) -> IdmPolicy {
    IdmPolicy { desired: config.desired_speed_mps, config: config.clone() }
}

impl IdmPolicy {
    /// Acceleration for own speed `v` behind a leader `gap` meters ahead moving at `leader_v`.
    pub fn accel(&self, v: f64, leader: Option<(f64, f64)>) -> f64 {
        let c = &self.config;
        let desired = self.desired.unwrap_or(v).max(0.1);
        let free = 1.0 - (v / desired).powf(c.exponent);
        let interaction = match leader {
            Some((gap, leader_v)) => {
                let dv = v - leader_v;
                let wanted = c.min_gap_m + (v * c.time_headway_s + v * dv / (2.0 * (c.max_accel_mpss * c.comfort_decel_mpss).sqrt())).max(0.0);
                (wanted / gap.max(0.01)).powi(2)
            }
            None => 0.0,
        };
        let mut a = c.max_accel_mpss * (free - interaction);
        // IDM only approaches the standstill gap asymptotically; behind a stopped
        // leader, brake at least hard enough to halt just short of that gap.
        // The margin absorbs the last partial tick of a discrete integrator.
        if let Some((gap, leader_v)) = leader {
            if leader_v < 0.1 && v > 0.0 {
                let room = (gap - c.min_gap_m - STANDSTILL_MARGIN_M).max(1e-9);
                a = a.min(-v * v / (2.0 * room));
            }
        }
        a.clamp(EGO_ACCEL_MIN, EGO_ACCEL_MAX)
    }

    /// Nearest actor ahead in the ego's lane: (gap, speed along the ego path).
    fn leader(&self, world: &WorldState, ego: usize, path: &RoutePath) -> Option<(f64, f64)> {
        let me = &world.actors[ego];
        let mut best: Option<(f64, f64)> = None;
        for (i, other) in world.actors.iter().enumerate() {
            if i == ego {
                continue;
            }
            let p = path.project(other.x, other.y);
            if p.lateral.abs() > self.config.lane_half_width_m || p.s <= me.s {
                continue;
            }
            let along = other.v * (other.theta - path.heading(p.s)).cos();
            let gap = p.s - me.s;
            if best.is_none_or(|(g, _)| gap < g) {
                best = Some((gap, along));
            }
        }
        best
    }

    /// Stop line treated as a stopped leader while a crossing actor is close to the conflict.
    fn stop_line(&self, world: &WorldState, ego: usize, path: &RoutePath) -> Option<(f64, f64)> {
        if !self.config.yield_at_stop_line {
            return None;
        }
        let me = &world.actors[ego];
        let line = path.landmark("stop_line")?;
        let conflict = path.position(path.landmark("lane_turn")?);
        if me.s > line {
            return None;
        }
        let crossing = world.actors.iter().enumerate().any(|(i, o)| {
            i != ego && (o.x - conflict[0]).hypot(o.y - conflict[1]) < self.config.yield_radius_m
        });
        crossing.then_some((line - me.s, 0.0))
    }
}

impl EgoPolicy for IdmPolicy {
    fn step(&mut self, world: &WorldState, ego: usize, path: &RoutePath) -> f64 {
        let v = world.actors[ego].v;
        self.desired.get_or_insert(v);
        let lead = [self.leader(world, ego, path), self.stop_line(world, ego, path)]
            .into_iter()
            .flatten()
            .min_by(|a, b| a.0.total_cmp(&b.0));
        self.accel(v, lead)
    }
}
