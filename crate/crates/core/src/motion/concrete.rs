use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{MotionProfile, Order, PieceKind};
use crate::expr::EvalError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConcreteError {
    #[error("assignment is incomplete: {0}")]
    Incomplete(#[from] EvalError),
    #[error("piece `{piece}` has negative duration {duration}")]
    NegativeDuration { piece: String, duration: f64 },
    #[error("state of order {order:?} jumps by {jump} at knot `{knot}`")]
    Discontinuous { knot: String, order: Order, jump: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcretePiece {
    pub name: String,
    pub kind: PieceKind,
    pub order: Order,
    pub duration: f64,
    pub rates: [f64; 3],
}

impl ConcretePiece {
    fn merged(&self, carried: Option<&[f64; 3]>) -> [f64; 3] {
        let top = self.order.index();
        let mut out = [0.0; 3];
        for k in 0..=top {
            out[k] = match carried {
                Some(c) if k < top => self.rates[k] + c[k],
                _ => self.rates[k],
            };
        }
        out
    }

    pub fn state(&self, t: f64, carried: Option<&[f64; 3]>, order: Order) -> f64 {
        let rates = self.merged(carried);
        let o = order.index();
        let mut sum = 0.0;
        for (k, rate) in rates.iter().enumerate().take(self.order.index() + 1).skip(o) {
            let power = (k - o) as i32;
            let factorial = if power == 2 { 2.0 } else { 1.0 };
            sum += rate * t.powi(power) / factorial;
        }
        sum
    }

    fn end_state(&self, carried: Option<&[f64; 3]>) -> [f64; 3] {
        Order::ALL.map(|o| self.state(self.duration, carried, o))
    }
}

/// A motion profile with every variable bound to a number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcreteProfile {
    pub actor_id: usize,
    pub knots: Vec<String>,
    pub pieces: Vec<ConcretePiece>,
}

/// Difference between the right and left limits of a state at an interior knot.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityJump {
    pub knot: String,
    pub order: Order,
    pub jump: f64,
    /// Whether both adjacent pieces are of higher order, making the state
    /// continuous by construction.
    pub required: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub s: f64,
    pub v: f64,
    pub a: f64,
}

impl ConcreteProfile {
    pub(crate) fn from_symbolic(profile: &MotionProfile, assignment: &BTreeMap<String, f64>) -> Result<Self, ConcreteError> {
        let env = |name: &str| assignment.get(name).copied();
        let mut pieces = Vec::with_capacity(profile.pieces.len());
        for piece in &profile.pieces {
            let duration = piece.duration.eval_f64(&env)?;
            let mut rates = [0.0; 3];
            for (slot, rate) in rates.iter_mut().zip(&piece.rates) {
                *slot = rate.eval_f64(&env)?;
            }
            pieces.push(ConcretePiece { name: piece.name.clone(), kind: piece.kind, order: piece.order, duration, rates });
        }
        let concrete = ConcreteProfile { actor_id: profile.actor_id, knots: profile.knots.clone(), pieces };
        concrete.validate()?;
        Ok(concrete)
    }

    pub fn validate(&self) -> Result<(), ConcreteError> {
        for piece in &self.pieces {
            if piece.duration < 0.0 || !piece.duration.is_finite() {
                return Err(ConcreteError::NegativeDuration { piece: piece.name.clone(), duration: piece.duration });
            }
        }
        for jump in self.continuity() {
            if jump.required && jump.jump.abs() > 1e-9 * (1.0 + self.scale()) {
                return Err(ConcreteError::Discontinuous { knot: jump.knot, order: jump.order, jump: jump.jump });
            }
        }
        Ok(())
    }

    fn scale(&self) -> f64 {
        self.pieces.iter().flat_map(|p| p.rates.iter().chain([&p.duration])).fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Absolute knot times `[0, d1, d1 + d2, …]`.
    pub fn knot_times(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.pieces.len() + 1);
        let mut acc = 0.0;
        out.push(acc);
        for piece in &self.pieces {
            acc += piece.duration;
            out.push(acc);
        }
        out
    }

    pub fn end_time(&self) -> f64 {
        self.pieces.iter().map(|p| p.duration).sum()
    }

    fn carried_states(&self) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(self.pieces.len() + 1);
        let mut carried = [0.0; 3];
        out.push(carried);
        for piece in &self.pieces {
            carried = piece.end_state(Some(&carried));
            out.push(carried);
        }
        out
    }

    /// State at knot `j` (start of the profile for `j = 0`, end of piece `j − 1` otherwise).
    pub fn state_at_knot_index(&self, j: usize, order: Order) -> f64 {
        if j == 0 {
            return self.pieces[0].state(0.0, None, order);
        }
        self.carried_states()[j][order.index()]
    }

    /// State at absolute time `t`, with half-open piece intervals and the last
    /// piece extrapolated past its end.
    pub fn state_at(&self, t: f64, order: Order) -> f64 {
        let mut carried = [0.0; 3];
        let mut lo = 0.0;
        let last = self.pieces.len() - 1;
        for (k, piece) in self.pieces.iter().enumerate() {
            let hi = lo + piece.duration;
            let inside = if k == last { t >= lo } else { t >= lo && t < hi };
            if inside {
                return piece.state(t - lo, Some(&carried), order);
            }
            carried = piece.end_state(Some(&carried));
            lo = hi;
        }
        carried[order.index()]
    }

    pub fn state_vector_at(&self, t: f64) -> [f64; 3] {
        Order::ALL.map(|o| self.state_at(t, o))
    }

    pub fn continuity(&self) -> Vec<ContinuityJump> {
        let carried = self.carried_states();
        let mut out = Vec::new();
        for j in 1..self.pieces.len() {
            let left = carried[j];
            let next = &self.pieces[j];
            let min_order = self.pieces[j - 1].order.min(next.order);
            for order in Order::ALL {
                let right = next.state(0.0, Some(&left), order);
                out.push(ContinuityJump {
                    knot: self.knots[j].clone(),
                    order,
                    jump: right - left[order.index()],
                    required: order < min_order,
                });
            }
        }
        out
    }

    /// Samples at `t = 0, dt, 2·dt, … ≤ horizon`.
    pub fn sample(&self, dt: f64, horizon: f64) -> Vec<Sample> {
        assert!(dt > 0.0, "sample step must be positive");
        let steps = (horizon / dt + 1e-9).floor() as usize;
        (0..=steps)
            .map(|i| {
                let t = i as f64 * dt;
                let [s, v, a] = self.state_vector_at(t);
                Sample { t, s, v, a }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::profile::PieceSpec;

    fn spec(name: &str, kind: PieceKind) -> PieceSpec {
        PieceSpec { name: name.into(), kind, order: kind.default_order() }
    }

    fn knots(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("t{i}")).collect()
    }

    fn assign(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn single_go_piece_instantiates() {
        let p = MotionProfile::build(0, knots(2), &[spec("go", PieceKind::Go)]).unwrap();
        let c = p.instantiate(&assign(&[("a0_x0", 0.0), ("a0_go_v", 5.0), ("a0_go_d", 10.0)])).unwrap();
        assert_eq!(c.state_at_knot_index(1, Order::Position), 50.0);
        assert_eq!(c.end_time(), 10.0);
    }

    #[test]
    fn missing_variable_is_incomplete() {
        let p = MotionProfile::build(0, knots(2), &[spec("go", PieceKind::Go)]).unwrap();
        let err = p.instantiate(&assign(&[("a0_x0", 0.0), ("a0_go_v", 5.0)])).unwrap_err();
        assert!(matches!(err, ConcreteError::Incomplete(_)));
    }

    #[test]
    fn negative_duration_is_invalid() {
        let p = MotionProfile::build(0, knots(2), &[spec("go", PieceKind::Go)]).unwrap();
        let err = p.instantiate(&assign(&[("a0_x0", 0.0), ("a0_go_v", 5.0), ("a0_go_d", -1.0)])).unwrap_err();
        assert!(matches!(err, ConcreteError::NegativeDuration { .. }));
    }

    #[test]
    fn sampling_constant_velocity() {
        let p = MotionProfile::build(0, knots(2), &[spec("go", PieceKind::Go)]).unwrap();
        let c = p.instantiate(&assign(&[("a0_x0", 0.0), ("a0_go_v", 5.0), ("a0_go_d", 10.0)])).unwrap();
        let s: Vec<f64> = c.sample(1.0, 3.0).iter().map(|s| s.s).collect();
        assert_eq!(s, vec![0.0, 5.0, 10.0, 15.0]);
    }

    #[test]
    fn sampling_two_piece_example() {
        let p = MotionProfile::build(0, knots(3), &[spec("go", PieceKind::Go), spec("acc", PieceKind::Acc)]).unwrap();
        let c = p
            .instantiate(&assign(&[("a0_x0", 0.0), ("a0_go_v", 5.0), ("a0_go_d", 2.0), ("a0_acc_a", 2.0), ("a0_acc_d", 3.0)]))
            .unwrap();
        let samples = c.sample(1.0, 5.0);
        assert_eq!(samples.len(), 6);
        assert!((samples[4].s - 24.0).abs() < 1e-12);
    }

    #[test]
    fn stop_piece_holds_position() {
        let p = MotionProfile::build(0, knots(2), &[spec("stop", PieceKind::Stop)]).unwrap();
        let c = p.instantiate(&assign(&[("a0_x0", 12.0), ("a0_stop_d", 4.0)])).unwrap();
        assert!(c.sample(0.5, 6.0).iter().all(|s| s.s == 12.0 && s.v == 0.0));
    }

    #[test]
    fn continuity_report_marks_required_orders() {
        let p = MotionProfile::build(0, knots(3), &[spec("go", PieceKind::Go), spec("go2", PieceKind::Go)]).unwrap();
        let c = p
            .instantiate(&assign(&[("a0_x0", 0.0), ("a0_go_v", 5.0), ("a0_go_d", 2.0), ("a0_go2_v", 7.0), ("a0_go2_d", 1.0)]))
            .unwrap();
        let jumps = c.continuity();
        let pos = jumps.iter().find(|j| j.order == Order::Position).unwrap();
        assert!(pos.required && pos.jump.abs() < 1e-12);
        let vel = jumps.iter().find(|j| j.order == Order::Velocity).unwrap();
        assert!(!vel.required);
        assert_eq!(vel.jump, 2.0);
    }
}
