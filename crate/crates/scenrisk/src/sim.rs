//! Deterministic kinematic simulation of the cut-in scenario.
//!
//! The other vehicle drives at constant longitudinal speed in the adjacent
//! lane and moves laterally toward the ego lane at its initial lateral
//! speed until its center reaches the ego-lane center, after which the
//! lateral speed is exactly zero. The ego vehicle follows a pluggable
//! driver model. Integration is explicit Euler at a fixed time step; the
//! outcome is the binary collision flag and the minimum time-to-collision
//! observed over the run.

use serde::{Deserialize, Serialize};

use crate::dataset::ScenarioParameters;
use crate::error::{Error, Result};

/// Simulation geometry and numerics. The paper's experiments give none of
/// these values, so everything is configurable and echoed into output
/// metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    /// Integration step (s).
    pub time_step: f64,
    /// Simulated horizon (s).
    pub horizon: f64,
    /// Lane width (m); the other vehicle starts centered one lane over.
    pub lane_width: f64,
    /// Vehicle length (m).
    pub vehicle_length: f64,
    /// Vehicle width (m).
    pub vehicle_width: f64,
    /// Fraction of the vehicle width that must overlap laterally before the
    /// other vehicle counts as being in the ego lane.
    pub lateral_overlap_fraction: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            time_step: 0.01,
            horizon: 15.0,
            lane_width: 3.5,
            vehicle_length: 4.5,
            vehicle_width: 1.8,
            lateral_overlap_fraction: 0.5,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.time_step > 0.0) {
            return Err(Error::InvalidConfig("time_step must be > 0".into()));
        }
        if self.horizon < 10.0 * self.time_step {
            return Err(Error::InvalidConfig(
                "horizon must be at least 10 time steps".into(),
            ));
        }
        for (name, v) in [
            ("lane_width", self.lane_width),
            ("vehicle_length", self.vehicle_length),
            ("vehicle_width", self.vehicle_width),
            ("lateral_overlap_fraction", self.lateral_overlap_fraction),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be > 0")));
            }
        }
        Ok(())
    }

}

/// Instantaneous simulation state. Longitudinal positions track the ego
/// front bumper and the other vehicle's rear bumper, so their difference is
/// the gap that closes to zero at contact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicState {
    /// Clock time (s).
    pub time: f64,
    /// Ego front-bumper longitudinal position (m).
    pub ego_pos: f64,
    /// Ego longitudinal velocity (m/s), floored at 0.
    pub ego_vel: f64,
    /// Ego longitudinal acceleration applied this step (m/s^2).
    pub ego_acc: f64,
    /// Other vehicle rear-bumper longitudinal position (m).
    pub other_pos: f64,
    /// Other vehicle longitudinal velocity (m/s), constant.
    pub other_vel: f64,
    /// Other vehicle lateral center offset from the ego-lane center (m),
    /// nonnegative, decreasing to 0 during the lane change.
    pub other_lat: f64,
    /// Other vehicle lateral speed toward the ego lane (m/s); the initial
    /// value until the lane change completes, then exactly 0.
    pub other_lat_vel: f64,
}

impl KinematicState {
    /// Longitudinal gap from ego front to other rear (m).
    pub fn gap(&self) -> f64 {
        self.other_pos - self.ego_pos
    }

    fn is_finite(&self) -> bool {
        [
            self.time,
            self.ego_pos,
            self.ego_vel,
            self.ego_acc,
            self.other_pos,
            self.other_vel,
            self.other_lat,
            self.other_lat_vel,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Fraction of the vehicle width shared laterally by the two vehicles.
fn lateral_overlap_fraction(config: &ScenarioConfig, lat_offset: f64) -> f64 {
    ((config.vehicle_width - lat_offset.abs()) / config.vehicle_width).max(0.0)
}

/// Time to collision (s). Defined as gap over closing speed when the ego is
/// closing on a vehicle that laterally overlaps the ego lane, or still will
/// under its constant lateral velocity; `+inf` when no collision threatens,
/// `0` exactly at contact.
pub fn time_to_collision(state: &KinematicState, config: &ScenarioConfig) -> f64 {
    let overlapping =
        lateral_overlap_fraction(config, state.other_lat) >= config.lateral_overlap_fraction;
    let will_overlap = overlapping || state.other_lat_vel > 0.0;
    let closing = state.ego_vel - state.other_vel;
    let gap = state.gap();
    if gap <= 0.0 {
        // contact, or vehicles side by side without lateral overlap
        return if overlapping { 0.0 } else { f64::INFINITY };
    }
    if will_overlap && closing > 0.0 {
        gap / closing
    } else {
        f64::INFINITY
    }
}

/// An ego longitudinal controller. Commands must be finite and within the
/// declared bounds for every legal state.
pub trait DriverModel: Send + Sync {
    /// Commanded ego longitudinal acceleration (m/s^2).
    fn command(&self, state: &KinematicState, config: &ScenarioConfig) -> f64;

    /// Inclusive (min, max) acceleration bounds of the commands.
    fn accel_bounds(&self) -> (f64, f64);
}

/// A driver that never intervenes; useful as a baseline and in tests.
#[derive(Debug, Clone, Copy, Default)]
pub struct PassiveDriver;

impl DriverModel for PassiveDriver {
    fn command(&self, _state: &KinematicState, _config: &ScenarioConfig) -> f64 {
        0.0
    }

    fn accel_bounds(&self) -> (f64, f64) {
        (-8.0, 0.0)
    }
}

/// Two-stage braking controller: gentle braking below one TTC threshold,
/// heavy braking below a second, lower threshold. It never accelerates, so
/// the ego speed never exceeds its initial value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoStageTtcDriver {
    /// TTC (s) below which gentle braking starts.
    pub gentle_ttc_threshold: f64,
    /// TTC (s) below which hard braking starts; must be below the gentle one.
    pub hard_ttc_threshold: f64,
    /// Gentle deceleration magnitude (m/s^2).
    pub gentle_decel: f64,
    /// Hard deceleration magnitude (m/s^2).
    pub hard_decel: f64,
    /// Most negative allowed command (m/s^2).
    pub min_accel: f64,
}

impl Default for TwoStageTtcDriver {
    fn default() -> Self {
        Self {
            gentle_ttc_threshold: 4.0,
            hard_ttc_threshold: 2.0,
            gentle_decel: 2.0,
            hard_decel: 6.0,
            min_accel: -8.0,
        }
    }
}

/// Builds the two-stage driver, validating the threshold ordering.
pub fn two_stage_driver(
    gentle_ttc_threshold: f64,
    hard_ttc_threshold: f64,
    gentle_decel: f64,
    hard_decel: f64,
) -> Result<TwoStageTtcDriver> {
    let d = TwoStageTtcDriver {
        gentle_ttc_threshold,
        hard_ttc_threshold,
        gentle_decel,
        hard_decel,
        min_accel: -8.0,
    };
    d.validate()?;
    Ok(d)
}

impl TwoStageTtcDriver {
    pub fn validate(&self) -> Result<()> {
        if !(self.hard_ttc_threshold < self.gentle_ttc_threshold) {
            return Err(Error::InvalidConfig(
                "hard TTC threshold must be below the gentle threshold".into(),
            ));
        }
        if !(0.0 < self.gentle_decel && self.gentle_decel < self.hard_decel) {
            return Err(Error::InvalidConfig(
                "need 0 < gentle_decel < hard_decel".into(),
            ));
        }
        if !(self.min_accel <= -self.hard_decel) {
            return Err(Error::InvalidConfig(
                "min_accel must allow the hard deceleration".into(),
            ));
        }
        Ok(())
    }
}

impl DriverModel for TwoStageTtcDriver {
    fn command(&self, state: &KinematicState, config: &ScenarioConfig) -> f64 {
        let ttc = time_to_collision(state, config);
        if ttc <= self.hard_ttc_threshold {
            -self.hard_decel
        } else if ttc <= self.gentle_ttc_threshold {
            -self.gentle_decel
        } else {
            0.0
        }
    }

    fn accel_bounds(&self) -> (f64, f64) {
        (self.min_accel, 0.0)
    }
}

/// One sampled point of a simulation trace.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TraceRow {
    pub time: f64,
    pub ego_pos: f64,
    pub ego_vel: f64,
    pub ego_acc: f64,
    pub other_pos: f64,
    pub other_vel: f64,
    pub other_lat: f64,
    pub ttc: f64,
}

/// Result of one simulated scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationOutcome {
    /// 1 when the run ends in a crash, 0 otherwise.
    pub collision: bool,
    /// Minimum time-to-collision over the run (s); 0 exactly for
    /// collisions, +inf when TTC was never defined.
    pub min_ttc: f64,
    /// Per-step trace, recorded on request.
    pub trace: Option<Vec<TraceRow>>,
}

/// Runs the cut-in scenario to the horizon or first collision.
pub fn simulate_cutin(
    params: &ScenarioParameters,
    driver: &dyn DriverModel,
    config: &ScenarioConfig,
) -> Result<SimulationOutcome> {
    simulate(params, driver, config, false)
}

/// As [`simulate_cutin`], additionally recording the full state trace.
pub fn simulate_cutin_traced(
    params: &ScenarioParameters,
    driver: &dyn DriverModel,
    config: &ScenarioConfig,
) -> Result<SimulationOutcome> {
    simulate(params, driver, config, true)
}

fn simulate(
    params: &ScenarioParameters,
    driver: &dyn DriverModel,
    config: &ScenarioConfig,
    record_trace: bool,
) -> Result<SimulationOutcome> {
    params.validate()?;
    config.validate()?;

    let mut state = KinematicState {
        time: 0.0,
        ego_pos: 0.0,
        ego_vel: params.v_ego,
        ego_acc: 0.0,
        other_pos: params.d_init,
        other_vel: params.v_other,
        other_lat: config.lane_width,
        other_lat_vel: params.v_lat,
    };

    let (a_min, a_max) = driver.accel_bounds();
    let steps = (config.horizon / config.time_step).ceil() as usize;
    let mut min_ttc = f64::INFINITY;
    let mut trace = if record_trace {
        Some(Vec::with_capacity(steps + 1))
    } else {
        None
    };

    for _ in 0..=steps {
        let ttc = time_to_collision(&state, config);
        min_ttc = min_ttc.min(ttc);

        let overlap = lateral_overlap_fraction(config, state.other_lat);
        let collided = state.gap() <= 0.0 && overlap >= config.lateral_overlap_fraction;

        let acc = if collided {
            0.0
        } else {
            let cmd = driver.command(&state, config);
            if !cmd.is_finite() || cmd < a_min - 1e-12 || cmd > a_max + 1e-12 {
                return Err(Error::SimulationFault(format!(
                    "driver command {cmd} outside bounds [{a_min}, {a_max}] at t={:.3}",
                    state.time
                )));
            }
            cmd
        };
        state.ego_acc = acc;

        if let Some(t) = trace.as_mut() {
            t.push(TraceRow {
                time: state.time,
                ego_pos: state.ego_pos,
                ego_vel: state.ego_vel,
                ego_acc: state.ego_acc,
                other_pos: state.other_pos,
                other_vel: state.other_vel,
                other_lat: state.other_lat,
                ttc,
            });
        }

        if collided {
            return Ok(SimulationOutcome {
                collision: true,
                min_ttc: 0.0,
                trace,
            });
        }

        // explicit Euler step
        let dt = config.time_step;
        state.ego_pos += state.ego_vel * dt;
        state.ego_vel = (state.ego_vel + acc * dt).max(0.0);
        state.other_pos += state.other_vel * dt;
        if state.other_lat_vel > 0.0 {
            state.other_lat -= state.other_lat_vel * dt;
            if state.other_lat <= 0.0 {
                // lane change complete: snap to center, lateral speed drops to 0
                state.other_lat = 0.0;
                state.other_lat_vel = 0.0;
            }
        }
        state.time += dt;

        if !state.is_finite() {
            return Err(Error::SimulationFault(format!(
                "non-finite state at t={:.3}",
                state.time
            )));
        }
    }

    Ok(SimulationOutcome {
        collision: false,
        min_ttc,
        trace,
    })
}

/// Writes a recorded trace as delimited text.
pub fn write_trace<W: std::io::Write>(rows: &[TraceRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "time", "ego_pos", "ego_vel", "ego_acc", "other_pos", "other_vel", "other_lat", "ttc",
    ])?;
    for r in rows {
        w.write_record([
            r.time.to_string(),
            r.ego_pos.to_string(),
            r.ego_vel.to_string(),
            r.ego_acc.to_string(),
            r.other_pos.to_string(),
            r.other_vel.to_string(),
            r.other_lat.to_string(),
            r.ttc.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(v_ego: f64, v_other: f64, v_lat: f64, d_init: f64) -> ScenarioParameters {
        ScenarioParameters::new(v_ego, v_other, v_lat, d_init).unwrap()
    }

    fn overlapped_state(gap: f64, v_ego: f64, v_other: f64) -> KinematicState {
        KinematicState {
            time: 0.0,
            ego_pos: 0.0,
            ego_vel: v_ego,
            ego_acc: 0.0,
            other_pos: gap,
            other_vel: v_other,
            other_lat: 0.0,
            other_lat_vel: 0.0,
        }
    }

    #[test]
    fn ttc_simple_ratio() {
        let c = ScenarioConfig::default();
        let s = overlapped_state(20.0, 30.0, 20.0);
        assert!((time_to_collision(&s, &c) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ttc_infinite_when_not_closing() {
        let c = ScenarioConfig::default();
        let s = overlapped_state(20.0, 20.0, 30.0);
        assert_eq!(time_to_collision(&s, &c), f64::INFINITY);
    }

    #[test]
    fn ttc_zero_at_contact() {
        let c = ScenarioConfig::default();
        let s = overlapped_state(0.0, 30.0, 20.0);
        assert_eq!(time_to_collision(&s, &c), 0.0);
    }

    #[test]
    fn ttc_counts_vehicle_still_changing_lanes() {
        let c = ScenarioConfig::default();
        let mut s = overlapped_state(30.0, 25.0, 15.0);
        s.other_lat = 3.5;
        s.other_lat_vel = 1.0; // will overlap
        assert!((time_to_collision(&s, &c) - 3.0).abs() < 1e-12);
        s.other_lat_vel = 0.0; // stays in its own lane
        assert_eq!(time_to_collision(&s, &c), f64::INFINITY);
    }

    #[test]
    fn opening_gap_never_collides() {
        let out = simulate_cutin(
            &params(20.0, 30.0, 1.0, 50.0),
            &PassiveDriver,
            &ScenarioConfig::default(),
        )
        .unwrap();
        assert!(!out.collision);
        assert_eq!(out.min_ttc, f64::INFINITY);
    }

    #[test]
    fn fast_ego_small_gap_collides_with_passive_driver() {
        // hand kinematics: gap hits 0 at t = 5/20 = 0.25 s; overlap onset at
        // (3.5 - 0.9)/2 = 1.3 s; both < horizon, so the run ends in a crash
        let out = simulate_cutin(
            &params(30.0, 10.0, 2.0, 5.0),
            &PassiveDriver,
            &ScenarioConfig::default(),
        )
        .unwrap();
        assert!(out.collision);
        assert_eq!(out.min_ttc, 0.0);
    }

    #[test]
    fn collision_outcomes_have_zero_min_ttc() {
        for d_init in [2.0, 5.0, 8.0] {
            let out = simulate_cutin(
                &params(35.0, 12.0, 2.0, d_init),
                &PassiveDriver,
                &ScenarioConfig::default(),
            )
            .unwrap();
            if out.collision {
                assert_eq!(out.min_ttc, 0.0);
            }
        }
    }

    #[test]
    fn passive_min_ttc_matches_closed_form_when_overlapping() {
        // start the other vehicle already in the ego lane
        let p = params(30.0, 20.0, 0.001, 40.0);
        let mut config = ScenarioConfig::default();
        config.horizon = 3.0;
        let mut state_params = p;
        state_params.v_lat = 1e-9; // effectively completed lane change
        let out = simulate_cutin(&state_params, &PassiveDriver, &config).unwrap();
        // min over the run of (gap_0 - c t)/c is attained at the last step
        let expected = (40.0 - 10.0 * 3.0) / 10.0;
        assert!((out.min_ttc - expected).abs() < 10.0 * config.time_step);
    }

    #[test]
    fn increasing_gap_is_monotone_for_passive_driver() {
        let mut last_collision = true;
        for d_init in [1.0, 5.0, 20.0, 60.0, 150.0, 400.0] {
            let out = simulate_cutin(
                &params(32.0, 15.0, 1.0, d_init),
                &PassiveDriver,
                &ScenarioConfig::default(),
            )
            .unwrap();
            // once a gap stops colliding, larger gaps must not collide
            if !last_collision {
                assert!(!out.collision, "collision reappeared at d_init={d_init}");
            }
            last_collision = out.collision;
        }
    }

    #[test]
    fn determinism() {
        let p = params(30.0, 22.0, 1.2, 12.0);
        let d = TwoStageTtcDriver::default();
        let c = ScenarioConfig::default();
        let a = simulate_cutin(&p, &d, &c).unwrap();
        let b = simulate_cutin(&p, &d, &c).unwrap();
        assert_eq!(a.collision, b.collision);
        assert_eq!(a.min_ttc, b.min_ttc);
    }

    #[test]
    fn two_stage_driver_threshold_logic() {
        let d = TwoStageTtcDriver::default();
        let c = ScenarioConfig::default();
        // TTC infinite: no threat
        let far = overlapped_state(100.0, 20.0, 30.0);
        assert_eq!(d.command(&far, &c), 0.0);
        // TTC = 1.0 s, below the hard threshold
        let close = overlapped_state(10.0, 30.0, 20.0);
        assert_eq!(d.command(&close, &c), -6.0);
        // TTC = 3.0 s, between thresholds
        let mid = overlapped_state(30.0, 30.0, 20.0);
        assert_eq!(d.command(&mid, &c), -2.0);
    }

    #[test]
    fn braking_magnitude_monotone_in_decreasing_ttc() {
        let d = TwoStageTtcDriver::default();
        let c = ScenarioConfig::default();
        let mut last = 0.0;
        // sweep TTC from 6 s down to 0.1 s via the gap
        for k in (1..=60).rev() {
            let ttc = k as f64 * 0.1;
            let s = overlapped_state(ttc * 10.0, 30.0, 20.0);
            let brake = -d.command(&s, &c);
            assert!(brake >= last, "braking decreased as TTC fell");
            last = brake;
        }
    }

    #[test]
    fn driver_brakes_and_avoids_when_possible() {
        let out = simulate_cutin(
            &params(30.0, 20.0, 1.0, 40.0),
            &TwoStageTtcDriver::default(),
            &ScenarioConfig::default(),
        )
        .unwrap();
        assert!(!out.collision);

        let passive = simulate_cutin(
            &params(30.0, 20.0, 1.0, 40.0),
            &PassiveDriver,
            &ScenarioConfig::default(),
        )
        .unwrap();
        assert!(passive.collision);
    }

    #[test]
    fn contract_violation_is_a_simulation_fault() {
        struct BadDriver;
        impl DriverModel for BadDriver {
            fn command(&self, _: &KinematicState, _: &ScenarioConfig) -> f64 {
                f64::NAN
            }
            fn accel_bounds(&self) -> (f64, f64) {
                (-8.0, 0.0)
            }
        }
        let r = simulate_cutin(
            &params(30.0, 20.0, 1.0, 40.0),
            &BadDriver,
            &ScenarioConfig::default(),
        );
        assert!(matches!(r, Err(Error::SimulationFault(_))));
    }

    #[test]
    fn trace_has_expected_columns_and_rows() {
        let out = simulate_cutin_traced(
            &params(30.0, 25.0, 1.0, 30.0),
            &TwoStageTtcDriver::default(),
            &ScenarioConfig::default(),
        )
        .unwrap();
        let trace = out.trace.unwrap();
        assert!(trace.len() > 100);
        let mut buf = Vec::new();
        write_trace(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,ego_pos,ego_vel,ego_acc,other_pos,other_vel,other_lat,ttc"));
    }

    #[test]
    fn two_stage_driver_validates_thresholds() {
        assert!(two_stage_driver(2.0, 4.0, 2.0, 6.0).is_err());
        assert!(two_stage_driver(4.0, 2.0, 6.0, 2.0).is_err());
        assert!(two_stage_driver(4.0, 2.0, 2.0, 6.0).is_ok());
    }
}
