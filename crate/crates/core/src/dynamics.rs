//! Multi-anticipative discrete-time car dynamics on ring and open roads.
//!
//! Each follower advances once per 0.5 s step by a min over its first `m`
//! leaders of discounted law values (or of discounted per-leader gaps,
//! depending on [`DiscountMode`]). Car positions are cumulative traveled
//! distance and are never wrapped, even on a ring.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::law::BehaviorLaw;

/// Model time step in seconds.
pub const DT_SECONDS: f64 = 0.5;

/// Where the `(1 + lambda)^(j-1)` discount is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DiscountMode {
    /// Discount multiplies the law value of each leader's normalized gap.
    #[default]
    OnVelocity,
    /// Discount multiplies the normalized gap before the law is applied.
    OnSpacing,
}

/// Anticipation parameters: leader depth `m`, discount `lambda`, and the
/// discount placement. Both placements coincide when `m = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnticipationConfig {
    pub m: usize,
    pub lambda: f64,
    pub discount_mode: DiscountMode,
}

impl Default for AnticipationConfig {
    fn default() -> Self {
        Self {
            m: 1,
            lambda: 0.0,
            discount_mode: DiscountMode::OnVelocity,
        }
    }
}

impl AnticipationConfig {
    pub fn new(m: usize, lambda: f64, discount_mode: DiscountMode) -> Result<Self, ScenarioError> {
        if m < 1 {
            return Err(ScenarioError::BadAnticipationDepth);
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(ScenarioError::BadLambda { lambda });
        }
        Ok(Self {
            m,
            lambda,
            discount_mode,
        })
    }
}

/// `(1 + lambda)^(j-1)`, exact 1.0 for the first leader.
#[inline]
pub fn discount_factor(lambda: f64, j: usize) -> f64 {
    (1.0 + lambda).powi((j - 1) as i32)
}

/// Piecewise-constant leader speed profile given as `(start_step, speed)`
/// breakpoints; the first breakpoint must start at step 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedProfile {
    breakpoints: Vec<(u64, f64)>,
}

impl SpeedProfile {
    pub fn new(breakpoints: Vec<(u64, f64)>) -> Result<Self, ScenarioError> {
        if breakpoints.is_empty() || breakpoints[0].0 != 0 {
            return Err(ScenarioError::ProfileMustStartAtZero);
        }
        if breakpoints.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(ScenarioError::ProfileNotIncreasing);
        }
        if breakpoints.iter().any(|&(_, v)| !v.is_finite()) {
            return Err(ScenarioError::ProfileNotFinite);
        }
        Ok(Self { breakpoints })
    }

    pub fn constant(speed: f64) -> Self {
        Self {
            breakpoints: vec![(0, speed)],
        }
    }

    pub fn breakpoints(&self) -> &[(u64, f64)] {
        &self.breakpoints
    }

    /// Speed in effect at step `t`.
    pub fn speed_at(&self, t: u64) -> f64 {
        let idx = match self.breakpoints.binary_search_by_key(&t, |&(s, _)| s) {
            Ok(i) => i,
            Err(i) => i - 1, // first breakpoint is at 0, so i >= 1 here
        };
        self.breakpoints[idx].1
    }
}

/// Road topology. Car 0 is the front car; positions decrease with index.
#[derive(Debug, Clone, PartialEq)]
pub enum Topology {
    /// Periodic road of the given length; the front car's leader is the last
    /// car one lap ahead.
    Ring { length: f64 },
    /// Open road; car 0 follows the speed profile, everyone else the model.
    Open { leader: SpeedProfile },
}

impl Topology {
    pub fn ring_length(&self) -> Option<f64> {
        match self {
            Topology::Ring { length } => Some(*length),
            Topology::Open { .. } => None,
        }
    }
}

/// A simulation setup: topology plus strictly decreasing initial positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub topology: Topology,
    pub initial_positions: Vec<f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("anticipation depth m must be at least 1")]
    BadAnticipationDepth,
    #[error("lambda must be finite and nonnegative, got {lambda}")]
    BadLambda { lambda: f64 },
    #[error("leader speed profile must have a breakpoint at step 0")]
    ProfileMustStartAtZero,
    #[error("leader speed profile breakpoints must be strictly increasing")]
    ProfileNotIncreasing,
    #[error("leader speed profile speeds must be finite")]
    ProfileNotFinite,
    #[error("ring length must be positive and finite, got {length}")]
    BadRingLength { length: f64 },
    #[error("a ring needs at least 2 cars, got {cars}")]
    TooFewRingCars { cars: usize },
    #[error("need at least one car")]
    NoCars,
    #[error("initial positions must be strictly decreasing (car {car} breaks the order)")]
    PositionsNotDecreasing { car: usize },
    #[error("initial positions span {span} must be below the ring length {length}")]
    RingOvercrowded { span: f64, length: f64 },
    #[error("car {car} has no leader")]
    NoLeader { car: usize },
    #[error("simulation horizon must be at least 1 step")]
    ZeroHorizon,
}

impl Scenario {
    pub fn new(topology: Topology, initial_positions: Vec<f64>) -> Result<Self, ScenarioError> {
        if initial_positions.is_empty() {
            return Err(ScenarioError::NoCars);
        }
        if let Some(car) = initial_positions.windows(2).position(|w| w[1] >= w[0]) {
            return Err(ScenarioError::PositionsNotDecreasing { car: car + 1 });
        }
        if let Topology::Ring { length } = topology {
            if !(length > 0.0 && length.is_finite()) {
                return Err(ScenarioError::BadRingLength { length });
            }
            let cars = initial_positions.len();
            if cars < 2 {
                return Err(ScenarioError::TooFewRingCars { cars });
            }
            let span = initial_positions[0] - initial_positions[cars - 1];
            if span >= length {
                return Err(ScenarioError::RingOvercrowded { span, length });
            }
        }
        Ok(Self {
            topology,
            initial_positions,
        })
    }

    /// Ring with `cars` equally spaced cars (spacing `length / cars`).
    pub fn uniform_ring(length: f64, cars: usize) -> Result<Self, ScenarioError> {
        if cars == 0 {
            return Err(ScenarioError::NoCars);
        }
        let spacing = length / cars as f64;
        let positions = uniform_positions(spacing, cars);
        Self::new(Topology::Ring { length }, positions)
    }

    /// Open road with `cars` at uniform `spacing`, last car at position 0.
    pub fn uniform_open(
        spacing: f64,
        cars: usize,
        leader: SpeedProfile,
    ) -> Result<Self, ScenarioError> {
        let positions = uniform_positions(spacing, cars);
        Self::new(Topology::Open { leader }, positions)
    }

    pub fn cars(&self) -> usize {
        self.initial_positions.len()
    }
}

/// Uniform configuration `x_i = (cars - 1 - i) * spacing`.
pub fn uniform_positions(spacing: f64, cars: usize) -> Vec<f64> {
    (0..cars).map(|i| (cars - 1 - i) as f64 * spacing).collect()
}

/// Effective anticipation depth of `car` (0-based) under `config`.
pub fn effective_depth(
    car: usize,
    cars: usize,
    config: &AnticipationConfig,
    topo: &Topology,
) -> usize {
    match topo {
        Topology::Ring { .. } => config.m.min(cars - 1),
        Topology::Open { .. } => config.m.min(car),
    }
}

/// Unwrapped gap to the j-th leader of `car` (0-based indices).
///
/// On a ring the leader index is cyclic and the gap gains one ring length
/// per wrap, so it is positive for any ordered state.
#[inline]
fn leader_gap(positions: &[f64], car: usize, j: usize, topo: &Topology) -> f64 {
    match topo {
        Topology::Open { .. } => positions[car - j] - positions[car],
        Topology::Ring { length } => {
            let cars = positions.len() as i64;
            let a = car as i64 - j as i64;
            let idx = a.rem_euclid(cars);
            let wraps = (idx - a) / cars;
            positions[idx as usize] + wraps as f64 * length - positions[car]
        }
    }
}

/// Anticipated spacing: `min_j (1+lambda)^(j-1) * gap_j / j` over the
/// effective leader depth of `car`.
pub fn anticipated_spacing(
    positions: &[f64],
    car: usize,
    config: &AnticipationConfig,
    topo: &Topology,
) -> Result<f64, ScenarioError> {
    let depth = effective_depth(car, positions.len(), config, topo);
    if depth == 0 {
        return Err(ScenarioError::NoLeader { car });
    }
    let mut best = f64::INFINITY;
    for j in 1..=depth {
        let term =
            discount_factor(config.lambda, j) * (leader_gap(positions, car, j, topo) / j as f64);
        best = best.min(term);
    }
    Ok(best)
}

/// One-step displacement of a follower whose j-th leader gap is
/// `gap(j)`, for `j` in `1..=depth`.
///
/// `OnVelocity` takes the min of discounted law values of the normalized
/// gaps; `OnSpacing` feeds the min discounted normalized gap to the law.
pub fn displacement_over_leaders(
    depth: usize,
    gap: impl Fn(usize) -> f64,
    law: &BehaviorLaw,
    config: &AnticipationConfig,
) -> f64 {
    debug_assert!(depth >= 1, "follower must have a leader");
    match config.discount_mode {
        DiscountMode::OnVelocity => {
            let mut best = f64::INFINITY;
            for j in 1..=depth {
                let term = discount_factor(config.lambda, j) * law.evaluate(gap(j) / j as f64);
                best = best.min(term);
            }
            best
        }
        DiscountMode::OnSpacing => {
            let mut best = f64::INFINITY;
            for j in 1..=depth {
                let term = discount_factor(config.lambda, j) * (gap(j) / j as f64);
                best = best.min(term);
            }
            law.evaluate(best)
        }
    }
}

/// Displacement of a follower for one step under the chosen discount mode.
fn follower_displacement(
    positions: &[f64],
    car: usize,
    law: &BehaviorLaw,
    config: &AnticipationConfig,
    topo: &Topology,
) -> f64 {
    let depth = effective_depth(car, positions.len(), config, topo);
    displacement_over_leaders(depth, |j| leader_gap(positions, car, j, topo), law, config)
}

/// One synchronous update of all cars at step `t`.
///
/// On an open road car 0 advances by its profile speed; everyone else (and
/// every car on a ring) advances by the anticipative law displacement.
pub fn step(
    positions: &[f64],
    law: &BehaviorLaw,
    config: &AnticipationConfig,
    topo: &Topology,
    t: u64,
) -> Vec<f64> {
    let mut next = Vec::with_capacity(positions.len());
    for car in 0..positions.len() {
        let displacement = match topo {
            Topology::Open { leader } if car == 0 => leader.speed_at(t),
            _ => follower_displacement(positions, car, law, config, topo),
        };
        next.push(positions[car] + displacement);
    }
    next
}

/// Positions of all cars over time; `positions[car][t]`, `t = 0..=steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    positions: Vec<Vec<f64>>,
    pub dt_seconds: f64,
    pub ring_length: Option<f64>,
}

impl Trajectory {
    /// Builds a trajectory from per-car position rows (equal lengths, at
    /// least one column).
    pub fn from_positions(positions: Vec<Vec<f64>>, ring_length: Option<f64>) -> Self {
        assert!(!positions.is_empty() && !positions[0].is_empty());
        let cols = positions[0].len();
        assert!(positions.iter().all(|row| row.len() == cols));
        Self {
            positions,
            dt_seconds: DT_SECONDS,
            ring_length,
        }
    }

    pub fn cars(&self) -> usize {
        self.positions.len()
    }

    /// Number of simulated steps (position columns minus one).
    pub fn steps(&self) -> usize {
        self.positions[0].len() - 1
    }

    #[inline]
    pub fn position(&self, car: usize, t: usize) -> f64 {
        self.positions[car][t]
    }

    pub fn positions(&self) -> &[Vec<f64>] {
        &self.positions
    }

    /// Velocity over `[t, t+1]`: exactly the first difference of positions.
    #[inline]
    pub fn velocity(&self, car: usize, t: usize) -> f64 {
        self.positions[car][t + 1] - self.positions[car][t]
    }

    /// Acceleration at `t`: second difference of positions, per step^2.
    #[inline]
    pub fn acceleration(&self, car: usize, t: usize) -> f64 {
        self.velocity(car, t + 1) - self.velocity(car, t)
    }

    /// Spacing to the immediate leader at time `t`; `None` for the front car
    /// on an open road.
    pub fn spacing(&self, car: usize, t: usize) -> Option<f64> {
        if car > 0 {
            Some(self.positions[car - 1][t] - self.positions[car][t])
        } else {
            self.ring_length
                .map(|length| self.positions[self.cars() - 1][t] + length - self.positions[0][t])
        }
    }
}

/// A spacing went negative at step `t` for `car`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrderingViolation {
    pub t: usize,
    pub car: usize,
}

/// Result of a simulation run: the trajectory plus recorded anomalies.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub trajectory: Trajectory,
    /// Every `(t, car)` whose leader spacing was negative; the run continues
    /// through violations rather than masking them.
    pub ordering_violations: Vec<OrderingViolation>,
    /// False when the law has a slope outside `[0, 1]` (advisory only).
    pub law_stable: bool,
}

/// Simulates `horizon` steps from the scenario's initial positions.
///
/// Deterministic for fixed inputs. Ordering violations are recorded per
/// step and car; the dynamics are never clamped.
pub fn simulate(
    scenario: &Scenario,
    law: &BehaviorLaw,
    config: &AnticipationConfig,
    horizon: usize,
) -> Result<SimRun, ScenarioError> {
    if horizon == 0 {
        return Err(ScenarioError::ZeroHorizon);
    }
    let cars = scenario.cars();
    let mut rows: Vec<Vec<f64>> = (0..cars)
        .map(|car| {
            let mut row = Vec::with_capacity(horizon + 1);
            row.push(scenario.initial_positions[car]);
            row
        })
        .collect();

    let mut ordering_violations = Vec::new();
    let mut current = scenario.initial_positions.clone();
    for t in 0..horizon {
        let next = step(&current, law, config, &scenario.topology, t as u64);
        for car in 0..cars {
            rows[car].push(next[car]);
        }
        record_violations(&next, &scenario.topology, t + 1, &mut ordering_violations);
        current = next;
    }

    let trajectory = Trajectory::from_positions(rows, scenario.topology.ring_length());
    Ok(SimRun {
        trajectory,
        ordering_violations,
        law_stable: law.check_stability_condition().0,
    })
}

fn record_violations(
    positions: &[f64],
    topo: &Topology,
    t: usize,
    out: &mut Vec<OrderingViolation>,
) {
    let cars = positions.len();
    for car in 0..cars {
        let spacing = match topo {
            Topology::Open { .. } if car == 0 => continue,
            Topology::Open { .. } => positions[car - 1] - positions[car],
            Topology::Ring { length } => {
                if car == 0 {
                    positions[cars - 1] + length - positions[0]
                } else {
                    positions[car - 1] - positions[car]
                }
            }
        };
        if spacing < 0.0 {
            out.push(OrderingViolation { t, car });
        }
    }
}

/// Mean/variance/acceleration statistics for one car or the whole fleet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionStats {
    pub mean_speed: f64,
    /// Population variance of per-step speeds.
    pub speed_variance: f64,
    /// Population standard deviation of second differences of position.
    pub accel_std: f64,
    /// Smallest observed leader spacing; `None` when the car has no leader.
    pub min_spacing: Option<f64>,
}

/// Per-car and fleet-wide motion statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryStats {
    pub per_car: Vec<MotionStats>,
    pub fleet: MotionStats,
}

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least 2 steps for acceleration statistics, got {steps}")]
    TooShort { steps: usize },
}

/// Computes [`SummaryStats`]; accelerations are second differences of
/// positions per step squared.
pub fn summary_stats(traj: &Trajectory) -> Result<SummaryStats, StatsError> {
    let steps = traj.steps();
    if steps < 2 {
        return Err(StatsError::TooShort { steps });
    }
    let mut per_car = Vec::with_capacity(traj.cars());
    let mut fleet_speeds = Vec::new();
    let mut fleet_accels = Vec::new();
    let mut fleet_min_spacing: Option<f64> = None;
    for car in 0..traj.cars() {
        let speeds: Vec<f64> = (0..steps).map(|t| traj.velocity(car, t)).collect();
        let accels: Vec<f64> = (0..steps - 1).map(|t| traj.acceleration(car, t)).collect();
        let min_spacing = (0..=steps)
            .filter_map(|t| traj.spacing(car, t))
            .fold(None, |acc: Option<f64>, s| {
                Some(acc.map_or(s, |a| a.min(s)))
            });
        per_car.push(MotionStats {
            mean_speed: mean(&speeds),
            speed_variance: variance(&speeds),
            accel_std: variance(&accels).sqrt(),
            min_spacing,
        });
        fleet_speeds.extend_from_slice(&speeds);
        fleet_accels.extend_from_slice(&accels);
        if let Some(s) = min_spacing {
            fleet_min_spacing = Some(fleet_min_spacing.map_or(s, |a| a.min(s)));
        }
    }
    let fleet = MotionStats {
        mean_speed: mean(&fleet_speeds),
        speed_variance: variance(&fleet_speeds),
        accel_std: variance(&fleet_accels).sqrt(),
        min_spacing: fleet_min_spacing,
    };
    Ok(SummaryStats { per_car, fleet })
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::presets::six_segment_law;
    use crate::law::{AffineSegment, BehaviorLaw};
    use approx::assert_abs_diff_eq;

    fn constant_law(v: f64) -> BehaviorLaw {
        BehaviorLaw::single(AffineSegment::new(0.0, v))
    }

    fn cfg(m: usize, lambda: f64, mode: DiscountMode) -> AnticipationConfig {
        AnticipationConfig::new(m, lambda, mode).unwrap()
    }

    #[test]
    fn anticipated_spacing_equal_spacing_is_spacing() {
        let topo = Topology::Open {
            leader: SpeedProfile::constant(5.0),
        };
        let positions = uniform_positions(8.5, 6);
        for m in 1..6 {
            let c = cfg(m, 0.0, DiscountMode::OnSpacing);
            let y = anticipated_spacing(&positions, 5, &c, &topo).unwrap();
            assert_abs_diff_eq!(y, 8.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn anticipated_spacing_second_leader_binds() {
        let topo = Topology::Open {
            leader: SpeedProfile::constant(5.0),
        };
        // gaps from the last car: first leader 10, second leader 14
        let positions = vec![14.0, 10.0, 0.0];
        let c = cfg(2, 0.0, DiscountMode::OnSpacing);
        assert_eq!(anticipated_spacing(&positions, 2, &c, &topo).unwrap(), 7.0);
        let c = cfg(2, 1.5, DiscountMode::OnSpacing);
        assert_eq!(anticipated_spacing(&positions, 2, &c, &topo).unwrap(), 10.0);
    }

    #[test]
    fn anticipated_spacing_no_leader_for_front_car() {
        let topo = Topology::Open {
            leader: SpeedProfile::constant(5.0),
        };
        let positions = vec![10.0, 0.0];
        let c = cfg(3, 0.0, DiscountMode::OnSpacing);
        assert_eq!(
            anticipated_spacing(&positions, 0, &c, &topo),
            Err(ScenarioError::NoLeader { car: 0 })
        );
    }

    #[test]
    fn ring_gap_wraps_with_ring_length() {
        let topo = Topology::Ring { length: 100.0 };
        let positions = vec![60.0, 30.0, 0.0];
        // Front car's first leader is the last car one lap ahead.
        let c = cfg(1, 0.0, DiscountMode::OnSpacing);
        assert_eq!(anticipated_spacing(&positions, 0, &c, &topo).unwrap(), 40.0);
        // Depth is capped at cars - 1 on a ring.
        let c = cfg(10, 0.0, DiscountMode::OnSpacing);
        let y = anticipated_spacing(&positions, 2, &c, &topo).unwrap();
        assert_eq!(y, 30.0); // min(30, 60/2) = 30
    }

    #[test]
    fn constant_law_advances_followers_exactly() {
        let topo = Topology::Open {
            leader: SpeedProfile::constant(3.0),
        };
        let positions = vec![100.0, 37.0, 12.5, 1.0];
        let law = constant_law(5.0);
        let next = step(
            &positions,
            &law,
            &cfg(3, 0.7, DiscountMode::OnVelocity),
            &topo,
            0,
        );
        assert_eq!(next[0], 103.0);
        for car in 1..4 {
            assert_eq!(next[car], positions[car] + 5.0);
        }
    }

    #[test]
    fn ring_equal_spacing_advances_by_law_value() {
        let law = six_segment_law();
        let scenario = Scenario::uniform_ring(2611.1, 100).unwrap();
        let spacing = 2611.1 / 100.0;
        let expected = law.evaluate(spacing);
        for m in [1usize, 2, 5] {
            let next = step(
                &scenario.initial_positions,
                &law,
                &cfg(m, 0.0, DiscountMode::OnVelocity),
                &scenario.topology,
                0,
            );
            for (nx, x0) in next.iter().zip(&scenario.initial_positions) {
                assert_abs_diff_eq!(nx - x0, expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn depth_one_reduces_to_one_car_update_bitwise() {
        let law = six_segment_law();
        let topo = Topology::Ring { length: 400.0 };
        let positions = vec![300.0, 211.7, 140.33, 62.9, 0.01];
        for lambda in [0.0, 0.7, 1.5] {
            for mode in [DiscountMode::OnVelocity, DiscountMode::OnSpacing] {
                let next = step(&positions, &law, &cfg(1, lambda, mode), &topo, 0);
                for car in 0..positions.len() {
                    let gap = if car == 0 {
                        positions[4] + 400.0 - positions[0]
                    } else {
                        positions[car - 1] - positions[car]
                    };
                    let expected = positions[car] + law.evaluate(gap);
                    assert_eq!(next[car], expected, "car {car} lambda {lambda}");
                }
            }
        }
    }

    #[test]
    fn dominated_anticipation_matches_single_leader() {
        // Accelerating pattern: gap_j >= j * gap_1, so deeper leaders never bind.
        let law = six_segment_law();
        let topo = Topology::Open {
            leader: SpeedProfile::constant(10.0),
        };
        let positions = vec![200.0, 130.0, 75.0, 35.0, 0.0];
        for car in 1..5 {
            for j in 1..=car {
                let gap_j = positions[car - j] - positions[car];
                let gap_1 = positions[car - 1] - positions[car];
                assert!(gap_j >= j as f64 * gap_1);
            }
        }
        let multi = step(
            &positions,
            &law,
            &cfg(4, 0.0, DiscountMode::OnVelocity),
            &topo,
            0,
        );
        let single = step(
            &positions,
            &law,
            &cfg(1, 0.0, DiscountMode::OnVelocity),
            &topo,
            0,
        );
        assert_eq!(multi, single);
    }

    #[test]
    fn modes_coincide_for_linear_law_without_discount() {
        let law = BehaviorLaw::single(AffineSegment::new(0.4, 1.0));
        let topo = Topology::Open {
            leader: SpeedProfile::constant(2.0),
        };
        let positions = vec![90.0, 55.0, 20.0, 0.0];
        let on_v = step(
            &positions,
            &law,
            &cfg(3, 0.0, DiscountMode::OnVelocity),
            &topo,
            0,
        );
        let on_s = step(
            &positions,
            &law,
            &cfg(3, 0.0, DiscountMode::OnSpacing),
            &topo,
            0,
        );
        for (a, b) in on_v.iter().zip(&on_s) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn simulate_horizon_one_has_two_columns() {
        let scenario = Scenario::uniform_open(20.0, 3, SpeedProfile::constant(4.0)).unwrap();
        let run = simulate(&scenario, &six_segment_law(), &Default::default(), 1).unwrap();
        assert_eq!(run.trajectory.steps(), 1);
        assert_eq!(run.trajectory.positions()[0].len(), 2);
    }

    #[test]
    fn simulate_rejects_zero_horizon() {
        let scenario = Scenario::uniform_open(20.0, 3, SpeedProfile::constant(4.0)).unwrap();
        assert_eq!(
            simulate(&scenario, &six_segment_law(), &Default::default(), 0).unwrap_err(),
            ScenarioError::ZeroHorizon
        );
    }

    #[test]
    fn stationary_open_configuration_is_invariant() {
        let law = six_segment_law();
        let v1 = 6.0;
        let spacing = law.inverse_spacing(v1).unwrap();
        let scenario = Scenario::uniform_open(spacing, 8, SpeedProfile::constant(v1)).unwrap();
        let run = simulate(&scenario, &law, &cfg(1, 0.0, DiscountMode::OnVelocity), 50).unwrap();
        for car in 0..8 {
            for t in 0..50 {
                assert_abs_diff_eq!(run.trajectory.velocity(car, t), v1, epsilon = 1e-12);
            }
        }
        assert!(run.ordering_violations.is_empty());
    }

    #[test]
    fn ordering_violation_recorded_not_hidden() {
        // A huge constant displacement makes followers overtake instantly.
        let law = constant_law(50.0);
        let scenario = Scenario::uniform_open(5.0, 3, SpeedProfile::constant(0.0)).unwrap();
        let run = simulate(&scenario, &law, &Default::default(), 2).unwrap();
        assert!(run
            .ordering_violations
            .contains(&OrderingViolation { t: 1, car: 1 }));
    }

    #[test]
    fn speed_profile_lookup() {
        let p = SpeedProfile::new(vec![(0, 10.0), (100, 2.0), (200, 10.0)]).unwrap();
        assert_eq!(p.speed_at(0), 10.0);
        assert_eq!(p.speed_at(99), 10.0);
        assert_eq!(p.speed_at(100), 2.0);
        assert_eq!(p.speed_at(250), 10.0);
    }

    #[test]
    fn speed_profile_must_start_at_zero() {
        assert_eq!(
            SpeedProfile::new(vec![(5, 1.0)]).unwrap_err(),
            ScenarioError::ProfileMustStartAtZero
        );
    }

    #[test]
    fn scenario_rejects_unordered_positions() {
        let topo = Topology::Open {
            leader: SpeedProfile::constant(1.0),
        };
        assert_eq!(
            Scenario::new(topo, vec![10.0, 10.0]).unwrap_err(),
            ScenarioError::PositionsNotDecreasing { car: 1 }
        );
    }

    #[test]
    fn scenario_rejects_overcrowded_ring() {
        assert!(matches!(
            Scenario::new(Topology::Ring { length: 50.0 }, vec![80.0, 40.0, 0.0]),
            Err(ScenarioError::RingOvercrowded { .. })
        ));
    }

    #[test]
    fn stats_constant_speed_has_zero_spread() {
        let traj = Trajectory::from_positions(
            vec![vec![10.0, 13.0, 16.0, 19.0], vec![0.0, 3.0, 6.0, 9.0]],
            None,
        );
        let stats = summary_stats(&traj).unwrap();
        assert_eq!(stats.fleet.mean_speed, 3.0);
        assert_eq!(stats.fleet.speed_variance, 0.0);
        assert_eq!(stats.fleet.accel_std, 0.0);
        assert_eq!(stats.fleet.min_spacing, Some(10.0));
        assert_eq!(stats.per_car[0].min_spacing, None);
    }

    #[test]
    fn stats_single_car_one_accel_sample() {
        let traj = Trajectory::from_positions(vec![vec![0.0, 1.0, 3.0]], None);
        let stats = summary_stats(&traj).unwrap();
        assert_eq!(stats.per_car[0].accel_std, 0.0);
        assert_eq!(stats.per_car[0].mean_speed, 1.5);
        assert_eq!(stats.fleet.min_spacing, None);
    }

    #[test]
    fn stats_need_two_steps() {
        let traj = Trajectory::from_positions(vec![vec![0.0, 1.0]], None);
        assert_eq!(
            summary_stats(&traj).unwrap_err(),
            StatsError::TooShort { steps: 1 }
        );
    }

    #[test]
    fn step_is_monotone_for_stable_law() {
        let law = six_segment_law();
        let topo = Topology::Ring { length: 500.0 };
        let p: Vec<f64> = vec![400.0, 300.0, 200.0, 100.0, 0.0];
        let q: Vec<f64> = p.iter().map(|x| x + 7.5).collect();
        for mode in [DiscountMode::OnVelocity, DiscountMode::OnSpacing] {
            let sp = step(&p, &law, &cfg(3, 0.0, mode), &topo, 0);
            let sq = step(&q, &law, &cfg(3, 0.0, mode), &topo, 0);
            for car in 0..5 {
                assert!(sp[car] <= sq[car]);
            }
        }
    }
}
