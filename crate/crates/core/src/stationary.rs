//! Closed-form stationary regimes and their fixed-point verification.
//!
//! A stationary regime is a state where every car advances by the same
//! constant displacement per step. It solves the additive eigenvalue
//! problem `v_bar + x_n = step(x)_n`; the uniform configuration realizes it
//! on both topologies, and driving off the first leader alone is optimal
//! there.

use thiserror::Error;

use crate::dynamics::{self, AnticipationConfig, DiscountMode, Topology};
use crate::law::{AttainedBy, BehaviorLaw, LawError};

/// A stationary regime: common velocity, uniform spacing, and the
/// configuration `x_n = (cars - 1 - n) * spacing` (defined up to an
/// additive constant).
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryRegime {
    pub v_bar: f64,
    pub spacing: f64,
    pub positions: Vec<f64>,
    /// Leader depth and law segment realizing the min-max at the regime;
    /// the depth is always 1.
    pub strategy: OptimalStrategy,
    /// Set when the law violates the slope-in-`[0,1]` stability condition;
    /// the closed form is then returned on a broken hypothesis.
    pub unstable_law: bool,
    /// Set when the inverse law was locally flat at the requested velocity
    /// and `spacing` is the infimum representative (open road only).
    pub non_unique: bool,
}

/// `(j, segment)` pair attaining the stationary min-max.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalStrategy {
    pub leader_depth: usize,
    pub segment: AttainedBy,
}

#[derive(Debug, Error, PartialEq)]
pub enum StationaryError {
    #[error("ring length must be positive and finite, got {length}")]
    BadRingLength { length: f64 },
    #[error("need at least one car, got {cars}")]
    NoCars { cars: usize },
    #[error(transparent)]
    Law(#[from] LawError),
}

/// Stationary regime on a ring: the average spacing `length / cars` realizes
/// the law, independently of the anticipation depth.
pub fn ring_stationary(
    law: &BehaviorLaw,
    length: f64,
    cars: usize,
    _config: &AnticipationConfig,
) -> Result<StationaryRegime, StationaryError> {
    if !(length > 0.0 && length.is_finite()) {
        return Err(StationaryError::BadRingLength { length });
    }
    if cars == 0 {
        return Err(StationaryError::NoCars { cars });
    }
    let spacing = length / cars as f64;
    let (v_bar, segment) = law.evaluate_detailed(spacing);
    Ok(StationaryRegime {
        v_bar,
        spacing,
        positions: dynamics::uniform_positions(spacing, cars),
        strategy: OptimalStrategy {
            leader_depth: 1,
            segment,
        },
        unstable_law: !law.check_stability_condition().0,
        non_unique: false,
    })
}

/// Stationary regime on an open road whose leader settles at `v1`: spacing
/// is the inverse law at `v1` and every car drives at `v1`.
pub fn open_stationary(
    law: &BehaviorLaw,
    v1: f64,
    cars: usize,
    _config: &AnticipationConfig,
) -> Result<StationaryRegime, StationaryError> {
    if cars == 0 {
        return Err(StationaryError::NoCars { cars });
    }
    let inv = law.inverse_spacing_detailed(v1)?;
    Ok(StationaryRegime {
        v_bar: v1,
        spacing: inv.spacing,
        positions: dynamics::uniform_positions(inv.spacing, cars),
        strategy: OptimalStrategy {
            leader_depth: 1,
            segment: inv.attained_by,
        },
        unstable_law: !law.check_stability_condition().0,
        non_unique: inv.non_unique,
    })
}

/// Outcome of substituting a regime into the dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointReport {
    /// `max_n | v_bar + x_n - step(x)_n |`.
    pub max_residual: f64,
    /// Gap between the claimed optimal strategy's displacement and `v_bar`.
    pub strategy_gap: f64,
}

/// Verifies a regime against the actual step map of the dynamics module.
///
/// The topology must match the one the regime was computed for (same ring
/// length and car count; for open roads the profile should hold the leader
/// at the regime velocity).
pub fn verify_fixed_point(
    regime: &StationaryRegime,
    law: &BehaviorLaw,
    topo: &Topology,
    config: &AnticipationConfig,
) -> Result<FixedPointReport, StationaryError> {
    let cars = regime.positions.len();
    if cars == 0 {
        return Err(StationaryError::NoCars { cars });
    }
    let next = dynamics::step(&regime.positions, law, config, topo, 0);
    let max_residual = regime
        .positions
        .iter()
        .zip(&next)
        .map(|(x, nx)| ((regime.v_bar + x) - nx).abs())
        .fold(0.0, f64::max);

    // The strategy's branch value on the uniform configuration: the j-th
    // normalized gap equals the spacing, so the branch reduces to the
    // discounted segment value at the spacing.
    let seg = match regime.strategy.segment.group {
        crate::law::Group::Lower => law.lower()[regime.strategy.segment.index],
        crate::law::Group::Upper => law.upper()[regime.strategy.segment.index],
    };
    let factor = dynamics::discount_factor(config.lambda, regime.strategy.leader_depth);
    let strategy_value = match config.discount_mode {
        DiscountMode::OnVelocity => factor * seg.value_at(regime.spacing),
        DiscountMode::OnSpacing => seg.value_at(factor * regime.spacing),
    };
    let strategy_gap = (strategy_value - regime.v_bar).abs();

    Ok(FixedPointReport {
        max_residual,
        strategy_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, Scenario, SpeedProfile};
    use crate::law::presets::six_segment_law;
    use crate::law::{AffineSegment, BehaviorLaw};
    use approx::assert_abs_diff_eq;

    fn cfg(m: usize, lambda: f64) -> AnticipationConfig {
        AnticipationConfig::new(m, lambda, DiscountMode::OnVelocity).unwrap()
    }

    #[test]
    fn ring_free_flow_plateau() {
        let regime = ring_stationary(&six_segment_law(), 10_000.0, 100, &cfg(1, 0.0)).unwrap();
        assert_eq!(regime.v_bar, 14.0);
        assert!(!regime.unstable_law);
    }

    #[test]
    fn ring_congested_value_matches_hand_inverse() {
        // spacing 2611.1 / 100 = 26.111 sits on the steepest rising piece
        let regime = ring_stationary(&six_segment_law(), 2611.1, 100, &cfg(3, 1.5)).unwrap();
        assert_abs_diff_eq!(regime.v_bar, 6.0, epsilon = 1e-3);
        assert_eq!(regime.v_bar, six_segment_law().evaluate(26.111));
    }

    #[test]
    fn ring_constant_law() {
        let law = BehaviorLaw::single(AffineSegment::new(0.0, 5.0));
        let regime = ring_stationary(&law, 300.0, 7, &cfg(2, 0.0)).unwrap();
        assert_eq!(regime.v_bar, 5.0);
    }

    #[test]
    fn open_regime_positions_follow_uniform_configuration() {
        let regime = open_stationary(&six_segment_law(), 6.0, 4, &cfg(1, 0.0)).unwrap();
        let y = 14.1 / 0.54;
        assert_abs_diff_eq!(regime.spacing, y, epsilon = 1e-12);
        let expected = [3.0 * y, 2.0 * y, y, 0.0];
        for (got, want) in regime.positions.iter().zip(expected) {
            assert_abs_diff_eq!(got, &want, epsilon = 1e-9);
        }
        assert_eq!(regime.strategy.leader_depth, 1);
    }

    #[test]
    fn open_regime_single_segment() {
        let law = BehaviorLaw::single(AffineSegment::new(0.5, 0.0));
        let regime = open_stationary(&law, 5.0, 2, &cfg(1, 0.0)).unwrap();
        assert_abs_diff_eq!(regime.spacing, 10.0, epsilon = 1e-12);
        assert_eq!(regime.positions, vec![10.0, 0.0]);
    }

    #[test]
    fn open_regime_rejects_plateau_velocity() {
        assert!(matches!(
            open_stationary(&six_segment_law(), 14.0, 4, &cfg(1, 0.0)),
            Err(StationaryError::Law(LawError::AboveFreeSpeed { .. }))
        ));
    }

    #[test]
    fn ring_fixed_point_residual_is_tiny() {
        let law = six_segment_law();
        for (length, cars) in [(2611.1, 100), (900.0, 30), (10_000.0, 50)] {
            for (m, lambda) in [(1, 0.0), (3, 0.0), (5, 1.5)] {
                let config = cfg(m, lambda);
                let regime = ring_stationary(&law, length, cars, &config).unwrap();
                let report =
                    verify_fixed_point(&regime, &law, &Topology::Ring { length }, &config).unwrap();
                assert!(
                    report.max_residual < 1e-9,
                    "residual {}",
                    report.max_residual
                );
                assert!(report.strategy_gap < 1e-9);
            }
        }
    }

    #[test]
    fn open_fixed_point_residual_is_tiny() {
        let law = six_segment_law();
        let config = cfg(2, 0.5);
        let regime = open_stationary(&law, 6.0, 12, &config).unwrap();
        let topo = Topology::Open {
            leader: SpeedProfile::constant(regime.v_bar),
        };
        let report = verify_fixed_point(&regime, &law, &topo, &config).unwrap();
        assert!(report.max_residual < 1e-9);
        assert!(report.strategy_gap < 1e-9);
    }

    #[test]
    fn perturbed_state_has_visible_residual() {
        let law = six_segment_law();
        let config = cfg(1, 0.0);
        let mut regime = ring_stationary(&law, 2611.1, 100, &config).unwrap();
        regime.positions[50] += 1.0;
        let report =
            verify_fixed_point(&regime, &law, &Topology::Ring { length: 2611.1 }, &config).unwrap();
        assert!(report.max_residual > 1e-6);
    }

    #[test]
    fn simulation_from_regime_keeps_constant_displacements() {
        let law = six_segment_law();
        let config = cfg(2, 0.0);
        let length = 2611.1;
        let regime = ring_stationary(&law, length, 100, &config).unwrap();
        let scenario = Scenario::new(Topology::Ring { length }, regime.positions.clone()).unwrap();
        let run = simulate(&scenario, &law, &config, 40).unwrap();
        for car in 0..100 {
            for t in 0..40 {
                assert_abs_diff_eq!(
                    run.trajectory.velocity(car, t),
                    regime.v_bar,
                    epsilon = 1e-12
                );
            }
        }
        let stats = crate::dynamics::summary_stats(&run.trajectory).unwrap();
        assert!(stats.fleet.speed_variance < 1e-12);
        assert!(stats.fleet.accel_std < 1e-12);
    }

    #[test]
    fn residual_stays_tiny_at_ten_thousand_cars() {
        let law = six_segment_law();
        let config = cfg(3, 0.5);
        let cars = 10_000;
        let length = 26.111 * cars as f64;
        let regime = ring_stationary(&law, length, cars, &config).unwrap();
        let report =
            verify_fixed_point(&regime, &law, &Topology::Ring { length }, &config).unwrap();
        assert!(
            report.max_residual < 1e-9,
            "residual {}",
            report.max_residual
        );
    }

    #[test]
    fn perturbed_ring_converges_back_to_regime_velocity() {
        let law = six_segment_law();
        let config = cfg(1, 0.0);
        let length = 2611.1;
        let cars = 20;
        let regime = ring_stationary(&law, length, cars, &config).unwrap();
        // Deterministic perturbation, keeping the order intact.
        let positions: Vec<f64> = regime
            .positions
            .iter()
            .enumerate()
            .map(|(i, x)| x + 3.0 * ((i * 2654435761) % 97) as f64 / 97.0)
            .collect();
        let mut sorted = positions.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let scenario = Scenario::new(Topology::Ring { length }, sorted).unwrap();
        let run = simulate(&scenario, &law, &config, 1500).unwrap();
        let t = run.trajectory.steps() - 1;
        for car in 0..cars {
            assert_abs_diff_eq!(
                run.trajectory.velocity(car, t),
                regime.v_bar,
                epsilon = 1e-6
            );
        }
    }
}
