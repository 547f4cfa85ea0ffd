//! Open-loop geared stepper for the forearm roll angle.

use serde::{Deserialize, Serialize};

/// Stepper shaft state. The angle is held as a whole number of steps from
/// the home angle so it can never leave the step lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepperState {
    /// Steps from home.
    pub steps: i64,
    /// Angle at step 0 (deg).
    pub home_deg: f64,
    /// Degrees per step.
    pub step_size: f64,
    /// Step rate (steps/s).
    pub step_hz: f64,
    /// Signed steps still to go toward the last target.
    pub pending: i64,
    /// Fractional step budget carried between updates.
    budget: f64,
}

impl StepperState {
    pub fn new(step_size: f64, step_hz: f64) -> Self {
        StepperState {
            steps: 0,
            home_deg: 0.0,
            step_size,
            step_hz,
            pending: 0,
            budget: 0.0,
        }
    }

    pub fn theta(&self) -> f64 {
        self.home_deg + self.steps as f64 * self.step_size
    }

    /// Maximum slew rate (deg/s).
    pub fn max_rate(&self) -> f64 {
        self.step_size * self.step_hz
    }

    /// Nearest lattice angle to `target`, in steps from home.
    pub fn quantize(&self, target_deg: f64) -> i64 {
        ((target_deg - self.home_deg) / self.step_size).round() as i64
    }
}

/// Advances the stepper toward `target_deg` for `dt` seconds at its fixed
/// step rate. No feedback: the shaft is assumed to follow every pulse.
pub fn stepper_update(s: &StepperState, target_deg: f64, dt: f64) -> StepperState {
    let mut next = *s;
    let goal = s.quantize(target_deg);
    let remaining = goal - s.steps;
    if remaining == 0 {
        next.pending = 0;
        next.budget = 0.0;
        return next;
    }
    // Tolerance absorbs the representation error of dt (0.24·125 is not
    // exactly 30 in binary).
    let budget = s.budget + dt * s.step_hz;
    let available = (budget + 1e-9).floor();
    let moved = (available as i64).min(remaining.abs());
    next.steps += moved * remaining.signum();
    next.pending = goal - next.steps;
    next.budget = if next.pending == 0 {
        0.0
    } else {
        (budget - moved as f64).max(0.0)
    };
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stepper() -> StepperState {
        StepperState::new(1.5, 125.0)
    }

    #[test]
    fn forty_five_degrees_takes_thirty_steps() {
        let s = stepper_update(&stepper(), 45.0, 0.24);
        assert_eq!(s.steps, 30);
        assert_eq!(s.theta(), 45.0);
        assert_eq!(s.pending, 0);
    }

    #[test]
    fn sub_step_command_is_ignored() {
        let s = stepper_update(&stepper(), 0.4, 1.0);
        assert_eq!(s.theta(), 0.0);
    }

    #[test]
    fn one_step_period_is_eight_ms() {
        let s = stepper_update(&stepper(), -3.0, 0.008);
        assert_eq!(s.theta(), -1.5);
        assert_eq!(s.pending, -1);
    }

    #[test]
    fn millisecond_ticks_step_every_eighth_tick() {
        let mut s = stepper();
        let mut first_move = None;
        for k in 1..=240 {
            s = stepper_update(&s, 45.0, 1e-3);
            if first_move.is_none() && s.steps != 0 {
                first_move = Some(k);
            }
        }
        assert_eq!(first_move, Some(8));
        assert_eq!(s.theta(), 45.0);
    }

    #[test]
    fn idle_time_does_not_bank_steps() {
        let s = stepper_update(&stepper(), 0.0, 10.0);
        let s = stepper_update(&s, 90.0, 0.008);
        assert_eq!(s.steps, 1);
    }

    proptest! {
        #[test]
        fn stays_on_lattice_and_respects_rate(
            cmds in proptest::collection::vec((-180.0f64..180.0, 1e-4f64..0.05), 1..200)
        ) {
            let mut s = stepper();
            for (target, dt) in cmds {
                let before = s.theta();
                let goal = s.quantize(target);
                let gap_before = goal - s.steps;
                s = stepper_update(&s, target, dt);
                let k = s.theta() / 1.5;
                prop_assert!((k - k.round()).abs() < 1e-9);
                prop_assert!((s.theta() - before).abs() <= 187.5 * dt + 1.5 + 1e-9);
                // Never passes the quantized target.
                let gap_after = goal - s.steps;
                prop_assert!(gap_after.abs() <= gap_before.abs());
                prop_assert!(gap_after == 0 || gap_after.signum() == gap_before.signum());
            }
        }
    }
}
