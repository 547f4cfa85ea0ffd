//! Incremental optical encoder on the lead screw.
//!
//! Counts are the number of sector boundaries crossed since homing. The disk
//! boundaries sit at fixed multiples of the resolution; homing only moves the
//! count origin. Sudden direction reversals at speed lose counts: the register
//! shrinks toward the home origin by `floor(kappa·|v|)` counts, where `v` is
//! the approach speed on the tick before the reversal. A reversal only counts
//! when the carrier moves on both sides of it, so a carrier that stops and
//! then backs off loses nothing.

use crate::plant::STICTION_V_EPS;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderModel {
    /// Signed count register.
    pub counts: i64,
    /// Travel per count (m).
    pub resolution: f64,
    /// Position that reads as count 0 (m).
    pub home_offset: f64,
    /// Counts lost per reversal, per m/s of approach speed.
    pub kappa: f64,
    /// Disk sector the carrier occupied at the last update.
    sector: i64,
    /// Velocity seen at the last update.
    last_vel: f64,
    /// Total counts lost to reversals since construction.
    pub lost_counts: u64,
}

impl EncoderModel {
    /// Encoder homed with the carrier at `switch_pos`.
    pub fn homed_at(resolution: f64, kappa: f64, switch_pos: f64) -> Self {
        EncoderModel {
            counts: 0,
            resolution,
            home_offset: switch_pos,
            kappa,
            sector: sector_of(switch_pos, resolution),
            last_vel: 0.0,
            lost_counts: 0,
        }
    }

    /// Encoder homed at `switch_pos` whose carrier has since been moved
    /// (without loss) to `pos`.
    pub fn homed_then_moved(resolution: f64, kappa: f64, switch_pos: f64, pos: f64) -> Self {
        encoder_update(&Self::homed_at(resolution, kappa, switch_pos), pos, 0.0)
    }

    pub fn measured(&self) -> f64 {
        self.counts as f64 * self.resolution + self.home_offset
    }

    /// Index of the disk sector under the read head. Unlike `counts` it is
    /// never corrupted by reversals, so it marks every physical edge.
    pub fn sector(&self) -> i64 {
        self.sector
    }

    /// Sign of the last motion the encoder saw (−1, 0, 1).
    pub fn last_dir(&self) -> i8 {
        if self.last_vel > STICTION_V_EPS {
            1
        } else if self.last_vel < -STICTION_V_EPS {
            -1
        } else {
            0
        }
    }
}

fn sector_of(pos: f64, resolution: f64) -> i64 {
    (pos / resolution).floor() as i64
}

/// Samples the encoder against the true carrier position and velocity.
pub fn encoder_update(e: &EncoderModel, true_pos: f64, vel: f64) -> EncoderModel {
    let mut next = *e;
    let sector = sector_of(true_pos, e.resolution);
    next.counts += sector - e.sector;
    next.sector = sector;

    let reversed =
        e.last_vel.abs() > STICTION_V_EPS && vel.abs() > STICTION_V_EPS && e.last_vel.signum() != vel.signum();
    if reversed && e.kappa > 0.0 {
        let lost = (e.kappa * e.last_vel.abs()).floor() as i64;
        let kept = (next.counts.abs() - lost).max(0);
        next.lost_counts += (next.counts.abs() - kept) as u64;
        next.counts = kept * next.counts.signum();
    }
    next.last_vel = vel;
    next
}

/// Re-homes at the calibration switch: the count origin moves to the switch
/// and all accumulated drift is discarded.
pub fn home(e: &EncoderModel, switch_pos: f64) -> EncoderModel {
    EncoderModel {
        counts: 0,
        home_offset: switch_pos,
        last_vel: 0.0,
        ..*e
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const X_RES: f64 = 1.5e-3 / 4.0;
    const Y_RES: f64 = 1.25e-3 / 4.0;

    #[test]
    fn resolutions_from_four_sectors() {
        assert!((X_RES - 0.375e-3).abs() < 1e-15);
        assert!((Y_RES * 1e3 - 0.313).abs() < 1e-3);
    }

    #[test]
    fn sweep_to_one_millimetre_crosses_two_boundaries() {
        let mut e = EncoderModel::homed_at(X_RES, 0.0, 0.0);
        let v = 0.01;
        for k in 1..=100 {
            e = encoder_update(&e, k as f64 * 1e-5, v);
        }
        assert_eq!(e.counts, 2);
        assert!((e.measured() - 0.75e-3).abs() < 1e-12);
    }

    #[test]
    fn reversal_at_speed_loses_counts_toward_home() {
        let mut e = EncoderModel::homed_at(Y_RES, 10.0, 0.0);
        e = encoder_update(&e, 0.1, 0.15);
        let before = e.counts;
        e = encoder_update(&e, 0.1, -0.15);
        assert_eq!(e.counts, before - 1);
        assert_eq!(e.lost_counts, 1);
    }

    #[test]
    fn stop_then_reverse_loses_nothing() {
        let mut e = EncoderModel::homed_at(Y_RES, 10.0, 0.0);
        e = encoder_update(&e, 0.1, 0.15);
        let before = e.counts;
        e = encoder_update(&e, 0.1, 0.0);
        e = encoder_update(&e, 0.1, -0.15);
        assert_eq!(e.counts, before);
    }

    #[test]
    fn homing_zeroes_drift() {
        let mut e = EncoderModel::homed_at(Y_RES, 50.0, 0.0);
        let mut pos = 0.2;
        for k in 0..40 {
            let v = if k % 2 == 0 { 0.2 } else { -0.2 };
            pos += v * 0.01;
            e = encoder_update(&e, pos, v);
        }
        assert!((e.measured() - pos).abs() > Y_RES);
        let homed = home(&e, pos);
        assert_eq!(homed.measured(), pos);
        let homed = home(&e, 0.45);
        assert_eq!(homed.measured(), 0.45);
    }

    #[test]
    fn homed_then_moved_reads_position() {
        let e = EncoderModel::homed_then_moved(Y_RES, 10.0, 0.0, 0.225);
        assert!((e.measured() - 0.225).abs() <= Y_RES);
        assert_eq!(e.lost_counts, 0);
    }

    proptest! {
        #[test]
        fn quantization_bound_without_reversal_loss(
            res_pick in 0usize..2,
            start in 0.0f64..0.45,
            steps in proptest::collection::vec(-1.5e-3f64..1.5e-3, 1..2000),
        ) {
            let res = [X_RES, Y_RES][res_pick];
            let mut e = EncoderModel::homed_at(res, 0.0, 0.0);
            let mut pos = start;
            e = encoder_update(&e, pos, 0.0);
            for dx in steps {
                pos += dx;
                e = encoder_update(&e, pos, dx / 0.01);
                prop_assert!((e.measured() - pos).abs() <= res + 1e-12);
            }
        }
    }
}
