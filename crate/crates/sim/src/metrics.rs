//! Summary statistics of a run.

use serde::{Deserialize, Serialize};

use crate::run::{LinkStatus, SimRecord, VisibilityLoss};

/// Band the formation error must enter and stay in to count as settled.
pub const SETTLING_BAND: f64 = 0.05;

/// Fraction of the run, counted from the end, treated as steady state.
pub const STEADY_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketStats {
    /// Camera ticks with a frame on the screen.
    pub captured: usize,
    pub accepted: usize,
    pub dropped: usize,
    pub gated: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub records: usize,
    /// Largest |eps_i| over the steady-state window.
    pub steady_band: [f64; 3],
    pub rmse: [f64; 3],
    /// First time after which every |eps_i| stays within [`SETTLING_BAND`].
    pub settling_time: Option<f64>,
    /// Follower path length from the leader's stop to the follower's stop.
    pub braking_distance: Option<f64>,
    pub packets: PacketStats,
    pub pose_failures: usize,
    /// Largest |v_f| and |omega_f| applied.
    pub max_follower_speed: [f64; 2],
    pub visibility_lost: Option<VisibilityLoss>,
}

fn max_abs_eps(r: &SimRecord) -> f64 {
    r.eps.iter().fold(0.0f64, |m, e| m.max(e.abs()))
}

pub fn compute_metrics(
    records: &[SimRecord],
    braking_distance: Option<f64>,
    visibility_lost: Option<VisibilityLoss>,
) -> Metrics {
    let mut m = Metrics {
        records: records.len(),
        braking_distance,
        visibility_lost,
        ..Metrics::default()
    };
    if records.is_empty() {
        return m;
    }
    let start = ((1.0 - STEADY_FRACTION) * records.len() as f64).floor() as usize;
    for r in &records[start..] {
        for i in 0..3 {
            m.steady_band[i] = m.steady_band[i].max(r.eps[i].abs());
        }
    }
    for i in 0..3 {
        let ss: f64 = records.iter().map(|r| r.eps[i] * r.eps[i]).sum();
        m.rmse[i] = (ss / records.len() as f64).sqrt();
    }
    m.settling_time = match records.iter().rposition(|r| max_abs_eps(r) > SETTLING_BAND) {
        None => Some(records[0].t),
        Some(last) if last + 1 < records.len() => Some(records[last + 1].t),
        Some(_) => None,
    };
    for r in records {
        match r.link {
            LinkStatus::Accepted => m.packets.accepted += 1,
            LinkStatus::Gated => m.packets.gated += 1,
            LinkStatus::Dropped => m.packets.dropped += 1,
            LinkStatus::NoFrame | LinkStatus::Unused => {}
        }
        if !r.pose_ok {
            m.pose_failures += 1;
        }
        m.max_follower_speed[0] = m.max_follower_speed[0].max(r.u_f.v.abs());
        m.max_follower_speed[1] = m.max_follower_speed[1].max(r.u_f.omega.abs());
    }
    m.packets.captured = m.packets.accepted + m.packets.gated + m.packets.dropped;
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use oisac_core::{Pose2D, RelativeState, Twist};

    fn rec(t: f64, e: f64) -> SimRecord {
        let s = RelativeState::new(0.75, 0.0, 0.0);
        SimRecord {
            t,
            leader: Pose2D::new(0.0, 0.0, 0.0),
            follower: Pose2D::new(0.0, 0.0, 0.0),
            s_true: s,
            s_est: s,
            u_hat: Twist::zero(),
            u_l: Twist::zero(),
            u_cmd: Twist::zero(),
            u_f: Twist::new(0.1, -0.05),
            link: LinkStatus::Accepted,
            pose_ok: true,
            eps: [e, -e / 2.0, 0.0],
            v: 0.0,
        }
    }

    #[test]
    fn settling_is_the_last_entry_into_the_band() {
        let errs = [0.3, 0.01, 0.2, 0.04, 0.01, 0.0];
        let recs: Vec<_> = errs.iter().enumerate().map(|(i, &e)| rec(i as f64, e)).collect();
        let m = compute_metrics(&recs, None, None);
        assert_eq!(m.settling_time, Some(3.0));
        assert_eq!(m.steady_band, [0.04, 0.02, 0.0]);
        assert_eq!(m.max_follower_speed, [0.1, 0.05]);
        assert_eq!(m.packets.accepted, 6);
    }

    #[test]
    fn never_settling() {
        let recs: Vec<_> = (0..4).map(|i| rec(i as f64, 0.5)).collect();
        assert_eq!(compute_metrics(&recs, None, None).settling_time, None);
    }
}
