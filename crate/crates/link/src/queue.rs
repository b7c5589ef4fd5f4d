//! Transmitter display queue: messages published at a fixed rate wait in a
//! bounded queue and each takes `t_tx` to render before it reaches the screen.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueuePolicy {
    /// Capacity counts the message being rendered; arrivals to a full queue
    /// are discarded.
    #[default]
    DropNewest,
    /// Capacity counts waiting messages only; a full queue evicts its oldest
    /// waiting message.
    DropOldest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplayQueueConfig {
    pub f_pub: f64,
    pub t_tx: f64,
    pub n_q: usize,
    #[serde(default)]
    pub policy: QueuePolicy,
}

impl Default for DisplayQueueConfig {
    fn default() -> Self {
        Self {
            f_pub: 20.0,
            t_tx: 0.06,
            n_q: 1,
            policy: QueuePolicy::DropNewest,
        }
    }
}

impl DisplayQueueConfig {
    pub fn is_valid(&self) -> bool {
        self.f_pub > 0.0 && self.t_tx > 0.0 && self.n_q >= 1
    }

    /// Time of the `k`-th publication.
    pub fn publish_time(&self, k: u64) -> f64 {
        k as f64 / self.f_pub
    }
}

/// Event-driven queue state. `M` is the message carried.
#[derive(Debug, Clone)]
pub struct DisplayQueue<M> {
    cfg: DisplayQueueConfig,
    waiting: VecDeque<(f64, M)>,
    rendering: Option<(f64, f64, M)>,
    shown: Option<(f64, M)>,
    /// `(publish time, time shown)` of every frame that reached the screen.
    pub history: Vec<(f64, f64)>,
}

impl<M: Clone> DisplayQueue<M> {
    pub fn new(cfg: DisplayQueueConfig) -> Self {
        Self {
            cfg,
            waiting: VecDeque::new(),
            rendering: None,
            shown: None,
            history: Vec::new(),
        }
    }

    /// Completes every render that finishes at or before `t`.
    pub fn advance(&mut self, t: f64) {
        while let Some((stamp, finish, _)) = &self.rendering {
            if *finish > t + 1e-12 {
                break;
            }
            let (stamp, finish) = (*stamp, *finish);
            let (_, _, msg) = self.rendering.take().unwrap();
            self.history.push((stamp, finish));
            self.shown = Some((stamp, msg));
            self.rendering = self.waiting.pop_front().map(|(s, m)| (s, finish + self.cfg.t_tx, m));
        }
    }

    pub fn publish(&mut self, t: f64, msg: M) {
        self.advance(t);
        if self.rendering.is_none() {
            self.rendering = Some((t, t + self.cfg.t_tx, msg));
            return;
        }
        let room = match self.cfg.policy {
            QueuePolicy::DropNewest => self.cfg.n_q - 1,
            QueuePolicy::DropOldest => self.cfg.n_q,
        };
        if self.waiting.len() < room {
            self.waiting.push_back((t, msg));
        } else if self.cfg.policy == QueuePolicy::DropOldest {
            self.waiting.pop_front();
            self.waiting.push_back((t, msg));
        }
    }

    /// Publish time and content of the frame on screen.
    pub fn on_screen(&self) -> Option<&(f64, M)> {
        self.shown.as_ref()
    }
}

/// Steady-state mean of (time shown - publish time), discarding the first
/// 10% of displayed frames.
pub fn simulate_display_queue(cfg: &DisplayQueueConfig, duration: f64) -> f64 {
    let mut q = DisplayQueue::new(*cfg);
    let mut k = 0;
    while cfg.publish_time(k) < duration {
        q.publish(cfg.publish_time(k), ());
        k += 1;
    }
    q.advance(duration);
    let skip = q.history.len() / 10;
    let tail = &q.history[skip..];
    tail.iter().map(|(s, f)| f - s).sum::<f64>() / tail.len().max(1) as f64
}

/// What the screen shows at `t`, given the leader's published messages as a
/// time-sorted history: each publication carries the latest entry at or
/// before its publish time.
pub fn displayed_payload<M: Clone>(t: f64, history: &[(f64, M)], cfg: &DisplayQueueConfig) -> Option<M> {
    let mut q = DisplayQueue::new(*cfg);
    let mut k = 0;
    let mut idx = 0;
    while cfg.publish_time(k) <= t {
        let tp = cfg.publish_time(k);
        while idx + 1 < history.len() && history[idx + 1].0 <= tp {
            idx += 1;
        }
        if let Some((th, m)) = history.get(idx) {
            if *th <= tp {
                q.publish(tp, m.clone());
            }
        }
        k += 1;
    }
    q.advance(t);
    q.on_screen().map(|(_, m)| m.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_slot_shows_render_latency() {
        let d = simulate_display_queue(&DisplayQueueConfig::default(), 60.0);
        assert_abs_diff_eq!(d, 0.06, epsilon = 1e-9);
    }

    #[test]
    fn slow_publisher_never_queues() {
        for n_q in [1, 5, 50] {
            for policy in [QueuePolicy::DropNewest, QueuePolicy::DropOldest] {
                let cfg = DisplayQueueConfig {
                    f_pub: 10.0,
                    n_q,
                    policy,
                    ..Default::default()
                };
                assert_abs_diff_eq!(simulate_display_queue(&cfg, 60.0), 0.06, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn single_slot_frame_sequence() {
        let mut q = DisplayQueue::new(DisplayQueueConfig::default());
        for k in 0..5 {
            q.publish(k as f64 * 0.05, k);
        }
        q.advance(0.25);
        // 0 renders until 0.06 (1 dropped), 2 from 0.10 to 0.16 (3 dropped), 4 from 0.20
        let stamps: Vec<f64> = q.history.iter().map(|h| h.0).collect();
        assert_eq!(stamps, vec![0.0, 0.1]);
        assert_eq!(q.on_screen().map(|s| s.1), Some(2));
    }

    #[test]
    fn constant_history_is_displayed_as_is() {
        let hist = vec![(0.0, 7u8)];
        assert_eq!(displayed_payload(0.03, &hist, &DisplayQueueConfig::default()), None);
        assert_eq!(displayed_payload(5.0, &hist, &DisplayQueueConfig::default()), Some(7));
    }
}
