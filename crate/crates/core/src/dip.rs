//! Transient-dip detector.
//!
//! A length-7 difference filter runs over a node's own estimate series. Its
//! output approximates the local slope; a sign change marks the turning point
//! of the series, which is where the node stops averaging and freezes.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::protocol::NodeState;

pub const WINDOW: usize = 7;
/// Samples between the center of the window and its newest sample.
pub const DELAY: usize = 3;
/// Filter outputs discarded before crossings are armed.
pub const WARMUP_OUTPUTS: u32 = 3;

/// Tap weights, newest sample first.
pub const TAPS_NEWEST_FIRST: [f64; WINDOW] = [0.2, 0.5, 0.2, 0.0, -0.2, -0.5, -0.2];

/// `y = 0.2 x6 + 0.5 x5 + 0.2 x4 - 0.2 x2 - 0.5 x1 - 0.2 x0` over a window
/// ordered oldest to newest.
pub fn filter_output(window: &[f64]) -> Result<f64> {
    if window.len() != WINDOW {
        return Err(Error::invalid(format!("filter window needs {WINDOW} samples, got {}", window.len())));
    }
    let x = window;
    // integer weights then one division keeps ramps exact
    Ok((2.0 * (x[6] - x[0]) + 5.0 * (x[5] - x[1]) + 2.0 * (x[4] - x[2])) / 10.0)
}

/// A detected dip: the window center at the moment of the crossing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dip {
    pub tick: u64,
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DipDetector {
    window: VecDeque<(u64, f64)>,
    last_output: Option<f64>,
    warmup_remaining: u32,
    fired: Option<Dip>,
}

impl Default for DipDetector {
    fn default() -> Self {
        DipDetector::new()
    }
}

impl DipDetector {
    pub fn new() -> Self {
        DipDetector {
            window: VecDeque::with_capacity(WINDOW),
            last_output: None,
            warmup_remaining: WARMUP_OUTPUTS,
            fired: None,
        }
    }

    pub fn fired(&self) -> Option<Dip> {
        self.fired
    }

    pub fn last_output(&self) -> Option<f64> {
        self.last_output
    }

    /// Feeds the estimate computed at `tick`. Returns the dip on the first
    /// crossing; afterwards the detector stays silent.
    pub fn observe(&mut self, tick: u64, estimate: f64) -> Option<Dip> {
        if self.fired.is_some() {
            return None;
        }
        if self.window.len() == WINDOW {
            self.window.pop_front();
        }
        self.window.push_back((tick, estimate));
        if self.window.len() < WINDOW {
            return None;
        }
        let samples: Vec<f64> = self.window.iter().map(|&(_, x)| x).collect();
        let y = filter_output(&samples).expect("window is full");
        let previous = self.last_output.replace(y);
        if self.warmup_remaining > 0 {
            self.warmup_remaining -= 1;
            return None;
        }
        let crossed = y == 0.0 || previous.is_some_and(|p| p * y < 0.0);
        if !crossed {
            return None;
        }
        let (tick, estimate) = self.window[WINDOW - 1 - DELAY];
        let dip = Dip { tick, estimate };
        self.fired = Some(dip);
        Some(dip)
    }
}

/// Freezes a node at the dip estimate and puts it in stand-by.
pub fn freeze_at_dip(state: &NodeState, dip_estimate: f64) -> Result<NodeState> {
    if state.frozen {
        return Err(Error::ProtocolViolation(format!("node {} is already frozen", state.id)));
    }
    let mut next = *state;
    next.clocks.t_c = dip_estimate;
    next.triggers.i_s = true;
    next.triggers.i_u = false;
    next.triggers.i_t = false;
    next.frozen = true;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::NodeClocks;
    use crate::protocol::{tsau_on_receive, tsau_on_slot, ProtocolKind, SyncMessage};
    use proptest::prelude::*;

    #[test]
    fn filter_examples() {
        assert_eq!(filter_output(&[0.7; 7]).unwrap(), 0.0);
        let ramp: Vec<f64> = (0..7).map(f64::from).collect();
        assert_eq!(filter_output(&ramp).unwrap(), 3.6);
        assert_eq!(filter_output(&[3.0, 2.0, 1.0, 0.0, 1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert!(filter_output(&[1.0; 6]).is_err());
    }

    #[test]
    fn taps_sum_to_zero_and_match_filter() {
        // odd symmetry about the center makes the taps cancel pairwise
        for i in 0..WINDOW {
            assert_eq!(TAPS_NEWEST_FIRST[i], -TAPS_NEWEST_FIRST[WINDOW - 1 - i]);
        }
        let x = [0.3, -1.2, 4.0, 2.5, 0.1, 7.0, -0.4];
        let direct: f64 = TAPS_NEWEST_FIRST.iter().zip(x.iter().rev()).map(|(h, v)| h * v).sum();
        assert!((direct - filter_output(&x).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn short_series_never_fires() {
        let mut d = DipDetector::new();
        for k in 0..6 {
            assert!(d.observe(k, (k as f64 - 3.0).abs()).is_none());
        }
    }

    #[test]
    fn monotone_series_never_fires() {
        let mut d = DipDetector::new();
        for k in 0..500 {
            assert!(d.observe(k, 0.01 * k as f64 + 2.0).is_none());
        }
    }

    #[test]
    fn fires_at_turning_point_with_delay_removed() {
        // decreasing towards tick 40 then increasing: a dip at 40
        let series = |k: u64| (k as f64 - 40.0).powi(2) * 1e-3 + 0.5;
        let mut d = DipDetector::new();
        let mut hit = None;
        for k in 0..100 {
            if let Some(dip) = d.observe(k, series(k)) {
                hit = Some((k, dip));
                break;
            }
        }
        let (fired_at, dip) = hit.expect("dip must be detected");
        assert_eq!(fired_at, 43);
        assert_eq!(dip.tick, 40);
        assert_eq!(dip.estimate, series(40));
        assert!(d.observe(101, 0.0).is_none());
        assert_eq!(d.fired(), Some(dip));
    }

    #[test]
    fn smooth_minimum_found_within_one_tick() {
        let series = |k: u64| ((k as f64 - 57.3) / 12.0).cosh();
        let mut d = DipDetector::new();
        let dip = (0..200).find_map(|k| d.observe(k, series(k))).unwrap();
        assert!((dip.tick as f64 - 57.3).abs() <= 1.0, "{}", dip.tick);
    }

    #[test]
    fn warmup_suppresses_early_crossings() {
        // the output turns negative on the third (warm-up) output; the first
        // armed crossing is the later turn back up
        let mut d = DipDetector::new();
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 3.0];
        let fired: Vec<_> = xs
            .iter()
            .enumerate()
            .filter_map(|(k, &x)| d.observe(k as u64, x).map(|dip| (k, dip)))
            .collect();
        assert_eq!(fired.len(), 1);
        assert_eq!(fired[0].0, 13);
        assert_eq!(fired[0].1, Dip { tick: 10, estimate: 0.0 });
    }

    #[test]
    fn freeze_takes_center_estimate() {
        let mut d = DipDetector::new();
        let mut dip = None;
        for k in 0..50u64 {
            let x = (k as f64 - 37.0).abs() * 0.25 + 1.0;
            if let Some(found) = d.observe(k, x) {
                dip = Some((k, found));
                break;
            }
        }
        let (k, dip) = dip.unwrap();
        assert_eq!((k, dip.tick), (40, 37));
        let s = NodeState::new(ProtocolKind::Tsau, 2, NodeClocks::new(0.9));
        let f = freeze_at_dip(&s, dip.estimate).unwrap();
        assert_eq!(f.clocks.t_c, 1.0);
        assert!(f.frozen && f.triggers.i_s && !f.triggers.i_u && !f.triggers.i_t);
        assert!(matches!(freeze_at_dip(&f, 0.1), Err(Error::ProtocolViolation(_))));
    }

    #[test]
    fn frozen_node_stays_in_standby() {
        let s = NodeState::new(ProtocolKind::Tsau, 1, NodeClocks::new(0.9));
        let f = freeze_at_dip(&s, 0.25).unwrap();
        let mut cur = f;
        for k in 0..100 {
            cur = tsau_on_receive(&cur, &SyncMessage::tsau(0, 0.001 * k as f64)).unwrap();
            cur = tsau_on_receive(&cur, &SyncMessage::tsau(3, 0.5)).unwrap();
            let out = tsau_on_slot(&cur, k, 4);
            assert!(!out.updated);
            if let Some(m) = out.message {
                assert_eq!(m.time, 0.25);
            }
            cur = out.state;
        }
        assert_eq!(cur.estimate(), 0.25);
    }

    fn window() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, WINDOW)
    }

    proptest! {
        #[test]
        fn filter_is_linear(x in window(), y in window(), a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let mixed: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = filter_output(&mixed).unwrap();
            let rhs = a * filter_output(&x).unwrap() + b * filter_output(&y).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12);
        }

        #[test]
        fn filter_is_shift_invariant(x in window(), c in -100.0f64..100.0) {
            let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
            prop_assert!((filter_output(&shifted).unwrap() - filter_output(&x).unwrap()).abs() <= 1e-12);
        }

        #[test]
        fn fires_at_most_once(xs in prop::collection::vec(-1.0f64..1.0, 0..200)) {
            let mut d = DipDetector::new();
            let fires = xs.iter().enumerate().filter(|(k, &x)| d.observe(*k as u64, x).is_some()).count();
            prop_assert!(fires <= 1);
        }
    }
}
