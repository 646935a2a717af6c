//! Gateway reference clock and per-node clock bookkeeping.

use rand::Rng;

use crate::error::{Error, Result};

/// Gateway time at tick `k`, computed as a product so no rounding accumulates.
pub fn gateway_time(k: u64, delta: f64) -> f64 {
    delta * k as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GatewayClock {
    delta: f64,
    tick: u64,
}

impl GatewayClock {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::invalid(format!("delta must be positive, got {delta}")));
        }
        Ok(GatewayClock { delta, tick: 0 })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn time(&self) -> f64 {
        gateway_time(self.tick, self.delta)
    }

    pub fn advance(&mut self) {
        self.tick += 1;
    }
}

/// Hardware, logical and soft clock of one node, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeClocks {
    pub t_c: f64,
    pub t_s: f64,
    pub tau0: f64,
}

impl NodeClocks {
    pub fn new(tau0: f64) -> Self {
        NodeClocks { t_c: tau0, t_s: 0.0, tau0 }
    }
}

/// Draws `tau0` uniformly from `[0, 1)`.
pub fn init_node_clock<R: Rng + ?Sized>(rng: &mut R) -> NodeClocks {
    NodeClocks::new(rng.random::<f64>())
}

/// Request, update, stop and reply triggers of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TriggerBits {
    pub i_t: bool,
    pub i_u: bool,
    pub i_s: bool,
    pub i_r: bool,
}

impl Default for TriggerBits {
    fn default() -> Self {
        TriggerBits { i_t: true, i_u: true, i_s: false, i_r: false }
    }
}

/// Seconds between resynchronizations that keep a clock drifting at
/// `drift_ppm` within `accuracy` seconds.
pub fn resync_period(drift_ppm: f64, accuracy: f64) -> Result<f64> {
    if drift_ppm.is_nan() || accuracy.is_nan() || drift_ppm <= 0.0 || accuracy <= 0.0 {
        return Err(Error::invalid("drift and accuracy must be positive"));
    }
    // accuracy / (drift_ppm · 1e-6), ordered to stay exact on round inputs
    Ok(accuracy * 1e6 / drift_ppm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gateway_examples() {
        assert_eq!(gateway_time(0, 0.001), 0.0);
        assert_eq!(gateway_time(1000, 0.001), 1.0);
        assert_eq!(gateway_time(7, 0.5), 3.5);
    }

    #[test]
    fn gateway_clock_advances() {
        let mut g = GatewayClock::new(0.001).unwrap();
        for _ in 0..1000 {
            g.advance();
        }
        assert_eq!(g.tick(), 1000);
        assert_eq!(g.time(), 1.0);
        assert!(GatewayClock::new(0.0).is_err());
    }

    #[test]
    fn init_clock_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let c = init_node_clock(&mut rng);
        assert!((0.0..1.0).contains(&c.tau0));
        assert_eq!(c.t_c, c.tau0);
        assert_eq!(c.t_s, 0.0);
        let d = init_node_clock(&mut rng);
        assert_ne!(c.tau0, d.tau0);
        let again = init_node_clock(&mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(again, c);
    }

    #[test]
    fn trigger_defaults() {
        let t = TriggerBits::default();
        assert!(t.i_t && t.i_u && !t.i_s && !t.i_r);
    }

    #[test]
    fn resync_examples() {
        assert_eq!(resync_period(100.0, 0.001).unwrap(), 10.0);
        assert!((resync_period(100.0, 0.0001).unwrap() - 1.0).abs() < 1e-12);
        assert!((resync_period(50.0, 0.001).unwrap() - 20.0).abs() < 1e-12);
        assert!(resync_period(0.0, 0.001).is_err());
        assert!(resync_period(100.0, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn gateway_time_is_linear(a in 0u64..1_000_000, b in 0u64..1_000_000, delta in 1e-6f64..1.0) {
            let lhs = gateway_time(a + b, delta);
            let rhs = gateway_time(a, delta) + gateway_time(b, delta);
            prop_assert!((lhs - rhs).abs() <= f64::EPSILON * lhs.abs().max(1e-300) * 2.0);
        }

        #[test]
        fn resync_homogeneity(ppm in 0.1f64..1000.0, acc in 1e-7f64..1.0, s in 0.1f64..10.0) {
            let base = resync_period(ppm, acc).unwrap();
            let scaled_acc = resync_period(ppm, acc * s).unwrap();
            let scaled_ppm = resync_period(ppm * s, acc).unwrap();
            prop_assert!((scaled_acc - s * base).abs() <= 1e-12 * scaled_acc);
            prop_assert!((scaled_ppm - base / s).abs() <= 1e-12 * base);
        }
    }
}
