use crate::clock::gateway_time;
use crate::topology::Topology;

/// One synchronous averaging step on an ideal network.
///
/// Every non-gateway node takes the mean of its neighbors' previous values;
/// a gateway neighbor contributes its current time `Δk`. Neighbors are summed
/// in ascending id order. The returned vector holds `Δk` at the gateway.
pub fn sync_baseline_step(prev: &[f64], topo: &Topology, k: u64, delta: f64) -> Vec<f64> {
    let g = topo.gateway();
    let now = gateway_time(k, delta);
    (0..topo.node_count())
        .map(|i| {
            let i = i as u16;
            if i == g {
                return now;
            }
            let sum: f64 = topo.neighbors(i).map(|j| if j == g { now } else { prev[j as usize] }).sum();
            sum / topo.degree(i) as f64
        })
        .collect()
}
