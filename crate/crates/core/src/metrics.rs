//! Dip metrics, global/local synchronization errors and the energy model.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::protocol::ProtocolKind;
use crate::sim::Trace;
use crate::topology::{NodeId, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NodeDip {
    pub node: NodeId,
    pub tick: u64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DipMetrics {
    pub nodes: Vec<NodeDip>,
    /// Mean of the per-node minimum errors, seconds.
    pub e_dip_min: f64,
    /// Mean tick of the per-node minima.
    pub k_dip_min: f64,
    /// Spread of the minimum ticks, normalized by the node count.
    pub v_k_dip: f64,
}

/// Per-node error minimum over the node's active window.
///
/// The window opens at the node's first update (before it the node holds its
/// random initial value) and closes just before the node freezes. The
/// earliest minimizing tick wins ties. Gateway and malicious node are skipped.
pub fn dip_metrics(trace: &Trace) -> Result<DipMetrics> {
    if trace.node_count() < 2 || trace.is_empty() {
        return Err(Error::invalid("dip metrics need a trace with at least 2 nodes"));
    }
    let mut nodes = Vec::new();
    for i in trace.honest_nodes() {
        let start = trace.first_activation(i).unwrap_or(0);
        let end = trace.frozen_since(i).map_or(trace.last_tick(), |f| f.saturating_sub(1).max(start));
        let mut best = NodeDip { node: i, tick: start, error: trace.error(start, i) };
        for k in start + 1..=end {
            let e = trace.error(k, i);
            if e < best.error {
                best = NodeDip { node: i, tick: k, error: e };
            }
        }
        nodes.push(best);
    }
    if nodes.is_empty() {
        return Err(Error::invalid("no measurable nodes in trace"));
    }
    let m = nodes.len() as f64;
    let e_dip_min = nodes.iter().map(|d| d.error).sum::<f64>() / m;
    let k_dip_min = nodes.iter().map(|d| d.tick as f64).sum::<f64>() / m;
    let v_k_dip = nodes.iter().map(|d| (d.tick as f64 - k_dip_min).powi(2)).sum::<f64>() / m;
    Ok(DipMetrics { nodes, e_dip_min, k_dip_min, v_k_dip })
}

/// The minimum is a dip rather than the tail of a monotone decay: it lies
/// before the end of the trace and the error climbs at least one tick's worth
/// (Δ) above it afterwards.
pub fn dip_is_detectable(trace: &Trace, dip: &NodeDip) -> bool {
    let last = trace.last_tick();
    if dip.tick >= last {
        return false;
    }
    let peak_after = (dip.tick + 1..=last).map(|k| trace.error(k, dip.node)).fold(0.0, f64::max);
    peak_after >= dip.error + trace.delta()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorSeries {
    pub max_global: Vec<f64>,
    pub avg_global: Vec<f64>,
    pub max_local: Vec<f64>,
    pub avg_local: Vec<f64>,
}

/// Global errors span all node pairs (gateway included), local errors only
/// adjacent pairs. The averages take each node's largest absolute difference
/// and average over all `N` nodes.
pub fn error_series(trace: &Trace, topo: &Topology) -> Result<ErrorSeries> {
    if trace.node_count() != topo.node_count() || trace.gateway() != topo.gateway() {
        return Err(Error::invalid("trace and topology describe different networks"));
    }
    let n = topo.node_count();
    let mut out = ErrorSeries::default();
    for k in 0..trace.len() as u64 {
        let t = trace.row(k);
        let hi = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = t.iter().cloned().fold(f64::INFINITY, f64::min);
        out.max_global.push(hi - lo);
        out.avg_global.push(t.iter().map(|&x| (x - lo).max(hi - x)).sum::<f64>() / n as f64);
        let mut max_local = 0.0f64;
        let mut sum_local = 0.0;
        for i in 0..n as NodeId {
            let own = t[i as usize];
            let worst = topo.neighbors(i).map(|j| (own - t[j as usize]).abs()).fold(0.0, f64::max);
            max_local = max_local.max(worst);
            sum_local += worst;
        }
        out.max_local.push(max_local);
        out.avg_local.push(sum_local / n as f64);
    }
    Ok(out)
}

/// Radio and MCU constants of a MicaZ-class node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyParams {
    /// Volts.
    pub v_min: f64,
    /// Amperes.
    pub i_mcu: f64,
    pub i_tx: f64,
    pub i_rx: f64,
    /// Bits per second.
    pub data_rate: f64,
    /// Bytes added around every payload.
    pub header_footer: u32,
    /// Seconds per CPU tick.
    pub cpu_tick: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            v_min: 2.7,
            i_mcu: 8e-3,
            i_tx: 21.0e-3,
            i_rx: 23.3e-3,
            data_rate: 250_000.0,
            header_footer: 18,
            cpu_tick: 1e-6,
        }
    }
}

/// Joules per synchronization round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyReport {
    pub cpu_energy: f64,
    pub tx_energy: f64,
    pub rx_energy: f64,
    pub total: f64,
}

/// `E = c·i_MCU·v + (L/R)·i_TX·v + (L/R)·i_RX·v` with `L` the packet length
/// in bits (payload plus header/footer).
pub fn total_energy(cpu_ticks: u64, payload: u32, params: &EnergyParams) -> Result<EnergyReport> {
    let p = params;
    let positive = [p.v_min, p.i_mcu, p.i_tx, p.i_rx, p.data_rate, p.cpu_tick];
    if positive.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::invalid("energy parameters must be positive"));
    }
    let cpu_energy = cpu_ticks as f64 * p.cpu_tick * p.i_mcu * p.v_min;
    let airtime = f64::from(payload + p.header_footer) * 8.0 / p.data_rate;
    let tx_energy = airtime * p.i_tx * p.v_min;
    let rx_energy = airtime * p.i_rx * p.v_min;
    Ok(EnergyReport { cpu_energy, tx_energy, rx_energy, total: cpu_energy + tx_energy + rx_energy })
}

/// Per-protocol cost inputs and the published per-round totals (µJ), kept
/// only as an unverified reference next to the computed figures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolCost {
    pub name: &'static str,
    pub cpu_ticks: u64,
    pub payload: u32,
    pub quoted_total_uj: f64,
}

pub const PROTOCOL_COSTS: [ProtocolCost; 5] = [
    ProtocolCost { name: "FTSP", cpu_ticks: 5440, payload: 9, quoted_total_uj: 130.4 },
    ProtocolCost { name: "FloodPISync", cpu_ticks: 145, payload: 9, quoted_total_uj: 16.1 },
    ProtocolCost { name: "TSAU", cpu_ticks: 141, payload: 6, quoted_total_uj: 14.53 },
    ProtocolCost { name: "UAF", cpu_ticks: 133, payload: 7, quoted_total_uj: 14.8 },
    ProtocolCost { name: "BAF", cpu_ticks: 162, payload: 9, quoted_total_uj: 16.4 },
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyRow {
    pub protocol: &'static str,
    pub cpu_ticks: u64,
    pub payload_bytes: u32,
    pub packet_bytes: u32,
    pub cpu_energy_j: f64,
    pub tx_energy_j: f64,
    pub rx_energy_j: f64,
    pub total_j: f64,
    pub quoted_total_uj_unverified: f64,
}

pub fn energy_table(params: &EnergyParams) -> Result<Vec<EnergyRow>> {
    PROTOCOL_COSTS
        .iter()
        .map(|c| {
            let r = total_energy(c.cpu_ticks, c.payload, params)?;
            Ok(EnergyRow {
                protocol: c.name,
                cpu_ticks: c.cpu_ticks,
                payload_bytes: c.payload,
                packet_bytes: c.payload + params.header_footer,
                cpu_energy_j: r.cpu_energy,
                tx_energy_j: r.tx_energy,
                rx_energy_j: r.rx_energy,
                total_j: r.total,
                quoted_total_uj_unverified: c.quoted_total_uj,
            })
        })
        .collect()
}

pub fn energy_csv(rows: &[EnergyRow]) -> Result<String> {
    to_csv(rows, &[
        "protocol",
        "cpu_ticks",
        "payload_bytes",
        "packet_bytes",
        "cpu_energy_j",
        "tx_energy_j",
        "rx_energy_j",
        "total_j",
        "quoted_total_uj_unverified",
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub protocol: ProtocolKind,
    pub e_dip_min_s: f64,
    pub k_dip_min: f64,
    pub v_k_dip: f64,
}

/// One row per protocol, ordered TSAU, UAF, BAF (baseline first if present).
pub fn summary_table(reports: &[(ProtocolKind, DipMetrics)]) -> String {
    let mut rows: Vec<SummaryRow> = reports
        .iter()
        .map(|(p, m)| SummaryRow { protocol: *p, e_dip_min_s: m.e_dip_min, k_dip_min: m.k_dip_min, v_k_dip: m.v_k_dip })
        .collect();
    rows.sort_by_key(|r| r.protocol);
    to_csv(&rows, &["protocol", "e_dip_min_s", "k_dip_min", "v_k_dip"]).expect("in-memory csv")
}

/// Serializes rows; an empty slice still yields the header line.
pub(crate) fn to_csv<T: Serialize>(rows: &[T], header: &[&str]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::make_line;
    use proptest::prelude::*;

    fn trace(rows: &[Vec<f64>]) -> Trace {
        Trace::from_rows(1.0, 0, rows).unwrap()
    }

    #[test]
    fn all_nodes_exact_at_same_tick() {
        // gateway time is k; both nodes pass exactly through it at tick 5
        let rows: Vec<Vec<f64>> = (0..10).map(|k| {
            let k = k as f64;
            vec![k, 5.0 + (k - 5.0) * 2.0, 5.0 - (k - 5.0) * 3.0]
        }).collect();
        let m = dip_metrics(&trace(&rows)).unwrap();
        assert_eq!(m.k_dip_min, 5.0);
        assert_eq!(m.v_k_dip, 0.0);
        assert_eq!(m.e_dip_min, 0.0);
    }

    #[test]
    fn variance_uses_node_count() {
        // minima at ticks 4 and 6
        let rows: Vec<Vec<f64>> = (0..10).map(|k| {
            let k = k as f64;
            vec![k, k + (k - 4.0).abs() + 0.5, k + (k - 6.0).abs() + 0.25]
        }).collect();
        let m = dip_metrics(&trace(&rows)).unwrap();
        assert_eq!(m.nodes.iter().map(|d| d.tick).collect::<Vec<_>>(), vec![4, 6]);
        assert_eq!(m.k_dip_min, 5.0);
        assert_eq!(m.v_k_dip, 1.0);
        assert_eq!(m.e_dip_min, 0.375);
    }

    #[test]
    fn first_minimizer_wins() {
        let rows: Vec<Vec<f64>> = (0..6).map(|k| vec![k as f64, k as f64 + [3.0, 1.0, 2.0, 1.0, 4.0, 5.0][k]]).collect();
        assert_eq!(dip_metrics(&trace(&rows)).unwrap().nodes[0].tick, 1);
    }

    #[test]
    fn single_node_trace_rejected() {
        let t = Trace::from_rows(1.0, 0, &[vec![0.0], vec![1.0]]).unwrap();
        assert!(matches!(dip_metrics(&t), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn error_series_examples() {
        let topo = make_line(3).unwrap();
        let flat = trace(&[vec![2.0; 3]]);
        let s = error_series(&flat, &topo).unwrap();
        assert_eq!((s.max_global[0], s.avg_global[0], s.max_local[0], s.avg_local[0]), (0.0, 0.0, 0.0, 0.0));
        let t = trace(&[vec![0.0, 1.0, 3.0]]);
        let s = error_series(&t, &topo).unwrap();
        assert_eq!(s.max_global[0], 3.0);
        assert_eq!(s.max_local[0], 2.0);
        // per-node worst global gaps 3, 2, 3; local 1, 2, 2
        assert_eq!(s.avg_global[0], 8.0 / 3.0);
        assert_eq!(s.avg_local[0], 5.0 / 3.0);
        assert!(error_series(&t, &make_line(4).unwrap()).is_err());
    }

    #[test]
    fn energy_tsau_by_hand() {
        let r = total_energy(141, 6, &EnergyParams::default()).unwrap();
        assert!((r.cpu_energy - 3.0456e-6).abs() <= 1e-15 * 3.0456e-6);
        // 24 bytes = 192 bits at 250 kbit/s = 768 µs on air
        assert!((r.tx_energy - 768e-6 * 21.0e-3 * 2.7).abs() < 1e-18);
        assert!((r.rx_energy - 768e-6 * 23.3e-3 * 2.7).abs() < 1e-18);
        assert_eq!(r.total, r.cpu_energy + r.tx_energy + r.rx_energy);
    }

    #[test]
    fn energy_edge_cases() {
        let bare = EnergyParams { header_footer: 0, ..EnergyParams::default() };
        let r = total_energy(100, 0, &bare).unwrap();
        assert_eq!((r.tx_energy, r.rx_energy), (0.0, 0.0));
        let one = total_energy(0, 20, &bare).unwrap();
        let two = total_energy(0, 40, &bare).unwrap();
        assert_eq!(two.tx_energy + two.rx_energy, 2.0 * (one.tx_energy + one.rx_energy));
        let bad = EnergyParams { v_min: 0.0, ..EnergyParams::default() };
        assert!(total_energy(1, 1, &bad).is_err());
    }

    #[test]
    fn energy_table_has_reference_rows() {
        let rows = energy_table(&EnergyParams::default()).unwrap();
        let ftsp = rows.iter().find(|r| r.protocol == "FTSP").unwrap();
        assert_eq!((ftsp.cpu_ticks, ftsp.packet_bytes), (5440, 27));
        let csv = energy_csv(&rows).unwrap();
        assert!(csv.lines().next().unwrap().contains("total_j,quoted_total_uj_unverified"));
        assert_eq!(csv.lines().count(), 6);
    }

    #[test]
    fn summary_table_shapes() {
        assert_eq!(summary_table(&[]), "protocol,e_dip_min_s,k_dip_min,v_k_dip\n");
        let m = DipMetrics { nodes: vec![], e_dip_min: 1e-4, k_dip_min: 10.0, v_k_dip: 0.5 };
        let one = summary_table(&[(ProtocolKind::Uaf, m.clone())]);
        assert_eq!(one.lines().count(), 2);
        assert_eq!(one.lines().nth(1).unwrap(), "uaf,0.0001,10.0,0.5");
        let three = summary_table(&[
            (ProtocolKind::Baf, m.clone()),
            (ProtocolKind::Tsau, m.clone()),
            (ProtocolKind::Uaf, m),
        ]);
        let order: Vec<&str> = three.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(order, vec!["tsau", "uaf", "baf"]);
    }

    #[test]
    fn median_values() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    fn rows_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 5), 1..20)
    }

    proptest! {
        #[test]
        fn error_series_translation_invariant(rows in rows_strategy(), c in -1e3f64..1e3) {
            let topo = crate::topology::make_grid(1, 5, crate::topology::Corner::TopLeft).unwrap();
            let a = error_series(&trace(&rows), &topo).unwrap();
            let shifted: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|x| x + c).collect()).collect();
            let b = error_series(&trace(&shifted), &topo).unwrap();
            for (x, y) in [(&a.max_global, &b.max_global), (&a.avg_global, &b.avg_global), (&a.max_local, &b.max_local), (&a.avg_local, &b.avg_local)] {
                for (p, q) in x.iter().zip(y) {
                    prop_assert!((p - q).abs() < 1e-9);
                }
            }
            for k in 0..rows.len() {
                prop_assert!(a.avg_global[k] <= a.max_global[k] && a.avg_local[k] <= a.max_local[k]);
                prop_assert!(a.avg_local[k] <= a.avg_global[k] + 1e-12);
                prop_assert!(a.avg_local[k] >= 0.0);
            }
        }

        #[test]
        fn energy_linear_in_ticks_and_length(c in 0u64..100_000, l in 0u32..1000, s in 1u64..8) {
            let p = EnergyParams { header_footer: 0, ..EnergyParams::default() };
            let base = total_energy(c, l, &p).unwrap();
            let more_c = total_energy(c * s, l, &p).unwrap();
            let more_l = total_energy(c, l * s as u32, &p).unwrap();
            prop_assert!((more_c.cpu_energy - s as f64 * base.cpu_energy).abs() <= 1e-12 * more_c.cpu_energy.max(1e-300));
            prop_assert_eq!(more_c.tx_energy, base.tx_energy);
            prop_assert!((more_l.tx_energy - s as f64 * base.tx_energy).abs() <= 1e-12 * more_l.tx_energy.max(1e-300));
            prop_assert!((more_l.rx_energy - s as f64 * base.rx_energy).abs() <= 1e-12 * more_l.rx_energy.max(1e-300));
        }

        #[test]
        fn unique_minima_recovered(mins in prop::collection::vec(1usize..29, 1..6), depth in prop::collection::vec(0.0f64..1.0, 6)) {
            // each node's error is V-shaped with a unique bottom
            let rows: Vec<Vec<f64>> = (0..30usize).map(|k| {
                let mut r = vec![k as f64];
                for (j, &m) in mins.iter().enumerate() {
                    r.push(k as f64 + (k as f64 - m as f64).abs() + depth[j]);
                }
                r
            }).collect();
            let t = trace(&rows);
            let got = dip_metrics(&t).unwrap();
            for (j, d) in got.nodes.iter().enumerate() {
                // exhaustive scan oracle
                let node = (j + 1) as NodeId;
                let (kbest, ebest) = (0..30u64).map(|k| (k, t.error(k, node))).fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
                prop_assert_eq!(d.tick, kbest);
                prop_assert_eq!(d.error, ebest);
                prop_assert_eq!(d.tick as usize, mins[j]);
            }
        }
    }
}
