//! Tick-driven simulation kernel.
//!
//! Per tick `k >= 1`:
//! 1. draw the link realization;
//! 2. deliver every broadcast of tick `k - 1` over active links;
//! 3. apply each node's protocol transition (gateway excluded);
//! 4. feed freshly computed estimates to the dip detectors, freezing on a dip;
//! 5. collect the broadcasts of tick `k` (gateway included) and record the row.
//!
//! Tick 0 records the initial state and carries the initial broadcasts.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clock::{gateway_time, init_node_clock, NodeClocks};
use crate::dip::{freeze_at_dip, Dip, DipDetector};
use crate::error::{Error, Result};
use crate::noise::{generate_with, malicious_node};
use crate::protocol::{
    baf_on_receive, baf_on_tick, tsau_on_receive, tsau_on_slot, uaf_gateway_cycle, uaf_on_receive,
    uaf_on_tick, NodeState, ProtocolKind, SyncMessage, WIRE_TICKS_PER_SECOND,
};
use crate::rng::{RngPlan, Stream};
use crate::topology::{
    connectivity_layers, make_grid, make_line, make_star, sample_links, Corner, NodeId, Topology,
};

/// Spectral exponent of the malicious node's noise (-6 dB/octave).
pub const NOISE_ALPHA: f64 = 2.0;
/// Standard deviation of the malicious node's broadcast, seconds.
pub const NOISE_STD: f64 = 1.0;

pub const DEFAULT_DELTA: f64 = 0.001;
pub const DEFAULT_MAX_TICKS: u64 = 1500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TopologySpec {
    Grid {
        rows: usize,
        cols: usize,
        #[serde(default)]
        corner: Corner,
    },
    Line {
        n: usize,
    },
    Star {
        leaves: usize,
    },
    EdgeList {
        path: PathBuf,
    },
}

impl TopologySpec {
    pub fn build(&self) -> Result<Topology> {
        match self {
            TopologySpec::Grid { rows, cols, corner } => make_grid(*rows, *cols, *corner),
            TopologySpec::Line { n } => make_line(*n),
            TopologySpec::Star { leaves } => make_star(*leaves),
            TopologySpec::EdgeList { path } => Topology::load_edge_list(path),
        }
    }

    /// Resolves a relative edge-list path against `base`.
    pub fn rebase(&mut self, base: &Path) {
        if let TopologySpec::EdgeList { path } = self {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

fn default_max_ticks() -> u64 {
    DEFAULT_MAX_TICKS
}

fn default_link_p() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub protocol: ProtocolKind,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_max_ticks")]
    pub max_ticks: u64,
    #[serde(default = "default_link_p")]
    pub link_p: f64,
    #[serde(default)]
    pub malicious: bool,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub freeze_on_dip: bool,
    pub topology: TopologySpec,
}

impl SimConfig {
    pub fn new(topology: TopologySpec, protocol: ProtocolKind, seed: u64) -> Self {
        SimConfig {
            protocol,
            delta: DEFAULT_DELTA,
            max_ticks: DEFAULT_MAX_TICKS,
            link_p: 1.0,
            malicious: false,
            seed,
            freeze_on_dip: true,
            topology,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::ConfigRejected(format!("delta must be positive, got {}", self.delta)));
        }
        if self.max_ticks < 1 {
            return Err(Error::ConfigRejected("max_ticks must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.link_p) {
            return Err(Error::ConfigRejected(format!("link_p {} outside [0, 1]", self.link_p)));
        }
        // manifests are TOML, whose integers are signed 64-bit
        if self.seed > i64::MAX as u64 {
            return Err(Error::ConfigRejected(format!("seed {} exceeds {}", self.seed, i64::MAX)));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::ConfigRejected(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }
}

/// Per-tick, per-node record of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    protocol: ProtocolKind,
    delta: f64,
    gateway: NodeId,
    malicious: Option<NodeId>,
    nodes: usize,
    estimate: Vec<f64>,
    activated: Vec<bool>,
    frozen: Vec<bool>,
    sent: Vec<u64>,
    delivered: Vec<u64>,
    dips: Vec<Option<Dip>>,
}

impl Trace {
    fn empty(protocol: ProtocolKind, delta: f64, gateway: NodeId, nodes: usize, malicious: Option<NodeId>) -> Self {
        Trace {
            protocol,
            delta,
            gateway,
            malicious,
            nodes,
            estimate: Vec::new(),
            activated: Vec::new(),
            frozen: Vec::new(),
            sent: Vec::new(),
            delivered: Vec::new(),
            dips: vec![None; nodes],
        }
    }

    /// Trace built directly from estimate rows (`rows[k][i]`); nothing is
    /// marked activated or frozen. Useful for metric checks.
    pub fn from_rows(delta: f64, gateway: NodeId, rows: &[Vec<f64>]) -> Result<Self> {
        let nodes = rows.first().map_or(0, Vec::len);
        if nodes == 0 || rows.iter().any(|r| r.len() != nodes) {
            return Err(Error::invalid("rows must be non-empty and of equal length"));
        }
        if gateway as usize >= nodes {
            return Err(Error::invalid("gateway out of range"));
        }
        let mut t = Trace::empty(ProtocolKind::SyncBaseline, delta, gateway, nodes, None);
        for r in rows {
            t.estimate.extend_from_slice(r);
            t.activated.extend(std::iter::repeat_n(false, nodes));
            t.frozen.extend(std::iter::repeat_n(false, nodes));
            t.sent.push(0);
            t.delivered.push(0);
        }
        Ok(t)
    }

    pub fn protocol(&self) -> ProtocolKind {
        self.protocol
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn gateway(&self) -> NodeId {
        self.gateway
    }

    pub fn malicious(&self) -> Option<NodeId> {
        self.malicious
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    /// Number of recorded rows (ticks `0..len`).
    pub fn len(&self) -> usize {
        self.sent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sent.is_empty()
    }

    pub fn last_tick(&self) -> u64 {
        self.len().saturating_sub(1) as u64
    }

    fn at(&self, k: u64, i: NodeId) -> usize {
        k as usize * self.nodes + i as usize
    }

    pub fn estimate(&self, k: u64, i: NodeId) -> f64 {
        self.estimate[self.at(k, i)]
    }

    /// `|t_g(k) - t_i(k)|`.
    pub fn error(&self, k: u64, i: NodeId) -> f64 {
        (gateway_time(k, self.delta) - self.estimate(k, i)).abs()
    }

    pub fn activated(&self, k: u64, i: NodeId) -> bool {
        self.activated[self.at(k, i)]
    }

    pub fn frozen(&self, k: u64, i: NodeId) -> bool {
        self.frozen[self.at(k, i)]
    }

    pub fn row(&self, k: u64) -> &[f64] {
        let start = self.at(k, 0);
        &self.estimate[start..start + self.nodes]
    }

    /// Point-to-point message copies transmitted at tick `k`.
    pub fn sent(&self, k: u64) -> u64 {
        self.sent[k as usize]
    }

    /// Message copies received at tick `k`.
    pub fn delivered(&self, k: u64) -> u64 {
        self.delivered[k as usize]
    }

    /// Dip reported by node `i`'s detector, if any.
    pub fn dip(&self, i: NodeId) -> Option<Dip> {
        self.dips[i as usize]
    }

    pub fn first_activation(&self, i: NodeId) -> Option<u64> {
        (0..self.len() as u64).find(|&k| self.activated(k, i))
    }

    pub fn frozen_since(&self, i: NodeId) -> Option<u64> {
        (0..self.len() as u64).find(|&k| self.frozen(k, i))
    }

    /// Nodes whose dips are measured: everyone but the gateway and the
    /// malicious node.
    pub fn honest_nodes(&self) -> Vec<NodeId> {
        (0..self.nodes as NodeId)
            .filter(|&i| i != self.gateway && Some(i) != self.malicious)
            .collect()
    }

    /// CSV with header `tick,node,estimate,error,activated,frozen`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tick", "node", "estimate", "error", "activated", "frozen"])?;
        for k in 0..self.len() as u64 {
            for i in 0..self.nodes as NodeId {
                w.write_record([
                    k.to_string(),
                    i.to_string(),
                    self.estimate(k, i).to_string(),
                    self.error(k, i).to_string(),
                    u8::from(self.activated(k, i)).to_string(),
                    u8::from(self.frozen(k, i)).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

fn check_wire(msg: &SyncMessage, k: u64) -> Result<()> {
    if msg.time * WIRE_TICKS_PER_SECOND > f64::from(u32::MAX) {
        return Err(Error::EpisodeAborted {
            tick: k,
            reason: format!("node {} time {} s overflows the 4-byte wire field", msg.sender, msg.time),
        });
    }
    Ok(())
}

fn gateway_message(kind: ProtocolKind, g: NodeId, time: f64, status: bool) -> SyncMessage {
    SyncMessage { kind, sender: g, time, status, counter: 0 }
}

pub fn run(config: &SimConfig) -> Result<Trace> {
    config.validate()?;
    let topo = config.topology.build().map_err(|e| Error::ConfigRejected(e.to_string()))?;
    let layers = connectivity_layers(&topo).map_err(|e| Error::ConfigRejected(e.to_string()))?;
    let n = topo.node_count();
    let g = topo.gateway();
    let kind = config.protocol;
    let delta = config.delta;
    let plan = RngPlan::new(config.seed);

    let malicious = if config.malicious { Some(malicious_node(&topo)?) } else { None };
    let noise: Vec<f64> = if malicious.is_some() {
        let raw = generate_with(config.max_ticks as usize + 1, NOISE_ALPHA, plan.stream(Stream::Noise))?;
        raw.into_iter().map(|x| x * NOISE_STD).collect()
    } else {
        Vec::new()
    };

    let mut init = plan.stream(Stream::InitClocks);
    let mut slot = 0u64;
    let mut states: Vec<NodeState> = (0..n as NodeId)
        .map(|i| {
            if i == g {
                NodeState::new(kind, i, NodeClocks::new(0.0)).with_slot(0)
            } else {
                slot += 1;
                NodeState::new(kind, i, init_node_clock(&mut init)).with_slot(slot)
            }
        })
        .collect();
    let mut detectors = vec![DipDetector::new(); n];
    let mut link_rng = plan.stream(Stream::Links);

    let cycle = (n - 1) as u64;
    let mut gw_status = matches!(kind, ProtocolKind::Uaf | ProtocolKind::Baf);
    let mut gw_cycle_start = 0u64;
    let mut mal_value = malicious.map(|m| states[m as usize].estimate()).unwrap_or(0.0);

    let mut trace = Trace::empty(kind, delta, g, n, malicious);
    let mut outbox: Vec<Option<SyncMessage>> = vec![None; n];
    let mut activated = vec![false; n];

    for k in 0..=config.max_ticks {
        activated.iter_mut().for_each(|a| *a = false);
        let mut next_out: Vec<Option<SyncMessage>> = vec![None; n];
        let mut delivered = 0u64;

        if k == 0 {
            for i in 0..n as NodeId {
                if i != g && kind != ProtocolKind::Tsau {
                    next_out[i as usize] = Some(states[i as usize].message());
                }
            }
        } else {
            let links = sample_links(&topo, config.link_p, &mut link_rng)?;
            for i in 0..n as NodeId {
                if i == g {
                    continue;
                }
                let mut st = states[i as usize];
                for &(j, e) in topo.incident(i) {
                    let Some(msg) = outbox[j as usize].filter(|_| links.is_active(e)) else {
                        continue;
                    };
                    delivered += 1;
                    st = match kind {
                        ProtocolKind::SyncBaseline => {
                            if !st.frozen {
                                st.accumulate(msg.time);
                            }
                            st
                        }
                        ProtocolKind::Tsau => tsau_on_receive(&st, &msg)?,
                        ProtocolKind::Uaf => uaf_on_receive(&st, &msg)?,
                        ProtocolKind::Baf => baf_on_receive(&st, &msg)?,
                    };
                }
                let (mut st, updated, broadcasts) = match kind {
                    ProtocolKind::SyncBaseline => {
                        let updated = !st.frozen && st.total_received > 0;
                        if updated {
                            let t = st.t_av();
                            st.adopt(t);
                        }
                        st.reset_accumulators();
                        (st, updated, true)
                    }
                    ProtocolKind::Tsau => {
                        let out = tsau_on_slot(&st, k, n);
                        (out.state, out.updated, out.message.is_some())
                    }
                    ProtocolKind::Uaf => {
                        let out = uaf_on_tick(&st, k);
                        (out.state, out.updated, true)
                    }
                    ProtocolKind::Baf => {
                        let out = baf_on_tick(&st, k);
                        (out.state, out.updated, true)
                    }
                };
                activated[i as usize] = updated;
                if updated && Some(i) != malicious {
                    if let Some(dip) = detectors[i as usize].observe(k, st.estimate()) {
                        if config.freeze_on_dip {
                            st = freeze_at_dip(&st, dip.estimate)?;
                        }
                    }
                }
                states[i as usize] = st;
                if broadcasts {
                    next_out[i as usize] = Some(st.message());
                }
            }
        }

        // gateway schedule; its message is stamped with the receive-tick time
        let stamp = gateway_time(k + 1, delta);
        next_out[g as usize] = match kind {
            ProtocolKind::SyncBaseline | ProtocolKind::Baf => Some(gateway_message(kind, g, stamp, gw_status)),
            ProtocolKind::Tsau => (k % cycle == 0).then(|| gateway_message(kind, g, stamp, false)),
            ProtocolKind::Uaf => {
                if k > 0 && uaf_gateway_cycle(gateway_time(k - gw_cycle_start, delta), layers.max_layer(), delta) {
                    gw_status = !gw_status;
                    gw_cycle_start = k;
                }
                Some(gateway_message(kind, g, stamp, gw_status))
            }
        };

        if let Some(m) = malicious {
            if let Some(msg) = next_out[m as usize].as_mut() {
                msg.time = noise[k as usize];
                mal_value = msg.time;
            }
        }

        let mut sent = 0u64;
        for msg in next_out.iter().flatten() {
            check_wire(msg, k)?;
            sent += topo.degree(msg.sender) as u64;
        }

        for i in 0..n as NodeId {
            let value = if i == g {
                gateway_time(k, delta)
            } else if Some(i) == malicious {
                mal_value
            } else {
                states[i as usize].estimate()
            };
            trace.estimate.push(value);
            trace.activated.push(activated[i as usize]);
            trace.frozen.push(states[i as usize].frozen);
        }
        trace.sent.push(sent);
        trace.delivered.push(delivered);
        outbox = next_out;
    }
    trace.dips = detectors.iter().map(DipDetector::fired).collect();
    Ok(trace)
}

/// Runs every config, in parallel, preserving order.
pub fn run_batch(configs: &[SimConfig]) -> Result<Vec<Trace>> {
    let results: Vec<Result<Trace>> = configs.par_iter().map(run).collect();
    let failures: Vec<(usize, Error)> = results
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.as_ref().err().map(|e| (i, e.clone())))
        .collect();
    if !failures.is_empty() {
        return Err(Error::Batch(failures));
    }
    Ok(results.into_iter().map(|r| r.expect("no failures")).collect())
}
