//! Experiment plumbing shared by the command-line runner and the test suite:
//! run specs with repeats, standard scenarios, protocol comparisons and the
//! link-availability sweep.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dip::{DELAY, WARMUP_OUTPUTS};
use crate::error::{Error, Result};
use crate::metrics::{dip_is_detectable, dip_metrics, median, to_csv, DipMetrics};
use crate::protocol::ProtocolKind;
use crate::rng::RngPlan;
use crate::sim::{run, SimConfig, TopologySpec, Trace, NOISE_ALPHA, NOISE_STD};
use crate::topology::Corner;

/// Seeds for `count` independent replicates of `base` (`replicate` stream).
pub fn replicate_seeds(base: u64, count: usize) -> Vec<u64> {
    let plan = RngPlan::new(base);
    (0..count as u64).map(|i| plan.replicate_seed(i)).collect()
}

fn default_repeat() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    #[serde(default = "default_repeat")]
    pub repeat: u32,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub sim: SimConfig,
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::ConfigRejected(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Loads a spec file; relative edge-list paths resolve against its folder.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut spec = ExperimentSpec::from_toml_str(&text)?;
        if let Some(dir) = path.parent() {
            spec.sim.topology.rebase(dir);
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let safe = !self.name.is_empty()
            && !self.name.starts_with('.')
            && self.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
        if !safe {
            return Err(Error::ConfigRejected(format!("name {:?} is not filesystem-safe", self.name)));
        }
        if self.repeat < 1 {
            return Err(Error::ConfigRejected("repeat must be at least 1".into()));
        }
        self.sim.validate()
    }

    /// One seed per repeat: the configured seed itself for a single run, derived
    /// replicate seeds otherwise.
    pub fn seeds(&self) -> Vec<u64> {
        if self.repeat == 1 {
            vec![self.sim.seed]
        } else {
            replicate_seeds(self.sim.seed, self.repeat as usize)
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub seed: u64,
    pub trace: Trace,
    pub metrics: DipMetrics,
}

/// Runs every repeat of `spec` (in parallel, order preserved).
pub fn execute(spec: &ExperimentSpec) -> Result<Vec<RunRecord>> {
    spec.validate()?;
    spec.seeds()
        .into_par_iter()
        .map(|seed| {
            let cfg = SimConfig { seed, ..spec.sim.clone() };
            let trace = run(&cfg)?;
            let metrics = dip_metrics(&trace)?;
            Ok(RunRecord { seed, trace, metrics })
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct MetricsLine {
    row: String,
    seed: String,
    e_dip_min_s: f64,
    k_dip_min: f64,
    v_k_dip: f64,
    detector_fired: f64,
    frozen: f64,
}

/// One row per repeat; with several repeats, `median`, `min` and `max` rows
/// follow.
pub fn metrics_csv(records: &[RunRecord]) -> Result<String> {
    let line = |row: String, seed: String, r: &RunRecord| {
        let honest = r.trace.honest_nodes();
        MetricsLine {
            row,
            seed,
            e_dip_min_s: r.metrics.e_dip_min,
            k_dip_min: r.metrics.k_dip_min,
            v_k_dip: r.metrics.v_k_dip,
            detector_fired: honest.iter().filter(|&&i| r.trace.dip(i).is_some()).count() as f64,
            frozen: honest.iter().filter(|&&i| r.trace.frozen_since(i).is_some()).count() as f64,
        }
    };
    let mut rows: Vec<MetricsLine> =
        records.iter().enumerate().map(|(i, r)| line(i.to_string(), r.seed.to_string(), r)).collect();
    if records.len() > 1 {
        let cols: Vec<[f64; 5]> = rows
            .iter()
            .map(|m| [m.e_dip_min_s, m.k_dip_min, m.v_k_dip, m.detector_fired, m.frozen])
            .collect();
        let stat = |f: &dyn Fn(&[f64]) -> f64, name: &str| {
            let pick = |c: usize| f(&cols.iter().map(|r| r[c]).collect::<Vec<_>>());
            MetricsLine {
                row: name.to_string(),
                seed: String::new(),
                e_dip_min_s: pick(0),
                k_dip_min: pick(1),
                v_k_dip: pick(2),
                detector_fired: pick(3),
                frozen: pick(4),
            }
        };
        let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let summary = [stat(&median, "median"), stat(&min, "min"), stat(&max, "max")];
        rows.extend(summary);
    }
    to_csv(&rows, &["row", "seed", "e_dip_min_s", "k_dip_min", "v_k_dip", "detector_fired", "frozen"])
}

#[derive(Serialize)]
struct Manifest<'a> {
    name: &'a str,
    repeat: u32,
    seeds: &'a [u64],
    crate_version: &'static str,
    noise_alpha: f64,
    noise_std_s: f64,
    dip_warmup_outputs: u32,
    dip_delay_samples: usize,
    rng_streams: [&'static str; 4],
    sim: &'a SimConfig,
}

/// TOML manifest echoing the resolved config, the seeds actually used and
/// the fixed model constants.
pub fn manifest(spec: &ExperimentSpec, seeds: &[u64]) -> String {
    use crate::rng::Stream;
    let m = Manifest {
        name: &spec.name,
        repeat: spec.repeat,
        seeds,
        crate_version: env!("CARGO_PKG_VERSION"),
        noise_alpha: NOISE_ALPHA,
        noise_std_s: NOISE_STD,
        dip_warmup_outputs: WARMUP_OUTPUTS,
        dip_delay_samples: DELAY,
        rng_streams: [Stream::InitClocks, Stream::Links, Stream::Noise, Stream::Replicate].map(Stream::label),
        sim: &spec.sim,
    };
    toml::to_string(&m).expect("manifest is representable")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Grid16,
    Line16,
    Malicious16,
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid16" => Ok(Scenario::Grid16),
            "line16" => Ok(Scenario::Line16),
            "malicious16" => Ok(Scenario::Malicious16),
            other => Err(Error::invalid(format!("unknown scenario {other:?} (grid16, line16, malicious16)"))),
        }
    }
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Grid16 => "grid16",
            Scenario::Line16 => "line16",
            Scenario::Malicious16 => "malicious16",
        }
    }

    /// Full error profiles (no freezing) on the 16-node networks.
    pub fn config(self, protocol: ProtocolKind, seed: u64) -> SimConfig {
        let topo = match self {
            Scenario::Line16 => TopologySpec::Line { n: 16 },
            _ => TopologySpec::Grid { rows: 4, cols: 4, corner: Corner::TopLeft },
        };
        let mut cfg = SimConfig::new(topo, protocol, seed);
        cfg.freeze_on_dip = false;
        cfg.malicious = self == Scenario::Malicious16;
        cfg
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolStudy {
    pub protocol: ProtocolKind,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<DipMetrics>,
}

impl ProtocolStudy {
    pub fn median(&self) -> DipMetrics {
        let pick = |f: fn(&DipMetrics) -> f64| median(&self.per_seed.iter().map(f).collect::<Vec<_>>());
        DipMetrics {
            nodes: Vec::new(),
            e_dip_min: pick(|m| m.e_dip_min),
            k_dip_min: pick(|m| m.k_dip_min),
            v_k_dip: pick(|m| m.v_k_dip),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub check: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub scenario: Scenario,
    pub studies: Vec<ProtocolStudy>,
    pub checks: Vec<Check>,
}

impl Comparison {
    pub fn study(&self, p: ProtocolKind) -> Option<&ProtocolStudy> {
        self.studies.iter().find(|s| s.protocol == p)
    }

    /// Median metrics per protocol.
    pub fn summary_csv(&self) -> String {
        let rows: Vec<_> = self.studies.iter().map(|s| (s.protocol, s.median())).collect();
        crate::metrics::summary_table(&rows)
    }

    pub fn checks_csv(&self) -> String {
        to_csv(&self.checks, &["check", "passed", "detail"]).expect("in-memory csv")
    }
}

/// Dip metrics of each protocol on a scenario over `seeds` replicates.
pub fn compare(scenario: Scenario, protocols: &[ProtocolKind], base_seed: u64, seeds: usize) -> Result<Comparison> {
    if protocols.is_empty() {
        return Err(Error::invalid("no protocols to compare"));
    }
    if seeds == 0 {
        return Err(Error::invalid("at least one seed is required"));
    }
    let seed_list = replicate_seeds(base_seed, seeds);
    let mut protocols = protocols.to_vec();
    protocols.sort();
    protocols.dedup();
    let studies = protocols
        .iter()
        .map(|&p| {
            let per_seed = seed_list
                .par_iter()
                .map(|&s| dip_metrics(&run(&scenario.config(p, s))?))
                .collect::<Result<Vec<_>>>()?;
            Ok(ProtocolStudy { protocol: p, seeds: seed_list.clone(), per_seed })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cmp = Comparison { scenario, studies, checks: Vec::new() };
    cmp.checks = ordering_checks(&cmp);
    Ok(cmp)
}

/// Majority threshold used for per-seed orderings: 8 of 11, scaled.
pub fn seed_quorum(seeds: usize) -> usize {
    (seeds * 8).div_ceil(11)
}

fn ordering_checks(cmp: &Comparison) -> Vec<Check> {
    use ProtocolKind::{Baf, Tsau, Uaf};
    let mut checks = Vec::new();
    let (t, u, b) = (cmp.study(Tsau), cmp.study(Uaf), cmp.study(Baf));
    match cmp.scenario {
        Scenario::Grid16 | Scenario::Line16 => {
            if let Some(u) = u {
                let zero = u.per_seed.iter().filter(|m| m.v_k_dip == 0.0).count();
                checks.push(Check {
                    check: "uaf_zero_variance".into(),
                    passed: zero == u.per_seed.len(),
                    detail: format!("V_k_dip = 0 in {zero}/{} seeds", u.per_seed.len()),
                });
            }
            if let (Some(t), Some(u), Some(b)) = (t, u, b) {
                let (et, eu, eb) = (t.median().e_dip_min, u.median().e_dip_min, b.median().e_dip_min);
                checks.push(Check {
                    check: "baf_lowest_error".into(),
                    passed: eb < et && eb < eu,
                    detail: format!("median E_dip_min tsau={et:.4e} uaf={eu:.4e} baf={eb:.4e}"),
                });
            }
        }
        Scenario::Malicious16 => {
            if let (Some(t), Some(u), Some(b)) = (t, u, b) {
                let n = b.per_seed.len();
                let var_hits = (0..n)
                    .filter(|&i| b.per_seed[i].v_k_dip > 10.0 * t.per_seed[i].v_k_dip.max(u.per_seed[i].v_k_dip))
                    .count();
                checks.push(Check {
                    check: "baf_variance_dominates".into(),
                    passed: var_hits >= seed_quorum(n),
                    detail: format!(
                        "V_baf > 10 max(V_tsau, V_uaf) in {var_hits}/{n} seeds; medians tsau={:.2} uaf={:.2} baf={:.2}",
                        t.median().v_k_dip,
                        u.median().v_k_dip,
                        b.median().v_k_dip
                    ),
                });
                let slow_hits = (0..n)
                    .filter(|&i| {
                        let ku = u.per_seed[i].k_dip_min;
                        ku > t.per_seed[i].k_dip_min && ku > b.per_seed[i].k_dip_min
                    })
                    .count();
                checks.push(Check {
                    check: "uaf_slowest".into(),
                    passed: slow_hits >= seed_quorum(n),
                    detail: format!(
                        "k_uaf largest in {slow_hits}/{n} seeds; medians tsau={:.1} uaf={:.1} baf={:.1}",
                        t.median().k_dip_min,
                        u.median().k_dip_min,
                        b.median().k_dip_min
                    ),
                });
            }
        }
    }
    checks
}

/// Results of one link probability in a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub p: f64,
    pub seeds: usize,
    /// Median over seeds of the mean per-node minimum error.
    pub e_dip_min_median_s: f64,
    /// Fraction of seeds in which every node shows a detectable dip.
    pub persist_fraction: f64,
    /// Dip persists in a majority of seeds.
    pub dip_persists: bool,
}

/// 3×3 grid with a corner gateway: the layered network used for the
/// link-availability study.
pub fn sweep_config(protocol: ProtocolKind, p: f64, seed: u64) -> SimConfig {
    let mut cfg = SimConfig::new(TopologySpec::Grid { rows: 3, cols: 3, corner: Corner::TopLeft }, protocol, seed);
    cfg.link_p = p;
    cfg.freeze_on_dip = false;
    cfg
}

pub fn sweep_links(protocol: ProtocolKind, ps: &[f64], base_seed: u64, seeds: usize) -> Result<Vec<SweepRow>> {
    if ps.is_empty() {
        return Err(Error::invalid("empty probability list"));
    }
    if let Some(bad) = ps.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("link probability {bad} outside [0, 1]")));
    }
    if seeds == 0 {
        return Err(Error::invalid("at least one seed is required"));
    }
    let seed_list = replicate_seeds(base_seed, seeds);
    ps.iter()
        .map(|&p| {
            let outcomes = seed_list
                .par_iter()
                .map(|&s| {
                    let trace = run(&sweep_config(protocol, p, s))?;
                    let m = dip_metrics(&trace)?;
                    let all = m.nodes.iter().all(|d| dip_is_detectable(&trace, d));
                    Ok((m.e_dip_min, all))
                })
                .collect::<Result<Vec<_>>>()?;
            let errs: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
            let persist = outcomes.iter().filter(|o| o.1).count();
            Ok(SweepRow {
                p,
                seeds,
                e_dip_min_median_s: median(&errs),
                persist_fraction: persist as f64 / seeds as f64,
                dip_persists: 2 * persist > seeds,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    to_csv(rows, &["p", "seeds", "e_dip_min_median_s", "persist_fraction", "dip_persists"]).expect("in-memory csv")
}
