//! Monte-Carlo driver comparing the two schemes over a CSI-error sweep.
//!
//! Work is split into independent `(scheme, error variance, drop)` cells.
//! Every random draw is keyed on the cell coordinates, never on execution
//! order, so results do not depend on the thread count. Topology, shadowing
//! and fading are keyed on `(drop, frame)` only: both schemes and every
//! sweep point see the same true channels.
//!
//! Information flow is enforced by types: pre-scheduling and the WSR solver
//! accept only a [`NoisyChannelMatrix`], while local SLNR beamforming builds
//! its [`LocalCsi`](crate::slnr::LocalCsi) from the true [`ChannelMatrix`].

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{corrupt_csi, draw_large_scale, ChannelMatrix, ChannelParams, NoisyChannelMatrix};
use crate::error::{Error, Result};
use crate::metrics::{packet_delay, realized_rates, Scheme};
use crate::prescheduler::{preschedule, Clustering, PreschedParams};
use crate::slnr::{beamform_network, LeakageScope};
use crate::topology::{build_topology, NetworkTopology, TopologyConfig};
use crate::wsr::{solve_wsr, SolverParams};

/// Fully resolved experiment, SI units throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub topology: TopologyConfig,
    pub channel: ChannelParams,
    pub solver: SolverParams,
    pub presched: PreschedParams,
    /// CSI error variances.
    pub sweep: Vec<f64>,
    pub drops: usize,
    pub frames_per_drop: usize,
    /// Frames between pre-scheduling runs.
    pub preschedule_period: usize,
    pub packet_sizes_bits: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub master_seed: u64,
    pub leakage_scope: LeakageScope,
    /// Fixed transport latency added to every packet delay, seconds.
    pub cran_latency_s: f64,
    pub fogran_latency_s: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        self.channel.validate()?;
        self.solver.validate()?;
        self.presched.validate()?;
        if self.sweep.is_empty() {
            return Err(Error::invalid("sweep", "needs at least one error variance"));
        }
        if let Some((i, v)) = self.sweep.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("sweep", format!("entry {i} ({v}) must be finite and non-negative")));
        }
        if self.drops == 0 {
            return Err(Error::invalid("drops", "must be at least 1"));
        }
        if self.preschedule_period == 0 {
            return Err(Error::invalid("preschedule_period", "must be at least 1"));
        }
        if self.frames_per_drop < self.preschedule_period {
            return Err(Error::invalid(
                "frames_per_drop",
                format!("must be at least preschedule_period ({})", self.preschedule_period),
            ));
        }
        if self.packet_sizes_bits.is_empty() {
            return Err(Error::invalid("packet_sizes", "needs at least one packet size"));
        }
        if let Some(p) = self.packet_sizes_bits.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
            return Err(Error::invalid("packet_sizes", format!("{p} is not a positive size")));
        }
        if self.schemes.is_empty() {
            return Err(Error::invalid("schemes", "needs at least one scheme"));
        }
        for (name, v) in [("latency.cran_ms", self.cran_latency_s), ("latency.fogran_ms", self.fogran_latency_s)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, "must be finite and non-negative"));
            }
        }
        Ok(())
    }

    fn latency(&self, scheme: Scheme) -> f64 {
        match scheme {
            Scheme::CranRef => self.cran_latency_s,
            Scheme::FogranProp => self.fogran_latency_s,
        }
    }
}

mod stream {
    pub const TOPOLOGY: u64 = 1;
    pub const LARGE_SCALE: u64 = 2;
    pub const FADING: u64 = 3;
    pub const CSI: u64 = 4;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one random stream, a pure function of its coordinates.
pub fn derive_seed(master: u64, stream: u64, coords: &[u64]) -> u64 {
    let mut h = splitmix(master ^ splitmix(stream));
    for &c in coords {
        h = splitmix(h ^ splitmix(c.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    h
}

fn scheme_code(s: Scheme) -> u64 {
    match s {
        Scheme::CranRef => 0,
        Scheme::FogranProp => 1,
    }
}

/// Topology and the true per-frame channels of one drop.
pub struct DropChannels {
    pub topology: NetworkTopology,
    pub frames: Vec<ChannelMatrix<f64>>,
}

pub fn drop_channels(scenario: &Scenario, drop: usize) -> Result<DropChannels> {
    let master = scenario.master_seed;
    let d = drop as u64;
    let topology = build_topology(&TopologyConfig {
        seed: derive_seed(master, stream::TOPOLOGY, &[d]),
        ..scenario.topology.clone()
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master, stream::LARGE_SCALE, &[d]));
    let large = draw_large_scale(&topology, &scenario.channel, &mut rng);
    let frames = (0..scenario.frames_per_drop)
        .map(|f| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master, stream::FADING, &[d, f as u64]));
            ChannelMatrix::draw_fading(&topology, &large, &scenario.channel, &mut rng)
        })
        .collect();
    Ok(DropChannels { topology, frames })
}

fn estimate(
    scenario: &Scenario,
    scheme: Scheme,
    sigma_index: usize,
    drop: usize,
    frame: usize,
    channel: &ChannelMatrix<f64>,
) -> Result<NoisyChannelMatrix<f64>> {
    let seed = derive_seed(
        scenario.master_seed,
        stream::CSI,
        &[scheme_code(scheme), sigma_index as u64, drop as u64, frame as u64],
    );
    corrupt_csi(channel, scenario.sweep[sigma_index], seed)
}

/// Per-frame realized rates of one scheme over one drop.
#[derive(Debug, Clone, PartialEq)]
pub struct CellTrace {
    /// `rates[frame][user]`, bits/second.
    pub rates: Vec<Vec<f64>>,
    /// Solver runs (WSR solves or pre-schedules) that met their tolerance.
    pub converged_runs: usize,
    pub solver_runs: usize,
    pub clusterings: Vec<Clustering>,
}

impl CellTrace {
    /// Mean over frames of each user's rate.
    pub fn per_user_throughput(&self) -> Vec<f64> {
        let frames = self.rates.len() as f64;
        let k_total = self.rates.first().map_or(0, Vec::len);
        (0..k_total)
            .map(|k| self.rates.iter().map(|r| r[k]).sum::<f64>() / frames)
            .collect()
    }
}

pub fn run_cell(
    scenario: &Scenario,
    channels: &DropChannels,
    scheme: Scheme,
    sigma_index: usize,
    drop: usize,
) -> Result<CellTrace> {
    let topo = &channels.topology;
    let threshold = scenario.solver.active_threshold;
    let mut trace = CellTrace {
        rates: Vec::with_capacity(channels.frames.len()),
        converged_runs: 0,
        solver_runs: 0,
        clusterings: Vec::new(),
    };
    match scheme {
        Scheme::CranRef => {
            for (f, h) in channels.frames.iter().enumerate() {
                let noisy = estimate(scenario, scheme, sigma_index, drop, f, h)?;
                let out = solve_wsr(&noisy, topo, &scenario.solver)?;
                trace.solver_runs += 1;
                trace.converged_runs += usize::from(out.report.converged);
                let rv = realized_rates(h, &out.solution, topo, None, threshold)?;
                trace.rates.push(rv.rates);
            }
        }
        Scheme::FogranProp => {
            let powers: Vec<f64> = topo.aps.iter().map(|a| a.max_power).collect();
            for (f, h) in channels.frames.iter().enumerate() {
                if f % scenario.preschedule_period == 0 {
                    let noisy = estimate(scenario, scheme, sigma_index, drop, f, h)?;
                    let ps = preschedule(
                        &noisy,
                        topo,
                        &scenario.solver,
                        &scenario.presched,
                        scenario.preschedule_period,
                    )?;
                    trace.solver_runs += 1;
                    trace.converged_runs += usize::from(ps.report.converged);
                    trace.clusterings.push(ps.clustering);
                }
                let clustering = trace.clusterings.last().expect("scheduled at frame 0");
                let sol = beamform_network(h, clustering.per_ap_sets(), &powers, scenario.leakage_scope)?;
                let rv = realized_rates(h, &sol, topo, Some(clustering), threshold)?;
                trace.rates.push(rv.rates);
            }
        }
    }
    Ok(trace)
}

pub const RAW_SCHEMA: &str = "fogran-raw/1";
pub const AGG_SCHEMA: &str = "fogran-agg/1";

/// One `(scheme, error variance, drop, packet size)` outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub scheme: Scheme,
    pub sigma_index: usize,
    pub error_variance: f64,
    pub drop: usize,
    pub packet_bits: f64,
    /// Mean over frames of the network sum-rate, bits/second.
    pub sum_rate_bps: f64,
    /// Mean over served users of `latency + P / throughput`, seconds.
    pub mean_delay_s: f64,
    pub zero_rate_users: usize,
    pub solver_runs: usize,
    pub converged_runs: usize,
    /// Empty on success, otherwise the error that aborted the cell.
    pub error: String,
}

impl RawRow {
    pub fn ok(&self) -> bool {
        self.error.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggRow {
    pub scheme: Scheme,
    pub sigma_index: usize,
    pub error_variance: f64,
    pub packet_bits: f64,
    pub drops: usize,
    pub failed_drops: usize,
    pub sum_rate_mean_bps: f64,
    /// Half-width of the normal 95% interval.
    pub sum_rate_ci95_bps: f64,
    /// Drops whose mean delay is finite.
    pub delay_drops: usize,
    pub mean_delay_mean_s: f64,
    pub mean_delay_ci95_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResults {
    pub raw: Vec<RawRow>,
    pub agg: Vec<AggRow>,
}

/// Sample mean and 95% half-width; the half-width is 0 for a single sample.
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * (var / n as f64).sqrt())
}

fn rows_for_cell(scenario: &Scenario, scheme: Scheme, sigma_index: usize, drop: usize, outcome: Result<CellTrace>) -> Vec<RawRow> {
    let base = |packet_bits: f64| RawRow {
        scheme,
        sigma_index,
        error_variance: scenario.sweep[sigma_index],
        drop,
        packet_bits,
        sum_rate_bps: f64::NAN,
        mean_delay_s: f64::NAN,
        zero_rate_users: 0,
        solver_runs: 0,
        converged_runs: 0,
        error: String::new(),
    };
    scenario
        .packet_sizes_bits
        .iter()
        .map(|&p| {
            let mut row = base(p);
            let filled = outcome.as_ref().map_err(|e| e.to_string()).and_then(|trace| {
                let throughput = trace.per_user_throughput();
                let delay = packet_delay(&throughput, p, scenario.latency(scheme)).map_err(|e| e.to_string())?;
                row.sum_rate_bps = trace.rates.iter().map(|r| r.iter().sum::<f64>()).sum::<f64>() / trace.rates.len() as f64;
                row.mean_delay_s = delay.mean;
                row.zero_rate_users = delay.zero_rate_users;
                row.solver_runs = trace.solver_runs;
                row.converged_runs = trace.converged_runs;
                Ok(())
            });
            if let Err(msg) = filled {
                row.error = msg;
            }
            row
        })
        .collect()
}

/// Aggregates raw rows per `(scheme, error variance, packet size)`, in the
/// order the groups first appear.
pub fn aggregate(raw: &[RawRow]) -> Vec<AggRow> {
    let mut keys: Vec<(Scheme, usize, u64)> = Vec::new();
    for row in raw {
        let key = (row.scheme, row.sigma_index, row.packet_bits.to_bits());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(scheme, sigma_index, bits)| {
            let group: Vec<&RawRow> = raw
                .iter()
                .filter(|r| r.scheme == scheme && r.sigma_index == sigma_index && r.packet_bits.to_bits() == bits)
                .collect();
            let ok: Vec<&RawRow> = group.iter().copied().filter(|r| r.ok()).collect();
            let rates: Vec<f64> = ok.iter().map(|r| r.sum_rate_bps).collect();
            let delays: Vec<f64> = ok.iter().map(|r| r.mean_delay_s).filter(|d| d.is_finite()).collect();
            let (rate_mean, rate_ci) = mean_ci95(&rates);
            let (delay_mean, delay_ci) = mean_ci95(&delays);
            AggRow {
                scheme,
                sigma_index,
                error_variance: group[0].error_variance,
                packet_bits: f64::from_bits(bits),
                drops: group.len(),
                failed_drops: group.len() - ok.len(),
                sum_rate_mean_bps: rate_mean,
                sum_rate_ci95_bps: rate_ci,
                delay_drops: delays.len(),
                mean_delay_mean_s: delay_mean,
                mean_delay_ci95_s: delay_ci,
            }
        })
        .collect()
}

/// Runs every cell on the current rayon pool. Rows come back ordered by
/// scheme, sweep index, drop, packet size regardless of scheduling. A
/// failing cell yields rows carrying its error; the run continues.
pub fn run_scenario(scenario: &Scenario) -> Result<RunResults> {
    scenario.validate()?;
    let drops: Vec<Result<DropChannels>> = (0..scenario.drops)
        .into_par_iter()
        .map(|d| drop_channels(scenario, d))
        .collect();
    let cells: Vec<(Scheme, usize, usize)> = scenario
        .schemes
        .iter()
        .flat_map(|&s| (0..scenario.sweep.len()).flat_map(move |i| (0..scenario.drops).map(move |d| (s, i, d))))
        .collect();
    let raw: Vec<RawRow> = cells
        .par_iter()
        .flat_map_iter(|&(scheme, i, d)| {
            let outcome = match &drops[d] {
                Ok(ch) => run_cell(scenario, ch, scheme, i, d),
                Err(e) => Err(Error::Parse(format!("drop {d} setup failed: {e}"))),
            };
            rows_for_cell(scenario, scheme, i, d, outcome)
        })
        .collect();
    let agg = aggregate(&raw);
    Ok(RunResults { raw, agg })
}

fn write_with_schema<W: Write, R: Serialize>(mut out: W, schema: &str, rows: &[R]) -> Result<()> {
    writeln!(out, "# schema: {schema}")?;
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_raw_csv<W: Write>(out: W, rows: &[RawRow]) -> Result<()> {
    write_with_schema(out, RAW_SCHEMA, rows)
}

pub fn write_agg_csv<W: Write>(out: W, rows: &[AggRow]) -> Result<()> {
    write_with_schema(out, AGG_SCHEMA, rows)
}

/// Reads a raw CSV written by [`write_raw_csv`], checking its schema line.
pub fn read_raw_csv<R: Read>(mut input: R) -> Result<Vec<RawRow>> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let (first, body) = text.split_once('\n').unwrap_or((&text, ""));
    let expected = format!("# schema: {RAW_SCHEMA}");
    if first.trim_end() != expected {
        return Err(Error::Parse(format!(
            "line 1: expected {expected:?}, found {:?}",
            first.trim_end()
        )));
    }
    csv::Reader::from_reader(body.as_bytes())
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::Parse(format!("line {}: {e}", i + 3))))
        .collect()
}
