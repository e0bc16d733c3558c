//! Realized rates on the true channel and per-packet delay.

use std::fmt;
use std::str::FromStr;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::beamforming::{compute_sinrs, shannon_rate, throttle_fronthaul, BeamformingSolution, RateVector};
use crate::channel::{ChannelMatrix, ChannelView};
use crate::error::{Error, Result};
use crate::prescheduler::Clustering;
use crate::scalar::Real;
use crate::topology::NetworkTopology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Centralized WMMSE on imperfect global CSI.
    CranRef,
    /// Pre-scheduled clusters with local SLNR beamforming.
    FogranProp,
}

impl Scheme {
    pub const ALL: [Scheme; 2] = [Scheme::CranRef, Scheme::FogranProp];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::CranRef => "cran-ref",
            Scheme::FogranProp => "fogran-prop",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown scheme {s:?}")))
    }
}

/// Checks that every user's beam lives only in its assigned AP's block.
pub fn check_block_sparse<T: Real>(solution: &BeamformingSolution<T>, clustering: &Clustering) -> Result<()> {
    if clustering.num_users() != solution.num_users() || clustering.num_aps() != solution.num_aps() {
        return Err(Error::Shape("clustering does not match the solution".into()));
    }
    for k in 0..solution.num_users() {
        let assigned = clustering.serving_ap(k);
        if let Some(r) = (0..solution.num_aps())
            .find(|&r| r != assigned && solution.block(r, k).iter().any(|z| !z.is_zero()))
        {
            return Err(Error::NotBlockSparse { user: k, ap: r, assigned });
        }
    }
    Ok(())
}

/// Network-wide SINRs and rates on the true channel, throttled per AP.
///
/// With a clustering the served sets are the clusters and the solution
/// must be block-sparse over them; without one a user counts as served by
/// AP `r` when `||w_rk||^2 > active_threshold * P_r / K`.
pub fn realized_rates<T: Real>(
    true_channel: &ChannelMatrix<T>,
    solution: &BeamformingSolution<T>,
    topology: &NetworkTopology,
    clustering: Option<&Clustering>,
    active_threshold: f64,
) -> Result<RateVector<T>> {
    solution.check_shape(true_channel)?;
    if topology.antennas() != true_channel.antennas() || topology.num_users() != true_channel.num_users() {
        return Err(Error::Shape("topology and channel disagree".into()));
    }
    let served = match clustering {
        Some(cl) => {
            check_block_sparse(solution, cl)?;
            cl.per_ap_sets().to_vec()
        }
        None => {
            let k_total = topology.num_users() as f64;
            let thresholds: Vec<T> = topology
                .aps
                .iter()
                .map(|a| T::lit(active_threshold * a.max_power / k_total))
                .collect();
            solution.served_sets(&thresholds)
        }
    };
    let capacities: Vec<T> = topology.aps.iter().map(|a| T::lit(a.fronthaul_capacity)).collect();
    let sinrs = compute_sinrs(true_channel, solution);
    let mut rates: Vec<T> = sinrs
        .iter()
        .map(|&g| shannon_rate(true_channel.bandwidth(), g))
        .collect();
    throttle_fronthaul(&mut rates, &served, &capacities);
    Ok(RateVector { rates, sinrs })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayStats {
    /// Seconds; infinite for users with zero rate.
    pub per_user: Vec<f64>,
    /// Mean over finite delays; infinite when no user has a positive rate.
    pub mean: f64,
    pub zero_rate_users: usize,
}

/// `latency + P / R_k` per user.
pub fn packet_delay(rates: &[f64], packet_bits: f64, latency_s: f64) -> Result<DelayStats> {
    if !(packet_bits > 0.0) || !packet_bits.is_finite() {
        return Err(Error::invalid("packet_bits", "must be positive"));
    }
    if !(latency_s >= 0.0) || !latency_s.is_finite() {
        return Err(Error::invalid("latency", "must be finite and non-negative"));
    }
    let per_user: Vec<f64> = rates
        .iter()
        .map(|&r| if r > 0.0 { latency_s + packet_bits / r } else { f64::INFINITY })
        .collect();
    let finite: Vec<f64> = per_user.iter().copied().filter(|d| d.is_finite()).collect();
    let mean = if finite.is_empty() {
        f64::INFINITY
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    Ok(DelayStats {
        zero_rate_users: per_user.len() - finite.len(),
        per_user,
        mean,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub scheme: Scheme,
    pub error_variance: f64,
    pub packet_bits: f64,
    pub per_user_rate: Vec<f64>,
    pub per_user_delay: Vec<f64>,
    pub sum_rate: f64,
    pub mean_delay: f64,
    pub zero_rate_users: usize,
}

impl MetricsReport {
    pub fn new(
        scheme: Scheme,
        error_variance: f64,
        packet_bits: f64,
        per_user_rate: Vec<f64>,
        latency_s: f64,
    ) -> Result<Self> {
        let delay = packet_delay(&per_user_rate, packet_bits, latency_s)?;
        Ok(Self {
            scheme,
            error_variance,
            packet_bits,
            sum_rate: per_user_rate.iter().sum(),
            per_user_rate,
            per_user_delay: delay.per_user,
            mean_delay: delay.mean,
            zero_rate_users: delay.zero_rate_users,
        })
    }
}
