//! Centralized user-to-AP clustering on outdated CSI.
//!
//! The weighted sum-rate engine is rerun with an extra reweighted
//! group-sparsity penalty `c / (||w_rk||^2 + tau) * ||w_rk||^2` whose
//! weight `c` grows geometrically per outer pass. Once every user's power
//! sits almost entirely in one AP, the support is hard-assigned.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::beamforming::BeamformingSolution;
use crate::channel::{ChannelView, NoisyChannelMatrix};
use crate::error::{Error, Result};
use crate::linalg::norm_sqr;
use crate::scalar::Real;
use crate::topology::NetworkTopology;
use crate::wsr::{optimize, GroupSparsity, SolverParams, SolverReport, Start};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreschedParams {
    /// Sparsity weight in the first pass, nats per active block.
    pub initial_weight: f64,
    pub growth: f64,
    pub passes: usize,
    pub tau: f64,
    /// Fraction of a user's power that must sit in one AP to stop early.
    pub concentration: f64,
}

impl Default for PreschedParams {
    fn default() -> Self {
        Self {
            initial_weight: 1e-2,
            growth: 2.0,
            passes: 10,
            tau: 1e-8,
            concentration: 0.95,
        }
    }
}

impl PreschedParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_weight >= 0.0) || !self.initial_weight.is_finite() {
            return Err(Error::invalid("initial_weight", "must be finite and non-negative"));
        }
        if !(self.growth >= 1.0) || !self.growth.is_finite() {
            return Err(Error::invalid("growth", "must be at least 1"));
        }
        if self.passes == 0 {
            return Err(Error::invalid("passes", "must be at least 1"));
        }
        if !(self.tau > 0.0) {
            return Err(Error::invalid("tau", "must be positive"));
        }
        if !(self.concentration > 0.0 && self.concentration <= 1.0) {
            return Err(Error::invalid("concentration", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Exact partition of users over APs. Empty clusters are allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    assignment: Vec<usize>,
    per_ap_sets: Vec<Vec<usize>>,
}

impl Clustering {
    pub fn from_assignment(assignment: Vec<usize>, num_aps: usize) -> Result<Self> {
        let mut per_ap_sets = vec![Vec::new(); num_aps];
        for (k, &r) in assignment.iter().enumerate() {
            if r >= num_aps {
                return Err(Error::invalid("assignment", format!("user {k} mapped to missing AP {r}")));
            }
            per_ap_sets[r].push(k);
        }
        Ok(Self {
            assignment,
            per_ap_sets,
        })
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn serving_ap(&self, k: usize) -> usize {
        self.assignment[k]
    }

    pub fn per_ap_sets(&self) -> &[Vec<usize>] {
        &self.per_ap_sets
    }

    pub fn num_users(&self) -> usize {
        self.assignment.len()
    }

    pub fn num_aps(&self) -> usize {
        self.per_ap_sets.len()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["user_id", "ap_id"])?;
        for (k, r) in self.assignment.iter().enumerate() {
            w.write_record([k.to_string(), r.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the `user_id,ap_id` form back. Users must appear exactly once.
    pub fn read_csv<R: Read>(input: R, num_aps: usize) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let mut pairs = Vec::new();
        for row in rd.records() {
            let row = row?;
            let field = |i: usize, name: &str| -> Result<usize> {
                row.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Parse(format!("bad {name} in clustering row {:?}", row.position().map(|p| p.line()))))
            };
            pairs.push((field(0, "user_id")?, field(1, "ap_id")?));
        }
        let mut assignment = vec![usize::MAX; pairs.len()];
        for (k, r) in pairs {
            if k >= assignment.len() || assignment[k] != usize::MAX {
                return Err(Error::Parse(format!("user {k} missing or repeated")));
            }
            assignment[k] = r;
        }
        Self::from_assignment(assignment, num_aps)
    }
}

#[derive(Debug, Clone)]
pub struct PreSchedule {
    pub clustering: Clustering,
    pub valid_for_frames: usize,
    pub based_on_error_variance: f64,
    pub report: SolverReport,
}

/// Hard-assigns each user to the AP holding most of its power, lowest
/// index on ties. A user with no active block (every `||w_rk||^2` at or
/// below `active_threshold * P_r / K`) goes to the AP with the strongest
/// `||h_rk||^2 * P_r` on the estimated channel instead: the argmax over
/// leftover numerical dust says nothing about where the user belongs.
pub fn extract_clustering<T: Real>(
    solution: &BeamformingSolution<T>,
    noisy: &NoisyChannelMatrix<T>,
    topology: &NetworkTopology,
    active_threshold: f64,
) -> Result<Clustering> {
    solution.check_shape(noisy)?;
    let k_total = solution.num_users() as f64;
    let thresholds: Vec<T> = topology
        .aps
        .iter()
        .map(|a| T::lit(active_threshold * a.max_power / k_total))
        .collect();
    let argmax = |score: &dyn Fn(usize) -> T| {
        let mut best = 0;
        let mut best_val = score(0);
        for r in 1..solution.num_aps() {
            let v = score(r);
            if v > best_val {
                best = r;
                best_val = v;
            }
        }
        (best, best_val)
    };
    let assignment = (0..solution.num_users())
        .map(|k| {
            let (r, _) = argmax(&|r| solution.block_power(r, k));
            let active = (0..solution.num_aps()).any(|r| solution.block_power(r, k) > thresholds[r]);
            if active {
                r
            } else {
                argmax(&|r| norm_sqr(noisy.block(r, k)) * T::lit(topology.aps[r].max_power)).0
            }
        })
        .collect();
    Clustering::from_assignment(assignment, solution.num_aps())
}

pub fn preschedule<T: Real>(
    noisy: &NoisyChannelMatrix<T>,
    topology: &NetworkTopology,
    solver: &SolverParams,
    params: &PreschedParams,
    valid_for_frames: usize,
) -> Result<PreSchedule> {
    params.validate()?;
    if valid_for_frames == 0 {
        return Err(Error::invalid("valid_for_frames", "must be at least 1"));
    }
    let sparsity = GroupSparsity {
        initial_weight: params.initial_weight,
        growth: params.growth,
        passes: params.passes,
        tau: params.tau,
        concentration: params.concentration,
    };
    let out = optimize(noisy, topology, solver, Some(&sparsity), Start::Matched)?;
    Ok(PreSchedule {
        clustering: extract_clustering(&out.last, noisy, topology, solver.active_threshold)?,
        valid_for_frames,
        based_on_error_variance: noisy.error_variance().to_f64_lossy(),
        report: out.report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelMatrix;
    use crate::scalar::Cplx;
    use crate::topology::{AccessPoint, ApKind, Position, User};
    use num_complex::Complex;

    fn c(re: f64, im: f64) -> Cplx<f64> {
        Complex::new(re, im)
    }

    fn topo(aps: usize, users: usize, antennas: usize) -> NetworkTopology {
        NetworkTopology::new(
            (0..aps)
                .map(|r| AccessPoint {
                    id: r,
                    kind: ApKind::Pico,
                    position: Position { x: 100.0 * r as f64, y: 0.0 },
                    antennas,
                    max_power: 1.0,
                    fronthaul_capacity: 1e9,
                })
                .collect(),
            (0..users)
                .map(|k| User {
                    id: k,
                    position: Position { x: 10.0 + 7.0 * k as f64, y: 50.0 },
                    weight: 1.0,
                })
                .collect(),
            1000.0,
        )
        .unwrap()
    }

    fn noisy(blocks: Vec<Vec<Vec<Cplx<f64>>>>) -> NoisyChannelMatrix<f64> {
        NoisyChannelMatrix::exact(&ChannelMatrix::from_blocks(blocks, 1e6, 1e-12).unwrap())
    }

    #[test]
    fn single_ap_takes_everyone() {
        let t = topo(1, 3, 2);
        let ch = noisy(vec![vec![vec![c(1e-3, 0.0), c(0.0, 2e-4)]; 3]]);
        let ps = preschedule(&ch, &t, &SolverParams::default(), &PreschedParams::default(), 10).unwrap();
        assert_eq!(ps.clustering.assignment(), &[0, 0, 0]);
        assert_eq!(ps.valid_for_frames, 10);
    }

    #[test]
    fn block_diagonal_channels() {
        let t = topo(2, 2, 1);
        let z = c(0.0, 0.0);
        let h = c(1e-3, 0.0);
        let ch = noisy(vec![vec![vec![z], vec![h]], vec![vec![h], vec![z]]]);
        let ps = preschedule(&ch, &t, &SolverParams::default(), &PreschedParams::default(), 10).unwrap();
        assert_eq!(ps.clustering.assignment(), &[1, 0]);
    }

    #[test]
    fn argmax_and_ties() {
        let t = topo(2, 3, 1);
        let ch = noisy(vec![vec![vec![c(1.0, 0.0)]; 3]; 2]);
        let mut sol = BeamformingSolution::zeros(&[1, 1], 3);
        sol.set_block(0, 0, &[c(0.4f64.sqrt(), 0.0)]).unwrap();
        sol.set_block(1, 0, &[c(0.6f64.sqrt(), 0.0)]).unwrap();
        sol.set_block(0, 1, &[c(0.5f64.sqrt(), 0.0)]).unwrap();
        sol.set_block(1, 1, &[c(0.0, 0.5f64.sqrt())]).unwrap();
        sol.set_block(1, 2, &[c(0.3, 0.0)]).unwrap();
        let cl = extract_clustering(&sol, &ch, &t, 1e-6).unwrap();
        assert_eq!(cl.assignment(), &[1, 0, 1]);
    }

    #[test]
    fn zero_user_falls_back_to_strongest_channel() {
        let t = topo(3, 1, 1);
        let ch = noisy(vec![vec![vec![c(0.1, 0.0)]], vec![vec![c(0.0, 0.5)]], vec![vec![c(0.2, 0.2)]]]);
        let sol = BeamformingSolution::zeros(&[1, 1, 1], 1);
        assert_eq!(extract_clustering(&sol, &ch, &t, 1e-6).unwrap().assignment(), &[1]);
    }

    #[test]
    fn partition_sets_and_csv_roundtrip() {
        let cl = Clustering::from_assignment(vec![2, 0, 2, 1], 4).unwrap();
        assert_eq!(cl.per_ap_sets(), &[vec![1], vec![3], vec![0, 2], vec![]]);
        let mut buf = Vec::new();
        cl.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("user_id,ap_id\n0,2\n"));
        assert_eq!(Clustering::read_csv(&buf[..], 4).unwrap(), cl);
        assert!(Clustering::from_assignment(vec![0, 5], 2).is_err());
        assert!(Clustering::read_csv("user_id,ap_id\n0,1\n0,1\n".as_bytes(), 2).is_err());
    }

    #[test]
    fn rejects_bad_params() {
        for p in [
            PreschedParams { passes: 0, ..Default::default() },
            PreschedParams { growth: 0.5, ..Default::default() },
            PreschedParams { concentration: 1.5, ..Default::default() },
            PreschedParams { tau: 0.0, ..Default::default() },
        ] {
            assert!(p.validate().is_err());
        }
    }
}
