//! Centralized weighted sum-rate beamforming under per-AP power and
//! fronthaul constraints.
//!
//! The solver is a block-coordinate WMMSE:
//!
//! 1. MMSE receive scalars `u_k` and MSE weights `omega_k = alpha_k / e_k`;
//! 2. for each AP in turn, the blocks `w_rk` minimize the weighted MSE
//!    surrogate under `sum_k ||w_rk||^2 <= P_r`, with the AP's power
//!    multiplier found by bisection on a shared eigendecomposition.
//!
//! The fronthaul constraint `sum_{k served by r} R_k <= C_r` is smoothed
//! with a reweighted indicator, `1[w_rk != 0] ~ ||w_rk||^2 / (||w_rk^prev||^2 + tau)`,
//! and enforced by per-AP dual multipliers updated by projected
//! subgradient steps between WMMSE passes. Within a pass every penalty
//! coefficient is frozen, so the penalized objective
//! `sum_k alpha_k ln(1 + sinr_k) - sum_rk c_rk ||w_rk||^2` never decreases.

use std::io::Write;

use num_complex::Complex;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::beamforming::{
    compute_sinrs, cross_gains, shannon_rate, sinrs_from_gains, throttle_fronthaul,
    BeamformingSolution, RateVector,
};
use crate::channel::{ChannelMatrix, ChannelView, NoisyChannelMatrix};
use crate::error::{Error, Result};
use crate::linalg::{dot_h, norm_sqr, CMatrix};
use crate::scalar::{Cplx, Real};
use crate::topology::NetworkTopology;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    pub max_inner_iterations: usize,
    /// Relative objective change that ends a WMMSE pass.
    pub tolerance: f64,
    /// Smoothing constant of the reweighted support indicator, watts.
    pub smoothing_tau: f64,
    /// Step of the fronthaul multiplier update (per unit of relative overload).
    pub dual_step: f64,
    pub max_dual_updates: usize,
    /// AP `r` serves user `k` when `||w_rk||^2 > active_threshold * P_r / K`.
    pub active_threshold: f64,
    /// Besides the matched even-split start, also start from "each AP on
    /// its strongest user" and "each user on its strongest AP", keeping the
    /// best result. WMMSE only finds local optima.
    pub multi_start: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            max_inner_iterations: 200,
            tolerance: 1e-5,
            smoothing_tau: 1e-8,
            dual_step: 0.5,
            max_dual_updates: 50,
            active_threshold: 1e-6,
            multi_start: true,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_inner_iterations == 0 {
            return Err(Error::invalid("max_inner_iterations", "must be at least 1"));
        }
        if self.max_dual_updates == 0 {
            return Err(Error::invalid("max_dual_updates", "must be at least 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance", "must be positive"));
        }
        if !(self.smoothing_tau > 0.0) {
            return Err(Error::invalid("smoothing_tau", "must be positive"));
        }
        if !(self.dual_step >= 0.0) {
            return Err(Error::invalid("dual_step", "must be non-negative"));
        }
        if !(self.active_threshold > 0.0) {
            return Err(Error::invalid("active_threshold", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    /// Penalized objective (nats) after every WMMSE iteration, including
    /// the starting value of each pass.
    pub objective_trace: Vec<f64>,
    /// Index into `objective_trace` where each pass starts.
    pub pass_starts: Vec<usize>,
    /// Total WMMSE iterations over all passes.
    pub iterations: usize,
    pub dual_updates: usize,
    pub converged: bool,
    /// Per-AP: power constraint tight at the returned solution.
    pub active_constraints: Vec<bool>,
    /// Per-AP: fronthaul throttling was needed at the returned solution.
    pub fronthaul_active: Vec<bool>,
    pub multipliers: Vec<f64>,
}

impl SolverReport {
    /// Per-pass slices of the objective trace.
    pub fn passes(&self) -> impl Iterator<Item = &[f64]> {
        let ends = self
            .pass_starts
            .iter()
            .skip(1)
            .copied()
            .chain(std::iter::once(self.objective_trace.len()));
        self.pass_starts
            .iter()
            .zip(ends)
            .map(move |(&s, e)| &self.objective_trace[s..e])
    }

    /// Whether every pass is non-decreasing within `rel_tol`.
    pub fn is_monotone(&self, rel_tol: f64) -> bool {
        self.passes().all(|p| {
            p.windows(2)
                .all(|w| w[1] >= w[0] - rel_tol * w[0].abs().max(w[1].abs()).max(1e-300))
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["pass", "iteration", "objective"])?;
        for (pass, trace) in self.passes().enumerate() {
            for (it, obj) in trace.iter().enumerate() {
                w.write_record([pass.to_string(), it.to_string(), format!("{obj:e}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct WsrOutput<T> {
    pub solution: BeamformingSolution<T>,
    /// Rates on the estimated channel, fronthaul-throttled.
    pub rates: RateVector<T>,
    pub served: Vec<Vec<usize>>,
    pub report: SolverReport,
}

/// Reweighted group-sparsity schedule layered on the fronthaul penalty.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GroupSparsity {
    pub initial_weight: f64,
    pub growth: f64,
    pub passes: usize,
    pub tau: f64,
    pub concentration: f64,
}

pub(crate) struct EngineOutput<T> {
    pub last: BeamformingSolution<T>,
    pub best: Option<(T, BeamformingSolution<T>)>,
    pub report: SolverReport,
}

/// Starting point of the WMMSE iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Start {
    /// Every AP beams to every user with an even power split.
    Matched,
    /// Every AP puts full power on its strongest weighted user.
    ApGreedy,
    /// Every user is beamed to by its strongest AP only.
    UserCentric,
}

struct Problem<'a, T: Real> {
    channel: &'a NoisyChannelMatrix<T>,
    alpha: Vec<T>,
    alpha_mean: T,
    powers: Vec<T>,
    capacities: Vec<T>,
    thresholds: Vec<T>,
    noise: T,
    bandwidth: T,
}

impl<'a, T: Real> Problem<'a, T> {
    fn new(
        channel: &'a NoisyChannelMatrix<T>,
        topology: &NetworkTopology,
        params: &SolverParams,
    ) -> Result<Self> {
        params.validate()?;
        if topology.antennas() != channel.antennas() || topology.num_users() != channel.num_users() {
            return Err(Error::Shape("topology and channel disagree".into()));
        }
        if let Some(ap) = topology.aps.iter().find(|a| !(a.fronthaul_capacity > 0.0)) {
            return Err(Error::invalid(
                "fronthaul_capacity",
                format!("AP {} has non-positive capacity", ap.id),
            ));
        }
        let k_total = topology.num_users() as f64;
        let alpha: Vec<T> = topology.users.iter().map(|u| T::lit(u.weight)).collect();
        let alpha_mean = alpha.iter().copied().sum::<T>() / T::lit(k_total);
        Ok(Self {
            channel,
            alpha,
            alpha_mean,
            powers: topology.aps.iter().map(|a| T::lit(a.max_power)).collect(),
            capacities: topology.aps.iter().map(|a| T::lit(a.fronthaul_capacity)).collect(),
            thresholds: topology
                .aps
                .iter()
                .map(|a| T::lit(params.active_threshold * a.max_power / k_total))
                .collect(),
            noise: channel.noise_power(),
            bandwidth: channel.bandwidth(),
        })
    }

    fn num_aps(&self) -> usize {
        self.powers.len()
    }

    fn num_users(&self) -> usize {
        self.alpha.len()
    }

    /// Matched beams toward `targets[r]`, each AP's power split evenly
    /// among its targets.
    fn matched(&self, targets: &[Vec<usize>]) -> BeamformingSolution<T> {
        let mut sol = BeamformingSolution::zeros(self.channel.antennas(), self.num_users());
        for (r, users) in targets.iter().enumerate() {
            if users.is_empty() {
                continue;
            }
            let amp = (self.powers[r] / T::lit(users.len() as f64)).sqrt();
            for &k in users {
                let h = self.channel.block(r, k);
                let n = norm_sqr(h).sqrt();
                if n > T::zero() {
                    for (w, z) in sol.block_mut(r, k).iter_mut().zip(h) {
                        *w = z.scale(amp / n);
                    }
                }
            }
        }
        sol
    }

    fn initial_solution(&self, start: Start) -> BeamformingSolution<T> {
        let (r_total, k_total) = (self.num_aps(), self.num_users());
        let gain = |r: usize, k: usize| norm_sqr(self.channel.block(r, k));
        let argmax = |n: usize, f: &dyn Fn(usize) -> T| (1..n).fold(0, |b, i| if f(i) > f(b) { i } else { b });
        let targets: Vec<Vec<usize>> = match start {
            Start::Matched => vec![(0..k_total).collect(); r_total],
            Start::ApGreedy => (0..r_total).map(|r| vec![argmax(k_total, &|k| self.alpha[k] * gain(r, k))]).collect(),
            Start::UserCentric => {
                let mut t = vec![Vec::new(); r_total];
                for k in 0..k_total {
                    t[argmax(r_total, &|r| gain(r, k) * self.powers[r])].push(k);
                }
                t
            }
        };
        self.matched(&targets)
    }

    fn rates(&self, sinrs: &[T]) -> Vec<T> {
        sinrs.iter().map(|&g| shannon_rate(self.bandwidth, g)).collect()
    }

    /// Zeroes inactive blocks, then returns throttled rates and served sets.
    fn finalize(&self, sol: &BeamformingSolution<T>) -> (BeamformingSolution<T>, RateVector<T>, Vec<Vec<usize>>) {
        let mut pruned = sol.clone();
        for r in 0..self.num_aps() {
            for k in 0..self.num_users() {
                if pruned.block_power(r, k) <= self.thresholds[r] {
                    pruned.block_mut(r, k).iter_mut().for_each(|z| *z = Complex::zero());
                }
            }
        }
        let sinrs = compute_sinrs(self.channel, &pruned);
        let mut rates = self.rates(&sinrs);
        let served = pruned.served_sets(&self.thresholds);
        throttle_fronthaul(&mut rates, &served, &self.capacities);
        (pruned, RateVector { rates, sinrs }, served)
    }

    fn objective(&self, y: &[Vec<Cplx<T>>], sol: &BeamformingSolution<T>, penalty: &[T]) -> T {
        let sinrs = sinrs_from_gains(y, self.noise);
        let utility: T = sinrs.iter().zip(&self.alpha).map(|(&g, &a)| a * g.ln_1p()).sum();
        let k_total = self.num_users();
        let cost: T = (0..self.num_aps())
            .flat_map(|r| (0..k_total).map(move |k| (r, k)))
            .map(|(r, k)| penalty[r * k_total + k] * sol.block_power(r, k))
            .sum();
        utility - cost
    }

    /// One WMMSE pass with frozen penalty coefficients. Returns the number
    /// of iterations and whether the relative tolerance was met.
    fn wmmse_pass(
        &self,
        sol: &mut BeamformingSolution<T>,
        penalty: &[T],
        params: &SolverParams,
        trace: &mut Vec<f64>,
    ) -> (usize, bool) {
        let k_total = self.num_users();
        let ch = self.channel;
        let mut y = cross_gains(ch, sol);
        let mut prev = self.objective(&y, sol, penalty);
        trace.push(prev.to_f64_lossy());
        let tol = T::lit(params.tolerance);

        for it in 1..=params.max_inner_iterations {
            // Receive scalars and MSE weights.
            let mut u = vec![Complex::zero(); k_total];
            let mut omega = vec![T::zero(); k_total];
            let mut coef = vec![T::zero(); k_total];
            for k in 0..k_total {
                let signal = y[k][k].norm_sqr();
                let rest: T = y[k]
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != k)
                    .map(|(_, z)| z.norm_sqr())
                    .sum::<T>()
                    + self.noise;
                let den = signal + rest;
                if den > T::zero() {
                    u[k] = y[k][k].unscale(den);
                    omega[k] = self.alpha[k] * den / rest;
                    coef[k] = omega[k] * u[k].norm_sqr();
                }
            }

            for r in 0..self.num_aps() {
                self.update_ap(r, sol, &mut y, &u, &omega, &coef, penalty);
            }

            let obj = self.objective(&y, sol, penalty);
            trace.push(obj.to_f64_lossy());
            let change = (obj - prev).abs();
            prev = obj;
            if change <= tol * obj.abs().max(T::min_positive_value()) {
                return (it, true);
            }
        }
        (params.max_inner_iterations, false)
    }

    /// Exact minimization over AP `r`'s blocks with every other AP fixed.
    #[allow(clippy::too_many_arguments)]
    fn update_ap(
        &self,
        r: usize,
        sol: &mut BeamformingSolution<T>,
        y: &mut [Vec<Cplx<T>>],
        u: &[Cplx<T>],
        omega: &[T],
        coef: &[T],
        penalty: &[T],
    ) {
        let ch = self.channel;
        let k_total = self.num_users();
        let m = ch.antennas()[r];

        let mut a = CMatrix::zeros(m);
        for j in 0..k_total {
            if coef[j] > T::zero() {
                a.add_outer(ch.block(r, j), coef[j]);
            }
        }
        let eig = a.eigh();
        let lam_max = eig.values.last().copied().unwrap_or(T::zero()).max(T::zero());
        let tiny = lam_max * T::lit(1e-12) + T::min_positive_value();

        // rest[k][j]: contribution of the other APs to h_j^H w_k.
        let mut rest = vec![vec![Complex::zero(); k_total]; k_total];
        let mut proj = vec![vec![Complex::zero(); m]; k_total];
        let mut b_norm_total = T::zero();
        for k in 0..k_total {
            let w_rk = sol.block(r, k);
            let mut b: Vec<Cplx<T>> = ch.block(r, k).iter().map(|z| z * (u[k] * omega[k])).collect();
            for j in 0..k_total {
                let h_rj = ch.block(r, j);
                let rj = y[j][k] - dot_h(h_rj, w_rk);
                rest[k][j] = rj;
                if coef[j] > T::zero() {
                    let s = rj * coef[j];
                    for (bi, hi) in b.iter_mut().zip(h_rj) {
                        *bi -= hi * s;
                    }
                }
            }
            let b_norm = norm_sqr(&b);
            b_norm_total += b_norm;
            for (i, v) in eig.vectors.iter().enumerate() {
                let p = dot_h(v, &b);
                // Components in the null space of A + c I carry no signal.
                let null = eig.values[i] + penalty[r * k_total + k] <= tiny;
                proj[k][i] = if null && p.norm_sqr() <= T::lit(1e-24) * b_norm {
                    Complex::zero()
                } else {
                    p
                };
            }
        }

        let power_at = |mu: T| -> T {
            let mut total = T::zero();
            for k in 0..k_total {
                let c = penalty[r * k_total + k];
                for (i, p) in proj[k].iter().enumerate() {
                    let pn = p.norm_sqr();
                    if pn.is_zero() {
                        continue;
                    }
                    let d = eig.values[i].max(T::zero()) + c + mu;
                    if d <= tiny {
                        return T::infinity();
                    }
                    total += pn / (d * d);
                }
            }
            total
        };

        let budget = self.powers[r];
        let mu = if power_at(T::zero()) <= budget {
            T::zero()
        } else {
            let mut lo = T::zero();
            let mut hi = (b_norm_total / budget).sqrt();
            while power_at(hi) > budget {
                hi = hi + hi;
            }
            for _ in 0..200 {
                let mid = (lo + hi) / T::lit(2.0);
                if mid <= lo || mid >= hi {
                    break;
                }
                if power_at(mid) > budget {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= T::epsilon() * hi {
                    break;
                }
            }
            hi
        };

        for k in 0..k_total {
            let c = penalty[r * k_total + k];
            let mut w = vec![Complex::zero(); m];
            for (i, p) in proj[k].iter().enumerate() {
                if p.is_zero() {
                    continue;
                }
                let d = eig.values[i].max(T::zero()) + c + mu;
                let s = p.unscale(d);
                for (wi, vi) in w.iter_mut().zip(&eig.vectors[i]) {
                    *wi += vi * s;
                }
            }
            for j in 0..k_total {
                y[j][k] = rest[k][j] + dot_h(ch.block(r, j), &w);
            }
            sol.block_mut(r, k).copy_from_slice(&w);
        }
    }

    /// Every user either has `level` of its power in one block or has no
    /// active block at all.
    fn concentrated(&self, sol: &BeamformingSolution<T>, level: f64) -> bool {
        let level = T::lit(level);
        (0..self.num_users()).all(|k| {
            let powers: Vec<T> = (0..self.num_aps()).map(|r| sol.block_power(r, k)).collect();
            let total: T = powers.iter().copied().sum();
            let peak = powers.iter().copied().fold(T::zero(), T::max);
            let idle = powers.iter().zip(&self.thresholds).all(|(&p, &eps)| p <= eps);
            idle || peak >= level * total
        })
    }
}

/// Shared dual loop behind both the reference solver and the pre-scheduler.
pub(crate) fn optimize<T: Real>(
    noisy: &NoisyChannelMatrix<T>,
    topology: &NetworkTopology,
    params: &SolverParams,
    sparsity: Option<&GroupSparsity>,
    start: Start,
) -> Result<EngineOutput<T>> {
    let pb = Problem::new(noisy, topology, params)?;
    let r_total = pb.num_aps();
    let k_total = pb.num_users();
    let tau = T::lit(params.smoothing_tau);
    let step = T::lit(params.dual_step);
    let max_passes = match sparsity {
        Some(sp) => sp.passes.max(1),
        None => params.max_dual_updates,
    };

    let mut sol = pb.initial_solution(start);
    let mut lambda = vec![T::zero(); r_total];
    let mut trace = Vec::new();
    let mut pass_starts = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut best: Option<(T, BeamformingSolution<T>)> = None;
    let mut dual_updates = 0;

    for pass in 0..max_passes {
        let rates = pb.rates(&compute_sinrs(noisy, &sol));
        let sparse_weight = sparsity.map_or(T::zero(), |sp| {
            T::lit(sp.initial_weight * sp.growth.powi(pass as i32))
        });
        let sparse_tau = sparsity.map_or(tau, |sp| T::lit(sp.tau));
        let mut penalty = vec![T::zero(); r_total * k_total];
        // The block delivering most of a user's received signal is left
        // unpenalized: the target is one active block per user, not none.
        let delivered = |r: usize, k: usize| dot_h(noisy.block(r, k), sol.block(r, k)).norm_sqr();
        let anchors: Vec<usize> = (0..k_total)
            .map(|k| (0..r_total).fold(0, |b, r| if delivered(r, k) > delivered(b, k) { r } else { b }))
            .collect();
        for r in 0..r_total {
            for k in 0..k_total {
                let p = sol.block_power(r, k);
                let fronthaul = lambda[r] * rates[k] / pb.capacities[r] / (p + tau);
                let group = if sparsity.is_none() || anchors[k] == r { T::zero() } else { sparse_weight / (p + sparse_tau) };
                penalty[r * k_total + k] = pb.alpha_mean * (fronthaul + group);
            }
        }

        pass_starts.push(trace.len());
        let (its, inner_ok) = pb.wmmse_pass(&mut sol, &penalty, params, &mut trace);
        iterations += its;

        let (_, final_rates, _) = pb.finalize(&sol);
        let value = final_rates.weighted_sum_rate(&pb.alpha);
        if best.as_ref().map_or(true, |(v, _)| value > *v) {
            best = Some((value, sol.clone()));
        }

        let rates = pb.rates(&compute_sinrs(noisy, &sol));
        let served = sol.served_sets(&pb.thresholds);
        let mut feasible = true;
        for r in 0..r_total {
            let load: T = served[r].iter().map(|&k| rates[k]).sum();
            let overload = load / pb.capacities[r] - T::one();
            if overload > T::lit(1e-6) {
                feasible = false;
            }
            lambda[r] = (lambda[r] + step * overload).max(T::zero());
        }
        dual_updates += 1;

        let concentrated = sparsity.map_or(true, |sp| pb.concentrated(&sol, sp.concentration));
        if inner_ok && feasible && concentrated {
            converged = true;
            break;
        }
    }

    let returned = match (sparsity, &best) {
        (None, Some((_, b))) => b.clone(),
        _ => sol.clone(),
    };
    let powers = returned.per_ap_power();
    let (_, _, served) = pb.finalize(&returned);
    let raw_rates = pb.rates(&compute_sinrs(noisy, &returned));
    let report = SolverReport {
        objective_trace: trace,
        pass_starts,
        iterations,
        dual_updates,
        converged,
        active_constraints: powers
            .iter()
            .zip(&pb.powers)
            .map(|(&p, &cap)| p >= cap * T::lit(1.0 - 1e-6))
            .collect(),
        fronthaul_active: served
            .iter()
            .zip(&pb.capacities)
            .map(|(set, &cap)| set.iter().map(|&k| raw_rates[k]).sum::<T>() > cap)
            .collect(),
        multipliers: lambda.iter().map(|l| l.to_f64_lossy()).collect(),
    };
    Ok(EngineOutput {
        last: sol,
        best,
        report,
    })
}

/// Reference centralized solve on the estimated channel only.
pub fn solve_wsr<T: Real>(
    noisy: &NoisyChannelMatrix<T>,
    topology: &NetworkTopology,
    params: &SolverParams,
) -> Result<WsrOutput<T>> {
    let pb = Problem::new(noisy, topology, params)?;
    let starts: &[Start] = if params.multi_start {
        &[Start::Matched, Start::ApGreedy, Start::UserCentric]
    } else {
        &[Start::Matched]
    };
    let mut best: Option<(T, WsrOutput<T>)> = None;
    for &start in starts {
        let out = optimize(noisy, topology, params, None, start)?;
        let chosen = out.best.map(|(_, s)| s).unwrap_or(out.last);
        let (solution, rates, served) = pb.finalize(&chosen);
        let value = rates.weighted_sum_rate(&pb.alpha);
        if best.as_ref().map_or(true, |(v, _)| value > *v) {
            best = Some((value, WsrOutput { solution, rates, served, report: out.report }));
        }
    }
    Ok(best.expect("at least one start").1)
}

/// Rates the solution actually achieves on the true channel, with the
/// served sets read off the solution's support.
pub fn evaluate_true_rates<T: Real>(
    true_channel: &ChannelMatrix<T>,
    solution: &BeamformingSolution<T>,
    topology: &NetworkTopology,
    params: &SolverParams,
) -> Result<RateVector<T>> {
    solution.check_shape(true_channel)?;
    let k_total = topology.num_users() as f64;
    let thresholds: Vec<T> = topology
        .aps
        .iter()
        .map(|a| T::lit(params.active_threshold * a.max_power / k_total))
        .collect();
    let capacities: Vec<T> = topology.aps.iter().map(|a| T::lit(a.fronthaul_capacity)).collect();
    let sinrs = compute_sinrs(true_channel, solution);
    let mut rates: Vec<T> = sinrs
        .iter()
        .map(|&g| shannon_rate(true_channel.bandwidth(), g))
        .collect();
    throttle_fronthaul(&mut rates, &solution.served_sets(&thresholds), &capacities);
    Ok(RateVector { rates, sinrs })
}
