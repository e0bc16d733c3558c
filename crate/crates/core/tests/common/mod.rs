#![allow(dead_code)]

use std::f64::consts::PI;

use fogran::beamforming::{compute_sinrs, shannon_rate, BeamformingSolution};
use fogran::channel::{ChannelMatrix, ChannelView};
use fogran::scalar::Cplx;
use fogran::topology::{AccessPoint, ApKind, NetworkTopology, Position, User};
use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn crandn(rng: &mut impl Rng) -> Cplx<f64> {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn crandn_vec(rng: &mut impl Rng, n: usize) -> Vec<Cplx<f64>> {
    (0..n).map(|_| crandn(rng)).collect()
}

/// `(antennas, power W, capacity bit/s)` per AP; positions are irrelevant
/// to everything the tests touch.
pub fn topology(aps: &[(usize, f64, f64)], weights: &[f64]) -> NetworkTopology {
    NetworkTopology::new(
        aps.iter()
            .enumerate()
            .map(|(r, &(m, p, c))| AccessPoint {
                id: r,
                kind: ApKind::Pico,
                position: Position { x: 50.0 + 100.0 * r as f64, y: 0.0 },
                antennas: m,
                max_power: p,
                fronthaul_capacity: c,
            })
            .collect(),
        weights
            .iter()
            .enumerate()
            .map(|(k, &a)| User {
                id: k,
                position: Position { x: 30.0 + 11.0 * k as f64, y: 70.0 },
                weight: a,
            })
            .collect(),
        1000.0,
    )
    .unwrap()
}

/// Rayleigh blocks scaled by per-link gains drawn log-uniformly in
/// `[gain_lo, gain_hi]`.
pub fn random_channel(
    rng: &mut impl Rng,
    topo: &NetworkTopology,
    gain_lo: f64,
    gain_hi: f64,
    bandwidth: f64,
    noise_psd: f64,
) -> ChannelMatrix<f64> {
    let blocks = topo
        .aps
        .iter()
        .map(|ap| {
            (0..topo.num_users())
                .map(|_| {
                    let g = (gain_lo.ln() + rng.random::<f64>() * (gain_hi / gain_lo).ln()).exp();
                    crandn_vec(rng, ap.antennas).into_iter().map(|z| z * g.sqrt()).collect()
                })
                .collect()
        })
        .collect();
    ChannelMatrix::from_blocks(blocks, bandwidth, noise_psd).unwrap()
}

/// Weighted sum-rate of 2 users over 2 single-antenna APs, searched on a
/// 20^4 grid: each AP splits its full power `s_r : 1 - s_r` between the
/// users (`s_r` in 20 even steps over [0, 1]) and each user's AP-2
/// component carries a relative phase from 20 even steps over [0, 2pi).
pub fn grid_wsr(ch: &ChannelMatrix<f64>, topo: &NetworkTopology) -> f64 {
    let alpha = topo.weights();
    let p: Vec<f64> = topo.aps.iter().map(|a| a.max_power).collect();
    let steps = 20;
    let split = |i: usize| i as f64 / (steps - 1) as f64;
    let phase = |i: usize| Complex::from_polar(1.0, 2.0 * PI * i as f64 / steps as f64);
    let mut best = 0.0f64;
    let mut sol = BeamformingSolution::zeros(&[1, 1], 2);
    for a in 0..steps {
        for b in 0..steps {
            for c in 0..steps {
                for d in 0..steps {
                    let (s1, s2) = (split(a), split(b));
                    sol.block_mut(0, 0)[0] = Complex::from((s1 * p[0]).sqrt());
                    sol.block_mut(0, 1)[0] = Complex::from(((1.0 - s1) * p[0]).sqrt());
                    sol.block_mut(1, 0)[0] = phase(c) * (s2 * p[1]).sqrt();
                    sol.block_mut(1, 1)[0] = phase(d) * ((1.0 - s2) * p[1]).sqrt();
                    let v: f64 = compute_sinrs(ch, &sol)
                        .iter()
                        .zip(&alpha)
                        .map(|(&g, &w)| w * shannon_rate(ch.bandwidth(), g))
                        .sum();
                    best = best.max(v);
                }
            }
        }
    }
    best
}

pub mod enumeration {
    use fogran::channel::{draw_channel, ChannelMatrix, ChannelParams, NoisyChannelMatrix};
    use fogran::metrics::realized_rates;
    use fogran::prescheduler::{preschedule, Clustering, PreschedParams};
    use fogran::slnr::{beamform_network, LeakageScope};
    use fogran::topology::{build_topology, NetworkTopology, TopologyConfig};
    use fogran::wsr::SolverParams;

    /// Realized sum-rate of equal-power SLNR beamforming on `cl`.
    pub fn slnr_sum_rate(ch: &ChannelMatrix<f64>, topo: &NetworkTopology, cl: &Clustering) -> f64 {
        let powers: Vec<f64> = topo.aps.iter().map(|a| a.max_power).collect();
        let sol = beamform_network(ch, cl.per_ap_sets(), &powers, LeakageScope::AllUsers).unwrap();
        realized_rates(ch, &sol, topo, Some(cl), 1e-6).unwrap().sum_rate()
    }

    pub struct Rank {
        pub assignment: Vec<usize>,
        /// Partitions that beat the returned one strictly.
        pub better: usize,
        pub total: usize,
        pub ratio_to_best: f64,
    }

    impl Rank {
        pub fn in_top_decile(&self) -> bool {
            self.better * 10 < self.total
        }
    }

    /// Pre-schedules on exact CSI and ranks the result among all `R^K`
    /// partitions.
    pub fn rank(cfg: &TopologyConfig, seed: u64) -> Rank {
        let topo = build_topology(&TopologyConfig { seed, ..cfg.clone() }).unwrap();
        let ch: ChannelMatrix<f64> = draw_channel(&topo, &ChannelParams::default(), 500 + seed);
        let ps = preschedule(&NoisyChannelMatrix::exact(&ch), &topo, &SolverParams::default(), &PreschedParams::default(), 10).unwrap();
        let (r, k) = (topo.num_aps(), topo.num_users());
        let target = slnr_sum_rate(&ch, &topo, &ps.clustering);
        let total = r.pow(k as u32);
        let (mut better, mut best) = (0, 0.0f64);
        for code in 0..total {
            let assignment: Vec<usize> = (0..k).map(|i| code / r.pow(i as u32) % r).collect();
            let v = slnr_sum_rate(&ch, &topo, &Clustering::from_assignment(assignment, r).unwrap());
            best = best.max(v);
            if v > target * (1.0 + 1e-12) {
                better += 1;
            }
        }
        Rank { assignment: ps.clustering.assignment().to_vec(), better, total, ratio_to_best: target / best }
    }

    /// Desk layout: one macro, two picos, four users.
    pub fn heterogeneous() -> TopologyConfig {
        TopologyConfig { num_macro: 1, num_pico: 2, num_users: 4, ..TopologyConfig::desk_scale() }
    }

    pub fn homogeneous() -> TopologyConfig {
        TopologyConfig { num_macro: 0, num_pico: 3, num_users: 4, ..TopologyConfig::desk_scale() }
    }
}

pub mod csi {
    use fogran::channel::{corrupt_csi, draw_channel, ChannelMatrix, ChannelParams, ChannelView};
    use fogran::scalar::Cplx;
    use fogran::topology::{build_topology, TopologyConfig};
    use num_complex::Complex;

    /// At least `n` error entries `(h~ - h) / sqrt(g_rk)` from desk-scale
    /// drops, i.e. in the normalized-fading domain.
    pub fn normalized_errors(var: f64, n: usize) -> Vec<Cplx<f64>> {
        let topo = build_topology(&TopologyConfig::desk_scale()).unwrap();
        let mut out = Vec::with_capacity(n + 64);
        let mut seed = 0;
        while out.len() < n {
            let ch: ChannelMatrix<f64> = draw_channel(&topo, &ChannelParams::default(), seed);
            let noisy = corrupt_csi(&ch, var, 10_000 + seed).unwrap();
            for r in 0..ch.num_aps() {
                for k in 0..ch.num_users() {
                    let g = ch.large_scale_gain(r, k).sqrt();
                    out.extend(noisy.block(r, k).iter().zip(ch.block(r, k)).map(|(a, b)| (a - b) / g));
                }
            }
            seed += 1;
        }
        out
    }

    pub struct Moments {
        pub mean: Cplx<f64>,
        pub variance: f64,
        /// Standard error of each component of the mean.
        pub mean_se: f64,
    }

    pub fn moments(e: &[Cplx<f64>]) -> Moments {
        let n = e.len() as f64;
        let mean = e.iter().sum::<Cplx<f64>>() / n;
        let variance = e.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / (n - 1.0);
        Moments { mean, variance, mean_se: (variance / (2.0 * n)).sqrt() }
    }

    /// Normalized sample cross-correlation between the errors of blocks
    /// `(0, 0)` and `(1, 1)` of a 2-AP, 2-user channel with `n` antennas per AP.
    pub fn cross_correlation(var: f64, n: usize, seed: u64) -> f64 {
        let blocks = vec![vec![vec![Complex::new(0.0, 0.0); n]; 2]; 2];
        let ch = ChannelMatrix::from_blocks(blocks, 1.0, 1.0).unwrap();
        let noisy = corrupt_csi(&ch, var, seed).unwrap();
        let (a, b) = (noisy.block(0, 0), noisy.block(1, 1));
        let c: Cplx<f64> = a.iter().zip(b).map(|(x, y)| x * y.conj()).sum();
        let pa: f64 = a.iter().map(|z| z.norm_sqr()).sum();
        let pb: f64 = b.iter().map(|z| z.norm_sqr()).sum();
        c.norm() / (pa * pb).sqrt()
    }
}

pub mod slnr {
    use super::crandn_vec;
    use fogran::linalg::norm_sqr;
    use fogran::scalar::Cplx;
    use fogran::slnr::{LeakageScope, LocalCsi};
    use nalgebra::{DMatrix, DVector};
    use num_complex::Complex;
    use rand::Rng;

    pub fn local(channels: Vec<Vec<Cplx<f64>>>, noise: f64, power: f64) -> LocalCsi<f64> {
        let users = channels.len();
        LocalCsi {
            ap_id: 0,
            channels,
            cluster: (0..users).collect(),
            noise_power: noise,
            max_power: power,
            scope: LeakageScope::AllUsers,
        }
    }

    /// Largest generalized eigenvalue of `(h h^H, B)` through nalgebra:
    /// `L^{-1} h h^H L^{-H}` has the same spectrum.
    pub fn nalgebra_max_gen_eig(csi: &LocalCsi<f64>, k: usize, share: f64) -> f64 {
        let m = csi.channels[k].len();
        let col = |h: &[Cplx<f64>]| DVector::from_iterator(m, h.iter().copied());
        let mut b = DMatrix::<Cplx<f64>>::identity(m, m) * Complex::from(csi.noise_power / share);
        for (j, h) in csi.channels.iter().enumerate() {
            if j != k {
                let v = col(h);
                b += &v * v.adjoint();
            }
        }
        let h = col(&csi.channels[k]);
        let a = &h * h.adjoint();
        let l = b.cholesky().expect("positive definite").l();
        let li = l.try_inverse().unwrap();
        let c = &li * a * li.adjoint();
        let c = (&c + c.adjoint()) * Complex::from(0.5);
        c.symmetric_eigenvalues().iter().copied().fold(f64::MIN, f64::max)
    }

    pub fn random_unit(rng: &mut impl Rng, m: usize) -> Vec<Cplx<f64>> {
        let v = crandn_vec(rng, m);
        let n = norm_sqr(&v).sqrt();
        v.into_iter().map(|z| z / n).collect()
    }
}
