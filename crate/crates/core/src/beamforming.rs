//! Beamformer containers and the network-wide SINR/rate evaluation shared
//! by both schemes.

use num_complex::Complex;
use num_traits::Zero;

use crate::channel::ChannelView;
use crate::error::{Error, Result};
use crate::linalg::{dot_h, norm_sqr};
use crate::scalar::{Cplx, Real};

/// Per-(AP, user) transmit blocks `w_rk`, row-major over `(r, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingSolution<T> {
    antennas: Vec<usize>,
    num_users: usize,
    blocks: Vec<Vec<Cplx<T>>>,
}

impl<T: Real> BeamformingSolution<T> {
    pub fn zeros(antennas: &[usize], num_users: usize) -> Self {
        let blocks = antennas
            .iter()
            .flat_map(|&m| (0..num_users).map(move |_| vec![Complex::zero(); m]))
            .collect();
        Self {
            antennas: antennas.to_vec(),
            num_users,
            blocks,
        }
    }

    pub fn num_aps(&self) -> usize {
        self.antennas.len()
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn antennas(&self) -> &[usize] {
        &self.antennas
    }

    #[inline]
    pub fn block(&self, r: usize, k: usize) -> &[Cplx<T>] {
        &self.blocks[r * self.num_users + k]
    }

    #[inline]
    pub fn block_mut(&mut self, r: usize, k: usize) -> &mut [Cplx<T>] {
        &mut self.blocks[r * self.num_users + k]
    }

    pub fn set_block(&mut self, r: usize, k: usize, w: &[Cplx<T>]) -> Result<()> {
        if w.len() != self.antennas[r] {
            return Err(Error::Shape(format!(
                "block ({r},{k}) needs {} entries, got {}",
                self.antennas[r],
                w.len()
            )));
        }
        self.block_mut(r, k).copy_from_slice(w);
        Ok(())
    }

    /// Stacked `w_k` over all APs.
    pub fn stacked(&self, k: usize) -> Vec<Cplx<T>> {
        (0..self.num_aps())
            .flat_map(|r| self.block(r, k).iter().copied())
            .collect()
    }

    pub fn block_power(&self, r: usize, k: usize) -> T {
        norm_sqr(self.block(r, k))
    }

    /// `sum_k ||w_rk||^2` for every AP.
    pub fn per_ap_power(&self) -> Vec<T> {
        (0..self.num_aps())
            .map(|r| (0..self.num_users).map(|k| self.block_power(r, k)).sum())
            .collect()
    }

    /// Users whose block at AP `r` carries more than `thresholds[r]` watts.
    pub fn served_sets(&self, thresholds: &[T]) -> Vec<Vec<usize>> {
        (0..self.num_aps())
            .map(|r| {
                (0..self.num_users)
                    .filter(|&k| self.block_power(r, k) > thresholds[r])
                    .collect()
            })
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.iter().flatten().all(|z| z.is_zero())
    }

    pub fn check_shape<C: ChannelView<T> + ?Sized>(&self, channel: &C) -> Result<()> {
        if self.antennas != channel.antennas() || self.num_users != channel.num_users() {
            return Err(Error::Shape(format!(
                "solution is {:?} x {} but channel is {:?} x {}",
                self.antennas,
                self.num_users,
                channel.antennas(),
                channel.num_users()
            )));
        }
        Ok(())
    }
}

/// Realized per-user rates (bits/s) and SINRs.
#[derive(Debug, Clone, PartialEq)]
pub struct RateVector<T> {
    pub rates: Vec<T>,
    pub sinrs: Vec<T>,
}

impl<T: Real> RateVector<T> {
    pub fn sum_rate(&self) -> T {
        self.rates.iter().copied().sum()
    }

    pub fn weighted_sum_rate(&self, weights: &[T]) -> T {
        self.rates.iter().zip(weights).map(|(&r, &a)| r * a).sum()
    }
}

/// Cross gains `y[k][j] = h_k^H w_j` over the whole network.
pub(crate) fn cross_gains<T: Real, C: ChannelView<T> + ?Sized>(
    channel: &C,
    solution: &BeamformingSolution<T>,
) -> Vec<Vec<Cplx<T>>> {
    let k_total = channel.num_users();
    (0..k_total)
        .map(|k| {
            (0..k_total)
                .map(|j| {
                    (0..channel.num_aps())
                        .map(|r| dot_h(channel.block(r, k), solution.block(r, j)))
                        .fold(Complex::zero(), |a, b| a + b)
                })
                .collect()
        })
        .collect()
}

pub(crate) fn sinrs_from_gains<T: Real>(y: &[Vec<Cplx<T>>], noise: T) -> Vec<T> {
    y.iter()
        .enumerate()
        .map(|(k, row)| {
            let signal = row[k].norm_sqr();
            let interference: T = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, z)| z.norm_sqr())
                .sum();
            signal / (interference + noise)
        })
        .collect()
}

/// SINR of user `k`: `|h_k^H w_k|^2 / (sum_{j != k} |h_k^H w_j|^2 + noise)`.
pub fn compute_sinr<T: Real, C: ChannelView<T> + ?Sized>(
    channel: &C,
    solution: &BeamformingSolution<T>,
    k: usize,
) -> T {
    let h_k = channel.stacked(k);
    let gain = |j: usize| dot_h(&h_k, &solution.stacked(j)).norm_sqr();
    let interference: T = (0..channel.num_users()).filter(|&j| j != k).map(gain).sum();
    gain(k) / (interference + channel.noise_power())
}

pub fn compute_sinrs<T: Real, C: ChannelView<T> + ?Sized>(
    channel: &C,
    solution: &BeamformingSolution<T>,
) -> Vec<T> {
    sinrs_from_gains(&cross_gains(channel, solution), channel.noise_power())
}

/// `B * log2(1 + sinr)`.
#[inline]
pub fn shannon_rate<T: Real>(bandwidth: T, sinr: T) -> T {
    bandwidth * sinr.ln_1p() / T::LN_2()
}

/// Scales the rates of every over-subscribed AP so its served load equals
/// its capacity. APs are visited in index order; scaling only ever lowers
/// rates, so earlier APs stay within capacity.
pub fn throttle_fronthaul<T: Real>(rates: &mut [T], served: &[Vec<usize>], capacities: &[T]) {
    for (set, &cap) in served.iter().zip(capacities) {
        let load: T = set.iter().map(|&k| rates[k]).sum();
        if load > cap {
            let factor = cap / load;
            for &k in set {
                rates[k] *= factor;
            }
        }
    }
}
