//! Per-AP leakage-based beamforming on exact local CSI.
//!
//! For a user `k` served by AP `r` with power share `p = P_r / K_r`, the
//! beam maximizing
//!
//! ```text
//! |h_rk^H w|^2 / (sum_{k' != k} |h_rk'^H w|^2 + noise),   ||w||^2 = p
//! ```
//!
//! is the principal generalized eigenvector of
//! `(h_rk h_rk^H, sum_{k'} h_rk' h_rk'^H + (noise / p) I)`. Because the
//! numerator is rank one, that eigenvector is proportional to
//! `B^{-1} h_rk`, which is what [`slnr_beamformer`] computes with a single
//! Cholesky solve. [`slnr_beamformer_eig`] keeps the explicit
//! generalized-eigenvalue route for cross-checking.

use num_complex::Complex;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::beamforming::BeamformingSolution;
use crate::channel::{ChannelMatrix, ChannelView};
use crate::error::{Error, Result};
use crate::linalg::{dot_h, fix_phase, generalized_max_eig, norm_sqr, CMatrix};
use crate::scalar::{Cplx, Real};

/// Which users' channels enter a beam's leakage term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeakageScope {
    /// Every other user in the network.
    #[default]
    AllUsers,
    /// Only the other members of the AP's own cluster.
    OwnCluster,
}

/// What AP `r` knows: its exact channel toward every user, nothing about
/// other APs.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalCsi<T> {
    pub ap_id: usize,
    /// `h_rk` for every user `k`.
    pub channels: Vec<Vec<Cplx<T>>>,
    pub cluster: Vec<usize>,
    pub noise_power: T,
    pub max_power: T,
    pub scope: LeakageScope,
}

impl<T: Real> LocalCsi<T> {
    /// Local view of AP `r`. Takes the true channel only: the distributed
    /// phase never sees an outdated estimate.
    pub fn from_channel(
        channel: &ChannelMatrix<T>,
        ap_id: usize,
        cluster: Vec<usize>,
        max_power: T,
        scope: LeakageScope,
    ) -> Result<Self> {
        if ap_id >= channel.num_aps() {
            return Err(Error::Shape(format!("no AP {ap_id}")));
        }
        if let Some(&k) = cluster.iter().find(|&&k| k >= channel.num_users()) {
            return Err(Error::Shape(format!("cluster member {k} is not a user")));
        }
        Ok(Self {
            ap_id,
            channels: (0..channel.num_users())
                .map(|k| channel.block(ap_id, k).to_vec())
                .collect(),
            cluster,
            noise_power: channel.noise_power(),
            max_power,
            scope,
        })
    }

    pub fn antennas(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    fn leakage_users(&self, k: usize) -> Vec<usize> {
        match self.scope {
            LeakageScope::AllUsers => (0..self.channels.len()).filter(|&j| j != k).collect(),
            LeakageScope::OwnCluster => self.cluster.iter().copied().filter(|&j| j != k).collect(),
        }
    }

    /// `sum_{k' in leakage(k)} h_rk' h_rk'^H + (noise / share) I`.
    pub fn leakage_matrix(&self, k: usize, power_share: T) -> CMatrix<T> {
        let mut b = CMatrix::zeros(self.antennas());
        for j in self.leakage_users(k) {
            b.add_outer(&self.channels[j], T::one());
        }
        b.add_diag(self.noise_power / power_share);
        b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlnrBeam<T> {
    pub weights: Vec<Cplx<T>>,
    /// The user's own channel was zero; `weights` is the zero vector.
    pub zero_channel: bool,
}

const PHASE_THRESHOLD: f64 = 1e-9;

fn check_request<T: Real>(csi: &LocalCsi<T>, k: usize, power_share: T) -> Result<()> {
    if k >= csi.channels.len() {
        return Err(Error::Shape(format!("no user {k}")));
    }
    if !(power_share > T::zero()) {
        return Err(Error::invalid("power_share", "must be positive"));
    }
    Ok(())
}

fn finish<T: Real>(mut w: Vec<Cplx<T>>, power_share: T) -> SlnrBeam<T> {
    let n = norm_sqr(&w).sqrt();
    let s = power_share.sqrt() / n;
    for x in w.iter_mut() {
        *x = x.scale(s);
    }
    fix_phase(&mut w, T::lit(PHASE_THRESHOLD));
    SlnrBeam {
        weights: w,
        zero_channel: false,
    }
}

/// SLNR-optimal beam for user `k` with `||w||^2 = power_share`.
pub fn slnr_beamformer<T: Real>(csi: &LocalCsi<T>, k: usize, power_share: T) -> Result<SlnrBeam<T>> {
    check_request(csi, k, power_share)?;
    let h = &csi.channels[k];
    if norm_sqr(h).is_zero() {
        return Ok(SlnrBeam {
            weights: vec![Complex::zero(); h.len()],
            zero_channel: true,
        });
    }
    let chol = csi
        .leakage_matrix(k, power_share)
        .cholesky()
        .ok_or_else(|| Error::invalid("noise_power", "leakage matrix is singular"))?;
    Ok(finish(chol.solve(h), power_share))
}

/// Same beam through the explicit generalized eigenproblem. Returns the
/// beam and the largest generalized eigenvalue (the optimal SLNR).
pub fn slnr_beamformer_eig<T: Real>(
    csi: &LocalCsi<T>,
    k: usize,
    power_share: T,
) -> Result<(SlnrBeam<T>, T)> {
    check_request(csi, k, power_share)?;
    let h = &csi.channels[k];
    if norm_sqr(h).is_zero() {
        return Ok((
            SlnrBeam {
                weights: vec![Complex::zero(); h.len()],
                zero_channel: true,
            },
            T::zero(),
        ));
    }
    let mut signal = CMatrix::zeros(h.len());
    signal.add_outer(h, T::one());
    let (value, x) = generalized_max_eig(&signal, &csi.leakage_matrix(k, power_share))
        .ok_or_else(|| Error::invalid("noise_power", "leakage matrix is singular"))?;
    Ok((finish(x, power_share), value))
}

/// `|h_rk^H w|^2 / (sum_{k' != k} |h_rk'^H w|^2 + noise)` over the CSI's
/// leakage scope.
pub fn compute_slnr<T: Real>(csi: &LocalCsi<T>, k: usize, w: &[Cplx<T>]) -> T {
    let signal = dot_h(&csi.channels[k], w).norm_sqr();
    let leakage: T = csi
        .leakage_users(k)
        .into_iter()
        .map(|j| dot_h(&csi.channels[j], w).norm_sqr())
        .sum();
    signal / (leakage + csi.noise_power)
}

/// Equal-power SLNR beams for every member of the AP's cluster. An empty
/// cluster yields no beams (the AP stays silent).
pub fn beamform_cluster<T: Real>(csi: &LocalCsi<T>) -> Result<Vec<(usize, SlnrBeam<T>)>> {
    if csi.cluster.is_empty() {
        return Ok(Vec::new());
    }
    let share = csi.max_power / T::lit(csi.cluster.len() as f64);
    csi.cluster
        .iter()
        .map(|&k| slnr_beamformer(csi, k, share).map(|b| (k, b)))
        .collect()
}

/// Network-wide solution in which every user's only nonzero block is its
/// serving AP's SLNR beam.
pub fn beamform_network<T: Real>(
    channel: &ChannelMatrix<T>,
    clusters: &[Vec<usize>],
    max_powers: &[T],
    scope: LeakageScope,
) -> Result<BeamformingSolution<T>> {
    let mut sol = BeamformingSolution::zeros(channel.antennas(), channel.num_users());
    for (r, cluster) in clusters.iter().enumerate() {
        let csi = LocalCsi::from_channel(channel, r, cluster.clone(), max_powers[r], scope)?;
        for (k, beam) in beamform_cluster(&csi)? {
            sol.set_block(r, k, &beam.weights)?;
        }
    }
    Ok(sol)
}
