//! Channel generation: distance path loss, log-normal shadowing and
//! Rayleigh fading, plus the additive-error model for outdated CSI.
//!
//! A channel block is stored as `h_rk = sqrt(g_rk) * f_rk` where `g_rk` is
//! the large-scale gain and `f_rk` the unit-variance small-scale part. CSI
//! errors are added in the normalized domain, `h~_rk = sqrt(g_rk) (f_rk + e_rk)`,
//! so the error variance is a fraction of the fading power.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cplx_from_f64, Cplx, Real};
use crate::topology::{ApKind, NetworkTopology};

/// Log-distance path loss `intercept + slope * log10(d_km)` in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathLoss {
    pub intercept_db: f64,
    pub slope_db: f64,
}

impl PathLoss {
    pub const MACRO: Self = Self { intercept_db: 128.1, slope_db: 37.6 };
    pub const PICO: Self = Self { intercept_db: 140.7, slope_db: 36.7 };

    pub fn loss_db(&self, distance_m: f64) -> f64 {
        self.intercept_db + self.slope_db * (distance_m / 1000.0).log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fading {
    Rayleigh,
    /// `f_rk` is the all-ones vector. Debug aid.
    Disabled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub bandwidth_hz: f64,
    /// Watts per hertz.
    pub noise_psd_w_per_hz: f64,
    pub macro_path_loss: PathLoss,
    pub pico_path_loss: PathLoss,
    /// Zero disables shadowing.
    pub shadowing_std_db: f64,
    pub fading: Fading,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            bandwidth_hz: 10e6,
            noise_psd_w_per_hz: crate::scalar::dbm_to_watts(-169.0),
            macro_path_loss: PathLoss::MACRO,
            pico_path_loss: PathLoss::PICO,
            shadowing_std_db: 8.0,
            fading: Fading::Rayleigh,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::invalid("bandwidth", "must be positive"));
        }
        if !(self.noise_psd_w_per_hz >= 0.0) {
            return Err(Error::invalid("noise_psd", "must be non-negative"));
        }
        if !(self.shadowing_std_db >= 0.0) {
            return Err(Error::invalid("shadowing_std_db", "must be non-negative"));
        }
        Ok(())
    }
}

/// Read access shared by true and estimated channels.
pub trait ChannelView<T: Real> {
    fn num_aps(&self) -> usize;
    fn num_users(&self) -> usize;
    fn antennas(&self) -> &[usize];
    fn block(&self, r: usize, k: usize) -> &[Cplx<T>];
    /// Thermal noise power, watts.
    fn noise_power(&self) -> T;
    fn bandwidth(&self) -> T;

    /// Stacked channel `h_k` over all APs.
    fn stacked(&self, k: usize) -> Vec<Cplx<T>> {
        (0..self.num_aps())
            .flat_map(|r| self.block(r, k).iter().copied())
            .collect()
    }
}

/// Large-scale gains `g_rk` (linear), row-major over `(r, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LargeScale {
    pub num_users: usize,
    pub gains: Vec<f64>,
}

impl LargeScale {
    pub fn gain(&self, r: usize, k: usize) -> f64 {
        self.gains[r * self.num_users + k]
    }
}

pub fn draw_large_scale(
    topology: &NetworkTopology,
    params: &ChannelParams,
    rng: &mut impl Rng,
) -> LargeScale {
    let k_total = topology.num_users();
    let mut gains = Vec::with_capacity(topology.num_aps() * k_total);
    for (r, ap) in topology.aps.iter().enumerate() {
        let model = match ap.kind {
            ApKind::Macro => params.macro_path_loss,
            ApKind::Pico => params.pico_path_loss,
        };
        for k in 0..k_total {
            let mut loss_db = model.loss_db(topology.distance(r, k));
            if params.shadowing_std_db > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                loss_db += params.shadowing_std_db * z;
            }
            gains.push(10f64.powf(-loss_db / 10.0));
        }
    }
    LargeScale {
        num_users: k_total,
        gains,
    }
}

/// One circularly-symmetric complex Gaussian sample with variance `var`.
#[inline]
fn cn_sample(rng: &mut impl Rng, var: f64) -> (f64, f64) {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    (s * re, s * im)
}

/// True channel `h_rk` for every (AP, user) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix<T> {
    antennas: Vec<usize>,
    num_users: usize,
    gains: Vec<T>,
    blocks: Vec<Vec<Cplx<T>>>,
    bandwidth: T,
    noise_psd: T,
}

impl<T: Real> ChannelMatrix<T> {
    /// Builds a channel from explicit blocks indexed `blocks[r][k]`.
    /// Large-scale gains are set to one.
    pub fn from_blocks(blocks: Vec<Vec<Vec<Cplx<T>>>>, bandwidth: T, noise_psd: T) -> Result<Self> {
        let antennas: Vec<usize> = blocks
            .iter()
            .map(|per_ap| per_ap.first().map_or(0, Vec::len))
            .collect();
        let num_users = blocks.first().map_or(0, Vec::len);
        if antennas.is_empty() || num_users == 0 {
            return Err(Error::Shape("channel needs at least one AP and one user".into()));
        }
        let mut flat = Vec::with_capacity(antennas.len() * num_users);
        for (r, per_ap) in blocks.into_iter().enumerate() {
            if per_ap.len() != num_users {
                return Err(Error::Shape(format!("AP {r} has {} user blocks", per_ap.len())));
            }
            for (k, b) in per_ap.into_iter().enumerate() {
                if b.len() != antennas[r] || b.is_empty() {
                    return Err(Error::Shape(format!("block ({r},{k}) has length {}", b.len())));
                }
                if b.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(Error::invalid("channel", format!("block ({r},{k}) is not finite")));
                }
                flat.push(b);
            }
        }
        Ok(Self {
            gains: vec![T::one(); flat.len()],
            antennas,
            num_users,
            blocks: flat,
            bandwidth,
            noise_psd,
        })
    }

    /// Small-scale redraw on top of fixed large-scale gains.
    pub fn draw_fading(
        topology: &NetworkTopology,
        large: &LargeScale,
        params: &ChannelParams,
        rng: &mut impl Rng,
    ) -> Self {
        let antennas = topology.antennas();
        let num_users = topology.num_users();
        let mut blocks = Vec::with_capacity(antennas.len() * num_users);
        let mut gains = Vec::with_capacity(antennas.len() * num_users);
        for (r, &m) in antennas.iter().enumerate() {
            for k in 0..num_users {
                let g = large.gain(r, k);
                let amp = g.sqrt();
                let block = (0..m)
                    .map(|_| match params.fading {
                        Fading::Rayleigh => {
                            let (re, im) = cn_sample(rng, 1.0);
                            cplx_from_f64(amp * re, amp * im)
                        }
                        Fading::Disabled => cplx_from_f64(amp, 0.0),
                    })
                    .collect();
                blocks.push(block);
                gains.push(T::lit(g));
            }
        }
        Self {
            antennas,
            num_users,
            gains,
            blocks,
            bandwidth: T::lit(params.bandwidth_hz),
            noise_psd: T::lit(params.noise_psd_w_per_hz),
        }
    }

    pub fn large_scale_gain(&self, r: usize, k: usize) -> T {
        self.gains[r * self.num_users + k]
    }

    pub fn noise_psd(&self) -> T {
        self.noise_psd
    }

    /// Same channel with every user index mapped through `perm`
    /// (`new[k] = old[perm[k]]`).
    pub fn permute_users(&self, perm: &[usize]) -> Self {
        let mut out = self.clone();
        for r in 0..self.antennas.len() {
            for (k, &src) in perm.iter().enumerate() {
                out.blocks[r * self.num_users + k] = self.blocks[r * self.num_users + src].clone();
                out.gains[r * self.num_users + k] = self.gains[r * self.num_users + src];
            }
        }
        out
    }
}

impl<T: Real> ChannelView<T> for ChannelMatrix<T> {
    fn num_aps(&self) -> usize {
        self.antennas.len()
    }
    fn num_users(&self) -> usize {
        self.num_users
    }
    fn antennas(&self) -> &[usize] {
        &self.antennas
    }
    fn block(&self, r: usize, k: usize) -> &[Cplx<T>] {
        &self.blocks[r * self.num_users + k]
    }
    fn noise_power(&self) -> T {
        self.noise_psd * self.bandwidth
    }
    fn bandwidth(&self) -> T {
        self.bandwidth
    }
}

/// Path loss, shadowing and fading for every pair, from a single seed.
pub fn draw_channel<T: Real>(
    topology: &NetworkTopology,
    params: &ChannelParams,
    rng_seed: u64,
) -> ChannelMatrix<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let large = draw_large_scale(topology, params, &mut rng);
    ChannelMatrix::draw_fading(topology, &large, params, &mut rng)
}

/// Outdated channel estimate `h~_rk = h_rk + e_rk`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyChannelMatrix<T> {
    antennas: Vec<usize>,
    num_users: usize,
    blocks: Vec<Vec<Cplx<T>>>,
    error_variance: T,
    bandwidth: T,
    noise_psd: T,
}

impl<T: Real> NoisyChannelMatrix<T> {
    pub fn error_variance(&self) -> T {
        self.error_variance
    }

    /// Perfect estimate, used when a solver is run on exact CSI.
    pub fn exact(channel: &ChannelMatrix<T>) -> Self {
        Self {
            antennas: channel.antennas.clone(),
            num_users: channel.num_users,
            blocks: channel.blocks.clone(),
            error_variance: T::zero(),
            bandwidth: channel.bandwidth,
            noise_psd: channel.noise_psd,
        }
    }
}

impl<T: Real> ChannelView<T> for NoisyChannelMatrix<T> {
    fn num_aps(&self) -> usize {
        self.antennas.len()
    }
    fn num_users(&self) -> usize {
        self.num_users
    }
    fn antennas(&self) -> &[usize] {
        &self.antennas
    }
    fn block(&self, r: usize, k: usize) -> &[Cplx<T>] {
        &self.blocks[r * self.num_users + k]
    }
    fn noise_power(&self) -> T {
        self.noise_psd * self.bandwidth
    }
    fn bandwidth(&self) -> T {
        self.bandwidth
    }
}

pub fn corrupt_csi<T: Real>(
    channel: &ChannelMatrix<T>,
    error_variance: f64,
    rng_seed: u64,
) -> Result<NoisyChannelMatrix<T>> {
    if !(error_variance >= 0.0) {
        return Err(Error::invalid("error_variance", "must be non-negative"));
    }
    let mut noisy = NoisyChannelMatrix::exact(channel);
    noisy.error_variance = T::lit(error_variance);
    if error_variance == 0.0 {
        return Ok(noisy);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for (block, gain) in noisy.blocks.iter_mut().zip(&channel.gains) {
        let amp = gain.to_f64_lossy().sqrt();
        for h in block.iter_mut() {
            let (re, im) = cn_sample(&mut rng, error_variance);
            *h += cplx_from_f64(amp * re, amp * im);
        }
    }
    Ok(noisy)
}

/// Thermal noise power `psd * bandwidth`.
pub fn noise_power<T: Real>(channel: &impl ChannelView<T>) -> T {
    channel.noise_power()
}

/// Debug dump: one row per `(r, k)` with interleaved real/imaginary parts.
pub fn write_channel_csv<T: Real, W: Write>(channel: &impl ChannelView<T>, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    let max_m = channel.antennas().iter().copied().max().unwrap_or(0);
    let mut header = vec!["ap".to_string(), "user".to_string()];
    for i in 0..max_m {
        header.push(format!("re{i}"));
        header.push(format!("im{i}"));
    }
    w.write_record(&header)?;
    for r in 0..channel.num_aps() {
        for k in 0..channel.num_users() {
            let mut row = vec![r.to_string(), k.to_string()];
            for z in channel.block(r, k) {
                row.push(format!("{:e}", z.re));
                row.push(format!("{:e}", z.im));
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
