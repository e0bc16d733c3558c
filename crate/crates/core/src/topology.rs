//! Two-tier network geometry on a wrap-around (toroidal) square plane.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::dbm_to_watts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApKind {
    Macro,
    Pico,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccessPoint {
    pub id: usize,
    pub kind: ApKind,
    pub position: Position,
    pub antennas: usize,
    /// Watts.
    pub max_power: f64,
    /// Bits per second.
    pub fronthaul_capacity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct User {
    pub id: usize,
    pub position: Position,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    pub aps: Vec<AccessPoint>,
    pub users: Vec<User>,
    pub plane_extent: f64,
    pub total_antennas: usize,
}

impl NetworkTopology {
    /// Assembles a topology from explicit parts, checking every invariant.
    pub fn new(aps: Vec<AccessPoint>, users: Vec<User>, plane_extent: f64) -> Result<Self> {
        if aps.is_empty() {
            return Err(Error::invalid("aps", "at least one access point is required"));
        }
        if users.is_empty() {
            return Err(Error::invalid("users", "at least one user is required"));
        }
        if !(plane_extent > 0.0) {
            return Err(Error::invalid("plane_extent", "must be positive"));
        }
        let inside = |p: &Position| (0.0..plane_extent).contains(&p.x) && (0.0..plane_extent).contains(&p.y);
        for (i, ap) in aps.iter().enumerate() {
            if ap.id != i {
                return Err(Error::invalid("aps", format!("AP at index {i} has id {}", ap.id)));
            }
            if ap.antennas == 0 {
                return Err(Error::invalid("antennas", format!("AP {i} has no antennas")));
            }
            if !(ap.max_power > 0.0) {
                return Err(Error::invalid("max_power", format!("AP {i} power must be positive")));
            }
            if !(ap.fronthaul_capacity > 0.0) {
                return Err(Error::invalid(
                    "fronthaul_capacity",
                    format!("AP {i} capacity must be positive"),
                ));
            }
            if !inside(&ap.position) {
                return Err(Error::invalid("aps", format!("AP {i} lies outside the plane")));
            }
        }
        for (k, u) in users.iter().enumerate() {
            if u.id != k {
                return Err(Error::invalid("users", format!("user at index {k} has id {}", u.id)));
            }
            if !(u.weight >= 0.0) {
                return Err(Error::invalid("weight", format!("user {k} weight must be >= 0")));
            }
            if !inside(&u.position) {
                return Err(Error::invalid("users", format!("user {k} lies outside the plane")));
            }
        }
        let total_antennas = aps.iter().map(|a| a.antennas).sum();
        Ok(Self {
            aps,
            users,
            plane_extent,
            total_antennas,
        })
    }

    pub fn num_aps(&self) -> usize {
        self.aps.len()
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn antennas(&self) -> Vec<usize> {
        self.aps.iter().map(|a| a.antennas).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.weight).collect()
    }

    pub fn distance(&self, r: usize, k: usize) -> f64 {
        wrap_distance(self.aps[r].position, self.users[k].position, self.plane_extent)
    }
}

/// Generation parameters. Powers in watts, capacities in bits/second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyConfig {
    pub num_macro: usize,
    pub num_pico: usize,
    pub num_users: usize,
    pub macro_power_w: f64,
    pub pico_power_w: f64,
    pub macro_capacity_bps: f64,
    pub pico_capacity_bps: f64,
    pub macro_antennas: usize,
    pub pico_antennas: usize,
    pub plane_extent_m: f64,
    pub min_distance_m: f64,
    pub user_weight: f64,
    pub seed: u64,
}

impl Default for TopologyConfig {
    /// 3 macro + 9 pico APs serving 60 users.
    fn default() -> Self {
        Self {
            num_macro: 3,
            num_pico: 9,
            num_users: 60,
            macro_power_w: dbm_to_watts(43.0),
            pico_power_w: dbm_to_watts(30.0),
            macro_capacity_bps: 690e6,
            pico_capacity_bps: 107e6,
            macro_antennas: 4,
            pico_antennas: 2,
            plane_extent_m: 1000.0,
            min_distance_m: 10.0,
            user_weight: 1.0,
            seed: 0,
        }
    }
}

impl TopologyConfig {
    /// Small layout for quick experiments: 1 macro + 3 pico, 8 users, two
    /// antennas everywhere.
    pub fn desk_scale() -> Self {
        Self {
            num_macro: 1,
            num_pico: 3,
            num_users: 8,
            macro_antennas: 2,
            pico_antennas: 2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_macro + self.num_pico == 0 {
            return Err(Error::invalid("num_macro/num_pico", "at least one AP is required"));
        }
        if self.num_users == 0 {
            return Err(Error::invalid("num_users", "at least one user is required"));
        }
        if !(self.plane_extent_m > 0.0) {
            return Err(Error::invalid("plane_extent_m", "must be positive"));
        }
        if !(self.min_distance_m >= 0.0) {
            return Err(Error::invalid("min_distance_m", "must be non-negative"));
        }
        for (name, v) in [
            ("macro_power", self.macro_power_w),
            ("pico_power", self.pico_power_w),
            ("macro_capacity", self.macro_capacity_bps),
            ("pico_capacity", self.pico_capacity_bps),
        ] {
            if !(v > 0.0) {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        if self.macro_antennas == 0 || self.pico_antennas == 0 {
            return Err(Error::invalid("antennas", "must be at least 1"));
        }
        if !(self.user_weight >= 0.0) {
            return Err(Error::invalid("user_weight", "must be >= 0"));
        }
        Ok(())
    }
}

/// Torus distance on a square plane of side `extent`.
pub fn wrap_distance(a: Position, b: Position, extent: f64) -> f64 {
    let axis = |d: f64| {
        let m = d.abs().rem_euclid(extent);
        m.min(extent - m)
    };
    axis(a.x - b.x).hypot(axis(a.y - b.y))
}

/// Macro sites sit on a circle of radius `extent / 4` around the plane
/// centre at equal angular spacing (a single macro sits at the centre).
fn macro_sites(n: usize, extent: f64) -> Vec<Position> {
    let c = extent / 2.0;
    if n == 1 {
        return vec![Position::new(c, c)];
    }
    let radius = extent / 4.0;
    (0..n)
        .map(|i| {
            let theta = PI / 2.0 + 2.0 * PI * i as f64 / n as f64;
            Position::new(c + radius * theta.cos(), c + radius * theta.sin())
        })
        .collect()
}

const MAX_PLACEMENT_ATTEMPTS: usize = 100_000;

pub fn build_topology(config: &TopologyConfig) -> Result<NetworkTopology> {
    config.validate()?;
    let extent = config.plane_extent_m;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let uniform = |rng: &mut ChaCha8Rng| {
        Position::new(rng.random_range(0.0..extent), rng.random_range(0.0..extent))
    };

    let mut aps = Vec::with_capacity(config.num_macro + config.num_pico);
    for position in macro_sites(config.num_macro, extent) {
        aps.push(AccessPoint {
            id: aps.len(),
            kind: ApKind::Macro,
            position,
            antennas: config.macro_antennas,
            max_power: config.macro_power_w,
            fronthaul_capacity: config.macro_capacity_bps,
        });
    }
    for _ in 0..config.num_pico {
        aps.push(AccessPoint {
            id: aps.len(),
            kind: ApKind::Pico,
            position: uniform(&mut rng),
            antennas: config.pico_antennas,
            max_power: config.pico_power_w,
            fronthaul_capacity: config.pico_capacity_bps,
        });
    }

    let mut users = Vec::with_capacity(config.num_users);
    for id in 0..config.num_users {
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let p = uniform(&mut rng);
            if aps
                .iter()
                .all(|ap| wrap_distance(ap.position, p, extent) >= config.min_distance_m)
            {
                placed = Some(p);
                break;
            }
        }
        let position = placed.ok_or_else(|| {
            Error::invalid("min_distance_m", "no user position satisfies the minimum AP distance")
        })?;
        users.push(User {
            id,
            position,
            weight: config.user_weight,
        });
    }

    NetworkTopology::new(aps, users, extent)
}
