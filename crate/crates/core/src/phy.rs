//! Factory geometry, indoor-factory pathloss, LOS blockage and the uplink
//! outage test.
//!
//! Everything here is a pure function of its inputs. The engine evaluates
//! these once per UE when a run starts (UEs are static), so none of it sits
//! on the per-slot hot path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Thermal noise power spectral density at room temperature.
pub const NOISE_PSD_DBM_PER_HZ: f64 = -174.0;

/// Pathloss is not evaluated closer than this to the gNB.
pub const MIN_DISTANCE_M: f64 = 1.0;

/// Subcarriers per channel (one NR resource block).
pub const SUBCARRIERS_PER_CHANNEL: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    fn axis(&self, i: usize) -> f64 {
        match i {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

/// An axis-aligned box standing in for a machine on the factory floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: Position,
    pub half_extents: Position,
}

impl Obstacle {
    pub fn new(center: Position, half_extents: Position) -> Self {
        Self {
            center,
            half_extents,
        }
    }

    pub fn contains(&self, p: &Position) -> bool {
        (0..3).all(|i| (p.axis(i) - self.center.axis(i)).abs() <= self.half_extents.axis(i))
    }

    /// Slab test of the closed segment `a`–`b` against the closed box.
    pub fn intersects_segment(&self, a: &Position, b: &Position) -> bool {
        let mut t_min = 0.0_f64;
        let mut t_max = 1.0_f64;
        for i in 0..3 {
            let origin = a.axis(i);
            let dir = b.axis(i) - origin;
            let lo = self.center.axis(i) - self.half_extents.axis(i);
            let hi = self.center.axis(i) + self.half_extents.axis(i);
            if dir == 0.0 {
                if origin < lo || origin > hi {
                    return false;
                }
                continue;
            }
            let (mut t0, mut t1) = ((lo - origin) / dir, (hi - origin) / dir);
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            t_min = t_min.max(t0);
            t_max = t_max.min(t1);
            if t_min > t_max {
                return false;
            }
        }
        true
    }
}

/// `true` when the straight segment between `ue` and `gnb` clears every obstacle.
pub fn is_los(ue: &Position, gnb: &Position, obstacles: &[Obstacle]) -> bool {
    !obstacles.iter().any(|o| o.intersects_segment(ue, gnb))
}

/// 3GPP indoor-factory sub-scenarios. Only the NLOS law differs between them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfVariant {
    /// Sparse clutter, low base station.
    #[default]
    Sl,
    /// Dense clutter, low base station.
    Dl,
    /// Sparse clutter, high base station.
    Sh,
    /// Dense clutter, high base station.
    Dh,
}

impl InfVariant {
    pub fn shadowing_sigma_db(self, los: bool) -> f64 {
        if los {
            return 4.3;
        }
        match self {
            InfVariant::Sl => 5.7,
            InfVariant::Dl => 7.2,
            InfVariant::Sh => 5.9,
            InfVariant::Dh => 4.0,
        }
    }
}

fn los_pathloss_db(d: f64, fc_ghz: f64) -> f64 {
    31.84 + 21.50 * d.log10() + 19.00 * fc_ghz.log10()
}

fn sl_pathloss_db(d: f64, fc_ghz: f64) -> f64 {
    33.0 + 25.5 * d.log10() + 20.0 * fc_ghz.log10()
}

/// Median pathloss in dB (no shadowing). Distances under 1 m are clamped.
pub fn pathloss_db(
    ue: &Position,
    gnb: &Position,
    los: bool,
    fc_ghz: f64,
    variant: InfVariant,
) -> f64 {
    let d = ue.distance(gnb).max(MIN_DISTANCE_M);
    let los_pl = los_pathloss_db(d, fc_ghz);
    if los {
        return los_pl;
    }
    let nlos_pl = match variant {
        InfVariant::Sl => sl_pathloss_db(d, fc_ghz),
        // DL is floored at the SL law as well as LOS.
        InfVariant::Dl => {
            let dl = 18.6 + 35.7 * d.log10() + 20.0 * fc_ghz.log10();
            dl.max(sl_pathloss_db(d, fc_ghz))
        }
        InfVariant::Sh => 32.4 + 23.0 * d.log10() + 20.0 * fc_ghz.log10(),
        InfVariant::Dh => 33.63 + 21.9 * d.log10() + 20.0 * fc_ghz.log10(),
    };
    nlos_pl.max(los_pl)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub carrier_ghz: f64,
    pub bandwidth_mhz: f64,
    pub subcarrier_spacing_khz: f64,
    pub ul_power_dbm: f64,
    /// Only used to document the assumed error-free feedback link.
    pub dl_power_dbm: f64,
    /// Linear antenna gain, applied at both ends.
    pub antenna_gain: f64,
    pub sinr_threshold_db: f64,
    pub noise_figure_db: f64,
    pub shadowing: bool,
    pub inf_variant: InfVariant,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            carrier_ghz: 3.5,
            bandwidth_mhz: 20.0,
            subcarrier_spacing_khz: 30.0,
            ul_power_dbm: 23.0,
            dl_power_dbm: 30.0,
            antenna_gain: 1.0,
            sinr_threshold_db: -5.0,
            noise_figure_db: 5.0,
            shadowing: false,
            inf_variant: InfVariant::Sl,
        }
    }
}

impl RadioConfig {
    /// Number of whole resource blocks that fit in the carrier bandwidth.
    pub fn derived_channel_count(&self) -> usize {
        let rb_khz = SUBCARRIERS_PER_CHANNEL * self.subcarrier_spacing_khz;
        (self.bandwidth_mhz * 1e3 / rb_khz).floor() as usize
    }

    pub fn channel_bandwidth_hz(&self, channels: usize) -> f64 {
        self.bandwidth_mhz * 1e6 / channels as f64
    }

    pub fn noise_dbm(&self, channels: usize) -> f64 {
        NOISE_PSD_DBM_PER_HZ + 10.0 * self.channel_bandwidth_hz(channels).log10() + self.noise_figure_db
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("radio.carrier_ghz", self.carrier_ghz),
            ("radio.bandwidth_mhz", self.bandwidth_mhz),
            ("radio.subcarrier_spacing_khz", self.subcarrier_spacing_khz),
            ("radio.antenna_gain", self.antenna_gain),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(field, format!("must be finite and > 0, got {v}")));
            }
        }
        for (field, v) in [
            ("radio.ul_power_dbm", self.ul_power_dbm),
            ("radio.dl_power_dbm", self.dl_power_dbm),
            ("radio.noise_figure_db", self.noise_figure_db),
        ] {
            if !v.is_finite() {
                return Err(Error::config(field, format!("must be finite, got {v}")));
            }
        }
        if self.sinr_threshold_db.is_nan() {
            return Err(Error::config("radio.sinr_threshold_db", "must not be NaN"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub length_m: f64,
    pub width_m: f64,
    pub height_m: f64,
    /// Half extents of every machine box (x, y, z).
    pub machine_half_extents_m: [f64; 3],
    /// Machines placed in addition to the one each UE is mounted on.
    pub extra_machines: usize,
    pub ue_height_m: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            length_m: 15.0,
            width_m: 15.0,
            height_m: 3.0,
            machine_half_extents_m: [0.5, 0.5, 1.0],
            extra_machines: 0,
            ue_height_m: 1.5,
        }
    }
}

impl GeometryConfig {
    pub fn gnb(&self) -> Position {
        Position::new(self.length_m / 2.0, self.width_m / 2.0, self.height_m)
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("geometry.length_m", self.length_m),
            ("geometry.width_m", self.width_m),
            ("geometry.height_m", self.height_m),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(field, format!("must be finite and > 0, got {v}")));
            }
        }
        let [hx, hy, hz] = self.machine_half_extents_m;
        if !(hx >= 0.0 && hy >= 0.0 && hz >= 0.0) {
            return Err(Error::config("geometry.machine_half_extents_m", "must be >= 0"));
        }
        if 2.0 * hx > self.length_m || 2.0 * hy > self.width_m || 2.0 * hz > self.height_m {
            return Err(Error::config(
                "geometry.machine_half_extents_m",
                "machine does not fit inside the factory",
            ));
        }
        if !(self.ue_height_m >= 0.0 && self.ue_height_m <= self.height_m) {
            return Err(Error::config(
                "geometry.ue_height_m",
                format!("must lie in [0, {}]", self.height_m),
            ));
        }
        Ok(())
    }

    /// A machine box resting on the floor, centred on `(x, y)`.
    pub fn machine_at(&self, x: f64, y: f64) -> Obstacle {
        let [hx, hy, hz] = self.machine_half_extents_m;
        Obstacle::new(Position::new(x, y, hz), Position::new(hx, hy, hz))
    }

    /// Range of valid machine centres along x and y so the box stays inside.
    pub fn placement_bounds(&self) -> ((f64, f64), (f64, f64)) {
        let [hx, hy, _] = self.machine_half_extents_m;
        ((hx, self.length_m - hx), (hy, self.width_m - hy))
    }
}

/// Static link state of one UE for the whole run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub position: Position,
    pub los: bool,
    pub pathloss_db: f64,
    pub shadowing_db: f64,
    pub snr_db: f64,
}

/// SNR of a lone uplink transmission. Same-channel interference never enters:
/// colliding packets are already lost, and channels are orthogonal.
pub fn uplink_snr_db(radio: &RadioConfig, channels: usize, total_loss_db: f64) -> f64 {
    let gain_db = 2.0 * 10.0 * radio.antenna_gain.log10();
    radio.ul_power_dbm + gain_db - total_loss_db - radio.noise_dbm(channels)
}

/// Evaluates the link of a UE whose own machine is excluded from `obstacles`.
pub fn evaluate_link(
    ue: Position,
    gnb: &Position,
    obstacles: &[Obstacle],
    radio: &RadioConfig,
    channels: usize,
    shadowing_db: f64,
) -> Link {
    let los = is_los(&ue, gnb, obstacles);
    let pl = pathloss_db(&ue, gnb, los, radio.carrier_ghz, radio.inf_variant);
    Link {
        position: ue,
        los,
        pathloss_db: pl,
        shadowing_db,
        snr_db: uplink_snr_db(radio, channels, pl + shadowing_db),
    }
}

/// A lone transmission is lost when its SNR falls below the sensitivity threshold.
pub fn is_outage(
    ue: Position,
    gnb: &Position,
    obstacles: &[Obstacle],
    radio: &RadioConfig,
    channels: usize,
    shadowing_db: f64,
) -> bool {
    let link = evaluate_link(ue, gnb, obstacles, radio, channels, shadowing_db);
    link.snr_db < radio.sinr_threshold_db
}
