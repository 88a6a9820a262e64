//! Two-tier HetNet instance generation.
//!
//! A drop consists of one MBS (station id 0) and a set of SBSs placed uniformly
//! over a rectangular area, mobile devices placed uniformly over the same area,
//! and a channel tensor holding a linear power gain for every
//! device/station/subchannel/direction quadruple.
//!
//! Gains combine close-in reference path loss, log-normal shadowing drawn once
//! per device-station link and direction, and unit-mean exponential (Rayleigh
//! power) fading drawn per subchannel.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mec_model::TaskSpec;
use crate::units::dbm_to_watts;

pub const SPEED_OF_LIGHT: f64 = 2.998e8;

/// Link direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Ul,
    Dl,
}

impl Direction {
    pub const ALL: [Direction; 2] = [Direction::Ul, Direction::Dl];

    fn index(self) -> usize {
        match self {
            Direction::Ul => 0,
            Direction::Dl => 1,
        }
    }
}

/// Distribution offloaded tasks are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskDistribution {
    pub input_bits_min: f64,
    pub input_bits_max: f64,
    pub output_ratio: f64,
    pub cycles_per_bit_classes: Vec<f64>,
}

impl Default for TaskDistribution {
    fn default() -> Self {
        Self {
            input_bits_min: 3e6,
            input_bits_max: 6e6,
            output_ratio: 0.2,
            cycles_per_bit_classes: vec![330.0, 960.0, 1900.0],
        }
    }
}

impl TaskDistribution {
    fn validate(&self) -> Result<()> {
        if !(self.input_bits_min > 0.0 && self.input_bits_max >= self.input_bits_min) {
            return Err(Error::Config(
                "task input size range must be positive and ordered".into(),
            ));
        }
        if !(self.output_ratio > 0.0) {
            return Err(Error::Config("task output ratio must be positive".into()));
        }
        if self.cycles_per_bit_classes.is_empty()
            || self.cycles_per_bit_classes.iter().any(|&b| !(b > 0.0))
        {
            return Err(Error::Config(
                "cycles-per-bit classes must be nonempty and positive".into(),
            ));
        }
        Ok(())
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> TaskSpec {
        let input_bits = if self.input_bits_max > self.input_bits_min {
            rng.gen_range(self.input_bits_min..self.input_bits_max)
        } else {
            self.input_bits_min
        };
        let class = rng.gen_range(0..self.cycles_per_bit_classes.len());
        TaskSpec::new(
            input_bits,
            self.output_ratio,
            self.cycles_per_bit_classes[class],
        )
    }
}

/// Scenario parameters for one drop. Defaults reproduce the reference
/// simulation setup: a single macro cell of area `1/mbs_density` km².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub area_width_m: f64,
    pub area_height_m: f64,
    /// Nodes per km².
    pub mbs_density: f64,
    pub sbs_density: f64,
    pub md_density: f64,
    /// Overrides the density-derived SBS count.
    pub n_sbs: Option<usize>,
    /// Overrides the density-derived device count.
    pub n_md: Option<usize>,
    pub carrier_frequency_hz: f64,
    pub reference_distance_m: f64,
    pub pathloss_exponent: f64,
    pub shadowing_mean_db: f64,
    pub shadowing_std_db: f64,
    pub ul_bandwidth_hz: f64,
    pub dl_bandwidth_hz: f64,
    pub n_subchannels: usize,
    pub noise_density_dbm_hz: f64,
    pub md_max_power_dbm: f64,
    pub mbs_max_power_dbm: f64,
    pub sbs_max_power_dbm: f64,
    /// CPU cycles per second.
    pub mbs_compute_hz: f64,
    pub sbs_compute_hz: f64,
    /// Backhaul capacity in bits per second.
    pub backhaul_bps: f64,
    pub fpc_target_dbm: f64,
    pub fpc_compensation: f64,
    /// Number of nearest stations whose subchannels a device finds acceptable.
    pub candidate_stations: usize,
    pub mbs_load_factor: f64,
    pub sbs_load_factor: f64,
    pub tasks: TaskDistribution,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let side = (1e6_f64 / 5.0).sqrt();
        Self {
            area_width_m: side,
            area_height_m: side,
            mbs_density: 5.0,
            sbs_density: 25.0,
            md_density: 250.0,
            n_sbs: None,
            n_md: None,
            carrier_frequency_hz: 2e9,
            reference_distance_m: 1.0,
            pathloss_exponent: 3.0,
            shadowing_mean_db: 0.0,
            shadowing_std_db: 4.0,
            ul_bandwidth_hz: 5e6,
            dl_bandwidth_hz: 5e6,
            n_subchannels: 25,
            noise_density_dbm_hz: -174.0,
            md_max_power_dbm: 23.0,
            mbs_max_power_dbm: 46.0,
            sbs_max_power_dbm: 30.0,
            mbs_compute_hz: 36e9,
            sbs_compute_hz: 3.6e9,
            backhaul_bps: 1e7,
            fpc_target_dbm: -80.0,
            fpc_compensation: 0.7,
            candidate_stations: 2,
            mbs_load_factor: 2.0,
            sbs_load_factor: 0.8,
            tasks: TaskDistribution::default(),
            seed: 1,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("area_width_m", self.area_width_m),
            ("area_height_m", self.area_height_m),
            ("mbs_density", self.mbs_density),
            ("sbs_density", self.sbs_density),
            ("md_density", self.md_density),
            ("carrier_frequency_hz", self.carrier_frequency_hz),
            ("reference_distance_m", self.reference_distance_m),
            ("pathloss_exponent", self.pathloss_exponent),
            ("ul_bandwidth_hz", self.ul_bandwidth_hz),
            ("dl_bandwidth_hz", self.dl_bandwidth_hz),
            ("mbs_compute_hz", self.mbs_compute_hz),
            ("sbs_compute_hz", self.sbs_compute_hz),
            ("backhaul_bps", self.backhaul_bps),
            ("mbs_load_factor", self.mbs_load_factor),
            ("sbs_load_factor", self.sbs_load_factor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(self.shadowing_std_db >= 0.0) {
            return Err(Error::Config("shadowing_std_db must be nonnegative".into()));
        }
        if self.n_subchannels == 0 {
            return Err(Error::Config("n_subchannels must be at least 1".into()));
        }
        if self.candidate_stations == 0 {
            return Err(Error::Config(
                "candidate_stations must be at least 1".into(),
            ));
        }
        if self.sbs_max_power_dbm >= self.mbs_max_power_dbm {
            return Err(Error::Config(
                "SBS max power must be below MBS max power".into(),
            ));
        }
        if self.sbs_compute_hz >= self.mbs_compute_hz {
            return Err(Error::Config(
                "SBS compute capacity must be below MBS capacity".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.fpc_compensation) {
            return Err(Error::Config("fpc_compensation must lie in [0, 1]".into()));
        }
        self.tasks.validate()
    }

    pub fn area_km2(&self) -> f64 {
        self.area_width_m * self.area_height_m / 1e6
    }

    pub fn sbs_count(&self) -> usize {
        self.n_sbs
            .unwrap_or_else(|| (self.sbs_density * self.area_km2()).round() as usize)
    }

    pub fn md_count(&self) -> usize {
        self.n_md
            .unwrap_or_else(|| (self.md_density * self.area_km2()).round() as usize)
    }

    /// Bandwidth of one subchannel in the given direction.
    pub fn subchannel_bandwidth(&self, dir: Direction) -> f64 {
        let total = match dir {
            Direction::Ul => self.ul_bandwidth_hz,
            Direction::Dl => self.dl_bandwidth_hz,
        };
        total / self.n_subchannels as f64
    }

    /// Noise power per subchannel in watts.
    pub fn noise_power(&self, dir: Direction) -> f64 {
        dbm_to_watts(self.noise_density_dbm_hz) * self.subchannel_bandwidth(dir)
    }

    pub fn md_max_power(&self) -> f64 {
        dbm_to_watts(self.md_max_power_dbm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StationKind {
    Mbs,
    Sbs,
}

impl StationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StationKind::Mbs => "MBS",
            StationKind::Sbs => "SBS",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Station {
    pub id: usize,
    pub kind: StationKind,
    pub position: (f64, f64),
    pub max_tx_power_dbm: f64,
    /// CPU cycles per second of the attached cloudlet.
    pub compute_capacity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Device {
    pub id: usize,
    pub position: (f64, f64),
    pub max_tx_power_dbm: f64,
    pub task: TaskSpec,
}

impl Device {
    pub fn max_tx_power(&self) -> f64 {
        dbm_to_watts(self.max_tx_power_dbm)
    }
}

pub fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Places stations and devices uniformly over the configured area.
///
/// Station 0 is the MBS. Positions, then tasks, are drawn from a generator
/// seeded with `cfg.seed`.
pub fn generate_topology(cfg: &NetworkConfig) -> Result<(Vec<Station>, Vec<Device>)> {
    cfg.validate()?;
    let n_sbs = cfg.sbs_count();
    let n_md = cfg.md_count();
    if n_md == 0 {
        return Err(Error::Config(
            "configuration yields zero mobile devices".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let place = |rng: &mut ChaCha8Rng| {
        (
            rng.gen::<f64>() * cfg.area_width_m,
            rng.gen::<f64>() * cfg.area_height_m,
        )
    };

    let mut stations = Vec::with_capacity(n_sbs + 1);
    for id in 0..=n_sbs {
        let (kind, power, compute) = if id == 0 {
            (StationKind::Mbs, cfg.mbs_max_power_dbm, cfg.mbs_compute_hz)
        } else {
            (StationKind::Sbs, cfg.sbs_max_power_dbm, cfg.sbs_compute_hz)
        };
        stations.push(Station {
            id,
            kind,
            position: place(&mut rng),
            max_tx_power_dbm: power,
            compute_capacity: compute,
        });
    }

    let positions: Vec<_> = (0..n_md).map(|_| place(&mut rng)).collect();
    let devices = positions
        .into_iter()
        .enumerate()
        .map(|(id, position)| Device {
            id,
            position,
            max_tx_power_dbm: cfg.md_max_power_dbm,
            task: cfg.tasks.sample(&mut rng),
        })
        .collect();

    Ok((stations, devices))
}

/// Close-in reference distance path loss in dB, plus shadowing `shadowing_db`.
///
/// Distances below the reference distance are clamped to it.
pub fn pathloss_db(d: f64, cfg: &NetworkConfig, shadowing_db: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("distance must be positive, got {d}")));
    }
    let d0 = cfg.reference_distance_m;
    let d = d.max(d0);
    let fspl_d0 = 20.0
        * (4.0 * std::f64::consts::PI * d0 * cfg.carrier_frequency_hz / SPEED_OF_LIGHT).log10();
    Ok(fspl_d0 + 10.0 * cfg.pathloss_exponent * (d / d0).log10() + shadowing_db)
}

/// Per-link channel state for one drop.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    n_md: usize,
    n_bs: usize,
    n_sub: usize,
    /// `[dir][k][m][n]`, linear power gain.
    gain: Vec<f64>,
    /// `[dir][k][m]`, path loss including shadowing, dB.
    pathloss: Vec<f64>,
    /// `[k][m]`, meters.
    distance: Vec<f64>,
}

impl ChannelTensor {
    /// Builds a tensor from explicit values. `gain` is indexed
    /// `[dir][k][m][n]` and `pathloss_db` `[dir][k][m]`.
    pub fn from_parts(
        n_md: usize,
        n_bs: usize,
        n_sub: usize,
        gain: Vec<f64>,
        pathloss_db: Vec<f64>,
        distance: Vec<f64>,
    ) -> Result<Self> {
        if gain.len() != 2 * n_md * n_bs * n_sub
            || pathloss_db.len() != 2 * n_md * n_bs
            || distance.len() != n_md * n_bs
        {
            return Err(Error::Config(
                "channel tensor dimensions do not match".into(),
            ));
        }
        if gain.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::Domain(
                "channel gains must be positive and finite".into(),
            ));
        }
        Ok(Self {
            n_md,
            n_bs,
            n_sub,
            gain,
            pathloss: pathloss_db,
            distance,
        })
    }

    /// Builds a tensor whose gains do not depend on subchannel or direction:
    /// `gain[k][m]` is replicated, and path loss is derived from it.
    pub fn flat(n_sub: usize, gain: &[Vec<f64>]) -> Result<Self> {
        let n_md = gain.len();
        let n_bs = gain.first().map_or(0, Vec::len);
        let mut g = Vec::with_capacity(2 * n_md * n_bs * n_sub);
        let mut pl = Vec::with_capacity(2 * n_md * n_bs);
        for _ in Direction::ALL {
            for row in gain {
                for &h in row {
                    pl.push(-10.0 * h.log10());
                    g.extend(std::iter::repeat_n(h, n_sub));
                }
            }
        }
        let distance = vec![1.0; n_md * n_bs];
        Self::from_parts(n_md, n_bs, n_sub, g, pl, distance)
    }

    pub fn n_md(&self) -> usize {
        self.n_md
    }

    pub fn n_bs(&self) -> usize {
        self.n_bs
    }

    pub fn n_sub(&self) -> usize {
        self.n_sub
    }

    #[inline]
    pub fn gain(&self, dir: Direction, k: usize, m: usize, n: usize) -> f64 {
        self.gain[((dir.index() * self.n_md + k) * self.n_bs + m) * self.n_sub + n]
    }

    pub fn set_gain(&mut self, dir: Direction, k: usize, m: usize, n: usize, value: f64) {
        assert!(value.is_finite() && value > 0.0);
        self.gain[((dir.index() * self.n_md + k) * self.n_bs + m) * self.n_sub + n] = value;
    }

    /// Path loss including shadowing, excluding fading.
    #[inline]
    pub fn pathloss_db(&self, dir: Direction, k: usize, m: usize) -> f64 {
        self.pathloss[(dir.index() * self.n_md + k) * self.n_bs + m]
    }

    #[inline]
    pub fn distance(&self, k: usize, m: usize) -> f64 {
        self.distance[k * self.n_bs + m]
    }
}

/// Draws shadowing and fading for every link.
///
/// For each direction and device-station pair one shadowing value is drawn;
/// then one exponential fading factor per subchannel.
pub fn sample_channels(
    stations: &[Station],
    devices: &[Device],
    cfg: &NetworkConfig,
    seed: u64,
) -> Result<ChannelTensor> {
    cfg.validate()?;
    let n_md = devices.len();
    let n_bs = stations.len();
    let n_sub = cfg.n_subchannels;
    let shadowing = Normal::new(cfg.shadowing_mean_db, cfg.shadowing_std_db)
        .map_err(|e| Error::Config(format!("shadowing distribution: {e}")))?;

    let mut distance = Vec::with_capacity(n_md * n_bs);
    for dev in devices {
        for st in stations {
            distance.push(
                crate::topology::distance(dev.position, st.position).max(cfg.reference_distance_m),
            );
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gain = Vec::with_capacity(2 * n_md * n_bs * n_sub);
    let mut pathloss = Vec::with_capacity(2 * n_md * n_bs);
    for _dir in Direction::ALL {
        for k in 0..n_md {
            for m in 0..n_bs {
                let chi: f64 = shadowing.sample(&mut rng);
                let pl = pathloss_db(distance[k * n_bs + m], cfg, chi)?;
                pathloss.push(pl);
                let mean_gain = 10f64.powf(-pl / 10.0);
                for _n in 0..n_sub {
                    let fading: f64 = Exp1.sample(&mut rng);
                    // Exp1 can return exactly zero with vanishing probability.
                    gain.push(mean_gain * fading.max(f64::MIN_POSITIVE));
                }
            }
        }
    }
    ChannelTensor::from_parts(n_md, n_bs, n_sub, gain, pathloss, distance)
}

/// A fully generated drop: configuration, nodes and channels.
#[derive(Debug, Clone)]
pub struct Network {
    pub cfg: NetworkConfig,
    pub stations: Vec<Station>,
    pub devices: Vec<Device>,
    pub channels: ChannelTensor,
}

impl Network {
    /// Generates positions from `cfg.seed` and channels from `channel_seed`.
    pub fn generate(cfg: &NetworkConfig, channel_seed: u64) -> Result<Self> {
        let (stations, devices) = generate_topology(cfg)?;
        let channels = sample_channels(&stations, &devices, cfg, channel_seed)?;
        Ok(Self {
            cfg: cfg.clone(),
            stations,
            devices,
            channels,
        })
    }

    /// Builds a network from a `gain[k][m]` matrix replicated over `n_sub`
    /// subchannels and both directions. Station 0 is the MBS, the rest SBSs;
    /// every device carries a 3 Mbit / 330 cycles-per-bit task. Useful for
    /// hand-built instances.
    pub fn from_gain_matrix(gain: &[Vec<f64>], n_sub: usize) -> Result<Self> {
        let cfg = NetworkConfig {
            n_subchannels: n_sub,
            n_md: Some(gain.len()),
            n_sbs: Some(gain.first().map_or(1, Vec::len).saturating_sub(1)),
            ..NetworkConfig::default()
        };
        let channels = ChannelTensor::flat(n_sub, gain)?;
        let stations = (0..channels.n_bs())
            .map(|id| {
                let mbs = id == 0;
                Station {
                    id,
                    kind: if mbs {
                        StationKind::Mbs
                    } else {
                        StationKind::Sbs
                    },
                    position: (id as f64, 0.0),
                    max_tx_power_dbm: if mbs {
                        cfg.mbs_max_power_dbm
                    } else {
                        cfg.sbs_max_power_dbm
                    },
                    compute_capacity: if mbs {
                        cfg.mbs_compute_hz
                    } else {
                        cfg.sbs_compute_hz
                    },
                }
            })
            .collect();
        let devices = (0..channels.n_md())
            .map(|id| Device {
                id,
                position: (id as f64, 1.0),
                max_tx_power_dbm: cfg.md_max_power_dbm,
                task: TaskSpec::new(3e6, 0.2, 330.0),
            })
            .collect();
        Ok(Self {
            cfg,
            stations,
            devices,
            channels,
        })
    }

    pub fn n_md(&self) -> usize {
        self.devices.len()
    }

    pub fn n_bs(&self) -> usize {
        self.stations.len()
    }

    pub fn n_sub(&self) -> usize {
        self.cfg.n_subchannels
    }

    /// Stations sorted by distance from device `k`, ties by id.
    pub fn stations_by_distance(&self, k: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = (0..self.n_bs()).collect();
        ids.sort_by(|&a, &b| {
            self.channels
                .distance(k, a)
                .total_cmp(&self.channels.distance(k, b))
                .then(a.cmp(&b))
        });
        ids
    }

    /// Writes one row per node: `id,kind,x,y`. Devices use kind `MD`.
    pub fn write_topology_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["id", "kind", "x", "y"])?;
        for st in &self.stations {
            w.write_record([
                st.id.to_string(),
                st.kind.as_str().to_string(),
                st.position.0.to_string(),
                st.position.1.to_string(),
            ])?;
        }
        for dev in &self.devices {
            w.write_record([
                dev.id.to_string(),
                "MD".to_string(),
                dev.position.0.to_string(),
                dev.position.1.to_string(),
            ])?;
        }
        w.flush().map_err(|source| Error::Io {
            path: "<topology csv>".into(),
            source,
        })?;
        Ok(())
    }
}

/// Reads a JSON network configuration file.
pub fn load_network_config(path: &Path) -> Result<NetworkConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let cfg: NetworkConfig = serde_json::from_str(&text)?;
    cfg.validate()?;
    Ok(cfg)
}
