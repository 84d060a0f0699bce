//! Problem instances: link budget, Rician factors, pilot assignment and
//! user-centric serving sets.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{correlation_matrix, steering_vector, Correlation};
use crate::error::{Error, Result};
use crate::linalg::{c, CMat, CVec};
use crate::rng::{self, Domain};
use crate::units::{db_to_linear, EARTH_RADIUS_M, SPEED_OF_LIGHT};

// ============================================================================
// Configuration
// ============================================================================

/// A per-user quantity given either once for every user or as a full list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerUser {
    Uniform(f64),
    Each(Vec<f64>),
}

impl PerUser {
    fn resolve(&self, num_users: usize, name: &str) -> Result<Vec<f64>> {
        match self {
            PerUser::Uniform(v) => Ok(vec![*v; num_users]),
            PerUser::Each(v) if v.len() == num_users => Ok(v.clone()),
            PerUser::Each(v) => Err(Error::Config(format!(
                "{name} lists {} values for {num_users} users",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CorrelationModel {
    Identity,
    Exponential { r: f64 },
}

/// One row of the elevation -> Rician factor table, `[min_deg, max_deg)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RicianEntry {
    pub min_deg: f64,
    pub max_deg: f64,
    pub k_linear: f64,
}

/// Simplified constellation geometry: every satellite flies at one altitude,
/// user elevations are drawn from a narrow band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Geometry {
    /// Satellite altitude above the spherical Earth (m).
    pub altitude: f64,
    /// Range `[lo, hi]` (degrees) the user elevations are drawn from.
    pub user_elevation_deg: [f64; 2],
    /// Optional per-satellite elevation offsets (degrees) added to every
    /// user's elevation towards that satellite. Empty means all zero.
    pub satellite_elevation_offsets_deg: Vec<f64>,
    /// Width (degrees) of the window around each satellite's base azimuth
    /// from which link azimuths are drawn. 360 makes every link azimuth
    /// uniform on the circle; small values model co-located users.
    pub azimuth_spread_deg: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            altitude: 550e3,
            user_elevation_deg: [20.0, 20.1],
            satellite_elevation_offsets_deg: Vec::new(),
            azimuth_spread_deg: 360.0,
        }
    }
}

/// Full static description of a system; field names double as the JSON keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub num_satellites: usize,
    pub num_users: usize,
    pub antennas_x: usize,
    pub antennas_y: usize,
    /// Element spacing over wavelength, d_A/λ.
    pub antenna_spacing_ratio: f64,
    /// Carrier frequency (Hz).
    pub carrier_frequency: f64,
    /// Total system bandwidth B (Hz).
    pub total_bandwidth: f64,
    /// Number of sub-bands I.
    pub num_subbands: usize,
    /// Pilot length τ (symbols).
    pub pilot_length: usize,
    /// Pilot power per user (W).
    pub pilot_power: PerUser,
    /// Maximum data power per user (W).
    pub max_power: PerUser,
    /// Minimum rate per user (bit/s).
    pub rate_requirement: PerUser,
    /// Serving-set size |M_k|.
    pub cluster_size: usize,
    /// Maximum users per sub-band N_max.
    pub subband_capacity: usize,
    /// Transmit antenna gain (dBi).
    pub tx_gain: f64,
    /// Receive antenna gain (dBi).
    pub rx_gain: f64,
    /// Receiver noise figure (dB).
    pub noise_figure: f64,
    /// Noise temperature (K).
    pub noise_temperature: f64,
    /// Boltzmann constant (J/K).
    pub boltzmann: f64,
    pub correlation_model: CorrelationModel,
    pub rician_table: Vec<RicianEntry>,
    pub rng_seed: u64,
    #[serde(default)]
    pub geometry: Geometry,
    /// Use this Rician factor on every link instead of the table.
    #[serde(default)]
    pub rician_override: Option<f64>,
}

impl SystemConfig {
    /// Link-budget constants of the reference evaluation: 2 GHz carrier,
    /// 1 MHz, 0/6 dBi gains, 9 dB noise figure, 290 K, 10x10 array.
    pub fn table_one() -> Self {
        Self {
            num_satellites: 4,
            num_users: 5,
            antennas_x: 10,
            antennas_y: 10,
            antenna_spacing_ratio: 0.5,
            carrier_frequency: 2e9,
            total_bandwidth: 1e6,
            num_subbands: 2,
            pilot_length: 3,
            pilot_power: PerUser::Uniform(0.2),
            max_power: PerUser::Uniform(0.2),
            rate_requirement: PerUser::Uniform(0.0),
            cluster_size: 2,
            subband_capacity: 3,
            tx_gain: 0.0,
            rx_gain: 6.0,
            noise_figure: 9.0,
            noise_temperature: 290.0,
            boltzmann: 1.381e-23,
            correlation_model: CorrelationModel::Identity,
            rician_table: default_rician_table(),
            rng_seed: 0,
            geometry: Geometry::default(),
            rician_override: None,
        }
    }

    /// Same link budget with a 4x4 array for quick runs.
    pub fn desk_scale() -> Self {
        Self { antennas_x: 4, antennas_y: 4, ..Self::table_one() }
    }

    pub fn num_antennas(&self) -> usize {
        self.antennas_x * self.antennas_y
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        let k = self.num_users;
        if self.num_satellites == 0 || k == 0 || self.antennas_x == 0 || self.antennas_y == 0 {
            return fail("satellite, user and antenna counts must be positive".into());
        }
        if self.pilot_length == 0 || self.pilot_length > k {
            return fail(format!("pilot length {} must lie in 1..={k}", self.pilot_length));
        }
        if self.num_subbands == 0 || self.num_subbands > k {
            return fail(format!("sub-band count {} must lie in 1..={k}", self.num_subbands));
        }
        if self.subband_capacity == 0 || self.subband_capacity > k {
            return fail(format!("sub-band capacity {} must lie in 1..={k}", self.subband_capacity));
        }
        if self.num_subbands * self.subband_capacity < k {
            return fail(format!(
                "{} sub-bands of capacity {} cannot hold {k} users",
                self.num_subbands, self.subband_capacity
            ));
        }
        if self.cluster_size == 0 || self.cluster_size > self.num_satellites {
            return fail(format!(
                "cluster size {} must lie in 1..={}",
                self.cluster_size, self.num_satellites
            ));
        }
        let positive = [
            ("antenna_spacing_ratio", self.antenna_spacing_ratio),
            ("carrier_frequency", self.carrier_frequency),
            ("total_bandwidth", self.total_bandwidth),
            ("noise_temperature", self.noise_temperature),
            ("boltzmann", self.boltzmann),
            ("geometry.altitude", self.geometry.altitude),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be strictly positive, got {v}"));
            }
        }
        for (name, values) in [("pilot_power", &self.pilot_power), ("max_power", &self.max_power)] {
            if values.resolve(k, name)?.iter().any(|&p| !(p > 0.0)) {
                return fail(format!("{name} must be strictly positive"));
            }
        }
        if self.rate_requirement.resolve(k, "rate_requirement")?.iter().any(|&r| !(r >= 0.0)) {
            return fail("rate_requirement must be non-negative".into());
        }
        if let CorrelationModel::Exponential { r } = self.correlation_model {
            if !(0.0..1.0).contains(&r) {
                return fail(format!("exponential correlation needs 0 <= r < 1, got {r}"));
            }
        }
        for e in &self.rician_table {
            if !(e.min_deg < e.max_deg) || !(e.k_linear >= 0.0) {
                return fail(format!("bad Rician table row {e:?}"));
            }
        }
        match self.rician_override {
            Some(kf) if !(kf >= 0.0) => return fail(format!("rician_override must be >= 0, got {kf}")),
            None if self.rician_table.is_empty() => {
                return fail("a Rician table is required unless rician_override is set".into())
            }
            _ => {}
        }
        let g = &self.geometry;
        let [lo, hi] = g.user_elevation_deg;
        if !(lo > 0.0 && lo <= hi && hi <= 90.0) {
            return fail(format!("user elevation range [{lo}, {hi}] must lie in (0, 90]"));
        }
        if !g.satellite_elevation_offsets_deg.is_empty()
            && g.satellite_elevation_offsets_deg.len() != self.num_satellites
        {
            return fail("satellite_elevation_offsets_deg must list one offset per satellite".into());
        }
        if !(g.azimuth_spread_deg >= 0.0 && g.azimuth_spread_deg <= 360.0) {
            return fail("azimuth_spread_deg must lie in [0, 360]".into());
        }
        Ok(())
    }
}

/// Editable starting table; operators should replace it with the values of
/// the propagation standard they target.
pub fn default_rician_table() -> Vec<RicianEntry> {
    [(0.0, 10.0, 3.0), (10.0, 20.0, 6.0), (20.0, 30.0, 10.0), (30.0, 40.0, 14.0), (40.0, 50.0, 18.0),
     (50.0, 60.0, 22.0), (60.0, 70.0, 26.0), (70.0, 80.0, 30.0), (80.0, 90.0 + 1e-9, 34.0)]
    .into_iter()
    .map(|(min_deg, max_deg, k_linear)| RicianEntry { min_deg, max_deg, k_linear })
    .collect()
}

// ============================================================================
// Link budget primitives
// ============================================================================

/// Thermal noise power over `bandwidth` Hz: B·k_B·T_0·10^(N_dB/10).
pub fn noise_power(bandwidth: f64, config: &SystemConfig) -> Result<f64> {
    if !(bandwidth > 0.0) {
        return Err(Error::Domain(format!("bandwidth must be positive, got {bandwidth}")));
    }
    Ok(bandwidth * config.boltzmann * config.noise_temperature * db_to_linear(config.noise_figure))
}

/// Free-space loss in dB including antenna gains.
pub fn path_loss_db(distance: f64, config: &SystemConfig) -> Result<f64> {
    if !(distance > 0.0) || !(config.carrier_frequency > 0.0) {
        return Err(Error::Domain("distance and carrier frequency must be positive".into()));
    }
    Ok(20.0 * (4.0 * PI * distance * config.carrier_frequency / SPEED_OF_LIGHT).log10()
        - config.rx_gain
        - config.tx_gain)
}

/// Large-scale power gain β = 10^(-loss_dB/10).
pub fn path_gain(distance: f64, config: &SystemConfig) -> Result<f64> {
    Ok(db_to_linear(-path_loss_db(distance, config)?))
}

/// Slant range from a ground user to a satellite at `altitude` seen under
/// `elevation` (radians), spherical Earth.
pub fn slant_range(altitude: f64, elevation: f64) -> f64 {
    let r = EARTH_RADIUS_M;
    let (s, co) = elevation.sin_cos();
    ((r + altitude).powi(2) - (r * co).powi(2)).sqrt() - r * s
}

pub fn rician_factor_lookup(elevation_deg: f64, table: &[RicianEntry]) -> Result<f64> {
    table
        .iter()
        .find(|e| e.min_deg <= elevation_deg && elevation_deg < e.max_deg)
        .map(|e| e.k_linear)
        .ok_or_else(|| Error::Config(format!("elevation {elevation_deg} deg is not covered by the Rician table")))
}

/// The `cluster_size` satellites with the largest gains (ties go to the lower
/// index), returned in ascending index order.
pub fn select_serving_satellites(betas: &[f64], cluster_size: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..betas.len()).collect();
    order.sort_by(|&a, &b| betas[b].total_cmp(&betas[a]).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = order.into_iter().take(cluster_size).collect();
    chosen.sort_unstable();
    chosen
}

// ============================================================================
// Pilots
// ============================================================================

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PilotAssignment {
    pilot_length: usize,
    pilot_index: Vec<usize>,
    cohorts: Vec<Vec<usize>>,
}

impl PilotAssignment {
    pub fn from_indices(pilot_index: Vec<usize>, pilot_length: usize) -> Result<Self> {
        if pilot_length == 0 || pilot_index.iter().any(|&p| p >= pilot_length) {
            return Err(Error::Config(format!("pilot indices must lie in 0..{pilot_length}")));
        }
        let cohorts = pilot_index
            .iter()
            .map(|&p| (0..pilot_index.len()).filter(|&j| pilot_index[j] == p).collect())
            .collect();
        Ok(Self { pilot_length, pilot_index, cohorts })
    }

    pub fn pilot_length(&self) -> usize {
        self.pilot_length
    }

    pub fn pilot_of(&self, k: usize) -> usize {
        self.pilot_index[k]
    }

    pub fn indices(&self) -> &[usize] {
        &self.pilot_index
    }

    /// Users sharing user `k`'s pilot, `k` included, ascending.
    pub fn cohort(&self, k: usize) -> &[usize] {
        &self.cohorts[k]
    }

    pub fn shares_pilot(&self, k: usize, j: usize) -> bool {
        self.pilot_index[k] == self.pilot_index[j]
    }
}

/// Every user draws its pilot uniformly from `0..pilot_length`.
pub fn assign_pilots_random<R: Rng + ?Sized>(num_users: usize, pilot_length: usize, rng: &mut R) -> Result<PilotAssignment> {
    if pilot_length == 0 {
        return Err(Error::Domain("pilot length must be at least 1".into()));
    }
    let idx = (0..num_users).map(|_| rng.gen_range(0..pilot_length)).collect();
    PilotAssignment::from_indices(idx, pilot_length)
}

// ============================================================================
// Links and scenarios
// ============================================================================

/// Statistics of the channel between satellite m and user k.
#[derive(Debug, Clone)]
pub struct LinkStats {
    pub beta: f64,
    pub rician: f64,
    pub correlation: Arc<Correlation>,
    pub los: CVec,
    /// a = β/(K̄+1)
    pub rician_scale: f64,
    pub elevation: f64,
    pub azimuth: f64,
    pub distance: f64,
}

impl LinkStats {
    pub fn new(beta: f64, rician: f64, correlation: Arc<Correlation>, los: CVec) -> Self {
        Self {
            beta,
            rician,
            correlation,
            los,
            rician_scale: beta / (rician + 1.0),
            elevation: f64::NAN,
            azimuth: f64::NAN,
            distance: f64::NAN,
        }
    }

    /// Deterministic part of the channel, sqrt(K̄·a)·h̄.
    pub fn los_mean(&self) -> CVec {
        &self.los * c((self.rician * self.rician_scale).sqrt())
    }

    /// Covariance R = a·Δ.
    pub fn covariance(&self) -> CMat {
        &self.correlation.matrix * c(self.rician_scale)
    }

    /// The same link with a different Rician factor.
    pub fn with_rician(&self, rician: f64) -> Self {
        Self { rician, rician_scale: self.beta / (rician + 1.0), ..self.clone() }
    }
}

/// A complete, immutable problem instance.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: SystemConfig,
    links: Vec<LinkStats>,
    pub pilots: PilotAssignment,
    serving: Vec<Vec<usize>>,
    pub pilot_power: Vec<f64>,
    pub max_power: Vec<f64>,
    pub rate_requirement: Vec<f64>,
}

impl Scenario {
    /// Assembles a scenario from explicit links (`links[m * K + k]`).
    pub fn from_parts(config: SystemConfig, links: Vec<LinkStats>, pilots: PilotAssignment) -> Result<Self> {
        config.validate()?;
        let (m_count, k_count) = (config.num_satellites, config.num_users);
        if links.len() != m_count * k_count {
            return Err(Error::Config(format!("expected {} links, got {}", m_count * k_count, links.len())));
        }
        if pilots.indices().len() != k_count || pilots.pilot_length() != config.pilot_length {
            return Err(Error::Config("pilot assignment does not match the configuration".into()));
        }
        let n = config.num_antennas();
        if links.iter().any(|l| l.los.len() != n || l.correlation.matrix.nrows() != n) {
            return Err(Error::Config(format!("every link must carry {n}-antenna statistics")));
        }
        let serving = (0..k_count)
            .map(|k| {
                let betas: Vec<f64> = (0..m_count).map(|m| links[m * k_count + k].beta).collect();
                select_serving_satellites(&betas, config.cluster_size)
            })
            .collect();
        Ok(Self {
            pilot_power: config.pilot_power.resolve(k_count, "pilot_power")?,
            max_power: config.max_power.resolve(k_count, "max_power")?,
            rate_requirement: config.rate_requirement.resolve(k_count, "rate_requirement")?,
            config,
            links,
            pilots,
            serving,
        })
    }

    /// Builds the scenario from its own `rng_seed`.
    pub fn generate(config: SystemConfig) -> Result<Self> {
        let mut rng = rng::stream(config.rng_seed, Domain::Scenario, 0);
        build_scenario(config, &mut rng)
    }

    pub fn num_users(&self) -> usize {
        self.config.num_users
    }

    pub fn num_satellites(&self) -> usize {
        self.config.num_satellites
    }

    pub fn num_antennas(&self) -> usize {
        self.config.num_antennas()
    }

    pub fn link(&self, m: usize, k: usize) -> &LinkStats {
        &self.links[m * self.config.num_users + k]
    }

    /// Serving set M_k in ascending satellite order.
    pub fn serving(&self, k: usize) -> &[usize] {
        &self.serving[k]
    }

    /// σ² for a sub-band of width `bandwidth`.
    pub fn noise_power(&self, bandwidth: f64) -> Result<f64> {
        noise_power(bandwidth, &self.config)
    }

    /// Noise power per Hz (W/Hz).
    pub fn noise_density(&self) -> f64 {
        self.config.boltzmann * self.config.noise_temperature * db_to_linear(self.config.noise_figure)
    }

    /// σ² seen by the pilot phase, which occupies the full band.
    pub fn estimation_noise(&self) -> f64 {
        self.noise_density() * self.config.total_bandwidth
    }

    /// Copy with every link's Rician factor replaced.
    pub fn with_rician(&self, rician: f64) -> Self {
        let mut out = self.clone();
        out.links = self.links.iter().map(|l| l.with_rician(rician)).collect();
        out.config.rician_override = Some(rician);
        out
    }

    /// Copy with a different pilot assignment.
    pub fn with_pilots(&self, pilots: PilotAssignment) -> Result<Self> {
        Self::from_parts(self.config.clone(), self.links.clone(), pilots)
    }

    /// Copy with per-user power and requirement vectors replaced.
    pub fn with_user_params(&self, pilot_power: Vec<f64>, max_power: Vec<f64>, rate_requirement: Vec<f64>) -> Result<Self> {
        let k = self.num_users();
        if pilot_power.len() != k || max_power.len() != k || rate_requirement.len() != k {
            return Err(Error::Config("per-user vectors must have one entry per user".into()));
        }
        let mut out = self.clone();
        out.config.pilot_power = PerUser::Each(pilot_power.clone());
        out.config.max_power = PerUser::Each(max_power.clone());
        out.config.rate_requirement = PerUser::Each(rate_requirement.clone());
        out.pilot_power = pilot_power;
        out.max_power = max_power;
        out.rate_requirement = rate_requirement;
        Ok(out)
    }
}

/// Samples geometry, fills every link and draws the pilot assignment.
pub fn build_scenario<R: Rng + ?Sized>(config: SystemConfig, rng: &mut R) -> Result<Scenario> {
    config.validate()?;
    let (m_count, k_count) = (config.num_satellites, config.num_users);
    let geo = &config.geometry;
    let correlation = Arc::new(correlation_matrix(config.correlation_model, config.num_antennas())?);

    let [lo, hi] = geo.user_elevation_deg;
    let user_elev: Vec<f64> = (0..k_count).map(|_| lo + (hi - lo) * rng.gen::<f64>()).collect();
    let base_azimuth: Vec<f64> = (0..m_count).map(|_| 2.0 * PI * rng.gen::<f64>()).collect();
    let spread = geo.azimuth_spread_deg.to_radians();

    let mut links = Vec::with_capacity(m_count * k_count);
    for m in 0..m_count {
        let offset = geo.satellite_elevation_offsets_deg.get(m).copied().unwrap_or(0.0);
        for &elev_user in &user_elev {
            let elev_deg = elev_user + offset;
            if !(elev_deg > 0.0 && elev_deg <= 90.0) {
                return Err(Error::Config(format!("link elevation {elev_deg} deg outside (0, 90]")));
            }
            let azimuth = (base_azimuth[m] + spread * (rng.gen::<f64>() - 0.5)).rem_euclid(2.0 * PI);
            let elevation = elev_deg.to_radians();
            let distance = slant_range(geo.altitude, elevation);
            let beta = path_gain(distance, &config)?;
            let rician = match config.rician_override {
                Some(kf) => kf,
                None => rician_factor_lookup(elev_deg, &config.rician_table)?,
            };
            let los = steering_vector(elevation, azimuth, config.antennas_x, config.antennas_y, config.antenna_spacing_ratio);
            let mut link = LinkStats::new(beta, rician, Arc::clone(&correlation), los);
            link.elevation = elevation;
            link.azimuth = azimuth;
            link.distance = distance;
            links.push(link);
        }
    }
    let pilots = assign_pilots_random(k_count, config.pilot_length, rng)?;
    Scenario::from_parts(config, links, pilots)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_power_examples() {
        let cfg = SystemConfig::table_one();
        let sigma = noise_power(1e6, &cfg).unwrap();
        // 1e6 · 1.381e-23 · 290 · 10^0.9
        let expected = 1e6 * 1.381e-23 * 290.0 * 10f64.powf(0.9);
        assert!((sigma - expected).abs() / expected < 1e-12);
        assert!((sigma - 3.1812e-14).abs() / 3.1812e-14 < 1e-4);

        let flat = SystemConfig { noise_figure: 0.0, ..cfg.clone() };
        assert!((noise_power(1.0, &flat).unwrap() - 4.0049e-21).abs() < 1e-25);
        assert_eq!(noise_power(2e6, &cfg).unwrap(), 2.0 * noise_power(1e6, &cfg).unwrap());
        assert!(matches!(noise_power(0.0, &cfg), Err(Error::Domain(_))));
        assert!(matches!(noise_power(-1.0, &cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn path_gain_examples() {
        let cfg = SystemConfig::table_one();
        let loss = path_loss_db(550e3, &cfg).unwrap();
        let expected = 20.0 * (4.0 * PI * 550e3 * 2e9 / 2.998e8).log10() - 6.0;
        assert!((loss - expected).abs() < 1e-12);
        assert!((loss - 147.28).abs() < 0.01, "loss {loss}");
        assert!((path_gain(550e3, &cfg).unwrap().log10() + loss / 10.0).abs() < 1e-12);

        let doubled = path_loss_db(1100e3, &cfg).unwrap() - loss;
        assert!((doubled - 20.0 * 2f64.log10()).abs() < 1e-12);

        let flat = SystemConfig { rx_gain: 0.0, tx_gain: 0.0, ..cfg };
        let d = 10.0 * SPEED_OF_LIGHT / (4.0 * PI * flat.carrier_frequency);
        assert!((path_loss_db(d, &flat).unwrap() - 20.0).abs() < 1e-9);
        assert!(path_gain(0.0, &flat).is_err());
    }

    #[test]
    fn path_gain_decreases_with_distance() {
        let cfg = SystemConfig::table_one();
        let gains: Vec<f64> = [5e5, 6e5, 1e6, 2e6].iter().map(|&d| path_gain(d, &cfg).unwrap()).collect();
        assert!(gains.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn rician_lookup() {
        let table = vec![RicianEntry { min_deg: 20.0, max_deg: 30.0, k_linear: 10.0 }];
        assert_eq!(rician_factor_lookup(20.05, &table).unwrap(), 10.0);
        assert!(matches!(rician_factor_lookup(35.0, &table), Err(Error::Config(_))));
        // the reference user band [20, 20.1] falls into a single row
        let t = default_rician_table();
        assert_eq!(rician_factor_lookup(20.0, &t).unwrap(), rician_factor_lookup(20.1, &t).unwrap());
    }

    #[test]
    fn serving_selection() {
        assert_eq!(select_serving_satellites(&[3.0, 1.0, 2.0], 2), vec![0, 2]);
        assert_eq!(select_serving_satellites(&[1.0, 1.0, 1.0], 1), vec![0]);
        assert_eq!(select_serving_satellites(&[0.5, 2.0, 1.0], 3), vec![0, 1, 2]);
    }

    #[test]
    fn pilot_assignment_examples() {
        let orth = PilotAssignment::from_indices(vec![2, 0, 1], 3).unwrap();
        assert!((0..3).all(|k| orth.cohort(k) == [k]));

        let mut rng = rng::stream(3, Domain::Scenario, 0);
        let single = assign_pilots_random(4, 1, &mut rng).unwrap();
        assert!((0..4).all(|k| single.cohort(k) == [0, 1, 2, 3]));

        let a = assign_pilots_random(8, 3, &mut rng::stream(9, Domain::Scenario, 0)).unwrap();
        let b = assign_pilots_random(8, 3, &mut rng::stream(9, Domain::Scenario, 0)).unwrap();
        assert_eq!(a, b);
        for k in 0..8 {
            assert!(a.cohort(k).contains(&k));
            for &j in a.cohort(k) {
                assert!(a.cohort(j).contains(&k));
                assert_eq!(a.cohort(j), a.cohort(k));
            }
        }
        assert!(assign_pilots_random(3, 0, &mut rng).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = SystemConfig::desk_scale();
        cfg.num_users = 5;
        cfg.num_subbands = 2;
        cfg.subband_capacity = 2;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.subband_capacity = 3;
        assert!(cfg.validate().is_ok());
        let bad_tau = SystemConfig { pilot_length: 6, ..cfg.clone() };
        assert!(bad_tau.validate().is_err());
        let bad_r = SystemConfig { correlation_model: CorrelationModel::Exponential { r: 1.0 }, ..cfg.clone() };
        assert!(bad_r.validate().is_err());
        let bad_power = SystemConfig { max_power: PerUser::Uniform(0.0), ..cfg };
        assert!(bad_power.validate().is_err());
    }

    #[test]
    fn table_one_is_accepted_and_json_round_trips() {
        let cfg = SystemConfig::table_one();
        assert_eq!(cfg.num_antennas(), 100);
        assert!(cfg.validate().is_ok());
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(SystemConfig::from_json_str(&text).unwrap(), cfg);
    }

    #[test]
    fn build_is_deterministic_and_consistent() {
        let cfg = SystemConfig { num_users: 5, num_satellites: 3, rng_seed: 7, ..SystemConfig::desk_scale() };
        let a = Scenario::generate(cfg.clone()).unwrap();
        let b = Scenario::generate(cfg).unwrap();
        for m in 0..3 {
            for k in 0..5 {
                let (la, lb) = (a.link(m, k), b.link(m, k));
                assert_eq!(la.beta.to_bits(), lb.beta.to_bits());
                assert_eq!(la.azimuth.to_bits(), lb.azimuth.to_bits());
                assert_eq!(la.los, lb.los);
                assert!((la.rician_scale - la.beta / (la.rician + 1.0)).abs() <= 1e-12 * la.rician_scale);
                assert!((la.los.norm_squared() - 16.0).abs() < 1e-10);
                assert!(la.elevation.to_degrees() >= 20.0 && la.elevation.to_degrees() <= 20.1);
            }
        }
        assert_eq!(a.pilots, b.pilots);
        for k in 0..5 {
            let sv = a.serving(k);
            assert_eq!(sv.len(), 2);
            let inside = sv.iter().map(|&m| a.link(m, k).beta).fold(f64::INFINITY, f64::min);
            let outside = (0..3).filter(|m| !sv.contains(m)).map(|m| a.link(m, k).beta).fold(0.0, f64::max);
            assert!(inside >= outside);
        }
    }

    #[test]
    fn infeasible_partition_is_rejected() {
        let cfg = SystemConfig { num_users: 7, num_subbands: 2, subband_capacity: 3, ..SystemConfig::desk_scale() };
        assert!(matches!(Scenario::generate(cfg), Err(Error::Config(_))));
    }

    #[test]
    fn slant_range_limits() {
        assert!((slant_range(550e3, PI / 2.0) - 550e3).abs() < 1e-6);
        let d20 = slant_range(550e3, 20f64.to_radians());
        assert!(d20 > 1.2e6 && d20 < 1.4e6);
    }
}
