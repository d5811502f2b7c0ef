//! Experiment configuration, read from TOML.
//!
//! Every section is optional and every field has the default scenario value,
//! so an empty file is a valid configuration. Unknown keys are rejected.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::array_channel::{ArrayGeometry, CirSampling, RaisedCosine, ScenarioParams};
use crate::error::{IsacError, Result};
use crate::link_sim::{AdcBits, QuantizerSpec};
use crate::recovery::DelayModel;
use crate::waveform::FrameParams;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayConfig {
    /// CSA elements along x / y.
    pub cu_x: usize,
    pub cu_y: usize,
    pub rf_chains: usize,
    /// WSA elements along x / y.
    pub wsa_x: usize,
    pub wsa_y: usize,
    /// WSA element spacing in wavelengths.
    pub wsa_spacing: f64,
    pub ut_x: usize,
    pub ut_y: usize,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self { cu_x: 16, cu_y: 1, rf_chains: 4, wsa_x: 8, wsa_y: 1, wsa_spacing: 1.5, ut_x: 8, ut_y: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    pub carrier_hz: f64,
    /// Seconds; the bandwidth is its reciprocal.
    pub sampling_period_s: f64,
    pub noise_psd_dbm_hz: f64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self { carrier_hz: 77e9, sampling_period_s: 5e-9, noise_psd_dbm_hz: -174.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub taps: usize,
    pub roll_off: f64,
    /// Pulse half-width in sampling periods.
    pub pulse_half_width: f64,
    pub scatter_clusters: usize,
    pub scatter_paths: usize,
    pub targets: usize,
    pub target_paths: usize,
    pub rician_factor_db: f64,
    pub angle_spread_deg: f64,
    /// Cluster delay width in sampling periods.
    pub delay_spread: f64,
    pub max_elevation_deg: f64,
    pub ut_distance_m: [f64; 2],
    pub target_distance_m: [f64; 2],
    pub rcs_m2: [f64; 2],
    pub max_doppler_hz: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            taps: 32,
            roll_off: 0.8,
            pulse_half_width: 6.0,
            scatter_clusters: 6,
            scatter_paths: 15,
            targets: 6,
            target_paths: 15,
            rician_factor_db: 20.0,
            angle_spread_deg: 7.5,
            delay_spread: 0.3,
            max_elevation_deg: 60.0,
            ut_distance_m: [10.0, 20.0],
            target_distance_m: [5.0, 10.0],
            rcs_m2: [0.5, 5.0],
            max_doppler_hz: 7100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveformConfig {
    pub pilot_len: usize,
    pub pilot_power_dbm: f64,
    /// Samples per CU / UT phase-shifter configuration.
    pub t_rf_cu: usize,
    pub t_rf_ut: usize,
    pub guard: usize,
    pub gi_offset: usize,
    /// Per-sample precoders and no guard interval (`N^CB = P`).
    pub ideal_bound: bool,
}

impl Default for WaveformConfig {
    fn default() -> Self {
        Self { pilot_len: 200, pilot_power_dbm: 60.0, t_rf_cu: 30, t_rf_ut: 30, guard: 10, gi_offset: 0, ideal_bound: false }
    }
}

/// ADC resolution as written in the config: an integer or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bits(pub AdcBits);

impl Serialize for Bits {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            AdcBits::Finite(b) => s.serialize_u32(b),
            AdcBits::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Bits {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Bits;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a positive bit count or \"inf\"")
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Bits, E> {
                if (1..=24).contains(&v) {
                    Ok(Bits(AdcBits::Finite(v as u32)))
                } else {
                    Err(E::custom(format!("bit count {v} outside 1..=24")))
                }
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Bits, E> {
                self.visit_i64(v.min(i64::MAX as u64) as i64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Bits, E> {
                match v {
                    "inf" | "infinite" => Ok(Bits(AdcBits::Infinite)),
                    _ => Err(E::custom(format!("unrecognised bit count `{v}`"))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReceiverConfig {
    pub adc_bits: Bits,
    /// Clip level in multiples of the per-component RMS.
    pub clip_scale: f64,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        Self { adc_bits: Bits(AdcBits::Finite(5)), clip_scale: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoveryConfig {
    pub iterations: usize,
    /// `Ḡ_x / N̄_x`.
    pub wsa_redundancy: f64,
    /// `G_x^CU / N_x` for radar recovery.
    pub cu_redundancy: f64,
    /// `r_dic` for user-side estimation.
    pub ce_redundancy: f64,
    pub block_iterations: usize,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self { iterations: 150, wsa_redundancy: 2.0, cu_redundancy: 1.0, ce_redundancy: 2.0, block_iterations: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DopplerConfig {
    /// Data frame length `N_D` in samples.
    pub data_len: usize,
    pub impulse_pilots: usize,
    pub users: usize,
    pub ut_power_dbm: f64,
    /// Pilot length of the initial estimation stage feeding the Doppler stage.
    pub ce_pilot_len: usize,
}

impl Default for DopplerConfig {
    fn default() -> Self {
        Self { data_len: 1024, impulse_pilots: 4, users: 4, ut_power_dbm: 23.0, ce_pilot_len: 300 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfdmConfig {
    /// OFDM symbols per trial and SNR point.
    pub symbols: usize,
    pub snr_db: Vec<f64>,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        Self { symbols: 40, snr_db: (0..=15).map(|k| 2.0 * k as f64).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub trials: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { trials: 50, seed: 1 }
    }
}

/// Full simulator configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub array: ArrayConfig,
    pub signal: SignalConfig,
    pub channel: ChannelConfig,
    pub waveform: WaveformConfig,
    pub receiver: ReceiverConfig,
    pub recovery: RecoveryConfig,
    pub doppler: DopplerConfig,
    pub ofdm: OfdmConfig,
    pub run: RunConfig,
}

fn redundant_size(n: usize, ratio: f64) -> Result<usize> {
    let g = (n as f64 * ratio).round();
    if !(ratio >= 1.0) || g < n as f64 {
        return Err(IsacError::Config(format!("dictionary redundancy {ratio} must be at least 1")));
    }
    Ok(g as usize)
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| IsacError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| IsacError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Checks every derived object can be built; errors are reported as
    /// [`IsacError::Config`].
    pub fn validate(&self) -> Result<()> {
        let wrap = |e: IsacError| match e {
            IsacError::Config(_) => e,
            other => IsacError::Config(other.to_string()),
        };
        if self.run.trials == 0 {
            return Err(IsacError::Config("trials must be at least 1".into()));
        }
        self.scenario(self.channel.targets, self.channel.target_paths).map_err(wrap)?;
        self.cu_geometry().map_err(wrap)?;
        self.wsa_geometry().map_err(wrap)?;
        self.ut_geometry().map_err(wrap)?;
        self.frame_params().validate().map_err(wrap)?;
        self.quantizer().map_err(wrap)?;
        redundant_size(self.array.wsa_x, self.recovery.wsa_redundancy)?;
        redundant_size(self.array.cu_x, self.recovery.cu_redundancy)?;
        redundant_size(self.array.ut_x, self.recovery.ce_redundancy)?;
        if self.doppler.impulse_pilots < 2 {
            return Err(IsacError::Config("at least two impulse pilots are needed".into()));
        }
        if self.doppler.data_len < self.channel.taps {
            return Err(IsacError::Config("data frame must be at least as long as the channel".into()));
        }
        if !(self.signal.sampling_period_s > 0.0) {
            return Err(IsacError::Config("sampling period must be positive".into()));
        }
        Ok(())
    }

    /// `σ_n² = NPSD · BW` in watts.
    pub fn noise_power(&self) -> f64 {
        dbm_to_watts(self.signal.noise_psd_dbm_hz) / self.signal.sampling_period_s
    }

    pub fn pulse(&self) -> Result<RaisedCosine> {
        let ts = self.signal.sampling_period_s;
        RaisedCosine::new(self.channel.roll_off, ts, self.channel.pulse_half_width * ts)
    }

    pub fn sampling(&self) -> Result<CirSampling> {
        Ok(CirSampling { taps: self.channel.taps, sampling_period: self.signal.sampling_period_s, pulse: self.pulse()? })
    }

    pub fn timing(&self) -> Result<DelayModel> {
        Ok(DelayModel { sampling_period: self.signal.sampling_period_s, pulse: self.pulse()? })
    }

    /// Channel-generation parameters with the given cluster count and size.
    pub fn scenario(&self, clusters: usize, paths: usize) -> Result<ScenarioParams> {
        let c = &self.channel;
        let p = ScenarioParams {
            carrier_hz: self.signal.carrier_hz,
            sampling_period: self.signal.sampling_period_s,
            taps: c.taps,
            pulse: self.pulse()?,
            clusters,
            paths_per_cluster: paths,
            rician_factor_db: c.rician_factor_db,
            angle_spread_deg: c.angle_spread_deg,
            delay_spread_samples: c.delay_spread,
            max_elevation: c.max_elevation_deg.to_radians().min(PI / 2.0),
            ut_distance_m: (c.ut_distance_m[0], c.ut_distance_m[1]),
            target_distance_m: (c.target_distance_m[0], c.target_distance_m[1]),
            rcs_m2: (c.rcs_m2[0], c.rcs_m2[1]),
            max_doppler_hz: c.max_doppler_hz,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn radar_scenario(&self) -> Result<ScenarioParams> {
        self.scenario(self.channel.targets, self.channel.target_paths)
    }

    pub fn comm_scenario(&self) -> Result<ScenarioParams> {
        self.scenario(self.channel.scatter_clusters, self.channel.scatter_paths)
    }

    pub fn cu_geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::csa(self.array.cu_x, self.array.cu_y)
    }

    pub fn wsa_geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::wsa(self.array.wsa_x, self.array.wsa_y, self.array.wsa_spacing)
    }

    pub fn ut_geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::ut(self.array.ut_x, self.array.ut_y)
    }

    /// Pilot frame parameters. The UT side uses the UT array; for radar runs
    /// only the CU side matters.
    pub fn frame_params(&self) -> FrameParams {
        let w = &self.waveform;
        let (t_rf_cu, t_gi) = if w.ideal_bound { (1, 0) } else { (w.t_rf_cu, w.guard) };
        FrameParams {
            pilot_len: w.pilot_len,
            taps: self.channel.taps,
            n_tx: self.array.cu_x * self.array.cu_y,
            n_rf: self.array.rf_chains,
            m_ut: self.array.ut_x * self.array.ut_y,
            t_rf_cu,
            t_rf_ut: w.t_rf_ut,
            t_gi,
            gi_offset: w.gi_offset,
            p_dl: dbm_to_watts(w.pilot_power_dbm),
        }
    }

    pub fn quantizer(&self) -> Result<QuantizerSpec> {
        QuantizerSpec::new(self.receiver.adc_bits.0, self.receiver.clip_scale)
    }

    /// `(Ḡ_x, Ḡ_y)`; the elevation grid stays critical.
    pub fn wsa_grid(&self) -> (usize, usize) {
        (redundant_size(self.array.wsa_x, self.recovery.wsa_redundancy).unwrap_or(self.array.wsa_x), self.array.wsa_y)
    }

    pub fn cu_grid(&self) -> (usize, usize) {
        (redundant_size(self.array.cu_x, self.recovery.cu_redundancy).unwrap_or(self.array.cu_x), self.array.cu_y)
    }

    /// CE grids `(G^UT_x, G^UT_y, G^CU_x, G^CU_y)` for redundancy `r`.
    pub fn ce_grids(&self, r: f64) -> Result<(usize, usize, usize, usize)> {
        let gy = |n: usize| if n > 1 { redundant_size(n, r) } else { Ok(1) };
        Ok((
            redundant_size(self.array.ut_x, r)?,
            gy(self.array.ut_y)?,
            redundant_size(self.array.cu_x, r)?,
            gy(self.array.cu_y)?,
        ))
    }
}
