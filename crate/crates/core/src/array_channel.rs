//! Array geometry, steering vectors and the stochastic time-varying channel
//! models for the downlink communication link and the radar echo link.
//!
//! Angles are carried in physical form (azimuth in `[0, 2π)`, elevation in
//! `[0, π/2)`) and converted to virtual angles `μ = cos(azi)·sin(ele)`,
//! `ν = sin(azi)·sin(ele)` wherever a steering vector is built.

use std::f64::consts::PI;

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::linalg::{kron_vec, CMat, CVec, C64, ZERO};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrayKind {
    /// Critically spaced (half-wavelength) array at the communication unit.
    Csa,
    /// Widely spaced array at the radar unit.
    Wsa,
    /// Half-wavelength array at a user terminal.
    Ut,
}

/// Uniform planar array description. Spacing is in wavelengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    pub n_x: usize,
    pub n_y: usize,
    pub spacing: f64,
    pub kind: ArrayKind,
}

impl ArrayGeometry {
    pub fn new(n_x: usize, n_y: usize, spacing: f64, kind: ArrayKind) -> Result<Self> {
        if n_x == 0 || n_y == 0 {
            return Err(invalid("antenna counts must be at least 1"));
        }
        match kind {
            ArrayKind::Csa | ArrayKind::Ut if spacing != 0.5 => {
                return Err(invalid(format!("{kind:?} arrays use half-wavelength spacing, got {spacing}")));
            }
            ArrayKind::Wsa if !(spacing > 0.5) => {
                return Err(invalid(format!("WSA spacing must exceed half a wavelength, got {spacing}")));
            }
            _ => {}
        }
        Ok(Self { n_x, n_y, spacing, kind })
    }

    pub fn csa(n_x: usize, n_y: usize) -> Result<Self> {
        Self::new(n_x, n_y, 0.5, ArrayKind::Csa)
    }

    pub fn ut(n_x: usize, n_y: usize) -> Result<Self> {
        Self::new(n_x, n_y, 0.5, ArrayKind::Ut)
    }

    pub fn wsa(n_x: usize, n_y: usize, spacing: f64) -> Result<Self> {
        Self::new(n_x, n_y, spacing, ArrayKind::Wsa)
    }

    /// Total element count `n_x · n_y`.
    pub fn len(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Alias period of the virtual angle, `λ/d` expressed as `1/spacing`.
    pub fn alias_period(&self) -> f64 {
        1.0 / self.spacing
    }
}

/// Unit-norm uniform-linear-array response: element `k` is
/// `exp(−j·2π·spacing·k·μ)/√count`.
pub fn steering_vector(mu: f64, count: usize, spacing: f64) -> CVec {
    let scale = 1.0 / (count as f64).sqrt();
    Array1::from_shape_fn(count, |k| {
        let phase = -2.0 * PI * spacing * k as f64 * mu;
        C64::from_polar(scale, phase)
    })
}

/// Virtual angles `(μ, ν)` of a physical direction.
pub fn virtual_angles(azimuth: f64, elevation: f64) -> (f64, f64) {
    (azimuth.cos() * elevation.sin(), azimuth.sin() * elevation.sin())
}

/// Planar-array response from virtual angles: `a(μ; n_x) ⊗ a(ν; n_y)`.
pub fn upa_steering_virtual(mu: f64, nu: f64, geometry: &ArrayGeometry) -> CVec {
    let ax = steering_vector(mu, geometry.n_x, geometry.spacing);
    let ay = steering_vector(nu, geometry.n_y, geometry.spacing);
    kron_vec(ax.view(), ay.view())
}

pub fn upa_steering(azimuth: f64, elevation: f64, geometry: &ArrayGeometry) -> CVec {
    let (mu, nu) = virtual_angles(azimuth, elevation);
    upa_steering_virtual(mu, nu, geometry)
}

/// Raised-cosine pulse truncated to `|t| ≤ half_width` and normalised to a
/// unit peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaisedCosine {
    pub roll_off: f64,
    pub symbol_period: f64,
    /// Single-side duration `τ_p`; the pulse is exactly zero beyond it.
    pub half_width: f64,
}

impl RaisedCosine {
    pub fn new(roll_off: f64, symbol_period: f64, half_width: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&roll_off) || symbol_period <= 0.0 || half_width < 0.0 {
            return Err(invalid("raised cosine needs roll-off in [0,1], positive period, non-negative width"));
        }
        Ok(Self { roll_off, symbol_period, half_width })
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t.abs() > self.half_width * (1.0 + 1e-12) {
            return 0.0;
        }
        let x = t / self.symbol_period;
        let b = self.roll_off;
        let denom = 1.0 - (2.0 * b * x).powi(2);
        if b > 0.0 && denom.abs() < 1e-10 {
            // removable singularity at |t| = T/(2β)
            return PI / 4.0 * sinc(1.0 / (2.0 * b));
        }
        sinc(x) * (PI * b * x).cos() / denom
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Physical direction of one side of a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    pub azimuth: f64,
    pub elevation: f64,
}

impl Direction {
    pub fn virtual_angles(&self) -> (f64, f64) {
        virtual_angles(self.azimuth, self.elevation)
    }

    /// Direction whose virtual azimuth is `mu` with zero virtual elevation.
    pub fn from_virtual_azimuth(mu: f64) -> Self {
        assert!(mu.abs() < 1.0 || mu == -1.0, "virtual angle out of range");
        if mu >= 0.0 {
            Self { azimuth: 0.0, elevation: mu.asin() }
        } else {
            Self { azimuth: PI, elevation: (-mu).asin() }
        }
    }
}

/// One propagation path. `gain` is the coefficient at `t = 0`; at time `t`
/// it has rotated by `exp(j2π·doppler·t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathComponent {
    pub gain: C64,
    /// Arrival direction at the receiving array.
    pub rx: Direction,
    /// Departure direction at the transmitting array (the same as `rx` for
    /// radar echoes because the CU and RU are co-located).
    pub tx: Direction,
    pub delay: f64,
    pub doppler: f64,
}

impl PathComponent {
    pub fn gain_at(&self, t: f64) -> C64 {
        self.gain * C64::from_polar(1.0, 2.0 * PI * self.doppler * t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub central_rx: Direction,
    pub central_tx: Direction,
    pub central_delay: f64,
    pub doppler: f64,
    /// Target distance to the station in metres (radar clusters only).
    pub distance: Option<f64>,
    pub paths: Vec<PathComponent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    CommDownlink,
    Radar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub link_kind: LinkKind,
    pub rx_geometry: ArrayGeometry,
    pub tx_geometry: ArrayGeometry,
    pub los: Option<PathComponent>,
    pub clusters: Vec<Cluster>,
    pub rician_factor_db: f64,
}

impl ChannelRealization {
    pub fn paths(&self) -> impl Iterator<Item = &PathComponent> {
        self.los.iter().chain(self.clusters.iter().flat_map(|c| c.paths.iter()))
    }

    pub fn path_count(&self) -> usize {
        self.paths().count()
    }

    /// Copy with every path gain multiplied by `factor`.
    pub fn scaled(&self, factor: C64) -> Self {
        let mut out = self.clone();
        if let Some(los) = out.los.as_mut() {
            los.gain *= factor;
        }
        for c in &mut out.clusters {
            for p in &mut c.paths {
                p.gain *= factor;
            }
        }
        out
    }

    /// Copy keeping only the line-of-sight path.
    pub fn los_only(&self) -> Self {
        Self { clusters: Vec::new(), ..self.clone() }
    }
}

/// Parameters driving [`generate_channel`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    pub carrier_hz: f64,
    pub sampling_period: f64,
    pub taps: usize,
    pub pulse: RaisedCosine,
    /// Scatter clusters (communication) or targets (radar).
    pub clusters: usize,
    pub paths_per_cluster: usize,
    pub rician_factor_db: f64,
    /// Total angular width of a cluster, degrees.
    pub angle_spread_deg: f64,
    /// Total delay width of a cluster, in sampling periods.
    pub delay_spread_samples: f64,
    pub max_elevation: f64,
    pub ut_distance_m: (f64, f64),
    pub target_distance_m: (f64, f64),
    pub rcs_m2: (f64, f64),
    pub max_doppler_hz: f64,
}

impl ScenarioParams {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Upper end of the central-delay draw, `(L−1)T_s − 2τ_p`.
    pub fn max_central_delay(&self) -> f64 {
        (self.taps as f64 - 1.0) * self.sampling_period - 2.0 * self.pulse.half_width
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths_per_cluster == 0 {
            return Err(invalid("paths per cluster must be at least 1"));
        }
        if self.taps == 0 || self.sampling_period <= 0.0 || self.carrier_hz <= 0.0 {
            return Err(invalid("taps, sampling period and carrier must be positive"));
        }
        if self.max_central_delay() < 0.0 {
            return Err(invalid("pulse support does not fit in the tap window: (L-1)Ts < 2τp"));
        }
        // max delay + 2τ_p must stay below L·T_s
        if self.delay_spread_samples / 2.0 >= 1.0 {
            return Err(invalid("delay spread pushes paths beyond the last tap"));
        }
        let ordered = |r: (f64, f64)| r.0 <= r.1 && r.0 > 0.0;
        if !ordered(self.ut_distance_m) || !ordered(self.target_distance_m) || !(self.rcs_m2.0 <= self.rcs_m2.1 && self.rcs_m2.0 >= 0.0) {
            return Err(invalid("distance and RCS ranges must be ordered and positive"));
        }
        if !(0.0..PI / 2.0).contains(&self.max_elevation) && self.max_elevation != PI / 2.0 {
            return Err(invalid("maximum elevation must lie in [0, π/2]"));
        }
        Ok(())
    }
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn random_phase(rng: &mut impl Rng) -> C64 {
    C64::from_polar(1.0, rng.random_range(0.0..2.0 * PI))
}

fn random_direction(rng: &mut impl Rng, max_elevation: f64) -> Direction {
    Direction {
        azimuth: rng.random_range(0.0..2.0 * PI),
        elevation: uniform(rng, 0.0, max_elevation),
    }
}

fn jitter(rng: &mut impl Rng, centre: Direction, spread: f64) -> Direction {
    let half = spread / 2.0;
    let azimuth = (centre.azimuth + uniform(rng, -half, half)).rem_euclid(2.0 * PI);
    let elevation = (centre.elevation + uniform(rng, -half, half)).clamp(0.0, PI / 2.0 - 1e-9);
    Direction { azimuth, elevation }
}

/// Draws a channel realisation. Cluster paths are spread uniformly over the
/// stated angle and delay widths around the cluster centre and share the
/// cluster Doppler.
pub fn generate_channel(
    params: &ScenarioParams,
    kind: LinkKind,
    rx_geometry: ArrayGeometry,
    tx_geometry: ArrayGeometry,
    rng: &mut impl Rng,
) -> Result<ChannelRealization> {
    params.validate()?;
    let lambda = params.wavelength();
    let ts = params.sampling_period;
    let spread = params.angle_spread_deg.to_radians();
    let delay_half = params.delay_spread_samples * ts / 2.0;
    let max_delay = params.max_central_delay();
    let n_paths = params.paths_per_cluster as f64;

    let mut clusters = Vec::with_capacity(params.clusters);
    let los = match kind {
        LinkKind::CommDownlink => {
            let d_ut = uniform(rng, params.ut_distance_m.0, params.ut_distance_m.1);
            let gain = random_phase(rng) * (lambda / (4.0 * PI * d_ut));
            Some(PathComponent {
                gain,
                rx: random_direction(rng, params.max_elevation),
                tx: random_direction(rng, params.max_elevation),
                delay: uniform(rng, 0.0, max_delay),
                doppler: uniform(rng, -params.max_doppler_hz, params.max_doppler_hz),
            })
        }
        LinkKind::Radar => None,
    };
    let k_f = 10f64.powf(params.rician_factor_db / 10.0);

    for _ in 0..params.clusters {
        let central_rx = random_direction(rng, params.max_elevation);
        let central_tx = match kind {
            LinkKind::CommDownlink => random_direction(rng, params.max_elevation),
            LinkKind::Radar => central_rx,
        };
        let central_delay = uniform(rng, 0.0, max_delay);
        let doppler = uniform(rng, -params.max_doppler_hz, params.max_doppler_hz);
        let (distance, magnitude) = match kind {
            LinkKind::CommDownlink => {
                let los_mag = los.as_ref().map(|p| p.gain.norm()).unwrap_or(0.0);
                let scale = (k_f * params.clusters as f64 * n_paths).sqrt();
                (None, los_mag / scale)
            }
            LinkKind::Radar => {
                let d = uniform(rng, params.target_distance_m.0, params.target_distance_m.1);
                let rcs = uniform(rng, params.rcs_m2.0, params.rcs_m2.1);
                let mag = (rcs * lambda * lambda / (n_paths * (4.0 * PI).powi(3) * d.powi(4))).sqrt();
                (Some(d), mag)
            }
        };
        let paths = (0..params.paths_per_cluster)
            .map(|_| {
                let rx = jitter(rng, central_rx, spread);
                let tx = match kind {
                    LinkKind::CommDownlink => jitter(rng, central_tx, spread),
                    LinkKind::Radar => rx,
                };
                let delay = (central_delay + uniform(rng, -delay_half, delay_half)).max(0.0);
                PathComponent { gain: random_phase(rng) * magnitude, rx, tx, delay, doppler }
            })
            .collect();
        clusters.push(Cluster { central_rx, central_tx, central_delay, doppler, distance, paths });
    }

    Ok(ChannelRealization {
        link_kind: kind,
        rx_geometry,
        tx_geometry,
        los,
        clusters,
        rician_factor_db: params.rician_factor_db,
    })
}

/// Convenience wrapper seeding a dedicated generator.
pub fn generate_channel_seeded(
    params: &ScenarioParams,
    kind: LinkKind,
    rx_geometry: ArrayGeometry,
    tx_geometry: ArrayGeometry,
    seed: u64,
) -> Result<ChannelRealization> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_channel(params, kind, rx_geometry, tx_geometry, &mut rng)
}

/// Sampled channel impulse response: `taps[l]` is `H_l`, rx × tx.
#[derive(Debug, Clone, PartialEq)]
pub struct CirTensor {
    pub taps: Vec<CMat>,
    pub sampling_period: f64,
}

impl CirTensor {
    pub fn zeros(len: usize, rx: usize, tx: usize, sampling_period: f64) -> Self {
        Self { taps: vec![CMat::zeros((rx, tx)); len], sampling_period }
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn rx(&self) -> usize {
        self.taps.first().map_or(0, |t| t.nrows())
    }

    pub fn tx(&self) -> usize {
        self.taps.first().map_or(0, |t| t.ncols())
    }

    /// Tap `l`; zero outside `0 ≤ l < L`.
    pub fn tap(&self, l: isize) -> CMat {
        if l < 0 || l as usize >= self.taps.len() {
            CMat::zeros((self.rx(), self.tx()))
        } else {
            self.taps[l as usize].clone()
        }
    }

    /// `H_SD = [H_0 H_1 ⋯ H_{L−1}]`.
    pub fn spatial_delay(&self) -> CMat {
        let (rx, tx) = (self.rx(), self.tx());
        let mut out = CMat::zeros((rx, tx * self.len()));
        for (l, h) in self.taps.iter().enumerate() {
            out.slice_mut(ndarray::s![.., l * tx..(l + 1) * tx]).assign(h);
        }
        out
    }

    pub fn from_spatial_delay(h_sd: &CMat, taps: usize, sampling_period: f64) -> Self {
        let tx = h_sd.ncols() / taps;
        assert_eq!(tx * taps, h_sd.ncols(), "column count must be a multiple of taps");
        let taps = (0..taps)
            .map(|l| h_sd.slice(ndarray::s![.., l * tx..(l + 1) * tx]).to_owned())
            .collect();
        Self { taps, sampling_period }
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| crate::linalg::frob_sq(t.view())).sum()
    }
}

/// Sampling grid for [`sample_cir`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirSampling {
    pub taps: usize,
    pub sampling_period: f64,
    pub pulse: RaisedCosine,
}

/// `H_l = Σ_paths g(t)·a_rx·a_txᴴ·p(l·T_s − τ − τ_p)` for `0 ≤ l < L`.
pub fn sample_cir(ch: &ChannelRealization, t: f64, sampling: &CirSampling) -> CirTensor {
    let rx_n = ch.rx_geometry.len();
    let tx_n = ch.tx_geometry.len();
    let mut cir = CirTensor::zeros(sampling.taps, rx_n, tx_n, sampling.sampling_period);
    for path in ch.paths() {
        let (mu_r, nu_r) = path.rx.virtual_angles();
        let (mu_t, nu_t) = path.tx.virtual_angles();
        let a_rx = upa_steering_virtual(mu_r, nu_r, &ch.rx_geometry);
        let a_tx = upa_steering_virtual(mu_t, nu_t, &ch.tx_geometry);
        let g = path.gain_at(t);
        let mut outer: Option<CMat> = None;
        for (l, tap) in cir.taps.iter_mut().enumerate() {
            let p = sampling.pulse.eval(l as f64 * sampling.sampling_period - path.delay - sampling.pulse.half_width);
            if p == 0.0 {
                continue;
            }
            let o = outer.get_or_insert_with(|| {
                CMat::from_shape_fn((rx_n, tx_n), |(i, j)| a_rx[i] * a_tx[j].conj())
            });
            let w = g * p;
            tap.zip_mut_with(o, |h, &v| *h += w * v);
        }
    }
    cir
}

/// Scalar beamformed CIR `h_l = wᴴ H_l f` of a channel at time `t`.
pub fn beamformed_taps(cir: &CirTensor, w: &CVec, f: &CVec) -> Vec<C64> {
    cir.taps
        .iter()
        .map(|h| {
            let hf = h.dot(f);
            w.iter().zip(hf.iter()).fold(ZERO, |acc, (a, b)| acc + a.conj() * b)
        })
        .collect()
}
