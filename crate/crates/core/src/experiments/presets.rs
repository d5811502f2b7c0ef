//! Trial pipelines and the preset sweeps built on them.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{db_to_linear, dbm_to_watts, ExperimentConfig};
use super::harness::{run_trials, splitmix64, trial_seed, MetricRecord, Sample};
use super::metrics::{ase, los_subcarrier_gain, nmse, OfdmBerSim, OfdmFrame, OfdmLink};
use crate::array_channel::{generate_channel, sample_cir, ChannelRealization, CirTensor, LinkKind, SPEED_OF_LIGHT};
use crate::dictionary::{ambiguity_set, build_dictionary, Dictionary};
use crate::doppler::{
    crb_reference, data_phase_beams, estimate_doppler, impulse_interval, passes_energy_gate, schedule_uts,
    simulate_impulse_pilots, ImpulseReceiver, ImpulseSource,
};
use crate::error::{IsacError, Result};
use crate::link_sim::{simulate_radar_rx, simulate_ut_rx, AdcBits, RadarObservation};
use crate::linalg::{CMat, CVec};
use crate::recovery::{block_omp, ce_ut, omp_plain, omp_sr, omp_sr_checkpoints, DelayModel, LosEstimate, RecoveryResult, TraceRow};
use crate::waveform::{build_measurement_matrices, schedule_pilots, MeasurementMatrices, PilotFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Fig6,
    Fig7,
    Fig8,
    Fig9,
    Fig10,
    Fig11,
    Fig12,
    Ase,
}

impl Preset {
    pub const ALL: [Preset; 8] =
        [Preset::Fig6, Preset::Fig7, Preset::Fig8, Preset::Fig9, Preset::Fig10, Preset::Fig11, Preset::Fig12, Preset::Ase];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig6 => "fig6",
            Preset::Fig7 => "fig7",
            Preset::Fig8 => "fig8",
            Preset::Fig9 => "fig9",
            Preset::Fig10 => "fig10",
            Preset::Fig11 => "fig11",
            Preset::Fig12 => "fig12",
            Preset::Ase => "ase",
        }
    }

    fn is_radar(self) -> bool {
        matches!(self, Preset::Fig6 | Preset::Fig7 | Preset::Fig8 | Preset::Fig9 | Preset::Fig10)
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = IsacError;
    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| IsacError::UnknownPreset(s.to_string()))
    }
}

/// Radar CIR recovery algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    OmpSr,
    Omp,
    BlockOmp,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::OmpSr => "omp_sr",
            Algorithm::Omp => "omp",
            Algorithm::BlockOmp => "block_omp",
        }
    }
}

/// Independent generator for one random stream of a trial, so that changing
/// one sweep variable leaves the draws of the others untouched.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const CHANNEL_STREAM: u64 = 1;
const FRAME_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;

fn bits_label(b: AdcBits) -> String {
    match b {
        AdcBits::Finite(b) => b.to_string(),
        AdcBits::Infinite => "inf".into(),
    }
}

/// Everything one radar recovery run needs.
#[derive(Debug, Clone)]
pub struct RadarTrial {
    pub channel: ChannelRealization,
    pub cir: CirTensor,
    pub frame: PilotFrame,
    pub mm: MeasurementMatrices,
    pub obs: RadarObservation,
    pub dict_wsa: Dictionary,
    pub dict_cu: Dictionary,
    pub timing: DelayModel,
}

pub fn radar_trial(cfg: &ExperimentConfig, seed: u64) -> Result<RadarTrial> {
    let params = cfg.radar_scenario()?;
    let wsa = cfg.wsa_geometry()?;
    let cu = cfg.cu_geometry()?;
    let channel = generate_channel(&params, LinkKind::Radar, wsa, cu, &mut stream_rng(seed, CHANNEL_STREAM))?;
    let cir = sample_cir(&channel, 0.0, &cfg.sampling()?);
    let frame = schedule_pilots(cfg.frame_params(), &mut stream_rng(seed, FRAME_STREAM))?;
    let mm = build_measurement_matrices(&frame);
    let obs = simulate_radar_rx(&cir, &mm, &cfg.quantizer()?, cfg.noise_power(), &mut stream_rng(seed, NOISE_STREAM))?;
    let (gx, gy) = cfg.wsa_grid();
    let (cx, cy) = cfg.cu_grid();
    Ok(RadarTrial {
        channel,
        cir,
        frame,
        mm,
        obs,
        dict_wsa: build_dictionary(&wsa, gx, gy)?,
        dict_cu: build_dictionary(&cu, cx, cy)?,
        timing: cfg.timing()?,
    })
}

impl RadarTrial {
    pub fn omp_sr(&self, iterations: usize) -> Result<RecoveryResult> {
        omp_sr(&self.obs, &self.mm, &self.dict_wsa, &self.dict_cu, self.timing, iterations)
    }

    pub fn omp(&self, iterations: usize) -> Result<RecoveryResult> {
        omp_plain(&self.obs, &self.mm, &self.dict_wsa, &self.dict_cu, self.timing, iterations)
    }

    pub fn recover(&self, alg: Algorithm, cfg: &ExperimentConfig) -> Result<CirTensor> {
        Ok(match alg {
            Algorithm::OmpSr => self.omp_sr(cfg.recovery.iterations)?.cir_estimate,
            Algorithm::Omp => self.omp(cfg.recovery.iterations)?.cir_estimate,
            Algorithm::BlockOmp => {
                block_omp(&self.obs, &self.mm, self.timing.sampling_period, cfg.recovery.block_iterations)?.cir_estimate
            }
        })
    }

    pub fn nmse(&self, estimate: &CirTensor) -> Result<f64> {
        nmse(&self.cir, estimate)
    }
}

/// Radar CIR NMSE of one algorithm on the trial drawn from `seed`.
pub fn radar_nmse(cfg: &ExperimentConfig, alg: Algorithm, seed: u64) -> Result<f64> {
    let t = radar_trial(cfg, seed)?;
    t.nmse(&t.recover(alg, cfg)?)
}

/// OMP-SR NMSE after each iteration budget in `checkpoints`, from one run.
pub fn radar_nmse_checkpoints(cfg: &ExperimentConfig, checkpoints: &[usize], seed: u64) -> Result<Vec<f64>> {
    let t = radar_trial(cfg, seed)?;
    omp_sr_checkpoints(&t.obs, &t.mm, &t.dict_wsa, &t.dict_cu, t.timing, checkpoints)?
        .iter()
        .map(|r| t.nmse(&r.cir_estimate))
        .collect()
}

/// One point of an angle–range scatter.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ScatterRow {
    pub kind: String,
    pub range_m: f64,
    pub virtual_angle: f64,
    pub amplitude: f64,
}

/// Truth and gated estimates of a single radar realisation.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguityOutcome {
    pub truth: Vec<ScatterRow>,
    pub omp_sr: Vec<ScatterRow>,
    pub omp: Vec<ScatterRow>,
    /// WSA fine grid step `1/(Ḡ·spacing)`.
    pub grid_step: f64,
    pub spacing: f64,
}

impl AmbiguityOutcome {
    fn near(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol + 1e-12
    }

    /// Every gated OMP-SR angle lies within one grid step of a true angle.
    pub fn refined_estimates_on_truth(&self) -> bool {
        self.omp_sr
            .iter()
            .all(|e| self.truth.iter().any(|t| Self::near(e.virtual_angle, t.virtual_angle, self.grid_step)))
    }

    /// Some gated plain-OMP angle sits in an alias cell of a target and not
    /// near any true angle.
    pub fn plain_has_ghost(&self) -> bool {
        self.omp.iter().any(|e| {
            let on_truth = self.truth.iter().any(|t| Self::near(e.virtual_angle, t.virtual_angle, self.grid_step));
            let on_alias = self.truth.iter().any(|t| {
                ambiguity_set(t.virtual_angle, self.spacing)
                    .into_iter()
                    .filter(|a| (a - t.virtual_angle).abs() > 1e-9)
                    .any(|a| Self::near(e.virtual_angle, a, self.grid_step))
            });
            on_alias && !on_truth
        })
    }
}

fn range_of(delay: f64) -> f64 {
    SPEED_OF_LIGHT * delay / 2.0
}

fn gated_rows(kind: &str, r: &RecoveryResult, gate: f64) -> Vec<ScatterRow> {
    r.atoms
        .iter()
        .zip(r.gains.iter())
        .filter(|(_, g)| g.norm() > gate)
        .map(|(a, g)| ScatterRow { kind: kind.into(), range_m: range_of(a.delay), virtual_angle: a.mu, amplitude: g.norm() })
        .collect()
}

/// Configuration of the angle–range visualisation: point targets, WSA at
/// twice the critical spacing, 20 iterations.
pub fn ambiguity_config(base: &ExperimentConfig) -> ExperimentConfig {
    let mut cfg = base.clone();
    cfg.channel.target_paths = 1;
    cfg.array.wsa_spacing = 1.0;
    cfg.recovery.iterations = 20;
    cfg
}

/// Runs OMP-SR and plain OMP on one realisation and keeps the components
/// whose amplitude exceeds `σ_n/√N_C`.
pub fn ambiguity_trial(cfg: &ExperimentConfig, seed: u64) -> Result<AmbiguityOutcome> {
    let t = radar_trial(cfg, seed)?;
    let iters = cfg.recovery.iterations;
    let sr = t.omp_sr(iters)?;
    let plain = t.omp(iters)?;
    let gate = cfg.noise_power().sqrt() / (cfg.channel.targets.max(1) as f64).sqrt();
    let truth = t
        .channel
        .paths()
        .map(|p| ScatterRow {
            kind: "truth".into(),
            range_m: range_of(p.delay),
            virtual_angle: p.rx.virtual_angles().0,
            amplitude: p.gain.norm(),
        })
        .collect();
    Ok(AmbiguityOutcome {
        truth,
        omp_sr: gated_rows("omp_sr", &sr, gate),
        omp: gated_rows("omp", &plain, gate),
        grid_step: t.dict_wsa.step_x(),
        spacing: cfg.array.wsa_spacing,
    })
}

// ---------------------------------------------------------------------------
// communication side

/// UT channels that passed scheduling, with their initial LoS estimates.
#[derive(Debug, Clone)]
pub struct ScheduledUts {
    pub channels: Vec<ChannelRealization>,
    pub estimates: Vec<LosEstimate>,
}

fn ce_dictionaries(cfg: &ExperimentConfig, r: f64) -> Result<(Dictionary, Dictionary)> {
    let (ux, uy, cx, cy) = cfg.ce_grids(r)?;
    Ok((build_dictionary(&cfg.ut_geometry()?, ux, uy)?, build_dictionary(&cfg.cu_geometry()?, cx, cy)?))
}

/// Draws UT channels one at a time, estimates each LoS path with a pilot of
/// length `doppler.ce_pilot_len`, and keeps those accepted by the scheduler
/// until `users` are served or the candidate budget (16 per user) runs out.
pub fn schedule_users(cfg: &ExperimentConfig, users: usize, seed: u64) -> Result<ScheduledUts> {
    let params = cfg.comm_scenario()?;
    let ut = cfg.ut_geometry()?;
    let cu = cfg.cu_geometry()?;
    let sampling = cfg.sampling()?;
    let timing = cfg.timing()?;
    let mut frame_params = cfg.frame_params();
    frame_params.pilot_len = cfg.doppler.ce_pilot_len;
    let frame = schedule_pilots(frame_params, &mut stream_rng(seed, FRAME_STREAM))?;
    let mm = build_measurement_matrices(&frame);
    let (dict_ut, dict_cu) = ce_dictionaries(cfg, cfg.recovery.ce_redundancy)?;
    let mut ch_rng = stream_rng(seed, CHANNEL_STREAM);
    let mut noise_rng = stream_rng(seed, NOISE_STREAM);
    let mut channels = Vec::new();
    let mut estimates = Vec::new();
    let mut chosen = Vec::new();
    for _ in 0..16 * users.max(1) {
        if chosen.len() >= users {
            break;
        }
        let ch = generate_channel(&params, LinkKind::CommDownlink, ut, cu, &mut ch_rng)?;
        let cir = sample_cir(&ch, 0.0, &sampling);
        let obs = simulate_ut_rx(&cir, &frame, cfg.noise_power(), &mut noise_rng)?;
        estimates.push(ce_ut(&obs, &mm, &dict_ut, &dict_cu, timing)?);
        channels.push(ch);
        chosen = schedule_uts(&estimates, users, cfg.array.cu_x, timing.pulse.half_width);
    }
    Ok(ScheduledUts {
        channels: chosen.iter().map(|&i| channels[i].clone()).collect(),
        estimates: chosen.iter().map(|&i| estimates[i]).collect(),
    })
}

/// How the UTs share the impulse-pilot slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PilotMode {
    /// All scheduled UTs transmit together.
    Iui,
    /// Each UT transmits alone over its full channel.
    NoIui,
    /// Each UT alone over its LoS path only.
    NoiseOnly,
}

/// Doppler estimate of one UT.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DopplerOutcome {
    pub f_true: f64,
    pub f_hat: f64,
    pub passes_gate: bool,
    /// Noise-free LoS amplitude `|A_u|²` of the series.
    pub signal_power: f64,
    pub interval: f64,
}

impl DopplerOutcome {
    /// `|2πT_D(f̂ − f)|²`.
    pub fn squared_error(&self) -> f64 {
        (2.0 * std::f64::consts::PI * self.interval * (self.f_hat - self.f_true)).powi(2)
    }
}

fn conj(v: &CVec) -> CVec {
    v.mapv(|z| z.conj())
}

/// Uplink impulse-pilot Doppler estimation for scheduled UTs at transmit
/// power `p_ut` watts with `p_d` pilots.
pub fn doppler_round(
    cfg: &ExperimentConfig,
    uts: &ScheduledUts,
    p_ut: f64,
    p_d: usize,
    mode: PilotMode,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<DopplerOutcome>> {
    let sampling = cfg.sampling()?;
    let beams = data_phase_beams(&uts.estimates, &cfg.ut_geometry()?, &cfg.cu_geometry()?);
    let interval = impulse_interval(cfg.channel.taps, cfg.doppler.data_len, cfg.signal.sampling_period_s);
    let los: Vec<ChannelRealization> = uts.channels.iter().map(|c| c.los_only()).collect();
    let receivers: Vec<ImpulseReceiver> = uts
        .estimates
        .iter()
        .zip(&beams.cu_beams)
        .map(|(e, f)| ImpulseReceiver { beam: conj(f), tap: e.tap })
        .collect();
    fn uplink<'c>(ch: &'c ChannelRealization, beam: &CVec, power: f64) -> ImpulseSource<'c> {
        ImpulseSource { channel: ch, transpose: true, tx_beam: conj(beam), power }
    }
    let source = |ch, u: usize| uplink(ch, &beams.ut_beams[u], p_ut);
    let noise = cfg.noise_power();
    let series = match mode {
        PilotMode::Iui => {
            let sources: Vec<_> = uts.channels.iter().enumerate().map(|(u, c)| source(c, u)).collect();
            simulate_impulse_pilots(&sources, &receivers, &sampling, p_d, interval, noise, rng)?
        }
        PilotMode::NoIui | PilotMode::NoiseOnly => {
            let set = if mode == PilotMode::NoIui { &uts.channels } else { &los };
            let mut out = Vec::with_capacity(set.len());
            for (u, c) in set.iter().enumerate() {
                let s = simulate_impulse_pilots(&[source(c, u)], &receivers[u..=u], &sampling, p_d, interval, noise, rng)?;
                out.extend(s);
            }
            out
        }
    };
    let mut outcomes = Vec::with_capacity(series.len());
    for (u, s) in series.iter().enumerate() {
        let clean = simulate_impulse_pilots(&[source(&los[u], u)], &receivers[u..=u], &sampling, p_d, interval, 0.0, rng)?;
        let signal_power = clean[0].samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / p_d as f64;
        outcomes.push(DopplerOutcome {
            f_true: uts.channels[u].los.as_ref().map_or(0.0, |p| p.doppler),
            f_hat: estimate_doppler(s)?,
            passes_gate: passes_energy_gate(s),
            signal_power,
            interval,
        });
    }
    Ok(outcomes)
}

// ---------------------------------------------------------------------------
// presets

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Record the OMP-SR residual trace of trial 0.
    pub trace: bool,
    /// Keep `Φ̄` of trial 0.
    pub dump_measurement_matrix: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresetOutput {
    pub preset: Preset,
    pub records: Vec<MetricRecord>,
    pub scatter: Vec<ScatterRow>,
    pub trace: Vec<TraceRow>,
    pub measurement_matrix: Option<CMat>,
}

pub const FIG6_ITERATIONS: [usize; 6] = [10, 50, 100, 150, 200, 300];
pub const FIG6_CONDITIONS: [(usize, f64); 3] = [(6, 60.0), (2, 60.0), (6, 50.0)];
pub const FIG7_SPACINGS: [f64; 5] = [1.0, 1.25, 1.5, 1.75, 2.0];
pub const FIG7_REDUNDANCY: [f64; 3] = [1.0, 1.5, 2.0];
pub const FIG8_PILOTS: [usize; 3] = [60, 120, 240];
pub const FIG8_CODEBOOKS: [usize; 10] = [1, 2, 3, 4, 5, 6, 8, 10, 12, 16];
pub const FIG9_POWERS_DBM: [f64; 4] = [40.0, 50.0, 60.0, 70.0];
pub const FIG9_BITS: [AdcBits; 3] = [AdcBits::Finite(3), AdcBits::Finite(5), AdcBits::Infinite];
pub const FIG11_POWERS_DBM: [f64; 7] = [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0];
pub const FIG11_PILOTS: [usize; 2] = [2, 4];
pub const ASE_POWERS_DBM: [f64; 5] = [30.0, 40.0, 50.0, 60.0, 70.0];
pub const ASE_REDUNDANCY: [f64; 3] = [1.0, 2.0, 4.0];
pub const ASE_UT_CODEBOOKS: [usize; 6] = [1, 2, 4, 8, 12, 16];

/// Frame dwell `T_RF` giving about `n_cb` configurations over `len` samples,
/// or `None` when it would not exceed the guard interval.
pub fn dwell_for(len: usize, n_cb: usize, guard: usize) -> Option<usize> {
    let t = len.div_ceil(n_cb.max(1));
    (n_cb == 1 || t > guard).then_some(t)
}

/// Applies the preset's fixed settings on top of `base`.
pub fn preset_config(base: &ExperimentConfig, preset: Preset) -> ExperimentConfig {
    let mut cfg = base.clone();
    match preset {
        Preset::Fig9 => cfg.waveform.pilot_len = 290,
        Preset::Fig10 => cfg = ambiguity_config(&cfg),
        _ => {}
    }
    cfg
}

pub fn run_experiment(cfg: &ExperimentConfig, preset: Preset) -> Result<Vec<MetricRecord>> {
    Ok(run_preset(cfg, preset, &RunOptions::default())?.records)
}

pub fn run_preset(base: &ExperimentConfig, preset: Preset, opts: &RunOptions) -> Result<PresetOutput> {
    base.validate()?;
    let cfg = preset_config(base, preset);
    let seed = cfg.run.seed;
    let trials = cfg.run.trials;
    let name = preset.name();
    let mut scatter = Vec::new();
    let records = match preset {
        Preset::Fig6 => run_trials(name, seed, trials, |s| fig6_trial(&cfg, s))?,
        Preset::Fig7 => run_trials(name, seed, trials, |s| fig7_trial(&cfg, s))?,
        Preset::Fig8 => run_trials(name, seed, trials, |s| fig8_trial(&cfg, s))?,
        Preset::Fig9 => run_trials(name, seed, trials, |s| fig9_trial(&cfg, s))?,
        Preset::Fig10 => {
            let out = ambiguity_trial(&cfg, trial_seed(seed, 0))?;
            scatter.extend(out.truth);
            scatter.extend(out.omp_sr);
            scatter.extend(out.omp);
            Vec::new()
        }
        Preset::Fig11 => run_trials(name, seed, trials, |s| fig11_trial(&cfg, s))?,
        Preset::Fig12 => run_trials(name, seed, trials, |s| fig12_trial(&cfg, s))?,
        Preset::Ase => run_trials(name, seed, trials, |s| ase_trial(&cfg, s))?,
    };

    let mut trace = Vec::new();
    let mut measurement_matrix = None;
    if opts.trace || opts.dump_measurement_matrix {
        let s0 = trial_seed(seed, 0);
        if preset.is_radar() {
            let t = radar_trial(&cfg, s0)?;
            if opts.trace {
                trace = t.omp_sr(cfg.recovery.iterations)?.trace;
            }
            if opts.dump_measurement_matrix {
                measurement_matrix = Some(t.mm.phi_radar);
            }
        } else if opts.dump_measurement_matrix {
            let mut fp = cfg.frame_params();
            if preset != Preset::Ase {
                fp.pilot_len = cfg.doppler.ce_pilot_len;
            }
            let frame = schedule_pilots(fp, &mut stream_rng(s0, FRAME_STREAM))?;
            measurement_matrix = Some(build_measurement_matrices(&frame).phi_radar);
        }
    }
    Ok(PresetOutput { preset, records, scatter, trace, measurement_matrix })
}

fn fig6_trial(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for (targets, p_dl) in FIG6_CONDITIONS {
        let mut c = cfg.clone();
        c.channel.targets = targets;
        c.waveform.pilot_power_dbm = p_dl;
        let metric = format!("nmse;targets={targets};pdl_dbm={p_dl}");
        for (it, v) in FIG6_ITERATIONS.iter().zip(radar_nmse_checkpoints(&c, &FIG6_ITERATIONS, seed)?) {
            out.push(Sample::new("iterations", *it as f64, metric.clone(), v));
        }
    }
    Ok(out)
}

fn fig7_trial(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for r in FIG7_REDUNDANCY {
        for d in FIG7_SPACINGS {
            let mut c = cfg.clone();
            c.array.wsa_spacing = d;
            c.recovery.wsa_redundancy = r;
            c.recovery.iterations = 100;
            out.push(Sample::new("spacing_wavelengths", d, format!("nmse;wsa_redundancy={r}"), radar_nmse(&c, Algorithm::OmpSr, seed)?));
        }
    }
    Ok(out)
}

fn fig8_trial(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for p in FIG8_PILOTS {
        let mut seen = Vec::new();
        for n in FIG8_CODEBOOKS {
            let Some(t) = dwell_for(p, n, cfg.waveform.guard) else { continue };
            let mut c = cfg.clone();
            c.waveform.pilot_len = p;
            c.waveform.t_rf_cu = t;
            let n_cb = c.frame_params().n_cb();
            if seen.contains(&n_cb) {
                continue;
            }
            seen.push(n_cb);
            out.push(Sample::new("n_cb", n_cb as f64, format!("nmse;pilot_len={p}"), radar_nmse(&c, Algorithm::OmpSr, seed)?));
        }
        let mut c = cfg.clone();
        c.waveform.pilot_len = p;
        c.waveform.ideal_bound = true;
        out.push(Sample::new("n_cb", p as f64, format!("nmse_ideal;pilot_len={p}"), radar_nmse(&c, Algorithm::OmpSr, seed)?));
    }
    Ok(out)
}

fn fig9_trial(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for bits in FIG9_BITS {
        for p_dl in FIG9_POWERS_DBM {
            let mut c = cfg.clone();
            c.receiver.adc_bits.0 = bits;
            c.waveform.pilot_power_dbm = p_dl;
            let t = radar_trial(&c, seed)?;
            for alg in [Algorithm::OmpSr, Algorithm::Omp, Algorithm::BlockOmp] {
                let v = t.nmse(&t.recover(alg, &c)?)?;
                out.push(Sample::new("pdl_dbm", p_dl, format!("nmse;alg={};bits={}", alg.name(), bits_label(bits)), v));
            }
        }
    }
    Ok(out)
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn fig11_trial(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Sample>> {
    let uts = schedule_users(cfg, cfg.doppler.users, seed)?;
    let noise = cfg.noise_power();
    let mut out = Vec::new();
    for (k, p_d) in FIG11_PILOTS.into_iter().enumerate() {
        for (j, p_dbm) in FIG11_POWERS_DBM.into_iter().enumerate() {
            let p_ut = dbm_to_watts(p_dbm);
            for (m, mode) in [PilotMode::Iui, PilotMode::NoIui, PilotMode::NoiseOnly].into_iter().enumerate() {
                let mut rng = stream_rng(seed, 100 + (k * 100 + j * 10 + m) as u64);
                let res = doppler_round(cfg, &uts, p_ut, p_d, mode, &mut rng)?;
                let label = match mode {
                    PilotMode::Iui => "iui",
                    PilotMode::NoIui => "no_iui",
                    PilotMode::NoiseOnly => "noise_only",
                };
                if mode == PilotMode::NoiseOnly {
                    if let Some(v) = mean(res.iter().map(DopplerOutcome::squared_error)) {
                        out.push(Sample::new("put_dbm", p_dbm, format!("mse;{label};pd={p_d}"), v));
                    }
                    let crbs: Vec<f64> =
                        res.iter().filter(|r| r.signal_power > 0.0).map(|r| crb_reference(r.signal_power / noise, p_d)).collect::<Result<_>>()?;
                    if let Some(v) = mean(crbs.into_iter()) {
                        out.push(Sample::new("put_dbm", p_dbm, format!("crb;pd={p_d}"), v));
                    }
                } else {
                    if let Some(v) = mean(res.iter().filter(|r| r.passes_gate).map(DopplerOutcome::squared_error)) {
                        out.push(Sample::new("put_dbm", p_dbm, format!("mse;{label};pd={p_d}"), v));
                    }
                    let pass = res.iter().filter(|r| r.passes_gate).count() as f64 / res.len().max(1) as f64;
                    out.push(Sample::new("put_dbm", p_dbm, format!("gate_pass;{label};pd={p_d}"), pass));
                }
            }
        }
    }
    Ok(out)
}

/// Data-phase OFDM timing: one symbol per data frame with a cyclic prefix of
/// `L`, starting `L` samples after its impulse pilot.
pub fn ofdm_frame(cfg: &ExperimentConfig) -> OfdmFrame {
    let ts = cfg.signal.sampling_period_s;
    OfdmFrame {
        subcarriers: cfg.doppler.data_len,
        cyclic_prefix: cfg.channel.taps,
        frame_interval: impulse_interval(cfg.channel.taps, cfg.doppler.data_len, ts),
        data_offset: cfg.channel.taps as f64 * ts,
    }
}

/// Compensation modes of the BER experiment.
pub const BER_MODES: [&str; 3] = ["perfect", "estimated", "none"];

/// Per-UT BER at each SNR (dB, per-subcarrier Es/N0 of the beamformed LoS
/// link) for perfect, estimated and no Doppler compensation. The estimates
/// come from the multi-UT impulse-pilot stage at `doppler.ut_power_dbm` with
/// `doppler.impulse_pilots` pilots.
pub fn ber_trial(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<(f64, [f64; 3])>> {
    let uts = schedule_users(cfg, cfg.doppler.users, seed)?;
    let mut rng = stream_rng(seed, 50);
    let est = doppler_round(cfg, &uts, dbm_to_watts(cfg.doppler.ut_power_dbm), cfg.doppler.impulse_pilots, PilotMode::Iui, &mut rng)?;
    let beams = data_phase_beams(&uts.estimates, &cfg.ut_geometry()?, &cfg.cu_geometry()?);
    let sampling = cfg.sampling()?;
    let frame = ofdm_frame(cfg);
    let mut sums = vec![[0.0; 3]; cfg.ofdm.snr_db.len()];
    for (u, ch) in uts.channels.iter().enumerate() {
        let link = OfdmLink { channel: ch, ut_beam: beams.ut_beams[u].clone(), cu_beam: beams.cu_beams[u].clone(), sampling };
        let gain = los_subcarrier_gain(&link);
        if !(gain > 0.0) {
            continue;
        }
        let sim = OfdmBerSim::new(&link, frame, cfg.ofdm.symbols, splitmix64(seed ^ (60 + u as u64)))?;
        for (i, snr) in cfg.ofdm.snr_db.iter().enumerate() {
            let noise = gain / db_to_linear(*snr);
            let modes = [Some(sim.los_doppler()), Some(est[u].f_hat), None];
            for (m, f) in modes.into_iter().enumerate() {
                sums[i][m] += sim.run(f, noise).rate();
            }
        }
    }
    let n = uts.channels.len().max(1) as f64;
    Ok(cfg.ofdm.snr_db.iter().zip(sums).map(|(s, v)| (*s, v.map(|x| x / n))).collect())
}

fn fig12_trial(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for (snr, bers) in ber_trial(cfg, seed)? {
        for (mode, v) in BER_MODES.iter().zip(bers) {
            out.push(Sample::new("snr_db", snr, format!("ber;{mode}"), v));
        }
    }
    Ok(out)
}

/// ASE of one UT channel for each `P_DL` and dictionary redundancy, plus
/// the perfect-angle reference.
fn ase_trial(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Sample>> {
    let params = cfg.comm_scenario()?;
    let ut = cfg.ut_geometry()?;
    let cu = cfg.cu_geometry()?;
    let ch = generate_channel(&params, LinkKind::CommDownlink, ut, cu, &mut stream_rng(seed, CHANNEL_STREAM))?;
    let cir = sample_cir(&ch, 0.0, &cfg.sampling()?);
    let timing = cfg.timing()?;
    let noise = cfg.noise_power();
    let n_rf = cfg.array.rf_chains;
    let n_sub = cfg.doppler.data_len;
    let los = ch.los.as_ref().expect("downlink channels carry a LoS path");
    let truth = (los.rx.virtual_angles(), los.tx.virtual_angles());
    let dicts: Vec<(f64, Dictionary, Dictionary)> = ASE_REDUNDANCY
        .iter()
        .map(|&r| ce_dictionaries(cfg, r).map(|(a, b)| (r, a, b)))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();

    let estimate = |c: &ExperimentConfig, du: &Dictionary, dc: &Dictionary| -> Result<LosEstimate> {
        let frame = schedule_pilots(c.frame_params(), &mut stream_rng(seed, FRAME_STREAM))?;
        let mm = build_measurement_matrices(&frame);
        let obs = simulate_ut_rx(&cir, &frame, noise, &mut stream_rng(seed, NOISE_STREAM))?;
        ce_ut(&obs, &mm, du, dc, timing)
    };

    for p_dbm in ASE_POWERS_DBM {
        let mut c = cfg.clone();
        c.waveform.pilot_power_dbm = p_dbm;
        let p_dl = dbm_to_watts(p_dbm);
        for (r, du, dc) in &dicts {
            let e = estimate(&c, du, dc)?;
            let v = ase(&cir, &ut, &cu, (e.mu_ut, e.nu_ut), (e.mu_cu, e.nu_cu), p_dl, noise, n_rf, n_sub)?;
            out.push(Sample::new("pdl_dbm", p_dbm, format!("ase;r_dic={r}"), v));
        }
        out.push(Sample::new("pdl_dbm", p_dbm, "ase;perfect", ase(&cir, &ut, &cu, truth.0, truth.1, p_dl, noise, n_rf, n_sub)?));
    }

    let (_, du, dc) = dicts.iter().find(|d| d.0 == cfg.recovery.ce_redundancy).unwrap_or(&dicts[1]);
    let q = cfg.frame_params().observed_len();
    let mut seen = Vec::new();
    for m in ASE_UT_CODEBOOKS {
        let Some(t) = dwell_for(q, m, cfg.waveform.guard) else { continue };
        let mut c = cfg.clone();
        c.waveform.t_rf_ut = t;
        c.waveform.gi_offset = 0;
        let fp = c.frame_params();
        if fp.validate().is_err() || seen.contains(&fp.m_cb()) {
            continue;
        }
        seen.push(fp.m_cb());
        let e = estimate(&c, du, dc)?;
        let p_dl = fp.p_dl;
        let v = ase(&cir, &ut, &cu, (e.mu_ut, e.nu_ut), (e.mu_cu, e.nu_cu), p_dl, noise, n_rf, n_sub)?;
        out.push(Sample::new("m_cb", fp.m_cb() as f64, "ase", v));
    }
    Ok(out)
}
