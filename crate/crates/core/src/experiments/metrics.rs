//! Per-trial figures of merit: CIR recovery error, spectral efficiency and
//! OFDM bit error rate over a time-varying beamformed link.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;

use crate::array_channel::{upa_steering_virtual, ArrayGeometry, ChannelRealization, CirSampling, CirTensor};
use crate::error::{invalid, IsacError, Result};
use crate::linalg::{dot_h, frob_sq, CVec, C64, ZERO};

/// `‖Ĥ − H‖²_F / ‖H‖²_F` over all taps.
pub fn nmse(truth: &CirTensor, estimate: &CirTensor) -> Result<f64> {
    if truth.len() != estimate.len() || truth.rx() != estimate.rx() || truth.tx() != estimate.tx() {
        return Err(IsacError::DimensionMismatch("CIR shapes differ".into()));
    }
    let energy = truth.energy();
    if !(energy > 0.0) {
        return Err(invalid("NMSE reference has zero energy"));
    }
    let err: f64 = truth.taps.iter().zip(&estimate.taps).map(|(a, b)| frob_sq((b - a).view())).sum();
    Ok(err / energy)
}

fn dft(x: &[C64], n: usize) -> Vec<C64> {
    let mut buf = vec![ZERO; n];
    buf[..x.len()].copy_from_slice(x);
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf
}

/// Average spectral efficiency with LoS beam steering at the estimated
/// virtual angles `(μ̂_UT, ν̂_UT)` and `(μ̂_CU, ν̂_CU)`:
/// the mean over `n_sub` subcarriers of
/// `log₂(1 + P_DL/(σ² N_RF)·|â_UTᴴ H_k â_CU|²)`.
#[allow(clippy::too_many_arguments)]
pub fn ase(
    h_sd: &CirTensor,
    ut: &ArrayGeometry,
    cu: &ArrayGeometry,
    ut_angles: (f64, f64),
    cu_angles: (f64, f64),
    p_dl: f64,
    noise_power: f64,
    n_rf: usize,
    n_sub: usize,
) -> Result<f64> {
    if n_sub < h_sd.len() {
        return Err(invalid("subcarrier count must cover the channel length"));
    }
    if !(noise_power > 0.0) || n_rf == 0 {
        return Err(invalid("noise power and RF chain count must be positive"));
    }
    let w = upa_steering_virtual(ut_angles.0, ut_angles.1, ut);
    let f = upa_steering_virtual(cu_angles.0, cu_angles.1, cu);
    if w.len() != h_sd.rx() || f.len() != h_sd.tx() {
        return Err(IsacError::DimensionMismatch("beams do not match the CIR".into()));
    }
    let taps = crate::array_channel::beamformed_taps(h_sd, &w, &f);
    let snr = p_dl / (noise_power * n_rf as f64);
    let spectrum = dft(&taps, n_sub);
    Ok(spectrum.iter().map(|h| (1.0 + snr * h.norm_sqr()).log2()).sum::<f64>() / n_sub as f64)
}

/// Gray-mapped square 16-QAM with unit average energy.
pub mod qam16 {
    use crate::linalg::C64;

    const SCALE: f64 = 0.316_227_766_016_837_94; // 1/√10

    fn level(b0: u8, b1: u8) -> f64 {
        match (b0, b1) {
            (0, 0) => -3.0,
            (0, 1) => -1.0,
            (1, 1) => 1.0,
            _ => 3.0,
        }
    }

    fn decide(x: f64) -> (u8, u8) {
        let x = x / SCALE;
        if x < -2.0 {
            (0, 0)
        } else if x < 0.0 {
            (0, 1)
        } else if x < 2.0 {
            (1, 1)
        } else {
            (1, 0)
        }
    }

    /// Four bits to one symbol: bits 0–1 select the in-phase level, 2–3 the
    /// quadrature level.
    pub fn map(bits: [u8; 4]) -> C64 {
        C64::new(level(bits[0], bits[1]), level(bits[2], bits[3])) * SCALE
    }

    pub fn demap(z: C64) -> [u8; 4] {
        let (a, b) = decide(z.re);
        let (c, d) = decide(z.im);
        [a, b, c, d]
    }
}

/// A downlink OFDM link between beam-steered CU and UT arrays.
#[derive(Debug, Clone)]
pub struct OfdmLink<'a> {
    pub channel: &'a ChannelRealization,
    /// UT combiner `w`.
    pub ut_beam: CVec,
    /// CU precoder `f`.
    pub cu_beam: CVec,
    pub sampling: CirSampling,
}

/// Frame timing of the data phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfdmFrame {
    pub subcarriers: usize,
    pub cyclic_prefix: usize,
    /// Spacing of the impulse pilots that anchor each data frame, seconds.
    pub frame_interval: f64,
    /// Delay from an impulse pilot to the first cyclic-prefix sample, seconds.
    pub data_offset: f64,
}

/// Beamformed taps `c_{k,l}` grouped by Doppler frequency: the scalar
/// channel at time `t` is `h_l(t) = Σ_k c_{k,l} e^{j2πf_k t}`.
#[derive(Debug, Clone)]
struct DopplerGroups {
    freqs: Vec<f64>,
    taps: Vec<Vec<C64>>,
}

impl DopplerGroups {
    fn build(link: &OfdmLink<'_>, los_only: bool) -> Self {
        let ch = link.channel;
        let mut freqs: Vec<f64> = Vec::new();
        let mut taps: Vec<Vec<C64>> = Vec::new();
        let s = &link.sampling;
        let paths: Vec<_> = if los_only { ch.los.iter().collect() } else { ch.paths().collect() };
        for path in paths {
            let (mr, nr) = path.rx.virtual_angles();
            let (mt, nt) = path.tx.virtual_angles();
            let a_rx = upa_steering_virtual(mr, nr, &ch.rx_geometry);
            let a_tx = upa_steering_virtual(mt, nt, &ch.tx_geometry);
            let gain = dot_h(link.ut_beam.view(), a_rx.view()) * dot_h(a_tx.view(), link.cu_beam.view()) * path.gain;
            let k = match freqs.iter().position(|&f| f == path.doppler) {
                Some(k) => k,
                None => {
                    freqs.push(path.doppler);
                    taps.push(vec![ZERO; s.taps]);
                    freqs.len() - 1
                }
            };
            for (l, c) in taps[k].iter_mut().enumerate() {
                *c += gain * s.pulse.eval(l as f64 * s.sampling_period - path.delay - s.pulse.half_width);
            }
        }
        Self { freqs, taps }
    }

    fn at(&self, t: f64) -> Vec<C64> {
        let len = self.taps.first().map_or(0, Vec::len);
        let mut out = vec![ZERO; len];
        for (f, taps) in self.freqs.iter().zip(&self.taps) {
            let rot = C64::from_polar(1.0, 2.0 * PI * f * t);
            for (o, c) in out.iter_mut().zip(taps) {
                *o += rot * c;
            }
        }
        out
    }
}

/// Mean `|H_LoS[k]|²` over subcarriers of the beamformed LoS channel: the
/// per-subcarrier signal energy for unit-energy symbols.
pub fn los_subcarrier_gain(link: &OfdmLink<'_>) -> f64 {
    DopplerGroups::build(link, true).at(0.0).iter().map(|c| c.norm_sqr()).sum()
}

/// Bit error tally.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BitErrors {
    pub errors: u64,
    pub bits: u64,
}

impl BitErrors {
    pub fn rate(&self) -> f64 {
        if self.bits == 0 {
            0.0
        } else {
            self.errors as f64 / self.bits as f64
        }
    }
}

/// Noise-free received data symbols for a fixed bit stream, reusable across
/// noise levels and compensation modes. Noise is drawn from the same seed
/// each time, so different modes see identical bits and noise.
#[derive(Debug, Clone)]
pub struct OfdmBerSim {
    frame: OfdmFrame,
    sampling_period: f64,
    bits: Vec<Vec<[u8; 4]>>,
    /// Received FFT-window samples per symbol (after CP removal).
    clean: Vec<Vec<C64>>,
    /// Start time of each FFT window and its anchoring impulse time.
    windows: Vec<(f64, f64)>,
    /// Beamformed LoS taps at each anchor time, used by the equaliser.
    los_at_anchor: Vec<Vec<C64>>,
    los_doppler: f64,
    seed: u64,
}

impl OfdmBerSim {
    pub fn new(link: &OfdmLink<'_>, frame: OfdmFrame, n_symbols: usize, seed: u64) -> Result<Self> {
        let l = link.sampling.taps;
        if frame.cyclic_prefix < l {
            return Err(invalid("cyclic prefix must be at least the channel length"));
        }
        if frame.subcarriers == 0 || n_symbols == 0 {
            return Err(invalid("need at least one subcarrier and one symbol"));
        }
        let ts = link.sampling.sampling_period;
        let n = frame.subcarriers;
        let cp = frame.cyclic_prefix;
        let groups = DopplerGroups::build(link, false);
        let los = DopplerGroups::build(link, true);
        let los_doppler = link.channel.los.as_ref().map_or(0.0, |p| p.doppler);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ifft = FftPlanner::new().plan_fft_inverse(n);
        let norm = 1.0 / (n as f64).sqrt();

        let mut bits = Vec::with_capacity(n_symbols);
        let mut clean = Vec::with_capacity(n_symbols);
        let mut windows = Vec::with_capacity(n_symbols);
        let mut los_at_anchor = Vec::with_capacity(n_symbols);
        for s in 0..n_symbols {
            let sym_bits: Vec<[u8; 4]> = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(0..2u8))).collect();
            let mut x: Vec<C64> = sym_bits.iter().map(|b| qam16::map(*b)).collect();
            ifft.process(&mut x);
            x.iter_mut().for_each(|v| *v *= norm);
            let mut tx = Vec::with_capacity(n + cp);
            tx.extend_from_slice(&x[n - cp..]);
            tx.extend_from_slice(&x);

            let anchor = s as f64 * frame.frame_interval;
            let start = anchor + frame.data_offset;
            // received samples over the FFT window only
            let mut rx = vec![ZERO; n];
            for (k, f) in groups.freqs.iter().enumerate() {
                let taps = &groups.taps[k];
                for (i, r) in rx.iter_mut().enumerate() {
                    let idx = cp + i;
                    let t = start + idx as f64 * ts;
                    let mut acc = ZERO;
                    for (lag, c) in taps.iter().enumerate() {
                        acc += c * tx[idx - lag];
                    }
                    *r += acc * C64::from_polar(1.0, 2.0 * PI * f * t);
                }
            }
            bits.push(sym_bits);
            clean.push(rx);
            windows.push((start + cp as f64 * ts, anchor));
            los_at_anchor.push(los.at(anchor));
        }
        Ok(Self { frame, sampling_period: ts, bits, clean, windows, los_at_anchor, los_doppler, seed })
    }

    pub fn los_doppler(&self) -> f64 {
        self.los_doppler
    }

    /// Runs the receiver with optional compensation `e^{−j2πf̂(t − t_anchor)}`.
    pub fn run(&self, f_hat: Option<f64>, noise_power: f64) -> BitErrors {
        let n = self.frame.subcarriers;
        let fft = FftPlanner::new().plan_fft_forward(n);
        let norm = 1.0 / (n as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        let sigma = (noise_power / 2.0).sqrt();
        let mut tally = BitErrors::default();
        for (s, rx) in self.clean.iter().enumerate() {
            let (t0, anchor) = self.windows[s];
            let mut y: Vec<C64> = rx
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let noise = C64::new(gauss(&mut rng), gauss(&mut rng)) * sigma;
                    let mut z = v + noise;
                    if let Some(f) = f_hat {
                        z *= C64::from_polar(1.0, -2.0 * PI * f * (t0 + i as f64 * self.sampling_period - anchor));
                    }
                    z
                })
                .collect();
            fft.process(&mut y);
            let h = dft(&self.los_at_anchor[s], n);
            for (k, b) in self.bits[s].iter().enumerate() {
                let z = y[k] * norm;
                let est = if h[k].norm_sqr() > 0.0 { z / h[k] } else { ZERO };
                let d = qam16::demap(est);
                tally.errors += b.iter().zip(d.iter()).filter(|(a, c)| a != c).count() as u64;
                tally.bits += 4;
            }
        }
        tally
    }
}

fn gauss(rng: &mut impl Rng) -> f64 {
    rng.sample::<f64, _>(rand_distr::StandardNormal)
}

/// One-shot BER of 16-QAM OFDM over the link.
pub fn simulate_ofdm_ber(
    link: &OfdmLink<'_>,
    frame: OfdmFrame,
    f_hat: Option<f64>,
    n_symbols: usize,
    noise_power: f64,
    seed: u64,
) -> Result<f64> {
    Ok(OfdmBerSim::new(link, frame, n_symbols, seed)?.run(f_hat, noise_power).rate())
}
