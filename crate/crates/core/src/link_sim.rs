//! Forward model of the pilot phase: convolution through the channel,
//! additive noise, analog combining at the UT and low-resolution ADCs at the
//! radar unit.

use ndarray::s;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::array_channel::CirTensor;
use crate::error::{invalid, IsacError, Result};
use crate::linalg::{dot_h, CMat, CVec, C64};
use crate::waveform::{MeasurementMatrices, PilotFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdcBits {
    Finite(u32),
    Infinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerSpec {
    pub bits: AdcBits,
    /// Clip level in multiples of the per-component RMS.
    pub clip_scale: f64,
}

impl QuantizerSpec {
    pub fn new(bits: AdcBits, clip_scale: f64) -> Result<Self> {
        if !(clip_scale > 0.0) {
            return Err(invalid("clip scale must be positive"));
        }
        if let AdcBits::Finite(b) = bits {
            if b == 0 || b > 24 {
                return Err(invalid(format!("ADC resolution must be 1..=24 bits, got {b}")));
            }
        }
        Ok(Self { bits, clip_scale })
    }

    pub fn ideal() -> Self {
        Self { bits: AdcBits::Infinite, clip_scale: 3.0 }
    }

    pub fn bits(b: u32) -> Self {
        Self { bits: AdcBits::Finite(b), clip_scale: 3.0 }
    }
}

/// Mid-rise uniform quantiser with `levels` bins over `[−c, c]`.
fn quantize_scalar(x: f64, c: f64, levels: u64) -> f64 {
    if c <= 0.0 {
        return 0.0;
    }
    let step = 2.0 * c / levels as f64;
    let idx = ((x + c) / step).floor().clamp(0.0, (levels - 1) as f64);
    -c + (idx + 0.5) * step
}

fn component_rms(x: &CMat) -> (f64, f64) {
    let n = x.len().max(1) as f64;
    let re = (x.iter().map(|z| z.re * z.re).sum::<f64>() / n).sqrt();
    let im = (x.iter().map(|z| z.im * z.im).sum::<f64>() / n).sqrt();
    (re, im)
}

/// Quantises real and imaginary parts separately, each over `[−c, c]` with
/// `c = clip_scale · RMS` of that component across the whole block.
pub fn quantize(x: &CMat, q: &QuantizerSpec) -> CMat {
    match q.bits {
        AdcBits::Infinite => x.clone(),
        AdcBits::Finite(_) => {
            let (re, im) = component_rms(x);
            quantize_with_range(x, q, q.clip_scale * re, q.clip_scale * im)
        }
    }
}

/// Quantises with explicit clip levels for the real and imaginary parts.
pub fn quantize_with_range(x: &CMat, q: &QuantizerSpec, clip_re: f64, clip_im: f64) -> CMat {
    match q.bits {
        AdcBits::Infinite => x.clone(),
        AdcBits::Finite(b) => {
            let levels = 1u64 << b;
            x.mapv(|z| C64::new(quantize_scalar(z.re, clip_re, levels), quantize_scalar(z.im, clip_im, levels)))
        }
    }
}

/// Circularly-symmetric complex Gaussian samples with variance `power`.
pub fn complex_noise(rng: &mut impl Rng, shape: (usize, usize), power: f64) -> CMat {
    let sd = (power / 2.0).sqrt();
    CMat::from_shape_simple_fn(shape, || {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(sd * re, sd * im)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadarObservation {
    /// `N̄ × Q`.
    pub y: CMat,
    pub noise_power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommObservation {
    pub y_valid: CVec,
    pub noise_power: f64,
}

/// Noise-free echo `H̄_SD Φ̄`.
pub fn radar_signal(cir: &CirTensor, mm: &MeasurementMatrices) -> Result<CMat> {
    let h_sd = cir.spatial_delay();
    if h_sd.ncols() != mm.phi_radar.nrows() {
        return Err(IsacError::DimensionMismatch(format!(
            "CIR has {} spatial-delay columns, measurement matrix expects {}",
            h_sd.ncols(),
            mm.phi_radar.nrows()
        )));
    }
    Ok(h_sd.dot(&mm.phi_radar))
}

/// Direct time-domain convolution `ȳ_n = Σ_l H̄_l p_{n−l}` for
/// `0 ≤ n < P + L − 1`.
pub fn radar_convolution_direct(cir: &CirTensor, frame: &PilotFrame) -> CMat {
    let q_len = frame.params.pilot_len + cir.len() - 1;
    let mut out = CMat::zeros((cir.rx(), q_len));
    for n in 0..q_len {
        for (l, h) in cir.taps.iter().enumerate() {
            let idx = n as isize - l as isize;
            if idx < 0 || idx as usize >= frame.params.pilot_len {
                continue;
            }
            let y = h.dot(&frame.transmit_pilot(idx));
            let mut col = out.slice_mut(s![.., n]);
            col += &y;
        }
    }
    out
}

/// `Ȳ = Q{H̄_SD Φ̄ + N̄}`.
pub fn simulate_radar_rx(
    cir: &CirTensor,
    mm: &MeasurementMatrices,
    q: &QuantizerSpec,
    noise_power: f64,
    rng: &mut impl Rng,
) -> Result<RadarObservation> {
    let clean = radar_signal(cir, mm)?;
    let noisy = if noise_power > 0.0 { clean + complex_noise(rng, (cir.rx(), mm.observed_len()), noise_power) } else { clean };
    Ok(RadarObservation { y: quantize(&noisy, q), noise_power })
}

/// `y_n = w_nᴴ (Σ_l H_l p_{n−l} + n_n)` restricted to the valid samples.
pub fn simulate_ut_rx(
    cir: &CirTensor,
    frame: &PilotFrame,
    noise_power: f64,
    rng: &mut impl Rng,
) -> Result<CommObservation> {
    if cir.tx() != frame.params.n_tx || cir.rx() != frame.params.m_ut {
        return Err(IsacError::DimensionMismatch("CIR does not match the frame's array sizes".into()));
    }
    let pilots = frame.pilots();
    let q_len = frame.params.observed_len();
    let mut y = Vec::new();
    for n in 0..q_len {
        let mut x = CVec::zeros(cir.rx());
        for (l, h) in cir.taps.iter().enumerate() {
            let idx = n as isize - l as isize;
            if idx >= 0 && (idx as usize) < pilots.len() {
                x += &h.dot(&pilots[idx as usize]);
            }
        }
        if noise_power > 0.0 {
            let noise = complex_noise(rng, (cir.rx(), 1), noise_power);
            x += &noise.column(0);
        }
        if frame.params.in_ut_gi(n) {
            continue;
        }
        y.push(dot_h(frame.sample_combiners[n].view(), x.view()));
    }
    let y_valid = CVec::from_vec(y);
    debug_assert_eq!(y_valid.len(), frame.valid_indices().len());
    Ok(CommObservation { y_valid, noise_power })
}
