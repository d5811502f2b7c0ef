//! Pilot waveform synthesis under hybrid-beamforming hardware constraints
//! and the measurement matrices derived from it.
//!
//! Sample indices are 0-based internally. Columns of `Φ̄` and the entries of
//! the valid index set use 1-based numbering `q = 1..=Q`, where column `q`
//! corresponds to received sample `q − 1`.

use std::f64::consts::PI;

use ndarray::s;
use rand::Rng;

use crate::error::{invalid, Result};
use crate::linalg::{CMat, CVec, C64};

/// Random phase-shifter codebooks.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebooks {
    /// `N × N_RF` precoders.
    pub precoders: Vec<CMat>,
    /// `M`-element combiners.
    pub combiners: Vec<CVec>,
}

fn random_phase(rng: &mut impl Rng, scale: f64) -> C64 {
    C64::from_polar(scale, rng.random_range(0.0..2.0 * PI))
}

fn random_precoder(rng: &mut impl Rng, n: usize, n_rf: usize) -> CMat {
    let scale = 1.0 / (n as f64).sqrt();
    CMat::from_shape_simple_fn((n, n_rf), || random_phase(rng, scale))
}

fn random_combiner(rng: &mut impl Rng, m: usize) -> CVec {
    let scale = 1.0 / (m as f64).sqrt();
    CVec::from_shape_simple_fn(m, || random_phase(rng, scale))
}

/// Draws `n_cb` precoders (`n × n_rf`) and `m_cb` combiners (`m × 1`) whose
/// entries are `e^{jφ}/√n` and `e^{jφ}/√m` with `φ ~ U[0, 2π)`.
pub fn build_codebooks(
    n: usize,
    n_rf: usize,
    n_cb: usize,
    m: usize,
    m_cb: usize,
    rng: &mut impl Rng,
) -> Result<Codebooks> {
    if n == 0 || n_rf == 0 || m == 0 || n_cb == 0 || m_cb == 0 {
        return Err(invalid("codebook dimensions and counts must be at least 1"));
    }
    let precoders = (0..n_cb).map(|_| random_precoder(rng, n, n_rf)).collect();
    let combiners = (0..m_cb).map(|_| random_combiner(rng, m)).collect();
    Ok(Codebooks { precoders, combiners })
}

/// Frame-level pilot parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameParams {
    /// Pilot length `P` in samples.
    pub pilot_len: usize,
    /// Channel taps `L`; the UT and RU observe `Q = P + L − 1` samples.
    pub taps: usize,
    /// CU antennas `N`.
    pub n_tx: usize,
    pub n_rf: usize,
    /// UT antennas `M`.
    pub m_ut: usize,
    pub t_rf_cu: usize,
    pub t_rf_ut: usize,
    pub t_gi: usize,
    /// Shift of the UT switching grid relative to sample 0, `0 ≤ offset < t_rf_ut`.
    pub gi_offset: usize,
    /// Downlink pilot power `P_DL` in watts.
    pub p_dl: f64,
}

impl FrameParams {
    pub fn observed_len(&self) -> usize {
        self.pilot_len + self.taps - 1
    }

    /// `N^CB = ⌈P / T_rf_cu⌉`.
    pub fn n_cb(&self) -> usize {
        self.pilot_len.div_ceil(self.t_rf_cu)
    }

    /// `M^CB`, the number of UT sub-frames covering the `Q` observed samples.
    pub fn m_cb(&self) -> usize {
        (self.observed_len() - 1 + self.gi_offset) / self.t_rf_ut + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.pilot_len == 0 || self.taps == 0 || self.n_tx == 0 || self.n_rf == 0 || self.m_ut == 0 {
            return Err(invalid("pilot length, taps and antenna counts must be at least 1"));
        }
        if self.t_rf_cu == 0 || self.t_rf_ut == 0 {
            return Err(invalid("dwell lengths must be at least 1"));
        }
        if self.t_gi >= self.t_rf_cu.min(self.t_rf_ut) {
            return Err(invalid(format!(
                "guard interval {} must be shorter than both dwell lengths ({}, {})",
                self.t_gi, self.t_rf_cu, self.t_rf_ut
            )));
        }
        if self.gi_offset >= self.t_rf_ut {
            return Err(invalid("UT switching offset must be smaller than the UT dwell length"));
        }
        if !(self.p_dl >= 0.0) {
            return Err(invalid("pilot power must be non-negative"));
        }
        Ok(())
    }

    /// 0-based CU codebook entry active at pilot sample `p`.
    pub fn cu_subframe(&self, p: usize) -> usize {
        p / self.t_rf_cu
    }

    /// Whether pilot sample `p` lies in a CU reconfiguration window.
    pub fn in_cu_gi(&self, p: usize) -> bool {
        self.t_gi > 0
            && p % self.t_rf_cu >= self.t_rf_cu - self.t_gi
            && self.cu_subframe(p) + 1 != self.n_cb()
    }

    /// 0-based UT codebook entry active at received sample `n`.
    pub fn ut_subframe(&self, n: usize) -> usize {
        (n + self.gi_offset) / self.t_rf_ut
    }

    pub fn in_ut_gi(&self, n: usize) -> bool {
        self.t_gi > 0
            && (n + self.gi_offset) % self.t_rf_ut >= self.t_rf_ut - self.t_gi
            && self.ut_subframe(n) + 1 != self.m_cb()
    }
}

/// A scheduled pilot block.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotFrame {
    pub params: FrameParams,
    pub codebooks: Codebooks,
    /// Baseband symbols `s_p`, `N_RF × 1`, zero inside CU guard windows.
    pub symbols: Vec<CVec>,
    /// Precoder in effect at each pilot sample, including the random
    /// "uncertain" matrices drawn for guard samples.
    pub sample_precoders: Vec<CMat>,
    /// Combiner in effect at each received sample `0 ≤ n < Q`.
    pub sample_combiners: Vec<CVec>,
}

/// Assigns codebook entries and BPSK symbols to every sample.
pub fn schedule_pilots(params: FrameParams, rng: &mut impl Rng) -> Result<PilotFrame> {
    params.validate()?;
    let codebooks = build_codebooks(params.n_tx, params.n_rf, params.n_cb(), params.m_ut, params.m_cb(), rng)?;
    let amp = (params.p_dl / params.n_rf as f64).sqrt();
    let mut symbols = Vec::with_capacity(params.pilot_len);
    let mut sample_precoders = Vec::with_capacity(params.pilot_len);
    for p in 0..params.pilot_len {
        if params.in_cu_gi(p) {
            symbols.push(CVec::zeros(params.n_rf));
            sample_precoders.push(random_precoder(rng, params.n_tx, params.n_rf));
        } else {
            symbols.push(CVec::from_shape_simple_fn(params.n_rf, || {
                C64::new(if rng.random::<bool>() { amp } else { -amp }, 0.0)
            }));
            sample_precoders.push(codebooks.precoders[params.cu_subframe(p)].clone());
        }
    }
    let sample_combiners = (0..params.observed_len())
        .map(|n| {
            if params.in_ut_gi(n) {
                random_combiner(rng, params.m_ut)
            } else {
                codebooks.combiners[params.ut_subframe(n)].clone()
            }
        })
        .collect();
    Ok(PilotFrame { params, codebooks, symbols, sample_precoders, sample_combiners })
}

impl PilotFrame {
    /// `p_p = F_p s_p` for `0 ≤ p < P`, zero outside.
    pub fn transmit_pilot(&self, p: isize) -> CVec {
        if p < 0 || p as usize >= self.params.pilot_len {
            return CVec::zeros(self.params.n_tx);
        }
        let p = p as usize;
        self.sample_precoders[p].dot(&self.symbols[p])
    }

    pub fn pilots(&self) -> Vec<CVec> {
        (0..self.params.pilot_len as isize).map(|p| self.transmit_pilot(p)).collect()
    }

    /// 1-based indices `q` of received samples outside UT guard windows.
    pub fn valid_indices(&self) -> Vec<usize> {
        (0..self.params.observed_len())
            .filter(|&n| !self.params.in_ut_gi(n))
            .map(|n| n + 1)
            .collect()
    }

    pub fn zero_symbol_count(&self) -> usize {
        self.symbols.iter().filter(|s| s.iter().all(|z| *z == C64::new(0.0, 0.0))).count()
    }
}

/// Effective measurement matrices of a pilot frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMatrices {
    pub taps: usize,
    pub n_tx: usize,
    pub m_ut: usize,
    /// `Φ̄`, `LN × Q`; block `l` of column `q` holds `p_{q−1−l}`.
    pub phi_radar: CMat,
    /// Ordered 1-based valid indices.
    pub valid_indices: Vec<usize>,
    /// Combiners `w_{q−1}` for each valid `q`, in the same order.
    pub valid_combiners: Vec<CVec>,
}

pub fn build_measurement_matrices(frame: &PilotFrame) -> MeasurementMatrices {
    let prm = &frame.params;
    let (l_taps, n) = (prm.taps, prm.n_tx);
    let q_len = prm.observed_len();
    let pilots = frame.pilots();
    let mut phi = CMat::zeros((l_taps * n, q_len));
    for q in 0..q_len {
        for l in 0..l_taps {
            let idx = q as isize - l as isize;
            if idx >= 0 && (idx as usize) < prm.pilot_len {
                phi.slice_mut(s![l * n..(l + 1) * n, q]).assign(&pilots[idx as usize]);
            }
        }
    }
    let valid_indices = frame.valid_indices();
    let valid_combiners = valid_indices.iter().map(|&q| frame.sample_combiners[q - 1].clone()).collect();
    MeasurementMatrices { taps: l_taps, n_tx: n, m_ut: prm.m_ut, phi_radar: phi, valid_indices, valid_combiners }
}

impl MeasurementMatrices {
    pub fn observed_len(&self) -> usize {
        self.phi_radar.ncols()
    }

    /// Row of `Φ` for 1-based sample `q`: `(b_q ⊗ w*_{q−1})ᵀ` with `b_q`
    /// column `q` of `Φ̄`.
    pub fn comm_row(&self, q: usize, w: &CVec) -> CVec {
        let b = self.phi_radar.column(q - 1);
        let m = w.len();
        CVec::from_shape_fn(b.len() * m, |k| b[k / m] * w[k % m].conj())
    }

    /// `Φ_valid`, `card(I_valid) × LMN`. Materialised on demand; the
    /// estimators use the structured form instead.
    pub fn phi_comm_valid(&self) -> CMat {
        let cols = self.taps * self.n_tx * self.m_ut;
        let mut out = CMat::zeros((self.valid_indices.len(), cols));
        for (r, (&q, w)) in self.valid_indices.iter().zip(&self.valid_combiners).enumerate() {
            out.row_mut(r).assign(&self.comm_row(q, w));
        }
        out
    }

    /// `unvec(Φ_validᴴ y)` as an `M × LN` matrix, computed as
    /// `Σ_q y_q w_{q−1} b_qᴴ`.
    pub fn comm_backprojection(&self, y_valid: &CVec) -> CMat {
        let ln = self.phi_radar.nrows();
        let mut out = CMat::zeros((self.m_ut, ln));
        for ((&q, w), &y) in self.valid_indices.iter().zip(&self.valid_combiners).zip(y_valid.iter()) {
            let b = self.phi_radar.column(q - 1);
            for (i, &wi) in w.iter().enumerate() {
                let c = y * wi;
                let mut row = out.row_mut(i);
                row.zip_mut_with(&b, |o, &bv| *o += c * bv.conj());
            }
        }
        out
    }
}
