//! Greedy sparse recovery of the radar and communication channels.
//!
//! The radar sensing matrix `Ψ = [Φ̄ᵀ(I_L ⊗ A_CU*)] ⊗ Ā` is never formed.
//! With `B = Φ̄ᵀ(I_L ⊗ A_CU*)` and the residual reshaped to `R` (`N̄ × Q`),
//! the correlation `Ψᴴ r` is `vec(Āᴴ R B*)`, an `Ḡ × (L·G_CU)` matrix whose
//! column-major linear index is the atom index `z`.

use ndarray::s;

use crate::array_channel::{upa_steering_virtual, CirTensor, RaisedCosine};
use crate::dictionary::Dictionary;
use crate::error::{IsacError, Result};
use crate::linalg::{herm, kron_vec, norm_sq, unvec_col_major, vec_col_major, CMat, CVec, IncrementalQr};
use crate::link_sim::{CommObservation, RadarObservation};
use crate::waveform::MeasurementMatrices;

/// `(I, J)` with `J = ⌈z/X⌉`, `I = z − (J − 1)X`; all indices 1-based.
pub fn ind2sub(shape: [usize; 2], z: usize) -> Result<(usize, usize)> {
    let [x, y] = shape;
    if z == 0 || z > x * y {
        return Err(IsacError::IndexOutOfRange { index: z, max: x * y });
    }
    let j = z.div_ceil(x);
    Ok((z - (j - 1) * x, j))
}

/// Timing shared by the estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayModel {
    pub sampling_period: f64,
    pub pulse: RaisedCosine,
}

impl DelayModel {
    /// Delay offset of 0-based tap `l`: `l·T_s − τ_p`.
    pub fn delay_of_tap(&self, l: usize) -> f64 {
        l as f64 * self.sampling_period - self.pulse.half_width
    }

    /// 0-based tap whose pulse peak matches `delay`.
    pub fn tap_of_delay(&self, delay: f64) -> isize {
        ((delay + self.pulse.half_width) / self.sampling_period).round() as isize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    IterationBudget,
    /// The residual vanished.
    ZeroResidual,
    /// The best correlation fell on an atom already in the support.
    RepeatedAtom,
    /// The newest column was numerically dependent on the support and was
    /// discarded.
    RankDeficient,
}

/// One selected atom with its decoded parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomEstimate {
    /// 1-based linear index into the columns of `Ψ`.
    pub index: usize,
    /// 0-based delay tap (`i_d − 1`).
    pub tap: usize,
    /// 0-based WSA dictionary column.
    pub wsa_column: usize,
    /// 0-based CU dictionary column.
    pub cu_column: usize,
    pub delay: f64,
    /// Fine (ambiguous) WSA grid angles.
    pub mu_fine: f64,
    pub nu_fine: f64,
    /// Coarse CU grid angles.
    pub mu_coarse: f64,
    pub nu_coarse: f64,
    /// Reported angles: refined for OMP-SR, the fine WSA grid angles for
    /// plain OMP.
    pub mu: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub atom: usize,
    pub residual_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    pub atoms: Vec<AtomEstimate>,
    pub gains: CVec,
    pub cir_estimate: CirTensor,
    pub iterations: usize,
    pub stop: StopReason,
    pub trace: Vec<TraceRow>,
}

impl RecoveryResult {
    pub fn support(&self) -> Vec<usize> {
        self.atoms.iter().map(|a| a.index).collect()
    }

    pub fn delays(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.delay).collect()
    }

    pub fn azimuths(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.mu).collect()
    }

    pub fn elevations(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.nu).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Refined,
    Plain,
}

/// Step 12: shift the fine angle by the multiple of the alias period that
/// brings it closest to the coarse angle. Falls back to the in-range alias
/// nearest the coarse angle when the rounded shift leaves `[−1, 1)`.
pub fn resolve_ambiguity(fine: f64, coarse: f64, spacing: f64) -> f64 {
    let period = 1.0 / spacing;
    let k = ((coarse - fine) * spacing).round();
    let cand = fine + k * period;
    if (-1.0..1.0).contains(&cand) {
        return cand;
    }
    let k_lo = ((-1.0 - fine) / period).ceil() as i64;
    let k_hi = ((1.0 - fine) / period).ceil() as i64 - 1;
    (k_lo..=k_hi)
        .map(|k| fine + k as f64 * period)
        .filter(|m| (-1.0..1.0).contains(m))
        .min_by(|a, b| (a - coarse).abs().total_cmp(&(b - coarse).abs()))
        .unwrap_or(fine)
}

struct RadarProblem<'a> {
    mm: &'a MeasurementMatrices,
    dict_wsa: &'a Dictionary,
    dict_cu: &'a Dictionary,
    timing: DelayModel,
    /// `B* = (Φ̄ᵀ(I_L ⊗ A_CU*))*`, `Q × L·G_CU`.
    b_conj: CMat,
    a_wsa_h: CMat,
}

impl<'a> RadarProblem<'a> {
    fn new(obs: &RadarObservation, mm: &'a MeasurementMatrices, dict_wsa: &'a Dictionary, dict_cu: &'a Dictionary, timing: DelayModel) -> Result<Self> {
        let n = dict_cu.antennas();
        if mm.n_tx != n {
            return Err(IsacError::DimensionMismatch(format!("CU dictionary has {n} antennas, pilots have {}", mm.n_tx)));
        }
        if obs.y.nrows() != dict_wsa.antennas() || obs.y.ncols() != mm.observed_len() {
            return Err(IsacError::DimensionMismatch(format!(
                "observation is {:?}, expected {}x{}",
                obs.y.dim(),
                dict_wsa.antennas(),
                mm.observed_len()
            )));
        }
        let g_cu = dict_cu.len();
        let q_len = mm.observed_len();
        // B*_l = Φ̄_lᴴ A_CU
        let mut b_conj = CMat::zeros((q_len, mm.taps * g_cu));
        for l in 0..mm.taps {
            let block = mm.phi_radar.slice(s![l * n..(l + 1) * n, ..]);
            let prod = herm(block).dot(&dict_cu.matrix);
            b_conj.slice_mut(s![.., l * g_cu..(l + 1) * g_cu]).assign(&prod);
        }
        let a_wsa_h = herm(dict_wsa.matrix.view());
        Ok(Self { mm, dict_wsa, dict_cu, timing, b_conj, a_wsa_h })
    }

    fn atom_count(&self) -> usize {
        self.dict_wsa.len() * self.b_conj.ncols()
    }

    /// `|Ψᴴ r|` as `Ḡ × L·G_CU`.
    fn correlation(&self, residual: &CMat) -> CMat {
        self.a_wsa_h.dot(&residual.dot(&self.b_conj))
    }

    fn decode(&self, z: usize, mode: Mode) -> AtomEstimate {
        let g_wsa = self.dict_wsa.len();
        let g_cu = self.dict_cu.len();
        let (i_aoa, aux) = ind2sub([g_wsa, self.mm.taps * g_cu], z).expect("atom index in range");
        let (i_aod, i_d) = ind2sub([g_cu, self.mm.taps], aux).expect("aux index in range");
        let (mu_fine, nu_fine) = self.dict_wsa.angles(i_aoa - 1);
        let (mu_coarse, nu_coarse) = self.dict_cu.angles(i_aod - 1);
        let spacing = self.dict_wsa.geometry.spacing;
        let (mu, nu) = match mode {
            Mode::Refined => (
                resolve_ambiguity(mu_fine, mu_coarse, spacing),
                resolve_ambiguity(nu_fine, nu_coarse, spacing),
            ),
            Mode::Plain => (mu_fine, nu_fine),
        };
        AtomEstimate {
            index: z,
            tap: i_d - 1,
            wsa_column: i_aoa - 1,
            cu_column: i_aod - 1,
            delay: self.timing.delay_of_tap(i_d - 1),
            mu_fine,
            nu_fine,
            mu_coarse,
            nu_coarse,
            mu,
            nu,
        }
    }

    /// CU-side transmit vector of an atom: the refined steering vector or
    /// the grid column.
    fn cu_vector(&self, atom: &AtomEstimate, mode: Mode) -> CVec {
        match mode {
            Mode::Refined => upa_steering_virtual(atom.mu, atom.nu, &self.dict_cu.geometry),
            Mode::Plain => self.dict_cu.matrix.column(atom.cu_column).to_owned(),
        }
    }

    /// `(Φ̄_lᵀ a*) ⊗ ā`.
    fn column(&self, atom: &AtomEstimate, mode: Mode) -> CVec {
        let n = self.mm.n_tx;
        let a = self.cu_vector(atom, mode);
        let block = self.mm.phi_radar.slice(s![atom.tap * n..(atom.tap + 1) * n, ..]);
        let b: CVec = herm(block).dot(&a).mapv(|z| z.conj());
        kron_vec(b.view(), self.dict_wsa.matrix.column(atom.wsa_column))
    }

    fn reconstruct(&self, atoms: &[AtomEstimate], gains: &CVec, mode: Mode) -> CirTensor {
        let n_rx = self.dict_wsa.antennas();
        let ts = self.timing.sampling_period;
        let mut cir = CirTensor::zeros(self.mm.taps, n_rx, self.mm.n_tx, ts);
        for (atom, &g) in atoms.iter().zip(gains.iter()) {
            let a_rx = self.dict_wsa.matrix.column(atom.wsa_column);
            let a_tx = self.cu_vector(atom, mode);
            for (l, tap) in cir.taps.iter_mut().enumerate() {
                let p = self.timing.pulse.eval(l as f64 * ts - atom.delay - self.timing.pulse.half_width);
                if p == 0.0 {
                    continue;
                }
                let w = g * p;
                for i in 0..n_rx {
                    let ai = w * a_rx[i];
                    let mut row = tap.row_mut(i);
                    row.zip_mut_with(&a_tx, |h, &t| *h += ai * t.conj());
                }
            }
        }
        cir
    }
}

/// Greedy loop shared by OMP-SR and plain OMP. Returns one result per
/// requested checkpoint (iteration count), in the order given; a checkpoint
/// past an early stop reports the final state.
fn run_omp(
    obs: &RadarObservation,
    mm: &MeasurementMatrices,
    dict_wsa: &Dictionary,
    dict_cu: &Dictionary,
    timing: DelayModel,
    checkpoints: &[usize],
    mode: Mode,
) -> Result<Vec<RecoveryResult>> {
    let max_iters = checkpoints.iter().copied().max().unwrap_or(0);
    if max_iters == 0 {
        return Err(IsacError::InvalidParameter("iteration budget must be at least 1".into()));
    }
    let problem = RadarProblem::new(obs, mm, dict_wsa, dict_cu, timing)?;
    let n_rx = dict_wsa.antennas();
    let q_len = mm.observed_len();
    let r0 = vec_col_major(obs.y.view());
    let mut qr = IncrementalQr::from_vector(r0.view());
    let mut atoms: Vec<AtomEstimate> = Vec::new();
    let mut columns: Vec<CVec> = Vec::new();
    let mut consumed: Vec<(AtomEstimate, CVec)> = Vec::new();
    let mut trace = Vec::new();
    let mut snapshots: Vec<(usize, RecoveryResult)> = Vec::new();
    let mut stop = StopReason::IterationBudget;
    let total = problem.atom_count();
    let snapshot = |atoms: &[AtomEstimate], qr: &IncrementalQr, iters: usize, stop: StopReason, trace: &[TraceRow]| {
        let gains = if atoms.is_empty() { CVec::zeros(0) } else { qr.solve_vector() };
        RecoveryResult {
            atoms: atoms.to_vec(),
            cir_estimate: problem.reconstruct(atoms, &gains, mode),
            gains,
            iterations: iters,
            stop,
            trace: trace.to_vec(),
        }
    };

    let mut iters = 0;
    while iters < max_iters {
        if qr.residual_norm_sq() == 0.0 {
            stop = StopReason::ZeroResidual;
            break;
        }
        let residual = unvec_col_major(qr.residual_column(), n_rx, q_len);
        let mut corr = problem.correlation(&residual).mapv(|z| z.norm());
        // support atoms are scored against their (refined) columns
        for (atom, col) in atoms.iter().zip(&columns).chain(consumed.iter().map(|(a, c)| (a, c))) {
            let v = crate::linalg::dot_h(col.view(), qr.residual_column()).norm();
            let (r, c) = ((atom.index - 1) % corr.nrows(), (atom.index - 1) / corr.nrows());
            corr[[r, c]] = v;
        }
        let mut best = 0usize;
        let mut best_val = f64::NEG_INFINITY;
        // column-major scan so that ties go to the lowest linear index
        for c in 0..corr.ncols() {
            for r in 0..corr.nrows() {
                let v = corr[[r, c]];
                if v > best_val {
                    best_val = v;
                    best = c * corr.nrows() + r + 1;
                }
            }
        }
        debug_assert!(best >= 1 && best <= total);
        if best_val == 0.0 {
            stop = StopReason::ZeroResidual;
            break;
        }
        if atoms.iter().chain(consumed.iter().map(|c| &c.0)).any(|a| a.index == best) {
            stop = StopReason::RepeatedAtom;
            break;
        }
        let atom = problem.decode(best, mode);
        let col = problem.column(&atom, mode);
        iters += 1;
        if qr.push(col.view()).is_err() {
            // refined column already in the span: the atom is used up
            consumed.push((atom, col));
        } else {
            atoms.push(atom);
            columns.push(col);
        }
        trace.push(TraceRow { iteration: iters, atom: best, residual_norm: qr.residual_norm_sq().sqrt() });
        if checkpoints.contains(&iters) {
            let kind = if iters == max_iters { StopReason::IterationBudget } else { stop };
            snapshots.push((iters, snapshot(&atoms, &qr, iters, kind, &trace)));
        }
    }
    let last = snapshot(&atoms, &qr, iters, stop, &trace);
    Ok(checkpoints
        .iter()
        .map(|&k| {
            snapshots
                .iter()
                .find(|(i, _)| *i == k)
                .map(|(_, r)| r.clone())
                .unwrap_or_else(|| last.clone())
        })
        .collect())
}

/// Orthogonal matching pursuit with support refinement.
pub fn omp_sr(
    obs: &RadarObservation,
    mm: &MeasurementMatrices,
    dict_wsa: &Dictionary,
    dict_cu: &Dictionary,
    timing: DelayModel,
    max_iters: usize,
) -> Result<RecoveryResult> {
    Ok(run_omp(obs, mm, dict_wsa, dict_cu, timing, &[max_iters], Mode::Refined)?.remove(0))
}

/// OMP-SR results after each of several iteration counts, from one run.
pub fn omp_sr_checkpoints(
    obs: &RadarObservation,
    mm: &MeasurementMatrices,
    dict_wsa: &Dictionary,
    dict_cu: &Dictionary,
    timing: DelayModel,
    checkpoints: &[usize],
) -> Result<Vec<RecoveryResult>> {
    run_omp(obs, mm, dict_wsa, dict_cu, timing, checkpoints, Mode::Refined)
}

/// Plain OMP over the grid atoms of `Ψ`.
pub fn omp_plain(
    obs: &RadarObservation,
    mm: &MeasurementMatrices,
    dict_wsa: &Dictionary,
    dict_cu: &Dictionary,
    timing: DelayModel,
    max_iters: usize,
) -> Result<RecoveryResult> {
    Ok(run_omp(obs, mm, dict_wsa, dict_cu, timing, &[max_iters], Mode::Plain)?.remove(0))
}

/// Explicit grid column `z` (1-based) of `Ψ`, for oracles and tests.
pub fn sensing_column(mm: &MeasurementMatrices, dict_wsa: &Dictionary, dict_cu: &Dictionary, timing: DelayModel, z: usize) -> Result<CVec> {
    let dummy = RadarObservation { y: CMat::zeros((dict_wsa.antennas(), mm.observed_len())), noise_power: 0.0 };
    let problem = RadarProblem::new(&dummy, mm, dict_wsa, dict_cu, timing)?;
    if z == 0 || z > problem.atom_count() {
        return Err(IsacError::IndexOutOfRange { index: z, max: problem.atom_count() });
    }
    let atom = problem.decode(z, Mode::Plain);
    Ok(problem.column(&atom, Mode::Plain))
}

/// Refined column used by OMP-SR for atom `z`.
pub fn refined_column(mm: &MeasurementMatrices, dict_wsa: &Dictionary, dict_cu: &Dictionary, timing: DelayModel, z: usize) -> Result<(AtomEstimate, CVec)> {
    let dummy = RadarObservation { y: CMat::zeros((dict_wsa.antennas(), mm.observed_len())), noise_power: 0.0 };
    let problem = RadarProblem::new(&dummy, mm, dict_wsa, dict_cu, timing)?;
    if z == 0 || z > problem.atom_count() {
        return Err(IsacError::IndexOutOfRange { index: z, max: problem.atom_count() });
    }
    let atom = problem.decode(z, Mode::Refined);
    let col = problem.column(&atom, Mode::Refined);
    Ok((atom, col))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockRecovery {
    /// Selected 0-based taps in selection order.
    pub taps: Vec<usize>,
    pub cir_estimate: CirTensor,
    pub iterations: usize,
    pub stop: StopReason,
}

/// Block OMP over delay taps: each iteration picks the tap whose pilot
/// block correlates most with the residual, then refits all `N̄ × N`
/// coefficients of the selected taps jointly.
pub fn block_omp(obs: &RadarObservation, mm: &MeasurementMatrices, sampling_period: f64, block_iters: usize) -> Result<BlockRecovery> {
    if block_iters == 0 {
        return Err(IsacError::InvalidParameter("block iterations must be at least 1".into()));
    }
    let n = mm.n_tx;
    let l_taps = mm.taps;
    let n_rx = obs.y.nrows();
    if obs.y.ncols() != mm.observed_len() {
        return Err(IsacError::DimensionMismatch("observation length does not match the pilots".into()));
    }
    // Yᵀ ≈ Σ_l Φ̄_lᵀ X_lᵀ
    let yt = obs.y.t().to_owned();
    let mut qr = IncrementalQr::new(yt.view());
    let blocks_t: Vec<CMat> = (0..l_taps)
        .map(|l| mm.phi_radar.slice(s![l * n..(l + 1) * n, ..]).t().to_owned())
        .collect();
    let mut taps: Vec<usize> = Vec::new();
    let mut stop = StopReason::IterationBudget;
    while taps.len() < block_iters.min(l_taps) {
        if qr.residual_norm_sq() == 0.0 {
            stop = StopReason::ZeroResidual;
            break;
        }
        // ‖R Φ̄_lᴴ‖²_F = ‖Φ̄_l* Rᵀ‖²_F with Rᵀ the QR residual
        let res = qr.residual();
        let mut best = None;
        let mut best_val = f64::NEG_INFINITY;
        for (l, bt) in blocks_t.iter().enumerate() {
            if taps.contains(&l) {
                continue;
            }
            let prod = herm(bt.view()).dot(res);
            let v = crate::linalg::frob_sq(prod.view());
            if v > best_val {
                best_val = v;
                best = Some(l);
            }
        }
        let Some(l) = best else { break };
        let saved = qr.clone();
        let mut ok = true;
        for c in 0..n {
            if qr.push(blocks_t[l].column(c)).is_err() {
                ok = false;
                break;
            }
        }
        if !ok {
            qr = saved;
            stop = StopReason::RankDeficient;
            break;
        }
        taps.push(l);
    }
    let mut cir = CirTensor::zeros(l_taps, n_rx, n, sampling_period);
    if !taps.is_empty() {
        let x = qr.solve();
        for (k, &l) in taps.iter().enumerate() {
            cir.taps[l] = x.slice(s![k * n..(k + 1) * n, ..]).t().to_owned();
        }
    }
    Ok(BlockRecovery { iterations: taps.len(), taps, cir_estimate: cir, stop })
}

/// LoS parameters estimated at a UT.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LosEstimate {
    pub mu_ut: f64,
    pub nu_ut: f64,
    pub mu_cu: f64,
    pub nu_cu: f64,
    pub tau: f64,
    /// 0-based tap of the correlation peak.
    pub tap: usize,
    pub ut_column: usize,
    pub cu_column: usize,
    pub peak: f64,
}

/// Single correlation step over `((I_L ⊗ A_CUᵀ) ⊗ A_UTᴴ) Φ_validᴴ y_valid`,
/// evaluated per tap as `A_UTᴴ X_l A_CU` with `X = unvec(Φ_validᴴ y_valid)`.
pub fn ce_ut(obs: &CommObservation, mm: &MeasurementMatrices, dict_ut: &Dictionary, dict_cu: &Dictionary, timing: DelayModel) -> Result<LosEstimate> {
    if obs.y_valid.len() != mm.valid_indices.len() {
        return Err(IsacError::DimensionMismatch("observation does not match the valid index set".into()));
    }
    if dict_ut.antennas() != mm.m_ut || dict_cu.antennas() != mm.n_tx {
        return Err(IsacError::DimensionMismatch("dictionaries do not match the array sizes".into()));
    }
    let n = mm.n_tx;
    let x = mm.comm_backprojection(&obs.y_valid);
    let a_ut_h = herm(dict_ut.matrix.view());
    let mut best = (0usize, 0usize, 0usize);
    let mut best_val = f64::NEG_INFINITY;
    for l in 0..mm.taps {
        let c = a_ut_h.dot(&x.slice(s![.., l * n..(l + 1) * n])).dot(&dict_cu.matrix);
        for j in 0..c.ncols() {
            for i in 0..c.nrows() {
                let v = c[[i, j]].norm();
                if v > best_val {
                    best_val = v;
                    best = (i, j, l);
                }
            }
        }
    }
    let (i_ut, i_cu, l) = best;
    let (mu_ut, nu_ut) = dict_ut.angles(i_ut);
    let (mu_cu, nu_cu) = dict_cu.angles(i_cu);
    Ok(LosEstimate { mu_ut, nu_ut, mu_cu, nu_cu, tau: timing.delay_of_tap(l), tap: l, ut_column: i_ut, cu_column: i_cu, peak: best_val })
}

/// Relative size of `Ψ_Iᴴ r` for the refined support of a result.
pub fn residual_orthogonality(
    obs: &RadarObservation,
    mm: &MeasurementMatrices,
    dict_wsa: &Dictionary,
    dict_cu: &Dictionary,
    timing: DelayModel,
    result: &RecoveryResult,
) -> Result<f64> {
    let problem = RadarProblem::new(obs, mm, dict_wsa, dict_cu, timing)?;
    let y = vec_col_major(obs.y.view());
    let mut fitted = CVec::zeros(y.len());
    let cols: Vec<CVec> = result.atoms.iter().map(|a| problem.column(a, Mode::Refined)).collect();
    for (c, g) in cols.iter().zip(result.gains.iter()) {
        fitted.zip_mut_with(c, |f, &v| *f += g * v);
    }
    let r = &y - &fitted;
    let scale = norm_sq(y.view()).sqrt().max(f64::MIN_POSITIVE);
    Ok(cols
        .iter()
        .map(|c| crate::linalg::dot_h(c.view(), r.view()).norm() / (scale * norm_sq(c.view()).sqrt()))
        .fold(0.0, f64::max))
}
