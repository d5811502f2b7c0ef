//! Data-phase beam steering, user scheduling, impulse-pilot Doppler series
//! and single-tone frequency estimation.

use std::f64::consts::PI;

use rand::Rng;

use crate::array_channel::{sample_cir, upa_steering_virtual, ArrayGeometry, ChannelRealization, CirSampling};
use crate::error::{invalid, IsacError, Result};
use crate::linalg::{dot_h, CVec, C64, ZERO};
use crate::link_sim::complex_noise;
use crate::recovery::LosEstimate;

/// Beam-steering vectors for the data phase.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPhaseBeams {
    /// `w_{D,u}`, one per UT.
    pub ut_beams: Vec<CVec>,
    /// Columns `f_{D,u}` of `F_D`.
    pub cu_beams: Vec<CVec>,
}

pub fn data_phase_beams(estimates: &[LosEstimate], ut: &ArrayGeometry, cu: &ArrayGeometry) -> DataPhaseBeams {
    DataPhaseBeams {
        ut_beams: estimates.iter().map(|e| upa_steering_virtual(e.mu_ut, e.nu_ut, ut)).collect(),
        cu_beams: estimates.iter().map(|e| upa_steering_virtual(e.mu_cu, e.nu_cu, cu)).collect(),
    }
}

/// Greedy selection in input order: a UT is accepted when, against every UT
/// already accepted, its CU virtual-angle distance is at least `2/n_x` or
/// its delay distance is at least `2τ_p`. At most `n_rf` UTs are returned.
pub fn schedule_uts(estimates: &[LosEstimate], n_rf: usize, n_x: usize, tau_p: f64) -> Vec<usize> {
    let angle_gap = 2.0 / n_x as f64;
    let delay_gap = 2.0 * tau_p;
    let mut chosen: Vec<usize> = Vec::new();
    for (i, e) in estimates.iter().enumerate() {
        if chosen.len() >= n_rf {
            break;
        }
        let separated = chosen.iter().all(|&j| {
            let o = &estimates[j];
            (e.mu_cu - o.mu_cu).abs() >= angle_gap - 1e-12 || (e.tau - o.tau).abs() >= delay_gap - 1e-18
        });
        if separated {
            chosen.push(i);
        }
    }
    chosen
}

/// Uniformly sampled single-tone observation.
#[derive(Debug, Clone, PartialEq)]
pub struct DopplerSeries {
    pub samples: CVec,
    /// `T_D` in seconds.
    pub interval: f64,
    pub noise_power: f64,
}

/// One transmitter of impulse pilots. The observation array sees
/// `H(t) x` (or `H(t)ᵀ x` for `transpose`) scaled by `√power`.
#[derive(Debug, Clone)]
pub struct ImpulseSource<'a> {
    pub channel: &'a ChannelRealization,
    /// Use the transposed channel (uplink over a downlink realisation).
    pub transpose: bool,
    pub tx_beam: CVec,
    pub power: f64,
}

/// Receive-side tap and combining beam for one series; the sample is
/// `vᴴ r_l`.
#[derive(Debug, Clone)]
pub struct ImpulseReceiver {
    pub beam: CVec,
    /// 0-based tap at which the series is read.
    pub tap: usize,
}

/// Impulse interval `T_D = (2L + N_D)·T_s`.
pub fn impulse_interval(taps: usize, n_data: usize, sampling_period: f64) -> f64 {
    (2 * taps + n_data) as f64 * sampling_period
}

/// Simulates `P_D` impulse pilots at `t_n = (n−1)·T_D`. All sources
/// transmit simultaneously; the noise vector at the observation array is
/// shared by every receiver beam.
pub fn simulate_impulse_pilots(
    sources: &[ImpulseSource<'_>],
    receivers: &[ImpulseReceiver],
    sampling: &CirSampling,
    n_pilots: usize,
    interval: f64,
    noise_power: f64,
    rng: &mut impl Rng,
) -> Result<Vec<DopplerSeries>> {
    if n_pilots < 2 {
        return Err(invalid("at least two impulse pilots are needed"));
    }
    if receivers.iter().any(|r| r.tap >= sampling.taps) {
        return Err(invalid("receiver tap outside the CIR window"));
    }
    let obs_len = receivers.first().map_or(0, |r| r.beam.len());
    let mut out = vec![CVec::zeros(n_pilots); receivers.len()];
    for n in 0..n_pilots {
        let t = n as f64 * interval;
        let mut per_tap: Vec<Option<CVec>> = vec![None; sampling.taps];
        for r in receivers {
            if per_tap[r.tap].is_none() {
                per_tap[r.tap] = Some(CVec::zeros(obs_len));
            }
        }
        for src in sources {
            let cir = sample_cir(src.channel, t, sampling);
            let amp = src.power.sqrt();
            for (l, slot) in per_tap.iter_mut().enumerate() {
                let Some(acc) = slot else { continue };
                let h = &cir.taps[l];
                let rx = if src.transpose { h.t().dot(&src.tx_beam) } else { h.dot(&src.tx_beam) };
                if rx.len() != obs_len {
                    return Err(IsacError::DimensionMismatch("receiver beam does not match the observation array".into()));
                }
                acc.zip_mut_with(&rx, |a, &v| *a += amp * v);
            }
        }
        if noise_power > 0.0 {
            for slot in per_tap.iter_mut().flatten() {
                let noise = complex_noise(rng, (obs_len, 1), noise_power);
                slot.zip_mut_with(&noise.column(0), |a, &v| *a += v);
            }
        }
        for (k, r) in receivers.iter().enumerate() {
            let r_l = per_tap[r.tap].as_ref().expect("tap prepared");
            out[k][n] = dot_h(r.beam.view(), r_l.view());
        }
    }
    Ok(out.into_iter().map(|samples| DopplerSeries { samples, interval, noise_power }).collect())
}

/// Smoothing weights of the weighted normalised autocorrelation linear
/// predictor for `P` samples and `K = ⌊P/2⌋` lags.
pub fn wnalp_weights(p: usize) -> Vec<f64> {
    let k = p / 2;
    let (pf, kf) = (p as f64, k as f64);
    let den = kf * (4.0 * kf * kf - 6.0 * kf * pf + 3.0 * pf * pf - 1.0);
    (1..=k)
        .map(|m| {
            let mf = m as f64;
            3.0 * ((pf - mf) * (pf - mf + 1.0) - kf * (pf - kf)) / den
        })
        .collect()
}

fn autocorrelation(y: &CVec, m: usize) -> C64 {
    let p = y.len();
    if m == 0 {
        return C64::new(1.0, 0.0);
    }
    let mut acc = ZERO;
    for n in 0..p - m {
        acc += y[n + m] * y[n].conj();
    }
    acc / (p - m) as f64
}

/// Frequency estimate `f̂ = (1/(2πT_D)) Σ_m w_m arg(R(m) R*(m−1))`.
pub fn estimate_doppler(series: &DopplerSeries) -> Result<f64> {
    let p = series.samples.len();
    if p < 2 {
        return Err(invalid("frequency estimation needs at least two samples"));
    }
    if !(series.interval > 0.0) {
        return Err(invalid("sample interval must be positive"));
    }
    let weights = wnalp_weights(p);
    let mut prev = autocorrelation(&series.samples, 0);
    let mut phase = 0.0;
    for (i, w) in weights.iter().enumerate() {
        let r = autocorrelation(&series.samples, i + 1);
        phase += w * (r * prev.conj()).arg();
        prev = r;
    }
    Ok(phase / (2.0 * PI * series.interval))
}

/// Energy gate `‖y‖ ≥ 10·√P_D·σ_n`.
pub fn passes_energy_gate(series: &DopplerSeries) -> bool {
    let energy: f64 = series.samples.iter().map(|z| z.norm_sqr()).sum();
    energy.sqrt() >= 10.0 * (series.samples.len() as f64).sqrt() * series.noise_power.sqrt()
}

/// [`estimate_doppler`] behind the energy gate; a weak series indicates
/// unreliable angle/delay estimates and yields [`IsacError::Unreliable`].
pub fn estimate_doppler_gated(series: &DopplerSeries) -> Result<f64> {
    if !passes_energy_gate(series) {
        return Err(IsacError::Unreliable("Doppler series energy below 10·sqrt(P_D)·σ_n".into()));
    }
    estimate_doppler(series)
}

/// Single-tone frequency CRB in normalised units, `6/(snr·P(P²−1))`.
pub fn crb_reference(snr: f64, p_d: usize) -> Result<f64> {
    if !(snr > 0.0) || p_d < 2 {
        return Err(invalid("CRB needs positive SNR and at least two samples"));
    }
    let p = p_d as f64;
    Ok(6.0 / (snr * p * (p * p - 1.0)))
}

/// Multiplies sample `n` by `exp(−j2π f̂ n T_s)`.
pub fn compensate_doppler(signal: &[C64], f_hat: f64, sampling_period: f64) -> Vec<C64> {
    signal
        .iter()
        .enumerate()
        .map(|(n, &x)| x * C64::from_polar(1.0, -2.0 * PI * f_hat * n as f64 * sampling_period))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_channel::{Direction, LinkKind, PathComponent, RaisedCosine};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tone(f: f64, td: f64, p: usize, amp: C64) -> DopplerSeries {
        DopplerSeries {
            samples: CVec::from_shape_fn(p, |n| amp * C64::from_polar(1.0, 2.0 * PI * f * td * n as f64)),
            interval: td,
            noise_power: 0.0,
        }
    }

    fn est(mu: f64, tau: f64) -> LosEstimate {
        LosEstimate { mu_ut: 0.0, nu_ut: -1.0, mu_cu: mu, nu_cu: -1.0, tau, tap: 0, ut_column: 0, cu_column: 0, peak: 1.0 }
    }

    #[test]
    fn weights_sum_to_one() {
        for p in 2..40 {
            let s: f64 = wnalp_weights(p).iter().sum();
            assert_relative_eq!(s, 1.0, epsilon = 1e-12);
        }
        assert_eq!(wnalp_weights(2), vec![1.0]);
    }

    #[test]
    fn noiseless_tones() {
        let td = 1088.0 * 5e-9;
        for &f in &[0.0, 1234.5, -7100.0, 0.99 / (2.0 * td)] {
            for p in [2, 3, 4, 8, 17] {
                let e = estimate_doppler(&tone(f, td, p, C64::new(0.3, -2.0))).unwrap();
                assert!((e - f).abs() <= 1e-9 * f.abs().max(1.0), "f={f} p={p} est={e}");
            }
        }
        // beyond the Nyquist limit the estimate aliases
        let f = 1.2 / (2.0 * td);
        let e = estimate_doppler(&tone(f, td, 4, C64::new(1.0, 0.0))).unwrap();
        assert!((e - (f - 1.0 / td)).abs() < 1e-6 * f);
    }

    #[test]
    fn two_sample_phase_estimator() {
        let s = DopplerSeries { samples: CVec::from_vec(vec![C64::new(1.0, 0.5), C64::new(-0.2, 0.9)]), interval: 1e-5, noise_power: 0.0 };
        let direct = (s.samples[1] * s.samples[0].conj()).arg() / (2.0 * PI * 1e-5);
        assert_relative_eq!(estimate_doppler(&s).unwrap(), direct, epsilon = 1e-9);
        let short = DopplerSeries { samples: CVec::zeros(1), interval: 1.0, noise_power: 0.0 };
        assert!(estimate_doppler(&short).is_err());
    }

    #[test]
    fn crb_examples() {
        assert_relative_eq!(crb_reference(1.0, 2).unwrap(), 1.0);
        assert_relative_eq!(crb_reference(2.0, 7).unwrap(), crb_reference(1.0, 7).unwrap() / 2.0);
        assert!(crb_reference(0.0, 3).is_err());
    }

    #[test]
    fn estimator_tracks_crb() {
        let td = 1088.0 * 5e-9;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (p, snr_db) in [(2usize, 10.0f64), (4, 10.0), (8, 15.0)] {
            let snr = 10f64.powf(snr_db / 10.0);
            let trials = 4000;
            let mut mse = 0.0;
            for _ in 0..trials {
                let f = rng.random_range(-7100.0..7100.0);
                let mut s = tone(f, td, p, C64::new(1.0, 0.0));
                let noise = complex_noise(&mut rng, (p, 1), 1.0 / snr);
                s.samples.zip_mut_with(&noise.column(0), |a, &b| *a += b);
                let e = estimate_doppler(&s).unwrap();
                mse += (2.0 * PI * td * (e - f)).powi(2);
            }
            mse /= trials as f64;
            let crb = crb_reference(snr, p).unwrap();
            assert!(mse / crb < 3.0 && mse / crb > 1.0 / 3.0, "P={p} ratio {}", mse / crb);
        }
    }

    #[test]
    fn gate() {
        let mut s = tone(100.0, 1e-5, 4, C64::new(1.0, 0.0));
        s.noise_power = 0.01 / 4.0;
        assert!(estimate_doppler_gated(&s).is_ok());
        s.noise_power = 0.011;
        assert!(matches!(estimate_doppler_gated(&s), Err(IsacError::Unreliable(_))));
    }

    #[test]
    fn compensation() {
        let x: Vec<C64> = (0..50).map(|n| C64::new(n as f64, 1.0)).collect();
        assert_eq!(compensate_doppler(&x, 0.0, 5e-9), x);
        let y = compensate_doppler(&compensate_doppler(&x, 3e5, 5e-9), -3e5, 5e-9);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).norm() < 1e-12);
        }
        let f = 7100.0;
        let los: Vec<C64> = (0..50).map(|n| C64::from_polar(0.1, 2.0 * PI * f * n as f64 * 5e-9 + 0.3)).collect();
        let c = compensate_doppler(&los, f, 5e-9);
        assert!(c.iter().all(|z| (z - c[0]).norm() < 1e-14));
    }

    #[test]
    fn scheduling() {
        let same = vec![est(0.1, 1e-8); 5];
        assert_eq!(schedule_uts(&same, 4, 16, 30e-9), vec![0]);
        let spread: Vec<LosEstimate> = (0..4).map(|i| est(-0.9 + 0.3 * i as f64, 1e-8)).collect();
        assert_eq!(schedule_uts(&spread, 4, 16, 30e-9), vec![0, 1, 2, 3]);
        assert_eq!(schedule_uts(&spread, 2, 16, 30e-9), vec![0, 1]);
        // exactly 2/N_x apart or exactly 2τ_p apart: accepted
        let edge = vec![est(0.0, 0.0), est(0.125, 0.0), est(0.0, 60e-9)];
        assert_eq!(schedule_uts(&edge, 4, 16, 30e-9), vec![0, 1, 2]);
    }

    fn los_channel(mu_cu: f64, mu_ut: f64, delay: f64, doppler: f64, gain: C64, ut: ArrayGeometry, cu: ArrayGeometry) -> ChannelRealization {
        ChannelRealization {
            link_kind: LinkKind::CommDownlink,
            rx_geometry: ut,
            tx_geometry: cu,
            los: Some(PathComponent {
                gain,
                rx: Direction::from_virtual_azimuth(mu_ut),
                tx: Direction::from_virtual_azimuth(mu_cu),
                delay,
                doppler,
            }),
            clusters: vec![],
            rician_factor_db: 20.0,
        }
    }

    fn sampling() -> CirSampling {
        let ts = 5e-9;
        CirSampling { taps: 32, sampling_period: ts, pulse: RaisedCosine::new(0.8, ts, 6.0 * ts).unwrap() }
    }

    #[test]
    fn single_ut_series_is_a_tone() {
        let ut = ArrayGeometry::ut(8, 1).unwrap();
        let cu = ArrayGeometry::csa(16, 1).unwrap();
        let ts = 5e-9;
        let ch = los_channel(0.25, -0.5, 10.0 * ts, 3000.0, C64::new(2e-5, 1e-5), ut, cu);
        let w = upa_steering_virtual(-0.5, 0.0, &ut);
        let f = upa_steering_virtual(0.25, 0.0, &cu);
        let src = [ImpulseSource { channel: &ch, transpose: true, tx_beam: w.mapv(|z| z.conj()), power: 0.1 }];
        let rcv = [ImpulseReceiver { beam: f.mapv(|z| z.conj()), tap: 16 }];
        let td = impulse_interval(32, 1024, ts);
        let s = simulate_impulse_pilots(&src, &rcv, &sampling(), 6, td, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let y = &s[0].samples;
        let a = y[0];
        // A_u = √P·G_UT·[g]_u·p(0)·g(0); beams aligned so |A_u| = √P·|g|
        assert_relative_eq!(a.norm(), 0.1f64.sqrt() * C64::new(2e-5, 1e-5).norm(), max_relative = 1e-9);
        for n in 0..6 {
            let expect = a * C64::from_polar(1.0, 2.0 * PI * 3000.0 * td * n as f64);
            assert!((y[n] - expect).norm() < 1e-12 * a.norm());
        }
        assert_relative_eq!(estimate_doppler(&s[0]).unwrap(), 3000.0, max_relative = 1e-9);
        // zero Doppler gives a constant series
        let ch0 = los_channel(0.25, -0.5, 10.0 * ts, 0.0, C64::new(2e-5, 1e-5), ut, cu);
        let src0 = [ImpulseSource { channel: &ch0, ..src[0].clone() }];
        let s0 = simulate_impulse_pilots(&src0, &rcv, &sampling(), 4, td, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(s0[0].samples.iter().all(|z| (z - s0[0].samples[0]).norm() < 1e-20));
    }

    #[test]
    fn delay_separated_uts_have_little_iui() {
        let ut = ArrayGeometry::ut(8, 1).unwrap();
        let cu = ArrayGeometry::csa(16, 1).unwrap();
        let ts = 5e-9;
        // same angle, delays 14 samples apart (beyond the 2τ_p pulse support)
        let a = los_channel(0.25, -0.5, 2.0 * ts, 1000.0, C64::new(1e-5, 0.0), ut, cu);
        let b = los_channel(0.25, 0.3, 16.0 * ts, -2000.0, C64::new(0.0, 1e-5), ut, cu);
        let f = upa_steering_virtual(0.25, 0.0, &cu).mapv(|z| z.conj());
        let wa = upa_steering_virtual(-0.5, 0.0, &ut).mapv(|z| z.conj());
        let wb = upa_steering_virtual(0.3, 0.0, &ut).mapv(|z| z.conj());
        let rcv = [ImpulseReceiver { beam: f.clone(), tap: 8 }];
        let td = impulse_interval(32, 1024, ts);
        let run = |srcs: &[ImpulseSource<'_>]| simulate_impulse_pilots(srcs, &rcv, &sampling(), 4, td, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let alone = run(&[ImpulseSource { channel: &a, transpose: true, tx_beam: wa.clone(), power: 1.0 }]);
        let both = run(&[
            ImpulseSource { channel: &a, transpose: true, tx_beam: wa.clone(), power: 1.0 },
            ImpulseSource { channel: &b, transpose: true, tx_beam: wb, power: 1.0 },
        ]);
        let sig: f64 = alone[0].samples.iter().map(|z| z.norm_sqr()).sum();
        let iui: f64 = alone[0].samples.iter().zip(both[0].samples.iter()).map(|(x, y)| (x - y).norm_sqr()).sum();
        assert!(10.0 * (iui / sig).log10() < -20.0);
    }

    #[test]
    fn angularly_separated_beams_are_nearly_orthogonal() {
        // beams steered at CU grid angles (the estimator's output) at least 2/N_x apart
        let cu = ArrayGeometry::csa(16, 1).unwrap();
        let grid: Vec<f64> = (0..16).map(|i| -1.0 + 2.0 * i as f64 / 16.0).collect();
        for &mu1 in &grid {
            for &mu2 in &grid {
                if (mu1 - mu2).abs() < 2.0 / 16.0 - 1e-12 {
                    continue;
                }
                let g = dot_h(upa_steering_virtual(mu2, 0.0, &cu).view(), upa_steering_virtual(mu1, 0.0, &cu).view()).norm();
                assert!(g < 0.2, "cross gain {g}");
            }
        }
        // off-grid separations are bounded by the first sidelobe of the kernel
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let mu1: f64 = rng.random_range(-0.95..0.95);
            let mu2: f64 = rng.random_range(-0.95..0.95);
            if (mu1 - mu2).abs() <= 2.0 / 16.0 {
                continue;
            }
            let g = dot_h(upa_steering_virtual(mu2, 0.0, &cu).view(), upa_steering_virtual(mu1, 0.0, &cu).view()).norm();
            assert!(g < 0.23, "cross gain {g}");
        }
    }

    proptest! {
        #[test]
        fn scale_invariance(f in -7000.0f64..7000.0, re in -3.0f64..3.0, im in 0.1f64..3.0, seed in 0u64..1000) {
            let td = 1088.0 * 5e-9;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = tone(f, td, 5, C64::new(1.0, 0.0));
            let noise = complex_noise(&mut rng, (5, 1), 0.1);
            s.samples.zip_mut_with(&noise.column(0), |a, &b| *a += b);
            let c = C64::new(re, im);
            let scaled = DopplerSeries { samples: s.samples.mapv(|z| z * c), ..s.clone() };
            let a = estimate_doppler(&s).unwrap();
            let b = estimate_doppler(&scaled).unwrap();
            prop_assert!((a - b).abs() < 1e-6 * (1.0 + a.abs()));
        }
    }
}
