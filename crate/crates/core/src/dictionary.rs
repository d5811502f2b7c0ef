//! Angular grids, steering dictionaries and the aliasing analysis of widely
//! spaced arrays.

use std::f64::consts::PI;

use crate::array_channel::{steering_vector, ArrayGeometry, CirTensor};
use crate::error::{invalid, IsacError, Result};
use crate::linalg::{cholesky_solve, herm, kron, CMat, C64};

/// `Ξ_N(x) = sin(Nx/2) / (N sin(x/2))`, with the limit `(−1)^{k(N−1)}` at
/// `x = 2kπ`.
pub fn dirichlet(x: f64, n: usize) -> f64 {
    let n_f = n as f64;
    let half = x / 2.0;
    let den = n_f * half.sin();
    if den.abs() < 1e-12 {
        let k = (x / (2.0 * PI)).round() as i64;
        return if (k * (n as i64 - 1)).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    }
    (n_f * half).sin() / den
}

/// `|a(μ)ᴴ a(α)|` for every `α`, evaluated through the Dirichlet kernel.
pub fn correlation_profile(mu_true: f64, alpha_grid: &[f64], count: usize, spacing: f64) -> Vec<f64> {
    alpha_grid
        .iter()
        .map(|&alpha| dirichlet(2.0 * PI * spacing * (alpha - mu_true), count).abs())
        .collect()
}

/// All aliases `μ + k/spacing` lying in `(−1, 1)`.
pub fn ambiguity_set(mu_true: f64, spacing: f64) -> Vec<f64> {
    let period = 1.0 / spacing;
    let k_min = ((-1.0 - mu_true) / period).floor() as i64;
    let k_max = ((1.0 - mu_true) / period).ceil() as i64;
    (k_min..=k_max)
        .map(|k| mu_true + k as f64 * period)
        .filter(|&m| m > -1.0 && m < 1.0)
        .collect()
}

/// Grid `−1 + g/(spacing·size)` for `g = 0..size`.
pub fn angular_grid(size: usize, spacing: f64) -> Vec<f64> {
    (0..size).map(|g| -1.0 + g as f64 / (spacing * size as f64)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    pub geometry: ArrayGeometry,
    pub g_x: usize,
    pub g_y: usize,
    pub grid_azi: Vec<f64>,
    pub grid_ele: Vec<f64>,
    /// `n × (g_x·g_y)`, column `i_x·g_y + i_y` is `a(μ_{i_x}) ⊗ a(ν_{i_y})`.
    pub matrix: CMat,
}

pub fn build_dictionary(geometry: &ArrayGeometry, g_x: usize, g_y: usize) -> Result<Dictionary> {
    if g_x < geometry.n_x || g_y < geometry.n_y {
        return Err(invalid(format!(
            "grid {g_x}x{g_y} is coarser than the {}x{} array",
            geometry.n_x, geometry.n_y
        )));
    }
    let grid_azi = angular_grid(g_x, geometry.spacing);
    let grid_ele = angular_grid(g_y, geometry.spacing);
    let ax = axis_matrix(&grid_azi, geometry.n_x, geometry.spacing);
    let ay = axis_matrix(&grid_ele, geometry.n_y, geometry.spacing);
    let matrix = kron(ax.view(), ay.view());
    Ok(Dictionary { geometry: *geometry, g_x, g_y, grid_azi, grid_ele, matrix })
}

fn axis_matrix(grid: &[f64], count: usize, spacing: f64) -> CMat {
    let mut m = CMat::zeros((count, grid.len()));
    for (g, &mu) in grid.iter().enumerate() {
        m.column_mut(g).assign(&steering_vector(mu, count, spacing));
    }
    m
}

impl Dictionary {
    pub fn len(&self) -> usize {
        self.g_x * self.g_y
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn antennas(&self) -> usize {
        self.geometry.len()
    }

    /// Redundancy ratio `g_x / n_x`.
    pub fn redundancy(&self) -> f64 {
        self.g_x as f64 / self.geometry.n_x as f64
    }

    /// Virtual angles of the 0-based column `z`.
    pub fn angles(&self, z: usize) -> (f64, f64) {
        (self.grid_azi[z / self.g_y], self.grid_ele[z % self.g_y])
    }

    /// Azimuth grid step in virtual-angle units.
    pub fn step_x(&self) -> f64 {
        1.0 / (self.geometry.spacing * self.g_x as f64)
    }

    pub fn is_square(&self) -> bool {
        self.g_x == self.geometry.n_x && self.g_y == self.geometry.n_y
    }

    /// Left inverse used by [`angular_transform`]: `Aᴴ` for square
    /// (unitary) dictionaries, `Aᴴ(AAᴴ + εI)⁻¹` otherwise.
    pub fn pseudo_inverse(&self, ridge: f64) -> Result<CMat> {
        let ah = herm(self.matrix.view());
        if self.is_square() {
            return Ok(ah);
        }
        let n = self.antennas();
        let mut gram = self.matrix.dot(&ah);
        for i in 0..n {
            gram[[i, i]] += C64::new(ridge, 0.0);
        }
        let inv = cholesky_solve(gram.view(), CMat::eye(n).view())
            .ok_or_else(|| IsacError::Numerical { seed: 0, message: "dictionary Gram matrix is not positive definite".into() })?;
        Ok(ah.dot(&inv))
    }
}

pub const ANGULAR_RIDGE: f64 = 1e-9;

/// Angular-delay representation `H^A_l` with `H_l ≈ A_rx H^A_l A_txᴴ`.
pub fn angular_transform(cir: &CirTensor, dict_rx: &Dictionary, dict_tx: &Dictionary) -> Result<Vec<CMat>> {
    if cir.rx() != dict_rx.antennas() || cir.tx() != dict_tx.antennas() {
        return Err(IsacError::DimensionMismatch(format!(
            "CIR is {}x{}, dictionaries cover {}x{} antennas",
            cir.rx(),
            cir.tx(),
            dict_rx.antennas(),
            dict_tx.antennas()
        )));
    }
    let left = dict_rx.pseudo_inverse(ANGULAR_RIDGE)?;
    let right = herm(dict_tx.pseudo_inverse(ANGULAR_RIDGE)?.view());
    Ok(cir.taps.iter().map(|h| left.dot(h).dot(&right)).collect())
}

/// Inverse map `H_l = A_rx H^A_l A_txᴴ`.
pub fn angular_synthesis(h_a: &[CMat], dict_rx: &Dictionary, dict_tx: &Dictionary, sampling_period: f64) -> CirTensor {
    let a_tx_h = herm(dict_tx.matrix.view());
    CirTensor {
        taps: h_a.iter().map(|t| dict_rx.matrix.dot(t).dot(&a_tx_h)).collect(),
        sampling_period,
    }
}
