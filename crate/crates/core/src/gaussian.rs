//! The pinned Gaussian free field with (C⁻¹φ, φ) = ‖∇φ‖²: spectrum, exact
//! sampling at any variance scale, and the discrete Poincaré constant.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{GilError, Result};
use crate::lattice::{Field, Torus};

/// Largest pinned system handled by the dense eigensolver.
pub const MAX_DENSE_VOLUME: usize = 4096;

/// Eigenvalues Σ_i 4 sin²(π k_i / M) of ∇ᵀ∇ over all modes k in site order.
/// Mode 0 is the zero mode.
pub fn spectrum(t: &Torus) -> Vec<f64> {
    let m = t.m() as f64;
    (0..t.volume()).map(|k| t.coords(k).iter().map(|&ki| 4.0 * (std::f64::consts::PI * ki as f64 / m).sin().powi(2)).sum()).collect()
}

/// ∇ᵀ∇ restricted to the non-origin coordinates.
pub fn pinned_form(t: &Torus) -> DMatrix<f64> {
    let n = t.volume();
    let mut full = DMatrix::<f64>::zeros(n, n);
    for i in 0..t.d() {
        for x in 0..n {
            let y = t.forward(x, i);
            full[(x, x)] += 1.0;
            full[(y, y)] += 1.0;
            full[(x, y)] -= 1.0;
            full[(y, x)] -= 1.0;
        }
    }
    full.view((1, 1), (n - 1, n - 1)).into_owned()
}

/// Covariance of the pinned field with density ∝ exp(−‖∇φ‖²/(2·scale)),
/// in non-origin coordinates.
pub fn pinned_covariance(t: &Torus, scale: f64) -> Result<DMatrix<f64>> {
    if t.volume() > MAX_DENSE_VOLUME {
        return Err(GilError::Precondition(format!("dense covariance limited to {MAX_DENSE_VOLUME} sites")));
    }
    let inv = pinned_form(t).try_inverse().ok_or_else(|| GilError::Precondition("pinned form is singular".into()))?;
    Ok(inv * scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoincareConstant {
    pub delta_m: f64,
}

/// Smallest eigenvalue of the pinned Dirichlet form: the best δ with
/// ‖∇η‖² ≥ δ‖η‖² for η(0) = 0.
pub fn poincare_constant(t: &Torus) -> Result<PoincareConstant> {
    if t.volume() > MAX_DENSE_VOLUME {
        return Err(GilError::Precondition(format!("dense eigensolve limited to {MAX_DENSE_VOLUME} sites")));
    }
    let eig = SymmetricEigen::new(pinned_form(t));
    let delta_m = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(PoincareConstant { delta_m })
}

/// Fourier representation of the Gaussian covariance on one torus.
#[derive(Clone)]
pub struct SpectralCovariance {
    torus: Torus,
    eigenvalues: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralCovariance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralCovariance").field("d", &self.torus.d()).field("m", &self.torus.m()).finish()
    }
}

impl SpectralCovariance {
    pub fn new(t: &Torus) -> Self {
        let mut planner = FftPlanner::new();
        SpectralCovariance {
            torus: t.clone(),
            eigenvalues: spectrum(t),
            forward: planner.plan_fft_forward(t.m()),
            inverse: planner.plan_fft_inverse(t.m()),
        }
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    fn transform(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let (d, m, n) = (self.torus.d(), self.torus.m(), self.torus.volume());
        let mut line = vec![Complex64::new(0.0, 0.0); m];
        for axis in 0..d {
            let stride = m.pow((d - 1 - axis) as u32);
            for start in 0..n {
                if (start / stride) % m != 0 {
                    continue;
                }
                for (j, l) in line.iter_mut().enumerate() {
                    *l = data[start + j * stride];
                }
                fft.process(&mut line);
                for (j, l) in line.iter().enumerate() {
                    data[start + j * stride] = *l;
                }
            }
        }
        let norm = 1.0 / (n as f64).sqrt();
        data.iter_mut().for_each(|z| *z *= norm);
    }

    /// Unitary discrete Fourier coefficients of a site array.
    pub fn to_modes(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, &self.forward);
        data
    }

    /// Σ_k μ_k |φ̂_k|², equal to ‖∇φ‖².
    pub fn mode_energy(&self, values: &[f64]) -> f64 {
        self.to_modes(values).iter().zip(&self.eigenvalues).map(|(z, mu)| mu * z.norm_sqr()).sum()
    }

    /// Variance of ∇_iθ(x) under the field at the given scale (independent of x).
    pub fn gradient_variance(&self, axis: usize, variance_scale: f64) -> f64 {
        let m = self.torus.m() as f64;
        let n = self.torus.volume() as f64;
        let s: f64 = (1..self.torus.volume())
            .map(|k| {
                let ki = self.torus.coords(k)[axis] as f64;
                4.0 * (std::f64::consts::PI * ki / m).sin().powi(2) / self.eigenvalues[k]
            })
            .sum();
        variance_scale * s / n
    }

    /// Draws the pinned field with density ∝ exp(−‖∇φ‖²/(2·variance_scale)).
    pub fn sample<R: Rng + ?Sized>(&self, variance_scale: f64, rng: &mut R) -> Field {
        let mut data = vec![Complex64::new(0.0, 0.0); self.torus.volume()];
        for (k, z) in data.iter_mut().enumerate().skip(1) {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *z = Complex64::new(re, im) * (variance_scale / self.eigenvalues[k]).sqrt();
        }
        self.transform(&mut data, &self.inverse);
        let origin = data[0].re;
        Field::pinned(data.iter().map(|z| z.re - origin).collect())
    }
}

/// [`SpectralCovariance::sample`] with the scale validated.
pub fn sample_gff<R: Rng + ?Sized>(sc: &SpectralCovariance, variance_scale: f64, rng: &mut R) -> Result<Field> {
    if !(variance_scale > 0.0 && variance_scale <= 1.0) {
        return Err(GilError::Precondition(format!("variance scale must lie in (0, 1], got {variance_scale}")));
    }
    Ok(sc.sample(variance_scale, rng))
}
