//! Lognormal random-field machinery: Matérn covariance, spectral bases, and
//! coefficient-field evaluation.

mod file;
mod fourier;
mod matern;

pub use file::{check_domain, load_basis, write_basis, TabulatedBasis};
pub use fourier::{build_fourier_basis, ModeScaling, Parity, SpectralBasis, SpectralMode};
pub use matern::MaternKernel;

use crate::error::{Error, Result};

/// A set of spatial modes with known sup-norms over the physical domain.
pub trait FieldBasis: Sync {
    fn mode_count(&self) -> usize;
    fn eval_mode(&self, j: usize, x: [f64; 2]) -> f64;
    /// `b_j = sup over the physical domain of |ψ_j|`.
    fn sup_norm(&self, j: usize) -> f64;
    /// Physical domain bounds `[x0, x1, y0, y1]`.
    fn domain(&self) -> [f64; 4];
}

/// One realization of the Gaussian coefficients, with optional per-mode
/// multipliers.
#[derive(Debug, Clone)]
pub struct FieldSample {
    pub y: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl FieldSample {
    pub fn new(y: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if y.len() != sigma.len() {
            return Err(Error::Config(format!(
                "sample length {} does not match sigma length {}",
                y.len(),
                sigma.len()
            )));
        }
        Ok(FieldSample { y, sigma })
    }

    /// All multipliers 1.
    pub fn plain(y: Vec<f64>) -> Self {
        let sigma = vec![1.0; y.len()];
        FieldSample { y, sigma }
    }
}

/// The lognormal coefficient field `a(x) = exp(Σ y_j σ_j ψ_j(x))`.
pub struct CoefficientField<'a, B: FieldBasis + ?Sized> {
    basis: &'a B,
    sample: &'a FieldSample,
}

impl<'a, B: FieldBasis + ?Sized> CoefficientField<'a, B> {
    pub fn new(basis: &'a B, sample: &'a FieldSample) -> Result<Self> {
        if sample.y.len() > basis.mode_count() {
            return Err(Error::Config(format!(
                "sample has {} coefficients but the basis holds {} modes",
                sample.y.len(),
                basis.mode_count()
            )));
        }
        Ok(CoefficientField { basis, sample })
    }

    pub fn log_eval(&self, x: [f64; 2]) -> f64 {
        self.sample
            .y
            .iter()
            .zip(&self.sample.sigma)
            .enumerate()
            .map(|(j, (&yj, &sj))| yj * sj * self.basis.eval_mode(j, x))
            .sum()
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        self.log_eval(x).exp()
    }
}
