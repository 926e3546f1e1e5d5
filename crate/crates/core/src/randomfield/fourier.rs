//! Trigonometric spectral basis of a stationary kernel on an extended
//! periodic domain.
//!
//! The kernel is sampled on the `M x M` torus over `[-γ, γ]²`, its Fourier
//! coefficients are taken with an FFT, and the real cosine/sine mode
//! functions for the leading coefficients form the basis. Restricting the
//! modes from the extended square to the physical domain `D = [-1, 1]²`
//! cannot increase their sup-norm, which is the quantity the convergence
//! model consumes.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

use super::FieldBasis;

/// How mode functions are scaled by their Fourier coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeScaling {
    /// ψ = λ θ.
    Eigenvalue,
    /// ψ = sqrt(λ) θ.
    SqrtEigenvalue,
}

/// Axis parity of a mode function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Parity {
    Cos,
    Sin,
}

/// One retained spectral mode.
#[derive(Debug, Clone)]
pub struct SpectralMode {
    /// Fourier coefficient of the periodized kernel at this frequency.
    pub lambda: f64,
    pub freq: [u32; 2],
    pub parity: [Parity; 2],
    /// sup over D of |ψ|.
    pub sup_norm: f64,
    /// Scale factor λ or sqrt(λ) times the L² normalization constants.
    amplitude: f64,
}

/// A basis of scaled trigonometric modes on the extended square.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    gamma: f64,
    scaling: ModeScaling,
    modes: Vec<SpectralMode>,
}

impl SpectralBasis {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn scaling(&self) -> ModeScaling {
        self.scaling
    }

    pub fn modes(&self) -> &[SpectralMode] {
        &self.modes
    }

    fn mode_value(&self, mode: &SpectralMode, x: [f64; 2]) -> f64 {
        let mut v = mode.amplitude;
        for axis in 0..2 {
            let arg = std::f64::consts::PI * f64::from(mode.freq[axis]) * x[axis] / self.gamma;
            v *= match mode.parity[axis] {
                Parity::Cos => arg.cos(),
                Parity::Sin => arg.sin(),
            };
        }
        v
    }
}

impl FieldBasis for SpectralBasis {
    fn mode_count(&self) -> usize {
        self.modes.len()
    }

    fn eval_mode(&self, j: usize, x: [f64; 2]) -> f64 {
        self.mode_value(&self.modes[j], x)
    }

    fn sup_norm(&self, j: usize) -> f64 {
        self.modes[j].sup_norm
    }

    fn domain(&self) -> [f64; 4] {
        [-1.0, 1.0, -1.0, 1.0]
    }
}

/// Build the spectral basis of a stationary kernel.
///
/// * `cov` — isotropic covariance as a function of distance.
/// * `gamma` — half-width of the extended square; must be >= 1 so the
///   physical domain embeds.
/// * `m` — FFT grid resolution per axis, a power of two >= 64.
/// * `count` — number of modes to retain (sorted by descending coefficient,
///   ties broken by frequency and parity).
///
/// Fails when fewer than `count` strictly positive coefficients exist among
/// the candidate frequencies; enlarging `gamma` fixes genuinely negative
/// low-frequency coefficients caused by a too-small periodization cell.
pub fn build_fourier_basis(
    cov: impl Fn(f64) -> f64,
    gamma: f64,
    m: usize,
    count: usize,
    scaling: ModeScaling,
) -> Result<SpectralBasis> {
    if gamma < 1.0 {
        return Err(Error::Config(
            "extension half-width gamma must be >= 1 (physical domain is [-1,1]^2)".into(),
        ));
    }
    if m < 64 || !m.is_power_of_two() {
        return Err(Error::Config(format!(
            "FFT resolution {m} must be a power of two >= 64"
        )));
    }
    if count == 0 {
        return Err(Error::Config("mode count must be positive".into()));
    }
    let period = 2.0 * gamma;
    // Sample the kernel at torus offsets, row-major.
    let dist_1d: Vec<f64> = (0..m)
        .map(|i| {
            let x = period * i as f64 / m as f64;
            x.min(period - x)
        })
        .collect();
    let mut grid: Vec<Complex64> = Vec::with_capacity(m * m);
    for di in &dist_1d {
        for dj in &dist_1d {
            grid.push(Complex64::new(cov((di * di + dj * dj).sqrt()), 0.0));
        }
    }
    fft2_in_place(&mut grid, m);
    let coeff = |k1: usize, k2: usize| -> f64 { grid[k1 * m + k2].re / (m * m) as f64 };

    // Candidate frequencies: generously more low modes than `count`. The
    // spectra handled here decay radially, so the global top modes live at
    // low frequency.
    let k_max = (4 * ((count as f64).sqrt().ceil() as usize + 1)).max(16).min(m / 2);
    let lambda_max = coeff(0, 0).abs().max(1e-300);
    let mut modes: Vec<SpectralMode> = Vec::new();
    for k1 in 0..k_max {
        for k2 in 0..k_max {
            let mut lambda = coeff(k1, k2);
            if lambda < 0.0 {
                if lambda >= -1e-12 * lambda_max {
                    lambda = 0.0;
                } else {
                    // Materially negative candidates are never retainable.
                    continue;
                }
            }
            let parities_1: &[Parity] = if k1 == 0 {
                &[Parity::Cos]
            } else {
                &[Parity::Cos, Parity::Sin]
            };
            let parities_2: &[Parity] = if k2 == 0 {
                &[Parity::Cos]
            } else {
                &[Parity::Cos, Parity::Sin]
            };
            for &p1 in parities_1 {
                for &p2 in parities_2 {
                    modes.push(SpectralMode {
                        lambda,
                        freq: [k1 as u32, k2 as u32],
                        parity: [p1, p2],
                        sup_norm: 0.0,
                        amplitude: 0.0,
                    });
                }
            }
        }
    }
    modes.sort_by(|a, b| {
        b.lambda
            .partial_cmp(&a.lambda)
            .unwrap()
            .then(a.freq.cmp(&b.freq))
            .then(a.parity.cmp(&b.parity))
    });
    if modes.len() < count || modes[count - 1].lambda <= 0.0 {
        return Err(Error::Config(format!(
            "only {} strictly positive spectral coefficients available, {count} requested; \
             the extension gamma = {gamma} is too small for this kernel",
            modes.iter().filter(|md| md.lambda > 0.0).count()
        )));
    }
    modes.truncate(count);

    // L²(D_p) normalization per axis and coefficient scaling.
    for mode in &mut modes {
        let mut amp = match scaling {
            ModeScaling::Eigenvalue => mode.lambda,
            ModeScaling::SqrtEigenvalue => mode.lambda.sqrt(),
        };
        for axis in 0..2 {
            amp /= if mode.freq[axis] == 0 {
                period.sqrt()
            } else {
                gamma.sqrt()
            };
        }
        mode.amplitude = amp;
    }

    let mut basis = SpectralBasis {
        gamma,
        scaling,
        modes,
    };
    for j in 0..basis.modes.len() {
        basis.modes[j].sup_norm = grid_sup_norm(&basis, j);
    }
    Ok(basis)
}

/// sup over D of |ψ_j| by a 512 x 512 grid scan with one local refinement
/// pass around the coarse argmax.
fn grid_sup_norm(basis: &SpectralBasis, j: usize) -> f64 {
    const COARSE: usize = 512;
    let mut best = 0.0f64;
    let mut arg = [0.0f64; 2];
    for i1 in 0..=COARSE {
        let x1 = -1.0 + 2.0 * i1 as f64 / COARSE as f64;
        for i2 in 0..=COARSE {
            let x2 = -1.0 + 2.0 * i2 as f64 / COARSE as f64;
            let v = basis.eval_mode(j, [x1, x2]).abs();
            if v > best {
                best = v;
                arg = [x1, x2];
            }
        }
    }
    let h = 2.0 / COARSE as f64;
    const FINE: i32 = 16;
    for i1 in -FINE..=FINE {
        for i2 in -FINE..=FINE {
            let x = [
                (arg[0] + h * f64::from(i1) / f64::from(FINE)).clamp(-1.0, 1.0),
                (arg[1] + h * f64::from(i2) / f64::from(FINE)).clamp(-1.0, 1.0),
            ];
            best = best.max(basis.eval_mode(j, x).abs());
        }
    }
    best
}

fn fft2_in_place(data: &mut [Complex64], m: usize) {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    // Rows.
    for row in data.chunks_exact_mut(m) {
        fft.process(row);
    }
    // Columns via transpose, row FFT, transpose back.
    let mut col = vec![Complex64::default(); m];
    for c in 0..m {
        for r in 0..m {
            col[r] = data[r * m + c];
        }
        fft.process(&mut col);
        for r in 0..m {
            data[r * m + c] = col[r];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randomfield::MaternKernel;

    #[test]
    fn constant_kernel_degenerates_to_single_mode() {
        let basis = build_fourier_basis(|_| 1.0, 2.0, 64, 1, ModeScaling::Eigenvalue).unwrap();
        let mode = &basis.modes()[0];
        assert!((mode.lambda - 1.0).abs() < 1e-12);
        assert_eq!(mode.freq, [0, 0]);
        // The zero-frequency function is constant; its sup over D equals its
        // value anywhere, amplitude λ/(2γ) = 1/4.
        let v0 = basis.eval_mode(0, [0.0, 0.0]);
        let v1 = basis.eval_mode(0, [0.7, -0.3]);
        assert!((v0 - v1).abs() < 1e-15);
        assert!((mode.sup_norm - v0.abs()).abs() < 1e-12);
        // Requesting a second positive mode must fail: the remaining
        // coefficients vanish.
        assert!(build_fourier_basis(|_| 1.0, 2.0, 64, 2, ModeScaling::Eigenvalue).is_err());
    }

    #[test]
    fn matern_retained_eigenvalues_positive_and_sorted() {
        let k = MaternKernel::new(4.5, 1.0).unwrap();
        let basis =
            build_fourier_basis(|h| k.eval(h), 2.0, 256, 64, ModeScaling::Eigenvalue).unwrap();
        let lambdas: Vec<f64> = basis.modes().iter().map(|m| m.lambda).collect();
        assert!(lambdas.iter().all(|&l| l > 0.0));
        assert!(lambdas.windows(2).all(|w| w[0] >= w[1]));
        // Decay regression guard established on first build: the 64th
        // coefficient sits at about 5.26e-4 of the leading one.
        let ratio = lambdas[63] / lambdas[0];
        assert!(ratio < 1e-3, "decay ratio {ratio}");
        assert!((ratio - 5.258e-4).abs() < 5e-6, "decay ratio drifted: {ratio}");
    }

    #[test]
    fn restriction_cannot_increase_sup_norm() {
        // sup over D <= sup over D_p; for these trig modes the sup over the
        // extended square is exactly the amplitude.
        let k = MaternKernel::new(4.5, 1.0).unwrap();
        let basis =
            build_fourier_basis(|h| k.eval(h), 2.0, 128, 32, ModeScaling::SqrtEigenvalue).unwrap();
        for (j, mode) in basis.modes().iter().enumerate() {
            assert!(
                mode.sup_norm <= mode.amplitude.abs() + 1e-12,
                "mode {j}: sup {} exceeds extended-domain sup {}",
                mode.sup_norm,
                mode.amplitude.abs()
            );
        }
    }

    #[test]
    fn sup_norm_grid_matches_known_value() {
        // For a pure cosine mode the sup over D is attained at the origin.
        let k = MaternKernel::new(4.5, 1.0).unwrap();
        let basis =
            build_fourier_basis(|h| k.eval(h), 2.0, 128, 8, ModeScaling::Eigenvalue).unwrap();
        let j = 0;
        let origin = basis.eval_mode(j, [0.0, 0.0]).abs();
        assert!(basis.sup_norm(j) >= origin - 1e-14);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(build_fourier_basis(|_| 1.0, 0.5, 64, 1, ModeScaling::Eigenvalue).is_err());
        assert!(build_fourier_basis(|_| 1.0, 2.0, 100, 1, ModeScaling::Eigenvalue).is_err());
        assert!(build_fourier_basis(|_| 1.0, 2.0, 32, 1, ModeScaling::Eigenvalue).is_err());
    }
}
