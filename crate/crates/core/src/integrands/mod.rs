//! Integrands on the open unit cube and the two importance-sampling
//! wrappers.
//!
//! An [`Integrand`] is evaluated through a per-worker [`Session`], so
//! implementations that need scratch state (the PDE-backed quantity of
//! interest, for instance) can warm-start across consecutive evaluations
//! while staying shareable across threads.

mod optimize;

pub use optimize::{optimize_alpha, optimize_beta, PilotOptions, PilotResult};

use crate::error::{Error, Result};
use crate::gauss;

/// A real-valued function on the clamped open cube.
pub trait Integrand: Sync {
    fn dimension(&self) -> usize;

    /// Closed-form mean, when known.
    fn exact_mean(&self) -> Option<f64> {
        None
    }

    /// A single-threaded evaluation session. Sessions own whatever scratch
    /// state evaluation needs; create one per worker.
    fn session(&self) -> Session<'_>;

    /// One-off evaluation (creates a throwaway session).
    fn eval(&self, t: &[f64]) -> Result<f64> {
        self.session().eval(t)
    }
}

/// The same contract on the Gaussian domain: `ν = g ∘ Φ`.
pub trait GaussIntegrand: Sync {
    fn dimension(&self) -> usize;

    fn exact_mean(&self) -> Option<f64> {
        None
    }

    fn gauss_session(&self) -> Session<'_>;

    fn eval_gauss(&self, y: &[f64]) -> Result<f64> {
        self.gauss_session().eval(y)
    }
}

/// A per-worker evaluator.
pub struct Session<'a> {
    f: Box<dyn FnMut(&[f64]) -> Result<f64> + 'a>,
}

impl<'a> Session<'a> {
    pub fn new(f: impl FnMut(&[f64]) -> Result<f64> + 'a) -> Self {
        Session { f: Box::new(f) }
    }

    #[inline]
    pub fn eval(&mut self, t: &[f64]) -> Result<f64> {
        (self.f)(t)
    }
}

impl<T: Integrand + ?Sized> Integrand for &T {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn exact_mean(&self) -> Option<f64> {
        (**self).exact_mean()
    }
    fn session(&self) -> Session<'_> {
        (**self).session()
    }
}

impl<T: GaussIntegrand + ?Sized> GaussIntegrand for &T {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn exact_mean(&self) -> Option<f64> {
        (**self).exact_mean()
    }
    fn gauss_session(&self) -> Session<'_> {
        (**self).gauss_session()
    }
}

/// `g(t) = exp(Σ σ_j Φ^{-1}(t_j))`, the product of lognormal factors.
///
/// The mean is `∏ exp(σ_j²/2)`.
#[derive(Debug, Clone)]
pub struct LognormalProduct {
    sigma: Vec<f64>,
}

impl LognormalProduct {
    pub fn new(sigma: Vec<f64>) -> Result<Self> {
        if sigma.is_empty() || sigma.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Config(
                "lognormal product needs a nonempty positive sigma vector".into(),
            ));
        }
        Ok(LognormalProduct { sigma })
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }
}

impl Integrand for LognormalProduct {
    fn dimension(&self) -> usize {
        self.sigma.len()
    }

    fn exact_mean(&self) -> Option<f64> {
        Some(self.sigma.iter().map(|s| (s * s / 2.0).exp()).product())
    }

    fn session(&self) -> Session<'_> {
        Session::new(move |t: &[f64]| {
            debug_assert_eq!(t.len(), self.sigma.len());
            let mut acc = 0.0;
            for (&tj, &sj) in t.iter().zip(&self.sigma) {
                acc += sj * gauss::inv_norm_fast(tj);
            }
            Ok(acc.exp())
        })
    }
}

impl GaussIntegrand for LognormalProduct {
    fn dimension(&self) -> usize {
        self.sigma.len()
    }

    fn exact_mean(&self) -> Option<f64> {
        Integrand::exact_mean(self)
    }

    fn gauss_session(&self) -> Session<'_> {
        Session::new(move |y: &[f64]| {
            let acc: f64 = y.iter().zip(&self.sigma).map(|(&yj, &sj)| sj * yj).sum();
            Ok(acc.exp())
        })
    }
}

/// View a Gaussian-domain integrand as a cube integrand via `ν ∘ Φ^{-1}`.
#[derive(Debug, Clone)]
pub struct CubeView<G>(pub G);

impl<G: GaussIntegrand> Integrand for CubeView<G> {
    fn dimension(&self) -> usize {
        self.0.dimension()
    }

    fn exact_mean(&self) -> Option<f64> {
        self.0.exact_mean()
    }

    fn session(&self) -> Session<'_> {
        let mut inner = self.0.gauss_session();
        let mut y = vec![0.0; self.0.dimension()];
        Session::new(move |t: &[f64]| {
            for (yj, &tj) in y.iter_mut().zip(t) {
                *yj = gauss::inv_norm_fast(tj);
            }
            inner.eval(&y)
        })
    }
}

/// Importance sampling with a variance-scaled Gaussian proposal.
///
/// With `y = Φ^{-1}(t)` the reweighted integrand is
/// `(∏ α_j) ν(α ⊙ y) ∏ exp(-y_j² (α_j² - 1)/2)`; scales `α_j >= 1` push
/// samples toward the corners and remove the boundary singularity.
pub struct ScaledNormalIs<G> {
    inner: G,
    alpha: Vec<f64>,
}

impl<G: GaussIntegrand> ScaledNormalIs<G> {
    pub fn new(inner: G, alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() != inner.dimension() {
            return Err(Error::Config(format!(
                "alpha has length {}, integrand dimension is {}",
                alpha.len(),
                inner.dimension()
            )));
        }
        if alpha.iter().any(|&a| a < 1.0) {
            return Err(Error::Config(
                "scaled-normal proposal requires alpha_j >= 1 (smaller scales blow up the variance)"
                    .into(),
            ));
        }
        Ok(ScaledNormalIs { inner, alpha })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }
}

impl<G: GaussIntegrand> Integrand for ScaledNormalIs<G> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn exact_mean(&self) -> Option<f64> {
        // Reweighting keeps the mean.
        self.inner.exact_mean()
    }

    fn session(&self) -> Session<'_> {
        let mut inner = self.inner.gauss_session();
        let alpha = &self.alpha;
        let prod_alpha: f64 = alpha.iter().product();
        let mut scaled = vec![0.0; alpha.len()];
        Session::new(move |t: &[f64]| {
            let mut log_weight = 0.0;
            for ((sj, &tj), &aj) in scaled.iter_mut().zip(t).zip(alpha) {
                let yj = gauss::inv_norm_fast(tj);
                *sj = aj * yj;
                log_weight -= 0.5 * yj * yj * (aj * aj - 1.0);
            }
            Ok(prod_alpha * inner.eval(&scaled)? * log_weight.exp())
        })
    }
}

/// Density of the symmetric beta-like proposal on [0, 1]:
/// `ρ_β(t) = C min(t, 1-t)^{β-1}` with `C = β (1/2)^{1-β}`.
#[inline]
pub fn beta_like_pdf(t: f64, beta: f64) -> f64 {
    let c = beta * 0.5f64.powf(1.0 - beta);
    c * t.min(1.0 - t).powf(beta - 1.0)
}

/// CDF of the beta-like proposal.
#[inline]
pub fn beta_like_cdf(t: f64, beta: f64) -> f64 {
    if t < 0.5 {
        0.5f64.powf(1.0 - beta) * t.powf(beta)
    } else {
        1.0 - 0.5f64.powf(1.0 - beta) * (1.0 - t).powf(beta)
    }
}

/// Inverse CDF of the beta-like proposal:
/// `(2w)^{1/β} / 2` on the lower branch, mirrored above `w = 1/2`.
#[inline]
pub fn beta_like_inv_cdf(w: f64, beta: f64) -> f64 {
    if w < 0.5 {
        0.5 * (2.0 * w).powf(1.0 / beta)
    } else {
        1.0 - 0.5 * (2.0 * (1.0 - w)).powf(1.0 / beta)
    }
}

fn validate_beta(beta: &[f64]) -> Result<()> {
    if beta.iter().any(|&b| !(b > 0.0 && b <= 1.0)) {
        return Err(Error::Config(
            "beta-like proposal requires beta_j in (0, 1]".into(),
        ));
    }
    Ok(())
}

/// Importance sampling with the beta-like proposal: the integrand becomes
/// `g(Φ_β^{-1}(w)) / ρ_β(Φ_β^{-1}(w))` on the cube.
pub struct BetaLikeIs<F> {
    inner: F,
    beta: Vec<f64>,
}

impl<F: Integrand> BetaLikeIs<F> {
    pub fn new(inner: F, beta: Vec<f64>) -> Result<Self> {
        if beta.len() != inner.dimension() {
            return Err(Error::Config(format!(
                "beta has length {}, integrand dimension is {}",
                beta.len(),
                inner.dimension()
            )));
        }
        validate_beta(&beta)?;
        Ok(BetaLikeIs { inner, beta })
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }
}

impl<F: Integrand> Integrand for BetaLikeIs<F> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn exact_mean(&self) -> Option<f64> {
        self.inner.exact_mean()
    }

    fn session(&self) -> Session<'_> {
        let mut inner = self.inner.session();
        let beta = &self.beta;
        let mut mapped = vec![0.0; beta.len()];
        Session::new(move |w: &[f64]| {
            let mut density = 1.0;
            for ((mj, &wj), &bj) in mapped.iter_mut().zip(w).zip(beta) {
                let tj = beta_like_inv_cdf(wj, bj);
                *mj = tj;
                density *= beta_like_pdf(tj, bj);
            }
            Ok(inner.eval(&mapped)? / density)
        })
    }
}

/// A constant function, handy for calibration tests.
#[derive(Debug, Clone)]
pub struct Constant {
    pub dimension: usize,
    pub value: f64,
}

impl Integrand for Constant {
    fn dimension(&self) -> usize {
        self.dimension
    }
    fn exact_mean(&self) -> Option<f64> {
        Some(self.value)
    }
    fn session(&self) -> Session<'_> {
        Session::new(move |_t: &[f64]| Ok(self.value))
    }
}

impl GaussIntegrand for Constant {
    fn dimension(&self) -> usize {
        self.dimension
    }
    fn exact_mean(&self) -> Option<f64> {
        Some(self.value)
    }
    fn gauss_session(&self) -> Session<'_> {
        Session::new(move |_y: &[f64]| Ok(self.value))
    }
}
