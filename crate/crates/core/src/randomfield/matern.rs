//! Matérn covariance for half-integer smoothness.

use crate::error::{Error, Result};

/// Stationary Matérn kernel with unit variance.
///
/// Restricted to half-integer smoothness ν = p + 1/2, where the kernel has
/// the closed exponential-times-polynomial form
/// `C(h) = exp(-z) (p!/(2p)!) Σ_{i=0..p} (p+i)!/(i!(p-i)!) (2z)^{p-i}` with
/// `z = sqrt(2ν) h / r`.
#[derive(Debug, Clone, Copy)]
pub struct MaternKernel {
    p: u32,
    correlation_length: f64,
}

impl MaternKernel {
    pub fn new(nu: f64, correlation_length: f64) -> Result<Self> {
        if !(correlation_length > 0.0) {
            return Err(Error::Config("correlation length must be positive".into()));
        }
        let p = nu - 0.5;
        if !(p >= 0.0) || (p - p.round()).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "smoothness nu = {nu} is not a positive half-integer; only nu = p + 1/2 is supported"
            )));
        }
        Ok(MaternKernel {
            p: p.round() as u32,
            correlation_length,
        })
    }

    pub fn nu(&self) -> f64 {
        f64::from(self.p) + 0.5
    }

    pub fn correlation_length(&self) -> f64 {
        self.correlation_length
    }

    pub fn eval(&self, h: f64) -> f64 {
        debug_assert!(h >= 0.0);
        if h == 0.0 {
            return 1.0;
        }
        let p = self.p;
        let z = (2.0 * self.nu()).sqrt() * h / self.correlation_length;
        let mut sum = 0.0;
        for i in 0..=p {
            sum += factorial(p + i) / (factorial(i) * factorial(p - i)) * (2.0 * z).powi((p - i) as i32);
        }
        (-z).exp() * factorial(p) / factorial(2 * p) * sum
    }
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_at_zero() {
        for nu in [0.5, 1.5, 4.5] {
            let k = MaternKernel::new(nu, 1.0).unwrap();
            assert_eq!(k.eval(0.0), 1.0);
        }
    }

    #[test]
    fn exponential_special_case() {
        let k = MaternKernel::new(0.5, 2.0).unwrap();
        for h in [0.1, 0.7, 3.0] {
            assert!((k.eval(h) - (-h / 2.0).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn three_halves_known_form() {
        let k = MaternKernel::new(1.5, 1.0).unwrap();
        for h in [0.2, 1.0, 2.5] {
            let z = 3f64.sqrt() * h;
            let expected = (1.0 + z) * (-z).exp();
            assert!((k.eval(h) - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn matches_bessel_definition() {
        // Independent oracle: the modified Bessel function of the second
        // kind at half-integer order ν = p + 1/2 has the finite sum
        // K_ν(x) = sqrt(π/(2x)) e^{-x} Σ_{k=0..p} (p+k)!/(k!(p-k)!) (2x)^{-k},
        // which plugs into the Bessel-form kernel definition
        // C(h) = z^ν K_ν(z) / (2^{ν-1} Γ(ν)), z = sqrt(2ν) h / r.
        let p = 4u32; // ν = 4.5
        let nu = 4.5;
        let k = MaternKernel::new(nu, 1.0).unwrap();
        let bessel_k = |x: f64| -> f64 {
            let mut sum = 0.0;
            for i in 0..=p {
                sum += factorial(p + i) / (factorial(i) * factorial(p - i)) * (2.0 * x).powi(-(i as i32));
            }
            (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp() * sum
        };
        // Γ(4.5) = 105/16 sqrt(π).
        let gamma_nu = 105.0 / 16.0 * std::f64::consts::PI.sqrt();
        for h in [0.25, 0.5, 1.0, 2.0] {
            let z = (2.0 * nu).sqrt() * h;
            let reference = z.powf(nu) * bessel_k(z) / (2f64.powf(nu - 1.0) * gamma_nu);
            assert!(
                (k.eval(h) - reference).abs() < 1e-8,
                "h = {h}: {} vs {reference}",
                k.eval(h)
            );
        }
        // Frozen value at h = 1 for ν = 4.5, r = 1.
        assert!((k.eval(1.0) - 0.5576151657200762).abs() < 1e-12);
    }

    #[test]
    fn decreasing_on_grid() {
        let k = MaternKernel::new(4.5, 1.0).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..200 {
            let v = k.eval(i as f64 * 0.05);
            assert!(v < prev || i == 0);
            prev = v;
        }
    }

    #[test]
    fn non_half_integer_rejected() {
        assert!(MaternKernel::new(1.0, 1.0).is_err());
        assert!(MaternKernel::new(2.4, 1.0).is_err());
    }
}
