//! Spike-and-slab prior over a single latent coordinate.
//!
//! The prior is the two-component mixture
//! `alpha1 * N(0, sigma1_sq) + (1 - alpha1) * N(0, sigma2_sq)` with a wide
//! standard component and a narrow component (small `sigma2_sq`) standing in
//! for a spike at zero. It factorizes over latent dimensions, so the slice
//! helpers below just apply the scalar functions elementwise.
//!
//! The log-density gradient is available in two algebraically equivalent
//! forms: the overflow-safe closed form built on [`StableCoeffs`], and the
//! responsibility-weighted form built on [`posterior_component`]. The
//! inference code uses the former; the latter exists to check it.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::ndgrad::sigmoid;
use crate::scalar::Scalar;

/// Mixture parameters. `alpha2 = 1 - alpha1` is implied, never stored.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PriorParams<T = f64> {
    alpha1: T,
    sigma1_sq: T,
    sigma2_sq: T,
}

pub const DEFAULT_SIGMA1_SQ: f64 = 1.0;
pub const DEFAULT_SIGMA2_SQ: f64 = 0.1;

impl<T: Scalar> PriorParams<T> {
    pub fn new(alpha1: T, sigma1_sq: T, sigma2_sq: T) -> Result<Self> {
        if !(alpha1 > T::zero() && alpha1 <= T::one()) {
            return Err(Error::param(format!("alpha1 must lie in (0, 1], got {alpha1}")));
        }
        if !(sigma1_sq > T::zero() && sigma2_sq > T::zero()) || !sigma1_sq.is_finite() {
            return Err(Error::param(format!(
                "variances must be positive and finite, got {sigma1_sq} and {sigma2_sq}"
            )));
        }
        // Equal variances are allowed: the mixture then collapses to one Gaussian.
        if sigma2_sq > sigma1_sq {
            return Err(Error::param(format!(
                "narrow variance {sigma2_sq} exceeds wide variance {sigma1_sq}"
            )));
        }
        Ok(PriorParams {
            alpha1,
            sigma1_sq,
            sigma2_sq,
        })
    }

    /// `sigma1_sq = 1`, `sigma2_sq = 0.1`.
    pub fn with_alpha1(alpha1: T) -> Result<Self> {
        Self::new(alpha1, T::of(DEFAULT_SIGMA1_SQ), T::of(DEFAULT_SIGMA2_SQ))
    }

    /// Same variances, new mixture weight.
    pub fn set_alpha1(&self, alpha1: T) -> Result<Self> {
        Self::new(alpha1, self.sigma1_sq, self.sigma2_sq)
    }

    pub fn alpha1(&self) -> T {
        self.alpha1
    }

    pub fn alpha2(&self) -> T {
        T::one() - self.alpha1
    }

    pub fn sigma1_sq(&self) -> T {
        self.sigma1_sq
    }

    pub fn sigma2_sq(&self) -> T {
        self.sigma2_sq
    }

    pub fn coeffs(&self) -> StableCoeffs<T> {
        let (s1, s2) = (self.sigma1_sq.sqrt(), self.sigma2_sq.sqrt());
        StableCoeffs {
            r1: self.alpha2() * s1 / (self.alpha1 * s2),
            r2: (self.sigma2_sq - self.sigma1_sq) / (self.sigma1_sq * self.sigma2_sq),
            inv_sigma1_sq: self.sigma1_sq.recip(),
            log_lead: (self.alpha1 / (T::of((2.0 * PI).sqrt()) * s1)).ln(),
        }
    }
}

/// Precomputed constants of the overflow-safe form.
///
/// `r1 = (1 - alpha1) sigma1 / (alpha1 sigma2)` and
/// `r2 = (sigma2² - sigma1²) / (sigma1² sigma2²)`; `r2 <= 0` always, so
/// `exp(r2 z² / 2)` cannot overflow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StableCoeffs<T = f64> {
    pub r1: T,
    pub r2: T,
    inv_sigma1_sq: T,
    log_lead: T,
}

impl<T: Scalar> StableCoeffs<T> {
    #[inline]
    pub fn log_density(&self, z: T) -> T {
        let half_z2 = T::of(0.5) * z * z;
        self.log_lead - half_z2 * self.inv_sigma1_sq + (self.r1 * (self.r2 * half_z2).exp()).ln_1p()
    }

    /// `-z/sigma1² + r1 r2 z / (exp(-r2 z²/2) + r1)`.
    #[inline]
    pub fn grad(&self, z: T) -> T {
        let e = (-self.r2 * T::of(0.5) * z * z).exp();
        let tail = if self.r1 == T::zero() {
            T::zero()
        } else {
            self.r1 * self.r2 * z / (e + self.r1)
        };
        -z * self.inv_sigma1_sq + tail
    }
}

pub fn log_density<T: Scalar>(z: T, p: &PriorParams<T>) -> T {
    p.coeffs().log_density(z)
}

pub fn density<T: Scalar>(z: T, p: &PriorParams<T>) -> T {
    log_density(z, p).exp()
}

pub fn grad_log_density_direct<T: Scalar>(z: T, p: &PriorParams<T>) -> T {
    p.coeffs().grad(z)
}

/// Posterior responsibility `p(C_i | z)` of component `i ∈ {1, 2}`
/// (1 = wide, 2 = narrow).
///
/// Evaluated as a logistic function of the log-odds so neither extreme of
/// `z` overflows; the two responsibilities sum to one.
pub fn posterior_component<T: Scalar>(i: usize, z: T, p: &PriorParams<T>) -> Result<T> {
    let (ai, aj, vi, vj) = match i {
        1 => (p.alpha1, p.alpha2(), p.sigma1_sq, p.sigma2_sq),
        2 => (p.alpha2(), p.alpha1, p.sigma2_sq, p.sigma1_sq),
        _ => return Err(Error::param(format!("mixture component {i} is not 1 or 2"))),
    };
    if ai == T::zero() {
        return Ok(T::zero());
    }
    if aj == T::zero() {
        return Ok(T::one());
    }
    let half = T::of(0.5);
    let exponent = z * z * (half / vi - half / vj);
    let log_odds = (ai / vi.sqrt()).ln() - (aj / vj.sqrt()).ln() - exponent;
    Ok(sigmoid(log_odds))
}

/// `-p(C1|z) z / sigma1² - p(C2|z) z / sigma2²`.
pub fn grad_log_density_posterior<T: Scalar>(z: T, p: &PriorParams<T>) -> T {
    let p1 = posterior_component(1, z, p).expect("valid index");
    let p2 = posterior_component(2, z, p).expect("valid index");
    -p1 * z / p.sigma1_sq - p2 * z / p.sigma2_sq
}

/// `Σ_k log p(z_k)` over a latent vector.
pub fn log_density_sum<T: Scalar>(z: &[T], p: &PriorParams<T>) -> T {
    let c = p.coeffs();
    z.iter().map(|&v| c.log_density(v)).sum()
}

/// Elementwise prior score `∂/∂z_k log p(z_k)` written into `out`.
pub fn grad_log_density_into<T: Scalar>(z: &[T], p: &PriorParams<T>, out: &mut [T]) {
    assert_eq!(z.len(), out.len());
    let c = p.coeffs();
    for (o, &v) in out.iter_mut().zip(z) {
        *o = c.grad(v);
    }
}
