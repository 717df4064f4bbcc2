//! High-probability error bounds for kernel class-probability estimates.
//!
//! The bound on `|p_c(y) − p̂_c(y)|` is the sum of two parts:
//!
//! * a bias term, `L·λ` for an `L`-Lipschitz class-probability function or
//!   `λ/γ` for classes separated by a margin `γ` (with a tail-aware variant for
//!   infinite-support kernels), and
//! * a sampling term `2σ·α(κ, δ)/κ` from a self-normalised concentration
//!   inequality, holding with probability at least `1 − δ` per query.
//!
//! The sum is clipped to 1, since probability differences never exceed it.

use serde::{Deserialize, Serialize};

use crate::error::{NwcError, Result};
use crate::estimate::ProbabilityEstimate;
use crate::kernel::KernelSpec;
use crate::scalar::Scalar;

/// Smoothness assumption on the data distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Regime<T> {
    /// Overlapping classes with `L`-Lipschitz class probabilities.
    Lipschitz(T),
    /// Classes separated by at least `γ`.
    Margin(T),
}

impl<T: Scalar> Regime<T> {
    /// Bias slope `β`: `L`, or `1/γ`.
    pub fn beta(&self) -> T {
        match *self {
            Regime::Lipschitz(l) => l,
            Regime::Margin(g) => T::one() / g,
        }
    }
}

/// Cut-off radius `λ*` and input-space diameter `Φ` for infinite-support
/// kernels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailParams<T> {
    pub cutoff: T,
    pub diameter: T,
}

/// How the tail mass `ε_t` is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TailRule {
    /// `ε_t = Σ_far θᵢ`, the far-sample weight after capping distances by `Φ`.
    #[default]
    WeightMass,
    /// `ε_t = Σ_far θᵢ‖y − yᵢ‖`, which counts distance a second time through `Φ`.
    DistanceWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConfig<T> {
    pub regime: Regime<T>,
    pub delta: T,
    pub sigma: T,
    pub tail: Option<TailParams<T>>,
    pub tail_rule: TailRule,
}

/// Sub-Gaussian scale of Bernoulli label noise used by default.
pub const DEFAULT_SIGMA: f64 = 0.25;

impl<T: Scalar> BoundConfig<T> {
    pub fn new(regime: Regime<T>, delta: T) -> Result<Self> {
        let cfg = BoundConfig {
            regime,
            delta,
            sigma: T::lit(DEFAULT_SIGMA),
            tail: None,
            tail_rule: TailRule::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn lipschitz(l: T, delta: T) -> Result<Self> {
        Self::new(Regime::Lipschitz(l), delta)
    }

    pub fn margin(gamma: T, delta: T) -> Result<Self> {
        Self::new(Regime::Margin(gamma), delta)
    }

    pub fn with_sigma(mut self, sigma: T) -> Result<Self> {
        self.sigma = sigma;
        self.validate()?;
        Ok(self)
    }

    pub fn with_tail(mut self, cutoff: T, diameter: T) -> Result<Self> {
        self.tail = Some(TailParams { cutoff, diameter });
        self.validate()?;
        Ok(self)
    }

    pub fn with_tail_rule(mut self, rule: TailRule) -> Self {
        self.tail_rule = rule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > T::zero() && self.delta < T::one()) {
            return Err(NwcError::param("delta", format!("must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.sigma >= T::zero()) || !self.sigma.is_finite() {
            return Err(NwcError::param("sigma", format!("must be non-negative, got {}", self.sigma)));
        }
        match self.regime {
            Regime::Lipschitz(l) if !(l > T::zero() && l.is_finite()) => {
                return Err(NwcError::param("lipschitz", format!("must be positive, got {l}")))
            }
            Regime::Margin(g) if !(g > T::zero() && g.is_finite()) => {
                return Err(NwcError::param("margin", format!("must be positive, got {g}")))
            }
            _ => {}
        }
        if let Some(t) = self.tail {
            if !(t.cutoff > T::zero()) || !(t.diameter > T::zero()) {
                return Err(NwcError::param("tail", "cut-off and diameter must be positive"));
            }
        }
        Ok(())
    }

    /// Tail parameters must be given exactly when the kernel has unbounded
    /// support.
    pub fn check_kernel(&self, kernel: &KernelSpec<T>) -> Result<()> {
        match (kernel.is_compact(), self.tail.is_some()) {
            (true, true) => Err(NwcError::param(
                "tail",
                "tail parameters only apply to an untruncated kernel",
            )),
            (false, false) => Err(NwcError::param(
                "tail",
                "an untruncated kernel requires tail parameters (cut-off and diameter)",
            )),
            _ => Ok(()),
        }
    }
}

/// Components of a per-query bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundBreakdown<T> {
    pub bias: T,
    /// Infinite when the estimate abstained.
    pub sampling: T,
    /// `min(1, bias + sampling)`.
    pub total: T,
    /// `α(κ, δ)`; absent on abstention.
    pub alpha: Option<T>,
    /// Set when `κ = 0` and the bound carries no information.
    pub vacuous: bool,
    /// Tail bias under the alternative tail rule, reported alongside the one
    /// used in `bias` when an infinite-support kernel is active.
    pub bias_alternative: Option<T>,
}

/// Bias term for a compact kernel: `β·λ`.
pub fn bias_bound<T: Scalar>(cfg: &BoundConfig<T>, kernel: &KernelSpec<T>) -> Result<T> {
    if !kernel.is_compact() {
        return Err(NwcError::Unsupported(
            "the untruncated gaussian kernel needs the tail-aware bias bound".into(),
        ));
    }
    Ok(cfg.regime.beta() * kernel.bandwidth())
}

/// Tail-aware bias under both tail rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBias<T> {
    pub weight_mass: T,
    pub distance_weighted: T,
}

impl<T: Scalar> TailBias<T> {
    pub fn select(&self, rule: TailRule) -> (T, T) {
        match rule {
            TailRule::WeightMass => (self.weight_mass, self.distance_weighted),
            TailRule::DistanceWeighted => (self.distance_weighted, self.weight_mass),
        }
    }
}

/// Bias for infinite-support kernels: `β·λ* + β·Φ·ε_t`, with `weights` the
/// normalised kernel weights `θᵢ` and `distances` the matching `‖y − yᵢ‖`.
pub fn bias_bound_tail<T: Scalar>(cfg: &BoundConfig<T>, weights: &[T], distances: &[T]) -> Result<TailBias<T>> {
    let tail = cfg
        .tail
        .ok_or_else(|| NwcError::param("tail", "tail parameters (cut-off and diameter) are required"))?;
    if weights.len() != distances.len() {
        return Err(NwcError::LengthMismatch(format!(
            "{} weights but {} distances",
            weights.len(),
            distances.len()
        )));
    }
    let total: T = weights.iter().copied().sum();
    if (total - T::one()).abs() > T::lit(1e-9) || weights.iter().any(|&w| w < T::zero()) {
        return Err(NwcError::param("weights", format!("must be non-negative and sum to 1, sum is {total}")));
    }
    if distances.iter().any(|&d| !(d >= T::zero())) {
        return Err(NwcError::param("distances", "must be non-negative"));
    }
    let (mass, weighted) = weights
        .iter()
        .zip(distances)
        .filter(|&(_, &d)| d > tail.cutoff)
        .fold((T::zero(), T::zero()), |(m, s), (&w, &d)| (m + w, s + w * d));
    let beta = cfg.regime.beta();
    let base = beta * tail.cutoff;
    Ok(TailBias {
        weight_mass: base + beta * tail.diameter * mass,
        distance_weighted: base + beta * tail.diameter * weighted,
    })
}

/// Data-dependent factor `α(κ, δ)` of the sampling bound.
pub fn alpha_n<T: Scalar>(kappa: T, delta: T) -> Result<T> {
    if !(kappa > T::zero()) {
        return Err(NwcError::param("kappa", format!("must be positive, got {kappa}")));
    }
    if !(delta > T::zero() && delta < T::one()) {
        return Err(NwcError::param("delta", format!("must lie in (0, 1), got {delta}")));
    }
    let one = T::one();
    Ok(if kappa > one {
        (kappa * ((one + kappa).sqrt() / delta).ln()).sqrt()
    } else {
        (T::SQRT_2() / delta).ln().sqrt()
    })
}

/// Sampling term `2σ·α(κ, δ)/κ`.
pub fn sampling_bound<T: Scalar>(kappa: T, cfg: &BoundConfig<T>) -> Result<T> {
    Ok(T::lit(2.0) * cfg.sigma * alpha_n(kappa, cfg.delta)? / kappa)
}

fn breakdown<T: Scalar>(bias: T, est: &ProbabilityEstimate<T>, cfg: &BoundConfig<T>) -> Result<BoundBreakdown<T>> {
    if est.abstained || !(est.kappa > T::zero()) {
        return Ok(BoundBreakdown {
            bias,
            sampling: T::infinity(),
            total: T::one(),
            alpha: None,
            vacuous: true,
            bias_alternative: None,
        });
    }
    let alpha = alpha_n(est.kappa, cfg.delta)?;
    let sampling = T::lit(2.0) * cfg.sigma * alpha / est.kappa;
    Ok(BoundBreakdown {
        bias,
        sampling,
        total: (bias + sampling).min(T::one()),
        alpha: Some(alpha),
        vacuous: false,
        bias_alternative: None,
    })
}

/// Combined bound for an estimate produced with a compact kernel.
pub fn total_bound<T: Scalar>(
    est: &ProbabilityEstimate<T>,
    cfg: &BoundConfig<T>,
    kernel: &KernelSpec<T>,
) -> Result<BoundBreakdown<T>> {
    cfg.check_kernel(kernel)?;
    breakdown(bias_bound(cfg, kernel)?, est, cfg)
}

/// Combined bound for an infinite-support kernel, given the per-sample
/// normalised weights and distances that formed the estimate.
pub fn total_bound_tail<T: Scalar>(
    est: &ProbabilityEstimate<T>,
    cfg: &BoundConfig<T>,
    kernel: &KernelSpec<T>,
    weights: &[T],
    distances: &[T],
) -> Result<BoundBreakdown<T>> {
    cfg.check_kernel(kernel)?;
    if est.abstained {
        let tail = cfg.tail.expect("checked by check_kernel");
        return breakdown(cfg.regime.beta() * (tail.cutoff + tail.diameter), est, cfg);
    }
    let (bias, alt) = bias_bound_tail(cfg, weights, distances)?.select(cfg.tail_rule);
    let mut b = breakdown(bias, est, cfg)?;
    b.bias_alternative = Some(alt);
    Ok(b)
}
