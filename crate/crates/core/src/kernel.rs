//! Kernel families and the bandwidth-scaled, normalised kernel weight.
//!
//! Every family is evaluated on the scaled distance `v = ‖y − yᵢ‖ / λ`. The
//! scaled weight divides by the family's peak value `c_k`, so weights always
//! lie in `[0, 1]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{NwcError, Result};
use crate::scalar::Scalar;

/// Kernel shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Boxcar,
    Gaussian,
    Epanechnikov,
    Quartic,
    Triweight,
    Tricube,
    Cosine,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 7] = [
        KernelFamily::Boxcar,
        KernelFamily::Gaussian,
        KernelFamily::Epanechnikov,
        KernelFamily::Quartic,
        KernelFamily::Triweight,
        KernelFamily::Tricube,
        KernelFamily::Cosine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Boxcar => "boxcar",
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Epanechnikov => "epanechnikov",
            KernelFamily::Quartic => "quartic",
            KernelFamily::Triweight => "triweight",
            KernelFamily::Tricube => "tricube",
            KernelFamily::Cosine => "cosine",
        }
    }

    /// Whether the family vanishes outside `[-1, 1]` without truncation.
    pub fn is_compact(self) -> bool {
        !matches!(self, KernelFamily::Gaussian)
    }

    /// Peak value `sup_v K(v)`, attained at `v = 0`.
    pub fn peak<T: Scalar>(self) -> T {
        match self {
            KernelFamily::Cosine => T::FRAC_PI_4(),
            _ => T::one(),
        }
    }

    /// Unscaled kernel value `K(v)`.
    pub fn eval<T: Scalar>(self, v: T) -> T {
        let a = v.abs();
        let one = T::one();
        if self.is_compact() && !(a <= one) {
            return T::zero();
        }
        match self {
            KernelFamily::Boxcar => one,
            KernelFamily::Gaussian => (-(a * a) / T::lit(2.0)).exp(),
            KernelFamily::Epanechnikov => one - a * a,
            KernelFamily::Quartic => {
                let u = one - a * a;
                u * u
            }
            KernelFamily::Triweight => {
                let u = one - a * a;
                u * u * u
            }
            KernelFamily::Tricube => {
                if a >= one {
                    return T::zero();
                }
                let u = one - a * a * a;
                u * u * u
            }
            KernelFamily::Cosine => T::FRAC_PI_4() * (T::FRAC_PI_2() * a).cos().max(T::zero()),
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = NwcError;

    fn from_str(s: &str) -> Result<Self> {
        KernelFamily::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| NwcError::UnknownKernel(s.to_string()))
    }
}

/// Family plus bandwidth, with the normalisation constant fixed per family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec<T> {
    family: KernelFamily,
    bandwidth: T,
    norm: T,
    truncate: bool,
}

impl<T: Scalar> KernelSpec<T> {
    /// Truncated kernel of the given family. Truncation is a no-op for the
    /// compact families and cuts the Gaussian at one bandwidth.
    pub fn new(family: KernelFamily, bandwidth: T) -> Result<Self> {
        Self::with_truncation(family, bandwidth, true)
    }

    /// Gaussian kernel with infinite support. Bounds computed with it require
    /// tail parameters.
    pub fn untruncated_gaussian(bandwidth: T) -> Result<Self> {
        Self::with_truncation(KernelFamily::Gaussian, bandwidth, false)
    }

    pub fn with_truncation(family: KernelFamily, bandwidth: T, truncate: bool) -> Result<Self> {
        if !(bandwidth > T::zero()) || !bandwidth.is_finite() {
            return Err(NwcError::param(
                "bandwidth",
                format!("must be a positive finite number, got {bandwidth}"),
            ));
        }
        if !truncate && family != KernelFamily::Gaussian {
            return Err(NwcError::param(
                "truncate",
                format!("only the gaussian kernel may be used untruncated, not {family}"),
            ));
        }
        Ok(KernelSpec {
            family,
            bandwidth,
            norm: family.peak(),
            truncate,
        })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn bandwidth(&self) -> T {
        self.bandwidth
    }

    /// Normalisation constant `c_k`.
    pub fn norm(&self) -> T {
        self.norm
    }

    /// True when the weight is exactly zero beyond one bandwidth.
    pub fn is_compact(&self) -> bool {
        self.truncate
    }

    pub fn with_bandwidth(&self, bandwidth: T) -> Result<Self> {
        Self::with_truncation(self.family, bandwidth, self.truncate)
    }

    /// Scaled weight `K(distance / λ) / c_k`, in `[0, 1]`.
    pub fn weight(&self, distance: T) -> T {
        let v = distance / self.bandwidth;
        if self.truncate && v > T::one() {
            return T::zero();
        }
        let w = self.family.eval(v) / self.norm;
        w.min(T::one()).max(T::zero())
    }

    /// Weight from a squared distance, skipping the square root when the point
    /// is outside the support.
    #[inline]
    pub fn weight_sq(&self, squared_distance: T) -> T {
        if self.truncate && squared_distance > self.bandwidth * self.bandwidth {
            return T::zero();
        }
        self.weight(squared_distance.sqrt())
    }
}
