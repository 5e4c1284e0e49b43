//! Normal, bivariate normal and chi-square primitives.
//!
//! The checked entry points (`norm_cdf`, `binorm_cdf`, ...) validate their
//! arguments and return [`SpecFunError`] on non-finite input or out-of-range
//! parameters. The likelihood kernels call the [`unchecked`] versions in their
//! inner loops, where the arguments are already known to be finite.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use thiserror::Error;

/// ln(sqrt(2 pi))
pub(crate) const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
/// 1 / sqrt(2 pi)
pub(crate) const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Below this point `log_norm_cdf` switches to the asymptotic tail series.
const LOG_CDF_TAIL_SWITCH: f64 = -20.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecFunError {
    #[error("domain error: {what} = {value}")]
    Domain { what: &'static str, value: f64 },
}

fn finite(what: &'static str, value: f64) -> Result<f64, SpecFunError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(SpecFunError::Domain { what, value })
    }
}

/// A correlation coefficient in the closed interval [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Correlation(f64);

impl Correlation {
    pub fn new(rho: f64) -> Result<Self, SpecFunError> {
        if rho.is_finite() && (-1.0..=1.0).contains(&rho) {
            Ok(Self(rho))
        } else {
            Err(SpecFunError::Domain { what: "rho", value: rho })
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Correlation {
    type Error = SpecFunError;

    fn try_from(rho: f64) -> Result<Self, Self::Error> {
        Self::new(rho)
    }
}

pub fn norm_pdf(v: f64) -> Result<f64, SpecFunError> {
    Ok(unchecked::pdf(finite("v", v)?))
}

pub fn norm_cdf(v: f64) -> Result<f64, SpecFunError> {
    Ok(unchecked::cdf(finite("v", v)?))
}

/// `log(norm_cdf(v))` without underflow in the lower tail.
pub fn log_norm_cdf(v: f64) -> Result<f64, SpecFunError> {
    Ok(unchecked::log_cdf(finite("v", v)?))
}

/// `P(Z1 <= a, Z2 <= b)` for a standard bivariate normal pair with correlation `rho`.
pub fn binorm_cdf(a: f64, b: f64, rho: Correlation) -> Result<f64, SpecFunError> {
    let a = finite("a", a)?;
    let b = finite("b", b)?;
    Ok(unchecked::bvn_cdf(a, b, rho.value()))
}

/// Standard bivariate normal density at `(a, b)`; requires `|rho| < 1`.
pub fn binorm_pdf(a: f64, b: f64, rho: Correlation) -> Result<f64, SpecFunError> {
    let a = finite("a", a)?;
    let b = finite("b", b)?;
    if rho.value().abs() >= 1.0 {
        return Err(SpecFunError::Domain { what: "rho", value: rho.value() });
    }
    Ok(unchecked::bvn_pdf(a, b, rho.value()))
}

/// Inverse of the standard normal CDF on (0, 1).
pub fn norm_quantile(p: f64) -> Result<f64, SpecFunError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(SpecFunError::Domain { what: "p", value: p });
    }
    Ok(unchecked::quantile(p))
}

/// CDF of the chi-square distribution with one degree of freedom.
pub fn chisq1_cdf(q: f64) -> Result<f64, SpecFunError> {
    let q = finite("q", q)?;
    if q < 0.0 {
        return Err(SpecFunError::Domain { what: "q", value: q });
    }
    Ok(libm::erf((0.5 * q).sqrt()))
}

/// Upper tail `P(chi2_1 > q)`, accurate for large `q`.
pub fn chisq1_sf(q: f64) -> Result<f64, SpecFunError> {
    let q = finite("q", q)?;
    if q < 0.0 {
        return Err(SpecFunError::Domain { what: "q", value: q });
    }
    Ok(libm::erfc((0.5 * q).sqrt()))
}

/// Upper `alpha` quantile of the 50:50 mixture of chi2_0 and chi2_1.
///
/// Valid for `alpha` in (0, 0.5]; the point mass at zero carries half the
/// probability, so `alpha = 0.5` maps to 0.
pub fn mixture_quantile(alpha: f64) -> Result<f64, SpecFunError> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(SpecFunError::Domain { what: "alpha", value: alpha });
    }
    if alpha == 0.5 {
        return Ok(0.0);
    }
    // 1/2 + 1/2 (2 Phi(sqrt q) - 1) = 1 - alpha  <=>  Phi(-sqrt q) = alpha
    let z = unchecked::quantile(alpha);
    Ok(z * z)
}

/// Fast paths without argument validation.
pub mod unchecked {
    use super::*;

    #[inline]
    pub fn pdf(v: f64) -> f64 {
        FRAC_1_SQRT_2PI * (-0.5 * v * v).exp()
    }

    #[inline]
    pub fn log_pdf(v: f64) -> f64 {
        -0.5 * v * v - LN_SQRT_2PI
    }

    #[inline]
    pub fn cdf(v: f64) -> f64 {
        0.5 * libm::erfc(-v * FRAC_1_SQRT_2)
    }

    pub fn log_cdf(v: f64) -> f64 {
        if v > 0.0 {
            (-cdf(-v)).ln_1p()
        } else if v >= LOG_CDF_TAIL_SWITCH {
            cdf(v).ln()
        } else {
            // Phi(v) = phi(v)/(-v) * sum_k (-1)^k (2k-1)!! / v^(2k)
            let inv2 = 1.0 / (v * v);
            let mut term = 1.0;
            let mut sum = 1.0;
            for k in 1..10 {
                term *= -((2 * k - 1) as f64) * inv2;
                sum += term;
            }
            log_pdf(v) - (-v).ln() + sum.ln()
        }
    }

    /// Inverse Mills-type ratio `phi(v) / Phi(v)`, stable for very negative `v`.
    #[inline]
    pub fn mills(v: f64) -> f64 {
        if v > -5.0 {
            pdf(v) / cdf(v)
        } else {
            (log_pdf(v) - log_cdf(v)).exp()
        }
    }

    pub fn quantile(p: f64) -> f64 {
        if p > 0.5 {
            return -quantile(1.0 - p);
        }
        if p == 0.5 {
            return 0.0;
        }
        // Rational starting value (absolute error below 5e-4), then Halley steps.
        let t = (-2.0 * p.ln()).sqrt();
        let mut x = -(t
            - (2.515517 + 0.802853 * t + 0.010328 * t * t)
                / (1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t * t * t));
        for _ in 0..8 {
            let err = (cdf(x) - p) / pdf(x);
            let step = err / (1.0 + 0.5 * x * err);
            x -= step;
            if step.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        x
    }

    #[inline]
    pub fn bvn_pdf(a: f64, b: f64, rho: f64) -> f64 {
        let one_minus = (1.0 - rho) * (1.0 + rho);
        let quad = (a * a - 2.0 * rho * a * b + b * b) / one_minus;
        (-0.5 * quad).exp() / (2.0 * PI * one_minus.sqrt())
    }

    pub fn bvn_cdf(a: f64, b: f64, rho: f64) -> f64 {
        // Fixed argument order keeps the result exactly exchangeable.
        let (a, b) = if b < a { (b, a) } else { (a, b) };
        if rho >= 1.0 {
            cdf(a.min(b))
        } else if rho <= -1.0 {
            (cdf(a) - cdf(-b)).max(0.0)
        } else if rho == 0.0 {
            cdf(a) * cdf(b)
        } else {
            let p = upper_orthant(-a, -b, rho).clamp(0.0, 1.0);
            if p < BVN_TAIL {
                lower_tail(a, b, rho)
            } else {
                p
            }
        }
    }

    /// Below this value the series result only has absolute accuracy, so the
    /// probability is recomputed by direct integration.
    const BVN_TAIL: f64 = 1e-6;

    fn gl20(f: &impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
        let c = 0.5 * (lo + hi);
        let h = 0.5 * (hi - lo);
        h * GL20.iter().map(|&(w, x)| w * (f(c + h * x) + f(c - h * x))).sum::<f64>()
    }

    fn refine(f: &impl Fn(f64) -> f64, lo: f64, hi: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let mid = 0.5 * (lo + hi);
        let left = gl20(f, lo, mid);
        let right = gl20(f, mid, hi);
        let floor = 8.0 * f64::EPSILON * (left + right).abs();
        if depth == 0 || (left + right - whole).abs() <= tol.max(floor) {
            return left + right;
        }
        refine(f, lo, mid, left, 0.5 * tol, depth - 1) + refine(f, mid, hi, right, 0.5 * tol, depth - 1)
    }

    /// `P(Z1 <= a, Z2 <= b)` as `int_{-inf}^{a} phi(x) Phi((b - rho x)/s) dx`,
    /// accurate in relative terms for small probabilities.
    ///
    /// The integrand is log-concave, hence unimodal, so panels are laid out
    /// leftward from `a` (finest next to `a`) until it is both decreasing and
    /// negligible.
    fn lower_tail(a: f64, b: f64, rho: f64) -> f64 {
        let s = ((1.0 - rho) * (1.0 + rho)).sqrt();
        let f = |x: f64| pdf(x) * cdf((b - rho * x) / s);
        let mut total = 0.0;
        let mut hi = a;
        let mut width = 1.0 / 64.0;
        while hi > -40.0 {
            let lo = hi - width;
            let whole = gl20(&f, lo, hi);
            let part = refine(&f, lo, hi, whole, 1e-14 * whole.abs(), 12);
            total += part;
            if part <= 1e-17 * total && f(lo) <= f(hi) {
                break;
            }
            hi = lo;
            width = (2.0 * width).min(1.0);
        }
        total
    }

    // Gauss-Legendre half-rules (weight, negative node) with 6, 12 and 20 points.
    const GL6: [(f64, f64); 3] = [
        (0.171_324_492_379_170_5, -0.932_469_514_203_152_2),
        (0.360_761_573_048_138_4, -0.661_209_386_466_264_7),
        (0.467_913_934_572_690_4, -0.238_619_186_083_197_0),
    ];
    const GL12: [(f64, f64); 6] = [
        (0.047_175_336_386_511_77, -0.981_560_634_246_719_1),
        (0.106_939_325_995_318_3, -0.904_117_256_370_475_0),
        (0.160_078_328_543_346_4, -0.769_902_674_194_305_0),
        (0.203_167_426_723_065_9, -0.587_317_954_286_617_1),
        (0.233_492_536_538_354_7, -0.367_831_498_998_180_2),
        (0.249_147_045_813_402_9, -0.125_233_408_511_469_2),
    ];
    const GL20: [(f64, f64); 10] = [
        (0.017_614_007_139_152_12, -0.993_128_599_185_094_9),
        (0.040_601_429_800_386_94, -0.963_971_927_277_913_8),
        (0.062_672_048_334_109_06, -0.912_234_428_251_325_9),
        (0.083_276_741_576_704_75, -0.839_116_971_822_218_8),
        (0.101_930_119_817_240_4, -0.746_331_906_460_150_8),
        (0.118_194_531_961_518_4, -0.636_053_680_726_515_0),
        (0.131_688_638_449_176_6, -0.510_867_001_950_827_1),
        (0.142_096_109_318_382_1, -0.373_706_088_715_419_6),
        (0.149_172_986_472_603_7, -0.227_785_851_141_645_1),
        (0.152_753_387_130_725_9, -0.076_526_521_133_497_33),
    ];

    /// `P(X > h, Y > k)` for `|r| < 1`, Drezner-Wesolowsky quadrature over the
    /// correlation with Genz's refinements near `|r| = 1`.
    fn upper_orthant(h: f64, k: f64, r: f64) -> f64 {
        let rule: &[(f64, f64)] = if r.abs() < 0.3 {
            &GL6
        } else if r.abs() < 0.75 {
            &GL12
        } else {
            &GL20
        };
        let two_pi = 2.0 * PI;
        let mut hk = h * k;
        if r.abs() < 0.925 {
            let hs = 0.5 * (h * h + k * k);
            let asr = r.asin();
            let mut acc = 0.0;
            for &(w, x) in rule {
                for node in [x, -x] {
                    let sn = (0.5 * asr * (node + 1.0)).sin();
                    acc += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
                }
            }
            return acc * asr / (2.0 * two_pi) + cdf(-h) * cdf(-k);
        }
        let mut k = k;
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        let a_s = (1.0 - r) * (1.0 + r);
        let mut a = a_s.sqrt();
        let b_s = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        let mut acc = a
            * (-0.5 * (b_s / a_s + hk)).exp()
            * (1.0 - c * (b_s - a_s) * (1.0 - d * b_s / 5.0) / 3.0 + c * d * a_s * a_s / 5.0);
        if hk > -160.0 {
            let b = b_s.sqrt();
            acc -= (-0.5 * hk).exp()
                * two_pi.sqrt()
                * cdf(-b / a)
                * b
                * (1.0 - c * b_s * (1.0 - d * b_s / 5.0) / 3.0);
        }
        a *= 0.5;
        for &(w, x) in rule {
            let xs = (a * (x + 1.0)).powi(2);
            let rs = (1.0 - xs).sqrt();
            acc += a
                * w
                * ((-b_s / (2.0 * xs) - hk / (1.0 + rs)).exp() / rs
                    - (-0.5 * (b_s / xs + hk)).exp() * (1.0 + c * xs * (1.0 + d * xs)));
            let xs = a_s * (1.0 - x).powi(2) / 4.0;
            let rs = (1.0 - xs).sqrt();
            acc += a
                * w
                * (-0.5 * (b_s / xs + hk)).exp()
                * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs
                    - (1.0 + c * xs * (1.0 + d * xs)));
        }
        acc = -acc / two_pi;
        if r > 0.0 {
            acc + cdf(-h.max(k))
        } else {
            -acc + (cdf(-h) - cdf(-k)).max(0.0)
        }
    }
}
