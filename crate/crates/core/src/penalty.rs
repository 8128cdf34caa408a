//! Convex splitting of the logarithmic nonlinearity and its truncation.
//!
//! The term `½ s² log s²` is written as `F2(s) − F1(s)` where `F1` is convex
//! and nonnegative and `F2` vanishes near the origin and grows like a power.
//! Outside the selected enlarged wells the derivative of `F2` is replaced by a
//! linear function of slope `l` above the threshold `a0`, where
//! `F2'(a0) / a0 = l`.


use crate::error::{Error, Result};

/// Below this magnitude `s² log s²` is evaluated as zero.
const LOG_GUARD: f64 = 1e-150;

/// Magnitude below which `F1'(s)/s` is frozen at its value here.
const WEIGHT_FLOOR: f64 = 1e-150;

/// `s² log s²` with its limit value `0` at `s = 0`.
#[inline]
pub fn s2_log_s2(s: f64) -> f64 {
    let a = s.abs();
    if a < LOG_GUARD {
        0.0
    } else {
        2.0 * s * s * a.ln()
    }
}

/// Largest admissible splitting threshold; `F1` is convex on `(0, δ)` iff `δ ≤ e^{-3/2}`.
pub fn delta_max() -> f64 {
    (-1.5f64).exp()
}

/// Default splitting threshold `δ = e^{-2}`.
pub fn default_delta() -> f64 {
    (-2.0f64).exp()
}

/// Default growth exponent used only by diagnostics.
pub fn default_growth_exponent(dim: usize) -> f64 {
    if dim <= 2 {
        3.0
    } else {
        let crit = 2.0 * dim as f64 / (dim as f64 - 2.0);
        0.5 * (2.0 + crit)
    }
}

/// Splitting and truncation constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenalizationParams {
    pub delta: f64,
    pub l: f64,
    pub a0: f64,
    pub p: f64,
}

impl PenalizationParams {
    /// Validates `(δ, l, p)` for spatial dimension `dim` and solves for `a0`.
    pub fn new(delta: f64, l: f64, p: f64, dim: usize) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::invalid("delta", "delta must be positive and finite"));
        }
        if delta > delta_max() {
            return Err(Error::invalid(
                "delta",
                format!("delta = {delta} exceeds e^(-3/2) = {}; F1 would not be convex", delta_max()),
            ));
        }
        if !(l > 0.0 && l < 1.0) {
            return Err(Error::invalid("l", format!("l = {l} must satisfy 0 < l < 1")));
        }
        if !(p.is_finite() && p > 2.0) {
            return Err(Error::invalid("p", format!("p = {p} must exceed 2")));
        }
        if dim >= 3 {
            let crit = 2.0 * dim as f64 / (dim as f64 - 2.0);
            if p >= crit {
                return Err(Error::invalid(
                    "p",
                    format!("p = {p} must be below the critical exponent {crit} for dim = {dim}"),
                ));
            }
        }
        let a0 = solve_a0(delta, l)?;
        Ok(Self { delta, l, a0, p })
    }

    pub fn with_defaults(dim: usize) -> Self {
        Self::new(default_delta(), 0.5, default_growth_exponent(dim), dim)
            .expect("default penalization parameters are valid")
    }

    pub fn f1(&self, s: f64) -> f64 {
        f1(self.delta, s)
    }

    pub fn df1(&self, s: f64) -> f64 {
        df1(self.delta, s)
    }

    pub fn f2(&self, s: f64) -> f64 {
        f2(self.delta, s)
    }

    pub fn df2(&self, s: f64) -> f64 {
        df2(self.delta, s)
    }

    /// `F1'(s)/s ≥ 0`, capped where `s` is numerically zero.
    ///
    /// `F1(s) = ψ(s²)` with `ψ` concave, so `½ (F1'(s₀)/s₀) s²` majorizes
    /// `F1(s)` up to a constant; this is the weight the flow treats implicitly.
    pub fn f1_weight(&self, s: f64) -> f64 {
        let a = s.abs();
        if a < WEIGHT_FLOOR {
            -(WEIGHT_FLOOR * WEIGHT_FLOOR).ln() - 1.0
        } else {
            self.df1(s) / s
        }
    }

    /// Truncated derivative `F̃2'`; callers pass `s ≥ 0`.
    pub fn df2_tilde(&self, s: f64) -> f64 {
        if s <= self.a0 {
            self.df2(s)
        } else {
            self.l * s
        }
    }

    /// Antiderivative of `F̃2'` vanishing at zero.
    pub fn f2_tilde(&self, s: f64) -> f64 {
        if s <= self.a0 {
            self.f2(s)
        } else {
            self.f2(self.a0) + 0.5 * self.l * (s * s - self.a0 * self.a0)
        }
    }

    /// `G2'(x, t)`: untruncated inside the enlarged selected wells.
    pub fn dg2(&self, in_gamma: bool, t: f64) -> f64 {
        if in_gamma {
            self.df2(t)
        } else {
            self.df2_tilde(t)
        }
    }

    /// `G2(x, t) = ∫_0^t G2'(x, s) ds`.
    pub fn g2(&self, in_gamma: bool, t: f64) -> f64 {
        if in_gamma {
            self.f2(t)
        } else {
            self.f2_tilde(t)
        }
    }
}

/// `F1`: convex, even, nonnegative part of the splitting.
pub fn f1(delta: f64, s: f64) -> f64 {
    let a = s.abs();
    if a < LOG_GUARD {
        0.0
    } else if a < delta {
        -0.5 * s2_log_s2(s)
    } else {
        -0.5 * s * s * ((delta * delta).ln() + 3.0) + 2.0 * delta * a - 0.5 * delta * delta
    }
}

pub fn df1(delta: f64, s: f64) -> f64 {
    let a = s.abs();
    if a < LOG_GUARD {
        0.0
    } else if a < delta {
        -s * (s * s).ln() - s
    } else {
        -s * ((delta * delta).ln() + 3.0) + 2.0 * delta * s.signum()
    }
}

/// `F2`: zero on `(-δ, δ)`, power growth beyond.
pub fn f2(delta: f64, s: f64) -> f64 {
    let a = s.abs();
    if a < delta {
        0.0
    } else {
        0.5 * s * s * (s * s / (delta * delta)).ln() + 2.0 * delta * a - 1.5 * s * s - 0.5 * delta * delta
    }
}

pub fn df2(delta: f64, s: f64) -> f64 {
    let a = s.abs();
    if a < delta {
        0.0
    } else {
        s * (s * s / (delta * delta)).ln() - 2.0 * s + 2.0 * delta * s.signum()
    }
}

/// `F2'(s)/s` for `s ≥ δ`.
fn slope_ratio(delta: f64, s: f64) -> f64 {
    (s * s / (delta * delta)).ln() - 2.0 + 2.0 * delta / s
}

/// Unique `a0 > δ` with `F2'(a0)/a0 = l`, by bisection on `[δ, 10⁶ δ]`.
pub fn solve_a0(delta: f64, l: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= delta_max()) {
        return Err(Error::invalid("delta", format!("delta = {delta} outside (0, e^(-3/2)]")));
    }
    if !(l > 0.0 && l < 1.0) {
        return Err(Error::invalid("l", format!("l = {l} must satisfy 0 < l < 1")));
    }
    let mut lo = delta;
    let mut hi = 1e6 * delta;
    let g = |s: f64| slope_ratio(delta, s) - l;
    if !(g(lo) <= 0.0 && g(hi) > 0.0) {
        return Err(Error::NoBracket { delta, l });
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let a0 = if g(lo).abs() <= g(hi).abs() { lo } else { hi };
    let residual = g(a0).abs();
    if residual >= 1e-12 {
        return Err(Error::NoBracket { delta, l });
    }
    Ok(a0)
}

/// Growth diagnostic: smallest `C` with `|F2'(s)| ≤ C |s|^{p-1}` over the samples.
pub fn fitted_growth_constant(params: &PenalizationParams, samples: &[f64]) -> f64 {
    samples
        .iter()
        .filter(|s| s.abs() > 0.0)
        .map(|&s| params.df2(s).abs() / s.abs().powf(params.p - 1.0))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn params() -> PenalizationParams {
        PenalizationParams::with_defaults(1)
    }

    #[test]
    fn f1_values() {
        let d = default_delta();
        assert_eq!(f1(d, 0.0), 0.0);
        assert!(close(f1(d, d), 2.0 * (-4.0f64).exp(), 1e-15));
        // both branches agree at δ
        let left = -0.5 * s2_log_s2(d);
        let right = -0.5 * d * d * ((d * d).ln() + 3.0) + 2.0 * d * d - 0.5 * d * d;
        assert!(close(left, right, 1e-16));
        for s in [0.01, 0.1, 0.5, 3.0] {
            assert_eq!(f1(d, s), f1(d, -s));
        }
    }

    #[test]
    fn df1_values() {
        let d = default_delta();
        assert_eq!(df1(d, 0.0), 0.0);
        assert!(close(df1(d, 1.0), 1.0 + 2.0 * (-2.0f64).exp(), 1e-14));
        let h = 1e-5;
        let fd = (f1(d, 0.05 + h) - f1(d, 0.05 - h)) / (2.0 * h);
        assert!(close(fd, df1(d, 0.05), 1e-6));
    }

    #[test]
    fn f2_values() {
        let d = default_delta();
        assert_eq!(f2(d, 0.5 * d), 0.0);
        let expected = 2.0 + 2.0 * (-2.0f64).exp() - 1.5 - 0.5 * (-4.0f64).exp();
        assert!(close(f2(d, 1.0), expected, 1e-14));
        for s in [0.3, 1.0, 2.0, 5.0] {
            assert!(close(f2(d, s) - f1(d, s), 0.5 * s2_log_s2(s), 1e-12));
        }
    }

    #[test]
    fn df2_values() {
        let d = default_delta();
        assert!(close(df2(d, d), 0.0, 1e-16));
        assert!(close(df2(d, 1.0), 2.0 + 2.0 * (-2.0f64).exp(), 1e-14));
        assert!(close(df2(d, 1.0) - df1(d, 1.0), 1.0, 1e-14));
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=2000 {
            let s = d + (10.0 - d) * i as f64 / 2000.0;
            let r = df2(d, s) / s;
            assert!(r >= prev - 1e-14);
            prev = r;
        }
    }

    fn bisect_oracle(d: f64, l: f64) -> f64 {
        // independent: plain bisection on F2'(s)/s − l computed from df2
        let (mut lo, mut hi) = (d * (1.0 + 1e-12), 100.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if df2(d, mid) / mid > l {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn a0_root() {
        let d = default_delta();
        let a0 = solve_a0(d, 0.5).unwrap();
        assert!(close(a0, bisect_oracle(d, 0.5), 1e-12));
        assert!(close(a0, 0.301_561_281_980_728_7, 1e-12));
        assert!((df2(d, a0) / a0 - 0.5).abs() < 1e-12);
        assert!(a0 > d);
        // l → 0⁺ pushes a0 down to δ
        let small = solve_a0(d, 1e-9).unwrap();
        assert!(small > d && small < d * 1.001);
    }

    #[test]
    fn a0_rejects_bad_params() {
        assert!(solve_a0(0.5, 0.5).is_err());
        assert!(solve_a0(default_delta(), 1.5).is_err());
        assert!(solve_a0(default_delta(), 0.0).is_err());
        assert!(PenalizationParams::new(0.5, 0.5, 3.0, 1).is_err());
        assert!(PenalizationParams::new(default_delta(), 1.5, 3.0, 1).is_err());
        assert!(PenalizationParams::new(default_delta(), 0.5, 6.0, 3).is_err());
        assert!(PenalizationParams::new(default_delta(), 0.5, 4.0, 3).is_ok());
    }

    #[test]
    fn truncation() {
        let p = params();
        assert!(close(p.df2_tilde(p.a0), p.l * p.a0, 1e-12));
        assert!(close(p.df2(p.a0), p.l * p.a0, 1e-12));
        assert_eq!(p.df2_tilde(0.0), 0.0);
        assert!(close(p.df2_tilde(2.0 * p.a0), 2.0 * p.l * p.a0, 1e-15));
    }

    #[test]
    fn switched_primitive() {
        let p = params();
        for i in 0..200 {
            let t = 3.0 * i as f64 / 199.0;
            assert_eq!(p.g2(true, t), p.f2(t));
            if t <= p.a0 {
                assert_eq!(p.g2(false, t), p.f2(t));
            }
            assert!(p.g2(false, t) <= p.f2(t) + 1e-15);
        }
        assert!(p.g2(false, 2.0 * p.a0) < p.f2(2.0 * p.a0));
        // g2 outside Γ integrates dg2
        let n = 20000;
        let t = 1.7;
        let h = t / n as f64;
        let quad: f64 = (0..n)
            .map(|i| {
                let a = i as f64 * h;
                (p.dg2(false, a) + 4.0 * p.dg2(false, a + 0.5 * h) + p.dg2(false, a + h)) * h / 6.0
            })
            .sum();
        assert!(close(quad, p.g2(false, t), 1e-9));
    }

    #[test]
    fn growth_constant_bounds_samples() {
        let p = params();
        let samples: Vec<f64> = (1..2000).map(|i| i as f64 * 0.005).collect();
        let c = fitted_growth_constant(&p, &samples);
        assert!(c.is_finite() && c > 0.0);
        for &s in &samples {
            assert!(p.df2(s).abs() <= c * s.powf(p.p - 1.0) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn second_difference_of_f1_is_nonnegative() {
        let d = default_delta();
        let h = 1e-3;
        for i in 0..=10_000 {
            let s = -5.0 + 10.0 * i as f64 / 10_000.0;
            let dd = f1(d, s + h) - 2.0 * f1(d, s) + f1(d, s - h);
            assert!(dd >= -1e-10, "s = {s}: {dd}");
        }
    }

    #[test]
    fn f1_weight_is_nonnegative_and_majorizes() {
        let p = params();
        for i in 0..400 {
            let s0 = 10f64.powf(-8.0 + 9.0 * i as f64 / 399.0);
            let w = p.f1_weight(s0);
            assert!(w >= 0.0);
            for j in 0..50 {
                let s = 3.0 * j as f64 / 49.0;
                let major = p.f1(s0) + 0.5 * w * (s * s - s0 * s0);
                assert!(p.f1(s) <= major + 1e-12, "s0 {s0} s {s}");
            }
        }
        assert!(p.f1_weight(0.0) > 600.0);
    }

    proptest! {
        #[test]
        fn splitting_identity(s in -50.0f64..50.0) {
            let d = default_delta();
            let lhs = f2(d, s) - f1(d, s);
            prop_assert!((lhs - 0.5 * s2_log_s2(s)).abs() <= 1e-12 * (1.0 + s * s));
        }

        #[test]
        fn sign_and_parity(s in -20.0f64..20.0) {
            let p = params();
            prop_assert!(p.df1(s) * s >= 0.0);
            prop_assert!(p.f1(s) >= 0.0);
            prop_assert_eq!(p.df1(-s), -p.df1(s));
            prop_assert_eq!(p.df2(-s), -p.df2(s));
            prop_assert_eq!(p.f2(-s), p.f2(s));
        }

        #[test]
        fn truncation_bound(s in 0.0f64..50.0) {
            let p = params();
            prop_assert!(p.df2_tilde(s) * s <= p.l * s * s + 1e-14);
        }

        #[test]
        fn derivatives_match_differences(s in 0.2f64..8.0) {
            let d = default_delta();
            let h = 1e-5;
            let fd1 = (f1(d, s + h) - f1(d, s - h)) / (2.0 * h);
            let fd2 = (f2(d, s + h) - f2(d, s - h)) / (2.0 * h);
            prop_assert!((fd1 - df1(d, s)).abs() < 1e-6 * (1.0 + s * s));
            prop_assert!((fd2 - df2(d, s)).abs() < 1e-6 * (1.0 + s * s));
        }
    }
}
