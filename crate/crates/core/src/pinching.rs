//! Pinching thresholds for `sup |S|`: the quadratic `F(x) = -x^2 + b(t) x + a(t)`
//! in `x = |S|`, its positive root `G(t)` over `t = |T|^2 in [0, 1]`, and
//! the resulting classification.

use serde::{Deserialize, Serialize};

use crate::ambient::AmbientParams;
use crate::defaults::{BOUNDARY_VERDICT_TOL, HYPOTHESIS_GRID, ORACLE_TOL};
use crate::error::{GeomError, Result};

fn alpha_of(h: f64, params: &AmbientParams) -> Result<f64> {
    params.require_bundle()?;
    let r2 = h * h + params.tau * params.tau;
    if !(r2 > 0.0) {
        return Err(GeomError::ArUndefined);
    }
    Ok(params.bundle_defect() / (2.0 * r2.sqrt()))
}

/// `(a(t), b(t), h(t) = b^2 + 4a)`.
pub fn coefficients(h: f64, params: AmbientParams, t: f64) -> Result<(f64, f64, f64)> {
    if !(0.0..=1.0).contains(&t) {
        return Err(GeomError::OutOfRange(format!("t = {t} outside [0, 1]")));
    }
    let alpha = alpha_of(h, &params)?;
    let d = params.bundle_defect();
    let r2 = h * h + params.tau * params.tau;
    let a = 2.0 * d + 2.0 * r2 - 2.0 * d * t - 0.5 * alpha * alpha * t * t;
    let b = -2.0 * alpha.abs() * t;
    Ok((a, b, b * b + 4.0 * a))
}

/// `F(x) = -x^2 + b x + a`.
pub fn quadratic(a: f64, b: f64, x: f64) -> f64 {
    -x * x + b * x + a
}

/// `G(t) = (b + sqrt(b^2 + 4a)) / 2`.
pub fn g_of_t(h: f64, params: AmbientParams, t: f64) -> Result<f64> {
    let (_, b, disc) = coefficients(h, params, t)?;
    if disc < 0.0 {
        return Err(GeomError::NoRealRoot { t, h: disc });
    }
    Ok(0.5 * (b + disc.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    /// `kappa - 4 tau^2 > 0`.
    Positive,
    /// `kappa - 4 tau^2 < 0`.
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub value: f64,
    pub g0: f64,
    pub g1: f64,
    pub case: Case,
    pub hypotheses_ok: bool,
    /// The case inequality alone, before the grid check of `a, h > 0`.
    pub case_condition: bool,
    /// Whether the case's single-entry claim (`G(0)` for the positive case,
    /// `G(1)` for the negative one) equals the minimum.
    pub case_claim_consistent: bool,
}

/// `min{G(0), G(1)}` from the closed-form endpoint values, with hypothesis flags.
pub fn threshold(h: f64, params: AmbientParams) -> Result<Threshold> {
    let alpha = alpha_of(h, &params)?;
    let d = params.bundle_defect();
    let r2 = h * h + params.tau * params.tau;
    let g0 = (2.0 * (r2 + d)).max(0.0).sqrt();
    let g1 = -alpha.abs() + (2.0 * r2 + 0.5 * alpha * alpha).max(0.0).sqrt();
    let value = g0.min(g1);
    let case = if d > 0.0 { Case::Positive } else { Case::Negative };
    let case_condition = match case {
        Case::Positive => 4.0 * r2 > d,
        Case::Negative => r2 > d.abs(),
    };
    let mut grid_ok = r2 + d >= 0.0;
    for k in 0..=HYPOTHESIS_GRID {
        let t = k as f64 / HYPOTHESIS_GRID as f64;
        let (a, _, disc) = coefficients(h, params, t)?;
        grid_ok &= a > 0.0 && disc > 0.0;
    }
    let claimed = match case {
        Case::Positive => g0,
        Case::Negative => g1,
    };
    Ok(Threshold {
        value,
        g0,
        g1,
        case,
        hypotheses_ok: case_condition && grid_ok,
        case_condition,
        case_claim_consistent: (claimed - value).abs() <= ORACLE_TOL,
    })
}

/// Brute-force `min G` over `n + 1` uniform samples of `[0, 1]`.
pub fn threshold_oracle(h: f64, params: AmbientParams, n: usize) -> Result<f64> {
    if n < 1000 {
        return Err(GeomError::OutOfRange(format!("oracle grid {n} < 1000")));
    }
    let mut best = f64::INFINITY;
    for k in 0..=n {
        let t = k as f64 / n as f64;
        best = best.min(g_of_t(h, params, t)?);
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    ArRegime,
    BoundaryHopf,
    Inconclusive,
    HypothesesFail,
}

pub fn classify(sup_s: f64, h: f64, params: AmbientParams) -> Result<Verdict> {
    if !(sup_s >= 0.0) {
        return Err(GeomError::OutOfRange(format!("sup |S| = {sup_s} must be nonnegative")));
    }
    let th = threshold(h, params)?;
    Ok(if !th.hypotheses_ok {
        Verdict::HypothesesFail
    } else if (sup_s - th.value).abs() <= BOUNDARY_VERDICT_TOL {
        Verdict::BoundaryHopf
    } else if sup_s < th.value {
        Verdict::ArRegime
    } else {
        Verdict::Inconclusive
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn worked() -> AmbientParams {
        AmbientParams::new(4.0, 0.5).unwrap()
    }

    #[test]
    fn coefficient_examples() {
        let (a, b, _) = coefficients(1.0, worked(), 0.0).unwrap();
        assert_abs_diff_eq!(a, 8.5, epsilon = 1e-14);
        assert_eq!(b, 0.0);
        let (a, b, _) = coefficients(1.0, worked(), 1.0).unwrap();
        assert_abs_diff_eq!(a, 1.6, epsilon = 1e-14);
        assert_abs_diff_eq!(b, -2.6832815729997477, epsilon = 1e-12);
        assert!(coefficients(1.0, worked(), 1.5).is_err());
    }

    #[test]
    fn space_form_rejected() {
        assert!(coefficients(1.0, AmbientParams::space_form(1.0, 0.5).unwrap(), 0.5).is_err());
        assert!(threshold(1.0, AmbientParams::space_form(0.0, 0.0).unwrap()).is_err());
    }

    #[test]
    fn worked_point() {
        let th = threshold(1.0, worked()).unwrap();
        assert_abs_diff_eq!(th.g0, 8.5f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(th.g0, 2.91548, epsilon = 5e-6);
        assert_abs_diff_eq!(th.g1, 0.50227, epsilon = 5e-6);
        assert_eq!(th.value, th.g1);
        assert!(th.hypotheses_ok);
        assert!(!th.case_claim_consistent);
        assert_abs_diff_eq!(g_of_t(1.0, worked(), 0.0).unwrap(), th.g0, epsilon = 1e-14);
        assert_abs_diff_eq!(g_of_t(1.0, worked(), 1.0).unwrap(), th.g1, epsilon = 1e-14);
    }

    #[test]
    fn negative_case_point() {
        let p = AmbientParams::new(-1.0, 0.0).unwrap();
        let th = threshold(2.0, p).unwrap();
        assert!(th.hypotheses_ok);
        assert_abs_diff_eq!(th.g0, 6f64.sqrt(), epsilon = 1e-14);
        let o = threshold_oracle(2.0, p, 100_000).unwrap();
        assert!((o - th.value).abs() < 1e-6);
    }

    #[test]
    fn classify_examples() {
        let th = threshold(1.0, worked()).unwrap();
        assert_eq!(classify(0.0, 1.0, worked()).unwrap(), Verdict::ArRegime);
        assert_eq!(classify(th.value, 1.0, worked()).unwrap(), Verdict::BoundaryHopf);
        assert_eq!(classify(1.0, 1.0, worked()).unwrap(), Verdict::Inconclusive);
        assert!(classify(-0.1, 1.0, worked()).is_err());
        let p = AmbientParams::new(4.0, 0.0).unwrap();
        assert_eq!(classify(0.0, 0.1, p).unwrap(), Verdict::HypothesesFail);
    }

    #[test]
    fn large_h_ratio_tends_to_one() {
        let th = threshold(1e4, worked()).unwrap();
        let r = th.value / (2.0f64.sqrt() * (1e8 + 0.25f64).sqrt());
        assert!((r - 1.0).abs() < 1e-3);
    }

    #[test]
    fn root_property_at_worked_point() {
        for k in 0..=20 {
            let t = k as f64 / 20.0;
            let (a, b, _) = coefficients(1.0, worked(), t).unwrap();
            let g = g_of_t(1.0, worked(), t).unwrap();
            assert!(quadratic(a, b, g).abs() < 1e-10);
        }
        assert_eq!(quadratic(1.0, 0.0, 1.0), 0.0);
    }
}
