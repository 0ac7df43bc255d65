//! Noiseless Stackelberg equilibria.
//!
//! The transmitter commits to `Y = X + a·θ` (the `X` coefficient is fixed to
//! one; the MMSE receiver undoes any rescaling of `Y`). The receiver answers
//! with `E[X | Y]`, or `E[X | Y, W]` when it holds side information, and the
//! transmitter picks `a` to minimize its own cost under that answer.
//!
//! Without side information the equilibrium is closed form:
//! `A = sqrt(1 + 4(r + ρ))`, `α = (A − 1) / (2(r + ρ))`. With side
//! information it is found numerically.

use serde::Serialize;

use crate::audit::{AuditReport, Check};
use crate::gaussian::{
    follower_response, CovMatrix, DistortionPair, FollowerResponse, ModelParams, THETA, W, X,
};
use crate::solver::{minimize_scalar, minimize_with_expansion, DEFAULT_TOL};
use crate::{rel_dev, Error, Result};

/// Relative tolerance between a closed form and its conditioning oracle.
pub const CLOSED_FORM_RTOL: f64 = 1e-9;
/// Relative tolerance for the transmitter-side-information invariance.
pub const TX_SI_RTOL: f64 = 1e-10;
/// Tolerance on equilibrium coefficients that pass through a numeric argmin.
pub const ARGMIN_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    /// Encoder θ-coefficient.
    pub alpha: f64,
    /// Decoder coefficient on `Y` (κ without side information).
    pub decoder_y: f64,
    /// Decoder coefficient on `W`; zero without side information.
    pub decoder_w: f64,
    pub distortions: DistortionPair,
    /// `A = sqrt(1 + 4(r_θ + ρ_Xθ))`.
    pub a_value: f64,
    pub method: Method,
}

/// `A = sqrt(1 + 4(r + ρ))`.
pub fn a_value(r: f64, rho: f64) -> f64 {
    (1.0 + 4.0 * (r + rho)).sqrt()
}

/// The no-side-information equilibrium coefficient.
///
/// Evaluated as `2 / (1 + A)`, which equals `(A − 1) / (2(r + ρ))` and stays
/// accurate (tending to 1) as `r + ρ → 0`.
pub fn closed_form_alpha(r: f64, rho: f64) -> f64 {
    2.0 / (1.0 + a_value(r, rho))
}

/// Closed-form equilibrium without side information, verified against the
/// conditioning oracle.
pub fn closed_form_equilibrium(r: f64, rho: f64, sigma_x2: f64) -> Result<EquilibriumReport> {
    let params = ModelParams::new(sigma_x2, rho, r);
    let cov = params.covariance()?;
    let s = r + rho;
    if s.abs() < 1e-12 {
        return Err(Error::Domain(format!("r + rho must be nonzero, got {s}")));
    }
    let a = a_value(r, rho);
    let alpha = closed_form_alpha(r, rho);
    let kappa = (1.0 + alpha * rho) / (1.0 + alpha * alpha * r + 2.0 * alpha * rho);
    // Using A − 1 = 4(r + ρ)/(A + 1), the printed costs
    //   D_E = σ²(1 + (A − 3)(r + ρ)/(A − 1)),
    //   D_D = σ²(r − ρ²)(A − 1)/(A(2r + Aρ + ρ))
    // reduce to the forms below, which do not cancel as r + ρ → 0.
    let d_e = sigma_x2 * (s * alpha).powi(2);
    let d_d = sigma_x2 * (r - rho * rho) * alpha / (a * (1.0 + alpha * rho));

    let oracle = follower_response(&cov, &[[1.0, alpha]])?;
    let floor = 1e-3 * sigma_x2;
    let checks = [
        ("decoder coefficient", kappa, oracle.coefficients[0], 1.0),
        ("transmitter distortion", d_e, oracle.distortions.d_e, floor),
        ("receiver distortion", d_d, oracle.distortions.d_d, floor),
    ];
    for (what, lhs, rhs, fl) in checks {
        if !(rel_dev(lhs, rhs, fl) <= CLOSED_FORM_RTOL) {
            return Err(Error::InternalInconsistency { what, lhs, rhs });
        }
    }

    Ok(EquilibriumReport {
        alpha,
        decoder_y: kappa,
        decoder_w: 0.0,
        distortions: DistortionPair::new(d_e, d_d),
        a_value: a,
        method: Method::ClosedForm,
    })
}

fn encoder_vector(cov: &CovMatrix, a: f64, b: f64) -> Vec<f64> {
    let mut y = vec![0.0; cov.dim()];
    y[X] = 1.0;
    y[THETA] = a;
    if b != 0.0 {
        y[W] = b;
    }
    y
}

fn unit(dim: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[i] = 1.0;
    v
}

/// Receiver best response to `Y = X + a·θ + b·W`, decoding from `Y` alone or
/// from `(Y, W)`.
pub fn encoder_response(
    params: &ModelParams,
    a: f64,
    b: f64,
    use_si: bool,
) -> Result<FollowerResponse> {
    if (use_si || b != 0.0) && !params.has_side_info() {
        return Err(Error::MissingSideInformation);
    }
    let cov = params.covariance()?;
    response_on(&cov, a, b, use_si)
}

fn response_on(cov: &CovMatrix, a: f64, b: f64, use_si: bool) -> Result<FollowerResponse> {
    let y = encoder_vector(cov, a, b);
    if use_si {
        follower_response(cov, &[y, unit(cov.dim(), W)])
    } else {
        follower_response(cov, &[y])
    }
}

/// Both agents' costs when the transmitter plays `Y = X + a·θ` and the
/// receiver best-responds.
pub fn encoder_objective(params: &ModelParams, a: f64, use_si: bool) -> Result<DistortionPair> {
    Ok(encoder_response(params, a, 0.0, use_si)?.distortions)
}

fn search_hint(params: &ModelParams) -> f64 {
    let s = params.r_theta + params.rho_xtheta;
    if s.abs() < 1e-12 {
        1.0
    } else {
        closed_form_alpha(params.r_theta, params.rho_xtheta)
    }
}

fn leader_argmin(cov: &CovMatrix, hint: f64, b: f64, use_si: bool) -> Result<f64> {
    let objective = |a: f64| {
        response_on(cov, a, b, use_si)
            .map(|r| r.distortions.d_e)
            .unwrap_or(f64::NAN)
    };
    Ok(minimize_with_expansion(objective, hint, DEFAULT_TOL)?.argmin)
}

/// Numeric Stackelberg equilibrium, with or without receiver side
/// information.
pub fn solve_stackelberg(params: &ModelParams, use_si: bool) -> Result<EquilibriumReport> {
    if use_si && !params.has_side_info() {
        return Err(Error::MissingSideInformation);
    }
    let cov = params.covariance()?;
    let alpha = leader_argmin(&cov, search_hint(params), 0.0, use_si)?;
    let resp = response_on(&cov, alpha, 0.0, use_si)?;
    Ok(EquilibriumReport {
        alpha,
        decoder_y: resp.coefficients[0],
        decoder_w: resp.coefficients.get(1).copied().unwrap_or(0.0),
        distortions: resp.distortions,
        a_value: a_value(params.r_theta, params.rho_xtheta),
        method: Method::Numeric,
    })
}

/// Checks that letting the transmitter mix `W` into its output changes
/// nothing when the receiver already conditions on `W`.
///
/// For every `b` in `b_grid` and every `a` on a fixed grid (plus the
/// equilibrium coefficient), distortions of `Y = X + aθ + bW` are compared
/// with `b = 0`; the leader's argmin over `a` with `b` held fixed is compared
/// with the `b = 0` equilibrium.
pub fn transmitter_si_audit(params: &ModelParams, b_grid: &[f64]) -> Result<AuditReport> {
    params.side_info()?;
    let cov = params.covariance()?;
    let eq = solve_stackelberg(params, true)?;
    let floor = 1e-3 * params.sigma_x2;

    let mut a_grid: Vec<f64> = (0..=40).map(|i| -5.0 + 0.25 * i as f64).collect();
    a_grid.push(eq.alpha);

    let mut max_dev = 0.0f64;
    for &a in &a_grid {
        let base = response_on(&cov, a, 0.0, true)?.distortions;
        for &b in b_grid {
            let mixed = response_on(&cov, a, b, true)?.distortions;
            max_dev = max_dev.max(mixed.max_rel_dev(&base, floor));
        }
    }

    let mut max_argmin_dev = 0.0f64;
    let hint = search_hint(params);
    for &b in b_grid {
        let a_b = leader_argmin(&cov, hint, b, true)?;
        max_argmin_dev = max_argmin_dev.max((a_b - eq.alpha).abs());
    }

    let mut report = AuditReport::new("tx-si");
    report.push(Check::below(
        "max relative distortion deviation",
        max_dev,
        TX_SI_RTOL,
    ));
    report.push(Check::below(
        "max equilibrium coefficient deviation",
        max_argmin_dev,
        ARGMIN_TOL,
    ));
    report.note(format!(
        "alpha_si = {:.12}, D_E = {:.12}, D_D = {:.12}",
        eq.alpha, eq.distortions.d_e, eq.distortions.d_d
    ));
    Ok(report)
}

/// Leader optimality on a local grid: the largest amount by which any `a`
/// with `|a − alpha| ∈ [tol, 1]` (201 points) beats `alpha`. Non-positive
/// means `alpha` is a grid-local minimum.
pub fn leader_improvement(params: &ModelParams, alpha: f64, use_si: bool) -> Result<f64> {
    let cov = params.covariance()?;
    let at = response_on(&cov, alpha, 0.0, use_si)?.distortions.d_e;
    let mut best = f64::NEG_INFINITY;
    for i in 0..201 {
        let off = -1.0 + 0.01 * i as f64;
        if off.abs() < DEFAULT_TOL {
            continue;
        }
        let d = response_on(&cov, alpha + off, 0.0, use_si)?.distortions.d_e;
        best = best.max(at - d);
    }
    Ok(best)
}

/// Scalar search on an explicit bracket, without the expansion policy.
pub fn leader_argmin_on(params: &ModelParams, bracket: (f64, f64), use_si: bool) -> Result<f64> {
    let cov = params.covariance()?;
    let f = |a: f64| {
        response_on(&cov, a, 0.0, use_si)
            .map(|r| r.distortions.d_e)
            .unwrap_or(f64::NAN)
    };
    Ok(minimize_scalar(f, bracket, DEFAULT_TOL)?.argmin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const GOLDEN: f64 = 0.618_033_988_749_894_9;

    #[test]
    fn golden_ratio_fixture() {
        let eq = closed_form_equilibrium(1.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(eq.a_value, 5f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(eq.alpha, GOLDEN, epsilon = 1e-15);
        assert_relative_eq!(eq.decoder_y, 0.723_606_797_749_979, epsilon = 1e-14);
        assert_relative_eq!(eq.distortions.d_e, 0.381_966_011_250_105, epsilon = 1e-14);
        assert_relative_eq!(eq.distortions.d_d, 0.276_393_202_250_021, epsilon = 1e-14);
        assert_eq!(eq.method, Method::ClosedForm);
    }

    #[test]
    fn printed_cost_formulas_agree_with_reduced_forms() {
        for (r, rho) in [(1.0, 0.0), (2.0, -0.3), (0.7, 0.5), (5.0, 2.0)] {
            let a = a_value(r, rho);
            let s = r + rho;
            let eq = closed_form_equilibrium(r, rho, 1.0).unwrap();
            let d_e = 1.0 + (a - 3.0) * s / (a - 1.0);
            let d_d = (r - rho * rho) * (a - 1.0) / (a * (2.0 * r + a * rho + rho));
            assert_relative_eq!(eq.alpha, (a - 1.0) / (2.0 * s), max_relative = 1e-13);
            assert_relative_eq!(eq.distortions.d_e, d_e, max_relative = 1e-12);
            assert_relative_eq!(eq.distortions.d_d, d_d, max_relative = 1e-12);
        }
    }

    #[test]
    fn homogeneous_in_source_variance() {
        let one = closed_form_equilibrium(1.3, 0.4, 1.0).unwrap();
        let two = closed_form_equilibrium(1.3, 0.4, 2.0).unwrap();
        assert_eq!(one.alpha, two.alpha);
        assert_relative_eq!(one.decoder_y, two.decoder_y, epsilon = 1e-15);
        assert_relative_eq!(
            2.0 * one.distortions.d_e,
            two.distortions.d_e,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            2.0 * one.distortions.d_d,
            two.distortions.d_d,
            max_relative = 1e-14
        );
    }

    #[test]
    fn alpha_tends_to_one_as_r_plus_rho_vanishes() {
        // r = 0.5, rho = -0.5 + 1e-6 has r > rho^2 and r + rho = 1e-6.
        let eq = closed_form_equilibrium(0.5, -0.5 + 1e-6, 1.0).unwrap();
        assert!((eq.alpha - 1.0).abs() < 1e-3);
        assert!(matches!(
            closed_form_equilibrium(0.5, -0.5, 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn closed_form_errors() {
        assert!(matches!(
            closed_form_equilibrium(1.0, 1.0, 1.0),
            Err(Error::DegeneratePrivateInfo { .. })
        ));
        assert!(matches!(
            closed_form_equilibrium(1.0, 0.0, -1.0),
            Err(Error::NonpositiveVariance { .. })
        ));
    }

    #[test]
    fn pure_source_encoder() {
        // a = 0: Y = X, so X̂ = X, D_D = 0 and D_E = E[θ²] = σ²r.
        let p = ModelParams::new(2.0, 0.3, 1.5);
        let d = encoder_objective(&p, 0.0, false).unwrap();
        assert!(d.d_d.abs() < 1e-15);
        assert_relative_eq!(d.d_e, 2.0 * 1.5, max_relative = 1e-14);
    }

    #[test]
    fn objective_at_alpha_matches_closed_form() {
        let (r, rho) = (2.0, -0.3);
        let cf = closed_form_equilibrium(r, rho, 1.0).unwrap();
        let d = encoder_objective(&ModelParams::new(1.0, rho, r), cf.alpha, false).unwrap();
        assert_relative_eq!(d.d_e, cf.distortions.d_e, max_relative = 1e-12);
        assert_relative_eq!(d.d_d, cf.distortions.d_d, max_relative = 1e-12);
    }

    #[test]
    fn uninformative_side_information_changes_nothing() {
        let plain = ModelParams::new(1.0, 0.2, 1.0);
        let si = plain.with_side_info(0.0, 0.0, 2.0);
        for a in [-1.0, 0.3, 0.7, 2.0] {
            let x = encoder_objective(&plain, a, false).unwrap();
            let y = encoder_objective(&si, a, true).unwrap();
            assert_relative_eq!(x.d_e, y.d_e, max_relative = 1e-14);
            assert_relative_eq!(x.d_d, y.d_d, max_relative = 1e-14);
        }
        let a = solve_stackelberg(&plain, false).unwrap();
        let b = solve_stackelberg(&si, true).unwrap();
        assert!((a.alpha - b.alpha).abs() < 1e-9);
        assert!(b.decoder_w.abs() < 1e-14);
    }

    #[test]
    fn numeric_matches_closed_form() {
        let eq = solve_stackelberg(&ModelParams::new(1.0, 0.0, 1.0), false).unwrap();
        assert!((eq.alpha - GOLDEN).abs() < 1e-9);
        assert_eq!(eq.method, Method::Numeric);
    }

    #[test]
    fn side_information_regression_fixture() {
        // Frozen from an independent dense-grid + Brent search over
        // a ∈ [−10, 10] on the same quadratic form.
        let p = ModelParams::new(1.0, 0.2, 1.0).with_side_info(0.4, 0.3, 1.0);
        let eq = solve_stackelberg(&p, true).unwrap();
        assert!((eq.alpha - 0.589_890_940_8).abs() < 1e-6);
        assert!((eq.alpha - closed_form_alpha(1.0, 0.2)).abs() > 1e-3);
        assert_relative_eq!(eq.distortions.d_e, 0.496_007_968_159, max_relative = 1e-9);
        assert_relative_eq!(eq.distortions.d_d, 0.210_834_993_154, max_relative = 1e-8);
        assert_relative_eq!(eq.decoder_y, 0.709_165_006_85, max_relative = 1e-6);
        assert_relative_eq!(eq.decoder_w, -0.009_165_006_85, max_relative = 1e-4);
        assert!(leader_improvement(&p, eq.alpha, true).unwrap() <= 1e-10);
    }

    #[test]
    fn follower_coefficients_are_exact_conditional() {
        let p = ModelParams::new(1.0, 0.2, 1.0).with_side_info(0.4, 0.3, 1.0);
        let eq = solve_stackelberg(&p, true).unwrap();
        // (Y, W) covariance for Y = X + αθ by hand.
        let a = eq.alpha;
        let vy = 1.0 + 2.0 * a * 0.2 + a * a;
        let cyw = 0.4 + a * 0.3;
        let cxy = 1.0 + a * 0.2;
        let det = vy * 1.0 - cyw * cyw;
        let b = (cxy * 1.0 - cyw * 0.4) / det;
        let c = (vy * 0.4 - cyw * cxy) / det;
        assert!((eq.decoder_y - b).abs() < 1e-12);
        assert!((eq.decoder_w - c).abs() < 1e-12);
    }

    #[test]
    fn tx_si_audit_passes() {
        let p = ModelParams::new(1.0, 0.2, 1.0).with_side_info(0.4, 0.3, 1.0);
        let report = transmitter_si_audit(&p, &[0.0, -2.0, -1.0, 1.0, 5.0]).unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn tx_si_audit_requires_side_info() {
        assert_eq!(
            transmitter_si_audit(&ModelParams::new(1.0, 0.0, 1.0), &[1.0]),
            Err(Error::MissingSideInformation)
        );
    }
}
