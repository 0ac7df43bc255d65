//! Noisy channel `Y = U + N` with a transmit power constraint.
//!
//! Encoders are linear, `U = γ·(X + α·θ + w·W)`, with `γ` chosen so that
//! `E[U²] = P_T` exactly; the receiver decodes `X̂ = d_y·Y + d_w·W`.

use serde::{Deserialize, Serialize};

use crate::audit::{AuditReport, Check};
use crate::equilibrium::closed_form_alpha;
use crate::gaussian::{follower_response, CovMatrix, DistortionPair, ModelParams, THETA, W, X};
use crate::rd::{beta_star, wz_distortions, wz_sigma_s2};
use crate::solver::{minimize_with_expansion, DEFAULT_TOL};
use crate::{rel_dev, Error, Result};

/// Matching-condition residual threshold.
pub const MATCH_TOL: f64 = 1e-9;
/// `I(Y; W)` threshold (bits) at a matched test channel.
pub const INDEPENDENCE_TOL: f64 = 1e-9;
/// Fixed-point tolerance `|β*(C) − α|`.
pub const FIXED_POINT_TOL: f64 = 1e-4;
/// Relative distortion gap below which the single-letter scheme is taken to
/// meet the outer bound.
pub const GAP_RTOL: f64 = 1e-6;
const POWER_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelParams {
    /// Transmit power constraint `P_T`.
    pub p_t: f64,
    /// Channel noise variance `σ_N²`.
    pub sigma_n2: f64,
}

impl ChannelParams {
    pub fn new(p_t: f64, sigma_n2: f64) -> Self {
        Self { p_t, sigma_n2 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_t > 0.0) || !self.p_t.is_finite() {
            return Err(Error::NonpositiveVariance {
                name: "p_t",
                value: self.p_t,
            });
        }
        if !(self.sigma_n2 > 0.0) || !self.sigma_n2.is_finite() {
            return Err(Error::NonpositiveVariance {
                name: "sigma_n2",
                value: self.sigma_n2,
            });
        }
        Ok(())
    }

    pub fn snr(&self) -> f64 {
        self.p_t / self.sigma_n2
    }
}

/// Linear encoder/decoder pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearStrategyPair {
    /// Gain `γ`.
    pub enc_scale: f64,
    /// θ-coefficient inside the gain.
    pub enc_alpha: f64,
    /// W-coefficient inside the gain; zero when the encoder lacks `W`.
    #[serde(default)]
    pub enc_w: f64,
    pub dec_y: f64,
    #[serde(default)]
    pub dec_w: f64,
}

impl LinearStrategyPair {
    /// Same pair with both the encoder gain and the decoder negated.
    pub fn sign_flipped(&self) -> Self {
        Self {
            enc_scale: -self.enc_scale,
            dec_y: -self.dec_y,
            ..*self
        }
    }
}

/// Channel capacity `½ log₂(1 + P_T/σ_N²)` in bits.
pub fn capacity(channel: &ChannelParams) -> Result<f64> {
    channel.validate()?;
    Ok(0.5 * channel.snr().ln_1p() / std::f64::consts::LN_2)
}

/// Exact costs and transmit power of a fixed (not necessarily optimal) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairEvaluation {
    pub distortions: DistortionPair,
    pub power: f64,
}

/// Base covariance of `(X, θ[, W], N)`; `N` has variance zero without a
/// channel.
fn noisy_cov(params: &ModelParams, channel: Option<&ChannelParams>) -> Result<CovMatrix> {
    if let Some(c) = channel {
        c.validate()?;
    }
    params.covariance_with_noise(&[channel.map_or(0.0, |c| c.sigma_n2)])
}

fn encoder_vector(params: &ModelParams, dim: usize, pair: &LinearStrategyPair) -> Result<Vec<f64>> {
    let mut u = vec![0.0; dim];
    u[X] = pair.enc_scale;
    u[THETA] = pair.enc_scale * pair.enc_alpha;
    if pair.enc_w != 0.0 {
        if !params.has_side_info() {
            return Err(Error::InconsistentStrategy(
                "enc_w requires side information".into(),
            ));
        }
        u[W] = pair.enc_scale * pair.enc_w;
    }
    Ok(u)
}

/// Evaluates a pair exactly. Without a channel `Y = U`.
pub fn evaluate_pair(
    params: &ModelParams,
    channel: Option<&ChannelParams>,
    pair: &LinearStrategyPair,
) -> Result<PairEvaluation> {
    if pair.dec_w != 0.0 && !params.has_side_info() {
        return Err(Error::InconsistentStrategy(
            "dec_w requires side information".into(),
        ));
    }
    let cov = noisy_cov(params, channel)?;
    let n = cov.dim();
    let u = encoder_vector(params, n, pair)?;
    let mut y = u.clone();
    y[n - 1] = 1.0;
    let mut xhat: Vec<f64> = y.iter().map(|v| pair.dec_y * v).collect();
    if params.has_side_info() {
        xhat[W] += pair.dec_w;
    }
    let err = |target: &[usize]| -> Result<f64> {
        let mut e: Vec<f64> = xhat.iter().map(|v| -v).collect();
        for &t in target {
            e[t] += 1.0;
        }
        cov.quadratic_form(&e)
    };
    Ok(PairEvaluation {
        distortions: DistortionPair::new(err(&[X, THETA])?, err(&[X])?),
        power: cov.quadratic_form(&u)?,
    })
}

/// Gain that puts `X + aθ (+ wW)` at full power.
fn full_power_gain(cov: &CovMatrix, p_t: f64, a: f64, w: f64) -> Result<f64> {
    let mut v = vec![0.0; cov.dim()];
    v[X] = 1.0;
    v[THETA] = a;
    if w != 0.0 {
        v[W] = w;
    }
    let var = cov.quadratic_form(&v)?;
    if !(var > 0.0) {
        return Err(Error::Domain("encoder output has zero variance".into()));
    }
    Ok((p_t / var).sqrt())
}

/// Full-power encoder with θ-coefficient `a` and the receiver's MMSE reply.
pub(crate) fn best_pair(
    params: &ModelParams,
    cov: &CovMatrix,
    channel: &ChannelParams,
    a: f64,
    use_si: bool,
) -> Result<(LinearStrategyPair, DistortionPair)> {
    let gamma = full_power_gain(cov, channel.p_t, a, 0.0)?;
    let n = cov.dim();
    let pair0 = LinearStrategyPair {
        enc_scale: gamma,
        enc_alpha: a,
        enc_w: 0.0,
        dec_y: 0.0,
        dec_w: 0.0,
    };
    let mut y = encoder_vector(params, n, &pair0)?;
    y[n - 1] = 1.0;
    let resp = if use_si {
        let mut w = vec![0.0; n];
        w[W] = 1.0;
        follower_response(cov, &[y, w])?
    } else {
        follower_response(cov, &[y])?
    };
    let pair = LinearStrategyPair {
        dec_y: resp.coefficients[0],
        dec_w: resp.coefficients.get(1).copied().unwrap_or(0.0),
        ..pair0
    };
    let power = cov.quadratic_form(&encoder_vector(params, n, &pair)?)?;
    if (power - channel.p_t).abs() > POWER_RTOL * channel.p_t {
        return Err(Error::InternalInconsistency {
            what: "transmit power",
            lhs: power,
            rhs: channel.p_t,
        });
    }
    Ok((pair, resp.distortions))
}

/// Uncoded non-strategic transmission (no `θ`): `U = sqrt(P_T/σ_X²)·X`,
/// `X̂ = σ_X² sqrt(P_T/σ_X²) / (P_T + σ_N²) · Y`. Here `D_E = D_D`.
pub fn goblick_mappings(
    sigma_x2: f64,
    channel: &ChannelParams,
) -> Result<(LinearStrategyPair, DistortionPair)> {
    if !(sigma_x2 > 0.0) {
        return Err(Error::NonpositiveVariance {
            name: "sigma_x2",
            value: sigma_x2,
        });
    }
    let c = capacity(channel)?;
    let (p, n) = (channel.p_t, channel.sigma_n2);
    let gamma = (p / sigma_x2).sqrt();
    let dec_y = sigma_x2 * gamma / (p + n);
    let d_d = sigma_x2 * n / (p + n);

    // Oracle on (X, N).
    let cov = CovMatrix::from_rows(&[&[sigma_x2, 0.0], &[0.0, n]])?;
    let joint = crate::gaussian::lincomb_cov(&cov, &[[1.0, 0.0], [gamma, 1.0]])?;
    let cond = crate::gaussian::conditional(&joint, 0, &[1])?;
    if rel_dev(cond.coefficients[0], dec_y, 1.0) > 1e-12 {
        return Err(Error::InternalInconsistency {
            what: "uncoded decoder gain",
            lhs: dec_y,
            rhs: cond.coefficients[0],
        });
    }
    let opta = 0.5 * (sigma_x2 / d_d).log2();
    if (opta - c).abs() > 1e-12 * c.max(1.0) {
        return Err(Error::InternalInconsistency {
            what: "OPTA identity",
            lhs: opta,
            rhs: c,
        });
    }
    Ok((
        LinearStrategyPair {
            enc_scale: gamma,
            enc_alpha: 0.0,
            enc_w: 0.0,
            dec_y,
            dec_w: 0.0,
        },
        DistortionPair::new(d_d, d_d),
    ))
}

/// Strategic uncoded transmission without side information: the noiseless
/// equilibrium coefficient at full power, MMSE decoder.
pub fn strategic_uncoded_no_si(
    r: f64,
    rho: f64,
    sigma_x2: f64,
    channel: &ChannelParams,
) -> Result<(LinearStrategyPair, DistortionPair)> {
    let params = ModelParams::new(sigma_x2, rho, r);
    let cov = noisy_cov(&params, Some(channel))?;
    best_pair(&params, &cov, channel, closed_form_alpha(r, rho), false)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearSiSolution {
    /// Numeric single-letter Stackelberg solution.
    pub pair: LinearStrategyPair,
    pub distortions: DistortionPair,
    /// Cross-check: the same construction with the no-side-information
    /// equilibrium coefficient.
    pub literal_pair: LinearStrategyPair,
    pub literal_distortions: DistortionPair,
}

/// Best full-power linear encoder `U = γ(a)(X + aθ)` against the receiver
/// `E[X | Y, W]`.
pub fn linear_si_strategies(
    params: &ModelParams,
    channel: &ChannelParams,
) -> Result<LinearSiSolution> {
    params.side_info()?;
    let cov = noisy_cov(params, Some(channel))?;
    let alpha = closed_form_alpha(params.r_theta, params.rho_xtheta);
    let objective = |a: f64| {
        best_pair(params, &cov, channel, a, true)
            .map(|(_, d)| d.d_e)
            .unwrap_or(f64::NAN)
    };
    let a_star = minimize_with_expansion(objective, alpha, DEFAULT_TOL)?.argmin;
    let (pair, distortions) = best_pair(params, &cov, channel, a_star, true)?;
    let (literal_pair, literal_distortions) = best_pair(params, &cov, channel, alpha, true)?;
    Ok(LinearSiSolution {
        pair,
        distortions,
        literal_pair,
        literal_distortions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchingReport {
    pub holds: bool,
    /// `|ρ_XW + ρ_θW · β(C)|`.
    pub residual: f64,
    pub beta_at_capacity: f64,
    pub capacity: f64,
    /// `I(Y; W)` at the capacity-rate test channel, bits.
    pub i_yw: f64,
}

/// Evaluates the matching condition `ρ_XW = −ρ_θW · β(C)`.
pub fn matching_condition(params: &ModelParams, channel: &ChannelParams) -> Result<MatchingReport> {
    let si = params.side_info()?;
    let c = capacity(channel)?;
    let pt = beta_star(params, c)?;
    let residual = (si.rho_xw + si.rho_thetaw * pt.beta).abs();
    let holds = residual < MATCH_TOL;
    if holds && !(pt.i_yw < INDEPENDENCE_TOL) {
        return Err(Error::InternalInconsistency {
            what: "I(Y;W) at a matched test channel",
            lhs: pt.i_yw,
            rhs: 0.0,
        });
    }
    Ok(MatchingReport {
        holds,
        residual,
        beta_at_capacity: pt.beta,
        capacity: c,
        i_yw: pt.i_yw,
    })
}

/// Side-information statistics that satisfy the matching condition:
/// `ρ_XW = −ρ_θW · α`. The result is checked for positive definiteness and
/// for the fixed point `β*(C) = α` with `I(Y; W) = 0`.
pub fn construct_matched_params(
    r_theta: f64,
    rho_xtheta: f64,
    rho_thetaw: f64,
    r_w: f64,
    sigma_x2: f64,
    channel: &ChannelParams,
) -> Result<ModelParams> {
    ModelParams::new(sigma_x2, rho_xtheta, r_theta).covariance()?;
    if !(r_w > 0.0) {
        return Err(Error::NonpositiveVariance {
            name: "r_w",
            value: r_w,
        });
    }
    let alpha = closed_form_alpha(r_theta, rho_xtheta);
    // `-0.0` would print oddly.
    let rho_xw = if rho_thetaw == 0.0 {
        0.0
    } else {
        -rho_thetaw * alpha
    };
    let params =
        ModelParams::new(sigma_x2, rho_xtheta, r_theta).with_side_info(rho_xw, rho_thetaw, r_w);
    params.covariance()?;

    let c = capacity(channel)?;
    let pt = beta_star(&params, c)?;
    if !((pt.beta - alpha).abs() < FIXED_POINT_TOL) {
        return Err(Error::FixedPointNotConfirmed(format!(
            "beta*(C) = {} but alpha = {alpha}",
            pt.beta
        )));
    }
    if !(pt.i_yw < INDEPENDENCE_TOL) {
        return Err(Error::FixedPointNotConfirmed(format!(
            "I(Y;W) = {} bits at the capacity-rate test channel",
            pt.i_yw
        )));
    }
    Ok(params)
}

/// Signed relative gaps `(linear − outer bound) / outer bound` for `D_E`
/// and `D_D`, where the outer bound is the strategic Wyner-Ziv point at
/// `R = C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimalityGaps {
    pub linear: DistortionPair,
    pub outer_bound: DistortionPair,
    pub gap_d_e: f64,
    pub gap_d_d: f64,
}

pub fn optimality_gaps(params: &ModelParams, channel: &ChannelParams) -> Result<OptimalityGaps> {
    let lin = linear_si_strategies(params, channel)?;
    let c = capacity(channel)?;
    let pt = beta_star(params, c)?;
    let outer = pt.distortions;
    Ok(OptimalityGaps {
        linear: lin.distortions,
        outer_bound: outer,
        gap_d_e: (lin.distortions.d_e - outer.d_e) / outer.d_e,
        gap_d_d: (lin.distortions.d_d - outer.d_d) / outer.d_d,
    })
}

/// Does the best single-letter linear scheme meet the Shannon outer bound?
pub fn optimality_audit(params: &ModelParams, channel: &ChannelParams) -> Result<AuditReport> {
    let g = optimality_gaps(params, channel)?;
    let m = matching_condition(params, channel)?;
    let mut report = AuditReport::new("optimality");
    report.push(Check::below(
        "|D_E gap| (relative)",
        g.gap_d_e.abs(),
        GAP_RTOL,
    ));
    report.push(Check::below(
        "|D_D gap| (relative)",
        g.gap_d_d.abs(),
        GAP_RTOL,
    ));
    report.note(format!(
        "linear D_E = {:.12}, D_D = {:.12}; outer bound D_E = {:.12}, D_D = {:.12}",
        g.linear.d_e, g.linear.d_d, g.outer_bound.d_e, g.outer_bound.d_d
    ));
    report.note(format!(
        "signed gaps: D_E {:+.3e}, D_D {:+.3e}; matching residual {:.3e} (holds: {})",
        g.gap_d_e, g.gap_d_d, m.residual, m.holds
    ));
    Ok(report)
}

/// Matching-condition audit.
pub fn matching_audit(params: &ModelParams, channel: &ChannelParams) -> Result<AuditReport> {
    let m = matching_condition(params, channel)?;
    let mut report = AuditReport::new("match");
    report.push(Check::below("matching residual", m.residual, MATCH_TOL));
    report.push(Check::below(
        "I(Y;W) bits at R = C",
        m.i_yw,
        INDEPENDENCE_TOL,
    ));
    report.note(format!(
        "C = {:.12} bits, beta(C) = {:.12}",
        m.capacity, m.beta_at_capacity
    ));
    Ok(report)
}

/// Test-channel costs at `R = C` for a given `β`, used to compare the
/// channel and the R-D test channel directly.
pub fn test_channel_at_capacity(
    params: &ModelParams,
    channel: &ChannelParams,
    beta: f64,
) -> Result<DistortionPair> {
    let c = capacity(channel)?;
    let s2 = wz_sigma_s2(params, beta, c)?;
    Ok(wz_distortions(params, beta, s2)?.distortions)
}
