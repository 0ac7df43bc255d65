use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{conditional, lincomb_cov, CovMatrix};
use crate::{Error, Result};

/// Index of the source `X` in every model covariance.
pub const X: usize = 0;
/// Index of the private information `θ`.
pub const THETA: usize = 1;
/// Index of the receiver side information `W` (when present).
pub const W: usize = 2;

/// Second moments of the side information `W`, normalized by `σ_X²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideInfo {
    /// `cov(X, W) / σ_X²`.
    pub rho_xw: f64,
    /// `cov(θ, W) / σ_X²`.
    pub rho_thetaw: f64,
    /// `var(W) / σ_X²`.
    pub r_w: f64,
}

/// Joint second-order statistics of `(X, θ[, W])`.
///
/// **All cross moments are normalized by `σ_X²`, not by the product of
/// standard deviations.** `rho_xtheta` is `cov(X, θ) / σ_X²`; the actual
/// correlation coefficient of `X` and `θ` is `rho_xtheta / sqrt(r_theta)`.
/// The same holds for `rho_xw` and `rho_thetaw`. The model covariance is
///
/// ```text
/// σ_X² · [[1,        ρ_Xθ,  ρ_XW ],
///         [ρ_Xθ,     r_θ,   ρ_θW ],
///         [ρ_XW,     ρ_θW,  r_W  ]]
/// ```
///
/// All means are zero.
///
/// The JSON form is a flat object with keys `sigma_x2`, `rho_xtheta`,
/// `r_theta` and, all together or not at all, `rho_xw`, `rho_thetaw`, `r_w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelParamsJson", into = "ModelParamsJson")]
pub struct ModelParams {
    pub sigma_x2: f64,
    pub rho_xtheta: f64,
    pub r_theta: f64,
    pub side: Option<SideInfo>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelParamsJson {
    sigma_x2: f64,
    rho_xtheta: f64,
    r_theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho_xw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho_thetaw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r_w: Option<f64>,
}

impl TryFrom<ModelParamsJson> for ModelParams {
    type Error = String;

    fn try_from(j: ModelParamsJson) -> std::result::Result<Self, String> {
        let side = match (j.rho_xw, j.rho_thetaw, j.r_w) {
            (None, None, None) => None,
            (Some(rho_xw), Some(rho_thetaw), Some(r_w)) => Some(SideInfo {
                rho_xw,
                rho_thetaw,
                r_w,
            }),
            _ => {
                return Err(
                    "rho_xw, rho_thetaw and r_w must be given together or not at all".into(),
                )
            }
        };
        Ok(ModelParams {
            sigma_x2: j.sigma_x2,
            rho_xtheta: j.rho_xtheta,
            r_theta: j.r_theta,
            side,
        })
    }
}

impl From<ModelParams> for ModelParamsJson {
    fn from(p: ModelParams) -> Self {
        ModelParamsJson {
            sigma_x2: p.sigma_x2,
            rho_xtheta: p.rho_xtheta,
            r_theta: p.r_theta,
            rho_xw: p.side.map(|s| s.rho_xw),
            rho_thetaw: p.side.map(|s| s.rho_thetaw),
            r_w: p.side.map(|s| s.r_w),
        }
    }
}

impl ModelParams {
    pub fn new(sigma_x2: f64, rho_xtheta: f64, r_theta: f64) -> Self {
        Self {
            sigma_x2,
            rho_xtheta,
            r_theta,
            side: None,
        }
    }

    pub fn with_side_info(mut self, rho_xw: f64, rho_thetaw: f64, r_w: f64) -> Self {
        self.side = Some(SideInfo {
            rho_xw,
            rho_thetaw,
            r_w,
        });
        self
    }

    pub fn without_side_info(mut self) -> Self {
        self.side = None;
        self
    }

    pub fn has_side_info(&self) -> bool {
        self.side.is_some()
    }

    pub fn side_info(&self) -> Result<SideInfo> {
        self.side.ok_or(Error::MissingSideInformation)
    }

    /// Number of model variables: 2 without side information, 3 with.
    pub fn dim(&self) -> usize {
        if self.side.is_some() {
            3
        } else {
            2
        }
    }

    /// The validated model covariance.
    pub fn covariance(&self) -> Result<CovMatrix> {
        validate_model(self)
    }

    /// Model covariance extended by independent zero-mean variables with the
    /// given variances (channel or test-channel noise). Zero variances are
    /// allowed; the result is then only positive semidefinite.
    pub fn covariance_with_noise(&self, noise_variances: &[f64]) -> Result<CovMatrix> {
        let base = validate_model(self)?;
        let n = base.dim();
        let total = n + noise_variances.len();
        for &v in noise_variances {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::NonpositiveVariance {
                    name: "noise variance",
                    value: v,
                });
            }
        }
        let m = DMatrix::from_fn(total, total, |i, j| {
            if i < n && j < n {
                base.get(i, j)
            } else if i == j {
                noise_variances[i - n]
            } else {
                0.0
            }
        });
        CovMatrix::new(m)
    }
}

/// Checks the model and returns its covariance in source units².
pub fn validate_model(params: &ModelParams) -> Result<CovMatrix> {
    let &ModelParams {
        sigma_x2: s,
        rho_xtheta: rho,
        r_theta: r,
        side,
    } = params;
    let all = [
        Some(s),
        Some(rho),
        Some(r),
        side.map(|x| x.rho_xw),
        side.map(|x| x.rho_thetaw),
        side.map(|x| x.r_w),
    ];
    if all.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Domain("model parameters must be finite".into()));
    }
    if !(s > 0.0) {
        return Err(Error::NonpositiveVariance {
            name: "sigma_x2",
            value: s,
        });
    }
    if !(r > 0.0) {
        return Err(Error::NonpositiveVariance {
            name: "r_theta",
            value: r,
        });
    }
    if !(r > rho * rho) {
        return Err(Error::DegeneratePrivateInfo {
            r_theta: r,
            rho_sq: rho * rho,
        });
    }
    let cov = match side {
        None => CovMatrix::from_rows(&[&[s, s * rho], &[s * rho, s * r]])?,
        Some(si) => {
            if !(si.r_w > 0.0) {
                return Err(Error::NonpositiveVariance {
                    name: "r_w",
                    value: si.r_w,
                });
            }
            CovMatrix::from_rows(&[
                &[s, s * rho, s * si.rho_xw],
                &[s * rho, s * r, s * si.rho_thetaw],
                &[s * si.rho_xw, s * si.rho_thetaw, s * si.r_w],
            ])?
        }
    };
    cov.cholesky()?;
    Ok(cov)
}

/// Transmitter and receiver costs `D_E = E[(X+θ−X̂)²]`, `D_D = E[(X−X̂)²]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionPair {
    pub d_e: f64,
    pub d_d: f64,
}

impl DistortionPair {
    pub fn new(d_e: f64, d_d: f64) -> Self {
        Self { d_e, d_d }
    }

    /// Largest relative deviation of either component from `other`, with
    /// denominators floored at `floor`.
    pub fn max_rel_dev(&self, other: &DistortionPair, floor: f64) -> f64 {
        crate::rel_dev(self.d_e, other.d_e, floor).max(crate::rel_dev(self.d_d, other.d_d, floor))
    }
}

/// Receiver best response to a set of linear observations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FollowerResponse {
    /// `X̂ = Σ coefficients[k] · observation[k]`.
    pub coefficients: Vec<f64>,
    pub distortions: DistortionPair,
}

/// MMSE decoder for `X` from observations `oₖ = vₖᵀ·Z` of the base vector
/// `Z` (with `Z[X]` the source and `Z[THETA]` the private information), and
/// the resulting costs of both agents, evaluated exactly.
///
/// No observations means the receiver outputs the prior mean, zero.
pub fn follower_response<V: AsRef<[f64]>>(
    cov: &CovMatrix,
    observations: &[V],
) -> Result<FollowerResponse> {
    let n = cov.dim();
    let mut x = vec![0.0; n];
    x[X] = 1.0;
    let mut vectors = vec![x];
    vectors.extend(observations.iter().map(|v| v.as_ref().to_vec()));
    let joint = lincomb_cov(cov, &vectors)?;
    let given: Vec<usize> = (1..vectors.len()).collect();
    let c = conditional(&joint, 0, &given)?;

    let mut err = vec![0.0; n];
    err[X] = 1.0;
    err[THETA] = 1.0;
    for (coef, v) in c.coefficients.iter().zip(&vectors[1..]) {
        for (e, vi) in err.iter_mut().zip(v) {
            *e -= coef * vi;
        }
    }
    let d_e = cov.quadratic_form(&err)?.max(0.0);
    Ok(FollowerResponse {
        coefficients: c.coefficients,
        distortions: DistortionPair::new(d_e, c.residual_variance),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn independent_unit_pair() {
        let cov = validate_model(&ModelParams::new(1.0, 0.0, 1.0)).unwrap();
        assert_eq!(cov.to_rows(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn boundary_r_equal_rho_squared_is_degenerate() {
        assert!(matches!(
            validate_model(&ModelParams::new(1.0, 1.0, 1.0)),
            Err(Error::DegeneratePrivateInfo { .. })
        ));
    }

    #[test]
    fn nonpositive_variance() {
        assert!(matches!(
            validate_model(&ModelParams::new(0.0, 0.0, 1.0)),
            Err(Error::NonpositiveVariance { .. })
        ));
        assert!(matches!(
            validate_model(&ModelParams::new(1.0, 0.0, 1.0).with_side_info(0.0, 0.0, -1.0)),
            Err(Error::NonpositiveVariance { .. })
        ));
    }

    #[test]
    fn three_by_three_hand_cholesky() {
        // Hand Cholesky of [[1,.3,.5],[.3,1,.1],[.5,.1,1]] (then scaled by 2):
        // l11 = 1, l21 = .3, l31 = .5, l22 = sqrt(.91),
        // l32 = (.1 - .15)/sqrt(.91), l33^2 = 1 - .25 - .0025/.91 > 0.
        let p = ModelParams::new(2.0, 0.3, 1.0).with_side_info(0.5, 0.1, 1.0);
        let cov = validate_model(&p).unwrap();
        assert_eq!(cov.get(0, 2), 1.0);
        let l = cov.cholesky().unwrap();
        let s = 2f64.sqrt();
        assert_relative_eq!(l[(1, 1)], s * 0.91f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(l[(2, 1)], s * (-0.05 / 0.91f64.sqrt()), epsilon = 1e-14);
        assert_relative_eq!(
            l[(2, 2)],
            s * (0.75 - 0.0025 / 0.91f64).sqrt(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn not_positive_definite_side_info() {
        let p = ModelParams::new(1.0, 0.0, 1.0).with_side_info(0.9, 0.9, 1.0);
        assert!(matches!(
            validate_model(&p),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn json_form_all_or_none() {
        let p: ModelParams =
            serde_json::from_str(r#"{"sigma_x2":1,"rho_xtheta":0.2,"r_theta":1}"#).unwrap();
        assert!(p.side.is_none());
        let p: ModelParams = serde_json::from_str(
            r#"{"sigma_x2":1,"rho_xtheta":0.2,"r_theta":1,"rho_xw":0.4,"rho_thetaw":0.3,"r_w":1}"#,
        )
        .unwrap();
        assert_eq!(p.side.unwrap().rho_thetaw, 0.3);
        let back = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<ModelParams>(&back).unwrap(), p);

        assert!(serde_json::from_str::<ModelParams>(
            r#"{"sigma_x2":1,"rho_xtheta":0.2,"r_theta":1,"rho_xw":0.4}"#
        )
        .is_err());
        assert!(serde_json::from_str::<ModelParams>(
            r#"{"sigma_x2":1,"rho_xtheta":0.2,"r_theta":1,"bogus":0}"#
        )
        .is_err());
    }

    #[test]
    fn follower_prior_mean_when_nothing_observed() {
        let p = ModelParams::new(1.5, 0.2, 1.0);
        let cov = p.covariance().unwrap();
        let r = follower_response::<Vec<f64>>(&cov, &[]).unwrap();
        assert_relative_eq!(r.distortions.d_d, 1.5, epsilon = 1e-15);
        assert_relative_eq!(r.distortions.d_e, 1.5 * (1.0 + 0.4 + 1.0), epsilon = 1e-14);
    }
}
