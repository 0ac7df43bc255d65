//! Seeded Monte Carlo simulation of the single-letter game.
//!
//! Samples are generated in fixed shards of [`SHARD_SIZE`]. Shard `k` draws
//! from ChaCha8 keyed by `(seed, stream = k)`, so shards are independent
//! streams and can run on any number of threads; partial statistics are
//! merged in shard order, which makes results bit-identical regardless of
//! scheduling.
//!
//! Normal variates come from `rand_distr::StandardNormal` (ziggurat). Each
//! sample consumes, in order: one normal per model variable (`X, θ[, W]`,
//! mapped through the Cholesky factor), one for channel noise (always drawn,
//! even without a channel), and one for encoder dither when dither is
//! enabled. Changing any of this changes every seeded fixture.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::audit::{AuditReport, Check};
use crate::equilibrium::encoder_response;
use crate::gaussian::{validate_model, ModelParams, THETA, W, X};
use crate::jscc::{best_pair, evaluate_pair, ChannelParams, LinearStrategyPair};
use crate::{Error, Result};

pub const SHARD_SIZE: usize = 1 << 16;
/// Significance threshold in standard errors for every statistical check.
pub const Z_THRESHOLD: f64 = 5.0;

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    /// Sample standard deviation divided by `sqrt(n)`.
    pub stderr: f64,
}

impl Estimate {
    /// `|mean − value|` in units of the standard error.
    pub fn z_score(&self, value: f64) -> f64 {
        (self.mean - value).abs() / self.stderr
    }

    pub fn within(&self, value: f64, z: f64) -> bool {
        self.z_score(value) <= z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimResult {
    pub n_samples: usize,
    pub d_e_hat: Estimate,
    pub d_d_hat: Estimate,
    pub power_hat: Estimate,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if self.n == 0 {
            return o;
        }
        if o.n == 0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * o.n as f64 / n as f64,
            m2: self.m2 + o.m2 + d * d * (self.n as f64 * o.n as f64) / n as f64,
        }
    }

    fn estimate(&self) -> Estimate {
        let var = self.m2 / (self.n - 1) as f64;
        Estimate {
            mean: self.mean,
            stderr: (var / self.n as f64).sqrt(),
        }
    }
}

fn shard_rng(seed: u64, shard: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shard as u64);
    rng
}

fn shards(n: usize) -> impl IndexedParallelIterator<Item = (usize, usize)> {
    let count = n.div_ceil(SHARD_SIZE);
    (0..count)
        .into_par_iter()
        .map(move |k| (k, SHARD_SIZE.min(n - k * SHARD_SIZE)))
}

/// Draws one source vector `(X, θ[, W])` into `out` using the Cholesky
/// factor `l`.
fn draw_source(rng: &mut ChaCha8Rng, l: &DMatrix<f64>, z: &mut [f64], out: &mut [f64]) {
    for zi in z.iter_mut() {
        *zi = rng.sample(StandardNormal);
    }
    for i in 0..out.len() {
        out[i] = (0..=i).map(|k| l[(i, k)] * z[k]).sum();
    }
}

/// Joint source draws, column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceDraws {
    pub x: Vec<f64>,
    pub theta: Vec<f64>,
    pub w: Option<Vec<f64>>,
}

/// `n` draws of `(X, θ[, W])`, deterministic in `seed`. These are exactly
/// the source values [`simulate_game`] uses for the same seed.
pub fn sample_source(params: &ModelParams, n: usize, seed: u64) -> Result<SourceDraws> {
    if n == 0 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    let l = validate_model(params)?.cholesky()?;
    let d = params.dim();
    let parts: Vec<Vec<[f64; 3]>> = shards(n)
        .map(|(k, len)| {
            let mut rng = shard_rng(seed, k);
            let mut z = vec![0.0; d];
            let mut s = [0.0; 3];
            (0..len)
                .map(|_| {
                    draw_source(&mut rng, &l, &mut z, &mut s[..d]);
                    let _noise: f64 = rng.sample(StandardNormal);
                    s
                })
                .collect()
        })
        .collect();
    let all: Vec<[f64; 3]> = parts.into_iter().flatten().collect();
    Ok(SourceDraws {
        x: all.iter().map(|s| s[X]).collect(),
        theta: all.iter().map(|s| s[THETA]).collect(),
        w: params
            .has_side_info()
            .then(|| all.iter().map(|s| s[W]).collect()),
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions {
    /// Variance of independent Gaussian dither added to the encoder output.
    /// Zero (the default) gives a deterministic encoder.
    pub dither_variance: f64,
}

pub fn simulate_game(
    params: &ModelParams,
    channel: Option<&ChannelParams>,
    strategies: &LinearStrategyPair,
    n: usize,
    seed: u64,
) -> Result<SimResult> {
    simulate_game_with(params, channel, strategies, n, seed, SimOptions::default())
}

pub fn simulate_game_with(
    params: &ModelParams,
    channel: Option<&ChannelParams>,
    strategies: &LinearStrategyPair,
    n: usize,
    seed: u64,
    opts: SimOptions,
) -> Result<SimResult> {
    if n < 2 {
        return Err(Error::Domain("n must be at least 2".into()));
    }
    if !params.has_side_info() && (strategies.enc_w != 0.0 || strategies.dec_w != 0.0) {
        return Err(Error::InconsistentStrategy(
            "W coefficients require side information".into(),
        ));
    }
    if !(opts.dither_variance >= 0.0) || !opts.dither_variance.is_finite() {
        return Err(Error::Domain(
            "dither variance must be finite and nonnegative".into(),
        ));
    }
    if let Some(c) = channel {
        c.validate()?;
    }
    let l = validate_model(params)?.cholesky()?;
    let d = params.dim();
    let si = params.has_side_info();
    let noise_sd = channel.map_or(0.0, |c| c.sigma_n2.sqrt());
    let dither_sd = opts.dither_variance.sqrt();
    let s = *strategies;

    let parts: Vec<[Moments; 3]> = shards(n)
        .map(|(k, len)| {
            let mut rng = shard_rng(seed, k);
            let mut z = vec![0.0; d];
            let mut src = [0.0; 3];
            let mut acc = [Moments::default(); 3];
            for _ in 0..len {
                draw_source(&mut rng, &l, &mut z, &mut src[..d]);
                let noise: f64 = rng.sample(StandardNormal);
                let (x, theta) = (src[X], src[THETA]);
                let w = if si { src[W] } else { 0.0 };
                let mut u = s.enc_scale * (x + s.enc_alpha * theta + s.enc_w * w);
                if dither_sd > 0.0 {
                    let v: f64 = rng.sample(StandardNormal);
                    u += dither_sd * v;
                }
                let y = u + noise_sd * noise;
                let xhat = s.dec_y * y + s.dec_w * w;
                acc[0].push((x + theta - xhat).powi(2));
                acc[1].push((x - xhat).powi(2));
                acc[2].push(u * u);
            }
            acc
        })
        .collect();
    let total = parts.into_iter().fold([Moments::default(); 3], |a, b| {
        [a[0].merge(b[0]), a[1].merge(b[1]), a[2].merge(b[2])]
    });
    Ok(SimResult {
        n_samples: n,
        d_e_hat: total[0].estimate(),
        d_d_hat: total[1].estimate(),
        power_hat: total[2].estimate(),
        seed,
    })
}

/// Encoder with θ-coefficient `a` and the receiver's exact best reply.
///
/// Noiseless: `Y = X + aθ`. Noisy: full-power `U = γ(a)(X + aθ)`. The
/// receiver uses `W` whenever the model has it.
pub fn best_response_pair(
    params: &ModelParams,
    channel: Option<&ChannelParams>,
    a: f64,
) -> Result<LinearStrategyPair> {
    let si = params.has_side_info();
    match channel {
        None => {
            let resp = encoder_response(params, a, 0.0, si)?;
            Ok(LinearStrategyPair {
                enc_scale: 1.0,
                enc_alpha: a,
                enc_w: 0.0,
                dec_y: resp.coefficients[0],
                dec_w: resp.coefficients.get(1).copied().unwrap_or(0.0),
            })
        }
        Some(c) => {
            let cov = params.covariance_with_noise(&[c.sigma_n2])?;
            Ok(best_pair(params, &cov, c, a, si)?.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationEntry {
    pub delta: f64,
    pub alpha: f64,
    pub d_e_hat: Estimate,
    /// `(D̂_E(0) − D̂_E(δ)) / sqrt(se₀² + se_δ²)`; large positive values mean
    /// the deviation significantly helps the transmitter.
    pub improvement_z: f64,
    /// Exact transmitter cost for the same pair.
    pub d_e_exact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationAudit {
    pub report: AuditReport,
    pub entries: Vec<DeviationEntry>,
}

/// Simulated leader-deviation check around a claimed equilibrium.
///
/// Every offset uses the same seed (common random numbers).
pub fn deviation_audit(
    params: &ModelParams,
    channel: Option<&ChannelParams>,
    equilibrium_alpha: f64,
    grid: &[f64],
    n: usize,
    seed: u64,
) -> Result<DeviationAudit> {
    if !grid.contains(&0.0) {
        return Err(Error::Domain("deviation grid must contain 0".into()));
    }
    let run = |delta: f64| -> Result<(f64, SimResult, f64)> {
        let a = equilibrium_alpha + delta;
        let pair = best_response_pair(params, channel, a)?;
        let sim = simulate_game(params, channel, &pair, n, seed)?;
        let exact = evaluate_pair(params, channel, &pair)?.distortions.d_e;
        Ok((a, sim, exact))
    };
    let (_, base, _) = run(0.0)?;
    let mut report = AuditReport::new("deviation");
    let mut entries = Vec::new();
    for &delta in grid {
        let (alpha, sim, exact) = run(delta)?;
        let se = base.d_e_hat.stderr.hypot(sim.d_e_hat.stderr);
        let improvement_z = if delta == 0.0 {
            0.0
        } else {
            (base.d_e_hat.mean - sim.d_e_hat.mean) / se
        };
        report.push(Check::below(
            format!("improvement z at delta = {delta:+}"),
            improvement_z,
            Z_THRESHOLD,
        ));
        entries.push(DeviationEntry {
            delta,
            alpha,
            d_e_hat: sim.d_e_hat,
            improvement_z,
            d_e_exact: exact,
        });
    }
    report.note(format!(
        "alpha = {equilibrium_alpha:.12}, n = {n}, seed = {seed}, D_E_hat(0) = {:.9} +/- {:.3e}",
        base.d_e_hat.mean, base.d_e_hat.stderr
    ));
    Ok(DeviationAudit { report, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_draws() {
        let p = ModelParams::new(1.0, 0.3, 1.0).with_side_info(0.2, 0.1, 1.0);
        let a = sample_source(&p, 100_000, 7).unwrap();
        let b = sample_source(&p, 100_000, 7).unwrap();
        assert_eq!(a, b);
        let c = sample_source(&p, 100_000, 8).unwrap();
        assert_ne!(a.x, c.x);
    }

    #[test]
    fn sample_covariance_within_clt_bound() {
        let p = ModelParams::new(1.0, 0.0, 1.0);
        let n = 1_000_000;
        let d = sample_source(&p, n, 0).unwrap();
        let cov: f64 = d.x.iter().zip(&d.theta).map(|(x, t)| x * t).sum::<f64>() / n as f64;
        assert!(cov.abs() < Z_THRESHOLD / (n as f64).sqrt(), "{cov}");
    }

    #[test]
    fn matched_test_channel_output_uncorrelated_with_w() {
        use crate::jscc::{capacity, construct_matched_params};
        use crate::rd::beta_star;
        let ch = ChannelParams::new(1.0, 1.0);
        let p = construct_matched_params(1.0, 0.2, 0.3, 1.0, 1.0, &ch).unwrap();
        let pt = beta_star(&p, capacity(&ch).unwrap()).unwrap();
        let n = 1_000_000;
        let d = sample_source(&p, n, 11).unwrap();
        let w = d.w.unwrap();
        let mut rng = shard_rng(12, 0);
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let s: f64 = rng.sample(StandardNormal);
                d.x[i] + pt.beta * d.theta[i] + pt.sigma_s2.sqrt() * s
            })
            .collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (my, mw) = (mean(&y), mean(&w));
        let sxy: f64 = y.iter().zip(&w).map(|(a, b)| (a - my) * (b - mw)).sum();
        let syy: f64 = y.iter().map(|a| (a - my).powi(2)).sum();
        let sww: f64 = w.iter().map(|b| (b - mw).powi(2)).sum();
        let corr = sxy / (syy * sww).sqrt();
        assert!(corr.abs() < Z_THRESHOLD / (n as f64).sqrt(), "{corr}");
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let p = ModelParams::new(1.5, 0.2, 0.8).with_side_info(0.3, -0.1, 1.2);
        let pair = LinearStrategyPair {
            enc_scale: 0.9,
            enc_alpha: 0.4,
            enc_w: 0.2,
            dec_y: 0.5,
            dec_w: 0.1,
        };
        let ch = ChannelParams::new(2.0, 0.5);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_game(&p, Some(&ch), &pair, 300_001, 5).unwrap())
        };
        let one = run(1);
        assert_eq!(one, run(3));
        assert_eq!(one, run(8));
    }

    #[test]
    fn moments_merge_matches_sequential() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let mut seq = Moments::default();
        xs.iter().for_each(|&x| seq.push(x));
        let (a, b) = xs.split_at(313);
        let mut ma = Moments::default();
        a.iter().for_each(|&x| ma.push(x));
        let mut mb = Moments::default();
        b.iter().for_each(|&x| mb.push(x));
        let merged = ma.merge(mb);
        assert!((merged.mean - seq.mean).abs() < 1e-12);
        assert!((merged.m2 - seq.m2).abs() < 1e-9 * seq.m2);
    }

    #[test]
    fn zero_decoder_gives_prior_variance() {
        let p = ModelParams::new(2.0, 0.0, 1.0);
        let pair = LinearStrategyPair {
            enc_scale: 1.0,
            enc_alpha: 0.3,
            enc_w: 0.0,
            dec_y: 0.0,
            dec_w: 0.0,
        };
        let r = simulate_game(&p, None, &pair, 200_000, 1).unwrap();
        assert!(r.d_d_hat.within(2.0, Z_THRESHOLD));
    }

    #[test]
    fn rejects_w_coefficients_without_side_info() {
        let p = ModelParams::new(1.0, 0.0, 1.0);
        let pair = LinearStrategyPair {
            enc_scale: 1.0,
            enc_alpha: 0.3,
            enc_w: 1.0,
            dec_y: 0.5,
            dec_w: 0.0,
        };
        assert!(matches!(
            simulate_game(&p, None, &pair, 10, 0),
            Err(Error::InconsistentStrategy(_))
        ));
        assert!(simulate_game(&p, None, &LinearStrategyPair { enc_w: 0.0, ..pair }, 1, 0).is_err());
    }

    #[test]
    fn dither_raises_power_by_its_variance() {
        let p = ModelParams::new(1.0, 0.0, 1.0);
        let pair = best_response_pair(&p, None, 0.5).unwrap();
        let plain = simulate_game(&p, None, &pair, 200_000, 3).unwrap();
        let dithered = simulate_game_with(
            &p,
            None,
            &pair,
            200_000,
            3,
            SimOptions {
                dither_variance: 0.5,
            },
        )
        .unwrap();
        let exact = evaluate_pair(&p, None, &pair).unwrap().power;
        assert!(plain.power_hat.within(exact, Z_THRESHOLD));
        assert!(dithered.power_hat.within(exact + 0.5, Z_THRESHOLD));
        assert!(dithered.d_d_hat.mean > plain.d_d_hat.mean);
    }

    #[test]
    fn deviation_grid_must_contain_zero() {
        let p = ModelParams::new(1.0, 0.0, 1.0);
        assert!(deviation_audit(&p, None, 0.6, &[0.1], 1000, 0).is_err());
    }
}
