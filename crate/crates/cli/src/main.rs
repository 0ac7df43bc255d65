//! `stratcomm` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 domain error, 4 failed
//! consistency check or audit.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use stratcomm::equilibrium::{
    closed_form_alpha, closed_form_equilibrium, leader_improvement, solve_stackelberg,
};
use stratcomm::jscc::{
    capacity, construct_matched_params, evaluate_pair, goblick_mappings, linear_si_strategies,
    matching_audit, matching_condition, optimality_audit, strategic_uncoded_no_si,
};
use stratcomm::rd::{rate_loss_audit, rd_curve_no_si, wz_curve};
use stratcomm::sim::{
    best_response_pair, deviation_audit, simulate_game_with, SimOptions, Z_THRESHOLD,
};
use stratcomm::{audit::AuditReport, ChannelParams, LinearStrategyPair, ModelParams};

use config::{ModelSpec, RunConfig, StrategyKind};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Lib(stratcomm::Error),
}

impl From<stratcomm::Error> for CliError {
    fn from(e: stratcomm::Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Lib(e) if e.is_consistency_failure() => 4,
            CliError::Lib(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "stratcomm",
    version,
    about = "Strategic quadratic-Gaussian communication: equilibria, rate-distortion curves, audits"
)]
#[command(allow_negative_numbers = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Give the receiver the side information W (equilibrium, rd-curve).
    #[arg(long, global = true)]
    si: bool,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Cap on worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Also report rates in nats in JSON output.
    #[arg(long, global = true)]
    nats: bool,

    #[arg(long = "sigma-x2", global = true)]
    sigma_x2: Option<f64>,
    /// r_theta = var(theta) / sigma_x2.
    #[arg(long = "r", global = true)]
    r_theta: Option<f64>,
    /// rho_xtheta = cov(X, theta) / sigma_x2.
    #[arg(long = "rho", global = true)]
    rho_xtheta: Option<f64>,
    #[arg(long = "rho-xw", global = true)]
    rho_xw: Option<f64>,
    #[arg(long = "rho-thetaw", global = true)]
    rho_thetaw: Option<f64>,
    #[arg(long = "r-w", global = true)]
    r_w: Option<f64>,
    /// Transmit power.
    #[arg(long = "p-t", global = true)]
    p_t: Option<f64>,
    /// Channel noise variance.
    #[arg(long = "sigma-n2", global = true)]
    sigma_n2: Option<f64>,
    /// Default: config, then STRATCOMM_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo samples.
    #[arg(long, global = true)]
    n: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Noiseless Stackelberg equilibrium, closed form next to numeric.
    #[command(allow_negative_numbers = true)]
    Equilibrium,
    /// Strategic rate-distortion curve as CSV.
    #[command(allow_negative_numbers = true)]
    RdCurve {
        /// Comma-separated rates in bits.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        rates: Option<Vec<f64>>,
    },
    /// Run one audit; exit 0 only if it passes.
    #[command(allow_negative_numbers = true)]
    Audit {
        kind: AuditKind,
        /// Rate in bits (rate-loss).
        #[arg(long, allow_hyphen_values = true)]
        rate: Option<f64>,
        /// Claimed equilibrium coefficient (deviation).
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<f64>,
        #[arg(long = "b-grid", value_delimiter = ',', allow_hyphen_values = true)]
        b_grid: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        deltas: Option<Vec<f64>>,
    },
    /// Monte Carlo simulation of a strategy pair.
    #[command(allow_negative_numbers = true)]
    Simulate {
        #[arg(long, value_enum)]
        strategies: Option<StrategyKind>,
        #[arg(long = "dither-variance")]
        dither_variance: Option<f64>,
    },
    /// Side-information statistics that make uncoded transmission optimal.
    #[command(allow_negative_numbers = true)]
    MatchConstruct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AuditKind {
    TxSi,
    RateLoss,
    Match,
    Optimality,
    Deviation,
}

impl AuditKind {
    fn name(self) -> &'static str {
        match self {
            AuditKind::TxSi => "tx-si",
            AuditKind::RateLoss => "rate-loss",
            AuditKind::Match => "match",
            AuditKind::Optimality => "optimality",
            AuditKind::Deviation => "deviation",
        }
    }
}

/// Result of a command: the text to emit and whether its checks passed.
struct Outcome {
    text: String,
    passed: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            if let Err(e) = emit(&cli.common, &out.text) {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
            if out.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(4)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn emit(common: &Common, text: &str) -> std::io::Result<()> {
    match &common.out {
        Some(path) => std::fs::write(path, text),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(text.as_bytes())
        }
    }
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let c = &cli.common;
    if let Some(t) = c.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.model = cfg.model.overlay(ModelSpec {
        sigma_x2: c.sigma_x2,
        rho_xtheta: c.rho_xtheta,
        r_theta: c.r_theta,
        rho_xw: c.rho_xw,
        rho_thetaw: c.rho_thetaw,
        r_w: c.r_w,
    });
    cfg.model = cfg.model.with_defaults();
    cfg.channel = merge_channel(cfg.channel, c.p_t, c.sigma_n2)?;
    if c.n.is_some() {
        cfg.n = c.n;
    }
    if c.si && !matches!(cli.command, Command::Equilibrium | Command::RdCurve { .. }) {
        return Err(CliError::Config(
            "--si applies to equilibrium and rd-curve only".into(),
        ));
    }

    match &cli.command {
        Command::Equilibrium => cmd_equilibrium(cfg, c.si),
        Command::RdCurve { rates } => {
            if c.nats {
                return Err(CliError::Config(
                    "rd-curve CSV is always in bits; --nats applies to JSON reports".into(),
                ));
            }
            if rates.is_some() {
                cfg.rates = rates.clone();
            }
            cmd_rd_curve(cfg, c.si)
        }
        Command::Audit {
            kind,
            rate,
            alpha,
            b_grid,
            deltas,
        } => {
            cfg.rate = rate.or(cfg.rate);
            cfg.alpha = alpha.or(cfg.alpha);
            if b_grid.is_some() {
                cfg.b_grid = b_grid.clone();
            }
            if deltas.is_some() {
                cfg.deltas = deltas.clone();
            }
            if *kind == AuditKind::Deviation {
                cfg.seed = Some(config::resolve_seed(c.seed, cfg.seed)?);
            }
            cmd_audit(cfg, *kind, c.nats)
        }
        Command::Simulate {
            strategies,
            dither_variance,
        } => {
            cfg.strategies = strategies.or(cfg.strategies);
            cfg.dither_variance = dither_variance.or(cfg.dither_variance);
            cfg.seed = Some(config::resolve_seed(c.seed, cfg.seed)?);
            cmd_simulate(cfg)
        }
        Command::MatchConstruct => cmd_match_construct(cfg, c.nats),
    }
}

fn merge_channel(
    file: Option<ChannelParams>,
    p_t: Option<f64>,
    sigma_n2: Option<f64>,
) -> Result<Option<ChannelParams>, CliError> {
    match (file, p_t, sigma_n2) {
        (f, None, None) => Ok(f),
        (Some(f), p, n) => Ok(Some(ChannelParams::new(
            p.unwrap_or(f.p_t),
            n.unwrap_or(f.sigma_n2),
        ))),
        (None, Some(p), Some(n)) => Ok(Some(ChannelParams::new(p, n))),
        (None, _, _) => Err(CliError::Config(
            "a channel needs both --p-t and --sigma-n2".into(),
        )),
    }
}

fn envelope(command: &str, cfg: &RunConfig, body: Value) -> Result<String, CliError> {
    let mut doc = json!({
        "stratcomm_version": stratcomm::VERSION,
        "command": command,
        "config": cfg,
    });
    if let (Value::Object(d), Value::Object(b)) = (&mut doc, body) {
        d.extend(b);
    }
    let mut s = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Config(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn narrate(report: &AuditReport) {
    eprintln!(
        "{} audit: {}",
        report.kind,
        if report.passed { "PASS" } else { "FAIL" }
    );
    for ch in &report.checks {
        eprintln!(
            "  [{}] {}: {:.6e} (threshold {:.1e})",
            if ch.passed { "ok" } else { "FAIL" },
            ch.name,
            ch.measured,
            ch.tolerance
        );
    }
    for n in &report.notes {
        eprintln!("  {n}");
    }
}

fn require_channel(cfg: &RunConfig, what: &str) -> Result<ChannelParams, CliError> {
    cfg.channel
        .ok_or_else(|| CliError::Config(format!("{what} needs a channel (--p-t and --sigma-n2)")))
}

const AGREEMENT_TOL: f64 = 1e-6;
const LEADER_SLACK: f64 = 1e-10;

fn cmd_equilibrium(cfg: RunConfig, si: bool) -> Result<Outcome, CliError> {
    let params = cfg.model.build()?;
    let (r, rho, s) = (params.r_theta, params.rho_xtheta, params.sigma_x2);
    let numeric = solve_stackelberg(&params, si)?;
    let closed = closed_form_equilibrium(r, rho, s)?;
    let mut report = AuditReport::new("equilibrium");
    let improvement = leader_improvement(&params, numeric.alpha, si)?;
    report.push(stratcomm::audit::Check::below(
        "leader improvement on local grid",
        improvement,
        LEADER_SLACK,
    ));
    report.push(stratcomm::audit::Check::below(
        "D_D above prior variance",
        numeric.distortions.d_d - s,
        1e-12 * s,
    ));
    if !si {
        let da = (closed.alpha - numeric.alpha).abs();
        let dd = closed.distortions.max_rel_dev(&numeric.distortions, 0.0);
        report.push(stratcomm::audit::Check::below(
            "|alpha closed - numeric|",
            da,
            AGREEMENT_TOL,
        ));
        report.push(stratcomm::audit::Check::below(
            "distortion relative deviation",
            dd,
            AGREEMENT_TOL,
        ));
    }
    narrate(&report);
    let body = if si {
        json!({ "side_information": true, "numeric": numeric, "no_si_closed_form": closed, "checks": report })
    } else {
        json!({ "side_information": false, "closed_form": closed, "numeric": numeric, "checks": report })
    };
    Ok(Outcome {
        passed: report.passed,
        text: envelope("equilibrium", &cfg, body)?,
    })
}

fn cmd_rd_curve(mut cfg: RunConfig, si: bool) -> Result<Outcome, CliError> {
    let params = cfg.model.build()?;
    let rates = cfg.rates.get_or_insert_with(config::default_rates).clone();
    let points = if si {
        let mut sorted = rates.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted != rates {
            return Err(CliError::Config("rates must be sorted ascending".into()));
        }
        wz_curve(&params, &rates)?
    } else {
        rd_curve_no_si(params.r_theta, params.rho_xtheta, params.sigma_x2, &rates)?
    };
    if !si {
        let limit = stratcomm::rd::rd_point_no_si(
            params.r_theta,
            params.rho_xtheta,
            params.sigma_x2,
            f64::INFINITY,
        )?;
        eprintln!(
            "note: as R -> inf the printed curve tends to D_E = {:.10}, D_D = {:.10}; the oracle tends to D_E = {:.10}, D_D = {:.10}",
            limit.d_e_paper.unwrap_or(f64::NAN),
            limit.d_d_paper.unwrap_or(f64::NAN),
            limit.distortions.d_e,
            limit.distortions.d_d
        );
    }
    Ok(Outcome {
        passed: true,
        text: output::rd_csv(&points),
    })
}

fn cmd_audit(mut cfg: RunConfig, kind: AuditKind, nats: bool) -> Result<Outcome, CliError> {
    let params = cfg.model.build()?;
    let mut extra = serde_json::Map::new();
    let report = match kind {
        AuditKind::TxSi => {
            let grid = cfg
                .b_grid
                .get_or_insert_with(config::default_b_grid)
                .clone();
            stratcomm::equilibrium::transmitter_si_audit(&params, &grid)?
        }
        AuditKind::RateLoss => {
            let grid = cfg
                .b_grid
                .get_or_insert_with(config::default_b_grid)
                .clone();
            let rate = *cfg.rate.get_or_insert(1.0);
            if nats {
                extra.insert("rate_nats".into(), json!(rate * std::f64::consts::LN_2));
            }
            rate_loss_audit(&params, rate, &grid)?
        }
        AuditKind::Match => {
            let ch = require_channel(&cfg, "audit match")?;
            let m = matching_condition(&params, &ch)?;
            extra.insert("matching".into(), json!(m));
            if nats {
                extra.insert(
                    "capacity_nats".into(),
                    json!(m.capacity * std::f64::consts::LN_2),
                );
                extra.insert("i_yw_nats".into(), json!(m.i_yw * std::f64::consts::LN_2));
            }
            matching_audit(&params, &ch)?
        }
        AuditKind::Optimality => {
            let ch = require_channel(&cfg, "audit optimality")?;
            optimality_audit(&params, &ch)?
        }
        AuditKind::Deviation => {
            let ch = cfg.channel;
            let alpha = match cfg.alpha {
                Some(a) => a,
                None => claimed_equilibrium(&params, ch.as_ref())?,
            };
            cfg.alpha = Some(alpha);
            let deltas = cfg
                .deltas
                .get_or_insert_with(config::default_deltas)
                .clone();
            let n = *cfg.n.get_or_insert(config::DEFAULT_N);
            let seed = cfg.seed.unwrap_or(0);
            let a = deviation_audit(&params, ch.as_ref(), alpha, &deltas, n, seed)?;
            extra.insert("entries".into(), json!(a.entries));
            a.report
        }
    };
    narrate(&report);
    extra.insert("report".into(), json!(report));
    let text = envelope(
        &format!("audit {}", kind.name()),
        &cfg,
        Value::Object(extra),
    )?;
    Ok(Outcome {
        passed: report.passed,
        text,
    })
}

/// The equilibrium the library reports for this setting. The receiver uses
/// `W` whenever the model has it.
fn claimed_equilibrium(
    params: &ModelParams,
    channel: Option<&ChannelParams>,
) -> Result<f64, CliError> {
    Ok(match (channel, params.has_side_info()) {
        (None, si) => solve_stackelberg(params, si)?.alpha,
        (Some(_), false) => closed_form_alpha(params.r_theta, params.rho_xtheta),
        (Some(ch), true) => linear_si_strategies(params, ch)?.pair.enc_alpha,
    })
}

fn cmd_simulate(mut cfg: RunConfig) -> Result<Outcome, CliError> {
    let params = cfg.model.build()?;
    let ch = cfg.channel;
    let kind = *cfg
        .strategies
        .get_or_insert(match (ch, params.has_side_info()) {
            (None, _) => StrategyKind::Theorem1,
            (Some(_), false) => StrategyKind::Theorem5,
            (Some(_), true) => StrategyKind::Lemma3,
        });
    if kind != StrategyKind::Custom && cfg.pair.is_some() {
        return Err(CliError::Config(
            "`pair` is only used with --strategies custom".into(),
        ));
    }
    let pair: LinearStrategyPair = match kind {
        StrategyKind::Theorem1 => {
            if ch.is_some() {
                return Err(CliError::Config(
                    "theorem1 strategies are noiseless; drop the channel".into(),
                ));
            }
            let alpha = closed_form_alpha(params.r_theta, params.rho_xtheta);
            best_response_pair(&params.without_side_info(), None, alpha)?
        }
        StrategyKind::Theorem5 => {
            let c = require_channel(&cfg, "theorem5 strategies")?;
            strategic_uncoded_no_si(params.r_theta, params.rho_xtheta, params.sigma_x2, &c)?.0
        }
        StrategyKind::Lemma3 => {
            let c = require_channel(&cfg, "lemma3 strategies")?;
            linear_si_strategies(&params, &c)?.pair
        }
        StrategyKind::Goblick => {
            let c = require_channel(&cfg, "goblick strategies")?;
            goblick_mappings(params.sigma_x2, &c)?.0
        }
        StrategyKind::Custom => cfg.pair.ok_or_else(|| {
            CliError::Config("--strategies custom needs `pair` in the config".into())
        })?,
    };
    let n = *cfg.n.get_or_insert(config::DEFAULT_N);
    if n < 2 {
        return Err(CliError::Config("n must be at least 2".into()));
    }
    let seed = cfg.seed.unwrap_or(0);
    let dither = cfg.dither_variance.unwrap_or(0.0);
    let result = simulate_game_with(
        &params,
        ch.as_ref(),
        &pair,
        n,
        seed,
        SimOptions {
            dither_variance: dither,
        },
    )?;
    let exact = evaluate_pair(&params, ch.as_ref(), &pair)?;
    let mut body = json!({ "strategies": kind, "pair": pair, "result": result });
    // The analytic reference describes the deterministic encoder only.
    let passed = if dither == 0.0 {
        let z = [
            result.d_e_hat.z_score(exact.distortions.d_e),
            result.d_d_hat.z_score(exact.distortions.d_d),
            result.power_hat.z_score(exact.power),
        ];
        body["analytic"] = json!(exact);
        body["z_scores"] = json!({ "d_e": z[0], "d_d": z[1], "power": z[2] });
        let ok = z.iter().all(|&v| v <= Z_THRESHOLD);
        if !ok {
            eprintln!("simulate: empirical values differ from the analytic ones by more than {Z_THRESHOLD} standard errors: {z:?}");
        }
        ok
    } else {
        true
    };
    Ok(Outcome {
        passed,
        text: envelope("simulate", &cfg, body)?,
    })
}

fn cmd_match_construct(cfg: RunConfig, nats: bool) -> Result<Outcome, CliError> {
    let m = cfg.model;
    if m.rho_xw.is_some() {
        return Err(CliError::Config(
            "match-construct derives rho_xw; do not give it".into(),
        ));
    }
    let need = |v: Option<f64>, name: &str| {
        v.ok_or_else(|| CliError::Config(format!("match-construct needs {name}")))
    };
    let (rho_tw, r_w) = (need(m.rho_thetaw, "rho_thetaw")?, need(m.r_w, "r_w")?);
    let base = ModelSpec {
        rho_thetaw: None,
        r_w: None,
        ..m
    }
    .build()?;
    let ch = require_channel(&cfg, "match-construct")?;
    let params = construct_matched_params(
        base.r_theta,
        base.rho_xtheta,
        rho_tw,
        r_w,
        base.sigma_x2,
        &ch,
    )?;
    let report = matching_condition(&params, &ch)?;
    let mut body = json!({ "params": params, "matching": report, "capacity_bits": capacity(&ch)? });
    if nats {
        body["capacity_nats"] = json!(report.capacity * std::f64::consts::LN_2);
        body["i_yw_nats"] = json!(report.i_yw * std::f64::consts::LN_2);
    }
    eprintln!(
        "match-construct: rho_xw = {:.12}, residual {:.3e}",
        params.side.map_or(f64::NAN, |s| s.rho_xw),
        report.residual
    );
    Ok(Outcome {
        passed: report.holds,
        text: envelope("match-construct", &cfg, body)?,
    })
}
