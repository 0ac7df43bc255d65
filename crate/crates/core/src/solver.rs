//! Bracketed global scalar minimization.
//!
//! A dense grid scan picks the best cell; golden-section search refines
//! inside that cell's closed neighborhood; a few central-difference Newton
//! steps then polish the point below golden section's `sqrt(eps)` noise
//! floor. Everything is deterministic.

use serde::Serialize;

use crate::{Error, Result};

pub const DEFAULT_GRID_POINTS: usize = 1001;
pub const DEFAULT_TOL: f64 = 1e-9;
/// Bracket half-width multiplier for equilibrium coefficient searches.
pub const BRACKET_SCALE: f64 = 10.0;
pub const MAX_EXPANSIONS: usize = 3;
/// An argmin closer than this fraction of the bracket width to an endpoint
/// triggers an expansion.
pub const EDGE_FRACTION: f64 = 0.01;

const INV_PHI: f64 = 0.618_033_988_749_894_9;
const NEWTON_STEPS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalarMinResult {
    pub argmin: f64,
    pub value: f64,
    pub evaluations: usize,
    pub bracket_used: (f64, f64),
}

#[derive(Debug, Clone, Copy)]
pub struct MinimizeOptions {
    pub grid_points: usize,
    pub tol: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            grid_points: DEFAULT_GRID_POINTS,
            tol: DEFAULT_TOL,
        }
    }
}

struct Counted<F> {
    f: F,
    evals: usize,
}

impl<F: FnMut(f64) -> f64> Counted<F> {
    fn eval(&mut self, x: f64) -> Result<f64> {
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteEvaluation { x })
        }
    }
}

/// Minimizes `f` over `[lo, hi]` with the default grid size.
pub fn minimize_scalar<F>(f: F, bracket: (f64, f64), tol: f64) -> Result<ScalarMinResult>
where
    F: FnMut(f64) -> f64,
{
    minimize_scalar_with(
        f,
        bracket,
        MinimizeOptions {
            tol,
            ..Default::default()
        },
    )
}

pub fn minimize_scalar_with<F>(
    f: F,
    (lo, hi): (f64, f64),
    opts: MinimizeOptions,
) -> Result<ScalarMinResult>
where
    F: FnMut(f64) -> f64,
{
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidBracket { lo, hi });
    }
    if !(opts.tol > 0.0) || opts.grid_points < 3 {
        return Err(Error::Domain(
            "tol must be positive and the grid must have >= 3 points".into(),
        ));
    }
    let mut f = Counted { f, evals: 0 };
    let n = opts.grid_points;
    let step = (hi - lo) / (n - 1) as f64;
    let grid = |i: usize| if i == n - 1 { hi } else { lo + step * i as f64 };

    // Strict `<` keeps the first (smallest-argument) grid minimum on ties.
    let mut best_i = 0;
    let mut best_v = f.eval(grid(0))?;
    for i in 1..n {
        let v = f.eval(grid(i))?;
        if v < best_v {
            best_i = i;
            best_v = v;
        }
    }

    let cell_lo = grid(best_i.saturating_sub(1));
    let cell_hi = grid((best_i + 1).min(n - 1));
    let (gx, gv) = golden(&mut f, cell_lo, cell_hi, opts.tol)?;

    let (mut x, mut v) = if gv < best_v || (gv == best_v && gx < grid(best_i)) {
        (gx, gv)
    } else {
        (grid(best_i), best_v)
    };

    for _ in 0..NEWTON_STEPS {
        let h = 1e-5 * x.abs().max(1.0);
        let (fp, fm) = (f.eval(x + h)?, f.eval(x - h)?);
        let curvature = fp - 2.0 * v + fm;
        if !(curvature > 0.0) {
            break;
        }
        let cand = x - h * (fp - fm) / (2.0 * curvature);
        if !(cand >= cell_lo && cand <= cell_hi) || cand == x {
            break;
        }
        let cv = f.eval(cand)?;
        let slack = 8.0 * f64::EPSILON * v.abs().max(1.0);
        if cv <= v + slack && cv <= best_v {
            x = cand;
            v = cv;
        } else {
            break;
        }
    }

    Ok(ScalarMinResult {
        argmin: x,
        value: v,
        evaluations: f.evals,
        bracket_used: (lo, hi),
    })
}

fn golden<F: FnMut(f64) -> f64>(
    f: &mut Counted<F>,
    mut a: f64,
    mut b: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f.eval(c)?;
    let mut fd = f.eval(d)?;
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f.eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f.eval(d)?;
        }
        // Interval too small to represent further progress.
        if c >= d {
            break;
        }
    }
    Ok(if fc <= fd { (c, fc) } else { (d, fd) })
}

/// Minimizes over `[-w, w]` with `w = BRACKET_SCALE * max(1, |center_hint|)`,
/// doubling the bracket (at most [`MAX_EXPANSIONS`] times) while the argmin
/// sits within [`EDGE_FRACTION`] of an endpoint.
pub fn minimize_with_expansion<F>(mut f: F, center_hint: f64, tol: f64) -> Result<ScalarMinResult>
where
    F: FnMut(f64) -> f64,
{
    let mut w = BRACKET_SCALE * center_hint.abs().max(1.0);
    let mut evaluations = 0;
    for expansion in 0..=MAX_EXPANSIONS {
        let mut res = minimize_scalar(&mut f, (-w, w), tol)?;
        evaluations += res.evaluations;
        res.evaluations = evaluations;
        let margin = EDGE_FRACTION * 2.0 * w;
        let at_edge = res.argmin - (-w) < margin || w - res.argmin < margin;
        if !at_edge {
            return Ok(res);
        }
        if expansion == MAX_EXPANSIONS {
            return Err(Error::BracketExpansionExceeded {
                expansions: MAX_EXPANSIONS,
                lo: -w,
                hi: w,
            });
        }
        w *= 2.0;
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_vertex() {
        let r = minimize_scalar(|x| (x - 2.0) * (x - 2.0), (0.0, 5.0), 1e-9).unwrap();
        assert!((r.argmin - 2.0).abs() < 1e-9);
        assert_eq!(r.bracket_used, (0.0, 5.0));
    }

    #[test]
    fn symmetric_kink() {
        let r = minimize_scalar(f64::abs, (-1.0, 1.0), 1e-9).unwrap();
        assert!(r.argmin.abs() < 1e-9);
    }

    #[test]
    fn quartic_interior_minimum() {
        // f'(x) = 4x^3 - 2x = 0  =>  x = 1/sqrt(2)
        let r = minimize_scalar(|x| x.powi(4) - x * x, (0.0, 2.0), 1e-9).unwrap();
        assert!((r.argmin - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert!((r.value + 0.25).abs() < 1e-15);
    }

    #[test]
    fn picks_global_over_local_minimum() {
        // Local min near x=-1.3, global near x=1.1 (tilted double well).
        let f = |x: f64| (x * x - 1.5).powi(2) - 0.5 * x;
        let r = minimize_scalar(f, (-3.0, 3.0), 1e-9).unwrap();
        assert!(r.argmin > 0.0);
    }

    #[test]
    fn ties_break_toward_smaller_argument() {
        let r = minimize_scalar(|_| 1.0, (-1.0, 1.0), 1e-6).unwrap();
        assert_eq!(r.argmin, -1.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            minimize_scalar(|x| x, (1.0, 1.0), 1e-9),
            Err(Error::InvalidBracket { .. })
        ));
        assert!(matches!(
            minimize_scalar(|x| if x > 0.5 { f64::NAN } else { x }, (0.0, 1.0), 1e-9),
            Err(Error::NonFiniteEvaluation { .. })
        ));
    }

    #[test]
    fn expansion_finds_distant_minimum() {
        let r = minimize_with_expansion(|x| (x - 25.0).powi(2), 0.0, 1e-9).unwrap();
        assert!((r.argmin - 25.0).abs() < 1e-8);
        assert_eq!(r.bracket_used, (-40.0, 40.0));
    }

    #[test]
    fn expansion_gives_up_on_monotone_objective() {
        assert!(matches!(
            minimize_with_expansion(|x| -x, 0.0, 1e-9),
            Err(Error::BracketExpansionExceeded { .. })
        ));
    }
}
