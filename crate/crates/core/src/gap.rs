//! Lower bound on the gap between the best separable instrument and any
//! finite-round LOCC protocol.
//!
//! With `γ±(x, y) = (x ∓ r)(y ± r)`, every successful discrimination branch of
//! an LOCC protocol must cross one of the regions `R± = {γ± ≥ 0}`. Leaves that
//! end inside the enlarged regions `R±^α = {γ± ≥ −α(1+xy)}` carry a minimum
//! amount of probability, and each of them loses at least `Δ_min` of residual
//! entanglement compared with the separable optimum. For 𝓔 = 𝓔_Q the minimum
//! is reached at the point `(x*, y*)` where the level set `C = 1 − Q` meets the
//! boundary of `R+^α`.

use rayon::prelude::*;
use thiserror::Error;

use crate::algebra::{LocalOperator, Mat4};
use crate::measures::{EntanglementMeasure, EqMeasure};
use crate::separable::{c_bound, SeparableElement, SeparableError};
use crate::DIVISOR_GUARD;

/// Margin applied to the open feasibility bounds on `r` and `α`.
pub const FEASIBILITY_MARGIN: f64 = 1e-9;

/// Target residual of the star-point bisection.
pub const STAR_RESIDUAL: f64 = 1e-12;

/// Default grid resolution for [`delta_min_grid`].
pub const DEFAULT_GRID: usize = 2001;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GapError {
    #[error("Q = {0} outside the open interval (0, 1)")]
    EfficiencyOutOfRange(f64),
    #[error("r = {r} violates √(Q/(2−Q)) = {lower} < r < 1")]
    RadiusInfeasible { r: f64, lower: f64 },
    #[error("α = {alpha} violates 0 < α < ((2−Q)r² − Q)/2 = {upper}")]
    AlphaInfeasible { alpha: f64, upper: f64 },
    #[error("μ = {mu} violates 0 < μ < 1/(1−Q) = {upper}")]
    MuInfeasible { mu: f64, upper: f64 },
    #[error("no sign change of C(x, y(x)) − (1 − Q) on [{lo}, {hi}]")]
    NoRoot { lo: f64, hi: f64 },
    #[error("grid size {0} is below the minimum of 101")]
    GridTooSmall(usize),
    #[error("no grid point lies in the enlarged regions")]
    EmptyRegion,
    #[error(transparent)]
    Separable(#[from] SeparableError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// γ±(x, y) = (x ∓ r)(y ± r).
pub fn gamma_pm(x: f64, y: f64, r: f64, sign: Sign) -> f64 {
    let s = sign.factor();
    (x - s * r) * (y + s * r)
}

/// f±(Ĝ) = Tr[F̂± Ĝ]/4 with F̂± = (Ẑ ∓ r) ⊗ (Ẑ ± r), evaluated on the full
/// 4×4 operator.
pub fn f_pm(g: &SeparableElement, r: f64, sign: Sign) -> f64 {
    f_pm_operator(&g.gram(), r, sign)
}

pub fn f_pm_operator(g: &Mat4, r: f64, sign: Sign) -> f64 {
    let s = sign.factor();
    let z = LocalOperator::pauli_z();
    let fa = z + LocalOperator::identity().scale(-s * r);
    let fb = z + LocalOperator::identity().scale(s * r);
    (Mat4::kron(&fa, &fb) * *g).trace().re / 4.0
}

/// Membership in R±^α; at α = 0 this is R± itself.
pub fn in_enlarged_region(x: f64, y: f64, r: f64, alpha: f64, sign: Sign) -> bool {
    gamma_pm(x, y, r, sign) >= -alpha * (1.0 + x * y)
}

pub fn in_region(x: f64, y: f64, r: f64, sign: Sign) -> bool {
    gamma_pm(x, y, r, sign) >= 0.0
}

/// Δ(x, y) = 𝓔(1−Q) − 𝓔(C(x, y)) − μ(1 − Q − (1−xy)/(1+xy)).
pub fn delta<M: EntanglementMeasure + ?Sized>(
    x: f64,
    y: f64,
    m: &M,
    q: f64,
    mu: f64,
) -> Result<f64, GapError> {
    let c = c_bound(x, y)?;
    let ratio = (1.0 - x * y) / (1.0 + x * y);
    Ok(m.eval(1.0 - q) - m.eval(c) - mu * (1.0 - q - ratio))
}

/// √(Q/(2−Q)), the diagonal coordinate of the optimal separable outcomes.
pub fn sep_point(q: f64) -> f64 {
    (q / (2.0 - q)).sqrt()
}

/// Upper end of the feasible α interval, ((2−Q)r² − Q)/2.
pub fn alpha_max(q: f64, r: f64) -> f64 {
    ((2.0 - q) * r * r - q) / 2.0
}

/// Checks √(Q/(2−Q)) < r < 1 and 0 < α < ((2−Q)r² − Q)/2, each with margin
/// [`FEASIBILITY_MARGIN`].
pub fn check_feasible(q: f64, r: f64, alpha: f64) -> Result<(), GapError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(GapError::EfficiencyOutOfRange(q));
    }
    let lower = sep_point(q);
    if !(r > lower + FEASIBILITY_MARGIN && r < 1.0 - FEASIBILITY_MARGIN) {
        return Err(GapError::RadiusInfeasible { r, lower });
    }
    let upper = alpha_max(q, r);
    if !(alpha > FEASIBILITY_MARGIN && alpha < upper - FEASIBILITY_MARGIN) {
        return Err(GapError::AlphaInfeasible { alpha, upper });
    }
    Ok(())
}

/// Validated (Q, r, α, μ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapParams {
    pub q: f64,
    pub r: f64,
    pub alpha: f64,
    pub mu: f64,
}

impl GapParams {
    pub fn new(q: f64, r: f64, alpha: f64, mu: f64) -> Result<Self, GapError> {
        check_feasible(q, r, alpha)?;
        let upper = 1.0 / (1.0 - q);
        if !(mu > 0.0 && mu < upper) {
            return Err(GapError::MuInfeasible { mu, upper });
        }
        Ok(Self { q, r, alpha, mu })
    }

    /// Probability weight guaranteed to end inside R+^α ∪ R−^α, per unit Q:
    /// [2α/(1−r²+2α)]·[(1−r)/(1+r)].
    pub fn prefactor(&self) -> f64 {
        prefactor(self.r, self.alpha)
    }
}

pub fn prefactor(r: f64, alpha: f64) -> f64 {
    2.0 * alpha / (1.0 - r * r + 2.0 * alpha) * (1.0 - r) / (1.0 + r)
}

/// Intersection of C(x, y) = 1 − Q with the boundary γ+ = −α(1+xy) inside
/// the wedge −x ≤ y ≤ x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarPoint {
    pub x_star: f64,
    pub y_star: f64,
    /// (1 + x*y*)/(1 − x*y*), chosen so that Δ(1, 1) = Δ(x*, y*).
    pub mu_star: f64,
}

/// y on the boundary γ+(x, y) = −α(1 + xy).
pub fn boundary_y(x: f64, r: f64, alpha: f64) -> f64 {
    -(r * x - r * r + alpha) / (x * (1.0 + alpha) - r)
}

/// Bisects C(x, y(x)) = 1 − Q along the enlarged-region boundary.
///
/// The bracket runs from the boundary's crossing of y = −x (where C = 1) to its
/// crossing of y = x (where C < 1 − Q under feasibility); both lie on the branch
/// x < r/(1+α), along which y(x) is increasing.
pub fn solve_star_point(q: f64, r: f64, alpha: f64) -> Result<StarPoint, GapError> {
    check_feasible(q, r, alpha)?;
    let target = 1.0 - q;
    let lo0 = (r - (alpha * (1.0 + alpha - r * r)).sqrt()) / (1.0 + alpha);
    let hi0 = ((r * r - alpha) / (1.0 + alpha)).sqrt();
    let h = |x: f64| -> Result<f64, GapError> {
        Ok(c_bound(x, boundary_y(x, r, alpha))? - target)
    };
    let (mut lo, mut hi) = (lo0, hi0);
    let (h_lo, h_hi) = (h(lo)?, h(hi)?);
    if !(h_lo >= 0.0 && h_hi <= 0.0) {
        return Err(GapError::NoRoot { lo: lo0, hi: hi0 });
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        x = 0.5 * (lo + hi);
        let v = h(x)?;
        if v.abs() <= STAR_RESIDUAL && hi - lo < 1e-14 {
            break;
        }
        if v > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= f64::EPSILON * hi.abs() {
            break;
        }
    }
    // For tiny α the boundary is steep near the root and the residual may stay
    // above STAR_RESIDUAL once the bracket has collapsed to adjacent floats.
    let y = boundary_y(x, r, alpha);
    if !h(x)?.is_finite() {
        return Err(GapError::NoRoot { lo: lo0, hi: hi0 });
    }
    let xy = x * y;
    Ok(StarPoint {
        x_star: x,
        y_star: y,
        mu_star: (1.0 + xy) / (1.0 - xy),
    })
}

/// Δ_min = Δ(x*, y*) under 𝓔_Q with μ = μ*.
pub fn delta_min_analytic(q: f64, r: f64, alpha: f64) -> Result<f64, GapError> {
    let star = solve_star_point(q, r, alpha)?;
    let m = EqMeasure::new(q).map_err(|_| GapError::EfficiencyOutOfRange(q))?;
    delta(star.x_star, star.y_star, &m, q, star.mu_star)
}

/// Minimum of Δ over grid points of [−1, 1]² (step 2/(n−1)) that lie in
/// R+^α ∪ R−^α, measured with 𝓔_Q.
pub fn delta_min_grid(q: f64, r: f64, alpha: f64, mu: f64, n: usize) -> Result<f64, GapError> {
    let m = EqMeasure::new(q).map_err(|_| GapError::EfficiencyOutOfRange(q))?;
    delta_min_grid_with(&m, q, r, alpha, mu, n, |_, _| true)
}

/// Grid minimum restricted to points accepted by `filter`.
pub fn delta_min_grid_with<M, F>(
    m: &M,
    q: f64,
    r: f64,
    alpha: f64,
    mu: f64,
    n: usize,
    filter: F,
) -> Result<f64, GapError>
where
    M: EntanglementMeasure + ?Sized,
    F: Fn(f64, f64) -> bool + Sync,
{
    check_feasible(q, r, alpha)?;
    if n < 101 {
        return Err(GapError::GridTooSmall(n));
    }
    let coord = |i: usize| -1.0 + 2.0 * i as f64 / (n - 1) as f64;
    let best = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = coord(i);
            let mut best = f64::INFINITY;
            for j in 0..n {
                let y = coord(j);
                if 1.0 + x * y <= DIVISOR_GUARD || !filter(x, y) {
                    continue;
                }
                if !(in_enlarged_region(x, y, r, alpha, Sign::Plus)
                    || in_enlarged_region(x, y, r, alpha, Sign::Minus))
                {
                    continue;
                }
                if let Ok(d) = delta(x, y, m, q, mu) {
                    best = best.min(d);
                }
            }
            best
        })
        .reduce(|| f64::INFINITY, f64::min);
    if best.is_finite() {
        Ok(best)
    } else {
        Err(GapError::EmptyRegion)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapResult {
    pub params: GapParams,
    pub star: StarPoint,
    pub delta_min: f64,
    pub delta_low: f64,
}

/// Δ_low = [2α/(1−r²+2α)]·[(1−r)/(1+r)]·Q·Δ_min for 𝓔 = 𝓔_Q.
pub fn delta_low(q: f64, r: f64, alpha: f64) -> Result<GapResult, GapError> {
    let star = solve_star_point(q, r, alpha)?;
    let params = GapParams::new(q, r, alpha, star.mu_star)?;
    let m = EqMeasure::new(q).map_err(|_| GapError::EfficiencyOutOfRange(q))?;
    let delta_min = delta(star.x_star, star.y_star, &m, q, star.mu_star)?;
    Ok(GapResult {
        params,
        star,
        delta_min,
        delta_low: params.prefactor() * q * delta_min,
    })
}

/// Coarse-grid resolution of [`optimize_gap`] along each axis.
pub const OPT_COARSE: usize = 200;

/// Smallest pattern-search step in the unit square.
pub const OPT_MIN_STEP: f64 = 1e-12;

/// Maps (u, v) ∈ (0, 1)² onto the feasible (r, α) set.
fn unit_to_params(q: f64, u: f64, v: f64) -> (f64, f64) {
    let lo = sep_point(q);
    let r = lo + (1.0 - lo) * u;
    (r, alpha_max(q, r) * v)
}

fn objective(q: f64, u: f64, v: f64) -> f64 {
    if !(u > 0.0 && u < 1.0 && v > 0.0 && v < 1.0) {
        return f64::NEG_INFINITY;
    }
    let (r, alpha) = unit_to_params(q, u, v);
    delta_low(q, r, alpha).map_or(f64::NEG_INFINITY, |g| g.delta_low)
}

/// Maximizes Δ_low over feasible (r, α) with a coarse grid offset by `phase`
/// (cell fraction in (0, 1)) followed by compass pattern search.
///
/// The optimum is heuristic; no global optimality is claimed.
pub fn optimize_gap_with_phase(q: f64, phase: f64) -> Result<GapResult, GapError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(GapError::EfficiencyOutOfRange(q));
    }
    let n = OPT_COARSE;
    let at = |i: usize| (i as f64 + phase) / n as f64;
    let (mut best_u, mut best_v, mut best) = (0.5, 0.5, f64::NEG_INFINITY);
    for i in 0..n {
        for j in 0..n {
            let val = objective(q, at(i), at(j));
            if val > best {
                (best_u, best_v, best) = (at(i), at(j), val);
            }
        }
    }
    if !best.is_finite() {
        let (r, alpha) = unit_to_params(q, 0.5, 0.5);
        return delta_low(q, r, alpha);
    }
    let mut step = 1.0 / n as f64;
    while step > OPT_MIN_STEP {
        let mut improved = false;
        for (du, dv) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
            let (u, v) = (best_u + du * step, best_v + dv * step);
            let val = objective(q, u, v);
            if val > best {
                (best_u, best_v, best) = (u, v, val);
                improved = true;
                break;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    let (r, alpha) = unit_to_params(q, best_u, best_v);
    delta_low(q, r, alpha)
}

/// [`optimize_gap_with_phase`] at the cell-centred grid.
pub fn optimize_gap(q: f64) -> Result<GapResult, GapError> {
    optimize_gap_with_phase(q, 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub q: f64,
    pub delta_low: f64,
    pub r_opt: f64,
    pub alpha_opt: f64,
}

/// The default sweep Q ∈ {0.05, 0.10, …, 0.95}.
pub fn default_q_values() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

/// Optimized Δ_low over a list of Q values, computed in parallel and returned
/// in input order.
pub fn sweep_gap(q_values: &[f64]) -> Result<Vec<SweepRow>, GapError> {
    q_values
        .par_iter()
        .map(|&q| {
            let g = optimize_gap(q)?;
            Ok(SweepRow {
                q,
                delta_low: g.delta_low,
                r_opt: g.params.r,
                alpha_opt: g.params.alpha,
            })
        })
        .collect()
}

/// CSV with header `Q,delta_low,r_opt,alpha_opt`, 17 significant digits.
pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("Q,delta_low,r_opt,alpha_opt\n");
    for row in rows {
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e}\n",
            row.q, row.delta_low, row.r_opt, row.alpha_opt
        ));
    }
    out
}
