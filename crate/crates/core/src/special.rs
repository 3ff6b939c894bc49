//! Dimension constants and the special functions used by the kernels.

use std::f64::consts::PI;

pub use statrs::function::beta::beta_reg;
pub use statrs::function::gamma::{gamma, ln_gamma};

/// Volume of the unit ball in ℝ^d, `π^{d/2} / Γ(d/2 + 1)`.
pub fn ball_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    PI.powf(h) / gamma(h + 1.0)
}

/// Surface area of the unit sphere in ℝ^d, `2 π^{d/2} / Γ(d/2)`.
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

/// Constant of the singular-integral form of the fractional Laplacian,
/// `Δ^α u(x) = c · P.V.∫ (u(y) − u(x)) |x − y|^{−d−2α} dy`, normalized so that
/// the Fourier symbol of `−Δ^α` is `|ξ|^{2α}`.
pub fn frac_laplacian_const(d: usize, alpha: f64) -> f64 {
    let h = d as f64 / 2.0;
    // |Γ(−α)| = Γ(1 − α) / α
    4f64.powf(alpha) * gamma(h + alpha) * alpha / (PI.powf(h) * gamma(1.0 - alpha))
}

/// `E_0 τ_{B(0,1)}` for the process generated by `Δ^α` (α = 1 gives `Δ`).
pub fn ball_exit_time_const(d: usize, alpha: f64) -> f64 {
    let h = d as f64 / 2.0;
    gamma(h) / (4f64.powf(alpha) * gamma(1.0 + alpha) * gamma(h + alpha))
}

/// Whole-space Riesz kernel constant: `G(x,y) = k |x−y|^{2α−d}` for `−Δ^α`.
pub fn riesz_const(d: usize, alpha: f64) -> f64 {
    let h = d as f64 / 2.0;
    gamma(h - alpha) / (4f64.powf(alpha) * PI.powf(h) * gamma(alpha))
}

/// Fraction of the unit sphere `S^{d−1}` where `⟨ω, e⟩ ≥ t`.
pub fn cap_fraction(d: usize, t: f64) -> f64 {
    if t >= 1.0 {
        return 0.0;
    }
    if t <= -1.0 {
        return 1.0;
    }
    match d {
        2 => t.acos() / PI,
        3 => 0.5 * (1.0 - t),
        _ => {
            let half = 0.5 * beta_reg((d as f64 - 1.0) / 2.0, 0.5, 1.0 - t * t);
            if t >= 0.0 {
                half
            } else {
                1.0 - half
            }
        }
    }
}

/// Fraction of the sphere `S(p, s)` lying inside the ball `B(c, r)` where `h = |c − p|`.
pub fn sphere_fraction_in_ball(d: usize, s: f64, h: f64, r: f64) -> f64 {
    if s <= 0.0 {
        return if h < r { 1.0 } else { 0.0 };
    }
    if s + h <= r {
        return 1.0;
    }
    if s >= r + h || s <= h - r {
        return 0.0;
    }
    let t = (s * s + h * h - r * r) / (2.0 * s * h);
    cap_fraction(d, t)
}
