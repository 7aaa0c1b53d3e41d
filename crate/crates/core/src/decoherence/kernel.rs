//! Deterministic evaluation of the rate integral.
//!
//! Writing Δq = m·u with u = v − |v|·r̂, the flux-weighted density of u is
//! Π(u)/(4π|u|), where Π is the integral of the lab velocity density over the
//! plane v·û = |u|/2. The escape sphere and the Maxwellian share a centre, so
//!
//!   Π(u, x) = Cπv0²·[exp(−h²/v0²) − exp(−v_esc²/v0²)],  h = u/2 + v_E·x,
//!
//! with x = û·v̂_E. For any isotropic structure function S(|Δq|) the rate is
//!
//!   F/(ρσ/m) = ½ ∫ u du S(mu) ∫ dx Π(u, x) [1 − e^{iκx cos χ} J0(κ sin χ √(1−x²))],
//!
//! κ = m·u·|Δx|, χ the angle between Δx and v_E. For large κ the inner
//! integral is replaced by its endpoint expansion in the polar angle about Δx.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::coherent::StructureKernel;
use crate::error::{Error, Result};
use crate::halo::HaloModel;
use crate::quadrature::{composite_nodes, GaussRule};
use crate::special::{one_minus_cos, one_minus_j0};

/// Numerical controls for [`super::rate_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateOptions {
    /// Relative tolerance on |F|.
    pub rel_tol: f64,
    /// Absolute tolerance in 1/s.
    pub abs_tol_per_s: f64,
    /// Maximum number of panel doublings.
    pub max_refinements: u32,
    /// Above this κ the inner integral uses the asymptotic expansion.
    pub kappa_asymptotic: f64,
    /// Budget of outer nodes before far oscillations are bounded instead of resolved.
    pub max_outer_nodes: usize,
}

impl Default for RateOptions {
    fn default() -> Self {
        RateOptions {
            rel_tol: 1e-6,
            abs_tol_per_s: 1e-30,
            max_refinements: 6,
            kappa_asymptotic: 300.0,
            max_outer_nodes: 200_000,
        }
    }
}

/// Geometry of one rate evaluation in natural units.
pub(crate) struct KernelProblem<'a> {
    pub halo: &'a HaloModel,
    pub mass: f64,
    pub dx: f64,
    pub cos_chi: f64,
    pub structure: &'a StructureKernel,
}

/// ∫ of the kernel in units of c·S (multiply by ρσ/m for a rate).
#[derive(Debug, Clone, Copy)]
pub(crate) struct KernelValue {
    pub re: f64,
    pub im: f64,
    pub err_re: f64,
    pub err_im: f64,
    /// Fully decohered limit ½∫u S X0 du, the total scattering rate scale.
    pub saturation: f64,
}

const GL_ORDER: usize = 16;

struct Plane {
    c_pi_v02: f64,
    v0: f64,
    v_esc: f64,
    ve: f64,
    e_esc: f64,
}

impl Plane {
    fn new(h: &HaloModel) -> Self {
        let v0 = h.v0_n();
        let v_esc = h.v_esc_n();
        Plane {
            c_pi_v02: h.norm_const() * PI * v0 * v0,
            v0,
            v_esc,
            ve: h.v_earth_speed(),
            e_esc: (-(v_esc / v0).powi(2)).exp(),
        }
    }

    fn x_hi(&self, u: f64) -> f64 {
        if self.ve == 0.0 {
            if 0.5 * u < self.v_esc {
                1.0
            } else {
                -1.0
            }
        } else {
            ((self.v_esc - 0.5 * u) / self.ve).clamp(-1.0, 1.0)
        }
    }

    /// Π(u, x) and its first two x-derivatives.
    fn eval(&self, u: f64, x: f64) -> (f64, f64, f64) {
        let h = 0.5 * u + self.ve * x;
        if h.abs() >= self.v_esc {
            return (0.0, 0.0, 0.0);
        }
        let v02 = self.v0 * self.v0;
        let g = (-h * h / v02).exp();
        let p = self.c_pi_v02 * (g - self.e_esc);
        let d1 = self.c_pi_v02 * g * (-2.0 * h * self.ve / v02);
        let a = 2.0 * h * self.ve / v02;
        let d2 = self.c_pi_v02 * g * (a * a - 2.0 * self.ve * self.ve / v02);
        (p.max(0.0), d1, d2)
    }

    fn value(&self, u: f64, x: f64) -> f64 {
        let h = 0.5 * u + self.ve * x;
        if h.abs() >= self.v_esc {
            return 0.0;
        }
        (self.c_pi_v02 * ((-h * h / (self.v0 * self.v0)).exp() - self.e_esc)).max(0.0)
    }

    /// X0(u) = ∫ Π dx over the allowed range.
    fn x0(&self, u: f64, rule: &GaussRule) -> f64 {
        let hi = self.x_hi(u);
        if hi <= -1.0 {
            return 0.0;
        }
        rule.mapped(-1.0, hi).map(|(x, w)| w * self.value(u, x)).sum()
    }
}

struct Evaluation {
    re: f64,
    im: f64,
    asym_err: f64,
    saturation: f64,
    abs_sum: f64,
}

fn inner_panels(kappa: f64, range: f64, level: u32) -> usize {
    let base = 1 + (1.5 * kappa * range / (3.0 * PI)).ceil() as usize;
    base << level
}

/// Inner integral of Π·[1 − e^{iθ}J0(β)] by composite Gauss-Legendre.
fn inner_direct(plane: &Plane, u: f64, kappa: f64, cos_chi: f64, sin_chi: f64, level: u32, rule: &GaussRule) -> (f64, f64, f64) {
    let hi = plane.x_hi(u);
    if hi <= -1.0 {
        return (0.0, 0.0, 0.0);
    }
    let panels = inner_panels(kappa, hi + 1.0, level);
    let mut re = 0.0;
    let mut im = 0.0;
    let mut abs = 0.0;
    for (x, w) in composite_nodes(-1.0, hi, panels, rule) {
        let p = plane.value(u, x);
        if p == 0.0 {
            continue;
        }
        let theta = kappa * x * cos_chi;
        let beta = kappa * sin_chi * (1.0 - x * x).max(0.0).sqrt();
        let a = one_minus_cos(theta);
        let b = one_minus_j0(beta);
        let kr = w * p * (a + b - a * b);
        let ki = w * p * theta.sin() * (1.0 - b);
        re += kr;
        im -= ki;
        abs += kr.abs() + ki.abs();
    }
    (re, im, abs)
}

/// Large-κ expansion of the inner integral: X0 minus the endpoint terms at
/// û = ±Δx̂ through order 1/κ², with an estimate of the omitted terms.
fn inner_asymptotic(plane: &Plane, u: f64, kappa: f64, cos_chi: f64, sin_chi: f64, rule: &GaussRule) -> (f64, f64, f64) {
    let x0 = plane.x0(u, rule);
    let hi = plane.x_hi(u);
    let at = |x: f64| if x <= hi { plane.eval(u, x) } else { (0.0, 0.0, 0.0) };
    let (pp, dp, ddp) = at(cos_chi);
    let (pm, dm, ddm) = at(-cos_chi);
    let s2 = sin_chi * sin_chi;
    let g1 = dp * cos_chi - 0.5 * ddp * s2;
    let g2 = dm * cos_chi + 0.5 * ddm * s2;
    let e = Complex64::from_polar(1.0, kappa);
    let ec = e.conj();
    let i_k = Complex64::new(0.0, kappa);
    let osc = (pp * e - pm * ec) / i_k + (g1 * e - g2 * ec) / (kappa * kappa);
    // Next order: curvature terms at 1/κ³ and the tangency of the cap edge at κ^{-5/2}.
    let edge_slope = if hi < 1.0 { plane.eval(u, hi).1.abs() } else { 0.0 };
    let err = 2.0 * ((ddp.abs() + ddm.abs() + dp.abs() + dm.abs()) / kappa.powi(3) + edge_slope * kappa.powf(-2.5));
    (x0 - osc.re, -osc.im, err)
}

fn evaluate(p: &KernelProblem, plane: &Plane, level: u32, opts: &RateOptions) -> Evaluation {
    let rule = GaussRule::cached(GL_ORDER);
    let rule_x0 = GaussRule::cached(32);
    let cos_chi = p.cos_chi.clamp(-1.0, 1.0);
    let sin_chi = (1.0 - cos_chi * cos_chi).max(0.0).sqrt();
    let (u1, umax) = (2.0 * (plane.v_esc - plane.ve), 2.0 * (plane.v_esc + plane.ve));
    let md = p.mass * p.dx;
    let ms = p.mass * p.structure.extent;

    // Oscillation budget of the outer integrand: e^{iκ} terms and the structure function.
    let full_phase = umax * (md + ms);
    let base_panels = 2 + (full_phase / (3.0 * PI)).ceil() as usize;
    let wanted = (base_panels << level) * GL_ORDER;
    // With too many nodes the far e^{±iκ} terms are bounded instead of resolved.
    let u_cut = if wanted > opts.max_outer_nodes && md > 0.0 {
        Some((opts.kappa_asymptotic / md).min(umax))
    } else {
        None
    };

    let mut segments: Vec<(f64, f64, bool)> = Vec::new();
    let mut push_range = |lo: f64, hi: f64| {
        if hi <= lo {
            return;
        }
        match u_cut {
            Some(c) if c < hi => {
                if c > lo {
                    segments.push((lo, c, true));
                }
                segments.push((lo.max(c), hi, false));
            }
            _ => segments.push((lo, hi, true)),
        }
    };
    // Breakpoints: the cap edge reaching x = 1 and the switch to the asymptotic inner integral.
    let mut breaks = vec![0.0, umax];
    if plane.ve > 0.0 {
        breaks.push(u1);
    }
    if md > 0.0 {
        let switch = opts.kappa_asymptotic / md;
        if switch < umax && u_cut.is_none_or(|c| switch < c) {
            breaks.push(switch);
        }
    }
    breaks.sort_by(f64::total_cmp);
    for pair in breaks.windows(2) {
        push_range(pair[0], pair[1]);
    }

    let mut re = 0.0;
    let mut im = 0.0;
    let mut asym_err = 0.0;
    let mut saturation = 0.0;
    let mut dropped_bound = 0.0;
    let mut abs_sum = 0.0;
    for (lo, hi, resolve_osc) in segments {
        let phase = if resolve_osc { (hi - lo) * (md + ms) } else { (hi - lo) * ms };
        let panels = (1 + (phase / (3.0 * PI)).ceil() as usize) << level;
        for (u, w) in composite_nodes(lo, hi, panels, &rule) {
            let s = p.structure.eval(p.mass * u);
            let weight = 0.5 * w * u * s;
            let kappa = md * u;
            let x0 = plane.x0(u, &rule_x0);
            saturation += weight * x0;
            if !resolve_osc {
                re += weight * x0;
                abs_sum += weight.abs() * x0;
                continue;
            }
            if kappa < opts.kappa_asymptotic {
                let (yr, yi, ya) = inner_direct(plane, u, kappa, cos_chi, sin_chi, level, &rule);
                re += weight * yr;
                im += weight * yi;
                abs_sum += weight.abs() * ya;
            } else {
                let (yr, yi, e) = inner_asymptotic(plane, u, kappa, cos_chi, sin_chi, &rule_x0);
                re += weight * yr;
                im += weight * yi;
                asym_err += weight.abs() * e;
                abs_sum += weight.abs() * (yr.abs() + yi.abs() + x0);
            }
        }
        if !resolve_osc {
            // The dropped terms oscillate as e^{±iκ}; their integral is bounded
            // by endpoint contributions of size |amplitude|/(m·Δx).
            for u in [lo, hi] {
                let s = p.structure.eval(p.mass * u);
                let (pp, _, _) = plane.eval(u, cos_chi.min(plane.x_hi(u)));
                let (pm, _, _) = plane.eval(u, (-cos_chi).min(plane.x_hi(u)));
                dropped_bound += 0.5 * u * s * (pp + pm) / (md * u).max(1.0) / md;
            }
        }
    }
    Evaluation { re, im, asym_err: asym_err + 2.0 * dropped_bound, saturation, abs_sum }
}

/// Adaptive evaluation by panel doubling. `abs_tol` is in kernel units.
pub(crate) fn kernel_integral(p: &KernelProblem, opts: &RateOptions, abs_tol: f64) -> Result<KernelValue> {
    let plane = Plane::new(p.halo);
    let mut prev = evaluate(p, &plane, 0, opts);
    let mut last_err = f64::INFINITY;
    for level in 1..=opts.max_refinements {
        let cur = evaluate(p, &plane, level, opts);
        // Cancellation in the node sums leaves roundoff of order ε times the absolute sum.
        let roundoff = 1e-14 * cur.abs_sum;
        let err_re = (cur.re - prev.re).abs() + cur.asym_err + roundoff;
        let err_im = (cur.im - prev.im).abs() + cur.asym_err + roundoff;
        let mag = cur.re.hypot(cur.im);
        let tol = (opts.rel_tol * mag).max(abs_tol);
        last_err = err_re.max(err_im);
        if err_re <= tol && err_im <= tol {
            return Ok(KernelValue { re: cur.re, im: cur.im, err_re, err_im, saturation: cur.saturation });
        }
        prev = cur;
    }
    Err(Error::NonConvergent {
        value_real: prev.re,
        value_imag: prev.im,
        error: last_err,
        tolerance: (opts.rel_tol * prev.re.hypot(prev.im)).max(abs_tol),
    })
}
