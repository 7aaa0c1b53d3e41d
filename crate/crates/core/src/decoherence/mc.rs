//! Monte-Carlo oracle in the original variables: incoming lab velocity v and
//! outgoing direction r̂, weighted by the flux |v|.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{structure_for, Enhancement, Method, RateResult, Superposition};
use crate::coherent::{chunk_rng, uniform_direction};
use crate::error::{Error, Result};
use crate::halo::{occupation_number, DMCandidate, HaloModel};
use crate::units::{dot3, norm3};

const CHUNK: usize = 8192;

#[derive(Default, Clone, Copy)]
struct Moments {
    n: usize,
    re: f64,
    im: f64,
    re2: f64,
    im2: f64,
    sat: f64,
}

/// Flux-weighted Monte-Carlo estimate of F. Deterministic for a fixed seed and
/// independent of the thread count.
pub fn rate_mc(
    dm: &DMCandidate,
    sup: &Superposition,
    halo: &HaloModel,
    enhancement: Enhancement,
    samples: usize,
    seed: u64,
) -> Result<RateResult> {
    if samples < 10_000 {
        return Err(Error::InvalidParameter(format!("at least 1e4 samples required, got {samples}")));
    }
    let structure = structure_for(sup.target(), enhancement);
    let m = dm.mass_n();
    let dx = sup.delta_x_n();
    let ve = halo.v_earth_n();
    let sd = halo.v0_n() / std::f64::consts::SQRT_2;
    let vesc2 = halo.v_esc_n().powi(2);

    let chunks = samples.div_ceil(CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c as u64);
            let n = CHUNK.min(samples - c * CHUNK);
            let mut mom = Moments { n, ..Default::default() };
            for _ in 0..n {
                let w = loop {
                    let g: [f64; 3] = [0; 3].map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        sd * z
                    });
                    if dot3(g, g) < vesc2 {
                        break g;
                    }
                };
                let v = [w[0] - ve[0], w[1] - ve[1], w[2] - ve[2]];
                let speed = norm3(v);
                let r = uniform_direction(&mut rng);
                let dq = [0, 1, 2].map(|i| m * (v[i] - speed * r[i]));
                let s = structure.eval(norm3(dq));
                let phase = dot3(dq, dx);
                let a = 2.0 * (0.5 * phase).sin().powi(2);
                let xr = speed * s * a;
                let xi = -speed * s * phase.sin();
                mom.re += xr;
                mom.im += xi;
                mom.re2 += xr * xr;
                mom.im2 += xi * xi;
                mom.sat += speed * s;
            }
            mom
        })
        .collect();

    let mut t = Moments::default();
    for p in parts {
        t.n += p.n;
        t.re += p.re;
        t.im += p.im;
        t.re2 += p.re2;
        t.im2 += p.im2;
        t.sat += p.sat;
    }
    let n = t.n as f64;
    let mean_re = t.re / n;
    let mean_im = t.im / n;
    let se = |s2: f64, mean: f64| ((s2 / n - mean * mean).max(0.0) / (n - 1.0)).sqrt();
    let pre = halo.rho_n() * dm.sigma_n() / m;
    let mut out = RateResult::from_natural(
        pre * mean_re,
        pre * mean_im,
        pre * se(t.re2, mean_re),
        pre * se(t.im2, mean_im),
        pre * t.sat / n,
        Method::MonteCarlo,
    );
    out.occupation = occupation_number(halo, dm);
    Ok(out)
}
