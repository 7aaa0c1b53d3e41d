//! Coherent elastic scattering off a multi-atom target.
//!
//! The structure factor I(Δq) = ⟨|Σᵢ A e^{−i xᵢ·Δq}|²⟩ is written as
//! A²[N_a + N_a(N_a − 1)·P(|Δq|)·DW(|Δq|)], where P is the orientation- and
//! configuration-averaged pair phase and DW the Debye-Waller factor.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::decoherence::Superposition;
use crate::error::{Error, Result};
use crate::quadrature::adaptive;
use crate::special::sinc;
use crate::units::{constants, dot3, norm3, Dimension, Quantity, Unit, Vector3Q};

/// Spatial arrangement of the atoms.
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    /// All atoms at one point: every pair is always in phase.
    Point,
    /// Atoms distributed through a ball of this radius (natural length units).
    Sphere { radius: f64 },
    /// Fixed positions (natural length units).
    Explicit(Vec<[f64; 3]>),
}

/// Two-atom correlation model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairCorrelation {
    /// Independent uniform positions, g(r) = 1.
    Trivial,
    /// Hard core: no two atoms closer than the spacing a0.
    ExcludedVolume,
}

/// Material constants for the Debye-Waller estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalProperties {
    /// Kelvin.
    pub temperature: f64,
    /// Natural velocity units.
    pub sound_speed: f64,
    /// Natural units (eV⁴).
    pub mass_density: f64,
}

/// Largest hard-sphere volume fraction accepted for a sphere target (random close packing).
pub const MAX_PACKING_FRACTION: f64 = 0.64;

/// Above this many atoms the excluded-volume average uses the analytic
/// hard-core correction instead of explicit packings.
pub const PACKING_ATOM_LIMIT: u64 = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct TargetComposition {
    n_atoms: u64,
    mass_number: f64,
    geometry: Geometry,
    spacing: f64,
    pair_correlation: PairCorrelation,
    thermal: Option<ThermalProperties>,
}

impl TargetComposition {
    /// Atoms that always scatter in phase, e.g. a single atom.
    pub fn point(n_atoms: u64, mass_number: f64) -> Result<Self> {
        Self::validated(TargetComposition {
            n_atoms,
            mass_number,
            geometry: Geometry::Point,
            spacing: 0.0,
            pair_correlation: PairCorrelation::Trivial,
            thermal: None,
        })
    }

    /// A single atom of mass number A.
    pub fn single_atom(mass_number: f64) -> Result<Self> {
        Self::point(1, mass_number)
    }

    /// Amorphous ball whose volume per atom is a0³, so R = a0·(3N_a/4π)^{1/3}.
    pub fn amorphous_sphere(n_atoms: u64, mass_number: f64, spacing: Quantity, pair: PairCorrelation) -> Result<Self> {
        let a0 = spacing.natural_as(Dimension::LENGTH)?;
        let radius = a0 * (3.0 * n_atoms as f64 / (4.0 * PI)).cbrt();
        Self::validated(TargetComposition {
            n_atoms,
            mass_number,
            geometry: Geometry::Sphere { radius },
            spacing: a0,
            pair_correlation: pair,
            thermal: None,
        })
    }

    pub fn sphere(n_atoms: u64, mass_number: f64, radius: Quantity, spacing: Quantity, pair: PairCorrelation) -> Result<Self> {
        Self::validated(TargetComposition {
            n_atoms,
            mass_number,
            geometry: Geometry::Sphere { radius: radius.natural_as(Dimension::LENGTH)? },
            spacing: spacing.natural_as(Dimension::LENGTH)?,
            pair_correlation: pair,
            thermal: None,
        })
    }

    pub fn explicit(positions: &[Vector3Q], mass_number: f64, spacing: Quantity) -> Result<Self> {
        let pos = positions
            .iter()
            .map(|p| p.natural_as(Dimension::LENGTH))
            .collect::<Result<Vec<_>>>()?;
        Self::validated(TargetComposition {
            n_atoms: pos.len() as u64,
            mass_number,
            geometry: Geometry::Explicit(pos),
            spacing: spacing.natural_as(Dimension::LENGTH)?,
            pair_correlation: PairCorrelation::Trivial,
            thermal: None,
        })
    }

    /// Attach temperature (K), sound speed and mass density for the Debye-Waller factor.
    pub fn with_thermal(mut self, temperature: Quantity, sound_speed: Quantity, mass_density: Quantity) -> Result<Self> {
        let t = temperature.natural_as(Dimension::TEMPERATURE)? / constants::KELVIN;
        let cs = sound_speed.natural_as(Dimension::VELOCITY)?;
        let rho = mass_density.natural_as(Dimension::MASS_DENSITY)?;
        if !(t > 0.0 && cs > 0.0 && rho > 0.0) {
            return Err(Error::InvalidParameter("thermal properties must be positive".into()));
        }
        self.thermal = Some(ThermalProperties { temperature: t, sound_speed: cs, mass_density: rho });
        Ok(self)
    }

    pub fn with_pair_correlation(mut self, pair: PairCorrelation) -> Result<Self> {
        self.pair_correlation = pair;
        Self::validated(self)
    }

    fn validated(t: TargetComposition) -> Result<Self> {
        if t.n_atoms < 1 {
            return Err(Error::InvalidParameter("target needs at least one atom".into()));
        }
        if !(t.mass_number >= 1.0 && t.mass_number.is_finite()) {
            return Err(Error::InvalidParameter(format!("mass number must be ≥ 1, got {}", t.mass_number)));
        }
        match &t.geometry {
            Geometry::Point => {}
            Geometry::Sphere { radius } => {
                if !(*radius > 0.0 && t.spacing > 0.0) {
                    return Err(Error::InvalidParameter("sphere radius and spacing must be positive".into()));
                }
                let fraction = t.packing_fraction();
                if fraction > MAX_PACKING_FRACTION {
                    return Err(Error::InvalidParameter(format!(
                        "{} atoms of diameter a0 do not fit: packing fraction {fraction:.3}",
                        t.n_atoms
                    )));
                }
            }
            Geometry::Explicit(_) => {
                if !(t.spacing > 0.0) {
                    return Err(Error::InvalidParameter("spacing must be positive".into()));
                }
            }
        }
        Ok(t)
    }

    pub fn n_atoms(&self) -> u64 {
        self.n_atoms
    }
    pub fn mass_number(&self) -> f64 {
        self.mass_number
    }
    /// Total nucleon count N = N_a·A.
    pub fn n_nucleons(&self) -> f64 {
        self.n_atoms as f64 * self.mass_number
    }
    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }
    pub fn pair_correlation(&self) -> PairCorrelation {
        self.pair_correlation
    }
    pub fn thermal(&self) -> Option<&ThermalProperties> {
        self.thermal.as_ref()
    }
    pub fn spacing(&self) -> Quantity {
        Quantity::from_natural(self.spacing, Dimension::LENGTH)
    }

    /// Sphere radius, if the geometry is a sphere.
    pub fn radius(&self) -> Option<Quantity> {
        match self.geometry {
            Geometry::Sphere { radius } => Some(Quantity::from_natural(radius, Dimension::LENGTH)),
            _ => None,
        }
    }

    /// Target mass in eV.
    pub fn mass(&self) -> Quantity {
        Quantity::from_natural(self.n_nucleons() * constants::NUCLEON_EV, Dimension::MASS)
    }

    /// Hard-sphere (diameter a0) volume fraction inside a sphere target.
    pub fn packing_fraction(&self) -> f64 {
        match self.geometry {
            Geometry::Sphere { radius } => self.n_atoms as f64 * (self.spacing / radius).powi(3) / 8.0,
            _ => 0.0,
        }
    }

    /// Size of the region over which the pair phase varies; sets quadrature resolution.
    pub(crate) fn extent(&self) -> f64 {
        match &self.geometry {
            Geometry::Point => 0.0,
            Geometry::Sphere { radius } => 2.0 * radius,
            Geometry::Explicit(p) => 2.0 * p.iter().map(|x| norm3(*x)).fold(0.0, f64::max),
        }
    }

    /// ⟨u²⟩/3 in natural units, or 0 without thermal data.
    pub(crate) fn debye_waller_coefficient(&self) -> f64 {
        match (&self.thermal, self.spacing > 0.0) {
            (Some(th), true) => mean_square_displacement(th, self.spacing) / 3.0,
            _ => 0.0,
        }
    }
}

fn mean_square_displacement(th: &ThermalProperties, a0: f64) -> f64 {
    let kt = th.temperature * constants::KELVIN;
    4.0 * kt / (PI * th.sound_speed * th.sound_speed * a0 * th.mass_density)
}

/// Below this the closed form of f(s) loses digits to cancellation.
pub const SERIES_BELOW: f64 = 1.0;

/// f(s) = (sin s − s cos s)/s³, the Fourier transform of a uniform ball up to 4πR³.
pub fn sphere_form_factor(s: f64) -> f64 {
    let s = s.abs();
    if s < SERIES_BELOW {
        // Σ_k (−1)^k (2k+2) s^{2k} / (2k+3)!
        let s2 = s * s;
        let mut term = 1.0 / 3.0;
        let mut sum = term;
        for k in 1..12 {
            let k = k as f64;
            term *= -s2 * (2.0 * k + 2.0) / ((2.0 * k) * (2.0 * k + 2.0) * (2.0 * k + 3.0));
            sum += term;
        }
        sum
    } else {
        (s.sin() - s * s.cos()) / (s * s * s)
    }
}

/// Orientation-averaged pair phase P(|Δq|) with P(0) = 1.
#[derive(Debug, Clone)]
pub(crate) enum PairFunction {
    One,
    Sphere { radius: f64 },
    /// Uniform ball with a hard core of radius a0, edge effects neglected.
    HardSphere { radius: f64, a0: f64, eps: f64 },
    /// Debye sum over pair distances with multiplicities.
    Distances { r: Vec<f64>, weight: Vec<f64> },
}

impl PairFunction {
    pub(crate) fn for_target(t: &TargetComposition) -> PairFunction {
        match (&t.geometry, t.pair_correlation) {
            (Geometry::Point, _) => PairFunction::One,
            (Geometry::Sphere { radius }, PairCorrelation::Trivial) => PairFunction::Sphere { radius: *radius },
            (Geometry::Sphere { radius }, PairCorrelation::ExcludedVolume) => {
                let eps = (t.spacing / radius).powi(3);
                PairFunction::HardSphere { radius: *radius, a0: t.spacing, eps }
            }
            (Geometry::Explicit(p), _) => PairFunction::from_positions(p),
        }
    }

    fn from_positions(p: &[[f64; 3]]) -> PairFunction {
        let mut d = Vec::with_capacity(p.len() * p.len().saturating_sub(1) / 2);
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                let r = [p[i][0] - p[j][0], p[i][1] - p[j][1], p[i][2] - p[j][2]];
                d.push(norm3(r));
            }
        }
        if d.is_empty() {
            return PairFunction::One;
        }
        const MAX_DISTINCT: usize = 20_000;
        let total = d.len() as f64;
        if d.len() <= MAX_DISTINCT {
            let weight = vec![1.0 / total; d.len()];
            return PairFunction::Distances { r: d, weight };
        }
        let r_max = d.iter().cloned().fold(0.0, f64::max);
        let width = r_max / MAX_DISTINCT as f64;
        let mut sum_r = vec![0.0; MAX_DISTINCT + 1];
        let mut count = vec![0.0; MAX_DISTINCT + 1];
        for r in d {
            let b = ((r / width) as usize).min(MAX_DISTINCT);
            sum_r[b] += r;
            count[b] += 1.0;
        }
        let (r, weight) = sum_r
            .iter()
            .zip(&count)
            .filter(|(_, &c)| c > 0.0)
            .map(|(s, c)| (s / c, c / total))
            .unzip();
        PairFunction::Distances { r, weight }
    }

    pub(crate) fn eval(&self, dq: f64) -> f64 {
        match self {
            PairFunction::One => 1.0,
            PairFunction::Sphere { radius } => {
                let f = sphere_form_factor(radius * dq);
                9.0 * f * f
            }
            PairFunction::HardSphere { radius, a0, eps } => {
                let f = sphere_form_factor(radius * dq);
                (9.0 * f * f - 3.0 * eps * sphere_form_factor(a0 * dq)) / (1.0 - eps)
            }
            PairFunction::Distances { r, weight } => r.iter().zip(weight).map(|(r, w)| w * sinc(dq * r)).sum(),
        }
    }
}

/// I(Δq)/A² for rate integrals: weights for the self and pair terms.
#[derive(Debug, Clone)]
pub(crate) struct StructureKernel {
    pub(crate) self_weight: f64,
    pub(crate) pair_weight: f64,
    pub(crate) pair: PairFunction,
    pub(crate) dw: f64,
    /// Length over which the pair phase varies.
    pub(crate) extent: f64,
}

impl StructureKernel {
    /// Incoherent sum over nuclei: N_a·A² with no pair term.
    pub(crate) fn incoherent(t: &TargetComposition) -> Self {
        let a2 = t.mass_number * t.mass_number;
        StructureKernel {
            self_weight: t.n_atoms as f64 * a2,
            pair_weight: 0.0,
            pair: PairFunction::One,
            dw: 0.0,
            extent: 0.0,
        }
    }

    pub(crate) fn coherent(t: &TargetComposition) -> Self {
        let a2 = t.mass_number * t.mass_number;
        let na = t.n_atoms as f64;
        StructureKernel {
            self_weight: na * a2,
            pair_weight: na * (na - 1.0) * a2,
            pair: PairFunction::for_target(t),
            dw: t.debye_waller_coefficient(),
            extent: t.extent(),
        }
    }

    pub(crate) fn eval(&self, dq: f64) -> f64 {
        if self.pair_weight == 0.0 {
            return self.self_weight;
        }
        let dw = if self.dw > 0.0 { (-dq * dq * self.dw).exp() } else { 1.0 };
        self.self_weight + self.pair_weight * self.pair.eval(dq) * dw
    }

}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

const CHUNK: usize = 256;

pub(crate) fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

fn uniform_in_ball<R: Rng>(rng: &mut R, radius: f64) -> [f64; 3] {
    loop {
        let p = [rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0];
        if dot3(p, p) <= 1.0 {
            return p.map(|c| c * radius);
        }
    }
}

pub(crate) fn uniform_direction<R: Rng>(rng: &mut R) -> [f64; 3] {
    let c = 2.0 * rng.gen::<f64>() - 1.0;
    let phi = 2.0 * PI * rng.gen::<f64>();
    let s = (1.0 - c * c).max(0.0).sqrt();
    [s * phi.cos(), s * phi.sin(), c]
}

/// Random packing of `n` centres in a ball with minimum separation `a0`.
///
/// Random sequential addition jams near a 0.38 volume fraction, so denser
/// targets start from a randomly placed fcc cluster and are disordered by
/// hard-sphere Metropolis sweeps.
pub(crate) fn random_packing<R: Rng>(rng: &mut R, n: usize, radius: f64, a0: f64) -> Option<Vec<[f64; 3]>> {
    if let Some(p) = sequential_addition(rng, n, radius, a0) {
        return Some(p);
    }
    let mut pts = fcc_cluster(rng, n, radius, a0)?;
    let step = 0.3 * a0;
    let a02 = a0 * a0;
    let r2 = radius * radius;
    for _ in 0..PACKING_SWEEPS {
        for i in 0..n {
            let d = uniform_in_ball(rng, step);
            let trial = [pts[i][0] + d[0], pts[i][1] + d[1], pts[i][2] + d[2]];
            if dot3(trial, trial) > r2 {
                continue;
            }
            let clash = pts.iter().enumerate().any(|(j, q)| {
                let e = [trial[0] - q[0], trial[1] - q[1], trial[2] - q[2]];
                j != i && dot3(e, e) < a02
            });
            if !clash {
                pts[i] = trial;
            }
        }
    }
    Some(pts)
}

const PACKING_SWEEPS: usize = 200;

fn sequential_addition<R: Rng>(rng: &mut R, n: usize, radius: f64, a0: f64) -> Option<Vec<[f64; 3]>> {
    let mut pts: Vec<[f64; 3]> = Vec::with_capacity(n);
    let a02 = a0 * a0;
    let max_attempts = 2_000 * n.max(1);
    let mut attempts = 0;
    while pts.len() < n {
        attempts += 1;
        if attempts > max_attempts {
            return None;
        }
        let p = uniform_in_ball(rng, radius);
        let clash = pts.iter().any(|q| {
            let d = [p[0] - q[0], p[1] - q[1], p[2] - q[2]];
            dot3(d, d) < a02
        });
        if !clash {
            pts.push(p);
        }
    }
    Some(pts)
}

/// The `n` sites of a randomly offset and rotated fcc lattice (nearest
/// neighbours at a0) closest to the centre, if they fit inside the ball.
fn fcc_cluster<R: Rng>(rng: &mut R, n: usize, radius: f64, a0: f64) -> Option<Vec<[f64; 3]>> {
    let cube = a0 * std::f64::consts::SQRT_2;
    let basis = [[0.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.5, 0.0, 0.5], [0.0, 0.5, 0.5]];
    let offset = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
    let axis = uniform_direction(rng);
    let angle = 2.0 * PI * rng.gen::<f64>();
    let rotate = |v: [f64; 3]| -> [f64; 3] {
        // Rodrigues rotation about `axis`.
        let (s, c) = angle.sin_cos();
        let k = axis;
        let kv = [k[1] * v[2] - k[2] * v[1], k[2] * v[0] - k[0] * v[2], k[0] * v[1] - k[1] * v[0]];
        let kd = dot3(k, v);
        [0, 1, 2].map(|i| v[i] * c + kv[i] * s + k[i] * kd * (1.0 - c))
    };
    let m = (radius / cube).ceil() as i64 + 2;
    let mut sites = Vec::new();
    for i in -m..=m {
        for j in -m..=m {
            for k in -m..=m {
                for b in &basis {
                    let p = [
                        (i as f64 + b[0] + offset[0]) * cube,
                        (j as f64 + b[1] + offset[1]) * cube,
                        (k as f64 + b[2] + offset[2]) * cube,
                    ];
                    let p = rotate(p);
                    if dot3(p, p) <= radius * radius {
                        sites.push(p);
                    }
                }
            }
        }
    }
    if sites.len() < n {
        return None;
    }
    sites.sort_by(|a, b| dot3(*a, *a).total_cmp(&dot3(*b, *b)));
    sites.truncate(n);
    Some(sites)
}

fn phase_sum_sq(pts: &[[f64; 3]], dq: [f64; 3]) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for p in pts {
        let (s, c) = dot3(*p, dq).sin_cos();
        re += c;
        im -= s;
    }
    re * re + im * im
}

/// I(Δq) = ⟨|Σᵢ A e^{−i xᵢ·Δq}|²⟩ averaged over `samples` configurations of the
/// target (including the Debye-Waller suppression of the pair terms).
pub fn structure_factor(delta_q: &Vector3Q, target: &TargetComposition, samples: usize, seed: u64) -> Result<Estimate> {
    let dq = delta_q.natural_as(Dimension::MOMENTUM)?;
    let a2 = target.mass_number * target.mass_number;
    let na = target.n_atoms as f64;
    let dqn = norm3(dq);
    let dw = (-dqn * dqn * target.debye_waller_coefficient()).exp();
    let finish = |sum_sq: f64| a2 * (na + (sum_sq - na) * dw);
    let exact = |p: f64| Estimate { value: a2 * (na + na * (na - 1.0) * p * dw), std_error: 0.0 };
    if dqn == 0.0 {
        return Ok(Estimate { value: a2 * na * na, std_error: 0.0 });
    }
    match (&target.geometry, target.pair_correlation) {
        (Geometry::Point, _) => Ok(exact(1.0)),
        (Geometry::Explicit(p), _) => Ok(Estimate { value: finish(phase_sum_sq(p, dq)), std_error: 0.0 }),
        (Geometry::Sphere { radius }, pair) => {
            let excluded = pair == PairCorrelation::ExcludedVolume;
            if excluded && target.n_atoms > PACKING_ATOM_LIMIT {
                return Ok(exact(PairFunction::for_target(target).eval(dqn)));
            }
            let samples = samples.max(2);
            let n = target.n_atoms as usize;
            let chunks = samples.div_ceil(CHUNK);
            let parts: Vec<Option<(f64, f64, usize)>> = (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let mut rng = chunk_rng(seed, c as u64);
                    let count = CHUNK.min(samples - c * CHUNK);
                    let (mut s, mut s2) = (0.0, 0.0);
                    for _ in 0..count {
                        let pts = if excluded {
                            random_packing(&mut rng, n, *radius, target.spacing)?
                        } else {
                            (0..n).map(|_| uniform_in_ball(&mut rng, *radius)).collect()
                        };
                        let x = finish(phase_sum_sq(&pts, dq));
                        s += x;
                        s2 += x * x;
                    }
                    Some((s, s2, count))
                })
                .collect();
            let mut s = 0.0;
            let mut s2 = 0.0;
            let mut k = 0usize;
            for p in parts {
                let (a, b, c) = p.ok_or_else(|| Error::InvalidParameter("random packing did not converge".into()))?;
                s += a;
                s2 += b;
                k += c;
            }
            let mean = s / k as f64;
            let var = (s2 / k as f64 - mean * mean).max(0.0) * k as f64 / (k as f64 - 1.0);
            Ok(Estimate { value: mean, std_error: (var / k as f64).sqrt() })
        }
    }
}

/// Coherence regime of a boost value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    FullCoherence,
    Intermediate,
    Incoherent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnhancementResult {
    /// Per-A² boost, 1 for incoherent and N_a for fully coherent scattering.
    pub boost: f64,
    pub mc_error: f64,
    pub regime: Regime,
}

fn classify(boost: f64, n_atoms: f64) -> Regime {
    if boost >= 0.9 * n_atoms {
        Regime::FullCoherence
    } else if boost <= 1.1 {
        Regime::Incoherent
    } else {
        Regime::Intermediate
    }
}

/// Number of configurations averaged when the excluded-volume boost needs explicit packings.
pub const BOOST_PACKINGS: usize = 64;

/// B_coher(q): the r̂-average of I(Δq)/(N_a A²) weighted by 1 − cos(Δq·Δx).
///
/// r̂ is sampled on a stratified (cos θ, φ) grid about q̂ with one antithetic
/// pair per stratum; the error is the standard error of the strata.
pub fn coherent_boost(q: &Vector3Q, sup: &Superposition, samples: usize, seed: u64) -> Result<EnhancementResult> {
    let target = sup.target();
    let qv = q.natural_as(Dimension::MOMENTUM)?;
    let dx = sup.delta_x_n();
    let qn = norm3(qv);
    if qn == 0.0 || norm3(dx) == 0.0 {
        return Err(Error::VanishingDenominator);
    }
    let na = target.n_atoms as f64;
    let dw = target.debye_waller_coefficient();

    // Per-atom structure S = I/(N_a A²) as a function of Δq.
    enum Pair {
        Analytic(PairFunction),
        Configurations(Vec<Vec<[f64; 3]>>),
    }
    let pair = match (&target.geometry, target.pair_correlation) {
        (Geometry::Sphere { radius }, PairCorrelation::ExcludedVolume) if target.n_atoms <= PACKING_ATOM_LIMIT => {
            let configs: Option<Vec<_>> = (0..BOOST_PACKINGS)
                .into_par_iter()
                .map(|k| {
                    let mut rng = chunk_rng(seed ^ 0x005e_ed0f_9ac4, k as u64);
                    random_packing(&mut rng, target.n_atoms as usize, *radius, target.spacing)
                })
                .collect();
            Pair::Configurations(configs.ok_or_else(|| Error::InvalidParameter("random packing did not converge".into()))?)
        }
        (Geometry::Explicit(p), _) => Pair::Configurations(vec![p.clone()]),
        _ => Pair::Analytic(PairFunction::for_target(target)),
    };
    let per_atom = |dqv: [f64; 3]| -> f64 {
        if target.n_atoms == 1 {
            return 1.0;
        }
        let d = norm3(dqv);
        let w = if dw > 0.0 { (-d * d * dw).exp() } else { 1.0 };
        match &pair {
            Pair::Analytic(p) => 1.0 + (na - 1.0) * p.eval(d) * w,
            Pair::Configurations(cs) => {
                let mean: f64 = cs.iter().map(|c| phase_sum_sq(c, dqv)).sum::<f64>() / cs.len() as f64;
                1.0 + (mean / na - 1.0) * w
            }
        }
    };

    // Orthonormal frame with e3 = q̂.
    let e3 = qv.map(|c| c / qn);
    let helper = if e3[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let e1 = {
        let d = dot3(helper, e3);
        let v = [helper[0] - d * e3[0], helper[1] - d * e3[1], helper[2] - d * e3[2]];
        let n = norm3(v);
        v.map(|c| c / n)
    };
    let e2 = [e3[1] * e1[2] - e3[2] * e1[1], e3[2] * e1[0] - e3[0] * e1[2], e3[0] * e1[1] - e3[1] * e1[0]];

    let pairs = (samples / 2).max(16);
    let n_phi = ((pairs as f64).sqrt() / 2.0).ceil().max(1.0) as usize;
    let n_mu = pairs.div_ceil(n_phi);
    let strata = n_mu * n_phi;
    let chunks = strata.div_ceil(CHUNK);
    let values: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = chunk_rng(seed, c as u64);
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(strata);
            (lo..hi)
                .map(|s| {
                    let (i, j) = (s / n_phi, s % n_phi);
                    let u1: f64 = rng.gen();
                    let u2: f64 = rng.gen();
                    let mut num = 0.0;
                    let mut den = 0.0;
                    for (a, b) in [(u1, u2), (1.0 - u1, 1.0 - u2)] {
                        let mu = -1.0 + 2.0 * (i as f64 + a) / n_mu as f64;
                        let phi = 2.0 * PI * (j as f64 + b) / n_phi as f64;
                        let st = (1.0 - mu * mu).max(0.0).sqrt();
                        let r = [
                            st * phi.cos() * e1[0] + st * phi.sin() * e2[0] + mu * e3[0],
                            st * phi.cos() * e1[1] + st * phi.sin() * e2[1] + mu * e3[1],
                            st * phi.cos() * e1[2] + st * phi.sin() * e2[2] + mu * e3[2],
                        ];
                        let dqv = [qv[0] - qn * r[0], qv[1] - qn * r[1], qv[2] - qn * r[2]];
                        let w = crate::special::one_minus_cos(dot3(dqv, dx));
                        num += w * per_atom(dqv);
                        den += w;
                    }
                    (0.5 * num, 0.5 * den)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let k = values.len() as f64;
    let num: f64 = values.iter().map(|v| v.0).sum::<f64>() / k;
    let den: f64 = values.iter().map(|v| v.1).sum::<f64>() / k;
    if !(den > 1e-300) {
        return Err(Error::VanishingDenominator);
    }
    let boost = num / den;
    // Ratio estimator variance (delta method over strata).
    let resid_var = values.iter().map(|(n, d)| (n - boost * d).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
    let mc_error = (resid_var / k).sqrt() / den;
    Ok(EnhancementResult { boost, mc_error, regime: classify(boost, na) })
}

/// Atoms inside a sphere of diameter λ̄, capped at N_a.
pub fn coherent_volume_estimate(lambda_bar: Quantity, target: &TargetComposition) -> Result<f64> {
    let lb = lambda_bar.natural_as(Dimension::LENGTH)?;
    if !(lb > 0.0) {
        return Err(Error::InvalidParameter("λ̄ must be positive".into()));
    }
    let na = target.n_atoms as f64;
    let volume = match &target.geometry {
        Geometry::Point => return Ok(na),
        Geometry::Sphere { radius } => 4.0 * PI / 3.0 * radius.powi(3),
        Geometry::Explicit(_) => {
            let r = 0.5 * target.extent();
            if r == 0.0 {
                return Ok(na);
            }
            4.0 * PI / 3.0 * r.powi(3)
        }
    };
    let inside = na / volume * 4.0 * PI / 3.0 * (0.5 * lb).powi(3);
    Ok(inside.min(na))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DebyeWaller {
    pub factor: f64,
    /// Set when T < 100 K, below which the high-temperature Debye estimate fails.
    pub below_validity: bool,
}

/// exp(−Δq²⟨u²⟩/3ħ²) with ⟨u²⟩ = 4k_B T/(π c_s² a0 ρ_t).
pub fn debye_waller(target: &TargetComposition, delta_q: Quantity) -> Result<DebyeWaller> {
    let dq = delta_q.natural_as(Dimension::MOMENTUM)?;
    let th = target
        .thermal
        .ok_or_else(|| Error::InvalidParameter("target has no thermal properties".into()))?;
    if !(target.spacing > 0.0) {
        return Err(Error::InvalidParameter("Debye-Waller factor needs a positive spacing".into()));
    }
    let u2 = mean_square_displacement(&th, target.spacing);
    Ok(DebyeWaller { factor: (-dq * dq * u2 / 3.0).exp(), below_validity: th.temperature < 100.0 })
}

/// Root-mean-square thermal displacement √⟨u²⟩.
pub fn thermal_displacement(target: &TargetComposition) -> Option<Quantity> {
    let th = target.thermal?;
    Some(Quantity::from_natural(mean_square_displacement(&th, target.spacing).sqrt(), Dimension::LENGTH))
}

/// (9/4π)∫_{θ ≥ θ̄} dr̂ f(RΔq)², Δq = 2q sin(θ/2), by adaptive quadrature in cos θ.
pub fn forward_fraction(q_radius: f64, theta_min: f64) -> f64 {
    let c_max = theta_min.cos();
    if c_max <= -1.0 {
        return 0.0;
    }
    let g = |c: f64| {
        let s = q_radius * (2.0 * (1.0 - c)).max(0.0).sqrt();
        let f = sphere_form_factor(s);
        f * f
    };
    // Split where the form factor oscillates so every piece is smooth.
    let n = (2.0 * q_radius / PI).ceil().clamp(1.0, 4096.0) as usize;
    let mut total = 0.0;
    for k in 0..n {
        // Breakpoints uniform in s over [0, 2qR].
        let s_hi = 2.0 * q_radius * (1.0 - k as f64 / n as f64);
        let s_lo = 2.0 * q_radius * (1.0 - (k + 1) as f64 / n as f64);
        let c_lo = (1.0 - s_hi * s_hi / (2.0 * q_radius * q_radius)).max(-1.0);
        let c_hi = (1.0 - s_lo * s_lo / (2.0 * q_radius * q_radius)).min(1.0);
        let (a, b) = (c_lo, c_hi.min(c_max));
        if b > a {
            total += adaptive(g, a, b, 1e-16, 1e-12).0;
        }
    }
    4.5 * total
}

/// σ·A²[N_a + N_a(N_a−1)(9/4π)∫_{θ≥θ̄} f(RΔq)² dr̂] for a sphere with trivial g.
pub fn bulk_cross_section(target: &TargetComposition, sigma: Quantity, q: Quantity, theta_min: f64) -> Result<Quantity> {
    let sigma = sigma.natural_as(Dimension::AREA)?;
    let q = q.natural_as(Dimension::MOMENTUM)?;
    let radius = match target.geometry {
        Geometry::Sphere { radius } => radius,
        _ => return Err(Error::InvalidParameter("bulk cross-section needs a sphere target".into())),
    };
    let na = target.n_atoms as f64;
    let a2 = target.mass_number * target.mass_number;
    let frac = forward_fraction(q * radius, theta_min);
    Ok(Quantity::from_natural(sigma * a2 * (na + na * (na - 1.0) * frac), Dimension::AREA))
}

/// Reduced wavelength λ̄ = ħ/q.
pub fn reduced_wavelength(q: Quantity) -> Result<Quantity> {
    Ok(Quantity::from_natural(1.0 / q.natural_as(Dimension::MOMENTUM)?, Dimension::LENGTH))
}

/// Gold: a0 = 2.6 Å, ρ = 19.3 g/cm³, c_s = 3240 m/s.
pub fn gold_thermal(temperature_k: f64) -> (Quantity, Quantity, Quantity) {
    (
        Quantity::new(temperature_k, Unit::KELVIN_U),
        Quantity::new(3240.0, Unit::M_PER_S),
        Quantity::new(19.3, Unit::G_PER_CM3),
    )
}
