//! Reach in the (mass, cross-section) plane: e-fold exclusion boundaries,
//! phase-shift observability and the experiment catalog.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::Deserialize;

use crate::coherent::{PairCorrelation, TargetComposition};
use crate::decoherence::{rate_with, Enhancement, RateOptions, RateResult, Superposition};
use crate::error::{Error, Result};
use crate::halo::{DMCandidate, HaloModel};
use crate::shielding::Environment;
use crate::units::{Dimension, Quantity, Unit, Vector3Q};

const CATALOG_TOML: &str = include_str!("../data/catalog.toml");

pub const MASS_GRID_LOW_EV: f64 = 10.0;
pub const MASS_GRID_HIGH_EV: f64 = 1e8;
pub const DEFAULT_GRID_POINTS: usize = 60;
/// Bracket for the threshold search, cm².
pub const SIGMA_RANGE_CM2: (f64, f64) = (1e-45, 1e-10);

/// Cross-section at which rates are evaluated before rescaling; the rate is
/// linear in σ.
const SIGMA_REF_CM2: f64 = 1e-20;

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub name: String,
    pub description: String,
    pub superposition: Superposition,
    pub environment: Environment,
    pub shots: u64,
    /// Parameter name → provenance.
    pub notes: BTreeMap<String, String>,
}

impl ExperimentSpec {
    pub fn new(name: &str, superposition: Superposition, environment: Environment, shots: u64) -> Result<Self> {
        if shots < 1 {
            return Err(Error::InvalidParameter("shots must be at least 1".into()));
        }
        Ok(ExperimentSpec {
            name: name.to_string(),
            description: String::new(),
            superposition,
            environment,
            shots,
            notes: BTreeMap::new(),
        })
    }

    /// Same experiment with Δx turned to point along the lab velocity of `halo`.
    pub fn facing_wind(&self, halo: &HaloModel) -> Result<Self> {
        let ve = halo.v_earth().natural();
        let n = ve.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n == 0.0 {
            return Ok(self.clone());
        }
        let dir = ve.map(|c| c / n);
        let dx = Vector3Q::along(self.superposition.delta_x().norm(), dir);
        Ok(ExperimentSpec { superposition: self.superposition.with_delta_x(dx)?, ..self.clone() })
    }

    pub fn with_superposition(&self, superposition: Superposition) -> Self {
        ExperimentSpec { superposition, ..self.clone() }
    }

    pub fn with_environment(&self, environment: Environment) -> Self {
        ExperimentSpec { environment, ..self.clone() }
    }

    pub fn separation(&self) -> Quantity {
        self.superposition.delta_x().norm()
    }

    pub fn hold_time(&self) -> Quantity {
        self.superposition.hold_time()
    }
}

#[derive(Deserialize)]
struct CatalogFile {
    experiment: Vec<CatalogEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogEntry {
    name: String,
    #[serde(default)]
    description: String,
    nucleons: f64,
    mass_number: f64,
    geometry: String,
    spacing_angstrom: Option<f64>,
    radius_m: Option<f64>,
    separation_m: f64,
    hold_time_s: Option<f64>,
    talbot_multiple: Option<f64>,
    temperature_k: Option<f64>,
    sound_speed_m_s: Option<f64>,
    density_g_cm3: Option<f64>,
    environment: String,
    #[serde(default = "one")]
    shots: u64,
    #[serde(default)]
    provenance: BTreeMap<String, String>,
}

fn one() -> u64 {
    1
}

impl CatalogEntry {
    fn build(self) -> Result<ExperimentSpec> {
        let bad = |what: &str| Error::Data(format!("{}: {what}", self.name));
        let n_atoms = (self.nucleons / self.mass_number).round();
        if !(n_atoms >= 1.0 && n_atoms < u64::MAX as f64) {
            return Err(bad("nucleon count below one atom"));
        }
        let n_atoms = n_atoms as u64;
        let spacing = || {
            self.spacing_angstrom
                .map(|a| Quantity::new(a, Unit::ANGSTROM))
                .ok_or_else(|| bad("spacing_angstrom required"))
        };
        let mut target = match self.geometry.as_str() {
            "point" => TargetComposition::point(n_atoms, self.mass_number)?,
            "amorphous" => {
                TargetComposition::amorphous_sphere(n_atoms, self.mass_number, spacing()?, PairCorrelation::ExcludedVolume)?
            }
            "sphere" => {
                let r = self.radius_m.ok_or_else(|| bad("radius_m required"))?;
                TargetComposition::sphere(
                    n_atoms,
                    self.mass_number,
                    Quantity::new(r, Unit::METER),
                    spacing()?,
                    PairCorrelation::ExcludedVolume,
                )?
            }
            g => return Err(bad(&format!("unknown geometry {g:?}"))),
        };
        if let (Some(t), Some(cs), Some(rho)) = (self.temperature_k, self.sound_speed_m_s, self.density_g_cm3) {
            target = target.with_thermal(
                Quantity::new(t, Unit::KELVIN_U),
                Quantity::new(cs, Unit::M_PER_S),
                Quantity::new(rho, Unit::G_PER_CM3),
            )?;
        }
        let d = Quantity::new(self.separation_m, Unit::METER);
        let hold = match (self.hold_time_s, self.talbot_multiple) {
            (Some(t), None) => Quantity::new(t, Unit::SECOND_U),
            (None, Some(k)) => {
                // k·M·d²/h with h = 2π in natural units
                let t = k * target.mass().natural() * d.natural().powi(2) / (2.0 * PI);
                Quantity::from_natural(t, Dimension::TIME)
            }
            _ => return Err(bad("exactly one of hold_time_s and talbot_multiple")),
        };
        let sup = Superposition::new(Vector3Q::along(d, [0.0, 0.0, 1.0]), hold, target)?;
        let env: Environment = self.environment.parse()?;
        let mut spec = ExperimentSpec::new(&self.name, sup, env, self.shots)?;
        spec.description = self.description;
        spec.notes = self.provenance;
        Ok(spec)
    }
}

/// Parse experiments from catalog TOML.
pub fn catalog_from_toml(text: &str) -> Result<Vec<ExperimentSpec>> {
    let file: CatalogFile = toml::from_str(text).map_err(|e| Error::Data(e.to_string()))?;
    file.experiment.into_iter().map(CatalogEntry::build).collect()
}

/// Shipped experiments.
pub fn catalog() -> Vec<ExperimentSpec> {
    static CATALOG: OnceLock<Vec<ExperimentSpec>> = OnceLock::new();
    CATALOG.get_or_init(|| catalog_from_toml(CATALOG_TOML).expect("shipped catalog")).clone()
}

/// Shipped experiment by name, case-insensitive.
pub fn experiment(name: &str) -> Result<ExperimentSpec> {
    catalog()
        .into_iter()
        .find(|e| e.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::UnknownExperiment(name.to_string()))
}

/// Short-wavelength estimate m/(v0·T·ρ·N·A).
pub fn sigma0_estimate(mass: Quantity, exp: &ExperimentSpec, halo: &HaloModel) -> Result<Quantity> {
    let m = positive_mass(mass)?;
    let t = exp.superposition.target();
    let s = m / (halo.v0().natural() * exp.hold_time().natural() * halo.rho().natural() * t.n_nucleons() * t.mass_number());
    Ok(Quantity::from_natural(s, Dimension::AREA))
}

/// Long-wavelength estimate: σ0·(λ0/Δx)² with A replaced by N.
pub fn low_mass_threshold(mass: Quantity, exp: &ExperimentSpec, halo: &HaloModel) -> Result<Quantity> {
    let m = positive_mass(mass)?;
    let dx = exp.separation().natural();
    if !(dx > 0.0) {
        return Err(Error::InvalidParameter("zero separation".into()));
    }
    let lambda0 = 2.0 * PI / (m * halo.v0().natural());
    let t = exp.superposition.target();
    let s0 = sigma0_estimate(mass, exp, halo)?.natural();
    Ok(Quantity::from_natural(s0 * (lambda0 / dx).powi(2) * t.mass_number() / t.n_nucleons(), Dimension::AREA))
}

fn positive_mass(mass: Quantity) -> Result<f64> {
    let m = mass.natural_mass()?;
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::InvalidParameter(format!("mass {m} eV")));
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    /// |γ| = 1/e, i.e. F_R·T = 1.
    EFold,
    /// |F_I|·T ≥ 1 with F_R·T ≤ 1.
    PhaseShift,
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Criterion::EFold => "e-fold",
            Criterion::PhaseShift => "phase-shift",
        })
    }
}

/// Threshold σ (cm²) against mass (eV).
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityCurve {
    pub experiment: String,
    pub criterion: Criterion,
    points: Vec<(f64, f64)>,
    /// Masses with no threshold in range, and why.
    pub omitted: Vec<(f64, String)>,
}

impl SensitivityCurve {
    pub fn new(experiment: &str, criterion: Criterion, points: Vec<(f64, f64)>) -> Result<Self> {
        if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InvalidParameter("masses must be strictly increasing".into()));
        }
        if points.iter().any(|p| !(p.0 > 0.0 && p.1 > 0.0 && p.1.is_finite())) {
            return Err(Error::InvalidParameter("masses and thresholds must be positive".into()));
        }
        Ok(SensitivityCurve { experiment: experiment.to_string(), criterion, points, omitted: Vec::new() })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Threshold at a listed mass.
    pub fn at(&self, mass_ev: f64) -> Option<f64> {
        self.points.iter().find(|p| p.0 == mass_ev).map(|p| p.1)
    }
}

/// `n` log-spaced masses from `lo` to `hi` eV inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && n >= 2) {
        return Err(Error::InvalidParameter(format!("grid {lo}:{hi}:{n}")));
    }
    let (a, b) = (lo.log10(), hi.log10());
    Ok((0..n)
        .map(|i| match i {
            0 => lo,
            _ if i == n - 1 => hi,
            _ => 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64),
        })
        .collect())
}

pub fn default_mass_grid() -> Vec<f64> {
    log_grid(MASS_GRID_LOW_EV, MASS_GRID_HIGH_EV, DEFAULT_GRID_POINTS).expect("valid default grid")
}

#[derive(Debug, Clone, Copy)]
pub struct ScanOptions {
    pub rate: RateOptions,
    pub enhancement: Enhancement,
    pub sigma_range_cm2: (f64, f64),
    /// Bisection width in log10 σ.
    pub log_tol: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            rate: RateOptions::default(),
            enhancement: Enhancement::On,
            sigma_range_cm2: SIGMA_RANGE_CM2,
            log_tol: 1e-6,
        }
    }
}

/// Rate per cm² of cross-section at one mass.
pub fn unit_rate(exp: &ExperimentSpec, halo: &HaloModel, mass_ev: f64, opts: &ScanOptions) -> Result<RateResult> {
    let dm = DMCandidate::from_ev_cm2(mass_ev, SIGMA_REF_CM2)?;
    Ok(rate_with(&dm, &exp.superposition, halo, opts.enhancement, &opts.rate)?.scaled(1.0 / SIGMA_REF_CM2))
}

/// Outcome of a threshold search at one mass.
#[derive(Debug, Clone, PartialEq)]
pub enum Threshold {
    Found(f64),
    Omitted(String),
}

/// Smallest σ in range with k·σ·e^{−wσ} = 1, by bisection in log σ. `k` is the
/// unshielded count per cm², `w` the overburden Σ column·N_A·A.
pub fn lower_root(k: f64, w: f64, range: (f64, f64), log_tol: f64) -> Threshold {
    if !(k > 0.0) {
        return Threshold::Omitted("rate vanishes".into());
    }
    let g = |ls: f64| k.ln() + ls * std::f64::consts::LN_10 - w * 10f64.powf(ls);
    let cap = if w > 0.0 { range.1.min(1.0 / w) } else { range.1 };
    let (mut lo, mut hi) = (range.0.log10(), cap.log10());
    if !(lo < hi) {
        return Threshold::Omitted(format!("shielded above {:.3e} cm2", 1.0 / w));
    }
    if g(lo) > 0.0 {
        return Threshold::Omitted(format!("threshold below {:.0e} cm2", range.0));
    }
    if g(hi) < 0.0 {
        return Threshold::Omitted(if cap < range.1 {
            "hidden by shielding at every cross-section".into()
        } else {
            format!("threshold above {:.0e} cm2", range.1)
        });
    }
    while hi - lo > log_tol {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Threshold::Found(10f64.powf(0.5 * (lo + hi)))
}

fn overburden(exp: &ExperimentSpec) -> Result<f64> {
    Ok(exp.environment.column()?.weighted_nuclei())
}

/// e-fold threshold at one mass.
pub fn exclusion_point(exp: &ExperimentSpec, halo: &HaloModel, mass_ev: f64, opts: &ScanOptions) -> Result<Threshold> {
    let r = unit_rate(exp, halo, mass_ev, opts)?;
    let k = r.f_real_per_s() * exp.hold_time().value_in(Unit::SECOND_U)?;
    Ok(lower_root(k, overburden(exp)?, opts.sigma_range_cm2, opts.log_tol))
}

/// Phase-shift window (σ_low, σ_high) at one mass, if any.
pub fn phase_point(exp: &ExperimentSpec, halo: &HaloModel, mass_ev: f64, opts: &ScanOptions) -> Result<Option<(f64, f64)>> {
    let r = unit_rate(exp, halo, mass_ev, opts)?;
    let t = exp.hold_time().value_in(Unit::SECOND_U)?;
    let w = overburden(exp)?;
    let Threshold::Found(low) = lower_root(r.f_imag_per_s().abs() * t, w, opts.sigma_range_cm2, opts.log_tol) else {
        return Ok(None);
    };
    let cap = if w > 0.0 { opts.sigma_range_cm2.1.min(1.0 / w) } else { opts.sigma_range_cm2.1 };
    let high = match lower_root(r.f_real_per_s() * t, w, opts.sigma_range_cm2, opts.log_tol) {
        Threshold::Found(s) => s,
        Threshold::Omitted(_) if r.f_real_per_s() * t * opts.sigma_range_cm2.0 < 1.0 => cap,
        Threshold::Omitted(_) => return Ok(None),
    };
    Ok((low < high).then_some((low, high)))
}

fn check_grid(masses: &[f64]) -> Result<()> {
    let ok = masses.windows(2).all(|w| w[1] > w[0])
        && masses.iter().all(|&m| (MASS_GRID_LOW_EV * (1.0 - 1e-12)..=MASS_GRID_HIGH_EV * (1.0 + 1e-12)).contains(&m));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "masses must increase within [{MASS_GRID_LOW_EV}, {MASS_GRID_HIGH_EV}] eV"
        )))
    }
}

/// e-fold boundary over a mass grid; masses without a bracketed root are
/// listed in `omitted`.
pub fn exclusion_boundary(exp: &ExperimentSpec, halo: &HaloModel, masses: &[f64], opts: &ScanOptions) -> Result<SensitivityCurve> {
    check_grid(masses)?;
    let out: Vec<Threshold> =
        masses.par_iter().map(|&m| exclusion_point(exp, halo, m, opts)).collect::<Result<_>>()?;
    let mut curve = SensitivityCurve::new(&exp.name, Criterion::EFold, Vec::new())?;
    for (&m, t) in masses.iter().zip(out) {
        match t {
            Threshold::Found(s) => curve.points.push((m, s)),
            Threshold::Omitted(why) => curve.omitted.push((m, why)),
        }
    }
    Ok(curve)
}

/// Lower (|F_I|·T = 1) and upper (F_R·T = 1) edges of the phase-shift region.
pub fn phase_shift_region(
    exp: &ExperimentSpec,
    halo: &HaloModel,
    masses: &[f64],
    opts: &ScanOptions,
) -> Result<(SensitivityCurve, SensitivityCurve)> {
    check_grid(masses)?;
    let out: Vec<Option<(f64, f64)>> =
        masses.par_iter().map(|&m| phase_point(exp, halo, m, opts)).collect::<Result<_>>()?;
    let mut lower = SensitivityCurve::new(&exp.name, Criterion::PhaseShift, Vec::new())?;
    let mut upper = lower.clone();
    for (&m, w) in masses.iter().zip(out) {
        match w {
            Some((a, b)) => {
                lower.points.push((m, a));
                upper.points.push((m, b));
            }
            None => {
                lower.omitted.push((m, "empty".into()));
                upper.omitted.push((m, "empty".into()));
            }
        }
    }
    Ok((lower, upper))
}

/// Thresholds divided by √M for M independent shots.
pub fn statistical_boost(curve: &SensitivityCurve, shots: f64) -> Result<SensitivityCurve> {
    if !(shots >= 1.0 && shots.is_finite()) {
        return Err(Error::InvalidParameter(format!("shots {shots}")));
    }
    let k = shots.sqrt();
    Ok(SensitivityCurve { points: curve.points.iter().map(|&(m, s)| (m, s / k)).collect(), ..curve.clone() })
}
