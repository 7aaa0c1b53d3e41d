use std::f64::consts::PI;

use dmdecoh::coherent::{coherent_boost, Regime};
use dmdecoh::decoherence::{
    chi_scan, decoherence_factor, port_probabilities, rate_mc, rate_with, Enhancement, RateOptions, RateResult,
};
use dmdecoh::halo::{DMCandidate, HaloModel};
use dmdecoh::sensitivity::{
    catalog, catalog_from_toml, default_mass_grid, exclusion_point, phase_point, statistical_boost, Criterion,
    ExperimentSpec, ScanOptions, SensitivityCurve, Threshold,
};
use dmdecoh::shielding::{attenuation_length, max_visible_sigma, Environment, MaterialTable, ShieldColumn};
use dmdecoh::{Dimension, Error, Quantity, Unit, Vector3Q};
use rayon::prelude::*;

use crate::config::{ConfigError, Raw, Settings};
use crate::output::{Cell, Provenance, Table};

#[derive(Debug)]
pub enum RunError {
    Config(String),
    Numerical(String),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e.0)
    }
}

fn classify(e: Error) -> RunError {
    match e {
        Error::NonConvergent { .. } => RunError::Numerical(e.to_string()),
        e => RunError::Config(e.to_string()),
    }
}

type RResult<T> = std::result::Result<T, RunError>;

/// A finished table; `failure` marks a scan in which some points did not converge.
pub struct Report {
    pub table: Table,
    pub provenance: Provenance,
    pub failure: Option<String>,
}

impl Report {
    fn complete(table: Table, provenance: Provenance) -> Self {
        Report { table, provenance, failure: None }
    }
}

pub struct Context<'a> {
    pub settings: &'a Settings,
    pub halo: HaloModel,
    user_catalog: Vec<ExperimentSpec>,
}

impl<'a> Context<'a> {
    pub fn new(settings: &'a Settings) -> RResult<Self> {
        let mut halo = HaloModel::standard();
        let q = |k, d| settings.quantity(k, d);
        let (rho, v0, v_esc) = (
            q("rho", Dimension::MASS_DENSITY)?,
            q("v0", Dimension::VELOCITY)?,
            q("v_esc", Dimension::VELOCITY)?,
        );
        let v_earth = q("v_earth", Dimension::VELOCITY)?;
        if rho.is_some() || v0.is_some() || v_esc.is_some() || v_earth.is_some() {
            halo = HaloModel::new(
                rho.unwrap_or(halo.rho()),
                v0.unwrap_or(halo.v0()),
                v_esc.unwrap_or(halo.v_esc()),
                v_earth.map_or(halo.v_earth(), |v| Vector3Q::along(v, [0.0, 0.0, 1.0])),
            )
            .map_err(|e| RunError::Config(format!("halo: {e}")))?;
        }
        let user_catalog = match settings.path("catalog") {
            Some(p) => {
                let raw = settings.get("catalog").expect("present");
                let text = std::fs::read_to_string(&p).or_else(|e| raw.fail(e))?;
                catalog_from_toml(&text).or_else(|e| raw.fail(e))?
            }
            None => Vec::new(),
        };
        Ok(Context { settings, halo, user_catalog })
    }

    fn experiments(&self) -> Vec<ExperimentSpec> {
        let mut all = self.user_catalog.clone();
        for e in catalog() {
            if !all.iter().any(|u| u.name.eq_ignore_ascii_case(&e.name)) {
                all.push(e);
            }
        }
        all
    }

    fn experiment(&self) -> RResult<(ExperimentSpec, &Raw)> {
        let raw = self.settings.require("experiment")?;
        let mut e = self
            .experiments()
            .into_iter()
            .find(|e| e.name.eq_ignore_ascii_case(raw.text.trim()))
            .ok_or_else(|| RunError::Config(format!("{}: unknown experiment {:?}", raw.origin, raw.text)))?;
        if let Some(env) = self.environment_override()? {
            e = e.with_environment(env);
        }
        Ok((e, raw))
    }

    fn environment_override(&self) -> RResult<Option<Environment>> {
        match self.settings.get("environment") {
            Some(r) => Ok(Some(r.text.parse().or_else(|e| r.fail(e))?)),
            None => Ok(None),
        }
    }

    fn enhancement(&self) -> RResult<Enhancement> {
        match self.settings.get("enhancement") {
            None => Ok(Enhancement::On),
            Some(r) => match r.text.trim() {
                "on" => Ok(Enhancement::On),
                "off" => Ok(Enhancement::Off),
                other => Ok(r.fail(format!("expected on or off, got {other:?}"))?),
            },
        }
    }

    fn rate_options(&self) -> RResult<RateOptions> {
        let mut o = RateOptions::default();
        if let Some(t) = self.settings.number::<f64>("rel_tol")? {
            if !(t > 0.0) {
                return Ok(self.settings.require("rel_tol")?.fail("tolerance must be positive")?);
            }
            o.rel_tol = t;
        }
        Ok(o)
    }

    fn scan_options(&self) -> RResult<ScanOptions> {
        Ok(ScanOptions { rate: self.rate_options()?, enhancement: self.enhancement()?, ..ScanOptions::default() })
    }

    fn dm(&self) -> RResult<DMCandidate> {
        let m = self.settings.mass_ev("mass")?.ok_or_else(|| RunError::Config("missing mass (--mass)".into()))?;
        let s = self
            .settings
            .quantity("sigma", Dimension::AREA)?
            .ok_or_else(|| RunError::Config("missing sigma (--sigma)".into()))?;
        DMCandidate::new(Quantity::new(m, Unit::EV), s).map_err(classify)
    }

    fn seed(&self, why: &str) -> RResult<u64> {
        self.settings
            .number::<u64>("seed")?
            .ok_or_else(|| RunError::Config(format!("{why} needs --seed")))
    }

    fn halo_provenance(&self, p: &mut Provenance) {
        let h = &self.halo;
        p.push((
            "halo",
            format!(
                "rho={:e} GeV/cm3 v0={:e} km/s v_esc={:e} km/s v_earth={:e} km/s",
                h.rho().value_in(Unit::GEV_PER_CM3).unwrap_or(f64::NAN),
                h.v0().value_in(Unit::KM_PER_S).unwrap_or(f64::NAN),
                h.v_esc().value_in(Unit::KM_PER_S).unwrap_or(f64::NAN),
                h.v_earth().norm().value_in(Unit::KM_PER_S).unwrap_or(f64::NAN),
            ),
        ));
    }
}

fn rate_row(exp: &str, dm: &DMCandidate, r: &RateResult, hold: Quantity, status: &str) -> RResult<Vec<Cell>> {
    let g = decoherence_factor(r, hold).map_err(classify)?;
    let (bright, dim) = port_probabilities(&g);
    Ok(vec![
        exp.into(),
        dm.mass().value_in(Unit::EV).unwrap_or(f64::NAN).into(),
        dm.sigma().value_in(Unit::CM2).unwrap_or(f64::NAN).into(),
        r.method.to_string().into(),
        r.f_real_per_s().into(),
        r.f_imag_per_s().into(),
        r.error_real_per_s().into(),
        r.error_imag_per_s().into(),
        g.magnitude().into(),
        g.gamma.arg().into(),
        bright.into(),
        dim.into(),
        r.occupation.into(),
        status.into(),
    ])
}

const RATE_COLUMNS: &[&str] = &[
    "experiment",
    "mass_eV",
    "sigma_cm2",
    "method",
    "f_real_per_s",
    "f_imag_per_s",
    "error_real_per_s",
    "error_imag_per_s",
    "gamma_abs",
    "gamma_arg",
    "p_bright",
    "p_dim",
    "occupation",
    "status",
];

pub fn rate(ctx: &Context) -> RResult<Report> {
    let (exp, _) = ctx.experiment()?;
    let dm = ctx.dm()?;
    let enh = ctx.enhancement()?;
    let mut prov = Provenance::new();
    ctx.halo_provenance(&mut prov);
    prov.push(("enhancement", format!("{enh:?}").to_lowercase()));
    let method = ctx.settings.get("method").map_or("quadrature", |r| r.text.trim());
    let result = match method {
        "quadrature" => rate_with(&dm, &exp.superposition, &ctx.halo, enh, &ctx.rate_options()?),
        "mc" => {
            let seed = ctx.seed("the Monte Carlo rate")?;
            let samples = ctx.settings.count("samples")?.unwrap_or(1_000_000) as usize;
            prov.push(("samples", samples.to_string()));
            rate_mc(&dm, &exp.superposition, &ctx.halo, enh, samples, seed)
        }
        other => return Ok(ctx.settings.require("method")?.fail(format!("expected quadrature or mc, got {other:?}"))?),
    };
    let mut table = Table::new(RATE_COLUMNS);
    match result {
        Ok(r) => {
            table.push(rate_row(&exp.name, &dm, &r, exp.hold_time(), "ok")?);
            Ok(Report::complete(table, prov))
        }
        Err(Error::NonConvergent { value_real, value_imag, error, tolerance }) => {
            let mut r = RateResult::from_per_second(value_real, value_imag, error);
            r.occupation = dmdecoh::halo::occupation_number(&ctx.halo, &dm);
            let msg = format!("quadrature did not converge: error {error:.3e} > tolerance {tolerance:.3e}");
            table.push(rate_row(&exp.name, &dm, &r, exp.hold_time(), "nonconvergent")?);
            Ok(Report { table, provenance: prov, failure: Some(msg) })
        }
        Err(e) => Err(classify(e)),
    }
}

pub fn chi_scan_cmd(ctx: &Context) -> RResult<Report> {
    let (exp, _) = ctx.experiment()?;
    let dm = ctx.dm()?;
    let zeta = ctx.settings.number::<f64>("zeta")?.unwrap_or(1.0);
    let n = ctx.settings.count("chi_points")?.unwrap_or(9) as usize;
    if n < 2 {
        return Ok(ctx.settings.require("chi_points")?.fail("need at least 2 points")?);
    }
    let grid: Vec<f64> = (0..n).map(|i| PI * i as f64 / (n - 1) as f64).collect();
    let enh = ctx.enhancement()?;
    let mut prov = Provenance::new();
    ctx.halo_provenance(&mut prov);
    prov.push(("normalisation", "F_R(chi = 0)".into()));
    let mut table = Table::new(&["chi_rad", "zeta", "f_real_norm", "f_imag_norm", "error_real_norm", "error_imag_norm"]);
    match chi_scan(&dm, &exp.superposition, &ctx.halo, &grid, zeta, enh, &ctx.rate_options()?) {
        Ok(points) => {
            for p in points {
                table.push(vec![p.chi.into(), zeta.into(), p.f_real.into(), p.f_imag.into(), p.error_real.into(), p.error_imag.into()]);
            }
            Ok(Report::complete(table, prov))
        }
        Err(e @ Error::NonConvergent { .. }) => Ok(Report { table, provenance: prov, failure: Some(e.to_string()) }),
        Err(e) => Err(classify(e)),
    }
}

pub fn boost(ctx: &Context) -> RResult<Report> {
    let (exp, _) = ctx.experiment()?;
    let seed = ctx.seed("the boost average")?;
    let samples = ctx.settings.count("samples")?.unwrap_or(20_000) as usize;
    let lambdas = ctx
        .settings
        .length_grid("lambda_bar")?
        .ok_or_else(|| RunError::Config("missing lambda_bar grid, e.g. --lambda-bar 1A:1um:30".into()))?;
    let etas: Vec<f64> = match ctx.settings.list("eta") {
        Some((items, raw)) => items
            .iter()
            .map(|s| s.parse::<f64>().or_else(|e| raw.fail(e)))
            .collect::<Result<_, _>>()?,
        None => vec![0.0, PI / 6.0, PI / 3.0, PI / 2.0],
    };
    let dx = exp.superposition.delta_x().natural();
    let n = dx.iter().map(|c| c * c).sum::<f64>().sqrt();
    if n == 0.0 {
        return Err(RunError::Config("experiment has zero separation".into()));
    }
    let z = dx.map(|c| c / n);
    let helper = if z[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let d: f64 = (0..3).map(|i| helper[i] * z[i]).sum();
    let p = [0, 1, 2].map(|i| helper[i] - d * z[i]);
    let pn = p.iter().map(|c| c * c).sum::<f64>().sqrt();
    let x = p.map(|c| c / pn);

    let points: Vec<(f64, f64)> = lambdas.iter().flat_map(|&l| etas.iter().map(move |&e| (l, e))).collect();
    let results: Vec<_> = points
        .par_iter()
        .map(|&(l, eta)| {
            let (s, c) = eta.sin_cos();
            let q = Vector3Q::from_natural([0, 1, 2].map(|i| (c * z[i] + s * x[i]) / l), Dimension::MOMENTUM);
            coherent_boost(&q, &exp.superposition, samples, seed)
        })
        .collect();
    let prov = vec![("samples", samples.to_string())];
    let mut table = Table::new(&["lambda_bar_m", "eta_rad", "boost", "mc_error", "regime"]);
    for (&(l, eta), r) in points.iter().zip(results) {
        let r = r.map_err(classify)?;
        let regime = match r.regime {
            Regime::FullCoherence => "full",
            Regime::Intermediate => "intermediate",
            Regime::Incoherent => "incoherent",
        };
        let lm = Quantity::from_natural(l, Dimension::LENGTH).value_in(Unit::METER).unwrap_or(f64::NAN);
        table.push(vec![lm.into(), eta.into(), r.boost.into(), r.mc_error.into(), regime.into()]);
    }
    Ok(Report::complete(table, prov))
}

const DEFAULT_SHIELDS: &str = "surface,altitude:30km,altitude:200km,underground:2000m,through-earth";

pub fn shield(ctx: &Context) -> RResult<Report> {
    let mut materials = MaterialTable::builtin();
    if let Some(p) = ctx.settings.path("materials") {
        let raw = ctx.settings.get("materials").expect("present");
        let text = std::fs::read_to_string(&p).or_else(|e| raw.fail(e))?;
        materials.extend_from_toml(&text).or_else(|e| raw.fail(e))?;
    }
    let sigma = ctx.settings.quantity("sigma", Dimension::AREA)?;
    let mass = Quantity::new(ctx.settings.mass_ev("mass")?.unwrap_or(1e6), Unit::EV);
    let dm = match sigma {
        Some(s) => Some(DMCandidate::new(mass, s).map_err(classify)?),
        None => None,
    };
    let (items, raw) = match ctx.settings.list("environment") {
        Some((items, raw)) => (items, Some(raw)),
        None => (DEFAULT_SHIELDS.split(',').map(str::to_string).collect(), None),
    };
    let fail = |msg: String| -> RunError {
        match raw {
            Some(r) => RunError::Config(format!("{}: {msg}", r.origin)),
            None => RunError::Config(msg),
        }
    };
    let mut table = Table::new(&["shield", "column_g_cm2", "max_visible_sigma_cm2", "transmission", "attenuation_length_m"]);
    for item in items {
        let (column, visible, length) = if let Some(rest) = item.strip_prefix("slab:") {
            let (name, thick) = rest.split_once(':').ok_or_else(|| fail(format!("{item}: expected slab:<material>:<thickness>")))?;
            let m = materials.get(name).map_err(|e| fail(e.to_string()))?.clone();
            let t: Quantity = dmdecoh::units::parse_quantity(thick, Dimension::LENGTH).map_err(|e| fail(e.to_string()))?;
            let len = dm.as_ref().map(|d| attenuation_length(&m, d));
            let column = ShieldColumn::slab(m, t).map_err(|e| fail(e.to_string()))?;
            let w = column.weighted_nuclei();
            (column, if w > 0.0 { 1.0 / w } else { f64::INFINITY }, len)
        } else {
            let env: Environment = item.parse().map_err(|e: Error| fail(e.to_string()))?;
            let visible = max_visible_sigma(&env, mass).map_err(|e| fail(e.to_string()))?;
            (env.column().map_err(|e| fail(e.to_string()))?, visible.value_in(Unit::CM2).unwrap_or(f64::NAN), None)
        };
        let total: f64 = column.layers().map(|(_, c)| c.value_in(Unit::G_PER_CM2).unwrap_or(f64::NAN)).fold(0.0, |a, b| a + b);
        let trans = dm.as_ref().map_or(Cell::Empty, |d| dmdecoh::shielding::transmission(&column, d).into());
        let len = length.map_or(Cell::Empty, |l| l.value_in(Unit::METER).unwrap_or(f64::NAN).into());
        table.push(vec![item.as_str().into(), total.into(), visible.into(), trans, len]);
    }
    Ok(Report::complete(table, Provenance::new()))
}

fn masses(ctx: &Context) -> RResult<Vec<f64>> {
    Ok(ctx.settings.mass_grid("masses")?.unwrap_or_else(default_mass_grid))
}

fn check_masses(ctx: &Context, m: &[f64]) -> RResult<()> {
    let lo = dmdecoh::sensitivity::MASS_GRID_LOW_EV * (1.0 - 1e-12);
    let hi = dmdecoh::sensitivity::MASS_GRID_HIGH_EV * (1.0 + 1e-12);
    if m.iter().all(|&x| (lo..=hi).contains(&x)) {
        Ok(())
    } else {
        let origin = ctx.settings.get("masses").map_or("masses".into(), |r| r.origin.clone());
        Err(RunError::Config(format!("{origin}: masses must lie within 10 eV to 100 MeV")))
    }
}

fn shots(ctx: &Context, exp: &ExperimentSpec) -> RResult<f64> {
    let s = ctx.settings.number::<f64>("shots")?.unwrap_or(exp.shots as f64);
    if !(s >= 1.0) {
        return Ok(ctx.settings.require("shots")?.fail("shots must be at least 1")?);
    }
    Ok(s)
}

fn scan_provenance(ctx: &Context, exp: &ExperimentSpec, shots: f64, criterion: Criterion) -> Provenance {
    let mut p = Provenance::new();
    ctx.halo_provenance(&mut p);
    p.push(("experiment", exp.name.clone()));
    p.push(("environment", exp.environment.to_string()));
    p.push(("criterion", criterion.to_string()));
    p.push(("shots", format!("{shots:e}")));
    p
}

fn boosted(name: &str, criterion: Criterion, pts: Vec<(f64, f64)>, shots: f64) -> RResult<Vec<(f64, f64)>> {
    let curve = SensitivityCurve::new(name, criterion, pts).map_err(classify)?;
    Ok(statistical_boost(&curve, shots).map_err(classify)?.points().to_vec())
}

pub fn exclusion(ctx: &Context) -> RResult<Report> {
    let (exp, _) = ctx.experiment()?;
    let masses = masses(ctx)?;
    check_masses(ctx, &masses)?;
    let opts = ctx.scan_options()?;
    let shots = shots(ctx, &exp)?;
    let results: Vec<_> = masses.par_iter().map(|&m| exclusion_point(&exp, &ctx.halo, m, &opts)).collect();

    let mut found = Vec::new();
    for (&m, r) in masses.iter().zip(&results) {
        if let Ok(Threshold::Found(s)) = r {
            found.push((m, *s));
        }
    }
    let found = boosted(&exp.name, Criterion::EFold, found, shots)?;
    let mut table = Table::new(&["mass_eV", "sigma_cm2", "status"]);
    let mut failure = None;
    for (&m, r) in masses.iter().zip(results) {
        let row = match r {
            Ok(Threshold::Found(_)) => {
                let s = found.iter().find(|p| p.0 == m).expect("found point").1;
                vec![m.into(), s.into(), "ok".into()]
            }
            Ok(Threshold::Omitted(why)) => vec![m.into(), Cell::Empty, why.into()],
            Err(e @ Error::NonConvergent { .. }) => {
                failure.get_or_insert_with(|| format!("mass {m:e} eV: {e}"));
                vec![m.into(), Cell::Empty, "nonconvergent".into()]
            }
            Err(e) => return Err(classify(e)),
        };
        table.push(row);
    }
    Ok(Report { table, provenance: scan_provenance(ctx, &exp, shots, Criterion::EFold), failure })
}

pub fn phase_region(ctx: &Context) -> RResult<Report> {
    let (exp, _) = ctx.experiment()?;
    let masses = masses(ctx)?;
    check_masses(ctx, &masses)?;
    let opts = ctx.scan_options()?;
    let shots = shots(ctx, &exp)?;
    let results: Vec<_> = masses.par_iter().map(|&m| phase_point(&exp, &ctx.halo, m, &opts)).collect();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for (&m, r) in masses.iter().zip(&results) {
        if let Ok(Some((a, b))) = r {
            lower.push((m, *a));
            upper.push((m, *b));
        }
    }
    let lower = boosted(&exp.name, Criterion::PhaseShift, lower, shots)?;
    let upper = boosted(&exp.name, Criterion::PhaseShift, upper, shots)?;
    let mut table = Table::new(&["mass_eV", "sigma_low_cm2", "sigma_high_cm2", "status"]);
    let mut failure = None;
    for (&m, r) in masses.iter().zip(results) {
        let row = match r {
            Ok(Some(_)) => {
                let a = lower.iter().find(|p| p.0 == m).expect("lower").1;
                let b = upper.iter().find(|p| p.0 == m).expect("upper").1;
                vec![m.into(), a.into(), b.into(), "ok".into()]
            }
            Ok(None) => vec![m.into(), Cell::Empty, Cell::Empty, "empty".into()],
            Err(e @ Error::NonConvergent { .. }) => {
                failure.get_or_insert_with(|| format!("mass {m:e} eV: {e}"));
                vec![m.into(), Cell::Empty, Cell::Empty, "nonconvergent".into()]
            }
            Err(e) => return Err(classify(e)),
        };
        table.push(row);
    }
    Ok(Report { table, provenance: scan_provenance(ctx, &exp, shots, Criterion::PhaseShift), failure })
}

pub fn catalog_list(ctx: &Context) -> RResult<Report> {
    let mut table = Table::new(&[
        "name",
        "description",
        "nucleons",
        "mass_number",
        "atoms",
        "separation_m",
        "hold_time_s",
        "environment",
        "shots",
    ]);
    for e in ctx.experiments() {
        let t = e.superposition.target();
        table.push(vec![
            e.name.as_str().into(),
            e.description.as_str().into(),
            t.n_nucleons().into(),
            t.mass_number().into(),
            Cell::Int(t.n_atoms()),
            e.separation().value_in(Unit::METER).unwrap_or(f64::NAN).into(),
            e.hold_time().value_in(Unit::SECOND_U).unwrap_or(f64::NAN).into(),
            e.environment.to_string().into(),
            Cell::Int(e.shots),
        ]);
    }
    Ok(Report::complete(table, Provenance::new()))
}

pub fn catalog_show(ctx: &Context, name: &str) -> RResult<Report> {
    let e = ctx
        .experiments()
        .into_iter()
        .find(|e| e.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| RunError::Config(format!("unknown experiment {name:?}")))?;
    let t = e.superposition.target();
    let mut table = Table::new(&["parameter", "value", "provenance"]);
    let note = |k: &str| e.notes.get(k).cloned().map_or(Cell::Empty, Cell::Text);
    let mut row = |k: &'static str, v: Cell, n: Cell| table.push(vec![k.into(), v, n]);
    row("name", e.name.as_str().into(), Cell::Empty);
    row("description", e.description.as_str().into(), Cell::Empty);
    row("nucleons", t.n_nucleons().into(), note("nucleons"));
    row("mass_number", t.mass_number().into(), note("mass_number"));
    row("atoms", Cell::Int(t.n_atoms()), Cell::Empty);
    if let Some(r) = t.radius() {
        row("radius_m", r.value_in(Unit::METER).unwrap_or(f64::NAN).into(), note("radius_m"));
        row("spacing_m", t.spacing().value_in(Unit::METER).unwrap_or(f64::NAN).into(), note("spacing_angstrom"));
    }
    row("separation_m", e.separation().value_in(Unit::METER).unwrap_or(f64::NAN).into(), note("separation_m"));
    let hold_note = match note("hold_time_s") {
        Cell::Empty => note("talbot_multiple"),
        n => n,
    };
    row("hold_time_s", e.hold_time().value_in(Unit::SECOND_U).unwrap_or(f64::NAN).into(), hold_note);
    row("environment", e.environment.to_string().into(), note("environment"));
    row("shots", Cell::Int(e.shots), note("shots"));
    if let Some(th) = t.thermal() {
        row("temperature_k", th.temperature.into(), note("temperature_k"));
    }
    Ok(Report::complete(table, Provenance::new()))
}
