//! Overburden stopping in the single-scatter model: one nuclear collision
//! removes the particle from the flux.

use std::sync::OnceLock;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::halo::DMCandidate;
use crate::units::constants::{AVOGADRO, G_N};
use crate::units::{Quantity, Unit};

const MATERIALS_TOML: &str = include_str!("../data/materials.toml");
const ATMOSPHERE_TOML: &str = include_str!("../data/atmosphere.toml");

/// Earth radius used for the through-Earth column, km.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Material {
    pub name: String,
    /// Mass-weighted mean mass number.
    #[serde(rename = "a")]
    pub mass_number: f64,
    /// g/cm³.
    density: f64,
    #[serde(default)]
    pub source: String,
}

impl Material {
    pub fn new(name: &str, mass_number: f64, density: Quantity) -> Result<Self> {
        let density = density.value_in(Unit::G_PER_CM3)?;
        let m = Material { name: name.to_string(), mass_number, density, source: String::new() };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        if !(self.mass_number >= 1.0 && self.mass_number.is_finite()) {
            return Err(Error::InvalidParameter(format!("{}: mass number {}", self.name, self.mass_number)));
        }
        if !(self.density > 0.0 && self.density.is_finite()) {
            return Err(Error::InvalidParameter(format!("{}: density {}", self.name, self.density)));
        }
        Ok(())
    }

    pub fn density(&self) -> Quantity {
        Quantity::new(self.density, Unit::G_PER_CM3)
    }

    /// Nuclei per cm³.
    pub fn nuclei_per_cm3(&self) -> f64 {
        self.density * AVOGADRO / self.mass_number
    }
}

#[derive(Deserialize)]
struct MaterialFile {
    material: Vec<Material>,
}

/// Named materials. Starts from the shipped table; user entries with the same
/// name replace shipped ones.
#[derive(Debug, Clone)]
pub struct MaterialTable {
    materials: Vec<Material>,
}

impl MaterialTable {
    pub fn builtin() -> Self {
        static TABLE: OnceLock<Vec<Material>> = OnceLock::new();
        let materials = TABLE.get_or_init(|| parse_materials(MATERIALS_TOML).expect("shipped materials table"));
        MaterialTable { materials: materials.clone() }
    }

    pub fn extend_from_toml(&mut self, text: &str) -> Result<()> {
        for m in parse_materials(text)? {
            self.insert(m);
        }
        Ok(())
    }

    pub fn insert(&mut self, m: Material) {
        match self.materials.iter_mut().find(|x| x.name == m.name) {
            Some(slot) => *slot = m,
            None => self.materials.push(m),
        }
    }

    pub fn get(&self, name: &str) -> Result<&Material> {
        self.materials.iter().find(|m| m.name == name).ok_or_else(|| Error::UnknownMaterial(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Material> {
        self.materials.iter()
    }
}

fn parse_materials(text: &str) -> Result<Vec<Material>> {
    let file: MaterialFile = toml::from_str(text).map_err(|e| Error::Data(e.to_string()))?;
    for m in &file.material {
        m.validate()?;
    }
    Ok(file.material)
}

/// Shipped material by name.
pub fn material(name: &str) -> Result<Material> {
    MaterialTable::builtin().get(name).cloned()
}

/// Ordered layers of (material, mass column in g/cm²).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ShieldColumn {
    layers: Vec<(Material, f64)>,
}

impl ShieldColumn {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn layer(material: Material, column: Quantity) -> Result<Self> {
        Self::empty().with_layer(material, column)
    }

    pub fn slab(material: Material, thickness: Quantity) -> Result<Self> {
        let t = thickness.value_in(Unit::CENTIMETER)?;
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter(format!("slab thickness {t} cm")));
        }
        let rho = material.density;
        Ok(ShieldColumn { layers: vec![(material, t * rho)] })
    }

    pub fn with_layer(mut self, material: Material, column: Quantity) -> Result<Self> {
        let c = column.value_in(Unit::G_PER_CM2)?;
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!("column density {c} g/cm2")));
        }
        self.layers.push((material, c));
        Ok(self)
    }

    pub fn concat(mut self, other: &ShieldColumn) -> Self {
        self.layers.extend(other.layers.iter().cloned());
        self
    }

    pub fn layers(&self) -> impl Iterator<Item = (&Material, Quantity)> {
        self.layers.iter().map(|(m, c)| (m, Quantity::new(*c, Unit::G_PER_CM2)))
    }

    /// Σ column·N_A·A, in cm⁻²; multiply by σ in cm² for the optical depth.
    pub fn weighted_nuclei(&self) -> f64 {
        self.layers.iter().map(|(m, c)| c * AVOGADRO * m.mass_number).sum()
    }

    pub fn optical_depth(&self, sigma: Quantity) -> Result<f64> {
        let s = sigma_cm2(sigma)?;
        let w = self.weighted_nuclei();
        Ok(if w == 0.0 { 0.0 } else { w * s })
    }
}

fn sigma_cm2(sigma: Quantity) -> Result<f64> {
    let s = sigma.value_in(Unit::CM2)?;
    if !(s >= 0.0) {
        return Err(Error::InvalidParameter(format!("cross-section {s} cm2")));
    }
    Ok(s)
}

/// Mean free path to the first nuclear scatter. Infinite when σ = 0.
pub fn attenuation_length(material: &Material, dm: &DMCandidate) -> Quantity {
    let s = dm.sigma().value_in(Unit::CM2).unwrap_or(0.0);
    let inv = material.nuclei_per_cm3() * material.mass_number * material.mass_number * s;
    let cm = if inv > 0.0 { 1.0 / inv } else { f64::INFINITY };
    Quantity::new(cm, Unit::CENTIMETER)
}

pub fn transmission(column: &ShieldColumn, dm: &DMCandidate) -> f64 {
    let tau = column.optical_depth(dm.sigma()).unwrap_or(0.0);
    (-tau).exp()
}

#[derive(Deserialize)]
struct AtmosphereFile {
    earth_radius_km: f64,
    nodes: Vec<[f64; 2]>,
}

struct Atmosphere {
    radius_km: f64,
    z_km: Vec<f64>,
    ln_p: Vec<f64>,
}

fn atmosphere() -> &'static Atmosphere {
    static ATM: OnceLock<Atmosphere> = OnceLock::new();
    ATM.get_or_init(|| {
        let f: AtmosphereFile = toml::from_str(ATMOSPHERE_TOML).expect("shipped atmosphere table");
        Atmosphere {
            radius_km: f.earth_radius_km,
            z_km: f.nodes.iter().map(|n| n[0]).collect(),
            ln_p: f.nodes.iter().map(|n| n[1].ln()).collect(),
        }
    })
}

/// Highest altitude covered by the atmosphere table.
pub const MAX_ALTITUDE_KM: f64 = 1000.0;

/// Air mass above the given altitude, P(z)/g(z).
pub fn atmosphere_column(altitude: Quantity) -> Result<Quantity> {
    let z = altitude.value_in(Unit::KM)?;
    if !(0.0..=MAX_ALTITUDE_KM).contains(&z) {
        return Err(Error::InvalidParameter(format!("altitude {z} km outside [0, {MAX_ALTITUDE_KM}]")));
    }
    let atm = atmosphere();
    let i = atm.z_km.partition_point(|&x| x <= z).clamp(1, atm.z_km.len() - 1);
    let (z0, z1) = (atm.z_km[i - 1], atm.z_km[i]);
    let t = (z - z0) / (z1 - z0);
    let p_pa = (atm.ln_p[i - 1] + t * (atm.ln_p[i] - atm.ln_p[i - 1])).exp();
    let g = G_N * (atm.radius_km / (atm.radius_km + z)).powi(2);
    // kg/m² → g/cm²
    Ok(Quantity::new(p_pa / g * 0.1, Unit::G_PER_CM2))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Environment {
    Surface,
    Altitude(Quantity),
    /// Rock overburden of the given depth.
    Underground(Quantity),
    /// Diameter of the Earth: the windscreen geometry.
    ThroughEarth,
    Space,
}

impl Environment {
    pub fn column(&self) -> Result<ShieldColumn> {
        let air = || material("air");
        match self {
            Environment::Surface => {
                ShieldColumn::layer(air()?, atmosphere_column(Quantity::new(0.0, Unit::KM))?)
            }
            Environment::Altitude(z) => ShieldColumn::layer(air()?, atmosphere_column(*z)?),
            Environment::Underground(depth) => {
                let d = depth.value_in(Unit::METER)?;
                if !(d >= 0.0 && d.is_finite()) {
                    return Err(Error::InvalidParameter(format!("depth {d} m")));
                }
                let rock = ShieldColumn::slab(material("crust")?, *depth)?;
                Ok(Environment::Surface.column()?.concat(&rock))
            }
            Environment::ThroughEarth => {
                ShieldColumn::slab(material("earth")?, Quantity::new(2.0 * EARTH_RADIUS_KM, Unit::KM))
            }
            Environment::Space => Ok(ShieldColumn::empty()),
        }
    }
}

impl std::fmt::Display for Environment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Environment::Surface => write!(f, "surface"),
            Environment::Altitude(z) => write!(f, "altitude:{}km", z.value_in(Unit::KM).unwrap_or(f64::NAN)),
            Environment::Underground(d) => write!(f, "underground:{}m", d.value_in(Unit::METER).unwrap_or(f64::NAN)),
            Environment::ThroughEarth => write!(f, "through-earth"),
            Environment::Space => write!(f, "space"),
        }
    }
}

/// Cross-section at which the overburden optical depth reaches 1. Above it the
/// flux is stopped (for underground and through-Earth this is the smallest σ
/// that is shielded). Infinite in space. Independent of the mass while the
/// nuclear form factor is unity; the mass is only checked.
pub fn max_visible_sigma(environment: &Environment, mass: Quantity) -> Result<Quantity> {
    let m = mass.natural_mass()?;
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::InvalidParameter(format!("mass {m} eV")));
    }
    let w = environment.column()?.weighted_nuclei();
    let s = if w > 0.0 { 1.0 / w } else { f64::INFINITY };
    Ok(Quantity::new(s, Unit::CM2))
}

impl std::str::FromStr for Environment {
    type Err = Error;

    /// `surface`, `space`, `through-earth`, `altitude:<length>`, `underground:<length>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k.trim(), Some(a.trim())),
            None => (s, None),
        };
        let length = |a: Option<&str>| -> Result<Quantity> {
            let a = a.ok_or_else(|| Error::Parse(format!("{kind} needs a length, e.g. {kind}:200km")))?;
            crate::units::parse_quantity(a, crate::units::Dimension::LENGTH)
        };
        match kind {
            "surface" => Ok(Environment::Surface),
            "space" => Ok(Environment::Space),
            "through-earth" => Ok(Environment::ThroughEarth),
            "altitude" => Ok(Environment::Altitude(length(arg)?)),
            "underground" => Ok(Environment::Underground(length(arg)?)),
            _ => Err(Error::Parse(format!("unknown environment {s:?}"))),
        }
    }
}
