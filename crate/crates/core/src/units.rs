//! Dimension-tagged quantities in natural units (ħ = c = k_B = 1, energies in eV).
//!
//! Every value is stored as a natural-unit number together with its SI base
//! exponents. Conversion to and from human units goes through [`Unit`].

use std::fmt;
use std::ops::{Div, Mul, Neg};
use std::str::FromStr;

use crate::error::{Error, Result};

/// CODATA-2018 constants.
pub mod constants {
    /// Label written into output provenance headers.
    pub const VERSION: &str = "CODATA-2018";
    /// Speed of light in m/s (exact).
    pub const C_SI: f64 = 299_792_458.0;
    /// ħc in eV·m.
    pub const HBAR_C_EV_M: f64 = 197.326_980_4e-9;
    /// ħ in eV·s, derived as ħc/c so that length, time and velocity agree
    /// exactly (the tabulated CODATA ħ differs in the tenth digit).
    pub const HBAR_EV_S: f64 = HBAR_C_EV_M / C_SI;
    /// Elementary charge in C (exact), i.e. J per eV.
    pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
    /// Boltzmann constant in eV/K.
    pub const K_B_EV_PER_K: f64 = 8.617_333_262e-5;
    /// Avogadro constant in 1/mol (exact).
    pub const AVOGADRO: f64 = 6.022_140_76e23;
    /// Atomic mass unit in eV.
    pub const AMU_EV: f64 = 931.494_102_42e6;
    /// Nucleon mass used for A·amu target masses, in eV.
    pub const NUCLEON_EV: f64 = AMU_EV;
    /// Electron mass in eV.
    pub const ELECTRON_EV: f64 = 0.510_998_950_00e6;
    /// Standard gravity in m/s² (exact).
    pub const G_N: f64 = 9.806_65;

    /// Natural-unit value of one metre (eV⁻¹).
    pub const METRE: f64 = 1.0 / HBAR_C_EV_M;
    /// Natural-unit value of one second (eV⁻¹).
    pub const SECOND: f64 = 1.0 / HBAR_EV_S;
    /// Natural-unit value of one kilogram (eV).
    pub const KILOGRAM: f64 = C_SI * C_SI / ELEMENTARY_CHARGE;
    /// Natural-unit value of one kelvin (eV).
    pub const KELVIN: f64 = K_B_EV_PER_K;
}

/// Exponents of the SI base dimensions mass, length, time and temperature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dimension {
    pub mass: i8,
    pub length: i8,
    pub time: i8,
    pub temperature: i8,
}

impl Dimension {
    pub const fn new(mass: i8, length: i8, time: i8, temperature: i8) -> Self {
        Dimension { mass, length, time, temperature }
    }

    pub const DIMENSIONLESS: Dimension = Dimension::new(0, 0, 0, 0);
    pub const MASS: Dimension = Dimension::new(1, 0, 0, 0);
    pub const LENGTH: Dimension = Dimension::new(0, 1, 0, 0);
    pub const TIME: Dimension = Dimension::new(0, 0, 1, 0);
    pub const TEMPERATURE: Dimension = Dimension::new(0, 0, 0, 1);
    pub const ENERGY: Dimension = Dimension::new(1, 2, -2, 0);
    pub const MOMENTUM: Dimension = Dimension::new(1, 1, -1, 0);
    pub const VELOCITY: Dimension = Dimension::new(0, 1, -1, 0);
    pub const AREA: Dimension = Dimension::new(0, 2, 0, 0);
    pub const RATE: Dimension = Dimension::new(0, 0, -1, 0);
    pub const NUMBER_DENSITY: Dimension = Dimension::new(0, -3, 0, 0);
    pub const MASS_DENSITY: Dimension = Dimension::new(1, -3, 0, 0);
    pub const ENERGY_DENSITY: Dimension = Dimension::new(1, -1, -2, 0);
    pub const COLUMN_DENSITY: Dimension = Dimension::new(1, -2, 0, 0);
    /// Number per volume per momentum³.
    pub const PHASE_SPACE_DENSITY: Dimension = Dimension::new(-3, -6, 3, 0);

    /// Power of eV carried by this dimension in natural units.
    pub const fn natural_power(self) -> i32 {
        self.mass as i32 - self.length as i32 - self.time as i32 + self.temperature as i32
    }

    fn combine(self, other: Dimension, sign: i8) -> Dimension {
        Dimension {
            mass: self.mass + sign * other.mass,
            length: self.length + sign * other.length,
            time: self.time + sign * other.time,
            temperature: self.temperature + sign * other.temperature,
        }
    }

    /// Integer power.
    pub fn powi(self, n: i8) -> Dimension {
        Dimension {
            mass: self.mass * n,
            length: self.length * n,
            time: self.time * n,
            temperature: self.temperature * n,
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for (sym, e) in [("kg", self.mass), ("m", self.length), ("s", self.time), ("K", self.temperature)] {
            match e {
                0 => {}
                1 => parts.push(sym.to_string()),
                _ => parts.push(format!("{sym}^{e}")),
            }
        }
        if parts.is_empty() {
            write!(f, "1")
        } else {
            write!(f, "{}", parts.join("·"))
        }
    }
}

/// A named unit: its dimension and the natural-unit value of one of it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Unit {
    pub symbol: &'static str,
    pub dimension: Dimension,
    pub factor: f64,
}

macro_rules! units {
    ($($id:ident = ($sym:expr, $dim:expr, $factor:expr);)*) => {
        impl Unit {
            $(pub const $id: Unit = Unit { symbol: $sym, dimension: $dim, factor: $factor };)*

            /// Every unit understood by [`Unit::parse`].
            pub const ALL: &'static [Unit] = &[$(Unit::$id),*];
        }
    };
}

use constants::{AMU_EV, C_SI, KELVIN, KILOGRAM, METRE, SECOND};

const CM: f64 = 1e-2 * METRE;

units! {
    ONE = ("1", Dimension::DIMENSIONLESS, 1.0);
    EV = ("eV", Dimension::ENERGY, 1.0);
    KEV = ("keV", Dimension::ENERGY, 1e3);
    MEV = ("MeV", Dimension::ENERGY, 1e6);
    GEV = ("GeV", Dimension::ENERGY, 1e9);
    JOULE = ("J", Dimension::ENERGY, 1.0 / constants::ELEMENTARY_CHARGE);
    KG = ("kg", Dimension::MASS, KILOGRAM);
    GRAM = ("g", Dimension::MASS, 1e-3 * KILOGRAM);
    AMU = ("amu", Dimension::MASS, AMU_EV);
    EV_MASS = ("eV/c2", Dimension::MASS, 1.0);
    METER = ("m", Dimension::LENGTH, METRE);
    KM = ("km", Dimension::LENGTH, 1e3 * METRE);
    CENTIMETER = ("cm", Dimension::LENGTH, CM);
    MILLIMETER = ("mm", Dimension::LENGTH, 1e-3 * METRE);
    MICROMETER = ("um", Dimension::LENGTH, 1e-6 * METRE);
    NANOMETER = ("nm", Dimension::LENGTH, 1e-9 * METRE);
    ANGSTROM = ("A", Dimension::LENGTH, 1e-10 * METRE);
    FEMTOMETER = ("fm", Dimension::LENGTH, 1e-15 * METRE);
    SECOND_U = ("s", Dimension::TIME, SECOND);
    MILLISECOND = ("ms", Dimension::TIME, 1e-3 * SECOND);
    MICROSECOND = ("us", Dimension::TIME, 1e-6 * SECOND);
    KELVIN_U = ("K", Dimension::TEMPERATURE, KELVIN);
    CM2 = ("cm2", Dimension::AREA, CM * CM);
    M2 = ("m2", Dimension::AREA, METRE * METRE);
    KM_PER_S = ("km/s", Dimension::VELOCITY, 1e3 * METRE / SECOND);
    M_PER_S = ("m/s", Dimension::VELOCITY, METRE / SECOND);
    C = ("c", Dimension::VELOCITY, 1.0);
    EV_PER_C = ("eV/c", Dimension::MOMENTUM, 1.0);
    KEV_PER_C = ("keV/c", Dimension::MOMENTUM, 1e3);
    MEV_PER_C = ("MeV/c", Dimension::MOMENTUM, 1e6);
    PER_S = ("1/s", Dimension::RATE, 1.0 / SECOND);
    HZ = ("Hz", Dimension::RATE, 1.0 / SECOND);
    PER_CM3 = ("1/cm3", Dimension::NUMBER_DENSITY, 1.0 / (CM * CM * CM));
    G_PER_CM3 = ("g/cm3", Dimension::MASS_DENSITY, 1e-3 * KILOGRAM / (CM * CM * CM));
    KG_PER_M3 = ("kg/m3", Dimension::MASS_DENSITY, KILOGRAM / (METRE * METRE * METRE));
    GEV_PER_CM3 = ("GeV/cm3", Dimension::MASS_DENSITY, 1e9 / (CM * CM * CM));
    G_PER_CM2 = ("g/cm2", Dimension::COLUMN_DENSITY, 1e-3 * KILOGRAM / (CM * CM));
}

impl Unit {
    /// Look up a unit by symbol. `Å`, `µm`, `cm^2` and similar spellings are accepted.
    pub fn parse(symbol: &str) -> Result<Unit> {
        let s = symbol.trim().replace('Å', "A").replace(['µ', 'μ'], "u").replace('^', "").replace("²", "2").replace("³", "3");
        let s = match s.as_str() {
            "" => "1",
            "ang" | "Angstrom" => "A",
            "sec" => "s",
            other => other,
        };
        Unit::ALL
            .iter()
            .find(|u| u.symbol == s)
            .copied()
            .ok_or_else(|| Error::UnknownUnit(symbol.to_string()))
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol)
    }
}

/// A scalar with a physical dimension, stored in natural units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quantity {
    natural: f64,
    dimension: Dimension,
}

impl Quantity {
    /// `value` expressed in `unit`.
    pub fn new(value: f64, unit: Unit) -> Self {
        Quantity { natural: value * unit.factor, dimension: unit.dimension }
    }

    /// Build directly from a natural-unit number.
    pub const fn from_natural(natural: f64, dimension: Dimension) -> Self {
        Quantity { natural, dimension }
    }

    pub const fn dimensionless(x: f64) -> Self {
        Quantity { natural: x, dimension: Dimension::DIMENSIONLESS }
    }

    pub fn dimension(&self) -> Dimension {
        self.dimension
    }

    /// The value in the ħ = c = k_B = 1, eV-based system.
    pub fn natural(&self) -> f64 {
        self.natural
    }

    /// Numeric value in `unit`.
    pub fn value_in(&self, unit: Unit) -> Result<f64> {
        self.expect(unit.dimension)?;
        Ok(self.natural / unit.factor)
    }

    /// Re-express in `unit`; the result compares equal as a physical quantity.
    pub fn convert(&self, unit: Unit) -> Result<(f64, Unit)> {
        Ok((self.value_in(unit)?, unit))
    }

    /// Error unless the dimension is `dim`.
    pub fn expect(&self, dim: Dimension) -> Result<()> {
        if self.dimension == dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: dim, found: self.dimension })
        }
    }

    /// Natural-unit value after checking the dimension.
    pub fn natural_as(&self, dim: Dimension) -> Result<f64> {
        self.expect(dim)?;
        Ok(self.natural)
    }

    /// Natural value of a mass given either as a mass or as its rest energy.
    pub fn natural_mass(&self) -> Result<f64> {
        if self.dimension == Dimension::MASS || self.dimension == Dimension::ENERGY {
            Ok(self.natural)
        } else {
            Err(Error::DimensionMismatch { expected: Dimension::ENERGY, found: self.dimension })
        }
    }

    pub fn checked_add(self, rhs: Quantity) -> Result<Quantity> {
        rhs.expect(self.dimension)?;
        Ok(Quantity { natural: self.natural + rhs.natural, dimension: self.dimension })
    }

    pub fn checked_sub(self, rhs: Quantity) -> Result<Quantity> {
        rhs.expect(self.dimension)?;
        Ok(Quantity { natural: self.natural - rhs.natural, dimension: self.dimension })
    }

    pub fn powi(self, n: i8) -> Quantity {
        Quantity { natural: self.natural.powi(n as i32), dimension: self.dimension.powi(n) }
    }

    pub fn abs(self) -> Quantity {
        Quantity { natural: self.natural.abs(), dimension: self.dimension }
    }
}

/// Value of a quantity in the natural system; the inverse is [`from_natural_units`].
pub fn natural_units(q: Quantity) -> f64 {
    q.natural()
}

pub fn from_natural_units(x: f64, dimension: Dimension) -> Quantity {
    Quantity::from_natural(x, dimension)
}

/// Free-function form of [`Quantity::convert`].
pub fn convert(q: Quantity, unit: Unit) -> Result<(f64, Unit)> {
    q.convert(unit)
}

impl Mul for Quantity {
    type Output = Quantity;
    fn mul(self, rhs: Quantity) -> Quantity {
        Quantity { natural: self.natural * rhs.natural, dimension: self.dimension.combine(rhs.dimension, 1) }
    }
}

impl Div for Quantity {
    type Output = Quantity;
    fn div(self, rhs: Quantity) -> Quantity {
        Quantity { natural: self.natural / rhs.natural, dimension: self.dimension.combine(rhs.dimension, -1) }
    }
}

impl Mul<f64> for Quantity {
    type Output = Quantity;
    fn mul(self, rhs: f64) -> Quantity {
        Quantity { natural: self.natural * rhs, dimension: self.dimension }
    }
}

impl Mul<Quantity> for f64 {
    type Output = Quantity;
    fn mul(self, rhs: Quantity) -> Quantity {
        rhs * self
    }
}

impl Div<f64> for Quantity {
    type Output = Quantity;
    fn div(self, rhs: f64) -> Quantity {
        Quantity { natural: self.natural / rhs, dimension: self.dimension }
    }
}

impl Neg for Quantity {
    type Output = Quantity;
    fn neg(self) -> Quantity {
        Quantity { natural: -self.natural, dimension: self.dimension }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} eV^{} [{}]", self.natural, self.dimension.natural_power(), self.dimension)
    }
}

/// Parses `"10keV"`, `"1e-27 cm2"`, `"230km/s"`, `"0.5"`.
impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let split = number_prefix_len(s);
        if split == 0 {
            return Err(Error::Parse(format!("no numeric value in {s:?}")));
        }
        let value: f64 = s[..split]
            .parse()
            .map_err(|_| Error::Parse(format!("bad number in {s:?}")))?;
        let unit = Unit::parse(&s[split..])?;
        Ok(Quantity::new(value, unit))
    }
}

/// Length of the longest prefix that is a float literal.
fn number_prefix_len(s: &str) -> usize {
    let b = s.as_bytes();
    let mut i = 0;
    if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        i += 1;
    }
    let digits_start = i;
    while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
        i += 1;
    }
    if i == digits_start {
        return 0;
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        let mut j = i + 1;
        if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
            j += 1;
        }
        let exp_start = j;
        while j < b.len() && b[j].is_ascii_digit() {
            j += 1;
        }
        if j > exp_start {
            i = j;
        }
    }
    i
}

/// Parse a quantity and require a dimension.
pub fn parse_quantity(s: &str, dim: Dimension) -> Result<Quantity> {
    let q: Quantity = s.parse()?;
    q.expect(dim)?;
    Ok(q)
}

/// Three components sharing one dimension.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vector3Q {
    natural: [f64; 3],
    dimension: Dimension,
}

impl Vector3Q {
    pub fn new(components: [f64; 3], unit: Unit) -> Self {
        Vector3Q { natural: components.map(|c| c * unit.factor), dimension: unit.dimension }
    }

    pub fn from_natural(natural: [f64; 3], dimension: Dimension) -> Self {
        Vector3Q { natural, dimension }
    }

    /// Build from three quantities, which must share a dimension.
    pub fn from_quantities(q: [Quantity; 3]) -> Result<Self> {
        q[1].expect(q[0].dimension)?;
        q[2].expect(q[0].dimension)?;
        Ok(Vector3Q { natural: q.map(|c| c.natural), dimension: q[0].dimension })
    }

    pub fn zero(dimension: Dimension) -> Self {
        Vector3Q { natural: [0.0; 3], dimension }
    }

    /// `magnitude` along the unit vector `dir` (normalised here).
    pub fn along(magnitude: Quantity, dir: [f64; 3]) -> Self {
        let n = norm3(dir);
        let d = if n > 0.0 { dir.map(|c| c / n) } else { [0.0, 0.0, 0.0] };
        Vector3Q { natural: d.map(|c| c * magnitude.natural), dimension: magnitude.dimension }
    }

    pub fn dimension(&self) -> Dimension {
        self.dimension
    }

    pub fn component(&self, i: usize) -> Quantity {
        Quantity::from_natural(self.natural[i], self.dimension)
    }

    pub fn natural(&self) -> [f64; 3] {
        self.natural
    }

    pub fn natural_as(&self, dim: Dimension) -> Result<[f64; 3]> {
        if self.dimension == dim {
            Ok(self.natural)
        } else {
            Err(Error::DimensionMismatch { expected: dim, found: self.dimension })
        }
    }

    pub fn norm(&self) -> Quantity {
        Quantity::from_natural(norm3(self.natural), self.dimension)
    }

    pub fn scale(&self, k: f64) -> Vector3Q {
        Vector3Q { natural: self.natural.map(|c| c * k), dimension: self.dimension }
    }

    pub fn checked_add(&self, rhs: &Vector3Q) -> Result<Vector3Q> {
        if self.dimension != rhs.dimension {
            return Err(Error::DimensionMismatch { expected: self.dimension, found: rhs.dimension });
        }
        let a = self.natural;
        let b = rhs.natural;
        Ok(Vector3Q { natural: [a[0] + b[0], a[1] + b[1], a[2] + b[2]], dimension: self.dimension })
    }

    pub fn dot(&self, rhs: &Vector3Q) -> Quantity {
        Quantity::from_natural(dot3(self.natural, rhs.natural), self.dimension.combine(rhs.dimension, 1))
    }
}

pub(crate) fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Euclidean norm; exactly zero for the zero vector and free of overflow.
pub(crate) fn norm3(a: [f64; 3]) -> f64 {
    let m = a[0].abs().max(a[1].abs()).max(a[2].abs());
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    let (x, y, z) = (a[0] / m, a[1] / m, a[2] / m);
    m * (x * x + y * y + z * z).sqrt()
}

/// Speed of light in km/s, handy for printing velocities.
pub const C_KM_S: f64 = C_SI / 1e3;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metre_to_centimetre() {
        let q = Quantity::new(1.0, Unit::METER);
        assert!((q.value_in(Unit::CENTIMETER).unwrap() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn km_per_s_in_units_of_c() {
        let v = Quantity::new(230.0, Unit::KM_PER_S);
        let beta = v.value_in(Unit::C).unwrap();
        assert!((beta / (230.0 / 299_792.458) - 1.0).abs() < 1e-13);
        assert!((beta - 7.6720e-4).abs() < 1e-8);
    }

    #[test]
    fn halo_density_in_natural_units() {
        // 0.4 GeV/cm³ with ħc = 197.3269804 MeV·fm: 1 cm = 1e13 fm.
        let hbar_c_ev_cm: f64 = 197.326_980_4e6 * 1e-13;
        let expect = 0.4e9 * hbar_c_ev_cm.powi(3);
        let rho = Quantity::new(0.4, Unit::GEV_PER_CM3);
        assert!((rho.natural() / expect - 1.0).abs() < 1e-12);
        assert_eq!(rho.dimension().natural_power(), 4);
    }

    #[test]
    fn nanometre_in_inverse_ev() {
        let l = Quantity::new(1.0, Unit::NANOMETER);
        assert!((l.natural() - 1.0 / 197.326_980_4).abs() < 1e-12);
        assert_eq!(l.dimension().natural_power(), -1);
    }

    #[test]
    fn hbar_is_one() {
        // ħ = 6.582119569e-16 eV·s.
        let hbar = Quantity::new(constants::HBAR_EV_S, Unit::EV) * Quantity::new(1.0, Unit::SECOND_U);
        assert!((hbar.natural() - 1.0).abs() < 1e-12);
        assert_eq!(hbar.dimension().natural_power(), 0);
    }

    #[test]
    fn mismatched_add_rejected() {
        let a = Quantity::new(1.0, Unit::EV);
        let b = Quantity::new(1.0, Unit::METER);
        assert!(matches!(a.checked_add(b), Err(Error::DimensionMismatch { .. })));
        assert!(a.value_in(Unit::CM2).is_err());
    }

    #[test]
    fn parse_inline_units() {
        let m: Quantity = "10keV".parse().unwrap();
        assert_eq!(m.natural(), 1e4);
        let s: Quantity = "1e-27cm2".parse().unwrap();
        assert!((s.value_in(Unit::CM2).unwrap() - 1e-27).abs() < 1e-39);
        let v: Quantity = "230 km/s".parse().unwrap();
        assert_eq!(v.dimension(), Dimension::VELOCITY);
        let a: Quantity = "2.6Å".parse().unwrap();
        assert!((a.value_in(Unit::NANOMETER).unwrap() - 0.26).abs() < 1e-14);
        assert!("keV".parse::<Quantity>().is_err());
        assert!("3 furlongs".parse::<Quantity>().is_err());
    }

    #[test]
    fn zero_vector_norm_is_exact() {
        assert_eq!(Vector3Q::zero(Dimension::LENGTH).norm().natural(), 0.0);
        let v = Vector3Q::new([3.0, 4.0, 0.0], Unit::METER);
        assert!((v.norm().value_in(Unit::METER).unwrap() - 5.0).abs() < 1e-14);
    }
}
