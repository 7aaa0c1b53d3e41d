//! The galactic halo: a truncated Maxwellian seen from the moving lab.
//!
//! Velocities are kept in units of c. The lab-frame density is
//! f(v) = C·exp(−|v + v_E|²/v0²)·Θ(v_esc − |v + v_E|), normalised to one.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature::{composite_nodes, GaussRule};
use crate::special::erf;
use crate::units::{dot3, norm3, Dimension, Quantity, Unit, Vector3Q};

/// Lower edge of the mass window the model is meant for, in eV.
pub const MASS_WINDOW_LOW_EV: f64 = 10.0;
/// Upper edge of the mass window, in eV.
pub const MASS_WINDOW_HIGH_EV: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub struct HaloModel {
    rho: f64,
    v0: f64,
    v_esc: f64,
    v_earth: [f64; 3],
}

impl HaloModel {
    pub fn new(rho: Quantity, v0: Quantity, v_esc: Quantity, v_earth: Vector3Q) -> Result<Self> {
        let rho = rho.natural_as(Dimension::MASS_DENSITY)?;
        let v0 = v0.natural_as(Dimension::VELOCITY)?;
        let v_esc = v_esc.natural_as(Dimension::VELOCITY)?;
        let v_earth = v_earth.natural_as(Dimension::VELOCITY)?;
        Self::from_natural(rho, v0, v_esc, v_earth)
    }

    pub(crate) fn from_natural(rho: f64, v0: f64, v_esc: f64, v_earth: [f64; 3]) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidParameter(format!("halo density must be positive, got {rho}")));
        }
        if !(v0 > 0.0 && v0 < v_esc && v_esc < 0.1) {
            return Err(Error::InvalidParameter("need 0 < v0 < v_esc << c".into()));
        }
        if !(norm3(v_earth) < v_esc) || v_earth.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("|v_earth| must be below v_esc".into()));
        }
        Ok(HaloModel { rho, v0, v_esc, v_earth })
    }

    /// ρ = 0.4 GeV/cm³, v0 = 230 km/s, v_esc = 600 km/s, v_E = 230 km/s along +z.
    pub fn standard() -> Self {
        Self::with_earth_speed(Quantity::new(230.0, Unit::KM_PER_S)).expect("standard halo is valid")
    }

    /// Standard halo with the lab moving at `speed` along +z.
    pub fn with_earth_speed(speed: Quantity) -> Result<Self> {
        HaloModel::new(
            Quantity::new(0.4, Unit::GEV_PER_CM3),
            Quantity::new(230.0, Unit::KM_PER_S),
            Quantity::new(600.0, Unit::KM_PER_S),
            Vector3Q::along(speed, [0.0, 0.0, 1.0]),
        )
    }

    pub fn with_v_earth(&self, v_earth: Vector3Q) -> Result<Self> {
        Self::from_natural(self.rho, self.v0, self.v_esc, v_earth.natural_as(Dimension::VELOCITY)?)
    }

    pub fn rho(&self) -> Quantity {
        Quantity::from_natural(self.rho, Dimension::MASS_DENSITY)
    }
    pub fn v0(&self) -> Quantity {
        Quantity::from_natural(self.v0, Dimension::VELOCITY)
    }
    pub fn v_esc(&self) -> Quantity {
        Quantity::from_natural(self.v_esc, Dimension::VELOCITY)
    }
    pub fn v_earth(&self) -> Vector3Q {
        Vector3Q::from_natural(self.v_earth, Dimension::VELOCITY)
    }

    pub(crate) fn rho_n(&self) -> f64 {
        self.rho
    }
    pub(crate) fn v0_n(&self) -> f64 {
        self.v0
    }
    pub(crate) fn v_esc_n(&self) -> f64 {
        self.v_esc
    }
    pub(crate) fn v_earth_n(&self) -> [f64; 3] {
        self.v_earth
    }
    pub(crate) fn v_earth_speed(&self) -> f64 {
        norm3(self.v_earth)
    }

    /// erf(z) − 2z·e^{−z²}/√π with z = v_esc/v0.
    pub fn truncation_norm(&self) -> f64 {
        let z = self.v_esc / self.v0;
        erf(z) - 2.0 * z * (-z * z).exp() / PI.sqrt()
    }

    /// Prefactor C of the normalised lab-frame density (units c⁻³).
    pub(crate) fn norm_const(&self) -> f64 {
        1.0 / (PI.powf(1.5) * self.v0.powi(3) * self.truncation_norm())
    }

    /// Lab-frame velocity density f(v), v in units of c.
    pub fn velocity_density(&self, v: [f64; 3]) -> f64 {
        let u = [v[0] + self.v_earth[0], v[1] + self.v_earth[1], v[2] + self.v_earth[2]];
        let u2 = dot3(u, u);
        if u2 >= self.v_esc * self.v_esc {
            return 0.0;
        }
        self.norm_const() * (-u2 / (self.v0 * self.v0)).exp()
    }

    /// Mean lab-frame speed ⟨|v|⟩ in units of c.
    pub fn mean_speed(&self) -> f64 {
        // In the frame with polar axis along v_E the μ integral is elementary.
        let ve = self.v_earth_speed();
        let v0 = self.v0;
        let c = self.norm_const();
        let rule = GaussRule::cached(32);
        let shell = |v: f64| -> f64 {
            if v == 0.0 {
                return 0.0;
            }
            let mu_hi = self.mu_max(v);
            if mu_hi <= -1.0 {
                return 0.0;
            }
            let base = (-(v * v + ve * ve) / (v0 * v0)).exp();
            let a = 2.0 * v * ve / (v0 * v0);
            let mu_int = if a < 1e-8 {
                mu_hi + 1.0
            } else {
                // ∫_{-1}^{μ_hi} e^{−aμ} dμ
                ((a).exp() - (-a * mu_hi).exp()) / a
            };
            2.0 * PI * c * v * v * v * base * mu_int
        };
        let (v1, vmax) = self.speed_breaks();
        let mut total = 0.0;
        for (lo, hi) in [(0.0, v1), (v1, vmax)] {
            if hi > lo {
                for (v, w) in composite_nodes(lo, hi, 4, &rule) {
                    total += w * shell(v);
                }
            }
        }
        total
    }

    /// (v_esc − |v_E|, v_esc + |v_E|): below the first every direction is allowed.
    pub(crate) fn speed_breaks(&self) -> (f64, f64) {
        let ve = self.v_earth_speed();
        (self.v_esc - ve, self.v_esc + ve)
    }

    /// Largest cosine between v and v_E for which |v + v_E| < v_esc.
    pub(crate) fn mu_max(&self, v: f64) -> f64 {
        let ve = self.v_earth_speed();
        if ve == 0.0 || v == 0.0 {
            return if v < self.v_esc { 1.0 } else { -1.0 };
        }
        ((self.v_esc * self.v_esc - v * v - ve * ve) / (2.0 * v * ve)).clamp(-1.0, 1.0)
    }
}

impl Default for HaloModel {
    fn default() -> Self {
        Self::standard()
    }
}

/// A dark-matter particle: mass and per-nucleon spin-independent cross-section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DMCandidate {
    mass: f64,
    sigma: f64,
}

impl DMCandidate {
    /// `mass` as energy or mass, `sigma` as an area.
    pub fn new(mass: Quantity, sigma: Quantity) -> Result<Self> {
        Self::from_natural(mass.natural_mass()?, sigma.natural_as(Dimension::AREA)?)
    }

    /// Mass in eV and σ in cm².
    pub fn from_ev_cm2(mass_ev: f64, sigma_cm2: f64) -> Result<Self> {
        Self::new(Quantity::new(mass_ev, Unit::EV), Quantity::new(sigma_cm2, Unit::CM2))
    }

    pub(crate) fn from_natural(mass: f64, sigma: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidParameter(format!("DM mass must be positive, got {mass}")));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("cross-section must be non-negative, got {sigma}")));
        }
        Ok(DMCandidate { mass, sigma })
    }

    pub fn mass(&self) -> Quantity {
        Quantity::from_natural(self.mass, Dimension::ENERGY)
    }
    pub fn sigma(&self) -> Quantity {
        Quantity::from_natural(self.sigma, Dimension::AREA)
    }
    pub(crate) fn mass_n(&self) -> f64 {
        self.mass
    }
    pub(crate) fn sigma_n(&self) -> f64 {
        self.sigma
    }

    pub fn with_sigma(&self, sigma: Quantity) -> Result<Self> {
        Self::from_natural(self.mass, sigma.natural_as(Dimension::AREA)?)
    }

    /// True outside 10 eV – 100 MeV, where the model's assumptions are untested.
    pub fn outside_mass_window(&self) -> bool {
        self.mass < MASS_WINDOW_LOW_EV || self.mass > MASS_WINDOW_HIGH_EV
    }
}

/// Lab-frame phase-space number density n(q), normalised to ρ/m.
pub fn momentum_distribution(q: &Vector3Q, halo: &HaloModel, dm: &DMCandidate) -> Result<Quantity> {
    let q = q.natural_as(Dimension::MOMENTUM)?;
    let m = dm.mass;
    let v = q.map(|c| c / m);
    let beta = norm3(v);
    if beta >= 1.0 {
        return Err(Error::Relativistic { beta });
    }
    let n = halo.rho / m / m.powi(3) * halo.velocity_density(v);
    Ok(Quantity::from_natural(n, Dimension::PHASE_SPACE_DENSITY))
}

/// Γ₀ = v0·σ·ρ/m, the per-nucleon scattering rate scale.
pub fn interaction_rate(halo: &HaloModel, dm: &DMCandidate) -> Quantity {
    Quantity::from_natural(halo.v0 * dm.sigma * halo.rho / dm.mass, Dimension::RATE)
}

/// Largest energy a particle of speed `speed` can deposit in a target of mass M: 2m²v²/M.
pub fn max_energy_transfer(dm: &DMCandidate, target_mass: Quantity, speed: Quantity) -> Result<Quantity> {
    let big_m = target_mass.natural_mass()?;
    let v = speed.natural_as(Dimension::VELOCITY)?;
    if !(big_m > 0.0) {
        return Err(Error::InvalidParameter("target mass must be positive".into()));
    }
    Ok(Quantity::from_natural(2.0 * dm.mass * dm.mass * v * v / big_m, Dimension::ENERGY))
}

/// Peak occupancy of momentum modes, max n(q)·(2πħ)³. Above one the
/// distinguishable-particle treatment breaks down.
pub fn occupation_number(halo: &HaloModel, dm: &DMCandidate) -> f64 {
    // The lab density peaks at v = −v_E where the galactic speed vanishes.
    let f_max = halo.norm_const();
    halo.rho / dm.mass.powi(4) * f_max * (2.0 * PI).powi(3)
}
