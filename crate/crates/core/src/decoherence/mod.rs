//! Complex decoherence rate F(Δx), the decoherence factor γ and interferometer statistics.

mod kernel;
mod mc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::coherent::{StructureKernel, TargetComposition};
use crate::error::{Error, Result};
use crate::halo::{occupation_number, DMCandidate, HaloModel};
use crate::units::{constants, dot3, norm3, Dimension, Quantity, Vector3Q};

pub use kernel::RateOptions;
pub use mc::rate_mc;

/// Two wavepackets separated by Δx, held for T.
#[derive(Debug, Clone)]
pub struct Superposition {
    delta_x: [f64; 3],
    hold_time: f64,
    target: TargetComposition,
}

impl Superposition {
    pub fn new(delta_x: Vector3Q, hold_time: Quantity, target: TargetComposition) -> Result<Self> {
        let dx = delta_x.natural_as(Dimension::LENGTH)?;
        let t = hold_time.natural_as(Dimension::TIME)?;
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter(format!("hold time must be positive, got {hold_time}")));
        }
        if dx.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("separation must be finite".into()));
        }
        Ok(Superposition { delta_x: dx, hold_time: t, target })
    }

    pub fn delta_x(&self) -> Vector3Q {
        Vector3Q::from_natural(self.delta_x, Dimension::LENGTH)
    }
    pub fn hold_time(&self) -> Quantity {
        Quantity::from_natural(self.hold_time, Dimension::TIME)
    }
    pub fn target(&self) -> &TargetComposition {
        &self.target
    }

    pub fn with_delta_x(&self, delta_x: Vector3Q) -> Result<Self> {
        Self::new(delta_x, self.hold_time(), self.target.clone())
    }

    pub(crate) fn delta_x_n(&self) -> [f64; 3] {
        self.delta_x
    }
}

/// Whether the structure factor enters the rate integrand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Enhancement {
    /// Nuclei scatter independently: N_a·A² per target.
    #[default]
    Off,
    /// Coherent sum over nuclei with the target's pair correlations.
    On,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Quadrature,
    MonteCarlo,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Quadrature => "quadrature",
            Method::MonteCarlo => "monte-carlo",
        })
    }
}

/// F = F_R + i F_I with error estimates, all stored as natural rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateResult {
    f_real: f64,
    f_imag: f64,
    error_real: f64,
    error_imag: f64,
    /// Fully decohered limit: total scattering rate of the target.
    saturation: f64,
    pub method: Method,
    /// Peak mode occupancy; above one the rate is outside its validity.
    pub occupation: f64,
}

impl RateResult {
    pub(crate) fn from_natural(re: f64, im: f64, err_re: f64, err_im: f64, saturation: f64, method: Method) -> Self {
        RateResult { f_real: re, f_imag: im, error_real: err_re, error_imag: err_im, saturation, method, occupation: 0.0 }
    }

    /// Build from rates in 1/s.
    pub fn from_per_second(f_real: f64, f_imag: f64, quad_error: f64) -> Self {
        let s = constants::SECOND;
        Self::from_natural(f_real / s, f_imag / s, quad_error / s, quad_error / s, f_real / s, Method::Quadrature)
    }

    pub fn f_real(&self) -> Quantity {
        Quantity::from_natural(self.f_real, Dimension::RATE)
    }
    pub fn f_imag(&self) -> Quantity {
        Quantity::from_natural(self.f_imag, Dimension::RATE)
    }
    pub fn f_real_per_s(&self) -> f64 {
        self.f_real * constants::SECOND
    }
    pub fn f_imag_per_s(&self) -> f64 {
        self.f_imag * constants::SECOND
    }
    pub fn error_real_per_s(&self) -> f64 {
        self.error_real * constants::SECOND
    }
    pub fn error_imag_per_s(&self) -> f64 {
        self.error_imag * constants::SECOND
    }
    /// Larger of the two absolute error estimates, in 1/s.
    pub fn quad_error(&self) -> f64 {
        self.error_real.max(self.error_imag) * constants::SECOND
    }
    /// Total scattering rate, the ζ → ∞ limit of F_R, in 1/s.
    pub fn saturation_per_s(&self) -> f64 {
        self.saturation * constants::SECOND
    }
    pub fn complex(&self) -> Complex64 {
        Complex64::new(self.f_real, self.f_imag)
    }

    pub fn scaled(&self, k: f64) -> Self {
        RateResult {
            f_real: self.f_real * k,
            f_imag: self.f_imag * k,
            error_real: self.error_real * k.abs(),
            error_imag: self.error_imag * k.abs(),
            saturation: self.saturation * k,
            ..*self
        }
    }
}

impl std::ops::Add for RateResult {
    type Output = RateResult;
    fn add(self, o: RateResult) -> RateResult {
        RateResult {
            f_real: self.f_real + o.f_real,
            f_imag: self.f_imag + o.f_imag,
            error_real: self.error_real + o.error_real,
            error_imag: self.error_imag + o.error_imag,
            saturation: self.saturation + o.saturation,
            method: self.method,
            occupation: self.occupation.max(o.occupation),
        }
    }
}

pub(crate) fn structure_for(target: &TargetComposition, enhancement: Enhancement) -> StructureKernel {
    match enhancement {
        Enhancement::Off => StructureKernel::incoherent(target),
        Enhancement::On => StructureKernel::coherent(target),
    }
}

/// cos of the angle between Δx and the wind; zero wind or zero Δx gives 1.
fn cos_chi(dx: [f64; 3], halo: &HaloModel) -> f64 {
    let ve = halo.v_earth_n();
    let (a, b) = (norm3(dx), norm3(ve));
    if a == 0.0 || b == 0.0 {
        1.0
    } else {
        (dot3(dx, ve) / (a * b)).clamp(-1.0, 1.0)
    }
}

/// F(Δx) with default numerical options.
pub fn rate(dm: &DMCandidate, sup: &Superposition, halo: &HaloModel, enhancement: Enhancement) -> Result<RateResult> {
    rate_with(dm, sup, halo, enhancement, &RateOptions::default())
}

/// F(Δx) for the given options. σ enters linearly.
pub fn rate_with(
    dm: &DMCandidate,
    sup: &Superposition,
    halo: &HaloModel,
    enhancement: Enhancement,
    opts: &RateOptions,
) -> Result<RateResult> {
    let structure = structure_for(&sup.target, enhancement);
    let prefactor = halo.rho_n() * dm.sigma_n() / dm.mass_n();
    let abs_tol = if prefactor > 0.0 { opts.abs_tol_per_s / constants::SECOND / prefactor } else { f64::INFINITY };
    let problem = kernel::KernelProblem {
        halo,
        mass: dm.mass_n(),
        dx: norm3(sup.delta_x),
        cos_chi: cos_chi(sup.delta_x, halo),
        structure: &structure,
    };
    let k = kernel::kernel_integral(&problem, opts, abs_tol).map_err(|e| match e {
        Error::NonConvergent { value_real, value_imag, error, tolerance } => Error::NonConvergent {
            value_real: value_real * prefactor * constants::SECOND,
            value_imag: value_imag * prefactor * constants::SECOND,
            error: error * prefactor * constants::SECOND,
            tolerance: tolerance * prefactor * constants::SECOND,
        },
        other => other,
    })?;
    let mut r = RateResult::from_natural(
        prefactor * k.re,
        prefactor * k.im,
        prefactor * k.err_re,
        prefactor * k.err_im,
        prefactor * k.saturation,
        Method::Quadrature,
    );
    r.occupation = occupation_number(halo, dm);
    Ok(r)
}

/// γ = exp(−F·T).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoherenceFactor {
    pub gamma: Complex64,
}

impl DecoherenceFactor {
    pub fn new(gamma: Complex64) -> Result<Self> {
        if !(gamma.norm() <= 1.0 + 1e-9) {
            return Err(Error::GammaOutOfRange(gamma.norm()));
        }
        Ok(DecoherenceFactor { gamma })
    }

    pub fn magnitude(&self) -> f64 {
        self.gamma.norm()
    }
}

pub fn decoherence_factor(r: &RateResult, hold_time: Quantity) -> Result<DecoherenceFactor> {
    let t = hold_time.natural_as(Dimension::TIME)?;
    if !(t > 0.0) {
        return Err(Error::InvalidParameter("hold time must be positive".into()));
    }
    let ft = r.complex() * t;
    // exp(−F_R T) and the phase separately so a vanishing F_I gives an exactly real γ.
    let mag = (-ft.re).exp();
    let gamma = if ft.im == 0.0 { Complex64::new(mag, 0.0) } else { Complex64::from_polar(mag, -ft.im) };
    DecoherenceFactor::new(gamma)
}

/// ½[[1, γ], [γ*, 1]] in the {L, R} basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(pub [[Complex64; 2]; 2]);

impl DensityMatrix {
    pub fn trace(&self) -> Complex64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        (0..2).all(|i| (0..2).all(|j| (self.0[i][j] - self.0[j][i].conj()).norm() <= tol))
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let a = self.0[0][0].re;
        let d = self.0[1][1].re;
        let b = self.0[0][1].norm();
        let mean = 0.5 * (a + d);
        let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        [mean - r, mean + r]
    }
}

pub fn density_matrix(g: &DecoherenceFactor) -> Result<DensityMatrix> {
    if g.gamma.norm() > 1.0 + 1e-9 {
        return Err(Error::GammaOutOfRange(g.gamma.norm()));
    }
    let half = Complex64::new(0.5, 0.0);
    Ok(DensityMatrix([[half, 0.5 * g.gamma], [0.5 * g.gamma.conj(), half]]))
}

/// (p_bright, p_dim) of the recombined interferometer.
pub fn port_probabilities(g: &DecoherenceFactor) -> (f64, f64) {
    let re = g.gamma.re;
    (0.5 * (1.0 + re), 0.5 * (1.0 - re))
}

/// One row of a χ scan: F normalised to F_R(χ = 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiPoint {
    pub chi: f64,
    pub f_real: f64,
    pub f_imag: f64,
    pub error_real: f64,
    pub error_imag: f64,
}

/// Separation of length ζ/(m v0) at angle χ from the wind.
pub fn separation_for(zeta: f64, chi: f64, dm: &DMCandidate, halo: &HaloModel) -> Vector3Q {
    let len = zeta / (dm.mass_n() * halo.v0_n());
    let ve = halo.v_earth_n();
    let n = norm3(ve);
    let z = if n > 0.0 { ve.map(|c| c / n) } else { [0.0, 0.0, 1.0] };
    // Any unit vector perpendicular to the wind.
    let helper = if z[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let d = dot3(helper, z);
    let mut p = [helper[0] - d * z[0], helper[1] - d * z[1], helper[2] - d * z[2]];
    let pn = norm3(p);
    p = p.map(|c| c / pn);
    let (s, c) = chi.sin_cos();
    Vector3Q::from_natural([0, 1, 2].map(|i| len * (c * z[i] + s * p[i])), Dimension::LENGTH)
}

/// F_R and F_I over a grid of wind angles at fixed ζ = m v0 |Δx|, normalised to F_R(0).
pub fn chi_scan(
    dm: &DMCandidate,
    sup: &Superposition,
    halo: &HaloModel,
    chi_grid: &[f64],
    zeta: f64,
    enhancement: Enhancement,
    opts: &RateOptions,
) -> Result<Vec<ChiPoint>> {
    if !(zeta > 0.0 && zeta.is_finite()) {
        return Err(Error::InvalidParameter(format!("zeta must be positive, got {zeta}")));
    }
    if let Some(bad) = chi_grid.iter().find(|c| !(0.0..=std::f64::consts::PI + 1e-12).contains(*c)) {
        return Err(Error::InvalidParameter(format!("chi must lie in [0, pi], got {bad}")));
    }
    let at = |chi: f64| -> Result<RateResult> {
        let s = sup.with_delta_x(separation_for(zeta, chi, dm, halo))?;
        rate_with(dm, &s, halo, enhancement, opts)
    };
    let reference = at(0.0)?;
    let norm = reference.f_real;
    if !(norm > 0.0) {
        return Err(Error::VanishingDenominator);
    }
    let rows: Vec<Result<ChiPoint>> = chi_grid
        .par_iter()
        .map(|&chi| {
            let r = if chi == 0.0 { reference } else { at(chi)? };
            Ok(ChiPoint {
                chi,
                f_real: r.f_real / norm,
                f_imag: r.f_imag / norm,
                error_real: r.error_real / norm,
                error_imag: r.error_imag / norm,
            })
        })
        .collect();
    rows.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::Unit;

    #[test]
    fn gamma_limits() {
        let t = Quantity::new(1.0, Unit::SECOND_U);
        let g = decoherence_factor(&RateResult::from_per_second(0.0, 0.0, 0.0), t).unwrap();
        assert_eq!(g.gamma, Complex64::new(1.0, 0.0));
        let g = decoherence_factor(&RateResult::from_per_second(1.0, 0.0, 0.0), t).unwrap();
        assert!((g.magnitude() - (-1.0f64).exp()).abs() < 1e-15);
        let g = decoherence_factor(&RateResult::from_per_second(0.0, std::f64::consts::PI, 0.0), t).unwrap();
        assert!((g.gamma - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn ports() {
        let one = DecoherenceFactor::new(Complex64::new(1.0, 0.0)).unwrap();
        assert_eq!(port_probabilities(&one), (1.0, 0.0));
        let i = DecoherenceFactor::new(Complex64::new(0.0, 1.0)).unwrap();
        assert_eq!(port_probabilities(&i), (0.5, 0.5));
    }

    #[test]
    fn separation_direction() {
        let halo = HaloModel::standard();
        let dm = DMCandidate::from_ev_cm2(1e4, 1e-27).unwrap();
        let dx = separation_for(2.0, 0.3, &dm, &halo).natural();
        assert!((cos_chi(dx, &halo) - 0.3f64.cos()).abs() < 1e-14);
        assert!((norm3(dx) * dm.mass_n() * halo.v0_n() - 2.0).abs() < 1e-13);
    }
}
