use std::f64::consts::PI;

use dmdecoh::coherent::*;
use dmdecoh::decoherence::Superposition;
use dmdecoh::units::constants;
use dmdecoh::{Dimension, Quantity, Unit, Vector3Q};
use proptest::prelude::*;

/// Taylor series of f(s) to many terms, independent of the library branches.
fn form_factor_series(s: f64) -> f64 {
    let mut sum = 0.0;
    let mut fact = 6.0;
    for k in 0..24 {
        if k > 0 {
            fact *= ((2 * k + 2) * (2 * k + 3)) as f64;
        }
        sum += (-1f64).powi(k) * (2 * k + 2) as f64 * s.powi(2 * k) / fact;
    }
    sum
}

fn angstrom(x: f64) -> Quantity {
    Quantity::new(x, Unit::ANGSTROM)
}

fn momentum_for_lambda_bar(lambda_bar: f64) -> f64 {
    1.0 / lambda_bar
}

fn sphere50(pair: PairCorrelation) -> TargetComposition {
    TargetComposition::amorphous_sphere(50, 197.0, angstrom(2.6), pair).unwrap()
}

fn radius_n(t: &TargetComposition) -> f64 {
    t.radius().unwrap().natural()
}

fn boost_at(target: &TargetComposition, lambda_bar: f64, eta: f64, samples: usize) -> EnhancementResult {
    let r = radius_n(target);
    let sup = Superposition::new(
        Vector3Q::from_natural([0.0, 0.0, 2.0 * r], Dimension::LENGTH),
        Quantity::new(1.0, Unit::SECOND_U),
        target.clone(),
    )
    .unwrap();
    let q = momentum_for_lambda_bar(lambda_bar);
    let qv = Vector3Q::from_natural([q * eta.sin(), 0.0, q * eta.cos()], Dimension::MOMENTUM);
    coherent_boost(&qv, &sup, samples, 17).unwrap()
}

#[test]
fn form_factor_special_values() {
    assert!((sphere_form_factor(0.0) - 1.0 / 3.0).abs() < 1e-16);
    assert!((sphere_form_factor(PI) - 1.0 / (PI * PI)).abs() < 1e-15);
    for s in [1e-6, 1e-3, 0.0099999, 0.01, 0.0100001, 0.5, 0.999999, 1.0, 1.000001, 1.5] {
        assert!((sphere_form_factor(s) - form_factor_series(s)).abs() < 1e-12, "{s}");
    }
    let below = sphere_form_factor(SERIES_BELOW * (1.0 - 1e-15));
    let above = sphere_form_factor(SERIES_BELOW);
    assert!((below - above).abs() < 1e-12);
}

#[test]
fn structure_factor_forward_is_fully_coherent() {
    for pair in [PairCorrelation::Trivial, PairCorrelation::ExcludedVolume] {
        let t = sphere50(pair);
        let i0 = structure_factor(&Vector3Q::zero(Dimension::MOMENTUM), &t, 100, 1).unwrap();
        assert_eq!(i0.value, 50.0 * 50.0 * 197.0 * 197.0);
        assert_eq!(i0.std_error, 0.0);
    }
}

#[test]
fn structure_factor_matches_sphere_closed_form() {
    let t = TargetComposition::sphere(20, 12.0, angstrom(20.0), angstrom(1.0), PairCorrelation::Trivial).unwrap();
    let r = radius_n(&t);
    for s in [0.5, 2.0, 4.5] {
        let dq = s / r;
        let v = Vector3Q::from_natural([0.3 * dq, 0.0, (1.0f64 - 0.09).sqrt() * dq], Dimension::MOMENTUM);
        let est = structure_factor(&v, &t, 20_000, 3).unwrap();
        // A²[N_a + ((N_a−1)/N_a)(4πρ f R³)²] with ρ = N_a/V.
        let rho = 20.0 / (4.0 / 3.0 * PI * r.powi(3));
        let closed = 144.0 * (20.0 + 19.0 / 20.0 * (4.0 * PI * rho * sphere_form_factor(s) * r.powi(3)).powi(2));
        assert!((est.value - closed).abs() < 3.0 * est.std_error, "{s}: {est:?} vs {closed}");
    }
}

#[test]
fn structure_factor_short_wavelength_is_incoherent() {
    let t = sphere50(PairCorrelation::Trivial);
    let dq = 100.0 / angstrom(2.6).natural();
    let v = Vector3Q::from_natural([0.0, dq, 0.0], Dimension::MOMENTUM);
    let est = structure_factor(&v, &t, 20_000, 4).unwrap();
    let incoherent = 50.0 * 197.0 * 197.0;
    assert!((est.value - incoherent).abs() < 3.0 * est.std_error + 1e-9 * incoherent, "{est:?}");
}

#[test]
fn structure_factor_is_inversion_symmetric() {
    let t = sphere50(PairCorrelation::ExcludedVolume);
    let dq = 0.7 / angstrom(2.6).natural();
    let plus = Vector3Q::from_natural([dq, 0.2 * dq, 0.0], Dimension::MOMENTUM);
    let a = structure_factor(&plus, &t, 400, 5).unwrap();
    let b = structure_factor(&plus.scale(-1.0), &t, 400, 5).unwrap();
    assert!((a.value - b.value).abs() <= 1e-9 * a.value);
    assert!(a.value >= 0.0);
}

#[test]
fn boost_limits_for_fifty_atoms() {
    let t = sphere50(PairCorrelation::ExcludedVolume);
    let r = radius_n(&t);
    let coherent = boost_at(&t, 1e3 * r, 0.7, 4000);
    assert!((coherent.boost / 50.0 - 1.0).abs() < 0.05, "{coherent:?}");
    assert_eq!(coherent.regime, Regime::FullCoherence);

    let trivial = sphere50(PairCorrelation::Trivial);
    let a0 = angstrom(2.6).natural();
    let incoherent = boost_at(&trivial, 1e-2 * a0, 0.7, 4000);
    assert!((incoherent.boost - 1.0).abs() < 0.1, "{incoherent:?}");
    assert_eq!(incoherent.regime, Regime::Incoherent);
}

#[test]
fn boost_beats_coherent_volume_estimate() {
    let t = sphere50(PairCorrelation::ExcludedVolume);
    let a0 = angstrom(2.6).natural();
    for lb_over_a0 in [0.5, 1.0, 2.0, 4.0] {
        let lb = lb_over_a0 * a0;
        let b = boost_at(&t, lb, 0.9, 2000);
        let est = coherent_volume_estimate(Quantity::from_natural(lb, Dimension::LENGTH), &t).unwrap().max(1.0);
        assert!(b.boost >= 0.3 * est, "{lb_over_a0}: {b:?} vs {est}");
    }
}

#[test]
fn boost_is_symmetric_under_reflection_of_eta() {
    let t = sphere50(PairCorrelation::Trivial);
    let a0 = angstrom(2.6).natural();
    for eta in [0.3, 1.0] {
        let a = boost_at(&t, 3.0 * a0, eta, 4000);
        let b = boost_at(&t, 3.0 * a0, PI - eta, 4000);
        let sigma = a.mc_error.hypot(b.mc_error);
        assert!((a.boost - b.boost).abs() < 3.0 * sigma + 1e-12, "{eta}: {a:?} {b:?}");
    }
}

#[test]
fn boost_rejects_zero_separation() {
    let t = sphere50(PairCorrelation::Trivial);
    let sup = Superposition::new(Vector3Q::zero(Dimension::LENGTH), Quantity::new(1.0, Unit::SECOND_U), t).unwrap();
    let q = Vector3Q::from_natural([0.0, 0.0, 1.0], Dimension::MOMENTUM);
    assert!(matches!(coherent_boost(&q, &sup, 100, 1), Err(dmdecoh::Error::VanishingDenominator)));
}

#[test]
fn coherent_volume_counts() {
    let t = sphere50(PairCorrelation::Trivial);
    let r = radius_n(&t);
    let whole = coherent_volume_estimate(Quantity::from_natural(2.0 * r, Dimension::LENGTH), &t).unwrap();
    assert!((whole - 50.0).abs() < 1e-9);
    assert_eq!(coherent_volume_estimate(Quantity::from_natural(5.0 * r, Dimension::LENGTH), &t).unwrap(), 50.0);
    // The sphere holding one atom has volume V/N_a.
    let one = 2.0 * r / 50f64.cbrt();
    let n = coherent_volume_estimate(Quantity::from_natural(one, Dimension::LENGTH), &t).unwrap();
    assert!((n - 1.0).abs() < 1e-12);
}

#[test]
fn debye_waller_for_gold() {
    let (temp, cs, rho) = gold_thermal(300.0);
    let t = TargetComposition::amorphous_sphere(1000, 197.0, angstrom(2.6), PairCorrelation::ExcludedVolume)
        .unwrap()
        .with_thermal(temp, cs, rho)
        .unwrap();
    let d0 = thermal_displacement(&t).unwrap().value_in(Unit::ANGSTROM).unwrap();
    assert!((d0 - 0.1).abs() < 0.005, "{d0}");
    let dq = Quantity::from_natural(1.0 / angstrom(2.6).natural(), Dimension::MOMENTUM);
    let dw = debye_waller(&t, dq).unwrap();
    let expected = (-(0.1f64 / 2.6).powi(2) / 3.0).exp();
    assert!((dw.factor - expected).abs() < 2e-5, "{dw:?}");
    assert!(dw.factor >= 0.999);
    assert!(!dw.below_validity);
    assert_eq!(debye_waller(&t, Quantity::from_natural(0.0, Dimension::MOMENTUM)).unwrap().factor, 1.0);

    for temp_k in [100.0, 200.0, 300.0] {
        let (tt, cs, rho) = gold_thermal(temp_k);
        let t = t.clone().with_thermal(tt, cs, rho).unwrap();
        assert!(debye_waller(&t, dq).unwrap().factor >= 0.999);
    }
    let (tt, cs, rho) = gold_thermal(50.0);
    let cold = t.with_thermal(tt, cs, rho).unwrap();
    assert!(debye_waller(&cold, dq).unwrap().below_validity);
}

#[test]
fn forward_fraction_long_wavelength_limit() {
    for theta in [0.0, 0.3, 1.0, 2.0, PI] {
        let got = forward_fraction(1e-4, theta);
        let expect = 0.5 * (1.0 + theta.cos());
        assert!((got - expect).abs() < 0.01 * expect.max(1e-3), "{theta}: {got} vs {expect}");
    }
}

#[test]
fn bulk_cross_section_limits() {
    let t = TargetComposition::sphere(1000, 12.0, angstrom(30.0), angstrom(2.0), PairCorrelation::Trivial).unwrap();
    let sigma = Quantity::new(1e-30, Unit::CM2);
    let tiny_q = Quantity::from_natural(1e-6 / radius_n(&t), Dimension::MOMENTUM);
    let full = bulk_cross_section(&t, sigma, tiny_q, 0.0).unwrap().value_in(Unit::CM2).unwrap();
    assert!((full / (1e-30 * 144.0 * 1e6) - 1.0).abs() < 1e-6);
    let back = bulk_cross_section(&t, sigma, tiny_q, PI).unwrap().value_in(Unit::CM2).unwrap();
    assert!((back / (1e-30 * 144.0 * 1000.0) - 1.0).abs() < 1e-12);
}

#[test]
fn bulk_coherent_term_falls_as_inverse_fourth_power() {
    // log-log slope of the coherent term over R ∈ [10λ̄, 100λ̄] at θ̄ = 0.1.
    let radii: Vec<f64> = (0..=10).map(|i| 10f64.powf(1.0 + i as f64 / 10.0)).collect();
    let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = radii.iter().map(|&r| forward_fraction(r, 0.1).ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((slope + 4.0).abs() < 0.4, "{slope}");
}

#[test]
fn bulk_cross_section_agrees_with_structure_factor_average() {
    // σ_bulk/σ = ∫ dr̂/4π I(q − q r̂) for a trivial-g sphere.
    let t = TargetComposition::sphere(10, 1.0, angstrom(10.0), angstrom(1.0), PairCorrelation::Trivial).unwrap();
    let q = 1.2 / radius_n(&t);
    let n_mu = 24;
    let mut avg = 0.0;
    let mut var = 0.0;
    let rule = dmdecoh::quadrature::GaussRule::new(n_mu);
    for (mu, w) in rule.mapped(-1.0, 1.0) {
        // Only |Δq| = q√(2(1−μ)) matters, so one azimuth suffices.
        let st = (1.0 - mu * mu).sqrt();
        let dq = [-q * st, 0.0, q * (1.0 - mu)];
        let est = structure_factor(&Vector3Q::from_natural(dq, Dimension::MOMENTUM), &t, 20_000, 9).unwrap();
        avg += 0.5 * w * est.value;
        var += (0.5 * w * est.std_error).powi(2);
    }
    let bulk = bulk_cross_section(&t, Quantity::from_natural(1.0, Dimension::AREA), Quantity::from_natural(q, Dimension::MOMENTUM), 0.0)
        .unwrap()
        .natural();
    // Errors at the quadrature nodes share a seed, so bound them as fully correlated.
    let sigma_corr = var.sqrt() * (n_mu as f64).sqrt();
    assert!((avg - bulk).abs() < 3.0 * sigma_corr, "{avg} vs {bulk} ± {sigma_corr}");
}

#[test]
fn overfull_targets_are_rejected() {
    assert!(TargetComposition::sphere(1000, 1.0, angstrom(5.0), angstrom(2.6), PairCorrelation::Trivial).is_err());
    assert!(TargetComposition::point(0, 1.0).is_err());
    assert!(TargetComposition::point(1, 0.5).is_err());
    let t = TargetComposition::point(10, 197.0).unwrap();
    assert!((t.mass().value_in(Unit::AMU).unwrap() - 1970.0).abs() < 1e-9);
    assert_eq!(t.n_nucleons(), 1970.0);
    let _ = constants::AMU_EV;
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn boost_stays_between_coherence_extremes(log_lb in -1.5..2.5f64, eta in 0.05..3.09f64) {
        let t = sphere50(PairCorrelation::Trivial);
        let a0 = angstrom(2.6).natural();
        let b = boost_at(&t, 10f64.powf(log_lb) * a0, eta, 800);
        prop_assert!(b.boost >= 1.0 - 3.0 * b.mc_error - 1e-12, "{:?}", b);
        prop_assert!(b.boost <= 50.0 + 3.0 * b.mc_error + 1e-12, "{:?}", b);
    }

    #[test]
    fn single_atom_boost_is_exactly_one(log_q in -3.0..3.0f64, eta in 0.1..3.0f64) {
        let t = TargetComposition::single_atom(87.0).unwrap();
        let sup = Superposition::new(Vector3Q::new([0.0, 0.0, 1.0], Unit::NANOMETER), Quantity::new(1.0, Unit::SECOND_U), t).unwrap();
        let q = 10f64.powf(log_q);
        let qv = Vector3Q::from_natural([q * eta.sin(), 0.0, q * eta.cos()], Dimension::MOMENTUM);
        let b = coherent_boost(&qv, &sup, 200, 3).unwrap();
        prop_assert!((b.boost - 1.0).abs() < 1e-12);
    }

    #[test]
    fn form_factor_matches_series(s in 0.0..3.0f64) {
        prop_assert!((sphere_form_factor(s) - form_factor_series(s)).abs() < 1e-12);
    }
}
