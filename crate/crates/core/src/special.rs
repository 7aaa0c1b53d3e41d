//! Special functions with cancellation-free small-argument branches.

/// J0(x).
pub fn j0(x: f64) -> f64 {
    libm::j0(x)
}

/// 1 − J0(x), accurate for small x.
pub fn one_minus_j0(x: f64) -> f64 {
    if x.abs() < 0.5 {
        // Σ_{k≥1} (−1)^{k+1} (x²/4)^k / (k!)²
        let y = 0.25 * x * x;
        let mut term = y;
        let mut sum = y;
        for k in 2..8 {
            let k = k as f64;
            term *= -y / (k * k);
            sum += term;
        }
        sum
    } else {
        1.0 - libm::j0(x)
    }
}

/// sin(x)/x.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// 1 − sin(x)/x, accurate for small x.
pub fn one_minus_sinc(x: f64) -> f64 {
    if x.abs() < 0.5 {
        // Σ_{k≥1} (−1)^{k+1} x^{2k} / (2k+1)!
        let x2 = x * x;
        let mut term = x2 / 6.0;
        let mut sum = term;
        for k in 2..9 {
            let k = k as f64;
            term *= -x2 / ((2.0 * k) * (2.0 * k + 1.0));
            sum += term;
        }
        sum
    } else {
        1.0 - x.sin() / x
    }
}

/// 1 − cos(x) = 2 sin²(x/2).
pub fn one_minus_cos(x: f64) -> f64 {
    let s = (0.5 * x).sin();
    2.0 * s * s
}

/// Modified Bessel I0(x) for the moderate arguments that occur in the halo integrals.
pub fn bessel_i0(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 30.0 {
        let y = 0.25 * ax * ax;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        loop {
            term *= y / (k * k);
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
            k += 1.0;
        }
        sum
    } else {
        // Asymptotic series.
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..12 {
            let kk = (2 * k - 1) as f64;
            term *= kk * kk / (8.0 * ax * k as f64);
            sum += term;
        }
        ax.exp() / (2.0 * std::f64::consts::PI * ax).sqrt() * sum
    }
}

/// erf(x).
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}
