//! Gauss-Legendre rules, composite panel sums and a 1-D adaptive Gauss-Kronrod integrator.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// An n-point Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Nodes from Newton iteration on P_n; nodes are exactly antisymmetric.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussRule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Shared, lazily built rule.
    pub fn cached(n: usize) -> Arc<GaussRule> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussRule>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("gauss rule cache poisoned");
        guard.entry(n).or_insert_with(|| Arc::new(GaussRule::new(n))).clone()
    }

    /// Nodes and weights mapped to [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = 0.5 * (b - a);
        let c = 0.5 * (b + a);
        self.nodes.iter().zip(&self.weights).map(move |(&x, &w)| (c + h * x, h * w))
    }
}

/// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Nodes and weights of `panels` equal panels on [a, b], each with `rule`.
pub fn composite_nodes(a: f64, b: f64, panels: usize, rule: &GaussRule) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(panels * rule.len());
    if b <= a || panels == 0 {
        return out;
    }
    let h = (b - a) / panels as f64;
    for p in 0..panels {
        let lo = a + h * p as f64;
        let hi = if p + 1 == panels { b } else { lo + h };
        out.extend(rule.mapped(lo, hi));
    }
    out
}

/// Composite Gauss-Legendre sum of `f` over [a, b].
pub fn composite<F: FnMut(f64) -> f64>(a: f64, b: f64, panels: usize, rule: &GaussRule, mut f: F) -> f64 {
    composite_nodes(a, b, panels, rule).into_iter().map(|(x, w)| w * f(x)).sum()
}

/// Map t ∈ [0, 1] to [a, b] by the cubic 3t² − 2t³. The Jacobian vanishes at
/// both ends, so square-root endpoint behaviour becomes smooth in t.
pub fn smoothstep_nodes(a: f64, b: f64, panels: usize, rule: &GaussRule) -> Vec<(f64, f64)> {
    composite_nodes(0.0, 1.0, panels, rule)
        .into_iter()
        .map(|(t, w)| {
            let s = t * t * (3.0 - 2.0 * t);
            let ds = 6.0 * t * (1.0 - t);
            (a + (b - a) * s, w * (b - a) * ds)
        })
        .collect()
}

// Kronrod 15 / Gauss 7 nodes on [0, 1] half-interval (symmetric).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = WGK[7] * fc;
    let mut rg = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    (rk * h, ((rk - rg) * h).abs())
}

/// Adaptive Gauss-Kronrod on [a, b]. Returns (integral, error estimate).
pub fn adaptive<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> (f64, f64) {
    if a == b {
        return (0.0, 0.0);
    }
    let mut intervals = vec![{
        let (v, e) = gk15(&mut f, a, b);
        (a, b, v, e)
    }];
    for _ in 0..2000 {
        let total: f64 = intervals.iter().map(|iv| iv.2).sum();
        let err: f64 = intervals.iter().map(|iv| iv.3).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            break;
        }
        let (idx, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = intervals.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
    intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
    let total = intervals.iter().map(|iv| iv.2).sum();
    let err = intervals.iter().map(|iv| iv.3).sum();
    (total, err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_integrates_polynomials_exactly() {
        for n in [1, 2, 5, 16, 33] {
            let r = GaussRule::new(n);
            let wsum: f64 = r.weights.iter().sum();
            assert!((wsum - 2.0).abs() < 1e-13, "n={n}");
            let deg = 2 * n - 1;
            let got: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(deg as i32 - 1)).sum();
            let expect = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!((got - expect).abs() < 1e-13, "n={n}: {got} vs {expect}");
        }
    }

    #[test]
    fn nodes_are_antisymmetric() {
        let r = GaussRule::new(20);
        for i in 0..20 {
            assert_eq!(r.nodes[i], -r.nodes[19 - i]);
            assert_eq!(r.weights[i], r.weights[19 - i]);
        }
    }

    #[test]
    fn composite_oscillatory() {
        let r = GaussRule::new(16);
        let v = composite(0.0, 100.0, 20, &r, |x| x.cos());
        assert!((v - 100f64.sin()).abs() < 1e-12);
    }

    #[test]
    fn smoothstep_handles_sqrt_endpoints() {
        let r = GaussRule::new(16);
        let v: f64 = smoothstep_nodes(0.0, 1.0, 4, &r).into_iter().map(|(x, w)| w * (x * (1.0 - x)).sqrt()).sum();
        assert!((v - std::f64::consts::PI / 8.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn adaptive_peaked() {
        let (v, e) = adaptive(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-12, 1e-12);
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((v - exact).abs() < 1e-8 * exact, "{v} {exact} {e}");
    }
}
