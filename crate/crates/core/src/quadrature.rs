//! One-dimensional quadrature: adaptive Gauss–Kronrod on finite intervals and
//! Gauss–Hermite rules for expectations under a standard normal.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::scalar::Scalar;

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
// Gauss weights for the odd-indexed Kronrod nodes (7-point rule).
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<T: Scalar>(f: &impl Fn(T) -> T, a: T, b: T) -> (T, T) {
    let half = (b - a) * T::lit(0.5);
    let mid = (a + b) * T::lit(0.5);
    let fc = f(mid);
    let mut kronrod = fc * T::lit(KRONROD_WEIGHTS[7]);
    let mut gauss = fc * T::lit(GAUSS_WEIGHTS[3]);
    for i in 0..7 {
        let dx = half * T::lit(GK_NODES[i]);
        let pair = f(mid - dx) + f(mid + dx);
        kronrod += pair * T::lit(KRONROD_WEIGHTS[i]);
        if i % 2 == 1 {
            gauss += pair * T::lit(GAUSS_WEIGHTS[i / 2]);
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

const MAX_DEPTH: usize = 48;
const MAX_SPLITS: usize = 20_000;

/// Adaptive Gauss–Kronrod (7/15) integration of `f` over `[a, b]`.
///
/// Intervals are bisected until the Kronrod/Gauss discrepancy falls below
/// `max(abs_tol, rel_tol·|I|)` scaled by the interval's share of `[a, b]`.
/// Subdivision stops after a fixed budget, so noisy integrands terminate.
pub fn integrate<T: Scalar>(f: impl Fn(T) -> T, a: T, b: T, abs_tol: T, rel_tol: T) -> T {
    let (whole, err) = gk15(&f, a, b);
    if err <= abs_tol.max(rel_tol * whole.abs()) {
        return whole;
    }
    let mut stack = vec![(a, b, whole, 0usize)];
    let mut total = T::zero();
    let width = b - a;
    let global = abs_tol.max(rel_tol * whole.abs());
    let mut splits = 0usize;
    while let Some((lo, hi, _, depth)) = stack.pop() {
        let mid = (lo + hi) * T::lit(0.5);
        let (left, el) = gk15(&f, lo, mid);
        let (right, er) = gk15(&f, mid, hi);
        splits += 1;
        let share = (hi - lo) / width;
        if el + er <= global * share || depth >= MAX_DEPTH || splits >= MAX_SPLITS {
            total += left + right;
        } else {
            stack.push((lo, mid, left, depth + 1));
            stack.push((mid, hi, right, depth + 1));
        }
    }
    total
}

/// Probabilists' Gauss–Hermite rule: `E[f(τ)] ≈ Σ wᵢ f(xᵢ)` for `τ ~ N(0, 1)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Golub–Welsch construction: nodes are the eigenvalues of the Jacobi
    /// matrix of the monic Hermite_e recurrence, weights are the squared first
    /// components of its normalized eigenvectors.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1);
        let mut diag = vec![0.0f64; order];
        let mut sub = vec![0.0f64; order];
        for (k, s) in sub.iter_mut().enumerate().take(order - 1) {
            *s = ((k + 1) as f64).sqrt();
        }
        let mut first = vec![0.0f64; order];
        first[0] = 1.0;
        tridiagonal_ql(&mut diag, &mut sub, &mut first);
        let mut pairs: Vec<(f64, f64)> = diag
            .iter()
            .zip(first.iter())
            .map(|(&x, &z)| (x, z * z))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn expect<T: Scalar>(&self, f: impl Fn(T) -> T) -> T {
        self.nodes
            .iter()
            .zip(self.weights.iter())
            .filter(|(_, &w)| w > 0.0)
            .fold(T::zero(), |acc, (&x, &w)| acc + T::lit(w) * f(T::lit(x)))
    }
}

/// Cached rule of the given order.
pub fn gauss_hermite(order: usize) -> Arc<GaussHermite> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().unwrap().get(&order) {
        return rule.clone();
    }
    let rule = Arc::new(GaussHermite::new(order));
    cache.lock().unwrap().insert(order, rule.clone());
    rule
}

/// Result of an order-doubling Gauss–Hermite evaluation.
#[derive(Debug, Clone, Copy)]
pub struct HermiteEstimate<T> {
    pub value: T,
    pub order: usize,
    pub last_change: T,
}

pub const HERMITE_START_ORDER: usize = 64;
pub const HERMITE_MAX_ORDER: usize = 4096;

/// Doubles the Gauss–Hermite order from 64 until two successive values differ
/// by less than `tol·max(1, |value|)`.
pub fn expect_normal_adaptive<T: Scalar>(f: impl Fn(T) -> T, tol: T) -> HermiteEstimate<T> {
    let mut order = HERMITE_START_ORDER;
    let mut prev = gauss_hermite(order).expect(&f);
    loop {
        let next_order = order * 2;
        let next = gauss_hermite(next_order).expect(&f);
        let change = (next - prev).abs();
        if change <= tol * next.abs().max(T::one()) || next_order >= HERMITE_MAX_ORDER {
            return HermiteEstimate {
                value: next,
                order: next_order,
                last_change: change,
            };
        }
        prev = next;
        order = next_order;
    }
}

/// Implicit QL iteration on a symmetric tridiagonal matrix. On exit `diag`
/// holds the eigenvalues and `first` the first row of the eigenvector matrix
/// (when it starts as e₀). `sub[i]` couples rows i and i+1.
fn tridiagonal_ql(diag: &mut [f64], sub: &mut [f64], first: &mut [f64]) {
    let n = diag.len();
    for l in 0..n {
        let mut iterations = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if sub[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iterations += 1;
            assert!(iterations < 200, "tridiagonal QL failed to converge");
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * sub[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + sub[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0f64, 1.0f64, 0.0f64);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * sub[i];
                let b = c * sub[i];
                r = f.hypot(g);
                sub[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    sub[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
                let z = first[i + 1];
                first[i + 1] = s * first[i] + c * z;
                first[i] = c * first[i] - s * z;
            }
            if deflated {
                continue;
            }
            diag[l] -= p;
            sub[l] = g;
            sub[m] = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hermite_moments() {
        let rule = GaussHermite::new(20);
        assert_relative_eq!(rule.expect(|_x: f64| 1.0), 1.0, epsilon = 1e-13);
        assert_relative_eq!(rule.expect(|x: f64| x * x), 1.0, epsilon = 1e-12);
        assert_relative_eq!(rule.expect(|x: f64| x.powi(4)), 3.0, epsilon = 1e-11);
        assert_relative_eq!(rule.expect(|x: f64| x.powi(6)), 15.0, epsilon = 1e-10);
        assert!(rule.expect(|x: f64| x.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn large_hermite_rule_is_normalized() {
        let rule = GaussHermite::new(1024);
        let mass: f64 = rule.weights.iter().sum();
        assert_relative_eq!(mass, 1.0, epsilon = 1e-12);
        assert_relative_eq!(
            rule.expect(|x: f64| (0.3 * x).cos()),
            (-0.045f64).exp(),
            epsilon = 1e-13
        );
    }

    #[test]
    fn kronrod_integrates_smooth_and_peaked() {
        let v = integrate(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-14, 1e-13);
        assert_relative_eq!(v, 2.0, epsilon = 1e-12);
        let peaked = integrate(|x: f64| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-14, 1e-12);
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert_relative_eq!(peaked, exact, max_relative = 1e-10);
    }

    #[test]
    fn adaptive_hermite_converges() {
        let est = expect_normal_adaptive(|x: f64| (x * x).exp().recip(), 1e-12);
        // E[exp(-τ²)] = 1/√3
        assert_relative_eq!(est.value, 3f64.sqrt().recip(), epsilon = 1e-12);
        assert!(est.order >= 128);
    }
}
