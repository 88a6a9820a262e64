//! Convex surrogate of the UL rate.
//!
//! With `Q = log2 P` and the lower bound `log2(1+γ) ≥ μ1 log2 γ + μ2`, tight
//! at `γ̄`, each rate is bounded below by a concave function `R̄(Q)` that
//! touches the true rate at the linearization point. For fixed `(λ, τ)` the
//! parametrized objective `Σ λ_i (b_i − τ_i R̄_i(Q))` is then convex.

use nalgebra::{DMatrix, DVector};

use super::GroupProblem;

/// Coefficients of the bound `log2(1+γ) ≥ μ1 log2 γ + μ2`, tight at `sinr`.
pub fn bound_coefficients(sinr: f64) -> (f64, f64) {
    let mu1 = sinr / (1.0 + sinr);
    let mu2 = (1.0 + sinr).log2() - mu1 * sinr.log2();
    (mu1, mu2)
}

/// Smooth function minimized by [`minimize_box`]. `value` returns `+∞`
/// outside its domain.
pub trait Objective {
    fn value(&self, q: &[f64]) -> f64;
    fn gradient(&self, q: &[f64]) -> Vec<f64>;
    fn hessian(&self, q: &[f64]) -> DMatrix<f64>;
    /// Typical gradient magnitude, for the stopping test.
    fn gradient_scale(&self) -> f64;
    /// Whether to stop once the Newton decrement reaches rounding level.
    /// Suits objectives so flat that their minimizer is resolved only in
    /// value, not in position.
    fn stop_on_decrement(&self) -> bool {
        false
    }
}

/// Lower-bounded rates of one group for fixed bound coefficients.
#[derive(Debug, Clone)]
pub struct BoundedRates<'a> {
    group: &'a GroupProblem,
    pub mu1: Vec<f64>,
    pub mu2: Vec<f64>,
}

/// `R̄` with its gradients and Hessians at one point.
struct RateParts {
    rate: Vec<f64>,
    /// `grad[i][l] = ∂R̄_i/∂Q_l`.
    grad: Vec<DVector<f64>>,
    hess: Vec<DMatrix<f64>>,
}

impl<'a> BoundedRates<'a> {
    pub fn new(group: &'a GroupProblem, mu1: Vec<f64>, mu2: Vec<f64>) -> Self {
        Self { group, mu1, mu2 }
    }

    /// Coefficients tight at the SINRs produced by `power`.
    pub fn at(group: &'a GroupProblem, power: &[f64]) -> Self {
        let (mu1, mu2) = group
            .sinr(power)
            .iter()
            .map(|&g| bound_coefficients(g))
            .unzip();
        Self::new(group, mu1, mu2)
    }

    pub fn group(&self) -> &'a GroupProblem {
        self.group
    }

    fn len(&self) -> usize {
        self.mu1.len()
    }

    /// `S_i(Q)`: interference plus noise at the receiver of `i`.
    fn interference_plus_noise(&self, q: &[f64]) -> Vec<f64> {
        let g = self.group;
        (0..self.len())
            .map(|i| {
                (0..self.len())
                    .filter(|&j| j != i)
                    .map(|j| q[j].exp2() * g.gain[(j, i)])
                    .sum::<f64>()
                    + g.noise
            })
            .collect()
    }

    pub fn rates(&self, q: &[f64]) -> Vec<f64> {
        let s = self.interference_plus_noise(q);
        let g = self.group;
        (0..self.len())
            .map(|i| {
                g.bandwidth
                    * (self.mu1[i] * (q[i] + g.gain[(i, i)].log2() - s[i].log2()) + self.mu2[i])
            })
            .collect()
    }

    /// `grad[i][l] = ∂R̄_i/∂Q_l`.
    pub fn gradients(&self, q: &[f64]) -> Vec<DVector<f64>> {
        self.parts(q).grad
    }

    /// `∂R̄_i/∂Q_l = B μ1_i (δ_il − a_li/S_i)` and
    /// `∂²R̄_i = −B μ1_i ln2 (diag(a_i)/S_i − a_i a_iᵀ/S_i²)` with
    /// `a_li = 2^{Q_l} g_li`, `a_ii = 0`.
    fn parts(&self, q: &[f64]) -> RateParts {
        let n = self.len();
        let s = self.interference_plus_noise(q);
        let rate = self.rates(q);
        let mut grad = Vec::with_capacity(n);
        let mut hess = Vec::with_capacity(n);
        for i in 0..n {
            let c = self.group.bandwidth * self.mu1[i];
            let a = DVector::from_fn(n, |l, _| {
                if l == i {
                    0.0
                } else {
                    q[l].exp2() * self.group.gain[(l, i)]
                }
            });
            let mut gi = -(c / s[i]) * &a;
            gi[i] += c;
            let f = c * std::f64::consts::LN_2;
            let mut hi = (f / (s[i] * s[i])) * &a * a.transpose();
            for l in 0..n {
                hi[(l, l)] -= f * a[l] / s[i];
            }
            grad.push(gi);
            hess.push(hi);
        }
        RateParts { rate, grad, hess }
    }
}

/// `Σ λ_i (b_i − τ_i R̄_i(Q))`, convex in `Q`.
#[derive(Debug, Clone)]
pub struct Surrogate<'a> {
    rates: BoundedRates<'a>,
    /// `λ_i τ_i`.
    weight: Vec<f64>,
    /// `Σ λ_i b_i`.
    constant: f64,
}

impl<'a> Surrogate<'a> {
    pub fn new(rates: BoundedRates<'a>, lambda: &[f64], tau: &[f64]) -> Self {
        let weight = lambda.iter().zip(tau).map(|(l, t)| l * t).collect();
        let constant = lambda
            .iter()
            .zip(&rates.group.bits)
            .map(|(l, b)| l * b)
            .sum();
        Self {
            rates,
            weight,
            constant,
        }
    }

    pub fn rates(&self, q: &[f64]) -> Vec<f64> {
        self.rates.rates(q)
    }
}

impl Objective for Surrogate<'_> {
    fn value(&self, q: &[f64]) -> f64 {
        let r = self.rates.rates(q);
        self.constant - self.weight.iter().zip(&r).map(|(w, r)| w * r).sum::<f64>()
    }

    fn gradient(&self, q: &[f64]) -> Vec<f64> {
        let p = self.rates.parts(q);
        let n = self.weight.len();
        (0..n)
            .map(|l| -(0..n).map(|i| self.weight[i] * p.grad[i][l]).sum::<f64>())
            .collect()
    }

    fn hessian(&self, q: &[f64]) -> DMatrix<f64> {
        let p = self.rates.parts(q);
        let n = self.weight.len();
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            h -= self.weight[i] * &p.hess[i];
        }
        h
    }

    fn gradient_scale(&self) -> f64 {
        self.constant.abs()
    }

    fn stop_on_decrement(&self) -> bool {
        true
    }
}

/// `Σ b_i / R̄_i(Q)`, convex where every `R̄_i > 0`.
#[derive(Debug, Clone)]
pub struct LatencySurrogate<'a> {
    rates: BoundedRates<'a>,
    scale: f64,
}

impl<'a> LatencySurrogate<'a> {
    /// Surrogate tight at `q`.
    pub fn at(group: &'a GroupProblem, q: &[f64]) -> Self {
        let p: Vec<f64> = q.iter().map(|x| x.exp2()).collect();
        let rates = BoundedRates::at(group, &p);
        let scale = group.latency_sum(&p);
        Self { rates, scale }
    }

    pub fn rates(&self) -> &BoundedRates<'a> {
        &self.rates
    }
}

/// Value, gradient and Hessian of `Σ b_i / r_i` from the parts of `r`.
fn ratio_sum(bits: &[f64], parts: &RateParts) -> (f64, DVector<f64>, DMatrix<f64>) {
    let n = bits.len();
    let mut v = 0.0;
    let mut g = DVector::zeros(n);
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        let r = parts.rate[i];
        if !(r > 0.0) {
            return (f64::INFINITY, g, h);
        }
        v += bits[i] / r;
        g -= (bits[i] / (r * r)) * &parts.grad[i];
        h += (2.0 * bits[i] / (r * r * r)) * &parts.grad[i] * parts.grad[i].transpose();
        h -= (bits[i] / (r * r)) * &parts.hess[i];
    }
    (v, g, h)
}

impl Objective for LatencySurrogate<'_> {
    fn value(&self, q: &[f64]) -> f64 {
        let r = self.rates.rates(q);
        if r.iter().any(|r| !(*r > 0.0)) {
            return f64::INFINITY;
        }
        r.iter()
            .zip(&self.rates.group.bits)
            .map(|(r, b)| b / r)
            .sum()
    }

    fn gradient(&self, q: &[f64]) -> Vec<f64> {
        ratio_sum(&self.rates.group.bits, &self.rates.parts(q))
            .1
            .iter()
            .copied()
            .collect()
    }

    fn hessian(&self, q: &[f64]) -> DMatrix<f64> {
        ratio_sum(&self.rates.group.bits, &self.rates.parts(q)).2
    }

    fn gradient_scale(&self) -> f64 {
        self.scale
    }
}

/// The exact latency sum `Σ b_i / R_i(Q)`. Not convex in general.
#[derive(Debug, Clone)]
pub struct TrueLatency<'a> {
    group: &'a GroupProblem,
    scale: f64,
}

impl<'a> TrueLatency<'a> {
    pub fn new(group: &'a GroupProblem, q_ref: &[f64]) -> Self {
        let p: Vec<f64> = q_ref.iter().map(|x| x.exp2()).collect();
        Self {
            group,
            scale: group.latency_sum(&p),
        }
    }

    /// `R_i = B (log2 T_i − log2 S_i)` with `T_i` the total received power
    /// and `S_i` interference plus noise; both logs are log-sum-exps in `Q`.
    fn parts(&self, q: &[f64]) -> RateParts {
        let g = self.group;
        let n = q.len();
        let mut rate = Vec::with_capacity(n);
        let mut grad = Vec::with_capacity(n);
        let mut hess = Vec::with_capacity(n);
        let lse = |v: &DVector<f64>| {
            let total = v.sum() + g.noise;
            let d = v / total;
            let h = (DMatrix::from_diagonal(&d) - &d * d.transpose()) * std::f64::consts::LN_2;
            (total.log2(), d, h)
        };
        for i in 0..n {
            let t = DVector::from_fn(n, |l, _| q[l].exp2() * g.gain[(l, i)]);
            let mut a = t.clone();
            a[i] = 0.0;
            let (lt, dt, ht) = lse(&t);
            let (ls, ds, hs) = lse(&a);
            rate.push(g.bandwidth * (lt - ls));
            grad.push(g.bandwidth * (dt - ds));
            hess.push(g.bandwidth * (ht - hs));
        }
        RateParts { rate, grad, hess }
    }
}

impl Objective for TrueLatency<'_> {
    fn value(&self, q: &[f64]) -> f64 {
        let p: Vec<f64> = q.iter().map(|x| x.exp2()).collect();
        self.group.latency_sum(&p)
    }

    fn gradient(&self, q: &[f64]) -> Vec<f64> {
        ratio_sum(&self.group.bits, &self.parts(q))
            .1
            .iter()
            .copied()
            .collect()
    }

    fn hessian(&self, q: &[f64]) -> DMatrix<f64> {
        ratio_sum(&self.group.bits, &self.parts(q)).2
    }

    fn gradient_scale(&self) -> f64 {
        self.scale
    }
}

/// Minimizes `f` over the box `[lo, hi]` by projected Newton with Armijo
/// backtracking along the projection arc. `q0` must lie in `f`'s domain.
pub fn minimize_box<F: Objective>(
    f: &F,
    q0: &[f64],
    lo: &[f64],
    hi: &[f64],
    max_iter: usize,
) -> Vec<f64> {
    let n = q0.len();
    let project = |q: &mut [f64]| {
        for i in 0..n {
            q[i] = q[i].clamp(lo[i], hi[i]);
        }
    };
    let mut q = q0.to_vec();
    project(&mut q);
    let mut fq = f.value(&q);
    let g_scale = f.gradient_scale().max(f64::MIN_POSITIVE);

    for _ in 0..max_iter {
        let g = f.gradient(&q);
        let stationarity = (0..n)
            .map(|i| (q[i] - (q[i] - g[i]).clamp(lo[i], hi[i])).abs())
            .fold(0.0, f64::max);
        if stationarity <= 1e-14 * g_scale {
            break;
        }
        let band = stationarity.min(1e-6);
        let free: Vec<usize> = (0..n)
            .filter(|&i| {
                !((q[i] <= lo[i] + band && g[i] > 0.0) || (q[i] >= hi[i] - band && g[i] < 0.0))
            })
            .collect();

        let mut d: Vec<f64> = g.iter().map(|x| -x).collect();
        if !free.is_empty() {
            let h = f.hessian(&q);
            let m = free.len();
            let hf = DMatrix::from_fn(m, m, |a, b| h[(free[a], free[b])]);
            let gf = DVector::from_fn(m, |a, _| g[free[a]]);
            let mean_diag = hf.diagonal().iter().map(|x| x.abs()).sum::<f64>() / m as f64;
            let mut delta = if mean_diag > 0.0 {
                1e-12 * mean_diag
            } else {
                1e-8 * g_scale
            };
            let step = loop {
                let reg = &hf + DMatrix::identity(m, m) * delta;
                if let Some(ch) = reg.cholesky() {
                    break ch.solve(&(-&gf));
                }
                delta *= 100.0;
            };
            for (a, &i) in free.iter().enumerate() {
                d[i] = step[a];
            }
            // Newton decrement: the predicted decrease is already at
            // rounding level, so the remaining step only follows noise.
            let decrement = -gf.dot(&step);
            if f.stop_on_decrement() && decrement <= 8.0 * f64::EPSILON * fq.abs().max(g_scale) {
                break;
            }
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial: Vec<f64> = (0..n).map(|i| q[i] + alpha * d[i]).collect();
            project(&mut trial);
            let decrease: f64 = (0..n).map(|i| g[i] * (trial[i] - q[i])).sum();
            let ft = f.value(&trial);
            // Rounding-level slack lets the final Newton steps land.
            if ft <= fq + 1e-4 * decrease + 4.0 * f64::EPSILON * fq.abs().max(1.0) {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, ft)) = accepted else {
            break;
        };
        let moved = (0..n).map(|i| (trial[i] - q[i]).abs()).fold(0.0, f64::max);
        q = trial;
        fq = ft;
        if moved <= 1e-15 * (1.0 + q.iter().fold(0.0_f64, |a, x| a.max(x.abs()))) {
            break;
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> GroupProblem {
        GroupProblem::new(
            vec![4e6, 3e6],
            &[vec![1e-10, 3e-12], vec![2e-12, 5e-11]],
            8e-16,
            2e5,
            vec![2e-7, 2e-7],
            vec![0.2, 0.2],
        )
        .unwrap()
    }

    #[test]
    fn bound_is_tight_and_below() {
        for g in [1e-3, 0.5, 1.0, 37.0, 1e5] {
            let (m1, m2) = bound_coefficients(g);
            assert!((m1 * g.log2() + m2 - (1.0 + g).log2()).abs() < 1e-12);
            for x in [g * 0.1, g * 0.9, g * 2.0, g * 50.0] {
                assert!(m1 * x.log2() + m2 <= (1.0 + x).log2() + 1e-12);
            }
        }
        let (m1, m2) = bound_coefficients(1.0);
        assert_eq!((m1, m2), (0.5, 1.0));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let g = pair();
        let s = Surrogate::new(
            BoundedRates::at(&g, &[0.05, 0.1]),
            &[1e-6, 2e-6],
            &[4.0, 3.0],
        );
        let q = [-3.0, -1.5];
        let grad = s.gradient(&q);
        for l in 0..2 {
            let h = 1e-5;
            let mut up = q;
            let mut dn = q;
            up[l] += h;
            dn[l] -= h;
            let fd = (s.value(&up) - s.value(&dn)) / (2.0 * h);
            assert!(
                (fd - grad[l]).abs() <= 1e-6 * grad[l].abs().max(1e-12),
                "{fd} vs {}",
                grad[l]
            );
        }
    }

    #[test]
    fn hessian_matches_gradient_differences_and_is_psd() {
        let g = pair();
        let s = Surrogate::new(
            BoundedRates::at(&g, &[0.05, 0.1]),
            &[1e-6, 2e-6],
            &[4.0, 3.0],
        );
        let q = [-2.0, -4.0];
        let h = s.hessian(&q);
        for l in 0..2 {
            let eps = 1e-5;
            let mut up = q;
            let mut dn = q;
            up[l] += eps;
            dn[l] -= eps;
            let (gu, gd) = (s.gradient(&up), s.gradient(&dn));
            for r in 0..2 {
                let fd = (gu[r] - gd[r]) / (2.0 * eps);
                assert!((fd - h[(r, l)]).abs() <= 1e-6 * h.amax().max(1e-300));
            }
        }
        let eig = h.symmetric_eigenvalues();
        assert!(eig.iter().all(|&e| e >= -1e-12 * h.amax()));
    }

    #[test]
    fn latency_derivatives_match_differences() {
        let g = pair();
        let q = [-2.5, -3.5];
        let sur = LatencySurrogate::at(&g, &[-3.0, -3.0]);
        let exact = TrueLatency::new(&g, &q);
        let objs: [&dyn Objective; 2] = [&sur, &exact];
        for f in objs {
            let grad = f.gradient(&q);
            let h = f.hessian(&q);
            for l in 0..2 {
                let eps = 1e-5;
                let mut up = q;
                let mut dn = q;
                up[l] += eps;
                dn[l] -= eps;
                let fd = (f.value(&up) - f.value(&dn)) / (2.0 * eps);
                assert!(
                    (fd - grad[l]).abs() <= 1e-6 * grad[l].abs().max(1e-9),
                    "{fd} vs {}",
                    grad[l]
                );
                let (gu, gd) = (f.gradient(&up), f.gradient(&dn));
                for r in 0..2 {
                    let fd = (gu[r] - gd[r]) / (2.0 * eps);
                    assert!((fd - h[(r, l)]).abs() <= 1e-5 * h.amax());
                }
            }
        }
    }

    #[test]
    fn surrogate_touches_and_dominates_true_latency() {
        let g = pair();
        let q0 = [-3.0, -2.0];
        let sur = LatencySurrogate::at(&g, &q0);
        let exact = TrueLatency::new(&g, &q0);
        assert!((sur.value(&q0) - exact.value(&q0)).abs() <= 1e-12 * exact.value(&q0));
        let gs = sur.gradient(&q0);
        let ge = exact.gradient(&q0);
        for l in 0..2 {
            assert!((gs[l] - ge[l]).abs() <= 1e-8 * ge[l].abs().max(1.0));
        }
        for q in [[-5.0, -2.0], [-2.3, -6.0], [-10.0, -10.0]] {
            assert!(sur.value(&q) >= exact.value(&q) * (1.0 - 1e-12));
        }
    }
}
