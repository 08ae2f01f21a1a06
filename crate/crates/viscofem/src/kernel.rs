//! Memory kernels: validation, moments, slab weights, history evaluation and
//! the tail factors used by the estimators.
//!
//! All double integrals are reduced to one-dimensional moments of the kernel
//! through the substitution `r = t - s`, so the kernel is never sampled at
//! `r = 0` and weakly singular kernels are handled exactly.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;
use statrs::function::gamma::{gamma, gamma_li};

use crate::error::{Error, Result};

/// Relative tolerance targeted by kernel quadrature.
pub const QUAD_REL_TOL: f64 = 1e-10;
/// Absolute floor for kernel quadrature.
pub const QUAD_ABS_TOL: f64 = 1e-14;

/// One exponential term `gamma * exp(-lambda t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PronyTerm {
    pub gamma: f64,
    pub lambda: f64,
}

/// Kernel families.
#[derive(Clone, Debug, PartialEq)]
pub enum KernelSpec {
    Zero,
    Prony(Vec<PronyTerm>),
    /// `c t^(rho-1) exp(-eta t)`.
    PowerLaw { c: f64, rho: f64, eta: f64 },
}

/// A validated kernel with its cached L1 mass.
#[derive(Clone, Debug)]
pub struct Kernel {
    spec: KernelSpec,
    kappa: f64,
}

/// Weight factors of the global estimate at a time `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailFactors {
    /// `(∫_t^T K(s-t) ds)^(1/2)`
    pub k_nt: f64,
    /// `(∫_{t ∨ t_{j-1}}^{t_j} K(s-t) ds)^(1/2)`
    pub k_nj: f64,
    /// `(∫_t^T K(s-t)^2 ds)^(1/2)`, when requested.
    pub k_nt_l2: Option<f64>,
}

/// Affine function on an interval given by its endpoint values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine {
    pub lo: f64,
    pub hi: f64,
    pub at_lo: f64,
    pub at_hi: f64,
}

impl Affine {
    pub fn new(interval: (f64, f64), at_lo: f64, at_hi: f64) -> Self {
        Affine { lo: interval.0, hi: interval.1, at_lo, at_hi }
    }

    pub fn constant(interval: (f64, f64), value: f64) -> Self {
        Self::new(interval, value, value)
    }

    /// Nodal shape `q` (0 = left, 1 = right) of the interval.
    pub fn shape(interval: (f64, f64), q: usize) -> Self {
        if q == 0 {
            Self::new(interval, 1.0, 0.0)
        } else {
            Self::new(interval, 0.0, 1.0)
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let len = self.hi - self.lo;
        if len <= 0.0 {
            return self.at_lo;
        }
        let x = (t - self.lo) / len;
        self.at_lo + (self.at_hi - self.at_lo) * x
    }
}

fn gauss20() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(NonZeroUsize::new(20).unwrap()))
}

fn factorial(m: u32) -> f64 {
    (1..=m).map(|i| i as f64).product()
}

fn binomial(m: u32, i: u32) -> f64 {
    factorial(m) / (factorial(i) * factorial(m - i))
}

/// `∫_0^len exp(-lambda x) x^m dx`, stable for all `lambda * len`.
pub fn exp_moment(lambda: f64, len: f64, m: u32) -> f64 {
    if len <= 0.0 {
        return 0.0;
    }
    let x = lambda * len;
    if x < 2.0 {
        // alternating series, terms bounded by e^2
        let mut term = 1.0;
        let mut sum = 1.0 / (m as f64 + 1.0);
        let mut i = 0u32;
        loop {
            i += 1;
            term *= -x / i as f64;
            let add = term / (m as f64 + 1.0 + i as f64);
            sum += add;
            if add.abs() <= 1e-18 * sum.abs() || i > 200 {
                break;
            }
        }
        len.powi(m as i32 + 1) * sum
    } else {
        let mut partial = 0.0;
        let mut term = 1.0;
        for i in 0..=m {
            if i > 0 {
                term *= x / i as f64;
            }
            partial += term;
        }
        factorial(m) / lambda.powi(m as i32 + 1) * (1.0 - (-x).exp() * partial)
    }
}

impl KernelSpec {
    /// Pointwise value; `+inf` at `t = 0` for singular power laws.
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            KernelSpec::Zero => 0.0,
            KernelSpec::Prony(terms) => terms.iter().map(|p| p.gamma * (-p.lambda * t).exp()).sum(),
            KernelSpec::PowerLaw { c, rho, eta } => {
                if t <= 0.0 {
                    if *rho < 1.0 {
                        f64::INFINITY
                    } else {
                        *c
                    }
                } else {
                    c * t.powf(rho - 1.0) * (-eta * t).exp()
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            KernelSpec::Zero => true,
            KernelSpec::Prony(terms) => terms.is_empty(),
            KernelSpec::PowerLaw { .. } => false,
        }
    }

    /// `∫_0^x K(r) r^m dr`.
    pub fn origin_moment(&self, x: f64, m: u32) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self {
            KernelSpec::Zero => 0.0,
            KernelSpec::Prony(terms) => terms.iter().map(|p| p.gamma * exp_moment(p.lambda, x, m)).sum(),
            KernelSpec::PowerLaw { c, rho, eta } => {
                let a = rho + m as f64;
                if *eta == 0.0 {
                    c * x.powf(a) / a
                } else {
                    c * eta.powf(-a) * gamma_li(a, eta * x)
                }
            }
        }
    }

    /// `∫_{r0}^{r1} K(r) (r - r0)^m dr` for `0 <= r0 <= r1`, `m <= 3`.
    pub fn shifted_moment(&self, r0: f64, r1: f64, m: u32) -> f64 {
        let len = r1 - r0;
        if len <= 0.0 {
            return 0.0;
        }
        match self {
            KernelSpec::Zero => 0.0,
            KernelSpec::Prony(terms) => terms
                .iter()
                .map(|p| p.gamma * (-p.lambda * r0).exp() * exp_moment(p.lambda, len, m))
                .sum(),
            KernelSpec::PowerLaw { .. } => {
                if r0 <= 0.0 {
                    self.origin_moment(r1, m)
                } else if r0 < 2.0 * len {
                    (0..=m)
                        .map(|i| {
                            binomial(m, i)
                                * (-r0).powi((m - i) as i32)
                                * (self.origin_moment(r1, i) - self.origin_moment(r0, i))
                        })
                        .sum()
                } else {
                    gauss20().integrate(r0, r1, |r| self.eval(r) * (r - r0).powi(m as i32))
                }
            }
        }
    }

    /// `∫_{r0}^{r1} K(r) dr`.
    pub fn mass(&self, r0: f64, r1: f64) -> f64 {
        self.shifted_moment(r0.max(0.0), r1, 0)
    }

    /// The kernel `K^2` in the same family.
    pub fn squared(&self) -> Result<KernelSpec> {
        match self {
            KernelSpec::Zero => Ok(KernelSpec::Zero),
            KernelSpec::Prony(terms) => {
                let mut out = Vec::with_capacity(terms.len() * terms.len());
                for a in terms {
                    for b in terms {
                        out.push(PronyTerm { gamma: a.gamma * b.gamma, lambda: a.lambda + b.lambda });
                    }
                }
                Ok(KernelSpec::Prony(out))
            }
            KernelSpec::PowerLaw { c, rho, eta } => {
                if *rho <= 0.5 {
                    Err(Error::KernelNotSquareIntegrable { rho: *rho })
                } else {
                    Ok(KernelSpec::PowerLaw { c: c * c, rho: 2.0 * rho - 1.0, eta: 2.0 * eta })
                }
            }
        }
    }

    /// `∫_{t∈I} ∫_{s∈J, s<t} K(t-s) p(t) q(s) ds dt` with affine `p` on `I`
    /// and affine `q` on `J`.
    pub fn double_moment_lower(&self, p: &Affine, q: &Affine) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let (a, b) = (p.lo, p.hi);
        let (c, d) = (q.lo, q.hi);
        let rmin = (a - d).max(0.0);
        let rmax = b - c;
        if rmax <= rmin || b <= a || d <= c {
            return 0.0;
        }
        let mut cuts = vec![rmin, rmax];
        for r in [a - c, b - d] {
            if r > rmin && r < rmax {
                cuts.push(r);
            }
        }
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let scale = rmax.abs().max(b - a).max(d - c);
        // Φ(r) = ∫ p(t) q(t - r) dt over the admissible t, cubic on each piece
        let phi = |r: f64| {
            let lo = a.max(c + r);
            let hi = b.min(d + r);
            if hi <= lo {
                return 0.0;
            }
            let f = |t: f64| p.eval(t) * q.eval(t - r);
            let mid = 0.5 * (lo + hi);
            (hi - lo) / 6.0 * (f(lo) + 4.0 * f(mid) + f(hi))
        };
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let (r0, r1) = (w[0], w[1]);
            let width = r1 - r0;
            if width <= 1e-15 * scale {
                continue;
            }
            let samples: [f64; 4] = std::array::from_fn(|i| phi(r0 + width * CUBIC_NODES[i]));
            let coeffs = cubic_coefficients(&samples);
            for (m, cm) in coeffs.iter().enumerate() {
                if *cm != 0.0 {
                    total += cm * self.shifted_moment(r0, r1, m as u32) / width.powi(m as i32);
                }
            }
        }
        total
    }

    /// `∫_{t∈I} ∫_{s∈J, s>t} K(s-t) p(t) q(s) ds dt`.
    pub fn double_moment_upper(&self, p: &Affine, q: &Affine) -> f64 {
        self.double_moment_lower(q, p)
    }

    /// `(w_left, w_right)` with `w_q = ∫_{t∈I} ∫_{s∈J, s<t} K(t-s) λ_q(s) ds dt`
    /// for the nodal shapes `λ_q` of `slab_j`.
    pub fn slab_weights(&self, slab_n: (f64, f64), slab_j: (f64, f64)) -> (f64, f64) {
        let one = Affine::constant(slab_n, 1.0);
        (
            self.double_moment_lower(&one, &Affine::shape(slab_j, 0)),
            self.double_moment_lower(&one, &Affine::shape(slab_j, 1)),
        )
    }

    /// `(w_left, w_right)` with `w_q = ∫_{J ∩ [0,t]} K(t-s) λ_q(s) ds`.
    pub fn history_weights(&self, t: f64, slab_j: (f64, f64)) -> (f64, f64) {
        let (c, d) = slab_j;
        if t <= c || self.is_zero() {
            return (0.0, 0.0);
        }
        let top = d.min(t);
        let r0 = t - top;
        let r1 = t - c;
        let m0 = self.shifted_moment(r0, r1, 0);
        let m1 = self.shifted_moment(r0, r1, 1);
        let len = d - c;
        (((d - top) * m0 + m1) / len, ((top - c) * m0 - m1) / len)
    }

    /// `∫_{t ∨ a}^{b} K(s-t) ds`.
    pub fn forward_mass(&self, t: f64, a: f64, b: f64) -> f64 {
        if b <= t {
            return 0.0;
        }
        self.mass((a - t).max(0.0), b - t)
    }
}

/// Equispaced sampling nodes for cubic reconstruction.
const CUBIC_NODES: [f64; 4] = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];

/// Monomial coefficients of the cubic through `(CUBIC_NODES[i], y[i])`.
fn cubic_coefficients(y: &[f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for i in 0..4 {
        // expand the Lagrange basis polynomial L_i
        let mut poly = [1.0, 0.0, 0.0, 0.0];
        let mut denom = 1.0;
        let mut deg = 0;
        for j in 0..4 {
            if j == i {
                continue;
            }
            let xj = CUBIC_NODES[j];
            let mut next = [0.0; 4];
            for k in 0..=deg {
                next[k + 1] += poly[k];
                next[k] -= xj * poly[k];
            }
            poly = next;
            deg += 1;
            denom *= CUBIC_NODES[i] - xj;
        }
        for k in 0..4 {
            out[k] += y[i] * poly[k] / denom;
        }
    }
    out
}

/// Checks structure and returns the L1 mass `kappa`.
///
/// For `PowerLaw` with `eta = 0` the mass is infinite; it is accepted on a
/// finite `horizon` when `c T^rho / rho < 1` and that finite-horizon mass is
/// returned.
pub fn validate_kernel(spec: &KernelSpec, horizon: f64) -> Result<f64> {
    let positive = |name: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::NonPositiveParameter(format!("{name} = {v}")))
        }
    };
    let kappa = match spec {
        KernelSpec::Zero => 0.0,
        KernelSpec::Prony(terms) => {
            let mut k = 0.0;
            for t in terms {
                positive("gamma", t.gamma)?;
                positive("lambda", t.lambda)?;
                k += t.gamma / t.lambda;
            }
            k
        }
        KernelSpec::PowerLaw { c, rho, eta } => {
            positive("c", *c)?;
            positive("rho", *rho)?;
            if *rho > 1.0 {
                return Err(Error::NonPositiveParameter(format!("rho = {rho} must lie in (0, 1]")));
            }
            if !(*eta >= 0.0 && eta.is_finite()) {
                return Err(Error::NonPositiveParameter(format!("eta = {eta}")));
            }
            if *eta > 0.0 {
                c * gamma(*rho) / eta.powf(*rho)
            } else if horizon.is_finite() && horizon > 0.0 {
                c * horizon.powf(*rho) / rho
            } else {
                f64::INFINITY
            }
        }
    };
    if kappa >= 1.0 {
        return Err(Error::NonContractiveKernel { kappa });
    }
    Ok(kappa)
}

impl Kernel {
    /// Validates `spec` on `[0, horizon]` (use `f64::INFINITY` for none).
    pub fn new(spec: KernelSpec, horizon: f64) -> Result<Self> {
        let kappa = validate_kernel(&spec, horizon)?;
        Ok(Kernel { spec, kappa })
    }

    pub fn zero() -> Self {
        Kernel { spec: KernelSpec::Zero, kappa: 0.0 }
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Prony terms when the recurrence applies.
    pub fn prony_terms(&self) -> Option<&[PronyTerm]> {
        match &self.spec {
            KernelSpec::Prony(t) => Some(t),
            _ => None,
        }
    }

    pub fn tail_factors(&self, t: f64, slab_j: (f64, f64), horizon: f64, want_l2: bool) -> Result<TailFactors> {
        let k_nt = self.spec.forward_mass(t, t, horizon).max(0.0).sqrt();
        let k_nj = self.spec.forward_mass(t, slab_j.0, slab_j.1).max(0.0).sqrt();
        let k_nt_l2 = if want_l2 {
            let sq = self.spec.squared()?;
            Some(sq.forward_mass(t, t, horizon).max(0.0).sqrt())
        } else {
            None
        };
        Ok(TailFactors { k_nt, k_nj, k_nt_l2 })
    }

    /// `(∫_{t ∨ a}^{b} K(s-t)^2 ds)^(1/2)`.
    pub fn l2_tail(&self, t: f64, slab: (f64, f64)) -> Result<f64> {
        let sq = self.spec.squared()?;
        Ok(sq.forward_mass(t, slab.0, slab.1).max(0.0).sqrt())
    }
}

impl std::ops::Deref for Kernel {
    type Target = KernelSpec;
    fn deref(&self) -> &KernelSpec {
        &self.spec
    }
}

/// Piecewise-linear scalar path on a partition.
#[derive(Clone, Debug)]
pub struct PiecewiseLinearPath<'a> {
    pub nodes: &'a [f64],
    pub values: &'a [f64],
}

/// `∫_0^t K(t-s) y(s) ds` and its per-slab pieces `(K*y)^j(t)`.
pub fn pointwise_history(kernel: &KernelSpec, t: f64, path: &PiecewiseLinearPath) -> (f64, Vec<f64>) {
    let pieces: Vec<f64> = path
        .nodes
        .windows(2)
        .zip(path.values.windows(2))
        .map(|(slab, y)| {
            let (wl, wr) = kernel.history_weights(t, (slab[0], slab[1]));
            wl * y[0] + wr * y[1]
        })
        .collect();
    (pieces.iter().sum(), pieces)
}

/// Per-term accumulators `H_i(t) = ∫_0^t exp(-λ_i (t-s)) y(s) ds`.
#[derive(Clone, Debug)]
pub struct PronyHistoryState {
    terms: Vec<PronyTerm>,
    pub h: Vec<Vec<f64>>,
    pub last: f64,
}

impl PronyHistoryState {
    pub fn new(terms: &[PronyTerm], len: usize) -> Self {
        PronyHistoryState { terms: terms.to_vec(), h: vec![vec![0.0; len]; terms.len()], last: 0.0 }
    }

    /// Advances across `slab` with linear `y` between `y_start` and `y_end`.
    pub fn advance(&mut self, slab: (f64, f64), y_start: &[f64], y_end: &[f64]) -> Result<()> {
        let (a, b) = slab;
        if (a - self.last).abs() > 1e-12 * b.abs().max(1.0) {
            return Err(Error::NonContiguousSlab { start: a, end: b, last: self.last });
        }
        let k = b - a;
        for (term, h) in self.terms.iter().zip(self.h.iter_mut()) {
            let decay = (-term.lambda * k).exp();
            let m0 = exp_moment(term.lambda, k, 0);
            let m1 = exp_moment(term.lambda, k, 1);
            let wl = m1 / k;
            let wr = m0 - m1 / k;
            for ((hv, ya), yb) in h.iter_mut().zip(y_start).zip(y_end) {
                *hv = decay * *hv + wl * ya + wr * yb;
            }
        }
        self.last = b;
        Ok(())
    }

    /// `Σ_i γ_i H_i`.
    pub fn value(&self) -> Vec<f64> {
        let len = self.h.first().map_or(0, |v| v.len());
        let mut out = vec![0.0; len];
        for (term, h) in self.terms.iter().zip(&self.h) {
            for (o, v) in out.iter_mut().zip(h) {
                *o += term.gamma * v;
            }
        }
        out
    }
}

/// Free-function form of [`Kernel::tail_factors`].
pub fn tail_factors(kernel: &Kernel, t: f64, slab_j: (f64, f64), horizon: f64, want_l2: bool) -> Result<TailFactors> {
    kernel.tail_factors(t, slab_j, horizon, want_l2)
}

/// Free-function form of [`KernelSpec::slab_weights`].
pub fn slab_weights(kernel: &KernelSpec, slab_n: (f64, f64), slab_j: (f64, f64)) -> (f64, f64) {
    kernel.slab_weights(slab_n, slab_j)
}

/// Advances `state` across `new_slab`.
pub fn prony_history_advance(
    mut state: PronyHistoryState,
    new_slab: (f64, f64),
    y_start: &[f64],
    y_end: &[f64],
) -> Result<PronyHistoryState> {
    state.advance(new_slab, y_start, y_end)?;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn constant(c: f64) -> KernelSpec {
        KernelSpec::PowerLaw { c, rho: 1.0, eta: 0.0 }
    }

    #[test]
    fn constant_kernel_slab_weights() {
        let k = constant(0.3);
        let (wl, wr) = k.slab_weights((0.0, 1.0), (0.0, 1.0));
        assert_relative_eq!(wl, 0.1, epsilon = 1e-14);
        assert_relative_eq!(wr, 0.05, epsilon = 1e-14);
        let (wl, wr) = k.slab_weights((1.0, 2.0), (0.0, 1.0));
        assert_relative_eq!(wl, 0.15, epsilon = 1e-14);
        assert_relative_eq!(wr, 0.15, epsilon = 1e-14);
    }

    #[test]
    fn exp_moment_branches_agree() {
        // both sides of the series switch
        for m in 0..4 {
            let below = exp_moment(1.0, 1.999999, m);
            let above = exp_moment(1.0, 2.000001, m);
            assert_relative_eq!(below, above, max_relative = 1e-5);
        }
        assert_relative_eq!(exp_moment(1.0, 1.0, 0), 1.0 - (-1.0f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn cubic_reconstruction_is_exact() {
        let f = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x + 3.0 * x * x * x;
        let y = CUBIC_NODES.map(f);
        let c = cubic_coefficients(&y);
        for (got, want) in c.iter().zip([1.0, -2.0, 0.5, 3.0]) {
            assert_relative_eq!(*got, want, epsilon = 1e-13);
        }
    }

    #[test]
    fn history_weights_constant_kernel() {
        let k = constant(2.0);
        let (wl, wr) = k.history_weights(1.0, (0.0, 1.0));
        assert_relative_eq!(wl, 1.0, epsilon = 1e-14);
        assert_relative_eq!(wr, 1.0, epsilon = 1e-14);
        // partial slab: ∫_0^0.5 2 λ_right(s) ds = 0.25
        let (_, wr) = k.history_weights(0.5, (0.0, 1.0));
        assert_relative_eq!(wr, 0.25, epsilon = 1e-14);
    }

    #[test]
    fn squared_power_law_rejects_rough_kernels() {
        let k = KernelSpec::PowerLaw { c: 0.1, rho: 0.4, eta: 1.0 };
        assert!(matches!(k.squared(), Err(Error::KernelNotSquareIntegrable { .. })));
    }
}
