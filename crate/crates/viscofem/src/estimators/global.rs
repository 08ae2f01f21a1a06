//! The weighted global estimate built on `L2` projections, and its dual-free
//! instance for the end-time displacement error.

use std::sync::Arc;

use rayon::prelude::*;

use super::dual_norms::DualNorms;
use super::report::{Estimate, EstimateReport, SlabRow};
use super::residuals::{facet_quadrature, Residuals};
use super::theta::cell_integral;
use crate::assembly::{time_rule, Operators};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::mesh_time::FeSpace;
use crate::primal_solver::SpaceTimeSolution;
use crate::problems::ProblemSpec;

/// Time points per slab for the estimator integrals.
pub(crate) const ESTIMATE_POINTS: usize = 5;

/// Treatment of the memory contribution to the facet term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelMode {
    /// `ζ_{n,N}` with `L1` tails `K_{n,T}`, `K_{n,j}`.
    L1,
    /// `ζ_{n,N}` with the `L2` tail of the kernel.
    L2,
    /// `Σ_j ζ_j (Σ_K h̄_K^3 ‖(K*r_d)^j(t)‖^2)^{1/2}` in place of the `ζ_{n,N}` term.
    Convolved,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlobalParams {
    pub alpha: usize,
    pub beta: usize,
    pub gamma: usize,
    pub mode: KernelMode,
}

impl GlobalParams {
    pub fn validate(&self) -> Result<()> {
        if self.alpha > 2 || !(1..=2).contains(&self.beta) || self.gamma > 1 {
            return Err(Error::Config(format!(
                "alpha in 0..=2, beta in 1..=2, gamma in 0..=1 required, got ({}, {}, {})",
                self.alpha, self.beta, self.gamma
            )));
        }
        Ok(())
    }
}

/// `‖h_0^a (U1(0) - u0)‖ + ‖h_0^b (U2(0) - v0)‖` on `T^0`.
pub(crate) fn initial_term(res: &Residuals, problem: &ProblemSpec, a: i32, b: i32) -> f64 {
    let owners = res.overlay.owners(res.mesh0.id());
    let h0: Vec<f64> = (0..res.mesh0.n_cells()).map(|c| res.mesh0.diameter(c)).collect();
    let (u0, v0) = (problem.load.u0.clone(), problem.load.v0.clone());
    let t1 = res.weighted_cell_norm_sq(&res.u1[0], Some(&|x| u0(x)), &|c| h0[owners[c]].powi(2 * a));
    let t2 = res.weighted_cell_norm_sq(&res.u2[0], Some(&|x| v0(x)), &|c| h0[owners[c]].powi(2 * b));
    t1.sqrt() + t2.sqrt()
}

/// `Σ_K weight(K) ‖r_d(t)‖^2_{∂K}` from precomputed edge moments.
pub(crate) fn edge_sq_at(moments: &[[f64; 3]], s: f64, weight: &dyn Fn(usize) -> f64) -> f64 {
    moments
        .iter()
        .enumerate()
        .map(|(k, m)| weight(k) * ((1.0 - s).powi(2) * m[0] + 2.0 * s * (1.0 - s) * m[1] + s * s * m[2]))
        .sum()
}

/// `‖v - v̄‖^2` on `Ω` for data `v(x, t)` with `v̄` its average over the
/// points `times` of a slab.
fn data_fluctuation_sq(
    res: &Residuals,
    f: &(dyn Fn([f64; 2], f64) -> [f64; 2] + Send + Sync),
    t: f64,
    times: &[(f64, f64)],
    k: f64,
) -> f64 {
    (0..res.overlay.n_cells())
        .map(|c| {
            cell_integral(res, c, &|x, _| {
                let mut bar = [0.0; 2];
                for &(tq, wq) in times {
                    let v = f(x, tq);
                    bar[0] += wq * v[0] / k;
                    bar[1] += wq * v[1] / k;
                }
                let v = f(x, t);
                (v[0] - bar[0]).powi(2) + (v[1] - bar[1]).powi(2)
            })
        })
        .sum()
}

/// `Ā_h` on `T̄^n` applied to overlay fields: returns the union space and the
/// pairs `(b, x)` with `b = (a(v, φ_i))_i` and `x = M̄^{-1} b`.
struct UnionOperator {
    factor: Arc<crate::linalg::Factor>,
    space: Arc<FeSpace>,
    union_id: u64,
}

impl UnionOperator {
    fn new(res: &Residuals, ops: &Operators, n: usize) -> Result<Self> {
        let mesh = res.unions[n - 1].mesh.clone();
        let union_id = mesh.id();
        let space = Arc::new(FeSpace::with_components(mesh, res.ncomp)?);
        Ok(UnionOperator { factor: ops.mass_factor(&space)?, space, union_id })
    }

    fn apply(&self, res: &Residuals, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let f = res.stiffness_apply(v);
        let b = self.space.restrict(&res.overlay.prolong_t(self.union_id, &f, res.ncomp));
        let x = self.factor.solve(&b);
        (b, x)
    }
}

/// `ζ_n(β) = h̄_{min,n}^{β-2}`.
pub fn zeta(h_min: f64, beta: usize) -> f64 {
    if beta == 2 {
        1.0
    } else {
        h_min.powf(beta as f64 - 2.0)
    }
}

/// The global estimate with dual norms from `dual`, or with the stability
/// route (factor 1) when `dual` is `None`.
pub fn global_estimate(
    u: &SpaceTimeSolution,
    problem: &ProblemSpec,
    dual: Option<&DualNorms>,
    params: GlobalParams,
) -> Result<EstimateReport> {
    params.validate()?;
    let res = Residuals::new(u, problem, &[])?;
    global_from_residuals(&res, problem, dual, params, Estimate::Global)
}

/// The end-time displacement bound: `α = 0`, `β = γ = 1`, `L1` tails and the
/// dual norms replaced by the stability constant.
pub fn example1_bound(u: &SpaceTimeSolution, problem: &ProblemSpec) -> Result<EstimateReport> {
    let res = Residuals::new(u, problem, &[])?;
    let params = GlobalParams { alpha: 0, beta: 1, gamma: 1, mode: KernelMode::L1 };
    global_from_residuals(&res, problem, None, params, Estimate::Example1)
}

pub(crate) fn global_from_residuals(
    res: &Residuals,
    problem: &ProblemSpec,
    dual: Option<&DualNorms>,
    params: GlobalParams,
    estimate: Estimate,
) -> Result<EstimateReport> {
    let GlobalParams { alpha, beta, gamma, mode } = params;
    let kernel = problem.kernel.spec();
    let squared = if mode == KernelMode::L2 && !kernel.is_zero() { Some(kernel.squared()?) } else { None };
    let ops = Operators::new(problem.params);
    let part = &res.partition;
    let n_slabs = part.n_slabs();
    let horizon = part.horizon();
    let h_min: Vec<f64> = res.unions.iter().map(|u| u.h_min).collect();
    let h_max: Vec<f64> = res.unions.iter().map(|u| u.h_max).collect();
    let hbars: Vec<Vec<f64>> = (1..=n_slabs).map(|n| res.union_h(n)).collect();
    let upsilon0 = initial_term(res, problem, alpha as i32, beta as i32);

    let rows: Vec<SlabRow> = (1..=n_slabs)
        .into_par_iter()
        .map(|n| -> Result<SlabRow> {
            let (t0, t1) = part.slab(n);
            let k = t1 - t0;
            let owners = res.union_owners(n);
            let hbar = &hbars[n - 1];
            let n_cells = hbar.len();
            let (d1, d2) = res.rates(n);
            let moments = res.edge_moments(n, owners, n_cells);
            let times = time_rule(t0, t1, ESTIMATE_POINTS);
            let zeta_n = zeta(h_min[n - 1], beta);
            let op = UnionOperator::new(res, &ops, n)?;
            // Ā_h ΔU1 and Ā_h U1^m for the history
            let du1: Vec<f64> = res.u1[n].iter().zip(&res.u1[n - 1]).map(|(a, b)| a - b).collect();
            let du2: Vec<f64> = res.u2[n].iter().zip(&res.u2[n - 1]).map(|(a, b)| a - b).collect();
            let a_du1 = {
                let (b, x) = op.apply(res, &du1);
                dot(&b, &x).max(0.0).sqrt()
            };
            let du2_norm = res.overlay.product(&du2, &du2, res.ncomp).max(0.0).sqrt();
            let history: Vec<(Vec<f64>, Vec<f64>)> =
                if kernel.is_zero() { Vec::new() } else { (0..=n).map(|m| op.apply(res, &res.u1[m])).collect() };
            let cbar: Vec<f64> = if kernel.is_zero() {
                Vec::new()
            } else {
                let mut c = vec![0.0; n + 1];
                for j in 1..=n {
                    let (wl, wr) = kernel.slab_weights((t0, t1), part.slab(j));
                    c[j - 1] += wl / k;
                    c[j] += wr / k;
                }
                c
            };
            let ka = if alpha >= 1 { k } else { 1.0 };
            let kg = if gamma == 1 { k } else { 1.0 };
            let (mut ups_h, mut ups_hd, mut ups_k, mut ups_kd) = (0.0, 0.0, 0.0, 0.0);
            let (mut zeta_nn_mean, mut k_nt_mean) = (0.0, 0.0);
            for &(t, wt) in &times {
                let s = (t - t0) / k;
                let (_, u2t) = res.state(n, t);
                let x: Vec<f64> = d1.iter().zip(&u2t).map(|(a, b)| a - b).collect();
                let h1 = res.weighted_cell_norm_sq(&x, None, &|c| hbar[owners[c]].powi(2 * alpha as i32)).sqrt();
                let f_at = res.f().map(|f| move |x: [f64; 2]| f(x, t));
                let h2 = match &f_at {
                    Some(f) => res.weighted_cell_norm_sq(&d2, Some(f), &|c| hbar[owners[c]].powi(2 * beta as i32)),
                    None => res.weighted_cell_norm_sq(&d2, None, &|c| hbar[owners[c]].powi(2 * beta as i32)),
                }
                .sqrt();
                ups_h += wt * (h1 + h2);

                let r_t = edge_sq_at(&moments, s, &|kk| hbar[kk].powi(3)).sqrt();
                let g_t = res.neumann_mismatch_sq(t, owners, &|kk| hbar[kk].powi(3)).sqrt();
                let memory = match mode {
                    KernelMode::Convolved => {
                        let mut acc = 0.0;
                        if !kernel.is_zero() {
                            for j in 1..=n {
                                let oj = res.union_owners(j);
                                let hj = &hbars[j - 1];
                                let sq = res.convolved_edge_sq(j, t, oj, hj.len());
                                let v: f64 = sq.iter().zip(hj).map(|(a, h)| a * h.powi(3)).sum();
                                acc += zeta(h_min[j - 1], beta) * v.sqrt();
                            }
                        }
                        acc
                    }
                    KernelMode::L1 | KernelMode::L2 => {
                        let zn = if kernel.is_zero() {
                            0.0
                        } else {
                            let tail: f64 = (n..=n_slabs)
                                .map(|j| {
                                    let w = match mode {
                                        KernelMode::L1 => kernel.forward_mass(t, part.t(j - 1), part.t(j)).max(0.0).sqrt(),
                                        _ => part.k(j).sqrt(),
                                    };
                                    w * h_max[j - 1].powf(beta as f64 - 0.5)
                                })
                                .sum();
                            let front = match (&squared, mode) {
                                (Some(sq), KernelMode::L2) => sq.forward_mass(t, t, horizon).max(0.0).sqrt(),
                                _ => kernel.forward_mass(t, t, horizon).max(0.0).sqrt(),
                            };
                            k_nt_mean += wt * front / k;
                            h_min[n - 1].powf(-1.5) * front * tail
                        };
                        zeta_nn_mean += wt * zn / k;
                        zn * r_t
                    }
                };
                ups_hd += wt * (zeta_n * r_t + memory + zeta_n * g_t);

                let fluct = (1.0 - 2.0 * s).abs() / 2.0;
                let mut ek = ka * fluct * du2_norm;
                let mut inner = fluct * a_du1;
                if !history.is_empty() {
                    let coeffs = super::residuals::history_coefficients(kernel, part, t);
                    let mut v = vec![0.0; history[0].1.len()];
                    let mut mv = vec![0.0; history[0].0.len()];
                    for m in 0..=n {
                        let c = coeffs[m] - cbar[m];
                        if c != 0.0 {
                            crate::linalg::axpy(&mut v, c, &history[m].1);
                            crate::linalg::axpy(&mut mv, c, &history[m].0);
                        }
                    }
                    inner += dot(&v, &mv).max(0.0).sqrt();
                }
                if let Some(f) = res.f() {
                    inner += data_fluctuation_sq(res, &**f, t, &times, k).sqrt();
                }
                ek += kg * inner;
                ups_k += wt * ek;

                if let Some(g) = res.g() {
                    let mut acc = 0.0;
                    for &fi in &res.neumann.facets {
                        let f = res.facet(fi);
                        let hk = hbar[owners[f.left]];
                        acc += facet_quadrature(f, &|x| {
                            let mut bar = [0.0; 2];
                            for &(tq, wq) in &times {
                                let v = g(x, tq);
                                bar[0] += wq * v[0] / k;
                                bar[1] += wq * v[1] / k;
                            }
                            let v = g(x, t);
                            (v[0] - bar[0]).powi(2) + (v[1] - bar[1]).powi(2)
                        }) / hk;
                    }
                    ups_kd += wt * kg * acc.sqrt();
                }
            }
            let mut factors = vec![("zeta_n", zeta_n)];
            match mode {
                KernelMode::Convolved => {}
                _ => {
                    factors.push(("zeta_nN_mean", zeta_nn_mean));
                    factors.push(("K_nT_mean", k_nt_mean));
                }
            }
            Ok(SlabRow {
                n,
                terms: vec![
                    ("upsilon_h", ups_h),
                    ("upsilon_h_dK", ups_hd),
                    ("upsilon_k", ups_k),
                    ("upsilon_k_dK", ups_kd),
                ],
                factors,
            })
        })
        .collect::<Result<_>>()?;
    let norms = match dual {
        Some(d) => d.global_factor(alpha, beta, gamma),
        None => Vec::new(),
    };
    Ok(EstimateReport::new(estimate, upsilon0, rows, norms))
}
