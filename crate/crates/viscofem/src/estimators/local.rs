//! The weighted estimate built on local interpolants, with an `L2` or an
//! `L1` treatment of the memory term.

use rayon::prelude::*;

use super::dual_norms::DualNorms;
use super::global::{edge_sq_at, initial_term, KernelMode, ESTIMATE_POINTS};
use super::report::{Estimate, EstimateReport, SlabRow};
use super::residuals::{endpoint_bound, Residuals};
use crate::assembly::time_rule;
use crate::error::{Error, Result};
use crate::primal_solver::SpaceTimeSolution;
use crate::problems::ProblemSpec;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalParams {
    pub alpha: usize,
    /// `L2` or `L1`.
    pub mode: KernelMode,
    /// Facet time norms from the endpoint bound instead of exactly.
    pub endpoint_bound: bool,
}

impl LocalParams {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha in 1..=2 required, got {}", self.alpha)));
        }
        if self.mode == KernelMode::Convolved {
            return Err(Error::Config("local estimate kernel mode must be l1 or l2".into()));
        }
        Ok(())
    }
}

/// `∫_{I_n} ‖r_d‖^2_{∂K}` per cell from its moments.
fn edge_time_sq(m: &[f64; 3], k: f64, endpoint: bool) -> f64 {
    if endpoint {
        endpoint_bound(m[0].max(0.0).sqrt(), m[2].max(0.0).sqrt(), k).powi(2)
    } else {
        k / 3.0 * (m[0] + m[1] + m[2])
    }
}

pub fn local_estimate(
    u: &SpaceTimeSolution,
    problem: &ProblemSpec,
    dual: Option<&DualNorms>,
    params: LocalParams,
) -> Result<EstimateReport> {
    params.validate()?;
    let res = Residuals::new(u, problem, &[])?;
    local_from_residuals(&res, problem, dual, params)
}

pub(crate) fn local_from_residuals(
    res: &Residuals,
    problem: &ProblemSpec,
    dual: Option<&DualNorms>,
    params: LocalParams,
) -> Result<EstimateReport> {
    let LocalParams { alpha, mode, endpoint_bound } = params;
    let kernel = problem.kernel.spec();
    let squared = if mode == KernelMode::L2 { Some(kernel.squared()?) } else { None };
    let part = &res.partition;
    let n_slabs = part.n_slabs();
    let h_max: Vec<f64> = res.unions.iter().map(|u| u.h_max).collect();
    let hbars: Vec<Vec<f64>> = (1..=n_slabs).map(|n| res.union_h(n)).collect();
    let upsilon0 = initial_term(res, problem, alpha as i32, 2);
    // (Σ_{T̄^j} h̄^{-1} ‖(K*r_d)^j(t)‖^2)^{1/2}
    let q = |j: usize, t: f64| -> f64 {
        let hj = &hbars[j - 1];
        let sq = res.convolved_edge_sq(j, t, res.union_owners(j), hj.len());
        sq.iter().zip(hj).map(|(a, h)| a / h).sum::<f64>().sqrt()
    };

    let rows: Vec<SlabRow> = (1..=n_slabs)
        .into_par_iter()
        .map(|n| -> Result<SlabRow> {
            let (t0, t1) = part.slab(n);
            let k = t1 - t0;
            let owners = res.union_owners(n);
            let hbar = &hbars[n - 1];
            let (d1, d2) = res.rates(n);
            let moments = res.edge_moments(n, owners, hbar.len());
            let times = time_rule(t0, t1, ESTIMATE_POINTS);
            let mut sq = [0.0; 8];
            for &(t, wt) in &times {
                let (_, u2t) = res.state(n, t);
                let x: Vec<f64> = d1.iter().zip(&u2t).map(|(a, b)| a - b).collect();
                sq[0] += wt * res.weighted_cell_norm_sq(&x, None, &|c| hbar[owners[c]].powi(2 * alpha as i32));
                sq[1] += wt * res.weighted_cell_norm_sq(&x, None, &|_| 1.0);
                let f_at = res.f().map(|f| move |x: [f64; 2]| f(x, t));
                let data: Option<&dyn Fn([f64; 2]) -> [f64; 2]> = f_at.as_ref().map(|f| f as _);
                sq[2] += wt * res.weighted_cell_norm_sq(&d2, data, &|c| hbar[owners[c]].powi(4));
                sq[3] += wt * res.weighted_cell_norm_sq(&d2, data, &|_| 1.0);
                sq[4] += wt * res.neumann_mismatch_sq(t, owners, &|kk| hbar[kk].powi(3));
                sq[5] += wt * res.neumann_mismatch_sq(t, owners, &|kk| 1.0 / hbar[kk]);
                sq[6] += wt * res.neumann_mismatch_sq(t, owners, &|kk| hbar[kk]);
            }
            let edge = |p: i32| -> f64 {
                moments.iter().zip(hbar).map(|(m, h)| h.powi(p) * edge_time_sq(m, k, endpoint_bound)).sum::<f64>().sqrt()
            };
            let s = |v: f64| v.max(0.0).sqrt();
            let braces = s(sq[0])
                + k * s(sq[1])
                + s(sq[2])
                + k * s(sq[3])
                + edge(3)
                + s(sq[4])
                + k * edge(-1)
                + k * s(sq[5])
                + k * edge(1)
                + k * s(sq[6]);
            let upsilon1 = k.sqrt() * braces;

            let upsilon2 = if kernel.is_zero() {
                0.0
            } else {
                match mode {
                    KernelMode::L1 => {
                        let (mut plain, mut weighted) = (0.0, 0.0);
                        for &(t, wt) in &times {
                            let (mut a, mut b) = (0.0, 0.0);
                            for j in 1..=n {
                                let v = q(j, t);
                                a += v;
                                b += h_max[j - 1] * v;
                            }
                            plain += wt * a * a;
                            weighted += wt * b * b;
                        }
                        let hn = h_max[n - 1];
                        k.sqrt() * ((hn * hn + k) * plain.sqrt() + (hn + k) * weighted.sqrt())
                    }
                    _ => {
                        let sq_kernel = squared.as_ref().expect("squared kernel in l2 mode");
                        let mut acc = 0.0;
                        for &(t, wt) in &times {
                            let s = (t - t0) / k;
                            let r3 = edge_sq_at(&moments, s, &|kk| hbar[kk].powi(3)).sqrt();
                            let rm = edge_sq_at(&moments, s, &|kk| 1.0 / hbar[kk]).sqrt();
                            let rp = edge_sq_at(&moments, s, &|kk| hbar[kk]).sqrt();
                            let tail: f64 = (n..=n_slabs)
                                .map(|j| {
                                    let (a, b) = part.slab(j);
                                    let kj = b - a;
                                    let l2 = sq_kernel.forward_mass(t, a, b).max(0.0).sqrt();
                                    kj.sqrt() * l2 * (r3 + kj * rm + kj * rp)
                                })
                                .sum();
                            acc += wt * tail;
                        }
                        acc
                    }
                }
            };
            Ok(SlabRow { n, terms: vec![("upsilon_n1", upsilon1), ("upsilon_n2", upsilon2)], factors: Vec::new() })
        })
        .collect::<Result<_>>()?;
    let norms = match dual {
        Some(d) => d.local_factor(alpha),
        None => Vec::new(),
    };
    Ok(EstimateReport::new(Estimate::Local, upsilon0, rows, norms))
}
