mod common;

use std::sync::Arc;

use common::{goal_error, prony, run};
use viscofem::assembly::forms::LoadData;
use viscofem::dual_solver::Enrichment;
use viscofem::estimators::{
    dual_norms, example1_bound, global_estimate, local_estimate, theta_space_time_split, GlobalParams, KernelMode, LocalParams,
};
use viscofem::primal_solver::solve_primal;
use viscofem::problems::{mms_linear, mms_smooth, ProblemSpec};
use viscofem::{Error, KernelSpec};

fn all_nonnegative(r: &viscofem::estimators::EstimateReport) -> bool {
    r.upsilon0 >= 0.0 && r.rows.iter().all(|row| row.terms.iter().all(|(_, v)| *v >= 0.0 && v.is_finite()))
}

fn quiet(problem: &ProblemSpec) -> ProblemSpec {
    let mut p = problem.clone();
    p.load = LoadData { u0: Arc::new(|_| [0.0; 2]), v0: Arc::new(|_| [0.0; 2]), f: None, g: None };
    p
}

#[test]
fn zero_data_gives_zero_bounds() {
    let p = quiet(&mms_smooth(prony(0.4, 1.0), 2).unwrap());
    let u = solve_primal(&p, &p.partition(3).unwrap(), &vec![p.mesh(3).unwrap(); 4]).unwrap();
    assert!(u.levels.iter().all(|l| l.u1.iter().chain(&l.u2).all(|v| *v == 0.0)));
    assert_eq!(example1_bound(&u, &p).unwrap().bound(), 0.0);
    let g = global_estimate(&u, &p, None, GlobalParams { alpha: 2, beta: 2, gamma: 1, mode: KernelMode::L1 }).unwrap();
    assert_eq!(g.sum(), 0.0);
    let l = local_estimate(&u, &p, None, LocalParams { alpha: 1, mode: KernelMode::L1, endpoint_bound: false }).unwrap();
    assert_eq!(l.sum(), 0.0);
}

#[test]
fn terms_are_nonnegative_in_every_mode() {
    let p = mms_smooth(KernelSpec::PowerLaw { c: 0.2, rho: 0.7, eta: 1.0 }, 1).unwrap();
    let r = run(&p, 6, 6, Enrichment::default());
    let norms = dual_norms(&r.z, &r.ops).unwrap();
    for mode in [KernelMode::L1, KernelMode::L2, KernelMode::Convolved] {
        for (alpha, beta, gamma) in [(0, 1, 0), (1, 2, 1), (2, 2, 1)] {
            let g = global_estimate(&r.u, &p, Some(&norms), GlobalParams { alpha, beta, gamma, mode }).unwrap();
            assert!(all_nonnegative(&g), "{mode:?} {alpha} {beta} {gamma}");
            assert!(g.bound() > 0.0);
        }
    }
    for mode in [KernelMode::L1, KernelMode::L2] {
        for alpha in [1, 2] {
            let l = local_estimate(&r.u, &p, Some(&norms), LocalParams { alpha, mode, endpoint_bound: false }).unwrap();
            assert!(all_nonnegative(&l));
        }
    }
    assert!(all_nonnegative(&example1_bound(&r.u, &p).unwrap()));
}

#[test]
fn invalid_exponents_are_config_errors() {
    let p = mms_smooth(prony(0.4, 1.0), 1).unwrap();
    let u = solve_primal(&p, &p.partition(2).unwrap(), &vec![p.mesh(2).unwrap(); 3]).unwrap();
    for params in [
        GlobalParams { alpha: 3, beta: 2, gamma: 1, mode: KernelMode::L1 },
        GlobalParams { alpha: 2, beta: 0, gamma: 1, mode: KernelMode::L1 },
        GlobalParams { alpha: 2, beta: 2, gamma: 2, mode: KernelMode::L1 },
    ] {
        assert!(matches!(global_estimate(&u, &p, None, params), Err(Error::Config(_))));
    }
    for params in [
        LocalParams { alpha: 0, mode: KernelMode::L1, endpoint_bound: false },
        LocalParams { alpha: 2, mode: KernelMode::Convolved, endpoint_bound: false },
    ] {
        assert!(matches!(local_estimate(&u, &p, None, params), Err(Error::Config(_))));
    }
}

#[test]
fn endpoint_bound_dominates_exact_facet_norms() {
    let p = mms_smooth(prony(0.4, 1.0), 2).unwrap();
    let u = solve_primal(&p, &p.partition(3).unwrap(), &vec![p.mesh(3).unwrap(); 4]).unwrap();
    let est = |endpoint_bound| local_estimate(&u, &p, None, LocalParams { alpha: 2, mode: KernelMode::L1, endpoint_bound }).unwrap();
    let (exact, bound) = (est(false), est(true));
    for (a, b) in exact.rows.iter().zip(&bound.rows) {
        assert!(b.term("upsilon_n1").unwrap() >= a.term("upsilon_n1").unwrap() * (1.0 - 1e-12));
        assert_eq!(a.term("upsilon_n2"), b.term("upsilon_n2"));
    }
}

#[test]
fn zeta_is_one_for_beta_two() {
    let p = mms_smooth(prony(0.4, 1.0), 1).unwrap();
    let u = solve_primal(&p, &p.partition(3).unwrap(), &vec![p.mesh(5).unwrap(); 4]).unwrap();
    let g = global_estimate(&u, &p, None, GlobalParams { alpha: 2, beta: 2, gamma: 1, mode: KernelMode::L2 }).unwrap();
    assert!(g.rows.iter().all(|r| r.factor("zeta_n") == Some(1.0)));
    assert_eq!(viscofem::estimators::global::zeta(0.01, 2), 1.0);
}

#[test]
fn space_and_time_parts_add_up() {
    let p = mms_smooth(prony(0.4, 1.0), 2).unwrap();
    let r = run(&p, 3, 3, Enrichment::default());
    let z_ref = r.z.z.as_function();
    let (space, time) = theta_space_time_split(&r.ops, &r.u, &z_ref, &p).unwrap();
    let full = r.theta_totals(&p)[1];
    assert!((space.total() + time.total() - full).abs() <= 1e-10 * full.abs(), "{} + {} vs {full}", space.total(), time.total());
}

#[test]
fn theta_tracks_the_goal_error() {
    let p = mms_smooth(prony(0.4, 1.0), 1).unwrap();
    let r = run(&p, 8, 8, Enrichment { refine_h: 2, refine_k: 2 });
    let theta = r.theta_totals(&p)[1];
    let exact = goal_error(&r.u, &p);
    assert_eq!(theta.signum(), exact.signum());
    assert!((theta - exact).abs() < 0.1 * exact.abs(), "{theta} vs {exact}");
}

#[test]
fn exact_solutions_leave_no_residual() {
    for spec in [KernelSpec::Zero, prony(0.4, 1.0)] {
        let p = mms_linear(spec).unwrap();
        let u = solve_primal(&p, &p.partition(4).unwrap(), &vec![p.mesh(4).unwrap(); 5]).unwrap();
        let g = global_estimate(&u, &p, None, GlobalParams { alpha: 2, beta: 2, gamma: 1, mode: KernelMode::L1 }).unwrap();
        for name in ["upsilon_h", "upsilon_h_dK"] {
            assert!(g.term_total(name) < 1e-10, "{name}: {}", g.term_total(name));
        }
    }
}
