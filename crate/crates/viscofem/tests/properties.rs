use proptest::prelude::*;

use viscofem::adaptivity::dorfler_mark;
use viscofem::kernel::{pointwise_history, validate_kernel, PiecewiseLinearPath, PronyHistoryState};
use viscofem::{Error, KernelSpec, PronyTerm, TimePartition};

fn prony_terms() -> impl Strategy<Value = Vec<PronyTerm>> {
    prop::collection::vec((0.01f64..0.3, 0.2f64..5.0).prop_map(|(gamma, lambda)| PronyTerm { gamma, lambda }), 1..4)
}

proptest! {
    #[test]
    fn dorfler_marks_a_minimal_prefix(values in prop::collection::vec(0.0f64..10.0, 1..40), fraction in 0.05f64..0.95) {
        let marked = dorfler_mark(&values, fraction);
        let total: f64 = values.iter().sum();
        let sum: f64 = marked.iter().map(|&i| values[i]).sum();
        prop_assert!(sum >= fraction * total - 1e-12);
        let without_last: f64 = sum - marked.last().map_or(0.0, |&i| values[i]);
        prop_assert!(without_last < fraction * total);
        let mut seen = marked.clone();
        seen.sort_unstable();
        seen.dedup();
        prop_assert_eq!(seen.len(), marked.len());
        for w in marked.windows(2) {
            prop_assert!(values[w[0]] >= values[w[1]]);
        }
    }

    #[test]
    fn prony_slab_weights_match_closed_form(terms in prony_terms(), c in 0.0f64..1.0, kj in 0.05f64..0.5, gap in 0.0f64..0.5, kn in 0.05f64..0.5) {
        let (d, a) = (c + kj, c + kj + gap);
        let b = a + kn;
        let spec = KernelSpec::Prony(terms.clone());
        let (wl, wr) = spec.slab_weights((a, b), (c, d));
        // ∫_a^b ∫_c^d γ exp(-λ(t-s)) ds dt
        let exact: f64 = terms
            .iter()
            .map(|p| p.gamma / (p.lambda * p.lambda) * ((-p.lambda * (a - d)).exp() - (-p.lambda * (a - c)).exp()) * (1.0 - (-p.lambda * kn).exp()))
            .sum();
        prop_assert!((wl + wr - exact).abs() <= 1e-12 * exact.abs().max(1e-3));
    }

    #[test]
    fn history_weights_sum_to_the_slab_mass(terms in prony_terms(), c in 0.0f64..1.0, kj in 0.05f64..0.5, t_off in 0.0f64..1.0) {
        let d = c + kj;
        let t = c + t_off;
        let spec = KernelSpec::Prony(terms.clone());
        let (wl, wr) = spec.history_weights(t, (c, d));
        let top = d.min(t);
        let exact: f64 = terms
            .iter()
            .map(|p| p.gamma / p.lambda * ((-p.lambda * (t - top)).exp() - (-p.lambda * (t - c)).exp()))
            .sum();
        prop_assert!((wl + wr - exact).abs() <= 1e-13 * exact.abs().max(1e-3));
    }

    #[test]
    fn recurrence_matches_pointwise_history(terms in prony_terms(), steps in prop::collection::vec((0.02f64..0.4, -1.0f64..1.0), 1..15), y0 in -1.0f64..1.0) {
        let mut nodes = vec![0.0];
        let mut values = vec![y0];
        for (k, y) in &steps {
            nodes.push(nodes.last().unwrap() + k);
            values.push(*y);
        }
        let spec = KernelSpec::Prony(terms.clone());
        let mut state = PronyHistoryState::new(&terms, 1);
        for n in 1..nodes.len() {
            state.advance((nodes[n - 1], nodes[n]), &[values[n - 1]], &[values[n]]).unwrap();
            let path = PiecewiseLinearPath { nodes: &nodes[..=n], values: &values[..=n] };
            let (total, _) = pointwise_history(&spec, nodes[n], &path);
            prop_assert!((state.value()[0] - total).abs() <= 1e-12 * total.abs().max(1.0));
        }
    }

    #[test]
    fn recurrence_rejects_gaps(terms in prony_terms(), gap in 0.01f64..0.5) {
        let mut state = PronyHistoryState::new(&terms, 1);
        state.advance((0.0, 0.5), &[1.0], &[1.0]).unwrap();
        let is_gap = matches!(state.advance((0.5 + gap, 1.0 + gap), &[1.0], &[1.0]), Err(Error::NonContiguousSlab { .. }));
        prop_assert!(is_gap);
    }

    #[test]
    fn prony_kappa_is_the_mass(terms in prony_terms()) {
        let kappa: f64 = terms.iter().map(|p| p.gamma / p.lambda).sum();
        let spec = KernelSpec::Prony(terms);
        match validate_kernel(&spec, 1.0) {
            Ok(k) => prop_assert!(kappa < 1.0 && (k - kappa).abs() <= 1e-15 * kappa),
            Err(Error::NonContractiveKernel { .. }) => prop_assert!(kappa >= 1.0),
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn halving_slabs_refines(n in 1usize..20, marks in prop::collection::vec(0usize..25, 0..10)) {
        let p = TimePartition::uniform(2.0, n).unwrap();
        let fine = p.refine_slabs(&marks);
        let mut valid: Vec<usize> = marks.iter().copied().filter(|&m| m >= 1 && m <= n).collect();
        valid.sort_unstable();
        valid.dedup();
        prop_assert_eq!(fine.n_slabs(), n + valid.len());
        prop_assert!(p.is_refined_by(&fine));
        prop_assert_eq!(fine.horizon(), 2.0);
    }
}
