//! Reference quadrature rules on `[0, 1]` and on simplices.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;

/// Gauss–Legendre points `(x, w)` on `[0, 1]` with weights summing to one.
pub fn gauss_legendre(points: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(points.max(1)).unwrap());
    let mut out: Vec<(f64, f64)> = rule.as_node_weight_pairs().iter().map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Barycentric points and weights (summing to one) for a cell: five-point
/// Gauss in 1D, seven-point degree-5 rule on triangles.
pub fn cell_rule(dim: usize) -> &'static [([f64; 3], f64)] {
    static LINE: OnceLock<Vec<([f64; 3], f64)>> = OnceLock::new();
    static TRI: OnceLock<Vec<([f64; 3], f64)>> = OnceLock::new();
    if dim == 1 {
        return LINE.get_or_init(|| gauss_legendre(5).into_iter().map(|(s, w)| ([1.0 - s, s, 0.0], w)).collect());
    }
    TRI.get_or_init(|| {
        let r = 15f64.sqrt();
        let mut out = vec![([1.0 / 3.0; 3], 9.0 / 40.0)];
        for (b, w) in [((6.0 + r) / 21.0, (155.0 + r) / 1200.0), ((6.0 - r) / 21.0, (155.0 - r) / 1200.0)] {
            let a = 1.0 - 2.0 * b;
            out.push(([a, b, b], w));
            out.push(([b, a, b], w));
            out.push(([b, b, a], w));
        }
        out
    })
}

/// Physical point of barycentric coordinates on a cell.
pub fn map_point(dim: usize, x: &[[f64; 2]; 3], bary: &[f64; 3]) -> [f64; 2] {
    let mut p = [0.0; 2];
    for i in 0..=dim {
        p[0] += bary[i] * x[i][0];
        p[1] += bary[i] * x[i][1];
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_rule_integrates_quintics() {
        // ∫_T λ1^a λ2^b = a! b! 2! / (a+b+2)! |T| with weights summing to |T| = 1
        let rule = cell_rule(2);
        let exact = |a: i32, b: i32| {
            let f = |n: i32| (1..=n).map(|i| i as f64).product::<f64>();
            f(a) * f(b) * 2.0 / f(a + b + 2)
        };
        for (a, b) in [(0, 0), (2, 1), (3, 2), (5, 0), (1, 4)] {
            let q: f64 = rule.iter().map(|(l, w)| w * l[1].powi(a) * l[2].powi(b)).sum();
            assert!((q - exact(a, b)).abs() < 1e-14, "{a} {b}");
        }
    }
}
