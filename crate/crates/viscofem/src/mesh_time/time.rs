use crate::error::{Error, Result};

/// Nodes `0 = t_0 < t_1 < ... < t_N = T`. Slabs are numbered `1..=N`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimePartition {
    nodes: Vec<f64>,
}

impl TimePartition {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidPartition("at least one slab required".into()));
        }
        if nodes[0] != 0.0 {
            return Err(Error::InvalidPartition(format!("t_0 = {} must be 0", nodes[0])));
        }
        if let Some(w) = nodes.windows(2).find(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::InvalidPartition(format!("nodes not increasing at {} -> {}", w[0], w[1])));
        }
        Ok(TimePartition { nodes })
    }

    pub fn uniform(horizon: f64, slabs: usize) -> Result<Self> {
        if !(horizon > 0.0) || slabs == 0 {
            return Err(Error::InvalidPartition(format!("T = {horizon}, N = {slabs}")));
        }
        let k = horizon / slabs as f64;
        let mut nodes: Vec<f64> = (0..=slabs).map(|i| i as f64 * k).collect();
        nodes[slabs] = horizon;
        Self::new(nodes)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn n_slabs(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// `t_n`.
    pub fn t(&self, n: usize) -> f64 {
        self.nodes[n]
    }

    /// Slab `I_n = (t_{n-1}, t_n)` for `n >= 1`.
    pub fn slab(&self, n: usize) -> (f64, f64) {
        (self.nodes[n - 1], self.nodes[n])
    }

    /// `k_n`.
    pub fn k(&self, n: usize) -> f64 {
        self.nodes[n] - self.nodes[n - 1]
    }

    pub fn k_max(&self) -> f64 {
        (1..=self.n_slabs()).map(|n| self.k(n)).fold(0.0, f64::max)
    }

    /// Index `n` of the slab containing `t` (right-closed, `t_0` maps to 1).
    pub fn slab_of(&self, t: f64) -> usize {
        let pos = self.nodes.partition_point(|&s| s < t);
        pos.clamp(1, self.n_slabs())
    }

    /// Halves every marked slab (1-based indices).
    pub fn refine_slabs(&self, marked: &[usize]) -> Self {
        let mut flag = vec![false; self.n_slabs() + 1];
        for &n in marked {
            if n >= 1 && n <= self.n_slabs() {
                flag[n] = true;
            }
        }
        let mut nodes = vec![0.0];
        for n in 1..=self.n_slabs() {
            let (a, b) = self.slab(n);
            if flag[n] {
                nodes.push(0.5 * (a + b));
            }
            nodes.push(b);
        }
        TimePartition { nodes }
    }

    /// Splits every slab into `2^levels` equal parts.
    pub fn refine_uniform(&self, levels: u32) -> Self {
        let mut p = self.clone();
        for _ in 0..levels {
            let all: Vec<usize> = (1..=p.n_slabs()).collect();
            p = p.refine_slabs(&all);
        }
        p
    }

    /// `τ = T - t` with reversed node order.
    pub fn reversed(&self) -> Self {
        let t = self.horizon();
        let mut nodes: Vec<f64> = self.nodes.iter().rev().map(|s| t - s).collect();
        nodes[0] = 0.0;
        *nodes.last_mut().unwrap() = t;
        TimePartition { nodes }
    }

    /// Whether every node of `self` is a node of `finer`.
    pub fn is_refined_by(&self, finer: &TimePartition) -> bool {
        let tol = 1e-12 * self.horizon().max(1.0);
        self.nodes.iter().all(|t| finer.nodes.iter().any(|s| (s - t).abs() <= tol))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_nodes() {
        assert!(TimePartition::new(vec![0.0, 0.5, 0.5]).is_err());
        assert!(TimePartition::new(vec![0.1, 0.5]).is_err());
    }

    #[test]
    fn slab_lookup_and_refinement() {
        let p = TimePartition::uniform(1.0, 4).unwrap();
        assert_eq!(p.slab_of(0.0), 1);
        assert_eq!(p.slab_of(0.25), 1);
        assert_eq!(p.slab_of(0.26), 2);
        let r = p.refine_slabs(&[2]);
        assert_eq!(r.n_slabs(), 5);
        assert!(p.is_refined_by(&r));
        assert_eq!(p.reversed().reversed(), p);
    }
}
