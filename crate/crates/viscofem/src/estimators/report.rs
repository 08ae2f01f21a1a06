//! Per-slab estimator terms and the final bound.

/// Which estimate a report belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Estimate {
    Global,
    Local,
    Example1,
}

/// Named nonnegative contributions of one slab.
#[derive(Clone, Debug)]
pub struct SlabRow {
    pub n: usize,
    /// Estimator terms, already integrated over the slab where applicable.
    pub terms: Vec<(&'static str, f64)>,
    /// Weight factors used on this slab (reported, not summed).
    pub factors: Vec<(&'static str, f64)>,
}

impl SlabRow {
    pub fn total(&self) -> f64 {
        self.terms.iter().map(|(_, v)| v).sum()
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|(k, _)| *k == name).map(|(_, v)| *v)
    }

    pub fn factor(&self, name: &str) -> Option<f64> {
        self.factors.iter().find(|(k, _)| *k == name).map(|(_, v)| *v)
    }
}

#[derive(Clone, Debug)]
pub struct EstimateReport {
    pub estimate: Estimate,
    pub upsilon0: f64,
    pub rows: Vec<SlabRow>,
    /// The dual norms entering the maximum.
    pub dual_norms: Vec<(&'static str, f64)>,
    /// Their maximum, or 1 when no dual solution is used.
    pub dual_factor: f64,
    /// Generic constant, reported as 1.
    pub constant: f64,
}

impl EstimateReport {
    pub(crate) fn new(estimate: Estimate, upsilon0: f64, rows: Vec<SlabRow>, dual_norms: Vec<(&'static str, f64)>) -> Self {
        let dual_factor = if dual_norms.is_empty() { 1.0 } else { dual_norms.iter().map(|(_, v)| *v).fold(0.0, f64::max) };
        EstimateReport { estimate, upsilon0, rows, dual_norms, dual_factor, constant: 1.0 }
    }

    /// `Υ_0 + Σ_n` slab terms.
    pub fn sum(&self) -> f64 {
        self.upsilon0 + self.rows.iter().map(SlabRow::total).sum::<f64>()
    }

    pub fn bound(&self) -> f64 {
        self.constant * self.dual_factor * self.sum()
    }

    /// Sum of one named term over all slabs.
    pub fn term_total(&self, name: &str) -> f64 {
        self.rows.iter().filter_map(|r| r.term(name)).sum()
    }
}
