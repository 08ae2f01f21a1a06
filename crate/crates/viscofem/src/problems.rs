//! Problem specifications: manufactured solutions with consistent data
//! (including the convolution contribution) and a 2D bar scenario.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use crate::assembly::forms::{DualLoad, LoadData};
use crate::assembly::{ElasticParams, SpaceFn, SpaceTimeFn};
use crate::error::{Error, Result};
use crate::kernel::{Kernel, KernelSpec, QUAD_ABS_TOL};
use crate::mesh_time::{FacetTag, SpatialMesh, TimePartition};

/// Gradient of a vector field, `grad[i][j] = ∂_j u_i`.
pub type GradFn = Arc<dyn Fn([f64; 2], f64) -> [[f64; 2]; 2] + Send + Sync>;

/// Axis-aligned domains with one boundary tag per side.
#[derive(Clone, Debug, PartialEq)]
pub enum Domain {
    Interval { a: f64, b: f64, left: FacetTag, right: FacetTag },
    /// Tags in the order left, right, bottom, top.
    Rectangle { x: (f64, f64), y: (f64, f64), tags: [FacetTag; 4] },
}

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            Domain::Rectangle { .. } => 2,
        }
    }

    /// Mesh with about `per_unit` cells per unit length along each axis.
    pub fn mesh(&self, per_unit: usize) -> Result<Arc<SpatialMesh>> {
        let count = |len: f64| ((len * per_unit as f64).round() as usize).max(1);
        match self {
            Domain::Interval { a, b, left, right } => {
                Ok(Arc::new(SpatialMesh::interval(*a, *b, count(b - a), *left, *right)?))
            }
            Domain::Rectangle { x, y, tags } => {
                let (x, y, tags) = (*x, *y, *tags);
                let tagger = move |p: [f64; 2]| {
                    let tol = 1e-12 * (x.1 - x.0).max(y.1 - y.0);
                    if (p[0] - x.0).abs() < tol {
                        tags[0]
                    } else if (p[0] - x.1).abs() < tol {
                        tags[1]
                    } else if (p[1] - y.0).abs() < tol {
                        tags[2]
                    } else {
                        tags[3]
                    }
                };
                Ok(Arc::new(SpatialMesh::rectangle(x, y, (count(x.1 - x.0), count(y.1 - y.0)), &tagger)?))
            }
        }
    }
}

/// Exact solution with derivative oracles.
#[derive(Clone)]
pub struct ExactSolution {
    pub u1: SpaceTimeFn,
    pub u2: SpaceTimeFn,
    pub grad_u1: GradFn,
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub domain: Domain,
    pub horizon: f64,
    pub params: ElasticParams,
    pub kernel: Kernel,
    pub load: LoadData,
    pub exact: Option<ExactSolution>,
    /// Default displacement weight of an end-time goal.
    pub goal_weight: Option<SpaceFn>,
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn mesh(&self, per_unit: usize) -> Result<Arc<SpatialMesh>> {
        self.domain.mesh(per_unit)
    }

    pub fn partition(&self, slabs: usize) -> Result<TimePartition> {
        TimePartition::uniform(self.horizon, slabs)
    }

    /// Dual data of the goal `(e1(T), weight)`.
    pub fn end_time_goal(&self, weight: SpaceFn) -> DualLoad {
        DualLoad { z1t: weight, z2t: Arc::new(|_| [0.0; 2]), j1: None, j2: None }
    }
}

fn memo(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Arc<dyn Fn(f64) -> f64 + Send + Sync> {
    let cache: Mutex<HashMap<u64, f64>> = Mutex::new(HashMap::new());
    Arc::new(move |t: f64| {
        if let Some(v) = cache.lock().unwrap().get(&t.to_bits()) {
            return *v;
        }
        let v = f(t);
        cache.lock().unwrap().insert(t.to_bits(), v);
        v
    })
}

/// `∫_0^t K(r) (t - r) dr`.
pub fn convolve_linear(kernel: &KernelSpec, t: f64) -> f64 {
    t * kernel.origin_moment(t, 0) - kernel.origin_moment(t, 1)
}

/// `∫_0^t K(r) sin(t - r) dr`.
pub fn convolve_sin(kernel: &KernelSpec, t: f64) -> Result<f64> {
    if t <= 0.0 {
        return Ok(0.0);
    }
    match kernel {
        KernelSpec::Zero => Ok(0.0),
        KernelSpec::Prony(terms) => Ok(terms
            .iter()
            .map(|p| p.gamma * (p.lambda * t.sin() - t.cos() + (-p.lambda * t).exp()) / (1.0 + p.lambda * p.lambda))
            .sum()),
        KernelSpec::PowerLaw { .. } => {
            let out = ::quadrature::double_exponential::integrate(|r| kernel.eval(r) * (t - r).sin(), 0.0, t, 1e-13);
            if !out.integral.is_finite() || out.error_estimate > 1e-9_f64.max(QUAD_ABS_TOL) {
                return Err(Error::QuadratureFailure(format!(
                    "history of sin at t = {t}: error estimate {:.3e}",
                    out.error_estimate
                )));
            }
            Ok(out.integral)
        }
    }
}

fn mms_params() -> ElasticParams {
    ElasticParams { mu0: 0.25, lambda0: 0.5 }
}

/// 1D, `u1 = x t`, `u2 = x`, `f = 0`, clamped at 0, traction at 1.
pub fn mms_linear(kernel: KernelSpec) -> Result<ProblemSpec> {
    let horizon = 1.0;
    let kernel = Kernel::new(kernel, horizon)?;
    let params = mms_params();
    let e = params.modulus();
    let k = kernel.spec().clone();
    let g: SpaceTimeFn = Arc::new(move |_, t| [e * (t - convolve_linear(&k, t)), 0.0]);
    Ok(ProblemSpec {
        name: "mms_linear".into(),
        domain: Domain::Interval { a: 0.0, b: 1.0, left: FacetTag::Dirichlet, right: FacetTag::Neumann },
        horizon,
        params,
        kernel,
        load: LoadData { u0: Arc::new(|_| [0.0; 2]), v0: Arc::new(|x| [x[0], 0.0]), f: None, g: Some(g) },
        exact: Some(ExactSolution {
            u1: Arc::new(|x, t| [x[0] * t, 0.0]),
            u2: Arc::new(|x, _| [x[0], 0.0]),
            grad_u1: Arc::new(|_, t| [[t, 0.0], [0.0, 0.0]]),
        }),
        goal_weight: Some(Arc::new(|x| [x[0], 0.0])),
    })
}

/// Smooth solution `sin(πx) sin t` (1D) or `(sin πx sin πy, 0) sin t` (2D)
/// on the unit interval/square, clamped at `x = 0`, traction elsewhere.
pub fn mms_smooth(kernel: KernelSpec, dim: usize) -> Result<ProblemSpec> {
    let horizon = 1.0;
    let kernel = Kernel::new(kernel, horizon)?;
    let params = mms_params();
    let spec = kernel.spec().clone();
    // sin t - (K * sin)(t)
    let factor = {
        let spec = spec.clone();
        memo(move |t| t.sin() - convolve_sin(&spec, t).unwrap_or(f64::NAN))
    };
    // validate the history quadrature once
    convolve_sin(&spec, horizon)?;
    let (mu, lam) = (params.mu0, params.lambda0);
    let n = FacetTag::Neumann;
    let (domain, f, g, u1, u2, grad): (Domain, SpaceTimeFn, SpaceTimeFn, SpaceTimeFn, SpaceTimeFn, GradFn) = if dim == 1 {
        let e = params.modulus();
        let (fa, ga) = (factor.clone(), factor.clone());
        (
            Domain::Interval { a: 0.0, b: 1.0, left: FacetTag::Dirichlet, right: n },
            Arc::new(move |x, t| [(PI * x[0]).sin() * (-t.sin() + e * PI * PI * fa(t)), 0.0]),
            Arc::new(move |x, t| [e * PI * (PI * x[0]).cos() * ga(t), 0.0]),
            Arc::new(|x, t| [(PI * x[0]).sin() * t.sin(), 0.0]),
            Arc::new(|x, t| [(PI * x[0]).sin() * t.cos(), 0.0]),
            Arc::new(|x, t| [[PI * (PI * x[0]).cos() * t.sin(), 0.0], [0.0, 0.0]]),
        )
    } else {
        let (fa, ga) = (factor.clone(), factor.clone());
        (
            Domain::Rectangle { x: (0.0, 1.0), y: (0.0, 1.0), tags: [FacetTag::Dirichlet, n, n, n] },
            Arc::new(move |x, t| {
                let (sx, cx, sy, cy) = ((PI * x[0]).sin(), (PI * x[0]).cos(), (PI * x[1]).sin(), (PI * x[1]).cos());
                let a = [(3.0 * mu + lam) * PI * PI * sx * sy, -(mu + lam) * PI * PI * cx * cy];
                let h = fa(t);
                [-sx * sy * t.sin() + h * a[0], h * a[1]]
            }),
            Arc::new(move |x, t| {
                let grad = smooth_grad_2d(x);
                let nrm = unit_square_normal(x);
                let s = params.traction(2, grad, nrm);
                let h = ga(t);
                [s[0] * h, s[1] * h]
            }),
            Arc::new(|x, t| [(PI * x[0]).sin() * (PI * x[1]).sin() * t.sin(), 0.0]),
            Arc::new(|x, t| [(PI * x[0]).sin() * (PI * x[1]).sin() * t.cos(), 0.0]),
            Arc::new(|x, t| {
                let g = smooth_grad_2d(x);
                [[g[0][0] * t.sin(), g[0][1] * t.sin()], [0.0, 0.0]]
            }),
        )
    };
    Ok(ProblemSpec {
        name: "mms_smooth".into(),
        domain,
        horizon,
        params,
        kernel,
        load: LoadData {
            u0: Arc::new(|_| [0.0; 2]),
            v0: if dim == 1 {
                Arc::new(|x| [(PI * x[0]).sin(), 0.0])
            } else {
                Arc::new(|x| [(PI * x[0]).sin() * (PI * x[1]).sin(), 0.0])
            },
            f: Some(f),
            g: Some(g),
        },
        exact: Some(ExactSolution { u1, u2, grad_u1: grad }),
        // weights with zero traction on the Neumann part keep the dual in H^2
        goal_weight: if dim == 1 {
            Some(Arc::new(|x| [(0.5 * PI * x[0]).sin(), 0.0]))
        } else {
            Some(Arc::new(|x| [((PI * x[0]).sin() * (PI * x[1]).sin()).powi(2), 0.0]))
        },
    })
}

fn smooth_grad_2d(x: [f64; 2]) -> [[f64; 2]; 2] {
    let (sx, cx, sy, cy) = ((PI * x[0]).sin(), (PI * x[0]).cos(), (PI * x[1]).sin(), (PI * x[1]).cos());
    [[PI * cx * sy, PI * sx * cy], [0.0, 0.0]]
}

/// Outward normal of the unit square at a boundary point (corners resolved
/// toward the vertical sides).
fn unit_square_normal(x: [f64; 2]) -> [f64; 2] {
    let tol = 1e-12;
    if x[0] > 1.0 - tol {
        [1.0, 0.0]
    } else if x[0] < tol {
        [-1.0, 0.0]
    } else if x[1] > 1.0 - tol {
        [0.0, 1.0]
    } else {
        [0.0, -1.0]
    }
}

/// Piecewise-linear time series, constant beyond its ends.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::Config("time series needs matching, nonempty columns".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("time series times must increase".into()));
        }
        Ok(TimeSeries { times, values })
    }

    /// Two numeric columns `t,value`; a non-numeric first line is a header.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed = (cols.len() == 2).then(|| (cols[0].parse::<f64>(), cols[1].parse::<f64>()));
            match parsed {
                Some((Ok(t), Ok(v))) => {
                    times.push(t);
                    values.push(v);
                }
                _ if i == 0 => continue,
                _ => return Err(Error::Config(format!("time series line {}: `{line}`", i + 1))),
            }
        }
        Self::new(times, values)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let i = self.times.partition_point(|&s| s <= t) - 1;
        let s = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        self.values[i] + s * (self.values[i + 1] - self.values[i])
    }
}

/// `cos²` bump of half-width `w` centred at `c`.
fn bump(x: f64, c: f64, w: f64) -> f64 {
    let s = (x - c) / w;
    if s.abs() >= 1.0 {
        0.0
    } else {
        (0.5 * PI * s).cos().powi(2)
    }
}

/// Time profile of the bar pulse: `sin²(2πt)` on `[0, 1/2]`.
pub fn bar_pulse(t: f64) -> f64 {
    if (0.0..0.5).contains(&t) {
        (2.0 * PI * t).sin().powi(2)
    } else {
        0.0
    }
}

/// Bar `[0,4]×[0,1]` clamped on the left with a horizontal traction pulse of
/// the given amplitude near the middle of the right edge. A time series,
/// when given, replaces the built-in pulse profile.
pub fn scenario_bar(amplitude: f64, profile: Option<TimeSeries>) -> Result<ProblemSpec> {
    let horizon = 1.0;
    let kernel = Kernel::new(KernelSpec::Prony(vec![crate::kernel::PronyTerm { gamma: 0.5, lambda: 1.0 }]), horizon)?;
    let params = ElasticParams::new(1.0, 1.0)?;
    let n = FacetTag::Neumann;
    let g: SpaceTimeFn = Arc::new(move |x, t| {
        if x[0] < 4.0 - 1e-12 {
            return [0.0; 2];
        }
        let p = profile.as_ref().map_or_else(|| bar_pulse(t), |s| s.eval(t));
        [amplitude * bump(x[1], 0.5, 0.2) * p, 0.0]
    });
    Ok(ProblemSpec {
        name: "scenario_bar".into(),
        domain: Domain::Rectangle { x: (0.0, 4.0), y: (0.0, 1.0), tags: [FacetTag::Dirichlet, n, n, n] },
        horizon,
        params,
        kernel,
        load: LoadData { u0: Arc::new(|_| [0.0; 2]), v0: Arc::new(|_| [0.0; 2]), f: None, g: Some(g) },
        exact: None,
        goal_weight: Some(Arc::new(|x| [bump(x[0], 4.0, 0.5) * bump(x[1], 0.5, 0.5), 0.0])),
    })
}

/// Problem by name: `mms_linear`, `mms_smooth`, `mms_smooth_2d`, `scenario_bar`.
pub fn by_name(name: &str, kernel: Option<KernelSpec>) -> Result<ProblemSpec> {
    let prony = || KernelSpec::Prony(vec![crate::kernel::PronyTerm { gamma: 0.4, lambda: 1.0 }]);
    match name {
        "mms_linear" => mms_linear(kernel.unwrap_or(KernelSpec::Zero)),
        "mms_smooth" => mms_smooth(kernel.unwrap_or_else(prony), 1),
        "mms_smooth_2d" => mms_smooth(kernel.unwrap_or_else(prony), 2),
        "scenario_bar" => {
            if kernel.is_some() {
                return Err(Error::Config("problem.kernel: scenario_bar has a fixed kernel".into()));
            }
            scenario_bar(1.0, None)
        }
        other => Err(Error::Config(format!("problem.name: unknown problem `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::PronyTerm;
    use approx::assert_relative_eq;

    #[test]
    fn prony_linear_traction_value() {
        let p = mms_linear(KernelSpec::Prony(vec![PronyTerm { gamma: 0.4, lambda: 1.0 }])).unwrap();
        let g = p.load.g.as_ref().unwrap()([1.0, 0.0], 1.0)[0];
        assert_relative_eq!(g / p.params.modulus(), 1.0 - 0.4 * (-1.0f64).exp(), epsilon = 1e-14);
    }

    #[test]
    fn time_series_interpolates() {
        let s = TimeSeries::from_csv("t,g\n0,0\n1,2\n").unwrap();
        assert_eq!(s.eval(0.25), 0.5);
        assert_eq!(s.eval(3.0), 2.0);
        assert!(TimeSeries::from_csv("0,1\nx,y\n").is_err());
    }
}
