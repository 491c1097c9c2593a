//! Tensor-product Gauss-Legendre rules on the transverse plane.
//!
//! Integrals are taken over a square of half-width `half_extent · w0`. When
//! an integrand carries a straight phase step, the rule is built in a frame
//! rotated so that one axis is the edge normal, and that axis is split at the
//! edge so each panel sees a smooth integrand.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modes::{hermite_gauss_1d, BeamGeometry};

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss-Legendre rule mapped onto `[a, b]`.
pub fn gauss_legendre_on(a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (x.iter().map(|t| mid + half * t).collect(), w.iter().map(|v| v * half).collect())
}

/// Resolution of the default transverse quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    /// Total Gauss-Legendre points along each axis (shared between panels).
    pub points_per_axis: usize,
    /// Half-width of the integration square in units of `w0`.
    pub half_extent: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { points_per_axis: 200, half_extent: 6.0 }
    }
}

/// Straight phase step. The unit normal is `(sin φ, cos φ)`, i.e. `φ` is
/// measured from the +y axis toward +x; the step sits at signed distance
/// `offset` along that normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub phi: f64,
    pub offset: f64,
}

impl Edge {
    pub fn normal(&self) -> (f64, f64) {
        (self.phi.sin(), self.phi.cos())
    }

    /// Signed distance of `(x, y)` from the edge along its normal.
    pub fn signed_distance(&self, x: f64, y: f64) -> f64 {
        let (nx, ny) = self.normal();
        nx * x + ny * y - self.offset
    }
}

/// Flattened two-dimensional quadrature nodes in lab coordinates.
#[derive(Debug, Clone)]
pub struct NodeSet {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
}

impl NodeSet {
    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// Validated quadrature rule for one beam geometry.
#[derive(Debug, Clone)]
pub struct Integrator {
    spec: QuadratureSpec,
    geom: BeamGeometry,
    axis_nodes: Vec<f64>,
    axis_weights: Vec<f64>,
}

/// Maximum tolerated deviation of a mode norm from one.
pub const NORM_CHECK_TOLERANCE: f64 = 1e-4;

/// Mode order probed when an integrator is constructed.
pub const DEFAULT_CHECK_ORDER: u32 = 3;

impl Integrator {
    pub fn new(spec: QuadratureSpec, geom: BeamGeometry) -> Result<Self> {
        if spec.points_per_axis < 2 {
            return Err(Error::invalid("quadrature needs at least 2 points per axis"));
        }
        if !(spec.half_extent.is_finite() && spec.half_extent > 0.0) {
            return Err(Error::invalid("quadrature half extent must be positive"));
        }
        let l = spec.half_extent * geom.w0();
        let (axis_nodes, axis_weights) = gauss_legendre_on(-l, l, spec.points_per_axis);
        let integrator = Integrator { spec, geom, axis_nodes, axis_weights };
        integrator.check_order(DEFAULT_CHECK_ORDER)?;
        Ok(integrator)
    }

    pub fn with_default(geom: BeamGeometry) -> Result<Self> {
        Self::new(QuadratureSpec::default(), geom)
    }

    pub fn spec(&self) -> QuadratureSpec {
        self.spec
    }

    pub fn geom(&self) -> BeamGeometry {
        self.geom
    }

    /// Self-consistency check: `HG_{k,k}` for every `k ≤ order` must come out
    /// with unit norm to within [`NORM_CHECK_TOLERANCE`].
    pub fn check_order(&self, order: u32) -> Result<()> {
        let mut norms = vec![0.0; order as usize + 1];
        let mut buf = Vec::new();
        for (&x, &w) in self.axis_nodes.iter().zip(&self.axis_weights) {
            hermite_gauss_1d(order, x, self.geom.w0(), &mut buf);
            for (k, u) in buf.iter().enumerate() {
                norms[k] += w * u * u;
            }
        }
        for (k, n1) in norms.iter().enumerate() {
            // the 2-D norm of HG_{k,k} factorizes
            let deviation = (n1 * n1 - 1.0).abs();
            if deviation > NORM_CHECK_TOLERANCE {
                return Err(Error::GridTooCoarse { order: k, deviation });
            }
        }
        Ok(())
    }

    /// Nodes for an integrand whose discontinuities are `edges`.
    ///
    /// The frame follows the first edge; every edge parallel to it splits the
    /// normal axis. Non-parallel edges are integrated across unsplit.
    pub fn nodes(&self, edges: &[Edge]) -> NodeSet {
        let l = self.spec.half_extent * self.geom.w0();
        let n = self.spec.points_per_axis;
        let Some(first) = edges.first() else {
            return self.tensor(&self.axis_nodes, &self.axis_weights, &self.axis_nodes, &self.axis_weights, 0.0);
        };
        let mut cuts: Vec<f64> = edges
            .iter()
            .filter_map(|e| {
                let d = (e.phi - first.phi).rem_euclid(std::f64::consts::PI);
                if d < 1e-12 || std::f64::consts::PI - d < 1e-12 {
                    // antiparallel edges flip the sign of the offset
                    let same = (e.phi - first.phi).rem_euclid(2.0 * std::f64::consts::PI);
                    let sign = if same < 1e-12 || 2.0 * std::f64::consts::PI - same < 1e-12 { 1.0 } else { -1.0 };
                    Some(sign * e.offset)
                } else {
                    None
                }
            })
            .filter(|&c| c > -l && c < l)
            .collect();
        cuts.sort_by(|a, b| a.total_cmp(b));
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15 * l);

        let mut breaks = vec![-l];
        breaks.extend(cuts);
        breaks.push(l);
        let panels = breaks.len() - 1;
        let per_panel = n.div_ceil(panels).max(2);
        let mut un = Vec::with_capacity(per_panel * panels);
        let mut uw = Vec::with_capacity(per_panel * panels);
        for pair in breaks.windows(2) {
            let (x, w) = gauss_legendre_on(pair[0], pair[1], per_panel);
            un.extend(x);
            uw.extend(w);
        }
        self.tensor(&un, &uw, &self.axis_nodes, &self.axis_weights, first.phi)
    }

    /// Tensor product in the frame whose first axis is `(sin φ, cos φ)` and
    /// second axis `(cos φ, -sin φ)`.
    fn tensor(&self, un: &[f64], uw: &[f64], vn: &[f64], vw: &[f64], phi: f64) -> NodeSet {
        let (s, c) = phi.sin_cos();
        let len = un.len() * vn.len();
        let mut set = NodeSet { x: Vec::with_capacity(len), y: Vec::with_capacity(len), w: Vec::with_capacity(len) };
        for (&u, &wu) in un.iter().zip(uw) {
            for (&v, &wv) in vn.iter().zip(vw) {
                set.x.push(u * s + v * c);
                set.y.push(u * c - v * s);
                set.w.push(wu * wv);
            }
        }
        set
    }

    /// One-dimensional axis nodes and weights on `[-L, L]`.
    pub fn axis_rule(&self) -> (&[f64], &[f64]) {
        (&self.axis_nodes, &self.axis_weights)
    }
}
