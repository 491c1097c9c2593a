//! Scalar transverse fields, overlap integrals and mode decomposition.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::modes::{hermite_gauss_1d, hg_eval, Basis, BeamGeometry, ModeIndex, ModeVector};
use crate::quadrature::{gauss_legendre_on, Edge, Integrator, NodeSet, NORM_CHECK_TOLERANCE};

/// Complex scalar field on the transverse plane, given analytically.
pub trait TransverseField: Sync {
    fn value(&self, x: f64, y: f64) -> Complex64;

    /// Straight phase discontinuities carried by the field.
    fn edges(&self) -> Vec<Edge> {
        Vec::new()
    }
}

impl<F: TransverseField + ?Sized> TransverseField for &F {
    fn value(&self, x: f64, y: f64) -> Complex64 {
        (**self).value(x, y)
    }

    fn edges(&self) -> Vec<Edge> {
        (**self).edges()
    }
}

/// A single Hermite-Gauss mode.
#[derive(Debug, Clone, Copy)]
pub struct HgMode {
    pub idx: ModeIndex,
    pub geom: BeamGeometry,
}

impl TransverseField for HgMode {
    fn value(&self, x: f64, y: f64) -> Complex64 {
        hg_eval(self.idx, x, y, self.geom)
    }
}

/// Fundamental Gaussian centered at `(dx, dy)`.
#[derive(Debug, Clone, Copy)]
pub struct DisplacedGaussian {
    pub dx: f64,
    pub dy: f64,
    pub geom: BeamGeometry,
}

impl TransverseField for DisplacedGaussian {
    fn value(&self, x: f64, y: f64) -> Complex64 {
        let w0 = self.geom.w0();
        let r2 = (x - self.dx).powi(2) + (y - self.dy).powi(2);
        Complex64::new((2.0 / PI).sqrt() / w0 * (-r2 / (w0 * w0)).exp(), 0.0)
    }
}

/// Field after a step phase plate: multiplied by `e^{iπ} = -1` where the
/// signed distance along the edge normal exceeds the plate offset.
#[derive(Debug, Clone, Copy)]
pub struct PhasePlated<F> {
    pub inner: F,
    pub edge: Edge,
}

impl<F: TransverseField> TransverseField for PhasePlated<F> {
    fn value(&self, x: f64, y: f64) -> Complex64 {
        let v = self.inner.value(x, y);
        if self.edge.signed_distance(x, y) > 0.0 {
            -v
        } else {
            v
        }
    }

    fn edges(&self) -> Vec<Edge> {
        let mut e = vec![self.edge];
        e.extend(self.inner.edges());
        e
    }
}

/// Applies a step phase plate with edge normal at angle `phi` (from +y
/// toward +x) and offset `delta_pp` along that normal.
pub fn phase_plate_apply<F: TransverseField>(field: F, phi: f64, delta_pp: f64) -> PhasePlated<F> {
    PhasePlated { inner: field, edge: Edge { phi, offset: delta_pp } }
}

/// `∬ conj(f) g dx dy` by tensor Gauss-Legendre quadrature.
///
/// The rule is split along any phase step either field carries.
pub fn inner_product(integrator: &Integrator, f: &dyn TransverseField, g: &dyn TransverseField) -> Complex64 {
    let mut edges = f.edges();
    edges.extend(g.edges());
    let nodes = integrator.nodes(&edges);
    (0..nodes.len())
        .map(|i| nodes.w[i] * f.value(nodes.x[i], nodes.y[i]).conj() * g.value(nodes.x[i], nodes.y[i]))
        .sum()
}

/// `⟨HG_j | g⟩` for every mode of `basis` in a single sweep over the nodes.
pub fn project(integrator: &Integrator, basis: &Basis, g: &dyn TransverseField) -> Result<Vec<Complex64>> {
    let max_order = basis.max_m().max(basis.max_n());
    integrator.check_order(max_order)?;
    let nodes = integrator.nodes(&g.edges());
    Ok(project_on_nodes(&nodes, integrator.geom(), basis, |x, y| g.value(x, y)))
}

pub(crate) fn project_on_nodes(
    nodes: &NodeSet,
    geom: BeamGeometry,
    basis: &Basis,
    g: impl Fn(f64, f64) -> Complex64,
) -> Vec<Complex64> {
    let (max_m, max_n) = (basis.max_m(), basis.max_n());
    let mut ux = Vec::with_capacity(max_m as usize + 1);
    let mut uy = Vec::with_capacity(max_n as usize + 1);
    let mut acc = vec![Complex64::new(0.0, 0.0); basis.len()];
    for i in 0..nodes.len() {
        let gv = g(nodes.x[i], nodes.y[i]) * nodes.w[i];
        if gv.re == 0.0 && gv.im == 0.0 {
            continue;
        }
        hermite_gauss_1d(max_m, nodes.x[i], geom.w0(), &mut ux);
        hermite_gauss_1d(max_n, nodes.y[i], geom.w0(), &mut uy);
        for (a, idx) in acc.iter_mut().zip(basis.modes()) {
            // modes are real
            *a += gv * (ux[idx.m as usize] * uy[idx.n as usize]);
        }
    }
    acc
}

/// Result of projecting a field onto a truncated basis.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub vector: ModeVector,
    /// Field power not captured by the basis, `‖field‖² − ‖vector‖²`.
    pub residual_power: f64,
}

/// Field sampled on a rectangular grid with per-axis quadrature weights.
#[derive(Debug, Clone)]
pub struct ScalarField {
    xs: Vec<f64>,
    ys: Vec<f64>,
    wx: Vec<f64>,
    wy: Vec<f64>,
    /// Row-major over `(y, x)`: `values[j * xs.len() + i]` is at `(xs[i], ys[j])`.
    values: Vec<Complex64>,
}

impl ScalarField {
    /// Samples on a uniform grid with trapezoid weights.
    pub fn from_samples(xs: Vec<f64>, ys: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        validate_axis(&xs, "x")?;
        validate_axis(&ys, "y")?;
        if values.len() != xs.len() * ys.len() {
            return Err(Error::DimensionMismatch { expected: xs.len() * ys.len(), actual: values.len() });
        }
        let wx = trapezoid_weights(&xs);
        let wy = trapezoid_weights(&ys);
        Ok(ScalarField { xs, ys, wx, wy, values })
    }

    /// Samples `field` on a Gauss-Legendre grid over `±half_extent·w0`.
    pub fn sample(field: &dyn TransverseField, geom: BeamGeometry, points_per_axis: usize, half_extent: f64) -> Result<Self> {
        if points_per_axis < 2 {
            return Err(Error::invalid("need at least 2 samples per axis"));
        }
        let l = half_extent * geom.w0();
        let (xs, wx) = gauss_legendre_on(-l, l, points_per_axis);
        let (ys, wy) = (xs.clone(), wx.clone());
        let mut values = Vec::with_capacity(xs.len() * ys.len());
        for &y in &ys {
            for &x in &xs {
                values.push(field.value(x, y));
            }
        }
        Ok(ScalarField { xs, ys, wx, wy, values })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Same step phase plate as [`phase_plate_apply`], on the samples.
    pub fn apply_phase_plate(&self, phi: f64, delta_pp: f64) -> ScalarField {
        let edge = Edge { phi, offset: delta_pp };
        let mut out = self.clone();
        for (j, &y) in self.ys.iter().enumerate() {
            for (i, &x) in self.xs.iter().enumerate() {
                if edge.signed_distance(x, y) > 0.0 {
                    out.values[j * self.xs.len() + i] = -self.values[j * self.xs.len() + i];
                }
            }
        }
        out
    }

    pub fn norm_sqr(&self) -> f64 {
        self.weighted().map(|(w, _, _, v)| w * v.norm_sqr()).sum()
    }

    /// `∬ conj(self) g` with the grid's own weights.
    pub fn inner_product(&self, g: &dyn TransverseField) -> Complex64 {
        self.weighted().map(|(w, x, y, v)| w * v.conj() * g.value(x, y)).sum()
    }

    /// `∬ conj(self) other` for two fields on the same grid.
    pub fn inner_product_sampled(&self, other: &ScalarField) -> Result<Complex64> {
        if self.xs != other.xs || self.ys != other.ys {
            return Err(Error::invalid("sampled fields live on different grids"));
        }
        Ok(self
            .weighted()
            .zip(&other.values)
            .map(|((w, _, _, a), b)| w * a.conj() * b)
            .sum())
    }

    fn weighted(&self) -> impl Iterator<Item = (f64, f64, f64, Complex64)> + '_ {
        let nx = self.xs.len();
        self.values.iter().enumerate().map(move |(k, &v)| {
            let (i, j) = (k % nx, k / nx);
            (self.wx[i] * self.wy[j], self.xs[i], self.ys[j], v)
        })
    }

    fn covers(&self, half_width: f64) -> bool {
        let ok = |a: &[f64]| a[0] <= -half_width && a[a.len() - 1] >= half_width;
        ok(&self.xs) && ok(&self.ys)
    }

    /// Norm of `u_k` on each axis for `k ≤ order`; worst deviation from one.
    fn self_check(&self, geom: BeamGeometry, order: u32) -> Result<()> {
        let mut buf = Vec::new();
        let mut worst = (0, 0.0f64);
        for (nodes, weights) in [(&self.xs, &self.wx), (&self.ys, &self.wy)] {
            let mut norms = vec![0.0; order as usize + 1];
            for (&x, &w) in nodes.iter().zip(weights.iter()) {
                hermite_gauss_1d(order, x, geom.w0(), &mut buf);
                for (k, u) in buf.iter().enumerate() {
                    norms[k] += w * u * u;
                }
            }
            for (k, n) in norms.iter().enumerate() {
                let d = (n - 1.0).abs();
                if d > worst.1 {
                    worst = (k, d);
                }
            }
        }
        if worst.1 > NORM_CHECK_TOLERANCE {
            return Err(Error::GridTooCoarse { order: worst.0, deviation: worst.1 });
        }
        Ok(())
    }
}

fn validate_axis(a: &[f64], name: &str) -> Result<()> {
    if a.len() < 2 {
        return Err(Error::invalid(format!("{name} axis needs at least 2 samples")));
    }
    if !a.windows(2).all(|p| p[0] < p[1]) {
        return Err(Error::invalid(format!("{name} axis must be strictly increasing")));
    }
    Ok(())
}

fn trapezoid_weights(a: &[f64]) -> Vec<f64> {
    let n = a.len();
    (0..n)
        .map(|i| {
            let left = if i > 0 { a[i] - a[i - 1] } else { 0.0 };
            let right = if i + 1 < n { a[i + 1] - a[i] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

/// Projects a sampled field onto `basis`; amplitude `j` is `⟨HG_j | field⟩`.
pub fn decompose(field: &ScalarField, basis: &Basis, geom: BeamGeometry) -> Result<Decomposition> {
    if !field.covers(4.0 * geom.w0()) {
        return Err(Error::invalid("sampled field must extend to at least ±4·w0 on both axes"));
    }
    field.self_check(geom, basis.max_m().max(basis.max_n()))?;
    let amplitudes: Vec<Complex64> = basis
        .modes()
        .iter()
        .map(|&idx| field.inner_product(&HgMode { idx, geom }).conj())
        .collect();
    let vector = ModeVector::new(basis.clone(), amplitudes, geom)?;
    let residual_power = field.norm_sqr() - vector.norm_sqr();
    Ok(Decomposition { vector, residual_power })
}

/// Analytic-field counterpart of [`decompose`].
pub fn decompose_field(integrator: &Integrator, field: &dyn TransverseField, basis: &Basis) -> Result<Decomposition> {
    let amplitudes = project(integrator, basis, field)?;
    let norm = inner_product(integrator, field, field).re;
    let vector = ModeVector::new(basis.clone(), amplitudes, integrator.geom())?;
    let residual_power = norm - vector.norm_sqr();
    Ok(Decomposition { vector, residual_power })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::QuadratureSpec;

    fn setup(w0: f64) -> (BeamGeometry, Integrator) {
        let g = BeamGeometry::new(w0).unwrap();
        (g, Integrator::with_default(g).unwrap())
    }

    #[test]
    fn orthonormal_low_orders() {
        let (g, integ) = setup(1.0);
        let basis = Basis::up_to_order(3);
        for &i in basis.modes() {
            for &j in basis.modes() {
                let ip = inner_product(&integ, &HgMode { idx: i, geom: g }, &HgMode { idx: j, geom: g });
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((ip - expect).norm() < 1e-6, "{i} {j} {ip}");
            }
        }
    }

    #[test]
    fn conjugate_symmetry() {
        let (g, integ) = setup(0.8e-3);
        let f = phase_plate_apply(DisplacedGaussian { dx: 0.1e-3, dy: -0.2e-3, geom: g }, 0.3, 0.05e-3);
        let h = HgMode { idx: ModeIndex::new(1, 1), geom: g };
        let a = inner_product(&integ, &f, &h);
        let b = inner_product(&integ, &h, &f);
        assert!((a - b.conj()).norm() < 1e-14);
    }

    #[test]
    fn shifted_gaussian_overlap_closed_form() {
        let (g, integ) = setup(1.0);
        let shifted = DisplacedGaussian { dx: 1.0, dy: 0.0, geom: g };
        let centered = DisplacedGaussian { dx: 0.0, dy: 0.0, geom: g };
        let ip = inner_product(&integ, &shifted, &centered);
        assert!((ip.re - (-0.5f64).exp()).abs() < 1e-12);
        assert!((ip.re - 0.60653).abs() < 1e-5);
    }

    #[test]
    fn decompose_basis_element_and_offset_gaussian() {
        let (g, integ) = setup(1.0);
        let basis = Basis::lowest_three();
        let d = decompose_field(&integ, &HgMode { idx: ModeIndex::HG10, geom: g }, &basis).unwrap();
        let a = d.vector.amplitudes();
        assert!((a[0].norm()) < 1e-6 && (a[1].re - 1.0).abs() < 1e-6 && a[2].norm() < 1e-6);

        let d = decompose_field(&integ, &DisplacedGaussian { dx: 0.0, dy: 0.0, geom: g }, &basis).unwrap();
        assert!((d.vector.amplitudes()[0].re - 1.0).abs() < 1e-10);

        let d = decompose_field(&integ, &DisplacedGaussian { dx: 0.5, dy: 0.0, geom: g }, &basis).unwrap();
        let expect = 0.5 * (-0.125f64).exp();
        assert!((d.vector.amplitudes()[1].re - expect).abs() < 1e-10);
        assert!((d.vector.amplitudes()[1].re - 0.4412).abs() < 1e-4);
        assert!(d.residual_power > 0.0);
    }

    #[test]
    fn sampled_decomposition_matches_analytic() {
        let g = BeamGeometry::new(1.0).unwrap();
        let field = DisplacedGaussian { dx: 0.3, dy: -0.2, geom: g };
        let sampled = ScalarField::sample(&field, g, 120, 6.0).unwrap();
        let d = decompose(&sampled, &Basis::up_to_order(2), g).unwrap();
        assert!(d.vector.norm_sqr() <= 1.0 + 1e-6);
        let integ = Integrator::with_default(g).unwrap();
        let reference = decompose_field(&integ, &field, &Basis::up_to_order(2)).unwrap();
        assert!(d.vector.distance_up_to_phase(&reference.vector) < 1e-10);
    }

    #[test]
    fn sampled_field_must_cover_four_waists() {
        let g = BeamGeometry::new(1.0).unwrap();
        let field = DisplacedGaussian { dx: 0.0, dy: 0.0, geom: g };
        let sampled = ScalarField::sample(&field, g, 100, 3.0).unwrap();
        assert!(decompose(&sampled, &Basis::lowest_three(), g).is_err());
    }

    #[test]
    fn coarse_trapezoid_grid_fails_self_check() {
        let g = BeamGeometry::new(1.0).unwrap();
        let xs: Vec<f64> = (0..9).map(|i| -6.0 + 1.5 * i as f64).collect();
        let values = vec![Complex64::new(0.0, 0.0); 81];
        let f = ScalarField::from_samples(xs.clone(), xs, values).unwrap();
        assert!(matches!(decompose(&f, &Basis::lowest_three(), g), Err(Error::GridTooCoarse { .. })));
    }

    #[test]
    fn from_samples_rejects_unsorted_axes() {
        let xs = vec![0.0, 2.0, 1.0];
        let ys = vec![0.0, 1.0, 2.0];
        assert!(ScalarField::from_samples(xs, ys, vec![Complex64::new(0.0, 0.0); 9]).is_err());
    }

    #[test]
    fn plate_far_away_is_identity_and_double_plate_cancels() {
        let (g, integ) = setup(1.0);
        let base = HgMode { idx: ModeIndex::new(1, 1), geom: g };
        let far = phase_plate_apply(base, 0.7, 6.0);
        let ip = inner_product(&integ, &base, &far);
        assert!((ip.re - 1.0).abs() < 1e-6);

        let twice = phase_plate_apply(phase_plate_apply(base, 0.7, 0.2), 0.7, 0.2);
        for &(x, y) in &[(0.3, 0.2), (-1.0, 0.5), (0.9, 0.9)] {
            assert_eq!(twice.value(x, y), base.value(x, y));
        }
    }

    #[test]
    fn centered_plate_kills_fundamental_overlap() {
        let (g, integ) = setup(1.0);
        let gauss = DisplacedGaussian { dx: 0.0, dy: 0.0, geom: g };
        for phi in [0.0, 0.4, 1.3, 2.9] {
            let plated = phase_plate_apply(gauss, phi, 0.0);
            assert!(inner_product(&integ, &gauss, &plated).norm() < 1e-6);
            // unitary: norm preserved
            assert!((inner_product(&integ, &plated, &plated).re - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn quadrature_converges_under_refinement() {
        let g = BeamGeometry::new(1.0).unwrap();
        let coarse = Integrator::with_default(g).unwrap();
        let fine = Integrator::new(QuadratureSpec { points_per_axis: 400, half_extent: 6.0 }, g).unwrap();
        let f = phase_plate_apply(DisplacedGaussian { dx: 0.2, dy: 0.1, geom: g }, 0.9, 0.3);
        let basis = Basis::up_to_order(3);
        let a = project(&coarse, &basis, &f).unwrap();
        let b = project(&fine, &basis, &f).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-7);
        }
    }
}
