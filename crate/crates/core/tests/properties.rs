use std::f64::consts::{FRAC_PI_2, PI};

use fiber_entangle::analyzer::{analyzer_vector, AnalyzerSetting};
use fiber_entangle::bell::{Chsh, ChshSettings};
use fiber_entangle::channel::{apply_channel_arm_a, apply_channel_to_density, FiberChannel};
use fiber_entangle::measurement::{coincidence_probability, DetectionConfig};
use fiber_entangle::modes::{Basis, BeamGeometry, ModeIndex, ModeVector};
use fiber_entangle::quadrature::Integrator;
use fiber_entangle::state::{partial_trace, Arm, DensityOperator, TwoPhotonState};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use std::sync::OnceLock;

const W0: f64 = 0.8e-3;

fn geom() -> BeamGeometry {
    BeamGeometry::new(W0).unwrap()
}

fn integrator() -> &'static Integrator {
    static I: OnceLock<Integrator> = OnceLock::new();
    I.get_or_init(|| Integrator::with_default(geom()).unwrap())
}

fn state_from(basis: &Basis, parts: &[(f64, f64)]) -> Option<TwoPhotonState> {
    let d = basis.len();
    let m = DMatrix::from_iterator(d, d, parts.iter().take(d * d).map(|&(re, im)| Complex64::new(re, im)));
    TwoPhotonState::new(basis.clone(), m).ok()
}

fn coeffs(d: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), d * d)
}

fn channel_on(basis: &Basis) -> impl Strategy<Value = FiberChannel> {
    let d = basis.len();
    (
        prop::collection::vec(0.01..=1.0f64, d),
        -PI..PI,
        0.0..=1.0f64,
        0.0..FRAC_PI_2,
        0.0..=1.0f64,
    )
        .prop_map(|(t, theta_rot, mix, mix_axis, gamma)| FiberChannel { length_m: 0.3, t, theta_rot, mix, mix_axis, gamma })
}

fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

fn pair_sub(v: &ModeVector) -> [Complex64; 2] {
    [v.amplitude(ModeIndex::HG10).unwrap(), v.amplitude(ModeIndex::HG01).unwrap()]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn analyzer_norm_is_bounded(phi in -PI..PI, dpp in -2.0..2.0f64, dsmf in -2.0..2.0f64) {
        let s = AnalyzerSetting { delta_pp: dpp * W0, delta_smf: dsmf * W0, ..AnalyzerSetting::centered(phi, geom()) };
        let v = analyzer_vector(&s, &Basis::up_to_order(2), integrator()).unwrap();
        prop_assert!(v.norm_sqr() <= 1.0 + 1e-6);
    }

    #[test]
    fn analyzer_rotation_equivariance(phi in -PI..PI, delta in -PI..PI, dpp in -1.0..1.0f64, dsmf in -1.0..1.0f64) {
        let basis = Basis::lowest_three();
        let at = |p: f64| {
            let s = AnalyzerSetting { delta_pp: dpp * W0, delta_smf: dsmf * W0, ..AnalyzerSetting::centered(p, geom()) };
            analyzer_vector(&s, &basis, integrator()).unwrap()
        };
        let (v, w) = (at(phi), at(phi + delta));
        let [v10, v01] = pair_sub(&v);
        let (c, s) = (delta.cos(), delta.sin());
        let expect = [v10 * c + v01 * s, v01 * c - v10 * s];
        let got = pair_sub(&w);
        prop_assert!((got[0] - expect[0]).norm() < 1e-6 && (got[1] - expect[1]).norm() < 1e-6);
        prop_assert!((w.amplitude(ModeIndex::HG00).unwrap() - v.amplitude(ModeIndex::HG00).unwrap()).norm() < 1e-6);
    }

    #[test]
    fn channel_output_is_a_density_operator(
        (ch, parts, big) in prop_oneof![Just(false), Just(true)].prop_flat_map(|big| {
            let basis = if big { Basis::up_to_order(2) } else { Basis::lowest_three() };
            (channel_on(&basis), coeffs(basis.len()), Just(big))
        })
    ) {
        let basis = if big { Basis::up_to_order(2) } else { Basis::lowest_three() };
        let Some(state) = state_from(&basis, &parts) else { return Ok(()) };
        let rho = apply_channel_arm_a(&state, &ch).unwrap();
        prop_assert!(rho.hermiticity_error() < 1e-10);
        prop_assert!(rho.min_eigenvalue() >= -1e-10);
        let tr = rho.trace();
        prop_assert!(tr > 0.0 && tr <= 1.0 + 1e-12);
    }

    #[test]
    fn trace_is_weighted_transmission(ch in channel_on(&Basis::lowest_three()), parts in coeffs(3)) {
        let basis = Basis::lowest_three();
        let Some(state) = state_from(&basis, &parts) else { return Ok(()) };
        let pops = partial_trace(&DensityOperator::from_pure(&state), Arm::A);
        let expect: f64 = (0..3).map(|j| ch.t[j] * ch.t[j] * pops[(j, j)].re).sum();
        let rho = apply_channel_arm_a(&state, &ch).unwrap();
        prop_assert!((rho.trace() - expect).abs() < 1e-12);
    }

    #[test]
    fn rotations_compose(t1 in -PI..PI, t2 in -PI..PI, parts in coeffs(3)) {
        let basis = Basis::lowest_three();
        let Some(state) = state_from(&basis, &parts) else { return Ok(()) };
        let rot = |t: f64| FiberChannel { theta_rot: t, ..FiberChannel::ideal(&basis) };
        let twice = apply_channel_to_density(&apply_channel_arm_a(&state, &rot(t1)).unwrap(), &rot(t2)).unwrap();
        let once = apply_channel_arm_a(&state, &rot(t1 + t2)).unwrap();
        prop_assert!(max_abs(&(twice.matrix() - once.matrix())) < 1e-10);
    }

    #[test]
    fn gamma_leaves_pair_only_states_alone(gamma in 0.0..=1.0f64, parts in coeffs(3)) {
        let basis = Basis::lowest_three();
        let mut parts = parts;
        // zero every coefficient touching HG00 on arm A
        for k in 0..3 {
            parts[3 * k] = (0.0, 0.0);
        }
        let Some(state) = state_from(&basis, &parts) else { return Ok(()) };
        let ch = FiberChannel { gamma, ..FiberChannel::ideal(&basis) };
        let rho = apply_channel_arm_a(&state, &ch).unwrap();
        prop_assert!(max_abs(&(rho.matrix() - DensityOperator::from_pure(&state).matrix())) < 1e-12);
    }

    #[test]
    fn rotation_and_mix_leave_fundamental_states_alone(theta in -PI..PI, mix in 0.0..=1.0f64, axis in 0.0..FRAC_PI_2, b in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 3)) {
        let basis = Basis::lowest_three();
        let mut parts = vec![(0.0, 0.0); 9];
        // column-major: arm A index 0 for every arm B index
        for k in 0..3 {
            parts[3 * k] = b[k];
        }
        let Some(state) = state_from(&basis, &parts) else { return Ok(()) };
        let ch = FiberChannel { theta_rot: theta, mix, mix_axis: axis, ..FiberChannel::ideal(&basis) };
        let rho = apply_channel_arm_a(&state, &ch).unwrap();
        prop_assert!(max_abs(&(rho.matrix() - DensityOperator::from_pure(&state).matrix())) < 1e-12);
    }

    #[test]
    fn tsirelson_bound(ch in channel_on(&Basis::lowest_three()), parts in coeffs(3), angles in prop::array::uniform4(-PI..PI)) {
        let basis = Basis::lowest_three();
        let Some(state) = state_from(&basis, &parts) else { return Ok(()) };
        let rho = apply_channel_arm_a(&state, &ch).unwrap();
        let chsh = Chsh::new(&rho, integrator(), DetectionConfig::default(), true).unwrap();
        let settings = ChshSettings { alpha1: angles[0], alpha2: angles[1], beta1: angles[2], beta2: angles[3] };
        if let Ok(r) = chsh.s_parameter(&settings, 0) {
            prop_assert!(r.s.abs() <= 2.0 * 2f64.sqrt() + 1e-8);
            for e in r.e_values {
                prop_assert!(e.abs() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn correlations_are_covariant_under_arm_a_rotation(theta in -PI..PI, alpha in -PI..PI, beta in -PI..PI, parts in coeffs(3)) {
        let basis = Basis::lowest_three();
        let Some(state) = state_from(&basis, &parts) else { return Ok(()) };
        let plain = apply_channel_arm_a(&state, &FiberChannel::ideal(&basis)).unwrap();
        let turned = apply_channel_arm_a(&state, &FiberChannel { theta_rot: theta, ..FiberChannel::ideal(&basis) }).unwrap();
        let c0 = Chsh::new(&plain, integrator(), DetectionConfig::default(), true).unwrap();
        let c1 = Chsh::new(&turned, integrator(), DetectionConfig::default(), true).unwrap();
        if let (Ok(e0), Ok(e1)) = (c0.e_value(alpha, beta), c1.e_value(alpha - theta, beta)) {
            prop_assert!((e0 - e1).abs() < 1e-9, "{e0} vs {e1}");
        }
    }

    #[test]
    fn probability_sum_rule(ch in channel_on(&Basis::lowest_three()), parts in coeffs(3)) {
        let basis = Basis::lowest_three();
        let Some(state) = state_from(&basis, &parts) else { return Ok(()) };
        let rho = apply_channel_arm_a(&state, &ch).unwrap();
        let unit = |j: usize| {
            let mut a = [0.0; 3];
            a[j] = 1.0;
            ModeVector::from_real(basis.clone(), &a, geom()).unwrap()
        };
        let mut total = 0.0;
        for j in 0..3 {
            for k in 0..3 {
                total += coincidence_probability(&rho, &unit(j), &unit(k)).unwrap();
            }
        }
        prop_assert!((total - rho.trace()).abs() < 1e-10);
    }

    #[test]
    fn probability_scales_with_analyzer(re in -2.0..2.0f64, im in -2.0..2.0f64, phi in -PI..PI) {
        let basis = Basis::lowest_three();
        let state = fiber_entangle::state::uniform_spdc_state(&basis).unwrap();
        let rho = DensityOperator::from_pure(&state);
        let a = analyzer_vector(&AnalyzerSetting::centered(phi, geom()), &basis, integrator()).unwrap();
        let b = analyzer_vector(&AnalyzerSetting::centered(0.3, geom()), &basis, integrator()).unwrap();
        let c = Complex64::new(re, im);
        let p = coincidence_probability(&rho, &a, &b).unwrap();
        let q = coincidence_probability(&rho, &a.scaled(c), &b).unwrap();
        prop_assert!((q - c.norm_sqr() * p).abs() < 1e-12 * (1.0 + q.abs()));
    }
}
