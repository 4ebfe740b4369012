use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use sigmafluid::catalog::load_case;
use sigmafluid::energy_stress::{to_f64, Rational};
use sigmafluid::fluid_equations::{euler_residual, FluidState};
use sigmafluid::geometry::field::Field;
use sigmafluid::reductions::*;

fn r(n: i64, d: i64) -> Rational {
    Rational::new(n, d)
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn interior(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo));
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

#[test]
fn closed_forms_satisfy_their_equations() {
    let cases = [
        (AnsatzFamily::So3Spherical, r(1, 1), interior(0.0, 1.0, 41)),
        (AnsatzFamily::So3Spherical, r(2, 3), interior(0.0, 1.0, 41)),
        (AnsatzFamily::So2Cylindrical, r(1, 1), interior(-1.0, 1.0, 41)),
        (AnsatzFamily::MorawetzLog, r(2, 3), interior(-3.0, 3.0, 41)),
        (AnsatzFamily::CorotationalSphere, r(1, 1), interior(0.0, 1.0, 41)),
    ];
    for (family, k, zs) in cases {
        let ode = reduce(&EquivariantAnsatz::new(family, k)).unwrap();
        for c in [0.5, 1.0, 2.0] {
            for &z in &zs {
                let (f, df, d2f) = closed_form_derivatives(family, z, c).unwrap();
                let res = ode.residual(z, f, df, d2f);
                assert!(res.abs() < 1e-9, "{family:?} C={c} z={z}: {res:e}");
            }
        }
    }
}

#[test]
fn so3_displayed_coefficients() {
    let ode = reduce(&EquivariantAnsatz::new(AnsatzFamily::So3Spherical, r(1, 1))).unwrap();
    // residual is linear in f″ with coefficient f²ζ(1−ζ²)
    let (z, f, df) = (0.4, 0.7, 1.3);
    let a = ode.residual(z, f, df, 0.0);
    let b = ode.residual(z, f, df, 1.0);
    assert_abs_diff_eq!(b - a, f * f * z * (1.0 - z * z), epsilon = 1e-14);
    assert_abs_diff_eq!(a, 2.0 * df * df * f * z * (1.0 - z * z) - 2.0 * df * f * f * (1.0 + z * z), epsilon = 1e-14);
    // rhs solves the residual for f″
    let d2f = ode.derivative(z, f, df);
    assert!(ode.residual(z, f, df, d2f).abs() < 1e-14);
}

#[test]
fn morawetz_log_equation_is_log_derivative() {
    let ode = reduce(&EquivariantAnsatz::new(AnsatzFamily::MorawetzLog, r(2, 3))).unwrap();
    // (ln f′f²)′ + 3 for f = 2e^{−u}
    for u in [-1.0, 0.0, 0.7] {
        let (f, df, d2f) = closed_form_derivatives(AnsatzFamily::MorawetzLog, u, 2.0).unwrap();
        assert!(ode.residual(u, f, df, d2f).abs() < 1e-12);
    }
}

#[test]
fn closed_form_boundary_values() {
    assert_eq!(closed_form_profile(AnsatzFamily::So3Spherical, 0.0, 1.0).unwrap(), 0.0);
    assert_eq!(closed_form_profile(AnsatzFamily::So2Cylindrical, 0.0, 1.0).unwrap(), 0.0);
    assert!(closed_form_profile(AnsatzFamily::So2Cylindrical, 1.0, 1.0).is_err());
    assert!(closed_form_profile(AnsatzFamily::So3Spherical, -0.1, 1.0).is_err());
    // near-origin slope C(4/3)^{1/3}
    let z = 1e-3;
    let f = closed_form_profile(AnsatzFamily::So3Spherical, z, 2.0).unwrap();
    assert_abs_diff_eq!(f / z, 2.0 * (4.0f64 / 3.0).cbrt(), epsilon = 1e-6);
}

#[test]
fn linear_profile_is_exact() {
    let ode = ProfileODE::custom(AnsatzFamily::So2Cylindrical, 2, |_, _, _| 0.0, vec![]);
    for opts in [
        IntegratorOptions::default(),
        IntegratorOptions {
            method: Method::Rk4 { step: 0.01 },
            ..IntegratorOptions::default()
        },
    ] {
        let run = integrate_profile(&ode, (0.0, 0.0, 1.0), 1.0, &opts).unwrap();
        for z in [0.1, 0.37, 0.5, 1.0] {
            let (f, df) = run.evaluate(z).unwrap();
            assert_abs_diff_eq!(f, z, epsilon = 1e-12);
            assert_abs_diff_eq!(df, 1.0, epsilon = 1e-12);
        }
    }
}

#[test]
fn so2_from_origin_matches_arctanh() {
    let ode = reduce(&EquivariantAnsatz::new(AnsatzFamily::So2Cylindrical, r(1, 1))).unwrap();
    let run = integrate_profile(&ode, (0.0, 0.0, 1.0), 0.9, &IntegratorOptions::default()).unwrap();
    let mut worst = 0.0f64;
    for i in 0..=80 {
        let z = 0.9 * i as f64 / 80.0;
        worst = worst.max((run.evaluate(z).unwrap().0 - z.atanh()).abs());
    }
    assert!(worst < 1e-6, "{worst:e}");
}

#[test]
fn so3_seeded_integration_matches_closed_form() {
    let t = std::time::Instant::now();
    let rows = cross_validate(AnsatzFamily::So3Spherical, r(1, 1), 1.0, 0.1, 0.9, 161, &IntegratorOptions::default()).unwrap();
    let worst = rows.iter().map(|r| r.error).fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst:e}");
    assert!(t.elapsed().as_secs_f64() < 1.0);
    let mid = rows.iter().find(|r| (r.z - 0.5).abs() < 1e-12).unwrap();
    assert!((mid.numeric - mid.closed).abs() < 1e-6);
}

#[test]
fn morawetz_integration_matches_conformal_profile() {
    let rows = cross_validate(AnsatzFamily::MorawetzLog, r(2, 3), 1.0, -1.0, 2.0, 61, &IntegratorOptions::default()).unwrap();
    for row in &rows {
        assert!(row.error < 1e-6);
    }
    // e^{−u} at u = ln((x₄²−r²)/r) is r/(x₄²−r²)
    let ansatz = EquivariantAnsatz::new(AnsatzFamily::MorawetzLog, r(2, 3));
    let x = [2.0, 0.5, 1.0, 0.3];
    let u = ansatz.profile_variable(&x).unwrap();
    let f = closed_form_profile(AnsatzFamily::MorawetzLog, u, 1.0).unwrap();
    assert_abs_diff_eq!(f, 0.5 / 3.75, epsilon = 1e-14);
}

#[test]
fn rk4_reproducibility_mode() {
    let opts = IntegratorOptions {
        method: Method::Rk4 { step: 1e-3 },
        ..IntegratorOptions::default()
    };
    let a = cross_validate(AnsatzFamily::So3Spherical, r(1, 1), 1.0, 0.1, 0.9, 17, &opts).unwrap();
    let b = cross_validate(AnsatzFamily::So3Spherical, r(1, 1), 1.0, 0.1, 0.9, 17, &opts).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().all(|r| r.error < 1e-6));
}

#[test]
fn integration_failure_reports_last_point() {
    let ode = reduce(&EquivariantAnsatz::new(AnsatzFamily::So3Spherical, r(1, 1))).unwrap();
    let opts = IntegratorOptions {
        max_steps: 3,
        ..IntegratorOptions::default()
    };
    match integrate_profile(&ode, (0.1, 0.1, 1.0), 0.999999, &opts) {
        Err(sigmafluid::Error::Integration { last_value, .. }) => assert_eq!(last_value.len(), 2),
        other => panic!("expected an integration error, got {:?}", other.map(|p| p.span())),
    }
}

#[test]
fn catalog_maps_agree_with_ansatz_models() {
    let ansatz = EquivariantAnsatz::new(AnsatzFamily::So3Spherical, r(1, 1));
    let model = ansatz
        .model("(3/4)^(1/3)*(2*z/(1-z^2)+ln((1-z)/(1+z)))^(1/3)")
        .unwrap();
    let case = load_case("hb1_stiff").unwrap();
    for x in case.grid.points() {
        let a = model.decompose(&x).unwrap();
        let b = case.model.decompose(&x).unwrap();
        assert!(max_gap(&a.eigenvalues, &b.eigenvalues) < 1e-12);
    }
}

#[test]
fn corotational_pipeline_is_critical() {
    let ansatz = EquivariantAnsatz::new(AnsatzFamily::CorotationalSphere, r(1, 1));
    let ode = reduce(&ansatz).unwrap();
    let run = integrate_profile(&ode, (0.1, 0.1f64.asin(), 0.0), 0.9, &IntegratorOptions::default()).unwrap();
    assert!((run.evaluate(0.9).unwrap().0 - 0.9f64.asin()).abs() < 1e-6);
    let round = ansatz.model("asin(z)").unwrap();
    let rescaled = ansatz.rescaled_corotational_model("asin(z)").unwrap();
    let x = [2.0, 0.6, 1.1, 0.7];
    let before = euler_residual(&FluidState::from_model(&round, 1.0, 1.0), &round.g, &x).unwrap();
    let after = euler_residual(&FluidState::from_model(&rescaled, 1.0, 1.0), &rescaled.g, &x).unwrap();
    assert!(before.amax() > 1e-3);
    assert!(after.amax() < 1e-8);
    let case = load_case("hb1_corotational").unwrap();
    let a = rescaled.decompose(&x).unwrap();
    let b = case.model.decompose(&x).unwrap();
    assert!(max_gap(&a.eigenvalues, &b.eigenvalues) < 1e-12);
}

#[test]
fn rapidity_residuals() {
    let hb = load_case("hb1_stiff").unwrap();
    let x = [2.0, 1.0, 1.1, 0.7];
    let res = rapidity_residual(&scale_rapidity(hb.model.g.chart().clone()), &volume_field(&hb.model), r(1, 1), &x).unwrap();
    assert!(res.abs() < 1e-6, "{res:e}");

    let mw = load_case("morawetz_radiation").unwrap();
    let omega = RapidityField::new(
        mw.model.g.chart().clone(),
        Field::new(|x: &[f64]| Ok((2.0 * x[0] * x[1] / (x[0] * x[0] + x[1] * x[1])).atanh())),
    );
    let x = [2.0, 0.5, 1.1, 0.7];
    let res = rapidity_residual(&omega, &volume_field(&mw.model), r(2, 3), &x).unwrap();
    assert!(res.abs() < 1e-6, "{res:e}");
    // the rapidity field reproduces the flow of the map
    let u = omega.u_field().eval(&x).unwrap();
    let d = mw.model.decompose(&x).unwrap();
    assert!((u - d.u).amax() < 1e-12);

    let still = RapidityField::new(hb.model.g.chart().clone(), Field::new(|_: &[f64]| Ok(0.0)));
    let n = Field::new(|_: &[f64]| Ok(2.0));
    assert_eq!(rapidity_residual(&still, &n, r(1, 1), &[2.0, 1.0, 1.1, 0.7]).unwrap(), 0.0);
}

#[test]
fn hb1_density_is_independent_of_the_constant() {
    let ansatz = EquivariantAnsatz::new(AnsatzFamily::So3Spherical, r(1, 1));
    let core = "(2*z/(1-z^2)+ln((1-z)/(1+z)))^(1/3)";
    let one = ansatz.model(core).unwrap();
    let two = ansatz.model(&format!("2*{core}")).unwrap();
    for x in [[2.0, 0.6, 1.1, 0.7], [3.0, 1.5, 1.0, 0.2]] {
        let (a, b) = (one.decompose(&x).unwrap(), two.decompose(&x).unwrap());
        assert!((a.u - b.u).amax() < 1e-12);
        // σ₃ scales by C⁶: a constant factor, same (x₄²−r²)^{−3} profile
        let tau2 = x[0] * x[0] - x[1] * x[1];
        let sa = a.eigenvalues.iter().product::<f64>() * tau2.powi(3);
        let sb = b.eigenvalues.iter().product::<f64>() * tau2.powi(3);
        assert_abs_diff_eq!(sb / sa, 64.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sa, 16.0 / 9.0, epsilon = 1e-9);
    }
}

fn sign_consistent(family: AnsatzFamily, k: Rational, profiles: &[String], points: &[[f64; 4]]) {
    let ansatz = EquivariantAnsatz::new(family, k);
    let mut signs = Vec::new();
    for src in profiles {
        let model = ansatz.model(src).unwrap();
        let fluid = FluidState::from_model(&model, to_f64(k), to_f64(k * 2 - 1));
        let profile = Profile::parse(src).unwrap();
        for x in points {
            let reduced = reduced_residual(&ansatz, &profile, x).unwrap();
            let euler = euler_residual(&fluid, &model.g, x).unwrap();
            if reduced.abs() < 1e-9 {
                assert!(euler.amax() < 1e-7, "{src} at {x:?}: reduced {reduced:e}, euler {:e}", euler.amax());
                continue;
            }
            assert!(euler.amax() > 1e-9, "{src} at {x:?}");
            signs.push((euler[1] / reduced).signum());
        }
    }
    assert!(signs.windows(2).all(|w| w[0] == w[1]), "{family:?}: {signs:?}");
}

#[test]
fn reduction_soundness() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    let cone = [[2.0, 0.6, 1.1, 0.7], [3.0, 1.5, 1.0, 0.2], [2.0, 1.2, 0.5, 0.3], [2.5, 0.4, 2.0, 1.0]];
    let mut so3 = vec!["(2*z/(1-z^2)+ln((1-z)/(1+z)))^(1/3)".to_string()];
    let mut so2 = vec!["atanh(z)".to_string()];
    let mut mw = vec!["exp(-z)".to_string()];
    for _ in 0..20 {
        let (a, b) = (rng.gen_range(0.2..2.0), rng.gen_range(0.05..0.5));
        so3.push(format!("{a}*z*(1+{b}*z^2)"));
        so2.push(format!("{a}*z+{b}*z^3"));
        mw.push(format!("{a}*exp(-(1+{b})*z)"));
    }
    sign_consistent(AnsatzFamily::So3Spherical, r(1, 1), &so3, &cone);
    sign_consistent(AnsatzFamily::So3Spherical, r(2, 3), &so3, &cone);
    sign_consistent(AnsatzFamily::So2Cylindrical, r(1, 1), &so2, &cone);
    sign_consistent(AnsatzFamily::MorawetzLog, r(2, 3), &mw, &cone);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn so3_scales_linearly_in_the_constant(z in 0.06f64..0.95, c in 0.1f64..5.0) {
        let one = closed_form_profile(AnsatzFamily::So3Spherical, z, 1.0).unwrap();
        let scaled = closed_form_profile(AnsatzFamily::So3Spherical, z, c).unwrap();
        prop_assert!((scaled - c * one).abs() <= 1e-12 * scaled.abs().max(1.0));
    }

    #[test]
    fn rhs_solves_the_residual(fam in 0usize..4, z in 0.1f64..0.9, f in 0.2f64..2.0, df in 0.1f64..2.0) {
        let family = AnsatzFamily::ALL[fam];
        let k = if family == AnsatzFamily::MorawetzLog { r(2, 3) } else { r(1, 1) };
        let ode = reduce(&EquivariantAnsatz::new(family, k)).unwrap();
        if ode.order == 2 {
            let d2f = ode.derivative(z, f, df);
            prop_assert!(ode.residual(z, f, df, d2f).abs() < 1e-10 * (1.0 + d2f.abs()));
        } else {
            let d1 = ode.derivative(z, f, 0.0);
            prop_assert!(ode.residual(z, f, d1, 0.0).abs() < 1e-12);
        }
    }

    #[test]
    fn so3_equation_is_k_independent(n in 1i64..6, d in 1i64..6) {
        let k = r(n, d);
        prop_assume!(k != r(1, 2));
        let a = reduce(&EquivariantAnsatz::new(AnsatzFamily::So3Spherical, k)).unwrap();
        prop_assert_eq!(a.derivative(0.3, 0.5, 0.7), reduce(&EquivariantAnsatz::new(AnsatzFamily::So3Spherical, r(1, 1))).unwrap().derivative(0.3, 0.5, 0.7));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn calibration_inverts_the_closed_form(fam in 0usize..4, z in 0.1f64..0.9, c in 0.2f64..3.0) {
        let family = AnsatzFamily::ALL[fam];
        prop_assume!(family != AnsatzFamily::CorotationalSphere || c < 2.0);
        let (f, df, _) = closed_form_derivatives(family, z, c).unwrap();
        let back = calibrate_constant(family, z, f, df).unwrap();
        prop_assert!((back - c).abs() < 1e-10 * c.max(1.0));
    }
}
