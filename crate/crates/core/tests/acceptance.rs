//! Acceptance criteria, one PASS/FAIL line each.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use sigmafluid::catalog::{case_names, load_case, SolutionCase};
use sigmafluid::energy_stress::{
    biconformal_invariance_check, fluid_tensor, perfect_fluid_extract, stress_tensor, to_f64, LagrangianSpec, Rational,
};
use sigmafluid::fluid_equations::{
    acceleration_norm, bulk_divergence, diu_residual, energy_conservation_residual, euler_residual, heat_flow,
    integrability_two_form, projectors, rharmonic_fundamental_residual, shear_tensor, thermo_from_density,
};
use sigmafluid::geometry::Field;
use sigmafluid::gravity::{einstein_residual, fluid_from_curvature, CouplingConstant};
use sigmafluid::map_calculus::horizontal_conformality_check;
use sigmafluid::reductions::{cross_validate, AnsatzFamily, EquivariantAnsatz, IntegratorOptions};
use sigmafluid::verify::{verify_case, VerifyOptions};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn catalog_residuals() -> Outcome {
    let (mut worst_a, mut worst_fd, mut slowest) = (0.0f64, 0.0f64, 0.0f64);
    let mut failures = Vec::new();
    for name in case_names() {
        let t = Instant::now();
        let case = load_case(name).unwrap();
        for (fd, tol) in [(false, 1e-6), (true, 1e-4)] {
            let c = if fd { case.force_fd() } else { case.clone() };
            let fluid = c.map_fluid();
            let worst = c
                .grid
                .points()
                .par_iter()
                .map(|x| {
                    let e = euler_residual(&fluid, c.metric(), x).unwrap().amax();
                    e.max(energy_conservation_residual(&fluid, c.metric(), x).unwrap().abs())
                })
                .reduce(|| 0.0, f64::max);
            if worst >= tol {
                failures.push(format!("{name} fd={fd}: {worst:.2e}"));
            }
            if fd {
                worst_fd = worst_fd.max(worst);
            } else {
                worst_a = worst_a.max(worst);
            }
        }
        let secs = t.elapsed().as_secs_f64();
        slowest = slowest.max(secs);
        if secs >= 10.0 {
            failures.push(format!("{name} took {secs:.1} s"));
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "11 cases, worst analytic {worst_a:.2e} (< 1e-6), worst FD {worst_fd:.2e} (< 1e-4), slowest {slowest:.2} s{}",
            if failures.is_empty() { String::new() } else { format!("; failures: {}", failures.join("; ")) }
        ),
    )
}

fn eigenvalue_closed_forms() -> Outcome {
    let mut worst = 0.0f64;
    let mut covered = Vec::new();
    for name in case_names() {
        let case = load_case(name).unwrap();
        let Some(fields) = &case.expected_eigenvalues else { continue };
        covered.push(name);
        for x in case.grid.points() {
            let d = case.model.decompose(&x).unwrap();
            let mut want: Vec<f64> = fields.iter().map(|f| f.eval(&x).unwrap()).collect();
            want.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let mut got = d.eigenvalues.clone();
            got.sort_by(|a, b| b.partial_cmp(a).unwrap());
            for (w, g) in want.iter().zip(&got) {
                worst = worst.max((w - g).abs() / w.abs());
            }
        }
    }
    let required = ["hb1_stiff", "gubser_ds3", "skew_projection", "einstein_universe"];
    let all = required.iter().all(|r| covered.contains(r));
    outcome(
        all && worst < 1e-8,
        format!("{} cases with closed-form Λᵢ, worst relative deviation {worst:.2e} (< 1e-8)", covered.len()),
    )
}

fn eos_law() -> Outcome {
    let case = load_case("hb1_stiff").unwrap();
    let x = [2.0, 1.0, 1.1, 0.7];
    let d = case.model.decompose(&x).unwrap();
    let mut ok = true;
    let mut notes = Vec::new();
    for k in [Rational::new(0, 1), Rational::new(1, 2), Rational::new(2, 3), Rational::new(1, 1)] {
        let spec = LagrangianSpec::sigma3_power(k).unwrap();
        let w = k * 2 - 1;
        ok &= spec.eos_ratio() == Some(w);
        let e = perfect_fluid_extract(&fluid_tensor(&stress_tensor(&spec, &d).unwrap()), &d.metric, &d.u).unwrap();
        let gap = (e.p - to_f64(w) * e.rho).abs() / e.rho.abs();
        ok &= gap < 1e-12;
        let thermo = thermo_from_density(&d, &spec).unwrap();
        ok &= thermo.p == to_f64(w) * thermo.rho;
        if k == Rational::new(1, 2) {
            ok &= thermo.p == 0.0 && e.p.abs() < 1e-14 * e.rho;
            notes.push(format!("dust p = {} (extracted {:.1e})", thermo.p, e.p));
        }
        notes.push(format!("k={k}: w={w}, |p−wρ|/ρ={gap:.1e}"));
    }
    outcome(ok, notes.join("; "))
}

fn ode_cross_validation() -> Outcome {
    let opts = IntegratorOptions::default();
    let runs = [
        ("SO(3)", AnsatzFamily::So3Spherical, Rational::new(1, 1), 0.1, 0.9),
        ("SO(2)", AnsatzFamily::So2Cylindrical, Rational::new(1, 1), 0.1, 0.9),
        ("Morawetz-log", AnsatzFamily::MorawetzLog, Rational::new(2, 3), -1.0, 2.0),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for (label, family, k, a, b) in runs {
        let t = Instant::now();
        let rows = cross_validate(family, k, 1.0, a, b, 401, &opts).unwrap();
        let secs = t.elapsed().as_secs_f64();
        let worst = rows.iter().map(|r| r.error).fold(0.0, f64::max);
        ok &= worst < 1e-6 && secs < 1.0;
        notes.push(format!("{label} sup {worst:.1e} in {:.0} ms", secs * 1e3));
    }
    outcome(ok, notes.join("; "))
}

fn vertical_conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let ansatz = EquivariantAnsatz::new(AnsatzFamily::So3Spherical, Rational::new(1, 1));
    let profiles: Vec<String> = (0..50)
        .map(|_| {
            let (a, b, c) = (rng.gen_range(1.0..2.0), rng.gen_range(-0.5..0.5), rng.gen_range(1.5..3.0));
            format!("{a}*z^{c}*(1+{b}*z^2)")
        })
        .collect();
    let points: Vec<[f64; 4]> = (0..100)
        .map(|_| {
            let x4 = rng.gen_range(1.5..3.0);
            let z = rng.gen_range(0.1..0.8);
            [x4, z * x4, rng.gen_range(0.3..2.8), rng.gen_range(0.0..6.0)]
        })
        .collect();
    let results: Vec<(f64, f64)> = profiles
        .par_iter()
        .map(|src| {
            let model = ansatz.model(src).unwrap().force_fd();
            let fluid = sigmafluid::fluid_equations::FluidState::from_model(&model, 1.0, 1.0);
            let mut diu = 0.0f64;
            let mut euler = 0.0f64;
            for x in &points {
                diu = diu.max(diu_residual(&model, x).unwrap().abs());
                euler = euler.max(euler_residual(&fluid, &model.g, x).unwrap().amax());
            }
            (diu, euler)
        })
        .collect();
    let worst_diu = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let weakest_euler = results.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    outcome(
        worst_diu < 5e-5 && weakest_euler > 1e-2,
        format!(
            "50 profiles × 100 points (FD): max |div U + U(ln√σ₃)| {worst_diu:.1e} (< 5e-5); every profile has Euler max > {weakest_euler:.1e} (> 1e-2)"
        ),
    )
}

fn biconformal() -> Outcome {
    let case = load_case("hb1_stiff").unwrap();
    let varsigma = Field::new(|x: &[f64]| Ok(1.0 + 0.1 * (-(x[0] - 2.0).powi(2) - (x[1] - 1.0).powi(2)).exp()));
    let mut points = case.grid.points();
    points.push(vec![2.0, 1.0, 1.1, 0.7]);
    let worst = points
        .iter()
        .map(|x| biconformal_invariance_check(&case, &varsigma, x).unwrap())
        .fold(0.0, f64::max);
    outcome(worst < 1e-4, format!("HB-I under ς = 1 + 0.1 exp(−(x₄−2)²−(r−1)²): worst residual {worst:.1e} (< 1e-4)"))
}

fn grid_max(case: &SolutionCase, f: impl Fn(&[f64]) -> f64) -> f64 {
    case.grid.points().iter().map(|x| f(x)).fold(0.0, f64::max)
}

fn diagnostics() -> Outcome {
    let hb = load_case("hb1_stiff").unwrap();
    let u = hb.map_fluid().u;
    let g = hb.metric();
    let shear = grid_max(&hb, |x| shear_tensor(&u, g, x).unwrap().norm);
    let vort = grid_max(&hb, |x| integrability_two_form(&hb.map_fluid(), &hb.eos(), g, x).unwrap().relative);
    let acc = grid_max(&hb, |x| acceleration_norm(&u, g, x).unwrap());
    let t = hb.temperature.clone().unwrap();
    let q = grid_max(&hb, |x| heat_flow(&u, &t, g, x).unwrap().amax());
    let bulk = grid_max(&hb, |x| bulk_divergence(&u, g, x).unwrap().amax());
    let bulk_h = grid_max(&hb, |x| {
        let ux = u.eval(x).unwrap();
        let (ph, _) = projectors(g, &ux, x).unwrap();
        (ph.transpose() * bulk_divergence(&u, g, x).unwrap()).amax()
    });
    let hb2 = load_case("hb2_stiff").unwrap();
    let u2 = hb2.map_fluid().u;
    let shear2 = shear_tensor(&u2, hb2.metric(), &[2.0, 1.0, 1.0, 0.3]).unwrap().norm;
    let mw = load_case("morawetz_radiation").unwrap();
    let um = mw.map_fluid().u;
    let mw_acc = grid_max(&mw, |x| acceleration_norm(&um, mw.metric(), x).unwrap());
    let mw_shear = grid_max(&mw, |x| shear_tensor(&um, mw.metric(), x).unwrap().norm);

    let checks = [
        ("HB-I shear", shear, shear < 1e-6),
        ("HB-I vorticity", vort, vort < 1e-6),
        ("HB-I acceleration", acc, acc < 1e-6),
        ("HB-I heat flow", q, q < 1e-6),
        ("HB-I bulk divergence", bulk, bulk < 1e-5),
        ("HB-II shear", shear2, shear2 > 1e-3),
        ("Morawetz acceleration", mw_acc, mw_acc > 1e-3),
        ("Morawetz shear", mw_shear, mw_shear < 1e-6),
    ];
    let pass = checks.iter().all(|c| c.2);
    let mut detail: Vec<String> = checks
        .iter()
        .map(|(n, v, ok)| format!("{n} {v:.1e}{}", if *ok { "" } else { " [out of bounds]" }))
        .collect();
    detail.push(format!("horizontal part of the bulk divergence {bulk_h:.1e}"));
    outcome(pass, detail.join("; "))
}

fn einstein_coupling() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for name in ["rw_affine(a=1,b=1,kappa=0)", "rw_sqrt(a=1,kappa=0)"] {
        let mut case = load_case(name).unwrap();
        case.grid.set_axis("t", 0.5, 2.0, 16).unwrap();
        let alpha = -2.0;
        let spec = case.lagrangian().unwrap();
        let (mut res, mut dev) = (0.0f64, 0.0f64);
        for x in case.grid.points() {
            let d = case.model.decompose(&x).unwrap();
            let s = stress_tensor(&spec, &d).unwrap();
            res = res.max(einstein_residual(case.metric(), &s, alpha, &x).unwrap());
            let f = fluid_from_curvature(case.metric(), &d.u, CouplingConstant::new(alpha).unwrap(), &x).unwrap();
            let want = case.evaluate_expected(&x).unwrap();
            dev = dev.max((f.rho - want.rho).abs()).max((f.p - want.p).abs());
        }
        ok &= res < 1e-5 && dev < 1e-6;
        notes.push(format!("{name} k={}: residual {res:.1e}, (ρ,p) deviation {dev:.1e}", case.k));
    }
    outcome(ok, notes.join("; "))
}

fn rharmonic() -> Outcome {
    let skew = load_case("skew_projection").unwrap();
    let r2 = grid_max(&skew, |x| rharmonic_fundamental_residual(&skew.model, 2.0, x).unwrap().amax());
    let mw = load_case("morawetz_radiation").unwrap();
    let r4 = grid_max(&mw, |x| rharmonic_fundamental_residual(&mw.model, 4.0, x).unwrap().amax());
    let mut mismatches = Vec::new();
    for name in case_names() {
        let case = load_case(name).unwrap();
        let u = case.map_fluid().u;
        let mut conformal = true;
        let mut shear_free = true;
        for x in case.grid.points() {
            conformal &= horizontal_conformality_check(&case.model.decompose(&x).unwrap(), 1e-6).conformal;
            shear_free &= shear_tensor(&u, case.metric(), &x).unwrap().norm < 1e-6;
        }
        if conformal != shear_free {
            mismatches.push(format!("{name} (conformal {conformal}, shear-free {shear_free})"));
        }
    }
    let pass = r2 < 1e-6 && r4 < 1e-6 && mismatches.is_empty();
    let mut detail = format!("skew r=2 {r2:.1e}, Morawetz r=4 {r4:.1e}; ");
    if mismatches.is_empty() {
        detail.push_str("conformal ⇔ shear-free on all 11 cases");
    } else {
        detail.push_str(&format!(
            "conformal ⇒ shear-free holds on all cases, converse fails on {}",
            mismatches.join(", ")
        ));
    }
    outcome(pass, detail)
}

fn determinism() -> Outcome {
    let mut ok = true;
    for name in case_names() {
        let case = load_case(name).unwrap();
        let a = verify_case(&case, &VerifyOptions { threads: Some(1), ..Default::default() }).unwrap();
        let b = verify_case(&case, &VerifyOptions { threads: Some(4), ..Default::default() }).unwrap();
        ok &= a.to_json() == b.to_json() && a.to_csv() == b.to_csv();
    }
    outcome(ok, "JSON and CSV report bodies identical across two runs (1 and 4 threads) for all 11 cases".into())
}

/// Criteria whose claims do not hold for the exact solutions themselves.
/// 7: `div(div U · g^H) = θ² U^♭` on HB-I; only its horizontal part vanishes.
/// 9: HB-I is shear-free with a non-degenerate third eigenvalue.
const KNOWN_FAILURES: [usize; 2] = [7, 9];

#[test]
fn acceptance() {
    let criteria: [Criterion; 10] = [
        ("catalog residuals", catalog_residuals),
        ("eigenvalue closed forms", eigenvalue_closed_forms),
        ("EoS law", eos_law),
        ("ODE cross-validation", ode_cross_validation),
        ("vertical conservation", vertical_conservation),
        ("biconformal invariance", biconformal),
        ("diagnostics match flags", diagnostics),
        ("Einstein coupling", einstein_coupling),
        ("r-harmonic fundamental equation", rharmonic),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        println!("{} {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
        if !o.pass {
            failed.push(i + 1);
        }
    }
    let unexpected: Vec<usize> = failed.iter().copied().filter(|i| !KNOWN_FAILURES.contains(i)).collect();
    let fixed: Vec<usize> = KNOWN_FAILURES.iter().copied().filter(|i| !failed.contains(i)).collect();
    println!("{} of 10 criteria pass; known failures {KNOWN_FAILURES:?}", 10 - failed.len());
    assert!(unexpected.is_empty(), "criteria failed: {unexpected:?}");
    assert!(fixed.is_empty(), "known failures now pass, update the list: {fixed:?}");
}
