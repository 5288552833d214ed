//! Acceptance suite: one PASS/FAIL line per criterion. Oracles are computed
//! here independently of the library wherever a closed form or a direct
//! evaluation exists.

use std::sync::Arc;
use std::time::Instant;

use nrq_core::asymptotics::{
    asymptotic_metrics, epsilon_sweep, limit_profile, scale_solution, separation_constant, unscale,
    CoefficientBox, ScaledForm, SweepOptions, SweepReport,
};
use nrq_core::functionals::{
    energy_components, j_functional, phi, phi_regularized, w1p_norm, weak_residual,
    weak_residual_scaled, EnergyComponents,
};
use nrq_core::layer::{composite_approx_1d, layer_profile_1d};
use nrq_core::problem::{CoefficientField, DiscreteField, Domain, Exponents, Mesh, ProblemSpec};
use nrq_core::rayleigh::{
    estimate_thresholds_with, extremal_constants, fiber_scalings, intersection_check,
    nonlinear_quotients, ThresholdOptions,
};
use nrq_core::solver::{
    solve_ground_state, solve_mountain_pass, MountainPassOptions, SolveReport, SolverOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Outcome {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
    seconds: f64,
    budget: f64,
}

fn model(n: usize, eps: f64) -> ProblemSpec {
    ProblemSpec::new(
        Exponents::new(2.0, 3.0, 4.0).unwrap(),
        eps,
        CoefficientField::constant(1.0).unwrap(),
        CoefficientField::constant(1.0).unwrap(),
        Mesh::build(Domain::unit_interval(), &[n]).unwrap(),
    )
    .unwrap()
}

fn random_exponents(rng: &mut ChaCha8Rng) -> Exponents {
    let p = rng.gen_range(1.05..4.0);
    let q = p + rng.gen_range(0.05..3.0);
    let gamma = q + rng.gen_range(0.05..3.0);
    Exponents::new(p, q, gamma).unwrap()
}

/// Maximum of a unimodal function on `(0, hi]` by golden-section search in `ln s`.
fn golden_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo.ln(), hi.ln());
    for _ in 0..300 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c.exp()) < f(d.exp()) {
            a = c;
        } else {
            b = d;
        }
    }
    f((0.5 * (a + b)).exp())
}

fn criterion_1() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut ordered = true;
    let mut oracle_err = 0.0f64;
    for k in 0..10_000 {
        let e = random_exponents(&mut rng);
        let c = extremal_constants(&e).unwrap();
        ordered &= c.c > c.c_e && c.c_e > 0.0;
        if k % 100 == 0 {
            // ray maxima for T = A = B = 1
            let (p, q, g) = (e.p, e.q, e.gamma);
            let oc = golden_max(|s| s.powf(q - p) - s.powf(g - p), 1e-12, 1.0);
            let oce = golden_max(|s| p * (s.powf(q - p) / q - s.powf(g - p) / g), 1e-12, 2.0);
            oracle_err = oracle_err
                .max((c.c - oc).abs() / oc)
                .max((c.c_e - oce).abs() / oce);
        }
    }
    let m = extremal_constants(&Exponents::new(2.0, 3.0, 4.0).unwrap()).unwrap();
    let model_ok = (m.c - 0.25).abs() <= 1e-14 && (m.c_e - 2.0 / 9.0).abs() <= 1e-14;
    (
        ordered && model_ok && oracle_err < 1e-9,
        format!("c > c_e > 0 on 1e4 draws: {ordered}; model c={} c_e={}; oracle rel err {oracle_err:.1e}", m.c, m.c_e),
    )
}

fn criterion_2() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cases: Vec<(Exponents, EnergyComponents)> = (0..1000)
        .map(|_| {
            let e = random_exponents(&mut rng);
            let c = EnergyComponents::new(
                rng.gen_range(0.01..10.0),
                rng.gen_range(0.01..10.0),
                rng.gen_range(0.01..10.0),
            );
            (e, c)
        })
        .collect();
    let errs: Vec<(f64, f64, f64)> = cases
        .par_iter()
        .map(|(e, c)| {
            let (eu, eeu) = nonlinear_quotients(c, e).unwrap();
            let k = extremal_constants(e).unwrap();
            let ratio_err = (eeu / eu - k.c_e / k.c).abs() / (k.c_e / k.c);
            let s_n = fiber_scalings(c, e).unwrap().s_n;
            let n = 10_000;
            // R_N(s u) = (A s^(q-p) - B s^(gamma-p)) / T on a geometric grid over [s_N/10, 10 s_N]
            let ratio = 10f64.powf(2.0 / (n - 1) as f64);
            let s0 = s_n / 10.0;
            let (mut x, mut y) = (s0.powf(e.q - e.p), s0.powf(e.gamma - e.p));
            let (rx, ry) = (ratio.powf(e.q - e.p), ratio.powf(e.gamma - e.p));
            let mut best = f64::NEG_INFINITY;
            for _ in 0..n {
                best = best.max((c.a * x - c.b * y) / c.t);
                x *= rx;
                y *= ry;
            }
            let rep = intersection_check(c, e, None).unwrap();
            (
                (best - eu).abs() / eu,
                rep.root_gap / rep.r_n_at_root.abs().max(1.0),
                ratio_err,
            )
        })
        .collect();
    let worst = |f: fn(&(f64, f64, f64)) -> f64| errs.iter().map(f).fold(0.0f64, f64::max);
    let (grid_err, root_res, ratio_err) = (worst(|x| x.0), worst(|x| x.1), worst(|x| x.2));
    (
        grid_err <= 1e-6 && root_res <= 1e-12 && ratio_err <= 1e-14,
        format!("grid max rel err {grid_err:.2e}; R_N - R_e at s_e {root_res:.2e}; ratio err {ratio_err:.2e}"),
    )
}

fn zero_boundary_random(mesh: &Arc<Mesh>, rng: &mut ChaCha8Rng) -> DiscreteField {
    let v = (0..mesh.num_nodes())
        .map(|i| {
            if mesh.is_boundary(i) {
                0.0
            } else {
                rng.gen_range(-1.0..1.0)
            }
        })
        .collect();
    DiscreteField::from_values(mesh, v).unwrap()
}

fn criterion_3() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mesh = Mesh::build(Domain::unit_interval(), &[101]).unwrap();
    let mut worst = Vec::new();
    for (p, tol) in [(2.0, 1e-6), (1.5, 1e-5), (3.0, 1e-5)] {
        let e = Exponents::new(p, p + 1.0, p + 2.0).unwrap();
        let spec = ProblemSpec::new(
            e,
            0.05,
            CoefficientField::constant(1.0).unwrap(),
            CoefficientField::constant(1.0).unwrap(),
            mesh.clone(),
        )
        .unwrap();
        let energy = |u: &DiscreteField| {
            if p == 2.0 {
                phi(u, &spec).unwrap()
            } else {
                phi_regularized(u, &spec).unwrap()
            }
        };
        let mut w = 0.0f64;
        for _ in 0..100 {
            let u = zero_boundary_random(&mesh, &mut rng);
            let v = zero_boundary_random(&mesh, &mut rng);
            let g = weak_residual(&u, &spec).unwrap().dot(&v);
            let h = 1e-5;
            let fd = (energy(&u.axpy(h, &v)) - energy(&u.axpy(-h, &v))) / (2.0 * h);
            w = w.max((g - fd).abs() / g.abs());
        }
        worst.push((p, w, w <= tol));
    }
    (
        worst.iter().all(|x| x.2),
        worst
            .iter()
            .map(|(p, w, _)| format!("p={p}: {w:.2e}"))
            .collect::<Vec<_>>()
            .join(", "),
    )
}

fn criterion_4(g: &SolveReport, spec: &ProblemSpec) -> (bool, String) {
    let e = spec.exponents();
    let c = energy_components(&g.field, spec).unwrap();
    let eps = spec.epsilon();
    let energy = eps / e.p * c.t - c.a / e.q + c.b / e.gamma;
    let nehari = (eps * c.t - c.a + c.b).abs() / (eps * c.t + c.a + c.b);
    let second = (e.p - e.q) * eps * c.t + (e.gamma - e.q) * c.b;
    let residual = weak_residual(&g.field, spec)
        .unwrap()
        .values()
        .iter()
        .enumerate()
        .filter(|(i, _)| !spec.mesh().is_boundary(*i))
        .map(|(_, r)| r.abs())
        .fold(0.0f64, f64::max);
    let min_interior = g.field.min_interior();
    let ok = g.converged
        && residual <= 1e-8 * (1.0 + energy.abs())
        && energy < 0.0
        && nehari <= 1e-6
        && second > 0.0
        && min_interior > 0.0;
    (
        ok,
        format!(
            "Phi={energy:.10e}, residual={residual:.2e}, Nehari={nehari:.2e}, fiber''={second:.4}, min interior={min_interior:.3e}"
        ),
    )
}

fn criterion_6(g: &SolveReport, spec: &ProblemSpec) -> (bool, String, DiscreteField) {
    let mp = solve_mountain_pass(spec, &g.field, &MountainPassOptions::default()).unwrap();
    let e_mp = phi(&mp.field, spec).unwrap();
    let e_g = phi(&g.field, spec).unwrap();
    let nonneg = mp.field.min_value() >= 0.0;
    (
        mp.converged && e_mp > 0.0 && e_g < 0.0 && nonneg,
        format!(
            "converged={}, Phi(v)={e_mp:.4e} > 0 > Phi(u)={e_g:.4e}, min nodal={:.1e}, iterations={}",
            mp.converged,
            mp.field.min_value(),
            mp.iterations
        ),
        mp.field,
    )
}

fn criterion_7(report: &SweepReport, spec: &ProblemSpec) -> (bool, String) {
    let j0 = report.j_limit;
    let j_ok = (j0 + 1.0 / 12.0).abs() <= 1e-12;
    let gaps: Vec<f64> = report
        .fields
        .iter()
        .zip(&report.rows)
        .map(|(u, r)| phi(u, &spec.with_epsilon(r.eps).unwrap()).unwrap() + 1.0 / 12.0)
        .collect();
    let bad: Vec<f64> = report.rows.iter().map(|r| r.measure_bad).collect();
    let l1: Vec<f64> = report
        .rows
        .iter()
        .map(|r| r.lr_error(1.0).unwrap())
        .collect();
    let positive = gaps.iter().all(|&g| g > 0.0);
    let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    let last = report.rows.len() - 1;
    let ok = j_ok
        && positive
        && decreasing(&gaps)
        && gaps[last] <= 5e-3
        && decreasing(&bad)
        && decreasing(&l1)
        && l1[last] <= 2e-2
        && report.rows.iter().all(|r| r.converged);
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.3e}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    (
        ok,
        format!(
            "J(u0)={j0:.15}; gaps [{}] (need last <= 5e-3); measure_bad [{}]; L1 [{}] (need last <= 2e-2)",
            fmt(&gaps),
            fmt(&bad),
            fmt(&l1)
        ),
    )
}

fn criterion_8(report: &SweepReport, mesh: &Arc<Mesh>) -> (bool, String) {
    let tanh = layer_profile_1d(2.0, 4.0, 10.0, 2001).unwrap();
    let tanh_err = tanh
        .xi
        .iter()
        .zip(&tanh.u)
        .map(|(x, u)| (u - (x / 2f64.sqrt()).tanh()).abs())
        .fold(0.0f64, f64::max);
    let eps = 1e-4;
    let idx = report.rows.iter().position(|r| r.eps == eps).unwrap();
    let profile = layer_profile_1d(3.0, 4.0, 1.25 / eps.sqrt(), 8001).unwrap();
    let comp = composite_approx_1d(eps, mesh, &profile).unwrap();
    let sup = comp
        .values()
        .iter()
        .zip(report.fields[idx].values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    (
        tanh_err <= 1e-6 && sup <= 5e-2,
        format!("tanh deviation {tanh_err:.2e}; sup |composite - u_eps| at eps=1e-4: {sup:.3e}"),
    )
}

fn criterion_9(g: &SolveReport, spec: &ProblemSpec) -> (bool, String) {
    let e = spec.exponents();
    let eps = spec.epsilon();
    let mut round = 0.0f64;
    let mut scaled_res = 0.0f64;
    for form in [ScaledForm::Lambda, ScaledForm::Nu] {
        let (v, param) = scale_solution(&g.field, eps, e, form).unwrap();
        let back = unscale(&v, param, e, form).unwrap();
        for (a, b) in back.values().iter().zip(g.field.values()) {
            round = round.max((a - b).abs() / b.abs().max(f64::MIN_POSITIVE));
        }
        let (d, am, bm) = form.multipliers(param);
        let r = weak_residual_scaled(&v, spec, d, am, bm).unwrap();
        scaled_res = scaled_res.max(r.max_abs() / (1.0 + v.max_abs()));
    }
    let (_, lambda) = ScaledForm::Lambda.factors(0.01, e);
    let (_, nu) = ScaledForm::Nu.factors(0.01, e);
    let ok = round <= 1e-14
        && (lambda - 10.0).abs() <= 1e-12
        && (nu - 0.01).abs() <= 1e-15
        && scaled_res <= 1e-6;
    (
        ok,
        format!("round trip {round:.1e}; lambda(0.01)={lambda}; nu(0.01)={nu}; scaled residual {scaled_res:.1e}"),
    )
}

/// `min(1, min over the box of the excess at the tube edges)`: the excess is
/// monotone on each side of `rho`, so the edges are the minimizers.
fn kappa_oracle(bx: (f64, f64, f64, f64), q: f64, gamma: f64, eta: f64) -> f64 {
    let j = |a: f64, b: f64, s: f64| -a / q * s.powf(q) + b / gamma * s.powf(gamma);
    let n = 401;
    let mut k = 1.0f64;
    for i in 0..n {
        let a = bx.0 + (bx.1 - bx.0) * i as f64 / (n - 1) as f64;
        for l in 0..n {
            let b = bx.2 + (bx.3 - bx.2) * l as f64 / (n - 1) as f64;
            let rho = (a / b).powf(1.0 / (gamma - q));
            let jr = j(a, b, rho);
            k = k.min(j(a, b, rho + eta) - jr);
            k = k.min(j(a, b, (rho - eta).max(0.0)) - jr);
        }
    }
    k
}

fn criterion_10() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let domain = Domain::unit_interval();
    let presets: [(&str, CoefficientField, CoefficientField); 3] = [
        (
            "constant",
            CoefficientField::constant(1.0).unwrap(),
            CoefficientField::constant(1.0).unwrap(),
        ),
        (
            "affine",
            CoefficientField::affine(0.5, 1.5, 0.0, 0.5, 2.0).unwrap(),
            CoefficientField::constant(1.0).unwrap(),
        ),
        (
            "bump",
            CoefficientField::sinusoidal_bump(1.0, 0.5, &domain, 1.0, 1.5).unwrap(),
            CoefficientField::affine(1.0, -0.5, 0.0, 0.5, 1.0).unwrap(),
        ),
    ];
    let mut ok = true;
    let mut lines = Vec::new();
    let mesh = Mesh::build(domain, &[201]).unwrap();
    for (name, a, b) in presets {
        let spec = ProblemSpec::new(
            Exponents::new(2.0, 3.0, 4.0).unwrap(),
            0.01,
            a,
            b,
            mesh.clone(),
        )
        .unwrap();
        let bx = CoefficientBox::of_spec(&spec).unwrap();
        let tuple = (bx.sigma_a, bx.a_hat, bx.sigma_b, bx.b_hat);
        let mut ks = Vec::new();
        for eta in [0.05, 0.1, 0.2] {
            let k = separation_constant(&bx, 3.0, 4.0, eta).unwrap().kappa;
            let oracle = kappa_oracle(tuple, 3.0, 4.0, eta);
            ok &= k > 0.0 && (k - oracle).abs() <= 1e-3 * oracle;
            ks.push(format!("{k:.3e}"));
        }
        let k = separation_constant(&bx, 3.0, 4.0, 0.1).unwrap().kappa;
        let profile = limit_profile(&spec).unwrap();
        let mut slack = f64::INFINITY;
        for _ in 0..100 {
            let scale = rng.gen_range(0.1..3.0);
            let v = (0..mesh.num_nodes())
                .map(|_| scale * rng.gen::<f64>())
                .collect();
            let u = DiscreteField::from_values(&mesh, v).unwrap();
            let m = asymptotic_metrics(&u, &profile, &spec, 0.1, &[1.0]).unwrap();
            let j_gap = j_functional(&u, &spec).unwrap() - m.j_limit;
            slack = slack.min(j_gap - k * m.measure_bad);
        }
        ok &= slack >= 0.0;
        lines.push(format!(
            "{name}: kappa [{}], min(J_gap - kappa*bad) {slack:.2e}",
            ks.join(" ")
        ));
    }
    (ok, lines.join("; "))
}

fn run(
    out: &mut Vec<Outcome>,
    id: usize,
    name: &'static str,
    budget: f64,
    f: &mut dyn FnMut() -> (bool, String),
) {
    let t = Instant::now();
    let (passed, detail) = f();
    out.push(Outcome {
        id,
        name,
        passed,
        detail,
        seconds: t.elapsed().as_secs_f64(),
        budget,
    });
}

#[test]
fn acceptance() {
    let mut out = Vec::new();

    run(&mut out, 1, "extremal constants", 1.0, &mut criterion_1);
    run(&mut out, 2, "fiber algebra", 1.0, &mut criterion_2);
    run(&mut out, 3, "gradient correctness", 10.0, &mut criterion_3);

    let spec = model(2001, 1e-3);
    let t = Instant::now();
    let ground = solve_ground_state(&spec, None, &SolverOptions::default()).unwrap();
    let solve_seconds = t.elapsed().as_secs_f64();
    run(&mut out, 4, "existence regime", 60.0, &mut || {
        let (ok, d) = criterion_4(&ground, &spec);
        (ok, d)
    });
    out.last_mut().unwrap().seconds += solve_seconds;

    let mut mp_field = None;
    run(&mut out, 6, "second solution", 120.0, &mut || {
        let (ok, d, f) = criterion_6(&ground, &spec);
        mp_field = Some(f);
        (ok, d)
    });

    let sweep_spec = model(4001, 1e-4);
    let mut sweep = None;
    run(&mut out, 7, "asymptotics sweep", 300.0, &mut || {
        let report = epsilon_sweep(
            &sweep_spec,
            &SweepOptions {
                eps_list: vec![1e-1, 1e-2, 1e-3, 1e-4],
                eta: 0.1,
                r_list: vec![1.0],
                solver: SolverOptions::default(),
                eps_e_star: None,
            },
        )
        .unwrap();
        let r = criterion_7(&report, &sweep_spec);
        sweep = Some(report);
        r
    });
    let sweep = sweep.unwrap();

    run(&mut out, 5, "nonexistence regime", 60.0, &mut || {
        // thresholds on each mesh, with every nontrivial critical point found as an extra start
        let mut found: Vec<(f64, DiscreteField)> = vec![
            (spec.epsilon(), ground.field.clone()),
            (spec.epsilon(), mp_field.clone().unwrap()),
        ];
        let fine: Vec<(f64, DiscreteField)> = sweep
            .rows
            .iter()
            .zip(&sweep.fields)
            .filter(|(r, _)| !r.trivial)
            .map(|(r, f)| (r.eps, f.clone()))
            .collect();
        let coarse_th = estimate_thresholds_with(
            &spec,
            &ThresholdOptions {
                extra_starts: found.iter().map(|x| x.1.clone()).collect(),
                ..Default::default()
            },
        )
        .unwrap();
        let fine_th = estimate_thresholds_with(
            &sweep_spec,
            &ThresholdOptions {
                extra_starts: fine.iter().map(|x| x.1.clone()).collect(),
                ..Default::default()
            },
        )
        .unwrap();
        let mut ceiling_ok = true;
        let mut count = 0;
        for (eps, _) in found.drain(..) {
            ceiling_ok &= eps <= coarse_th.eps_star;
            count += 1;
        }
        for (eps, _) in &fine {
            ceiling_ok &= *eps <= fine_th.eps_star;
            count += 1;
        }
        let above = spec.with_epsilon(2.0 * coarse_th.eps_star).unwrap();
        let r = solve_ground_state(&above, None, &SolverOptions::default()).unwrap();
        let norm = w1p_norm(&r.field, 2.0);
        (
            norm <= 1e-10 && ceiling_ok,
            format!(
                "eps* >= {:.6e} (2001 nodes), {:.6e} (4001 nodes); ||u||_1,p at 2 eps* = {norm:.1e}; \
                 {count} critical points below eps*: {ceiling_ok}",
                coarse_th.eps_star, fine_th.eps_star
            ),
        )
    });

    let sweep_mesh = sweep_spec.mesh().clone();
    run(&mut out, 8, "boundary layer", 10.0, &mut || {
        criterion_8(&sweep, &sweep_mesh)
    });
    run(&mut out, 9, "scaling equivalences", 1.0, &mut || {
        criterion_9(&ground, &spec)
    });
    run(
        &mut out,
        10,
        "separation-constant oracle",
        30.0,
        &mut criterion_10,
    );

    out.sort_by_key(|o| o.id);
    let mut all = true;
    for o in &out {
        let in_time = o.seconds <= o.budget;
        let pass = o.passed && in_time;
        all &= pass;
        println!(
            "{} criterion {:>2} ({}) [{:.1} s / {} s]: {}",
            if pass { "PASS" } else { "FAIL" },
            o.id,
            o.name,
            o.seconds,
            o.budget,
            o.detail
        );
    }
    assert!(all, "acceptance criteria failed; see the lines above");
}
