//! The invariant suite behind the `check` subcommand. Every check runs on
//! fixed built-in problems so the result does not depend on the config.

use rand::Rng;
use serde::Serialize;

use crate::asymptotics::{
    asymptotic_metrics, j_limit, limit_profile, scale_solution, separation_constant, unscale,
    CoefficientBox, ScaledForm,
};
use crate::error::Result;
use crate::functionals::{
    energy_components, j_functional, phi, phi_regularized, weak_residual, EnergyComponents,
};
use crate::layer::layer_profile_1d;
use crate::problem::{CoefficientField, DiscreteField, Domain, Exponents, Mesh, ProblemSpec};
use crate::rayleigh::{
    estimate_thresholds_with, extremal_constants, intersection_check, nonlinear_quotients,
    ray_quotients, stream_rng, ThresholdOptions,
};
use crate::solver::{
    mountain_pass_barrier, nehari_diagnostics, solve_ground_state, solve_mountain_pass,
    MountainPassOptions, SolverOptions,
};

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn result(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed,
        detail,
    }
}

fn model(n: usize, eps: f64) -> Result<ProblemSpec> {
    ProblemSpec::new(
        Exponents::new(2.0, 3.0, 4.0)?,
        eps,
        CoefficientField::constant(1.0)?,
        CoefficientField::constant(1.0)?,
        Mesh::build(Domain::unit_interval(), &[n])?,
    )
}

fn random_exponents(rng: &mut impl Rng) -> Exponents {
    let p = rng.gen_range(1.05..4.0);
    let q = p + rng.gen_range(0.05..3.0);
    let gamma = q + rng.gen_range(0.05..3.0);
    Exponents { p, q, gamma }
}

fn check_constants(seed: u64) -> Result<CheckResult> {
    let mut rng = stream_rng(seed, 1);
    let mut worst = f64::INFINITY;
    for _ in 0..10_000 {
        let k = extremal_constants(&random_exponents(&mut rng))?;
        if !(k.c_e > 0.0) {
            worst = worst.min(-1.0);
        }
        worst = worst.min(k.c - k.c_e);
    }
    let m = extremal_constants(&Exponents::new(2.0, 3.0, 4.0)?)?;
    let ok = worst > 0.0 && (m.c - 0.25).abs() < 1e-14 && (m.c_e - 2.0 / 9.0).abs() < 1e-14;
    Ok(result(
        "extremal constants",
        ok,
        format!(
            "min(c - c_e) = {worst:e}, model c = {}, c_e = {}",
            m.c, m.c_e
        ),
    ))
}

fn check_fiber(seed: u64) -> Result<CheckResult> {
    let mut rng = stream_rng(seed, 2);
    let mut worst_rel = 0.0f64;
    let mut worst_root = 0.0f64;
    let mut worst_ratio = 0.0f64;
    for _ in 0..200 {
        let e = random_exponents(&mut rng);
        let c = EnergyComponents::new(
            rng.gen_range(0.1..10.0),
            rng.gen_range(0.1..10.0),
            rng.gen_range(0.1..10.0),
        );
        let (eu, eeu) = nonlinear_quotients(&c, &e)?;
        let k = extremal_constants(&e)?;
        worst_ratio = worst_ratio.max((eeu / eu - k.c_e / k.c).abs());
        let rep = intersection_check(&c, &e, None)?;
        worst_root = worst_root.max(rep.root_gap / (rep.r_n_at_root.abs() + 1.0));
        // ray maximum over a wide grid never exceeds eps(u)
        let mut best = f64::NEG_INFINITY;
        for i in 0..4000 {
            let s = rep.s_e * 10f64.powf(-2.0 + 4.0 * i as f64 / 3999.0);
            best = best.max(ray_quotients(&c, s, &e)?.0);
        }
        worst_rel = worst_rel.max((best - eu).abs() / eu);
    }
    let ok = worst_rel < 1e-4 && worst_root <= 1e-12 && worst_ratio < 1e-14;
    Ok(result(
        "fiber algebra",
        ok,
        format!(
            "grid max vs eps(u): {worst_rel:e}; root gap {worst_root:e}; ratio err {worst_ratio:e}"
        ),
    ))
}

fn random_zero_boundary(mesh: &std::sync::Arc<Mesh>, rng: &mut impl Rng) -> DiscreteField {
    let values = (0..mesh.num_nodes())
        .map(|i| {
            if mesh.is_boundary(i) {
                0.0
            } else {
                rng.gen_range(-1.0..1.0)
            }
        })
        .collect();
    DiscreteField::from_values(mesh, values).expect("finite values")
}

fn check_gradient(seed: u64) -> Result<CheckResult> {
    let mut rng = stream_rng(seed, 3);
    let mut worst = [0.0f64; 3];
    for (k, ex) in [(2.0, 3.0, 4.0), (1.5, 3.0, 4.0), (3.0, 4.0, 5.0)]
        .into_iter()
        .enumerate()
    {
        let mesh = Mesh::build(Domain::unit_interval(), &[101])?;
        let spec = ProblemSpec::new(
            Exponents::new(ex.0, ex.1, ex.2)?,
            0.05,
            CoefficientField::constant(1.0)?,
            CoefficientField::constant(1.0)?,
            mesh.clone(),
        )?;
        for _ in 0..100 {
            let u = random_zero_boundary(&mesh, &mut rng);
            let v = random_zero_boundary(&mesh, &mut rng);
            let g = weak_residual(&u, &spec)?.dot(&v);
            let h = 1e-5;
            let fd = (phi_regularized(&u.axpy(h, &v), &spec)?
                - phi_regularized(&u.axpy(-h, &v), &spec)?)
                / (2.0 * h);
            worst[k] = worst[k].max((g - fd).abs() / g.abs().max(1e-8));
        }
    }
    let ok = worst[0] <= 1e-6 && worst[1] <= 1e-5 && worst[2] <= 1e-5;
    Ok(result(
        "weak residual vs finite differences",
        ok,
        format!("relative errors p=2,1.5,3: {worst:?}"),
    ))
}

struct Existence {
    spec: ProblemSpec,
    ground: DiscreteField,
    energy: f64,
}

fn check_existence() -> Result<(CheckResult, Option<Existence>)> {
    let spec = model(2001, 1e-3)?;
    let r = solve_ground_state(&spec, None, &SolverOptions::default())?;
    let diag = if r.trivial {
        None
    } else {
        Some(nehari_diagnostics(&r.field, &spec)?)
    };
    let ok = r.converged
        && r.energy < 0.0
        && diag.is_some_and(|d| d.nehari_residual <= 1e-6 && d.fiber_second_derivative > 0.0)
        && r.field.min_interior() > 0.0;
    let detail = format!(
        "energy {:e}, residual {:e}, nehari {:e}, min interior {:e}",
        r.energy,
        r.residual_norm,
        r.nehari_residual,
        r.field.min_interior()
    );
    let ex = Existence {
        spec,
        energy: r.energy,
        ground: r.field,
    };
    Ok((result("ground state (eps = 1e-3)", ok, detail), Some(ex)))
}

fn check_nonexistence(ex: &Existence, seed: u64) -> Result<CheckResult> {
    let opts = ThresholdOptions {
        seed,
        extra_starts: vec![ex.ground.clone()],
        ..Default::default()
    };
    let th = estimate_thresholds_with(&ex.spec, &opts)?;
    let ceiling = ex.spec.epsilon() <= th.eps_star;
    let spec = ex.spec.with_epsilon(2.0 * th.eps_star)?;
    let r = solve_ground_state(&spec, None, &SolverOptions::default())?;
    let ok = ceiling && r.trivial && r.field.max_abs() == 0.0;
    Ok(result(
        "nonexistence above eps*",
        ok,
        format!(
            "eps* = {:e}; solution at 2 eps* trivial: {}",
            th.eps_star, r.trivial
        ),
    ))
}

fn check_mountain_pass(seed: u64) -> Result<CheckResult> {
    let spec = model(401, 1e-2)?;
    let g = solve_ground_state(&spec, None, &SolverOptions::default())?;
    let mp = solve_mountain_pass(
        &spec,
        &g.field,
        &MountainPassOptions {
            seed,
            ..Default::default()
        },
    )?;
    let barrier = mountain_pass_barrier(&spec, 100, seed)?;
    let ok = mp.converged
        && mp.energy > 0.0
        && g.energy < 0.0
        && mp.field.min_value() >= 0.0
        && barrier.holds
        && mp.path_level >= barrier.delta;
    Ok(result(
        "mountain pass (eps = 1e-2)",
        ok,
        format!(
            "c = {:e}, ground {:e}, barrier delta {:e}",
            mp.energy, g.energy, barrier.delta
        ),
    ))
}

fn check_scaling(ex: &Existence) -> Result<CheckResult> {
    let e = *ex.spec.exponents();
    let mut worst = 0.0f64;
    for form in [ScaledForm::Lambda, ScaledForm::Nu] {
        let (v, param) = scale_solution(&ex.ground, ex.spec.epsilon(), &e, form)?;
        let back = unscale(&v, param, &e, form)?;
        for (a, b) in back.values().iter().zip(ex.ground.values()) {
            worst = worst.max((a - b).abs() / b.abs().max(1e-300));
        }
    }
    let (_, lam) = scale_solution(&ex.ground, 0.01, &e, ScaledForm::Lambda)?;
    let (_, nu) = scale_solution(&ex.ground, 0.01, &e, ScaledForm::Nu)?;
    let ok = worst <= 1e-14 && (lam - 10.0).abs() < 1e-12 && (nu - 0.01).abs() < 1e-14;
    Ok(result(
        "scaling round trips",
        ok,
        format!("max relative error {worst:e}, lambda {lam}, nu {nu}"),
    ))
}

fn check_layer() -> Result<CheckResult> {
    let prof = layer_profile_1d(2.0, 4.0, 10.0, 1001)?;
    let err = prof
        .xi
        .iter()
        .zip(&prof.u)
        .map(|(x, u)| (u - (x / 2f64.sqrt()).tanh()).abs())
        .fold(0.0f64, f64::max);
    Ok(result(
        "layer profile (q=2, gamma=4)",
        err <= 1e-6,
        format!("max deviation from tanh {err:e}"),
    ))
}

fn check_separation(ex: &Existence, seed: u64) -> Result<CheckResult> {
    let mut rng = stream_rng(seed, 4);
    let mut ok = true;
    let mut details = Vec::new();
    let presets = [
        (1.0, 1.0, 1.0, 1.0),
        (0.5, 2.0, 1.0, 1.5),
        (1.0, 3.0, 0.5, 2.0),
    ];
    for bx in presets {
        let bx = CoefficientBox::new(bx.0, bx.1, bx.2, bx.3)?;
        for eta in [0.05, 0.1, 0.2] {
            let k = separation_constant(&bx, 3.0, 4.0, eta)?;
            ok &= k.kappa > 0.0;
            details.push(format!("{:.3e}", k.kappa));
        }
    }
    let spec = &ex.spec;
    let profile = limit_profile(spec)?;
    let k = separation_constant(&CoefficientBox::of_spec(spec)?, 3.0, 4.0, 0.1)?;
    let jl = j_limit(spec)?;
    for _ in 0..100 {
        let u = random_zero_boundary(spec.mesh(), &mut rng).map(|v| 1.5 * v.abs());
        let m = asymptotic_metrics(&u, &profile, spec, 0.1, &[1.0])?;
        ok &= k.kappa * m.measure_bad <= m.j_gap + 1e-12;
        ok &= j_functional(&u, spec)? >= jl;
    }
    Ok(result(
        "separation constant",
        ok,
        format!("kappa values {}", details.join(", ")),
    ))
}

fn check_energy_identities(ex: &Existence) -> Result<CheckResult> {
    let spec = &ex.spec;
    let u = &ex.ground;
    let c = energy_components(u, spec)?;
    let direct = phi(u, spec)?;
    let neg = phi(&u.scaled(-1.0), spec)?;
    let ok = (direct - ex.energy).abs() <= 1e-14 * direct.abs() && direct == neg;
    Ok(result(
        "energy identities",
        ok,
        format!("T = {:e}, A = {:e}, B = {:e}", c.t, c.a, c.b),
    ))
}

/// Runs the suite; every check reports pass/fail with a short detail line.
pub fn run_checks(seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = vec![
        check_constants(seed)?,
        check_fiber(seed)?,
        check_gradient(seed)?,
    ];
    let (existence, ex) = check_existence()?;
    out.push(existence);
    if let Some(ex) = ex {
        out.push(check_energy_identities(&ex)?);
        out.push(check_nonexistence(&ex, seed)?);
        out.push(check_scaling(&ex)?);
        out.push(check_separation(&ex, seed)?);
    }
    out.push(check_mountain_pass(seed)?);
    out.push(check_layer()?);
    Ok(out)
}
