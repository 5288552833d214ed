//! Ground state by preconditioned descent on `Phi_eps`, the second (mountain
//! pass) solution by a climbing-image string method on `Phi_eps^+`, and the
//! small-sphere barrier estimate.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{
    check_boundary, energy_components, gradient_power, phi_of_values, phi_plus_of_values,
    residual_values,
};
use crate::precond::Preconditioner;
use crate::problem::{DiscreteField, ProblemSpec};
use crate::rayleigh::{fiber_scalings, ray_quotients, sobolev_constant, stream_rng};

const ARMIJO_C: f64 = 1e-4;
const ARMIJO_SHRINK: f64 = 0.5;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, Serialize)]
pub struct SolverOptions {
    /// Converged when `max |residual| <= tol_rel (1 + |Phi|)`.
    pub tol_rel: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Random nonnegative restarts besides the informed seed.
    pub restarts: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_rel: 1e-8,
            max_iters: 50_000,
            seed: 0,
            restarts: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub energy: f64,
    pub residual_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub field: DiscreteField,
    pub energy: f64,
    pub residual_norm: f64,
    /// `|eps T - A + B| / (eps T + A + B)`, 0 for the zero field.
    pub nehari_residual: f64,
    /// `(p - q) eps T + (gamma - q) B`.
    pub fiber_second_derivative: f64,
    pub iterations: usize,
    pub converged: bool,
    pub tol_res: f64,
    /// Index of the selected run (0 is the informed seed).
    pub selected_run: usize,
    /// Another converged run reached the same energy with a different field.
    pub multiplicity: bool,
    /// The zero field was returned because no candidate had negative energy.
    pub trivial: bool,
    pub delta_reg: f64,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

/// Writes an iteration trace as CSV (`iteration,energy,residual_norm`).
pub fn write_trace_csv<W: Write>(trace: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "energy", "residual_norm"])?;
    for r in trace {
        w.write_record([
            r.iteration.to_string(),
            format!("{:.16e}", r.energy),
            format!("{:.16e}", r.residual_norm),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
struct Run {
    values: Vec<f64>,
    energy: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<TraceRow>,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(u: &[f64], t: f64, d: &[f64]) -> Vec<f64> {
    u.iter().zip(d).map(|(a, b)| a + t * b).collect()
}

/// After reaching the tolerance the descent keeps polishing down to this
/// fraction of it (or until no decrease is representable), so that derived
/// quantities such as the Nehari identity are resolved well below `tol`.
const POLISH_FACTOR: f64 = 1e-3;

/// Preconditioned Armijo descent on `Phi_eps` from `start`.
fn descend(spec: &ProblemSpec, pre: &Preconditioner, start: Vec<f64>, opts: &SolverOptions) -> Run {
    let eps = spec.epsilon();
    let mut u = start;
    let mut energy = phi_of_values(&u, spec);
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut prev_res = f64::INFINITY;
    let res = loop {
        let r = residual_values(&u, spec, eps, 1.0, 1.0, false);
        let res = max_abs(&r);
        trace.push(TraceRow {
            iteration: iterations,
            energy,
            residual_norm: res,
        });
        let tol = opts.tol_rel * (1.0 + energy.abs());
        // polishing ends at the target or once progress stalls at roundoff level
        let stalled = res <= tol && res > 0.9 * prev_res;
        if res <= POLISH_FACTOR * tol || stalled || iterations >= opts.max_iters {
            break res;
        }
        prev_res = res;
        let d: Vec<f64> = pre.solve(&r).into_iter().map(|x| -x).collect();
        let slope = dot(&r, &d);
        if !(slope < 0.0) {
            break res;
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial = axpy(&u, alpha, &d);
            let e = phi_of_values(&trial, spec);
            if e <= energy + ARMIJO_C * alpha * slope {
                accepted = Some((trial, e));
                break;
            }
            alpha *= ARMIJO_SHRINK;
        }
        match accepted {
            Some((trial, e)) => {
                iterations += 1;
                u = trial;
                energy = e;
            }
            // no decrease representable in floating point
            None => break res,
        }
    };
    let converged = res <= opts.tol_rel * (1.0 + energy.abs());
    Run {
        values: u,
        energy,
        iterations,
        converged,
        trace,
    }
}

/// Fiber-optimal informed seed `s_e(w) w` with `w` the limit profile zeroed on
/// the boundary; `None` if `w` is not in `D`.
fn informed_seed(spec: &ProblemSpec) -> Option<Vec<f64>> {
    let mesh = spec.mesh();
    let e = spec.exponents();
    let w: Vec<f64> = spec
        .a_at_nodes()
        .iter()
        .zip(spec.b_at_nodes())
        .enumerate()
        .map(|(i, (a, b))| {
            if mesh.is_boundary(i) {
                0.0
            } else {
                (a / b).powf(1.0 / (e.gamma - e.q))
            }
        })
        .collect();
    let field = DiscreteField::from_raw(mesh, w);
    let c = energy_components(&field, spec).ok()?;
    if c.a <= spec.tol_a() || c.t <= 0.0 {
        return None;
    }
    let s = fiber_scalings(&c, e).ok()?.s_e;
    Some(field.values().iter().map(|v| s * v).collect())
}

fn random_seed(spec: &ProblemSpec, seed: u64, stream: u64) -> Vec<f64> {
    let mesh = spec.mesh();
    let e = spec.exponents();
    let rho_plus = (spec.a().upper() / spec.b().lower()).powf(1.0 / (e.gamma - e.q));
    let hi = if rho_plus > 0.0 { 2.0 * rho_plus } else { 1.0 };
    let mut rng = stream_rng(seed, stream);
    (0..mesh.num_nodes())
        .map(|i| {
            if mesh.is_boundary(i) {
                0.0
            } else {
                rng.gen_range(0.0..hi)
            }
        })
        .collect()
}

/// `P = eps K + M` (stiffness plus lumped mass) used as the descent metric.
pub(crate) fn descent_preconditioner(spec: &ProblemSpec) -> Result<Preconditioner> {
    Preconditioner::new(spec.mesh(), spec.epsilon(), 1.0)
}

/// Global minimization of `Phi_eps`. Never fails above the threshold: when no
/// candidate has negative energy the zero field is returned as converged.
pub fn solve_ground_state(
    spec: &ProblemSpec,
    init: Option<&DiscreteField>,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    let mesh = spec.mesh();
    if let Some(f) = init {
        if f.len() != mesh.num_nodes() {
            return Err(Error::Input(
                "initial field lives on a different mesh".into(),
            ));
        }
        check_boundary(f)?;
    }
    let pre = descent_preconditioner(spec)?;
    let first = match init {
        Some(f) => Some(f.values().to_vec()),
        None => informed_seed(spec),
    };
    let mut starts: Vec<Vec<f64>> = Vec::new();
    starts.extend(first);
    for k in 0..opts.restarts {
        starts.push(random_seed(spec, opts.seed, k as u64));
    }
    let runs: Vec<Run> = starts
        .into_par_iter()
        .map(|s| descend(spec, &pre, s, opts))
        .collect();

    let pick = |filter_converged: bool| {
        let mut best: Option<usize> = None;
        for (i, r) in runs.iter().enumerate() {
            if filter_converged && !r.converged {
                continue;
            }
            if best.is_none_or(|b| r.energy < runs[b].energy - 1e-12 * (1.0 + runs[b].energy.abs()))
            {
                best = Some(i);
            }
        }
        best
    };
    let chosen = pick(true)
        .or_else(|| pick(false))
        .expect("at least one run");
    let best = &runs[chosen];

    let mut multiplicity = false;
    if best.converged {
        let scale = max_abs(&best.values).max(1e-300);
        let tol = opts.tol_rel * (1.0 + best.energy.abs());
        for (i, r) in runs.iter().enumerate() {
            if i == chosen || !r.converged || (r.energy - best.energy).abs() > tol {
                continue;
            }
            let diff = r
                .values
                .iter()
                .zip(&best.values)
                .fold(0.0f64, |m, (a, b)| m.max((a.abs() - b.abs()).abs()));
            if diff > 1e-4 * scale {
                multiplicity = true;
            }
        }
    }

    if !(best.energy < 0.0) {
        let zero = DiscreteField::zeros(mesh);
        return Ok(SolveReport {
            field: zero,
            energy: 0.0,
            residual_norm: 0.0,
            nehari_residual: 0.0,
            fiber_second_derivative: 0.0,
            iterations: best.iterations,
            converged: true,
            tol_res: opts.tol_rel,
            selected_run: chosen,
            multiplicity: false,
            trivial: true,
            delta_reg: spec.delta_reg(),
            trace: best.trace.clone(),
        });
    }

    let values: Vec<f64> = best.values.iter().map(|v| v.abs()).collect();
    let field = DiscreteField::from_raw(mesh, values);
    let energy = phi_of_values(field.values(), spec);
    let residual_norm = max_abs(&residual_values(
        field.values(),
        spec,
        spec.epsilon(),
        1.0,
        1.0,
        false,
    ));
    let tol_res = opts.tol_rel * (1.0 + energy.abs());
    let diag = nehari_diagnostics(&field, spec)?;
    Ok(SolveReport {
        field,
        energy,
        residual_norm,
        nehari_residual: diag.nehari_residual,
        fiber_second_derivative: diag.fiber_second_derivative,
        iterations: best.iterations,
        converged: best.converged && residual_norm <= tol_res,
        tol_res,
        selected_run: chosen,
        multiplicity,
        trivial: false,
        delta_reg: spec.delta_reg(),
        trace: best.trace.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NehariDiagnostics {
    /// `|eps T - A + B| / (eps T + A + B)`.
    pub nehari_residual: f64,
    pub fiber_second_derivative: f64,
    pub r_n: f64,
    pub r_e: f64,
}

pub fn nehari_diagnostics(u: &DiscreteField, spec: &ProblemSpec) -> Result<NehariDiagnostics> {
    let c = energy_components(u, spec)?;
    if u.is_identically_zero() || !(c.t > 0.0) {
        return Err(Error::Domain(
            "Nehari diagnostics are undefined for the zero field".into(),
        ));
    }
    let e = spec.exponents();
    let eps = spec.epsilon();
    let (r_n, r_e) = ray_quotients(&c, 1.0, e)?;
    Ok(NehariDiagnostics {
        nehari_residual: (eps * c.t - c.a + c.b).abs() / (eps * c.t + c.a + c.b),
        fiber_second_derivative: (e.p - e.q) * eps * c.t + (e.gamma - e.q) * c.b,
        r_n,
        r_e,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MountainPassOptions {
    /// Converged when `max |residual of Phi^+| <= tol_rel (1 + |c|)`.
    pub tol_rel: f64,
    pub path_points: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// Relative amplitude of a random perturbation of the initial straight path.
    pub perturbation: f64,
}

impl Default for MountainPassOptions {
    fn default() -> Self {
        Self {
            tol_rel: 1e-10,
            path_points: 21,
            max_iters: 20_000,
            seed: 0,
            perturbation: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MountainPassReport {
    pub field: DiscreteField,
    pub energy: f64,
    pub residual_norm: f64,
    /// Maximum of `Phi^+` over the final path.
    pub path_level: f64,
    pub converged: bool,
    pub iterations: usize,
    pub tol_res: f64,
    pub path_energies: Vec<f64>,
    pub delta_reg: f64,
}

fn residual_plus(spec: &ProblemSpec, v: &[f64]) -> Vec<f64> {
    residual_values(v, spec, spec.epsilon(), 1.0, 1.0, true)
}

/// Armijo step along `d` for `sign * Phi^+` (sign = 1 descends, -1 ascends).
fn armijo_plus(
    spec: &ProblemSpec,
    v: &[f64],
    e0: f64,
    d: &[f64],
    slope: f64,
    sign: f64,
) -> Option<(Vec<f64>, f64)> {
    // slope = sign * <grad, d> must be negative
    if !(slope < 0.0) {
        return None;
    }
    let mut alpha = 1.0;
    for _ in 0..MAX_HALVINGS {
        let trial = axpy(v, alpha, d);
        let e = phi_plus_of_values(&trial, spec);
        if sign * e <= sign * e0 + ARMIJO_C * alpha * slope {
            return Some((trial, e));
        }
        alpha *= ARMIJO_SHRINK;
    }
    None
}

/// Redistributes knots to equal `P`-arc length on `[0, fixed]` and `[fixed, N-1]`.
fn reparametrize(path: &mut [Vec<f64>], fixed: usize, pre: &Preconditioner, spec: &ProblemSpec) {
    let last = path.len() - 1;
    redistribute(&mut path[..=fixed], pre, spec);
    redistribute(&mut path[fixed..=last], pre, spec);
}

/// Equal `P`-arc-length knots on a polyline with fixed end points.
fn redistribute(seg: &mut [Vec<f64>], pre: &Preconditioner, spec: &ProblemSpec) {
    let mesh = spec.mesh();
    let n = seg.len() - 1;
    if n < 2 {
        return;
    }
    let mut cum = vec![0.0];
    for w in seg.windows(2) {
        let diff: Vec<f64> = w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect();
        let last = *cum.last().unwrap();
        cum.push(last + pre.norm(mesh, &diff));
    }
    let total = cum[n];
    if !(total > 0.0) {
        return;
    }
    let mut fresh = Vec::with_capacity(n - 1);
    let mut j = 0;
    for k in 1..n {
        let target = total * k as f64 / n as f64;
        while j + 1 < n && cum[j + 1] < target {
            j += 1;
        }
        let len = cum[j + 1] - cum[j];
        let t = if len > 0.0 {
            (target - cum[j]) / len
        } else {
            0.0
        };
        fresh.push(
            seg[j]
                .iter()
                .zip(&seg[j + 1])
                .map(|(a, b)| a + t * (b - a))
                .collect::<Vec<f64>>(),
        );
    }
    for (k, v) in fresh.into_iter().enumerate() {
        seg[k + 1] = v;
    }
}

/// Discretized min-max over paths from 0 to the ground state.
pub fn solve_mountain_pass(
    spec: &ProblemSpec,
    ground_state: &DiscreteField,
    opts: &MountainPassOptions,
) -> Result<MountainPassReport> {
    let mesh = spec.mesh();
    if ground_state.len() != mesh.num_nodes() {
        return Err(Error::Input(
            "ground state lives on a different mesh".into(),
        ));
    }
    check_boundary(ground_state)?;
    let gs_energy = phi_of_values(ground_state.values(), spec);
    if !(gs_energy < 0.0) {
        return Err(Error::Contract(format!(
            "mountain pass needs a ground state with negative energy, got {gs_energy:e}"
        )));
    }
    if opts.path_points < 3 {
        return Err(Error::Input(format!(
            "path needs at least 3 points, got {}",
            opts.path_points
        )));
    }
    let pre = descent_preconditioner(spec)?;
    let n = opts.path_points;
    let end = ground_state.values().to_vec();
    let mut rng = stream_rng(opts.seed, u64::MAX);
    let scale = max_abs(&end);
    let mut path: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let t = k as f64 / (n - 1) as f64;
            end.iter()
                .enumerate()
                .map(|(i, v)| {
                    let mut x = t * v;
                    if opts.perturbation > 0.0 && k > 0 && k < n - 1 && !mesh.is_boundary(i) {
                        x += opts.perturbation * scale * t * (1.0 - t) * rng.gen_range(-1.0..1.0);
                    }
                    x
                })
                .collect()
        })
        .collect();
    let mut energies: Vec<f64> = path.iter().map(|v| phi_plus_of_values(v, spec)).collect();

    let mut iterations = 0;
    let mut converged = false;
    let mut top = 1;
    let mut residual_norm = f64::INFINITY;
    while iterations < opts.max_iters {
        top = (1..n - 1).fold(1, |b, i| if energies[i] > energies[b] { i } else { b });
        let v = &path[top];
        let g = residual_plus(spec, v);
        residual_norm = max_abs(&g);
        if residual_norm <= opts.tol_rel * (1.0 + energies[top].abs()) && energies[top] > 0.0 {
            converged = true;
            break;
        }
        iterations += 1;

        // climbing image: descend across the path, ascend along it
        let mut tau: Vec<f64> = path[top + 1]
            .iter()
            .zip(&path[top - 1])
            .map(|(a, b)| a - b)
            .collect();
        let tn = pre.norm(mesh, &tau);
        if tn > 0.0 {
            tau.iter_mut().for_each(|x| *x /= tn);
        }
        let pg = pre.solve(&g);
        let gt = dot(&g, &tau);
        let d_perp: Vec<f64> = pg.iter().zip(&tau).map(|(a, t)| -(a - gt * t)).collect();
        let mut cur = path[top].clone();
        let mut e_cur = energies[top];
        if let Some((nv, ne)) = armijo_plus(spec, &cur, e_cur, &d_perp, dot(&g, &d_perp), 1.0) {
            cur = nv;
            e_cur = ne;
        }
        let g2 = residual_plus(spec, &cur);
        let gt2 = dot(&g2, &tau);
        let d_par: Vec<f64> = tau.iter().map(|t| gt2 * t).collect();
        if let Some((nv, ne)) = armijo_plus(spec, &cur, e_cur, &d_par, -gt2 * gt2, -1.0) {
            cur = nv;
            e_cur = ne;
        }
        path[top] = cur;
        energies[top] = e_cur;

        // the remaining interior knots relax downhill
        let others: Vec<(usize, Vec<f64>, f64)> = (1..n - 1)
            .into_par_iter()
            .filter(|&i| i != top)
            .map(|i| {
                let v = &path[i];
                let g = residual_plus(spec, v);
                let d: Vec<f64> = pre.solve(&g).into_iter().map(|x| -x).collect();
                match armijo_plus(spec, v, energies[i], &d, dot(&g, &d), 1.0) {
                    Some((nv, ne)) => (i, nv, ne),
                    None => (i, v.clone(), energies[i]),
                }
            })
            .collect();
        for (i, v, e) in others {
            path[i] = v;
            energies[i] = e;
        }
        reparametrize(&mut path, top, &pre, spec);
        for i in 1..n - 1 {
            if i != top {
                energies[i] = phi_plus_of_values(&path[i], spec);
            }
        }
    }

    let values: Vec<f64> = path[top].iter().map(|v| v.max(0.0)).collect();
    let field = DiscreteField::from_raw(mesh, values);
    let energy = phi_plus_of_values(field.values(), spec);
    let final_res = max_abs(&residual_plus(spec, field.values()));
    let path_level = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tol_res = opts.tol_rel * (1.0 + energy.abs());
    Ok(MountainPassReport {
        field,
        energy,
        residual_norm: final_res.max(if converged { 0.0 } else { residual_norm }),
        path_level,
        converged: converged && energy > 0.0,
        iterations,
        tol_res,
        path_energies: energies,
        delta_reg: spec.delta_reg(),
    })
}

/// Small-sphere barrier `Phi^+(u) >= delta` on `||u||_{1,p} = rho`, with
/// `rho`, `delta` from the embedding estimate `int |u|^q <= S_q^q ||u||_{1,p}^q`.
#[derive(Debug, Clone, Serialize)]
pub struct Barrier {
    pub sobolev_constant: f64,
    pub rho: f64,
    pub delta: f64,
    pub samples: usize,
    pub min_sampled: f64,
    pub holds: bool,
}

pub fn mountain_pass_barrier(spec: &ProblemSpec, samples: usize, seed: u64) -> Result<Barrier> {
    let mesh = spec.mesh();
    let e = spec.exponents();
    let eps = spec.epsilon();
    let s_q = sobolev_constant(mesh, e.p, e.q, 8, seed)?;
    let c = spec.a().upper() / e.q * s_q.powf(e.q);
    if !(c > 0.0) {
        return Err(Error::Hypothesis(
            "barrier estimate needs a nonzero coefficient a".into(),
        ));
    }
    let rho = (eps / (2.0 * e.p * c)).powf(1.0 / (e.q - e.p));
    let delta = eps / (2.0 * e.p) * rho.powf(e.p);
    let pre = Preconditioner::new(mesh, 1.0, 0.0)?;
    let values: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, 1000 + k as u64);
            let mut u: Vec<f64> = (0..mesh.num_nodes())
                .map(|i| {
                    if mesh.is_boundary(i) {
                        0.0
                    } else {
                        rng.gen_range(-1.0..1.0)
                    }
                })
                .collect();
            if k % 2 == 0 {
                // smooth half of the samples
                u = pre.solve(&u);
            }
            let t = gradient_power(mesh, &u, e.p);
            let s = rho / t.powf(1.0 / e.p);
            u.iter_mut().for_each(|x| *x *= s);
            phi_plus_of_values(&u, spec)
        })
        .collect();
    let min_sampled = values.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(Barrier {
        sobolev_constant: s_q,
        rho,
        delta,
        samples,
        min_sampled,
        holds: min_sampled >= delta,
    })
}
