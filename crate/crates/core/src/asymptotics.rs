//! Limit profile `u0 = (a/b)^(1/(gamma-q))`, convergence metrics of ground
//! states as `eps -> 0`, the uniform separation constant, the epsilon sweep and
//! the lambda/nu rescalings of the equation.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{j_of_qps, j_unchecked, phi, BOUNDARY_TOL};
use crate::problem::{lr_norm_of_qps, DiscreteField, Exponents, ProblemSpec};
use crate::solver::{solve_ground_state, SolverOptions};

#[derive(Debug, Clone, Serialize)]
pub struct LimitProfile {
    pub field: DiscreteField,
    pub rho_minus: f64,
    pub rho_plus: f64,
}

fn require_sigma_a(spec: &ProblemSpec) -> Result<()> {
    if !(spec.a().lower() > 0.0) {
        return Err(Error::Hypothesis(format!(
            "the limit profile needs a(x) >= sigma_a > 0, got sigma_a = {}",
            spec.a().lower()
        )));
    }
    Ok(())
}

pub fn limit_profile(spec: &ProblemSpec) -> Result<LimitProfile> {
    require_sigma_a(spec)?;
    let e = spec.exponents();
    let inv = 1.0 / (e.gamma - e.q);
    let values = spec
        .a_at_nodes()
        .iter()
        .zip(spec.b_at_nodes())
        .map(|(a, b)| (a / b).powf(inv))
        .collect();
    Ok(LimitProfile {
        field: DiscreteField::from_values(spec.mesh(), values)?,
        rho_minus: (spec.a().lower() / spec.b().upper()).powf(inv),
        rho_plus: (spec.a().upper() / spec.b().lower()).powf(inv),
    })
}

/// `u0` evaluated pointwise at the quadrature points (not interpolated).
pub(crate) fn limit_at_qps(spec: &ProblemSpec) -> Vec<f64> {
    let e = spec.exponents();
    let inv = 1.0 / (e.gamma - e.q);
    spec.a_at_qps()
        .iter()
        .zip(spec.b_at_qps())
        .map(|(a, b)| (a / b).powf(inv))
        .collect()
}

/// `J(u0)`, the minimum of the quadrature form of `J` over nonnegative fields.
pub fn j_limit(spec: &ProblemSpec) -> Result<f64> {
    require_sigma_a(spec)?;
    Ok(j_of_qps(&limit_at_qps(spec), spec))
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticMetrics {
    pub eta: f64,
    /// Measure of `{|u - u0| >= eta}` on the quadrature cloud.
    pub measure_bad: f64,
    /// `(r, ||u - u0||_r)`.
    pub lr_errors: Vec<(f64, f64)>,
    /// Max of `|u - u0|` over nodes at distance `>= 0.1 min_side` from the boundary.
    pub linf_interior_err: f64,
    /// `Phi_eps(u)` and `Phi_eps(u) - J(u0)`; absent when `u` does not vanish on the boundary.
    pub energy: Option<f64>,
    pub j_u: f64,
    pub j_limit: f64,
    pub energy_gap: Option<f64>,
    pub j_gap: f64,
}

pub fn asymptotic_metrics(
    u: &DiscreteField,
    profile: &LimitProfile,
    spec: &ProblemSpec,
    eta: f64,
    r_list: &[f64],
) -> Result<AsymptoticMetrics> {
    require_sigma_a(spec)?;
    if !(eta > 0.0) {
        return Err(Error::Input(format!("eta must be positive, got {eta}")));
    }
    let gamma = spec.exponents().gamma;
    for &r in r_list {
        if !(r >= 1.0) {
            return Err(Error::Input(format!("L^r errors need r >= 1, got {r}")));
        }
        if r >= gamma {
            return Err(Error::Input(format!(
                "r = {r} is not below gamma = {gamma}: convergence is strong in L^r only for r < gamma \
                 (at r = gamma it is weak and not measured)"
            )));
        }
    }
    let mesh = spec.mesh();
    if u.len() != mesh.num_nodes() || profile.field.len() != mesh.num_nodes() {
        return Err(Error::Input(
            "field and profile must live on the problem mesh".into(),
        ));
    }
    let exact = limit_at_qps(spec);
    let uq = u.at_qps();
    let diff: Vec<f64> = uq.iter().zip(&exact).map(|(a, b)| a - b).collect();
    let w = mesh.qp_weights();
    let measure_bad = diff
        .iter()
        .zip(w)
        .filter(|(d, _)| d.abs() >= eta)
        .map(|(_, w)| w)
        .sum();
    let lr_errors = r_list
        .iter()
        .map(|&r| (r, lr_norm_of_qps(&diff, w, r)))
        .collect();
    let cutoff = 0.1 * mesh.domain().min_side();
    let linf_interior_err = mesh
        .coords()
        .iter()
        .enumerate()
        .filter(|(_, x)| mesh.domain().distance_to_boundary(x) >= cutoff)
        .map(|(i, _)| (u.values()[i] - profile.field.values()[i]).abs())
        .fold(0.0f64, f64::max);
    let energy = if u.max_boundary_abs() <= BOUNDARY_TOL {
        Some(phi(u, spec)?)
    } else {
        None
    };
    let j_u = j_of_qps(&uq, spec);
    let j_lim = j_of_qps(&exact, spec);
    Ok(AsymptoticMetrics {
        eta,
        measure_bad,
        lr_errors,
        linf_interior_err,
        energy,
        j_u,
        j_limit: j_lim,
        energy_gap: energy.map(|e| e - j_lim),
        j_gap: j_u - j_lim,
    })
}

/// The coefficient box `[sigma_a, a_hat] x [sigma_b, b_hat]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoefficientBox {
    pub sigma_a: f64,
    pub a_hat: f64,
    pub sigma_b: f64,
    pub b_hat: f64,
}

impl CoefficientBox {
    pub fn new(sigma_a: f64, a_hat: f64, sigma_b: f64, b_hat: f64) -> Result<Self> {
        if !(sigma_a > 0.0
            && sigma_a <= a_hat
            && sigma_b > 0.0
            && sigma_b <= b_hat
            && a_hat.is_finite()
            && b_hat.is_finite())
        {
            return Err(Error::Input(format!(
                "invalid coefficient box [{sigma_a}, {a_hat}] x [{sigma_b}, {b_hat}]"
            )));
        }
        Ok(Self {
            sigma_a,
            a_hat,
            sigma_b,
            b_hat,
        })
    }

    pub fn of_spec(spec: &ProblemSpec) -> Result<Self> {
        Self::new(
            spec.a().lower(),
            spec.a().upper(),
            spec.b().lower(),
            spec.b().upper(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeparationConstant {
    pub eta: f64,
    pub kappa: f64,
    /// Beyond this `s`, `j - j(rho) >= 1` for every `(alpha, beta)` in the box.
    pub s_bound: f64,
}

const SEP_AB_GRID: usize = 64;
const SEP_S_GRID: usize = 512;

/// `kappa_eta = min(1, min over the box and over s >= 0 with |s - rho| >= eta
/// of j(s) - j(rho))` by brute force on a grid.
pub fn separation_constant(
    bx: &CoefficientBox,
    q: f64,
    gamma: f64,
    eta: f64,
) -> Result<SeparationConstant> {
    if !(1.0 < q && q < gamma) {
        return Err(Error::Input(format!(
            "need 1 < q < gamma, got q={q}, gamma={gamma}"
        )));
    }
    if !(eta > 0.0) {
        return Err(Error::Input(format!("eta must be positive, got {eta}")));
    }
    let inv = 1.0 / (gamma - q);
    let rho_plus = (bx.a_hat / bx.sigma_b).powf(inv);
    let m0 = bx.a_hat * rho_plus.powf(q) * (gamma - q) / (q * gamma);
    let lower = |s: f64| bx.sigma_b / gamma * s.powf(gamma) - bx.a_hat / q * s.powf(q) - m0 - 1.0;
    let mut hi = rho_plus.max(1.0);
    while lower(hi) < 0.0 {
        hi *= 2.0;
    }
    let mut lo = rho_plus;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if lower(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s_bound = hi;
    let lin = |a: f64, b: f64, i: usize, n: usize| {
        if n == 1 {
            a
        } else {
            a + (b - a) * i as f64 / (n - 1) as f64
        }
    };
    let mut kappa = 1.0f64;
    for ia in 0..SEP_AB_GRID {
        let alpha = lin(bx.sigma_a, bx.a_hat, ia, SEP_AB_GRID);
        for ib in 0..SEP_AB_GRID {
            let beta = lin(bx.sigma_b, bx.b_hat, ib, SEP_AB_GRID);
            let rho = (alpha / beta).powf(inv);
            let j_rho = j_unchecked(alpha, beta, rho, q, gamma);
            let mut consider = |s: f64| {
                if s >= 0.0 && (s - rho).abs() >= eta {
                    kappa = kappa.min(j_unchecked(alpha, beta, s, q, gamma) - j_rho);
                }
            };
            for k in 0..SEP_S_GRID {
                consider(lin(0.0, s_bound, k, SEP_S_GRID));
            }
            consider(0.0);
            // the excess is monotone on each side of rho, so the tube edges are the exact
            // minimizers; they bypass the filter, where roundoff in |s - rho| could drop them
            kappa = kappa.min(j_unchecked(alpha, beta, rho + eta, q, gamma) - j_rho);
            if rho >= eta {
                kappa = kappa.min(j_unchecked(alpha, beta, rho - eta, q, gamma) - j_rho);
            }
        }
    }
    Ok(SeparationConstant {
        eta,
        kappa,
        s_bound,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepOptions {
    pub eps_list: Vec<f64>,
    pub eta: f64,
    pub r_list: Vec<f64>,
    pub solver: SolverOptions,
    /// Rows with `eps >= eps_e_star` are flagged `above_threshold`.
    pub eps_e_star: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    pub energy: f64,
    pub energy_gap: f64,
    pub j_gap: f64,
    pub measure_bad: f64,
    pub lr_errors: Vec<(f64, f64)>,
    pub linf_interior_err: f64,
    pub converged: bool,
    pub trivial: bool,
    pub above_threshold: bool,
    pub iterations: usize,
}

impl SweepRow {
    pub fn lr_error(&self, r: f64) -> Option<f64> {
        self.lr_errors
            .iter()
            .find(|(s, _)| *s == r)
            .map(|(_, e)| *e)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub eta: f64,
    pub j_limit: f64,
    pub rows: Vec<SweepRow>,
    #[serde(skip)]
    pub fields: Vec<DiscreteField>,
}

pub fn epsilon_sweep(spec_template: &ProblemSpec, opts: &SweepOptions) -> Result<SweepReport> {
    if opts.eps_list.is_empty() {
        return Err(Error::Input("eps_list is empty".into()));
    }
    for w in opts.eps_list.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::Input(format!(
                "eps_list must be strictly decreasing ({} then {})",
                w[0], w[1]
            )));
        }
    }
    if let Some(&bad) = opts.eps_list.iter().find(|&&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::Input(format!(
            "eps_list entries must be positive, got {bad}"
        )));
    }
    let profile = limit_profile(spec_template)?;
    // validate eta and r_list once before solving anything
    asymptotic_metrics(
        &profile.field.scaled(0.0),
        &profile,
        spec_template,
        opts.eta,
        &opts.r_list,
    )?;
    let results: Vec<Result<(SweepRow, DiscreteField)>> = opts
        .eps_list
        .par_iter()
        .map(|&eps| {
            let spec = spec_template.with_epsilon(eps)?;
            let report = solve_ground_state(&spec, None, &opts.solver)?;
            let m = asymptotic_metrics(&report.field, &profile, &spec, opts.eta, &opts.r_list)?;
            let row = SweepRow {
                eps,
                energy: report.energy,
                energy_gap: report.energy - m.j_limit,
                j_gap: m.j_gap,
                measure_bad: m.measure_bad,
                lr_errors: m.lr_errors,
                linf_interior_err: m.linf_interior_err,
                converged: report.converged,
                trivial: report.trivial,
                above_threshold: opts.eps_e_star.is_some_and(|t| eps >= t),
                iterations: report.iterations,
            };
            Ok((row, report.field))
        })
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut fields = Vec::with_capacity(results.len());
    for r in results {
        let (row, field) = r?;
        rows.push(row);
        fields.push(field);
    }
    Ok(SweepReport {
        eta: opts.eta,
        j_limit: j_limit(spec_template)?,
        rows,
        fields,
    })
}

impl SweepReport {
    /// CSV with columns `eps, energy, energy_gap, J_gap, measure_bad_eta,
    /// l1_err, l2_err, linf_interior_err, converged`; `l2_err` is blank when
    /// `r = 2` was not measured.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "eps",
            "energy",
            "energy_gap",
            "J_gap",
            "measure_bad_eta",
            "l1_err",
            "l2_err",
            "linf_interior_err",
            "converged",
        ])?;
        let f = |x: f64| format!("{x:.16e}");
        let opt = |x: Option<f64>| x.map(f).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                f(r.eps),
                f(r.energy),
                f(r.energy_gap),
                f(r.j_gap),
                f(r.measure_bad),
                opt(r.lr_error(1.0)),
                opt(r.lr_error(2.0)),
                f(r.linf_interior_err),
                r.converged.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaledForm {
    /// `-Delta_p v = lambda a |v|^(q-2) v - b |v|^(gamma-2) v`, `v = eps^(-1/(gamma-p)) u`.
    Lambda,
    /// `-Delta_p v = a |v|^(q-2) v - nu b |v|^(gamma-2) v`, `v = eps^(-1/(q-p)) u`.
    Nu,
}

impl ScaledForm {
    /// `(multiplier applied to u, parameter)` for a given `eps`.
    pub fn factors(&self, eps: f64, e: &Exponents) -> (f64, f64) {
        match self {
            ScaledForm::Lambda => (
                eps.powf(-1.0 / (e.gamma - e.p)),
                eps.powf(-(e.gamma - e.q) / (e.gamma - e.p)),
            ),
            ScaledForm::Nu => (
                eps.powf(-1.0 / (e.q - e.p)),
                eps.powf((e.gamma - e.q) / (e.q - e.p)),
            ),
        }
    }

    /// `(diffusion, a_mult, b_mult)` of the rescaled equation.
    pub fn multipliers(&self, param: f64) -> (f64, f64, f64) {
        match self {
            ScaledForm::Lambda => (1.0, param, 1.0),
            ScaledForm::Nu => (1.0, 1.0, param),
        }
    }
}

/// Rescaled solution and the parameter of the rescaled equation.
pub fn scale_solution(
    u_eps: &DiscreteField,
    eps: f64,
    e: &Exponents,
    target: ScaledForm,
) -> Result<(DiscreteField, f64)> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Input(format!("epsilon must be positive, got {eps}")));
    }
    let (m, param) = target.factors(eps, e);
    Ok((u_eps.scaled(m), param))
}

/// Inverse of [`scale_solution`]: `u = lambda^(-1/(gamma-q)) u_lambda` or
/// `u = nu^(1/(gamma-q)) u_nu`.
pub fn unscale(
    u_scaled: &DiscreteField,
    param: f64,
    e: &Exponents,
    form: ScaledForm,
) -> Result<DiscreteField> {
    if !(param > 0.0 && param.is_finite()) {
        return Err(Error::Input(format!(
            "scaling parameter must be positive, got {param}"
        )));
    }
    let k = 1.0 / (e.gamma - e.q);
    let m = match form {
        ScaledForm::Lambda => param.powf(-k),
        ScaledForm::Nu => param.powf(k),
    };
    Ok(u_scaled.scaled(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{CoefficientField, Domain, Mesh};

    fn spec(a: f64, b: f64) -> ProblemSpec {
        let mesh = Mesh::build(Domain::unit_interval(), &[21]).unwrap();
        ProblemSpec::new(
            Exponents::new(2.0, 3.0, 4.0).unwrap(),
            0.01,
            CoefficientField::constant(a).unwrap(),
            CoefficientField::constant(b).unwrap(),
            mesh,
        )
        .unwrap()
    }

    #[test]
    fn profile_examples() {
        let p = limit_profile(&spec(1.0, 1.0)).unwrap();
        assert!(p.field.values().iter().all(|&v| v == 1.0));
        let p = limit_profile(&spec(2.0, 1.0)).unwrap();
        assert!(p.field.values().iter().all(|&v| (v - 2.0).abs() < 1e-15));
        assert!(matches!(
            limit_profile(&spec(0.0, 1.0)),
            Err(Error::Hypothesis(_))
        ));
    }

    #[test]
    fn metrics_trivial_cases() {
        let s = spec(1.0, 1.0);
        let p = limit_profile(&s).unwrap();
        let z = DiscreteField::zeros(s.mesh());
        let m = asymptotic_metrics(&z, &p, &s, 0.5, &[1.0, 2.0]).unwrap();
        assert!((m.measure_bad - 1.0).abs() < 1e-14);
        assert!((m.j_limit + 1.0 / 12.0).abs() < 1e-15);
        assert!(matches!(
            asymptotic_metrics(&z, &p, &s, 0.5, &[4.0]),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn scaling_examples() {
        let e = Exponents::new(2.0, 3.0, 4.0).unwrap();
        let (m, lam) = ScaledForm::Lambda.factors(0.01, &e);
        assert!((m - 10.0).abs() < 1e-12 && (lam - 10.0).abs() < 1e-12);
        let (m, nu) = ScaledForm::Nu.factors(0.01, &e);
        assert!((m - 100.0).abs() < 1e-10 && (nu - 0.01).abs() < 1e-15);
    }

    #[test]
    fn sweep_rejects_increasing_list() {
        let opts = SweepOptions {
            eps_list: vec![0.01, 0.1],
            eta: 0.1,
            r_list: vec![1.0],
            solver: SolverOptions::default(),
            eps_e_star: None,
        };
        assert!(matches!(
            epsilon_sweep(&spec(1.0, 1.0), &opts),
            Err(Error::Input(_))
        ));
    }
}
