//! Nonlinear Rayleigh quotients along rays, critical fiber scalings, the
//! extremal constants and the numerical estimate of the thresholds
//! `eps*` and `eps_e*`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{
    gradient_power, residual_kernel, weighted_power, EnergyComponents, Reaction,
};
use crate::precond::Preconditioner;
use crate::problem::{DiscreteField, Exponents, Mesh, ProblemSpec};

/// `c_{p,q,gamma}` and `c_{e,p,q,gamma}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtremalConstants {
    pub c: f64,
    pub c_e: f64,
}

pub fn extremal_constants(e: &Exponents) -> Result<ExtremalConstants> {
    e.validate()?;
    let Exponents { p, q, gamma } = *e;
    let k = (q - p) / (gamma - q);
    let c = (gamma - q) / (gamma - p) * ((q - p) / (gamma - p)).powf(k);
    let c_e = p * (gamma - q) / (q * (gamma - p)) * (gamma * (q - p) / (q * (gamma - p))).powf(k);
    Ok(ExtremalConstants { c, c_e })
}

/// `(R_N(s u), R_e(s u))` from the components of `u`.
pub fn ray_quotients(c: &EnergyComponents, s: f64, e: &Exponents) -> Result<(f64, f64)> {
    if !(c.t > 0.0) {
        return Err(Error::Domain(format!(
            "ray quotients need T > 0, got T = {}",
            c.t
        )));
    }
    if !(s > 0.0) {
        return Err(Error::Input(format!(
            "ray parameter must be positive, got {s}"
        )));
    }
    let Exponents { p, q, gamma } = *e;
    let sa = s.powf(q - p);
    let sb = s.powf(gamma - p);
    let r_n = (c.a * sa - c.b * sb) / c.t;
    let r_e = p / c.t * (c.a / q * sa - c.b / gamma * sb);
    Ok((r_n, r_e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiberScalings {
    pub s_n: f64,
    pub s_e: f64,
}

fn check_ab(c: &EnergyComponents) -> Result<()> {
    if !(c.a > 0.0) {
        return Err(Error::Domain(format!("field is not in D: A = {}", c.a)));
    }
    if !(c.b > 0.0) {
        return Err(Error::Domain(format!("B must be positive, got {}", c.b)));
    }
    Ok(())
}

/// Maximizer `s_N` of `s -> R_N(s u)` and root `s_e` of `R_N = R_e`.
pub fn fiber_scalings(c: &EnergyComponents, e: &Exponents) -> Result<FiberScalings> {
    check_ab(c)?;
    let Exponents { p, q, gamma } = *e;
    let inv = 1.0 / (gamma - q);
    let s_n = ((q - p) * c.a / ((gamma - p) * c.b)).powf(inv);
    let s_e = (gamma * (q - p) * c.a / (q * (gamma - p) * c.b)).powf(inv);
    Ok(FiberScalings { s_n, s_e })
}

/// Fiber scalings of a field, with membership in `D` judged by `tol_A`.
pub fn field_fiber_scalings(u: &DiscreteField, spec: &ProblemSpec) -> Result<FiberScalings> {
    let c = crate::functionals::energy_components(u, spec)?;
    if c.a <= spec.tol_a() {
        return Err(Error::Domain(format!(
            "field is not in D: A = {:e} <= tol_A",
            c.a
        )));
    }
    fiber_scalings(&c, spec.exponents())
}

/// Degree-zero quotient `A^((gamma-p)/(gamma-q)) / (T B^((q-p)/(gamma-q)))`.
pub fn upsilon(c: &EnergyComponents, e: &Exponents) -> Result<f64> {
    if !(c.t > 0.0) {
        return Err(Error::Domain(format!("T must be positive, got {}", c.t)));
    }
    check_ab(c)?;
    Ok(log_upsilon(c, e).exp())
}

fn log_upsilon(c: &EnergyComponents, e: &Exponents) -> f64 {
    let Exponents { p, q, gamma } = *e;
    (gamma - p) / (gamma - q) * c.a.ln() - c.t.ln() - (q - p) / (gamma - q) * c.b.ln()
}

/// `(eps(u), eps_e(u))`, the ray maxima of `R_N` and `R_e`.
pub fn nonlinear_quotients(c: &EnergyComponents, e: &Exponents) -> Result<(f64, f64)> {
    let ups = upsilon(c, e)?;
    let k = extremal_constants(e)?;
    Ok((k.c * ups, k.c_e * ups))
}

#[derive(Debug, Clone, Serialize)]
pub struct IntersectionReport {
    pub s_e: f64,
    /// `|R_N(s_e u) - R_e(s_e u)|`.
    pub root_gap: f64,
    pub r_n_at_root: f64,
    pub r_e_at_root: f64,
    /// Smallest and largest `|R_N - R_e|` over grid points away from `s_e`.
    pub min_gap_away: f64,
    pub max_gap_away: f64,
    /// Whether `R_N - R_e` is positive below `s_e` and negative above it on the grid.
    pub single_sign_change: bool,
}

/// Default grid: 200 log-spaced points in `[s_e/10, 10 s_e]`.
pub fn default_s_grid(s_e: f64) -> Vec<f64> {
    let n = 200;
    (0..n)
        .map(|i| s_e * 10f64.powf(-1.0 + 2.0 * i as f64 / (n - 1) as f64))
        .collect()
}

pub fn intersection_check(
    c: &EnergyComponents,
    e: &Exponents,
    s_grid: Option<&[f64]>,
) -> Result<IntersectionReport> {
    let fs = fiber_scalings(c, e)?;
    let (r_n, r_e) = ray_quotients(c, fs.s_e, e)?;
    let owned;
    let grid = match s_grid {
        Some(g) => g,
        None => {
            owned = default_s_grid(fs.s_e);
            &owned
        }
    };
    let mut min_gap = f64::INFINITY;
    let mut max_gap = 0.0f64;
    let mut single = true;
    for &s in grid {
        let rel = (s / fs.s_e).ln();
        if rel.abs() < 1e-3 {
            continue;
        }
        let (a, b) = ray_quotients(c, s, e)?;
        let d = a - b;
        min_gap = min_gap.min(d.abs());
        max_gap = max_gap.max(d.abs());
        if (rel < 0.0 && d <= 0.0) || (rel > 0.0 && d >= 0.0) {
            single = false;
        }
    }
    Ok(IntersectionReport {
        s_e: fs.s_e,
        root_gap: (r_n - r_e).abs(),
        r_n_at_root: r_n,
        r_e_at_root: r_e,
        min_gap_away: min_gap,
        max_gap_away: max_gap,
        single_sign_change: single,
    })
}

/// A degree-zero functional `sum_k w_k ln(int c_k |u|^(r_k)) - ln T`
/// maximized by preconditioned ascent.
pub(crate) struct LogQuotient<'a> {
    pub mesh: &'a Mesh,
    pub p: f64,
    pub delta: f64,
    /// `(coefficient at quadrature points, exponent, weight)`.
    pub terms: Vec<(&'a [f64], f64, f64)>,
}

impl LogQuotient<'_> {
    /// Value, or `None` when an integral vanishes.
    pub fn value(&self, u: &[f64]) -> Option<f64> {
        let t = gradient_power(self.mesh, u, self.p);
        if !(t > 0.0) {
            return None;
        }
        let qp = self.mesh.interpolate_at_qps(u);
        let mut f = -t.ln();
        for &(coeff, r, w) in &self.terms {
            let i = weighted_power(&qp, coeff, self.mesh.qp_weights(), r);
            if !(i > 0.0) {
                return None;
            }
            f += w * i.ln();
        }
        f.is_finite().then_some(f)
    }

    fn integrals(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let t = gradient_power(self.mesh, u, self.p);
        let qp = self.mesh.interpolate_at_qps(u);
        let ints = self
            .terms
            .iter()
            .map(|&(coeff, r, _)| weighted_power(&qp, coeff, self.mesh.qp_weights(), r))
            .collect();
        (t, ints)
    }

    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let (t, ints) = self.integrals(u);
        let reactions: Vec<Reaction<'_>> = self
            .terms
            .iter()
            .zip(&ints)
            .map(|(&(coeff, r, w), &i)| Reaction {
                coeff,
                exponent: r,
                mult: w * r / i,
            })
            .collect();
        residual_kernel(
            self.mesh,
            u,
            self.p,
            self.delta,
            -self.p / t,
            &reactions,
            false,
        )
    }
}

#[derive(Debug, Clone)]
pub(crate) struct AscentResult {
    pub values: Vec<f64>,
    pub value: f64,
}

/// Rescales so that `T = 1`.
fn normalize(mesh: &Mesh, u: &mut [f64], p: f64) -> bool {
    let t = gradient_power(mesh, u, p);
    if !(t > 0.0 && t.is_finite()) {
        return false;
    }
    let s = t.powf(-1.0 / p);
    u.iter_mut().for_each(|v| *v *= s);
    true
}

/// Preconditioned Armijo ascent with renormalization `T = 1` after every step.
/// Returns `None` if the start is outside the domain of the quotient.
pub(crate) fn ascend(
    q: &LogQuotient<'_>,
    pre: &Preconditioner,
    start: &[f64],
    max_iters: usize,
    slope_tol: f64,
) -> Option<AscentResult> {
    let mesh = q.mesh;
    let mut u: Vec<f64> = start.to_vec();
    for (i, v) in u.iter_mut().enumerate() {
        if mesh.is_boundary(i) {
            *v = 0.0;
        }
    }
    if !normalize(mesh, &mut u, q.p) {
        return None;
    }
    let mut f = q.value(&u)?;
    let mut step: f64 = 1.0;
    let mut iterations = 0;
    while iterations < max_iters {
        let g = q.gradient(&u);
        let d = pre.solve(&g);
        let slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        if !(slope > slope_tol) {
            break;
        }
        let mut alpha = (step * 2.0).min(1e6);
        let mut accepted = None;
        for _ in 0..80 {
            let mut trial: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            if normalize(mesh, &mut trial, q.p) {
                if let Some(ft) = q.value(&trial) {
                    if ft >= f + 1e-4 * alpha * slope {
                        accepted = Some((trial, ft));
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((trial, ft)) => {
                u = trial;
                f = ft;
                step = alpha;
            }
            None => break,
        }
    }
    Some(AscentResult {
        values: u,
        value: f,
    })
}

/// Random positive zero-boundary field: the stiffness inverse applied to
/// uniform nodal noise, which keeps it positive and smooth.
pub(crate) fn random_positive_field(
    pre: &Preconditioner,
    mesh: &Mesh,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let noise: Vec<f64> = (0..mesh.num_nodes())
        .map(|i| {
            if mesh.is_boundary(i) {
                0.0
            } else {
                rng.gen_range(0.0..1.0)
            }
        })
        .collect();
    let mut u = pre.solve(&noise);
    u.iter_mut().for_each(|v| *v = v.abs());
    u
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone)]
pub struct ThresholdOptions {
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// Ascent stops when the preconditioned slope falls below this.
    pub slope_tol: f64,
    /// Additional starting fields (e.g. solver outputs), tried after the random ones.
    pub extra_starts: Vec<DiscreteField>,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        Self {
            restarts: 16,
            max_iters: 2000,
            seed: 0,
            slope_tol: 1e-14,
            extra_starts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdEstimate {
    pub sup_upsilon: f64,
    pub eps_star: f64,
    pub eps_e_star: f64,
    pub maximizer: DiscreteField,
    pub restarts_used: usize,
}

pub fn estimate_thresholds(
    spec: &ProblemSpec,
    restarts: usize,
    max_iters: usize,
    seed: u64,
) -> Result<ThresholdEstimate> {
    estimate_thresholds_with(
        spec,
        &ThresholdOptions {
            restarts,
            max_iters,
            seed,
            ..Default::default()
        },
    )
}

pub fn estimate_thresholds_with(
    spec: &ProblemSpec,
    opts: &ThresholdOptions,
) -> Result<ThresholdEstimate> {
    if opts.restarts == 0 {
        return Err(Error::Input(
            "estimate_thresholds needs at least one restart".into(),
        ));
    }
    let mesh = spec.mesh();
    for s in &opts.extra_starts {
        if s.len() != mesh.num_nodes() {
            return Err(Error::Input("extra start lives on a different mesh".into()));
        }
    }
    let e = *spec.exponents();
    let consts = extremal_constants(&e)?;
    let pre = Preconditioner::new(mesh, 1.0, 0.0)?;
    let quotient = LogQuotient {
        mesh,
        p: e.p,
        delta: spec.delta_reg(),
        terms: vec![
            (spec.a_at_qps(), e.q, (e.gamma - e.p) / (e.gamma - e.q)),
            (spec.b_at_qps(), e.gamma, -(e.q - e.p) / (e.gamma - e.q)),
        ],
    };
    let tol_a = spec.tol_a();
    let total = opts.restarts + opts.extra_starts.len();
    let results: Vec<Option<AscentResult>> = (0..total)
        .into_par_iter()
        .map(|k| {
            let start = if k < opts.restarts {
                let mut rng = stream_rng(opts.seed, k as u64);
                random_positive_field(&pre, mesh, &mut rng)
            } else {
                opts.extra_starts[k - opts.restarts]
                    .values()
                    .iter()
                    .map(|v| v.abs())
                    .collect()
            };
            let c = components(spec, &start);
            if !(c.a > tol_a) {
                return None;
            }
            ascend(&quotient, &pre, &start, opts.max_iters, opts.slope_tol)
        })
        .collect();
    let mut best: Option<AscentResult> = None;
    let mut used = 0;
    for r in results.into_iter().flatten() {
        used += 1;
        if best
            .as_ref()
            .is_none_or(|b| r.value > b.value + 1e-12 * b.value.abs().max(1.0))
        {
            best = Some(r);
        }
    }
    let best = best.ok_or_else(|| {
        Error::Domain(
            "no restart entered D (A vanishes on every start; is a = 0 in the interior?)".into(),
        )
    })?;
    let sup = best.value.exp();
    Ok(ThresholdEstimate {
        sup_upsilon: sup,
        eps_star: consts.c * sup,
        eps_e_star: consts.c_e * sup,
        maximizer: DiscreteField::from_raw(mesh, best.values),
        restarts_used: used,
    })
}

fn components(spec: &ProblemSpec, u: &[f64]) -> EnergyComponents {
    let mesh = spec.mesh();
    let e = spec.exponents();
    let qp = mesh.interpolate_at_qps(u);
    EnergyComponents {
        t: gradient_power(mesh, u, e.p),
        a: weighted_power(&qp, spec.a_at_qps(), mesh.qp_weights(), e.q),
        b: weighted_power(&qp, spec.b_at_qps(), mesh.qp_weights(), e.gamma),
    }
}

/// Discrete embedding constant `S_q = sup ||u||_q / ||u||_{1,p}` estimated
/// by multi-start ascent (a lower estimate of the discrete supremum).
pub fn sobolev_constant(
    mesh: &std::sync::Arc<Mesh>,
    p: f64,
    q: f64,
    restarts: usize,
    seed: u64,
) -> Result<f64> {
    if !(p > 1.0 && q >= 1.0) {
        return Err(Error::Input(format!(
            "need p > 1 and q >= 1, got p={p}, q={q}"
        )));
    }
    let ones = vec![1.0; mesh.qp_weights().len()];
    let quotient = LogQuotient {
        mesh,
        p,
        delta: crate::problem::DEFAULT_DELTA_REG,
        terms: vec![(&ones, q, p / q)],
    };
    let pre = Preconditioner::new(mesh, 1.0, 0.0)?;
    let best = (0..restarts.max(1))
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            let start = random_positive_field(&pre, mesh, &mut rng);
            ascend(&quotient, &pre, &start, 2000, 1e-14).map(|r| r.value)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return Err(Error::Numerical(
            "Sobolev-constant ascent produced no admissible field".into(),
        ));
    }
    // value = p ln(||u||_q / ||u||_{1,p})
    Ok((best / p).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e234() -> Exponents {
        Exponents::new(2.0, 3.0, 4.0).unwrap()
    }

    #[test]
    fn constants_model_case() {
        let k = extremal_constants(&e234()).unwrap();
        assert!((k.c - 0.25).abs() < 1e-15);
        assert!((k.c_e - 2.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn ray_quotients_example() {
        let (rn, re) = ray_quotients(&EnergyComponents::new(1.0, 2.0, 1.0), 1.0, &e234()).unwrap();
        assert!((rn - 1.0).abs() < 1e-15);
        assert!((re - 5.0 / 6.0).abs() < 1e-15);
        assert!(matches!(
            ray_quotients(&EnergyComponents::new(0.0, 2.0, 1.0), 1.0, &e234()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn fiber_scalings_example() {
        let f = fiber_scalings(&EnergyComponents::new(1.0, 3.0, 1.0), &e234()).unwrap();
        assert!((f.s_n - 1.5).abs() < 1e-15);
        assert!((f.s_e - 2.0).abs() < 1e-15);
        assert!(matches!(
            fiber_scalings(&EnergyComponents::new(1.0, 0.0, 1.0), &e234()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn quotients_example() {
        let (a, b) = nonlinear_quotients(&EnergyComponents::new(1.0, 2.0, 1.0), &e234()).unwrap();
        assert!((a - 1.0).abs() < 1e-14);
        assert!((b - 8.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn intersection_example() {
        let r = intersection_check(&EnergyComponents::new(1.0, 2.0, 1.0), &e234(), None).unwrap();
        assert!((r.s_e - 4.0 / 3.0).abs() < 1e-14);
        assert!((r.r_n_at_root - 8.0 / 9.0).abs() < 1e-14);
        assert!((r.r_e_at_root - 8.0 / 9.0).abs() < 1e-14);
        assert!(r.single_sign_change);
        assert!(r.min_gap_away > 0.0);
    }
}
