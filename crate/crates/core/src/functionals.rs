//! Energy functional `Phi_eps`, its components, the truncated functional
//! `Phi_eps^+`, the limit functional `J` and the discrete weak residual.
//!
//! All integrals use the element quadrature of the nodal interpolant, so the
//! residual is the exact gradient of the discrete energy (for `p < 2`, of the
//! regularized energy).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{DiscreteField, Exponents, Mesh, ProblemSpec, QP_PER_CELL};

/// Boundary values beyond this are rejected by the functionals.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// `T = int |grad u|^p`, `A = int a |u|^q`, `B = int b |u|^gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyComponents {
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
}

impl EnergyComponents {
    pub fn new(t: f64, a: f64, b: f64) -> Self {
        Self { t, a, b }
    }

    /// Components of `s u` given those of `u`.
    pub fn scaled(&self, s: f64, e: &Exponents) -> Self {
        let s = s.abs();
        Self {
            t: s.powf(e.p) * self.t,
            a: s.powf(e.q) * self.a,
            b: s.powf(e.gamma) * self.b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MembershipD {
    pub in_d: bool,
}

pub(crate) fn check_boundary(u: &DiscreteField) -> Result<()> {
    let m = u.max_boundary_abs();
    if m > BOUNDARY_TOL {
        return Err(Error::Contract(format!(
            "field has boundary value of magnitude {m:e}"
        )));
    }
    Ok(())
}

fn check_mesh(u: &DiscreteField, spec: &ProblemSpec) -> Result<()> {
    if u.len() != spec.mesh().num_nodes() {
        return Err(Error::Input(format!(
            "field has {} nodes but the problem mesh has {}",
            u.len(),
            spec.mesh().num_nodes()
        )));
    }
    Ok(())
}

/// `int |grad u|^p` over the mesh.
pub(crate) fn gradient_power(mesh: &Mesh, values: &[f64], p: f64) -> f64 {
    (0..mesh.num_cells())
        .map(|e| {
            let g = mesh.cell_gradient_of(e, values);
            let n2 = g[0] * g[0] + g[1] * g[1];
            mesh.cell_measure(e) * pow_sq(n2, p)
        })
        .sum()
}

/// `int ((|grad u|^2 + delta^2)^(p/2) - delta^p)`.
pub(crate) fn gradient_power_regularized(mesh: &Mesh, values: &[f64], p: f64, delta: f64) -> f64 {
    let d2 = delta * delta;
    let dp = delta.powf(p);
    (0..mesh.num_cells())
        .map(|e| {
            let g = mesh.cell_gradient_of(e, values);
            let n2 = g[0] * g[0] + g[1] * g[1];
            mesh.cell_measure(e) * ((n2 + d2).powf(0.5 * p) - dp)
        })
        .sum()
}

/// `(x^2)^(p/2)` from the squared magnitude.
#[inline]
fn pow_sq(n2: f64, p: f64) -> f64 {
    if p == 2.0 {
        n2
    } else if n2 == 0.0 {
        0.0
    } else {
        n2.powf(0.5 * p)
    }
}

/// `int c |v|^r` from quadrature-point values.
pub(crate) fn weighted_power(qp_values: &[f64], coeff: &[f64], weights: &[f64], r: f64) -> f64 {
    qp_values
        .iter()
        .zip(coeff)
        .zip(weights)
        .map(|((v, c), w)| w * c * v.abs().powf(r))
        .sum()
}

fn components_of_values(values: &[f64], spec: &ProblemSpec) -> EnergyComponents {
    let mesh = spec.mesh();
    let e = spec.exponents();
    let qp = mesh.interpolate_at_qps(values);
    let w = mesh.qp_weights();
    EnergyComponents {
        t: gradient_power(mesh, values, e.p),
        a: weighted_power(&qp, spec.a_at_qps(), w, e.q),
        b: weighted_power(&qp, spec.b_at_qps(), w, e.gamma),
    }
}

/// Quadrature values of `T`, `A`, `B` for a zero-boundary field.
pub fn energy_components(u: &DiscreteField, spec: &ProblemSpec) -> Result<EnergyComponents> {
    check_mesh(u, spec)?;
    check_boundary(u)?;
    Ok(components_of_values(u.values(), spec))
}

pub fn phi_from_components(c: &EnergyComponents, epsilon: f64, e: &Exponents) -> f64 {
    epsilon / e.p * c.t - c.a / e.q + c.b / e.gamma
}

pub fn phi(u: &DiscreteField, spec: &ProblemSpec) -> Result<f64> {
    let c = energy_components(u, spec)?;
    Ok(phi_from_components(&c, spec.epsilon(), spec.exponents()))
}

/// `Phi_eps` with the gradient term replaced by its regularized form when
/// `p < 2`; identical to [`phi`] otherwise. This is the functional whose exact
/// derivative is [`weak_residual`].
pub fn phi_regularized(u: &DiscreteField, spec: &ProblemSpec) -> Result<f64> {
    check_mesh(u, spec)?;
    check_boundary(u)?;
    let e = spec.exponents();
    let mut c = components_of_values(u.values(), spec);
    if e.p < 2.0 {
        c.t = gradient_power_regularized(spec.mesh(), u.values(), e.p, spec.delta_reg());
    }
    Ok(phi_from_components(&c, spec.epsilon(), e))
}

/// Truncated functional: gradient term of `u`, reaction terms of the nodal positive part.
pub fn phi_plus(u: &DiscreteField, spec: &ProblemSpec) -> Result<f64> {
    check_mesh(u, spec)?;
    check_boundary(u)?;
    Ok(phi_plus_of_values(u.values(), spec))
}

pub(crate) fn phi_plus_of_values(values: &[f64], spec: &ProblemSpec) -> f64 {
    let mesh = spec.mesh();
    let e = spec.exponents();
    let pos: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let qp = mesh.interpolate_at_qps(&pos);
    let w = mesh.qp_weights();
    let c = EnergyComponents {
        t: gradient_power(mesh, values, e.p),
        a: weighted_power(&qp, spec.a_at_qps(), w, e.q),
        b: weighted_power(&qp, spec.b_at_qps(), w, e.gamma),
    };
    phi_from_components(&c, spec.epsilon(), e)
}

pub(crate) fn phi_of_values(values: &[f64], spec: &ProblemSpec) -> f64 {
    phi_from_components(
        &components_of_values(values, spec),
        spec.epsilon(),
        spec.exponents(),
    )
}

/// One reaction term `mult * int c |u|^(r-2) u phi_i` of a residual.
pub(crate) struct Reaction<'a> {
    pub coeff: &'a [f64],
    pub exponent: f64,
    pub mult: f64,
}

/// Nodal vector
/// `diffusion * int w(|grad u|) grad u . grad phi_i + sum_k mult_k int c_k |v|^(r_k-2) v phi_i`
/// with `w(s) = s^(p-2)` (regularized by `delta` for `p < 2`). When `positive`
/// is set, `v` is the interpolant of the nodal positive part and component `i`
/// of the reaction sum is multiplied by `1[u_i > 0]`. Boundary entries are 0.
pub(crate) fn residual_kernel(
    mesh: &Mesh,
    values: &[f64],
    p: f64,
    delta: f64,
    diffusion: f64,
    reactions: &[Reaction<'_>],
    positive: bool,
) -> Vec<f64> {
    let n = mesh.num_nodes();
    let nloc = mesh.nodes_per_cell();
    let shape = mesh.shape_values();
    let weights = mesh.qp_weights();
    let mut out = vec![0.0; n];
    let mut react = vec![0.0; n];
    let d2 = delta * delta;
    for e in 0..mesh.num_cells() {
        let nodes = mesh.cell_nodes(e);
        if diffusion != 0.0 {
            let g = mesh.cell_gradient_of(e, values);
            let n2 = g[0] * g[0] + g[1] * g[1];
            let w = if p == 2.0 {
                1.0
            } else if p < 2.0 {
                (n2 + d2).powf(0.5 * (p - 2.0))
            } else if n2 == 0.0 {
                0.0
            } else {
                n2.powf(0.5 * (p - 2.0))
            };
            let f = diffusion * mesh.cell_measure(e) * w;
            let grads = mesh.cell_gradients(e);
            for l in 0..nloc {
                out[nodes[l]] += f * (g[0] * grads[l][0] + g[1] * grads[l][1]);
            }
        }
        for (k, phi_k) in shape.iter().enumerate() {
            let idx = e * QP_PER_CELL + k;
            let mut v = 0.0;
            for l in 0..nloc {
                let nv = values[nodes[l]];
                v += phi_k[l] * if positive { nv.max(0.0) } else { nv };
            }
            if v == 0.0 {
                continue;
            }
            let av = v.abs();
            let mut s = 0.0;
            for r in reactions {
                s += r.mult * r.coeff[idx] * av.powf(r.exponent - 2.0) * v;
            }
            let s = s * weights[idx];
            for l in 0..nloc {
                react[nodes[l]] += s * phi_k[l];
            }
        }
    }
    for i in 0..n {
        if mesh.is_boundary(i) {
            out[i] = 0.0;
        } else if !positive || values[i] > 0.0 {
            out[i] += react[i];
        }
    }
    out
}

/// Residual of `(diffusion/p) T - (a_mult/q) A + (b_mult/gamma) B`, the
/// generic form behind [`weak_residual`] and the rescaled equations.
pub fn weak_residual_scaled(
    u: &DiscreteField,
    spec: &ProblemSpec,
    diffusion: f64,
    a_mult: f64,
    b_mult: f64,
) -> Result<DiscreteField> {
    check_mesh(u, spec)?;
    check_boundary(u)?;
    Ok(DiscreteField::from_raw(
        u.mesh(),
        residual_values(u.values(), spec, diffusion, a_mult, b_mult, false),
    ))
}

pub(crate) fn residual_values(
    values: &[f64],
    spec: &ProblemSpec,
    diffusion: f64,
    a_mult: f64,
    b_mult: f64,
    positive: bool,
) -> Vec<f64> {
    let e = spec.exponents();
    let reactions = [
        Reaction {
            coeff: spec.a_at_qps(),
            exponent: e.q,
            mult: -a_mult,
        },
        Reaction {
            coeff: spec.b_at_qps(),
            exponent: e.gamma,
            mult: b_mult,
        },
    ];
    residual_kernel(
        spec.mesh(),
        values,
        e.p,
        spec.delta_reg(),
        diffusion,
        &reactions,
        positive,
    )
}

/// Discrete weak form of the equation tested with every interior hat function.
pub fn weak_residual(u: &DiscreteField, spec: &ProblemSpec) -> Result<DiscreteField> {
    weak_residual_scaled(u, spec, spec.epsilon(), 1.0, 1.0)
}

/// Gradient of [`phi_plus`].
pub fn weak_residual_plus(u: &DiscreteField, spec: &ProblemSpec) -> Result<DiscreteField> {
    check_mesh(u, spec)?;
    check_boundary(u)?;
    Ok(DiscreteField::from_raw(
        u.mesh(),
        residual_values(u.values(), spec, spec.epsilon(), 1.0, 1.0, true),
    ))
}

pub fn membership(u: &DiscreteField, spec: &ProblemSpec) -> Result<MembershipD> {
    let c = energy_components(u, spec)?;
    Ok(MembershipD {
        in_d: c.a > spec.tol_a(),
    })
}

/// `||u||_{1,p} = (int |grad u|^p)^(1/p)`.
pub fn w1p_norm(u: &DiscreteField, p: f64) -> f64 {
    gradient_power(u.mesh(), u.values(), p).powf(1.0 / p)
}

/// `j(s) = -(alpha/q) s^q + (beta/gamma) s^gamma`.
pub fn j_pointwise(alpha: f64, beta: f64, s: f64, q: f64, gamma: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::Input(format!("j is defined for s >= 0, got {s}")));
    }
    if !(beta > 0.0) {
        return Err(Error::Input(format!("j needs beta > 0, got {beta}")));
    }
    if !(alpha >= 0.0) {
        return Err(Error::Input(format!("j needs alpha >= 0, got {alpha}")));
    }
    Ok(j_unchecked(alpha, beta, s, q, gamma))
}

#[inline]
pub(crate) fn j_unchecked(alpha: f64, beta: f64, s: f64, q: f64, gamma: f64) -> f64 {
    -(alpha / q) * s.powf(q) + (beta / gamma) * s.powf(gamma)
}

/// `J(u) = int j_x(|u|)` by quadrature of the interpolant.
pub fn j_functional(u: &DiscreteField, spec: &ProblemSpec) -> Result<f64> {
    check_mesh(u, spec)?;
    Ok(j_of_qps(&u.at_qps(), spec))
}

/// `J` from values at the quadrature points of the problem mesh.
pub(crate) fn j_of_qps(qp_values: &[f64], spec: &ProblemSpec) -> f64 {
    let e = spec.exponents();
    qp_values
        .iter()
        .zip(spec.a_at_qps())
        .zip(spec.b_at_qps())
        .zip(spec.mesh().qp_weights())
        .map(|(((v, a), b), w)| w * j_unchecked(*a, *b, v.abs(), e.q, e.gamma))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{CoefficientField, Domain};
    use std::f64::consts::PI;

    fn spec_1d(n: usize, p: f64, eps: f64) -> ProblemSpec {
        spec_with(n, Exponents::new(p, 3.0, 4.0).unwrap(), eps)
    }

    fn spec_with(n: usize, e: Exponents, eps: f64) -> ProblemSpec {
        let mesh = Mesh::build(Domain::unit_interval(), &[n]).unwrap();
        ProblemSpec::new(
            e,
            eps,
            CoefficientField::constant(1.0).unwrap(),
            CoefficientField::constant(1.0).unwrap(),
            mesh,
        )
        .unwrap()
    }

    #[test]
    fn zero_field_is_trivial() {
        let spec = spec_1d(11, 2.0, 0.1);
        let u = DiscreteField::zeros(spec.mesh());
        assert_eq!(
            energy_components(&u, &spec).unwrap(),
            EnergyComponents::new(0.0, 0.0, 0.0)
        );
        assert_eq!(phi(&u, &spec).unwrap(), 0.0);
        assert!(weak_residual(&u, &spec)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 0.0));
        assert_eq!(j_functional(&u, &spec).unwrap(), 0.0);
    }

    #[test]
    fn sine_components() {
        let spec = spec_1d(4001, 2.0, 1.0);
        let u = DiscreteField::from_fn(spec.mesh(), |x| (PI * x[0]).sin(), true).unwrap();
        let c = energy_components(&u, &spec).unwrap();
        assert!((c.t - PI * PI / 2.0).abs() < 1e-3);
        assert!((c.a - 4.0 / (3.0 * PI)).abs() < 1e-3);
        assert!((c.b - 3.0 / 8.0).abs() < 1e-3);
    }

    #[test]
    fn boundary_values_rejected() {
        let spec = spec_1d(11, 2.0, 0.1);
        let u = DiscreteField::from_fn(spec.mesh(), |_| 1.0, false).unwrap();
        assert!(matches!(
            energy_components(&u, &spec),
            Err(Error::Contract(_))
        ));
        // J accepts nonzero boundary values
        assert!((j_functional(&u, &spec).unwrap() + 1.0 / 12.0).abs() < 1e-14);
    }

    #[test]
    fn phi_arithmetic() {
        let e = Exponents::new(2.0, 3.0, 4.0).unwrap();
        let v = phi_from_components(&EnergyComponents::new(1.0, 2.0, 1.0), 1.0, &e);
        assert!((v - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn j_examples() {
        assert!((j_pointwise(1.0, 1.0, 1.0, 3.0, 4.0).unwrap() + 1.0 / 12.0).abs() < 1e-15);
        assert_eq!(j_pointwise(1.0, 1.0, 0.0, 3.0, 4.0).unwrap(), 0.0);
        assert!(matches!(
            j_pointwise(1.0, 1.0, -1.0, 3.0, 4.0),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn phi_plus_of_negative_field_is_gradient_term() {
        let spec = spec_1d(41, 2.0, 0.3);
        let u = DiscreteField::from_fn(spec.mesh(), |x| -(PI * x[0]).sin(), true).unwrap();
        let c = energy_components(&u, &spec).unwrap();
        let v = phi_plus(&u, &spec).unwrap();
        assert!((v - 0.3 / 2.0 * c.t).abs() < 1e-15);
        assert!(v > 0.0);
    }

    #[test]
    fn nehari_identity_is_algebraic() {
        let spec = spec_with(101, Exponents::new(3.0, 4.0, 5.0).unwrap(), 0.05);
        let u = DiscreteField::from_fn(
            spec.mesh(),
            |x| (3.0 * x[0]).sin() * x[0] * (1.0 - x[0]) * 4.0,
            true,
        )
        .unwrap();
        let c = energy_components(&u, &spec).unwrap();
        let r = weak_residual(&u, &spec).unwrap();
        let lhs = r.dot(&u);
        let rhs = spec.epsilon() * c.t - c.a + c.b;
        assert!((lhs - rhs).abs() <= 1e-12 * (spec.epsilon() * c.t + c.a + c.b));
    }
}
