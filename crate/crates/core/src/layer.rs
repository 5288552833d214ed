//! Boundary-layer profile of the one-dimensional semilinear model (`p = 2`)
//! and the composite approximation on the unit interval.
//!
//! The profile solves `xi = int_0^U dt / sqrt(2 V(t))` with
//! `V(t) = t^gamma/gamma - t^q/q + 1/q - 1/gamma`. `V` has a double zero at
//! `t = 1`, so the integrand behaves like `1/((1-t) sqrt(gamma-q))` there. With
//! `W(t) = 2 V(t) / (1-t)^2` the integral splits into a smooth part and an
//! explicit logarithm:
//!
//! `G(U) = int_0^U (W(t)^(-1/2) - W(1)^(-1/2)) / (1-t) dt - ln(1-U) / sqrt(W(1))`.
//!
//! `U(xi)` is found by a safeguarded Newton iteration in `y = -ln(1-U)`,
//! for which `dG/dy = W(U)^(-1/2)` is bounded.

use std::io::Write;
use std::sync::Arc;

use gauss_quad::GaussLegendre;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::{DiscreteField, Domain, Mesh};

const OUTER_NODES: usize = 64;
const INNER_NODES: usize = 32;
/// Below this `t` the direct formula for `W` has no cancellation problem.
const DIRECT_LIMIT: f64 = 0.9;

#[derive(Debug, Clone, Serialize)]
pub struct LayerProfile {
    pub q: f64,
    pub gamma: f64,
    pub xi: Vec<f64>,
    pub u: Vec<f64>,
    /// `1 - U`, kept separately because `U` rounds to 1 far out in the tail.
    pub deficit: Vec<f64>,
}

impl LayerProfile {
    pub fn xi_max(&self) -> f64 {
        *self.xi.last().unwrap_or(&0.0)
    }

    /// `1 - U(xi)` by linear interpolation, 0 beyond the grid.
    pub fn deficit_at(&self, xi: f64) -> f64 {
        if xi <= 0.0 {
            return 1.0;
        }
        let n = self.xi.len();
        if n == 0 || xi >= self.xi[n - 1] {
            return 0.0;
        }
        let k = self.xi.partition_point(|&x| x <= xi).clamp(1, n - 1);
        let (x0, x1) = (self.xi[k - 1], self.xi[k]);
        let t = (xi - x0) / (x1 - x0);
        self.deficit[k - 1] + t * (self.deficit[k] - self.deficit[k - 1])
    }

    /// `U(xi)` by linear interpolation, clamped to 1 beyond the grid.
    pub fn value_at(&self, xi: f64) -> f64 {
        1.0 - self.deficit_at(xi)
    }

    /// Writes `xi,U` rows with full precision.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["xi", "U"])?;
        for (x, u) in self.xi.iter().zip(&self.u) {
            w.write_record([format!("{x:.16e}"), format!("{u:.16e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Potential {
    q: f64,
    gamma: f64,
    w1: f64,
    inner: GaussLegendre,
}

impl Potential {
    fn new(q: f64, gamma: f64) -> Result<Self> {
        let inner = GaussLegendre::new(INNER_NODES)
            .map_err(|e| Error::Numerical(format!("quadrature rule construction failed: {e}")))?;
        Ok(Self {
            q,
            gamma,
            w1: gamma - q,
            inner,
        })
    }

    /// `k(s) = (1 - s^(gamma-q)) / (1 - s)` given `s` and `1 - s`.
    fn k(&self, s: f64, one_minus_s: f64) -> f64 {
        if one_minus_s <= 0.0 {
            return self.gamma - self.q;
        }
        let m = self.gamma - self.q;
        if one_minus_s < 0.5 {
            -(m * (-one_minus_s).ln_1p()).exp_m1() / one_minus_s
        } else {
            (1.0 - s.powf(m)) / one_minus_s
        }
    }

    fn v(&self, t: f64) -> f64 {
        t.powf(self.gamma) / self.gamma - t.powf(self.q) / self.q + 1.0 / self.q - 1.0 / self.gamma
    }

    /// `W(t) = 2 V(t) / (1-t)^2`, computed without cancellation near `t = 1`.
    fn w(&self, t: f64) -> f64 {
        let d = 1.0 - t;
        if t <= DIRECT_LIMIT {
            return 2.0 * self.v(t) / (d * d);
        }
        // V(t) = (1-t)^2 int_0^1 s^(q-1) k(s) (1-sigma) d sigma, s = t + (1-t) sigma
        let integral = self.inner.integrate(0.0, 1.0, |sigma| {
            let oms = d * (1.0 - sigma);
            let s = 1.0 - oms;
            s.powf(self.q - 1.0) * self.k(s, oms) * (1.0 - sigma)
        });
        2.0 * integral
    }

    fn smooth_integrand(&self, t: f64) -> f64 {
        let d = 1.0 - t;
        let w = self.w(t);
        // (w^-1/2 - w1^-1/2)/d = (w1 - w) / (d sqrt(w w1) (sqrt(w) + sqrt(w1)))
        let (sw, sw1) = (w.sqrt(), self.w1.sqrt());
        if d <= 0.0 {
            return 0.0;
        }
        (self.w1 - w) / (d * sw * sw1 * (sw + sw1))
    }
}

/// `G(U)` for `U = 1 - exp(-y)`; also returns a two-panel cross-check.
fn g_of_y(pot: &Potential, outer: &GaussLegendre, y: f64) -> (f64, f64) {
    let u = -(-y).exp_m1();
    let f = |t: f64| pot.smooth_integrand(t);
    let one = outer.integrate(0.0, u, f);
    let two = outer.integrate(0.0, 0.5 * u, f) + outer.integrate(0.5 * u, u, f);
    let log_part = y / pot.w1.sqrt();
    (one + log_part, two + log_part)
}

fn solve_for_xi(pot: &Potential, outer: &GaussLegendre, xi: f64, y_guess: f64) -> Result<f64> {
    if xi == 0.0 {
        return Ok(0.0);
    }
    let tol = 1e-14 * (1.0 + xi);
    let check = |y: f64| -> Result<f64> {
        let (g1, g2) = g_of_y(pot, outer, y);
        if (g1 - g2).abs() > 1e-11 * (1.0 + g1.abs()) || !g1.is_finite() {
            return Err(Error::Numerical(format!(
                "layer integral did not converge at xi = {xi} (panel estimates {g1} vs {g2})"
            )));
        }
        Ok(g1 - xi)
    };
    // bracket [lo, hi] with F(lo) < 0 <= F(hi)
    let mut lo = 0.0;
    let mut hi = y_guess.max(1e-3);
    while check(hi)? < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 800.0 {
            return Err(Error::Numerical(format!(
                "could not bracket the layer profile at xi = {xi}"
            )));
        }
    }
    let mut y = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = check(y)?;
        if f.abs() <= tol {
            return Ok(y);
        }
        if f < 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        let u = -(-y).exp_m1();
        let slope = 1.0 / pot.w(u).sqrt();
        let newton = y - f / slope;
        y = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 1e-15 * hi {
            return Ok(y);
        }
    }
    Err(Error::Numerical(format!(
        "layer profile iteration did not converge at xi = {xi}"
    )))
}

/// Profile on the uniform grid of `points` values in `[0, xi_max]`.
pub fn layer_profile_1d(q: f64, gamma: f64, xi_max: f64, points: usize) -> Result<LayerProfile> {
    if !(q > 1.0 && q < gamma && gamma.is_finite()) {
        return Err(Error::Input(format!(
            "layer profile needs 1 < q < gamma, got q={q}, gamma={gamma}"
        )));
    }
    if !(xi_max > 0.0 && xi_max.is_finite()) {
        return Err(Error::Input(format!(
            "xi_max must be positive, got {xi_max}"
        )));
    }
    if points < 2 {
        return Err(Error::Input(format!(
            "need at least 2 grid points, got {points}"
        )));
    }
    let pot = Potential::new(q, gamma)?;
    let outer = GaussLegendre::new(OUTER_NODES)
        .map_err(|e| Error::Numerical(format!("quadrature rule construction failed: {e}")))?;
    let mut xi = Vec::with_capacity(points);
    let mut u = Vec::with_capacity(points);
    let mut deficit = Vec::with_capacity(points);
    let mut y_prev: f64 = 0.0;
    for k in 0..points {
        let x = xi_max * k as f64 / (points - 1) as f64;
        let y = solve_for_xi(&pot, &outer, x, y_prev.max(x * pot.w1.sqrt()))?;
        y_prev = y;
        xi.push(x);
        let d = (-y).exp();
        deficit.push(d);
        u.push(-(-y).exp_m1());
    }
    Ok(LayerProfile {
        q,
        gamma,
        xi,
        u,
        deficit,
    })
}

/// `U(x/sqrt(eps)) + U((1-x)/sqrt(eps)) - 1` at the nodes of a mesh of `[0, 1]`.
pub fn composite_approx_1d(
    eps: f64,
    mesh: &Arc<Mesh>,
    profile: &LayerProfile,
) -> Result<DiscreteField> {
    if !(eps > 0.0) {
        return Err(Error::Input(format!("epsilon must be positive, got {eps}")));
    }
    if *mesh.domain() != Domain::unit_interval() {
        return Err(Error::Input(
            "composite approximation needs a mesh of the unit interval".into(),
        ));
    }
    let scale = 1.0 / eps.sqrt();
    if profile.xi_max() < scale {
        return Err(Error::Input(format!(
            "profile covers xi <= {} but 1/sqrt(eps) = {scale}",
            profile.xi_max()
        )));
    }
    let values = mesh
        .coords()
        .iter()
        .map(|c| {
            let x = c[0];
            1.0 - profile.deficit_at(x * scale) - profile.deficit_at((1.0 - x) * scale)
        })
        .collect();
    DiscreteField::from_values(mesh, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh_case() {
        let prof = layer_profile_1d(2.0, 4.0, 10.0, 201).unwrap();
        assert_eq!(prof.u[0], 0.0);
        for (x, u) in prof.xi.iter().zip(&prof.u) {
            let exact = (x / 2f64.sqrt()).tanh();
            assert!((u - exact).abs() < 1e-12, "xi={x}: {u} vs {exact}");
        }
        let p1 = layer_profile_1d(2.0, 4.0, 1.0, 2).unwrap();
        assert!((p1.u[1] - 0.608859).abs() < 1e-6);
    }

    #[test]
    fn tail_and_monotonicity() {
        let prof = layer_profile_1d(3.0, 4.0, 40.0, 401).unwrap();
        assert!(*prof.deficit.last().unwrap() < 1e-4);
        for w in prof.deficit.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn potential_w_is_continuous_across_the_switch() {
        let pot = Potential::new(3.0, 4.0).unwrap();
        let a = 2.0 * pot.v(DIRECT_LIMIT) / (1.0 - DIRECT_LIMIT).powi(2);
        let b = pot.w(DIRECT_LIMIT + 1e-15);
        assert!((a - b).abs() < 1e-12);
        assert!((pot.w(1.0 - 1e-14) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn composite_endpoints_and_interior() {
        let prof = layer_profile_1d(3.0, 4.0, 120.0, 4001).unwrap();
        let mesh = Mesh::build(Domain::unit_interval(), &[101]).unwrap();
        let c = composite_approx_1d(1e-4, &mesh, &prof).unwrap();
        assert!(c.values()[0].abs() < 1e-12);
        assert!((c.values()[50] - 1.0).abs() < 1e-12);
        let coarse = layer_profile_1d(3.0, 4.0, 50.0, 11).unwrap();
        assert!(composite_approx_1d(1e-4, &mesh, &coarse).is_err());
    }
}
