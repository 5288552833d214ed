//! Problem data and its piecewise-linear discretization.
//!
//! A [`Mesh`] is a uniform partition of an interval (two-node elements) or a
//! rectangle (each cell split along its `(x0,y0)-(x1,y1)` diagonal into two
//! triangles). Every element carries three quadrature points: 3-point Gauss
//! on intervals and the mid-edge rule on triangles. All integrals in the crate
//! are sums over this quadrature cloud applied to the nodal interpolant.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quadrature points per element, both in 1D and 2D.
pub const QP_PER_CELL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub p: f64,
    pub q: f64,
    pub gamma: f64,
}

impl Exponents {
    pub fn new(p: f64, q: f64, gamma: f64) -> Result<Self> {
        let e = Self { p, q, gamma };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        let Self { p, q, gamma } = *self;
        if !(p.is_finite() && q.is_finite() && gamma.is_finite()) {
            return Err(Error::Input(format!(
                "non-finite exponents ({p}, {q}, {gamma})"
            )));
        }
        if !(1.0 < p && p < q && q < gamma) {
            return Err(Error::Input(format!(
                "exponents must satisfy 1 < p < q < gamma, got p={p}, q={q}, gamma={gamma}"
            )));
        }
        Ok(())
    }

    /// Critical Sobolev exponent `pN/(N-p)`, or `+inf` when `p >= N`.
    pub fn critical_exponent(&self, dim: usize) -> f64 {
        let n = dim as f64;
        if self.p < n {
            self.p * n / (n - self.p)
        } else {
            f64::INFINITY
        }
    }

    pub fn check_subcritical(&self, dim: usize) -> Result<()> {
        let p_star = self.critical_exponent(dim);
        if self.gamma >= p_star {
            return Err(Error::Input(format!(
                "gamma = {} is not below the critical exponent p* = {p_star} in dimension {dim}",
                self.gamma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Interval { x0: f64, x1: f64 },
    Rectangle { x0: f64, x1: f64, y0: f64, y1: f64 },
}

impl Domain {
    pub fn unit_interval() -> Self {
        Domain::Interval { x0: 0.0, x1: 1.0 }
    }

    pub fn unit_square() -> Self {
        Domain::Rectangle {
            x0: 0.0,
            x1: 1.0,
            y0: 0.0,
            y1: 1.0,
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            Domain::Rectangle { .. } => 2,
        }
    }

    pub fn measure(&self) -> f64 {
        match *self {
            Domain::Interval { x0, x1 } => x1 - x0,
            Domain::Rectangle { x0, x1, y0, y1 } => (x1 - x0) * (y1 - y0),
        }
    }

    /// Lower corner and side lengths; unused second axis has length 0.
    pub fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        match *self {
            Domain::Interval { x0, x1 } => ([x0, 0.0], [x1 - x0, 0.0]),
            Domain::Rectangle { x0, x1, y0, y1 } => ([x0, y0], [x1 - x0, y1 - y0]),
        }
    }

    /// Euclidean distance from `x` to the boundary (for points inside).
    pub fn distance_to_boundary(&self, x: &[f64; 2]) -> f64 {
        match *self {
            Domain::Interval { x0, x1 } => (x[0] - x0).min(x1 - x[0]),
            Domain::Rectangle { x0, x1, y0, y1 } => {
                (x[0] - x0).min(x1 - x[0]).min(x[1] - y0).min(y1 - x[1])
            }
        }
    }

    /// Shortest side length.
    pub fn min_side(&self) -> f64 {
        match *self {
            Domain::Interval { x0, x1 } => x1 - x0,
            Domain::Rectangle { x0, x1, y0, y1 } => (x1 - x0).min(y1 - y0),
        }
    }
}

/// Uniform conforming P1 mesh with a three-point quadrature rule per element.
#[derive(Debug)]
pub struct Mesh {
    domain: Domain,
    resolution: Vec<usize>,
    coords: Vec<[f64; 2]>,
    cells: Vec<[usize; 3]>,
    /// Gradients of the local basis functions, constant per cell.
    grads: Vec<[[f64; 2]; 3]>,
    measures: Vec<f64>,
    boundary: Vec<bool>,
    /// Reference shape values at the quadrature points: `shape[k][local]`.
    shape: [[f64; 3]; QP_PER_CELL],
    /// Reference weights; they sum to 1 and are scaled by the cell measure.
    ref_weights: [f64; QP_PER_CELL],
    qp_coords: Vec<[f64; 2]>,
    qp_weights: Vec<f64>,
}

impl Mesh {
    /// Uniform mesh on `domain` with `nodes_per_axis` nodes along each axis.
    /// A single entry is reused for both axes of a rectangle.
    pub fn build(domain: Domain, nodes_per_axis: &[usize]) -> Result<Arc<Mesh>> {
        let mesh = match domain {
            Domain::Interval { x0, x1 } => {
                if !(x1 > x0) || !x0.is_finite() || !x1.is_finite() {
                    return Err(Error::Config(format!("degenerate interval [{x0}, {x1}]")));
                }
                let n = *nodes_per_axis
                    .first()
                    .ok_or_else(|| Error::Config("missing resolution".into()))?;
                if n < 3 {
                    return Err(Error::Config(format!("resolution {n} < 3 nodes")));
                }
                Self::interval(domain, x0, x1, n)
            }
            Domain::Rectangle { x0, x1, y0, y1 } => {
                if !(x1 > x0 && y1 > y0) || ![x0, x1, y0, y1].iter().all(|v| v.is_finite()) {
                    return Err(Error::Config(format!(
                        "degenerate rectangle [{x0}, {x1}] x [{y0}, {y1}]"
                    )));
                }
                let (nx, ny) = match nodes_per_axis {
                    [n] => (*n, *n),
                    [nx, ny] => (*nx, *ny),
                    _ => {
                        return Err(Error::Config(format!(
                            "rectangle needs 1 or 2 resolution entries, got {}",
                            nodes_per_axis.len()
                        )))
                    }
                };
                if nx < 3 || ny < 3 {
                    return Err(Error::Config(format!(
                        "resolution {nx}x{ny} has an axis < 3 nodes"
                    )));
                }
                Self::rectangle(domain, [x0, x1, y0, y1], nx, ny)
            }
        };
        Ok(Arc::new(mesh))
    }

    fn interval(domain: Domain, x0: f64, x1: f64, n: usize) -> Mesh {
        let h = (x1 - x0) / (n - 1) as f64;
        let coords: Vec<[f64; 2]> = (0..n)
            .map(|i| {
                let x = if i == n - 1 { x1 } else { x0 + i as f64 * h };
                [x, 0.0]
            })
            .collect();
        let mut boundary = vec![false; n];
        boundary[0] = true;
        boundary[n - 1] = true;

        let g = 0.5 * (3.0f64 / 5.0).sqrt();
        let xi = [0.5 - g, 0.5, 0.5 + g];
        let shape = [
            [1.0 - xi[0], xi[0], 0.0],
            [1.0 - xi[1], xi[1], 0.0],
            [1.0 - xi[2], xi[2], 0.0],
        ];
        let ref_weights = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

        let mut cells = Vec::with_capacity(n - 1);
        let mut grads = Vec::with_capacity(n - 1);
        let mut measures = Vec::with_capacity(n - 1);
        for e in 0..n - 1 {
            let len = coords[e + 1][0] - coords[e][0];
            cells.push([e, e + 1, usize::MAX]);
            grads.push([[-1.0 / len, 0.0], [1.0 / len, 0.0], [0.0, 0.0]]);
            measures.push(len);
        }
        Self::finish(
            domain,
            vec![n],
            coords,
            cells,
            grads,
            measures,
            boundary,
            shape,
            ref_weights,
        )
    }

    fn rectangle(domain: Domain, b: [f64; 4], nx: usize, ny: usize) -> Mesh {
        let [x0, x1, y0, y1] = b;
        let hx = (x1 - x0) / (nx - 1) as f64;
        let hy = (y1 - y0) / (ny - 1) as f64;
        let mut coords = Vec::with_capacity(nx * ny);
        let mut boundary = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            let y = if j == ny - 1 { y1 } else { y0 + j as f64 * hy };
            for i in 0..nx {
                let x = if i == nx - 1 { x1 } else { x0 + i as f64 * hx };
                coords.push([x, y]);
                boundary.push(i == 0 || j == 0 || i == nx - 1 || j == ny - 1);
            }
        }
        let third = 1.0 / 3.0;
        let shape = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];
        let ref_weights = [third, third, third];

        let ncell = 2 * (nx - 1) * (ny - 1);
        let mut cells = Vec::with_capacity(ncell);
        let mut grads = Vec::with_capacity(ncell);
        let mut measures = Vec::with_capacity(ncell);
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let n00 = j * nx + i;
                let n10 = n00 + 1;
                let n01 = n00 + nx;
                let n11 = n01 + 1;
                for tri in [[n00, n10, n11], [n00, n11, n01]] {
                    let (g, area) = triangle_gradients(&coords, &tri);
                    cells.push(tri);
                    grads.push(g);
                    measures.push(area);
                }
            }
        }
        Self::finish(
            domain,
            vec![nx, ny],
            coords,
            cells,
            grads,
            measures,
            boundary,
            shape,
            ref_weights,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        domain: Domain,
        resolution: Vec<usize>,
        coords: Vec<[f64; 2]>,
        cells: Vec<[usize; 3]>,
        grads: Vec<[[f64; 2]; 3]>,
        measures: Vec<f64>,
        boundary: Vec<bool>,
        shape: [[f64; 3]; QP_PER_CELL],
        ref_weights: [f64; QP_PER_CELL],
    ) -> Mesh {
        let nloc = if domain.dimension() == 1 { 2 } else { 3 };
        let mut qp_coords = Vec::with_capacity(cells.len() * QP_PER_CELL);
        let mut qp_weights = Vec::with_capacity(cells.len() * QP_PER_CELL);
        for (cell, &m) in cells.iter().zip(&measures) {
            for k in 0..QP_PER_CELL {
                let mut x = [0.0; 2];
                for l in 0..nloc {
                    let c = coords[cell[l]];
                    x[0] += shape[k][l] * c[0];
                    x[1] += shape[k][l] * c[1];
                }
                qp_coords.push(x);
                qp_weights.push(m * ref_weights[k]);
            }
        }
        Mesh {
            domain,
            resolution,
            coords,
            cells,
            grads,
            measures,
            boundary,
            shape,
            ref_weights,
            qp_coords,
            qp_weights,
        }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dimension(&self) -> usize {
        self.domain.dimension()
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    /// Nodes per element: 2 on intervals, 3 on triangles.
    pub fn nodes_per_cell(&self) -> usize {
        if self.dimension() == 1 {
            2
        } else {
            3
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn cell_nodes(&self, cell: usize) -> &[usize] {
        &self.cells[cell][..self.nodes_per_cell()]
    }

    pub fn cell_gradients(&self, cell: usize) -> &[[f64; 2]; 3] {
        &self.grads[cell]
    }

    pub fn cell_measure(&self, cell: usize) -> f64 {
        self.measures[cell]
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes())
            .filter(|&i| self.boundary[i])
            .collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes())
            .filter(|&i| !self.boundary[i])
            .collect()
    }

    pub fn shape_values(&self) -> &[[f64; 3]; QP_PER_CELL] {
        &self.shape
    }

    pub fn reference_weights(&self) -> &[f64; QP_PER_CELL] {
        &self.ref_weights
    }

    /// Quadrature point `k` of cell `e` has index `e * QP_PER_CELL + k`.
    pub fn qp_coords(&self) -> &[[f64; 2]] {
        &self.qp_coords
    }

    pub fn qp_weights(&self) -> &[f64] {
        &self.qp_weights
    }

    /// Values of the interpolant of `nodal` at every quadrature point.
    pub fn interpolate_at_qps(&self, nodal: &[f64]) -> Vec<f64> {
        let nloc = self.nodes_per_cell();
        let mut out = Vec::with_capacity(self.qp_weights.len());
        for cell in &self.cells {
            for k in 0..QP_PER_CELL {
                let mut v = 0.0;
                for l in 0..nloc {
                    v += self.shape[k][l] * nodal[cell[l]];
                }
                out.push(v);
            }
        }
        out
    }

    /// Gradient of the interpolant of `nodal` on `cell`.
    #[inline]
    pub fn cell_gradient_of(&self, cell: usize, nodal: &[f64]) -> [f64; 2] {
        let g = &self.grads[cell];
        let c = &self.cells[cell];
        let mut out = [0.0; 2];
        for l in 0..self.nodes_per_cell() {
            let v = nodal[c[l]];
            out[0] += g[l][0] * v;
            out[1] += g[l][1] * v;
        }
        out
    }

    /// Whether the second mesh refines this one uniformly (same domain,
    /// `n_fine - 1 = k (n - 1)` on every axis).
    pub fn refinement_factor(&self, fine: &Mesh) -> Option<usize> {
        if self.domain != fine.domain || self.resolution.len() != fine.resolution.len() {
            return None;
        }
        let mut factor = None;
        for (&c, &f) in self.resolution.iter().zip(&fine.resolution) {
            if (f - 1) % (c - 1) != 0 {
                return None;
            }
            let k = (f - 1) / (c - 1);
            if factor.is_some_and(|prev| prev != k) {
                return None;
            }
            factor = Some(k);
        }
        factor
    }

    pub fn snapshot(&self) -> MeshSnapshot {
        let dim = self.dimension();
        MeshSnapshot {
            dimension: dim,
            domain: self.domain,
            resolution: self.resolution.clone(),
            nodes: self.coords.iter().map(|c| c[..dim].to_vec()).collect(),
            elements: (0..self.num_cells())
                .map(|e| self.cell_nodes(e).to_vec())
                .collect(),
            boundary: self.boundary_nodes(),
        }
    }
}

fn triangle_gradients(coords: &[[f64; 2]], tri: &[usize; 3]) -> ([[f64; 2]; 3], f64) {
    let [a, b, c] = [coords[tri[0]], coords[tri[1]], coords[tri[2]]];
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let inv = 1.0 / det;
    // grad(lambda_i) = rot90(opposite edge) / (2 * signed area)
    let g = [
        [(b[1] - c[1]) * inv, (c[0] - b[0]) * inv],
        [(c[1] - a[1]) * inv, (a[0] - c[0]) * inv],
        [(a[1] - b[1]) * inv, (b[0] - a[0]) * inv],
    ];
    (g, 0.5 * det.abs())
}

/// JSON form of a mesh: node coordinates, element connectivity and boundary indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSnapshot {
    pub dimension: usize,
    pub domain: Domain,
    pub resolution: Vec<usize>,
    pub nodes: Vec<Vec<f64>>,
    pub elements: Vec<Vec<usize>>,
    pub boundary: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSnapshot {
    pub mesh: MeshSnapshot,
    pub values: Vec<f64>,
}

/// Nodal values of a piecewise-linear function on a mesh.
#[derive(Clone)]
pub struct DiscreteField {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
}

impl fmt::Debug for DiscreteField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiscreteField")
            .field("nodes", &self.values.len())
            .field("values", &self.values)
            .finish()
    }
}

impl PartialEq for DiscreteField {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh) && self.values == other.values
    }
}

impl DiscreteField {
    pub fn zeros(mesh: &Arc<Mesh>) -> Self {
        Self {
            mesh: Arc::clone(mesh),
            values: vec![0.0; mesh.num_nodes()],
        }
    }

    pub fn from_values(mesh: &Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_nodes() {
            return Err(Error::Input(format!(
                "{} values for a mesh with {} nodes",
                values.len(),
                mesh.num_nodes()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite value at node {i}")));
        }
        Ok(Self {
            mesh: Arc::clone(mesh),
            values,
        })
    }

    /// Nodal interpolant of `f`; boundary nodes are set to zero when
    /// `zero_boundary` is set.
    pub fn from_fn<F>(mesh: &Arc<Mesh>, f: F, zero_boundary: bool) -> Result<Self>
    where
        F: Fn(&[f64; 2]) -> f64,
    {
        let mut values = Vec::with_capacity(mesh.num_nodes());
        for (i, x) in mesh.coords().iter().enumerate() {
            let v = f(x);
            if !v.is_finite() {
                return Err(Error::Input(format!(
                    "non-finite value {v} at node {i} ({:?})",
                    x
                )));
            }
            values.push(if zero_boundary && mesh.is_boundary(i) {
                0.0
            } else {
                v
            });
        }
        Ok(Self {
            mesh: Arc::clone(mesh),
            values,
        })
    }

    pub(crate) fn from_raw(mesh: &Arc<Mesh>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), mesh.num_nodes());
        Self {
            mesh: Arc::clone(mesh),
            values,
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            mesh: Arc::clone(&self.mesh),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, t: f64) -> Self {
        self.map(|v| t * v)
    }

    /// `self + t * other`
    pub fn axpy(&self, t: f64, other: &DiscreteField) -> Self {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + t * b)
            .collect();
        Self {
            mesh: Arc::clone(&self.mesh),
            values,
        }
    }

    pub fn sub(&self, other: &DiscreteField) -> Self {
        self.axpy(-1.0, other)
    }

    pub fn dot(&self, other: &DiscreteField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Nodal positive part `max(u, 0)`.
    pub fn positive_part(&self) -> Self {
        self.map(|v| v.max(0.0))
    }

    /// Nodal absolute value.
    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_boundary_abs(&self) -> f64 {
        self.mesh
            .boundary_flags()
            .iter()
            .zip(&self.values)
            .filter(|(b, _)| **b)
            .fold(0.0, |m, (_, v)| m.max(v.abs()))
    }

    pub fn min_interior(&self) -> f64 {
        self.mesh
            .boundary_flags()
            .iter()
            .zip(&self.values)
            .filter(|(b, _)| !**b)
            .fold(f64::INFINITY, |m, (_, v)| m.min(*v))
    }

    pub fn zero_boundary(&mut self) {
        for (b, v) in self
            .mesh
            .boundary_flags()
            .iter()
            .zip(self.values.iter_mut())
        {
            if *b {
                *v = 0.0;
            }
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Interpolant values at the quadrature points of the mesh.
    pub fn at_qps(&self) -> Vec<f64> {
        self.mesh.interpolate_at_qps(&self.values)
    }

    /// Injects this field into a uniformly refined mesh (exact for P1 fields).
    pub fn prolongate(&self, fine: &Arc<Mesh>) -> Result<Self> {
        let k = self.mesh.refinement_factor(fine).ok_or_else(|| {
            Error::Input("target mesh is not a uniform refinement of the source mesh".into())
        })?;
        let res = self.mesh.resolution();
        let values = match res {
            [n] => {
                let nf = (n - 1) * k + 1;
                (0..nf)
                    .map(|i| {
                        let (c, r) = (i / k, i % k);
                        if r == 0 {
                            self.values[c]
                        } else {
                            let t = r as f64 / k as f64;
                            (1.0 - t) * self.values[c] + t * self.values[c + 1]
                        }
                    })
                    .collect()
            }
            [nx, ny] => {
                let (nfx, nfy) = ((nx - 1) * k + 1, (ny - 1) * k + 1);
                let mut out = Vec::with_capacity(nfx * nfy);
                for j in 0..nfy {
                    for i in 0..nfx {
                        out.push(self.eval_grid_2d(*nx, k, i, j));
                    }
                }
                out
            }
            _ => unreachable!("mesh resolution has one or two axes"),
        };
        Ok(Self {
            mesh: Arc::clone(fine),
            values,
        })
    }

    // P1 interpolation on the diagonal-split coarse cell containing fine node (i, j).
    fn eval_grid_2d(&self, nx: usize, k: usize, i: usize, j: usize) -> f64 {
        let (ci, ri) = (i / k, i % k);
        let (cj, rj) = (j / k, j % k);
        let u = |a: usize, b: usize| self.values[b * nx + a];
        let v00 = u(ci, cj);
        let s = ri as f64 / k as f64;
        let t = rj as f64 / k as f64;
        if ri == 0 && rj == 0 {
            v00
        } else if s >= t {
            // lower triangle (00, 10, 11)
            let v10 = u(ci + 1, cj);
            let mut v = v00 + s * (v10 - v00);
            if rj > 0 {
                v += t * (u(ci + 1, cj + 1) - v10);
            }
            v
        } else {
            // upper triangle (00, 11, 01)
            let v01 = u(ci, cj + 1);
            let mut v = v00 + t * (v01 - v00);
            if ri > 0 {
                v += s * (u(ci + 1, cj + 1) - v01);
            }
            v
        }
    }

    pub fn snapshot(&self) -> FieldSnapshot {
        FieldSnapshot {
            mesh: self.mesh.snapshot(),
            values: self.values.clone(),
        }
    }
}

impl Serialize for DiscreteField {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        self.snapshot().serialize(serializer)
    }
}

/// `(int |u|^r)^(1/r)` by element quadrature of the interpolant.
pub fn lr_norm(u: &DiscreteField, r: f64) -> Result<f64> {
    if !(r >= 1.0) {
        return Err(Error::Input(format!("L^r norm needs r >= 1, got {r}")));
    }
    Ok(lr_norm_of_qps(&u.at_qps(), u.mesh().qp_weights(), r))
}

pub(crate) fn lr_norm_of_qps(values: &[f64], weights: &[f64], r: f64) -> f64 {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    // factor out the max to avoid overflow for large r
    let s: f64 = values
        .iter()
        .zip(weights)
        .map(|(v, w)| w * (v.abs() / scale).powf(r))
        .sum();
    scale * s.powf(1.0 / r)
}

type Evaluator = Arc<dyn Fn(&[f64; 2]) -> f64 + Send + Sync>;

/// A bounded nonnegative coefficient `a(x)` or `b(x)` with declared bounds
/// `lower <= c(x) <= upper`.
#[derive(Clone)]
pub struct CoefficientField {
    evaluator: Evaluator,
    lower: f64,
    upper: f64,
    label: String,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("label", &self.label)
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .finish()
    }
}

impl CoefficientField {
    pub fn new<F>(f: F, lower: f64, upper: f64, label: impl Into<String>) -> Result<Self>
    where
        F: Fn(&[f64; 2]) -> f64 + Send + Sync + 'static,
    {
        if !(lower >= 0.0 && lower <= upper && upper.is_finite()) {
            return Err(Error::Config(format!(
                "coefficient bounds must satisfy 0 <= lower <= upper < inf, got [{lower}, {upper}]"
            )));
        }
        Ok(Self {
            evaluator: Arc::new(f),
            lower,
            upper,
            label: label.into(),
        })
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(move |_| c, c, c, format!("constant({c})"))
    }

    /// `c0 + cx x + cy y` with user-declared bounds.
    pub fn affine(c0: f64, cx: f64, cy: f64, lower: f64, upper: f64) -> Result<Self> {
        Self::new(
            move |x| c0 + cx * x[0] + cy * x[1],
            lower,
            upper,
            format!("affine({c0}, {cx}, {cy})"),
        )
    }

    /// `base + amplitude * prod_k sin(pi (x_k - lo_k) / L_k)` over the axes of `domain`.
    pub fn sinusoidal_bump(
        base: f64,
        amplitude: f64,
        domain: &Domain,
        lower: f64,
        upper: f64,
    ) -> Result<Self> {
        let (lo, len) = domain.bounds();
        let dim = domain.dimension();
        Self::new(
            move |x| {
                let mut prod = 1.0;
                for k in 0..dim {
                    prod *= (std::f64::consts::PI * (x[k] - lo[k]) / len[k]).sin();
                }
                base + amplitude * prod
            },
            lower,
            upper,
            format!("sinusoidal_bump({base}, {amplitude})"),
        )
    }

    pub fn eval(&self, x: &[f64; 2]) -> f64 {
        (self.evaluator)(x)
    }

    /// Declared lower bound `sigma`.
    pub fn lower(&self) -> f64 {
        self.lower
    }

    /// Declared sup-norm bound.
    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    fn sample(&self, points: &[[f64; 2]], what: &str) -> Result<Vec<f64>> {
        let slack = 1e-12 * self.upper.max(1.0);
        points
            .iter()
            .map(|x| {
                let v = self.eval(x);
                if !v.is_finite() || v < self.lower - slack || v > self.upper + slack {
                    Err(Error::Config(format!(
                        "coefficient {} = {v} at {what} {:?} leaves the declared range [{}, {}]",
                        self.label, x, self.lower, self.upper
                    )))
                } else {
                    Ok(v)
                }
            })
            .collect()
    }
}

/// Default regularization of `|grad u|^(p-2)` for `p < 2`.
pub const DEFAULT_DELTA_REG: f64 = 1e-12;

/// Continuous problem data together with its discretization.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    exponents: Exponents,
    epsilon: f64,
    a: CoefficientField,
    b: CoefficientField,
    mesh: Arc<Mesh>,
    a_qp: Arc<Vec<f64>>,
    b_qp: Arc<Vec<f64>>,
    a_nodes: Arc<Vec<f64>>,
    b_nodes: Arc<Vec<f64>>,
    delta_reg: f64,
}

impl ProblemSpec {
    pub fn new(
        exponents: Exponents,
        epsilon: f64,
        a: CoefficientField,
        b: CoefficientField,
        mesh: Arc<Mesh>,
    ) -> Result<Self> {
        exponents.validate()?;
        exponents.check_subcritical(mesh.dimension())?;
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Input(format!(
                "epsilon must be positive and finite, got {epsilon}"
            )));
        }
        if !(b.lower() > 0.0) {
            return Err(Error::Config(format!(
                "the b coefficient needs a positive lower bound, got sigma_b = {}",
                b.lower()
            )));
        }
        let a_qp = a.sample(mesh.qp_coords(), "quadrature point")?;
        let b_qp = b.sample(mesh.qp_coords(), "quadrature point")?;
        let a_nodes = a.sample(mesh.coords(), "node")?;
        let b_nodes = b.sample(mesh.coords(), "node")?;
        Ok(Self {
            exponents,
            epsilon,
            a,
            b,
            mesh,
            a_qp: Arc::new(a_qp),
            b_qp: Arc::new(b_qp),
            a_nodes: Arc::new(a_nodes),
            b_nodes: Arc::new(b_nodes),
            delta_reg: DEFAULT_DELTA_REG,
        })
    }

    /// Same data with a different `epsilon`.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Input(format!(
                "epsilon must be positive and finite, got {epsilon}"
            )));
        }
        Ok(Self {
            epsilon,
            ..self.clone()
        })
    }

    pub fn with_delta_reg(mut self, delta_reg: f64) -> Self {
        self.delta_reg = delta_reg;
        self
    }

    pub fn exponents(&self) -> &Exponents {
        &self.exponents
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn a(&self) -> &CoefficientField {
        &self.a
    }

    pub fn b(&self) -> &CoefficientField {
        &self.b
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn a_at_qps(&self) -> &[f64] {
        &self.a_qp
    }

    pub fn b_at_qps(&self) -> &[f64] {
        &self.b_qp
    }

    pub fn a_at_nodes(&self) -> &[f64] {
        &self.a_nodes
    }

    pub fn b_at_nodes(&self) -> &[f64] {
        &self.b_nodes
    }

    pub fn delta_reg(&self) -> f64 {
        self.delta_reg
    }

    /// Membership tolerance for the set `A(u) > 0`.
    pub fn tol_a(&self) -> f64 {
        1e-12 * (1.0 + self.b.upper() * self.mesh.domain().measure())
    }
}
