//! Sobolev-type preconditioner `alpha K + beta M` on the interior nodes, where
//! `K` is the P1 stiffness matrix of the Laplacian and `M` the lumped mass.

use nalgebra::DMatrix;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};

use crate::error::{Error, Result};
use crate::problem::Mesh;

pub struct Preconditioner {
    chol: CscCholesky<f64>,
    /// Interior index of every node, `usize::MAX` on the boundary.
    slot: Vec<usize>,
    interior: Vec<usize>,
    stiffness: f64,
    mass: f64,
}

impl Preconditioner {
    pub fn new(mesh: &Mesh, stiffness: f64, mass: f64) -> Result<Self> {
        if !(stiffness >= 0.0 && mass >= 0.0 && stiffness + mass > 0.0) {
            return Err(Error::Input(format!(
                "preconditioner weights must be nonnegative and not both zero ({stiffness}, {mass})"
            )));
        }
        let interior = mesh.interior_nodes();
        let mut slot = vec![usize::MAX; mesh.num_nodes()];
        for (k, &i) in interior.iter().enumerate() {
            slot[i] = k;
        }
        let n = interior.len();
        let nloc = mesh.nodes_per_cell();
        let mut coo = CooMatrix::new(n, n);
        for e in 0..mesh.num_cells() {
            let nodes = mesh.cell_nodes(e);
            let g = mesh.cell_gradients(e);
            let m = mesh.cell_measure(e);
            for l in 0..nloc {
                let i = slot[nodes[l]];
                if i == usize::MAX {
                    continue;
                }
                coo.push(i, i, mass * m / nloc as f64);
                for r in 0..nloc {
                    let j = slot[nodes[r]];
                    if j == usize::MAX {
                        continue;
                    }
                    let k = m * (g[l][0] * g[r][0] + g[l][1] * g[r][1]);
                    coo.push(i, j, stiffness * k);
                }
            }
        }
        let csc = CscMatrix::from(&coo);
        let chol = CscCholesky::factor(&csc)
            .map_err(|e| Error::Numerical(format!("preconditioner factorization failed: {e}")))?;
        Ok(Self {
            chol,
            slot,
            interior,
            stiffness,
            mass,
        })
    }

    /// Solves `P x = g` on the interior; boundary entries of the result are 0.
    pub fn solve(&self, g: &[f64]) -> Vec<f64> {
        let mut rhs =
            DMatrix::from_iterator(self.interior.len(), 1, self.interior.iter().map(|&i| g[i]));
        self.chol.solve_mut(&mut rhs);
        let mut out = vec![0.0; self.slot.len()];
        for (k, &i) in self.interior.iter().enumerate() {
            out[i] = rhs[(k, 0)];
        }
        out
    }

    /// `x^T P y` assembled element by element (boundary values are ignored).
    pub fn inner(&self, mesh: &Mesh, x: &[f64], y: &[f64]) -> f64 {
        let nloc = mesh.nodes_per_cell();
        let masked = |v: &[f64], i: usize| {
            if self.slot[i] == usize::MAX {
                0.0
            } else {
                v[i]
            }
        };
        let mut sum = 0.0;
        for e in 0..mesh.num_cells() {
            let nodes = mesh.cell_nodes(e);
            let g = mesh.cell_gradients(e);
            let m = mesh.cell_measure(e);
            let mut gx = [0.0; 2];
            let mut gy = [0.0; 2];
            let mut mass = 0.0;
            for l in 0..nloc {
                let (xv, yv) = (masked(x, nodes[l]), masked(y, nodes[l]));
                gx[0] += g[l][0] * xv;
                gx[1] += g[l][1] * xv;
                gy[0] += g[l][0] * yv;
                gy[1] += g[l][1] * yv;
                mass += xv * yv;
            }
            sum += self.stiffness * m * (gx[0] * gy[0] + gx[1] * gy[1])
                + self.mass * m * mass / nloc as f64;
        }
        sum
    }

    pub fn norm(&self, mesh: &Mesh, x: &[f64]) -> f64 {
        self.inner(mesh, x, x).max(0.0).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Domain;

    #[test]
    fn solve_inverts_inner_product() {
        let mesh = Mesh::build(Domain::unit_square(), &[7]).unwrap();
        let pre = Preconditioner::new(&mesh, 0.3, 1.0).unwrap();
        let g: Vec<f64> = (0..mesh.num_nodes())
            .map(|i| {
                if mesh.is_boundary(i) {
                    0.0
                } else {
                    (i as f64 * 0.37).sin()
                }
            })
            .collect();
        let x = pre.solve(&g);
        // <P x, e_i> = g_i for every interior unit vector
        for i in mesh.interior_nodes() {
            let mut e = vec![0.0; mesh.num_nodes()];
            e[i] = 1.0;
            let lhs = pre.inner(&mesh, &x, &e);
            assert!((lhs - g[i]).abs() < 1e-12, "node {i}: {lhs} vs {}", g[i]);
        }
        assert!(mesh.boundary_nodes().iter().all(|&i| x[i] == 0.0));
    }
}
