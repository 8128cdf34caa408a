//! Jacobi-preconditioned conjugate gradient for the shifted stencil operator.

use crate::domain::{laplacian_diagonal, laplacian_into, Grid, Region};
use crate::error::{Error, Result};

/// `y = a·x + τ(−Δ_h x + c ⊙ x)` on the active nodes of a region.
#[derive(Debug, Clone)]
pub struct ShiftedLaplacian {
    grid: Grid,
    region: Region,
    coeff: Vec<f64>,
    identity: f64,
    tau: f64,
    diag: Vec<f64>,
}

impl ShiftedLaplacian {
    pub fn new(grid: Grid, region: &Region, coeff: Vec<f64>, identity: f64, tau: f64) -> Self {
        let lap = laplacian_diagonal(&grid, region);
        let diag = (0..grid.len())
            .map(|k| if region.active[k] { identity + tau * (lap[k] + coeff[k]) } else { 1.0 })
            .collect();
        Self { grid, region: region.clone(), coeff, identity, tau, diag }
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        laplacian_into(&self.grid, &self.region, x, y);
        for k in 0..x.len() {
            y[k] = if self.region.active[k] {
                self.identity * x[k] + self.tau * (y[k] + self.coeff[k] * x[k])
            } else {
                0.0
            };
        }
    }

    pub fn len(&self) -> usize {
        self.coeff.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeff.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// Final `‖b − Ax‖ / ‖b‖`.
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` to relative residual `tol`.
pub fn pcg(op: &ShiftedLaplacian, b: &[f64], x0: Option<&[f64]>, tol: f64, max_iters: usize) -> Result<CgOutcome> {
    let n = op.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(CgOutcome { solution: vec![0.0; n], iterations: 0, relative_residual: 0.0 });
    }
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut ax = vec![0.0; n];
    op.apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut z: Vec<f64> = r.iter().zip(&op.diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = dot(&r, &r).sqrt() / bnorm;
    for it in 0..max_iters {
        if rel <= tol {
            return Ok(CgOutcome { solution: x, iterations: it, relative_residual: rel });
        }
        op.apply(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            return Err(Error::CgBreakdown { iteration: it, curvature });
        }
        let alpha = rz / curvature;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        for k in 0..n {
            z[k] = r[k] / op.diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
        rel = dot(&r, &r).sqrt() / bnorm;
    }
    if rel <= tol {
        Ok(CgOutcome { solution: x, iterations: max_iters, relative_residual: rel })
    } else {
        Err(Error::CgNotConverged { max_iters, tol, residual: rel })
    }
}
