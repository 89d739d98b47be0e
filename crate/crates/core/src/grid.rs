//! Uniform 1D/2D grids and the Neumann finite-difference Laplacian.
//!
//! Nodes are vertex-centred: along an axis `[lo, hi]` split into `n` cells,
//! node `j` sits at `lo + j * h` for `j = 0..n`, `h = (hi - lo) / n`. In 2D the
//! state index is `ix * n_y + iy` (y fastest), which is the ordering under
//! which the Laplacian is the Kronecker sum `B_x ⊗ I + I ⊗ B_y`.

use nalgebra_sparse::{CooMatrix, CsrMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SktError};
use crate::sparse;

/// One uniformly partitioned coordinate axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(SktError::InvalidGrid(format!(
                "axis needs at least 2 nodes, got {n}"
            )));
        }
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(SktError::InvalidGrid(format!(
                "axis interval [{lo}, {hi}] is empty or non-finite"
            )));
        }
        Ok(Self { lo, hi, n })
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / self.n as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        self.lo + j as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.node(j)).collect()
    }

    /// Trapezoidal weights over the nodes.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let mut w = vec![h; self.n];
        w[0] = 0.5 * h;
        w[self.n - 1] = 0.5 * h;
        w
    }
}

/// A uniform grid in one or two dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    x: Axis,
    y: Option<Axis>,
    weights: Vec<f64>,
}

impl SpatialGrid {
    pub fn new_1d(x: Axis) -> Result<Self> {
        let x = Axis::new(x.lo, x.hi, x.n)?;
        let weights = x.trapezoid_weights();
        Ok(Self {
            x,
            y: None,
            weights,
        })
    }

    pub fn new_2d(x: Axis, y: Axis) -> Result<Self> {
        let x = Axis::new(x.lo, x.hi, x.n)?;
        let y = Axis::new(y.lo, y.hi, y.n)?;
        let wx = x.trapezoid_weights();
        let wy = y.trapezoid_weights();
        let weights = wx
            .iter()
            .flat_map(|a| wy.iter().map(move |b| a * b))
            .collect();
        Ok(Self {
            x,
            y: Some(y),
            weights,
        })
    }

    pub fn dim(&self) -> usize {
        if self.y.is_some() {
            2
        } else {
            1
        }
    }

    pub fn x_axis(&self) -> &Axis {
        &self.x
    }

    pub fn y_axis(&self) -> Option<&Axis> {
        self.y.as_ref()
    }

    pub fn n_x(&self) -> usize {
        self.x.n
    }

    pub fn n_y(&self) -> usize {
        self.y.map_or(1, |a| a.n)
    }

    pub fn dx(&self) -> f64 {
        self.x.spacing()
    }

    pub fn dy(&self) -> Option<f64> {
        self.y.map(|a| a.spacing())
    }

    /// Total node count `N`.
    pub fn len(&self) -> usize {
        self.n_x() * self.n_y()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear index of node `(ix, iy)`.
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        ix * self.n_y() + iy
    }

    /// Coordinates of node `k`; the second entry is 0 in 1D.
    pub fn point(&self, k: usize) -> [f64; 2] {
        let ny = self.n_y();
        let x = self.x.node(k / ny);
        let y = self.y.map_or(0.0, |a| a.node(k % ny));
        [x, y]
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    /// Trapezoidal quadrature weights, one per node.
    pub fn quadrature_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Measure of the region covered by the quadrature (sum of weights).
    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `∫ f dΩ` by the trapezoidal rule.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    /// Trapezoidal L² norm.
    pub fn l2_norm(&self, f: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(f)
            .map(|(w, v)| w * v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Trapezoidal L² norm of `a - b`.
    pub fn l2_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| w * (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }
}

/// Neumann second-difference matrix `B_n` (unscaled).
///
/// Interior rows are `(1, -2, 1)`; the boundary rows `(-2, 2)` and `(2, -2)`
/// come from mirrored ghost nodes.
pub fn build_bn(n: usize) -> Result<CsrMatrix<f64>> {
    if n < 2 {
        return Err(SktError::InvalidSize(format!("B_n needs n >= 2, got {n}")));
    }
    let mut coo = CooMatrix::new(n, n);
    for i in 0..n {
        coo.push(i, i, -2.0);
        if i == 0 {
            coo.push(0, 1, 2.0);
        } else if i == n - 1 {
            coo.push(i, i - 1, 2.0);
        } else {
            coo.push(i, i - 1, 1.0);
            coo.push(i, i + 1, 1.0);
        }
    }
    Ok(CsrMatrix::from(&coo))
}

/// The assembled Laplacian together with the grid it lives on.
#[derive(Debug, Clone)]
pub struct LaplacianOperator {
    pub matrix: CsrMatrix<f64>,
    pub grid: SpatialGrid,
}

/// Assemble `A = B_x/Δx²` in 1D or `B_x⊗I/Δx² + I⊗B_y/Δy²` in 2D.
pub fn build_laplacian(grid: &SpatialGrid) -> Result<LaplacianOperator> {
    let dx = grid.dx();
    let bx = build_bn(grid.n_x())?;
    let matrix = match grid.y_axis() {
        None => bx * (1.0 / (dx * dx)),
        Some(y) => {
            let dy = y.spacing();
            let by = build_bn(y.n)?;
            let xx = sparse::kron(&bx, &CsrMatrix::identity(y.n));
            let yy = sparse::kron(&CsrMatrix::identity(grid.n_x()), &by);
            sparse::linear_combination(1.0 / (dx * dx), &xx, 1.0 / (dy * dy), &yy)
        }
    };
    Ok(LaplacianOperator {
        matrix,
        grid: grid.clone(),
    })
}
