//! Cell-centred uniform grid on the unit interval with reflecting
//! (zero-flux) boundaries.

use std::f64::consts::PI;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    n_cells: usize,
}

impl Grid {
    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::Domain(format!("grid needs at least 2 cells, got {n_cells}")));
        }
        Ok(Self { n_cells })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Cell width; the domain has unit length.
    pub fn h(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    /// Midpoint of cell `j`.
    pub fn x(&self, j: usize) -> f64 {
        (j as f64 + 0.5) / self.n_cells as f64
    }

    pub fn midpoints(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_cells).map(|j| self.x(j))
    }
}

/// Sampled concentration profile, one value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::Domain(format!(
                "field has {} values for a {}-cell grid",
                values.len(),
                grid.n_cells()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite field value {v}")));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.n_cells()],
        }
    }

    /// Samples `f` at cell midpoints.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid,
            values: grid.midpoints().map(f).collect(),
        }
    }

    /// Internal constructor for values already known to have the right length.
    pub(crate) fn from_vec_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_cells());
        Self { grid, values }
    }

    pub fn grid(&self) -> Grid {
        self.grid
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

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_vec_unchecked(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert_eq!(self.grid, other.grid);
        Field::from_vec_unchecked(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Midpoint-rule integral over the unit interval. Since the domain has
    /// unit measure this is also the spatial average.
    pub fn integrate(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.grid.n_cells() as f64
    }

    /// Integral of `|f - g|`.
    pub fn l1_distance(&self, other: &Field) -> f64 {
        self.zip_map(other, |a, b| (a - b).abs()).integrate()
    }

    /// Integral of `(f - g)^2`.
    pub fn l2_distance_sq(&self, other: &Field) -> f64 {
        self.zip_map(other, |a, b| (a - b) * (a - b)).integrate()
    }

    pub fn sqrt(&self) -> Field {
        self.map(|v| v.max(0.0).sqrt())
    }
}

/// `d * Lap_h f` with the three-point stencil and mirrored ghost cells.
pub fn neumann_laplacian(f: &Field, d: f64) -> Field {
    let v = f.values();
    let n = v.len();
    let inv_h2 = (n * n) as f64;
    let out = (0..n)
        .map(|j| {
            let left = if j == 0 { v[0] } else { v[j - 1] };
            let right = if j + 1 == n { v[n - 1] } else { v[j + 1] };
            d * ((left - v[j]) + (right - v[j])) * inv_h2
        })
        .collect();
    Field::from_vec_unchecked(f.grid(), out)
}

/// Discrete Dirichlet energy `int |grad_h u|^2` over interior interfaces.
pub fn dirichlet_energy(u: &Field) -> f64 {
    let h = u.grid().h();
    let sum: f64 = u.values().windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    sum / h
}

/// Fisher information `4 int |grad sqrt f|^2`, using interface differences
/// of `sqrt f` so it stays finite where `f` touches zero.
pub fn fisher_information(f: &Field) -> f64 {
    4.0 * dirichlet_energy(&f.sqrt())
}

/// First nonzero Neumann eigenvalue of `-Lap` on the unit interval.
///
/// This is the continuum value `pi^2`; the grid operator's eigenvalue
/// `4 sin^2(pi h / 2) / h^2` approaches it from below.
pub fn poincare_constant(_grid: &Grid) -> f64 {
    PI * PI
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grid_rejects_tiny() {
        assert!(Grid::new(1).is_err());
        assert!(Grid::new(0).is_err());
        let g = Grid::new(8).unwrap();
        assert_eq!(g.h() * g.n_cells() as f64, 1.0);
    }

    #[test]
    fn field_rejects_bad_values() {
        let g = Grid::new(4).unwrap();
        assert!(Field::new(g, vec![1.0; 3]).is_err());
        assert!(Field::new(g, vec![1.0, f64::NAN, 1.0, 1.0]).is_err());
    }

    #[test]
    fn integrate_examples() {
        for n in [2, 3, 7, 64, 1000] {
            let g = Grid::new(n).unwrap();
            assert!((Field::constant(g, 2.5).integrate() - 2.5).abs() < 1e-15);
            assert!((Field::from_fn(g, |x| x).integrate() - 0.5).abs() < 1e-15);
        }
        let g = Grid::new(128).unwrap();
        let f = Field::from_fn(g, |x| (PI * x).sin().powi(2));
        assert!((f.integrate() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let g = Grid::new(16).unwrap();
        let lap = neumann_laplacian(&Field::constant(g, 3.0), 2.0);
        assert!(lap.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn laplacian_cosine_eigenfunction() {
        let g = Grid::new(256).unwrap();
        let f = Field::from_fn(g, |x| (PI * x).cos());
        let lap = neumann_laplacian(&f, 1.0);
        let h = g.h();
        let err = g
            .midpoints()
            .zip(lap.values())
            .map(|(x, &v)| (v + PI * PI * (PI * x).cos()).abs())
            .fold(0.0, f64::max);
        // second-order stencil; the boundary cell is also O(h^2) for cos(pi x)
        assert!(err < 10.0 * h * h * PI.powi(4), "err = {err}");
    }

    #[test]
    fn fisher_examples() {
        let g = Grid::new(8).unwrap();
        assert_eq!(fisher_information(&Field::constant(g, 4.0)), 0.0);

        let g2 = Grid::new(2).unwrap();
        let f = Field::new(g2, vec![0.0, 4.0]).unwrap();
        assert!((fisher_information(&f) - 32.0).abs() < 1e-12);

        let g = Grid::new(512).unwrap();
        let f = Field::from_fn(g, |x| (1.0 + 0.5 * (2.0 * PI * x).sin()).powi(2));
        let want = 2.0 * PI * PI;
        assert!((fisher_information(&f) - want).abs() < 0.01 * want);
    }

    /// Inverse iteration with the constant mode projected out.
    fn smallest_nonzero_eigenvalue(n: usize) -> f64 {
        let g = Grid::new(n).unwrap();
        let h2 = g.h() * g.h();
        let shift = 1.0;
        // (-Lap_h + shift) x = b, Neumann rows
        let solve = |b: &[f64]| -> Vec<f64> {
            let off = -1.0 / h2;
            let diag: Vec<f64> = (0..n)
                .map(|j| {
                    let nb = if j == 0 || j + 1 == n { 1.0 } else { 2.0 };
                    nb / h2 + shift
                })
                .collect();
            let mut c = vec![0.0; n];
            let mut d = vec![0.0; n];
            c[0] = off / diag[0];
            d[0] = b[0] / diag[0];
            for j in 1..n {
                let den = diag[j] - off * c[j - 1];
                c[j] = off / den;
                d[j] = (b[j] - off * d[j - 1]) / den;
            }
            let mut x = vec![0.0; n];
            x[n - 1] = d[n - 1];
            for j in (0..n - 1).rev() {
                x[j] = d[j] - c[j] * x[j + 1];
            }
            x
        };
        let mut v: Vec<f64> = (0..n).map(|j| (j as f64 * 0.37).sin() + g.x(j)).collect();
        let mut lambda = 0.0;
        for _ in 0..200 {
            let mean = v.iter().sum::<f64>() / n as f64;
            v.iter_mut().for_each(|x| *x -= mean);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            let w = solve(&v);
            let rayleigh: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
            lambda = 1.0 / rayleigh - shift;
            v = w;
        }
        lambda
    }

    #[test]
    fn poincare_constant_matches_discrete_spectrum() {
        let g = Grid::new(1024).unwrap();
        let p = poincare_constant(&g);
        assert!((p - 9.869604401089358).abs() < 1e-14);
        let lambda = smallest_nonzero_eigenvalue(1024);
        assert!((lambda - p).abs() < 1e-3 * p, "lambda = {lambda}");
        assert!(lambda < p);
        let coarse = smallest_nonzero_eigenvalue(64);
        assert!((p - lambda) < (p - coarse));
    }

    #[test]
    fn poincare_inequality_on_random_fields() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let n = rng.gen_range(16..200);
            let g = Grid::new(n).unwrap();
            let u = Field::new(g, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let mean = u.integrate();
            let var = u.map(|v| (v - mean).powi(2)).integrate();
            assert!(poincare_constant(&g) * var <= dirichlet_energy(&u) * 1.01);
        }
    }

    fn field_strategy() -> impl Strategy<Value = Field> {
        prop::collection::vec(0.0f64..10.0, 2..64)
            .prop_map(|v| Field::new(Grid::new(v.len()).unwrap(), v).unwrap())
    }

    proptest! {
        #[test]
        fn stencil_is_conservative(f in field_strategy(), d in 0.0f64..5.0) {
            let lap = neumann_laplacian(&f, d);
            let n = f.grid().n_cells() as f64;
            let bound = 1e-13 * f.max().max(1.0) * n * n * d.max(1.0);
            prop_assert!(lap.integrate().abs() <= bound);
        }

        #[test]
        fn fisher_nonnegative(f in field_strategy()) {
            prop_assert!(fisher_information(&f) >= 0.0);
        }

        #[test]
        fn jensen_on_grid(f in field_strategy()) {
            prop_assert!(f.sqrt().integrate() <= f.integrate().sqrt() * (1.0 + 1e-14));
        }
    }
}
