//! Uniform 1-D grid, trapezoid quadrature and summation-by-parts differences.
//!
//! The first-derivative operator `d1` is the classical second-order SBP
//! operator paired with the trapezoid norm `H = diag(dz/2, dz, ..., dz, dz/2)`:
//! central differences in the interior and one-sided first differences at the
//! two ends. It satisfies
//!
//! ```text
//! a^T H (D1 b) + (D1 a)^T H b = a_n b_n - a_0 b_0
//! ```
//!
//! exactly, which is the discrete counterpart of integration by parts.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Node-sampled scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct Field(Vec<f64>);

impl Field {
    pub fn zeros(n_nodes: usize) -> Self {
        Field(vec![0.0; n_nodes])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Field(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.0[0]
    }

    pub fn last(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        assert_eq!(self.len(), other.len(), "field length mismatch");
        Field(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn scaled(&self, s: f64) -> Field {
        self.map(|v| s * v)
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a * b)
    }

    /// `self + h * other`
    pub fn axpy(&self, h: f64, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + h * b)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        assert_eq!(self.len(), other.len(), "field length mismatch");
        self.0
            .iter()
            .zip(&other.0)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Index<usize> for Field {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Field {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Boundary treatment for the second-difference operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bc {
    /// `w(0) = 0` (pinned node) and `w_z(L) = 0` (mirror ghost node).
    ClampedFree,
    /// No boundary conditions; one-sided stencils at both ends.
    None,
}

/// Uniform mesh on `[0, L]` whose nodes include the two patch edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    n_cells: usize,
    length: f64,
    dz: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    patch_lo: usize,
    patch_hi: usize,
}

impl Grid {
    /// Builds the mesh and snaps the patch edges onto nodes. Edges that are
    /// not within `1e-9 * dz` of a node are rejected, never moved.
    pub fn new(length: f64, n_cells: usize, z_p1: f64, z_p2: f64) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::NonPositiveLength(length));
        }
        if n_cells < 8 {
            return Err(Error::TooFewCells(n_cells));
        }
        if !(0.0 < z_p1 && z_p1 < z_p2 && z_p2 < length) {
            return Err(Error::PatchOutOfDomain {
                lo: z_p1,
                hi: z_p2,
                length,
            });
        }
        let dz = length / n_cells as f64;
        let snap = |z: f64| -> Result<usize> {
            let r = z / dz;
            if (r - r.round()).abs() > 1e-9 {
                return Err(Error::PatchOffGrid { coord: z, dz });
            }
            Ok(r.round() as usize)
        };
        let patch_lo = snap(z_p1)?;
        let patch_hi = snap(z_p2)?;

        let mut nodes: Vec<f64> = (0..=n_cells).map(|i| i as f64 * dz).collect();
        nodes[n_cells] = length;
        let mut weights = vec![dz; n_cells + 1];
        weights[0] = 0.5 * dz;
        weights[n_cells] = 0.5 * dz;

        Ok(Grid {
            n_cells,
            length,
            dz,
            nodes,
            weights,
            patch_lo,
            patch_hi,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_nodes(&self) -> usize {
        self.n_cells + 1
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dz(&self) -> f64 {
        self.dz
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Trapezoid quadrature weights (the SBP norm).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Node indices of `z_p1` and `z_p2`.
    pub fn patch_indices(&self) -> (usize, usize) {
        (self.patch_lo, self.patch_hi)
    }

    pub fn zeros(&self) -> Field {
        Field::zeros(self.n_nodes())
    }

    pub fn field(&self, f: impl Fn(f64) -> f64) -> Field {
        Field(self.nodes.iter().map(|&z| f(z)).collect())
    }

    pub fn check(&self, f: &Field) -> Result<()> {
        if f.len() != self.n_nodes() {
            return Err(Error::LengthMismatch {
                expected: self.n_nodes(),
                got: f.len(),
            });
        }
        Ok(())
    }

    fn assert_on_grid(&self, f: &Field) {
        assert_eq!(f.len(), self.n_nodes(), "field is not defined on this grid");
    }

    /// Composite trapezoid rule for `int_0^L f dz`.
    pub fn quad(&self, f: &Field) -> f64 {
        self.assert_on_grid(f);
        self.weights
            .iter()
            .zip(f.values())
            .map(|(h, v)| h * v)
            .sum()
    }

    /// Discrete `L2` inner product `a^T H b`.
    pub fn inner(&self, a: &Field, b: &Field) -> f64 {
        self.assert_on_grid(a);
        self.assert_on_grid(b);
        self.weights
            .iter()
            .zip(a.values().iter().zip(b.values()))
            .map(|(h, (x, y))| h * x * y)
            .sum()
    }

    /// `sqrt(a^T H a)`
    pub fn l2_norm(&self, a: &Field) -> f64 {
        self.inner(a, a).sqrt()
    }

    /// SBP first derivative.
    pub fn d1(&self, f: &Field) -> Field {
        self.assert_on_grid(f);
        let n = self.n_cells;
        let v = f.values();
        let mut out = vec![0.0; n + 1];
        let inv2 = 0.5 / self.dz;
        for i in 1..n {
            out[i] = (v[i + 1] - v[i - 1]) * inv2;
        }
        out[0] = (v[1] - v[0]) / self.dz;
        out[n] = (v[n] - v[n - 1]) / self.dz;
        Field(out)
    }

    /// Second derivative.
    ///
    /// With [`Bc::ClampedFree`] the Dirichlet node is pinned (its entry is 0)
    /// and the free end uses the mirror ghost `w_{n+1} = w_{n-1}`.
    pub fn d2(&self, f: &Field, bc: Bc) -> Result<Field> {
        self.check(f)?;
        let n = self.n_cells;
        let v = f.values();
        let inv = 1.0 / (self.dz * self.dz);
        let mut out = vec![0.0; n + 1];
        for i in 1..n {
            out[i] = (v[i + 1] - 2.0 * v[i] + v[i - 1]) * inv;
        }
        match bc {
            Bc::ClampedFree => {
                let scale = f.max_abs();
                if v[0].abs() > 1e-9 * scale {
                    return Err(Error::BcViolation { value: v[0] });
                }
                out[0] = 0.0;
                out[n] = 2.0 * (v[n - 1] - v[n]) * inv;
            }
            Bc::None => {
                out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) * inv;
                out[n] = (2.0 * v[n] - 5.0 * v[n - 1] + 4.0 * v[n - 2] - v[n - 3]) * inv;
            }
        }
        Ok(Field(out))
    }

    /// Cumulative trapezoid integral from `z = 0`, starting at 0.
    pub fn cumulative_trapezoid(&self, f: &Field) -> Field {
        self.assert_on_grid(f);
        let v = f.values();
        let mut out = Vec::with_capacity(v.len());
        let mut acc = 0.0;
        out.push(0.0);
        for i in 1..v.len() {
            acc += 0.5 * self.dz * (v[i - 1] + v[i]);
            out.push(acc);
        }
        Field(out)
    }

    /// Integral over `[0, L]` of the piecewise-linear interpolant of `f`,
    /// i.e. the last entry of [`Grid::cumulative_trapezoid`].
    pub fn integral_to_end(&self, f: &Field) -> f64 {
        self.assert_on_grid(f);
        let v = f.values();
        v.windows(2).map(|w| 0.5 * self.dz * (w[0] + w[1])).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(n: usize) -> Grid {
        Grid::new(1.0, n, 0.4, 0.6).unwrap()
    }

    #[test]
    fn build_reference_grid() {
        let g = unit(10);
        assert!((g.dz() - 0.1).abs() < 1e-15);
        assert_eq!(g.patch_indices(), (4, 6));
        assert_eq!(g.nodes()[0], 0.0);
        assert_eq!(g.nodes()[10], 1.0);

        let g = Grid::new(2.0, 20, 0.4, 0.6).unwrap();
        assert!((g.dz() - 0.1).abs() < 1e-15);
        assert_eq!(g.patch_indices(), (4, 6));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            Grid::new(1.0, 10, 0.45, 0.6),
            Err(Error::PatchOffGrid { .. })
        ));
        assert!(matches!(
            Grid::new(0.0, 10, 0.4, 0.6),
            Err(Error::NonPositiveLength(_))
        ));
        assert!(matches!(
            Grid::new(-1.0, 10, 0.4, 0.6),
            Err(Error::NonPositiveLength(_))
        ));
        assert!(matches!(
            Grid::new(1.0, 4, 0.5, 0.75),
            Err(Error::TooFewCells(4))
        ));
        assert!(matches!(
            Grid::new(1.0, 10, 0.6, 0.4),
            Err(Error::PatchOutOfDomain { .. })
        ));
    }

    #[test]
    fn nodes_uniform_and_weights_positive() {
        for n in [10, 37, 200] {
            let dz = 3.0 / n as f64;
            let g = Grid::new(3.0, n, 2.0 * dz, 5.0 * dz).unwrap();
            assert_eq!(g.patch_indices(), (2, 5));
            for w in g.nodes().windows(2) {
                assert!((w[1] - w[0] - g.dz()).abs() <= 1e-12 * g.length());
            }
            assert!(g.weights().iter().all(|&h| h > 0.0));
            let total: f64 = g.weights().iter().sum();
            assert!((total - g.length()).abs() < 1e-12);
        }
    }

    #[test]
    fn quadrature_examples() {
        for n in [10, 20, 50] {
            let g = unit(n);
            assert!((g.quad(&g.field(|_| 1.0)) - 1.0).abs() < 1e-14);
        }
        let g = unit(10);
        assert!((g.quad(&g.field(|z| z)) - 0.5).abs() < 1e-15);
        // 0.1 * (sum_{i=1}^{9} (0.1 i)^2 + 0.5 * 1)
        let oracle: f64 = 0.1 * ((1..10).map(|i| (0.1 * i as f64).powi(2)).sum::<f64>() + 0.5);
        assert!((oracle - 0.335).abs() < 1e-15);
        assert!((g.quad(&g.field(|z| z * z)) - oracle).abs() < 1e-15);
    }

    #[test]
    fn d1_examples() {
        let g = unit(10);
        assert!(g.d1(&g.field(|_| 5.0)).max_abs() == 0.0);
        let d = g.d1(&g.field(|z| 3.0 * z));
        assert!(d.values().iter().all(|v| (v - 3.0).abs() < 1e-13));

        let a = g.field(|z| z);
        let b = g.field(|z| z * z);
        let lhs = g.inner(&a, &g.d1(&b)) + g.inner(&g.d1(&a), &b);
        assert!((lhs - 1.0).abs() <= 1e-13);
    }

    #[test]
    fn d2_examples() {
        let g = unit(10);
        let d = g.d2(&g.field(|z| z), Bc::None).unwrap();
        assert!(d.values()[1..10].iter().all(|v| v.abs() < 1e-12));
        let d = g.d2(&g.field(|z| z * z), Bc::None).unwrap();
        assert!(d.values().iter().all(|v| (v - 2.0).abs() < 1e-10));
    }

    #[test]
    fn d2_clamped_free_rejects_unpinned_field() {
        let g = unit(10);
        let err = g.d2(&g.field(|z| 1.0 + z), Bc::ClampedFree).unwrap_err();
        assert!(matches!(err, Error::BcViolation { .. }));
        // the all-zero field is admissible
        assert!(g.d2(&g.zeros(), Bc::ClampedFree).is_ok());
    }

    #[test]
    fn d2_mirror_ghost_respects_neumann_end() {
        // w = z (2 - z) has w(0) = 0, w_z(1) = 0 and w_zz = -2 everywhere.
        let g = unit(20);
        let d = g.d2(&g.field(|z| z * (2.0 - z)), Bc::ClampedFree).unwrap();
        assert_eq!(d[0], 0.0);
        for i in 1..=20 {
            assert!((d[i] + 2.0).abs() < 1e-10, "node {i}: {}", d[i]);
        }
    }

    fn order(err_coarse: f64, err_fine: f64) -> f64 {
        err_coarse / err_fine
    }

    #[test]
    fn second_order_convergence_on_sine() {
        let pi = std::f64::consts::PI;
        let err_d1 = |n: usize| {
            let g = Grid::new(1.0, n, 0.25, 0.5).unwrap();
            let exact = g.field(|z| pi * (pi * z).cos());
            g.d1(&g.field(|z| (pi * z).sin())).max_abs_diff(&exact)
        };
        let err_d2 = |n: usize| {
            let g = Grid::new(1.0, n, 0.25, 0.5).unwrap();
            let d = g.d2(&g.field(|z| (pi * z).sin()), Bc::None).unwrap();
            (1..n)
                .map(|i| (d[i] + pi * pi * (pi * g.nodes()[i]).sin()).abs())
                .fold(0.0, f64::max)
        };
        for n in [40, 80] {
            let r1 = order(err_d1(n), err_d1(2 * n));
            let r2 = order(err_d2(n), err_d2(2 * n));
            assert!((r1 - 4.0).abs() <= 0.5, "d1 ratio {r1}");
            assert!((r2 - 4.0).abs() <= 0.5, "d2 ratio {r2}");
        }
    }

    #[test]
    fn cumulative_trapezoid_is_exact_for_linear() {
        let g = unit(20);
        let w = g.cumulative_trapezoid(&g.field(|z| 2.0 * z));
        assert!(w.max_abs_diff(&g.field(|z| z * z)) < 1e-3);
        let w = g.cumulative_trapezoid(&g.field(|_| 1.0));
        assert!(w.max_abs_diff(&g.field(|z| z)) < 1e-14);
        assert!((g.integral_to_end(&g.field(|_| 1.0)) - 1.0).abs() < 1e-14);
    }
}
