//! The in-domain actuated vibrating string in its two port-Hamiltonian forms.
//!
//! * Jet-bundle form: state `(w, p)` with `w_t = p / rho`, `p_t = T w_zz + g u`.
//! * Stokes-Dirac form: state `(q, p)` with `q = w_z`,
//!   `q_t = d_z(p / rho)`, `p_t = d_z(T q) + g u`.
//!
//! Boundary conditions: clamped at `z = 0`, free at `z = L`.
//!
//! The actuator patch enters through two node arrays. The indicator `g`
//! samples the closed interval `[z_p1, z_p2]`. The patch weights `omega` are
//! the trapezoid weights of `[z_p1, z_p2]` (half a cell at each edge), so that
//! `sum_i omega_i f_i` integrates `g f` exactly for piecewise-linear `f`.
//! The nodal force density used in the dynamics is `omega / H`, which makes
//! the collocated output `y_bar = sum_i omega_i p_i / rho` the exact discrete
//! power conjugate of `u`.

use crate::error::{Error, Result};
use crate::grid::{Bc, Field, Grid};

pub type Mat2 = [[f64; 2]; 2];

/// Constant string coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StringParams {
    /// Young's modulus `T` (N).
    pub tension: f64,
    /// Mass density `rho` (kg/m).
    pub density: f64,
    /// Length `L` (m).
    pub length: f64,
}

impl StringParams {
    pub fn new(tension: f64, density: f64, length: f64) -> Result<Self> {
        for (name, v) in [("T", tension), ("rho", density), ("L", length)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} > 0 (got {v})")));
            }
        }
        Ok(StringParams {
            tension,
            density,
            length,
        })
    }

    pub fn wave_speed(&self) -> f64 {
        (self.tension / self.density).sqrt()
    }

    /// `Q = diag(T, 1/rho)`
    pub fn coenergy_matrix(&self) -> Mat2 {
        [[self.tension, 0.0], [0.0, 1.0 / self.density]]
    }
}

/// Piezo patch occupying `[z_p1, z_p2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchActuator {
    pub z_p1: f64,
    pub z_p2: f64,
    /// Closed-interval indicator sampled at the nodes.
    pub g: Field,
    weights: Field,
    density: Field,
}

impl PatchActuator {
    pub fn on_grid(grid: &Grid) -> Self {
        let (lo, hi) = grid.patch_indices();
        let dz = grid.dz();
        let z = grid.nodes();
        let mut g = grid.zeros();
        let mut weights = grid.zeros();
        for i in lo..=hi {
            g[i] = 1.0;
            weights[i] = dz;
        }
        weights[lo] = 0.5 * dz;
        weights[hi] = 0.5 * dz;
        let density = weights.zip_map(&Field::from_vec(grid.weights().to_vec()), |w, h| w / h);
        PatchActuator {
            z_p1: z[lo],
            z_p2: z[hi],
            g,
            weights,
            density,
        }
    }

    pub fn width(&self) -> f64 {
        self.z_p2 - self.z_p1
    }

    /// Patch quadrature weights `omega`.
    pub fn weights(&self) -> &Field {
        &self.weights
    }

    /// Nodal input density `omega / H` (1 inside the patch, 1/2 on its edges).
    pub fn input_density(&self) -> &Field {
        &self.density
    }

    /// `int_0^L g(z) f(z) dz`
    pub fn integrate(&self, f: &Field) -> f64 {
        self.weights
            .values()
            .iter()
            .zip(f.values())
            .map(|(w, v)| w * v)
            .sum()
    }

    /// Closed-form `g(z)` with the closed-interval convention.
    pub fn indicator_at(&self, z: f64) -> f64 {
        if z >= self.z_p1 && z <= self.z_p2 {
            1.0
        } else {
            0.0
        }
    }
}

/// Interconnection/dissipation data of the jet-bundle form (coefficient
/// matrices acting on the variational derivatives `(delta_w, delta_p)`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JbStructure {
    pub j: Mat2,
    pub r: Mat2,
}

/// Matrices of the Stokes-Dirac form `chi_t = P1 d_z(Q chi) + (P0 - G0) Q chi + B u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdStructure {
    pub p1: Mat2,
    pub p0: Mat2,
    pub g0: Mat2,
}

/// Grid, coefficients and actuator bundled together.
#[derive(Debug, Clone, PartialEq)]
pub struct StringModel {
    pub params: StringParams,
    pub grid: Grid,
    pub patch: PatchActuator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JetBundleState {
    /// Deflection (m).
    pub w: Field,
    /// Momentum density `rho w_t` (kg/s).
    pub p: Field,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StokesDiracState {
    /// Strain `w_z`.
    pub q: Field,
    /// Momentum density.
    pub p: Field,
}

impl JetBundleState {
    pub fn zeros(grid: &Grid) -> Self {
        JetBundleState {
            w: grid.zeros(),
            p: grid.zeros(),
        }
    }

    pub fn axpy(&self, h: f64, d: &Self) -> Self {
        JetBundleState {
            w: self.w.axpy(h, &d.w),
            p: self.p.axpy(h, &d.p),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        JetBundleState {
            w: self.w.sub(&other.w),
            p: self.p.sub(&other.p),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.p.is_finite()
    }
}

impl StokesDiracState {
    pub fn zeros(grid: &Grid) -> Self {
        StokesDiracState {
            q: grid.zeros(),
            p: grid.zeros(),
        }
    }

    /// Projects onto `p(0) = 0`, `T q(L) = 0`.
    pub fn apply_bcs(&mut self) {
        self.p[0] = 0.0;
        let n = self.q.len() - 1;
        self.q[n] = 0.0;
    }

    pub fn axpy(&self, h: f64, d: &Self) -> Self {
        StokesDiracState {
            q: self.q.axpy(h, &d.q),
            p: self.p.axpy(h, &d.p),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        StokesDiracState {
            q: self.q.sub(&other.q),
            p: self.p.sub(&other.p),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.is_finite() && self.p.is_finite()
    }
}

/// Boundary flows and efforts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPorts {
    pub f: [f64; 2],
    pub e: [f64; 2],
}

impl BoundaryPorts {
    /// `W_B = 1/sqrt(2) [[-1, 0, 0, 1], [0, 1, 1, 0]]` encoding `p(0) = 0`, `T q(L) = 0`.
    pub const W_B: [[f64; 4]; 2] = [
        [-FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2],
        [0.0, FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0],
    ];

    pub fn stacked(&self) -> [f64; 4] {
        [self.f[0], self.f[1], self.e[0], self.e[1]]
    }

    /// `W_B [f; e]`, equal to `[p(0)/rho, T q(L)]`.
    pub fn wb_residual(&self) -> [f64; 2] {
        let x = self.stacked();
        let mut out = [0.0; 2];
        for (r, row) in out.iter_mut().zip(Self::W_B.iter()) {
            *r = row.iter().zip(&x).map(|(a, b)| a * b).sum();
        }
        out
    }
}

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Matrix `R = 1/sqrt(2) [[P1, -P1], [I, I]]` mapping `[Q chi(L); Q chi(0)]`
/// to the port variables.
pub fn port_matrix(p1: &Mat2) -> [[f64; 4]; 4] {
    let s = FRAC_1_SQRT_2;
    let mut r = [[0.0; 4]; 4];
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] = s * p1[i][j];
            r[i][j + 2] = -s * p1[i][j];
        }
        r[i + 2][i] = s;
        r[i + 2][i + 2] = s;
    }
    r
}

/// Desired equilibrium: linear up to the patch, a downward parabola on it
/// and constant beyond.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumProfile {
    pub a: f64,
    pub b: f64,
    /// Tip height `b (z_p2 - z_p1)^2 + a z_p1`.
    pub c: f64,
    z_p1: f64,
    z_p2: f64,
    pub w_d: Field,
    /// `D1 w_d`
    pub q_d: Field,
}

impl EquilibriumProfile {
    pub fn new(a: f64, b: f64, model: &StringModel) -> Result<Self> {
        if !(a >= 0.0 && b >= 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "equilibrium shape a, b >= 0 (got a = {a}, b = {b})"
            )));
        }
        let (z_p1, z_p2) = (model.patch.z_p1, model.patch.z_p2);
        let expected = 2.0 * b * (z_p2 - z_p1);
        if (a - expected).abs() > 1e-12 {
            return Err(Error::KinkMismatch { a, expected });
        }
        let c = b * (z_p2 - z_p1).powi(2) + a * z_p1;
        let mut profile = EquilibriumProfile {
            a,
            b,
            c,
            z_p1,
            z_p2,
            w_d: model.grid.zeros(),
            q_d: model.grid.zeros(),
        };
        profile.w_d = model.grid.field(|z| profile.deflection_at(z));
        profile.q_d = model.grid.d1(&profile.w_d);
        Ok(profile)
    }

    /// Equilibrium matching the C1 condition for a given parabola curvature.
    pub fn from_curvature(b: f64, model: &StringModel) -> Result<Self> {
        Self::new(2.0 * b * model.patch.width(), b, model)
    }

    pub fn deflection_at(&self, z: f64) -> f64 {
        if z < self.z_p1 {
            self.a * z
        } else if z < self.z_p2 {
            -self.b * (z - self.z_p2).powi(2) + self.c
        } else {
            self.c
        }
    }

    /// Closed-form `w_d'` sampled on the grid.
    pub fn slope_field(&self, grid: &Grid) -> Field {
        grid.field(|z| self.slope_at(z))
    }

    /// Closed-form `w_d'(z)`.
    pub fn slope_at(&self, z: f64) -> f64 {
        if z < self.z_p1 {
            self.a
        } else if z < self.z_p2 {
            -2.0 * self.b * (z - self.z_p2)
        } else {
            0.0
        }
    }
}

/// Constant input that holds `w_d` at rest: `T w_d'' + g u_s = 0` with
/// `w_d'' = -2b` on the patch.
pub fn feedforward_us(b: f64, tension: f64) -> f64 {
    2.0 * b * tension
}

impl StringModel {
    pub fn new(params: StringParams, grid: Grid) -> Result<Self> {
        if (grid.length() - params.length).abs() > 1e-12 * params.length {
            return Err(Error::InvalidParameter(format!(
                "grid length {} differs from string length {}",
                grid.length(),
                params.length
            )));
        }
        let patch = PatchActuator::on_grid(&grid);
        Ok(StringModel {
            params,
            grid,
            patch,
        })
    }

    /// Convenience constructor for a string with the given parameters.
    pub fn build(params: StringParams, n_cells: usize, z_p1: f64, z_p2: f64) -> Result<Self> {
        let grid = Grid::new(params.length, n_cells, z_p1, z_p2)?;
        Self::new(params, grid)
    }

    pub fn jb_structure(&self) -> JbStructure {
        JbStructure {
            j: [[0.0, 1.0], [-1.0, 0.0]],
            r: [[0.0; 2]; 2],
        }
    }

    pub fn sd_structure(&self) -> SdStructure {
        SdStructure {
            p1: [[0.0, 1.0], [1.0, 0.0]],
            p0: [[0.0; 2]; 2],
            g0: [[0.0; 2]; 2],
        }
    }

    /// `y_bar = int g p / rho dz`
    pub fn integrated_output(&self, p: &Field) -> f64 {
        self.patch.integrate(p) / self.params.density
    }

    /// Jet-bundle right-hand side. The clamped node has zero derivative.
    pub fn jb_rhs(&self, s: &JetBundleState, u: f64) -> Result<JetBundleState> {
        let StringParams {
            tension, density, ..
        } = self.params;
        let wzz = self.grid.d2(&s.w, Bc::ClampedFree)?;
        let g = self.patch.input_density();
        let mut dw = s.p.scaled(1.0 / density);
        let mut dp = wzz.zip_map(g, |a, gi| tension * a + gi * u);
        dw[0] = 0.0;
        dp[0] = 0.0;
        Ok(JetBundleState { w: dw, p: dp })
    }

    /// Stokes-Dirac right-hand side. Assumes `p(0) = 0`, `q(L) = 0`; the
    /// derivatives of those two entries are projected to zero.
    pub fn sd_rhs(&self, s: &StokesDiracState, u: f64) -> StokesDiracState {
        let StringParams {
            tension, density, ..
        } = self.params;
        let grid = &self.grid;
        let g = self.patch.input_density();
        let dq = grid.d1(&s.p.scaled(1.0 / density));
        let dp = grid.d1(&s.q.scaled(tension)).zip_map(g, |a, gi| a + gi * u);
        let mut d = StokesDiracState { q: dq, p: dp };
        d.apply_bcs();
        d
    }

    /// `1/2 sum_i H_i p_i^2 / rho + 1/2 T sum_cells dz ((w_{i+1} - w_i)/dz)^2`.
    ///
    /// Its gradient with respect to `w` is `-T H d2(w)` for the clamped-free
    /// stencil, so the jet-bundle dynamics conserve it exactly.
    pub fn hamiltonian_jb(&self, s: &JetBundleState) -> f64 {
        let kinetic = 0.5 * self.grid.inner(&s.p, &s.p) / self.params.density;
        let dz = self.grid.dz();
        let strain: f64 =
            s.w.values()
                .windows(2)
                .map(|c| (c[1] - c[0]).powi(2))
                .sum::<f64>()
                / dz;
        kinetic + 0.5 * self.params.tension * strain
    }

    /// `1/2 int (p^2 / rho + T q^2) dz`
    pub fn hamiltonian_sd(&self, s: &StokesDiracState) -> f64 {
        0.5 * (self.grid.inner(&s.p, &s.p) / self.params.density
            + self.params.tension * self.grid.inner(&s.q, &s.q))
    }

    /// Directional derivative of `hamiltonian_jb` at `s` along `ds`.
    pub fn hamiltonian_jb_rate(&self, s: &JetBundleState, ds: &JetBundleState) -> f64 {
        let kinetic = self.grid.inner(&s.p, &ds.p) / self.params.density;
        let strain: f64 =
            s.w.values()
                .windows(2)
                .zip(ds.w.values().windows(2))
                .map(|(a, b)| (a[1] - a[0]) * (b[1] - b[0]))
                .sum::<f64>()
                / self.grid.dz();
        kinetic + self.params.tension * strain
    }

    /// Directional derivative of `hamiltonian_sd` at `s` along `ds`.
    pub fn hamiltonian_sd_rate(&self, s: &StokesDiracState, ds: &StokesDiracState) -> f64 {
        self.grid.inner(&s.p, &ds.p) / self.params.density
            + self.params.tension * self.grid.inner(&s.q, &ds.q)
    }

    pub fn boundary_ports(&self, s: &StokesDiracState) -> BoundaryPorts {
        boundary_ports(s, &self.params)
    }

    pub fn jb_to_sd(&self, s: &JetBundleState) -> StokesDiracState {
        map_jb_to_sd(&self.grid, s)
    }

    pub fn sd_to_jb(&self, s: &StokesDiracState) -> JetBundleState {
        map_sd_to_jb(&self.grid, s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Framework {
    Jb,
    Sd,
}

impl Framework {
    pub fn name(self) -> &'static str {
        match self {
            Framework::Jb => "jb",
            Framework::Sd => "sd",
        }
    }
}

/// Plant (or estimate) state in either formulation.
#[derive(Debug, Clone, PartialEq)]
pub enum PlantState {
    Jb(JetBundleState),
    Sd(StokesDiracState),
}

impl PlantState {
    pub fn framework(&self) -> Framework {
        match self {
            PlantState::Jb(_) => Framework::Jb,
            PlantState::Sd(_) => Framework::Sd,
        }
    }

    /// Builds a state of the requested formulation from deflection and momentum.
    pub fn from_deflection(framework: Framework, grid: &Grid, w: Field, p: Field) -> Self {
        let jb = JetBundleState { w, p };
        match framework {
            Framework::Jb => PlantState::Jb(jb),
            Framework::Sd => {
                let mut sd = map_jb_to_sd(grid, &jb);
                sd.apply_bcs();
                PlantState::Sd(sd)
            }
        }
    }

    pub fn momentum(&self) -> &Field {
        match self {
            PlantState::Jb(s) => &s.p,
            PlantState::Sd(s) => &s.p,
        }
    }

    /// `w` for the jet-bundle form, `q` for the Stokes-Dirac form.
    pub fn first(&self) -> &Field {
        match self {
            PlantState::Jb(s) => &s.w,
            PlantState::Sd(s) => &s.q,
        }
    }

    /// Deflection field (reconstructed from the strain in Stokes-Dirac form).
    pub fn deflection(&self, grid: &Grid) -> Field {
        match self {
            PlantState::Jb(s) => s.w.clone(),
            PlantState::Sd(s) => grid.cumulative_trapezoid(&s.q),
        }
    }

    /// `w(L)`
    pub fn tip_deflection(&self, grid: &Grid) -> f64 {
        match self {
            PlantState::Jb(s) => s.w.last(),
            PlantState::Sd(s) => grid.integral_to_end(&s.q),
        }
    }

    pub fn hamiltonian(&self, model: &StringModel) -> f64 {
        match self {
            PlantState::Jb(s) => model.hamiltonian_jb(s),
            PlantState::Sd(s) => model.hamiltonian_sd(s),
        }
    }

    /// Directional derivative of the Hamiltonian along `d` (same formulation).
    pub fn hamiltonian_rate(&self, d: &PlantState, model: &StringModel) -> Result<f64> {
        match (self, d) {
            (PlantState::Jb(s), PlantState::Jb(ds)) => Ok(model.hamiltonian_jb_rate(s, ds)),
            (PlantState::Sd(s), PlantState::Sd(ds)) => Ok(model.hamiltonian_sd_rate(s, ds)),
            _ => Err(Error::FrameworkMismatch),
        }
    }

    pub fn output(&self, model: &StringModel) -> f64 {
        model.integrated_output(self.momentum())
    }

    pub fn rhs(&self, model: &StringModel, u: f64) -> Result<PlantState> {
        Ok(match self {
            PlantState::Jb(s) => PlantState::Jb(model.jb_rhs(s, u)?),
            PlantState::Sd(s) => PlantState::Sd(model.sd_rhs(s, u)),
        })
    }

    pub fn axpy(&self, h: f64, d: &PlantState) -> Result<PlantState> {
        match (self, d) {
            (PlantState::Jb(a), PlantState::Jb(b)) => Ok(PlantState::Jb(a.axpy(h, b))),
            (PlantState::Sd(a), PlantState::Sd(b)) => Ok(PlantState::Sd(a.axpy(h, b))),
            _ => Err(Error::FrameworkMismatch),
        }
    }

    pub fn sub(&self, other: &PlantState) -> Result<PlantState> {
        self.axpy(-1.0, other)
    }

    pub fn max_abs(&self) -> f64 {
        self.first().max_abs().max(self.momentum().max_abs())
    }

    pub fn is_finite(&self) -> bool {
        self.first().is_finite() && self.momentum().is_finite()
    }
}

/// Port variables `[f; e] = R [Q chi(L); Q chi(0)]`.
pub fn boundary_ports(s: &StokesDiracState, params: &StringParams) -> BoundaryPorts {
    let n = s.q.len() - 1;
    let co = |i: usize| [params.tension * s.q[i], s.p[i] / params.density];
    let (at_l, at_0) = (co(n), co(0));
    let x = [at_l[0], at_l[1], at_0[0], at_0[1]];
    let r = port_matrix(&[[0.0, 1.0], [1.0, 0.0]]);
    let mut y = [0.0; 4];
    for (yi, row) in y.iter_mut().zip(r.iter()) {
        *yi = row.iter().zip(&x).map(|(a, b)| a * b).sum();
    }
    BoundaryPorts {
        f: [y[0], y[1]],
        e: [y[2], y[3]],
    }
}

/// `q = D1 w`
pub fn map_jb_to_sd(grid: &Grid, s: &JetBundleState) -> StokesDiracState {
    StokesDiracState {
        q: grid.d1(&s.w),
        p: s.p.clone(),
    }
}

/// Recovers the deflection by cumulative trapezoid integration from `w(0) = 0`.
pub fn map_sd_to_jb(grid: &Grid, s: &StokesDiracState) -> JetBundleState {
    JetBundleState {
        w: grid.cumulative_trapezoid(&s.q),
        p: s.p.clone(),
    }
}
