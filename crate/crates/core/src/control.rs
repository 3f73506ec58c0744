//! Energy-Casimir dynamic controller and the Casimir condition checks.
//!
//! The controller has one state with identity dynamics `x_c' = u_c`, where
//! `u_c` is the (estimated) collocated output. With the Casimir
//! `C = x_c - int g w dz` held at zero, the shaped energy
//! `H_c = c1/2 (x_c - x_c^d - u_s/c1)^2` plus damping `-c2 y_bar` gives
//!
//! `u = -c1 (int g w dz - x_c^d) - c2 y_bar + u_s`.
//!
//! In Stokes-Dirac variables the same integral is written as
//! `-int Psi1 q dz` with `d_z Psi1 = g` and `Psi1(L) = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::model::{port_matrix, Mat2, PatchActuator, StringModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerState {
    pub x_c: f64,
    pub c1: f64,
    pub c2: f64,
    pub u_s: f64,
    pub x_c_d: f64,
}

impl ControllerState {
    /// Gains must be non-negative; zero gains reduce the law to `u = u_s`.
    pub fn new(c1: f64, c2: f64, u_s: f64, x_c_d: f64, x_c: f64) -> Result<Self> {
        for (name, v) in [("c1", c1), ("c2", c2)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} >= 0 (got {v})")));
            }
        }
        Ok(ControllerState {
            x_c,
            c1,
            c2,
            u_s,
            x_c_d,
        })
    }

    /// `H_c = c1/2 (x_c - x_c^d - u_s/c1)^2`; zero when `c1 = 0`.
    pub fn energy(&self) -> f64 {
        if self.c1 == 0.0 {
            return 0.0;
        }
        let e = self.x_c - self.x_c_d - self.u_s / self.c1;
        0.5 * self.c1 * e * e
    }

    /// Shaping and damping around a given measurement of `int g w dz`.
    pub fn law(&self, gw: f64, y_bar: f64) -> f64 {
        -self.c1 * (gw - self.x_c_d) - self.c2 * y_bar + self.u_s
    }
}

/// Which `Psi1` the Stokes-Dirac law uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiMode {
    /// Closed-form `Psi1` together with the closed-form `q^d`.
    Analytic,
    /// Discrete antiderivative of the patch density, exact under summation by parts.
    Exact,
}

/// `Psi1(z) = -int_z^L g`.
pub fn psi1(z: f64, patch: &PatchActuator) -> f64 {
    if z <= patch.z_p1 {
        -(patch.z_p2 - patch.z_p1)
    } else if z < patch.z_p2 {
        -(patch.z_p2 - z)
    } else {
        0.0
    }
}

pub fn psi1_field(grid: &Grid, patch: &PatchActuator) -> Field {
    grid.field(|z| psi1(z, patch))
}

/// Solves `(D1 Psi)_i = G_i` for `i = 1..=n` with `Psi_n = 0`.
///
/// For `q = D1 w` with `w_0 = 0` summation by parts then gives
/// `-sum H Psi q = sum omega w` to roundoff.
pub fn psi1_exact(model: &StringModel) -> Field {
    let g = model.patch.input_density();
    let dz = model.grid.dz();
    let n = model.grid.n_cells();
    let mut psi = model.grid.zeros();
    psi[n - 1] = -dz * g[n];
    for i in (1..n).rev() {
        psi[i - 1] = psi[i + 1] - 2.0 * dz * g[i];
    }
    psi
}

pub fn psi1_for(model: &StringModel, mode: PsiMode) -> Field {
    match mode {
        PsiMode::Analytic => psi1_field(&model.grid, &model.patch),
        PsiMode::Exact => psi1_exact(model),
    }
}

/// `dx_c/dt = u_c` with `u_c` the observer output.
pub fn controller_step_rhs(_ctrl: &ControllerState, y_bar_hat: f64) -> f64 {
    y_bar_hat
}

/// `x_c^d = int g w^d dz`
pub fn target_xcd(w_d: &Field, model: &StringModel) -> f64 {
    model.patch.integrate(w_d)
}

/// Jet-bundle total control law.
pub fn control_law_jb(ctrl: &ControllerState, w: &Field, y_bar: f64, model: &StringModel) -> f64 {
    ctrl.law(model.patch.integrate(w), y_bar)
}

/// Stokes-Dirac total control law.
pub fn control_law_sd(
    ctrl: &ControllerState,
    q: &Field,
    q_d: &Field,
    y_bar: f64,
    psi1: &Field,
    grid: &Grid,
) -> f64 {
    let shaped = -grid.inner(psi1, q) + grid.inner(psi1, q_d);
    -ctrl.c1 * shaped - ctrl.c2 * y_bar + ctrl.u_s
}

/// `C = x_c - int g w dz`
pub fn casimir_value(x_c: f64, w: &Field, model: &StringModel) -> f64 {
    x_c - model.patch.integrate(w)
}

/// `C = x_c + int Psi1 q dz`
pub fn casimir_value_sd(x_c: f64, q: &Field, psi1: &Field, grid: &Grid) -> f64 {
    x_c + grid.inner(psi1, q)
}

/// Casimir ansatz in jet-bundle variables.
#[derive(Debug, Clone, PartialEq)]
pub struct CasimirAnsatzJB {
    pub dc_dw: Field,
    pub dc_dp: Field,
    /// Coefficient of the `w_z` dependence, entering the boundary operator.
    pub boundary_coeff: Field,
    /// Input coefficient of the controller.
    pub g_c: f64,
    pub j_c: f64,
    pub r_c: f64,
}

impl CasimirAnsatzJB {
    /// `C^1 = -g w`
    pub fn string(model: &StringModel) -> Self {
        CasimirAnsatzJB {
            dc_dw: model.patch.g.scaled(-1.0),
            dc_dp: model.grid.zeros(),
            boundary_coeff: model.grid.zeros(),
            g_c: 1.0,
            j_c: 0.0,
            r_c: 0.0,
        }
    }
}

/// Casimir ansatz in Stokes-Dirac variables.
#[derive(Debug, Clone, PartialEq)]
pub struct CasimirAnsatzSD {
    pub gamma: f64,
    pub psi1: Field,
    pub psi2: Field,
    pub b_c: f64,
    pub a_c: f64,
    pub s_c: f64,
}

impl CasimirAnsatzSD {
    pub fn string(model: &StringModel, mode: PsiMode) -> Self {
        CasimirAnsatzSD {
            gamma: 1.0,
            psi1: psi1_for(model, mode),
            psi2: model.grid.zeros(),
            b_c: 1.0,
            a_c: 0.0,
            s_c: 0.0,
        }
    }
}

/// Residuals of the four Casimir conditions: controller, domain, input and
/// boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct CasimirResiduals {
    pub r_controller: f64,
    /// Per-node magnitude of the domain condition (max over its two rows).
    pub r_domain: Field,
    /// Per-node input obstruction.
    pub r_input: Field,
    /// `int g |r_input| dz` (JB) or `sqrt(int g r_input^2 dz)` (SD).
    pub r_input_norm: f64,
    pub r_boundary: f64,
    kinks: [usize; 2],
}

impl CasimirResiduals {
    pub fn domain_max(&self) -> f64 {
        self.r_domain.max_abs()
    }

    /// Domain residual ignoring the two patch-edge nodes.
    pub fn domain_max_excluding_kinks(&self) -> f64 {
        self.r_domain
            .values()
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.kinks.contains(i))
            .map(|(_, v)| v.abs())
            .fold(0.0, f64::max)
    }

    /// Largest residual, with the domain condition taken away from the kinks.
    pub fn max_norm(&self) -> f64 {
        self.r_controller
            .abs()
            .max(self.domain_max_excluding_kinks())
            .max(self.r_input_norm)
            .max(self.r_boundary)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_norm() <= tol
    }
}

fn kink_nodes(model: &StringModel) -> [usize; 2] {
    let (lo, hi) = model.grid.patch_indices();
    [lo, hi]
}

/// Jet-bundle conditions with `J = [[0, 1], [-1, 0]]`, `R = 0`, `K = 1` and
/// input map `(0, g)`.
pub fn casimir_residuals_jb(ansatz: &CasimirAnsatzJB, model: &StringModel) -> CasimirResiduals {
    let st = model.jb_structure();
    let jr: Mat2 = [
        [st.j[0][0] - st.r[0][0], st.j[0][1] - st.r[0][1]],
        [st.j[1][0] - st.r[1][0], st.j[1][1] - st.r[1][1]],
    ];
    let g = &model.patch.g;
    let n = model.grid.n_nodes();
    let mut domain = model.grid.zeros();
    let mut input = model.grid.zeros();
    for i in 0..n {
        let d = [ansatz.dc_dw[i], ansatz.dc_dp[i]];
        let input_map = [0.0, g[i]];
        let mut worst: f64 = 0.0;
        for beta in 0..2 {
            let row = d[0] * jr[0][beta] + d[1] * jr[1][beta] + ansatz.g_c * input_map[beta];
            worst = worst.max(row.abs());
        }
        domain[i] = worst;
        input[i] = d[0] * input_map[0] + d[1] * input_map[1];
    }
    let input_norm = model.patch.integrate(&ansatz.dc_dp.map(f64::abs));
    // w is pinned at 0, so only the free end carries a boundary term.
    let r_boundary = ansatz.boundary_coeff[n - 1].abs();
    CasimirResiduals {
        r_controller: (ansatz.j_c - ansatz.r_c).abs(),
        r_domain: domain,
        r_input: input,
        r_input_norm: input_norm,
        r_boundary,
        kinks: kink_nodes(model),
    }
}

/// Stokes-Dirac conditions for the string (`P1` antidiagonal, `P0 = G0 = 0`,
/// input map `(0, G)`).
pub fn casimir_residuals_sd(ansatz: &CasimirAnsatzSD, model: &StringModel) -> CasimirResiduals {
    let grid = &model.grid;
    let sd = model.sd_structure();
    let g = model.patch.input_density();
    let dpsi1 = grid.d1(&ansatz.psi1);
    let dpsi2 = grid.d1(&ansatz.psi2);
    let n = grid.n_nodes();
    let mut domain = grid.zeros();
    for i in 0..n {
        let dpsi = [dpsi1[i], dpsi2[i]];
        let psi = [ansatz.psi1[i], ansatz.psi2[i]];
        let b = [0.0, g[i]];
        let mut worst: f64 = 0.0;
        for r in 0..2 {
            let mut v = -b[r] * ansatz.b_c * ansatz.gamma;
            for c in 0..2 {
                v += sd.p1[r][c] * dpsi[c] + (sd.p0[r][c] + sd.g0[r][c]) * psi[c];
            }
            worst = worst.max(v.abs());
        }
        domain[i] = worst;
    }
    let input = ansatz
        .psi2
        .zip_map(&model.patch.g, |p, gi| ansatz.b_c * gi * p);
    let input_norm = model.patch.integrate(&ansatz.psi2.map(|p| p * p)).sqrt() * ansatz.b_c.abs();

    let last = n - 1;
    let (pl, p0) = (
        [ansatz.psi1[last], ansatz.psi2[last]],
        [ansatz.psi1[0], ansatz.psi2[0]],
    );
    let c = [
        sd.p1[0][0] * pl[0] + sd.p1[0][1] * pl[1],
        sd.p1[1][0] * pl[0] + sd.p1[1][1] * pl[1],
        -(sd.p1[0][0] * p0[0] + sd.p1[0][1] * p0[1]),
        -(sd.p1[1][0] * p0[0] + sd.p1[1][1] * p0[1]),
    ];
    CasimirResiduals {
        r_controller: (ansatz.a_c + ansatz.s_c).abs() * ansatz.gamma.abs(),
        r_domain: domain,
        r_input: input,
        r_input_norm: input_norm,
        r_boundary: boundary_pairing_residual(&sd.p1, &c),
        kinks: kink_nodes(model),
    }
}

/// Norm of the part of `c` that pairs nontrivially with admissible boundary
/// co-energies, i.e. `|c - M^T (M M^T)^-1 M c|` with `M = W_B R`.
fn boundary_pairing_residual(p1: &Mat2, c: &[f64; 4]) -> f64 {
    let r = port_matrix(p1);
    let wb = crate::model::BoundaryPorts::W_B;
    let mut m = [[0.0; 4]; 2];
    for i in 0..2 {
        for j in 0..4 {
            m[i][j] = (0..4).map(|k| wb[i][k] * r[k][j]).sum();
        }
    }
    let mut mmt = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            mmt[i][j] = (0..4).map(|k| m[i][k] * m[j][k]).sum();
        }
    }
    let det = mmt[0][0] * mmt[1][1] - mmt[0][1] * mmt[1][0];
    let inv = [
        [mmt[1][1] / det, -mmt[0][1] / det],
        [-mmt[1][0] / det, mmt[0][0] / det],
    ];
    let mc: Vec<f64> = (0..2)
        .map(|i| (0..4).map(|k| m[i][k] * c[k]).sum())
        .collect();
    let lam = [
        inv[0][0] * mc[0] + inv[0][1] * mc[1],
        inv[1][0] * mc[0] + inv[1][1] * mc[1],
    ];
    (0..4)
        .map(|k| c[k] - m[0][k] * lam[0] - m[1][k] * lam[1])
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{feedforward_us, EquilibriumProfile, StringParams};

    fn preset_model(n: usize) -> StringModel {
        StringModel::build(StringParams::new(1.0, 1.0, 1.0).unwrap(), n, 0.4, 0.6).unwrap()
    }

    fn preset_controller(m: &StringModel) -> (ControllerState, EquilibriumProfile) {
        let eq = EquilibriumProfile::new(0.2, 0.5, m).unwrap();
        let xcd = target_xcd(&eq.w_d, m);
        let ctrl = ControllerState::new(5.0, 30.0, feedforward_us(0.5, 1.0), xcd, xcd).unwrap();
        (ctrl, eq)
    }

    #[test]
    fn psi1_examples() {
        let m = preset_model(100);
        assert_eq!(psi1(1.0, &m.patch), 0.0);
        assert!((psi1(0.0, &m.patch) + 0.2).abs() < 1e-15);
        assert!((psi1(0.5, &m.patch) + 0.1).abs() < 1e-15);
    }

    #[test]
    fn exact_psi1_satisfies_its_difference_equation() {
        for n in [10, 50, 100, 200] {
            let m = preset_model(n);
            let psi = psi1_exact(&m);
            let d = m.grid.d1(&psi);
            let g = m.patch.input_density();
            assert_eq!(psi[n], 0.0);
            for i in 1..=n {
                assert!((d[i] - g[i]).abs() < 1e-12, "n {n} node {i}");
            }
        }
    }

    #[test]
    fn controller_rhs_examples() {
        let m = preset_model(100);
        let (ctrl, _) = preset_controller(&m);
        assert_eq!(controller_step_rhs(&ctrl, 0.0), 0.0);
        assert_eq!(controller_step_rhs(&ctrl, 0.3), 0.3);
        let yhat = m.integrated_output(&m.grid.zeros());
        assert_eq!(controller_step_rhs(&ctrl, yhat), 0.0);
    }

    #[test]
    fn target_xcd_examples() {
        // trapezoid error on the parabola is b dz^2 (z_p2 - z_p1) / 6, about 1.7e-6 at n = 100
        let m = preset_model(200);
        let (_, eq) = preset_controller(&m);
        // int_{0.4}^{0.6} (-0.5 (z - 0.6)^2 + 0.1) dz
        let analytic = 0.02 - 0.5 * 0.008 / 3.0;
        assert!((target_xcd(&eq.w_d, &m) - analytic).abs() < 1e-6);
        assert!((analytic - 0.018_666_666_666_666_667_f64).abs() < 1e-15);
        assert_eq!(target_xcd(&m.grid.zeros(), &m), 0.0);
        assert!((target_xcd(&m.grid.field(|_| 1.0), &m) - 0.2).abs() < 1e-14);
    }

    #[test]
    fn control_law_jb_examples() {
        let m = preset_model(200);
        let (ctrl, eq) = preset_controller(&m);
        assert!((control_law_jb(&ctrl, &eq.w_d, 0.0, &m) - 1.0).abs() < 1e-14);
        let expected = -5.0 * (0.0 - ctrl.x_c_d) + 1.0;
        assert!((expected - 1.093_333_5).abs() < 5e-6);
        assert!((control_law_jb(&ctrl, &m.grid.zeros(), 0.0, &m) - expected).abs() < 1e-14);
        assert!((control_law_jb(&ctrl, &eq.w_d, 0.01, &m) - 0.7).abs() < 1e-14);
    }

    #[test]
    fn control_law_sd_examples() {
        let m = preset_model(100);
        let (ctrl, eq) = preset_controller(&m);
        let psi = psi1_exact(&m);
        assert_eq!(
            control_law_sd(&ctrl, &eq.q_d, &eq.q_d, 0.0, &psi, &m.grid),
            ctrl.u_s
        );
        let zero = m.grid.zeros();
        let u_sd = control_law_sd(&ctrl, &m.grid.d1(&zero), &eq.q_d, 0.0, &psi, &m.grid);
        let u_jb = control_law_jb(&ctrl, &zero, 0.0, &m);
        assert!((u_sd - u_jb).abs() <= 1e-12);
    }

    #[test]
    fn exact_mode_matches_jb_law_on_pinned_fields() {
        let m = preset_model(100);
        let (ctrl, eq) = preset_controller(&m);
        let psi = psi1_exact(&m);
        let w = m.grid.field(|z| (3.0 * z).sin() + 0.2 * z * z);
        let u_jb = control_law_jb(&ctrl, &w, 0.02, &m);
        let u_sd = control_law_sd(&ctrl, &m.grid.d1(&w), &eq.q_d, 0.02, &psi, &m.grid);
        assert!((u_jb - u_sd).abs() <= 1e-12 * (1.0 + u_jb.abs()));
    }

    #[test]
    fn casimir_value_examples() {
        let m = preset_model(100);
        let w0 = m.grid.field(|z| 0.1 * z);
        let x0 = m.patch.integrate(&w0);
        assert!((x0 - 0.01).abs() < 1e-15);
        assert_eq!(casimir_value(x0, &w0, &m), 0.0);
        let psi = psi1_exact(&m);
        let c_sd = casimir_value_sd(x0, &m.grid.d1(&w0), &psi, &m.grid);
        assert!(c_sd.abs() < 1e-15);
    }

    #[test]
    fn controller_energy_minimum_sits_at_shifted_target() {
        let ctrl = ControllerState::new(5.0, 30.0, 1.0, 0.02, 0.02 + 0.2).unwrap();
        assert_eq!(ctrl.energy(), 0.0);
        let flat = ControllerState::new(0.0, 0.0, 1.0, 0.0, 3.0).unwrap();
        assert_eq!(flat.energy(), 0.0);
        assert_eq!(flat.law(7.0, 2.0), 1.0);
        assert!(ControllerState::new(-1.0, 30.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn string_ansatz_satisfies_jb_conditions() {
        let m = preset_model(100);
        let r = casimir_residuals_jb(&CasimirAnsatzJB::string(&m), &m);
        assert!(r.domain_max() <= 1e-12);
        assert!(r.passes(1e-12), "{r:?}");
    }

    #[test]
    fn perturbed_jb_ansaetze_are_flagged() {
        let m = preset_model(100);
        let mut a = CasimirAnsatzJB::string(&m);
        a.dc_dp = m.patch.g.clone();
        let r = casimir_residuals_jb(&a, &m);
        assert!((r.r_input_norm - 0.2).abs() < 1e-14);

        let mut a = CasimirAnsatzJB::string(&m);
        a.boundary_coeff = m.grid.field(|_| 1.0);
        let r = casimir_residuals_jb(&a, &m);
        assert!(r.r_boundary > 0.5);
        assert_eq!(r.r_input_norm, 0.0);
    }

    #[test]
    fn string_ansatz_satisfies_sd_conditions() {
        let m = preset_model(100);
        for mode in [PsiMode::Analytic, PsiMode::Exact] {
            let r = casimir_residuals_sd(&CasimirAnsatzSD::string(&m, mode), &m);
            assert!(r.passes(1e-10), "{mode:?}: {r:?}");
        }
    }

    #[test]
    fn perturbed_sd_ansaetze_are_flagged() {
        let m = preset_model(100);
        let mut a = CasimirAnsatzSD::string(&m, PsiMode::Exact);
        a.psi2 = m.grid.field(|_| 0.1);
        let r = casimir_residuals_sd(&a, &m);
        assert!((r.r_input_norm - 0.1 * 0.2_f64.sqrt()).abs() < 1e-14);

        let mut a = CasimirAnsatzSD::string(&m, PsiMode::Exact);
        a.psi1 = a.psi1.map(|v| v + 0.05);
        let r = casimir_residuals_sd(&a, &m);
        assert!((r.r_boundary - 0.05).abs() < 1e-14);
        assert!(r.domain_max_excluding_kinks() < 1e-12);
    }
}
