use proptest::prelude::*;

use phstring::audit::sbp_defect;
use phstring::engine::Record;
use phstring::io::{read_trajectory_csv, write_records_csv};
use phstring::model::{
    boundary_ports, JetBundleState, StokesDiracState, StringModel, StringParams,
};
use phstring::observer::{observer_rhs_jb, ObserverGain};
use phstring::{Field, Grid};

fn model(n: usize) -> StringModel {
    StringModel::build(StringParams::new(1.0, 1.0, 1.0).unwrap(), n, 0.4, 0.6).unwrap()
}

fn field_on(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, n + 1)
}

/// Grid size paired with two random fields on it.
fn grid_and_pair() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>)> {
    prop_oneof![Just(10usize), Just(50), Just(200)]
        .prop_flat_map(|n| (Just(n), field_on(n), field_on(n)))
}

/// Smooth clamped-free field from four mode coefficients.
fn modes(grid: &Grid, c: &[f64]) -> Field {
    grid.field(|z| {
        c.iter()
            .enumerate()
            .map(|(k, a)| a * ((k as f64 + 0.5) * std::f64::consts::PI * z).sin())
            .sum()
    })
}

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, 4)
}

fn finite() -> impl Strategy<Value = f64> {
    use prop::num::f64::{NEGATIVE, NORMAL, POSITIVE, SUBNORMAL, ZERO};
    POSITIVE | NEGATIVE | NORMAL | SUBNORMAL | ZERO
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn sbp_identity_for_random_pairs((n, f, g) in grid_and_pair()) {
        let grid = Grid::new(1.0, n, 0.4, 0.6).unwrap();
        let d = sbp_defect(&grid, &Field::from_vec(f), &Field::from_vec(g));
        prop_assert!(d <= 1e-12, "defect {d}");
    }

    #[test]
    fn quadrature_of_derivative_telescopes((n, f, _) in grid_and_pair()) {
        let grid = Grid::new(1.0, n, 0.4, 0.6).unwrap();
        let f = Field::from_vec(f);
        let lhs = grid.quad(&grid.d1(&f));
        prop_assert!((lhs - (f.last() - f.first())).abs() <= 1e-12);
    }

    #[test]
    fn jet_bundle_power_balance(cw in coeffs(), cp in coeffs(), u in 0.5..2.0f64) {
        let m = model(100);
        let s = JetBundleState { w: modes(&m.grid, &cw), p: modes(&m.grid, &cp) };
        let y = m.integrated_output(&s.p);
        prop_assume!(y.abs() > 0.05);
        let rate = m.hamiltonian_jb_rate(&s, &m.jb_rhs(&s, u).unwrap());
        prop_assert!((rate - u * y).abs() <= 1e-10 * (u * y).abs(), "{rate} vs {}", u * y);
    }

    #[test]
    fn stokes_dirac_power_balance(cw in coeffs(), cp in coeffs(), u in -2.0..-0.5f64) {
        let m = model(100);
        let mut s = m.jb_to_sd(&JetBundleState { w: modes(&m.grid, &cw), p: modes(&m.grid, &cp) });
        s.apply_bcs();
        let y = m.integrated_output(&s.p);
        prop_assume!(y.abs() > 0.05);
        let rate = m.hamiltonian_sd_rate(&s, &m.sd_rhs(&s, u));
        prop_assert!((rate - u * y).abs() <= 1e-10 * (u * y).abs());
    }

    #[test]
    fn error_energy_decays_at_innovation_rate(
        cw in coeffs(), cp in coeffs(), ce in coeffs(), k in 1.0..50.0f64, u in -1.0..1.0f64
    ) {
        let m = model(100);
        let plant = JetBundleState { w: modes(&m.grid, &cw), p: modes(&m.grid, &cp) };
        let est = JetBundleState { w: modes(&m.grid, &ce), p: m.grid.zeros() };
        let y = m.integrated_output(&plant.p);
        let innovation = y - m.integrated_output(&est.p);
        prop_assume!(innovation.abs() > 0.05);
        let gain = ObserverGain::string(k, &m);
        let d = m.jb_rhs(&plant, u).unwrap().sub(&observer_rhs_jb(&est, &gain, u, y, &m).unwrap());
        let rate = m.hamiltonian_jb_rate(&plant.sub(&est), &d);
        let expected = -k * innovation * innovation;
        prop_assert!((rate - expected).abs() <= 1e-8 * expected.abs());
    }

    #[test]
    fn hamiltonians_are_nonnegative(w in field_on(50), p in field_on(50)) {
        let m = model(50);
        let mut s = JetBundleState { w: Field::from_vec(w), p: Field::from_vec(p) };
        s.w[0] = 0.0;
        prop_assert!(m.hamiltonian_jb(&s) >= 0.0);
        let sd = StokesDiracState { q: s.w.clone(), p: s.p.clone() };
        prop_assert!(m.hamiltonian_sd(&sd) >= 0.0);
        let nonzero = s.w.max_abs() > 0.0 || s.p.max_abs() > 0.0;
        prop_assert_eq!(m.hamiltonian_jb(&s) > 0.0, nonzero);
    }

    #[test]
    fn boundary_ports_are_linear(
        q1 in field_on(20), p1 in field_on(20), q2 in field_on(20), p2 in field_on(20),
        a in -3.0..3.0f64, b in -3.0..3.0f64
    ) {
        let m = model(20);
        let s1 = StokesDiracState { q: Field::from_vec(q1), p: Field::from_vec(p1) };
        let s2 = StokesDiracState { q: Field::from_vec(q2), p: Field::from_vec(p2) };
        let combo = StokesDiracState {
            q: s1.q.scaled(a).axpy(b, &s2.q),
            p: s1.p.scaled(a).axpy(b, &s2.p),
        };
        let (x, y, z) = (
            boundary_ports(&s1, &m.params).stacked(),
            boundary_ports(&s2, &m.params).stacked(),
            boundary_ports(&combo, &m.params).stacked(),
        );
        for i in 0..4 {
            prop_assert!((z[i] - (a * x[i] + b * y[i])).abs() <= 1e-12);
        }
    }

    #[test]
    fn trajectory_csv_round_trips(rows in prop::collection::vec(prop::array::uniform11(finite()), 1..20)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trajectory.csv");
        let records: Vec<Record> = rows.iter().map(Record::from_values).collect();
        write_records_csv(&records, &path).unwrap();
        let back = read_trajectory_csv(&path).unwrap();
        prop_assert_eq!(back.len(), records.len());
        for (a, b) in back.iter().zip(&records) {
            prop_assert_eq!(a.values().map(f64::to_bits), b.values().map(f64::to_bits));
        }
    }
}
