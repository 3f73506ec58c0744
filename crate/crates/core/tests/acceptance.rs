//! Acceptance criteria, one PASS/FAIL line each, at their stated tolerances.
//!
//! Criteria listed in `KNOWN_FAILURES` are reported as FAIL but do not fail
//! the target; every other failing criterion does. See the README for the
//! analysis behind each known failure.

use std::process::ExitCode;
use std::time::Instant;

use phstring::audit::{casimir_suite, grid_suite, stationarity_suite, Check, DEFAULT_SEED};
use phstring::config::{ControllerSection, FeedbackSource, Profile, SimConfig};
use phstring::engine::{
    equivalence_report, plant_balance_residual, rate_audit, run_closed_loop, Simulation,
};
use phstring::model::Framework;

/// Criteria that fail for reasons documented in the README.
const KNOWN_FAILURES: &[u32] = &[1, 3, 8];

struct Outcome {
    id: u32,
    title: &'static str,
    lines: Vec<String>,
    passed: bool,
}

impl Outcome {
    fn new(id: u32, title: &'static str) -> Self {
        Outcome {
            id,
            title,
            lines: Vec::new(),
            passed: true,
        }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.passed &= ok;
        self.lines
            .push(format!("[{}] {line}", if ok { "ok" } else { "x " }));
    }

    fn info(&mut self, line: String) {
        self.lines.push(format!("[i ] {line}"));
    }

    fn checks(&mut self, checks: &[Check]) {
        for c in checks {
            self.check(
                c.passed(),
                format!("{}: {:.3e} ({})", c.name, c.value, c.bound),
            );
        }
    }
}

fn preset() -> SimConfig {
    SimConfig::preset("paper-fig1").unwrap()
}

fn golden_trajectory() -> Outcome {
    let mut o = Outcome::new(1, "golden tip trajectory of the preset");
    let start = Instant::now();
    let log = run_closed_loop(&preset()).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    for (t, expected) in [
        (1.5, 0.1348),
        (2.0, 0.1507),
        (3.0, 0.1051),
        (5.0, 0.0999),
        (10.0, 0.0993),
    ] {
        let tol = if t <= 3.0 { 0.02 } else { 0.01 };
        let w = log.at(t).w_l;
        o.check(
            (w - expected).abs() <= tol,
            format!(
                "w_L({t}) = {w:.5}, expected {expected} +- {tol} (off by {:+.5})",
                w - expected
            ),
        );
    }
    let settled = log
        .records
        .iter()
        .filter(|r| r.t >= 8.0 - 1e-9)
        .map(|r| (r.w_l - 0.1).abs())
        .fold(0.0, f64::max);
    o.check(
        settled <= 0.01,
        format!("max |w_L - 0.1| on [8, 10] = {settled:.5} <= 0.01"),
    );
    o.check(elapsed <= 10.0, format!("runtime {elapsed:.3} s <= 10 s"));
    o
}

fn observer_convergence() -> Outcome {
    let mut o = Outcome::new(2, "observer convergence");
    let log = run_closed_loop(&preset()).unwrap();
    let h0 = log.records[0].htilde;
    let ratio = log.at(10.0).htilde / h0;
    o.check(
        ratio <= 0.05,
        format!("H_tilde(10)/H_tilde(0) = {ratio:.4} <= 0.05"),
    );
    let inc = log.htilde_max_increase();
    o.check(
        inc <= 1e-10,
        format!("largest step increase of H_tilde / H_tilde(0) = {inc:.3e} <= 1e-10"),
    );
    let w0 = log.records[0].what_l;
    o.check(w0 == 0.1, format!("w_hat_L(0) = {w0:?} == 0.1"));
    o
}

fn dissipation_identities() -> Outcome {
    let mut o = Outcome::new(3, "dissipation identities per step");
    let log = run_closed_loop(&preset()).unwrap();
    let a = rate_audit(&log);
    o.check(
        a.observer.max_rel <= 1e-6,
        format!(
            "dH_tilde/dt vs -k (y - y_hat)^2: max rel {:.3e} <= 1e-6 ({} steps, {} below floor)",
            a.observer.max_rel, a.observer.compared, a.observer.skipped
        ),
    );
    o.check(
        a.damping.max_rel <= 1e-6,
        format!(
            "dH_cl/dt vs -c2 y^2 on the preset: max rel {:.3e} <= 1e-6",
            a.damping.max_rel
        ),
    );
    o.info(format!(
        "preset dH_cl/dt vs u y - (u + c2 y) y_hat: max rel {:.3e}",
        a.closed_loop.max_rel
    ));
    let mut plant_fed = preset();
    plant_fed.controller.feedback = FeedbackSource::Plant;
    let b = rate_audit(&run_closed_loop(&plant_fed).unwrap());
    o.info(format!(
        "plant-fed loop dH_cl/dt vs -c2 y^2: max rel {:.3e}",
        b.damping.max_rel
    ));
    let f64_rates = phstring::engine::RateAudit::over(&log.rates_f64);
    o.info(format!(
        "observer identity with f64 rate evaluation: max rel {:.3e}",
        f64_rates.observer.max_rel
    ));
    o
}

fn casimir_conservation() -> Outcome {
    let mut o = Outcome::new(4, "Casimir conservation");
    let drift = run_closed_loop(&preset()).unwrap().max_casimir_drift();
    o.check(
        drift <= 1e-6,
        format!("max |C(t) - C(0)| = {drift:.3e} <= 1e-6"),
    );
    o
}

fn cross_framework() -> Outcome {
    let mut o = Outcome::new(5, "cross-framework control-law equivalence");
    let coarse = equivalence_report(&preset()).unwrap();
    o.check(
        coarse.exact_max_du <= 1e-10,
        format!(
            "exact Psi1: max |u_JB - u_SD| = {:.3e} <= 1e-10",
            coarse.exact_max_du
        ),
    );
    let mut c = preset();
    c.sim.n_cells = 200;
    let fine = equivalence_report(&c).unwrap();
    let ratio = coarse.analytic_max_du / fine.analytic_max_du;
    o.check(
        (ratio - 4.0).abs() <= 0.7,
        format!(
            "analytic Psi1: {:.3e} (n=100) / {:.3e} (n=200) = {ratio:.4}, expected 4 +- 0.7",
            coarse.analytic_max_du, fine.analytic_max_du
        ),
    );
    o
}

fn casimir_residuals() -> Outcome {
    let mut o = Outcome::new(6, "Casimir-condition residuals");
    let model = Simulation::new(&preset(), Framework::Jb).unwrap().model;
    let mut checks = casimir_suite(&model);
    // the criterion holds the jet-bundle ansatz to the same 1e-10 as the other
    checks[0].bound = phstring::audit::Bound::AtMost(1e-10);
    o.checks(&checks);
    o
}

fn stationarity() -> Outcome {
    let mut o = Outcome::new(7, "stationarity of the target under u_s");
    let c = preset();
    let sim = Simulation::new(&c, Framework::Jb).unwrap();
    let u_s = sim.controller.u_s;
    o.check(u_s == 1.0, format!("u_s = 2 b T = {u_s}"));
    o.checks(&stationarity_suite(&c).unwrap());
    o
}

fn structure_preservation() -> Outcome {
    let mut o = Outcome::new(8, "structure preservation");
    let sbp = grid_suite(DEFAULT_SEED).unwrap();
    o.checks(&sbp[..1]);

    let mut c = preset();
    c.controller = ControllerSection::default();
    c.observer.k = 0.0;
    c.equilibrium.a = 0.0;
    c.equilibrium.b = 0.0;
    c.init.plant = Profile::Sine { amplitude: 0.1 };
    c.init.observer = Profile::Rest;
    c.sim.courant = Some(0.2);
    let log = run_closed_loop(&c).unwrap();
    let h0 = log.records[0].h;
    let drift = log
        .records
        .iter()
        .map(|r| (r.h - h0).abs())
        .fold(0.0, f64::max)
        / h0;
    o.check(
        drift <= 1e-6,
        format!("unforced energy drift over 10 s = {drift:.3e} <= 1e-6"),
    );

    let residual = |courant: f64| {
        let mut c = preset();
        c.sim.courant = Some(courant);
        let log = run_closed_loop(&c).unwrap();
        plant_balance_residual(&log.records, log.dt)
    };
    let (r1, r2, r3) = (residual(0.5), residual(0.25), residual(0.125));
    for (a, b, label) in [
        (r1, r2, "dt 0.5 dz -> 0.25 dz"),
        (r2, r3, "dt 0.25 dz -> 0.125 dz"),
    ] {
        let ratio = a / b;
        o.check(
            ratio >= 8.0,
            format!(
                "balance residual {label}: {a:.4e} / {b:.4e} = {ratio:.4} >= 8 (order {:.4})",
                ratio.log2()
            ),
        );
    }
    o
}

fn main() -> ExitCode {
    let outcomes = [
        golden_trajectory(),
        observer_convergence(),
        dissipation_identities(),
        casimir_conservation(),
        cross_framework(),
        casimir_residuals(),
        stationarity(),
        structure_preservation(),
    ];
    let mut unexpected = Vec::new();
    let mut fixed = Vec::new();
    for o in &outcomes {
        let known = KNOWN_FAILURES.contains(&o.id);
        let tag = match (o.passed, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {}: {tag} {}", o.id, o.title);
        for l in &o.lines {
            println!("    {l}");
        }
        if !o.passed && !known {
            unexpected.push(o.id);
        }
        if o.passed && known {
            fixed.push(o.id);
        }
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!(
        "{} criteria, {} passed, {failed} failed",
        outcomes.len(),
        outcomes.len() - failed
    );
    if !fixed.is_empty() {
        println!("criteria {fixed:?} now pass; remove them from KNOWN_FAILURES");
    }
    if unexpected.is_empty() && fixed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected outcome for criteria {unexpected:?}");
        ExitCode::FAILURE
    }
}
