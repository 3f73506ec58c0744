//! Closed-loop simulation of plant, observer and controller.
//!
//! The three subsystems form one ODE. By default the control law is
//! re-evaluated at every integrator stage; a zero-order-hold mode freezes it
//! over each step instead.

use crate::config::{ControlHold, FeedbackSource, Profile, SimConfig};
use crate::control::{
    casimir_value, casimir_value_sd, control_law_sd, psi1_exact, psi1_field, target_xcd,
    ControllerState, PsiMode,
};
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::integrate::{self, Integrator, OdeState};
use crate::model::{
    feedforward_us, EquilibriumProfile, Framework, PlantState, StringModel, StringParams,
};
use crate::observer::{estimate_rhs, ObserverGain};

/// Plant, estimate and controller state.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopState {
    pub plant: PlantState,
    pub estimate: PlantState,
    pub x_c: f64,
}

impl OdeState for LoopState {
    fn axpy(&self, h: f64, d: &Self) -> Self {
        LoopState {
            plant: self
                .plant
                .axpy(h, &d.plant)
                .expect("plant formulations agree"),
            estimate: self
                .estimate
                .axpy(h, &d.estimate)
                .expect("estimate formulations agree"),
            x_c: self.x_c + h * d.x_c,
        }
    }

    fn distance(&self, other: &Self) -> f64 {
        let dp = self.plant.sub(&other.plant).expect("same formulation");
        let de = self
            .estimate
            .sub(&other.estimate)
            .expect("same formulation");
        dp.max_abs()
            .max(de.max_abs())
            .max((self.x_c - other.x_c).abs())
    }

    fn scale(&self) -> f64 {
        self.plant
            .max_abs()
            .max(self.estimate.max_abs())
            .max(self.x_c.abs())
    }
}

impl LoopState {
    pub fn is_finite(&self) -> bool {
        self.plant.is_finite() && self.estimate.is_finite() && self.x_c.is_finite()
    }
}

/// Input and the two collocated outputs at a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Signals {
    pub u: f64,
    pub y_bar: f64,
    pub y_hat: f64,
}

/// One logged time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub t: f64,
    pub u: f64,
    pub ybar: f64,
    pub yhat_bar: f64,
    pub h: f64,
    pub hc: f64,
    pub hcl: f64,
    pub htilde: f64,
    pub casimir: f64,
    pub w_l: f64,
    pub what_l: f64,
}

impl Record {
    pub const COLUMNS: [&'static str; 11] = [
        "t", "u", "ybar", "yhat_bar", "H", "Hc", "Hcl", "Htilde", "casimir", "w_L", "what_L",
    ];

    pub fn values(&self) -> [f64; 11] {
        [
            self.t,
            self.u,
            self.ybar,
            self.yhat_bar,
            self.h,
            self.hc,
            self.hcl,
            self.htilde,
            self.casimir,
            self.w_l,
            self.what_l,
        ]
    }

    pub fn from_values(v: &[f64; 11]) -> Self {
        Record {
            t: v[0],
            u: v[1],
            ybar: v[2],
            yhat_bar: v[3],
            h: v[4],
            hc: v[5],
            hcl: v[6],
            htilde: v[7],
            casimir: v[8],
            w_l: v[9],
            what_l: v[10],
        }
    }
}

/// Energy rates along the assembled right-hand side and their predicted
/// values at one logged state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRecord {
    pub dh: f64,
    /// `u y_bar`
    pub supply: f64,
    pub dhcl: f64,
    /// `u y_bar - (u + c2 y_bar) x_c'`
    pub hcl_supply: f64,
    /// `-c2 y_bar^2`
    pub damping: f64,
    pub dhtilde: f64,
    /// `-k (y_bar - y_bar_hat)^2`
    pub htilde_ref: f64,
}

/// Node fields at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub columns: Vec<(&'static str, Field)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub framework: Framework,
    pub dt: f64,
    pub records: Vec<Record>,
    /// Rates evaluated in double-double arithmetic.
    pub rates: Vec<RateRecord>,
    /// The same rates evaluated in plain `f64`.
    pub rates_f64: Vec<RateRecord>,
    pub snapshots: Vec<Snapshot>,
}

impl SimLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Record closest to `t`.
    pub fn at(&self, t: f64) -> &Record {
        let i = (t / self.dt).round().max(0.0) as usize;
        &self.records[i.min(self.records.len() - 1)]
    }

    pub fn last(&self) -> &Record {
        self.records.last().expect("log is never empty")
    }

    /// Casimir constant at the initial time.
    pub fn kappa(&self) -> f64 {
        self.records[0].casimir
    }

    pub fn max_casimir_drift(&self) -> f64 {
        max_casimir_drift(&self.records)
    }

    /// Largest single-step increase of the error energy relative to its start.
    pub fn htilde_max_increase(&self) -> f64 {
        let h0 = self.records[0].htilde;
        let worst = self
            .records
            .windows(2)
            .map(|w| w[1].htilde - w[0].htilde)
            .fold(f64::NEG_INFINITY, f64::max);
        if h0 > 0.0 {
            worst / h0
        } else {
            worst
        }
    }
}

pub fn max_casimir_drift(records: &[Record]) -> f64 {
    let c0 = records.first().map_or(0.0, |r| r.casimir);
    records
        .iter()
        .map(|r| (r.casimir - c0).abs())
        .fold(0.0, f64::max)
}

/// A configured closed loop in one formulation.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: SimConfig,
    pub framework: Framework,
    pub model: StringModel,
    pub equilibrium: EquilibriumProfile,
    /// Gains, feedforward and target; `x_c` holds the initial value.
    pub controller: ControllerState,
    pub gain: ObserverGain,
    pub psi1: Field,
    pub q_d: Field,
    dt: f64,
    steps: usize,
}

impl Simulation {
    pub fn new(config: &SimConfig, framework: Framework) -> Result<Self> {
        config.validate()?;
        let s = &config.string;
        let params = StringParams::new(s.tension, s.density, s.length)?;
        let model = StringModel::build(
            params,
            config.sim.n_cells,
            config.patch.z_p1,
            config.patch.z_p2,
        )?;
        let equilibrium =
            EquilibriumProfile::new(config.equilibrium.a, config.equilibrium.b, &model)?;

        let dt = config.dt();
        let limit = 0.5 * model.grid.dz() / params.wave_speed();
        if config.sim.integrator == Integrator::Rk4 && dt > limit * (1.0 + 1e-12) {
            return Err(Error::CflViolation { dt, limit });
        }

        let (c1, c2) = if config.controller.enabled {
            (config.controller.c1, config.controller.c2)
        } else {
            (0.0, 0.0)
        };
        let u_s = feedforward_us(equilibrium.b, params.tension);
        let x_c_d = target_xcd(&equilibrium.w_d, &model);
        let controller = ControllerState::new(c1, c2, u_s, x_c_d, 0.0)?;
        let (psi1, q_d) = match config.controller.psi_mode {
            PsiMode::Exact => (psi1_exact(&model), equilibrium.q_d.clone()),
            PsiMode::Analytic => (
                psi1_field(&model.grid, &model.patch),
                equilibrium.slope_field(&model.grid),
            ),
        };
        let gain = ObserverGain::string(config.observer.k, &model);
        let mut sim = Simulation {
            config: config.clone(),
            framework,
            model,
            equilibrium,
            controller,
            gain,
            psi1,
            q_d,
            dt,
            steps: config.n_steps(),
        };
        let init = sim.initial_state_without_controller();
        sim.controller.x_c = sim.shaping_integral(sim.feedback_field(&init));
        Ok(sim)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.steps
    }

    fn profile(&self, p: &Profile) -> Field {
        let grid = &self.model.grid;
        let l = self.model.params.length;
        match *p {
            Profile::Rest => grid.zeros(),
            Profile::Linear { slope } => grid.field(|z| slope * z),
            Profile::TipRamp => {
                let c = self.equilibrium.c;
                grid.field(|z| c * z / l)
            }
            Profile::Sine { amplitude } => {
                grid.field(|z| amplitude * (std::f64::consts::FRAC_PI_2 * z / l).sin())
            }
            Profile::Equilibrium => self.equilibrium.w_d.clone(),
        }
    }

    fn initial_state_without_controller(&self) -> LoopState {
        let grid = &self.model.grid;
        let state = |p: &Profile| {
            PlantState::from_deflection(self.framework, grid, self.profile(p), grid.zeros())
        };
        LoopState {
            plant: state(&self.config.init.plant),
            estimate: state(&self.config.init.observer),
            x_c: 0.0,
        }
    }

    /// Initial state with the controller set so that the Casimir starts at zero.
    pub fn initial_state(&self) -> LoopState {
        LoopState {
            x_c: self.controller.x_c,
            ..self.initial_state_without_controller()
        }
    }

    /// `w`/`q` of whichever state feeds the shaping term.
    fn feedback_field<'a>(&self, s: &'a LoopState) -> &'a Field {
        match self.config.controller.feedback {
            FeedbackSource::Plant => s.plant.first(),
            FeedbackSource::Observer => s.estimate.first(),
        }
    }

    /// `int g w dz`, written as `-int Psi1 q dz` in Stokes-Dirac form.
    fn shaping_integral(&self, field: &Field) -> f64 {
        match self.framework {
            Framework::Jb => self.model.patch.integrate(field),
            Framework::Sd => -self.model.grid.inner(&self.psi1, field),
        }
    }

    pub fn signals(&self, s: &LoopState) -> Signals {
        let y_bar = s.plant.output(&self.model);
        let y_hat = s.estimate.output(&self.model);
        let ctrl = &self.controller;
        let u = match self.framework {
            Framework::Jb => ctrl.law(self.model.patch.integrate(self.feedback_field(s)), y_bar),
            Framework::Sd => control_law_sd(
                ctrl,
                self.feedback_field(s),
                &self.q_d,
                y_bar,
                &self.psi1,
                &self.model.grid,
            ),
        };
        Signals { u, y_bar, y_hat }
    }

    fn controller_rate(&self, sig: &Signals) -> f64 {
        match self.config.controller.feedback {
            FeedbackSource::Plant => sig.y_bar,
            FeedbackSource::Observer => sig.y_hat,
        }
    }

    /// Right-hand side of the coupled system with the input fixed to `u`.
    pub fn derivative(&self, s: &LoopState, u: f64) -> Result<LoopState> {
        let y_bar = s.plant.output(&self.model);
        let y_hat = s.estimate.output(&self.model);
        Ok(LoopState {
            plant: s.plant.rhs(&self.model, u)?,
            estimate: estimate_rhs(&s.estimate, &self.gain, u, y_bar, &self.model)?,
            x_c: self.controller_rate(&Signals { u, y_bar, y_hat }),
        })
    }

    /// Advances one time step.
    pub fn step(&self, s: &LoopState) -> Result<LoopState> {
        let hold = match self.config.sim.hold {
            ControlHold::PerStage => None,
            ControlHold::ZeroOrderHold => Some(self.signals(s).u),
        };
        integrate::step(self.config.sim.integrator, s, self.dt, |x| {
            let u = hold.unwrap_or_else(|| self.signals(x).u);
            self.derivative(x, u)
        })
    }

    pub fn casimir(&self, s: &LoopState) -> f64 {
        let field = self.feedback_field(s);
        match self.framework {
            Framework::Jb => casimir_value(s.x_c, field, &self.model),
            Framework::Sd => casimir_value_sd(s.x_c, field, &self.psi1, &self.model.grid),
        }
    }

    fn controller_at(&self, x_c: f64) -> ControllerState {
        ControllerState {
            x_c,
            ..self.controller
        }
    }

    pub fn record(&self, t: f64, s: &LoopState) -> Result<(Record, RateRecord)> {
        let m = &self.model;
        let sig = self.signals(s);
        let d = self.derivative(s, sig.u)?;
        let err = s.plant.sub(&s.estimate)?;
        let d_err = d.plant.sub(&d.estimate)?;
        let h = s.plant.hamiltonian(m);
        let ctrl = self.controller_at(s.x_c);
        let hc = ctrl.energy();
        let dhc = if ctrl.c1 > 0.0 {
            (ctrl.c1 * (s.x_c - ctrl.x_c_d) - ctrl.u_s) * d.x_c
        } else {
            0.0
        };
        let dh = s.plant.hamiltonian_rate(&d.plant, m)?;
        let supply = sig.u * sig.y_bar;
        let hcl_supply = if self.config.controller.enabled {
            supply - (sig.u + ctrl.c2 * sig.y_bar) * d.x_c
        } else {
            supply
        };
        let innovation = sig.y_bar - sig.y_hat;
        let record = Record {
            t,
            u: sig.u,
            ybar: sig.y_bar,
            yhat_bar: sig.y_hat,
            h,
            hc,
            hcl: h + hc,
            htilde: err.hamiltonian(m),
            casimir: self.casimir(s),
            w_l: s.plant.tip_deflection(&m.grid),
            what_l: s.estimate.tip_deflection(&m.grid),
        };
        let rates = RateRecord {
            dh,
            supply,
            dhcl: dh + dhc,
            hcl_supply,
            damping: -ctrl.c2 * sig.y_bar * sig.y_bar,
            dhtilde: err.hamiltonian_rate(&d_err, m)?,
            htilde_ref: -self.config.observer.k * innovation * innovation,
        };
        Ok((record, rates))
    }

    pub fn snapshot(&self, t: f64, s: &LoopState) -> Snapshot {
        let names: [&'static str; 4] = match self.framework {
            Framework::Jb => ["w", "p", "w_hat", "p_hat"],
            Framework::Sd => ["q", "p", "q_hat", "p_hat"],
        };
        let fields = [
            s.plant.first().clone(),
            s.plant.momentum().clone(),
            s.estimate.first().clone(),
            s.estimate.momentum().clone(),
        ];
        let mut columns = vec![("z", Field::from_vec(self.model.grid.nodes().to_vec()))];
        columns.extend(names.into_iter().zip(fields));
        Snapshot { t, columns }
    }

    /// Integrates over the horizon, handing every state (step index, time,
    /// state) to `visit`.
    pub fn run_with<F>(&self, mut visit: F) -> Result<LoopState>
    where
        F: FnMut(usize, f64, &LoopState) -> Result<()>,
    {
        let mut s = self.initial_state();
        for i in 0..=self.steps {
            let t = i as f64 * self.dt;
            visit(i, t, &s)?;
            if i < self.steps {
                s = self.step(&s)?;
                if !s.is_finite() {
                    return Err(Error::NonFiniteState {
                        t: (i + 1) as f64 * self.dt,
                    });
                }
            }
        }
        Ok(s)
    }

    pub fn run(&self) -> Result<SimLog> {
        let snapshot_steps: Vec<usize> = self
            .config
            .sim
            .snapshots
            .iter()
            .map(|&t| ((t / self.dt).round() as usize).min(self.steps))
            .collect();
        let mut records = Vec::with_capacity(self.steps + 1);
        let mut rates = Vec::with_capacity(self.steps + 1);
        let mut rates_f64 = Vec::with_capacity(self.steps + 1);
        let mut snapshots = Vec::new();
        self.run_with(|i, t, s| {
            let (r, q) = self.record(t, s)?;
            rates.push(crate::precise::rates(self, s, r.u));
            records.push(r);
            rates_f64.push(q);
            if snapshot_steps.contains(&i) {
                snapshots.push(self.snapshot(t, s));
            }
            Ok(())
        })?;
        Ok(SimLog {
            framework: self.framework,
            dt: self.dt,
            records,
            rates,
            rates_f64,
            snapshots,
        })
    }
}

/// Runs the configured primary formulation.
pub fn run_closed_loop(config: &SimConfig) -> Result<SimLog> {
    Simulation::new(config, config.sim.framework.primary())?.run()
}

/// Per-step energy balances integrated with the trapezoid rule in time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceReport {
    /// `max |dH - int u y_bar dt| / max |H|`
    pub plant: f64,
    /// `max |dH_cl - int (u y_bar - (u + c2 y_bar) x_c') dt| / max |H_cl|`
    pub closed_loop: f64,
    /// `max |dH_cl + int c2 y_bar^2 dt| / max |H_cl|`
    pub damping: f64,
    /// Largest one-step increase of `H_cl`, relative to `max |H_cl|`.
    pub hcl_max_increase: f64,
}

fn balance_residual(energy: &[f64], rate: &[f64], dt: f64) -> f64 {
    let scale = energy.iter().map(|e| e.abs()).fold(0.0, f64::max);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    energy
        .windows(2)
        .zip(rate.windows(2))
        .map(|(e, r)| (e[1] - e[0] - 0.5 * dt * (r[0] + r[1])).abs())
        .fold(0.0, f64::max)
        / scale
}

/// Plant balance from the logged columns alone, so it can be recomputed
/// from a trajectory file.
pub fn plant_balance_residual(records: &[Record], dt: f64) -> f64 {
    let h: Vec<f64> = records.iter().map(|r| r.h).collect();
    let supply: Vec<f64> = records.iter().map(|r| r.u * r.ybar).collect();
    balance_residual(&h, &supply, dt)
}

pub fn power_balance_report(log: &SimLog) -> BalanceReport {
    let hcl: Vec<f64> = log.records.iter().map(|r| r.hcl).collect();
    let cl: Vec<f64> = log.rates.iter().map(|r| r.hcl_supply).collect();
    let damp: Vec<f64> = log.rates.iter().map(|r| r.damping).collect();
    let scale = hcl.iter().map(|e| e.abs()).fold(0.0, f64::max);
    let increase = hcl
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    BalanceReport {
        plant: plant_balance_residual(&log.records, log.dt),
        closed_loop: balance_residual(&hcl, &cl, log.dt),
        damping: balance_residual(&hcl, &damp, log.dt),
        hcl_max_increase: if scale > 0.0 {
            increase / scale
        } else {
            increase
        },
    }
}

/// Steps whose reference rate is smaller than this are not compared.
pub const RATE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateCheck {
    /// Largest `|rate - reference| / |reference|` over compared steps.
    pub max_rel: f64,
    pub compared: usize,
    pub skipped: usize,
}

impl RateCheck {
    fn over(pairs: impl Iterator<Item = (f64, f64)>) -> Self {
        let mut out = RateCheck {
            max_rel: 0.0,
            compared: 0,
            skipped: 0,
        };
        for (rate, reference) in pairs {
            if reference.abs() < RATE_FLOOR {
                out.skipped += 1;
                continue;
            }
            out.compared += 1;
            out.max_rel = out.max_rel.max((rate - reference).abs() / reference.abs());
        }
        out
    }
}

/// Per-step comparison of energy rates with their predicted values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateAudit {
    /// `dH/dt` against `u y_bar`.
    pub plant: RateCheck,
    /// `dH_cl/dt` against `u y_bar - (u + c2 y_bar) x_c'`.
    pub closed_loop: RateCheck,
    /// `dH_cl/dt` against `-c2 y_bar^2`; only meaningful for plant feedback.
    pub damping: RateCheck,
    /// Error energy rate against `-k (y_bar - y_bar_hat)^2`.
    pub observer: RateCheck,
}

/// Audit of the double-double rates.
pub fn rate_audit(log: &SimLog) -> RateAudit {
    RateAudit::over(&log.rates)
}

impl RateAudit {
    pub fn over(r: &[RateRecord]) -> Self {
        RateAudit {
            plant: RateCheck::over(r.iter().map(|q| (q.dh, q.supply))),
            closed_loop: RateCheck::over(r.iter().map(|q| (q.dhcl, q.hcl_supply))),
            damping: RateCheck::over(r.iter().map(|q| (q.dhcl, q.damping))),
            observer: RateCheck::over(r.iter().map(|q| (q.dhtilde, q.htilde_ref))),
        }
    }
}

/// Agreement between the jet-bundle and Stokes-Dirac control laws and loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalenceReport {
    /// `max_t |u_JB - u_SD|` with the discrete `Psi1`, along the JB trajectory.
    pub exact_max_du: f64,
    /// Same with closed-form `Psi1` and `q^d`.
    pub analytic_max_du: f64,
    /// `max_t |u|` along the JB trajectory, for scale.
    pub max_u: f64,
    /// `max_t |u_JB - u_SD|` between the two independently integrated loops.
    pub cross_loop_max_du: f64,
    /// Largest nodal deflection difference between the two loops.
    pub cross_loop_max_dw: f64,
}

pub fn equivalence_report(config: &SimConfig) -> Result<EquivalenceReport> {
    let jb = Simulation::new(config, Framework::Jb)?;
    let sd = Simulation::new(config, Framework::Sd)?;
    let model = &jb.model;
    let grid = &model.grid;
    let eq = &jb.equilibrium;
    let exact = (psi1_exact(model), eq.q_d.clone());
    let analytic = (psi1_field(grid, &model.patch), eq.slope_field(grid));
    let enabled = config.controller.enabled;

    let mut out = EquivalenceReport {
        exact_max_du: 0.0,
        analytic_max_du: 0.0,
        max_u: 0.0,
        cross_loop_max_du: 0.0,
        cross_loop_max_dw: 0.0,
    };
    let mut s_jb = jb.initial_state();
    let mut s_sd = sd.initial_state();
    for i in 0..=jb.n_steps() {
        let sig = jb.signals(&s_jb);
        let q = grid.d1(jb.feedback_field(&s_jb));
        let law = |(psi, q_d): &(Field, Field)| {
            if enabled {
                control_law_sd(&jb.controller, &q, q_d, sig.y_bar, psi, grid)
            } else {
                jb.controller.u_s
            }
        };
        out.exact_max_du = out.exact_max_du.max((law(&exact) - sig.u).abs());
        out.analytic_max_du = out.analytic_max_du.max((law(&analytic) - sig.u).abs());
        out.max_u = out.max_u.max(sig.u.abs());

        let sig_sd = sd.signals(&s_sd);
        out.cross_loop_max_du = out.cross_loop_max_du.max((sig_sd.u - sig.u).abs());
        let dw = s_sd.plant.deflection(grid).max_abs_diff(s_jb.plant.first());
        out.cross_loop_max_dw = out.cross_loop_max_dw.max(dw);

        if i < jb.n_steps() {
            s_jb = jb.step(&s_jb)?;
            s_sd = sd.step(&s_sd)?;
            if !(s_jb.is_finite() && s_sd.is_finite()) {
                return Err(Error::NonFiniteState {
                    t: (i + 1) as f64 * jb.dt(),
                });
            }
        }
    }
    Ok(out)
}
