//! Run configuration: TOML sections, defaults, validation and presets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::PsiMode;
use crate::error::{Error, Result};
use crate::integrate::Integrator;
use crate::model::Framework;

const PRESET_TOML: &str = include_str!("../presets/paper-fig1.toml");

/// Names accepted by `--preset`.
pub const PRESETS: &[&str] = &["paper-fig1"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub string: StringSection,
    pub patch: PatchSection,
    pub equilibrium: EquilibriumSection,
    #[serde(default)]
    pub controller: ControllerSection,
    #[serde(default)]
    pub observer: ObserverSection,
    pub sim: SimSection,
    #[serde(default)]
    pub init: InitSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StringSection {
    #[serde(alias = "T")]
    pub tension: f64,
    #[serde(alias = "rho")]
    pub density: f64,
    #[serde(alias = "L")]
    pub length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchSection {
    pub z_p1: f64,
    pub z_p2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumSection {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackSource {
    /// Shaping term and controller driven by the plant itself.
    Plant,
    /// Shaping term and controller driven by the observer estimate.
    Observer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    #[serde(default = "enabled")]
    pub enabled: bool,
    #[serde(default)]
    pub c1: f64,
    #[serde(default)]
    pub c2: f64,
    #[serde(default = "observer_feedback")]
    pub feedback: FeedbackSource,
    #[serde(default = "exact_psi")]
    pub psi_mode: PsiMode,
}

fn enabled() -> bool {
    true
}

fn observer_feedback() -> FeedbackSource {
    FeedbackSource::Observer
}

fn exact_psi() -> PsiMode {
    PsiMode::Exact
}

impl Default for ControllerSection {
    fn default() -> Self {
        ControllerSection {
            enabled: false,
            c1: 0.0,
            c2: 0.0,
            feedback: FeedbackSource::Observer,
            psi_mode: PsiMode::Exact,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverSection {
    #[serde(default)]
    pub k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameworkChoice {
    Jb,
    Sd,
    Both,
}

impl FrameworkChoice {
    /// Formulation whose log is the main output.
    pub fn primary(self) -> Framework {
        match self {
            FrameworkChoice::Sd => Framework::Sd,
            FrameworkChoice::Jb | FrameworkChoice::Both => Framework::Jb,
        }
    }
}

/// How the input is evaluated within a time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlHold {
    /// Re-evaluated at every integrator stage.
    PerStage,
    /// Frozen at its value at the start of the step.
    ZeroOrderHold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub n_cells: usize,
    /// Time step in seconds; exclusive with `courant`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Time step as a multiple of `dz / c`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub courant: Option<f64>,
    pub t_final: f64,
    #[serde(default = "rk4")]
    pub integrator: Integrator,
    #[serde(default = "jb")]
    pub framework: FrameworkChoice,
    #[serde(default = "per_stage")]
    pub hold: ControlHold,
    #[serde(default)]
    pub snapshots: Vec<f64>,
}

fn rk4() -> Integrator {
    Integrator::Rk4
}

fn jb() -> FrameworkChoice {
    FrameworkChoice::Jb
}

fn per_stage() -> ControlHold {
    ControlHold::PerStage
}

/// Initial deflection shape; momenta always start at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Rest,
    /// `w = slope z`
    Linear {
        slope: f64,
    },
    /// `w = c z / L` with `c` the equilibrium tip height.
    TipRamp,
    /// `w = amplitude sin(pi z / 2L)`
    Sine {
        amplitude: f64,
    },
    /// The desired equilibrium itself.
    Equilibrium,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    #[serde(default = "rest")]
    pub plant: Profile,
    #[serde(default = "tip_ramp")]
    pub observer: Profile,
}

fn rest() -> Profile {
    Profile::Rest
}

fn tip_ramp() -> Profile {
    Profile::TipRamp
}

impl Default for InitSection {
    fn default() -> Self {
        InitSection {
            plant: Profile::Rest,
            observer: Profile::TipRamp,
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper-fig1" => Self::from_toml_str(PRESET_TOML, "preset paper-fig1"),
            other => Err(Error::Validation(format!(
                "unknown preset {other:?} (available: {})",
                PRESETS.join(", ")
            ))),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    /// Time step in seconds for the configured grid.
    pub fn dt(&self) -> f64 {
        match (self.sim.dt, self.sim.courant) {
            (Some(dt), _) => dt,
            (None, Some(c)) => c * self.dz() / self.wave_speed(),
            (None, None) => unreachable!("validated config has a time step"),
        }
    }

    pub fn dz(&self) -> f64 {
        self.string.length / self.sim.n_cells as f64
    }

    pub fn wave_speed(&self) -> f64 {
        (self.string.tension / self.string.density).sqrt()
    }

    /// Number of steps; the log holds one more record than this.
    pub fn n_steps(&self) -> usize {
        (self.sim.t_final / self.dt() + 1e-9).floor() as usize
    }

    /// Sets an explicit step, dropping any Courant number.
    pub fn set_dt(&mut self, dt: f64) {
        self.sim.dt = Some(dt);
        self.sim.courant = None;
    }

    /// Checks every invariant that does not need the grid to be built.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        let s = &self.string;
        for (name, v) in [("T", s.tension), ("rho", s.density), ("L", s.length)] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} > 0 (got {v})"));
            }
        }
        let p = &self.patch;
        if !(0.0 < p.z_p1 && p.z_p1 < p.z_p2 && p.z_p2 < s.length) {
            return fail(format!(
                "0 < z_p1 < z_p2 < L (got z_p1 = {}, z_p2 = {}, L = {})",
                p.z_p1, p.z_p2, s.length
            ));
        }
        let e = &self.equilibrium;
        if !(e.a >= 0.0 && e.b >= 0.0 && e.a.is_finite() && e.b.is_finite()) {
            return fail(format!("a >= 0 and b >= 0 (got a = {}, b = {})", e.a, e.b));
        }
        let c = &self.controller;
        if c.enabled {
            if !(c.c1 > 0.0 && c.c1.is_finite()) {
                return fail(format!("c1 > 0 (got {})", c.c1));
            }
            if !(c.c2 > 0.0 && c.c2.is_finite()) {
                return fail(format!("c2 > 0 (got {})", c.c2));
            }
        } else if c.c1 != 0.0 || c.c2 != 0.0 {
            return fail("controller disabled but c1/c2 set".to_string());
        }
        if !(self.observer.k >= 0.0 && self.observer.k.is_finite()) {
            return fail(format!("k >= 0 (got {})", self.observer.k));
        }
        let sim = &self.sim;
        if sim.n_cells < 8 {
            return fail(format!("n_cells >= 8 (got {})", sim.n_cells));
        }
        match (sim.dt, sim.courant) {
            (Some(_), Some(_)) => return fail("give either dt or courant, not both".into()),
            (None, None) => return fail("one of dt or courant is required".into()),
            (Some(dt), None) if !(dt > 0.0 && dt.is_finite()) => {
                return fail(format!("dt > 0 (got {dt})"))
            }
            (None, Some(cfl)) if !(cfl > 0.0 && cfl.is_finite()) => {
                return fail(format!("courant > 0 (got {cfl})"))
            }
            _ => {}
        }
        let dt = self.dt();
        if !(sim.t_final >= dt && sim.t_final.is_finite()) {
            return fail(format!(
                "t_final >= dt (got t_final = {}, dt = {dt})",
                sim.t_final
            ));
        }
        if let Some(t) = sim
            .snapshots
            .iter()
            .find(|&&t| !(t >= 0.0 && t <= sim.t_final))
        {
            return fail(format!("snapshot time {t} outside [0, t_final]"));
        }
        Ok(())
    }
}
