//! Energy rates of the discrete closed loop in double-double arithmetic.
//!
//! The rate identities hold exactly for the discrete scheme, but the
//! conservative exchange between kinetic and strain energy is many orders of
//! magnitude larger than the dissipated power near a zero crossing of the
//! output error. Evaluating the right-hand side and the energy gradients in
//! `f64` then loses the identity to rounding. Here the same stencils are
//! evaluated with about 32 significant digits at the logged `f64` state.

use twofloat::TwoFloat;

use crate::config::FeedbackSource;
use crate::engine::{LoopState, RateRecord, Simulation};
use crate::grid::Field;
use crate::model::{Framework, PlantState};

type D = TwoFloat;

fn dd(x: f64) -> D {
    D::from(x)
}

/// `1 / x` refined by Newton steps; the crate's own division is only
/// accurate to about 1e-17.
fn recip(x: D) -> D {
    let mut r = dd(1.0 / f64::from(x));
    for _ in 0..2 {
        r += r * (dd(1.0) - x * r);
    }
    r
}

fn lift(f: &Field) -> Vec<D> {
    f.values().iter().map(|&v| dd(v)).collect()
}

struct Pair {
    first: Vec<D>,
    p: Vec<D>,
}

struct Ops<'a> {
    sim: &'a Simulation,
    h: Vec<D>,
    omega: Vec<D>,
    g: Vec<D>,
    inv_dz: D,
    tension: D,
    inv_density: D,
}

impl<'a> Ops<'a> {
    fn new(sim: &'a Simulation) -> Self {
        let m = &sim.model;
        Ops {
            sim,
            h: m.grid.weights().iter().map(|&v| dd(v)).collect(),
            omega: lift(m.patch.weights()),
            g: lift(m.patch.input_density()),
            inv_dz: recip(dd(m.grid.dz())),
            tension: dd(m.params.tension),
            inv_density: recip(dd(m.params.density)),
        }
    }

    fn output(&self, p: &[D]) -> D {
        let s = self
            .omega
            .iter()
            .zip(p)
            .fold(dd(0.0), |acc, (&w, &v)| acc + w * v);
        s * self.inv_density
    }

    fn d2_clamped_free(&self, w: &[D]) -> Vec<D> {
        let n = w.len() - 1;
        let inv_dz2 = self.inv_dz * self.inv_dz;
        let mut out = vec![dd(0.0); n + 1];
        for i in 1..n {
            out[i] = (w[i + 1] - dd(2.0) * w[i] + w[i - 1]) * inv_dz2;
        }
        out[n] = dd(2.0) * (w[n - 1] - w[n]) * inv_dz2;
        out
    }

    fn d1(&self, f: &[D]) -> Vec<D> {
        let n = f.len() - 1;
        let mut out = vec![dd(0.0); n + 1];
        out[0] = (f[1] - f[0]) * self.inv_dz;
        for i in 1..n {
            out[i] = (f[i + 1] - f[i - 1]) * dd(0.5) * self.inv_dz;
        }
        out[n] = (f[n] - f[n - 1]) * self.inv_dz;
        out
    }

    /// Plant or observer right-hand side; `innovation` is `None` for the plant.
    fn rhs(&self, s: &Pair, u: D, innovation: Option<D>) -> Pair {
        let n = s.p.len() - 1;
        let gain = &self.sim.gain;
        let velocity: Vec<D> = s.p.iter().map(|&v| v * self.inv_density).collect();
        let (mut da, mut dp) = match self.sim.framework {
            Framework::Jb => {
                let wzz = self.d2_clamped_free(&s.first);
                let dp: Vec<D> = (0..=n)
                    .map(|i| self.tension * wzz[i] + self.g[i] * u)
                    .collect();
                (velocity, dp)
            }
            Framework::Sd => {
                let stress: Vec<D> = s.first.iter().map(|&q| self.tension * q).collect();
                let ds = self.d1(&stress);
                let dp: Vec<D> = (0..=n).map(|i| ds[i] + self.g[i] * u).collect();
                (self.d1(&velocity), dp)
            }
        };
        if let Some(e) = innovation {
            for i in 0..=n {
                da[i] += dd(gain.first[i]) * e;
                dp[i] += dd(gain.momentum[i]) * e;
            }
        }
        match self.sim.framework {
            Framework::Jb => {
                da[0] = dd(0.0);
                dp[0] = dd(0.0);
            }
            Framework::Sd => {
                dp[0] = dd(0.0);
                da[n] = dd(0.0);
            }
        }
        Pair { first: da, p: dp }
    }

    fn energy_rate(&self, s: &Pair, d: &Pair) -> D {
        let kinetic = (0..s.p.len()).fold(dd(0.0), |acc, i| acc + self.h[i] * s.p[i] * d.p[i])
            * self.inv_density;
        let potential = match self.sim.framework {
            Framework::Jb => {
                let sum = (0..s.first.len() - 1).fold(dd(0.0), |acc, i| {
                    acc + (s.first[i + 1] - s.first[i]) * (d.first[i + 1] - d.first[i])
                });
                self.tension * sum * self.inv_dz
            }
            Framework::Sd => {
                let sum = (0..s.first.len())
                    .fold(dd(0.0), |acc, i| acc + self.h[i] * s.first[i] * d.first[i]);
                self.tension * sum
            }
        };
        kinetic + potential
    }
}

fn pair(s: &PlantState) -> Pair {
    Pair {
        first: lift(s.first()),
        p: lift(s.momentum()),
    }
}

fn diff(a: &Pair, b: &Pair) -> Pair {
    let sub = |x: &[D], y: &[D]| x.iter().zip(y).map(|(&a, &b)| a - b).collect();
    Pair {
        first: sub(&a.first, &b.first),
        p: sub(&a.p, &b.p),
    }
}

/// Rates and their predicted values at `s` with the applied input `u`.
pub fn rates(sim: &Simulation, s: &LoopState, u: f64) -> RateRecord {
    let ops = Ops::new(sim);
    let ctrl = &sim.controller;
    let u_d = dd(u);
    let plant = pair(&s.plant);
    let est = pair(&s.estimate);
    let y_bar = ops.output(&plant.p);
    let y_hat = ops.output(&est.p);
    let innovation = y_bar - y_hat;

    let d_plant = ops.rhs(&plant, u_d, None);
    let d_est = ops.rhs(&est, u_d, Some(innovation));
    let x_c_rate = match sim.config.controller.feedback {
        FeedbackSource::Plant => y_bar,
        FeedbackSource::Observer => y_hat,
    };

    let dh = ops.energy_rate(&plant, &d_plant);
    let dhc = if ctrl.c1 > 0.0 {
        (dd(ctrl.c1) * (dd(s.x_c) - dd(ctrl.x_c_d)) - dd(ctrl.u_s)) * x_c_rate
    } else {
        dd(0.0)
    };
    let supply = u_d * y_bar;
    let hcl_supply = if sim.config.controller.enabled {
        supply - (u_d + dd(ctrl.c2) * y_bar) * x_c_rate
    } else {
        supply
    };
    let dhtilde = ops.energy_rate(&diff(&plant, &est), &diff(&d_plant, &d_est));
    let k = dd(sim.config.observer.k);

    RateRecord {
        dh: dh.into(),
        supply: supply.into(),
        dhcl: (dh + dhc).into(),
        hcl_supply: hcl_supply.into(),
        damping: (-dd(ctrl.c2) * y_bar * y_bar).into(),
        dhtilde: dhtilde.into(),
        htilde_ref: (-k * innovation * innovation).into(),
    }
}
