//! One-step time integrators for autonomous systems `x' = f(x)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// State spaces the integrators can work on.
pub trait OdeState: Clone {
    /// `self + h d`
    fn axpy(&self, h: f64, d: &Self) -> Self;
    /// Max-norm distance, used as the fixed-point stopping test.
    fn distance(&self, other: &Self) -> f64;
    fn scale(&self) -> f64;
}

impl OdeState for f64 {
    fn axpy(&self, h: f64, d: &Self) -> Self {
        self + h * d
    }
    fn distance(&self, other: &Self) -> f64 {
        (self - other).abs()
    }
    fn scale(&self) -> f64 {
        self.abs()
    }
}

impl OdeState for Vec<f64> {
    fn axpy(&self, h: f64, d: &Self) -> Self {
        self.iter().zip(d).map(|(a, b)| a + h * b).collect()
    }
    fn distance(&self, other: &Self) -> f64 {
        self.iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
    fn scale(&self) -> f64 {
        self.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Integrator {
    #[serde(rename = "rk4")]
    Rk4,
    #[serde(rename = "midpoint", alias = "implicit_midpoint")]
    ImplicitMidpoint,
}

impl Integrator {
    pub fn name(self) -> &'static str {
        match self {
            Integrator::Rk4 => "rk4",
            Integrator::ImplicitMidpoint => "midpoint",
        }
    }
}

pub const MIDPOINT_TOL: f64 = 1e-12;
pub const MIDPOINT_MAX_ITER: usize = 50;

/// Classical fourth-order Runge-Kutta step.
pub fn rk4_step<S, F>(x: &S, dt: f64, mut f: F) -> Result<S>
where
    S: OdeState,
    F: FnMut(&S) -> Result<S>,
{
    let k1 = f(x)?;
    let k2 = f(&x.axpy(0.5 * dt, &k1))?;
    let k3 = f(&x.axpy(0.5 * dt, &k2))?;
    let k4 = f(&x.axpy(dt, &k3))?;
    Ok(x.axpy(dt / 6.0, &k1)
        .axpy(dt / 3.0, &k2)
        .axpy(dt / 3.0, &k3)
        .axpy(dt / 6.0, &k4))
}

/// Implicit midpoint step `x1 = x + dt f((x + x1)/2)` by fixed-point iteration.
pub fn midpoint_step<S, F>(x: &S, dt: f64, mut f: F) -> Result<S>
where
    S: OdeState,
    F: FnMut(&S) -> Result<S>,
{
    let mut next = x.axpy(dt, &f(x)?);
    let mut update = f64::INFINITY;
    for _ in 0..MIDPOINT_MAX_ITER {
        let mid = midpoint(x, &next);
        let candidate = x.axpy(dt, &f(&mid)?);
        update = candidate.distance(&next);
        next = candidate;
        if update <= MIDPOINT_TOL * next.scale().max(1.0) {
            return Ok(next);
        }
    }
    Err(Error::NonConvergence {
        iterations: MIDPOINT_MAX_ITER,
        update,
    })
}

fn midpoint<S: OdeState>(a: &S, b: &S) -> S {
    // (a + b) / 2
    a.axpy(-0.5, a).axpy(0.5, b)
}

pub fn step<S, F>(integrator: Integrator, x: &S, dt: f64, f: F) -> Result<S>
where
    S: OdeState,
    F: FnMut(&S) -> Result<S>,
{
    match integrator {
        Integrator::Rk4 => rk4_step(x, dt, f),
        Integrator::ImplicitMidpoint => midpoint_step(x, dt, f),
    }
}
