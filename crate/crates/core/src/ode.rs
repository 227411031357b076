//! Dormand–Prince 5(4) integrator with event localization.
//!
//! Events are detected by a sign change of an event function across an
//! accepted step and localized by bisection, where every trial point is an
//! independent Runge–Kutta step of the bisected length from the start of the
//! accepted step. The localized state is therefore as accurate as the step
//! itself, not an interpolant.

use thiserror::Error;

/// Right-hand side of `dy/dt = f(t, y)`.
pub trait OdeSystem<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N]) -> [f64; N];
}

impl<const N: usize, F> OdeSystem<N> for F
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    fn rhs(&self, t: f64, y: &[f64; N]) -> [f64; N] {
        self(t, y)
    }
}

/// Which sign changes of an event function count as crossings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// negative to positive
    Rising,
    /// positive to negative
    Falling,
    Either,
}

impl Direction {
    fn accepts(self, before: f64, after: f64) -> bool {
        match self {
            Direction::Rising => before < 0.0 && after >= 0.0,
            Direction::Falling => before > 0.0 && after <= 0.0,
            Direction::Either => {
                (before < 0.0 && after >= 0.0) || (before > 0.0 && after <= 0.0)
            }
        }
    }
}

pub trait EventFunction<const N: usize> {
    fn value(&self, t: f64, y: &[f64; N]) -> f64;

    fn direction(&self) -> Direction {
        Direction::Either
    }
}

/// What the caller wants after an event has been localized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventAction {
    Stop,
    Continue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Index into the event slice passed to [`Solver::integrate`].
    Event(usize),
    EndTime,
}

#[derive(Debug, Clone)]
pub struct Outcome<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    pub termination: Termination,
    pub accepted_steps: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("maximum number of steps ({max}) exceeded at t = {t}")]
    TooManySteps { t: f64, max: usize },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// fifth-order solution minus embedded fourth-order solution
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct RawStep<const N: usize> {
    y: [f64; N],
    err: [f64; N],
    k7: [f64; N],
}

fn combine<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        *o += h * acc;
    }
    out
}

fn raw_step<S: OdeSystem<N> + ?Sized, const N: usize>(
    sys: &S,
    t: f64,
    y: &[f64; N],
    k1: &[f64; N],
    h: f64,
) -> RawStep<N> {
    let k2 = sys.rhs(t + C2 * h, &combine(y, h, &[(A21, k1)]));
    let k3 = sys.rhs(t + C3 * h, &combine(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = sys.rhs(
        t + C4 * h,
        &combine(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]),
    );
    let k5 = sys.rhs(
        t + C5 * h,
        &combine(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    );
    let k6 = sys.rhs(
        t + h,
        &combine(
            y,
            h,
            &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        ),
    );
    let y_new = combine(
        y,
        h,
        &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
    );
    let k7 = sys.rhs(t + h, &y_new);
    let mut err = [0.0; N];
    for i in 0..N {
        err[i] = h
            * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    RawStep { y: y_new, err, k7 }
}

/// Adaptive Dormand–Prince 5(4) solver.
#[derive(Debug, Clone)]
pub struct Solver {
    /// Relative and absolute local error tolerance.
    pub tol: f64,
    /// Width (in time) of the final bisection bracket for events.
    pub event_tol: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Solver {
    pub fn new(tol: f64, event_tol: f64) -> Self {
        Self {
            tol,
            event_tol,
            h_max: f64::INFINITY,
            h_min: 1e-14,
            max_steps: 5_000_000,
        }
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }

    fn error_norm<const N: usize>(&self, y0: &[f64; N], y1: &[f64; N], err: &[f64; N]) -> f64 {
        let mut acc = 0.0;
        for i in 0..N {
            let scale = self.tol + self.tol * y0[i].abs().max(y1[i].abs());
            let r = err[i] / scale;
            acc += r * r;
        }
        (acc / N as f64).sqrt()
    }

    /// Integrates forward from `t0` until `t_end` or until `on_event` returns
    /// [`EventAction::Stop`] for a localized event. `on_step` sees every
    /// accepted state, including the initial one and event points.
    pub fn integrate<S, const N: usize>(
        &self,
        sys: &S,
        t0: f64,
        y0: [f64; N],
        t_end: f64,
        events: &[&dyn EventFunction<N>],
        mut on_event: impl FnMut(usize, f64, &[f64; N]) -> EventAction,
        mut on_step: impl FnMut(f64, &[f64; N]),
    ) -> Result<Outcome<N>, OdeError>
    where
        S: OdeSystem<N> + ?Sized,
    {
        let mut t = t0;
        let mut y = y0;
        on_step(t, &y);
        if t_end <= t0 {
            return Ok(Outcome {
                t,
                y,
                termination: Termination::EndTime,
                accepted_steps: 0,
            });
        }
        let mut k1 = sys.rhs(t, &y);
        let mut g_prev: Vec<f64> = events.iter().map(|e| e.value(t, &y)).collect();
        let mut h = self.initial_step(&k1, &y).min(self.h_max).min(t_end - t0);
        let mut accepted = 0usize;
        let mut total = 0usize;

        loop {
            total += 1;
            if total > self.max_steps {
                return Err(OdeError::TooManySteps {
                    t,
                    max: self.max_steps,
                });
            }
            let last = t + h >= t_end;
            if last {
                h = t_end - t;
            }
            let step = raw_step(sys, t, &y, &k1, h);
            let err = self.error_norm(&y, &step.y, &step.err);
            if !err.is_finite() || step.y.iter().any(|v| !v.is_finite()) {
                if h <= self.h_min {
                    return Err(OdeError::NonFinite { t });
                }
                h *= 0.25;
                continue;
            }
            if err > 1.0 {
                h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                if h < self.h_min {
                    return Err(OdeError::StepSizeUnderflow { t });
                }
                continue;
            }

            // accepted step [t, t + h]
            let t_new = if last { t_end } else { t + h };
            let g_new: Vec<f64> = events.iter().map(|e| e.value(t_new, &step.y)).collect();
            let mut earliest: Option<(usize, f64, [f64; N])> = None;
            for (i, ev) in events.iter().enumerate() {
                if ev.direction().accepts(g_prev[i], g_new[i]) {
                    let (te, ye) = self.localize(sys, *ev, t, &y, &k1, h, g_prev[i]);
                    if earliest.as_ref().is_none_or(|(_, tb, _)| te < *tb) {
                        earliest = Some((i, te, ye));
                    }
                }
            }
            accepted += 1;

            if let Some((idx, te, ye)) = earliest {
                on_step(te, &ye);
                match on_event(idx, te, &ye) {
                    EventAction::Stop => {
                        return Ok(Outcome {
                            t: te,
                            y: ye,
                            termination: Termination::Event(idx),
                            accepted_steps: accepted,
                        });
                    }
                    EventAction::Continue => {
                        // restart just past the crossing
                        t = te;
                        y = ye;
                        k1 = sys.rhs(t, &y);
                        g_prev = events.iter().map(|e| e.value(t, &y)).collect();
                        h = h.min(self.h_max);
                        continue;
                    }
                }
            }

            t = t_new;
            y = step.y;
            k1 = step.k7;
            g_prev = g_new;
            on_step(t, &y);
            if last {
                return Ok(Outcome {
                    t,
                    y,
                    termination: Termination::EndTime,
                    accepted_steps: accepted,
                });
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = (h * factor).min(self.h_max);
        }
    }

    fn initial_step<const N: usize>(&self, f0: &[f64; N], y0: &[f64; N]) -> f64 {
        let d0 = y0.iter().map(|v| v * v).sum::<f64>().sqrt();
        let d1 = f0.iter().map(|v| v * v).sum::<f64>().sqrt();
        let h = if d0 < 1e-5 || d1 < 1e-5 {
            1e-3
        } else {
            0.01 * d0 / d1
        };
        h.max(1e-6)
    }

    /// Bisection for the crossing inside `[t, t + h]`; returns the state at the
    /// right end of the final bracket, i.e. just past the crossing.
    #[allow(clippy::too_many_arguments)]
    fn localize<S, const N: usize>(
        &self,
        sys: &S,
        ev: &dyn EventFunction<N>,
        t: f64,
        y: &[f64; N],
        k1: &[f64; N],
        h: f64,
        g0: f64,
    ) -> (f64, [f64; N])
    where
        S: OdeSystem<N> + ?Sized,
    {
        let mut lo = 0.0;
        let mut hi = h;
        let mut y_hi = raw_step(sys, t, y, k1, h).y;
        let dir = ev.direction();
        while hi - lo > self.event_tol {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let y_mid = raw_step(sys, t, y, k1, mid).y;
            let g_mid = ev.value(t + mid, &y_mid);
            if dir.accepts(g0, g_mid) {
                hi = mid;
                y_hi = y_mid;
            } else {
                lo = mid;
            }
        }
        (t + hi, y_hi)
    }
}

/// Classical fixed-step use of the fifth-order Dormand–Prince formula, used
/// for convergence-order checks.
pub fn fixed_step_solve<S, const N: usize>(sys: &S, t0: f64, y0: [f64; N], h: f64, n: usize) -> [f64; N]
where
    S: OdeSystem<N> + ?Sized,
{
    let mut t = t0;
    let mut y = y0;
    for _ in 0..n {
        let k1 = sys.rhs(t, &y);
        y = raw_step(sys, t, &y, &k1, h).y;
        t += h;
    }
    y
}
