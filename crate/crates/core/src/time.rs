//! Adaptive explicit time integration: Dormand–Prince 5(4) with the
//! first-same-as-last (FSAL) optimization and a digital H211b step
//! controller.
//!
//! The integrator owns no physics: it drives any right-hand side of the
//! signature `f(t, y, out)` that may report a state blow-up. Stage failures
//! and non-finite error estimates reject the step and shrink `dt`; if `dt`
//! underflows below `1e-12·(t_end − t_start)` the run is classified as a
//! blow-up (the "crash" outcome of the robustness experiments), which is
//! kept distinct from exhausting the step budget.
//!
//! The FSAL stage doubles as an admissibility check of every accepted
//! solution: the seventh stage evaluates the right-hand side at
//! `(t + dt, y_new)`, so an inadmissible end state can never be accepted.

use crate::field::FieldArray;
use crate::rhs::BlowUp;

/// Dormand–Prince 5(4) Butcher tableau.
pub mod tableau {
    /// Stage abscissae.
    pub const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];

    /// Strictly lower-triangular stage coefficients.
    pub const A: [[f64; 6]; 7] = [
        [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];

    /// Fifth-order solution weights (the last row of `A`: FSAL).
    pub const B: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];

    /// Embedded fourth-order weights.
    pub const B_HAT: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
}

/// Error-norm and step-size policy.
#[derive(Clone, Copy, Debug)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    /// Safety factor (0.9) applied to every proposed growth factor.
    pub safety: f64,
    /// Two-sided clamp on the accepted-step growth factor.
    pub min_scale: f64,
    pub max_scale: f64,
    /// Initial step; `None` selects the heuristic from the first derivative.
    pub dt_initial: Option<f64>,
    /// Accepted-step budget; exceeding it is a distinct failure outcome.
    pub max_steps: u64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            rtol: 1e-6,
            atol: 1e-8,
            safety: 0.9,
            min_scale: 0.2,
            max_scale: 5.0,
            dt_initial: None,
            max_steps: 1_000_000,
        }
    }
}

/// Why the integration loop stopped.
#[derive(Debug)]
pub enum Outcome {
    /// Reached `t_end`.
    Finished,
    /// State lost admissibility and `dt` underflowed trying to recover.
    BlowUp(BlowUp),
    /// Accepted-step budget exhausted before `t_end`.
    MaxSteps,
}

/// Run statistics returned alongside the outcome.
#[derive(Debug)]
pub struct Integration {
    pub outcome: Outcome,
    pub t_final: f64,
    pub steps_accepted: u64,
    pub steps_rejected: u64,
    pub rhs_evaluations: u64,
}

impl Integration {
    pub fn finished(&self) -> bool {
        matches!(self.outcome, Outcome::Finished)
    }
}

/// Data handed to the per-step observer after every *accepted* step.
pub struct StepInfo<'a> {
    /// 1-based accepted-step index.
    pub step: u64,
    /// Time after the step.
    pub t: f64,
    /// Step size just used.
    pub dt: f64,
    /// Weighted RMS error estimate of the step (≤ 1 by construction).
    pub err_estimate: f64,
    /// Solution after the step.
    pub state: &'a FieldArray,
    /// Right-hand side at (`t`, `state`) — the FSAL stage, free of charge.
    pub rhs: &'a FieldArray,
}

/// Right-hand-side evaluations count and fail like the solver's.
pub type RhsFn<'a> =
    dyn FnMut(f64, &FieldArray, &mut FieldArray) -> Result<(), BlowUp> + 'a;

/// Observer invoked after every accepted step.
pub type ObserverFn<'a> = dyn FnMut(&StepInfo) + 'a;

const UNDERFLOW_FRACTION: f64 = 1e-12;

/// Weighted RMS norm of the per-entry error against atol/rtol scales built
/// from the larger magnitude of the old and new solutions.
fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], ctrl: &StepControl) -> f64 {
    let mut acc = 0.0;
    for i in 0..err.len() {
        let sc = ctrl.atol + ctrl.rtol * y0[i].abs().max(y1[i].abs());
        let r = err[i] / sc;
        acc += r * r;
    }
    (acc / err.len() as f64).sqrt()
}

/// Hairer-style initial step heuristic from the first derivative only.
fn initial_step(y: &FieldArray, f0: &FieldArray, span: f64, ctrl: &StepControl) -> f64 {
    let n = y.data().len() as f64;
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for (yi, fi) in y.data().iter().zip(f0.data()) {
        let sc = ctrl.atol + ctrl.rtol * yi.abs();
        d0 += (yi / sc) * (yi / sc);
        d1 += (fi / sc) * (fi / sc);
    }
    d0 = (d0 / n).sqrt();
    d1 = (d1 / n).sqrt();
    let h = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 * span } else { 0.01 * d0 / d1 };
    h.min(span)
}

/// Integrate `y` from `t0` to `t1` in place.
pub fn integrate(
    rhs: &mut RhsFn,
    y: &mut FieldArray,
    t0: f64,
    t1: f64,
    ctrl: &StepControl,
    observer: &mut ObserverFn,
) -> Integration {
    let span = t1 - t0;
    assert!(span > 0.0, "integration span must be positive");
    let ne = y.num_elements();
    let npe = y.nodes_per_element();
    let mut k: Vec<FieldArray> = (0..7).map(|_| FieldArray::zeros(ne, npe)).collect();
    let mut y_stage = FieldArray::zeros(ne, npe);
    let mut y_new = FieldArray::zeros(ne, npe);
    let mut err = vec![0.0_f64; y.data().len()];

    let mut stats = Integration {
        outcome: Outcome::Finished,
        t_final: t0,
        steps_accepted: 0,
        steps_rejected: 0,
        rhs_evaluations: 0,
    };

    let mut t = t0;
    // k1 at the initial state; a blow-up here means inadmissible initial data.
    stats.rhs_evaluations += 1;
    if let Err(b) = rhs(t, y, &mut k[0]) {
        stats.outcome = Outcome::BlowUp(b);
        return stats;
    }
    let mut dt = ctrl.dt_initial.unwrap_or_else(|| initial_step(y, &k[0], span, ctrl));
    dt = dt.clamp(0.0, span);

    // H211b filter memory: previous error and previous step ratio.
    let mut err_prev = 1.0_f64;
    let mut dt_prev = dt;
    let mut have_history = false;

    loop {
        if t >= t1 - UNDERFLOW_FRACTION * span {
            stats.outcome = Outcome::Finished;
            stats.t_final = t1;
            return stats;
        }
        if stats.steps_accepted >= ctrl.max_steps {
            stats.outcome = Outcome::MaxSteps;
            stats.t_final = t;
            return stats;
        }
        if dt < UNDERFLOW_FRACTION * span {
            stats.outcome = Outcome::BlowUp(BlowUp {
                time: t,
                elem: usize::MAX,
                node: usize::MAX,
                what: "time step underflow",
            });
            stats.t_final = t;
            return stats;
        }
        let dt_attempt = dt.min(t1 - t);

        // Stages 2..=7; stage 7 lands on (t+dt, y_new) by construction.
        let mut stage_failure: Option<BlowUp> = None;
        for s in 1..7 {
            {
                let ys = y_stage.data_mut();
                ys.copy_from_slice(y.data());
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = tableau::A[s][j];
                    if a == 0.0 {
                        continue;
                    }
                    let adt = a * dt_attempt;
                    for (yi, ki) in ys.iter_mut().zip(kj.data()) {
                        *yi += adt * ki;
                    }
                }
            }
            if s == 6 {
                y_new.data_mut().copy_from_slice(y_stage.data());
            }
            stats.rhs_evaluations += 1;
            let (head, tail) = k.split_at_mut(s);
            let _ = head;
            if let Err(b) = rhs(t + tableau::C[s] * dt_attempt, &y_stage, &mut tail[0]) {
                stage_failure = Some(b);
                break;
            }
        }

        if let Some(b) = stage_failure {
            // An intermediate state left the admissible set: reject and
            // shrink geometrically until dt underflows.
            stats.steps_rejected += 1;
            dt = 0.5 * dt_attempt;
            have_history = false;
            // Remember the failure so underflow reports the real location.
            if dt < UNDERFLOW_FRACTION * span {
                stats.outcome = Outcome::BlowUp(b);
                stats.t_final = t;
                return stats;
            }
            continue;
        }

        // Error estimate dt·Σ (b_j − b̂_j) k_j.
        for e in err.iter_mut() {
            *e = 0.0;
        }
        for j in 0..7 {
            let w = tableau::B[j] - tableau::B_HAT[j];
            if w == 0.0 {
                continue;
            }
            let wdt = w * dt_attempt;
            for (ei, ki) in err.iter_mut().zip(k[j].data()) {
                *ei += wdt * ki;
            }
        }
        let e_n = error_norm(&err, y.data(), y_new.data(), ctrl);

        if !e_n.is_finite() {
            stats.steps_rejected += 1;
            dt = ctrl.min_scale * dt_attempt;
            have_history = false;
            continue;
        }

        if e_n <= 1.0 {
            // Accept: FSAL — stage 7 is k1 of the next step.
            std::mem::swap(y, &mut y_new);
            k.swap(0, 6);
            t += dt_attempt;
            stats.steps_accepted += 1;
            stats.t_final = t;
            observer(&StepInfo {
                step: stats.steps_accepted,
                t,
                dt: dt_attempt,
                err_estimate: e_n,
                state: y,
                rhs: &k[0],
            });

            // H211b: factor = safety · e_n^{-1/20} · e_{n-1}^{-1/20} · r^{-1/4},
            // falling back to the elementary order-(4+1) controller until two
            // accepted steps of history exist.
            let e_clip = e_n.max(1e-16);
            let factor = if have_history {
                let r = dt_attempt / dt_prev;
                ctrl.safety
                    * e_clip.powf(-0.05)
                    * err_prev.max(1e-16).powf(-0.05)
                    * r.powf(-0.25)
            } else {
                ctrl.safety * e_clip.powf(-0.2)
            };
            let factor = factor.clamp(ctrl.min_scale, ctrl.max_scale);
            err_prev = e_clip;
            dt_prev = dt_attempt;
            have_history = true;
            dt = factor * dt_attempt;
        } else {
            stats.steps_rejected += 1;
            dt = dt_attempt * (ctrl.safety * e_n.powf(-0.2)).max(ctrl.min_scale);
            have_history = false;
        }
    }
}

/// Fixed-step driver used by the convergence tests: `n` equal DP5 steps with
/// no controller and no error test (stage failures still abort).
pub fn integrate_fixed(
    rhs: &mut RhsFn,
    y: &mut FieldArray,
    t0: f64,
    t1: f64,
    n: usize,
) -> Result<(), BlowUp> {
    let ne = y.num_elements();
    let npe = y.nodes_per_element();
    let mut k: Vec<FieldArray> = (0..7).map(|_| FieldArray::zeros(ne, npe)).collect();
    let mut y_stage = FieldArray::zeros(ne, npe);
    let dt = (t1 - t0) / n as f64;
    for step in 0..n {
        let t = t0 + step as f64 * dt;
        rhs(t, y, &mut k[0])?;
        for s in 1..7 {
            {
                let ys = y_stage.data_mut();
                ys.copy_from_slice(y.data());
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = tableau::A[s][j];
                    if a == 0.0 {
                        continue;
                    }
                    let adt = a * dt;
                    for (yi, ki) in ys.iter_mut().zip(kj.data()) {
                        *yi += adt * ki;
                    }
                }
            }
            let (_, tail) = k.split_at_mut(s);
            rhs(t + tableau::C[s] * dt, &y_stage, &mut tail[0])?;
        }
        // b equals the last A row: the 7th stage state is the solution.
        let ydata = y.data_mut();
        for (j, kj) in k.iter().enumerate().take(6) {
            let b = tableau::B[j];
            if b == 0.0 {
                continue;
            }
            let bdt = b * dt;
            for (yi, ki) in ydata.iter_mut().zip(kj.data()) {
                *yi += bdt * ki;
            }
        }
    }
    Ok(())
}
