//! Run orchestration: single runs, convergence sweeps, robustness matrices.
//!
//! A run builds the grid and scenario named by a [`RunConfig`], integrates,
//! and leaves three artifacts in the output directory: `timeseries.csv` (one
//! row per accepted step), `summary.json` (configuration echo, outcome, final
//! errors and diagnostics), and optional binary field dumps. Sweeps and
//! matrices drive many runs into per-member subdirectories and aggregate.

use crate::cases::{Chit, Freestream, Mms, Tgv, Vortex};
use crate::config::{CaseKind, RobustnessSpec, RunConfig, SweepSpec};
use crate::diagnostics::{
    entropy_rate, kinetic_energy_mean, m_norm_error, min_rho_p, total_entropy, turbulence_stats,
};
use crate::field::FieldArray;
use crate::gas::{GasModel, State5};
use crate::io::{
    write_field_dump, BlowUpInfo, FinalDiagnostics, Summary, SummaryPayload, TimeseriesRow,
    TimeseriesWriter,
};
use crate::mesh::{build_cartesian, build_warped, Box3, Grid};
use crate::rhs::{BoundaryFn, RhsContext, RhsOptions, SourceFn, Workspace};
use crate::sbp::{SbpOperator1D, TensorOperator};
use crate::time::{integrate, Outcome, StepControl, StepInfo};
use crate::{Error, Result};
use rayon::prelude::*;
use std::path::Path;
use std::time::Instant;

pub const EXIT_OK: i32 = 0;
/// Configuration-class failures (bad file, bad mesh, I/O).
pub const EXIT_CONFIG: i32 = 2;
/// The run did not reach its target time (blow-up or step-budget exhaustion).
pub const EXIT_BLOWUP: i32 = 10;

/// Exit code implied by a summary's outcome string.
pub fn exit_code(outcome: &str) -> i32 {
    if outcome == "finished" {
        EXIT_OK
    } else {
        EXIT_BLOWUP
    }
}

/// Everything `run` derives from the case selection before integrating.
struct CaseSetup {
    gas: GasModel,
    initial: FieldArray,
    boundary: Option<Box<BoundaryFn>>,
    source: Option<Box<SourceFn>>,
    exact: Option<Box<dyn Fn([f64; 3], f64) -> State5>>,
    t_final: f64,
    /// Effective physical parameters, echoed into the summary.
    params_json: serde_json::Value,
    /// Report turbulence statistics in the final diagnostics.
    turbulent: bool,
}

fn build_grid(cfg: &RunConfig, domain: Box3, op: &TensorOperator, periodic: bool) -> Result<Grid> {
    if cfg.warp > 0.0 {
        build_warped(domain, cfg.elements, op, cfg.warp, periodic)
    } else {
        build_cartesian(domain, cfg.elements, op, periodic)
    }
}

fn prepare(cfg: &RunConfig, op: &TensorOperator) -> Result<(Grid, CaseSetup)> {
    let pm = &cfg.params;
    match cfg.case {
        CaseKind::Vortex => {
            let case = Vortex {
                mach: pm.mach,
                beta: pm.beta,
                ..Default::default()
            };
            let grid = build_grid(cfg, case.domain, op, true)?;
            let setup = CaseSetup {
                gas: case.gas(),
                initial: case.initial_field(&grid),
                boundary: None,
                source: None,
                exact: Some(Box::new(move |x, t| case.exact_state(x, t))),
                t_final: cfg.t_final.unwrap_or(case.t_final),
                params_json: serde_json::json!({
                    "gamma": case.gamma,
                    "mach": case.mach,
                    "beta": case.beta,
                    "t_inf": case.t_inf,
                    "r_gas": case.gas().r,
                }),
                turbulent: false,
            };
            Ok((grid, setup))
        }
        CaseKind::Mms => {
            let case = Mms::with_reynolds(pm.reynolds);
            let grid = build_grid(cfg, case.domain(), op, false)?;
            let setup = CaseSetup {
                gas: case.gas(),
                initial: case.initial_field(&grid),
                boundary: Some(Box::new(move |x, _t| case.exact_state(x))),
                source: Some(Box::new(move |x, _t| case.source_at(x))),
                exact: Some(Box::new(move |x, _t| case.exact_state(x))),
                t_final: cfg.t_final.unwrap_or(5.0e-3),
                params_json: serde_json::json!({
                    "gamma": case.gamma,
                    "reynolds": case.reynolds,
                    "mu": case.mu(),
                    "nominal_mach": case.nominal_mach(),
                }),
                turbulent: false,
            };
            Ok((grid, setup))
        }
        CaseKind::Tgv => {
            let case = Tgv {
                mach: pm.mach,
                reynolds: pm.reynolds,
                ..Default::default()
            };
            let grid = build_grid(cfg, case.domain(), op, true)?;
            let gas = if cfg.viscous { case.gas() } else { case.gas_inviscid() };
            let setup = CaseSetup {
                gas,
                initial: case.initial_field(&grid),
                boundary: None,
                source: None,
                exact: None,
                t_final: cfg.t_final.unwrap_or(case.t_final),
                params_json: serde_json::json!({
                    "gamma": case.gamma,
                    "mach": case.mach,
                    "reynolds": case.reynolds,
                    "mu": gas.mu,
                    "r_gas": gas.r,
                }),
                turbulent: true,
            };
            Ok((grid, setup))
        }
        CaseKind::Chit => {
            let case = Chit {
                a0: pm.a0,
                k0: pm.k0,
                k_syn: pm.k_syn,
                mach_t: pm.mach_t,
                re_lambda: pm.re_lambda,
                seed: cfg.seed,
                ..Default::default()
            };
            let grid = build_grid(cfg, case.domain(), op, true)?;
            let init = case.initial(&grid, op)?;
            let gas = if cfg.viscous {
                init.gas
            } else {
                GasModel::inviscid(init.gas.gamma, init.gas.r)
            };
            let setup = CaseSetup {
                gas,
                initial: init.field,
                boundary: None,
                source: None,
                exact: None,
                t_final: cfg.t_final.unwrap_or(init.t_final),
                params_json: serde_json::json!({
                    "gamma": case.gamma,
                    "a0": case.a0,
                    "k0": case.k0,
                    "k_syn": case.k_syn,
                    "mach_t_target": case.mach_t,
                    "re_lambda_target": case.re_lambda,
                    "seed": case.seed,
                    "mu": gas.mu,
                    "integral_length": init.l1,
                    "eddy_turnover": init.tau,
                    "u_rms_initial": init.stats.u_rms,
                    "ma_t_initial": init.stats.ma_t,
                    "taylor_microscale_initial": init.stats.lambda,
                }),
                turbulent: true,
            };
            Ok((grid, setup))
        }
        CaseKind::Freestream => {
            let case = Freestream::default();
            let grid = build_grid(cfg, Box3::cube(0.0, 1.0), op, true)?;
            let q0 = case.state();
            let setup = CaseSetup {
                gas: case.gas(),
                initial: case.initial_field(&grid),
                boundary: None,
                source: None,
                exact: Some(Box::new(move |_x, _t| q0)),
                t_final: cfg.t_final.unwrap_or(case.t_final),
                params_json: serde_json::json!({
                    "gamma": case.gamma,
                    "rho": case.rho,
                    "u": case.u,
                    "pressure": case.p,
                    "warp": cfg.warp,
                }),
                turbulent: false,
            };
            Ok((grid, setup))
        }
    }
}

/// Execute one run and write its artifacts. `Err` covers configuration-class
/// failures (exit 2); solution blow-up is a reported outcome inside `Ok`.
pub fn run(cfg: &RunConfig) -> Result<Summary> {
    let start = Instant::now();
    let op = TensorOperator::new(SbpOperator1D::build_lgl(cfg.p)?);
    let (grid, setup) = prepare(cfg, &op)?;
    std::fs::create_dir_all(&cfg.output)?;

    let opts = RhsOptions {
        scheme: cfg.scheme,
        viscous: cfg.viscous,
        dissipation: cfg.dissipation,
        c_diss: cfg.c_diss,
        c_ip: cfg.c_ip,
    };
    let ctx = RhsContext::new(op, grid, setup.gas, opts, setup.boundary, setup.source)?;
    let mut ws = Workspace::new(&ctx);
    let mut state = setup.initial;
    let initial_copy = (cfg.case == CaseKind::Freestream).then(|| state.clone());

    let mut tsw = TimeseriesWriter::create(&cfg.output.join("timeseries.csv"))?;
    let mut io_error: Option<Error> = None;

    // Step-0 row: diagnostics of the initial state, with the entropy rate
    // from one extra right-hand-side evaluation (also a cheap early check
    // that the initial state is admissible under this discretization).
    {
        let mut dqdt = FieldArray::zeros(state.num_elements(), state.nodes_per_element());
        let rate = match ctx.evaluate(0.0, &state, &mut ws, &mut dqdt) {
            Ok(()) => entropy_rate(&state, &dqdt, &ctx.grid, &ctx.op, &ctx.gas)
                .unwrap_or(f64::NAN),
            Err(_) => f64::NAN,
        };
        let (min_rho, min_p) = min_rho_p(&state, &ctx.gas);
        tsw.write_row(&TimeseriesRow {
            step: 0,
            t: 0.0,
            dt: 0.0,
            err_estimate: 0.0,
            e_k: kinetic_energy_mean(&state, &ctx.grid, &ctx.op),
            total_entropy: total_entropy(&state, &ctx.grid, &ctx.op, &ctx.gas)
                .unwrap_or(f64::NAN),
            entropy_rate: rate,
            min_rho,
            min_p,
        })?;
    }
    if cfg.dump_every > 0 {
        write_field_dump(
            &cfg.output.join("state_00000000.dump"),
            cfg.p,
            cfg.elements,
            &ctx.grid.domain,
            0.0,
            &state,
        )?;
    }

    let ctrl = StepControl {
        rtol: cfg.rtol,
        atol: cfg.atol,
        max_steps: cfg.max_steps as u64,
        ..Default::default()
    };

    let integ = {
        let mut rhs = |t: f64, y: &FieldArray, out: &mut FieldArray| {
            ctx.evaluate(t, y, &mut ws, out)
        };
        let mut observer = |info: &StepInfo| {
            let (min_rho, min_p) = min_rho_p(info.state, &ctx.gas);
            let row = TimeseriesRow {
                step: info.step,
                t: info.t,
                dt: info.dt,
                err_estimate: info.err_estimate,
                e_k: kinetic_energy_mean(info.state, &ctx.grid, &ctx.op),
                total_entropy: total_entropy(info.state, &ctx.grid, &ctx.op, &ctx.gas)
                    .unwrap_or(f64::NAN),
                entropy_rate: entropy_rate(info.state, info.rhs, &ctx.grid, &ctx.op, &ctx.gas)
                    .unwrap_or(f64::NAN),
                min_rho,
                min_p,
            };
            if let Err(e) = tsw.write_row(&row) {
                io_error.get_or_insert(e);
            }
            if cfg.dump_every > 0 && info.step % cfg.dump_every as u64 == 0 {
                let name = format!("state_{:08}.dump", info.step);
                if let Err(e) = write_field_dump(
                    &cfg.output.join(name),
                    cfg.p,
                    cfg.elements,
                    &ctx.grid.domain,
                    info.t,
                    info.state,
                ) {
                    io_error.get_or_insert(e);
                }
            }
        };
        integrate(&mut rhs, &mut state, 0.0, setup.t_final, &ctrl, &mut observer)
    };
    tsw.finish()?;
    if let Some(e) = io_error {
        return Err(e);
    }
    if cfg.dump_every > 0 {
        write_field_dump(
            &cfg.output.join("state_final.dump"),
            cfg.p,
            cfg.elements,
            &ctx.grid.domain,
            integ.t_final,
            &state,
        )?;
    }

    let (outcome, blow_up) = match &integ.outcome {
        Outcome::Finished => ("finished".to_string(), None),
        Outcome::BlowUp(b) => (
            "blow-up".to_string(),
            Some(BlowUpInfo {
                time: b.time,
                element: b.elem,
                node: b.node,
                what: b.what.to_string(),
            }),
        ),
        Outcome::MaxSteps => ("max-steps".to_string(), None),
    };

    let l2_error = setup
        .exact
        .as_ref()
        .map(|f| m_norm_error(&state, &ctx.grid, &ctx.op, |x| f(x, integ.t_final)));
    let max_deviation = initial_copy.map(|q0| {
        state
            .data()
            .iter()
            .zip(q0.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max)
    });

    let (min_rho, min_p) = min_rho_p(&state, &ctx.gas);
    let turb = setup
        .turbulent
        .then(|| turbulence_stats(&state, &ctx.grid, &ctx.op, &ctx.gas).ok())
        .flatten();
    let final_diagnostics = FinalDiagnostics {
        e_k: kinetic_energy_mean(&state, &ctx.grid, &ctx.op),
        total_entropy: total_entropy(&state, &ctx.grid, &ctx.op, &ctx.gas).unwrap_or(f64::NAN),
        min_rho,
        min_p,
        u_rms: turb.as_ref().map(|s| s.u_rms),
        ma_t: turb.as_ref().map(|s| s.ma_t),
        re_lambda: turb.as_ref().and_then(|s| s.re_lambda),
    };

    let summary = Summary {
        payload: SummaryPayload {
            case: cfg.case.tag().to_string(),
            scheme: cfg.scheme.tag().to_string(),
            p: cfg.p,
            elements: cfg.elements,
            dofs_per_direction: (cfg.p + 1) * cfg.elements.iter().copied().max().unwrap(),
            viscous: cfg.viscous,
            dissipation: cfg.dissipation,
            c_diss: cfg.c_diss,
            c_ip: cfg.c_ip,
            atol: cfg.atol,
            rtol: cfg.rtol,
            seed: cfg.seed,
            t_final_target: setup.t_final,
            outcome,
            t_reached: integ.t_final,
            steps_accepted: integ.steps_accepted as usize,
            steps_rejected: integ.steps_rejected as usize,
            rhs_evaluations: integ.rhs_evaluations as usize,
            blow_up,
            l2_error,
            max_deviation,
            final_diagnostics,
            case_parameters: setup.params_json,
        },
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    summary.write(&cfg.output.join("summary.json"))?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// Convergence sweeps
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub p: usize,
    pub k: usize,
    pub dofs_per_direction: usize,
    pub total_dofs: usize,
    /// Discrete L² error per conserved field; `None` when the member failed
    /// or the case has no exact solution.
    pub l2_error: Option<[f64; 5]>,
    pub outcome: String,
    pub wall_clock_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct OrderFit {
    pub p: usize,
    /// Fitted convergence order per conserved field (NaN with < 2 points).
    pub order: [f64; 5],
    pub points: usize,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub fits: Vec<OrderFit>,
}

impl SweepReport {
    /// Smallest fitted density order across degrees (NaN if nothing fit).
    pub fn worst_density_margin(&self) -> f64 {
        self.fits
            .iter()
            .map(|f| f.order[0] - f.p as f64)
            .fold(f64::NAN, f64::min)
    }
}

/// Run every (p, K) member of the sweep, fit convergence orders per degree,
/// and write `sweep.csv` / `orders.csv` into the template's output directory.
/// Member failures mark the row and the sweep continues.
pub fn sweep(template: &RunConfig, spec: &SweepSpec) -> Result<SweepReport> {
    let root = template.output.clone();
    std::fs::create_dir_all(&root)?;
    let mut rows = Vec::new();
    for &(p, k) in &spec.grids {
        let mut member = template.clone();
        member.p = p;
        member.elements = [k; 3];
        member.output = root.join(format!("p{p}_k{k}"));
        let row = match run(&member) {
            Ok(s) => SweepRow {
                p,
                k,
                dofs_per_direction: (p + 1) * k,
                total_dofs: 5 * (p + 1).pow(3) * k * k * k,
                l2_error: if s.payload.outcome == "finished" { s.payload.l2_error } else { None },
                outcome: s.payload.outcome,
                wall_clock_seconds: s.wall_clock_seconds,
            },
            Err(e) => SweepRow {
                p,
                k,
                dofs_per_direction: (p + 1) * k,
                total_dofs: 5 * (p + 1).pow(3) * k * k * k,
                l2_error: None,
                outcome: format!("error: {e}"),
                wall_clock_seconds: 0.0,
            },
        };
        rows.push(row);
    }

    let mut degrees: Vec<usize> = rows.iter().map(|r| r.p).collect();
    degrees.sort_unstable();
    degrees.dedup();
    let fits: Vec<OrderFit> = degrees
        .into_iter()
        .map(|p| {
            let pts: Vec<(&SweepRow, [f64; 5])> = rows
                .iter()
                .filter(|r| r.p == p)
                .filter_map(|r| r.l2_error.map(|e| (r, e)))
                .collect();
            let mut order = [f64::NAN; 5];
            if pts.len() >= 2 {
                for c in 0..5 {
                    let xy: Vec<(f64, f64)> = pts
                        .iter()
                        .filter(|(_, e)| e[c] > 0.0 && e[c].is_finite())
                        .map(|(r, e)| ((r.dofs_per_direction as f64).ln(), e[c].ln()))
                        .collect();
                    order[c] = -least_squares_slope(&xy);
                }
            }
            OrderFit { p, order, points: pts.len() }
        })
        .collect();

    write_sweep_files(&root, template, &rows, &fits)?;
    Ok(SweepReport { rows, fits })
}

/// Slope of the least-squares line through `(x, y)` pairs; NaN below 2 points.
fn least_squares_slope(xy: &[(f64, f64)]) -> f64 {
    let n = xy.len() as f64;
    if xy.len() < 2 {
        return f64::NAN;
    }
    let sx: f64 = xy.iter().map(|p| p.0).sum();
    let sy: f64 = xy.iter().map(|p| p.1).sum();
    let sxx: f64 = xy.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = xy.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

fn write_sweep_files(
    root: &Path,
    template: &RunConfig,
    rows: &[SweepRow],
    fits: &[OrderFit],
) -> Result<()> {
    use std::fmt::Write as _;
    let mut csv = String::from(
        "scheme,p,elements,dofs_per_direction,total_dofs,err_rho,err_rhou1,err_rhou2,err_rhou3,err_rhoE,outcome,wall_clock_seconds\n",
    );
    for r in rows {
        let e = r.l2_error.unwrap_or([f64::NAN; 5]);
        writeln!(
            csv,
            "{},{},{},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.3}",
            template.scheme.tag(),
            r.p,
            r.k,
            r.dofs_per_direction,
            r.total_dofs,
            e[0],
            e[1],
            e[2],
            e[3],
            e[4],
            r.outcome.replace(',', ";"),
            r.wall_clock_seconds
        )
        .expect("string write");
    }
    std::fs::write(root.join("sweep.csv"), csv)?;

    let mut ocsv =
        String::from("p,points,order_rho,order_rhou1,order_rhou2,order_rhou3,order_rhoE\n");
    for f in fits {
        writeln!(
            ocsv,
            "{},{},{:.4},{:.4},{:.4},{:.4},{:.4}",
            f.p, f.points, f.order[0], f.order[1], f.order[2], f.order[3], f.order[4]
        )
        .expect("string write");
    }
    std::fs::write(root.join("orders.csv"), ocsv)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Robustness matrices
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct MatrixCell {
    pub scheme: crate::fluxes::Scheme,
    pub p: usize,
    pub k: usize,
    pub seed: u64,
    pub finished: bool,
    pub t_reached: f64,
    pub t_final_target: f64,
    pub wall_clock_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct MatrixReport {
    pub cells: Vec<MatrixCell>,
    /// Rendered ✓/✗ table, one block per seed.
    pub table: String,
}

/// Run the scheme × p × K (× seed) matrix. Each member writes its artifacts
/// under the template's output directory; the matrix writes `matrix.csv` and
/// a rendered `matrix.txt`. Member blow-ups are cells, not errors.
pub fn robustness_matrix(template: &RunConfig, spec: &RobustnessSpec) -> Result<MatrixReport> {
    let root = template.output.clone();
    std::fs::create_dir_all(&root)?;

    let mut members = Vec::new();
    for &seed in &spec.seeds {
        for &scheme in &spec.schemes {
            for &p in &spec.p_list {
                for &k in &spec.k_list {
                    let mut member = template.clone();
                    member.scheme = scheme;
                    member.p = p;
                    member.elements = [k; 3];
                    member.seed = seed;
                    member.output = root.join(format!("s{seed}_{}_p{p}_k{k}", scheme.tag()));
                    members.push((scheme, p, k, seed, member));
                }
            }
        }
    }

    let run_member = |(scheme, p, k, seed, member): &(
        crate::fluxes::Scheme,
        usize,
        usize,
        u64,
        RunConfig,
    )|
     -> Result<MatrixCell> {
        let s = run(member)?;
        Ok(MatrixCell {
            scheme: *scheme,
            p: *p,
            k: *k,
            seed: *seed,
            finished: s.payload.outcome == "finished",
            t_reached: s.payload.t_reached,
            t_final_target: s.payload.t_final_target,
            wall_clock_seconds: s.wall_clock_seconds,
        })
    };

    let cells: Vec<MatrixCell> = if spec.parallel {
        members
            .par_iter()
            .map(run_member)
            .collect::<Result<Vec<_>>>()?
    } else {
        members
            .iter()
            .map(run_member)
            .collect::<Result<Vec<_>>>()?
    };

    let table = render_matrix(&cells, spec);
    std::fs::write(root.join("matrix.txt"), &table)?;

    let mut csv = String::from(
        "seed,scheme,p,elements,finished,t_reached,t_final_target,wall_clock_seconds\n",
    );
    use std::fmt::Write as _;
    for c in &cells {
        writeln!(
            csv,
            "{},{},{},{},{},{:.16e},{:.16e},{:.3}",
            c.seed,
            c.scheme.tag(),
            c.p,
            c.k,
            c.finished as u8,
            c.t_reached,
            c.t_final_target,
            c.wall_clock_seconds
        )
        .expect("string write");
    }
    std::fs::write(root.join("matrix.csv"), csv)?;

    Ok(MatrixReport { cells, table })
}

fn render_matrix(cells: &[MatrixCell], spec: &RobustnessSpec) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    for &seed in &spec.seeds {
        if spec.seeds.len() > 1 {
            writeln!(out, "seed {seed}").expect("string write");
        }
        write!(out, "{:<12}", "scheme \\ K").expect("string write");
        for &k in &spec.k_list {
            write!(out, " {:>4}", format!("{k}^3")).expect("string write");
        }
        out.push('\n');
        for &scheme in &spec.schemes {
            for &p in &spec.p_list {
                write!(out, "{:<12}", format!("{} p={p}", scheme.tag())).expect("string write");
                for &k in &spec.k_list {
                    let cell = cells
                        .iter()
                        .find(|c| {
                            c.scheme == scheme && c.p == p && c.k == k && c.seed == seed
                        })
                        .expect("matrix cell exists");
                    write!(out, " {:>4}", if cell.finished { "✓" } else { "✗" })
                        .expect("string write");
                }
                out.push('\n');
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{load_robustness, load_run, load_sweep};
    use crate::io::read_timeseries;

    fn base(case: &str, dir: &Path, extra: &str) -> RunConfig {
        let text = format!(
            "[run]\ncase = {case}\noutput = {}\n{extra}",
            dir.display()
        );
        load_run(&text).unwrap()
    }

    #[test]
    fn freestream_run_finishes_with_tiny_deviation_and_valid_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = base(
            "freestream",
            &dir.path().join("fs"),
            "p = 2\nelements = 2\nt_final = 0.2\ndump_every = 5\n",
        );
        let s = run(&cfg).unwrap();
        assert_eq!(s.payload.outcome, "finished");
        assert_eq!(exit_code(&s.payload.outcome), EXIT_OK);
        assert!(s.payload.max_deviation.unwrap() <= 1e-10);
        assert_eq!(s.payload.t_reached, 0.2);

        // Schema checks: both artifacts read back.
        let rows =
            read_timeseries(&std::fs::read_to_string(cfg.output.join("timeseries.csv")).unwrap())
                .unwrap();
        assert_eq!(rows[0].step, 0);
        assert!(rows.len() as usize >= s.payload.steps_accepted);
        assert!(rows.windows(2).all(|w| w[1].t > w[0].t));
        let back = Summary::read(&cfg.output.join("summary.json")).unwrap();
        assert_eq!(back.payload, s.payload);
        let dump = crate::io::read_field_dump(&cfg.output.join("state_final.dump")).unwrap();
        assert_eq!(dump.p, 2);
        assert_eq!(dump.time, 0.2);
        assert!(cfg.output.join("state_00000000.dump").exists());
    }

    #[test]
    fn vortex_short_run_reports_small_l2_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = base(
            "vortex",
            &dir.path().join("v"),
            "p = 3\nelements = 2\nt_final = 0.05\n",
        );
        let s = run(&cfg).unwrap();
        assert_eq!(s.payload.outcome, "finished");
        let err = s.payload.l2_error.unwrap();
        // The 2³ grid leaves the vortex essentially unresolved, so the error
        // sits at the projection level; this checks plumbing, not accuracy.
        assert!(err[0] > 0.0 && err[0] < 1.0, "density error {:?}", err);
        // The rotation axis is the cube diagonal, so the three momentum
        // errors must agree by symmetry.
        assert!((err[1] - err[2]).abs() <= 1e-12 && (err[2] - err[3]).abs() <= 1e-12);
        assert!(s.payload.final_diagnostics.min_p > 0.0);
        assert!(s.payload.rhs_evaluations > 0);
    }

    #[test]
    fn identical_config_and_seed_reproduce_summary_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let mk = |sub: &str| {
            base(
                "chit",
                &dir.path().join(sub),
                "p = 1\nelements = 2\nk_syn = 8\nt_final = 0.005\nseed = 5\n",
            )
        };
        let a = run(&mk("a")).unwrap();
        let b = run(&mk("b")).unwrap();
        assert_eq!(a.payload_bytes(), b.payload_bytes());
        assert!(a.wall_clock_seconds > 0.0);
        // A different seed must change the payload.
        let mut cfg_c = mk("c");
        cfg_c.seed = 6;
        let c = run(&cfg_c).unwrap();
        assert_ne!(a.payload_bytes(), c.payload_bytes());
    }

    #[test]
    fn sweep_continues_past_member_failures_and_fits_orders() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "[run]\ncase = vortex\nt_final = 0.02\noutput = {}\n[sweep]\ngrids = 1x2 1x3\n",
            dir.path().join("sw").display()
        );
        let (template, spec) = load_sweep(&text).unwrap();
        let report = sweep(&template, &spec).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report.rows.iter().all(|r| r.outcome == "finished"));
        assert_eq!(report.fits.len(), 1);
        assert_eq!(report.fits[0].points, 2);
        assert!(report.fits[0].order[0].is_finite());
        assert!(template.output.join("sweep.csv").exists());
        assert!(template.output.join("orders.csv").exists());
        assert!(template.output.join("p1_k2/summary.json").exists());
    }

    #[test]
    fn robustness_matrix_renders_cells_for_every_member() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "[run]\ncase = tgv\nt_final = 0.02\noutput = {}\n[robustness]\nschemes = es-c dc\np = 1\nelements = 2\n",
            dir.path().join("rm").display()
        );
        let (template, spec) = load_robustness(&text).unwrap();
        let report = robustness_matrix(&template, &spec).unwrap();
        assert_eq!(report.cells.len(), 2);
        assert!(report.cells.iter().all(|c| c.finished));
        assert!(report.table.contains("es-c p=1"));
        assert!(report.table.contains("✓"));
        assert!(template.output.join("matrix.txt").exists());
        assert!(template.output.join("matrix.csv").exists());
    }

    #[test]
    fn exit_codes_follow_outcomes() {
        assert_eq!(exit_code("finished"), 0);
        assert_eq!(exit_code("blow-up"), 10);
        assert_eq!(exit_code("max-steps"), 10);
    }
}
