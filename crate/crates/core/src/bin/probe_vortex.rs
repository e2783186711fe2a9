//! Throwaway probe: where does the vortex evolution error come from
//! (not shipped).

use esdc::cases::Vortex;
use esdc::diagnostics::m_norm_error;
use esdc::field::FieldArray;
use esdc::fluxes::Scheme;
use esdc::mesh::build_cartesian;
use esdc::rhs::{RhsContext, RhsOptions, Workspace};
use esdc::sbp::{SbpOperator1D, TensorOperator};
use esdc::time::{integrate, StepControl};

fn main() {
    let v = Vortex::default();
    let p = 3;
    let k = 6;
    let op = TensorOperator::new(SbpOperator1D::build_lgl(p).unwrap());
    let grid = build_cartesian(v.domain, [k; 3], &op, true).unwrap();

    // --- RHS consistency at t = 0 ------------------------------------------
    // For the translating vortex, dq/dt at t=0 is exact(x, eps) differenced.
    let eps = 1e-5;
    for scheme in [
        Scheme::EsChandrashekar,
        Scheme::SfKennedyGruber,
        Scheme::DivergenceCollocation,
    ] {
        for dissipation in [true, false] {
            let opts = RhsOptions {
                scheme,
                viscous: false,
                dissipation,
                c_diss: 1.0,
                c_ip: None,
            };
            let ctx =
                RhsContext::new(op.clone(), grid.clone(), v.gas(), opts, None, None).unwrap();
            let mut ws = Workspace::new(&ctx);
            let state = v.initial_field(&grid);
            let mut dqdt = FieldArray::zeros(grid.num_elements, grid.nodes_per_element);
            ctx.evaluate(0.0, &state, &mut ws, &mut dqdt).unwrap();
            // Residual against the analytic rate, in the quadrature norm.
            let resid = m_norm_error(&dqdt, &grid, &op, |x| {
                let a = v.exact_state(x, eps);
                let b = v.exact_state(x, -eps);
                let mut d = [0.0; 5];
                for c in 0..5 {
                    d[c] = (a[c] - b[c]) / (2.0 * eps);
                }
                d
            });
            println!(
                "rhs resid {scheme:?} diss={dissipation}: rho={:.3e} rhou1={:.3e} rhoE={:.3e}",
                resid[0], resid[1], resid[4]
            );
        }
    }

    // --- Short evolutions, all schemes -------------------------------------
    for scheme in [
        Scheme::EsChandrashekar,
        Scheme::SfKennedyGruber,
        Scheme::DivergenceCollocation,
    ] {
        for t_end in [0.1, 0.5] {
            let opts = RhsOptions {
                scheme,
                viscous: false,
                dissipation: true,
                c_diss: 1.0,
                c_ip: None,
            };
            let ctx =
                RhsContext::new(op.clone(), grid.clone(), v.gas(), opts, None, None).unwrap();
            let mut ws = Workspace::new(&ctx);
            let mut state = v.initial_field(&grid);
            let ctrl = StepControl {
                rtol: 1e-9,
                atol: 1e-11,
                ..StepControl::default()
            };
            let mut rhs = |t: f64, y: &FieldArray, out: &mut FieldArray| {
                ctx.evaluate(t, y, &mut ws, out)
            };
            let stats = integrate(&mut rhs, &mut state, 0.0, t_end, &ctrl, &mut |_| ());
            assert!(stats.finished());
            let err = m_norm_error(&state, &grid, &op, |x| v.exact_state(x, t_end));
            // Density extrema tell apart "melted away" from "blown up".
            let mut rho_min = f64::INFINITY;
            let mut rho_max = f64::NEG_INFINITY;
            for e in 0..grid.num_elements {
                for n in 0..grid.nodes_per_element {
                    let q = state.node_state(e, n);
                    rho_min = rho_min.min(q[0]);
                    rho_max = rho_max.max(q[0]);
                }
            }
            println!(
                "{scheme:?} t={t_end}: err_rho={:.4e}  rho in [{:.4}, {:.4}]  steps={}",
                err[0], rho_min, rho_max, stats.steps_accepted
            );
        }
    }
}
