//! Throwaway microbenchmark for the volume kernel (not shipped).

use esdc::cases::Tgv;
use esdc::field::FieldArray;
use esdc::fluxes::Scheme;
use esdc::mesh::build_cartesian;
use esdc::rhs::{RhsContext, RhsOptions, Workspace};
use esdc::sbp::{SbpOperator1D, TensorOperator};
use std::time::Instant;

fn main() {
    let p = 6;
    let k = 6;
    let op = TensorOperator::new(SbpOperator1D::build_lgl(p).unwrap());
    let tgv = Tgv::default();
    let grid = build_cartesian(tgv.domain(), [k; 3], &op, true).unwrap();
    let state = tgv.initial_field(&grid);

    for (scheme, viscous) in [
        (Scheme::EsChandrashekar, false),
        (Scheme::EsChandrashekar, true),
        (Scheme::SfKennedyGruber, false),
        (Scheme::SfKennedyGruber, true),
    ] {
        let opts = RhsOptions {
            scheme,
            viscous,
            dissipation: true,
            c_diss: 1.0,
            c_ip: None,
        };
        let gas = if viscous { tgv.gas() } else { tgv.gas_inviscid() };
        let ctx = RhsContext::new(op.clone(), grid.clone(), gas, opts, None, None).unwrap();
        let mut ws = Workspace::new(&ctx);
        let mut out = FieldArray::zeros(grid.num_elements, grid.nodes_per_element);

        // Warm up, then time the volume kernel alone and the full evaluation.
        for _ in 0..3 {
            ctx.volume_term(0.0, &state, &mut ws, &mut out).unwrap();
        }
        let reps = 20;
        let t0 = Instant::now();
        for _ in 0..reps {
            ctx.volume_term(0.0, &state, &mut ws, &mut out).unwrap();
        }
        let vol_ms = t0.elapsed().as_secs_f64() * 1e3 / reps as f64;

        for _ in 0..3 {
            ctx.evaluate(0.0, &state, &mut ws, &mut out).unwrap();
        }
        let t0 = Instant::now();
        for _ in 0..reps {
            ctx.evaluate(0.0, &state, &mut ws, &mut out).unwrap();
        }
        let full_ms = t0.elapsed().as_secs_f64() * 1e3 / reps as f64;

        let mut grad_ms = 0.0;
        if viscous {
            for _ in 0..3 {
                ctx.gradients(0.0, &state, &mut ws).unwrap();
            }
            let t0 = Instant::now();
            for _ in 0..reps {
                ctx.gradients(0.0, &state, &mut ws).unwrap();
            }
            grad_ms = t0.elapsed().as_secs_f64() * 1e3 / reps as f64;
        }

        // Checksum so the work is not optimized away.
        let sum: f64 = out.data().iter().sum();
        println!(
            "{:6} viscous={:5}  volume {:8.3}  grad {:8.3}  full {:8.3} ms/eval  (checksum {:.6e})",
            scheme.tag(),
            viscous,
            vol_ms,
            grad_ms,
            full_ms,
            sum
        );
    }
}
