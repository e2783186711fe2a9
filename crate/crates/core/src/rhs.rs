//! Semi-discrete right-hand side: inviscid flux differencing, LDG viscous
//! terms, and interface/boundary SATs.
//!
//! # Assembly phases
//!
//! Each evaluation runs four element- or face-parallel phases separated by
//! barriers, writing disjoint memory within each phase:
//!
//! 1. **Cache** — decompose every node into primitives (the admissibility
//!    check and blow-up detector), store [`NodeState`]s and entropy
//!    variables `W`.
//! 2. **Element interiors** — inviscid volume kernel into `J dQ/dt`; when
//!    viscous, the LDG gradient stage `θ_a = D_ξa W + SAT_θ` followed by the
//!    contravariant viscous fluxes `g_l = Σ_m Ja^l_m F^V_m` and their local
//!    divergence `+Σ_l D_ξl g_l`.
//! 3. **Interfaces** — per-face-node coupling terms for both sides into
//!    per-interface buffers (no writes into elements yet).
//! 4. **Finalize** — accumulate face buffers and Dirichlet SATs, divide by
//!    the metric Jacobian, add the manufactured source if present.
//!
//! # Sign conventions
//!
//! The volume kernel assembles a contribution to `J dQ/dt`. For the
//! entropy-conservative and split-form schemes it is the flux-differencing
//! form `−Σ_l Σ_j 2 D_ξl(i,j) F(Q_i, Q_j; ½(Ja^l(i)+Ja^l(j)))`; for the
//! divergence scheme it is `−Σ_l D_ξl (Ja^l_m F_m)` applied to the nodal
//! contravariant fluxes. In both cases `Σ_j D(i,j) = 0` row-wise, so a
//! uniform state is annihilated exactly on any grid whose metrics satisfy
//! the discrete GCL.
//!
//! An interface stores the face-shared outward normal `N` of its `left`
//! element (the metric row; watertight construction makes the right side's
//! row its negative to roundoff). Both sides receive
//!
//! ```text
//! left:  −(1/w_end)·[F* − F(Q_left; N)]
//! right: +(1/w_end)·[F* − F(Q_right; N)]
//! ```
//!
//! with the same `F* = F_two-point + dissipation`. Mass-weighted, the `F*`
//! parts cancel exactly (discrete conservation) while the self-flux parts
//! telescope against the volume kernel's SBP boundary defect. The optional
//! dissipation `(λ/2)·c_diss·H̄·(W_left − W_right)` with `H̄ = dQ/dW` at the
//! conserved-variable average contracts with the `W`-jump to a nonpositive
//! entropy contribution on both sides.

use crate::field::{block_add_node, block_node_state, FieldArray, NUM_FIELDS};
use crate::fluxes::{chandrashekar, kennedy_gruber, pointwise_contracted, two_point, NodeState, Scheme};
use crate::gas::{dq_dw_mul, primitives, GasModel, Primitives, State5};
use crate::mesh::{face_node_indices, Grid};
use crate::sbp::{line_geometry, TensorOperator};
use crate::{Error, Result};
use rayon::prelude::*;

/// State or boundary data lost admissibility during an evaluation — the
/// "crash" outcome of the robustness experiments, not a programming error.
#[derive(Debug, Clone, Copy)]
pub struct BlowUp {
    pub time: f64,
    pub elem: usize,
    pub node: usize,
    pub what: &'static str,
}

impl std::fmt::Display for BlowUp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "state inadmissible at t = {:.6e} (element {}, node {}): {}",
            self.time, self.elem, self.node, self.what
        )
    }
}

/// Exact state prescribed on Dirichlet faces, as a function of position and
/// time (supplied by the active case).
pub type BoundaryFn = dyn Fn([f64; 3], f64) -> State5 + Send + Sync;
/// Volume source added to dQ/dt (manufactured-solution forcing).
pub type SourceFn = dyn Fn([f64; 3], f64) -> State5 + Send + Sync;

/// Scheme and term selection for one solver instance.
#[derive(Clone, Copy, Debug)]
pub struct RhsOptions {
    pub scheme: Scheme,
    pub viscous: bool,
    /// Inviscid interface dissipation at interior faces (always active at
    /// Dirichlet faces regardless of this flag).
    pub dissipation: bool,
    pub c_diss: f64,
    /// Interior-penalty coefficient; `None` selects p(p+1)/2.
    pub c_ip: Option<f64>,
}

enum FacePartner {
    /// Interior face: neighbor element index.
    Interior(usize),
    /// Domain-boundary face with prescribed exterior data.
    Boundary,
    /// Face does not exist (never occurs after construction).
    None,
}

/// Immutable evaluation context: operators, grid, gas, scheme selection,
/// boundary/source callbacks, and precomputed face index tables.
pub struct RhsContext {
    pub op: TensorOperator,
    pub grid: Grid,
    pub gas: GasModel,
    pub opts: RhsOptions,
    pub boundary: Option<Box<BoundaryFn>>,
    pub source: Option<Box<SourceFn>>,
    c_ip: f64,
    /// 1/w_end: inverse of the 1D quadrature weight at a line endpoint.
    inv_wend: f64,
    /// Face node index lists `face_nodes[dir][side]`.
    face_nodes: [[Vec<usize>; 2]; 3],
    /// Per element: (interface index, 0 if the element is `left`, 1 if `right`).
    elem_ifaces: Vec<Vec<(u32, u8)>>,
    /// Per element: indices into `grid.boundaries`.
    elem_bfaces: Vec<Vec<u32>>,
    /// Per element per (dir, side): what is on the other side of the face.
    partners: Vec<[[FacePartner; 2]; 3]>,
}

impl RhsContext {
    pub fn new(
        op: TensorOperator,
        grid: Grid,
        gas: GasModel,
        opts: RhsOptions,
        boundary: Option<Box<BoundaryFn>>,
        source: Option<Box<SourceFn>>,
    ) -> Result<Self> {
        if !grid.boundaries.is_empty() && boundary.is_none() {
            return Err(Error::Config(
                "grid has Dirichlet boundary faces but no boundary data was supplied".into(),
            ));
        }
        if opts.c_diss < 0.0 {
            return Err(Error::Config("c_diss must be nonnegative".into()));
        }
        if let Some(c) = opts.c_ip {
            if c < 0.0 {
                return Err(Error::Config("c_ip must be nonnegative".into()));
            }
        }
        let p = op.op_1d().degree() as f64;
        let c_ip = opts.c_ip.unwrap_or(0.5 * p * (p + 1.0));
        let n = op.op_1d().num_nodes();
        let w = op.op_1d().weights();
        let inv_wend = 1.0 / w[n - 1];

        let face_nodes = [
            [face_node_indices(n, 0, 0), face_node_indices(n, 0, 1)],
            [face_node_indices(n, 1, 0), face_node_indices(n, 1, 1)],
            [face_node_indices(n, 2, 0), face_node_indices(n, 2, 1)],
        ];

        let mut elem_ifaces = vec![Vec::new(); grid.num_elements];
        let mut partners: Vec<[[FacePartner; 2]; 3]> = (0..grid.num_elements)
            .map(|_| {
                [
                    [FacePartner::None, FacePartner::None],
                    [FacePartner::None, FacePartner::None],
                    [FacePartner::None, FacePartner::None],
                ]
            })
            .collect();
        for (idx, iface) in grid.interfaces.iter().enumerate() {
            elem_ifaces[iface.left].push((idx as u32, 0));
            elem_ifaces[iface.right].push((idx as u32, 1));
            partners[iface.left][iface.dir][1] = FacePartner::Interior(iface.right);
            partners[iface.right][iface.dir][0] = FacePartner::Interior(iface.left);
        }
        let mut elem_bfaces = vec![Vec::new(); grid.num_elements];
        for (idx, bf) in grid.boundaries.iter().enumerate() {
            elem_bfaces[bf.elem].push(idx as u32);
            partners[bf.elem][bf.dir][bf.side] = FacePartner::Boundary;
        }

        Ok(RhsContext {
            op,
            grid,
            gas,
            opts,
            boundary,
            source,
            c_ip,
            inv_wend,
            face_nodes,
            elem_ifaces,
            elem_bfaces,
            partners,
        })
    }

    pub fn c_ip(&self) -> f64 {
        self.c_ip
    }

    fn boundary_state(&self, x: [f64; 3], t: f64) -> State5 {
        (self.boundary.as_ref().expect("validated at construction"))(x, t)
    }
}

/// Reusable per-evaluation buffers (sized once, reused across stages).
pub struct Workspace {
    cache: Vec<NodeState>,
    w: Vec<State5>,
    /// Contravariant viscous fluxes per node per reference direction.
    g: Vec<[State5; 3]>,
    /// Per interface: contributions to the [left, right] element face nodes.
    iface_bufs: Vec<[Vec<State5>; 2]>,
}

impl Workspace {
    pub fn new(ctx: &RhsContext) -> Self {
        let nodes = ctx.grid.num_elements * ctx.grid.nodes_per_element;
        let nf = ctx.grid.n * ctx.grid.n;
        Workspace {
            cache: vec![
                NodeState {
                    rho: 0.0,
                    u: [0.0; 3],
                    t: 0.0,
                    p: 0.0,
                    e: 0.0,
                    beta: 0.0,
                    ln_rho: 0.0,
                    ln_beta: 0.0
                };
                nodes
            ],
            w: vec![[0.0; 5]; nodes],
            g: if ctx.opts.viscous { vec![[[0.0; 5]; 3]; nodes] } else { Vec::new() },
            iface_bufs: ctx
                .grid
                .interfaces
                .iter()
                .map(|_| [vec![[0.0; 5]; nf], vec![[0.0; 5]; nf]])
                .collect(),
        }
    }
}

/// Per-thread scratch for element-local kernels.
struct ElemScratch {
    comp: Vec<f64>,
    deriv: Vec<f64>,
    /// θ_a per node (viscous gradient stage).
    theta: Vec<[State5; 3]>,
}

impl ElemScratch {
    fn new(npe: usize, viscous: bool) -> Self {
        ElemScratch {
            comp: vec![0.0; npe],
            deriv: vec![0.0; npe],
            theta: if viscous { vec![[[0.0; 5]; 3]; npe] } else { Vec::new() },
        }
    }
}

impl RhsContext {
    /// Evaluate `out = dQ/dt` at time `t`. Blow-up (inadmissible state at any
    /// node, including boundary data) is reported as `Err`, distinct from
    /// configuration errors which cannot occur here.
    pub fn evaluate(
        &self,
        t: f64,
        state: &FieldArray,
        ws: &mut Workspace,
        out: &mut FieldArray,
    ) -> std::result::Result<(), BlowUp> {
        let npe = self.grid.nodes_per_element;
        let block = NUM_FIELDS * npe;

        // Phase 1: primitive cache and entropy variables.
        build_cache(self, t, state, &mut ws.cache, &mut ws.w)?;
        let cache = &ws.cache[..];
        let wvars = &ws.w[..];

        // Phase 2: element-interior terms into J dQ/dt.
        out.fill_zero();
        if self.opts.viscous {
            let g = &mut ws.g[..];
            out.data_mut()
                .par_chunks_mut(block)
                .zip(g.par_chunks_mut(npe))
                .enumerate()
                .for_each_init(
                    || ElemScratch::new(npe, true),
                    |scratch, (e, (out_block, g_block))| {
                        volume_kernel(self, e, cache, out_block, scratch);
                        gradient_stage_element(self, t, e, wvars, scratch);
                        viscous_fluxes_element(self, e, cache, &scratch.theta, g_block);
                        viscous_divergence_element(self, g_block, out_block, scratch);
                    },
                );
        } else {
            out.data_mut()
                .par_chunks_mut(block)
                .enumerate()
                .for_each_init(
                    || ElemScratch::new(npe, false),
                    |scratch, (e, out_block)| {
                        volume_kernel(self, e, cache, out_block, scratch);
                    },
                );
        }

        // Phase 3: interface couplings into per-face buffers.
        let g = &ws.g[..];
        ws.iface_bufs
            .par_iter_mut()
            .enumerate()
            .try_for_each(|(idx, bufs)| interface_contributions(self, t, idx, cache, wvars, g, bufs))?;

        // Phase 4: accumulate faces, Dirichlet SATs, divide by J, add source.
        let bufs = &ws.iface_bufs[..];
        out.data_mut()
            .par_chunks_mut(block)
            .enumerate()
            .try_for_each(|(e, out_block)| {
                finalize_element(self, t, e, cache, wvars, bufs, out_block)
            })?;
        Ok(())
    }

    /// Volume kernel only (no SATs, no Jacobian division): the contribution
    /// to `J dQ/dt` from element interiors. Exposed for the dense-operator
    /// oracle tests and kernel benchmarks.
    pub fn volume_term(
        &self,
        t: f64,
        state: &FieldArray,
        ws: &mut Workspace,
        out: &mut FieldArray,
    ) -> std::result::Result<(), BlowUp> {
        let npe = self.grid.nodes_per_element;
        build_cache(self, t, state, &mut ws.cache, &mut ws.w)?;
        let cache = &ws.cache[..];
        out.fill_zero();
        out.data_mut()
            .par_chunks_mut(NUM_FIELDS * npe)
            .enumerate()
            .for_each_init(
                || ElemScratch::new(npe, false),
                |scratch, (e, out_block)| volume_kernel(self, e, cache, out_block, scratch),
            );
        Ok(())
    }

    /// LDG gradient stage only: θ_a = D_ξa W + SAT_θ for every node.
    /// Exposed for the gradient-exactness tests.
    pub fn gradients(
        &self,
        t: f64,
        state: &FieldArray,
        ws: &mut Workspace,
    ) -> std::result::Result<Vec<[State5; 3]>, BlowUp> {
        let npe = self.grid.nodes_per_element;
        build_cache(self, t, state, &mut ws.cache, &mut ws.w)?;
        let mut theta = vec![[[0.0; 5]; 3]; self.grid.num_elements * npe];
        let wvars = &ws.w[..];
        theta
            .par_chunks_mut(npe)
            .enumerate()
            .for_each_init(
                || ElemScratch::new(npe, true),
                |scratch, (e, theta_block)| {
                    gradient_stage_element(self, t, e, wvars, scratch);
                    theta_block.copy_from_slice(&scratch.theta);
                },
            );
        Ok(theta)
    }
}

/// Phase 1: primitives, NodeStates, and entropy variables for every node.
fn build_cache(
    ctx: &RhsContext,
    t: f64,
    state: &FieldArray,
    cache: &mut [NodeState],
    wvars: &mut [State5],
) -> std::result::Result<(), BlowUp> {
    let npe = ctx.grid.nodes_per_element;
    let gas = &ctx.gas;
    cache
        .par_chunks_mut(npe)
        .zip(wvars.par_chunks_mut(npe))
        .enumerate()
        .try_for_each(|(e, (cache_block, w_block))| {
            let elem = state.elem(e);
            for node in 0..npe {
                let q = block_node_state(elem, npe, node);
                let pr = primitives(&q, gas).map_err(|err| BlowUp {
                    time: t,
                    elem: e,
                    node,
                    what: err.what,
                })?;
                cache_block[node] = NodeState::from_primitives(&pr);
                w_block[node] = crate::gas::entropy_variables_from_prim(&pr, gas);
            }
            Ok(())
        })
}

/// Inviscid volume kernel for one element (contribution to `J dQ/dt`).
fn volume_kernel(
    ctx: &RhsContext,
    e: usize,
    cache: &[NodeState],
    out_block: &mut [f64],
    scratch: &mut ElemScratch,
) {
    match ctx.opts.scheme {
        Scheme::DivergenceCollocation => divergence_volume(ctx, e, cache, out_block, scratch),
        _ => hadamard_volume(ctx, e, cache, out_block),
    }
}

/// Widest 1-D node line the collocated volume kernels handle (p ≤ 15); the
/// configuration layer enforces the same bound.
const MAX_LINE: usize = 16;

/// Flux-differencing volume kernel: each same-line node pair is evaluated
/// once and scattered to both nodes with its two (generally different)
/// derivative-matrix entries. Dispatches the two-point flux once per element
/// so the pair loop monomorphizes.
fn hadamard_volume(ctx: &RhsContext, e: usize, cache: &[NodeState], out_block: &mut [f64]) {
    let gas = &ctx.gas;
    match ctx.opts.scheme {
        Scheme::EsChandrashekar => {
            hadamard_lines(ctx, e, cache, out_block, |a, b, c| chandrashekar(a, b, c, gas))
        }
        Scheme::SfKennedyGruber => hadamard_lines(ctx, e, cache, out_block, kennedy_gruber),
        Scheme::DivergenceCollocation => {
            unreachable!("divergence form has its own volume kernel")
        }
    }
}

/// Pair loop behind [`hadamard_volume`]. Every line's states, metric vectors,
/// and accumulators are first gathered into small contiguous buffers: the
/// pair loop is quadratic in the line length while gather/scatter is linear,
/// and at high order the strided element-wide walks would otherwise miss L1
/// on every access.
#[inline]
fn hadamard_lines<F>(
    ctx: &RhsContext,
    e: usize,
    cache: &[NodeState],
    out_block: &mut [f64],
    flux: F,
) where
    F: Fn(&NodeState, &NodeState, &[f64; 3]) -> State5,
{
    let n = ctx.grid.n;
    assert!(n <= MAX_LINE, "volume kernel supports p <= 15");
    let npe = ctx.grid.nodes_per_element;
    let o = e * npe;
    let metrics = ctx.grid.element_metrics(e);
    let d = ctx.op.op_1d().d_matrix();

    let mut ns_buf = [cache[o]; MAX_LINE];
    let mut ja_buf = [[0.0f64; 3]; MAX_LINE];
    let mut acc_buf = [[0.0f64; NUM_FIELDS]; MAX_LINE];

    for dir in 0..3 {
        let (stride, plane_a, plane_b) = line_geometry(n, dir);
        for a in 0..n {
            for b in 0..n {
                let base = a * plane_a + b * plane_b;
                let ns = &mut ns_buf[..n];
                let ja = &mut ja_buf[..n];
                let acc = &mut acc_buf[..n];
                for s in 0..n {
                    let i = base + s * stride;
                    ns[s] = cache[o + i];
                    ja[s] = metrics[i][dir];
                    acc[s] = [0.0; NUM_FIELDS];
                }
                for s1 in 0..n {
                    let ni = &ns[s1];
                    let drow = &d[s1 * n..(s1 + 1) * n];
                    let dii = drow[s1];
                    if dii != 0.0 {
                        let f = pointwise_contracted(ni, &ja[s1]);
                        for k in 0..NUM_FIELDS {
                            acc[s1][k] -= 2.0 * dii * f[k];
                        }
                    }
                    for s2 in (s1 + 1)..n {
                        let c = [
                            0.5 * (ja[s1][0] + ja[s2][0]),
                            0.5 * (ja[s1][1] + ja[s2][1]),
                            0.5 * (ja[s1][2] + ja[s2][2]),
                        ];
                        let f = flux(ni, &ns[s2], &c);
                        let w1 = -2.0 * drow[s2];
                        let w2 = -2.0 * d[s2 * n + s1];
                        for k in 0..NUM_FIELDS {
                            acc[s1][k] = w1.mul_add(f[k], acc[s1][k]);
                            acc[s2][k] = w2.mul_add(f[k], acc[s2][k]);
                        }
                    }
                }
                for s in 0..n {
                    let i = base + s * stride;
                    for k in 0..NUM_FIELDS {
                        out_block[k * npe + i] += acc[s][k];
                    }
                }
            }
        }
    }
}

/// Divergence-form volume kernel: the collocated contravariant fluxes
/// differentiated directly, `−Σ_l D_ξl (Ja^l_m F_m)`.
fn divergence_volume(
    ctx: &RhsContext,
    e: usize,
    cache: &[NodeState],
    out_block: &mut [f64],
    scratch: &mut ElemScratch,
) {
    let npe = ctx.grid.nodes_per_element;
    let o = e * npe;
    let metrics = ctx.grid.element_metrics(e);
    for l in 0..3 {
        for c in 0..NUM_FIELDS {
            for node in 0..npe {
                // Contracted flux component c in reference direction l.
                scratch.comp[node] =
                    pointwise_contracted(&cache[o + node], &metrics[node][l])[c];
            }
            ctx.op.apply_derivative(l, &scratch.comp, &mut scratch.deriv);
            let row = &mut out_block[c * npe..(c + 1) * npe];
            for node in 0..npe {
                row[node] -= scratch.deriv[node];
            }
        }
    }
}

/// LDG gradient stage for one element: θ_a = D_ξa W plus the one-sided
/// interface corrections and Dirichlet-face corrections. The designated trace
/// side is the face's negative side (the `right` element of an interface), so
/// only an element's ξ = +1 faces carry interior SAT_θ terms.
fn gradient_stage_element(
    ctx: &RhsContext,
    t: f64,
    e: usize,
    wvars: &[State5],
    scratch: &mut ElemScratch,
) {
    let npe = ctx.grid.nodes_per_element;
    let o = e * npe;
    for a in 0..3 {
        for c in 0..NUM_FIELDS {
            for node in 0..npe {
                scratch.comp[node] = wvars[o + node][c];
            }
            ctx.op.apply_derivative(a, &scratch.comp, &mut scratch.deriv);
            for node in 0..npe {
                scratch.theta[node][a][c] = scratch.deriv[node];
            }
        }
    }
    for dir in 0..3 {
        for side in 0..2 {
            let nu = if side == 1 { 1.0 } else { -1.0 };
            match ctx.partners[e][dir][side] {
                FacePartner::Interior(nb) => {
                    // Interior trace comes from the negative side; only the
                    // positive side sees a correction.
                    if side == 1 {
                        let own = &ctx.face_nodes[dir][1];
                        let other = &ctx.face_nodes[dir][0];
                        let onb = nb * npe;
                        for (fid, &node) in own.iter().enumerate() {
                            let wn = &wvars[onb + other[fid]];
                            let ws = &wvars[o + node];
                            for c in 0..NUM_FIELDS {
                                scratch.theta[node][dir][c] +=
                                    ctx.inv_wend * (wn[c] - ws[c]);
                            }
                        }
                    }
                }
                FacePartner::Boundary => {
                    let own = &ctx.face_nodes[dir][side];
                    for &node in own.iter() {
                        let x = ctx.grid.coords[o + node];
                        let qb = ctx.boundary_state(x, t);
                        // Boundary data is validated again in finalize; an
                        // inadmissible value here would also fail there.
                        if let Ok(pb) = primitives(&qb, &ctx.gas) {
                            let wb = crate::gas::entropy_variables_from_prim(&pb, &ctx.gas);
                            let ws = &wvars[o + node];
                            for c in 0..NUM_FIELDS {
                                scratch.theta[node][dir][c] +=
                                    nu * ctx.inv_wend * (wb[c] - ws[c]);
                            }
                        }
                    }
                }
                FacePartner::None => {}
            }
        }
    }
}

/// Physical viscous flux vectors F^V_m from the physical gradient of the
/// entropy variables, via velocity/temperature gradient recovery:
/// ∂U_a/∂x_j = T(G_j[a+1] + U_a G_j[4]),  ∂T/∂x_j = T² G_j[4].
pub fn viscous_flux_physical(
    pr: &Primitives,
    gas: &GasModel,
    grad: &[State5; 3],
) -> [State5; 3] {
    let t = pr.t;
    let u = pr.u;
    let mut du = [[0.0_f64; 3]; 3]; // du[a][j] = ∂U_a/∂x_j
    let mut dt = [0.0_f64; 3];
    for j in 0..3 {
        for a in 0..3 {
            du[a][j] = t * (grad[j][a + 1] + u[a] * grad[j][4]);
        }
        dt[j] = t * t * grad[j][4];
    }
    let divu = du[0][0] + du[1][1] + du[2][2];
    let mu = gas.mu;
    let kappa = gas.kappa();
    let mut fv = [[0.0_f64; 5]; 3];
    for m in 0..3 {
        for j in 0..3 {
            let mut tau = mu * (du[m][j] + du[j][m]);
            if m == j {
                tau -= 2.0 / 3.0 * mu * divu;
            }
            fv[m][j + 1] = tau;
            fv[m][4] += tau * u[j];
        }
        fv[m][4] += kappa * dt[m];
    }
    fv
}

/// The 5×5 entropy-variable viscous coefficient block C_mj(Q), so that
/// F^V_m = Σ_j C_mj ∂W/∂x_j. Used by the oracle tests and the interior
/// penalty; the bulk viscous path uses [`viscous_flux_physical`] instead.
pub fn viscous_c_block(pr: &Primitives, gas: &GasModel, m: usize, j: usize) -> [[f64; 5]; 5] {
    let mu_t = gas.mu * pr.t;
    let kappa = gas.kappa();
    let u = pr.u;
    let usq = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let mut c = [[0.0; 5]; 5];
    for a in 0..3 {
        for b in 0..3 {
            c[a + 1][b + 1] =
                mu_t * (d(j, m) * d(a, b) + d(j, a) * d(m, b) - 2.0 / 3.0 * d(a, m) * d(j, b));
        }
        c[a + 1][4] = mu_t * (d(j, m) * u[a] + d(j, a) * u[m] - 2.0 / 3.0 * d(a, m) * u[j]);
        c[4][a + 1] = mu_t * (d(j, m) * u[a] + d(m, a) * u[j] - 2.0 / 3.0 * u[m] * d(j, a));
    }
    c[4][4] = mu_t * (d(j, m) * usq + u[j] * u[m] / 3.0) + d(j, m) * kappa * pr.t * pr.t;
    c
}

/// Contravariant viscous fluxes g_l = Σ_m Ja^l_m F^V_m for one element, from
/// the completed gradient stage.
fn viscous_fluxes_element(
    ctx: &RhsContext,
    e: usize,
    cache: &[NodeState],
    theta: &[[State5; 3]],
    g_block: &mut [[State5; 3]],
) {
    let npe = ctx.grid.nodes_per_element;
    let o = e * npe;
    let metrics = ctx.grid.element_metrics(e);
    let jac = ctx.grid.element_jacobian(e);
    for node in 0..npe {
        let inv_j = 1.0 / jac[node];
        // Physical gradient G_j = Σ_a (Ja^a_j / J) θ_a.
        let mut grad = [[0.0_f64; 5]; 3];
        for j in 0..3 {
            for a in 0..3 {
                let s = metrics[node][a][j] * inv_j;
                for c in 0..NUM_FIELDS {
                    grad[j][c] += s * theta[node][a][c];
                }
            }
        }
        let ns = &cache[o + node];
        let pr = Primitives {
            rho: ns.rho,
            u: ns.u,
            t: ns.t,
            p: ns.p,
            h: 0.0, // unused by the viscous flux
            e: ns.e,
        };
        let fv = viscous_flux_physical(&pr, &ctx.gas, &grad);
        for l in 0..3 {
            let mut gl = [0.0_f64; 5];
            for m in 0..3 {
                let s = metrics[node][l][m];
                for c in 1..NUM_FIELDS {
                    gl[c] += s * fv[m][c];
                }
            }
            g_block[node][l] = gl;
        }
    }
}

/// Local part of the viscous divergence: `J dQ/dt += Σ_l D_ξl g_l`.
fn viscous_divergence_element(
    ctx: &RhsContext,
    g_block: &[[State5; 3]],
    out_block: &mut [f64],
    scratch: &mut ElemScratch,
) {
    let npe = ctx.grid.nodes_per_element;
    for l in 0..3 {
        for c in 1..NUM_FIELDS {
            for node in 0..npe {
                scratch.comp[node] = g_block[node][l][c];
            }
            ctx.op.apply_derivative(l, &scratch.comp, &mut scratch.deriv);
            let row = &mut out_block[c * npe..(c + 1) * npe];
            for node in 0..npe {
                row[node] += scratch.deriv[node];
            }
        }
    }
}

/// Acoustic face wave speed: max over the two states of |U·N| + c‖N‖ with
/// the raw (non-unit) metric normal.
#[inline]
fn face_wave_speed(gas: &GasModel, a: &NodeState, b: &NodeState, n: &[f64; 3]) -> f64 {
    let nmag = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    let la = (a.u[0] * n[0] + a.u[1] * n[1] + a.u[2] * n[2]).abs() + gas.sound_speed(a.t) * nmag;
    let lb = (b.u[0] * n[0] + b.u[1] * n[1] + b.u[2] * n[2]).abs() + gas.sound_speed(b.t) * nmag;
    la.max(lb)
}

/// Entropy-scaled dissipation (λ/2)·c_diss·H̄·ΔW with H̄ = dQ/dW at the
/// conserved-variable average (admissible by convexity of the admissible set).
fn entropy_dissipation(
    gas: &GasModel,
    a: &NodeState,
    b: &NodeState,
    dw: &State5,
    lambda_half_cdiss: f64,
) -> std::result::Result<State5, &'static str> {
    let q_avg = [
        0.5 * (a.rho + b.rho),
        0.5 * (a.rho * a.u[0] + b.rho * b.u[0]),
        0.5 * (a.rho * a.u[1] + b.rho * b.u[1]),
        0.5 * (a.rho * a.u[2] + b.rho * b.u[2]),
        0.5 * (a.rho * a.e + b.rho * b.e),
    ];
    let pr = primitives(&q_avg, gas).map_err(|e| e.what)?;
    let hv = dq_dw_mul(&pr, gas, dw);
    Ok([
        lambda_half_cdiss * hv[0],
        lambda_half_cdiss * hv[1],
        lambda_half_cdiss * hv[2],
        lambda_half_cdiss * hv[3],
        lambda_half_cdiss * hv[4],
    ])
}

/// Interior-penalty vector (C̃_nn(Q̄)/J̄)·ΔW with C̃_nn = Σ_{m,j} N_m C_mj N_j,
/// the normal viscous coefficient matrix (symmetric positive semidefinite).
fn interior_penalty(
    gas: &GasModel,
    a: &NodeState,
    b: &NodeState,
    n: &[f64; 3],
    dw: &State5,
    coeff: f64,
) -> std::result::Result<State5, &'static str> {
    let pr_avg = average_primitives(gas, a, b)?;
    // C̃ ΔW without materializing the 15×15 matrix: treat ΔW as a gradient
    // that is purely normal, G_j = N_j·ΔW, then contract the resulting
    // physical flux with N again.
    let grad = [
        [n[0] * dw[0], n[0] * dw[1], n[0] * dw[2], n[0] * dw[3], n[0] * dw[4]],
        [n[1] * dw[0], n[1] * dw[1], n[1] * dw[2], n[1] * dw[3], n[1] * dw[4]],
        [n[2] * dw[0], n[2] * dw[1], n[2] * dw[2], n[2] * dw[3], n[2] * dw[4]],
    ];
    let fv = viscous_flux_physical(&pr_avg, gas, &grad);
    let mut out = [0.0_f64; 5];
    for m in 0..3 {
        for c in 1..NUM_FIELDS {
            out[c] += coeff * n[m] * fv[m][c];
        }
    }
    Ok(out)
}

fn average_primitives(
    gas: &GasModel,
    a: &NodeState,
    b: &NodeState,
) -> std::result::Result<Primitives, &'static str> {
    let q_avg = [
        0.5 * (a.rho + b.rho),
        0.5 * (a.rho * a.u[0] + b.rho * b.u[0]),
        0.5 * (a.rho * a.u[1] + b.rho * b.u[1]),
        0.5 * (a.rho * a.u[2] + b.rho * b.u[2]),
        0.5 * (a.rho * a.e + b.rho * b.e),
    ];
    primitives(&q_avg, gas).map_err(|e| e.what)
}

/// Phase 3: coupling contributions of one interface for both sides.
fn interface_contributions(
    ctx: &RhsContext,
    t: f64,
    idx: usize,
    cache: &[NodeState],
    wvars: &[State5],
    g: &[[State5; 3]],
    bufs: &mut [Vec<State5>; 2],
) -> std::result::Result<(), BlowUp> {
    let iface = ctx.grid.interfaces[idx];
    let npe = ctx.grid.nodes_per_element;
    let ol = iface.left * npe;
    let orr = iface.right * npe;
    let fl = &ctx.face_nodes[iface.dir][1];
    let fr = &ctx.face_nodes[iface.dir][0];
    let gas = &ctx.gas;
    let scheme = ctx.opts.scheme;
    let inv_wend = ctx.inv_wend;

    for fid in 0..fl.len() {
        let i = ol + fl[fid];
        let j = orr + fr[fid];
        let nl = &cache[i];
        let nr = &cache[j];
        // Face-shared outward normal of the left element.
        let nvec = ctx.grid.metrics[i][iface.dir];
        let mut f_star = two_point(scheme, nl, nr, &nvec, gas);
        if ctx.opts.dissipation && ctx.opts.c_diss > 0.0 {
            let dw = [
                wvars[i][0] - wvars[j][0],
                wvars[i][1] - wvars[j][1],
                wvars[i][2] - wvars[j][2],
                wvars[i][3] - wvars[j][3],
                wvars[i][4] - wvars[j][4],
            ];
            let lam = face_wave_speed(gas, nl, nr, &nvec);
            let diss =
                entropy_dissipation(gas, nl, nr, &dw, 0.5 * lam * ctx.opts.c_diss).map_err(
                    |what| BlowUp { time: t, elem: iface.left, node: fl[fid], what },
                )?;
            for c in 0..NUM_FIELDS {
                f_star[c] += diss[c];
            }
        }
        let f_self_l = pointwise_contracted(nl, &nvec);
        let f_self_r = pointwise_contracted(nr, &nvec);
        let mut left = [0.0_f64; 5];
        let mut right = [0.0_f64; 5];
        for c in 0..NUM_FIELDS {
            left[c] = -inv_wend * (f_star[c] - f_self_l[c]);
            right[c] = inv_wend * (f_star[c] - f_self_r[c]);
        }

        if ctx.opts.viscous {
            // Complementary one-sided viscous flux: trace from the positive
            // (left) side, applied on the negative (right) side.
            for c in 1..NUM_FIELDS {
                right[c] -= inv_wend * (g[i][iface.dir][c] - g[j][iface.dir][c]);
            }
            // Interior penalty, symmetric across the face so the viscous
            // terms stay conservative.
            let dw = [
                wvars[i][0] - wvars[j][0],
                wvars[i][1] - wvars[j][1],
                wvars[i][2] - wvars[j][2],
                wvars[i][3] - wvars[j][3],
                wvars[i][4] - wvars[j][4],
            ];
            let j_avg = 0.5 * (ctx.grid.jacobian[i] + ctx.grid.jacobian[j]);
            let ip = interior_penalty(gas, nl, nr, &nvec, &dw, ctx.c_ip / j_avg).map_err(
                |what| BlowUp { time: t, elem: iface.left, node: fl[fid], what },
            )?;
            for c in 1..NUM_FIELDS {
                left[c] -= inv_wend * ip[c];
                right[c] += inv_wend * ip[c];
            }
        }
        bufs[0][fid] = left;
        bufs[1][fid] = right;
    }
    Ok(())
}

/// Phase 4: pull in face buffers and Dirichlet SATs, divide by J, add source.
#[allow(clippy::too_many_arguments)]
fn finalize_element(
    ctx: &RhsContext,
    t: f64,
    e: usize,
    cache: &[NodeState],
    wvars: &[State5],
    bufs: &[[Vec<State5>; 2]],
    out_block: &mut [f64],
) -> std::result::Result<(), BlowUp> {
    let npe = ctx.grid.nodes_per_element;
    let o = e * npe;
    let gas = &ctx.gas;

    for &(idx, side) in &ctx.elem_ifaces[e] {
        let iface = ctx.grid.interfaces[idx as usize];
        let face = &ctx.face_nodes[iface.dir][if side == 0 { 1 } else { 0 }];
        let buf = &bufs[idx as usize][side as usize];
        for (fid, &node) in face.iter().enumerate() {
            block_add_node(out_block, npe, node, &buf[fid]);
        }
    }

    for &bidx in &ctx.elem_bfaces[e] {
        let bf = ctx.grid.boundaries[bidx as usize];
        let face = &ctx.face_nodes[bf.dir][bf.side];
        for &node in face.iter() {
            let x = ctx.grid.coords[o + node];
            let qb = ctx.boundary_state(x, t);
            let pb = primitives(&qb, gas).map_err(|err| BlowUp {
                time: t,
                elem: e,
                node,
                what: err.what,
            })?;
            let nb = NodeState::from_primitives(&pb);
            let wb = crate::gas::entropy_variables_from_prim(&pb, gas);
            let ns = &cache[o + node];
            let nvec = ctx.grid.outward_normal(e, node, bf.dir, bf.side);
            let f_star = two_point(ctx.opts.scheme, ns, &nb, &nvec, gas);
            // Dissipation is always active at Dirichlet faces: the weak
            // imposition relies on the upwind part to pull the interior
            // toward the data.
            let dw = [
                wvars[o + node][0] - wb[0],
                wvars[o + node][1] - wb[1],
                wvars[o + node][2] - wb[2],
                wvars[o + node][3] - wb[3],
                wvars[o + node][4] - wb[4],
            ];
            let lam = face_wave_speed(gas, ns, &nb, &nvec);
            let c_diss = if ctx.opts.c_diss > 0.0 { ctx.opts.c_diss } else { 1.0 };
            let diss = entropy_dissipation(gas, ns, &nb, &dw, 0.5 * lam * c_diss)
                .map_err(|what| BlowUp { time: t, elem: e, node, what })?;
            let f_self = pointwise_contracted(ns, &nvec);
            let mut contrib = [0.0_f64; 5];
            for c in 0..NUM_FIELDS {
                contrib[c] = -ctx.inv_wend * (f_star[c] + diss[c] - f_self[c]);
            }
            if ctx.opts.viscous {
                // Flux stage uses the interior trace (no jump); the penalty
                // still acts on the data mismatch.
                let ip = interior_penalty(
                    gas,
                    ns,
                    &nb,
                    &nvec,
                    &dw,
                    ctx.c_ip / ctx.grid.jacobian[o + node],
                )
                .map_err(|what| BlowUp { time: t, elem: e, node, what })?;
                for c in 1..NUM_FIELDS {
                    contrib[c] -= ctx.inv_wend * ip[c];
                }
            }
            block_add_node(out_block, npe, node, &contrib);
        }
    }

    // J dQ/dt → dQ/dt, then the volume source.
    let jac = ctx.grid.element_jacobian(e);
    for c in 0..NUM_FIELDS {
        let row = &mut out_block[c * npe..(c + 1) * npe];
        for node in 0..npe {
            row[node] /= jac[node];
        }
    }
    if let Some(src) = &ctx.source {
        for node in 0..npe {
            let s = src(ctx.grid.coords[o + node], t);
            block_add_node(out_block, npe, node, &s);
        }
    }
    Ok(())
}
