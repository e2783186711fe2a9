//! Multi-element tensor-product grids with curvilinear metric terms.
//!
//! Elements are images of the reference cube [−1,1]³ under a degree-p
//! polynomial mapping collocated at the LGL nodes. The nine metric terms
//! `Ja^l_m = J ∂ξ_l/∂x_m` are computed in conservative curl form,
//!
//! ```text
//! Ja^i_n = −ê_i · ∇_ξ × (X_l ∇_ξ X_m),   (n, m, l) cyclic,
//! ```
//!
//! with every derivative taken by the discrete tensor-product operator.
//! Because the Kronecker derivative matrices commute across directions, the
//! discrete divergence of each metric row telescopes to zero exactly:
//! the free-stream (GCL) residual `Σ_l D_ξl Ja^l_m` is roundoff, not
//! truncation. Computing the same metrics by inverting the nodal deformation
//! gradient ("naive" metrics) leaves an O(h^p) residual — kept here as
//! [`naive_metrics`] for the negative-control test.
//!
//! Interfaces are conforming with collocated face nodes, so the matched-node
//! permutation is the identity in the two tangential directions; face
//! normals are read directly from the metric rows restricted to the face.

use crate::sbp::{SbpOperator1D, TensorOperator};
use crate::{Error, Result};

/// Axis-aligned box domain.
#[derive(Debug, Clone, Copy)]
pub struct Box3 {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Box3 {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Self {
        Box3 { lo, hi }
    }

    pub fn cube(lo: f64, hi: f64) -> Self {
        Box3 { lo: [lo; 3], hi: [hi; 3] }
    }

    pub fn lengths(&self) -> [f64; 3] {
        [
            self.hi[0] - self.lo[0],
            self.hi[1] - self.lo[1],
            self.hi[2] - self.lo[2],
        ]
    }

    pub fn volume(&self) -> f64 {
        let l = self.lengths();
        l[0] * l[1] * l[2]
    }
}

/// Constant diagonal metric data of an axis-aligned affine element; the hot
/// kernels specialize on this instead of reading nine nodal metric terms.
#[derive(Debug, Clone, Copy)]
pub struct AffineElement {
    /// Ja^l_l (the off-diagonal terms are exactly zero).
    pub ja_diag: [f64; 3],
    pub jacobian: f64,
}

/// A conforming interior face shared by two elements: the ξ_dir = +1 face of
/// `left` glued to the ξ_dir = −1 face of `right` with identity node
/// matching in the tangential directions.
#[derive(Debug, Clone, Copy)]
pub struct Interface {
    pub left: usize,
    pub right: usize,
    pub dir: usize,
}

/// A domain-boundary face (only present on non-periodic grids).
#[derive(Debug, Clone, Copy)]
pub struct BoundaryFace {
    pub elem: usize,
    pub dir: usize,
    /// 0 → the ξ_dir = −1 face, 1 → the ξ_dir = +1 face.
    pub side: usize,
}

/// Immutable grid: node coordinates, metric terms, and face topology.
#[derive(Debug, Clone)]
pub struct Grid {
    pub domain: Box3,
    /// Elements per direction.
    pub k: [usize; 3],
    /// Nodes per direction within an element (p + 1).
    pub n: usize,
    pub num_elements: usize,
    pub nodes_per_element: usize,
    /// Physical coordinates, indexed `[elem * nodes_per_element + node]`.
    pub coords: Vec<[f64; 3]>,
    /// Nodal Jacobian determinant of the mapping.
    pub jacobian: Vec<f64>,
    /// Nodal metric terms `ja[l][m] = Ja^l_m`.
    pub metrics: Vec<[[f64; 3]; 3]>,
    /// Per-element affine fast path (None for curved elements).
    pub affine: Vec<Option<AffineElement>>,
    pub interfaces: Vec<Interface>,
    pub boundaries: Vec<BoundaryFace>,
    pub periodic: bool,
}

impl Grid {
    #[inline]
    pub fn node_offset(&self, elem: usize) -> usize {
        elem * self.nodes_per_element
    }

    pub fn element_coords(&self, elem: usize) -> &[[f64; 3]] {
        let o = self.node_offset(elem);
        &self.coords[o..o + self.nodes_per_element]
    }

    pub fn element_jacobian(&self, elem: usize) -> &[f64] {
        let o = self.node_offset(elem);
        &self.jacobian[o..o + self.nodes_per_element]
    }

    pub fn element_metrics(&self, elem: usize) -> &[[[f64; 3]; 3]] {
        let o = self.node_offset(elem);
        &self.metrics[o..o + self.nodes_per_element]
    }

    /// Element index from its (e₁, e₂, e₃) lattice position.
    pub fn element_index(&self, e: [usize; 3]) -> usize {
        (e[0] * self.k[1] + e[1]) * self.k[2] + e[2]
    }

    /// Outward metric normal (non-unit) at a node of an element face.
    pub fn outward_normal(&self, elem: usize, node: usize, dir: usize, side: usize) -> [f64; 3] {
        let sign = if side == 1 { 1.0 } else { -1.0 };
        let ja = &self.metrics[self.node_offset(elem) + node];
        [sign * ja[dir][0], sign * ja[dir][1], sign * ja[dir][2]]
    }

    pub fn min_jacobian(&self) -> f64 {
        self.jacobian.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// One-paragraph text summary for logs.
    pub fn summary(&self, op: &TensorOperator) -> String {
        let gcl = gcl_residual(self, op);
        let max_gcl = gcl
            .iter()
            .flat_map(|r| r.iter().cloned())
            .fold(0.0_f64, f64::max);
        format!(
            "grid: {}x{}x{} elements, p={} ({} nodes/dir), {} interfaces, {} boundary faces, min J = {:.3e}, max GCL residual = {:.3e}",
            self.k[0],
            self.k[1],
            self.k[2],
            op.op_1d().degree(),
            self.n,
            self.interfaces.len(),
            self.boundaries.len(),
            self.min_jacobian(),
            max_gcl
        )
    }
}

/// Node indices of an element face, ordered by the two tangential directions
/// (lower direction index outer, higher inner). Matched interface faces list
/// physically coincident nodes at equal positions.
pub fn face_node_indices(n: usize, dir: usize, side: usize) -> Vec<usize> {
    let (t1, t2) = match dir {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let fixed = if side == 1 { n - 1 } else { 0 };
    let mut out = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            let mut idx = [0usize; 3];
            idx[dir] = fixed;
            idx[t1] = a;
            idx[t2] = b;
            out.push((idx[0] * n + idx[1]) * n + idx[2]);
        }
    }
    out
}

/// Cartesian grid of axis-aligned affine elements: exact constant diagonal
/// metrics, zero GCL residual by construction.
pub fn build_cartesian(
    domain: Box3,
    k: [usize; 3],
    op: &TensorOperator,
    periodic: bool,
) -> Result<Grid> {
    check_build_args(&domain, &k)?;
    let n = op.op_1d().num_nodes();
    let npe = op.nodes_per_element();
    let lengths = domain.lengths();
    let h = [
        lengths[0] / k[0] as f64,
        lengths[1] / k[1] as f64,
        lengths[2] / k[2] as f64,
    ];
    let half = [0.5 * h[0], 0.5 * h[1], 0.5 * h[2]];
    let jac = half[0] * half[1] * half[2];
    let ja_diag = [half[1] * half[2], half[0] * half[2], half[0] * half[1]];

    let num_elements = k[0] * k[1] * k[2];
    let mut coords = Vec::with_capacity(num_elements * npe);
    let xi = op.op_1d().nodes();
    for e0 in 0..k[0] {
        for e1 in 0..k[1] {
            for e2 in 0..k[2] {
                let lo = [
                    domain.lo[0] + e0 as f64 * h[0],
                    domain.lo[1] + e1 as f64 * h[1],
                    domain.lo[2] + e2 as f64 * h[2],
                ];
                for i0 in 0..n {
                    for i1 in 0..n {
                        for i2 in 0..n {
                            coords.push([
                                lo[0] + half[0] * (xi[i0] + 1.0),
                                lo[1] + half[1] * (xi[i1] + 1.0),
                                lo[2] + half[2] * (xi[i2] + 1.0),
                            ]);
                        }
                    }
                }
            }
        }
    }

    let mut metrics = vec![[[0.0; 3]; 3]; num_elements * npe];
    for m in metrics.iter_mut() {
        for l in 0..3 {
            m[l][l] = ja_diag[l];
        }
    }
    let grid = Grid {
        domain,
        k,
        n,
        num_elements,
        nodes_per_element: npe,
        coords,
        jacobian: vec![jac; num_elements * npe],
        metrics,
        affine: vec![Some(AffineElement { ja_diag, jacobian: jac }); num_elements],
        interfaces: Vec::new(),
        boundaries: Vec::new(),
        periodic,
    };
    Ok(with_topology(grid))
}

/// Curved grid: the Cartesian node lattice displaced by a smooth sinusoidal
/// warp that is 1-periodic in the normalized coordinates (so shared and
/// periodic-wrapped faces receive bitwise-identical coordinates), then
/// equipped with curl-form metrics from the per-element degree-p interpolant.
///
/// The warp displaces component m by
/// `amplitude · f_m · L_m · sin(2πη₁) sin(2πη₂) sin(2πη₃)` with
/// `f = (1.0, 0.8, 0.6)` and η the position normalized to [0,1]³; it vanishes
/// on the domain boundary, so boundary faces stay flat.
pub fn build_warped(
    domain: Box3,
    k: [usize; 3],
    op: &TensorOperator,
    amplitude: f64,
    periodic: bool,
) -> Result<Grid> {
    let mut grid = build_cartesian(domain, k, op, periodic)?;
    if amplitude != 0.0 {
        let lengths = domain.lengths();
        let factors = [1.0, 0.8, 0.6];
        let tau = 2.0 * std::f64::consts::PI;
        for x in grid.coords.iter_mut() {
            let eta = [
                (x[0] - domain.lo[0]) / lengths[0],
                (x[1] - domain.lo[1]) / lengths[1],
                (x[2] - domain.lo[2]) / lengths[2],
            ];
            let s = (tau * eta[0]).sin() * (tau * eta[1]).sin() * (tau * eta[2]).sin();
            for m in 0..3 {
                x[m] += amplitude * factors[m] * lengths[m] * s;
            }
        }
    }
    curl_form_metrics(&mut grid, op)?;
    grid.affine = vec![None; grid.num_elements];
    Ok(grid)
}

fn check_build_args(domain: &Box3, k: &[usize; 3]) -> Result<()> {
    for d in 0..3 {
        if !(domain.hi[d] > domain.lo[d]) {
            return Err(Error::Mesh(format!(
                "degenerate domain in direction {d}: [{}, {}]",
                domain.lo[d], domain.hi[d]
            )));
        }
        if k[d] < 1 {
            return Err(Error::Mesh(format!("need at least one element in direction {d}")));
        }
    }
    Ok(())
}

/// Recompute `jacobian` and `metrics` from the current `coords` using the
/// conservative curl form. Fails if the discrete Jacobian loses positivity.
fn curl_form_metrics(grid: &mut Grid, op: &TensorOperator) -> Result<()> {
    let npe = grid.nodes_per_element;
    let mut dx = vec![[[0.0_f64; 3]; 3]; npe]; // dx[node][k][l] = ∂x_k/∂ξ_l
    let mut comp = vec![0.0_f64; npe];
    let mut deriv = vec![0.0_f64; npe];
    let mut v = vec![[0.0_f64; 3]; npe];
    let mut curl_piece = vec![0.0_f64; npe];

    for elem in 0..grid.num_elements {
        let o = grid.node_offset(elem);
        // Deformation gradient of the collocated mapping.
        for kc in 0..3 {
            for (node, c) in comp.iter_mut().enumerate() {
                *c = grid.coords[o + node][kc];
            }
            for l in 0..3 {
                op.apply_derivative(l, &comp, &mut deriv);
                for node in 0..npe {
                    dx[node][kc][l] = deriv[node];
                }
            }
        }
        for (node, d) in dx.iter().enumerate() {
            let det = d[0][0] * (d[1][1] * d[2][2] - d[1][2] * d[2][1])
                - d[0][1] * (d[1][0] * d[2][2] - d[1][2] * d[2][0])
                + d[0][2] * (d[1][0] * d[2][1] - d[1][1] * d[2][0]);
            if !(det > 0.0) {
                let x = grid.coords[o + node];
                return Err(Error::Mesh(format!(
                    "mapping Jacobian {det:.3e} ≤ 0 at node ({:.4}, {:.4}, {:.4}) of element {elem}; reduce the warp amplitude",
                    x[0], x[1], x[2]
                )));
            }
            grid.jacobian[o + node] = det;
        }
        // Curl-form metric rows: Ja^i_n = −ê_i · ∇_ξ × (X_l ∇_ξ X_m).
        for nrow in 0..3 {
            let m = (nrow + 1) % 3;
            let l = (nrow + 2) % 3;
            for node in 0..npe {
                let xl = grid.coords[o + node][l];
                for kc in 0..3 {
                    v[node][kc] = xl * dx[node][m][kc];
                }
            }
            for i in 0..3 {
                let j1 = (i + 1) % 3;
                let j2 = (i + 2) % 3;
                // (∇×v)_i = ∂_{j1} v_{j2} − ∂_{j2} v_{j1}
                for (node, c) in comp.iter_mut().enumerate() {
                    *c = v[node][j2];
                }
                op.apply_derivative(j1, &comp, &mut curl_piece);
                for (node, c) in comp.iter_mut().enumerate() {
                    *c = v[node][j1];
                }
                op.apply_derivative(j2, &comp, &mut deriv);
                for node in 0..npe {
                    grid.metrics[o + node][i][nrow] = -(curl_piece[node] - deriv[node]);
                }
            }
        }
    }
    Ok(())
}

/// Metric terms of the sine warp evaluated pointwise-exactly: the analytic
/// deformation gradient at every node, inverted via its cofactor matrix
/// (`Ja^l_m = J (∂x/∂ξ)⁻ᵀ`). These are the metrics a straightforward
/// implementation would use. They satisfy the metric identities in exact
/// arithmetic but are *not* discretely divergence-free under the collocation
/// derivative — the negative control for the curl-form construction.
///
/// `amplitude` must match the value the warped grid was built with.
pub fn naive_metrics(grid: &Grid, op: &TensorOperator, amplitude: f64) -> Vec<[[f64; 3]; 3]> {
    let npe = grid.nodes_per_element;
    let lengths = grid.domain.lengths();
    let h = [
        lengths[0] / grid.k[0] as f64,
        lengths[1] / grid.k[1] as f64,
        lengths[2] / grid.k[2] as f64,
    ];
    let factors = [1.0, 0.8, 0.6];
    let tau = 2.0 * std::f64::consts::PI;
    let mut out = vec![[[0.0; 3]; 3]; grid.num_elements * npe];
    for e0 in 0..grid.k[0] {
        for e1 in 0..grid.k[1] {
            for e2 in 0..grid.k[2] {
                let e = [e0, e1, e2];
                let o = grid.node_offset(grid.element_index(e));
                for node in 0..npe {
                    let (i1, i2, i3) = op.node_tuple(node);
                    let mut eta = [0.0_f64; 3];
                    let mut sin_eta = [0.0_f64; 3];
                    let mut cos_eta = [0.0_f64; 3];
                    for l in 0..3 {
                        let i = [i1, i2, i3][l];
                        let xi = op.op_1d().nodes()[i];
                        eta[l] = (e[l] as f64 + 0.5 * (1.0 + xi)) / grid.k[l] as f64;
                        sin_eta[l] = (tau * eta[l]).sin();
                        cos_eta[l] = (tau * eta[l]).cos();
                    }
                    // ∂x_m/∂ξ_l of x_m = x_cart,m(ξ_m) + A f_m L_m Π_d sin(2πη_d),
                    // with dη_l/dξ_l = h_l / (2 L_l).
                    let mut d = [[0.0_f64; 3]; 3];
                    for m in 0..3 {
                        for l in 0..3 {
                            let mut v = if m == l { 0.5 * h[m] } else { 0.0 };
                            let mut ds = tau * (0.5 * h[l] / lengths[l]) * cos_eta[l];
                            for dd in 0..3 {
                                if dd != l {
                                    ds *= sin_eta[dd];
                                }
                            }
                            v += amplitude * factors[m] * lengths[m] * ds;
                            d[m][l] = v;
                        }
                    }
                    // J (∂ξ_l/∂x_m) = cofactor matrix of ∂x/∂ξ, transposed.
                    let cof = |a: usize, b: usize| -> f64 {
                        let r = [(a + 1) % 3, (a + 2) % 3];
                        let c = [(b + 1) % 3, (b + 2) % 3];
                        d[r[0]][c[0]] * d[r[1]][c[1]] - d[r[0]][c[1]] * d[r[1]][c[0]]
                    };
                    for l in 0..3 {
                        for m in 0..3 {
                            out[o + node][l][m] = cof(m, l);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Per-element, per-direction max-abs free-stream residual
/// `max_nodes |Σ_l D_ξl Ja^l_m|`.
pub fn gcl_residual(grid: &Grid, op: &TensorOperator) -> Vec<[f64; 3]> {
    gcl_residual_of(grid, op, &grid.metrics)
}

/// As [`gcl_residual`] for an externally supplied metric array (used to show
/// the naive metrics fail).
pub fn gcl_residual_of(
    grid: &Grid,
    op: &TensorOperator,
    metrics: &[[[f64; 3]; 3]],
) -> Vec<[f64; 3]> {
    let npe = grid.nodes_per_element;
    let mut out = vec![[0.0; 3]; grid.num_elements];
    let mut comp = vec![0.0_f64; npe];
    let mut deriv = vec![0.0_f64; npe];
    let mut acc = vec![0.0_f64; npe];
    for elem in 0..grid.num_elements {
        let o = grid.node_offset(elem);
        for m in 0..3 {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for l in 0..3 {
                for (node, c) in comp.iter_mut().enumerate() {
                    *c = metrics[o + node][l][m];
                }
                op.apply_derivative(l, &comp, &mut deriv);
                for node in 0..npe {
                    acc[node] += deriv[node];
                }
            }
            out[elem][m] = acc.iter().fold(0.0_f64, |r, a| r.max(a.abs()));
        }
    }
    out
}

/// Populate interface and boundary lists for the structured element lattice.
fn with_topology(mut grid: Grid) -> Grid {
    let k = grid.k;
    let mut interfaces = Vec::new();
    let mut boundaries = Vec::new();
    for e0 in 0..k[0] {
        for e1 in 0..k[1] {
            for e2 in 0..k[2] {
                let e = [e0, e1, e2];
                let left = grid.element_index(e);
                for dir in 0..3 {
                    if e[dir] + 1 < k[dir] {
                        let mut en = e;
                        en[dir] += 1;
                        interfaces.push(Interface { left, right: grid.element_index(en), dir });
                    } else if grid.periodic {
                        let mut en = e;
                        en[dir] = 0;
                        interfaces.push(Interface { left, right: grid.element_index(en), dir });
                    } else {
                        boundaries.push(BoundaryFace { elem: left, dir, side: 1 });
                    }
                    if e[dir] == 0 && !grid.periodic {
                        boundaries.push(BoundaryFace { elem: left, dir, side: 0 });
                    }
                }
            }
        }
    }
    grid.interfaces = interfaces;
    grid.boundaries = boundaries;
    grid
}

/// 1D-weight product attached to a face node (the face quadrature weight).
/// Face nodes are ordered by [`face_node_indices`], so the two tangential
/// node indices are `face_node / n` and `face_node % n` for every direction.
pub fn face_weight(op: &SbpOperator1D, face_node: usize) -> f64 {
    let n = op.num_nodes();
    op.weights()[face_node / n] * op.weights()[face_node % n]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sbp::TensorOperator;

    fn tensor_op(p: usize) -> TensorOperator {
        TensorOperator::new(SbpOperator1D::build_lgl(p).unwrap())
    }

    #[test]
    fn cartesian_jacobian_matches_affine_scaling() {
        // Ω = [0,10]³ with 2 elements per direction: h = 5 and J = (5/2)³.
        let op = tensor_op(1);
        let grid = build_cartesian(Box3::cube(0.0, 10.0), [2; 3], &op, true).unwrap();
        for &j in &grid.jacobian {
            assert!((j - 15.625).abs() < 1e-13);
        }
    }

    #[test]
    fn quadrature_recovers_domain_volume() {
        let op = tensor_op(3);
        let grid = build_cartesian(
            Box3::new([0.0, -1.0, 2.0], [10.0, 3.0, 5.0]),
            [2, 3, 1],
            &op,
            true,
        )
        .unwrap();
        let mut vol = 0.0;
        for elem in 0..grid.num_elements {
            let o = grid.node_offset(elem);
            for node in 0..grid.nodes_per_element {
                vol += op.mass_weight(node) * grid.jacobian[o + node];
            }
        }
        assert!((vol - grid.domain.volume()).abs() < 1e-10 * grid.domain.volume());
    }

    #[test]
    fn periodic_grid_has_no_boundary_faces() {
        let op = tensor_op(2);
        let pi = std::f64::consts::PI;
        let grid = build_cartesian(Box3::cube(-pi, pi), [3; 3], &op, true).unwrap();
        assert!(grid.boundaries.is_empty());
        assert_eq!(grid.interfaces.len(), 3 * grid.num_elements);
    }

    #[test]
    fn dirichlet_grid_face_budget() {
        // Every face is either one interface or one boundary face:
        // 3K³ + ... for K per direction: interfaces 3K²(K−1), boundaries 6K².
        let op = tensor_op(1);
        let grid = build_cartesian(Box3::cube(0.0, 1.0), [3; 3], &op, false).unwrap();
        assert_eq!(grid.interfaces.len(), 3 * 9 * 2);
        assert_eq!(grid.boundaries.len(), 6 * 9);
    }

    #[test]
    fn degenerate_domain_is_rejected() {
        let op = tensor_op(1);
        assert!(build_cartesian(Box3::cube(1.0, 1.0), [2; 3], &op, true).is_err());
    }

    #[test]
    fn gcl_residual_vanishes_on_affine_grids() {
        let op = tensor_op(4);
        let grid = build_cartesian(Box3::cube(0.0, 10.0), [2; 3], &op, true).unwrap();
        for r in gcl_residual(&grid, &op) {
            for m in 0..3 {
                assert!(r[m] <= 1e-14);
            }
        }
    }

    #[test]
    fn zero_amplitude_warp_reproduces_cartesian_metrics() {
        let op = tensor_op(3);
        let cart = build_cartesian(Box3::cube(0.0, 2.0), [2; 3], &op, true).unwrap();
        let warp = build_warped(Box3::cube(0.0, 2.0), [2; 3], &op, 0.0, true).unwrap();
        for i in 0..cart.coords.len() {
            for m in 0..3 {
                assert!((cart.coords[i][m] - warp.coords[i][m]).abs() < 1e-14);
            }
            assert!((cart.jacobian[i] - warp.jacobian[i]).abs() < 1e-14 * cart.jacobian[i]);
            for l in 0..3 {
                for m in 0..3 {
                    assert!((cart.metrics[i][l][m] - warp.metrics[i][l][m]).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn warped_grid_satisfies_discrete_gcl() {
        let op = tensor_op(4);
        let grid = build_warped(Box3::cube(0.0, 2.0), [2; 3], &op, 0.08, true).unwrap();
        assert!(grid.min_jacobian() > 0.0);
        let scale = grid.jacobian.iter().cloned().fold(0.0_f64, f64::max);
        for r in gcl_residual(&grid, &op) {
            for m in 0..3 {
                assert!(r[m] <= 1e-12 * scale.max(1.0), "residual {:e}", r[m]);
            }
        }
    }

    #[test]
    fn naive_metrics_fail_discrete_gcl() {
        // Negative control: pointwise-exact cofactor metrics on a warped p=2
        // grid leave a truncation-level free-stream residual. Three elements
        // per direction so the p=2 nodes avoid the roots/extrema of the sine,
        // where symmetric samples can cancel accidentally.
        let op = tensor_op(2);
        let grid = build_warped(Box3::cube(0.0, 2.0), [3; 3], &op, 0.08, true).unwrap();
        let naive = naive_metrics(&grid, &op, 0.08);
        let worst = gcl_residual_of(&grid, &op, &naive)
            .iter()
            .flat_map(|r| r.iter().cloned())
            .fold(0.0_f64, f64::max);
        assert!(worst > 1e-6, "naive metrics unexpectedly clean: {worst:e}");
    }

    #[test]
    fn curl_and_naive_metrics_agree_where_both_converge() {
        // Sanity on the curl construction: for a well-resolved warp the two
        // constructions approximate the same analytic metrics. Three elements
        // per direction keep the per-element phase change of the warp small
        // enough for spectral accuracy at p=7.
        let op = tensor_op(7);
        let grid = build_warped(Box3::cube(0.0, 2.0), [3; 3], &op, 0.01, true).unwrap();
        let naive = naive_metrics(&grid, &op, 0.01);
        let mut max_rel = 0.0_f64;
        let scale = grid.jacobian.iter().cloned().fold(0.0_f64, f64::max);
        for i in 0..grid.metrics.len() {
            for l in 0..3 {
                for m in 0..3 {
                    max_rel = max_rel.max((grid.metrics[i][l][m] - naive[i][l][m]).abs() / scale);
                }
            }
        }
        assert!(max_rel < 1e-4, "curl vs naive disagree: {max_rel:e}");
    }

    #[test]
    fn excessive_warp_amplitude_is_rejected() {
        let op = tensor_op(4);
        let err = build_warped(Box3::cube(0.0, 2.0), [2; 3], &op, 0.5, true);
        assert!(err.is_err());
    }

    #[test]
    fn interface_nodes_are_watertight() {
        let op = tensor_op(3);
        for grid in [
            build_cartesian(Box3::cube(0.0, 10.0), [2, 3, 2], &op, true).unwrap(),
            build_warped(Box3::cube(0.0, 2.0), [2; 3], &op, 0.08, true).unwrap(),
        ] {
            let n = grid.n;
            for iface in &grid.interfaces {
                let fl = face_node_indices(n, iface.dir, 1);
                let fr = face_node_indices(n, iface.dir, 0);
                // Periodic wraps shift by one domain length in iface.dir.
                let mut e = [0usize; 3];
                let el = iface.left;
                e[2] = el % grid.k[2];
                e[1] = (el / grid.k[2]) % grid.k[1];
                e[0] = el / (grid.k[1] * grid.k[2]);
                let wrap = e[iface.dir] + 1 == grid.k[iface.dir];
                let shift = if wrap { grid.domain.lengths()[iface.dir] } else { 0.0 };
                for (a, b) in fl.iter().zip(fr.iter()) {
                    let xl = grid.coords[grid.node_offset(iface.left) + a];
                    let mut xr = grid.coords[grid.node_offset(iface.right) + b];
                    xr[iface.dir] += shift;
                    for m in 0..3 {
                        assert!(
                            (xl[m] - xr[m]).abs() < 1e-12,
                            "face mismatch {:?} vs {:?}",
                            xl,
                            xr
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn interface_normals_are_equal_and_opposite() {
        let op = tensor_op(3);
        let grid = build_warped(Box3::cube(0.0, 2.0), [2; 3], &op, 0.08, true).unwrap();
        let n = grid.n;
        for iface in &grid.interfaces {
            let fl = face_node_indices(n, iface.dir, 1);
            let fr = face_node_indices(n, iface.dir, 0);
            for (a, b) in fl.iter().zip(fr.iter()) {
                let nl = grid.outward_normal(iface.left, *a, iface.dir, 1);
                let nr = grid.outward_normal(iface.right, *b, iface.dir, 0);
                let scale = nl.iter().fold(0.0_f64, |r, v| r.max(v.abs())).max(1.0);
                for m in 0..3 {
                    assert!(
                        (nl[m] + nr[m]).abs() < 1e-12 * scale,
                        "normals not opposite: {nl:?} vs {nr:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn warped_boundary_faces_stay_flat() {
        // The warp vanishes on the domain boundary, keeping Dirichlet faces
        // on the box surface.
        let op = tensor_op(4);
        let grid = build_warped(Box3::cube(0.0, 2.0), [2; 3], &op, 0.08, false).unwrap();
        let n = grid.n;
        for bf in &grid.boundaries {
            let expect = if bf.side == 1 { grid.domain.hi[bf.dir] } else { grid.domain.lo[bf.dir] };
            // Element lattice position along bf.dir.
            for node in face_node_indices(n, bf.dir, bf.side) {
                let x = grid.coords[grid.node_offset(bf.elem) + node];
                // Only outer faces are boundary faces, so this face sits on
                // the domain surface in direction bf.dir.
                assert!(
                    (x[bf.dir] - expect).abs() < 1e-12,
                    "boundary node drifted off the box face: {x:?}"
                );
            }
        }
    }
}
