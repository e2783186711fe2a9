//! One-dimensional diagonal-norm summation-by-parts (SBP) operators
//! collocated on Legendre-Gauss-Lobatto (LGL) nodes, and their tensor-product
//! application to fields on the reference cube [-1,1]³.
//!
//! A degree-`p` operator acts on `N = p+1` nodes and consists of
//!
//! * the node vector `ξ` (both endpoints included, strictly increasing),
//! * the positive quadrature weights `w` (diagonal of the norm matrix `P`),
//! * the collocation derivative `D` (exact for polynomials of degree ≤ p),
//! * `Q = P·D`, which satisfies the SBP identity `Q + Qᵀ = E` with
//!   `E = diag(-1, 0, …, 0, 1)`.
//!
//! `D` is built as the barycentric Lagrange collocation derivative and the
//! SBP identity is *asserted* in tests rather than used in the construction,
//! so the identity is a genuine check of the quadrature/derivative pairing.

use crate::{Error, Result};

/// Largest supported polynomial degree (the accuracy sweeps go up to 15).
pub const MAX_DEGREE: usize = 15;

/// Diagonal-norm LGL SBP operator for one coordinate direction.
#[derive(Debug, Clone)]
pub struct SbpOperator1D {
    p: usize,
    n: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Row-major N×N collocation derivative.
    d: Vec<f64>,
    /// D transposed (row-major), kept so the tensor-product kernels can run
    /// their innermost loops over contiguous output indices in every
    /// direction.
    d_t: Vec<f64>,
    /// Row-major N×N, Q = P·D.
    q: Vec<f64>,
}

/// Evaluate the Legendre polynomial `P_p` and its derivative `P'_p` at `x`
/// by the three-term recurrence (derivative via `P'_{k+1} = P'_{k-1} + (2k+1) P_k`,
/// which stays regular at the endpoints).
fn legendre_with_deriv(p: usize, x: f64) -> (f64, f64) {
    if p == 0 {
        return (1.0, 0.0);
    }
    let (mut pm1, mut pc) = (1.0_f64, x); // P_0, P_1
    let (mut dm1, mut dc) = (0.0_f64, 1.0); // P'_0, P'_1
    for k in 1..p {
        let kf = k as f64;
        let pn = ((2.0 * kf + 1.0) * x * pc - kf * pm1) / (kf + 1.0);
        let dn = dm1 + (2.0 * kf + 1.0) * pc;
        pm1 = pc;
        pc = pn;
        dm1 = dc;
        dc = dn;
    }
    (pc, dc)
}

/// Interior LGL nodes are the roots of `P'_p`; find them by Newton iteration
/// with Chebyshev-Gauss-Lobatto initial guesses. `P''_p` comes from the
/// Legendre differential equation.
fn lgl_nodes(p: usize) -> Vec<f64> {
    let n = p + 1;
    let mut nodes = vec![0.0; n];
    nodes[0] = -1.0;
    nodes[n - 1] = 1.0;
    for j in 1..p {
        // Chebyshev-Gauss-Lobatto guess, ordered ascending.
        let mut x = -(std::f64::consts::PI * j as f64 / p as f64).cos();
        for _ in 0..100 {
            let (pp, dp) = legendre_with_deriv(p, x);
            // g = P'_p, g' = P''_p = (2x P'_p - p(p+1) P_p) / (1 - x²)
            let g = dp;
            let gp = (2.0 * x * dp - (p * (p + 1)) as f64 * pp) / (1.0 - x * x);
            let dx = g / gp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[j] = x;
    }
    // Enforce the symmetry the analytic node set has; this removes the last
    // ulp of asymmetric round-off from the Newton iterates.
    for j in 0..n / 2 {
        let s = 0.5 * (nodes[n - 1 - j] - nodes[j]);
        nodes[j] = -s;
        nodes[n - 1 - j] = s;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    nodes
}

impl SbpOperator1D {
    /// Build the degree-`p` LGL operator. Degrees 1..=15 are supported.
    pub fn build_lgl(p: usize) -> Result<Self> {
        if p < 1 || p > MAX_DEGREE {
            return Err(Error::Config(format!(
                "polynomial degree {p} out of supported range 1..={MAX_DEGREE}"
            )));
        }
        let n = p + 1;
        let nodes = lgl_nodes(p);

        // LGL quadrature weights: w_j = 2 / (p (p+1) P_p(ξ_j)²).
        let mut weights = vec![0.0; n];
        for j in 0..n {
            let (pp, _) = legendre_with_deriv(p, nodes[j]);
            weights[j] = 2.0 / ((p * (p + 1)) as f64 * pp * pp);
        }

        // Build Q first from the closed form for LGL collocation,
        //   Q_ij = w_i D_ij = c / (P_p(ξ_i) P_p(ξ_j) (ξ_i - ξ_j)),  c = 2/(p(p+1)),
        // whose off-diagonal part is skew-symmetric *bitwise*: swapping i and j
        // flips only the sign of the node difference, an exact operation. The
        // diagonal is zero at interior nodes and ∓1/2 at the endpoints (where
        // P_p(∓1)² = 1 exactly), so Q + Qᵀ = E holds with zero residual rather
        // than merely to roundoff. D = P⁻¹Q is then one exact division per
        // entry.
        let pp: Vec<f64> = (0..n).map(|j| legendre_with_deriv(p, nodes[j]).0).collect();
        let c = 2.0 / (p * (p + 1)) as f64;
        let mut q = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    q[i * n + j] = c / (pp[i] * pp[j]) / (nodes[i] - nodes[j]);
                }
            }
        }
        q[0] = -0.5;
        q[n * n - 1] = 0.5;

        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                d[i * n + j] = q[i * n + j] / weights[i];
            }
        }
        let mut d_t = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                d_t[j * n + i] = d[i * n + j];
            }
        }

        Ok(Self { p, n, nodes, weights, d, d_t, q })
    }

    pub fn degree(&self) -> usize {
        self.p
    }

    /// Number of nodes per direction, `N = p+1`.
    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Row-major N×N collocation derivative.
    pub fn d_matrix(&self) -> &[f64] {
        &self.d
    }

    /// Row-major N×N, Q = P·D.
    pub fn q_matrix(&self) -> &[f64] {
        &self.q
    }

    pub fn d_entry(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    /// Differentiate one line of `N` values: `out = D·line`.
    pub fn diff_line(&self, line: &[f64], out: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(line.len(), n);
        debug_assert_eq!(out.len(), n);
        for i in 0..n {
            let mut acc = 0.0;
            let row = &self.d[i * n..(i + 1) * n];
            for j in 0..n {
                acc += row[j] * line[j];
            }
            out[i] = acc;
        }
    }
}

/// Tensor-product view of a single 1D operator used identically in all three
/// directions of the reference cube. Node `(i1, i2, i3)` of an `N³` block is
/// stored at flat index `(i1·N + i2)·N + i3` (the ξ₃ index runs fastest).
#[derive(Debug, Clone)]
pub struct TensorOperator {
    op: SbpOperator1D,
}

impl TensorOperator {
    pub fn new(op: SbpOperator1D) -> Self {
        Self { op }
    }

    pub fn op_1d(&self) -> &SbpOperator1D {
        &self.op
    }

    /// Nodes per element, `N³`.
    pub fn nodes_per_element(&self) -> usize {
        let n = self.op.n;
        n * n * n
    }

    /// Flat node index of `(i1, i2, i3)`.
    #[inline]
    pub fn node_index(&self, i1: usize, i2: usize, i3: usize) -> usize {
        let n = self.op.n;
        (i1 * n + i2) * n + i3
    }

    /// Inverse of [`Self::node_index`].
    #[inline]
    pub fn node_tuple(&self, idx: usize) -> (usize, usize, usize) {
        let n = self.op.n;
        (idx / (n * n), (idx / n) % n, idx % n)
    }

    /// Apply the direction-`dir` derivative (`dir ∈ {0,1,2}` for ξ₁, ξ₂, ξ₃)
    /// to a scalar field of length `N³`, line by line, without materializing
    /// the Kronecker-product matrix.
    pub fn apply_derivative(&self, dir: usize, field: &[f64], out: &mut [f64]) {
        let n = self.op.n;
        let nn = n * n;
        assert_eq!(field.len(), nn * n);
        assert_eq!(out.len(), nn * n);
        let d = &self.op.d;
        let dt = &self.op.d_t;
        out.fill(0.0);
        match dir {
            // ξ₁ indexes contiguous n²-planes: out-plane i = Σ_j D_ij · plane j.
            0 => {
                for i in 0..n {
                    let orow = &mut out[i * nn..(i + 1) * nn];
                    for j in 0..n {
                        let c = d[i * n + j];
                        let frow = &field[j * nn..(j + 1) * nn];
                        for k in 0..nn {
                            orow[k] = c.mul_add(frow[k], orow[k]);
                        }
                    }
                }
            }
            // ξ₂ indexes contiguous n-rows inside each ξ₁ slab.
            1 => {
                for a in 0..n {
                    let base = a * nn;
                    let fslab = &field[base..base + nn];
                    let oslab = &mut out[base..base + nn];
                    for i in 0..n {
                        let orow = &mut oslab[i * n..(i + 1) * n];
                        for j in 0..n {
                            let c = d[i * n + j];
                            let frow = &fslab[j * n..(j + 1) * n];
                            for k in 0..n {
                                orow[k] = c.mul_add(frow[k], orow[k]);
                            }
                        }
                    }
                }
            }
            // ξ₃ is the fastest index: per contiguous line, accumulate column
            // AXPYs through Dᵀ so writes stay unit-stride.
            2 => {
                for line in 0..nn {
                    let base = line * n;
                    let f = &field[base..base + n];
                    let o = &mut out[base..base + n];
                    for j in 0..n {
                        let c = f[j];
                        let dtrow = &dt[j * n..(j + 1) * n];
                        for k in 0..n {
                            o[k] = c.mul_add(dtrow[k], o[k]);
                        }
                    }
                }
            }
            _ => panic!("direction out of range"),
        }
    }

    /// Diagonal entry of the tensor-product norm matrix at `node`:
    /// the product of the three 1D quadrature weights.
    pub fn mass_weight(&self, node: usize) -> f64 {
        let (i1, i2, i3) = self.node_tuple(node);
        let w = &self.op.weights;
        w[i1] * w[i2] * w[i3]
    }
}

/// For lines along `dir` in an `N³` block: `(stride, plane_a, plane_b)` such
/// that the line through "transverse" indices `(a, b)` visits
/// `a·plane_a + b·plane_b + k·stride` for `k = 0..N`.
#[inline]
pub fn line_geometry(n: usize, dir: usize) -> (usize, usize, usize) {
    match dir {
        0 => (n * n, n, 1),
        1 => (n, n * n, 1),
        2 => (1, n * n, n),
        _ => panic!("direction out of range"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SBP_IDENTITY_TOL: f64 = 1e-14;
    const DEGREE_TOL: f64 = 1e-12;

    fn op(p: usize) -> SbpOperator1D {
        SbpOperator1D::build_lgl(p).unwrap()
    }

    #[test]
    fn degree_out_of_range_is_config_error() {
        assert!(SbpOperator1D::build_lgl(0).is_err());
        assert!(SbpOperator1D::build_lgl(16).is_err());
    }

    #[test]
    fn p1_nodes_and_weights() {
        let o = op(1);
        assert_eq!(o.nodes(), &[-1.0, 1.0]);
        assert_eq!(o.weights(), &[1.0, 1.0]);
    }

    #[test]
    fn p2_nodes_and_weights() {
        // Degree-2 LGL rule solved by hand from the quadrature-exactness
        // conditions on {1, ξ, ξ², ξ³}: nodes {-1, 0, 1}, weights {1/3, 4/3, 1/3}.
        let o = op(2);
        let expect_nodes = [-1.0, 0.0, 1.0];
        let expect_weights = [1.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0];
        for (a, b) in o.nodes().iter().zip(expect_nodes) {
            assert!((a - b).abs() < 1e-15, "node {a} vs {b}");
        }
        for (a, b) in o.weights().iter().zip(expect_weights) {
            assert!((a - b).abs() < 1e-15, "weight {a} vs {b}");
        }
    }

    #[test]
    fn nodes_increasing_with_endpoints_all_degrees() {
        for p in 1..=MAX_DEGREE {
            let o = op(p);
            let nodes = o.nodes();
            assert_eq!(nodes[0], -1.0);
            assert_eq!(nodes[p], 1.0);
            for j in 1..nodes.len() {
                assert!(nodes[j] > nodes[j - 1]);
            }
        }
    }

    #[test]
    fn weights_positive_and_sum_to_interval_measure() {
        for p in 1..=MAX_DEGREE {
            let o = op(p);
            assert!(o.weights().iter().all(|&w| w > 0.0));
            let sum: f64 = o.weights().iter().sum();
            assert!((sum - 2.0).abs() < 1e-14, "p={p}: weight sum {sum}");
        }
    }

    #[test]
    fn sbp_identity_q_plus_qt_is_e() {
        for p in 1..=MAX_DEGREE {
            let o = op(p);
            let n = o.num_nodes();
            let q = o.q_matrix();
            for i in 0..n {
                for j in 0..n {
                    let e = if i == 0 && j == 0 {
                        -1.0
                    } else if i == n - 1 && j == n - 1 {
                        1.0
                    } else {
                        0.0
                    };
                    let r = q[i * n + j] + q[j * n + i] - e;
                    assert!(
                        r.abs() <= SBP_IDENTITY_TOL,
                        "p={p} ({i},{j}): |Q+Qt-E| = {:e}",
                        r.abs()
                    );
                }
            }
        }
    }

    #[test]
    fn degree_condition_monomials() {
        for p in 1..=MAX_DEGREE {
            let o = op(p);
            let n = o.num_nodes();
            let mut dx = vec![0.0; n];
            for j in 0..=p {
                let xj: Vec<f64> = o.nodes().iter().map(|x| x.powi(j as i32)).collect();
                o.diff_line(&xj, &mut dx);
                for i in 0..n {
                    let exact = if j == 0 {
                        0.0
                    } else {
                        j as f64 * o.nodes()[i].powi(j as i32 - 1)
                    };
                    assert!(
                        (dx[i] - exact).abs() <= DEGREE_TOL,
                        "p={p} monomial {j} node {i}: {:e}",
                        (dx[i] - exact).abs()
                    );
                }
            }
        }
    }

    #[test]
    fn d_is_p_inverse_q_exactly_as_constructed() {
        for p in [1, 4, 9, 15] {
            let o = op(p);
            let n = o.num_nodes();
            for i in 0..n {
                for j in 0..n {
                    let back = o.q_matrix()[i * n + j] / o.weights()[i];
                    assert_eq!(back, o.d_matrix()[i * n + j]);
                }
            }
        }
    }

    #[test]
    fn discrete_integration_by_parts_random_vectors() {
        // uᵀP(Dv) + vᵀP(Du) = u_N v_N - u_1 v_1, the quadratic form of Q+Qᵀ=E.
        let mut rng_state = 0x9e3779b97f4a7c15_u64;
        let mut rand = move || {
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for p in 1..=MAX_DEGREE {
            let o = op(p);
            let n = o.num_nodes();
            let u: Vec<f64> = (0..n).map(|_| rand()).collect();
            let v: Vec<f64> = (0..n).map(|_| rand()).collect();
            let mut du = vec![0.0; n];
            let mut dv = vec![0.0; n];
            o.diff_line(&u, &mut du);
            o.diff_line(&v, &mut dv);
            let mut lhs = 0.0;
            for i in 0..n {
                lhs += u[i] * o.weights()[i] * dv[i] + v[i] * o.weights()[i] * du[i];
            }
            let rhs = u[n - 1] * v[n - 1] - u[0] * v[0];
            assert!((lhs - rhs).abs() < 1e-12, "p={p}: {:e}", (lhs - rhs).abs());
        }
    }

    /// Dense Kronecker-product oracle for the tensor application.
    fn dense_kron_apply(o: &SbpOperator1D, dir: usize, field: &[f64]) -> Vec<f64> {
        let n = o.num_nodes();
        let nn = n * n * n;
        let mut big = vec![0.0; nn * nn];
        for r in 0..nn {
            let (r1, r2, r3) = ((r / (n * n)), (r / n) % n, r % n);
            for c in 0..nn {
                let (c1, c2, c3) = ((c / (n * n)), (c / n) % n, c % n);
                let v = match dir {
                    0 => {
                        if r2 == c2 && r3 == c3 {
                            o.d_entry(r1, c1)
                        } else {
                            0.0
                        }
                    }
                    1 => {
                        if r1 == c1 && r3 == c3 {
                            o.d_entry(r2, c2)
                        } else {
                            0.0
                        }
                    }
                    _ => {
                        if r1 == c1 && r2 == c2 {
                            o.d_entry(r3, c3)
                        } else {
                            0.0
                        }
                    }
                };
                big[r * nn + c] = v;
            }
        }
        let mut out = vec![0.0; nn];
        for r in 0..nn {
            let mut acc = 0.0;
            for c in 0..nn {
                acc += big[r * nn + c] * field[c];
            }
            out[r] = acc;
        }
        out
    }

    #[test]
    fn tensor_apply_constant_is_zero_and_coordinate_is_one() {
        let t = TensorOperator::new(op(3));
        let nn = t.nodes_per_element();
        let ones = vec![1.0; nn];
        let mut out = vec![0.0; nn];
        for dir in 0..3 {
            t.apply_derivative(dir, &ones, &mut out);
            assert!(out.iter().all(|v| v.abs() < 1e-13));
        }
        // field = ξ_dir coordinate → derivative 1 everywhere
        for dir in 0..3 {
            let mut coord = vec![0.0; nn];
            for idx in 0..nn {
                let (i1, i2, i3) = t.node_tuple(idx);
                let i = [i1, i2, i3][dir];
                coord[idx] = t.op_1d().nodes()[i];
            }
            t.apply_derivative(dir, &coord, &mut out);
            assert!(out.iter().all(|v| (v - 1.0).abs() < 1e-13));
        }
    }

    #[test]
    fn tensor_apply_matches_dense_kronecker_oracle() {
        let t = TensorOperator::new(op(3));
        let nn = t.nodes_per_element();
        let mut state = 0x2545f4914f6cdd1d_u64;
        let field: Vec<f64> = (0..nn)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect();
        let mut out = vec![0.0; nn];
        for dir in 0..3 {
            t.apply_derivative(dir, &field, &mut out);
            let oracle = dense_kron_apply(t.op_1d(), dir, &field);
            for i in 0..nn {
                assert!(
                    (out[i] - oracle[i]).abs() < 1e-13,
                    "dir {dir} node {i}: {:e}",
                    (out[i] - oracle[i]).abs()
                );
            }
        }
    }

    #[test]
    fn mass_weights() {
        let t1 = TensorOperator::new(op(1));
        for node in 0..t1.nodes_per_element() {
            assert_eq!(t1.mass_weight(node), 1.0);
        }
        let t2 = TensorOperator::new(op(2));
        let center = t2.node_index(1, 1, 1);
        let c = 4.0 / 3.0;
        assert!((t2.mass_weight(center) - c * c * c).abs() < 1e-15);
        for p in [1, 2, 5] {
            let t = TensorOperator::new(op(p));
            let total: f64 = (0..t.nodes_per_element()).map(|i| t.mass_weight(i)).sum();
            assert!((total - 8.0).abs() < 1e-12, "p={p}: volume {total}");
        }
    }
}
