//! Ideal-gas thermodynamics and the entropy-variable algebra.
//!
//! The entropy pair used throughout is
//!
//! * specific thermodynamic entropy  `s = c_v ln(T/T_ref) − R ln(ρ/ρ_ref)`,
//! * entropy function                `S = −ρ s`,
//! * entropy flux                    `F^S_m = −ρ s U_m`,
//!
//! with entropy variables `W = ∂S/∂Q` and flux potentials
//! `ψ_m = Wᵀ F^I_m − F^S_m = ρ R U_m`. All closed forms below are derived
//! from those definitions; the unit tests pin them against finite-difference
//! oracles of `S(Q)` and `Q(W)` so correctness is anchored to the defining
//! gradients rather than to transcription.

/// A 5-vector of conserved variables `[ρ, ρU₁, ρU₂, ρU₃, ρE]`, or any other
/// per-node 5-component quantity (entropy variables, fluxes, RHS rows).
pub type State5 = [f64; 5];

/// Admissibility failure of a single state (non-finite, or ρ/T/P ≤ 0).
/// Carried by the RHS up to the time integrator, where it becomes the
/// blow-up *outcome* of the robustness experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inadmissible {
    pub what: &'static str,
}

/// Constant-coefficient ideal-gas model with constant transport properties.
#[derive(Debug, Clone, Copy)]
pub struct GasModel {
    /// Heat-capacity ratio γ > 1.
    pub gamma: f64,
    /// Specific gas constant R > 0.
    pub r: f64,
    /// Dynamic viscosity μ ≥ 0 (constant; no temperature law).
    pub mu: f64,
    /// Prandtl number used to derive the conductivity κ = c_p μ / Pr.
    pub pr: f64,
    /// Entropy-origin references. They shift `s` by an affine function of the
    /// state and cannot affect the discrete dynamics (asserted in tests).
    pub t_ref: f64,
    pub rho_ref: f64,
}

impl GasModel {
    /// Inviscid gas with the given γ and R (μ = 0).
    pub fn inviscid(gamma: f64, r: f64) -> Self {
        Self { gamma, r, mu: 0.0, pr: 0.71, t_ref: 1.0, rho_ref: 1.0 }
    }

    /// Viscous gas; κ follows from Pr = 0.71 unless overridden in config.
    pub fn viscous(gamma: f64, r: f64, mu: f64) -> Self {
        Self { mu, ..Self::inviscid(gamma, r) }
    }

    pub fn cp(&self) -> f64 {
        self.gamma * self.r / (self.gamma - 1.0)
    }

    pub fn cv(&self) -> f64 {
        self.r / (self.gamma - 1.0)
    }

    /// Thermal conductivity κ = c_p μ / Pr.
    pub fn kappa(&self) -> f64 {
        self.cp() * self.mu / self.pr
    }

    pub fn sound_speed(&self, t: f64) -> f64 {
        (self.gamma * self.r * t).sqrt()
    }
}

/// Primitive decomposition of an admissible conserved state.
#[derive(Debug, Clone, Copy)]
pub struct Primitives {
    pub rho: f64,
    pub u: [f64; 3],
    pub t: f64,
    pub p: f64,
    /// Specific total enthalpy H = c_p T + |U|²/2.
    pub h: f64,
    /// Specific total energy E = c_v T + |U|²/2 (so that ρE = Q₅).
    pub e: f64,
}

/// Decompose a conserved state; errors on non-finite input or loss of
/// positivity (the blow-up detector of the robustness runs).
pub fn primitives(q: &State5, gas: &GasModel) -> Result<Primitives, Inadmissible> {
    let rho = q[0];
    if !rho.is_finite() || rho <= 0.0 {
        return Err(Inadmissible { what: "density not finite and positive" });
    }
    let inv_rho = 1.0 / rho;
    let u = [q[1] * inv_rho, q[2] * inv_rho, q[3] * inv_rho];
    let ke = 0.5 * (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
    let e = q[4] * inv_rho;
    let t = (e - ke) / gas.cv();
    if !t.is_finite() || t <= 0.0 {
        return Err(Inadmissible { what: "temperature not finite and positive" });
    }
    let p = rho * gas.r * t;
    Ok(Primitives { rho, u, t, p, h: gas.cp() * t + ke, e })
}

/// Assemble a conserved state from (ρ, U, P).
pub fn conserved(rho: f64, u: [f64; 3], p: f64, gas: &GasModel) -> State5 {
    let ke = 0.5 * (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
    let rho_e = p / (gas.gamma - 1.0) + rho * ke;
    [rho, rho * u[0], rho * u[1], rho * u[2], rho_e]
}

/// Specific thermodynamic entropy s(ρ, T).
pub fn specific_entropy(rho: f64, t: f64, gas: &GasModel) -> f64 {
    gas.cv() * (t / gas.t_ref).ln() - gas.r * (rho / gas.rho_ref).ln()
}

/// Entropy function S = −ρ s.
pub fn entropy_function(q: &State5, gas: &GasModel) -> Result<f64, Inadmissible> {
    let pr = primitives(q, gas)?;
    Ok(-pr.rho * specific_entropy(pr.rho, pr.t, gas))
}

/// Entropy variables W = ∂S/∂Q:
/// `W = [c_p − s − |U|²/(2T), U₁/T, U₂/T, U₃/T, −1/T]`.
pub fn entropy_variables(q: &State5, gas: &GasModel) -> Result<State5, Inadmissible> {
    let pr = primitives(q, gas)?;
    Ok(entropy_variables_from_prim(&pr, gas))
}

/// As [`entropy_variables`] but from an already-validated decomposition.
pub fn entropy_variables_from_prim(pr: &Primitives, gas: &GasModel) -> State5 {
    let s = specific_entropy(pr.rho, pr.t, gas);
    let ke = 0.5 * (pr.u[0] * pr.u[0] + pr.u[1] * pr.u[1] + pr.u[2] * pr.u[2]);
    let inv_t = 1.0 / pr.t;
    [
        gas.cp() - s - ke * inv_t,
        pr.u[0] * inv_t,
        pr.u[1] * inv_t,
        pr.u[2] * inv_t,
        -inv_t,
    ]
}

/// Invert the entropy-variable map: W → Q.
pub fn conserved_from_entropy(w: &State5, gas: &GasModel) -> Result<State5, Inadmissible> {
    if w[4] >= 0.0 || !w.iter().all(|v| v.is_finite()) {
        return Err(Inadmissible { what: "entropy variables outside admissible cone" });
    }
    let t = -1.0 / w[4];
    let u = [t * w[1], t * w[2], t * w[3]];
    let ke = 0.5 * (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
    let s = gas.cp() - w[0] - ke / t;
    // s = c_v ln(T/T_ref) − R ln(ρ/ρ_ref)  ⇒  ρ = ρ_ref exp[(c_v ln(T/T_ref) − s)/R]
    let rho = gas.rho_ref * ((gas.cv() * (t / gas.t_ref).ln() - s) / gas.r).exp();
    if !rho.is_finite() || rho <= 0.0 {
        return Err(Inadmissible { what: "entropy-variable inversion lost positivity" });
    }
    Ok(conserved(rho, u, rho * gas.r * t, gas))
}

/// Entropy-flux potential ψ_dir = Wᵀ F^I_dir − F^S_dir = ρ R U_dir.
pub fn entropy_potential(q: &State5, dir: usize, gas: &GasModel) -> Result<f64, Inadmissible> {
    let pr = primitives(q, gas)?;
    Ok(gas.r * pr.rho * pr.u[dir])
}

/// The symmetric positive-definite Jacobian H = dQ/dW evaluated at `Q`,
/// in closed form:
///
/// ```text
///          ⎡ 1      u₁          u₂          u₃          E           ⎤
///          ⎢ u₁     u₁²+RT      u₁u₂        u₁u₃        u₁(E+RT)    ⎥
/// H = ρ/R ⎢ u₂     u₁u₂        u₂²+RT      u₂u₃        u₂(E+RT)    ⎥
///          ⎢ u₃     u₁u₃        u₂u₃        u₃²+RT      u₃(E+RT)    ⎥
///          ⎣ E      u₁(E+RT)    u₂(E+RT)    u₃(E+RT)    E²+RT(c_vT+|U|²) ⎦
/// ```
///
/// with E = c_v T + |U|²/2 the specific total energy. Derived by
/// differentiating the closed-form inverse map Q(W); the unit test pins it
/// against a finite-difference Jacobian.
pub fn dq_dw(q: &State5, gas: &GasModel) -> Result<[[f64; 5]; 5], Inadmissible> {
    let pr = primitives(q, gas)?;
    Ok(dq_dw_from_prim(&pr, gas))
}

/// As [`dq_dw`] but from an already-validated decomposition.
pub fn dq_dw_from_prim(pr: &Primitives, gas: &GasModel) -> [[f64; 5]; 5] {
    let scale = pr.rho / gas.r;
    let rt = gas.r * pr.t;
    let u = pr.u;
    let usq = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
    let e = pr.e;
    let ert = e + rt;
    let mut h = [[0.0; 5]; 5];
    h[0][0] = scale;
    for k in 0..3 {
        h[0][k + 1] = scale * u[k];
        h[k + 1][0] = scale * u[k];
        for j in 0..3 {
            h[k + 1][j + 1] = scale * u[k] * u[j];
        }
        h[k + 1][k + 1] += scale * rt;
        h[k + 1][4] = scale * u[k] * ert;
        h[4][k + 1] = scale * u[k] * ert;
    }
    h[0][4] = scale * e;
    h[4][0] = scale * e;
    h[4][4] = scale * (e * e + rt * (gas.cv() * pr.t + usq));
    h
}

/// `H·v` for the dissipation operators, exploiting the rank structure of H
/// (no 5×5 materialization in hot loops).
#[inline]
pub fn dq_dw_mul(pr: &Primitives, gas: &GasModel, v: &State5) -> State5 {
    let scale = pr.rho / gas.r;
    let rt = gas.r * pr.t;
    let u = pr.u;
    let usq = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
    let e = pr.e;
    // H/(ρ/R) = a aᵀ + RT·B with a = [1, U, E]; B touches only the momentum
    // and energy blocks, so split the product into the rank-one part a(a·v)
    // plus the sparse remainder.
    let adotv = v[0] + u[0] * v[1] + u[1] * v[2] + u[2] * v[3] + e * v[4];
    let udotvm = u[0] * v[1] + u[1] * v[2] + u[2] * v[3];
    let mut out = [0.0; 5];
    out[0] = scale * adotv;
    for k in 0..3 {
        out[k + 1] = scale * (u[k] * adotv + rt * (v[k + 1] + u[k] * v[4]));
    }
    out[4] = scale * (e * adotv + rt * (udotvm + (gas.cv() * pr.t + usq) * v[4]));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gas() -> GasModel {
        GasModel::inviscid(1.4, 1.0)
    }

    /// Deterministic pseudo-random admissible states spanning several decades.
    fn random_states(count: usize) -> Vec<State5> {
        let g = gas();
        let mut state = 0x853c49e6748fea9b_u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        (0..count)
            .map(|_| {
                let rho = 0.1 + 9.9 * next();
                let u = [6.0 * next() - 3.0, 6.0 * next() - 3.0, 6.0 * next() - 3.0];
                let p = 0.1 + 9.9 * next();
                conserved(rho, u, p, &g)
            })
            .collect()
    }

    #[test]
    fn stagnation_state_algebra() {
        let g = gas();
        let q = conserved(1.0, [0.0; 3], 1.0, &g);
        let pr = primitives(&q, &g).unwrap();
        assert!((pr.t - 1.0).abs() < 1e-15);
        assert!((q[4] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn primitive_round_trip() {
        let g = gas();
        for q in random_states(100) {
            let pr = primitives(&q, &g).unwrap();
            let back = conserved(pr.rho, pr.u, pr.p, &g);
            for k in 0..5 {
                let scale = q[k].abs().max(1.0);
                assert!((back[k] - q[k]).abs() < 1e-14 * scale);
            }
        }
    }

    #[test]
    fn enthalpy_energy_pressure_identity() {
        let g = gas();
        for q in random_states(100) {
            let pr = primitives(&q, &g).unwrap();
            let residual = pr.h - (pr.e + pr.p / pr.rho);
            assert!(residual.abs() < 1e-13 * pr.h.abs().max(1.0));
        }
    }

    #[test]
    fn inadmissible_states_are_rejected() {
        let g = gas();
        assert!(primitives(&[-1.0, 0.0, 0.0, 0.0, 1.0], &g).is_err());
        assert!(primitives(&[1.0, 10.0, 0.0, 0.0, 1.0], &g).is_err()); // negative T
        assert!(primitives(&[f64::NAN, 0.0, 0.0, 0.0, 1.0], &g).is_err());
    }

    #[test]
    fn entropy_variables_match_finite_difference_gradient() {
        let g = gas();
        for q in random_states(100) {
            let w = entropy_variables(&q, &g).unwrap();
            let qnorm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            let step = 1e-6 * qnorm;
            for k in 0..5 {
                let mut qp = q;
                let mut qm = q;
                qp[k] += step;
                qm[k] -= step;
                let fd = (entropy_function(&qp, &g).unwrap()
                    - entropy_function(&qm, &g).unwrap())
                    / (2.0 * step);
                let scale = w[k].abs().max(1e-3);
                assert!(
                    (fd - w[k]).abs() <= 1e-6 * scale.max(qnorm * 1e-3),
                    "component {k}: fd {fd} vs closed form {}",
                    w[k]
                );
            }
        }
    }

    #[test]
    fn entropy_variable_round_trip() {
        let g = gas();
        for q in random_states(100) {
            let w = entropy_variables(&q, &g).unwrap();
            let back = conserved_from_entropy(&w, &g).unwrap();
            for k in 0..5 {
                let scale = q[k].abs().max(1.0);
                assert!((back[k] - q[k]).abs() < 1e-10 * scale);
            }
            let w2 = entropy_variables(&back, &g).unwrap();
            for k in 0..5 {
                assert!((w2[k] - w[k]).abs() < 1e-10 * w[k].abs().max(1.0));
            }
        }
    }

    #[test]
    fn contraction_identity_defines_entropy_flux() {
        // Wᵀ F^I_dir − ψ_dir = −ρ s U_dir, relative 1e-10.
        let g = gas();
        for q in random_states(200) {
            let pr = primitives(&q, &g).unwrap();
            let w = entropy_variables(&q, &g).unwrap();
            let s = specific_entropy(pr.rho, pr.t, &g);
            for dir in 0..3 {
                let f = crate::fluxes::pointwise_flux(&pr, dir);
                let psi = entropy_potential(&q, dir, &g).unwrap();
                let contraction: f64 = (0..5).map(|k| w[k] * f[k]).sum();
                let entropy_flux = -pr.rho * s * pr.u[dir];
                let scale = contraction.abs().max(psi.abs()).max(1.0);
                assert!(
                    (contraction - psi - entropy_flux).abs() <= 1e-10 * scale,
                    "dir {dir}: {:e}",
                    (contraction - psi - entropy_flux).abs()
                );
            }
        }
    }

    #[test]
    fn entropy_potential_two_code_paths_agree() {
        let g = gas();
        for q in random_states(100) {
            let pr = primitives(&q, &g).unwrap();
            let w = entropy_variables(&q, &g).unwrap();
            let s = specific_entropy(pr.rho, pr.t, &g);
            for dir in 0..3 {
                let direct = entropy_potential(&q, dir, &g).unwrap();
                let f = crate::fluxes::pointwise_flux(&pr, dir);
                let via_contraction: f64 =
                    (0..5).map(|k| w[k] * f[k]).sum::<f64>() + pr.rho * s * pr.u[dir];
                let scale = direct.abs().max(1.0);
                assert!((direct - via_contraction).abs() < 1e-12 * scale);
            }
        }
    }

    #[test]
    fn entropy_potential_is_odd_in_velocity() {
        let g = gas();
        for q in random_states(50) {
            let flipped = [q[0], -q[1], -q[2], -q[3], q[4]];
            for dir in 0..3 {
                let a = entropy_potential(&q, dir, &g).unwrap();
                let b = entropy_potential(&flipped, dir, &g).unwrap();
                assert!((a + b).abs() < 1e-13 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn zero_velocity_has_zero_potential() {
        let g = gas();
        let q = conserved(2.0, [0.0; 3], 3.0, &g);
        for dir in 0..3 {
            assert_eq!(entropy_potential(&q, dir, &g).unwrap(), 0.0);
        }
    }

    /// 5×5 Cholesky; returns false if any pivot is non-positive.
    fn cholesky_spd(m: &[[f64; 5]; 5]) -> bool {
        let mut l = [[0.0_f64; 5]; 5];
        for i in 0..5 {
            for j in 0..=i {
                let mut sum = m[i][j];
                for k in 0..j {
                    sum -= l[i][k] * l[j][k];
                }
                if i == j {
                    if sum <= 0.0 {
                        return false;
                    }
                    l[i][j] = sum.sqrt();
                } else {
                    l[i][j] = sum / l[j][j];
                }
            }
        }
        true
    }

    #[test]
    fn dq_dw_is_symmetric_positive_definite_and_matches_fd() {
        let g = gas();
        for q in random_states(100) {
            let h = dq_dw(&q, &g).unwrap();
            for i in 0..5 {
                for j in 0..5 {
                    let scale = h[i][j].abs().max(1.0);
                    assert!((h[i][j] - h[j][i]).abs() < 1e-13 * scale);
                }
            }
            assert!(cholesky_spd(&h), "dQ/dW not positive definite at {q:?}");

            // Finite-difference oracle of the inverse map Q(W).
            let w = entropy_variables(&q, &g).unwrap();
            for col in 0..5 {
                let step = 1e-7 * w[col].abs().max(1e-2);
                let mut wp = w;
                let mut wm = w;
                wp[col] += step;
                wm[col] -= step;
                let qp = conserved_from_entropy(&wp, &g).unwrap();
                let qm = conserved_from_entropy(&wm, &g).unwrap();
                for row in 0..5 {
                    let fd = (qp[row] - qm[row]) / (2.0 * step);
                    let scale = h[row][col].abs().max(q[row].abs()).max(1.0);
                    assert!(
                        (fd - h[row][col]).abs() <= 2e-6 * scale,
                        "H[{row}][{col}]: fd {fd} vs {}",
                        h[row][col]
                    );
                }
            }
        }
    }

    #[test]
    fn dq_dw_mul_matches_materialized_matrix() {
        let g = gas();
        for (i, q) in random_states(50).iter().enumerate() {
            let pr = primitives(q, &g).unwrap();
            let h = dq_dw(q, &g).unwrap();
            let v = [
                (i as f64 * 0.37).sin(),
                (i as f64 * 1.1).cos(),
                0.5,
                -1.25,
                (i as f64 * 0.71).sin(),
            ];
            let fast = dq_dw_mul(&pr, &g, &v);
            for row in 0..5 {
                let full: f64 = (0..5).map(|c| h[row][c] * v[c]).sum();
                assert!(
                    (fast[row] - full).abs() < 1e-12 * full.abs().max(1.0),
                    "row {row}: {} vs {}",
                    fast[row],
                    full
                );
            }
        }
    }

    #[test]
    fn entropy_origin_shift_only_translates_w1() {
        let g1 = gas();
        let g2 = GasModel { t_ref: 3.7, rho_ref: 0.2, ..g1 };
        let states = random_states(20);
        let q0 = &states[0];
        let shift = entropy_variables(q0, &g2).unwrap()[0] - entropy_variables(q0, &g1).unwrap()[0];
        for q in &states {
            let w1 = entropy_variables(q, &g1).unwrap();
            let w2 = entropy_variables(q, &g2).unwrap();
            assert!((w2[0] - w1[0] - shift).abs() < 1e-12 * w1[0].abs().max(1.0));
            for k in 1..5 {
                assert_eq!(w1[k], w2[k]);
            }
        }
    }
}
