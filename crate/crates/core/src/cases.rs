//! Flow scenarios: initial and exact fields, manufactured sources, boundary
//! data, and the parameter sets the experiments run with.
//!
//! Every case hands the driver a gas model, a domain, and pointwise field
//! evaluators; the turbulence case also synthesizes its random initial
//! velocity and derives its viscosity from the realized microscale.

use crate::diagnostics::{turbulence_stats, TurbStats};
use crate::field::FieldArray;
use crate::gas::{conserved, GasModel, State5};
use crate::mesh::{Box3, Grid};
use crate::sbp::TensorOperator;
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PI: f64 = std::f64::consts::PI;

/// Collocate a pointwise primitive-variable field onto the grid.
pub fn project_primitives(
    grid: &Grid,
    gas: &GasModel,
    f: impl Fn([f64; 3]) -> (f64, [f64; 3], f64),
) -> FieldArray {
    let mut field = FieldArray::zeros(grid.num_elements, grid.nodes_per_element);
    for e in 0..grid.num_elements {
        for (node, &x) in grid.element_coords(e).iter().enumerate() {
            let (rho, u, p) = f(x);
            field.set_node_state(e, node, &conserved(rho, u, p, gas));
        }
    }
    field
}

// ---------------------------------------------------------------------------
// Isentropic vortex
// ---------------------------------------------------------------------------

/// Inviscid isentropic vortex advecting diagonally through a periodic cube.
///
/// The rotation axis is the cube diagonal (1,1,1)ᵀ — deliberately not
/// grid-aligned — and the stationary profile is superposed with a uniform
/// translation along the same diagonal. In the vortex-local plane spanned by
/// an orthonormal pair perpendicular to the axis:
///
/// ```text
/// T   = T_∞ − (γ−1)·Ma²·β² / (8π²) · exp(1 − r²)
/// ρ   = T^{1/(γ−1)}
/// U_t = (r·β / 2π) · exp((1 − r²)/2)
/// P   = ρ R T,   R = 1/(γ Ma²)
/// ```
///
/// With that gas constant the radial momentum balance dP/dr = ρU_t²/r holds
/// exactly, so the profile is a steady Euler solution and the translated
/// field is exact for all time.
#[derive(Clone, Copy, Debug)]
pub struct Vortex {
    pub gamma: f64,
    pub mach: f64,
    pub beta: f64,
    pub t_inf: f64,
    pub domain: Box3,
    pub t_final: f64,
}

impl Default for Vortex {
    fn default() -> Self {
        Vortex {
            gamma: 1.4,
            mach: 0.5,
            beta: 5.0,
            t_inf: 1.0,
            domain: Box3::cube(0.0, 10.0),
            t_final: 2.5,
        }
    }
}

impl Vortex {
    pub fn gas(&self) -> GasModel {
        GasModel::inviscid(self.gamma, 1.0 / (self.gamma * self.mach * self.mach))
    }

    /// Unit rotation axis and the in-plane orthonormal pair (Gram–Schmidt
    /// of e₁ against the axis, then the cross product).
    fn frame(&self) -> ([f64; 3], [f64; 3], [f64; 3]) {
        let s3 = 3.0_f64.sqrt();
        let axis = [1.0 / s3; 3];
        // e₁ − (e₁·axis)·axis, normalized.
        let mut ea: [f64; 3] = [1.0 - 1.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0];
        let na = (ea[0] * ea[0] + ea[1] * ea[1] + ea[2] * ea[2]).sqrt();
        for v in ea.iter_mut() {
            *v /= na;
        }
        let eb = [
            axis[1] * ea[2] - axis[2] * ea[1],
            axis[2] * ea[0] - axis[0] * ea[2],
            axis[0] * ea[1] - axis[1] * ea[0],
        ];
        (axis, ea, eb)
    }

    /// Background translation velocity: speed `Ma` along the rotation axis
    /// (a convention; the profile is exact under any uniform translation).
    pub fn translation(&self) -> [f64; 3] {
        let (axis, _, _) = self.frame();
        [self.mach * axis[0], self.mach * axis[1], self.mach * axis[2]]
    }

    /// Exact primitive state at position `x` and time `t`.
    pub fn primitives_at(&self, x: [f64; 3], t: f64) -> (f64, [f64; 3], f64) {
        let (_, ea, eb) = self.frame();
        let trans = self.translation();
        let lengths = self.domain.lengths();
        let mut center = [0.0; 3];
        for d in 0..3 {
            center[d] = self.domain.lo[d] + 0.5 * lengths[d] + trans[d] * t;
        }
        let d = [x[0] - center[0], x[1] - center[1], x[2] - center[2]];
        let xi = d[0] * ea[0] + d[1] * ea[1] + d[2] * ea[2];
        let eta = d[0] * eb[0] + d[1] * eb[1] + d[2] * eb[2];
        let r2 = xi * xi + eta * eta;

        let gm1 = self.gamma - 1.0;
        let temp = self.t_inf
            - gm1 * self.mach * self.mach * self.beta * self.beta / (8.0 * PI * PI)
                * (1.0 - r2).exp();
        let rho = temp.powf(1.0 / gm1);
        // Tangential speed r·β/(2π)·exp((1−r²)/2) along (−η, ξ)/r; written
        // with the r factor absorbed so the center is regular.
        let swirl = self.beta / (2.0 * PI) * (0.5 * (1.0 - r2)).exp();
        let u = [
            trans[0] + swirl * (-eta * ea[0] + xi * eb[0]),
            trans[1] + swirl * (-eta * ea[1] + xi * eb[1]),
            trans[2] + swirl * (-eta * ea[2] + xi * eb[2]),
        ];
        let r_gas = 1.0 / (self.gamma * self.mach * self.mach);
        (rho, u, rho * r_gas * temp)
    }

    pub fn exact_state(&self, x: [f64; 3], t: f64) -> State5 {
        let (rho, u, p) = self.primitives_at(x, t);
        conserved(rho, u, p, &self.gas())
    }

    pub fn initial_field(&self, grid: &Grid) -> FieldArray {
        let gas = self.gas();
        project_primitives(grid, &gas, |x| self.primitives_at(x, 0.0))
    }
}

// ---------------------------------------------------------------------------
// Manufactured supersonic viscous solution
// ---------------------------------------------------------------------------

/// Trigonometric factor selector for the manufactured fields.
#[derive(Clone, Copy, Debug)]
enum Trig {
    Sin,
    Cos,
}

impl Trig {
    fn eval(self, arg: f64) -> (f64, f64, f64) {
        // (value, first derivative, second derivative) w.r.t. the argument.
        let (s, c) = arg.sin_cos();
        match self {
            Trig::Sin => (s, c, -s),
            Trig::Cos => (c, -s, -c),
        }
    }
}

/// One manufactured primitive: `φ(x) = φ⁰ + Σ_d φ^{x_d}·trig_d(α_d π x_d/L)`.
#[derive(Clone, Copy, Debug)]
struct MsField {
    base: f64,
    amp: [f64; 3],
    alpha: [f64; 3],
    trig: [Trig; 3],
}

impl MsField {
    /// Value, gradient, and the (diagonal) second derivatives at `x`.
    fn eval(&self, x: [f64; 3], l: f64) -> (f64, [f64; 3], [f64; 3]) {
        let mut v = self.base;
        let mut d1 = [0.0; 3];
        let mut d2 = [0.0; 3];
        for d in 0..3 {
            let w = self.alpha[d] * PI / l;
            let (f, fp, fpp) = self.trig[d].eval(w * x[d]);
            v += self.amp[d] * f;
            d1[d] = self.amp[d] * fp * w;
            d2[d] = self.amp[d] * fpp * w * w;
        }
        (v, d1, d2)
    }
}

/// Steady supersonic manufactured solution on the unit cube with
/// all-Dirichlet boundaries. The residual of the continuous compressible
/// Navier–Stokes operator applied to the prescribed trigonometric fields is
/// added as a source term, making the prescribed fields an exact steady
/// solution of the forced system.
#[derive(Clone, Copy, Debug)]
pub struct Mms {
    pub gamma: f64,
    pub reynolds: f64,
    pub l: f64,
    rho: MsField,
    u: [MsField; 3],
    p: MsField,
}

impl Default for Mms {
    fn default() -> Self {
        use Trig::{Cos, Sin};
        Mms {
            gamma: 1.4,
            reynolds: 4.0e6,
            l: 1.0,
            rho: MsField {
                base: 1.0,
                amp: [0.15, -0.1, 0.2],
                alpha: [1.0, 0.5, 1.0],
                trig: [Sin, Cos, Sin],
            },
            u: [
                MsField {
                    base: 800.0,
                    amp: [50.0, -30.0, 50.0],
                    alpha: [1.5, 0.6, 1.0],
                    trig: [Sin, Cos, Cos],
                },
                MsField {
                    base: 800.0,
                    amp: [-75.0, 40.0, 10.0],
                    alpha: [0.5, 1.5, 1.5],
                    trig: [Cos, Sin, Sin],
                },
                MsField {
                    base: 800.0,
                    amp: [15.0, -25.0, 20.0],
                    alpha: [1.5, 0.5, 1.25],
                    trig: [Sin, Sin, Cos],
                },
            ],
            p: MsField {
                base: 1.0e5,
                amp: [2.0e4, 5.0e4, 2.0 / 3.0],
                alpha: [1.0, 1.5, 1.0],
                trig: [Sin, Sin, Cos],
            },
        }
    }
}

impl Mms {
    /// The standard field table at a different Reynolds number.
    pub fn with_reynolds(reynolds: f64) -> Mms {
        Mms { reynolds, ..Default::default() }
    }

    /// A variant with all perturbation amplitudes zeroed (uniform flow).
    pub fn uniform_variant(&self) -> Mms {
        let mut m = *self;
        m.rho.amp = [0.0; 3];
        for u in m.u.iter_mut() {
            u.amp = [0.0; 3];
        }
        m.p.amp = [0.0; 3];
        m
    }

    /// Dynamic viscosity from the Reynolds number built on the base density,
    /// base velocity, and box edge.
    pub fn mu(&self) -> f64 {
        self.rho.base * self.u[0].base * self.l / self.reynolds
    }

    pub fn gas(&self) -> GasModel {
        GasModel::viscous(self.gamma, 1.0, self.mu())
    }

    pub fn domain(&self) -> Box3 {
        Box3::cube(0.0, self.l)
    }

    pub fn primitives_at(&self, x: [f64; 3]) -> (f64, [f64; 3], f64) {
        let (rho, _, _) = self.rho.eval(x, self.l);
        let (p, _, _) = self.p.eval(x, self.l);
        let mut u = [0.0; 3];
        for a in 0..3 {
            u[a] = self.u[a].eval(x, self.l).0;
        }
        (rho, u, p)
    }

    pub fn exact_state(&self, x: [f64; 3]) -> State5 {
        let (rho, u, p) = self.primitives_at(x);
        conserved(rho, u, p, &self.gas())
    }

    /// Local Mach number of the manufactured field.
    pub fn mach_at(&self, x: [f64; 3]) -> f64 {
        let (rho, u, p) = self.primitives_at(x);
        let speed = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
        speed / (self.gamma * p / rho).sqrt()
    }

    /// Nominal Mach number: base velocity over base sound speed.
    pub fn nominal_mach(&self) -> f64 {
        self.u[0].base / (self.gamma * self.p.base / self.rho.base).sqrt()
    }

    /// Steady source: the continuous Navier–Stokes operator applied to the
    /// manufactured fields, assembled from closed-form derivatives. All
    /// mixed second derivatives of the primitives vanish (each primitive is
    /// a sum of single-coordinate factors), which collapses the stress
    /// divergence to diagonal second-derivative terms.
    pub fn source_at(&self, x: [f64; 3]) -> State5 {
        let gas = self.gas();
        let gm1 = self.gamma - 1.0;
        let mu = gas.mu;
        let kappa = gas.kappa();
        let r_gas = gas.r;

        let (rho, drho, d2rho) = self.rho.eval(x, self.l);
        let (p, dp, d2p) = self.p.eval(x, self.l);
        let mut u = [0.0; 3];
        let mut du = [[0.0; 3]; 3]; // du[m][a] = ∂_m u_a
        let mut d2u = [[0.0; 3]; 3]; // d2u[m][a] = ∂_m² u_a
        for a in 0..3 {
            let (v, d1, d2) = self.u[a].eval(x, self.l);
            u[a] = v;
            for m in 0..3 {
                du[m][a] = d1[m];
                d2u[m][a] = d2[m];
            }
        }

        let mut src = [0.0; 5];

        // Mass: ∂_m(ρ u_m).
        for m in 0..3 {
            src[0] += drho[m] * u[m] + rho * du[m][m];
        }

        // Momentum: ∂_m(ρ u_a u_m) + ∂_a P − ∂_m τ_am.
        let divu = du[0][0] + du[1][1] + du[2][2];
        for a in 0..3 {
            let mut conv = dp[a];
            for m in 0..3 {
                conv += drho[m] * u[a] * u[m] + rho * du[m][a] * u[m] + rho * u[a] * du[m][m];
            }
            // Σ_m ∂_m τ_am = μ(Σ_m ∂_m² u_a + ∂_a(∇·u)); mixed primitive
            // second derivatives vanish, so ∂_a(∇·u) = ∂_a² u_a and the
            // deviatoric −2/3 part leaves a net +1/3 of it.
            let lap = d2u[0][a] + d2u[1][a] + d2u[2][a];
            let visc = mu * (lap + d2u[a][a] / 3.0);
            src[1 + a] = conv - visc;
        }

        // Energy: ∂_m((ρE + P)u_m) − ∂_m(τ_am u_a − q_m).
        let uu = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
        for m in 0..3 {
            let mut udotdu = 0.0;
            for a in 0..3 {
                udotdu += u[a] * du[m][a];
            }
            let de = dp[m] / gm1 + 0.5 * drho[m] * uu + rho * udotdu;
            let rho_e = p / gm1 + 0.5 * rho * uu;
            src[4] += (de + dp[m]) * u[m] + (rho_e + p) * du[m][m];
        }
        // Stress power: Σ_a u_a ∂_m τ_am + Σ_am τ_am ∂_m u_a.
        for a in 0..3 {
            let lap = d2u[0][a] + d2u[1][a] + d2u[2][a];
            src[4] -= u[a] * mu * (lap + d2u[a][a] / 3.0);
            for m in 0..3 {
                let tau = mu
                    * (du[m][a] + du[a][m] - if a == m { 2.0 / 3.0 * divu } else { 0.0 });
                src[4] -= tau * du[m][a];
            }
        }
        // Heat conduction: +∂_m(κ ∂_m T), T = P/(ρR).
        for m in 0..3 {
            let d2t = (d2p[m] / rho - 2.0 * dp[m] * drho[m] / (rho * rho)
                + 2.0 * p * drho[m] * drho[m] / (rho * rho * rho)
                - p * d2rho[m] / (rho * rho))
                / r_gas;
            src[4] -= kappa * d2t;
        }

        src
    }

    pub fn initial_field(&self, grid: &Grid) -> FieldArray {
        let gas = self.gas();
        project_primitives(grid, &gas, |x| self.primitives_at(x))
    }
}

// ---------------------------------------------------------------------------
// Vortex-sheet roll-up cube (transition benchmark)
// ---------------------------------------------------------------------------

/// Triply periodic vortex that degenerates into turbulence: the classical
/// transition benchmark on `[−π,π]³`.
///
/// ```text
/// ρ  = 1 + γMa²/16 · (cos 2x₁ + cos 2x₂)(cos 2x₃ + 2)
/// U₁ =  sin x₁ cos x₂ cos x₃
/// U₂ = −cos x₁ sin x₂ cos x₃
/// U₃ = 0,  T = 1,  P = ρRT with R = 1/(γMa²)
/// ```
#[derive(Clone, Copy, Debug)]
pub struct Tgv {
    pub gamma: f64,
    pub mach: f64,
    pub reynolds: f64,
    pub t_final: f64,
}

impl Default for Tgv {
    fn default() -> Self {
        Tgv { gamma: 1.4, mach: 0.05, reynolds: 1600.0, t_final: 20.0 }
    }
}

impl Tgv {
    pub fn gas(&self) -> GasModel {
        let r = 1.0 / (self.gamma * self.mach * self.mach);
        GasModel::viscous(self.gamma, r, 1.0 / self.reynolds)
    }

    /// Inviscid variant of the same gas (for semi-discrete entropy checks).
    pub fn gas_inviscid(&self) -> GasModel {
        GasModel::inviscid(self.gamma, 1.0 / (self.gamma * self.mach * self.mach))
    }

    pub fn domain(&self) -> Box3 {
        Box3::cube(-PI, PI)
    }

    pub fn primitives_at(&self, x: [f64; 3]) -> (f64, [f64; 3], f64) {
        let ma2 = self.mach * self.mach;
        let rho = 1.0
            + self.gamma * ma2 / 16.0
                * ((2.0 * x[0]).cos() + (2.0 * x[1]).cos())
                * ((2.0 * x[2]).cos() + 2.0);
        let u = [
            x[0].sin() * x[1].cos() * x[2].cos(),
            -(x[0].cos()) * x[1].sin() * x[2].cos(),
            0.0,
        ];
        // T ≡ 1, so P = ρRT reduces to ρ·R.
        let p = rho / (self.gamma * ma2);
        (rho, u, p)
    }

    pub fn initial_field(&self, grid: &Grid) -> FieldArray {
        let gas = self.gas();
        project_primitives(grid, &gas, |x| self.primitives_at(x))
    }
}

// ---------------------------------------------------------------------------
// Decaying homogeneous isotropic turbulence
// ---------------------------------------------------------------------------

/// Random solenoidal turbulence in `[0,2π]³` synthesized from the model
/// spectrum `E(k) = A₀·k⁴·exp(−2k²/k₀²)`, with uniform initial density and
/// temperature (a documented simplification of the consistent thermodynamic
/// initialization), rescaled so the turbulent Mach number of the *discrete*
/// field hits the target exactly, and with the viscosity chosen so that the
/// realized microscale Reynolds number matches its target.
#[derive(Clone, Copy, Debug)]
pub struct Chit {
    pub a0: f64,
    pub k0: f64,
    /// Largest synthesized wavenumber shell.
    pub k_syn: usize,
    pub mach_t: f64,
    pub re_lambda: f64,
    pub gamma: f64,
    pub seed: u64,
}

impl Default for Chit {
    fn default() -> Self {
        Chit {
            a0: 0.00013,
            k0: 8.0,
            k_syn: 16,
            mach_t: 0.62,
            re_lambda: 194.0,
            gamma: 1.4,
            seed: 1,
        }
    }
}

/// One Fourier mode of the real velocity expansion
/// `u(x) = Σ a·cos(k·x) + b·sin(k·x)` with `a, b ⊥ k`.
#[derive(Clone, Copy, Debug)]
pub struct VelocityMode {
    pub k: [f64; 3],
    pub a: [f64; 3],
    pub b: [f64; 3],
}

/// Synthesized initial condition plus the derived physical parameters.
pub struct ChitInit {
    pub field: FieldArray,
    pub gas: GasModel,
    pub stats: TurbStats,
    /// Integral length scale of the model spectrum, `√(2π)/k₀` in closed form.
    pub l1: f64,
    /// Eddy turnover time `L₁ / U_RMS`.
    pub tau: f64,
    /// Default integration horizon, three turnover times.
    pub t_final: f64,
    /// Largest `|k·a|, |k·b|` over all modes after rescaling (solenoidality
    /// residual in spectral space).
    pub max_spectral_divergence: f64,
    /// Shell-binned kinetic energy of the synthesized modes, index = shell.
    pub shell_spectrum: Vec<f64>,
    pub modes: Vec<VelocityMode>,
}

impl Chit {
    pub fn domain(&self) -> Box3 {
        Box3::cube(0.0, 2.0 * PI)
    }

    fn spectrum(&self, k: f64) -> f64 {
        self.a0 * k.powi(4) * (-2.0 * k * k / (self.k0 * self.k0)).exp()
    }

    /// Draw the solenoidal mode table. Modes iterate in a fixed
    /// lexicographic order over the half-space, so a seed fully determines
    /// the field.
    fn synthesize_modes(&self, rng: &mut ChaCha8Rng) -> Vec<VelocityMode> {
        let kmax = self.k_syn as i64;
        let mut shell_count = vec![0usize; self.k_syn + 1];
        let mut lattice = Vec::new();
        for k1 in -kmax..=kmax {
            for k2 in -kmax..=kmax {
                for k3 in -kmax..=kmax {
                    let positive = k1 > 0 || (k1 == 0 && (k2 > 0 || (k2 == 0 && k3 > 0)));
                    if !positive {
                        continue;
                    }
                    let mag = ((k1 * k1 + k2 * k2 + k3 * k3) as f64).sqrt();
                    let shell = mag.round() as usize;
                    if shell >= 1 && shell <= self.k_syn {
                        shell_count[shell] += 1;
                        lattice.push(([k1, k2, k3], shell));
                    }
                }
            }
        }
        let mut modes = Vec::with_capacity(lattice.len());
        for (ki, shell) in lattice {
            let k = [ki[0] as f64, ki[1] as f64, ki[2] as f64];
            // Shell-exact binning: every member of a shell gets an equal
            // share, so the binned spectrum reproduces E at integer shells.
            let energy = self.spectrum(shell as f64) / shell_count[shell] as f64;
            let amp2 = 4.0 * energy;
            // Orthonormal pair spanning the plane perpendicular to k.
            let ax = [k[0].abs(), k[1].abs(), k[2].abs()];
            let helper = if ax[0] <= ax[1] && ax[0] <= ax[2] {
                [1.0, 0.0, 0.0]
            } else if ax[1] <= ax[2] {
                [0.0, 1.0, 0.0]
            } else {
                [0.0, 0.0, 1.0]
            };
            let e1 = normalize(cross(k, helper));
            let e2 = normalize(cross(k, e1));
            let theta_a = 2.0 * PI * rng.gen::<f64>();
            let theta_b = 2.0 * PI * rng.gen::<f64>();
            let split = rng.gen::<f64>();
            let ra = (amp2 * split).sqrt();
            let rb = (amp2 * (1.0 - split)).sqrt();
            let a = combine(e1, e2, ra * theta_a.cos(), ra * theta_a.sin());
            let b = combine(e1, e2, rb * theta_b.cos(), rb * theta_b.sin());
            modes.push(VelocityMode { k, a, b });
        }
        modes
    }

    /// Build the initial field on `grid`, returning the field together with
    /// the gas model whose viscosity realizes the target microscale
    /// Reynolds number.
    pub fn initial(&self, grid: &Grid, op: &TensorOperator) -> Result<ChitInit> {
        if (self.k_syn as f64) < self.k0 {
            return Err(Error::Config(format!(
                "synthesis cutoff k_syn = {} cannot contain the spectrum peak k0 = {}",
                self.k_syn, self.k0
            )));
        }
        if self.k0 < 1.0 {
            return Err(Error::Config("spectrum peak k0 must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut modes = self.synthesize_modes(&mut rng);

        // Evaluate the trigonometric series at every collocation node.
        let total_nodes = grid.num_elements * grid.nodes_per_element;
        let mut vel = vec![[0.0_f64; 3]; total_nodes];
        for e in 0..grid.num_elements {
            let base = grid.node_offset(e);
            for (node, &x) in grid.element_coords(e).iter().enumerate() {
                let mut u = [0.0; 3];
                for m in &modes {
                    let phase = m.k[0] * x[0] + m.k[1] * x[1] + m.k[2] * x[2];
                    let (s, c) = phase.sin_cos();
                    for d in 0..3 {
                        u[d] += m.a[d] * c + m.b[d] * s;
                    }
                }
                vel[base + node] = u;
            }
        }

        // Rescale so the *quadrature* turbulent Mach number hits the target
        // exactly: uniform ρ = T = 1 with R = 1 gives c_s = √γ everywhere.
        let cs = self.gamma.sqrt();
        let mut uu = crate::diagnostics::Compensated::default();
        let mut vol = crate::diagnostics::Compensated::default();
        for e in 0..grid.num_elements {
            let jac = grid.element_jacobian(e);
            let base = grid.node_offset(e);
            for node in 0..grid.nodes_per_element {
                let wj = op.mass_weight(node) * jac[node];
                let u = vel[base + node];
                uu.add(wj * (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]) / 3.0);
                vol.add(wj);
            }
        }
        let u_rms_raw = (uu.value() / vol.value()).max(0.0).sqrt();
        if u_rms_raw == 0.0 {
            return Err(Error::Config(
                "synthesized velocity field is identically zero on this grid".into(),
            ));
        }
        let scale = self.mach_t * cs / u_rms_raw;
        for u in vel.iter_mut() {
            for d in 0..3 {
                u[d] *= scale;
            }
        }
        for m in modes.iter_mut() {
            for d in 0..3 {
                m.a[d] *= scale;
                m.b[d] *= scale;
            }
        }

        // Assemble conserved variables: ρ = 1, T = 1, P = ρRT = 1.
        let provisional = GasModel::inviscid(self.gamma, 1.0);
        let mut field = FieldArray::zeros(grid.num_elements, grid.nodes_per_element);
        for e in 0..grid.num_elements {
            let base = grid.node_offset(e);
            for node in 0..grid.nodes_per_element {
                let u = vel[base + node];
                field.set_node_state(e, node, &conserved(1.0, u, 1.0, &provisional));
            }
        }

        // Microscale of the discrete field fixes μ so Re_λ lands on target.
        let pre = turbulence_stats(&field, grid, op, &provisional)
            .map_err(|e| Error::Config(format!("synthesized field inadmissible: {}", e.what)))?;
        if !pre.lambda.is_finite() {
            return Err(Error::Config(
                "velocity field has no resolvable microscale on this grid".into(),
            ));
        }
        let mu = pre.u_rms * pre.lambda / self.re_lambda;
        let gas = GasModel::viscous(self.gamma, 1.0, mu);
        let stats = turbulence_stats(&field, grid, op, &gas)
            .map_err(|e| Error::Config(format!("synthesized field inadmissible: {}", e.what)))?;

        let mut max_div = 0.0_f64;
        let mut shell_spectrum = vec![0.0; self.k_syn + 1];
        for m in &modes {
            let ka = (m.k[0] * m.a[0] + m.k[1] * m.a[1] + m.k[2] * m.a[2]).abs();
            let kb = (m.k[0] * m.b[0] + m.k[1] * m.b[1] + m.k[2] * m.b[2]).abs();
            max_div = max_div.max(ka).max(kb);
            let mag = (m.k[0] * m.k[0] + m.k[1] * m.k[1] + m.k[2] * m.k[2]).sqrt();
            let shell = mag.round() as usize;
            let e = (m.a[0] * m.a[0] + m.a[1] * m.a[1] + m.a[2] * m.a[2]
                + m.b[0] * m.b[0]
                + m.b[1] * m.b[1]
                + m.b[2] * m.b[2])
                / 4.0;
            shell_spectrum[shell] += e;
        }

        let l1 = (2.0 * PI).sqrt() / self.k0;
        let tau = l1 / stats.u_rms;
        Ok(ChitInit {
            field,
            gas,
            stats,
            l1,
            tau,
            t_final: 3.0 * tau,
            max_spectral_divergence: max_div,
            shell_spectrum,
            modes,
        })
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn combine(e1: [f64; 3], e2: [f64; 3], c1: f64, c2: f64) -> [f64; 3] {
    [
        c1 * e1[0] + c2 * e2[0],
        c1 * e1[1] + c2 * e2[1],
        c1 * e1[2] + c2 * e2[2],
    ]
}

// ---------------------------------------------------------------------------
// Uniform free stream
// ---------------------------------------------------------------------------

/// Uniform flow, used to probe metric cancellation on curved grids: the
/// exact solution is the initial state for all time.
#[derive(Clone, Copy, Debug)]
pub struct Freestream {
    pub gamma: f64,
    pub rho: f64,
    pub u: [f64; 3],
    pub p: f64,
    pub t_final: f64,
}

impl Default for Freestream {
    fn default() -> Self {
        Freestream {
            gamma: 1.4,
            rho: 1.0,
            u: [0.3, -0.2, 0.1],
            p: 1.0,
            t_final: 10.0,
        }
    }
}

impl Freestream {
    pub fn gas(&self) -> GasModel {
        GasModel::inviscid(self.gamma, 1.0)
    }

    pub fn state(&self) -> State5 {
        conserved(self.rho, self.u, self.p, &self.gas())
    }

    pub fn initial_field(&self, grid: &Grid) -> FieldArray {
        let gas = self.gas();
        project_primitives(grid, &gas, |_| (self.rho, self.u, self.p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_cartesian;
    use crate::sbp::SbpOperator1D;

    fn tensor_op(p: usize) -> TensorOperator {
        TensorOperator::new(SbpOperator1D::build_lgl(p).unwrap())
    }

    /// Small deterministic xorshift for test point sampling.
    struct TestRng(u64);
    impl TestRng {
        fn next(&mut self) -> f64 {
            self.0 ^= self.0 << 13;
            self.0 ^= self.0 >> 7;
            self.0 ^= self.0 << 17;
            (self.0 >> 11) as f64 / (1u64 << 53) as f64
        }
    }

    // ---- vortex ----

    #[test]
    fn vortex_center_carries_only_the_translation_velocity() {
        let v = Vortex::default();
        let lengths = v.domain.lengths();
        let center = [
            v.domain.lo[0] + 0.5 * lengths[0],
            v.domain.lo[1] + 0.5 * lengths[1],
            v.domain.lo[2] + 0.5 * lengths[2],
        ];
        let (_, u, _) = v.primitives_at(center, 0.0);
        let trans = v.translation();
        for d in 0..3 {
            assert!((u[d] - trans[d]).abs() <= 1e-15);
        }
    }

    #[test]
    fn vortex_far_field_recovers_the_free_stream() {
        let v = Vortex::default();
        // A corner of the box is ~8.6 from the axis: exp(1−r²) ≈ 0.
        let (rho, _, p) = v.primitives_at([0.0, 0.0, 10.0], 0.0);
        assert!((rho - 1.0).abs() <= 1e-12);
        let r_gas = 1.0 / (v.gamma * v.mach * v.mach);
        assert!((p - r_gas).abs() <= 1e-11);
    }

    #[test]
    fn vortex_density_temperature_coupling_is_isentropic() {
        let v = Vortex::default();
        let gas = v.gas();
        let mut rng = TestRng(0x9e3779b97f4a7c15);
        for _ in 0..100 {
            let x = [10.0 * rng.next(), 10.0 * rng.next(), 10.0 * rng.next()];
            let (rho, _, p) = v.primitives_at(x, 0.7);
            let temp = p / (rho * gas.r);
            assert!(
                (rho - temp.powf(1.0 / (v.gamma - 1.0))).abs() <= 1e-13,
                "x = {x:?}"
            );
        }
    }

    /// The advertised exactness: the translated profile satisfies the
    /// compressible Euler equations. Checked with central finite differences
    /// of the conserved fluxes in space and of the state in time.
    #[test]
    fn vortex_solution_satisfies_euler_equations_to_fd_accuracy() {
        let v = Vortex::default();
        let gas = v.gas();
        let flux = |x: [f64; 3], t: f64, m: usize| -> [f64; 5] {
            let (rho, u, p) = v.primitives_at(x, t);
            let q = conserved(rho, u, p, &gas);
            let mut f = [0.0; 5];
            f[0] = q[1 + m];
            for i in 0..3 {
                f[1 + i] = q[1 + i] * u[m] + if i == m { p } else { 0.0 };
            }
            f[4] = (q[4] + p) * u[m];
            f
        };
        let h = 1e-5;
        let mut rng = TestRng(0x2545f4914f6cdd1d);
        let mut worst = 0.0_f64;
        for _ in 0..25 {
            // Sample within the region where the vortex has structure.
            let x = [
                3.0 + 4.0 * rng.next(),
                3.0 + 4.0 * rng.next(),
                3.0 + 4.0 * rng.next(),
            ];
            let t = 2.0 * rng.next();
            let mut resid = [0.0_f64; 5];
            for c in 0..5 {
                let qp = v.exact_state(x, t + h);
                let qm = v.exact_state(x, t - h);
                resid[c] += (qp[c] - qm[c]) / (2.0 * h);
            }
            for m in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[m] += h;
                xm[m] -= h;
                let fp = flux(xp, t, m);
                let fm = flux(xm, t, m);
                for c in 0..5 {
                    resid[c] += (fp[c] - fm[c]) / (2.0 * h);
                }
            }
            for r in resid {
                worst = worst.max(r.abs());
            }
        }
        assert!(worst <= 1e-7, "max Euler residual {worst:e}");
    }

    #[test]
    fn vortex_initial_field_is_admissible() {
        let v = Vortex::default();
        let op = tensor_op(3);
        let grid = build_cartesian(v.domain, [4; 3], &op, true).unwrap();
        let field = v.initial_field(&grid);
        let gas = v.gas();
        for e in 0..grid.num_elements {
            for node in 0..grid.nodes_per_element {
                crate::gas::primitives(&field.node_state(e, node), &gas).unwrap();
            }
        }
    }

    // ---- manufactured solution ----

    #[test]
    fn zeroed_amplitudes_make_the_source_vanish() {
        let m = Mms::default().uniform_variant();
        let mut rng = TestRng(0xdeadbeefcafef00d);
        for _ in 0..10 {
            let x = [rng.next(), rng.next(), rng.next()];
            let s = m.source_at(x);
            for c in 0..5 {
                assert_eq!(s[c], 0.0, "component {c} at {x:?}");
            }
        }
    }

    /// Independent check of the analytic source: apply the continuous
    /// operator by nested central differences of the flux functions built
    /// only from the primitive evaluators.
    #[test]
    fn analytic_source_matches_finite_difference_operator() {
        let ms = Mms::default();
        let gas = ms.gas();
        let gm1 = ms.gamma - 1.0;
        let mu = gas.mu;
        let kappa = gas.kappa();

        // Gradient of primitives by central differences (step h2).
        let h2 = 1e-5;
        let grad = |x: [f64; 3]| -> ([[f64; 3]; 3], [f64; 3]) {
            let mut du = [[0.0; 3]; 3]; // du[m][a]
            let mut dt = [0.0; 3];
            for m in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[m] += h2;
                xm[m] -= h2;
                let (rp, up, pp) = ms.primitives_at(xp);
                let (rm, um, pm) = ms.primitives_at(xm);
                for a in 0..3 {
                    du[m][a] = (up[a] - um[a]) / (2.0 * h2);
                }
                dt[m] = (pp / rp - pm / rm) / (2.0 * h2); // R = 1
            }
            (du, dt)
        };
        // Total flux (inviscid minus viscous) in direction m.
        let flux = |x: [f64; 3], m: usize| -> [f64; 5] {
            let (rho, u, p) = ms.primitives_at(x);
            let (du, dt) = grad(x);
            let divu = du[0][0] + du[1][1] + du[2][2];
            let mut f = [0.0; 5];
            f[0] = rho * u[m];
            let rho_e = p / gm1 + 0.5 * rho * (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
            f[4] = (rho_e + p) * u[m];
            for a in 0..3 {
                let tau = mu
                    * (du[m][a] + du[a][m] - if a == m { 2.0 / 3.0 * divu } else { 0.0 });
                f[1 + a] = rho * u[a] * u[m] + if a == m { p } else { 0.0 } - tau;
                f[4] -= tau * u[a];
            }
            f[4] -= kappa * dt[m];
            f
        };

        let h = 1e-5;
        let mut rng = TestRng(0x0123456789abcdef);
        for _ in 0..20 {
            let x = [
                0.05 + 0.9 * rng.next(),
                0.05 + 0.9 * rng.next(),
                0.05 + 0.9 * rng.next(),
            ];
            let analytic = ms.source_at(x);
            let mut fd = [0.0_f64; 5];
            for m in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[m] += h;
                xm[m] -= h;
                let fp = flux(xp, m);
                let fm = flux(xm, m);
                for c in 0..5 {
                    fd[c] += (fp[c] - fm[c]) / (2.0 * h);
                }
            }
            let mut num = 0.0;
            let mut den = 0.0;
            for c in 0..5 {
                num += (analytic[c] - fd[c]) * (analytic[c] - fd[c]);
                den += analytic[c] * analytic[c];
            }
            let rel = (num / den).sqrt();
            assert!(rel <= 1e-7, "relative source mismatch {rel:e} at {x:?}");
        }
    }

    #[test]
    fn manufactured_flow_is_supersonic_at_the_advertised_mach() {
        let ms = Mms::default();
        let nominal = ms.nominal_mach();
        assert!(
            (nominal - 2.14).abs() <= 0.01 * 2.14,
            "nominal Mach {nominal} should be within 1% of 2.14"
        );
        // The pointwise field stays supersonic despite the perturbations.
        let mut rng = TestRng(0xabcdef0123456789);
        for _ in 0..50 {
            let x = [rng.next(), rng.next(), rng.next()];
            let mach = ms.mach_at(x);
            assert!(mach > 1.5, "local Mach {mach} at {x:?}");
        }
    }

    // ---- transition vortex ----

    #[test]
    fn transition_vortex_velocity_vanishes_at_the_face_center() {
        // sin·cos·cos with two arguments at π/2: zero up to the rounding of
        // cos(π/2) ≈ 6.1e-17, squared.
        let tgv = Tgv::default();
        let (_, u, _) = tgv.primitives_at([PI / 2.0, PI / 2.0, PI / 2.0]);
        assert!(u[0].abs() <= 1e-30);
        assert!(u[1].abs() <= 1e-16);
        assert_eq!(u[2], 0.0);
    }

    #[test]
    fn transition_vortex_temperature_is_exactly_one() {
        let tgv = Tgv::default();
        let gas = tgv.gas();
        let mut rng = TestRng(0xfeedface0badf00d);
        for _ in 0..50 {
            let x = [
                -PI + 2.0 * PI * rng.next(),
                -PI + 2.0 * PI * rng.next(),
                -PI + 2.0 * PI * rng.next(),
            ];
            let (rho, _, p) = tgv.primitives_at(x);
            assert!((p / (rho * gas.r) - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn transition_vortex_mean_kinetic_energy_is_an_eighth() {
        // ⟨|U|²⟩ = 2·⟨sin²cos²cos²⟩ = 1/4 analytically, so the volume-mean
        // kinetic energy is ρ̄/8 up to the O(Ma²) density perturbation.
        let tgv = Tgv::default();
        let op = tensor_op(4);
        let grid = build_cartesian(tgv.domain(), [4; 3], &op, true).unwrap();
        let field = tgv.initial_field(&grid);
        let ek = crate::diagnostics::kinetic_energy_mean(&field, &grid, &op);
        assert!(
            (ek - 0.125).abs() <= 2.0 * tgv.mach * tgv.mach,
            "mean kinetic energy {ek}"
        );
        let u3_mean: f64 = {
            // The third velocity component is identically zero.
            let mut worst = 0.0_f64;
            for e in 0..grid.num_elements {
                for node in 0..grid.nodes_per_element {
                    let q = field.node_state(e, node);
                    worst = worst.max(q[3].abs());
                }
            }
            worst
        };
        assert_eq!(u3_mean, 0.0);
    }

    // ---- homogeneous turbulence ----

    #[test]
    fn turbulence_hits_the_target_mach_and_reynolds_numbers() {
        let chit = Chit { k_syn: 12, ..Default::default() };
        let op = tensor_op(2);
        let grid = build_cartesian(chit.domain(), [4; 3], &op, true).unwrap();
        let init = chit.initial(&grid, &op).unwrap();
        assert!(
            (init.stats.ma_t - 0.62).abs() <= 1e-3,
            "Ma_t = {}",
            init.stats.ma_t
        );
        let re = init.stats.re_lambda.unwrap();
        assert!((re - 194.0).abs() <= 1e-6 * 194.0, "Re_λ = {re}");
        assert!(init.tau > 0.0 && init.t_final > init.tau);
    }

    #[test]
    fn synthesized_modes_are_solenoidal_in_spectral_space() {
        let chit = Chit { k_syn: 12, ..Default::default() };
        let op = tensor_op(2);
        let grid = build_cartesian(chit.domain(), [4; 3], &op, true).unwrap();
        let init = chit.initial(&grid, &op).unwrap();
        let bound = 1e-10 * chit.k_syn as f64 * init.stats.u_rms;
        assert!(
            init.max_spectral_divergence <= bound,
            "divergence {:e} vs bound {:e}",
            init.max_spectral_divergence,
            bound
        );
    }

    #[test]
    fn shell_spectrum_peaks_at_the_nominal_wavenumber() {
        let chit = Chit::default();
        let op = tensor_op(2);
        let grid = build_cartesian(chit.domain(), [4; 3], &op, true).unwrap();
        let init = chit.initial(&grid, &op).unwrap();
        let argmax = init
            .shell_spectrum
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(argmax, chit.k0 as usize);
    }

    #[test]
    fn same_seed_reproduces_the_field_bitwise() {
        let chit = Chit { k_syn: 10, seed: 42, ..Default::default() };
        let op = tensor_op(1);
        let grid = build_cartesian(chit.domain(), [4; 3], &op, true).unwrap();
        let a = chit.initial(&grid, &op).unwrap();
        let b = chit.initial(&grid, &op).unwrap();
        assert_eq!(a.field.data(), b.field.data());
        let c = Chit { seed: 43, ..chit }.initial(&grid, &op).unwrap();
        assert_ne!(a.field.data(), c.field.data());
    }

    #[test]
    fn synthesis_cutoff_below_the_peak_is_a_configuration_error() {
        let chit = Chit { k_syn: 4, ..Default::default() };
        let op = tensor_op(2);
        let grid = build_cartesian(chit.domain(), [2; 3], &op, true).unwrap();
        assert!(chit.initial(&grid, &op).is_err());
    }

    // ---- free stream ----

    #[test]
    fn freestream_projects_the_same_state_everywhere() {
        let fs = Freestream::default();
        let op = tensor_op(2);
        let grid =
            crate::mesh::build_warped(Box3::cube(0.0, 1.0), [2; 3], &op, 0.08, true).unwrap();
        let field = fs.initial_field(&grid);
        let q0 = fs.state();
        for e in 0..grid.num_elements {
            for node in 0..grid.nodes_per_element {
                assert_eq!(field.node_state(e, node), q0);
            }
        }
    }
}
