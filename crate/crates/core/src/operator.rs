//! The discrete degenerate operator `u ↦ (a u_x)_x + α u` in conservative flux
//! form, with Robin or weighted-Neumann boundary rows.
//!
//! Row `i` is `(F_{i+1/2} − F_{i−1/2}) / w_i + α_i u_i` where `w_i` is the
//! trapezoid weight and `F_{i+1/2} = a(x_{i+1/2}) (u_{i+1} − u_i) / h_{i+1/2}`.
//! At the ends the trace flux is eliminated through the boundary relation, so
//! `w_i A_{i,j} = w_j A_{j,i}` holds by construction.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeff::{Degeneracy, DiffusionCoefficient};
use crate::error::{Assumption, Error, Result};
use crate::linalg::{solve_tridiagonal, symmetric_tridiagonal_eigen};
use crate::mesh::{GridFunction, Mesh};
use crate::inequalities::Family;
use crate::norms::midpoint_coefficients;
use crate::rng::trial_rng;

/// `β0 u(−1) + β1 (a u_x)(−1) = 0` and `γ0 u(1) + γ1 (a u_x)(1) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobinBC {
    pub beta0: f64,
    pub beta1: f64,
    pub gamma0: f64,
    pub gamma1: f64,
}

impl RobinBC {
    pub fn new(beta0: f64, beta1: f64, gamma0: f64, gamma1: f64) -> Result<Self> {
        let bc = Self {
            beta0,
            beta1,
            gamma0,
            gamma1,
        };
        bc.validate()?;
        Ok(bc)
    }

    /// Pure Neumann-type data `(a u_x)(±1) = 0`.
    pub fn flux_free() -> Self {
        Self {
            beta0: 0.0,
            beta1: 1.0,
            gamma0: 0.0,
            gamma1: 1.0,
        }
    }

    /// Nontriviality and the sign conditions `β0β1 ≤ 0`, `γ0γ1 ≥ 0`.
    pub fn validate(&self) -> Result<()> {
        let a = Assumption::A5WeaklyDegenerate;
        let all = [self.beta0, self.beta1, self.gamma0, self.gamma1];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::config(a, "Robin coefficients must be finite"));
        }
        if self.beta0 == 0.0 && self.beta1 == 0.0 {
            return Err(Error::config(a, "nontriviality: beta0 and beta1 both vanish"));
        }
        if self.gamma0 == 0.0 && self.gamma1 == 0.0 {
            return Err(Error::config(a, "nontriviality: gamma0 and gamma1 both vanish"));
        }
        if self.beta0 * self.beta1 > 0.0 {
            return Err(Error::config(a, "sign condition beta0*beta1 <= 0 violated"));
        }
        if self.gamma0 * self.gamma1 < 0.0 {
            return Err(Error::config(a, "sign condition gamma0*gamma1 >= 0 violated"));
        }
        Ok(())
    }
}

/// Boundary data: Robin for weak degeneracy, vanishing flux for strong.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BoundaryMode {
    Robin(RobinBC),
    WeightedNeumann,
}

impl BoundaryMode {
    pub fn validate(&self) -> Result<()> {
        match self {
            BoundaryMode::Robin(bc) => bc.validate(),
            BoundaryMode::WeightedNeumann => Ok(()),
        }
    }

    /// Rejects Robin data on a strongly degenerate coefficient.
    pub fn check_against(&self, coeff: &DiffusionCoefficient) -> Result<()> {
        self.validate()?;
        if let BoundaryMode::Robin(_) = self {
            if coeff.degeneracy()? == Degeneracy::StronglyDegenerate {
                return Err(Error::Mode(
                    "strongly degenerate coefficient requires weighted Neumann boundary data"
                        .into(),
                ));
            }
        }
        Ok(())
    }
}

/// How one end of the interval closes the system.
#[derive(Debug, Clone, Copy, PartialEq)]
enum End {
    /// Trace flux equals `slope · u_end`.
    Flux(f64),
    /// `u_end = 0`.
    Pinned,
}

impl End {
    fn pinned(self) -> bool {
        matches!(self, End::Pinned)
    }
}

/// Tridiagonal assembly of the operator for one reaction slice.
#[derive(Debug, Clone)]
pub struct OperatorAssembly {
    mesh: Arc<Mesh>,
    mode: BoundaryMode,
    a_mid: Vec<f64>,
    sub: Vec<f64>,
    flux_diag: Vec<f64>,
    sup: Vec<f64>,
    alpha: Vec<f64>,
    left: End,
    right: End,
}

impl OperatorAssembly {
    pub fn assemble(
        mesh: &Arc<Mesh>,
        coeff: &DiffusionCoefficient,
        alpha: &[f64],
        bc: BoundaryMode,
    ) -> Result<Self> {
        bc.check_against(coeff)?;
        Self::from_midpoint_coefficients(mesh, midpoint_coefficients(mesh, coeff), alpha, bc)
    }

    /// Assembly from precomputed midpoint samples of `a`. Boundary data are
    /// validated but not checked against the coefficient's degeneracy.
    pub fn from_midpoint_coefficients(
        mesh: &Arc<Mesh>,
        a_mid: Vec<f64>,
        alpha: &[f64],
        bc: BoundaryMode,
    ) -> Result<Self> {
        bc.validate()?;
        let len = mesh.len();
        if alpha.len() != len {
            return Err(Error::Shape {
                expected: len,
                got: alpha.len(),
            });
        }
        if a_mid.len() != mesh.cells() {
            return Err(Error::Shape {
                expected: mesh.cells(),
                got: a_mid.len(),
            });
        }
        let (left, right) = match bc {
            BoundaryMode::WeightedNeumann => (End::Flux(0.0), End::Flux(0.0)),
            BoundaryMode::Robin(r) => (
                if r.beta1 == 0.0 {
                    End::Pinned
                } else {
                    End::Flux(-r.beta0 / r.beta1)
                },
                if r.gamma1 == 0.0 {
                    End::Pinned
                } else {
                    End::Flux(-r.gamma0 / r.gamma1)
                },
            ),
        };
        let x = mesh.nodes();
        let w = mesh.weights();
        let n = mesh.cells();
        let mut sub = vec![0.0; len];
        let mut sup = vec![0.0; len];
        let mut flux_diag = vec![0.0; len];
        for c in 0..n {
            // Cell c couples nodes c and c+1 through F_{c+1/2}.
            let k = a_mid[c] / (x[c + 1] - x[c]);
            sup[c] = k / w[c];
            flux_diag[c] -= k / w[c];
            sub[c + 1] = k / w[c + 1];
            flux_diag[c + 1] -= k / w[c + 1];
        }
        // Row 0 carries −F₋ / w_0 and row N carries +F₊ / w_N.
        if let End::Flux(s) = left {
            flux_diag[0] -= s / w[0];
        }
        if let End::Flux(s) = right {
            flux_diag[n] += s / w[n];
        }
        Ok(Self {
            mesh: mesh.clone(),
            mode: bc,
            a_mid,
            sub,
            flux_diag,
            sup,
            alpha: alpha.to_vec(),
            left,
            right,
        })
    }

    /// Same diffusion part with a new reaction slice.
    pub fn with_alpha(&self, alpha: &[f64]) -> Result<Self> {
        if alpha.len() != self.alpha.len() {
            return Err(Error::Shape {
                expected: self.alpha.len(),
                got: alpha.len(),
            });
        }
        let mut next = self.clone();
        next.alpha.copy_from_slice(alpha);
        Ok(next)
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn mode(&self) -> BoundaryMode {
        self.mode
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn midpoint_coefficients(&self) -> &[f64] {
        &self.a_mid
    }

    pub fn sub(&self) -> &[f64] {
        &self.sub
    }

    pub fn sup(&self) -> &[f64] {
        &self.sup
    }

    pub fn diag(&self) -> Vec<f64> {
        self.flux_diag
            .iter()
            .zip(&self.alpha)
            .map(|(d, a)| d + a)
            .collect()
    }

    /// Whether `u` is pinned to zero at the left and right ends.
    pub fn pinned(&self) -> (bool, bool) {
        (self.left.pinned(), self.right.pinned())
    }

    fn is_pinned(&self, i: usize) -> bool {
        (i == 0 && self.left.pinned()) || (i == self.mesh.cells() && self.right.pinned())
    }

    /// `A u`, with zero rows at pinned ends.
    pub fn apply(&self, u: &GridFunction) -> Result<Vec<f64>> {
        if !u.mesh().same_as(&self.mesh) {
            return Err(Error::Shape {
                expected: self.mesh.len(),
                got: u.values().len(),
            });
        }
        Ok(self.apply_values(u.values()))
    }

    pub(crate) fn apply_values(&self, u: &[f64]) -> Vec<f64> {
        let len = u.len();
        (0..len)
            .map(|i| {
                if self.is_pinned(i) {
                    return 0.0;
                }
                let mut v = (self.flux_diag[i] + self.alpha[i]) * u[i];
                if i > 0 && !self.is_pinned(i - 1) {
                    v += self.sub[i] * u[i - 1];
                }
                if i + 1 < len && !self.is_pinned(i + 1) {
                    v += self.sup[i] * u[i + 1];
                }
                v
            })
            .collect()
    }

    /// `Σ w_i (A u)_i u_i`, with `u` read as zero at pinned ends.
    pub fn quadratic_form(&self, u: &GridFunction) -> Result<f64> {
        let au = self.apply(u)?;
        Ok(self
            .mesh
            .weights()
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.is_pinned(*i))
            .map(|(i, w)| w * au[i] * u.values()[i])
            .sum())
    }

    /// Largest `|w_i A_{ij} − w_j A_{ji}|` relative to the largest `|w_i A_{ij}|`,
    /// over rows and columns that are not pinned.
    pub fn check_self_adjoint(&self) -> f64 {
        let w = self.mesh.weights();
        let len = w.len();
        let mut scale: f64 = 0.0;
        for i in (0..len).filter(|&i| !self.is_pinned(i)) {
            scale = scale.max((w[i] * (self.flux_diag[i] + self.alpha[i])).abs());
            if i > 0 && !self.is_pinned(i - 1) {
                scale = scale.max((w[i] * self.sub[i]).abs());
            }
            if i + 1 < len && !self.is_pinned(i + 1) {
                scale = scale.max((w[i] * self.sup[i]).abs());
            }
        }
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for i in 0..len - 1 {
            if self.is_pinned(i) || self.is_pinned(i + 1) {
                continue;
            }
            worst = worst.max((w[i] * self.sup[i] - w[i + 1] * self.sub[i + 1]).abs());
        }
        worst / scale
    }

    /// A copy with the super-diagonal entry of `row` scaled by `1 + rel`.
    pub fn perturbed(&self, row: usize, rel: f64) -> Self {
        let mut next = self.clone();
        next.sup[row] *= 1.0 + rel;
        next
    }

    /// Solves `(I − dt A) v = u + dt·source`; pinned ends give `v = 0` there.
    pub fn implicit_step(&self, u: &GridFunction, dt: f64, source: &[f64]) -> Result<GridFunction> {
        if !u.mesh().same_as(&self.mesh) {
            return Err(Error::Shape {
                expected: self.mesh.len(),
                got: u.values().len(),
            });
        }
        let v = self.implicit_step_values(u.values(), dt, source)?;
        GridFunction::new(self.mesh.clone(), v)
    }

    pub(crate) fn implicit_step_values(&self, u: &[f64], dt: f64, source: &[f64]) -> Result<Vec<f64>> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::domain(format!("time step dt = {dt} must be positive")));
        }
        let len = self.mesh.len();
        if source.len() != len || u.len() != len {
            return Err(Error::Shape {
                expected: len,
                got: if source.len() != len {
                    source.len()
                } else {
                    u.len()
                },
            });
        }
        let mut sub = vec![0.0; len];
        let mut diag = vec![0.0; len];
        let mut sup = vec![0.0; len];
        let mut rhs = vec![0.0; len];
        for i in 0..len {
            if self.is_pinned(i) {
                diag[i] = 1.0;
                continue;
            }
            diag[i] = 1.0 - dt * (self.flux_diag[i] + self.alpha[i]);
            if i > 0 && !self.is_pinned(i - 1) {
                sub[i] = -dt * self.sub[i];
            }
            if i + 1 < len && !self.is_pinned(i + 1) {
                sup[i] = -dt * self.sup[i];
            }
            rhs[i] = u[i] + dt * source[i];
        }
        solve_tridiagonal(&sub, &diag, &sup, &rhs)
    }

    /// Residuals of the two boundary relations after a step `prev → next`.
    ///
    /// The trace flux is recovered from the end row of the step equation and
    /// inserted into the boundary relation.
    pub fn boundary_residuals(&self, prev: &[f64], next: &[f64], dt: f64, source: &[f64]) -> (f64, f64) {
        let x = self.mesh.nodes();
        let w = self.mesh.weights();
        let n = self.mesh.cells();
        let rate = |i: usize| (next[i] - prev[i]) / dt - source[i] - self.alpha[i] * next[i];
        let f_left_cell = self.a_mid[0] * (next[1] - next[0]) / (x[1] - x[0]);
        let f_right_cell = self.a_mid[n - 1] * (next[n] - next[n - 1]) / (x[n] - x[n - 1]);
        let trace_left = f_left_cell - w[0] * rate(0);
        let trace_right = f_right_cell + w[n] * rate(n);
        let residual = |end: End, u: f64, trace: f64, c0: f64, c1: f64| match (self.mode, end) {
            (_, End::Pinned) => u.abs(),
            (BoundaryMode::WeightedNeumann, _) => trace.abs(),
            (BoundaryMode::Robin(_), End::Flux(_)) => (c0 * u + c1 * trace).abs(),
        };
        let (b0, b1, g0, g1) = match self.mode {
            BoundaryMode::Robin(r) => (r.beta0, r.beta1, r.gamma0, r.gamma1),
            BoundaryMode::WeightedNeumann => (0.0, 1.0, 0.0, 1.0),
        };
        (
            residual(self.left, next[0], trace_left, b0, b1),
            residual(self.right, next[n], trace_right, g0, g1),
        )
    }

    /// Eigenpairs of the assembled operator in the weighted inner product,
    /// ascending by eigenvalue. Vectors are nodal, `w`-orthonormal, and zero
    /// at pinned ends.
    pub fn weighted_eigen(&self) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let w = self.mesh.weights();
        let len = w.len();
        let free: Vec<usize> = (0..len).filter(|&i| !self.is_pinned(i)).collect();
        let sqrt_w: Vec<f64> = free.iter().map(|&i| w[i].sqrt()).collect();
        let diag: Vec<f64> = free
            .iter()
            .map(|&i| self.flux_diag[i] + self.alpha[i])
            .collect();
        // W^{1/2} A W^{-1/2} is symmetric because w_i A_{i,i+1} = w_{i+1} A_{i+1,i}.
        let off: Vec<f64> = free
            .windows(2)
            .enumerate()
            .map(|(k, pair)| self.sup[pair[0]] * sqrt_w[k] / sqrt_w[k + 1])
            .collect();
        let eig = symmetric_tridiagonal_eigen(&diag, &off)?;
        let vectors = eig
            .vectors
            .into_iter()
            .map(|y| {
                let mut v = vec![0.0; len];
                for (k, &i) in free.iter().enumerate() {
                    v[i] = y[k] / sqrt_w[k];
                }
                v
            })
            .collect();
        Ok((eig.values, vectors))
    }
}

/// Random Robin data meeting nontriviality and both sign conditions. About one
/// draw in five puts an end on its Dirichlet or Neumann limit.
pub fn random_admissible_bc<R: Rng>(rng: &mut R) -> RobinBC {
    let angle = |rng: &mut R| match rng.gen_range(0..10) {
        0 => 0.0,
        1 => FRAC_PI_2,
        _ => rng.gen_range(0.0..FRAC_PI_2),
    };
    let (phi, psi) = (angle(rng), angle(rng));
    let sb = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let sg = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let (rb, rg) = (rng.gen_range(0.1..3.0), rng.gen_range(0.1..3.0));
    RobinBC {
        beta0: sb * rb * phi.cos(),
        beta1: -sb * rb * phi.sin(),
        gamma0: sg * rg * psi.cos(),
        gamma1: sg * rg * psi.sin(),
    }
}

/// Relative weighted asymmetry accepted as self-adjoint.
pub const ASYMMETRY_TOL: f64 = 1e-12;

/// A form counts as nonpositive when it is at most this many ulps of the
/// absolute sum of its terms.
pub const FORM_ULPS: f64 = 64.0;

/// Self-adjointness and dissipativity of one boundary mode on a function sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatorCheckRow {
    pub bc: BoundaryMode,
    pub asymmetry: f64,
    pub self_adjoint: bool,
    pub functions: usize,
    /// Largest `Σ w_i (A u)_i u_i` over the sweep.
    pub max_form: f64,
    /// Largest form divided by `Σ |w_i (A u)_i u_i|`.
    pub max_relative_form: f64,
    pub dissipative: bool,
}

/// Assembles `α ≡ 0` for each mode and evaluates the form on `functions`
/// random grid functions shared by all modes.
pub fn dissipativity_sweep(
    mesh: &Arc<Mesh>,
    coeff: &DiffusionCoefficient,
    modes: &[BoundaryMode],
    functions: usize,
    seed: u64,
) -> Result<Vec<OperatorCheckRow>> {
    let samples: Vec<GridFunction> = (0..functions)
        .map(|j| {
            let mut rng = trial_rng(seed, &[j as u64]);
            let family = Family::ALL[rng.gen_range(0..Family::ALL.len())];
            let params = family.random_params(false, &mut rng);
            let scale = 10f64.powf(rng.gen_range(-2.0..2.0));
            family.grid_function(&params, mesh).scaled(scale)
        })
        .collect();
    let zero = vec![0.0; mesh.len()];
    modes
        .par_iter()
        .map(|&mode| {
            let op = OperatorAssembly::assemble(mesh, coeff, &zero, mode)?;
            let asymmetry = op.check_self_adjoint();
            let mut max_form = f64::NEG_INFINITY;
            let mut max_relative_form = f64::NEG_INFINITY;
            for u in &samples {
                let au = op.apply(u)?;
                let w = mesh.weights();
                let terms = (0..w.len())
                    .filter(|&i| !op.is_pinned(i))
                    .map(|i| w[i] * au[i] * u.values()[i]);
                let magnitude: f64 = terms.clone().map(f64::abs).sum();
                let form = op.quadratic_form(u)?;
                max_form = max_form.max(form);
                if magnitude > 0.0 {
                    max_relative_form = max_relative_form.max(form / magnitude);
                }
            }
            Ok(OperatorCheckRow {
                bc: mode,
                asymmetry,
                self_adjoint: asymmetry <= ASYMMETRY_TOL,
                functions,
                max_form,
                max_relative_form,
                dissipative: max_relative_form <= FORM_ULPS * f64::EPSILON,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;
    use crate::norms::seminorm_sq_values;
    use proptest::prelude::*;

    fn legendre2(x: f64) -> f64 {
        0.5 * (3.0 * x * x - 1.0)
    }

    fn dirichlet() -> BoundaryMode {
        BoundaryMode::Robin(RobinBC::new(1.0, 0.0, 1.0, 0.0).unwrap())
    }

    #[test]
    fn laplacian_stencil_on_uniform_mesh() {
        let mesh = Mesh::new(16, 1.0).unwrap();
        let op = OperatorAssembly::assemble(
            &mesh,
            &DiffusionCoefficient::constant_one(),
            &[0.0; 17],
            dirichlet(),
        )
        .unwrap();
        let h: f64 = 0.125;
        let d = op.diag();
        for i in 1..16 {
            assert!((op.sub()[i] * h * h - 1.0).abs() < 1e-12);
            assert!((op.sup()[i] * h * h - 1.0).abs() < 1e-12);
            assert!((d[i] * h * h + 2.0).abs() < 1e-12);
        }
        assert_eq!(op.pinned(), (true, true));
    }

    #[test]
    fn legendre_eigenfunction_second_order() {
        let coeff = DiffusionCoefficient::power_law(1.0).unwrap();
        let mut errs = Vec::new();
        for n in [64, 128, 256] {
            let mesh = Mesh::new(n, 1.0).unwrap();
            let op = OperatorAssembly::assemble(
                &mesh,
                &coeff,
                &vec![0.0; n + 1],
                BoundaryMode::WeightedNeumann,
            )
            .unwrap();
            let u = GridFunction::from_fn(&mesh, legendre2);
            let au = op.apply(&u).unwrap();
            let err: f64 = au
                .iter()
                .zip(mesh.nodes())
                .skip(1)
                .take(n - 1)
                .map(|(v, &x)| (v + 6.0 * legendre2(x)).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[0] < 1e-2, "{errs:?}");
        let order = (errs[1] / errs[2]).log2();
        assert!(order > 1.7, "{errs:?}");
    }

    #[test]
    fn constants_map_to_alpha_under_neumann() {
        let mesh = Mesh::new(32, 2.0).unwrap();
        let coeff = DiffusionCoefficient::power_law(0.5).unwrap();
        let op = OperatorAssembly::assemble(&mesh, &coeff, &vec![1.0; 33], BoundaryMode::WeightedNeumann)
            .unwrap();
        let one = GridFunction::from_fn(&mesh, |_| 1.0);
        for v in op.apply(&one).unwrap() {
            assert!((v - 1.0).abs() < 1e-9);
        }
        let c = 0.75;
        let op = op.with_alpha(&vec![c; 33]).unwrap();
        assert!((op.quadratic_form(&one).unwrap() - 2.0 * c).abs() < 1e-9);
    }

    #[test]
    fn strongly_degenerate_robin_is_a_mode_error() {
        let mesh = Mesh::new(16, 2.0).unwrap();
        let coeff = DiffusionCoefficient::power_law(1.0).unwrap();
        let r = OperatorAssembly::assemble(
            &mesh,
            &coeff,
            &[0.0; 17],
            BoundaryMode::Robin(RobinBC::flux_free()),
        );
        assert!(matches!(r, Err(Error::Mode(_))));
    }

    #[test]
    fn sign_conditions_are_enforced() {
        assert!(matches!(
            RobinBC::new(1.0, 1.0, 1.0, 1.0),
            Err(Error::Config {
                assumption: Some(Assumption::A5WeaklyDegenerate),
                ..
            })
        ));
        assert!(RobinBC::new(0.0, 0.0, 1.0, 1.0).is_err());
        assert!(RobinBC::new(1.0, -1.0, -1.0, 1.0).is_err());
        assert!(RobinBC::new(1.0, -1.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn perturbation_is_detected() {
        let mesh = Mesh::new(32, 2.0).unwrap();
        let coeff = DiffusionCoefficient::power_law(0.5).unwrap();
        let op = OperatorAssembly::assemble(
            &mesh,
            &coeff,
            &vec![0.0; 33],
            BoundaryMode::Robin(RobinBC::new(1.0, -2.0, 0.5, 1.0).unwrap()),
        )
        .unwrap();
        assert!(op.check_self_adjoint() <= 1e-12);
        assert!(op.perturbed(16, 1e-3).check_self_adjoint() >= 1e-4);
    }

    #[test]
    fn constants_are_equilibria_of_the_step() {
        let mesh = Mesh::new(32, 2.0).unwrap();
        let coeff = DiffusionCoefficient::power_law(1.0).unwrap();
        let op = OperatorAssembly::assemble(&mesh, &coeff, &vec![0.0; 33], BoundaryMode::WeightedNeumann)
            .unwrap();
        let one = GridFunction::from_fn(&mesh, |_| 1.0);
        let v = op.implicit_step(&one, 0.1, &vec![0.0; 33]).unwrap();
        for x in v.values() {
            assert!((x - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn step_damps_legendre_mode() {
        let coeff = DiffusionCoefficient::power_law(1.0).unwrap();
        let dt = 0.01;
        let mut errs = Vec::new();
        for n in [64, 128, 256] {
            let mesh = Mesh::new(n, 1.0).unwrap();
            let op = OperatorAssembly::assemble(&mesh, &coeff, &vec![0.0; n + 1], BoundaryMode::WeightedNeumann)
                .unwrap();
            let u = GridFunction::from_fn(&mesh, legendre2);
            let v = op.implicit_step(&u, dt, &vec![0.0; n + 1]).unwrap();
            let err: Vec<f64> = v
                .values()
                .iter()
                .zip(u.values())
                .map(|(vi, ui)| vi - ui / (1.0 + 6.0 * dt))
                .collect();
            errs.push(crate::norms::lp_norm(&GridFunction::new(mesh, err).unwrap(), 2.0).unwrap());
        }
        assert!(errs[2] < 2e-5, "{errs:?}");
        assert!((errs[1] / errs[2]).log2() > 1.4, "{errs:?}");
    }

    #[test]
    fn nonpositive_step_is_rejected() {
        let mesh = Mesh::new(8, 1.0).unwrap();
        let op = OperatorAssembly::assemble(
            &mesh,
            &DiffusionCoefficient::constant_one(),
            &[0.0; 9],
            BoundaryMode::WeightedNeumann,
        )
        .unwrap();
        let u = GridFunction::zeros(&mesh);
        assert!(op.implicit_step(&u, 0.0, &[0.0; 9]).is_err());
    }

    #[test]
    fn eigenvectors_are_weighted_orthonormal() {
        let mesh = Mesh::new(24, 2.0).unwrap();
        let coeff = DiffusionCoefficient::power_law(1.0).unwrap();
        let op = OperatorAssembly::assemble(&mesh, &coeff, &[0.0; 25], BoundaryMode::WeightedNeumann)
            .unwrap();
        let (values, vectors) = op.weighted_eigen().unwrap();
        assert_eq!(values.len(), 25);
        assert!(values[24].abs() < 1e-10);
        let w = mesh.weights();
        for (j, vj) in vectors.iter().enumerate() {
            let av = op.apply_values(vj);
            for i in 0..25 {
                assert!((av[i] - values[j] * vj[i]).abs() < 1e-8 * values[j].abs().max(1.0));
            }
            for vk in vectors.iter().skip(j) {
                let ip: f64 = (0..25).map(|i| w[i] * vj[i] * vk[i]).sum();
                let expect = if std::ptr::eq(vj, vk) { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-10);
            }
        }
    }

    fn robin_strategy() -> impl Strategy<Value = RobinBC> {
        (0.0..3.0f64, 0.0..3.0f64, 0.0..3.0f64, 0.0..3.0f64, any::<bool>(), any::<bool>())
            .prop_filter_map("nontrivial", |(b0, b1, g0, g1, s, t)| {
                let sb = if s { 1.0 } else { -1.0 };
                let sg = if t { 1.0 } else { -1.0 };
                RobinBC::new(sb * b0, -sb * b1, sg * g0, sg * g1).ok()
            })
    }

    #[test]
    fn sampled_bcs_are_admissible_and_dissipative() {
        let mut rng = crate::rng::trial_rng(5, &[]);
        let modes: Vec<BoundaryMode> = (0..10)
            .map(|_| {
                let bc = random_admissible_bc(&mut rng);
                bc.validate().unwrap();
                BoundaryMode::Robin(bc)
            })
            .collect();
        let mesh = Mesh::new(64, 2.0).unwrap();
        let coeff = DiffusionCoefficient::power_law(0.5).unwrap();
        let rows = dissipativity_sweep(&mesh, &coeff, &modes, 100, 3).unwrap();
        for r in &rows {
            assert!(r.self_adjoint && r.dissipative, "{r:?}");
        }
        let sd = DiffusionCoefficient::power_law(1.5).unwrap();
        let rows = dissipativity_sweep(&mesh, &sd, &[BoundaryMode::WeightedNeumann], 50, 3).unwrap();
        assert!(rows[0].dissipative && rows[0].self_adjoint);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn form_matches_summation_by_parts(
            bc in robin_strategy(),
            vals in proptest::collection::vec(-2.0..2.0f64, 33),
            gamma in 0.1..0.95f64,
        ) {
            let mesh = Mesh::new(32, 2.0).unwrap();
            let coeff = DiffusionCoefficient::power_law(gamma).unwrap();
            let op = OperatorAssembly::assemble(&mesh, &coeff, &vec![0.0; 33], BoundaryMode::Robin(bc)).unwrap();
            let u = GridFunction::new(mesh.clone(), vals).unwrap();
            let form = op.quadratic_form(&u).unwrap();
            let (pl, pr) = op.pinned();
            let mut z = u.values().to_vec();
            if pl { z[0] = 0.0; }
            if pr { z[32] = 0.0; }
            let mut identity = -seminorm_sq_values(&mesh, op.midpoint_coefficients(), &z);
            if !pr { identity -= bc.gamma0 / bc.gamma1 * z[32] * z[32]; }
            if !pl { identity += bc.beta0 / bc.beta1 * z[0] * z[0]; }
            prop_assert!((form - identity).abs() <= 1e-10 * (1.0 + identity.abs()));
            prop_assert!(form <= 0.0);
            prop_assert!(op.check_self_adjoint() <= 1e-12);
        }

        #[test]
        fn shifted_dissipativity(
            bc in robin_strategy(),
            vals in proptest::collection::vec(-2.0..2.0f64, 33),
            alpha in proptest::collection::vec(-3.0..3.0f64, 33),
        ) {
            let mesh = Mesh::new(32, 2.0).unwrap();
            let coeff = DiffusionCoefficient::power_law(0.5).unwrap();
            let op = OperatorAssembly::assemble(&mesh, &coeff, &alpha, BoundaryMode::Robin(bc)).unwrap();
            let u = GridFunction::new(mesh.clone(), vals).unwrap();
            let shift = alpha.iter().fold(0.0f64, |m, a| m.max(*a));
            let l2w = mesh.integrate(&u.values().iter().map(|v| v * v).collect::<Vec<_>>()).unwrap();
            prop_assert!(op.quadratic_form(&u).unwrap() <= shift * l2w + 1e-12);
        }

        #[test]
        fn step_is_linear_and_contractive(
            bc in robin_strategy(),
            u1 in proptest::collection::vec(-2.0..2.0f64, 33),
            u2 in proptest::collection::vec(-2.0..2.0f64, 33),
            s1 in proptest::collection::vec(-2.0..2.0f64, 33),
            s2 in proptest::collection::vec(-2.0..2.0f64, 33),
            lambda in -3.0..3.0f64,
        ) {
            let mesh = Mesh::new(32, 2.0).unwrap();
            let coeff = DiffusionCoefficient::power_law(0.5).unwrap();
            let op = OperatorAssembly::assemble(&mesh, &coeff, &vec![0.0; 33], BoundaryMode::Robin(bc)).unwrap();
            let dt = 0.05;
            let comb = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + lambda * y).collect::<Vec<_>>();
            let v1 = op.implicit_step_values(&u1, dt, &s1).unwrap();
            let v2 = op.implicit_step_values(&u2, dt, &s2).unwrap();
            let v12 = op.implicit_step_values(&comb(&u1, &u2), dt, &comb(&s1, &s2)).unwrap();
            let expect = comb(&v1, &v2);
            for (a, b) in v12.iter().zip(&expect) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
            let zero = vec![0.0; 33];
            let v = op.implicit_step_values(&u1, dt, &zero).unwrap();
            let l2 = |z: &[f64]| mesh.integrate(&z.iter().map(|v| v * v).collect::<Vec<_>>()).unwrap();
            prop_assert!(l2(&v) <= l2(&u1) * (1.0 + 1e-12));
        }
    }
}
