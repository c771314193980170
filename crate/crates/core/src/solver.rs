//! Strict solutions by implicit Euler with per-step Picard iteration, strong
//! solutions by spectrally regularized data, the stability bound between two
//! solutions, and convergence studies against exact solutions.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeff::{Degeneracy, DiffusionCoefficient};
use crate::error::{Assumption, Error, Result};
use crate::field::Field;
use crate::inequalities::Family;
use crate::mesh::{GridFunction, Mesh, SpaceTimeFunction, TimeGrid};
use crate::nemytskii::{theta_sup, validate_a3, NemytskiiModel, DEFAULT_BOX};
use crate::norms::{b_norm, lp_values, norm_1a, SpaceTimeAccumulator};
use crate::operator::{BoundaryMode, OperatorAssembly, RobinBC};
use crate::report::extended_real;
use crate::rng::trial_rng;

/// What the initial datum is claimed to satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegularityClaim {
    #[serde(rename = "h1a")]
    H1a,
    #[serde(rename = "l2only")]
    L2Only,
}

/// Initial data, e.g. `{"kind": "legendre", "n": 2}` or `{"kind": "sign"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialDatum {
    Legendre { n: usize },
    Sign,
    Constant { value: f64 },
    /// `1 + (1−x²)^{3/2}`.
    Manufactured,
    /// Piecewise-linear interpolation of samples covering `[-1, 1]`.
    Tabulated { nodes: Vec<f64>, values: Vec<f64> },
}

/// Legendre polynomial `P_n(x)` by the three-term recurrence.
pub fn legendre(n: usize, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return p0;
    }
    for k in 1..n {
        let k = k as f64;
        let p2 = ((2.0 * k + 1.0) * x * p1 - k * p0) / (k + 1.0);
        p0 = p1;
        p1 = p2;
    }
    p1
}

impl InitialDatum {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(Assumption::A1, m.to_string()));
        match self {
            InitialDatum::Constant { value } if !value.is_finite() => bad("constant datum is not finite"),
            InitialDatum::Tabulated { nodes, values } => {
                if nodes.len() < 2 || nodes.len() != values.len() {
                    return bad("tabulated datum needs matching nodes and values (at least 2)");
                }
                if nodes[0] > -1.0 || *nodes.last().unwrap() < 1.0 || nodes.windows(2).any(|w| !(w[1] > w[0])) {
                    return bad("tabulated datum nodes must increase and cover [-1, 1]");
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return bad("tabulated datum has a non-finite value");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            InitialDatum::Legendre { n } => legendre(*n, x),
            InitialDatum::Sign => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            InitialDatum::Constant { value } => *value,
            InitialDatum::Manufactured => 1.0 + ((1.0 - x) * (1.0 + x)).max(0.0).powf(1.5),
            InitialDatum::Tabulated { nodes, values } => {
                let j = nodes.partition_point(|&g| g <= x).clamp(1, nodes.len() - 1) - 1;
                let s = ((x - nodes[j]) / (nodes[j + 1] - nodes[j])).clamp(0.0, 1.0);
                (1.0 - s) * values[j] + s * values[j + 1]
            }
        }
    }

    pub fn grid(&self, mesh: &Arc<Mesh>) -> GridFunction {
        GridFunction::from_fn(mesh, |x| self.eval(x))
    }
}

/// A complete problem instance.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub coeff: DiffusionCoefficient,
    pub bc: BoundaryMode,
    pub alpha: Field,
    pub model: NemytskiiModel,
    pub horizon: f64,
    pub u0: InitialDatum,
    pub regularity_claim: RegularityClaim,
}

impl ProblemSpec {
    /// Cross-checks boundary data, growth range, reaction bound and datum.
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::plain_config(format!("horizon T = {} must be positive", self.horizon)));
        }
        let class = self.coeff.degeneracy()?;
        self.bc.check_against(&self.coeff)?;
        if !self.model.is_zero() && self.model.theta_sup != theta_sup(class) {
            let assumption = match class {
                Degeneracy::StronglyDegenerate => Assumption::A5StronglyDegenerate,
                _ => Assumption::A5WeaklyDegenerate,
            };
            return Err(Error::config(
                assumption,
                format!(
                    "nonlinearity built for theta_sup = {} but the coefficient requires {}",
                    self.model.theta_sup,
                    theta_sup(class)
                ),
            ));
        }
        if self.model.theta >= self.model.theta_sup {
            return Err(Error::config(Assumption::A3, "growth exponent out of range"));
        }
        self.alpha
            .validate(self.horizon)
            .map_err(|e| Error::config(Assumption::A2, e.to_string()))?;
        self.u0.validate()?;
        if self.coeff.violates_a4() {
            log::warn!("coefficient does not vanish at the endpoints; running as a non-degenerate sanity check");
        }
        Ok(())
    }

    /// `‖α⁺‖_∞` over `Q_T`.
    pub fn alpha_plus(&self) -> f64 {
        self.alpha.sup_positive(self.horizon)
    }

    /// `C_T = exp((ν + ‖α⁺‖_∞) T)` with the model's declared `ν`.
    pub fn stability_constant(&self) -> f64 {
        ((self.model.nu + self.alpha_plus()) * self.horizon).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    /// Start Picard from the previous time level.
    Previous,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub n: usize,
    pub m: usize,
    pub grading: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub initial_guess: InitialGuess,
    /// Keep every `store_every`-th slice; must divide `m`.
    pub store_every: usize,
}

impl SolverSettings {
    pub fn new(n: usize, m: usize, grading: f64) -> Self {
        Self {
            n,
            m,
            grading,
            picard_tol: 1e-10,
            picard_max: 50,
            initial_guess: InitialGuess::Previous,
            store_every: 1,
        }
    }

    /// Grading 2 clusters nodes where `a` vanishes; uniform otherwise.
    pub fn default_grading(coeff: &DiffusionCoefficient) -> f64 {
        if coeff.violates_a4() {
            1.0
        } else {
            2.0
        }
    }
}

/// A strict solve and its diagnostics.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub solution: SpaceTimeFunction,
    pub final_state: GridFunction,
    pub b_norm: f64,
    pub h_norm: Option<f64>,
    pub hilbert_h_norm: Option<f64>,
    pub picard_iterations: Vec<usize>,
    /// Picard increments per step.
    pub residuals: Vec<Vec<f64>>,
    /// `|boundary relation|` at `(−1, 1)` per step.
    pub boundary_residuals: Vec<[f64; 2]>,
    pub min_value: f64,
    /// `‖u(t_n)‖_{L²}` per time node.
    pub l2_history: Vec<f64>,
}

/// Serializable digest of a [`SolveResult`].
#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub n: usize,
    pub m: usize,
    pub b_norm: f64,
    pub h_norm: Option<f64>,
    pub hilbert_h_norm: Option<f64>,
    pub total_picard_iterations: usize,
    pub max_picard_iterations: usize,
    pub max_final_residual: f64,
    pub max_boundary_residual: f64,
    pub min_value: f64,
    pub final_l2: f64,
}

impl SolveResult {
    pub fn summary(&self) -> SolveSummary {
        SolveSummary {
            n: self.final_state.mesh().cells(),
            m: self.picard_iterations.len(),
            b_norm: self.b_norm,
            h_norm: self.h_norm,
            hilbert_h_norm: self.hilbert_h_norm,
            total_picard_iterations: self.picard_iterations.iter().sum(),
            max_picard_iterations: self.picard_iterations.iter().copied().max().unwrap_or(0),
            max_final_residual: self
                .residuals
                .iter()
                .filter_map(|r| r.last())
                .fold(0.0, |m: f64, &r| m.max(r)),
            max_boundary_residual: self
                .boundary_residuals
                .iter()
                .flatten()
                .fold(0.0, |m: f64, &r| m.max(r)),
            min_value: self.min_value,
            final_l2: self.l2_history.last().copied().unwrap_or(0.0),
        }
    }
}

struct Telemetry {
    picard_iterations: Vec<usize>,
    residuals: Vec<Vec<f64>>,
    boundary_residuals: Vec<[f64; 2]>,
}

/// Implicit Euler on a fixed mesh; streams each new slice to an observer.
struct Marcher<'a> {
    spec: &'a ProblemSpec,
    mesh: Arc<Mesh>,
    time: TimeGrid,
    base: OperatorAssembly,
    static_alpha: bool,
    settings: SolverSettings,
}

impl<'a> Marcher<'a> {
    fn new(spec: &'a ProblemSpec, settings: SolverSettings) -> Result<Self> {
        spec.validate()?;
        if !(settings.picard_tol > 0.0) || settings.picard_max == 0 {
            return Err(Error::plain_config("Picard tolerance must be positive and picard_max >= 1"));
        }
        if settings.store_every == 0 || !settings.m.is_multiple_of(settings.store_every) {
            return Err(Error::plain_config(format!(
                "store_every = {} must divide M = {}",
                settings.store_every, settings.m
            )));
        }
        let mesh = Mesh::new(settings.n, settings.grading)?;
        let time = TimeGrid::new(spec.horizon, settings.m)?;
        let guard = time.dt() * spec.alpha_plus();
        if guard >= 0.5 {
            return Err(Error::config(
                Assumption::A2,
                format!("dt * sup(alpha+) = {guard} must be < 1/2; increase M"),
            ));
        }
        let alpha0 = spec.alpha.slice(time.time(1), mesh.nodes());
        let base = OperatorAssembly::assemble(&mesh, &spec.coeff, &alpha0, spec.bc)?;
        Ok(Self {
            spec,
            mesh,
            time,
            base,
            static_alpha: spec.alpha.is_static(),
            settings,
        })
    }

    fn l2(&self, v: &[f64]) -> f64 {
        self.mesh.integrate_map(v, |z| z * z).sqrt()
    }

    fn march(&self, u0: &[f64], level: Option<usize>, mut observe: impl FnMut(usize, &[f64])) -> Result<Telemetry> {
        let m = self.time.steps();
        let dt = self.time.dt();
        let nodes = self.mesh.nodes();
        let model = &self.spec.model;
        let mut tel = Telemetry {
            picard_iterations: Vec::with_capacity(m),
            residuals: Vec::with_capacity(m),
            boundary_residuals: Vec::with_capacity(m),
        };
        let zero_source = vec![0.0; u0.len()];
        let mut u = u0.to_vec();
        observe(0, &u);
        let mut owned;
        for step in 0..m {
            let t = self.time.time(step + 1);
            let op = if self.static_alpha {
                &self.base
            } else {
                owned = self.base.with_alpha(&self.spec.alpha.slice(t, nodes))?;
                &owned
            };
            let (next, source, iterations, residuals) = if model.is_zero() {
                let v = op.implicit_step_values(&u, dt, &zero_source)?;
                (v, zero_source.clone(), 1, vec![0.0])
            } else {
                let mut v = match self.settings.initial_guess {
                    InitialGuess::Previous => u.clone(),
                    InitialGuess::Zero => vec![0.0; u.len()],
                };
                let mut residuals = Vec::new();
                loop {
                    let source: Vec<f64> = v
                        .iter()
                        .zip(nodes)
                        .map(|(&vi, &x)| model.eval(t, x, vi))
                        .collect();
                    let w = op.implicit_step_values(&u, dt, &source)?;
                    let diff: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a - b).collect();
                    let r = self.l2(&diff);
                    residuals.push(r);
                    v = w;
                    if r < self.settings.picard_tol {
                        break (v, source, residuals.len(), residuals);
                    }
                    if residuals.len() >= self.settings.picard_max || !r.is_finite() {
                        return Err(Error::NonConvergence {
                            step: step + 1,
                            level,
                            residuals,
                        });
                    }
                }
            };
            let (l, r) = op.boundary_residuals(&u, &next, dt, &source);
            tel.boundary_residuals.push([l, r]);
            tel.picard_iterations.push(iterations);
            tel.residuals.push(residuals);
            u = next;
            observe(step + 1, &u);
        }
        Ok(tel)
    }

    fn solve(&self, u0: &[f64], level: Option<usize>) -> Result<SolveResult> {
        let mut acc = SpaceTimeAccumulator::with_midpoint_coefficients(
            self.base.midpoint_coefficients().to_vec(),
            self.time.dt(),
        );
        let stride = self.settings.store_every;
        let mut stored = Vec::with_capacity(self.time.steps() / stride + 1);
        let mut min_value = f64::INFINITY;
        let mut l2_history = Vec::with_capacity(self.time.steps() + 1);
        let mut last = Vec::new();
        let tel = self.march(u0, level, |n, v| {
            acc.push(&self.mesh, v);
            min_value = v.iter().fold(min_value, |m, &z| m.min(z));
            l2_history.push(self.l2(v));
            if n % stride == 0 {
                stored.push(v.to_vec());
            }
            if n == self.time.steps() {
                last = v.to_vec();
            }
        })?;
        let stored_time = TimeGrid::new(self.time.horizon(), self.time.steps() / stride)?;
        Ok(SolveResult {
            solution: SpaceTimeFunction::new(self.mesh.clone(), stored_time, stored)?,
            final_state: GridFunction::new(self.mesh.clone(), last)?,
            b_norm: acc.b_norm(),
            h_norm: acc.h_norm().ok(),
            hilbert_h_norm: acc.hilbert_h_norm().ok(),
            picard_iterations: tel.picard_iterations,
            residuals: tel.residuals,
            boundary_residuals: tel.boundary_residuals,
            min_value,
            l2_history,
        })
    }
}

/// Relative change of `‖u0‖_{1,a}` from `N` to `2N` above which an `H¹_a`
/// claim is rejected.
pub const REGULARITY_DRIFT: f64 = 0.1;

fn check_regularity(spec: &ProblemSpec, settings: &SolverSettings) -> Result<()> {
    if spec.regularity_claim != RegularityClaim::H1a {
        return Err(Error::Precondition(
            "strict solutions need an H1_a datum; use the strong-solution construction".into(),
        ));
    }
    let coarse = Mesh::new(settings.n, settings.grading)?;
    let fine = Mesh::new(2 * settings.n, settings.grading)?;
    let a = norm_1a(&spec.u0.grid(&coarse), &spec.coeff);
    let b = norm_1a(&spec.u0.grid(&fine), &spec.coeff);
    if !(a.is_finite() && b.is_finite()) || (b - a).abs() > REGULARITY_DRIFT * a.max(b) {
        return Err(Error::Precondition(format!(
            "datum is not refinement-stable in the weighted H1 norm ({a} at N, {b} at 2N)"
        )));
    }
    Ok(())
}

/// Strict solution from `spec.u0`, which must be claimed (and observed) in `H¹_a`.
pub fn solve_strict(spec: &ProblemSpec, settings: &SolverSettings) -> Result<SolveResult> {
    check_regularity(spec, settings)?;
    let marcher = Marcher::new(spec, *settings)?;
    let u0 = spec.u0.grid(&marcher.mesh);
    marcher.solve(u0.values(), None)
}

/// Strict solve from an explicit nodal datum on the settings' mesh.
pub fn solve_from(spec: &ProblemSpec, settings: &SolverSettings, u0: &GridFunction) -> Result<SolveResult> {
    let marcher = Marcher::new(spec, *settings)?;
    if !u0.mesh().same_as(&marcher.mesh) {
        return Err(Error::Shape {
            expected: marcher.mesh.len(),
            got: u0.values().len(),
        });
    }
    marcher.solve(u0.values(), None)
}

/// Eigenbasis of the pure-diffusion operator, used to regularize data.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
}

impl SpectralBasis {
    /// Requires `α ≡ 0` in `a0`.
    pub fn new(a0: &OperatorAssembly) -> Result<Self> {
        if a0.alpha().iter().any(|&a| a != 0.0) {
            return Err(Error::Precondition("regularizing operator must have alpha = 0".into()));
        }
        let (mut values, mut vectors) = a0.weighted_eigen()?;
        // Eigenvalues are ≤ 0; smoothest modes first.
        values.reverse();
        vectors.reverse();
        Ok(Self {
            mesh: a0.mesh().clone(),
            values,
            vectors,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Eigenvalues ordered from closest to zero.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Weighted projection onto the `k` smoothest modes; `k` is clamped.
    pub fn project(&self, u0: &GridFunction, k: usize) -> Result<GridFunction> {
        if !u0.mesh().same_as(&self.mesh) {
            return Err(Error::Shape {
                expected: self.mesh.len(),
                got: u0.values().len(),
            });
        }
        if k == 0 {
            return Err(Error::domain("regularization level k must be >= 1"));
        }
        let k = if k > self.len() {
            log::warn!("regularization level {k} exceeds the basis size {}; clamped", self.len());
            self.len()
        } else {
            k
        };
        let w = self.mesh.weights();
        let mut out = vec![0.0; u0.values().len()];
        for z in &self.vectors[..k] {
            let c: f64 = w
                .iter()
                .zip(z)
                .zip(u0.values())
                .map(|((w, z), u)| w * z * u)
                .sum();
            for (o, zi) in out.iter_mut().zip(z) {
                *o += c * zi;
            }
        }
        GridFunction::new(self.mesh.clone(), out)
    }
}

/// Projects `u0` onto the `k` lowest-frequency eigenvectors of `a0`.
pub fn regularize_datum(u0: &GridFunction, a0: &OperatorAssembly, k: usize) -> Result<GridFunction> {
    SpectralBasis::new(a0)?.project(u0, k)
}

/// Slack on `gap ≤ C_T · datum gap`.
pub const CERTIFICATE_SLACK: f64 = 0.05;

/// Monte-Carlo samples used to cross-check the declared one-sided constant.
pub const CONFORMANCE_SAMPLES: usize = 20_000;

/// Checks that sampling never beats the declared `ν`.
pub fn check_conformance(model: &NemytskiiModel, seed: u64) -> Result<f64> {
    if model.is_zero() {
        return Ok(0.0);
    }
    let report = validate_a3(model, CONFORMANCE_SAMPLES, DEFAULT_BOX, seed)?;
    let empirical = report.empirical_nu();
    if empirical > model.nu * (1.0 + 1e-9) {
        return Err(Error::Conformance(format!(
            "empirical one-sided constant {empirical} exceeds declared nu = {}",
            model.nu
        )));
    }
    Ok(empirical)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certificate {
    pub gap: f64,
    pub datum_gap: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Approximating strict solutions and their Cauchy certificates.
#[derive(Debug, Clone)]
pub struct StrongSolveResult {
    pub levels: Vec<usize>,
    pub approximants: Vec<SolveResult>,
    pub initial_data_errors: Vec<f64>,
    pub initial_l2_norms_1a: Vec<f64>,
    pub cauchy_gaps: Vec<f64>,
    pub stability_certificates: Vec<Certificate>,
    pub c_t: f64,
    pub limit: SpaceTimeFunction,
    pub certified: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StrongSummary {
    pub levels: Vec<usize>,
    pub initial_data_errors: Vec<f64>,
    pub initial_norms_1a: Vec<f64>,
    pub cauchy_gaps: Vec<f64>,
    pub stability_certificates: Vec<Certificate>,
    pub c_t: f64,
    pub certified: bool,
    pub data_errors_decrease: bool,
    pub gaps_decrease: bool,
    pub limit_b_norm: f64,
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

impl StrongSolveResult {
    pub fn summary(&self) -> StrongSummary {
        StrongSummary {
            levels: self.levels.clone(),
            initial_data_errors: self.initial_data_errors.clone(),
            initial_norms_1a: self.initial_l2_norms_1a.clone(),
            cauchy_gaps: self.cauchy_gaps.clone(),
            stability_certificates: self.stability_certificates.clone(),
            c_t: self.c_t,
            certified: self.certified,
            data_errors_decrease: strictly_decreasing(&self.initial_data_errors),
            gaps_decrease: strictly_decreasing(&self.cauchy_gaps),
            limit_b_norm: self.approximants.last().map_or(0.0, |a| a.b_norm),
        }
    }
}

/// Strict solves from spectrally regularized data at each level.
///
/// Certified when data errors and Cauchy gaps strictly decrease and every
/// gap is within `(1 + CERTIFICATE_SLACK)·C_T` of its datum gap.
pub fn solve_strong(spec: &ProblemSpec, settings: &SolverSettings, levels: &[usize], seed: u64) -> Result<StrongSolveResult> {
    if levels.len() < 2 || levels.windows(2).any(|w| w[1] <= w[0]) || levels[0] == 0 {
        return Err(Error::domain("levels must be positive, strictly increasing, at least two"));
    }
    check_conformance(&spec.model, seed)?;
    let marcher = Marcher::new(spec, *settings)?;
    let mesh = marcher.mesh.clone();
    let a0 = OperatorAssembly::assemble(&mesh, &spec.coeff, &vec![0.0; mesh.len()], spec.bc)?;
    let basis = SpectralBasis::new(&a0)?;
    let u0 = spec.u0.grid(&mesh);
    let data: Vec<GridFunction> = levels
        .iter()
        .map(|&k| basis.project(&u0, k))
        .collect::<Result<_>>()?;
    let l2 = |g: &GridFunction| lp_values(&mesh, g.values(), 2.0);
    let initial_data_errors: Vec<f64> = data.iter().map(|d| l2(&d.sub(&u0).unwrap())).collect();
    let initial_l2_norms_1a: Vec<f64> = data.iter().map(|d| norm_1a(d, &spec.coeff)).collect();
    let approximants: Vec<SolveResult> = data
        .par_iter()
        .enumerate()
        .map(|(i, d)| marcher.solve(d.values(), Some(i)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_>>()?;
    let c_t = spec.stability_constant();
    let mut cauchy_gaps = Vec::new();
    let mut certificates = Vec::new();
    for j in 1..levels.len() {
        let gap = b_norm(
            &approximants[j].solution.sub(&approximants[j - 1].solution)?,
            &spec.coeff,
        );
        let datum_gap = l2(&data[j].sub(&data[j - 1])?);
        let bound = c_t * datum_gap;
        cauchy_gaps.push(gap);
        certificates.push(Certificate {
            gap,
            datum_gap,
            bound,
            holds: gap <= (1.0 + CERTIFICATE_SLACK) * bound,
        });
    }
    let certified = certificates.iter().all(|c| c.holds)
        && strictly_decreasing(&cauchy_gaps)
        && strictly_decreasing(&initial_data_errors);
    let limit = approximants.last().unwrap().solution.clone();
    Ok(StrongSolveResult {
        levels: levels.to_vec(),
        approximants,
        initial_data_errors,
        initial_l2_norms_1a,
        cauchy_gaps,
        stability_certificates: certificates,
        c_t,
        limit,
        certified,
    })
}

/// Both sides of `‖u − v‖_B ≤ C_T ‖u0 − v0‖_{L²}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityGap {
    pub lhs: f64,
    pub rhs: f64,
    pub c_t: f64,
    pub datum_gap: f64,
    /// `max_n ‖u(t_n) − v(t_n)‖_{L²}`, the sup-in-time part of the left side.
    pub sup_l2_gap: f64,
    #[serde(serialize_with = "extended_real")]
    pub ratio: f64,
}

pub fn stability_gap(
    spec: &ProblemSpec,
    settings: &SolverSettings,
    u0: &GridFunction,
    v0: &GridFunction,
) -> Result<StabilityGap> {
    let marcher = Marcher::new(spec, *settings)?;
    for d in [u0, v0] {
        if !d.mesh().same_as(&marcher.mesh) {
            return Err(Error::Shape {
                expected: marcher.mesh.len(),
                got: d.values().len(),
            });
        }
    }
    let (u, v) = rayon::join(
        || marcher.solve(u0.values(), None),
        || marcher.solve(v0.values(), None),
    );
    let (u, v) = (u?, v?);
    let diff = u.solution.sub(&v.solution)?;
    let lhs = b_norm(&diff, &spec.coeff);
    let datum_gap = lp_values(&marcher.mesh, u0.sub(v0)?.values(), 2.0);
    let c_t = spec.stability_constant();
    let rhs = c_t * datum_gap;
    let sup_l2_gap = diff
        .rows()
        .iter()
        .map(|r| lp_values(&marcher.mesh, r, 2.0))
        .fold(0.0, f64::max);
    Ok(StabilityGap {
        lhs,
        rhs,
        c_t,
        datum_gap,
        sup_l2_gap,
        ratio: crate::inequalities::ratio(lhs, rhs),
    })
}

/// Random initial data pair `index` for stability sweeps; each component is
/// normalized to unit sup norm before scaling.
pub fn random_datum_pair(mesh: &Arc<Mesh>, seed: u64, index: usize) -> (GridFunction, GridFunction) {
    let mut rng = trial_rng(seed, &[index as u64]);
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
        let family = [Family::Trig, Family::Spike][rng.gen_range(0..2)];
        let params = family.random_params(false, rng);
        let g = family.grid_function(&params, mesh);
        let peak = g.values().iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        if peak > 0.0 {
            g.scaled(1.0 / peak)
        } else {
            g
        }
    };
    let amp = 10f64.powf(rng.gen_range(-0.7..0.3));
    let sep = 10f64.powf(rng.gen_range(-2.0..0.0));
    let u = draw(&mut rng).scaled(amp);
    let dv = draw(&mut rng).scaled(amp * sep);
    let v = u.add(&dv).expect("same mesh");
    (u, v)
}

/// Allowed relative excess of `‖u − v‖_B` over `C_T ‖u0 − v0‖`: Picard
/// round-off for the linear dissipative case, `CERTIFICATE_SLACK` otherwise.
pub fn stability_slack(spec: &ProblemSpec, settings: &SolverSettings) -> f64 {
    if spec.model.is_zero() && spec.alpha_plus() == 0.0 {
        10.0 * settings.picard_tol
    } else {
        CERTIFICATE_SLACK
    }
}

/// Problems with known solutions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExactSolution {
    /// `e^{−n(n+1)t} P_n(x)` for `a = 1 − x²` with vanishing flux.
    Legendre { n: usize },
    /// `e^{−t}(1 + (1−x²)^{3/2})` for `a = √(1−x²)`. The flux `−3x(1−x²)e^{−t}`
    /// vanishes at both ends, so the Robin data are flux-free, and
    /// `α = −1 + (3 − 9x²)/(1 + (1−x²)^{3/2})`.
    Manufactured,
}

impl ExactSolution {
    pub fn value(&self, t: f64, x: f64) -> f64 {
        match self {
            ExactSolution::Legendre { n } => (-((n * (n + 1)) as f64) * t).exp() * legendre(*n, x),
            ExactSolution::Manufactured => (-t).exp() * InitialDatum::Manufactured.eval(x),
        }
    }

    /// The problem on `mesh`; the manufactured reaction is tabulated at its nodes.
    pub fn spec(&self, mesh: &Mesh, horizon: f64) -> Result<ProblemSpec> {
        match self {
            ExactSolution::Legendre { n } => {
                let coeff = DiffusionCoefficient::power_law(1.0)?;
                Ok(ProblemSpec {
                    coeff,
                    bc: BoundaryMode::WeightedNeumann,
                    alpha: Field::Const(0.0),
                    model: NemytskiiModel {
                        theta_sup: 3.0,
                        horizon,
                        ..NemytskiiModel::zero()
                    },
                    horizon,
                    u0: InitialDatum::Legendre { n: *n },
                    regularity_claim: RegularityClaim::H1a,
                })
            }
            ExactSolution::Manufactured => {
                let coeff = DiffusionCoefficient::power_law(0.5)?;
                let row: Vec<f64> = mesh
                    .nodes()
                    .iter()
                    .map(|&x| -1.0 + (3.0 - 9.0 * x * x) / InitialDatum::Manufactured.eval(x))
                    .collect();
                Ok(ProblemSpec {
                    coeff,
                    bc: BoundaryMode::Robin(RobinBC::flux_free()),
                    alpha: Field::Tabulated {
                        times: vec![0.0, horizon],
                        nodes: mesh.nodes().to_vec(),
                        values: vec![row.clone(), row],
                    },
                    model: NemytskiiModel {
                        horizon,
                        ..NemytskiiModel::zero()
                    },
                    horizon,
                    u0: InitialDatum::Manufactured,
                    regularity_claim: RegularityClaim::H1a,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub m: usize,
    /// `‖u_h(T) − u(T)‖_{L²}`.
    pub l2_error: f64,
    /// `‖u_h − u‖_B` over the time nodes.
    pub b_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub exact: ExactSolution,
    pub horizon: f64,
    pub grading: f64,
    pub rows: Vec<ConvergenceRow>,
    /// Orders between consecutive rows, measured against the refined parameter.
    pub l2_orders: Vec<f64>,
    pub b_orders: Vec<f64>,
}

fn observed_order(a: &ConvergenceRow, b: &ConvergenceRow, ea: f64, eb: f64) -> f64 {
    let refinement = if a.n != b.n {
        b.n as f64 / a.n as f64
    } else {
        b.m as f64 / a.m as f64
    };
    (ea / eb).ln() / refinement.ln()
}

/// Errors against `exact` at each `(N, M)`; cells run in parallel.
pub fn convergence_study(
    exact: ExactSolution,
    cells: &[(usize, usize)],
    horizon: f64,
    grading: f64,
) -> Result<ConvergenceTable> {
    let rows: Vec<ConvergenceRow> = cells
        .par_iter()
        .map(|&(n, m)| {
            let mesh = Mesh::new(n, grading)?;
            let spec = exact.spec(&mesh, horizon)?;
            let settings = SolverSettings::new(n, m, grading);
            let marcher = Marcher::new(&spec, settings)?;
            let time = marcher.time;
            let mut acc = SpaceTimeAccumulator::with_midpoint_coefficients(
                marcher.base.midpoint_coefficients().to_vec(),
                time.dt(),
            );
            let mut l2_error = 0.0;
            let nodes = mesh.nodes().to_vec();
            let u0 = spec.u0.grid(&mesh);
            marcher.march(u0.values(), None, |k, v| {
                let t = time.time(k);
                let err: Vec<f64> = v
                    .iter()
                    .zip(&nodes)
                    .map(|(&vi, &x)| vi - exact.value(t, x))
                    .collect();
                acc.push(&mesh, &err);
                if k == time.steps() {
                    l2_error = lp_values(&mesh, &err, 2.0);
                }
            })?;
            Ok(ConvergenceRow {
                n,
                m,
                l2_error,
                b_error: acc.b_norm(),
            })
        })
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .collect::<Result<_>>()?;
    let orders = |pick: fn(&ConvergenceRow) -> f64| {
        rows.windows(2)
            .map(|w| observed_order(&w[0], &w[1], pick(&w[0]), pick(&w[1])))
            .collect()
    };
    Ok(ConvergenceTable {
        exact,
        horizon,
        grading,
        l2_orders: orders(|r| r.l2_error),
        b_orders: orders(|r| r.b_error),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nemytskii::ModelKind;

    fn legendre_spec(horizon: f64) -> ProblemSpec {
        let mesh = Mesh::new(8, 1.0).unwrap();
        ExactSolution::Legendre { n: 2 }.spec(&mesh, horizon).unwrap()
    }

    fn weak_spec(model: ModelKind, alpha: f64, u0: InitialDatum, horizon: f64) -> ProblemSpec {
        ProblemSpec {
            coeff: DiffusionCoefficient::power_law(0.5).unwrap(),
            bc: BoundaryMode::Robin(RobinBC::new(1.0, -1.0, 0.5, 1.0).unwrap()),
            alpha: Field::Const(alpha),
            model: NemytskiiModel::new(model, Degeneracy::WeaklyDegenerate, horizon).unwrap(),
            horizon,
            u0,
            regularity_claim: RegularityClaim::H1a,
        }
    }

    #[test]
    fn legendre_recurrence() {
        for &x in &[-1.0, -0.3, 0.0, 0.7, 1.0] {
            assert!((legendre(2, x) - 0.5 * (3.0 * x * x - 1.0)).abs() < 1e-15);
            assert!((legendre(3, x) - 0.5 * (5.0 * x * x * x - 3.0 * x)).abs() < 1e-15);
        }
    }

    #[test]
    fn legendre_mode_decays() {
        let spec = legendre_spec(0.1);
        let r = solve_strict(&spec, &SolverSettings::new(128, 400, 1.0)).unwrap();
        let mesh = r.final_state.mesh().clone();
        let exact = GridFunction::from_fn(&mesh, |x| ExactSolution::Legendre { n: 2 }.value(0.1, x));
        let err = lp_values(&mesh, r.final_state.sub(&exact).unwrap().values(), 2.0);
        assert!(err < 2e-3, "{err}");
        assert!(r.h_norm.is_some());
        assert!(r.summary().max_boundary_residual < 1e-9);
    }

    #[test]
    fn constants_are_preserved() {
        let mut spec = legendre_spec(1.0);
        spec.u0 = InitialDatum::Constant { value: 1.0 };
        let r = solve_strict(&spec, &SolverSettings::new(32, 16, 2.0)).unwrap();
        for row in r.solution.rows() {
            for v in row {
                assert!((v - 1.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn robin_on_strong_degeneracy_is_rejected() {
        let mut spec = legendre_spec(1.0);
        spec.bc = BoundaryMode::Robin(RobinBC::flux_free());
        assert!(matches!(
            solve_strict(&spec, &SolverSettings::new(16, 4, 2.0)),
            Err(Error::Mode(_))
        ));
    }

    #[test]
    fn step_guard_names_reaction_bound() {
        let spec = weak_spec(ModelKind::Zero, 4.0, InitialDatum::Constant { value: 1.0 }, 1.0);
        let e = solve_strict(&spec, &SolverSettings::new(16, 4, 2.0)).unwrap_err();
        assert!(matches!(
            e,
            Error::Config {
                assumption: Some(Assumption::A2),
                ..
            }
        ));
    }

    #[test]
    fn rough_datum_needs_strong_route() {
        let spec = weak_spec(ModelKind::Zero, 0.0, InitialDatum::Sign, 1.0);
        assert!(matches!(
            solve_strict(&spec, &SolverSettings::new(64, 4, 2.0)),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn picard_guesses_agree() {
        let spec = weak_spec(
            ModelKind::PaperExample {
                c: Field::Const(1.0),
                theta: 2.0,
            },
            0.5,
            InitialDatum::Legendre { n: 1 },
            0.5,
        );
        let mut s = SolverSettings::new(64, 64, 2.0);
        let a = solve_strict(&spec, &s).unwrap();
        s.initial_guess = InitialGuess::Zero;
        let b = solve_strict(&spec, &s).unwrap();
        assert!((a.b_norm - b.b_norm).abs() < 10.0 * s.picard_tol);
        assert!(a.residuals.iter().all(|r| *r.last().unwrap() < s.picard_tol));
    }

    #[test]
    fn picard_failure_is_reported() {
        let spec = weak_spec(
            ModelKind::PurePower {
                g0: 1.0,
                theta: 3.0,
                sign: -1,
            },
            0.0,
            InitialDatum::Constant { value: 30.0 },
            1.0,
        );
        let mut s = SolverSettings::new(16, 2, 1.0);
        s.picard_max = 5;
        assert!(matches!(
            solve_strict(&spec, &s),
            Err(Error::NonConvergence { step: 1, level: None, .. })
        ));
    }

    #[test]
    fn linear_energy_decays_and_positivity_holds() {
        let spec = weak_spec(ModelKind::Zero, 0.0, InitialDatum::Manufactured, 1.0);
        let r = solve_strict(&spec, &SolverSettings::new(64, 32, 2.0)).unwrap();
        assert!(r.l2_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-14)));
        assert!(r.min_value >= -1e-12);
    }

    #[test]
    fn storage_stride_thins_slices() {
        let spec = legendre_spec(0.1);
        let mut s = SolverSettings::new(32, 40, 2.0);
        let full = solve_strict(&spec, &s).unwrap();
        s.store_every = 8;
        let thin = solve_strict(&spec, &s).unwrap();
        assert_eq!(thin.solution.rows().len(), 6);
        assert_eq!(thin.b_norm, full.b_norm);
        assert_eq!(thin.final_state, full.final_state);
        s.store_every = 7;
        assert!(solve_strict(&spec, &s).is_err());
    }

    #[test]
    fn projection_properties() {
        let mesh = Mesh::new(32, 2.0).unwrap();
        let coeff = DiffusionCoefficient::power_law(0.5).unwrap();
        let a0 = OperatorAssembly::assemble(
            &mesh,
            &coeff,
            &vec![0.0; 33],
            BoundaryMode::Robin(RobinBC::new(1.0, -1.0, 1.0, 1.0).unwrap()),
        )
        .unwrap();
        let basis = SpectralBasis::new(&a0).unwrap();
        assert!(basis.values().windows(2).all(|w| w[1] <= w[0]));
        let sign = InitialDatum::Sign.grid(&mesh);
        let full = basis.project(&sign, 33).unwrap();
        for (a, b) in full.values().iter().zip(sign.values()) {
            assert!((a - b).abs() < 1e-10);
        }
        let p4 = basis.project(&sign, 4).unwrap();
        let again = basis.project(&p4, 4).unwrap();
        for (a, b) in again.values().iter().zip(p4.values()) {
            assert!((a - b).abs() < 1e-10);
        }
        let mut prev_err = f64::INFINITY;
        let mut prev_norm = 0.0;
        for k in [2, 4, 8, 16] {
            let d = basis.project(&sign, k).unwrap();
            let err = lp_values(&mesh, d.sub(&sign).unwrap().values(), 2.0);
            let nrm = norm_1a(&d, &coeff);
            assert!(err < prev_err && nrm > prev_norm);
            prev_err = err;
            prev_norm = nrm;
        }
        assert_eq!(basis.project(&sign, 1000).unwrap(), full);
        let shifted = a0.with_alpha(&vec![1.0; 33]).unwrap();
        assert!(SpectralBasis::new(&shifted).is_err());
    }

    #[test]
    fn stability_identical_data() {
        let spec = weak_spec(ModelKind::Zero, 0.0, InitialDatum::Legendre { n: 1 }, 0.5);
        let s = SolverSettings::new(32, 16, 2.0);
        let mesh = Mesh::new(32, 2.0).unwrap();
        let u0 = GridFunction::from_fn(&mesh, |x| x);
        let g = stability_gap(&spec, &s, &u0, &u0).unwrap();
        assert_eq!((g.lhs, g.rhs, g.c_t), (0.0, 0.0, 1.0));
    }

    #[test]
    fn dissipative_gap_is_between_datum_gap_and_root_two() {
        let spec = weak_spec(ModelKind::Zero, -10.0, InitialDatum::Legendre { n: 1 }, 0.5);
        let s = SolverSettings::new(32, 32, 2.0);
        let mesh = Mesh::new(32, 2.0).unwrap();
        let u0 = GridFunction::from_fn(&mesh, |x| x);
        let v0 = GridFunction::from_fn(&mesh, |x| x * x);
        let g = stability_gap(&spec, &s, &u0, &v0).unwrap();
        assert!(g.sup_l2_gap <= g.datum_gap * (1.0 + 1e-12));
        // sup over t includes t = 0, and the energy identity caps the rest.
        assert!(g.lhs >= g.datum_gap);
        assert!(g.lhs <= 2f64.sqrt() * g.datum_gap * (1.0 + 1e-12));
    }

    #[test]
    fn smooth_data_give_tiny_gaps() {
        let mut spec = legendre_spec(0.2);
        spec.u0 = InitialDatum::Legendre { n: 2 };
        let s = SolverSettings::new(32, 20, 1.0);
        let r = solve_strong(&spec, &s, &[4, 8, 16], 0).unwrap();
        assert!(r.cauchy_gaps.iter().all(|&g| g < 1e-2), "{:?}", r.cauchy_gaps);
        assert!(r.cauchy_gaps[1] < r.cauchy_gaps[0]);
        assert!(solve_strong(&spec, &s, &[8, 4], 0).is_err());
    }

    #[test]
    fn legendre_zero_is_exact() {
        let t = convergence_study(ExactSolution::Legendre { n: 0 }, &[(16, 4), (32, 8)], 1.0, 1.0).unwrap();
        assert!(t.rows.iter().all(|r| r.l2_error < 1e-13 && r.b_error < 1e-12));
    }

    #[test]
    fn manufactured_solution_satisfies_the_equation() {
        let mesh = Mesh::new(16, 2.0).unwrap();
        let spec = ExactSolution::Manufactured.spec(&mesh, 1.0).unwrap();
        spec.validate().unwrap();
        let ex = ExactSolution::Manufactured;
        let a = |x: f64| ((1.0 - x) * (1.0 + x)).sqrt();
        let flux = |t: f64, x: f64| -3.0 * x * (1.0 - x * x) * (-t).exp();
        let (t, h) = (0.3, 1e-5);
        for &x in &[-0.9, -0.4, 0.0, 0.55, 0.95] {
            let fd_flux = a(x) * (ex.value(t, x + h) - ex.value(t, x - h)) / (2.0 * h);
            assert!((fd_flux - flux(t, x)).abs() < 1e-8);
            let ut = (ex.value(t + h, x) - ex.value(t - h, x)) / (2.0 * h);
            let div = (flux(t, x + h) - flux(t, x - h)) / (2.0 * h);
            let alpha = -1.0 + (3.0 - 9.0 * x * x) / InitialDatum::Manufactured.eval(x);
            assert!((ut - div - alpha * ex.value(t, x)).abs() < 1e-8);
        }
        for x in [-1.0, 1.0] {
            assert_eq!(flux(t, x), 0.0);
        }
        assert_eq!(spec.bc, BoundaryMode::Robin(RobinBC::flux_free()));
    }
}
