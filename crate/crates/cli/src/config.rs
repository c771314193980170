//! Run configuration: JSON on disk, validated against the standing
//! assumptions before anything runs.

use std::path::{Path, PathBuf};

use anyhow::Context;
use degen_core::coeff::Degeneracy;
use degen_core::inequalities::{Checker, Family, SearchConfig};
use degen_core::nemytskii::{ModelKind, NemytskiiModel, DEFAULT_BOX};
use degen_core::operator::RobinBC;
use degen_core::solver::{ExactSolution, InitialDatum, ProblemSpec, RegularityClaim, SolverSettings};
use degen_core::{Assumption, BoundaryMode, DiffusionCoefficient, Error, Field, Mesh};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// The adaptive integrator's fixed relative tolerance.
pub const QUADRATURE_FLOOR: f64 = 1e-11;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub coeff: DiffusionCoefficient,
    #[serde(default)]
    pub bc: Option<BoundaryMode>,
    #[serde(default)]
    pub alpha: Field,
    #[serde(default = "zero_model")]
    pub model: ModelKind,
    #[serde(default)]
    pub u0: Option<InitialDatum>,
    #[serde(default = "h1a")]
    pub regularity_claim: RegularityClaim,
}

fn zero_model() -> ModelKind {
    ModelKind::Zero
}

fn h1a() -> RegularityClaim {
    RegularityClaim::H1a
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub n: usize,
    /// Defaults to 2 for degenerate coefficients and 1 otherwise.
    #[serde(default)]
    pub grading: Option<f64>,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self { n: 256, grading: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub t: f64,
    pub m: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self { t: 1.0, m: 512 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub picard_tol: f64,
    pub picard_max: usize,
    pub quad_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            picard_tol: 1e-10,
            picard_max: 50,
            quad_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InequalityConfig {
    pub checkers: Vec<Checker>,
    pub families: Vec<Family>,
    pub iterations: usize,
    pub restart_length: usize,
}

impl Default for InequalityConfig {
    fn default() -> Self {
        Self {
            checkers: vec![
                Checker::Sob1 { p: 4.0 },
                Checker::GnLinf { q: 1.0 },
                Checker::GnLp { p: 5.0, q: 1.0 },
                Checker::Sob2 { p: 3.0, horizon: 1.0, steps: 16 },
                Checker::Sob3 { p: 2.0, horizon: 1.0, steps: 16 },
            ],
            families: Family::ALL.to_vec(),
            iterations: 64,
            restart_length: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NemytskiiConfig {
    pub samples: usize,
    pub box_u: f64,
    pub radii: Vec<f64>,
    pub horizons: Vec<f64>,
    /// Spatial pairs in the local-Lipschitz corpus.
    pub corpus: usize,
    pub steps: usize,
}

impl Default for NemytskiiConfig {
    fn default() -> Self {
        Self {
            samples: 100_000,
            box_u: DEFAULT_BOX,
            radii: vec![1.0, 5.0, 10.0],
            horizons: vec![0.25, 0.5, 1.0],
            corpus: 200,
            steps: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorChecksConfig {
    pub functions: usize,
    /// Random admissible Robin data added to the configured mode.
    pub random_bcs: usize,
}

impl Default for OperatorChecksConfig {
    fn default() -> Self {
        Self {
            functions: 500,
            random_bcs: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrongConfig {
    pub levels: Vec<usize>,
}

impl Default for StrongConfig {
    fn default() -> Self {
        Self {
            levels: vec![4, 8, 16, 32],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub pairs: usize,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self { pairs: 50 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    pub exact: ExactSolution,
    /// `(N, M)` pairs, coarse to fine.
    pub cells: Vec<(usize, usize)>,
    pub horizon: f64,
    #[serde(default)]
    pub grading: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub inequalities: InequalityConfig,
    #[serde(default)]
    pub nemytskii: NemytskiiConfig,
    #[serde(default)]
    pub operator_checks: OperatorChecksConfig,
    #[serde(default)]
    pub strong: StrongConfig,
    #[serde(default)]
    pub stability: StabilityConfig,
    #[serde(default)]
    pub converge: Option<ConvergeConfig>,
    /// For `solve`: compare against this exact solution.
    #[serde(default)]
    pub exact: Option<ExactSolution>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Why a configuration could not be used.
#[derive(Debug)]
pub enum LoadError {
    Io(anyhow::Error),
    Invalid(Error),
    Parse(String),
}

impl std::fmt::Display for LoadError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LoadError::Io(e) => write!(f, "{e:#}"),
            LoadError::Invalid(e) => write!(f, "{e}"),
            LoadError::Parse(m) => write!(f, "configuration error: {m}"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, LoadError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| LoadError::Parse(e.to_string()))?;
        cfg.validate().map_err(LoadError::Invalid)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(LoadError::Io)?;
        Self::from_json(&text)
    }

    /// SHA-256 of the canonical JSON with `output_dir` removed.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        value.as_object_mut().expect("object").remove("output_dir");
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    pub fn degeneracy(&self) -> degen_core::Result<Degeneracy> {
        self.problem.coeff.degeneracy()
    }

    pub fn grading(&self) -> f64 {
        self.mesh
            .grading
            .unwrap_or_else(|| SolverSettings::default_grading(&self.problem.coeff))
    }

    pub fn model(&self) -> degen_core::Result<NemytskiiModel> {
        NemytskiiModel::new(self.problem.model.clone(), self.degeneracy()?, self.time.t)
    }

    /// Configured boundary data; weighted Neumann is implied for strong degeneracy.
    pub fn boundary(&self) -> degen_core::Result<BoundaryMode> {
        match (self.problem.bc, self.degeneracy()?) {
            (Some(bc), _) => Ok(bc),
            (None, Degeneracy::StronglyDegenerate) => Ok(BoundaryMode::WeightedNeumann),
            (None, Degeneracy::NonDegenerate) => Ok(BoundaryMode::Robin(RobinBC::flux_free())),
            (None, Degeneracy::WeaklyDegenerate) => Err(Error::config(
                Assumption::A5WeaklyDegenerate,
                "weakly degenerate problems need Robin boundary data (problem.bc)",
            )),
        }
    }

    pub fn problem_spec(&self) -> degen_core::Result<ProblemSpec> {
        let u0 = self
            .problem
            .u0
            .clone()
            .ok_or_else(|| Error::config(Assumption::A1, "problem.u0 is required"))?;
        Ok(ProblemSpec {
            coeff: self.problem.coeff.clone(),
            bc: self.boundary()?,
            alpha: self.problem.alpha.clone(),
            model: self.model()?,
            horizon: self.time.t,
            u0,
            regularity_claim: self.problem.regularity_claim,
        })
    }

    pub fn settings(&self) -> SolverSettings {
        SolverSettings {
            picard_tol: self.tolerances.picard_tol,
            picard_max: self.tolerances.picard_max,
            ..SolverSettings::new(self.mesh.n, self.time.m, self.grading())
        }
    }

    pub fn search(&self) -> SearchConfig {
        SearchConfig {
            iterations: self.inequalities.iterations,
            restart_length: self.inequalities.restart_length,
            seed: self.seed,
            n: self.mesh.n,
            grading: self.grading(),
        }
    }

    /// Re-validates every piece that is present.
    pub fn validate(&self) -> degen_core::Result<()> {
        let class = self.degeneracy()?;
        if self.mesh.n < 2 {
            return Err(Error::plain_config("mesh.n must be at least 2"));
        }
        Mesh::new(self.mesh.n, self.grading())?;
        if !(self.time.t > 0.0 && self.time.t.is_finite()) || self.time.m == 0 {
            return Err(Error::plain_config("time.t must be positive and time.m at least 1"));
        }
        let tol = &self.tolerances;
        if !(tol.picard_tol > 0.0) || tol.picard_max == 0 {
            return Err(Error::plain_config("picard_tol must be positive and picard_max at least 1"));
        }
        if !(tol.quad_tol >= QUADRATURE_FLOOR && tol.quad_tol.is_finite()) {
            return Err(Error::plain_config(format!(
                "quad_tol must be finite and at least {QUADRATURE_FLOOR:e}"
            )));
        }
        if let Some(bc) = &self.problem.bc {
            bc.check_against(&self.problem.coeff)?;
        }
        self.problem
            .alpha
            .validate(self.time.t)
            .map_err(|e| Error::config(Assumption::A2, e.to_string()))?;
        self.model()?;
        if let Some(u0) = &self.problem.u0 {
            u0.validate()?;
        }
        if class == Degeneracy::StronglyDegenerate {
            if let ModelKind::PaperExample { theta, .. } | ModelKind::PurePower { theta, .. } = self.problem.model {
                let check = self.problem.coeff.check_a5_sd(theta)?;
                if check.verdict == degen_core::coeff::Verdict::Fails {
                    return Err(Error::config(
                        Assumption::A5StronglyDegenerate,
                        format!("xi_a is not in L^q with q_theta = {}", check.q_theta),
                    ));
                }
            }
        }
        if let Some(exact) = &self.exact {
            self.check_exact(*exact)?;
        }
        if let Some(c) = &self.converge {
            if c.cells.is_empty() || c.cells.iter().any(|&(n, m)| n < 2 || m == 0) {
                return Err(Error::plain_config("converge.cells needs (N >= 2, M >= 1) entries"));
            }
            if !(c.horizon > 0.0) {
                return Err(Error::plain_config("converge.horizon must be positive"));
            }
        }
        let levels = &self.strong.levels;
        if levels.len() < 2 || levels[0] == 0 || levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::plain_config("strong.levels must be positive and strictly increasing (at least two)"));
        }
        Ok(())
    }

    /// The configured problem must be the one the exact solution solves.
    fn check_exact(&self, exact: ExactSolution) -> degen_core::Result<()> {
        let mesh = Mesh::new(self.mesh.n, self.grading())?;
        let reference = exact.spec(&mesh, self.time.t)?;
        let assumption = match exact {
            ExactSolution::Legendre { .. } => Assumption::A5StronglyDegenerate,
            ExactSolution::Manufactured => Assumption::A5WeaklyDegenerate,
        };
        if self.problem.coeff.kind() != reference.coeff.kind() {
            return Err(Error::config(assumption, "coefficient does not match the exact solution"));
        }
        if self.boundary()? != reference.bc {
            return Err(Error::config(
                assumption,
                "boundary data must be the ones derived from the exact solution's trace fluxes",
            ));
        }
        if self.problem.u0.as_ref().is_some_and(|u0| *u0 != reference.u0) {
            return Err(Error::config(Assumption::A1, "u0 does not match the exact solution"));
        }
        if self.problem.model != ModelKind::Zero {
            return Err(Error::config(Assumption::A3, "exact solutions are for the linear problem (model zero)"));
        }
        Ok(())
    }
}
