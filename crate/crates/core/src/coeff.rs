//! The degenerate diffusion coefficient `a` and its degeneracy classification.
//!
//! Integrability questions (is `1/a` in L¹? is `xi_a` in L^q?) are decided
//! numerically: the integrand is integrated over geometric shells
//! `[1-δ_j, 1-δ_{j+1}]` near each endpoint with `δ_j = 0.1·2^{-j}` and the
//! decay of successive shell contributions is examined. A shell sequence
//! decaying like `2^{-s·j}` with a stable `s > 0` sums to a finite tail; a
//! sequence that stops decaying (logarithmic or worse singularities) diverges.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Assumption, Error, Result};
use crate::quadrature;

/// Default number of refinement shells per endpoint.
pub const DEFAULT_REFINEMENT_LEVELS: usize = 40;

const FIRST_SHELL: f64 = 0.1;
/// Smallest decay exponent accepted as convergent (`2^{-s}` per halving).
const MIN_DECAY_EXPONENT: f64 = 1e-3;
/// Consecutive decay exponents must agree to this relative spread.
const DECAY_SPREAD: f64 = 0.25;
const GROWTH_FACTOR: f64 = 1.05;
const QUAD_TOL: f64 = 1e-13;
const QUAD_PANELS: usize = 4000;

/// Serialized form of a coefficient, as it appears in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoeffKind {
    /// `a(x) = (1 - x²)^gamma`.
    #[serde(rename = "power")]
    PowerLaw { gamma: f64 },
    /// Piecewise-linear interpolation of samples on `[-1, 1]`.
    Tabulated { nodes: Vec<f64>, values: Vec<f64> },
    /// `a ≡ 1`. Violates (A.4); kept to compare against the heat equation.
    ConstantOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    WeaklyDegenerate,
    StronglyDegenerate,
    NonDegenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn endpoint(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }
}

/// `‖xi_a‖_{L^q}` for one exponent. `norm` is `+inf` when not integrable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct XiNorm {
    pub q: f64,
    #[serde(serialize_with = "crate::report::extended_real")]
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegeneracyReport {
    pub classification: Degeneracy,
    #[serde(serialize_with = "crate::report::extended_real")]
    pub reciprocal_integral: f64,
    #[serde(serialize_with = "crate::report::extended_real")]
    pub k_constant: f64,
    pub xi_lq_norms: Vec<XiNorm>,
    /// Partial sums of the truncated integrals of `1/a`, one per level.
    pub refinement_sequence: Vec<f64>,
    /// Set for coefficients that do not vanish at the endpoints.
    pub violates_a4: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Fails,
    Indeterminate,
}

/// Result of testing `xi_a ∈ L^{q_theta}(-1,1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct A5Check {
    pub theta: f64,
    pub q_theta: f64,
    #[serde(serialize_with = "crate::report::extended_real")]
    pub xi_norm: f64,
    pub verdict: Verdict,
}

/// `q_theta = max{(1+θ)/(3−θ), 2θ−1}`.
pub fn q_theta(theta: f64) -> Result<f64> {
    if !(1.0..3.0).contains(&theta) {
        return Err(Error::domain(format!("theta = {theta} outside [1, 3)")));
    }
    Ok(((1.0 + theta) / (3.0 - theta)).max(2.0 * theta - 1.0))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "CoeffKind", into = "CoeffKind")]
pub struct DiffusionCoefficient {
    kind: CoeffKind,
    #[serde(skip)]
    report: OnceLock<std::result::Result<DegeneracyReport, String>>,
}

impl PartialEq for DiffusionCoefficient {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl TryFrom<CoeffKind> for DiffusionCoefficient {
    type Error = Error;

    fn try_from(kind: CoeffKind) -> Result<Self> {
        match &kind {
            CoeffKind::PowerLaw { gamma } => {
                if !(gamma.is_finite() && *gamma > 0.0) {
                    return Err(Error::config(
                        Assumption::A4,
                        format!("power-law exponent must be positive, got {gamma}"),
                    ));
                }
            }
            CoeffKind::Tabulated { nodes, values } => validate_table(nodes, values)?,
            CoeffKind::ConstantOne => {}
        }
        Ok(Self {
            kind,
            report: OnceLock::new(),
        })
    }
}

impl From<DiffusionCoefficient> for CoeffKind {
    fn from(c: DiffusionCoefficient) -> Self {
        c.kind
    }
}

fn validate_table(nodes: &[f64], values: &[f64]) -> Result<()> {
    if nodes.len() < 3 || nodes.len() != values.len() {
        return Err(Error::config(
            Assumption::A4,
            "tabulated coefficient needs at least 3 nodes and one value per node",
        ));
    }
    if nodes[0] != -1.0 || nodes[nodes.len() - 1] != 1.0 {
        return Err(Error::config(
            Assumption::A4,
            "tabulated nodes must start at -1 and end at 1",
        ));
    }
    if nodes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::config(
            Assumption::A4,
            "tabulated nodes must be strictly increasing",
        ));
    }
    let n = values.len();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::config(Assumption::A4, "non-finite coefficient sample"));
    }
    if values[0] != 0.0 || values[n - 1] != 0.0 {
        return Err(Error::config(Assumption::A4, "a(-1) = a(1) = 0 is required"));
    }
    if values[1..n - 1].iter().any(|&v| v <= 0.0) {
        return Err(Error::config(
            Assumption::A4,
            "a must be positive inside (-1, 1)",
        ));
    }
    Ok(())
}

impl DiffusionCoefficient {
    pub fn power_law(gamma: f64) -> Result<Self> {
        CoeffKind::PowerLaw { gamma }.try_into()
    }

    pub fn tabulated(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        CoeffKind::Tabulated { nodes, values }.try_into()
    }

    pub fn constant_one() -> Self {
        Self {
            kind: CoeffKind::ConstantOne,
            report: OnceLock::new(),
        }
    }

    pub fn kind(&self) -> &CoeffKind {
        &self.kind
    }

    /// The sanity mode does not vanish at ±1.
    pub fn violates_a4(&self) -> bool {
        matches!(self.kind, CoeffKind::ConstantOne)
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(-1.0..=1.0).contains(&x) {
            return Err(Error::domain(format!("x = {x} outside [-1, 1]")));
        }
        Ok(self.eval_unchecked(x))
    }

    /// `a(x)` for `x` already known to lie in `[-1, 1]`.
    pub fn eval_unchecked(&self, x: f64) -> f64 {
        match &self.kind {
            CoeffKind::PowerLaw { gamma } => ((1.0 - x) * (1.0 + x)).max(0.0).powf(*gamma),
            CoeffKind::Tabulated { nodes, values } => interpolate(nodes, values, x),
            CoeffKind::ConstantOne => 1.0,
        }
    }

    /// `a` at distance `e` from an endpoint, without the cancellation in `1 - x`.
    pub fn eval_near(&self, side: Side, e: f64) -> f64 {
        match &self.kind {
            CoeffKind::PowerLaw { gamma } => (e * (2.0 - e)).max(0.0).powf(*gamma),
            CoeffKind::Tabulated { nodes, values } => {
                let n = nodes.len();
                let (h, inner) = match side {
                    Side::Left => (nodes[1] - nodes[0], values[1]),
                    Side::Right => (nodes[n - 1] - nodes[n - 2], values[n - 2]),
                };
                if e <= h {
                    inner * (e / h)
                } else {
                    let x = side.endpoint() - side.endpoint() * e;
                    interpolate(nodes, values, x)
                }
            }
            CoeffKind::ConstantOne => 1.0,
        }
    }

    /// Centered-difference derivative, used only for smoothness diagnostics.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        let h = 1e-6;
        let lo = (x - h).max(-1.0);
        let hi = (x + h).min(1.0);
        Ok((self.eval(hi)? - self.eval(lo)?) / (hi - lo))
    }

    /// `xi_a(x) = ∫_0^x 1/a(s) ds`.
    ///
    /// At `x = ±1` the value is the limit, which exists only when `1/a` is
    /// integrable near that endpoint.
    pub fn xi(&self, x: f64) -> Result<f64> {
        if !(-1.0..=1.0).contains(&x) {
            return Err(Error::domain(format!("x = {x} outside [-1, 1]")));
        }
        if x.abs() < 1.0 {
            return Ok(self.xi_interior(x));
        }
        let side = if x > 0.0 { Side::Right } else { Side::Left };
        let sign = side.endpoint();
        let core = self.xi_interior(sign * (1.0 - FIRST_SHELL));
        let tail = self.reciprocal_tail(side, DEFAULT_REFINEMENT_LEVELS);
        match tail.outcome {
            TailOutcome::Converged(t) => Ok(core + sign * t),
            TailOutcome::Diverged => Err(Error::Divergence { at: x }),
            TailOutcome::Indeterminate => Err(Error::Indeterminate {
                sequence: tail.partial_sums,
            }),
        }
    }

    fn xi_interior(&self, x: f64) -> f64 {
        quadrature::integrate(
            |s| 1.0 / self.eval_unchecked(s),
            0.0,
            x,
            QUAD_TOL,
            QUAD_TOL,
            QUAD_PANELS,
        )
        .value
    }

    fn reciprocal_tail(&self, side: Side, levels: usize) -> Tail {
        refine_tail(
            |e_far, e_near| {
                quadrature::integrate(
                    |e| 1.0 / self.eval_near(side, e),
                    e_near,
                    e_far,
                    0.0,
                    QUAD_TOL,
                    QUAD_PANELS,
                )
                .value
            },
            levels,
        )
    }

    /// Integrates `|xi_a|^q` over the shells at one end.
    fn xi_power_tail(&self, side: Side, q: f64, levels: usize) -> Tail {
        let sign = side.endpoint();
        // xi at the outer edge of each shell, accumulated shell by shell.
        let mut base = self.xi_interior(sign * (1.0 - FIRST_SHELL)).abs();
        let mut shells = Vec::with_capacity(levels);
        for j in 0..levels {
            let far = FIRST_SHELL * 0.5f64.powi(j as i32);
            let near = 0.5 * far;
            let start = base;
            let integrand = |e: f64| {
                let inner = quadrature::integrate(
                    |s| 1.0 / self.eval_near(side, s),
                    e,
                    far,
                    0.0,
                    1e-12,
                    QUAD_PANELS,
                )
                .value;
                (start + inner).powf(q)
            };
            shells.push(
                quadrature::integrate(integrand, near, far, 0.0, 1e-11, QUAD_PANELS).value,
            );
            base += quadrature::integrate(
                |s| 1.0 / self.eval_near(side, s),
                near,
                far,
                0.0,
                QUAD_TOL,
                QUAD_PANELS,
            )
            .value;
        }
        analyze_shells(&shells)
    }

    /// `(∫_{-1}^{1} |xi_a|^q)^{1/q}`, `+inf` when the tails diverge.
    pub fn xi_lq_norm(&self, q: f64, levels: usize) -> Result<f64> {
        if q < 1.0 {
            return Err(Error::domain(format!("exponent q = {q} < 1")));
        }
        let edge = 1.0 - FIRST_SHELL;
        let core = quadrature::integrate(
            |x| self.xi_interior(x).abs().powf(q),
            -edge,
            edge,
            1e-14,
            1e-11,
            QUAD_PANELS,
        )
        .value;
        let mut total = core;
        for side in [Side::Left, Side::Right] {
            let tail = self.xi_power_tail(side, q, levels);
            match tail.outcome {
                TailOutcome::Converged(t) => total += t,
                TailOutcome::Diverged => return Ok(f64::INFINITY),
                TailOutcome::Indeterminate => {
                    return Err(Error::Indeterminate {
                        sequence: tail.partial_sums,
                    })
                }
            }
        }
        Ok(total.powf(1.0 / q))
    }

    pub fn classify(&self, refinement_levels: usize) -> Result<DegeneracyReport> {
        if refinement_levels < 3 {
            return Err(Error::domain(format!(
                "refinement_levels = {refinement_levels} < 3"
            )));
        }
        let edge = 1.0 - FIRST_SHELL;
        let core = quadrature::integrate(
            |s| 1.0 / self.eval_unchecked(s),
            -edge,
            edge,
            QUAD_TOL,
            QUAD_TOL,
            QUAD_PANELS,
        )
        .value;
        let left = self.reciprocal_tail(Side::Left, refinement_levels);
        let right = self.reciprocal_tail(Side::Right, refinement_levels);
        let sequence: Vec<f64> = left
            .partial_sums
            .iter()
            .zip(&right.partial_sums)
            .map(|(l, r)| core + l + r)
            .collect();

        let reciprocal_integral = match (left.outcome, right.outcome) {
            (TailOutcome::Converged(l), TailOutcome::Converged(r)) => core + l + r,
            (TailOutcome::Diverged, _) | (_, TailOutcome::Diverged) => f64::INFINITY,
            _ => return Err(Error::Indeterminate { sequence }),
        };
        let classification = if self.violates_a4() {
            Degeneracy::NonDegenerate
        } else if reciprocal_integral.is_finite() {
            Degeneracy::WeaklyDegenerate
        } else {
            Degeneracy::StronglyDegenerate
        };
        let mut xi_lq_norms = Vec::new();
        for q in [1.0, 2.0, 3.0] {
            xi_lq_norms.push(XiNorm {
                q,
                norm: self.xi_lq_norm(q, refinement_levels)?,
            });
        }
        Ok(DegeneracyReport {
            classification,
            reciprocal_integral,
            k_constant: reciprocal_integral.sqrt(),
            xi_lq_norms,
            refinement_sequence: sequence,
            violates_a4: self.violates_a4(),
        })
    }

    /// Classification at the default refinement depth, computed once.
    pub fn report(&self) -> Result<&DegeneracyReport> {
        self.report
            .get_or_init(|| {
                self.classify(DEFAULT_REFINEMENT_LEVELS)
                    .map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| Error::Precondition(format!("classification failed: {e}")))
    }

    pub fn degeneracy(&self) -> Result<Degeneracy> {
        Ok(self.report()?.classification)
    }

    /// `k = (∫ 1/a)^{1/2}`; infinite for strongly degenerate coefficients.
    pub fn k_constant(&self) -> Result<f64> {
        Ok(self.report()?.k_constant)
    }

    pub fn check_a5_sd(&self, theta: f64) -> Result<A5Check> {
        let q = q_theta(theta)?;
        let (xi_norm, verdict) = match self.xi_lq_norm(q, DEFAULT_REFINEMENT_LEVELS) {
            Ok(n) if n.is_finite() => (n, Verdict::Holds),
            Ok(n) => (n, Verdict::Fails),
            Err(Error::Indeterminate { .. }) => (f64::NAN, Verdict::Indeterminate),
            Err(e) => return Err(e),
        };
        Ok(A5Check {
            theta,
            q_theta: q,
            xi_norm,
            verdict,
        })
    }
}

fn interpolate(nodes: &[f64], values: &[f64], x: f64) -> f64 {
    let i = match nodes.binary_search_by(|n| n.total_cmp(&x)) {
        Ok(i) => return values[i],
        Err(i) => i.clamp(1, nodes.len() - 1),
    };
    let (x0, x1) = (nodes[i - 1], nodes[i]);
    let w = (x - x0) / (x1 - x0);
    values[i - 1] * (1.0 - w) + values[i] * w
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum TailOutcome {
    Converged(f64),
    Diverged,
    Indeterminate,
}

#[derive(Debug, Clone)]
struct Tail {
    outcome: TailOutcome,
    partial_sums: Vec<f64>,
}

/// Shell contributions `D_j = ∫_{δ_{j+1}}^{δ_j}` for `δ_j = 0.1·2^{-j}`.
fn refine_tail<F: Fn(f64, f64) -> f64>(shell: F, levels: usize) -> Tail {
    let shells: Vec<f64> = (0..levels)
        .map(|j| {
            let far = FIRST_SHELL * 0.5f64.powi(j as i32);
            shell(far, 0.5 * far)
        })
        .collect();
    analyze_shells(&shells)
}

fn analyze_shells(shells: &[f64]) -> Tail {
    let mut partial_sums = Vec::with_capacity(shells.len());
    let mut acc = 0.0;
    for d in shells {
        acc += d;
        partial_sums.push(acc);
    }
    let n = shells.len();
    if shells.iter().all(|&d| d == 0.0) {
        return Tail {
            outcome: TailOutcome::Converged(0.0),
            partial_sums,
        };
    }
    if n < 3 || shells.iter().any(|d| !d.is_finite() || *d <= 0.0) {
        let outcome = if shells.iter().any(|d| d.is_infinite()) {
            TailOutcome::Diverged
        } else {
            TailOutcome::Indeterminate
        };
        return Tail {
            outcome,
            partial_sums,
        };
    }
    // Decay exponents s_j with D_{j+1} = 2^{-s_j} D_j over the last levels.
    let first = n.saturating_sub(4);
    let exps: Vec<f64> = shells[first..]
        .windows(2)
        .map(|w| -(w[1] / w[0]).log2())
        .collect();
    let growth_diverges = partial_sums
        .windows(2)
        .rev()
        .take(3)
        .filter(|w| w[0] > 0.0)
        .all(|w| w[1] / w[0] >= GROWTH_FACTOR)
        && n >= 4;

    let all_decaying = exps.iter().all(|&s| s >= MIN_DECAY_EXPONENT);
    let stable = exps
        .windows(2)
        .all(|w| (w[1] - w[0]).abs() <= DECAY_SPREAD * w[1].abs().max(w[0].abs()));
    let outcome = if all_decaying && stable && !growth_diverges {
        let r = shells[n - 1] / shells[n - 2];
        TailOutcome::Converged(acc + shells[n - 1] * r / (1.0 - r))
    } else if exps.iter().all(|&s| s < MIN_DECAY_EXPONENT) || growth_diverges {
        TailOutcome::Diverged
    } else {
        TailOutcome::Indeterminate
    };
    Tail {
        outcome,
        partial_sums,
    }
}
