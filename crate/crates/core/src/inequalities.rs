//! Embedding and interpolation inequalities for the weighted spaces:
//! exponent formulas, ratio evaluators, the explicit `L^p ≤ c‖·‖_{1,a}`
//! constant, test-function families and a worst-ratio search.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeff::{Degeneracy, DiffusionCoefficient};
use crate::error::{Error, Result};
use crate::mesh::{GridFunction, Mesh, SpaceTimeFunction, TimeGrid};
use crate::norms::{b_norm, h_norm, lp_norm, lp_qt_norm, norm_1a};
use crate::report::{csv_float, extended_real};
use crate::rng::trial_rng;

/// Multiplicative slack on the explicit constant.
pub const SOB1_SLACK: f64 = 1e-6;

/// Relative change between `N` and `2N` below which a worst ratio counts as
/// refinement-stable.
pub const REFINEMENT_TOLERANCE: f64 = 0.1;

/// `α = 2/(2+q)`, defined for `q ≥ 1/2`.
pub fn gn_alpha(q: f64) -> Result<f64> {
    if !(q >= 0.5 && q.is_finite()) {
        return Err(Error::domain(format!("q = {q} must be >= 1/2")));
    }
    Ok(2.0 / (2.0 + q))
}

/// `β = (2/p)(p−2q)/(q+2)`, defined for `1 ≤ 2q < p`.
pub fn gn_beta(p: f64, q: f64) -> Result<f64> {
    if !(1.0 <= 2.0 * q && 2.0 * q < p && p.is_finite()) {
        return Err(Error::domain(format!(
            "exponents must satisfy 1 <= 2q < p (got p = {p}, q = {q})"
        )));
    }
    let beta = (2.0 / p) * (p - 2.0 * q) / (q + 2.0);
    debug_assert!(beta > 0.0 && beta < 1.0);
    Ok(beta)
}

/// Power of `T` in the `L^p(Q_T) ↪ B(Q_T)` bound, `p ∈ [1, 5]`.
pub fn sob2_time_exponent(p: f64) -> Result<f64> {
    if !(1.0..=5.0).contains(&p) {
        return Err(Error::domain(format!("p = {p} must lie in [1, 5]")));
    }
    Ok((5.0 - p) / (3.0 * p))
}

/// Power of `T` in the `L^{2p}(Q_T) ↪ H(Q_T)` bound.
pub fn sob3_time_exponent(p: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::domain(format!("p = {p} must be >= 1")));
    }
    Ok(1.0 / (2.0 * p))
}

/// `4·max{k, √2/2}`.
pub fn sob1_explicit_constant(k: f64) -> f64 {
    4.0 * k.max(std::f64::consts::FRAC_1_SQRT_2)
}

/// `lhs / rhs`, with `0/0 = 0` and `x/0 = ∞` for `x > 0`.
pub fn ratio(lhs: f64, rhs_factor: f64) -> f64 {
    if rhs_factor > 0.0 {
        lhs / rhs_factor
    } else if lhs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lemma {
    Sob1,
    GnLinf,
    GnLp,
    Sob2,
    Sob3,
}

impl fmt::Display for Lemma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Lemma::Sob1 => "sob1",
            Lemma::GnLinf => "gn_linf",
            Lemma::GnLp => "gn_lp",
            Lemma::Sob2 => "sob2",
            Lemma::Sob3 => "sob3",
        })
    }
}

/// One evaluation of an inequality: `lhs ≤ c · rhs_factor`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityTrial {
    pub lemma: Lemma,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub horizon: Option<f64>,
    pub n: usize,
    pub lhs: f64,
    pub rhs_factor: f64,
    #[serde(serialize_with = "extended_real")]
    pub ratio: f64,
    /// Only the first embedding has an explicit constant to test against.
    pub flag: Option<bool>,
    pub function_id: String,
}

impl InequalityTrial {
    fn new(lemma: Lemma, n: usize, lhs: f64, rhs_factor: f64) -> Self {
        Self {
            lemma,
            p: None,
            q: None,
            horizon: None,
            n,
            lhs,
            rhs_factor,
            ratio: ratio(lhs, rhs_factor),
            flag: None,
            function_id: String::new(),
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.function_id = id.into();
        self
    }

    pub const CSV_HEADER: &'static str = "lemma,p,q,T,N,lhs,rhs_factor,ratio,flag,function";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(csv_float).unwrap_or_default();
        let flag = match self.flag {
            Some(true) => "holds",
            Some(false) => "fails",
            None => "",
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.lemma,
            opt(self.p),
            opt(self.q),
            opt(self.horizon),
            self.n,
            csv_float(self.lhs),
            csv_float(self.rhs_factor),
            csv_float(self.ratio),
            flag,
            self.function_id
        )
    }
}

fn weak_k(coeff: &DiffusionCoefficient) -> Result<f64> {
    if coeff.degeneracy()? == Degeneracy::StronglyDegenerate {
        return Err(Error::Precondition(
            "inequality needs 1/a integrable; coefficient is strongly degenerate".into(),
        ));
    }
    coeff.k_constant()
}

/// `‖u‖_{L^p} / ‖u‖_{1,a}` against the explicit constant `4·max{k, √2/2}`.
pub fn check_sob1(u: &GridFunction, coeff: &DiffusionCoefficient, p: f64) -> Result<InequalityTrial> {
    let k = weak_k(coeff)?;
    let lhs = lp_norm(u, p)?;
    let rhs = norm_1a(u, coeff);
    let mut t = InequalityTrial::new(Lemma::Sob1, u.mesh().cells(), lhs, rhs);
    t.p = Some(p);
    t.flag = Some(t.ratio <= sob1_explicit_constant(k) * (1.0 + SOB1_SLACK));
    Ok(t)
}

/// `‖u‖_∞` against `‖u‖_{1,a}^α ‖u‖_{L^{2q}}^{1−α}`.
pub fn check_gn_linf(u: &GridFunction, coeff: &DiffusionCoefficient, q: f64) -> Result<InequalityTrial> {
    let alpha = gn_alpha(q)?;
    weak_k(coeff)?;
    let lhs = lp_norm(u, f64::INFINITY)?;
    let rhs = norm_1a(u, coeff).powf(alpha) * lp_norm(u, 2.0 * q)?.powf(1.0 - alpha);
    let mut t = InequalityTrial::new(Lemma::GnLinf, u.mesh().cells(), lhs, rhs);
    t.q = Some(q);
    Ok(t)
}

/// `‖u‖_{L^p}` against `‖u‖_{1,a}^β ‖u‖_{L^{2q}}^{1−β}`.
pub fn check_gn_lp(u: &GridFunction, coeff: &DiffusionCoefficient, p: f64, q: f64) -> Result<InequalityTrial> {
    let beta = gn_beta(p, q)?;
    weak_k(coeff)?;
    let lhs = lp_norm(u, p)?;
    let rhs = norm_1a(u, coeff).powf(beta) * lp_norm(u, 2.0 * q)?.powf(1.0 - beta);
    let mut t = InequalityTrial::new(Lemma::GnLp, u.mesh().cells(), lhs, rhs);
    t.p = Some(p);
    t.q = Some(q);
    Ok(t)
}

/// `‖u‖_{L^p(Q_T)}` against `T^{(5−p)/(3p)} ‖u‖_B`.
pub fn check_sob2(u: &SpaceTimeFunction, coeff: &DiffusionCoefficient, p: f64) -> Result<InequalityTrial> {
    let e = sob2_time_exponent(p)?;
    let horizon = u.time_grid().horizon();
    let lhs = lp_qt_norm(u, p)?;
    let rhs = horizon.powf(e) * b_norm(u, coeff);
    let mut t = InequalityTrial::new(Lemma::Sob2, u.mesh().cells(), lhs, rhs);
    t.p = Some(p);
    t.horizon = Some(horizon);
    Ok(t)
}

/// `‖u‖_{L^{2p}(Q_T)}` against `T^{1/(2p)} ‖u‖_H`.
pub fn check_sob3(u: &SpaceTimeFunction, coeff: &DiffusionCoefficient, p: f64) -> Result<InequalityTrial> {
    let e = sob3_time_exponent(p)?;
    let horizon = u.time_grid().horizon();
    let rhs = horizon.powf(e) * h_norm(u, coeff)?;
    let lhs = lp_qt_norm(u, 2.0 * p)?;
    let mut t = InequalityTrial::new(Lemma::Sob3, u.mesh().cells(), lhs, rhs);
    t.p = Some(p);
    t.horizon = Some(horizon);
    Ok(t)
}

/// Parametrized test functions. Parameters live in the unit cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `c_0 + Σ_{m≤5} (a_m cos mπx + b_m sin mπx)/m`.
    Trig,
    /// Linear interpolation of 9 equispaced knot values.
    PiecewiseLinear,
    /// `b + A (ε + (1−x²)²)^{−s} (1 + μ sin(πx/2))`.
    Spike,
}

const TRIG_MODES: usize = 5;
const PL_KNOTS: usize = 9;
/// Cosine modes in the temporal factor of space-time test functions.
pub const TIME_MODES: usize = 3;

fn signed(p: f64) -> f64 {
    2.0 * p - 1.0
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Trig, Family::PiecewiseLinear, Family::Spike];

    /// Number of spatial parameters.
    pub fn dimension(self) -> usize {
        match self {
            Family::Trig => 2 * TRIG_MODES + 1,
            Family::PiecewiseLinear => PL_KNOTS,
            Family::Spike => 5,
        }
    }

    /// Whether members have a square-integrable flux derivative.
    pub fn is_smooth(self) -> bool {
        !matches!(self, Family::PiecewiseLinear)
    }

    pub fn eval(self, params: &[f64], x: f64) -> f64 {
        match self {
            Family::Trig => {
                let mut v = signed(params[0]);
                for m in 1..=TRIG_MODES {
                    let arg = m as f64 * std::f64::consts::PI * x;
                    v += (signed(params[2 * m - 1]) * arg.cos() + signed(params[2 * m]) * arg.sin())
                        / m as f64;
                }
                v
            }
            Family::PiecewiseLinear => {
                let s = (x + 1.0) * 0.5 * (PL_KNOTS - 1) as f64;
                let j = (s.floor() as usize).min(PL_KNOTS - 2);
                let f = s - j as f64;
                (1.0 - f) * signed(params[j]) + f * signed(params[j + 1])
            }
            Family::Spike => {
                let (base, amp, eps, s, mu) = spike_parameters(params);
                let d = (1.0 - x) * (1.0 + x);
                base + amp * (eps + d * d).powf(-s) * (1.0 + mu * (0.5 * std::f64::consts::PI * x).sin())
            }
        }
    }

    pub fn grid_function(self, params: &[f64], mesh: &Arc<Mesh>) -> GridFunction {
        GridFunction::from_fn(mesh, |x| self.eval(params, x))
    }

    /// `τ(t)·u(x)` with `τ(t) = Σ_m c_m cos(mπt/T)`; the last
    /// [`TIME_MODES`] parameters give the `c_m`.
    pub fn space_time(self, params: &[f64], mesh: &Arc<Mesh>, time: TimeGrid) -> SpaceTimeFunction {
        let d = self.dimension();
        let spatial = self.grid_function(&params[..d], mesh);
        let horizon = time.horizon();
        let tau = |t: f64| {
            (0..TIME_MODES)
                .map(|m| signed(params[d + m]) * (m as f64 * std::f64::consts::PI * t / horizon).cos())
                .sum::<f64>()
        };
        let rows = (0..=time.steps())
            .map(|n| {
                let c = tau(time.time(n));
                spatial.values().iter().map(|v| c * v).collect()
            })
            .collect();
        SpaceTimeFunction::new(mesh.clone(), time, rows).expect("rows match the mesh")
    }

    pub fn describe(self, params: &[f64]) -> String {
        let body: Vec<String> = params.iter().map(|p| format!("{p:.6}")).collect();
        format!("{}[{}]", serde_json::to_value(self).unwrap().as_str().unwrap(), body.join(";"))
    }

    pub fn random_params<R: Rng>(self, space_time: bool, rng: &mut R) -> Vec<f64> {
        let d = self.dimension() + if space_time { TIME_MODES } else { 0 };
        (0..d).map(|_| rng.gen::<f64>()).collect()
    }
}

fn spike_parameters(params: &[f64]) -> (f64, f64, f64, f64, f64) {
    let base = signed(params[0]);
    let amp = signed(params[1]);
    let eps = 10f64.powf(-3.0 * params[2]);
    let s = 0.05 + 0.95 * params[3];
    let mu = params[4] - 0.5;
    (base, amp, eps, s, mu)
}

/// An inequality together with its exponents and, for space-time bounds, the
/// time grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "lemma", rename_all = "snake_case")]
pub enum Checker {
    Sob1 { p: f64 },
    GnLinf { q: f64 },
    GnLp { p: f64, q: f64 },
    Sob2 { p: f64, horizon: f64, steps: usize },
    Sob3 { p: f64, horizon: f64, steps: usize },
}

impl Checker {
    pub fn lemma(&self) -> Lemma {
        match self {
            Checker::Sob1 { .. } => Lemma::Sob1,
            Checker::GnLinf { .. } => Lemma::GnLinf,
            Checker::GnLp { .. } => Lemma::GnLp,
            Checker::Sob2 { .. } => Lemma::Sob2,
            Checker::Sob3 { .. } => Lemma::Sob3,
        }
    }

    pub fn is_space_time(&self) -> bool {
        matches!(self, Checker::Sob2 { .. } | Checker::Sob3 { .. })
    }

    /// Rejects families the inequality does not apply to.
    pub fn admits(&self, family: Family) -> Result<()> {
        if matches!(self, Checker::Sob3 { .. }) && !family.is_smooth() {
            return Err(Error::Precondition(
                "piecewise-linear functions have no square-integrable flux derivative".into(),
            ));
        }
        Ok(())
    }

    pub fn check_grid(&self, u: &GridFunction, coeff: &DiffusionCoefficient) -> Result<InequalityTrial> {
        match *self {
            Checker::Sob1 { p } => check_sob1(u, coeff, p),
            Checker::GnLinf { q } => check_gn_linf(u, coeff, q),
            Checker::GnLp { p, q } => check_gn_lp(u, coeff, p, q),
            _ => Err(Error::Precondition(format!(
                "{} needs a space-time function",
                self.lemma()
            ))),
        }
    }

    pub fn check_space_time(&self, u: &SpaceTimeFunction, coeff: &DiffusionCoefficient) -> Result<InequalityTrial> {
        match *self {
            Checker::Sob2 { p, .. } => check_sob2(u, coeff, p),
            Checker::Sob3 { p, .. } => check_sob3(u, coeff, p),
            _ => Err(Error::Precondition(format!(
                "{} needs a spatial grid function",
                self.lemma()
            ))),
        }
    }

    fn time_grid(&self) -> Result<Option<TimeGrid>> {
        match *self {
            Checker::Sob2 { horizon, steps, .. } | Checker::Sob3 { horizon, steps, .. } => {
                TimeGrid::new(horizon, steps).map(Some)
            }
            _ => Ok(None),
        }
    }

    /// Evaluates the family member with `params` on `mesh`.
    pub fn evaluate(
        &self,
        family: Family,
        params: &[f64],
        mesh: &Arc<Mesh>,
        coeff: &DiffusionCoefficient,
    ) -> Result<InequalityTrial> {
        self.admits(family)?;
        let trial = match self.time_grid()? {
            Some(time) => self.check_space_time(&family.space_time(params, mesh, time), coeff)?,
            None => self.check_grid(&family.grid_function(params, mesh), coeff)?,
        };
        Ok(trial.with_id(family.describe(params)))
    }
}

/// Settings of the worst-ratio search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub iterations: usize,
    /// Evaluations per hill-climbing restart.
    pub restart_length: usize,
    pub seed: u64,
    pub n: usize,
    pub grading: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            iterations: 64,
            restart_length: 8,
            seed: 0,
            n: 256,
            grading: 2.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchOutcome {
    pub worst: InequalityTrial,
    pub params: Vec<f64>,
    /// The worst function re-evaluated on the mesh with `2N` cells.
    pub refined: InequalityTrial,
    pub relative_change: f64,
    pub stable: bool,
    /// Worst ratio after each evaluation.
    pub running_max: Vec<f64>,
}

fn relative_change(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (b - a).abs() / a.abs().max(b.abs())
    }
}

/// Random-restart hill climbing over the family's unit-cube parameters,
/// maximizing the ratio.
///
/// Each restart draws its own stream from `(seed, restart, step)`, so the
/// first `k` evaluations do not depend on `iterations`. Restarts run in
/// parallel and merge in order.
pub fn adversarial_search(
    checker: Checker,
    family: Family,
    coeff: &DiffusionCoefficient,
    search: &SearchConfig,
) -> Result<SearchOutcome> {
    if search.iterations == 0 || search.restart_length == 0 {
        return Err(Error::domain("search needs at least one iteration"));
    }
    checker.admits(family)?;
    let mesh = Mesh::new(search.n, search.grading)?;
    let space_time = checker.is_space_time();
    let restarts = search.iterations.div_ceil(search.restart_length);
    let runs: Vec<Result<Vec<(Vec<f64>, InequalityTrial)>>> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let len = search
                .restart_length
                .min(search.iterations - r * search.restart_length);
            let mut out = Vec::with_capacity(len);
            let mut rng = trial_rng(search.seed, &[r as u64, 0]);
            let mut best_params = family.random_params(space_time, &mut rng);
            let mut best = checker.evaluate(family, &best_params, &mesh, coeff)?;
            out.push((best_params.clone(), best.clone()));
            for j in 1..len {
                let mut rng = trial_rng(search.seed, &[r as u64, j as u64]);
                let sigma = 0.3 * 0.8f64.powi(j as i32 - 1);
                let cand: Vec<f64> = best_params
                    .iter()
                    .map(|&p| (p + sigma * (2.0 * rng.gen::<f64>() - 1.0)).clamp(0.0, 1.0))
                    .collect();
                let trial = checker.evaluate(family, &cand, &mesh, coeff)?;
                out.push((cand.clone(), trial.clone()));
                if trial.ratio.total_cmp(&best.ratio).is_gt() {
                    best = trial;
                    best_params = cand;
                }
            }
            Ok(out)
        })
        .collect();
    let mut running_max = Vec::with_capacity(search.iterations);
    let mut worst: Option<(Vec<f64>, InequalityTrial)> = None;
    for run in runs {
        for (params, trial) in run? {
            let better = worst
                .as_ref()
                .is_none_or(|(_, w)| trial.ratio.total_cmp(&w.ratio).is_gt());
            if better {
                worst = Some((params, trial));
            }
            running_max.push(worst.as_ref().unwrap().1.ratio);
        }
    }
    let (params, worst) = worst.expect("at least one evaluation");
    let fine = Mesh::new(2 * search.n, search.grading)?;
    let refined = checker.evaluate(family, &params, &fine, coeff)?;
    let change = relative_change(worst.ratio, refined.ratio);
    Ok(SearchOutcome {
        worst,
        params,
        refined,
        relative_change: change,
        stable: change < REFINEMENT_TOLERANCE,
        running_max,
    })
}
