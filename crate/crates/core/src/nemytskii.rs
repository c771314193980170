//! Nonlinearities `f(t, x, u)`, the superposition map `u ↦ f(·, ·, u)`,
//! Monte-Carlo validation of the growth, one-sided, local-Lipschitz and
//! time-derivative bounds, and empirical local-Lipschitz constants.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeff::Degeneracy;
use crate::error::{Assumption, Error, Result};
use crate::field::Field;
use crate::inequalities::{ratio, Family};
use crate::mesh::{GridFunction, Mesh, SpaceTimeFunction, TimeGrid};
use crate::norms::{b_norm, h_norm, lp_qt_norm};
use crate::report::extended_real;
use crate::rng::trial_rng;
use crate::DiffusionCoefficient;

/// Serialized model description, e.g. `{"kind": "pure_power", "g0": 1.0,
/// "theta": 3, "sign": -1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    /// `c(t,x)·min{|u|^{ϑ−1}, 1}·u − |u|^{ϑ−1}u`.
    PaperExample { c: Field, theta: f64 },
    /// `sign·g0·|u|^{ϑ−1}u`.
    PurePower { g0: f64, theta: f64, sign: i8 },
    Zero,
}

/// A nonlinearity with its declared constants on `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NemytskiiModel {
    pub kind: ModelKind,
    pub theta: f64,
    pub g0: f64,
    pub nu: f64,
    pub theta_sup: f64,
    pub horizon: f64,
}

/// Exclusive upper bound on the growth exponent for the given degeneracy.
pub fn theta_sup(class: Degeneracy) -> f64 {
    match class {
        Degeneracy::StronglyDegenerate => 3.0,
        Degeneracy::WeaklyDegenerate | Degeneracy::NonDegenerate => 4.0,
    }
}

#[inline]
fn signed_power(u: f64, theta: f64) -> f64 {
    if theta == 1.0 {
        u
    } else {
        u.abs().powf(theta - 1.0) * u
    }
}

impl NemytskiiModel {
    /// Validates the exponent and derives `(g0, ν)` for the horizon.
    pub fn new(kind: ModelKind, class: Degeneracy, horizon: f64) -> Result<Self> {
        let sup = theta_sup(class);
        let a3 = Assumption::A3;
        let check_theta = |theta: f64| {
            if theta >= 1.0 && theta < sup {
                Ok(())
            } else {
                Err(Error::config(
                    a3,
                    format!("growth exponent theta = {theta} must lie in [1, {sup})"),
                ))
            }
        };
        let (theta, g0, nu) = match &kind {
            ModelKind::Zero => (1.0, 0.0, 0.0),
            ModelKind::PurePower { g0, theta, sign } => {
                check_theta(*theta)?;
                if !(*g0 >= 0.0 && g0.is_finite()) {
                    return Err(Error::config(a3, format!("g0 = {g0} must be finite and >= 0")));
                }
                if *sign != 1 && *sign != -1 {
                    return Err(Error::config(a3, format!("sign = {sign} must be +1 or -1")));
                }
                // The local Lipschitz bound needs g0·ϑ; it also covers the one-sided bound.
                (*theta, *g0, g0 * theta)
            }
            ModelKind::PaperExample { c, theta } => {
                check_theta(*theta)?;
                c.validate(horizon)
                    .map_err(|e| Error::config(a3, format!("coefficient c: {e}")))?;
                let sup_c = c.sup_abs(horizon);
                let nu = (theta * sup_c.max(1.0)).max(c.lip_t());
                (*theta, sup_c + 1.0, nu)
            }
        };
        Ok(Self {
            kind,
            theta,
            g0,
            nu,
            theta_sup: sup,
            horizon,
        })
    }

    pub fn zero() -> Self {
        Self {
            kind: ModelKind::Zero,
            theta: 1.0,
            g0: 0.0,
            nu: 0.0,
            theta_sup: 4.0,
            horizon: 1.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, ModelKind::Zero)
    }

    pub fn eval(&self, t: f64, x: f64, u: f64) -> f64 {
        match &self.kind {
            ModelKind::Zero => 0.0,
            ModelKind::PurePower { g0, theta, sign } => *sign as f64 * g0 * signed_power(u, *theta),
            ModelKind::PaperExample { c, theta } => {
                let p = signed_power(u, *theta);
                let capped = if u.abs() < 1.0 { p } else { u };
                c.eval(t, x) * capped - p
            }
        }
    }

    /// Nodal superposition `φ(u)(t, x) = f(t, x, u(t, x))`.
    pub fn apply_phi(&self, u: &SpaceTimeFunction) -> SpaceTimeFunction {
        u.map(|t, x, v| self.eval(t, x, v))
    }

    /// Exponent `1 + 1/ϑ` of the target Lebesgue space.
    pub fn target_exponent(&self) -> f64 {
        1.0 + 1.0 / self.theta
    }
}

/// Result of testing one bound over the sample set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub name: &'static str,
    pub holds: bool,
    /// Smallest `rhs / lhs` over samples with `lhs > 0`; `∞` if there are none.
    #[serde(serialize_with = "extended_real")]
    pub worst_margin: f64,
    /// Smallest constant that would make the bound hold on the samples.
    #[serde(serialize_with = "extended_real")]
    pub empirical_constant: f64,
    pub violations: usize,
    /// `(t, x, u, v)` at the worst margin.
    pub worst_sample: Option<[f64; 4]>,
}

/// Outcome of the Monte-Carlo conformance check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct A3Report {
    pub samples: usize,
    pub box_u: f64,
    pub theta: f64,
    pub g0: f64,
    pub nu: f64,
    pub bounds: Vec<BoundCheck>,
    pub conforming: bool,
}

impl A3Report {
    pub fn bound(&self, name: &str) -> Option<&BoundCheck> {
        self.bounds.iter().find(|b| b.name == name)
    }

    /// Empirical one-sided constant.
    pub fn empirical_nu(&self) -> f64 {
        self.bound("one_sided").map_or(0.0, |b| b.empirical_constant)
    }
}

/// Sampling box for `u, v`.
pub const DEFAULT_BOX: f64 = 10.0;
/// Step of the centered difference in `t`.
pub const FD_STEP: f64 = 1e-5;
const EXACT_SLACK: f64 = 1e-9;
const FD_SLACK: f64 = 1e-6;

const BOUND_NAMES: [&str; 4] = ["growth", "one_sided", "local_lipschitz", "time_derivative"];

struct Sample {
    point: [f64; 4],
    /// `(lhs, rhs, normalizer)` per bound; the empirical constant is `lhs / normalizer`.
    terms: [(f64, f64, f64); 4],
}

fn evaluate_sample(model: &NemytskiiModel, point: [f64; 4]) -> Sample {
    let [t, x, u, v] = point;
    let (theta, g0, nu) = (model.theta, model.g0, model.nu);
    let fu = model.eval(t, x, u);
    let fv = model.eval(t, x, v);
    let du = u - v;
    let au = u.abs().powf(theta);
    let growth = (fu.abs(), g0 * au, au);
    let one_sided = ((fu - fv) * du, nu * du * du, du * du);
    let weight = (1.0 + u.abs().powf(theta - 1.0) + v.abs().powf(theta - 1.0)) * du.abs();
    let lipschitz = ((fu - fv).abs(), nu * weight, weight);
    let (lo, hi) = (FD_STEP, model.horizon - FD_STEP);
    let tc = if hi > lo { t.clamp(lo, hi) } else { t };
    let ft = (model.eval(tc + FD_STEP, x, u) - model.eval(tc - FD_STEP, x, u)) / (2.0 * FD_STEP);
    let time = (-ft * u, nu * u * u, u * u);
    Sample {
        point: [tc, x, u, v],
        terms: [growth, one_sided, lipschitz, time],
    }
}

/// Checks the four bounds at `samples` points of `[0,T]×[−1,1]×[−U,U]²`.
///
/// Sample `i` is drawn from its own stream, so the report does not depend on
/// thread count.
pub fn validate_a3(model: &NemytskiiModel, samples: usize, box_u: f64, seed: u64) -> Result<A3Report> {
    if samples < 100 {
        return Err(Error::domain(format!("sample budget {samples} < 100")));
    }
    if !(box_u > 0.0 && box_u.is_finite()) {
        return Err(Error::domain(format!("sampling box U = {box_u} must be positive")));
    }
    let evaluated: Vec<Sample> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, &[i as u64]);
            let t = rng.gen::<f64>() * model.horizon;
            let x = 2.0 * rng.gen::<f64>() - 1.0;
            let u = box_u * (2.0 * rng.gen::<f64>() - 1.0);
            let v = box_u * (2.0 * rng.gen::<f64>() - 1.0);
            evaluate_sample(model, [t, x, u, v])
        })
        .collect();
    let bounds: Vec<BoundCheck> = BOUND_NAMES
        .iter()
        .enumerate()
        .map(|(k, &name)| {
            let slack = if k == 3 { FD_SLACK } else { EXACT_SLACK };
            let mut check = BoundCheck {
                name,
                holds: true,
                worst_margin: f64::INFINITY,
                empirical_constant: 0.0,
                violations: 0,
                worst_sample: None,
            };
            for s in &evaluated {
                let (lhs, rhs, norm) = s.terms[k];
                if norm > 0.0 {
                    check.empirical_constant = check.empirical_constant.max(lhs / norm);
                }
                if lhs > 0.0 {
                    let margin = rhs / lhs;
                    if margin < check.worst_margin {
                        check.worst_margin = margin;
                        check.worst_sample = Some(s.point);
                    }
                    if lhs - rhs > slack * (lhs.abs() + rhs.abs() + 1.0) {
                        check.violations += 1;
                    }
                }
            }
            check.holds = check.violations == 0;
            check
        })
        .collect();
    let conforming = bounds.iter().all(|b| b.holds);
    Ok(A3Report {
        samples,
        box_u,
        theta: model.theta,
        g0: model.g0,
        nu: model.nu,
        bounds,
        conforming,
    })
}

/// `‖φ(u)‖^{1+1/ϑ}_{L^{1+1/ϑ}(Q_T)}` against `T^{(4−ϑ)/3} ‖u‖_B^{ϑ+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiTrial {
    pub norm: f64,
    pub lhs: f64,
    pub rhs_factor: f64,
    #[serde(serialize_with = "extended_real")]
    pub ratio: f64,
}

pub fn phi_l1theta_norm(model: &NemytskiiModel, u: &SpaceTimeFunction, coeff: &DiffusionCoefficient) -> Result<PhiTrial> {
    let r = model.target_exponent();
    let norm = lp_qt_norm(&model.apply_phi(u), r)?;
    let lhs = norm.powf(r);
    let horizon = u.time_grid().horizon();
    let rhs_factor = horizon.powf((4.0 - model.theta) / 3.0) * b_norm(u, coeff).powf(model.theta + 1.0);
    Ok(PhiTrial {
        norm,
        lhs,
        rhs_factor,
        ratio: ratio(lhs, rhs_factor),
    })
}

/// `‖φ(u)‖²_{L²(Q_T)}` against `T ‖u‖_H^{2ϑ}`.
pub fn phi_l2_h_trial(model: &NemytskiiModel, u: &SpaceTimeFunction, coeff: &DiffusionCoefficient) -> Result<PhiTrial> {
    let norm = lp_qt_norm(&model.apply_phi(u), 2.0)?;
    let lhs = norm * norm;
    let horizon = u.time_grid().horizon();
    let rhs_factor = horizon * h_norm(u, coeff)?.powf(2.0 * model.theta);
    Ok(PhiTrial {
        norm,
        lhs,
        rhs_factor,
        ratio: ratio(lhs, rhs_factor),
    })
}

/// An empirical constant fixed as a multiple of the worst ratio on a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    pub observed_max: f64,
    pub constant: f64,
}

pub const CALIBRATION_FACTOR: f64 = 1.1;

impl Calibration {
    pub fn from_ratios(ratios: impl IntoIterator<Item = f64>) -> Self {
        let observed_max = ratios.into_iter().fold(0.0, f64::max);
        Self {
            observed_max,
            constant: CALIBRATION_FACTOR * observed_max,
        }
    }

    pub fn holds(&self, trial: &PhiTrial) -> bool {
        trial.lhs <= self.constant * trial.rhs_factor
    }
}

/// `‖φ(u) − φ(v)‖_{L^{1+1/ϑ}(Q_T)} / ‖u − v‖_B`.
pub fn lipschitz_ratio(
    model: &NemytskiiModel,
    u: &SpaceTimeFunction,
    v: &SpaceTimeFunction,
    coeff: &DiffusionCoefficient,
) -> Result<f64> {
    let diff = u.sub(v)?;
    if diff.rows().iter().flatten().all(|&d| d == 0.0) {
        return Err(Error::UndefinedRatio("u and v coincide".into()));
    }
    let dphi = model.apply_phi(u).sub(&model.apply_phi(v))?;
    let num = lp_qt_norm(&dphi, model.target_exponent())?;
    Ok(num / b_norm(&diff, coeff))
}

/// One pair of the local-Lipschitz corpus with its B-norms.
#[derive(Debug, Clone)]
pub struct LipschitzPair {
    pub u: SpaceTimeFunction,
    pub v: SpaceTimeFunction,
    pub radius: f64,
}

impl LipschitzPair {
    pub fn new(u: SpaceTimeFunction, v: SpaceTimeFunction, coeff: &DiffusionCoefficient) -> Self {
        let radius = b_norm(&u, coeff).max(b_norm(&v, coeff));
        Self { u, v, radius }
    }
}

/// Largest ratio over pairs with both B-norms at most `r`; 0 if none qualify.
pub fn empirical_k_r(
    model: &NemytskiiModel,
    pairs: &[LipschitzPair],
    r: f64,
    coeff: &DiffusionCoefficient,
) -> Result<f64> {
    let ratios: Vec<Result<f64>> = pairs
        .par_iter()
        .filter(|p| p.radius <= r)
        .map(|p| lipschitz_ratio(model, &p.u, &p.v, coeff))
        .collect();
    ratios
        .into_iter()
        .try_fold(0.0, |m: f64, r| r.map(|r| m.max(r)))
}

/// Spatial pairs `(u, v)` of mixed amplitude and separation drawn from the
/// trigonometric family; pair `i` uses its own stream.
pub fn spatial_corpus(mesh: &Arc<Mesh>, count: usize, seed: u64) -> Vec<(GridFunction, GridFunction)> {
    (0..count)
        .map(|i| {
            let mut rng = trial_rng(seed, &[i as u64]);
            let amp = 10f64.powf(rng.gen_range(-1.3..0.7));
            let sep = 10f64.powf(rng.gen_range(-3.0..0.0));
            let p = Family::Trig.random_params(false, &mut rng);
            let q = Family::Trig.random_params(false, &mut rng);
            let u = Family::Trig.grid_function(&p, mesh).scaled(amp);
            let dv = Family::Trig.grid_function(&q, mesh).scaled(amp * sep);
            let v = u.add(&dv).expect("same mesh");
            (u, v)
        })
        .collect()
}

/// Empirical `K_R(T)` for one `(T, R)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KrEntry {
    pub horizon: f64,
    pub radius: f64,
    pub k_r: f64,
    /// Pairs whose B-norms on the longest horizon are at most `R`.
    pub pairs_in_ball: usize,
}

/// `K_R(T)` over a spatial corpus extended constantly in time on `[0, T]`.
///
/// Ball membership uses the B-norm on the longest horizon; restricting such a
/// pair to a shorter `[0, T]` keeps it inside the ball, so every `(T, R)` uses
/// admissible pairs and the member sets are nested in both `T` and `R`.
pub fn k_r_table(
    model: &NemytskiiModel,
    corpus: &[(GridFunction, GridFunction)],
    radii: &[f64],
    horizons: &[f64],
    steps: usize,
    coeff: &DiffusionCoefficient,
) -> Result<Vec<KrEntry>> {
    let longest = horizons.iter().copied().fold(f64::NAN, f64::max);
    if !(longest > 0.0) {
        return Err(Error::domain("horizons must be positive"));
    }
    let extend = |t: f64| -> Result<Vec<LipschitzPair>> {
        let time = TimeGrid::new(t, steps)?;
        Ok(corpus
            .iter()
            .map(|(u, v)| {
                LipschitzPair::new(
                    SpaceTimeFunction::constant_in_time(u, time),
                    SpaceTimeFunction::constant_in_time(v, time),
                    coeff,
                )
            })
            .collect())
    };
    let membership: Vec<f64> = extend(longest)?.iter().map(|p| p.radius).collect();
    let mut out = Vec::with_capacity(radii.len() * horizons.len());
    for &t in horizons {
        let mut pairs = extend(t)?;
        for (p, &r) in pairs.iter_mut().zip(&membership) {
            p.radius = r;
        }
        for &r in radii {
            out.push(KrEntry {
                horizon: t,
                radius: r,
                k_r: empirical_k_r(model, &pairs, r, coeff)?,
                pairs_in_ball: pairs.iter().filter(|p| p.radius <= r).count(),
            });
        }
    }
    Ok(out)
}

/// Whether `k_r` is nondecreasing in `R` at fixed `T` and in `T` at fixed `R`.
pub fn k_r_monotone(table: &[KrEntry]) -> (bool, bool) {
    let mut in_r = true;
    let mut in_t = true;
    for a in table {
        for b in table {
            if a.horizon == b.horizon && a.radius < b.radius && b.k_r < a.k_r {
                in_r = false;
            }
            if a.radius == b.radius && a.horizon < b.horizon && b.k_r < a.k_r {
                in_t = false;
            }
        }
    }
    (in_r, in_t)
}
