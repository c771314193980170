//! Lebesgue and weighted Sobolev norms of grid functions, and the space-time
//! norms `‖·‖_B` and `‖·‖_H`.
//!
//! Gradients are divided differences at cell midpoints, `a` is sampled at
//! midpoints, and the flux derivative `(a u_x)_x` is always formed from
//! midpoint fluxes so it stays defined where `a` vanishes.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::coeff::DiffusionCoefficient;
use crate::error::{Error, Result};
use crate::mesh::{midpoint_derivative, GridFunction, Mesh, SpaceTimeFunction};

/// `a` sampled at the cell midpoints of `mesh`.
pub fn midpoint_coefficients(mesh: &Mesh, coeff: &DiffusionCoefficient) -> Vec<f64> {
    (0..mesh.cells())
        .map(|i| coeff.eval_unchecked(mesh.midpoint(i)))
        .collect()
}

fn check_exponent(p: f64) -> Result<()> {
    if p >= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("exponent p = {p} < 1")))
    }
}

/// `‖u‖_{L^p}`; `p = f64::INFINITY` gives the nodal maximum.
pub fn lp_norm(u: &GridFunction, p: f64) -> Result<f64> {
    check_exponent(p)?;
    Ok(lp_values(u.mesh(), u.values(), p))
}

pub(crate) fn lp_values(mesh: &Mesh, values: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    if p == 2.0 {
        return mesh.integrate_map(values, |v| v * v).sqrt();
    }
    mesh.integrate_map(values, |v| v.abs().powf(p))
        .powf(1.0 / p)
}

pub(crate) fn seminorm_sq_values(mesh: &Mesh, a_mid: &[f64], values: &[f64]) -> f64 {
    let x = mesh.nodes();
    let mut acc = 0.0;
    for i in 0..mesh.cells() {
        let h = x[i + 1] - x[i];
        let d = (values[i + 1] - values[i]) / h;
        acc += a_mid[i] * d * d * h;
    }
    acc
}

/// `|u|_{1,a} = ‖√a u_x‖_{L²}`.
pub fn seminorm_1a(u: &GridFunction, coeff: &DiffusionCoefficient) -> f64 {
    let a_mid = midpoint_coefficients(u.mesh(), coeff);
    seminorm_sq_values(u.mesh(), &a_mid, u.values()).sqrt()
}

/// `‖u‖_{1,a} = (‖u‖² + |u|²_{1,a})^{1/2}`.
pub fn norm_1a(u: &GridFunction, coeff: &DiffusionCoefficient) -> f64 {
    let a_mid = midpoint_coefficients(u.mesh(), coeff);
    let l2 = lp_values(u.mesh(), u.values(), 2.0);
    (l2 * l2 + seminorm_sq_values(u.mesh(), &a_mid, u.values())).sqrt()
}

/// Midpoint fluxes `F_{i+1/2} = a(x_{i+1/2}) d_{i+1/2}`.
pub fn fluxes(u: &GridFunction, coeff: &DiffusionCoefficient) -> Vec<f64> {
    let a_mid = midpoint_coefficients(u.mesh(), coeff);
    midpoint_derivative(u.mesh(), u.values())
        .into_iter()
        .zip(a_mid)
        .map(|(d, a)| a * d)
        .collect()
}

/// Nodal `(a u_x)_x`: divided differences of midpoint fluxes at interior
/// nodes, linear extrapolation at the two boundary nodes.
pub(crate) fn flux_derivative_values(mesh: &Mesh, a_mid: &[f64], values: &[f64]) -> Vec<f64> {
    let x = mesh.nodes();
    let n = mesh.cells();
    let flux: Vec<f64> = (0..n)
        .map(|i| a_mid[i] * (values[i + 1] - values[i]) / (x[i + 1] - x[i]))
        .collect();
    let mut g = vec![0.0; n + 1];
    for i in 1..n {
        let span = 0.5 * (x[i + 1] - x[i - 1]);
        g[i] = (flux[i] - flux[i - 1]) / span;
    }
    let extrapolate = |i0: usize, i1: usize, at: usize, g: &[f64]| {
        g[i0] + (g[i0] - g[i1]) * (x[at] - x[i0]) / (x[i0] - x[i1])
    };
    g[0] = extrapolate(1, 2, 0, &g);
    g[n] = extrapolate(n - 1, n - 2, n, &g);
    g
}

pub fn flux_derivative(u: &GridFunction, coeff: &DiffusionCoefficient) -> Vec<f64> {
    let a_mid = midpoint_coefficients(u.mesh(), coeff);
    flux_derivative_values(u.mesh(), &a_mid, u.values())
}

/// `‖u‖_{2,a} = (‖u‖²_{1,a} + ‖(a u_x)_x‖²)^{1/2}`.
pub fn norm_2a(u: &GridFunction, coeff: &DiffusionCoefficient) -> f64 {
    let a_mid = midpoint_coefficients(u.mesh(), coeff);
    let mesh = u.mesh();
    let l2sq = mesh.integrate_map(u.values(), |v| v * v);
    let semi = seminorm_sq_values(mesh, &a_mid, u.values());
    let g = flux_derivative_values(mesh, &a_mid, u.values());
    let gsq = mesh.integrate_map(&g, |v| v * v);
    (l2sq + semi + gsq).sqrt()
}

/// Every norm of one grid function. Serializes to a flat JSON object.
#[derive(Debug, Clone, PartialEq)]
pub struct NormReport {
    pub l2: f64,
    pub seminorm_1a: f64,
    pub norm_1a: f64,
    pub norm_2a: Option<f64>,
    pub lp: BTreeMap<String, f64>,
    pub linf: f64,
}

impl NormReport {
    pub fn compute(
        u: &GridFunction,
        coeff: &DiffusionCoefficient,
        exponents: &[f64],
    ) -> Result<Self> {
        let mut lp = BTreeMap::new();
        for &p in exponents {
            lp.insert(format!("l{p}"), lp_norm(u, p)?);
        }
        let mesh = u.mesh();
        let a_mid = midpoint_coefficients(mesh, coeff);
        let l2 = lp_values(mesh, u.values(), 2.0);
        let semi = seminorm_sq_values(mesh, &a_mid, u.values()).sqrt();
        let norm_2a = (mesh.cells() >= 2).then(|| norm_2a(u, coeff));
        Ok(Self {
            l2,
            seminorm_1a: semi,
            norm_1a: (l2 * l2 + semi * semi).sqrt(),
            norm_2a,
            lp,
            linf: lp_values(mesh, u.values(), f64::INFINITY),
        })
    }

    /// Aligned two-column table.
    pub fn table(&self) -> String {
        let mut rows = vec![
            ("l2".to_string(), self.l2),
            ("seminorm_1a".to_string(), self.seminorm_1a),
            ("norm_1a".to_string(), self.norm_1a),
        ];
        if let Some(v) = self.norm_2a {
            rows.push(("norm_2a".into(), v));
        }
        rows.extend(self.lp.iter().map(|(k, v)| (k.clone(), *v)));
        rows.push(("linf".into(), self.linf));
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        rows.iter()
            .map(|(k, v)| format!("{k:<width$}  {v:>.12e}\n"))
            .collect()
    }
}

impl Serialize for NormReport {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(None)?;
        m.serialize_entry("l2", &self.l2)?;
        m.serialize_entry("seminorm_1a", &self.seminorm_1a)?;
        m.serialize_entry("norm_1a", &self.norm_1a)?;
        if let Some(v) = self.norm_2a {
            m.serialize_entry("norm_2a", &v)?;
        }
        for (k, v) in &self.lp {
            m.serialize_entry(k, v)?;
        }
        m.serialize_entry("linf", &self.linf)?;
        m.end()
    }
}

/// Running space-time norms over time slices pushed in order.
///
/// `sup` terms are maxima over time nodes, time integrals of slice quantities
/// are trapezoidal, and `u_t` is the forward difference on each step.
#[derive(Debug, Clone)]
pub struct SpaceTimeAccumulator {
    a_mid: Vec<f64>,
    dt: f64,
    slices: usize,
    sup_l2_sq: f64,
    sup_energy_sq: f64,
    l2_trap: f64,
    grad_trap: f64,
    flux_trap: f64,
    ut_sum: f64,
    prev: Option<(Vec<f64>, f64, f64, f64)>,
}

impl SpaceTimeAccumulator {
    pub fn new(mesh: &Mesh, coeff: &DiffusionCoefficient, dt: f64) -> Self {
        Self::with_midpoint_coefficients(midpoint_coefficients(mesh, coeff), dt)
    }

    pub fn with_midpoint_coefficients(a_mid: Vec<f64>, dt: f64) -> Self {
        Self {
            a_mid,
            dt,
            slices: 0,
            sup_l2_sq: 0.0,
            sup_energy_sq: 0.0,
            l2_trap: 0.0,
            grad_trap: 0.0,
            flux_trap: 0.0,
            ut_sum: 0.0,
            prev: None,
        }
    }

    pub fn push(&mut self, mesh: &Mesh, values: &[f64]) {
        let l2sq = mesh.integrate_map(values, |v| v * v);
        let semi = seminorm_sq_values(mesh, &self.a_mid, values);
        let g = flux_derivative_values(mesh, &self.a_mid, values);
        let gsq = mesh.integrate_map(&g, |v| v * v);
        self.sup_l2_sq = self.sup_l2_sq.max(l2sq);
        self.sup_energy_sq = self.sup_energy_sq.max(l2sq + semi);
        if let Some((prev, prev_l2, prev_semi, prev_g)) = &self.prev {
            let half = 0.5 * self.dt;
            self.l2_trap += half * (prev_l2 + l2sq);
            self.grad_trap += half * (prev_semi + semi);
            self.flux_trap += half * (prev_g + gsq);
            let inv = 1.0 / self.dt;
            let ut_sq: f64 = mesh
                .weights()
                .iter()
                .zip(values.iter().zip(prev))
                .map(|(w, (a, b))| {
                    let d = (a - b) * inv;
                    w * d * d
                })
                .sum();
            self.ut_sum += self.dt * ut_sq;
        }
        self.prev = Some((values.to_vec(), l2sq, semi, gsq));
        self.slices += 1;
    }

    pub fn slices(&self) -> usize {
        self.slices
    }

    /// `(sup ‖u‖² + 2∫|u|²_{1,a})^{1/2}`.
    pub fn b_norm(&self) -> f64 {
        (self.sup_l2_sq + 2.0 * self.grad_trap).sqrt()
    }

    /// `(sup(‖u‖² + |u|²_{1,a}) + ∫(‖u_t‖² + ‖(a u_x)_x‖²))^{1/2}`.
    pub fn h_norm(&self) -> Result<f64> {
        if self.slices < 3 {
            return Err(Error::plain_config(
                "H-norm needs at least two time steps (M >= 2)",
            ));
        }
        Ok((self.sup_energy_sq + self.ut_sum + self.flux_trap).sqrt())
    }

    /// The equivalent integral form `(∫ ‖u‖² + |u|²_{1,a} + ‖u_t‖² + ‖(a u_x)_x‖²)^{1/2}`.
    pub fn hilbert_h_norm(&self) -> Result<f64> {
        if self.slices < 3 {
            return Err(Error::plain_config(
                "H-norm needs at least two time steps (M >= 2)",
            ));
        }
        Ok((self.l2_trap + self.grad_trap + self.ut_sum + self.flux_trap).sqrt())
    }
}

fn accumulate(u: &SpaceTimeFunction, coeff: &DiffusionCoefficient) -> SpaceTimeAccumulator {
    let mesh = u.mesh();
    let mut acc = SpaceTimeAccumulator::new(mesh, coeff, u.time_grid().dt());
    for row in u.rows() {
        acc.push(mesh, row);
    }
    acc
}

pub fn b_norm(u: &SpaceTimeFunction, coeff: &DiffusionCoefficient) -> f64 {
    accumulate(u, coeff).b_norm()
}

pub fn h_norm(u: &SpaceTimeFunction, coeff: &DiffusionCoefficient) -> Result<f64> {
    if u.time_grid().steps() < 2 {
        return Err(Error::plain_config(
            "H-norm needs at least two time steps (M >= 2)",
        ));
    }
    accumulate(u, coeff).h_norm()
}

pub fn hilbert_h_norm(u: &SpaceTimeFunction, coeff: &DiffusionCoefficient) -> Result<f64> {
    if u.time_grid().steps() < 2 {
        return Err(Error::plain_config(
            "H-norm needs at least two time steps (M >= 2)",
        ));
    }
    accumulate(u, coeff).hilbert_h_norm()
}

/// `‖u‖_{L^p(Q_T)}` with trapezoid rules in space and time.
pub fn lp_qt_norm(u: &SpaceTimeFunction, p: f64) -> Result<f64> {
    check_exponent(p)?;
    if p.is_infinite() {
        return Ok(u
            .rows()
            .iter()
            .map(|r| lp_values(u.mesh(), r, p))
            .fold(0.0, f64::max));
    }
    let mesh = u.mesh();
    let dt = u.time_grid().dt();
    let per_slice: Vec<f64> = u
        .rows()
        .iter()
        .map(|r| mesh.integrate_map(r, |v| v.abs().powf(p)))
        .collect();
    let m = per_slice.len() - 1;
    let inner: f64 = per_slice[1..m].iter().sum();
    let total = dt * (0.5 * (per_slice[0] + per_slice[m]) + inner);
    Ok(total.powf(1.0 / p))
}
