//! Bounded scalar fields on `[0, T] × [-1, 1]`, used for the reaction
//! coefficient and for the coefficient inside the built-in nonlinearity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A bounded field `g(t, x)`.
///
/// Serialized externally tagged, e.g. `{"const": 1.0}` or
/// `{"affine": {"c0": 0.5, "ct": 0.0, "cx": 0.1}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Const(f64),
    /// `c0 + ct·t + cx·x`.
    Affine { c0: f64, ct: f64, cx: f64 },
    /// `offset + amp·cos(kt·t + kx·x)`.
    Wave {
        offset: f64,
        amp: f64,
        kt: f64,
        kx: f64,
    },
    /// Bilinear interpolation of `values[n][i]` at `(times[n], nodes[i])`.
    Tabulated {
        times: Vec<f64>,
        nodes: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

impl Default for Field {
    fn default() -> Self {
        Field::Const(0.0)
    }
}

fn bracket(grid: &[f64], v: f64) -> (usize, f64) {
    if grid.len() == 1 {
        return (0, 0.0);
    }
    let v = v.clamp(grid[0], grid[grid.len() - 1]);
    let j = match grid.partition_point(|&g| g <= v) {
        0 => 0,
        k => (k - 1).min(grid.len() - 2),
    };
    let s = (v - grid[j]) / (grid[j + 1] - grid[j]);
    (j, s)
}

impl Field {
    /// Checks finiteness and, for tables, shape and coverage of `[0, T] × [-1, 1]`.
    pub fn validate(&self, horizon: f64) -> Result<()> {
        let finite = |v: f64| v.is_finite();
        match self {
            Field::Const(c) => {
                if !finite(*c) {
                    return Err(Error::plain_config("field constant is not finite"));
                }
            }
            Field::Affine { c0, ct, cx } => {
                if ![*c0, *ct, *cx].into_iter().all(finite) {
                    return Err(Error::plain_config("affine field has a non-finite parameter"));
                }
            }
            Field::Wave {
                offset,
                amp,
                kt,
                kx,
            } => {
                if ![*offset, *amp, *kt, *kx].into_iter().all(finite) {
                    return Err(Error::plain_config("wave field has a non-finite parameter"));
                }
            }
            Field::Tabulated {
                times,
                nodes,
                values,
            } => {
                let increasing = |g: &[f64]| !g.is_empty() && g.windows(2).all(|w| w[1] > w[0]);
                if !increasing(times) || !increasing(nodes) {
                    return Err(Error::plain_config(
                        "tabulated field grids must be nonempty and strictly increasing",
                    ));
                }
                if nodes[0] > -1.0 || *nodes.last().unwrap() < 1.0 {
                    return Err(Error::plain_config("tabulated field nodes must cover [-1, 1]"));
                }
                if times[0] > 0.0 || *times.last().unwrap() < horizon {
                    return Err(Error::plain_config(format!(
                        "tabulated field times must cover [0, {horizon}]"
                    )));
                }
                if values.len() != times.len() || values.iter().any(|r| r.len() != nodes.len()) {
                    return Err(Error::plain_config(
                        "tabulated field values must be times.len() rows of nodes.len() entries",
                    ));
                }
                if values.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::plain_config("tabulated field has a non-finite value"));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        match self {
            Field::Const(c) => *c,
            Field::Affine { c0, ct, cx } => c0 + ct * t + cx * x,
            Field::Wave {
                offset,
                amp,
                kt,
                kx,
            } => offset + amp * (kt * t + kx * x).cos(),
            Field::Tabulated {
                times,
                nodes,
                values,
            } => {
                let (n, st) = bracket(times, t);
                let (i, sx) = bracket(nodes, x);
                let row = |n: usize| {
                    let r = &values[n];
                    if nodes.len() == 1 {
                        r[0]
                    } else {
                        (1.0 - sx) * r[i] + sx * r[i + 1]
                    }
                };
                if times.len() == 1 {
                    row(0)
                } else {
                    (1.0 - st) * row(n) + st * row(n + 1)
                }
            }
        }
    }

    /// Samples one time slice at the given nodes.
    pub fn slice(&self, t: f64, nodes: &[f64]) -> Vec<f64> {
        nodes.iter().map(|&x| self.eval(t, x)).collect()
    }

    fn bounds(&self, horizon: f64) -> (f64, f64) {
        match self {
            Field::Const(c) => (*c, *c),
            Field::Affine { c0, ct, cx } => {
                let corners = [
                    c0 - cx,
                    c0 + cx,
                    c0 + ct * horizon - cx,
                    c0 + ct * horizon + cx,
                ];
                corners
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                        (lo.min(v), hi.max(v))
                    })
            }
            // Upper envelope; attained whenever the phase sweeps a full period.
            Field::Wave { offset, amp, .. } => (offset - amp.abs(), offset + amp.abs()),
            // Bilinear interpolants attain their extremes at table entries.
            Field::Tabulated { values, .. } => values
                .iter()
                .flatten()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                }),
        }
    }

    /// `sup |g|` over `[0, T] × [-1, 1]` (an upper bound for waves).
    pub fn sup_abs(&self, horizon: f64) -> f64 {
        let (lo, hi) = self.bounds(horizon);
        lo.abs().max(hi.abs())
    }

    /// `sup g⁺` over `[0, T] × [-1, 1]`.
    pub fn sup_positive(&self, horizon: f64) -> f64 {
        self.bounds(horizon).1.max(0.0)
    }

    /// Lipschitz constant in `t`.
    pub fn lip_t(&self) -> f64 {
        match self {
            Field::Const(_) => 0.0,
            Field::Affine { ct, .. } => ct.abs(),
            Field::Wave { amp, kt, .. } => (amp * kt).abs(),
            Field::Tabulated { times, values, .. } => {
                let mut lip: f64 = 0.0;
                for n in 1..times.len() {
                    let dt = times[n] - times[n - 1];
                    for (a, b) in values[n].iter().zip(&values[n - 1]) {
                        lip = lip.max((a - b).abs() / dt);
                    }
                }
                lip
            }
        }
    }

    /// Time-independent fields need no per-step resampling.
    pub fn is_static(&self) -> bool {
        match self {
            Field::Const(_) => true,
            Field::Affine { ct, .. } => *ct == 0.0,
            Field::Wave { amp, kt, .. } => *amp == 0.0 || *kt == 0.0,
            Field::Tabulated { times, .. } => times.len() == 1,
        }
    }
}
