//! Graded meshes of [-1, 1], uniform time grids, trapezoid quadrature and
//! nodal grid functions.

use std::io::{self, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::report::csv_float;

/// Nodes `-1 = x_0 < … < x_N = 1` with composite-trapezoid weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    grading_exponent: f64,
}

impl Mesh {
    /// Symmetric graded mesh: `x_i = sign(s_i)(1 − (1−|s_i|)^g)`, `s_i = −1 + 2i/N`.
    ///
    /// `g = 1` is uniform; larger `g` clusters nodes at ±1.
    pub fn new(n: usize, grading_exponent: f64) -> Result<Arc<Self>> {
        if n < 8 || !n.is_multiple_of(2) {
            return Err(Error::plain_config(format!(
                "mesh size N = {n} must be even and at least 8"
            )));
        }
        if !(grading_exponent >= 1.0 && grading_exponent.is_finite()) {
            return Err(Error::plain_config(format!(
                "grading exponent {grading_exponent} must be >= 1"
            )));
        }
        let half = n / 2;
        let mut nodes = vec![0.0; n + 1];
        for i in 0..=n {
            // s computed from integers keeps the map exactly antisymmetric.
            let s = (2 * i as i64 - n as i64) as f64 / n as f64;
            let x = s.signum() * (1.0 - (1.0 - s.abs()).powf(grading_exponent));
            nodes[i] = x;
        }
        nodes[0] = -1.0;
        nodes[n] = 1.0;
        nodes[half] = 0.0;
        Ok(Arc::new(Self::from_nodes_unchecked(nodes, grading_exponent)))
    }

    /// Mesh from explicit nodes. They must start at -1, end at 1 and increase.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Arc<Self>> {
        if nodes.len() < 3
            || nodes[0] != -1.0
            || *nodes.last().unwrap() != 1.0
            || nodes.windows(2).any(|w| !(w[1] > w[0]))
        {
            return Err(Error::plain_config(
                "mesh nodes must increase strictly from -1 to 1",
            ));
        }
        Ok(Arc::new(Self::from_nodes_unchecked(nodes, 1.0)))
    }

    fn from_nodes_unchecked(nodes: Vec<f64>, grading_exponent: f64) -> Self {
        let n = nodes.len() - 1;
        let mut weights = vec![0.0; n + 1];
        for i in 0..n {
            let h = nodes[i + 1] - nodes[i];
            weights[i] += 0.5 * h;
            weights[i + 1] += 0.5 * h;
        }
        Self {
            nodes,
            weights,
            grading_exponent,
        }
    }

    /// Number of cells `N`; there are `N + 1` nodes.
    pub fn cells(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn grading_exponent(&self) -> f64 {
        self.grading_exponent
    }

    pub fn width(&self, cell: usize) -> f64 {
        self.nodes[cell + 1] - self.nodes[cell]
    }

    pub fn midpoint(&self, cell: usize) -> f64 {
        0.5 * (self.nodes[cell] + self.nodes[cell + 1])
    }

    pub fn min_width(&self) -> f64 {
        (0..self.cells())
            .map(|i| self.width(i))
            .fold(f64::INFINITY, f64::min)
    }

    /// Composite trapezoid `Σ w_i f_i`.
    pub fn integrate(&self, integrand: &[f64]) -> Result<f64> {
        if integrand.len() != self.len() {
            return Err(Error::Shape {
                expected: self.len(),
                got: integrand.len(),
            });
        }
        Ok(self.integrate_unchecked(integrand))
    }

    pub(crate) fn integrate_unchecked(&self, integrand: &[f64]) -> f64 {
        self.weights.iter().zip(integrand).map(|(w, f)| w * f).sum()
    }

    /// Trapezoid of `g(f_i)` without materializing the mapped vector.
    pub(crate) fn integrate_map(&self, values: &[f64], g: impl Fn(f64) -> f64) -> f64 {
        self.weights
            .iter()
            .zip(values)
            .map(|(w, &v)| w * g(v))
            .sum()
    }

    /// Same mesh in the sense used for combining grid functions.
    pub fn same_as(self: &Arc<Self>, other: &Arc<Self>) -> bool {
        Arc::ptr_eq(self, other) || **self == **other
    }
}

/// Nodal values on a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.len() {
            return Err(Error::Shape {
                expected: mesh.len(),
                got: values.len(),
            });
        }
        Ok(Self { mesh, values })
    }

    pub fn from_fn(mesh: &Arc<Mesh>, f: impl Fn(f64) -> f64) -> Self {
        let values = mesh.nodes().iter().map(|&x| f(x)).collect();
        Self {
            mesh: mesh.clone(),
            values,
        }
    }

    pub fn zeros(mesh: &Arc<Mesh>) -> Self {
        Self::from_fn(mesh, |_| 0.0)
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            mesh: self.mesh.clone(),
            values: self.values.iter().map(|v| lambda * v).collect(),
        }
    }

    pub fn sub(&self, other: &GridFunction) -> Result<Self> {
        self.check_mesh(other)?;
        Ok(Self {
            mesh: self.mesh.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn add(&self, other: &GridFunction) -> Result<Self> {
        self.check_mesh(other)?;
        Ok(Self {
            mesh: self.mesh.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub(crate) fn check_mesh(&self, other: &GridFunction) -> Result<()> {
        if !self.mesh.same_as(&other.mesh) {
            return Err(Error::Shape {
                expected: self.mesh.len(),
                got: other.mesh.len(),
            });
        }
        Ok(())
    }

    /// Divided differences `d_{i+1/2} = (u_{i+1} − u_i)/(x_{i+1} − x_i)`.
    pub fn midpoint_derivative(&self) -> Vec<f64> {
        midpoint_derivative(&self.mesh, &self.values)
    }
}

pub(crate) fn midpoint_derivative(mesh: &Mesh, values: &[f64]) -> Vec<f64> {
    let x = mesh.nodes();
    values
        .windows(2)
        .zip(x.windows(2))
        .map(|(u, x)| (u[1] - u[0]) / (x[1] - x[0]))
        .collect()
}

/// Uniform grid `t_n = n·T/M` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) || steps == 0 {
            return Err(Error::plain_config(format!(
                "time grid needs T > 0 and M >= 1 (got T = {horizon}, M = {steps})"
            )));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        if n == self.steps {
            self.horizon
        } else {
            n as f64 * self.horizon / self.steps as f64
        }
    }
}

/// `M + 1` time slices sharing one mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeFunction {
    mesh: Arc<Mesh>,
    time: TimeGrid,
    slices: Vec<Vec<f64>>,
}

impl SpaceTimeFunction {
    pub fn new(mesh: Arc<Mesh>, time: TimeGrid, slices: Vec<Vec<f64>>) -> Result<Self> {
        if slices.len() != time.steps() + 1 {
            return Err(Error::Shape {
                expected: time.steps() + 1,
                got: slices.len(),
            });
        }
        if let Some(bad) = slices.iter().find(|s| s.len() != mesh.len()) {
            return Err(Error::Shape {
                expected: mesh.len(),
                got: bad.len(),
            });
        }
        Ok(Self { mesh, time, slices })
    }

    pub fn from_fn(mesh: &Arc<Mesh>, time: TimeGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let slices = (0..=time.steps())
            .map(|n| {
                let t = time.time(n);
                mesh.nodes().iter().map(|&x| f(t, x)).collect()
            })
            .collect();
        Self {
            mesh: mesh.clone(),
            time,
            slices,
        }
    }

    /// The static extension `u(t, ·) = u` for all `t`.
    pub fn constant_in_time(u: &GridFunction, time: TimeGrid) -> Self {
        Self {
            mesh: u.mesh().clone(),
            time,
            slices: vec![u.values().to_vec(); time.steps() + 1],
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn time_grid(&self) -> TimeGrid {
        self.time
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.slices
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.slices[n]
    }

    pub fn slice(&self, n: usize) -> GridFunction {
        GridFunction {
            mesh: self.mesh.clone(),
            values: self.slices[n].clone(),
        }
    }

    pub fn last(&self) -> GridFunction {
        self.slice(self.time.steps())
    }

    pub fn map(&self, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let x = self.mesh.nodes();
        let slices = self
            .slices
            .iter()
            .enumerate()
            .map(|(n, row)| {
                let t = self.time.time(n);
                row.iter().zip(x).map(|(&u, &x)| f(t, x, u)).collect()
            })
            .collect();
        Self {
            mesh: self.mesh.clone(),
            time: self.time,
            slices,
        }
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        self.map(|_, _, u| lambda * u)
    }

    pub fn sub(&self, other: &SpaceTimeFunction) -> Result<Self> {
        if !self.mesh.same_as(&other.mesh) || self.time != other.time {
            return Err(Error::Shape {
                expected: self.slices.len() * self.mesh.len(),
                got: other.slices.len() * other.mesh.len(),
            });
        }
        let slices = self
            .slices
            .iter()
            .zip(&other.slices)
            .map(|(a, b)| a.iter().zip(b).map(|(a, b)| a - b).collect())
            .collect();
        Ok(Self {
            mesh: self.mesh.clone(),
            time: self.time,
            slices,
        })
    }

    /// CSV with a header of node coordinates and one row per time slice.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "t")?;
        for &x in self.mesh.nodes() {
            write!(w, ",{}", csv_float(x))?;
        }
        writeln!(w)?;
        for (n, row) in self.slices.iter().enumerate() {
            write!(w, "{}", csv_float(self.time.time(n)))?;
            for &v in row {
                write!(w, ",{}", csv_float(v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_mesh_nodes() {
        let m = Mesh::new(8, 1.0).unwrap();
        let expect = [-1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0];
        for (a, b) in m.nodes().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn graded_mesh_formula_and_symmetry() {
        let m = Mesh::new(8, 2.0).unwrap();
        // s = 0.5 is node i = 6
        assert!((m.nodes()[6] - 0.75).abs() < 1e-15);
        for n in [8, 64, 200] {
            for g in [1.0, 1.5, 2.0, 3.0] {
                let m = Mesh::new(n, g).unwrap();
                assert_eq!(m.nodes()[n / 2], 0.0);
                for i in 0..=n {
                    assert_eq!(m.nodes()[i], -m.nodes()[n - i]);
                }
                let total: f64 = m.weights().iter().sum();
                assert!((total - 2.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn mesh_rejects_bad_sizes() {
        assert!(Mesh::new(7, 1.0).is_err());
        assert!(Mesh::new(6, 1.0).is_err());
        assert!(Mesh::new(9, 1.0).is_err());
        assert!(Mesh::new(16, 0.5).is_err());
    }

    #[test]
    fn quadrature_examples() {
        let m = Mesh::new(512, 1.0).unwrap();
        let ones = vec![1.0; m.len()];
        assert!((m.integrate(&ones).unwrap() - 2.0).abs() < 1e-14);
        let sq: Vec<f64> = m.nodes().iter().map(|x| x * x).collect();
        assert!((m.integrate(&sq).unwrap() - 2.0 / 3.0).abs() < 1e-4);
        for g in [1.0, 2.0, 2.7] {
            let m = Mesh::new(100, g).unwrap();
            let cube: Vec<f64> = m.nodes().iter().map(|x| x * x * x).collect();
            assert!(m.integrate(&cube).unwrap().abs() < 1e-14);
        }
        assert!(matches!(m.integrate(&[1.0; 3]), Err(Error::Shape { .. })));
    }

    #[test]
    fn trapezoid_refinement_order() {
        let f = |x: f64| (2.0 * x).cos() + x * x;
        let exact = (2.0f64).sin() + 2.0 / 3.0;
        let mut prev = None;
        for n in [16, 32, 64, 128, 256] {
            let m = Mesh::new(n, 1.0).unwrap();
            let v: Vec<f64> = m.nodes().iter().map(|&x| f(x)).collect();
            let err = (m.integrate(&v).unwrap() - exact).abs();
            if let Some(p) = prev {
                let order = f64::log2(p / err);
                assert!(order >= 1.9, "order {order}");
            }
            prev = Some(err);
        }
    }

    #[test]
    fn midpoint_derivative_examples() {
        let m = Mesh::new(16, 2.0).unwrap();
        let lin = GridFunction::from_fn(&m, |x| x);
        assert!(lin.midpoint_derivative().iter().all(|d| (d - 1.0).abs() < 1e-12));
        let c = GridFunction::from_fn(&m, |_| 3.5);
        assert!(c.midpoint_derivative().iter().all(|&d| d == 0.0));
        let q = GridFunction::from_fn(&m, |x| x * x);
        for (i, d) in q.midpoint_derivative().iter().enumerate() {
            let expect = m.nodes()[i] + m.nodes()[i + 1];
            assert!((d - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn time_grid_endpoints() {
        let t = TimeGrid::new(0.7, 3).unwrap();
        assert_eq!(t.time(0), 0.0);
        assert_eq!(t.time(3), 0.7);
        assert!(TimeGrid::new(0.0, 3).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn csv_layout() {
        let m = Mesh::new(8, 1.0).unwrap();
        let u = SpaceTimeFunction::from_fn(&m, TimeGrid::new(1.0, 2).unwrap(), |t, x| t + x);
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("t,-1e0,"));
        assert_eq!(lines[1].split(',').count(), 10);
    }
}
