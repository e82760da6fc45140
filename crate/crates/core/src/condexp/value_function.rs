use serde::{Deserialize, Serialize};

use super::EstimatorError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Linear,
    #[default]
    Cubic,
}

/// Uniform spatial grid lo = w₀ < … < w_G = hi.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    lo: f64,
    step: f64,
    nodes: usize,
}

impl UniformGrid {
    pub fn new(lo: f64, hi: f64, nodes: usize) -> Result<Self, EstimatorError> {
        if nodes < 2 {
            return Err(EstimatorError::InvalidGrid(format!(
                "need at least 2 nodes, got {nodes}"
            )));
        }
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(EstimatorError::InvalidGrid(format!(
                "bad interval [{lo}, {hi}]"
            )));
        }
        Ok(Self {
            lo,
            step: (hi - lo) / (nodes - 1) as f64,
            nodes,
        })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.point(self.nodes - 1)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.nodes
    }

    pub fn is_empty(&self) -> bool {
        self.nodes == 0
    }

    #[inline]
    pub fn point(&self, j: usize) -> f64 {
        self.lo + j as f64 * self.step
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.nodes).map(|j| self.point(j))
    }
}

/// Grid configuration: `nodes` points on [−κ√T, κ√T].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub nodes: usize,
    pub width_sigmas: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            nodes: 129,
            width_sigmas: 6.0,
        }
    }
}

impl GridSpec {
    pub fn build(&self, horizon: f64) -> Result<UniformGrid, EstimatorError> {
        let half = self.width_sigmas * horizon.sqrt();
        UniformGrid::new(-half, half, self.nodes)
    }
}

/// Function of the W-state sampled on a grid, with local polynomial
/// interpolation inside and linear continuation outside.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    grid: UniformGrid,
    values: Vec<f64>,
    order: Interpolation,
}

impl ValueFunction {
    pub fn new(
        grid: UniformGrid,
        order: Interpolation,
        values: Vec<f64>,
    ) -> Result<Self, EstimatorError> {
        if values.len() != grid.len() {
            return Err(EstimatorError::GridMismatch {
                values: values.len(),
                nodes: grid.len(),
            });
        }
        Ok(Self {
            grid,
            values,
            order,
        })
    }

    pub fn from_fn(grid: UniformGrid, order: Interpolation, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.points().map(f).collect();
        Self {
            grid,
            values,
            order,
        }
    }

    pub fn constant(grid: UniformGrid, order: Interpolation, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
            order,
        }
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn order(&self) -> Interpolation {
        self.order
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_counted(x).0
    }

    /// Value at `x` and whether linear extrapolation was used.
    #[inline]
    pub fn eval_counted(&self, x: f64) -> (f64, bool) {
        let g = &self.grid;
        let last = g.nodes - 1;
        let pos = (x - g.lo) / g.step;
        let v = &self.values;
        if pos < 0.0 {
            let slope = v[1] - v[0];
            return (v[0] + slope * pos, true);
        }
        if pos > last as f64 {
            let slope = v[last] - v[last - 1];
            return (v[last] + slope * (pos - last as f64), true);
        }
        let nearest = pos.round();
        if (pos - nearest).abs() <= 4.0 * f64::EPSILON * pos.max(1.0) {
            return (v[nearest as usize], false);
        }
        let cell = (pos.floor() as usize).min(last - 1);
        let value = match self.order {
            Interpolation::Cubic if g.nodes >= 4 => {
                let start = cell.saturating_sub(1).min(g.nodes - 4);
                let u = pos - start as f64;
                let (u1, u2, u3) = (u - 1.0, u - 2.0, u - 3.0);
                let l0 = -u1 * u2 * u3 / 6.0;
                let l1 = u * u2 * u3 / 2.0;
                let l2 = -u * u1 * u3 / 2.0;
                let l3 = u * u1 * u2 / 6.0;
                l0 * v[start] + l1 * v[start + 1] + l2 * v[start + 2] + l3 * v[start + 3]
            }
            _ => {
                let frac = pos - cell as f64;
                v[cell] + frac * (v[cell + 1] - v[cell])
            }
        };
        (value, false)
    }
}
