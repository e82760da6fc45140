use std::f64::consts::PI;

use super::value_function::{Interpolation, UniformGrid, ValueFunction};
use super::EstimatorError;

/// Physicists' Gauss–Hermite rule: ∫ p(x) e^{−x²} dx = Σ w_k p(x_k) for
/// every polynomial p of degree ≤ 2m − 1. Nodes are sorted descending and
/// stored symmetrically (x_{m−1−k} = −x_k bit for bit).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Σ w_k f(x_k), i.e. ∫ f(x) e^{−x²} dx.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

const MAX_NODES: usize = 64;
const NEWTON_MAX_ITER: usize = 100;

/// Builds the m-node rule by Newton iteration on the orthonormal Hermite
/// recurrence, seeded with the usual asymptotic root guesses.
pub fn gauss_hermite_rule(m: usize) -> Result<QuadratureRule, EstimatorError> {
    if m == 0 || m > MAX_NODES {
        return Err(EstimatorError::NodeCount(m));
    }
    let n = m as f64;
    let pi_m4 = PI.powf(-0.25);
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    let half = m.div_ceil(2);
    let mut z = 0.0f64;

    for i in 0..half {
        z = match i {
            0 => (2.0 * n + 1.0).sqrt() - 1.85575 * (2.0 * n + 1.0).powf(-0.16667),
            1 => z - 1.14 * n.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut converged = false;
        let mut pp = 0.0;
        for _ in 0..NEWTON_MAX_ITER {
            let (p1, p2) = hermite_orthonormal(m, z, pi_m4);
            pp = (2.0 * n).sqrt() * p2;
            let z_prev = z;
            z = z_prev - p1 / pp;
            if (z - z_prev).abs() <= 1e-15 * z.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(EstimatorError::RootNotConverged(i));
        }
        // final derivative at the converged root
        let (_, p2) = hermite_orthonormal(m, z, pi_m4);
        pp = if p2 != 0.0 { (2.0 * n).sqrt() * p2 } else { pp };
        let w = 2.0 / (pp * pp);
        if m % 2 == 1 && i == half - 1 {
            nodes[i] = 0.0;
            weights[i] = w;
        } else {
            nodes[i] = z;
            nodes[m - 1 - i] = -z;
            weights[i] = w;
            weights[m - 1 - i] = w;
        }
    }
    Ok(QuadratureRule { nodes, weights })
}

/// Returns (p̃_m(z), p̃_{m−1}(z)) for the orthonormal Hermite polynomials.
fn hermite_orthonormal(m: usize, z: f64, p0: f64) -> (f64, f64) {
    let mut p1 = p0;
    let mut p2 = 0.0;
    for j in 1..=m {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, p2)
}

/// E[u(c + √h·N)] and E[u(c + √h·N)·√h·N] for standard normal N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianExpectation {
    pub plain: f64,
    pub weighted: f64,
    /// Quadrature points that fell outside the grid (linear extrapolation).
    pub extrapolated: usize,
}

pub fn expect_gaussian(
    u: &ValueFunction,
    center: f64,
    variance: f64,
    rule: &QuadratureRule,
) -> GaussianExpectation {
    expect_gaussian_mapped(u, center, variance, rule, |_| 0.0).0
}

/// One pass over the quadrature points returning the expectations of `u` and
/// of `g ∘ u` (the extrapolation count is reported on both).
pub(crate) fn expect_gaussian_mapped<G: Fn(f64) -> f64>(
    u: &ValueFunction,
    center: f64,
    variance: f64,
    rule: &QuadratureRule,
    g: G,
) -> (GaussianExpectation, GaussianExpectation) {
    if variance <= 0.0 {
        let (v, out) = u.eval_counted(center);
        let e = |x| GaussianExpectation {
            plain: x,
            weighted: 0.0,
            extrapolated: out as usize,
        };
        return (e(v), e(g(v)));
    }
    let s = (2.0 * variance).sqrt();
    let norm = PI.sqrt().recip();
    let (mut up, mut uw, mut gp, mut gw) = (0.0, 0.0, 0.0, 0.0);
    let mut extrapolated = 0;
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        let shift = s * x;
        let (v, out) = u.eval_counted(center + shift);
        extrapolated += out as usize;
        let gv = g(v);
        up += w * v;
        uw += w * shift * v;
        gp += w * gv;
        gw += w * shift * gv;
    }
    (
        GaussianExpectation {
            plain: norm * up,
            weighted: norm * uw,
            extrapolated,
        },
        GaussianExpectation {
            plain: norm * gp,
            weighted: norm * gw,
            extrapolated,
        },
    )
}

/// Interpolation stencil of one quadrature shift, relative to the node it
/// is applied at.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Stencil {
    offset: isize,
    width: usize,
    coeffs: [f64; 4],
}

/// Gaussian expectations centred at the nodes of a uniform grid. Because
/// every node sees the same shifts √(2h)·x_k, the interpolation weights are
/// computed once per rule; nodes whose stencils would leave the grid fall
/// back to [`ValueFunction::eval_counted`] (and its extrapolation policy).
#[derive(Debug, Clone, PartialEq)]
pub struct GridQuadrature {
    grid: UniformGrid,
    shifts: Vec<f64>,
    weights: Vec<f64>,
    stencils: Vec<Stencil>,
}

impl GridQuadrature {
    pub fn new(
        grid: UniformGrid,
        order: Interpolation,
        variance: f64,
        rule: &QuadratureRule,
    ) -> Self {
        let s = (2.0 * variance.max(0.0)).sqrt();
        let norm = PI.sqrt().recip();
        let shifts: Vec<f64> = rule.nodes.iter().map(|x| s * x).collect();
        let weights = rule.weights.iter().map(|w| norm * w).collect();
        let cubic = matches!(order, Interpolation::Cubic) && grid.len() >= 4;
        let stencils = shifts
            .iter()
            .map(|shift| {
                let q = shift / grid.step();
                let cell = q.floor();
                let frac = q - cell;
                if cubic {
                    let u = frac + 1.0;
                    let (u1, u2, u3) = (u - 1.0, u - 2.0, u - 3.0);
                    Stencil {
                        offset: cell as isize - 1,
                        width: 4,
                        coeffs: [
                            -u1 * u2 * u3 / 6.0,
                            u * u2 * u3 / 2.0,
                            -u * u1 * u3 / 2.0,
                            u * u1 * u2 / 6.0,
                        ],
                    }
                } else {
                    Stencil {
                        offset: cell as isize,
                        width: 2,
                        coeffs: [1.0 - frac, frac, 0.0, 0.0],
                    }
                }
            })
            .collect();
        Self {
            grid,
            shifts,
            weights,
            stencils,
        }
    }

    /// E[u(w_j + ΔW)] and E[u(w_j + ΔW)ΔW], together with the same pair for
    /// g∘u, where w_j is grid node `j`.
    pub fn expect_at_node<G: Fn(f64) -> f64>(
        &self,
        u: &ValueFunction,
        j: usize,
        g: G,
    ) -> (GaussianExpectation, GaussianExpectation) {
        debug_assert_eq!(u.grid(), &self.grid);
        let values = u.values();
        let last = values.len() as isize - 1;
        let center = self.grid.point(j);
        let (mut up, mut uw, mut gp, mut gw) = (0.0, 0.0, 0.0, 0.0);
        let mut extrapolated = 0;
        for k in 0..self.shifts.len() {
            let st = &self.stencils[k];
            let start = j as isize + st.offset;
            let v = if start >= 0 && start + st.width as isize - 1 <= last {
                let base = start as usize;
                let mut acc = 0.0;
                for (c, v) in st.coeffs[..st.width]
                    .iter()
                    .zip(&values[base..base + st.width])
                {
                    acc += c * v;
                }
                acc
            } else {
                let (v, out) = u.eval_counted(center + self.shifts[k]);
                extrapolated += out as usize;
                v
            };
            let gv = g(v);
            let w = self.weights[k];
            let shift = self.shifts[k];
            up += w * v;
            uw += w * shift * v;
            gp += w * gv;
            gw += w * shift * gv;
        }
        (
            GaussianExpectation {
                plain: up,
                weighted: uw,
                extrapolated,
            },
            GaussianExpectation {
                plain: gp,
                weighted: gw,
                extrapolated,
            },
        )
    }

    /// [`Self::expect_at_node`] for every node at once. Nodes whose
    /// stencils all stay inside the grid take a branch-free path; the sums
    /// accumulate in the same order either way, so results are bit-identical.
    pub fn expect_all<G: Fn(f64) -> f64>(&self, u: &ValueFunction, g: G) -> GridExpectations {
        debug_assert_eq!(u.grid(), &self.grid);
        let values = u.values();
        let len = values.len();
        let mut out = GridExpectations {
            u_plain: Vec::with_capacity(len),
            u_weighted: Vec::with_capacity(len),
            g_plain: Vec::with_capacity(len),
            g_weighted: Vec::with_capacity(len),
            extrapolated: 0,
        };
        // Interior nodes j satisfy 0 ≤ j + offset and j + offset + width ≤ len
        // for every stencil.
        let lo = self
            .stencils
            .iter()
            .map(|st| -st.offset)
            .max()
            .unwrap_or(0)
            .clamp(0, len as isize) as usize;
        let hi = self
            .stencils
            .iter()
            .map(|st| len as isize - st.offset - st.width as isize + 1)
            .min()
            .unwrap_or(len as isize)
            .clamp(lo as isize, len as isize) as usize;
        let cubic = self.stencils.iter().all(|st| st.width == 4);
        for j in 0..len {
            let (eu, eg) = if (lo..hi).contains(&j) && cubic {
                self.interior_cubic(values, j, &g)
            } else {
                self.expect_at_node(u, j, &g)
            };
            out.extrapolated += eu.extrapolated;
            out.u_plain.push(eu.plain);
            out.u_weighted.push(eu.weighted);
            out.g_plain.push(eg.plain);
            out.g_weighted.push(eg.weighted);
        }
        out
    }

    #[inline]
    fn interior_cubic<G: Fn(f64) -> f64>(
        &self,
        values: &[f64],
        j: usize,
        g: &G,
    ) -> (GaussianExpectation, GaussianExpectation) {
        let (mut up, mut uw, mut gp, mut gw) = (0.0, 0.0, 0.0, 0.0);
        for ((st, &w), &shift) in self.stencils.iter().zip(&self.weights).zip(&self.shifts) {
            let base = (j as isize + st.offset) as usize;
            let v4: &[f64; 4] = values[base..base + 4].try_into().expect("interior stencil");
            let [c0, c1, c2, c3] = st.coeffs;
            let v = 0.0 + c0 * v4[0] + c1 * v4[1] + c2 * v4[2] + c3 * v4[3];
            let gv = g(v);
            up += w * v;
            uw += w * shift * v;
            gp += w * gv;
            gw += w * shift * gv;
        }
        let e = |plain, weighted| GaussianExpectation {
            plain,
            weighted,
            extrapolated: 0,
        };
        (e(up, uw), e(gp, gw))
    }
}

/// Per-node sums from [`GridQuadrature::expect_all`]: E[u], E[u·ΔW], E[g∘u]
/// and E[g∘u·ΔW] at every grid node, plus the total number of quadrature
/// points that fell outside the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridExpectations {
    pub u_plain: Vec<f64>,
    pub u_weighted: Vec<f64>,
    pub g_plain: Vec<f64>,
    pub g_weighted: Vec<f64>,
    pub extrapolated: usize,
}
