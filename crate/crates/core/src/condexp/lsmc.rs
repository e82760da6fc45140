//! Least-squares Monte Carlo: polynomial regression of simulated targets on
//! the conditioning state (W_{t_i}, B_T − B_{t_i}).

use nalgebra::{DMatrix, DVector, SVD};

use super::EstimatorError;

/// Monomials w^a·s^b with a + b ≤ degree over the active coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolynomialBasis {
    pub degree: usize,
    pub use_w: bool,
    pub use_s: bool,
}

impl PolynomialBasis {
    pub fn full(degree: usize) -> Self {
        Self {
            degree,
            use_w: true,
            use_s: true,
        }
    }

    pub fn exponents(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for total in 0..=self.degree as u32 {
            for a in (0..=total).rev() {
                let b = total - a;
                if (a > 0 && !self.use_w) || (b > 0 && !self.use_s) {
                    continue;
                }
                out.push((a, b));
            }
        }
        out
    }

    pub fn size(&self) -> usize {
        self.exponents().len()
    }
}

const RANK_TOLERANCE: f64 = 1e-10;

/// A factored design matrix, reusable for several targets on the same states.
pub struct Design {
    basis: PolynomialBasis,
    exponents: Vec<(u32, u32)>,
    shift: [f64; 2],
    scale: [f64; 2],
    svd: SVD<f64, nalgebra::Dyn, nalgebra::Dyn>,
    smallest: f64,
    largest: f64,
    samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub basis: PolynomialBasis,
    exponents: Vec<(u32, u32)>,
    shift: [f64; 2],
    scale: [f64; 2],
    pub coefficients: Vec<f64>,
    pub smallest_singular_value: f64,
    pub largest_singular_value: f64,
}

fn monomial(exponents: &(u32, u32), x: [f64; 2]) -> f64 {
    x[0].powi(exponents.0 as i32) * x[1].powi(exponents.1 as i32)
}

fn standardize(state: [f64; 2], shift: [f64; 2], scale: [f64; 2]) -> [f64; 2] {
    [
        (state[0] - shift[0]) / scale[0],
        (state[1] - shift[1]) / scale[1],
    ]
}

impl Design {
    pub fn new(states: &[[f64; 2]], basis: PolynomialBasis) -> Result<Self, EstimatorError> {
        let exponents = basis.exponents();
        let k = exponents.len();
        let m = states.len();
        if m <= k {
            return Err(EstimatorError::TooFewSamples {
                samples: m,
                basis: k,
            });
        }
        let mut shift = [0.0; 2];
        let mut scale = [1.0; 2];
        for c in 0..2 {
            let mean = states.iter().map(|s| s[c]).sum::<f64>() / m as f64;
            let var = states.iter().map(|s| (s[c] - mean).powi(2)).sum::<f64>() / m as f64;
            shift[c] = mean;
            if var > 0.0 {
                scale[c] = var.sqrt();
            }
        }
        let x = DMatrix::from_fn(m, k, |r, c| {
            monomial(&exponents[c], standardize(states[r], shift, scale))
        });
        let svd = x.svd(true, true);
        let largest = svd.singular_values.max();
        let smallest = svd.singular_values.min();
        if !(smallest >= RANK_TOLERANCE * largest) || largest == 0.0 {
            return Err(EstimatorError::RankDeficient { smallest, largest });
        }
        Ok(Self {
            basis,
            exponents,
            shift,
            scale,
            svd,
            smallest,
            largest,
            samples: m,
        })
    }

    pub fn fit(&self, targets: &[f64]) -> Result<RegressionFit, EstimatorError> {
        if targets.len() != self.samples {
            return Err(EstimatorError::LengthMismatch {
                states: self.samples,
                targets: targets.len(),
            });
        }
        let y = DVector::from_column_slice(targets);
        let coef = self
            .svd
            .solve(&y, 0.0)
            .expect("SVD computed with both U and Vᵀ");
        Ok(RegressionFit {
            basis: self.basis,
            exponents: self.exponents.clone(),
            shift: self.shift,
            scale: self.scale,
            coefficients: coef.iter().copied().collect(),
            smallest_singular_value: self.smallest,
            largest_singular_value: self.largest,
        })
    }
}

pub fn lsmc_fit(
    states: &[[f64; 2]],
    targets: &[f64],
    basis: PolynomialBasis,
) -> Result<RegressionFit, EstimatorError> {
    if states.len() != targets.len() {
        return Err(EstimatorError::LengthMismatch {
            states: states.len(),
            targets: targets.len(),
        });
    }
    Design::new(states, basis)?.fit(targets)
}

pub fn lsmc_predict(fit: &RegressionFit, state: [f64; 2]) -> f64 {
    fit.predict(state)
}

impl RegressionFit {
    pub fn predict(&self, state: [f64; 2]) -> f64 {
        let x = standardize(state, self.shift, self.scale);
        self.exponents
            .iter()
            .zip(&self.coefficients)
            .map(|(e, c)| c * monomial(e, x))
            .sum()
    }

    /// Coefficients of the fitted polynomial in the raw (unstandardized)
    /// coordinates, keyed like [`PolynomialBasis::exponents`].
    pub fn raw_coefficients(&self) -> Vec<((u32, u32), f64)> {
        use std::collections::BTreeMap;
        let mut acc: BTreeMap<(u32, u32), f64> = BTreeMap::new();
        for (&(a, b), &c) in self.exponents.iter().zip(&self.coefficients) {
            // ((w − μw)/σw)^a ((s − μs)/σs)^b expanded binomially
            for i in 0..=a {
                for j in 0..=b {
                    let term = c
                        * binomial(a, i)
                        * binomial(b, j)
                        * (-self.shift[0]).powi((a - i) as i32)
                        * (-self.shift[1]).powi((b - j) as i32)
                        / (self.scale[0].powi(a as i32) * self.scale[1].powi(b as i32));
                    *acc.entry((i, j)).or_insert(0.0) += term;
                }
            }
        }
        self.exponents
            .iter()
            .map(|e| (*e, acc.get(e).copied().unwrap_or(0.0)))
            .collect()
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
