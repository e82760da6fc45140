//! Problem definitions shared by every other module.
//!
//! A [`ProblemSpec`] describes the equation
//!
//! ```text
//! Y_t = φ(W_T) + ∫_t^T f(r, Y_r, Z_r) dr + ∫_t^T g(Y_r) d←B_r − ∫_t^T Z_r dW_r
//! ```
//!
//! through three registry descriptors (terminal functional, generator and
//! backward coefficient) plus the Lipschitz constants the scheme relies on.
//! A [`Partition`] is the time grid; it only becomes usable by the solver
//! once paired with a spec through [`validate_mesh_condition`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("invalid problem spec: {0}")]
    InvalidSpec(String),
    #[error("mesh {mesh} too coarse for Lipschitz constant {lipschitz}: mesh·L = {} ≥ 1", mesh * lipschitz)]
    MeshTooCoarse { mesh: f64, lipschitz: f64 },
}

/// Terminal functional φ, with ξ = φ(W_T).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum Terminal {
    Identity,
    Constant {
        c: f64,
    },
    /// e^{c·w}
    Exp {
        c: f64,
    },
    /// max(w − k, 0)
    Call {
        k: f64,
    },
}

impl Terminal {
    pub fn eval(&self, w: f64) -> f64 {
        match *self {
            Terminal::Identity => w,
            Terminal::Constant { c } => c,
            Terminal::Exp { c } => (c * w).exp(),
            Terminal::Call { k } => (w - k).max(0.0),
        }
    }
}

/// Deterministic forcing schedule f_t added to a generator.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum Forcing {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    /// a + b·t
    Affine {
        a: f64,
        b: f64,
    },
}

impl Forcing {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Forcing::Zero => 0.0,
            Forcing::Constant { value } => value,
            Forcing::Affine { a, b } => a + b * t,
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            Forcing::Zero => true,
            Forcing::Constant { value } => value == 0.0,
            Forcing::Affine { a, b } => a == 0.0 && b == 0.0,
        }
    }

    /// ∫_t^T f_s ds, exact for the registered schedules.
    pub fn integral(&self, t: f64, horizon: f64) -> f64 {
        match *self {
            Forcing::Zero => 0.0,
            Forcing::Constant { value } => value * (horizon - t),
            Forcing::Affine { a, b } => a * (horizon - t) + 0.5 * b * (horizon * horizon - t * t),
        }
    }

    /// Smallest C with |f_{t₂} − f_{t₁}| ≤ C·|t₂ − t₁|^{1/2} on [0, T].
    fn time_holder_constant(&self, horizon: f64) -> f64 {
        match *self {
            Forcing::Affine { b, .. } => b.abs() * horizon.sqrt(),
            _ => 0.0,
        }
    }
}

/// Generator f(t, y, z).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum Generator {
    Zero,
    /// α·y + β·z + f_t
    Linear {
        alpha: f64,
        beta: f64,
        #[serde(default)]
        forcing: Forcing,
    },
    /// α·y + β·z + ε·sin(y) + f_t
    SinLinear {
        alpha: f64,
        beta: f64,
        epsilon: f64,
        #[serde(default)]
        forcing: Forcing,
    },
}

impl Generator {
    #[inline]
    pub fn eval(&self, t: f64, y: f64, z: f64) -> f64 {
        match *self {
            Generator::Zero => 0.0,
            Generator::Linear {
                alpha,
                beta,
                forcing,
            } => alpha * y + beta * z + forcing.eval(t),
            Generator::SinLinear {
                alpha,
                beta,
                epsilon,
                forcing,
            } => alpha * y + beta * z + epsilon * y.sin() + forcing.eval(t),
        }
    }

    /// Analytic joint Lipschitz constant in (y, z) for the sum norm |Δy| + |Δz|.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Generator::Zero => 0.0,
            Generator::Linear { alpha, beta, .. } => alpha.abs().max(beta.abs()),
            Generator::SinLinear {
                alpha,
                beta,
                epsilon,
                ..
            } => (alpha.abs() + epsilon.abs()).max(beta.abs()),
        }
    }

    pub fn time_holder_constant(&self, horizon: f64) -> f64 {
        match self {
            Generator::Zero => 0.0,
            Generator::Linear { forcing, .. } | Generator::SinLinear { forcing, .. } => {
                forcing.time_holder_constant(horizon)
            }
        }
    }

    fn params(&self) -> Vec<f64> {
        match *self {
            Generator::Zero => vec![],
            Generator::Linear {
                alpha,
                beta,
                forcing,
            } => {
                let mut p = vec![alpha, beta];
                p.extend(forcing_params(forcing));
                p
            }
            Generator::SinLinear {
                alpha,
                beta,
                epsilon,
                forcing,
            } => {
                let mut p = vec![alpha, beta, epsilon];
                p.extend(forcing_params(forcing));
                p
            }
        }
    }
}

fn forcing_params(forcing: Forcing) -> Vec<f64> {
    match forcing {
        Forcing::Zero => vec![],
        Forcing::Constant { value } => vec![value],
        Forcing::Affine { a, b } => vec![a, b],
    }
}

/// Backward coefficient g(y) multiplying d←B.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum BackwardCoeff {
    Zero,
    Constant {
        c: f64,
    },
    /// γ·y
    Linear {
        gamma: f64,
    },
    /// a·sin(y)
    Sin {
        amplitude: f64,
    },
}

impl BackwardCoeff {
    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            BackwardCoeff::Zero => 0.0,
            BackwardCoeff::Constant { c } => c,
            BackwardCoeff::Linear { gamma } => gamma * y,
            BackwardCoeff::Sin { amplitude } => amplitude * y.sin(),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            BackwardCoeff::Zero | BackwardCoeff::Constant { .. } => 0.0,
            BackwardCoeff::Linear { gamma } => gamma.abs(),
            BackwardCoeff::Sin { amplitude } => amplitude.abs(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            BackwardCoeff::Zero => true,
            BackwardCoeff::Constant { c } => c == 0.0,
            BackwardCoeff::Linear { gamma } => gamma == 0.0,
            BackwardCoeff::Sin { amplitude } => amplitude == 0.0,
        }
    }
}

/// A fully specified equation. Construct through [`ProblemSpec::new`] or
/// deserialize (validation runs in both cases).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProblemSpec", deny_unknown_fields)]
pub struct ProblemSpec {
    pub terminal: Terminal,
    pub generator: Generator,
    pub backward_coeff: BackwardCoeff,
    #[serde(rename = "lipschitz_L")]
    pub lipschitz_l: f64,
    #[serde(rename = "time_lipschitz_L1")]
    pub time_lipschitz_l1: f64,
    #[serde(rename = "horizon_T")]
    pub horizon: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblemSpec {
    terminal: Terminal,
    generator: Generator,
    backward_coeff: BackwardCoeff,
    #[serde(rename = "lipschitz_L")]
    lipschitz_l: f64,
    #[serde(rename = "time_lipschitz_L1", default)]
    time_lipschitz_l1: f64,
    #[serde(rename = "horizon_T")]
    horizon: f64,
}

impl TryFrom<RawProblemSpec> for ProblemSpec {
    type Error = ProblemError;

    fn try_from(raw: RawProblemSpec) -> Result<Self, Self::Error> {
        ProblemSpec::new(
            raw.terminal,
            raw.generator,
            raw.backward_coeff,
            raw.lipschitz_l,
            raw.time_lipschitz_l1,
            raw.horizon,
        )
    }
}

impl ProblemSpec {
    /// Validates the declared constants against the registry's analytic ones.
    pub fn new(
        terminal: Terminal,
        generator: Generator,
        backward_coeff: BackwardCoeff,
        lipschitz_l: f64,
        time_lipschitz_l1: f64,
        horizon: f64,
    ) -> Result<Self, ProblemError> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(ProblemError::InvalidSpec(format!(
                "horizon_T must be positive, got {horizon}"
            )));
        }
        if !(lipschitz_l >= 0.0 && lipschitz_l.is_finite()) {
            return Err(ProblemError::InvalidSpec(format!(
                "lipschitz_L must be nonnegative, got {lipschitz_l}"
            )));
        }
        if !(time_lipschitz_l1 >= 0.0 && time_lipschitz_l1.is_finite()) {
            return Err(ProblemError::InvalidSpec(format!(
                "time_lipschitz_L1 must be nonnegative, got {time_lipschitz_l1}"
            )));
        }
        let all_params = generator
            .params()
            .into_iter()
            .chain(match terminal {
                Terminal::Identity => None,
                Terminal::Constant { c } | Terminal::Exp { c } => Some(c),
                Terminal::Call { k } => Some(k),
            })
            .chain(match backward_coeff {
                BackwardCoeff::Zero => None,
                BackwardCoeff::Constant { c } => Some(c),
                BackwardCoeff::Linear { gamma } => Some(gamma),
                BackwardCoeff::Sin { amplitude } => Some(amplitude),
            });
        for p in all_params {
            if !p.is_finite() {
                return Err(ProblemError::InvalidSpec(format!(
                    "non-finite registry parameter {p}"
                )));
            }
        }
        let needed = generator.lipschitz().max(backward_coeff.lipschitz());
        if lipschitz_l < needed {
            return Err(ProblemError::InvalidSpec(format!(
                "lipschitz_L = {lipschitz_l} is below the registry constant {needed}"
            )));
        }
        let needed_l1 = generator.time_holder_constant(horizon);
        if time_lipschitz_l1 < needed_l1 {
            return Err(ProblemError::InvalidSpec(format!(
                "time_lipschitz_L1 = {time_lipschitz_l1} is below the registry constant {needed_l1}"
            )));
        }
        Ok(Self {
            terminal,
            generator,
            backward_coeff,
            lipschitz_l,
            time_lipschitz_l1,
            horizon,
        })
    }

    /// Smallest constants the registry entries admit; convenient for tests.
    pub fn with_registry_constants(
        terminal: Terminal,
        generator: Generator,
        backward_coeff: BackwardCoeff,
        horizon: f64,
    ) -> Result<Self, ProblemError> {
        let l = generator.lipschitz().max(backward_coeff.lipschitz());
        let l1 = generator.time_holder_constant(horizon);
        Self::new(terminal, generator, backward_coeff, l, l1, horizon)
    }

    #[inline]
    pub fn evaluate_generator(&self, t: f64, y: f64, z: f64) -> f64 {
        self.generator.eval(t, y, z)
    }

    #[inline]
    pub fn evaluate_backward_coeff(&self, y: f64) -> f64 {
        self.backward_coeff.eval(y)
    }

    #[inline]
    pub fn evaluate_terminal(&self, w: f64) -> f64 {
        self.terminal.eval(w)
    }
}

/// Outcome of a probe-based Lipschitz check: the largest observed ratio of
/// each invariant's left side to its right side (≤ 1 means it held).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeReport {
    pub probes: usize,
    pub generator_ratio: f64,
    pub backward_ratio: f64,
    pub time_ratio: f64,
}

impl ProbeReport {
    /// True when every ratio is ≤ 1 up to the rounding of the evaluations.
    pub fn holds(&self) -> bool {
        let limit = 1.0 + 1e-12;
        self.generator_ratio <= limit && self.backward_ratio <= limit && self.time_ratio <= limit
    }
}

/// Kronecker (additive recurrence) sequence on the unit cube; the generalized
/// golden ratio for dimension `d` gives low-discrepancy points.
fn kronecker_point(index: usize, dim: usize) -> Vec<f64> {
    let d = dim as f64;
    // root of x^{d+1} = x + 1
    let mut phi = 2.0f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (d + 1.0));
    }
    (1..=dim)
        .map(|k| {
            let alpha = (1.0 / phi.powi(k as i32)).fract();
            (0.5 + alpha * (index as f64 + 1.0)).fract()
        })
        .collect()
}

/// Checks the registry invariants on `count` quasi-random probe pairs drawn
/// from [−10, 10]³ (time coordinates are mapped into [0, T]).
pub fn probe_lipschitz(spec: &ProblemSpec, count: usize) -> ProbeReport {
    let scale = |u: f64| -10.0 + 20.0 * u;
    let horizon = spec.horizon;
    let mut report = ProbeReport {
        probes: count,
        generator_ratio: 0.0,
        backward_ratio: 0.0,
        time_ratio: 0.0,
    };
    let ratio = |lhs: f64, rhs: f64| {
        if lhs == 0.0 {
            0.0
        } else if rhs == 0.0 {
            f64::INFINITY
        } else {
            lhs / rhs
        }
    };
    for k in 0..count {
        let p = kronecker_point(k, 6);
        let (t, y1, z1) = ((p[0] * horizon), scale(p[1]), scale(p[2]));
        let (t2, y2, z2) = ((p[3] * horizon), scale(p[4]), scale(p[5]));

        let lhs = (spec.evaluate_generator(t, y1, z1) - spec.evaluate_generator(t, y2, z2)).abs();
        let rhs = spec.lipschitz_l * ((y1 - y2).abs() + (z1 - z2).abs());
        report.generator_ratio = report.generator_ratio.max(ratio(lhs, rhs));

        let lhs = (spec.evaluate_backward_coeff(y1) - spec.evaluate_backward_coeff(y2)).abs();
        let rhs = spec.lipschitz_l * (y1 - y2).abs();
        report.backward_ratio = report.backward_ratio.max(ratio(lhs, rhs));

        let lhs = (spec.evaluate_generator(t2, y1, z1) - spec.evaluate_generator(t, y1, z1)).abs();
        let rhs = spec.time_lipschitz_l1 * (t2 - t).abs().sqrt();
        report.time_ratio = report.time_ratio.max(ratio(lhs, rhs));
    }
    report
}

/// Time grid 0 = t₀ < t₁ < … < t_n = T.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    times: Vec<f64>,
    steps: Vec<f64>,
    mesh: f64,
    uniform: bool,
}

impl Partition {
    /// General partition from explicit times.
    pub fn from_times(times: Vec<f64>) -> Result<Self, ProblemError> {
        if times.len() < 2 {
            return Err(ProblemError::InvalidPartition(
                "need at least two time points".into(),
            ));
        }
        if times[0] != 0.0 {
            return Err(ProblemError::InvalidPartition(format!(
                "first time must be 0, got {}",
                times[0]
            )));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(ProblemError::InvalidPartition("non-finite time".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ProblemError::InvalidPartition(
                "times must be strictly increasing".into(),
            ));
        }
        let steps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        let mesh = steps.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            times,
            steps,
            mesh,
            uniform: false,
        })
    }

    pub fn uniform(n: usize, horizon: f64) -> Result<Self, ProblemError> {
        build_uniform_partition(n, horizon)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    /// Number of steps n.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self
            .times
            .last()
            .expect("partition has at least two points")
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }
}

pub fn build_uniform_partition(n: usize, horizon: f64) -> Result<Partition, ProblemError> {
    if n == 0 {
        return Err(ProblemError::InvalidPartition(
            "step count must be positive".into(),
        ));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(ProblemError::InvalidPartition(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let mut times: Vec<f64> = (0..=n).map(|i| horizon * i as f64 / n as f64).collect();
    times[n] = horizon;
    let mut p = Partition::from_times(times)?;
    p.uniform = true;
    Ok(p)
}

/// A partition known to satisfy mesh·L < 1 for the attached spec.
#[derive(Debug, Clone)]
pub struct MeshPairing {
    spec: ProblemSpec,
    partition: Partition,
}

impl MeshPairing {
    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }
}

pub fn validate_mesh_condition(
    partition: &Partition,
    spec: &ProblemSpec,
) -> Result<MeshPairing, ProblemError> {
    let mesh = partition.mesh();
    if mesh * spec.lipschitz_l >= 1.0 {
        return Err(ProblemError::MeshTooCoarse {
            mesh,
            lipschitz: spec.lipschitz_l,
        });
    }
    if (partition.horizon() - spec.horizon).abs() > 1e-12 * spec.horizon {
        return Err(ProblemError::InvalidPartition(format!(
            "partition ends at {} but horizon_T is {}",
            partition.horizon(),
            spec.horizon
        )));
    }
    Ok(MeshPairing {
        spec: spec.clone(),
        partition: partition.clone(),
    })
}
