//! Synthetic polytope families, the plain-MC / static-mixture baselines,
//! and the doubling search for the sample count hitting the relative
//! tolerance band.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use thiserror::Error;

use crate::batch;
use crate::gaussian::{HalfspaceConstraint, NominalGaussian};
use crate::mixture::{violated_count, MixtureError};
use crate::optimizer::{run_adaptive, run_static_mixture, AdaptiveConfig, Objective};
use crate::rng::stream;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("synthetic polytope needs at least {need} faces (got {got})")]
    TooFewFaces { got: usize, need: usize },
    #[error("threshold tau must be positive and finite (got {0})")]
    BadTau(f64),
    #[error("perturbation half-width must be positive and finite (got {0})")]
    BadPerturb(f64),
    #[error("unknown method `{0}` (expected mc, aloe, md-var or md-kl)")]
    UnknownMethod(String),
    #[error(transparent)]
    Mixture(#[from] MixtureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Mc,
    Aloe,
    MdVar,
    MdKl,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Mc => "mc",
            Method::Aloe => "aloe",
            Method::MdVar => "md-var",
            Method::MdKl => "md-kl",
        })
    }
}

impl FromStr for Method {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        match s {
            "mc" => Ok(Method::Mc),
            "aloe" => Ok(Method::Aloe),
            "md-var" => Ok(Method::MdVar),
            "md-kl" => Ok(Method::MdKl),
            other => Err(BenchError::UnknownMethod(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    /// `J` unit normals equally spaced on the circle, common margin `tau`.
    Regular,
    /// One face up, `J - 1` nearly antiparallel faces down, each tilted by
    /// an independent uniform draw from `[-perturb, perturb]`.
    Degenerate,
}

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub faces: usize,
    pub tau: f64,
    pub perturb: f64,
    /// Rescale each row to a unit normal. The failure region is unchanged
    /// either way; this only affects the printed row coefficients.
    pub normalize: bool,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn regular(faces: usize, tau: f64) -> Self {
        Self { kind: SyntheticKind::Regular, faces, tau, perturb: 0.0, normalize: false, seed: 0 }
    }

    pub fn degenerate(faces: usize, tau: f64, perturb: f64, seed: u64) -> Self {
        Self { kind: SyntheticKind::Degenerate, faces, tau, perturb, normalize: false, seed }
    }
}

/// Raw rows `(omega, b)` of the synthetic polytope.
pub fn polytope_rows(spec: &SyntheticSpec) -> Result<Vec<([f64; 2], f64)>, BenchError> {
    if !(spec.tau > 0.0 && spec.tau.is_finite()) {
        return Err(BenchError::BadTau(spec.tau));
    }
    let mut rows = Vec::with_capacity(spec.faces);
    match spec.kind {
        SyntheticKind::Regular => {
            if spec.faces < 3 {
                return Err(BenchError::TooFewFaces { got: spec.faces, need: 3 });
            }
            for j in 1..=spec.faces {
                let angle = 2.0 * std::f64::consts::PI * j as f64 / spec.faces as f64;
                rows.push(([angle.sin(), angle.cos()], spec.tau));
            }
        }
        SyntheticKind::Degenerate => {
            if spec.faces < 2 {
                return Err(BenchError::TooFewFaces { got: spec.faces, need: 2 });
            }
            if !(spec.perturb > 0.0 && spec.perturb.is_finite()) {
                return Err(BenchError::BadPerturb(spec.perturb));
            }
            rows.push(([0.0, 1.0], spec.tau));
            let mut rng = stream(spec.seed, 0, 0);
            for _ in 1..spec.faces {
                let xi = (2.0 * rng.random::<f64>() - 1.0) * spec.perturb;
                rows.push(([xi, -1.0 - xi], spec.tau));
            }
        }
    }
    if spec.normalize {
        for (omega, b) in &mut rows {
            let norm = (omega[0] * omega[0] + omega[1] * omega[1]).sqrt();
            omega[0] /= norm;
            omega[1] /= norm;
            *b /= norm;
        }
    }
    Ok(rows)
}

/// Standard bivariate nominal plus the half-space constraints of the
/// synthetic polytope.
pub fn generate_polytope(
    spec: &SyntheticSpec,
) -> Result<(NominalGaussian, Vec<HalfspaceConstraint>), BenchError> {
    let rows = polytope_rows(spec)?;
    let g = NominalGaussian::standard(2);
    let constraints = rows
        .iter()
        .map(|(omega, b)| {
            g.tail_probability(&nalgebra::DVector::from_vec(omega.to_vec()), *b)
                .map_err(|e| BenchError::Mixture(MixtureError::Gauss(e)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((g, constraints))
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub method: Method,
    pub samples: u64,
    pub pi_hat: f64,
    pub std_err: f64,
    /// Mean violated-row count over the weighting distribution (failure
    /// samples only for plain MC).
    pub avg_violated: f64,
    pub wall_ms: f64,
}

/// Plain Monte Carlo from the nominal Gaussian, chunked so the parallel
/// and sequential paths produce identical counts.
pub fn run_plain_mc(
    g: &NominalGaussian,
    constraints: &[HalfspaceConstraint],
    samples: u64,
    seed: u64,
) -> BenchResult {
    const CHUNK: u64 = 4096;
    let start = Instant::now();
    let chunks = samples.div_ceil(CHUNK) as usize;
    let partials = batch::indexed_map(chunks, |c| {
        let c = c as u64;
        let m = CHUNK.min(samples - c * CHUNK);
        let mut rng = stream(seed, c, 0);
        let mut hits = 0u64;
        let mut violated_sum = 0u64;
        for _ in 0..m {
            let p = g.sample_nominal(&mut rng);
            let v = violated_count(&p, constraints);
            if v > 0 {
                hits += 1;
                violated_sum += v as u64;
            }
        }
        (hits, violated_sum)
    });
    let (hits, violated_sum) =
        partials.iter().fold((0u64, 0u64), |(h, v), &(dh, dv)| (h + dh, v + dv));
    let pi_hat = hits as f64 / samples as f64;
    let std_err = (pi_hat * (1.0 - pi_hat) / samples as f64).sqrt();
    let avg_violated = if hits > 0 { violated_sum as f64 / hits as f64 } else { 0.0 };
    BenchResult {
        method: Method::Mc,
        samples,
        pi_hat,
        std_err,
        avg_violated,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    }
}

/// Run one estimator for a fixed sample budget.
pub fn run_method(
    method: Method,
    g: &NominalGaussian,
    constraints: &[HalfspaceConstraint],
    samples: u64,
    batch: usize,
    epsilon: Option<f64>,
    eta0: f64,
    seed: u64,
) -> Result<BenchResult, BenchError> {
    if method == Method::Mc {
        return Ok(run_plain_mc(g, constraints, samples, seed));
    }
    let start = Instant::now();
    let run = match method {
        Method::Aloe => run_static_mixture(g, constraints, samples, batch, seed)?,
        Method::MdVar | Method::MdKl => {
            let objective =
                if method == Method::MdVar { Objective::Variance } else { Objective::Kl };
            let cfg = AdaptiveConfig { objective, samples, batch, epsilon, eta0 };
            run_adaptive(g, constraints, &cfg, seed)?
        }
        Method::Mc => unreachable!(),
    };
    Ok(BenchResult {
        method,
        samples,
        pi_hat: run.estimator.pi_hat(),
        std_err: run.estimator.std_err(),
        avg_violated: run.estimator.avg_violated(),
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Two-sided relative tolerance band:
/// `pi/2 <= pi_hat - s` and `pi_hat + s <= 3 pi / 2`.
pub fn within_tolerance_band(pi_hat: f64, std_err: f64, pi: f64) -> bool {
    pi / 2.0 <= pi_hat - std_err && pi_hat + std_err <= 1.5 * pi
}

#[derive(Debug, Clone)]
pub struct ToleranceSearch {
    pub method: Method,
    /// Smallest tried budget whose estimate fell inside the band.
    pub samples_needed: Option<u64>,
    /// Result at the successful budget (or at the cap).
    pub last: BenchResult,
    /// Plain MC past the cap reports the analytic expectation `1/pi`.
    pub extrapolated: Option<f64>,
}

/// Double the budget from `start` until the estimate lands inside the
/// tolerance band around the oracle value `pi`, up to `cap`.
#[allow(clippy::too_many_arguments)]
pub fn samples_to_tolerance(
    method: Method,
    g: &NominalGaussian,
    constraints: &[HalfspaceConstraint],
    pi: f64,
    batch: usize,
    seed: u64,
    start: u64,
    cap: u64,
) -> Result<ToleranceSearch, BenchError> {
    let mut n = start.max(1);
    let mut last;
    loop {
        last = run_method(method, g, constraints, n, batch, None, 1.0, seed)?;
        if within_tolerance_band(last.pi_hat, last.std_err, pi) {
            return Ok(ToleranceSearch {
                method,
                samples_needed: Some(n),
                last,
                extrapolated: None,
            });
        }
        if n >= cap {
            break;
        }
        n = (n * 2).min(cap);
    }
    let extrapolated = (method == Method::Mc && pi > 0.0).then(|| 1.0 / pi);
    Ok(ToleranceSearch { method, samples_needed: None, last, extrapolated })
}
