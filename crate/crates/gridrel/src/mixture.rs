//! Mixture synthetic distribution over violated half-spaces, its density
//! ratio against the nominal Gaussian, and the running unbiased estimator.
//!
//! The density ratio uses the per-component normalization
//! `v_i(p) = v(p) 1[viol_i] / Pi_i`, under which the estimator is
//! unbiased for arbitrary positive weights. All Gaussian density factors
//! cancel, so only indicator / tail-probability ratios are evaluated.

use nalgebra::DVector;
use rand::Rng;
use thiserror::Error;

use crate::gaussian::{GaussError, HalfspaceConstraint, NominalGaussian};

#[derive(Debug, Error)]
pub enum MixtureError {
    #[error("all constraints are vacuous; the failure probability is 0 analytically")]
    AllVacuous,
    #[error("weight vector does not sum to 1 (sum = {0})")]
    NotNormalized(f64),
    #[error("weight {value} at constraint {index} is below the floor {floor}")]
    BelowFloor { index: usize, value: f64, floor: f64 },
    #[error("positive weight {value} on vacuous constraint {index}")]
    WeightOnVacuous { index: usize, value: f64 },
    #[error("dimension mismatch: {0} weights for {1} constraints")]
    Dimension(usize, usize),
    #[error("point lies inside the polytope (importance weight would be 0)")]
    InsidePolytope,
    #[error("point violates only vacuous constraints (row {0})")]
    OnlyVacuousViolated(usize),
    #[error(transparent)]
    Gauss(#[from] GaussError),
}

/// Simplex weights over the polytope rows; exactly zero on constraints
/// outside the mixture support.
#[derive(Debug, Clone)]
pub struct MixtureWeights {
    x: Vec<f64>,
    epsilon: f64,
}

/// Which rows the conditional sampler can target.
pub fn support_mask(constraints: &[HalfspaceConstraint]) -> Vec<bool> {
    constraints.iter().map(|c| c.in_mixture_support()).collect()
}

/// Clip active coordinates below `epsilon` up to it and renormalize the
/// surplus over the unclipped ones. Repeats until stable (clipping can
/// cascade).
pub fn floor_project(x: &mut [f64], active: &[bool], epsilon: f64) {
    if epsilon <= 0.0 {
        return;
    }
    loop {
        let mut clipped_mass = 0.0;
        let mut free_mass = 0.0;
        for (i, v) in x.iter().enumerate() {
            if !active[i] {
                continue;
            }
            if *v <= epsilon {
                clipped_mass += epsilon;
            } else {
                free_mass += *v;
            }
        }
        if free_mass <= 0.0 {
            // all at the floor: uniform over the active set
            let count = active.iter().filter(|&&a| a).count();
            for (i, v) in x.iter_mut().enumerate() {
                *v = if active[i] { 1.0 / count as f64 } else { 0.0 };
            }
            return;
        }
        let scale = (1.0 - clipped_mass) / free_mass;
        let mut changed = false;
        for (i, v) in x.iter_mut().enumerate() {
            if !active[i] {
                *v = 0.0;
            } else if *v <= epsilon {
                *v = epsilon;
            } else {
                *v *= scale;
                if *v < epsilon {
                    changed = true;
                }
            }
        }
        if !changed {
            return;
        }
    }
}

impl MixtureWeights {
    /// ALOE initialization: `x_i` proportional to the tail probability,
    /// then floored on the active set.
    pub fn proportional_to_tails(
        constraints: &[HalfspaceConstraint],
        epsilon: f64,
    ) -> Result<Self, MixtureError> {
        let active = support_mask(constraints);
        if !active.iter().any(|&a| a) {
            return Err(MixtureError::AllVacuous);
        }
        let total: f64 = constraints
            .iter()
            .zip(&active)
            .filter(|(_, &a)| a)
            .map(|(c, _)| c.tail_prob)
            .sum();
        let mut x: Vec<f64> = constraints
            .iter()
            .zip(&active)
            .map(|(c, &a)| if a { c.tail_prob / total } else { 0.0 })
            .collect();
        floor_project(&mut x, &active, epsilon);
        Ok(Self { x, epsilon })
    }

    /// Wrap an explicit weight vector, checking the simplex invariants.
    pub fn from_vec(
        x: Vec<f64>,
        constraints: &[HalfspaceConstraint],
        epsilon: f64,
    ) -> Result<Self, MixtureError> {
        if x.len() != constraints.len() {
            return Err(MixtureError::Dimension(x.len(), constraints.len()));
        }
        let active = support_mask(constraints);
        let sum: f64 = x.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(MixtureError::NotNormalized(sum));
        }
        for (i, &v) in x.iter().enumerate() {
            if active[i] && v < epsilon {
                return Err(MixtureError::BelowFloor { index: i, value: v, floor: epsilon });
            }
            if !active[i] && v != 0.0 {
                return Err(MixtureError::WeightOnVacuous { index: i, value: v });
            }
        }
        Ok(Self { x, epsilon })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.x
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub(crate) fn replace(&mut self, x: Vec<f64>) {
        debug_assert_eq!(x.len(), self.x.len());
        self.x = x;
    }
}

/// Draw a component index `i ~ categorical(x)` and then `p ~ D_i`.
/// The returned point violates constraint `i` by construction.
pub fn sample_mixture<R: Rng + ?Sized>(
    weights: &MixtureWeights,
    constraints: &[HalfspaceConstraint],
    g: &NominalGaussian,
    rng: &mut R,
) -> Result<(usize, DVector<f64>), MixtureError> {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut chosen = None;
    for (i, &xi) in weights.x.iter().enumerate() {
        if xi > 0.0 {
            acc += xi;
            chosen = Some(i);
            if u < acc {
                break;
            }
        }
    }
    let i = chosen.ok_or(MixtureError::AllVacuous)?;
    let p = g.sample_conditional(&constraints[i], rng)?;
    Ok((i, p))
}

/// Importance weight `v(p) / v_D(p, x) = 1 / sum_i (x_i/Pi_i) 1[viol_i]`
/// over the mixture support.
pub fn density_ratio(
    p: &DVector<f64>,
    weights: &MixtureWeights,
    constraints: &[HalfspaceConstraint],
) -> Result<f64, MixtureError> {
    let mut denom = 0.0;
    let mut violated_any = false;
    let mut vacuous_violation = None;
    for (i, c) in constraints.iter().enumerate() {
        if c.is_violated(p) {
            violated_any = true;
            if c.in_mixture_support() {
                denom += weights.x[i] / c.tail_prob;
            } else if vacuous_violation.is_none() {
                vacuous_violation = Some(i);
            }
        }
    }
    if denom > 0.0 {
        Ok(1.0 / denom)
    } else if violated_any {
        Err(MixtureError::OnlyVacuousViolated(vacuous_violation.unwrap()))
    } else {
        Err(MixtureError::InsidePolytope)
    }
}

/// Number of rows the point violates.
pub fn violated_count(p: &DVector<f64>, constraints: &[HalfspaceConstraint]) -> usize {
    constraints.iter().filter(|c| c.is_violated(p)).count()
}

/// Analytic union-bound bracket `(max_i Pi_i, sum_i Pi_i)`.
pub fn union_bounds(constraints: &[HalfspaceConstraint]) -> (f64, f64) {
    let mut max = 0.0f64;
    let mut sum = 0.0;
    for c in constraints {
        max = max.max(c.tail_prob);
        sum += c.tail_prob;
    }
    (max, sum)
}

/// Running estimator state: Welford accumulators for the importance
/// weights plus the average violated-constraint count.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimatorState {
    count: u64,
    mean: f64,
    m2: f64,
    violated_mean: f64,
}

impl EstimatorState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, weight: f64, violated: usize) {
        self.count += 1;
        let k = self.count as f64;
        let delta = weight - self.mean;
        self.mean += delta / k;
        self.m2 += delta * (weight - self.mean);
        self.violated_mean += (violated as f64 - self.violated_mean) / k;
    }

    /// Order-independent combination of two disjoint batches.
    pub fn merge(&self, other: &Self) -> Self {
        if self.count == 0 {
            return other.clone();
        }
        if other.count == 0 {
            return self.clone();
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta = other.mean - self.mean;
        EstimatorState {
            count: self.count + other.count,
            mean: self.mean + delta * nb / n,
            m2: self.m2 + other.m2 + delta * delta * na * nb / n,
            violated_mean: self.violated_mean + (other.violated_mean - self.violated_mean) * nb / n,
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// The running unbiased estimate of the failure probability.
    pub fn pi_hat(&self) -> f64 {
        self.mean
    }

    /// Empirical standard deviation of the estimate,
    /// `sqrt(sample variance / N)`.
    pub fn std_err(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count as f64 - 1.0) / self.count as f64).max(0.0).sqrt()
        }
    }

    /// Population variance of the observed importance weights.
    pub fn weight_variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0)
        }
    }

    pub fn avg_violated(&self) -> f64 {
        self.violated_mean
    }
}

/// Fold a mixture sample into the estimator; returns the importance weight.
pub fn update_estimate(
    state: &mut EstimatorState,
    p: &DVector<f64>,
    weights: &MixtureWeights,
    constraints: &[HalfspaceConstraint],
) -> Result<f64, MixtureError> {
    let w = density_ratio(p, weights, constraints)?;
    state.push(w, violated_count(p, constraints));
    Ok(w)
}
