//! Entropic mirror descent on the mixture weights.
//!
//! Two objectives: the estimator variance `V(x)` and the KL divergence
//! from the zero-variance density, whose stochastic gradients differ only
//! by a `1 / pi_hat` factor. The iterate stays on the epsilon-floored
//! simplex via multiplicative updates followed by a clip-and-renormalize
//! projection; the step size is constant over the run.

use nalgebra::DVector;

use crate::batch;
use crate::gaussian::{HalfspaceConstraint, NominalGaussian};
use crate::mixture::{
    density_ratio, floor_project, sample_mixture, support_mask, union_bounds, EstimatorState,
    MixtureError, MixtureWeights,
};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Variance,
    Kl,
}

#[derive(Debug, Clone)]
pub struct AdaptiveConfig {
    pub objective: Objective,
    /// Total sampling horizon `N`.
    pub samples: u64,
    /// Samples per mirror-descent iteration.
    pub batch: usize,
    /// Simplex floor; `None` means `min(1e-3, 1/(10 J_active))`.
    pub epsilon: Option<f64>,
    /// Step-size prefactor, clamped to at most 1.
    pub eta0: f64,
}

impl AdaptiveConfig {
    pub fn new(objective: Objective, samples: u64) -> Self {
        Self { objective, samples, batch: 32, epsilon: None, eta0: 1.0 }
    }
}

/// One row per batch: running estimate, its standard error, the batch
/// population variance of the importance weights, and the step size.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub batch: usize,
    pub samples: u64,
    pub pi_hat: f64,
    pub std_err: f64,
    pub batch_variance: f64,
    pub eta: f64,
}

#[derive(Debug)]
pub struct MixtureRun {
    pub estimator: EstimatorState,
    pub weights: MixtureWeights,
    pub initial_weights: Vec<f64>,
    pub trace: Vec<TraceRow>,
}

/// Per-sample variance gradient: `g_i = -r(p)^2 / Pi_i` on violated
/// support rows, 0 elsewhere. This is an unbiased estimate of
/// `dV/dx_i` up to the common additive constant the simplex projection
/// absorbs.
pub fn stochastic_gradient_var(
    p: &DVector<f64>,
    weights: &MixtureWeights,
    constraints: &[HalfspaceConstraint],
) -> Result<Vec<f64>, MixtureError> {
    let r = density_ratio(p, weights, constraints)?;
    let mut grad = vec![0.0; constraints.len()];
    for (i, c) in constraints.iter().enumerate() {
        if c.in_mixture_support() && c.is_violated(p) {
            grad[i] = -r * r / c.tail_prob;
        }
    }
    Ok(grad)
}

/// Per-sample KL gradient: the variance gradient scaled by `1 / pi_ref`,
/// where `pi_ref` is the current running estimate (or an analytic upper
/// bound before one exists).
pub fn stochastic_gradient_kl(
    p: &DVector<f64>,
    weights: &MixtureWeights,
    constraints: &[HalfspaceConstraint],
    pi_ref: f64,
) -> Result<Vec<f64>, MixtureError> {
    let mut grad = stochastic_gradient_var(p, weights, constraints)?;
    for g in &mut grad {
        *g /= pi_ref;
    }
    Ok(grad)
}

/// Constant step size
/// `eta = eta0 * epsilon * pi_scale^-1 * sqrt(ln J / (5 N))`.
///
/// `pi_scale` stands in for the failure probability; the caller passes
/// the computable lower bound `max_i Pi_i`, which sits between the true
/// probability and the looser `min_i Pi_i` relaxation. The theoretical
/// schedule assumes unit-scale gradients, but the variance gradient is
/// O(Pi^2 / Pi_i), so on small-probability cases `eta0` must absorb the
/// missing scale; it is therefore left uncapped and exposed as a knob.
pub fn step_size(eta0: f64, epsilon: f64, pi_scale: f64, j_active: usize, samples: u64) -> f64 {
    if pi_scale <= 0.0 || samples == 0 || j_active < 2 {
        return 0.0;
    }
    eta0 * epsilon / pi_scale * ((j_active as f64).ln() / (5.0 * samples as f64)).sqrt()
}

/// Multiplicative-weights update `x_i <- x_i exp(-eta g_i)` (computed in
/// log space with a max shift), renormalized and floored.
pub fn mirror_step(weights: &mut MixtureWeights, grad: &[f64], eta: f64, active: &[bool]) {
    let x = weights.as_slice();
    let mut logits = vec![f64::NEG_INFINITY; x.len()];
    let mut max = f64::NEG_INFINITY;
    for i in 0..x.len() {
        if active[i] && x[i] > 0.0 {
            logits[i] = x[i].ln() - eta * grad[i];
            max = max.max(logits[i]);
        }
    }
    let mut next: Vec<f64> =
        logits.iter().map(|&l| if l > f64::NEG_INFINITY { (l - max).exp() } else { 0.0 }).collect();
    let sum: f64 = next.iter().sum();
    for v in &mut next {
        *v /= sum;
    }
    floor_project(&mut next, active, weights.epsilon());
    weights.replace(next);
}

struct SampleOut {
    weight: f64,
    violated: usize,
    /// Violated rows inside the mixture support.
    hits: Vec<u32>,
}

fn run_core(
    g: &NominalGaussian,
    constraints: &[HalfspaceConstraint],
    x0: MixtureWeights,
    samples: u64,
    batch: usize,
    seed: u64,
    adapt: Option<(Objective, f64)>,
) -> Result<MixtureRun, MixtureError> {
    let active = support_mask(constraints);
    let (_, sum_pi) = union_bounds(constraints);
    let initial_weights = x0.as_slice().to_vec();
    let mut weights = x0;
    let mut est = EstimatorState::new();
    let mut trace = Vec::new();
    let mut done: u64 = 0;
    let mut batch_idx: u64 = 0;
    while done < samples {
        let m = (batch as u64).min(samples - done) as usize;
        let frozen = &weights;
        let outs = batch::indexed_map(m, |j| -> Result<SampleOut, MixtureError> {
            let mut rng = stream(seed, batch_idx, j as u64);
            let (_, p) = sample_mixture(frozen, constraints, g, &mut rng)?;
            let weight = density_ratio(&p, frozen, constraints)?;
            let mut violated = 0;
            let mut hits = Vec::new();
            for (i, c) in constraints.iter().enumerate() {
                if c.is_violated(&p) {
                    violated += 1;
                    if c.in_mixture_support() {
                        hits.push(i as u32);
                    }
                }
            }
            Ok(SampleOut { weight, violated, hits })
        });
        let mut batch_est = EstimatorState::new();
        let mut kept = Vec::with_capacity(m);
        for out in outs {
            let out = out?;
            batch_est.push(out.weight, out.violated);
            kept.push(out);
        }
        est = est.merge(&batch_est);
        done += m as u64;
        let eta = adapt.map_or(0.0, |(_, eta)| eta);
        trace.push(TraceRow {
            batch: batch_idx as usize,
            samples: done,
            pi_hat: est.pi_hat(),
            std_err: est.std_err(),
            batch_variance: batch_est.weight_variance(),
            eta,
        });
        if let Some((objective, eta)) = adapt {
            let pi_ref = match objective {
                Objective::Variance => 1.0,
                Objective::Kl => {
                    if est.pi_hat() > 0.0 {
                        est.pi_hat()
                    } else {
                        sum_pi
                    }
                }
            };
            let mut grad = vec![0.0; constraints.len()];
            for out in &kept {
                let coef = -(out.weight * out.weight) / pi_ref;
                for &i in &out.hits {
                    grad[i as usize] += coef / constraints[i as usize].tail_prob;
                }
            }
            let inv_m = 1.0 / m as f64;
            for v in &mut grad {
                *v *= inv_m;
            }
            mirror_step(&mut weights, &grad, eta, &active);
        }
        batch_idx += 1;
    }
    Ok(MixtureRun { estimator: est, weights, initial_weights, trace })
}

/// Mixture importance sampling with per-batch mirror-descent weight
/// adaptation. Deterministic for a fixed seed regardless of how batches
/// are executed.
pub fn run_adaptive(
    g: &NominalGaussian,
    constraints: &[HalfspaceConstraint],
    cfg: &AdaptiveConfig,
    seed: u64,
) -> Result<MixtureRun, MixtureError> {
    let j_active = support_mask(constraints).iter().filter(|&&a| a).count();
    if j_active == 0 {
        return Err(MixtureError::AllVacuous);
    }
    let epsilon = cfg.epsilon.unwrap_or_else(|| 1e-3f64.min(1.0 / (10.0 * j_active as f64)));
    let x0 = MixtureWeights::proportional_to_tails(constraints, epsilon)?;
    let (max_pi, _) = union_bounds(constraints);
    let eta = step_size(cfg.eta0, epsilon, max_pi, j_active, cfg.samples);
    run_core(g, constraints, x0, cfg.samples, cfg.batch.max(1), seed, Some((cfg.objective, eta)))
}

/// Static mixture sampling with tail-proportional weights and no
/// adaptation (the ALOE baseline).
pub fn run_static_mixture(
    g: &NominalGaussian,
    constraints: &[HalfspaceConstraint],
    samples: u64,
    batch: usize,
    seed: u64,
) -> Result<MixtureRun, MixtureError> {
    let x0 = MixtureWeights::proportional_to_tails(constraints, 0.0)?;
    run_core(g, constraints, x0, samples, batch.max(1), seed, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal;
    use crate::quadrature;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn vec2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    fn orthogonal_pair(b1: f64, b2: f64) -> (NominalGaussian, Vec<HalfspaceConstraint>) {
        let g = NominalGaussian::standard(2);
        let cs = vec![
            g.tail_probability(&vec2(1.0, 0.0), b1).unwrap(),
            g.tail_probability(&vec2(0.0, 1.0), b2).unwrap(),
        ];
        (g, cs)
    }

    #[test]
    fn gradient_examples() {
        // single constraint: r = Pi_1, so g_1 = -Pi_1
        let g = NominalGaussian::standard(2);
        let cs = vec![g.tail_probability(&vec2(1.0, 0.0), 1.0).unwrap()];
        let w = MixtureWeights::proportional_to_tails(&cs, 0.0).unwrap();
        let grad = stochastic_gradient_var(&vec2(2.0, 0.0), &w, &cs).unwrap();
        assert_abs_diff_eq!(grad[0], -cs[0].tail_prob, epsilon = 1e-15);

        // two equal tails, equal weights, both violated: r = q, g = (-q, -q)
        let (_, cs) = orthogonal_pair(2.0, 2.0);
        let q = normal::ccdf(2.0);
        let w = MixtureWeights::from_vec(vec![0.5, 0.5], &cs, 0.0).unwrap();
        let grad = stochastic_gradient_var(&vec2(3.0, 3.0), &w, &cs).unwrap();
        assert_abs_diff_eq!(grad[0], -q, epsilon = 1e-14);
        assert_abs_diff_eq!(grad[1], -q, epsilon = 1e-14);

        // KL gradient is the variance gradient over pi_ref
        let gk = stochastic_gradient_kl(&vec2(3.0, 3.0), &w, &cs, 0.5).unwrap();
        assert_abs_diff_eq!(gk[0], -2.0 * q, epsilon = 1e-14);
    }

    /// Violated support sets of a frozen batch, for evaluating the
    /// empirical objective at arbitrary weights.
    fn frozen_batch(
        g: &NominalGaussian,
        cs: &[HalfspaceConstraint],
        x0: &MixtureWeights,
        n: usize,
        seed: u64,
    ) -> Vec<DVector<f64>> {
        let mut rng = stream(seed, 0, 0);
        (0..n).map(|_| sample_mixture(x0, cs, g, &mut rng).unwrap().1).collect()
    }

    fn sum_inverse_weight(p: &DVector<f64>, x: &[f64], cs: &[HalfspaceConstraint]) -> f64 {
        cs.iter()
            .enumerate()
            .filter(|(_, c)| c.in_mixture_support() && c.is_violated(p))
            .map(|(i, c)| x[i] / c.tail_prob)
            .sum()
    }

    /// Batch mean of the importance weight `1 / S(p, x)` — the empirical
    /// variance surrogate whose exact gradient is the batch mean of the
    /// per-sample variance gradients.
    fn vhat(batch: &[DVector<f64>], x: &[f64], cs: &[HalfspaceConstraint]) -> f64 {
        batch.iter().map(|p| 1.0 / sum_inverse_weight(p, x, cs)).sum::<f64>() / batch.len() as f64
    }

    #[test]
    fn variance_gradient_matches_central_differences() {
        let (g, cs) = orthogonal_pair(2.0, 1.5);
        let x0 = MixtureWeights::proportional_to_tails(&cs, 0.0).unwrap();
        let batch = frozen_batch(&g, &cs, &x0, 512, 11);
        let h = 1e-5;
        let mut point_rng = stream(12, 0, 0);
        for _ in 0..5 {
            let a: f64 = 0.2 + 0.6 * point_rng.random::<f64>();
            let x = vec![a, 1.0 - a];
            let w = MixtureWeights::from_vec(x.clone(), &cs, 0.0).unwrap();
            let mut analytic = vec![0.0; 2];
            for p in &batch {
                let grad = stochastic_gradient_var(p, &w, &cs).unwrap();
                for i in 0..2 {
                    analytic[i] += grad[i] / batch.len() as f64;
                }
            }
            for i in 0..2 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (vhat(&batch, &xp, &cs) - vhat(&batch, &xm, &cs)) / (2.0 * h);
                let rel = (analytic[i] - fd).abs() / fd.abs().max(1e-300);
                assert!(rel <= 1e-6, "coord {i}: analytic {} fd {fd} rel {rel}", analytic[i]);
            }
        }
    }

    #[test]
    fn kl_gradient_matches_central_differences() {
        let (g, cs) = orthogonal_pair(2.0, 1.5);
        let x0 = MixtureWeights::proportional_to_tails(&cs, 0.0).unwrap();
        let batch = frozen_batch(&g, &cs, &x0, 512, 13);
        let h = 1e-5;
        let mut point_rng = stream(14, 0, 0);
        for _ in 0..5 {
            let a: f64 = 0.2 + 0.6 * point_rng.random::<f64>();
            let x = vec![a, 1.0 - a];
            let w = MixtureWeights::from_vec(x.clone(), &cs, 0.0).unwrap();
            let pi_ref = vhat(&batch, &x, &cs);
            let mut analytic = vec![0.0; 2];
            for p in &batch {
                let grad = stochastic_gradient_kl(p, &w, &cs, pi_ref).unwrap();
                for i in 0..2 {
                    analytic[i] += grad[i] / batch.len() as f64;
                }
            }
            for i in 0..2 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (vhat(&batch, &xp, &cs).ln() - vhat(&batch, &xm, &cs).ln()) / (2.0 * h);
                let rel = (analytic[i] - fd).abs() / fd.abs().max(1e-300);
                assert!(rel <= 1e-4, "coord {i}: analytic {} fd {fd} rel {rel}", analytic[i]);
            }
        }
    }

    #[test]
    fn empirical_objective_is_midpoint_convex() {
        let (g, cs) = orthogonal_pair(2.0, 1.5);
        let x0 = MixtureWeights::proportional_to_tails(&cs, 0.0).unwrap();
        let batch = frozen_batch(&g, &cs, &x0, 256, 15);
        let mut rng = stream(16, 0, 0);
        for _ in 0..20 {
            let a: f64 = 0.05 + 0.9 * rng.random::<f64>();
            let b: f64 = 0.05 + 0.9 * rng.random::<f64>();
            let xa = [a, 1.0 - a];
            let xb = [b, 1.0 - b];
            let xm = [0.5 * (a + b), 1.0 - 0.5 * (a + b)];
            let lhs = vhat(&batch, &xm, &cs);
            let rhs = 0.5 * (vhat(&batch, &xa, &cs) + vhat(&batch, &xb, &cs));
            assert!(lhs <= rhs + 1e-12, "midpoint {lhs} > average {rhs}");
        }
    }

    #[test]
    fn mirror_step_examples() {
        let (_, cs) = orthogonal_pair(2.0, 2.0);
        let active = [true, true];
        // eta (g2 - g1) = ln 2 tilts (1/2, 1/2) to (2/3, 1/3)
        let mut w = MixtureWeights::from_vec(vec![0.5, 0.5], &cs, 0.0).unwrap();
        mirror_step(&mut w, &[-(2.0f64.ln()), 0.0], 1.0, &active);
        assert_abs_diff_eq!(w.as_slice()[0], 2.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(w.as_slice()[1], 1.0 / 3.0, epsilon = 1e-14);

        // a large tilt is caught by the floor projection
        let mut w = MixtureWeights::from_vec(vec![0.5, 0.5], &cs, 0.01).unwrap();
        mirror_step(&mut w, &[-10.0, 0.0], 1.0, &active);
        assert_abs_diff_eq!(w.as_slice()[0], 0.99, epsilon = 1e-12);
        assert_abs_diff_eq!(w.as_slice()[1], 0.01, epsilon = 1e-12);

        // zero step is the identity on the floored simplex
        let mut w = MixtureWeights::from_vec(vec![0.7, 0.3], &cs, 0.01).unwrap();
        mirror_step(&mut w, &[0.0, 0.0], 0.5, &active);
        assert_abs_diff_eq!(w.as_slice()[0], 0.7, epsilon = 1e-14);
    }

    #[test]
    fn mirror_step_survives_huge_gradients() {
        let (_, cs) = orthogonal_pair(2.0, 2.0);
        let mut w = MixtureWeights::from_vec(vec![0.5, 0.5], &cs, 1e-3).unwrap();
        mirror_step(&mut w, &[-1e8, 1e8], 1.0, &[true, true]);
        let x = w.as_slice();
        assert!(x.iter().all(|v| v.is_finite()));
        assert_abs_diff_eq!(x.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 1e-3, epsilon = 1e-15);
    }

    #[test]
    fn step_size_example() {
        let eta = step_size(1.0, 0.01, 0.1, 2, 100);
        let oracle = 0.01 * 10.0 * (2.0f64.ln() / 500.0).sqrt();
        assert_abs_diff_eq!(eta, oracle, epsilon = 1e-18);
        assert_abs_diff_eq!(eta, 3.7233e-3, epsilon = 1e-6);
        // prefactor scales linearly and is not capped
        assert_abs_diff_eq!(step_size(7.0, 0.01, 0.1, 2, 100), 7.0 * oracle, epsilon = 1e-15);
        // a single active component needs no adaptation
        assert_eq!(step_size(1.0, 0.01, 0.1, 1, 100), 0.0);
    }

    #[test]
    fn adaptive_run_is_deterministic() {
        let (g, cs) = orthogonal_pair(2.0, 1.5);
        let cfg = AdaptiveConfig::new(Objective::Variance, 300);
        let a = run_adaptive(&g, &cs, &cfg, 42).unwrap();
        let b = run_adaptive(&g, &cs, &cfg, 42).unwrap();
        assert_eq!(a.estimator, b.estimator);
        assert_eq!(a.weights.as_slice(), b.weights.as_slice());
        assert_eq!(a.trace.len(), b.trace.len());
        for (ra, rb) in a.trace.iter().zip(&b.trace) {
            assert_eq!(ra.pi_hat.to_bits(), rb.pi_hat.to_bits());
            assert_eq!(ra.batch_variance.to_bits(), rb.batch_variance.to_bits());
        }
    }

    #[test]
    fn adaptive_iterates_stay_on_the_floored_simplex() {
        let (g, cs) = orthogonal_pair(1.2, 2.8);
        let mut cfg = AdaptiveConfig::new(Objective::Kl, 2000);
        cfg.epsilon = Some(0.05);
        let run = run_adaptive(&g, &cs, &cfg, 7).unwrap();
        let x = run.weights.as_slice();
        assert_abs_diff_eq!(x.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(x.iter().all(|&v| v >= 0.05 - 1e-15));
    }

    #[test]
    fn single_constraint_trace_is_constant() {
        let g = NominalGaussian::standard(2);
        let cs = vec![g.tail_probability(&vec2(1.0, 0.0), 2.0).unwrap()];
        let cfg = AdaptiveConfig::new(Objective::Variance, 200);
        let run = run_adaptive(&g, &cs, &cfg, 5).unwrap();
        assert_eq!(run.weights.as_slice(), &[1.0]);
        for row in &run.trace {
            assert_abs_diff_eq!(row.pi_hat, cs[0].tail_prob, epsilon = 1e-15);
            assert_eq!(row.eta, 0.0);
        }
    }

    /// One face up, two near-duplicate faces down: the optimum splits the
    /// mass roughly half / quarter / quarter, while the tail-proportional
    /// start is uniform.
    fn lopsided_triple(xi: f64, tau: f64) -> (NominalGaussian, Vec<HalfspaceConstraint>) {
        let g = NominalGaussian::standard(2);
        let cs = vec![
            g.tail_probability(&vec2(0.0, 1.0), tau).unwrap(),
            g.tail_probability(&vec2(xi, -1.0 - xi), tau).unwrap(),
            g.tail_probability(&vec2(-xi, -1.0 + xi), tau).unwrap(),
        ];
        (g, cs)
    }

    #[test]
    fn adaptation_reduces_the_variance_functional() {
        let (g, cs) = lopsided_triple(1e-4, 1.5);
        let cfg = AdaptiveConfig::new(Objective::Variance, 4000);
        let v0 = {
            let x0 = MixtureWeights::proportional_to_tails(&cs, 1e-3).unwrap();
            quadrature::mixture_variance(&cs, x0.as_slice()).unwrap()
        };
        let mut improved = 0;
        let mut v_final_sum = 0.0;
        for seed in 0..10u64 {
            let run = run_adaptive(&g, &cs, &cfg, 100 + seed).unwrap();
            let v = quadrature::mixture_variance(&cs, run.weights.as_slice()).unwrap();
            v_final_sum += v;
            if v < v0 {
                improved += 1;
            }
        }
        assert!(
            v_final_sum / 10.0 < v0,
            "mean final V {} not below initial {v0}",
            v_final_sum / 10.0
        );
        assert!(improved >= 8, "only {improved}/10 seeds improved");
    }

    #[test]
    fn near_duplicate_faces_want_a_half_split() {
        // The optimum of V(x) gives the distinct face half the mass and
        // splits the rest between the near-duplicates; mirror descent
        // moves toward it from the uniform tail-proportional start.
        let (g, cs) = lopsided_triple(1e-4, 1.0);
        let mut best = (f64::INFINITY, [0.0; 3]);
        let steps = 49;
        for ia in 1..steps {
            let a = ia as f64 / steps as f64;
            for ib in 1..(steps - ia) {
                let b = ib as f64 / steps as f64;
                let x = [a, b, 1.0 - a - b];
                let v = quadrature::mixture_variance(&cs, &x).unwrap();
                if v < best.0 {
                    best = (v, x);
                }
            }
        }
        let x_opt = best.1;
        assert!((x_opt[0] - 0.5).abs() < 0.05, "optimal x = {x_opt:?}");
        // the half / quarter / quarter point beats every grid point
        let v_half = quadrature::mixture_variance(&cs, &[0.5, 0.25, 0.25]).unwrap();
        assert!(v_half <= best.0 * (1.0 + 1e-9), "V(1/2,1/4,1/4) = {v_half} vs grid min {}", best.0);

        let cfg = AdaptiveConfig::new(Objective::Variance, 40_000);
        let run = run_adaptive(&g, &cs, &cfg, 3).unwrap();
        let x = run.weights.as_slice();
        // the theoretical step size is conservative, so only direction
        // and non-regression are asserted over this horizon
        assert!(x[0] > run.initial_weights[0], "x = {x:?} moved away from the optimum");
        // symmetric dynamics keep the duplicates evenly split
        assert!((x[1] - x[2]).abs() < 0.01, "x = {x:?}");
        let v_run = quadrature::mixture_variance(&cs, x).unwrap();
        let v_start = quadrature::mixture_variance(&cs, &run.initial_weights).unwrap();
        assert!(v_run <= v_start, "V increased: {v_run} > {v_start}");
    }

    #[test]
    fn static_mixture_matches_inclusion_exclusion() {
        let (g, cs) = orthogonal_pair(2.0, 2.0);
        let q = normal::ccdf(2.0);
        let oracle = 2.0 * q - q * q;
        let run = run_static_mixture(&g, &cs, 50_000, 32, 9).unwrap();
        let err = (run.estimator.pi_hat() - oracle).abs();
        assert!(
            err <= 3.0 * run.estimator.std_err(),
            "pi_hat {} vs {oracle}",
            run.estimator.pi_hat()
        );
        // no adaptation: final weights equal the initial ones
        assert_eq!(run.weights.as_slice(), run.initial_weights.as_slice());
    }

    #[test]
    fn kl_and_variance_runs_both_improve_the_start() {
        let (g, cs) = lopsided_triple(1e-4, 1.5);
        let x0 = MixtureWeights::proportional_to_tails(&cs, 1e-3).unwrap();
        let v0 = quadrature::mixture_variance(&cs, x0.as_slice()).unwrap();
        for objective in [Objective::Variance, Objective::Kl] {
            let cfg = AdaptiveConfig { objective, ..AdaptiveConfig::new(objective, 6000) };
            let run = run_adaptive(&g, &cs, &cfg, 21).unwrap();
            let v = quadrature::mixture_variance(&cs, run.weights.as_slice()).unwrap();
            assert!(v < v0 * 1.05, "{objective:?}: V {v} vs start {v0}");
        }
    }
}
