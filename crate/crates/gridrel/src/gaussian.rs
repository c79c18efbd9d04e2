//! The nominal multivariate Gaussian, per-constraint tail probabilities,
//! and exact sampling conditioned on a violated half-space.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::normal;

#[derive(Debug, Error)]
pub enum GaussError {
    #[error("non-finite input in {0}")]
    NonFinite(&'static str),
    #[error("covariance is not symmetric")]
    NotSymmetric,
    #[error("covariance has negative eigenvalue {0:.3e}")]
    NotPsd(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("constraint is degenerate (zero variance along its normal)")]
    DegenerateConstraint,
    #[error("tail probability underflows at margin {beta:.3} (limit {limit})")]
    TailUnderflow { beta: f64, limit: f64 },
    #[error("point deviates from the mean at the slack coordinate by {0:.3e}")]
    SlackDeviation(f64),
}

/// Nominal distribution `N(mu, Sigma)`; `Sigma` may be singular (the slack
/// row/column is zero by convention, loads may carry zero variance too).
#[derive(Debug, Clone)]
pub struct NominalGaussian {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    /// Symmetric PSD square root, `sqrt * sqrt^T = sigma`.
    sqrt: DMatrix<f64>,
    /// Slack coordinate held deterministic, if any.
    slack: Option<usize>,
    eigvecs: DMatrix<f64>,
    /// Eigenvalues after the PSD cutoff; exact zeros mark the null space.
    eigvals: DVector<f64>,
    rank: usize,
    pseudo_logdet: f64,
}

/// One polytope row `omega^T p <= b` with its precomputed margin and
/// nominal tail probability `P(omega^T p > b)`.
#[derive(Debug, Clone)]
pub struct HalfspaceConstraint {
    pub omega: DVector<f64>,
    pub b: f64,
    /// `||Sigma^{1/2} omega||_2`.
    pub sigma_norm: f64,
    /// Dimensionless margin `(b - mu^T omega) / sigma_norm`.
    pub beta: f64,
    /// `P(omega^T p > b)` under the nominal Gaussian.
    pub tail_prob: f64,
    /// `log` of the tail probability, finite for margins past underflow.
    pub log_tail: f64,
    /// Whitened unit normal `Sigma^{1/2} omega / sigma_norm`.
    pub omega_bar: Option<DVector<f64>>,
}

impl HalfspaceConstraint {
    pub fn is_violated(&self, p: &DVector<f64>) -> bool {
        self.omega.dot(p) > self.b
    }

    /// Zero variance along the normal: the constraint holds or fails
    /// deterministically.
    pub fn is_degenerate(&self) -> bool {
        self.sigma_norm == 0.0
    }

    /// Whether the conditional sampler can target this constraint:
    /// non-degenerate, tail mass above underflow, margin within range.
    pub fn in_mixture_support(&self) -> bool {
        self.sigma_norm > 0.0 && self.tail_prob > 0.0 && self.beta <= normal::MAX_MARGIN
    }
}

impl NominalGaussian {
    /// Build from a mean and a symmetric PSD covariance. `slack` marks a
    /// coordinate whose row/column of `sigma` must be zero (deterministic
    /// balance injection).
    pub fn new(
        mu: DVector<f64>,
        sigma: DMatrix<f64>,
        slack: Option<usize>,
    ) -> Result<Self, GaussError> {
        let n = mu.len();
        if sigma.nrows() != n || sigma.ncols() != n {
            return Err(GaussError::Dimension { expected: n, got: sigma.nrows() });
        }
        if mu.iter().any(|v| !v.is_finite()) || sigma.iter().any(|v| !v.is_finite()) {
            return Err(GaussError::NonFinite("mean or covariance"));
        }
        let scale = 1.0 + sigma.amax();
        if (&sigma - sigma.transpose()).amax() > 1e-10 * scale {
            return Err(GaussError::NotSymmetric);
        }
        if let Some(s) = slack {
            debug_assert!(sigma.row(s).amax() == 0.0 && sigma.column(s).amax() == 0.0);
        }
        let sym = nalgebra::SymmetricEigen::new(sigma.clone());
        let lambda_max = sym.eigenvalues.amax().max(0.0);
        let cutoff = 1e-12 * lambda_max;
        let mut eigvals = sym.eigenvalues.clone();
        for v in eigvals.iter_mut() {
            if *v < -1e-9 * (1.0 + lambda_max) {
                return Err(GaussError::NotPsd(*v));
            }
            if *v <= cutoff {
                *v = 0.0;
            }
        }
        let mut sqrt = DMatrix::zeros(n, n);
        let mut rank = 0;
        let mut pseudo_logdet = 0.0;
        for (k, &lam) in eigvals.iter().enumerate() {
            if lam > 0.0 {
                rank += 1;
                pseudo_logdet += lam.ln();
                let v = sym.eigenvectors.column(k);
                sqrt += lam.sqrt() * &v * v.transpose();
            }
        }
        Ok(Self {
            mu,
            sigma,
            sqrt,
            slack,
            eigvecs: sym.eigenvectors,
            eigvals,
            rank,
            pseudo_logdet,
        })
    }

    /// Standard normal in `n` dimensions, no slack coordinate.
    pub fn standard(n: usize) -> Self {
        Self::new(DVector::zeros(n), DMatrix::identity(n, n), None).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn sigma_sqrt(&self) -> &DMatrix<f64> {
        &self.sqrt
    }

    pub fn slack(&self) -> Option<usize> {
        self.slack
    }

    /// Draw from the nominal distribution itself.
    pub fn sample_nominal<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mu + &self.sqrt * z
    }

    /// Precompute the margin and tail probability of `omega^T p > b`.
    pub fn tail_probability(
        &self,
        omega: &DVector<f64>,
        b: f64,
    ) -> Result<HalfspaceConstraint, GaussError> {
        if omega.len() != self.dim() {
            return Err(GaussError::Dimension { expected: self.dim(), got: omega.len() });
        }
        if !b.is_finite() || omega.iter().any(|v| !v.is_finite()) {
            return Err(GaussError::NonFinite("constraint"));
        }
        let scaled = &self.sqrt * omega;
        let sigma_norm = scaled.norm();
        let mean_proj = self.mu.dot(omega);
        if sigma_norm == 0.0 {
            // Deterministic direction: the mean decides, with probability 0 or 1.
            let fails = mean_proj > b;
            return Ok(HalfspaceConstraint {
                omega: omega.clone(),
                b,
                sigma_norm,
                beta: if fails { f64::NEG_INFINITY } else { f64::INFINITY },
                tail_prob: if fails { 1.0 } else { 0.0 },
                log_tail: if fails { 0.0 } else { f64::NEG_INFINITY },
                omega_bar: None,
            });
        }
        let beta = (b - mean_proj) / sigma_norm;
        Ok(HalfspaceConstraint {
            omega: omega.clone(),
            b,
            sigma_norm,
            beta,
            tail_prob: normal::ccdf(beta),
            log_tail: normal::log_ccdf(beta),
            omega_bar: Some(scaled / sigma_norm),
        })
    }

    /// Sample `p ~ N(mu, Sigma)` conditioned on `omega^T p >= b`.
    ///
    /// Inverse-transform in the whitened direction `omega_bar`:
    /// `y = inv_ccdf((1-u) * ccdf(beta))` computed in log space, then the
    /// orthogonal complement is filled with an unconditioned draw.
    pub fn sample_conditional<R: Rng + ?Sized>(
        &self,
        c: &HalfspaceConstraint,
        rng: &mut R,
    ) -> Result<DVector<f64>, GaussError> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let u: f64 = rng.random();
        self.conditional_from_draws(c, &z, u)
    }

    /// Deterministic core of [`sample_conditional`]; exposed so tests can
    /// pin the uniform draw (`u = 0` puts the sample on the boundary).
    pub fn conditional_from_draws(
        &self,
        c: &HalfspaceConstraint,
        z: &DVector<f64>,
        u: f64,
    ) -> Result<DVector<f64>, GaussError> {
        let omega_bar = c.omega_bar.as_ref().ok_or(GaussError::DegenerateConstraint)?;
        if c.tail_prob <= 0.0 || c.beta > normal::MAX_MARGIN {
            return Err(GaussError::TailUnderflow { beta: c.beta, limit: normal::MAX_MARGIN });
        }
        // u in [0,1) maps to (1-u] so y = beta is reachable and y = inf is not.
        let y = if u == 0.0 {
            c.beta
        } else {
            normal::inv_ccdf_log(c.log_tail + (-u).ln_1p())
        };
        let phi = z + omega_bar * (y - omega_bar.dot(z));
        Ok(&self.mu + &self.sqrt * phi)
    }

    /// Log-density on the non-degenerate subspace (pseudo-determinant and
    /// pseudo-inverse quadratic form). The slack coordinate must sit at
    /// its mean.
    pub fn nominal_logpdf(&self, p: &DVector<f64>) -> Result<f64, GaussError> {
        if p.len() != self.dim() {
            return Err(GaussError::Dimension { expected: self.dim(), got: p.len() });
        }
        if let Some(s) = self.slack {
            let dev = (p[s] - self.mu[s]).abs();
            if dev > 1e-9 {
                return Err(GaussError::SlackDeviation(dev));
            }
        }
        let d = p - &self.mu;
        let mut quad = 0.0;
        for (k, &lam) in self.eigvals.iter().enumerate() {
            if lam > 0.0 {
                let proj = self.eigvecs.column(k).dot(&d);
                quad += proj * proj / lam;
            }
        }
        let half_log_2pi = 0.918_938_533_204_672_74;
        Ok(-(self.rank as f64) * half_log_2pi - 0.5 * self.pseudo_logdet - 0.5 * quad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;

    fn standard2() -> NominalGaussian {
        NominalGaussian::standard(2)
    }

    fn vec2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    #[test]
    fn tail_probability_examples() {
        let g = standard2();
        let c = g.tail_probability(&vec2(1.0, 0.0), 0.0).unwrap();
        assert_abs_diff_eq!(c.tail_prob, 0.5, epsilon = 1e-15);

        let c = g.tail_probability(&vec2(1.0, 0.0), 3.0).unwrap();
        assert_abs_diff_eq!(c.tail_prob, 1.349_898_031_630_095e-3, epsilon = 1e-16);

        let shifted =
            NominalGaussian::new(vec2(5.0, 0.0), DMatrix::identity(2, 2), None).unwrap();
        let c = shifted.tail_probability(&vec2(1.0, 0.0), 3.0).unwrap();
        assert_abs_diff_eq!(c.beta, -2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.tail_prob, 0.977_249_868_051_820_8, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_constraint_is_deterministic() {
        let mut sigma = DMatrix::identity(2, 2);
        sigma[(1, 1)] = 0.0;
        let g = NominalGaussian::new(vec2(0.0, 2.0), sigma, None).unwrap();
        let c = g.tail_probability(&vec2(0.0, 1.0), 1.0).unwrap();
        assert!(c.is_degenerate());
        assert_eq!(c.tail_prob, 1.0);
        let c = g.tail_probability(&vec2(0.0, 1.0), 3.0).unwrap();
        assert_eq!(c.tail_prob, 0.0);
    }

    #[test]
    fn boundary_draw_lands_exactly_on_the_plane() {
        let g = standard2();
        let c = g.tail_probability(&vec2(1.0, 0.0), 2.0).unwrap();
        let z = vec2(0.7, -1.3);
        let p = g.conditional_from_draws(&c, &z, 0.0).unwrap();
        assert_abs_diff_eq!(p.dot(&c.omega), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn conditional_samples_satisfy_the_constraint() {
        let g = standard2();
        for &b in &[0.0, 2.0, 6.0] {
            let c = g.tail_probability(&vec2(0.6, 0.8), b).unwrap();
            let mut rng = stream(11, 0, b as u64);
            for _ in 0..2000 {
                let p = g.sample_conditional(&c, &mut rng).unwrap();
                assert!(p.dot(&c.omega) >= b - 1e-9 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn truncated_mean_matches_one_dimensional_oracle() {
        // E[Z | Z >= 2] = pdf(2)/ccdf(2)
        let g = standard2();
        let c = g.tail_probability(&vec2(1.0, 0.0), 2.0).unwrap();
        let oracle = normal::pdf(2.0) / normal::ccdf(2.0);
        let truncated_var = 1.0 + 2.0 * oracle - oracle * oracle;
        let n = 100_000;
        let mut rng = stream(5, 0, 0);
        let mut sum = 0.0;
        for _ in 0..n {
            sum += g.sample_conditional(&c, &mut rng).unwrap()[0];
        }
        let mean = sum / n as f64;
        let stderr = (truncated_var / n as f64).sqrt();
        assert!(
            (mean - oracle).abs() <= 3.0 * stderr,
            "mean {mean} vs oracle {oracle} (3 se = {:.2e})",
            3.0 * stderr
        );
    }

    fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len() as f64;
        let mut d: f64 = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            let f = cdf(x);
            d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
        }
        d
    }

    #[test]
    fn projected_statistic_is_truncated_normal() {
        // KS test at significance 1e-3 on 1e4 samples, tau in {0, 2, 6}.
        let g = standard2();
        let n = 10_000;
        let crit = (f64::ln(2.0 / 1e-3) / 2.0).sqrt() / (n as f64).sqrt();
        for (case, tau) in [0.0, 2.0, 6.0].into_iter().enumerate() {
            let c = g.tail_probability(&vec2(0.0, 1.0), tau).unwrap();
            let mut rng = stream(17, case as u64, 0);
            let omega_bar = c.omega_bar.clone().unwrap();
            let ortho = vec2(1.0, 0.0); // orthogonal to omega_bar = (0, 1)
            let mut proj = Vec::with_capacity(n);
            let mut orth = Vec::with_capacity(n);
            for _ in 0..n {
                let p = g.sample_conditional(&c, &mut rng).unwrap();
                proj.push(omega_bar.dot(&p));
                orth.push(ortho.dot(&p));
            }
            let log_tail = c.log_tail;
            let trunc_cdf = |y: f64| {
                if y < tau {
                    0.0
                } else {
                    -f64::exp_m1(normal::log_ccdf(y) - log_tail)
                }
            };
            let d = ks_statistic(proj, trunc_cdf);
            assert!(d < crit, "tau={tau}: projected KS {d:.4} >= {crit:.4}");
            let d = ks_statistic(orth, normal::cdf);
            assert!(d < crit, "tau={tau}: orthogonal KS {d:.4} >= {crit:.4}");
        }
    }

    #[test]
    fn tail_probability_matches_plain_monte_carlo() {
        let g = standard2();
        let c = g.tail_probability(&vec2(0.8, -0.6), 2.5).unwrap();
        assert!(c.tail_prob >= 1e-3);
        let n = 1_000_000;
        let mut rng = stream(23, 0, 0);
        let mut hits = 0u64;
        for _ in 0..n {
            if c.is_violated(&g.sample_nominal(&mut rng)) {
                hits += 1;
            }
        }
        let frac = hits as f64 / n as f64;
        let se = (c.tail_prob * (1.0 - c.tail_prob) / n as f64).sqrt();
        assert!((frac - c.tail_prob).abs() <= 4.0 * se);
    }

    #[test]
    fn deep_tail_sampling_stays_finite() {
        let g = standard2();
        let c = g.tail_probability(&vec2(1.0, 0.0), 30.0).unwrap();
        let mut rng = stream(29, 0, 0);
        for _ in 0..200 {
            let p = g.sample_conditional(&c, &mut rng).unwrap();
            assert!(p.iter().all(|v| v.is_finite()));
            assert!(p.dot(&c.omega) >= 30.0 - 1e-9 * 31.0);
        }
    }

    #[test]
    fn underflowed_margin_is_rejected() {
        let g = standard2();
        let c = g.tail_probability(&vec2(1.0, 0.0), 40.0).unwrap();
        assert!(!c.in_mixture_support());
        let mut rng = stream(31, 0, 0);
        assert!(matches!(
            g.sample_conditional(&c, &mut rng),
            Err(GaussError::TailUnderflow { .. })
        ));
    }

    #[test]
    fn logpdf_examples() {
        let g = standard2();
        let at_mean = g.nominal_logpdf(&vec2(0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(at_mean, -(2.0 / 2.0) * (2.0 * std::f64::consts::PI).ln(), epsilon = 1e-13);
        let displaced = g.nominal_logpdf(&vec2(1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(displaced, at_mean - 0.5, epsilon = 1e-13);
    }

    #[test]
    fn logpdf_differences_match_quadratic_form_oracle() {
        let mut sigma = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.5, 0.0, 0.0, 0.0, 0.0]);
        sigma[(2, 2)] = 0.0;
        let mu = DVector::from_vec(vec![0.5, -1.0, 0.25]);
        let g = NominalGaussian::new(mu.clone(), sigma.clone(), Some(2)).unwrap();
        let pinv = {
            let top = sigma.view((0, 0), (2, 2)).into_owned();
            top.try_inverse().unwrap()
        };
        let mut rng = stream(37, 0, 0);
        for _ in 0..20 {
            let mut p = g.sample_nominal(&mut rng);
            let mut q = g.sample_nominal(&mut rng);
            p[2] = mu[2];
            q[2] = mu[2];
            let quad = |v: &DVector<f64>| {
                let d = DVector::from_vec(vec![v[0] - mu[0], v[1] - mu[1]]);
                (&pinv * &d).dot(&d)
            };
            let diff = g.nominal_logpdf(&p).unwrap() - g.nominal_logpdf(&q).unwrap();
            assert_abs_diff_eq!(diff, -0.5 * (quad(&p) - quad(&q)), epsilon = 1e-10);
        }
    }

    #[test]
    fn logpdf_rejects_slack_deviation() {
        let mut sigma = DMatrix::identity(2, 2);
        sigma[(1, 1)] = 0.0;
        let g = NominalGaussian::new(vec2(0.0, 1.0), sigma, Some(1)).unwrap();
        assert!(matches!(
            g.nominal_logpdf(&vec2(0.0, 1.1)),
            Err(GaussError::SlackDeviation(_))
        ));
    }

    #[test]
    fn sqrt_reproduces_covariance() {
        let sigma =
            DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let g = NominalGaussian::new(DVector::zeros(3), sigma.clone(), None).unwrap();
        let reconstructed = g.sigma_sqrt() * g.sigma_sqrt().transpose();
        assert!((reconstructed - &sigma).norm() <= 1e-10 * (1.0 + sigma.norm()));
    }
}
