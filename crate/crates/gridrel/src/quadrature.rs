//! Independent 2-D oracle: failure probability and mixture variance by
//! polar quadrature.
//!
//! Working in the whitened plane, the failure region of a polytope whose
//! interior contains the mean is `{r d(theta) : r > rho(theta)}` with
//! `rho(theta) = min_i beta_i / (d . omega_bar_i)` over rows facing the
//! direction. The radial integral of the standard normal is exact per
//! direction, so only the angular integral is done numerically (adaptive
//! Simpson). This path shares nothing with the samplers it cross-checks.

use thiserror::Error;

use crate::gaussian::HalfspaceConstraint;

#[derive(Debug, Error)]
pub enum QuadratureError {
    #[error("quadrature oracle requires a 2-dimensional whitened space")]
    NotPlanar,
    #[error("constraint {0} has non-positive margin; the mean is not interior")]
    MeanNotInterior(usize),
    #[error("mixture density vanishes on a failure region of positive mass")]
    UnboundedVariance,
}

/// Whitened row: unit normal direction and positive margin.
struct Row {
    dir: [f64; 2],
    margin: f64,
    /// `x_i / Pi_i` contribution to the mixture denominator.
    denom_rate: f64,
}

fn whiten(
    constraints: &[HalfspaceConstraint],
    x: Option<&[f64]>,
) -> Result<Vec<Row>, QuadratureError> {
    let mut rows = Vec::with_capacity(constraints.len());
    for (i, c) in constraints.iter().enumerate() {
        if c.is_degenerate() && c.tail_prob == 0.0 {
            continue; // never violated
        }
        let bar = c.omega_bar.as_ref().ok_or(QuadratureError::MeanNotInterior(i))?;
        if bar.len() != 2 {
            return Err(QuadratureError::NotPlanar);
        }
        if !(c.beta > 0.0) {
            return Err(QuadratureError::MeanNotInterior(i));
        }
        let denom_rate = match x {
            Some(x) if c.in_mixture_support() => x[i] / c.tail_prob,
            _ => 0.0,
        };
        rows.push(Row { dir: [bar[0], bar[1]], margin: c.beta, denom_rate });
    }
    Ok(rows)
}

/// Distance from the origin to the boundary along direction `d`;
/// infinite when no face looks that way.
fn boundary_radius(rows: &[Row], d: [f64; 2]) -> f64 {
    let mut r = f64::INFINITY;
    for row in rows {
        let proj = row.dir[0] * d[0] + row.dir[1] * d[1];
        if proj > 0.0 {
            r = r.min(row.margin / proj);
        }
    }
    r
}

/// Adaptive Simpson on smooth panels seeded uniformly around the circle.
fn angular_integral(f: &dyn Fn(f64) -> f64, panels: usize) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let h = two_pi / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let a = k as f64 * h;
        let b = a + h;
        let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
        total += simpson_rec(f, a, b, fa, fm, fb, 1e-14, 24);
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_rec(f, a, m, fa, flm, fm, tol / 2.0, depth - 1)
            + simpson_rec(f, m, b, fm, frm, fb, tol / 2.0, depth - 1)
    }
}

/// Failure probability `P(p not in P)` for a 2-D whitened polytope whose
/// interior contains the mean. Absolute target ~1e-12.
pub fn failure_probability(
    constraints: &[HalfspaceConstraint],
) -> Result<f64, QuadratureError> {
    let rows = whiten(constraints, None)?;
    let panels = (4 * rows.len()).clamp(32, 8192);
    let integrand = move |theta: f64| {
        let d = [theta.sin(), theta.cos()];
        let r = boundary_radius(&rows, d);
        if r.is_finite() {
            (-0.5 * r * r).exp()
        } else {
            0.0
        }
    };
    Ok(angular_integral(&integrand, panels) / (2.0 * std::f64::consts::PI))
}

/// Variance functional `V(x)` of the mixture importance sampler,
/// evaluated by quadrature:
/// `V(x) = int_F v(p) / S(p, x) dp - Pi^2` with
/// `S(p, x) = sum_i (x_i / Pi_i) 1[viol_i]`.
pub fn mixture_variance(
    constraints: &[HalfspaceConstraint],
    x: &[f64],
) -> Result<f64, QuadratureError> {
    let rows = whiten(constraints, Some(x))?;
    let panels = (4 * rows.len()).clamp(32, 8192);

    // Per direction: thresholds where each constraint starts to be
    // violated; between consecutive thresholds the violated set (hence S)
    // is constant and the radial integral is exact.
    let radial = move |theta: f64| -> Result<f64, QuadratureError> {
        let d = [theta.sin(), theta.cos()];
        let mut thresholds: Vec<(f64, f64)> = rows
            .iter()
            .filter_map(|row| {
                let proj = row.dir[0] * d[0] + row.dir[1] * d[1];
                (proj > 0.0).then(|| (row.margin / proj, row.denom_rate))
            })
            .collect();
        if thresholds.is_empty() {
            return Ok(0.0);
        }
        thresholds.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut total = 0.0;
        let mut s = 0.0;
        for (k, &(t, rate)) in thresholds.iter().enumerate() {
            s += rate;
            let upper = thresholds.get(k + 1).map_or(f64::INFINITY, |n| n.0);
            let mass = (-0.5 * t * t).exp()
                - if upper.is_finite() { (-0.5 * upper * upper).exp() } else { 0.0 };
            if mass > 0.0 {
                if s <= 0.0 {
                    return Err(QuadratureError::UnboundedVariance);
                }
                total += mass / s;
            }
        }
        Ok(total)
    };

    // probe a few directions for the unbounded case before integrating
    for k in 0..panels {
        radial(2.0 * std::f64::consts::PI * k as f64 / panels as f64)?;
    }
    let integrand = move |theta: f64| radial(theta).unwrap_or(f64::INFINITY);
    let moment = angular_integral(&integrand, panels) / (2.0 * std::f64::consts::PI);
    let pi = failure_probability(constraints)?;
    Ok(moment - pi * pi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::NominalGaussian;
    use crate::normal;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    fn constraint(g: &NominalGaussian, w: [f64; 2], b: f64) -> HalfspaceConstraint {
        g.tail_probability(&DVector::from_vec(w.to_vec()), b).unwrap()
    }

    #[test]
    fn half_plane_tail() {
        let g = NominalGaussian::standard(2);
        let cs = vec![constraint(&g, [1.0, 0.0], 2.0)];
        let pi = failure_probability(&cs).unwrap();
        assert_abs_diff_eq!(pi, normal::ccdf(2.0), epsilon = 1e-12);
    }

    #[test]
    fn unit_square() {
        // |p1| <= 1, |p2| <= 1: Pi = 1 - (1 - 2*ccdf(1))^2
        let g = NominalGaussian::standard(2);
        let cs = vec![
            constraint(&g, [1.0, 0.0], 1.0),
            constraint(&g, [-1.0, 0.0], 1.0),
            constraint(&g, [0.0, 1.0], 1.0),
            constraint(&g, [0.0, -1.0], 1.0),
        ];
        let inside = 1.0 - 2.0 * normal::ccdf(1.0);
        assert_abs_diff_eq!(
            failure_probability(&cs).unwrap(),
            1.0 - inside * inside,
            epsilon = 1e-11
        );
    }

    #[test]
    fn two_orthogonal_constraints_inclusion_exclusion() {
        let g = NominalGaussian::standard(2);
        let cs = vec![constraint(&g, [1.0, 0.0], 2.0), constraint(&g, [0.0, 1.0], 2.0)];
        let q = normal::ccdf(2.0);
        assert_abs_diff_eq!(
            failure_probability(&cs).unwrap(),
            2.0 * q - q * q,
            epsilon = 1e-12
        );
    }

    #[test]
    fn variance_matches_orthant_closed_form() {
        // Independent coordinates: the three violated-set regions have
        // product-form masses, so V(x) has a closed form.
        let g = NominalGaussian::standard(2);
        let cs = vec![constraint(&g, [1.0, 0.0], 2.0), constraint(&g, [0.0, 1.0], 2.0)];
        let q = normal::ccdf(2.0);
        let pi = 2.0 * q - q * q;
        for x in [[0.5, 0.5], [0.3, 0.7], [0.9, 0.1]] {
            let moment = q * (1.0 - q) * (q / x[0])
                + q * (1.0 - q) * (q / x[1])
                + q * q / (x[0] / q + x[1] / q);
            let oracle = moment - pi * pi;
            let got = mixture_variance(&cs, &x).unwrap();
            assert_abs_diff_eq!(got, oracle, epsilon = 1e-10 * (1.0 + oracle.abs()));
        }
    }

    #[test]
    fn variance_vanishes_for_single_constraint() {
        let g = NominalGaussian::standard(2);
        let cs = vec![constraint(&g, [1.0, 0.0], 2.0)];
        let v = mixture_variance(&cs, &[1.0]).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn mean_outside_interior_is_rejected() {
        let g = NominalGaussian::standard(2);
        let cs = vec![constraint(&g, [1.0, 0.0], -0.5)];
        assert!(matches!(
            failure_probability(&cs),
            Err(QuadratureError::MeanNotInterior(0))
        ));
    }
}

