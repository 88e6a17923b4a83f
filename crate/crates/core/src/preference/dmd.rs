//! Distribution-matching gradient estimator.

use crate::error::{Error, Result};

/// A generator output `x = G(theta, z)` and its Jacobian `dG/dtheta`, stored
/// as one row per output coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct DmdSample {
    pub x: Vec<f64>,
    pub jacobian: Vec<Vec<f64>>,
}

/// Monte Carlo estimate of `E[(dG/dtheta)^T (s_fake(x, t) - s_real(x, t))]`
/// over `samples`.
pub fn dmd_gradient<F, G>(samples: &[DmdSample], t: f64, s_fake: F, s_real: G) -> Result<Vec<f64>>
where
    F: Fn(&[f64], f64) -> Vec<f64>,
    G: Fn(&[f64], f64) -> Vec<f64>,
{
    let first = samples
        .first()
        .ok_or_else(|| Error::domain("gradient estimate needs at least one sample"))?;
    let p = first.jacobian.first().map_or(0, Vec::len);
    let mut grad = vec![0.0; p];
    for s in samples {
        if s.jacobian.len() != s.x.len() || s.jacobian.iter().any(|row| row.len() != p) {
            return Err(Error::shape(
                format!("{} x {p} Jacobian", s.x.len()),
                format!("{} rows", s.jacobian.len()),
            ));
        }
        let fake = s_fake(&s.x, t);
        let real = s_real(&s.x, t);
        for ((row, a), b) in s.jacobian.iter().zip(&fake).zip(&real) {
            let diff = a - b;
            for (g, j) in grad.iter_mut().zip(row) {
                *g += diff * j;
            }
        }
    }
    let n = samples.len() as f64;
    for g in &mut grad {
        *g /= n;
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::non_finite("distribution-matching gradient"));
    }
    Ok(grad)
}

/// Score of `N(0, sigma^2 I)`: `x -> -x / sigma^2`.
pub fn gaussian_score(sigma: f64) -> impl Fn(&[f64], f64) -> Vec<f64> {
    let inv = 1.0 / (sigma * sigma);
    move |x, _t| x.iter().map(|v| -v * inv).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, standard_normal};

    fn linear_samples(theta: f64, n: usize) -> Vec<DmdSample> {
        let mut rng = seeded(3);
        (0..n)
            .map(|_| {
                let z = standard_normal(&mut rng);
                DmdSample { x: vec![theta * z], jacobian: vec![vec![z]] }
            })
            .collect()
    }

    #[test]
    fn equal_scores_give_zero() {
        let s = linear_samples(1.3, 100);
        let g = dmd_gradient(&s, 0.5, gaussian_score(2.0), gaussian_score(2.0)).unwrap();
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn linear_in_score_difference() {
        let s = linear_samples(0.7, 200);
        let g1 = dmd_gradient(&s, 0.0, gaussian_score(0.7), gaussian_score(1.0)).unwrap();
        let doubled = |x: &[f64], t| gaussian_score(0.7)(x, t).iter().zip(gaussian_score(1.0)(x, t)).map(|(a, b)| 2.0 * a - b).collect::<Vec<_>>();
        let g2 = dmd_gradient(&s, 0.0, doubled, gaussian_score(1.0)).unwrap();
        assert!((g2[0] - 2.0 * g1[0]).abs() < 1e-9);
    }

    #[test]
    fn gaussian_linear_generator_matches_analytic() {
        // Fake N(0, theta^2), real N(0, 1): expectation is theta - 1/theta.
        let theta = 1.6;
        let s = linear_samples(theta, 200_000);
        let g = dmd_gradient(&s, 0.0, gaussian_score(theta), gaussian_score(1.0)).unwrap();
        let expect = theta - 1.0 / theta;
        assert!(((g[0] - expect) / expect).abs() < 0.02);
    }

    #[test]
    fn shape_errors() {
        assert!(dmd_gradient(&[], 0.0, gaussian_score(1.0), gaussian_score(1.0)).is_err());
        let bad = vec![DmdSample { x: vec![1.0, 2.0], jacobian: vec![vec![1.0]] }];
        assert!(dmd_gradient(&bad, 0.0, gaussian_score(1.0), gaussian_score(1.0)).is_err());
    }
}
