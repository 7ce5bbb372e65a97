//! Central-difference gradient checking.
//!
//! [`grad_check`] compares the analytic gradient of a scalar-valued model
//! function against symmetric finite differences `(f(w+ε) − f(w−ε)) / 2ε`,
//! component by component. When the parameter space is large, a seeded
//! subsample of components is checked so the cost stays bounded while staying
//! reproducible. The reported figure for each component is
//! `|analytic − numeric| / max(1, |numeric|)`, i.e. absolute error for small
//! gradients and relative error for large ones.

use super::*;
use crate::rng::{stream_rng, DOMAIN_GRAD_CHECK};

/// Outcome of a gradient check.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    /// Worst error over all checked components.
    pub max_rel_error: f64,
    /// Number of components actually compared.
    pub components_checked: usize,
}

/// Verifies analytic gradients of `f` with respect to `params`.
///
/// `f` must be deterministic: it is evaluated once on a recording graph for
/// the analytic gradients and twice per checked component on inference
/// graphs for the numeric ones. At most `max_components` components are
/// checked, drawn without replacement from all trainable components using
/// `seed`; if the total is smaller, every component is checked. Parameter
/// values are restored exactly after perturbation.
pub fn grad_check<F>(
    f: F,
    params: &[Parameter],
    eps: f64,
    max_components: usize,
    seed: u64,
) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&Graph) -> Result<Tensor, TensorError>,
{
    if !(eps.is_finite() && eps > 0.0) {
        return Err(TensorError::InvalidValue {
            op: "grad_check",
            details: alloc::format!("eps {eps} must be finite and > 0"),
        });
    }
    let graph = Graph::recording();
    let loss = f(&graph)?;
    let grads = graph.backward(&loss)?;

    let mut universe: Vec<(usize, usize)> = Vec::new();
    for (pi, p) in params.iter().enumerate() {
        if p.is_trainable() {
            for c in 0..p.numel() {
                universe.push((pi, c));
            }
        }
    }
    let chosen: Vec<(usize, usize)> = if universe.len() <= max_components {
        universe
    } else {
        let mut rng = stream_rng(seed, DOMAIN_GRAD_CHECK, 0);
        rand::seq::index::sample(&mut rng, universe.len(), max_components)
            .iter()
            .map(|i| universe[i])
            .collect()
    };

    let mut max_rel_error = 0.0f64;
    for &(pi, c) in &chosen {
        let p = &params[pi];
        let original = p.component(c);
        p.set_component(c, original + eps);
        let plus = f(&Graph::inference())?.item()?;
        p.set_component(c, original - eps);
        let minus = f(&Graph::inference())?.item()?;
        p.set_component(c, original);
        let numeric = (plus - minus) / (2.0 * eps);
        let name = p.name();
        let analytic = grads
            .get(&name)
            .map(|(_, data)| data[c])
            .unwrap_or(0.0);
        let err = (analytic - numeric).abs() / numeric.abs().max(1.0);
        if err > max_rel_error {
            max_rel_error = err;
        }
    }
    Ok(GradCheckReport {
        max_rel_error,
        components_checked: chosen.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// least-squares toy: loss = Σ (W·x − t)², whose analytic gradient is
    /// simple enough to trust by inspection.
    fn quadratic_loss(w: &Parameter, g: &Graph) -> Result<Tensor, TensorError> {
        let x = Tensor::from_vec(&[2, 1], vec![3.0, -1.5]).unwrap();
        let t = Tensor::from_vec(&[2, 1], vec![0.5, 2.0]).unwrap();
        let d = g.leaf(w)?.matmul(&x)?.sub(&t)?;
        d.mul(&d)?.sum_all()
    }

    #[test]
    fn quadratic_gradient_matches_central_differences() {
        let w = Parameter::new("w", &[2, 2], vec![0.3, -0.7, 1.1, 0.2]).unwrap();
        let report = grad_check(|g| quadratic_loss(&w, g), &[w.clone()], 1e-5, 64, 0).unwrap();
        assert_eq!(report.components_checked, 4);
        assert!(
            report.max_rel_error < 1e-9,
            "quadratic check should be near machine precision, got {}",
            report.max_rel_error
        );
    }

    #[test]
    fn composite_network_gradient_is_tight() {
        // Two-layer network exercising matmul, bias, relu, layer norm,
        // softmax cross-entropy: the ops whose VJPs carry the most hand math.
        let w1 = Parameter::new("w1", &[4, 6], (0..24).map(|i| 0.1 * (i as f64) - 1.0).collect())
            .unwrap();
        let b1 = Parameter::new("b1", &[6], vec![0.05; 6]).unwrap();
        let gain = Parameter::new("gain", &[6], vec![1.0, 0.9, 1.1, 1.0, 0.8, 1.2]).unwrap();
        let shift = Parameter::new("shift", &[6], vec![0.0, 0.1, -0.1, 0.0, 0.2, -0.2]).unwrap();
        let w2 = Parameter::new("w2", &[6, 3], (0..18).map(|i| 0.07 * (i as f64) - 0.5).collect())
            .unwrap();
        let params = [w1, b1, gain, shift, w2];
        let f = |g: &Graph| -> Result<Tensor, TensorError> {
            let x = Tensor::from_vec(
                &[3, 4],
                vec![
                    0.2, -0.4, 0.8, 0.1, //
                    -0.3, 0.5, -0.9, 0.6, //
                    0.7, 0.0, 0.3, -0.2,
                ],
            )?;
            let h = x
                .matmul(&g.leaf(&params[0])?)?
                .add_bias(&g.leaf(&params[1])?)?
                .relu()?
                .layer_norm(&g.leaf(&params[2])?, &g.leaf(&params[3])?, 1e-5)?;
            h.matmul(&g.leaf(&params[4])?)?
                .softmax_cross_entropy(&[0, 2, 1])
        };
        let report = grad_check(f, &params, 1e-5, 1024, 7).unwrap();
        assert_eq!(report.components_checked, 24 + 6 + 6 + 6 + 18);
        assert!(
            report.max_rel_error < 1e-7,
            "composite network gradient error too large: {}",
            report.max_rel_error
        );
    }

    #[test]
    fn unused_parameter_checks_clean() {
        let w = Parameter::new("w", &[2, 2], vec![0.3, -0.7, 1.1, 0.2]).unwrap();
        let unused = Parameter::new("unused", &[3], vec![1.0, 2.0, 3.0]).unwrap();
        let report = grad_check(
            |g| {
                // Bind but never use: analytic and numeric agree at zero.
                let _ = g.leaf(&unused)?;
                quadratic_loss(&w, g)
            },
            &[w.clone(), unused.clone()],
            1e-5,
            64,
            0,
        )
        .unwrap();
        assert_eq!(report.components_checked, 7);
        assert!(report.max_rel_error < 1e-9);
    }

    #[test]
    fn subsampling_is_bounded_and_deterministic() {
        let w = Parameter::new("w", &[8, 8], (0..64).map(|i| (i as f64) * 0.01).collect()).unwrap();
        let f = |g: &Graph| -> Result<Tensor, TensorError> {
            let x = Tensor::from_vec(&[8, 1], (0..8).map(|i| 0.1 * i as f64).collect())?;
            let y = g.leaf(&w)?.matmul(&x)?;
            y.mul(&y)?.sum_all()
        };
        let a = grad_check(f, &[w.clone()], 1e-5, 10, 42).unwrap();
        let b = grad_check(f, &[w.clone()], 1e-5, 10, 42).unwrap();
        assert_eq!(a.components_checked, 10);
        assert_eq!(b.components_checked, 10);
        assert_eq!(a.max_rel_error, b.max_rel_error);
    }

    #[test]
    fn perturbation_restores_values_exactly() {
        let w = Parameter::new("w", &[2], vec![0.123456789, -9.87654321]).unwrap();
        let before = w.to_tensor().data().to_vec();
        let f = |g: &Graph| -> Result<Tensor, TensorError> {
            g.leaf(&w)?.mul(&g.leaf(&w)?)?.sum_all()
        };
        let _ = grad_check(f, &[w.clone()], 1e-4, 64, 0).unwrap();
        assert_eq!(w.to_tensor().data(), before.as_slice());
    }

    #[test]
    fn rejects_bad_eps() {
        let w = Parameter::new("w", &[1], vec![1.0]).unwrap();
        let f = |g: &Graph| g.leaf(&w)?.sum_all();
        assert!(matches!(
            grad_check(f, &[w.clone()], 0.0, 4, 0),
            Err(TensorError::InvalidValue { .. })
        ));
    }
}
