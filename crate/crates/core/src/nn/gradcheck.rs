//! Central finite-difference verification of analytic gradients.
//!
//! Checks run in f64: the tolerances assume double precision, and every
//! layer and loss is generic so the same code path is exercised.

use rand::Rng;

use crate::num::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub max_rel_err: f64,
    pub worst_label: String,
    pub checked: usize,
}

impl FdReport {
    fn none() -> Self {
        FdReport { max_rel_err: 0.0, worst_label: String::new(), checked: 0 }
    }

    fn absorb(&mut self, label: &str, index: usize, rel: f64) {
        self.checked += 1;
        if rel > self.max_rel_err {
            self.max_rel_err = rel;
            self.worst_label = format!("{label}[{index}]");
        }
    }

    pub fn merge(&mut self, other: FdReport) {
        self.checked += other.checked;
        if other.max_rel_err > self.max_rel_err {
            self.max_rel_err = other.max_rel_err;
            self.worst_label = other.worst_label;
        }
    }
}

/// Relative error with a unit floor so tiny gradients compare absolutely.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Verifies `analytic` as the gradient of the scalar function `f` at `x`
/// by central differences, perturbing every coordinate.
pub fn fd_check_vector<F: Real>(
    label: &str,
    x: &[F],
    analytic: &[F],
    eps: f64,
    mut f: impl FnMut(&[F]) -> F,
) -> FdReport {
    assert_eq!(x.len(), analytic.len(), "gradient length mismatch");
    let mut probe = x.to_vec();
    let e = crate::num::real::<F>(eps);
    let mut report = FdReport::none();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + e;
        let plus = f(&probe).to_f64c();
        probe[i] = orig - e;
        let minus = f(&probe).to_f64c();
        probe[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        report.absorb(label, i, rel_error(analytic[i].to_f64c(), numeric));
    }
    report
}

/// Anything exposing named parameters with gradient buffers.
pub trait ParamVisit<F> {
    fn params(&mut self, f: &mut dyn FnMut(&str, &mut [F], &mut [F]));
}

impl<F: Real> ParamVisit<F> for super::model::VerificationModel<F> {
    fn params(&mut self, f: &mut dyn FnMut(&str, &mut [F], &mut [F])) {
        self.for_each_param(|n, p, g| f(n, p, g));
    }
}

impl<F: Real> ParamVisit<F> for super::model::PatternModel<F> {
    fn params(&mut self, f: &mut dyn FnMut(&str, &mut [F], &mut [F])) {
        self.for_each_param(|n, p, g| f(n, p, g));
    }
}

fn set_param<F: Real, M: ParamVisit<F>>(model: &mut M, target: &str, idx: usize, value: F) {
    model.params(&mut |name, p, _| {
        if name == target {
            p[idx] = value;
        }
    });
}

fn get_param<F: Real, M: ParamVisit<F>>(model: &mut M, target: &str, idx: usize) -> F {
    let mut out = F::zero();
    model.params(&mut |name, p, _| {
        if name == target {
            out = p[idx];
        }
    });
    out
}

/// Checks model parameter gradients against central differences.
///
/// `run(model, true)` must zero gradients, run forward + backward, and
/// return the loss; `run(model, false)` must return the same loss without
/// touching gradients. Large tensors are subsampled to `samples_per_param`
/// coordinates.
pub fn check_model_gradients<F: Real, M: ParamVisit<F>>(
    model: &mut M,
    mut run: impl FnMut(&mut M, bool) -> F,
    eps: f64,
    samples_per_param: usize,
    rng: &mut impl Rng,
) -> FdReport {
    run(model, true);
    let mut snapshot: Vec<(String, Vec<F>)> = Vec::new();
    model.params(&mut |name, _, g| snapshot.push((name.to_string(), g.to_vec())));
    let e = crate::num::real::<F>(eps);
    let mut report = FdReport::none();
    for (name, grads) in &snapshot {
        let n = grads.len();
        let indices: Vec<usize> = if n <= samples_per_param {
            (0..n).collect()
        } else {
            let mut picked = std::collections::BTreeSet::new();
            while picked.len() < samples_per_param {
                picked.insert(rng.random_range(0..n));
            }
            picked.into_iter().collect()
        };
        for i in indices {
            let orig = get_param(model, name, i);
            set_param(model, name, i, orig + e);
            let plus = run(model, false).to_f64c();
            set_param(model, name, i, orig - e);
            let minus = run(model, false).to_f64c();
            set_param(model, name, i, orig);
            let numeric = (plus - minus) / (2.0 * eps);
            report.absorb(name, i, rel_error(grads[i].to_f64c(), numeric));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rel_error_floors_at_one() {
        assert_eq!(rel_error(0.0, 1e-6), 1e-6);
        assert_eq!(rel_error(2.0, 1.0), 0.5);
    }

    #[test]
    fn quadratic_gradient_verifies() {
        // f(x) = sum x_i^2, grad = 2x.
        let x = vec![0.3f64, -1.2, 2.0];
        let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let report = fd_check_vector("x", &x, &g, 1e-3, |p| p.iter().map(|v| v * v).sum());
        assert!(report.max_rel_err < 1e-9, "{report:?}");
        assert_eq!(report.checked, 3);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let x = vec![1.0f64];
        let report = fd_check_vector("x", &x, &[3.0], 1e-3, |p| p[0] * p[0]);
        assert!(report.max_rel_err > 0.3, "{report:?}");
    }
}
