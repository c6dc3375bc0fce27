//! Finite-difference gradient checking. Runs in double precision: a model
//! forward pass is re-evaluated with each parameter entry perturbed by
//! +-epsilon and the central difference is compared against the analytic
//! gradient from the tape.

use crate::array::Array;

/// Result of checking one parameter entry.
#[derive(Clone, Debug)]
pub struct GradCheckEntry {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

/// Summary over all checked entries.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: Option<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

/// Relative error with an absolute floor so near-zero gradients compare
/// sanely: |a - n| / max(|n|, |a|, floor).
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(analytic.abs()).max(floor)
}

/// Check every entry of every named parameter. `loss` must evaluate the
/// scalar objective from the parameter set; `grads` holds the analytic
/// gradient for each parameter in the same order.
pub fn grad_check_params<F>(
    params: &mut [(String, Array<f64>)],
    grads: &[Array<f64>],
    epsilon: f64,
    floor: f64,
    mut loss: F,
) -> GradCheckReport
where
    F: FnMut(&[(String, Array<f64>)]) -> f64,
{
    assert_eq!(params.len(), grads.len());
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    for p in 0..params.len() {
        for i in 0..params[p].1.len() {
            let orig = params[p].1.data()[i];
            params[p].1.data_mut()[i] = orig + epsilon;
            let plus = loss(params);
            params[p].1.data_mut()[i] = orig - epsilon;
            let minus = loss(params);
            params[p].1.data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let analytic = grads[p].data()[i];
            let rel = relative_error(analytic, numeric, floor);
            report.checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some(GradCheckEntry {
                    name: params[p].0.clone(),
                    index: i,
                    analytic,
                    numeric,
                    rel_error: rel,
                });
            }
        }
    }
    report
}
