//! Central finite-difference gradient checking.
//!
//! The check only uses forward evaluations of the closure, so it is
//! independent of every backward rule it validates.

use crate::graph::{Graph, Var};
use crate::matrix::{Matrix, Real};
use crate::param::ParamStore;

#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_rel_error: Real,
    /// Location of the worst element, e.g. `param gru.w[3]` or `input 0[5]`.
    pub worst: String,
    pub checked: usize,
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: Real, numeric: Real, floor: Real) -> Real {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares backward-pass gradients of a scalar loss against central
/// differences with step `h`, over every parameter in `store` and every
/// element of `inputs`.
pub fn check<F>(store: &mut ParamStore, inputs: &[Matrix], h: Real, floor: Real, f: F) -> GradCheck
where
    F: Fn(&mut Graph, &ParamStore, &[Var]) -> Var,
{
    let eval = |store: &ParamStore, inputs: &[Matrix]| -> Real {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|m| g.constant(m.clone())).collect();
        let out = f(&mut g, store, &vars);
        g.value(out).scalar_value()
    };

    store.zero_grad();
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|m| g.input(m.clone())).collect();
    let out = f(&mut g, store, &vars);
    g.backward(out).expect("loss must be a differentiable scalar");
    store.accumulate_grads(&g);
    let input_grads: Vec<Matrix> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, m)| g.grad(v).cloned().unwrap_or_else(|| Matrix::zeros(m.rows(), m.cols())))
        .collect();

    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    let mut note = |err: Real, loc: String| {
        report.checked += 1;
        if err > report.max_rel_error || report.worst.is_empty() {
            report.max_rel_error = err.max(report.max_rel_error);
            report.worst = loc;
        }
    };

    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let analytic = store.grad(id).clone();
        let name = store.get(id).name.clone();
        for k in 0..analytic.len() {
            let orig = store.value(id).data()[k];
            store.value_mut(id).data_mut()[k] = orig + h;
            let up = eval(store, inputs);
            store.value_mut(id).data_mut()[k] = orig - h;
            let down = eval(store, inputs);
            store.value_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            note(
                relative_error(analytic.data()[k], numeric, floor),
                format!("param {name}[{k}]"),
            );
        }
    }

    let mut work: Vec<Matrix> = inputs.to_vec();
    for (i, grad) in input_grads.iter().enumerate() {
        for k in 0..grad.len() {
            let orig = work[i].data()[k];
            work[i].data_mut()[k] = orig + h;
            let up = eval(store, &work);
            work[i].data_mut()[k] = orig - h;
            let down = eval(store, &work);
            work[i].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            note(
                relative_error(grad.data()[k], numeric, floor),
                format!("input {i}[{k}]"),
            );
        }
    }
    report
}
