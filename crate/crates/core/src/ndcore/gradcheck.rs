use super::{Graph, NdError, ParameterStore, Var};

/// Compares analytic gradients against central differences.
///
/// `loss` builds the scalar loss on a fresh graph bound to the store.
/// Returns the largest `|analytic - numeric| / max(1, |analytic|)` over
/// every coordinate of every parameter.
pub fn finite_diff_check<F>(
    store: &ParameterStore<f64>,
    epsilon: f64,
    loss: F,
) -> Result<f64, NdError>
where
    F: Fn(&mut Graph<'_, f64>) -> Result<Var, NdError>,
{
    let analytic = {
        let mut g = Graph::new(store);
        let l = loss(&mut g)?;
        g.backward(l)?
    };

    let eval = |s: &ParameterStore<f64>| -> Result<f64, NdError> {
        let mut g = Graph::new(s);
        let l = loss(&mut g)?;
        Ok(g.value(l).item())
    };

    let mut probe = store.clone();
    let mut worst = 0.0f64;
    let names: Vec<String> = store.names().cloned().collect();
    for name in &names {
        let grad = analytic.get(name).expect("gradient per parameter");
        for k in 0..grad.numel() {
            let orig = store.get(name).expect("present").data()[k];
            probe.get_mut(name).expect("present").data_mut()[k] = orig + epsilon;
            let plus = eval(&probe)?;
            probe.get_mut(name).expect("present").data_mut()[k] = orig - epsilon;
            let minus = eval(&probe)?;
            probe.get_mut(name).expect("present").data_mut()[k] = orig;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = grad.data()[k];
            let err = (a - numeric).abs() / a.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
