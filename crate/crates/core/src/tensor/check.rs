use super::{Graph, Tensor, TensorError, Var};

fn evaluate<F, E>(f: &F, x: &Tensor) -> std::result::Result<f64, E>
where
    F: Fn(&mut Graph, Var) -> std::result::Result<Var, E>,
    E: From<TensorError>,
{
    let mut g = Graph::new();
    let xv = g.constant(x.clone())?;
    let y = f(&mut g, xv)?;
    let value = g.value(y);
    let v = value
        .item()
        .ok_or_else(|| TensorError::NotScalar(value.shape().to_vec()))?;
    if !v.is_finite() {
        return Err(TensorError::NonFinite { op: "gradient_check" }.into());
    }
    Ok(v)
}

/// Central-difference estimate of the gradient of scalar `f` at `x`.
pub fn central_difference<F, E>(f: &F, x: &Tensor, step: f64) -> std::result::Result<Vec<f64>, E>
where
    F: Fn(&mut Graph, Var) -> std::result::Result<Var, E>,
    E: From<TensorError>,
{
    let mut probe = x.clone();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let plus = evaluate(f, &probe)?;
        probe.data_mut()[i] = orig - step;
        let minus = evaluate(f, &probe)?;
        probe.data_mut()[i] = orig;
        out.push((plus - minus) / (2.0 * step));
    }
    Ok(out)
}

/// Compares the tape gradient of `f` at `x` with central differences.
///
/// Returns `max_i |a_i - n_i| / max(1e-8, |a_i| + |n_i|)`.
pub fn gradient_check<F, E>(f: F, x: &Tensor, step: f64) -> std::result::Result<f64, E>
where
    F: Fn(&mut Graph, Var) -> std::result::Result<Var, E>,
    E: From<TensorError>,
{
    if !(step > 0.0) {
        return Err(TensorError::Invalid {
            op: "gradient_check",
            msg: format!("step must be positive, got {step}"),
        }
        .into());
    }
    let mut g = Graph::new();
    let xv = g.param(x.clone())?;
    let y = f(&mut g, xv)?;
    let grads = g.backward(y)?;
    let analytic = grads.get(xv).expect("leaf requires grad");
    let numeric = central_difference(&f, x, step)?;

    let mut worst = 0.0f64;
    for (a, n) in analytic.data().iter().zip(&numeric) {
        let err = (a - n).abs() / (a.abs() + n.abs()).max(1e-8);
        if !err.is_finite() {
            return Err(TensorError::NonFinite { op: "gradient_check" }.into());
        }
        worst = worst.max(err);
    }
    Ok(worst)
}
