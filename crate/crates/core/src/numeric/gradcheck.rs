use super::graph::{Graph, ParamStore, Var};
use crate::error::Result;

const SCALE_FLOOR: f64 = 1e-6;

/// Compares analytic gradients from [`Graph::backward`] against central
/// differences `(f(θ+ε) − f(θ−ε)) / 2ε`, element by element.
///
/// The error of one parameter tensor is
/// `max|analytic − numeric| / max(max|analytic|, max|numeric|, 1e-6)`;
/// the function returns the largest such error over all parameters.
///
/// The floor keeps a tensor whose true gradient is exactly zero from being
/// judged by the round-off of the difference quotient, which is about
/// `1e-16·|f| / ε`.
pub fn finite_difference_check<F>(params: &ParamStore, eps: f64, build: F) -> Result<f64>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let analytic = {
        let mut g = Graph::new(params);
        let out = build(&mut g)?;
        g.backward(out)?
    };
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::new(store);
        let out = build(&mut g)?;
        Ok(g.value(out).item())
    };

    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for id in params.ids() {
        let n = params.get(id).len();
        let mut numeric = Vec::with_capacity(n);
        for i in 0..n {
            let orig = probe.get(id).data()[i];
            probe.get_mut(id).data_mut()[i] = orig + eps;
            let up = eval(&probe)?;
            probe.get_mut(id).data_mut()[i] = orig - eps;
            let down = eval(&probe)?;
            probe.get_mut(id).data_mut()[i] = orig;
            numeric.push((up - down) / (2.0 * eps));
        }
        let zeros = vec![0.0; n];
        let exact = analytic.get(id).map_or(&zeros[..], |t| t.data());
        let diff = exact
            .iter()
            .zip(&numeric)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        let scale = exact
            .iter()
            .chain(&numeric)
            .fold(SCALE_FLOOR, |m, v| m.max(v.abs()));
        worst = worst.max(diff / scale);
    }
    Ok(worst)
}
