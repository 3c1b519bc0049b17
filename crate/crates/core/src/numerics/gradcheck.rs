use super::tape::{Tape, Var};
use super::Matrix;
use crate::error::{Error, Result};

/// Gradients smaller than this are compared in absolute rather than
/// relative terms.
pub const GRAD_CHECK_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_relative_error: f64,
    /// Coordinate at which `max_relative_error` occurred.
    pub worst_index: usize,
    pub passed: bool,
}

fn eval_scalar<F>(f: &F, x: &Matrix) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let v = tape.leaf(x.clone());
    let out = f(&mut tape, v)?;
    let value = tape.value(out);
    if value.shape() != (1, 1) {
        return Err(Error::Dimension {
            op: "grad_check",
            left: (1, 1),
            right: value.shape(),
        });
    }
    Ok(value.get(0, 0))
}

/// Compares tape adjoints of the scalar function `f` at `x` against central
/// differences with step `eps`.
///
/// The relative error of coordinate `i` is
/// `|a_i − n_i| / max(|a_i|, |n_i|, GRAD_CHECK_FLOOR)`; the check passes when
/// the maximum over coordinates is below `tol`.
pub fn grad_check<F>(f: F, x: &Matrix, eps: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let v = tape.leaf(x.clone());
    let out = f(&mut tape, v)?;
    let adjoints = tape.backward(out);
    let analytic = match adjoints.get(v) {
        Some(g) => g.as_slice().to_vec(),
        None => vec![0.0; x.len()],
    };

    let mut numeric = Vec::with_capacity(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + eps;
        let plus = eval_scalar(&f, &probe)?;
        probe.as_mut_slice()[i] = orig - eps;
        let minus = eval_scalar(&f, &probe)?;
        probe.as_mut_slice()[i] = orig;
        numeric.push((plus - minus) / (2.0 * eps));
    }

    let (worst_index, max_relative_error) = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(GRAD_CHECK_FLOOR))
        .enumerate()
        .fold((0, 0.0), |best, (i, e)| if e > best.1 { (i, e) } else { best });

    Ok(GradCheckReport {
        passed: max_relative_error < tol,
        analytic,
        numeric,
        max_relative_error,
        worst_index,
    })
}
