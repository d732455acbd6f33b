use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// Compares the tape gradient of `f` at `point` against central differences.
///
/// `f` builds a scalar from the leaf it is given. Returns the largest
/// `|analytic - numeric| / (|analytic| + |numeric| + 1e-8)` over coordinates.
pub fn finite_diff_check<'a, F>(f: F, point: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape<'a>, Var) -> Result<Var>,
{
    let eval = |p: &Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.leaf(p.clone());
        let y = f(&mut tape, x)?;
        let v = tape.value(y);
        if !v.is_scalar() {
            return Err(Error::NotScalar(v.shape().to_vec()));
        }
        Ok(v.item())
    };

    let mut tape = Tape::new();
    let x = tape.leaf(point.clone());
    let y = f(&mut tape, x)?;
    let grads = tape.backward(y)?;
    let analytic = grads
        .get(x)
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| vec![0.0; point.len()]);
    drop(tape);

    let mut worst: f64 = 0.0;
    let mut probe = point.clone();
    for (i, a) in analytic.iter().enumerate() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = eval(&probe)?;
        probe.data_mut()[i] = orig - h;
        let down = eval(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let err = (a - numeric).abs() / (a.abs() + numeric.abs() + 1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}
