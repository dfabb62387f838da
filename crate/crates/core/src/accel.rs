//! Squared extrapolation (SQUAREM) for the multiplicative block updates.
//!
//! The block maximizers act multiplicatively, so their fixed-point map is
//! close to linear in log coordinates. Given three consecutive iterates the
//! step `x0 - 2αr + α²v` with `r = x1 - x0`, `v = x2 - 2x1 + x0` jumps along
//! the slow direction. Callers re-apply a plain sweep to the result and keep
//! it only if the objective did not drop.

use ndarray::{Array2, Zip};

/// Largest factor by which an entry may shrink or grow in one step; entries
/// are never driven to exact zero, so no support is lost for good.
const LOG_CLAMP: f64 = 30.0;

pub(crate) fn extrapolate(
    x0: &[&Array2<f64>],
    x1: &[&Array2<f64>],
    x2: &[&Array2<f64>],
    max_step: f64,
) -> Option<(Vec<Array2<f64>>, f64)> {
    let (mut rr, mut vv) = (0.0, 0.0);
    for ((p0, p1), p2) in x0.iter().zip(x1).zip(x2) {
        Zip::from(*p0).and(*p1).and(*p2).for_each(|&a, &b, &c| {
            if a > 0.0 && b > 0.0 && c > 0.0 {
                let (la, lb, lc) = (a.ln(), b.ln(), c.ln());
                rr += (lb - la) * (lb - la);
                vv += (lc - 2.0 * lb + la) * (lc - 2.0 * lb + la);
            }
        });
    }
    if !(rr > 0.0) {
        return None;
    }
    let alpha = if vv > 0.0 { -(rr / vv).sqrt() } else { -max_step };
    let alpha = alpha.clamp(-max_step, -1.0);
    let out = x0
        .iter()
        .zip(x1)
        .zip(x2)
        .map(|((p0, p1), p2)| {
            let mut t = (*p2).clone();
            Zip::from(&mut t).and(*p0).and(*p1).and(*p2).for_each(|t, &a, &b, &c| {
                if a > 0.0 && b > 0.0 && c > 0.0 {
                    let (la, lb, lc) = (a.ln(), b.ln(), c.ln());
                    let l = la - 2.0 * alpha * (lb - la) + alpha * alpha * (lc - 2.0 * lb + la);
                    *t = l.clamp(lc - LOG_CLAMP, lc + LOG_CLAMP).exp();
                }
            });
            t
        })
        .collect();
    Some((out, -alpha))
}
