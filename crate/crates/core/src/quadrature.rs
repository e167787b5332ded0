//! One-dimensional numerical integration on finite intervals.

use crate::error::{Result, SpcaError};

#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub abs_err: f64,
    pub evaluations: usize,
}

/// Adaptive Simpson over `[a, b]` split first at the given interior
/// `breakpoints`, with the absolute tolerance `tol` shared out by panel width.
/// Recursion depth is capped at 60 per panel.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, breakpoints: &[f64], tol: f64) -> Result<Integral>
where
    F: Fn(f64) -> f64,
{
    let mut edges = vec![a];
    edges.extend(breakpoints.iter().copied().filter(|&x| x > a && x < b));
    edges.push(b);
    edges.sort_by(f64::total_cmp);
    edges.dedup();

    let width = b - a;
    let mut total = Integral {
        value: 0.0,
        abs_err: 0.0,
        evaluations: 0,
    };
    let mut failed = false;
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let panel_tol = tol * (hi - lo) / width;
        let flo = f(lo);
        let fhi = f(hi);
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid);
        let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
        let mut state = SimpsonState {
            evaluations: 3,
            err: 0.0,
            failed: false,
        };
        let v = simpson_rec(&f, lo, hi, flo, fmid, fhi, whole, panel_tol, 60, &mut state);
        total.value += v;
        total.abs_err += state.err;
        total.evaluations += state.evaluations;
        failed |= state.failed;
    }
    if failed || !total.value.is_finite() {
        return Err(SpcaError::QuadratureNonConvergence {
            tol,
            estimate: total.abs_err,
        });
    }
    Ok(total)
}

struct SimpsonState {
    evaluations: usize,
    err: f64,
    failed: bool,
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    st: &mut SimpsonState,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    st.evaluations += 2;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        st.err += delta.abs() / 15.0;
        return left + right + delta / 15.0;
    }
    if depth == 0 || (b - a) < 1e-15 * (1.0 + a.abs()) {
        st.failed = depth == 0;
        st.err += delta.abs() / 15.0;
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1, st)
        + simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1, st)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Globally adaptive 7/15-point Gauss-Kronrod: bisect the panel with the
/// largest error estimate until the summed estimate is below `tol` or
/// `max_panels` is reached.
pub fn gauss_kronrod<F>(f: F, a: f64, b: f64, breakpoints: &[f64], tol: f64, max_panels: usize) -> Result<Integral>
where
    F: Fn(f64) -> f64,
{
    let mut edges = vec![a];
    edges.extend(breakpoints.iter().copied().filter(|&x| x > a && x < b));
    edges.push(b);
    edges.sort_by(f64::total_cmp);
    edges.dedup();

    let mut panels: Vec<(f64, f64, f64, f64)> = edges
        .windows(2)
        .map(|w| {
            let (v, e) = gk15(&f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    let mut evaluations = 15 * panels.len();

    loop {
        let err: f64 = panels.iter().map(|p| p.3).sum();
        if err <= tol {
            break;
        }
        if panels.len() >= max_panels {
            return Err(SpcaError::QuadratureNonConvergence { tol, estimate: err });
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("at least one panel");
        let (lo, hi, _, _) = panels.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // cannot split further at double precision
            return Err(SpcaError::QuadratureNonConvergence { tol, estimate: err });
        }
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        evaluations += 30;
        panels.push((lo, mid, v1, e1));
        panels.push((mid, hi, v2, e2));
    }

    panels.sort_by(|x, y| x.0.total_cmp(&y.0));
    let value = panels.iter().map(|p| p.2).sum();
    let abs_err = panels.iter().map(|p| p.3).sum();
    Ok(Integral {
        value,
        abs_err,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomial_and_sqrt_endpoint() {
        let r = adaptive_simpson(|x| x * x * x, 0.0, 2.0, &[], 1e-12).unwrap();
        assert!((r.value - 4.0).abs() < 1e-12);
        let r = adaptive_simpson(|x: f64| x.sqrt(), 0.0, 1.0, &[0.5], 1e-10).unwrap();
        assert!((r.value - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn gauss_kronrod_kink() {
        let r = gauss_kronrod(|x: f64| (x - 0.3).abs(), 0.0, 1.0, &[], 1e-12, 500).unwrap();
        assert!((r.value - (0.045 + 0.245)).abs() < 1e-12);
    }

    #[test]
    fn gauss_kronrod_reports_failure() {
        let r = gauss_kronrod(|x: f64| 1.0 / x.abs().sqrt().max(1e-300), -1.0, 1.0, &[], 1e-14, 8);
        assert!(matches!(r, Err(SpcaError::QuadratureNonConvergence { .. })));
    }
}
