//! Adaptive Gauss–Kronrod (7, 15) quadrature.

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

/// Kronrod estimate and `|Kronrod - Gauss|` on `[a, b]`.
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, (kronrod - gauss).abs() * h)
}

/// Integral of `f` over `[a, b]` to relative tolerance `rel_tol` (or an
/// absolute floor `abs_tol`), by recursive bisection of the interval with
/// the largest error estimate.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> (f64, f64) {
    let mut parts = vec![{
        let (v, e) = gk15(&f, a, b);
        (a, b, v, e)
    }];
    for _ in 0..2000 {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            break;
        }
        let (i, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = parts.swap_remove(i);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
    (parts.iter().map(|p| p.2).sum(), parts.iter().map(|p| p.3).sum())
}

/// `ln integral_0^inf exp(log_f(g)) dg` for a unimodal-ish positive
/// integrand known in log form. Integrates over `x = ln g` after shifting
/// by the peak value, so very large or small magnitudes stay representable.
pub fn log_integral_positive_axis(log_f: impl Fn(f64) -> f64, rel_tol: f64) -> f64 {
    let h = |x: f64| log_f(x.exp()) + x;
    // coarse scan for the peak
    let mut peak = (f64::NEG_INFINITY, 0.0);
    let mut x = -40.0;
    while x <= 60.0 {
        let v = h(x);
        if v > peak.0 {
            peak = (v, x);
        }
        x += 0.25;
    }
    let (hmax, xmax) = peak;
    // extend outward until the integrand is negligible
    let cutoff = hmax - 60.0;
    let mut lo = xmax;
    while h(lo) > cutoff && lo > -200.0 {
        lo -= 1.0;
    }
    let mut hi = xmax;
    while h(hi) > cutoff && hi < 400.0 {
        hi += 1.0;
    }
    let (v, _) = integrate(|x| (h(x) - hmax).exp(), lo, hi, rel_tol, 0.0);
    hmax + v.ln()
}
