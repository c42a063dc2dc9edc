//! Adaptive 15-point Gauss–Kronrod quadrature with global bisection.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

pub const ABS_TOL: f64 = 1e-10;
pub const REL_TOL: f64 = 1e-8;
const MAX_INTERVALS: usize = 4000;

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

#[derive(Clone, Copy, Debug)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NotConverged {
    pub value: f64,
    pub error: f64,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for k in 0..7 {
        let dx = h * XGK[k];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[k] * pair;
        if k % 2 == 1 {
            gauss += WG[k / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// `∫_a^b f` to `max(abs_tol, rel_tol·|I|)`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Estimate, NotConverged> {
    let (v, e) = gk15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment {
        a,
        b,
        value: v,
        error: e,
    });
    let mut total = v;
    let mut total_err = e;
    while total_err > abs_tol.max(rel_tol * total.abs()) {
        if heap.len() >= MAX_INTERVALS || !total.is_finite() {
            return Err(NotConverged {
                value: total,
                error: total_err,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            return Err(NotConverged {
                value: total,
                error: total_err,
            });
        }
        let (v1, e1) = gk15(&f, worst.a, mid);
        let (v2, e2) = gk15(&f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }
    // Re-sum to shed accumulated cancellation in the running totals.
    let value = heap.iter().map(|s| s.value).sum();
    let error = heap.iter().map(|s| s.error).sum();
    Ok(Estimate { value, error })
}

/// `∫_{−∞}^{∞} f` via `t = s / (1 − s²)`.
pub fn integrate_real_line<F: Fn(f64) -> f64>(f: F, abs_tol: f64, rel_tol: f64) -> Result<Estimate, NotConverged> {
    integrate(
        |s| {
            let d = 1.0 - s * s;
            let t = s / d;
            let v = f(t) * (1.0 + s * s) / (d * d);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        -1.0,
        1.0,
        abs_tol,
        rel_tol,
    )
}

/// `∫_{−∞}^{upper} f` via `t = upper − s / (1 − s)`.
pub fn integrate_below<F: Fn(f64) -> f64>(
    f: F,
    upper: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Estimate, NotConverged> {
    integrate(
        |s| {
            let d = 1.0 - s;
            let v = f(upper - s / d) / (d * d);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        abs_tol,
        rel_tol,
    )
}

/// `∫_{lower}^{∞} f` via `t = lower + s / (1 − s)`.
pub fn integrate_above<F: Fn(f64) -> f64>(
    f: F,
    lower: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Estimate, NotConverged> {
    integrate(
        |s| {
            let d = 1.0 - s;
            let v = f(lower + s / d) / (d * d);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        abs_tol,
        rel_tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let r = integrate(|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-14, 1e-14).unwrap();
        assert!((r.value - 0.0).abs() < 1e-13);
    }

    #[test]
    fn gaussian_on_real_line() {
        let r = integrate_real_line(|t| (-0.5 * t * t).exp(), ABS_TOL, REL_TOL).unwrap();
        assert!((r.value - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-8);
    }

    #[test]
    fn half_lines() {
        let below = integrate_below(|t| t.exp(), 0.0, ABS_TOL, REL_TOL).unwrap();
        assert!((below.value - 1.0).abs() < 1e-9);
        let above = integrate_above(|t| (-t).exp(), 1.0, ABS_TOL, REL_TOL).unwrap();
        assert!((above.value - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn endpoint_singularity() {
        // ∫_0^1 x^(-1/2) = 2
        let r = integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0, 1e-9, 1e-9).unwrap();
        assert!((r.value - 2.0).abs() < 1e-7);
    }
}
