//! Composite quadrature over sampled time series.
//!
//! Simpson's rule over pairs of intervals (the three-point quadratic rule on
//! non-uniform grids), with a cubic tail for an odd interval count. The
//! error estimate is the Richardson difference between the rule on the full
//! grid and on every other sample, plus the cubic-vs-quadratic tail gap.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error_estimate: f64,
}

/// Plain composite trapezoid rule.
pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    assert_eq!(times.len(), values.len());
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, f)| 0.5 * (t[1] - t[0]) * (f[0] + f[1]))
        .sum()
}

/// Integral over `[t0, t2]` of the quadratic through three samples.
fn quadratic_pair(t: [f64; 3], f: [f64; 3]) -> f64 {
    let h0 = t[1] - t[0];
    let h1 = t[2] - t[1];
    let h = h0 + h1;
    h / 6.0 * ((2.0 - h1 / h0) * f[0] + h * h / (h0 * h1) * f[1] + (2.0 - h0 / h1) * f[2])
}

/// Integral over the last interval of the polynomial through all given
/// samples (three-point Gauss-Legendre, exact up to degree five).
fn lagrange_tail(t: &[f64], f: &[f64]) -> f64 {
    let k = t.len();
    let (a, b) = (t[k - 2], t[k - 1]);
    let interp = |x: f64| -> f64 {
        (0..k)
            .map(|i| {
                let basis: f64 = (0..k)
                    .filter(|&j| j != i)
                    .map(|j| (x - t[j]) / (t[i] - t[j]))
                    .product();
                f[i] * basis
            })
            .sum()
    };
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    let node = (0.6f64).sqrt() * half;
    half * (5.0 * interp(mid - node) + 8.0 * interp(mid) + 5.0 * interp(mid + node)) / 9.0
}

/// Simpson pairs over the first `intervals` intervals, taking every
/// `stride`-th sample.
fn pairs(times: &[f64], values: &[f64], intervals: usize, stride: usize) -> f64 {
    let mut acc = 0.0;
    let mut i = 0;
    while i + 2 * stride <= intervals {
        acc += quadratic_pair(
            [times[i], times[i + stride], times[i + 2 * stride]],
            [values[i], values[i + stride], values[i + 2 * stride]],
        );
        i += 2 * stride;
    }
    acc
}

/// Integrates samples with an error estimate.
pub fn integrate(times: &[f64], values: &[f64]) -> Quadrature {
    assert_eq!(times.len(), values.len());
    let n = times.len().saturating_sub(1);
    match n {
        0 => {
            return Quadrature {
                value: 0.0,
                error_estimate: 0.0,
            }
        }
        1 => {
            let value = trapezoid(times, values);
            return Quadrature {
                value,
                error_estimate: value.abs(),
            };
        }
        _ => {}
    }
    let even = n - n % 2;
    let mut value = pairs(times, values, even, 1);
    // An odd interval count leaves one interval, covered by the cubic
    // through the last four samples (quadratic if only three exist).
    let mut tail_error = 0.0;
    if n % 2 == 1 {
        let cubic = lagrange_tail(&times[n + 1 - 4.min(n + 1)..], &values[n + 1 - 4.min(n + 1)..]);
        let quadratic = lagrange_tail(&times[n - 2..], &values[n - 2..]);
        value += cubic;
        tail_error = (cubic - quadratic).abs();
    }
    let quad = n - n % 4;
    let error_estimate = if quad >= 4 {
        (pairs(times, values, quad, 1) - pairs(times, values, quad, 2)).abs() / 15.0 + tail_error
    } else {
        (value - trapezoid(times, values)).abs()
    };
    Quadrature {
        value,
        error_estimate,
    }
}
