//! Adaptive Dormand–Prince 5(4) integrator over complex state vectors.

use num_complex::Complex64;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// error coefficients: 5th-order minus embedded 4th-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

/// What the step observer wants after an accepted step.
pub(crate) enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Termination {
    Stopped,
    ReachedEnd,
    StepUnderflow,
}

/// Integrates `dy/dt = f(y)` from `t = 0` until `observer` stops it or `t_max`
/// is reached. The observer sees `(t, y, f(y))` after each accepted step.
pub(crate) fn integrate<const N: usize, F, O>(
    f: F,
    y0: [Complex64; N],
    t_max: f64,
    tol: Tolerances,
    mut observer: O,
) -> (f64, [Complex64; N], Termination)
where
    F: Fn(&[Complex64; N]) -> [Complex64; N],
    O: FnMut(f64, &[Complex64; N], &[Complex64; N]) -> Control,
{
    let combine = |y: &[Complex64; N], h: f64, terms: &[(f64, &[Complex64; N])]| {
        let mut out = *y;
        for (coef, k) in terms {
            for i in 0..N {
                out[i] += k[i] * (h * coef);
            }
        }
        out
    };

    let mut t = 0.0;
    let mut y = y0;
    let mut k1 = f(&y);
    if let Control::Stop = observer(t, &y, &k1) {
        return (t, y, Termination::Stopped);
    }

    let scale0 = y.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    let rate0 = k1.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    let mut h = if rate0 > 0.0 { 1e-3 * (scale0 + tol.atol).max(1e-6) / rate0 } else { 1e-3 };
    h = h.min(t_max).max(1e-12);

    let mut k2;
    let mut k3;
    let mut k4;
    let mut k5;
    let mut k6;
    while t < t_max {
        if t + h > t_max {
            h = t_max - t;
        }
        k2 = f(&combine(&y, h, &[(A21, &k1)]));
        k3 = f(&combine(&y, h, &[(A31, &k1), (A32, &k2)]));
        k4 = f(&combine(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        k5 = f(&combine(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        k6 = f(&combine(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
        let y_new = combine(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = f(&y_new);

        let mut err = 0.0f64;
        for i in 0..N {
            let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
            let sc = tol.atol + tol.rtol * y[i].norm().max(y_new[i].norm());
            err = err.max(e.norm() / sc);
        }
        if !err.is_finite() {
            h *= 0.2;
            if h < 1e-14 * t.max(1.0) {
                return (t, y, Termination::StepUnderflow);
            }
            continue;
        }
        if err <= 1.0 {
            t += h;
            y = y_new;
            k1 = k7;
            if let Control::Stop = observer(t, &y, &k1) {
                return (t, y, Termination::Stopped);
            }
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < 1e-14 * t.max(1.0) {
            return (t, y, Termination::StepUnderflow);
        }
    }
    (t, y, Termination::ReachedEnd)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_and_rotation() {
        let tol = Tolerances { rtol: 1e-10, atol: 1e-14 };
        let rate = Complex64::new(-0.5, 2.0);
        let (t, y, term) = integrate(|y: &[Complex64; 1]| [y[0] * rate], [Complex64::new(1.0, 0.0)], 3.0, tol, |_, _, _| {
            Control::Continue
        });
        assert_eq!(term, Termination::ReachedEnd);
        assert!((t - 3.0).abs() < 1e-12);
        let exact = (rate * 3.0).exp();
        assert!((y[0] - exact).norm() < 1e-8, "{} vs {}", y[0], exact);
    }

    #[test]
    fn observer_can_stop() {
        let tol = Tolerances { rtol: 1e-9, atol: 1e-12 };
        let (_, y, term) = integrate(
            |y: &[Complex64; 1]| [Complex64::new(1.0, 0.0) - y[0]],
            [Complex64::new(0.0, 0.0)],
            1e3,
            tol,
            |_, _, f| if f[0].norm() < 1e-8 { Control::Stop } else { Control::Continue },
        );
        assert_eq!(term, Termination::Stopped);
        assert!((y[0].re - 1.0).abs() < 1e-7);
    }
}
