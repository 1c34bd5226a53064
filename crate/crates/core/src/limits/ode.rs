//! Embedded Dormand–Prince 5(4) integrator with step-size control.

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0];
const B: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
}

fn combine<const N: usize>(y: &[f64; N], h: f64, ks: &[[f64; N]], coef: &[f64]) -> [f64; N] {
    let mut out = *y;
    for (k, c) in ks.iter().zip(coef) {
        if *c != 0.0 {
            for i in 0..N {
                out[i] += h * c * k[i];
            }
        }
    }
    out
}

impl Dopri5 {
    /// Integrates `y' = f(t, y)` from `t0` to `t_end`, landing exactly on each
    /// time in `stops` (ascending, inside the interval). `observe` sees every
    /// accepted step as `(t, y, y', at_stop)`.
    pub fn integrate<const N: usize>(
        &self,
        f: impl Fn(f64, &[f64; N]) -> [f64; N],
        t0: f64,
        y0: [f64; N],
        t_end: f64,
        stops: &[f64],
        mut observe: impl FnMut(f64, &[f64; N], &[f64; N], bool),
    ) -> Result<([f64; N], OdeStats), String> {
        let span = t_end - t0;
        if !(span > 0.0) {
            return Err(format!("empty interval [{t0}, {t_end}]"));
        }
        let mut stats = OdeStats::default();
        let mut t = t0;
        let mut y = y0;
        let mut k1 = f(t, &y);
        observe(t, &y, &k1, false);
        let mut h = 1e-3 * span;
        let mut next_stop = stops.iter().copied().filter(|s| *s > t0 && *s <= t_end).peekable();
        while t < t_end {
            if stats.accepted + stats.rejected >= self.max_steps {
                return Err(format!("step limit reached at t = {t}"));
            }
            let stop = next_stop.peek().copied();
            let target = stop.unwrap_or(t_end);
            let landing = t + h >= target - 1e-14 * span;
            let hs = if landing { target - t } else { h };
            let k2 = f(t + C[1] * hs, &combine(&y, hs, &[k1], &A2));
            let k3 = f(t + C[2] * hs, &combine(&y, hs, &[k1, k2], &A3));
            let k4 = f(t + C[3] * hs, &combine(&y, hs, &[k1, k2, k3], &A4));
            let k5 = f(t + C[4] * hs, &combine(&y, hs, &[k1, k2, k3, k4], &A5));
            let k6 = f(t + C[5] * hs, &combine(&y, hs, &[k1, k2, k3, k4, k5], &A6));
            let y_new = combine(&y, hs, &[k1, k2, k3, k4, k5, k6], &B);
            let k7 = f(t + hs, &y_new);
            let ks = [k1, k2, k3, k4, k5, k6, k7];
            let mut err = 0.0;
            for i in 0..N {
                let e: f64 = ks.iter().zip(&E).map(|(k, c)| c * k[i]).sum::<f64>() * hs;
                let sc = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                err += (e / sc) * (e / sc);
            }
            let err = (err / N as f64).sqrt();
            if !err.is_finite() {
                return Err(format!("non-finite state near t = {t}"));
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                stats.accepted += 1;
                t = if landing { target } else { t + hs };
                y = y_new;
                k1 = k7;
                if landing {
                    next_stop.next();
                }
                observe(t, &y, &k1, landing && stop.is_some());
                h = if landing { h.max(hs) } else { hs * factor };
            } else {
                stats.rejected += 1;
                h = hs * factor;
            }
            if h < 1e-14 * span {
                return Err(format!("step size underflow at t = {t}"));
            }
        }
        Ok((y, stats))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator() {
        let ode = Dopri5::default();
        let (y, stats) = ode
            .integrate(|_, y: &[f64; 2]| [y[1], -y[0]], 0.0, [0.0, 1.0], 10.0, &[], |_, _, _, _| {})
            .unwrap();
        assert!((y[0] - 10f64.sin()).abs() < 1e-8);
        assert!((y[1] - 10f64.cos()).abs() < 1e-8);
        assert!(stats.accepted > 10);
    }

    #[test]
    fn lands_on_stops() {
        let ode = Dopri5::default();
        let stops = [0.25, 0.5, 0.75];
        let mut seen = Vec::new();
        ode.integrate(|_, y: &[f64; 1]| [y[0]], 0.0, [1.0], 1.0, &stops, |t, y, _, stop| {
            if stop {
                seen.push((t, y[0]));
            }
        })
        .unwrap();
        assert_eq!(seen.len(), 3);
        for ((t, y), s) in seen.iter().zip(&stops) {
            assert_eq!(t, s);
            assert!((y - s.exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn fifth_order_accuracy() {
        // error shrinks as the tolerance does
        let run = |tol: f64| {
            let ode = Dopri5 { rtol: tol, atol: tol, ..Dopri5::default() };
            let (y, _) = ode
                .integrate(|t, y: &[f64; 1]| [-2.0 * t * y[0]], 0.0, [1.0], 2.0, &[], |_, _, _, _| {})
                .unwrap();
            (y[0] - (-4.0f64).exp()).abs()
        };
        assert!(run(1e-12) < run(1e-6));
        assert!(run(1e-12) < 1e-10);
    }
}
