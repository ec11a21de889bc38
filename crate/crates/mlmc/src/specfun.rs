//! Complex log-gamma, Kummer `1F1`, Tricomi `U`, and a log-derivative
//! integrator for ratios of confluent hypergeometric solutions.

use num_complex::Complex64 as C64;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecFunError {
    #[error("pole of the gamma function at {0}")]
    Pole(C64),
    #[error("{what}: series did not converge within {terms} terms")]
    NonConvergence { what: &'static str, terms: usize },
    #[error("{0}")]
    Domain(String),
    #[error("ODE integration failed: {0}")]
    Integration(String),
}

pub type SfResult<T> = Result<T, SpecFunError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesControl {
    pub rel_tol: f64,
    pub max_terms: usize,
}

impl Default for SeriesControl {
    fn default() -> Self {
        Self { rel_tol: 1e-14, max_terms: 100_000 }
    }
}

fn is_nonpositive_integer(z: C64) -> bool {
    z.im == 0.0 && z.re <= 0.0 && z.re == z.re.round()
}

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Gamma(z)`, continuous on the plane cut along the non-positive real
/// axis (the branch with `exp(log_gamma(z)) = Gamma(z)` and
/// `log_gamma(conj z) = conj log_gamma(z)`).
pub fn log_gamma(z: C64) -> SfResult<C64> {
    if is_nonpositive_integer(z) {
        return Err(SpecFunError::Pole(z));
    }
    if z.re < 0.5 {
        // shift up: ln G(z) = ln G(z + n) - sum ln(z + k)
        let n = (0.5 - z.re).ceil() as usize;
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..n {
            acc += (z + k as f64).ln();
        }
        return Ok(lanczos(z + n as f64) - acc);
    }
    Ok(lanczos(z))
}

fn lanczos(z: C64) -> C64 {
    let z = z - 1.0;
    let mut x = C64::new(LANCZOS[0], 0.0);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        x += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + x.ln()
}

pub fn gamma(z: C64) -> SfResult<C64> {
    Ok(log_gamma(z)?.exp())
}

/// `1 / Gamma(z)`, zero at the poles.
pub fn recip_gamma(z: C64) -> C64 {
    match log_gamma(z) {
        Ok(l) => (-l).exp(),
        Err(_) => C64::new(0.0, 0.0),
    }
}

/// Kummer's `1F1(a; b; z)` by its power series. When the terms grow far
/// beyond the sum (large `|z|` with `Re z < 0`), the series is summed again
/// in double-double arithmetic.
pub fn kummer_m(a: C64, b: C64, z: C64, ctl: SeriesControl) -> SfResult<C64> {
    if is_nonpositive_integer(b) {
        return Err(SpecFunError::Domain(format!("1F1 undefined for b = {b}")));
    }
    let mut term = C64::new(1.0, 0.0);
    let mut sum = term;
    let mut largest: f64 = 1.0;
    for n in 0..ctl.max_terms {
        let nf = n as f64;
        let ratio = (a + nf) * z / ((b + nf) * (nf + 1.0));
        term *= ratio;
        sum += term;
        largest = largest.max(term.norm());
        let done = term == C64::new(0.0, 0.0)
            || (term.norm() <= ctl.rel_tol * sum.norm()
                && ((a + nf + 1.0) * z / ((b + nf + 1.0) * (nf + 2.0))).norm() < 0.5);
        if done {
            if largest > CANCELLATION_LIMIT * sum.norm() {
                return Ok(kummer_m_dd(a, b, z, n + 1));
            }
            return Ok(sum);
        }
    }
    Err(SpecFunError::NonConvergence { what: "1F1", terms: ctl.max_terms })
}

/// Largest term to sum ratio accepted from the `f64` series.
const CANCELLATION_LIMIT: f64 = 100.0;

/// The first `terms + 1` terms of the `1F1` series, summed in double-double.
fn kummer_m_dd(a: C64, b: C64, z: C64, terms: usize) -> C64 {
    let (a, b, z) = (Cdd::from(a), Cdd::from(b), Cdd::from(z));
    let mut term = Cdd::from(C64::new(1.0, 0.0));
    let mut sum = term;
    for n in 0..terms {
        let nf = Dd::from(n as f64);
        let num = a.add_re(nf).mul(z);
        let den = b.add_re(nf).scale(Dd::from(n as f64 + 1.0));
        term = term.mul(num).div(den);
        sum = sum.add(term);
    }
    sum.into()
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl From<f64> for Dd {
    fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }
}

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd { hi: s, lo: (a - (s - bb)) + (b - bb) }
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd { hi: s, lo: b - (s - a) }
}

impl Dd {
    fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.hi, o.hi);
        let t = two_sum(self.lo, o.lo);
        let u = quick_two_sum(s.hi, s.lo + t.hi);
        quick_two_sum(u.hi, u.lo + t.lo)
    }

    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        quick_two_sum(p, e + (self.hi * o.lo + self.lo * o.hi))
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.add(o.mul(Dd::from(q1)).neg());
        let q2 = r.hi / o.hi;
        let r = r.add(o.mul(Dd::from(q2)).neg());
        let q3 = r.hi / o.hi;
        quick_two_sum(q1, q2).add(Dd::from(q3))
    }
}

#[derive(Debug, Clone, Copy)]
struct Cdd {
    re: Dd,
    im: Dd,
}

impl From<C64> for Cdd {
    fn from(z: C64) -> Self {
        Cdd { re: Dd::from(z.re), im: Dd::from(z.im) }
    }
}

impl From<Cdd> for C64 {
    fn from(z: Cdd) -> Self {
        C64::new(z.re.hi + z.re.lo, z.im.hi + z.im.lo)
    }
}

impl Cdd {
    fn add(self, o: Cdd) -> Cdd {
        Cdd { re: self.re.add(o.re), im: self.im.add(o.im) }
    }

    fn add_re(self, x: Dd) -> Cdd {
        Cdd { re: self.re.add(x), im: self.im }
    }

    fn scale(self, x: Dd) -> Cdd {
        Cdd { re: self.re.mul(x), im: self.im.mul(x) }
    }

    fn mul(self, o: Cdd) -> Cdd {
        Cdd { re: self.re.mul(o.re).add(self.im.mul(o.im).neg()), im: self.re.mul(o.im).add(self.im.mul(o.re)) }
    }

    fn div(self, o: Cdd) -> Cdd {
        let norm = o.re.mul(o.re).add(o.im.mul(o.im));
        let conj = Cdd { re: o.re, im: o.im.neg() };
        let p = self.mul(conj);
        Cdd { re: p.re.div(norm), im: p.im.div(norm) }
    }
}

/// Offset applied to integer `b` in [`tricomi_u`].
pub const INTEGER_B_NUDGE: f64 = 1e-6;

/// Tricomi's `U(a, b, z)` from the connection formula with `1F1`. For `b`
/// within [`INTEGER_B_NUDGE`] of an integer the formula is evaluated at
/// `b +- INTEGER_B_NUDGE` and averaged.
///
/// The two terms of the formula grow like `e^{Re z} / |sin(pi b)|` while `U`
/// decays, so about `log10(e^{Re z} / |sin(pi b)|)` digits are lost: near
/// 1e-9 relative at `Re z = 5` with `b` within 0.01 of an integer.
pub fn tricomi_u(a: C64, b: C64, z: C64, ctl: SeriesControl) -> SfResult<C64> {
    if z == C64::new(0.0, 0.0) {
        return Err(SpecFunError::Domain("U(a, b, 0) is not defined here".into()));
    }
    let near_int = b.im == 0.0 && (b.re - b.re.round()).abs() < INTEGER_B_NUDGE;
    if near_int {
        let bb = b.re.round();
        let lo = u_connection(a, C64::new(bb - INTEGER_B_NUDGE, 0.0), z, ctl)?;
        let hi = u_connection(a, C64::new(bb + INTEGER_B_NUDGE, 0.0), z, ctl)?;
        return Ok(0.5 * (lo + hi));
    }
    u_connection(a, b, z, ctl)
}

fn u_connection(a: C64, b: C64, z: C64, ctl: SeriesControl) -> SfResult<C64> {
    let one = C64::new(1.0, 0.0);
    let t1 = gamma(one - b)? * recip_gamma(one + a - b);
    let t2 = gamma(b - one)? * recip_gamma(a);
    let mut u = C64::new(0.0, 0.0);
    if t1 != C64::new(0.0, 0.0) {
        u += t1 * kummer_m(a, b, z, ctl)?;
    }
    if t2 != C64::new(0.0, 0.0) {
        u += t2 * ((one - b) * z.ln()).exp() * kummer_m(one + a - b, 2.0 * one - b, z, ctl)?;
    }
    Ok(u)
}

/// Which solution of `y G'' + (b - eps y) G' - A G = 0` is meant.
///
/// With `eps = +1`: `Increasing` is `M(A, b, y)`, `Decreasing` is `U(A, b, y)`.
/// With `eps = -1`: `e^-y M(b + A, b, y)` and `e^-y U(b + A, b, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solution {
    Increasing,
    Decreasing,
}

/// Confluent equation `y G'' + (b - eps y) G' - A G = 0` with `eps = +-1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Confluent {
    pub a: C64,
    pub b: f64,
    pub eps: f64,
}

/// `ln(G(y_num) / G(y_den))` together with `G'/G` at both points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioEval {
    pub log_ratio: C64,
    pub dlog_num: C64,
    pub dlog_den: C64,
    pub steps: usize,
}

/// Integration tolerances for [`Confluent::ratio`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeControl {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeControl {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-12, max_steps: 1_000_000 }
    }
}

impl Confluent {
    pub fn new(a: C64, b: f64, eps: f64) -> Self {
        Self { a, b, eps }
    }

    /// Direct evaluation of `G` from the series, usable when `|A| y` is small.
    pub fn value_series(&self, which: Solution, y: f64, ctl: SeriesControl) -> SfResult<C64> {
        let (aa, pre) = if self.eps > 0.0 { (self.a, 1.0) } else { (self.a + self.b, (-y).exp()) };
        let b = C64::new(self.b, 0.0);
        let y = C64::new(y, 0.0);
        Ok(pre
            * match which {
                Solution::Increasing => kummer_m(aa, b, y, ctl)?,
                Solution::Decreasing => tricomi_u(aa, b, y, ctl)?,
            })
    }

    /// Evaluates the ratio by integrating the Riccati equation for
    /// `D = G'/G`, `D' = A/y - p D - D^2` with `p = (b - eps y)/y`, together
    /// with `I' = D`.
    ///
    /// Both solutions are integrated in their stable direction (upward for
    /// the increasing one, downward for the decreasing one) from a WKB
    /// start value, far enough back that its error has decayed below
    /// rounding. When that point would fall near zero, the increasing
    /// solution starts from the series instead.
    pub fn ratio(&self, which: Solution, y_num: f64, y_den: f64, ctl: OdeControl) -> SfResult<RatioEval> {
        if !(y_num > 0.0 && y_den > 0.0) {
            return Err(SpecFunError::Domain("ratio needs positive arguments".into()));
        }
        let (lo, hi) = (y_num.min(y_den), y_num.max(y_den));
        let rhs = |y: f64, s: &[C64; 2]| -> [C64; 2] {
            let p = (self.b - self.eps * y) / y;
            [self.a / y - p * s[0] - s[0] * s[0], s[0]]
        };
        // distance over which a start error decays below rounding
        let settle = |y: f64| 60.0 / (1.0 + (4.0 * self.a / y).sqrt().norm());
        let wkb = |y: f64, sign: f64| {
            let p = (self.b - self.eps * y) / y;
            (-p + sign * (p * p + 4.0 * self.a / y).sqrt()) / 2.0
        };
        let (start, d0, stops) = match which {
            Solution::Increasing => {
                if is_nonpositive_integer(C64::new(self.b, 0.0)) {
                    return Err(SpecFunError::Domain(format!("1F1 undefined for b = {}", self.b)));
                }
                let ys = lo.min(0.2 / (self.a.norm() + self.b.abs() + 1.0));
                let yw = lo - settle(lo);
                if yw > ys {
                    (yw, wkb(yw, 1.0), [lo, hi])
                } else {
                    let aa = if self.eps > 0.0 { self.a } else { self.a + self.b };
                    let b = C64::new(self.b, 0.0);
                    let yc = C64::new(ys, 0.0);
                    let ctl = SeriesControl::default();
                    let m = kummer_m(aa, b, yc, ctl)?;
                    let mp = aa / b * kummer_m(aa + 1.0, b + 1.0, yc, ctl)?;
                    let d = mp / m - if self.eps > 0.0 { 0.0 } else { 1.0 };
                    (ys, d, [lo, hi])
                }
            }
            Solution::Decreasing => {
                let big = hi + settle(hi);
                (big, wkb(big, -1.0), [hi, lo])
            }
        };
        let (out, steps) = dopri5(rhs, start, [d0, C64::new(0.0, 0.0)], &stops, ctl)?;
        let (at_num, at_den) = if stops[0] == y_num { (out[0], out[1]) } else { (out[1], out[0]) };
        let (at_num, at_den) = if y_num == y_den { (at_num, at_num) } else { (at_num, at_den) };
        Ok(RatioEval { log_ratio: at_num[1] - at_den[1], dlog_num: at_num[0], dlog_den: at_den[0], steps })
    }
}

/// Adaptive Dormand-Prince 5(4) for a two-component complex system.
/// `stops` must be monotone in the integration direction; the state at each
/// stop is returned. Component 1 is controlled in absolute terms only.
fn dopri5(
    f: impl Fn(f64, &[C64; 2]) -> [C64; 2],
    x0: f64,
    s0: [C64; 2],
    stops: &[f64],
    ctl: OdeControl,
) -> SfResult<(Vec<[C64; 2]>, usize)> {
    const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const A2: [f64; 1] = [1.0 / 5.0];
    const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
    const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
    const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
    const A6: [f64; 5] = [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0];
    const B: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
    // B - B*, the embedded error weights (7th stage weight -1/40)
    const E: [f64; 7] =
        [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

    let comb = |s: &[C64; 2], h: f64, ks: &[[C64; 2]], w: &[f64]| -> [C64; 2] {
        let mut r = *s;
        for (k, &wi) in ks.iter().zip(w) {
            r[0] += h * wi * k[0];
            r[1] += h * wi * k[1];
        }
        r
    };

    let mut out = Vec::with_capacity(stops.len());
    let mut x = x0;
    let mut s = s0;
    let mut k1 = f(x, &s);
    let mut steps = 0usize;
    let mut h = {
        let end = stops[0];
        let span = (end - x).abs().max(1e-300);
        let rate = k1[0].norm() / (s[0].norm() + 1e-30);
        let guess = 0.01 / (rate + 1e-30);
        guess.min(span).max(span * 1e-9)
    };
    let mut h_next;
    for &stop in stops {
        let dir = if stop >= x { 1.0 } else { -1.0 };
        while (stop - x) * dir > 0.0 {
            if steps >= ctl.max_steps {
                return Err(SpecFunError::Integration(format!("step limit {} at x = {x}", ctl.max_steps)));
            }
            let rem = (stop - x).abs();
            let last = h >= rem;
            let h_free = h;
            let hc = if last { rem } else { h };
            let hs = hc * dir;
            let k2 = f(x + C[0] * hs, &comb(&s, hs, &[k1], &A2));
            let k3 = f(x + C[1] * hs, &comb(&s, hs, &[k1, k2], &A3));
            let k4 = f(x + C[2] * hs, &comb(&s, hs, &[k1, k2, k3], &A4));
            let k5 = f(x + C[3] * hs, &comb(&s, hs, &[k1, k2, k3, k4], &A5));
            let k6 = f(x + C[4] * hs, &comb(&s, hs, &[k1, k2, k3, k4, k5], &A6));
            let sn = comb(&s, hs, &[k1, k2, k3, k4, k5, k6], &B);
            let xn = if last { stop } else { x + hs };
            let k7 = f(xn, &sn);
            let err = comb(&[C64::new(0.0, 0.0); 2], hs, &[k1, k2, k3, k4, k5, k6, k7], &E);
            let sc0 = ctl.atol + ctl.rtol * s[0].norm().max(sn[0].norm());
            let e0 = err[0].norm() / sc0;
            let e1 = err[1].norm() / ctl.atol;
            let en = (0.5 * (e0 * e0 + e1 * e1)).sqrt();
            steps += 1;
            let fac = if en == 0.0 {
                5.0
            } else if en.is_finite() {
                (0.9 * en.powf(-0.2)).clamp(0.2, 5.0)
            } else {
                0.2
            };
            if en <= 1.0 {
                x = xn;
                s = sn;
                k1 = k7;
                // a step clipped at a stop does not shrink the next one
                h_next = if last { h_free.max(hc * fac) } else { hc * fac };
            } else {
                h_next = hc * fac.min(0.9);
            }
            h = h_next;
            if h < 1e-14 * x.abs().max(1e-300) {
                return Err(SpecFunError::Integration(format!("step size underflow at x = {x}")));
            }
        }
        out.push(s);
    }
    Ok((out, steps))
}
