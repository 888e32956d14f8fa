//! Double-double arithmetic for the frequency-domain pipeline.
//!
//! Near zero frequency the output covariance of a phase-neutral model has
//! entries many orders of magnitude above the optimized inequality values,
//! which are recovered by cancellation. Carrying the spectrum and the gain
//! optimization in roughly 32 significant digits keeps those values accurate
//! to well below 1e-10.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::linearization::{CMat, RMat};
use crate::params::{N_MODES, STATE_DIM};

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Dd {
    hi: f64,
    lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn new(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn abs(self) -> Dd {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }
}

impl From<f64> for Dd {
    fn from(x: f64) -> Dd {
        Dd::new(x)
    }
}

impl Add for Dd {
    type Output = Dd;
    #[inline]
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl AddAssign for Dd {
    #[inline]
    fn add_assign(&mut self, o: Dd) {
        *self = *self + o;
    }
}

impl Neg for Dd {
    type Output = Dd;
    #[inline]
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    #[inline]
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    #[inline]
    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        let (hi, lo) = quick_two_sum(p, e + (self.hi * o.lo + self.lo * o.hi));
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    #[inline]
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::new(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::new(q2);
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::new(q3)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Cdd {
    pub re: Dd,
    pub im: Dd,
}

impl Cdd {
    pub const ZERO: Cdd = Cdd { re: Dd::ZERO, im: Dd::ZERO };

    pub fn new(re: Dd, im: Dd) -> Cdd {
        Cdd { re, im }
    }

    fn magnitude(self) -> f64 {
        self.re.to_f64().hypot(self.im.to_f64())
    }
}

impl Add for Cdd {
    type Output = Cdd;
    #[inline]
    fn add(self, o: Cdd) -> Cdd {
        Cdd::new(self.re + o.re, self.im + o.im)
    }
}

impl Sub for Cdd {
    type Output = Cdd;
    #[inline]
    fn sub(self, o: Cdd) -> Cdd {
        Cdd::new(self.re - o.re, self.im - o.im)
    }
}

impl Mul for Cdd {
    type Output = Cdd;
    #[inline]
    fn mul(self, o: Cdd) -> Cdd {
        Cdd::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }
}

impl Div for Cdd {
    type Output = Cdd;
    #[inline]
    fn div(self, o: Cdd) -> Cdd {
        let den = o.re * o.re + o.im * o.im;
        Cdd::new((self.re * o.re + self.im * o.im) / den, (self.im * o.re - self.re * o.im) / den)
    }
}

pub(crate) type Square<T> = [[T; STATE_DIM]; STATE_DIM];

/// Solves `A X = B` by Gaussian elimination with partial pivoting, returning
/// the solution and the smallest-to-largest pivot magnitude ratio.
fn solve(mut a: Square<Cdd>, mut b: Square<Cdd>) -> (Square<Cdd>, f64) {
    let n = STATE_DIM;
    let (mut pmin, mut pmax) = (f64::INFINITY, 0.0f64);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].magnitude().total_cmp(&a[j][col].magnitude())).expect("nonempty");
        a.swap(col, piv);
        b.swap(col, piv);
        let p = a[col][col];
        let mag = p.magnitude();
        pmin = pmin.min(mag);
        pmax = pmax.max(mag);
        if mag == 0.0 {
            return (b, 0.0);
        }
        for row in col + 1..n {
            let f = a[row][col] / p;
            if f == Cdd::ZERO {
                continue;
            }
            for k in col..n {
                a[row][k] = a[row][k] - f * a[col][k];
            }
            for k in 0..n {
                b[row][k] = b[row][k] - f * b[col][k];
            }
        }
    }
    for row in (0..n).rev() {
        for k in 0..n {
            let mut acc = b[row][k];
            for j in row + 1..n {
                acc = acc - a[row][j] * b[j][k];
            }
            b[row][k] = acc / a[row][row];
        }
    }
    (b, pmin / pmax.max(f64::MIN_POSITIVE))
}

fn shifted(m: &RMat, omega: f64) -> Square<Cdd> {
    std::array::from_fn(|i| {
        std::array::from_fn(|j| Cdd::new(Dd::new(m[(i, j)]), Dd::new(if i == j { omega } else { 0.0 })))
    })
}

/// Output quadrature covariance `I + 2 G^(1/2) Re[T S T^T]_herm G^(1/2)` in
/// double-double, with `sqrt_rates` the diagonal of `G^(1/2)`.
pub(crate) fn output_covariance(
    m: &RMat,
    d: &CMat,
    sqrt_rates: &[f64; STATE_DIM],
    omega: f64,
    min_rcond: f64,
) -> Result<Square<Dd>> {
    let dd: Square<Cdd> =
        std::array::from_fn(|i| std::array::from_fn(|j| Cdd::new(Dd::new(d[(i, j)].re), Dd::new(d[(i, j)].im))));
    let (x, r1) = solve(shifted(m, omega), dd);
    let xt: Square<Cdd> = std::array::from_fn(|i| std::array::from_fn(|j| x[j][i]));
    let (st, r2) = solve(shifted(m, -omega), xt);
    let rcond = r1.min(r2);
    if !(rcond > min_rcond) {
        return Err(Error::Conditioning(format!("M + i omega I has pivot ratio {rcond:e}")));
    }
    // S[i][j] = st[j][i]; rows of T: X_k = a_k + a_k*, Y_k = -i a_k + i a_k*
    let s = |i: usize, j: usize| st[j][i];
    let row = |a: usize| -> [(usize, Cdd); 2] {
        let k = a % N_MODES;
        if a < N_MODES {
            let one = Cdd::new(Dd::ONE, Dd::ZERO);
            [(k, one), (k + N_MODES, one)]
        } else {
            [(k, Cdd::new(Dd::ZERO, Dd::new(-1.0))), (k + N_MODES, Cdd::new(Dd::ZERO, Dd::ONE))]
        }
    };
    let v = |a: usize, b: usize| -> Cdd {
        let mut acc = Cdd::ZERO;
        for (c, tc) in row(a) {
            for (e, te) in row(b) {
                acc = acc + tc * s(c, e) * te;
            }
        }
        acc
    };
    let mut out = [[Dd::ZERO; STATE_DIM]; STATE_DIM];
    for a in 0..STATE_DIM {
        for b in a..STATE_DIM {
            let herm = (v(a, b).re + v(b, a).re) * Dd::new(0.5);
            let scaled = Dd::new(2.0) * Dd::new(sqrt_rates[a]) * herm * Dd::new(sqrt_rates[b]);
            let entry = if a == b { Dd::ONE + scaled } else { scaled };
            out[a][b] = entry;
            out[b][a] = entry;
        }
    }
    Ok(out)
}

pub(crate) fn to_rmat(v: &Square<Dd>) -> RMat {
    RMat::from_fn(|i, j| v[i][j].to_f64())
}

/// `c^T V c` for a real coefficient vector.
pub(crate) fn quadratic_form(v: &Square<Dd>, c: &[Dd; STATE_DIM]) -> Dd {
    let mut acc = Dd::ZERO;
    for i in 0..STATE_DIM {
        if c[i] == Dd::ZERO {
            continue;
        }
        for j in 0..STATE_DIM {
            if c[j] != Dd::ZERO {
                acc += c[i] * v[i][j] * c[j];
            }
        }
    }
    acc
}

/// Solves a small dense real system by Gaussian elimination with partial
/// pivoting. `None` if a pivot vanishes.
pub(crate) fn solve_real(mut a: Vec<Vec<Dd>>, mut b: Vec<Dd>) -> Option<Vec<Dd>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().to_f64().total_cmp(&a[j][col].abs().to_f64()))?;
        a.swap(col, piv);
        b.swap(col, piv);
        let p = a[col][col];
        if p.to_f64() == 0.0 {
            return None;
        }
        for row in col + 1..n {
            let f = a[row][col] / p;
            for k in col..n {
                let t = a[col][k];
                a[row][k] = a[row][k] - f * t;
            }
            let t = b[col];
            b[row] = b[row] - f * t;
        }
    }
    for row in (0..n).rev() {
        let mut acc = b[row];
        for j in row + 1..n {
            acc = acc - a[row][j] * b[j];
        }
        b[row] = acc / a[row][row];
    }
    Some(b)
}
