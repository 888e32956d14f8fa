//! Globally adaptive Gauss–Kronrod (7, 15) quadrature for vector-valued
//! integrands.

use std::collections::BinaryHeap;
use std::ops::{Add, Sub};

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
    0.209_482_141_084_728_8,
];
// Gauss weights for the odd-indexed Kronrod nodes, centre last
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

pub(crate) trait Integrand: Copy + Add<Output = Self> + Sub<Output = Self> {
    fn zero() -> Self;
    fn scale(self, k: f64) -> Self;
    fn size(&self) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Integral<T> {
    pub value: T,
    pub error: f64,
    pub evaluations: usize,
}

struct Piece<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

impl<T> PartialEq for Piece<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T> Eq for Piece<T> {}
impl<T> PartialOrd for Piece<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Piece<T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<T: Integrand, F: Fn(f64) -> T>(f: &F, a: f64, b: f64) -> (T, f64) {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut kronrod = fc.scale(WGK[7]);
    let mut gauss = fc.scale(WG[3]);
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(centre - dx) + f(centre + dx);
        kronrod = kronrod + pair.scale(WGK[j]);
        if j % 2 == 1 {
            gauss = gauss + pair.scale(WG[j / 2]);
        }
    }
    let value = kronrod.scale(half);
    let error = (kronrod - gauss).scale(half).size();
    (value, error)
}

/// Integrates `f` over consecutive intervals between `breakpoints`, bisecting
/// the piece with the largest error estimate until the summed estimate drops
/// below `abs_tol` or `max_pieces` is reached.
pub(crate) fn integrate<T: Integrand, F: Fn(f64) -> T>(
    f: F,
    breakpoints: &[f64],
    abs_tol: f64,
    max_pieces: usize,
) -> Integral<T> {
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    for w in breakpoints.windows(2) {
        let (value, error) = gk15(&f, w[0], w[1]);
        evaluations += 15;
        heap.push(Piece { a: w[0], b: w[1], value, error });
    }
    loop {
        let total: f64 = heap.iter().map(|p| p.error).sum();
        if total <= abs_tol || heap.len() >= max_pieces {
            break;
        }
        let worst = heap.pop().expect("nonempty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            break;
        }
        for (a, b) in [(worst.a, mid), (mid, worst.b)] {
            let (value, error) = gk15(&f, a, b);
            evaluations += 15;
            heap.push(Piece { a, b, value, error });
        }
    }
    let mut pieces = heap.into_vec();
    pieces.sort_by(|x, y| x.a.total_cmp(&y.a));
    let value = pieces.iter().fold(T::zero(), |acc, p| acc + p.value);
    let error = pieces.iter().map(|p| p.error).sum();
    Integral { value, error, evaluations }
}

impl Integrand for f64 {
    fn zero() -> Self {
        0.0
    }
    fn scale(self, k: f64) -> Self {
        self * k
    }
    fn size(&self) -> f64 {
        self.abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lorentzian() {
        let g = 0.03;
        let r = integrate(|w: f64| g / (g * g + w * w), &[-30.0, -1.0, 0.0, 1.0, 30.0], 1e-13, 2000);
        let exact = 2.0 * (30.0f64 / g).atan();
        assert!((r.value - exact).abs() < 1e-12, "{} vs {exact}", r.value);
    }

    #[test]
    fn polynomial_is_exact_on_one_piece() {
        let r = integrate(|x: f64| x.powi(6) - 2.0 * x, &[0.0, 2.0], 0.0, 1);
        assert!((r.value - (128.0 / 7.0 - 4.0)).abs() < 1e-13);
    }
}
