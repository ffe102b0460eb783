//! Small dense linear algebra: square matrices, the matrix exponential and
//! a closed-form 2×2 complex exponential.

use num_complex::Complex;

use crate::Real;

/// Row-major dense square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> SquareMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == T::zero() {
                    continue;
                }
                let row = &rhs.data[k * n..(k + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, &b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    fn add_assign(&mut self, rhs: &Self) {
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> T {
        let n = self.n;
        (0..n)
            .map(|j| (0..n).map(|i| self.data[i * n + j].abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    /// `e^{A}` by scaling and squaring with a Taylor kernel on `‖A/2^s‖₁ ≤ ½`.
    pub fn expm(&self) -> Self {
        let norm = self.norm1();
        let half = T::lit(0.5);
        let mut squarings = 0u32;
        let mut scale = T::one();
        while norm * scale > half {
            scale = scale * half;
            squarings += 1;
        }
        let a = self.scaled(scale);
        let mut sum = Self::identity(self.n);
        let mut term = Self::identity(self.n);
        for k in 1..60usize {
            term = term.mul(&a).scaled(T::one() / T::from_usize_lossy(k));
            sum.add_assign(&term);
            if term.norm1() <= T::epsilon() * T::lit(1e-3) * sum.norm1() {
                break;
            }
        }
        for _ in 0..squarings {
            sum = sum.mul(&sum);
        }
        sum
    }
}

impl<T> std::ops::Index<(usize, usize)> for SquareMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for SquareMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

/// 2×2 matrix as `[[a, b], [c, d]]` (rows).
pub type Mat2<T> = [[T; 2]; 2];

/// `e^{A}` for a complex 2×2 matrix via
/// `e^{μ} [cosh δ · I + sinh δ / δ · (A − μI)]`, `μ = tr A / 2`,
/// `δ² = ((a − d)/2)² + bc`.
pub fn expm2_complex<T: Real>(a: Mat2<Complex<T>>) -> Mat2<Complex<T>> {
    let half = T::lit(0.5);
    let mu = (a[0][0] + a[1][1]) * half;
    let h = (a[0][0] - a[1][1]) * half;
    let delta2 = h * h + a[0][1] * a[1][0];
    let delta = delta2.sqrt();
    let (ch, sh_over) = if delta.norm() < T::lit(1e-4) {
        // series: cosh δ = 1 + δ²/2 + δ⁴/24, sinh δ/δ = 1 + δ²/6 + δ⁴/120
        let d4 = delta2 * delta2;
        (
            Complex::new(T::one(), T::zero()) + delta2 * half + d4 / T::lit(24.0),
            Complex::new(T::one(), T::zero()) + delta2 / T::lit(6.0) + d4 / T::lit(120.0),
        )
    } else {
        (delta.cosh(), delta.sinh() / delta)
    };
    let e = mu.exp();
    [
        [e * (ch + sh_over * h), e * sh_over * a[0][1]],
        [e * sh_over * a[1][0], e * (ch - sh_over * h)],
    ]
}
