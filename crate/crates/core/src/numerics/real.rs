use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Scalar type of the tensor engine: `f32` for training, `f64` for
/// gradient verification.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Send + Sync + 'static
{
    /// `c = alpha * a * b + beta * c` on strided row/column layouts.
    ///
    /// `a` is `m x k`, `b` is `k x n`, `c` is `m x n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
        c_strides: (isize, isize),
    );

    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("real is representable as f64")
    }
}

fn extent(rows: usize, cols: usize, (rs, cs): (isize, isize)) -> usize {
    if rows == 0 || cols == 0 {
        return 0;
    }
    (rows - 1) * rs as usize + (cols - 1) * cs as usize + 1
}

fn check_gemm_bounds(
    m: usize,
    k: usize,
    n: usize,
    a: (usize, (isize, isize)),
    b: (usize, (isize, isize)),
    c: (usize, (isize, isize)),
) {
    for (_, (rs, cs)) in [a, b, c] {
        assert!(rs >= 0 && cs >= 0, "negative gemm stride");
    }
    assert!(extent(m, k, a.1) <= a.0, "gemm: lhs slice too short");
    assert!(extent(k, n, b.1) <= b.0, "gemm: rhs slice too short");
    assert!(extent(m, n, c.1) <= c.0, "gemm: output slice too short");
}
/// Narrow products, where packing for the blocked kernel costs more than
/// the arithmetic, use plain row loops instead. Returns false if the
/// layout is not handled here.
#[allow(clippy::too_many_arguments)]
fn narrow_gemm<T: Float>(
    m: usize,
    k: usize,
    n: usize,
    alpha: T,
    a: &[T],
    (ars, acs): (isize, isize),
    b: &[T],
    (brs, bcs): (isize, isize),
    beta: T,
    c: &mut [T],
    (crs, ccs): (isize, isize),
) -> bool {
    const NARROW: usize = 32;
    let (ars, acs, brs, bcs, crs) = (ars as usize, acs as usize, brs as usize, bcs as usize, crs as usize);
    if ccs != 1 {
        return false;
    }
    let scale_row = |row: &mut [T]| {
        if beta == T::zero() {
            row.fill(T::zero());
        } else if beta != T::one() {
            row.iter_mut().for_each(|v| *v = *v * beta);
        }
    };
    if bcs == 1 && (m <= NARROW || k <= NARROW) {
        // Row i of c accumulates a[i, p] times row p of b.
        for i in 0..m {
            let row = &mut c[i * crs..i * crs + n];
            scale_row(row);
            for p in 0..k {
                let w = alpha * a[i * ars + p * acs];
                let src = &b[p * brs..p * brs + n];
                for (dst, &x) in row.iter_mut().zip(src) {
                    *dst = *dst + w * x;
                }
            }
        }
        return true;
    }
    if acs == 1 && brs == 1 && m <= NARROW {
        // c[i, j] is the dot product of row i of a and column j of b.
        for i in 0..m {
            let lhs = &a[i * ars..i * ars + k];
            for j in 0..n {
                let rhs = &b[j * bcs..j * bcs + k];
                let mut lanes = [T::zero(); 8];
                let (lc, rc) = (lhs.chunks_exact(8), rhs.chunks_exact(8));
                let (lt, rt) = (lc.remainder(), rc.remainder());
                for (l, r) in lc.zip(rc) {
                    for q in 0..8 {
                        lanes[q] = lanes[q] + l[q] * r[q];
                    }
                }
                let mut acc = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
                for (&l, &r) in lt.iter().zip(rt) {
                    acc = acc + l * r;
                }
                let dst = &mut c[i * crs + j];
                *dst = alpha * acc + if beta == T::zero() { T::zero() } else { beta * *dst };
            }
        }
        return true;
    }
    false
}

macro_rules! impl_real {
    ($t:ty, $gemm:path) => {
        impl Real for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                a_strides: (isize, isize),
                b: &[Self],
                b_strides: (isize, isize),
                beta: Self,
                c: &mut [Self],
                c_strides: (isize, isize),
            ) {
                check_gemm_bounds(
                    m,
                    k,
                    n,
                    (a.len(), a_strides),
                    (b.len(), b_strides),
                    (c.len(), c_strides),
                );
                if m == 0 || n == 0 {
                    return;
                }
                if narrow_gemm(m, k, n, alpha, a, a_strides, b, b_strides, beta, c, c_strides) {
                    return;
                }
                // SAFETY: every element addressed by the strides lies inside
                // the slices (checked above) and `c` does not alias `a`/`b`.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        a_strides.0,
                        a_strides.1,
                        b.as_ptr(),
                        b_strides.0,
                        b_strides.1,
                        beta,
                        c.as_mut_ptr(),
                        c_strides.0,
                        c_strides.1,
                    );
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);
