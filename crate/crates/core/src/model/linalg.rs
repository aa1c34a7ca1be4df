//! Dense vector helpers over row-major `d x d` matrices.

use super::Real;

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

/// `y += a * x`
#[inline]
pub fn axpy<T: Real>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `out += W x`
pub fn matvec_acc<T: Real>(w: &[T], x: &[T], out: &mut [T]) {
    let d = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o += dot(&w[i * d..(i + 1) * d], x);
    }
}

/// `out += W^T g`
pub fn matvec_t_acc<T: Real>(w: &[T], g: &[T], out: &mut [T]) {
    let d = out.len();
    for (i, &gi) in g.iter().enumerate() {
        if gi != T::zero() {
            axpy(gi, &w[i * d..(i + 1) * d], out);
        }
    }
}

/// `G += a b^T`
pub fn outer_acc<T: Real>(a: &[T], b: &[T], g: &mut [T]) {
    let d = b.len();
    for (i, &ai) in a.iter().enumerate() {
        if ai != T::zero() {
            axpy(ai, b, &mut g[i * d..(i + 1) * d]);
        }
    }
}

pub fn add_into<T: Real>(x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += xi;
    }
}

pub fn scaled<T: Real>(a: T, x: &[T]) -> Vec<T> {
    x.iter().map(|&v| a * v).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_products() {
        let w = [1.0, 2.0, 3.0, 4.0];
        let mut out = [0.0; 2];
        matvec_acc(&w, &[1.0, 1.0], &mut out);
        assert_eq!(out, [3.0, 7.0]);
        let mut out = [0.0; 2];
        matvec_t_acc(&w, &[1.0, 1.0], &mut out);
        assert_eq!(out, [4.0, 6.0]);
        let mut g = [0.0; 4];
        outer_acc(&[1.0, 2.0], &[3.0, 4.0], &mut g);
        assert_eq!(g, [3.0, 4.0, 6.0, 8.0]);
        assert_eq!(dot(&[1.0f64, 2.0], &[3.0, 4.0]), 11.0);
    }
}
