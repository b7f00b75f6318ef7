//! Dense matrix exponential by scaling-and-squaring with a [13/13] Padé
//! approximant. Used for small generators and as the oracle the Krylov
//! integrator is cross-checked against.

use nalgebra::DMatrix;

use crate::scalar::{creal, Scalar, C};

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn inf_norm<T: Scalar>(m: &DMatrix<C<T>>) -> T {
    let mut best = T::zero();
    for r in 0..m.nrows() {
        let mut s = T::zero();
        for c in 0..m.ncols() {
            s += m[(r, c)].norm();
        }
        best = nalgebra::RealField::max(best, s);
    }
    best
}

/// e^A for a square complex matrix.
pub fn expm<T: Scalar>(a: &DMatrix<C<T>>) -> DMatrix<C<T>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm requires a square matrix");
    // Scale so the Padé approximant is accurate (theta_13 ≈ 5.37 for f64;
    // a conservative 2.0 keeps f32 usable too).
    let norm = inf_norm(a);
    let mut squarings = 0u32;
    let mut scale = T::one();
    if norm > T::lit(2.0) {
        let ratio = num_traits::ToPrimitive::to_f64(&(norm / T::lit(2.0))).unwrap_or(1.0);
        squarings = ratio.log2().ceil().max(0.0) as u32;
        scale = T::lit(0.5f64.powi(squarings as i32));
    }
    let a = a.map(|c| c * C::new(scale, T::zero()));

    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let id: DMatrix<C<T>> = DMatrix::identity(n, n);
    let b: Vec<C<T>> = PADE13.iter().map(|&c| creal(c)).collect();

    let w1 = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let w2 = &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1];
    let u = &a * (w1 + w2);
    let z1 = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = z1 + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];

    let lhs = &v - &u;
    let rhs = &v + &u;
    let mut r = lhs
        .lu()
        .solve(&rhs)
        .expect("Padé denominator must be invertible");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn expm_of_zero_is_identity() {
        let z = DMatrix::<C<f64>>::zeros(4, 4);
        let e = expm(&z);
        assert_relative_eq!((e - DMatrix::identity(4, 4)).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn expm_diagonal() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            C::new(-1.0, 0.0),
            C::new(0.5, 2.0),
        ]));
        let e = expm(&d);
        assert_relative_eq!(e[(0, 0)].re, (-1.0f64).exp(), epsilon = 1e-12);
        let ref11 = C::new(0.5, 2.0).exp();
        assert!((e[(1, 1)] - ref11).norm() < 1e-12);
        assert!(e[(0, 1)].norm() < 1e-14);
    }

    #[test]
    fn expm_matches_taylor_for_small_matrix() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let a = DMatrix::<C<f64>>::from_fn(6, 6, |_, _| {
            C::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        // Taylor oracle with enough terms for ||A|| < 3.
        let mut term = DMatrix::<C<f64>>::identity(6, 6);
        let mut sum = term.clone();
        for k in 1..60 {
            term = (&term * &a) / C::new(k as f64, 0.0);
            sum += &term;
        }
        let e = expm(&a);
        assert_relative_eq!((e - sum).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn expm_semigroup_property() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let a = DMatrix::<C<f64>>::from_fn(5, 5, |_, _| {
            C::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let half = a.map(|c| c * C::new(0.5, 0.0));
        let e1 = expm(&a);
        let eh = expm(&half);
        assert_relative_eq!((&eh * &eh - e1).norm(), 0.0, epsilon = 1e-10);
    }
}
